//! Opaque selling for perishable inventory.
//!
//! An `(n, p)` opaque scheme lets each customer of `n` interchangeable
//! products switch, with probability `p`, to an opaque product whose variant
//! the seller picks afterwards. Allocating the opaque orders to the products
//! whose demand lags furthest behind its mean (BPD) pools demand risk. This
//! crate provides:
//!
//! - [`dist`]: Poisson, binomial and normal kernels plus reproducible streams,
//! - [`opaque`]: the demand pipeline, the BPD allocator and estimators,
//! - [`analytics`]: relative variance, pooled shortage/wastage bounds and the
//!   threshold search,
//! - [`inventory`]: a FIFO lost-sales base-stock simulator with shelflife,
//! - [`experiments`]: parallel, deterministic scenario sweeps and presets.
//!
//! Kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! name the `f64` instantiations used by the sweep layer.

// `!(x > 0)` style checks are used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod inventory;
pub mod opaque;
pub mod scalar;
mod special;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DemandProfile = opaque::DemandProfile<f64>;
pub type DemandProfile32 = opaque::DemandProfile<f32>;
pub type PeriodDemands = opaque::PeriodDemands<f64>;
pub type DemandStats = opaque::DemandStats<f64>;
pub type SchemeParams = analytics::SchemeParams<f64>;
pub type CostParams = analytics::CostParams<f64>;
pub type CostParams32 = analytics::CostParams<f32>;
pub type CostBounds = analytics::CostBounds<f64>;
pub type InventoryState = inventory::InventoryState<f64>;
pub type InventoryState32 = inventory::InventoryState<f32>;
pub type PeriodOutcome = inventory::PeriodOutcome<f64>;
pub type SimMetrics = inventory::SimMetrics<f64>;

pub use dist::RandomStream;
pub use experiments::{ResultRow, ScenarioGrid, Table2Row};
