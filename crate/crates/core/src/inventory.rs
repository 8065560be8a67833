//! Periodic-review perishable inventory under a base-stock policy.
//!
//! Zero lead time, FIFO issuance, lost sales. Each period: order up to `q`
//! (all arrivals are fresh), serve demand oldest-first, then discard whatever
//! has reached the end of its shelflife and age the rest by one period.

use crate::analytics::CostParams;
use crate::dist::RandomStream;
use crate::error::{domain, Result};
use crate::opaque::{DemandAccumulator, DemandProfile, DemandStats, OpaqueDemand, PeriodDemands};
use crate::scalar::Scalar;

/// On-hand stock of one product by age; `buckets[a]` has been on the shelf
/// for `a` periods.
#[derive(Clone, Debug, PartialEq)]
pub struct InventoryState<T> {
    buckets: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodOutcome<T> {
    pub shortage: T,
    pub wastage: T,
    pub order_quantity: T,
    pub served: T,
    pub cost: T,
}

impl<T: Scalar> InventoryState<T> {
    /// Empty shelf for shelflife `m`.
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 {
            return domain("shelflife m must be at least 1");
        }
        Ok(Self {
            buckets: vec![T::zero(); m as usize],
        })
    }

    pub fn buckets(&self) -> &[T] {
        &self.buckets
    }

    pub fn on_hand(&self) -> T {
        self.buckets.iter().copied().sum()
    }

    pub fn step(&mut self, demand: T, cost: &CostParams<T>) -> PeriodOutcome<T> {
        debug_assert!(demand >= T::zero());
        let order_quantity = (cost.q - self.on_hand()).max(T::zero());
        self.buckets[0] = self.buckets[0] + order_quantity;

        let mut remaining = demand;
        for b in self.buckets.iter_mut().rev() {
            let take = remaining.min(*b);
            *b = *b - take;
            remaining = remaining - take;
        }
        let shortage = remaining;

        let wastage = *self.buckets.last().expect("m >= 1");
        self.buckets.rotate_right(1);
        self.buckets[0] = T::zero();

        PeriodOutcome {
            shortage,
            wastage,
            order_quantity,
            served: demand - shortage,
            cost: cost.r * shortage + cost.theta * wastage,
        }
    }
}

/// Burn-in used when none is given: `max(100, 5m)` periods.
pub fn default_burn_in(m: u32) -> usize {
    100.max(5 * m as usize)
}

/// Per-period, per-product averages over the post-burn-in window.
#[derive(Clone, Debug, PartialEq)]
pub struct SimMetrics<T> {
    pub mean_shortage: T,
    pub mean_wastage: T,
    pub mean_cost: T,
    /// `sd(c_t)/√N` over product-averaged period costs `c_t`.
    pub std_error_cost: T,
    pub periods_used: usize,
    pub burn_in_discarded: usize,
}

/// Metrics plus demand statistics from the same run.
#[derive(Clone, Debug, PartialEq)]
pub struct Replication<T> {
    pub metrics: SimMetrics<T>,
    pub demand: DemandStats<T>,
}

/// Anything that yields one period of demands at a time.
pub trait DemandSource<T> {
    fn n(&self) -> usize;
    fn next_period(&mut self) -> Result<PeriodDemands<T>>;
}

impl<T: Scalar> DemandSource<T> for OpaqueDemand<T> {
    fn n(&self) -> usize {
        self.profile().n()
    }

    fn next_period(&mut self) -> Result<PeriodDemands<T>> {
        OpaqueDemand::next_period(self)
    }
}

/// Deterministic demand equal to a fixed vector every period.
#[derive(Clone, Debug)]
pub struct ConstantDemand<T> {
    level: Vec<T>,
}

impl<T: Scalar> ConstantDemand<T> {
    pub fn new(level: Vec<T>) -> Self {
        Self { level }
    }
}

impl<T: Scalar> DemandSource<T> for ConstantDemand<T> {
    fn n(&self) -> usize {
        self.level.len()
    }

    fn next_period(&mut self) -> Result<PeriodDemands<T>> {
        Ok(PeriodDemands {
            original: self.level.clone(),
            intermediate: self.level.clone(),
            opaque: T::zero(),
            adjusted: self.level.clone(),
        })
    }
}

/// Feeds each product's adjusted demand into its own inventory and
/// accumulates costs after `burn_in` periods.
pub fn simulate<T: Scalar, D: DemandSource<T>>(
    source: &mut D,
    profile: &DemandProfile<T>,
    cost: &CostParams<T>,
    periods: usize,
    burn_in: usize,
) -> Result<Replication<T>> {
    if periods <= burn_in {
        return domain(format!(
            "periods ({periods}) must exceed burn-in ({burn_in})"
        ));
    }
    let n = source.n();
    if n != profile.n() {
        return domain(format!(
            "source has {n} products, profile has {}",
            profile.n()
        ));
    }
    let nn = T::from_count(n as u64);
    let mut shelves = (0..n)
        .map(|_| InventoryState::new(cost.m))
        .collect::<Result<Vec<_>>>()?;
    let mut demand_acc = DemandAccumulator::new(profile);

    let mut shortage_sum = T::zero();
    let mut wastage_sum = T::zero();
    let mut cost_sum = T::zero();
    let mut cost_sq_sum = T::zero();

    for t in 0..periods {
        let demands = source.next_period()?;
        let mut period_shortage = T::zero();
        let mut period_wastage = T::zero();
        let mut period_cost = T::zero();
        for (shelf, &d) in shelves.iter_mut().zip(&demands.adjusted) {
            let out = shelf.step(d, cost);
            period_shortage = period_shortage + out.shortage;
            period_wastage = period_wastage + out.wastage;
            period_cost = period_cost + out.cost;
        }
        if t < burn_in {
            continue;
        }
        demand_acc.push(&demands.adjusted);
        let c = period_cost / nn;
        shortage_sum = shortage_sum + period_shortage / nn;
        wastage_sum = wastage_sum + period_wastage / nn;
        cost_sum = cost_sum + c;
        cost_sq_sum = cost_sq_sum + c * c;
    }

    let used = periods - burn_in;
    let k = T::from_count(used as u64);
    let mean_cost = cost_sum / k;
    let std_error_cost = if used >= 2 {
        let var = ((cost_sq_sum - k * mean_cost * mean_cost) / (k - T::one())).max(T::zero());
        (var / k).sqrt()
    } else {
        T::zero()
    };
    let metrics = SimMetrics {
        mean_shortage: shortage_sum / k,
        mean_wastage: wastage_sum / k,
        mean_cost,
        std_error_cost,
        periods_used: used,
        burn_in_discarded: burn_in,
    };
    let demand = demand_acc.finish(profile.base_variance())?;
    Ok(Replication { metrics, demand })
}

/// One replication of the opaque scheme feeding `n` independent shelves.
pub fn run_replication_with_stats<T: Scalar>(
    profile: &DemandProfile<T>,
    cost: &CostParams<T>,
    stream: &RandomStream,
    periods: usize,
    burn_in: usize,
) -> Result<Replication<T>> {
    let mut source = OpaqueDemand::new(profile.clone(), stream);
    simulate(&mut source, profile, cost, periods, burn_in)
}

pub fn run_replication<T: Scalar>(
    profile: &DemandProfile<T>,
    cost: &CostParams<T>,
    stream: &RandomStream,
    periods: usize,
    burn_in: usize,
) -> Result<SimMetrics<T>> {
    Ok(run_replication_with_stats(profile, cost, stream, periods, burn_in)?.metrics)
}
