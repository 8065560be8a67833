//! Closed-form results for the opaque scheme under scaled Poisson demand.
//!
//! Relative variance places the pooled per-product variance between the
//! no-pooling ceiling `σ²` and the full-pooling floor `σ²/n`. The cost
//! functions cover the full-pooling scheme (`p = 1`), whose adjusted demand
//! is again scaled Poisson with rate `nλ`.

use crate::dist::{std_normal_cdf, std_normal_pdf, PoissonParams};
use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// Default per-marginal tail mass dropped by [`sigma_rel_exact`].
pub const DEFAULT_MASS_TOLERANCE: f64 = 1e-12;

/// Default search cap for [`threshold_variance`].
pub const DEFAULT_N_MAX: usize = 64;

/// Default cost tolerance `δ` for [`threshold_variance`].
pub const DEFAULT_DELTA: f64 = 0.01;

/// Homogeneous scheme parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeParams<T> {
    pub n: usize,
    pub p: T,
    pub lambda: T,
    pub mu: T,
}

impl<T: Scalar> SchemeParams<T> {
    pub fn new(n: usize, p: T, lambda: T, mu: T) -> Result<Self> {
        if n == 0 {
            return domain("n must be at least 1");
        }
        if !(p >= T::zero() && p <= T::one()) {
            return domain(format!("p = {p} outside [0, 1]"));
        }
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return domain(format!("lambda = {lambda} must be positive"));
        }
        if !(mu > T::zero()) || !mu.is_finite() {
            return domain(format!("mu = {mu} must be positive"));
        }
        Ok(Self { n, p, lambda, mu })
    }

    /// z-score `p·√(2λ)` at which the pairwise gap changes sign.
    pub fn alpha(&self) -> T {
        self.p * (T::lit(2.0) * self.lambda).sqrt()
    }

    pub fn cv(&self) -> T {
        T::one() / self.lambda.sqrt()
    }

    /// Original per-product variance `μ²/λ`.
    pub fn sigma2(&self) -> T {
        self.mu * self.mu / self.lambda
    }
}

/// Shortage/wastage economics of one product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams<T> {
    /// Per-unit shortage cost.
    pub r: T,
    /// Per-unit wastage cost.
    pub theta: T,
    /// Shelflife in periods.
    pub m: u32,
    /// Base-stock level.
    pub q: T,
}

impl<T: Scalar> CostParams<T> {
    pub fn new(r: T, theta: T, m: u32, q: T) -> Result<Self> {
        let ok = |x: T| x >= T::zero() && x.is_finite();
        if !ok(r) || !ok(theta) || !ok(q) {
            return domain(format!(
                "costs and base stock must be >= 0 (r={r}, theta={theta}, q={q})"
            ));
        }
        if m == 0 {
            return domain("shelflife m must be at least 1");
        }
        Ok(Self { r, theta, m, q })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostBounds<T> {
    pub expected_shortage: T,
    pub wastage_lb: T,
    pub wastage_ub: T,
    pub cost_lb: T,
    pub cost_ub: T,
    /// `⌊nλq/μ⌋`
    pub s_threshold: i64,
}

fn check_n(n: usize, min: usize) -> Result<()> {
    if n < min {
        return domain(format!("n = {n} must be at least {min}"));
    }
    Ok(())
}

fn check_unit<T: Scalar>(name: &str, x: T) -> Result<()> {
    if !(x >= T::zero() && x <= T::one()) {
        return domain(format!("{name} = {x} outside [0, 1]"));
    }
    Ok(())
}

/// `σ²_{n,p} = (1 + (n−1)·σ_rel²)/n · σ²`.
pub fn sigma_np_from_rel<T: Scalar>(n: usize, sigma2: T, sigma_rel2: T) -> Result<T> {
    check_n(n, 1)?;
    check_unit("relative variance", sigma_rel2)?;
    if !(sigma2 >= T::zero()) {
        return domain(format!("variance {sigma2} must be >= 0"));
    }
    let nn = T::from_count(n as u64);
    Ok((T::one() + (nn - T::one()) * sigma_rel2) / nn * sigma2)
}

/// `σ_rel² = (σ²_{n,p} − σ²/n)/(σ² − σ²/n)`.
///
/// Not clamped: sample estimates may fall slightly outside `[0, 1]`.
pub fn rel_from_sigma_np<T: Scalar>(n: usize, sigma2: T, sigma_np: T) -> Result<T> {
    check_n(n, 2)?;
    if !(sigma2 > T::zero()) {
        return domain(format!("variance {sigma2} must be positive"));
    }
    let floor = sigma2 / T::from_count(n as u64);
    Ok((sigma_np - floor) / (sigma2 - floor))
}

/// Mean pairwise correlation of adjusted demands from relative variance.
pub fn rho_from_rel<T: Scalar>(n: usize, sigma_rel2: T) -> Result<T> {
    check_n(n, 2)?;
    check_unit("relative variance", sigma_rel2)?;
    Ok(involution(n, sigma_rel2))
}

/// Relative variance from the mean pairwise correlation. The map is its own
/// inverse, so this is [`rho_from_rel`] with the roles swapped.
pub fn rel_from_rho<T: Scalar>(n: usize, rho: T) -> Result<T> {
    check_n(n, 2)?;
    check_unit("correlation", rho)?;
    Ok(involution(n, rho))
}

fn involution<T: Scalar>(n: usize, x: T) -> T {
    let k = T::from_count(n as u64 - 1);
    (T::one() - x) / (T::one() + k * x)
}

/// Normal approximation `2(1+α²)Φ(−α) − 2αφ(α)` of the relative variance.
pub fn sigma_rel_approx<T: Scalar>(params: &SchemeParams<T>) -> T {
    rel_approx_at(params.alpha())
}

/// [`sigma_rel_approx`] as a function of `α` alone.
pub fn rel_approx_at<T: Scalar>(alpha: T) -> T {
    let two = T::lit(2.0);
    let v = two * (T::one() + alpha * alpha) * std_normal_cdf(-alpha)
        - two * alpha * std_normal_pdf(alpha);
    v.max(T::zero())
}

/// Smallest `k` with `F(k) ≥ 1 − tol`.
fn support_limit<T: Scalar>(dist: &PoissonParams<T>, tol: T) -> usize {
    if dist.gamma() == T::zero() {
        return 0;
    }
    let mut k = dist.gamma().as_f64().floor() as i64;
    while dist.sf(k) > tol {
        k += 1;
    }
    k as usize
}

/// Exact relative variance for two products.
///
/// With kept counts `K_1, K_2 ~ Poisson((1−p)λ)` and switched count
/// `K_0 ~ Poisson(2pλ)`, the pairwise gap `T = (μ/λ)(K_1 − K_2 − K_0)`
/// gives `σ_rel² = 2·E[T²; T > 0]/σ_T²` with `σ_T² = 2μ²/λ`. Each marginal
/// is cut where its remaining mass falls below `mass_tolerance`.
pub fn sigma_rel_exact<T: Scalar>(params: &SchemeParams<T>, mass_tolerance: T) -> Result<T> {
    if !(mass_tolerance > T::zero() && mass_tolerance < T::one()) {
        return domain(format!(
            "mass tolerance {mass_tolerance} must lie in (0, 1)"
        ));
    }
    let keep = PoissonParams::new((T::one() - params.p) * params.lambda)?;
    let switched = PoissonParams::new(T::lit(2.0) * params.p * params.lambda)?;
    let keep_max = support_limit(&keep, mass_tolerance);
    let switched_max = support_limit(&switched, mass_tolerance);
    let keep_pmf: Vec<T> = (0..=keep_max as u64).map(|k| keep.pmf(k)).collect();
    let switched_pmf: Vec<T> = (0..=switched_max as u64).map(|k| switched.pmf(k)).collect();

    let scale = params.mu / params.lambda;
    let mut total = T::zero();
    for (k1, &p1) in keep_pmf.iter().enumerate() {
        let mut row = T::zero();
        for (k2, &p2) in keep_pmf.iter().enumerate().take(k1) {
            let mut inner = T::zero();
            for (k0, &p0) in switched_pmf.iter().enumerate().take(k1 - k2) {
                let gap = T::from_count((k1 - k2 - k0) as u64);
                inner = inner + gap * gap * p0;
            }
            row = row + inner * p2;
        }
        total = total + row * p1;
    }
    let sigma_t2 = T::lit(2.0) * params.mu * params.mu / params.lambda;
    Ok(T::lit(2.0) * total * scale * scale / sigma_t2)
}

fn check_pooled<T: Scalar>(n: usize, lambda: T, mu: T, q: T) -> Result<()> {
    check_n(n, 1)?;
    if !(lambda > T::zero()) || !(mu > T::zero()) {
        return domain(format!("lambda ({lambda}) and mu ({mu}) must be positive"));
    }
    if !(q >= T::zero()) || !q.is_finite() {
        return domain(format!("base stock q = {q} must be finite and >= 0"));
    }
    Ok(())
}

/// `s = ⌊nλq/μ⌋`
pub fn s_threshold<T: Scalar>(n: usize, lambda: T, mu: T, q: T) -> i64 {
    let x = T::from_count(n as u64) * lambda * q / mu;
    x.floor().as_f64() as i64
}

/// Expected per-period shortage `E[D_1 − q]^+` under full pooling, where
/// `D_1 = (μ/(nλ))·Y_{nλ}`.
pub fn expected_shortage<T: Scalar>(n: usize, lambda: T, mu: T, q: T) -> Result<T> {
    check_pooled(n, lambda, mu, q)?;
    let s = s_threshold(n, lambda, mu, q);
    let y = PoissonParams::new(T::from_count(n as u64) * lambda)?;
    let v = (mu - q) * y.sf(s) + mu * y.pmf(s as u64);
    Ok(v.max(T::zero()))
}

/// Wastage bounds `(E[q/m − D̄_1]^+, m·E[q/m − D̄_1]^+)` where `D̄_1` is the
/// `m`-period mean of pooled demand, `(μ/(nmλ))·Y_{nmλ}`.
pub fn wastage_bounds<T: Scalar>(n: usize, lambda: T, mu: T, q: T, m: u32) -> Result<(T, T)> {
    check_pooled(n, lambda, mu, q)?;
    if m == 0 {
        return domain("shelflife m must be at least 1");
    }
    let mm = T::from_count(m as u64);
    let s = s_threshold(n, lambda, mu, q);
    let y = PoissonParams::new(T::from_count(n as u64) * mm * lambda)?;
    let lb = ((q / mm - mu) * y.cdf(s) + mu * y.pmf(s as u64)).max(T::zero());
    Ok((lb, mm * lb))
}

/// `C̄_LB = r·E[S] + θ·E[q/m − D̄_1]^+` together with `m·C̄_LB`.
pub fn cost_bounds<T: Scalar>(
    n: usize,
    lambda: T,
    mu: T,
    cost: &CostParams<T>,
) -> Result<CostBounds<T>> {
    let expected_shortage = expected_shortage(n, lambda, mu, cost.q)?;
    let (wastage_lb, wastage_ub) = wastage_bounds(n, lambda, mu, cost.q, cost.m)?;
    let cost_lb = cost.r * expected_shortage + cost.theta * wastage_lb;
    Ok(CostBounds {
        expected_shortage,
        wastage_lb,
        wastage_ub,
        cost_lb,
        cost_ub: T::from_count(cost.m as u64) * cost_lb,
        s_threshold: s_threshold(n, lambda, mu, cost.q),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threshold<T> {
    /// Largest pooled variance `μ²/(nλ)` meeting the cost tolerance.
    pub sigma2: T,
    /// Pool size at which it is attained.
    pub n: usize,
}

/// `C̄_LB` for `n = 1..=n_max`.
pub fn cost_lb_by_n<T: Scalar>(
    lambda: T,
    mu: T,
    cost: &CostParams<T>,
    n_max: usize,
) -> Result<Vec<(usize, T)>> {
    (1..=n_max)
        .map(|n| Ok((n, cost_bounds(n, lambda, mu, cost)?.cost_lb)))
        .collect()
}

/// Smallest pool `n ∈ [2, n_max]` whose cost lower bound is at most `delta`,
/// with its variance `μ²/(nλ)`. `None` when no such `n` exists.
pub fn threshold_variance<T: Scalar>(
    lambda: T,
    mu: T,
    cost: &CostParams<T>,
    delta: T,
    n_max: usize,
) -> Result<Option<Threshold<T>>> {
    if !(delta > T::zero()) {
        return domain(format!("delta = {delta} must be positive"));
    }
    check_n(n_max, 2)?;
    for n in 2..=n_max {
        if cost_bounds(n, lambda, mu, cost)?.cost_lb <= delta {
            return Ok(Some(Threshold {
                sigma2: mu * mu / (T::from_count(n as u64) * lambda),
                n,
            }));
        }
    }
    Ok(None)
}
