//! Opaque-scheme demand pipeline.
//!
//! Each period draws base Poisson counts per product (original demand),
//! thins every count binomially into kept orders and orders that switch to
//! the opaque product (intermediate demand), then hands the opaque volume to
//! the products with the smallest deficits (adjusted demand, BPD).

use std::cmp::Ordering;

use crate::analytics;
use crate::dist::{sample_binomial, sample_poisson, RandomStream};
use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

/// `(n, p, λ, μ)` parameterization of the opaque scheme.
///
/// Product `i` has original demand `(μ^i/λ)·Y` with `Y ~ Poisson(λ)`, so its
/// mean is `μ^i` and its coefficient of variation is `1/√λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandProfile<T> {
    p: Vec<T>,
    lambda: T,
    mu: Vec<T>,
}

impl<T: Scalar> DemandProfile<T> {
    pub fn new(p: Vec<T>, lambda: T, mu: Vec<T>) -> Result<Self> {
        if p.is_empty() {
            return domain("profile needs at least one product");
        }
        if p.len() != mu.len() {
            return domain(format!(
                "switch probabilities ({}) and means ({}) differ in length",
                p.len(),
                mu.len()
            ));
        }
        if let Some(bad) = p.iter().find(|&&x| !(x >= T::zero() && x <= T::one())) {
            return domain(format!("switch probability {bad} outside [0, 1]"));
        }
        if let Some(bad) = mu.iter().find(|&&x| !(x > T::zero()) || !x.is_finite()) {
            return domain(format!("mean demand {bad} must be positive"));
        }
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return domain(format!("base Poisson parameter {lambda} must be positive"));
        }
        Ok(Self { p, lambda, mu })
    }

    /// Identical products: scalar `p` and `μ` expanded to `n` entries.
    pub fn homogeneous(n: usize, p: T, lambda: T, mu: T) -> Result<Self> {
        Self::new(vec![p; n], lambda, vec![mu; n])
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[T] {
        &self.p
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn is_homogeneous(&self) -> bool {
        self.p.iter().all(|&x| x == self.p[0]) && self.mu.iter().all(|&x| x == self.mu[0])
    }

    /// Demand units per Poisson count for product `i`.
    pub fn scale(&self, i: usize) -> T {
        self.mu[i] / self.lambda
    }

    pub fn cv(&self) -> T {
        T::one() / self.lambda.sqrt()
    }

    /// Average original variance `σ² = (1/n) Σ_i (μ^i)²/λ`.
    pub fn base_variance(&self) -> T {
        let n = T::from_count(self.n() as u64);
        self.mu.iter().map(|&m| m * m / self.lambda).sum::<T>() / n
    }
}

/// One period's demands at the three stages of the scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodDemands<T> {
    pub original: Vec<T>,
    pub intermediate: Vec<T>,
    pub opaque: T,
    pub adjusted: Vec<T>,
}

/// Draws `Y_i ~ Poisson(λ)` per product; returns the counts and the scaled
/// original demands `(μ^i/λ)·Y_i`.
pub fn generate_original<T: Scalar>(
    profile: &DemandProfile<T>,
    stream: &mut RandomStream,
) -> Result<(Vec<u64>, Vec<T>)> {
    let lambda = profile.lambda().as_f64();
    let counts = (0..profile.n())
        .map(|_| sample_poisson(stream, lambda))
        .collect::<Result<Vec<_>>>()?;
    let original = counts
        .iter()
        .enumerate()
        .map(|(i, &y)| profile.scale(i) * T::from_count(y))
        .collect();
    Ok((counts, original))
}

/// Binomially thins each count: every order switches to the opaque product
/// with probability `p^i`. Returns the intermediate demands and the opaque
/// demand; their total equals the original total.
pub fn split_intermediate<T: Scalar>(
    profile: &DemandProfile<T>,
    counts: &[u64],
    stream: &mut RandomStream,
) -> Result<(Vec<T>, T)> {
    if counts.len() != profile.n() {
        return domain(format!(
            "expected {} counts, got {}",
            profile.n(),
            counts.len()
        ));
    }
    let mut intermediate = Vec::with_capacity(counts.len());
    let mut opaque = T::zero();
    for (i, &y) in counts.iter().enumerate() {
        let switched = sample_binomial(stream, y, profile.p()[i].as_f64())?;
        let scale = profile.scale(i);
        intermediate.push(scale * T::from_count(y - switched));
        opaque = opaque + scale * T::from_count(switched);
    }
    Ok((intermediate, opaque))
}

/// Continuous water-filling: raises the lowest `levels` together by a total
/// of `volume`. Once every level is equal, the remainder is split evenly.
/// Returns the per-entry increments, which sum to `volume`.
pub fn water_fill<T: Scalar>(levels: &[T], volume: T) -> Result<Vec<T>> {
    if !(volume >= T::zero()) || !volume.is_finite() {
        return domain(format!("volume to allocate must be >= 0, got {volume}"));
    }
    if levels.iter().any(|x| !x.is_finite()) {
        return domain("levels must be finite");
    }
    let n = levels.len();
    if n == 0 {
        return domain("nothing to fill");
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| levels[a].partial_cmp(&levels[b]).unwrap_or(Ordering::Equal));

    // find how many of the lowest entries end up at the common water level
    let mut prefix = T::zero();
    let mut filled = n;
    let mut water = T::zero();
    for k in 1..=n {
        prefix = prefix + levels[order[k - 1]];
        let kk = T::from_count(k as u64);
        if k == n {
            water = (volume + prefix) / kk;
            break;
        }
        let next = levels[order[k]];
        if volume <= kk * next - prefix {
            water = (volume + prefix) / kk;
            filled = k;
            break;
        }
    }

    let mut alloc = vec![T::zero(); n];
    for &i in &order[..filled] {
        alloc[i] = (water - levels[i]).max(T::zero());
    }
    Ok(alloc)
}

/// Balancing policy on demand: fulfils opaque demand from the products whose
/// intermediate demand falls furthest below its mean, splitting ties equally.
pub fn bpd_allocate<T: Scalar>(
    profile: &DemandProfile<T>,
    intermediate: &[T],
    opaque: T,
) -> Result<Vec<T>> {
    if intermediate.len() != profile.n() {
        return domain(format!(
            "expected {} intermediate demands, got {}",
            profile.n(),
            intermediate.len()
        ));
    }
    if !(opaque >= T::zero()) {
        return domain(format!("opaque demand must be >= 0, got {opaque}"));
    }
    let deficits: Vec<T> = intermediate
        .iter()
        .zip(profile.mu())
        .map(|(&x, &m)| x - m)
        .collect();
    let alloc = water_fill(&deficits, opaque)?;
    Ok(intermediate
        .iter()
        .zip(alloc)
        .map(|(&x, a)| x + a)
        .collect())
}

/// Runs one period of the full pipeline.
pub fn sample_period<T: Scalar>(
    profile: &DemandProfile<T>,
    counts_stream: &mut RandomStream,
    split_stream: &mut RandomStream,
) -> Result<PeriodDemands<T>> {
    let (counts, original) = generate_original(profile, counts_stream)?;
    let (intermediate, opaque) = split_intermediate(profile, &counts, split_stream)?;
    let adjusted = bpd_allocate(profile, &intermediate, opaque)?;
    Ok(PeriodDemands {
        original,
        intermediate,
        opaque,
        adjusted,
    })
}

/// Stateful pipeline sampler.
///
/// Counts and binomial splits come from two substreams of the given stream,
/// so two samplers built from the same stream see identical original
/// demands whatever their switch probabilities are.
#[derive(Clone, Debug)]
pub struct OpaqueDemand<T> {
    profile: DemandProfile<T>,
    counts: RandomStream,
    splits: RandomStream,
}

impl<T: Scalar> OpaqueDemand<T> {
    pub fn new(profile: DemandProfile<T>, stream: &RandomStream) -> Self {
        Self {
            profile,
            counts: stream.substream(0),
            splits: stream.substream(1),
        }
    }

    pub fn profile(&self) -> &DemandProfile<T> {
        &self.profile
    }

    pub fn next_period(&mut self) -> Result<PeriodDemands<T>> {
        sample_period(&self.profile, &mut self.counts, &mut self.splits)
    }
}

/// Empirical variance and correlation of adjusted demands.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandStats<T> {
    /// `(1/n) Σ_i` sample variance of adjusted demand `i`.
    pub avg_variance: T,
    /// Mean pairwise Pearson correlation; `None` for `n < 2` or a
    /// constant product.
    pub avg_correlation: Option<T>,
    /// Relative variance against the theoretical endpoints `σ²` and `σ²/n`.
    pub relative_variance: Option<T>,
    pub sample_count: usize,
    /// Standard error of `avg_variance`.
    pub std_error_variance: T,
    pub std_error_relative: Option<T>,
}

/// Streaming accumulator behind [`estimate_stats`].
///
/// Sums are taken over deviations from the profile means, which keeps the
/// single-pass covariance formula well conditioned.
#[derive(Clone, Debug)]
pub struct DemandAccumulator<T> {
    mu: Vec<T>,
    count: usize,
    sum: Vec<T>,
    cross: Vec<T>,
    spread_sum: T,
    spread_sq_sum: T,
}

impl<T: Scalar> DemandAccumulator<T> {
    pub fn new(profile: &DemandProfile<T>) -> Self {
        let n = profile.n();
        Self {
            mu: profile.mu().to_vec(),
            count: 0,
            sum: vec![T::zero(); n],
            cross: vec![T::zero(); n * n],
            spread_sum: T::zero(),
            spread_sq_sum: T::zero(),
        }
    }

    pub fn push(&mut self, adjusted: &[T]) {
        let n = self.mu.len();
        debug_assert_eq!(adjusted.len(), n);
        let dev: Vec<T> = adjusted
            .iter()
            .zip(&self.mu)
            .map(|(&x, &m)| x - m)
            .collect();
        for i in 0..n {
            self.sum[i] = self.sum[i] + dev[i];
            for j in i..n {
                self.cross[i * n + j] = self.cross[i * n + j] + dev[i] * dev[j];
            }
        }
        let spread = dev.iter().map(|&d| d * d).sum::<T>() / T::from_count(n as u64);
        self.spread_sum = self.spread_sum + spread;
        self.spread_sq_sum = self.spread_sq_sum + spread * spread;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn covariance(&self, i: usize, j: usize) -> T {
        let n = self.mu.len();
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let k = T::from_count(self.count as u64);
        (self.cross[i * n + j] - self.sum[i] * self.sum[j] / k) / (k - T::one())
    }

    pub fn finish(&self, base_variance: T) -> Result<DemandStats<T>> {
        if self.count < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: self.count,
            });
        }
        let n = self.mu.len();
        let nn = T::from_count(n as u64);
        let k = T::from_count(self.count as u64);
        let variances: Vec<T> = (0..n).map(|i| self.covariance(i, i)).collect();
        let avg_variance = variances.iter().copied().sum::<T>() / nn;

        let avg_correlation = if n >= 2 && variances.iter().all(|&v| v > T::zero()) {
            let mut total = T::zero();
            let mut pairs = 0u64;
            for i in 0..n {
                for j in (i + 1)..n {
                    total = total + self.covariance(i, j) / (variances[i] * variances[j]).sqrt();
                    pairs += 1;
                }
            }
            Some(total / T::from_count(pairs))
        } else {
            None
        };

        let spread_mean = self.spread_sum / k;
        let spread_var =
            ((self.spread_sq_sum - k * spread_mean * spread_mean) / (k - T::one())).max(T::zero());
        let std_error_variance = (spread_var / k).sqrt();

        let (relative_variance, std_error_relative) = if n >= 2 {
            let rel = analytics::rel_from_sigma_np(n, base_variance, avg_variance)?;
            let span = base_variance - base_variance / nn;
            (Some(rel), Some(std_error_variance / span))
        } else {
            (None, None)
        };

        Ok(DemandStats {
            avg_variance,
            avg_correlation,
            relative_variance,
            sample_count: self.count,
            std_error_variance,
            std_error_relative,
        })
    }
}

/// Summarizes adjusted demands over a sample of periods.
pub fn estimate_stats<T: Scalar>(
    profile: &DemandProfile<T>,
    samples: &[PeriodDemands<T>],
) -> Result<DemandStats<T>> {
    let mut acc = DemandAccumulator::new(profile);
    for s in samples {
        acc.push(&s.adjusted);
    }
    acc.finish(profile.base_variance())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile2() -> DemandProfile<f64> {
        DemandProfile::homogeneous(2, 0.5, 10.0, 10.0).unwrap()
    }

    #[test]
    fn allocate_nothing() {
        let a = bpd_allocate(&profile2(), &[8.0, 12.0], 0.0).unwrap();
        assert_eq!(a, vec![8.0, 12.0]);
    }

    #[test]
    fn allocate_fills_the_deficit() {
        let a = bpd_allocate(&profile2(), &[8.0, 12.0], 2.0).unwrap();
        assert!((a[0] - 10.0).abs() < 1e-12 && (a[1] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn allocate_levels_then_splits() {
        let a = bpd_allocate(&profile2(), &[8.0, 12.0], 6.0).unwrap();
        assert!((a[0] - 13.0).abs() < 1e-12 && (a[1] - 13.0).abs() < 1e-12);
    }

    #[test]
    fn allocate_splits_ties_equally() {
        let p = DemandProfile::homogeneous(3, 0.5, 10.0, 10.0).unwrap();
        let a = bpd_allocate(&p, &[7.0, 7.0, 12.0], 4.0).unwrap();
        assert_eq!(a, vec![9.0, 9.0, 12.0]);
    }

    #[test]
    fn allocate_measures_deficits_against_each_mean() {
        let p = DemandProfile::new(vec![0.5, 0.5], 10.0, vec![5.0, 20.0]).unwrap();
        // deficits are (+1, -4): all 3 units go to product 2
        let a = bpd_allocate(&p, &[6.0, 16.0], 3.0).unwrap();
        assert_eq!(a, vec![6.0, 19.0]);
    }

    #[test]
    fn allocate_rejects_negative_opaque() {
        assert!(bpd_allocate(&profile2(), &[8.0, 12.0], -1.0).is_err());
        assert!(bpd_allocate(&profile2(), &[8.0], 1.0).is_err());
    }

    #[test]
    fn profile_validation() {
        assert!(DemandProfile::homogeneous(0, 0.5, 10.0, 10.0).is_err());
        assert!(DemandProfile::homogeneous(2, 1.5, 10.0, 10.0).is_err());
        assert!(DemandProfile::homogeneous(2, 0.5, 0.0, 10.0).is_err());
        assert!(DemandProfile::homogeneous(2, 0.5, 10.0, -1.0).is_err());
        assert!(DemandProfile::new(vec![0.1, 0.2], 4.0, vec![10.0]).is_err());
        let p = DemandProfile::<f64>::homogeneous(3, 0.3, 4.0, 10.0).unwrap();
        assert!(p.is_homogeneous());
        assert!((p.cv() - 0.5).abs() < 1e-15);
        assert!((p.base_variance() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn scale_factor_is_mu_over_lambda() {
        let p = DemandProfile::homogeneous(1, 0.0, 4.0, 10.0).unwrap();
        assert_eq!(p.scale(0) * 6.0, 15.0);
        let unit = DemandProfile::homogeneous(1, 0.0, 10.0, 10.0).unwrap();
        let mut s = RandomStream::new(5, 0);
        let (counts, original) = generate_original(&unit, &mut s).unwrap();
        assert_eq!(original[0], counts[0] as f64);
    }

    #[test]
    fn no_switching_and_full_switching() {
        let mut s = RandomStream::new(11, 3);
        let none = DemandProfile::homogeneous(3, 0.0, 10.0, 10.0).unwrap();
        let full = DemandProfile::homogeneous(3, 1.0, 10.0, 10.0).unwrap();
        for _ in 0..100 {
            let (counts, original) = generate_original(&none, &mut s).unwrap();
            let (mid, opq) = split_intermediate(&none, &counts, &mut s).unwrap();
            assert_eq!(mid, original);
            assert_eq!(opq, 0.0);
            let (mid, opq) = split_intermediate(&full, &counts, &mut s).unwrap();
            assert!(mid.iter().all(|&x| x == 0.0));
            assert!((opq - original.iter().sum::<f64>()).abs() < 1e-9);
        }
    }

    #[test]
    fn stats_need_two_samples() {
        let p = profile2();
        let one = vec![PeriodDemands {
            original: vec![10.0, 10.0],
            intermediate: vec![10.0, 10.0],
            opaque: 0.0,
            adjusted: vec![10.0, 10.0],
        }];
        assert!(matches!(
            estimate_stats(&p, &one),
            Err(Error::InsufficientSamples { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn stats_on_perfectly_correlated_samples() {
        let p = profile2();
        let samples: Vec<_> = [8.0, 12.0, 9.0, 11.0]
            .iter()
            .map(|&x| PeriodDemands {
                original: vec![x, x],
                intermediate: vec![x, x],
                opaque: 0.0,
                adjusted: vec![x, x],
            })
            .collect();
        let st = estimate_stats(&p, &samples).unwrap();
        assert!((st.avg_correlation.unwrap() - 1.0).abs() < 1e-12);
        // sample variance of (8, 12, 9, 11) is 10/3
        assert!((st.avg_variance - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pipeline_generic_over_f32() {
        let p = DemandProfile::<f32>::homogeneous(3, 0.4, 10.0, 10.0).unwrap();
        let mut d = OpaqueDemand::new(p, &RandomStream::new(1, 1));
        for _ in 0..1000 {
            let pd = d.next_period().unwrap();
            let a: f32 = pd.original.iter().sum();
            let b: f32 = pd.adjusted.iter().sum();
            assert!((a - b).abs() < 1e-3);
        }
    }
}
