//! Probability kernels and seed-reproducible sampling.
//!
//! Poisson mass functions are evaluated in log space, the normal CDF goes
//! through `erfc`, and every random draw comes from a [`RandomStream`]: a
//! ChaCha8 generator keyed by `(seed, stream_id)`. Distinct stream ids select
//! distinct ChaCha streams, so replications and products never share state.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{domain, Result};
use crate::scalar::Scalar;
use crate::special::{erfc, ln_gamma};

/// Below this rate the Poisson sampler inverts the CDF by sequential search.
const POISSON_INVERSION_LIMIT: f64 = 30.0;

/// Binomial draws with at most this many trials count individual Bernoulli
/// uniforms, which keeps the draw monotone in `prob` for a fixed stream.
const BERNOULLI_COUNT_LIMIT: u64 = 256;

/// Terms smaller than this fraction of the running sum end a tail summation.
const SUM_CUTOFF: f64 = 1e-18;

/// Above this z-score `Φ(−α)` is treated as zero.
pub const TRUNCATION_Z_LIMIT: f64 = 8.0;

/// Mixes a sequence of integers into one stream id (SplitMix64 finalizer).
pub fn stream_key(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x6a09_e667_f3bc_c909;
    for &x in parts {
        h ^= x;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// Single-owner random source identified by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream under the same seed whose id is derived from this
    /// stream's id and `tag`.
    pub fn substream(&self, tag: u64) -> RandomStream {
        RandomStream::new(self.seed, stream_key(&[self.stream_id, tag]))
    }

    /// Uniform draw on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Poisson rate. Houses the base rate and its composites (`nλ`, `nmλ`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonParams<T> {
    gamma: T,
}

impl<T: Scalar> PoissonParams<T> {
    pub fn new(gamma: T) -> Result<Self> {
        check_rate(gamma)?;
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn pmf(&self, k: u64) -> T {
        T::lit(ln_poisson_pmf(self.gamma.as_f64(), k).exp())
    }

    pub fn cdf(&self, k: i64) -> T {
        T::lit(cdf_f64(self.gamma.as_f64(), k))
    }

    pub fn sf(&self, k: i64) -> T {
        T::lit(sf_f64(self.gamma.as_f64(), k))
    }
}

fn check_rate<T: Scalar>(gamma: T) -> Result<()> {
    if !(gamma >= T::zero()) || !gamma.is_finite() {
        return domain(format!("Poisson rate must be finite and >= 0, got {gamma}"));
    }
    Ok(())
}

fn ln_poisson_pmf(gamma: f64, k: u64) -> f64 {
    if gamma == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    crate::special::ln_poisson_pmf(gamma, k)
}

/// `P(Y_γ = k)`.
pub fn poisson_pmf<T: Scalar>(gamma: T, k: u64) -> Result<T> {
    Ok(PoissonParams::new(gamma)?.pmf(k))
}

/// `P(Y_γ ≤ k)`; zero for negative `k`.
pub fn poisson_cdf<T: Scalar>(gamma: T, k: i64) -> Result<T> {
    Ok(PoissonParams::new(gamma)?.cdf(k))
}

/// Upper tail `P(Y_γ > k)`, summed directly so it keeps relative accuracy
/// where the CDF is close to one.
pub fn poisson_sf<T: Scalar>(gamma: T, k: i64) -> Result<T> {
    Ok(PoissonParams::new(gamma)?.sf(k))
}

/// `Σ_{j ≤ k} pmf(j)` summed downward from `k`.
fn lower_sum(gamma: f64, k: u64) -> f64 {
    let mut term = ln_poisson_pmf(gamma, k).exp();
    let mut sum = term;
    let mut j = k;
    while j > 0 {
        term *= j as f64 / gamma;
        j -= 1;
        sum += term;
        if term < SUM_CUTOFF * sum && (j as f64) < gamma {
            break;
        }
    }
    sum
}

/// `Σ_{j > k} pmf(j)` summed upward from `k + 1`.
fn upper_sum(gamma: f64, k: u64) -> f64 {
    let mut j = k + 1;
    let mut term = ln_poisson_pmf(gamma, j).exp();
    let mut sum = term;
    loop {
        j += 1;
        term *= gamma / j as f64;
        sum += term;
        if (j as f64 > gamma && term <= SUM_CUTOFF * sum) || term == 0.0 {
            break;
        }
    }
    sum
}

fn cdf_f64(gamma: f64, k: i64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    if gamma == 0.0 {
        return 1.0;
    }
    let k = k as u64;
    if (k as f64) <= gamma {
        lower_sum(gamma, k).min(1.0)
    } else {
        (1.0 - upper_sum(gamma, k)).clamp(0.0, 1.0)
    }
}

fn sf_f64(gamma: f64, k: i64) -> f64 {
    if k < 0 {
        return 1.0;
    }
    if gamma == 0.0 {
        return 0.0;
    }
    let k = k as u64;
    if (k as f64) >= gamma {
        upper_sum(gamma, k).min(1.0)
    } else {
        (1.0 - lower_sum(gamma, k)).clamp(0.0, 1.0)
    }
}

/// Exact Poisson variate: sequential-search inversion for small rates,
/// transformed rejection with squeeze (PTRS) above [`POISSON_INVERSION_LIMIT`].
pub fn sample_poisson(stream: &mut RandomStream, gamma: f64) -> Result<u64> {
    check_rate(gamma)?;
    if gamma == 0.0 {
        return Ok(0);
    }
    if gamma < POISSON_INVERSION_LIMIT {
        Ok(poisson_inversion(stream, gamma))
    } else {
        Ok(poisson_ptrs(stream, gamma))
    }
}

fn poisson_inversion(stream: &mut RandomStream, gamma: f64) -> u64 {
    let u = stream.uniform();
    let mut k = 0u64;
    let mut p = (-gamma).exp();
    let mut cdf = p;
    // the accumulated CDF can stall just below one; stop far in the tail
    let cap = (gamma + 40.0 * gamma.sqrt() + 100.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        p *= gamma / k as f64;
        cdf += p;
    }
    k
}

fn poisson_ptrs(stream: &mut RandomStream, gamma: f64) -> u64 {
    let slam = gamma.sqrt();
    let loglam = gamma.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = stream.uniform() - 0.5;
        let v = stream.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + gamma + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -gamma + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Exact `Binomial(trials, prob)` variate.
///
/// Up to [`BERNOULLI_COUNT_LIMIT`] trials this counts uniforms below `prob`,
/// consuming exactly `trials` uniforms whatever `prob` is. Two calls on
/// identical streams with `p1 ≤ p2` then return `k1 ≤ k2`.
pub fn sample_binomial(stream: &mut RandomStream, trials: u64, prob: f64) -> Result<u64> {
    if !(0.0..=1.0).contains(&prob) {
        return domain(format!(
            "binomial probability must lie in [0, 1], got {prob}"
        ));
    }
    if trials <= BERNOULLI_COUNT_LIMIT {
        let mut hits = 0;
        for _ in 0..trials {
            if stream.uniform() < prob {
                hits += 1;
            }
        }
        return Ok(hits);
    }
    let dist = Binomial::new(trials, prob)
        .map_err(|e| crate::error::Error::Domain(format!("binomial: {e}")))?;
    Ok(dist.sample(stream))
}

/// Standard normal density `φ(x)`.
pub fn std_normal_pdf<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    (-(x * x) * half).exp() / (T::TAU()).sqrt()
}

/// Standard normal CDF `Φ(x)`.
pub fn std_normal_cdf<T: Scalar>(x: T) -> T {
    let x = x.as_f64();
    T::lit(0.5 * erfc(-x / std::f64::consts::SQRT_2))
}

/// Moments of `T ~ N(mu_t, sigma_t²)` conditioned on `T > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedMoments<T> {
    /// `E[T | T > 0]`, `None` when the positive mass is treated as zero.
    pub mean: Option<T>,
    /// `var(T | T > 0)`, `None` when the positive mass is treated as zero.
    pub variance: Option<T>,
    /// `Pr(T > 0)`.
    pub prob_positive: T,
}

impl<T: Scalar> TruncatedMoments<T> {
    /// `E[T² | T > 0]` when defined.
    pub fn second_moment(&self) -> Option<T> {
        Some(self.variance? + self.mean? * self.mean?)
    }
}

pub fn truncated_normal_moments<T: Scalar>(mu_t: T, sigma_t: T) -> Result<TruncatedMoments<T>> {
    if !(sigma_t > T::zero()) || !sigma_t.is_finite() || !mu_t.is_finite() {
        return domain(format!(
            "truncated normal needs finite mean and sigma > 0, got ({mu_t}, {sigma_t})"
        ));
    }
    let alpha = -mu_t / sigma_t;
    if alpha > T::lit(TRUNCATION_Z_LIMIT) {
        return Ok(TruncatedMoments {
            mean: None,
            variance: None,
            prob_positive: T::zero(),
        });
    }
    let z = std_normal_cdf(-alpha);
    let hazard = std_normal_pdf(alpha) / z;
    let mean = mu_t + sigma_t * hazard;
    let spread = (T::one() + alpha * hazard - hazard * hazard).max(T::zero());
    Ok(TruncatedMoments {
        mean: Some(mean),
        variance: Some(sigma_t * sigma_t * spread),
        prob_positive: z,
    })
}
