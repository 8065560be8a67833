use opaque_inv::dist::RandomStream;
use opaque_inv::opaque::{
    bpd_allocate, estimate_stats, water_fill, DemandProfile, OpaqueDemand, PeriodDemands,
};
use proptest::prelude::*;

fn spread(xs: &[f64], mu: &[f64]) -> f64 {
    let d: Vec<f64> = xs.iter().zip(mu).map(|(x, m)| x - m).collect();
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(0u32..40, n),
            prop::collection::vec(1.0f64..20.0, n),
            0.0f64..30.0,
        )
            .prop_map(|(x, mu, v)| (x.into_iter().map(f64::from).collect(), mu, v))
    })
}

proptest! {
    #[test]
    fn bpd_conserves_and_levels((x, mu, v) in instance()) {
        let profile = DemandProfile::new(vec![0.5; x.len()], 10.0, mu.clone()).unwrap();
        let adj = bpd_allocate(&profile, &x, v).unwrap();
        let before: f64 = x.iter().sum();
        let after: f64 = adj.iter().sum();
        prop_assert!((after - before - v).abs() < 1e-9);
        for (a, b) in adj.iter().zip(&x) {
            prop_assert!(*a >= *b - 1e-12);
        }
        prop_assert!(spread(&adj, &mu) <= spread(&x, &mu) + 1e-9);
    }

    #[test]
    fn water_fill_lifts_only_the_lowest(levels in prop::collection::vec(-20.0f64..20.0, 1..10), v in 0.0f64..50.0) {
        let alloc = water_fill(&levels, v).unwrap();
        let after: Vec<f64> = levels.iter().zip(&alloc).map(|(l, a)| l + a).collect();
        let water = after
            .iter()
            .zip(&alloc)
            .filter(|(_, &a)| a > 1e-12)
            .map(|(x, _)| *x)
            .fold(f64::NEG_INFINITY, f64::max);
        // every lifted entry sits at the common level, and untouched ones are at or above it
        for (i, &a) in alloc.iter().enumerate() {
            if a > 1e-12 {
                prop_assert!((after[i] - water).abs() < 1e-9);
            } else if water.is_finite() {
                prop_assert!(levels[i] >= water - 1e-9);
            }
        }
    }

    #[test]
    fn pipeline_conserves_totals(seed in any::<u64>(), n in 1usize..10, p in 0.0f64..=1.0, lambda in 1.0f64..40.0) {
        let profile = DemandProfile::homogeneous(n, p, lambda, 10.0).unwrap();
        let mut src = OpaqueDemand::new(profile, &RandomStream::new(seed, 1));
        for _ in 0..20 {
            let d = src.next_period().unwrap();
            let orig: f64 = d.original.iter().sum();
            let inter: f64 = d.intermediate.iter().sum::<f64>() + d.opaque;
            let adj: f64 = d.adjusted.iter().sum();
            prop_assert!((orig - inter).abs() < 1e-9);
            prop_assert!((orig - adj).abs() < 1e-9);
        }
    }
}

#[test]
fn mean_preserved_for_every_product() {
    let n = 3;
    for &p in &[0.0, 0.25, 0.5, 0.75, 1.0] {
        let profile = DemandProfile::homogeneous(n, p, 10.0, 10.0).unwrap();
        let mut src = OpaqueDemand::new(profile.clone(), &RandomStream::new(21, 3));
        let periods = 1_000_000;
        let mut sum = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        for _ in 0..periods {
            let d = src.next_period().unwrap();
            for i in 0..n {
                let dev = d.adjusted[i] - profile.mu()[i];
                sum[i] += dev;
                sq[i] += dev * dev;
            }
        }
        let k = periods as f64;
        for i in 0..n {
            let m = sum[i] / k;
            let se = ((sq[i] / k - m * m) / k).sqrt();
            assert!(m.abs() < 4.0 * se, "p={p} i={i} bias {m} se {se}");
        }
    }
}

#[test]
fn unequal_means_shift_volume_between_products() {
    // with different means the deficits have different spreads, so the
    // allocation no longer balances out product by product
    let profile = DemandProfile::new(vec![0.25; 3], 10.0, vec![8.0, 10.0, 12.0]).unwrap();
    let mut src = OpaqueDemand::new(profile, &RandomStream::new(21, 3));
    let periods = 500_000;
    let (mut sum, mut sq) = (0.0f64, 0.0f64);
    for _ in 0..periods {
        let d = src.next_period().unwrap();
        let dev = d.adjusted[0] - 8.0;
        sum += dev;
        sq += dev * dev;
    }
    let k = periods as f64;
    let bias = sum / k;
    let se = ((sq / k - bias * bias) / k).sqrt();
    assert!(bias.abs() > 6.0 * se, "bias {bias} se {se}");
}

fn draw(profile: &DemandProfile<f64>, periods: usize, seed: u64) -> Vec<PeriodDemands<f64>> {
    let mut src = OpaqueDemand::new(profile.clone(), &RandomStream::new(seed, 0));
    (0..periods).map(|_| src.next_period().unwrap()).collect()
}

#[test]
fn two_product_relative_variance_near_point_two() {
    let profile = DemandProfile::homogeneous(2, 0.3, 4.0, 10.0).unwrap();
    let stats = estimate_stats(&profile, &draw(&profile, 100_000, 8)).unwrap();
    let rel = stats.relative_variance.unwrap();
    assert!((rel - 0.2).abs() < 0.03, "{rel}");
}

#[test]
fn no_switching_keeps_independent_products() {
    let profile = DemandProfile::homogeneous(4, 0.0, 10.0, 10.0).unwrap();
    let samples = draw(&profile, 50_000, 2);
    assert!(samples
        .iter()
        .all(|d| d.original == d.adjusted && d.opaque == 0.0));
    let stats = estimate_stats(&profile, &samples).unwrap();
    assert!(stats.avg_correlation.unwrap().abs() < 0.02);
    assert!((stats.avg_variance / profile.base_variance() - 1.0).abs() < 0.03);
}

#[test]
fn full_switching_pools_demand() {
    let profile = DemandProfile::homogeneous(5, 1.0, 10.0, 10.0).unwrap();
    let samples = draw(&profile, 50_000, 4);
    for d in &samples {
        let avg = d.original.iter().sum::<f64>() / 5.0;
        assert!(d.adjusted.iter().all(|&a| (a - avg).abs() < 1e-9));
    }
    let stats = estimate_stats(&profile, &samples).unwrap();
    let floor = profile.base_variance() / 5.0;
    assert!((stats.avg_variance - floor).abs() < 4.0 * stats.std_error_variance);
}

#[test]
fn single_precision_pipeline_tracks_double() {
    let p32 = DemandProfile::<f32>::homogeneous(3, 0.6, 10.0, 10.0).unwrap();
    let p64 = DemandProfile::<f64>::homogeneous(3, 0.6, 10.0, 10.0).unwrap();
    let stream = RandomStream::new(5, 5);
    let mut a = OpaqueDemand::new(p32, &stream);
    let mut b = OpaqueDemand::new(p64, &stream);
    for _ in 0..1_000 {
        let x = a.next_period().unwrap();
        let y = b.next_period().unwrap();
        for (u, v) in x.adjusted.iter().zip(&y.adjusted) {
            assert!((*u as f64 - v).abs() < 1e-4);
        }
    }
}
