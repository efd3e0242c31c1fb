use charlier_core::charlier::{project_density, reconstruct_pmf, CharlierBasis};
use charlier_core::closure::{moment_match, ClosureOrder, MatchFlag, RootChoice, SurrogateParams};
use charlier_core::harness::rel_error;
use charlier_core::models::{make_erlang_a, ErlangAParams, TimeFunction};
use charlier_core::solve::{simulate_paths, SimulationOptions};
use charlier_core::special::{chen_stein_gap, lower_tail, poisson_quantile_upper, upper_tail};
use charlier_core::PmfVector;
use proptest::prelude::*;

fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (5usize..40).prop_flat_map(|n| {
        (prop::collection::vec(0.5f64..50.0, n), prop::collection::vec(-0.3f64..0.3, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rel_error_is_scale_invariant((truth, noise) in series(), alpha in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0]) {
        let times: Vec<f64> = (0..truth.len()).map(|i| 0.1 * i as f64).collect();
        let approx: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| t * (1.0 + e)).collect();
        let scaled = |v: &[f64]| v.iter().map(|x| alpha * x).collect::<Vec<_>>();
        let base = rel_error(&approx, &truth, &times).unwrap();
        let again = rel_error(&scaled(&approx), &scaled(&truth), &times).unwrap();
        prop_assert!((base - again).abs() <= 1e-12 * base.max(1e-300));
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn rel_error_vanishes_on_identical_series((truth, _) in series()) {
        let times: Vec<f64> = (0..truth.len()).map(|i| i as f64).collect();
        prop_assert_eq!(rel_error(&truth, &truth, &times).unwrap(), 0.0);
    }

    #[test]
    fn tails_partition_unity(q in 0.01f64..200.0, c in -2i64..400) {
        let s = lower_tail(q, c).unwrap() + upper_tail(q, c).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-13);
    }

    #[test]
    fn chen_stein_holds_for_polynomials(q in 0.1f64..40.0, k in 0u32..4) {
        let x_max = poisson_quantile_upper(q, 1e-25) + 10;
        let gap = chen_stein_gap(|x| (x as f64).powi(k as i32), q, x_max);
        prop_assert!(gap.abs() < 1e-9 * q.powi(k as i32 + 1).max(1.0));
    }

    #[test]
    fn projection_keeps_unit_mass(a in 0.5f64..30.0, order in 1usize..12, lo in 0usize..10, width in 0usize..15) {
        let basis = CharlierBasis::new(a, order).unwrap();
        let hi = (lo + width).min(basis.x_max());
        let lo = lo.min(hi);
        let p = PmfVector::uniform(lo, hi, basis.x_max()).unwrap();
        let c = project_density(&p, &basis).unwrap();
        prop_assert!((c.as_slice()[0] - 1.0).abs() < 1e-12);
        prop_assert!((reconstruct_pmf(&c).mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn first_order_matching_reproduces_mean_and_variance(mean in 0.5f64..150.0, frac in 0.05f64..1.0) {
        let variance = frac * mean;
        for root in [RootChoice::NonNegative, RootChoice::NonPositive] {
            let m = moment_match(mean, variance, ClosureOrder::First, root).unwrap();
            if m.flag == MatchFlag::Exact {
                prop_assert!((m.params.mean() - mean).abs() < 1e-9 * mean);
                prop_assert!((m.params.variance() - variance).abs() < 1e-8 * mean);
                let brute = m.params.brute_expect(|x| x as f64);
                prop_assert!((brute - mean).abs() < 1e-8 * mean);
            }
        }
    }

    #[test]
    fn surrogate_mass_is_a0(q in 0.5f64..80.0, a1 in -0.2f64..0.3) {
        let s = SurrogateParams::first(q, a1);
        prop_assert!((s.brute_expect(|_| 1.0) - 1.0).abs() < 1e-11);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulation_is_seed_deterministic(seed in any::<u64>()) {
        let model = make_erlang_a(ErlangAParams { lambda: TimeFunction::sinusoid(5.0, 1.0), mu: 1.0, beta: 0.5, c: 4 }).unwrap();
        let p0 = PmfVector::point_mass(1, 40).unwrap();
        let opts = SimulationOptions { n_paths: 200, seed, groups: 10, ..Default::default() };
        let a = simulate_paths(&model, &p0, &[0.5, 1.0], &opts).unwrap();
        let b = simulate_paths(&model, &p0, &[0.5, 1.0], &opts).unwrap();
        prop_assert_eq!(a.estimates, b.estimates);
        prop_assert_eq!(a.events, b.events);
    }
}
