use proptest::prelude::*;

use volterra_core::asymptotics::{LimitKind, LimitLaw};
use volterra_core::conditioning::{FunctionalConditionalLaw, GaussianLaw, PathConditionalLaw};
use volterra_core::ldp::{rate_functional, RateQuery, DEFAULT_REL_CUTOFF};
use volterra_core::models::{ConditioningFunction, ConditioningSet, KernelFamily, ProcessModel};
use volterra_core::numerics::{integrate, GramMatrix, QuadConfig};

fn family() -> impl Strategy<Value = KernelFamily> {
    prop_oneof![
        Just(KernelFamily::Brownian),
        (0.55f64..0.95).prop_map(|hurst| KernelFamily::Fbm { hurst }),
        (1u32..=3).prop_map(|m| KernelFamily::Mfold { m }),
    ]
}

fn model() -> impl Strategy<Value = ProcessModel> {
    (family(), 0.5f64..2.0, 0.1f64..2.0, 0.1f64..2.0)
        .prop_map(|(f, horizon, a, at)| ProcessModel::new(f, horizon, a, at).unwrap())
}

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn conditional_covariance_is_symmetric(m in model(), t in 0.1f64..3.0, s in 0.1f64..3.0) {
        let law = FunctionalConditionalLaw::new(m, ConditioningSet::indicator_and_decay([0.4, -0.3])).unwrap();
        let (a, b) = (law.cov(t, s).unwrap(), law.cov(s, t).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn conditioning_reduces_variance(m in model(), t in 0.1f64..3.0) {
        let k = m.covariance(t, t).unwrap();
        let functional = FunctionalConditionalLaw::new(m.clone(), ConditioningSet::indicator_and_decay([1.0, 2.0])).unwrap();
        prop_assert!(functional.cov(t, t).unwrap() <= k + 1e-10 * k.max(1.0));
        let path = PathConditionalLaw::covariance_only(m);
        prop_assert!(path.cov(t, t).unwrap() <= k + 1e-10 * k.max(1.0));
    }

    #[test]
    fn conditional_covariance_ignores_observed_values(
        m in model(),
        t in 0.1f64..3.0,
        s in 0.1f64..3.0,
        x1 in -5.0f64..5.0,
        x2 in -5.0f64..5.0,
    ) {
        let a = FunctionalConditionalLaw::new(m.clone(), ConditioningSet::indicator_and_decay([0.0, 0.0])).unwrap();
        let b = FunctionalConditionalLaw::new(m, ConditioningSet::indicator_and_decay([x1, x2])).unwrap();
        prop_assert_eq!(a.cov(t, s).unwrap(), b.cov(t, s).unwrap());
    }

    #[test]
    fn conditioning_order_does_not_matter(m in model(), t in 0.1f64..3.0, x1 in -2.0f64..2.0, x2 in -2.0f64..2.0) {
        let fwd = ConditioningSet::new(
            vec![ConditioningFunction::Indicator, ConditioningFunction::LinearDecay],
            vec![x1, x2],
        ).unwrap();
        let rev = ConditioningSet::new(
            vec![ConditioningFunction::LinearDecay, ConditioningFunction::Indicator],
            vec![x2, x1],
        ).unwrap();
        let a = FunctionalConditionalLaw::new(m.clone(), fwd).unwrap();
        let b = FunctionalConditionalLaw::new(m, rev).unwrap();
        let tol = |v: f64| 1e-10 * v.abs().max(1.0);
        let (ma, mb) = (a.mean(t).unwrap(), b.mean(t).unwrap());
        prop_assert!((ma - mb).abs() <= tol(ma));
        let (ca, cb) = (a.cov(t, t).unwrap(), b.cov(t, t).unwrap());
        prop_assert!((ca - cb).abs() <= tol(ca));
    }

    #[test]
    fn model_gram_is_psd(m in model(), n in 2usize..8) {
        let grid: Vec<f64> = (1..=n).map(|i| i as f64 * 0.3).collect();
        let g = GramMatrix::assemble(&grid, |t, s| m.covariance(t, s)).unwrap();
        prop_assert!(g.min_eigenvalue() >= -1e-10);
    }
}

fn smooth_path(a: f64, b: f64, c: f64) -> impl Fn(f64) -> f64 {
    move |t| a * t + b * t * t + c * (3.0 * t).sin()
}

fn uniform(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

proptest! {
    #[test]
    fn rate_scales_quadratically(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, k in -4.0f64..4.0) {
        let h = smooth_path(a, b, c);
        let base = RateQuery::from_fn(LimitLaw::brownian(), uniform(16), &h).unwrap();
        let scaled = RateQuery::from_fn(LimitLaw::brownian(), uniform(16), |t| k * h(t)).unwrap();
        let j = rate_functional(&base, DEFAULT_REL_CUTOFF).unwrap();
        let jk = rate_functional(&scaled, DEFAULT_REL_CUTOFF).unwrap();
        prop_assert!(j.in_rkhs);
        prop_assert!(j.value >= 0.0);
        prop_assert!((jk.value - k * k * j.value).abs() <= 1e-10 * jk.value.max(1e-300));
    }

    #[test]
    fn rate_grows_under_refinement(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
        let h = smooth_path(a, b, c);
        let values: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let q = RateQuery::from_fn(LimitLaw::brownian(), uniform(n), &h).unwrap();
                rate_functional(&q, DEFAULT_REL_CUTOFF).unwrap().value
            })
            .collect();
        for w in values.windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-10));
        }
    }

    #[test]
    fn rank_one_rate_is_projection(scale in 0.1f64..3.0, c in -3.0f64..3.0) {
        let limit = LimitLaw::rank_one(scale, 1.0, LimitKind::Functional);
        let q = RateQuery::from_fn(limit, uniform(8), |t| c * t).unwrap();
        let r = rate_functional(&q, DEFAULT_REL_CUTOFF).unwrap();
        let direct = c * c / (2.0 * scale);
        prop_assert!((r.value - direct).abs() <= 1e-9 * direct.max(1e-12));
    }

    #[test]
    fn integration_is_additive(lo in -2.0f64..0.0, mid in 0.0f64..1.0, hi in 1.0f64..3.0, w in 0.5f64..5.0) {
        let f = |x: f64| (w * x).cos() * x.exp();
        let cfg = QuadConfig::with_tol(1e-12);
        let whole = integrate(f, lo, hi, &cfg).unwrap().value;
        let parts = integrate(f, lo, mid, &cfg).unwrap().value + integrate(f, mid, hi, &cfg).unwrap().value;
        prop_assert!((whole - parts).abs() <= 1e-10 * whole.abs().max(1.0));
    }
}
