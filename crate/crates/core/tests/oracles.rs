use nalgebra::DVector;
use statrs::function::beta::beta;

use volterra_core::asymptotics::{EpsilonLadder, LimitCovariance, LimitKind, LimitLaw, Provenance};
use volterra_core::conditioning::{cross_cov_increment, FunctionalConditionalLaw, GaussianLaw};
use volterra_core::ldp::{bm_exit_exact, ldp_probe, log_mgf_discrete, rate_functional, ProbeSpec, RateQuery};
use volterra_core::models::{fbm_constant, ConditioningFunction, ConditioningSet, KernelFamily, ProcessModel};
use volterra_core::numerics::GramMatrix;
use volterra_core::par::Exec;
use volterra_core::sim::{bootstrap_stderr, empirical_conditional, joint_model_cov, sample_gaussian, schur_condition};

fn uniform(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

fn fbm_limit(hurst: f64) -> LimitLaw {
    LimitLaw {
        gamma_exp: hurst,
        kind: LimitKind::Base,
        provenance: Provenance::ClosedForm,
        cov: LimitCovariance::Fbm { hurst },
    }
}

#[test]
fn fbm_indicator_cross_increment_is_linear_in_eps() {
    // Differentiating the kernel under the integral gives
    // d/dε r(T+ε) at 0 = α c_H (H-1/2) B(3/2-H, H-1/2) for T = 1, and the
    // remainder is of order ε^{H+1/2}. Eliminate it with two scales.
    for hurst in [0.6, 0.75] {
        let m = ProcessModel::new(KernelFamily::Fbm { hurst }, 1.0, 1.0, 1.0).unwrap();
        let slope = fbm_constant(hurst) * (hurst - 0.5) * beta(1.5 - hurst, hurst - 0.5);
        let q = |e: f64| cross_cov_increment(&m, &ConditioningFunction::Indicator, 1.0, 1.0 + e).unwrap() / e;
        let (e1, e2) = (1e-4, 1e-6);
        let p = hurst - 0.5;
        let (q1, q2) = (q(e1), q(e2));
        let ratio = (e1 / e2).powf(p);
        let extrapolated = (ratio * q2 - q1) / (ratio - 1.0);
        assert!(
            (extrapolated - slope).abs() < 2e-3 * slope,
            "H = {hurst}: {extrapolated} vs {slope}"
        );
    }
}

#[test]
fn brownian_sample_covariance_matches_gram() {
    let grid = [0.25, 0.5, 0.75, 1.0];
    let mut g = GramMatrix::assemble(&grid, |s, t| Ok(s.min(t))).unwrap();
    let n = 200_000;
    let batch = sample_gaussian(&[0.0; 4], &mut g, n, 42).unwrap();
    for a in 0..4 {
        for b in 0..4 {
            let emp: f64 = (0..n).map(|r| batch.row(r)[a] * batch.row(r)[b]).sum::<f64>() / n as f64;
            let (saa, sbb, sab) = (grid[a], grid[b], grid[a].min(grid[b]));
            let se = ((saa * sbb + sab * sab) / n as f64).sqrt();
            assert!((emp - sab).abs() < 3.0 * se, "({a},{b}): {emp} vs {sab}");
        }
    }
}

#[test]
fn batches_do_not_depend_on_execution_mode() {
    let grid = [0.3, 0.6, 0.9];
    let mut g = GramMatrix::assemble(&grid, |s, t| Ok(s.min(t))).unwrap();
    let seq = volterra_core::sim::sample_gaussian_with(&[0.0; 3], &mut g, 5000, 9, "sample", Exec::Sequential).unwrap();
    let def = sample_gaussian(&[0.0; 3], &mut g, 5000, 9).unwrap();
    assert_eq!(seq.samples, def.samples);
}

#[test]
fn joint_covariance_blocks() {
    let gs = ConditioningSet::indicator_and_decay([0.0, 0.0]);
    let grid = [0.5, 1.0, 1.5, 2.0];
    let silent = ProcessModel::new(KernelFamily::Fbm { hurst: 0.7 }, 1.0, 0.0, 1.0).unwrap();
    let j = joint_model_cov(&silent, &gs, &grid).unwrap();
    for a in 0..4 {
        for i in 4..6 {
            assert_eq!(j.entries[(a, i)], 0.0);
        }
    }
    for fam in [
        KernelFamily::Brownian,
        KernelFamily::Fbm { hurst: 0.75 },
        KernelFamily::Mfold { m: 2 },
        KernelFamily::Integrated {
            inner: Box::new(KernelFamily::Brownian),
        },
    ] {
        let m = ProcessModel::new(fam, 1.0, 1.0, 1.0).unwrap();
        let j = joint_model_cov(&m, &gs, &grid).unwrap();
        assert!(j.min_eigenvalue() >= -1e-10);
    }
}

#[test]
fn schur_complement_matches_closed_form() {
    let gs = ConditioningSet::indicator_and_decay([0.7, -0.4]);
    let grid = [0.5, 1.0, 1.5, 2.0];
    let m = ProcessModel::new(KernelFamily::Mfold { m: 2 }, 1.0, 1.3, 0.6).unwrap();
    let j = joint_model_cov(&m, &gs, &grid).unwrap();
    let c = schur_condition(&j.entries, &DVector::zeros(6), 4, &gs.x).unwrap();
    let law = FunctionalConditionalLaw::new(m, gs).unwrap();
    for a in 0..4 {
        assert!((c.mean[a] - law.mean(grid[a]).unwrap()).abs() < 1e-10);
        for b in 0..4 {
            assert!((c.cov[(a, b)] - law.cov(grid[a], grid[b]).unwrap()).abs() < 1e-10);
        }
    }
}

#[test]
fn empirical_conditioning_examples() {
    let one = ConditioningSet::new(vec![ConditioningFunction::Indicator], vec![1.0]).unwrap();
    let m = ProcessModel::new(KernelFamily::Brownian, 1.0, 1.0, 1.0).unwrap();
    let mut j = joint_model_cov(&m, &one, &[1.0]).unwrap();
    let batch = sample_gaussian(&[0.0, 0.0], &mut j, 200_000, 42).unwrap();
    let se = bootstrap_stderr(&batch, 1, &[1.0], 100, 42).unwrap();
    let est = empirical_conditional(&batch, 1, &[1.0]).unwrap();
    assert!((est.mean[0] - 0.5).abs() < 3.0 * se.mean[0]);
    assert!((est.cov[(0, 0)] - 0.5).abs() < 3.0 * se.cov[(0, 0)]);
    let at_zero = empirical_conditional(&batch, 1, &[0.0]).unwrap();
    let se0 = bootstrap_stderr(&batch, 1, &[0.0], 100, 42).unwrap();
    assert!(at_zero.mean[0].abs() < 3.0 * se0.mean[0]);

    let silent = ProcessModel::new(KernelFamily::Brownian, 1.0, 0.0, 1.0).unwrap();
    let mut j = joint_model_cov(&silent, &one, &[1.0]).unwrap();
    let batch = sample_gaussian(&[0.0, 0.0], &mut j, 200_000, 42).unwrap();
    let est = empirical_conditional(&batch, 1, &[1.0]).unwrap();
    let se = bootstrap_stderr(&batch, 1, &[1.0], 100, 42).unwrap();
    assert!((est.cov[(0, 0)] - 1.0).abs() < 3.0 * se.cov[(0, 0)]);
}

#[test]
fn reflection_oracle_value() {
    // 2Φ̄(1) to 17 digits.
    let reference = 0.317_310_507_862_914_1_f64.ln();
    let v = bm_exit_exact(1.0, 1.0, 1.0);
    assert!((v - reference).abs() < 1e-14, "{v:e} vs {reference:e}");
}

#[test]
fn log_mgf_legendre_dual_matches_rate() {
    // sup_w (w h₁ − Λ(w δ₁)) for the rank-one limit a·st, found by golden
    // section, against the rate of h(t) = h₁ t.
    let a = 0.5;
    let limit = LimitLaw::rank_one(a, 1.0, LimitKind::Functional);
    let h1 = 1.3;
    let objective = |w: f64| w * h1 - log_mgf_discrete(&limit, &[1.0], &[w]).unwrap();
    let (mut lo, mut hi) = (-100.0f64, 100.0f64);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if objective(m1) < objective(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let dual = objective(0.5 * (lo + hi));
    let q = RateQuery::from_fn(limit, uniform(8), |t| h1 * t).unwrap();
    let rate = rate_functional(&q, 1e-10).unwrap().value;
    assert!((dual - rate).abs() < 1e-9);
    assert!((rate - h1 * h1 / (2.0 * a)).abs() < 1e-10);
}

fn probe_spec(gamma_exp: f64, eps: Vec<f64>, delta: f64, n: usize, exec: Exec) -> ProbeSpec {
    ProbeSpec {
        gamma_exp,
        ladder: EpsilonLadder::new(eps).unwrap(),
        delta,
        grid: uniform(64),
        samples: n,
        seed: 42,
        exec,
    }
}

#[test]
fn probe_is_reproducible_across_execution_modes() {
    let m = ProcessModel::new(KernelFamily::Fbm { hurst: 0.75 }, 1.0, 1.0, 1.0).unwrap();
    let a = ldp_probe(&m, &fbm_limit(0.75), &probe_spec(0.75, vec![0.1], 0.3, 20_000, Exec::Sequential)).unwrap();
    let b = ldp_probe(&m, &fbm_limit(0.75), &probe_spec(0.75, vec![0.1], 0.3, 20_000, Exec::default())).unwrap();
    assert_eq!(a, b);
}

#[test]
fn probe_grid_maximum_stays_below_continuum_oracle() {
    let m = ProcessModel::new(KernelFamily::Brownian, 1.0, 1.0, 1.0).unwrap();
    let rep = ldp_probe(&m, &LimitLaw::brownian(), &probe_spec(0.5, vec![0.5, 0.2], 1.0, 100_000, Exec::default()))
        .unwrap()
        .with_brownian_oracle(1.0);
    for row in &rep.rows {
        let continuum = bm_exit_exact(1.0, row.eps, 1.0).exp();
        assert!(row.p_hat <= continuum + 3.0 * row.mc_stderr, "{row:?}");
        assert_eq!(row.predicted_rate_bound, -0.5);
    }
}

#[test]
fn probe_small_level_hits_almost_surely() {
    let m = ProcessModel::new(KernelFamily::Brownian, 1.0, 1.0, 1.0).unwrap();
    let rep = ldp_probe(&m, &LimitLaw::brownian(), &probe_spec(0.5, vec![0.1], 1e-6, 10_000, Exec::default())).unwrap();
    assert!(rep.rows[0].p_hat > 0.9);
    assert!(rep.rows[0].gamma_sq_log_p > -0.01);
}

#[test]
fn fbm_probe_collapses_when_level_scales_with_eps() {
    // ε^{-H}(X_{T+εt} − X_T) has an ε-free law, so with δ ∝ ε^H the exit
    // probability, and hence ε^{2H} log p̂ / δ², is the same at every ε.
    let hurst = 0.75;
    let m = ProcessModel::new(KernelFamily::Fbm { hurst }, 1.0, 1.0, 1.0).unwrap();
    let (e1, e2) = (0.1f64, 0.05f64);
    let d1 = 0.3;
    let d2 = d1 * (e2 / e1).powf(hurst);
    let r1 = ldp_probe(&m, &fbm_limit(hurst), &probe_spec(hurst, vec![e1], d1, 100_000, Exec::default())).unwrap();
    let r2 = ldp_probe(&m, &fbm_limit(hurst), &probe_spec(hurst, vec![e2], d2, 100_000, Exec::default())).unwrap();
    let (a, b) = (&r1.rows[0], &r2.rows[0]);
    let (va, vb) = (a.gamma_sq_log_p / (d1 * d1), b.gamma_sq_log_p / (d2 * d2));
    let se = ((a.gamma_sq_log_p_stderr / (d1 * d1)).powi(2) + (b.gamma_sq_log_p_stderr / (d2 * d2)).powi(2)).sqrt();
    assert!((va - vb).abs() < 3.0 * se, "{va} vs {vb} (se {se})");
}
