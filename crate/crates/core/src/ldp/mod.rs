//! Rate functionals of the small-time limits and Monte Carlo exit probes.

use std::io::Write;

use serde::Serialize;

use crate::asymptotics::{EpsilonLadder, LimitLaw};
use crate::conditioning::GaussianLaw;
use crate::error::{Error, Result};
use crate::numerics::special::log_normal_tail;
use crate::numerics::{pinv_quadratic_form, GramMatrix};
use crate::par::{self, Exec};
use crate::sim::NormalStreams;

/// Default relative eigenvalue cutoff for the pseudo-inverse.
pub const DEFAULT_REL_CUTOFF: f64 = 1e-10;

/// Default residual below which a target is treated as lying in the RKHS.
pub const DEFAULT_RESIDUAL_THRESHOLD: f64 = 1e-6;

/// A target path `h` sampled on a grid in `(0, 1]`, with `h(0) = 0` implied.
#[derive(Debug, Clone, PartialEq)]
pub struct RateQuery {
    pub limit: LimitLaw,
    pub grid: Vec<f64>,
    pub h: Vec<f64>,
}

impl RateQuery {
    pub fn new(limit: LimitLaw, grid: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        check_unit_grid(&grid)?;
        if h.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: h.len(),
            });
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("target path must be finite".into()));
        }
        Ok(RateQuery { limit, grid, h })
    }

    /// Samples `h` on `grid`.
    pub fn from_fn(limit: LimitLaw, grid: Vec<f64>, h: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&t| h(t)).collect();
        RateQuery::new(limit, grid, values)
    }
}

fn check_unit_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("grid must be strictly increasing".into()));
    }
    if !(grid[0] > 0.0 && grid[grid.len() - 1] <= 1.0) {
        return Err(Error::InvalidInput("grid must lie in (0, 1]".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateValue {
    pub value: f64,
    pub residual: f64,
    pub in_rkhs: bool,
}

/// `½ hᵀ Ḡ⁺ h` for the limit Gram matrix `Ḡ` on the query grid.
/// `in_rkhs == false` means the rate is infinite at this resolution.
pub fn rate_functional(q: &RateQuery, rel_cutoff: f64) -> Result<RateValue> {
    rate_functional_with(q, rel_cutoff, DEFAULT_RESIDUAL_THRESHOLD)
}

pub fn rate_functional_with(q: &RateQuery, rel_cutoff: f64, residual_threshold: f64) -> Result<RateValue> {
    let gram = q.limit.gram(&q.grid)?;
    let f = pinv_quadratic_form(&gram, &q.h, rel_cutoff)?;
    Ok(RateValue {
        value: f.value,
        residual: f.residual,
        in_rkhs: f.residual < residual_threshold,
    })
}

/// `½ Σᵢⱼ wᵢ wⱼ k̄(tᵢ, tⱼ)`, the log-MGF of the centered limit at `Σ wᵢ δ_{tᵢ}`.
pub fn log_mgf_discrete(limit: &LimitLaw, points: &[f64], weights: &[f64]) -> Result<f64> {
    if points.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: weights.len(),
        });
    }
    let mut acc = 0.0;
    for (i, (&ti, &wi)) in points.iter().zip(weights).enumerate() {
        if wi == 0.0 {
            continue;
        }
        acc += wi * wi * limit.kbar(ti, ti)?;
        for (&tj, &wj) in points.iter().zip(weights).skip(i + 1) {
            if wj != 0.0 {
                acc += 2.0 * wi * wj * limit.kbar(ti, tj)?;
            }
        }
    }
    Ok(0.5 * acc)
}

/// `minᵢ δ² / (2 k̄(tᵢ, tᵢ))`: the cheapest way for the limit to reach `δ` at
/// a single grid point. Exact for the event `maxᵢ h(tᵢ) ≥ δ`.
pub fn exit_rate(limit: &LimitLaw, grid: &[f64], delta: f64) -> Result<f64> {
    check_unit_grid(grid)?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!("exit level must be nonnegative, got {delta}")));
    }
    let mut max_var = f64::NEG_INFINITY;
    for &t in grid {
        max_var = max_var.max(limit.kbar(t, t)?);
    }
    if !(max_var > 0.0) {
        return Err(Error::DegenerateVariance(format!("limit variance on grid is at most {max_var}")));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    Ok(delta * delta / (2.0 * max_var))
}

/// `log P(sup_{u ≤ t_max} W_{εu} ≥ δ) = log(2 Φ̄(δ / √(ε t_max)))`.
pub fn bm_exit_exact(delta: f64, eps: f64, t_max: f64) -> f64 {
    if delta <= 0.0 {
        return 0.0;
    }
    std::f64::consts::LN_2 + log_normal_tail(delta / (eps * t_max).sqrt())
}

/// Probe settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    pub gamma_exp: f64,
    pub ladder: EpsilonLadder,
    pub delta: f64,
    pub grid: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub exec: Exec,
}

/// Smallest admissible number of replicates per `ε`.
pub const MIN_PROBE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub eps: f64,
    pub hits: u64,
    pub p_hat: f64,
    pub mc_stderr: f64,
    /// `ε^{2γ} log p̂`; `-inf` when there are no hits.
    pub gamma_sq_log_p: f64,
    /// Delta-method standard error of `gamma_sq_log_p`.
    pub gamma_sq_log_p_stderr: f64,
    /// `−exit_rate(limit, grid, δ)`.
    pub predicted_rate_bound: f64,
    pub zero_hits: bool,
    /// Scaled reference value supplied by an exact oracle, when one exists.
    pub oracle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub delta: f64,
    pub gamma_exp: f64,
    pub samples: usize,
    pub seed: u64,
    pub rows: Vec<ProbeRow>,
}

pub const PROBE_COLUMNS: [&str; 9] = [
    "eps",
    "hits",
    "p_hat",
    "mc_stderr",
    "gamma_sq_log_p",
    "gamma_sq_log_p_stderr",
    "predicted_rate_bound",
    "zero_hits",
    "oracle",
];

impl ProbeReport {
    /// Fills the oracle column with `ε^{2γ} · bm_exit_exact(δ, ε, t_max)`.
    pub fn with_brownian_oracle(mut self, t_max: f64) -> Self {
        for row in &mut self.rows {
            let scale = row.eps.powf(2.0 * self.gamma_exp);
            row.oracle = Some(scale * bm_exit_exact(self.delta, row.eps, t_max));
        }
        self
    }

    /// Rows usable in regressions: at least one hit.
    pub fn resolved_rows(&self) -> impl Iterator<Item = &ProbeRow> {
        self.rows.iter().filter(|r| !r.zero_hits)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", PROBE_COLUMNS.join(","))?;
        for r in &self.rows {
            let oracle = r.oracle.map(|v| format!("{v:.16e}")).unwrap_or_default();
            writeln!(
                w,
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                r.eps,
                r.hits,
                r.p_hat,
                r.mc_stderr,
                r.gamma_sq_log_p,
                r.gamma_sq_log_p_stderr,
                r.predicted_rate_bound,
                r.zero_hits,
                oracle
            )?;
        }
        Ok(())
    }
}

/// Estimates `P(maxᵢ (X_{T+εtᵢ} − X_T) ≥ δ)` at each ladder `ε` by sampling
/// the exact finite-dimensional law of the increments. The maximum includes
/// the starting point, where the increment is 0, so `δ = 0` always hits.
///
/// Replicate `r` at ladder index `e` draws from the stream `("probe", e)` at
/// word offset `r · |grid| · 2`, so the report depends only on the inputs.
pub fn ldp_probe<L: GaussianLaw + ?Sized>(law: &L, limit: &LimitLaw, spec: &ProbeSpec) -> Result<ProbeReport> {
    check_unit_grid(&spec.grid)?;
    if spec.samples < MIN_PROBE_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "probe needs at least {MIN_PROBE_SAMPLES} samples, got {}",
            spec.samples
        )));
    }
    if !(spec.delta >= 0.0 && spec.delta.is_finite()) {
        return Err(Error::InvalidInput(format!("exit level must be nonnegative, got {}", spec.delta)));
    }
    let horizon = law.horizon();
    spec.ladder.check_against(horizon)?;
    let predicted = -exit_rate(limit, &spec.grid, spec.delta)?;
    let dim = spec.grid.len();
    let n = spec.samples;

    let mut rows = Vec::with_capacity(spec.ladder.len());
    for (e_idx, &eps) in spec.ladder.values().iter().enumerate() {
        let times: Vec<f64> = spec.grid.iter().map(|u| horizon + eps * u).collect();
        let mean: Vec<f64> = times
            .iter()
            .map(|&t| law.increment_mean(horizon, t))
            .collect::<Result<_>>()?;
        let mut gram = GramMatrix::assemble_with(&times, |t, s| law.increment_cov(horizon, t, s), spec.exec)?;
        let l = gram.factor(None)?.lower();
        let streams = NormalStreams::new(spec.seed, "probe", e_idx as u64, dim);
        let hit_flags = par::map(n, spec.exec, |r| {
            let mut z = vec![0.0; dim];
            streams.fill(r as u64, &mut z);
            spec.delta <= 0.0
                || (0..dim).any(|i| {
                    let x = mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>();
                    x >= spec.delta
                })
        });
        let hits = hit_flags.iter().filter(|h| **h).count() as u64;
        let p_hat = hits as f64 / n as f64;
        let mc_stderr = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
        let scale = eps.powf(2.0 * spec.gamma_exp);
        let zero_hits = hits == 0;
        let (gamma_sq_log_p, gamma_sq_log_p_stderr) = if zero_hits {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (scale * p_hat.ln(), scale * mc_stderr / p_hat)
        };
        rows.push(ProbeRow {
            eps,
            hits,
            p_hat,
            mc_stderr,
            gamma_sq_log_p,
            gamma_sq_log_p_stderr,
            predicted_rate_bound: predicted,
            zero_hits,
            oracle: None,
        });
    }
    Ok(ProbeReport {
        delta: spec.delta,
        gamma_exp: spec.gamma_exp,
        samples: n,
        seed: spec.seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::LimitKind;
    use crate::models::{KernelFamily, ProcessModel};

    fn uniform(n: usize) -> Vec<f64> {
        (1..=n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn brownian_identity_path() {
        let q = RateQuery::from_fn(LimitLaw::brownian(), uniform(8), |t| t).unwrap();
        let r = rate_functional(&q, DEFAULT_REL_CUTOFF).unwrap();
        assert!((r.value - 0.5).abs() < 1e-10);
        assert!(r.in_rkhs);
    }

    #[test]
    fn rank_one_rate_and_span() {
        let limit = LimitLaw::rank_one(0.5, 1.0, LimitKind::Functional);
        let q = RateQuery::from_fn(limit.clone(), uniform(8), |t| t).unwrap();
        let r = rate_functional(&q, DEFAULT_REL_CUTOFF).unwrap();
        // Rank one: ‖c·t‖² = c²/a.
        assert!((r.value - 0.5 / 0.5).abs() < 1e-10);
        let off = RateQuery::from_fn(limit, uniform(8), |t| t * t).unwrap();
        assert!(!rate_functional(&off, DEFAULT_REL_CUTOFF).unwrap().in_rkhs);
    }

    #[test]
    fn log_mgf_examples() {
        let b = LimitLaw::brownian();
        assert_eq!(log_mgf_discrete(&b, &[1.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(log_mgf_discrete(&b, &[0.5, 1.0], &[0.0, 0.0]).unwrap(), 0.0);
        let direct = 0.5 * (0.5 - 2.0 * 0.5 + 1.0);
        assert!((log_mgf_discrete(&b, &[0.5, 1.0], &[1.0, -1.0]).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn exit_rate_examples() {
        let grid = uniform(8);
        assert_eq!(exit_rate(&LimitLaw::brownian(), &grid, 1.0).unwrap(), 0.5);
        let r1 = LimitLaw::rank_one(0.5, 1.0, LimitKind::Functional);
        assert!((exit_rate(&r1, &grid, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(exit_rate(&LimitLaw::brownian(), &grid, 0.0).unwrap(), 0.0);
        let zero = LimitLaw::rank_one(0.0, 1.0, LimitKind::Functional);
        assert!(matches!(exit_rate(&zero, &grid, 1.0), Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn reflection_oracle() {
        // 2Φ̄(1) = erfc(1/√2).
        let expected = libm::erfc(1.0 / 2f64.sqrt()).ln();
        assert!((bm_exit_exact(1.0, 1.0, 1.0) - expected).abs() < 1e-13);
        assert_eq!(bm_exit_exact(0.0, 0.3, 1.0), 0.0);
        let scaled = 1e-3 * bm_exit_exact(1.0, 1e-3, 1.0);
        assert!((scaled + 0.5).abs() < 0.02 * 0.5);
    }

    #[test]
    fn probe_zero_level_always_hits() {
        let m = ProcessModel::new(KernelFamily::Brownian, 1.0, 1.0, 1.0).unwrap();
        let spec = ProbeSpec {
            gamma_exp: 0.5,
            ladder: EpsilonLadder::new(vec![0.1]).unwrap(),
            delta: 0.0,
            grid: uniform(4),
            samples: 1000,
            seed: 1,
            exec: Exec::default(),
        };
        let rep = ldp_probe(&m, &LimitLaw::brownian(), &spec).unwrap();
        assert_eq!(rep.rows[0].p_hat, 1.0);
        assert_eq!(rep.rows[0].gamma_sq_log_p, 0.0);
    }
}
