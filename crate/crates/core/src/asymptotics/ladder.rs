use serde::{Deserialize, Serialize};

use crate::conditioning::{cross_cov_increment, GaussianLaw};
use crate::error::{Error, Result};
use crate::models::{ConditioningFunction, CovRoute, ProcessModel};
use crate::numerics::fit_line;
use crate::par::{self, Exec};

/// Default relative tolerance between the last two ladder ratios.
pub const DEFAULT_LADDER_REL_TOL: f64 = 5e-3;

/// Strictly decreasing sequence of small-time scales `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EpsilonLadder {
    values: Vec<f64>,
}

impl EpsilonLadder {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("epsilon ladder is empty".into()));
        }
        if values.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidInput("epsilon values must be positive and finite".into()));
        }
        if values.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidInput("epsilon ladder must be strictly decreasing".into()));
        }
        Ok(EpsilonLadder { values })
    }

    /// `10^{from}, 10^{from - step}, …` down to `10^{to}`.
    pub fn log10_geometric(from: f64, to: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && from > to) {
            return Err(Error::InvalidInput("geometric ladder needs from > to and step > 0".into()));
        }
        let n = ((from - to) / step + 1e-9).floor() as usize;
        EpsilonLadder::new((0..=n).map(|k| 10f64.powf(from - step * k as f64)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn smallest(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Checks that every `ε` is below the horizon.
    pub fn check_against(&self, horizon: f64) -> Result<()> {
        if self.values[0] >= horizon {
            return Err(Error::InvalidInput(format!(
                "largest epsilon {} must be below T = {horizon}",
                self.values[0]
            )));
        }
        Ok(())
    }
}

impl Default for EpsilonLadder {
    /// `10^{-1}, 10^{-1.5}, …, 10^{-4}`.
    fn default() -> Self {
        EpsilonLadder::log10_geometric(-1.0, -4.0, 0.5).expect("valid default ladder")
    }
}

impl TryFrom<Vec<f64>> for EpsilonLadder {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        EpsilonLadder::new(v)
    }
}

impl From<EpsilonLadder> for Vec<f64> {
    fn from(l: EpsilonLadder) -> Vec<f64> {
        l.values
    }
}

/// Qualitative behaviour of a ratio sequence as `ε` decreases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Converged,
    /// Shrinks like a positive power of `ε`.
    Vanishing,
    /// Grows like a negative power of `ε`.
    Divergent,
    Unsettled,
}

/// Ratios along a ladder, with the last one taken as the limit estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderEstimate {
    pub eps: Vec<f64>,
    pub ratios: Vec<f64>,
    pub extrapolated: f64,
    pub converged: bool,
    pub trend: Trend,
}

impl LadderEstimate {
    pub fn from_ratios(eps: Vec<f64>, ratios: Vec<f64>, rel_tol: f64) -> Self {
        let n = ratios.len();
        let extrapolated = ratios[n - 1];
        let converged = n >= 2 && {
            let (a, b) = (ratios[n - 2], ratios[n - 1]);
            (a - b).abs() <= rel_tol * a.abs().max(b.abs())
        };
        let trend = if converged {
            Trend::Converged
        } else {
            classify(&eps, &ratios)
        };
        LadderEstimate {
            eps,
            ratios,
            extrapolated,
            converged,
            trend,
        }
    }

    /// Ratio at the ladder value closest to `eps` in log scale.
    pub fn at(&self, eps: f64) -> f64 {
        let k = self
            .eps
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.ln() - eps.ln()).abs().total_cmp(&(b.1.ln() - eps.ln()).abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        self.ratios[k]
    }
}

fn classify(eps: &[f64], ratios: &[f64]) -> Trend {
    let pairs: Vec<(f64, f64)> = eps
        .iter()
        .zip(ratios)
        .filter(|(_, r)| r.abs() > 0.0 && r.is_finite())
        .map(|(e, r)| (e.ln(), r.abs().ln()))
        .collect();
    if pairs.len() < 3 {
        return Trend::Unsettled;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    match fit_line(&x, &y) {
        Some(f) if f.r2 > 0.9 && f.slope > 0.05 => Trend::Vanishing,
        Some(f) if f.r2 > 0.9 && f.slope < -0.05 => Trend::Divergent,
        _ => Trend::Unsettled,
    }
}

/// Options shared by the ladder estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderOptions {
    pub rel_tol: f64,
    pub route: CovRoute,
    pub exec: Exec,
}

impl Default for LadderOptions {
    fn default() -> Self {
        LadderOptions {
            rel_tol: DEFAULT_LADDER_REL_TOL,
            route: CovRoute::ClosedForm,
            exec: Exec::default(),
        }
    }
}

fn run<F>(ladder: &EpsilonLadder, opts: &LadderOptions, ratio: F) -> Result<LadderEstimate>
where
    F: Fn(f64) -> Result<f64> + Sync + Send,
{
    let eps = ladder.values().to_vec();
    let ratios = par::try_map(eps.len(), opts.exec, |k| ratio(eps[k]))?;
    Ok(LadderEstimate::from_ratios(eps, ratios, opts.rel_tol))
}

fn check_gamma(gamma_exp: f64) -> Result<()> {
    if gamma_exp.is_finite() && gamma_exp > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("gamma_exp must be positive, got {gamma_exp}")))
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// `Cov(X_{T+εt} − X_T, X_{T+εs} − X_T) / ε^{2γ}` along the ladder, for any
/// of the three laws.
pub fn limit_cov_estimate<L: GaussianLaw + ?Sized>(
    law: &L,
    gamma_exp: f64,
    t: f64,
    s: f64,
    ladder: &EpsilonLadder,
    opts: &LadderOptions,
) -> Result<LadderEstimate> {
    check_gamma(gamma_exp)?;
    check_unit("t", t)?;
    check_unit("s", s)?;
    let horizon = law.horizon();
    ladder.check_against(horizon)?;
    run(ladder, opts, |eps| {
        let inc = law.increment_cov_with(opts.route, horizon, horizon + eps * t, horizon + eps * s)?;
        Ok(inc / eps.powf(2.0 * gamma_exp))
    })
}

/// `(r(T+εt) − r(T)) / ε^γ` along the ladder.
pub fn limit_cross_estimate(
    model: &ProcessModel,
    g: &ConditioningFunction,
    gamma_exp: f64,
    t: f64,
    ladder: &EpsilonLadder,
    opts: &LadderOptions,
) -> Result<LadderEstimate> {
    check_gamma(gamma_exp)?;
    check_unit("t", t)?;
    let horizon = model.horizon();
    ladder.check_against(horizon)?;
    g.validate(horizon)?;
    run(ladder, opts, |eps| {
        Ok(cross_cov_increment(model, g, horizon, horizon + eps * t)? / eps.powf(gamma_exp))
    })
}

/// `√ε K(T+εt, T+εs) / ε^γ` along the ladder.
pub fn limit_kernel_estimate(
    model: &ProcessModel,
    gamma_exp: f64,
    t: f64,
    s: f64,
    ladder: &EpsilonLadder,
    opts: &LadderOptions,
) -> Result<LadderEstimate> {
    check_gamma(gamma_exp)?;
    check_unit("t", t)?;
    check_unit("s", s)?;
    if s > t {
        return Err(Error::InvalidInput(format!("kernel limit needs s <= t, got ({t}, {s})")));
    }
    let horizon = model.horizon();
    ladder.check_against(horizon)?;
    run(ladder, opts, |eps| {
        let k = model.kernel(horizon + eps * t, horizon + eps * s)?;
        Ok(eps.sqrt() * k / eps.powf(gamma_exp))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::KernelFamily;

    #[test]
    fn default_ladder() {
        let l = EpsilonLadder::default();
        assert_eq!(l.len(), 7);
        assert_eq!(l.values()[0], 0.1);
        assert!((l.smallest() - 1e-4).abs() < 1e-18);
        assert!(EpsilonLadder::new(vec![0.1, 0.1]).is_err());
        assert!(EpsilonLadder::new(vec![0.1, -0.1]).is_err());
        assert!(l.check_against(0.05).is_err());
    }

    #[test]
    fn fbm_ratio_is_scale_free() {
        let m = ProcessModel::new(KernelFamily::Fbm { hurst: 0.75 }, 1.0, 1.0, 1.0).unwrap();
        let est = limit_cov_estimate(&m, 0.75, 0.8, 0.3, &EpsilonLadder::default(), &Default::default()).unwrap();
        let exact = 0.5 * (0.8f64.powf(1.5) + 0.3f64.powf(1.5) - 0.5f64.powf(1.5));
        for r in &est.ratios {
            assert!((r - exact).abs() < 1e-6);
        }
        assert!(est.converged);
    }

    #[test]
    fn wrong_exponent_is_not_converged() {
        let m = ProcessModel::new(KernelFamily::Fbm { hurst: 0.75 }, 1.0, 1.0, 1.0).unwrap();
        let est = limit_cov_estimate(&m, 0.25, 1.0, 1.0, &EpsilonLadder::default(), &Default::default()).unwrap();
        assert!(!est.converged);
        assert_eq!(est.trend, Trend::Vanishing);
        let est = limit_cov_estimate(&m, 1.0, 1.0, 1.0, &EpsilonLadder::default(), &Default::default()).unwrap();
        assert_eq!(est.trend, Trend::Divergent);
    }

    #[test]
    fn mfold_kernel_ratio_vanishes() {
        let m = ProcessModel::new(KernelFamily::Mfold { m: 1 }, 1.0, 1.0, 1.0).unwrap();
        let est = limit_kernel_estimate(&m, 1.0, 1.0, 0.5, &EpsilonLadder::default(), &Default::default()).unwrap();
        for (e, r) in est.eps.iter().zip(&est.ratios) {
            assert!((r - 0.5 * e.sqrt()).abs() < 1e-10 * r);
        }
        let diag = limit_kernel_estimate(&m, 1.0, 0.5, 0.5, &EpsilonLadder::default(), &Default::default()).unwrap();
        assert!(diag.ratios.iter().all(|r| *r == 0.0));
        assert!(diag.converged);
    }
}
