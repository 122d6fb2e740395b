use serde::Serialize;

use super::ladder::EpsilonLadder;
use crate::conditioning::{cross_cov_increment, GaussianLaw};
use crate::error::{Error, Result};
use crate::models::{ConditioningSet, ProcessModel};
use crate::numerics::{fit_line, try_integrate};
use crate::par::{self, Exec};

/// Log-log fit of `Var(X_{T+ε} − X_T)` against `ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedFit {
    pub slope: f64,
    pub r2: f64,
    pub eps: Vec<f64>,
    pub variances: Vec<f64>,
}

pub fn speed_exponent_fit<L: GaussianLaw + ?Sized>(law: &L, ladder: &EpsilonLadder) -> Result<SpeedFit> {
    if ladder.len() < 3 {
        return Err(Error::InvalidInput("speed fit needs at least three ladder values".into()));
    }
    let horizon = law.horizon();
    let eps = ladder.values().to_vec();
    let variances = par::try_map(eps.len(), Exec::default(), |k| {
        let t = horizon + eps[k];
        law.increment_cov(horizon, t, t)
    })?;
    if let Some((e, v)) = eps.iter().zip(&variances).find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::DegenerateVariance(format!("increment variance {v} at epsilon {e}")));
    }
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
    let fit = fit_line(&x, &y).ok_or_else(|| Error::DegenerateVariance("fit failed".into()))?;
    Ok(SpeedFit {
        slope: fit.slope,
        r2: fit.r2,
        eps,
        variances,
    })
}

/// Which sup-ratio is profiled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TightnessStatistic {
    /// `Var(X_{T+εt} − X_{T+εs}) / (γ² |t−s|^{2τ})`.
    Variance,
    /// `maxᵢ |rᵢ(T+εt) − rᵢ(T+εs)| / (γ |t−s|^{τ})`.
    Cross,
    /// `ε ∫_0^t (K(T+εt,T+εu) − K(T+εs,T+εu))² du / (γ² |t−s|^{2τ})`.
    PathKernel,
}

/// Sup of a tightness ratio over grid pairs at each ladder value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessProfile {
    pub statistic: TightnessStatistic,
    pub tau: f64,
    pub eps: Vec<f64>,
    pub sup: Vec<f64>,
    /// Slope of `log sup` against `log ε`; negative values mean growth as `ε → 0`.
    pub slope: f64,
}

impl TightnessProfile {
    pub fn bounded(&self, min_slope: f64) -> bool {
        self.slope >= min_slope && self.sup.iter().all(|v| v.is_finite())
    }
}

/// `n` equally spaced points on `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn pairs(grid: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (i, &s) in grid.iter().enumerate() {
        for &t in &grid[i + 1..] {
            out.push((s, t));
        }
    }
    out
}

fn finish(statistic: TightnessStatistic, tau: f64, eps: Vec<f64>, sup: Vec<f64>) -> Result<TightnessProfile> {
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = sup.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let slope = fit_line(&x, &y).map(|f| f.slope).unwrap_or(0.0);
    Ok(TightnessProfile {
        statistic,
        tau,
        eps,
        sup,
        slope,
    })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] < 0.0 || grid[grid.len() - 1] > 1.0 {
        return Err(Error::InvalidInput("tightness grid must be increasing in [0, 1] with two or more points".into()));
    }
    Ok(())
}

pub fn variance_tightness<L: GaussianLaw + ?Sized>(
    law: &L,
    gamma_exp: f64,
    tau: f64,
    grid: &[f64],
    ladder: &EpsilonLadder,
) -> Result<TightnessProfile> {
    check_grid(grid)?;
    let horizon = law.horizon();
    let pp = pairs(grid);
    let eps = ladder.values().to_vec();
    let sup = par::try_map(eps.len(), Exec::default(), |k| {
        let e = eps[k];
        let times: Vec<(f64, f64)> = pp.iter().map(|&(s, t)| (horizon + e * s, horizon + e * t)).collect();
        let vars = law.pair_increment_variances(horizon, &times)?;
        let mut best: f64 = 0.0;
        for (&(s, t), v) in pp.iter().zip(vars) {
            best = best.max(v / (e.powf(2.0 * gamma_exp) * (t - s).powf(2.0 * tau)));
        }
        Ok(best)
    })?;
    finish(TightnessStatistic::Variance, tau, eps, sup)
}

pub fn cross_tightness(
    model: &ProcessModel,
    gset: &ConditioningSet,
    gamma_exp: f64,
    tau: f64,
    grid: &[f64],
    ladder: &EpsilonLadder,
) -> Result<TightnessProfile> {
    check_grid(grid)?;
    let horizon = model.horizon();
    let eps = ladder.values().to_vec();
    let sup = par::try_map(eps.len(), Exec::default(), |k| {
        let e = eps[k];
        // Increments from T at every grid point, then pairwise differences.
        let mut incs = Vec::with_capacity(gset.len());
        for g in &gset.functions {
            let row: Result<Vec<f64>> = grid
                .iter()
                .map(|&u| cross_cov_increment(model, g, horizon, horizon + e * u))
                .collect();
            incs.push(row?);
        }
        let mut best: f64 = 0.0;
        for row in &incs {
            for (i, &s) in grid.iter().enumerate() {
                for (j, &t) in grid.iter().enumerate().skip(i + 1) {
                    let d = (row[j] - row[i]).abs();
                    best = best.max(d / (e.powf(gamma_exp) * (t - s).powf(tau)));
                }
            }
        }
        Ok(best)
    })?;
    finish(TightnessStatistic::Cross, tau, eps, sup)
}

/// Kernel-difference ratio of the path-conditioned family, written in the
/// original time variable: `∫_T^{T+εt} (K(T+εt,v) − K(T+εs,v))² dv`.
pub fn path_kernel_tightness(
    model: &ProcessModel,
    gamma_exp: f64,
    tau: f64,
    grid: &[f64],
    ladder: &EpsilonLadder,
) -> Result<TightnessProfile> {
    check_grid(grid)?;
    let horizon = model.horizon();
    let pp = pairs(grid);
    let eps = ladder.values().to_vec();
    let k = model.compiled();
    let quad = model.quad();
    let sup = par::try_map(eps.len(), Exec::default(), |idx| {
        let e = eps[idx];
        let mut best: f64 = 0.0;
        for &(s, t) in &pp {
            let (a, b) = (horizon + e * t, horizon + e * s);
            let cut = [b];
            let v = try_integrate(
                |v| {
                    let d = k.eval(a, v, quad)? - k.eval(b, v, quad)?;
                    Ok::<_, Error>(d * d)
                },
                horizon,
                a,
                &cut,
                model.hint(),
                quad,
            )?
            .value;
            best = best.max(v / (e.powf(2.0 * gamma_exp) * (t - s).powf(2.0 * tau)));
        }
        Ok(best)
    })?;
    finish(TightnessStatistic::PathKernel, tau, eps, sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::KernelFamily;

    #[test]
    fn brownian_speed() {
        let m = ProcessModel::new(KernelFamily::Brownian, 1.0, 1.0, 1.0).unwrap();
        let f = speed_exponent_fit(&m, &EpsilonLadder::default()).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fbm_variance_ratio_is_one() {
        let m = ProcessModel::new(KernelFamily::Fbm { hurst: 0.7 }, 1.0, 1.0, 1.0).unwrap();
        let ladder = EpsilonLadder::new(vec![0.1, 0.01]).unwrap();
        let p = variance_tightness(&m, 0.7, 0.7, &unit_grid(5), &ladder).unwrap();
        for v in &p.sup {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }
}
