use super::GaussianLaw;
use crate::error::{Error, Result};
use crate::models::{CovRoute, ProcessModel};
use crate::numerics::try_integrate;

/// Law of `X` given the observed path `ψ` of `W` on `[0, T]`.
#[derive(Debug, Clone)]
pub struct PathConditionalLaw {
    model: ProcessModel,
    grid: Vec<f64>,
    psi: Vec<f64>,
}

impl PathConditionalLaw {
    pub fn new(model: ProcessModel, grid: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        let horizon = model.horizon();
        if grid.len() < 2 || grid.len() != psi.len() {
            return Err(Error::InvalidInput(format!(
                "observed path needs matching grid and values with at least two points, got {} and {}",
                grid.len(),
                psi.len()
            )));
        }
        if grid[0] != 0.0 {
            return Err(Error::InvalidInput("observed path grid must start at 0".into()));
        }
        if (grid[grid.len() - 1] - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "observed path grid must end at T = {horizon}"
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("observed path grid must be strictly increasing".into()));
        }
        if psi[0] != 0.0 {
            return Err(Error::InvalidInput("observed path must start at 0".into()));
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("observed path values must be finite".into()));
        }
        Ok(PathConditionalLaw { model, grid, psi })
    }

    /// A law with no data attached, for covariance-only work.
    pub fn covariance_only(model: ProcessModel) -> Self {
        let horizon = model.horizon();
        PathConditionalLaw {
            model,
            grid: vec![0.0, horizon],
            psi: vec![0.0, 0.0],
        }
    }

    pub fn model(&self) -> &ProcessModel {
        &self.model
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// Kernel weight of the cell `[a, b]`: `K(t, a)`, or the cell average of
    /// `K(t, ·)` when the kernel blows up at `a`.
    fn cell_weight(&self, t: f64, a: f64, b: f64) -> Result<f64> {
        let v = self.model.kernel(t, a)?;
        if v.is_finite() {
            return Ok(v);
        }
        let hi = b.min(t);
        if hi <= a {
            return Ok(0.0);
        }
        let k = self.model.compiled();
        let r = try_integrate(
            |u| k.eval(t, u, self.model.quad()),
            a,
            hi,
            &[],
            self.model.hint(),
            self.model.quad(),
        )?;
        Ok(r.value / (b - a))
    }

    /// Covariance straight from the integral form
    /// `∫_0^{t∧s} (1 − β 1_{u≤T})² K(t,u)K(s,u) du + β(1−β) ∫_0^T K(t,u)K(s,u) du`.
    pub fn cov_general(&self, t: f64, s: f64) -> Result<f64> {
        let beta = self.model.beta();
        let horizon = self.model.horizon();
        let hi = t.min(s);
        let inside = self.model.kernel_product_integral(t, s, 0.0, hi.min(horizon))?;
        let outside = if hi > horizon {
            self.model.kernel_product_integral(t, s, horizon, hi)?
        } else {
            0.0
        };
        Ok((1.0 - beta).powi(2) * inside + outside + beta * (1.0 - beta) * inside)
    }

    /// Covariance for `t ∧ s ≥ T`:
    /// `β ∫_T^{t∧s} K(t,v)K(s,v) dv + (1 − β) k(t,s)`.
    pub fn cov_after_horizon(&self, t: f64, s: f64) -> Result<f64> {
        let beta = self.model.beta();
        let horizon = self.model.horizon();
        if t.min(s) < horizon {
            return Err(Error::InvalidInput(format!(
                "times ({t}, {s}) must both be at least T = {horizon}"
            )));
        }
        let tail = self.model.kernel_product_integral(t, s, horizon, t.min(s))?;
        Ok(beta * tail + (1.0 - beta) * self.model.covariance(t, s)?)
    }

}

impl GaussianLaw for PathConditionalLaw {
    fn horizon(&self) -> f64 {
        self.model.horizon()
    }

    /// For `t, s ≥ b ≥ T`: `Δk − β ∫_0^T (K(t,v) − K(b,v))(K(s,v) − K(b,v)) dv`.
    fn increment_cov_with(&self, route: CovRoute, base: f64, t: f64, s: f64) -> Result<f64> {
        let horizon = self.model.horizon();
        if base < horizon {
            let cov = |a, b| self.cov(a, b);
            return Ok(cov(t, s)? - cov(t, base)? - cov(s, base)? + cov(base, base)?);
        }
        let dk = self.model.increment_covariance(route, base, t, s)?;
        let beta = self.model.beta();
        if beta == 0.0 {
            return Ok(dk);
        }
        let k = self.model.compiled();
        let quad = self.model.quad();
        let r = try_integrate(
            |u| {
                let kb = k.eval(base, u, quad)?;
                Ok::<_, Error>((k.eval(t, u, quad)? - kb) * (k.eval(s, u, quad)? - kb))
            },
            0.0,
            horizon,
            &[],
            self.model.hint(),
            quad,
        )?;
        Ok(dk - beta * r.value)
    }

    /// `β Σⱼ K(t, uⱼ)(ψ(uⱼ₊₁) − ψ(uⱼ))`.
    fn mean(&self, t: f64) -> Result<f64> {
        let beta = self.model.beta();
        if beta == 0.0 {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for j in 0..self.grid.len() - 1 {
            let (a, b) = (self.grid[j], self.grid[j + 1]);
            if a > t {
                break;
            }
            let dpsi = self.psi[j + 1] - self.psi[j];
            if dpsi != 0.0 {
                acc += self.cell_weight(t, a, b)? * dpsi;
            }
        }
        Ok(beta * acc)
    }

    fn cov(&self, t: f64, s: f64) -> Result<f64> {
        if t.min(s) >= self.model.horizon() {
            self.cov_after_horizon(t, s)
        } else {
            self.cov_general(t, s)
        }
    }

    fn describe(&self) -> String {
        format!(
            "{:?} conditioned on an observed path with {} points",
            self.model.family(),
            self.grid.len()
        )
    }
}
