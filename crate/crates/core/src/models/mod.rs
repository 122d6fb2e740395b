//! Kernel families, conditioning functions and the process model.
//!
//! A [`ProcessModel`] bundles a Volterra kernel with the conditioning horizon
//! `T` and the weights of the observed channel `W = αB + α̃B̃`. Everything
//! downstream (conditional laws, limits, probes) reads its covariance and
//! kernel through this type.

mod gfun;
mod kernel;

pub use gfun::{ConditioningFunction, ConditioningSet};
pub use kernel::{fbm_constant, KernelFamily, MAX_INTEGRATION_DEPTH};

pub(crate) use kernel::Kernel;

use crate::error::{Error, Result};
use crate::numerics::{try_integrate, QuadConfig, Singularity};

/// How covariances are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovRoute {
    /// Closed forms where available, quadrature of the inner covariance otherwise.
    #[default]
    ClosedForm,
    /// `∫ K(t,u) K(s,u) du` by quadrature of the kernel.
    Kernel,
}

/// Volterra process `X_t = ∫ K(t,s) dB_s` observed through `αB + α̃B̃` on `[0, T]`.
#[derive(Debug, Clone)]
pub struct ProcessModel {
    family: KernelFamily,
    horizon: f64,
    alpha: f64,
    alpha_tilde: f64,
    quad: QuadConfig,
    compiled: Kernel,
}

impl ProcessModel {
    pub fn new(family: KernelFamily, horizon: f64, alpha: f64, alpha_tilde: f64) -> Result<Self> {
        family.validate()?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidInput(format!("horizon T must be positive, got {horizon}")));
        }
        if !(alpha.is_finite() && alpha_tilde.is_finite()) {
            return Err(Error::InvalidInput("alpha and alpha_tilde must be finite".into()));
        }
        if alpha * alpha + alpha_tilde * alpha_tilde <= 0.0 {
            return Err(Error::InvalidInput(
                "alpha^2 + alpha_tilde^2 must be positive".into(),
            ));
        }
        let compiled = Kernel::compile(&family);
        let quad = QuadConfig {
            endpoint_power: compiled.endpoint_power(),
            ..QuadConfig::default()
        };
        Ok(ProcessModel {
            family,
            horizon,
            alpha,
            alpha_tilde,
            quad,
            compiled,
        })
    }

    pub fn with_quad(mut self, quad: QuadConfig) -> Self {
        self.quad = QuadConfig {
            endpoint_power: quad.endpoint_power.max(self.compiled.endpoint_power()),
            ..quad
        };
        self
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn alpha_tilde(&self) -> f64 {
        self.alpha_tilde
    }

    pub fn quad(&self) -> &QuadConfig {
        &self.quad
    }

    /// `α² + α̃²`, the variance rate of the observed channel.
    pub fn noise_scale(&self) -> f64 {
        self.alpha * self.alpha + self.alpha_tilde * self.alpha_tilde
    }

    /// `α² / (α² + α̃²)`.
    pub fn beta(&self) -> f64 {
        self.alpha * self.alpha / self.noise_scale()
    }

    /// Endpoint behaviour of `u ↦ K(t,u)`, used as a quadrature hint.
    pub fn singularity(&self) -> Singularity {
        self.compiled.singularity()
    }

    /// `K(t, s)`; zero for `s > t`.
    pub fn kernel(&self, t: f64, s: f64) -> Result<f64> {
        check_time(t)?;
        check_time(s)?;
        self.compiled.eval(t, s, &self.quad)
    }

    /// `k(t, s) = ∫ K(t,u) K(s,u) du`.
    pub fn covariance(&self, t: f64, s: f64) -> Result<f64> {
        check_time(t)?;
        check_time(s)?;
        covariance_closed(&self.family, t, s, &self.quad)
    }

    /// Covariance by quadrature of the kernel product.
    pub fn covariance_by_kernel(&self, t: f64, s: f64) -> Result<f64> {
        check_time(t)?;
        check_time(s)?;
        let hi = t.min(s);
        if hi == 0.0 {
            return Ok(0.0);
        }
        let r = try_integrate(
            |u| Ok::<_, Error>(self.compiled.eval(t, u, &self.quad)? * self.compiled.eval(s, u, &self.quad)?),
            0.0,
            hi,
            &[],
            self.hint(),
            &self.quad,
        )?;
        Ok(r.value)
    }

    pub fn covariance_with(&self, route: CovRoute, t: f64, s: f64) -> Result<f64> {
        match route {
            CovRoute::ClosedForm => self.covariance(t, s),
            CovRoute::Kernel => self.covariance_by_kernel(t, s),
        }
    }

    /// `Cov(X_t − X_b, X_s − X_b)` for `t, s ≥ b`.
    ///
    /// The kernel route integrates the kernel increments directly, which keeps
    /// full relative accuracy when `t − b` and `s − b` are tiny.
    pub fn increment_covariance(&self, route: CovRoute, base: f64, t: f64, s: f64) -> Result<f64> {
        check_time(base)?;
        if t < base || s < base {
            return Err(Error::InvalidInput(format!(
                "increment times ({t}, {s}) precede the base time {base}"
            )));
        }
        match route {
            CovRoute::ClosedForm => {
                let k = |a, b| self.covariance(a, b);
                Ok(k(t, s)? - k(t, base)? - k(s, base)? + k(base, base)?)
            }
            CovRoute::Kernel => {
                let hint = self.hint();
                let head = if base > 0.0 {
                    try_integrate(
                        |u| {
                            let kb = self.compiled.eval(base, u, &self.quad)?;
                            let dt = self.compiled.eval(t, u, &self.quad)? - kb;
                            let ds = self.compiled.eval(s, u, &self.quad)? - kb;
                            Ok::<_, Error>(dt * ds)
                        },
                        0.0,
                        base,
                        &[],
                        hint,
                        &self.quad,
                    )?
                    .value
                } else {
                    0.0
                };
                let hi = t.min(s);
                let tail = if hi > base {
                    self.kernel_product_integral(t, s, base, hi)?
                } else {
                    0.0
                };
                Ok(head + tail)
            }
        }
    }

    /// `∫_a^b K(t,u) K(s,u) du`.
    pub fn kernel_product_integral(&self, t: f64, s: f64, a: f64, b: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        if a <= 0.0 && b >= t.min(s) {
            return self.covariance(t, s);
        }
        let r = try_integrate(
            |u| Ok::<_, Error>(self.compiled.eval(t, u, &self.quad)? * self.compiled.eval(s, u, &self.quad)?),
            a,
            b,
            &[],
            self.hint(),
            &self.quad,
        )?;
        Ok(r.value)
    }

    pub(crate) fn hint(&self) -> Singularity {
        match self.compiled.singularity() {
            Singularity::None => Singularity::None,
            _ => Singularity::Both,
        }
    }

    pub(crate) fn compiled(&self) -> &Kernel {
        &self.compiled
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("time must be finite and nonnegative, got {t}")))
    }
}

fn covariance_closed(family: &KernelFamily, t: f64, s: f64, quad: &QuadConfig) -> Result<f64> {
    if let Some(m) = family.polynomial_order() {
        return Ok(kernel::polynomial_covariance(m, t, s));
    }
    match family {
        KernelFamily::Fbm { hurst } => Ok(kernel::fbm_covariance(*hurst, t, s)),
        KernelFamily::Integrated { inner } => match inner.as_ref() {
            KernelFamily::Fbm { hurst } => Ok(integrated_fbm_covariance(*hurst, t, s)),
            deeper => kernel::integrated_covariance(|u, v| covariance_closed(deeper, u, v, quad), t, s, quad),
        },
        _ => unreachable!("polynomial families are handled above"),
    }
}

/// `∫_0^t ∫_0^s k_H(u, v) dv du` in closed form.
fn integrated_fbm_covariance(hurst: f64, t: f64, s: f64) -> f64 {
    let p = 2.0 * hurst;
    let cross = (s * t.powf(p + 1.0) + t * s.powf(p + 1.0)) / (2.0 * (p + 1.0));
    let gap = (t.powf(p + 2.0) + s.powf(p + 2.0) - (t - s).abs().powf(p + 2.0))
        / (2.0 * (p + 1.0) * (p + 2.0));
    cross - gap
}

/// Pointwise kernel evaluation, `K(t, s)`.
pub fn kernel_eval(model: &ProcessModel, t: f64, s: f64) -> Result<f64> {
    model.kernel(t, s)
}

pub fn conditioning_fn_eval(g: &ConditioningFunction, t: f64, horizon: f64) -> f64 {
    g.eval(t, horizon)
}

/// Numerical Hölder modulus `M(δ)` with the pair grid that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderModulus {
    pub value: f64,
    pub delta: f64,
    /// Left end `t` of the maximizing pair `(t, t + δ)`.
    pub argmax: f64,
    /// Number of uniformly spaced pairs `(t, t + δ)`, `t ∈ [0, T − δ]`.
    pub resolution: usize,
}

/// `sup ∫_0^T (K(t₂,s) − K(t₁,s))² ds` over uniformly spaced pairs with
/// `t₂ − t₁ = δ`.
pub fn holder_modulus(model: &ProcessModel, delta: f64, resolution: usize) -> Result<HolderModulus> {
    let horizon = model.horizon();
    if !(delta > 0.0 && delta <= horizon) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, T], got {delta}")));
    }
    if resolution == 0 {
        return Err(Error::InvalidInput("resolution must be positive".into()));
    }
    let span = horizon - delta;
    let starts: Vec<f64> = if resolution == 1 {
        vec![span]
    } else {
        (0..resolution)
            .map(|i| span * i as f64 / (resolution - 1) as f64)
            .collect()
    };
    let values = crate::par::try_map(starts.len(), Default::default(), |i| {
        let t1 = starts[i];
        let t2 = (t1 + delta).min(horizon);
        squared_kernel_gap(model, t1, t2)
    })?;
    let (k, &value) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least one pair");
    Ok(HolderModulus {
        value,
        delta,
        argmax: starts[k],
        resolution,
    })
}

/// `∫ (K(t₂,s) − K(t₁,s))² ds` for `t₁ ≤ t₂`.
pub(crate) fn squared_kernel_gap(model: &ProcessModel, t1: f64, t2: f64) -> Result<f64> {
    let hint = model.hint();
    let quad = model.quad();
    let k = model.compiled();
    let head = if t1 > 0.0 {
        try_integrate(
            |u| {
                let d = k.eval(t2, u, quad)? - k.eval(t1, u, quad)?;
                Ok::<_, Error>(d * d)
            },
            0.0,
            t1,
            &[],
            hint,
            quad,
        )?
        .value
    } else {
        0.0
    };
    let tail = if t2 > t1 {
        try_integrate(
            |u| {
                let v = k.eval(t2, u, quad)?;
                Ok::<_, Error>(v * v)
            },
            t1,
            t2,
            &[],
            hint,
            quad,
        )?
        .value
    } else {
        0.0
    };
    Ok(head + tail)
}
