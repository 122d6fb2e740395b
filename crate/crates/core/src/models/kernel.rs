use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta, beta_reg};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::numerics::{try_integrate, QuadConfig, Singularity};

/// Maximum number of stacked `Integrated` layers.
pub const MAX_INTEGRATION_DEPTH: usize = 2;

/// Volterra kernel families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFamily {
    /// `K(t,s) = 1_{[0,t]}(s)`.
    Brownian,
    /// Molchan–Golosov representation of fractional Brownian motion.
    Fbm { hurst: f64 },
    /// `m`-fold integrated Brownian motion, `K(t,u) = (t-u)^m / m!`.
    Mfold { m: u32 },
    /// Time integral of a Volterra process, `h(t,s) = ∫_s^t K(u,s) du`.
    Integrated { inner: Box<KernelFamily> },
}

impl KernelFamily {
    pub fn integration_depth(&self) -> usize {
        match self {
            KernelFamily::Integrated { inner } => 1 + inner.integration_depth(),
            _ => 0,
        }
    }

    /// `Some(m)` when the kernel equals `(t-u)^m / m!`.
    pub fn polynomial_order(&self) -> Option<u32> {
        match self {
            KernelFamily::Brownian => Some(0),
            KernelFamily::Mfold { m } => Some(*m),
            KernelFamily::Integrated { inner } => inner.polynomial_order().map(|m| m + 1),
            KernelFamily::Fbm { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelFamily::Brownian => Ok(()),
            KernelFamily::Fbm { hurst } => {
                if hurst.is_finite() && *hurst > 0.0 && *hurst < 1.0 {
                    Ok(())
                } else {
                    Err(Error::UnsupportedParameter(format!(
                        "Hurst index must lie in (0, 1), got {hurst}"
                    )))
                }
            }
            KernelFamily::Mfold { m } => {
                if *m >= 1 {
                    Ok(())
                } else {
                    Err(Error::UnsupportedParameter(
                        "m-fold integrated Brownian motion needs m >= 1".into(),
                    ))
                }
            }
            KernelFamily::Integrated { inner } => {
                if self.integration_depth() > MAX_INTEGRATION_DEPTH {
                    return Err(Error::UnsupportedParameter(format!(
                        "integrated kernels nest at most {MAX_INTEGRATION_DEPTH} levels"
                    )));
                }
                inner.validate()
            }
        }
    }
}

/// `c_H = (2H Γ(3/2-H) / (Γ(H+1/2) Γ(2-2H)))^{1/2}`.
pub fn fbm_constant(hurst: f64) -> f64 {
    (2.0 * hurst * gamma(1.5 - hurst) / (gamma(hurst + 0.5) * gamma(2.0 - 2.0 * hurst))).sqrt()
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

/// Evaluation form of a [`KernelFamily`] with its constants precomputed.
#[derive(Debug, Clone)]
pub(crate) enum Kernel {
    Brownian,
    Fbm { hurst: f64, c_h: f64 },
    Mfold { m: i32, inv_fact: f64 },
    Integrated(Box<Kernel>),
}

impl Kernel {
    pub(crate) fn compile(family: &KernelFamily) -> Kernel {
        match family {
            KernelFamily::Brownian => Kernel::Brownian,
            KernelFamily::Fbm { hurst } => Kernel::Fbm {
                hurst: *hurst,
                c_h: fbm_constant(*hurst),
            },
            KernelFamily::Mfold { m } => Kernel::Mfold {
                m: *m as i32,
                inv_fact: 1.0 / factorial(*m),
            },
            KernelFamily::Integrated { inner } => Kernel::Integrated(Box::new(Kernel::compile(inner))),
        }
    }

    /// Endpoint behaviour of `u ↦ K(t,u)` on `[0, t]`.
    pub(crate) fn singularity(&self) -> Singularity {
        match self {
            Kernel::Brownian | Kernel::Mfold { .. } => Singularity::None,
            Kernel::Fbm { hurst, .. } if *hurst == 0.5 => Singularity::None,
            Kernel::Fbm { .. } => Singularity::Both,
            Kernel::Integrated(inner) => inner.singularity(),
        }
    }

    /// Smallest endpoint substitution power that keeps products of two
    /// kernels bounded near their singular ends.
    pub(crate) fn endpoint_power(&self) -> u32 {
        match self {
            Kernel::Fbm { hurst, .. } => {
                let gamma = (2.0 * hurst - 1.0).abs();
                ((1.0 / (1.0 - gamma)).ceil() as u32).clamp(2, 8)
            }
            Kernel::Integrated(inner) => inner.endpoint_power(),
            _ => 2,
        }
    }

    pub(crate) fn eval(&self, t: f64, s: f64, quad: &QuadConfig) -> Result<f64> {
        if s > t {
            return Ok(0.0);
        }
        match self {
            Kernel::Brownian => Ok(1.0),
            Kernel::Mfold { m, inv_fact } => Ok((t - s).powi(*m) * inv_fact),
            Kernel::Fbm { hurst, c_h } => Ok(fbm_kernel(*hurst, *c_h, t, s)),
            Kernel::Integrated(inner) => {
                if s == t {
                    return Ok(0.0);
                }
                let inner_quad = quad.tightened(1e-2);
                let hint = match inner.singularity() {
                    Singularity::None => Singularity::None,
                    _ => Singularity::Left,
                };
                let r = try_integrate(|u| inner.eval(u, s, &inner_quad), s, t, &[], hint, quad)?;
                Ok(r.value)
            }
        }
    }
}

fn fbm_kernel(hurst: f64, c_h: f64, t: f64, s: f64) -> f64 {
    if s == t {
        return if hurst > 0.5 {
            0.0
        } else if hurst == 0.5 {
            1.0
        } else {
            f64::INFINITY
        };
    }
    if s == 0.0 {
        return if hurst == 0.5 { 1.0 } else { f64::INFINITY };
    }
    let a = hurst - 0.5;
    let lead = ((t / s) * (t - s)).powf(a);
    if a == 0.0 {
        return c_h * lead;
    }
    // s^{-a} ∫_s^t u^{H-3/2} (u-s)^{H-1/2} du = s^{H-1/2} ∫_{s/t}^1 v^{-2H} (1-v)^{H-1/2} dv.
    c_h * (lead - a * s.powf(a) * upper_beta_tail(s / t, -2.0 * hurst, a))
}

/// `∫_x^1 v^p (1-v)^q dv` for `p ∈ (-2, 0)`, `p ≠ -1`, `q > -1`.
///
/// Two integration-by-parts steps `I(p) = -x^{p+1}(1-x)^{q+1}/(p+1) +
/// (p+q+2)/(p+1) I(p+1)` reach a positive exponent, where the regularized
/// incomplete beta function applies.
fn upper_beta_tail(x: f64, p: f64, q: f64) -> f64 {
    let step = |p: f64| -x.powf(p + 1.0) * (1.0 - x).powf(q + 1.0) / (p + 1.0);
    let grow = |p: f64| (p + q + 2.0) / (p + 1.0);
    let p2 = p + 2.0;
    let base = beta(p2 + 1.0, q + 1.0) * (1.0 - beta_reg(p2 + 1.0, q + 1.0, x));
    let one = step(p + 1.0) + grow(p + 1.0) * base;
    step(p) + grow(p) * one
}

/// Closed-form covariance of `(t-u)^m / m!` kernels.
pub(crate) fn polynomial_covariance(m: u32, t: f64, s: f64) -> f64 {
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    let gap = hi - lo;
    let mi = m as i32;
    let mut acc = 0.0;
    let mut binom = 1.0;
    for j in 0..=mi {
        acc += binom * gap.powi(mi - j) * lo.powi(mi + j + 1) / f64::from(mi + j + 1);
        binom = binom * f64::from(mi - j) / f64::from(j + 1);
    }
    let f = factorial(m);
    acc / (f * f)
}

pub(crate) fn fbm_covariance(hurst: f64, t: f64, s: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
}

/// `∫_0^t ∫_0^s k(u, v) dv du` for the integrated process of a kernel whose
/// covariance is not polynomial.
pub(crate) fn integrated_covariance<F>(inner_cov: F, t: f64, s: f64, quad: &QuadConfig) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let inner_quad = quad.tightened(1e-2);
    let r = try_integrate(
        |u| {
            try_integrate(|v| inner_cov(u, v), 0.0, s, &[u], Singularity::None, &inner_quad)
                .map(|r| r.value)
        },
        0.0,
        t,
        &[],
        Singularity::None,
        quad,
    )?;
    Ok(r.value)
}
