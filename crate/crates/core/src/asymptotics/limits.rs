use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditioning::{functional_gram, DEFAULT_CONDITION_BOUND};
use crate::error::{Error, Result};
use crate::models::{fbm_constant, ConditioningFunction, ConditioningSet, KernelFamily, ProcessModel};
use crate::numerics::{default_jitter_base, integrate_hinted, spd_factor, try_integrate, GramMatrix, QuadConfig, Singularity};

/// Which conditioning the limit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    /// Unconditioned increments.
    Base,
    /// Given finitely many functionals of the noisy path.
    Functional,
    /// Given the whole noisy path up to `T`.
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    LadderExtrapolated,
}

/// Coefficients of the path-conditioned limit `w_K ∫K̄K̄ + w_k k̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathCoefficients {
    /// `w_K = α²/(α²+α̃²)`, `w_k = α̃²/(α²+α̃²)`.
    #[default]
    Derived,
    /// `w_K = w_k = α̃²/(α²+α̃²)`.
    Literal,
}

impl PathCoefficients {
    pub fn from_literal_flag(literal: bool) -> Self {
        if literal {
            PathCoefficients::Literal
        } else {
            PathCoefficients::Derived
        }
    }

    /// `(w_K, w_k)` for signal fraction `β = α²/(α²+α̃²)`.
    pub fn weights(self, beta: f64) -> (f64, f64) {
        match self {
            PathCoefficients::Derived => (beta, 1.0 - beta),
            PathCoefficients::Literal => (1.0 - beta, 1.0 - beta),
        }
    }
}

/// Limit covariance functions on `[0,1]²`.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitCovariance {
    /// `scale · min(t, s)`.
    Brownian { scale: f64 },
    /// `½(t^{2H} + s^{2H} − |t−s|^{2H})`.
    Fbm { hurst: f64 },
    /// `scale · t s`.
    RankOne { scale: f64 },
    /// `w_K c_H² ∫_0^{t∧s} (t−u)^{H−½}(s−u)^{H−½} du + w_k · fBm covariance`.
    FbmPath {
        hurst: f64,
        kernel_weight: f64,
        cov_weight: f64,
    },
    /// Values on a grid, as produced by ladder extrapolation; evaluable only
    /// at grid points.
    Tabulated { grid: Vec<f64>, values: DMatrix<f64> },
}

impl LimitCovariance {
    pub fn eval(&self, t: f64, s: f64) -> Result<f64> {
        match self {
            LimitCovariance::Brownian { scale } => Ok(scale * t.min(s)),
            LimitCovariance::Fbm { hurst } => Ok(fbm_cov(*hurst, t, s)),
            LimitCovariance::RankOne { scale } => Ok(scale * t * s),
            LimitCovariance::FbmPath {
                hurst,
                kernel_weight,
                cov_weight,
            } => {
                let c = fbm_constant(*hurst);
                let kk = if *kernel_weight == 0.0 {
                    0.0
                } else {
                    c * c * stationary_kernel_product(*hurst, t, s)?
                };
                Ok(kernel_weight * kk + cov_weight * fbm_cov(*hurst, t, s))
            }
            LimitCovariance::Tabulated { grid, values } => {
                let find = |x: f64| {
                    grid.iter()
                        .position(|g| (g - x).abs() <= 1e-12)
                        .ok_or_else(|| Error::InvalidInput(format!("{x} is not a point of the tabulated limit grid")))
                };
                Ok(values[(find(t)?, find(s)?)])
            }
        }
    }
}

fn fbm_cov(hurst: f64, t: f64, s: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
}

/// `∫_0^{t∧s} (t−u)^{H−½}(s−u)^{H−½} du`.
fn stationary_kernel_product(hurst: f64, t: f64, s: f64) -> Result<f64> {
    let lo = t.min(s);
    if lo <= 0.0 {
        return Ok(0.0);
    }
    let a = hurst - 0.5;
    if t == s {
        return Ok(t.powf(2.0 * hurst) / (2.0 * hurst));
    }
    let r = integrate_hinted(
        |u| (t - u).powf(a) * (s - u).powf(a),
        0.0,
        lo,
        Singularity::Right,
        &QuadConfig::with_tol(1e-12),
    )?;
    Ok(r.value)
}

/// Limit of `√ε K(T+εt, T+εs) / γ_ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelLimit {
    Zero,
    /// `1_{s ≤ t}`.
    Unit,
    /// `c_H (t − s)^{H−½}`.
    Fbm { hurst: f64, c_h: f64 },
}

impl KernelLimit {
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        if s > t {
            return 0.0;
        }
        match self {
            KernelLimit::Zero => 0.0,
            KernelLimit::Unit => 1.0,
            KernelLimit::Fbm { hurst, c_h } => c_h * (t - s).powf(hurst - 0.5),
        }
    }
}

/// Speed exponent and limit covariance of one family of rescaled increments.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitLaw {
    /// `γ_ε = ε^{gamma_exp}`.
    pub gamma_exp: f64,
    pub kind: LimitKind,
    pub provenance: Provenance,
    pub cov: LimitCovariance,
}

impl LimitLaw {
    pub fn kbar(&self, t: f64, s: f64) -> Result<f64> {
        self.cov.eval(t, s)
    }

    pub fn gram(&self, grid: &[f64]) -> Result<GramMatrix> {
        GramMatrix::assemble(grid, |t, s| self.kbar(t, s))
    }

    /// The unit Brownian limit, `k̄ = min(t,s)` with `γ_ε = √ε`.
    pub fn brownian() -> Self {
        LimitLaw {
            gamma_exp: 0.5,
            kind: LimitKind::Base,
            provenance: Provenance::ClosedForm,
            cov: LimitCovariance::Brownian { scale: 1.0 },
        }
    }

    pub fn rank_one(scale: f64, gamma_exp: f64, kind: LimitKind) -> Self {
        LimitLaw {
            gamma_exp,
            kind,
            provenance: Provenance::ClosedForm,
            cov: LimitCovariance::RankOne { scale },
        }
    }
}

/// `k̄^g(t,s) = k̄(t,s) − r̄(t)ᵀ C⁻¹ r̄(s)`.
pub fn limit_cov_functional<K, R>(kbar: K, rbar: R, cg: &DMatrix<f64>, t: f64, s: f64) -> Result<f64>
where
    K: Fn(f64, f64) -> Result<f64>,
    R: Fn(f64) -> Result<DVector<f64>>,
{
    check_condition(cg)?;
    let f = spd_factor(cg, default_jitter_base(cg))?;
    let rt = rbar(t)?;
    let rs = rbar(s)?;
    if rt.len() != cg.nrows() || rs.len() != cg.nrows() {
        return Err(Error::DimensionMismatch {
            expected: cg.nrows(),
            found: rt.len(),
        });
    }
    Ok(kbar(t, s)? - rt.dot(&f.solve(&rs)))
}

fn check_condition(cg: &DMatrix<f64>) -> Result<()> {
    let eig = nalgebra::SymmetricEigen::new(cg.clone()).eigenvalues;
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition <= DEFAULT_CONDITION_BOUND {
        Ok(())
    } else {
        Err(Error::NearSingularGram {
            condition,
            bound: DEFAULT_CONDITION_BOUND,
        })
    }
}

/// `Ῡ(t,s) = w_K ∫_0^{t∧s} K̄(t,u)K̄(s,u) du + w_k k̄(t,s)`, the weights set by
/// `coefficients`.
pub fn limit_cov_path<K, KB>(
    model: &ProcessModel,
    kbar: K,
    kernel_limit: KB,
    t: f64,
    s: f64,
    coefficients: PathCoefficients,
) -> Result<f64>
where
    K: Fn(f64, f64) -> Result<f64>,
    KB: Fn(f64, f64) -> f64,
{
    let (wk, wc) = coefficients.weights(model.beta());
    let lo = t.min(s);
    let kk = if lo > 0.0 && wk != 0.0 {
        try_integrate(
            |u| Ok::<_, Error>(kernel_limit(t, u) * kernel_limit(s, u)),
            0.0,
            lo,
            &[],
            Singularity::Right,
            model.quad(),
        )?
        .value
    } else {
        0.0
    };
    Ok(wk * kk + wc * kbar(t, s)?)
}

/// The worked example families that have closed-form limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    Fbm,
    Mfold,
    Integrated,
    /// Plain Brownian motion, kept as a reference case.
    Brownian,
}

impl Example {
    pub fn of(family: &KernelFamily) -> Result<Example> {
        match family {
            KernelFamily::Brownian => Ok(Example::Brownian),
            KernelFamily::Fbm { .. } => Ok(Example::Fbm),
            KernelFamily::Mfold { .. } => Ok(Example::Mfold),
            KernelFamily::Integrated { inner } if inner.integration_depth() == 0 => Ok(Example::Integrated),
            other => Err(Error::UnsupportedExample(format!("no closed-form limits for {other:?}"))),
        }
    }
}

/// All closed-form small-time limits of one example.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormLimits {
    pub example: Example,
    pub gamma_exp: f64,
    /// `k̄`.
    pub base: LimitLaw,
    /// `k̄^g`, when a conditioning set was supplied.
    pub functional: Option<LimitLaw>,
    /// `Ῡ`.
    pub path: LimitLaw,
    /// `K̄`.
    pub kernel_limit: KernelLimit,
    /// `r̄ᵢ(t) = slopeᵢ · t`.
    pub rbar_slopes: Option<Vec<f64>>,
    /// `C^g`.
    pub gram: Option<DMatrix<f64>>,
    /// Constant `a` with `k̄^g = a·st` for the rank-one examples.
    pub a: Option<f64>,
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

/// `∫_0^T D(u) g(u) du` with `D` the time derivative of the kernel at `T`.
fn slope_integral<D>(model: &ProcessModel, g: &ConditioningFunction, d: D, hint: Singularity) -> Result<f64>
where
    D: Fn(f64) -> Result<f64>,
{
    let horizon = model.horizon();
    let r = try_integrate(
        |u| Ok::<_, Error>(d(u)? * g.eval(u, horizon)),
        0.0,
        horizon,
        g.breakpoints(),
        hint,
        model.quad(),
    )?;
    Ok(r.value)
}

/// Closed-form `γ`, `k̄`, `k̄^g`, `K̄` and `Ῡ` of a worked example.
pub fn closed_form_limits(
    example: Example,
    model: &ProcessModel,
    gset: Option<&ConditioningSet>,
    coefficients: PathCoefficients,
) -> Result<ClosedFormLimits> {
    let found = Example::of(model.family())?;
    if found != example {
        return Err(Error::UnsupportedExample(format!(
            "model family {:?} does not match example {example:?}",
            model.family()
        )));
    }
    let horizon = model.horizon();
    let alpha = model.alpha();
    let beta = model.beta();
    let (wk, wc) = coefficients.weights(beta);
    let gram = gset.map(|g| functional_gram(model, g, DEFAULT_CONDITION_BOUND)).transpose()?;

    let law = |gamma_exp, kind, cov| LimitLaw {
        gamma_exp,
        kind,
        provenance: Provenance::ClosedForm,
        cov,
    };

    match model.family() {
        KernelFamily::Fbm { hurst } => {
            let hurst = *hurst;
            if hurst <= 0.5 {
                return Err(Error::UnsupportedParameter(format!(
                    "closed-form fBm limits need H > 1/2, got {hurst}"
                )));
            }
            let fbm = LimitCovariance::Fbm { hurst };
            Ok(ClosedFormLimits {
                example,
                gamma_exp: hurst,
                base: law(hurst, LimitKind::Base, fbm.clone()),
                functional: gset.map(|_| law(hurst, LimitKind::Functional, fbm.clone())),
                path: law(
                    hurst,
                    LimitKind::Path,
                    LimitCovariance::FbmPath {
                        hurst,
                        kernel_weight: wk,
                        cov_weight: wc,
                    },
                ),
                kernel_limit: KernelLimit::Fbm {
                    hurst,
                    c_h: fbm_constant(hurst),
                },
                rbar_slopes: gset.map(|g| vec![0.0; g.len()]),
                gram,
                a: None,
            })
        }
        KernelFamily::Brownian => Ok(ClosedFormLimits {
            example,
            gamma_exp: 0.5,
            base: law(0.5, LimitKind::Base, LimitCovariance::Brownian { scale: 1.0 }),
            functional: gset.map(|_| law(0.5, LimitKind::Functional, LimitCovariance::Brownian { scale: 1.0 })),
            path: law(0.5, LimitKind::Path, LimitCovariance::Brownian { scale: wk + wc }),
            kernel_limit: KernelLimit::Unit,
            rbar_slopes: gset.map(|g| vec![0.0; g.len()]),
            gram,
            a: None,
        }),
        KernelFamily::Mfold { m } => {
            let m = *m;
            let mf = factorial(m);
            let scale = f64::from(m * m) / (f64::from(2 * m - 1) * mf * mf) * horizon.powi(2 * m as i32 - 1);
            let slopes = gset
                .map(|g| {
                    g.functions
                        .iter()
                        .map(|gi| {
                            let tm = horizon.powi(m as i32);
                            Ok(match gi {
                                ConditioningFunction::Indicator => alpha / mf * tm,
                                ConditioningFunction::LinearDecay => {
                                    alpha / mf * f64::from(m) / f64::from(m + 1) * tm
                                }
                                tab => {
                                    let inv = 1.0 / factorial(m - 1);
                                    alpha
                                        * slope_integral(
                                            model,
                                            tab,
                                            |u| Ok((horizon - u).powi(m as i32 - 1) * inv),
                                            Singularity::None,
                                        )?
                                }
                            })
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .transpose()?;
            rank_one_limits(example, scale, slopes, gram, wc, law)
        }
        KernelFamily::Integrated { inner } => {
            let inner_model = ProcessModel::new((**inner).clone(), horizon, alpha, model.alpha_tilde())?
                .with_quad(*model.quad());
            let scale = inner_model.covariance(horizon, horizon)?;
            let hint = inner_model.hint();
            let slopes = gset
                .map(|g| {
                    g.functions
                        .iter()
                        .map(|gi| Ok(alpha * slope_integral(model, gi, |u| inner_model.kernel(horizon, u), hint)?))
                        .collect::<Result<Vec<f64>>>()
                })
                .transpose()?;
            rank_one_limits(example, scale, slopes, gram, wc, law)
        }
    }
}

fn rank_one_limits<L>(
    example: Example,
    scale: f64,
    slopes: Option<Vec<f64>>,
    gram: Option<DMatrix<f64>>,
    cov_weight: f64,
    law: L,
) -> Result<ClosedFormLimits>
where
    L: Fn(f64, LimitKind, LimitCovariance) -> LimitLaw,
{
    let a = match (&slopes, &gram) {
        (Some(sl), Some(c)) => {
            let f = spd_factor(c, default_jitter_base(c))?;
            let v = DVector::from_column_slice(sl);
            Some(scale - v.dot(&f.solve(&v)))
        }
        _ => None,
    };
    Ok(ClosedFormLimits {
        example,
        gamma_exp: 1.0,
        base: law(1.0, LimitKind::Base, LimitCovariance::RankOne { scale }),
        functional: a.map(|a| law(1.0, LimitKind::Functional, LimitCovariance::RankOne { scale: a })),
        path: law(
            1.0,
            LimitKind::Path,
            LimitCovariance::RankOne {
                scale: cov_weight * scale,
            },
        ),
        kernel_limit: KernelLimit::Zero,
        rbar_slopes: slopes,
        gram,
        a,
    })
}
