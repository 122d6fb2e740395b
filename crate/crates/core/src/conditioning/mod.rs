//! Exact conditional laws of the process given observations of the noisy
//! channel `W = αB + α̃B̃`: finitely many functionals `∫ gᵢ dW`, or the whole
//! path of `W` on `[0, T]`.

mod path;

pub use path::PathConditionalLaw;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::models::{ConditioningFunction, ConditioningSet, CovRoute, ProcessModel};
use crate::numerics::{spd_factor, try_integrate, SpdFactor, default_jitter_base};

/// Default bound on the condition number of the functional Gram matrix.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e8;

/// Largest number of functionals for which the explicit inverse is cached.
pub const MAX_CACHED_INVERSE: usize = 8;

/// Mean and covariance functions of a Gaussian process.
pub trait GaussianLaw: Sync {
    fn mean(&self, t: f64) -> Result<f64>;

    fn cov(&self, t: f64, s: f64) -> Result<f64>;

    /// Conditioning horizon `T`.
    fn horizon(&self) -> f64;

    /// `Cov(X_t − X_b, X_s − X_b)` with the unconditioned part evaluated by `route`.
    fn increment_cov_with(&self, route: CovRoute, base: f64, t: f64, s: f64) -> Result<f64>;

    fn increment_cov(&self, base: f64, t: f64, s: f64) -> Result<f64> {
        self.increment_cov_with(CovRoute::ClosedForm, base, t, s)
    }

    fn increment_mean(&self, base: f64, t: f64) -> Result<f64> {
        Ok(self.mean(t)? - self.mean(base)?)
    }

    /// `Var(X_t − X_s)` for every `(s, t)` in `pairs`. All times are at or
    /// after `anchor`, which implementations may use to share work.
    fn pair_increment_variances(&self, anchor: f64, pairs: &[(f64, f64)]) -> Result<Vec<f64>> {
        let _ = anchor;
        pairs.iter().map(|&(s, t)| self.increment_cov(s, t, t)).collect()
    }

    fn describe(&self) -> String;
}

impl GaussianLaw for ProcessModel {
    fn mean(&self, _t: f64) -> Result<f64> {
        Ok(0.0)
    }

    fn cov(&self, t: f64, s: f64) -> Result<f64> {
        self.covariance(t, s)
    }

    fn horizon(&self) -> f64 {
        ProcessModel::horizon(self)
    }

    fn increment_cov_with(&self, route: CovRoute, base: f64, t: f64, s: f64) -> Result<f64> {
        self.increment_covariance(route, base, t, s)
    }

    fn describe(&self) -> String {
        format!("unconditioned {:?}", self.family())
    }
}

fn union_breakpoints(a: &ConditioningFunction, b: &ConditioningFunction) -> Vec<f64> {
    let mut v: Vec<f64> = a.breakpoints().iter().chain(b.breakpoints()).copied().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `C[i][j] = (α² + α̃²) ∫_0^T gᵢ gⱼ`, rejected when its condition number
/// exceeds `condition_bound`.
pub fn functional_gram(model: &ProcessModel, gset: &ConditioningSet, condition_bound: f64) -> Result<DMatrix<f64>> {
    let horizon = model.horizon();
    gset.validate(horizon)?;
    let n = gset.len();
    let scale = model.noise_scale();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (gi, gj) = (&gset.functions[i], &gset.functions[j]);
            let cuts = union_breakpoints(gi, gj);
            let r = try_integrate(
                |u| Ok::<_, Error>(gi.eval(u, horizon) * gj.eval(u, horizon)),
                0.0,
                horizon,
                &cuts,
                Default::default(),
                model.quad(),
            )?;
            c[(i, j)] = scale * r.value;
            c[(j, i)] = scale * r.value;
        }
    }
    let eig = SymmetricEigen::new(c.clone()).eigenvalues;
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= condition_bound) {
        return Err(Error::NearSingularGram {
            condition,
            bound: condition_bound,
        });
    }
    Ok(c)
}

/// `r(t) = α ∫_0^{t∧T} K(t,u) g(u) du`.
pub fn cross_cov(model: &ProcessModel, g: &ConditioningFunction, t: f64) -> Result<f64> {
    if model.alpha() == 0.0 {
        return Ok(0.0);
    }
    let horizon = model.horizon();
    let hi = t.min(horizon);
    if hi <= 0.0 {
        return Ok(0.0);
    }
    let k = model.compiled();
    let r = try_integrate(
        |u| Ok::<_, Error>(k.eval(t, u, model.quad())? * g.eval(u, horizon)),
        0.0,
        hi,
        g.breakpoints(),
        model.hint(),
        model.quad(),
    )?;
    Ok(model.alpha() * r.value)
}

/// `r(t₁) − r(t₀)` for `t₀ ≤ t₁`, integrated as one kernel difference so that
/// small increments keep their relative accuracy.
pub fn cross_cov_increment(model: &ProcessModel, g: &ConditioningFunction, t0: f64, t1: f64) -> Result<f64> {
    if model.alpha() == 0.0 || t1 == t0 {
        return Ok(0.0);
    }
    if t1 < t0 {
        return Ok(-cross_cov_increment(model, g, t1, t0)?);
    }
    let horizon = model.horizon();
    let k = model.compiled();
    let quad = model.quad();
    let lo = t0.min(horizon);
    let hi = t1.min(horizon);
    let head = if lo > 0.0 {
        try_integrate(
            |u| Ok::<_, Error>((k.eval(t1, u, quad)? - k.eval(t0, u, quad)?) * g.eval(u, horizon)),
            0.0,
            lo,
            g.breakpoints(),
            model.hint(),
            quad,
        )?
        .value
    } else {
        0.0
    };
    let tail = if hi > lo {
        try_integrate(
            |u| Ok::<_, Error>(k.eval(t1, u, quad)? * g.eval(u, horizon)),
            lo,
            hi,
            g.breakpoints(),
            model.hint(),
            quad,
        )?
        .value
    } else {
        0.0
    };
    Ok(model.alpha() * (head + tail))
}

/// Law of `X` given `∫_0^T gᵢ dW = xᵢ`, `i = 1..n`.
#[derive(Debug, Clone)]
pub struct FunctionalConditionalLaw {
    model: ProcessModel,
    gset: ConditioningSet,
    gram: DMatrix<f64>,
    inverse: Option<DMatrix<f64>>,
    factor: SpdFactor,
    /// `C⁻¹ x`.
    weights: DVector<f64>,
}

impl FunctionalConditionalLaw {
    pub fn new(model: ProcessModel, gset: ConditioningSet) -> Result<Self> {
        Self::with_condition_bound(model, gset, DEFAULT_CONDITION_BOUND)
    }

    pub fn with_condition_bound(model: ProcessModel, gset: ConditioningSet, bound: f64) -> Result<Self> {
        let gram = functional_gram(&model, &gset, bound)?;
        let factor = spd_factor(&gram, default_jitter_base(&gram))?;
        let inverse = (gset.len() <= MAX_CACHED_INVERSE).then(|| factor.chol.inverse());
        let x = DVector::from_column_slice(&gset.x);
        let mut law = FunctionalConditionalLaw {
            model,
            gset,
            gram,
            inverse,
            factor,
            weights: DVector::zeros(0),
        };
        law.weights = law.solve(&x);
        Ok(law)
    }

    pub fn model(&self) -> &ProcessModel {
        &self.model
    }

    pub fn conditioning(&self) -> &ConditioningSet {
        &self.gset
    }

    /// `C^g`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `(C^g)⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.inverse {
            Some(inv) => inv * v,
            None => self.factor.solve(v),
        }
    }

    /// `(r₁(t), …, r_n(t))`.
    pub fn cross_cov_vec(&self, t: f64) -> Result<DVector<f64>> {
        let v: Result<Vec<f64>> = self.gset.functions.iter().map(|g| cross_cov(&self.model, g, t)).collect();
        Ok(DVector::from_vec(v?))
    }

    pub fn cross_increment_vec(&self, t0: f64, t1: f64) -> Result<DVector<f64>> {
        let v: Result<Vec<f64>> = self
            .gset
            .functions
            .iter()
            .map(|g| cross_cov_increment(&self.model, g, t0, t1))
            .collect();
        Ok(DVector::from_vec(v?))
    }

    /// `κ(t,s) = r(t)ᵀ C⁻¹ r(s)`.
    pub fn kappa(&self, t: f64, s: f64) -> Result<f64> {
        let rt = self.cross_cov_vec(t)?;
        let rs = if s == t { rt.clone() } else { self.cross_cov_vec(s)? };
        Ok(rt.dot(&self.solve(&rs)))
    }

    pub fn cov_with(&self, route: CovRoute, t: f64, s: f64) -> Result<f64> {
        Ok(self.model.covariance_with(route, t, s)? - self.kappa(t, s)?)
    }

}

impl GaussianLaw for FunctionalConditionalLaw {
    /// `m(t) = r(t)ᵀ C⁻¹ x`.
    fn mean(&self, t: f64) -> Result<f64> {
        Ok(self.cross_cov_vec(t)?.dot(&self.weights))
    }

    fn cov(&self, t: f64, s: f64) -> Result<f64> {
        self.cov_with(CovRoute::ClosedForm, t, s)
    }

    fn horizon(&self) -> f64 {
        self.model.horizon()
    }

    /// The correction `Δr(t)ᵀ C⁻¹ Δr(s)` is formed from kernel differences.
    fn increment_cov_with(&self, route: CovRoute, base: f64, t: f64, s: f64) -> Result<f64> {
        let dk = self.model.increment_covariance(route, base, t, s)?;
        let rt = self.cross_increment_vec(base, t)?;
        let rs = if s == t { rt.clone() } else { self.cross_increment_vec(base, s)? };
        Ok(dk - rt.dot(&self.solve(&rs)))
    }

    fn increment_mean(&self, base: f64, t: f64) -> Result<f64> {
        Ok(self.cross_increment_vec(base, t)?.dot(&self.weights))
    }

    /// Cross increments from `anchor` are computed once per distinct time.
    fn pair_increment_variances(&self, anchor: f64, pairs: &[(f64, f64)]) -> Result<Vec<f64>> {
        let mut times: Vec<f64> = pairs.iter().flat_map(|&(s, t)| [s, t]).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let incs = times
            .iter()
            .map(|&u| self.cross_increment_vec(anchor, u))
            .collect::<Result<Vec<_>>>()?;
        let lookup = |u: f64| &incs[times.partition_point(|&v| v < u)];
        pairs
            .iter()
            .map(|&(s, t)| {
                let dk = self.model.increment_covariance(CovRoute::ClosedForm, s, t, t)?;
                let d = lookup(t) - lookup(s);
                Ok(dk - d.dot(&self.solve(&d)))
            })
            .collect()
    }

    fn describe(&self) -> String {
        format!(
            "{:?} conditioned on {} functionals",
            self.model.family(),
            self.gset.len()
        )
    }
}

pub fn conditional_mean_functional(law: &FunctionalConditionalLaw, t: f64) -> Result<f64> {
    law.mean(t)
}

pub fn conditional_cov_functional(law: &FunctionalConditionalLaw, t: f64, s: f64) -> Result<f64> {
    law.cov(t, s)
}

pub fn path_conditional_mean(law: &PathConditionalLaw, t: f64) -> Result<f64> {
    law.mean(t)
}

pub fn path_conditional_cov(law: &PathConditionalLaw, t: f64, s: f64) -> Result<f64> {
    law.cov(t, s)
}
