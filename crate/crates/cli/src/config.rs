//! Run configuration, read from a TOML file.
//!
//! Every field has a default, so an empty file (or no file) is a valid
//! configuration: a unit-horizon Brownian model with `α = α̃ = 1`, no
//! conditioning, the ladder `10^{-1}, 10^{-1.5}, …, 10^{-4}` and seed 42.
//! Unknown keys are rejected.
//!
//! ```toml
//! seed = 42
//! output_dir = "out"
//!
//! [model]
//! horizon = 1.0
//! alpha = 1.0
//! alpha_tilde = 1.0
//! kernel = { family = "fbm", hurst = 0.75 }
//!
//! [conditioning]
//! mode = "functional"            # none | functional | path
//! functions = [{ kind = "indicator" }, { kind = "linear_decay" }]
//! x = [1.0, 0.5]
//! # psi = "psi.csv"              # path mode: columns u,psi on [0, T]
//!
//! [ladder]
//! from = -1.0                    # log10 of the largest ε
//! to = -4.0
//! step = 0.5
//! # values = [0.1, 0.01]         # explicit ladder, overrides from/to/step
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use volterra_core::asymptotics::{EpsilonLadder, LimitKind, DEFAULT_LADDER_REL_TOL};
use volterra_core::conditioning::DEFAULT_CONDITION_BOUND;
use volterra_core::ldp::{DEFAULT_REL_CUTOFF, DEFAULT_RESIDUAL_THRESHOLD, MIN_PROBE_SAMPLES};
use volterra_core::models::{ConditioningFunction, ConditioningSet, KernelFamily, ProcessModel};
use volterra_core::numerics::QuadConfig;

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Use `(1−β, 1−β)` instead of `(β, 1−β)` as the weights of the
    /// path-conditioned limit.
    pub literal_path_coefficients: bool,
    pub model: ModelConfig,
    pub conditioning: ConditioningConfig,
    pub ladder: LadderConfig,
    pub grids: GridConfig,
    pub tolerances: Tolerances,
    pub limits: LimitsConfig,
    pub rate: RateConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            output_dir: PathBuf::from("out"),
            literal_path_coefficients: false,
            model: ModelConfig::default(),
            conditioning: ConditioningConfig::default(),
            ladder: LadderConfig::default(),
            grids: GridConfig::default(),
            tolerances: Tolerances::default(),
            limits: LimitsConfig::default(),
            rate: RateConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kernel: KernelFamily,
    pub horizon: f64,
    pub alpha: f64,
    pub alpha_tilde: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kernel: KernelFamily::Brownian,
            horizon: 1.0,
            alpha: 1.0,
            alpha_tilde: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    None,
    Functional,
    Path,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningConfig {
    pub mode: Mode,
    pub functions: Vec<ConditioningFunction>,
    /// Observed values of the functionals.
    pub x: Vec<f64>,
    /// CSV with columns `u,psi` (or `t,psi`): the observed noisy path on `[0, T]`.
    /// Without it the path-conditioned mean is zero.
    pub psi: Option<PathBuf>,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        ConditioningConfig {
            mode: Mode::None,
            functions: vec![ConditioningFunction::Indicator, ConditioningFunction::LinearDecay],
            x: vec![0.0, 0.0],
            psi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderConfig {
    pub from: f64,
    pub to: f64,
    pub step: f64,
    pub values: Option<Vec<f64>>,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            from: -1.0,
            to: -4.0,
            step: 0.5,
            values: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Absolute times for `cov`; defaults to `T·(¼, ½, ¾, 1, 5/4, 3/2)`.
    pub cov: Option<Vec<f64>>,
    /// Rescaled times in `[0, 1]` for `limits`.
    pub limits: Vec<f64>,
    /// Number of equally spaced probe points in `(0, 1]`.
    pub probe_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            cov: None,
            limits: vec![0.25, 0.5, 0.75, 1.0],
            probe_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub quad_abs: f64,
    pub quad_rel: f64,
    pub quad_max_evals: usize,
    /// Relative change between the last two ladder ratios that counts as converged.
    pub ladder_rel: f64,
    /// Relative eigenvalue cutoff of the pseudo-inverse in `rate`.
    pub rate_rel_cutoff: f64,
    /// Residual above which a target path is reported outside the RKHS.
    pub rkhs_residual: f64,
    /// Largest accepted condition number of the functional Gram matrix.
    pub condition_bound: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let q = QuadConfig::default();
        Tolerances {
            quad_abs: q.abs_tol,
            quad_rel: q.rel_tol,
            quad_max_evals: q.max_evals,
            ladder_rel: DEFAULT_LADDER_REL_TOL,
            rate_rel_cutoff: DEFAULT_REL_CUTOFF,
            rkhs_residual: DEFAULT_RESIDUAL_THRESHOLD,
            condition_bound: DEFAULT_CONDITION_BOUND,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    /// Exponent of the normalization `ε^γ`; defaults to the closed-form
    /// speed of the kernel family.
    pub gamma_exp: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    /// CSV with columns `t,h`, `t` in `(0, 1]`.
    pub h: Option<PathBuf>,
    /// Which limit covariance; defaults to the one matching the conditioning mode.
    pub limit: Option<LimitKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub delta: f64,
    pub samples: usize,
    pub gamma_exp: Option<f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            delta: 1.0,
            samples: 100_000,
            gamma_exp: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("invalid configuration: {e}")))
    }

    /// Reads `path`; relative data paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = toml::from_str::<RunConfig>(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.conditioning.psi, &mut cfg.rate.h].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        for (key, v) in [
            ("model.horizon", m.horizon),
            ("model.alpha", m.alpha),
            ("model.alpha_tilde", m.alpha_tilde),
        ] {
            if !v.is_finite() {
                return Err(CliError::invalid(key, format!("must be finite, got {v}")));
            }
        }
        m.kernel.validate().map_err(|e| CliError::invalid("model.kernel", e))?;
        self.conditioning_set()?;
        self.ladder()?;
        let t = &self.tolerances;
        for (key, v) in [
            ("tolerances.quad_abs", t.quad_abs),
            ("tolerances.quad_rel", t.quad_rel),
            ("tolerances.ladder_rel", t.ladder_rel),
            ("tolerances.rate_rel_cutoff", t.rate_rel_cutoff),
            ("tolerances.rkhs_residual", t.rkhs_residual),
            ("tolerances.condition_bound", t.condition_bound),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::invalid(key, format!("must be positive, got {v}")));
            }
        }
        if t.quad_max_evals < 21 {
            return Err(CliError::invalid("tolerances.quad_max_evals", "must be at least 21"));
        }
        if let Some(cov) = &self.grids.cov {
            if cov.is_empty() || cov.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(CliError::invalid("grids.cov", "needs nonnegative finite times"));
            }
        }
        let lim = &self.grids.limits;
        if lim.is_empty() || lim.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CliError::invalid("grids.limits", "needs points in [0, 1]"));
        }
        if self.grids.probe_points == 0 {
            return Err(CliError::invalid("grids.probe_points", "must be positive"));
        }
        for (key, g) in [("limits.gamma_exp", self.limits.gamma_exp), ("probe.gamma_exp", self.probe.gamma_exp)] {
            if let Some(g) = g {
                if !(g.is_finite() && g > 0.0) {
                    return Err(CliError::invalid(key, format!("must be positive, got {g}")));
                }
            }
        }
        if !(self.probe.delta.is_finite() && self.probe.delta >= 0.0) {
            return Err(CliError::invalid("probe.delta", "must be nonnegative"));
        }
        if self.probe.samples < MIN_PROBE_SAMPLES {
            return Err(CliError::invalid(
                "probe.samples",
                format!("must be at least {MIN_PROBE_SAMPLES}"),
            ));
        }
        if self.conditioning.mode != Mode::Path && self.conditioning.psi.is_some() {
            return Err(CliError::invalid("conditioning.psi", "only used with mode = \"path\""));
        }
        Ok(())
    }

    pub fn quad(&self) -> QuadConfig {
        QuadConfig {
            abs_tol: self.tolerances.quad_abs,
            rel_tol: self.tolerances.quad_rel,
            max_evals: self.tolerances.quad_max_evals,
            ..QuadConfig::default()
        }
    }

    pub fn model(&self) -> Result<ProcessModel> {
        let m = &self.model;
        ProcessModel::new(m.kernel.clone(), m.horizon, m.alpha, m.alpha_tilde)
            .map(|p| p.with_quad(self.quad()))
            .map_err(|e| CliError::invalid("model", e))
    }

    pub fn conditioning_set(&self) -> Result<ConditioningSet> {
        let c = &self.conditioning;
        let set = ConditioningSet::new(c.functions.clone(), c.x.clone())
            .map_err(|e| CliError::invalid("conditioning", e))?;
        set.validate(self.model.horizon)
            .map_err(|e| CliError::invalid("conditioning.functions", e))?;
        Ok(set)
    }

    pub fn ladder(&self) -> Result<EpsilonLadder> {
        let l = &self.ladder;
        match &l.values {
            Some(v) => EpsilonLadder::new(v.clone()),
            None => EpsilonLadder::log10_geometric(l.from, l.to, l.step),
        }
        .map_err(|e| CliError::invalid("ladder", e))
    }

    pub fn cov_grid(&self) -> Vec<f64> {
        self.grids
            .cov
            .clone()
            .unwrap_or_else(|| [0.25, 0.5, 0.75, 1.0, 1.25, 1.5].iter().map(|f| f * self.model.horizon).collect())
    }

    pub fn probe_grid(&self) -> Vec<f64> {
        let n = self.grids.probe_points;
        (1..=n).map(|i| i as f64 / n as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.seed, 42);
        cfg.validate().unwrap();
        assert_eq!(cfg.ladder().unwrap().len(), 7);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = RunConfig::from_toml("[model]\nhorizon = 1.0\nalfa = 2.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alfa"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn nested_kernel_families_parse() {
        let cfg = RunConfig::from_toml(
            "[model.kernel]\nfamily = \"integrated\"\ninner = { family = \"fbm\", hurst = 0.75 }\n",
        )
        .unwrap();
        assert_eq!(
            cfg.model.kernel,
            KernelFamily::Integrated {
                inner: Box::new(KernelFamily::Fbm { hurst: 0.75 })
            }
        );
    }

    #[test]
    fn semantic_errors_name_the_key() {
        let cfg = RunConfig::from_toml("[model.kernel]\nfamily = \"fbm\"\nhurst = 1.5\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().starts_with("model.kernel"));
        let cfg = RunConfig::from_toml("[probe]\nsamples = 10\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().starts_with("probe.samples"));
        let cfg = RunConfig::from_toml("[conditioning]\nx = [1.0]\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().starts_with("conditioning"));
    }
}
