use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use volterra_core::asymptotics::{
    closed_form_limits, limit_cov_estimate, limit_cross_estimate, limit_kernel_estimate, speed_exponent_fit,
    ClosedFormLimits, Example, LadderEstimate, LadderOptions, LimitKind, LimitLaw, PathCoefficients,
};
use volterra_core::conditioning::{FunctionalConditionalLaw, GaussianLaw, PathConditionalLaw};
use volterra_core::ldp::{ldp_probe, rate_functional_with, ProbeSpec, RateQuery};
use volterra_core::models::{ConditioningSet, CovRoute, KernelFamily, ProcessModel};
use volterra_core::par::Exec;

use crate::config::{Mode, RunConfig};
use crate::error::{CliError, Result};

/// A validated configuration with its model built.
pub struct Context {
    pub cfg: RunConfig,
    pub model: ProcessModel,
    pub gset: ConditioningSet,
    pub coefficients: PathCoefficients,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.model()?;
        let gset = cfg.conditioning_set()?;
        let coefficients = PathCoefficients::from_literal_flag(cfg.literal_path_coefficients);
        Ok(Context {
            cfg,
            model,
            gset,
            coefficients,
        })
    }

    fn mode(&self) -> Mode {
        self.cfg.conditioning.mode
    }

    fn law(&self) -> Result<Box<dyn GaussianLaw>> {
        Ok(match self.mode() {
            Mode::None => Box::new(self.model.clone()),
            Mode::Functional => Box::new(self.functional_law()?),
            Mode::Path => Box::new(self.path_law()?),
        })
    }

    fn functional_law(&self) -> Result<FunctionalConditionalLaw> {
        Ok(FunctionalConditionalLaw::with_condition_bound(
            self.model.clone(),
            self.gset.clone(),
            self.cfg.tolerances.condition_bound,
        )?)
    }

    fn path_law(&self) -> Result<PathConditionalLaw> {
        match &self.cfg.conditioning.psi {
            None => Ok(PathConditionalLaw::covariance_only(self.model.clone())),
            Some(path) => {
                let time = if has_column(path, "u") { "u" } else { "t" };
                let (grid, psi) = read_two_columns(path, time, "psi")?;
                PathConditionalLaw::new(self.model.clone(), grid, psi)
                    .map_err(|e| CliError::invalid("conditioning.psi", e))
            }
        }
    }

    /// Closed-form limits, or `None` for families without them.
    fn closed_form(&self) -> Result<Option<ClosedFormLimits>> {
        let Ok(example) = Example::of(self.model.family()) else {
            return Ok(None);
        };
        let gset = (self.mode() == Mode::Functional).then_some(&self.gset);
        match closed_form_limits(example, &self.model, gset, self.coefficients) {
            Ok(c) => Ok(Some(c)),
            Err(volterra_core::Error::UnsupportedParameter(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn limit_law(&self, kind: LimitKind) -> Result<LimitLaw> {
        let closed = self.closed_form()?.ok_or_else(|| {
            CliError::invalid(
                "model.kernel",
                format!("no closed-form limit law for {:?}", self.model.family()),
            )
        })?;
        match kind {
            LimitKind::Base => Ok(closed.base),
            LimitKind::Path => Ok(closed.path),
            LimitKind::Functional => closed
                .functional
                .ok_or_else(|| CliError::invalid("rate.limit", "the functional limit needs mode = \"functional\"")),
        }
    }

    fn mode_limit_kind(&self) -> LimitKind {
        match self.mode() {
            Mode::None => LimitKind::Base,
            Mode::Functional => LimitKind::Functional,
            Mode::Path => LimitKind::Path,
        }
    }

    fn gamma_exp(&self, key: &str, configured: Option<f64>) -> Result<f64> {
        if let Some(g) = configured {
            return Ok(g);
        }
        self.closed_form()?
            .map(|c| c.gamma_exp)
            .ok_or_else(|| CliError::invalid(key, "required for kernel families without closed-form limits"))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })?;
    let f = File::create(&path).map_err(|source| CliError::Output {
        path: path.clone(),
        source,
    })?;
    Ok((path, BufWriter::new(f)))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let (path, mut w) = create(dir, name)?;
    let io = |source| CliError::Output {
        path: path.clone(),
        source,
    };
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io(e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io)?;
    Ok(path)
}

fn write_rows(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    let (path, w) = create(dir, name)?;
    let io = |e: csv::Error| CliError::Output {
        path: path.clone(),
        source: e.into(),
    };
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(io)?;
    for r in rows {
        out.write_record(r).map_err(io)?;
    }
    out.flush().map_err(|e| io(e.into()))?;
    Ok(path)
}

/// Two numeric columns of a headed CSV file.
fn has_column(path: &Path, name: &str) -> bool {
    csv::Reader::from_path(path)
        .and_then(|mut r| r.headers().map(|h| h.iter().any(|c| c.trim() == name)))
        .unwrap_or(false)
}

fn read_two_columns(path: &Path, first: &str, second: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let bad = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (i, j) = (col(first)?, col(second)?);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |k: usize| {
            rec.get(k)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| bad(format!("row {}: column {} is not a number", line + 2, k + 1)))
        };
        a.push(num(i)?);
        b.push(num(j)?);
    }
    Ok((a, b))
}

/// `cov.csv`: the covariance of the configured law for `s ≤ t` on the grid.
pub fn cmd_cov(ctx: &Context, out: &Path) -> Result<PathBuf> {
    let law = ctx.law()?;
    let grid = ctx.cfg.cov_grid();
    let mut rows = Vec::new();
    for (i, &t) in grid.iter().enumerate() {
        for &s in &grid[..=i] {
            rows.push(vec![fmt(t), fmt(s), fmt(law.cov(t, s)?)]);
        }
    }
    write_rows(out, "cov.csv", &["t", "s", "value"], &rows)
}

struct LimitSeries {
    quantity: String,
    t: f64,
    s: Option<f64>,
    estimate: LadderEstimate,
    closed_form: Option<f64>,
}

/// `limits.csv`: ladder ratios of every limit quantity that applies to the
/// conditioning mode, next to the closed form when there is one.
pub fn cmd_limits(ctx: &Context, out: &Path) -> Result<PathBuf> {
    let gamma = ctx.gamma_exp("limits.gamma_exp", ctx.cfg.limits.gamma_exp)?;
    let closed = ctx.closed_form()?;
    let ladder = ctx.cfg.ladder()?;
    let opts = LadderOptions {
        rel_tol: ctx.cfg.tolerances.ladder_rel,
        route: CovRoute::ClosedForm,
        exec: Exec::default(),
    };
    let grid = &ctx.cfg.grids.limits;
    let mut pairs = Vec::new();
    for (i, &t) in grid.iter().enumerate() {
        for &s in &grid[..=i] {
            pairs.push((t, s));
        }
    }
    let mut series = Vec::new();
    let mut cov_series = |name: &str, law: &dyn GaussianLaw, limit: Option<&LimitLaw>| -> Result<()> {
        for &(t, s) in &pairs {
            series.push(LimitSeries {
                quantity: name.into(),
                t,
                s: Some(s),
                estimate: limit_cov_estimate(law, gamma, t, s, &ladder, &opts)?,
                closed_form: limit.map(|l| l.kbar(t, s)).transpose()?,
            });
        }
        Ok(())
    };
    cov_series("kbar", &ctx.model, closed.as_ref().map(|c| &c.base))?;
    match ctx.mode() {
        Mode::None => {}
        Mode::Functional => {
            let law = ctx.functional_law()?;
            cov_series("kbar_g", &law, closed.as_ref().and_then(|c| c.functional.as_ref()))?;
        }
        Mode::Path => {
            let law = ctx.path_law()?;
            cov_series("upsilon", &law, closed.as_ref().map(|c| &c.path))?;
        }
    }
    if ctx.mode() == Mode::Functional {
        for (i, g) in ctx.gset.functions.iter().enumerate() {
            for &t in grid {
                let slope = closed.as_ref().and_then(|c| c.rbar_slopes.as_ref()).map(|v| v[i]);
                series.push(LimitSeries {
                    quantity: format!("rbar_{}", i + 1),
                    t,
                    s: None,
                    estimate: limit_cross_estimate(&ctx.model, g, gamma, t, &ladder, &opts)?,
                    closed_form: slope.map(|a| a * t),
                });
            }
        }
    }
    for &(t, s) in &pairs {
        series.push(LimitSeries {
            quantity: "kernel".into(),
            t,
            s: Some(s),
            estimate: limit_kernel_estimate(&ctx.model, gamma, t, s, &ladder, &opts)?,
            closed_form: closed.as_ref().map(|c| c.kernel_limit.eval(t, s)),
        });
    }

    let mut rows = Vec::new();
    for ser in &series {
        for (eps, ratio) in ser.estimate.eps.iter().zip(&ser.estimate.ratios) {
            rows.push(vec![
                fmt(*eps),
                ser.quantity.clone(),
                fmt(ser.t),
                ser.s.map(fmt).unwrap_or_default(),
                fmt(*ratio),
                fmt(ser.estimate.extrapolated),
                ser.closed_form.map(fmt).unwrap_or_default(),
                ser.estimate.converged.to_string(),
            ]);
        }
    }
    write_rows(
        out,
        "limits.csv",
        &["eps", "quantity", "t", "s", "ratio", "extrapolation", "closed_form", "converged"],
        &rows,
    )
}

/// `rate.json`: the rate functional of the target path `h` under the
/// configured limit law.
pub fn cmd_rate(ctx: &Context, h: Option<&Path>, out: &Path) -> Result<PathBuf> {
    let path = h
        .map(Path::to_path_buf)
        .or_else(|| ctx.cfg.rate.h.clone())
        .ok_or_else(|| CliError::invalid("rate.h", "a target path CSV is required (config or --h)"))?;
    let (grid, values) = read_two_columns(&path, "t", "h")?;
    let kind = ctx.cfg.rate.limit.unwrap_or_else(|| ctx.mode_limit_kind());
    let limit = ctx.limit_law(kind)?;
    let q = RateQuery::new(limit, grid, values).map_err(|e| CliError::invalid(&path.display().to_string(), e))?;
    let tol = &ctx.cfg.tolerances;
    let r = rate_functional_with(&q, tol.rate_rel_cutoff, tol.rkhs_residual)?;
    write_json(out, "rate.json", &r)
}

/// `probe.csv`: Monte Carlo exit probabilities along the ladder.
pub fn cmd_probe(ctx: &Context, out: &Path) -> Result<PathBuf> {
    let gamma = ctx.gamma_exp("probe.gamma_exp", ctx.cfg.probe.gamma_exp)?;
    let limit = ctx.limit_law(ctx.mode_limit_kind())?;
    let law = ctx.law()?;
    let grid = ctx.cfg.probe_grid();
    let t_max = grid[grid.len() - 1];
    let spec = ProbeSpec {
        gamma_exp: gamma,
        ladder: ctx.cfg.ladder()?,
        delta: ctx.cfg.probe.delta,
        grid,
        samples: ctx.cfg.probe.samples,
        seed: ctx.cfg.seed,
        exec: Exec::default(),
    };
    let mut report = ldp_probe(law.as_ref(), &limit, &spec)?;
    // Brownian increments after T are independent of the past under every
    // conditioning mode, so the reflection formula applies.
    if *ctx.model.family() == KernelFamily::Brownian {
        report = report.with_brownian_oracle(t_max);
    }
    let (path, mut w) = create(out, "probe.csv")?;
    report
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
    Ok(path)
}

/// `speed.json`: log-log slope of the increment variance against `ε`.
pub fn cmd_fit_speed(ctx: &Context, out: &Path) -> Result<PathBuf> {
    let law = ctx.law()?;
    let fit = speed_exponent_fit(law.as_ref(), &ctx.cfg.ladder()?)?;
    write_json(out, "speed.json", &fit)
}
