//! Globally adaptive Gauss–Kronrod (10/21-point) quadrature.
//!
//! The error estimate follows the QUADPACK `qk21` heuristic. Integrable
//! endpoint singularities are handled by an optional quadratic change of
//! variables (`u = a + (b - a) v²` near a singular left endpoint and the mirror
//! image on the right), after which the transformed integrand is smooth enough
//! for plain bisection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Abscissae of the 21-point Kronrod rule on [-1, 1] (non-negative half).
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_460,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_958_109_831,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

/// Weights of the embedded 10-point Gauss rule (attached to odd Kronrod nodes).
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// Tolerance and budget for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evals: usize,
    /// Subintervals narrower than this are never bisected again.
    pub min_interval: f64,
    /// Power `p` of the substitution `u = vᵖ` used by [`integrate_hinted`] at
    /// an endpoint at the origin; it removes singularities `u^{-γ}` with
    /// `γ ≤ 1 − 1/p`. Other endpoints use `p = 2`, since `a + (b − a) vᵖ`
    /// no longer resolves the distance to `a` once `vᵖ` is small.
    pub endpoint_power: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_evals: 1_000_000,
            min_interval: 1e-14,
            endpoint_power: 2,
        }
    }
}

impl QuadConfig {
    pub fn with_tol(tol: f64) -> Self {
        QuadConfig {
            abs_tol: tol,
            rel_tol: tol,
            ..Default::default()
        }
    }

    /// Same budget, tolerances scaled by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        QuadConfig {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            ..*self
        }
    }
}

/// Where the integrand may misbehave; selects the change of variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Singularity {
    #[default]
    None,
    Left,
    Right,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature tolerance not met: best {:.6e} with error estimate {:.3e}", best.value, best.error_estimate)]
    ToleranceNotMet { best: QuadratureResult },
    #[error("quadrature evaluation budget exhausted: best {:.6e} with error estimate {:.3e}", best.value, best.error_estimate)]
    MaxEvaluations { best: QuadratureResult },
    #[error("non-finite integrand value at x = {at}")]
    NonFinite { at: f64 },
    #[error("invalid integration bounds [{a}, {b}]")]
    InvalidBounds { a: f64, b: f64 },
}

impl QuadError {
    pub fn best(&self) -> Option<QuadratureResult> {
        match self {
            QuadError::ToleranceNotMet { best } | QuadError::MaxEvaluations { best } => Some(*best),
            _ => None,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    if !f_center.is_finite() {
        return Err(QuadError::NonFinite { at: center });
    }
    let mut res_g = 0.0;
    let mut res_k = WGK[10] * f_center;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let f1 = f(x1);
        let f2 = f(x2);
        if !f1.is_finite() {
            return Err(QuadError::NonFinite { at: x1 });
        }
        if !f2.is_finite() {
            return Err(QuadError::NonFinite { at: x2 });
        }
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok((result, err))
}

fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    cfg: &QuadConfig,
) -> Result<QuadratureResult, QuadError> {
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
        });
    }
    let (v0, e0) = kronrod21(&mut f, a, b)?;
    let mut evals = 21;
    let mut heap = BinaryHeap::new();
    let mut settled_value = 0.0;
    let mut settled_error = 0.0;
    let mut total_value = v0;
    let mut total_error = e0;
    heap.push(Segment {
        a,
        b,
        value: v0,
        error: e0,
    });
    loop {
        let target = cfg.abs_tol.max(cfg.rel_tol * total_value.abs());
        if total_error <= target {
            return Ok(QuadratureResult {
                value: total_value,
                error_estimate: total_error,
                evaluations: evals,
            });
        }
        let Some(seg) = heap.pop() else {
            let best = QuadratureResult {
                value: total_value,
                error_estimate: total_error,
                evaluations: evals,
            };
            return Err(QuadError::ToleranceNotMet { best });
        };
        if (seg.b - seg.a).abs() <= cfg.min_interval {
            settled_value += seg.value;
            settled_error += seg.error;
            continue;
        }
        if evals + 42 > cfg.max_evals {
            heap.push(seg);
            let best = QuadratureResult {
                value: total_value,
                error_estimate: total_error,
                evaluations: evals,
            };
            return Err(QuadError::MaxEvaluations { best });
        }
        let mid = 0.5 * (seg.a + seg.b);
        let (vl, el) = kronrod21(&mut f, seg.a, mid)?;
        let (vr, er) = kronrod21(&mut f, mid, seg.b)?;
        evals += 42;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: vl,
            error: el,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: vr,
            error: er,
        });
        // Re-sum instead of updating incrementally to keep the total free of
        // cancellation drift over many bisections.
        total_value = settled_value + heap.iter().map(|s| s.value).sum::<f64>();
        total_error = settled_error + heap.iter().map(|s| s.error).sum::<f64>();
    }
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    cfg: &QuadConfig,
) -> Result<QuadratureResult, QuadError> {
    integrate_hinted(f, a, b, Singularity::None, cfg)
}

/// Like [`integrate`], with a change of variables that removes algebraic
/// endpoint singularities at the declared ends.
pub fn integrate_hinted<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    hint: Singularity,
    cfg: &QuadConfig,
) -> Result<QuadratureResult, QuadError> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(QuadError::InvalidBounds { a, b });
    }
    let len = b - a;
    let from_left = |f: &mut F, lo: f64, width: f64, cfg: &QuadConfig| {
        let p = if lo == 0.0 { cfg.endpoint_power.max(2) as i32 } else { 2 };
        let pf = f64::from(p);
        adaptive(
            |v: f64| {
                let u = lo + width * v.powi(p);
                let y = f(u);
                // `u` rounded onto the singular end: the weighted contribution vanishes.
                if u == lo && !y.is_finite() {
                    0.0
                } else {
                    pf * width * v.powi(p - 1) * y
                }
            },
            0.0,
            1.0,
            cfg,
        )
    };
    match hint {
        Singularity::None => adaptive(f, a, b, cfg),
        Singularity::Left => from_left(&mut f, a, len, cfg),
        Singularity::Right => from_left(&mut f, b, -len, cfg).map(negate),
        Singularity::Both => {
            let half = 0.5 * len;
            let left = from_left(&mut f, a, half, cfg)?;
            let right = negate(from_left(&mut f, b, -half, cfg)?);
            Ok(QuadratureResult {
                value: left.value + right.value,
                error_estimate: left.error_estimate + right.error_estimate,
                evaluations: left.evaluations + right.evaluations,
            })
        }
    }
}

fn negate(r: QuadratureResult) -> QuadratureResult {
    QuadratureResult { value: -r.value, ..r }
}

/// Integrates over `[a, b]` split at the interior `breakpoints`, each piece
/// with the same singularity hint.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    hint: Singularity,
    cfg: &QuadConfig,
) -> Result<QuadratureResult, QuadError> {
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(a);
    nodes.extend(cuts);
    nodes.push(b);
    let mut out = QuadratureResult {
        value: 0.0,
        error_estimate: 0.0,
        evaluations: 0,
    };
    for w in nodes.windows(2) {
        let r = integrate_hinted(&mut f, w[0], w[1], hint, cfg)?;
        out.value += r.value;
        out.error_estimate += r.error_estimate;
        out.evaluations += r.evaluations;
    }
    Ok(out)
}

/// [`integrate_pieces`] for integrands that can fail; the first integrand
/// error aborts the integral and is returned as is.
pub fn try_integrate<F, E>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    hint: Singularity,
    cfg: &QuadConfig,
) -> Result<QuadratureResult, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<QuadError>,
{
    let mut failure: Option<E> = None;
    let r = integrate_pieces(
        |x| {
            if failure.is_some() {
                return 0.0;
            }
            match f(x) {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        a,
        b,
        breakpoints,
        hint,
        cfg,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    r.map_err(E::from)
}
