//! Shared numerical substrate: adaptive quadrature, jittered SPD
//! factorization, pseudo-inverse quadratic forms and a few special functions.

mod linalg;
mod quadrature;
pub mod special;

pub use linalg::{
    default_jitter_base, pinv_quadratic_form, spd_factor, GramMatrix, QuadraticForm, SpdFactor,
    JITTER_STEPS,
};
pub use quadrature::{
    integrate, integrate_hinted, integrate_pieces, try_integrate, QuadConfig, QuadError, QuadratureResult,
    Singularity,
};

/// Ordinary least-squares fit `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit {
        slope,
        intercept,
        r2,
    })
}
