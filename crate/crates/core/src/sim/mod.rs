//! Exact finite-dimensional Gaussian sampling and the brute-force
//! conditioning oracle.

mod rng;

pub use rng::{stream_id, uniform_open, NormalStreams};

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::conditioning::{cross_cov, functional_gram, DEFAULT_CONDITION_BOUND};
use crate::error::{Error, Result};
use crate::models::{ConditioningSet, ProcessModel};
use crate::numerics::GramMatrix;
use crate::par::{self, Exec};

/// `N` draws of a Gaussian vector, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub grid: Vec<f64>,
    pub dim: usize,
    pub samples: Vec<f64>,
    pub seed: u64,
    pub law_descriptor: String,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.samples.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// One column per coordinate, named by `names`, floats at full precision.
    pub fn write_csv<W: Write>(&self, mut w: W, names: &[String]) -> std::io::Result<()> {
        if names.len() != self.dim {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "one column name per coordinate is required",
            ));
        }
        writeln!(w, "{}", names.join(","))?;
        for i in 0..self.len() {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// `N` draws of `mean + L z` with `L` the (jittered) Cholesky factor of `gram`.
pub fn sample_gaussian(mean: &[f64], gram: &mut GramMatrix, n: usize, seed: u64) -> Result<SampleBatch> {
    sample_gaussian_with(mean, gram, n, seed, "sample", Exec::default())
}

pub fn sample_gaussian_with(
    mean: &[f64],
    gram: &mut GramMatrix,
    n: usize,
    seed: u64,
    tag: &str,
    exec: Exec,
) -> Result<SampleBatch> {
    let dim = gram.dim();
    if mean.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: mean.len(),
        });
    }
    let l = gram.factor(None)?.lower();
    let streams = NormalStreams::new(seed, tag, 0, dim);
    let mut samples = vec![0.0; n * dim];
    par::fill_rows(&mut samples, dim, exec, |r, row| {
        let mut z = vec![0.0; dim];
        streams.fill(r as u64, &mut z);
        for i in 0..dim {
            let mut acc = mean[i];
            for j in 0..=i {
                acc += l[(i, j)] * z[j];
            }
            row[i] = acc;
        }
    });
    Ok(SampleBatch {
        grid: gram.grid.clone(),
        dim,
        samples,
        seed,
        law_descriptor: format!("gaussian dim={dim} jitter={:e}", gram.jitter_used),
    })
}

/// Covariance of `(X_{t₁}, …, X_{t_m}, G₁, …, G_n)` with `Gᵢ = ∫_0^T gᵢ dW`.
pub fn joint_model_cov(model: &ProcessModel, gset: &ConditioningSet, grid: &[f64]) -> Result<GramMatrix> {
    if grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidInput("joint grid must consist of positive times".into()));
    }
    let m = grid.len();
    let n = gset.len();
    let c = functional_gram(model, gset, DEFAULT_CONDITION_BOUND)?;
    let mut j = DMatrix::zeros(m + n, m + n);
    for a in 0..m {
        for b in a..m {
            let v = model.covariance(grid[a], grid[b])?;
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
        for (i, g) in gset.functions.iter().enumerate() {
            let v = cross_cov(model, g, grid[a])?;
            j[(a, m + i)] = v;
            j[(m + i, a)] = v;
        }
    }
    j.view_mut((m, m), (n, n)).copy_from(&c);
    let mut labels = grid.to_vec();
    labels.extend(std::iter::repeat_n(f64::NAN, n));
    Ok(GramMatrix {
        grid: labels,
        entries: j,
        jitter_used: 0.0,
        eig_cutoff: 0.0,
    })
}

/// Conditional mean and covariance of the first `m` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Gaussian conditioning of the first `m` coordinates on the last ones being
/// `x`, for a vector with mean `mu` and covariance `sigma`.
pub fn schur_condition(sigma: &DMatrix<f64>, mu: &DVector<f64>, m: usize, x: &[f64]) -> Result<ConditionalMoments> {
    let d = sigma.nrows();
    if m > d || d - m != x.len() || mu.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d.saturating_sub(m),
            found: x.len(),
        });
    }
    let n = d - m;
    let sxx = sigma.view((0, 0), (m, m));
    let sxg = sigma.view((0, m), (m, n)).into_owned();
    let sgg = sigma.view((m, m), (n, n)).into_owned();
    let chol = sgg.cholesky().ok_or(Error::SingularEmpiricalBlock)?;
    let dx = DVector::from_column_slice(x) - mu.rows(m, n);
    let mean = mu.rows(0, m) + &sxg * chol.solve(&dx);
    let cov = sxx - &sxg * chol.solve(&sxg.transpose());
    Ok(ConditionalMoments { mean, cov })
}

/// Sample mean and covariance (divisor `N − 1`) of a batch, or of the rows
/// listed in `rows`.
fn moments(batch: &SampleBatch, rows: Option<&[usize]>) -> (DVector<f64>, DMatrix<f64>) {
    let d = batch.dim;
    let count = rows.map_or(batch.len(), <[usize]>::len);
    let row = |k: usize| batch.row(rows.map_or(k, |r| r[k]));
    let mut mu = DVector::zeros(d);
    for k in 0..count {
        for (a, v) in row(k).iter().enumerate() {
            mu[a] += v;
        }
    }
    mu /= count as f64;
    let mut s = DMatrix::zeros(d, d);
    for k in 0..count {
        let r = row(k);
        for a in 0..d {
            let da = r[a] - mu[a];
            for b in a..d {
                s[(a, b)] += da * (r[b] - mu[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = s[(a, b)] / (count as f64 - 1.0);
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    (mu, s)
}

/// Regression estimate of the conditional law of the first `m` columns given
/// the remaining ones equal `x`, from the empirical joint moments.
pub fn empirical_conditional(batch: &SampleBatch, m: usize, x: &[f64]) -> Result<ConditionalMoments> {
    if batch.len() < 2 {
        return Err(Error::InvalidInput("empirical conditioning needs at least two samples".into()));
    }
    let (mu, s) = moments(batch, None);
    schur_condition(&s, &mu, m, x)
}

/// Bootstrap standard errors of [`empirical_conditional`].
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapErrors {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub resamples: usize,
}

pub fn bootstrap_stderr(
    batch: &SampleBatch,
    m: usize,
    x: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapErrors> {
    let n = batch.len();
    if resamples < 2 {
        return Err(Error::InvalidInput("bootstrap needs at least two resamples".into()));
    }
    let streams = NormalStreams::new(seed, "bootstrap", 0, n);
    let estimates = par::try_map(resamples, Exec::default(), |b| {
        let mut idx = vec![0usize; n];
        streams.fill_indices(b as u64, n, &mut idx);
        let (mu, s) = moments(batch, Some(&idx));
        schur_condition(&s, &mu, m, x)
    })?;
    let mut mean_acc = DVector::zeros(m);
    let mut cov_acc = DMatrix::zeros(m, m);
    for e in &estimates {
        mean_acc += &e.mean;
        cov_acc += &e.cov;
    }
    let bf = resamples as f64;
    mean_acc /= bf;
    cov_acc /= bf;
    let mut mean_var = DVector::zeros(m);
    let mut cov_var = DMatrix::zeros(m, m);
    for e in &estimates {
        mean_var += (&e.mean - &mean_acc).map(|v| v * v);
        cov_var += (&e.cov - &cov_acc).map(|v| v * v);
    }
    Ok(BootstrapErrors {
        mean: (mean_var / (bf - 1.0)).map(f64::sqrt),
        cov: (cov_var / (bf - 1.0)).map(f64::sqrt),
        resamples,
    })
}
