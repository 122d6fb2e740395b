//! Symmetric positive (semi)definite matrices: jittered Cholesky, Gram
//! assembly on a time grid and pseudo-inverse quadratic forms.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Number of escalation steps tried by [`spd_factor`] after the unjittered
/// attempt: `base · 10^k` for `k = 0..=JITTER_STEPS`.
pub const JITTER_STEPS: i32 = 6;

/// Default scale-aware jitter base, `1e-12 · trace(M) / n`.
pub fn default_jitter_base(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().max(1) as f64;
    let tr = m.trace();
    if tr > 0.0 {
        1e-12 * tr / n
    } else {
        1e-12
    }
}

/// Cholesky factor of `M + jitter·I`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter_used: f64,
}

impl SpdFactor {
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }
}

/// Cholesky of `M + jI` with the smallest `j ∈ {0, base·10^k}` that succeeds.
pub fn spd_factor(m: &DMatrix<f64>, base_jitter: f64) -> Result<SpdFactor> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(SpdFactor {
            chol,
            jitter_used: 0.0,
        });
    }
    let n = m.nrows();
    for k in 0..=JITTER_STEPS {
        let j = base_jitter * 10f64.powi(k);
        if j <= 0.0 {
            continue;
        }
        let shifted = m + DMatrix::<f64>::identity(n, n) * j;
        if let Some(chol) = Cholesky::new(shifted) {
            return Ok(SpdFactor {
                chol,
                jitter_used: j,
            });
        }
    }
    Err(Error::NotPositiveSemidefinite {
        max_jitter: base_jitter * 10f64.powi(JITTER_STEPS),
    })
}

/// Covariance matrix of a process on a time grid.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub grid: Vec<f64>,
    pub entries: DMatrix<f64>,
    pub jitter_used: f64,
    pub eig_cutoff: f64,
}

impl GramMatrix {
    /// Wraps an explicit symmetric matrix. `grid` may be empty when the rows
    /// are not indexed by time.
    pub fn new(grid: Vec<f64>, entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || (!grid.is_empty() && grid.len() != entries.nrows()) {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: entries.nrows(),
            });
        }
        check_symmetric(&entries)?;
        Ok(GramMatrix {
            grid,
            entries,
            jitter_used: 0.0,
            eig_cutoff: 0.0,
        })
    }

    /// Evaluates `cov` on the upper triangle of `grid × grid` and mirrors it.
    pub fn assemble<F>(grid: &[f64], cov: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<f64> + Sync,
    {
        Self::assemble_with(grid, cov, Exec::default())
    }

    pub fn assemble_with<F>(grid: &[f64], cov: F, exec: Exec) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<f64> + Sync,
    {
        let n = grid.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let values = par::try_map(pairs.len(), exec, |k| {
            let (i, j) = pairs[k];
            cov(grid[i], grid[j])
        })?;
        let mut m = DMatrix::zeros(n, n);
        for (&(i, j), v) in pairs.iter().zip(values) {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        Ok(GramMatrix {
            grid: grid.to_vec(),
            entries: m,
            jitter_used: 0.0,
            eig_cutoff: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Jittered Cholesky factor; records the jitter on `self`.
    pub fn factor(&mut self, base_jitter: Option<f64>) -> Result<SpdFactor> {
        let base = base_jitter.unwrap_or_else(|| default_jitter_base(&self.entries));
        let f = spd_factor(&self.entries, base)?;
        self.jitter_used = f.jitter_used;
        Ok(f)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.entries.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in 0..i {
            let d = (m[(i, j)] - m[(j, i)]).abs();
            if d > 1e-12 * scale {
                return Err(Error::NotSymmetric { row: i, col: j, gap: d });
            }
        }
    }
    Ok(())
}

/// Outcome of [`pinv_quadratic_form`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticForm {
    /// `½ hᵀ G⁺ h` over the retained spectrum.
    pub value: f64,
    /// `‖h − P h‖ / ‖h‖`, `P` the projector onto the retained eigenspace.
    pub residual: f64,
    pub retained: usize,
}

/// Half the pseudo-inverse quadratic form of `h` in the Gram matrix, dropping
/// eigenvalues below `rel_cutoff · λ_max`.
pub fn pinv_quadratic_form(g: &GramMatrix, h: &[f64], rel_cutoff: f64) -> Result<QuadraticForm> {
    if h.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: h.len(),
        });
    }
    let hv = DVector::from_column_slice(h);
    let h_norm = hv.norm();
    if h_norm == 0.0 {
        return Ok(QuadraticForm {
            value: 0.0,
            residual: 0.0,
            retained: 0,
        });
    }
    let eig = SymmetricEigen::new(g.entries.clone());
    let lambda_max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if lambda_max <= 0.0 {
        return Ok(QuadraticForm {
            value: 0.0,
            residual: 1.0,
            retained: 0,
        });
    }
    let cutoff = rel_cutoff * lambda_max;
    let mut value = 0.0;
    let mut projected = DVector::zeros(h.len());
    let mut retained = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= cutoff {
            continue;
        }
        let u = eig.eigenvectors.column(k);
        let c = u.dot(&hv);
        value += c * c / lambda;
        projected += u * c;
        retained += 1;
    }
    let residual = (&hv - projected).norm() / h_norm;
    Ok(QuadraticForm {
        value: 0.5 * value,
        residual,
        retained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brownian_gram(grid: &[f64]) -> GramMatrix {
        GramMatrix::assemble(grid, |s, t| Ok(s.min(t))).unwrap()
    }

    #[test]
    fn identity_needs_no_jitter() {
        let f = spd_factor(&DMatrix::identity(3, 3), 1e-12).unwrap();
        assert_eq!(f.jitter_used, 0.0);
    }

    #[test]
    fn brownian_gram_is_spd() {
        let mut g = brownian_gram(&[0.25, 0.5, 0.75, 1.0]);
        let f = g.factor(None).unwrap();
        assert_eq!(f.jitter_used, 0.0);
        assert_eq!(g.jitter_used, 0.0);
    }

    #[test]
    fn rank_one_needs_jitter() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let base = default_jitter_base(&m);
        let f = spd_factor(&m, base).unwrap();
        assert!(f.jitter_used > 0.0);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            spd_factor(&m, 1e-12),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            GramMatrix::new(vec![], m),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn cameron_martin_norm_of_identity_path() {
        let grid: Vec<f64> = (1..=8).map(|i| i as f64 / 8.0).collect();
        let g = brownian_gram(&grid);
        let q = pinv_quadratic_form(&g, &grid, 1e-10).unwrap();
        assert!((q.value - 0.5).abs() < 1e-12);
        assert!(q.residual <= 1e-10);
    }

    #[test]
    fn zero_vector() {
        let g = brownian_gram(&[0.5, 1.0]);
        let q = pinv_quadratic_form(&g, &[0.0, 0.0], 1e-10).unwrap();
        assert_eq!((q.value, q.residual), (0.0, 0.0));
    }

    #[test]
    fn rank_one_kernel() {
        let grid = [0.1, 0.35, 0.6, 0.9, 1.0];
        let g = GramMatrix::assemble(&grid, |s, t| Ok(s * t)).unwrap();
        let h: Vec<f64> = grid.iter().map(|t| 2.0 * t).collect();
        let q = pinv_quadratic_form(&g, &h, 1e-10).unwrap();
        // RKHS of st is {c t} with |c t|² = c².
        let oracle = 0.5 * 2.0f64.powi(2);
        assert!((q.value - oracle).abs() < 1e-10);
        assert!(q.residual < 1e-10);
        assert_eq!(q.retained, 1);
    }
}
