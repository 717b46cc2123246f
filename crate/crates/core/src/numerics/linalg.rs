use nalgebra::DMatrix;

use super::Matrix;
use crate::error::{Result, ScmError};

/// Minimum-norm least-squares solution `β = H⁺ T` via the Moore-Penrose
/// pseudoinverse.
///
/// The pseudoinverse comes from a thin SVD; singular values at or below
/// `max(N, L) · ε · σ_max` are treated as zero.
pub fn least_squares(h: &Matrix, t: &Matrix) -> Result<Matrix> {
    if h.rows() == 0 || h.cols() == 0 {
        return Err(ScmError::invalid(
            "least squares needs a non-empty design matrix",
        ));
    }
    if h.rows() != t.rows() {
        return Err(ScmError::LengthMismatch {
            expected: h.rows(),
            found: t.rows(),
        });
    }
    if !h.is_finite() || !t.is_finite() {
        return Err(ScmError::invalid(
            "least squares input contains non-finite entries",
        ));
    }

    let hm = DMatrix::from_row_slice(h.rows(), h.cols(), h.as_slice());
    let tm = DMatrix::from_row_slice(t.rows(), t.cols(), t.as_slice());
    let svd = hm.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = h.rows().max(h.cols()) as f64 * f64::EPSILON * sigma_max;
    let beta = svd
        .solve(&tm, cutoff)
        .map_err(|e| ScmError::invalid(format!("pseudoinverse failed: {e}")))?;

    let mut out = Matrix::zeros(beta.nrows(), beta.ncols());
    for r in 0..beta.nrows() {
        for c in 0..beta.ncols() {
            out[(r, c)] = beta[(r, c)];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// (HᵀH)⁻¹HᵀT by Gauss-Jordan elimination with partial pivoting.
    fn normal_equation_oracle(h: &Matrix, t: &Matrix) -> Matrix {
        let hth = h.transpose().matmul(h).unwrap();
        let htt = h.transpose().matmul(t).unwrap();
        let n = hth.rows();
        let m = htt.cols();
        let mut aug: Vec<Vec<f64>> = (0..n)
            .map(|r| hth.row(r).iter().chain(htt.row(r)).copied().collect())
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))
                .unwrap();
            aug.swap(col, pivot);
            let p = aug[col][col];
            aug[col].iter_mut().for_each(|v| *v /= p);
            for r in 0..n {
                if r != col {
                    let f = aug[r][col];
                    let pivot_row = aug[col].clone();
                    aug[r]
                        .iter_mut()
                        .zip(&pivot_row)
                        .for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
        let rows: Vec<Vec<f64>> = aug.iter().map(|r| r[n..n + m].to_vec()).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn identity_design_returns_targets() {
        let t = Matrix::from_rows(&[[1.5], [-2.0], [0.25]]).unwrap();
        let beta = least_squares(&Matrix::identity(3), &t).unwrap();
        for (a, b) in beta.as_slice().iter().zip(t.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_fits_the_mean() {
        let h = Matrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        let t = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let beta = least_squares(&h, &t).unwrap();
        assert!((beta[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations_on_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_matrix(&mut rng, 8, 4);
        let t = random_matrix(&mut rng, 8, 2);
        let beta = least_squares(&h, &t).unwrap();
        let oracle = normal_equation_oracle(&h, &t);
        for (a, b) in beta.as_slice().iter().zip(oracle.as_slice()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn rank_deficient_design_still_minimizes() {
        // duplicated column: minimum-norm solution splits the weight
        let h = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let t = Matrix::from_rows(&[[2.0], [4.0], [6.0]]).unwrap();
        let beta = least_squares(&h, &t).unwrap();
        assert!((beta[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((beta[(1, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn residual_beats_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_matrix(&mut rng, 20, 5);
        let t = random_matrix(&mut rng, 20, 2);
        let beta = least_squares(&h, &t).unwrap();
        let best = h.matmul(&beta).unwrap().sub(&t).unwrap().frobenius_norm();
        for _ in 0..100 {
            let delta = random_matrix(&mut rng, 5, 2);
            let other = beta.add(&delta).unwrap();
            let res = h.matmul(&other).unwrap().sub(&t).unwrap().frobenius_norm();
            assert!(best <= res + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let h = Matrix::from_rows(&[[f64::NAN]]).unwrap();
        let t = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(
            least_squares(&h, &t),
            Err(ScmError::InvalidInput(_))
        ));
        assert!(least_squares(&Matrix::identity(2), &t).is_err());
    }
}
