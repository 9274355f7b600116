//! Small dense helpers: a thin SVD, the pseudoinverse and least squares.
//!
//! The SVD is a one-sided Jacobi iteration (preceded by a QR factorization
//! for tall inputs). The data matrices of the identification are
//! rank-deficient by construction, and nalgebra's bidiagonal SVD returns
//! factors that do not reconstruct the input for a few percent of such
//! matrices, so it is not used here.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin SVD `m = U diag(sigma) Vt` with singular values in descending order.
///
/// Signs are normalized so that the entry of largest magnitude in each column
/// of `U` is positive, which makes the factors reproducible. For a tall input
/// the columns of `U` belonging to zero singular values are zero.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

const MAX_SWEEPS: usize = 80;

/// One-sided Jacobi on a matrix with at least as many rows as columns.
/// Returns `(U, sigma, V)` with `b = U diag(sigma) V^T`, unsorted.
fn jacobi_tall(b: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (p, q) = b.shape();
    let (q_factor, mut r) = if p > q {
        let qr = b.clone().qr();
        (Some(qr.q()), qr.r())
    } else {
        (None, b.clone())
    };
    let rows = r.nrows();
    let mut v = DMatrix::<f64>::identity(q, q);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..q {
            for j in i + 1..q {
                let alpha = r.column(i).norm_squared();
                let beta = r.column(j).norm_squared();
                let gamma = r.column(i).dot(&r.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let (a, b) = (r[(k, i)], r[(k, j)]);
                    r[(k, i)] = c * a - s * b;
                    r[(k, j)] = s * a + c * b;
                }
                for k in 0..q {
                    let (a, b) = (v[(k, i)], v[(k, j)]);
                    v[(k, i)] = c * a - s * b;
                    v[(k, j)] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma = Vec::with_capacity(q);
    for mut col in r.column_iter_mut() {
        let norm = col.norm();
        sigma.push(norm);
        if norm > 0.0 {
            col /= norm;
        }
    }
    let u = match q_factor {
        Some(qf) => qf * r,
        None => r,
    };
    (u, sigma, v)
}

pub(crate) fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow {
            step: "singular value decomposition input".into(),
        });
    }
    let (u, sigma_raw, v_t) = if m.nrows() >= m.ncols() {
        let (u, s, v) = jacobi_tall(m);
        (u, s, v.transpose())
    } else {
        let (u, s, v) = jacobi_tall(&m.transpose());
        (v, s, u.transpose())
    };
    let k = sigma_raw.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        sigma_raw[b]
            .partial_cmp(&sigma_raw[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut u_sorted = DMatrix::zeros(u.nrows(), k);
    let mut vt_sorted = DMatrix::zeros(k, v_t.ncols());
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let col = u.column(src);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        u_sorted.set_column(dst, &(col * sign));
        vt_sorted.set_row(dst, &(v_t.row(src) * sign));
        sigma.push(sigma_raw[src]);
    }
    Ok(ThinSvd {
        u: u_sorted,
        sigma,
        v_t: vt_sorted,
    })
}

/// Numerical rank threshold: singular values at or below
/// `1e-12 * max(rows, cols) * sigma_max` count as zero.
pub(crate) fn rank_cutoff(sigma_max: f64, rows: usize, cols: usize) -> f64 {
    1e-12 * rows.max(cols) as f64 * sigma_max
}

/// Moore-Penrose pseudoinverse with the default rank cutoff.
pub(crate) fn pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(DMatrix::zeros(cols, rows));
    }
    let svd = thin_svd(m)?;
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let cut = rank_cutoff(smax, rows, cols);
    let mut out = DMatrix::zeros(cols, rows);
    for (i, &s) in svd.sigma.iter().enumerate() {
        if s <= cut || s == 0.0 {
            break;
        }
        let v = svd.v_t.row(i).transpose();
        let u = svd.u.column(i).transpose();
        out += (v * u) / s;
    }
    Ok(out)
}

/// Minimum-norm least-squares solution of `a * x = b`.
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(pinv(a)? * b)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_is_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 4, &[
            1.0, 2.0, 0.0, -1.0, //
            0.5, 0.0, 3.0, 1.0, //
            2.0, 4.0, 0.0, -2.0,
        ]);
        let svd = thin_svd(&m).unwrap();
        assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        let s = DMatrix::from_diagonal(&DVector::from_vec(svd.sigma.clone()));
        let back = &svd.u * s * &svd.v_t;
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_inputs_reconstruct() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut rand_mat = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        for case in 0..500 {
            let k = 1 + case % 5;
            let a = 1 + case % 11;
            let b = 1 + (case * 7) % 23;
            let m = rand_mat(a, k) * rand_mat(k, b);
            let svd = thin_svd(&m).unwrap();
            let s = DMatrix::from_diagonal(&DVector::from_vec(svd.sigma.clone()));
            let back = &svd.u * s * &svd.v_t;
            assert!((back - &m).norm() <= 1e-12 * m.norm().max(1.0), "case {case}");
            let rank = svd.sigma.iter().filter(|&&v| v > 1e-10).count();
            assert_eq!(rank, k.min(a).min(b), "case {case}");
        }
    }

    #[test]
    fn pinv_of_rank_one() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let p = pinv(&m).unwrap();
        // A A+ A = A
        assert!((&m * &p * &m - &m).norm() < 1e-12);
        // rank one: A+ = A^T / ||A||_F^2
        let expected = m.transpose() / 25.0;
        assert!((p - expected).norm() < 1e-12);
    }
}
