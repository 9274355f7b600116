//! Numerical reduction kernels.
//!
//! * [`mdtrunc`] truncates a nonincreasing nonnegative diagonal at the first
//!   index whose cumulative l1 fraction reaches a threshold.
//! * [`svd_trunc`] fits the linear map between two monomial data matrices
//!   with a truncated pseudoinverse and factors it through a reduced state.
//! * [`lk_reduce`] prunes coefficient columns (and their monomials) with
//!   small l1 norm.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{rank_cutoff, thin_svd};
use crate::monomials::PowerMatrix;

/// Cumulative l1 fractions of a diagonal, one entry per index (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationTable {
    pub entries: Vec<(usize, f64)>,
}

impl TruncationTable {
    /// Fraction reached at 1-based index `j`.
    pub fn fraction(&self, j: usize) -> Option<f64> {
        self.entries.get(j.checked_sub(1)?).map(|e| e.1)
    }

    /// Share of the diagonal mass discarded when keeping the first `n` entries.
    pub fn discarded_fraction(&self, n: usize) -> f64 {
        match n {
            0 => 1.0,
            _ => (1.0 - self.fraction(n).unwrap_or(1.0)).max(0.0),
        }
    }

    /// Two-column text form: index and cumulative fraction to six significant
    /// digits.
    pub fn to_text(&self) -> String {
        let mut out = String::from("index cumulative_fraction\n");
        for (j, frac) in &self.entries {
            let _ = writeln!(out, "{j} {}", format_sig(*frac, 6));
        }
        out
    }
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let digits = digits.max(1) as i32;
    if exp < -5 || exp >= digits {
        let s = format!("{:.*e}", (digits - 1) as usize, x);
        // trim mantissa zeros: 1.50000e-7 -> 1.5e-7
        match s.split_once('e') {
            Some((mantissa, e)) => {
                let m = trim_zeros(mantissa);
                format!("{m}e{e}")
            }
            None => s,
        }
    } else {
        let decimals = (digits - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Result of [`mdtrunc`].
#[derive(Clone, Debug, PartialEq)]
pub struct MdTrunc {
    /// Number of retained entries.
    pub n_r: usize,
    /// The diagonal with entries after `n_r` set to zero.
    pub truncated: Vec<f64>,
    pub table: TruncationTable,
}

/// Truncation of a nonincreasing nonnegative diagonal at threshold `r`.
///
/// `n_r` is the smallest `j` with `sum_{i<=j} d_i / sum_i d_i >= r`.
pub fn mdtrunc(d: &[f64], r: f64) -> Result<MdTrunc> {
    check_threshold(r)?;
    if d.is_empty() {
        return Err(Error::invalid("mdtrunc needs a nonempty diagonal"));
    }
    if let Some(i) = d.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(format!(
            "diagonal entry {} = {} is not a finite nonnegative number",
            i + 1,
            d[i]
        )));
    }
    if let Some(i) = d.windows(2).position(|w| w[0] < w[1]) {
        return Err(Error::invalid(format!(
            "diagonal is not nonincreasing at entries {} and {}",
            i + 1,
            i + 2
        )));
    }
    let total: f64 = d.iter().sum();
    if total == 0.0 {
        return Err(Error::invalid("mdtrunc needs a nonzero diagonal"));
    }

    let mut entries = Vec::with_capacity(d.len());
    let mut partial = 0.0;
    let mut n_r = None;
    for (i, v) in d.iter().enumerate() {
        partial += v;
        let frac = partial / total;
        if n_r.is_none() && frac >= r {
            n_r = Some(i + 1);
        }
        entries.push((i + 1, frac));
    }
    // the last fraction is total / total == 1 >= r
    let n_r = n_r.unwrap_or(d.len());
    let truncated = d
        .iter()
        .enumerate()
        .map(|(i, &v)| if i < n_r { v } else { 0.0 })
        .collect();
    Ok(MdTrunc {
        n_r,
        truncated,
        table: TruncationTable { entries },
    })
}

fn check_threshold(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("threshold {r} is not in (0,1)")))
    }
}

/// Truncated-SVD linear fit `V_y ~ H* V_u` factored as `H* = C L`.
#[derive(Clone, Debug)]
pub struct SvdTruncResult {
    /// Retained rank.
    pub n: usize,
    /// Retained singular values of `V_u`, descending.
    pub d_n: Vec<f64>,
    /// `d_vy x n`.
    pub c: DMatrix<f64>,
    /// `n x d_vu`, orthonormal rows.
    pub l: DMatrix<f64>,
    /// Reduced state `L V_u`, `n x s`.
    pub x: DMatrix<f64>,
    /// `d_vy x d_vu`.
    pub h_star: DMatrix<f64>,
    /// Cumulative fractions over the numerically positive singular values.
    pub table: TruncationTable,
    /// Number of singular values above the numerical rank cutoff.
    pub positive_rank: usize,
}

impl SvdTruncResult {
    /// `||V_y - H* V_u||_F / ||V_y||_F` (zero when `V_y` is zero).
    pub fn relative_residual(&self, v_y: &DMatrix<f64>, v_u: &DMatrix<f64>) -> f64 {
        let norm = v_y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (v_y - &self.h_star * v_u).norm() / norm
    }
}

/// Linear approximation of a polynomial map from data matrices.
///
/// With the SVD `V_u = U S W^T`, singular values below the numerical rank
/// cutoff are dropped, [`mdtrunc`] picks the retained rank `n`, and
///
/// ```text
/// L  = U_n^T,   C = V_y W_n D_n^{-1},   H* = C L,   X = L V_u.
/// ```
pub fn svd_trunc(v_y: &DMatrix<f64>, v_u: &DMatrix<f64>, r: f64) -> Result<SvdTruncResult> {
    check_threshold(r)?;
    let (d_vu, s) = v_u.shape();
    if v_y.ncols() != s {
        return Err(Error::dims("svd_trunc column count", s, v_y.ncols()));
    }
    if d_vu == 0 || s == 0 {
        return Err(Error::invalid("svd_trunc needs a nonempty input data matrix"));
    }
    if v_y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow {
            step: "svd_trunc output data matrix".into(),
        });
    }
    let svd = thin_svd(v_u)?;
    let smax = svd.sigma[0];
    if smax == 0.0 {
        return Err(Error::invalid("svd_trunc input data matrix is zero"));
    }
    let cut = rank_cutoff(smax, d_vu, s);
    let positive: Vec<f64> = svd.sigma.iter().copied().take_while(|&v| v > cut).collect();
    let trunc = mdtrunc(&positive, r)?;
    let n = trunc.n_r;

    let l = svd.u.columns(0, n).transpose();
    let w_n = svd.v_t.rows(0, n).transpose();
    let mut c = v_y * w_n;
    for (j, &sj) in positive.iter().take(n).enumerate() {
        c.column_mut(j).scale_mut(1.0 / sj);
    }
    let h_star = &c * &l;
    let x = &l * v_u;
    Ok(SvdTruncResult {
        n,
        d_n: positive[..n].to_vec(),
        c,
        l,
        x,
        h_star,
        table: trunc.table,
        positive_rank: positive.len(),
    })
}

/// Result of [`lk_reduce`].
#[derive(Clone, Debug, PartialEq)]
pub struct LkReduced {
    pub l: DMatrix<f64>,
    pub k: PowerMatrix,
    /// Indices of the retained columns of the input, increasing.
    pub kept: Vec<usize>,
}

/// Deletes column `j` of `L` (and row `j` of `K`) when
/// `sum_i |L(i,j)| <= r * max_j sum_i |L(i,j)|`, the norm taken on the input.
pub fn lk_reduce(l: &DMatrix<f64>, k: &PowerMatrix, r: f64) -> Result<LkReduced> {
    check_threshold(r)?;
    if l.ncols() != k.n_rows() {
        return Err(Error::dims("lk_reduce columns vs monomials", k.n_rows(), l.ncols()));
    }
    let norms: Vec<f64> = l
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum())
        .collect();
    let max = norms.iter().copied().fold(0.0, f64::max);
    if max.is_nan() || max <= 0.0 {
        return Err(Error::invalid("lk_reduce on an all-zero coefficient matrix"));
    }
    let threshold = r * max;
    let kept: Vec<usize> = norms
        .iter()
        .enumerate()
        .filter(|(_, &norm)| norm > threshold)
        .map(|(j, _)| j)
        .collect();
    let l_kept = l.select_columns(kept.iter());
    let k_kept = k.select(&kept)?;
    Ok(LkReduced {
        l: l_kept,
        k: k_kept,
        kept,
    })
}
