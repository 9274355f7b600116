//! Power vectors, power matrices and monomial vectors.
//!
//! A power vector `k` indexes the monomial `x^k = x_1^{k_1} ... x_n^{k_n}`. A
//! [`PowerMatrix`] stacks distinct power vectors in strictly decreasing
//! lexicographic order and so fixes the component order of the monomial
//! vector `x^K`. `0^0` evaluates to `1`.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default upper bound on the number of rows an enumeration may produce.
pub const DEFAULT_MONOMIAL_CAP: usize = 1_000_000;

/// Exponent tuple of a monomial.
///
/// The derived ordering is lexicographic, which is the monomial order used
/// throughout the crate; it is only meaningful between vectors of equal
/// length (see [`lex_compare`] for the checked version).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PowerVector(Vec<u32>);

impl PowerVector {
    pub fn new(exponents: Vec<u32>) -> Self {
        PowerVector(exponents)
    }

    pub fn zeros(n: usize) -> Self {
        PowerVector(vec![0; n])
    }

    /// The power vector of the single variable `x_i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut k = vec![0; n];
        k[i] = 1;
        PowerVector(k)
    }

    pub fn uniform(n: usize, value: u32) -> Self {
        PowerVector(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    /// Total degree `sum_j k_j`.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Concatenates `times` copies of this vector, as used for the exponent
    /// bound of a stacked window of lagged outputs.
    pub fn repeat(&self, times: usize) -> PowerVector {
        let mut out = Vec::with_capacity(self.len() * times);
        for _ in 0..times {
            out.extend_from_slice(&self.0);
        }
        PowerVector(out)
    }

    pub fn concat(&self, other: &PowerVector) -> PowerVector {
        let mut out = self.0.clone();
        out.extend_from_slice(&other.0);
        PowerVector(out)
    }

    /// Entrywise sum, the power vector of the product of two monomials.
    pub fn checked_add(&self, other: &PowerVector) -> Result<PowerVector> {
        if self.len() != other.len() {
            return Err(Error::dims("power vector sum", self.len(), other.len()));
        }
        Ok(PowerVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    /// Whether every entry is at most the corresponding entry of `bound`.
    pub fn is_bounded_by(&self, bound: &PowerVector) -> bool {
        self.len() == bound.len() && self.0.iter().zip(&bound.0).all(|(a, b)| a <= b)
    }
}

impl From<Vec<u32>> for PowerVector {
    fn from(v: Vec<u32>) -> Self {
        PowerVector(v)
    }
}

impl fmt::Display for PowerVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// Lexicographic comparison: `k1 > k2` iff the first differing coordinate is
/// larger in `k1`.
pub fn lex_compare(k1: &PowerVector, k2: &PowerVector) -> Result<Ordering> {
    if k1.len() != k2.len() {
        return Err(Error::dims("lex_compare", k1.len(), k2.len()));
    }
    for (a, b) in k1.0.iter().zip(&k2.0) {
        match a.cmp(b) {
            Ordering::Equal => continue,
            other => return Ok(other),
        }
    }
    Ok(Ordering::Equal)
}

/// Graded order: total degree first, ties broken lexicographically. This is
/// the "lowest power first" order used to split power matrices into blocks
/// and to rank generators.
pub fn graded_cmp(k1: &PowerVector, k2: &PowerVector) -> Ordering {
    k1.degree().cmp(&k2.degree()).then_with(|| k1.cmp(k2))
}

/// Stacked power vectors indexing a monomial vector.
///
/// Rows are pairwise distinct, in strictly decreasing lexicographic order,
/// and bounded entrywise by `k_max`. Two power matrices are equal when they
/// hold the same rows; the bound does not take part in the comparison.
#[derive(Clone, Debug)]
pub struct PowerMatrix {
    n: usize,
    rows: Vec<PowerVector>,
    k_max: PowerVector,
}

impl PartialEq for PowerMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.rows == other.rows
    }
}

impl Eq for PowerMatrix {}

impl PowerMatrix {
    /// Builds a power matrix, checking every invariant.
    pub fn new(n: usize, rows: Vec<PowerVector>, k_max: PowerVector) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("power matrix needs at least one variable"));
        }
        if k_max.len() != n {
            return Err(Error::dims("power matrix bound", n, k_max.len()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::dims(format!("power matrix row {i}"), n, row.len()));
            }
            if !row.is_bounded_by(&k_max) {
                return Err(Error::invalid(format!(
                    "power matrix row {i} = {row} exceeds bound {k_max}"
                )));
            }
        }
        for (i, w) in rows.windows(2).enumerate() {
            if w[0] <= w[1] {
                return Err(Error::invalid(format!(
                    "power matrix rows {i} and {} are not in strictly decreasing lexicographic order",
                    i + 1
                )));
            }
        }
        Ok(PowerMatrix { n, rows, k_max })
    }

    /// Builds a power matrix whose bound is the columnwise maximum of `rows`.
    pub fn from_rows(n: usize, rows: Vec<PowerVector>) -> Result<Self> {
        let k_max = columnwise_max(n, &rows)?;
        Self::new(n, rows, k_max)
    }

    /// Sorts into decreasing lexicographic order and removes duplicate rows.
    pub fn from_unsorted(n: usize, mut rows: Vec<PowerVector>) -> Result<Self> {
        rows.sort_by(|a, b| b.cmp(a));
        rows.dedup();
        Self::from_rows(n, rows)
    }

    /// Rows `e_1, ..., e_n`: the monomial vector reproduces its argument.
    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|i| PowerVector::unit(n, i)).collect();
        PowerMatrix {
            n,
            rows,
            k_max: PowerVector::uniform(n, 1),
        }
    }

    /// The single constant monomial.
    pub fn constant(n: usize) -> Self {
        PowerMatrix {
            n,
            rows: vec![PowerVector::zeros(n)],
            k_max: PowerVector::zeros(n),
        }
    }

    /// Number of variables.
    pub fn n_vars(&self) -> usize {
        self.n
    }

    /// Number of monomials `d_v`.
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[PowerVector] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &PowerVector {
        &self.rows[i]
    }

    pub fn k_max(&self) -> &PowerVector {
        &self.k_max
    }

    pub fn position(&self, k: &PowerVector) -> Option<usize> {
        // rows are sorted descending
        self.rows.binary_search_by(|row| k.cmp(row)).ok()
    }

    /// The rows at `indices`, which must be increasing; the bound is kept.
    pub fn select(&self, indices: &[usize]) -> Result<PowerMatrix> {
        let mut rows = Vec::with_capacity(indices.len());
        for &i in indices {
            let row = self
                .rows
                .get(i)
                .ok_or_else(|| Error::invalid(format!("row index {i} out of range")))?;
            rows.push(row.clone());
        }
        PowerMatrix::new(self.n, rows, self.k_max.clone())
    }

    /// Vertical concatenation; fails if the result is not strictly decreasing.
    pub fn stack(&self, lower: &PowerMatrix) -> Result<PowerMatrix> {
        if self.n != lower.n {
            return Err(Error::dims("power matrix stack", self.n, lower.n));
        }
        let mut rows = self.rows.clone();
        rows.extend(lower.rows.iter().cloned());
        let k_max = PowerVector(
            self.k_max
                .0
                .iter()
                .zip(&lower.k_max.0)
                .map(|(a, b)| *a.max(b))
                .collect(),
        );
        PowerMatrix::new(self.n, rows, k_max)
    }

    /// Union of the rows of two power matrices over the same variables.
    pub fn union(&self, other: &PowerMatrix) -> Result<PowerMatrix> {
        if self.n != other.n {
            return Err(Error::dims("power matrix union", self.n, other.n));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        rows.sort_by(|a, b| b.cmp(a));
        rows.dedup();
        let k_max = PowerVector(
            self.k_max
                .0
                .iter()
                .zip(&other.k_max.0)
                .map(|(a, b)| *a.max(b))
                .collect(),
        );
        PowerMatrix::new(self.n, rows, k_max)
    }

    /// Largest exponent appearing in any row, per variable.
    pub fn max_exponents(&self) -> Vec<u32> {
        let mut out = vec![0; self.n];
        for row in &self.rows {
            for (o, k) in out.iter_mut().zip(row.as_slice()) {
                *o = (*o).max(*k);
            }
        }
        out
    }
}

fn columnwise_max(n: usize, rows: &[PowerVector]) -> Result<PowerVector> {
    let mut k_max = vec![0; n];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::dims(format!("power matrix row {i}"), n, row.len()));
        }
        for (m, k) in k_max.iter_mut().zip(row.as_slice()) {
            *m = (*m).max(*k);
        }
    }
    Ok(PowerVector(k_max))
}

/// Number of power vectors bounded by `k_max`, `prod_j (k_max(j) + 1)`,
/// saturating at `u128::MAX`.
pub fn bounded_set_size(k_max: &PowerVector) -> u128 {
    k_max
        .as_slice()
        .iter()
        .try_fold(1u128, |acc, &k| acc.checked_mul(k as u128 + 1))
        .unwrap_or(u128::MAX)
}

/// The full bounded power vector set in decreasing lexicographic order,
/// limited to [`DEFAULT_MONOMIAL_CAP`] rows.
pub fn enumerate_power_matrix(n: usize, k_max: &PowerVector) -> Result<PowerMatrix> {
    enumerate_power_matrix_capped(n, k_max, DEFAULT_MONOMIAL_CAP)
}

pub fn enumerate_power_matrix_capped(
    n: usize,
    k_max: &PowerVector,
    cap: usize,
) -> Result<PowerMatrix> {
    if n == 0 {
        return Err(Error::invalid("power matrix needs at least one variable"));
    }
    if k_max.len() != n {
        return Err(Error::dims("enumerate_power_matrix bound", n, k_max.len()));
    }
    let count = bounded_set_size(k_max);
    if count > cap as u128 {
        return Err(Error::Capacity {
            step: "power matrix enumeration".into(),
            rows: count,
            cap,
        });
    }
    let mut rows = Vec::with_capacity(count as usize);
    let mut current = k_max.as_slice().to_vec();
    loop {
        rows.push(PowerVector(current.clone()));
        // Next smaller vector: decrement the last nonzero entry, reset the tail.
        match current.iter().rposition(|&k| k > 0) {
            Some(j) => {
                current[j] -= 1;
                for (c, m) in current[j + 1..].iter_mut().zip(&k_max.as_slice()[j + 1..]) {
                    *c = *m;
                }
            }
            None => break,
        }
    }
    Ok(PowerMatrix {
        n,
        rows,
        k_max: k_max.clone(),
    })
}

/// Evaluates `x^K`, one component per row of `K`.
pub fn eval_monomial_vector(x: &[f64], k: &PowerMatrix) -> Result<DVector<f64>> {
    if x.len() != k.n_vars() {
        return Err(Error::dims("eval_monomial_vector", k.n_vars(), x.len()));
    }
    if let Some(j) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite entry at position {j}")));
    }
    let mut out = DVector::zeros(k.n_rows());
    eval_into(x, k, out.as_mut_slice());
    Ok(out)
}

/// Unchecked evaluation into a preallocated slice.
pub(crate) fn eval_into(x: &[f64], k: &PowerMatrix, out: &mut [f64]) {
    let powers = power_table(x, &k.max_exponents());
    for (o, row) in out.iter_mut().zip(k.rows()) {
        let mut v = 1.0;
        for (j, &e) in row.as_slice().iter().enumerate() {
            if e > 0 {
                v *= powers[j][e as usize];
            }
        }
        *o = v;
    }
}

fn power_table(x: &[f64], max_exp: &[u32]) -> Vec<Vec<f64>> {
    x.iter()
        .zip(max_exp)
        .map(|(&xj, &m)| {
            let mut p = Vec::with_capacity(m as usize + 1);
            p.push(1.0);
            for e in 1..=m as usize {
                p.push(p[e - 1] * xj);
            }
            p
        })
        .collect()
}

/// Monomial data matrix: column `k` is `x^K` evaluated at `samples[k]`.
pub fn build_data_matrix<S: AsRef<[f64]>>(samples: &[S], k: &PowerMatrix) -> Result<DMatrix<f64>> {
    if samples.is_empty() {
        return Err(Error::invalid("build_data_matrix needs at least one sample"));
    }
    let mut out = DMatrix::zeros(k.n_rows(), samples.len());
    for (c, s) in samples.iter().enumerate() {
        let v = eval_monomial_vector(s.as_ref(), k)?;
        out.set_column(c, &v);
    }
    Ok(out)
}

/// As [`build_data_matrix`], with the samples given as the columns of a matrix.
pub fn lift_columns(samples: &DMatrix<f64>, k: &PowerMatrix) -> Result<DMatrix<f64>> {
    if samples.ncols() == 0 {
        return Err(Error::invalid("lift_columns needs at least one sample"));
    }
    if samples.nrows() != k.n_vars() {
        return Err(Error::dims("lift_columns", k.n_vars(), samples.nrows()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample value"));
    }
    let mut out = DMatrix::zeros(k.n_rows(), samples.ncols());
    let mut buf = vec![0.0; k.n_rows()];
    for c in 0..samples.ncols() {
        let x: Vec<f64> = samples.column(c).iter().copied().collect();
        eval_into(&x, k, &mut buf);
        out.column_mut(c).copy_from_slice(&buf);
    }
    Ok(out)
}

/// Splits `k` into row blocks of at most `block_limit` rows, lowest graded
/// order first. Each block keeps decreasing lexicographic order internally.
pub fn partition_power_matrix(k: &PowerMatrix, block_limit: usize) -> Result<Vec<PowerMatrix>> {
    if block_limit == 0 {
        return Err(Error::invalid("block_limit must be positive"));
    }
    let mut ascending: Vec<PowerVector> = k.rows().to_vec();
    ascending.sort_by(graded_cmp);
    ascending
        .chunks(block_limit)
        .map(|chunk| {
            let mut rows = chunk.to_vec();
            rows.sort_by(|a, b| b.cmp(a));
            PowerMatrix::new(k.n_vars(), rows, k.k_max().clone())
        })
        .collect()
}
