//! Generator sets and approximate polynomial factorization.
//!
//! A [`MonomialMap`] is the pair `(L, K)` representing `x -> L x^K`. The
//! reduction [`eliminate_products`] takes a linear-polynomial factorization
//! `y ~ C_r g_r(u)` and rewrites it as `y ~ h(g(u))` where `g` has fewer
//! components, by detecting generators that are (numerically) polynomials in
//! lower-order generators.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, pinv, rank_cutoff, thin_svd};
use crate::monomials::{eval_into, graded_cmp, lift_columns, PowerMatrix, PowerVector};

/// Vector polynomial map `x -> L x^K`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialMap {
    coeffs: DMatrix<f64>,
    powers: PowerMatrix,
}

impl MonomialMap {
    pub fn new(coeffs: DMatrix<f64>, powers: PowerMatrix) -> Result<Self> {
        if coeffs.ncols() != powers.n_rows() {
            return Err(Error::dims(
                "monomial map coefficient columns",
                powers.n_rows(),
                coeffs.ncols(),
            ));
        }
        Ok(Self { coeffs, powers })
    }

    /// The linear map `x -> C x` (identity power matrix).
    pub fn linear(c: DMatrix<f64>) -> Self {
        let powers = PowerMatrix::identity(c.ncols());
        Self { coeffs: c, powers }
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn powers(&self) -> &PowerMatrix {
        &self.powers
    }

    /// Input dimension.
    pub fn n_vars(&self) -> usize {
        self.powers.n_vars()
    }

    /// Output dimension.
    pub fn m(&self) -> usize {
        self.coeffs.nrows()
    }

    /// Number of monomials.
    pub fn n_terms(&self) -> usize {
        self.powers.n_rows()
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        eval_monomial_map(self, x)
    }

    /// Evaluates the map on every column of `samples`.
    pub fn eval_columns(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(&self.coeffs * lift_columns(samples, &self.powers)?)
    }

    /// Evaluation without input checks, for hot loops on validated models.
    pub(crate) fn eval_unchecked(&self, x: &[f64], scratch: &mut Vec<f64>) -> DVector<f64> {
        scratch.resize(self.powers.n_rows(), 0.0);
        eval_into(x, &self.powers, scratch);
        let mut out = DVector::zeros(self.coeffs.nrows());
        for (j, v) in scratch.iter().enumerate() {
            if *v != 0.0 {
                out.axpy(*v, &self.coeffs.column(j), 1.0);
            }
        }
        out
    }

    /// True when no coefficient column is entirely zero.
    pub fn is_nontrivial(&self) -> bool {
        self.coeffs
            .column_iter()
            .all(|c| c.iter().any(|v| *v != 0.0))
    }

    /// Drops monomials whose coefficient column is exactly zero. At least one
    /// monomial is kept so the map stays well formed.
    pub fn prune_zero_columns(&self) -> MonomialMap {
        let keep: Vec<usize> = (0..self.coeffs.ncols())
            .filter(|&j| self.coeffs.column(j).iter().any(|v| *v != 0.0))
            .collect();
        if keep.len() == self.coeffs.ncols() || keep.is_empty() {
            return self.clone();
        }
        MonomialMap {
            coeffs: self.coeffs.select_columns(keep.iter()),
            powers: self.powers.select(&keep).expect("indices in range"),
        }
    }
}

/// `L * x^K`.
pub fn eval_monomial_map(map: &MonomialMap, x: &[f64]) -> Result<DVector<f64>> {
    let v = crate::monomials::eval_monomial_vector(x, &map.powers)?;
    Ok(&map.coeffs * v)
}

/// `y = h(g(u))` with `g` the (reduced) generator set.
#[derive(Clone, Debug, PartialEq)]
pub struct Factorization {
    pub h: MonomialMap,
    pub g: MonomialMap,
}

impl Factorization {
    pub fn d_x(&self) -> usize {
        self.g.m()
    }

    pub fn eval(&self, u: &[f64]) -> Result<DVector<f64>> {
        let x = self.g.eval(u)?;
        self.h.eval(x.as_slice())
    }
}

/// Relative Gram-Schmidt threshold for accepting a candidate pivot monomial.
const PIVOT_TOL: f64 = 1e-6;

/// How many times the tolerance is tightened (by a factor of ten) when the
/// value-preservation check fails, before giving up on elimination.
const RETRIES: usize = 3;

/// Reduces the generator set of `y ~ C_r g_r(u)`.
///
/// `samples` holds one input vector per column. Returns `(h, g)` with
/// `d_x <= d_xr` such that on every sample
/// `|C_r g_r(u) - h(g(u))|_inf <= tol (1 + |C_r g_r(u)|_inf)`.
/// When nothing can be eliminated the input is returned unchanged, with `h`
/// the linear map `C_r`.
pub fn eliminate_products(
    c_r: &DMatrix<f64>,
    g_r: &MonomialMap,
    samples: &DMatrix<f64>,
    tol: f64,
) -> Result<Factorization> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::invalid(format!("tolerance {tol} is not in (0,1)")));
    }
    if samples.ncols() == 0 {
        return Err(Error::invalid("eliminate_products needs at least one sample"));
    }
    if samples.nrows() != g_r.n_vars() {
        return Err(Error::dims("sample dimension", g_r.n_vars(), samples.nrows()));
    }
    if c_r.ncols() != g_r.m() {
        return Err(Error::dims("C_r columns vs generators", g_r.m(), c_r.ncols()));
    }
    let unchanged = Factorization {
        h: MonomialMap::linear(c_r.clone()),
        g: g_r.clone(),
    };
    if g_r.m() <= 1 {
        return Ok(unchanged);
    }

    let v = lift_columns(samples, &g_r.powers)?;
    let target = c_r * &g_r.coeffs * &v;
    let Some(aligned) = align_generators(c_r, g_r, &v)? else {
        return Ok(unchanged);
    };

    let mut t = tol;
    for _ in 0..=RETRIES {
        if let Some(fact) = reduce_aligned(&aligned, g_r, t)? {
            if preserves_values(&fact, samples, &target, tol)? {
                return Ok(fact);
            }
        } else {
            break;
        }
        t /= 10.0;
    }
    Ok(unchanged)
}

/// Generators rewritten so that each one is the projection of a distinct
/// monomial (its pivot) onto the span of the original generator values.
struct Aligned {
    /// Row index into `K` of each new generator's pivot monomial.
    pivots: Vec<usize>,
    /// Values of the new generators on the samples, one row each.
    values: DMatrix<f64>,
    /// Coefficients of the new generators over `K`.
    l: DMatrix<f64>,
    /// Output coefficients over the new generators.
    c: DMatrix<f64>,
}

fn align_generators(
    c_r: &DMatrix<f64>,
    g_r: &MonomialMap,
    v: &DMatrix<f64>,
) -> Result<Option<Aligned>> {
    let g = &g_r.coeffs * v;
    let svd = thin_svd(&g)?;
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(None);
    }
    let cut = rank_cutoff(smax, g.nrows(), g.ncols());
    let rank = svd.sigma.iter().take_while(|&&s| s > cut).count();
    let g_pinv = pinv(&g)?;

    let k = &g_r.powers;
    let mut order: Vec<usize> = (0..k.n_rows()).collect();
    order.sort_by(|&a, &b| graded_cmp(k.row(a), k.row(b)));

    let mut basis: Vec<RowDVector<f64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut projections: Vec<RowDVector<f64>> = Vec::new();
    for i in order {
        let row = v.row(i);
        let p = (row * &g_pinv) * &g;
        let mut resid = p.clone();
        for q in &basis {
            let dot = q.dot(&resid);
            resid -= q * dot;
        }
        let norm = resid.norm();
        if norm > PIVOT_TOL * row.norm().max(f64::MIN_POSITIVE) {
            basis.push(resid / norm);
            pivots.push(i);
            projections.push(p);
            if pivots.len() == rank {
                break;
            }
        }
    }
    if pivots.len() < rank {
        return Ok(None);
    }
    let values = DMatrix::from_rows(&projections);
    let t = &values * &g_pinv;
    let l = &t * &g_r.coeffs;
    let c = (c_r * &g) * pinv(&values)?;
    Ok(Some(Aligned {
        pivots,
        values,
        l,
        c,
    }))
}

#[derive(Clone, Copy, Debug)]
enum Term {
    Const,
    Lin(usize),
    Prod(usize, usize),
}

type Poly = BTreeMap<Vec<u32>, f64>;

/// Greedy elimination of aligned generators that are numerically polynomial
/// in lower-order ones. Returns `None` when nothing is eliminated.
fn reduce_aligned(a: &Aligned, g_r: &MonomialMap, tol: f64) -> Result<Option<Factorization>> {
    let k = &g_r.powers;
    let m = a.pivots.len();
    let pivot = |i: usize| k.row(a.pivots[i]);
    let deg = |i: usize| pivot(i).degree();

    let mut by_rank: Vec<usize> = (0..m).collect();
    by_rank.sort_by(|&x, &y| graded_cmp(pivot(x), pivot(y)));
    let mut alive = vec![true; m];
    let mut exprs: Vec<Option<Vec<(Term, f64)>>> = vec![None; m];
    let s = a.values.ncols();

    for pos in (0..m).rev() {
        let target = by_rank[pos];
        if alive.iter().filter(|&&x| x).count() <= 1 {
            break;
        }
        let lower: Vec<usize> = by_rank[..pos].iter().copied().filter(|&i| alive[i]).collect();
        let mut terms = vec![Term::Const];
        let mut cols: Vec<DVector<f64>> = vec![DVector::from_element(s, 1.0)];
        for &i in &lower {
            terms.push(Term::Lin(i));
            cols.push(a.values.row(i).transpose());
        }
        for (ai, &i) in lower.iter().enumerate() {
            for &j in &lower[ai..] {
                if deg(i) == 0 || deg(j) == 0 || deg(i) + deg(j) > deg(target) {
                    continue;
                }
                terms.push(Term::Prod(i, j));
                let prod = a.values.row(i).component_mul(&a.values.row(j));
                cols.push(prod.transpose());
            }
        }
        let design = DMatrix::from_columns(&cols);
        let y = a.values.row(target).transpose();
        let coef = lstsq(&design, &y)?;
        let ynorm = y.norm().max(f64::MIN_POSITIVE);
        let resid = (&design * &coef - &y).norm() / ynorm;
        if resid <= tol {
            alive[target] = false;
            exprs[target] = Some(terms.into_iter().zip(coef.iter().copied()).collect());
        }
    }
    if alive.iter().all(|&x| x) {
        return Ok(None);
    }

    // survivors in decreasing lexicographic order of their pivots
    let mut survivors: Vec<usize> = (0..m).filter(|&i| alive[i]).collect();
    survivors.sort_by(|&x, &y| pivot(y).cmp(pivot(x)));
    let d = survivors.len();
    let mut slot = vec![usize::MAX; m];
    for (pos, &i) in survivors.iter().enumerate() {
        slot[i] = pos;
    }

    let mut memo: Vec<Option<Poly>> = vec![None; m];
    for i in 0..m {
        poly_of(i, d, &slot, &exprs, &mut memo);
    }
    let mut monomials: Vec<PowerVector> = memo
        .iter()
        .flat_map(|p| p.as_ref().expect("filled").keys().cloned())
        .map(PowerVector::new)
        .collect();
    monomials.sort();
    monomials.dedup();
    monomials.reverse();
    let kh = PowerMatrix::from_rows(d, monomials)?;
    let mut ph = DMatrix::zeros(m, kh.n_rows());
    for (i, p) in memo.iter().enumerate() {
        for (key, &c) in p.as_ref().expect("filled") {
            let col = kh.position(&PowerVector::new(key.clone())).expect("present");
            ph[(i, col)] = c;
        }
    }
    let h = MonomialMap::new(&a.c * ph, kh)?;
    let g = MonomialMap::new(a.l.select_rows(survivors.iter()), g_r.powers.clone())?;
    Ok(Some(Factorization {
        h,
        g: g.prune_zero_columns(),
    }))
}

fn poly_of(
    i: usize,
    d: usize,
    slot: &[usize],
    exprs: &[Option<Vec<(Term, f64)>>],
    memo: &mut Vec<Option<Poly>>,
) -> Poly {
    if let Some(p) = &memo[i] {
        return p.clone();
    }
    let mut p = Poly::new();
    match &exprs[i] {
        None => {
            let mut key = vec![0; d];
            key[slot[i]] = 1;
            p.insert(key, 1.0);
        }
        Some(terms) => {
            for &(term, c) in terms {
                match term {
                    Term::Const => *p.entry(vec![0; d]).or_insert(0.0) += c,
                    Term::Lin(j) => {
                        for (key, v) in poly_of(j, d, slot, exprs, memo) {
                            *p.entry(key).or_insert(0.0) += c * v;
                        }
                    }
                    Term::Prod(j, l) => {
                        let pj = poly_of(j, d, slot, exprs, memo);
                        let pl = poly_of(l, d, slot, exprs, memo);
                        for (kj, vj) in &pj {
                            for (kl, vl) in &pl {
                                let key: Vec<u32> = kj.iter().zip(kl).map(|(a, b)| a + b).collect();
                                *p.entry(key).or_insert(0.0) += c * vj * vl;
                            }
                        }
                    }
                }
            }
        }
    }
    memo[i] = Some(p.clone());
    p
}

fn preserves_values(
    fact: &Factorization,
    samples: &DMatrix<f64>,
    target: &DMatrix<f64>,
    tol: f64,
) -> Result<bool> {
    let x = fact.g.eval_columns(samples)?;
    let y = fact.h.eval_columns(&x)?;
    for (want, got) in target.column_iter().zip(y.column_iter()) {
        let scale = 1.0 + want.amax();
        if (want - got).amax() > tol * scale {
            return Ok(false);
        }
    }
    Ok(true)
}
