//! Identification of an observer system from output time series.
//!
//! The outer loop grows the future and past horizons together. Each
//! iteration lifts the past window into monomials, fits the future window
//! through a truncated SVD, prunes and reduces the resulting generator set to
//! obtain the state map and the output map, and finally regresses the next
//! state on monomials of the current state and output.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::genred::{eliminate_products, MonomialMap};
use crate::model::{predict_one_step, ObserverModel, PastStateMap, PredictionReport, Provenance, Scaling};
use crate::monomials::{
    enumerate_power_matrix_capped, lift_columns, partition_power_matrix, PowerMatrix, PowerVector,
    DEFAULT_MONOMIAL_CAP,
};
use crate::numred::{lk_reduce, svd_trunc, TruncationTable};

/// A set of `s` output series of dimension `d_y` and common length `t_1`.
///
/// Time indices are 1-based, series indices 0-based. Each series also
/// carries an integer id used in files and error messages.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesSet {
    d_y: usize,
    t_1: usize,
    ids: Vec<i64>,
    /// One `d_y x t_1` matrix per series.
    data: Vec<DMatrix<f64>>,
}

impl TimeSeriesSet {
    /// Series with ids `1..=s`.
    pub fn new(series: Vec<DMatrix<f64>>) -> Result<Self> {
        let ids = (1..=series.len() as i64).collect();
        Self::with_ids(ids, series)
    }

    pub fn with_ids(ids: Vec<i64>, series: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = series.first() else {
            return Err(Error::invalid("a time series set needs at least one series"));
        };
        if ids.len() != series.len() {
            return Err(Error::dims("series ids", series.len(), ids.len()));
        }
        let (d_y, t_1) = first.shape();
        if d_y == 0 || t_1 == 0 {
            return Err(Error::invalid("series need d_y >= 1 and t_1 >= 1"));
        }
        for (k, m) in series.iter().enumerate() {
            if m.nrows() != d_y {
                return Err(Error::dims(format!("output dimension of series {}", ids[k]), d_y, m.nrows()));
            }
            if m.ncols() != t_1 {
                return Err(Error::dims(format!("length of series {}", ids[k]), t_1, m.ncols()));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("series {} has non-finite values", ids[k])));
            }
        }
        Ok(Self {
            d_y,
            t_1,
            ids,
            data: series,
        })
    }

    /// From `series[k][t-1][i]`.
    pub fn from_nested(series: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let mut mats = Vec::with_capacity(series.len());
        for (k, s) in series.iter().enumerate() {
            let d_y = s.first().map_or(0, Vec::len);
            if let Some(bad) = s.iter().position(|y| y.len() != d_y) {
                return Err(Error::invalid(format!(
                    "series {} has a ragged output at t = {}",
                    k + 1,
                    bad + 1
                )));
            }
            let flat: Vec<f64> = s.iter().flatten().copied().collect();
            mats.push(DMatrix::from_column_slice(d_y, s.len(), &flat));
        }
        Self::new(mats)
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn t_1(&self) -> usize {
        self.t_1
    }

    pub fn s(&self) -> usize {
        self.data.len()
    }

    pub fn series_ids(&self) -> &[i64] {
        &self.ids
    }

    /// The `d_y x t_1` matrix of series `k`.
    pub fn series(&self, k: usize) -> &DMatrix<f64> {
        &self.data[k]
    }

    pub fn iter_series(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.data.iter()
    }

    /// `y(t)` of series `k`, with `t` in `1..=t_1`.
    pub fn y(&self, t: usize, k: usize) -> &[f64] {
        let start = (t - 1) * self.d_y;
        &self.data[k].as_slice()[start..start + self.d_y]
    }

    /// Applies `f` to every output vector.
    pub fn map_values(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let data = self
            .data
            .iter()
            .map(|m| {
                let mut out = m.clone();
                for mut col in out.column_iter_mut() {
                    let v = f(col.as_slice());
                    col.copy_from_slice(&v);
                }
                out
            })
            .collect();
        Self {
            d_y: self.d_y,
            t_1: self.t_1,
            ids: self.ids.clone(),
            data,
        }
    }

    /// The series at positions `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.s()) {
            return Err(Error::invalid(format!("series index {bad} out of range")));
        }
        Self::with_ids(
            indices.iter().map(|&i| self.ids[i]).collect(),
            indices.iter().map(|&i| self.data[i].clone()).collect(),
        )
    }
}

/// Exponent bound on the state variables when lifting `(x, y)`.
///
/// The state dimension is only known once the generator set is reduced, so
/// a single bound applied to every state coordinate is the common choice.
#[derive(Clone, Debug, PartialEq)]
pub enum StateBound {
    Uniform(u32),
    PerState(Vec<u32>),
}

impl StateBound {
    fn resolve(&self, n: usize) -> Result<Vec<u32>> {
        match self {
            StateBound::Uniform(k) => Ok(vec![*k; n]),
            StateBound::PerState(v) if v.len() == n => Ok(v.clone()),
            StateBound::PerState(v) => Err(Error::dims("k_max_x length vs state dimension", n, v.len())),
        }
    }
}

impl std::fmt::Display for StateBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateBound::Uniform(k) => write!(f, "{k}"),
            StateBound::PerState(v) => write!(f, "{v:?}"),
        }
    }
}

/// Expected state dimension used for the default horizon maxima.
pub const DEFAULT_EXPECTED_STATE_DIM: usize = 2;

/// Default row limit of one block of the past power matrix.
pub const DEFAULT_BLOCK_LIMIT: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct IdentConfig {
    /// Truncation threshold of the past-to-future fit.
    pub r1: f64,
    /// Truncation threshold of the dynamics fit.
    pub r2: f64,
    /// Tolerance of generator elimination.
    pub r3: f64,
    /// Column pruning threshold for both the generator set and the dynamics.
    pub r4: f64,
    pub t_plus_min: usize,
    pub t_minus_min: usize,
    pub t_plus_max: usize,
    pub t_minus_max: usize,
    /// Per output dimension bound for the past lifting (length `d_y`, or 1 to
    /// apply the same bound to every dimension).
    pub k_max_y: Vec<u32>,
    pub k_max_x: StateBound,
    /// Bound on the current output in the dynamics lifting (length `d_y` or 1).
    pub k_max_y2: Vec<u32>,
    pub block_limit: usize,
    /// Anchor time; defaults to `t_minus_max + 1`.
    pub anchor_t: Option<usize>,
    /// Pool every admissible window position as extra samples. `None` turns
    /// pooling on when `s < 4 d_v-`.
    pub pool_windows: Option<bool>,
    /// Center and scale every output dimension before lifting.
    pub scaling: bool,
    pub monomial_cap: usize,
}

impl IdentConfig {
    /// Configuration with the given thresholds and default structure.
    pub fn new(r1: f64, r2: f64, r3: f64, r4: f64) -> Self {
        let h = 4 * DEFAULT_EXPECTED_STATE_DIM;
        Self {
            r1,
            r2,
            r3,
            r4,
            t_plus_min: 1,
            t_minus_min: 1,
            t_plus_max: h,
            t_minus_max: h,
            k_max_y: vec![1],
            k_max_x: StateBound::Uniform(1),
            k_max_y2: vec![1],
            block_limit: DEFAULT_BLOCK_LIMIT,
            anchor_t: None,
            pool_windows: None,
            scaling: true,
            monomial_cap: DEFAULT_MONOMIAL_CAP,
        }
    }

    pub fn with_horizons(mut self, min: (usize, usize), max: (usize, usize)) -> Self {
        (self.t_plus_min, self.t_minus_min) = min;
        (self.t_plus_max, self.t_minus_max) = max;
        self
    }

    pub fn anchor(&self) -> usize {
        self.anchor_t.unwrap_or(self.t_minus_max + 1)
    }

    /// Checks the configuration against a data set.
    pub fn validate(&self, ts: &TimeSeriesSet) -> Result<()> {
        for (name, r) in [("r1", self.r1), ("r2", self.r2), ("r3", self.r3), ("r4", self.r4)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::invalid(format!("{name} = {r} is not in (0,1)")));
            }
        }
        if self.t_plus_min == 0 || self.t_minus_min == 0 {
            return Err(Error::invalid("horizons must be positive"));
        }
        if self.t_plus_min > self.t_plus_max || self.t_minus_min > self.t_minus_max {
            return Err(Error::invalid("horizon minima exceed maxima"));
        }
        if self.block_limit == 0 {
            return Err(Error::invalid("block_limit must be positive"));
        }
        expand_bound("k_max_y", &self.k_max_y, ts.d_y())?;
        expand_bound("k_max_y2", &self.k_max_y2, ts.d_y())?;
        let t = self.anchor();
        if t <= self.t_minus_max {
            return Err(Error::invalid(format!(
                "anchor t = {t} leaves fewer than t_minus_max = {} past samples",
                self.t_minus_max
            )));
        }
        if 2 * t > ts.t_1() {
            return Err(Error::invalid(format!(
                "anchor t = {t} exceeds t_1/2 = {}",
                ts.t_1() as f64 / 2.0
            )));
        }
        if t + self.t_plus_max - 1 > ts.t_1() {
            return Err(Error::invalid(format!(
                "future window of length {} at t = {t} runs past t_1 = {}",
                self.t_plus_max,
                ts.t_1()
            )));
        }
        Ok(())
    }

    /// The settings as text, for reports and model provenance.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("r1", self.r1.to_string());
        put("r2", self.r2.to_string());
        put("r3", self.r3.to_string());
        put("r4", self.r4.to_string());
        put("t_plus_min", self.t_plus_min.to_string());
        put("t_minus_min", self.t_minus_min.to_string());
        put("t_plus_max", self.t_plus_max.to_string());
        put("t_minus_max", self.t_minus_max.to_string());
        put("k_max_y", format!("{:?}", self.k_max_y));
        put("k_max_x", self.k_max_x.to_string());
        put("k_max_y2", format!("{:?}", self.k_max_y2));
        put("block_limit", self.block_limit.to_string());
        put(
            "anchor_t",
            self.anchor_t.map_or_else(|| format!("auto ({})", self.anchor()), |t| t.to_string()),
        );
        put(
            "pool_windows",
            self.pool_windows.map_or_else(|| "auto".to_string(), |p| p.to_string()),
        );
        put("scaling", self.scaling.to_string());
        put("monomial_cap", self.monomial_cap.to_string());
        m
    }
}

fn expand_bound(name: &str, bound: &[u32], d_y: usize) -> Result<Vec<u32>> {
    match bound.len() {
        1 => Ok(vec![bound[0]; d_y]),
        l if l == d_y => Ok(bound.to_vec()),
        l => Err(Error::dims(format!("{name} length"), d_y, l)),
    }
}

/// Stacked past `(y(t-1); ...; y(t-t_minus))` of every series, one column
/// per series.
fn past_window(ts: &TimeSeriesSet, t: usize, t_minus: usize) -> Result<DMatrix<f64>> {
    if t_minus == 0 || t <= t_minus || t > ts.t_1() + 1 {
        return Err(Error::invalid(format!(
            "past window of length {t_minus} at t = {t} is outside 1..={}",
            ts.t_1()
        )));
    }
    let d_y = ts.d_y();
    let mut out = DMatrix::zeros(t_minus * d_y, ts.s());
    for k in 0..ts.s() {
        for lag in 0..t_minus {
            let y = ts.y(t - 1 - lag, k);
            for i in 0..d_y {
                out[(lag * d_y + i, k)] = y[i];
            }
        }
    }
    Ok(out)
}

/// Future and past window vectors at time `t`.
///
/// Column `k` of the first matrix stacks `y(t+t_plus-1), ..., y(t)` and
/// column `k` of the second stacks `y(t-1), ..., y(t-t_minus)`, top to bottom.
pub fn build_window_vectors(
    ts: &TimeSeriesSet,
    t: usize,
    t_plus: usize,
    t_minus: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if t_plus == 0 || t == 0 || t + t_plus - 1 > ts.t_1() {
        return Err(Error::invalid(format!(
            "future window of length {t_plus} at t = {t} is outside 1..={}",
            ts.t_1()
        )));
    }
    let minus = past_window(ts, t, t_minus)?;
    let plus = past_window(ts, t + t_plus, t_plus)?;
    Ok((plus, minus))
}

/// Diagnostics of one block of the past power matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagnostics {
    /// Monomials offered to the fit (kept ones from earlier blocks plus this block).
    pub monomials: usize,
    pub n1: usize,
    /// Monomials surviving the column pruning.
    pub kept: usize,
    pub table1: TruncationTable,
}

/// Diagnostics of one horizon iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationDiagnostics {
    pub t_plus: usize,
    pub t_minus: usize,
    pub pooled: bool,
    /// Sample columns of the data matrices.
    pub columns: usize,
    /// Rows of the full past power matrix.
    pub past_monomials: usize,
    pub blocks: Vec<BlockDiagnostics>,
    /// Retained rank of the last block's fit.
    pub n1: usize,
    /// Relative Frobenius residual of the future fit.
    pub future_fit_residual: f64,
    /// Generators after pruning.
    pub generators_pruned: usize,
    /// State dimension after generator elimination.
    pub n: usize,
    pub output_terms: usize,
    /// Rows of the `(x, y)` power matrix.
    pub dynamics_monomials: usize,
    pub n2: usize,
    pub table2: TruncationTable,
    pub dynamics_terms: usize,
}

#[derive(Clone, Debug)]
pub struct IdentDiagnostics {
    pub iterations: Vec<IterationDiagnostics>,
    /// Horizons of the returned model.
    pub t_plus: usize,
    pub t_minus: usize,
    pub anchor_t: usize,
    pub pooled: bool,
    pub scaling: Option<Scaling>,
    pub config: BTreeMap<String, String>,
    /// One-step predictions of the training series from the stored initial
    /// states, or the error that stopped them.
    pub training: std::result::Result<PredictionReport, Error>,
}

struct Iteration {
    diag: IterationDiagnostics,
    f_o: MonomialMap,
    h_o: MonomialMap,
    g_io: MonomialMap,
}

/// Identifies an observer model from `ts`.
pub fn identify(ts: &TimeSeriesSet, cfg: &IdentConfig) -> Result<(ObserverModel, IdentDiagnostics)> {
    cfg.validate(ts)?;
    let scaling = cfg.scaling.then(|| Scaling::fit(ts));
    let scaled = match &scaling {
        Some(sc) => sc.apply_set(ts),
        None => ts.clone(),
    };

    let steps = (cfg.t_plus_max - cfg.t_plus_min).max(cfg.t_minus_max - cfg.t_minus_min) + 1;
    let mut last: Option<Iteration> = None;
    let mut iterations = Vec::new();
    for i in 0..steps {
        let t_plus = (cfg.t_plus_min + i).min(cfg.t_plus_max);
        let t_minus = (cfg.t_minus_min + i).min(cfg.t_minus_max);
        let it = run_iteration(&scaled, cfg, t_plus, t_minus)?;
        let plateau = iterations
            .last()
            .is_some_and(|prev: &IterationDiagnostics| prev.n1 == it.diag.n1);
        iterations.push(it.diag.clone());
        last = Some(it);
        if plateau {
            break;
        }
    }
    let it = last.expect("at least one iteration");

    let anchor_t = cfg.anchor();
    let t_minus = it.diag.t_minus;
    let x0 = it.g_io.eval_columns(&past_window(&scaled, anchor_t, t_minus)?)?;
    let model = ObserverModel {
        n: it.diag.n,
        d_y: ts.d_y(),
        f_o: it.f_o,
        h_o: it.h_o,
        g_io: Some(PastStateMap {
            lags: t_minus,
            map: it.g_io,
        }),
        x0,
        start_t: anchor_t,
        scaling: scaling.clone(),
        provenance: Provenance {
            t_plus: it.diag.t_plus,
            t_minus,
            anchor_t,
            pooled: it.diag.pooled,
            config: cfg.echo(),
        },
    };
    model.validate()?;
    let training = predict_one_step(&model, ts, &model.x0, anchor_t);
    let diagnostics = IdentDiagnostics {
        t_plus: it.diag.t_plus,
        t_minus,
        anchor_t,
        pooled: it.diag.pooled,
        iterations,
        scaling,
        config: cfg.echo(),
        training,
    };
    Ok((model, diagnostics))
}

fn non_finite(m: &DMatrix<f64>) -> bool {
    m.iter().any(|v| !v.is_finite())
}

fn overflow(step: &str) -> Error {
    Error::NumericalOverflow { step: step.into() }
}

fn rename_capacity(e: Error, step: &str) -> Error {
    match e {
        Error::Capacity { rows, cap, .. } => Error::Capacity {
            step: step.into(),
            rows,
            cap,
        },
        other => other,
    }
}

fn run_iteration(ts: &TimeSeriesSet, cfg: &IdentConfig, t_plus: usize, t_minus: usize) -> Result<Iteration> {
    let d_y = ts.d_y();
    let k_y = expand_bound("k_max_y", &cfg.k_max_y, d_y)?;
    let k_past = PowerVector::new(k_y).repeat(t_minus);
    let full = enumerate_power_matrix_capped(t_minus * d_y, &k_past, cfg.monomial_cap)
        .map_err(|e| rename_capacity(e, "past monomial lifting"))?;

    let pooled = cfg.pool_windows.unwrap_or(ts.s() < 4 * full.n_rows());
    let anchors: Vec<usize> = if pooled {
        (t_minus + 1..=ts.t_1() + 1 - t_plus).collect()
    } else {
        vec![cfg.anchor()]
    };

    // Windows at every anchor, side by side.
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    let mut minus_next = Vec::new();
    let mut current = Vec::new();
    for &a in &anchors {
        let (p, m) = build_window_vectors(ts, a, t_plus, t_minus)?;
        plus.push(p);
        minus.push(m);
        minus_next.push(past_window(ts, a + 1, t_minus)?);
        current.push(past_window(ts, a + 1, 1)?);
    }
    let v_plus = hcat(&plus);
    let y_minus = hcat(&minus);
    let y_minus_next = hcat(&minus_next);
    let y_now = hcat(&current);
    let columns = v_plus.ncols();

    // Past-to-future fit, block by block, pruning after each block.
    let mut blocks = Vec::new();
    let mut kept: Option<PowerMatrix> = None;
    let mut fit = None;
    for block in partition_power_matrix(&full, cfg.block_limit)? {
        let k_cur = match &kept {
            Some(k) => k.union(&block)?,
            None => block,
        };
        let v_minus = lift_columns(&y_minus, &k_cur)?;
        if non_finite(&v_minus) {
            return Err(overflow("past monomial lifting"));
        }
        let res = svd_trunc(&v_plus, &v_minus, cfg.r1)?;
        if columns <= res.n {
            return Err(Error::RankDeficient {
                columns,
                rank: res.n,
                table: res.table.to_text(),
            });
        }
        let red = lk_reduce(&res.l, &k_cur, cfg.r4)?;
        blocks.push(BlockDiagnostics {
            monomials: k_cur.n_rows(),
            n1: res.n,
            kept: red.k.n_rows(),
            table1: res.table.clone(),
        });
        let residual = res.relative_residual(&v_plus, &v_minus);
        kept = Some(red.k.clone());
        fit = Some((res.c, red, residual));
    }
    let (c, red, future_fit_residual) = fit.expect("at least one block");
    let n1 = blocks.last().map_or(0, |b| b.n1);
    let generators_pruned = red.k.n_rows();

    // Generator reduction and the output map.
    let g_r = MonomialMap::new(red.l, red.k)?;
    let fact = eliminate_products(&c, &g_r, &y_minus, cfg.r3)?;
    let n = fact.d_x();
    if n == 0 {
        return Err(Error::DegenerateModel("every generator was pruned".into()));
    }
    let rows = fact.h.m();
    let h_o = MonomialMap::new(
        fact.h.coeffs().rows(rows - d_y, d_y).into_owned(),
        fact.h.powers().clone(),
    )?
    .prune_zero_columns();
    let g_io = fact.g;

    // Current and next state on the samples.
    let x_now = g_io.eval_columns(&y_minus)?;
    let x_next = g_io.eval_columns(&y_minus_next)?;
    if non_finite(&x_now) || non_finite(&x_next) {
        return Err(overflow("state evaluation"));
    }

    // Dynamics regression over monomials of (x, y).
    let mut bound = cfg.k_max_x.resolve(n)?;
    bound.extend(expand_bound("k_max_y2", &cfg.k_max_y2, d_y)?);
    let k_xy = enumerate_power_matrix_capped(n + d_y, &PowerVector::new(bound), cfg.monomial_cap)
        .map_err(|e| rename_capacity(e, "state-output monomial lifting"))?;
    let xy = stack(&x_now, &y_now);
    let v_xy = lift_columns(&xy, &k_xy)?;
    if non_finite(&v_xy) {
        return Err(overflow("state-output monomial lifting"));
    }
    let dyn_fit = svd_trunc(&x_next, &v_xy, cfg.r2)?;
    if columns <= dyn_fit.n {
        return Err(Error::RankDeficient {
            columns,
            rank: dyn_fit.n,
            table: dyn_fit.table.to_text(),
        });
    }
    let pruned = lk_reduce(&dyn_fit.h_star, &k_xy, cfg.r4)?;
    // Refit on the surviving monomials so that pruning does not leave the
    // remaining coefficients biased.
    let v_f = v_xy.select_rows(pruned.kept.iter());
    let refit = svd_trunc(&x_next, &v_f, cfg.r2)?;
    let f_o = MonomialMap::new(refit.h_star, pruned.k)?;

    let diag = IterationDiagnostics {
        t_plus,
        t_minus,
        pooled,
        columns,
        past_monomials: full.n_rows(),
        blocks,
        n1,
        future_fit_residual,
        generators_pruned,
        n,
        output_terms: h_o.n_terms(),
        dynamics_monomials: k_xy.n_rows(),
        n2: dyn_fit.n,
        table2: dyn_fit.table,
        dynamics_terms: f_o.n_terms(),
    };
    Ok(Iteration { diag, f_o, h_o, g_io })
}

fn hcat(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        out.columns_mut(at, p.ncols()).copy_from(p);
        at += p.ncols();
    }
    out
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(values: &[f64]) -> TimeSeriesSet {
        TimeSeriesSet::from_nested(vec![values.iter().map(|v| vec![*v]).collect()]).unwrap()
    }

    #[test]
    fn window_example() {
        let ts = scalar(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (p, m) = build_window_vectors(&ts, 4, 2, 2).unwrap();
        assert_eq!(p.as_slice(), &[5.0, 4.0]);
        assert_eq!(m.as_slice(), &[3.0, 2.0]);
        let (p, _) = build_window_vectors(&ts, 4, 1, 2).unwrap();
        assert_eq!(p.as_slice(), &[4.0]);
        assert!(build_window_vectors(&ts, 2, 1, 2).is_err());
        assert!(build_window_vectors(&ts, 6, 2, 1).is_err());
    }

    #[test]
    fn vector_window_is_one_block() {
        let ts = TimeSeriesSet::from_nested(vec![vec![vec![1.0, 10.0], vec![2.0, 20.0]]]).unwrap();
        let (p, m) = build_window_vectors(&ts, 2, 1, 1).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 10.0]);
        assert_eq!(p.as_slice(), &[2.0, 20.0]);
    }

    #[test]
    fn window_shift_relation() {
        let ts = scalar(&[1.0, -2.0, 3.5, 4.0, 0.5, 6.0, 7.0]);
        let (_, now) = build_window_vectors(&ts, 4, 1, 3).unwrap();
        let (_, next) = build_window_vectors(&ts, 5, 1, 3).unwrap();
        assert_eq!(next.rows(1, 2), now.rows(0, 2));
    }

    fn halving_set(s: usize, t_1: usize) -> TimeSeriesSet {
        let series = (0..s)
            .map(|k| {
                let x0 = -1.0 + 2.0 * (k as f64 + 0.5) / s as f64;
                (0..t_1).map(|t| vec![x0 * 0.5f64.powi(t as i32)]).collect()
            })
            .collect();
        TimeSeriesSet::from_nested(series).unwrap()
    }

    #[test]
    fn identifies_halving_system() {
        let ts = halving_set(20, 12);
        let mut cfg = IdentConfig::new(0.9999, 0.9999, 1e-3, 1e-3).with_horizons((2, 2), (2, 2));
        cfg.k_max_y = vec![1];
        let (model, diag) = identify(&ts, &cfg).unwrap();
        let report = diag.training.unwrap();
        let max_err = report
            .residuals
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_err <= 1e-6, "max abs error {max_err}");
        assert_eq!(model.d_y, 1);
    }

    #[test]
    fn constant_series_predict_the_constant() {
        let ts = TimeSeriesSet::from_nested(vec![vec![vec![2.5]; 10]; 6]).unwrap();
        let cfg = IdentConfig::new(0.99, 0.99, 1e-3, 1e-3).with_horizons((1, 1), (2, 2));
        let (model, diag) = identify(&ts, &cfg).unwrap();
        let report = diag.training.unwrap();
        for p in &report.predictions {
            assert!(p.iter().all(|v| (v - 2.5).abs() < 1e-12));
        }
        assert!(model.n >= 1);
    }

    #[test]
    fn state_columns_match_map_evaluation() {
        let ts = halving_set(10, 12);
        let cfg = IdentConfig::new(0.9999, 0.9999, 1e-3, 1e-3).with_horizons((2, 2), (2, 2));
        let (model, _) = identify(&ts, &cfg).unwrap();
        let g = model.g_io.as_ref().unwrap();
        let scaled = model.scaling.as_ref().unwrap().apply_set(&ts);
        for k in 0..ts.s() {
            let mut past = Vec::new();
            for lag in 0..g.lags {
                past.extend_from_slice(scaled.y(model.start_t - 1 - lag, k));
            }
            let x = g.map.eval(&past).unwrap();
            assert_eq!(x.as_slice(), model.x0.column(k).as_slice());
        }
    }

    #[test]
    fn too_few_samples_is_rank_deficient() {
        let ts = halving_set(2, 12);
        let mut cfg = IdentConfig::new(0.999999, 0.9999, 1e-3, 1e-3).with_horizons((2, 2), (2, 2));
        cfg.pool_windows = Some(false);
        cfg.k_max_y = vec![3];
        let err = identify(&ts, &cfg).unwrap_err();
        assert_eq!(err.code(), "RANK_DEFICIENT");
    }

    #[test]
    fn capacity_error_names_the_step() {
        let ts = halving_set(4, 12);
        let mut cfg = IdentConfig::new(0.9, 0.9, 1e-3, 1e-3).with_horizons((2, 2), (2, 2));
        cfg.monomial_cap = 3;
        match identify(&ts, &cfg).unwrap_err() {
            Error::Capacity { step, .. } => assert_eq!(step, "past monomial lifting"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn config_validation() {
        let ts = halving_set(4, 12);
        let base = IdentConfig::new(0.9, 0.9, 1e-3, 1e-3).with_horizons((1, 1), (2, 2));
        assert!(base.validate(&ts).is_ok());
        let mut c = base.clone();
        c.r2 = 1.0;
        assert!(c.validate(&ts).is_err());
        let mut c = base.clone();
        c.anchor_t = Some(7);
        assert!(c.validate(&ts).is_err());
        let mut c = base.clone();
        c.t_plus_min = 3;
        assert!(c.validate(&ts).is_err());
        let mut c = base;
        c.k_max_y = vec![1, 1];
        assert!(c.validate(&ts).is_err());
    }

    #[test]
    fn identify_is_deterministic() {
        let ts = halving_set(8, 12);
        let cfg = IdentConfig::new(0.9999, 0.9999, 1e-3, 1e-3).with_horizons((1, 1), (2, 2));
        let (a, da) = identify(&ts, &cfg).unwrap();
        let (b, db) = identify(&ts, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(da.iterations, db.iterations);
    }
}
