//! The identified observer system.
//!
//! ```text
//! x(t+1)   = f_o(x(t), y(t))
//! y(t|t-1) = h_o(x(t))
//! ```
//!
//! The recursion is driven by the measured outputs, so a prediction at time
//! `t` only depends on the initial state and on `y` before `t`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::genred::MonomialMap;
use crate::monomials::{PowerMatrix, PowerVector};
use crate::pipeline::TimeSeriesSet;

/// States whose magnitude exceeds this bound are reported as divergence.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Identifier written into every model document.
pub const MODEL_FORMAT: &str = "subalgebraic-observer-model";
pub const MODEL_VERSION: u32 = 1;

/// Per-dimension affine output transform `y_s = (y - mean) / scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    pub fn identity(d_y: usize) -> Self {
        Self {
            mean: vec![0.0; d_y],
            scale: vec![1.0; d_y],
        }
    }

    /// Mean and population standard deviation of every output dimension over
    /// all times and series. A zero deviation falls back to scale 1.
    pub fn fit(ts: &TimeSeriesSet) -> Self {
        let d_y = ts.d_y();
        let count = (ts.t_1() * ts.s()) as f64;
        let mut mean = vec![0.0; d_y];
        for series in ts.iter_series() {
            for col in series.column_iter() {
                for (m, v) in mean.iter_mut().zip(col.iter()) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; d_y];
        for series in ts.iter_series() {
            for col in series.column_iter() {
                for ((acc, v), m) in var.iter_mut().zip(col.iter()).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / count).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn apply_set(&self, ts: &TimeSeriesSet) -> TimeSeriesSet {
        ts.map_values(|y| self.apply(y))
    }
}

/// The map `g_io` from the stacked past `y^-(t) = (y(t-1); ...; y(t-lags))`
/// to the state `x(t)`, kept so that new series can be given initial states.
#[derive(Clone, Debug, PartialEq)]
pub struct PastStateMap {
    pub lags: usize,
    pub map: MonomialMap,
}

/// Where a model came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    pub t_plus: usize,
    pub t_minus: usize,
    pub anchor_t: usize,
    pub pooled: bool,
    /// Echo of the identification settings, as text.
    pub config: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObserverModel {
    pub n: usize,
    pub d_y: usize,
    /// Over the `n + d_y` variables `(x, y)`, `n` outputs.
    pub f_o: MonomialMap,
    /// Over the `n` state variables, `d_y` outputs.
    pub h_o: MonomialMap,
    pub g_io: Option<PastStateMap>,
    /// Initial states of the training series at `start_t`, `n x s`.
    pub x0: DMatrix<f64>,
    /// Time index (1-based) at which `x0` applies.
    pub start_t: usize,
    /// When present the maps work in scaled output units.
    pub scaling: Option<Scaling>,
    pub provenance: Provenance,
}

impl ObserverModel {
    /// Checks arities and finiteness.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.n == 0 || self.d_y == 0 {
            return fail("state and output dimensions must be positive".into());
        }
        check_map("f_o", &self.f_o, self.n + self.d_y, self.n)?;
        check_map("h_o", &self.h_o, self.n, self.d_y)?;
        if let Some(g) = &self.g_io {
            if g.lags == 0 {
                return fail("g_io needs at least one lag".into());
            }
            check_map("g_io", &g.map, g.lags * self.d_y, self.n)?;
        }
        if self.x0.nrows() != self.n {
            return fail(format!("x0 has {} rows, expected {}", self.x0.nrows(), self.n));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return fail("x0 has non-finite entries".into());
        }
        if self.start_t == 0 {
            return fail("start_t is 1-based".into());
        }
        if let Some(sc) = &self.scaling {
            if sc.mean.len() != self.d_y || sc.scale.len() != self.d_y {
                return fail("scaling length differs from d_y".into());
            }
            if sc.mean.iter().any(|v| !v.is_finite())
                || sc.scale.iter().any(|v| !(v.is_finite() && *v > 0.0))
            {
                return fail("scaling needs finite means and positive scales".into());
            }
        }
        Ok(())
    }

    fn to_model_units(&self, y: &[f64]) -> Vec<f64> {
        match &self.scaling {
            Some(sc) => sc.apply(y),
            None => y.to_vec(),
        }
    }

    fn to_raw_units(&self, y: &[f64]) -> Vec<f64> {
        match &self.scaling {
            Some(sc) => sc.invert(y),
            None => y.to_vec(),
        }
    }
}

fn check_map(name: &str, map: &MonomialMap, n_vars: usize, m: usize) -> Result<()> {
    if map.n_terms() == 0 || map.m() == 0 {
        return Err(Error::Validation(format!("{name} has an empty coefficient matrix")));
    }
    if map.n_vars() != n_vars {
        return Err(Error::Validation(format!(
            "{name} takes {} variables, expected {n_vars}",
            map.n_vars()
        )));
    }
    if map.m() != m {
        return Err(Error::Validation(format!(
            "{name} has {} outputs, expected {m}",
            map.m()
        )));
    }
    if map.coeffs().iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("{name} has non-finite coefficients")));
    }
    Ok(())
}

/// One-step-ahead predictions and their errors.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionReport {
    /// First predicted time index (1-based).
    pub start_t: usize,
    /// Per series, `d_y x (t_1 - start_t + 1)`; column `j` is time `start_t + j`.
    pub predictions: Vec<DMatrix<f64>>,
    /// `y - y_hat`, same layout as `predictions`.
    pub residuals: Vec<DMatrix<f64>>,
    /// Per output dimension, over all predicted times and series.
    pub rmse: Vec<f64>,
    /// `rmse` divided by the sample standard deviation of the measured
    /// outputs over the same times.
    pub relative_rmse: Vec<f64>,
}

impl PredictionReport {
    pub fn max_relative_rmse(&self) -> f64 {
        self.relative_rmse.iter().copied().fold(0.0, f64::max)
    }

    /// RMSE of each series over all its predicted entries.
    pub fn series_rmse(&self) -> Vec<f64> {
        self.residuals
            .iter()
            .map(|r| {
                if r.is_empty() {
                    0.0
                } else {
                    (r.norm_squared() / r.len() as f64).sqrt()
                }
            })
            .collect()
    }
}

/// Runs the observer on every series of `ts`, starting from state
/// `x0.column(k)` at time `start_t`.
///
/// The state update always uses the measured output, never the prediction.
pub fn predict_one_step(
    model: &ObserverModel,
    ts: &TimeSeriesSet,
    x0: &DMatrix<f64>,
    start_t: usize,
) -> Result<PredictionReport> {
    if ts.d_y() != model.d_y {
        return Err(Error::dims("output dimension of the data", model.d_y, ts.d_y()));
    }
    if x0.nrows() != model.n {
        return Err(Error::dims("initial state dimension", model.n, x0.nrows()));
    }
    if x0.ncols() != ts.s() {
        return Err(Error::dims("number of initial states", ts.s(), x0.ncols()));
    }
    if start_t == 0 || start_t > ts.t_1() {
        return Err(Error::invalid(format!(
            "start time {start_t} outside 1..={}",
            ts.t_1()
        )));
    }

    let steps = ts.t_1() - start_t + 1;
    let d_y = model.d_y;
    let mut predictions = Vec::with_capacity(ts.s());
    let mut residuals = Vec::with_capacity(ts.s());
    let mut scratch = Vec::new();
    let mut xy = vec![0.0; model.n + d_y];

    for k in 0..ts.s() {
        let mut pred = DMatrix::zeros(d_y, steps);
        let mut res = DMatrix::zeros(d_y, steps);
        let mut x: DVector<f64> = x0.column(k).into_owned();
        for j in 0..steps {
            let t = start_t + j;
            let y = ts.y(t, k);
            let yhat_model = model.h_o.eval_unchecked(x.as_slice(), &mut scratch);
            let yhat = model.to_raw_units(yhat_model.as_slice());
            for i in 0..d_y {
                pred[(i, j)] = yhat[i];
                res[(i, j)] = y[i] - yhat[i];
            }
            if j + 1 == steps {
                break;
            }
            let ym = model.to_model_units(y);
            xy[..model.n].copy_from_slice(x.as_slice());
            xy[model.n..].copy_from_slice(&ym);
            x = model.f_o.eval_unchecked(&xy, &mut scratch);
            if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD) {
                return Err(Error::Divergence {
                    series: ts.series_ids()[k],
                    t: t + 1,
                });
            }
        }
        predictions.push(pred);
        residuals.push(res);
    }

    let (rmse, relative_rmse) = error_summary(ts, start_t, &residuals);
    Ok(PredictionReport {
        start_t,
        predictions,
        residuals,
        rmse,
        relative_rmse,
    })
}

fn error_summary(ts: &TimeSeriesSet, start_t: usize, residuals: &[DMatrix<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d_y = ts.d_y();
    let mut sq = vec![0.0; d_y];
    let mut sum = vec![0.0; d_y];
    let mut count = 0usize;
    for (k, r) in residuals.iter().enumerate() {
        for (j, col) in r.column_iter().enumerate() {
            let y = ts.y(start_t + j, k);
            for i in 0..d_y {
                sq[i] += col[i] * col[i];
                sum[i] += y[i];
            }
            count += 1;
        }
    }
    let nf = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let mut var = vec![0.0; d_y];
    for k in 0..residuals.len() {
        for t in start_t..=ts.t_1() {
            let y = ts.y(t, k);
            for i in 0..d_y {
                var[i] += (y[i] - mean[i]).powi(2);
            }
        }
    }
    let rmse: Vec<f64> = sq.iter().map(|s| (s / nf).sqrt()).collect();
    let rel = rmse
        .iter()
        .zip(&var)
        .map(|(&e, &v)| {
            let sd = if count > 1 { (v / (nf - 1.0)).sqrt() } else { 0.0 };
            if sd > 0.0 {
                e / sd
            } else if e == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    (rmse, rel)
}

/// Initial states at time `t` computed from the past outputs
/// `y(t-1), ..., y(t-lags)` of every series through the stored `g_io`.
pub fn initial_states_from_past(model: &ObserverModel, ts: &TimeSeriesSet, t: usize) -> Result<DMatrix<f64>> {
    let g = model
        .g_io
        .as_ref()
        .ok_or_else(|| Error::invalid("model has no past-to-state map g_io"))?;
    if ts.d_y() != model.d_y {
        return Err(Error::dims("output dimension of the data", model.d_y, ts.d_y()));
    }
    if t <= g.lags || t > ts.t_1() {
        return Err(Error::invalid(format!(
            "initial state at t = {t} needs {} past samples and t <= {}",
            g.lags,
            ts.t_1()
        )));
    }
    let mut past = DMatrix::zeros(g.lags * model.d_y, ts.s());
    for k in 0..ts.s() {
        for lag in 0..g.lags {
            let y = model.to_model_units(ts.y(t - 1 - lag, k));
            for (i, v) in y.iter().enumerate() {
                past[(lag * model.d_y + i, k)] = *v;
            }
        }
    }
    g.map.eval_columns(&past)
}

/// Predicts every series from the earliest time at which `g_io` can supply
/// an initial state.
pub fn predict_from_past(model: &ObserverModel, ts: &TimeSeriesSet) -> Result<PredictionReport> {
    let lags = model
        .g_io
        .as_ref()
        .ok_or_else(|| Error::invalid("model has no past-to-state map g_io"))?
        .lags;
    let x0 = initial_states_from_past(model, ts, lags + 1)?;
    predict_one_step(model, ts, &x0, lags + 1)
}

// ---------------------------------------------------------------------------
// Model document
// ---------------------------------------------------------------------------

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_row(row: impl IntoIterator<Item = f64>) -> String {
    let items: Vec<String> = row.into_iter().map(fmt_f64).collect();
    format!("[{}]", items.join(", "))
}

fn fmt_matrix(out: &mut String, key: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{key} = [");
    for row in m.row_iter() {
        let _ = writeln!(out, "  {},", fmt_row(row.iter().copied()));
    }
    out.push_str("]\n");
}

fn fmt_powers(out: &mut String, k: &PowerMatrix) {
    out.push_str("powers = [\n");
    for row in k.rows() {
        let items: Vec<String> = row.as_slice().iter().map(|e| e.to_string()).collect();
        let _ = writeln!(out, "  [{}],", items.join(", "));
    }
    out.push_str("]\n");
}

fn fmt_map(out: &mut String, table: &str, map: &MonomialMap, extra: Option<(&str, usize)>) {
    let _ = writeln!(out, "\n[{table}]");
    if let Some((key, value)) = extra {
        let _ = writeln!(out, "{key} = {value}");
    }
    let _ = writeln!(out, "n_vars = {}", map.n_vars());
    fmt_powers(out, map.powers());
    fmt_matrix(out, "coeffs", map.coeffs());
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_owned()).to_string()
}

/// Model document text (TOML). Coefficients are written with 17 significant
/// digits, which round-trips every finite `f64` exactly.
pub fn serialize_model(model: &ObserverModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format = {}", toml_string(MODEL_FORMAT));
    let _ = writeln!(out, "version = {MODEL_VERSION}");
    let _ = writeln!(out, "n = {}", model.n);
    let _ = writeln!(out, "d_y = {}", model.d_y);
    let _ = writeln!(out, "start_t = {}", model.start_t);
    let _ = writeln!(out, "series = {}", model.x0.ncols());
    fmt_matrix(&mut out, "x0", &model.x0);

    if let Some(sc) = &model.scaling {
        out.push_str("\n[scaling]\n");
        let _ = writeln!(out, "mean = {}", fmt_row(sc.mean.iter().copied()));
        let _ = writeln!(out, "scale = {}", fmt_row(sc.scale.iter().copied()));
    }
    fmt_map(&mut out, "f_o", &model.f_o, None);
    fmt_map(&mut out, "h_o", &model.h_o, None);
    if let Some(g) = &model.g_io {
        fmt_map(&mut out, "g_io", &g.map, Some(("lags", g.lags)));
    }

    let p = &model.provenance;
    out.push_str("\n[provenance]\n");
    let _ = writeln!(out, "t_plus = {}", p.t_plus);
    let _ = writeln!(out, "t_minus = {}", p.t_minus);
    let _ = writeln!(out, "anchor_t = {}", p.anchor_t);
    let _ = writeln!(out, "pooled = {}", p.pooled);
    out.push_str("\n[provenance.config]\n");
    for (k, v) in &p.config {
        let _ = writeln!(out, "{} = {}", toml_string(k), toml_string(v));
    }
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDoc {
    n_vars: usize,
    powers: Vec<Vec<u32>>,
    coeffs: Vec<Vec<f64>>,
    #[serde(default)]
    lags: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalingDoc {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ProvenanceDoc {
    #[serde(default)]
    t_plus: usize,
    #[serde(default)]
    t_minus: usize,
    #[serde(default)]
    anchor_t: usize,
    #[serde(default)]
    pooled: bool,
    #[serde(default)]
    config: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    version: u32,
    n: usize,
    d_y: usize,
    start_t: usize,
    series: usize,
    x0: Vec<Vec<f64>>,
    #[serde(default)]
    scaling: Option<ScalingDoc>,
    f_o: MapDoc,
    h_o: MapDoc,
    #[serde(default)]
    g_io: Option<MapDoc>,
    #[serde(default)]
    provenance: ProvenanceDoc,
}

fn decode_map(name: &str, doc: MapDoc) -> Result<MonomialMap> {
    if doc.coeffs.is_empty() || doc.powers.is_empty() {
        return Err(Error::Validation(format!("{name} has an empty coefficient matrix")));
    }
    let rows: Vec<PowerVector> = doc.powers.into_iter().map(PowerVector::new).collect();
    let powers = PowerMatrix::from_rows(doc.n_vars, rows)
        .map_err(|e| Error::Validation(format!("{name} powers: {e}")))?;
    let cols = powers.n_rows();
    if let Some(bad) = doc.coeffs.iter().position(|r| r.len() != cols) {
        return Err(Error::Validation(format!(
            "{name} coefficient row {} has {} entries, expected {cols}",
            bad + 1,
            doc.coeffs[bad].len()
        )));
    }
    let m = doc.coeffs.len();
    let flat: Vec<f64> = doc.coeffs.into_iter().flatten().collect();
    MonomialMap::new(DMatrix::from_row_slice(m, cols, &flat), powers)
        .map_err(|e| Error::Validation(format!("{name}: {e}")))
}

/// Parses and validates a model document.
pub fn deserialize_model(text: &str) -> Result<ObserverModel> {
    let doc: ModelDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if doc.format != MODEL_FORMAT {
        return Err(Error::Validation(format!("unknown document format {:?}", doc.format)));
    }
    if doc.version != MODEL_VERSION {
        return Err(Error::Validation(format!("unsupported model version {}", doc.version)));
    }
    if doc.x0.len() != doc.n {
        return Err(Error::Validation(format!(
            "x0 has {} rows, expected {}",
            doc.x0.len(),
            doc.n
        )));
    }
    if doc.x0.iter().any(|r| r.len() != doc.series) {
        return Err(Error::Validation(format!(
            "every x0 row needs {} entries",
            doc.series
        )));
    }
    let flat: Vec<f64> = doc.x0.into_iter().flatten().collect();
    let x0 = DMatrix::from_row_slice(doc.n, doc.series, &flat);

    let g_io = match doc.g_io {
        Some(g) => {
            let lags = g
                .lags
                .ok_or_else(|| Error::Validation("g_io is missing lags".into()))?;
            Some(PastStateMap {
                lags,
                map: decode_map("g_io", g)?,
            })
        }
        None => None,
    };
    let model = ObserverModel {
        n: doc.n,
        d_y: doc.d_y,
        f_o: decode_map("f_o", doc.f_o)?,
        h_o: decode_map("h_o", doc.h_o)?,
        g_io,
        x0,
        start_t: doc.start_t,
        scaling: doc.scaling.map(|s| Scaling {
            mean: s.mean,
            scale: s.scale,
        }),
        provenance: Provenance {
            t_plus: doc.provenance.t_plus,
            t_minus: doc.provenance.t_minus,
            anchor_t: doc.provenance.anchor_t,
            pooled: doc.provenance.pooled,
            config: doc.provenance.config,
        },
    };
    model.validate()?;
    Ok(model)
}
