//! File formats, synthetic data and text reports.
//!
//! * Series files are CSV with the header `series,t,y1,...,y{d_y}`, one row
//!   per series and time step, `t` running over `1..=t_1` without gaps.
//! * Generator specs and identification configs are flat TOML documents.
//! * Randomness comes from `ChaCha8Rng::seed_from_u64(seed)` only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::genred::MonomialMap;
use crate::model::{
    deserialize_model, predict_from_past, predict_one_step, serialize_model, ObserverModel, PredictionReport, DIVERGENCE_GUARD,
};
use crate::monomials::{PowerMatrix, PowerVector, DEFAULT_MONOMIAL_CAP};
use crate::numred::format_sig;
use crate::pipeline::{IdentConfig, IdentDiagnostics, StateBound, TimeSeriesSet, DEFAULT_BLOCK_LIMIT, DEFAULT_EXPECTED_STATE_DIM};

/// Seventeen significant digits: enough to read back every `f64` exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// Series files
// ---------------------------------------------------------------------------

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Reads a series file.
pub fn ingest(path: impl AsRef<Path>) -> Result<TimeSeriesSet> {
    parse_series(&read_text(path.as_ref())?)
}

/// Parses series CSV text.
pub fn parse_series(text: &str) -> Result<TimeSeriesSet> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse(format!("header: {e}")))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 3 || names[0] != "series" || names[1] != "t" {
        return Err(Error::Parse(
            "header must start with series,t followed by y1,...".into(),
        ));
    }
    let d_y = names.len() - 2;
    for (i, name) in names[2..].iter().enumerate() {
        if *name != format!("y{}", i + 1) {
            return Err(Error::Parse(format!("header column {} should be y{}", i + 3, i + 1)));
        }
    }

    let mut by_series: BTreeMap<i64, BTreeMap<i64, Vec<f64>>> = BTreeMap::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let series: i64 = field(0)
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad series id {:?}", field(0))))?;
        let t: i64 = field(1)
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad time index {:?}", field(1))))?;
        let fmt_err = |message: String| Error::Format { series, t, message };
        if record.len() != d_y + 2 {
            return Err(fmt_err(format!(
                "{} output values, expected {d_y}",
                record.len().saturating_sub(2)
            )));
        }
        let mut y = Vec::with_capacity(d_y);
        for i in 0..d_y {
            let v: f64 = field(i + 2)
                .parse()
                .map_err(|_| fmt_err(format!("bad value {:?} in column y{}", field(i + 2), i + 1)))?;
            if !v.is_finite() {
                return Err(fmt_err(format!("non-finite value in column y{}", i + 1)));
            }
            y.push(v);
        }
        if by_series.entry(series).or_default().insert(t, y).is_some() {
            return Err(fmt_err("duplicate time index".into()));
        }
    }
    if by_series.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }

    let mut t_1 = None;
    let mut ids = Vec::new();
    let mut mats = Vec::new();
    for (id, rows) in by_series {
        for (expected, (&t, _)) in (1i64..).zip(&rows) {
            if t != expected {
                return Err(Error::Format {
                    series: id,
                    t: expected,
                    message: "missing time index".into(),
                });
            }
        }
        let len = rows.len();
        match t_1 {
            None => t_1 = Some(len),
            Some(l) if l != len => {
                return Err(Error::Format {
                    series: id,
                    t: len as i64 + 1,
                    message: format!("series has length {len}, expected {l}"),
                })
            }
            _ => {}
        }
        let flat: Vec<f64> = rows.into_values().flatten().collect();
        ids.push(id);
        mats.push(DMatrix::from_column_slice(d_y, len, &flat));
    }
    TimeSeriesSet::with_ids(ids, mats)
}

/// Series CSV text.
pub fn format_series(ts: &TimeSeriesSet) -> String {
    let mut out = String::from("series,t");
    for i in 1..=ts.d_y() {
        let _ = write!(out, ",y{i}");
    }
    out.push('\n');
    for (k, id) in ts.series_ids().iter().enumerate() {
        for t in 1..=ts.t_1() {
            let _ = write!(out, "{id},{t}");
            for v in ts.y(t, k) {
                let _ = write!(out, ",{}", format_f64(*v));
            }
            out.push('\n');
        }
    }
    out
}

pub fn emit(ts: &TimeSeriesSet, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_series(ts))
}

/// Predictions and residuals as CSV with header
/// `series,t,yhat1,...,res1,...`.
pub fn format_predictions(ts: &TimeSeriesSet, report: &PredictionReport) -> String {
    let d_y = ts.d_y();
    let mut out = String::from("series,t");
    for i in 1..=d_y {
        let _ = write!(out, ",yhat{i}");
    }
    for i in 1..=d_y {
        let _ = write!(out, ",res{i}");
    }
    out.push('\n');
    for (k, id) in ts.series_ids().iter().enumerate() {
        let (pred, res) = (&report.predictions[k], &report.residuals[k]);
        for j in 0..pred.ncols() {
            let _ = write!(out, "{id},{}", report.start_t + j);
            for v in pred.column(j).iter().chain(res.column(j).iter()) {
                let _ = write!(out, ",{}", format_f64(*v));
            }
            out.push('\n');
        }
    }
    out
}

/// Reads a model document.
pub fn load_model(path: impl AsRef<Path>) -> Result<ObserverModel> {
    deserialize_model(&read_text(path.as_ref())?)
}

pub fn save_model(model: &ObserverModel, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &serialize_model(model))
}

/// One-step predictions for new data.
///
/// Uses `g_io` to obtain the initial states when the model carries it.
/// Otherwise the stored initial states are used, which only works on the
/// series the model was identified from.
pub fn predict_series(model: &ObserverModel, ts: &TimeSeriesSet) -> Result<PredictionReport> {
    if model.g_io.is_some() {
        return predict_from_past(model, ts);
    }
    if ts.d_y() != model.d_y {
        return Err(Error::dims("output dimension of the data", model.d_y, ts.d_y()));
    }
    if model.x0.ncols() != ts.s() {
        return Err(Error::invalid(format!(
            "model has no g_io and stores {} initial states, data has {} series",
            model.x0.ncols(),
            ts.s()
        )));
    }
    predict_one_step(model, ts, &model.x0, model.start_t)
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Ground-truth observer system used to generate data.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub n: usize,
    pub d_y: usize,
    /// Over `(x, y)`, `n` outputs.
    pub f: MonomialMap,
    /// Over `x`, `d_y` outputs.
    pub h: MonomialMap,
    /// Per state coordinate `(low, high)`.
    pub x0_box: Vec<(f64, f64)>,
    pub noise_std: f64,
    pub t_1: usize,
    pub s: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapSpecDoc {
    powers: Vec<Vec<u32>>,
    coeffs: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorDoc {
    n: usize,
    d_y: usize,
    t_1: usize,
    s: usize,
    #[serde(default)]
    noise_std: f64,
    x0_box: Vec<[f64; 2]>,
    f: MapSpecDoc,
    h: MapSpecDoc,
}

/// Builds a map from monomials listed in any order; coefficient columns
/// follow the listed order.
pub fn map_from_unsorted(n_vars: usize, powers: Vec<Vec<u32>>, coeffs: Vec<Vec<f64>>) -> Result<MonomialMap> {
    let terms = powers.len();
    if terms == 0 || coeffs.is_empty() {
        return Err(Error::invalid("map needs at least one monomial and one output"));
    }
    if let Some(bad) = powers.iter().position(|p| p.len() != n_vars) {
        return Err(Error::dims(format!("monomial {} length", bad + 1), n_vars, powers[bad].len()));
    }
    if let Some(bad) = coeffs.iter().position(|r| r.len() != terms) {
        return Err(Error::dims(format!("coefficient row {} length", bad + 1), terms, coeffs[bad].len()));
    }
    let mut order: Vec<usize> = (0..terms).collect();
    order.sort_by(|&a, &b| powers[b].cmp(&powers[a]));
    if order.windows(2).any(|w| powers[w[0]] == powers[w[1]]) {
        return Err(Error::invalid("duplicate monomial in map"));
    }
    let rows: Vec<PowerVector> = order.iter().map(|&i| PowerVector::new(powers[i].clone())).collect();
    let k = PowerMatrix::from_rows(n_vars, rows)?;
    let l = DMatrix::from_fn(coeffs.len(), terms, |i, j| coeffs[i][order[j]]);
    MonomialMap::new(l, k)
}

impl GeneratorSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: GeneratorDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let spec = GeneratorSpec {
            n: doc.n,
            d_y: doc.d_y,
            f: map_from_unsorted(doc.n + doc.d_y, doc.f.powers, doc.f.coeffs)?,
            h: map_from_unsorted(doc.n, doc.h.powers, doc.h.coeffs)?,
            x0_box: doc.x0_box.iter().map(|b| (b[0], b[1])).collect(),
            noise_std: doc.noise_std,
            t_1: doc.t_1,
            s: doc.s,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&read_text(path.as_ref())?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d_y == 0 || self.t_1 == 0 || self.s == 0 {
            return Err(Error::invalid("n, d_y, t_1 and s must be positive"));
        }
        if self.f.n_vars() != self.n + self.d_y || self.f.m() != self.n {
            return Err(Error::invalid(format!(
                "f must map {} variables to {} states",
                self.n + self.d_y,
                self.n
            )));
        }
        if self.h.n_vars() != self.n || self.h.m() != self.d_y {
            return Err(Error::invalid(format!(
                "h must map {} states to {} outputs",
                self.n, self.d_y
            )));
        }
        if self.x0_box.len() != self.n {
            return Err(Error::dims("x0_box length", self.n, self.x0_box.len()));
        }
        if self.x0_box.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(Error::invalid("every x0_box interval needs finite low <= high"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std must be a finite nonnegative number"));
        }
        Ok(())
    }
}

/// Simulates `y(t) = h(x(t)) + e(t)`, `x(t+1) = f(x(t), y(t))`.
///
/// For each series the generator first draws the initial state (one uniform
/// draw per coordinate) and then one Gaussian noise value per output entry
/// and time step, in time order.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<TimeSeriesSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Generation(e.to_string()))?;
    let mut mats = Vec::with_capacity(spec.s);
    let mut xy = vec![0.0; spec.n + spec.d_y];
    for k in 0..spec.s {
        let mut x: Vec<f64> = spec
            .x0_box
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect();
        let mut m = DMatrix::zeros(spec.d_y, spec.t_1);
        for t in 0..spec.t_1 {
            let mut y = spec.h.eval(&x)?;
            if spec.noise_std > 0.0 {
                for v in y.iter_mut() {
                    *v += noise.sample(&mut rng);
                }
            }
            m.set_column(t, &y);
            xy[..spec.n].copy_from_slice(&x);
            xy[spec.n..].copy_from_slice(y.as_slice());
            x = spec.f.eval(&xy)?.as_slice().to_vec();
            if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD) {
                return Err(Error::Generation(format!(
                    "series {} diverged at t = {}; use smaller coefficients or a smaller x0 box",
                    k + 1,
                    t + 2
                )));
            }
        }
        mats.push(m);
    }
    TimeSeriesSet::new(mats)
}

// ---------------------------------------------------------------------------
// Identification config
// ---------------------------------------------------------------------------

#[derive(Deserialize, Clone)]
#[serde(untagged)]
enum Bound {
    One(u32),
    Many(Vec<u32>),
}

impl Bound {
    fn into_vec(self) -> Vec<u32> {
        match self {
            Bound::One(k) => vec![k],
            Bound::Many(v) => v,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    r1: f64,
    r2: f64,
    r3: f64,
    r4: f64,
    n_expected: Option<usize>,
    t_plus_min: Option<usize>,
    t_minus_min: Option<usize>,
    t_plus_max: Option<usize>,
    t_minus_max: Option<usize>,
    k_max_y: Option<Bound>,
    k_max_x: Option<Bound>,
    k_max_y2: Option<Bound>,
    block_limit: Option<usize>,
    anchor_t: Option<usize>,
    pool_windows: Option<bool>,
    scaling: Option<bool>,
    monomial_cap: Option<usize>,
}

/// Parses an identification config. The thresholds `r1`..`r4` are required;
/// everything else has a default.
pub fn parse_config(text: &str) -> Result<IdentConfig> {
    let doc: ConfigDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut cfg = IdentConfig::new(doc.r1, doc.r2, doc.r3, doc.r4);
    let n_expected = doc.n_expected.unwrap_or(DEFAULT_EXPECTED_STATE_DIM);
    if n_expected == 0 {
        return Err(Error::invalid("n_expected must be positive"));
    }
    cfg.t_plus_min = doc.t_plus_min.unwrap_or(1);
    cfg.t_minus_min = doc.t_minus_min.unwrap_or(1);
    cfg.t_plus_max = doc.t_plus_max.unwrap_or(4 * n_expected);
    cfg.t_minus_max = doc.t_minus_max.unwrap_or(4 * n_expected);
    if let Some(b) = doc.k_max_y {
        cfg.k_max_y = b.into_vec();
    }
    if let Some(b) = doc.k_max_x {
        cfg.k_max_x = match b {
            Bound::One(k) => StateBound::Uniform(k),
            Bound::Many(v) => StateBound::PerState(v),
        };
    }
    if let Some(b) = doc.k_max_y2 {
        cfg.k_max_y2 = b.into_vec();
    }
    cfg.block_limit = doc.block_limit.unwrap_or(DEFAULT_BLOCK_LIMIT);
    cfg.anchor_t = doc.anchor_t;
    cfg.pool_windows = doc.pool_windows;
    cfg.scaling = doc.scaling.unwrap_or(true);
    cfg.monomial_cap = doc.monomial_cap.unwrap_or(DEFAULT_MONOMIAL_CAP);
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<IdentConfig> {
    parse_config(&read_text(path.as_ref())?)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Diagnostics report with the sections CONFIG, HORIZONS, TABLE1, TABLE2,
/// GENERATORS and RESIDUALS.
pub fn format_report(diag: &IdentDiagnostics) -> String {
    let mut out = String::from("CONFIG\n");
    for (k, v) in &diag.config {
        let _ = writeln!(out, "{k} = {v}");
    }

    out.push_str("\nHORIZONS\n");
    out.push_str("iteration t_plus t_minus pooled columns n1 n\n");
    for (i, it) in diag.iterations.iter().enumerate() {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {}",
            i + 1,
            it.t_plus,
            it.t_minus,
            it.pooled,
            it.columns,
            it.n1,
            it.n
        );
    }
    let _ = writeln!(
        out,
        "chosen t_plus = {} t_minus = {} anchor_t = {} pooled = {}",
        diag.t_plus, diag.t_minus, diag.anchor_t, diag.pooled
    );

    out.push_str("\nTABLE1\n");
    for (i, it) in diag.iterations.iter().enumerate() {
        for (b, block) in it.blocks.iter().enumerate() {
            let _ = writeln!(
                out,
                "# iteration {} (t_plus {}, t_minus {}) block {} monomials {} n1 {}",
                i + 1,
                it.t_plus,
                it.t_minus,
                b + 1,
                block.monomials,
                block.n1
            );
            out.push_str(&block.table1.to_text());
        }
    }

    out.push_str("\nTABLE2\n");
    for (i, it) in diag.iterations.iter().enumerate() {
        let _ = writeln!(
            out,
            "# iteration {} (t_plus {}, t_minus {}) n2 {}",
            i + 1,
            it.t_plus,
            it.t_minus,
            it.n2
        );
        out.push_str(&it.table2.to_text());
    }

    out.push_str("\nGENERATORS\n");
    out.push_str(
        "iteration past_monomials after_pruning state_dim output_terms dynamics_monomials dynamics_terms\n",
    );
    for (i, it) in diag.iterations.iter().enumerate() {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {}",
            i + 1,
            it.past_monomials,
            it.generators_pruned,
            it.n,
            it.output_terms,
            it.dynamics_monomials,
            it.dynamics_terms
        );
    }

    out.push_str("\nRESIDUALS\n");
    match &diag.training {
        Ok(rep) => {
            let _ = writeln!(out, "start_t = {}", rep.start_t);
            out.push_str("dim rmse relative_rmse\n");
            for (i, (e, r)) in rep.rmse.iter().zip(&rep.relative_rmse).enumerate() {
                let _ = writeln!(out, "y{} {} {}", i + 1, format_sig(*e, 6), format_sig(*r, 6));
            }
            let _ = writeln!(out, "max relative_rmse = {}", format_sig(rep.max_relative_rmse(), 6));
        }
        Err(e) => {
            let _ = writeln!(out, "training prediction failed: {e}");
        }
    }
    out
}

/// Two-column table of per-dimension RMSE and relative RMSE.
pub fn format_evaluation(report: &PredictionReport) -> String {
    let mut out = String::from("rmse relative_rmse\n");
    for (e, r) in report.rmse.iter().zip(&report.relative_rmse) {
        let _ = writeln!(out, "{} {}", format_f64(*e), format_f64(*r));
    }
    out
}

/// Human-readable name of a monomial, e.g. `x1*x2^2*y`.
pub fn monomial_name(k: &PowerVector, names: &[String]) -> String {
    let parts: Vec<String> = k
        .as_slice()
        .iter()
        .zip(names)
        .filter(|(e, _)| **e > 0)
        .map(|(e, name)| if *e == 1 { name.clone() } else { format!("{name}^{e}") })
        .collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

fn state_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn output_names(d_y: usize, suffix: &str) -> Vec<String> {
    if d_y == 1 {
        vec![format!("y{suffix}")]
    } else {
        (1..=d_y).map(|i| format!("y{i}{suffix}")).collect()
    }
}

fn describe_map(out: &mut String, title: &str, map: &MonomialMap, names: &[String]) {
    let basis: Vec<String> = map.powers().rows().iter().map(|k| monomial_name(k, names)).collect();
    let _ = writeln!(out, "{title} basis: {}", basis.join(", "));
    let _ = writeln!(out, "{title} coefficients:");
    for row in map.coeffs().row_iter() {
        let items: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "({})", items.join(", "));
    }
}

/// Text description of a model: dimensions, monomial bases and coefficients.
pub fn describe_model(model: &ObserverModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n = {}", model.n);
    let _ = writeln!(out, "d_y = {}", model.d_y);
    let xs = state_names(model.n);
    describe_map(&mut out, "h_o", &model.h_o, &xs);
    let mut xy = xs.clone();
    xy.extend(output_names(model.d_y, ""));
    describe_map(&mut out, "f_o", &model.f_o, &xy);
    if let Some(g) = &model.g_io {
        let names: Vec<String> = (1..=g.lags)
            .flat_map(|lag| output_names(model.d_y, &format!("(t-{lag})")))
            .collect();
        describe_map(&mut out, "g_io", &g.map, &names);
    }
    if let Some(sc) = &model.scaling {
        let mean: Vec<String> = sc.mean.iter().map(|v| v.to_string()).collect();
        let scale: Vec<String> = sc.scale.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "scaling mean: ({})", mean.join(", "));
        let _ = writeln!(out, "scaling scale: ({})", scale.join(", "));
    }
    let _ = writeln!(out, "initial states: {} series at t = {}", model.x0.ncols(), model.start_t);
    out
}
