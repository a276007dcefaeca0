//! Expanding-window forecast evaluation: RMSFE and interval-score metrics
//! over a grid of forecasting variants (univariate vs joint blocks) and
//! reconciliation methods (base, bottom-up, OLS combination, MinT).
//!
//! Training windows grow by one year per origin. With first training length
//! L₀, horizon cap H and n years of data, origin o trains on the first
//! L₀ + o years and forecasts min(H, years remaining) steps, so horizon h
//! receives max(0, n − L₀ − h + 1) forecasts; the paper-shaped span (42
//! years, L₀ = 27, H = 15) yields the triangular counts 15, 14, …, 1.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::assemble::{fit_score_models, insample_errors, ForecastOpts};
use crate::error::{Error, Result};
use crate::fpca::{fit_block, FpcaModel};
use crate::lrcov::Kernel;
use crate::panel::{MortalityPanel, SeriesId};
use crate::reconcile::{
    bottom_up, build_summing_matrix, estimate_w, mint_reconcile, ols_reconcile, GroupStructure,
    HierarchyKind, Level, NodeForecasts, Shrink, SummingMatrix,
};
use crate::scorecast::ScoreModel;

/// Reconciliation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Base,
    BottomUp,
    Ols,
    Mint,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Base => "base",
            Method::BottomUp => "bu",
            Method::Ols => "ols",
            Method::Mint => "mint",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Method::Base),
            "bu" => Ok(Method::BottomUp),
            "ols" => Ok(Method::Ols),
            "mint" => Ok(Method::Mint),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected base, bu, ols or mint)"
            ))),
        }
    }
}

/// One cell of the comparison grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MethodKey {
    /// Joint-block (multivariate) forecasting when true, univariate when
    /// false.
    pub multivariate: bool,
    pub method: Method,
    pub hierarchy: HierarchyKind,
}

impl fmt::Display for MethodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let variant = if self.multivariate { "dmfts" } else { "dfts" };
        write!(f, "{variant}/{}/{}", self.method, self.hierarchy)
    }
}

#[derive(Debug, Clone)]
pub struct BacktestConfig {
    /// Years in the first training window.
    pub first_train_years: usize,
    /// Maximum horizon H.
    pub horizons: usize,
    pub alpha: f64,
    pub methods: Vec<Method>,
    /// Forecast variants to evaluate (false = univariate, true = joint).
    pub variants: Vec<bool>,
    pub kernel: Kernel,
    pub threshold: f64,
    pub max_k: usize,
    pub forecast: ForecastOpts,
    /// Compute bootstrap prediction intervals and interval scores.
    pub with_intervals: bool,
    /// Retain raw per-origin forecasts (for leakage tests and exports).
    pub keep_forecasts: bool,
    /// MinT shrinkage intensity.
    pub shrink: Shrink,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            first_train_years: 27,
            horizons: 15,
            alpha: 0.2,
            methods: vec![Method::Base, Method::BottomUp, Method::Ols, Method::Mint],
            variants: vec![false, true],
            kernel: Kernel::Bartlett,
            threshold: 0.9,
            max_k: 6,
            forecast: ForecastOpts::default(),
            with_intervals: false,
            keep_forecasts: false,
            shrink: Shrink::Auto,
        }
    }
}

/// Per-series evaluation results.
#[derive(Debug, Clone)]
pub struct SeriesMetrics {
    pub level: Level,
    /// RMSFE(h) for h = 1..H, rate scale (unscaled; ×100 at reporting).
    pub rmsfe: Vec<f64>,
    /// Mean interval score P̄_α(h), present when intervals were computed.
    pub interval: Option<Vec<f64>>,
}

impl SeriesMetrics {
    pub fn mean_rmsfe(&self) -> f64 {
        mean_stats(&self.rmsfe)
    }

    pub fn mean_interval(&self) -> Option<f64> {
        self.interval.as_ref().map(|v| mean_stats(v))
    }
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub horizons: usize,
    pub alpha: f64,
    /// Number of forecasts contributing at each horizon.
    pub counts: Vec<usize>,
    pub metrics: BTreeMap<MethodKey, BTreeMap<SeriesId, SeriesMetrics>>,
    /// Raw reconciled rate forecasts per (key, origin training length),
    /// retained only when `keep_forecasts` is set.
    pub forecasts: BTreeMap<(MethodKey, usize), NodeForecasts>,
    /// Series whose score model fell back to the random walk with drift.
    pub fallback_log: Vec<String>,
}

/// RMSFE over one horizon's forecasts: actual and forecast are
/// (origins × ages) matrices on the same scale.
pub fn rmsfe(actual: &DMatrix<f64>, forecast: &DMatrix<f64>) -> Result<f64> {
    if actual.shape() != forecast.shape() || actual.is_empty() {
        return Err(Error::InvalidArgument("rmsfe shape mismatch".into()));
    }
    let mut sum = 0.0;
    for (a, f) in actual.iter().zip(forecast.iter()) {
        let d = a - f;
        sum += d * d;
    }
    Ok((sum / actual.len() as f64).sqrt())
}

/// Pointwise interval score with penalty rate 2/α outside the interval.
pub fn interval_score(lb: f64, ub: f64, actual: f64, alpha: f64) -> f64 {
    let mut s = ub - lb;
    if actual < lb {
        s += 2.0 / alpha * (lb - actual);
    }
    if actual > ub {
        s += 2.0 / alpha * (actual - ub);
    }
    s
}

/// Mean pointwise interval score over (origin, age) pairs at one horizon.
pub fn mean_interval_score(
    lb: &DMatrix<f64>,
    ub: &DMatrix<f64>,
    actual: &DMatrix<f64>,
    alpha: f64,
) -> Result<f64> {
    if lb.shape() != actual.shape() || ub.shape() != actual.shape() || actual.is_empty() {
        return Err(Error::InvalidArgument("interval score shape mismatch".into()));
    }
    let mut sum = 0.0;
    for i in 0..actual.len() {
        sum += interval_score(lb[i], ub[i], actual[i], alpha);
    }
    Ok(sum / actual.len() as f64)
}

/// Mean over per-horizon values.
pub fn mean_stats(per_h: &[f64]) -> f64 {
    if per_h.is_empty() {
        return f64::NAN;
    }
    per_h.iter().sum::<f64>() / per_h.len() as f64
}

/// Log-rate curves per node, shared input to every origin's fits.
pub type LogCurves = BTreeMap<SeriesId, DMatrix<f64>>;

fn slice_rows(m: &DMatrix<f64>, rows: usize) -> DMatrix<f64> {
    m.rows(0, rows).into_owned()
}

struct FittedBlock {
    model: FpcaModel,
    actual: DMatrix<f64>,
    score_models: Vec<Option<ScoreModel>>,
}

/// Per-origin forecasts for every node on the log scale.
struct OriginForecast {
    point: LogCurves,
    bounds: Option<(LogCurves, LogCurves)>,
    /// h = 1 in-sample error curves per node over shared origins, for MinT.
    h1_errors: Option<BTreeMap<SeriesId, Vec<DVector<f64>>>>,
}

fn fit_origin(
    curves: &LogCurves,
    structure: &GroupStructure,
    multivariate: bool,
    config: &BacktestConfig,
    horizons: usize,
    need_w: bool,
    fallback_log: &mut Vec<String>,
) -> Result<OriginForecast> {
    let blocks = structure.joint_blocks(multivariate);
    let mut fitted = Vec::with_capacity(blocks.len());
    for block in &blocks {
        let model = fit_block(
            curves,
            block,
            config.kernel,
            None,
            config.threshold,
            config.max_k,
        )?;
        let actual = crate::fpca::stack(curves, block)?.values;
        let score_models = fit_score_models(&model, &config.forecast);
        for (k, sm) in score_models.iter().enumerate() {
            match sm {
                Some(m) if !m.converged => fallback_log.push(format!(
                    "block[{}] score {k}: random-walk-with-drift fallback",
                    block.members[0]
                )),
                None if matches!(config.forecast.method, crate::assemble::ScoreMethod::Arima) => {
                    fallback_log.push(format!(
                        "block[{}] score {k}: ARIMA fit failed, random-walk fallback",
                        block.members[0]
                    ))
                }
                _ => {}
            }
        }
        fitted.push(FittedBlock {
            model,
            actual,
            score_models,
        });
    }

    let mut point: LogCurves = BTreeMap::new();
    let mut lower: LogCurves = BTreeMap::new();
    let mut upper: LogCurves = BTreeMap::new();
    for fb in &fitted {
        if config.with_intervals {
            let set =
                crate::assemble::forecast_block(&fb.model, &fb.actual, &config.forecast, horizons)?;
            for (id, sf) in set.series {
                point.insert(id.clone(), sf.point);
                lower.insert(id.clone(), sf.lower);
                upper.insert(id, sf.upper);
            }
        } else {
            let fc = crate::assemble::point_forecast(&fb.model, &config.forecast, horizons)?;
            for (id, m) in fc {
                point.insert(id, m);
            }
        }
    }

    let h1_errors = if need_w {
        // Shared origin range across blocks: ξ ∈ {K_max, …, n − 1}.
        let n = fitted[0].model.scores.nrows();
        let k_max = fitted.iter().map(|fb| fb.model.k()).max().unwrap_or(1);
        if n < k_max + 4 {
            return Err(Error::IntervalInfeasible(
                "too few years for MinT error estimation".into(),
            ));
        }
        let mut per_node: BTreeMap<SeriesId, Vec<DVector<f64>>> = BTreeMap::new();
        for fb in &fitted {
            let errs = insample_errors(&fb.model, &fb.actual, &fb.score_models, 1)?;
            let k = fb.model.k();
            let p = fb.model.p;
            for (l, id) in fb.model.block.members.iter().enumerate() {
                let mut node_errs = Vec::new();
                for xi in k_max..n {
                    // errs.errors[ξ − K] corresponds to origin ξ (1-based).
                    let e = &errs.errors[xi - k];
                    // Log errors become rate errors downstream; keep both the
                    // error and the actual level so rates can be formed.
                    let actual_row = DVector::from_fn(p, |i, _| fb.actual[(xi, l * p + i)]);
                    let err_log = DVector::from_fn(p, |i, _| e[l * p + i]);
                    // Rate-scale error: exp(actual) − exp(fitted).
                    let rate_err = DVector::from_fn(p, |i, _| {
                        actual_row[i].exp() - (actual_row[i] - err_log[i]).exp()
                    });
                    node_errs.push(rate_err);
                }
                per_node.insert(id.clone(), node_errs);
            }
        }
        Some(per_node)
    } else {
        None
    };

    Ok(OriginForecast {
        point,
        bounds: if config.with_intervals {
            Some((lower, upper))
        } else {
            None
        },
        h1_errors,
    })
}

fn exp_curves(curves: &LogCurves) -> NodeForecasts {
    curves
        .iter()
        .map(|(id, m)| (id.clone(), m.map(f64::exp)))
        .collect()
}

fn estimate_w_from_errors(
    structure: &GroupStructure,
    errs: &BTreeMap<SeriesId, Vec<DVector<f64>>>,
    shrink: Shrink,
) -> Result<DMatrix<f64>> {
    let n_nodes = structure.n_nodes();
    let n_origins = errs
        .values()
        .next()
        .map(|v| v.len())
        .ok_or_else(|| Error::Degenerate("no MinT error samples".into()))?;
    let p = errs.values().next().map(|v| v[0].len()).unwrap_or(0);
    // Each (origin, age) pair contributes one sample row.
    let mut mat = DMatrix::zeros(n_origins * p, n_nodes);
    for (v, (id, _)) in structure.nodes.iter().enumerate() {
        let node_errs = errs
            .get(id)
            .ok_or_else(|| Error::Degenerate(format!("no MinT errors for node {id}")))?;
        for (o, e) in node_errs.iter().enumerate() {
            for i in 0..p {
                mat[(o * p + i, v)] = e[i];
            }
        }
    }
    estimate_w(&mat, shrink)
}

fn apply_method(
    method: Method,
    structure: &GroupStructure,
    s: &SummingMatrix,
    base: &NodeForecasts,
    w: Option<&DMatrix<f64>>,
) -> Result<NodeForecasts> {
    match method {
        Method::Base => Ok(base.clone()),
        Method::BottomUp => {
            let bottoms: NodeForecasts = structure
                .bottoms
                .iter()
                .map(|id| (id.clone(), base[id].clone()))
                .collect();
            bottom_up(structure, s, &bottoms)
        }
        Method::Ols => ols_reconcile(structure, s, base),
        Method::Mint => {
            let w = w.ok_or_else(|| Error::Degenerate("MinT requires W".into()))?;
            mint_reconcile(structure, s, base, w)
        }
    }
}

/// Accumulators keyed by (key, series): per-horizon squared errors, interval
/// scores and counts.
struct Accum {
    sq: Vec<f64>,
    iscore: Vec<f64>,
    count: Vec<usize>,
}

/// Expanding-window backtest over one structure. `actual_log` supplies the
/// evaluation curves (typically the smoothed panel); forecasts at horizon h
/// from origin length L are compared against year index L + h − 1.
pub fn expanding_window(
    actual_log: &LogCurves,
    structure: &GroupStructure,
    panel: &MortalityPanel,
    config: &BacktestConfig,
) -> Result<BacktestReport> {
    let n = actual_log
        .values()
        .next()
        .map(|m| m.nrows())
        .ok_or_else(|| Error::InvalidArgument("empty panel".into()))?;
    let p = actual_log.values().next().map(|m| m.ncols()).unwrap();
    let l0 = config.first_train_years;
    if l0 < 10 || l0 >= n {
        return Err(Error::InvalidArgument(format!(
            "first training window {l0} infeasible for {n} years"
        )));
    }
    if config.horizons == 0 {
        return Err(Error::InvalidArgument("H must be >= 1".into()));
    }
    for (id, _) in &structure.nodes {
        let m = actual_log
            .get(id)
            .ok_or_else(|| Error::Structure(format!("no curves for node {id}")))?;
        if m.nrows() != n || m.ncols() != p {
            return Err(Error::InvalidArgument(format!("curve shape mismatch for {id}")));
        }
    }

    let mut counts = vec![0usize; config.horizons];
    let mut accum: BTreeMap<(MethodKey, SeriesId), Accum> = BTreeMap::new();
    let mut forecasts = BTreeMap::new();
    let mut fallback_log = Vec::new();
    let need_w = config.methods.contains(&Method::Mint);

    for l in l0..n {
        let horizons = config.horizons.min(n - l);
        let train: LogCurves = actual_log
            .iter()
            .map(|(id, m)| (id.clone(), slice_rows(m, l)))
            .collect();
        let s = build_summing_matrix(structure, panel, panel.years[l - 1])?;
        for h in 1..=horizons {
            counts[h - 1] += 1;
        }
        // Count each horizon once, not per method/variant.
        let counted = true;
        let _ = counted;

        for &multivariate in &config.variants {
            let of = fit_origin(
                &train,
                structure,
                multivariate,
                config,
                horizons,
                need_w,
                &mut fallback_log,
            )?;
            let base = exp_curves(&of.point);
            let w = match &of.h1_errors {
                Some(errs) => Some(estimate_w_from_errors(structure, errs, config.shrink)?),
                None => None,
            };
            let bounds = of
                .bounds
                .as_ref()
                .map(|(lo, up)| (exp_curves(lo), exp_curves(up)));

            for &method in &config.methods {
                let key = MethodKey {
                    multivariate,
                    method,
                    hierarchy: structure.kind,
                };
                let rec = apply_method(method, structure, &s, &base, w.as_ref())?;
                let rec_bounds = match &bounds {
                    Some((lo, up)) => {
                        let rlo = apply_method(method, structure, &s, lo, w.as_ref())?;
                        let rup = apply_method(method, structure, &s, up, w.as_ref())?;
                        Some((rlo, rup))
                    }
                    None => None,
                };
                for (id, _) in &structure.nodes {
                    let acc = accum.entry((key, id.clone())).or_insert_with(|| Accum {
                        sq: vec![0.0; config.horizons],
                        iscore: vec![0.0; config.horizons],
                        count: vec![0; config.horizons],
                    });
                    let fc = &rec[id];
                    let act = &actual_log[id];
                    for h in 1..=horizons {
                        for i in 0..p {
                            let a = act[(l + h - 1, i)].exp();
                            let d = a - fc[(h - 1, i)];
                            acc.sq[h - 1] += d * d;
                            if let Some((rlo, rup)) = &rec_bounds {
                                let mut lb = rlo[id][(h - 1, i)];
                                let mut ub = rup[id][(h - 1, i)];
                                if lb > ub {
                                    std::mem::swap(&mut lb, &mut ub);
                                }
                                acc.iscore[h - 1] += interval_score(lb, ub, a, config.alpha);
                            }
                        }
                        acc.count[h - 1] += p;
                    }
                }
                if config.keep_forecasts {
                    forecasts.insert((key, l), rec);
                }
            }
        }
    }

    let mut metrics: BTreeMap<MethodKey, BTreeMap<SeriesId, SeriesMetrics>> = BTreeMap::new();
    for ((key, id), acc) in accum {
        let level = structure
            .nodes
            .iter()
            .find(|(n, _)| *n == id)
            .map(|(_, l)| *l)
            .unwrap();
        let used: Vec<usize> = (0..config.horizons)
            .filter(|&h| acc.count[h] > 0)
            .collect();
        let rmsfe_h: Vec<f64> = used
            .iter()
            .map(|&h| (acc.sq[h] / acc.count[h] as f64).sqrt())
            .collect();
        let interval = if config.with_intervals {
            Some(
                used.iter()
                    .map(|&h| acc.iscore[h] / acc.count[h] as f64)
                    .collect(),
            )
        } else {
            None
        };
        metrics.entry(key).or_default().insert(
            id,
            SeriesMetrics {
                level,
                rmsfe: rmsfe_h,
                interval,
            },
        );
    }

    Ok(BacktestReport {
        horizons: config.horizons,
        alpha: config.alpha,
        counts,
        metrics,
        forecasts,
        fallback_log,
    })
}

/// Per-level averages of Mean(RMSFE) × 100 and Mean(P̄_α) for each grid cell.
pub fn level_summary(report: &BacktestReport) -> BTreeMap<(MethodKey, Level), (f64, Option<f64>)> {
    let mut out = BTreeMap::new();
    for (key, per_series) in &report.metrics {
        let mut by_level: BTreeMap<Level, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for m in per_series.values() {
            let e = by_level.entry(m.level).or_default();
            e.0.push(m.mean_rmsfe());
            if let Some(v) = m.mean_interval() {
                e.1.push(v);
            }
        }
        for (level, (rs, is)) in by_level {
            let mean_r = 100.0 * mean_stats(&rs);
            let mean_i = if is.is_empty() {
                None
            } else {
                Some(mean_stats(&is))
            };
            out.insert((*key, level), (mean_r, mean_i));
        }
    }
    out
}

/// Write the per-series report CSV:
/// `level,series,method,hierarchy,h,rmsfe,mean_interval_score`.
pub fn save_report_csv(report: &BacktestReport, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    );
    let werr = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(out, "level,series,method,hierarchy,h,rmsfe,mean_interval_score").map_err(werr)?;
    for (key, per_series) in &report.metrics {
        let variant = if key.multivariate { "dmfts" } else { "dfts" };
        for (id, m) in per_series {
            for (hi, r) in m.rmsfe.iter().enumerate() {
                let is = m
                    .interval
                    .as_ref()
                    .map(|v| format!("{}", v[hi]))
                    .unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{}-{},{},{},{},{}",
                    m.level.name(),
                    id,
                    variant,
                    key.method,
                    key.hierarchy,
                    hi + 1,
                    100.0 * r,
                    is
                )
                .map_err(werr)?;
            }
        }
    }
    Ok(())
}

/// Plain-text per-level ranking of the grid by Mean(RMSFE) × 100.
pub fn save_summary(report: &BacktestReport, path: &Path) -> Result<()> {
    let summary = level_summary(report);
    let mut by_level: BTreeMap<Level, Vec<(MethodKey, f64, Option<f64>)>> = BTreeMap::new();
    for ((key, level), (r, i)) in summary {
        by_level.entry(level).or_default().push((key, r, i));
    }
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    );
    let werr = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(out, "Mean(RMSFE) x 100 per level, best method first").map_err(werr)?;
    for (level, mut rows) in by_level {
        rows.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        writeln!(out, "\nlevel {}", level.name()).map_err(werr)?;
        for (key, r, i) in rows {
            match i {
                Some(i) => writeln!(out, "  {key:<28} rmsfe {r:<12.6} interval {i:.6}"),
                None => writeln!(out, "  {key:<28} rmsfe {r:.6}"),
            }
            .map_err(werr)?;
        }
    }
    if !report.fallback_log.is_empty() {
        writeln!(out, "\nscore-model fallbacks:").map_err(werr)?;
        for line in &report.fallback_log {
            writeln!(out, "  {line}").map_err(werr)?;
        }
    }
    Ok(())
}
