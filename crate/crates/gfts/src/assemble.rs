//! Assemble h-step point forecast curves from score forecasts, and build
//! calibrated nonparametric-bootstrap pointwise prediction intervals.
//!
//! Interval construction per horizon h:
//! 1. fit score models on the full sample's scores (components and mean held
//!    fixed from the full fit);
//! 2. compute in-sample h-step forecast-error curves over the
//!    M = n − h − K + 1 available origins;
//! 3. bootstrap the error curves, take pointwise quantiles, and calibrate a
//!    tuning scalar π so the in-sample coverage reaches 1 − α.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fpca::{reconstruct, unstack, FpcaModel};
use crate::panel::SeriesId;
use crate::scorecast::{fit_arima, forecast_scores, rwd_forecast, ScoreModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMethod {
    Arima,
    Rwd,
}

#[derive(Debug, Clone)]
pub struct ForecastOpts {
    pub method: ScoreMethod,
    pub max_p: usize,
    pub max_q: usize,
    pub max_d: usize,
    pub alpha: f64,
    pub bootstrap_samples: usize,
    pub seed: u64,
}

impl Default for ForecastOpts {
    fn default() -> Self {
        ForecastOpts {
            method: ScoreMethod::Arima,
            max_p: 3,
            max_q: 3,
            max_d: 2,
            alpha: 0.2,
            bootstrap_samples: 1000,
            seed: 0,
        }
    }
}

/// Point and interval forecast curves for one series.
#[derive(Debug, Clone)]
pub struct SeriesForecast {
    /// h × p log-rate point forecasts.
    pub point: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    /// Calibration scalar per horizon.
    pub pi_alpha: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForecastSet {
    pub alpha: f64,
    pub horizons: usize,
    pub series: BTreeMap<SeriesId, SeriesForecast>,
}

/// In-sample h-step forecast-error curves for one block, stacked dimension d.
#[derive(Debug, Clone)]
pub struct ErrorSample {
    pub errors: Vec<DVector<f64>>,
    pub h: usize,
    pub k: usize,
}

impl ErrorSample {
    pub fn m(&self) -> usize {
        self.errors.len()
    }
}

/// Fit one score model per component column.
pub fn fit_score_models(model: &FpcaModel, opts: &ForecastOpts) -> Vec<Option<ScoreModel>> {
    (0..model.k())
        .map(|k| {
            let series: Vec<f64> = model.scores.column(k).iter().cloned().collect();
            match opts.method {
                ScoreMethod::Rwd => None,
                ScoreMethod::Arima => fit_arima(&series, opts.max_p, opts.max_q, opts.max_d).ok(),
            }
        })
        .collect()
}

fn forecast_one_score(
    score_model: &Option<ScoreModel>,
    series: &[f64],
    h: usize,
) -> Result<Vec<f64>> {
    match score_model {
        Some(m) => forecast_scores(m, series, h),
        None => rwd_forecast(series, h),
    }
}

/// h-step score forecasts from a prefix of the score sample. In lenient
/// mode (used for very short in-sample origins) a failed model forecast
/// falls back to the random walk with drift, then to repeating the last
/// score.
fn forecast_score_matrix(
    model: &FpcaModel,
    score_models: &[Option<ScoreModel>],
    prefix_len: usize,
    h: usize,
    lenient: bool,
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(h, model.k());
    for k in 0..model.k() {
        let series: Vec<f64> = model
            .scores
            .column(k)
            .iter()
            .take(prefix_len)
            .cloned()
            .collect();
        let fc = match forecast_one_score(&score_models[k], &series, h) {
            Ok(fc) => fc,
            Err(_) if lenient => crate::scorecast::rwd_forecast(&series, h)
                .unwrap_or_else(|_| vec![*series.last().unwrap(); h]),
            Err(e) => return Err(e),
        };
        for (j, v) in fc.into_iter().enumerate() {
            out[(j, k)] = v;
        }
    }
    Ok(out)
}

/// Per-series h × p point forecast curves: forecast each score column,
/// reconstruct through the components, and unstack to series.
pub fn point_forecast(
    model: &FpcaModel,
    opts: &ForecastOpts,
    h: usize,
) -> Result<BTreeMap<SeriesId, DMatrix<f64>>> {
    if h == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let score_models = fit_score_models(model, opts);
    let scores = forecast_score_matrix(model, &score_models, model.scores.nrows(), h, false)?;
    let stacked = reconstruct(model, &scores)?;
    Ok(unstack(&stacked, &model.block, model.p))
}

/// In-sample h-step forecast errors: for each origin ξ ∈ {K, …, n − h},
/// scores up to ξ are forecast h steps with models fitted on the full sample,
/// and the reconstructed curve is compared against the observed one.
pub fn insample_errors(
    model: &FpcaModel,
    actual: &DMatrix<f64>,
    score_models: &[Option<ScoreModel>],
    h: usize,
) -> Result<ErrorSample> {
    let n = model.scores.nrows();
    let k = model.k();
    if n < h + k + 3 {
        return Err(Error::IntervalInfeasible(format!(
            "M = n - h - K + 1 = {} < 4 error curves at h = {h}",
            (n as i64) - (h as i64) - (k as i64) + 1
        )));
    }
    let mut errors = Vec::new();
    for xi in k..=(n - h) {
        let scores = forecast_score_matrix(model, score_models, xi, h, true)?;
        let fitted = reconstruct(model, &scores)?;
        let target = xi + h - 1; // 0-based row of the ξ+h'th curve
        let err = DVector::from_fn(model.dim(), |i, _| {
            actual[(target, i)] - fitted[(h - 1, i)]
        });
        errors.push(err);
    }
    if errors.len() < 4 {
        return Err(Error::IntervalInfeasible(format!(
            "only {} error curves at h = {h}",
            errors.len()
        )));
    }
    Ok(ErrorSample { errors, h, k })
}

/// Type-7 (linear interpolation) empirical quantile.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0);
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi.min(n - 1)] * frac
}

/// Bootstrap pointwise bounds: draw B error curves with replacement, take
/// the α/2 and 1 − α/2 pointwise quantiles. Deterministic for a fixed seed.
pub fn bootstrap_bounds(
    errors: &ErrorSample,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if b < 100 {
        return Err(Error::InvalidArgument("need B >= 100 bootstrap draws".into()));
    }
    if !(0.0 < alpha && alpha < 0.5) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 0.5)")));
    }
    let m = errors.m();
    let d = errors.errors[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<usize> = (0..b).map(|_| rng.gen_range(0..m)).collect();
    let mut lb = vec![0.0; d];
    let mut ub = vec![0.0; d];
    let mut buf = vec![0.0; b];
    for i in 0..d {
        for (j, &idx) in draws.iter().enumerate() {
            buf[j] = errors.errors[idx][i];
        }
        buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Clamp so the interval always contains the point forecast; with few
        // origins both raw quantiles can land on one side of zero, and scaling
        // such bounds by π would move the interval away from small errors,
        // breaking the monotonicity the π calibration relies on.
        lb[i] = quantile_type7(&buf, alpha / 2.0).min(0.0);
        ub[i] = quantile_type7(&buf, 1.0 - alpha / 2.0).max(0.0);
    }
    Ok((lb, ub))
}

/// Sentinel returned when the bounds are degenerate but residuals are not.
pub const PI_MAX: f64 = 100.0;

/// Fraction of (ζ, i) pairs inside [π γ_lb, π γ_ub].
fn coverage(errors: &ErrorSample, lb: &[f64], ub: &[f64], pi: f64) -> f64 {
    let mut inside = 0usize;
    let mut total = 0usize;
    for err in &errors.errors {
        for (i, &e) in err.iter().enumerate() {
            total += 1;
            if pi * lb[i] <= e && e <= pi * ub[i] {
                inside += 1;
            }
        }
    }
    inside as f64 / total as f64
}

/// Smallest π (bisection, tolerance 1e-4) whose in-sample coverage reaches
/// the nominal level 1 − α.
pub fn calibrate_pi(errors: &ErrorSample, lb: &[f64], ub: &[f64], alpha: f64) -> f64 {
    let target = 1.0 - alpha;
    if coverage(errors, lb, ub, 0.0) >= target {
        return 0.0;
    }
    if coverage(errors, lb, ub, PI_MAX) < target {
        // Degenerate bounds cannot reach the target coverage.
        return PI_MAX;
    }
    let (mut lo, mut hi) = (0.0, PI_MAX);
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if coverage(errors, lb, ub, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Interval curves around the point forecast: lower = point + π γ_lb,
/// upper = point + π γ_ub.
pub fn interval_forecast(
    point: &DMatrix<f64>,
    lb: &[f64],
    ub: &[f64],
    pi: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let lower = DMatrix::from_fn(point.nrows(), point.ncols(), |t, i| {
        point[(t, i)] + pi * lb[i]
    });
    let upper = DMatrix::from_fn(point.nrows(), point.ncols(), |t, i| {
        point[(t, i)] + pi * ub[i]
    });
    (lower, upper)
}

/// Full point + interval pipeline for one fitted block. Errors, bounds and π
/// are computed separately per horizon (M shrinks with h); the bootstrap seed
/// is derived per horizon so horizons are independently reproducible.
pub fn forecast_block(
    model: &FpcaModel,
    actual: &DMatrix<f64>,
    opts: &ForecastOpts,
    horizons: usize,
) -> Result<ForecastSet> {
    let score_models = fit_score_models(model, opts);
    let point_scores =
        forecast_score_matrix(model, &score_models, model.scores.nrows(), horizons, false)?;
    let stacked_point = reconstruct(model, &point_scores)?;
    let point_by_series = unstack(&stacked_point, &model.block, model.p);

    let p = model.p;
    let omega = model.block.omega();
    let mut lower_stacked = DMatrix::zeros(horizons, model.dim());
    let mut upper_stacked = DMatrix::zeros(horizons, model.dim());
    let mut pi_by_series: Vec<Vec<f64>> = vec![Vec::with_capacity(horizons); omega];

    for h in 1..=horizons {
        let errors = insample_errors(model, actual, &score_models, h)?;
        let (lb_all, ub_all) = bootstrap_bounds(&errors, opts.bootstrap_samples, opts.alpha, opts.seed.wrapping_add(h as u64))?;
        for l in 0..omega {
            // Per-series slice of the stacked error curves.
            let slice = ErrorSample {
                errors: errors
                    .errors
                    .iter()
                    .map(|e| DVector::from_fn(p, |i, _| e[l * p + i]))
                    .collect(),
                h,
                k: errors.k,
            };
            let lb = &lb_all[l * p..(l + 1) * p];
            let ub = &ub_all[l * p..(l + 1) * p];
            let pi = calibrate_pi(&slice, lb, ub, opts.alpha);
            pi_by_series[l].push(pi);
            for i in 0..p {
                lower_stacked[(h - 1, l * p + i)] = stacked_point[(h - 1, l * p + i)] + pi * lb[i];
                upper_stacked[(h - 1, l * p + i)] = stacked_point[(h - 1, l * p + i)] + pi * ub[i];
            }
        }
    }

    let lower_by_series = unstack(&lower_stacked, &model.block, p);
    let upper_by_series = unstack(&upper_stacked, &model.block, p);
    let mut series = BTreeMap::new();
    for (l, id) in model.block.members.iter().enumerate() {
        series.insert(
            id.clone(),
            SeriesForecast {
                point: point_by_series[id].clone(),
                lower: lower_by_series[id].clone(),
                upper: upper_by_series[id].clone(),
                pi_alpha: pi_by_series[l].clone(),
            },
        );
    }
    Ok(ForecastSet {
        alpha: opts.alpha,
        horizons,
        series,
    })
}

/// Export a forecast set as `series,horizon,age,point,lower,upper,alpha`.
pub fn save_forecast_csv(set: &ForecastSet, ages: &[f64], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    );
    let werr = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(out, "series,horizon,age,point,lower,upper,alpha").map_err(werr)?;
    for (id, fc) in &set.series {
        for h in 0..set.horizons {
            for (i, age) in ages.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    id,
                    h + 1,
                    age,
                    fc.point[(h, i)],
                    fc.lower[(h, i)],
                    fc.upper[(h, i)],
                    set.alpha
                )
                .map_err(werr)?;
            }
        }
    }
    Ok(())
}
