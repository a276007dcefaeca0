//! Weighted penalized regression spline smoothing of yearly log-mortality
//! curves, with a monotone (non-decreasing) constraint at old ages.
//!
//! The basis is uniform cubic B-splines with equally spaced knots (P-spline
//! setup), penalized by second-order differences of the coefficients. The
//! penalty weight is chosen by generalized cross-validation over a log-spaced
//! grid; ties break toward the smoother fit.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::{AgeGrid, MortalityPanel, SeriesId};

#[derive(Debug, Clone)]
pub struct SmoothOpts {
    /// Spacing of the uniform B-spline knots in years of age.
    pub knot_spacing: f64,
    /// log10 bounds and size of the GCV search grid for the penalty weight.
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_count: usize,
    /// Ages at and above this get the non-decreasing constraint.
    pub monotone_from_age: f64,
    /// Floor applied to rates before taking logs.
    pub log_floor: f64,
}

impl Default for SmoothOpts {
    fn default() -> Self {
        SmoothOpts {
            knot_spacing: 2.0,
            lambda_min: 1e-4,
            lambda_max: 1e4,
            lambda_count: 25,
            monotone_from_age: 65.0,
            log_floor: crate::panel::DEFAULT_LOG_FLOOR,
        }
    }
}

/// One smoothed yearly curve.
#[derive(Debug, Clone)]
pub struct SmoothCurve {
    /// Fitted log rates at every grid age (missing cells filled).
    pub values: Vec<f64>,
    /// Weights used in the fit (0 at missing cells).
    pub weights: Vec<f64>,
    /// GCV-selected penalty.
    pub lambda: f64,
}

/// Binomial-variance weights for log rates: w_i = m_i E_i / (1 - m_i).
///
/// Missing cells (NaN rate) get weight 0. Rates at or above 1 are clamped to
/// 1 - 1e-10, where the Taylor variance formula degenerates.
pub fn variance_weights(rate: &[f64], exposure: &[f64]) -> Vec<f64> {
    assert_eq!(rate.len(), exposure.len());
    rate.iter()
        .zip(exposure)
        .map(|(&m, &e)| {
            if m.is_nan() || e.is_nan() || e <= 0.0 || m <= 0.0 {
                0.0
            } else {
                let m = m.min(1.0 - 1e-10);
                m * e / (1.0 - m)
            }
        })
        .collect()
}

/// Uniform cubic B-spline basis on [a, b] with the given knot spacing.
/// Knots extend past the domain so the basis has linear precision with
/// uniformly spaced Greville abscissae.
pub struct BSplineBasis {
    knots: Vec<f64>,
    n_basis: usize,
}

pub const SPLINE_DEGREE: usize = 3;

impl BSplineBasis {
    pub fn uniform(a: f64, b: f64, spacing: f64) -> Self {
        assert!(b > a && spacing > 0.0);
        let nseg = ((b - a) / spacing).ceil().max(1.0) as usize;
        let n_basis = nseg + SPLINE_DEGREE;
        // Knots run from a - degree*h to past b, uniformly spaced.
        let knots: Vec<f64> = (0..(nseg + 2 * SPLINE_DEGREE + 1))
            .map(|j| a + (j as f64 - SPLINE_DEGREE as f64) * spacing)
            .collect();
        BSplineBasis { knots, n_basis }
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Evaluate all basis functions at x (Cox–de Boor).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let k = SPLINE_DEGREE;
        let mut out = vec![0.0; self.n_basis];
        // Degree-0 seed: exactly one span indicator is set. The last domain
        // span is treated as closed on the right so x = b is covered once.
        let m = self.knots.len();
        let last_dom = m - 1 - k; // knot index of the domain's right endpoint
        let mut span = last_dom - 1;
        for j in 0..m - 1 {
            if x >= self.knots[j] && x < self.knots[j + 1] {
                span = j.min(last_dom - 1);
                break;
            }
        }
        let mut b = vec![0.0; m - 1];
        b[span] = 1.0;
        for d in 1..=k {
            let mut next = vec![0.0; b.len() - 1];
            for j in 0..next.len() {
                let left_den = self.knots[j + d] - self.knots[j];
                let right_den = self.knots[j + d + 1] - self.knots[j + 1];
                let mut v = 0.0;
                if left_den > 0.0 {
                    v += (x - self.knots[j]) / left_den * b[j];
                }
                if right_den > 0.0 {
                    v += (self.knots[j + d + 1] - x) / right_den * b[j + 1];
                }
                next[j] = v;
            }
            b = next;
        }
        out[..self.n_basis].copy_from_slice(&b[..self.n_basis]);
        out
    }

    /// Design matrix at the given evaluation points.
    pub fn design(&self, xs: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(xs.len(), self.n_basis);
        for (r, &x) in xs.iter().enumerate() {
            for (c, v) in self.eval(x).into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        m
    }
}

/// Second-order difference penalty matrix DᵀD for `n_basis` coefficients.
fn second_diff_penalty(n_basis: usize) -> DMatrix<f64> {
    let rows = n_basis.saturating_sub(2);
    let mut d = DMatrix::zeros(rows, n_basis);
    for r in 0..rows {
        d[(r, r)] = 1.0;
        d[(r, r + 1)] = -2.0;
        d[(r, r + 2)] = 1.0;
    }
    d.transpose() * d
}

/// Weighted pool-adjacent-violators: non-decreasing fit minimizing
/// Σ w_i (v_i - f_i)².
pub fn isotonic_non_decreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    let mut level: Vec<f64> = Vec::with_capacity(values.len());
    let mut weight: Vec<f64> = Vec::with_capacity(values.len());
    let mut count: Vec<usize> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let w = w.max(1e-12); // zero-weight cells still merge into blocks
        level.push(v);
        weight.push(w);
        count.push(1);
        while level.len() > 1 && level[level.len() - 2] > level[level.len() - 1] {
            let (v2, w2, c2) = (
                level.pop().unwrap(),
                weight.pop().unwrap(),
                count.pop().unwrap(),
            );
            let last = level.len() - 1;
            let merged_w = weight[last] + w2;
            level[last] = (level[last] * weight[last] + v2 * w2) / merged_w;
            weight[last] = merged_w;
            count[last] += c2;
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (lvl, c) in level.iter().zip(&count) {
        out.extend(std::iter::repeat(*lvl).take(*c));
    }
    out
}

/// Smooth one year's log-rate curve. NaN entries in `y` (or zero weights) are
/// treated as missing and filled by the fitted spline.
pub fn smooth_curve(
    y: &[f64],
    w: &[f64],
    grid: &AgeGrid,
    opts: &SmoothOpts,
) -> Result<SmoothCurve> {
    let p = grid.len();
    assert_eq!(y.len(), p);
    assert_eq!(w.len(), p);

    let observed: Vec<usize> = (0..p)
        .filter(|&i| !y[i].is_nan() && w[i] > 0.0)
        .collect();
    if observed.is_empty() {
        return Err(Error::InvalidArgument("all cells missing".into()));
    }
    if observed.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 observed points, got {}",
            observed.len()
        )));
    }

    // Normalize weights to mean 1 over observed cells so the GCV-selected
    // penalty is invariant to a global weight rescaling.
    let mean_w: f64 = observed.iter().map(|&i| w[i]).sum::<f64>() / observed.len() as f64;
    let wn: Vec<f64> = w.iter().map(|&wi| wi / mean_w).collect();

    let a = grid.ages[0];
    let b = grid.ages[p - 1];
    let basis = BSplineBasis::uniform(a, b, opts.knot_spacing);
    let nb = basis.n_basis();
    let design_all = basis.design(&grid.ages);

    // Weighted cross-products over observed cells.
    let n_obs = observed.len();
    let mut btwb = DMatrix::zeros(nb, nb);
    let mut btwy = DVector::zeros(nb);
    for &i in &observed {
        let row = design_all.row(i);
        let wi = wn[i];
        for c1 in 0..nb {
            btwy[c1] += wi * row[c1] * y[i];
            for c2 in 0..nb {
                btwb[(c1, c2)] += wi * row[c1] * row[c2];
            }
        }
    }
    let penalty = second_diff_penalty(nb);

    let lambdas: Vec<f64> = (0..opts.lambda_count)
        .map(|j| {
            let t = j as f64 / (opts.lambda_count - 1).max(1) as f64;
            10f64.powf(opts.lambda_min.log10() * (1.0 - t) + opts.lambda_max.log10() * t)
        })
        .collect();

    let mut best: Option<(f64, f64, DVector<f64>)> = None; // (gcv, lambda, coef)
    for &lambda in &lambdas {
        let a_mat = &btwb + &penalty * lambda;
        let chol = match Cholesky::new(a_mat.clone()) {
            Some(c) => c,
            None => continue,
        };
        let coef = chol.solve(&btwy);
        // Effective degrees of freedom: tr(A⁻¹ BᵀWB).
        let inv_btwb = chol.solve(&btwb);
        let edf: f64 = inv_btwb.diagonal().sum();
        if edf >= n_obs as f64 - 1e-9 {
            continue;
        }
        let mut rss = 0.0;
        for &i in &observed {
            let fit: f64 = (0..nb).map(|c| design_all[(i, c)] * coef[c]).sum();
            rss += wn[i] * (y[i] - fit).powi(2);
        }
        let gcv = (rss / n_obs as f64) / (1.0 - edf / n_obs as f64).powi(2);
        // Ties (within a small relative margin) break toward the larger lambda.
        let better = match &best {
            None => true,
            Some((g, _, _)) => gcv < *g * (1.0 - 1e-12),
        };
        if better || matches!(&best, Some((g, _, _)) if (gcv - *g).abs() <= 1e-12 * g.abs()) {
            best = Some((gcv, lambda, coef.clone()));
        }
    }
    let (_, lambda, coef) = best.ok_or_else(|| {
        Error::InvalidArgument("ill-conditioned basis system at every penalty".into())
    })?;

    let mut values: Vec<f64> = (0..p)
        .map(|i| (0..nb).map(|c| design_all[(i, c)] * coef[c]).sum())
        .collect();

    // Monotone constraint at old ages via weighted PAVA on the fitted values.
    let start = grid
        .ages
        .iter()
        .position(|&x| x >= opts.monotone_from_age)
        .unwrap_or(p);
    if start < p {
        let region = isotonic_non_decreasing(&values[start..], &wn[start..]);
        values[start..].copy_from_slice(&region);
    }

    Ok(SmoothCurve {
        values,
        weights: w.to_vec(),
        lambda,
    })
}

/// Smooth every (series, year) curve of a panel; returns per-series n × p
/// matrices of smoothed log rates.
pub fn smooth_panel(
    panel: &MortalityPanel,
    opts: &SmoothOpts,
) -> Result<BTreeMap<SeriesId, DMatrix<f64>>> {
    let logs = crate::panel::to_log(panel, opts.log_floor)?;
    let n = panel.n_years();
    let p = panel.n_ages();
    let mut out = BTreeMap::new();
    for (id, obs) in &panel.series {
        let y_mat = &logs[id].values;
        let mut smoothed = DMatrix::zeros(n, p);
        for t in 0..n {
            let y: Vec<f64> = (0..p).map(|i| y_mat[(t, i)]).collect();
            let rate: Vec<f64> = (0..p).map(|i| obs.rate[(t, i)]).collect();
            let exposure: Vec<f64> = (0..p).map(|i| obs.exposure[(t, i)]).collect();
            let w = variance_weights(&rate, &exposure);
            let curve = smooth_curve(&y, &w, &panel.grid, opts).map_err(|e| Error::Smoothing {
                series: id.to_string(),
                year: panel.years[t],
                msg: e.to_string(),
            })?;
            for i in 0..p {
                smoothed[(t, i)] = curve.values[i];
            }
        }
        out.insert(id.clone(), smoothed);
    }
    Ok(out)
}
