//! Kernel long-run covariance estimation for (stacked) functional time series:
//! lagged autocovariances, compactly supported kernel weights, a plug-in
//! bandwidth, and the kernel-sandwich estimator with PSD repair.

use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Discretized curves: one row per time point, d = p columns for one series
/// or ω·p for a stacked block. Inner products on the age grid use the uniform
/// weight `delta` (1 by default, unit age spacing).
#[derive(Debug, Clone)]
pub struct CurvePanel {
    pub values: DMatrix<f64>,
    pub delta: f64,
}

impl CurvePanel {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 1 {
            return Err(Error::InvalidArgument("curve panel has no rows".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "curve panel has non-finite cells (smoothing must run first)".into(),
            ));
        }
        Ok(CurvePanel { values, delta: 1.0 })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_mean(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.dim())
            .map(|j| self.values.column(j).sum() / n)
            .collect()
    }

    fn centered(&self) -> DMatrix<f64> {
        let mean = self.column_mean();
        let mut c = self.values.clone();
        for j in 0..self.dim() {
            for t in 0..self.n() {
                c[(t, j)] -= mean[j];
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Bartlett,
    FlatTop,
}

impl Kernel {
    /// Kernel weight W_q(u): 1 at 0, symmetric, compactly supported on [-1, 1].
    pub fn weight(self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            Kernel::Bartlett => (1.0 - a).max(0.0),
            Kernel::FlatTop => {
                if a <= 0.5 {
                    1.0
                } else if a <= 1.0 {
                    2.0 * (1.0 - a)
                } else {
                    0.0
                }
            }
        }
    }

    /// Support bound m: W(u) = 0 for |u| > m.
    pub fn support(self) -> f64 {
        1.0
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bartlett" => Ok(Kernel::Bartlett),
            "flattop" | "flat-top" => Ok(Kernel::FlatTop),
            other => Err(Error::InvalidArgument(format!("unknown kernel {other:?}"))),
        }
    }
}

/// Lag-ℓ sample autocovariance with divisor n. γ̂_{-ℓ} equals γ̂_ℓ transposed.
pub fn autocov(panel: &CurvePanel, lag: i64) -> Result<DMatrix<f64>> {
    let n = panel.n() as i64;
    if lag.abs() >= n {
        return Err(Error::InvalidArgument(format!(
            "|lag| = {} must be < n = {n}",
            lag.abs()
        )));
    }
    if lag < 0 {
        return Ok(autocov(panel, -lag)?.transpose());
    }
    let centered = panel.centered();
    let l = lag as usize;
    let n = panel.n();
    let head = centered.rows(0, n - l);
    let tail = centered.rows(l, n - l);
    Ok(head.transpose() * tail / n as f64)
}

/// Estimated long-run covariance matrix with its bandwidth and kernel.
#[derive(Debug, Clone)]
pub struct LongRunCov {
    pub matrix: DMatrix<f64>,
    pub bandwidth: f64,
    pub kernel: Kernel,
}

/// Two-stage plug-in bandwidth. The pilot bandwidth is n^{1/5}; the final
/// bandwidth balances the kernel's bias term against its variance using
/// Frobenius norms of the pilot-weighted covariance sums. Constants are those
/// of the Bartlett kernel (q = 1, ω_q = 1, ‖W‖₂² = 2/3); the flat-top kernel
/// reuses them as a pilot since its own first-order constant vanishes.
pub fn plugin_bandwidth(panel: &CurvePanel, kernel: Kernel) -> Result<f64> {
    let n = panel.n();
    if n < 8 {
        return Err(Error::InvalidArgument(format!(
            "plug-in bandwidth needs n >= 8, got {n}"
        )));
    }
    let q = 1.0;
    let omega_q = 1.0;
    let w_l2_sq = 2.0 / 3.0;

    let v0 = (n as f64).powf(0.2);
    let max_lag = ((kernel.support() * v0).floor() as i64).min(n as i64 - 1);

    let d = panel.dim();
    let mut c0 = DMatrix::zeros(d, d);
    let mut cq = DMatrix::zeros(d, d);
    for l in -max_lag..=max_lag {
        let w = Kernel::Bartlett.weight(l as f64 / v0);
        if w <= 0.0 {
            continue;
        }
        let g = autocov(panel, l)?;
        c0 += &g * w;
        cq += &g * (w * (l.abs() as f64).powf(q));
    }
    let c0_frob_sq: f64 = c0.iter().map(|v| v * v).sum();
    let c0_trace: f64 = c0.diagonal().sum();
    let c_aug_sq = c0_frob_sq + c0_trace * c0_trace;
    let cq_frob_sq: f64 = cq.iter().map(|v| v * v).sum();

    if c_aug_sq <= 1e-300 {
        // Degenerate all-constant panel.
        return Ok(1.0);
    }

    let ratio = (2.0 * q * omega_q * omega_q * cq_frob_sq * n as f64) / (w_l2_sq * c_aug_sq);
    Ok(ratio.powf(1.0 / (2.0 * q + 1.0)).max(1.0))
}

/// Kernel-sandwich long-run covariance: Σ_ℓ W(ℓ/v) γ̂_ℓ over the kernel's
/// support, symmetrized, with negative eigenvalues clipped to zero.
pub fn long_run_cov(panel: &CurvePanel, v: f64, kernel: Kernel) -> Result<LongRunCov> {
    if v < 1.0 {
        return Err(Error::InvalidArgument(format!("bandwidth v = {v} must be >= 1")));
    }
    if panel.n() < 3 {
        return Err(Error::InvalidArgument(format!(
            "long-run covariance needs n >= 3, got {}",
            panel.n()
        )));
    }
    let n = panel.n() as i64;
    let max_lag = ((kernel.support() * v).floor() as i64).min(n - 1);
    let d = panel.dim();
    let mut sum = DMatrix::zeros(d, d);
    for l in -max_lag..=max_lag {
        let w = kernel.weight(l as f64 / v);
        if w <= 0.0 {
            continue;
        }
        sum += autocov(panel, l)? * w;
    }
    let sym = (&sum + sum.transpose()) * 0.5;
    let matrix = clip_to_psd(sym);
    Ok(LongRunCov {
        matrix,
        bandwidth: v,
        kernel,
    })
}

/// Floor negative eigenvalues at zero and recompose; preserves the leading
/// eigenspace used downstream.
fn clip_to_psd(sym: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(sym);
    let d = eig.eigenvalues.len();
    let mut out = DMatrix::zeros(d, d);
    for k in 0..d {
        let lambda = eig.eigenvalues[k];
        if lambda <= 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] += lambda * v[i] * v[j];
            }
        }
    }
    // Exact symmetry after recomposition.
    let t = out.transpose();
    (out + t) * 0.5
}
