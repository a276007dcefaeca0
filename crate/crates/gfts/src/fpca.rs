//! Dynamic functional principal component analysis on the long-run
//! covariance: mean estimation, eigendecomposition, component-count selection
//! at an explained-variance threshold, score computation, and reconstruction.
//!
//! Extraction runs on the stacked vector of a joint block's series; the
//! single-series block is the univariate special case of the same code path.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::lrcov::{CurvePanel, LongRunCov};
use crate::panel::SeriesId;

/// Series modeled jointly in one stacked block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointBlockSpec {
    pub members: Vec<SeriesId>,
}

impl JointBlockSpec {
    pub fn new(members: Vec<SeriesId>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("empty joint block".into()));
        }
        Ok(JointBlockSpec { members })
    }

    pub fn single(id: SeriesId) -> Self {
        JointBlockSpec { members: vec![id] }
    }

    pub fn omega(&self) -> usize {
        self.members.len()
    }
}

/// Stack the block's series row-wise: row t is the concatenation
/// [f_t^{(1)}, …, f_t^{(ω)}] in block order.
pub fn stack(
    curves: &BTreeMap<SeriesId, DMatrix<f64>>,
    block: &JointBlockSpec,
) -> Result<CurvePanel> {
    let first = curves
        .get(&block.members[0])
        .ok_or_else(|| Error::Structure(format!("series {} not available", block.members[0])))?;
    let n = first.nrows();
    let p = first.ncols();
    let omega = block.omega();
    let mut values = DMatrix::zeros(n, omega * p);
    for (l, id) in block.members.iter().enumerate() {
        let m = curves
            .get(id)
            .ok_or_else(|| Error::Structure(format!("series {id} not available")))?;
        if m.nrows() != n || m.ncols() != p {
            return Err(Error::Structure(format!(
                "series {id} has shape {}×{}, block expects {n}×{p}",
                m.nrows(),
                m.ncols()
            )));
        }
        for t in 0..n {
            for i in 0..p {
                values[(t, l * p + i)] = m[(t, i)];
            }
        }
    }
    CurvePanel::new(values)
}

/// Split a stacked h × (ω·p) matrix back into per-series h × p matrices.
pub fn unstack(
    stacked: &DMatrix<f64>,
    block: &JointBlockSpec,
    p: usize,
) -> BTreeMap<SeriesId, DMatrix<f64>> {
    let h = stacked.nrows();
    block
        .members
        .iter()
        .enumerate()
        .map(|(l, id)| {
            let m = DMatrix::from_fn(h, p, |t, i| stacked[(t, l * p + i)]);
            (id.clone(), m)
        })
        .collect()
}

/// Fitted dynamic FPCA model for one joint block.
#[derive(Debug, Clone)]
pub struct FpcaModel {
    pub mean: DVector<f64>,
    /// Retained eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// d × K, columns orthonormal under the grid inner product.
    pub components: DMatrix<f64>,
    /// n × K score time series.
    pub scores: DMatrix<f64>,
    pub block: JointBlockSpec,
    /// Per-series grid length; d = ω · p.
    pub p: usize,
    /// Grid weight used for inner products.
    pub delta: f64,
}

impl FpcaModel {
    pub fn k(&self) -> usize {
        self.components.ncols()
    }

    pub fn dim(&self) -> usize {
        self.components.nrows()
    }
}

/// Smallest K whose cumulative eigenvalue share reaches the threshold.
/// Zero (and negative) eigenvalues are excluded from the denominator.
pub fn select_k(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if !(0.0 < threshold && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} outside (0, 1]"
        )));
    }
    let total: f64 = eigenvalues.iter().filter(|&&l| l > 0.0).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("all eigenvalues are zero".into()));
    }
    let mut cum = 0.0;
    for (k, &l) in eigenvalues.iter().enumerate() {
        cum += l.max(0.0);
        if cum / total >= threshold {
            return Ok(k + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// Fit the FPCA model: column means, eigendecomposition of the long-run
/// covariance, K at the explained-variance threshold (capped at `max_k`),
/// and scores by the discretized inner product.
pub fn fit_fpca(
    panel: &CurvePanel,
    lrc: &LongRunCov,
    threshold: f64,
    max_k: usize,
) -> Result<FpcaModel> {
    let d = panel.dim();
    if lrc.matrix.nrows() != d {
        return Err(Error::InvalidArgument(format!(
            "long-run covariance dimension {} does not match panel dimension {d}",
            lrc.matrix.nrows()
        )));
    }
    let n = panel.n();
    let mean = DVector::from_vec(panel.column_mean());

    let eig = SymmetricEigen::new(lrc.matrix.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let k = select_k(
        &order.iter().map(|&i| eig.eigenvalues[i]).collect::<Vec<_>>(),
        threshold,
    )?
    .min(max_k.max(1));

    // Eigenvectors are orthonormal in R^d; with delta = 1 they are the
    // discretized eigenfunctions directly.
    let scale = 1.0 / panel.delta.sqrt();
    let mut components = DMatrix::zeros(d, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (col, &src) in order.iter().take(k).enumerate() {
        eigenvalues.push(eig.eigenvalues[src].max(0.0));
        let v = eig.eigenvectors.column(src);
        // Deterministic sign: largest-magnitude element positive.
        let mut max_abs = 0.0;
        let mut sign = 1.0;
        for i in 0..d {
            if v[i].abs() > max_abs {
                max_abs = v[i].abs();
                sign = if v[i] >= 0.0 { 1.0 } else { -1.0 };
            }
        }
        for i in 0..d {
            components[(i, col)] = sign * v[i] * scale;
        }
    }

    // Scores: β_{t,k} = Σ_i (f_t(x_i) − μ(x_i)) φ_k(x_i) Δ.
    let mut scores = DMatrix::zeros(n, k);
    for t in 0..n {
        for col in 0..k {
            let mut acc = 0.0;
            for i in 0..d {
                acc += (panel.values[(t, i)] - mean[i]) * components[(i, col)];
            }
            scores[(t, col)] = acc * panel.delta;
        }
    }

    Ok(FpcaModel {
        mean,
        eigenvalues,
        components,
        scores,
        block: JointBlockSpec {
            members: Vec::new(),
        },
        p: d,
        delta: panel.delta,
    })
}

/// Fit directly from per-series curves: stack, estimate the long-run
/// covariance at the plug-in bandwidth, and fit.
pub fn fit_block(
    curves: &BTreeMap<SeriesId, DMatrix<f64>>,
    block: &JointBlockSpec,
    kernel: crate::lrcov::Kernel,
    bandwidth: Option<f64>,
    threshold: f64,
    max_k: usize,
) -> Result<FpcaModel> {
    let panel = stack(curves, block)?;
    let v = match bandwidth {
        Some(v) => v,
        None => crate::lrcov::plugin_bandwidth(&panel, kernel)?,
    };
    let lrc = crate::lrcov::long_run_cov(&panel, v, kernel)?;
    let mut model = fit_fpca(&panel, &lrc, threshold, max_k)?;
    model.block = block.clone();
    model.p = panel.dim() / block.omega();
    Ok(model)
}

/// Rebuild curves from scores: row j = μ + Σ_k scores[j][k] φ_k.
pub fn reconstruct(model: &FpcaModel, scores: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if scores.ncols() != model.k() {
        return Err(Error::InvalidArgument(format!(
            "score width {} does not match K = {}",
            scores.ncols(),
            model.k()
        )));
    }
    let h = scores.nrows();
    let d = model.dim();
    let mut out = DMatrix::zeros(h, d);
    for j in 0..h {
        for i in 0..d {
            let mut v = model.mean[i];
            for k in 0..model.k() {
                v += scores[(j, k)] * model.components[(i, k)];
            }
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Reconstruct and split back into per-series curves.
pub fn reconstruct_per_series(
    model: &FpcaModel,
    scores: &DMatrix<f64>,
) -> Result<BTreeMap<SeriesId, DMatrix<f64>>> {
    let stacked = reconstruct(model, scores)?;
    Ok(unstack(&stacked, &model.block, model.p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrcov::Kernel;
    use crate::panel::{synthesize_panel, ScoreDynamics, Sex, SynthSpec};
    use approx::assert_abs_diff_eq;

    fn synth_curves(
        k_true: usize,
        prefs: usize,
        n: usize,
        seed: u64,
    ) -> (BTreeMap<SeriesId, DMatrix<f64>>, Vec<SeriesId>) {
        let (panel, _) = synthesize_panel(
            &SynthSpec {
                regions: 1,
                prefs_per_region: prefs,
                sexes: false,
                n,
                p: 25,
                k_true,
                noise: 0.0,
                dynamics: ScoreDynamics::Ar1 { phi: 0.6 },
                ..SynthSpec::default()
            },
            seed,
        )
        .unwrap();
        let logs = crate::panel::to_log(&panel, 1e-7).unwrap();
        let ids: Vec<SeriesId> = (1..=prefs)
            .map(|q| SeriesId::new(format!("R1P{q}"), Sex::Total))
            .collect();
        let curves = ids
            .iter()
            .map(|id| (id.clone(), logs[id].values.clone()))
            .collect();
        (curves, ids)
    }

    #[test]
    fn stack_layout_and_round_trip() {
        // ω = 2, p = 3, n = 2 hand fixture with a documented layout.
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = DMatrix::from_row_slice(2, 3, &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let mut curves = BTreeMap::new();
        let ia = SeriesId::new("A", Sex::Total);
        let ib = SeriesId::new("B", Sex::Total);
        curves.insert(ia.clone(), a.clone());
        curves.insert(ib.clone(), b.clone());
        let block = JointBlockSpec::new(vec![ia.clone(), ib.clone()]).unwrap();
        let stacked = stack(&curves, &block).unwrap();
        assert_eq!(stacked.values.nrows(), 2);
        assert_eq!(stacked.values.ncols(), 6);
        // Index-arithmetic oracle: column l*p + i holds series l, age i.
        for t in 0..2 {
            for i in 0..3 {
                assert_eq!(stacked.values[(t, i)], a[(t, i)]);
                assert_eq!(stacked.values[(t, 3 + i)], b[(t, i)]);
            }
        }
        let back = unstack(&stacked.values, &block, 3);
        assert_eq!(back[&ia], a);
        assert_eq!(back[&ib], b);
    }

    #[test]
    fn stack_single_series_is_identity() {
        let (curves, ids) = synth_curves(1, 1, 10, 1);
        let block = JointBlockSpec::single(ids[0].clone());
        let stacked = stack(&curves, &block).unwrap();
        assert_eq!(stacked.values, curves[&ids[0]]);
    }

    #[test]
    fn stack_rejects_mismatched_shapes() {
        let mut curves = BTreeMap::new();
        let ia = SeriesId::new("A", Sex::Total);
        let ib = SeriesId::new("B", Sex::Total);
        curves.insert(ia.clone(), DMatrix::zeros(3, 4));
        curves.insert(ib.clone(), DMatrix::zeros(3, 5));
        let block = JointBlockSpec::new(vec![ia, ib]).unwrap();
        assert!(stack(&curves, &block).is_err());
    }

    #[test]
    fn select_k_examples() {
        // Exactly-0.9 boundary qualifies.
        assert_eq!(select_k(&[9.0, 1.0], 0.9).unwrap(), 1);
        assert_eq!(select_k(&[0.5, 0.3, 0.15, 0.05], 0.9).unwrap(), 3);
        // Zero eigenvalues excluded from the denominator.
        assert_eq!(select_k(&[1.0, 0.0, 0.0], 0.9).unwrap(), 1);
        assert!(select_k(&[0.0, 0.0], 0.9).is_err());
        assert!(select_k(&[1.0], 1.5).is_err());
    }

    #[test]
    fn rank_two_block_recovered_exactly() {
        // White-noise scores keep the sample eigenvalue shares stable. The
        // population share of the leading component is ≈ 0.90 (variance ratio
        // 4 times the shape-norm ratio ≈ 2.3), i.e. exactly at the default
        // threshold, so select at 0.95 where K = 2 is unambiguous.
        for omega in [1usize, 2, 4] {
            let (panel, _) = synthesize_panel(
                &SynthSpec {
                    regions: 1,
                    prefs_per_region: omega,
                    sexes: false,
                    n: 100,
                    p: 25,
                    k_true: 2,
                    noise: 0.0,
                    dynamics: ScoreDynamics::WhiteNoise,
                    ..SynthSpec::default()
                },
                40 + omega as u64,
            )
            .unwrap();
            let logs = crate::panel::to_log(&panel, 1e-7).unwrap();
            let ids: Vec<SeriesId> = (1..=omega)
                .map(|q| SeriesId::new(format!("R1P{q}"), Sex::Total))
                .collect();
            let curves: BTreeMap<SeriesId, DMatrix<f64>> = ids
                .iter()
                .map(|id| (id.clone(), logs[id].values.clone()))
                .collect();
            let block = JointBlockSpec::new(ids).unwrap();
            let model = fit_block(&curves, &block, Kernel::Bartlett, None, 0.95, 10).unwrap();
            assert_eq!(model.k(), 2, "omega = {omega}");
            let recon = reconstruct(&model, &model.scores).unwrap();
            let stacked = stack(&curves, &block).unwrap();
            let err: f64 = recon
                .iter()
                .zip(stacked.values.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-8, "omega = {omega}, err = {err}");
        }
    }

    #[test]
    fn constant_panel_is_degenerate() {
        let values = DMatrix::from_element(10, 4, 3.0);
        let panel = CurvePanel {
            values,
            delta: 1.0,
        };
        let lrc = crate::lrcov::long_run_cov(&panel, 1.0, Kernel::Bartlett).unwrap();
        assert!(matches!(
            fit_fpca(&panel, &lrc, 0.9, 10),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn score_columns_are_centered() {
        let (curves, ids) = synth_curves(2, 2, 25, 3);
        let block = JointBlockSpec::new(ids).unwrap();
        let model = fit_block(&curves, &block, Kernel::Bartlett, None, 0.9, 10).unwrap();
        for k in 0..model.k() {
            let mean: f64 = model.scores.column(k).sum() / model.scores.nrows() as f64;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn components_orthonormal() {
        let (curves, ids) = synth_curves(3, 2, 30, 5);
        let block = JointBlockSpec::new(ids).unwrap();
        let model = fit_block(&curves, &block, Kernel::Bartlett, None, 0.99, 10).unwrap();
        let gram = model.components.transpose() * &model.components * model.delta;
        for i in 0..model.k() {
            for j in 0..model.k() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[(i, j)], expected, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn reconstruct_identities() {
        let (curves, ids) = synth_curves(2, 2, 20, 6);
        let block = JointBlockSpec::new(ids).unwrap();
        let model = fit_block(&curves, &block, Kernel::Bartlett, None, 0.9, 10).unwrap();
        let d = model.dim();
        // Zero scores give the mean curve.
        let zero = reconstruct(&model, &DMatrix::zeros(1, model.k())).unwrap();
        for i in 0..d {
            assert_abs_diff_eq!(zero[(0, i)], model.mean[i], epsilon = 0.0);
        }
        // One-hot score e_k gives mean + φ_k.
        for k in 0..model.k() {
            let mut s = DMatrix::zeros(1, model.k());
            s[(0, k)] = 1.0;
            let r = reconstruct(&model, &s).unwrap();
            for i in 0..d {
                assert_abs_diff_eq!(
                    r[(0, i)],
                    model.mean[i] + model.components[(i, k)],
                    epsilon = 1e-14
                );
            }
        }
        // Shape mismatch rejected.
        assert!(reconstruct(&model, &DMatrix::zeros(1, model.k() + 1)).is_err());
    }

    #[test]
    fn reconstruction_error_non_increasing_in_k() {
        let (curves, ids) = synth_curves(3, 2, 40, 7);
        let block = JointBlockSpec::new(ids).unwrap();
        let stacked = stack(&curves, &block).unwrap();
        let v = crate::lrcov::plugin_bandwidth(&stacked, Kernel::Bartlett).unwrap();
        let lrc = crate::lrcov::long_run_cov(&stacked, v, Kernel::Bartlett).unwrap();
        let mut last = f64::INFINITY;
        for max_k in 1..=4 {
            let model = fit_fpca(&stacked, &lrc, 1.0, max_k).unwrap();
            let recon = reconstruct(&model, &model.scores).unwrap();
            let err: f64 = recon
                .iter()
                .zip(stacked.values.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            assert!(err <= last + 1e-10);
            last = err;
        }
    }

    #[test]
    fn univariate_path_is_bit_identical_special_case() {
        let (curves, ids) = synth_curves(2, 1, 25, 8);
        let id = ids[0].clone();
        let block = JointBlockSpec::single(id.clone());
        let joint = fit_block(&curves, &block, Kernel::Bartlett, None, 0.9, 10).unwrap();

        // Fit the same series "alone": identical inputs, identical bits.
        let solo_panel = CurvePanel::new(curves[&id].clone()).unwrap();
        let v = crate::lrcov::plugin_bandwidth(&solo_panel, Kernel::Bartlett).unwrap();
        let lrc = crate::lrcov::long_run_cov(&solo_panel, v, Kernel::Bartlett).unwrap();
        let solo = fit_fpca(&solo_panel, &lrc, 0.9, 10).unwrap();
        assert_eq!(joint.scores.as_slice(), solo.scores.as_slice());
        assert_eq!(joint.components.as_slice(), solo.components.as_slice());
        assert_eq!(joint.eigenvalues, solo.eigenvalues);
    }

    #[test]
    fn score_variance_follows_eigenvalue_order() {
        // iid-in-t panel, n = 1000: sample variance of scores tracks the
        // eigenvalue ordering within 20%.
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 1000;
        let d = 6;
        let sds = [3.0, 2.0, 1.0, 0.5, 0.25, 0.1];
        let values = DMatrix::from_fn(n, d, |_, j| sds[j] * normal.sample(&mut rng));
        let panel = CurvePanel::new(values).unwrap();
        let lrc = crate::lrcov::long_run_cov(&panel, 1.0, Kernel::Bartlett).unwrap();
        let model = fit_fpca(&panel, &lrc, 1.0, d).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..model.k() {
            let col = model.scores.column(k);
            let mean: f64 = col.sum() / n as f64;
            let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(var <= last * 1.2, "score variance out of order at k = {k}");
            last = var;
        }
    }
}
