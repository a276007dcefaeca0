//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (run with `--nocapture` to see them).

use std::collections::BTreeMap;
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use gfts::assemble::{forecast_block, ForecastOpts, ScoreMethod};
use gfts::backtest::{
    expanding_window, interval_score, mean_interval_score, mean_stats, rmsfe, BacktestConfig,
    Method, MethodKey,
};
use gfts::fpca::{fit_block, reconstruct, stack, JointBlockSpec};
use gfts::lrcov::{autocov, long_run_cov, CurvePanel, Kernel};
use gfts::panel::{
    synthesize_panel, to_log, AgeGrid, MortalityPanel, ScoreDynamics, SeriesId,
    SeriesObservations, Sex, SynthSpec,
};
use gfts::reconcile::{
    bottom_up, build_summing_matrix, mint_reconcile, ols_reconcile, GroupStructure, HierarchyKind,
    NodeForecasts,
};

fn report(criterion: usize, name: &str, pass: bool) {
    println!(
        "ACCEPTANCE {criterion} {}: {name}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance criterion {criterion} failed: {name}");
}

fn toy_structure(n_leaves: usize) -> GroupStructure {
    let leaves: Vec<String> = (0..n_leaves).map(|i| format!("L{i}")).collect();
    GroupStructure::build(
        HierarchyKind::GeoOnly,
        "TOP",
        vec![("R".to_string(), leaves)],
        false,
    )
    .unwrap()
}

fn toy_panel(structure: &GroupStructure, exposures: &[f64], p: usize) -> MortalityPanel {
    let grid = AgeGrid::new((0..p).map(|i| i as f64).collect(), false).unwrap();
    let mut series = BTreeMap::new();
    for (c, id) in structure.bottoms.iter().enumerate() {
        let rate = DMatrix::from_element(1, p, 0.01);
        let exposure = DMatrix::from_element(1, p, exposures[c]);
        let deaths = rate.component_mul(&exposure);
        series.insert(
            id.clone(),
            SeriesObservations {
                rate,
                exposure,
                deaths,
            },
        );
    }
    MortalityPanel {
        grid,
        years: vec![2000],
        series,
    }
}

#[test]
fn criterion_1_formula_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_diff = 0.0f64;

    for _ in 0..100 {
        // rmsfe vs double loop.
        let m = rng.gen_range(1..4);
        let p = rng.gen_range(1..5);
        let a: DMatrix<f64> = DMatrix::from_fn(m, p, |_, _| rng.gen_range(-2.0..2.0));
        let f: DMatrix<f64> = DMatrix::from_fn(m, p, |_, _| rng.gen_range(-2.0..2.0));
        let mut sum = 0.0;
        for t in 0..m {
            for i in 0..p {
                sum += (a[(t, i)] - f[(t, i)]).powi(2);
            }
        }
        let want = (sum / (m * p) as f64).sqrt();
        max_diff = max_diff.max((rmsfe(&a, &f).unwrap() - want).abs());

        // interval_score vs branch-free recomputation.
        let lb = rng.gen_range(-1.0..0.0);
        let ub = lb + rng.gen_range(0.0..2.0);
        let x = rng.gen_range(-2.0..2.0);
        let alpha = rng.gen_range(0.05..0.5);
        let want = (ub - lb)
            + if x < lb { 2.0 / alpha * (lb - x) } else { 0.0 }
            + if x > ub { 2.0 / alpha * (x - ub) } else { 0.0 };
        max_diff = max_diff.max((interval_score(lb, ub, x, alpha) - want).abs());

        // mean_interval_score vs explicit average.
        let lbm: DMatrix<f64> = DMatrix::from_fn(m, p, |_, _| rng.gen_range(-1.0..0.0));
        let ubm = lbm.map(|v| v + rng.gen_range(0.0..1.0));
        let am: DMatrix<f64> = DMatrix::from_fn(m, p, |_, _| rng.gen_range(-1.5..1.5));
        let mut sum = 0.0;
        for i in 0..(m * p) {
            sum += interval_score(lbm[i], ubm[i], am[i], alpha);
        }
        let want = sum / (m * p) as f64;
        max_diff =
            max_diff.max((mean_interval_score(&lbm, &ubm, &am, alpha).unwrap() - want).abs());

        // autocov vs double loop at divisor n.
        let n = rng.gen_range(4..8);
        let d = rng.gen_range(1..4);
        let vals: DMatrix<f64> = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
        let panel = CurvePanel::new(vals.clone()).unwrap();
        let lag = rng.gen_range(0..(n as i64 - 1));
        let got = autocov(&panel, lag).unwrap();
        let mean = panel.column_mean();
        let mut want = DMatrix::zeros(d, d);
        for t in 0..(n - lag as usize) {
            for i in 0..d {
                for j in 0..d {
                    want[(i, j)] += (vals[(t, i)] - mean[i])
                        * (vals[(t + lag as usize, j)] - mean[j])
                        / n as f64;
                }
            }
        }
        max_diff = max_diff.max((got - want).abs().max());

        // build_summing_matrix vs per-node summation oracle.
        let n_leaves = rng.gen_range(2..5);
        let s = toy_structure(n_leaves);
        let exposures: Vec<f64> = (0..n_leaves).map(|_| rng.gen_range(10.0..500.0)).collect();
        let panel = toy_panel(&s, &exposures, 2);
        let sm = build_summing_matrix(&s, &panel, 2000).unwrap();
        for age in 0..2 {
            for (v, (id, _)) in s.nodes.iter().enumerate() {
                let set = &s.descendants[id];
                let total: f64 = set.iter().map(|&c| exposures[c]).sum();
                for c in 0..n_leaves {
                    let want = if set.contains(&c) {
                        exposures[c] / total
                    } else {
                        0.0
                    };
                    max_diff = max_diff.max((sm.per_age[age][(v, c)] - want).abs());
                }
            }
        }
    }
    report(
        1,
        &format!("formula oracles, max abs diff {max_diff:.2e} <= 1e-10"),
        max_diff <= 1e-10,
    );
}

fn paper_shaped_curves(seed: u64) -> (BTreeMap<SeriesId, DMatrix<f64>>, GroupStructure, MortalityPanel)
{
    let spec = SynthSpec {
        regions: 2,
        prefs_per_region: 1,
        sexes: true,
        n: 42,
        p: 101,
        k_true: 2,
        dynamics: ScoreDynamics::Ar1 { phi: 0.7 },
        ..SynthSpec::default()
    };
    let (panel, _) = synthesize_panel(&spec, seed).unwrap();
    let areas = vec![
        ("R1".to_string(), vec!["R1P1".to_string()]),
        ("R2".to_string(), vec!["R2P1".to_string()]),
    ];
    let structure =
        GroupStructure::build(HierarchyKind::Hierarchy1, "TOTAL", areas, true).unwrap();
    let logs = to_log(&panel, 1e-7).unwrap();
    let curves = logs.into_iter().map(|(id, c)| (id, c.values)).collect();
    (curves, structure, panel)
}

#[test]
fn criterion_2_protocol_shape_and_no_leakage() {
    let (curves, structure, panel) = paper_shaped_curves(2024);
    let config = BacktestConfig {
        first_train_years: 27,
        horizons: 15,
        methods: vec![Method::Base, Method::BottomUp],
        variants: vec![false],
        keep_forecasts: true,
        forecast: ForecastOpts {
            max_p: 1,
            max_q: 1,
            ..ForecastOpts::default()
        },
        ..BacktestConfig::default()
    };
    let report1 = expanding_window(&curves, &structure, &panel, &config).unwrap();
    let want: Vec<usize> = (1..=15).rev().collect();
    let counts_ok = report1.counts == want;

    // Perturb the final (pure holdout) year: no forecast may change.
    let mut corrupted = curves.clone();
    for m in corrupted.values_mut() {
        for i in 0..m.ncols() {
            m[(41, i)] += 0.5;
        }
    }
    let report2 = expanding_window(&corrupted, &structure, &panel, &config).unwrap();
    let mut leakage_free = report1.forecasts.len() == report2.forecasts.len();
    for (key, fc1) in &report1.forecasts {
        // The last origin trains on 41 years and never sees year 42.
        let fc2 = &report2.forecasts[key];
        for (id, m1) in fc1 {
            if fc2[id] != *m1 {
                leakage_free = false;
            }
        }
    }
    report(
        2,
        &format!("forecast counts {:?} and no-leakage perturbation", report1.counts),
        counts_ok && leakage_free,
    );
}

#[test]
fn criterion_3_coherence_and_mint_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut ok = true;
    for _ in 0..50 {
        let n_leaves = rng.gen_range(2..5);
        let s = toy_structure(n_leaves);
        let exposures: Vec<f64> = (0..n_leaves).map(|_| rng.gen_range(10.0..500.0)).collect();
        let panel = toy_panel(&s, &exposures, 3);
        let sm = build_summing_matrix(&s, &panel, 2000).unwrap();
        let base: NodeForecasts = s
            .nodes
            .iter()
            .map(|(id, _)| {
                (
                    id.clone(),
                    DMatrix::from_fn(2, 3, |_, _| rng.gen_range(0.0..1.0)),
                )
            })
            .collect();
        let bottoms: NodeForecasts = s
            .bottoms
            .iter()
            .map(|id| (id.clone(), base[id].clone()))
            .collect();
        let eye = DMatrix::identity(s.n_nodes(), s.n_nodes());

        let bu = bottom_up(&s, &sm, &bottoms).unwrap();
        let ols = ols_reconcile(&s, &sm, &base).unwrap();
        let mint = mint_reconcile(&s, &sm, &base, &eye).unwrap();

        // Coherence: R̃(v) must equal Σ_c S[v,c] R̃(c).
        let coherent = |rec: &NodeForecasts, exact: bool| -> bool {
            for i in 0..3 {
                for t in 0..2 {
                    let b = DVector::from_fn(s.n_bottoms(), |c, _| rec[&s.bottoms[c]][(t, i)]);
                    let want = &sm.per_age[i] * &b;
                    let scale = want.amax().max(1.0);
                    for (v, (id, _)) in s.nodes.iter().enumerate() {
                        let diff = (rec[id][(t, i)] - want[v]).abs();
                        if exact && diff != 0.0 {
                            return false;
                        }
                        if diff > 1e-9 * scale {
                            return false;
                        }
                    }
                }
            }
            true
        };
        ok &= coherent(&bu, true);
        ok &= coherent(&ols, false);
        ok &= coherent(&mint, false);
        for (id, _) in &s.nodes {
            for (a, b) in mint[id].iter().zip(ols[id].iter()) {
                ok &= (a - b).abs() <= 1e-10;
            }
        }
    }
    report(3, "coherence (BU exact, OLS/MinT 1e-9) and MinT(I) = OLS", ok);
}

#[test]
fn criterion_4_fpca_recovery() {
    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let p = 12;
    let n = 60;
    for k_true in [1usize, 2, 3] {
        for omega in [1usize, 2, 4] {
            let d = omega * p;
            // Orthonormal component directions in stacked space, equal score
            // variances so cumulative shares stay below 0.9 until K = k_true.
            let raw = DMatrix::from_fn(d, k_true, |_, _| normal.sample(&mut rng));
            let qr = raw.qr();
            let phi = qr.q();
            let scores = DMatrix::from_fn(n, k_true, |_, _| normal.sample(&mut rng));
            let mean = DVector::from_fn(d, |i, _| -4.0 + (i as f64 / d as f64));
            let mut stacked = DMatrix::zeros(n, d);
            for t in 0..n {
                for i in 0..d {
                    stacked[(t, i)] = mean[i];
                    for k in 0..k_true {
                        stacked[(t, i)] += scores[(t, k)] * phi[(i, k)];
                    }
                }
            }
            let ids: Vec<SeriesId> = (0..omega)
                .map(|l| SeriesId::new(format!("A{l}"), Sex::Total))
                .collect();
            let curves: BTreeMap<SeriesId, DMatrix<f64>> = ids
                .iter()
                .enumerate()
                .map(|(l, id)| {
                    (
                        id.clone(),
                        DMatrix::from_fn(n, p, |t, i| stacked[(t, l * p + i)]),
                    )
                })
                .collect();
            let block = JointBlockSpec::new(ids).unwrap();
            let model = fit_block(&curves, &block, Kernel::Bartlett, None, 0.9, 10).unwrap();
            if model.k() != k_true {
                ok = false;
            }
            let rec = reconstruct(&model, &model.scores).unwrap();
            let err = (&rec - &stacked).abs().max();
            if err >= 1e-8 {
                ok = false;
            }
        }
    }

    // The multivariate code on an ω = 1 block is bit-identical to running
    // the univariate special case on the same series.
    let (curves, structure, _) = paper_shaped_curves(77);
    let uni_blocks = structure.joint_blocks(false);
    let top = SeriesId::new("TOTAL", Sex::Total);
    let uni = uni_blocks
        .iter()
        .find(|b| b.members == vec![top.clone()])
        .unwrap();
    let multi_blocks = structure.joint_blocks(true);
    let multi = multi_blocks
        .iter()
        .find(|b| b.members == vec![top.clone()])
        .unwrap();
    let m1 = fit_block(&curves, uni, Kernel::Bartlett, None, 0.9, 10).unwrap();
    let m2 = fit_block(&curves, multi, Kernel::Bartlett, None, 0.9, 10).unwrap();
    let bitwise = m1.scores.as_slice() == m2.scores.as_slice()
        && m1.components.as_slice() == m2.components.as_slice();
    report(
        4,
        "rank-K recovery (K in 1..3, omega in {1,2,4}) and omega=1 bit-identity",
        ok && bitwise,
    );
}

#[test]
fn criterion_5_long_run_covariance_sanity() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = 1000;
    let d = 4;

    // iid: long-run covariance near the lag-0 covariance.
    let mut rel_sum = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let vals = DMatrix::from_fn(n, d, |_, _| normal.sample(&mut rng));
        let panel = CurvePanel::new(vals).unwrap();
        let c0 = autocov(&panel, 0).unwrap();
        let c0s = (&c0 + c0.transpose()) * 0.5;
        let lrc = long_run_cov(&panel, (n as f64).powf(0.2), Kernel::Bartlett).unwrap();
        rel_sum += (&lrc.matrix - &c0s).norm() / c0s.norm();
    }
    let iid_ok = rel_sum / 20.0 <= 0.10;

    // MA(1) with θ = 0.5: leading eigenvalue ≈ (1+θ)² × that of the
    // innovation covariance.
    let theta = 0.5;
    let mut ratio_sum = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let eps: Vec<DVector<f64>> = (0..n + 1)
            .map(|_| DVector::from_fn(d, |_, _| normal.sample(&mut rng)))
            .collect();
        let vals = DMatrix::from_fn(n, d, |t, i| eps[t + 1][i] + theta * eps[t][i]);
        let panel = CurvePanel::new(vals).unwrap();
        let v = gfts::lrcov::plugin_bandwidth(&panel, Kernel::Bartlett).unwrap();
        let lrc = long_run_cov(&panel, v, Kernel::Bartlett).unwrap();
        let lead = lrc.matrix.symmetric_eigenvalues().max();
        // ε is iid standard normal: eigenvalues of its covariance are all 1.
        ratio_sum += lead / (1.0 + theta).powi(2);
    }
    let ratio = ratio_sum / 20.0;
    let ma_ok = (0.85..=1.15).contains(&ratio);
    report(
        5,
        &format!("long-run covariance: iid rel {:.3}, MA(1) ratio {ratio:.3}", rel_sum / 20.0),
        iid_ok && ma_ok,
    );
}

#[test]
fn criterion_6_interval_calibration() {
    let mut cover_sum = 0.0;
    let reps = 20;
    for rep in 0..reps {
        let spec = SynthSpec {
            regions: 1,
            prefs_per_region: 2,
            sexes: false,
            n: 60,
            p: 21,
            k_true: 2,
            // Steadily declining random-walk scores mimic the trending
            // log-mortality setting the interval construction targets.
            dynamics: ScoreDynamics::RandomWalkDrift { drift: -0.06 },
            noise: 0.1,
            ..SynthSpec::default()
        };
        let (panel, _) = synthesize_panel(&spec, 600 + rep).unwrap();
        let logs = to_log(&panel, 1e-7).unwrap();
        let ids: Vec<SeriesId> = vec![
            SeriesId::new("R1P1", Sex::Total),
            SeriesId::new("R1P2", Sex::Total),
        ];
        let curves: BTreeMap<SeriesId, DMatrix<f64>> = ids
            .iter()
            .map(|id| (id.clone(), logs[id].values.clone()))
            .collect();
        let train: BTreeMap<SeriesId, DMatrix<f64>> = curves
            .iter()
            .map(|(id, m)| (id.clone(), m.rows(0, 45).into_owned()))
            .collect();
        let block = JointBlockSpec::new(ids.clone()).unwrap();
        let model = fit_block(&train, &block, Kernel::Bartlett, None, 0.9, 6).unwrap();
        let actual_train = stack(&train, &block).unwrap().values;
        let opts = ForecastOpts {
            method: ScoreMethod::Rwd,
            alpha: 0.2,
            bootstrap_samples: 300,
            seed: 900 + rep,
            ..ForecastOpts::default()
        };
        let set = forecast_block(&model, &actual_train, &opts, 10).unwrap();
        let mut inside = 0usize;
        let mut total = 0usize;
        for id in &ids {
            let sf = &set.series[id];
            let act = &curves[id];
            for h in 0..10 {
                for i in 0..21 {
                    let a = act[(45 + h, i)];
                    total += 1;
                    if sf.lower[(h, i)] <= a && a <= sf.upper[(h, i)] {
                        inside += 1;
                    }
                }
            }
        }
        cover_sum += inside as f64 / total as f64;
    }
    let coverage = cover_sum / reps as f64;
    report(
        6,
        &format!("holdout coverage {coverage:.3} in [0.70, 0.90] at alpha = 0.2"),
        (0.70..=0.90).contains(&coverage),
    );
}

#[test]
fn criterion_7_qualitative_claims() {
    // Shared helper: run one backtest and return the bottom-level mean RMSFE
    // for a (variant, method) pair.
    fn bottom_rmsfe(
        spec: &SynthSpec,
        seed: u64,
        regions: usize,
        prefs: usize,
        kind: HierarchyKind,
        first_train: usize,
        horizons: usize,
        keys: &[(bool, Method)],
    ) -> Vec<f64> {
        let (panel, _) = synthesize_panel(spec, seed).unwrap();
        let areas: Vec<(String, Vec<String>)> = (1..=regions)
            .map(|r| {
                (
                    format!("R{r}"),
                    (1..=prefs).map(|q| format!("R{r}P{q}")).collect(),
                )
            })
            .collect();
        let structure = GroupStructure::build(kind, "TOTAL", areas, true).unwrap();
        let logs = to_log(&panel, 1e-7).unwrap();
        let curves: BTreeMap<SeriesId, DMatrix<f64>> =
            logs.into_iter().map(|(id, c)| (id, c.values)).collect();
        let config = BacktestConfig {
            first_train_years: first_train,
            horizons,
            max_k: 2,
            methods: keys.iter().map(|&(_, m)| m).collect(),
            variants: {
                let mut v: Vec<bool> = keys.iter().map(|&(mv, _)| mv).collect();
                v.sort();
                v.dedup();
                v
            },
            forecast: ForecastOpts {
                max_p: 1,
                max_q: 1,
                ..ForecastOpts::default()
            },
            ..BacktestConfig::default()
        };
        let rep = expanding_window(&curves, &structure, &panel, &config).unwrap();
        keys.iter()
            .map(|&(multivariate, method)| {
                let per = &rep.metrics[&MethodKey {
                    multivariate,
                    method,
                    hierarchy: kind,
                }];
                let vals: Vec<f64> = per
                    .iter()
                    .filter(|(id, _)| structure.bottoms.contains(id))
                    .map(|(_, m)| m.mean_rmsfe())
                    .collect();
                mean_stats(&vals)
            })
            .collect()
    }

    let seeds = 20;

    // (a) Reconciliation vs base: bottom series carry heavy observation
    // noise, so coherent aggregates hold genuine extra information.
    let mut recon_wins = 0;
    for seed in 0..seeds {
        let spec = SynthSpec {
            regions: 2,
            prefs_per_region: 3,
            sexes: true,
            n: 30,
            p: 21,
            k_true: 2,
            dynamics: ScoreDynamics::Ar1 { phi: 0.7 },
            noise: 1.0,
            score_noise: 0.5,
            exposure_scale: 2e4,
            outlier_years: vec![5, 12, 19],
            ..SynthSpec::default()
        };
        let r = bottom_rmsfe(
            &spec,
            7000 + seed,
            2,
            3,
            HierarchyKind::Hierarchy1,
            24,
            4,
            &[(false, Method::Base), (false, Method::Ols)],
        );
        if r[1] <= r[0] {
            recon_wins += 1;
        }
    }

    // (b) Joint blocks vs univariate: members of a block ride a common score
    // path contaminated by member-specific deviations, which joint estimation
    // averages out; regions evolve independently.
    let mut dmfts_wins = 0;
    for seed in 0..seeds {
        let spec = SynthSpec {
            regions: 3,
            prefs_per_region: 2,
            sexes: true,
            n: 42,
            p: 21,
            k_true: 2,
            dynamics: ScoreDynamics::Ar1 { phi: 0.9 },
            noise: 0.5,
            score_noise: 0.5,
            shared_scores: false,
            exposure_scale: 2e4,
            outlier_years: vec![5, 12, 19],
            ..SynthSpec::default()
        };
        let r = bottom_rmsfe(
            &spec,
            7000 + seed,
            3,
            2,
            HierarchyKind::Hierarchy2,
            34,
            6,
            &[(false, Method::Base), (true, Method::Base)],
        );
        if r[1] <= r[0] {
            dmfts_wins += 1;
        }
    }

    report(
        7,
        &format!("reconciliation wins {recon_wins}/{seeds}, joint blocks win {dmfts_wins}/{seeds} (need >= 14)"),
        recon_wins >= 14 && dmfts_wins >= 14,
    );
}

#[test]
fn criterion_8_determinism() {
    let bin = env!("CARGO_BIN_EXE_gfts");
    let dir = std::env::temp_dir().join("gfts-acceptance-determinism");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let panel = dir.join("panel.csv");
    let run = |out: &str| {
        let status = Command::new(bin)
            .args([
                "synthesize",
                "--seed",
                "42",
                "--years",
                "30",
                "--ages",
                "21",
                "-o",
                panel.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        let outdir = dir.join(out);
        let status = Command::new(bin)
            .args([
                "forecast",
                "-i",
                panel.to_str().unwrap(),
                "-o",
                outdir.to_str().unwrap(),
                "--horizons",
                "3",
                "--variant",
                "dfts",
                "--method",
                "base",
                "--no-smooth",
                "--seed",
                "42",
            ])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(outdir.join("forecast.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    report(8, "identical seed + config give byte-identical outputs", a == b);
}
