//! Command-line front end for the grouped functional time series pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use gfts::assemble::{forecast_block, point_forecast, save_forecast_csv, ForecastOpts, ForecastSet, SeriesForecast};
use gfts::backtest::{
    expanding_window, save_report_csv, save_summary, BacktestConfig, Method,
};
use gfts::config::{load_config, save_config, RunConfig};
use gfts::error::Error;
use gfts::fpca::fit_block;
use gfts::lrcov::Kernel;
use gfts::panel::{
    load_panel, save_panel, synthesize_panel, to_log, MortalityPanel, ScoreDynamics, SeriesId,
    SynthSpec, DEFAULT_LOG_FLOOR,
};
use gfts::plot::rainbow_svg;
use gfts::reconcile::{
    bottom_up, build_summing_matrix, estimate_w, japan_structure, mint_reconcile, ols_reconcile,
    parse_structure, write_structure, GroupStructure, HierarchyKind, NodeForecasts, Shrink,
};
use gfts::smoothing::{smooth_panel, SmoothOpts};

#[derive(Parser)]
#[command(
    name = "gfts",
    about = "Grouped functional time series forecasting of age-specific mortality",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a coherent synthetic mortality panel.
    Synthesize(SynthesizeArgs),
    /// Penalized-spline smoothing of a panel.
    Smooth(SmoothArgs),
    /// Point and interval forecasts, optionally reconciled.
    Forecast(ForecastArgs),
    /// Expanding-window method comparison.
    Backtest(BacktestArgs),
    /// Group structure utilities.
    Structure(StructureArgs),
}

#[derive(Args)]
struct CommonConfig {
    /// TOML run configuration; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed (falls back to the GFTS_SEED environment variable, then 0).
    #[arg(long)]
    seed: Option<u64>,
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> u64 {
    flag.or(file)
        .or_else(|| std::env::var("GFTS_SEED").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0)
}

#[derive(Args)]
struct SynthesizeArgs {
    #[command(flatten)]
    common: CommonConfig,
    /// Output panel CSV.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    prefs: Option<usize>,
    #[arg(long)]
    years: Option<usize>,
    #[arg(long)]
    ages: Option<usize>,
    #[arg(long)]
    k_true: Option<usize>,
    /// Poisson observation noise switch (0 = noiseless).
    #[arg(long)]
    noise: Option<f64>,
    /// Sex-split bottom level.
    #[arg(long)]
    sexes: Option<bool>,
    /// Score dynamics: white-noise, ar1 or rwd.
    #[arg(long)]
    dynamics: Option<String>,
    /// 0-based year indices receiving outlier bumps.
    #[arg(long, value_delimiter = ',')]
    outlier_years: Option<Vec<usize>>,
}

#[derive(Args)]
struct SmoothArgs {
    #[command(flatten)]
    common: CommonConfig,
    /// Input panel CSV.
    #[arg(short, long)]
    input: PathBuf,
    /// Output smoothed panel CSV.
    #[arg(short, long)]
    output: PathBuf,
    /// Directory for per-series rainbow SVG charts.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    common: CommonConfig,
    /// Input panel CSV.
    #[arg(short, long)]
    input: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
    /// Group structure file; omit for structure-free univariate forecasting.
    #[arg(long)]
    structure: Option<PathBuf>,
    /// Use the bundled Japanese structure with this hierarchy.
    #[arg(long, conflicts_with = "structure")]
    japan: Option<String>,
    #[arg(long)]
    horizons: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// dfts (univariate) or dmfts (joint blocks).
    #[arg(long)]
    variant: Option<String>,
    /// base, bu, ols or mint.
    #[arg(long)]
    method: Option<String>,
    /// Compute bootstrap prediction intervals.
    #[arg(long)]
    intervals: bool,
    /// Skip smoothing (input is already smooth).
    #[arg(long)]
    no_smooth: bool,
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    common: CommonConfig,
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    structure: Option<PathBuf>,
    #[arg(long, conflicts_with = "structure")]
    japan: Option<String>,
    #[arg(long)]
    first_train: Option<usize>,
    #[arg(long)]
    horizons: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Subset of base,bu,ols,mint.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Subset of dfts,dmfts.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    #[arg(long)]
    intervals: bool,
    #[arg(long)]
    no_smooth: bool,
    /// Quick mode: ARIMA grid capped at (1, 1).
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct StructureArgs {
    #[command(subcommand)]
    command: StructureCommand,
}

#[derive(Subcommand)]
enum StructureCommand {
    /// Parse a structure file and check its invariants.
    Validate { file: PathBuf },
    /// Emit the bundled Japanese structure (geo-only, hierarchy1 or
    /// hierarchy2).
    Japan {
        #[arg(long)]
        kind: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Emit a structure matching a synthetic panel's naming scheme.
    Synth {
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 2)]
        regions: usize,
        #[arg(long, default_value_t = 2)]
        prefs: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn synth_structure(kind: HierarchyKind, regions: usize, prefs: usize) -> Result<GroupStructure, Error> {
    let areas = (1..=regions)
        .map(|r| {
            (
                format!("R{r}"),
                (1..=prefs).map(|q| format!("R{r}P{q}")).collect(),
            )
        })
        .collect();
    GroupStructure::build(
        kind,
        "TOTAL",
        areas,
        !matches!(kind, HierarchyKind::GeoOnly),
    )
}

fn load_structure(
    file: &Option<PathBuf>,
    japan: &Option<String>,
) -> Result<Option<GroupStructure>, Error> {
    match (file, japan) {
        (Some(path), _) => Ok(Some(parse_structure(path)?)),
        (None, Some(kind)) => Ok(Some(japan_structure(kind.parse()?)?)),
        (None, None) => Ok(None),
    }
}

fn file_config(common: &CommonConfig) -> Result<RunConfig, Error> {
    match &common.config {
        Some(path) => load_config(path),
        None => Ok(RunConfig::default()),
    }
}

fn parse_dynamics(name: &str, phi: Option<f64>, drift: Option<f64>) -> Result<ScoreDynamics, Error> {
    match name {
        "white-noise" => Ok(ScoreDynamics::WhiteNoise),
        "ar1" => Ok(ScoreDynamics::Ar1 {
            phi: phi.unwrap_or(0.7),
        }),
        "rwd" => Ok(ScoreDynamics::RandomWalkDrift {
            drift: drift.unwrap_or(0.02),
        }),
        other => Err(Error::InvalidArgument(format!(
            "unknown dynamics {other:?} (expected white-noise, ar1 or rwd)"
        ))),
    }
}

fn cmd_synthesize(args: &SynthesizeArgs) -> Result<(), Error> {
    let file = file_config(&args.common)?;
    let seed = resolve_seed(args.common.seed, file.seed);
    let s = &file.synthesize;
    let mut spec = SynthSpec::default();
    if let Some(v) = args.regions.or(s.regions) {
        spec.regions = v;
    }
    if let Some(v) = args.prefs.or(s.prefs_per_region) {
        spec.prefs_per_region = v;
    }
    if let Some(v) = args.years.or(s.years) {
        spec.n = v;
    }
    if let Some(v) = args.ages.or(s.ages) {
        spec.p = v;
    }
    if let Some(v) = args.k_true.or(s.k_true) {
        spec.k_true = v;
    }
    if let Some(v) = args.noise.or(s.noise) {
        spec.noise = v;
    }
    if let Some(v) = args.sexes.or(s.sexes) {
        spec.sexes = v;
    }
    if let Some(name) = args.dynamics.as_deref().or(s.dynamics.as_deref()) {
        spec.dynamics = parse_dynamics(name, s.phi, s.drift)?;
    }
    if let Some(v) = args.outlier_years.clone().or_else(|| s.outlier_years.clone()) {
        spec.outlier_years = v;
    }
    let (panel, _) = synthesize_panel(&spec, seed)?;
    save_panel(&panel, &args.output)?;
    println!(
        "wrote {} series x {} years x {} ages to {}",
        panel.series.len(),
        panel.n_years(),
        panel.n_ages(),
        args.output.display()
    );
    Ok(())
}

fn smooth_opts_from(file: &RunConfig) -> SmoothOpts {
    let mut opts = SmoothOpts::default();
    let s = &file.smooth;
    if let Some(v) = s.knot_spacing {
        opts.knot_spacing = v;
    }
    if let Some(v) = s.lambda_min {
        opts.lambda_min = v;
    }
    if let Some(v) = s.lambda_max {
        opts.lambda_max = v;
    }
    if let Some(v) = s.lambda_count {
        opts.lambda_count = v;
    }
    if let Some(v) = s.monotone_from_age {
        opts.monotone_from_age = v;
    }
    opts
}

/// Replace a panel's rates with smoothed ones (deaths kept consistent).
fn smoothed_panel(panel: &MortalityPanel, opts: &SmoothOpts) -> Result<MortalityPanel, Error> {
    let smoothed = smooth_panel(panel, opts)?;
    let mut out = panel.clone();
    for (id, log_curves) in smoothed {
        let obs = out.series.get_mut(&id).unwrap();
        obs.rate = log_curves.map(f64::exp);
        obs.deaths = obs.rate.component_mul(&obs.exposure);
    }
    Ok(out)
}

fn cmd_smooth(args: &SmoothArgs) -> Result<(), Error> {
    let file = file_config(&args.common)?;
    let opts = smooth_opts_from(&file);
    let (panel, summary) = load_panel(&args.input)?;
    if summary.missing_cells > 0 {
        eprintln!("note: {} missing cells will be filled", summary.missing_cells);
    }
    let out = smoothed_panel(&panel, &opts)?;
    save_panel(&out, &args.output)?;
    if let Some(dir) = &args.plot {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for (id, obs) in &out.series {
            let log = obs.rate.map(f64::ln);
            let path = dir.join(format!("{}.svg", id.to_string().replace('*', "_")));
            rainbow_svg(&log, &panel.grid.ages, &format!("log death rate, {id}"), &path)?;
        }
    }
    println!("smoothed {} series into {}", out.series.len(), args.output.display());
    Ok(())
}

struct ForecastPlan {
    horizons: usize,
    alpha: f64,
    multivariate: bool,
    method: Method,
    intervals: bool,
    fopts: ForecastOpts,
    kernel: Kernel,
    threshold: f64,
    max_k: usize,
}

fn forecast_plan(args: &ForecastArgs, file: &RunConfig, seed: u64) -> Result<ForecastPlan, Error> {
    let f = &file.forecast;
    let variant = args
        .variant
        .as_deref()
        .or(f.variant.as_deref())
        .unwrap_or("dfts");
    let multivariate = match variant {
        "dfts" => false,
        "dmfts" => true,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown variant {other:?} (expected dfts or dmfts)"
            )))
        }
    };
    let method: Method = args
        .method
        .as_deref()
        .or(f.method.as_deref())
        .unwrap_or("base")
        .parse()?;
    let alpha = args.alpha.or(f.alpha).unwrap_or(0.2);
    let mut fopts = ForecastOpts {
        alpha,
        seed,
        ..ForecastOpts::default()
    };
    if let Some(v) = f.max_p {
        fopts.max_p = v;
    }
    if let Some(v) = f.max_q {
        fopts.max_q = v;
    }
    if let Some(v) = f.max_d {
        fopts.max_d = v;
    }
    if let Some(v) = f.bootstrap_samples {
        fopts.bootstrap_samples = v;
    }
    Ok(ForecastPlan {
        horizons: args.horizons.or(f.horizons).unwrap_or(15),
        alpha,
        multivariate,
        method,
        intervals: args.intervals || f.intervals.unwrap_or(false),
        fopts,
        kernel: match f.kernel.as_deref() {
            Some(k) => k.parse()?,
            None => Kernel::Bartlett,
        },
        threshold: f.threshold.unwrap_or(0.9),
        max_k: f.max_k.unwrap_or(6),
    })
}

fn forecast_nodes(
    log_curves: &BTreeMap<SeriesId, DMatrix<f64>>,
    blocks: &[gfts::fpca::JointBlockSpec],
    plan: &ForecastPlan,
) -> Result<ForecastSet, Error> {
    let mut series = BTreeMap::new();
    for block in blocks {
        let model = fit_block(
            log_curves,
            block,
            plan.kernel,
            None,
            plan.threshold,
            plan.max_k,
        )?;
        if plan.intervals {
            let actual = gfts::fpca::stack(log_curves, block)?.values;
            let set = forecast_block(&model, &actual, &plan.fopts, plan.horizons)?;
            series.extend(set.series);
        } else {
            for (id, point) in point_forecast(&model, &plan.fopts, plan.horizons)? {
                let empty = DMatrix::zeros(0, 0);
                series.insert(
                    id,
                    SeriesForecast {
                        point,
                        lower: empty.clone(),
                        upper: empty,
                        pi_alpha: Vec::new(),
                    },
                );
            }
        }
    }
    Ok(ForecastSet {
        alpha: plan.alpha,
        horizons: plan.horizons,
        series,
    })
}

fn to_rate_forecasts(set: &ForecastSet, bounds: bool) -> (NodeForecasts, Option<(NodeForecasts, NodeForecasts)>) {
    let point: NodeForecasts = set
        .series
        .iter()
        .map(|(id, f)| (id.clone(), f.point.map(f64::exp)))
        .collect();
    let b = if bounds {
        let lo = set
            .series
            .iter()
            .map(|(id, f)| (id.clone(), f.lower.map(f64::exp)))
            .collect();
        let up = set
            .series
            .iter()
            .map(|(id, f)| (id.clone(), f.upper.map(f64::exp)))
            .collect();
        Some((lo, up))
    } else {
        None
    };
    (point, b)
}

fn cmd_forecast(args: &ForecastArgs) -> Result<(), Error> {
    let file = file_config(&args.common)?;
    let seed = resolve_seed(args.common.seed, file.seed);
    let plan = forecast_plan(args, &file, seed)?;
    let structure = load_structure(&args.structure, &args.japan)?;
    if structure.is_none() && plan.method != Method::Base {
        return Err(Error::InvalidArgument(
            "reconciliation methods need a --structure or --japan".into(),
        ));
    }
    let (raw_panel, _) = load_panel(&args.input)?;
    let panel = if args.no_smooth {
        raw_panel
    } else {
        smoothed_panel(&raw_panel, &smooth_opts_from(&file))?
    };
    let logs = to_log(&panel, DEFAULT_LOG_FLOOR)?;
    let log_curves: BTreeMap<SeriesId, DMatrix<f64>> = logs
        .into_iter()
        .map(|(id, c)| (id, c.values))
        .collect();

    std::fs::create_dir_all(&args.output)
        .map_err(|e| Error::io(args.output.display().to_string(), e))?;

    let blocks = match &structure {
        Some(s) => s.joint_blocks(plan.multivariate),
        None => log_curves
            .keys()
            .map(|id| gfts::fpca::JointBlockSpec::single(id.clone()))
            .collect(),
    };
    let set = forecast_nodes(&log_curves, &blocks, &plan)?;
    let (mut point, mut bounds) = to_rate_forecasts(&set, plan.intervals);

    if let Some(s) = &structure {
        let sm = build_summing_matrix(s, &panel, *panel.years.last().unwrap())?;
        let n_ages = panel.n_ages();
        let apply = |base: &NodeForecasts| -> Result<NodeForecasts, Error> {
            match plan.method {
                Method::Base => Ok(base.clone()),
                Method::BottomUp => {
                    let bottoms: NodeForecasts = s
                        .bottoms
                        .iter()
                        .map(|id| (id.clone(), base[id].clone()))
                        .collect();
                    bottom_up(s, &sm, &bottoms)
                }
                Method::Ols => ols_reconcile(s, &sm, base),
                Method::Mint => {
                    // Single-shot MinT estimates W from pooled rate residuals
                    // of a bottom-up fit; backtest mode has the full
                    // in-sample machinery.
                    let bu: NodeForecasts = bottom_up(
                        s,
                        &sm,
                        &s.bottoms
                            .iter()
                            .map(|id| (id.clone(), base[id].clone()))
                            .collect(),
                    )?;
                    let n_nodes = s.n_nodes();
                    let hp = plan.horizons * n_ages;
                    let mut errs = DMatrix::zeros(hp, n_nodes);
                    for (v, (id, _)) in s.nodes.iter().enumerate() {
                        for (r, (b, a)) in bu[id].iter().zip(base[id].iter()).enumerate() {
                            errs[(r, v)] = a - b;
                        }
                    }
                    let w = estimate_w(&errs, Shrink::Auto)?;
                    mint_reconcile(s, &sm, base, &w)
                }
            }
        };
        point = apply(&point)?;
        if let Some((lo, up)) = bounds.take() {
            let rlo = apply(&lo)?;
            let rup = apply(&up)?;
            bounds = Some((rlo, rup));
        }
    }

    // Rebuild a forecast set on the rate scale for export.
    let mut out_set = ForecastSet {
        alpha: plan.alpha,
        horizons: plan.horizons,
        series: BTreeMap::new(),
    };
    for (id, p) in point {
        let (lower, upper) = match &bounds {
            Some((lo, up)) => {
                let mut l = lo[&id].clone();
                let mut u = up[&id].clone();
                for i in 0..l.len() {
                    if l[i] > u[i] {
                        let t = l[i];
                        l[i] = u[i];
                        u[i] = t;
                    }
                }
                (l, u)
            }
            None => (p.map(|_| f64::NAN), p.map(|_| f64::NAN)),
        };
        out_set.series.insert(
            id.clone(),
            SeriesForecast {
                point: p,
                lower,
                upper,
                pi_alpha: set.series.get(&id).map(|f| f.pi_alpha.clone()).unwrap_or_default(),
            },
        );
    }
    save_forecast_csv(&out_set, &panel.grid.ages, &args.output.join("forecast.csv"))?;
    let mut echoed = file.clone();
    echoed.seed = Some(seed);
    save_config(&echoed, &args.output.join("run.toml"))?;
    println!(
        "wrote {} series x {} horizons to {}",
        out_set.series.len(),
        plan.horizons,
        args.output.join("forecast.csv").display()
    );
    Ok(())
}

fn cmd_backtest(args: &BacktestArgs) -> Result<(), Error> {
    let file = file_config(&args.common)?;
    let seed = resolve_seed(args.common.seed, file.seed);
    let b = &file.backtest;
    let structure = load_structure(&args.structure, &args.japan)?
        .ok_or_else(|| Error::InvalidArgument("backtest needs --structure or --japan".into()))?;
    let (raw_panel, _) = load_panel(&args.input)?;
    let panel = if args.no_smooth {
        raw_panel
    } else {
        smoothed_panel(&raw_panel, &smooth_opts_from(&file))?
    };
    let logs = to_log(&panel, DEFAULT_LOG_FLOOR)?;
    let log_curves: BTreeMap<SeriesId, DMatrix<f64>> =
        logs.into_iter().map(|(id, c)| (id, c.values)).collect();

    let mut config = BacktestConfig::default();
    config.forecast.seed = seed;
    if let Some(v) = args.first_train.or(b.first_train_years) {
        config.first_train_years = v;
    }
    if let Some(v) = args.horizons.or(b.horizons) {
        config.horizons = v;
    }
    if let Some(v) = args.alpha.or(b.alpha) {
        config.alpha = v;
        config.forecast.alpha = v;
    }
    if let Some(methods) = args.methods.clone().or_else(|| b.methods.clone()) {
        config.methods = methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_, _>>()?;
    }
    if let Some(variants) = args.variants.clone().or_else(|| b.variants.clone()) {
        config.variants = variants
            .iter()
            .map(|v| match v.as_str() {
                "dfts" => Ok(false),
                "dmfts" => Ok(true),
                other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
            })
            .collect::<Result<_, _>>()?;
    }
    config.with_intervals = args.intervals || b.intervals.unwrap_or(false);
    if let Some(v) = b.max_p {
        config.forecast.max_p = v;
    }
    if let Some(v) = b.max_q {
        config.forecast.max_q = v;
    }
    if let Some(v) = b.max_d {
        config.forecast.max_d = v;
    }
    if args.quick {
        config.forecast.max_p = 1;
        config.forecast.max_q = 1;
    }
    if let Some(sh) = &b.shrink {
        config.shrink = if sh == "auto" {
            Shrink::Auto
        } else {
            Shrink::Fixed(sh.parse().map_err(|_| {
                Error::InvalidArgument(format!("shrink must be a number or \"auto\", got {sh:?}"))
            })?)
        };
    }

    std::fs::create_dir_all(&args.output)
        .map_err(|e| Error::io(args.output.display().to_string(), e))?;
    let report = expanding_window(&log_curves, &structure, &panel, &config)?;
    save_report_csv(&report, &args.output.join("report.csv"))?;
    save_summary(&report, &args.output.join("summary.txt"))?;
    let mut echoed = file.clone();
    echoed.seed = Some(seed);
    save_config(&echoed, &args.output.join("run.toml"))?;

    let summary_text = std::fs::read_to_string(args.output.join("summary.txt"))
        .map_err(|e| Error::io("summary.txt".to_string(), e))?;
    print!("{summary_text}");
    println!(
        "\nforecast counts per horizon: {:?}",
        report.counts
    );
    Ok(())
}

fn cmd_structure(args: &StructureArgs) -> Result<(), Error> {
    match &args.command {
        StructureCommand::Validate { file } => {
            let s = parse_structure(file)?;
            s.validate()?;
            println!(
                "valid {} structure: {} nodes, {} bottom series",
                s.kind,
                s.n_nodes(),
                s.n_bottoms()
            );
            Ok(())
        }
        StructureCommand::Japan { kind, output } => {
            let s = japan_structure(kind.parse()?)?;
            write_structure(&s, output)?;
            println!("wrote {} ({} nodes) to {}", s.kind, s.n_nodes(), output.display());
            Ok(())
        }
        StructureCommand::Synth {
            kind,
            regions,
            prefs,
            output,
        } => {
            let s = synth_structure(kind.parse()?, *regions, *prefs)?;
            write_structure(&s, output)?;
            println!("wrote {} ({} nodes) to {}", s.kind, s.n_nodes(), output.display());
            Ok(())
        }
    }
}

/// Exit 2 for usage and input problems, 1 for computation failures.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Parse { .. } | Error::InvalidArgument(_) | Error::Structure(_) => 2,
        Error::Smoothing { .. } | Error::Degenerate(_) | Error::IntervalInfeasible(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synthesize(a) => cmd_synthesize(a),
        Command::Smooth(a) => cmd_smooth(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Backtest(a) => cmd_backtest(a),
        Command::Structure(a) => cmd_structure(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
