//! Mortality panel data model, file ingestion, and synthetic panel generation.
//!
//! A panel holds, for each series (area × sex), the central mortality rates,
//! exposures to risk, and death counts on a common age grid and year range.
//! Missing cells are encoded as NaN in the rate matrix; a cell with zero
//! exposure is masked missing at ingestion rather than floored.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};

/// Common age grid shared by all series of a panel.
///
/// Ages are midpoints in years, strictly increasing. The last age may be an
/// open-ended aggregate ("100+"), stored at its lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeGrid {
    pub ages: Vec<f64>,
    /// True when the last grid point aggregates all higher ages.
    pub open_ended: bool,
}

impl AgeGrid {
    pub fn new(ages: Vec<f64>, open_ended: bool) -> Result<Self> {
        if ages.len() < 2 {
            return Err(Error::Structure("age grid needs at least 2 points".into()));
        }
        if ages.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Structure("age grid must be strictly increasing".into()));
        }
        Ok(AgeGrid { ages, open_ended })
    }

    /// Single-year ages 0..=99 plus the "100+" group, the paper's p = 101 grid.
    pub fn standard() -> Self {
        AgeGrid {
            ages: (0..=100).map(|a| a as f64).collect(),
            open_ended: true,
        }
    }

    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sex {
    Female,
    Male,
    /// Female + male aggregate.
    Total,
}

impl Sex {
    pub fn code(self) -> &'static str {
        match self {
            Sex::Female => "F",
            Sex::Male => "M",
            Sex::Total => "T",
        }
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "F" | "f" => Ok(Sex::Female),
            "M" | "m" => Ok(Sex::Male),
            "T" | "t" => Ok(Sex::Total),
            other => Err(format!("unknown sex code {other:?} (expected F, M or T)")),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Identifies one series: a geographic area crossed with a sex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeriesId {
    pub area: String,
    pub sex: Sex,
}

impl SeriesId {
    pub fn new(area: impl Into<String>, sex: Sex) -> Self {
        SeriesId {
            area: area.into(),
            sex,
        }
    }
}

impl fmt::Display for SeriesId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*{}", self.area, self.sex)
    }
}

impl FromStr for SeriesId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (area, sex) = s
            .rsplit_once('*')
            .ok_or_else(|| Error::InvalidArgument(format!("series id {s:?} lacks '*sex'")))?;
        if area.is_empty() {
            return Err(Error::InvalidArgument(format!("series id {s:?} has empty area")));
        }
        let sex: Sex = sex.parse().map_err(Error::InvalidArgument)?;
        Ok(SeriesId::new(area, sex))
    }
}

/// Observations for one series: n × p matrices of rates, exposures and deaths.
/// NaN in `rate` marks a missing cell; exposures are positive wherever a rate
/// is observed.
#[derive(Debug, Clone)]
pub struct SeriesObservations {
    pub rate: DMatrix<f64>,
    pub exposure: DMatrix<f64>,
    pub deaths: DMatrix<f64>,
}

impl SeriesObservations {
    pub fn missing_count(&self) -> usize {
        self.rate.iter().filter(|v| v.is_nan()).count()
    }
}

/// Log-scale view of one series: y_t(x_i) = ln rate, NaN where missing.
#[derive(Debug, Clone)]
pub struct LogCurveSeries {
    pub values: DMatrix<f64>,
}

/// A validated panel of mortality series on a common grid and year range.
#[derive(Debug, Clone)]
pub struct MortalityPanel {
    pub grid: AgeGrid,
    pub years: Vec<i32>,
    pub series: BTreeMap<SeriesId, SeriesObservations>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestionSummary {
    pub series_count: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub missing_cells: usize,
}

impl MortalityPanel {
    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn n_ages(&self) -> usize {
        self.grid.len()
    }

    pub fn series_ids(&self) -> Vec<SeriesId> {
        self.series.keys().cloned().collect()
    }

    pub fn get(&self, id: &SeriesId) -> Result<&SeriesObservations> {
        self.series
            .get(id)
            .ok_or_else(|| Error::Structure(format!("series {id} not in panel")))
    }

    pub fn summary(&self) -> IngestionSummary {
        IngestionSummary {
            series_count: self.series.len(),
            first_year: *self.years.first().unwrap_or(&0),
            last_year: *self.years.last().unwrap_or(&0),
            missing_cells: self.series.values().map(|s| s.missing_count()).sum(),
        }
    }

    /// Restrict the panel to its first `n` years (used by the expanding window).
    pub fn head_years(&self, n: usize) -> MortalityPanel {
        assert!(n <= self.years.len());
        let p = self.n_ages();
        let series = self
            .series
            .iter()
            .map(|(id, obs)| {
                (
                    id.clone(),
                    SeriesObservations {
                        rate: obs.rate.rows(0, n).into_owned(),
                        exposure: obs.exposure.rows(0, n).into_owned(),
                        deaths: obs.deaths.rows(0, n).into_owned(),
                    },
                )
            })
            .collect();
        let _ = p;
        MortalityPanel {
            grid: self.grid.clone(),
            years: self.years[..n].to_vec(),
            series,
        }
    }
}

fn parse_age(tok: &str) -> std::result::Result<(f64, bool), String> {
    if let Some(stripped) = tok.strip_suffix('+') {
        let v: f64 = stripped
            .parse()
            .map_err(|_| format!("bad age {tok:?}"))?;
        Ok((v, true))
    } else {
        let v: f64 = tok.parse().map_err(|_| format!("bad age {tok:?}"))?;
        Ok((v, false))
    }
}

/// Load a panel from the long-format CSV schema
/// `series,sex,year,age,rate,exposure,deaths`.
///
/// Rows with exposure 0 are kept but their rate is masked missing. The age
/// "100+" parses as 100 with the open-interval flag set.
pub fn load_panel(path: &Path) -> Result<(MortalityPanel, IngestionSummary)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        _ => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: "empty file".into(),
            })
        }
    };
    let expected = "series,sex,year,age,rate,exposure,deaths";
    if header.trim() != expected {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: format!("expected header {expected:?}, got {header:?}"),
        });
    }

    struct Cell {
        rate: f64,
        exposure: f64,
        deaths: f64,
    }
    let mut cells: BTreeMap<SeriesId, BTreeMap<(i32, u64), Cell>> = BTreeMap::new();
    let mut open_ended = false;

    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: lineno,
            msg,
        };
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != 7 {
            return Err(parse_err(format!("expected 7 fields, got {}", fields.len())));
        }
        let sex: Sex = fields[1].parse().map_err(parse_err)?;
        let year: i32 = fields[2]
            .parse()
            .map_err(|_| parse_err(format!("bad year {:?}", fields[2])))?;
        let (age, open) = parse_age(fields[3]).map_err(parse_err)?;
        open_ended |= open;
        let num = |s: &str, name: &str| -> Result<f64> {
            if s.is_empty() || s == "." {
                return Ok(f64::NAN);
            }
            s.parse()
                .map_err(|_| parse_err(format!("non-numeric {name} {s:?}")))
        };
        let rate = num(fields[4], "rate")?;
        let exposure = num(fields[5], "exposure")?;
        let deaths = num(fields[6], "deaths")?;

        let id = SeriesId::new(fields[0], sex);
        let key = (year, age.to_bits());
        let per_series = cells.entry(id.clone()).or_default();
        if per_series.contains_key(&key) {
            return Err(Error::Structure(format!(
                "duplicate cell for series {id}, year {year}, age {age} (line {lineno})"
            )));
        }
        per_series.insert(
            key,
            Cell {
                rate,
                exposure,
                deaths,
            },
        );
    }

    if cells.is_empty() {
        return Err(Error::Structure("no data rows".into()));
    }

    // All series must share the same (year, age) grid.
    let first_id = cells.keys().next().unwrap().clone();
    let reference: Vec<(i32, u64)> = cells[&first_id].keys().cloned().collect();
    for (id, per_series) in &cells {
        let keys: Vec<(i32, u64)> = per_series.keys().cloned().collect();
        if keys != reference {
            return Err(Error::Structure(format!(
                "series {id} has a different year/age grid than {first_id}"
            )));
        }
    }

    let mut years: Vec<i32> = reference.iter().map(|(y, _)| *y).collect();
    years.sort_unstable();
    years.dedup();
    let mut ages: Vec<f64> = reference.iter().map(|(_, a)| f64::from_bits(*a)).collect();
    ages.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ages.dedup();
    let grid = AgeGrid::new(ages.clone(), open_ended)?;

    let n = years.len();
    let p = ages.len();
    let mut series = BTreeMap::new();
    for (id, per_series) in cells {
        let mut rate = DMatrix::from_element(n, p, f64::NAN);
        let mut exposure = DMatrix::from_element(n, p, f64::NAN);
        let mut deaths = DMatrix::from_element(n, p, f64::NAN);
        for ((year, age_bits), cell) in per_series {
            let t = years.binary_search(&year).map_err(|_| {
                Error::Structure(format!("series {id} missing year {year} on shared grid"))
            })?;
            let age = f64::from_bits(age_bits);
            let i = ages
                .iter()
                .position(|a| *a == age)
                .ok_or_else(|| Error::Structure(format!("age {age} not on shared grid")))?;
            let masked = cell.exposure.is_nan() || cell.exposure <= 0.0 || cell.rate.is_nan();
            rate[(t, i)] = if masked { f64::NAN } else { cell.rate };
            exposure[(t, i)] = cell.exposure;
            deaths[(t, i)] = cell.deaths;
        }
        series.insert(id, SeriesObservations {
            rate,
            exposure,
            deaths,
        });
    }

    let panel = MortalityPanel {
        grid,
        years,
        series,
    };
    let summary = panel.summary();
    Ok((panel, summary))
}

/// Write a panel in the documented CSV schema. Missing cells export with an
/// empty rate field so `load_panel` round-trips them.
pub fn save_panel(panel: &MortalityPanel, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    );
    let werr = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(out, "series,sex,year,age,rate,exposure,deaths").map_err(werr)?;
    let p = panel.n_ages();
    for (id, obs) in &panel.series {
        for (t, year) in panel.years.iter().enumerate() {
            for i in 0..p {
                let age = panel.grid.ages[i];
                let age_str = if panel.grid.open_ended && i == p - 1 {
                    format!("{}+", age)
                } else {
                    format!("{}", age)
                };
                let fmt_num = |v: f64| {
                    if v.is_nan() {
                        String::new()
                    } else {
                        format!("{v}")
                    }
                };
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    id.area,
                    id.sex,
                    year,
                    age_str,
                    fmt_num(obs.rate[(t, i)]),
                    fmt_num(obs.exposure[(t, i)]),
                    fmt_num(obs.deaths[(t, i)])
                )
                .map_err(werr)?;
            }
        }
    }
    Ok(())
}

/// Load one area from a pair of HMD/JMD fixed-width files
/// (`Year Age Female Male Total` layout): death rates and exposures.
/// Ages at and above 100 pool into the open "100+" group.
pub fn load_hmd(mx_path: &Path, exposure_path: &Path, area: &str) -> Result<MortalityPanel> {
    let mx = read_hmd_table(mx_path)?;
    let ex = read_hmd_table(exposure_path)?;

    let mut years: Vec<i32> = mx.keys().map(|(y, _)| *y).collect();
    years.sort_unstable();
    years.dedup();
    let grid = AgeGrid::standard();
    let n = years.len();
    let p = grid.len();

    let sexes = [Sex::Female, Sex::Male, Sex::Total];
    let mut series = BTreeMap::new();
    for (si, sex) in sexes.iter().enumerate() {
        let mut rate = DMatrix::from_element(n, p, f64::NAN);
        let mut exposure = DMatrix::from_element(n, p, f64::NAN);
        let mut deaths = DMatrix::from_element(n, p, f64::NAN);
        for (t, year) in years.iter().enumerate() {
            // Pool deaths and exposures for ages >= 100 into the last cell.
            let mut pooled_e = 0.0;
            let mut pooled_d = 0.0;
            for age in 0..=110u32 {
                let m = mx.get(&(*year, age)).map(|v| v[si]);
                let e = ex.get(&(*year, age)).map(|v| v[si]);
                let (m, e) = match (m, e) {
                    (Some(m), Some(e)) => (m, e),
                    _ => continue,
                };
                if age < 100 {
                    let i = age as usize;
                    exposure[(t, i)] = e;
                    if e > 0.0 && m.is_finite() {
                        rate[(t, i)] = m;
                        deaths[(t, i)] = m * e;
                    }
                } else if e.is_finite() {
                    pooled_e += e;
                    if m.is_finite() {
                        pooled_d += m * e;
                    }
                }
            }
            let i = p - 1;
            exposure[(t, i)] = pooled_e;
            if pooled_e > 0.0 {
                rate[(t, i)] = pooled_d / pooled_e;
                deaths[(t, i)] = pooled_d;
            }
        }
        series.insert(
            SeriesId::new(area, *sex),
            SeriesObservations {
                rate,
                exposure,
                deaths,
            },
        );
    }

    Ok(MortalityPanel {
        grid,
        years,
        series,
    })
}

type HmdTable = BTreeMap<(i32, u32), [f64; 3]>;

fn read_hmd_table(path: &Path) -> Result<HmdTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut table = HmdTable::new();
    let mut in_data = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let trimmed = line.trim();
        if trimmed.starts_with("Year") {
            in_data = true;
            continue;
        }
        if !in_data || trimmed.is_empty() {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() < 5 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: format!("expected 5 columns, got {}", toks.len()),
            });
        }
        let year: i32 = toks[0].parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            msg: format!("bad year {:?}", toks[0]),
        })?;
        let (age, _) = parse_age(toks[1]).map_err(|msg| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            msg,
        })?;
        let mut vals = [f64::NAN; 3];
        for (k, tok) in toks[2..5].iter().enumerate() {
            vals[k] = if *tok == "." {
                f64::NAN
            } else {
                tok.parse().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    msg: format!("non-numeric value {tok:?}"),
                })?
            };
        }
        table.insert((year, age as u32), vals);
    }
    Ok(table)
}

/// Default floor for the log transform: below the smallest plausible human
/// death rate, so ordering is preserved.
pub const DEFAULT_LOG_FLOOR: f64 = 1e-7;

/// Log-transform every series: y = ln(max(rate, floor)); missing stays missing.
pub fn to_log(panel: &MortalityPanel, floor: f64) -> Result<BTreeMap<SeriesId, LogCurveSeries>> {
    if !(floor > 0.0) {
        return Err(Error::InvalidArgument("log floor must be positive".into()));
    }
    let mut out = BTreeMap::new();
    for (id, obs) in &panel.series {
        let values = obs.rate.map(|r| if r.is_nan() { f64::NAN } else { r.max(floor).ln() });
        out.insert(id.clone(), LogCurveSeries { values });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreDynamics {
    WhiteNoise,
    Ar1 { phi: f64 },
    RandomWalkDrift { drift: f64 },
}

/// Specification of a synthetic coherent panel.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    /// Internal areas under the top node.
    pub regions: usize,
    /// Leaf areas under each internal area.
    pub prefs_per_region: usize,
    /// When true, the bottom level is leaf × {F, M} and every area also gets
    /// an aggregate T series; otherwise only T series exist.
    pub sexes: bool,
    pub n: usize,
    pub p: usize,
    pub k_true: usize,
    pub dynamics: ScoreDynamics,
    pub exposure_scale: f64,
    /// Observation noise: 0 keeps deaths exactly rate × exposure, > 0 draws
    /// deaths from Poisson(rate × exposure) and observes rate = deaths/exposure.
    pub noise: f64,
    /// Year indices (0-based) whose log rates get an outlier bump on a subset
    /// of bottom series.
    pub outlier_years: Vec<usize>,
    /// Standard deviation of per-series idiosyncratic deviations added to the
    /// shared score paths; 0 keeps all series driven by identical scores,
    /// larger values weaken (without removing) the cross-series dependence.
    pub score_noise: f64,
    /// When true (default) every series rides the same score paths; when
    /// false each region draws independent paths, so dependence is strong
    /// within regions but absent between them.
    pub shared_scores: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            regions: 2,
            prefs_per_region: 2,
            sexes: true,
            n: 42,
            p: 101,
            k_true: 2,
            dynamics: ScoreDynamics::Ar1 { phi: 0.7 },
            exposure_scale: 1e5,
            noise: 0.0,
            outlier_years: Vec::new(),
            score_noise: 0.0,
            shared_scores: true,
        }
    }
}

/// Ground truth underlying a synthetic panel, for oracle tests.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    /// Mean log-rate curve per bottom series.
    pub means: BTreeMap<SeriesId, Vec<f64>>,
    /// Component functions per bottom series, k_true columns each.
    pub components: BTreeMap<SeriesId, DMatrix<f64>>,
    /// Score paths shared across series, n × k_true (the first region's
    /// paths when regions are independent).
    pub scores: DMatrix<f64>,
}

/// Generate a coherent synthetic panel: bottom-level log-rate curves are
/// mean + Σ_k β_{t,k} φ_k(x) (scores shared across series), deaths and
/// exposures consistent with rates, and upper levels produced by exact
/// exposure-weighted aggregation. Deterministic for a fixed seed.
pub fn synthesize_panel(spec: &SynthSpec, seed: u64) -> Result<(MortalityPanel, SynthTruth)> {
    if spec.k_true >= spec.n.min(spec.p) {
        return Err(Error::InvalidArgument(format!(
            "k_true = {} must be < min(n, p) = {}",
            spec.k_true,
            spec.n.min(spec.p)
        )));
    }
    if spec.regions == 0 || spec.prefs_per_region == 0 || spec.n < 3 || spec.p < 2 {
        return Err(Error::InvalidArgument("degenerate synthetic spec".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n = spec.n;
    let p = spec.p;
    let k = spec.k_true;
    let grid = AgeGrid {
        ages: (0..p).map(|i| i as f64 * 100.0 / (p - 1) as f64).collect(),
        open_ended: false,
    };

    // Shared score paths (one draw, or one independent draw per region).
    let normal = Normal::new(0.0, 1.0).unwrap();
    let draw_scores = |rng: &mut ChaCha8Rng| -> DMatrix<f64> {
        let mut scores = DMatrix::zeros(n, k);
        for j in 0..k {
            let scale = 1.0 / (1.0 + j as f64); // decaying component strength
            match spec.dynamics {
                ScoreDynamics::WhiteNoise => {
                    for t in 0..n {
                        scores[(t, j)] = scale * normal.sample(rng);
                    }
                }
                ScoreDynamics::Ar1 { phi } => {
                    let mut prev = normal.sample(rng) / (1.0 - phi * phi).max(1e-6).sqrt();
                    for t in 0..n {
                        prev = phi * prev + normal.sample(rng);
                        scores[(t, j)] = scale * prev;
                    }
                }
                ScoreDynamics::RandomWalkDrift { drift } => {
                    let mut level = 0.0;
                    for t in 0..n {
                        level += drift + 0.3 * normal.sample(rng);
                        scores[(t, j)] = scale * level;
                    }
                }
            }
        }
        scores
    };
    let scores = draw_scores(&mut rng);
    // Region 1 reuses the first draw so shared and regional panels coincide
    // there; further regions get independent paths only when requested.
    let region_scores: Vec<DMatrix<f64>> = if spec.shared_scores {
        Vec::new()
    } else {
        let mut v = vec![scores.clone()];
        for _ in 1..spec.regions {
            v.push(draw_scores(&mut rng));
        }
        v
    };

    // Bottom series layout.
    let bottom_sexes: &[Sex] = if spec.sexes {
        &[Sex::Female, Sex::Male]
    } else {
        &[Sex::Total]
    };
    let mut bottoms: Vec<SeriesId> = Vec::new();
    for r in 1..=spec.regions {
        for q in 1..=spec.prefs_per_region {
            for sex in bottom_sexes {
                bottoms.push(SeriesId::new(format!("R{r}P{q}"), *sex));
            }
        }
    }

    let mut means = BTreeMap::new();
    let mut components = BTreeMap::new();
    let mut bottom_obs: BTreeMap<SeriesId, SeriesObservations> = BTreeMap::new();
    let mut outlier_toggle = true;

    let per_region = spec.prefs_per_region * bottom_sexes.len();
    for (bi, id) in bottoms.iter().enumerate() {
        let base_scores = if spec.shared_scores {
            &scores
        } else {
            &region_scores[bi / per_region]
        };
        // J-shaped mean log-mortality with a small series-specific offset.
        let offset: f64 = 0.15 * normal.sample(&mut rng);
        let sex_shift = match id.sex {
            Sex::Male => 0.12,
            _ => 0.0,
        };
        let mean: Vec<f64> = grid
            .ages
            .iter()
            .map(|&x| -8.0 + 5.5 * (x / 100.0) + 2.0 * (-x / 15.0).exp() + offset + sex_shift)
            .collect();

        // Smooth harmonic components with a series-specific amplitude, so a
        // stacked block stays exactly rank k_true.
        let amp: f64 = 0.8 + 0.4 * rng.gen::<f64>();
        let mut comps = DMatrix::zeros(p, k);
        for j in 0..k {
            for (i, &x) in grid.ages.iter().enumerate() {
                let u = x / 100.0;
                comps[(i, j)] = amp * 0.25 * ((j as f64 + 1.0) * std::f64::consts::PI * u).sin()
                    + if j == 0 { amp * 0.1 } else { 0.0 };
            }
        }

        // Exposure profile: larger at young ages, decaying at old ages.
        let e_scale = spec.exposure_scale * (0.7 + 0.6 * rng.gen::<f64>());
        let exposures: Vec<f64> = grid
            .ages
            .iter()
            .map(|&x| e_scale * (1.2 - x / 130.0).max(0.05))
            .collect();

        let outlier_hit = outlier_toggle && !spec.outlier_years.is_empty();
        outlier_toggle = !outlier_toggle;

        // Per-series deviations around the shared score paths; zero draws are
        // skipped entirely so score_noise = 0 reproduces earlier panels.
        let own_scores = if spec.score_noise > 0.0 {
            let mut m = base_scores.clone();
            for v in m.iter_mut() {
                *v += spec.score_noise * normal.sample(&mut rng);
            }
            m
        } else {
            base_scores.clone()
        };

        let mut rate = DMatrix::zeros(n, p);
        let mut exposure = DMatrix::zeros(n, p);
        let mut deaths = DMatrix::zeros(n, p);
        for t in 0..n {
            let bump = if outlier_hit && spec.outlier_years.contains(&t) {
                0.6
            } else {
                0.0
            };
            for i in 0..p {
                let mut y = mean[i] + bump;
                for j in 0..k {
                    y += own_scores[(t, j)] * comps[(i, j)];
                }
                if spec.noise > 0.0 {
                    y += spec.noise * normal.sample(&mut rng);
                }
                let r_true = y.exp().min(0.95);
                let e = exposures[i];
                let (r_obs, d_obs) = if spec.noise > 0.0 {
                    let lambda = (r_true * e).max(1e-12);
                    let d = Poisson::new(lambda).unwrap().sample(&mut rng);
                    (d / e, d)
                } else {
                    // Deaths kept exactly rate × exposure so the panel-wide
                    // rate = deaths/exposure identity holds.
                    (r_true, r_true * e)
                };
                rate[(t, i)] = r_obs;
                exposure[(t, i)] = e;
                deaths[(t, i)] = d_obs;
            }
        }
        means.insert(id.clone(), mean);
        components.insert(id.clone(), comps);
        bottom_obs.insert(id.clone(), SeriesObservations {
            rate,
            exposure,
            deaths,
        });
    }

    // Aggregate upward: deaths and exposures add, rates follow.
    let mut series = bottom_obs.clone();
    let aggregate = |members: &[&SeriesObservations]| -> SeriesObservations {
        let mut exposure = DMatrix::zeros(n, p);
        let mut deaths = DMatrix::zeros(n, p);
        for m in members {
            exposure += &m.exposure;
            deaths += &m.deaths;
        }
        let rate = DMatrix::from_fn(n, p, |t, i| deaths[(t, i)] / exposure[(t, i)]);
        SeriesObservations {
            rate,
            exposure,
            deaths,
        }
    };

    // Leaf T series (when sexed), then internal and top aggregates.
    if spec.sexes {
        for r in 1..=spec.regions {
            for q in 1..=spec.prefs_per_region {
                let area = format!("R{r}P{q}");
                let f = &bottom_obs[&SeriesId::new(area.clone(), Sex::Female)];
                let m = &bottom_obs[&SeriesId::new(area.clone(), Sex::Male)];
                series.insert(SeriesId::new(area, Sex::Total), aggregate(&[f, m]));
            }
        }
    }
    let all_sexes: &[Sex] = if spec.sexes {
        &[Sex::Female, Sex::Male, Sex::Total]
    } else {
        &[Sex::Total]
    };
    for sex in all_sexes {
        for r in 1..=spec.regions {
            let members: Vec<&SeriesObservations> = (1..=spec.prefs_per_region)
                .map(|q| &series[&SeriesId::new(format!("R{r}P{q}"), *sex)])
                .collect();
            let agg = aggregate(&members);
            series.insert(SeriesId::new(format!("R{r}"), *sex), agg);
        }
        let members: Vec<&SeriesObservations> = (1..=spec.regions)
            .map(|r| &series[&SeriesId::new(format!("R{r}"), *sex)])
            .collect();
        let agg = aggregate(&members);
        series.insert(SeriesId::new("TOTAL", *sex), agg);
    }

    let panel = MortalityPanel {
        grid,
        years: (0..n as i32).map(|t| 1975 + t).collect(),
        series,
    };
    let truth = SynthTruth {
        means,
        components,
        scores,
    };
    Ok((panel, truth))
}
