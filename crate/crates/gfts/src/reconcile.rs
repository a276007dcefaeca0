//! Group structures over mortality series, exposure-weighted summing
//! matrices, and forecast reconciliation (bottom-up, OLS combination, MinT).
//!
//! Reconciliation operates on the rate scale: aggregate rates are exposure
//! weighted means of bottom rates, so the summing matrix row for node v has
//! entry E_c / E_v at bottom c. Entries are age-specific because exposures
//! are age-specific.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fpca::JointBlockSpec;
use crate::panel::{MortalityPanel, SeriesId, Sex};

/// Disaggregation order of the grouped structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum HierarchyKind {
    /// Geography only, no sex split.
    GeoOnly,
    /// Geography first, then sex within each area.
    Hierarchy1,
    /// Sex first, then geography within each sex.
    Hierarchy2,
}

impl fmt::Display for HierarchyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HierarchyKind::GeoOnly => "geo-only",
            HierarchyKind::Hierarchy1 => "hierarchy1",
            HierarchyKind::Hierarchy2 => "hierarchy2",
        };
        write!(f, "{s}")
    }
}

impl FromStr for HierarchyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geo-only" => Ok(HierarchyKind::GeoOnly),
            "hierarchy1" => Ok(HierarchyKind::Hierarchy1),
            "hierarchy2" => Ok(HierarchyKind::Hierarchy2),
            other => Err(Error::InvalidArgument(format!(
                "unknown hierarchy {other:?} (expected geo-only, hierarchy1 or hierarchy2)"
            ))),
        }
    }
}

/// Node level within the canonical ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Top,
    SexTotal,
    Region,
    RegionSex,
    Prefecture,
    Bottom,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Top => "top",
            Level::SexTotal => "sex",
            Level::Region => "region",
            Level::RegionSex => "region-sex",
            Level::Prefecture => "prefecture",
            Level::Bottom => "bottom",
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top" => Ok(Level::Top),
            "sex" => Ok(Level::SexTotal),
            "region" => Ok(Level::Region),
            "region-sex" => Ok(Level::RegionSex),
            "prefecture" => Ok(Level::Prefecture),
            "bottom" => Ok(Level::Bottom),
            other => Err(Error::InvalidArgument(format!("unknown level {other:?}"))),
        }
    }
}

/// Grouped structure: every node with its set of bottom descendants, plus
/// the area tree used to derive joint blocks for multivariate forecasting.
#[derive(Debug, Clone)]
pub struct GroupStructure {
    pub kind: HierarchyKind,
    pub top_area: String,
    /// Internal areas with their leaf areas, in order.
    pub areas: Vec<(String, Vec<String>)>,
    /// Whether the bottom level is split by sex.
    pub sexes: bool,
    /// All nodes in canonical row order; bottoms occupy the final rows.
    pub nodes: Vec<(SeriesId, Level)>,
    /// Ordered most-disaggregated series.
    pub bottoms: Vec<SeriesId>,
    /// Node → indices into `bottoms`.
    pub descendants: BTreeMap<SeriesId, BTreeSet<usize>>,
}

impl GroupStructure {
    /// Canonical construction from an area tree. Node order: top, national
    /// sex totals, regions, region-sex, prefectures, then the bottoms.
    pub fn build(
        kind: HierarchyKind,
        top_area: impl Into<String>,
        areas: Vec<(String, Vec<String>)>,
        sexes: bool,
    ) -> Result<Self> {
        if areas.is_empty() || areas.iter().any(|(_, leaves)| leaves.is_empty()) {
            return Err(Error::Structure("empty area tree".into()));
        }
        if sexes == matches!(kind, HierarchyKind::GeoOnly) {
            return Err(Error::Structure(format!(
                "hierarchy {kind} is inconsistent with sexes = {sexes}"
            )));
        }
        let top_area = top_area.into();
        let bottom_sexes: &[Sex] = if sexes {
            &[Sex::Female, Sex::Male]
        } else {
            &[Sex::Total]
        };

        let mut bottoms = Vec::new();
        let mut bottom_of_leaf: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (_, leaves) in &areas {
            for leaf in leaves {
                for sex in bottom_sexes {
                    bottom_of_leaf
                        .entry(leaf.clone())
                        .or_default()
                        .push(bottoms.len());
                    bottoms.push(SeriesId::new(leaf.clone(), *sex));
                }
            }
        }

        let mut nodes: Vec<(SeriesId, Level)> = Vec::new();
        let mut descendants: BTreeMap<SeriesId, BTreeSet<usize>> = BTreeMap::new();
        let all: BTreeSet<usize> = (0..bottoms.len()).collect();

        let push = |nodes: &mut Vec<(SeriesId, Level)>,
                        descendants: &mut BTreeMap<SeriesId, BTreeSet<usize>>,
                        id: SeriesId,
                        level: Level,
                        set: BTreeSet<usize>|
         -> Result<()> {
            if descendants.insert(id.clone(), set).is_some() {
                return Err(Error::Structure(format!("duplicate node {id}")));
            }
            nodes.push((id, level));
            Ok(())
        };

        push(
            &mut nodes,
            &mut descendants,
            SeriesId::new(top_area.clone(), Sex::Total),
            Level::Top,
            all.clone(),
        )?;
        if sexes {
            for sex in [Sex::Female, Sex::Male] {
                let set = all
                    .iter()
                    .cloned()
                    .filter(|&i| bottoms[i].sex == sex)
                    .collect();
                push(
                    &mut nodes,
                    &mut descendants,
                    SeriesId::new(top_area.clone(), sex),
                    Level::SexTotal,
                    set,
                )?;
            }
        }
        for (region, leaves) in &areas {
            let set: BTreeSet<usize> = leaves
                .iter()
                .flat_map(|leaf| bottom_of_leaf[leaf].iter().cloned())
                .collect();
            push(
                &mut nodes,
                &mut descendants,
                SeriesId::new(region.clone(), Sex::Total),
                Level::Region,
                set,
            )?;
        }
        if sexes {
            for (region, leaves) in &areas {
                for sex in [Sex::Female, Sex::Male] {
                    let set: BTreeSet<usize> = leaves
                        .iter()
                        .flat_map(|leaf| bottom_of_leaf[leaf].iter().cloned())
                        .filter(|&i| bottoms[i].sex == sex)
                        .collect();
                    push(
                        &mut nodes,
                        &mut descendants,
                        SeriesId::new(region.clone(), sex),
                        Level::RegionSex,
                        set,
                    )?;
                }
            }
            for (_, leaves) in &areas {
                for leaf in leaves {
                    let set: BTreeSet<usize> =
                        bottom_of_leaf[leaf].iter().cloned().collect();
                    push(
                        &mut nodes,
                        &mut descendants,
                        SeriesId::new(leaf.clone(), Sex::Total),
                        Level::Prefecture,
                        set,
                    )?;
                }
            }
        }
        for (i, b) in bottoms.iter().enumerate() {
            push(
                &mut nodes,
                &mut descendants,
                b.clone(),
                Level::Bottom,
                BTreeSet::from([i]),
            )?;
        }

        let s = GroupStructure {
            kind,
            top_area,
            areas,
            sexes,
            nodes,
            bottoms,
            descendants,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_bottoms(&self) -> usize {
        self.bottoms.len()
    }

    /// Row index of the first bottom node.
    pub fn bottom_offset(&self) -> usize {
        self.n_nodes() - self.n_bottoms()
    }

    /// Structural invariants: non-empty descendant sets, a top node covering
    /// all bottoms, bottom rows forming an identity block.
    pub fn validate(&self) -> Result<()> {
        if self.bottoms.is_empty() {
            return Err(Error::Structure("no bottom series".into()));
        }
        let all: BTreeSet<usize> = (0..self.bottoms.len()).collect();
        let top = SeriesId::new(self.top_area.clone(), Sex::Total);
        match self.descendants.get(&top) {
            Some(set) if *set == all => {}
            _ => {
                return Err(Error::Structure(format!(
                    "top node {top} does not cover all bottoms"
                )))
            }
        }
        for (id, level) in &self.nodes {
            let set = self
                .descendants
                .get(id)
                .ok_or_else(|| Error::Structure(format!("node {id} has no descendant set")))?;
            if set.is_empty() {
                return Err(Error::Structure(format!("node {id} has no descendants")));
            }
            if *level == Level::Bottom && set.len() != 1 {
                return Err(Error::Structure(format!(
                    "bottom node {id} must be its own sole descendant"
                )));
            }
        }
        let off = self.bottom_offset();
        for (i, b) in self.bottoms.iter().enumerate() {
            let (id, level) = &self.nodes[off + i];
            if id != b || *level != Level::Bottom {
                return Err(Error::Structure(
                    "bottom nodes must occupy the final rows in order".into(),
                ));
            }
        }
        Ok(())
    }

    /// Joint forecasting blocks. Univariate mode gives one singleton block
    /// per node. Multivariate mode groups series that the hierarchy treats
    /// as siblings:
    /// - both hierarchies share sibling blocks of total-sex series per
    ///   internal area (regions under the top, leaves under each region),
    ///   with the top total kept univariate;
    /// - hierarchy 1 adds one {F, M} pair block per area at every level;
    /// - hierarchy 2 instead adds same-sex sibling blocks per internal area,
    ///   with the national sex totals kept univariate.
    pub fn joint_blocks(&self, multivariate: bool) -> Vec<JointBlockSpec> {
        if !multivariate {
            return self
                .nodes
                .iter()
                .map(|(id, _)| JointBlockSpec::single(id.clone()))
                .collect();
        }
        let mut blocks = Vec::new();
        let t = |area: &str| SeriesId::new(area, Sex::Total);
        blocks.push(JointBlockSpec::single(t(&self.top_area)));
        if self.areas.len() > 1 {
            blocks.push(JointBlockSpec {
                members: self.areas.iter().map(|(r, _)| t(r)).collect(),
            });
        } else {
            blocks.push(JointBlockSpec::single(t(&self.areas[0].0)));
        }
        for (_, leaves) in &self.areas {
            blocks.push(JointBlockSpec {
                members: leaves.iter().map(|l| t(l)).collect(),
            });
        }
        match self.kind {
            HierarchyKind::GeoOnly => {}
            HierarchyKind::Hierarchy1 => {
                let mut pair_areas: Vec<&str> = vec![&self.top_area];
                for (r, leaves) in &self.areas {
                    pair_areas.push(r);
                    pair_areas.extend(leaves.iter().map(|l| l.as_str()));
                }
                for area in pair_areas {
                    blocks.push(JointBlockSpec {
                        members: vec![
                            SeriesId::new(area, Sex::Female),
                            SeriesId::new(area, Sex::Male),
                        ],
                    });
                }
            }
            HierarchyKind::Hierarchy2 => {
                for sex in [Sex::Female, Sex::Male] {
                    blocks.push(JointBlockSpec::single(SeriesId::new(
                        self.top_area.clone(),
                        sex,
                    )));
                    if self.areas.len() > 1 {
                        blocks.push(JointBlockSpec {
                            members: self
                                .areas
                                .iter()
                                .map(|(r, _)| SeriesId::new(r.clone(), sex))
                                .collect(),
                        });
                    } else {
                        blocks.push(JointBlockSpec::single(SeriesId::new(
                            self.areas[0].0.clone(),
                            sex,
                        )));
                    }
                    for (_, leaves) in &self.areas {
                        blocks.push(JointBlockSpec {
                            members: leaves
                                .iter()
                                .map(|l| SeriesId::new(l.clone(), sex))
                                .collect(),
                        });
                    }
                }
            }
        }
        blocks
    }
}

/// The Japanese national structure: 8 regions covering 47 prefectures, sex
/// split at every level. 168 nodes over 94 bottom series.
pub fn japan_structure(kind: HierarchyKind) -> Result<GroupStructure> {
    let regions: [(&str, usize); 8] = [
        ("Hokkaido", 1),
        ("Tohoku", 6),
        ("Kanto", 7),
        ("Chubu", 9),
        ("Kansai", 7),
        ("Chugoku", 5),
        ("Shikoku", 4),
        ("Kyushu", 8),
    ];
    let mut areas = Vec::new();
    let mut pref = 0usize;
    for (name, count) in regions {
        let leaves = (0..count)
            .map(|_| {
                pref += 1;
                format!("P{pref:02}")
            })
            .collect();
        areas.push((name.to_string(), leaves));
    }
    GroupStructure::build(kind, "Japan", areas, !matches!(kind, HierarchyKind::GeoOnly))
}

/// Exposure-share summing matrices, one per age.
#[derive(Debug, Clone)]
pub struct SummingMatrix {
    /// One (nodes × bottoms) matrix per age point.
    pub per_age: Vec<DMatrix<f64>>,
    pub year: i32,
}

impl SummingMatrix {
    pub fn n_ages(&self) -> usize {
        self.per_age.len()
    }
}

/// Build the per-age summing matrices from bottom exposures at `year`:
/// entry (v, c) is E_c / E_v with E_v the sum over v's bottom descendants.
pub fn build_summing_matrix(
    structure: &GroupStructure,
    panel: &MortalityPanel,
    year: i32,
) -> Result<SummingMatrix> {
    let t = panel
        .years
        .iter()
        .position(|&y| y == year)
        .ok_or_else(|| Error::Structure(format!("year {year} not in panel")))?;
    let p = panel.grid.len();
    let nb = structure.n_bottoms();
    let mut exposure = DMatrix::zeros(nb, p);
    for (c, id) in structure.bottoms.iter().enumerate() {
        let obs = panel.get(id)?;
        for i in 0..p {
            let e = obs.exposure[(t, i)];
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::Structure(format!(
                    "non-positive exposure for bottom {id} at age index {i}, year {year}"
                )));
            }
            exposure[(c, i)] = e;
        }
    }
    let mut per_age = Vec::with_capacity(p);
    for i in 0..p {
        let mut s = DMatrix::zeros(structure.n_nodes(), nb);
        for (v, (id, _)) in structure.nodes.iter().enumerate() {
            let set = &structure.descendants[id];
            let total: f64 = set.iter().map(|&c| exposure[(c, i)]).sum();
            if !(total > 0.0) {
                return Err(Error::Structure(format!(
                    "zero exposure for node {id} at age index {i}, year {year}"
                )));
            }
            for &c in set {
                s[(v, c)] = exposure[(c, i)] / total;
            }
        }
        per_age.push(s);
    }
    Ok(SummingMatrix { per_age, year })
}

/// Forecasts for every node, h × p per node, in structure row order.
pub type NodeForecasts = BTreeMap<SeriesId, DMatrix<f64>>;

fn check_shapes(
    structure: &GroupStructure,
    s: &SummingMatrix,
    forecasts: &NodeForecasts,
    ids: &[SeriesId],
) -> Result<(usize, usize)> {
    let first = forecasts
        .get(&ids[0])
        .ok_or_else(|| Error::Structure(format!("missing forecast for {}", ids[0])))?;
    let (h, p) = (first.nrows(), first.ncols());
    if p != s.n_ages() {
        return Err(Error::InvalidArgument(format!(
            "forecast width {p} does not match {} summing matrices",
            s.n_ages()
        )));
    }
    for id in ids {
        let m = forecasts
            .get(id)
            .ok_or_else(|| Error::Structure(format!("missing forecast for {id}")))?;
        if m.nrows() != h || m.ncols() != p {
            return Err(Error::InvalidArgument(format!("shape mismatch for {id}")));
        }
    }
    let _ = structure;
    Ok((h, p))
}

/// Bottom-up: R̃ = S·b̂. Bottom rows pass through unchanged.
pub fn bottom_up(
    structure: &GroupStructure,
    s: &SummingMatrix,
    base_bottom: &NodeForecasts,
) -> Result<NodeForecasts> {
    let (h, p) = check_shapes(structure, s, base_bottom, &structure.bottoms)?;
    let mut out: NodeForecasts = structure
        .nodes
        .iter()
        .map(|(id, _)| (id.clone(), DMatrix::zeros(h, p)))
        .collect();
    for i in 0..p {
        let sm = &s.per_age[i];
        for t in 0..h {
            let b = DVector::from_fn(structure.n_bottoms(), |c, _| {
                base_bottom[&structure.bottoms[c]][(t, i)]
            });
            let r = sm * &b;
            for (v, (id, _)) in structure.nodes.iter().enumerate() {
                out.get_mut(id).unwrap()[(t, i)] = r[v];
            }
        }
    }
    Ok(out)
}

fn gather_base(
    structure: &GroupStructure,
    base_all: &NodeForecasts,
    t: usize,
    i: usize,
) -> DVector<f64> {
    DVector::from_fn(structure.n_nodes(), |v, _| {
        base_all[&structure.nodes[v].0][(t, i)]
    })
}

fn scatter(
    structure: &GroupStructure,
    out: &mut NodeForecasts,
    r: &DVector<f64>,
    t: usize,
    i: usize,
) {
    for (v, (id, _)) in structure.nodes.iter().enumerate() {
        out.get_mut(id).unwrap()[(t, i)] = r[v];
    }
}

/// OLS optimal combination: b̃ solves min ‖S b − R̂‖₂ via a column-pivoted QR
/// factorization, then R̃ = S b̃.
pub fn ols_reconcile(
    structure: &GroupStructure,
    s: &SummingMatrix,
    base_all: &NodeForecasts,
) -> Result<NodeForecasts> {
    let ids: Vec<SeriesId> = structure.nodes.iter().map(|(id, _)| id.clone()).collect();
    let (h, p) = check_shapes(structure, s, base_all, &ids)?;
    let mut out: NodeForecasts = ids
        .iter()
        .map(|id| (id.clone(), DMatrix::zeros(h, p)))
        .collect();
    for i in 0..p {
        let sm = &s.per_age[i];
        // Least squares via the normal equations: S is tall with full column
        // rank (each bottom node has a positive share in its own row).
        let gram = sm.transpose() * sm;
        let chol = Cholesky::new(gram).ok_or_else(|| {
            Error::Degenerate(format!(
                "summing matrix rank deficient at age index {i}; malformed structure"
            ))
        })?;
        for t in 0..h {
            let rhat = gather_base(structure, base_all, t, i);
            let b = chol.solve(&(sm.transpose() * &rhat));
            let r = sm * &b;
            scatter(structure, &mut out, &r, t, i);
        }
    }
    Ok(out)
}

/// MinT/GLS: b̃ = (Sᵀ W⁻¹ S)⁻¹ Sᵀ W⁻¹ R̂ with W the base-error covariance.
pub fn mint_reconcile(
    structure: &GroupStructure,
    s: &SummingMatrix,
    base_all: &NodeForecasts,
    w: &DMatrix<f64>,
) -> Result<NodeForecasts> {
    let ids: Vec<SeriesId> = structure.nodes.iter().map(|(id, _)| id.clone()).collect();
    let (h, p) = check_shapes(structure, s, base_all, &ids)?;
    let n = structure.n_nodes();
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "W is {}x{}, expected {n}x{n}",
            w.nrows(),
            w.ncols()
        )));
    }
    let chol = w.clone().cholesky().ok_or_else(|| {
        Error::Degenerate("W is not positive definite; increase shrinkage".into())
    })?;
    let mut out: NodeForecasts = ids
        .iter()
        .map(|id| (id.clone(), DMatrix::zeros(h, p)))
        .collect();
    for i in 0..p {
        let sm = &s.per_age[i];
        let winv_s = chol.solve(sm);
        let gram = sm.transpose() * &winv_s;
        let gram_chol = gram.cholesky().ok_or_else(|| {
            Error::Degenerate(format!(
                "Sᵀ W⁻¹ S not positive definite at age index {i}; malformed structure"
            ))
        })?;
        for t in 0..h {
            let rhat = gather_base(structure, base_all, t, i);
            let rhs = winv_s.transpose() * &rhat;
            let b = gram_chol.solve(&rhs);
            let r = sm * &b;
            scatter(structure, &mut out, &r, t, i);
        }
    }
    Ok(out)
}

/// Shrinkage intensity for `estimate_w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shrink {
    Fixed(f64),
    /// Ledoit-Wolf style intensity on the correlation scale, clamped to
    /// [0, 1].
    Auto,
}

/// Shrunk covariance of in-sample base errors: W = λ diag(Ŵ) + (1−λ) Ŵ.
pub fn estimate_w(errors: &DMatrix<f64>, shrink: Shrink) -> Result<DMatrix<f64>> {
    let n = errors.nrows();
    let d = errors.ncols();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 error samples to estimate W".into(),
        ));
    }
    let mean = errors.row_mean();
    let centered = DMatrix::from_fn(n, d, |t, j| errors[(t, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);

    let lambda = match shrink {
        Shrink::Fixed(l) => {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidArgument(format!(
                    "shrinkage {l} outside [0, 1]"
                )));
            }
            l
        }
        Shrink::Auto => {
            // Standardize columns, then λ = Σ_{i≠j} Var(r̂_ij) / Σ_{i≠j} r̂_ij².
            let sd: Vec<f64> = (0..d).map(|j| cov[(j, j)].sqrt().max(1e-300)).collect();
            let x = DMatrix::from_fn(n, d, |t, j| centered[(t, j)] / sd[j]);
            let mut var_sum = 0.0;
            let mut sq_sum = 0.0;
            for i in 0..d {
                for j in 0..d {
                    if i == j {
                        continue;
                    }
                    let mut wbar = 0.0;
                    for t in 0..n {
                        wbar += x[(t, i)] * x[(t, j)];
                    }
                    wbar /= n as f64;
                    let mut wvar = 0.0;
                    for t in 0..n {
                        let dv = x[(t, i)] * x[(t, j)] - wbar;
                        wvar += dv * dv;
                    }
                    let r = n as f64 / (n as f64 - 1.0) * wbar;
                    var_sum += n as f64 / (n as f64 - 1.0).powi(3) * wvar;
                    sq_sum += r * r;
                }
            }
            if sq_sum > 0.0 {
                (var_sum / sq_sum).clamp(0.0, 1.0)
            } else {
                1.0
            }
        }
    };

    let mut w = cov.clone() * (1.0 - lambda);
    for j in 0..d {
        w[(j, j)] = cov[(j, j)];
    }
    Ok(w)
}

/// Serialize a structure: hierarchy line, ordered bottom declarations, then
/// one line per non-bottom node with its level and bottom members.
pub fn write_structure(structure: &GroupStructure, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    );
    let werr = |e: std::io::Error| Error::io(path.display().to_string(), e);
    writeln!(out, "hierarchy {}", structure.kind).map_err(werr)?;
    writeln!(out, "top {}", structure.top_area).map_err(werr)?;
    for (region, leaves) in &structure.areas {
        writeln!(out, "area {} : {}", region, leaves.join(" ")).map_err(werr)?;
    }
    for b in &structure.bottoms {
        writeln!(out, "bottom {b}").map_err(werr)?;
    }
    for (id, level) in &structure.nodes {
        if *level == Level::Bottom {
            continue;
        }
        let members: Vec<String> = structure.descendants[id]
            .iter()
            .map(|&c| structure.bottoms[c].to_string())
            .collect();
        writeln!(out, "node {} {} : {}", id, level.name(), members.join(" ")).map_err(werr)?;
    }
    Ok(())
}

/// Parse a structure file and check it against the canonical construction:
/// the declared node/member lists must reproduce exactly what `build` yields
/// for the declared area tree.
pub fn parse_structure(path: &Path) -> Result<GroupStructure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut kind: Option<HierarchyKind> = None;
    let mut top: Option<String> = None;
    let mut areas: Vec<(String, Vec<String>)> = Vec::new();
    let mut bottoms: Vec<SeriesId> = Vec::new();
    let mut declared: Vec<(SeriesId, Level, Vec<SeriesId>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("hierarchy") => {
                let v = toks
                    .next()
                    .ok_or_else(|| perr(idx + 1, "missing hierarchy value".into()))?;
                kind = Some(v.parse().map_err(|e: Error| perr(idx + 1, e.to_string()))?);
            }
            Some("top") => {
                top = Some(
                    toks.next()
                        .ok_or_else(|| perr(idx + 1, "missing top area".into()))?
                        .to_string(),
                );
            }
            Some("area") => {
                let name = toks
                    .next()
                    .ok_or_else(|| perr(idx + 1, "missing area name".into()))?
                    .to_string();
                if toks.next() != Some(":") {
                    return Err(perr(idx + 1, "expected ':' after area name".into()));
                }
                let leaves: Vec<String> = toks.map(str::to_string).collect();
                if leaves.is_empty() {
                    return Err(perr(idx + 1, format!("area {name} has no leaves")));
                }
                areas.push((name, leaves));
            }
            Some("bottom") => {
                let id: SeriesId = toks
                    .next()
                    .ok_or_else(|| perr(idx + 1, "missing bottom id".into()))?
                    .parse()
                    .map_err(|e: Error| perr(idx + 1, e.to_string()))?;
                bottoms.push(id);
            }
            Some("node") => {
                let id: SeriesId = toks
                    .next()
                    .ok_or_else(|| perr(idx + 1, "missing node id".into()))?
                    .parse()
                    .map_err(|e: Error| perr(idx + 1, e.to_string()))?;
                let level: Level = toks
                    .next()
                    .ok_or_else(|| perr(idx + 1, "missing node level".into()))?
                    .parse()
                    .map_err(|e: Error| perr(idx + 1, e.to_string()))?;
                if toks.next() != Some(":") {
                    return Err(perr(idx + 1, "expected ':' after node level".into()));
                }
                let members: Result<Vec<SeriesId>> = toks.map(|t| t.parse()).collect();
                declared.push((id, level, members.map_err(|e| perr(idx + 1, e.to_string()))?));
            }
            Some(other) => {
                return Err(perr(idx + 1, format!("unknown directive {other:?}")));
            }
            None => unreachable!(),
        }
    }

    let kind = kind.ok_or_else(|| perr(0, "missing hierarchy line".into()))?;
    let top = top.ok_or_else(|| perr(0, "missing top line".into()))?;
    let built = GroupStructure::build(
        kind,
        top,
        areas,
        !matches!(kind, HierarchyKind::GeoOnly),
    )?;
    if bottoms != built.bottoms {
        return Err(Error::Structure(
            "declared bottom order does not match the area tree".into(),
        ));
    }
    for (id, level, members) in &declared {
        let set = built
            .descendants
            .get(id)
            .ok_or_else(|| Error::Structure(format!("node {id} not implied by area tree")))?;
        let declared_set: BTreeSet<usize> = members
            .iter()
            .map(|m| {
                built
                    .bottoms
                    .iter()
                    .position(|b| b == m)
                    .ok_or_else(|| Error::Structure(format!("unknown bottom {m} under {id}")))
            })
            .collect::<Result<_>>()?;
        if declared_set != *set {
            return Err(Error::Structure(format!(
                "member list of node {id} disagrees with the area tree"
            )));
        }
        let built_level = built
            .nodes
            .iter()
            .find(|(n, _)| n == id)
            .map(|(_, l)| *l)
            .unwrap();
        if built_level != *level {
            return Err(Error::Structure(format!(
                "node {id} declared at level {} but implied level is {}",
                level.name(),
                built_level.name()
            )));
        }
    }
    Ok(built)
}
