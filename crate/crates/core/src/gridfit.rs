//! Two-grid fitting from building corners: edge orientations, assignment of
//! buildings to grids by a two-component von Mises mixture, the compendium
//! of coordinate differences, offsets by circular averaging, and residuals.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circstats::{
    circular_mean_resultant, fit_mixture, fold_to_circle, unscale_from_circle, wrap, CircularSample,
    MixtureConfig, MixtureFit, MixtureKind,
};
use crate::error::{Error, Result};
use crate::measurements::{pair_differences, read_records, MeasurementSet};
use crate::quantogram::{
    cosine_quantogram, find_peak, simulate_boundary, BoundaryConfig, BoundaryCurve, FrequencyGrid,
    PeakReport, QuantogramCurve,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub id: String,
    /// Three (one corner missing) or four corners in order around the outline.
    pub corners: Vec<(f64, f64)>,
}

impl Building {
    pub fn new(id: impl Into<String>, corners: Vec<(f64, f64)>) -> Result<Self> {
        let id = id.into();
        if !(3..=4).contains(&corners.len()) {
            return Err(Error::Geometry(format!(
                "building {id} has {} corners; expected 3 or 4",
                corners.len()
            )));
        }
        if corners.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
            return Err(Error::Geometry(format!("building {id} has a non-finite corner")));
        }
        for i in 0..corners.len() {
            for j in i + 1..corners.len() {
                if corners[i] == corners[j] {
                    return Err(Error::Geometry(format!(
                        "building {id}: corners {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self { id, corners })
    }
}

#[derive(Deserialize)]
struct CornerRow {
    building: String,
    corner_index: usize,
    x: f64,
    y: f64,
}

/// Read `building,corner_index,x,y`; buildings keep first-appearance order
/// and corners are ordered by index.
pub fn load_buildings(path: &Path) -> Result<Vec<Building>> {
    let rows: Vec<(usize, CornerRow)> = read_records(path, &["building", "corner_index", "x", "y"])?;
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<(usize, usize, f64, f64)>> = BTreeMap::new();
    for (row, r) in rows {
        if !grouped.contains_key(&r.building) {
            order.push(r.building.clone());
        }
        grouped.entry(r.building).or_default().push((r.corner_index, row, r.x, r.y));
    }
    order
        .into_iter()
        .map(|id| {
            let mut corners = grouped.remove(&id).unwrap();
            corners.sort_by_key(|c| c.0);
            if let Some(w) = corners.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Row {
                    path: path.to_path_buf(),
                    row: w[1].1,
                    msg: format!("building {id} repeats corner index {}", w[1].0),
                });
            }
            Building::new(id, corners.into_iter().map(|(_, _, x, y)| (x, y)).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub building: String,
    pub from: usize,
    pub to: usize,
    /// Degrees in `[0, 90)`.
    pub orientation: f64,
}

/// Edges of each outline with orientations folded mod 90°. Four corners
/// close the loop; three corners give the two edges meeting at the middle one.
pub fn building_edges(buildings: &[Building]) -> Result<Vec<Edge>> {
    let mut out = Vec::new();
    for b in buildings {
        let n = b.corners.len();
        let pairs: Vec<(usize, usize)> = match n {
            4 => (0..4).map(|i| (i, (i + 1) % 4)).collect(),
            3 => vec![(0, 1), (1, 2)],
            _ => return Err(Error::Geometry(format!("building {} has {n} corners", b.id))),
        };
        for (i, j) in pairs {
            let (p, q) = (b.corners[i], b.corners[j]);
            if p == q {
                return Err(Error::Geometry(format!("building {}: corners {i} and {j} coincide", b.id)));
            }
            let deg = (q.1 - p.1).atan2(q.0 - p.0).to_degrees();
            out.push(Edge { building: b.id.clone(), from: i, to: j, orientation: wrap(deg, 90.0) });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAssignment {
    pub building: String,
    /// 1 or 2; `None` when the edges disagree.
    pub cluster: Option<usize>,
    pub edge_orientations: Vec<f64>,
    /// Grid chosen for each edge, in the same order.
    pub edge_clusters: Vec<usize>,
}

fn group_edges(edges: &[Edge]) -> Vec<(String, Vec<f64>)> {
    let mut order: Vec<String> = Vec::new();
    let mut map: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for e in edges {
        if !map.contains_key(e.building.as_str()) {
            order.push(e.building.clone());
        }
        map.entry(&e.building).or_default().push(e.orientation);
    }
    order.into_iter().map(|id| { let v = map[id.as_str()].clone(); (id, v) }).collect()
}

/// Fit two von Mises components to the edge orientations (scaled onto the
/// circle) and assign each building whose edges all pick the same one.
/// Cluster numbers follow the component means in ascending order.
pub fn assign_buildings(edges: &[Edge], cfg: &MixtureConfig) -> Result<(MixtureFit, Vec<GridAssignment>)> {
    let groups = group_edges(edges);
    if groups.len() < 2 {
        return Err(Error::input(format!(
            "grid assignment needs at least 2 buildings, got {}",
            groups.len()
        )));
    }
    // Fit in building-id order so the result does not depend on input order.
    let mut canonical: Vec<&(String, Vec<f64>)> = groups.iter().collect();
    canonical.sort_by(|a, b| a.0.cmp(&b.0));
    let angles = canonical
        .iter()
        .flat_map(|(_, o)| o.iter())
        .map(|o| fold_to_circle(*o, 90.0))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_mixture(&CircularSample::new(angles)?, MixtureKind::TwoVonMises, cfg)?;
    if !fit.converged {
        return Err(Error::degenerate(format!(
            "two-component mixture did not converge in {} iterations",
            fit.iterations
        )));
    }
    let assignments = groups
        .into_iter()
        .map(|(building, edge_orientations)| {
            let edge_clusters = edge_orientations
                .iter()
                .map(|o| {
                    let r = fit.responsibility_at(fold_to_circle(*o, 90.0).unwrap());
                    if r[1] > r[0] { 2 } else { 1 }
                })
                .collect::<Vec<usize>>();
            let cluster = edge_clusters
                .iter()
                .all(|c| *c == edge_clusters[0])
                .then_some(edge_clusters[0]);
            GridAssignment { building, cluster, edge_orientations, edge_clusters }
        })
        .collect();
    Ok((fit, assignments))
}

/// Rotate by `−orientation` about the origin.
pub fn project_to_grid_axes(points: &[(f64, f64)], orientation_deg: f64) -> Vec<(f64, f64)> {
    let (s, c) = orientation_deg.to_radians().sin_cos();
    points.iter().map(|&(x, y)| (x * c + y * s, -x * s + y * c)).collect()
}

fn from_grid_axes(p: (f64, f64), orientation_deg: f64) -> (f64, f64) {
    let (s, c) = orientation_deg.to_radians().sin_cos();
    (p.0 * c - p.1 * s, p.0 * s + p.1 * c)
}

/// Tag of the compendium axis `axis` (`'x'` or `'y'`) of `cluster`.
pub fn axis_tag(cluster: usize, axis: char) -> String {
    format!("c{cluster}{axis}")
}

/// All-pairs coordinate differences along each grid axis of each cluster,
/// pooled with tags `c1x`, `c1y`, `c2x`, `c2y`.
pub fn compendium_differences(clusters: &[&[(f64, f64)]]) -> Result<MeasurementSet> {
    let mut values = Vec::new();
    let mut tags = Vec::new();
    for (k, coords) in clusters.iter().enumerate() {
        for axis in ['x', 'y'] {
            let column: Vec<f64> =
                coords.iter().map(|p| if axis == 'x' { p.0 } else { p.1 }).collect();
            let diffs = pair_differences(&column);
            tags.extend(std::iter::repeat_n(axis_tag(k + 1, axis), diffs.len()));
            values.extend(diffs);
        }
    }
    MeasurementSet::new(values, tags)
}

/// Circular mean of `values mod q` in `[0, q)`.
fn circular_offset(values: &[f64], q: f64, what: &str) -> Result<f64> {
    let sample = CircularSample::new(values.iter().map(|v| wrap(*v, q) / q * TAU).collect())?;
    let mr = circular_mean_resultant(&sample)?;
    match mr.mean {
        Some(m) => Ok(wrap(m / TAU * q, q)),
        None => Err(Error::degenerate(format!(
            "{what} offsets are spread evenly around the quantum (resultant {:.2e}); offset undefined",
            mr.rbar
        ))),
    }
}

/// Grid offsets `(x, y)` in `[0, q)` from coordinates in the grid frame.
pub fn fit_offsets(coords: &[(f64, f64)], quantum: f64) -> Result<(f64, f64)> {
    if !(quantum > 0.0 && quantum.is_finite()) {
        return Err(Error::param(format!("quantum must be positive, got {quantum}")));
    }
    if coords.is_empty() {
        return Err(Error::input("offset fitting needs at least one corner"));
    }
    let xs: Vec<f64> = coords.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = coords.iter().map(|p| p.1).collect();
    Ok((circular_offset(&xs, quantum, "x")?, circular_offset(&ys, quantum, "y")?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub cluster: usize,
    /// Degrees in `[0, 90)`.
    pub orientation: f64,
    pub quantum: f64,
    pub offset_x: f64,
    pub offset_y: f64,
    /// Rendering rectangle in the grid frame.
    pub extent: Extent,
    pub mean_abs_residual: f64,
}

impl GridModel {
    /// Grid lines inside the extent as world-coordinate segments.
    pub fn lines(&self) -> Vec<((f64, f64), (f64, f64))> {
        let q = self.quantum;
        let e = self.extent;
        let mut out = Vec::new();
        // Line positions `off + k·q` for every k with the line inside [lo, hi].
        let positions = |lo: f64, hi: f64, off: f64| {
            let k0 = ((lo - off) / q - 1e-9).ceil() as i64;
            let k1 = ((hi - off) / q + 1e-9).floor() as i64;
            (k0..=k1).map(move |k| off + k as f64 * q)
        };
        for x in positions(e.x_min, e.x_max, self.offset_x) {
            out.push(((x, e.y_min), (x, e.y_max)));
        }
        for y in positions(e.y_min, e.y_max, self.offset_y) {
            out.push(((e.x_min, y), (e.x_max, y)));
        }
        out.into_iter()
            .map(|(a, b)| (from_grid_axes(a, self.orientation), from_grid_axes(b, self.orientation)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerResidual {
    pub building: String,
    pub corner_index: usize,
    pub cluster: usize,
    /// Per-axis residuals in `[−q/2, q/2)`.
    pub rx: f64,
    pub ry: f64,
    /// Distance to the nearest grid intersection.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub quantum: f64,
    pub n_corners: usize,
    /// Mean of `|rx|` and `|ry|` over all corners.
    pub mean_abs_axis_residual: f64,
    pub rms_distance: f64,
    pub max_distance: f64,
}

/// Corners of one grid cluster in both frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFrame {
    pub cluster: usize,
    pub orientation: f64,
    /// `(building, corner index)` per corner.
    pub corner_ids: Vec<(String, usize)>,
    pub world: Vec<(f64, f64)>,
    pub grid: Vec<(f64, f64)>,
}

fn fold_residual(v: f64, q: f64) -> f64 {
    wrap(v + 0.5 * q, q) - 0.5 * q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFit {
    pub models: Vec<GridModel>,
    pub residuals: Vec<CornerResidual>,
    pub summary: ResidualSummary,
}

/// Offsets, rendering extents and residuals for every cluster at quantum `q`.
pub fn build_grid_models(clusters: &[ClusterFrame], quantum: f64) -> Result<GridFit> {
    let mut models = Vec::new();
    let mut residuals = Vec::new();
    for c in clusters {
        let (ox, oy) = fit_offsets(&c.grid, quantum)?;
        let (mut x_min, mut y_min) = (f64::INFINITY, f64::INFINITY);
        let (mut x_max, mut y_max) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut abs_sum = 0.0;
        for ((building, corner_index), &(x, y)) in c.corner_ids.iter().zip(&c.grid) {
            x_min = x_min.min(x);
            y_min = y_min.min(y);
            x_max = x_max.max(x);
            y_max = y_max.max(y);
            let rx = fold_residual(x - ox, quantum);
            let ry = fold_residual(y - oy, quantum);
            abs_sum += 0.5 * (rx.abs() + ry.abs());
            residuals.push(CornerResidual {
                building: building.clone(),
                corner_index: *corner_index,
                cluster: c.cluster,
                rx,
                ry,
                distance: rx.hypot(ry),
            });
        }
        models.push(GridModel {
            cluster: c.cluster,
            orientation: c.orientation,
            quantum,
            offset_x: ox,
            offset_y: oy,
            extent: Extent {
                x_min: x_min - quantum,
                y_min: y_min - quantum,
                x_max: x_max + quantum,
                y_max: y_max + quantum,
            },
            mean_abs_residual: abs_sum / c.grid.len() as f64,
        });
    }
    let n = residuals.len();
    if n == 0 {
        return Err(Error::input("no assigned corners to fit a grid to"));
    }
    let summary = ResidualSummary {
        quantum,
        n_corners: n,
        mean_abs_axis_residual: residuals.iter().map(|r| 0.5 * (r.rx.abs() + r.ry.abs())).sum::<f64>()
            / n as f64,
        rms_distance: (residuals.iter().map(|r| r.distance * r.distance).sum::<f64>() / n as f64).sqrt(),
        max_distance: residuals.iter().map(|r| r.distance).fold(0.0, f64::max),
    };
    Ok(GridFit { models, residuals, summary })
}

/// Display-only shift of orientations, folded back into `[0, 90)`.
pub fn histogram_rotation_for_plot(orientations: &[f64], rotate_deg: f64) -> Vec<f64> {
    orientations.iter().map(|o| wrap(o + rotate_deg, 90.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFitConfig {
    pub grid: FrequencyGrid,
    /// Monte Carlo boundary for the compendium quantogram; skipped when `None`.
    pub boundary: Option<BoundaryConfig>,
    pub mixture: MixtureConfig,
    /// Alternative quantum fitted alongside the estimated one.
    pub quantum: Option<f64>,
}

impl Default for GridFitConfig {
    fn default() -> Self {
        Self {
            grid: FrequencyGrid::default(),
            boundary: Some(BoundaryConfig::default()),
            mixture: MixtureConfig::default(),
            quantum: None,
        }
    }
}

impl GridFitConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if let Some(b) = &self.boundary {
            b.validate()?;
        }
        if let Some(q) = self.quantum {
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::param(format!("quantum must be positive, got {q}")));
            }
        }
        self.mixture.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAnalysis {
    pub edges: Vec<Edge>,
    /// Absent for a single-building run.
    pub mixture: Option<MixtureFit>,
    pub assignments: Vec<GridAssignment>,
    pub clusters: Vec<ClusterFrame>,
    pub compendium: MeasurementSet,
    pub curve: QuantogramCurve,
    pub boundary: Option<BoundaryCurve>,
    pub peak: PeakReport,
    /// ROI peak of the compendium quantogram.
    pub fitted_quantum: Option<f64>,
    /// Grids at the fitted quantum, or at the given one when no peak was found.
    pub fit: GridFit,
    /// Grids at the given quantum, when one was given and a peak was found.
    pub comparison: Option<GridFit>,
    pub warnings: Vec<String>,
}

/// Edges, assignment, compendium quantogram, offsets and residuals.
pub fn fit_grids(buildings: &[Building], cfg: &GridFitConfig) -> Result<GridAnalysis> {
    cfg.validate()?;
    if buildings.is_empty() {
        return Err(Error::input("no buildings given"));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = buildings.iter().find(|b| !seen.insert(b.id.as_str())) {
        return Err(Error::input(format!("building id {} appears twice", dup.id)));
    }
    let mut warnings = Vec::new();
    let edges = building_edges(buildings)?;

    let (mixture, assignments, orientations) = if buildings.len() == 1 {
        warnings.push(format!(
            "only one building ({}); fitted a single grid without a mixture",
            buildings[0].id
        ));
        let sample = CircularSample::new(
            edges.iter().map(|e| fold_to_circle(e.orientation, 90.0)).collect::<Result<_>>()?,
        )?;
        let mean = circular_mean_resultant(&sample)?
            .mean
            .ok_or_else(|| Error::degenerate("edge orientations have no mean direction"))?;
        let assignment = GridAssignment {
            building: buildings[0].id.clone(),
            cluster: Some(1),
            edge_orientations: edges.iter().map(|e| e.orientation).collect(),
            edge_clusters: vec![1; edges.len()],
        };
        (None, vec![assignment], vec![unscale_from_circle(mean, 90.0)])
    } else {
        let (fit, assignments) = assign_buildings(&edges, &cfg.mixture)?;
        let orientations = fit.components.iter().map(|c| unscale_from_circle(c.mu(), 90.0)).collect();
        (Some(fit), assignments, orientations)
    };
    for a in assignments.iter().filter(|a| a.cluster.is_none()) {
        warnings.push(format!("building {} has edges on both grids; left unassigned", a.building));
    }

    let by_id: BTreeMap<&str, &Building> = buildings.iter().map(|b| (b.id.as_str(), b)).collect();
    let mut clusters = Vec::new();
    for (k, orientation) in orientations.iter().enumerate() {
        let mut corner_ids = Vec::new();
        let mut world = Vec::new();
        for a in assignments.iter().filter(|a| a.cluster == Some(k + 1)) {
            for (i, c) in by_id[a.building.as_str()].corners.iter().enumerate() {
                corner_ids.push((a.building.clone(), i));
                world.push(*c);
            }
        }
        if world.is_empty() {
            warnings.push(format!("grid {} has no assigned buildings", k + 1));
            continue;
        }
        let grid = project_to_grid_axes(&world, *orientation);
        clusters.push(ClusterFrame { cluster: k + 1, orientation: *orientation, corner_ids, world, grid });
    }
    if clusters.is_empty() {
        return Err(Error::degenerate("no building could be assigned to a grid"));
    }

    let frames: Vec<&[(f64, f64)]> = clusters.iter().map(|c| c.grid.as_slice()).collect();
    let compendium = compendium_differences(&frames)?;
    if compendium.len() < 2 {
        return Err(Error::degenerate("compendium has fewer than 2 coordinate differences"));
    }
    let curve = cosine_quantogram(&compendium, &cfg.grid)?;
    let boundary = cfg
        .boundary
        .as_ref()
        .map(|b| simulate_boundary(&compendium, &cfg.grid, b))
        .transpose()?;
    let peak = find_peak(&curve, boundary.as_ref(), &cfg.grid)?;
    let fitted_quantum = peak.primary.map(|p| p.quantum);

    let (fit, comparison) = match (fitted_quantum, cfg.quantum) {
        (Some(q), alt) => (
            build_grid_models(&clusters, q)?,
            alt.map(|a| build_grid_models(&clusters, a)).transpose()?,
        ),
        (None, Some(a)) => {
            warnings.push("compendium quantogram has no peak in the region of interest; using the given quantum".into());
            (build_grid_models(&clusters, a)?, None)
        }
        (None, None) => {
            return Err(Error::degenerate(
                peak.diagnostic.clone().unwrap_or_else(|| "no quantum estimate".into()),
            ))
        }
    };

    Ok(GridAnalysis {
        edges,
        mixture,
        assignments,
        clusters,
        compendium,
        curve,
        boundary,
        peak,
        fitted_quantum,
        fit,
        comparison,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn square(id: &str, origin: (f64, f64), side: f64, deg: f64) -> Building {
        let (s, c) = deg.to_radians().sin_cos();
        let corners = [(0.0, 0.0), (side, 0.0), (side, side), (0.0, side)]
            .iter()
            .map(|&(u, v)| (origin.0 + c * u - s * v, origin.1 + s * u + c * v))
            .collect();
        Building::new(id, corners).unwrap()
    }

    fn circ90(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(90.0);
        d.min(90.0 - d)
    }

    #[test]
    fn edge_examples() {
        let e = building_edges(&[square("a", (0.0, 0.0), 1.0, 0.0)]).unwrap();
        assert_eq!(e.len(), 4);
        assert!(e.iter().all(|e| circ90(e.orientation, 0.0) < 1e-12));

        let e = building_edges(&[square("a", (3.0, -2.0), 2.0, 30.0)]).unwrap();
        assert!(e.iter().all(|e| (e.orientation - 30.0).abs() < 1e-9));

        let l = Building::new("l", vec![(0.0, 0.0), (2.0, 0.0), (2.0, 1.0)]).unwrap();
        let e = building_edges(&[l]).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].from, e[0].to, e[1].from, e[1].to), (0, 1, 1, 2));
        assert!(e.iter().all(|e| circ90(e.orientation, 0.0) < 1e-12));
    }

    #[test]
    fn invalid_buildings() {
        assert!(matches!(
            Building::new("a", vec![(0.0, 0.0), (0.0, 0.0), (1.0, 1.0)]),
            Err(Error::Geometry(_))
        ));
        assert!(Building::new("a", vec![(0.0, 0.0), (1.0, 0.0)]).is_err());
        assert!(Building::new("a", vec![(0.0, 0.0); 5]).is_err());
    }

    fn two_orientation_buildings(seed: u64) -> Vec<Building> {
        use crate::rng::substream;
        use rand_distr::{Distribution, Normal};
        let mut rng = substream(seed, 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        (0..16)
            .map(|i| {
                let base = if i < 8 { 10.0 } else { 40.0 };
                let deg = base + noise.sample(&mut rng);
                square(&format!("b{i:02}"), (20.0 * i as f64, 0.0), 6.0, deg)
            })
            .collect()
    }

    #[test]
    fn two_orientations_assigned_perfectly() {
        let buildings = two_orientation_buildings(3);
        let edges = building_edges(&buildings).unwrap();
        let (fit, assignments) = assign_buildings(&edges, &MixtureConfig::default()).unwrap();
        assert!(fit.components[0].mu() < fit.components[1].mu());
        for (i, a) in assignments.iter().enumerate() {
            assert_eq!(a.cluster, Some(if i < 8 { 1 } else { 2 }), "{a:?}");
        }
    }

    #[test]
    fn straddling_building_unassigned() {
        let mut buildings = two_orientation_buildings(4);
        let (s1, c1) = 10f64.to_radians().sin_cos();
        let (s2, c2) = 130f64.to_radians().sin_cos();
        let b = (500.0 + 6.0 * c1, 6.0 * s1);
        buildings.push(Building::new("mixed", vec![(500.0, 0.0), b, (b.0 + 6.0 * c2, b.1 + 6.0 * s2)]).unwrap());
        let edges = building_edges(&buildings).unwrap();
        let (_, assignments) = assign_buildings(&edges, &MixtureConfig::default()).unwrap();
        let mixed = assignments.iter().find(|a| a.building == "mixed").unwrap();
        assert_eq!(mixed.cluster, None);
        assert_eq!(mixed.edge_clusters, vec![1, 2]);
    }

    #[test]
    fn assignment_ignores_building_order() {
        let buildings = two_orientation_buildings(5);
        let mut reversed = buildings.clone();
        reversed.reverse();
        let cfg = MixtureConfig::default();
        let (_, a) = assign_buildings(&building_edges(&buildings).unwrap(), &cfg).unwrap();
        let (_, b) = assign_buildings(&building_edges(&reversed).unwrap(), &cfg).unwrap();
        for x in &a {
            let y = b.iter().find(|y| y.building == x.building).unwrap();
            assert_eq!(x.cluster, y.cluster);
        }
        assert!(assign_buildings(&building_edges(&buildings[..1]).unwrap(), &cfg).is_err());
    }

    #[test]
    fn projection_examples() {
        let pts = [(1.0, 0.0), (2.5, -3.0), (-4.0, 7.0)];
        assert_eq!(project_to_grid_axes(&pts, 0.0), pts.to_vec());
        let r = project_to_grid_axes(&[(1.0, 0.0)], 90.0)[0];
        assert_abs_diff_eq!(r.0, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.1, -1.0, epsilon = 1e-15);
        let back = from_grid_axes(project_to_grid_axes(&pts, 37.0)[1], 37.0);
        assert_abs_diff_eq!(back.0, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(back.1, -3.0, epsilon = 1e-12);
    }

    #[test]
    fn compendium_tags_axes() {
        let c1 = [(0.0, 1.0), (4.32, 1.0)];
        let c2 = [(0.0, 0.0), (1.0, 2.0), (3.0, 2.0)];
        let m = compendium_differences(&[&c1, &c2]).unwrap();
        assert_eq!(m.select("c1x").values(), &[4.32]);
        assert!(m.select("c1y").is_empty());
        assert_eq!(m.select("c2x").sorted_values(), vec![1.0, 2.0, 3.0]);
        assert_eq!(m.select("c2y").sorted_values(), vec![2.0, 2.0]);
        assert_eq!(m.len(), 6);
    }

    #[test]
    fn offset_examples() {
        let (ox, oy) = fit_offsets(&[(0.5, 1.0), (4.82, 5.32), (9.14, -3.32)], 4.32).unwrap();
        assert_abs_diff_eq!(ox, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(oy, 1.0, epsilon = 1e-9);

        let q = 4.0;
        let spread = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)];
        assert!(matches!(fit_offsets(&spread, q), Err(Error::Degenerate(_))));
        assert!(fit_offsets(&[], q).is_err());
        assert!(fit_offsets(&[(0.0, 0.0)], 0.0).is_err());
    }

    #[test]
    fn planted_offset_recovered() {
        use crate::rng::substream;
        use rand::Rng;
        use rand_distr::{Distribution, Normal};
        let mut rng = substream(11, 0);
        let noise = Normal::new(0.0, 0.15).unwrap();
        let q = 4.32;
        let coords: Vec<(f64, f64)> = (0..40)
            .map(|_| {
                let i = rng.random_range(-10..10) as f64;
                let j = rng.random_range(-10..10) as f64;
                (1.7 + i * q + noise.sample(&mut rng), 0.4 + j * q + noise.sample(&mut rng))
            })
            .collect();
        let (ox, oy) = fit_offsets(&coords, q).unwrap();
        assert!((ox - 1.7).abs() < 0.15, "{ox}");
        assert!((oy - 0.4).abs() < 0.15, "{oy}");
    }

    #[test]
    fn perfect_lattice_has_zero_residuals() {
        let q = 3.0;
        let grid: Vec<(f64, f64)> = (0..4).flat_map(|i| (0..3).map(move |j| (0.7 + i as f64 * q, 1.1 + j as f64 * q))).collect();
        let frame = ClusterFrame {
            cluster: 1,
            orientation: 0.0,
            corner_ids: (0..grid.len()).map(|i| ("b".to_string(), i)).collect(),
            world: grid.clone(),
            grid,
        };
        let fit = build_grid_models(&[frame], q).unwrap();
        assert!(fit.summary.max_distance < 1e-9);
        let m = &fit.models[0];
        assert_abs_diff_eq!(m.extent.x_min, 0.7 - q, epsilon = 1e-12);
        assert_abs_diff_eq!(m.extent.y_max, 1.1 + 2.0 * q + q, epsilon = 1e-12);
        // 6 vertical + 5 horizontal lines span the padded box.
        assert_eq!(m.lines().len(), 11);
    }

    #[test]
    fn single_building_cluster_has_padded_extent() {
        let b = square("only", (2.0, 3.0), 4.32, 0.0);
        let cfg = GridFitConfig { boundary: None, quantum: Some(4.32), ..Default::default() };
        let a = fit_grids(&[b], &cfg).unwrap();
        assert!(a.mixture.is_none());
        assert!(!a.warnings.is_empty());
        assert_eq!(a.fit.models.len(), 1);
        let e = a.fit.models[0].extent;
        assert!(e.x_max - e.x_min > 4.32 * 2.0);
    }

    #[test]
    fn display_rotation_examples() {
        let r = histogram_rotation_for_plot(&[80.0, 10.0], 45.0);
        assert_abs_diff_eq!(r[0], 35.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], 55.0, epsilon = 1e-12);
        assert_eq!(histogram_rotation_for_plot(&[80.0], 0.0), vec![80.0]);
    }

    #[test]
    fn two_grid_fixture_end_to_end() {
        let fx = synth::two_grid_buildings(1);
        let cfg = GridFitConfig { boundary: None, ..Default::default() };
        let a = fit_grids(&fx.buildings, &cfg).unwrap();
        for asg in &a.assignments {
            assert_eq!(asg.cluster, fx.truth[&asg.building], "{}", asg.building);
        }
        let q = a.fitted_quantum.unwrap();
        assert!((q - fx.quantum).abs() < 0.1, "{q}");
        for (m, (ox, oy)) in a.fit.models.iter().zip(&fx.offsets) {
            assert!(circ90(m.orientation, fx.orientations[m.cluster - 1]) < 1.0);
            let dx = fold_residual(m.offset_x - ox, q).abs();
            let dy = fold_residual(m.offset_y - oy, q).abs();
            assert!(dx < 0.15 && dy < 0.15, "cluster {}: {dx} {dy}", m.cluster);
        }
        let wrong = build_grid_models(&a.clusters, q * 1.1).unwrap();
        assert!(a.fit.summary.mean_abs_axis_residual < wrong.summary.mean_abs_axis_residual);
    }

    #[test]
    fn loads_corner_table() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "building,corner_index,x,y\nB,1,1,0\nA,0,0,0\nB,0,0,0\nA,1,1,0\nA,2,1,1\nB,2,1,1\nB,3,0,1").unwrap();
        let b = load_buildings(f.path()).unwrap();
        assert_eq!(b[0].id, "B");
        assert_eq!(b[0].corners, vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(b[1].corners.len(), 3);

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "building,corner_index,x,y\nA,0,0,0\nA,0,1,0\nA,1,1,1").unwrap();
        assert!(matches!(load_buildings(f.path()), Err(Error::Row { row: 3, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn edges_translate_and_rotate(
            side in 0.5f64..20.0,
            deg in 0.0f64..360.0,
            turn in 0.0f64..360.0,
            dx in -1e3f64..1e3,
            dy in -1e3f64..1e3,
        ) {
            let b = square("a", (0.0, 0.0), side, deg);
            let moved = Building::new("a", b.corners.iter().map(|(x, y)| (x + dx, y + dy)).collect()).unwrap();
            let (s, c) = turn.to_radians().sin_cos();
            let turned = Building::new("a", b.corners.iter().map(|(x, y)| (c * x - s * y, s * x + c * y)).collect()).unwrap();
            let e0 = building_edges(&[b]).unwrap();
            let e1 = building_edges(&[moved]).unwrap();
            let e2 = building_edges(&[turned]).unwrap();
            for ((a, b), t) in e0.iter().zip(&e1).zip(&e2) {
                prop_assert!(circ90(a.orientation, b.orientation) < 1e-6);
                prop_assert!(circ90(a.orientation + turn, t.orientation) < 1e-6);
            }
        }

        #[test]
        fn offsets_are_quantum_periodic(
            coords in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..20),
            q in 0.5f64..10.0,
        ) {
            prop_assume!(fit_offsets(&coords, q).is_ok());
            let (ox, oy) = fit_offsets(&coords, q).unwrap();
            let shifted: Vec<(f64, f64)> = coords.iter().map(|(x, y)| (x + q, y + q)).collect();
            let (sx, sy) = fit_offsets(&shifted, q).unwrap();
            prop_assert!(fold_residual(ox - sx, q).abs() < 1e-6);
            prop_assert!(fold_residual(oy - sy, q).abs() < 1e-6);
            prop_assert!((0.0..q).contains(&ox) && (0.0..q).contains(&oy));
        }

        #[test]
        fn projection_is_an_isometry(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..10),
            deg in 0.0f64..90.0,
        ) {
            let r = project_to_grid_axes(&pts, deg);
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    let d0 = (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1);
                    let d1 = (r[i].0 - r[j].0).hypot(r[i].1 - r[j].1);
                    prop_assert!((d0 - d1).abs() < 1e-12 * d0.max(1.0));
                }
            }
        }
    }
}
