//! Post-hole point patterns: isolation rejection, nearest-neighbour
//! directions, the perpendicular-structure test, likelihood classification
//! of gridded points and single-linkage spatial clustering.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circstats::{
    axiality_test, fit_mixture, fold_to_circle, unscale_from_circle, AxialityThresholds,
    AxialityVerdict, Axiality, CircularSample, MixtureConfig, MixtureFit, MixtureKind,
};
use crate::error::{Error, Result};
use crate::measurements::read_records;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Metres,
    /// Raster coordinates with no known scale.
    Pixels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// `false` once rejected as isolated.
    pub accepted: bool,
    /// Set by classification; `None` until then (and for rejected points).
    pub gridded: Option<bool>,
    /// Spatial cluster (1-based) of a gridded point.
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub points: Vec<Point>,
    pub units: Units,
}

#[derive(Deserialize)]
struct PointRow {
    id: String,
    x: f64,
    y: f64,
}

impl PointPattern {
    pub fn from_coords(
        coords: impl IntoIterator<Item = (String, f64, f64)>,
        units: Units,
    ) -> Result<Self> {
        let points = coords
            .into_iter()
            .map(|(id, x, y)| {
                if !(x.is_finite() && y.is_finite()) {
                    return Err(Error::input(format!("point {id} has non-finite coordinates")));
                }
                Ok(Point { id, x, y, accepted: true, gridded: None, cluster: None })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { points, units })
    }

    /// Read `id,x,y[,…]`; extra columns are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let rows: Vec<(usize, PointRow)> = read_records(path, &["id", "x", "y"])?;
        for (row, r) in &rows {
            if !(r.x.is_finite() && r.y.is_finite()) {
                return Err(Error::Row {
                    path: path.to_path_buf(),
                    row: *row,
                    msg: format!("point {} has non-finite coordinates", r.id),
                });
            }
        }
        Self::from_coords(rows.into_iter().map(|(_, r)| (r.id, r.x, r.y)), Units::Metres)
    }

    /// `id,x,y,accepted,gridded,cluster`; unset labels are left blank.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "x", "y", "accepted", "gridded", "cluster"])?;
        for p in &self.points {
            w.write_record([
                p.id.clone(),
                p.x.to_string(),
                p.y.to_string(),
                p.accepted.to_string(),
                p.gridded.map(|g| g.to_string()).unwrap_or_default(),
                p.cluster.map(|c| c.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sort by `(x, y)`, then id.
    pub fn canonicalize(&mut self) {
        self.points.sort_by(|a, b| {
            a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then_with(|| a.id.cmp(&b.id))
        });
    }

    pub fn accepted(&self) -> impl Iterator<Item = &Point> {
        self.points.iter().filter(|p| p.accepted)
    }

    pub fn gridded(&self) -> impl Iterator<Item = &Point> {
        self.points.iter().filter(|p| p.gridded == Some(true))
    }
}

fn dist(a: &Point, b: &Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Label as rejected every point with fewer than `min_neighbours` other
/// points within `radius`, counted against the whole input pattern.
pub fn reject_isolated(pattern: &PointPattern, radius: f64, min_neighbours: usize) -> Result<PointPattern> {
    if !(radius > 0.0) {
        return Err(Error::param(format!("isolation radius must be positive, got {radius}")));
    }
    let mut out = pattern.clone();
    for (i, p) in pattern.points.iter().enumerate() {
        let neighbours = pattern
            .points
            .iter()
            .enumerate()
            .filter(|(j, q)| *j != i && dist(p, q) <= radius)
            .count();
        out.points[i].accepted = neighbours >= min_neighbours;
    }
    Ok(out)
}

/// Index of each point's nearest neighbour, lowest index on ties.
fn nearest_neighbours(points: &[&Point]) -> Result<Vec<(usize, f64)>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best: Option<(usize, f64)> = None;
            for (j, q) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = dist(p, q);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            let (j, d) = best.ok_or_else(|| Error::input("nearest neighbours need at least 2 points"))?;
            if d == 0.0 {
                return Err(Error::input(format!(
                    "points {} and {} coincide; direction undefined",
                    p.id, points[j].id
                )));
            }
            Ok((j, d))
        })
        .collect()
}

/// Bearing (degrees in `[0, 360)`, anticlockwise from +x) from each point
/// to its nearest neighbour.
pub fn nn_directions(points: &[&Point]) -> Result<Vec<f64>> {
    if points.len() < 2 {
        return Err(Error::input(format!(
            "nearest-neighbour directions need at least 2 points, got {}",
            points.len()
        )));
    }
    Ok(nearest_neighbours(points)?
        .into_iter()
        .zip(points)
        .map(|((j, _), p)| {
            let q = points[j];
            crate::circstats::wrap((q.y - p.y).atan2(q.x - p.x).to_degrees(), 360.0)
        })
        .collect())
}

/// Median nearest-neighbour distance.
pub fn median_nn_distance(points: &[&Point]) -> Result<f64> {
    let mut d: Vec<f64> = nearest_neighbours(points)?.into_iter().map(|(_, d)| d).collect();
    if d.is_empty() {
        return Err(Error::input("median nearest-neighbour distance needs at least 2 points"));
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Ok(if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerpReport {
    /// Uniform + von Mises fit to the mod-90° orientations scaled onto the circle.
    pub mixture: MixtureFit,
    pub axiality: AxialityVerdict,
    /// Von Mises mean mapped back to degrees in `[0, 90)`.
    pub grid_orientation: f64,
    pub gridded_fraction: f64,
    /// The mixture peak is supported as perpendicular (not collinear) structure.
    pub perpendicular: bool,
}

pub fn perpendicularity_analysis(
    directions_deg: &[f64],
    mixture: &MixtureConfig,
    thresholds: AxialityThresholds,
) -> Result<PerpReport> {
    if directions_deg.len() < 5 {
        return Err(Error::input(format!(
            "perpendicularity analysis needs at least 5 directions, got {}",
            directions_deg.len()
        )));
    }
    let folded = directions_deg
        .iter()
        .map(|d| fold_to_circle(*d, 90.0))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_mixture(&CircularSample::new(folded)?, MixtureKind::UniformVonMises, mixture)?;
    let axiality = axiality_test(&CircularSample::from_degrees(directions_deg.iter().copied())?, thresholds)?;
    Ok(PerpReport {
        grid_orientation: unscale_from_circle(fit.components[0].mu(), 90.0),
        gridded_fraction: fit.vonmises_weight(),
        perpendicular: axiality.classification == Axiality::Perpendicular,
        mixture: fit,
        axiality,
    })
}

/// Label accepted points gridded when the von Mises posterior at their
/// folded direction exceeds `threshold`. `directions_deg` pairs with the
/// accepted points in order.
pub fn classify_points(
    pattern: &PointPattern,
    directions_deg: &[f64],
    report: &PerpReport,
    threshold: f64,
) -> Result<PointPattern> {
    if !report.mixture.converged {
        return Err(Error::degenerate("mixture fit did not converge; points not classified"));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::param(format!("classification threshold must lie in [0, 1], got {threshold}")));
    }
    let n_accepted = pattern.accepted().count();
    if directions_deg.len() != n_accepted {
        return Err(Error::input(format!(
            "{} directions for {n_accepted} accepted points",
            directions_deg.len()
        )));
    }
    let col = report.mixture.vonmises_column();
    let mut out = pattern.clone();
    let mut dirs = directions_deg.iter();
    for p in &mut out.points {
        p.cluster = None;
        if !p.accepted {
            p.gridded = None;
            continue;
        }
        let theta = fold_to_circle(*dirs.next().unwrap(), 90.0)?;
        p.gridded = Some(report.mixture.responsibility_at(theta)[col] > threshold);
    }
    Ok(out)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clusters of the gridded points; clusters smaller than
/// `min_cluster_size` stay unassigned. Cluster ids run from 1 by size
/// (descending), ties broken by the leftmost, then lowest, member point.
pub fn spatial_cluster(pattern: &PointPattern, link_distance: f64, min_cluster_size: usize) -> Result<PointPattern> {
    if !(link_distance > 0.0) {
        return Err(Error::param(format!("link distance must be positive, got {link_distance}")));
    }
    let members: Vec<usize> = (0..pattern.points.len())
        .filter(|&i| pattern.points[i].gridded == Some(true))
        .collect();
    let mut parent: Vec<usize> = (0..members.len()).collect();
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            if dist(&pattern.points[members[a]], &pattern.points[members[b]]) <= link_distance {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (k, &m) in members.iter().enumerate() {
        let root = find(&mut parent, k);
        groups.entry(root).or_default().push(m);
    }
    let leftmost = |g: &Vec<usize>| {
        g.iter()
            .map(|&i| (pattern.points[i].x, pattern.points[i].y))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
            .unwrap()
    };
    let mut groups: Vec<Vec<usize>> =
        groups.into_values().filter(|g| g.len() >= min_cluster_size.max(1)).collect();
    groups.sort_by(|a, b| {
        b.len().cmp(&a.len()).then_with(|| {
            let (la, lb) = (leftmost(a), leftmost(b));
            la.0.total_cmp(&lb.0).then(la.1.total_cmp(&lb.1))
        })
    });
    let mut out = pattern.clone();
    for p in &mut out.points {
        p.cluster = None;
    }
    for (id, g) in groups.iter().enumerate() {
        for &i in g {
            out.points[i].cluster = Some(id + 1);
        }
    }
    Ok(out)
}

/// Counts of orientations folded mod 90° in bins of `bin_width` degrees.
pub fn orientation_histogram(directions_deg: &[f64], bin_width: f64) -> Result<Vec<(f64, f64, usize)>> {
    if !(bin_width > 0.0 && bin_width <= 90.0) {
        return Err(Error::param(format!("histogram bin width must lie in (0, 90], got {bin_width}")));
    }
    let n_bins = (90.0 / bin_width).ceil() as usize;
    let mut counts = vec![0usize; n_bins];
    for d in directions_deg {
        let folded = crate::circstats::fold_angle(*d, 90.0)?;
        counts[((folded / bin_width) as usize).min(n_bins - 1)] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 * bin_width, ((i + 1) as f64 * bin_width).min(90.0), c))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerpConfig {
    /// Defaults to 3 × the median nearest-neighbour distance of all points.
    pub isolation_radius: Option<f64>,
    pub min_neighbours: usize,
    pub mixture: MixtureConfig,
    pub axiality: AxialityThresholds,
    pub threshold: f64,
    /// Defaults to 3 × the median nearest-neighbour distance of gridded points.
    pub link_distance: Option<f64>,
    pub min_cluster_size: usize,
    pub histogram_bin: f64,
}

impl Default for PerpConfig {
    fn default() -> Self {
        Self {
            isolation_radius: None,
            min_neighbours: 1,
            mixture: MixtureConfig::default(),
            axiality: AxialityThresholds::default(),
            threshold: 0.5,
            link_distance: None,
            min_cluster_size: 5,
            histogram_bin: 5.0,
        }
    }
}

impl PerpConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.isolation_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::param(format!("isolation radius must be positive, got {r}")));
            }
        }
        if let Some(d) = self.link_distance {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::param(format!("link distance must be positive, got {d}")));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::param(format!(
                "classification threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if self.min_cluster_size == 0 {
            return Err(Error::param("minimum cluster size must be at least 1"));
        }
        if !(self.histogram_bin > 0.0 && self.histogram_bin <= 90.0) {
            return Err(Error::param("histogram bin width must lie in (0, 90]"));
        }
        for (name, t) in [("r2", self.axiality.r2), ("r4", self.axiality.r4)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::param(format!("{name} threshold must lie in [0, 1], got {t}")));
            }
        }
        self.mixture.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerpAnalysis {
    pub pattern: PointPattern,
    pub directions: Vec<f64>,
    pub report: PerpReport,
    pub isolation_radius: f64,
    pub link_distance: Option<f64>,
    pub n_clusters: usize,
    pub histogram: Vec<(f64, f64, usize)>,
}

/// Isolation rejection, directions, mixture and axiality, classification
/// and clustering, in that order. Points are first sorted canonically.
pub fn analyse_pattern(pattern: &PointPattern, cfg: &PerpConfig) -> Result<PerpAnalysis> {
    cfg.validate()?;
    let mut pattern = pattern.clone();
    pattern.canonicalize();
    let all: Vec<&Point> = pattern.points.iter().collect();
    let isolation_radius = match cfg.isolation_radius {
        Some(r) => r,
        None => 3.0 * median_nn_distance(&all)?,
    };
    let pattern = reject_isolated(&pattern, isolation_radius, cfg.min_neighbours)?;
    let accepted: Vec<&Point> = pattern.accepted().collect();
    let directions = nn_directions(&accepted)?;
    let report = perpendicularity_analysis(&directions, &cfg.mixture, cfg.axiality)?;
    let classified = classify_points(&pattern, &directions, &report, cfg.threshold)?;
    let gridded: Vec<&Point> = classified.gridded().collect();
    let link_distance = match (cfg.link_distance, gridded.len()) {
        (Some(d), _) => Some(d),
        (None, n) if n >= 2 => Some(3.0 * median_nn_distance(&gridded)?),
        _ => None,
    };
    let pattern = match link_distance {
        Some(d) => spatial_cluster(&classified, d, cfg.min_cluster_size)?,
        None => classified,
    };
    let n_clusters = pattern.points.iter().filter_map(|p| p.cluster).max().unwrap_or(0);
    let histogram = orientation_histogram(&directions, cfg.histogram_bin)?;
    Ok(PerpAnalysis { pattern, directions, report, isolation_radius, link_distance, n_clusters, histogram })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circstats::{sample_vonmises, VonMisesParams};
    use crate::rng::substream;
    use crate::synth;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::TAU;

    fn pattern(coords: &[(f64, f64)]) -> PointPattern {
        PointPattern::from_coords(
            coords.iter().enumerate().map(|(i, &(x, y))| (format!("p{i}"), x, y)),
            Units::Metres,
        )
        .unwrap()
    }

    fn refs(p: &PointPattern) -> Vec<&Point> {
        p.points.iter().collect()
    }

    fn circ_diff_90(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(90.0);
        d.min(90.0 - d)
    }

    #[test]
    fn isolation_examples() {
        let p = reject_isolated(&pattern(&[(0.0, 0.0), (1.0, 0.0)]), 2.0, 1).unwrap();
        assert!(p.points.iter().all(|p| p.accepted));

        let p = reject_isolated(
            &pattern(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (100.0, 0.0)]),
            10.0,
            1,
        )
        .unwrap();
        let accepted: Vec<bool> = p.points.iter().map(|p| p.accepted).collect();
        assert_eq!(accepted, vec![true, true, true, false]);

        assert!(reject_isolated(&pattern(&[]), 1.0, 1).unwrap().is_empty());
        assert!(reject_isolated(&pattern(&[]), 0.0, 1).is_err());
    }

    #[test]
    fn direction_examples() {
        let p = pattern(&[(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(nn_directions(&refs(&p)).unwrap(), vec![0.0, 180.0]);

        let p = pattern(&[(0.0, 0.0), (0.0, 2.0), (5.0, 0.0)]);
        assert_abs_diff_eq!(nn_directions(&refs(&p)).unwrap()[2], 180.0);

        let mut coords = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                coords.push((i as f64, j as f64));
            }
        }
        let dirs = nn_directions(&refs(&pattern(&coords))).unwrap();
        assert!(dirs.iter().all(|d| [0.0, 90.0, 180.0, 270.0].contains(d)));
    }

    #[test]
    fn coincident_points_are_named() {
        let p = pattern(&[(0.0, 0.0), (3.0, 3.0), (3.0, 3.0)]);
        let err = nn_directions(&refs(&p)).unwrap_err().to_string();
        assert!(err.contains("p1") && err.contains("p2"), "{err}");
        assert!(nn_directions(&refs(&pattern(&[(0.0, 0.0)]))).is_err());
    }

    fn four_way_with_noise(seed: u64, n: usize, noise: f64) -> Vec<f64> {
        let mut rng = substream(seed, 0);
        (0..n)
            .map(|i| {
                if rng.random::<f64>() < noise {
                    rng.random_range(0.0..360.0)
                } else {
                    90.0 * (i % 4) as f64 + rng.random_range(-1.0..1.0)
                }
            })
            .collect()
    }

    #[test]
    fn perpendicular_directions_are_detected() {
        let dirs = four_way_with_noise(1, 400, 0.1);
        let r = perpendicularity_analysis(&dirs, &MixtureConfig::default(), Default::default()).unwrap();
        assert_eq!(r.axiality.classification, Axiality::Perpendicular);
        assert!(r.perpendicular);
        assert!(circ_diff_90(r.grid_orientation, 0.0) < 2.0, "{}", r.grid_orientation);
        assert!((r.gridded_fraction - r.mixture.vonmises_weight()).abs() < 1e-15);
    }

    #[test]
    fn collinear_directions_are_rejected() {
        let dirs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 30.0 } else { 210.0 }).collect();
        let r = perpendicularity_analysis(&dirs, &MixtureConfig::default(), Default::default()).unwrap();
        assert_eq!(r.axiality.classification, Axiality::Collinear);
        assert!(!r.perpendicular);
    }

    #[test]
    fn uniform_directions_give_small_weight() {
        let mut rng = substream(2, 0);
        let dirs: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..360.0)).collect();
        let r = perpendicularity_analysis(&dirs, &MixtureConfig::default(), Default::default()).unwrap();
        assert_eq!(r.axiality.classification, Axiality::Neither);
        assert!(r.gridded_fraction < 0.2, "{}", r.gridded_fraction);
    }

    fn report_with(kappa: f64, vm_weight: f64) -> PerpReport {
        let mu = 1.0;
        let vm = VonMisesParams::new(mu, kappa).unwrap();
        let mixture = MixtureFit {
            kind: MixtureKind::UniformVonMises,
            weights: [1.0 - vm_weight, vm_weight],
            components: vec![vm],
            responsibilities: vec![],
            log_likelihood: 0.0,
            log_likelihood_trace: vec![0.0],
            converged: true,
            iterations: 1,
            restart: 0,
            degenerate_component: false,
        };
        PerpReport {
            mixture,
            axiality: AxialityVerdict { classification: Axiality::Perpendicular, r2: 0.0, r4: 1.0 },
            grid_orientation: unscale_from_circle(mu, 90.0),
            gridded_fraction: vm_weight,
            perpendicular: true,
        }
    }

    #[test]
    fn classification_examples() {
        let p = pattern(&[(0.0, 0.0), (1.0, 0.0)]);
        let report = report_with(8.0, 0.7);
        let at_mu = report.grid_orientation;

        // Direct evaluation: 0.7·f_vm(μ) / (0.7·f_vm(μ) + 0.3/(2π)).
        let vm = report.mixture.components[0];
        let r = 0.7 * vm.density(1.0) / (0.7 * vm.density(1.0) + 0.3 / TAU);
        assert!(r > 0.9, "{r}");
        let c = classify_points(&p, &[at_mu, at_mu + 180.0], &report, 0.5).unwrap();
        assert!(c.points.iter().all(|p| p.gridded == Some(true)));

        // μ + 45° folded is the antipode on the scaled circle.
        let c = classify_points(&p, &[at_mu + 45.0, at_mu + 45.0], &report, 0.5).unwrap();
        assert!(c.points.iter().all(|p| p.gridded == Some(false)));

        // κ = 0: every responsibility equals the von Mises weight.
        let flat = report_with(0.0, 0.7);
        let theta = fold_to_circle(33.0, 90.0).unwrap();
        assert_abs_diff_eq!(flat.mixture.responsibility_at(theta)[1], 0.7, epsilon = 1e-12);
        let c = classify_points(&p, &[10.0, 80.0], &flat, 0.5).unwrap();
        assert!(c.points.iter().all(|p| p.gridded == Some(true)));
        let c = classify_points(&p, &[10.0, 80.0], &flat, 0.75).unwrap();
        assert!(c.points.iter().all(|p| p.gridded == Some(false)));

        let mut unconverged = report_with(8.0, 0.7);
        unconverged.mixture.converged = false;
        assert!(classify_points(&p, &[0.0, 0.0], &unconverged, 0.5).is_err());
    }

    fn all_gridded(coords: &[(f64, f64)]) -> PointPattern {
        let mut p = pattern(coords);
        for pt in &mut p.points {
            pt.gridded = Some(true);
        }
        p
    }

    #[test]
    fn clustering_examples() {
        let mut coords = Vec::new();
        for i in 0..6 {
            coords.push((i as f64, 0.0));
            coords.push((100.0 + i as f64, 0.0));
        }
        coords.push((150.0, 0.0));
        let c = spatial_cluster(&all_gridded(&coords), 10.0, 5).unwrap();
        let ids: std::collections::BTreeSet<_> = c.points.iter().filter_map(|p| p.cluster).collect();
        assert_eq!(ids.len(), 2);
        // Equal sizes: the leftmost cluster is 1.
        assert_eq!(c.points[0].cluster, Some(1));
        assert_eq!(c.points[1].cluster, Some(2));
        assert_eq!(c.points.last().unwrap().cluster, None);

        let chain: Vec<(f64, f64)> = (0..8).map(|i| (9.0 * i as f64, 0.0)).collect();
        let c = spatial_cluster(&all_gridded(&chain), 10.0, 5).unwrap();
        assert!(c.points.iter().all(|p| p.cluster == Some(1)));

        let c = spatial_cluster(&all_gridded(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]), 10.0, 5).unwrap();
        assert!(c.points.iter().all(|p| p.cluster.is_none()));

        assert!(spatial_cluster(&all_gridded(&chain), 0.0, 5).is_err());
    }

    #[test]
    fn background_points_are_not_clustered() {
        let mut p = all_gridded(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        p.points[1].gridded = Some(false);
        let c = spatial_cluster(&p, 5.0, 1).unwrap();
        assert_eq!(c.points[1].cluster, None);
        assert_eq!(c.points[0].cluster, Some(1));
    }

    #[test]
    fn histogram_bins() {
        let h = orientation_histogram(&[0.0, 4.9, 95.0, 359.0, 45.0], 5.0).unwrap();
        assert_eq!(h.len(), 18);
        assert_eq!(h[0], (0.0, 5.0, 2));
        assert_eq!(h[1].2, 1);
        assert_eq!(h[9].2, 1);
        assert_eq!(h[17].2, 1);
        assert!(orientation_histogram(&[], 0.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut p = pattern(&[(0.5, 1.25), (3.0, -2.0)]);
        p.points[0].gridded = Some(true);
        p.points[0].cluster = Some(1);
        p.points[1].accepted = false;
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "id,x,y,accepted,gridded,cluster\np0,0.5,1.25,true,true,1\np1,3,-2,false,,\n");
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        let back = PointPattern::load(f.path()).unwrap();
        assert_eq!(back.points[1].x, 3.0);
        assert!(back.points.iter().all(|p| p.accepted));
    }

    #[test]
    fn two_lattices_are_recovered() {
        let fixture = synth::two_lattice_pattern(7);
        let a = analyse_pattern(&fixture.pattern, &PerpConfig::default()).unwrap();
        assert!(a.report.perpendicular);
        let lattice_ids: std::collections::HashSet<&str> =
            fixture.lattice_ids.iter().map(String::as_str).collect();
        let recovered = a
            .pattern
            .points
            .iter()
            .filter(|p| lattice_ids.contains(p.id.as_str()) && p.gridded == Some(true))
            .count();
        assert!(recovered as f64 >= 0.8 * lattice_ids.len() as f64, "{recovered}/{}", lattice_ids.len());
        assert!(a.n_clusters >= 2);
    }

    #[test]
    fn orientation_invariant_under_quarter_turns() {
        let fixture = synth::two_lattice_pattern(8);
        let base = analyse_pattern(&fixture.pattern, &PerpConfig::default()).unwrap();
        for turns in 1..4 {
            let rotated = rotate_pattern(&fixture.pattern, 90.0 * turns as f64);
            let r = analyse_pattern(&rotated, &PerpConfig::default()).unwrap();
            assert!(
                circ_diff_90(r.report.grid_orientation, base.report.grid_orientation) < 1e-4,
                "{} vs {}",
                r.report.grid_orientation,
                base.report.grid_orientation
            );
        }
    }

    fn rotate_pattern(p: &PointPattern, deg: f64) -> PointPattern {
        let (s, c) = deg.to_radians().sin_cos();
        PointPattern::from_coords(
            p.points.iter().map(|q| (q.id.clone(), c * q.x - s * q.y, s * q.x + c * q.y)),
            p.units,
        )
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn directions_rotate_with_pattern(
            coords in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..25),
            deg in 0.0f64..360.0,
        ) {
            let p = pattern(&coords);
            prop_assume!(nn_directions(&refs(&p)).is_ok());
            // Skip near-ties, where rotation rounding may change the neighbour.
            let d0 = nearest_neighbours(&refs(&p)).unwrap();
            for (i, (_, best)) in d0.iter().enumerate() {
                let second = p.points.iter().enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| dist(&p.points[i], q))
                    .filter(|d| *d > *best)
                    .fold(f64::INFINITY, f64::min);
                prop_assume!(second - best > 1e-6);
            }
            let a = nn_directions(&refs(&p)).unwrap();
            let b = nn_directions(&refs(&rotate_pattern(&p, deg))).unwrap();
            for (x, y) in a.iter().zip(&b) {
                let d = (y - x - deg).rem_euclid(360.0);
                prop_assert!(d.min(360.0 - d) < 1e-6);
            }
        }

        #[test]
        fn raising_threshold_never_adds(
            dirs in prop::collection::vec(0.0f64..360.0, 6..20),
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let coords: Vec<(f64, f64)> = (0..dirs.len()).map(|i| (i as f64, 0.0)).collect();
            let p = pattern(&coords);
            let report = report_with(3.0, 0.6);
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let a = classify_points(&p, &dirs, &report, lo).unwrap();
            let b = classify_points(&p, &dirs, &report, hi).unwrap();
            for (x, y) in a.points.iter().zip(&b.points) {
                prop_assert!(!(y.gridded == Some(true) && x.gridded != Some(true)));
            }
        }

        #[test]
        fn clustering_ignores_order(
            coords in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..40),
            shift in 0usize..40,
        ) {
            let p = all_gridded(&coords);
            let mut shuffled = p.clone();
            let n = shuffled.points.len();
            shuffled.points.rotate_left(shift % n);
            shuffled.points.reverse();
            let a = spatial_cluster(&p, 12.0, 2).unwrap();
            let b = spatial_cluster(&shuffled, 12.0, 2).unwrap();
            for pt in &a.points {
                let other = b.points.iter().find(|q| q.id == pt.id).unwrap();
                prop_assert_eq!(pt.cluster, other.cluster);
            }
        }
    }

    #[test]
    fn vonmises_directions_fixture_sanity() {
        // Four-way von Mises directions stay perpendicular for moderate spread.
        let mut rng = substream(9, 0);
        let vm = VonMisesParams::new(0.0, 200.0).unwrap();
        let dirs: Vec<f64> = (0..200)
            .map(|i| (sample_vonmises(&mut rng, &vm).to_degrees() + 90.0 * (i % 4) as f64) % 360.0)
            .collect();
        let r = perpendicularity_analysis(&dirs, &MixtureConfig::default(), Default::default()).unwrap();
        assert!(r.perpendicular);
    }
}
