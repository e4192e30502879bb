//! Seeded generators for synthetic fixtures with known ground truth.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use std::collections::BTreeMap;

use crate::gridfit::Building;
use crate::postholes::{PointPattern, Units};
use crate::rasterclean::{BinaryRaster, Crop};
use crate::rng::substream;

/// `n` lengths `k·q + ε`, `k` uniform on `1..=8`, `ε ~ N(0, σ)`.
pub fn planted_lengths(seed: u64, n: usize, quantum: f64, sigma: f64) -> Vec<f64> {
    let mut rng = substream(seed, 0);
    let noise = Normal::new(0.0, sigma).expect("sigma must be finite and nonnegative");
    (0..n)
        .map(|_| {
            let k = rng.random_range(1..=8) as f64;
            (k * quantum + noise.sample(&mut rng)).max(1e-6)
        })
        .collect()
}

/// Points on a rotated `nx × ny` lattice with isotropic Gaussian jitter.
pub fn lattice_points<R: Rng + ?Sized>(
    rng: &mut R,
    origin: (f64, f64),
    nx: usize,
    ny: usize,
    spacing: f64,
    orientation_deg: f64,
    sigma: f64,
) -> Vec<(f64, f64)> {
    let noise = Normal::new(0.0, sigma).expect("sigma must be finite and nonnegative");
    let (s, c) = orientation_deg.to_radians().sin_cos();
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let (u, v) = (i as f64 * spacing, j as f64 * spacing);
            out.push((
                origin.0 + c * u - s * v + noise.sample(rng),
                origin.1 + s * u + c * v + noise.sample(rng),
            ));
        }
    }
    out
}

/// `n` points uniform on the rectangle `[x0, x1) × [y0, y1)`.
pub fn uniform_points<R: Rng + ?Sized>(rng: &mut R, n: usize, x: (f64, f64), y: (f64, f64)) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| (rng.random_range(x.0..x.1), rng.random_range(y.0..y.1)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct LatticeFixture {
    pub pattern: PointPattern,
    /// Ids of points drawn from a lattice (the rest are background noise).
    pub lattice_ids: Vec<String>,
    pub orientation_deg: f64,
}

/// Two separated 6 × 6 lattices (spacing 3 m, 20°, jitter 0.1 m) plus 20
/// uniform background points.
pub fn two_lattice_pattern(seed: u64) -> LatticeFixture {
    let mut rng = substream(seed, 0);
    let orientation_deg = 20.0;
    let mut coords = lattice_points(&mut rng, (0.0, 0.0), 6, 6, 3.0, orientation_deg, 0.1);
    coords.extend(lattice_points(&mut rng, (60.0, 40.0), 6, 6, 3.0, orientation_deg, 0.1));
    let n_lattice = coords.len();
    coords.extend(uniform_points(&mut rng, 20, (-10.0, 90.0), (-10.0, 70.0)));
    let ids: Vec<String> = (0..coords.len())
        .map(|i| if i < n_lattice { format!("L{i:03}") } else { format!("N{:03}", i - n_lattice) })
        .collect();
    let pattern = PointPattern::from_coords(
        ids.iter().cloned().zip(coords).map(|(id, (x, y))| (id, x, y)),
        Units::Metres,
    )
    .expect("generated coordinates are finite");
    LatticeFixture { pattern, lattice_ids: ids[..n_lattice].to_vec(), orientation_deg }
}

#[derive(Debug, Clone)]
pub struct TwoGridFixture {
    pub buildings: Vec<Building>,
    /// Planted grid of each building; `None` for the straddling one.
    pub truth: BTreeMap<String, Option<usize>>,
    /// Grid orientations in degrees, grid 1 first.
    pub orientations: [f64; 2],
    pub quantum: f64,
    /// Planted `(x, y)` offsets per grid, in each grid's frame.
    pub offsets: [(f64, f64); 2],
}

/// Two rectangular-building grids (12° and 33°, quantum 4.32 m, corner
/// noise σ = 0.1 m, 16 buildings each) either side of the origin, plus one
/// three-corner building whose edges follow different grids.
pub fn two_grid_buildings(seed: u64) -> TwoGridFixture {
    let mut rng = substream(seed, 0);
    let noise = Normal::new(0.0, 0.1).expect("valid sigma");
    let quantum = 4.32;
    let orientations = [12.0, 33.0];
    let offsets = [(1.1, 2.3), (3.0, 0.7)];
    let mut buildings = Vec::new();
    let mut truth = BTreeMap::new();
    for (g, (&deg, &(ox, oy))) in orientations.iter().zip(&offsets).enumerate() {
        let (s, c) = f64::to_radians(deg).sin_cos();
        // Grid 1 occupies negative x cells, grid 2 positive.
        let i_start = if g == 0 { -16 } else { 1 };
        for slot in 0..16 {
            let i0 = i_start + 4 * (slot % 4);
            let j0 = -8 + 4 * (slot / 4);
            let w = rng.random_range(2..=3);
            let d = rng.random_range(2..=3);
            let cells = [(i0, j0), (i0 + w, j0), (i0 + w, j0 + d), (i0, j0 + d)];
            let corners = cells
                .iter()
                .map(|&(i, j)| {
                    let (u, v) = (ox + i as f64 * quantum, oy + j as f64 * quantum);
                    (c * u - s * v + noise.sample(&mut rng), s * u + c * v + noise.sample(&mut rng))
                })
                .collect();
            let id = format!("G{}B{slot:02}", g + 1);
            truth.insert(id.clone(), Some(g + 1));
            buildings.push(Building::new(id, corners).expect("distinct corners"));
        }
    }
    let len = 2.0 * quantum;
    let a = (0.0, 60.0);
    let (s1, c1) = f64::to_radians(orientations[0]).sin_cos();
    let (s2, c2) = f64::to_radians(orientations[1] + 90.0).sin_cos();
    let b = (a.0 + len * c1, a.1 + len * s1);
    let straddle = vec![a, b, (b.0 + len * c2, b.1 + len * s2)];
    truth.insert("S1".to_string(), None);
    buildings.push(Building::new("S1", straddle).expect("distinct corners"));
    TwoGridFixture { buildings, truth, orientations, quantum, offsets }
}

/// `n` uniform points with ids `N000…` on `[0, width) × [0, height)`.
pub fn noise_pattern(seed: u64, n: usize, width: f64, height: f64) -> PointPattern {
    let mut rng = substream(seed, 0);
    let coords = uniform_points(&mut rng, n, (0.0, width), (0.0, height));
    PointPattern::from_coords(
        coords.into_iter().enumerate().map(|(i, (x, y))| (format!("N{i:03}"), x, y)),
        Units::Metres,
    )
    .expect("generated coordinates are finite")
}

#[derive(Debug, Clone)]
pub struct PlanFixture {
    pub raster: BinaryRaster,
    /// Centres of the planted post-hole dots, pixels.
    pub dot_centres: Vec<(f64, f64)>,
    /// Crop that keeps the plan and drops the legend.
    pub plan_crop: Crop,
    /// Number of dot-like legend symbols outside `plan_crop`.
    pub legend_dots: usize,
}

fn paint_disc(r: &mut BinaryRaster, cx: f64, cy: f64, radius: f64) {
    let x0 = (cx - radius).floor().max(0.0) as usize;
    let y0 = (cy - radius).floor().max(0.0) as usize;
    let x1 = ((cx + radius).ceil() as usize).min(r.width() - 1);
    let y1 = ((cy + radius).ceil() as usize).min(r.height() - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if (x as f64 - cx).hypot(y as f64 - cy) <= radius {
                r.set(x, y, true);
            }
        }
    }
}

fn paint_rect(r: &mut BinaryRaster, x0: usize, y0: usize, x1: usize, y1: usize) {
    for y in y0..y1 {
        for x in x0..x1 {
            r.set(x, y, true);
        }
    }
}

/// A 240 × 180 plan: round post-holes on a 15° lattice, two wall lines,
/// single-pixel specks, and a legend (three dots and a scale bar) in the
/// top-right corner outside `x < 200`.
pub fn plan_raster(seed: u64) -> PlanFixture {
    let mut rng = substream(seed, 0);
    let mut raster = BinaryRaster::blank(240, 180);
    let (s, c) = 15f64.to_radians().sin_cos();
    let mut dot_centres = Vec::new();
    for i in -4..14 {
        for j in -4..14 {
            let (u, v) = (i as f64 * 14.0, j as f64 * 14.0);
            let (x, y) = (40.0 + c * u - s * v, 50.0 + s * u + c * v);
            if (22.0..188.0).contains(&x) && (50.0..168.0).contains(&y) {
                let (x, y) = (x.round() + 0.5 * rng.random_range(-1..=1) as f64, y.round());
                paint_disc(&mut raster, x, y, 2.5);
                dot_centres.push((x, y));
            }
        }
    }
    paint_rect(&mut raster, 20, 19, 180, 22);
    paint_rect(&mut raster, 7, 40, 10, 170);
    for _ in 0..30 {
        let (x, y) = (rng.random_range(0..200), rng.random_range(0..180));
        let clear = dot_centres.iter().all(|&(dx, dy)| (dx - x as f64).hypot(dy - y as f64) > 6.0);
        if clear && !raster.get(x, y) {
            raster.set(x, y, true);
        }
    }
    for y in [6.0, 13.0, 29.0] {
        paint_disc(&mut raster, 210.0, y, 2.5);
    }
    paint_rect(&mut raster, 205, 36, 236, 38);
    PlanFixture {
        raster,
        dot_centres,
        plan_crop: Crop { x0: 0, y0: 0, x1: 200, y1: 180 },
        legend_dots: 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rasterclean::{connected_components, filter_clumps, CleanRules};

    #[test]
    fn plan_cleaning_keeps_exactly_the_dots() {
        let fx = plan_raster(3);
        let rules = CleanRules::default();
        let cropped = fx.raster.cropped(fx.plan_crop).unwrap();
        let report = filter_clumps(&connected_components(&cropped), &rules).unwrap();
        assert_eq!(report.kept.len(), fx.dot_centres.len());
        for k in &report.kept {
            let near = fx
                .dot_centres
                .iter()
                .map(|&(x, y)| (x - k.centroid.0).hypot(y - k.centroid.1))
                .fold(f64::INFINITY, f64::min);
            assert!(near < 0.6, "{near}");
        }
        let full = filter_clumps(&connected_components(&fx.raster), &rules).unwrap();
        assert_eq!(full.kept.len(), fx.dot_centres.len() + fx.legend_dots);
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(planted_lengths(4, 50, 4.32, 0.05), planted_lengths(4, 50, 4.32, 0.05));
        assert_ne!(planted_lengths(4, 50, 4.32, 0.05), planted_lengths(5, 50, 4.32, 0.05));
        assert_eq!(two_lattice_pattern(2).pattern, two_lattice_pattern(2).pattern);
        assert_eq!(two_grid_buildings(2).buildings, two_grid_buildings(2).buildings);
        assert_eq!(plan_raster(2).raster, plan_raster(2).raster);
    }
}
