//! Post-hole candidates from a binary plan raster: 8-connected clumps of ink
//! pixels, their shape features, and the clump removal rules.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postholes::{PointPattern, Units};

/// Ink/background bitmap, row-major, `true` = ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crop {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl std::str::FromStr for Crop {
    type Err = String;

    /// `x0,y0,x1,y1`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad crop value {p:?}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        match parts[..] {
            [x0, y0, x1, y1] if x0 < x1 && y0 < y1 => Ok(Crop { x0, y0, x1, y1 }),
            [_, _, _, _] => Err("crop needs x0 < x1 and y0 < y1".into()),
            _ => Err("crop must be x0,y0,x1,y1".into()),
        }
    }
}

impl BinaryRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input("raster must be at least 1×1"));
        }
        if pixels.len() != width * height {
            return Err(Error::input(format!(
                "{} pixels for a {width}×{height} raster",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn blank(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![false; width * height] }
    }

    /// Read a PBM or PGM file (plain or raw). Dark pixels (below half
    /// intensity) are ink.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::ImageReader::open(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?
            .with_guessed_format()
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?
            .decode()
            .map_err(|e| Error::Image { path: path.to_path_buf(), msg: e.to_string() })?
            .into_luma8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0[0] < 128).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    /// Write as a plain (P1) PBM.
    pub fn to_pbm(&self) -> String {
        let mut out = format!("P1\n{} {}\n", self.width, self.height);
        for row in self.pixels.chunks(self.width) {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, ink: bool) {
        if x < self.width && y < self.height {
            self.pixels[y * self.width + x] = ink;
        }
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|p| **p).count()
    }

    /// Clear every pixel outside `crop`; coordinates are unchanged.
    pub fn cropped(&self, crop: Crop) -> Result<Self> {
        if crop.x1 > self.width || crop.y1 > self.height {
            return Err(Error::param(format!(
                "crop {},{},{},{} exceeds the {}×{} raster",
                crop.x0, crop.y0, crop.x1, crop.y1, self.width, self.height
            )));
        }
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                if !(crop.x0..crop.x1).contains(&x) || !(crop.y0..crop.y1).contains(&y) {
                    out.pixels[y * self.width + x] = false;
                }
            }
        }
        Ok(out)
    }
}

/// A connected clump of ink pixels and its shape features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clump {
    /// First pixel in row-major order, `(row, column)`; the canonical key.
    pub first_pixel: (usize, usize),
    pub pixel_count: usize,
    /// Mean pixel position `(x, y)`, pixel units.
    pub centroid: (f64, f64),
    pub bbox_width: usize,
    pub bbox_height: usize,
    /// Major/minor axis ratio from second moments.
    pub elongation: f64,
    /// `4π·area/perimeter²` with the perimeter counted as exposed pixel edges.
    pub circularity: f64,
    /// Principal axis direction, radians in `[0, π)`.
    pub axis_angle: f64,
}

fn clump_features(raster: &BinaryRaster, pixels: &[(usize, usize)]) -> Clump {
    let n = pixels.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (usize::MAX, 0, usize::MAX, 0);
    let mut perimeter = 0usize;
    for &(x, y) in pixels {
        sx += x as f64;
        sy += y as f64;
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
        let exposed = |dx: isize, dy: isize| {
            let nx = x as isize + dx;
            let ny = y as isize + dy;
            nx < 0
                || ny < 0
                || nx >= raster.width as isize
                || ny >= raster.height as isize
                || !raster.get(nx as usize, ny as usize)
        };
        perimeter += [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .filter(|(dx, dy)| exposed(*dx, *dy))
            .count();
    }
    let (cx, cy) = (sx / n, sy / n);
    // Each pixel is a unit square: add its own variance 1/12 per axis.
    let (mut vxx, mut vyy, mut vxy) = (1.0 / 12.0, 1.0 / 12.0, 0.0);
    for &(x, y) in pixels {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        vxx += dx * dx / n;
        vyy += dy * dy / n;
        vxy += dx * dy / n;
    }
    let half_trace = 0.5 * (vxx + vyy);
    let disc = (0.25 * (vxx - vyy).powi(2) + vxy * vxy).sqrt();
    let major = half_trace + disc;
    let minor = (half_trace - disc).max(f64::MIN_POSITIVE);
    let axis_angle = (0.5 * (2.0 * vxy).atan2(vxx - vyy)).rem_euclid(std::f64::consts::PI);
    let first = pixels.iter().map(|&(x, y)| (y, x)).min().unwrap();
    Clump {
        first_pixel: first,
        pixel_count: pixels.len(),
        centroid: (cx, cy),
        bbox_width: max_x - min_x + 1,
        bbox_height: max_y - min_y + 1,
        elongation: (major / minor).sqrt().max(1.0),
        circularity: 4.0 * std::f64::consts::PI * n / (perimeter * perimeter) as f64,
        axis_angle,
    }
}

/// 8-connected clumps, ordered by first pixel (row, then column).
pub fn connected_components(raster: &BinaryRaster) -> Vec<Clump> {
    let (w, h) = (raster.width, raster.height);
    let mut seen = vec![false; w * h];
    let mut clumps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !raster.pixels[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            members.push((x, y));
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if raster.pixels[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        clumps.push(clump_features(raster, &members));
    }
    clumps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RemovalReason {
    LongThin,
    OnLineOfLongThin,
    Isolated,
    TooLarge,
    TooSmall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedClump {
    pub clump: Clump,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub kept: Vec<Clump>,
    pub removed: Vec<RemovedClump>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleanRules {
    pub max_elongation: f64,
    pub min_circularity: f64,
    /// Half-width (pixels) of the band around each long-thin clump's axis.
    pub line_band_width: f64,
    /// Nearest-survivor distance (pixels) beyond which a clump is isolated;
    /// `None` disables the rule.
    pub isolation_radius: Option<f64>,
    pub min_area: usize,
    pub max_area: Option<usize>,
}

impl Default for CleanRules {
    fn default() -> Self {
        Self {
            max_elongation: 3.0,
            min_circularity: 0.4,
            line_band_width: 3.0,
            isolation_radius: None,
            min_area: 3,
            max_area: None,
        }
    }
}

impl CleanRules {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_elongation >= 1.0) {
            return Err(Error::param("max elongation must be at least 1"));
        }
        if !(self.min_circularity >= 0.0) {
            return Err(Error::param("min circularity must be nonnegative"));
        }
        if !(self.line_band_width >= 0.0) {
            return Err(Error::param("line band width must be nonnegative"));
        }
        if let Some(r) = self.isolation_radius {
            if !(r > 0.0) {
                return Err(Error::param("isolation radius must be positive"));
            }
        }
        if let Some(max) = self.max_area {
            if max < self.min_area {
                return Err(Error::param("max area is below min area"));
            }
        }
        Ok(())
    }
}

fn distance_to_axis(point: (f64, f64), through: &Clump) -> f64 {
    let (dx, dy) = (point.0 - through.centroid.0, point.1 - through.centroid.1);
    let (s, c) = through.axis_angle.sin_cos();
    (dx * s - dy * c).abs()
}

/// Apply the removal rules in fixed order: shape and area, then lines
/// through long-thin clumps, then isolation among the survivors.
pub fn filter_clumps(clumps: &[Clump], rules: &CleanRules) -> Result<CleanReport> {
    rules.validate()?;
    let mut sorted: Vec<&Clump> = clumps.iter().collect();
    sorted.sort_by_key(|c| c.first_pixel);

    let mut removed = Vec::new();
    let mut candidates = Vec::new();
    let mut line_makers = Vec::new();
    for c in sorted {
        let reason = if c.pixel_count < rules.min_area {
            Some(RemovalReason::TooSmall)
        } else if rules.max_area.is_some_and(|m| c.pixel_count > m) {
            Some(RemovalReason::TooLarge)
        } else if c.elongation > rules.max_elongation || c.circularity < rules.min_circularity {
            if c.elongation > rules.max_elongation {
                line_makers.push(c);
            }
            Some(RemovalReason::LongThin)
        } else {
            None
        };
        match reason {
            Some(reason) => removed.push(RemovedClump { clump: c.clone(), reason }),
            None => candidates.push(c),
        }
    }

    let (on_line, off_line): (Vec<&Clump>, Vec<&Clump>) = candidates.into_iter().partition(|c| {
        line_makers.iter().any(|l| distance_to_axis(c.centroid, l) <= rules.line_band_width)
    });
    removed.extend(
        on_line
            .into_iter()
            .map(|c| RemovedClump { clump: c.clone(), reason: RemovalReason::OnLineOfLongThin }),
    );

    let mut kept = Vec::new();
    for (i, c) in off_line.iter().enumerate() {
        let isolated = rules.isolation_radius.is_some_and(|radius| {
            let nearest = off_line
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, o)| (o.centroid.0 - c.centroid.0).hypot(o.centroid.1 - c.centroid.1))
                .fold(f64::INFINITY, f64::min);
            nearest > radius
        });
        if isolated {
            removed.push(RemovedClump { clump: (*c).clone(), reason: RemovalReason::Isolated });
        } else {
            kept.push((*c).clone());
        }
    }
    removed.sort_by_key(|r| r.clump.first_pixel);
    Ok(CleanReport { kept, removed })
}

/// One point per kept clump at its centroid, scaled to metres when a scale
/// (metres per pixel) is given.
pub fn clumps_to_points(report: &CleanReport, scale: Option<f64>) -> Result<PointPattern> {
    if report.kept.is_empty() {
        return Err(Error::degenerate("no clumps survived cleaning"));
    }
    if let Some(s) = scale {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::param(format!("scale must be positive, got {s}")));
        }
    }
    let factor = scale.unwrap_or(1.0);
    let units = if scale.is_some() { Units::Metres } else { Units::Pixels };
    let coords = report
        .kept
        .iter()
        .enumerate()
        .map(|(i, c)| (format!("c{}", i + 1), c.centroid.0 * factor, c.centroid.1 * factor));
    PointPattern::from_coords(coords, units)
}
