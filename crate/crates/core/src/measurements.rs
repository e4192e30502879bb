//! Quantogram inputs: centre-line reduction of wall-face positions,
//! all-pairs differences along measurement lines, pooling, and CSV ingestion
//! of measurement lines, building dimensions and raw length lists.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pooled lengths in metres, each carrying a provenance tag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    values: Vec<f64>,
    tags: Vec<String>,
}

impl MeasurementSet {
    pub fn new(values: Vec<f64>, tags: Vec<String>) -> Result<Self> {
        if values.len() != tags.len() {
            return Err(Error::input(format!("{} values but {} tags", values.len(), tags.len())));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::input(format!("measurement {bad} is not a positive finite length")));
        }
        Ok(Self { values, tags })
    }

    /// All values share one tag.
    pub fn tagged(values: Vec<f64>, tag: &str) -> Result<Self> {
        let tags = vec![tag.to_string(); values.len()];
        Self::new(values, tags)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The subset carrying `tag`.
    pub fn select(&self, tag: &str) -> MeasurementSet {
        let (values, tags) = self
            .values
            .iter()
            .zip(&self.tags)
            .filter(|(_, t)| *t == tag)
            .map(|(v, t)| (*v, t.clone()))
            .unzip();
        MeasurementSet { values, tags }
    }

    /// Values sorted, for multiset comparison.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineOrientation {
    #[serde(rename = "E-W")]
    EastWest,
    #[serde(rename = "N-S")]
    NorthSouth,
}

impl std::str::FromStr for LineOrientation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "E-W" | "EW" | "W-E" | "WE" => Ok(LineOrientation::EastWest),
            "N-S" | "NS" | "S-N" | "SN" => Ok(LineOrientation::NorthSouth),
            other => Err(format!("unknown orientation {other:?} (expected E-W or N-S)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceRole {
    InsideFace,
    OutsideFace,
    ObjectBoundary,
    /// Midpoint of a face pair, produced by [`centre_lines`].
    Centre,
}

impl FaceRole {
    fn is_face(self) -> bool {
        matches!(self, FaceRole::InsideFace | FaceRole::OutsideFace)
    }
}

impl std::str::FromStr for FaceRole {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "inside" | "insideface" => Ok(FaceRole::InsideFace),
            "outside" | "outsideface" => Ok(FaceRole::OutsideFace),
            "object" | "objectboundary" => Ok(FaceRole::ObjectBoundary),
            "centre" | "center" | "centreline" | "centerline" => Ok(FaceRole::Centre),
            other => Err(format!(
                "unknown role {other:?} (expected inside, outside, object or centre)"
            )),
        }
    }
}

/// Ordered positions along one measurement line of one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementLine {
    pub site_id: String,
    pub line_id: String,
    pub orientation: LineOrientation,
    pub positions: Vec<f64>,
    pub roles: Vec<FaceRole>,
}

impl MeasurementLine {
    pub fn new(
        site_id: impl Into<String>,
        line_id: impl Into<String>,
        orientation: LineOrientation,
        positions: Vec<f64>,
        roles: Vec<FaceRole>,
    ) -> Result<Self> {
        let line = Self {
            site_id: site_id.into(),
            line_id: line_id.into(),
            orientation,
            positions,
            roles,
        };
        line.validate()?;
        Ok(line)
    }

    fn validate(&self) -> Result<()> {
        if self.positions.len() != self.roles.len() {
            return Err(Error::input(format!(
                "line {}: {} positions but {} roles",
                self.label(),
                self.positions.len(),
                self.roles.len()
            )));
        }
        if self.positions.len() < 2 {
            return Err(Error::input(format!("line {} has fewer than 2 positions", self.label())));
        }
        if self.positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::input(format!("line {} has a non-finite position", self.label())));
        }
        Ok(())
    }

    /// `site/line`, used as provenance tag.
    pub fn label(&self) -> String {
        format!("{}/{}", self.site_id, self.line_id)
    }
}

/// Replace each consecutive pair of wall faces with its midpoint; object
/// boundaries are kept and listed twice.
pub fn centre_lines(line: &MeasurementLine) -> Result<MeasurementLine> {
    let n_faces = line.roles.iter().filter(|r| r.is_face()).count();
    if n_faces % 2 != 0 {
        return Err(Error::Pairing {
            line: line.label(),
            msg: format!("{n_faces} wall-face positions cannot be paired"),
        });
    }
    let mut positions = Vec::new();
    let mut roles = Vec::new();
    let mut open_face: Option<f64> = None;
    for (&p, &role) in line.positions.iter().zip(&line.roles) {
        if role.is_face() {
            match open_face.take() {
                None => open_face = Some(p),
                Some(first) => {
                    positions.push(0.5 * (first + p));
                    roles.push(FaceRole::Centre);
                }
            }
        } else {
            let copies = if role == FaceRole::ObjectBoundary { 2 } else { 1 };
            for _ in 0..copies {
                positions.push(p);
                roles.push(role);
            }
        }
    }
    Ok(MeasurementLine {
        site_id: line.site_id.clone(),
        line_id: line.line_id.clone(),
        orientation: line.orientation,
        positions,
        roles,
    })
}

/// Absolute differences of a list of coordinates over all pairs `i < j`,
/// exact zeros excluded.
pub fn pair_differences(positions: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(positions.len() * positions.len().saturating_sub(1) / 2);
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[i + 1..] {
            let d = (b - a).abs();
            if d > 0.0 {
                out.push(d);
            }
        }
    }
    out
}

pub fn all_pair_differences(line: &MeasurementLine) -> Result<MeasurementSet> {
    if line.positions.len() < 2 {
        return Err(Error::input(format!("line {} has fewer than 2 positions", line.label())));
    }
    MeasurementSet::tagged(pair_differences(&line.positions), &line.label())
}

/// Multiset union, provenance preserved.
pub fn pool<'a>(sets: impl IntoIterator<Item = &'a MeasurementSet>) -> MeasurementSet {
    let mut out = MeasurementSet::default();
    for s in sets {
        out.values.extend_from_slice(&s.values);
        out.tags.extend(s.tags.iter().cloned());
    }
    out
}

/// Differences per line (after centre-line reduction when requested), pooled.
pub fn lines_to_measurements(lines: &[MeasurementLine], use_centre_lines: bool) -> Result<MeasurementSet> {
    let mut sets = Vec::with_capacity(lines.len());
    for line in lines {
        let reduced;
        let line = if use_centre_lines {
            reduced = centre_lines(line)?;
            &reduced
        } else {
            line
        };
        // A wall reduced to a single centre line has no differences.
        if line.positions.len() >= 2 {
            sets.push(all_pair_differences(line)?);
        }
    }
    Ok(pool(&sets))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingDims {
    pub building_id: String,
    pub width: f64,
    pub depth: f64,
    pub source_table: String,
}

/// Each width and each depth becomes one measurement, tagged by source table.
pub fn dims_to_measurements(dims: &[BuildingDims]) -> Result<MeasurementSet> {
    let mut values = Vec::with_capacity(dims.len() * 2);
    let mut tags = Vec::with_capacity(dims.len() * 2);
    for d in dims {
        for v in [d.width, d.depth] {
            values.push(v);
            tags.push(d.source_table.clone());
        }
    }
    MeasurementSet::new(values, tags)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|source| Error::Csv { path: path.to_path_buf(), source })
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, required: &[&str]) -> Result<()> {
    let headers = rdr
        .headers()
        .map_err(|source| Error::Csv { path: path.to_path_buf(), source })?
        .clone();
    for col in required {
        if !headers.iter().any(|h| h == *col) {
            return Err(Error::Row {
                path: path.to_path_buf(),
                row: 1,
                msg: format!("missing column {col:?} (header must be {})", required.join(",")),
            });
        }
    }
    Ok(())
}

/// Deserialize every record of a headed CSV, reporting 1-based file rows.
pub(crate) fn read_records<T: serde::de::DeserializeOwned>(
    path: &Path,
    required: &[&str],
) -> Result<Vec<(usize, T)>> {
    let mut rdr = csv_reader(path)?;
    check_header(path, &mut rdr, required)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<T>() {
        match rec {
            Ok(r) => out.push((out.len() + 2, r)),
            Err(e) => {
                let row = e.position().map_or(out.len() + 2, |p| p.line() as usize);
                return Err(Error::Row { path: path.to_path_buf(), row, msg: e.to_string() });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Row { path: path.to_path_buf(), row: 1, msg: "no data rows".into() });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct LineRow {
    site: String,
    line: String,
    orientation: String,
    position_m: f64,
    role: String,
}

#[derive(Deserialize)]
struct DimsRow {
    building: String,
    width_m: f64,
    depth_m: f64,
    source: String,
}

#[derive(Deserialize)]
struct ValueRow {
    value_m: f64,
    #[serde(default)]
    source: Option<String>,
}

/// `site,line,orientation,position_m,role`; rows of one line appear in
/// order along the line. Lines keep their order of first appearance.
pub fn load_lines(path: &Path) -> Result<Vec<MeasurementLine>> {
    let rows: Vec<(usize, LineRow)> =
        read_records(path, &["site", "line", "orientation", "position_m", "role"])?;
    let row_err = |row: usize, msg: String| Error::Row { path: path.to_path_buf(), row, msg };
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut lines: Vec<MeasurementLine> = Vec::new();
    for (row, r) in rows {
        let orientation: LineOrientation = r.orientation.parse().map_err(|m| row_err(row, m))?;
        let role: FaceRole = r.role.parse().map_err(|m| row_err(row, m))?;
        if !r.position_m.is_finite() {
            return Err(row_err(row, "position is not finite".into()));
        }
        let key = (r.site.clone(), r.line.clone());
        let slot = *index.entry(key).or_insert_with(|| {
            lines.push(MeasurementLine {
                site_id: r.site.clone(),
                line_id: r.line.clone(),
                orientation,
                positions: Vec::new(),
                roles: Vec::new(),
            });
            lines.len() - 1
        });
        let line = &mut lines[slot];
        if line.orientation != orientation {
            return Err(row_err(row, format!("orientation changes within line {}", line.label())));
        }
        line.positions.push(r.position_m);
        line.roles.push(role);
    }
    for line in &lines {
        line.validate()?;
    }
    Ok(lines)
}

/// `building,width_m,depth_m,source`.
pub fn load_dims(path: &Path) -> Result<Vec<BuildingDims>> {
    let rows: Vec<(usize, DimsRow)> =
        read_records(path, &["building", "width_m", "depth_m", "source"])?;
    rows.into_iter()
        .map(|(row, r)| {
            for (name, v) in [("width_m", r.width_m), ("depth_m", r.depth_m)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Row {
                        path: path.to_path_buf(),
                        row,
                        msg: format!("{name} = {v} must be a positive length"),
                    });
                }
            }
            Ok(BuildingDims {
                building_id: r.building,
                width: r.width_m,
                depth: r.depth_m,
                source_table: r.source,
            })
        })
        .collect()
}

/// `value_m[,source]`: one length per row.
pub fn load_values(path: &Path) -> Result<MeasurementSet> {
    let rows: Vec<(usize, ValueRow)> = read_records(path, &["value_m"])?;
    let mut values = Vec::with_capacity(rows.len());
    let mut tags = Vec::with_capacity(rows.len());
    for (row, r) in rows {
        if !(r.value_m.is_finite() && r.value_m > 0.0) {
            return Err(Error::Row {
                path: path.to_path_buf(),
                row,
                msg: format!("value_m = {} must be a positive length", r.value_m),
            });
        }
        values.push(r.value_m);
        tags.push(r.source.unwrap_or_default());
    }
    MeasurementSet::new(values, tags)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableFormat {
    MeasurementLines,
    BuildingDims,
    Values,
}

/// Read any supported table and reduce it to a measurement set.
pub fn load_measurements(path: &Path, format: TableFormat, use_centre_lines: bool) -> Result<MeasurementSet> {
    match format {
        TableFormat::MeasurementLines => lines_to_measurements(&load_lines(path)?, use_centre_lines),
        TableFormat::BuildingDims => dims_to_measurements(&load_dims(path)?),
        TableFormat::Values => load_values(path),
    }
}
