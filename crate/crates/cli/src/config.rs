//! Fully resolved run configurations. These are what manifests record and
//! what `rerun` replays.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use quantagrid::circstats::{AxialityThresholds, MixtureConfig};
use quantagrid::gridfit::GridFitConfig;
use quantagrid::measurements::TableFormat;
use quantagrid::postholes::PerpConfig;
use quantagrid::quantogram::{BootstrapConfig, BoundaryConfig, FrequencyGrid};
use quantagrid::rasterclean::{CleanRules, Crop};
use serde::{Deserialize, Serialize};

use crate::args::{
    BoundaryArgs, CleanArgs, FormatArg, GridArgs, GridfitArgs, PerpArgs, QuantogramArgs, RasterArgs,
    SynthArgs,
};
use crate::failure::{Failure, RunResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Quantogram(QuantogramRun),
    Perp(PerpRun),
    Gridfit(GridfitRun),
    Clean(CleanRun),
    Synth(SynthRun),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantogramRun {
    pub input: PathBuf,
    pub format: TableFormat,
    pub centre_lines: bool,
    pub grid: FrequencyGrid,
    pub boundary: Option<BoundaryConfig>,
    pub bootstrap: Option<BootstrapConfig>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterRun {
    pub rules: CleanRules,
    pub crop: Option<Crop>,
    /// Metres per pixel.
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerpRun {
    pub input: PathBuf,
    /// Present when the input is a raster.
    pub raster: Option<RasterRun>,
    pub perp: PerpConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridfitRun {
    pub input: PathBuf,
    pub fit: GridFitConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanRun {
    pub input: PathBuf,
    pub raster: RasterRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRun {
    pub seed: u64,
}

impl RunConfig {
    pub fn seed(&self) -> Option<u64> {
        match self {
            RunConfig::Quantogram(r) => Some(r.seed),
            RunConfig::Perp(r) => Some(r.seed),
            RunConfig::Gridfit(r) => Some(r.seed),
            RunConfig::Clean(_) => None,
            RunConfig::Synth(r) => Some(r.seed),
        }
    }

    pub fn inputs(&self) -> Vec<&Path> {
        match self {
            RunConfig::Quantogram(r) => vec![&r.input],
            RunConfig::Perp(r) => vec![&r.input],
            RunConfig::Gridfit(r) => vec![&r.input],
            RunConfig::Clean(r) => vec![&r.input],
            RunConfig::Synth(_) => vec![],
        }
    }

    /// Check every parameter before touching any data.
    pub fn validate(&self) -> RunResult {
        match self {
            RunConfig::Quantogram(r) => {
                r.grid.validate()?;
                if let Some(b) = &r.boundary {
                    b.validate()?;
                }
                if let Some(b) = &r.bootstrap {
                    if b.n_boot < 2 {
                        return Err(Failure::Config("bootstrap needs at least 2 replicates".into()));
                    }
                    if !(0.0..1.0).contains(&b.jitter_fraction) {
                        return Err(Failure::Config("bootstrap jitter must lie in [0, 1)".into()));
                    }
                }
            }
            RunConfig::Perp(r) => {
                r.perp.validate()?;
                if let Some(raster) = &r.raster {
                    raster.validate()?;
                }
            }
            RunConfig::Gridfit(r) => r.fit.validate()?,
            RunConfig::Clean(r) => r.raster.validate()?,
            RunConfig::Synth(_) => {}
        }
        Ok(())
    }
}

impl RasterRun {
    fn validate(&self) -> RunResult {
        self.rules.validate()?;
        if let Some(s) = self.scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Failure::Config(format!("scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

fn frequency_grid(a: &GridArgs) -> FrequencyGrid {
    FrequencyGrid {
        omega_min: a.omega_min,
        omega_max: a.omega_max,
        step: a.omega_step,
        roi_min: a.roi.0,
        roi_max: a.roi.1,
    }
}

fn boundary(a: &BoundaryArgs, seed: u64) -> Option<BoundaryConfig> {
    (a.nsims > 0).then_some(BoundaryConfig {
        n_sims: a.nsims,
        rank: a.rank,
        jitter_fraction: a.jitter,
        seed,
    })
}

fn raster_run(a: &RasterArgs, isolation_radius: Option<f64>) -> RasterRun {
    RasterRun {
        rules: CleanRules {
            max_elongation: a.max_elongation,
            min_circularity: a.min_circularity,
            line_band_width: a.band_width,
            isolation_radius,
            min_area: a.min_area,
            max_area: a.max_area,
        },
        crop: a.crop,
        scale: a.scale,
    }
}

fn mixture(starts: usize, seed: u64) -> MixtureConfig {
    MixtureConfig { n_starts: starts, seed, ..MixtureConfig::default() }
}

/// Pick the table layout from the header row.
pub fn detect_format(path: &Path) -> RunResult<TableFormat> {
    let file = std::fs::File::open(path).map_err(|e| Failure::io(path.display(), e))?;
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Failure::io(path.display(), e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        return if cols.contains(&"position_m") {
            Ok(TableFormat::MeasurementLines)
        } else if cols.contains(&"width_m") {
            Ok(TableFormat::BuildingDims)
        } else if cols.contains(&"value_m") {
            Ok(TableFormat::Values)
        } else {
            Err(Failure::Input(format!(
                "{}: cannot tell the table layout from header {line:?}; pass --format",
                path.display()
            )))
        };
    }
    Err(Failure::Input(format!("{}: no header row", path.display())))
}

/// Raster inputs are recognised by extension or by a PNM magic number.
pub fn is_raster(path: &Path) -> RunResult<bool> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    if matches!(ext.as_deref(), Some("pbm" | "pgm" | "pnm" | "ppm")) {
        return Ok(true);
    }
    let bytes = std::fs::read(path).map_err(|e| Failure::io(path.display(), e))?;
    Ok(bytes.len() >= 2 && bytes[0] == b'P' && (b'1'..=b'6').contains(&bytes[1]))
}

impl QuantogramArgs {
    pub fn resolve(&self) -> RunResult<RunConfig> {
        let bootstrap = (self.nboot > 0).then_some(BootstrapConfig {
            n_boot: self.nboot,
            jitter_fraction: self.boot_jitter,
            level: 0.95,
            seed: self.seed.wrapping_add(1),
        });
        let mut run = QuantogramRun {
            input: self.input.clone(),
            format: TableFormat::Values,
            centre_lines: !self.no_centre_lines,
            grid: frequency_grid(&self.grid),
            boundary: boundary(&self.boundary, self.seed),
            bootstrap,
            seed: self.seed,
        };
        RunConfig::Quantogram(run.clone()).validate()?;
        run.format = match self.format {
            Some(FormatArg::Lines) => TableFormat::MeasurementLines,
            Some(FormatArg::Dims) => TableFormat::BuildingDims,
            Some(FormatArg::Values) => TableFormat::Values,
            None => detect_format(&self.input)?,
        };
        Ok(RunConfig::Quantogram(run))
    }
}

impl PerpArgs {
    pub fn resolve(&self) -> RunResult<RunConfig> {
        let perp = PerpConfig {
            isolation_radius: self.isolation_radius,
            min_neighbours: self.min_neighbours,
            mixture: mixture(self.starts, self.seed),
            axiality: AxialityThresholds { r2: self.r2, r4: self.r4 },
            threshold: self.threshold,
            link_distance: self.link_distance,
            min_cluster_size: self.min_cluster,
            ..PerpConfig::default()
        };
        let mut run = PerpRun {
            input: self.input.clone(),
            raster: Some(raster_run(&self.raster, self.clump_isolation_radius)),
            perp,
            seed: self.seed,
        };
        RunConfig::Perp(run.clone()).validate()?;
        if !is_raster(&self.input)? {
            run.raster = None;
        }
        Ok(RunConfig::Perp(run))
    }
}

impl GridfitArgs {
    pub fn resolve(&self) -> RunResult<RunConfig> {
        let run = RunConfig::Gridfit(GridfitRun {
            input: self.input.clone(),
            fit: GridFitConfig {
                grid: frequency_grid(&self.grid),
                boundary: boundary(&self.boundary, self.seed),
                mixture: mixture(self.starts, self.seed),
                quantum: self.quantum,
            },
            seed: self.seed,
        });
        run.validate()?;
        Ok(run)
    }
}

impl CleanArgs {
    pub fn resolve(&self) -> RunResult<RunConfig> {
        let run = RunConfig::Clean(CleanRun {
            input: self.input.clone(),
            raster: raster_run(&self.raster, self.isolation_radius),
        });
        run.validate()?;
        Ok(run)
    }
}

impl SynthArgs {
    pub fn resolve(&self) -> RunResult<RunConfig> {
        Ok(RunConfig::Synth(SynthRun { seed: self.seed }))
    }
}
