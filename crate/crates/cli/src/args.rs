use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quantagrid::rasterclean::Crop;
use quantagrid::rng::DEFAULT_SEED;

#[derive(Debug, Parser)]
#[command(
    name = "quantagrid",
    version,
    about = "Quantum-length and grid-layout analysis of archaeological measurements and plans"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cosine quantogram of pooled lengths with a Monte Carlo significance boundary.
    Quantogram(QuantogramArgs),
    /// Perpendicular-structure test and grid clustering of a post-hole pattern.
    Perp(PerpArgs),
    /// Fit two grids to building corners.
    Gridfit(GridfitArgs),
    /// Clean a scanned plan raster down to post-hole centroids.
    Clean(CleanArgs),
    /// Write the seeded synthetic fixtures.
    Synth(SynthArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.05)]
    pub omega_min: f64,
    #[arg(long, default_value_t = 1.2)]
    pub omega_max: f64,
    #[arg(long, default_value_t = 0.001)]
    pub omega_step: f64,
    /// Region of interest in frequency, `a:b` (per metre).
    #[arg(long, value_name = "A:B", default_value = "0.15:0.33", value_parser = parse_roi)]
    pub roi: (f64, f64),
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    /// Monte Carlo replicates for the comparison boundary (0 skips it).
    #[arg(long, default_value_t = 499)]
    pub nsims: usize,
    /// Envelope rank: the boundary is the rank-th highest replicate.
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    /// Multiplicative jitter fraction for the replicates.
    #[arg(long, default_value_t = 0.15)]
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    /// `site,line,orientation,position_m,role`
    Lines,
    /// `building,width_m,depth_m,source`
    Dims,
    /// `value_m[,source]`
    Values,
}

#[derive(Debug, Args)]
pub struct QuantogramArgs {
    /// Measurement table (CSV).
    pub input: PathBuf,
    /// Table layout; detected from the header when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Use face positions as given instead of reducing walls to centre lines.
    #[arg(long)]
    pub no_centre_lines: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub boundary: BoundaryArgs,
    /// Bootstrap replicates for the peak error range (0 skips it).
    #[arg(long, default_value_t = 199)]
    pub nboot: usize,
    /// Smoothing jitter fraction applied to bootstrap resamples.
    #[arg(long, default_value_t = 0.0)]
    pub boot_jitter: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RasterArgs {
    /// Clumps more elongated than this are treated as lines and removed.
    #[arg(long, default_value_t = 3.0)]
    pub max_elongation: f64,
    /// Clumps less circular than this are removed.
    #[arg(long, default_value_t = 0.4)]
    pub min_circularity: f64,
    /// Half-width in pixels of the band along removed lines.
    #[arg(long, default_value_t = 3.0)]
    pub band_width: f64,
    #[arg(long, default_value_t = 3)]
    pub min_area: usize,
    #[arg(long)]
    pub max_area: Option<usize>,
    /// Keep only `[x0, x1) × [y0, y1)`.
    #[arg(long, value_name = "X0,Y0,X1,Y1")]
    pub crop: Option<Crop>,
    /// Metres per pixel; coordinates stay in pixels when omitted.
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PerpArgs {
    /// Points CSV (`id,x,y`) or a PBM/PGM plan raster.
    pub input: PathBuf,
    /// Points with no neighbour within this distance are rejected
    /// (default: 3 × median nearest-neighbour distance).
    #[arg(long)]
    pub isolation_radius: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub min_neighbours: usize,
    /// Single-linkage distance (default: 3 × median nearest-neighbour distance of gridded points).
    #[arg(long)]
    pub link_distance: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub min_cluster: usize,
    /// Posterior probability above which a point counts as gridded.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Resultant-length threshold for doubled angles (collinear structure).
    #[arg(long, default_value_t = 0.5)]
    pub r2: f64,
    /// Resultant-length threshold for quadrupled angles (perpendicular structure).
    #[arg(long, default_value_t = 0.5)]
    pub r4: f64,
    /// EM restarts.
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    /// Isolation radius in pixels for raster clumps.
    #[arg(long)]
    pub clump_isolation_radius: Option<f64>,
    #[command(flatten)]
    pub raster: RasterArgs,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct GridfitArgs {
    /// Corners CSV (`building,corner_index,x,y`).
    pub input: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub boundary: BoundaryArgs,
    /// Also fit grids at this quantum and compare residuals.
    #[arg(long)]
    pub quantum: Option<f64>,
    /// EM restarts.
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    /// PBM/PGM plan raster.
    pub input: PathBuf,
    /// Clumps with no surviving clump within this many pixels are removed.
    #[arg(long)]
    pub isolation_radius: Option<f64>,
    #[command(flatten)]
    pub raster: RasterArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// A `manifest.json` written by an earlier run.
    pub manifest: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

fn parse_roi(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected a:b")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("bad ROI start {a:?}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("bad ROI end {b:?}: {e}"))?;
    Ok((a, b))
}
