//! The pipelines behind each subcommand.

use std::collections::BTreeMap;
use std::path::Path;

use quantagrid::circstats::{Axiality, MixtureFit};
use quantagrid::gridfit::{
    fit_grids, histogram_rotation_for_plot, load_buildings, ClusterFrame, GridAssignment, GridFit,
    GridModel, ResidualSummary,
};
use quantagrid::measurements::load_measurements;
use quantagrid::postholes::{analyse_pattern, PerpReport, PointPattern, Units};
use quantagrid::quantogram::{
    cosine_quantogram, estimate_error_range, find_peak, simulate_boundary, BoundaryCurve, FrequencyGrid,
    Peak, PeakReport, QuantogramCurve,
};
use quantagrid::rasterclean::{
    clumps_to_points, connected_components, filter_clumps, BinaryRaster, CleanReport, CleanRules, Crop,
    RemovalReason,
};
use quantagrid::synth;
use serde::Serialize;

use crate::config::{CleanRun, GridfitRun, PerpRun, QuantogramRun, RasterRun, RunConfig, SynthRun};
use crate::failure::RunResult;
use crate::output::{opt, Manifest, OutDir};
use crate::svg::{bounds, cluster_colour, pad, Frame, Stroke, Svg};

/// Validate, record the manifest, then run.
pub fn execute(config: RunConfig, out: &Path) -> RunResult {
    config.validate()?;
    let manifest = Manifest::new(config)?;
    let dir = OutDir::create(out)?;
    dir.manifest(&manifest)?;
    match &manifest.config {
        RunConfig::Quantogram(r) => quantogram(r, &dir),
        RunConfig::Perp(r) => perp(r, &dir),
        RunConfig::Gridfit(r) => gridfit(r, &dir),
        RunConfig::Clean(r) => clean(r, &dir),
        RunConfig::Synth(r) => synthesize(r, &dir),
    }
}

fn curve_rows(curve: &QuantogramCurve, boundary: Option<&BoundaryCurve>) -> Vec<Vec<String>> {
    curve
        .frequencies
        .iter()
        .zip(&curve.heights)
        .enumerate()
        .map(|(j, (f, h))| {
            vec![
                f.to_string(),
                (1.0 / f).to_string(),
                h.to_string(),
                opt(boundary.map(|b| b.boundary_heights[j])),
            ]
        })
        .collect()
}

fn quantogram_svg(
    title: &str,
    curve: &QuantogramCurve,
    boundary: Option<&BoundaryCurve>,
    grid: &FrequencyGrid,
    report: &PeakReport,
) -> String {
    let ys = curve.heights.iter().chain(boundary.iter().flat_map(|b| &b.boundary_heights));
    let (lo, hi) = ys.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let mut svg = Svg::new(Frame::chart((grid.omega_min, grid.omega_max), pad((lo, hi), 0.05)), title);
    svg.axes("frequency ω (1/m)", "φ(ω)");
    let pts: Vec<(f64, f64)> = curve.frequencies.iter().copied().zip(curve.heights.iter().copied()).collect();
    let data = Stroke::solid("black", 1.0);
    let dotted = Stroke::dashed("black", 1.0, "1,3");
    let roi = Stroke::dashed("#777777", 0.5, "2,2");
    let peak = Stroke::solid("black", 1.5);
    svg.polyline(&pts, &data);
    if let Some(b) = boundary {
        let bp: Vec<(f64, f64)> =
            b.frequencies.iter().copied().zip(b.boundary_heights.iter().copied()).collect();
        svg.polyline(&bp, &dotted);
    }
    svg.vline(grid.roi_min, &roi);
    svg.vline(grid.roi_max, &roi);
    if let Some(p) = report.primary {
        svg.vline(p.frequency, &peak);
    }
    svg.legend(0, "quantogram", &data);
    if boundary.is_some() {
        svg.legend(1, "comparison boundary", &dotted);
    }
    svg.legend(2, "region of interest", &roi);
    if let Some(p) = report.primary {
        svg.legend(3, &format!("peak q = {:.3} m", p.quantum), &peak);
    }
    svg.finish()
}

#[derive(Serialize)]
struct QuantogramSummary<'a> {
    n_values: usize,
    grid: &'a FrequencyGrid,
    report: &'a PeakReport,
    /// Highest local maximum over the whole grid.
    dominant: Option<Peak>,
    /// The dominant peak lies outside the region of interest.
    dominant_outside_roi: bool,
    n_sims: Option<usize>,
    rank: Option<usize>,
}

fn quantogram(run: &QuantogramRun, dir: &OutDir) -> RunResult {
    let data = load_measurements(&run.input, run.format, run.centre_lines)?;
    let curve = cosine_quantogram(&data, &run.grid)?;
    let boundary = run.boundary.as_ref().map(|b| simulate_boundary(&data, &run.grid, b)).transpose()?;
    let mut report = find_peak(&curve, boundary.as_ref(), &run.grid)?;
    if let (Some(b), Some(_)) = (&run.bootstrap, report.primary) {
        match estimate_error_range(&data, &run.grid, b) {
            Ok(range) => report.error_range = Some(range),
            Err(e) => report.diagnostic = Some(format!("error range unavailable: {e}")),
        }
    }
    let dominant = report.dominant();
    dir.table("curve.csv", &["frequency", "quantum", "height", "boundary"], curve_rows(&curve, boundary.as_ref()))?;
    if let Some(b) = &boundary {
        dir.table(
            "boundary.csv",
            &["frequency", "quantum", "boundary"],
            b.frequencies
                .iter()
                .zip(&b.boundary_heights)
                .map(|(f, h)| vec![f.to_string(), (1.0 / f).to_string(), h.to_string()]),
        )?;
    }
    dir.json(
        "peak.json",
        &QuantogramSummary {
            n_values: data.len(),
            grid: &run.grid,
            report: &report,
            dominant,
            dominant_outside_roi: dominant.is_some_and(|d| !d.in_roi),
            n_sims: run.boundary.map(|b| b.n_sims),
            rank: run.boundary.map(|b| b.rank),
        },
    )?;
    let title = format!("Cosine quantogram, N = {}", data.len());
    dir.svg("quantogram.svg", &quantogram_svg(&title, &curve, boundary.as_ref(), &run.grid, &report))?;

    match report.primary {
        Some(p) => println!(
            "peak in region of interest: q = {:.4} m (ω = {:.4}), height {:.3}{}",
            p.quantum,
            p.frequency,
            p.height,
            match report.exceeds_boundary {
                Some(true) => ", above the comparison boundary",
                Some(false) => ", below the comparison boundary",
                None => "",
            }
        ),
        None => println!("no peak in the region of interest"),
    }
    if let Some(d) = dominant.filter(|d| !d.in_roi) {
        println!("dominant peak outside the region of interest: q = {:.4} m (ω = {:.4})", d.quantum, d.frequency);
    }
    Ok(())
}

fn clean_raster(input: &Path, raster: &RasterRun) -> RunResult<(BinaryRaster, CleanReport)> {
    let image = BinaryRaster::load(input)?;
    let image = match raster.crop {
        Some(c) => image.cropped(c)?,
        None => image,
    };
    let report = filter_clumps(&connected_components(&image), &raster.rules)?;
    Ok((image, report))
}

#[derive(Serialize)]
struct CleanSummary<'a> {
    width: usize,
    height: usize,
    rules: &'a CleanRules,
    crop: Option<Crop>,
    scale: Option<f64>,
    n_clumps: usize,
    n_kept: usize,
    removed_by_reason: BTreeMap<String, usize>,
    report: &'a CleanReport,
}

fn reason_name(r: RemovalReason) -> String {
    serde_json::to_value(r).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn write_clean(dir: &OutDir, image: &BinaryRaster, raster: &RasterRun, report: &CleanReport) -> RunResult {
    let mut removed_by_reason = BTreeMap::new();
    for r in &report.removed {
        *removed_by_reason.entry(reason_name(r.reason)).or_insert(0) += 1;
    }
    dir.json(
        "clean.json",
        &CleanSummary {
            width: image.width(),
            height: image.height(),
            rules: &raster.rules,
            crop: raster.crop,
            scale: raster.scale,
            n_clumps: report.kept.len() + report.removed.len(),
            n_kept: report.kept.len(),
            removed_by_reason,
            report,
        },
    )?;

    let frame = Frame::map((0.0, image.width() as f64), (0.0, image.height() as f64), true);
    let mut svg = Svg::new(frame, "Cleaned plan: kept (triangles) and removed (circles)");
    svg.axes("x (pixels)", "y (pixels)");
    for r in &report.removed {
        svg.circle(r.clump.centroid, 3.0, "#d1495b", "none");
    }
    for k in &report.kept {
        svg.triangle(k.centroid, 7.0, "black", "#1b6ca8");
    }
    if let Some(c) = raster.crop {
        let s = Stroke::dashed("#777777", 0.5, "2,2");
        let (x0, y0, x1, y1) = (c.x0 as f64, c.y0 as f64, c.x1 as f64, c.y1 as f64);
        svg.segment((x0, y0), (x1, y0), &s);
        svg.segment((x1, y0), (x1, y1), &s);
        svg.segment((x1, y1), (x0, y1), &s);
        svg.segment((x0, y1), (x0, y0), &s);
    }
    dir.svg("overlay.svg", &svg.finish())
}

fn clean(run: &CleanRun, dir: &OutDir) -> RunResult {
    let (image, report) = clean_raster(&run.input, &run.raster)?;
    write_clean(dir, &image, &run.raster, &report)?;
    let points = clumps_to_points(&report, run.raster.scale)?;
    dir.csv("points.csv", |w| points.write_csv(w))?;
    println!("{} clumps kept, {} removed", report.kept.len(), report.removed.len());
    Ok(())
}

#[derive(Serialize)]
struct PerpSummary<'a> {
    units: Units,
    n_points: usize,
    n_accepted: usize,
    n_gridded: usize,
    n_clusters: usize,
    isolation_radius: f64,
    link_distance: Option<f64>,
    verdict: Axiality,
    report: &'a PerpReport,
}

fn perp(run: &PerpRun, dir: &OutDir) -> RunResult {
    let pattern = match &run.raster {
        Some(raster) => {
            let (image, report) = clean_raster(&run.input, raster)?;
            write_clean(dir, &image, raster, &report)?;
            clumps_to_points(&report, raster.scale)?
        }
        None => PointPattern::load(&run.input)?,
    };
    let analysis = analyse_pattern(&pattern, &run.perp)?;
    let labelled = &analysis.pattern;
    dir.csv("points.csv", |w| labelled.write_csv(w))?;
    dir.table(
        "histogram.csv",
        &["bin_start_deg", "bin_end_deg", "count"],
        analysis.histogram.iter().map(|(a, b, c)| vec![a.to_string(), b.to_string(), c.to_string()]),
    )?;
    let n_gridded = labelled.gridded().count();
    dir.json(
        "perp.json",
        &PerpSummary {
            units: labelled.units,
            n_points: labelled.len(),
            n_accepted: labelled.accepted().count(),
            n_gridded,
            n_clusters: analysis.n_clusters,
            isolation_radius: analysis.isolation_radius,
            link_distance: analysis.link_distance,
            verdict: analysis.report.axiality.classification,
            report: &analysis.report,
        },
    )?;

    let max = analysis.histogram.iter().map(|h| h.2).max().unwrap_or(1).max(1) as f64;
    let mut hist = Svg::new(
        Frame::chart((0.0, 90.0), (0.0, max * 1.1)),
        "Nearest-neighbour orientations (mod 90°)",
    );
    hist.axes("orientation (degrees)", "count");
    for (a, b, c) in &analysis.histogram {
        hist.bar(*a, *b, *c as f64, "#cccccc");
    }
    hist.vline(analysis.report.grid_orientation, &Stroke::solid("black", 1.5));
    dir.svg("histogram.svg", &hist.finish())?;

    let (xr, yr) = bounds(labelled.points.iter().map(|p| (p.x, p.y)));
    let y_down = labelled.units == Units::Pixels;
    let mut map = Svg::new(Frame::map(pad(xr, 0.05), pad(yr, 0.05), y_down), "Post-holes by grid cluster");
    let unit = if y_down { "pixels" } else { "m" };
    map.axes(&format!("x ({unit})"), &format!("y ({unit})"));
    for p in &labelled.points {
        match (p.accepted, p.gridded, p.cluster) {
            (false, _, _) => map.cross((p.x, p.y), 5.0, "#999999"),
            (true, Some(true), Some(c)) => map.triangle((p.x, p.y), 7.0, "black", cluster_colour(c)),
            (true, Some(true), None) => map.triangle((p.x, p.y), 7.0, "black", "white"),
            _ => map.circle((p.x, p.y), 2.5, "black", "none"),
        }
    }
    dir.svg("points.svg", &map.finish())?;

    println!(
        "{:?}: r2 = {:.3}, r4 = {:.3}; grid orientation {:.2}°, gridded fraction {:.3}; {} of {} points gridded in {} clusters",
        analysis.report.axiality.classification,
        analysis.report.axiality.r2,
        analysis.report.axiality.r4,
        analysis.report.grid_orientation,
        analysis.report.gridded_fraction,
        n_gridded,
        labelled.len(),
        analysis.n_clusters
    );
    Ok(())
}

#[derive(Serialize)]
struct AssignmentSummary<'a> {
    mixture: Option<&'a MixtureFit>,
    /// Grid orientations in degrees, grid 1 first.
    orientations: Vec<f64>,
    assignments: &'a [GridAssignment],
    unassigned: Vec<&'a str>,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct CompendiumSummary<'a> {
    n_values: usize,
    values_per_axis: BTreeMap<String, usize>,
    report: &'a PeakReport,
    fitted_quantum: Option<f64>,
}

#[derive(Serialize)]
struct GridsSummary<'a> {
    quantum: f64,
    models: &'a [GridModel],
    summary: &'a ResidualSummary,
    residuals: &'a [quantagrid::gridfit::CornerResidual],
}

#[derive(Serialize)]
struct Comparison<'a> {
    fitted: &'a ResidualSummary,
    alternative: &'a ResidualSummary,
    /// Which quantum leaves the smaller mean per-axis residual.
    better: &'static str,
    alternative_models: &'a [GridModel],
}

fn grids_svg(title: &str, clusters: &[ClusterFrame], fit: &GridFit, unassigned: &[(f64, f64)]) -> String {
    let lines: Vec<_> = fit.models.iter().flat_map(|m| m.lines().into_iter().map(move |l| (m.cluster, l))).collect();
    let all = clusters
        .iter()
        .flat_map(|c| c.world.iter().copied())
        .chain(unassigned.iter().copied())
        .chain(lines.iter().flat_map(|(_, (a, b))| [*a, *b]));
    let (xr, yr) = bounds(all);
    let mut svg = Svg::new(Frame::map(pad(xr, 0.02), pad(yr, 0.02), false), title);
    svg.axes("x (m)", "y (m)");
    for (cluster, (a, b)) in &lines {
        svg.segment(*a, *b, &Stroke::solid(cluster_colour(*cluster), 0.4));
    }
    for c in clusters {
        for p in &c.world {
            svg.triangle(*p, 7.0, "black", cluster_colour(c.cluster));
        }
    }
    for p in unassigned {
        svg.circle(*p, 3.5, "black", "white");
    }
    svg.finish()
}

fn gridfit(run: &GridfitRun, dir: &OutDir) -> RunResult {
    let buildings = load_buildings(&run.input)?;
    let a = fit_grids(&buildings, &run.fit)?;
    let unassigned: Vec<&str> =
        a.assignments.iter().filter(|x| x.cluster.is_none()).map(|x| x.building.as_str()).collect();
    dir.json(
        "assignments.json",
        &AssignmentSummary {
            mixture: a.mixture.as_ref(),
            orientations: a.clusters.iter().map(|c| c.orientation).collect(),
            assignments: &a.assignments,
            unassigned: unassigned.clone(),
            warnings: &a.warnings,
        },
    )?;
    dir.table(
        "compendium_values.csv",
        &["value_m", "source"],
        a.compendium.values().iter().zip(a.compendium.tags()).map(|(v, t)| vec![v.to_string(), t.clone()]),
    )?;
    dir.table(
        "compendium_curve.csv",
        &["frequency", "quantum", "height", "boundary"],
        curve_rows(&a.curve, a.boundary.as_ref()),
    )?;
    let mut values_per_axis = BTreeMap::new();
    for t in a.compendium.tags() {
        *values_per_axis.entry(t.clone()).or_insert(0) += 1;
    }
    dir.json(
        "compendium.json",
        &CompendiumSummary {
            n_values: a.compendium.len(),
            values_per_axis,
            report: &a.peak,
            fitted_quantum: a.fitted_quantum,
        },
    )?;
    dir.svg(
        "compendium.svg",
        &quantogram_svg("Compendium quantogram", &a.curve, a.boundary.as_ref(), &run.fit.grid, &a.peak),
    )?;

    let mut edge_hist = [0usize; 18];
    let shown = histogram_rotation_for_plot(&a.edges.iter().map(|e| e.orientation).collect::<Vec<_>>(), 45.0);
    for o in shown {
        edge_hist[((o / 5.0) as usize).min(17)] += 1;
    }
    let max = *edge_hist.iter().max().unwrap_or(&1) as f64;
    let mut hist = Svg::new(
        Frame::chart((0.0, 90.0), (0.0, max.max(1.0) * 1.1)),
        "Edge orientations (mod 90°, shifted by 45° for display)",
    );
    hist.axes("orientation + 45 (degrees, mod 90)", "count");
    for (i, c) in edge_hist.iter().enumerate() {
        hist.bar(5.0 * i as f64, 5.0 * (i + 1) as f64, *c as f64, "#cccccc");
    }
    dir.svg("edge_histogram.svg", &hist.finish())?;

    let by_id: BTreeMap<&str, &quantagrid::gridfit::Building> =
        buildings.iter().map(|b| (b.id.as_str(), b)).collect();
    let loose: Vec<(f64, f64)> =
        unassigned.iter().flat_map(|id| by_id[id].corners.iter().copied()).collect();
    let q = a.fit.summary.quantum;
    dir.json("grids.json", &GridsSummary { quantum: q, models: &a.fit.models, summary: &a.fit.summary, residuals: &a.fit.residuals })?;
    dir.svg("grids.svg", &grids_svg(&format!("Fitted grids, quantum {q:.3} m"), &a.clusters, &a.fit, &loose))?;
    if let Some(alt) = &a.comparison {
        let qa = alt.summary.quantum;
        dir.svg("grids_alt.svg", &grids_svg(&format!("Fitted grids, quantum {qa:.3} m"), &a.clusters, alt, &loose))?;
        let better = if a.fit.summary.mean_abs_axis_residual <= alt.summary.mean_abs_axis_residual {
            "fitted"
        } else {
            "alternative"
        };
        dir.json(
            "comparison.json",
            &Comparison {
                fitted: &a.fit.summary,
                alternative: &alt.summary,
                better,
                alternative_models: &alt.models,
            },
        )?;
    }

    for w in &a.warnings {
        eprintln!("warning: {w}");
    }
    for c in &a.clusters {
        let n = a.assignments.iter().filter(|x| x.cluster == Some(c.cluster)).count();
        println!("grid {}: orientation {:.2}°, {n} buildings", c.cluster, c.orientation);
    }
    if !unassigned.is_empty() {
        println!("unassigned: {}", unassigned.join(", "));
    }
    match a.fitted_quantum {
        Some(fq) => println!("compendium quantum {fq:.4} m; mean per-axis residual {:.3} m", a.fit.summary.mean_abs_axis_residual),
        None => println!("no compendium peak; grids fitted at {q:.4} m"),
    }
    if let Some(alt) = &a.comparison {
        println!(
            "at {:.4} m: mean per-axis residual {:.3} m",
            alt.summary.quantum, alt.summary.mean_abs_axis_residual
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct Truth {
    planted_lengths: PlantedTruth,
    lattice_points: LatticeTruth,
    two_grid_corners: TwoGridTruth,
    plan: PlanTruth,
}

#[derive(Serialize)]
struct PlantedTruth {
    n: usize,
    quantum: f64,
    sigma: f64,
}

#[derive(Serialize)]
struct LatticeTruth {
    orientation_deg: f64,
    lattice_ids: Vec<String>,
}

#[derive(Serialize)]
struct TwoGridTruth {
    quantum: f64,
    orientations: [f64; 2],
    offsets: [(f64, f64); 2],
    assignments: BTreeMap<String, Option<usize>>,
}

#[derive(Serialize)]
struct PlanTruth {
    dot_count: usize,
    legend_dots: usize,
    plan_crop: Crop,
    dot_centres: Vec<(f64, f64)>,
}

fn synthesize(run: &SynthRun, dir: &OutDir) -> RunResult {
    let seed = run.seed;
    let lengths = synth::planted_lengths(seed, 200, 4.32, 0.05);
    dir.table("planted_lengths.csv", &["value_m", "source"], lengths.iter().map(|v| vec![v.to_string(), "planted".into()]))?;

    let lattice = synth::two_lattice_pattern(seed);
    dir.csv("lattice_points.csv", |w| lattice.pattern.write_csv(w))?;
    let noise = synth::noise_pattern(seed, 150, 100.0, 80.0);
    dir.csv("noise_points.csv", |w| noise.write_csv(w))?;

    let grids = synth::two_grid_buildings(seed);
    dir.table(
        "two_grid_corners.csv",
        &["building", "corner_index", "x", "y"],
        grids.buildings.iter().flat_map(|b| {
            b.corners
                .iter()
                .enumerate()
                .map(|(i, (x, y))| vec![b.id.clone(), i.to_string(), x.to_string(), y.to_string()])
        }),
    )?;

    let plan = synth::plan_raster(seed);
    dir.raw("plan.pbm", plan.raster.to_pbm().as_bytes())?;

    dir.json(
        "truth.json",
        &Truth {
            planted_lengths: PlantedTruth { n: lengths.len(), quantum: 4.32, sigma: 0.05 },
            lattice_points: LatticeTruth {
                orientation_deg: lattice.orientation_deg,
                lattice_ids: lattice.lattice_ids,
            },
            two_grid_corners: TwoGridTruth {
                quantum: grids.quantum,
                orientations: grids.orientations,
                offsets: grids.offsets,
                assignments: grids.truth,
            },
            plan: PlanTruth {
                dot_count: plan.dot_centres.len(),
                legend_dots: plan.legend_dots,
                plan_crop: plan.plan_crop,
                dot_centres: plan.dot_centres,
            },
        },
    )?;
    println!("fixtures written");
    Ok(())
}
