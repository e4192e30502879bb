use std::fmt::Write as _;
use std::fs;

use quantagrid::circstats::Axiality;
use quantagrid::gridfit::{fit_grids, load_buildings, GridFitConfig};
use quantagrid::measurements::{load_measurements, TableFormat};
use quantagrid::postholes::{analyse_pattern, PerpConfig};
use quantagrid::quantogram::{cosine_quantogram, find_peak, FrequencyGrid};
use quantagrid::rasterclean::{clumps_to_points, connected_components, filter_clumps, BinaryRaster, CleanRules};
use quantagrid::{synth, ErrorKind};

/// Wall faces straddling centre lines on multiples of 4.5 m; the faces
/// themselves sit 0.4 m either side.
fn write_lines(path: &std::path::Path) {
    let mut csv = String::from("site,line,orientation,position_m,role\n");
    let layouts: [&[i32]; 4] = [&[0, 2, 5, 6], &[0, 1, 4, 7, 9], &[0, 3, 4, 8], &[0, 2, 3, 6, 10]];
    for (l, cells) in layouts.iter().enumerate() {
        let orientation = if l % 2 == 0 { "E-W" } else { "N-S" };
        for &k in *cells {
            let c = 10.0 + 4.5 * k as f64;
            writeln!(csv, "A,L{l},{orientation},{:.2},outside", c - 0.4).unwrap();
            writeln!(csv, "A,L{l},{orientation},{:.2},inside", c + 0.4).unwrap();
        }
    }
    fs::write(path, csv).unwrap();
}

#[test]
fn centre_lines_recover_the_module() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lines.csv");
    write_lines(&path);
    let grid = FrequencyGrid::default();

    let centred = load_measurements(&path, TableFormat::MeasurementLines, true).unwrap();
    let report = find_peak(&cosine_quantogram(&centred, &grid).unwrap(), None, &grid).unwrap();
    let q = report.primary.expect("ROI peak").quantum;
    assert!((q - 4.5).abs() < 0.01, "centre-line quantum {q}");

    let faces = load_measurements(&path, TableFormat::MeasurementLines, false).unwrap();
    assert!(faces.len() > centred.len());
}

#[test]
fn scanned_plan_to_perpendicular_verdict() {
    let fx = synth::plan_raster(8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.pbm");
    fs::write(&path, fx.raster.to_pbm()).unwrap();

    let raster = BinaryRaster::load(&path).unwrap().cropped(fx.plan_crop).unwrap();
    let report = filter_clumps(&connected_components(&raster), &CleanRules::default()).unwrap();
    let points = clumps_to_points(&report, Some(0.1)).unwrap();
    assert_eq!(points.len(), fx.dot_centres.len());

    let a = analyse_pattern(&points, &PerpConfig::default()).unwrap();
    assert_eq!(a.report.axiality.classification, Axiality::Perpendicular);
    assert!(a.report.perpendicular);
    let off = (a.report.grid_orientation - 15.0).abs();
    assert!(off < 2.0, "orientation {}", a.report.grid_orientation);
    assert!(a.n_clusters >= 1);
}

#[test]
fn corner_table_round_trip_feeds_the_grid_fit() {
    let fx = synth::two_grid_buildings(9);
    let mut csv = String::from("building,corner_index,x,y\n");
    for b in &fx.buildings {
        for (i, (x, y)) in b.corners.iter().enumerate() {
            writeln!(csv, "{},{i},{x:.6},{y:.6}", b.id).unwrap();
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corners.csv");
    fs::write(&path, csv).unwrap();

    let loaded = load_buildings(&path).unwrap();
    assert_eq!(loaded.len(), fx.buildings.len());
    let a = fit_grids(&loaded, &GridFitConfig { boundary: None, ..Default::default() }).unwrap();
    for asg in &a.assignments {
        assert_eq!(asg.cluster, fx.truth[&asg.building], "{}", asg.building);
    }
    assert!((a.fitted_quantum.unwrap() - fx.quantum).abs() < 0.1);
    assert_eq!(a.fit.models.len(), 2);
}

#[test]
fn malformed_inputs_are_reported_as_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "building,corner_index,x,y\nA,0,1,2\nA,0,3,4\n").unwrap();
    assert_eq!(load_buildings(&path).unwrap_err().kind(), ErrorKind::Input);

    fs::write(&path, "site,line,orientation,position_m,role\nA,1,E-W,0.0,inside\n").unwrap();
    let err = load_measurements(&path, TableFormat::MeasurementLines, true).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Input);
}
