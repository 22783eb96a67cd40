use gcxgc_core::io::{
    load_grid, parse_aoi, parse_mask, read_aoi, read_mask, save_grid, save_grid_as, write_aoi,
    write_mask, AreaOfInterest, GridEncoding, LuminancePolicy,
};
use gcxgc_core::synthetic::{gen_brush_polygon, gen_mask, gen_peaks_with, Bounds, PeakGenOptions};
use gcxgc_core::{AxisCalibration, Grid};
use proptest::prelude::*;

fn calibrated() -> AxisCalibration<f64> {
    AxisCalibration {
        axis1_origin: 4.5,
        axis1_step: 0.0125,
        axis2_origin: 0.35,
        axis2_step: 0.005,
    }
}

#[test]
fn csv_grid_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    let g = Grid::from_fn(3, 3, calibrated(), |r, c| (r * 3 + c) as f64 * 0.1 + 1e-7).unwrap();
    save_grid(&g, &path).unwrap();
    let back: Grid<f64> = load_grid(&path, &LuminancePolicy::default()).unwrap();
    assert_eq!(back, g);
}

#[test]
fn png16_full_code_range_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.png");
    let g = Grid::from_fn(256, 256, calibrated(), |r, c| (r * 256 + c) as f64).unwrap();
    save_grid_as(&g, &path, GridEncoding::Png16).unwrap();
    let back: Grid<f64> = load_grid(&path, &LuminancePolicy::default()).unwrap();
    assert_eq!(back.values(), g.values());
    assert_eq!(back.axes(), g.axes());
}

#[test]
fn png8_real_values_within_one_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.png");
    let g = Grid::from_fn(20, 30, calibrated(), |r, c| {
        ((r * 7 + c * 13) % 97) as f64 * 3.3 + 0.17
    })
    .unwrap();
    save_grid_as(&g, &path, GridEncoding::Png8).unwrap();
    let back: Grid<f64> = load_grid(&path, &LuminancePolicy::default()).unwrap();
    let range = g.max_value() - g.min_value();
    for (a, b) in g.values().iter().zip(back.values()) {
        assert!((a - b).abs() <= range / 255.0);
    }
}

#[test]
fn mask_with_280_blobs_round_trips() {
    let opts = PeakGenOptions {
        min_separation: 3.0,
        ..PeakGenOptions::default()
    };
    let peaks = gen_peaks_with(17, 280, Bounds::default(), &opts).unwrap();
    let mask = gen_mask(
        &peaks,
        [1.2, 1.2],
        &["n-paraffins", "i-paraffins", "naphthenes"],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("template.mask");
    write_mask(&mask, &path).unwrap();
    let back = read_mask::<f64>(&path).unwrap();
    assert_eq!(back.len(), 280);
    assert_eq!(back, mask);
}

#[test]
fn brush_polygon_with_200_vertices_round_trips() {
    let poly = gen_brush_polygon(3, 200, [50.0, 50.0], [30.0, 20.0]).unwrap();
    let aoi = AreaOfInterest::new(poly, "brush stroke");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("area.aoi");
    write_aoi(&aoi, &path).unwrap();
    let back = read_aoi::<f64>(&path).unwrap();
    assert_eq!(back.polygon.len(), 200);
    assert_eq!(back, aoi);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_masks_round_trip(seed in 0u64..10_000, n in 1usize..40, rx in 0.1f64..1.4) {
        let peaks = gen_peaks_with(seed, n, Bounds::default(), &PeakGenOptions::default()).unwrap();
        let mask = gen_mask(&peaks, [rx, 1.0], &["a", "b c", "d-e"]).unwrap();
        let text = gcxgc_core::io::mask_to_string(&mask);
        prop_assert_eq!(parse_mask::<f64>(&text).unwrap(), mask);
    }

    #[test]
    fn random_brush_aois_round_trip(seed in 0u64..10_000, n in 3usize..300) {
        let poly = gen_brush_polygon(seed, n, [10.0, -3.0], [2.5, 0.75]).unwrap();
        let aoi = AreaOfInterest::new(poly, format!("stroke {seed}"));
        let text = gcxgc_core::io::aoi_to_string(&aoi);
        prop_assert_eq!(parse_aoi::<f64>(&text).unwrap(), aoi);
    }

    #[test]
    fn csv_round_trip_any_finite_values(
        vals in proptest::collection::vec(0.0f64..1e9, 6),
    ) {
        let g = Grid::new(2, 3, vals, calibrated()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        save_grid(&g, &path).unwrap();
        let back: Grid<f64> = load_grid(&path, &LuminancePolicy::default()).unwrap();
        prop_assert_eq!(back, g);
    }
}
