use std::f64::consts::PI;

use pinhole::forward::{build_forward, combine, oneway_pair, Directionality};
use pinhole::geometry::{
    build_scene_grid, MaskGeometry, MaskMode, MaskPlaneSampling, RadarConfig, RotationSampling, Vec3,
};
use pinhole::mask::{null_signature, MaskTransmission};
use pinhole::propagation::{greens, PropagationSettings};
use pinhole::recon::factorize;
use pinhole::sync::{dtw_align_with, DtwConfig, RotationSignature};
use proptest::prelude::*;

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

fn open_mask() -> MaskGeometry {
    MaskGeometry { attenuation_db: 0.0, mode: MaskMode::InversePinhole, ..MaskGeometry::default() }
}

/// One mask-plane cell per row, walking a circle of radius `r`.
fn swept_cell(plane: &MaskPlaneSampling, rows: usize, r: f64) -> (MaskTransmission, Vec<Vec3>) {
    let mut cells = Vec::new();
    let mut centers = Vec::new();
    for t in 0..rows {
        let a = 2.0 * PI * t as f64 / rows as f64;
        let ix = (r * a.cos() / plane.spacing_m).round() as i64;
        let iy = (r * a.sin() / plane.spacing_m).round() as i64;
        let m = plane.index_of(ix, iy).unwrap();
        cells.push(vec![(m as u32, 1.0)]);
        centers.push(plane.samples[m]);
    }
    (MaskTransmission::custom(plane.len(), 0.0, 1.0, cells).unwrap(), centers)
}

#[test]
fn far_field_phase_is_linear_in_virtual_source_position() {
    let lambda = 4e-3;
    let mask = open_mask();
    let radar = RadarConfig::colocated(lambda, mask.axis_offset_m);
    let plane = MaskPlaneSampling::for_mask(&mask, lambda).unwrap();
    let aperture = 2.0 * plane.extent_m;
    let range = 1000.0 * aperture;
    let grid = build_scene_grid(range, -30.0, 30.0, 15.0, &[0.0]).unwrap();
    let rows = 72;
    let rotation = RotationSampling::uniform(rows, 600.0).unwrap();
    let (tr, centers) = swept_cell(&plane, rows, 0.15);
    let settings = PropagationSettings::for_radar(&radar).unwrap();
    let f = oneway_pair(&radar, &grid, &rotation, &plane, &tr, &settings).unwrap().rx;
    let k = 2.0 * PI / lambda;
    let hub = Vec3::new(0.0, 0.0, mask.plane_depth_m);
    for (j, p) in grid.points.iter().enumerate() {
        let dir = (*p - hub).normalized();
        let scene_phase: Vec<f64> = (0..rows)
            .map(|t| (f.get(t, j) / greens(radar.rx_position, centers[t], lambda).unwrap()).arg())
            .collect();
        // plane wave: a source displaced by l from the hub is closer by l . s
        let model: Vec<f64> = centers.iter().map(|c| -k * (*c - hub).dot(dir)).collect();
        for t in 1..rows {
            let d = wrap((scene_phase[t] - scene_phase[0]) - (model[t] - model[0]));
            assert!(d.abs() < 0.05, "target {j} row {t}: {d}");
        }
    }
}

#[test]
fn virtual_source_two_way_phase() {
    let lambda = 4e-3;
    let mask = open_mask();
    let radar = RadarConfig::colocated(lambda, mask.axis_offset_m);
    let plane = MaskPlaneSampling::for_mask(&mask, lambda).unwrap();
    let grid = build_scene_grid(5.0, -20.0, 20.0, 10.0, &[0.0]).unwrap();
    let rows = 60;
    let rotation = RotationSampling::uniform(rows, 600.0).unwrap();
    let (tr, centers) = swept_cell(&plane, rows, 0.1);
    let settings = PropagationSettings { obliquity: false, ..PropagationSettings::for_radar(&radar).unwrap() };
    let b = combine(&oneway_pair(&radar, &grid, &rotation, &plane, &tr, &settings).unwrap(), Directionality::Bidirectional)
        .unwrap();
    let k = 2.0 * PI / lambda;
    for (j, p) in grid.points.iter().enumerate() {
        let path = |t: usize| radar.tx_position.distance(centers[t]) + centers[t].distance(*p);
        for t in 1..rows {
            let measured = (b.get(t, j) / b.get(0, j)).arg();
            let expected = 2.0 * k * (path(t) - path(0));
            assert!(wrap(measured - expected).abs() < 0.1, "target {j} row {t}");
        }
    }
}

#[test]
fn enlarging_open_aperture_keeps_boresight_field_trend() {
    let lambda = 4e-3;
    let mask = open_mask();
    let radar = RadarConfig::colocated(lambda, mask.axis_offset_m);
    let plane = MaskPlaneSampling::for_mask(&mask, lambda).unwrap();
    let grid = build_scene_grid(20.0, 0.0, 0.0, 1.0, &[0.0]).unwrap();
    // row t opens a disc around the point facing the antenna; radii are
    // uniform in r^2, where the Fresnel ringing of |E| has period 2 λ z
    let period = 2.0 * lambda * mask.plane_depth_m;
    let per_period = 20;
    let radii: Vec<f64> = (1..=8 * per_period).map(|i| (i as f64 * period / per_period as f64).sqrt()).collect();
    let center = Vec3::new(radar.rx_position.x, radar.rx_position.y, mask.plane_depth_m);
    let cells: Vec<Vec<(u32, f64)>> = radii
        .iter()
        .map(|&r| {
            (0..plane.len())
                .filter(|&m| plane.samples[m].distance(center) <= r)
                .map(|m| (m as u32, 1.0))
                .collect()
        })
        .collect();
    let tr = MaskTransmission::custom(plane.len(), 0.0, 1.0, cells).unwrap();
    let rotation = RotationSampling::uniform(radii.len(), 600.0).unwrap();
    let settings = PropagationSettings::for_radar(&radar).unwrap();
    let f = oneway_pair(&radar, &grid, &rotation, &plane, &tr, &settings).unwrap().rx;
    let mag: Vec<f64> = (0..radii.len()).map(|t| f.get(t, 0).norm()).collect();
    let smooth: Vec<f64> =
        mag.windows(per_period).map(|w| w.iter().sum::<f64>() / per_period as f64).collect();
    let peak = mag.iter().copied().fold(0.0, f64::max);
    for w in smooth.windows(2) {
        assert!(w[1] >= w[0] - 0.02 * peak, "{smooth:?}");
    }
}

#[test]
fn null_rotation_angle_tracks_target_azimuth() {
    let mask = MaskGeometry::default();
    let radar = RadarConfig::default();
    let plane = MaskPlaneSampling::for_mask(&mask, radar.wavelength_m).unwrap();
    let grid = build_scene_grid(20.0, -40.0, 40.0, 5.0, &[0.0]).unwrap();
    let rotation = RotationSampling::default();
    let m = build_forward(&radar, &grid, &mask, &rotation, &plane, Directionality::Bidirectional).unwrap();
    let n = rotation.len() as f64;
    let mut angles: Vec<f64> = (0..grid.len())
        .map(|j| {
            let sig = null_signature(&m, j).unwrap();
            let deepest = (0..sig.trace.len()).min_by(|&a, &b| sig.trace[a].total_cmp(&sig.trace[b])).unwrap();
            deepest as f64 / n * 360.0
        })
        .collect();
    for i in 1..angles.len() {
        while angles[i] - angles[i - 1] > 180.0 {
            angles[i] -= 360.0;
        }
        while angles[i] - angles[i - 1] < -180.0 {
            angles[i] += 360.0;
        }
    }
    let inc = angles.windows(2).all(|w| w[1] >= w[0]);
    let dec = angles.windows(2).all(|w| w[1] <= w[0]);
    assert!((inc || dec) && angles[0] != angles[angles.len() - 1], "{angles:?}");
}

#[test]
fn bidirectional_phase_is_twice_unidirectional() {
    let lambda = 4e-3;
    let mask = open_mask();
    let radar = RadarConfig::colocated(lambda, mask.axis_offset_m);
    let plane = MaskPlaneSampling::for_mask(&mask, lambda).unwrap();
    let grid = build_scene_grid(10.0, -30.0, 30.0, 6.0, &[0.0, 5.0]).unwrap();
    let rotation = RotationSampling::uniform(24, 600.0).unwrap();
    let bi = build_forward(&radar, &grid, &mask, &rotation, &plane, Directionality::Bidirectional).unwrap();
    let uni = build_forward(&radar, &grid, &mask, &rotation, &plane, Directionality::Unidirectional).unwrap();
    for t in 0..rotation.len() {
        for j in 0..grid.len() {
            let d = wrap(bi.matrix.get(t, j).arg() - 2.0 * uni.matrix.get(t, j).arg());
            assert!(d.abs() < 1e-9, "({t}, {j}): {d}");
        }
    }
}

#[test]
fn bidirectional_spectrum_decays_slower_over_first_forty() {
    let mask = MaskGeometry::default();
    let radar = RadarConfig::default();
    let plane = MaskPlaneSampling::for_mask(&mask, radar.wavelength_m).unwrap();
    let grid = build_scene_grid(20.0, -50.0, 50.0, 0.25, &[0.0]).unwrap();
    let rotation = RotationSampling::default();
    let spectrum = |d| {
        let f = factorize(&build_forward(&radar, &grid, &mask, &rotation, &plane, d).unwrap()).unwrap();
        f.normalized_spectrum(f.s[0])
    };
    let (bi, uni) = (spectrum(Directionality::Bidirectional), spectrum(Directionality::Unidirectional));
    let below: Vec<usize> = (0..40).filter(|&i| bi[i] < uni[i]).collect();
    if !below.is_empty() {
        eprintln!("bidirectional below unidirectional at indices {below:?}");
    }
    let (mut sb, mut su) = (0.0, 0.0);
    for i in 0..40 {
        sb += bi[i];
        su += uni[i];
        assert!(sb >= su, "partial sum to index {i}: {sb} < {su}");
    }
}

fn runs(v: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &x in v {
        if out.last() != Some(&x) {
            out.push(x);
        }
    }
    out
}

proptest! {
    #[test]
    fn dtw_cost_zero_iff_equal_up_to_repetition(
        a in proptest::collection::vec(0u8..3, 1..12),
        b in proptest::collection::vec(0u8..3, 1..12),
    ) {
        let to_sig = |v: &[u8]| RotationSignature::new(v.iter().map(|&x| x as f64).collect(), v.len()).unwrap();
        let (sa, sb) = (to_sig(&a), to_sig(&b));
        let cost = dtw_align_with(&sa, &sb, &DtwConfig { band_fraction: None }).unwrap().cost;
        prop_assert_eq!(cost == 0.0, runs(&sa.samples) == runs(&sb.samples));
    }
}
