//! Resolution studies, SAR baselines, design sweeps and image-quality metrics.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{param, Error, Result};
use crate::forward::{build_forward, Directionality, Fingerprint, ForwardModel};
use crate::geometry::{MaskGeometry, MaskPlaneSampling, RadarConfig, RotationSampling, SceneGrid, Vec3};
use crate::linalg::CMatrix;
use crate::propagation::greens;
use crate::recon::{factorize, reconstruct, ReconConfig, SvdFactorization};

pub const GRAVITY_MPS2: f64 = 9.81;

/// Row-major real image, `height` elevation rows by `width` azimuth columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width || data.is_empty() {
            return Err(Error::Shape(format!("{} pixels for a {height}x{width} image", data.len())));
        }
        Ok(Self { height, width, data })
    }

    /// Lays grid-ordered values out as elevation rows.
    pub fn from_grid(grid: &SceneGrid, values: &[f64]) -> Result<Self> {
        Self::new(grid.n_elevation(), grid.n_azimuth(), values.to_vec())
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn peak(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn peak_normalized(&self) -> Self {
        let p = self.peak();
        let data = if p > 0.0 { self.data.iter().map(|v| v / p).collect() } else { self.data.clone() };
        Self { data, ..*self }
    }

    fn same_shape(&self, other: &Image) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Shape(format!(
                "image {}x{} against reference {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsfCurve {
    pub angles_deg: Vec<f64>,
    /// Reconstructed amplitude, peak-normalized.
    pub response: Vec<f64>,
    pub fwhp_deg: f64,
}

/// Noiseless reconstruction of a unit target at `target_angle_deg` (elevation 0),
/// read out along azimuth.
pub fn psf(model: &ForwardModel, fact: &SvdFactorization, target_angle_deg: f64, cfg: &ReconConfig) -> Result<PsfCurve> {
    let grid = &model.grid;
    let lo = grid.azimuth_deg[0];
    let hi = *grid.azimuth_deg.last().unwrap();
    if !(target_angle_deg >= lo && target_angle_deg <= hi) {
        return Err(param(format!("target {target_angle_deg} deg outside the grid [{lo}, {hi}]")));
    }
    let j = grid.point_index(target_angle_deg, 0.0)?;
    let el = grid.elevation_index(0.0)?;
    let y = model.matrix.column(j);
    let img = reconstruct(fact, &y, cfg)?;
    let row: Vec<f64> = (0..grid.n_azimuth()).map(|a| img.intensity[grid.index(a, el)]).collect();
    psf_from_profile(&grid.azimuth_deg, &row)
}

pub fn psf_from_profile(angles_deg: &[f64], amplitude: &[f64]) -> Result<PsfCurve> {
    if angles_deg.len() != amplitude.len() || angles_deg.is_empty() {
        return Err(Error::Shape("angle and response lengths differ".into()));
    }
    let peak = amplitude.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::UndefinedMetric("point-spread function is identically zero".into()));
    }
    let response: Vec<f64> = amplitude.iter().map(|v| v / peak).collect();
    let fwhp_deg = fwhp(angles_deg, &response)?;
    Ok(PsfCurve { angles_deg: angles_deg.to_vec(), response, fwhp_deg })
}

/// Full width at half power of an amplitude curve around its peak.
///
/// Crossings are located by linear interpolation of power between samples. A
/// side that never drops to half power contributes its end angle.
pub fn fwhp(angles_deg: &[f64], amplitude: &[f64]) -> Result<f64> {
    if angles_deg.len() != amplitude.len() || angles_deg.is_empty() {
        return Err(Error::Shape("angle and response lengths differ".into()));
    }
    let power: Vec<f64> = amplitude.iter().map(|a| a * a).collect();
    let ip = (0..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b])).unwrap();
    let half = 0.5 * power[ip];
    if !(half > 0.0) {
        return Err(Error::UndefinedMetric("response has no positive peak".into()));
    }
    let cross = |i: usize, k: usize| {
        let f = (power[i] - half) / (power[i] - power[k]);
        angles_deg[i] + f * (angles_deg[k] - angles_deg[i])
    };
    let mut left = angles_deg[0];
    for i in (1..=ip).rev() {
        if power[i - 1] <= half {
            left = cross(i, i - 1);
            break;
        }
    }
    let mut right = *angles_deg.last().unwrap();
    for i in ip..power.len() - 1 {
        if power[i + 1] <= half {
            right = cross(i, i + 1);
            break;
        }
    }
    Ok(right - left)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SarKind {
    /// Straight track along azimuth, `extent` = track length.
    Linear,
    /// Circle in the antenna plane, `extent` = radius.
    Circular,
}

/// Colocated monostatic SAR over the given track, one row per position.
pub fn sar_baseline(kind: SarKind, extent_m: f64, positions: usize, wavelength_m: f64, grid: &SceneGrid) -> Result<ForwardModel> {
    if !(extent_m >= 0.0 && extent_m.is_finite()) {
        return Err(param(format!("SAR extent must be non-negative, got {extent_m}")));
    }
    if positions == 0 {
        return Err(param("SAR needs at least one position"));
    }
    let track: Vec<Vec3> = (0..positions)
        .map(|t| match kind {
            SarKind::Linear => {
                let f = if positions == 1 { 0.5 } else { t as f64 / (positions - 1) as f64 };
                Vec3::new((f - 0.5) * extent_m, 0.0, 0.0)
            }
            SarKind::Circular => {
                let a = 2.0 * PI * t as f64 / positions as f64;
                Vec3::new(extent_m * a.cos(), extent_m * a.sin(), 0.0)
            }
        })
        .collect();
    let rows: Vec<Vec<Complex64>> = track
        .par_iter()
        // round trip: (1/d^2) exp(i 2π 2d/λ)
        .map(|&p| grid.points.iter().map(|&q| greens(p, q, wavelength_m).map(|g| g * g)).collect())
        .collect::<Vec<Result<Vec<Complex64>>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let matrix = CMatrix::from_vec(positions, grid.len(), rows.concat())?;
    let fp = Fingerprint::of_parts(&[
        "pinhole-sar-v1".into(),
        format!("{kind:?}|{extent_m:?}|{positions}|{wavelength_m:?}"),
        format!("{:?}|{:?}|{:?}", grid.range_m, grid.azimuth_deg, grid.elevation_deg),
    ]);
    let rot = RotationSampling::uniform(positions, 600.0)?;
    ForwardModel::from_matrix(matrix, grid.clone(), Directionality::Bidirectional, fp, wavelength_m, &rot)
}

/// Count of singular values above an absolute threshold.
pub fn usable_count(s: &[f64], threshold: f64) -> usize {
    s.iter().filter(|&&v| v > threshold).count()
}

/// Noise-equivalent singular value for a given noise power.
///
/// Component `i` carries `S_i v_i^H x` of signal against noise of variance
/// `noise_power`. Spread evenly over `N` grid points, a scene of energy
/// `|x|^2` puts `|x|^2 / N` into each component, so the component is usable
/// when `S_i > sqrt(noise_power * N / |x|^2)`.
pub fn noise_equivalent_sv(noise_power: f64, n_points: usize, scene_energy: f64) -> f64 {
    (noise_power * n_points as f64 / scene_energy).sqrt()
}

/// Noise power that leaves exactly `usable` singular values above the
/// noise-equivalent level, placed at the geometric mean of `S_usable` and
/// `S_usable+1`.
pub fn calibrate_noise_power(s: &[f64], n_points: usize, scene_energy: f64, usable: usize) -> Result<f64> {
    if usable == 0 || usable >= s.len() {
        return Err(param(format!("usable count must lie in 1..{}, got {usable}", s.len())));
    }
    if !(scene_energy > 0.0) {
        return Err(param("scene energy must be positive"));
    }
    let cut = (s[usable - 1] * s[usable]).sqrt();
    if !(cut > 0.0) {
        return Err(Error::RankDeficient(format!("singular value {} is zero", usable + 1)));
    }
    Ok(cut * cut * scene_energy / n_points as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    Width,
    Radius,
    Depth,
    Blades,
    Attenuation,
}

#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub radar: RadarConfig,
    pub grid: SceneGrid,
    pub mask: MaskGeometry,
    pub rotation: RotationSampling,
    pub directionality: Directionality,
    pub psf_target_deg: f64,
    /// Relative threshold defining the noiseless PSF rank.
    pub psf_tau: f64,
    /// Absolute noise-equivalent singular value for the usable count.
    pub noise_floor: f64,
    /// Common normalization for the reported spectrum (e.g. an open-mask S_1).
    pub spectrum_reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub fwhp_deg: f64,
    pub s1: f64,
    pub s40_normalized: f64,
    pub usable: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

pub fn apply_sweep_value(mask: &MaskGeometry, parameter: SweepParameter, value: f64) -> Result<MaskGeometry> {
    let mut m = mask.clone();
    match parameter {
        SweepParameter::Width => m.blade_width_m = value,
        SweepParameter::Radius => m.blade_length_m = value,
        SweepParameter::Depth => m.plane_depth_m = value,
        SweepParameter::Blades => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(param(format!("blade count must be a positive integer, got {value}")));
            }
            m.blade_count = value as u32
        }
        SweepParameter::Attenuation => m.attenuation_db = value,
    }
    if m.blade_width_m > 2.0 * m.blade_length_m {
        return Err(param(format!(
            "width {} exceeds twice the radius {}",
            m.blade_width_m, m.blade_length_m
        )));
    }
    m.validate()?;
    Ok(m)
}

/// One row per value; infeasible geometries are skipped and reported.
pub fn sweep(parameter: SweepParameter, values: &[f64], setup: &SweepSetup) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(param("sweep needs at least one value"));
    }
    let mut table = SweepTable::default();
    for &value in values {
        let mask = match apply_sweep_value(&setup.mask, parameter, value) {
            Ok(m) => m,
            Err(e) => {
                table.warnings.push(format!("skipping {parameter:?} = {value}: {e}"));
                continue;
            }
        };
        let plane = MaskPlaneSampling::for_mask(&mask, setup.radar.wavelength_m)?;
        let model = build_forward(&setup.radar, &setup.grid, &mask, &setup.rotation, &plane, setup.directionality)?;
        let fact = factorize(&model)?;
        let curve = psf(&model, &fact, setup.psf_target_deg, &ReconConfig::relative(setup.psf_tau)?)?;
        table.rows.push(SweepRow {
            value,
            fwhp_deg: curve.fwhp_deg,
            s1: fact.s[0],
            s40_normalized: fact.s.get(39).copied().unwrap_or(0.0) / setup.spectrum_reference,
            usable: usable_count(&fact.s, setup.noise_floor),
        });
    }
    Ok(table)
}

fn azimuth_spectrum_energy(img: &Image) -> f64 {
    let w = img.width;
    let mut line: Vec<Complex64> =
        (0..w).map(|c| Complex64::new((0..img.height).map(|r| img.get(r, c)).sum(), 0.0)).collect();
    FftPlanner::new().plan_fft_forward(w).process(&mut line);
    line.iter()
        .enumerate()
        .filter(|&(k, _)| {
            let f = if 2 * k <= w { k as f64 / w as f64 } else { (k as f64 - w as f64) / w as f64 };
            f >= 0.1
        })
        .map(|(_, z)| z.norm())
        .sum()
}

/// High azimuth-frequency content of `image` relative to `reference`.
///
/// Uses the zero elevation-frequency line of the 2-D DFT, summing magnitudes
/// at normalized azimuth frequencies of at least 0.1 cycles per bin.
pub fn sharpness(image: &Image, reference: &Image) -> Result<f64> {
    image.same_shape(reference)?;
    let r = azimuth_spectrum_energy(reference);
    if !(r > 0.0) {
        return Err(Error::UndefinedMetric("reference has no high-frequency azimuth content".into()));
    }
    Ok(azimuth_spectrum_energy(image) / r)
}

pub const MSE_SCALE: f64 = 1e3;

/// Mean squared error over pixels whose reference intensity lies in `window`, times 1e3.
pub fn mse(image: &Image, reference: &Image, window: (f64, f64)) -> Result<f64> {
    image.same_shape(reference)?;
    let (sum, n) = image
        .data
        .iter()
        .zip(&reference.data)
        .filter(|(_, &r)| r >= window.0 && r <= window.1)
        .fold((0.0, 0usize), |(s, n), (a, r)| (s + (a - r).powi(2), n + 1));
    if n == 0 {
        return Err(Error::UndefinedMetric(format!("no reference pixels in [{}, {}]", window.0, window.1)));
    }
    Ok(MSE_SCALE * sum / n as f64)
}

pub const SSIM_WINDOW: usize = 8;

/// Mean SSIM over all 8x8 windows (uniform weights, dynamic range 1).
///
/// An axis of length one uses a window of one along that axis, so single-row
/// azimuth profiles are scored with 1x8 windows.
pub fn ssim(image: &Image, reference: &Image) -> Result<f64> {
    image.same_shape(reference)?;
    let win = |len: usize| -> Result<usize> {
        match len {
            1 => Ok(1),
            l if l >= SSIM_WINDOW => Ok(SSIM_WINDOW),
            l => Err(param(format!("image side {l} is smaller than the {SSIM_WINDOW}-pixel window"))),
        }
    };
    let (wh, ww) = (win(image.height)?, win(image.width)?);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let npx = (wh * ww) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=image.height - wh {
        for c0 in 0..=image.width - ww {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + wh {
                for c in c0..c0 + ww {
                    let (a, b) = (image.get(r, c), reference.get(r, c));
                    sa += a;
                    sb += b;
                    saa += a * a;
                    sbb += b * b;
                    sab += a * b;
                }
            }
            let (ma, mb) = (sa / npx, sb / npx);
            let va = saa / npx - ma * ma;
            let vb = sbb / npx - mb * mb;
            let cov = sab / npx - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Grid points whose intensity is at least `fraction` of the image peak.
pub fn threshold_points(grid: &SceneGrid, intensity: &[f64], fraction: f64) -> Result<Vec<Vec3>> {
    if intensity.len() != grid.len() {
        return Err(Error::Shape(format!("{} intensities for {} grid points", intensity.len(), grid.len())));
    }
    let peak = intensity.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::UndefinedMetric("image is empty after thresholding".into()));
    }
    Ok(grid
        .points
        .iter()
        .zip(intensity)
        .filter(|(_, &v)| v >= fraction * peak)
        .map(|(p, _)| *p)
        .collect())
}

/// Symmetric mean nearest-neighbour distance, meters.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedMetric("chamfer distance of an empty point set".into()));
    }
    let one_way = |p: &[Vec3], q: &[Vec3]| {
        p.iter().map(|&x| q.iter().map(|&y| x.distance(y)).fold(f64::INFINITY, f64::min)).sum::<f64>() / p.len() as f64
    };
    Ok(0.5 * (one_way(a, b) + one_way(b, a)))
}

/// Least-squares line `y = intercept + slope x` with a two-sided confidence interval on the slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SlopeEstimate {
    pub fn ci_contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

pub fn regress_slope(x: &[f64], y: &[f64], confidence: f64) -> Result<SlopeEstimate> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(param("regression needs at least three paired samples"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(param("confidence must lie in (0, 1)"));
    }
    let nf = n as f64;
    let (mx, my) = (x.iter().sum::<f64>() / nf, y.iter().sum::<f64>() / nf);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::UndefinedMetric("regressor has no spread".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = (rss / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| Error::Numeric(format!("t distribution: {e}")))?
        .inverse_cdf(0.5 + 0.5 * confidence);
    Ok(SlopeEstimate { slope, intercept, ci_low: slope - t * se, ci_high: slope + t * se })
}

/// `m g r ω`, watts.
pub fn rotational_power(mass_kg: f64, radius_m: f64, omega_rad_s: f64) -> Result<f64> {
    if !(mass_kg >= 0.0 && radius_m >= 0.0 && omega_rad_s >= 0.0) {
        return Err(param("mass, radius and angular rate must be non-negative"));
    }
    Ok(mass_kg * GRAVITY_MPS2 * radius_m * omega_rad_s)
}

pub fn rpm_to_rad_s(rpm: f64) -> f64 {
    rpm * 2.0 * PI / 60.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub sharpness_ratio: f64,
    pub mse: f64,
    pub ssim: f64,
    pub chamfer_m: f64,
}

/// All four metrics on peak-normalized intensities.
pub fn metric_report(grid: &SceneGrid, image: &[f64], reference: &[f64]) -> Result<MetricReport> {
    let img = Image::from_grid(grid, image)?.peak_normalized();
    let refi = Image::from_grid(grid, reference)?.peak_normalized();
    Ok(MetricReport {
        sharpness_ratio: sharpness(&img, &refi)?,
        mse: mse(&img, &refi, (0.01, 1.0))?,
        ssim: ssim(&img, &refi)?,
        chamfer_m: chamfer(&threshold_points(grid, &img.data, 0.5)?, &threshold_points(grid, &refi.data, 0.5)?)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_scene_grid;
    use proptest::prelude::*;

    fn gaussian_row(width: usize, sigma: f64) -> Image {
        let c = (width / 2) as f64;
        Image::new(1, width, (0..width).map(|i| (-((i as f64 - c) / sigma).powi(2) / 2.0).exp()).collect()).unwrap()
    }

    #[test]
    fn fwhp_of_gaussian_power() {
        // amplitude exp(-x^2/(2s^2)) has power half-width s*sqrt(ln 2)
        let angles: Vec<f64> = (0..2001).map(|i| -10.0 + i as f64 * 0.01).collect();
        let s = 1.5;
        let amp: Vec<f64> = angles.iter().map(|a| (-(a * a) / (2.0 * s * s)).exp()).collect();
        let w = fwhp(&angles, &amp).unwrap();
        assert!((w - 2.0 * s * 2f64.ln().sqrt()).abs() < 1e-4, "{w}");
        let flat = vec![1.0; 2001];
        assert!((fwhp(&angles, &flat).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn sharpness_cases() {
        let a = gaussian_row(64, 2.0);
        assert!((sharpness(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let flat = Image::new(3, 64, vec![0.7; 192]).unwrap();
        let r3 = Image::new(3, 64, [a.data.clone(), a.data.clone(), a.data.clone()].concat()).unwrap();
        assert!(sharpness(&flat, &r3).unwrap().abs() < 1e-10);
        let wide = gaussian_row(64, 4.0);
        assert!(sharpness(&wide, &a).unwrap() < 1.0);
        assert!(matches!(sharpness(&a, &flat.clone()), Err(Error::Shape(_))));
        let zero = Image::new(1, 64, vec![0.0; 64]).unwrap();
        assert!(matches!(sharpness(&a, &zero), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn mse_cases() {
        let a = gaussian_row(64, 6.0);
        assert_eq!(mse(&a, &a, (0.01, 1.0)).unwrap(), 0.0);
        let shifted = Image { data: a.data.iter().map(|v| v + 0.05).collect(), ..a.clone() };
        assert!((mse(&shifted, &a, (0.01, 1.0)).unwrap() - 0.0025 * 1e3).abs() < 1e-9);
        assert!(matches!(mse(&a, &a, (2.0, 3.0)), Err(Error::UndefinedMetric(_))));
    }

    fn pattern() -> Image {
        let (h, w) = (16, 24);
        Image::new(h, w, (0..h * w).map(|i| 0.5 + 0.4 * ((i % w) as f64 * 0.7).sin() * ((i / w) as f64 * 0.4).cos()).collect()).unwrap()
    }

    #[test]
    fn ssim_cases() {
        let p = pattern();
        assert!((ssim(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        let neg = Image { data: p.data.iter().map(|v| 1.0 - v).collect(), ..p.clone() };
        assert!(ssim(&neg, &p).unwrap() < 0.3);
        let noise = crate::forward::NoiseModel::new(2.0 * 0.01f64.powi(2), 5).unwrap().sample(p.data.len());
        let noisy = Image { data: p.data.iter().zip(&noise).map(|(v, n)| v + n.re).collect(), ..p.clone() };
        assert!(ssim(&noisy, &p).unwrap() > 0.9);
        let small = Image::new(4, 4, vec![0.5; 16]).unwrap();
        assert!(matches!(ssim(&small, &small), Err(Error::Parameter(_))));
        let row = gaussian_row(32, 3.0);
        assert!((ssim(&row, &row).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chamfer_cases() {
        let a = vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 2.0, 3.0)];
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        let d = Vec3::new(0.0, 0.25, 0.0);
        let b: Vec<Vec3> = a.iter().map(|&p| p + d).collect();
        assert!((chamfer(&a, &b).unwrap() - 0.25).abs() < 1e-12);
        assert!((chamfer(&[Vec3::new(0.0, 0.0, 0.0)], &[Vec3::new(1.0, 0.0, 0.0)]).unwrap() - 1.0).abs() < 1e-12);
        assert!(chamfer(&a, &[]).is_err());
    }

    #[test]
    fn slope_interval() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let flat: Vec<f64> = x.iter().map(|v| 5.0 + if *v as i64 % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let r = regress_slope(&x, &flat, 0.95).unwrap();
        assert!(r.ci_contains(0.0));
        let line: Vec<f64> = flat.iter().zip(&x).map(|(f, v)| f + 0.5 * v).collect();
        let r = regress_slope(&x, &line, 0.95).unwrap();
        assert!(!r.ci_contains(0.0) && r.ci_contains(0.5));
        assert!(regress_slope(&x[..2], &flat[..2], 0.95).is_err());
    }

    #[test]
    fn power_figures() {
        let w = rpm_to_rad_s(600.0);
        let light = rotational_power(0.010, 0.16, w).unwrap();
        let heavy = rotational_power(0.120, 0.0225, w).unwrap();
        assert!((light - 0.986).abs() < 1e-3, "{light}");
        assert!((heavy - 1.664).abs() < 1e-3, "{heavy}");
        assert!(light < heavy);
        assert_eq!(rotational_power(0.0, 0.16, w).unwrap(), 0.0);
        assert!(rotational_power(-1.0, 0.16, w).is_err());
    }

    #[test]
    fn point_aperture_sar_has_no_resolution() {
        let grid = build_scene_grid(20.0, -50.0, 50.0, 1.0, &[0.0]).unwrap();
        let model = sar_baseline(SarKind::Circular, 0.0, 8, 4e-3, &grid).unwrap();
        let fact = factorize(&model).unwrap();
        let curve = psf(&model, &fact, 0.0, &ReconConfig::relative(1e-10).unwrap()).unwrap();
        assert!(curve.fwhp_deg > 90.0, "{}", curve.fwhp_deg);
    }

    #[test]
    fn calibration_places_cut_between_values() {
        let s: Vec<f64> = (0..100).map(|i| 0.9f64.powi(i)).collect();
        let p = calibrate_noise_power(&s, 500, 3.0, 40).unwrap();
        assert_eq!(usable_count(&s, noise_equivalent_sv(p, 500, 3.0)), 40);
        assert!(calibrate_noise_power(&s, 500, 3.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn sharpness_scale_invariant(k in 0.01f64..100.0, s in 1.0f64..6.0) {
            let a = gaussian_row(48, s);
            let r = gaussian_row(48, 2.0);
            let ka = Image { data: a.data.iter().map(|v| v * k).collect(), ..a.clone() };
            let kr = Image { data: r.data.iter().map(|v| v * k).collect(), ..r.clone() };
            prop_assert!((sharpness(&ka, &kr).unwrap() - sharpness(&a, &r).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn fwhp_reflection_symmetric(c in -20.0f64..20.0, s in 0.3f64..3.0) {
            let angles: Vec<f64> = (0..801).map(|i| -40.0 + i as f64 * 0.1).collect();
            let f = |sign: f64| -> Vec<f64> {
                angles.iter().map(|a| (-((a - sign * c) / s).powi(2)).exp()).collect()
            };
            let w1 = fwhp(&angles, &f(1.0)).unwrap();
            let w2 = fwhp(&angles, &f(-1.0)).unwrap();
            prop_assert!((w1 - w2).abs() < 0.1);
        }
    }
}
