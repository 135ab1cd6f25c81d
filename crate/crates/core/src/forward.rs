//! Sensing matrix assembly, measurement simulation and per-sample phase effects.

use std::f64::consts::PI;
use std::fmt;

use faer::prelude::SolveLstsq;
use faer::Mat;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{param, Error, Result};
use crate::geometry::{MaskGeometry, MaskPlaneSampling, RadarConfig, RotationSampling, SceneGrid};
use crate::linalg::CMatrix;
use crate::mask::{transmission_for, MaskTransmission};
use crate::propagation::{assemble_ends, PropagationSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Directionality {
    Unidirectional,
    Bidirectional,
}

impl Directionality {
    pub fn code(self) -> u8 {
        match self {
            Directionality::Unidirectional => 1,
            Directionality::Bidirectional => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(Directionality::Unidirectional),
            2 => Some(Directionality::Bidirectional),
            _ => None,
        }
    }
}

/// SHA-256 over every input that shapes a sensing matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of_parts(parts: &[String]) -> Self {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
        }
        Fingerprint(h.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    /// Sensing matrix `B`, rotation positions x scene points.
    pub matrix: CMatrix,
    pub fingerprint: Fingerprint,
    pub directionality: Directionality,
    pub grid: SceneGrid,
    pub wavelength_m: f64,
    pub sample_interval_s: f64,
    pub rpm: f64,
}

impl ForwardModel {
    /// Wraps an externally built matrix (baselines, loaded files, toy models).
    pub fn from_matrix(
        matrix: CMatrix,
        grid: SceneGrid,
        directionality: Directionality,
        fingerprint: Fingerprint,
        wavelength_m: f64,
        rotation: &RotationSampling,
    ) -> Result<Self> {
        if matrix.cols() != grid.len() {
            return Err(Error::Shape(format!(
                "matrix has {} columns but the grid has {} points",
                matrix.cols(),
                grid.len()
            )));
        }
        if matrix.rows() != rotation.len() {
            return Err(Error::Shape(format!(
                "matrix has {} rows but the rotation has {} positions",
                matrix.rows(),
                rotation.len()
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::Numeric("sensing matrix has non-finite entries".into()));
        }
        Ok(Self {
            matrix,
            fingerprint,
            directionality,
            grid,
            wavelength_m,
            sample_interval_s: rotation.sample_interval_s(),
            rpm: rotation.rpm,
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }
}

pub(crate) fn model_fingerprint(
    radar: &RadarConfig,
    grid: &SceneGrid,
    mask: &MaskGeometry,
    rotation: &RotationSampling,
    plane: &MaskPlaneSampling,
    directionality: Directionality,
    settings: &PropagationSettings,
) -> Fingerprint {
    Fingerprint::of_parts(&[
        "pinhole-forward-v1".to_string(),
        format!("{radar:?}"),
        format!("{:?}|{:?}|{:?}", grid.range_m, grid.azimuth_deg, grid.elevation_deg),
        format!("{mask:?}"),
        format!("{rotation:?}"),
        format!("{:?}|{:?}|{}", plane.spacing_m, plane.extent_m, plane.side),
        format!("{directionality:?}"),
        format!("{settings:?}"),
    ])
}

/// One-way matrices of both antennas plus the resulting sensing matrix.
#[derive(Debug, Clone)]
pub struct ForwardParts {
    pub tx: CMatrix,
    pub rx: CMatrix,
}

/// Tx- and Rx-side one-way matrices for an explicit transmission map.
pub fn oneway_pair(
    radar: &RadarConfig,
    grid: &SceneGrid,
    rotation: &RotationSampling,
    plane: &MaskPlaneSampling,
    transmission: &MaskTransmission,
    settings: &PropagationSettings,
) -> Result<ForwardParts> {
    if radar.is_colocated() {
        let f = assemble_ends(&[radar.tx_position], radar, grid, rotation, plane, transmission, settings)?
            .pop()
            .expect("one end");
        return Ok(ForwardParts { tx: f.clone(), rx: f });
    }
    let mut ends = assemble_ends(
        &[radar.tx_position, radar.rx_position],
        radar,
        grid,
        rotation,
        plane,
        transmission,
        settings,
    )?;
    let rx = ends.pop().expect("rx");
    let tx = ends.pop().expect("tx");
    Ok(ForwardParts { tx, rx })
}

pub fn combine(parts: &ForwardParts, directionality: Directionality) -> Result<CMatrix> {
    match directionality {
        Directionality::Bidirectional => parts.tx.hadamard(&parts.rx),
        Directionality::Unidirectional => Ok(parts.rx.clone()),
    }
}

pub fn build_forward(
    radar: &RadarConfig,
    grid: &SceneGrid,
    mask: &MaskGeometry,
    rotation: &RotationSampling,
    plane: &MaskPlaneSampling,
    directionality: Directionality,
) -> Result<ForwardModel> {
    let settings = PropagationSettings::for_radar(radar)?;
    build_forward_with(radar, grid, mask, rotation, plane, directionality, &settings)
}

/// Fingerprint `build_forward` would assign, without assembling the matrix.
pub fn forward_fingerprint(
    radar: &RadarConfig,
    grid: &SceneGrid,
    mask: &MaskGeometry,
    rotation: &RotationSampling,
    plane: &MaskPlaneSampling,
    directionality: Directionality,
) -> Result<Fingerprint> {
    let settings = PropagationSettings::for_radar(radar)?;
    Ok(model_fingerprint(radar, grid, mask, rotation, plane, directionality, &settings))
}

pub fn build_forward_with(
    radar: &RadarConfig,
    grid: &SceneGrid,
    mask: &MaskGeometry,
    rotation: &RotationSampling,
    plane: &MaskPlaneSampling,
    directionality: Directionality,
    settings: &PropagationSettings,
) -> Result<ForwardModel> {
    mask.validate()?;
    if plane.samples.first().map(|p| p.z) != Some(mask.plane_depth_m) {
        return Err(Error::Shape("mask-plane sampling does not lie at the mask depth".into()));
    }
    let transmission = transmission_for(mask, rotation, plane)?;
    let parts = oneway_pair(radar, grid, rotation, plane, &transmission, settings)?;
    let matrix = combine(&parts, directionality)?;
    let fp = model_fingerprint(radar, grid, mask, rotation, plane, directionality, settings);
    ForwardModel::from_matrix(matrix, grid.clone(), directionality, fp, radar.wavelength_m, rotation)
}

/// Signal-independent circular complex Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Variance `E|n|^2` per measurement sample.
    pub noise_power: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self { noise_power: 0.0, seed: 0 }
    }

    pub fn new(noise_power: f64, seed: u64) -> Result<Self> {
        if !(noise_power >= 0.0 && noise_power.is_finite()) {
            return Err(param(format!("noise power must be non-negative, got {noise_power}")));
        }
        Ok(Self { noise_power, seed })
    }

    /// Noise power giving `snr_db` for a unit-reflectivity target at boresight.
    pub fn from_snr(model: &ForwardModel, snr_db: f64, seed: u64) -> Result<Self> {
        let p = reference_power(model)?;
        Self::new(p / 10f64.powf(snr_db / 10.0), seed)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn sample(&self, len: usize) -> Vec<Complex64> {
        if self.noise_power == 0.0 {
            return vec![Complex64::new(0.0, 0.0); len];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let s = (0.5 * self.noise_power).sqrt();
        (0..len)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(s * re, s * im)
            })
            .collect()
    }
}

/// Mean received power of a unit target in the bin nearest boresight.
pub fn reference_power(model: &ForwardModel) -> Result<f64> {
    // grids without a boresight bin fall back to their central point
    let j = model.grid.point_index(0.0, 0.0).unwrap_or(model.grid.len() / 2);
    let col = model.matrix.column(j);
    Ok(col.iter().map(|z| z.norm_sqr()).sum::<f64>() / col.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub y: Vec<Complex64>,
    pub truth: Option<Vec<Complex64>>,
    pub rpm: f64,
    /// Relative to a unit boresight target; infinite when noiseless.
    pub snr_db: f64,
    pub fingerprint: Fingerprint,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn with_y(&self, y: Vec<Complex64>) -> Self {
        Self { y, ..self.clone() }
    }
}

/// `y = B x + n`.
pub fn simulate(model: &ForwardModel, x: &[Complex64], noise: &NoiseModel) -> Result<MeasurementSet> {
    if x.len() != model.cols() {
        return Err(Error::Shape(format!("scene has {} values, model expects {}", x.len(), model.cols())));
    }
    let mut y = model.matrix.matvec(x)?;
    for (v, n) in y.iter_mut().zip(noise.sample(model.rows())) {
        *v += n;
    }
    let snr_db = if noise.noise_power == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (reference_power(model)? / noise.noise_power).log10()
    };
    Ok(MeasurementSet { y, truth: Some(x.to_vec()), rpm: model.rpm, snr_db, fingerprint: model.fingerprint })
}

/// Phase ramp of a target closing at `radial_velocity_mps`; use `-v` to compensate.
pub fn apply_doppler(y: &MeasurementSet, radial_velocity_mps: f64, sample_interval_s: f64, wavelength_m: f64) -> Result<MeasurementSet> {
    if !radial_velocity_mps.is_finite() {
        return Err(param("radial velocity must be finite"));
    }
    let rate = 2.0 * PI * 2.0 * radial_velocity_mps * sample_interval_s / wavelength_m;
    let out = y
        .y
        .iter()
        .enumerate()
        .map(|(t, v)| v * Complex64::from_polar(1.0, rate * t as f64))
        .collect();
    Ok(y.with_y(out))
}

/// Multiplies each sample by `exp(i φ(t))`.
pub fn apply_blade_phase(y: &MeasurementSet, phase_profile: &[f64]) -> Result<MeasurementSet> {
    if phase_profile.len() != y.len() {
        return Err(Error::Shape(format!(
            "phase profile has {} samples, measurements have {}",
            phase_profile.len(),
            y.len()
        )));
    }
    let out = y.y.iter().zip(phase_profile).map(|(v, &p)| v * Complex64::from_polar(1.0, p)).collect();
    Ok(y.with_y(out))
}

/// Low-harmonic blade phase fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BladePhaseEstimator {
    pub blade_count: u32,
    /// Highest multiple of the blade frequency kept in the fit.
    pub harmonics: usize,
    /// Samples excluded on each side of a detected null.
    pub null_guard: usize,
}

impl BladePhaseEstimator {
    pub fn new(blade_count: u32) -> Self {
        Self { blade_count, harmonics: 2, null_guard: 10 }
    }

    /// Estimates the systematic phase `φ(t)` from a single calibration target.
    ///
    /// `reference` is the modeled return of the calibration target; when given,
    /// the fit runs on `arg(y / reference)`, otherwise on `arg(y)`. Samples in and
    /// near mask nulls (below half the median magnitude) are left out. The
    /// returned profile contains only multiples of the blade frequency up to
    /// `harmonics * blade_count` and has zero mean.
    pub fn estimate(
        &self,
        y_cal: &MeasurementSet,
        reference: Option<&[Complex64]>,
        rotation: &RotationSampling,
    ) -> Result<Vec<f64>> {
        let n = y_cal.len();
        if rotation.len() != n {
            return Err(Error::Shape(format!("{} measurements for {} rotation positions", n, rotation.len())));
        }
        let z: Vec<Complex64> = match reference {
            Some(r) if r.len() != n => {
                return Err(Error::Shape("reference length differs from measurements".into()))
            }
            Some(r) => y_cal.y.iter().zip(r).map(|(a, b)| a / b).collect(),
            None => y_cal.y.clone(),
        };
        let mags: Vec<f64> = y_cal.y.iter().map(|v| v.norm()).collect();
        let mut sorted = mags.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[n / 2];
        let mut valid = vec![true; n];
        for (i, &m) in mags.iter().enumerate() {
            if !(m >= 0.5 * median) || !z[i].re.is_finite() || !z[i].im.is_finite() {
                let g = self.null_guard as isize;
                for k in -g..=g {
                    valid[(i as isize + k).rem_euclid(n as isize) as usize] = false;
                }
            }
        }
        let idx: Vec<usize> = (0..n).filter(|&i| valid[i]).collect();
        if idx.len() * 2 < n {
            return Err(Error::Estimation(format!(
                "only {} of {n} samples usable after masking nulls",
                idx.len()
            )));
        }
        // unwrap along the valid samples only
        let mut phase = Vec::with_capacity(idx.len());
        let mut prev = z[idx[0]].arg();
        phase.push(prev);
        for &i in &idx[1..] {
            let a = z[i].arg();
            let d = (a - prev + PI).rem_euclid(2.0 * PI) - PI;
            let p = phase.last().unwrap() + d;
            phase.push(p);
            prev = a;
        }
        let b = self.blade_count.max(1) as f64;
        let cols = 1 + 2 * self.harmonics;
        let basis = |theta: f64, c: usize| -> f64 {
            if c == 0 {
                return 1.0;
            }
            let k = ((c + 1) / 2) as f64;
            if c % 2 == 1 {
                (k * b * theta).cos()
            } else {
                (k * b * theta).sin()
            }
        };
        let a = Mat::<f64>::from_fn(idx.len(), cols, |r, c| basis(rotation.angles_rad[idx[r]], c));
        let rhs = Mat::<f64>::from_fn(idx.len(), 1, |r, _| phase[r]);
        let coef = a.qr().solve_lstsq(&rhs);
        Ok(rotation
            .angles_rad
            .iter()
            .map(|&th| (1..cols).map(|c| coef[(c, 0)] * basis(th, c)).sum())
            .collect())
    }
}
