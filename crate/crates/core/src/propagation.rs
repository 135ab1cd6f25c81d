//! One-way field transfer from an antenna through the mask plane to the scene.
//!
//! Every mask-plane sample acts as a secondary source (first Rayleigh-Sommerfeld
//! solution): it is illuminated by the antenna's pattern-weighted spherical
//! wave and re-radiates towards each scene point with an obliquity factor.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::geometry::{MaskGeometry, MaskPlaneSampling, RadarConfig, RotationSampling, SceneGrid, Vec3};
use crate::linalg::CMatrix;
use crate::mask::MaskTransmission;

/// Spherical wave `exp(i 2π d / λ) / d`.
pub fn greens(p: Vec3, q: Vec3, wavelength_m: f64) -> Result<Complex64> {
    let d = p.distance(q);
    if d == 0.0 {
        return Err(Error::Singularity("coincident source and observation points".into()));
    }
    Ok(greens_at(d, wavelength_m))
}

#[inline]
fn greens_at(d: f64, wavelength_m: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * d / wavelength_m).sin_cos();
    Complex64::new(c / d, s / d)
}

/// Secondary-source factor `cosχ · greens / (iλ)` of the first RS solution.
pub fn rs_weight(source: Vec3, dest: Vec3, plane_normal: Vec3, wavelength_m: f64) -> Result<Complex64> {
    rs_weight_with(source, dest, plane_normal, wavelength_m, true)
}

/// As [`rs_weight`], optionally dropping the obliquity cosine.
pub fn rs_weight_with(
    source: Vec3,
    dest: Vec3,
    plane_normal: Vec3,
    wavelength_m: f64,
    obliquity: bool,
) -> Result<Complex64> {
    let g = greens(source, dest, wavelength_m)?;
    let cos_chi = if obliquity {
        (dest - source).dot(plane_normal.normalized()) / source.distance(dest)
    } else {
        1.0
    };
    Ok(g * cos_chi / Complex64::new(0.0, wavelength_m))
}

/// Amplitude weight as a function of one angle (radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PatternShape {
    /// `cos(angle)^exponent` inside ±90°, zero beyond.
    CosinePower { exponent: f64 },
    /// Linearly interpolated `(angle_deg, amplitude)` table, clamped at the ends.
    Tabulated { angles_deg: Vec<f64>, amplitude: Vec<f64> },
}

impl PatternShape {
    /// Cosine power whose amplitude falls to `1/√2` (half power) at `half_angle_deg`.
    pub fn from_half_power(half_angle_deg: f64) -> Result<Self> {
        if !(half_angle_deg > 0.0 && half_angle_deg < 90.0) {
            return Err(param(format!("half-power angle {half_angle_deg} outside (0, 90)")));
        }
        let exponent = 0.5f64.sqrt().ln() / half_angle_deg.to_radians().cos().ln();
        Ok(PatternShape::CosinePower { exponent })
    }

    /// Parses rows of `angle_deg amplitude`; `#` starts a comment.
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut angles_deg = Vec::new();
        let mut amplitude = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(w)), None) => {
                    angles_deg.push(a);
                    amplitude.push(w);
                }
                _ => return Err(Error::Format(format!("pattern table line {}: expected 'angle amplitude'", n + 1))),
            }
        }
        if angles_deg.len() < 2 {
            return Err(Error::Format("pattern table needs at least two rows".into()));
        }
        if angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Format("pattern table angles must increase".into()));
        }
        if amplitude.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Format("pattern table amplitudes must be non-negative".into()));
        }
        Ok(PatternShape::Tabulated { angles_deg, amplitude })
    }

    pub fn weight(&self, angle_rad: f64) -> f64 {
        match self {
            PatternShape::CosinePower { exponent } => {
                if angle_rad.abs() >= 0.5 * PI {
                    0.0
                } else {
                    angle_rad.cos().powf(*exponent)
                }
            }
            PatternShape::Tabulated { angles_deg, amplitude } => {
                let a = angle_rad.to_degrees();
                let n = angles_deg.len();
                if a <= angles_deg[0] {
                    return amplitude[0];
                }
                if a >= angles_deg[n - 1] {
                    return amplitude[n - 1];
                }
                let k = angles_deg.partition_point(|&x| x <= a);
                let (a0, a1) = (angles_deg[k - 1], angles_deg[k]);
                let f = (a - a0) / (a1 - a0);
                amplitude[k - 1] * (1.0 - f) + amplitude[k] * f
            }
        }
    }
}

/// Separable antenna sensitivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaPattern {
    pub azimuth_shape: PatternShape,
    pub elevation_shape: PatternShape,
}

impl AntennaPattern {
    pub fn from_beamwidths(az_half_deg: f64, el_half_deg: f64) -> Result<Self> {
        Ok(Self {
            azimuth_shape: PatternShape::from_half_power(az_half_deg)?,
            elevation_shape: PatternShape::from_half_power(el_half_deg)?,
        })
    }

    /// Isotropic pattern (all weights one).
    pub fn isotropic() -> Self {
        let flat = PatternShape::CosinePower { exponent: 0.0 };
        Self { azimuth_shape: flat.clone(), elevation_shape: flat }
    }
}

pub fn pattern_weight(pattern: &AntennaPattern, direction: Vec3) -> f64 {
    let (az, el) = direction.az_el();
    pattern.azimuth_shape.weight(az) * pattern.elevation_shape.weight(el)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AntennaEnd {
    Tx,
    Rx,
}

/// Pattern and kernel choices shared by all assemblies of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationSettings {
    pub pattern: AntennaPattern,
    pub obliquity: bool,
}

impl PropagationSettings {
    pub fn for_radar(radar: &RadarConfig) -> Result<Self> {
        Ok(Self {
            pattern: AntennaPattern::from_beamwidths(radar.azimuth_fov_deg, radar.elevation_fov_deg)?,
            obliquity: true,
        })
    }
}

/// One-way transfer matrix, rows = rotation positions, columns = scene points.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationMatrix {
    pub entries: CMatrix,
    pub direction: AntennaEnd,
}

#[allow(clippy::too_many_arguments)]
pub fn assemble_oneway(
    radar: &RadarConfig,
    grid: &SceneGrid,
    mask: &MaskGeometry,
    rotation: &RotationSampling,
    plane: &MaskPlaneSampling,
    end: AntennaEnd,
    transmission: &MaskTransmission,
    settings: &PropagationSettings,
) -> Result<PropagationMatrix> {
    let antenna = match end {
        AntennaEnd::Tx => radar.tx_position,
        AntennaEnd::Rx => radar.rx_position,
    };
    mask.validate()?;
    let mut out = assemble_ends(&[antenna], radar, grid, rotation, plane, transmission, settings)?;
    Ok(PropagationMatrix { entries: out.pop().expect("one end"), direction: end })
}

/// Assembles the one-way matrices of several antennas in one pass over the
/// mask plane; the plane-to-scene kernel is shared between them.
///
/// Entry `(t, j)` is `Σ_m a_e(m) T_t(m) w(m, j)` with `a_e` the pattern-weighted
/// antenna illumination times the cell area and `w` the RS weight. Since
/// `T_t(m) = outside + (inside - outside) c_t(m)`, this is the time-invariant
/// open term plus a sparse sum over the cells each footprint touches.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble_ends(
    antennas: &[Vec3],
    radar: &RadarConfig,
    grid: &SceneGrid,
    rotation: &RotationSampling,
    plane: &MaskPlaneSampling,
    transmission: &MaskTransmission,
    settings: &PropagationSettings,
) -> Result<Vec<CMatrix>> {
    radar.validate()?;
    let n_rows = rotation.len();
    let n_pts = grid.len();
    let n_ends = antennas.len();
    if transmission.rows() != n_rows {
        return Err(Error::Shape(format!(
            "transmission has {} rotation positions, sampling has {n_rows}",
            transmission.rows()
        )));
    }
    if transmission.samples() != plane.len() {
        return Err(Error::Shape(format!(
            "transmission covers {} mask samples, plane sampling has {}",
            transmission.samples(),
            plane.len()
        )));
    }
    let lambda = radar.wavelength_m;
    let normal = Vec3::new(0.0, 0.0, 1.0);
    let area = plane.cell_area();

    // Antenna illumination of every mask sample.
    let mut illum = vec![Complex64::new(0.0, 0.0); n_ends * plane.len()];
    for (e, &ant) in antennas.iter().enumerate() {
        for (m, &p) in plane.samples.iter().enumerate() {
            let d = p - ant;
            let g = greens(ant, p, lambda)?;
            illum[e * plane.len() + m] = g * pattern_weight(&settings.pattern, d.normalized()) * area;
        }
    }

    let outside = transmission.outside();
    let delta = transmission.inside() - outside;
    let footprints: Vec<&[(u32, f64)]> = (0..n_rows).map(|t| transmission.footprint(t)).collect();
    let mut cursor = vec![0usize; n_rows];

    let mut open = vec![Complex64::new(0.0, 0.0); n_ends * n_pts];
    // Layout [t][e][j].
    let mut acc = vec![Complex64::new(0.0, 0.0); n_rows * n_ends * n_pts];
    let side = plane.side;
    let mut kernel = vec![Complex64::new(0.0, 0.0); side * n_pts];

    for block in 0..side {
        let first = block * side;
        let last = first + side;
        let any_scatter = delta != 0.0
            && footprints
                .iter()
                .zip(&cursor)
                .any(|(fp, &c)| fp.get(c).is_some_and(|&(m, _)| (m as usize) < last));
        if outside == 0.0 && !any_scatter {
            continue;
        }
        kernel.par_chunks_mut(n_pts).enumerate().for_each(|(k, row)| {
            let src = plane.samples[first + k];
            for (w, &dst) in row.iter_mut().zip(&grid.points) {
                let d = src.distance(dst);
                let cos_chi = if settings.obliquity { (dst - src).dot(normal) / d } else { 1.0 };
                *w = greens_at(d, lambda) * (cos_chi / lambda) * Complex64::new(0.0, -1.0);
            }
        });
        if outside != 0.0 {
            for e in 0..n_ends {
                let dst = &mut open[e * n_pts..(e + 1) * n_pts];
                for k in 0..side {
                    let a = illum[e * plane.len() + first + k] * outside;
                    axpy(dst, a, &kernel[k * n_pts..(k + 1) * n_pts]);
                }
            }
        }
        if any_scatter {
            let spans: Vec<(usize, usize)> = footprints
                .iter()
                .zip(cursor.iter_mut())
                .map(|(fp, c)| {
                    let start = *c;
                    while *c < fp.len() && (fp[*c].0 as usize) < last {
                        *c += 1;
                    }
                    (start, *c)
                })
                .collect();
            acc.par_chunks_mut(n_ends * n_pts).enumerate().for_each(|(t, row)| {
                let (s, e_idx) = spans[t];
                for &(m, cov) in &footprints[t][s..e_idx] {
                    let local = m as usize - first;
                    let w = &kernel[local * n_pts..(local + 1) * n_pts];
                    for e in 0..n_ends {
                        let a = illum[e * plane.len() + m as usize] * (delta * cov);
                        axpy(&mut row[e * n_pts..(e + 1) * n_pts], a, w);
                    }
                }
            });
        }
    }

    let mut out = Vec::with_capacity(n_ends);
    for e in 0..n_ends {
        let base = &open[e * n_pts..(e + 1) * n_pts];
        let mut mat = CMatrix::zeros(n_rows, n_pts);
        for t in 0..n_rows {
            let src = &acc[(t * n_ends + e) * n_pts..(t * n_ends + e + 1) * n_pts];
            for ((o, b), a) in mat.row_mut(t).iter_mut().zip(base).zip(src) {
                *o = b + a;
            }
        }
        if !mat.is_finite() {
            return Err(Error::Numeric("non-finite propagation entries".into()));
        }
        out.push(mat);
    }
    Ok(out)
}

#[inline]
fn axpy(dst: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}
