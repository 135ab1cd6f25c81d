//! Coordinate frames, scene discretization, antenna placement and the
//! rotating-mask geometry.
//!
//! Frame: the antenna plane is `z = 0`, boresight is `+z`, the rotation axis
//! is the `z` axis and the mask plane sits at `z = plane_depth_m`. Azimuth is
//! measured in the `x`-`z` plane, elevation towards `+y`. The antenna pair is
//! mounted below the axis at `y = -axis_offset_m`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Unit direction from spherical angles (degrees).
    pub fn from_az_el_deg(az_deg: f64, el_deg: f64) -> Vec3 {
        let (az, el) = (az_deg.to_radians(), el_deg.to_radians());
        Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos())
    }

    /// Azimuth and elevation (radians) of this direction.
    pub fn az_el(self) -> (f64, f64) {
        let horiz = (self.x * self.x + self.z * self.z).sqrt();
        (self.x.atan2(self.z), self.y.atan2(horiz))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

pub const DEFAULT_WAVELENGTH_M: f64 = 4.0e-3;

/// Radar front end: carrier wavelength, antenna positions and beamwidths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub wavelength_m: f64,
    pub tx_position: Vec3,
    pub rx_position: Vec3,
    /// Half-power half-angle in azimuth.
    pub azimuth_fov_deg: f64,
    /// Half-power half-angle in elevation.
    pub elevation_fov_deg: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self::mounted(DEFAULT_WAVELENGTH_M, 0.12, 0.01)
    }
}

impl RadarConfig {
    /// Tx/Rx pair centered at `(0, -axis_offset_m, 0)`, separated along azimuth.
    pub fn mounted(wavelength_m: f64, axis_offset_m: f64, separation_m: f64) -> Self {
        let half = 0.5 * separation_m;
        Self {
            wavelength_m,
            tx_position: Vec3::new(-half, -axis_offset_m, 0.0),
            rx_position: Vec3::new(half, -axis_offset_m, 0.0),
            azimuth_fov_deg: 50.0,
            elevation_fov_deg: 20.0,
        }
    }

    /// Single antenna acting as both Tx and Rx.
    pub fn colocated(wavelength_m: f64, axis_offset_m: f64) -> Self {
        Self::mounted(wavelength_m, axis_offset_m, 0.0)
    }

    pub fn is_colocated(&self) -> bool {
        self.tx_position == self.rx_position
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_m > 0.0 && self.wavelength_m.is_finite()) {
            return Err(param("radar.wavelength_m must be positive"));
        }
        for (name, v) in [
            ("radar.azimuth_fov_deg", self.azimuth_fov_deg),
            ("radar.elevation_fov_deg", self.elevation_fov_deg),
        ] {
            if !(v > 0.0 && v < 90.0) {
                return Err(param(format!("{name} must lie in (0, 90), got {v}")));
            }
        }
        if !self.tx_position.is_finite() || !self.rx_position.is_finite() {
            return Err(param("radar antenna positions must be finite"));
        }
        Ok(())
    }
}

/// Reflectivity domain: a set of directions at one fixed range.
///
/// Points are stored elevation-major: index `e * n_az + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGrid {
    pub range_m: f64,
    pub azimuth_deg: Vec<f64>,
    pub elevation_deg: Vec<f64>,
    pub points: Vec<Vec3>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

pub fn build_scene_grid(
    range_m: f64,
    az_min_deg: f64,
    az_max_deg: f64,
    az_step_deg: f64,
    el_list_deg: &[f64],
) -> Result<SceneGrid> {
    if !(az_step_deg > 0.0) {
        return Err(param(format!("azimuth step must be positive, got {az_step_deg}")));
    }
    if !(range_m > 0.0 && range_m.is_finite()) {
        return Err(param(format!("range must be positive, got {range_m}")));
    }
    if !(az_max_deg >= az_min_deg) {
        return Err(param("azimuth max must not be below azimuth min"));
    }
    let bins = ((az_max_deg - az_min_deg) / az_step_deg - 1e-9).ceil().max(0.0) as usize + 1;
    let azimuth: Vec<f64> = (0..bins).map(|i| az_min_deg + i as f64 * az_step_deg).collect();
    SceneGrid::from_angles(range_m, azimuth, el_list_deg.to_vec())
}

impl SceneGrid {
    pub fn from_angles(range_m: f64, azimuth_deg: Vec<f64>, elevation_deg: Vec<f64>) -> Result<Self> {
        if !(range_m > 0.0 && range_m.is_finite()) {
            return Err(param(format!("range must be positive, got {range_m}")));
        }
        if azimuth_deg.is_empty() || elevation_deg.is_empty() {
            return Err(param("scene grid needs at least one azimuth and one elevation"));
        }
        if !strictly_increasing(&azimuth_deg) || !strictly_increasing(&elevation_deg) {
            return Err(param("scene grid angles must be strictly increasing"));
        }
        let points = elevation_deg
            .iter()
            .flat_map(|&el| azimuth_deg.iter().map(move |&az| Vec3::from_az_el_deg(az, el) * range_m))
            .collect();
        Ok(Self { range_m, azimuth_deg, elevation_deg, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_azimuth(&self) -> usize {
        self.azimuth_deg.len()
    }

    pub fn n_elevation(&self) -> usize {
        self.elevation_deg.len()
    }

    pub fn index(&self, az_idx: usize, el_idx: usize) -> usize {
        el_idx * self.n_azimuth() + az_idx
    }

    pub fn azimuth_step_deg(&self) -> f64 {
        if self.azimuth_deg.len() < 2 {
            0.0
        } else {
            self.azimuth_deg[1] - self.azimuth_deg[0]
        }
    }

    /// Nearest azimuth bin; errors if the angle falls outside the grid.
    pub fn azimuth_index(&self, az_deg: f64) -> Result<usize> {
        nearest_bin(&self.azimuth_deg, az_deg)
            .ok_or_else(|| param(format!("azimuth {az_deg} deg lies outside the scene grid")))
    }

    pub fn elevation_index(&self, el_deg: f64) -> Result<usize> {
        nearest_bin(&self.elevation_deg, el_deg)
            .ok_or_else(|| param(format!("elevation {el_deg} deg lies outside the scene grid")))
    }

    /// Point index of the bin nearest to `(az, el)`.
    pub fn point_index(&self, az_deg: f64, el_deg: f64) -> Result<usize> {
        Ok(self.index(self.azimuth_index(az_deg)?, self.elevation_index(el_deg)?))
    }
}

fn nearest_bin(bins: &[f64], v: f64) -> Option<usize> {
    let half = if bins.len() > 1 { 0.5 * (bins[1] - bins[0]).abs().min((bins[bins.len() - 1] - bins[bins.len() - 2]).abs()) } else { 1e-9 };
    if v < bins[0] - half - 1e-9 || v > bins[bins.len() - 1] + half + 1e-9 {
        return None;
    }
    bins.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Opaque sheet with a hole tracking the blade.
    RegularPinhole,
    /// Transparent support with a blocker along the blade.
    InversePinhole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskGeometry {
    pub blade_count: u32,
    pub blade_length_m: f64,
    pub blade_width_m: f64,
    pub plane_depth_m: f64,
    pub axis_offset_m: f64,
    /// One-way power attenuation of the blocker material; may be infinite.
    pub attenuation_db: f64,
    pub mode: MaskMode,
    /// Raised-cosine taper over half a mask-plane cell at the blade edges.
    pub soft_edges: bool,
}

impl Default for MaskGeometry {
    fn default() -> Self {
        Self {
            blade_count: 1,
            blade_length_m: 0.16,
            blade_width_m: 4.0 * DEFAULT_WAVELENGTH_M,
            plane_depth_m: 0.12,
            axis_offset_m: 0.12,
            attenuation_db: 30.0,
            mode: MaskMode::InversePinhole,
            soft_edges: false,
        }
    }
}

impl MaskGeometry {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.blade_count, 1 | 2) {
            return Err(Error::Unsupported(format!(
                "blade_count = {} (only 1 or 2 blades are modeled)",
                self.blade_count
            )));
        }
        if !(self.blade_width_m > 0.0 && self.blade_length_m > 0.5 * self.blade_width_m) {
            return Err(param("mask requires blade_length_m > blade_width_m / 2 > 0"));
        }
        if !(self.plane_depth_m > 0.0) {
            return Err(param("mask.plane_depth_m must be positive"));
        }
        if !(self.attenuation_db >= 0.0) {
            return Err(param("mask.attenuation_db must be non-negative"));
        }
        if !self.axis_offset_m.is_finite() {
            return Err(param("mask.axis_offset_m must be finite"));
        }
        Ok(())
    }

    /// Amplitude transmitted through the blocker material, `10^(-dB/20)`.
    pub fn attenuation_amplitude(&self) -> f64 {
        if self.attenuation_db.is_infinite() {
            0.0
        } else {
            10f64.powf(-self.attenuation_db / 20.0)
        }
    }
}

/// Half-angle field of view set by the blade reach and mask depth, degrees.
pub fn effective_fov_deg(mask: &MaskGeometry) -> f64 {
    (mask.blade_length_m / mask.plane_depth_m).atan().to_degrees()
}

/// Discrete rotation positions of the mask over one revolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSampling {
    pub positions_per_rotation: usize,
    pub angles_rad: Vec<f64>,
    pub rpm: f64,
}

impl Default for RotationSampling {
    fn default() -> Self {
        Self::uniform(1000, 600.0).expect("default rotation sampling is valid")
    }
}

impl RotationSampling {
    pub fn uniform(positions_per_rotation: usize, rpm: f64) -> Result<Self> {
        if positions_per_rotation == 0 {
            return Err(param("positions_per_rotation must be positive"));
        }
        if !(rpm > 0.0) {
            return Err(param("rpm must be positive"));
        }
        let step = 2.0 * PI / positions_per_rotation as f64;
        let angles_rad = (0..positions_per_rotation).map(|i| i as f64 * step).collect();
        Ok(Self { positions_per_rotation, angles_rad, rpm })
    }

    /// Arbitrary (e.g. wobbling) blade angles sampled at the nominal radar rate.
    pub fn from_angles(angles_rad: Vec<f64>, positions_per_rotation: usize, rpm: f64) -> Result<Self> {
        if angles_rad.is_empty() || positions_per_rotation == 0 || !(rpm > 0.0) {
            return Err(param("rotation sampling needs angles, positions and a positive rpm"));
        }
        Ok(Self { positions_per_rotation, angles_rad, rpm })
    }

    pub fn len(&self) -> usize {
        self.angles_rad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_rad.is_empty()
    }

    /// Radar sample interval implied by the nominal rate.
    pub fn sample_interval_s(&self) -> f64 {
        60.0 / (self.rpm * self.positions_per_rotation as f64)
    }
}

/// Square grid of secondary-source samples on the mask plane.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlaneSampling {
    pub spacing_m: f64,
    pub extent_m: f64,
    /// Samples per side; coordinates are `i * spacing_m` for `|i| <= side / 2`.
    pub side: usize,
    pub samples: Vec<Vec3>,
}

impl MaskPlaneSampling {
    /// Default sampling: pitch `λ/2`, extent covering the swept disc plus a blade width.
    pub fn for_mask(mask: &MaskGeometry, wavelength_m: f64) -> Result<Self> {
        Self::new(mask, wavelength_m, 0.5 * wavelength_m, mask.blade_length_m + mask.blade_width_m)
    }

    pub fn new(mask: &MaskGeometry, wavelength_m: f64, spacing_m: f64, extent_m: f64) -> Result<Self> {
        if !(spacing_m > 0.0) || spacing_m > 0.5 * wavelength_m * (1.0 + 1e-12) {
            return Err(param(format!(
                "mask-plane spacing {spacing_m} must be positive and at most wavelength/2"
            )));
        }
        let needed = mask.blade_length_m + mask.blade_width_m;
        if extent_m < needed * (1.0 - 1e-12) {
            return Err(param(format!(
                "mask-plane extent {extent_m} must cover blade length plus width ({needed})"
            )));
        }
        let half = (extent_m / spacing_m - 1e-9).ceil() as i64;
        let side = (2 * half + 1) as usize;
        let mut samples = Vec::with_capacity(side * side);
        for iy in -half..=half {
            for ix in -half..=half {
                samples.push(Vec3::new(ix as f64 * spacing_m, iy as f64 * spacing_m, mask.plane_depth_m));
            }
        }
        Ok(Self { spacing_m, extent_m, side, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing_m * self.spacing_m
    }

    fn half(&self) -> i64 {
        (self.side as i64 - 1) / 2
    }

    pub fn index_of(&self, ix: i64, iy: i64) -> Option<usize> {
        let h = self.half();
        if ix.abs() > h || iy.abs() > h {
            return None;
        }
        Some(((iy + h) as usize) * self.side + (ix + h) as usize)
    }

    /// Cells whose centers lie within the footprint, with their coverage in (0, 1].
    pub fn footprint_cells(&self, fp: &BladeFootprint) -> Vec<(u32, f64)> {
        let (min_x, max_x, min_y, max_y) = fp.bounding_box();
        let s = self.spacing_m;
        let h = self.half();
        let ix0 = ((min_x / s).floor() as i64).max(-h);
        let ix1 = ((max_x / s).ceil() as i64).min(h);
        let iy0 = ((min_y / s).floor() as i64).max(-h);
        let iy1 = ((max_y / s).ceil() as i64).min(h);
        let mut cells = Vec::new();
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                let c = fp.coverage(ix as f64 * s, iy as f64 * s);
                if c > 0.0 {
                    cells.push((self.index_of(ix, iy).unwrap() as u32, c));
                }
            }
        }
        cells
    }
}

const EDGE_TOLERANCE_M: f64 = 1e-12;

/// Region of the mask plane covered by the blades at one rotation angle.
#[derive(Debug, Clone, PartialEq)]
pub struct BladeFootprint {
    blade_angles_rad: Vec<f64>,
    length_m: f64,
    half_width_m: f64,
    /// Half-width of the raised-cosine edge taper; zero for hard edges.
    taper_m: f64,
}

pub fn blade_footprint(mask: &MaskGeometry, rotation_angle_rad: f64) -> Result<BladeFootprint> {
    if !matches!(mask.blade_count, 1 | 2) {
        return Err(Error::Unsupported(format!(
            "blade_count = {} (only 1 or 2 blades are modeled)",
            mask.blade_count
        )));
    }
    let n = mask.blade_count as usize;
    let blade_angles_rad =
        (0..n).map(|b| rotation_angle_rad + 2.0 * PI * b as f64 / n as f64).collect();
    Ok(BladeFootprint {
        blade_angles_rad,
        length_m: mask.blade_length_m,
        half_width_m: 0.5 * mask.blade_width_m,
        taper_m: 0.0,
    })
}

impl BladeFootprint {
    pub fn with_taper(mut self, taper_m: f64) -> Self {
        self.taper_m = taper_m.max(0.0);
        self
    }

    /// Coordinates along and across a blade at angle `a`; angle 0 points along +y.
    fn local(a: f64, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = a.sin_cos();
        (-x * s + y * c, x * c + y * s)
    }

    /// Signed distance inside the union of blades (positive = inside).
    fn inset(&self, x: f64, y: f64) -> f64 {
        self.blade_angles_rad
            .iter()
            .map(|&a| {
                let (along, across) = Self::local(a, x, y);
                along.min(self.length_m - along).min(self.half_width_m - across.abs())
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn covers(&self, p: Vec3) -> bool {
        self.inset(p.x, p.y) >= 0.0
    }

    /// Coverage fraction in `[0, 1]`; binary unless a taper is set.
    pub fn coverage(&self, x: f64, y: f64) -> f64 {
        if self.taper_m == 0.0 {
            return if self.contains_half_open(x, y) { 1.0 } else { 0.0 };
        }
        let d = self.inset(x, y);
        if d >= self.taper_m {
            1.0
        } else if d <= -self.taper_m {
            0.0
        } else {
            0.5 * (1.0 + (0.5 * PI * d / self.taper_m).sin())
        }
    }

    /// Blade rectangles closed on their lower edges and open on their upper
    /// ones, so cell centers on an edge are counted once.
    fn contains_half_open(&self, x: f64, y: f64) -> bool {
        self.blade_angles_rad.iter().any(|&a| {
            let (along, across) = Self::local(a, x, y);
            along >= -EDGE_TOLERANCE_M
                && along < self.length_m - EDGE_TOLERANCE_M
                && across >= -self.half_width_m - EDGE_TOLERANCE_M
                && across < self.half_width_m - EDGE_TOLERANCE_M
        })
    }

    fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let pad = self.half_width_m + self.taper_m;
        let mut b = (-pad, pad, -pad, pad);
        for &a in &self.blade_angles_rad {
            let (s, c) = a.sin_cos();
            let (tx, ty) = (-self.length_m * s, self.length_m * c);
            b.0 = b.0.min(tx - pad);
            b.1 = b.1.max(tx + pad);
            b.2 = b.2.min(ty - pad);
            b.3 = b.3.max(ty + pad);
        }
        b
    }
}
