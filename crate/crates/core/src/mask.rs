//! Time-variant transmission of the rotating mask.
//!
//! A transmission map holds one value per (rotation position, mask sample).
//! Every map used here is two-valued: `inside` on the blade footprint and
//! `outside` elsewhere (blended by the coverage fraction on soft edges), so it
//! is stored as the two levels plus the sparse footprint cells of each row.

use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::geometry::{blade_footprint, MaskGeometry, MaskMode, MaskPlaneSampling, RotationSampling};

#[derive(Debug, Clone, PartialEq)]
pub struct MaskTransmission {
    rows: usize,
    samples: usize,
    outside: f64,
    inside: f64,
    footprints: Vec<Vec<(u32, f64)>>,
    pub mode: Option<MaskMode>,
    pub base_attenuation_amp: f64,
}

impl MaskTransmission {
    /// All-open map (`O`): transmission one everywhere.
    pub fn open(rows: usize, samples: usize) -> Self {
        Self {
            rows,
            samples,
            outside: 1.0,
            inside: 1.0,
            footprints: vec![Vec::new(); rows],
            mode: None,
            base_attenuation_amp: 1.0,
        }
    }

    pub fn uniform(rows: usize, samples: usize, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Parameter(format!("transmission {value} outside [0, 1]")));
        }
        Ok(Self { outside: value, inside: value, ..Self::open(rows, samples) })
    }

    /// Two-level map with caller-supplied footprint cells per row.
    pub fn custom(samples: usize, outside: f64, inside: f64, mut footprints: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        for v in [outside, inside] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parameter(format!("transmission {v} outside [0, 1]")));
            }
        }
        for row in &mut footprints {
            row.sort_by_key(|c| c.0);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Parameter("footprint lists a cell twice".into()));
            }
            if row.iter().any(|&(m, c)| m as usize >= samples || !(0.0..=1.0).contains(&c)) {
                return Err(Error::Parameter("footprint cell out of range".into()));
            }
        }
        Ok(Self { rows: footprints.len(), samples, outside, inside, footprints, mode: None, base_attenuation_amp: outside })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn outside(&self) -> f64 {
        self.outside
    }

    pub fn inside(&self) -> f64 {
        self.inside
    }

    /// Footprint cells of row `t`, sorted by sample index, with coverage.
    pub fn footprint(&self, t: usize) -> &[(u32, f64)] {
        &self.footprints[t]
    }

    pub fn value(&self, t: usize, m: usize) -> f64 {
        let cov = match self.footprints[t].binary_search_by_key(&(m as u32), |c| c.0) {
            Ok(k) => self.footprints[t][k].1,
            Err(_) => 0.0,
        };
        self.outside + (self.inside - self.outside) * cov
    }

    pub fn row_dense(&self, t: usize) -> Vec<f64> {
        let mut row = vec![self.outside; self.samples];
        for &(m, cov) in &self.footprints[t] {
            row[m as usize] = self.outside + (self.inside - self.outside) * cov;
        }
        row
    }
}

fn footprints(mask: &MaskGeometry, rotation: &RotationSampling, plane: &MaskPlaneSampling) -> Result<Vec<Vec<(u32, f64)>>> {
    mask.validate()?;
    let taper = if mask.soft_edges { 0.25 * plane.spacing_m } else { 0.0 };
    rotation
        .angles_rad
        .iter()
        .map(|&a| Ok(plane.footprint_cells(&blade_footprint(mask, a)?.with_taper(taper))))
        .collect()
}

/// Opaque sheet (leaking the material amplitude) with a hole on the blade.
pub fn regular_pinhole(mask: &MaskGeometry, rotation: &RotationSampling, plane: &MaskPlaneSampling) -> Result<MaskTransmission> {
    let leak = mask.attenuation_amplitude();
    Ok(MaskTransmission {
        rows: rotation.len(),
        samples: plane.len(),
        outside: leak,
        inside: 1.0,
        footprints: footprints(mask, rotation, plane)?,
        mode: Some(MaskMode::RegularPinhole),
        base_attenuation_amp: leak,
    })
}

/// Transparent field with a blocker of the material amplitude on the blade.
pub fn inverse_pinhole(mask: &MaskGeometry, rotation: &RotationSampling, plane: &MaskPlaneSampling) -> Result<MaskTransmission> {
    let leak = mask.attenuation_amplitude();
    Ok(MaskTransmission {
        rows: rotation.len(),
        samples: plane.len(),
        outside: 1.0,
        inside: leak,
        footprints: footprints(mask, rotation, plane)?,
        mode: Some(MaskMode::InversePinhole),
        base_attenuation_amp: leak,
    })
}

/// Transmission for the mask's configured mode.
pub fn transmission_for(mask: &MaskGeometry, rotation: &RotationSampling, plane: &MaskPlaneSampling) -> Result<MaskTransmission> {
    match mask.mode {
        MaskMode::RegularPinhole => regular_pinhole(mask, rotation, plane),
        MaskMode::InversePinhole => inverse_pinhole(mask, rotation, plane),
    }
}

/// Return of one scene point over a rotation and the dips found in it.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSignature {
    pub trace: Vec<f64>,
    pub median: f64,
    /// Index of the deepest sample in each dip, in rotation order.
    pub nulls: Vec<usize>,
    /// Depth of each dip below the median, dB (amplitude).
    pub null_depths_db: Vec<f64>,
    /// Depth of the deepest sample below the median, dB.
    pub dip_db: f64,
}

/// `|B e_j|` over the rotation; a dip is a circular run below half the median.
pub fn null_signature(model: &ForwardModel, target_index: usize) -> Result<NullSignature> {
    if target_index >= model.matrix.cols() {
        return Err(Error::Parameter(format!("target index {target_index} outside the scene")));
    }
    let trace: Vec<f64> = model.matrix.column(target_index).iter().map(|z| z.norm()).collect();
    Ok(find_nulls(trace))
}

pub fn find_nulls(trace: Vec<f64>) -> NullSignature {
    let n = trace.len();
    let mut sorted = trace.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let threshold = 0.5 * median;
    let below: Vec<bool> = trace.iter().map(|&v| v < threshold).collect();
    let mut nulls = Vec::new();
    if n > 0 && !below.iter().all(|&b| b) {
        // start scanning just after a sample above threshold so runs never straddle the start
        let start = below.iter().position(|&b| !b).unwrap();
        let mut k = 0;
        while k < n {
            let i = (start + k) % n;
            if below[i] {
                let mut best = i;
                while k < n && below[(start + k) % n] {
                    let j = (start + k) % n;
                    if trace[j] < trace[best] {
                        best = j;
                    }
                    k += 1;
                }
                nulls.push(best);
            } else {
                k += 1;
            }
        }
        nulls.sort_unstable();
    }
    let db = |v: f64| 20.0 * (median / v.max(f64::MIN_POSITIVE)).log10();
    let null_depths_db = nulls.iter().map(|&i| db(trace[i])).collect();
    let dip_db = sorted.first().map(|&m| db(m)).unwrap_or(0.0);
    NullSignature { trace, median, nulls, null_depths_db, dip_db }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MaskGeometry;

    fn setup(blades: u32) -> (MaskGeometry, RotationSampling, MaskPlaneSampling) {
        let mask = MaskGeometry { blade_count: blades, attenuation_db: f64::INFINITY, ..Default::default() };
        let rot = RotationSampling::uniform(64, 600.0).unwrap();
        let plane = MaskPlaneSampling::for_mask(&mask, 4e-3).unwrap();
        (mask, rot, plane)
    }

    #[test]
    fn regular_hole_area_is_constant() {
        let (mask, rot, plane) = setup(1);
        let tr = regular_pinhole(&mask, &rot, &plane).unwrap();
        let expected = mask.blade_length_m * mask.blade_width_m / plane.cell_area();
        for t in 0..rot.len() {
            let s: f64 = tr.row_dense(t).iter().sum();
            assert!((s - expected).abs() / expected < 0.1, "row {t}: {s} vs {expected}");
        }
    }

    #[test]
    fn regular_values_are_binary_and_opposite_holes_disjoint() {
        let (mask, rot, plane) = setup(1);
        let tr = regular_pinhole(&mask, &rot, &plane).unwrap();
        let a = tr.row_dense(0);
        let b = tr.row_dense(32); // angle π
        assert!(a.iter().all(|&v| v == 0.0 || v == 1.0));
        // only the cells on the rotation axis may be shared
        let shared: Vec<usize> = (0..a.len()).filter(|&m| a[m] == 1.0 && b[m] == 1.0).collect();
        for m in shared {
            let p = plane.samples[m];
            assert!(p.y.abs() < 1e-12, "shared cell away from the axis: {p:?}");
        }
    }

    #[test]
    fn inverse_in_footprint_amplitudes() {
        let (mut mask, rot, plane) = setup(1);
        mask.attenuation_db = 30.0;
        let tr = inverse_pinhole(&mask, &rot, &plane).unwrap();
        assert!((tr.inside() - 0.031_622_776_6).abs() < 1e-9);
        assert_eq!(tr.outside(), 1.0);
        mask.attenuation_db = 9.0;
        let tr = inverse_pinhole(&mask, &rot, &plane).unwrap();
        assert!((tr.inside() - 0.354_813_389_2).abs() < 1e-9);
    }

    #[test]
    fn ideal_complementarity() {
        let (mask, rot, plane) = setup(2);
        let r = regular_pinhole(&mask, &rot, &plane).unwrap();
        let i = inverse_pinhole(&mask, &rot, &plane).unwrap();
        for t in [0, 7, 33] {
            let (a, b) = (r.row_dense(t), i.row_dense(t));
            assert!(a.iter().zip(&b).all(|(x, y)| x + y == 1.0));
        }
    }

    #[test]
    fn soft_edges_stay_in_unit_interval() {
        let (mut mask, rot, plane) = setup(1);
        mask.soft_edges = true;
        mask.attenuation_db = 12.0;
        let tr = inverse_pinhole(&mask, &rot, &plane).unwrap();
        let row = tr.row_dense(5);
        assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(row.iter().any(|&v| v > tr.inside() && v < 1.0));
    }

    #[test]
    fn three_blades_unsupported() {
        let (mut mask, rot, plane) = setup(1);
        mask.blade_count = 3;
        assert!(matches!(inverse_pinhole(&mask, &rot, &plane), Err(Error::Unsupported(_))));
    }

    #[test]
    fn null_finder_counts_circular_dips() {
        let n = 100;
        let mut trace = vec![1.0; n];
        trace[10] = 0.1;
        trace[11] = 0.2;
        trace[99] = 0.05;
        trace[0] = 0.3; // wraps around with 99
        trace[50] = 0.45;
        let s = find_nulls(trace);
        assert_eq!(s.nulls, vec![10, 50, 99]);
        assert!((s.dip_db - 26.0206).abs() < 1e-3);
    }
}
