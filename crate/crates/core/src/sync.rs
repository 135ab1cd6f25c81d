//! Rotation self-synchronization from the mask's near-range signature.

use std::f64::consts::PI;
use std::io::Read;

use faer::prelude::SolveLstsq;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{param, Error, Result};
use crate::forward::MeasurementSet;
use crate::geometry::{blade_footprint, MaskGeometry, MaskPlaneSampling, RadarConfig, RotationSampling};
use crate::propagation::{greens, pattern_weight, PropagationSettings};

/// Near-range return magnitude per radar sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSignature {
    pub samples: Vec<f64>,
    pub nominal_period_samples: usize,
}

impl RotationSignature {
    pub fn new(samples: Vec<f64>, nominal_period_samples: usize) -> Result<Self> {
        if samples.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(param("signature samples must be finite and non-negative"));
        }
        if nominal_period_samples == 0 {
            return Err(param("nominal period must be positive"));
        }
        Ok(Self { samples, nominal_period_samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One magnitude per line; blank lines are skipped.
    pub fn from_csv<R: Read>(reader: R, nominal_period_samples: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Format(format!("signature line {}: {e}", line + 1)))?;
            let Some(field) = rec.get(0).filter(|f| !f.is_empty()) else { continue };
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("signature line {}: '{field}' is not a number", line + 1)))?;
            samples.push(v);
        }
        Self::new(samples, nominal_period_samples)
    }

    /// First `nominal_period_samples` samples, used as the alignment template.
    pub fn first_rotation(&self) -> Result<Self> {
        if self.len() < self.nominal_period_samples {
            return Err(Error::Alignment("signature is shorter than one rotation".into()));
        }
        Self::new(self.samples[..self.nominal_period_samples].to_vec(), self.nominal_period_samples)
    }
}

/// Blade angle at every radar sample for a per-sample rotation rate.
///
/// Samples are spaced at the nominal interval of `rotation`; the blade advances
/// `2π (rpm_t / rpm_nominal) / positions` per sample.
pub fn angles_from_speed(speed_rpm: &[f64], rotation: &RotationSampling) -> Result<Vec<f64>> {
    if speed_rpm.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(param("rotation speeds must be positive"));
    }
    let step = 2.0 * PI / rotation.positions_per_rotation as f64;
    let mut angle = 0.0;
    Ok(speed_rpm
        .iter()
        .map(|s| {
            let a = angle;
            angle += step * s / rotation.rpm;
            a.rem_euclid(2.0 * PI)
        })
        .collect())
}

/// Sinusoidal speed wobble, `rpm (1 + amplitude sin(2π cycles t / n + phase))`.
pub fn wobble_speed(n: usize, rpm: f64, amplitude: f64, cycles: f64, phase: f64) -> Vec<f64> {
    (0..n)
        .map(|t| rpm * (1.0 + amplitude * (2.0 * PI * cycles * t as f64 / n as f64 + phase).sin()))
        .collect()
}

/// Blade positions averaged over the angle swept during one sample.
const DWELL_SUBSTEPS: usize = 8;

/// Simulated near-range return of the blade over the given speed profile.
///
/// The blade footprint cells reflect back to the antenna pair; the coherent
/// sum over the footprint is averaged across the dwell of each sample and
/// expressed in dB above a floor 100 dB below the strongest sample.
pub fn synth_signature(
    radar: &RadarConfig,
    mask: &MaskGeometry,
    rotation: &RotationSampling,
    speed_profile_rpm: &[f64],
) -> Result<RotationSignature> {
    let angles = angles_from_speed(speed_profile_rpm, rotation)?;
    let plane = MaskPlaneSampling::for_mask(mask, radar.wavelength_m)?;
    let settings = PropagationSettings::for_radar(radar)?;
    let lambda = radar.wavelength_m;
    let weight = |m: usize| -> Result<Complex64> {
        let p = plane.samples[m];
        let t = greens(radar.tx_position, p, lambda)? * pattern_weight(&settings.pattern, (p - radar.tx_position).normalized());
        let r = greens(p, radar.rx_position, lambda)? * pattern_weight(&settings.pattern, (p - radar.rx_position).normalized());
        Ok(t * r)
    };
    let cell: Vec<Complex64> = (0..plane.len()).map(weight).collect::<Result<_>>()?;
    let step = 2.0 * PI / rotation.positions_per_rotation as f64;
    let mut raw = Vec::with_capacity(angles.len());
    for (&a, &s) in angles.iter().zip(speed_profile_rpm) {
        let sweep = step * s / rotation.rpm;
        let mut r = Complex64::new(0.0, 0.0);
        for k in 0..DWELL_SUBSTEPS {
            let fp = blade_footprint(mask, a + sweep * (k as f64 + 0.5) / DWELL_SUBSTEPS as f64)?;
            r += plane.footprint_cells(&fp).iter().map(|&(m, c)| cell[m as usize] * c).sum::<Complex64>();
        }
        raw.push(r.norm() / DWELL_SUBSTEPS as f64);
    }
    let peak = raw.iter().copied().fold(0.0, f64::max);
    let floor = peak * 1e-5;
    let samples = raw.iter().map(|&v| 20.0 * (v.max(floor) / floor).log10()).collect();
    let period = (rotation.positions_per_rotation as f64 / mask.blade_count as f64).round() as usize;
    RotationSignature::new(samples, period.max(1))
}

/// Monotone alignment between template and observed indices.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

impl WarpPath {
    pub fn identity(n: usize) -> Self {
        Self { pairs: (0..n).map(|i| (i, i)).collect(), cost: 0.0 }
    }

    /// Boundary, monotonicity and step-pattern checks.
    pub fn is_valid(&self, template_len: usize, observed_len: usize) -> bool {
        let Some(&first) = self.pairs.first() else { return false };
        let last = *self.pairs.last().unwrap();
        first == (0, 0)
            && last == (template_len - 1, observed_len - 1)
            && self.pairs.windows(2).all(|w| {
                let (di, dj) = (w[1].0 as i64 - w[0].0 as i64, w[1].1 as i64 - w[0].1 as i64);
                matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
            })
    }

    /// Mean observed index paired with each template index.
    pub fn observed_positions(&self, template_len: usize) -> Result<Vec<f64>> {
        let mut sum = vec![0.0; template_len];
        let mut count = vec![0usize; template_len];
        for &(i, j) in &self.pairs {
            if i >= template_len {
                return Err(Error::Interpolation(format!("path refers to template index {i} beyond {template_len}")));
            }
            sum[i] += j as f64;
            count[i] += 1;
        }
        if let Some(i) = count.iter().position(|&c| c == 0) {
            return Err(Error::Interpolation(format!("path leaves template index {i} unmapped")));
        }
        Ok(sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtwConfig {
    /// Sakoe-Chiba half-width as a fraction of the template length; `None` is unconstrained.
    pub band_fraction: Option<f64>,
}

impl Default for DtwConfig {
    fn default() -> Self {
        Self { band_fraction: Some(0.1) }
    }
}

pub fn dtw_align(template: &RotationSignature, observed: &RotationSignature) -> Result<WarpPath> {
    dtw_align_with(template, observed, &DtwConfig::default())
}

/// Squared-difference DTW with steps (1,0), (0,1), (1,1); ties prefer the diagonal.
pub fn dtw_align_with(template: &RotationSignature, observed: &RotationSignature, cfg: &DtwConfig) -> Result<WarpPath> {
    let (a, b) = (&template.samples, &observed.samples);
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(Error::Alignment("cannot align an empty signature".into()));
    }
    let band = match cfg.band_fraction {
        Some(f) => {
            let ratio = n.max(m) as f64 / n.min(m) as f64;
            if ratio > 1.0 + f + 1e-12 {
                return Err(Error::Alignment(format!(
                    "length ratio {ratio:.3} exceeds the {:.0}% band",
                    100.0 * f
                )));
            }
            ((f * n as f64).ceil() as usize).max(n.abs_diff(m))
        }
        None => usize::MAX,
    };
    let inside = |i: usize, j: usize| i.abs_diff(j) <= band;
    let idx = |i: usize, j: usize| i * m + j;
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        let (lo, hi) = if band == usize::MAX { (0, m) } else { (i.saturating_sub(band), (i + band + 1).min(m)) };
        for j in lo..hi {
            let c = (a[i] - b[j]).powi(2);
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let d = if i > 0 && j > 0 { acc[idx(i - 1, j - 1)] } else { f64::INFINITY };
                let u = if i > 0 { acc[idx(i - 1, j)] } else { f64::INFINITY };
                let l = if j > 0 { acc[idx(i, j - 1)] } else { f64::INFINITY };
                d.min(u).min(l)
            };
            acc[idx(i, j)] = c + prev;
        }
    }
    let cost = acc[idx(n - 1, m - 1)];
    if !cost.is_finite() {
        return Err(Error::Alignment("no warp path fits inside the band".into()));
    }
    let mut pairs = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let d = if i > 0 && j > 0 && inside(i - 1, j - 1) { acc[idx(i - 1, j - 1)] } else { f64::INFINITY };
        let u = if i > 0 && inside(i - 1, j) { acc[idx(i - 1, j)] } else { f64::INFINITY };
        let l = if j > 0 && inside(i, j - 1) { acc[idx(i, j - 1)] } else { f64::INFINITY };
        if d <= u && d <= l {
            i -= 1;
            j -= 1;
        } else if u <= l {
            i -= 1;
        } else {
            j -= 1;
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok(WarpPath { pairs, cost })
}

/// Samples `y` at fractional positions with linear interpolation of the complex values.
pub fn resample_at(y: &[Complex64], positions: &[f64]) -> Result<Vec<Complex64>> {
    positions
        .iter()
        .map(|&p| {
            if !(p >= 0.0 && p <= (y.len() - 1) as f64) {
                return Err(Error::Interpolation(format!("position {p} outside 0..{}", y.len() - 1)));
            }
            let i = (p.floor() as usize).min(y.len().saturating_sub(2));
            let f = p - i as f64;
            Ok(if y.len() == 1 { y[0] } else { y[i] * (1.0 - f) + y[i + 1] * f })
        })
        .collect()
}

/// Harmonics of the rotation used to model the speed wobble in the warp.
pub const WARP_HARMONICS: usize = 1;

/// Least-squares fit of a warp staircase by an offset, a linear trend and
/// `harmonics` sine/cosine pairs over the template span.
pub fn fit_warp(raw: &[f64], harmonics: usize) -> Result<Vec<f64>> {
    let n = raw.len();
    let cols = 2 + 2 * harmonics;
    if n < cols {
        return Err(Error::Interpolation(format!("{n} warp samples cannot fit {cols} terms")));
    }
    let span = (n - 1).max(1) as f64;
    let basis = Mat::<f64>::from_fn(n, cols, |i, c| {
        let t = i as f64 / span;
        match c {
            0 => 1.0,
            1 => t,
            _ => {
                let phase = 2.0 * PI * ((c - 2) / 2 + 1) as f64 * t;
                if c % 2 == 0 { phase.cos() } else { phase.sin() }
            }
        }
    });
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| raw[i]);
    let coef = basis.qr().solve_lstsq(&rhs);
    Ok((0..n).map(|i| (0..cols).map(|c| basis[(i, c)] * coef[(c, 0)]).sum()).collect())
}

/// Re-indexes measurements onto the template's uniform rotation positions.
///
/// Each template index takes the mean observed index it is paired with; this
/// staircase is replaced by its `WARP_HARMONICS` fit, clamped to the observed
/// range, and the complex samples are interpolated linearly there.
pub fn resample_to_uniform(y: &MeasurementSet, path: &WarpPath) -> Result<MeasurementSet> {
    let template_len = path.pairs.last().map(|p| p.0 + 1).unwrap_or(0);
    if template_len == 0 {
        return Err(Error::Interpolation("empty warp path".into()));
    }
    if path.pairs.iter().any(|&(_, j)| j >= y.len()) {
        return Err(Error::Interpolation("warp path reaches past the measurements".into()));
    }
    let raw = path.observed_positions(template_len)?;
    if path.pairs.windows(2).any(|w| w[1].0 > w[0].0 + 1 || w[1].1 > w[0].1 + 1) {
        return Err(Error::Interpolation("warp path has a gap".into()));
    }
    let last = (y.len() - 1) as f64;
    let pos: Vec<f64> = fit_warp(&raw, WARP_HARMONICS)?.into_iter().map(|p| p.clamp(0.0, last)).collect();
    let out = resample_at(&y.y, &pos)?;
    Ok(MeasurementSet { y: out, ..y.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(v: Vec<f64>) -> RotationSignature {
        let n = v.len();
        RotationSignature::new(v, n).unwrap()
    }

    fn wavy(n: usize) -> Vec<f64> {
        (0..n).map(|i| 2.0 + (i as f64 * 0.3).sin() + 0.5 * (i as f64 * 0.11).cos()).collect()
    }

    #[test]
    fn identical_sequences_align_diagonally() {
        let a = sig(wavy(50));
        let p = dtw_align(&a, &a).unwrap();
        assert_eq!(p.cost, 0.0);
        assert_eq!(p, WarpPath::identity(50));
    }

    #[test]
    fn duplicated_samples_cost_nothing() {
        let a = sig(wavy(40));
        let doubled = sig(a.samples.iter().flat_map(|&v| [v, v]).collect());
        assert!(matches!(dtw_align(&a, &doubled), Err(Error::Alignment(_))));
        let p = dtw_align_with(&a, &doubled, &DtwConfig { band_fraction: None }).unwrap();
        assert_eq!(p.cost, 0.0);
        assert!(p.is_valid(40, 80));
        for i in 0..40 {
            let js: Vec<usize> = p.pairs.iter().filter(|q| q.0 == i).map(|q| q.1).collect();
            assert_eq!(js, vec![2 * i, 2 * i + 1]);
        }
    }

    #[test]
    fn warp_fit_recovers_single_harmonic_wobble() {
        let n = 400;
        let truth: Vec<f64> = (0..n).map(|i| i as f64 + 3.0 * (2.0 * PI * i as f64 / (n - 1) as f64).sin()).collect();
        let staircase: Vec<f64> = truth.iter().enumerate().map(|(i, v)| v.round() + if i % 2 == 0 { 0.4 } else { -0.4 }).collect();
        let fit = fit_warp(&staircase, 1).unwrap();
        assert!(fit.iter().zip(&truth).all(|(a, b)| (a - b).abs() < 0.2));
    }

    #[test]
    fn empty_input_rejected() {
        let a = sig(wavy(5));
        let e = RotationSignature { samples: vec![], nominal_period_samples: 1 };
        assert!(dtw_align(&a, &e).is_err());
    }

    #[test]
    fn resample_identity_path_is_noop() {
        let y: Vec<Complex64> = (0..30).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        let ms = MeasurementSet {
            y: y.clone(),
            truth: None,
            rpm: 600.0,
            snr_db: f64::INFINITY,
            fingerprint: Default::default(),
        };
        let out = resample_to_uniform(&ms, &WarpPath::identity(30)).unwrap();
        for (a, b) in out.y.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
        let gap = WarpPath { pairs: vec![(0, 0), (2, 2)], cost: 0.0 };
        assert!(matches!(resample_to_uniform(&ms, &gap), Err(Error::Interpolation(_))));
    }

    #[test]
    fn csv_import() {
        let s = RotationSignature::from_csv("1.5\n2\n\n0.25\n".as_bytes(), 3).unwrap();
        assert_eq!(s.samples, vec![1.5, 2.0, 0.25]);
        assert!(RotationSignature::from_csv("1\nx\n".as_bytes(), 3).is_err());
        assert!(RotationSignature::from_csv("-1\n".as_bytes(), 3).is_err());
    }

    #[test]
    fn constant_speed_angles_are_uniform() {
        let rot = RotationSampling::uniform(100, 600.0).unwrap();
        let a = angles_from_speed(&vec![600.0; 100], &rot).unwrap();
        for (x, y) in a.iter().zip(&rot.angles_rad) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(angles_from_speed(&[0.0], &rot).is_err());
    }

    proptest! {
        #[test]
        fn cost_symmetric_and_path_valid(
            a in proptest::collection::vec(0.0f64..5.0, 20..40),
            seed in 0.0f64..5.0,
        ) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| (v + seed * (i as f64 * 0.2).sin()).abs()).collect();
            let (sa, sb) = (sig(a.clone()), sig(b));
            let p = dtw_align(&sa, &sb).unwrap();
            let q = dtw_align(&sb, &sa).unwrap();
            prop_assert!((p.cost - q.cost).abs() <= 1e-9 * (1.0 + p.cost));
            prop_assert!(p.is_valid(a.len(), a.len()));
            prop_assert!(p.cost >= 0.0);
        }
    }
}
