//! Truncated-SVD inversion of the sensing matrix.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::forward::{Fingerprint, ForwardModel};
use crate::linalg::{thin_svd, CMatrix};

/// `B = U diag(S) V^H`, thin, singular values descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactorization {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
    pub fingerprint: Fingerprint,
}

impl SvdFactorization {
    pub fn rank_capacity(&self) -> usize {
        self.s.len()
    }

    /// Number of singular values above `tau * S_1`.
    pub fn numerical_rank(&self, tau: f64) -> usize {
        let s1 = self.s.first().copied().unwrap_or(0.0);
        self.s.iter().take_while(|&&s| s > tau * s1).count()
    }

    /// Singular values divided by `reference`.
    pub fn normalized_spectrum(&self, reference: f64) -> Vec<f64> {
        self.s.iter().map(|s| s / reference).collect()
    }
}

pub fn factorize(model: &ForwardModel) -> Result<SvdFactorization> {
    factorize_matrix(&model.matrix, model.fingerprint)
}

pub fn factorize_matrix(b: &CMatrix, fingerprint: Fingerprint) -> Result<SvdFactorization> {
    let (u, s, v) = thin_svd(b)?;
    Ok(SvdFactorization { u, s, v, fingerprint })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// Keep the first `k` singular values.
    Count(usize),
    /// Keep singular values above `tau * S_1`.
    Relative(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub truncation: Truncation,
    pub normalize_output: bool,
}

impl ReconConfig {
    pub fn sigma_max(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(param("sigma_max must be at least 1"));
        }
        Ok(Self { truncation: Truncation::Count(k), normalize_output: false })
    }

    pub fn relative(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(param(format!("relative threshold must lie in (0, 1), got {tau}")));
        }
        Ok(Self { truncation: Truncation::Relative(tau), normalize_output: false })
    }

    pub fn normalized(self) -> Self {
        Self { normalize_output: true, ..self }
    }

    /// Number of singular values this configuration keeps.
    pub fn rank_for(&self, fact: &SvdFactorization) -> Result<usize> {
        let cap = fact.rank_capacity();
        let k = match self.truncation {
            Truncation::Count(k) => {
                if k == 0 || k > cap {
                    return Err(param(format!("sigma_max must lie in 1..={cap}, got {k}")));
                }
                k
            }
            Truncation::Relative(tau) => fact.numerical_rank(tau).max(1),
        };
        let s1 = fact.s[0];
        let floor = s1 * f64::EPSILON * cap as f64;
        if !(fact.s[k - 1] > floor) {
            let usable = fact.s.iter().take_while(|&&s| s > floor).count();
            return Err(Error::RankDeficient(format!(
                "singular value {k} is zero to working precision; use sigma_max <= {usable}"
            )));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageResult {
    /// `|x̂|`, peak-normalized when requested.
    pub intensity: Vec<f64>,
    pub complex_amplitude: Vec<Complex64>,
    pub rank: usize,
    pub config: ReconConfig,
}

impl ImageResult {
    /// Peak-normalized intensity clamped to `[floor, 1]`.
    pub fn display(&self, floor: f64) -> Vec<f64> {
        let peak = self.intensity.iter().copied().fold(0.0, f64::max);
        self.intensity
            .iter()
            .map(|&v| if peak > 0.0 { (v / peak).clamp(floor, 1.0) } else { floor })
            .collect()
    }
}

/// `x̂ = V_k diag(1/S_k) U_k^H y`.
pub fn reconstruct(fact: &SvdFactorization, y: &[Complex64], cfg: &ReconConfig) -> Result<ImageResult> {
    let t = fact.u.rows();
    if y.len() != t {
        return Err(Error::Shape(format!("{} measurements for a model with {t} rows", y.len())));
    }
    let k = cfg.rank_for(fact)?;
    let mut coef = vec![Complex64::new(0.0, 0.0); k];
    for r in 0..t {
        let ur = fact.u.row(r);
        let yr = y[r];
        for (c, u) in coef.iter_mut().zip(ur) {
            *c += u.conj() * yr;
        }
    }
    for (c, s) in coef.iter_mut().zip(&fact.s) {
        *c /= s;
    }
    let n = fact.v.rows();
    let x: Vec<Complex64> = (0..n).map(|j| fact.v.row(j)[..k].iter().zip(&coef).map(|(v, c)| v * c).sum()).collect();
    let mut intensity: Vec<f64> = x.iter().map(|z| z.norm()).collect();
    if cfg.normalize_output {
        let peak = intensity.iter().copied().fold(0.0, f64::max);
        if peak > 0.0 {
            intensity.iter_mut().for_each(|v| *v /= peak);
        }
    }
    Ok(ImageResult { intensity, complex_amplitude: x, rank: k, config: *cfg })
}

pub fn background_subtract(y: &[Complex64], background: &[Complex64]) -> Result<Vec<Complex64>> {
    if y.len() != background.len() {
        return Err(Error::Shape(format!("{} samples minus {} background samples", y.len(), background.len())));
    }
    Ok(y.iter().zip(background).map(|(a, b)| a - b).collect())
}

/// Indices of strict local maxima (plateaus report their first sample).
pub fn local_maxima(profile: &[f64]) -> Vec<usize> {
    let n = profile.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && profile[j + 1] == profile[i] {
            j += 1;
        }
        let left = i == 0 || profile[i - 1] < profile[i];
        let right = j + 1 == n || profile[j + 1] < profile[i];
        if left && right && n > 1 {
            out.push(i);
        }
        i = j + 1;
    }
    out
}

/// Two-peak test on an intensity profile.
///
/// The two highest local maxima inside `window` are taken as the peaks; they
/// count as resolved when the lowest intensity between them is below
/// `dip_ratio` times the lower peak, compared in power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipCriterion {
    pub dip_ratio: f64,
}

impl Default for DipCriterion {
    fn default() -> Self {
        Self { dip_ratio: 0.5 }
    }
}

impl DipCriterion {
    pub fn resolved(&self, intensity: &[f64], window: std::ops::Range<usize>) -> bool {
        self.peaks(intensity, window).is_some()
    }

    /// The resolved peak pair, ordered by index.
    pub fn peaks(&self, intensity: &[f64], window: std::ops::Range<usize>) -> Option<(usize, usize)> {
        let end = window.end.min(intensity.len());
        if window.start >= end {
            return None;
        }
        let seg = &intensity[window.start..end];
        let mut maxima = local_maxima(seg);
        maxima.sort_by(|&a, &b| seg[b].total_cmp(&seg[a]));
        if maxima.len() < 2 {
            return None;
        }
        let (a, b) = (maxima[0].min(maxima[1]), maxima[0].max(maxima[1]));
        let valley = seg[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
        let lower = seg[a].min(seg[b]);
        (valley * valley <= self.dip_ratio * lower * lower).then_some((a + window.start, b + window.start))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fact_of(m: &CMatrix) -> SvdFactorization {
        factorize_matrix(m, Fingerprint::default()).unwrap()
    }

    fn test_matrix(rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |r, c| {
            let a = 0.61 * (r as f64) * (c as f64 + 1.0) + 0.3 * c as f64;
            Complex64::from_polar(1.0 / (1.0 + 0.05 * c as f64), a)
        })
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let f = fact_of(&CMatrix::identity(6));
        assert!(f.s.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rank_one_outer_product() {
        let u: Vec<Complex64> = (0..5).map(|i| Complex64::new(i as f64 + 1.0, -0.5)).collect();
        let v: Vec<Complex64> = (0..4).map(|i| Complex64::new(0.2, i as f64)).collect();
        let m = CMatrix::from_fn(5, 4, |r, c| u[r] * v[c].conj());
        let f = fact_of(&m);
        let nu = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((f.s[0] - nu * nv).abs() < 1e-10 * nu * nv);
        assert!(f.s[1..].iter().all(|&s| s < 1e-10 * f.s[0]));
    }

    #[test]
    fn factors_are_orthonormal_and_reconstruct() {
        let m = test_matrix(30, 12);
        let f = fact_of(&m);
        for a in 0..12 {
            for b in 0..12 {
                let g: Complex64 = (0..30).map(|r| f.u.get(r, a).conj() * f.u.get(r, b)).sum();
                let h: Complex64 = (0..12).map(|r| f.v.get(r, a).conj() * f.v.get(r, b)).sum();
                let e = if a == b { 1.0 } else { 0.0 };
                assert!((g - e).norm() < 1e-6 && (h - e).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn exact_inversion_at_full_rank() {
        let m = test_matrix(40, 10);
        let f = fact_of(&m);
        let cfg = ReconConfig::sigma_max(10).unwrap();
        let mut x = vec![Complex64::new(0.0, 0.0); 10];
        x[4] = Complex64::new(1.0, 0.0);
        let y = m.matvec(&x).unwrap();
        let r = reconstruct(&f, &y, &cfg).unwrap();
        let err: f64 = r.complex_amplitude.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-6);
        let peak = (0..10).max_by(|&a, &b| r.intensity[a].total_cmp(&r.intensity[b])).unwrap();
        assert_eq!(peak, 4);
    }

    #[test]
    fn bounds_and_rank_deficiency() {
        let m = test_matrix(20, 8);
        let f = fact_of(&m);
        assert!(ReconConfig::sigma_max(0).is_err());
        let y = vec![Complex64::new(1.0, 0.0); 20];
        assert!(matches!(reconstruct(&f, &y, &ReconConfig::sigma_max(9).unwrap()), Err(Error::Parameter(_))));
        assert!(matches!(reconstruct(&f, &y[..19], &ReconConfig::sigma_max(3).unwrap()), Err(Error::Shape(_))));
        let u: Vec<Complex64> = (0..6).map(|i| Complex64::new(1.0, i as f64)).collect();
        let low = CMatrix::from_fn(6, 4, |r, c| u[r] * (c as f64 + 1.0));
        let fl = fact_of(&low);
        assert!(matches!(
            reconstruct(&fl, &u, &ReconConfig::sigma_max(2).unwrap()),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn truncation_error_is_monotone() {
        let m = test_matrix(24, 16);
        let f = fact_of(&m);
        let x: Vec<Complex64> = (0..16).map(|i| Complex64::new((i as f64 * 0.7).sin(), 0.3)).collect();
        let y = m.matvec(&x).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=16 {
            let r = reconstruct(&f, &y, &ReconConfig::sigma_max(k).unwrap()).unwrap();
            let e: f64 = r.complex_amplitude.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!(e <= prev * (1.0 + 1e-9) + 1e-18);
            prev = e;
        }
    }

    #[test]
    fn background_subtraction() {
        let y = vec![Complex64::new(1.0, 2.0), Complex64::new(-3.0, 0.5)];
        assert!(background_subtract(&y, &y).unwrap().iter().all(|z| z.norm() == 0.0));
        assert!(background_subtract(&y, &y[..1]).is_err());
    }

    #[test]
    fn dip_rule() {
        let crit = DipCriterion::default();
        let two = [0.0, 0.5, 1.0, 0.6, 0.9, 0.4, 0.0];
        assert!(crit.resolved(&two, 0..7)); // 0.36 <= 0.5 * 0.81
        let merged = [0.0, 0.5, 1.0, 0.8, 0.9, 0.4, 0.0];
        assert!(!crit.resolved(&merged, 0..7));
        assert!(!crit.resolved(&[0.0, 1.0, 0.0], 0..3));
        assert_eq!(local_maxima(&[1.0, 0.0, 2.0, 2.0, 1.0]), vec![0, 2]);
    }

    proptest! {
        #[test]
        fn scaling_equivariance(re in -3.0f64..3.0, im in -3.0f64..3.0, k in 1usize..8) {
            let m = test_matrix(16, 8);
            let f = fact_of(&m);
            let y: Vec<Complex64> = (0..16).map(|i| Complex64::new((i as f64).cos(), 0.1 * i as f64)).collect();
            let a = Complex64::new(re, im);
            let ya: Vec<Complex64> = y.iter().map(|v| v * a).collect();
            let cfg = ReconConfig::sigma_max(k).unwrap();
            let r1 = reconstruct(&f, &y, &cfg).unwrap();
            let r2 = reconstruct(&f, &ya, &cfg).unwrap();
            for (p, q) in r1.complex_amplitude.iter().zip(&r2.complex_amplitude) {
                prop_assert!((p * a - q).norm() <= 1e-9 * (1.0 + q.norm()));
            }
        }

        #[test]
        fn column_permutation_permutes_image(seed in 0u64..1000) {
            let m = test_matrix(18, 7);
            let mut perm: Vec<usize> = (0..7).collect();
            let mut s = seed;
            for i in (1..7).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let mp = m.permute_columns(&perm);
            let y: Vec<Complex64> = (0..18).map(|i| Complex64::new(1.0, i as f64 * 0.2)).collect();
            let cfg = ReconConfig::sigma_max(7).unwrap();
            let r = reconstruct(&fact_of(&m), &y, &cfg).unwrap();
            let rp = reconstruct(&fact_of(&mp), &y, &cfg).unwrap();
            for (k, &p) in perm.iter().enumerate() {
                prop_assert!((rp.complex_amplitude[k] - r.complex_amplitude[p]).norm() < 1e-8);
            }
        }
    }
}
