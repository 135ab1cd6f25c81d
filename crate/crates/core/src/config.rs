//! Experiment configuration files (TOML).
//!
//! Angles are in degrees, lengths in meters and attenuations in dB. Every
//! section is optional and falls back to the default geometry; unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::{SarKind, SweepParameter};
use crate::error::{Error, Result};
use crate::forward::Directionality;
use crate::geometry::{
    build_scene_grid, MaskGeometry, MaskPlaneSampling, RadarConfig, RotationSampling, SceneGrid,
    DEFAULT_WAVELENGTH_M,
};
use crate::recon::ReconConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub radar: RadarSection,
    pub grid: GridSection,
    pub mask: MaskGeometry,
    pub rotation: RotationSection,
    pub sampling: SamplingSection,
    pub noise: NoiseSection,
    pub recon: ReconSection,
    pub scene: SceneSection,
    pub analysis: AnalysisSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            radar: RadarSection::default(),
            grid: GridSection::default(),
            mask: MaskGeometry::default(),
            rotation: RotationSection::default(),
            sampling: SamplingSection::default(),
            noise: NoiseSection::default(),
            recon: ReconSection::default(),
            scene: SceneSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

/// Antennas sit below the rotation axis at `y = -mask.axis_offset_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarSection {
    pub wavelength_m: f64,
    pub antenna_separation_m: f64,
    pub azimuth_fov_deg: f64,
    pub elevation_fov_deg: f64,
    pub directionality: Directionality,
}

impl Default for RadarSection {
    fn default() -> Self {
        let r = RadarConfig::default();
        Self {
            wavelength_m: DEFAULT_WAVELENGTH_M,
            antenna_separation_m: r.rx_position.x - r.tx_position.x,
            azimuth_fov_deg: r.azimuth_fov_deg,
            elevation_fov_deg: r.elevation_fov_deg,
            directionality: Directionality::Bidirectional,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub range_m: f64,
    pub azimuth_min_deg: f64,
    pub azimuth_max_deg: f64,
    pub azimuth_step_deg: f64,
    pub elevation_deg: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { range_m: 20.0, azimuth_min_deg: -50.0, azimuth_max_deg: 50.0, azimuth_step_deg: 0.05, elevation_deg: vec![0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationSection {
    pub positions_per_rotation: usize,
    pub rpm: f64,
}

impl Default for RotationSection {
    fn default() -> Self {
        Self { positions_per_rotation: 1000, rpm: 600.0 }
    }
}

/// Mask-plane sampling; unset fields use pitch `λ/2` and the blade reach plus width.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub spacing_m: Option<f64>,
    pub extent_m: Option<f64>,
}

/// At most one of `snr_db` and `calibrated_usable`; neither means noiseless.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Relative to a unit boresight target.
    pub snr_db: Option<f64>,
    /// Noise power chosen so this many singular values stay usable for the configured scene.
    pub calibrated_usable: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    Noiseless,
    Snr(f64),
    Calibrated(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub sigma_max: Vec<usize>,
    pub normalize_output: bool,
}

impl Default for ReconSection {
    fn default() -> Self {
        Self { sigma_max: vec![40], normalize_output: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub azimuth_deg: f64,
    #[serde(default)]
    pub elevation_deg: f64,
    #[serde(default = "unit")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

fn unit() -> f64 {
    1.0
}

/// Point targets snapped to the nearest grid bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub targets: Vec<Target>,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self { targets: vec![Target { azimuth_deg: 0.0, elevation_deg: 0.0, amplitude: 1.0, phase_rad: 0.0 }] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub psf_target_deg: f64,
    /// Relative singular-value threshold of the noiseless PSF.
    pub psf_tau: f64,
    /// Replaces the mask model in `analyze psf` when set.
    pub sar: Option<SarSection>,
    pub sweep: Option<SweepSection>,
    pub power: PowerSection,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self { psf_target_deg: 0.0, psf_tau: 1e-6, sar: None, sweep: None, power: PowerSection::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SarSection {
    pub kind: SarKind,
    pub extent_m: f64,
    #[serde(default = "default_sar_positions")]
    pub positions: usize,
}

fn default_sar_positions() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Usable singular values at the default geometry that fix the sweep's noise floor.
    #[serde(default = "default_usable")]
    pub calibrated_usable: usize,
}

fn default_usable() -> usize {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSection {
    pub rpm: f64,
    pub rotors: Vec<Rotor>,
}

impl Default for PowerSection {
    fn default() -> Self {
        Self {
            rpm: 600.0,
            rotors: vec![
                Rotor { name: "mask".into(), mass_kg: 0.010, radius_m: 0.16 },
                Rotor { name: "sar".into(), mass_kg: 0.120, radius_m: 0.0225 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rotor {
    pub name: String,
    pub mass_kg: f64,
    pub radius_m: f64,
}

/// Module-level inputs derived from a validated config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub radar: RadarConfig,
    pub grid: SceneGrid,
    pub mask: MaskGeometry,
    pub rotation: RotationSampling,
    pub plane: MaskPlaneSampling,
    pub directionality: Directionality,
}

fn in_field(field: &str, e: Error) -> Error {
    match e {
        Error::Unsupported(m) => Error::Unsupported(format!("{field}: {m}")),
        other => Error::Config(format!("{field}: {other}")),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim().to_string();
            match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    Error::Config(format!("line {line}, column {col}: {msg}"))
                }
                None => Error::Config(msg),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment()?;
        self.noise_spec()?;
        self.recon_configs()?;
        let grid = self.scene_grid()?;
        self.scene_vector(&grid)?;
        if let Some(s) = &self.analysis.sar {
            if !(s.extent_m > 0.0) || s.positions < 2 {
                return Err(Error::Config("analysis.sar: extent_m must be positive and positions at least 2".into()));
            }
        }
        if let Some(s) = &self.analysis.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("analysis.sweep.values: at least one value is required".into()));
            }
        }
        if !(self.analysis.psf_tau > 0.0 && self.analysis.psf_tau < 1.0) {
            return Err(Error::Config("analysis.psf_tau must lie in (0, 1)".into()));
        }
        if !(self.analysis.power.rpm >= 0.0) {
            return Err(Error::Config("analysis.power.rpm must be non-negative".into()));
        }
        Ok(())
    }

    pub fn scene_grid(&self) -> Result<SceneGrid> {
        let g = &self.grid;
        build_scene_grid(g.range_m, g.azimuth_min_deg, g.azimuth_max_deg, g.azimuth_step_deg, &g.elevation_deg)
            .map_err(|e| in_field("grid", e))
    }

    pub fn radar_config(&self) -> Result<RadarConfig> {
        let r = &self.radar;
        let mut radar = RadarConfig::mounted(r.wavelength_m, self.mask.axis_offset_m, r.antenna_separation_m);
        radar.azimuth_fov_deg = r.azimuth_fov_deg;
        radar.elevation_fov_deg = r.elevation_fov_deg;
        radar.validate().map_err(|e| in_field("radar", e))?;
        Ok(radar)
    }

    pub fn rotation_sampling(&self) -> Result<RotationSampling> {
        RotationSampling::uniform(self.rotation.positions_per_rotation, self.rotation.rpm)
            .map_err(|e| in_field("rotation", e))
    }

    /// Builds the geometry with `mask` in place of the configured one.
    pub fn experiment_with_mask(&self, mask: &MaskGeometry) -> Result<Experiment> {
        mask.validate().map_err(|e| in_field("mask", e))?;
        let radar = self.radar_config()?;
        let lambda = radar.wavelength_m;
        let spacing = self.sampling.spacing_m.unwrap_or(0.5 * lambda);
        let extent = self.sampling.extent_m.unwrap_or(mask.blade_length_m + mask.blade_width_m);
        let plane = MaskPlaneSampling::new(mask, lambda, spacing, extent).map_err(|e| in_field("sampling", e))?;
        Ok(Experiment {
            radar,
            grid: self.scene_grid()?,
            mask: mask.clone(),
            rotation: self.rotation_sampling()?,
            plane,
            directionality: self.radar.directionality,
        })
    }

    pub fn experiment(&self) -> Result<Experiment> {
        self.experiment_with_mask(&self.mask)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        match (self.noise.snr_db, self.noise.calibrated_usable) {
            (Some(_), Some(_)) => Err(Error::Config("noise: set either snr_db or calibrated_usable, not both".into())),
            (Some(s), None) if s.is_finite() => Ok(NoiseSpec::Snr(s)),
            (Some(_), None) => Err(Error::Config("noise.snr_db must be finite".into())),
            (None, Some(0)) => Err(Error::Config("noise.calibrated_usable must be positive".into())),
            (None, Some(k)) => Ok(NoiseSpec::Calibrated(k)),
            (None, None) => Ok(NoiseSpec::Noiseless),
        }
    }

    pub fn recon_configs(&self) -> Result<Vec<ReconConfig>> {
        if self.recon.sigma_max.is_empty() {
            return Err(Error::Config("recon.sigma_max: at least one value is required".into()));
        }
        self.recon
            .sigma_max
            .iter()
            .map(|&k| {
                let c = ReconConfig::sigma_max(k).map_err(|e| in_field("recon.sigma_max", e))?;
                Ok(if self.recon.normalize_output { c.normalized() } else { c })
            })
            .collect()
    }

    /// Scene reflectivity on `grid`; coincident targets add.
    pub fn scene_vector(&self, grid: &SceneGrid) -> Result<Vec<Complex64>> {
        let mut x = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (i, t) in self.scene.targets.iter().enumerate() {
            if !(t.amplitude.is_finite() && t.phase_rad.is_finite()) {
                return Err(Error::Config(format!("scene.targets[{i}]: amplitude and phase must be finite")));
            }
            let j = grid.point_index(t.azimuth_deg, t.elevation_deg).map_err(|e| in_field(&format!("scene.targets[{i}]"), e))?;
            x[j] += Complex64::from_polar(t.amplitude, t.phase_rad);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 11
output_dir = "runs/a"

[radar]
wavelength_m = 0.004
directionality = "unidirectional"

[grid]
azimuth_min_deg = -10.0
azimuth_max_deg = 10.0
azimuth_step_deg = 0.5

[mask]
blade_count = 2
attenuation_db = inf
mode = "regular-pinhole"

[rotation]
positions_per_rotation = 200

[noise]
snr_db = 25.0

[recon]
sigma_max = [10, 15, 20, 30, 40, 60, 80]

[[scene.targets]]
azimuth_deg = -1.25

[[scene.targets]]
azimuth_deg = 1.25
phase_rad = 1.5707963267948966

[analysis.sweep]
parameter = "width"
values = [0.008, 0.016]
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.mask.blade_count, 2);
        assert!(c.mask.attenuation_db.is_infinite());
        assert_eq!(c.mask.blade_length_m, 0.16);
        assert_eq!(c.rotation.rpm, 600.0);
        assert_eq!(c.noise_spec().unwrap(), NoiseSpec::Snr(25.0));
        assert_eq!(c.scene.targets.len(), 2);
        assert_eq!(c.recon_configs().unwrap().len(), 7);
        let grid = c.scene_grid().unwrap();
        assert_eq!(grid.len(), 41);
        assert_eq!(c.scene_vector(&grid).unwrap().iter().filter(|z| z.norm() > 0.0).count(), 2);
    }

    #[test]
    fn round_trip_is_structural_identity() {
        for c in [ExperimentConfig::default(), ExperimentConfig::parse(SAMPLE).unwrap()] {
            let again = ExperimentConfig::parse(&c.to_toml().unwrap()).unwrap();
            assert_eq!(again, c);
        }
    }

    #[test]
    fn unknown_key_reports_position() {
        let err = ExperimentConfig::parse("seed = 1\n[mask]\nblade_cnt = 2\n").unwrap_err();
        let msg = err.to_string();
        assert_eq!(err.exit_code(), 2);
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("blade_cnt"), "{msg}");
    }

    #[test]
    fn three_blades_unsupported() {
        let err = ExperimentConfig::parse("[mask]\nblade_count = 3\n").unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        assert!(err.to_string().contains("unsupported-configuration"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "[recon]\nsigma_max = [0]\n",
            "[noise]\nsnr_db = 20.0\ncalibrated_usable = 40\n",
            "[grid]\nazimuth_step_deg = -1.0\n",
            "[[scene.targets]]\nazimuth_deg = 80.0\n",
            "[sampling]\nspacing_m = 0.01\n",
        ] {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }
}
