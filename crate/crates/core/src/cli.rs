//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    calibrate_noise_power, metric_report, psf, rotational_power, rpm_to_rad_s, sar_baseline, sweep, SweepSetup,
};
use crate::config::{Experiment, ExperimentConfig, NoiseSpec};
use crate::error::{Error, Result};
use crate::forward::{build_forward, forward_fingerprint, simulate, Directionality, ForwardModel, NoiseModel};
use crate::io;
use crate::recon::{factorize, reconstruct, ReconConfig, SvdFactorization};

const UNITS: &str = "Angles are in degrees, lengths in meters, attenuations in dB.";

#[derive(Debug, Parser)]
#[command(name = "pinhole", version, about = "Rotating-mask radar imaging: simulate, reconstruct, analyze.", after_help = UNITS)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate measurements for the configured scene.
    Simulate(SimulateArgs),
    /// Reconstruct images from a measurement container.
    Reconstruct(ReconstructArgs),
    /// Tables for singular values, point-spread functions, sweeps and rotor power.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Factorization cache directory [default: <out>/cache].
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also write the sensing matrix to model.phcm.
    #[arg(long)]
    pub save_model: bool,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Measurement container written by `simulate`.
    #[arg(long)]
    pub measurements: PathBuf,
    /// Model container to use instead of rebuilding the model from the config.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Singular values kept, comma separated; overrides `recon.sigma_max`.
    #[arg(long, value_delimiter = ',')]
    pub sigma_max: Vec<usize>,
    /// Reference image CSV (azimuth_deg, elevation_deg, intensity) for metrics.csv.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// svd.csv: normalized singular values of the bidirectional and unidirectional models.
    Svd(CommonArgs),
    /// psf.csv (angle_deg, response) and psf_summary.csv of the noiseless point-spread function.
    Psf(CommonArgs),
    /// sweep.csv over `analysis.sweep`.
    Sweep(CommonArgs),
    /// power.csv: rotational power of the rotors in `analysis.power`.
    Power(CommonArgs),
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    version: String,
    config_sha256: String,
    seed: u64,
    model_fingerprint: Option<String>,
    noise_power: Option<f64>,
    outputs: Vec<OutputEntry>,
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Context {
    config: ExperimentConfig,
    config_sha256: String,
    out: PathBuf,
    cache: PathBuf,
}

impl Context {
    fn new(args: &CommonArgs) -> Result<Self> {
        let text = fs::read(&args.config)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
        let text = String::from_utf8(text).map_err(|_| Error::Config("config is not UTF-8".into()))?;
        let config = ExperimentConfig::parse(&text)?;
        let out = args.out.clone().unwrap_or_else(|| config.output_dir.clone());
        let cache = args.cache.clone().unwrap_or_else(|| out.join("cache"));
        fs::create_dir_all(&out)?;
        Ok(Self { config_sha256: sha256_hex(text.as_bytes()), config, out, cache })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn manifest(&self, command: &str, model: Option<String>, noise_power: Option<f64>, files: &[String]) -> Result<()> {
        let outputs = files
            .iter()
            .map(|f| Ok(OutputEntry { file: f.clone(), sha256: sha256_hex(&fs::read(self.path(f))?) }))
            .collect::<Result<_>>()?;
        let m = Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: self.config_sha256.clone(),
            seed: self.config.seed,
            model_fingerprint: model,
            noise_power,
            outputs,
        };
        let text = toml::to_string(&m).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        fs::write(self.path(&format!("{command}_manifest.toml")), text)?;
        Ok(())
    }

    /// Cached factorization of `model`, at container precision either way.
    fn factorization(&self, model: &ForwardModel) -> Result<SvdFactorization> {
        if let Some(f) = self.cached(model.fingerprint.to_hex())? {
            return Ok(f);
        }
        let f = io::stored_precision(&factorize(model)?)?;
        fs::create_dir_all(&self.cache)?;
        io::save_factorization(&self.cache_path(&model.fingerprint.to_hex()), &f)?;
        Ok(f)
    }

    fn cache_path(&self, fingerprint: &str) -> PathBuf {
        self.cache.join(format!("{fingerprint}.phcm"))
    }

    fn cached(&self, fingerprint: String) -> Result<Option<SvdFactorization>> {
        let p = self.cache_path(&fingerprint);
        if !p.exists() {
            return Ok(None);
        }
        let f = io::load_factorization(&p)?;
        if f.fingerprint.to_hex() != fingerprint {
            return Err(Error::Mismatch(format!("cache entry {} holds another model", p.display())));
        }
        Ok(Some(f))
    }
}

fn build(exp: &Experiment, directionality: Directionality) -> Result<ForwardModel> {
    build_forward(&exp.radar, &exp.grid, &exp.mask, &exp.rotation, &exp.plane, directionality)
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let ctx = Context::new(&args.common)?;
    let exp = ctx.config.experiment()?;
    let model = build(&exp, exp.directionality)?;
    let x = ctx.config.scene_vector(&exp.grid)?;
    let seed = ctx.config.seed;
    let noise = match ctx.config.noise_spec()? {
        NoiseSpec::Noiseless => NoiseModel::noiseless(),
        NoiseSpec::Snr(db) => NoiseModel::from_snr(&model, db, seed)?,
        NoiseSpec::Calibrated(k) => {
            let energy: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            let f = ctx.factorization(&model)?;
            NoiseModel::new(calibrate_noise_power(&f.s, exp.grid.len(), energy, k)?, seed)?
        }
    };
    let ms = simulate(&model, &x, &noise)?;
    io::save_measurements(&ctx.path("measurements.phcm"), &ms)?;
    let truth: Vec<f64> = x.iter().map(|z| z.norm()).collect();
    io::save_image_csv(&ctx.path("truth.csv"), &exp.grid, &truth)?;
    let mut files = vec!["measurements.phcm".to_string(), "truth.csv".to_string()];
    if args.save_model {
        io::save_model(&ctx.path("model.phcm"), &model)?;
        files.push("model.phcm".into());
    }
    ctx.manifest("simulate", Some(model.fingerprint.to_hex()), Some(noise.noise_power), &files)
}

fn cmd_reconstruct(args: &ReconstructArgs) -> Result<()> {
    let ctx = Context::new(&args.common)?;
    let configs = if args.sigma_max.is_empty() {
        ctx.config.recon_configs()?
    } else {
        args.sigma_max
            .iter()
            .map(|&k| {
                let c = ReconConfig::sigma_max(k)?;
                Ok(if ctx.config.recon.normalize_output { c.normalized() } else { c })
            })
            .collect::<Result<Vec<_>>>()?
    };
    let exp = ctx.config.experiment()?;
    let ms = io::load_measurements(&args.measurements)?;
    let fact = match &args.model {
        Some(path) => {
            let (h, matrix) = io::load_model(path)?;
            let dir = h.directionality.ok_or_else(|| Error::Format("model container lacks directionality".into()))?;
            let model = ForwardModel::from_matrix(matrix, exp.grid.clone(), dir, h.fingerprint, exp.radar.wavelength_m, &exp.rotation)?;
            check_fingerprint(&ms.fingerprint.to_hex(), &model.fingerprint.to_hex())?;
            // single-precision matrices never enter the cache
            io::stored_precision(&factorize(&model)?)?
        }
        None => {
            let fp = forward_fingerprint(&exp.radar, &exp.grid, &exp.mask, &exp.rotation, &exp.plane, exp.directionality)?;
            check_fingerprint(&ms.fingerprint.to_hex(), &fp.to_hex())?;
            match ctx.cached(fp.to_hex())? {
                Some(f) => f,
                None => ctx.factorization(&build(&exp, exp.directionality)?)?,
            }
        }
    };
    if ms.len() != fact.u.rows() {
        return Err(Error::Mismatch(format!("{} measurements for a model with {} rows", ms.len(), fact.u.rows())));
    }
    let reference = args.reference.as_deref().map(|p| io::load_image_csv(p, &exp.grid)).transpose()?;
    let mut files = Vec::new();
    let mut metrics = Vec::new();
    for cfg in &configs {
        let img = reconstruct(&fact, &ms.y, cfg)?;
        let tag = match cfg.truncation {
            crate::recon::Truncation::Count(k) => format!("k{k}"),
            crate::recon::Truncation::Relative(t) => format!("tau{t}"),
        };
        let (csv, pgm) = (format!("image_{tag}.csv"), format!("image_{tag}.pgm"));
        io::save_image_csv(&ctx.path(&csv), &exp.grid, &img.intensity)?;
        io::save_pgm(&ctx.path(&pgm), &exp.grid, &img.intensity)?;
        files.push(csv);
        files.push(pgm);
        if let Some(r) = &reference {
            let m = metric_report(&exp.grid, &img.intensity, r)?;
            let k = match cfg.truncation {
                crate::recon::Truncation::Count(k) => k.to_string(),
                crate::recon::Truncation::Relative(_) => img.rank.to_string(),
            };
            metrics.push(vec![k, img.rank.to_string(), fmt(m.sharpness_ratio), fmt(m.mse), fmt(m.ssim), fmt(m.chamfer_m)]);
        }
    }
    if reference.is_some() {
        io::save_table(&ctx.path("metrics.csv"), &["sigma_max", "rank", "sharpness_ratio", "mse", "ssim", "chamfer_m"], &metrics)?;
        files.push("metrics.csv".into());
    }
    ctx.manifest("reconstruct", Some(fact.fingerprint.to_hex()), None, &files)
}

fn check_fingerprint(measured: &str, model: &str) -> Result<()> {
    if measured != model {
        return Err(Error::Mismatch(format!("measurements were simulated with model {measured}, not {model}")));
    }
    Ok(())
}

fn cmd_svd(args: &CommonArgs) -> Result<()> {
    let ctx = Context::new(args)?;
    let exp = ctx.config.experiment()?;
    let bi = ctx.factorization(&build(&exp, Directionality::Bidirectional)?)?;
    let uni = ctx.factorization(&build(&exp, Directionality::Unidirectional)?)?;
    let norm = |f: &SvdFactorization| -> Vec<f64> {
        let s1 = f.s.first().copied().unwrap_or(0.0);
        f.s.iter().map(|s| if s1 > 0.0 { s / s1 } else { 0.0 }).collect()
    };
    let (b, u) = (norm(&bi), norm(&uni));
    let rows: Vec<Vec<String>> = b.iter().zip(&u).map(|(x, y)| vec![fmt(*x), fmt(*y)]).collect();
    io::save_table(&ctx.path("svd.csv"), &["bidirectional", "unidirectional"], &rows)?;
    ctx.manifest("svd", None, None, &["svd.csv".into()])
}

fn cmd_psf(args: &CommonArgs) -> Result<()> {
    let ctx = Context::new(args)?;
    let exp = ctx.config.experiment()?;
    let a = &ctx.config.analysis;
    let (source, model) = match &a.sar {
        Some(s) => (
            format!("{:?}-sar", s.kind).to_lowercase(),
            sar_baseline(s.kind, s.extent_m, s.positions, exp.radar.wavelength_m, &exp.grid)?,
        ),
        None => (format!("{:?}", exp.directionality).to_lowercase(), build(&exp, exp.directionality)?),
    };
    let fact = ctx.factorization(&model)?;
    let cfg = ReconConfig::relative(a.psf_tau)?;
    let curve = psf(&model, &fact, a.psf_target_deg, &cfg)?;
    let rows: Vec<Vec<String>> = curve.angles_deg.iter().zip(&curve.response).map(|(x, y)| vec![fmt(*x), fmt(*y)]).collect();
    io::save_table(&ctx.path("psf.csv"), &["angle_deg", "response"], &rows)?;
    let rank = cfg.rank_for(&fact)?;
    io::save_table(
        &ctx.path("psf_summary.csv"),
        &["source", "target_deg", "fwhp_deg", "rank"],
        &[vec![source, fmt(a.psf_target_deg), fmt(curve.fwhp_deg), rank.to_string()]],
    )?;
    ctx.manifest("psf", Some(model.fingerprint.to_hex()), None, &["psf.csv".into(), "psf_summary.csv".into()])
}

fn cmd_sweep(args: &CommonArgs) -> Result<()> {
    let ctx = Context::new(args)?;
    let Some(spec) = ctx.config.analysis.sweep.clone() else {
        return Err(Error::Config("analyze sweep needs an [analysis.sweep] section".into()));
    };
    let exp = ctx.config.experiment()?;
    let base = ctx.factorization(&build(&exp, exp.directionality)?)?;
    let k = spec.calibrated_usable;
    if k == 0 || k >= base.s.len() {
        return Err(Error::Config(format!("analysis.sweep.calibrated_usable must lie in 1..{}", base.s.len())));
    }
    let setup = SweepSetup {
        radar: exp.radar.clone(),
        grid: exp.grid.clone(),
        mask: exp.mask.clone(),
        rotation: exp.rotation.clone(),
        directionality: exp.directionality,
        psf_target_deg: ctx.config.analysis.psf_target_deg,
        psf_tau: ctx.config.analysis.psf_tau,
        noise_floor: (base.s[k - 1] * base.s[k]).sqrt(),
        spectrum_reference: base.s[0],
    };
    let table = sweep(spec.parameter, &spec.values, &setup)?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| vec![fmt(r.value), fmt(r.fwhp_deg), fmt(r.s1), fmt(r.s40_normalized), r.usable.to_string()])
        .collect();
    io::save_table(&ctx.path("sweep.csv"), &["value", "fwhp_deg", "s1", "s40_normalized", "usable"], &rows)?;
    ctx.manifest("sweep", None, None, &["sweep.csv".into()])
}

fn cmd_power(args: &CommonArgs) -> Result<()> {
    let ctx = Context::new(args)?;
    let p = &ctx.config.analysis.power;
    let omega = rpm_to_rad_s(p.rpm);
    let rows = p
        .rotors
        .iter()
        .map(|r| {
            let w = rotational_power(r.mass_kg, r.radius_m, omega)?;
            Ok(vec![r.name.clone(), fmt(r.mass_kg), fmt(r.radius_m), fmt(p.rpm), fmt(w)])
        })
        .collect::<Result<Vec<_>>>()?;
    io::save_table(&ctx.path("power.csv"), &["name", "mass_kg", "radius_m", "rpm", "watts"], &rows)?;
    ctx.manifest("power", None, None, &["power.csv".into()])
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Analyze { what } => match what {
            AnalyzeCommand::Svd(a) => cmd_svd(a),
            AnalyzeCommand::Psf(a) => cmd_psf(a),
            AnalyzeCommand::Sweep(a) => cmd_sweep(a),
            AnalyzeCommand::Power(a) => cmd_power(a),
        },
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
