//! Command-line interface.
//!
//! Subcommands: `simulate` (make or load a scene, draw detector data),
//! `denoise` (run the chain and write estimates), `evaluate` (compare a
//! reconstruction with ground truth), `integrate` (merge frame groups).
//! Every simulate/denoise run writes a manifest capturing the full
//! configuration, input digests, seed, and output digests.
//!
//! Exit codes: 0 success, 2 usage, 3 invalid data or files, 4 numerical
//! failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dist::Interval;
use crate::error::{Error, Result};
use crate::eval::{self, SceneKind};
use crate::field::{EfficiencyMap, FrameStack, Mask};
use crate::geometry::TimeBoundary;
use crate::io::{self, Dtype, Manifest};
use crate::observation::{self, ModelKind, ObservationModel};
use crate::rng::{ChainRng, Phase};
use crate::sampler::{self, AdaptMode, AlphaScope, SamplerConfig};

#[derive(Parser, Debug)]
#[command(
    name = "photon-gmrf",
    version,
    about = "Reconstruct intensity fields from photon-starved detector images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate or load a ground-truth scene and draw detector observations
    Simulate(SimulateArgs),
    /// Reconstruct an intensity field from detector observations
    Denoise(DenoiseArgs),
    /// Report reconstruction error against a known ground truth
    Evaluate(EvaluateArgs),
    /// Sum groups of consecutive frames (binary stacks are re-thresholded)
    Integrate(IntegrateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModelArg {
    Poisson,
    Bernoulli,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Poisson => ModelKind::Poisson,
            ModelArg::Bernoulli => ModelKind::Bernoulli,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SceneArg {
    Piecewise,
    Smooth,
    Moving,
}

impl From<SceneArg> for SceneKind {
    fn from(s: SceneArg) -> Self {
        match s {
            SceneArg::Piecewise => SceneKind::Piecewise,
            SceneArg::Smooth => SceneKind::Smooth,
            SceneArg::Moving => SceneKind::Moving,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum AdaptArg {
    Off,
    Alpha,
    AlphaBeta,
}

impl From<AdaptArg> for AdaptMode {
    fn from(a: AdaptArg) -> Self {
        match a {
            AdaptArg::Off => AdaptMode::Off,
            AdaptArg::Alpha => AdaptMode::Alpha,
            AdaptArg::AlphaBeta => AdaptMode::AlphaBeta,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum ScopeArg {
    Shared,
    PerFrame,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Synthetic scene family
    #[arg(long, value_enum, required_unless_present = "input", conflicts_with = "input")]
    pub scene: Option<SceneArg>,
    /// Ground-truth stack to observe instead of a synthetic scene
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    /// Rescale the scene to this mean intensity
    #[arg(long)]
    pub target_mean: Option<f64>,
    /// Detector model
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-pixel efficiency stack (single frame); defaults to 1 everywhere
    #[arg(long)]
    pub eta: Option<PathBuf>,
    /// Validity mask stack (1 = operational detector)
    #[arg(long, conflicts_with = "mask_fraction")]
    pub mask: Option<PathBuf>,
    /// Mark this fraction of sites faulty, chosen by the seed
    #[arg(long)]
    pub mask_fraction: Option<f64>,
    /// Prefix for output files
    #[arg(long, default_value = "sim")]
    pub out: String,
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    /// Observation stack to reconstruct from
    #[arg(long)]
    pub input: PathBuf,
    /// Detector model the observations came from
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Couple consecutive frames through temporal auxiliaries
    #[arg(long, default_value_t = false)]
    pub temporal: bool,
    /// Total iterations (default 2000, or 3000 with --temporal)
    #[arg(long)]
    pub iters: Option<usize>,
    /// Burn-in iterations (default 600, or 1000 with --temporal)
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Keep every n-th draw after burn-in
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    /// Spatial shape hyperparameter
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Temporal shape hyperparameter (used with --temporal)
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// Adapt shape hyperparameters during burn-in
    #[arg(long, value_enum, default_value_t = AdaptArg::Off)]
    pub adapt: AdaptArg,
    /// One alpha shared by all frames, or one per frame (single-frame
    /// batches only)
    #[arg(long, value_enum, default_value_t = ScopeArg::Shared)]
    pub alpha_scope: ScopeArg,
    /// Per-pixel efficiency stack; defaults to 1 everywhere
    #[arg(long)]
    pub eta: Option<PathBuf>,
    /// Validity mask stack (1 = operational detector)
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound of the intensity support (unbounded by default)
    #[arg(long, default_value_t = f64::INFINITY)]
    pub support_max: f64,
    /// Wrap the time axis instead of pinning ghost frames to a constant
    #[arg(long, default_value_t = false)]
    pub cyclic_time: bool,
    /// Worker threads (0 = machine default); results do not depend on this
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Reproduce the legacy single-frame count conditional (scale
    /// x_bar/(1+x_bar*eta)); binary runs then metropolize every site
    #[arg(long, default_value_t = false)]
    pub legacy_posterior_scale: bool,
    /// Also write per-site 5%/50%/95% posterior quantiles
    #[arg(long, default_value_t = false)]
    pub quantiles: bool,
    /// Prefix for output files
    #[arg(long, default_value = "denoise")]
    pub out: String,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Ground-truth intensity stack
    #[arg(long)]
    pub truth: PathBuf,
    /// Reconstructed intensity stack
    #[arg(long)]
    pub estimate: PathBuf,
    /// Observation stack; adds a detection-rate column
    #[arg(long)]
    pub obs: Option<PathBuf>,
    /// Write the table here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IntegrateArgs {
    /// Stack whose frames are merged
    #[arg(long)]
    pub input: PathBuf,
    /// Frames per merged group
    #[arg(long)]
    pub group_size: usize,
    /// Output stack path
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Denoise(a) => run_denoise(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Integrate(a) => run_integrate(a),
    }
}

fn load_eta(path: Option<&Path>, rows: usize, cols: usize) -> Result<EfficiencyMap> {
    match path {
        None => EfficiencyMap::uniform(rows, cols),
        Some(p) => {
            let (stack, _) = io::read_fstk(p)?;
            let d = stack.dims();
            if d.frames != 1 {
                return Err(Error::DataValidation(format!(
                    "efficiency stack must hold a single frame, got {}",
                    d.frames
                )));
            }
            EfficiencyMap::new(d.rows, d.cols, stack.into_data())
        }
    }
}

fn load_mask(path: &Path) -> Result<Mask> {
    let (stack, _) = io::read_fstk(path)?;
    Mask::new(stack)
}

fn manifest_digest(m: &mut Manifest, key: &str, path: &Path) -> Result<()> {
    m.push(key, format!("{}", path.display()));
    m.push(&format!("{key}_sha256"), io::sha256_hex(path)?);
    Ok(())
}

fn run_simulate(a: SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let model_kind: ModelKind = a.model.into();

    let mut manifest = Manifest::new();
    manifest.push("tool", "photon-gmrf");
    manifest.push("version", env!("CARGO_PKG_VERSION"));
    manifest.push("command", "simulate");
    manifest.push("model", model_kind.name());
    manifest.push("seed", a.seed);

    // Ground truth: synthetic or loaded.
    let truth_raw = match (&a.scene, &a.input) {
        (Some(scene), None) => {
            manifest.push("scene", format!("{scene:?}").to_lowercase());
            manifest.push("scene_version", eval::SCENE_VERSION);
            manifest.push("rows", a.rows);
            manifest.push("cols", a.cols);
            manifest.push("frames", a.frames);
            eval::make_scene((*scene).into(), a.rows, a.cols, a.frames, a.seed)?
        }
        (None, Some(path)) => {
            let (stack, _) = io::read_fstk(path)?;
            manifest_digest(&mut manifest, "input", path)?;
            stack
        }
        // clap enforces exactly one of the two.
        _ => unreachable!("scene and input are mutually exclusive and one is required"),
    };
    let truth = match a.target_mean {
        Some(m) => {
            manifest.push("target_mean", m);
            observation::scale_to_target(&truth_raw, m)?
        }
        None => {
            let t = truth_raw.clone();
            t.validate_positive("scene")?;
            t
        }
    };
    let dims = truth.dims();

    let eta = load_eta(a.eta.as_deref(), dims.rows, dims.cols)?;
    if let Some(p) = &a.eta {
        manifest_digest(&mut manifest, "eta_input", p)?;
    }

    let key = ChainRng::new(a.seed);
    let mask = match (&a.mask, a.mask_fraction) {
        (Some(p), None) => {
            manifest_digest(&mut manifest, "mask_input", p)?;
            Some(load_mask(p)?)
        }
        (None, Some(frac)) => {
            if !(0.0..1.0).contains(&frac) {
                return Err(Error::InvalidArgument(format!("mask fraction must lie in [0, 1), got {frac}")));
            }
            manifest.push("mask_fraction", frac);
            let mut bits = FrameStack::filled(dims, 1.0);
            for site in 0..dims.len() {
                let mut r = key.stream(0, Phase::MaskGen, site as u64);
                use rand::Rng;
                if r.gen::<f64>() < frac {
                    bits.data_mut()[site] = 0.0;
                }
            }
            Some(Mask::new(bits)?)
        }
        (None, None) => None,
        (Some(_), Some(_)) => unreachable!("clap rejects mask with mask_fraction"),
    };

    let model = ObservationModel::new(model_kind, eta, mask)?;
    let obs = observation::simulate(&model, &truth, &key, 0)?;

    let truth_path = PathBuf::from(format!("{}.truth.fstk", a.out));
    let obs_path = PathBuf::from(format!("{}.obs.fstk", a.out));
    let eta_path = PathBuf::from(format!("{}.eta.fstk", a.out));
    io::write_fstk(&truth_path, &truth, Dtype::F64)?;
    let obs_dtype = match model_kind {
        ModelKind::Bernoulli => Dtype::U1,
        ModelKind::Poisson => Dtype::U32,
    };
    io::write_fstk(&obs_path, &obs, obs_dtype)?;
    io::write_fstk(&eta_path, &model.eta.to_stack(), Dtype::F64)?;
    manifest_digest(&mut manifest, "truth", &truth_path)?;
    manifest_digest(&mut manifest, "obs", &obs_path)?;
    manifest_digest(&mut manifest, "eta", &eta_path)?;
    if let Some(m) = &model.mask {
        let mask_path = PathBuf::from(format!("{}.mask.fstk", a.out));
        io::write_fstk(&mask_path, m.as_stack(), Dtype::U1)?;
        manifest_digest(&mut manifest, "mask", &mask_path)?;
    }
    manifest.push("elapsed_seconds", format!("{:.3}", started.elapsed().as_secs_f64()));
    manifest.write(Path::new(&format!("{}.manifest.txt", a.out)))?;
    Ok(())
}

fn run_denoise(a: DenoiseArgs) -> Result<()> {
    let started = Instant::now();
    let model_kind: ModelKind = a.model.into();
    let (y, _) = io::read_fstk(&a.input)?;
    let dims = y.dims();
    let t_load = started.elapsed().as_secs_f64();

    let eta = load_eta(a.eta.as_deref(), dims.rows, dims.cols)?;
    let mask = a.mask.as_deref().map(load_mask).transpose()?;
    let model = ObservationModel::new(model_kind, eta, mask)?;

    let iterations = a.iters.unwrap_or(if a.temporal { 3000 } else { 2000 });
    let burn_in = a.burnin.unwrap_or(if a.temporal { 1000 } else { 600 });
    let cfg = SamplerConfig {
        iterations,
        burn_in,
        thinning: a.thin,
        temporal: a.temporal,
        alpha0: a.alpha,
        beta0: a.beta,
        adapt: a.adapt.into(),
        alpha_scope: match a.alpha_scope {
            ScopeArg::Shared => AlphaScope::Shared,
            ScopeArg::PerFrame => AlphaScope::PerFrame,
        },
        support_max: a.support_max,
        boundary: if a.cyclic_time { TimeBoundary::Cyclic } else { TimeBoundary::Fixed },
        seed: a.seed,
        threads: a.threads,
        legacy_posterior_scale: a.legacy_posterior_scale,
        quantiles: a.quantiles,
    };

    let summary = sampler::run_chain(&y, &model, &cfg)?;
    let t_run = started.elapsed().as_secs_f64() - t_load;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }

    let mut manifest = Manifest::new();
    manifest.push("tool", "photon-gmrf");
    manifest.push("version", env!("CARGO_PKG_VERSION"));
    manifest.push("command", "denoise");
    manifest_digest(&mut manifest, "input", &a.input)?;
    if let Some(p) = &a.eta {
        manifest_digest(&mut manifest, "eta_input", p)?;
    }
    if let Some(p) = &a.mask {
        manifest_digest(&mut manifest, "mask_input", p)?;
    }
    manifest.push("model", model_kind.name());
    manifest.push("temporal", cfg.temporal);
    manifest.push("iterations", cfg.iterations);
    manifest.push("burn_in", cfg.burn_in);
    manifest.push("thinning", cfg.thinning);
    manifest.push("kept", summary.kept);
    manifest.push("alpha0", cfg.alpha0);
    manifest.push("beta0", cfg.beta0);
    manifest.push(
        "adapt",
        match cfg.adapt {
            AdaptMode::Off => "off",
            AdaptMode::Alpha => "alpha",
            AdaptMode::AlphaBeta => "alpha-beta",
        },
    );
    manifest.push(
        "alpha_scope",
        match cfg.alpha_scope {
            AlphaScope::Shared => "shared",
            AlphaScope::PerFrame => "per-frame",
        },
    );
    manifest.push("support_max", cfg.support_max);
    manifest.push("cyclic_time", a.cyclic_time);
    manifest.push("seed", cfg.seed);
    manifest.push("threads", cfg.threads);
    manifest.push("legacy_posterior_scale", cfg.legacy_posterior_scale);
    manifest.push("alpha_final", format!("{:?}", summary.hyper.alpha_values()));
    manifest.push("beta_final", summary.hyper.beta);
    manifest.push("warnings", summary.warnings.len());

    let mmse_path = PathBuf::from(format!("{}.x_mmse.fstk", a.out));
    let var_path = PathBuf::from(format!("{}.x_var.fstk", a.out));
    let acc_path = PathBuf::from(format!("{}.accept.fstk", a.out));
    io::write_fstk(&mmse_path, &summary.mean, Dtype::F64)?;
    io::write_fstk(&var_path, &summary.variance, Dtype::F64)?;
    io::write_fstk(&acc_path, &summary.acceptance, Dtype::F64)?;
    manifest_digest(&mut manifest, "x_mmse", &mmse_path)?;
    manifest_digest(&mut manifest, "x_var", &var_path)?;
    manifest_digest(&mut manifest, "accept", &acc_path)?;

    if let Some(q) = &summary.quantiles {
        for (name, stack) in [("x_q05", &q.q05), ("x_q50", &q.q50), ("x_q95", &q.q95)] {
            let p = PathBuf::from(format!("{}.{name}.fstk", a.out));
            io::write_fstk(&p, stack, Dtype::F64)?;
            manifest_digest(&mut manifest, name, &p)?;
        }
    }

    let hyper_rows: Vec<Vec<String>> = summary
        .hyper_trace
        .iter()
        .map(|p| vec![p.iteration.to_string(), format!("{:.17e}", p.alpha), format!("{:.17e}", p.beta)])
        .collect();
    let hyper_path = PathBuf::from(format!("{}.hyper_trace.csv", a.out));
    io::write_csv(&hyper_path, &["iteration", "alpha", "beta"], &hyper_rows)?;
    manifest_digest(&mut manifest, "hyper_trace", &hyper_path)?;

    let ll_rows: Vec<Vec<String>> = summary
        .loglik_trace
        .iter()
        .enumerate()
        .map(|(k, v)| vec![(k + 1).to_string(), format!("{v:.17e}")])
        .collect();
    let ll_path = PathBuf::from(format!("{}.loglik_trace.csv", a.out));
    io::write_csv(&ll_path, &["iteration", "loglik"], &ll_rows)?;
    manifest_digest(&mut manifest, "loglik_trace", &ll_path)?;

    manifest.push("seconds_load", format!("{t_load:.3}"));
    manifest.push("seconds_run", format!("{t_run:.3}"));
    manifest.push("elapsed_seconds", format!("{:.3}", started.elapsed().as_secs_f64()));
    manifest.write(Path::new(&format!("{}.manifest.txt", a.out)))?;
    Ok(())
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let (truth, _) = io::read_fstk(&a.truth)?;
    let (estimate, _) = io::read_fstk(&a.estimate)?;
    let obs = a.obs.as_deref().map(io::read_fstk).transpose()?.map(|(s, _)| s);

    let rows = eval::frame_metrics(&truth, &estimate, obs.as_ref())?;
    let with_rate = obs.is_some();
    let mut table: Vec<Vec<String>> = Vec::with_capacity(rows.len() + 1);
    for r in &rows {
        let mut row = vec![r.frame.to_string(), format!("{:.9e}", r.nmse), format!("{:.9e}", r.nse_std)];
        if with_rate {
            row.push(format!("{:.9e}", r.detection_rate.unwrap()));
        }
        table.push(row);
    }
    // Aggregate over all sites.
    let mut all = vec![
        "all".to_string(),
        format!("{:.9e}", eval::nmse(&truth, &estimate, None)?),
        format!("{:.9e}", eval::nse_std(&truth, &estimate, None)?),
    ];
    if with_rate {
        all.push(format!("{:.9e}", obs.as_ref().unwrap().mean()));
    }
    table.push(all);

    let header: &[&str] = if with_rate {
        &["frame", "nmse", "nse_std", "detection_rate"]
    } else {
        &["frame", "nmse", "nse_std"]
    };
    match &a.out {
        Some(path) => io::write_csv(path, header, &table)?,
        None => {
            println!("{}", header.join(","));
            for row in &table {
                println!("{}", row.join(","));
            }
        }
    }
    Ok(())
}

fn run_integrate(a: IntegrateArgs) -> Result<()> {
    let (y, dtype) = io::read_fstk(&a.input)?;
    let frames = y.dims().frames;
    if frames % a.group_size != 0 && frames > a.group_size {
        eprintln!(
            "warning: dropping {} trailing frames ({} % {})",
            frames % a.group_size,
            frames,
            a.group_size
        );
    }
    let summed = eval::sum_frame_groups(&y, a.group_size)?;
    // A saturating detector exposed for the whole group would report
    // "at least one photon", so binary stacks stay binary.
    let (out, out_dtype) = match dtype {
        Dtype::U1 => (eval::threshold_at_one(&summed), Dtype::U1),
        Dtype::U32 => (summed, Dtype::U32),
        Dtype::F64 => (summed, Dtype::F64),
    };
    io::write_fstk(&a.out, &out, out_dtype)?;
    Ok(())
}

/// Parses and validates the intensity support upper bound.
pub fn support_from_max(support_max: f64) -> Result<Interval> {
    Interval::new(0.0, support_max)
}
