//! Run configuration: command-line flags over a TOML file over defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fracfk::estimators::{geometric_checkpoints, MergeMode, Method};
use fracfk::paths::{FractionalIndices, Generator, JumpScaling, WalkConfig};
use fracfk::potentials::{BumpShape, Potential, TrialFunction};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "fracfk", version, about = "Feynman-Kac Monte Carlo for fractional Schrodinger equations")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "FRACFK_THREADS")]
    pub threads: Option<usize>,

    /// TOML file with defaults for any setting; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one trajectory as CSV.
    #[command(allow_negative_numbers = true)]
    Paths(PathsArgs),
    /// Estimate the ground-state energy from the decay of Z(t).
    #[command(allow_negative_numbers = true)]
    Energy(EnergyArgs),
    /// Weighted endpoint histogram at the horizon.
    #[command(allow_negative_numbers = true)]
    Density(DensityArgs),
    /// Hurst exponent and fractal dimension of a trajectory CSV.
    #[command(allow_negative_numbers = true)]
    Dfa(DfaArgs),
    /// Closed-form reference values.
    #[command(allow_negative_numbers = true)]
    Analytic(AnalyticArgs),
    /// Run the reference experiment suite and write a report.
    #[command(allow_negative_numbers = true)]
    ReproduceTables(TablesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Free,
    Harmonic,
    PowerLaw,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorArg {
    Auto,
    Lattice,
    Ctrw,
}

impl From<GeneratorArg> for Generator {
    fn from(g: GeneratorArg) -> Self {
        match g {
            GeneratorArg::Auto => Generator::Auto,
            GeneratorArg::Lattice => Generator::Lattice,
            GeneratorArg::Ctrw => Generator::Ctrw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingArg {
    PerEvent,
    BaseStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeArg {
    TopHat,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Fk,
    Gfk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeArg {
    Sequential,
    Unordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    Amplitude,
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formula {
    Fho,
    Delta,
    FractalDim,
    Beta,
}

#[derive(Debug, Clone, Default, Args)]
pub struct WalkArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Steps per unit time.
    #[arg(long)]
    pub n: Option<u64>,
    /// Horizon.
    #[arg(long = "t")]
    pub t: Option<f64>,
    /// Spatial dimension.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub d_alpha: Option<f64>,
    /// Start position; repeated for each coordinate.
    #[arg(long)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorArg>,
    #[arg(long, value_enum)]
    pub jump_scaling: Option<ScalingArg>,
    /// Cancel the small-jump bias of Pareto jumps (1 < alpha < 2).
    #[arg(long)]
    pub compensate: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PotentialArgs {
    #[arg(long, value_enum)]
    pub potential: Option<PotentialKind>,
    #[arg(long)]
    pub q2: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long, value_enum)]
    pub shape: Option<ShapeArg>,
    #[arg(long)]
    pub trial_c: Option<f64>,
    #[arg(long)]
    pub trial_e0: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub n_rep: Option<u64>,
    #[arg(long, value_enum)]
    pub merge: Option<MergeArg>,
}

#[derive(Debug, Clone, Args)]
pub struct PathsArgs {
    #[command(flatten)]
    pub walk: WalkArgs,
    /// Stream index of the replica to draw.
    #[arg(long)]
    pub replica: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EnergyArgs {
    #[command(flatten)]
    pub walk: WalkArgs,
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Number of geometric checkpoints between t/8 and t.
    #[arg(long)]
    pub checkpoints: Option<usize>,
    #[arg(long)]
    pub window_min: Option<f64>,
    #[arg(long)]
    pub window_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub walk: WalkArgs,
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub x_min: Option<f64>,
    #[arg(long)]
    pub x_max: Option<f64>,
    #[arg(long, value_enum)]
    pub kind: Option<DensityKind>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DfaArgs {
    /// Trajectory CSV written by `paths`.
    #[arg(long)]
    pub input: PathBuf,
    /// Grid points for the increment series (default: number of events - 1).
    #[arg(long)]
    pub points: Option<usize>,
    /// Window sizes (default: 12 geometric sizes from 8 to L/8).
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<usize>>,
    /// JSON summary (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of `n,F`.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyticArgs {
    #[arg(long, value_enum)]
    pub formula: Formula,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub d_alpha: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub level: Option<u32>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub hbar: Option<f64>,
    /// First argument of the Beta function.
    #[arg(long)]
    pub a: Option<f64>,
    /// Second argument of the Beta function.
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TablesArgs {
    #[arg(long, default_value = "report")]
    pub out_dir: PathBuf,
    /// Divide every replica count by this factor.
    #[arg(long, default_value_t = 1)]
    pub reduce: u64,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Settings readable from the `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub walk: FileWalk,
    #[serde(default)]
    pub run: FileRun,
    #[serde(default)]
    pub potential: FilePotential,
    #[serde(default)]
    pub trial: FileTrial,
    #[serde(default)]
    pub density: FileDensity,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileWalk {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub n: Option<u64>,
    pub t: Option<f64>,
    pub d: Option<usize>,
    pub d_alpha: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub generator: Option<GeneratorArg>,
    pub jump_scaling: Option<ScalingArg>,
    pub compensate: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRun {
    pub seed: Option<u64>,
    pub n_rep: Option<u64>,
    pub merge: Option<MergeArg>,
    pub method: Option<MethodArg>,
    pub checkpoints: Option<usize>,
    pub window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilePotential {
    pub kind: Option<PotentialKind>,
    pub q2: Option<f64>,
    pub gamma: Option<f64>,
    pub g: Option<f64>,
    pub width: Option<f64>,
    pub shape: Option<ShapeArg>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileTrial {
    pub c: Option<f64>,
    pub e0: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDensity {
    pub bins: Option<usize>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub kind: Option<DensityKind>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {}", e.message())))
    }
}

/// Fully resolved settings of a run; embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub walk: WalkConfig,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replica: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_rep: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merge: Option<MergeMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<Potential>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<TrialFunction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<(f64, f64, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_kind: Option<DensityKind>,
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_N_REP: u64 = 10_000;
pub const DEFAULT_CHECKPOINTS: usize = 8;

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn resolve_walk(flags: &WalkArgs, file: &FileWalk) -> Result<WalkConfig, CliError> {
    let alpha = pick(flags.alpha, file.alpha, 2.0);
    let beta = pick(flags.beta, file.beta, 1.0);
    let indices = FractionalIndices::new(alpha, beta)?;
    let t = pick(flags.t, file.t, 10.0);
    let n = pick(flags.n, file.n, 100);
    let d = flags.d.or(file.d);
    let x0 = flags.x0.clone().or_else(|| file.x0.clone());
    let start = match (x0, d) {
        (Some(x0), Some(d)) if x0.len() == 1 && d > 1 => vec![x0[0]; d],
        (Some(x0), _) => x0,
        (None, d) => vec![0.0; d.unwrap_or(1)],
    };
    if let Some(d) = d {
        if start.len() != d {
            return Err(CliError::Config(format!(
                "walk.x0: expected {d} coordinates, got {}",
                start.len()
            )));
        }
    }
    let scaling = match pick(flags.jump_scaling, file.jump_scaling, ScalingArg::PerEvent) {
        ScalingArg::PerEvent => JumpScaling::PerEvent,
        ScalingArg::BaseStep => JumpScaling::BaseStep,
    };
    let walk = WalkConfig::new(indices, t, n)
        .with_start(start)
        .with_diffusion(pick(flags.d_alpha, file.d_alpha, 0.5))
        .with_generator(pick(flags.generator, file.generator, GeneratorArg::Auto).into())
        .with_jump_scaling(scaling)
        .with_compensation(pick(flags.compensate, file.compensate, false));
    walk.validate()?;
    Ok(walk)
}

pub fn resolve_potential(flags: &PotentialArgs, file: &FilePotential) -> Result<Potential, CliError> {
    let kind = pick(flags.potential, file.kind, PotentialKind::Harmonic);
    let q2 = pick(flags.q2, file.q2, 0.5);
    let potential = match kind {
        PotentialKind::Free => Potential::Free,
        PotentialKind::Harmonic => Potential::PowerLaw { q2, gamma: 2.0 },
        PotentialKind::PowerLaw => Potential::PowerLaw {
            q2,
            gamma: pick(flags.gamma, file.gamma, 2.0),
        },
        PotentialKind::Delta => Potential::DeltaWell {
            g: pick(flags.g, file.g, 2.0),
            width: pick(flags.width, file.width, 0.01),
            shape: match pick(flags.shape, file.shape, ShapeArg::TopHat) {
                ShapeArg::TopHat => BumpShape::TopHat,
                ShapeArg::Gaussian => BumpShape::Gaussian,
            },
        },
    };
    potential.validate()?;
    Ok(potential)
}

/// Trial function when the run is importance sampled. Giving any trial key
/// selects GFK unless the method is set explicitly.
pub fn resolve_trial(
    flags: &PotentialArgs,
    file: &FileTrial,
    file_method: Option<MethodArg>,
) -> Result<Option<TrialFunction>, CliError> {
    let c = flags.trial_c.or(file.c);
    let e0 = flags.trial_e0.or(file.e0);
    let method = flags.method.or(file_method).unwrap_or(if c.is_some() || e0.is_some() {
        MethodArg::Gfk
    } else {
        MethodArg::Fk
    });
    match method {
        MethodArg::Fk => Ok(None),
        MethodArg::Gfk => Ok(Some(TrialFunction::gaussian(c.unwrap_or(0.5), e0.unwrap_or(0.0))?)),
    }
}

pub fn resolve_merge(flags: &EnsembleArgs, file: &FileRun) -> MergeMode {
    match flags.merge.or(file.merge).unwrap_or(MergeArg::Sequential) {
        MergeArg::Sequential => MergeMode::Sequential,
        MergeArg::Unordered => MergeMode::Unordered,
    }
}

pub fn resolve_energy(args: &EnergyArgs, file: &FileConfig) -> Result<RunConfig, CliError> {
    let walk = resolve_walk(&args.walk, &file.walk)?;
    let potential = resolve_potential(&args.potential, &file.potential)?;
    let trial = resolve_trial(&args.potential, &file.trial, file.run.method)?;
    let t = walk.horizon;
    let count = pick(args.checkpoints, file.run.checkpoints, DEFAULT_CHECKPOINTS);
    if count < 3 {
        return Err(CliError::Config(format!("run.checkpoints: must be >= 3, got {count}")));
    }
    let checkpoints = geometric_checkpoints(t, count);
    let file_window = file.run.window;
    let lo = args.window_min.or(file_window.map(|w| w.0)).unwrap_or(0.5 * t);
    let hi = args.window_max.or(file_window.map(|w| w.1)).unwrap_or(t);
    if !(lo >= 0.0 && lo < hi && hi <= t * (1.0 + 1e-12)) {
        return Err(CliError::Config(format!("run.window: need 0 <= min < max <= t, got [{lo}, {hi}]")));
    }
    let inside = checkpoints.iter().filter(|&&c| c >= lo - 1e-9 && c <= hi + 1e-9).count();
    if inside < 3 {
        return Err(CliError::Config(format!(
            "run.window: only {inside} checkpoints fall in [{lo}, {hi}]; raise run.checkpoints or widen the window"
        )));
    }
    let n_rep = pick(args.ensemble.n_rep, file.run.n_rep, DEFAULT_N_REP);
    if n_rep < 2 {
        return Err(CliError::Config(format!("run.n_rep: must be >= 2, got {n_rep}")));
    }
    if trial.is_some() && (walk.diffusion - 0.5).abs() > 1e-12 {
        return Err(CliError::Config("walk.d_alpha: importance sampling requires 0.5".into()));
    }
    Ok(RunConfig {
        command: "energy".into(),
        seed: pick(args.walk.seed, file.run.seed, DEFAULT_SEED),
        replica: None,
        n_rep: Some(n_rep),
        merge: Some(resolve_merge(&args.ensemble, &file.run)),
        method: Some(if trial.is_some() { Method::Gfk } else { Method::Fk }),
        potential: Some(potential),
        trial,
        checkpoints: Some(checkpoints),
        window: Some((lo, hi)),
        edges: None,
        density_kind: None,
        walk,
    })
}

pub fn resolve_density(args: &DensityArgs, file: &FileConfig) -> Result<RunConfig, CliError> {
    let walk = resolve_walk(&args.walk, &file.walk)?;
    let potential = resolve_potential(&args.potential, &file.potential)?;
    let trial = resolve_trial(&args.potential, &file.trial, file.run.method)?;
    let n_rep = pick(args.ensemble.n_rep, file.run.n_rep, DEFAULT_N_REP);
    if n_rep < 2 {
        return Err(CliError::Config(format!("run.n_rep: must be >= 2, got {n_rep}")));
    }
    let bins = pick(args.bins, file.density.bins, 100);
    let lo = pick(args.x_min, file.density.x_min, -5.0);
    let hi = pick(args.x_max, file.density.x_max, 5.0);
    if bins == 0 {
        return Err(CliError::Config("density.bins: must be >= 1".into()));
    }
    if !(lo < hi) {
        return Err(CliError::Config(format!("density.x_min: must be below x_max, got [{lo}, {hi}]")));
    }
    if trial.is_some() && (walk.diffusion - 0.5).abs() > 1e-12 {
        return Err(CliError::Config("walk.d_alpha: importance sampling requires 0.5".into()));
    }
    Ok(RunConfig {
        command: "density".into(),
        seed: pick(args.walk.seed, file.run.seed, DEFAULT_SEED),
        replica: None,
        n_rep: Some(n_rep),
        merge: Some(resolve_merge(&args.ensemble, &file.run)),
        method: Some(if trial.is_some() { Method::Gfk } else { Method::Fk }),
        potential: Some(potential),
        trial,
        checkpoints: None,
        window: None,
        edges: Some((lo, hi, bins)),
        density_kind: Some(pick(args.kind, file.density.kind, DensityKind::Density)),
        walk,
    })
}

pub fn resolve_paths(args: &PathsArgs, file: &FileConfig) -> Result<RunConfig, CliError> {
    let walk = resolve_walk(&args.walk, &file.walk)?;
    Ok(RunConfig {
        command: "paths".into(),
        seed: pick(args.walk.seed, file.run.seed, DEFAULT_SEED),
        replica: Some(args.replica.unwrap_or(0)),
        n_rep: None,
        merge: None,
        potential: None,
        method: None,
        trial: None,
        checkpoints: None,
        window: None,
        edges: None,
        density_kind: None,
        walk,
    })
}
