//! Command-line front end: simulate models, fit them to trajectory corpora,
//! compare models with the metric suite, and sweep parameters for analysis
//! tables and plots.
//!
//! Every flag can also come from a JSON config file (`--config`) whose keys
//! mirror the kebab-case flag names; explicit flags win over the config.
//! Numeric output uses shortest round-trip decimal formatting, so files are
//! locale independent and byte-reproducible for a fixed `--seed`.

use std::collections::BTreeMap;
use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{
    group_by_condition, load_corpus, meta_for_task, preprocess_condition, reference_acceleration,
    synthesize_corpus, write_corpus, Direction, DistributionSeriesJson, PipelineReport, RawTrial,
    TrajectoryEnsemble, TrialMeta,
};
use crate::error::{Error, Result};
use crate::fitting::{fit, FitConfig, FitResult, ParameterSpace};
use crate::metrics::{max_error, mkl, mwd, pos_vel_series, sse, Gaussian2};
use crate::models::{
    simulate_model, ElqgParams, LqCostWeights, LqgNoiseParams, MinJerkParams, ModelKind,
    ModelParams, SimOutput, SimTrace, SolveOptions, TaskSpec, TwoOlParams,
};
use crate::svg::{Panel, Series};

/// Target width used when none is given; together with the default 0.212 m
/// distance of the bundled examples this is an index-of-difficulty-4 task.
pub const DEFAULT_TARGET_WIDTH_M: f64 = 0.0141;
/// Default horizon in steps (0.97 s at 2 ms).
pub const DEFAULT_HORIZON_STEPS: usize = 485;

#[derive(Debug, Parser)]
#[command(
    name = "pointctl",
    version,
    about = "Simulate, fit, compare, and sweep pointing-movement control models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one model and write trajectory, distribution, and plot files.
    Simulate(SimulateArgs),
    /// Fit one model to a trajectory corpus, one fit per condition.
    Fit(FitArgs),
    /// Fit several models against a corpus and tabulate the metric suite.
    Compare(CompareArgs),
    /// Simulate one model over a parameter grid and tabulate summaries.
    Sweep(SweepArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a.resolved()?),
        Command::Fit(a) => cmd_fit(a.resolved()?),
        Command::Compare(a) => cmd_compare(a.resolved()?),
        Command::Sweep(a) => cmd_sweep(a.resolved()?),
    }
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn merge<T>(cli: Option<T>, cfg: Option<T>) -> Option<T> {
    cli.or(cfg)
}

/// Task geometry shared by simulate and sweep.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TaskFlags {
    /// Movement start position in meters.
    #[arg(long)]
    pub start: Option<f64>,
    /// Target center position in meters.
    #[arg(long)]
    pub target: Option<f64>,
    /// Target width in meters.
    #[arg(long)]
    pub width: Option<f64>,
    /// Horizon in steps; trajectories carry n+1 samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Step duration in seconds.
    #[arg(long)]
    pub h: Option<f64>,
    /// Initial velocity in m/s.
    #[arg(long)]
    pub v0: Option<f64>,
}

impl TaskFlags {
    fn merged_over(self, cfg: Self) -> Self {
        Self {
            start: merge(self.start, cfg.start),
            target: merge(self.target, cfg.target),
            width: merge(self.width, cfg.width),
            n: merge(self.n, cfg.n),
            h: merge(self.h, cfg.h),
            v0: merge(self.v0, cfg.v0),
        }
    }

    fn build(&self) -> Result<TaskSpec> {
        let target = self
            .target
            .ok_or_else(|| Error::Cli("missing --target (target center in meters)".into()))?;
        let mut task = TaskSpec::new(
            self.start.unwrap_or(0.0),
            target,
            self.width.unwrap_or(DEFAULT_TARGET_WIDTH_M),
            self.n.unwrap_or(DEFAULT_HORIZON_STEPS),
        );
        if let Some(h) = self.h {
            task.h = h;
        }
        if let Some(v0) = self.v0 {
            task.v0 = v0;
        }
        task.validate()?;
        Ok(task)
    }
}

/// Model parameters; each model reads the subset it needs.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ParamFlags {
    /// Spring stiffness k (2ol-eq).
    #[arg(long)]
    pub k: Option<f64>,
    /// Damping d (2ol-eq); give either this or --zeta.
    #[arg(long)]
    pub d: Option<f64>,
    /// Damping ratio zeta = d / (2 sqrt k) (2ol-eq).
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Movement duration in frames, possibly fractional (minjerk).
    #[arg(long = "nmj")]
    pub nmj: Option<f64>,
    /// Control effort weight (lqr, lqg, elqg).
    #[arg(long)]
    pub omega_r: Option<f64>,
    /// Terminal velocity cost weight (lqr, lqg, elqg).
    #[arg(long)]
    pub omega_v: Option<f64>,
    /// Terminal force cost weight (lqr, lqg, elqg).
    #[arg(long)]
    pub omega_f: Option<f64>,
    /// Signal-dependent control noise scale (lqg, elqg).
    #[arg(long)]
    pub sigma_u: Option<f64>,
    /// Position-proportional observation noise scale (lqg).
    #[arg(long)]
    pub sigma_s: Option<f64>,
    /// Velocity observation noise (elqg).
    #[arg(long)]
    pub sigma_v: Option<f64>,
    /// Force observation noise (elqg).
    #[arg(long)]
    pub sigma_f: Option<f64>,
    /// Fixation observation noise (elqg).
    #[arg(long)]
    pub sigma_e: Option<f64>,
    /// Eccentricity-dependent gaze noise weight (elqg).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Saccade arrival step, possibly fractional (elqg).
    #[arg(long = "ns")]
    pub ns: Option<f64>,
}

impl ParamFlags {
    fn merged_over(self, cfg: Self) -> Self {
        Self {
            k: merge(self.k, cfg.k),
            d: merge(self.d, cfg.d),
            zeta: merge(self.zeta, cfg.zeta),
            nmj: merge(self.nmj, cfg.nmj),
            omega_r: merge(self.omega_r, cfg.omega_r),
            omega_v: merge(self.omega_v, cfg.omega_v),
            omega_f: merge(self.omega_f, cfg.omega_f),
            sigma_u: merge(self.sigma_u, cfg.sigma_u),
            sigma_s: merge(self.sigma_s, cfg.sigma_s),
            sigma_v: merge(self.sigma_v, cfg.sigma_v),
            sigma_f: merge(self.sigma_f, cfg.sigma_f),
            sigma_e: merge(self.sigma_e, cfg.sigma_e),
            gamma: merge(self.gamma, cfg.gamma),
            ns: merge(self.ns, cfg.ns),
        }
    }
}

fn need(v: Option<f64>, flag: &str, model: ModelKind) -> Result<f64> {
    v.ok_or_else(|| Error::Cli(format!("model {} requires {flag}", model.name())))
}

/// Assemble a validated parameter set for `kind` from the flags it uses.
pub fn build_params(kind: ModelKind, f: &ParamFlags) -> Result<ModelParams> {
    match kind {
        ModelKind::TwoOlEq => {
            let k = need(f.k, "--k", kind)?;
            match (f.d, f.zeta) {
                (Some(d), None) => Ok(ModelParams::TwoOlEq(TwoOlParams::new(k, d)?)),
                (None, Some(z)) => Ok(ModelParams::TwoOlEq(
                    TwoOlParams::from_stiffness_and_damping_ratio(k, z)?,
                )),
                _ => Err(Error::Cli(
                    "model 2ol-eq requires exactly one of --d or --zeta".into(),
                )),
            }
        }
        ModelKind::MinJerk => Ok(ModelParams::MinJerk(MinJerkParams::new(need(
            f.nmj, "--nmj", kind,
        )?)?)),
        ModelKind::Lqr => Ok(ModelParams::Lqr(weights_from(f, kind)?)),
        ModelKind::Lqg => Ok(ModelParams::Lqg {
            weights: weights_from(f, kind)?,
            noise: LqgNoiseParams::new(
                need(f.sigma_u, "--sigma-u", kind)?,
                need(f.sigma_s, "--sigma-s", kind)?,
            )?,
        }),
        ModelKind::Elqg => Ok(ModelParams::Elqg {
            weights: weights_from(f, kind)?,
            noise: ElqgParams::new(
                need(f.sigma_u, "--sigma-u", kind)?,
                f.sigma_v.unwrap_or(0.0),
                f.sigma_f.unwrap_or(0.0),
                f.sigma_e.unwrap_or(0.0),
                need(f.gamma, "--gamma", kind)?,
                f.ns.unwrap_or(0.0),
            )?,
        }),
    }
}

fn weights_from(f: &ParamFlags, kind: ModelKind) -> Result<LqCostWeights> {
    LqCostWeights::new(
        f.omega_v.unwrap_or(0.0),
        f.omega_f.unwrap_or(0.0),
        need(f.omega_r, "--omega-r", kind)?,
    )
}

/// Optimizer settings; unset fields fall back to the fitting defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct FitFlags {
    /// RNG seed for the optimizer.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Population size; default scales with the parameter count.
    #[arg(long)]
    pub population: Option<usize>,
    /// Generation cap; 0 keeps the best of the initial population.
    #[arg(long)]
    pub max_generations: Option<usize>,
    /// Relative best-loss improvement that still counts as progress.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Generations without progress before the search stops.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Differential weight F.
    #[arg(long)]
    pub mutation: Option<f64>,
    /// Crossover rate CR.
    #[arg(long)]
    pub crossover: Option<f64>,
    /// Loss-evaluation threads per condition; default picks automatically.
    #[arg(long)]
    pub parallel_width: Option<usize>,
}

impl FitFlags {
    fn merged_over(self, cfg: Self) -> Self {
        Self {
            seed: merge(self.seed, cfg.seed),
            population: merge(self.population, cfg.population),
            max_generations: merge(self.max_generations, cfg.max_generations),
            tolerance: merge(self.tolerance, cfg.tolerance),
            patience: merge(self.patience, cfg.patience),
            mutation: merge(self.mutation, cfg.mutation),
            crossover: merge(self.crossover, cfg.crossover),
            parallel_width: merge(self.parallel_width, cfg.parallel_width),
        }
    }

    fn to_config(&self, auto_width: usize) -> FitConfig {
        let d = FitConfig::default();
        FitConfig {
            population: self.population.or(d.population),
            max_generations: self.max_generations.unwrap_or(d.max_generations),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            patience: self.patience.unwrap_or(d.patience),
            mutation: self.mutation.unwrap_or(d.mutation),
            crossover: self.crossover.unwrap_or(d.crossover),
            seed: self.seed.unwrap_or(d.seed),
            parallel_width: self.parallel_width.unwrap_or(auto_width),
        }
    }
}

/// Corpus selection shared by fit and compare.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct CorpusFlags {
    /// Corpus CSV file or directory of corpus CSV files.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Divide positions (and condition distance/width) by this many px per meter.
    #[arg(long)]
    pub px_per_m: Option<f64>,
    /// Restrict to one participant id (applies after unit conversion).
    #[arg(long)]
    pub participant: Option<String>,
    /// Restrict to one movement direction: left or right.
    #[arg(long)]
    pub direction: Option<String>,
    /// Restrict to conditions with this distance in meters.
    #[arg(long)]
    pub distance: Option<f64>,
    /// Restrict to conditions with this target width in meters.
    #[arg(long)]
    pub width: Option<f64>,
    /// Condition metadata override: participant id (give all four meta flags).
    #[arg(long)]
    pub meta_participant: Option<String>,
    /// Condition metadata override: distance in meters.
    #[arg(long)]
    pub meta_distance: Option<f64>,
    /// Condition metadata override: target width in meters.
    #[arg(long)]
    pub meta_width: Option<f64>,
    /// Condition metadata override: direction, left or right.
    #[arg(long)]
    pub meta_direction: Option<String>,
    /// Keep the recorded reaction time instead of trimming to movement onset.
    #[arg(long)]
    #[serde(default)]
    pub skip_reaction_strip: bool,
}

impl CorpusFlags {
    fn merged_over(self, cfg: Self) -> Self {
        Self {
            corpus: merge(self.corpus, cfg.corpus),
            px_per_m: merge(self.px_per_m, cfg.px_per_m),
            participant: merge(self.participant, cfg.participant),
            direction: merge(self.direction, cfg.direction),
            distance: merge(self.distance, cfg.distance),
            width: merge(self.width, cfg.width),
            meta_participant: merge(self.meta_participant, cfg.meta_participant),
            meta_distance: merge(self.meta_distance, cfg.meta_distance),
            meta_width: merge(self.meta_width, cfg.meta_width),
            meta_direction: merge(self.meta_direction, cfg.meta_direction),
            skip_reaction_strip: self.skip_reaction_strip || cfg.skip_reaction_strip,
        }
    }

    fn meta_override(&self) -> Result<Option<TrialMeta>> {
        let given = [
            self.meta_participant.is_some(),
            self.meta_distance.is_some(),
            self.meta_width.is_some(),
            self.meta_direction.is_some(),
        ];
        if given.iter().all(|g| !g) {
            return Ok(None);
        }
        if !given.iter().all(|g| *g) {
            return Err(Error::Cli(
                "metadata override needs all of --meta-participant, --meta-distance, \
                 --meta-width, --meta-direction"
                    .into(),
            ));
        }
        Ok(Some(TrialMeta {
            participant: self.meta_participant.clone().unwrap(),
            distance_m: self.meta_distance.unwrap(),
            width_m: self.meta_width.unwrap(),
            direction: Direction::parse(self.meta_direction.as_deref().unwrap())?,
        }))
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON config file whose keys mirror the flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model: 2ol-eq, minjerk, lqr, lqg, or elqg.
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub task: TaskFlags,
    #[command(flatten)]
    pub params: ParamFlags,
    /// Apply state costs every step instead of only at the horizon (lqg, elqg).
    #[arg(long)]
    pub every_step_costs: bool,
    /// Also write this many sampled trajectories as a corpus CSV (stochastic
    /// models sample their own noise; others repeat the mean).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Positional noise added to sampled trajectories, in meters.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// RNG seed for sampled trajectories.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Participant id recorded in sampled-corpus metadata.
    #[arg(long)]
    pub participant: Option<String>,
    /// Also write an SVG plot of position, velocity, and acceleration.
    #[arg(long)]
    pub svg: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct SimulateConfig {
    model: Option<String>,
    #[serde(flatten)]
    task: TaskFlags,
    #[serde(flatten)]
    params: ParamFlags,
    every_step_costs: bool,
    samples: Option<usize>,
    jitter: Option<f64>,
    seed: Option<u64>,
    participant: Option<String>,
    svg: bool,
    out: Option<PathBuf>,
}

impl SimulateArgs {
    fn resolved(mut self) -> Result<Self> {
        if let Some(path) = self.config.take() {
            let cfg: SimulateConfig = load_config(&path)?;
            self.model = merge(self.model, cfg.model);
            self.task = self.task.merged_over(cfg.task);
            self.params = self.params.merged_over(cfg.params);
            self.every_step_costs = self.every_step_costs || cfg.every_step_costs;
            self.samples = merge(self.samples, cfg.samples);
            self.jitter = merge(self.jitter, cfg.jitter);
            self.seed = merge(self.seed, cfg.seed);
            self.participant = merge(self.participant, cfg.participant);
            self.svg = self.svg || cfg.svg;
            self.out = merge(self.out, cfg.out);
        }
        Ok(self)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// JSON config file whose keys mirror the flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model: 2ol-eq, minjerk, lqr, lqg, or elqg.
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub corpus: CorpusFlags,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct FitCmdConfig {
    model: Option<String>,
    #[serde(flatten)]
    corpus: CorpusFlags,
    #[serde(flatten)]
    fit: FitFlags,
    out: Option<PathBuf>,
}

impl FitArgs {
    fn resolved(mut self) -> Result<Self> {
        if let Some(path) = self.config.take() {
            let cfg: FitCmdConfig = load_config(&path)?;
            self.model = merge(self.model, cfg.model);
            self.corpus = self.corpus.merged_over(cfg.corpus);
            self.fit = self.fit.merged_over(cfg.fit);
            self.out = merge(self.out, cfg.out);
        }
        Ok(self)
    }
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// JSON config file whose keys mirror the flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated models to fit and compare.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[command(flatten)]
    pub corpus: CorpusFlags,
    #[command(flatten)]
    pub fit: FitFlags,
    /// External trajectory set (corpus schema, single condition) scored as one
    /// more column; clipped to the common length with the reference.
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Unit conversion for the external set only.
    #[arg(long)]
    pub external_px_per_m: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct CompareConfig {
    models: Vec<String>,
    #[serde(flatten)]
    corpus: CorpusFlags,
    #[serde(flatten)]
    fit: FitFlags,
    external: Option<PathBuf>,
    external_px_per_m: Option<f64>,
    out: Option<PathBuf>,
}

impl CompareArgs {
    fn resolved(mut self) -> Result<Self> {
        if let Some(path) = self.config.take() {
            let cfg: CompareConfig = load_config(&path)?;
            if self.models.is_empty() {
                self.models = cfg.models;
            }
            self.corpus = self.corpus.merged_over(cfg.corpus);
            self.fit = self.fit.merged_over(cfg.fit);
            self.external = merge(self.external, cfg.external);
            self.external_px_per_m = merge(self.external_px_per_m, cfg.external_px_per_m);
            self.out = merge(self.out, cfg.out);
        }
        Ok(self)
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON config file whose keys mirror the flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model: 2ol-eq, minjerk, lqr, lqg, or elqg.
    #[arg(long)]
    pub model: Option<String>,
    /// Parameter to vary (flag name without dashes, e.g. zeta or sigma-u).
    #[arg(long)]
    pub param: Option<String>,
    /// Explicit comma-separated grid values.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    /// Grid start (with --to and --steps).
    #[arg(long)]
    pub from: Option<f64>,
    /// Grid end, inclusive.
    #[arg(long)]
    pub to: Option<f64>,
    /// Number of evenly spaced grid points.
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub task: TaskFlags,
    #[command(flatten)]
    pub params: ParamFlags,
    /// Apply state costs every step instead of only at the horizon (lqg, elqg).
    #[arg(long)]
    pub every_step_costs: bool,
    /// Also write an SVG overlay of the swept trajectories.
    #[arg(long)]
    pub svg: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct SweepConfig {
    model: Option<String>,
    param: Option<String>,
    grid: Vec<f64>,
    from: Option<f64>,
    to: Option<f64>,
    steps: Option<usize>,
    #[serde(flatten)]
    task: TaskFlags,
    #[serde(flatten)]
    params: ParamFlags,
    every_step_costs: bool,
    svg: bool,
    out: Option<PathBuf>,
}

impl SweepArgs {
    fn resolved(mut self) -> Result<Self> {
        if let Some(path) = self.config.take() {
            let cfg: SweepConfig = load_config(&path)?;
            self.model = merge(self.model, cfg.model);
            self.param = merge(self.param, cfg.param);
            if self.grid.is_empty() {
                self.grid = cfg.grid;
            }
            self.from = merge(self.from, cfg.from);
            self.to = merge(self.to, cfg.to);
            self.steps = merge(self.steps, cfg.steps);
            self.task = self.task.merged_over(cfg.task);
            self.params = self.params.merged_over(cfg.params);
            self.every_step_costs = self.every_step_costs || cfg.every_step_costs;
            self.svg = self.svg || cfg.svg;
            self.out = merge(self.out, cfg.out);
        }
        Ok(self)
    }
}

fn required_model(model: &Option<String>) -> Result<ModelKind> {
    let name = model
        .as_deref()
        .ok_or_else(|| Error::Cli("missing --model".into()))?;
    ModelKind::parse(name)
}

fn resolve_out(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn solve_opts(every_step_costs: bool) -> SolveOptions {
    SolveOptions {
        every_step_costs,
        ..SolveOptions::default()
    }
}

/// File-name stem for one condition, matching the corpus naming convention.
fn condition_slug(meta: &TrialMeta) -> String {
    format!(
        "{}__d{}__w{}__{}",
        meta.participant,
        meta.distance_m,
        meta.width_m,
        meta.direction.name()
    )
}

// ---------------------------------------------------------------------------
// simulate

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let kind = required_model(&args.model)?;
    let task = args.task.build()?;
    let params = build_params(kind, &args.params)?;
    let opts = solve_opts(args.every_step_costs);
    let sim = simulate_model(&params, &task, &opts)?;
    let out_dir = resolve_out(&args.out)?;

    let traj_path = out_dir.join("trajectory.csv");
    write_trajectory_csv(&traj_path, &sim.trace)?;
    println!("{}", traj_path.display());

    let participant = args.participant.as_deref().unwrap_or("sim");
    if let Some(dist) = &sim.distribution {
        let meta = serde_json::json!({
            "model": kind.name(),
            "condition": serde_json::to_value(meta_for_task(&task, participant))?,
        });
        let json = DistributionSeriesJson::from_distribution(dist, meta);
        let dist_path = out_dir.join("distribution.json");
        write_json(&dist_path, &json)?;
        println!("{}", dist_path.display());
    }

    if args.samples.unwrap_or(0) > 0 {
        let trials = synthesize_corpus(
            &params,
            &task,
            participant,
            args.samples.unwrap(),
            args.seed.unwrap_or(0),
            args.jitter.unwrap_or(0.0),
        )?;
        // Sampled trajectories live in their own subdirectory so it can be
        // fed back to `fit --corpus` unchanged.
        let sample_dir = out_dir.join("samples");
        fs::create_dir_all(&sample_dir)?;
        let path = sample_dir.join(format!("{}.csv", condition_slug(&trials[0].meta)));
        write_corpus(&path, &trials)?;
        println!("{}", path.display());
    }

    if args.svg {
        let svg_path = out_dir.join("plot.svg");
        fs::write(&svg_path, crate::svg::render(&simulate_panels(kind, &task, &sim)))?;
        println!("{}", svg_path.display());
    }
    Ok(())
}

fn write_trajectory_csv(path: &Path, trace: &SimTrace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "frame,time_s,pos_m,vel_mps,acc_mps2,control")?;
    for i in 0..trace.pos.len() {
        let control = if i < trace.control.len() {
            trace.control[i].to_string()
        } else {
            String::new()
        };
        writeln!(
            w,
            "{i},{},{},{},{},{control}",
            i as f64 * trace.h,
            trace.pos[i],
            trace.vel[i],
            trace.acc[i],
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    fs::write(path, text)?;
    Ok(())
}

fn simulate_panels(kind: ModelKind, task: &TaskSpec, sim: &SimOutput) -> Vec<Panel> {
    let h = sim.trace.h;
    let t = |i: usize| i as f64 * h;
    let points = |ys: &[f64]| -> Vec<(f64, f64)> {
        ys.iter().enumerate().map(|(i, &y)| (t(i), y)).collect()
    };
    // 95% pointwise band, mean plus or minus 1.96 standard deviations.
    let band = |idx: usize| -> Option<Vec<(f64, f64, f64)>> {
        sim.distribution.as_ref().map(|d| {
            d.steps
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let (m, c) = s.pos_vel_marginal();
                    let sd = c[(idx, idx)].max(0.0).sqrt();
                    (t(i), m[idx] - 1.96 * sd, m[idx] + 1.96 * sd)
                })
                .collect()
        })
    };
    let mut pos = Series::line(kind.name(), points(&sim.trace.pos));
    if let Some(b) = band(0) {
        pos = pos.with_band(b);
    }
    let mut vel = Series::line(kind.name(), points(&sim.trace.vel));
    if let Some(b) = band(1) {
        vel = vel.with_band(b);
    }
    vec![
        Panel {
            title: "position".into(),
            x_label: "time (s)".into(),
            y_label: "position (m)".into(),
            series: vec![pos],
            hband: Some((task.target - task.width / 2.0, task.target + task.width / 2.0)),
        },
        Panel {
            title: "velocity".into(),
            x_label: "time (s)".into(),
            y_label: "velocity (m/s)".into(),
            series: vec![vel],
            hband: None,
        },
        Panel {
            title: "acceleration".into(),
            x_label: "time (s)".into(),
            y_label: "acceleration (m/s^2)".into(),
            series: vec![Series::line(kind.name(), points(&sim.trace.acc))],
            hband: None,
        },
    ]
}

// ---------------------------------------------------------------------------
// condition loading shared by fit and compare

struct Condition {
    meta: TrialMeta,
    n_input: usize,
    prepared: std::result::Result<(TrajectoryEnsemble, PipelineReport), String>,
}

fn apply_px_per_m(trials: &mut [RawTrial], ppm: f64) -> Result<()> {
    if !(ppm > 0.0) || !ppm.is_finite() {
        return Err(Error::Cli(format!(
            "--px-per-m must be positive and finite, got {ppm}"
        )));
    }
    for t in trials.iter_mut() {
        for p in &mut t.positions {
            *p /= ppm;
        }
        t.meta.distance_m /= ppm;
        t.meta.width_m /= ppm;
    }
    Ok(())
}

fn load_conditions(flags: &CorpusFlags) -> Result<Vec<Condition>> {
    let path = flags
        .corpus
        .as_ref()
        .ok_or_else(|| Error::Cli("missing --corpus".into()))?;
    let meta_override = flags.meta_override()?;
    let mut trials = load_corpus(path, meta_override.as_ref())?;
    if let Some(ppm) = flags.px_per_m {
        apply_px_per_m(&mut trials, ppm)?;
    }
    let direction = flags.direction.as_deref().map(Direction::parse).transpose()?;
    trials.retain(|t| {
        flags
            .participant
            .as_deref()
            .is_none_or(|p| t.meta.participant == p)
            && direction.is_none_or(|d| t.meta.direction == d)
            && flags
                .distance
                .is_none_or(|d| (t.meta.distance_m - d).abs() <= 1e-9)
            && flags
                .width
                .is_none_or(|w| (t.meta.width_m - w).abs() <= 1e-9)
    });
    if trials.is_empty() {
        return Err(Error::Cli(
            "selection matched no trials (check --participant/--direction/--distance/--width)"
                .into(),
        ));
    }
    let mut conditions: Vec<Condition> = group_by_condition(&trials)
        .into_iter()
        .map(|(meta, group)| Condition {
            meta,
            n_input: group.len(),
            prepared: preprocess_condition(&group, !flags.skip_reaction_strip)
                .map_err(|e| e.to_string()),
        })
        .collect();
    conditions.sort_by(|a, b| {
        (&a.meta.participant, a.meta.direction.name())
            .cmp(&(&b.meta.participant, b.meta.direction.name()))
            .then(a.meta.distance_m.total_cmp(&b.meta.distance_m))
            .then(a.meta.width_m.total_cmp(&b.meta.width_m))
    });
    Ok(conditions)
}

/// Threads for each condition's inner loss evaluation. Single-condition runs
/// get the machine's parallelism; batches parallelize across conditions
/// instead, so their inner loops stay serial unless overridden.
fn auto_inner_width(n_conditions: usize) -> usize {
    if n_conditions > 1 {
        1
    } else {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .min(16)
    }
}

fn run_batch<T, F>(conditions: &[Condition], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&Condition) -> T + Sync,
{
    if conditions.len() > 1 {
        use rayon::prelude::*;
        conditions.par_iter().map(|c| f(c)).collect()
    } else {
        conditions.iter().map(f).collect()
    }
}

// ---------------------------------------------------------------------------
// fit

struct SummaryRow {
    meta: TrialMeta,
    n_input: usize,
    n_kept: usize,
    n_steps: Option<usize>,
    loss: Option<f64>,
    evaluations: Option<usize>,
    generations: Option<usize>,
    converged: Option<bool>,
    wall_s: Option<f64>,
    params: Vec<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    model: &'a str,
    params: BTreeMap<&'a str, f64>,
    loss: f64,
    history: &'a [f64],
    evals: usize,
    seed: u64,
    generations: usize,
    converged: bool,
    condition: &'a TrialMeta,
    n_trials: usize,
    n_steps: usize,
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let kind = required_model(&args.model)?;
    let conditions = load_conditions(&args.corpus)?;
    let out_dir = resolve_out(&args.out)?;
    let cfg = args.fit.to_config(auto_inner_width(conditions.len()));
    let rows = run_batch(&conditions, |cond| fit_condition(kind, cond, &cfg, &out_dir));
    let names = ParameterSpace::for_model(kind, DEFAULT_HORIZON_STEPS).names();
    let summary_path = out_dir.join("summary.csv");
    write_summary_csv(&summary_path, kind, &names, &rows)?;
    println!("{}", summary_path.display());
    Ok(())
}

fn fit_condition(kind: ModelKind, cond: &Condition, cfg: &FitConfig, out_dir: &Path) -> SummaryRow {
    let mut row = SummaryRow {
        meta: cond.meta.clone(),
        n_input: cond.n_input,
        n_kept: 0,
        n_steps: None,
        loss: None,
        evaluations: None,
        generations: None,
        converged: None,
        wall_s: None,
        params: Vec::new(),
        error: None,
    };
    let (ensemble, report) = match &cond.prepared {
        Ok(p) => p,
        Err(msg) => {
            row.error = Some(msg.clone());
            return row;
        }
    };
    row.n_kept = report.n_kept;
    row.n_steps = Some(ensemble.n_steps());
    let started = Instant::now();
    let result = ensemble
        .task_spec()
        .and_then(|task| fit(kind, &task, ensemble, cfg));
    row.wall_s = Some(started.elapsed().as_secs_f64());
    match result {
        Ok(res) => {
            row.loss = Some(res.loss);
            row.evaluations = Some(res.evaluations);
            row.generations = Some(res.generations);
            row.converged = Some(res.converged);
            row.params = res.best.clone();
            let path = out_dir.join(format!("fit-{}__{}.json", kind.name(), condition_slug(&cond.meta)));
            if let Err(e) = write_fit_report(&path, &res, &cond.meta, ensemble) {
                row.error = Some(e.to_string());
            } else {
                eprintln!(
                    "fitted {} {} loss={} in {:.1}s",
                    kind.name(),
                    condition_slug(&cond.meta),
                    res.loss,
                    row.wall_s.unwrap()
                );
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn write_fit_report(
    path: &Path,
    res: &FitResult,
    meta: &TrialMeta,
    ensemble: &TrajectoryEnsemble,
) -> Result<()> {
    let params: BTreeMap<&str, f64> = res
        .names
        .iter()
        .copied()
        .zip(res.best.iter().copied())
        .collect();
    write_json(
        path,
        &FitReport {
            model: res.kind.name(),
            params,
            loss: res.loss,
            history: &res.history,
            evals: res.evaluations,
            seed: res.seed,
            generations: res.generations,
            converged: res.converged,
            condition: meta,
            n_trials: ensemble.n_trials(),
            n_steps: ensemble.n_steps(),
        },
    )
}

fn opt_cell<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn write_summary_csv(
    path: &Path,
    kind: ModelKind,
    names: &[&str],
    rows: &[SummaryRow],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "model",
        "participant",
        "distance_m",
        "width_m",
        "direction",
        "n_input",
        "n_kept",
        "n_steps",
        "loss",
        "evaluations",
        "generations",
        "converged",
        "wall_s",
    ];
    header.extend_from_slice(names);
    header.push("error");
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![
            kind.name().to_string(),
            row.meta.participant.clone(),
            row.meta.distance_m.to_string(),
            row.meta.width_m.to_string(),
            row.meta.direction.name().to_string(),
            row.n_input.to_string(),
            row.n_kept.to_string(),
            opt_cell(&row.n_steps),
            opt_cell(&row.loss),
            opt_cell(&row.evaluations),
            opt_cell(&row.generations),
            opt_cell(&row.converged),
            opt_cell(&row.wall_s),
        ];
        for i in 0..names.len() {
            rec.push(row.params.get(i).map(|v| v.to_string()).unwrap_or_default());
        }
        rec.push(row.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// compare

struct MetricCells {
    n_ref: usize,
    n_used: usize,
    sse_pos: f64,
    max_err_pos: f64,
    sse_vel: f64,
    max_err_vel: f64,
    sse_acc: Option<f64>,
    max_err_acc: Option<f64>,
    mwd: f64,
    mkl: f64,
}

struct CompareRow {
    meta: TrialMeta,
    label: String,
    cells: std::result::Result<MetricCells, String>,
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let kinds: Vec<ModelKind> = args
        .models
        .iter()
        .map(|s| ModelKind::parse(s))
        .collect::<Result<_>>()?;
    if kinds.is_empty() && args.external.is_none() {
        return Err(Error::Cli(
            "nothing to compare: give --models and/or --external".into(),
        ));
    }
    let conditions = load_conditions(&args.corpus)?;
    let external = args
        .external
        .as_deref()
        .map(|p| load_external(p, args.external_px_per_m))
        .transpose()?;
    let out_dir = resolve_out(&args.out)?;
    let cfg = args.fit.to_config(auto_inner_width(conditions.len()));
    let rows: Vec<Vec<CompareRow>> = run_batch(&conditions, |cond| {
        compare_condition(cond, &kinds, external.as_ref(), &cfg)
    });
    let rows: Vec<CompareRow> = rows.into_iter().flatten().collect();
    let path = out_dir.join("comparison.csv");
    write_comparison_csv(&path, &rows)?;
    println!("{}", path.display());
    Ok(())
}

fn load_external(path: &Path, px_per_m: Option<f64>) -> Result<TrajectoryEnsemble> {
    let mut trials = load_corpus(path, None)?;
    if let Some(ppm) = px_per_m {
        apply_px_per_m(&mut trials, ppm)?;
    }
    let groups = group_by_condition(&trials);
    if groups.len() != 1 {
        return Err(Error::Cli(format!(
            "external trajectory set must hold exactly one condition, found {}",
            groups.len()
        )));
    }
    let (_, group) = groups.into_iter().next().unwrap();
    let (ensemble, _) = preprocess_condition(&group, false)?;
    Ok(ensemble)
}

fn compare_condition(
    cond: &Condition,
    kinds: &[ModelKind],
    external: Option<&TrajectoryEnsemble>,
    cfg: &FitConfig,
) -> Vec<CompareRow> {
    let mut rows = Vec::new();
    let (ensemble, _) = match &cond.prepared {
        Ok(p) => p,
        Err(msg) => {
            let label = kinds
                .first()
                .map(|k| k.name().to_string())
                .unwrap_or_else(|| "external".into());
            rows.push(CompareRow {
                meta: cond.meta.clone(),
                label,
                cells: Err(msg.clone()),
            });
            return rows;
        }
    };
    // Smoothed reference acceleration; unavailable for very short series.
    let ref_acc = reference_acceleration(&ensemble.mean_pos, ensemble.h).ok();
    for &kind in kinds {
        let cells = fit_and_score(kind, ensemble, ref_acc.as_deref(), cfg)
            .map_err(|e| e.to_string());
        rows.push(CompareRow {
            meta: cond.meta.clone(),
            label: kind.name().to_string(),
            cells,
        });
        if let Ok(c) = rows.last().unwrap().cells.as_ref() {
            eprintln!(
                "compared {} {}: sse_pos={} mwd={}",
                kind.name(),
                condition_slug(&cond.meta),
                c.sse_pos,
                c.mwd
            );
        }
    }
    if let Some(ext) = external {
        let ext_acc = reference_acceleration(&ext.mean_pos, ext.h).ok();
        let cells = score_series(
            &ext.mean_pos,
            &ext.mean_vel,
            ext_acc.as_deref(),
            &ext.gaussian_series(),
            ensemble,
            ref_acc.as_deref(),
        )
        .map_err(|e| e.to_string());
        rows.push(CompareRow {
            meta: cond.meta.clone(),
            label: "external".into(),
            cells,
        });
    }
    rows
}

fn fit_and_score(
    kind: ModelKind,
    ensemble: &TrajectoryEnsemble,
    ref_acc: Option<&[f64]>,
    cfg: &FitConfig,
) -> Result<MetricCells> {
    let task = ensemble.task_spec()?;
    let res = fit(kind, &task, ensemble, cfg)?;
    let gaussians = match &res.distribution {
        Some(d) => pos_vel_series(d),
        // Deterministic families enter the distribution metrics as point
        // masses: zero covariance, all spread contributed by the data.
        None => res
            .trace
            .pos
            .iter()
            .zip(&res.trace.vel)
            .map(|(&p, &v)| Gaussian2::deterministic(nalgebra::Vector2::new(p, v)))
            .collect(),
    };
    score_series(
        &res.trace.pos,
        &res.trace.vel,
        Some(&res.trace.acc),
        &gaussians,
        ensemble,
        ref_acc,
    )
}

fn score_series(
    pos: &[f64],
    vel: &[f64],
    acc: Option<&[f64]>,
    gaussians: &[Gaussian2],
    ensemble: &TrajectoryEnsemble,
    ref_acc: Option<&[f64]>,
) -> Result<MetricCells> {
    let n_ref = ensemble.mean_pos.len();
    let n = pos.len().min(n_ref);
    let ref_g = ensemble.gaussian_series();
    let acc_pair = match (acc, ref_acc) {
        (Some(a), Some(r)) => Some((
            sse(&a[..n.min(a.len())], &r[..n.min(a.len())])?,
            max_error(&a[..n.min(a.len())], &r[..n.min(a.len())])?,
        )),
        _ => None,
    };
    Ok(MetricCells {
        n_ref,
        n_used: n,
        sse_pos: sse(&pos[..n], &ensemble.mean_pos[..n])?,
        max_err_pos: max_error(&pos[..n], &ensemble.mean_pos[..n])?,
        sse_vel: sse(&vel[..n], &ensemble.mean_vel[..n])?,
        max_err_vel: max_error(&vel[..n], &ensemble.mean_vel[..n])?,
        sse_acc: acc_pair.map(|p| p.0),
        max_err_acc: acc_pair.map(|p| p.1),
        mwd: mwd(&gaussians[..n], &ref_g[..n])?,
        mkl: mkl(&gaussians[..n], &ref_g[..n])?,
    })
}

#[derive(Default)]
struct Aggregate {
    sse_pos: f64,
    max_err_pos: f64,
    sse_vel: f64,
    max_err_vel: f64,
    sse_acc: f64,
    max_err_acc: f64,
    has_acc: bool,
    mwd_sum: f64,
    mkl_sum: f64,
    n: usize,
}

fn write_comparison_csv(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "participant",
        "distance_m",
        "width_m",
        "direction",
        "model",
        "n_ref",
        "n_used",
        "sse_pos",
        "max_err_pos",
        "sse_vel",
        "max_err_vel",
        "sse_acc",
        "max_err_acc",
        "mwd",
        "mkl",
        "error",
    ])?;
    let mut aggregates: Vec<(String, Aggregate)> = Vec::new();
    for row in rows {
        match &row.cells {
            Ok(c) => {
                w.write_record([
                    row.meta.participant.clone(),
                    row.meta.distance_m.to_string(),
                    row.meta.width_m.to_string(),
                    row.meta.direction.name().to_string(),
                    row.label.clone(),
                    c.n_ref.to_string(),
                    c.n_used.to_string(),
                    c.sse_pos.to_string(),
                    c.max_err_pos.to_string(),
                    c.sse_vel.to_string(),
                    c.max_err_vel.to_string(),
                    opt_cell(&c.sse_acc),
                    opt_cell(&c.max_err_acc),
                    c.mwd.to_string(),
                    c.mkl.to_string(),
                    String::new(),
                ])?;
                let agg = match aggregates.iter_mut().find(|(l, _)| *l == row.label) {
                    Some((_, a)) => a,
                    None => {
                        aggregates.push((row.label.clone(), Aggregate::default()));
                        &mut aggregates.last_mut().unwrap().1
                    }
                };
                // Sum squared errors, keep the worst pointwise error, and
                // average the distribution metrics across conditions.
                agg.sse_pos += c.sse_pos;
                agg.max_err_pos = agg.max_err_pos.max(c.max_err_pos);
                agg.sse_vel += c.sse_vel;
                agg.max_err_vel = agg.max_err_vel.max(c.max_err_vel);
                if let (Some(sa), Some(ma)) = (c.sse_acc, c.max_err_acc) {
                    agg.sse_acc += sa;
                    agg.max_err_acc = agg.max_err_acc.max(ma);
                    agg.has_acc = true;
                }
                agg.mwd_sum += c.mwd;
                agg.mkl_sum += c.mkl;
                agg.n += 1;
            }
            Err(msg) => {
                w.write_record([
                    row.meta.participant.clone(),
                    row.meta.distance_m.to_string(),
                    row.meta.width_m.to_string(),
                    row.meta.direction.name().to_string(),
                    row.label.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    msg.clone(),
                ])?;
            }
        }
    }
    for (label, a) in &aggregates {
        w.write_record([
            "ALL".to_string(),
            String::new(),
            String::new(),
            String::new(),
            label.clone(),
            String::new(),
            String::new(),
            a.sse_pos.to_string(),
            a.max_err_pos.to_string(),
            a.sse_vel.to_string(),
            a.max_err_vel.to_string(),
            if a.has_acc { a.sse_acc.to_string() } else { String::new() },
            if a.has_acc { a.max_err_acc.to_string() } else { String::new() },
            (a.mwd_sum / a.n as f64).to_string(),
            (a.mkl_sum / a.n as f64).to_string(),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

fn sweepable(kind: ModelKind) -> &'static [&'static str] {
    match kind {
        ModelKind::TwoOlEq => &["k", "d", "zeta"],
        ModelKind::MinJerk => &["nmj"],
        ModelKind::Lqr => &["omega-r", "omega-v", "omega-f"],
        ModelKind::Lqg => &["omega-r", "omega-v", "omega-f", "sigma-u", "sigma-s"],
        ModelKind::Elqg => &[
            "omega-r", "omega-v", "omega-f", "sigma-u", "sigma-v", "sigma-f", "sigma-e", "gamma",
            "ns",
        ],
    }
}

fn set_param(flags: &mut ParamFlags, name: &str, value: f64) {
    match name {
        "k" => flags.k = Some(value),
        "d" => {
            flags.d = Some(value);
            flags.zeta = None;
        }
        "zeta" => {
            flags.zeta = Some(value);
            flags.d = None;
        }
        "nmj" => flags.nmj = Some(value),
        "omega-r" => flags.omega_r = Some(value),
        "omega-v" => flags.omega_v = Some(value),
        "omega-f" => flags.omega_f = Some(value),
        "sigma-u" => flags.sigma_u = Some(value),
        "sigma-s" => flags.sigma_s = Some(value),
        "sigma-v" => flags.sigma_v = Some(value),
        "sigma-f" => flags.sigma_f = Some(value),
        "sigma-e" => flags.sigma_e = Some(value),
        "gamma" => flags.gamma = Some(value),
        "ns" => flags.ns = Some(value),
        _ => unreachable!("validated against sweepable()"),
    }
}

fn build_grid(args: &SweepArgs) -> Result<Vec<f64>> {
    if !args.grid.is_empty() {
        return Ok(args.grid.clone());
    }
    match (args.from, args.to, args.steps) {
        (Some(from), Some(to), Some(steps)) if steps >= 1 => {
            if steps == 1 {
                return Ok(vec![from]);
            }
            Ok((0..steps)
                .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
                .collect())
        }
        _ => Err(Error::Cli(
            "empty grid: give --grid v1,v2,... or --from/--to/--steps".into(),
        )),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let kind = required_model(&args.model)?;
    let param = args
        .param
        .as_deref()
        .ok_or_else(|| Error::Cli("missing --param".into()))?
        .replace('_', "-");
    if !sweepable(kind).contains(&param.as_str()) {
        return Err(Error::Cli(format!(
            "model {} cannot sweep '{param}'; choose one of {}",
            kind.name(),
            sweepable(kind).join(", ")
        )));
    }
    let grid = build_grid(&args)?;
    let task = args.task.build()?;
    let opts = solve_opts(args.every_step_costs);
    let out_dir = resolve_out(&args.out)?;
    let movement_sign = (task.target - task.start).signum();

    let mut w = csv::Writer::from_path(out_dir.join("sweep.csv"))?;
    w.write_record([
        param.as_str(),
        "peak_vel_mps",
        "time_to_target_s",
        "terminal_std_m",
        "max_overshoot_m",
        "final_pos_m",
    ])?;
    let mut pos_series = Vec::new();
    let mut vel_series = Vec::new();
    for &value in &grid {
        let mut flags = args.params.clone();
        set_param(&mut flags, &param, value);
        let params = build_params(kind, &flags)?;
        let sim = simulate_model(&params, &task, &opts)?;
        let trace = &sim.trace;
        let terminal_std = sim
            .distribution
            .as_ref()
            .and_then(|d| d.steps.last())
            .map(|s| s.pos_vel_marginal().1[(0, 0)].max(0.0).sqrt())
            .unwrap_or(0.0);
        let overshoot = trace
            .pos
            .iter()
            .fold(0.0_f64, |m, &p| m.max(movement_sign * (p - task.target)));
        w.write_record([
            value.to_string(),
            trace.peak_speed().to_string(),
            opt_cell(&trace.time_to_target(task.target, task.width)),
            terminal_std.to_string(),
            overshoot.to_string(),
            trace.pos.last().unwrap().to_string(),
        ])?;
        if args.svg {
            let label = format!("{param}={value}");
            let points = |ys: &[f64]| -> Vec<(f64, f64)> {
                ys.iter()
                    .enumerate()
                    .map(|(i, &y)| (i as f64 * trace.h, y))
                    .collect()
            };
            pos_series.push(Series::line(label.clone(), points(&trace.pos)));
            vel_series.push(Series::line(label, points(&trace.vel)));
        }
        eprintln!("swept {param}={value}");
    }
    w.flush()?;
    println!("{}", out_dir.join("sweep.csv").display());

    if args.svg {
        let panels = vec![
            Panel {
                title: format!("position over {param}"),
                x_label: "time (s)".into(),
                y_label: "position (m)".into(),
                series: pos_series,
                hband: Some((task.target - task.width / 2.0, task.target + task.width / 2.0)),
            },
            Panel {
                title: format!("velocity over {param}"),
                x_label: "time (s)".into(),
                y_label: "velocity (m/s)".into(),
                series: vel_series,
                hband: None,
            },
        ];
        let svg_path = out_dir.join("sweep.svg");
        fs::write(&svg_path, crate::svg::render(&panels))?;
        println!("{}", svg_path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).expect("arguments parse")
    }

    #[test]
    fn flags_win_over_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("cfg.json");
        fs::write(
            &cfg,
            r#"{"model":"2ol-eq","k":40,"zeta":1,"target":0.212,"n":100,"svg":true}"#,
        )
        .unwrap();
        let cli = parse(&[
            "pointctl",
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--k",
            "50",
        ]);
        let Command::Simulate(args) = cli.command else {
            panic!("expected simulate");
        };
        let args = args.resolved().unwrap();
        assert_eq!(args.model.as_deref(), Some("2ol-eq"));
        assert_eq!(args.params.k, Some(50.0));
        assert_eq!(args.params.zeta, Some(1.0));
        assert_eq!(args.task.target, Some(0.212));
        assert_eq!(args.task.n, Some(100));
        assert!(args.svg);
    }

    #[test]
    fn missing_params_name_the_flag() {
        let err = build_params(ModelKind::Lqg, &ParamFlags::default()).unwrap_err();
        assert!(err.to_string().contains("--omega-r"), "{err}");
        let mut flags = ParamFlags {
            omega_r: Some(1e-3),
            sigma_u: Some(0.5),
            ..ParamFlags::default()
        };
        let err = build_params(ModelKind::Lqg, &flags).unwrap_err();
        assert!(err.to_string().contains("--sigma-s"), "{err}");
        flags.sigma_s = Some(0.5);
        build_params(ModelKind::Lqg, &flags).unwrap();
    }

    #[test]
    fn two_ol_takes_exactly_one_damping_flag() {
        let base = ParamFlags {
            k: Some(40.0),
            ..ParamFlags::default()
        };
        assert!(build_params(ModelKind::TwoOlEq, &base).is_err());
        let both = ParamFlags {
            d: Some(12.0),
            zeta: Some(1.0),
            ..base.clone()
        };
        let err = build_params(ModelKind::TwoOlEq, &both).unwrap_err();
        assert!(err.to_string().contains("exactly one"), "{err}");
        let with_zeta = ParamFlags {
            zeta: Some(1.0),
            ..base
        };
        let ModelParams::TwoOlEq(p) = build_params(ModelKind::TwoOlEq, &with_zeta).unwrap() else {
            panic!("wrong family");
        };
        assert!((p.damping_ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn task_defaults_apply() {
        let flags = TaskFlags {
            target: Some(0.212),
            ..TaskFlags::default()
        };
        let task = flags.build().unwrap();
        assert_eq!(task.start, 0.0);
        assert_eq!(task.width, DEFAULT_TARGET_WIDTH_M);
        assert_eq!(task.n_steps, DEFAULT_HORIZON_STEPS);
        assert_eq!(task.h, crate::lindyn::DEFAULT_STEP_S);
        assert!(TaskFlags::default().build().is_err());
    }

    #[test]
    fn grid_construction() {
        let mut args = parse_sweep(&["--grid", "0.5,1,2"]);
        assert_eq!(build_grid(&args).unwrap(), vec![0.5, 1.0, 2.0]);
        args = parse_sweep(&["--from", "0", "--to", "1", "--steps", "5"]);
        assert_eq!(build_grid(&args).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        args = parse_sweep(&["--from", "3", "--to", "9", "--steps", "1"]);
        assert_eq!(build_grid(&args).unwrap(), vec![3.0]);
        args = parse_sweep(&[]);
        assert!(build_grid(&args).is_err());
    }

    fn parse_sweep(extra: &[&str]) -> SweepArgs {
        let mut argv = vec!["pointctl", "sweep", "--model", "2ol-eq", "--param", "zeta"];
        argv.extend_from_slice(extra);
        let Command::Sweep(args) = parse(&argv).command else {
            panic!("expected sweep");
        };
        args
    }

    #[test]
    fn sweep_rejects_foreign_parameter() {
        let args = parse_sweep(&["--grid", "1"]);
        let mut args = args;
        args.param = Some("sigma-u".into());
        args.task.target = Some(0.1);
        let err = cmd_sweep(args).unwrap_err();
        assert!(err.to_string().contains("cannot sweep"), "{err}");
    }

    #[test]
    fn sweeping_damping_clears_the_paired_flag() {
        let mut flags = ParamFlags {
            k: Some(40.0),
            zeta: Some(1.0),
            ..ParamFlags::default()
        };
        set_param(&mut flags, "d", 10.0);
        assert_eq!(flags.d, Some(10.0));
        assert_eq!(flags.zeta, None);
        set_param(&mut flags, "zeta", 0.5);
        assert_eq!(flags.d, None);
    }

    #[test]
    fn condition_slug_matches_corpus_convention() {
        let meta = TrialMeta {
            participant: "p1".into(),
            distance_m: 0.212,
            width_m: 0.0141,
            direction: Direction::Left,
        };
        assert_eq!(condition_slug(&meta), "p1__d0.212__w0.0141__left");
        let parsed = crate::data::parse_corpus_filename("p1__d0.212__w0.0141__left.csv").unwrap();
        assert_eq!(parsed, meta);
    }

    #[test]
    fn meta_override_is_all_or_nothing() {
        let mut flags = CorpusFlags::default();
        assert!(flags.meta_override().unwrap().is_none());
        flags.meta_participant = Some("p9".into());
        assert!(flags.meta_override().is_err());
        flags.meta_distance = Some(0.1);
        flags.meta_width = Some(0.01);
        flags.meta_direction = Some("right".into());
        let meta = flags.meta_override().unwrap().unwrap();
        assert_eq!(meta.participant, "p9");
        assert_eq!(meta.direction, Direction::Right);
    }
}
