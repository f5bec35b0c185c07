//! The `flopscale` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use flopscale_core::arch::{count_params, state_size_elements, validate_config, ArchConfig, ArchKind, SeqMixKind};
use flopscale_core::fit::{
    fit_isoflop_laws, fit_isoflop_profile, fit_loss_surface, fit_overtraining, fit_power_law, pareto_frontier,
    LossSurfaceFit, PowerLawFit, RunRecord, SurfaceFitOptions, DEFAULT_BUDGET_TOLERANCE, DEFAULT_RATIO_TOLERANCE,
};
use flopscale_core::flops::{flops_model_forward, CostFactors, Workload, DEFAULT_BACKWARD_MULTIPLIER};
use flopscale_core::memops::{bytes_model, ByteWidths};
use flopscale_core::planner::{compute_optimal_alloc, plan_token_param_grid, realize_plan, ConfigTable, DEFAULT_TOKEN_PARAM_RATIOS};
use flopscale_core::runtime::{
    find_accelerator, fit_runtime, hardware_utilization, predict_step_time, predict_ttft, roofline, step_time_cost, ttft_cost,
    Metric, RuntimeError, RuntimeFit,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifact::{ArtifactFile, ArtifactKind, Provenance};
use crate::format::{both, eng, exact, loss, table};
use crate::io::{load_latency, load_points, parse_runs, write_runs_csv, ComputeLookup, LoadOptions, RunFormat};
use crate::tables::{accelerator_registry, builtin_config_table, builtin_preset, kind_name, load_accelerators, load_config_table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "flopscale", version, about = "FLOP, memory and scaling-law calculator for Transformer and xLSTM models")]
pub struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Display losses in bits instead of nats.
    #[arg(long, global = true)]
    pub bits: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parameter, FLOP or memory-operation counts.
    #[command(subcommand)]
    Count(CountCommand),
    /// Memory state or KV-cache size.
    CacheSize(CacheSizeArgs),
    /// Fit scaling laws or runtime models.
    #[command(subcommand)]
    Fit(FitCommand),
    /// Compute-optimal allocation for a budget, or a Token/Param grid.
    Plan(PlanArgs),
    /// Predict latency or loss from a fitted artifact.
    #[command(subcommand)]
    Predict(PredictCommand),
    /// Roofline diagnosis of one operation.
    Roofline(RooflineArgs),
    /// Runs not dominated in compute and loss.
    Pareto(ParetoArgs),
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct ConfigSource {
    /// Architecture configuration JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Name of a built-in table entry, e.g. xlstm-406m.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum CountCommand {
    Params {
        #[command(flatten)]
        source: ConfigSource,
    },
    Flops {
        #[command(flatten)]
        source: ConfigSource,
        #[command(flatten)]
        workload: WorkloadArgs,
        /// CostFactors JSON file.
        #[arg(long)]
        factors: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BACKWARD_MULTIPLIER)]
        backward_multiplier: f64,
    },
    Memops {
        #[command(flatten)]
        source: ConfigSource,
        #[command(flatten)]
        workload: WorkloadArgs,
        /// ByteWidths JSON file.
        #[arg(long)]
        widths: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Forward,
    Train,
    Prefill,
    GenStep,
    GenSeq,
}

#[derive(Args, Debug, Clone)]
pub struct WorkloadArgs {
    #[arg(long, value_enum, default_value = "forward")]
    pub mode: ModeArg,
    /// Sequence length (forward, train).
    #[arg(long = "T")]
    pub t: Option<u64>,
    #[arg(long = "B", default_value_t = 1)]
    pub b: u64,
    /// Prompt length (prefill and generation).
    #[arg(long = "Tp")]
    pub tp: Option<u64>,
    /// Generated tokens; for gen-step, the index of the step.
    #[arg(long = "Tg")]
    pub tg: Option<u64>,
}

impl WorkloadArgs {
    fn workload(&self) -> Result<Workload, CliError> {
        let need = |v: Option<u64>, flag: &str| v.ok_or_else(|| CliError::Usage(format!("--mode {:?} needs {flag}", self.mode)));
        Ok(match self.mode {
            ModeArg::Forward => Workload::forward(self.b, need(self.t, "--T")?),
            ModeArg::Train => Workload::train(self.b, need(self.t, "--T")?),
            ModeArg::Prefill => Workload::prefill(self.b, need(self.tp.or(self.t), "--Tp")?),
            ModeArg::GenStep => Workload::gen_step(self.b, need(self.tp, "--Tp")?, need(self.tg, "--Tg")?),
            ModeArg::GenSeq => Workload::gen_seq(self.b, need(self.tp, "--Tp")?, need(self.tg, "--Tg")?),
        })
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqMixArg {
    Mha,
    Gqa,
    Mla,
    Mlstm,
}

#[derive(Args, Debug)]
pub struct CacheSizeArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    #[arg(long, value_enum)]
    pub kind: SeqMixArg,
    #[arg(long = "T")]
    pub t: u64,
    /// Bytes per stored element.
    #[arg(long, default_value_t = 2.0)]
    pub bytes_per_element: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindArg {
    Xlstm,
    Transformer,
}

impl From<KindArg> for ArchKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Xlstm => ArchKind::Xlstm,
            KindArg::Transformer => ArchKind::Transformer,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct RunInput {
    /// Run records (.csv, or .jsonl for JSON lines).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Abort on the first invalid row.
    #[arg(long)]
    pub strict: bool,
    /// Configuration table used to fill in missing C (defaults to the built-in tables).
    #[arg(long)]
    pub configs: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum FitCommand {
    /// Parametric loss surface E + (A N^-alpha + B D^-beta)^gamma.
    Surface {
        #[command(flatten)]
        runs: RunInput,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
        /// Fix gamma = 1.
        #[arg(long)]
        freeze_gamma: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parabolas per compute budget and power laws through their optima.
    Isoflop {
        #[command(flatten)]
        runs: RunInput,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, default_value_t = DEFAULT_BUDGET_TOLERANCE)]
        budget_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Power law through a two-column (x, y) CSV.
    Powerlaw {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One parabola through a two-column (x, loss) CSV.
    Parabola {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loss against compute per token-to-parameter ratio.
    Overtrain {
        #[command(flatten)]
        runs: RunInput,
        #[arg(long, default_value_t = DEFAULT_RATIO_TOLERANCE)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Effective rate and overhead from latency measurements.
    Runtime {
        /// Latency CSV `config_id,metric,B,T_p,seconds`.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        metric: MetricArg,
        /// Configuration table that config_id refers to (defaults to the built-in tables).
        #[arg(long)]
        configs: Option<PathBuf>,
        /// Add a per-sequence constant.
        #[arg(long)]
        batch_term: bool,
        /// Report the fitted rate against this accelerator's peak.
        #[arg(long)]
        accel: Option<String>,
        #[arg(long)]
        accel_file: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricArg {
    Ttft,
    StepTime,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Ttft => Metric::Ttft,
            MetricArg::StepTime => Metric::StepTime,
        }
    }
}

#[derive(Args, Debug)]
#[command(args_conflicts_with_subcommands = true)]
pub struct PlanArgs {
    #[command(subcommand)]
    pub grid: Option<PlanGridCommand>,
    /// Compute budget H in FLOPs.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Artifact from `fit isoflop`.
    #[arg(long)]
    pub fits: Option<PathBuf>,
    /// Report realized compute on the nearest configuration of the table.
    #[arg(long)]
    pub realize: bool,
    #[arg(long)]
    pub configs: Option<PathBuf>,
    #[arg(long, default_value_t = 8192)]
    pub context: u64,
    #[arg(long, default_value_t = DEFAULT_BACKWARD_MULTIPLIER)]
    pub backward_multiplier: f64,
}

#[derive(Subcommand, Debug)]
pub enum PlanGridCommand {
    /// Every (N, M) pair with D = M N and its training compute.
    Grid {
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n: Vec<f64>,
        #[arg(long = "M", value_delimiter = ',')]
        m: Option<Vec<f64>>,
        /// Only resolve against configurations of this family.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long, default_value_t = 8192)]
        context: u64,
        #[arg(long)]
        configs: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BACKWARD_MULTIPLIER)]
        backward_multiplier: f64,
    },
}

#[derive(Subcommand, Debug)]
pub enum PredictCommand {
    Ttft(PredictLatencyArgs),
    StepTime(PredictLatencyArgs),
    /// Loss from a fitted surface.
    Loss {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long = "N")]
        n: f64,
        #[arg(long = "D")]
        d: f64,
    },
}

#[derive(Args, Debug)]
pub struct PredictLatencyArgs {
    /// Artifact from `fit runtime`.
    #[arg(long)]
    pub fit: PathBuf,
    #[command(flatten)]
    pub source: ConfigSource,
    #[arg(long = "B", default_value_t = 1)]
    pub b: u64,
    #[arg(long = "Tp")]
    pub tp: u64,
}

#[derive(Args, Debug)]
pub struct RooflineArgs {
    #[arg(long)]
    pub accel: String,
    #[arg(long)]
    pub flops: f64,
    #[arg(long)]
    pub bytes: f64,
    /// Extra accelerator definitions (JSON list).
    #[arg(long)]
    pub accel_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ParetoArgs {
    #[command(flatten)]
    pub runs: RunInput,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Write the frontier as run CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

/// Payload of `fit runtime` artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeFitPayload {
    pub metric: Metric,
    pub fit: RuntimeFit,
    pub accelerator: Option<String>,
    pub utilization: Option<flopscale_core::runtime::Utilization>,
}

#[derive(Deserialize)]
struct PlanFits {
    kind: Option<ArchKind>,
    n_opt: PowerLawFit,
    d_opt: PowerLawFit,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let mut ctx = Ctx { json: cli.json, bits: cli.bits, out, err };
    match ctx.dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(ctx.err, "error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx<'a> {
    json: bool,
    bits: bool,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_config(source: &ConfigSource) -> Result<(ArchConfig, Provenance), CliError> {
    let (config, prov) = match (&source.config, &source.preset) {
        (Some(path), _) => {
            let bytes = read_bytes(path)?;
            let config: ArchConfig =
                serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            (config, Provenance::default().with_input(&path.display().to_string(), &bytes))
        }
        (None, Some(name)) => {
            let config = builtin_preset(name).ok_or_else(|| CliError::Data(format!("unknown preset {name:?}")))?;
            (config, Provenance::default().with_input(&format!("preset:{name}"), name.as_bytes()))
        }
        (None, None) => return Err(CliError::Usage("one of --config or --preset is required".into())),
    };
    let violations = validate_config(&config);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Data(format!("invalid configuration: {}", list.join("; "))));
    }
    Ok((config, prov))
}

fn config_table(path: &Option<PathBuf>) -> Result<ConfigTable, CliError> {
    match path {
        Some(p) => load_config_table(p).map_err(CliError::data),
        None => Ok(builtin_config_table()),
    }
}

impl Ctx<'_> {
    fn dispatch(&mut self, command: Command) -> Result<(), CliError> {
        match command {
            Command::Count(c) => self.count(c),
            Command::CacheSize(a) => self.cache_size(a),
            Command::Fit(f) => self.fit(f),
            Command::Plan(p) => self.plan(p),
            Command::Predict(p) => self.predict(p),
            Command::Roofline(r) => self.roofline(r),
            Command::Pareto(p) => self.pareto(p),
        }
    }

    fn print(&mut self, text: &str) -> Result<(), CliError> {
        self.out.write_all(text.as_bytes()).map_err(CliError::data)
    }

    fn warn(&mut self, text: &str) {
        let _ = writeln!(self.err, "warning: {text}");
    }

    /// Writes the artifact to `out_path` when given and prints it (JSON) or
    /// `human` otherwise.
    fn emit(&mut self, artifact: &ArtifactFile, out_path: Option<&Path>, human: String) -> Result<(), CliError> {
        if let Some(p) = out_path {
            artifact.write(p).map_err(CliError::data)?;
        }
        if self.json {
            self.print(&artifact.to_json())
        } else {
            self.print(&human)
        }
    }

    fn emit_value(&mut self, value: &serde_json::Value, human: String) -> Result<(), CliError> {
        if self.json {
            let mut s = serde_json::to_string_pretty(value).map_err(CliError::data)?;
            s.push('\n');
            self.print(&s)
        } else {
            self.print(&human)
        }
    }

    fn loss(&self, v: f64) -> String {
        loss(v, self.bits)
    }

    fn load_runs(&mut self, input: &RunInput) -> Result<(Vec<RunRecord>, Provenance), CliError> {
        let bytes = read_bytes(&input.input)?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Data(format!("{}: not UTF-8", input.input.display())))?;
        let table = config_table(&input.configs)?;
        let options = LoadOptions { strict: input.strict, lookup: Some(ComputeLookup::new(&table)) };
        let report = parse_runs(&text, RunFormat::from_path(&input.input), &options)
            .map_err(|e| CliError::Data(format!("{}: {e}", input.input.display())))?;
        for e in &report.errors {
            self.warn(&format!("{}: line {}: {}", input.input.display(), e.line, e.message));
        }
        let prov = Provenance::default().with_input(&input.input.display().to_string(), &bytes);
        Ok((report.records, prov))
    }

    fn count(&mut self, command: CountCommand) -> Result<(), CliError> {
        match command {
            CountCommand::Params { source } => {
                let (config, prov) = load_config(&source)?;
                let p = count_params(&config).map_err(CliError::data)?;
                let payload = json!({ "count": "params", "config": config, "params": p });
                let layers = p.n_layer;
                let human = table(&[
                    ("embeddings".into(), both(p.embeddings as f64)),
                    ("seq_mix per layer".into(), both(p.seq_mix_per_layer as f64)),
                    ("feedforward per layer".into(), both(p.feedforward_per_layer as f64)),
                    ("layers".into(), layers.to_string()),
                    ("output norm".into(), both(p.output_norm as f64)),
                    ("unembedding".into(), both(p.unembedding as f64)),
                    ("total".into(), format!("{} ({}, {}M)", p.total, eng(p.total as f64), p.millions_rounded())),
                ]);
                let art = ArtifactFile::new(ArtifactKind::Counts, &payload, prov).map_err(CliError::data)?;
                self.emit(&art, None, human)
            }
            CountCommand::Flops { source, workload, factors, backward_multiplier } => {
                let (config, mut prov) = load_config(&source)?;
                let w = workload.workload()?;
                let f: CostFactors = match &factors {
                    Some(p) => {
                        prov = prov.with_file(p).map_err(CliError::data)?;
                        read_json(p)?
                    }
                    None => CostFactors::default(),
                };
                let b = flops_model_forward(&config, &w, &f).map_err(CliError::data)?;
                let training = (workload.mode == ModeArg::Train).then(|| b.total * backward_multiplier);
                let payload = json!({
                    "count": "flops",
                    "config": config,
                    "workload": w,
                    "factors": f,
                    "backward_multiplier": backward_multiplier,
                    "breakdown": b,
                    "training_flops": training,
                });
                let mut rows: Vec<(String, String)> = [
                    ("embeddings", b.embeddings),
                    ("norm + skip", b.norm_and_skip),
                    ("qkv", b.qkv),
                    ("gates", b.gates),
                    ("sequence mix", b.seq_mix),
                    ("output gate", b.output_gate),
                    ("head norm", b.head_norm),
                    ("output projection", b.output_projection),
                    ("mlp", b.mlp),
                    ("activations", b.activations),
                    ("final norm", b.final_norm),
                    ("unembedding", b.unembedding),
                    ("total", b.total),
                ]
                .into_iter()
                .map(|(k, v)| (k.to_string(), both(v)))
                .collect();
                if let Some(t) = training {
                    rows.push((format!("training ({backward_multiplier}x)"), both(t)));
                }
                let art = ArtifactFile::new(ArtifactKind::Counts, &payload, prov).map_err(CliError::data)?;
                self.emit(&art, None, table(&rows))
            }
            CountCommand::Memops { source, workload, widths } => {
                let (config, mut prov) = load_config(&source)?;
                let w = workload.workload()?;
                let bw: ByteWidths = match &widths {
                    Some(p) => {
                        prov = prov.with_file(p).map_err(CliError::data)?;
                        read_json(p)?
                    }
                    None => ByteWidths::default(),
                };
                let b = bytes_model(&config, &w, &bw).map_err(CliError::data)?;
                let payload = json!({
                    "count": "memops",
                    "config": config,
                    "workload": w,
                    "widths": bw,
                    "embedding_as_gather": true,
                    "breakdown": b,
                    "total_bytes": b.total_bytes(),
                });
                let rows: Vec<(String, String)> = [
                    ("embeddings (gather)", b.embeddings),
                    ("pre-norms", b.pre_norms),
                    ("qkv", b.qkv),
                    ("gates", b.gates),
                    ("sequence mix", b.seq_mix),
                    ("output gate", b.output_gate),
                    ("head norm", b.head_norm),
                    ("output projection", b.output_projection),
                    ("mlp", b.mlp),
                    ("final norm", b.final_norm),
                    ("unembedding", b.unembedding),
                    ("total", b.total),
                ]
                .into_iter()
                .map(|(k, t)| (k.to_string(), format!("{}  (activations {}, weights {})", both(t.total()), eng(t.activations), eng(t.weights))))
                .chain([
                    ("sequence mix load".to_string(), both(b.seq_mix_load_store.load)),
                    ("sequence mix store".to_string(), both(b.seq_mix_load_store.store)),
                ])
                .collect();
                let art = ArtifactFile::new(ArtifactKind::Counts, &payload, prov).map_err(CliError::data)?;
                self.emit(&art, None, table(&rows))
            }
        }
    }

    fn cache_size(&mut self, a: CacheSizeArgs) -> Result<(), CliError> {
        let (config, prov) = load_config(&a.source)?;
        let kind = match a.kind {
            SeqMixArg::Mha => SeqMixKind::Mha,
            SeqMixArg::Gqa => SeqMixKind::Gqa,
            SeqMixArg::Mla => SeqMixKind::Mla,
            SeqMixArg::Mlstm => SeqMixKind::Mlstm,
        };
        if !(a.bytes_per_element.is_finite() && a.bytes_per_element >= 0.0) {
            return Err(CliError::Data("--bytes-per-element must be >= 0".into()));
        }
        let per_layer = state_size_elements(kind, &config, a.t).map_err(CliError::data)?;
        let elements = per_layer * config.n_layer as f64;
        let bytes = elements * a.bytes_per_element;
        let payload = json!({
            "count": "cache_size",
            "kind": kind,
            "T": a.t,
            "elements_per_layer": per_layer,
            "elements": elements,
            "bytes_per_element": a.bytes_per_element,
            "bytes": bytes,
        });
        let human = table(&[
            ("elements per layer".into(), both(per_layer)),
            (format!("elements ({} layers)", config.n_layer), both(elements)),
            ("bytes".into(), both(bytes)),
        ]);
        let art = ArtifactFile::new(ArtifactKind::Counts, &payload, prov).map_err(CliError::data)?;
        self.emit(&art, None, human)
    }

    fn fit(&mut self, command: FitCommand) -> Result<(), CliError> {
        match command {
            FitCommand::Surface { runs, kind, delta, freeze_gamma, out } => {
                let (records, prov) = self.load_runs(&runs)?;
                let records = select_kind(records, kind.map(Into::into))?;
                let options = SurfaceFitOptions { huber_delta: delta, freeze_gamma, ..Default::default() };
                let fit = fit_loss_surface(&records, &options).map_err(CliError::data)?;
                let human = table(&[
                    ("logA".into(), format!("{:.6}", fit.log_a)),
                    ("logB".into(), format!("{:.6}", fit.log_b)),
                    ("logE".into(), format!("{:.6}", fit.log_e)),
                    ("alpha".into(), format!("{:.6}", fit.alpha)),
                    ("beta".into(), format!("{:.6}", fit.beta)),
                    ("gamma".into(), format!("{:.6}", fit.gamma)),
                    ("E".into(), self.loss(fit.log_e.exp())),
                    ("mse (log residuals)".into(), eng(fit.fit_mse)),
                    ("converged starts".into(), format!("{}/{}", fit.converged_starts, fit.total_starts)),
                ]);
                let art = ArtifactFile::new(ArtifactKind::LossSurface, &fit, prov).map_err(CliError::data)?;
                self.emit(&art, out.as_deref(), human)
            }
            FitCommand::Isoflop { runs, kind, budget_tol, out } => {
                let (records, prov) = self.load_runs(&runs)?;
                let laws = fit_isoflop_laws(&records, kind.into(), budget_tol).map_err(CliError::data)?;
                for (h, n) in &laws.skipped {
                    self.warn(&format!("budget {} has {n} run(s); skipped", eng(*h)));
                }
                let mut rows = vec![];
                for p in &laws.profiles {
                    let opt = |f: &flopscale_core::ParabolaFit| match (f.interior, f.optimum_x) {
                        (true, Some(x)) => eng(x),
                        _ => "none".into(),
                    };
                    let l = p.over_n.optimum_loss.map_or("-".into(), |v| self.loss(v));
                    rows.push((format!("H = {}", eng(p.budget)), format!("N* {}  D* {}  loss {}  ({} runs)", opt(&p.over_n), opt(&p.over_d), l, p.n_runs)));
                }
                rows.push(("N*(H)".into(), format!("{} H^{:.6}", eng(laws.n_opt.coefficient), laws.n_opt.exponent)));
                rows.push(("D*(H)".into(), format!("{} H^{:.6}", eng(laws.d_opt.coefficient), laws.d_opt.exponent)));
                let art = ArtifactFile::new(ArtifactKind::PowerLaw, &laws, prov).map_err(CliError::data)?;
                self.emit(&art, out.as_deref(), table(&rows))
            }
            FitCommand::Powerlaw { input, out } => {
                let pts = load_points(&input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
                let prov = Provenance::default().with_file(&input).map_err(CliError::data)?;
                let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                let fit = fit_power_law(&xs, &ys).map_err(CliError::data)?;
                let human = table(&[
                    ("coefficient".into(), format!("{:e}", fit.coefficient)),
                    ("exponent".into(), format!("{}", fit.exponent)),
                    ("r_squared".into(), format!("{}", fit.r_squared)),
                    ("max log10 residual".into(), eng(fit.max_log_residual)),
                ]);
                let art = ArtifactFile::new(ArtifactKind::PowerLaw, &fit, prov).map_err(CliError::data)?;
                self.emit(&art, out.as_deref(), human)
            }
            FitCommand::Parabola { input, out } => {
                let pts = load_points(&input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
                let prov = Provenance::default().with_file(&input).map_err(CliError::data)?;
                let fit = fit_isoflop_profile(&pts).map_err(CliError::data)?;
                let human = table(&[
                    ("c2, c1, c0".into(), format!("{}, {}, {}", fit.c2, fit.c1, fit.c0)),
                    ("optimum x".into(), fit.optimum_x.map_or("none".into(), exact)),
                    ("optimum loss".into(), fit.optimum_loss.map_or("none".into(), |v| self.loss(v))),
                    ("interior".into(), fit.interior.to_string()),
                ]);
                let art = ArtifactFile::new(ArtifactKind::Parabola, &fit, prov).map_err(CliError::data)?;
                self.emit(&art, out.as_deref(), human)
            }
            FitCommand::Overtrain { runs, tol, out } => {
                let (records, prov) = self.load_runs(&runs)?;
                let res = fit_overtraining(&records, tol).map_err(CliError::data)?;
                for (k, m, n) in &res.skipped {
                    self.warn(&format!("{} M = {m:.1} has {n} run(s); skipped", kind_name(*k)));
                }
                let rows: Vec<(String, String)> = res
                    .groups
                    .iter()
                    .map(|g| {
                        (
                            format!("{} M = {:.1}", kind_name(g.kind), g.ratio),
                            format!("eta {:.6}  lambda {}  ({} runs)", g.eta, eng(g.lambda), g.n_runs),
                        )
                    })
                    .collect();
                let art = ArtifactFile::new(ArtifactKind::PowerLaw, &res, prov).map_err(CliError::data)?;
                self.emit(&art, out.as_deref(), table(&rows))
            }
            FitCommand::Runtime { input, metric, configs, batch_term, accel, accel_file, out } => {
                let measurements = load_latency(&input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
                let prov = Provenance::default().with_file(&input).map_err(CliError::data)?;
                let table_ = config_table(&configs)?;
                let metric: Metric = metric.into();
                let (factors, widths) = (CostFactors::default(), ByteWidths::default());
                let cost = |m: &flopscale_core::runtime::LatencyMeasurement| -> Result<f64, RuntimeError> {
                    let entry = table_.get(&m.config_id).ok_or(RuntimeError::InvalidMeasurement("unknown config_id"))?;
                    match metric {
                        Metric::Ttft => ttft_cost(&entry.config, m.batch, m.prefill_len, &factors),
                        Metric::StepTime => step_time_cost(&entry.config, m.batch, m.prefill_len, &widths),
                    }
                };
                if let Some(m) = measurements.iter().find(|m| m.metric == metric && table_.get(&m.config_id).is_none()) {
                    return Err(CliError::Data(format!("unknown config_id {:?}", m.config_id)));
                }
                let fit = fit_runtime(&measurements, cost, metric, batch_term).map_err(CliError::data)?;
                if fit.epsilon_clamped {
                    self.warn("negative fitted overhead; refitted with epsilon = 0");
                }
                let registry = match &accel_file {
                    Some(p) => load_accelerators(p).map_err(CliError::data)?,
                    None => accelerator_registry(),
                };
                let spec = match &accel {
                    Some(name) => Some(find_accelerator(&registry, name).ok_or_else(|| CliError::Data(format!("unknown accelerator {name:?}")))?.clone()),
                    None => None,
                };
                let utilization = spec.as_ref().map(|s| hardware_utilization(&fit, s));
                let payload = RuntimeFitPayload { metric, fit, accelerator: spec.map(|s| s.name), utilization };
                let unit = match metric {
                    Metric::Ttft => "FLOP/s",
                    Metric::StepTime => "B/s",
                };
                let mut rows = vec![
                    ("rate_eff".into(), format!("{} {unit}", eng(fit.rate_eff))),
                    ("epsilon".into(), format!("{:e} s", fit.epsilon)),
                    ("batch constant".into(), fit.batch_const.map_or("-".into(), |v| format!("{v:e} s"))),
                    ("rms residual".into(), format!("{:e} s", fit.residual_rms)),
                    ("samples".into(), fit.n_samples.to_string()),
                ];
                if let Some(u) = utilization {
                    rows.push(("utilization".into(), format!("{:.4}{}", u.fraction, if u.exceeds_peak { " (above peak)" } else { "" })));
                }
                let art = ArtifactFile::new(ArtifactKind::RuntimeFit, &payload, prov).map_err(CliError::data)?;
                self.emit(&art, out.as_deref(), table(&rows))
            }
        }
    }

    fn plan(&mut self, p: PlanArgs) -> Result<(), CliError> {
        if let Some(PlanGridCommand::Grid { n, m, kind, context, configs, backward_multiplier }) = p.grid {
            let ratios = m.unwrap_or_else(|| DEFAULT_TOKEN_PARAM_RATIOS.to_vec());
            let mut t = config_table(&configs)?;
            if let Some(k) = kind {
                t.entries.retain(|e| e.config.kind == ArchKind::from(k));
            }
            let grid = plan_token_param_grid(&n, &ratios, Some(&t), context, &CostFactors::default(), backward_multiplier)
                .map_err(CliError::data)?;
            let mut prov = Provenance::default();
            if let Some(c) = &configs {
                prov = prov.with_file(c).map_err(CliError::data)?;
            }
            let payload = json!({ "context": context, "backward_multiplier": backward_multiplier, "grid": grid });
            let rows: Vec<(String, String)> = grid
                .iter()
                .map(|g| {
                    let c = g.c.map_or("no matching config".into(), eng);
                    (format!("N {} M {}", eng(g.n), g.ratio), format!("D {}  C {}  {}", eng(g.d), c, g.config.as_deref().unwrap_or("")))
                })
                .collect();
            let art = ArtifactFile::new(ArtifactKind::Plan, &payload, prov).map_err(CliError::data)?;
            return self.emit(&art, None, table(&rows));
        }
        let budget = p.budget.ok_or_else(|| CliError::Usage("plan needs --budget (or the `grid` subcommand)".into()))?;
        let fits_path = p.fits.ok_or_else(|| CliError::Usage("plan needs --fits".into()))?;
        let art = ArtifactFile::read(&fits_path).map_err(CliError::data)?;
        let fits: PlanFits = art.payload_as(ArtifactKind::PowerLaw).map_err(|e| {
            CliError::Data(format!("{}: expected the output of `fit isoflop`: {e}", fits_path.display()))
        })?;
        let mut plan = compute_optimal_alloc(&fits.n_opt, &fits.d_opt, budget).map_err(CliError::data)?;
        let mut prov = Provenance::default().with_file(&fits_path).map_err(CliError::data)?;
        let mut realized_on = None;
        if p.realize {
            let t = config_table(&p.configs)?;
            if let Some(c) = &p.configs {
                prov = prov.with_file(c).map_err(CliError::data)?;
            }
            let entry = match fits.kind {
                Some(k) => t.resolve_kind(k, plan.n_star),
                None => t.resolve(plan.n_star),
            }
            .ok_or_else(|| CliError::Data(format!("no configuration within tolerance of N* = {}", eng(plan.n_star))))?;
            plan = realize_plan(&plan, &entry.config, p.context, &CostFactors::default(), p.backward_multiplier).map_err(CliError::data)?;
            realized_on = Some(entry.name.clone());
        }
        let payload = json!({ "plan": plan, "realized_on": realized_on, "backward_multiplier": p.backward_multiplier });
        let mut rows = vec![
            ("H".into(), eng(plan.budget)),
            ("N*".into(), eng(plan.n_star)),
            ("D*".into(), eng(plan.d_star)),
            ("M*".into(), format!("{:.2}", plan.m_star)),
        ];
        if let (Some(c), Some(dev), Some(name)) = (plan.realized_compute, plan.budget_deviation, &realized_on) {
            rows.push(("realized C".into(), format!("{} on {name} ({:+.2}% of H)", eng(c), 100.0 * dev)));
        }
        let art = ArtifactFile::new(ArtifactKind::Plan, &payload, prov).map_err(CliError::data)?;
        self.emit(&art, None, table(&rows))
    }

    fn predict(&mut self, p: PredictCommand) -> Result<(), CliError> {
        let (metric, a) = match p {
            PredictCommand::Loss { fit, n, d } => {
                let surface: LossSurfaceFit = ArtifactFile::read(&fit)
                    .and_then(|a| a.payload_as(ArtifactKind::LossSurface))
                    .map_err(|e| CliError::Data(format!("{}: {e}", fit.display())))?;
                if !(n > 0.0 && d > 0.0) {
                    return Err(CliError::Data("N and D must be > 0".into()));
                }
                let l = surface.predict(n, d);
                let bits = l / crate::format::NATS_PER_BIT;
                return self.emit_value(&json!({ "N": n, "D": d, "loss_nats": l, "loss_bits": bits }), format!("{}\n", self.loss(l)));
            }
            PredictCommand::Ttft(a) => (Metric::Ttft, a),
            PredictCommand::StepTime(a) => (Metric::StepTime, a),
        };
        let payload: RuntimeFitPayload = ArtifactFile::read(&a.fit)
            .and_then(|art| art.payload_as(ArtifactKind::RuntimeFit))
            .map_err(|e| CliError::Data(format!("{}: {e}", a.fit.display())))?;
        if payload.metric != metric {
            return Err(CliError::Data(format!("{} holds a {:?} fit", a.fit.display(), payload.metric)));
        }
        let (config, _) = load_config(&a.source)?;
        let seconds = match metric {
            Metric::Ttft => predict_ttft(&config, a.b, a.tp, &payload.fit, &CostFactors::default()),
            Metric::StepTime => predict_step_time(&config, a.b, a.tp, &payload.fit, &ByteWidths::default()),
        }
        .map_err(CliError::data)?;
        self.emit_value(&json!({ "metric": metric, "B": a.b, "T_p": a.tp, "seconds": seconds }), format!("{seconds:e} s\n"))
    }

    fn roofline(&mut self, r: RooflineArgs) -> Result<(), CliError> {
        let registry = match &r.accel_file {
            Some(p) => load_accelerators(p).map_err(CliError::data)?,
            None => accelerator_registry(),
        };
        let spec = find_accelerator(&registry, &r.accel).ok_or_else(|| CliError::Data(format!("unknown accelerator {:?}", r.accel)))?;
        let point = roofline(r.flops, r.bytes, spec).map_err(CliError::data)?;
        let regime = match point.regime {
            flopscale_core::runtime::Regime::ComputeBound => "compute_bound",
            flopscale_core::runtime::Regime::MemoryBound => "memory_bound",
        };
        let value = json!({ "accelerator": spec.name, "roofline": point });
        let human = table(&[
            ("accelerator".into(), spec.name.clone()),
            ("intensity".into(), format!("{} FLOP/B", point.intensity)),
            ("ridge".into(), format!("{:.1} FLOP/B", point.ridge_intensity)),
            ("regime".into(), regime.into()),
            ("attainable".into(), format!("{} FLOP/s", eng(point.attainable_flops_per_s))),
            ("time bounds".into(), format!("[{:e}, {:e}] s", point.lower, point.upper)),
        ]);
        self.emit_value(&value, human)
    }

    fn pareto(&mut self, p: ParetoArgs) -> Result<(), CliError> {
        let (records, _) = self.load_runs(&p.runs)?;
        let records: Vec<RunRecord> = match p.kind {
            Some(k) => records.into_iter().filter(|r| r.kind == ArchKind::from(k)).collect(),
            None => records,
        };
        let front = pareto_frontier(&records);
        if let Some(path) = &p.out {
            let file = std::fs::File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            write_runs_csv(&front, file).map_err(CliError::data)?;
        }
        let rows: Vec<(String, String)> = front
            .iter()
            .map(|r| (format!("C {}", eng(r.c)), format!("{}  {} N {} D {}", self.loss(r.loss), kind_name(r.kind), eng(r.n), eng(r.d))))
            .collect();
        self.emit_value(&serde_json::to_value(&front).map_err(CliError::data)?, table(&rows))
    }
}

fn select_kind(records: Vec<RunRecord>, kind: Option<ArchKind>) -> Result<Vec<RunRecord>, CliError> {
    match kind {
        Some(k) => Ok(records.into_iter().filter(|r| r.kind == k).collect()),
        None => {
            if records.windows(2).any(|w| w[0].kind != w[1].kind) {
                return Err(CliError::Data("runs mix architectures; pass --kind".into()));
            }
            Ok(records)
        }
    }
}
