//! `ctg`: analyse, evaluate, synthesise and render CTG traces.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ctg_agents::{run_pipeline, Backend, BackendKind, Mode, PipelineConfig};
use ctg_cli::eval::{evaluate, EvalOptions, Sampler};
use ctg_cli::Config;
use ctg_core::analysis::analyze;
use ctg_core::render::{render_svg, render_svg_with_episodes, RenderConfig};
use ctg_core::signal::{load_csv, load_dir, load_labels, save_csv, save_labels, CtgRecord};
use ctg_core::synth::{generate, random_scenario, Scenario};

#[derive(Parser)]
#[command(
    name = "ctg",
    version,
    about = "Rule-based cardiotocography trace analysis"
)]
struct Cli {
    /// TOML file with [analysis] thresholds and [agents] settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify one trace and print the verdict as JSON.
    Analyze(AnalyzeArgs),
    /// Score verdicts against labels over repeated trials.
    Eval(EvalArgs),
    /// Generate traces with known ground truth.
    Synth(SynthArgs),
    /// Draw a trace on standard CTG paper as SVG.
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Multi,
    Direct,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Multi => Mode::MultiAgent,
            ModeArg::Direct => Mode::DirectPrompt,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Rules,
    Remote,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "multi")]
    mode: ModeArg,
    /// Overrides the configured backend.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Model name for the remote backend.
    #[arg(long)]
    model: Option<String>,
    /// Endpoint root for the remote backend.
    #[arg(long)]
    base_url: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    csv: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Write the verdict here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also write the trace with detected episodes as SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    dir: PathBuf,
    /// `record_id,label` file; defaults to `<dir>/labels.csv`.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Records drawn per trial; all records when omitted.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    sample: Option<u64>,
    /// Draw half of the sample from each label.
    #[arg(long, requires = "sample")]
    balanced: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parallel records; defaults to the number of cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    backend: BackendArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a results table to stderr.
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario JSON file.
    #[arg(long, required_unless_present = "random", conflicts_with = "random")]
    scenario: Option<PathBuf>,
    /// Generate this many random scenarios instead.
    #[arg(long)]
    random: Option<u64>,
    /// First seed for random scenarios.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise level for random scenarios, bpm.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Shade detected accelerations, decelerations and contractions.
    #[arg(long)]
    episodes: bool,
    #[arg(long)]
    px_per_cm: Option<u32>,
}

/// Failures split by exit code.
enum Failure {
    Usage(anyhow::Error),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<ctg_core::CtgError> for Failure {
    fn from(e: ctg_core::CtgError) -> Self {
        Failure::Run(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn require(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(anyhow!("{what} not found: {}", path.display())))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => {
            require(path, "config file")?;
            Config::load(path).map_err(usage)?
        }
        None => Config::default(),
    };
    match cli.command {
        Command::Analyze(args) => cmd_analyze(&config, args),
        Command::Eval(args) => cmd_eval(&config, args),
        Command::Synth(args) => cmd_synth(args),
        Command::Render(args) => cmd_render(&config, args),
    }
}

fn pipeline(
    config: &Config,
    args: &BackendArgs,
) -> Result<(Arc<dyn Backend>, PipelineConfig), Failure> {
    let mut agents = config.agents.clone();
    if let Some(b) = args.backend {
        agents.backend = match b {
            BackendArg::Rules => BackendKind::Rules,
            BackendArg::Remote => BackendKind::Remote,
        };
    }
    if let Some(model) = &args.model {
        agents.remote.model = model.clone();
    }
    if let Some(url) = &args.base_url {
        agents.remote.base_url = url.clone();
    }
    let backend = agents.build_backend(&config.analysis).map_err(usage)?;
    let cfg = agents.pipeline(args.mode.into()).map_err(usage)?;
    Ok((backend, cfg))
}

fn write_or_print(text: &str, path: Option<&Path>) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_analyze(config: &Config, args: AnalyzeArgs) -> Result<(), Failure> {
    require(&args.csv, "trace")?;
    let (backend, cfg) = pipeline(config, &args.backend)?;
    let rec = load_csv(&args.csv).context("loading trace")?;
    let out = run_pipeline(&rec, backend, &cfg).context("classifying")?;
    let json = out
        .document(rec.record_id())
        .to_json_pretty()
        .context("serializing verdict")?;
    write_or_print(&json, args.json.as_deref())?;
    if let Some(svg) = &args.svg {
        write_svg(&rec, config, &RenderConfig::default(), true, svg)?;
    }
    Ok(())
}

fn cmd_eval(config: &Config, args: EvalArgs) -> Result<(), Failure> {
    require(&args.dir, "record directory")?;
    let labels_path = args
        .labels
        .clone()
        .unwrap_or_else(|| args.dir.join("labels.csv"));
    require(&labels_path, "labels file")?;
    let labels = load_labels(&labels_path).map_err(usage)?;
    let records = load_dir(&args.dir, Some(&labels)).context("loading records")?;
    let (backend, cfg) = pipeline(config, &args.backend)?;
    let opts = EvalOptions {
        trials: args.trials as usize,
        sampler: Sampler {
            sample: args.sample.map(|k| k as usize),
            balanced: args.balanced,
            seed: args.seed,
        },
        jobs: args.jobs,
    };
    let report = evaluate(&records, &labels, &opts, |rec: &CtgRecord| {
        Ok(run_pipeline(rec, Arc::clone(&backend), &cfg)?.overall)
    })
    .context("evaluating")?;
    let json = serde_json::to_string_pretty(&report).context("serializing report")?;
    write_or_print(&json, args.out.as_deref())?;
    if args.table {
        eprint!(
            "{}",
            report.table(&format!("{} ({})", backend.name(), cfg.mode.as_str()))
        );
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let scenarios: Vec<Scenario> = match (&args.scenario, args.random) {
        (Some(path), _) => {
            require(path, "scenario file")?;
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            vec![Scenario::from_json(&text).map_err(usage)?]
        }
        (None, Some(n)) => (0..n)
            .map(|i| random_scenario(args.seed + i, args.noise))
            .collect(),
        (None, None) => return Err(usage(anyhow!("give --scenario or --random"))),
    };
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let labels_path = args.out.join("labels.csv");
    let mut labels = if labels_path.exists() {
        load_labels(&labels_path).context("reading existing labels")?
    } else {
        BTreeMap::new()
    };
    for s in &scenarios {
        let (rec, truth) = generate(s).with_context(|| format!("generating {}", s.record_id()))?;
        let id = rec.record_id().to_string();
        save_csv(&rec, args.out.join(format!("{id}.csv")))?;
        let truth_json =
            serde_json::to_string_pretty(&truth).context("serializing ground truth")?;
        std::fs::write(args.out.join(format!("{id}.truth.json")), truth_json)
            .context("writing ground truth")?;
        labels.insert(id, truth.overall.binary());
    }
    save_labels(&labels, &labels_path)?;
    eprintln!(
        "wrote {} record(s) to {}",
        scenarios.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_render(config: &Config, args: RenderArgs) -> Result<(), Failure> {
    require(&args.csv, "trace")?;
    let mut render = RenderConfig::default();
    if let Some(px) = args.px_per_cm {
        render.px_per_cm = px;
    }
    let rec = load_csv(&args.csv).context("loading trace")?;
    write_svg(&rec, config, &render, args.episodes, &args.out)
}

fn write_svg(
    rec: &CtgRecord,
    config: &Config,
    render: &RenderConfig,
    episodes: bool,
    path: &Path,
) -> Result<(), Failure> {
    let svg = if episodes {
        let a = analyze(rec, &config.analysis).context("analysing trace")?;
        let mut shown = a.accelerations.clone();
        shown.extend(a.decelerations.iter().map(|d| d.episode));
        shown.extend(a.contractions.iter().cloned());
        let render = RenderConfig {
            show_episodes: true,
            ..render.clone()
        };
        render_svg_with_episodes(rec, &render, &shown)
    } else {
        render_svg(rec, render)
    }
    .context("rendering")?;
    std::fs::write(path, svg).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
