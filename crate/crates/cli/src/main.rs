use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lerg_cli::commands::{cmd_eval, cmd_explain, cmd_oracle_check, cmd_train_ngram, to_json};
use lerg_cli::config::{ModelChoice, ModelSpec, RunConfig, SegmenterChoice};
use lerg_core::checks::SuiteSize;
use lerg_core::models::NgramHyperParams;
use lerg_core::{LergError, Method, Result};

#[derive(Parser)]
#[command(name = "lerg", version, about = "Local explanations for conditional sequence generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an attribution matrix (CSV, SVG heatmap, JSON) per example and method.
    Explain(RunArgs),
    /// Sweep PPLC_R and PPL_A over the corpus against the random baseline.
    Eval(RunArgs),
    /// Run the exactness, property and convergence checks on built-in models.
    OracleCheck(OracleArgs),
    /// Train n-gram counts on a corpus and save them as JSON.
    TrainNgram(TrainArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Start from a saved run_config.json; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelChoice>,
    #[arg(long)]
    model_path: Option<PathBuf>,
    #[arg(long, conflicts_with = "server_cmd")]
    endpoint: Option<String>,
    #[arg(long)]
    server_cmd: Option<String>,
    #[arg(long = "method", value_parser = parse_method)]
    methods: Vec<Method>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    max_mask_ratio: Option<f64>,
    /// Comma-separated ratio grid, e.g. 0.1,0.2,0.3.
    #[arg(long, value_delimiter = ',')]
    ratios: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to these example ids (repeatable).
    #[arg(long = "id")]
    ids: Vec<String>,
    #[arg(long, value_parser = parse_segmenter)]
    segmenter: Option<SegmenterChoice>,
    #[arg(long, conflicts_with = "lenient")]
    strict: bool,
    #[arg(long)]
    lenient: bool,
    /// Random-baseline draws per example.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write oracle_report.json here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a reduced suite.
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = NgramHyperParams::default().k)]
    k: f64,
    #[arg(long, default_value_t = NgramHyperParams::default().lambda)]
    lambda: f64,
    #[arg(long, value_parser = parse_segmenter, default_value = "whitespace")]
    segmenter: SegmenterChoice,
    #[arg(long)]
    lenient: bool,
}

fn parse_model(s: &str) -> std::result::Result<ModelChoice, String> {
    s.parse().map_err(|e: LergError| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: LergError| e.to_string())
}

fn parse_segmenter(s: &str) -> std::result::Result<SegmenterChoice, String> {
    match s {
        "whitespace" => Ok(SegmenterChoice::Whitespace),
        "char" => Ok(SegmenterChoice::Char),
        _ => Err(format!("unknown segmenter `{s}`")),
    }
}

fn run_config(args: RunArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let kind = args
                .model
                .ok_or_else(|| LergError::Validation("--model is required without --config".into()))?;
            let input = args
                .input
                .clone()
                .ok_or_else(|| LergError::Validation("--input is required without --config".into()))?;
            let out = args
                .out
                .clone()
                .ok_or_else(|| LergError::Validation("--out is required without --config".into()))?;
            let spec = ModelSpec {
                kind,
                path: None,
                endpoint: None,
                server_cmd: None,
                ngram: NgramHyperParams::default(),
            };
            RunConfig::new(spec, input, out)
        }
    };
    if let Some(kind) = args.model {
        config.model.kind = kind;
    }
    if let Some(p) = args.model_path {
        config.model.path = Some(p);
    }
    if let Some(e) = args.endpoint {
        config.model.endpoint = Some(e);
        config.model.server_cmd = None;
    }
    if let Some(c) = args.server_cmd {
        config.model.server_cmd = Some(c);
        config.model.endpoint = None;
    }
    if let Some(i) = args.input {
        config.input = i;
    }
    if let Some(o) = args.out {
        config.out = o;
    }
    if !args.methods.is_empty() {
        config.methods = args.methods;
    }
    if let Some(s) = args.samples {
        config.samples = s;
    }
    if let Some(r) = args.max_mask_ratio {
        config.max_mask_ratio = r;
    }
    if !args.ratios.is_empty() {
        config.ratios = args.ratios;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if !args.ids.is_empty() {
        config.ids = args.ids;
    }
    if let Some(s) = args.segmenter {
        config.segmenter = s;
    }
    if args.strict {
        config.strict = true;
    }
    if args.lenient {
        config.strict = false;
    }
    if let Some(t) = args.trials {
        config.random_trials = t;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Explain(args) => {
            let config = run_config(args)?;
            let written = cmd_explain(&config)?;
            log::info!("wrote {} files to {}", written.len(), config.out.display());
        }
        Command::Eval(args) => {
            let config = run_config(args)?;
            let report = cmd_eval(&config)?;
            for agg in &report.aggregates {
                println!(
                    "{:<14} {:<7} {}",
                    agg.label(),
                    agg.metric.name(),
                    agg.token_mean.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ")
                );
            }
            if !report.failures.is_empty() {
                eprintln!("{} example(s) failed; see report.json", report.failures.len());
            }
        }
        Command::OracleCheck(args) => {
            let size = if args.quick {
                SuiteSize {
                    additive: 10,
                    efficiency: 5,
                    dominance: 10,
                    convergence: 5,
                    regression: 3,
                }
            } else {
                SuiteSize::default()
            };
            let report = cmd_oracle_check(args.seed, size, args.out.as_deref())?;
            print!("{}", to_json(&report)?);
        }
        Command::TrainNgram(args) => {
            let spec = ModelSpec {
                kind: ModelChoice::Ngram,
                path: None,
                endpoint: None,
                server_cmd: None,
                ngram: NgramHyperParams::default(),
            };
            let mut config = RunConfig::new(spec, args.input, args.out.clone());
            config.segmenter = args.segmenter;
            config.strict = !args.lenient;
            let hyper = NgramHyperParams {
                k: args.k,
                lambda: args.lambda,
            };
            cmd_train_ngram(&config, hyper, &args.out)?;
        }
    }
    Ok(())
}

fn fail(code: &str, message: &str, exit: u8) -> ExitCode {
    let body = serde_json::json!({ "error": { "code": code, "message": message } });
    eprintln!("{body}");
    ExitCode::from(exit)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LERG_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("validation", e.to_string().trim(), 1),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.code(), &e.to_string(), e.exit_code() as u8),
    }
}
