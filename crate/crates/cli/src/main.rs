mod export;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fairforge::harness::{
    self, ConsensusPlan, Runner, SearchPlan, StakeholderProfile, SweepOutcome, SweepPlan, TrainPlan,
};
use fairforge::{class_distribution, load_dataset_with, DatasetSchema, LoadOptions};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "fairforge", version, about = "Fairness-regularized training, sweeps and stakeholder search")]
struct Cli {
    /// Format of the error line written to stderr on failure.
    #[arg(long, global = true, value_enum, default_value_t = ErrorFormat::Text)]
    error_format: ErrorFormat,

    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorFormat {
    Text,
    Json,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Plan file (JSON). Relative paths inside it are relative to the file.
    plan: PathBuf,
    /// Result directory.
    #[arg(long, env = "FAIRFORGE_OUT", default_value = "fairforge-out")]
    out: PathBuf,
    /// Parallel training runs (default: one per core).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and encode a CSV, report its shape and class balance.
    Ingest {
        csv: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        /// Stratified subsample of at most this many rows.
        #[arg(long)]
        max_rows: Option<usize>,
        /// Also write the encoded dataset and summary here.
        #[arg(long, env = "FAIRFORGE_OUT")]
        out: Option<PathBuf>,
    },
    /// Train one configuration (one run per seed).
    Train(RunArgs),
    /// λ sweep, or α sweep when the plan has an `alpha_grid`.
    Sweep(RunArgs),
    /// Weight-pair sweep between two metrics at a fixed λ.
    Consensus(RunArgs),
    /// Train a stakeholder's candidate grid and pick the best feasible point.
    Search(RunArgs),
    /// Select from an existing frontier without training.
    Select {
        /// frontier.json or a result directory containing one.
        frontier: PathBuf,
        /// Stakeholder profile (JSON).
        #[arg(long)]
        profile: PathBuf,
    },
    /// Write a frontier as JSON or CSV.
    Export {
        /// frontier.json or a result directory containing one.
        frontier: PathBuf,
        #[arg(long, value_enum, default_value_t = export::Format::Csv)]
        format: export::Format,
        /// Output file; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run the HTTP job service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Job records and results.
        #[arg(long, env = "FAIRFORGE_DATA_DIR", default_value = "fairforge-service")]
        data_dir: PathBuf,
        /// Dataset registry (JSON array of named dataset references).
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Jobs allowed to run at once.
        #[arg(long, default_value_t = 1)]
        max_jobs: usize,
        /// Worker threads per job.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

/// Failure classes map to exit codes: 1 for bad input, 2 for everything
/// that went wrong while doing the work.
#[derive(Debug)]
enum Failure {
    Invalid {
        message: String,
        field: Option<String>,
    },
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Invalid { .. } => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure::Invalid {
            message: message.into(),
            field: None,
        }
    }
}

impl From<fairforge::Error> for Failure {
    fn from(err: fairforge::Error) -> Self {
        use fairforge::Error as E;
        match err {
            E::InvalidConfig { field, message } => Failure::Invalid {
                message: format!("{field}: {message}"),
                field: Some(field),
            },
            E::MissingColumn(_)
            | E::EmptyGroup(_)
            | E::NonBinaryLabel { .. }
            | E::InvalidSchema(_)
            | E::InvalidValue { .. }
            | E::EmptyEooPool(_)
            | E::ShapeMismatch { .. }
            | E::Json(_) => Failure::invalid(err.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        Failure::Invalid {
            message: format!("{}: {}: {}", path.display(), field, e.inner()),
            field: (field != ".").then_some(field),
        }
    })
}

fn plan_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn runner(jobs: Option<usize>) -> Result<Runner, Failure> {
    if jobs == Some(0) {
        return Err(Failure::Invalid {
            message: "--jobs must be at least 1".into(),
            field: Some("jobs".into()),
        });
    }
    Ok(Runner {
        jobs,
        progress: None,
    }
    .progress(|done, total| log::info!("{done}/{total} runs finished")))
}

fn finish(
    args: &RunArgs,
    operation: &str,
    plan: &impl Serialize,
    outcome: &SweepOutcome,
) -> Result<(), Failure> {
    let plan_json = serde_json::to_value(plan).map_err(|e| Failure::Runtime(e.to_string()))?;
    let argv: Vec<String> = std::env::args().collect();
    harness::write_outcome(&args.out, outcome, operation, &plan_json, Some(argv))?;
    let failed = outcome.points.iter().filter(|p| !p.is_ok()).count();
    let summary = json!({
        "out": args.out,
        "operation": operation,
        "dataset": outcome.dataset,
        "points": outcome.points.len(),
        "failed": failed,
        "selection": outcome.selection,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if failed > 0 {
        return Err(Failure::Runtime(format!(
            "{failed} of {} points failed; see {}",
            outcome.points.len(),
            args.out.join(harness::FRONTIER_FILE).display()
        )));
    }
    Ok(())
}

fn load_plan<T: DeserializeOwned>(path: &Path, resolve: impl FnOnce(&mut T, &Path)) -> Result<T, Failure> {
    let mut plan: T = read_json(path)?;
    resolve(&mut plan, &plan_base(path));
    Ok(plan)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest {
            csv,
            schema,
            split_seed,
            max_rows,
            out,
        } => {
            let schema: DatasetSchema = read_json(&schema)?;
            schema.validate()?;
            let opts = LoadOptions {
                split_seed,
                max_rows,
                ..LoadOptions::default()
            };
            let ds = load_dataset_with(&csv, &schema, &opts)?;
            let identity = harness::DatasetIdentity::of(&ds);
            let summary = json!({
                "name": ds.name,
                "n": ds.len(),
                "d": ds.n_features(),
                "sha256": identity.sha256,
                "dropped_rows": ds.dropped_rows,
                "class_distribution": class_distribution(&ds),
            });
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
                let write = |name: &str, body: String| {
                    let p = dir.join(name);
                    std::fs::write(&p, body + "\n").map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))
                };
                write("dataset.json", ds.to_json()?)?;
                write("summary.json", text.clone())?;
            }
            println!("{text}");
            Ok(())
        }
        Command::Train(args) => {
            let plan: TrainPlan = load_plan(&args.plan, |p: &mut TrainPlan, b| p.dataset.resolve_paths(b))?;
            plan.validate()?;
            let loaded = plan.dataset.prepare()?;
            let outcome = harness::train_once(&plan, &loaded, &runner(args.jobs)?)?;
            finish(&args, "train", &plan, &outcome)
        }
        Command::Sweep(args) => {
            let plan: SweepPlan = load_plan(&args.plan, |p: &mut SweepPlan, b| p.dataset.resolve_paths(b))?;
            plan.validate()?;
            let loaded = plan.dataset.prepare()?;
            let r = runner(args.jobs)?;
            let (op, outcome) = if plan.is_alpha() {
                ("alpha_sweep", harness::run_alpha_sweep(&plan, &loaded, &r)?)
            } else {
                ("lambda_sweep", harness::run_lambda_sweep(&plan, &loaded, &r)?)
            };
            finish(&args, op, &plan, &outcome)
        }
        Command::Consensus(args) => {
            let plan: ConsensusPlan =
                load_plan(&args.plan, |p: &mut ConsensusPlan, b| p.dataset.resolve_paths(b))?;
            plan.validate()?;
            let loaded = plan.dataset.prepare()?;
            let outcome = harness::consensus_sweep(&plan, &loaded, &runner(args.jobs)?)?;
            finish(&args, "consensus_sweep", &plan, &outcome)
        }
        Command::Search(args) => {
            let plan: SearchPlan = load_plan(&args.plan, |p: &mut SearchPlan, b| p.dataset.resolve_paths(b))?;
            plan.validate()?;
            let loaded = plan.dataset.prepare()?;
            let outcome = harness::run_stakeholder_grid(&plan, &loaded, &runner(args.jobs)?)?;
            finish(&args, "stakeholder_search", &plan, &outcome)
        }
        Command::Select { frontier, profile } => {
            let profile: StakeholderProfile = read_json(&profile)?;
            profile.validate()?;
            let points = export::read(&frontier)?;
            let selected = harness::search_frontier(&profile, &points)?;
            println!("{}", serde_json::to_string_pretty(&selected).expect("point serializes"));
            Ok(())
        }
        Command::Export {
            frontier,
            format,
            output,
        } => {
            let points = export::read(&frontier)?;
            let bytes = export::render(&points, format)?;
            match output {
                Some(p) => std::fs::write(&p, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
                None => {
                    use std::io::Write;
                    std::io::stdout()
                        .write_all(&bytes)
                        .map_err(|e| Failure::Runtime(e.to_string()))
                }
            }
        }
        Command::Serve {
            addr,
            data_dir,
            registry,
            max_jobs,
            jobs,
        } => {
            if max_jobs == 0 {
                return Err(Failure::invalid("--max-jobs must be at least 1"));
            }
            let mut config = fairforge_service::ServiceConfig::new(data_dir);
            config.registry = registry;
            config.max_concurrent_jobs = max_jobs;
            config.threads_per_job = jobs;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
            rt.block_on(fairforge_service::serve(config, addr))
                .map_err(|e| Failure::Runtime(format!("serve: {e}")))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let serve = matches!(cli.command, Command::Serve { .. });
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if serve { "info" } else { level }))
        .init();
    let format = cli.error_format;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, message, field) = match &f {
                Failure::Invalid { message, field } => ("invalid_input", message.as_str(), field.clone()),
                Failure::Runtime(message) => ("runtime_error", message.as_str(), None),
            };
            let line = message.replace('\n', " ");
            match format {
                ErrorFormat::Text => eprintln!("fairforge: error: {line}"),
                ErrorFormat::Json => eprintln!(
                    "{}",
                    json!({"code": code, "message": line, "field": field, "exit_code": f.exit_code()})
                ),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
