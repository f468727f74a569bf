use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gems_core::llm::{ChatClient, HttpChatClient, LlmSettings, ScriptedChatClient};
use gems_core::scoring::ScoringSpec;
use gems_core::session::{
    export_csv, export_json, load_session, new_session_id, save_session, DatasetSource, Services, Session,
    SessionConfig,
};
use gems_server::{router, AppState, Options};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "gems", version, about = "Interactive genetic search over molecular structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a session file from a dataset.
    Init(InitArgs),
    /// Evolve a stored session for a number of generations.
    Run(RunArgs),
    /// Write a session as CSV or JSON.
    Export(ExportArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args, Default)]
struct GaFlags {
    /// RNG seed for the genetic operators.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    population_size: Option<usize>,
    #[arg(long)]
    mutation_rate: Option<f64>,
    #[arg(long)]
    crossover_rate: Option<f64>,
    #[arg(long)]
    elite_count: Option<usize>,
}

impl GaFlags {
    fn apply(&self, config: &mut SessionConfig) {
        let ga = &mut config.ga;
        if let Some(v) = self.seed {
            ga.rng_seed = v;
        }
        if let Some(v) = self.population_size {
            ga.population_size = v;
        }
        if let Some(v) = self.mutation_rate {
            ga.mutation_rate = v;
        }
        if let Some(v) = self.crossover_rate {
            ga.crossover_rate = v;
        }
        if let Some(v) = self.elite_count {
            ga.elite_count = v;
        }
    }

    fn is_empty(&self) -> bool {
        self.seed.is_none()
            && self.population_size.is_none()
            && self.mutation_rate.is_none()
            && self.crossover_rate.is_none()
            && self.elite_count.is_none()
    }
}

#[derive(Args)]
struct InitArgs {
    /// SMILES or CSV file with the seed molecules.
    #[arg(long, conflicts_with = "sample", required_unless_present = "sample")]
    dataset: Option<PathBuf>,
    /// Built-in sample dataset name.
    #[arg(long)]
    sample: Option<String>,
    /// Session configuration as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scoring spec as JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[command(flatten)]
    ga: GaFlags,
    /// Output session file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    session: PathBuf,
    /// Defaults to the configured generations per run.
    #[arg(long, short)]
    generations: Option<usize>,
    #[command(flatten)]
    ga: GaFlags,
    /// Defaults to overwriting the input session.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    session: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Defaults to stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Directory for session files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Chat-completion endpoint URL.
    #[arg(long, requires = "llm_model")]
    llm_url: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long, default_value = "GEMS_LLM_API_KEY")]
    llm_key_env: String,
    /// JSON array of canned responses, used instead of a live endpoint.
    #[arg(long, conflicts_with = "llm_url")]
    llm_script: Option<PathBuf>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn init(args: InitArgs) -> Result<(), String> {
    let mut config: SessionConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SessionConfig::default(),
    };
    args.ga.apply(&mut config);
    let spec: ScoringSpec = match &args.spec {
        Some(p) => read_json(p)?,
        None => ScoringSpec::default(),
    };
    let source = match (&args.dataset, &args.sample) {
        (Some(p), _) => DatasetSource::Text {
            text: fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        },
        (None, Some(name)) => DatasetSource::Sample { name: name.clone() },
        (None, None) => return Err("either --dataset or --sample is required".into()),
    };
    let services = Services::for_endpoints(&config.endpoints);
    let session = Session::create(new_session_id(), &source, config, spec, &services).map_err(|e| e.to_string())?;
    for e in &session.dataset.errors {
        eprintln!("line {}: {} ({})", e.line, e.message, e.text);
    }
    for d in &session.dataset.duplicates {
        eprintln!("line {}: duplicate of {}", d.line, d.key);
    }
    save_session(&session, &args.out).map_err(|e| e.to_string())?;
    eprintln!(
        "{}: {} molecules in generation 0",
        args.out.display(),
        session.population.len()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<(), String> {
    let mut session = load_session(&args.session).map_err(|e| e.to_string())?;
    let mut services = Services::for_endpoints(&session.config.endpoints);
    if !args.ga.is_empty() {
        let mut config = session.config.clone();
        args.ga.apply(&mut config);
        session.update_config(config, &mut services).map_err(|e| e.to_string())?;
    }
    let n = args.generations.unwrap_or(session.config.ga.generations_per_run);
    let cancel = AtomicBool::new(false);
    let result = session.run(n, &mut services, &cancel, |_, event| {
        println!("{}", serde_json::to_string(event).expect("event serializes"));
    });
    let out = args.out.as_deref().unwrap_or(&args.session);
    save_session(&session, out).map_err(|e| e.to_string())?;
    result.map(|_| ()).map_err(|e| e.to_string())
}

fn export(args: ExportArgs) -> Result<(), String> {
    let session = load_session(&args.session).map_err(|e| e.to_string())?;
    let text = match args.format {
        Format::Csv => export_csv(&session),
        Format::Json => export_json(&session),
    }
    .map_err(|e| e.to_string())?;
    match &args.out {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn serve(args: ServeArgs) -> Result<(), String> {
    let llm: Option<Arc<dyn ChatClient>> = match (&args.llm_script, &args.llm_url) {
        (Some(p), _) => Some(Arc::new(
            ScriptedChatClient::from_file(p).map_err(|e| format!("{}: {e}", p.display()))?,
        )),
        (None, Some(url)) => Some(Arc::new(HttpChatClient::new(LlmSettings {
            url: url.clone(),
            model: args.llm_model.clone().unwrap_or_default(),
            api_key: std::env::var(&args.llm_key_env).ok(),
        }))),
        (None, None) => None,
    };
    let state = AppState::new(Options {
        data_dir: args.data_dir.clone(),
        llm,
        remote: None,
    })
    .map_err(|e| format!("{:?}", e.body))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .map_err(|e| format!("{}: {e}", args.addr))?;
        eprintln!("listening on {}", args.addr);
        axum::serve(listener, router(state)).await.map_err(|e| e.to_string())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Init(a) => init(a),
        Command::Run(a) => run(a),
        Command::Export(a) => export(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
