use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use layercot::engine::{
    apply_feedback, write_jsonl, ClaimStatus, Feedback, LayerRecord, Session, SessionStatus,
    VerificationMode,
};
use layercot::scenarios::{self, Scenario};
use layercot::service::{self, ServiceConfig, SessionManager, SessionStore, STORAGE_ROOT_ENV};
use layercot::sim::{self, SimConfig, SweepParam};
use layercot::{Pipeline, Query};

#[derive(Parser)]
#[command(name = "layercot", version, about = "Layered, verified chain-of-thought sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session in the terminal.
    Run(RunArgs),
    /// Run the error-propagation simulator.
    Simulate(SimArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Bundled scenarios.
    Scenarios {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    List,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    query: Option<String>,
    /// Bundled scenario name, or a path to a scenario JSON file.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    mode: Option<VerificationMode>,
    #[arg(long)]
    max_layers: Option<usize>,
    #[arg(long)]
    max_refinements: Option<u32>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the event log here as JSON Lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = SimConfig::default().num_tasks)]
    num_tasks: u64,
    #[arg(long, default_value_t = SimConfig::default().num_layers)]
    num_layers: u32,
    #[arg(long, default_value_t = SimConfig::default().error_prob)]
    error_prob: f64,
    #[arg(long, default_value_t = SimConfig::default().detection_prob)]
    detection_prob: f64,
    #[arg(long, default_value_t = SimConfig::default().max_refinements)]
    max_refinements: u32,
    #[arg(long, default_value_t = SimConfig::default().seed)]
    seed: u64,
    /// Parameter to sweep: p, q, N or R.
    #[arg(long, requires = "values")]
    sweep: Option<String>,
    #[arg(long, value_delimiter = ',', requires = "sweep")]
    values: Vec<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    addr: Option<SocketAddr>,
    #[arg(long, env = STORAGE_ROOT_ENV)]
    storage_root: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Simulate(args) => simulate(args),
        Command::Serve(args) => serve(args),
        Command::Scenarios {
            command: ScenarioCommand::List,
        } => {
            for name in scenarios::names() {
                let s = scenarios::bundled(name).expect("bundled scenarios load");
                println!("{name:<16} {}", s.script.planned_layers.join(" / "));
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ServiceConfig> {
    Ok(match path {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    })
}

fn run(args: RunArgs) -> Result<()> {
    let file = load_config(args.config.as_ref())?;
    let mut config = file.engine_config();
    let (pipeline, default_query) = match &args.scenario {
        Some(name) => {
            let scenario = if scenarios::names().contains(&name.as_str()) {
                config.backend = layercot::BackendSelector::Scripted { scenario: name.clone() };
                scenarios::bundled(name)?
            } else {
                Scenario::load(name.as_ref())?
            };
            (scenario.pipeline(), Some(scenario.query()))
        }
        None => (
            scenarios::pipeline_for(&config.backend, Arc::new(file.fact_store()?))?,
            None,
        ),
    };
    if let Some(mode) = args.mode {
        config.verification_mode = mode;
    }
    if let Some(n) = args.max_layers {
        config.max_layers = n;
    }
    if let Some(r) = args.max_refinements {
        config.max_refinements = r;
    }
    let query = match (args.query, default_query) {
        (Some(text), _) => Query::new(text),
        (None, Some(q)) => q,
        (None, None) => return Err("--query or --scenario is required".into()),
    };

    let mut session = Session::new(query, config)?;
    println!("session {}", session.id);
    let outcome = drive_interactive(&pipeline, &mut session);
    if let Some(path) = &args.trace {
        write_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?), &session.events)?;
    }
    outcome?;
    match (&session.final_answer, session.status()) {
        (Some(answer), _) => {
            println!("\nanswer (quality {:.2}):\n{}", answer.quality, answer.text);
            Ok(())
        }
        (None, SessionStatus::Failed) => Err("session failed: a layer could not be verified".into()),
        (None, status) => Err(format!("session stopped in state {status:?}").into()),
    }
}

fn print_layer(layer: &LayerRecord) {
    println!("\nlayer {} [{}] attempt {}", layer.index, layer.objective, layer.attempt);
    if let Some(partial) = &layer.partial {
        println!("  {}", layercot::agents::strip_claims(&partial.narrative).replace('\n', "\n  "));
        for claim in &partial.claims {
            let status = layer
                .verdict
                .as_ref()
                .and_then(|v| v.per_claim.get(&claim.id))
                .copied()
                .unwrap_or(ClaimStatus::Unknown);
            println!("  {} {:?}: {}", claim.id, status, claim.statement);
        }
    }
}

fn drive_interactive(pipeline: &Pipeline, session: &mut Session) -> Result<()> {
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        pipeline.drive(session)?;
        let Some(layer) = session.awaiting_layer().cloned() else {
            return Ok(());
        };
        print_layer(&layer);
        print!("approve | reject <note> | annotate <constraint> > ");
        std::io::stdout().flush()?;
        let Some(line) = lines.next().transpose()? else {
            return Err("input closed while a layer awaits review".into());
        };
        let (cmd, rest) = line.trim().split_once(' ').unwrap_or((line.trim(), ""));
        let feedback = match cmd {
            "approve" | "a" => Feedback::approve(&session.id, layer.index),
            "reject" | "r" => Feedback::reject(&session.id, layer.index, rest),
            "annotate" | "n" => Feedback::annotate(&session.id, layer.index, rest),
            _ => {
                eprintln!("unrecognized input");
                continue;
            }
        };
        if let Err(e) = apply_feedback(session, &feedback) {
            eprintln!("{e}");
        }
    }
}

fn simulate(args: SimArgs) -> Result<()> {
    let config = SimConfig {
        num_tasks: args.num_tasks,
        num_layers: args.num_layers,
        error_prob: args.error_prob,
        detection_prob: args.detection_prob,
        max_refinements: args.max_refinements,
        seed: args.seed,
    };
    config.validate()?;
    let Some(param) = args.sweep else {
        let (s, a) = (sim::simulate(&config), sim::analytic(&config));
        println!("{:<22} {:>12} {:>12}", "", "simulated", "analytic");
        for (name, x, y) in [
            ("vanilla_error_rate", s.vanilla_error_rate, a.vanilla_error_rate),
            ("layered_error_rate", s.layered_error_rate, a.layered_error_rate),
            ("exhausted_rate", s.exhausted_rate, a.exhausted_rate),
            ("quality", s.quality, a.quality),
            ("mean_backend_calls", s.mean_backend_calls, a.mean_backend_calls),
        ] {
            println!("{name:<22} {x:>12.6} {y:>12.6}");
        }
        return Ok(());
    };
    let param: SweepParam = param.parse()?;
    let rows = sim::sweep(&config, param, &args.values)?;
    match &args.csv {
        Some(path) => {
            sim::write_csv(&rows, std::fs::File::create(path)?)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => sim::write_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let file = load_config(args.config.as_ref())?;
    let root = file.storage_root(args.storage_root);
    let addr = file.addr(args.addr);
    let manager = Arc::new(SessionManager::new(
        SessionStore::open(&root)?,
        file.engine_config(),
        Arc::new(file.fact_store()?),
    ));
    let report = manager.resume_all()?;
    eprintln!(
        "storage {}: {} sessions loaded, {} quarantined",
        root.display(),
        report.loaded,
        report.quarantined.len()
    );
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        service::serve(listener, manager).await
    })?;
    Ok(())
}
