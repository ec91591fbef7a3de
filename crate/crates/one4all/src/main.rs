use std::path::PathBuf;

use clap::{Parser, Subcommand};

use one4all::cli::{self, RunConfig};

#[derive(Parser)]
#[command(
    name = "one4all",
    version,
    about = "Natural-language mission planning for heterogeneous farm robots"
)]
struct Args {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Context directory holding schemas/, plans/, worlds/.
    #[arg(long, global = true)]
    context: Option<PathBuf>,
    /// Gateway mode: mock or live.
    #[arg(long, global = true)]
    gateway: Option<String>,
    /// Mock-gateway script file (TOML).
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Live chat-completions endpoint URL.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Model name sent to the live endpoint.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Sampling temperature.
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Response token budget.
    #[arg(long = "max-tokens", global = true)]
    max_tokens: Option<u32>,
    /// Approval-loop attempt budget.
    #[arg(long = "max-attempts", global = true)]
    max_attempts: Option<u32>,
    /// World seed; fixes every simulated trace byte-for-byte.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Executor service address (HOST:PORT).
    #[arg(long, global = true)]
    addr: Option<String>,
    /// Output directory for traces and transcripts.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and approve a mission plan for a natural-language query.
    Plan { query: String },
    /// Validate a plan file against the robot schemas.
    Validate { plan_file: PathBuf },
    /// Execute a plan file against the local simulated world.
    Execute { plan_file: PathBuf },
    /// Host the executor service until interrupted.
    Serve,
    /// Full loopback: plan, hand off over TCP, execute, fetch the report.
    E2e { query: String },
}

fn build_config(args: &Args) -> Result<RunConfig, String> {
    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        config = config.with_file(path)?;
    }
    if let Some(v) = &args.context {
        config.context_dir = v.clone();
    }
    if let Some(v) = &args.gateway {
        config.gateway_mode = cli::parse_gateway_mode(v)?;
    }
    if let Some(v) = &args.script {
        config.script = Some(v.clone());
    }
    if let Some(v) = &args.endpoint {
        config.endpoint = Some(v.clone());
    }
    if let Some(v) = &args.model {
        config.model = v.clone();
    }
    if let Some(v) = args.temperature {
        config.temperature = v;
    }
    if let Some(v) = args.max_tokens {
        config.max_tokens = v;
    }
    if let Some(v) = args.max_attempts {
        config.max_attempts = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = &args.addr {
        config.addr = v.clone();
    }
    if let Some(v) = &args.output {
        config.output_dir = v.clone();
    }
    Ok(config)
}

fn main() {
    let args = Args::parse();
    let mut out = std::io::stdout();
    let mut err = std::io::stderr();
    let config = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e);
            std::process::exit(cli::EXIT_CONFIG);
        }
    };
    let code = match &args.command {
        Command::Plan { query } => cli::cmd_plan(query, &config, &mut out, &mut err),
        Command::Validate { plan_file } => cli::cmd_validate(plan_file, &config, &mut out, &mut err),
        Command::Execute { plan_file } => cli::cmd_execute(plan_file, &config, &mut out, &mut err),
        Command::Serve => cli::cmd_serve(&config, &mut out, &mut err),
        Command::E2e { query } => cli::cmd_e2e(query, &config, &mut out, &mut err),
    };
    std::process::exit(code);
}
