use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use cascade_cli::exit;
use cascade_cli::run::{parse_seeds, run, RunError, RunOptions};
use cascade_cli::verify::{format_table, run_checks, VerifyOptions};
use cascade_core::{Error, ProviderSpec};
use cascade_service::{provider_factory, AppState};
use clap::{Args, Parser, Subcommand};

/// Crisis opinion-cascade simulator.
///
/// Flags take precedence over the CASCADE_* environment variables, which
/// take precedence over built-in defaults.
#[derive(Parser)]
#[command(name = "cascade", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headless for one or more seeds.
    Run(RunArgs),
    /// Run the oracle verification suite and print a pass/fail table.
    Verify(VerifyArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ProviderArgs {
    /// `local` or an http(s):// endpoint.
    #[arg(long, env = "CASCADE_PROVIDER", default_value = "local")]
    provider: String,
    /// Response cache file for the HTTP provider.
    #[arg(long, env = "CASCADE_PROVIDER_CACHE")]
    provider_cache: Option<PathBuf>,
    #[arg(long, env = "CASCADE_PROVIDER_RETRIES", default_value_t = 2)]
    provider_retries: u32,
    #[arg(long, env = "CASCADE_PROVIDER_TIMEOUT_MS", default_value_t = 10_000)]
    provider_timeout_ms: u64,
}

impl ProviderArgs {
    fn spec(&self) -> Result<ProviderSpec, Error> {
        let mut spec = ProviderSpec::parse(&self.provider)?;
        spec.cache_path = self.provider_cache.clone();
        spec.retry_budget = self.provider_retries;
        spec.timeout_ms = self.provider_timeout_ms;
        Ok(spec)
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "CASCADE_SCENARIO")]
    scenario: PathBuf,
    /// Comma-separated seeds or ranges, e.g. `1,2,3` or `1..5`.
    #[arg(long, env = "CASCADE_SEEDS")]
    seeds: Option<String>,
    #[arg(long, env = "CASCADE_OUT", default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated check names (ic, spectral, phase, state, dual, metrics, determinism, service).
    #[arg(long, env = "CASCADE_FILTER", value_delimiter = ',')]
    filter: Vec<String>,
    /// Power-iteration tolerance used by the spectral check.
    #[arg(long, default_value_t = cascade_core::network::DEFAULT_SPECTRAL_TOL)]
    power_tol: f64,
    #[arg(long, default_value_t = 100_000)]
    ic_runs: usize,
    #[arg(long, default_value_t = 1_000)]
    phase_runs: usize,
    /// Emit results as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "CASCADE_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Directory for write-through round persistence; restored on start.
    #[arg(long, env = "CASCADE_PERSIST")]
    persist: Option<PathBuf>,
    #[command(flatten)]
    provider: ProviderArgs,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("CASCADE_LOG").unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Serve(args) => match cmd_serve(args) {
            Ok(()) => exit::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                exit::CHECK_FAILED
            }
        },
    };
    ExitCode::from(code as u8)
}

fn print_error(e: &Error) {
    eprintln!("error: {e}");
    if let Error::Validation(issues) = e {
        for i in issues {
            eprintln!("  {i}");
        }
    }
}

fn cmd_run(args: RunArgs) -> i32 {
    let seeds = match args.seeds.as_deref().map(parse_seeds).transpose() {
        Ok(s) => s.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return exit::USAGE;
        }
    };
    let provider = match args.provider.spec() {
        Ok(p) => p,
        Err(e) => {
            print_error(&e);
            return exit::USAGE;
        }
    };
    let opts = RunOptions {
        scenario: args.scenario,
        seeds,
        out: args.out,
        provider,
    };
    match run(&opts) {
        Ok(summary) => {
            for r in &summary.reports {
                let corr = r.pearson_r.map_or_else(
                    || r.correlation_error.clone().unwrap_or_else(|| "-".into()),
                    |v| format!("{v:.4}"),
                );
                let jsd = r.jsd.map_or_else(|| "-".into(), |v| format!("{v:.4}"));
                println!("seed {:>6}  pearson_r {corr}  jsd {jsd}", r.seeds[0]);
            }
            let a = &summary.aggregate;
            println!(
                "aggregate    pearson_r {}  jsd {}",
                a.pearson_r.map_or_else(|| "-".into(), |v| format!("{v:.4}")),
                a.jsd.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
            );
            println!("wrote {} files under {}", summary.files.len(), opts.out.display());
            exit::SUCCESS
        }
        Err(RunError::Invalid(e)) => {
            print_error(&e);
            exit::USAGE
        }
        Err(RunError::Failed(e)) => {
            print_error(&e);
            exit::CHECK_FAILED
        }
    }
}

fn cmd_verify(args: VerifyArgs) -> i32 {
    let opts = VerifyOptions {
        filter: args.filter,
        power_tol: args.power_tol,
        ic_runs: args.ic_runs,
        phase_runs: args.phase_runs,
        ..VerifyOptions::default()
    };
    let results = match run_checks(&opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::USAGE;
        }
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&results).expect("results serialize"));
    } else {
        print!("{}", format_table(&results));
    }
    if results.iter().all(|r| r.passed) {
        exit::SUCCESS
    } else {
        exit::CHECK_FAILED
    }
}

fn cmd_serve(args: ServeArgs) -> anyhow::Result<()> {
    let spec = args.provider.spec()?;
    let state = AppState::new(provider_factory(spec), args.persist.clone());
    let restored = state.restore().context("restoring persisted simulations")?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.bind)
            .await
            .with_context(|| format!("cannot bind {}", args.bind))?;
        tracing::info!(
            "listening on http://{}/v1 ({restored} simulations restored)",
            listener.local_addr()?
        );
        cascade_service::serve(listener, state, async {
            shutdown_signal().await;
            tracing::info!("shutting down");
        })
        .await?;
        Ok(())
    })
}

/// Resolves on Ctrl-C, or on SIGTERM where available.
async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}
