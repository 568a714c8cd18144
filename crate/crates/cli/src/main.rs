use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use curveroute::eval::Method;
use curveroute::predictors::QualityPredictor;
use curveroute::router::RoutingMode;
use curveroute_cli::commands::{cmd_eval, cmd_gen, cmd_route, cmd_train, open_checkpoint, QuerySource};
use curveroute_cli::service::{self, INLINE_QUERY_ID};
use curveroute_cli::{AppConfig, CliError};

#[derive(Parser)]
#[command(name = "curveroute", version, about = "Route queries across (model, token budget) pairs")]
struct Cli {
    /// TOML config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scenario JSON file.
    Gen { scenario: PathBuf, out_dir: PathBuf },
    /// Train the per-(model, budget) quality heads and write a checkpoint.
    Train(TrainArgs),
    /// Route queries and print decision JSON, one per line.
    Route(RouteArgs),
    /// Evaluate one method and write its report.
    Sweep {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, default_value = "curve")]
        method: Method,
    },
    /// Evaluate methods (all by default) and write report files.
    Eval {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
    },
    /// Serve POST /route and GET /health.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        port: Option<u32>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint to write.
    #[arg(long, alias = "out")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    budget_limit: Option<u32>,
    #[arg(long)]
    mode: Option<RoutingMode>,
}

#[derive(Args)]
struct RouteArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// queries.jsonl to route.
    #[arg(long, conflicts_with = "embedding")]
    queries: Option<PathBuf>,
    /// Comma-separated embedding of a single query.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    embedding: Option<Vec<f64>>,
    #[arg(long, default_value = INLINE_QUERY_ID)]
    query_id: String,
    #[arg(long, default_value_t = 0)]
    input_tokens: u64,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda_points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    policy: PolicyArgs,
}

fn apply_policy(cfg: &mut AppConfig, a: &PolicyArgs) {
    if let Some(v) = a.lambda {
        cfg.policy.lambda = v;
    }
    if let Some(v) = a.budget_limit {
        cfg.policy.budget_limit = v;
    }
    if let Some(v) = a.mode {
        cfg.policy.mode = v;
    }
}

fn apply_data(cfg: &mut AppConfig, a: &DataArgs) {
    if let Some(d) = &a.data {
        cfg.data.dir = Some(d.clone());
    }
}

fn apply_eval(cfg: &mut AppConfig, a: &EvalArgs) -> Result<PathBuf, CliError> {
    if let Some(c) = &a.checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    apply_data(cfg, &a.data);
    apply_policy(cfg, &a.policy);
    if let Some(n) = a.lambda_points {
        cfg.eval.lambda_points = n;
    }
    if let Some(s) = a.seed {
        cfg.eval.seeds = vec![s];
    }
    a.out
        .clone()
        .or_else(|| cfg.eval.out_dir.clone())
        .ok_or_else(|| CliError::Input("no report directory; pass --out or set eval.out_dir".into()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = AppConfig::load_or_default(cli.config.as_deref())?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Gen { scenario, out_dir } => {
            cmd_gen(&scenario, &out_dir, &mut out)?;
        }
        Command::Train(a) => {
            apply_data(&mut cfg, &a.data);
            if let Some(c) = a.checkpoint {
                cfg.checkpoint = Some(c);
            }
            let t = &mut cfg.train;
            t.epochs = a.epochs.unwrap_or(t.epochs);
            t.learning_rate = a.lr.unwrap_or(t.learning_rate);
            t.batch_size = a.batch_size.unwrap_or(t.batch_size);
            t.seed = a.seed.unwrap_or(t.seed);
            if let Some(h) = a.hidden {
                t.hidden = h;
            }
            cmd_train(&cfg, &mut out)?;
        }
        Command::Route(a) => {
            if let Some(c) = a.checkpoint {
                cfg.checkpoint = Some(c);
            }
            apply_policy(&mut cfg, &a.policy);
            let src = match (a.queries, a.embedding) {
                (Some(path), None) => QuerySource::File(path),
                (None, Some(embedding)) => QuerySource::Inline {
                    query_id: a.query_id,
                    embedding,
                },
                _ => return Err(CliError::Input("pass exactly one of --queries or --embedding".into())),
            };
            let mut policy = cfg.policy();
            policy.input_tokens = a.input_tokens;
            cmd_route(&cfg, &src, &policy, &mut out)?;
        }
        Command::Sweep { eval, method } => {
            let dir = apply_eval(&mut cfg, &eval)?;
            cmd_eval(&cfg, &[method], &dir, &mut out)?;
        }
        Command::Eval { eval, methods } => {
            let dir = apply_eval(&mut cfg, &eval)?;
            if !methods.is_empty() {
                cfg.eval.methods = methods;
            }
            cmd_eval(&cfg, &cfg.methods(), &dir, &mut out)?;
        }
        Command::Serve { checkpoint, bind, port } => {
            if let Some(c) = checkpoint {
                cfg.checkpoint = Some(c);
            }
            if let Some(b) = bind {
                cfg.service.bind = b;
            }
            if let Some(p) = port {
                cfg.service.port = p;
            }
            let (host, port) = cfg.service_addr()?;
            let model = Arc::new(open_checkpoint(cfg.checkpoint_path()?)?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Input(e.to_string()))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .map_err(|e| CliError::Input(format!("cannot bind {host}:{port}: {e}")))?;
                let addr = listener.local_addr().map_err(|e| CliError::Input(e.to_string()))?;
                let _ = writeln!(out, "listening on {addr} ({} models)", model.pool().len());
                let _ = out.flush();
                service::serve(listener, model, service::shutdown_signal())
                    .await
                    .map_err(|e| CliError::Input(format!("server error: {e}")))
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
