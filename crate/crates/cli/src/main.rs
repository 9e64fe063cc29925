use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use semsafe_core::grounding::dump_grounding;
use semsafe_core::harness::{run_batch, write_batch, write_ndjson, Episode, EpisodeOptions, Method};
use semsafe_core::language::{
    EndpointConfig, HttpChat, InstructionParser, LimitDefaults, LlmParser, RobotCapabilities, RuleParser,
};
use semsafe_core::scenario::Scenario;

use semsafe_cli::server::{router, AppState, ServerConfig};

#[derive(Parser)]
#[command(name = "semsafe", version, about = "Semantic safety filtering for a simulated ground robot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParserKind {
    Rules,
    /// Chat endpoint from SEMSAFE_LLM_URL / SEMSAFE_LLM_MODEL / SEMSAFE_LLM_KEY.
    Llm,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one episode and prints its summary.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "Ours-LR")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Writes the full record as one JSON line.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "rules")]
        parser: ParserKind,
    },
    /// Runs every scenario x method x seed and writes records and metrics.
    Batch {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        trials: u64,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of methods.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// Serves live episodes over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, default_value = "scenarios/manifest.toml")]
        manifest: PathBuf,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, value_enum, default_value = "rules")]
        parser: ParserKind,
    },
    /// Runs an episode up to a time and writes grounding images.
    DumpGrounding {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "grounding_dump")]
        out: PathBuf,
        #[arg(long, default_value = "Ours-LR")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulated seconds; defaults to the end of the episode.
        #[arg(long)]
        until: Option<f64>,
    },
}

fn make_parser(kind: ParserKind) -> Result<Arc<dyn InstructionParser>> {
    Ok(match kind {
        ParserKind::Rules => Arc::new(RuleParser::default()),
        ParserKind::Llm => {
            let cfg = EndpointConfig::from_env().context("SEMSAFE_LLM_URL is not set")?;
            let chat = HttpChat::new(cfg)?;
            Arc::new(LlmParser::new(chat, RobotCapabilities::default(), LimitDefaults::default()))
        }
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, method, seed, out, parser } => {
            let s = Arc::new(Scenario::load(&scenario)?);
            let mut ep = Episode::new(s, method, seed, EpisodeOptions::default(), make_parser(parser)?);
            ep.run_to_end();
            let rec = ep.finish();
            if let Some(path) = out {
                write_ndjson(&path, [&rec])?;
            }
            println!(
                "{} {} seed={} outcome={:?} t={:.2} min_l_sem={:.3} steps={}",
                rec.scenario,
                rec.method,
                rec.seed,
                rec.outcome,
                rec.duration,
                rec.min_l_sem,
                rec.rows.len()
            );
        }
        Command::Batch { manifest, trials, out, methods } => {
            let methods = methods.unwrap_or_else(|| Method::ALL.to_vec());
            let b = run_batch(&manifest, &methods, trials, &EpisodeOptions::default())?;
            write_batch(&out, &b)?;
            for row in &b.summary.overall {
                println!(
                    "{:<13} success={:.2} semantic={:.2} timeout_perception={:.2} timeout_filter={:.2} latency_ms={:.3}",
                    row.method.as_str(),
                    row.success_rate,
                    row.semantic_safety_rate,
                    row.timeout_perception_rate,
                    row.timeout_safety_filter_rate,
                    row.mean_latency_ms
                );
            }
            for f in &b.failures {
                eprintln!("failed: {} {} seed {}: {}", f.scenario, f.method, f.seed, f.message);
            }
            if !b.failures.is_empty() {
                bail!("{} episodes failed", b.failures.len());
            }
        }
        Command::Serve { bind, manifest, speed, parser } => {
            // built outside the runtime: the LLM transport is blocking
            let parser = make_parser(parser)?;
            let state =
                Arc::new(AppState::from_manifest(&manifest, parser, ServerConfig { speed, ..Default::default() })?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
                eprintln!("listening on {}", listener.local_addr()?);
                let app = router(state.clone());
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                state.shutdown();
                anyhow::Ok(())
            })?;
        }
        Command::DumpGrounding { scenario, out, method, seed, until } => {
            let s = Arc::new(Scenario::load(&scenario)?);
            let mut ep = Episode::with_rule_parser(s.clone(), method, seed);
            let t_end = until.unwrap_or(f64::INFINITY);
            while ep.time() < t_end - 1e-9 && ep.step() {}
            let meta = dump_grounding(ep.grounding(), &s.world, &out)?;
            println!("wrote {} layers to {} (t={:.2})", meta.entries.len(), out.display(), ep.time());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
