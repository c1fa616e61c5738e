//! `evolvesim`: run simulations, analyse their logs and serve a live run.
//!
//! Machine output goes to stdout, diagnostics to stderr. Exit codes: 0 ok,
//! 1 I/O or backend failure, 2 bad configuration or input, 3 corrupt log,
//! 4 agent sets differ.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use evolvesim_core::bfi::BfiScores;
use evolvesim_core::environment::load_world_with;
use evolvesim_core::evaluation::{self, EvalError};
use evolvesim_core::simkernel::{
    read_log, Ablation, BackendChoice, ConfigError, EventLog, Kernel, KernelError, LogError, LogRecord, RunConfig,
};
use evolvesim_server::ServerOptions;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "evolvesim", version, about = "Agents with evolving personalities in a deterministic sandbox")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run a simulation to completion and write its log.
    Run {
        #[command(flatten)]
        run: RunArgs,
        /// Log file to write.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Personality change, goal counts and activity per agent.
    Metrics {
        log: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Administer the questionnaire again over a finished log's structures.
    Bfi {
        log: PathBuf,
        /// Backend to use instead of the one the log was recorded with.
        #[arg(long, value_parser = parse_backend)]
        backend: Option<BackendChoice>,
        #[arg(long)]
        json: bool,
    },
    /// Side-by-side metrics of two logs over the same agents.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Rate groups from evaluator rankings (CSV: evaluator_id,first,second,...).
    Rank {
        ratings: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve a live run over HTTP.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Log file to write.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Pause between unattended ticks after a resume.
        #[arg(long, default_value_t = 250)]
        tick_ms: u64,
    },
    /// Check a world CSV and list its places.
    ValidateWorld {
        csv: PathBuf,
        #[arg(long, default_value_t = 15)]
        tick_minutes: u32,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration; the bundled scenario when absent.
    config: Option<PathBuf>,
    /// Days to simulate.
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// scripted or http (LM_BASE_URL, LM_MODEL, LM_API_KEY).
    #[arg(long, value_parser = parse_backend)]
    backend: Option<BackendChoice>,
    /// Comma list of growth, insight, feelings, simple-character.
    #[arg(long)]
    ablate: Option<String>,
    /// World CSV replacing the configured one.
    #[arg(long)]
    world: Option<PathBuf>,
}

fn parse_backend(s: &str) -> Result<BackendChoice, String> {
    match s {
        "scripted" => Ok(BackendChoice::Scripted),
        "http" => Ok(BackendChoice::Http),
        _ => Err(format!("unknown backend {s:?} (scripted or http)")),
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::new(2, e.to_string())
    }
}

impl From<KernelError> for Failure {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::Config(c) => c.into(),
            KernelError::World(_) | KernelError::Character(_) => Self::new(2, e.to_string()),
            _ => Self::new(1, e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::AgentMismatch { .. } => Self::new(4, e.to_string()),
            EvalError::Ratings { .. } => Self::new(2, e.to_string()),
            EvalError::Bfi(_) => Self::new(1, e.to_string()),
            EvalError::Config(c) => c.into(),
            _ => Self::new(3, e.to_string()),
        }
    }
}

fn load_log(path: &Path) -> Result<Vec<LogRecord>, Failure> {
    read_log(path).map_err(|e| match e {
        LogError::Corrupt { .. } => Failure::new(3, format!("{}: {e}", path.display())),
        LogError::Io(_) => Failure::new(1, format!("{}: {e}", path.display())),
    })
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, Failure> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json(&read_text(p)?).map_err(|e| Failure::new(2, format!("{}: {e}", p.display())))?,
            None => RunConfig::default_scenario(),
        };
        if let Some(d) = self.days {
            c.days = d;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(b) = self.backend {
            c.backend = b;
        }
        if let Some(a) = &self.ablate {
            c.ablation = Ablation::parse(a)?;
        }
        if let Some(w) = &self.world {
            c.world = Some(w.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn bfi_table(scores: &BTreeMap<String, Vec<BfiScores>>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14} {:>4} {:>4} {:>4} {:>4} {:>4} {:>4}", "agent", "day", "EXT", "AGR", "CON", "NEU", "OPEN");
    for (id, days) in scores {
        for b in days {
            let v = b.scores;
            let _ = writeln!(
                s,
                "{:<14} {:>4} {:>4} {:>4} {:>4} {:>4} {:>4}",
                id, b.day, v.extraversion, v.agreeableness, v.conscientiousness, v.neuroticism, v.openness
            );
        }
    }
    s
}

fn execute(cmd: Cmd) -> Result<String, Failure> {
    match cmd {
        Cmd::Run { run, out, json } => {
            let config = run.config()?;
            let path = out.unwrap_or_else(|| PathBuf::from(format!("evolvesim-{}.jsonl", config.seed)));
            let s = evolvesim_core::simkernel::run_simulation(config, &path)?;
            Ok(if json {
                pretty(&json!({"log": s.log_path, "hash": s.hash, "records": s.records}))
            } else {
                format!("log {}\nhash {}\nrecords {}", s.log_path.display(), s.hash, s.records)
            })
        }
        Cmd::Metrics { log, json } => {
            let report = evaluation::metrics_report(&load_log(&log)?)?;
            Ok(if json { pretty(&report) } else { report.table() })
        }
        Cmd::Bfi { log, backend, json } => {
            let records = load_log(&log)?;
            let mut config = evaluation::run_config(&records)?;
            if let Some(b) = backend {
                config.backend = b;
            }
            let scores = evaluation::reassess_bfi(&records, &config.client()?)?;
            Ok(if json { pretty(&scores) } else { bfi_table(&scores) })
        }
        Cmd::Compare { a, b, json } => {
            let ra = evaluation::metrics_report(&load_log(&a)?)?;
            let rb = evaluation::metrics_report(&load_log(&b)?)?;
            let c = evaluation::compare(&ra, &rb)?;
            Ok(if json { pretty(&c) } else { c.table() })
        }
        Cmd::Rank { ratings, json } => {
            let f = std::fs::File::open(&ratings).map_err(|e| Failure::new(2, format!("{}: {e}", ratings.display())))?;
            let report = evaluation::ranking_report(&evaluation::read_rankings(f)?)?;
            Ok(if json { pretty(&report) } else { report.table() })
        }
        Cmd::Serve { run, host, port, out, tick_ms } => {
            let config = run.config()?;
            let path = out.unwrap_or_else(|| PathBuf::from(format!("evolvesim-serve-{}.jsonl", config.seed)));
            let log = EventLog::create(&path).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))?;
            let kernel = Kernel::new(config, log)?;
            let addr: SocketAddr = format!("{host}:{port}").parse().map_err(|e| Failure::new(2, format!("address {host}:{port}: {e}")))?;
            let options = ServerOptions { tick_delay: Duration::from_millis(tick_ms) };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(1, e.to_string()))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                let bound = listener.local_addr()?;
                println!("http://{bound}");
                eprintln!("serving, log at {}", path.display());
                evolvesim_server::serve_on(listener, kernel, options).await
            })
            .map_err(|e| Failure::new(1, e.to_string()))?;
            Ok(String::new())
        }
        Cmd::ValidateWorld { csv, tick_minutes, json } => {
            let text = read_text(&csv)?;
            let grid = RunConfig { tick_minutes, ..RunConfig::default_scenario() }.grid();
            match load_world_with(text.as_bytes(), grid) {
                Ok(world) => {
                    let names: Vec<String> = world.places.iter().map(|p| format!("{}/{}", p.building, p.name)).collect();
                    Ok(if json {
                        pretty(&json!({"valid": true, "places": names}))
                    } else {
                        format!("ok, {} places\n{}", names.len(), names.join("\n"))
                    })
                }
                Err(rows) => {
                    if json {
                        println!("{}", pretty(&json!({"valid": false, "rows": rows})));
                    }
                    let lines: Vec<String> = rows.iter().map(ToString::to_string).collect();
                    Err(Failure::new(2, format!("{}: invalid world\n{}", csv.display(), lines.join("\n"))))
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(out) => {
            if !out.is_empty() {
                // a closed pipe (`| head`) is not an error worth reporting
                let _ = writeln!(std::io::stdout().lock(), "{}", out.trim_end());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backends_parse() {
        assert_eq!(parse_backend("http"), Ok(BackendChoice::Http));
        assert!(parse_backend("gpt").is_err());
    }

    #[test]
    fn overrides_apply_over_the_bundled_scenario() {
        let args =
            RunArgs { config: None, days: Some(2), seed: Some(9), backend: None, ablate: Some("growth,insight".into()), world: None };
        let c = args.config().unwrap();
        assert_eq!((c.days, c.seed), (2, 9));
        assert!(c.ablation.disable_growth && c.ablation.disable_insight && !c.ablation.disable_cognitive_feelings);
        let bad = RunArgs { ablate: Some("memory".into()), ..args };
        assert_eq!(bad.config().unwrap_err().code, 2);
    }

    #[test]
    fn error_codes() {
        assert_eq!(Failure::from(EvalError::AgentMismatch { left: vec![], right: vec!["a".into()] }).code, 4);
        assert_eq!(Failure::from(EvalError::NoHeader).code, 3);
        assert_eq!(Failure::from(ConfigError("x".into())).code, 2);
    }
}
