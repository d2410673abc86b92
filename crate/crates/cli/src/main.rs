//! Command-line entry point: parse a run config, execute runs and sweeps,
//! serve as a remote TCP agent, or validate a config file.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use swarmopt::coordinator::{self, RunConfig};
use swarmopt::objective::ObjectiveSpec;
use swarmopt::transport;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_CONNECT: u8 = 4;

#[derive(Parser)]
#[command(name = "swarmopt", about = "Multi-agent asynchronous optimization runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run from a JSON config file
    Run { config: PathBuf },
    /// Run the agents x delays x repeats cross-product and emit CSV
    Sweep {
        config: PathBuf,
        /// Comma-separated agent counts
        #[arg(long, value_delimiter = ',', required = true)]
        agents: Vec<u32>,
        /// Comma-separated injected delays in seconds
        #[arg(long, value_delimiter = ',', required = true)]
        delays: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        repeats: u64,
        /// Output CSV path; a per-cell median summary lands next to it
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve evaluations as a remote worker over TCP
    Agent {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        objective: String,
        /// JSON object of objective parameters, e.g. '{"delay_s":1.0}'
        #[arg(long, default_value = "{}")]
        params: String,
        #[arg(long, default_value_t = 0)]
        agent_id: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a config file without running it
    Validate { config: PathBuf },
}

fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut config: RunConfig =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Ok(seed) = std::env::var("SWARMOPT_SEED") {
        config.seed = seed
            .parse()
            .map_err(|e| format!("SWARMOPT_SEED: {e}"))?;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn cmd_run(path: &Path) -> ExitCode {
    let config = match load_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match coordinator::run(&config) {
        Ok(r) => {
            println!(
                "best_value={} best_point={:?} wall_time_s={:.3} trials={}",
                r.best_value,
                r.best_point.coords(),
                r.wall_time_s,
                r.trials.len()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_validate(path: &Path) -> ExitCode {
    match load_config(path) {
        Ok(_) => {
            println!("ok");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

struct SweepRow {
    agents: u32,
    delay_s: f64,
    repeat: u64,
    seed: u64,
    wall_time_s: f64,
    best_value: f64,
    status: &'static str,
}

fn cmd_sweep(
    path: &Path,
    agents: &[u32],
    delays: &[f64],
    repeats: u64,
    out: &Path,
) -> ExitCode {
    let base = match load_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut rows = Vec::new();
    for &n_agents in agents {
        for &delay_s in delays {
            for repeat in 0..repeats {
                let mut config = base.clone();
                config.num_agents = n_agents;
                config.seed = base.seed + repeat;
                config.log_path = None;
                if delay_s > 0.0 {
                    config
                        .objective
                        .params
                        .insert("delay_s".to_string(), delay_s.into());
                }
                let row = match config.validate().and_then(|()| coordinator::run(&config)) {
                    Ok(r) => SweepRow {
                        agents: n_agents,
                        delay_s,
                        repeat,
                        seed: config.seed,
                        wall_time_s: r.wall_time_s,
                        best_value: r.best_value,
                        status: "ok",
                    },
                    Err(e) => {
                        eprintln!("sweep cell agents={n_agents} delay={delay_s} repeat={repeat} failed: {e}");
                        SweepRow {
                            agents: n_agents,
                            delay_s,
                            repeat,
                            seed: config.seed,
                            wall_time_s: f64::NAN,
                            best_value: f64::NAN,
                            status: "failed",
                        }
                    }
                };
                rows.push(row);
            }
        }
    }
    if let Err(e) = write_sweep_csvs(&rows, agents, delays, out) {
        eprintln!("csv write failed: {e}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    println!("wrote {} rows to {}", rows.len(), out.display());
    ExitCode::SUCCESS
}

fn write_sweep_csvs(
    rows: &[SweepRow],
    agents: &[u32],
    delays: &[f64],
    out: &Path,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(out)?;
    writeln!(f, "agents,delay_s,repeat,seed,wall_time_s,best_value,status")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.agents, r.delay_s, r.repeat, r.seed, r.wall_time_s, r.best_value, r.status
        )?;
    }

    let summary_path = out.with_extension("summary.csv");
    let mut s = std::fs::File::create(&summary_path)?;
    writeln!(s, "agents,delay_s,median_wall_time_s,median_best_value,ok_runs")?;
    for &a in agents {
        for &d in delays {
            let mut times: Vec<f64> = rows
                .iter()
                .filter(|r| r.agents == a && r.delay_s == d && r.status == "ok")
                .map(|r| r.wall_time_s)
                .collect();
            let mut bests: Vec<f64> = rows
                .iter()
                .filter(|r| r.agents == a && r.delay_s == d && r.status == "ok")
                .map(|r| r.best_value)
                .collect();
            times.sort_by(|x, y| x.partial_cmp(y).unwrap());
            bests.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let median = |v: &[f64]| {
                if v.is_empty() {
                    f64::NAN
                } else {
                    v[v.len() / 2]
                }
            };
            writeln!(
                s,
                "{},{},{},{},{}",
                a,
                d,
                median(&times),
                median(&bests),
                times.len()
            )?;
        }
    }
    Ok(())
}

fn cmd_agent(connect: &str, objective: &str, params: &str, agent_id: u32, seed: u64) -> ExitCode {
    let params: serde_json::Map<String, serde_json::Value> = match serde_json::from_str(params) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("bad --params: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let spec = ObjectiveSpec {
        name: objective.to_string(),
        params,
    };
    let binding = match spec.resolve() {
        Ok(b) => b,
        Err(e) => {
            eprintln!("objective error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match transport::run_tcp_agent(connect, agent_id, &binding, seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(transport::TransportError::Io(e)) => {
            eprintln!("connect failed: {e}");
            ExitCode::from(EXIT_CONNECT)
        }
        Err(e) => {
            eprintln!("agent failed: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => cmd_run(&config),
        Command::Validate { config } => cmd_validate(&config),
        Command::Sweep {
            config,
            agents,
            delays,
            repeats,
            out,
        } => {
            if repeats < 1 {
                eprintln!("config error: --repeats must be >= 1");
                return ExitCode::from(EXIT_CONFIG);
            }
            cmd_sweep(&config, &agents, &delays, repeats, &out)
        }
        Command::Agent {
            connect,
            objective,
            params,
            agent_id,
            seed,
        } => cmd_agent(&connect, &objective, &params, agent_id, seed),
    }
}
