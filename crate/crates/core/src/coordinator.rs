//! The central solver event loop: initial-point dispatch and collection,
//! then batched heuristic search, over any strategy and transport.

use crate::objective::{ObjectiveError, ObjectiveSpec};
use crate::space::{Point, SearchSpace};
use crate::strategy::{Strategy, StrategyError, StrategyKind, Trial, TrialState};
use crate::transport::{
    self, Message, PortPair, TransportError,
};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::time::{Duration, Instant};
use thiserror::Error;

pub const LOG_SCHEMA_VERSION: u32 = 1;
const POLL_SLEEP: Duration = Duration::from_millis(1);

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportKind {
    InProcess,
    Tcp { listen: String },
}

/// Full experiment description; also embedded verbatim in the log header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub space: SearchSpace,
    pub strategy: StrategyKind,
    pub num_agents: u32,
    pub num_ips: usize,
    pub num_iter: usize,
    pub seed: u64,
    pub transport: TransportKind,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub log_path: Option<PathBuf>,
}

impl RunConfig {
    /// Enforces num_iter >= num_ips >= num_agents >= 1 plus grid capacity.
    pub fn validate(&self) -> Result<(), RunError> {
        if self.num_agents < 1 {
            return Err(RunError::Config("num_agents must be >= 1".into()));
        }
        if self.num_ips < 1 {
            return Err(RunError::Config("num_ips must be >= 1".into()));
        }
        if self.num_ips < self.num_agents as usize {
            return Err(RunError::Config(format!(
                "num_ips ({}) must be >= num_agents ({}): every agent receives a seed point",
                self.num_ips, self.num_agents
            )));
        }
        if self.num_iter < self.num_ips {
            return Err(RunError::Config(format!(
                "num_iter ({}) must be >= num_ips ({})",
                self.num_iter, self.num_ips
            )));
        }
        if matches!(self.strategy, StrategyKind::Grid) {
            match self.space.grid_size() {
                None => {
                    return Err(RunError::Config(
                        "grid strategy requires an all-discrete space".into(),
                    ))
                }
                Some(size) if self.num_iter > size => {
                    return Err(RunError::Config(format!(
                        "num_iter ({}) exceeds grid size ({size})",
                        self.num_iter
                    )))
                }
                Some(_) => {}
            }
        }
        self.objective.resolve()?;
        Ok(())
    }
}

/// Per-trial log record; timestamps are seconds from run start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub agent_id: u32,
    pub point: Vec<f64>,
    #[serde(with = "real_or_inf")]
    pub value: f64,
    pub eval_duration_s: f64,
    pub dispatched_at_s: f64,
    pub completed_at_s: f64,
    pub phase: String,
    pub batch: u64,
}

/// Serializes +inf as the string "inf" so failed evaluations survive JSON.
mod real_or_inf {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            v.serialize(s)
        } else {
            "inf".serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad value `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Completed trials in completion order.
    pub trials: Vec<TrialRecord>,
    pub best_point: Point,
    pub best_value: f64,
    pub wall_time_s: f64,
    pub per_agent_counts: Vec<usize>,
}

struct LogWriter {
    out: Option<std::io::BufWriter<std::fs::File>>,
}

impl LogWriter {
    fn open(config: &RunConfig) -> Result<Self, RunError> {
        let Some(path) = &config.log_path else {
            return Ok(LogWriter { out: None });
        };
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        let header = serde_json::json!({
            "schema": LOG_SCHEMA_VERSION,
            "config": config,
        });
        writeln!(out, "{header}")?;
        out.flush()?;
        Ok(LogWriter { out: Some(out) })
    }

    fn append(&mut self, rec: &TrialRecord) -> Result<(), RunError> {
        if let Some(out) = &mut self.out {
            writeln!(out, "{}", serde_json::to_string(rec).unwrap())?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), RunError> {
        if let Some(out) = &mut self.out {
            out.flush()?;
        }
        Ok(())
    }
}

/// Writes completed trials as a JSONL file: one header line with the config,
/// then one object per trial in completion order.
pub fn write_log(
    config: &RunConfig,
    trials: &[TrialRecord],
    path: &std::path::Path,
) -> Result<(), RunError> {
    let mut cfg = config.clone();
    cfg.log_path = Some(path.to_path_buf());
    let mut w = LogWriter::open(&cfg)?;
    for t in trials {
        w.append(t)?;
    }
    w.flush()
}

/// Parsed log: header config plus trial records.
pub fn read_log(path: &std::path::Path) -> Result<(RunConfig, Vec<TrialRecord>), RunError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: serde_json::Value = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| RunError::Config("empty log".into()))?,
    )
    .map_err(|e| RunError::Config(e.to_string()))?;
    let config: RunConfig = serde_json::from_value(header["config"].clone())
        .map_err(|e| RunError::Config(e.to_string()))?;
    let mut trials = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        trials.push(serde_json::from_str(line).map_err(|e| RunError::Config(e.to_string()))?);
    }
    Ok((config, trials))
}

struct Loop<'a> {
    ports: &'a mut [PortPair],
    strategy: &'a mut Strategy,
    clock: Instant,
    next_trial_id: u64,
    /// trial in flight per agent: (trial_id, point, dispatched_at)
    outstanding: Vec<Option<(u64, Point, f64)>>,
    records: Vec<TrialRecord>,
    log: LogWriter,
    per_agent_counts: Vec<usize>,
}

impl<'a> Loop<'a> {
    fn now(&self) -> f64 {
        self.clock.elapsed().as_secs_f64()
    }

    fn dispatch(&mut self, agent_index: usize, point: Point) -> Result<(), RunError> {
        // protocol invariant: at most one outstanding candidate per agent
        assert!(
            self.outstanding[agent_index].is_none(),
            "agent {agent_index} already has an outstanding candidate"
        );
        let trial_id = self.next_trial_id;
        self.next_trial_id += 1;
        let msg = Message::Candidate {
            trial_id,
            coords: point.coords().to_vec(),
        };
        self.ports[agent_index].to_agent.send(&msg)?;
        self.outstanding[agent_index] = Some((trial_id, point, self.now()));
        Ok(())
    }

    /// Probes one agent; on a ready Result, tells the strategy and logs the
    /// trial. Returns true if a result was consumed.
    fn poll_agent(&mut self, agent_index: usize, phase: &str, batch: u64) -> Result<bool, RunError> {
        if !self.ports[agent_index].from_agent.probe()? {
            return Ok(false);
        }
        let msg = self.ports[agent_index].from_agent.recv()?;
        let (trial_id, value, duration_s) = match msg {
            Message::Result { trial_id, value, duration_s } => (trial_id, value, duration_s),
            other => {
                return Err(RunError::Transport(TransportError::Malformed(format!(
                    "coordinator received unexpected {other:?}"
                ))))
            }
        };
        let (expected_id, point, dispatched_at) = self.outstanding[agent_index]
            .take()
            .unwrap_or_else(|| panic!("result from idle agent {agent_index}"));
        assert_eq!(trial_id, expected_id, "result out of order for agent {agent_index}");

        let agent_id = self.ports[agent_index].agent_id;
        let trial = Trial {
            trial_id,
            point: point.clone(),
            value,
            eval_duration_s: duration_s,
            agent_id,
            state: TrialState::Completed,
        };
        self.strategy.tell(&trial)?;
        self.per_agent_counts[agent_index] += 1;
        let rec = TrialRecord {
            trial_id,
            agent_id,
            point: point.0,
            value,
            eval_duration_s: duration_s,
            dispatched_at_s: dispatched_at,
            completed_at_s: self.now(),
            phase: phase.to_string(),
            batch,
        };
        self.log.append(&rec)?;
        self.records.push(rec);
        Ok(true)
    }

    /// Algorithm 1: seed every agent with one initial point, then poll all
    /// agents, refilling from the initial-point queue, until all `num_ips`
    /// initial results are in.
    fn phase_initial(&mut self, num_ips: usize) -> Result<(), RunError> {
        let num_agents = self.ports.len();
        let mut queue: std::collections::VecDeque<Point> =
            self.strategy.initial_points(num_ips)?.into();
        for i in 0..num_agents {
            let p = queue.pop_front().expect("num_ips >= num_agents validated");
            self.dispatch(i, p)?;
        }
        let mut completed = 0usize;
        while completed < num_ips {
            let mut any = false;
            for i in 0..num_agents {
                if self.outstanding[i].is_none() {
                    continue;
                }
                if self.poll_agent(i, "initial", 0)? {
                    completed += 1;
                    any = true;
                    if let Some(p) = queue.pop_front() {
                        self.dispatch(i, p)?;
                    }
                }
            }
            if !any {
                std::thread::sleep(POLL_SLEEP);
            }
        }
        self.log.flush()?;
        Ok(())
    }

    /// Algorithm 2: batched heuristic search with a synchronous barrier —
    /// a new batch starts only when the previous one fully returned.
    fn phase_heuristic(&mut self, num_iter: usize, num_ips: usize) -> Result<(), RunError> {
        let num_agents = self.ports.len();
        let mut completed = num_ips;
        let mut batch_no = 0u64;
        while completed < num_iter {
            let num_points = (num_iter - completed).min(num_agents);
            if num_points == 0 {
                break;
            }
            let points = self.strategy.ask(num_points)?;
            if points.is_empty() {
                return Err(RunError::Config(
                    "strategy exhausted before num_iter trials".into(),
                ));
            }
            batch_no += 1;
            let batch_size = points.len();
            for (i, p) in points.into_iter().enumerate() {
                self.dispatch(i, p)?;
            }
            let mut num_complete = 0usize;
            while num_complete < batch_size {
                let mut any = false;
                for i in 0..batch_size {
                    if self.outstanding[i].is_none() {
                        continue;
                    }
                    if self.poll_agent(i, "heuristic", batch_no)? {
                        num_complete += 1;
                        completed += 1;
                        any = true;
                    }
                }
                if !any {
                    std::thread::sleep(POLL_SLEEP);
                }
            }
            self.log.flush()?;
        }
        Ok(())
    }
}

/// Runs the full experiment: spawn/accept agents, execute both phases, send
/// Shutdown, write the log, and report the best trial.
pub fn run(config: &RunConfig) -> Result<RunResult, RunError> {
    config.validate()?;
    let objective = config.objective.resolve()?;
    match &config.transport {
        TransportKind::InProcess => {
            let (mut ports, handles) =
                transport::spawn_in_process_agents(&objective, config.num_agents, config.seed)?;
            let result = run_with_ports(config, &mut ports);
            shutdown_all(&mut ports);
            handles.join();
            result
        }
        TransportKind::Tcp { listen } => {
            let listener = TcpListener::bind(listen)?;
            let mut ports = transport::accept_tcp_agents(&listener, config.num_agents)?;
            let result = run_with_ports(config, &mut ports);
            shutdown_all(&mut ports);
            result
        }
    }
}

fn shutdown_all(ports: &mut [PortPair]) {
    for pair in ports.iter_mut() {
        let _ = pair.to_agent.send(&Message::Shutdown);
    }
}

/// Executes the coordinator loop over pre-established ports. Useful for
/// driving custom transports; `run` is the usual entry point.
pub fn run_with_ports(config: &RunConfig, ports: &mut [PortPair]) -> Result<RunResult, RunError> {
    assert_eq!(ports.len(), config.num_agents as usize);
    let mut strategy = Strategy::new(&config.strategy, config.space.clone(), config.seed)?;
    let log = LogWriter::open(config)?;
    let num_agents = ports.len();
    let mut lp = Loop {
        ports,
        strategy: &mut strategy,
        clock: Instant::now(),
        next_trial_id: 0,
        outstanding: vec![None; num_agents],
        records: Vec::new(),
        log,
        per_agent_counts: vec![0; num_agents],
    };
    let phase_result = lp
        .phase_initial(config.num_ips)
        .and_then(|()| lp.phase_heuristic(config.num_iter, config.num_ips));
    // flush whatever completed, even on abort
    let _ = lp.log.flush();
    phase_result?;

    let wall_time_s = lp.now();
    let records = lp.records;
    let per_agent_counts = lp.per_agent_counts;
    let (best_point, best_value) = strategy.best()?;
    Ok(RunResult {
        trials: records,
        best_point,
        best_value,
        wall_time_s,
        per_agent_counts,
    })
}
