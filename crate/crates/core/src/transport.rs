//! Message-port abstraction between coordinator and agents: paired
//! sending/receiving endpoints with non-blocking probe, over in-process
//! channels or newline-delimited JSON framing on TCP.

use crate::objective::Objective;
use crate::space::Point;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, SyncSender, TryRecvError};
use std::thread::JoinHandle;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("port closed: peer disconnected")]
    PortClosed,
    #[error("recv would block: no message ready (probe first)")]
    WouldBlock,
    #[error("failed to spawn agent {agent_id}: {reason}")]
    AgentSpawnFailure { agent_id: u32, reason: String },
    #[error("malformed wire message: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Wire-level envelope between coordinator and agent.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Candidate { trial_id: u64, coords: Vec<f64> },
    Result { trial_id: u64, value: f64, duration_s: f64 },
    Shutdown,
    /// TCP only: first message from a connecting agent, declaring identity.
    Hello { agent_id: u32 },
}

fn json_real(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        // evaluation-failure sentinel
        serde_json::json!("inf")
    }
}

fn parse_real(v: &serde_json::Value) -> Result<f64, TransportError> {
    if let Some(x) = v.as_f64() {
        return Ok(x);
    }
    if v.as_str() == Some("inf") {
        return Ok(f64::INFINITY);
    }
    Err(TransportError::Malformed(format!("bad real: {v}")))
}

/// Encodes one message as a single-line JSON object (no trailing newline).
pub fn encode(msg: &Message) -> String {
    let v = match msg {
        Message::Candidate { trial_id, coords } => serde_json::json!({
            "type": "candidate",
            "trial_id": trial_id,
            "coords": coords.iter().map(|c| json_real(*c)).collect::<Vec<_>>(),
        }),
        Message::Result { trial_id, value, duration_s } => serde_json::json!({
            "type": "result",
            "trial_id": trial_id,
            "value": json_real(*value),
            "duration_s": duration_s,
        }),
        Message::Shutdown => serde_json::json!({"type": "shutdown"}),
        Message::Hello { agent_id } => serde_json::json!({"type": "hello", "agent_id": agent_id}),
    };
    v.to_string()
}

pub fn decode(line: &str) -> Result<Message, TransportError> {
    let v: serde_json::Value =
        serde_json::from_str(line).map_err(|e| TransportError::Malformed(e.to_string()))?;
    let ty = v["type"]
        .as_str()
        .ok_or_else(|| TransportError::Malformed("missing type".into()))?;
    match ty {
        "candidate" => {
            let trial_id = v["trial_id"]
                .as_u64()
                .ok_or_else(|| TransportError::Malformed("bad trial_id".into()))?;
            let coords = v["coords"]
                .as_array()
                .ok_or_else(|| TransportError::Malformed("bad coords".into()))?
                .iter()
                .map(parse_real)
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Message::Candidate { trial_id, coords })
        }
        "result" => Ok(Message::Result {
            trial_id: v["trial_id"]
                .as_u64()
                .ok_or_else(|| TransportError::Malformed("bad trial_id".into()))?,
            value: parse_real(&v["value"])?,
            duration_s: v["duration_s"]
                .as_f64()
                .ok_or_else(|| TransportError::Malformed("bad duration_s".into()))?,
        }),
        "shutdown" => Ok(Message::Shutdown),
        "hello" => Ok(Message::Hello {
            agent_id: v["agent_id"]
                .as_u64()
                .ok_or_else(|| TransportError::Malformed("bad agent_id".into()))?
                as u32,
        }),
        other => Err(TransportError::Malformed(format!("unknown type `{other}`"))),
    }
}

pub trait SenderPort: Send {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError>;
}

pub trait ReceiverPort: Send {
    /// True iff a message is ready; never blocks, never consumes.
    fn probe(&mut self) -> Result<bool, TransportError>;
    /// Removes and returns the oldest message. Errors with `WouldBlock`
    /// when called without a successful probe.
    fn recv(&mut self) -> Result<Message, TransportError>;
}

/// One bidirectional coordinator<->agent link.
pub struct PortPair {
    pub agent_id: u32,
    pub to_agent: Box<dyn SenderPort>,
    pub from_agent: Box<dyn ReceiverPort>,
}

// ---------------------------------------------------------------------------
// in-process backend

const QUEUE_CAPACITY: usize = 4;

struct ChannelSender(SyncSender<Message>);

impl SenderPort for ChannelSender {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.0
            .try_send(msg.clone())
            .map_err(|_| TransportError::PortClosed)
    }
}

/// Receiver with a one-message peek buffer so probe never consumes.
struct ChannelReceiver {
    rx: Receiver<Message>,
    peeked: Option<Message>,
}

impl ChannelReceiver {
    fn new(rx: Receiver<Message>) -> Self {
        ChannelReceiver { rx, peeked: None }
    }
}

impl ReceiverPort for ChannelReceiver {
    fn probe(&mut self) -> Result<bool, TransportError> {
        if self.peeked.is_some() {
            return Ok(true);
        }
        match self.rx.try_recv() {
            Ok(m) => {
                self.peeked = Some(m);
                Ok(true)
            }
            Err(TryRecvError::Empty) => Ok(false),
            Err(TryRecvError::Disconnected) => Err(TransportError::PortClosed),
        }
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        if let Some(m) = self.peeked.take() {
            return Ok(m);
        }
        match self.rx.try_recv() {
            Ok(m) => Ok(m),
            Err(TryRecvError::Empty) => Err(TransportError::WouldBlock),
            Err(TryRecvError::Disconnected) => Err(TransportError::PortClosed),
        }
    }
}

/// Creates one in-process port pair plus the matching agent-side endpoints.
pub fn loopback_pair(agent_id: u32) -> (PortPair, AgentEndpoints) {
    let (tx_to_agent, rx_at_agent) = mpsc::sync_channel(QUEUE_CAPACITY);
    let (tx_to_coord, rx_at_coord) = mpsc::sync_channel(QUEUE_CAPACITY);
    let pair = PortPair {
        agent_id,
        to_agent: Box::new(ChannelSender(tx_to_agent)),
        from_agent: Box::new(ChannelReceiver::new(rx_at_coord)),
    };
    let endpoints = AgentEndpoints {
        rx: rx_at_agent,
        tx: tx_to_coord,
    };
    (pair, endpoints)
}

/// Agent-side endpoints of an in-process pair.
pub struct AgentEndpoints {
    rx: Receiver<Message>,
    tx: SyncSender<Message>,
}

pub struct AgentHandles {
    handles: Vec<JoinHandle<()>>,
}

impl AgentHandles {
    pub fn join(self) {
        for h in self.handles {
            let _ = h.join();
        }
    }
}

/// Evaluation loop shared by in-process and remote agents: recv a Candidate,
/// evaluate, reply with a Result carrying the measured duration, exit on
/// Shutdown. Failed evaluations reply with the +inf sentinel.
pub fn serve_agent<F, G>(
    objective: &Objective,
    rng: &mut ChaCha8Rng,
    mut recv: F,
    mut send: G,
) -> Result<(), TransportError>
where
    F: FnMut() -> Result<Message, TransportError>,
    G: FnMut(&Message) -> Result<(), TransportError>,
{
    loop {
        match recv()? {
            Message::Candidate { trial_id, coords } => {
                let t0 = Instant::now();
                let value = objective
                    .evaluate(&Point(coords), rng)
                    .unwrap_or(f64::INFINITY);
                let value = if value.is_nan() { f64::INFINITY } else { value };
                send(&Message::Result {
                    trial_id,
                    value,
                    duration_s: t0.elapsed().as_secs_f64(),
                })?;
            }
            Message::Shutdown => return Ok(()),
            other => {
                return Err(TransportError::Malformed(format!(
                    "agent received unexpected {other:?}"
                )))
            }
        }
    }
}

/// RNG for noisy objectives, derived from the run seed and agent identity.
pub fn agent_rng(run_seed: u64, agent_id: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(run_seed ^ (u64::from(agent_id) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Spawns `num_agents` evaluator threads connected over in-process channels.
pub fn spawn_in_process_agents(
    objective: &Objective,
    num_agents: u32,
    run_seed: u64,
) -> Result<(Vec<PortPair>, AgentHandles), TransportError> {
    assert!(num_agents >= 1, "num_agents must be >= 1");
    let mut pairs = Vec::with_capacity(num_agents as usize);
    let mut handles = Vec::with_capacity(num_agents as usize);
    for agent_id in 0..num_agents {
        let (pair, endpoints) = loopback_pair(agent_id);
        let obj = objective.clone();
        let mut rng = agent_rng(run_seed, agent_id);
        let handle = std::thread::Builder::new()
            .name(format!("agent-{agent_id}"))
            .spawn(move || {
                let AgentEndpoints { rx, tx } = endpoints;
                let _ = serve_agent(
                    &obj,
                    &mut rng,
                    || rx.recv().map_err(|_| TransportError::PortClosed),
                    |m| tx.send(m.clone()).map_err(|_| TransportError::PortClosed),
                );
            })
            .map_err(|e| TransportError::AgentSpawnFailure {
                agent_id,
                reason: e.to_string(),
            })?;
        pairs.push(pair);
        handles.push(handle);
    }
    Ok((pairs, AgentHandles { handles }))
}

// ---------------------------------------------------------------------------
// TCP backend

struct TcpSender {
    stream: TcpStream,
}

impl SenderPort for TcpSender {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        let line = encode(msg) + "\n";
        self.stream
            .write_all(line.as_bytes())
            .map_err(|_| TransportError::PortClosed)?;
        self.stream.flush().map_err(|_| TransportError::PortClosed)
    }
}

/// Accepts `num_agents` TCP connections; each must open with a hello line.
/// A reader thread per connection feeds an in-process queue so probe/recv
/// keep channel semantics.
pub fn accept_tcp_agents(
    listener: &TcpListener,
    num_agents: u32,
) -> Result<Vec<PortPair>, TransportError> {
    let mut pairs: Vec<Option<PortPair>> = (0..num_agents).map(|_| None).collect();
    for _ in 0..num_agents {
        let (stream, _) = listener.accept()?;
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut hello_line = String::new();
        if reader.read_line(&mut hello_line)? == 0 {
            return Err(TransportError::PortClosed);
        }
        let agent_id = match decode(hello_line.trim_end())? {
            Message::Hello { agent_id } => agent_id,
            other => {
                return Err(TransportError::Malformed(format!(
                    "expected hello, got {other:?}"
                )))
            }
        };
        if agent_id >= num_agents || pairs[agent_id as usize].is_some() {
            return Err(TransportError::Malformed(format!(
                "bad or duplicate agent_id {agent_id}"
            )));
        }
        let (tx, rx) = mpsc::sync_channel(QUEUE_CAPACITY);
        std::thread::spawn(move || {
            for line in reader.lines() {
                let Ok(line) = line else { break };
                let Ok(msg) = decode(line.trim_end()) else { break };
                if tx.send(msg).is_err() {
                    break;
                }
            }
        });
        pairs[agent_id as usize] = Some(PortPair {
            agent_id,
            to_agent: Box::new(TcpSender { stream }),
            from_agent: Box::new(ChannelReceiver::new(rx)),
        });
    }
    Ok(pairs.into_iter().map(Option::unwrap).collect())
}

/// Remote agent main loop: connect, send hello, serve evaluations until
/// Shutdown or peer loss.
pub fn run_tcp_agent(
    address: &str,
    agent_id: u32,
    objective: &Objective,
    seed: u64,
) -> Result<(), TransportError> {
    let stream = TcpStream::connect(address)?;
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let hello = encode(&Message::Hello { agent_id }) + "\n";
    writer.write_all(hello.as_bytes())?;

    let mut rng = agent_rng(seed, agent_id);
    serve_agent(
        objective,
        &mut rng,
        || {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(TransportError::PortClosed);
            }
            decode(line.trim_end())
        },
        |m| {
            let line = encode(m) + "\n";
            writer
                .write_all(line.as_bytes())
                .map_err(|_| TransportError::PortClosed)
        },
    )
}
