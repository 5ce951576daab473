//! Live runs over TCP.
//!
//! One engine thread owns the [`Simulation`] and paces it against the wall
//! clock. Client sessions never touch it directly: commands travel over a
//! channel that the engine drains at period boundaries, and everything
//! flowing back goes through per-session bounded queues, so a stalled client
//! can never hold up a period. See [`protocol`] for the message schema.

pub mod broadcast;
pub mod protocol;

use std::io::Write;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::controller::{ControllerDecision, GeneratorMode};
use crate::devices::{RelayState, TelemetryFrame};
use crate::engine::{EventKind, Simulation, SimulationRecord};
use crate::error::EngineError;
use crate::engine::Scenario;

pub use broadcast::{Broadcaster, OutboundQueue, Payload, Pop};
pub use protocol::{parse_command, ClientMessage, ServerMessage, PROTO_VERSION};

/// Environment variable holding the session token.
pub const TOKEN_ENV: &str = "GRIDLOOP_TOKEN";

/// Longest what-if forecast, s.
pub const MAX_WHATIF_HORIZON: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub token: String,
    /// Publish telemetry every this many control periods.
    pub decimation: u32,
    /// Messages a session may have queued before it is dropped.
    pub queue_capacity: usize,
    /// Simulated seconds per wall-clock second; 0 runs unpaced.
    pub pace: f64,
    /// Beyond this much lag behind the wall clock telemetry is skipped.
    pub max_lag: Duration,
    /// Start stepping immediately; otherwise wait for [`ServerHandle::start`].
    pub autostart: bool,
}

impl ServeOptions {
    pub fn new(token: impl Into<String>) -> Self {
        Self {
            token: token.into(),
            decimation: 20,
            queue_capacity: 1024,
            pace: 1.0,
            max_lag: Duration::from_millis(250),
            autostart: true,
        }
    }
}

/// Latest published state of the live run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub frame: TelemetryFrame,
    pub decision: ControllerDecision,
}

enum EngineRequest {
    Inject {
        request_id: String,
        event: EventKind,
        reply: Arc<OutboundQueue>,
    },
    Whatif {
        request_id: String,
        event: EventKind,
        horizon: f64,
        reply: Arc<OutboundQueue>,
    },
}

struct Shared {
    options: ServeOptions,
    scenario_name: String,
    control_period: f64,
    requests: Mutex<Option<Sender<EngineRequest>>>,
    broadcaster: Broadcaster,
    sessions: Mutex<Vec<Weak<OutboundQueue>>>,
    snapshot: Mutex<Option<Arc<Snapshot>>>,
    stop: AtomicBool,
    started: (Mutex<bool>, Condvar),
}

impl Shared {
    fn dropped_message(&self) -> Payload {
        ServerMessage::event(
            "dropped",
            json!({ "reason": format!("backlog exceeded {} messages", self.options.queue_capacity) }),
        )
        .encode()
        .into()
    }
}

/// Handle to a running live server.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    engine: Option<JoinHandle<SimulationRecord>>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Releases an engine created with `autostart = false`.
    pub fn start(&self) {
        let (lock, cv) = &self.shared.started;
        *lock.lock().unwrap() = true;
        cv.notify_all();
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.shared.snapshot.lock().unwrap().clone()
    }

    pub fn subscriber_count(&self) -> usize {
        self.shared.broadcaster.subscriber_count()
    }

    /// Waits for the run to finish, lets sessions flush for up to `flush`,
    /// stops accepting connections and returns the record.
    pub fn wait(mut self, flush: Duration) -> SimulationRecord {
        self.start();
        let record = self.engine.take().expect("engine thread").join().expect("engine thread panicked");
        let deadline = Instant::now() + flush;
        while Instant::now() < deadline {
            let pending = self
                .shared
                .sessions
                .lock()
                .unwrap()
                .iter()
                .filter_map(Weak::upgrade)
                .any(|q| !q.is_empty());
            if !pending {
                break;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        record
    }
}

/// Binds `listen` and starts a live run of `scenario`.
pub fn serve(scenario: Scenario, listen: &str, options: ServeOptions) -> Result<ServerHandle, EngineError> {
    let sim = Simulation::new(scenario)?;
    let listener = TcpListener::bind(listen)?;
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let (tx, rx) = mpsc::channel();
    let shared = Arc::new(Shared {
        scenario_name: sim.scenario().name.clone(),
        control_period: sim.scenario().controller.control_period,
        started: (Mutex::new(options.autostart), Condvar::new()),
        options,
        requests: Mutex::new(Some(tx)),
        broadcaster: Broadcaster::default(),
        sessions: Mutex::default(),
        snapshot: Mutex::default(),
        stop: AtomicBool::new(false),
    });
    let engine = {
        let shared = shared.clone();
        std::thread::Builder::new()
            .name("gridloop-engine".into())
            .spawn(move || run_engine(sim, rx, &shared))?
    };
    let acceptor = {
        let shared = shared.clone();
        std::thread::Builder::new()
            .name("gridloop-accept".into())
            .spawn(move || accept_loop(listener, shared))?
    };
    Ok(ServerHandle {
        addr,
        shared,
        engine: Some(engine),
        acceptor: Some(acceptor),
    })
}

fn encode(msg: &ServerMessage) -> Payload {
    msg.encode().into()
}

fn run_engine(mut sim: Simulation, rx: Receiver<EngineRequest>, shared: &Shared) -> SimulationRecord {
    {
        let (lock, cv) = &shared.started;
        let mut go = lock.lock().unwrap();
        while !*go {
            go = cv.wait(go).unwrap();
        }
    }
    let opts = &shared.options;
    let decimation = u64::from(opts.decimation.max(1));
    let dropped = shared.dropped_message();
    let wall_start = Instant::now();
    let mut events_seen = 0;
    while !sim.finished() {
        while let Ok(req) = rx.try_recv() {
            handle_request(&mut sim, req);
        }
        let lagging = opts.pace > 0.0
            && wall_start.elapsed().as_secs_f64() - sim.time() / opts.pace > opts.max_lag.as_secs_f64();
        let k = sim.periods_done();
        let Some((frame, decision)) = sim.step_period() else { break };
        let (frame, decision) = (frame.clone(), decision.clone());
        for e in &sim.events()[events_seen..] {
            let msg = ServerMessage::event(
                "applied",
                json!({ "scheduled": e.scheduled, "applied_at": e.applied_at, "event": e.event }),
            );
            shared.broadcaster.publish(&encode(&msg), &dropped);
        }
        events_seen = sim.events().len();
        let periodic = k.is_multiple_of(decimation);
        if periodic && !lagging {
            shared
                .broadcaster
                .publish(&encode(&ServerMessage::Telemetry(frame.clone())), &dropped);
        }
        if periodic || !decision.annotations.is_empty() || decision.has_switching() {
            let msg = ServerMessage::Decision {
                log: decision.log_line(),
                decision: decision.clone(),
            };
            shared.broadcaster.publish(&encode(&msg), &dropped);
        }
        *shared.snapshot.lock().unwrap() = Some(Arc::new(Snapshot { frame, decision }));
        if opts.pace > 0.0 {
            let target = wall_start + Duration::from_secs_f64(sim.time() / opts.pace);
            let now = Instant::now();
            if target > now {
                std::thread::sleep(target - now);
            }
        }
    }

    // No request can be sent once the sender is gone; answer what is queued.
    shared.requests.lock().unwrap().take();
    while let Ok(req) = rx.try_recv() {
        let (EngineRequest::Inject { request_id, reply, .. } | EngineRequest::Whatif { request_id, reply, .. }) = req;
        reply.push(encode(&ServerMessage::reject(Some(request_id), "run finished")), || dropped.clone());
    }
    let record = sim.into_record();
    let finished = encode(&ServerMessage::event(
        "finished",
        json!({ "digest": record.digest, "diagnostic": record.diagnostic, "frames": record.frames.len() }),
    ));
    shared.broadcaster.close_all(&finished);
    for q in shared.sessions.lock().unwrap().iter().filter_map(Weak::upgrade) {
        q.close_with(Some(finished.clone()));
    }
    record
}

fn handle_request(sim: &mut Simulation, req: EngineRequest) {
    let overflow = || encode(&ServerMessage::event("dropped", json!({ "reason": "backlog exceeded" })));
    match req {
        EngineRequest::Inject { request_id, event, reply } => {
            let msg = match sim.inject(event) {
                Ok(()) => ServerMessage::Ack { request_id },
                Err(e) => ServerMessage::reject(Some(request_id), e.to_string()),
            };
            reply.push(encode(&msg), overflow);
        }
        EngineRequest::Whatif {
            request_id,
            event,
            horizon,
            reply,
        } => {
            let mut fork = sim.clone();
            if let Err(e) = fork.inject(event) {
                reply.push(encode(&ServerMessage::reject(Some(request_id), e.to_string())), overflow);
                return;
            }
            reply.push(encode(&ServerMessage::Ack { request_id: request_id.clone() }), overflow);
            std::thread::spawn(move || {
                let data = forecast(&mut fork, horizon);
                let msg = ServerMessage::Event {
                    event: "whatif".into(),
                    request_id: Some(request_id),
                    data,
                };
                reply.push(encode(&msg), overflow);
            });
        }
    }
}

/// Runs a forked simulation ahead and summarises where it ends up.
fn forecast(fork: &mut Simulation, horizon: f64) -> Value {
    let t_start = fork.time();
    let first = fork.decisions().len();
    let periods = (horizon / fork.scenario().controller.control_period).round() as u64;
    for _ in 0..periods {
        if fork.step_period().is_none() {
            break;
        }
    }
    let annotations: Vec<String> = fork.decisions()[first..]
        .iter()
        .filter(|d| !d.annotations.is_empty())
        .map(|d| d.log_line())
        .collect();
    let shed: Vec<&str> = fork.decisions()[first..]
        .iter()
        .flat_map(|d| d.relay_commands.iter())
        .filter(|c| c.state == RelayState::Open)
        .map(|c| c.device.as_str())
        .collect();
    let tripped: Vec<usize> = fork
        .decisions()
        .last()
        .map(|d| {
            (0..2)
                .filter(|&k| d.modes[k] == GeneratorMode::Tripped)
                .map(|k| k + 1)
                .collect()
        })
        .unwrap_or_default();
    json!({
        "t_start": t_start,
        "t_end": fork.time(),
        "final_frame": fork.frames().last(),
        "system_mode": fork.decisions().last().map(|d| d.system_mode.as_str()),
        "shed": shed,
        "tripped": tripped,
        "annotations": annotations,
        "diagnostic": fork.diagnostic(),
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let shared = shared.clone();
                let _ = std::thread::Builder::new()
                    .name("gridloop-session".into())
                    .spawn(move || session(stream, shared));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(_) => std::thread::sleep(Duration::from_millis(10)),
        }
    }
}

fn session(stream: TcpStream, shared: Arc<Shared>) {
    if stream.set_nonblocking(false).is_err() {
        return;
    }
    let _ = stream.set_nodelay(true);
    let queue = OutboundQueue::new(shared.options.queue_capacity);
    {
        let mut sessions = shared.sessions.lock().unwrap();
        sessions.retain(|w| w.strong_count() > 0);
        sessions.push(Arc::downgrade(&queue));
    }
    let Ok(write_half) = stream.try_clone() else { return };
    let writer = {
        let queue = queue.clone();
        std::thread::spawn(move || write_loop(write_half, &queue))
    };
    read_loop(stream, &shared, &queue);
    queue.close_with(None);
    let _ = writer.join();
}

fn write_loop(mut stream: TcpStream, queue: &OutboundQueue) {
    loop {
        match queue.pop(Duration::from_millis(100)) {
            Pop::Item(bytes) => {
                if stream.write_all(&bytes).is_err() {
                    break;
                }
            }
            Pop::Empty => {}
            Pop::Closed => break,
        }
    }
    let _ = stream.flush();
    let _ = stream.shutdown(Shutdown::Both);
}

fn read_loop(mut stream: TcpStream, shared: &Shared, queue: &Arc<OutboundQueue>) {
    let overflow = || shared.dropped_message();
    let send = |msg: ServerMessage| queue.push(encode(&msg), overflow);
    let mut authenticated = false;
    while let Ok(Some(body)) = protocol::read_frame(&mut stream) {
        if queue.is_closed() {
            return;
        }
        let value: Value = match serde_json::from_slice(&body) {
            Ok(v) => v,
            Err(e) => {
                send(ServerMessage::reject(None, format!("malformed message: {e}")));
                continue;
            }
        };
        let request_id = value.get("request_id").and_then(Value::as_str).map(str::to_owned);
        let kind = value.get("kind").and_then(Value::as_str).unwrap_or("").to_owned();
        let msg: ClientMessage = match serde_json::from_value(value) {
            Ok(m) => m,
            Err(e) => {
                let reason = match kind.as_str() {
                    "" => "message has no `kind` field".to_string(),
                    "hello" | "subscribe" | "command" | "whatif" => format!("malformed {kind}: {e}"),
                    other => format!("unknown message kind `{other}`"),
                };
                send(ServerMessage::reject(request_id, reason));
                if !authenticated {
                    queue.close_with(None);
                    return;
                }
                continue;
            }
        };
        if !authenticated {
            match msg {
                ClientMessage::Hello { proto_version, token } => {
                    if proto_version != PROTO_VERSION {
                        send(ServerMessage::reject(
                            None,
                            format!("unsupported proto_version {proto_version} (server speaks {PROTO_VERSION})"),
                        ));
                        queue.close_with(None);
                        return;
                    }
                    if token != shared.options.token {
                        send(ServerMessage::reject(None, "authentication failed"));
                        queue.close_with(None);
                        return;
                    }
                    authenticated = true;
                    send(ServerMessage::event(
                        "welcome",
                        json!({
                            "proto_version": PROTO_VERSION,
                            "scenario": shared.scenario_name,
                            "control_period": shared.control_period,
                            "decimation": shared.options.decimation,
                        }),
                    ));
                }
                _ => {
                    send(ServerMessage::reject(request_id, "expected hello first"));
                    queue.close_with(None);
                    return;
                }
            }
            continue;
        }
        match msg {
            ClientMessage::Hello { .. } => {
                send(ServerMessage::reject(None, "already authenticated"));
            }
            ClientMessage::Subscribe { request_id } => {
                if let Some(id) = request_id {
                    send(ServerMessage::Ack { request_id: id });
                }
                shared.broadcaster.subscribe(queue.clone());
            }
            ClientMessage::Command { request_id, command } => {
                let event = match parse_command(&command) {
                    Ok(e) => e,
                    Err(reason) => {
                        send(ServerMessage::reject(Some(request_id), reason));
                        continue;
                    }
                };
                submit(
                    shared,
                    queue,
                    EngineRequest::Inject {
                        request_id,
                        event,
                        reply: queue.clone(),
                    },
                );
            }
            ClientMessage::Whatif {
                request_id,
                command,
                horizon,
            } => {
                let horizon = horizon.unwrap_or(1.0);
                if !(horizon.is_finite() && horizon > 0.0 && horizon <= MAX_WHATIF_HORIZON) {
                    send(ServerMessage::reject(
                        Some(request_id),
                        format!("horizon must lie in (0, {MAX_WHATIF_HORIZON}] s"),
                    ));
                    continue;
                }
                let event = match parse_command(&command) {
                    Ok(e) => e,
                    Err(reason) => {
                        send(ServerMessage::reject(Some(request_id), reason));
                        continue;
                    }
                };
                submit(
                    shared,
                    queue,
                    EngineRequest::Whatif {
                        request_id,
                        event,
                        horizon,
                        reply: queue.clone(),
                    },
                );
            }
        }
    }
}

fn submit(shared: &Shared, queue: &OutboundQueue, req: EngineRequest) {
    let guard = shared.requests.lock().unwrap();
    let refused = match guard.as_ref() {
        Some(tx) => tx.send(req).err().map(|e| e.0),
        None => Some(req),
    };
    if let Some(EngineRequest::Inject { request_id, .. } | EngineRequest::Whatif { request_id, .. }) = refused {
        queue.push(
            encode(&ServerMessage::reject(Some(request_id), "run finished")),
            || shared.dropped_message(),
        );
    }
}
