//! Supervisory controller: limit supervision, fault isolation, load shedding,
//! excitation and speed regulation, and synchronization permissives.
//!
//! [`controller_step`] is a pure function of `(frame, state, config)`. Within
//! one call the stages run in a fixed order:
//!
//! 1. limit check and violation counters
//! 2. operator requests, breaker supervision, fault confirmation and isolation
//! 3. load shedding
//! 4. excitation and speed regulation
//! 5. synchronization supervision
//!
//! # Decision log
//!
//! Each decision renders to one line:
//!
//! ```text
//! t=<s, 6 dp> modes=<g1>,<g2>,<system> exc=<d1>,<d2> arm=<d1>,<d2> brk=<cmds> relay=<cmds> sync=<g|-> | <note>; <note>
//! ```
//!
//! Duties have four decimals, commands are `ID:open|closed` joined by commas
//! (`-` when empty) and the annotation tail is omitted when there are none.

pub mod config;
pub mod limits;
pub mod pi;
pub mod sync;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use config::{ControllerConfig, PiGains, SheddableLoad, SyncTolerances};
pub use limits::{check_limits, Bound, Quantity, Severity, Violation};
pub use pi::{bumpless_integrator, pi_step, regulate_excitation};
pub use sync::{sync_check, SyncResiduals, SyncStatus};

use crate::devices::{RelayState, TelemetryFrame};
use crate::plant::BREAKER_IDS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    Offline,
    Running,
    Synchronizing,
    Tripped,
}

impl GeneratorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorMode::Offline => "offline",
            GeneratorMode::Running => "running",
            GeneratorMode::Synchronizing => "synchronizing",
            GeneratorMode::Tripped => "tripped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemMode {
    Normal,
    Alert,
    Shedding,
    Island,
}

impl SystemMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SystemMode::Normal => "normal",
            SystemMode::Alert => "alert",
            SystemMode::Shedding => "shedding",
            SystemMode::Island => "island",
        }
    }
}

/// Operator or scenario request, mediated by the controller. Machines are
/// numbered 1 and 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum OperatorRequest {
    RelaySet {
        device: String,
        state: RelayState,
    },
    SyncRequest {
        generator: usize,
    },
    SetpointChange {
        #[serde(default)]
        generator: Option<usize>,
        #[serde(default)]
        voltage: Option<f64>,
        #[serde(default)]
        speed_rpm: Option<f64>,
    },
    ResetTrip {
        generator: usize,
    },
    Trip {
        generator: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShedReason {
    Overcurrent,
    Overload,
    Capacity,
}

impl ShedReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ShedReason::Overcurrent => "overcurrent",
            ShedReason::Overload => "overload",
            ShedReason::Capacity => "capacity",
        }
    }
}

/// A contiguous run of shedding triggered by one confirmed condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheddingEpisode {
    pub reason: ShedReason,
    pub confirmed_at: f64,
    /// Relays opened so far, in order.
    pub shed: Vec<String>,
    /// Relay commanded open and not yet observed open.
    pub awaiting: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingCommand {
    pub device: String,
    pub target: RelayState,
    pub issued_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationCounter {
    pub quantity: Quantity,
    pub bound: Bound,
    pub severity: Severity,
    pub periods: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub modes: [GeneratorMode; 2],
    pub system: SystemMode,
    pub excitation_integrator: [f64; 2],
    pub speed_integrator: [f64; 2],
    pub excitation_duty: [f64; 2],
    pub armature_duty: [f64; 2],
    /// Terminal-voltage setpoint per machine, V.
    pub voltage_setpoint: [f64; 2],
    pub speed_setpoint: [f64; 2],
    pub counters: Vec<ViolationCounter>,
    pub overload_periods: u32,
    pub capacity_periods: u32,
    pub sync_periods: [u32; 2],
    sync_blocked: [Option<String>; 2],
    pub pending: Vec<PendingCommand>,
    pub episode: Option<SheddingEpisode>,
    /// Queued requests, consumed by the next step.
    pub requests: Vec<OperatorRequest>,
    pub last_timestamp: Option<f64>,
    pub stale_frames: u64,
}

impl ControllerState {
    /// Machines with closed breakers start running; integrators are primed
    /// so the first outputs equal the given duties.
    pub fn new(cfg: &ControllerConfig, breakers: [bool; 2], excitation: [f64; 2], armature: [f64; 2]) -> Self {
        let modes = breakers.map(|b| if b { GeneratorMode::Running } else { GeneratorMode::Offline });
        Self {
            modes,
            system: SystemMode::Normal,
            excitation_integrator: excitation.map(|d| bumpless_integrator(&cfg.excitation_gains, d)),
            speed_integrator: armature.map(|d| bumpless_integrator(&cfg.speed_gains, d)),
            excitation_duty: excitation,
            armature_duty: armature,
            voltage_setpoint: [cfg.nominal_voltage; 2],
            speed_setpoint: [cfg.speed_setpoint_rpm; 2],
            counters: Vec::new(),
            overload_periods: 0,
            capacity_periods: 0,
            sync_periods: [0; 2],
            sync_blocked: [None, None],
            pending: Vec::new(),
            episode: None,
            requests: Vec::new(),
            last_timestamp: None,
            stale_frames: 0,
        }
    }

    pub fn counter(&self, quantity: Quantity, bound: Bound, severity: Severity) -> u32 {
        self.counters
            .iter()
            .find(|c| c.quantity == quantity && c.bound == bound && c.severity == severity)
            .map_or(0, |c| c.periods)
    }

    fn pending_for(&self, device: &str) -> Option<RelayState> {
        self.pending.iter().find(|p| p.device == device).map(|p| p.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchCommand {
    pub device: String,
    pub state: RelayState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerDecision {
    pub timestamp: f64,
    pub modes: [GeneratorMode; 2],
    pub system_mode: SystemMode,
    pub excitation_duty: [f64; 2],
    pub armature_duty: [f64; 2],
    pub relay_commands: Vec<SwitchCommand>,
    pub breaker_commands: Vec<SwitchCommand>,
    /// Machine number whose breaker is closed onto the bus this period.
    pub sync_close: Option<usize>,
    /// Synchronism check per machine, present while synchronizing.
    pub sync: [Option<SyncStatus>; 2],
    pub annotations: Vec<String>,
}

impl ControllerDecision {
    fn hold(state: &ControllerState, timestamp: f64) -> Self {
        Self {
            timestamp,
            modes: state.modes,
            system_mode: state.system,
            excitation_duty: state.excitation_duty,
            armature_duty: state.armature_duty,
            relay_commands: Vec::new(),
            breaker_commands: Vec::new(),
            sync_close: None,
            sync: [None, None],
            annotations: Vec::new(),
        }
    }

    pub fn has_switching(&self) -> bool {
        !self.relay_commands.is_empty() || !self.breaker_commands.is_empty() || self.sync_close.is_some()
    }

    pub fn log_line(&self) -> String {
        fn cmds(c: &[SwitchCommand]) -> String {
            if c.is_empty() {
                "-".into()
            } else {
                c.iter()
                    .map(|c| format!("{}:{}", c.device, c.state.as_str()))
                    .collect::<Vec<_>>()
                    .join(",")
            }
        }
        let mut s = String::new();
        let _ = write!(
            s,
            "t={:.6} modes={},{},{} exc={:.4},{:.4} arm={:.4},{:.4} brk={} relay={} sync={}",
            self.timestamp,
            self.modes[0].as_str(),
            self.modes[1].as_str(),
            self.system_mode.as_str(),
            self.excitation_duty[0],
            self.excitation_duty[1],
            self.armature_duty[0],
            self.armature_duty[1],
            cmds(&self.breaker_commands),
            cmds(&self.relay_commands),
            self.sync_close.map_or("-".to_string(), |g| format!("g{g}")),
        );
        if !self.annotations.is_empty() {
            let _ = write!(s, " | {}", self.annotations.join("; "));
        }
        s
    }
}

/// Load demand referred to nominal voltage, W. Zero on a dead bus.
pub fn normalized_demand(frame: &TelemetryFrame, cfg: &ControllerConfig) -> f64 {
    let v = frame.load_bus.voltage_rms;
    if v < cfg.sync.dead_bus_fraction * cfg.nominal_voltage {
        return 0.0;
    }
    frame.load_bus.real_power.max(0.0) * (cfg.nominal_voltage / v).powi(2)
}

struct Step<'a> {
    frame: &'a TelemetryFrame,
    cfg: &'a ControllerConfig,
    s: ControllerState,
    d: ControllerDecision,
}

impl Step<'_> {
    fn note(&mut self, msg: String) {
        self.d.annotations.push(msg);
    }

    fn online(&self, k: usize) -> bool {
        self.frame.is_closed(BREAKER_IDS[k])
    }

    fn healthy_capacity(&self) -> f64 {
        (0..2)
            .filter(|&k| self.s.modes[k] == GeneratorMode::Running && self.online(k))
            .map(|k| self.cfg.generator_rating[k])
            .sum()
    }

    fn command(&mut self, device: &str, target: RelayState) {
        let shown = self.frame.switch(device);
        match self.s.pending_for(device) {
            Some(t) if t == target => return,
            None if shown == Some(target) => return,
            _ => {}
        }
        self.s.pending.retain(|p| p.device != device);
        if shown != Some(target) {
            self.s.pending.push(PendingCommand {
                device: device.to_owned(),
                target,
                issued_at: self.frame.timestamp,
            });
        }
        let cmd = SwitchCommand {
            device: device.to_owned(),
            state: target,
        };
        if BREAKER_IDS.contains(&device) {
            self.d.breaker_commands.push(cmd);
        } else {
            self.d.relay_commands.push(cmd);
        }
    }

    fn update_counters(&mut self, violations: &[Violation]) {
        let mut next = Vec::with_capacity(violations.len());
        for v in violations {
            let periods = self.s.counter(v.quantity, v.bound, v.severity) + 1;
            next.push(ViolationCounter {
                quantity: v.quantity,
                bound: v.bound,
                severity: v.severity,
                periods,
            });
            // A beyond-band period also counts toward the in-band confirmation.
            if v.severity == Severity::BeyondBand {
                let periods = self.s.counter(v.quantity, v.bound, Severity::InPermissibleBand) + 1;
                next.push(ViolationCounter {
                    quantity: v.quantity,
                    bound: v.bound,
                    severity: Severity::InPermissibleBand,
                    periods,
                });
            }
        }
        self.s.counters = next;

        let cfg = self.cfg;
        let online: Vec<usize> = (0..2).filter(|&k| self.online(k)).collect();
        let overloaded = !online.is_empty()
            && online.iter().all(|&k| {
                self.frame.generators[k].stator_current_rms > cfg.generator_current_limit * cfg.permissible_band
            });
        self.s.overload_periods = if overloaded { self.s.overload_periods + 1 } else { 0 };
        let short = normalized_demand(self.frame, cfg) > self.healthy_capacity() * cfg.permissible_band;
        self.s.capacity_periods = if short { self.s.capacity_periods + 1 } else { 0 };
    }

    fn breaker_supervision(&mut self) {
        for k in 0..2 {
            let id = BREAKER_IDS[k];
            let closed = self.online(k);
            let pending = self.s.pending_for(id);
            match (self.s.modes[k], closed, pending) {
                (GeneratorMode::Running, false, None) => {
                    self.s.modes[k] = GeneratorMode::Tripped;
                    self.note(format!("g{} breaker opened externally: tripped latch set", k + 1));
                }
                (GeneratorMode::Synchronizing, true, None) => {
                    self.s.modes[k] = GeneratorMode::Running;
                    self.s.sync_periods[k] = 0;
                    self.s.voltage_setpoint[k] = self.cfg.nominal_voltage;
                    self.s.speed_setpoint[k] = self.cfg.speed_setpoint_rpm;
                    self.note(format!("g{} synchronized onto bus", k + 1));
                }
                (GeneratorMode::Tripped, true, None) => {
                    self.note(format!("g{} breaker closed while tripped: reopening", k + 1));
                    self.command(id, RelayState::Open);
                }
                (GeneratorMode::Offline, true, None) => {
                    self.s.modes[k] = GeneratorMode::Running;
                    self.note(format!("g{} breaker closed externally: running", k + 1));
                }
                _ => {}
            }
        }
    }

    fn machine_index(&mut self, generator: usize, what: &str) -> Option<usize> {
        if (1..=2).contains(&generator) {
            Some(generator - 1)
        } else {
            self.note(format!("{what} refused: no generator {generator}"));
            None
        }
    }

    fn handle_request(&mut self, req: OperatorRequest) {
        let cfg = self.cfg;
        match req {
            OperatorRequest::Trip { generator } => {
                if let Some(k) = self.machine_index(generator, "trip") {
                    self.isolate_generator(k, "commanded trip");
                }
            }
            OperatorRequest::ResetTrip { generator } => {
                let Some(k) = self.machine_index(generator, "reset") else { return };
                if self.s.modes[k] == GeneratorMode::Tripped {
                    self.s.modes[k] = GeneratorMode::Offline;
                    self.s.excitation_integrator[k] = 0.0;
                    self.s.speed_integrator[k] = 0.0;
                    self.note(format!("g{} trip reset: offline", k + 1));
                } else {
                    self.note(format!("g{} reset ignored: not tripped", k + 1));
                }
            }
            OperatorRequest::SyncRequest { generator } => {
                let Some(k) = self.machine_index(generator, "sync") else { return };
                match self.s.modes[k] {
                    GeneratorMode::Tripped => self.note(format!("g{} sync refused: tripped latch", k + 1)),
                    GeneratorMode::Running => self.note(format!("g{} sync ignored: already online", k + 1)),
                    GeneratorMode::Synchronizing => {}
                    GeneratorMode::Offline => {
                        self.s.modes[k] = GeneratorMode::Synchronizing;
                        self.s.sync_periods[k] = 0;
                        self.s.sync_blocked[k] = None;
                        self.note(format!("g{} synchronizing", k + 1));
                    }
                }
            }
            OperatorRequest::SetpointChange {
                generator,
                voltage,
                speed_rpm,
            } => {
                let targets: Vec<usize> = match generator {
                    None => vec![0, 1],
                    Some(g) => match self.machine_index(g, "setpoint change") {
                        Some(k) => vec![k],
                        None => return,
                    },
                };
                let v_ok = voltage.is_none_or(|v| (0.5 * cfg.nominal_voltage..=1.2 * cfg.nominal_voltage).contains(&v));
                let w_ok = speed_rpm.is_none_or(|w| (0.0..=1.5 * cfg.speed_setpoint_rpm).contains(&w));
                if !(v_ok && w_ok) {
                    self.note("setpoint change refused: out of range".into());
                    return;
                }
                for k in targets {
                    if let Some(v) = voltage {
                        self.s.voltage_setpoint[k] = v;
                    }
                    if let Some(w) = speed_rpm {
                        self.s.speed_setpoint[k] = w;
                    }
                    self.note(format!(
                        "g{} setpoints {:.1} V {:.1} rpm",
                        k + 1,
                        self.s.voltage_setpoint[k],
                        self.s.speed_setpoint[k]
                    ));
                }
            }
            OperatorRequest::RelaySet { device, state } => self.relay_request(&device, state),
        }
    }

    fn relay_request(&mut self, device: &str, state: RelayState) {
        if let Some(k) = BREAKER_IDS.iter().position(|b| *b == device) {
            if state == RelayState::Closed {
                self.note(format!("{device} close refused: use sync_request"));
                return;
            }
            if self.s.modes[k] != GeneratorMode::Tripped {
                self.s.modes[k] = GeneratorMode::Offline;
            }
            self.command(device, RelayState::Open);
            self.note(format!("{device} opened on request"));
            return;
        }
        if self.frame.switch(device).is_none() {
            self.note(format!("{device} request refused: unknown device"));
            return;
        }
        if state == RelayState::Closed {
            if let Some(ep) = &self.s.episode {
                if ep.shed.iter().any(|r| r == device) {
                    self.note(format!("{device} close refused: shed in active episode"));
                    return;
                }
            }
            if self.frame.load_bus.current_rms > self.cfg.branch_current_limit {
                self.note(format!("{device} close refused: branch current above limit"));
                return;
            }
        }
        self.command(device, state);
    }

    fn isolate_generator(&mut self, k: usize, reason: &str) {
        if self.s.modes[k] == GeneratorMode::Tripped {
            self.note(format!("g{} trip ignored: already tripped", k + 1));
            return;
        }
        let demand = normalized_demand(self.frame, self.cfg);
        self.s.modes[k] = GeneratorMode::Tripped;
        self.s.sync_periods[k] = 0;
        let id = BREAKER_IDS[k];
        if self.online(k) || self.s.pending_for(id) == Some(RelayState::Closed) {
            self.command(id, RelayState::Open);
        }
        let o = 1 - k;
        let capacity = self.healthy_capacity();
        if capacity > 0.0 {
            self.note(format!(
                "g{} isolated ({reason}); g{} redispatched to {:.0} W",
                k + 1,
                o + 1,
                demand.min(capacity)
            ));
            if demand > capacity * self.cfg.permissible_band && self.s.episode.is_none() {
                self.start_episode(ShedReason::Capacity, format!("demand {demand:.0} W exceeds {capacity:.0} W"));
            }
        } else {
            self.note(format!("g{} isolated ({reason}); no healthy machine online", k + 1));
        }
    }

    fn fault_attribution(&mut self) {
        let cfg = self.cfg;
        let fast = cfg.confirmation_periods;
        for k in 0..2 {
            let o = 1 - k;
            let both = self.online(k) && self.online(o) && self.s.modes[k] == GeneratorMode::Running;
            if !both {
                continue;
            }
            let beyond = |q: Quantity, s: &ControllerState| {
                s.counter(q, Bound::Upper, Severity::BeyondBand).max(s.counter(q, Bound::Lower, Severity::BeyondBand))
            };
            if beyond(Quantity::Speed(k), &self.s) >= fast && beyond(Quantity::Speed(o), &self.s) == 0 {
                self.isolate_generator(k, "speed deviation");
                continue;
            }
            let stator = |j: usize, s: &ControllerState| s.counter(Quantity::StatorCurrent(j), Bound::Upper, Severity::BeyondBand);
            if stator(k, &self.s) >= fast
                && stator(o, &self.s) == 0
                && self.frame.load_bus.current_rms <= cfg.branch_current_limit
            {
                self.isolate_generator(k, "stator overcurrent");
            }
        }
    }

    fn start_episode(&mut self, reason: ShedReason, detail: String) {
        self.note(format!("shedding started: {} ({detail})", reason.as_str()));
        self.s.episode = Some(SheddingEpisode {
            reason,
            confirmed_at: self.frame.timestamp,
            shed: Vec::new(),
            awaiting: None,
        });
    }

    /// Whether the condition behind `reason` still holds on this frame.
    fn shed_needed(&self, reason: ShedReason) -> bool {
        let cfg = self.cfg;
        match reason {
            ShedReason::Overcurrent => self.frame.load_bus.current_rms > cfg.branch_current_limit,
            ShedReason::Overload => (0..2).any(|k| {
                self.online(k) && self.frame.generators[k].stator_current_rms > cfg.generator_current_limit
            }),
            ShedReason::Capacity => normalized_demand(self.frame, cfg) > self.healthy_capacity(),
        }
    }

    fn shed_load(&mut self) {
        let cfg = self.cfg;
        if self.s.episode.is_none() {
            let oc = self.s.counter(Quantity::LoadCurrent, Bound::Upper, Severity::BeyondBand);
            if oc >= cfg.confirmation_periods {
                let i = self.frame.load_bus.current_rms;
                self.start_episode(
                    ShedReason::Overcurrent,
                    format!("{i:.2} A beyond {:.2} A", cfg.branch_current_limit * cfg.permissible_band),
                );
            } else if self.s.overload_periods >= cfg.overload_confirmation_periods {
                self.start_episode(ShedReason::Overload, "stator current beyond band".into());
            } else if self.s.capacity_periods >= cfg.overload_confirmation_periods {
                let demand = normalized_demand(self.frame, cfg);
                self.start_episode(ShedReason::Capacity, format!("demand {demand:.0} W"));
            }
        }
        let Some(mut ep) = self.s.episode.take() else { return };
        if let Some(relay) = &ep.awaiting {
            if self.frame.switch(relay) == Some(RelayState::Open) {
                ep.awaiting = None;
            } else {
                self.s.episode = Some(ep);
                return;
            }
        }
        if !self.shed_needed(ep.reason) {
            self.note(format!(
                "shedding complete: {} [{}]",
                ep.reason.as_str(),
                ep.shed.join(",")
            ));
            match ep.reason {
                ShedReason::Overcurrent => self.s.counters.retain(|c| c.quantity != Quantity::LoadCurrent),
                ShedReason::Overload => self.s.overload_periods = 0,
                ShedReason::Capacity => self.s.capacity_periods = 0,
            }
            return;
        }
        let next = cfg
            .shedding_order
            .iter()
            .find(|l| self.frame.is_closed(&l.relay) && !ep.shed.contains(&l.relay))
            .cloned();
        match next {
            Some(l) => {
                let value = match ep.reason {
                    ShedReason::Overcurrent => format!("{:.2} A", self.frame.load_bus.current_rms),
                    ShedReason::Overload => format!(
                        "{:.2},{:.2} A",
                        self.frame.generators[0].stator_current_rms, self.frame.generators[1].stator_current_rms
                    ),
                    ShedReason::Capacity => format!("{:.0} W", normalized_demand(self.frame, cfg)),
                };
                self.command(&l.relay, RelayState::Open);
                self.note(format!("shed {} via {}: {} {}", l.load, l.relay, ep.reason.as_str(), value));
                ep.shed.push(l.relay.clone());
                ep.awaiting = Some(l.relay);
                self.s.episode = Some(ep);
            }
            None => {
                self.note(format!(
                    "escalation: all sheddable loads open, {} persists",
                    ep.reason.as_str()
                ));
                if ep.reason == ShedReason::Overcurrent {
                    for k in 0..2 {
                        if self.online(k) {
                            self.isolate_generator(k, "overcurrent with no load left to shed");
                        }
                    }
                }
            }
        }
    }

    fn escalation_notes(&mut self) {
        let window = self.cfg.confirmation_periods;
        let fresh: Vec<String> = self
            .s
            .counters
            .iter()
            .filter(|c| c.severity == Severity::BeyondBand && c.periods == window)
            .filter(|c| !matches!(c.quantity, Quantity::LoadCurrent))
            .map(|c| {
                let dir = match c.bound {
                    Bound::Upper => "high",
                    Bound::Lower => "low",
                };
                format!("{} {dir} beyond band: regulation at authority", c.quantity)
            })
            .collect();
        self.d.annotations.extend(fresh);
    }

    fn regulate(&mut self) {
        let cfg = self.cfg;
        let f = self.frame;
        let dt = cfg.control_period;
        let bus_live = f.load_bus.voltage_rms >= cfg.sync.dead_bus_fraction * cfg.nominal_voltage;
        let i_load = f.load_bus.current_rms;
        let limit = cfg.branch_current_limit;
        if self.s.counter(Quantity::LoadCurrent, Bound::Upper, Severity::InPermissibleBand) == 1 {
            self.note("branch current above limit: excitation correction".into());
        }
        for k in 0..2 {
            if self.s.modes[k] == GeneratorMode::Tripped {
                self.s.excitation_duty[k] = 0.0;
                self.s.armature_duty[k] = 0.0;
                continue;
            }
            let g = &f.generators[k];
            let syncing = self.s.modes[k] == GeneratorMode::Synchronizing;
            let online = self.online(k);
            let mut v_set = self.s.voltage_setpoint[k];
            if syncing && bus_live {
                v_set = f.load_bus.voltage_rms;
            }
            if online && i_load > limit {
                v_set *= limit / i_load;
            }
            if !(online && i_load > limit * cfg.permissible_band) {
                let (d, i) = regulate_excitation(
                    &cfg.excitation_gains,
                    self.s.excitation_integrator[k],
                    v_set - g.terminal_voltage_rms,
                    dt,
                );
                self.s.excitation_duty[k] = d;
                self.s.excitation_integrator[k] = i;
            }
            let mut w_set = self.s.speed_setpoint[k];
            if syncing && cfg.sync.auto_match && bus_live {
                w_set = cfg.hz_to_rpm(f.load_bus.frequency + cfg.sync.slip);
            }
            let (d, i) = pi_step(&cfg.speed_gains, self.s.speed_integrator[k], w_set - g.speed_rpm, dt);
            self.s.armature_duty[k] = d;
            self.s.speed_integrator[k] = i;
        }
    }

    fn supervise_sync(&mut self) {
        let cfg = self.cfg;
        for k in 0..2 {
            if self.s.modes[k] != GeneratorMode::Synchronizing {
                continue;
            }
            let id = BREAKER_IDS[k];
            if self.s.pending_for(id) == Some(RelayState::Closed) {
                continue;
            }
            let status = sync_check(
                &self.frame.generators[k],
                &self.frame.load_bus,
                &cfg.sync,
                cfg.nominal_voltage,
                cfg.nominal_frequency,
            );
            self.d.sync[k] = Some(status);
            let (ok, blocked) = match status {
                SyncStatus::DeadBus { ready } => (ready, (!ready).then(|| "dead bus, machine not at nominal".to_string())),
                SyncStatus::Live { residuals, in_tolerance } => {
                    (in_tolerance, residuals.blocking(&cfg.sync).map(|r| format!("{r} residual")))
                }
            };
            self.s.sync_periods[k] = if ok { self.s.sync_periods[k] + 1 } else { 0 };
            if blocked != self.s.sync_blocked[k] {
                if let Some(b) = &blocked {
                    self.note(format!("g{} sync blocked: {b}", k + 1));
                }
                self.s.sync_blocked[k] = blocked;
            }
            if self.s.sync_periods[k] >= cfg.sync.window && self.d.sync_close.is_none() {
                self.command(id, RelayState::Closed);
                self.d.sync_close = Some(k + 1);
                self.s.sync_periods[k] = 0;
                let how = match status {
                    SyncStatus::DeadBus { .. } => "dead-bus close",
                    SyncStatus::Live { .. } => "sync close",
                };
                self.note(format!("g{} {how}", k + 1));
            }
        }
    }

    fn system_mode(&self, violations: &[Violation]) -> SystemMode {
        let any_online = (0..2).any(|k| self.online(k) && self.s.modes[k] != GeneratorMode::Tripped);
        let all_tripped = self.s.modes.iter().all(|m| *m == GeneratorMode::Tripped);
        if all_tripped || !any_online {
            SystemMode::Island
        } else if self.s.episode.is_some() {
            SystemMode::Shedding
        } else if !violations.is_empty() {
            SystemMode::Alert
        } else {
            SystemMode::Normal
        }
    }
}

/// One control period of supervision.
pub fn controller_step(
    frame: &TelemetryFrame,
    state: &ControllerState,
    cfg: &ControllerConfig,
) -> (ControllerState, ControllerDecision) {
    let mut st = Step {
        frame,
        cfg,
        s: state.clone(),
        d: ControllerDecision::hold(state, frame.timestamp),
    };
    if state.last_timestamp.is_some_and(|t| frame.timestamp <= t) {
        st.s.stale_frames += 1;
        st.note(format!("stale frame at t={:.6} ignored", frame.timestamp));
        return (st.s, st.d);
    }
    st.s.last_timestamp = Some(frame.timestamp);
    st.s.pending.retain(|p| frame.switch(&p.device) != Some(p.target));

    // (1) limits
    let violations = check_limits(frame, cfg);
    st.update_counters(&violations);

    // (2) requests, breaker supervision, faults
    st.breaker_supervision();
    for req in std::mem::take(&mut st.s.requests) {
        st.handle_request(req);
    }
    st.fault_attribution();

    // (3) shedding
    st.shed_load();
    st.escalation_notes();

    // (4) regulation
    st.regulate();

    // (5) synchronization
    st.supervise_sync();

    st.s.system = st.system_mode(&violations);
    st.d.modes = st.s.modes;
    st.d.system_mode = st.s.system;
    st.d.excitation_duty = st.s.excitation_duty;
    st.d.armature_duty = st.s.armature_duty;
    (st.s, st.d)
}

#[cfg(test)]
mod tests;
