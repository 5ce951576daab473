//! Fixed-step orchestration of plant, instruments and controller.
//!
//! Every control period runs, in order:
//!
//! 1. sample the instruments into a [`TelemetryFrame`] at the period start
//! 2. apply due scenario events and queued injections
//! 3. evaluate the controller on that frame
//! 4. hand duties and switch commands to the drives and relays
//! 5. integrate the plant over the period, ticking relays every plant step
//!
//! A change applied at the boundary `t` therefore first shows in the frame
//! sampled at `t` plus one period.

pub mod export;
pub mod scenario;

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use export::{export_csv, CSV_GROUPS};
pub use scenario::{Event, EventKind, InitialConditions, Scenario, SCHEMA_VERSION};

use crate::controller::{controller_step, ControllerDecision, ControllerState, OperatorRequest};
use crate::devices::{DeviceBank, TelemetryFrame};
use crate::error::EngineError;
use crate::plant::{EnergyLedger, Plant};

/// Machine state at a period boundary, kept when the scenario asks for a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantSample {
    pub t: f64,
    pub internal_emf: [f64; 2],
    /// Electrical rotor angle, rad.
    pub rotor_angle: [f64; 2],
    pub rotor_speed: [f64; 2],
    pub field_voltage: [f64; 2],
    pub armature_current: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    /// Requested time; equals `applied_at` for live injections.
    pub scheduled: f64,
    pub applied_at: f64,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub scenario: Scenario,
    pub frames: Vec<TelemetryFrame>,
    pub decisions: Vec<ControllerDecision>,
    pub events: Vec<EventLogEntry>,
    #[serde(default)]
    pub trace: Vec<PlantSample>,
    pub energy: EnergyLedger,
    /// Largest bus current-law mismatch seen at any plant step, A.
    pub max_kcl_residual: f64,
    /// Set when the run stopped early.
    pub diagnostic: Option<String>,
    pub digest: String,
}

impl SimulationRecord {
    pub fn decision_log(&self) -> String {
        let mut s = String::new();
        for d in &self.decisions {
            s.push_str(&d.log_line());
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// A run advanced one control period at a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    pub plant: Plant,
    pub devices: DeviceBank,
    pub state: ControllerState,
    period: u64,
    steps_per_period: u32,
    next_event: usize,
    injected: VecDeque<EventKind>,
    frames: Vec<TelemetryFrame>,
    decisions: Vec<ControllerDecision>,
    events: Vec<EventLogEntry>,
    trace: Vec<PlantSample>,
    max_kcl: f64,
    hasher: Sha256,
    diagnostic: Option<String>,
}

/// Tolerance for matching event times to period boundaries, s.
const TIME_EPS: f64 = 1e-9;

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, EngineError> {
        scenario.validate()?;
        let angles = scenario.initial.rotor_angles.map(f64::to_radians);
        let plant = Plant::new(scenario.plant.clone(), scenario.initial_topology(), angles)?;
        let devices = DeviceBank::new(scenario.devices.clone(), &plant, scenario.seed, scenario.plant_step);
        let duty = |b: &[crate::plant::BuckConverter; 2]| [b[0].duty_cycle, b[1].duty_cycle];
        let state = ControllerState::new(
            &scenario.controller,
            scenario.initial.breakers,
            duty(&plant.exciters),
            duty(&plant.armature_drives),
        );
        let mut hasher = Sha256::new();
        hasher.update(b"gridloop-record-v1");
        Ok(Self {
            steps_per_period: scenario.steps_per_period(),
            scenario,
            plant,
            devices,
            state,
            period: 0,
            next_event: 0,
            injected: VecDeque::new(),
            frames: Vec::new(),
            decisions: Vec::new(),
            events: Vec::new(),
            trace: Vec::new(),
            max_kcl: 0.0,
            hasher,
            diagnostic: None,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Simulated time of the next period boundary, s.
    pub fn time(&self) -> f64 {
        self.period as f64 * self.scenario.controller.control_period
    }

    pub fn periods_done(&self) -> u64 {
        self.period
    }

    pub fn finished(&self) -> bool {
        self.diagnostic.is_some() || self.period >= self.scenario.period_count()
    }

    pub fn diagnostic(&self) -> Option<&str> {
        self.diagnostic.as_deref()
    }

    pub fn frames(&self) -> &[TelemetryFrame] {
        &self.frames
    }

    pub fn decisions(&self) -> &[ControllerDecision] {
        &self.decisions
    }

    pub fn events(&self) -> &[EventLogEntry] {
        &self.events
    }

    pub fn trace(&self) -> &[PlantSample] {
        &self.trace
    }

    pub fn max_kcl_residual(&self) -> f64 {
        self.max_kcl
    }

    /// Queues an event for the next period boundary after validating it.
    /// A rejected event leaves the run untouched.
    pub fn inject(&mut self, kind: EventKind) -> Result<(), EngineError> {
        kind.validate(&self.plant.config)?;
        self.injected.push_back(kind);
        Ok(())
    }

    fn apply(&mut self, kind: &EventKind) -> Result<(), EngineError> {
        match kind {
            EventKind::LoadStep { load, .. } => {
                let loads = &self.plant.config.loads.elements;
                let index = loads
                    .iter()
                    .position(|e| &e.id == load)
                    .ok_or_else(|| EngineError::UnknownDevice(load.clone()))?;
                let z = kind
                    .step_impedance(loads[index].impedance, self.plant.config.nominal_voltage)
                    .expect("load step");
                self.plant.set_load_impedance(index, z)?;
            }
            EventKind::RelayForce { device, state } => {
                self.devices
                    .relay_mut(device)
                    .ok_or_else(|| EngineError::UnknownDevice(device.clone()))?
                    .force(*state);
                self.plant.set_topology(self.devices.topology())?;
            }
            EventKind::GeneratorTrip { generator } => {
                self.state.requests.push(OperatorRequest::Trip { generator: *generator });
            }
            EventKind::SensorBias { sensor, bias } => {
                if !self.devices.set_bias(sensor, *bias) {
                    return Err(EngineError::UnknownDevice(sensor.clone()));
                }
            }
            EventKind::OperatorCommand(r) => self.state.requests.push(r.clone()),
        }
        Ok(())
    }

    fn log_event(&mut self, scheduled: f64, applied_at: f64, kind: &EventKind) {
        let entry = EventLogEntry {
            scheduled,
            applied_at,
            event: kind.label(),
        };
        self.hasher
            .update(format!("E {:.6} {:.6} {}\n", entry.scheduled, entry.applied_at, entry.event).as_bytes());
        self.events.push(entry);
    }

    fn sample_trace(&self, t: f64) -> PlantSample {
        let g = self.plant.generators();
        PlantSample {
            t,
            internal_emf: g.map(|g| g.internal_emf),
            rotor_angle: g.map(|g| g.rotor_angle),
            rotor_speed: g.map(|g| g.rotor_speed),
            field_voltage: g.map(|g| g.field_voltage),
            armature_current: [
                self.plant.sets[0].prime_mover.armature_current,
                self.plant.sets[1].prime_mover.armature_current,
            ],
        }
    }

    /// Runs one control period. Returns the frame and decision of the period,
    /// or `None` once the run has finished.
    pub fn step_period(&mut self) -> Option<(&TelemetryFrame, &ControllerDecision)> {
        if self.finished() {
            return None;
        }
        match self.try_step_period() {
            Ok(()) => Some((self.frames.last()?, self.decisions.last()?)),
            Err(e) => {
                self.diagnostic = Some(e.to_string());
                None
            }
        }
    }

    fn try_step_period(&mut self) -> Result<(), EngineError> {
        let period = self.scenario.controller.control_period;
        let t = self.time();
        let frame = self.devices.sample(&self.plant, t, period)?;
        if self.scenario.trace {
            self.trace.push(self.sample_trace(t));
        }

        while let Some(e) = self.scenario.events.get(self.next_event) {
            if e.t > t + TIME_EPS {
                break;
            }
            let e = e.clone();
            self.next_event += 1;
            self.apply(&e.kind)?;
            self.log_event(e.t, t, &e.kind);
        }
        while let Some(kind) = self.injected.pop_front() {
            self.apply(&kind)?;
            self.log_event(t, t, &kind);
        }

        let (state, decision) = controller_step(&frame, &self.state, &self.scenario.controller);
        self.state = state;
        self.plant.set_duties(decision.excitation_duty, decision.armature_duty)?;
        for c in decision.breaker_commands.iter().chain(&decision.relay_commands) {
            self.devices
                .relay_mut(&c.device)
                .ok_or_else(|| EngineError::UnknownDevice(c.device.clone()))?
                .command(c.state, t);
        }

        let mut buf = Vec::with_capacity(512);
        frame.digest_bytes(&mut buf);
        self.hasher.update(&buf);
        self.hasher.update(decision.log_line().as_bytes());
        self.frames.push(frame);
        self.decisions.push(decision);
        self.period += 1;

        let dt = self.scenario.plant_step;
        for j in 0..self.steps_per_period {
            self.plant.step(dt).map_err(|source| EngineError::Divergence {
                t: t + (j + 1) as f64 * dt,
                source,
            })?;
            if self.devices.tick_relays() {
                self.plant.set_topology(self.devices.topology())?;
            }
            self.max_kcl = self.max_kcl.max(self.plant.kcl_residual());
        }
        Ok(())
    }

    /// Runs to the end of the scenario.
    pub fn run(&mut self) {
        while self.step_period().is_some() {}
    }

    pub fn digest(&self) -> String {
        let mut h = self.hasher.clone();
        if let Some(d) = &self.diagnostic {
            h.update(format!("D {d}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn into_record(self) -> SimulationRecord {
        let digest = self.digest();
        SimulationRecord {
            energy: self.plant.energy,
            scenario: self.scenario,
            frames: self.frames,
            decisions: self.decisions,
            events: self.events,
            trace: self.trace,
            max_kcl_residual: self.max_kcl,
            diagnostic: self.diagnostic,
            digest,
        }
    }
}

/// Runs a scenario to completion. A mid-run divergence truncates the record
/// and sets its diagnostic.
pub fn run_scenario(scenario: &Scenario) -> Result<SimulationRecord, EngineError> {
    let mut sim = Simulation::new(scenario.clone())?;
    sim.run();
    Ok(sim.into_record())
}
