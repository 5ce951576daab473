use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, OperatorRequest};
use crate::devices::{DeviceConfig, RelayState, SENSOR_LABELS};
use crate::error::EngineError;
use crate::plant::{PlantConfig, Topology, BREAKER_IDS};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Replaces a load's impedance. `power` gives a resistive element drawing
    /// that many watts at nominal voltage.
    LoadStep {
        load: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        power: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resistance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reactance: Option<f64>,
    },
    /// Moves contacts immediately, bypassing the controller.
    RelayForce { device: String, state: RelayState },
    GeneratorTrip { generator: usize },
    SensorBias { sensor: String, bias: f64 },
    OperatorCommand(OperatorRequest),
}

impl EventKind {
    pub fn label(&self) -> String {
        match self {
            EventKind::LoadStep {
                load,
                power,
                resistance,
                reactance,
            } => {
                let mut s = format!("load_step {load}");
                if let Some(p) = power {
                    s += &format!(" power={p}");
                }
                if let Some(r) = resistance {
                    s += &format!(" r={r}");
                }
                if let Some(x) = reactance {
                    s += &format!(" x={x}");
                }
                s
            }
            EventKind::RelayForce { device, state } => format!("relay_force {device} {}", state.as_str()),
            EventKind::GeneratorTrip { generator } => format!("generator_trip g{generator}"),
            EventKind::SensorBias { sensor, bias } => format!("sensor_bias {sensor} {bias}"),
            EventKind::OperatorCommand(r) => format!("operator_command {}", serde_json::to_string(r).unwrap_or_default()),
        }
    }

    /// Checks every referenced id against the plant.
    pub fn validate(&self, plant: &PlantConfig) -> Result<(), EngineError> {
        let devices = plant.device_ids();
        let known_device = |id: &str| {
            if devices.iter().any(|d| d == id) {
                Ok(())
            } else {
                Err(EngineError::UnknownDevice(id.to_owned()))
            }
        };
        let machine = |g: usize| {
            if (1..=2).contains(&g) {
                Ok(())
            } else {
                Err(EngineError::UnknownDevice(format!("generator {g}")))
            }
        };
        match self {
            EventKind::LoadStep {
                load,
                power,
                resistance,
                reactance,
            } => {
                if plant.loads.get(load).is_none() {
                    return Err(EngineError::UnknownDevice(load.clone()));
                }
                match (power, resistance, reactance) {
                    (Some(p), None, None) if p.is_finite() && *p > 0.0 => Ok(()),
                    (None, Some(_), _) | (None, None, Some(_)) => Ok(()),
                    _ => Err(EngineError::Validation(format!(
                        "load_step {load}: give either a positive power or resistance/reactance"
                    ))),
                }
            }
            EventKind::RelayForce { device, state } => {
                known_device(device)?;
                if BREAKER_IDS.contains(&device.as_str()) && *state == RelayState::Closed {
                    return Err(EngineError::Validation(format!(
                        "relay_force cannot close breaker {device}; use a sync_request"
                    )));
                }
                Ok(())
            }
            EventKind::GeneratorTrip { generator } => machine(*generator),
            EventKind::SensorBias { sensor, bias } => {
                if !SENSOR_LABELS.contains(&sensor.as_str()) {
                    return Err(EngineError::UnknownDevice(sensor.clone()));
                }
                if !bias.is_finite() {
                    return Err(EngineError::Validation("sensor bias must be finite".into()));
                }
                Ok(())
            }
            EventKind::OperatorCommand(r) => match r {
                OperatorRequest::RelaySet { device, .. } => known_device(device),
                OperatorRequest::SyncRequest { generator }
                | OperatorRequest::ResetTrip { generator }
                | OperatorRequest::Trip { generator } => machine(*generator),
                OperatorRequest::SetpointChange { generator, .. } => generator.map_or(Ok(()), machine),
            },
        }
    }

    /// New impedance for a load step, given the present element.
    pub(crate) fn step_impedance(&self, current: Complex64, nominal_voltage: f64) -> Option<Complex64> {
        match self {
            EventKind::LoadStep {
                power: Some(p), ..
            } => Some(Complex64::new(nominal_voltage * nominal_voltage / p, 0.0)),
            EventKind::LoadStep {
                resistance,
                reactance,
                ..
            } => Some(Complex64::new(
                resistance.unwrap_or(current.re),
                reactance.unwrap_or(current.im),
            )),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialConditions {
    pub breakers: [bool; 2],
    /// Load relay states in load order; empty means all closed.
    pub loads: Vec<bool>,
    /// Electrical rotor angles, degrees.
    pub rotor_angles: [f64; 2],
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            breakers: [true; 2],
            loads: Vec::new(),
            rotor_angles: [0.0; 2],
        }
    }
}

/// A complete, reproducible run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration: f64,
    #[serde(default = "default_plant_step")]
    pub plant_step: f64,
    /// Keep per-period machine states in the record.
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub devices: DeviceConfig,
    #[serde(default)]
    pub initial: InitialConditions,
    #[serde(default)]
    pub events: Vec<Event>,
}

fn default_plant_step() -> f64 {
    1e-4
}

impl Scenario {
    /// Defaults throughout, two machines online at half load.
    pub fn nominal(name: &str, duration: f64) -> Self {
        let mut s = Self {
            schema_version: SCHEMA_VERSION,
            name: name.to_owned(),
            seed: 0,
            duration,
            plant_step: default_plant_step(),
            trace: false,
            plant: PlantConfig::default(),
            controller: ControllerConfig::default(),
            devices: DeviceConfig::default(),
            initial: InitialConditions::default(),
            events: Vec::new(),
        };
        s.resolve();
        s
    }

    pub fn from_toml(text: &str) -> Result<Self, EngineError> {
        let mut s: Scenario = toml::from_str(text)?;
        s.resolve();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String, EngineError> {
        toml::to_string(self).map_err(|e| EngineError::Validation(e.to_string()))
    }

    /// Fills values that follow from the plant.
    pub fn resolve(&mut self) {
        let c = &mut self.controller;
        c.pole_pairs = self.plant.machines[0].generator.pole_pairs;
        c.nominal_frequency = self.plant.nominal_frequency();
        if c.shedding_order.is_empty() {
            c.shedding_order = ControllerConfig::order_from_loads(&self.plant.loads);
        }
        if self.initial.loads.is_empty() {
            self.initial.loads = vec![true; self.plant.loads.elements.len()];
        }
    }

    /// Number of control periods, rounded to the nearest integer.
    pub fn period_count(&self) -> u64 {
        (self.duration / self.controller.control_period).round() as u64
    }

    /// Plant steps per control period.
    pub fn steps_per_period(&self) -> u32 {
        (self.controller.control_period / self.plant_step).round() as u32
    }

    pub fn initial_topology(&self) -> Topology {
        Topology {
            breakers: self.initial.breakers,
            loads: self.initial.loads.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Validation(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad("duration must be finite and >= 0".into());
        }
        if !(self.plant_step.is_finite() && self.plant_step > 0.0) {
            return bad("plant_step must be positive".into());
        }
        self.plant.validate().map_err(|e| EngineError::Validation(e.to_string()))?;
        self.controller.validate().map_err(EngineError::Validation)?;
        self.controller
            .validate_against(&self.plant.loads)
            .map_err(EngineError::Validation)?;
        self.devices.validate().map_err(EngineError::Validation)?;
        let ratio = self.controller.control_period / self.plant_step;
        if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad(format!(
                "control_period / plant_step = {ratio} must be a positive integer"
            ));
        }
        if self.initial.loads.len() != self.plant.loads.elements.len() {
            return bad("initial.loads must have one entry per load".into());
        }
        let mut last = f64::NEG_INFINITY;
        for e in &self.events {
            if !(e.t >= 0.0 && e.t <= self.duration) {
                return bad(format!("event at t={} outside [0, duration]", e.t));
            }
            if e.t < last {
                return bad("events must be sorted by t".into());
            }
            last = e.t;
            e.kind.validate(&self.plant)?;
        }
        Ok(())
    }
}
