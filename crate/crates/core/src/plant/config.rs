//! Ratings and physical parameters of the two-set microgrid.
//!
//! Nameplate values follow the bench prototype: 1.2 kW / 1400 RPM generating
//! stations driven by 1 kW, 220 V separately excited DC motors with 0.55 A
//! field excitation, 16 A load switches and 3.3 V sensor references. Machine
//! constants that a nameplate does not carry (inertia, damping, reactances,
//! line impedance) default to values for which the rated point is a feasible
//! equilibrium.
//!
//! The bench power pack is listed as "3.5 A, 220 V, 230 V, 10 A (3-phase)".
//! Which rail carries which rating is not recorded; here the 220 V / 10 A
//! figures are the excitation rail and the armature rail is a separate
//! 250 V / 3.5 A supply.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::loads::{LoadBank, LoadElement};
use crate::error::PlantError;

pub const RPM_TO_RAD_S: f64 = 2.0 * PI / 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Rated electrical output, W.
    pub rated_power: f64,
    pub rated_speed_rpm: f64,
    pub pole_pairs: u32,
    /// Inertia of the whole motor-generator shaft, kg·m².
    pub inertia: f64,
    /// Viscous damping, N·m·s.
    pub damping: f64,
    pub synchronous_reactance: f64,
    pub stator_resistance: f64,
    /// First-order exciter lag, s.
    pub exciter_time_constant: f64,
    /// Open-circuit EMF per field volt at rated speed.
    pub emf_per_field_volt: f64,
    pub field_resistance: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            rated_power: 1200.0,
            rated_speed_rpm: 1400.0,
            pole_pairs: 2,
            inertia: 0.05,
            damping: 0.01,
            synchronous_reactance: 20.0,
            stator_resistance: 0.0,
            exciter_time_constant: 0.5,
            emf_per_field_volt: 230.0 / 110.0,
            field_resistance: 400.0,
        }
    }
}

impl GeneratorConfig {
    pub fn rated_speed(&self) -> f64 {
        self.rated_speed_rpm * RPM_TO_RAD_S
    }

    pub fn nominal_frequency(&self) -> f64 {
        self.pole_pairs as f64 * self.rated_speed_rpm / 60.0
    }

    pub fn synchronous_impedance(&self) -> Complex64 {
        Complex64::new(self.stator_resistance, self.synchronous_reactance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrimeMoverConfig {
    pub rated_power: f64,
    pub rated_voltage: f64,
    pub rated_field_current: f64,
    pub field_resistance: f64,
    pub armature_resistance: f64,
    pub armature_inductance: f64,
    /// Flux linkage per field ampere, V·s/(rad·A).
    pub flux_per_field_amp: f64,
}

impl Default for PrimeMoverConfig {
    fn default() -> Self {
        let rated_power = 1000.0;
        let rated_voltage = 220.0;
        let rated_field_current = 0.55;
        let armature_resistance = 2.0;
        let flux = rated_flux(
            rated_voltage,
            rated_power,
            1400.0 * RPM_TO_RAD_S,
            armature_resistance,
        );
        Self {
            rated_power,
            rated_voltage,
            rated_field_current,
            field_resistance: rated_voltage / rated_field_current,
            armature_resistance,
            armature_inductance: 0.1,
            flux_per_field_amp: flux / rated_field_current,
        }
    }
}

/// Flux linkage k·Φ for which a DC machine at `voltage` delivers `power` at `speed`.
///
/// Solves `V = R·T/(kΦ) + kΦ·ω` with `T = P/ω` for the high-flux root.
pub fn rated_flux(voltage: f64, power: f64, speed: f64, resistance: f64) -> f64 {
    let torque = power / speed;
    let disc = voltage * voltage - 4.0 * speed * resistance * torque;
    (voltage + disc.sqrt()) / (2.0 * speed)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineConfig {
    pub generator: GeneratorConfig,
    pub prime_mover: PrimeMoverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RailConfig {
    pub excitation_voltage: f64,
    pub excitation_current: f64,
    pub armature_voltage: f64,
    pub armature_current: f64,
}

impl Default for RailConfig {
    fn default() -> Self {
        Self {
            excitation_voltage: 220.0,
            excitation_current: 10.0,
            armature_voltage: 250.0,
            armature_current: 3.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TorqueMeterConfig {
    pub max_speed_rpm: f64,
    pub max_power: f64,
    pub max_torque: f64,
}

impl Default for TorqueMeterConfig {
    fn default() -> Self {
        Self {
            max_speed_rpm: 3000.0,
            max_power: 5500.0,
            max_torque: 17.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    pub machines: [MachineConfig; 2],
    pub rails: RailConfig,
    /// Nominal RMS voltage of the load bus (single-phase equivalent), V.
    pub nominal_voltage: f64,
    /// Series impedance of the Bus1→load and Bus2→load lines, `[R, X]` ohms.
    pub line_impedance: [Complex64; 2],
    pub load_switch_current_limit: f64,
    pub sensor_reference_voltage: f64,
    pub torque_meter: TorqueMeterConfig,
    pub loads: LoadBank,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let v = 230.0;
        Self {
            machines: Default::default(),
            rails: RailConfig::default(),
            nominal_voltage: v,
            line_impedance: [Complex64::new(0.5, 1.0); 2],
            load_switch_current_limit: 16.0,
            sensor_reference_voltage: 3.3,
            torque_meter: TorqueMeterConfig::default(),
            // Half of the combined 2.4 kW station rating.
            loads: LoadBank::new(vec![
                LoadElement::resistive("L1", 300.0, v, 1, "R1"),
                LoadElement::resistive("L2", 300.0, v, 2, "R2"),
                LoadElement::resistive("L3", 600.0, v, 3, "R3"),
            ]),
        }
    }
}

pub const BREAKER_IDS: [&str; 2] = ["BRK1", "BRK2"];

impl PlantConfig {
    pub fn nominal_frequency(&self) -> f64 {
        self.machines[0].generator.nominal_frequency()
    }

    pub fn rated_current(&self) -> f64 {
        self.machines
            .iter()
            .map(|m| m.generator.rated_power / self.nominal_voltage)
            .fold(0.0, f64::max)
    }

    /// Every switchable device id: the two generator breakers then the load relays.
    pub fn device_ids(&self) -> Vec<String> {
        BREAKER_IDS
            .iter()
            .map(|s| s.to_string())
            .chain(self.loads.elements.iter().map(|e| e.relay.clone()))
            .collect()
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |what: &str| Err(PlantError::InvalidParameter(what.to_owned()));
        for (i, m) in self.machines.iter().enumerate() {
            let g = &m.generator;
            let p = &m.prime_mover;
            let positive = [
                g.rated_power,
                g.rated_speed_rpm,
                g.inertia,
                g.synchronous_reactance,
                g.exciter_time_constant,
                g.emf_per_field_volt,
                g.field_resistance,
                p.rated_power,
                p.rated_voltage,
                p.rated_field_current,
                p.field_resistance,
                p.armature_resistance,
                p.armature_inductance,
                p.flux_per_field_amp,
            ];
            if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return bad(&format!("machine {} has a non-positive rating", i + 1));
            }
            if g.pole_pairs == 0 {
                return bad("pole_pairs must be >= 1");
            }
            if g.damping < 0.0 || g.stator_resistance < 0.0 {
                return bad("damping and stator resistance must be >= 0");
            }
        }
        if self.machines[0].generator.nominal_frequency()
            != self.machines[1].generator.nominal_frequency()
        {
            return bad("both machines must share one nominal frequency");
        }
        let rails = [
            self.rails.excitation_voltage,
            self.rails.excitation_current,
            self.rails.armature_voltage,
            self.rails.armature_current,
            self.nominal_voltage,
            self.sensor_reference_voltage,
            self.torque_meter.max_power,
            self.torque_meter.max_speed_rpm,
            self.torque_meter.max_torque,
        ];
        if rails.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return bad("rail, sensor and meter ratings must be positive");
        }
        if !(self.load_switch_current_limit >= 0.0) {
            return bad("load switch limit must be >= 0");
        }
        for z in &self.line_impedance {
            if z.re < 0.0 || z.norm() <= 0.0 || !z.norm().is_finite() {
                return bad("line impedance must be non-degenerate with R >= 0");
            }
        }
        self.loads.validate()?;
        let ids = self.device_ids();
        for (i, id) in ids.iter().enumerate() {
            if ids[i + 1..].contains(id) {
                return bad(&format!("device id {id} used twice"));
            }
        }
        Ok(())
    }
}
