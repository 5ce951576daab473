//! Synchronous generator: EMF behind synchronous impedance, classical swing
//! equation, first-order exciter lag.
//!
//! Rotor angle is electrical and measured against a frame rotating at the
//! nominal electrical frequency, so `dδ/dt = p·ω − 2π·f_nom`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::GeneratorConfig;
use super::integrator::heun;
use super::network::NetworkState;
use super::prime_mover::check_finite;
use crate::error::PlantError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeneratorState {
    /// Electrical radians against the nominal synchronous frame.
    pub rotor_angle: f64,
    /// Mechanical rad/s.
    pub rotor_speed: f64,
    pub field_voltage: f64,
    /// EMF magnitude, V.
    pub internal_emf: f64,
    pub terminal_voltage: Complex64,
    pub stator_current: Complex64,
}

impl GeneratorState {
    pub fn emf_phasor(&self) -> Complex64 {
        Complex64::from_polar(self.internal_emf, self.rotor_angle)
    }

    /// Electrical frequency implied by the rotor speed, Hz.
    pub fn electrical_frequency(&self, cfg: &GeneratorConfig) -> f64 {
        cfg.pole_pairs as f64 * self.rotor_speed / (2.0 * PI)
    }

    /// Updates terminal quantities for a given stator current (zero when open).
    pub(crate) fn set_stator_current(&mut self, cfg: &GeneratorConfig, current: Complex64) {
        self.stator_current = current;
        self.terminal_voltage = self.emf_phasor() - cfg.synchronous_impedance() * current;
    }
}

/// How the machine terminals see the rest of the system during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridTie {
    /// Breaker open: no stator current.
    Open,
    /// Breaker closed onto a bus held at this phasor for the step.
    Bus(Complex64),
}

/// EMF magnitude the exciter drives toward at the given field voltage and speed.
pub fn excitation_target(cfg: &GeneratorConfig, field_voltage: f64, speed: f64) -> f64 {
    (cfg.emf_per_field_volt * field_voltage * speed / cfg.rated_speed()).max(0.0)
}

/// Air-gap power `Re(E·I*)`: terminal power plus stator copper loss.
pub fn airgap_power(emf: Complex64, current: Complex64) -> f64 {
    (emf * current.conj()).re
}

pub(crate) fn torque_from_power(power: f64, speed: f64) -> Result<f64, PlantError> {
    if speed > 0.0 {
        Ok(power / speed)
    } else if power == 0.0 {
        Ok(0.0)
    } else {
        Err(PlantError::DegenerateSpeed { power })
    }
}

/// Electrical torque of generator `index` given a solved network.
pub fn electrical_torque(
    gen: &GeneratorState,
    network: &NetworkState,
    index: usize,
) -> Result<f64, PlantError> {
    let current = network
        .generator_currents
        .get(index)
        .copied()
        .unwrap_or_default();
    torque_from_power(airgap_power(gen.emf_phasor(), current), gen.rotor_speed)
}

/// `[dδ/dt, dω/dt, dE/dt]` for given mechanical torque, field voltage and stator current.
pub(crate) fn swing_derivatives(
    cfg: &GeneratorConfig,
    angle: f64,
    speed: f64,
    emf: f64,
    mech_torque: f64,
    field_voltage: f64,
    current: Complex64,
) -> Result<[f64; 3], PlantError> {
    let synchronous = 2.0 * PI * cfg.nominal_frequency();
    let e = Complex64::from_polar(emf, angle);
    let t_elec = torque_from_power(airgap_power(e, current), speed)?;
    Ok([
        cfg.pole_pairs as f64 * speed - synchronous,
        (mech_torque - t_elec - cfg.damping * speed) / cfg.inertia,
        (excitation_target(cfg, field_voltage, speed) - emf) / cfg.exciter_time_constant,
    ])
}

fn tie_current(cfg: &GeneratorConfig, tie: GridTie, angle: f64, emf: f64) -> Complex64 {
    match tie {
        GridTie::Open => Complex64::new(0.0, 0.0),
        GridTie::Bus(v) => {
            (Complex64::from_polar(emf, angle) - v) / cfg.synchronous_impedance()
        }
    }
}

pub fn step_generator(
    state: &GeneratorState,
    cfg: &GeneratorConfig,
    mech_torque: f64,
    field_voltage: f64,
    tie: GridTie,
    dt: f64,
) -> Result<GeneratorState, PlantError> {
    if !(dt > 0.0) {
        return Err(PlantError::InvalidParameter(format!("dt = {dt}")));
    }
    if !(field_voltage >= 0.0) {
        return Err(PlantError::InvalidParameter(format!(
            "field voltage {field_voltage}"
        )));
    }
    let x = [state.rotor_angle, state.rotor_speed, state.internal_emf];
    let next = heun(&x, dt, |s| {
        let i = tie_current(cfg, tie, s[0], s[2]);
        swing_derivatives(cfg, s[0], s[1], s[2], mech_torque, field_voltage, i)
    })?;
    let mut out = GeneratorState {
        rotor_angle: check_finite(next[0], "rotor_angle")?,
        rotor_speed: check_finite(next[1], "rotor_speed")?.max(0.0),
        field_voltage,
        internal_emf: check_finite(next[2], "internal_emf")?.max(0.0),
        ..Default::default()
    };
    let i = tie_current(cfg, tie, out.rotor_angle, out.internal_emf);
    out.set_stator_current(cfg, i);
    Ok(out)
}
