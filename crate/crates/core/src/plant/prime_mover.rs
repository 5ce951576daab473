//! Separately excited DC motor used as the prime mover of each set.
//!
//! Armature: `L·di/dt = V − R·i − kΦ·ω`; shaft: `J·dω/dt = kΦ·i − T_load`, with
//! `kΦ` proportional to the field current `V_field / R_field`. The shaft does
//! not reverse: speed is floored at zero.

use serde::{Deserialize, Serialize};

use super::config::PrimeMoverConfig;
use super::integrator::heun;
use crate::error::PlantError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrimeMoverState {
    pub armature_voltage: f64,
    pub armature_current: f64,
    pub field_current: f64,
    /// Electromagnetic torque on the shaft, N·m.
    pub shaft_torque: f64,
    /// rad/s
    pub shaft_speed: f64,
    /// W; always `shaft_torque * shaft_speed`.
    pub shaft_power: f64,
}

impl PrimeMoverState {
    /// Recomputes torque and power from currents and speed.
    pub(crate) fn refresh(&mut self, params: &PrimeMoverConfig) {
        let flux = params.flux_per_field_amp * self.field_current;
        self.shaft_torque = flux * self.armature_current;
        self.shaft_power = self.shaft_torque * self.shaft_speed;
    }
}

pub fn field_current(params: &PrimeMoverConfig, field_supply: f64) -> f64 {
    (field_supply / params.field_resistance).max(0.0)
}

/// `di/dt` of the armature circuit.
pub(crate) fn armature_derivative(
    params: &PrimeMoverConfig,
    armature_voltage: f64,
    field_current: f64,
    current: f64,
    speed: f64,
) -> f64 {
    let flux = params.flux_per_field_amp * field_current;
    (armature_voltage - params.armature_resistance * current - flux * speed)
        / params.armature_inductance
}

pub(crate) fn check_finite(value: f64, quantity: &'static str) -> Result<f64, PlantError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(PlantError::Divergence { quantity })
    }
}

/// Advances a free-standing prime mover (shaft inertia `inertia`) by one step.
pub fn step_prime_mover(
    state: &PrimeMoverState,
    params: &PrimeMoverConfig,
    inertia: f64,
    armature_voltage: f64,
    field_supply: f64,
    load_torque: f64,
    dt: f64,
) -> Result<PrimeMoverState, PlantError> {
    if !(dt > 0.0) {
        return Err(PlantError::InvalidParameter(format!("dt = {dt}")));
    }
    let i_f = field_current(params, field_supply);
    let flux = params.flux_per_field_amp * i_f;
    let x = [state.armature_current, state.shaft_speed];
    let next = heun(&x, dt, |s| {
        let di = armature_derivative(params, armature_voltage, i_f, s[0], s[1]);
        let dw = (flux * s[0] - load_torque) / inertia;
        Ok::<_, PlantError>([di, dw])
    })?;
    let mut out = PrimeMoverState {
        armature_voltage,
        armature_current: check_finite(next[0], "armature_current")?,
        field_current: i_f,
        shaft_speed: check_finite(next[1], "shaft_speed")?.max(0.0),
        ..Default::default()
    };
    out.refresh(params);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const J: f64 = 0.05;

    fn settle(v: f64, load: f64, seconds: f64) -> PrimeMoverState {
        let p = PrimeMoverConfig::default();
        let dt = 1e-4;
        let mut s = PrimeMoverState::default();
        for _ in 0..(seconds / dt) as usize {
            s = step_prime_mover(&s, &p, J, v, p.rated_voltage, load, dt).unwrap();
        }
        s
    }

    #[test]
    fn all_zero_equilibrium_is_preserved() {
        let p = PrimeMoverConfig::default();
        let s0 = PrimeMoverState::default();
        let s1 = step_prime_mover(&s0, &p, J, 0.0, 0.0, 0.0, 1e-4).unwrap();
        assert_eq!(s1, s0);
    }

    #[test]
    fn no_load_speed_matches_back_emf_constant() {
        let p = PrimeMoverConfig::default();
        let flux = p.flux_per_field_amp * p.rated_field_current;
        let expected = 220.0 / flux;
        let s = settle(220.0, 0.0, 3.0);
        assert!(
            (s.shaft_speed - expected).abs() / expected < 0.02,
            "{} vs {}",
            s.shaft_speed,
            expected
        );
    }

    #[test]
    fn rated_load_delivers_rated_power() {
        // Load torque T with T·ω_ss = 1 kW where ω_ss = (V − R·T/kΦ)/kΦ,
        // i.e. R·T² − V·kΦ·T + P·kΦ² = 0 (take the low-torque root).
        let p = PrimeMoverConfig::default();
        let k = p.flux_per_field_amp * p.rated_field_current;
        let (r, v, pw) = (p.armature_resistance, 220.0, 1000.0);
        let disc = (v * k).powi(2) - 4.0 * r * pw * k * k;
        let torque = (v * k - disc.sqrt()) / (2.0 * r);
        let s = settle(220.0, torque, 3.0);
        assert!((s.shaft_power - 1000.0).abs() / 1000.0 < 0.02, "{}", s.shaft_power);
        assert!((s.shaft_power - s.shaft_torque * s.shaft_speed).abs() <= 1e-9 * s.shaft_power);
    }

    #[test]
    fn non_finite_input_reports_divergence() {
        let p = PrimeMoverConfig::default();
        let s0 = PrimeMoverState::default();
        let err = step_prime_mover(&s0, &p, J, f64::NAN, 220.0, 0.0, 1e-4).unwrap_err();
        assert_eq!(
            err,
            PlantError::Divergence {
                quantity: "armature_current"
            }
        );
    }
}
