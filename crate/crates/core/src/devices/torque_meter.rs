use serde::{Deserialize, Serialize};

use crate::plant::config::{TorqueMeterConfig, RPM_TO_RAD_S};
use crate::plant::PrimeMoverState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorqueReading {
    pub speed_rpm: f64,
    pub torque: f64,
    pub power: f64,
}

/// Shaft speed, torque and power as the bench torque meter reports them,
/// clipped to the instrument range.
pub fn read_torque_meter(pm: &PrimeMoverState, meter: &TorqueMeterConfig) -> TorqueReading {
    let speed_rpm = (pm.shaft_speed / RPM_TO_RAD_S).clamp(-meter.max_speed_rpm, meter.max_speed_rpm);
    let torque = pm.shaft_torque.clamp(-meter.max_torque, meter.max_torque);
    let power = (torque * speed_rpm * RPM_TO_RAD_S).clamp(-meter.max_power, meter.max_power);
    TorqueReading {
        speed_rpm,
        torque,
        power,
    }
}
