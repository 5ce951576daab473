use serde::{Deserialize, Serialize};

use crate::error::PlantError;

/// Averaged (ripple-free) step-down converter feeding a field or armature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuckConverter {
    pub duty_cycle: f64,
    pub input_voltage: f64,
}

impl BuckConverter {
    pub fn new(input_voltage: f64) -> Self {
        Self {
            duty_cycle: 0.0,
            input_voltage,
        }
    }

    /// Sets the duty; out-of-range values are refused, never clamped.
    pub fn set_duty(&mut self, duty: f64) -> Result<(), PlantError> {
        if !(0.0..=1.0).contains(&duty) {
            return Err(PlantError::DutyOutOfRange(duty));
        }
        self.duty_cycle = duty;
        Ok(())
    }

    pub fn output_voltage(&self) -> f64 {
        self.duty_cycle * self.input_voltage
    }
}

pub fn buck_output(converter: &BuckConverter) -> Result<f64, PlantError> {
    if !(0.0..=1.0).contains(&converter.duty_cycle) {
        return Err(PlantError::DutyOutOfRange(converter.duty_cycle));
    }
    Ok(converter.output_voltage())
}
