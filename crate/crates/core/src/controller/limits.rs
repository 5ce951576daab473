use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::ControllerConfig;
use crate::devices::TelemetryFrame;
use crate::plant::BREAKER_IDS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    LoadCurrent,
    LoadVoltage,
    LoadFrequency,
    StatorCurrent(usize),
    Speed(usize),
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::LoadCurrent => write!(f, "load_current"),
            Quantity::LoadVoltage => write!(f, "load_voltage"),
            Quantity::LoadFrequency => write!(f, "load_frequency"),
            Quantity::StatorCurrent(k) => write!(f, "g{}_current", k + 1),
            Quantity::Speed(k) => write!(f, "g{}_speed", k + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    InPermissibleBand,
    BeyondBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub quantity: Quantity,
    pub bound: Bound,
    pub value: f64,
    pub limit: f64,
    pub severity: Severity,
}

/// Classifies `value` against one bound; `None` when inside the limit.
///
/// An upper violation is beyond band above `limit · band`, a lower one below
/// `limit / band`.
pub fn classify(value: f64, limit: f64, bound: Bound, band: f64) -> Option<Severity> {
    match bound {
        Bound::Upper if value > limit * band => Some(Severity::BeyondBand),
        Bound::Upper if value > limit => Some(Severity::InPermissibleBand),
        Bound::Lower if value < limit / band => Some(Severity::BeyondBand),
        Bound::Lower if value < limit => Some(Severity::InPermissibleBand),
        _ => None,
    }
}

/// One record per exceeded (quantity, bound).
///
/// Machine quantities are only checked while that machine's breaker is
/// closed; bus voltage and frequency only while the bus is energized.
pub fn check_limits(frame: &TelemetryFrame, cfg: &ControllerConfig) -> Vec<Violation> {
    let band = cfg.permissible_band;
    let mut out = Vec::new();
    let mut push = |quantity, bound, value, limit| {
        if let Some(severity) = classify(value, limit, bound, band) {
            out.push(Violation {
                quantity,
                bound,
                value,
                limit,
                severity,
            });
        }
    };
    let lb = &frame.load_bus;
    push(Quantity::LoadCurrent, Bound::Upper, lb.current_rms, cfg.branch_current_limit);
    if lb.voltage_rms >= cfg.sync.dead_bus_fraction * cfg.nominal_voltage {
        let (lo, hi) = cfg.voltage_band();
        push(Quantity::LoadVoltage, Bound::Upper, lb.voltage_rms, hi);
        push(Quantity::LoadVoltage, Bound::Lower, lb.voltage_rms, lo);
        let f = cfg.nominal_frequency;
        push(Quantity::LoadFrequency, Bound::Upper, lb.frequency, f + cfg.frequency_band);
        push(Quantity::LoadFrequency, Bound::Lower, lb.frequency, f - cfg.frequency_band);
    }
    let speed_band = cfg.hz_to_rpm(cfg.frequency_band);
    for (k, g) in frame.generators.iter().enumerate() {
        if !frame.is_closed(BREAKER_IDS[k]) {
            continue;
        }
        push(Quantity::StatorCurrent(k), Bound::Upper, g.stator_current_rms, cfg.generator_current_limit);
        push(Quantity::Speed(k), Bound::Upper, g.speed_rpm, cfg.speed_setpoint_rpm + speed_band);
        push(Quantity::Speed(k), Bound::Lower, g.speed_rpm, cfg.speed_setpoint_rpm - speed_band);
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::devices::{GeneratorTelemetry, LoadBusTelemetry, RelayState, SwitchState};

    pub(crate) fn nominal_frame() -> TelemetryFrame {
        let cfg = ControllerConfig::default();
        let g = GeneratorTelemetry {
            terminal_voltage_rms: 230.0,
            stator_current_rms: 2.6,
            real_power: 600.0,
            reactive_power: 20.0,
            speed_rpm: 1400.0,
            torque: 4.1,
            frequency: cfg.nominal_frequency,
            phase_angle: 5.0,
        };
        TelemetryFrame {
            timestamp: 0.001,
            generators: [g, g],
            load_bus: LoadBusTelemetry {
                voltage_rms: 228.0,
                current_rms: 5.2,
                real_power: 1190.0,
                reactive_power: 0.0,
                frequency: cfg.nominal_frequency,
                phase_angle: 3.0,
            },
            dc_rails: Default::default(),
            switches: ["BRK1", "BRK2", "R1", "R2", "R3"]
                .iter()
                .map(|id| SwitchState {
                    id: id.to_string(),
                    state: RelayState::Closed,
                })
                .collect(),
        }
    }

    #[test]
    fn nominal_frame_has_no_violations() {
        assert!(check_limits(&nominal_frame(), &ControllerConfig::default()).is_empty());
    }

    #[test]
    fn overcurrent_in_permissible_band() {
        let mut f = nominal_frame();
        f.load_bus.current_rms = 16.5;
        let v = check_limits(&f, &ControllerConfig::default());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].quantity, Quantity::LoadCurrent);
        assert_eq!(v[0].severity, Severity::InPermissibleBand);
    }

    #[test]
    fn overcurrent_beyond_band() {
        let mut f = nominal_frame();
        f.load_bus.current_rms = 20.0;
        let v = check_limits(&f, &ControllerConfig::default());
        assert_eq!(v[0].severity, Severity::BeyondBand);
        assert_eq!(v[0].bound, Bound::Upper);
    }

    #[test]
    fn open_breaker_masks_machine_limits() {
        let mut f = nominal_frame();
        f.generators[0].speed_rpm = 0.0;
        f.switches[0].state = RelayState::Open;
        assert!(check_limits(&f, &ControllerConfig::default()).is_empty());
        f.switches[0].state = RelayState::Closed;
        let v = check_limits(&f, &ControllerConfig::default());
        assert_eq!(v[0].quantity, Quantity::Speed(0));
        assert_eq!(v[0].bound, Bound::Lower);
    }

    #[test]
    fn classify_edges() {
        assert_eq!(classify(16.0, 16.0, Bound::Upper, 1.1), None);
        assert_eq!(classify(17.6, 16.0, Bound::Upper, 1.1), Some(Severity::InPermissibleBand));
        assert_eq!(classify(17.61, 16.0, Bound::Upper, 1.1), Some(Severity::BeyondBand));
        assert_eq!(classify(200.0, 218.5, Bound::Lower, 1.1), Some(Severity::InPermissibleBand));
        assert_eq!(classify(190.0, 218.5, Bound::Lower, 1.1), Some(Severity::BeyondBand));
    }
}
