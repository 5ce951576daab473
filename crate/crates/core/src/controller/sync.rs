use serde::{Deserialize, Serialize};

use super::config::SyncTolerances;
use crate::devices::{GeneratorTelemetry, LoadBusTelemetry};

/// Mismatch between an incoming machine and the live bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncResiduals {
    /// |ΔV| as a fraction of nominal.
    pub voltage: f64,
    /// f_machine − f_bus, Hz.
    pub frequency: f64,
    /// Phase of machine minus bus, degrees in (−180, 180].
    pub phase: f64,
}

impl SyncResiduals {
    pub fn within(&self, tol: &SyncTolerances) -> bool {
        self.voltage <= tol.voltage && self.frequency.abs() <= tol.frequency && self.phase.abs() <= tol.phase
    }

    /// Name of the first criterion out of tolerance.
    pub fn blocking(&self, tol: &SyncTolerances) -> Option<&'static str> {
        if self.voltage > tol.voltage {
            Some("voltage")
        } else if self.frequency.abs() > tol.frequency {
            Some("frequency")
        } else if self.phase.abs() > tol.phase {
            Some("phase")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyncStatus {
    /// Bus below the dead-bus threshold; `ready` when the machine itself is
    /// at nominal voltage and frequency.
    DeadBus { ready: bool },
    Live {
        residuals: SyncResiduals,
        in_tolerance: bool,
    },
}

pub fn phase_difference(a_deg: f64, b_deg: f64) -> f64 {
    let d = (a_deg - b_deg + 180.0).rem_euclid(360.0) - 180.0;
    if d == -180.0 {
        180.0
    } else {
        d
    }
}

pub fn residuals(machine: &GeneratorTelemetry, bus: &LoadBusTelemetry, nominal_voltage: f64) -> SyncResiduals {
    SyncResiduals {
        voltage: (machine.terminal_voltage_rms - bus.voltage_rms).abs() / nominal_voltage,
        frequency: machine.frequency - bus.frequency,
        phase: phase_difference(machine.phase_angle, bus.phase_angle),
    }
}

/// Instantaneous synchronism check. The confirmation window is applied by
/// the caller across successive periods.
pub fn sync_check(
    machine: &GeneratorTelemetry,
    bus: &LoadBusTelemetry,
    tol: &SyncTolerances,
    nominal_voltage: f64,
    nominal_frequency: f64,
) -> SyncStatus {
    if bus.voltage_rms < tol.dead_bus_fraction * nominal_voltage {
        let ready = (machine.terminal_voltage_rms - nominal_voltage).abs() <= tol.voltage * nominal_voltage
            && (machine.frequency - nominal_frequency).abs() <= tol.frequency;
        return SyncStatus::DeadBus { ready };
    }
    let r = residuals(machine, bus, nominal_voltage);
    SyncStatus::Live {
        residuals: r,
        in_tolerance: r.within(tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine(v: f64, f: f64, ph: f64) -> GeneratorTelemetry {
        GeneratorTelemetry {
            terminal_voltage_rms: v,
            frequency: f,
            phase_angle: ph,
            ..Default::default()
        }
    }

    fn bus(v: f64, f: f64, ph: f64) -> LoadBusTelemetry {
        LoadBusTelemetry {
            voltage_rms: v,
            frequency: f,
            phase_angle: ph,
            ..Default::default()
        }
    }

    fn permissive(m: GeneratorTelemetry, b: LoadBusTelemetry) -> bool {
        matches!(
            sync_check(&m, &b, &SyncTolerances::default(), 230.0, 46.67),
            SyncStatus::Live { in_tolerance: true, .. }
        )
    }

    #[test]
    fn identical_phasors_permit() {
        assert!(permissive(machine(230.0, 46.67, 12.0), bus(230.0, 46.67, 12.0)));
    }

    #[test]
    fn anti_phase_blocks() {
        assert!(!permissive(machine(230.0, 46.67, 90.0), bus(230.0, 46.67, -90.0)));
    }

    #[test]
    fn boundary_sweep() {
        let v = 230.0;
        let ok = machine(v * 1.04, 46.77, 8.0);
        assert!(permissive(ok, bus(v, 46.67, 0.0)));
        // Each residual pushed just above its bound on its own.
        assert!(!permissive(machine(v * 1.0501, 46.77, 8.0), bus(v, 46.67, 0.0)));
        assert!(!permissive(machine(v * 1.04, 46.8701, 8.0), bus(v, 46.67, 0.0)));
        assert!(!permissive(machine(v * 1.04, 46.77, 10.01), bus(v, 46.67, 0.0)));
        assert!(!permissive(machine(v * 1.04, 46.4699, -8.0), bus(v, 46.67, 0.0)));
        assert!(!permissive(machine(v * 1.04, 46.77, -10.01), bus(v, 46.67, 0.0)));
    }

    #[test]
    fn phase_wraps_across_180() {
        assert!((phase_difference(175.0, -178.0) + 7.0).abs() < 1e-9);
        assert!(permissive(machine(230.0, 46.67, 178.0), bus(230.0, 46.67, -179.0)));
    }

    #[test]
    fn dead_bus_is_reported_distinctly() {
        let s = sync_check(
            &machine(231.0, 46.7, 0.0),
            &bus(3.0, 0.0, 0.0),
            &SyncTolerances::default(),
            230.0,
            46.67,
        );
        assert_eq!(s, SyncStatus::DeadBus { ready: true });
    }
}
