use serde::{Deserialize, Serialize};

use crate::plant::LoadBank;

/// Proportional-integral gains with a feedforward bias added to the output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncTolerances {
    /// Voltage magnitude mismatch as a fraction of nominal.
    pub voltage: f64,
    /// Hz.
    pub frequency: f64,
    /// Degrees.
    pub phase: f64,
    /// Consecutive in-tolerance control periods required before closing.
    pub window: u32,
    /// Slip the incoming machine is held at above bus frequency, Hz.
    pub slip: f64,
    /// Track bus frequency automatically while synchronizing.
    pub auto_match: bool,
    /// Below this fraction of nominal voltage the bus is treated as dead.
    pub dead_bus_fraction: f64,
}

impl Default for SyncTolerances {
    fn default() -> Self {
        Self {
            voltage: 0.05,
            frequency: 0.2,
            phase: 10.0,
            window: 20,
            slip: 0.05,
            auto_match: true,
            dead_bus_fraction: 0.1,
        }
    }
}

/// A sheddable load and the relay that disconnects it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheddableLoad {
    pub load: String,
    pub relay: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub control_period: f64,
    pub nominal_voltage: f64,
    /// Fractional tolerance of the load-bus voltage band.
    pub voltage_tolerance: f64,
    pub nominal_frequency: f64,
    /// Half-width of the load-bus frequency band, Hz.
    pub frequency_band: f64,
    pub branch_current_limit: f64,
    pub generator_current_limit: f64,
    /// Multiplier on a limit below which a violation is corrected by
    /// regulation rather than switching.
    pub permissible_band: f64,
    pub speed_setpoint_rpm: f64,
    /// Filled from the plant when loaded through a scenario.
    pub pole_pairs: u32,
    /// Electrical rating of each machine, W.
    pub generator_rating: [f64; 2],
    pub excitation_gains: PiGains,
    pub speed_gains: PiGains,
    pub sync: SyncTolerances,
    /// Loads in shedding order, first shed first. Left empty in a scenario
    /// file it is filled from load priorities.
    #[serde(default)]
    pub shedding_order: Vec<SheddableLoad>,
    /// Periods a fast violation (overcurrent, machine fault) must persist.
    pub confirmation_periods: u32,
    /// Periods a slow violation (overload, capacity) must persist.
    pub overload_confirmation_periods: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            control_period: 1e-3,
            nominal_voltage: 230.0,
            voltage_tolerance: 0.05,
            nominal_frequency: 2.0 * 1400.0 / 60.0,
            frequency_band: 1.0,
            branch_current_limit: 16.0,
            generator_current_limit: 5.5,
            permissible_band: 1.1,
            speed_setpoint_rpm: 1400.0,
            pole_pairs: 2,
            generator_rating: [1200.0; 2],
            excitation_gains: PiGains {
                kp: 0.004,
                ki: 0.012,
                bias: 0.5,
            },
            speed_gains: PiGains {
                kp: 0.0015,
                ki: 0.01,
                bias: 0.85,
            },
            sync: SyncTolerances::default(),
            shedding_order: vec![
                SheddableLoad {
                    load: "L1".into(),
                    relay: "R1".into(),
                },
                SheddableLoad {
                    load: "L2".into(),
                    relay: "R2".into(),
                },
                SheddableLoad {
                    load: "L3".into(),
                    relay: "R3".into(),
                },
            ],
            confirmation_periods: 50,
            overload_confirmation_periods: 1000,
        }
    }
}

impl ControllerConfig {
    pub fn voltage_band(&self) -> (f64, f64) {
        let v = self.nominal_voltage;
        (v * (1.0 - self.voltage_tolerance), v * (1.0 + self.voltage_tolerance))
    }

    pub fn rpm_to_hz(&self, rpm: f64) -> f64 {
        rpm * self.pole_pairs as f64 / 60.0
    }

    pub fn hz_to_rpm(&self, hz: f64) -> f64 {
        hz * 60.0 / self.pole_pairs as f64
    }

    /// Shedding order taken from load priorities.
    pub fn order_from_loads(loads: &LoadBank) -> Vec<SheddableLoad> {
        let mut v: Vec<_> = loads.elements.iter().collect();
        v.sort_by_key(|e| e.priority);
        v.into_iter()
            .map(|e| SheddableLoad {
                load: e.id.clone(),
                relay: e.relay.clone(),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        let nonneg = [
            ("voltage_tolerance", self.voltage_tolerance),
            ("frequency_band", self.frequency_band),
            ("sync.voltage", self.sync.voltage),
            ("sync.frequency", self.sync.frequency),
            ("sync.phase", self.sync.phase),
            ("sync.slip", self.sync.slip),
            ("sync.dead_bus_fraction", self.sync.dead_bus_fraction),
        ];
        for (name, x) in nonneg {
            if !(x.is_finite() && x >= 0.0) {
                return Err(format!("{name} must be a finite value >= 0"));
            }
        }
        let positive = [
            ("control_period", self.control_period),
            ("nominal_voltage", self.nominal_voltage),
            ("nominal_frequency", self.nominal_frequency),
            ("branch_current_limit", self.branch_current_limit),
            ("generator_current_limit", self.generator_current_limit),
            ("speed_setpoint_rpm", self.speed_setpoint_rpm),
            ("generator_rating[0]", self.generator_rating[0]),
            ("generator_rating[1]", self.generator_rating[1]),
        ];
        for (name, x) in positive {
            if !(x.is_finite() && x > 0.0) {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(self.permissible_band >= 1.0 && self.permissible_band.is_finite()) {
            return Err("permissible_band must be >= 1".into());
        }
        if self.pole_pairs == 0 {
            return Err("pole_pairs must be >= 1".into());
        }
        for (name, g) in [("excitation_gains", self.excitation_gains), ("speed_gains", self.speed_gains)] {
            if !(g.kp.is_finite() && g.ki.is_finite() && g.kp >= 0.0 && g.ki >= 0.0) {
                return Err(format!("{name}: kp and ki must be finite and >= 0"));
            }
            if !(0.0..=1.0).contains(&g.bias) {
                return Err(format!("{name}: bias must lie in [0, 1]"));
            }
        }
        if self.confirmation_periods == 0 || self.overload_confirmation_periods == 0 || self.sync.window == 0 {
            return Err("confirmation windows must be >= 1 period".into());
        }
        Ok(())
    }

    /// Checks the shedding order is a permutation of the plant's loads.
    pub fn validate_against(&self, loads: &LoadBank) -> Result<(), String> {
        let mut want: Vec<(&str, &str)> = loads
            .elements
            .iter()
            .map(|e| (e.id.as_str(), e.relay.as_str()))
            .collect();
        let mut got: Vec<(&str, &str)> = self
            .shedding_order
            .iter()
            .map(|s| (s.load.as_str(), s.relay.as_str()))
            .collect();
        want.sort();
        got.sort();
        if want != got {
            return Err("shedding_order must list every load exactly once with its relay".into());
        }
        Ok(())
    }
}
