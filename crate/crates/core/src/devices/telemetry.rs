use serde::{Deserialize, Serialize};

use super::relay::RelayState;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeneratorTelemetry {
    pub terminal_voltage_rms: f64,
    pub stator_current_rms: f64,
    pub real_power: f64,
    pub reactive_power: f64,
    pub speed_rpm: f64,
    pub torque: f64,
    /// Electrical frequency of the machine, Hz.
    pub frequency: f64,
    /// Terminal voltage phase, degrees in (−180, 180].
    pub phase_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadBusTelemetry {
    pub voltage_rms: f64,
    pub current_rms: f64,
    pub real_power: f64,
    pub reactive_power: f64,
    pub frequency: f64,
    pub phase_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DcRails {
    pub field_voltage: f64,
    pub field_current: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchState {
    pub id: String,
    pub state: RelayState,
}

/// Everything the supervisor sees at one sampling instant, post-quantization.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub timestamp: f64,
    pub generators: [GeneratorTelemetry; 2],
    pub load_bus: LoadBusTelemetry,
    pub dc_rails: [DcRails; 2],
    pub switches: Vec<SwitchState>,
}

impl TelemetryFrame {
    pub fn switch(&self, id: &str) -> Option<RelayState> {
        self.switches.iter().find(|s| s.id == id).map(|s| s.state)
    }

    pub fn is_closed(&self, id: &str) -> bool {
        self.switch(id) == Some(RelayState::Closed)
    }

    /// Stable binary form used for record digests.
    pub fn digest_bytes(&self, out: &mut Vec<u8>) {
        let mut put = |x: f64| out.extend_from_slice(&x.to_bits().to_le_bytes());
        put(self.timestamp);
        for g in &self.generators {
            for x in [
                g.terminal_voltage_rms,
                g.stator_current_rms,
                g.real_power,
                g.reactive_power,
                g.speed_rpm,
                g.torque,
                g.frequency,
                g.phase_angle,
            ] {
                put(x);
            }
        }
        let l = &self.load_bus;
        for x in [
            l.voltage_rms,
            l.current_rms,
            l.real_power,
            l.reactive_power,
            l.frequency,
            l.phase_angle,
        ] {
            put(x);
        }
        for d in &self.dc_rails {
            put(d.field_voltage);
            put(d.field_current);
        }
        for s in &self.switches {
            out.extend_from_slice(s.id.as_bytes());
            out.push(s.state.is_closed() as u8);
        }
    }
}
