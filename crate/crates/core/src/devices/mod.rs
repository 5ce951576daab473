//! Measurement and actuation hardware of the bench: ADC sensors, torque
//! meters, relays/breakers and the framed serial power-meter link.
//!
//! Each control period [`DeviceBank::sample`] has the three power meters
//! (device ids 1, 2 for the generators, 3 for the load bus) push one frame
//! each into the serial byte queue; the controller side drains and decodes the
//! queue, then combines the registers with ADC readings into a
//! [`TelemetryFrame`].

pub mod frame;
pub mod relay;
pub mod sensor;
pub mod telemetry;
pub mod torque_meter;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use frame::{decode_meter_frame, encode_meter_frame, MeterFrame, RegisterId, StreamDecoder};
pub use relay::{command_relay, RelayDevice, RelayState};
pub use sensor::{sample_sensor, SensorChannel, SensorKind};
pub use telemetry::{DcRails, GeneratorTelemetry, LoadBusTelemetry, SwitchState, TelemetryFrame};
pub use torque_meter::{read_torque_meter, TorqueReading};

use crate::error::FrameError;
use crate::plant::{Plant, Topology, BREAKER_IDS, LOAD_BUS};
use crate::rng;

pub const LOAD_METER_ID: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceConfig {
    pub adc_bits: u32,
    /// Fraction of full scale.
    pub noise_sigma: f64,
    pub relay_delay: f64,
    pub load_voltage_full_scale: f64,
    pub load_current_full_scale: f64,
    pub field_voltage_full_scale: f64,
    pub field_current_full_scale: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            adc_bits: 10,
            noise_sigma: 0.002,
            relay_delay: 0.01,
            load_voltage_full_scale: 400.0,
            load_current_full_scale: 32.0,
            field_voltage_full_scale: 250.0,
            field_current_full_scale: 1.0,
        }
    }
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=16).contains(&self.adc_bits) {
            return Err(format!("adc_bits {} outside 1..=16", self.adc_bits));
        }
        let fs = [
            self.load_voltage_full_scale,
            self.load_current_full_scale,
            self.field_voltage_full_scale,
            self.field_current_full_scale,
        ];
        if fs.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err("sensor full scales must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.relay_delay >= 0.0) {
            return Err("noise sigma and relay delay must be >= 0".into());
        }
        Ok(())
    }
}

/// ADC channel labels; also the RNG stream labels and `sensor_bias` targets.
pub const SENSOR_LABELS: [&str; 6] = [
    "load_voltage",
    "load_current",
    "g1_field_voltage",
    "g1_field_current",
    "g2_field_voltage",
    "g2_field_current",
];

fn wrap_degrees(x: f64) -> f64 {
    let mut y = (x + 180.0).rem_euclid(360.0) - 180.0;
    if y == -180.0 {
        y = 180.0;
    }
    y
}

fn wrap_radians(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

#[derive(Debug, Clone)]
pub struct DeviceBank {
    pub config: DeviceConfig,
    sensors: BTreeMap<&'static str, SensorChannel>,
    rngs: BTreeMap<&'static str, ChaCha8Rng>,
    pub relays: Vec<RelayDevice>,
    sequences: [u8; 3],
    channel: Vec<u8>,
    pub decoder: StreamDecoder,
    last_meter: BTreeMap<u8, MeterFrame>,
    last_load_angle: Option<f64>,
    nominal_frequency: f64,
    frames_sent: u64,
}

impl DeviceBank {
    pub fn new(
        config: DeviceConfig,
        plant: &Plant,
        seed: u64,
        plant_dt: f64,
    ) -> Self {
        let c = &config;
        let vref = plant.config.sensor_reference_voltage;
        let mk = |kind, fs| {
            let mut s = SensorChannel::new(kind, fs, c.adc_bits, c.noise_sigma);
            s.reference_voltage = vref;
            s
        };
        let scales = [
            (SensorKind::Voltage, c.load_voltage_full_scale),
            (SensorKind::Current, c.load_current_full_scale),
            (SensorKind::Voltage, c.field_voltage_full_scale),
            (SensorKind::Current, c.field_current_full_scale),
            (SensorKind::Voltage, c.field_voltage_full_scale),
            (SensorKind::Current, c.field_current_full_scale),
        ];
        let sensors = SENSOR_LABELS
            .iter()
            .zip(scales)
            .map(|(l, (k, fs))| (*l, mk(k, fs)))
            .collect();
        let rngs = SENSOR_LABELS
            .iter()
            .map(|l| (*l, rng::stream(seed, l)))
            .collect();
        let limit = plant.config.load_switch_current_limit;
        let mut relays: Vec<RelayDevice> = BREAKER_IDS
            .iter()
            .zip(plant.topology.breakers)
            .map(|(id, closed)| {
                RelayDevice::new(id, RelayState::from_closed(closed), c.relay_delay, limit, plant_dt)
            })
            .collect();
        for (e, closed) in plant.config.loads.elements.iter().zip(&plant.topology.loads) {
            relays.push(RelayDevice::new(
                &e.relay,
                RelayState::from_closed(*closed),
                c.relay_delay,
                limit,
                plant_dt,
            ));
        }
        Self {
            config,
            sensors,
            rngs,
            relays,
            sequences: [0; 3],
            channel: Vec::new(),
            decoder: StreamDecoder::new(),
            last_meter: BTreeMap::new(),
            last_load_angle: None,
            nominal_frequency: plant.config.nominal_frequency(),
            frames_sent: 0,
        }
    }

    pub fn relay(&self, id: &str) -> Option<&RelayDevice> {
        self.relays.iter().find(|r| r.id == id)
    }

    pub fn relay_mut(&mut self, id: &str) -> Option<&mut RelayDevice> {
        self.relays.iter_mut().find(|r| r.id == id)
    }

    pub fn topology(&self) -> Topology {
        Topology {
            breakers: [self.relays[0].state.is_closed(), self.relays[1].state.is_closed()],
            loads: self.relays[2..].iter().map(|r| r.state.is_closed()).collect(),
        }
    }

    /// One plant step of relay actuation; true if any contact moved.
    pub fn tick_relays(&mut self) -> bool {
        let mut moved = false;
        for r in &mut self.relays {
            moved |= r.tick();
        }
        moved
    }

    pub fn set_bias(&mut self, label: &str, bias: f64) -> bool {
        match self.sensors.get_mut(label) {
            Some(s) => {
                s.bias = bias;
                true
            }
            None => false,
        }
    }

    pub fn frames_sent(&self) -> u64 {
        self.frames_sent
    }

    fn adc(&mut self, label: &'static str, value: f64) -> f64 {
        let ch = self.sensors.get_mut(label).expect("known sensor label");
        let rng = self.rngs.get_mut(label).expect("known stream label");
        let code = sample_sensor(ch, value, rng);
        ch.decode(code)
    }

    fn push_frame(&mut self, device: u8, readings: &[(RegisterId, f64)]) -> Result<(), FrameError> {
        let saturated: Vec<(RegisterId, f64)> =
            readings.iter().map(|(r, v)| (*r, r.saturate(*v))).collect();
        let seq = &mut self.sequences[device as usize - 1];
        let bytes = encode_meter_frame(&saturated, device, *seq)?;
        *seq = seq.wrapping_add(1);
        self.channel.extend_from_slice(&bytes);
        self.frames_sent += 1;
        Ok(())
    }

    /// Samples every instrument at time `t`; `period` is the control period.
    pub fn sample(&mut self, plant: &Plant, t: f64, period: f64) -> Result<TelemetryFrame, FrameError> {
        let net = plant.network();
        for (k, set) in plant.sets.iter().enumerate() {
            let g = &set.generator;
            let gc = &plant.config.machines[k].generator;
            let s = g.terminal_voltage * g.stator_current.conj();
            let tm = read_torque_meter(&set.prime_mover, &plant.config.torque_meter);
            self.push_frame(
                k as u8 + 1,
                &[
                    (RegisterId::VoltageRms, g.terminal_voltage.norm()),
                    (RegisterId::CurrentRms, g.stator_current.norm()),
                    (RegisterId::RealPower, s.re),
                    (RegisterId::ReactivePower, s.im),
                    (RegisterId::Frequency, g.electrical_frequency(gc)),
                    (RegisterId::Speed, tm.speed_rpm),
                    (RegisterId::Torque, tm.torque),
                    (RegisterId::PhaseAngle, g.terminal_voltage.arg().to_degrees()),
                ],
            )?;
        }
        let v_load = net.bus_voltages[LOAD_BUS];
        let i_load = net.load_bus_current();
        let s_load = v_load * i_load.conj();
        let nominal_v = plant.config.nominal_voltage;
        let frequency = if v_load.norm() < 0.01 * nominal_v {
            self.last_load_angle = None;
            0.0
        } else {
            let angle = v_load.arg();
            let f = match self.last_load_angle {
                Some(prev) => self.nominal_frequency + wrap_radians(angle - prev) / (2.0 * PI * period),
                None => net.frequency,
            };
            self.last_load_angle = Some(angle);
            f
        };
        self.push_frame(
            LOAD_METER_ID,
            &[
                (RegisterId::VoltageRms, v_load.norm()),
                (RegisterId::CurrentRms, i_load.norm()),
                (RegisterId::RealPower, s_load.re),
                (RegisterId::ReactivePower, s_load.im),
                (RegisterId::Frequency, frequency),
                (RegisterId::PhaseAngle, v_load.arg().to_degrees()),
            ],
        )?;

        // Controller side of the link.
        let bytes = std::mem::take(&mut self.channel);
        self.decoder.feed(&bytes);
        while let Some(f) = self.decoder.poll() {
            self.last_meter.insert(f.device_id, f);
        }

        let reg = |m: Option<&MeterFrame>, r: RegisterId| m.and_then(|m| m.value(r)).unwrap_or(0.0);
        let mut frame = TelemetryFrame {
            timestamp: t,
            ..Default::default()
        };
        for k in 0..2 {
            let m = self.last_meter.get(&(k as u8 + 1));
            frame.generators[k] = GeneratorTelemetry {
                terminal_voltage_rms: reg(m, RegisterId::VoltageRms),
                stator_current_rms: reg(m, RegisterId::CurrentRms),
                real_power: reg(m, RegisterId::RealPower),
                reactive_power: reg(m, RegisterId::ReactivePower),
                speed_rpm: reg(m, RegisterId::Speed),
                torque: reg(m, RegisterId::Torque),
                frequency: reg(m, RegisterId::Frequency),
                phase_angle: wrap_degrees(reg(m, RegisterId::PhaseAngle)),
            };
        }
        let m = self.last_meter.get(&LOAD_METER_ID);
        frame.load_bus = LoadBusTelemetry {
            voltage_rms: 0.0,
            current_rms: 0.0,
            real_power: reg(m, RegisterId::RealPower),
            reactive_power: reg(m, RegisterId::ReactivePower),
            frequency: reg(m, RegisterId::Frequency),
            phase_angle: wrap_degrees(reg(m, RegisterId::PhaseAngle)),
        };
        frame.load_bus.voltage_rms = self.adc("load_voltage", v_load.norm());
        frame.load_bus.current_rms = self.adc("load_current", i_load.norm());
        const FIELD: [[&str; 2]; 2] = [
            ["g1_field_voltage", "g1_field_current"],
            ["g2_field_voltage", "g2_field_current"],
        ];
        for k in 0..2 {
            let vf = plant.exciters[k].output_voltage();
            let rf = plant.config.machines[k].generator.field_resistance;
            frame.dc_rails[k] = DcRails {
                field_voltage: self.adc(FIELD[k][0], vf),
                field_current: self.adc(FIELD[k][1], vf / rf),
            };
        }
        frame.switches = self
            .relays
            .iter()
            .map(|r| SwitchState {
                id: r.id.clone(),
                state: r.state,
            })
            .collect();
        Ok(frame)
    }
}
