use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Voltage,
    Current,
}

/// ADC channel behind a conditioning stage that maps `full_scale` onto the
/// reference voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorChannel {
    pub kind: SensorKind,
    /// SI value that drives the ADC pin to the reference voltage.
    pub full_scale: f64,
    pub reference_voltage: f64,
    pub resolution_bits: u32,
    /// Gaussian noise sigma as a fraction of full scale.
    pub noise_sigma: f64,
    /// Additive calibration error injected by scenarios, SI units.
    pub bias: f64,
    pub last_raw: u32,
}

impl SensorChannel {
    pub fn new(kind: SensorKind, full_scale: f64, resolution_bits: u32, noise_sigma: f64) -> Self {
        Self {
            kind,
            full_scale,
            reference_voltage: 3.3,
            resolution_bits,
            noise_sigma,
            bias: 0.0,
            last_raw: 0,
        }
    }

    pub fn max_code(&self) -> u32 {
        (1u32 << self.resolution_bits) - 1
    }

    /// SI value of one code step.
    pub fn lsb(&self) -> f64 {
        self.full_scale / (1u64 << self.resolution_bits) as f64
    }

    pub fn decode(&self, code: u32) -> f64 {
        code as f64 * self.lsb()
    }
}

/// Clamps, adds noise, quantizes. Never fails; out-of-range input saturates.
pub fn sample_sensor<R: Rng + ?Sized>(
    channel: &mut SensorChannel,
    true_value: f64,
    rng: &mut R,
) -> u32 {
    let vref = channel.reference_voltage;
    let x = (true_value + channel.bias).clamp(0.0, channel.full_scale);
    let mut pin = x / channel.full_scale * vref;
    if channel.noise_sigma > 0.0 {
        let n: f64 = rng.sample(StandardNormal);
        pin += n * channel.noise_sigma * vref;
    }
    let steps = (1u64 << channel.resolution_bits) as f64;
    let code = (pin / vref * steps).round().clamp(0.0, channel.max_code() as f64);
    channel.last_raw = code as u32;
    channel.last_raw
}
