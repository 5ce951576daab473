use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayState {
    Open,
    Closed,
}

impl RelayState {
    pub fn is_closed(self) -> bool {
        self == RelayState::Closed
    }

    pub fn from_closed(closed: bool) -> Self {
        if closed {
            RelayState::Closed
        } else {
            RelayState::Open
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelayState::Open => "open",
            RelayState::Closed => "closed",
        }
    }
}

/// A relay or breaker whose contacts follow the command after a fixed number
/// of plant steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayDevice {
    pub id: String,
    pub state: RelayState,
    pub commanded_state: RelayState,
    /// Seconds from command to contact movement.
    pub actuation_delay: f64,
    pub rated_current: f64,
    delay_steps: u64,
    remaining: Option<u64>,
    /// Simulated time of the command currently in flight.
    pub commanded_at: Option<f64>,
}

/// `ceil(delay / dt)` robust to binary rounding of exact multiples.
pub fn delay_in_steps(delay: f64, dt: f64) -> u64 {
    let ratio = delay / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() < 1e-9 * ratio.max(1.0) {
        nearest as u64
    } else {
        ratio.ceil() as u64
    }
}

impl RelayDevice {
    pub fn new(id: &str, state: RelayState, actuation_delay: f64, rated_current: f64, plant_dt: f64) -> Self {
        Self {
            id: id.to_owned(),
            state,
            commanded_state: state,
            actuation_delay,
            rated_current,
            delay_steps: delay_in_steps(actuation_delay, plant_dt),
            remaining: None,
            commanded_at: None,
        }
    }

    pub fn is_pending(&self) -> bool {
        self.remaining.is_some()
    }

    /// Contacts move at the end of plant step `delay_steps` after the command.
    pub fn command(&mut self, target: RelayState, now: f64) {
        self.commanded_state = target;
        if target == self.state {
            // Either idempotent, or a reversal cancelling the command in flight.
            self.remaining = None;
            self.commanded_at = None;
        } else if self.remaining.is_none() {
            if self.delay_steps == 0 {
                self.state = target;
            } else {
                self.remaining = Some(self.delay_steps);
                self.commanded_at = Some(now);
            }
        }
    }

    /// Forces contacts immediately, bypassing the drive (fault injection).
    pub fn force(&mut self, state: RelayState) {
        self.state = state;
        self.commanded_state = state;
        self.remaining = None;
        self.commanded_at = None;
    }

    /// Advances one plant step; returns true when the contacts moved.
    pub fn tick(&mut self) -> bool {
        match self.remaining {
            Some(n) if n <= 1 => {
                self.remaining = None;
                self.commanded_at = None;
                self.state = self.commanded_state;
                true
            }
            Some(n) => {
                self.remaining = Some(n - 1);
                false
            }
            None => false,
        }
    }
}

pub fn command_relay(device: &RelayDevice, target: RelayState, now: f64) -> RelayDevice {
    let mut d = device.clone();
    d.command(target, now);
    d
}
