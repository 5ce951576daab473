use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::PlantError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadKind {
    Resistive,
    Inductive,
}

/// One switchable load on the common load bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadElement {
    pub id: String,
    pub kind: LoadKind,
    /// Series impedance `[R, X]` in ohms.
    pub impedance: Complex64,
    /// Shedding rank; lower values are shed first.
    pub priority: u32,
    /// Relay that switches this element.
    pub relay: String,
}

impl LoadElement {
    /// Resistive element drawing `power` watts at `voltage` volts.
    pub fn resistive(id: &str, power: f64, voltage: f64, priority: u32, relay: &str) -> Self {
        Self {
            id: id.to_owned(),
            kind: LoadKind::Resistive,
            impedance: Complex64::new(voltage * voltage / power, 0.0),
            priority,
            relay: relay.to_owned(),
        }
    }

    pub fn admittance(&self) -> Complex64 {
        self.impedance.inv()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LoadBank {
    pub elements: Vec<LoadElement>,
}

impl LoadBank {
    pub fn new(elements: Vec<LoadElement>) -> Self {
        Self { elements }
    }

    pub fn get(&self, id: &str) -> Option<&LoadElement> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut LoadElement> {
        self.elements.iter_mut().find(|e| e.id == id)
    }

    pub fn by_relay(&self, relay: &str) -> Option<&LoadElement> {
        self.elements.iter().find(|e| e.relay == relay)
    }

    /// Element ids ordered by ascending priority (the shedding order).
    pub fn shedding_order(&self) -> Vec<String> {
        let mut v: Vec<&LoadElement> = self.elements.iter().collect();
        v.sort_by_key(|e| e.priority);
        v.into_iter().map(|e| e.id.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        for (i, e) in self.elements.iter().enumerate() {
            let z = e.impedance;
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(PlantError::InvalidParameter(format!(
                    "load {} impedance is not finite",
                    e.id
                )));
            }
            match e.kind {
                LoadKind::Resistive if z.re <= 0.0 => {
                    return Err(PlantError::InvalidParameter(format!(
                        "resistive load {} needs R > 0",
                        e.id
                    )))
                }
                LoadKind::Inductive if z.im <= 0.0 || z.re < 0.0 => {
                    return Err(PlantError::InvalidParameter(format!(
                        "inductive load {} needs X > 0 and R >= 0",
                        e.id
                    )))
                }
                _ => {}
            }
            for other in &self.elements[i + 1..] {
                if other.id == e.id {
                    return Err(PlantError::InvalidParameter(format!(
                        "duplicate load id {}",
                        e.id
                    )));
                }
                if other.priority == e.priority {
                    return Err(PlantError::InvalidParameter(format!(
                        "loads {} and {} share priority {}",
                        e.id, other.id, e.priority
                    )));
                }
                if other.relay == e.relay {
                    return Err(PlantError::InvalidParameter(format!(
                        "loads {} and {} share relay {}",
                        e.id, other.id, e.relay
                    )));
                }
            }
        }
        Ok(())
    }
}
