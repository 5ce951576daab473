use thiserror::Error;

/// Failures raised by the physical plant models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("integration diverged: {quantity} became non-finite")]
    Divergence { quantity: &'static str },
    #[error("duty cycle {0} outside [0, 1]")]
    DutyOutOfRange(f64),
    #[error("singular admittance matrix on energized island {island:?}")]
    NetworkSingular { island: Vec<usize> },
    #[error("rotor speed is zero while delivering {power} W")]
    DegenerateSpeed { power: f64 },
    #[error("invalid plant parameter: {0}")]
    InvalidParameter(String),
}

/// Failures raised by the serial meter frame codec.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("register 0x{register:02X} value out of encodable range")]
    EncodingRange { register: u8 },
    #[error("payload of {0} registers does not fit in one frame")]
    TooManyRegisters(usize),
    #[error("frame truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bad sync byte 0x{0:02X}")]
    BadSync(u8),
    #[error("crc mismatch: computed 0x{computed:04X}, frame carries 0x{carried:04X}")]
    BadCrc { computed: u16, carried: u16 },
    #[error("reserved byte of register 0x{0:02X} is non-zero")]
    BadReserved(u8),
}

/// Errors surfaced by scenario loading, simulation and export.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("scenario validation failed: {0}")]
    Validation(String),
    #[error("unknown device id `{0}`")]
    UnknownDevice(String),
    #[error("unknown channel `{name}`; valid channels: {}", valid.join(", "))]
    UnknownChannel { name: String, valid: Vec<String> },
    #[error("simulation diverged at t = {t:.6} s: {source}")]
    Divergence {
        t: f64,
        #[source]
        source: PlantError,
    },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
