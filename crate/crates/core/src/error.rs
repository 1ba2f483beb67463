use thiserror::Error;

/// Errors raised anywhere in the radar / knowledge / fusion chain.
///
/// Every variant belongs to exactly one [`Stage`], which the CLI maps onto a
/// distinct exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("scene error: {0}")]
    Scene(String),

    #[error("target `{name}` at {range_m:.3} m is beyond the unambiguous range of {max_range_m:.3} m")]
    OutOfRange {
        name: String,
        range_m: f64,
        max_range_m: f64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("no target: {0}")]
    NoTarget(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("sphere diameter {diameter_m} m is below 5 wavelengths ({min_m} m); not in the optical region")]
    NotOpticalRegion { diameter_m: f64, min_m: f64 },

    #[error("degenerate coherent sum: {0}")]
    Degenerate(String),

    #[error("no admissible dielectric solution: {0}")]
    NoSolution(String),

    #[error("knowledge store error: {0}")]
    Knowledge(String),

    #[error("visual provider error: {0}")]
    Provider(String),

    #[error("visual provider transport error: {0}")]
    Transport(String),

    #[error("visual provider timed out after {0} ms")]
    Timeout(u64),

    #[error("fusion error: {0}")]
    Fusion(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage}: {source}")]
    Staged {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse error class used for reporting and CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Io,
    Scene,
    Format,
    NoTarget,
    Calibration,
    Estimation,
    Knowledge,
    Vision,
    Fusion,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::Io => "io",
            Stage::Scene => "scene",
            Stage::Format => "format",
            Stage::NoTarget => "no-target",
            Stage::Calibration => "calibration",
            Stage::Estimation => "estimation",
            Stage::Knowledge => "knowledge",
            Stage::Vision => "vision",
            Stage::Fusion => "fusion",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Io => 2,
            Stage::Scene => 3,
            Stage::Format => 4,
            Stage::NoTarget => 5,
            Stage::Calibration => 6,
            Stage::Estimation => 7,
            Stage::Knowledge => 8,
            Stage::Vision => 9,
            Stage::Fusion => 10,
        }
    }

    pub const ALL: [Stage; 9] = [
        Stage::Io,
        Stage::Scene,
        Stage::Format,
        Stage::NoTarget,
        Stage::Calibration,
        Stage::Estimation,
        Stage::Knowledge,
        Stage::Vision,
        Stage::Fusion,
    ];
}

impl Error {
    pub fn stage(&self) -> Stage {
        match self {
            Error::Domain(_) | Error::Degenerate(_) | Error::NoSolution(_) => Stage::Estimation,
            Error::Scene(_) | Error::OutOfRange { .. } => Stage::Scene,
            Error::Format(_) => Stage::Format,
            Error::NoTarget(_) => Stage::NoTarget,
            Error::Calibration(_) | Error::NotOpticalRegion { .. } => Stage::Calibration,
            Error::Knowledge(_) => Stage::Knowledge,
            Error::Provider(_) | Error::Transport(_) | Error::Timeout(_) => Stage::Vision,
            Error::Fusion(_) => Stage::Fusion,
            Error::Io { .. } => Stage::Io,
            Error::Staged { source, .. } => source.stage(),
        }
    }

    /// Wraps the error with a pipeline stage name, keeping its class.
    pub fn at(self, stage: &'static str) -> Error {
        Error::Staged {
            stage,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
