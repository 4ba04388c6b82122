use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lane {lane_id} is not part of the lane layout")]
    UnknownLane { lane_id: i32 },

    #[error("series of length {len} is too short (need at least {min})")]
    SeriesTooShort { len: usize, min: usize },

    #[error("series lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("track of vehicle {vehicle_id} has a gap in its frames")]
    FrameGap { vehicle_id: u32 },

    #[error("invalid track for vehicle {vehicle_id}: {reason}")]
    InvalidTrack { vehicle_id: u32, reason: String },

    #[error("invalid lane layout: {0}")]
    InvalidLayout(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("vehicle {0} is not part of the scene")]
    UnknownVehicle(u32),

    #[error("vehicle {vehicle_id} is not present at frame {frame}")]
    FrameOutOfRange { vehicle_id: u32, frame: i64 },

    #[error("lanes {ego_lane} and {other_lane} are not adjacent")]
    NotAdjacent { ego_lane: i32, other_lane: i32 },

    #[error("gap must be positive, got {0}")]
    NonPositiveGap(f64),

    #[error("insufficient training data: {got} samples, need {min}")]
    InsufficientData { got: usize, min: usize },

    #[error("training diverged at epoch {epoch}")]
    DivergedTraining { epoch: usize },

    #[error("track of vehicle {vehicle_id} has {frames} frames, need {min}")]
    TrackTooShort { vehicle_id: u32, frames: usize, min: usize },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("all differences are zero")]
    AllZeroDiffs,

    #[error("no ego candidates: the corpus contains no evaluable cars")]
    NoEgoCandidates,

    #[error("result sets share no ego vehicles: {0}")]
    MismatchedCorpora(String),

    #[error("invalid scenario: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input data or files, as opposed to
    /// internal failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::UnknownLane { .. }
                | Error::MissingColumn(_)
                | Error::MalformedRow { .. }
                | Error::FrameGap { .. }
                | Error::InvalidTrack { .. }
                | Error::InvalidLayout(_)
                | Error::InvalidScene(_)
                | Error::InvalidSpec(_)
                | Error::MismatchedCorpora(_)
                | Error::InvalidConfig(_)
                | Error::ModelFormat(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
