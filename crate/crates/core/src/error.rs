use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // audio
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported encoding in {path}: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },
    #[error("empty audio: {0}")]
    EmptyAudio(PathBuf),
    #[error("sample rate mismatch: got {actual} Hz, expected {expected} Hz")]
    SampleRateMismatch { actual: u32, expected: u32 },

    // dsp
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("mel filter {index} is all-zero; frequency range too narrow for the mel count")]
    DegenerateFilter { index: usize },
    #[error("audio too short to produce a single frame")]
    AudioTooShort,

    // network
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("weights do not match model config: {0}")]
    ConfigWeightMismatch(String),
    #[error("non-finite activation at layer {layer}")]
    NonFiniteActivation { layer: usize },

    // weight file
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("trailing data: expected {expected} bytes, found {found}")]
    TrailingData { expected: usize, found: usize },

    // features / statistics
    #[error("activation tensor has no frames")]
    EmptyTensor,
    #[error("k = {k} out of range (at most {max})")]
    KOutOfRange { k: usize, max: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zero variance input")]
    ZeroVariance,
    #[error("need at least {needed} utterances, found {found}")]
    TooFewUtterances { needed: usize, found: usize },
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("k = {k} larger than the {available} candidate features")]
    KTooLarge { k: usize, available: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("feature matrix: {0}")]
    InvalidFeatureMatrix(String),

    // evaluation
    #[error("{path}: row {row}: {detail}")]
    ParseError { path: PathBuf, row: usize, detail: String },
    #[error("row {row}: {field} = {value} outside [1, 5]")]
    RangeViolation {
        row: usize,
        field: &'static str,
        value: f64,
    },
    #[error("duplicate utterance id {0}")]
    DuplicateId(String),
    #[error("utterance {0} has no annotator ratings")]
    ConsistencyDataMissing(String),
    #[error("need at least 2 speakers, found {0}")]
    TooFewSpeakers(usize),
    #[error("fold for speaker {speaker} failed: {source}")]
    FoldFailure {
        speaker: String,
        #[source]
        source: Box<Error>,
    },
    #[error("reports do not share a fold structure: {0}")]
    FoldStructureMismatch(String),
    #[error("extraction failed for {} utterance(s): {}", .0.len(), .0.iter().map(|(id, e)| format!("{id}: {e}")).collect::<Vec<_>>().join("; "))]
    ExtractionFailed(Vec<(String, String)>),
    #[error("unknown speaker {0}")]
    UnknownSpeaker(String),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
