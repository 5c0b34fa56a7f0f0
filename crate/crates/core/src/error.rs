use std::path::PathBuf;

/// Every failure the library can report.
///
/// The `Display` form starts with the variant name so the CLI can surface it
/// verbatim.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("BadMagic: expected {expected:?} at byte offset {offset}")]
    BadMagic { expected: &'static str, offset: u64 },
    #[error("TruncatedFile: input ends at byte offset {offset}")]
    TruncatedFile { offset: u64 },
    #[error("NonFiniteValue: non-finite float at byte offset {offset}")]
    NonFiniteValue { offset: u64 },
    #[error("UnsupportedVersion: format version {0}")]
    UnsupportedVersion(u32),
    #[error("UnsupportedDtype: dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("NotNormalized: row {row} has L2 norm {norm} but the matrix is flagged normalized")]
    NotNormalized { row: usize, norm: f64 },
    #[error("ShapeError: {0}")]
    Shape(String),
    #[error("IoError: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("RaggedRows: line {line} has {found} fields, expected {expected}")]
    RaggedRows {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("ZeroVectorOnNormalize: row {row} has zero norm")]
    ZeroVectorOnNormalize { row: usize },
    #[error("ParseError: line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("DimMismatch: expected dimension {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("LengthMismatch: expected length {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("KTooLarge: k = {k} exceeds {rows} rows")]
    KTooLarge { k: usize, rows: usize },
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
    #[error("EmptyReferenceSet: reference set has no rows")]
    EmptyReferenceSet,
    #[error("MissingReference: method {method} requires {what}")]
    MissingReference {
        method: &'static str,
        what: &'static str,
    },
    #[error("BiasReferenceMismatch: bias was computed against reference {stored:#018x}, current reference is {current:#018x}")]
    BiasReferenceMismatch { stored: u64, current: u64 },
    #[error("IndexOutOfRange: index {index} is not below {bound}")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("DegenerateDistribution: matched counts have zero variance")]
    DegenerateDistribution,
    #[error("MissingTruth: query {0} has no ground truth")]
    MissingTruth(usize),
    #[error("EmptyInput: {0}")]
    EmptyInput(&'static str),
    #[error("InsufficientData: {0}")]
    InsufficientData(String),
    #[error("UnlabeledCandidate: candidate {0} has no attribute label")]
    UnlabeledCandidate(usize),
    #[error("MissingQueryGroup: query {0} has no group tag")]
    MissingQueryGroup(usize),
    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The bare variant name, e.g. `"TruncatedFile"`.
    pub fn name(&self) -> &'static str {
        match self {
            Error::BadMagic { .. } => "BadMagic",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::UnsupportedDtype(_) => "UnsupportedDtype",
            Error::NotNormalized { .. } => "NotNormalized",
            Error::Shape(_) => "ShapeError",
            Error::Io { .. } => "IoError",
            Error::RaggedRows { .. } => "RaggedRows",
            Error::ZeroVectorOnNormalize { .. } => "ZeroVectorOnNormalize",
            Error::Parse { .. } => "ParseError",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::EmptyReferenceSet => "EmptyReferenceSet",
            Error::MissingReference { .. } => "MissingReference",
            Error::BiasReferenceMismatch { .. } => "BiasReferenceMismatch",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::DegenerateDistribution => "DegenerateDistribution",
            Error::MissingTruth(_) => "MissingTruth",
            Error::EmptyInput(_) => "EmptyInput",
            Error::InsufficientData(_) => "InsufficientData",
            Error::UnlabeledCandidate(_) => "UnlabeledCandidate",
            Error::MissingQueryGroup(_) => "MissingQueryGroup",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
