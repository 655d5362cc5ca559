use thiserror::Error;

pub type Result<T, E = OvError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OvError {
    #[error("MIDI parse error at byte {offset}: {message}")]
    MidiParse { offset: usize, message: String },

    #[error("WAV parse error: {0}")]
    Wav(String),

    #[error("unsupported audio format: codec tag 0x{0:04x}")]
    UnsupportedFormat(u16),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape error in {layer}: {message}")]
    Shape { layer: String, message: String },

    #[error("corrupt weights: {0}")]
    CorruptWeights(String),

    #[error("weight schema mismatch (missing: {missing:?}, unexpected: {unexpected:?}, misshaped: {misshaped:?})")]
    Schema {
        missing: Vec<String>,
        unexpected: Vec<String>,
        misshaped: Vec<String>,
    },

    #[error("corrupt feature dump: {0}")]
    CorruptFeatures(String),

    #[error("non-finite loss at coordinate {coordinate} ({name})")]
    NonFinite { coordinate: usize, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl OvError {
    pub(crate) fn shape(layer: impl Into<String>, message: impl Into<String>) -> Self {
        OvError::Shape {
            layer: layer.into(),
            message: message.into(),
        }
    }

    pub(crate) fn midi(offset: usize, message: impl Into<String>) -> Self {
        OvError::MidiParse {
            offset,
            message: message.into(),
        }
    }
}
