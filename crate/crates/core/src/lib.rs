//! Polyphonic piano transcription: log-mel frontend, a multi-stage
//! convolutional onset and velocity network, peak-picking decoder,
//! note-level evaluation and chunked streaming.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decoder;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod midi;
pub mod model;
pub mod pipeline;
pub mod roll;
pub mod stream;
pub mod train;

pub use decoder::{decode, DecoderParams};
pub use error::{OvError, Result};
pub use midi::{parse_midi, write_midi};
pub use pipeline::{Transcriber, Transcription};
pub use roll::{NoteEvent, PianoRoll, Score};
