//! TCP side of the emulator: framing codecs, a recording proxy that builds
//! interaction libraries from live traffic, and the emulator service.

pub mod emulator;
pub mod framing;
pub mod recorder;

pub use emulator::Emulator;
pub use framing::{frame_encode, frame_split, FrameReader, FramingError, FramingMode, FramingSpec};
pub use recorder::Recorder;

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error("library sink failed: {0}")]
    Sink(std::io::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] svemu::ModelError),
}
