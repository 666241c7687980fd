pub mod array;
pub mod bench;
pub mod conv;
pub mod decoders;
pub mod error;
pub mod eval;
pub mod fft;
pub mod grid;
pub mod hrtf;
pub mod ism;
pub mod room;
pub mod sh;
pub mod signal;
pub mod special;
pub mod synth;
pub mod wav;

pub use error::{Error, ErrorCategory, Result};
pub use signal::{SignalData, SpaceDomain, SpatialSignal, TimeDomain};
