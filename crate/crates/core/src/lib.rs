pub mod chordcombi;
pub mod edlab;
pub mod error;
pub mod freeconv;
pub mod mixed;
pub mod moments;
pub mod qcore;
pub mod qhermite;

pub use error::{LabError, Result};
