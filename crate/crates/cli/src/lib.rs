//! Library surface of the command-line harness: synthetic subjects, the
//! toy trainer, and the command implementations behind the binary.

pub mod run;
pub mod synth;
pub mod train;
