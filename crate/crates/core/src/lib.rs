//! Raw-image noise calibration and synthesis from dark-frame databases.
//!
//! See the guide in `book/` for a walk through the pipeline.

pub mod calibrate;
pub mod cli;
pub mod darkdb;
pub mod dist;
pub mod error;
pub mod highbit;
pub mod kv;
pub mod optim;
pub mod profile;
pub mod raw;
pub mod report;
pub mod rnf;
pub mod rng;
pub mod selftest;
pub mod synth;
pub mod vsensor;

pub use error::{Error, Result};

// Book chapters compiled as doctests so the guide cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/frames.md")]
    mod frames {}
    #[doc = include_str!("../../../book/src/dark-frames.md")]
    mod dark_frames {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/highbit.md")]
    mod highbit {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
