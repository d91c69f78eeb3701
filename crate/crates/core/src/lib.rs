//! Normal-to-whispered speech conversion toolkit.
//!
//! Three converter families share one mel-cepstral feature pipeline:
//! - a rule-based DSP recipe (glottal-shaping removal, F1 shift, formant broadening),
//! - a joint-density GMM with MLPG/GV parameter generation,
//! - a frame-wise feed-forward DNN.
//!
//! Supporting machinery: WAV I/O and resampling, noise-excited mel-cepstral
//! synthesis, DTW alignment of parallel corpora, manifest-driven dataset
//! splits, and objective metrics (mel-cepstral distortion, voicing, tilt).

pub mod align;
pub mod audio_io;
pub mod corpus;
pub mod dnn;
pub mod dsp;
pub mod error;
pub mod formats;
pub mod gmm;
pub mod metrics;
pub mod pipeline;
pub mod spectral;
pub mod vocoder;

pub use error::{Error, Result};
