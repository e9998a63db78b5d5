//! Neural features for speech emotion regression.
//!
//! Audio is turned into MFCCs, pushed through a stack of dilated gated
//! convolution layers, and the time-pooled gate activations of every unit
//! become an utterance's feature vector. Those features are then screened
//! with a univariate F-test and fed to least-squares regression of valence
//! and arousal, evaluated leave-one-speaker-out.

pub mod audio_io;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gcu_net;
pub mod mfcc;
pub mod pipeline;
pub mod regression;
pub mod stats;
pub mod weight_io;

pub use error::{Error, Result};
