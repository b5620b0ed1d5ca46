//! Emotion-conditioned melody toolkit built around ABC notation.
//!
//! The crate covers the whole pipeline: parsing and transforming ABC tunes
//! ([`abc`]), MusicXML ingestion ([`musicxml`]), melodic feature extraction
//! ([`features`]), correlation statistics ([`stats`]), Russell-quadrant labeling
//! and dataset records ([`labeling`]), a bar-patch character language model
//! ([`generator`]), the per-quadrant performance template ([`template`]) and
//! MIDI/audio rendering ([`render`]).

pub mod abc;
pub mod error;
pub mod features;
pub mod generator;
pub mod labeling;
pub mod musicxml;
pub mod render;
pub mod stats;
pub mod template;

pub use error::{Error, Result};
