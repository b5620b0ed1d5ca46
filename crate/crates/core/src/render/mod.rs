//! Standard MIDI file output and a minimal sine renderer used for the RMS feature.

mod midi;
mod synth;

pub use midi::{to_midi, TICKS_PER_QUARTER};
pub use synth::{rms, synthesize, write_wav, AudioBuffer, SAMPLE_RATE};

use crate::abc::{Pitch, Rational, Score};

/// Tempo assumed when a score carries no `Q:` field.
pub const DEFAULT_TEMPO_BPM: f64 = 120.0;
/// MIDI velocity used before any volume adjustment.
pub const BASE_VELOCITY: u8 = 64;

/// A score ready for playback: notes plus a single velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceScore {
    pub score: Score,
    pub velocity: u8,
}

impl PerformanceScore {
    pub fn new(score: Score, velocity: u8) -> PerformanceScore {
        PerformanceScore { score, velocity }
    }

    pub fn tempo_bpm(&self) -> f64 {
        self.score.tempo_bpm_or(DEFAULT_TEMPO_BPM)
    }

    /// Sounding events with tied notes merged: `(pitch, onset, length)` in quarters.
    pub fn events(&self) -> Vec<(Pitch, Rational, Rational)> {
        let mut events: Vec<(Pitch, Rational, Rational)> = Vec::new();
        let mut onset = Rational::from_integer(0);
        let mut tied_from_previous = false;
        for note in self.score.notes() {
            let len = note.duration.value();
            match note.pitch {
                Some(p) => {
                    let continues = tied_from_previous
                        && events.last().is_some_and(|(q, s, l)| *q == p && *s + *l == onset);
                    if continues {
                        events.last_mut().unwrap().2 += len;
                    } else {
                        events.push((p, onset, len));
                    }
                    tied_from_previous = note.tie;
                }
                None => tied_from_previous = false,
            }
            onset += len;
        }
        events
    }
}
