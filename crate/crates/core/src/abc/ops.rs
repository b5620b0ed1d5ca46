use super::types::*;
use crate::error::{Error, Result};

/// Measures per segment before the tail rule applies.
pub const SEGMENT_MEASURES: usize = 20;
/// A tail of at most this many measures is merged into the previous segment.
pub const SEGMENT_MERGE_LIMIT: usize = 10;

/// A sounded note of a melody: `(pitch, duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MelodyNote {
    pub pitch: Pitch,
    pub duration: Duration,
}

/// Ordered sounded notes of a score with rests dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Melody(Vec<MelodyNote>);

impl Melody {
    pub fn new(notes: Vec<MelodyNote>) -> Result<Melody> {
        if notes.is_empty() {
            return Err(Error::EmptyMelody);
        }
        Ok(Melody(notes))
    }

    /// Builds a melody from `(midi, quarters)` pairs.
    pub fn from_pairs(pairs: &[(u8, Rational)]) -> Result<Melody> {
        let notes = pairs
            .iter()
            .map(|&(p, d)| {
                Ok(MelodyNote {
                    pitch: Pitch::new(p as i32)?,
                    duration: Duration::new(d)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Melody::new(notes)
    }

    pub fn notes(&self) -> &[MelodyNote] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn extract_melody(score: &Score) -> Result<Melody> {
    let notes = score
        .notes()
        .filter_map(|n| {
            n.pitch.map(|pitch| MelodyNote {
                pitch,
                duration: n.duration,
            })
        })
        .collect();
    Melody::new(notes)
}

fn map_pitches(score: &Score, semitones: i32) -> Result<Score> {
    let mut out = score.clone();
    for note in out.notes_mut() {
        if let Some(p) = note.pitch {
            note.pitch = Some(p.shifted(semitones)?);
        }
    }
    Ok(out)
}

/// Shifts every sounded pitch by `semitones` and rewrites the key header.
pub fn transpose(score: &Score, semitones: i32, target_key: KeySignature) -> Result<Score> {
    if semitones.abs() > 11 {
        return Err(Error::InvalidShift(semitones));
    }
    let mut out = map_pitches(score, semitones)?;
    out.key = target_key;
    Ok(out)
}

/// Result of an octave shift, with the shift that was actually applied.
#[derive(Debug, Clone)]
pub struct OctaveShift {
    pub score: Score,
    pub applied: i32,
}

/// Shifts by whole octaves, reducing the magnitude one octave at a time until every
/// pitch fits the MIDI range.
pub fn shift_octaves(score: &Score, octaves: i32) -> OctaveShift {
    let mut applied = octaves;
    loop {
        if let Ok(shifted) = map_pitches(score, 12 * applied) {
            return OctaveShift {
                score: shifted,
                applied,
            };
        }
        applied -= applied.signum();
    }
}

/// Chunk sizes for a tune of `measures` measures.
pub fn segment_sizes(measures: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut left = measures;
    while left > 0 {
        let take = left.min(SEGMENT_MEASURES);
        sizes.push(take);
        left -= take;
    }
    if sizes.len() > 1 {
        let tail = *sizes.last().unwrap();
        if tail <= SEGMENT_MERGE_LIMIT {
            sizes.pop();
            *sizes.last_mut().unwrap() += tail;
        }
    }
    sizes
}

/// Splits a score into ~20-measure chunks, each ending with the final barline.
pub fn segment(score: &Score) -> Vec<Score> {
    let mut chunks = Vec::new();
    let mut start = 0;
    for (i, size) in segment_sizes(score.measures.len()).into_iter().enumerate() {
        let mut chunk = score.clone();
        chunk.measures = score.measures[start..start + size].to_vec();
        if i > 0 {
            chunk.opening = None;
        }
        if let Some(last) = chunk.measures.last_mut().and_then(|m| m.notes.last_mut()) {
            last.tie = false;
        }
        chunk.set_final_marker();
        chunks.push(chunk);
        start += size;
    }
    chunks
}

/// Transpositions into the fifteen signatures of the score's mode, each by the
/// smallest shift. Entries that leave the MIDI range are reported as errors.
pub fn fifteen_key_fan_out(score: &Score) -> Vec<(KeySignature, Result<Score>)> {
    score
        .key
        .fifteen_keys()
        .into_iter()
        .map(|target| {
            let shift = score.key.shift_to(&target);
            (target, transpose(score, shift, target))
        })
        .collect()
}
