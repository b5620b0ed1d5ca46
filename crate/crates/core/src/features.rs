//! The eight melodic feature columns and the CSV feature table.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::abc::{extract_melody, Melody, Rational, Score, KEY_LABELS};
use crate::error::{Error, Result};
use crate::render::{rms, synthesize, PerformanceScore, BASE_VELOCITY, DEFAULT_TEMPO_BPM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Descending = 0,
    Ascending = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// Pitch class of the tonic, 0 = C.
    pub key: u8,
    /// 1 for major-third modes, 0 otherwise.
    pub mode: u8,
    pub tempo: f64,
    pub direction: Direction,
    pub avg_pitch: f64,
    pub pitch_range: u8,
    pub pitch_sd: f64,
    pub rms: f64,
}

impl FeatureVector {
    pub fn key_label(&self) -> &'static str {
        KEY_LABELS[self.key as usize % 12]
    }
}

/// Duration-weighted mean pitch.
pub fn avg_pitch(melody: &Melody) -> f64 {
    let notes = melody.notes();
    let (lo, hi) = pitch_bounds(melody);
    let mut num = 0.0;
    let mut den = 0.0;
    for n in notes {
        let d = n.duration.as_f64();
        num += n.pitch.midi() as f64 * d;
        den += d;
    }
    (num / den).clamp(lo as f64, hi as f64)
}

/// Duration-weighted population standard deviation of pitch. Computed on
/// offsets from the lowest pitch so that transposed melodies agree bit for bit.
pub fn pitch_sd(melody: &Melody) -> f64 {
    let (lo, hi) = pitch_bounds(melody);
    if lo == hi {
        return 0.0;
    }
    let offset = |n: &crate::abc::MelodyNote| (n.pitch.midi() - lo) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for n in melody.notes() {
        let d = n.duration.as_f64();
        num += offset(n) * d;
        den += d;
    }
    let mean = num / den;
    let mut ss = 0.0;
    for n in melody.notes() {
        let dev = offset(n) - mean;
        ss += dev * dev * n.duration.as_f64();
    }
    (ss / den).sqrt()
}

pub fn pitch_range(melody: &Melody) -> u8 {
    let (lo, hi) = pitch_bounds(melody);
    hi - lo
}

fn pitch_bounds(melody: &Melody) -> (u8, u8) {
    melody
        .notes()
        .iter()
        .fold((u8::MAX, 0), |(lo, hi), n| (lo.min(n.pitch.midi()), hi.max(n.pitch.midi())))
}

/// Ascending iff the arrival durations of rising steps outweigh those of falling steps.
pub fn direction(melody: &Melody) -> Direction {
    let zero = Rational::from_integer(0);
    let (mut up, mut down) = (zero, zero);
    for pair in melody.notes().windows(2) {
        let (a, b) = (pair[0].pitch, pair[1].pitch);
        if b > a {
            up += pair[1].duration.value();
        } else if b < a {
            down += pair[1].duration.value();
        }
    }
    if up > down {
        Direction::Ascending
    } else {
        Direction::Descending
    }
}

pub fn extract_features(score: &Score) -> Result<FeatureVector> {
    let melody = extract_melody(score)?;
    let perf = PerformanceScore::new(score.clone(), BASE_VELOCITY);
    let audio = synthesize(&perf);
    Ok(FeatureVector {
        key: score.key.pitch_class() as u8,
        mode: score.key.is_major_class() as u8,
        tempo: score.tempo_bpm_or(DEFAULT_TEMPO_BPM),
        direction: direction(&melody),
        avg_pitch: avg_pitch(&melody),
        pitch_range: pitch_range(&melody),
        pitch_sd: pitch_sd(&melody),
        rms: rms(&audio).unwrap_or(0.0),
    })
}

/// One row of a feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub label: String,
    pub valence: f64,
    pub arousal: f64,
    pub features: FeatureVector,
}

pub const TABLE_COLUMNS: [&str; 11] = [
    "label",
    "valence",
    "arousal",
    "key",
    "mode",
    "direction",
    "avg_pitch",
    "pitch_range",
    "pitch_sd",
    "tempo",
    "rms",
];

#[derive(Serialize, Deserialize)]
struct CsvRow {
    label: String,
    valence: f64,
    arousal: f64,
    key: String,
    mode: u8,
    direction: u8,
    avg_pitch: f64,
    pitch_range: u8,
    pitch_sd: f64,
    tempo: f64,
    rms: f64,
}

fn key_from_label(label: &str) -> Option<u8> {
    if let Some(i) = KEY_LABELS.iter().position(|k| *k == label) {
        return Some(i as u8);
    }
    label.parse::<u8>().ok().filter(|&k| k < 12)
}

pub fn write_table<W: Write>(rows: &[FeatureRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        let f = &r.features;
        w.serialize(CsvRow {
            label: r.label.clone(),
            valence: r.valence,
            arousal: r.arousal,
            key: f.key_label().to_string(),
            mode: f.mode,
            direction: f.direction as u8,
            avg_pitch: f.avg_pitch,
            pitch_range: f.pitch_range,
            pitch_sd: f.pitch_sd,
            tempo: f.tempo,
            rms: f.rms,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an 11-column feature table. `key` may be a pitch-class name or 0–11.
pub fn read_table<R: Read>(input: R) -> Result<Vec<FeatureRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers != TABLE_COLUMNS {
        return Err(Error::MalformedTable(format!(
            "expected columns {:?}, found {:?}",
            TABLE_COLUMNS, headers
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<CsvRow>().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedTable(format!("row {}: {e}", i + 1)))?;
        let key = key_from_label(rec.key.trim())
            .ok_or_else(|| Error::MalformedTable(format!("row {}: bad key {:?}", i + 1, rec.key)))?;
        let direction = match rec.direction {
            0 => Direction::Descending,
            1 => Direction::Ascending,
            d => return Err(Error::MalformedTable(format!("row {}: bad direction {d}", i + 1))),
        };
        if rec.mode > 1 {
            return Err(Error::MalformedTable(format!("row {}: bad mode {}", i + 1, rec.mode)));
        }
        rows.push(FeatureRow {
            label: rec.label,
            valence: rec.valence,
            arousal: rec.arousal,
            features: FeatureVector {
                key,
                mode: rec.mode,
                tempo: rec.tempo,
                direction,
                avg_pitch: rec.avg_pitch,
                pitch_range: rec.pitch_range,
                pitch_sd: rec.pitch_sd,
                rms: rec.rms,
            },
        });
    }
    Ok(rows)
}
