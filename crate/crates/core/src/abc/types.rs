use std::fmt;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational used for every duration and meter computation.
pub type Rational = Ratio<i64>;

/// MIDI note number, middle C = 60.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pitch(u8);

impl Pitch {
    pub const MIDDLE_C: Pitch = Pitch(60);

    pub fn new(midi: i32) -> Result<Pitch> {
        if (0..=127).contains(&midi) {
            Ok(Pitch(midi as u8))
        } else {
            Err(Error::Range(midi))
        }
    }

    pub fn midi(self) -> u8 {
        self.0
    }

    pub fn shifted(self, semitones: i32) -> Result<Pitch> {
        Pitch::new(self.0 as i32 + semitones)
    }

    /// Equal-temperament frequency with A4 = 440 Hz.
    pub fn frequency(self) -> f64 {
        440.0 * 2f64.powf((self.0 as f64 - 69.0) / 12.0)
    }
}

/// Note length in quarter notes (a quarter note is 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Duration(Rational);

impl Duration {
    pub fn new(quarters: Rational) -> Result<Duration> {
        if quarters > Rational::zero() {
            Ok(Duration(quarters))
        } else {
            Err(Error::InvalidArgument(format!(
                "duration must be positive, got {quarters}"
            )))
        }
    }

    pub fn quarters(n: i64, d: i64) -> Duration {
        Duration::new(Rational::new(n, d)).expect("positive duration literal")
    }

    pub fn value(self) -> Rational {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn scaled(self, factor: Rational) -> Result<Duration> {
        Duration::new(self.0 * factor)
    }
}

/// A sounded note or a rest. `tie` marks a tie into the following note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Note {
    pub pitch: Option<Pitch>,
    pub duration: Duration,
    pub tie: bool,
}

impl Note {
    pub fn sounded(pitch: Pitch, duration: Duration) -> Note {
        Note {
            pitch: Some(pitch),
            duration,
            tie: false,
        }
    }

    pub fn rest(duration: Duration) -> Note {
        Note {
            pitch: None,
            duration,
            tie: false,
        }
    }

    pub fn is_rest(&self) -> bool {
        self.pitch.is_none()
    }
}

/// Diatonic note letters in scale order starting at C.
pub(crate) const LETTERS: [char; 7] = ['C', 'D', 'E', 'F', 'G', 'A', 'B'];
pub(crate) const LETTER_PC: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
/// Sharps are added in this letter order (F C G D A E B), flats in reverse.
const SHARP_ORDER: [usize; 7] = [3, 0, 4, 1, 5, 2, 6];

/// The twelve pitch-class labels used in feature tables.
pub const KEY_LABELS: [&str; 12] = [
    "C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B",
];

pub(crate) fn letter_index(c: char) -> Option<usize> {
    LETTERS.iter().position(|&l| l == c.to_ascii_uppercase())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Major,
    Minor,
    Ionian,
    Dorian,
    Phrygian,
    Lydian,
    Mixolydian,
    Aeolian,
    Locrian,
}

impl Mode {
    /// Offset in fifths from the major key on the same tonic.
    fn fifths_offset(self) -> i32 {
        match self {
            Mode::Major | Mode::Ionian => 0,
            Mode::Lydian => 1,
            Mode::Mixolydian => -1,
            Mode::Dorian => -2,
            Mode::Minor | Mode::Aeolian => -3,
            Mode::Phrygian => -4,
            Mode::Locrian => -5,
        }
    }

    /// True for modes with a major third above the tonic.
    pub fn is_major_class(self) -> bool {
        matches!(
            self,
            Mode::Major | Mode::Ionian | Mode::Lydian | Mode::Mixolydian
        )
    }

    fn suffix(self) -> &'static str {
        match self {
            Mode::Major => "",
            Mode::Minor => "m",
            Mode::Ionian => "ion",
            Mode::Dorian => "dor",
            Mode::Phrygian => "phr",
            Mode::Lydian => "lyd",
            Mode::Mixolydian => "mix",
            Mode::Aeolian => "aeo",
            Mode::Locrian => "loc",
        }
    }

    pub(crate) fn parse(s: &str) -> Option<Mode> {
        let lower = s.to_ascii_lowercase();
        if lower.is_empty() || lower == "maj" || lower == "major" {
            return Some(Mode::Major);
        }
        if lower == "m" || lower == "min" || lower == "minor" {
            return Some(Mode::Minor);
        }
        if lower.len() < 3 {
            return None;
        }
        let mode = match &lower[..3] {
            "ion" => Mode::Ionian,
            "dor" => Mode::Dorian,
            "phr" => Mode::Phrygian,
            "lyd" => Mode::Lydian,
            "mix" => Mode::Mixolydian,
            "aeo" => Mode::Aeolian,
            "loc" => Mode::Locrian,
            _ => return None,
        };
        let full = match mode {
            Mode::Ionian => "ionian",
            Mode::Dorian => "dorian",
            Mode::Phrygian => "phrygian",
            Mode::Lydian => "lydian",
            Mode::Mixolydian => "mixolydian",
            Mode::Aeolian => "aeolian",
            Mode::Locrian => "locrian",
            _ => unreachable!(),
        };
        full.starts_with(&lower).then_some(mode)
    }
}

/// Spelled tonic: a letter plus sharps (positive) or flats (negative).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tonic {
    letter: usize,
    accidental: i8,
}

impl Tonic {
    pub fn new(letter: char, accidental: i8) -> Result<Tonic> {
        let letter = letter_index(letter)
            .ok_or_else(|| Error::InvalidArgument(format!("bad tonic letter {letter}")))?;
        if accidental.abs() > 1 {
            return Err(Error::InvalidArgument("tonic accidental out of range".into()));
        }
        Ok(Tonic { letter, accidental })
    }

    pub fn pitch_class(self) -> i32 {
        (LETTER_PC[self.letter] + self.accidental as i32).rem_euclid(12)
    }

    /// Position of the major key on this tonic on the circle of fifths.
    fn major_fifths(self) -> i32 {
        const NATURAL: [i32; 7] = [0, 2, 4, -1, 1, 3, 5];
        NATURAL[self.letter] + 7 * self.accidental as i32
    }

    fn from_major_fifths(fifths: i32) -> Tonic {
        // C G D A E B F# C# ... and C F Bb Eb ... on the flat side
        let letter = (4 * fifths).rem_euclid(7) as usize;
        let natural = [0, 2, 4, -1, 1, 3, 5][letter];
        Tonic {
            letter,
            accidental: ((fifths - natural) / 7) as i8,
        }
    }
}

impl fmt::Display for Tonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", LETTERS[self.letter])?;
        match self.accidental {
            1 => write!(f, "#"),
            -1 => write!(f, "b"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeySignature {
    pub tonic: Tonic,
    pub mode: Mode,
}

impl KeySignature {
    pub fn new(tonic: Tonic, mode: Mode) -> Result<KeySignature> {
        let key = KeySignature { tonic, mode };
        if key.fifths().abs() > 7 {
            return Err(Error::InvalidArgument(format!(
                "key {key} needs more than seven accidentals"
            )));
        }
        Ok(key)
    }

    pub fn c_major() -> KeySignature {
        KeySignature {
            tonic: Tonic {
                letter: 0,
                accidental: 0,
            },
            mode: Mode::Major,
        }
    }

    /// Key with the given mode whose signature has `fifths` sharps (negative: flats).
    pub fn from_fifths(fifths: i32, mode: Mode) -> Result<KeySignature> {
        if fifths.abs() > 7 {
            return Err(Error::InvalidArgument(format!("{fifths} fifths")));
        }
        let tonic = Tonic::from_major_fifths(fifths - mode.fifths_offset());
        KeySignature::new(tonic, mode)
    }

    /// Number of sharps (positive) or flats (negative) in the signature.
    pub fn fifths(&self) -> i32 {
        self.tonic.major_fifths() + self.mode.fifths_offset()
    }

    /// Accidental the signature applies to a letter index (0 = C).
    pub fn accidental_for(&self, letter: usize) -> i32 {
        let fifths = self.fifths();
        let rank = SHARP_ORDER.iter().position(|&l| l == letter).unwrap() as i32;
        if fifths > 0 && rank < fifths {
            1
        } else if fifths < 0 && 6 - rank < -fifths {
            -1
        } else {
            0
        }
    }

    pub fn pitch_class(&self) -> i32 {
        self.tonic.pitch_class()
    }

    /// Pitch-class label from the twelve-key feature vocabulary.
    pub fn label(&self) -> &'static str {
        KEY_LABELS[self.pitch_class() as usize]
    }

    pub fn is_major_class(&self) -> bool {
        self.mode.is_major_class()
    }

    /// The fifteen signatures from seven flats to seven sharps in this key's mode.
    pub fn fifteen_keys(&self) -> Vec<KeySignature> {
        (-7..=7)
            .map(|f| KeySignature::from_fifths(f, self.mode).expect("fifths in range"))
            .collect()
    }

    /// Smallest-magnitude semitone shift from this tonic to `target`'s; a tritone goes down.
    pub fn shift_to(&self, target: &KeySignature) -> i32 {
        let d = (target.pitch_class() - self.pitch_class()).rem_euclid(12);
        if d >= 6 {
            d - 12
        } else {
            d
        }
    }
}

impl fmt::Display for KeySignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.tonic, self.mode.suffix())
    }
}

/// Time signature such as 6/8. Kept unreduced so 6/8 and 3/4 stay distinct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Meter {
    pub numerator: u32,
    pub denominator: u32,
}

impl Meter {
    pub fn new(numerator: u32, denominator: u32) -> Result<Meter> {
        if numerator == 0 || denominator == 0 {
            return Err(Error::InvalidArgument("meter terms must be positive".into()));
        }
        Ok(Meter {
            numerator,
            denominator,
        })
    }

    /// Length of a full measure in quarter notes.
    pub fn measure_length(&self) -> Rational {
        Rational::new(4 * self.numerator as i64, self.denominator as i64)
    }

    pub fn as_ratio(&self) -> Rational {
        Rational::new(self.numerator as i64, self.denominator as i64)
    }
}

impl fmt::Display for Meter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// `Q:` field: `bpm` beats of length `beat` (a fraction of a whole note) per minute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tempo {
    pub beat: Rational,
    pub bpm: u32,
}

impl Tempo {
    pub fn quarter(bpm: u32) -> Tempo {
        Tempo {
            beat: Rational::new(1, 4),
            bpm,
        }
    }

    /// Tempo expressed in quarter notes per minute.
    pub fn quarter_bpm(&self) -> f64 {
        (self.beat * 4 * self.bpm as i64).to_f64().unwrap_or(f64::NAN)
    }

    /// Microseconds per quarter note.
    pub fn micros_per_quarter(&self) -> u32 {
        (60_000_000.0 / self.quarter_bpm()).round() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Barline {
    /// Measure closed by the end of the tune without a barline.
    Open,
    Single,
    Double,
    Final,
    RepeatStart,
    RepeatEnd,
    RepeatBoth,
}

impl Barline {
    pub fn token(self) -> &'static str {
        match self {
            Barline::Open => "",
            Barline::Single => "|",
            Barline::Double => "||",
            Barline::Final => "|]",
            Barline::RepeatStart => "|:",
            Barline::RepeatEnd => ":|",
            Barline::RepeatBoth => "::",
        }
    }

    /// Barlines that delimit sections for control codes.
    pub fn ends_section(self) -> bool {
        matches!(
            self,
            Barline::Double
                | Barline::Final
                | Barline::RepeatStart
                | Barline::RepeatEnd
                | Barline::RepeatBoth
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Measure {
    pub notes: Vec<Note>,
    pub bar: Barline,
}

impl Measure {
    pub fn new(notes: Vec<Note>, bar: Barline) -> Measure {
        Measure { notes, bar }
    }

    pub fn duration(&self) -> Rational {
        self.notes
            .iter()
            .fold(Rational::zero(), |acc, n| acc + n.duration.value())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Score {
    pub number: u32,
    pub title: Option<String>,
    pub key: KeySignature,
    /// `None` is free meter (`M:none`).
    pub meter: Option<Meter>,
    /// `L:` value as a fraction of a whole note.
    pub unit_note_length: Rational,
    pub tempo: Option<Tempo>,
    /// Barline written before the first measure, if any.
    pub opening: Option<Barline>,
    pub measures: Vec<Measure>,
}

impl Score {
    pub fn new(
        key: KeySignature,
        meter: Option<Meter>,
        unit_note_length: Rational,
        measures: Vec<Measure>,
    ) -> Score {
        Score {
            number: 1,
            title: None,
            key,
            meter,
            unit_note_length,
            tempo: None,
            opening: None,
            measures,
        }
    }

    pub fn notes(&self) -> impl Iterator<Item = &Note> {
        self.measures.iter().flat_map(|m| m.notes.iter())
    }

    pub fn notes_mut(&mut self) -> impl Iterator<Item = &mut Note> {
        self.measures.iter_mut().flat_map(|m| m.notes.iter_mut())
    }

    pub fn total_duration(&self) -> Rational {
        self.measures
            .iter()
            .fold(Rational::zero(), |acc, m| acc + m.duration())
    }

    /// Indices of measures whose closing barline ends a section.
    pub fn section_boundaries(&self) -> Vec<usize> {
        self.measures
            .iter()
            .enumerate()
            .filter(|(_, m)| m.bar.ends_section())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn final_marker(&self) -> bool {
        self.measures
            .last()
            .map(|m| m.bar == Barline::Final)
            .unwrap_or(false)
    }

    pub fn set_final_marker(&mut self) {
        if let Some(last) = self.measures.last_mut() {
            last.bar = Barline::Final;
        }
    }

    /// Quarter-note tempo, or `default` when the score has no `Q:` field.
    pub fn tempo_bpm_or(&self, default: f64) -> f64 {
        self.tempo.map(|t| t.quarter_bpm()).unwrap_or(default)
    }

    pub fn sounded_pitches(&self) -> impl Iterator<Item = Pitch> + '_ {
        self.notes().filter_map(|n| n.pitch)
    }

    /// Checks the measure invariant: no measure longer than the meter, at least one measure.
    pub fn validate(&self) -> Result<()> {
        if self.measures.is_empty() {
            return Err(Error::InvalidArgument("score has no measures".into()));
        }
        let full = self.meter.map(|m| m.measure_length());
        for (i, m) in self.measures.iter().enumerate() {
            if m.notes.is_empty() {
                return Err(Error::InvalidArgument(format!("measure {} is empty", i + 1)));
            }
            if let Some(full) = full.filter(|&full| m.duration() > full) {
                return Err(Error::InvalidArgument(format!(
                    "measure {} is overfull ({} > {})",
                    i + 1,
                    m.duration(),
                    full
                )));
            }
        }
        Ok(())
    }
}
