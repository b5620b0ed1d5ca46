use std::fmt::Write;

use super::parse::AccidentalState;
use super::types::*;

/// Canonical ABC text: headers in X/T/L/M/Q/K order, compact body on one line.
pub fn serialize_abc(score: &Score) -> String {
    let mut out = String::new();
    write_header(score, &mut out);
    out.push_str(&serialize_body(score));
    out
}

pub(crate) fn write_header(score: &Score, out: &mut String) {
    let _ = writeln!(out, "X:{}", score.number);
    if let Some(title) = &score.title {
        let _ = writeln!(out, "T:{title}");
    }
    let _ = writeln!(out, "L:{}", fraction(score.unit_note_length));
    match score.meter {
        Some(m) => {
            let _ = writeln!(out, "M:{m}");
        }
        None => out.push_str("M:none\n"),
    }
    if let Some(t) = score.tempo {
        let _ = writeln!(out, "Q:{}={}", fraction(t.beat), t.bpm);
    }
    let _ = writeln!(out, "K:{}", score.key);
}

fn fraction(r: Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub(crate) fn serialize_body(score: &Score) -> String {
    let mut out = String::new();
    if let Some(bar) = score.opening {
        out.push_str(bar.token());
    }
    let unit_quarters = score.unit_note_length * 4;
    for measure in &score.measures {
        let mut state = AccidentalState::new();
        for note in &measure.notes {
            write_note(note, &score.key, unit_quarters, &mut state, &mut out);
        }
        out.push_str(measure.bar.token());
    }
    out
}

fn write_note(
    note: &Note,
    key: &KeySignature,
    unit_quarters: Rational,
    state: &mut AccidentalState,
    out: &mut String,
) {
    match note.pitch {
        None => out.push('z'),
        Some(pitch) => {
            let (letter, accidental) = spell(pitch.midi() as i32, key);
            let natural = pitch.midi() as i32 - accidental;
            let octave = natural.div_euclid(12) - 1;
            let current = state
                .get(&(letter, octave))
                .copied()
                .unwrap_or_else(|| key.accidental_for(letter));
            if current != accidental {
                out.push_str(match accidental {
                    2 => "^^",
                    1 => "^",
                    0 => "=",
                    -1 => "_",
                    _ => "__",
                });
                state.insert((letter, octave), accidental);
            }
            let name = LETTERS[letter];
            if octave >= 5 {
                out.push(name.to_ascii_lowercase());
                for _ in 5..octave {
                    out.push('\'');
                }
            } else {
                out.push(name);
                for _ in octave..4 {
                    out.push(',');
                }
            }
        }
    }
    let multiplier = note.duration.value() / unit_quarters;
    if *multiplier.numer() != 1 {
        let _ = write!(out, "{}", multiplier.numer());
    }
    if *multiplier.denom() != 1 {
        let _ = write!(out, "/{}", multiplier.denom());
    }
    if note.tie {
        out.push('-');
    }
}

/// Chooses a letter and accidental for a MIDI pitch: the key's own spelling when the pitch
/// is diatonic, else a natural, else a sharp (sharp keys) or flat (flat keys).
pub(crate) fn spell(midi: i32, key: &KeySignature) -> (usize, i32) {
    let pc = midi.rem_euclid(12);
    let fits = |letter: usize, acc: i32| (LETTER_PC[letter] + acc).rem_euclid(12) == pc;
    if let Some(l) = (0..7).find(|&l| fits(l, key.accidental_for(l))) {
        return (l, key.accidental_for(l));
    }
    if let Some(l) = (0..7).find(|&l| fits(l, 0)) {
        return (l, 0);
    }
    let order = if key.fifths() >= 0 { [1, -1] } else { [-1, 1] };
    for acc in order {
        if let Some(l) = (0..7).find(|&l| fits(l, acc)) {
            return (l, acc);
        }
    }
    unreachable!("every pitch class has a natural or single-accidental spelling")
}
