//! Strict parser for the monophonic ABC subset.
//!
//! Accepted: header fields X T L M Q K plus informational fields (dropped),
//! note letters with octave marks, accidentals, length multipliers/divisors,
//! rests, ties, broken rhythm and the barlines `| || |] |: :| ::`.
//! Anything else in the body is rejected.
//!
//! A line break that is not preceded by a barline closes the open measure,
//! which is how folk-song collections mark phrase ends.

use std::collections::HashMap;

use num_traits::Zero;

use super::types::*;
use crate::error::{Error, Result};

/// Informational fields that may appear in the header and carry no musical data.
const INFO_FIELDS: &str = "ABCDFGHINORSWZ";

/// Fields that imply constructs outside the supported subset.
const REJECTED_FIELDS: &str = "EPUVmswr";

pub fn parse_abc(text: &str) -> Result<Score> {
    Parser::default().parse(text)
}

/// Splits a multi-tune file into tune texts, returning each with its 1-based start line.
pub fn split_tunes(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut start = 1;
    let flush = |current: &mut Vec<&str>, start: usize, out: &mut Vec<(usize, String)>| {
        if current
            .iter()
            .any(|l| l.trim_start().starts_with("X:"))
        {
            out.push((start, current.join("\n")));
        }
        current.clear();
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut current, start, &mut out);
            continue;
        }
        if current.is_empty() {
            start = i + 1;
        }
        current.push(line);
    }
    flush(&mut current, start, &mut out);
    out
}

#[derive(Default)]
struct Parser {
    number: Option<u32>,
    title: Option<String>,
    unit: Option<Rational>,
    meter: Option<Option<Meter>>,
    tempo: Option<Tempo>,
    key: Option<KeySignature>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn header_field(line: &str) -> Option<(char, &str)> {
    let mut chars = line.chars();
    let letter = chars.next()?;
    if letter.is_ascii_alphabetic() && chars.next() == Some(':') {
        Some((letter, line[2..].trim()))
    } else {
        None
    }
}

/// A field line inside the body, as opposed to a note followed by a repeat barline.
fn is_body_field(line: &str) -> bool {
    let chars: Vec<char> = line.chars().take(3).collect();
    chars.len() >= 2
        && chars[0].is_ascii_alphabetic()
        && chars[1] == ':'
        && !matches!(chars.get(2), Some('|') | Some(':'))
}

impl Parser {
    fn parse(mut self, text: &str) -> Result<Score> {
        let lines: Vec<&str> = text.lines().collect();
        let mut body_start = None;
        for (i, raw) in lines.iter().enumerate() {
            let lineno = i + 1;
            let line = strip_comment(raw).trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let Some((letter, value)) = header_field(line) else {
                return Err(Error::semantic(lineno, 1, "missing K: field before tune body"));
            };
            self.header(letter, value, lineno)?;
            if letter == 'K' {
                body_start = Some(i + 1);
                break;
            }
        }
        let Some(body_start) = body_start else {
            return Err(Error::semantic(lines.len().max(1), 1, "missing K: field"));
        };
        let key = self.key.expect("K parsed");
        let meter = self.meter.unwrap_or(None);
        let unit = self.unit.unwrap_or_else(|| default_unit(meter));
        let mut body = BodyParser::new(key, meter, unit);
        for (i, raw) in lines.iter().enumerate().skip(body_start) {
            body.line(raw, i + 1)?;
        }
        let (opening, measures) = body.finish(lines.len())?;
        Ok(Score {
            number: self.number.unwrap_or(1),
            title: self.title,
            key,
            meter,
            unit_note_length: unit,
            tempo: self.tempo,
            opening,
            measures,
        })
    }

    fn header(&mut self, letter: char, value: &str, line: usize) -> Result<()> {
        let col = 3;
        let bad = |msg: String| Error::syntax(line, col, msg);
        match letter {
            'X' => {
                let n = value
                    .parse::<u32>()
                    .map_err(|_| bad(format!("bad reference number {value:?}")))?;
                self.number = Some(n);
            }
            'T' => {
                if self.title.is_none() && !value.is_empty() {
                    self.title = Some(value.to_string());
                }
            }
            'L' => {
                let unit = parse_fraction(value)
                    .ok_or_else(|| bad(format!("bad unit note length {value:?}")))?;
                self.unit = Some(unit);
            }
            'M' => self.meter = Some(parse_meter(value).ok_or_else(|| bad(format!("bad meter {value:?}")))?),
            'Q' => self.tempo = Some(parse_tempo(value).ok_or_else(|| bad(format!("bad tempo {value:?}")))?),
            'K' => {
                let key = parse_key(value).map_err(bad)?;
                self.key = Some(key);
            }
            c if INFO_FIELDS.contains(c) => {}
            c if REJECTED_FIELDS.contains(c) => {
                return Err(Error::syntax(line, 1, format!("unsupported field {c}:")));
            }
            c => return Err(Error::syntax(line, 1, format!("unknown header field {c}:"))),
        }
        Ok(())
    }
}

/// Default `L:` when absent: 1/16 for meters below 3/4, else 1/8.
fn default_unit(meter: Option<Meter>) -> Rational {
    match meter {
        Some(m) if m.as_ratio() < Rational::new(3, 4) => Rational::new(1, 16),
        _ => Rational::new(1, 8),
    }
}

fn parse_fraction(s: &str) -> Option<Rational> {
    let (n, d) = s.split_once('/')?;
    let n: i64 = n.trim().parse().ok()?;
    let d: i64 = d.trim().parse().ok()?;
    (n > 0 && d > 0).then(|| Rational::new(n, d))
}

fn parse_meter(s: &str) -> Option<Option<Meter>> {
    match s {
        "none" | "" => Some(None),
        "C" => Some(Some(Meter::new(4, 4).ok()?)),
        "C|" => Some(Some(Meter::new(2, 2).ok()?)),
        _ => {
            let (n, d) = s.split_once('/')?;
            let n: u32 = n.trim().parse().ok()?;
            let d: u32 = d.trim().parse().ok()?;
            Some(Some(Meter::new(n, d).ok()?))
        }
    }
}

fn parse_tempo(s: &str) -> Option<Tempo> {
    // drop quoted text such as "Allegro"
    let mut cleaned = String::new();
    let mut in_quote = false;
    for c in s.chars() {
        if c == '"' {
            in_quote = !in_quote;
        } else if !in_quote {
            cleaned.push(c);
        }
    }
    if in_quote {
        return None;
    }
    let cleaned = cleaned.trim();
    let (beat, bpm) = match cleaned.split_once('=') {
        Some((beat, bpm)) => (parse_fraction(beat.trim())?, bpm.trim()),
        None => (Rational::new(1, 4), cleaned),
    };
    let bpm: u32 = bpm.parse().ok()?;
    (bpm > 0).then_some(Tempo { beat, bpm })
}

fn parse_key(s: &str) -> std::result::Result<KeySignature, String> {
    let mut chars = s.chars().peekable();
    let letter = chars
        .next()
        .filter(|c| letter_index(*c).is_some() && c.is_ascii_uppercase())
        .ok_or_else(|| format!("bad key {s:?}"))?;
    let accidental = match chars.peek() {
        Some('#') => {
            chars.next();
            1
        }
        Some('b') => {
            chars.next();
            -1
        }
        _ => 0,
    };
    let rest: String = chars.collect();
    let rest = rest.trim();
    if rest.contains(char::is_whitespace) {
        return Err(format!("unsupported key modifiers in {s:?}"));
    }
    let mode = Mode::parse(rest).ok_or_else(|| format!("unknown mode {rest:?}"))?;
    let tonic = Tonic::new(letter, accidental).map_err(|e| e.to_string())?;
    KeySignature::new(tonic, mode).map_err(|e| e.to_string())
}

/// Per-measure accidental memory keyed by (letter index, written octave).
pub(crate) type AccidentalState = HashMap<(usize, i32), i32>;

struct BodyParser {
    key: KeySignature,
    meter: Option<Meter>,
    /// `L:` in quarter notes.
    unit_quarters: Rational,
    opening: Option<Barline>,
    measures: Vec<Measure>,
    current: Vec<Note>,
    accidentals: AccidentalState,
    /// A line ended while the measure was open.
    line_closed: bool,
    /// Broken-rhythm multiplier waiting for the next note.
    pending_broken: Option<Rational>,
    pending_tie_pos: Option<(usize, usize)>,
}

fn merge_bars(prev: Barline, next: Barline) -> Barline {
    use Barline::*;
    match (prev, next) {
        (Single | Open, n) => n,
        (p, Single) => p,
        (RepeatEnd | RepeatBoth, RepeatStart | RepeatBoth) => RepeatBoth,
        (p @ (RepeatEnd | RepeatBoth), Double | Final) => p,
        (_, n) => n,
    }
}

impl BodyParser {
    fn new(key: KeySignature, meter: Option<Meter>, unit: Rational) -> BodyParser {
        BodyParser {
            key,
            meter,
            unit_quarters: unit * 4,
            opening: None,
            measures: Vec::new(),
            current: Vec::new(),
            accidentals: HashMap::new(),
            line_closed: false,
            pending_broken: None,
            pending_tie_pos: None,
        }
    }

    fn close_measure(&mut self, bar: Barline, line: usize, col: usize) -> Result<()> {
        if self.pending_broken.is_some() {
            return Err(Error::syntax(line, col, "broken rhythm across a barline"));
        }
        if self.current.is_empty() {
            // adjacent barlines, e.g. a line ending in "|" and the next starting with "|"
            let prev = match self.measures.last_mut() {
                Some(m) => &mut m.bar,
                None => self.opening.get_or_insert(Barline::Single),
            };
            *prev = merge_bars(*prev, bar);
            return Ok(());
        }
        self.check_fill(line, col)?;
        self.measures
            .push(Measure::new(std::mem::take(&mut self.current), bar));
        self.accidentals.clear();
        self.line_closed = false;
        Ok(())
    }

    fn check_fill(&self, line: usize, col: usize) -> Result<()> {
        if let Some(meter) = self.meter {
            let total = self
                .current
                .iter()
                .fold(Rational::zero(), |a, n| a + n.duration.value());
            if total > meter.measure_length() {
                return Err(Error::semantic(
                    line,
                    col,
                    format!(
                        "measure {} overfull: {} quarters in {} meter",
                        self.measures.len() + 1,
                        total,
                        meter
                    ),
                ));
            }
        }
        Ok(())
    }

    fn line(&mut self, raw: &str, lineno: usize) -> Result<()> {
        let text = strip_comment(raw);
        let chars: Vec<char> = text.chars().collect();
        if chars.iter().all(|c| c.is_whitespace()) {
            return Ok(());
        }
        if is_body_field(text) {
            return Err(Error::syntax(lineno, 1, "header fields inside the tune body are not supported"));
        }
        let mut i = 0;
        let mut continued = false;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            match c {
                ' ' | '\t' => i += 1,
                '|' | ':' => {
                    let (bar, len) = lex_barline(&chars[i..])
                        .ok_or_else(|| Error::syntax(lineno, col, "malformed barline"))?;
                    i += len;
                    if chars.get(i).is_some_and(|c| c.is_ascii_digit()) {
                        return Err(Error::syntax(lineno, col, "repeat endings are not supported"));
                    }
                    self.close_measure(bar, lineno, col)?;
                }
                '^' | '_' | '=' | 'A'..='G' | 'a'..='g' | 'z' => {
                    if self.line_closed && !self.current.is_empty() {
                        self.close_measure(Barline::Single, lineno, col)?;
                    }
                    i = self.note(&chars, i, lineno)?;
                }
                '-' => {
                    match self.current.last_mut() {
                        Some(n) if !n.is_rest() && !n.tie => n.tie = true,
                        _ => return Err(Error::syntax(lineno, col, "tie without a preceding note")),
                    }
                    self.pending_tie_pos = Some((lineno, col));
                    i += 1;
                }
                '>' | '<' => {
                    let mut n = 0;
                    while chars.get(i + n) == Some(&c) {
                        n += 1;
                    }
                    if n > 3 {
                        return Err(Error::syntax(lineno, col, "broken rhythm too long"));
                    }
                    let Some(prev) = self.current.last_mut() else {
                        return Err(Error::syntax(lineno, col, "broken rhythm without a preceding note"));
                    };
                    if self.pending_broken.is_some() {
                        return Err(Error::syntax(lineno, col, "consecutive broken rhythms"));
                    }
                    let short = Rational::new(1, 1 << n);
                    let long = Rational::from_integer(2) - short;
                    let (first, second) = if c == '>' { (long, short) } else { (short, long) };
                    prev.duration = prev.duration.scaled(first)?;
                    self.pending_broken = Some(second);
                    self.check_fill(lineno, col)?;
                    i += n;
                }
                '(' if chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()) => {
                    return Err(Error::syntax(lineno, col, "tuplets are not supported"));
                }
                // slurs are phrasing only
                '(' | ')' => i += 1,
                '\\' if chars[i + 1..].iter().all(|c| c.is_whitespace()) => {
                    continued = true;
                    i = chars.len();
                }
                _ => return Err(Error::syntax(lineno, col, unsupported_message(c))),
            }
        }
        if !continued && !self.current.is_empty() {
            self.line_closed = true;
        }
        Ok(())
    }

    fn note(&mut self, chars: &[char], start: usize, lineno: usize) -> Result<usize> {
        let col = start + 1;
        let mut i = start;
        let mut explicit: Option<i32> = None;
        while let Some(&c) = chars.get(i) {
            let delta = match c {
                '^' => 1,
                '_' => -1,
                '=' => 0,
                _ => break,
            };
            explicit = Some(match explicit {
                None => delta,
                Some(prev) if delta != 0 && prev == delta && prev.abs() == 1 => prev + delta,
                _ => return Err(Error::syntax(lineno, i + 1, "malformed accidental")),
            });
            i += 1;
        }
        let letter_char = *chars
            .get(i)
            .ok_or_else(|| Error::syntax(lineno, i + 1, "accidental without a note"))?;
        let rest = letter_char == 'z';
        if rest && explicit.is_some() {
            return Err(Error::syntax(lineno, col, "accidental on a rest"));
        }
        let letter = if rest {
            None
        } else {
            Some(letter_index(letter_char).ok_or_else(|| {
                Error::syntax(lineno, i + 1, "accidental must precede a note letter")
            })?)
        };
        i += 1;
        let mut octave: i32 = if letter_char.is_ascii_lowercase() && !rest { 5 } else { 4 };
        while let Some(&c) = chars.get(i) {
            match c {
                '\'' => octave += 1,
                ',' => octave -= 1,
                _ => break,
            }
            if rest {
                return Err(Error::syntax(lineno, i + 1, "octave mark on a rest"));
            }
            i += 1;
        }
        let (multiplier, next) = lex_length(chars, i)
            .map_err(|msg| Error::syntax(lineno, i + 1, msg))?;
        i = next;
        let mut quarters = self.unit_quarters * multiplier;
        if let Some(factor) = self.pending_broken.take() {
            quarters *= factor;
        }
        let duration = Duration::new(quarters)?;
        let pitch = match letter {
            None => None,
            Some(letter) => {
                let acc = match explicit {
                    Some(a) => {
                        self.accidentals.insert((letter, octave), a);
                        a
                    }
                    None => self
                        .accidentals
                        .get(&(letter, octave))
                        .copied()
                        .unwrap_or_else(|| self.key.accidental_for(letter)),
                };
                let midi = 12 * (octave + 1) + LETTER_PC[letter] + acc;
                Some(Pitch::new(midi).map_err(|_| {
                    Error::semantic(lineno, col, format!("pitch {midi} outside MIDI range"))
                })?)
            }
        };
        if let Some(prev) = self.current.last() {
            if prev.tie && prev.pitch != pitch {
                return Err(Error::semantic(lineno, col, "tie between different pitches"));
            }
        } else if let Some(prev) = self.measures.last().and_then(|m| m.notes.last()) {
            if prev.tie && prev.pitch != pitch {
                return Err(Error::semantic(lineno, col, "tie between different pitches"));
            }
        }
        self.current.push(Note {
            pitch,
            duration,
            tie: false,
        });
        self.check_fill(lineno, col)?;
        Ok(i)
    }

    fn finish(mut self, last_line: usize) -> Result<(Option<Barline>, Vec<Measure>)> {
        if self.pending_broken.is_some() {
            return Err(Error::syntax(last_line, 1, "broken rhythm at end of tune"));
        }
        if !self.current.is_empty() {
            self.close_measure(Barline::Open, last_line, 1)?;
        }
        if self.measures.is_empty() {
            return Err(Error::semantic(last_line, 1, "tune has no notes"));
        }
        Ok((self.opening, self.measures))
    }
}

fn lex_barline(s: &[char]) -> Option<(Barline, usize)> {
    const FORMS: [(&str, Barline); 9] = [
        (":||:", Barline::RepeatBoth),
        (":|:", Barline::RepeatBoth),
        ("::", Barline::RepeatBoth),
        (":||", Barline::RepeatEnd),
        (":|", Barline::RepeatEnd),
        ("|]", Barline::Final),
        ("||", Barline::Double),
        ("|:", Barline::RepeatStart),
        ("|", Barline::Single),
    ];
    for (form, bar) in FORMS.iter() {
        let n = form.chars().count();
        if s.len() >= n && s[..n].iter().copied().eq(form.chars()) {
            return Some((*bar, n));
        }
    }
    None
}

/// Parses an ABC length suffix (`3`, `3/2`, `/2`, `/`, `//`) starting at `i`.
fn lex_length(chars: &[char], mut i: usize) -> std::result::Result<(Rational, usize), &'static str> {
    let digits = |i: &mut usize| -> Option<i64> {
        let start = *i;
        while chars.get(*i).is_some_and(|c| c.is_ascii_digit()) {
            *i += 1;
        }
        if *i == start {
            None
        } else {
            chars[start..*i].iter().collect::<String>().parse().ok()
        }
    };
    let num = digits(&mut i).unwrap_or(1);
    let mut den = 1i64;
    if chars.get(i) == Some(&'/') {
        i += 1;
        if let Some(d) = digits(&mut i) {
            den = d;
        } else {
            den = 2;
            while chars.get(i) == Some(&'/') {
                den *= 2;
                i += 1;
            }
        }
    }
    if num == 0 || den == 0 || num > 64 || den > 64 {
        return Err("note length out of range");
    }
    if chars.get(i) == Some(&'/') || chars.get(i).is_some_and(|c| c.is_ascii_digit()) {
        return Err("malformed note length");
    }
    Ok((Rational::new(num, den), i))
}

fn unsupported_message(c: char) -> String {
    match c {
        '{' | '}' => "grace notes are not supported".into(),
        '[' | ']' => "chords and inline fields are not supported".into(),
        '"' => "chord symbols and annotations are not supported".into(),
        '!' | '+' | '.' | '~' => "decorations are not supported".into(),
        'x' | 'Z' | 'X' => "invisible and multi-measure rests are not supported".into(),
        'H' | 'L' | 'M' | 'O' | 'P' | 'S' | 'T' | 'u' | 'v' => "decorations are not supported".into(),
        'w' | 'W' => "lyrics are not supported".into(),
        'V' => "multiple voices are not supported".into(),
        c => format!("unexpected character {c:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Duration {
        Duration::quarters(n, d)
    }

    #[test]
    fn minimal_tune() {
        let s = parse_abc("X:1\nL:1/4\nM:4/4\nK:C\nCDEF|GABc|]").unwrap();
        assert_eq!(s.measures.len(), 2);
        assert_eq!(s.key, KeySignature::c_major());
        let pitches: Vec<u8> = s.sounded_pitches().map(|p| p.midi()).collect();
        assert_eq!(pitches, [60, 62, 64, 65, 67, 69, 71, 72]);
        assert!(s.notes().all(|n| n.duration == q(1, 1)));
        assert!(s.final_marker());
        assert_eq!(s.measures[0].bar, Barline::Single);
    }

    #[test]
    fn overfull_measure_is_semantic_error() {
        let err = parse_abc("X:1\nL:1/4\nM:4/4\nK:C\nCDEFG|GABc|]").unwrap_err();
        match err {
            Error::Semantic { pos, msg } => {
                assert_eq!(pos.line, 5);
                assert_eq!(pos.col, 5);
                assert!(msg.contains("overfull"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_key_field() {
        assert!(matches!(
            parse_abc("X:1\nL:1/4\nM:4/4\n"),
            Err(Error::Semantic { .. })
        ));
        assert!(matches!(
            parse_abc("X:1\nL:1/4\nCDEF|"),
            Err(Error::Semantic { .. })
        ));
    }

    #[test]
    fn unknown_header_is_syntax_error() {
        let err = parse_abc("X:1\nJ:foo\nK:C\nC|").unwrap_err();
        assert!(matches!(err, Error::Syntax { pos, .. } if pos.line == 2));
        assert!(parse_abc("X:1\nV:1\nK:C\nC|").is_err());
        // informational fields are accepted and dropped
        assert!(parse_abc("X:1\nN:note\nO:Europa\nR:Lied\nK:C\nC|").is_ok());
    }

    #[test]
    fn pitch_out_of_range() {
        let err = parse_abc("X:1\nL:1/4\nK:C\nc'''''|").unwrap_err();
        assert!(matches!(err, Error::Semantic { .. }));
        let err = parse_abc("X:1\nL:1/4\nK:C\nC,,,,,,|").unwrap_err();
        assert!(matches!(err, Error::Semantic { .. }));
    }

    #[test]
    fn rejected_constructs() {
        for body in ["(3CDE|", "{g}C|", "[CEG]|", "\"Am\"C|", "~C|", "!trill!C|", "C|1D:|", "x2|"] {
            let t = format!("X:1\nL:1/4\nK:C\n{body}");
            assert!(
                matches!(parse_abc(&t), Err(Error::Syntax { .. })),
                "{body} should be rejected"
            );
        }
    }

    #[test]
    fn slurs_are_ignored() {
        let a = parse_abc("X:1\nL:1/4\nK:C\n(CD)(EF)|").unwrap();
        let b = parse_abc("X:1\nL:1/4\nK:C\nCDEF|").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adjacent_barlines_merge() {
        let a = parse_abc("X:1\nL:1/4\nM:2/4\nK:C\nCD|\n|EF:|\n|:GA|]").unwrap();
        assert_eq!(a.measures.len(), 3);
        let bars: Vec<Barline> = a.measures.iter().map(|m| m.bar).collect();
        assert_eq!(bars, [Barline::Single, Barline::RepeatBoth, Barline::Final]);
        let b = parse_abc("X:1\nL:1/4\nK:C\n| |: CD|").unwrap();
        assert_eq!(b.opening, Some(Barline::RepeatStart));
    }

    #[test]
    fn lengths_octaves_accidentals() {
        let s = parse_abc("X:1\nL:1/8\nM:6/8\nK:D\nF2 c' C,/ ^c/ z2|").unwrap();
        let notes: Vec<_> = s.notes().copied().collect();
        assert_eq!(notes[0].pitch.unwrap().midi(), 66); // F# from the key
        assert_eq!(notes[0].duration, q(1, 1));
        assert_eq!(notes[1].pitch.unwrap().midi(), 85); // c#''
        assert_eq!(notes[2].pitch.unwrap().midi(), 49); // C#,
        assert_eq!(notes[2].duration, q(1, 4));
        assert_eq!(notes[3].pitch.unwrap().midi(), 73);
        assert!(notes[4].is_rest());
    }

    #[test]
    fn accidentals_persist_within_measure() {
        let s = parse_abc("X:1\nL:1/4\nM:4/4\nK:C\n^FF=FF|F4|").unwrap();
        let p: Vec<u8> = s.sounded_pitches().map(|p| p.midi()).collect();
        assert_eq!(p, [66, 66, 65, 65, 65]);
        // different octave is unaffected
        let s = parse_abc("X:1\nL:1/4\nM:4/4\nK:C\n_Bb|").unwrap();
        let p: Vec<u8> = s.sounded_pitches().map(|p| p.midi()).collect();
        assert_eq!(p, [70, 83]);
    }

    #[test]
    fn broken_rhythm_and_ties() {
        let s = parse_abc("X:1\nL:1/8\nM:2/4\nK:G\nA>B c-c|").unwrap();
        let n: Vec<_> = s.notes().copied().collect();
        assert_eq!(n[0].duration, q(3, 4));
        assert_eq!(n[1].duration, q(1, 4));
        assert!(n[2].tie);
        assert!(parse_abc("X:1\nL:1/8\nK:G\nA-B|").is_err());
    }

    #[test]
    fn pickup_and_line_break_measures() {
        let t = "X:1\nM:4/2\nL:1/4\nK:G\nG2 | _B2B2c2c2 | d4d4\nz2d4d2 | d2e2=f2d2 | d4z2\nd2 |";
        let s = parse_abc(t).unwrap();
        let sizes: Vec<usize> = s.measures.iter().map(|m| m.notes.len()).collect();
        assert_eq!(sizes, [1, 4, 2, 3, 4, 2, 1]);
        assert_eq!(s.measures[2].bar, Barline::Single);
        // flat persists across the bar within the same measure only
        assert_eq!(s.measures[1].notes[1].pitch.unwrap().midi(), 70);
    }

    #[test]
    fn barline_kinds_and_opening() {
        let s = parse_abc("X:1\nL:1/4\nM:2/4\nK:C\n|:CD:|EF||GA::Bc|]").unwrap();
        assert_eq!(s.opening, Some(Barline::RepeatStart));
        let bars: Vec<Barline> = s.measures.iter().map(|m| m.bar).collect();
        assert_eq!(
            bars,
            [Barline::RepeatEnd, Barline::Double, Barline::RepeatBoth, Barline::Final]
        );
        assert_eq!(s.section_boundaries(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn headers() {
        let s = parse_abc("X:7\nT:Tune\nM:C|\nQ:\"Allegro\" 3/8=60\nK:Ador\nA|").unwrap();
        assert_eq!(s.number, 7);
        assert_eq!(s.title.as_deref(), Some("Tune"));
        assert_eq!(s.meter, Some(Meter::new(2, 2).unwrap()));
        assert_eq!(s.unit_note_length, Rational::new(1, 8));
        assert_eq!(s.key.mode, Mode::Dorian);
        assert!((s.tempo.unwrap().quarter_bpm() - 90.0).abs() < 1e-12);
        let free = parse_abc("X:1\nM:none\nK:C\nCDEFGABcdefg|").unwrap();
        assert_eq!(free.meter, None);
        assert_eq!(free.unit_note_length, Rational::new(1, 8));
        let short = parse_abc("X:1\nM:2/4\nK:C\nC|").unwrap();
        assert_eq!(short.unit_note_length, Rational::new(1, 16));
    }

    #[test]
    fn split_multi_tune_file() {
        let text = "% comment\n\nX:1\nK:C\nC|\n\nX:2\nK:G\nG|\n\n\n";
        let tunes = split_tunes(text);
        assert_eq!(tunes.len(), 2);
        assert_eq!(tunes[0].0, 3);
        assert_eq!(tunes[1].0, 7);
        assert!(tunes.iter().all(|(_, t)| parse_abc(t).is_ok()));
    }
}
