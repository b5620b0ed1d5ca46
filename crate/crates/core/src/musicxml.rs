//! Single-part MusicXML ingestion into the ABC score model.
//!
//! Supports `score-partwise` documents with one part and one voice: `attributes`
//! (divisions, key, time), pitched notes and rests, ties, tempo `sound` marks and
//! barline styles. Compressed `.mxl` containers are read through their
//! `META-INF/container.xml` root file.

use std::io::{Cursor, Read};

use roxmltree::{Document, Node, ParsingOptions};

use crate::abc::{
    Barline, Duration, KeySignature, Measure, Meter, Mode, Note, Pitch, Rational, Score, Tempo,
    LETTER_PC,
};
use crate::error::{Error, Result};

/// Unit note length given to ingested scores (`L:1/4`).
pub const INGEST_UNIT: (i64, i64) = (1, 4);

pub fn parse_musicxml(text: &str) -> Result<Score> {
    let opts = ParsingOptions {
        allow_dtd: true,
        ..ParsingOptions::default()
    };
    let doc = Document::parse_with_options(text, opts).map_err(|e| {
        let pos = e.pos();
        Error::syntax(pos.row as usize, pos.col as usize, e.to_string())
    })?;
    Ingest { doc: &doc }.score()
}

/// Reads the root score of a compressed `.mxl` archive.
pub fn parse_mxl(bytes: &[u8]) -> Result<Score> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes))
        .map_err(|e| Error::syntax(1, 1, format!("bad mxl container: {e}")))?;
    let mut read = |name: &str| -> Result<String> {
        let mut file = archive
            .by_name(name)
            .map_err(|e| Error::syntax(1, 1, format!("{name}: {e}")))?;
        let mut s = String::new();
        file.read_to_string(&mut s)?;
        Ok(s)
    };
    let root = match read("META-INF/container.xml") {
        Ok(container) => rootfile_path(&container)?,
        Err(_) => {
            let names: Vec<String> = archive.file_names().map(str::to_string).collect();
            names
                .into_iter()
                .find(|n| !n.starts_with("META-INF") && (n.ends_with(".xml") || n.ends_with(".musicxml")))
                .ok_or_else(|| Error::syntax(1, 1, "mxl container has no score document"))?
        }
    };
    let mut file = archive
        .by_name(&root)
        .map_err(|e| Error::syntax(1, 1, format!("{root}: {e}")))?;
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    parse_musicxml(&text)
}

fn rootfile_path(container: &str) -> Result<String> {
    let doc = Document::parse(container)
        .map_err(|e| Error::syntax(1, 1, format!("container.xml: {e}")))?;
    doc.descendants()
        .find(|n| n.has_tag_name("rootfile"))
        .and_then(|n| n.attribute("full-path"))
        .map(str::to_string)
        .ok_or_else(|| Error::syntax(1, 1, "container.xml names no rootfile"))
}

struct Ingest<'a, 'input> {
    doc: &'a Document<'input>,
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn child_text<'a>(node: Node<'a, '_>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|c| c.text()).map(str::trim)
}

impl Ingest<'_, '_> {
    fn pos(&self, node: Node) -> (usize, usize) {
        let p = self.doc.text_pos_at(node.range().start);
        (p.row as usize, p.col as usize)
    }

    fn semantic(&self, node: Node, msg: impl Into<String>) -> Error {
        let (line, col) = self.pos(node);
        Error::semantic(line, col, msg)
    }

    fn unsupported(&self, node: Node, what: &str) -> Error {
        let (line, col) = self.pos(node);
        Error::UnsupportedFeature(format!("{what} at {line}:{col}"))
    }

    fn int<T: std::str::FromStr>(&self, node: Node, name: &str) -> Result<Option<T>> {
        match child_text(node, name) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| self.semantic(node, format!("bad <{name}> value {s:?}"))),
        }
    }

    fn score(&self) -> Result<Score> {
        let root = self.doc.root_element();
        if root.has_tag_name("score-timewise") {
            return Err(self.unsupported(root, "score-timewise documents"));
        }
        if !root.has_tag_name("score-partwise") {
            return Err(self.semantic(root, "root element is not <score-partwise>"));
        }
        let parts: Vec<Node> = root.children().filter(|n| n.has_tag_name("part")).collect();
        let declared = root
            .descendants()
            .filter(|n| n.has_tag_name("score-part"))
            .count();
        if parts.len() > 1 || declared > 1 {
            return Err(self.unsupported(root, "multiple parts"));
        }
        let part = *parts
            .first()
            .ok_or_else(|| self.semantic(root, "document has no <part>"))?;

        let mut divisions: Option<i64> = None;
        let mut key = KeySignature::c_major();
        let mut meter: Option<Meter> = None;
        let mut tempo: Option<Tempo> = None;
        let mut voice: Option<String> = None;
        let mut opening = None;
        let mut measures: Vec<Measure> = Vec::new();
        for (index, m) in part.children().filter(|n| n.has_tag_name("measure")).enumerate() {
            let mut notes = Vec::new();
            let mut bar = Barline::Single;
            for el in m.children().filter(|n| n.is_element()) {
                match el.tag_name().name() {
                    "attributes" => {
                        if let Some(d) = self.int::<i64>(el, "divisions")? {
                            if d <= 0 {
                                return Err(self.semantic(el, "divisions must be positive"));
                            }
                            divisions = Some(d);
                        }
                        if let Some(k) = child(el, "key") {
                            key = self.key(k)?;
                        }
                        if let Some(t) = child(el, "time") {
                            meter = self.time(t)?;
                        }
                        if let Some(s) = child(el, "staves") {
                            if s.text().map(str::trim) != Some("1") {
                                return Err(self.unsupported(s, "multiple staves"));
                            }
                        }
                    }
                    "note" => {
                        let d = divisions
                            .ok_or_else(|| self.semantic(el, "note before <divisions>"))?;
                        if let Some(v) = child_text(el, "voice") {
                            match &voice {
                                None => voice = Some(v.to_string()),
                                Some(first) if first != v => {
                                    return Err(self.unsupported(el, "multiple voices"))
                                }
                                _ => {}
                            }
                        }
                        if let Some(n) = self.note(el, d)? {
                            notes.push(n);
                        }
                    }
                    "direction" => {
                        if let Some(t) = el.descendants().find(|n| n.has_tag_name("sound")) {
                            tempo = self.tempo(t)?.or(tempo);
                        }
                    }
                    "sound" => tempo = self.tempo(el)?.or(tempo),
                    "backup" | "forward" => return Err(self.unsupported(el, "multiple voices")),
                    "barline" => {
                        let left = el.attribute("location") == Some("left");
                        let repeat = child(el, "repeat").and_then(|r| r.attribute("direction"));
                        let style = child_text(el, "bar-style");
                        if left {
                            if repeat == Some("forward") {
                                match measures.last_mut() {
                                    Some(prev) => {
                                        prev.bar = if prev.bar == Barline::RepeatEnd {
                                            Barline::RepeatBoth
                                        } else {
                                            Barline::RepeatStart
                                        }
                                    }
                                    None => opening = Some(Barline::RepeatStart),
                                }
                            }
                        } else if repeat == Some("backward") {
                            bar = Barline::RepeatEnd;
                        } else {
                            match style {
                                Some("light-heavy") => bar = Barline::Final,
                                Some("light-light") => bar = Barline::Double,
                                _ => {}
                            }
                        }
                        if child(el, "ending").is_some() {
                            return Err(self.unsupported(el, "repeat endings"));
                        }
                    }
                    _ => {}
                }
            }
            if notes.is_empty() {
                return Err(self.semantic(m, format!("measure {} has no notes", index + 1)));
            }
            let measure = Measure::new(notes, bar);
            if let Some(meter) = meter {
                if measure.duration() > meter.measure_length() {
                    return Err(self.semantic(
                        m,
                        format!("measure {} overfull for {meter}", index + 1),
                    ));
                }
            }
            measures.push(measure);
        }
        if measures.is_empty() {
            return Err(self.semantic(part, "part has no measures"));
        }
        let mut score = Score::new(
            key,
            meter,
            Rational::new(INGEST_UNIT.0, INGEST_UNIT.1),
            measures,
        );
        score.tempo = tempo;
        score.opening = opening;
        if let Some(title) = root
            .descendants()
            .find(|n| n.has_tag_name("work-title") || n.has_tag_name("movement-title"))
            .and_then(|n| n.text())
        {
            let title = title.trim();
            if !title.is_empty() {
                score.title = Some(title.to_string());
            }
        }
        Ok(score)
    }

    fn key(&self, node: Node) -> Result<KeySignature> {
        let fifths: i32 = self
            .int(node, "fifths")?
            .ok_or_else(|| self.unsupported(node, "non-traditional key signature"))?;
        let mode = match child_text(node, "mode").unwrap_or("major") {
            "major" | "none" | "" => Mode::Major,
            "minor" => Mode::Minor,
            "ionian" => Mode::Ionian,
            "dorian" => Mode::Dorian,
            "phrygian" => Mode::Phrygian,
            "lydian" => Mode::Lydian,
            "mixolydian" => Mode::Mixolydian,
            "aeolian" => Mode::Aeolian,
            "locrian" => Mode::Locrian,
            other => return Err(self.unsupported(node, &format!("key mode {other:?}"))),
        };
        KeySignature::from_fifths(fifths, mode).map_err(|e| self.semantic(node, e.to_string()))
    }

    fn time(&self, node: Node) -> Result<Option<Meter>> {
        if child(node, "senza-misura").is_some() {
            return Ok(None);
        }
        let beats: u32 = self
            .int(node, "beats")?
            .ok_or_else(|| self.unsupported(node, "composite time signature"))?;
        let beat_type: u32 = self
            .int(node, "beat-type")?
            .ok_or_else(|| self.semantic(node, "time without <beat-type>"))?;
        Meter::new(beats, beat_type)
            .map(Some)
            .map_err(|e| self.semantic(node, e.to_string()))
    }

    fn tempo(&self, node: Node) -> Result<Option<Tempo>> {
        match node.attribute("tempo") {
            None => Ok(None),
            Some(t) => {
                let bpm: f64 = t
                    .trim()
                    .parse()
                    .map_err(|_| self.semantic(node, format!("bad tempo {t:?}")))?;
                if !(bpm.is_finite() && bpm >= 1.0) {
                    return Err(self.semantic(node, format!("bad tempo {t:?}")));
                }
                Ok(Some(Tempo::quarter(bpm.round() as u32)))
            }
        }
    }

    fn note(&self, node: Node, divisions: i64) -> Result<Option<Note>> {
        if child(node, "chord").is_some() {
            return Err(self.unsupported(node, "chords"));
        }
        if child(node, "time-modification").is_some() {
            return Err(self.unsupported(node, "tuplets"));
        }
        if child(node, "grace").is_some() {
            return Err(self.unsupported(node, "grace notes"));
        }
        if child(node, "cue").is_some() {
            return Ok(None);
        }
        let ticks: i64 = self
            .int(node, "duration")?
            .ok_or_else(|| self.semantic(node, "note without <duration>"))?;
        let duration = Duration::new(Rational::new(ticks, divisions))
            .map_err(|_| self.semantic(node, "note duration must be positive"))?;
        let tie = node
            .children()
            .any(|c| c.has_tag_name("tie") && c.attribute("type") == Some("start"));
        if child(node, "rest").is_some() {
            return Ok(Some(Note::rest(duration)));
        }
        let pitch = child(node, "pitch")
            .ok_or_else(|| self.unsupported(node, "unpitched notes"))?;
        let step = child_text(pitch, "step")
            .and_then(|s| s.chars().next())
            .and_then(crate::abc::letter_index)
            .ok_or_else(|| self.semantic(pitch, "bad <step>"))?;
        let alter = match child_text(pitch, "alter") {
            None => 0,
            Some(a) => {
                let v: f64 = a
                    .parse()
                    .map_err(|_| self.semantic(pitch, format!("bad <alter> {a:?}")))?;
                if v.fract() != 0.0 {
                    return Err(self.unsupported(pitch, "microtonal alterations"));
                }
                v as i32
            }
        };
        let octave: i32 = self
            .int(pitch, "octave")?
            .ok_or_else(|| self.semantic(pitch, "pitch without <octave>"))?;
        let midi = 12 * (octave + 1) + LETTER_PC[step] + alter;
        let pitch = Pitch::new(midi)
            .map_err(|_| self.semantic(node, format!("pitch {midi} outside MIDI range")))?;
        Ok(Some(Note {
            pitch: Some(pitch),
            duration,
            tie,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::parse_abc;

    fn doc(attributes: &str, notes: &str) -> String {
        format!(
            r#"<?xml version="1.0" encoding="UTF-8"?>
<!DOCTYPE score-partwise PUBLIC "-//Recordare//DTD MusicXML 4.0 Partwise//EN" "http://www.musicxml.org/dtds/partwise.dtd">
<score-partwise version="4.0">
  <part-list><score-part id="P1"><part-name>Melody</part-name></score-part></part-list>
  <part id="P1">
    <measure number="1">
      <attributes>{attributes}</attributes>
      {notes}
    </measure>
  </part>
</score-partwise>"#
        )
    }

    fn c4(duration: u32) -> String {
        format!("<note><pitch><step>C</step><octave>4</octave></pitch><duration>{duration}</duration></note>")
    }

    const C_MAJOR_44: &str = "<divisions>1</divisions><key><fifths>0</fifths><mode>major</mode></key><time><beats>4</beats><beat-type>4</beat-type></time>";

    #[test]
    fn one_measure_matches_abc() {
        let notes = ["C", "D", "E", "F"]
            .iter()
            .map(|s| format!("<note><pitch><step>{s}</step><octave>4</octave></pitch><duration>1</duration></note>"))
            .collect::<String>();
        let xml = parse_musicxml(&doc(C_MAJOR_44, &notes)).unwrap();
        let abc = parse_abc("X:1\nL:1/4\nM:4/4\nK:C\nCDEF|").unwrap();
        assert_eq!(xml, abc);
    }

    #[test]
    fn flat_minor_key() {
        let attrs = "<divisions>2</divisions><key><fifths>-3</fifths><mode>minor</mode></key>";
        let s = parse_musicxml(&doc(attrs, &c4(2))).unwrap();
        assert_eq!(s.key.pitch_class(), 0);
        assert_eq!(s.key.mode, Mode::Minor);
        assert_eq!(s.key.label(), "C");
        assert_eq!(s.meter, None);
    }

    #[test]
    fn durations_are_exact() {
        let notes = format!("{}{}", c4(1), c4(2));
        let attrs = "<divisions>3</divisions>";
        let s = parse_musicxml(&doc(attrs, &notes)).unwrap();
        let d: Vec<Rational> = s.notes().map(|n| n.duration.value()).collect();
        assert_eq!(d, [Rational::new(1, 3), Rational::new(2, 3)]);
    }

    #[test]
    fn rejects_two_parts() {
        let xml = r#"<score-partwise><part-list><score-part id="P1"/><score-part id="P2"/></part-list>
            <part id="P1"><measure number="1"><attributes><divisions>1</divisions></attributes>
            <note><rest/><duration>1</duration></note></measure></part>
            <part id="P2"><measure number="1"><attributes><divisions>1</divisions></attributes>
            <note><rest/><duration>1</duration></note></measure></part></score-partwise>"#;
        assert!(matches!(parse_musicxml(xml), Err(Error::UnsupportedFeature(_))));
    }

    #[test]
    fn rejects_chords_and_tuplets() {
        let chord = format!("{}<note><chord/><pitch><step>E</step><octave>4</octave></pitch><duration>1</duration></note>", c4(1));
        assert!(matches!(
            parse_musicxml(&doc(C_MAJOR_44, &chord)),
            Err(Error::UnsupportedFeature(_))
        ));
        let tuplet = "<note><pitch><step>C</step><octave>4</octave></pitch><duration>1</duration><time-modification><actual-notes>3</actual-notes><normal-notes>2</normal-notes></time-modification></note>";
        assert!(matches!(
            parse_musicxml(&doc(C_MAJOR_44, tuplet)),
            Err(Error::UnsupportedFeature(_))
        ));
    }

    #[test]
    fn missing_divisions_and_malformed() {
        assert!(matches!(
            parse_musicxml(&doc("", &c4(1))),
            Err(Error::Semantic { .. })
        ));
        assert!(matches!(
            parse_musicxml("<score-partwise><part>"),
            Err(Error::Syntax { .. })
        ));
    }

    #[test]
    fn tempo_and_final_barline() {
        let notes = format!(
            "<direction><sound tempo=\"96\"/></direction>{}<barline location=\"right\"><bar-style>light-heavy</bar-style></barline>",
            c4(4)
        );
        let s = parse_musicxml(&doc(C_MAJOR_44, &notes)).unwrap();
        assert_eq!(s.tempo, Some(Tempo::quarter(96)));
        assert!(s.final_marker());
        let no_tempo = parse_musicxml(&doc(C_MAJOR_44, &c4(4))).unwrap();
        assert_eq!(no_tempo.tempo, None);
    }

    #[test]
    fn mxl_container() {
        use std::io::Write;
        let xml = doc(C_MAJOR_44, &c4(4));
        let mut buf = Cursor::new(Vec::new());
        {
            let mut zip = zip::ZipWriter::new(&mut buf);
            let opts = zip::write::SimpleFileOptions::default();
            zip.start_file("META-INF/container.xml", opts).unwrap();
            zip.write_all(br#"<container><rootfiles><rootfile full-path="score.xml"/></rootfiles></container>"#).unwrap();
            zip.start_file("score.xml", opts).unwrap();
            zip.write_all(xml.as_bytes()).unwrap();
            zip.finish().unwrap();
        }
        let s = parse_mxl(buf.get_ref()).unwrap();
        assert_eq!(s, parse_musicxml(&xml).unwrap());
    }
}
