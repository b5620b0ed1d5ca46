use serde::{Deserialize, Serialize};

use crate::abc::{parse_abc, serialize_body, Score};
use crate::error::Result;
use crate::labeling::DatasetRecord;

/// A record split for the language model: conditioning prefix, the tune's
/// header lines, and one character patch per bar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BarPatchSequence {
    pub prefix: String,
    /// `L:`, `M:`, optional `Q:` and `K:` lines, each newline-terminated.
    pub header: String,
    pub patches: Vec<String>,
}

impl BarPatchSequence {
    /// Characters the model predicts, in order; the end token is implied.
    pub fn target_text(&self) -> String {
        let mut s = self.header.clone();
        s.extend(self.patches.iter().map(String::as_str));
        s
    }

    /// The label token leading the prefix, e.g. `Q2`.
    pub fn condition(&self) -> &str {
        condition_of(&self.prefix)
    }
}

pub fn condition_of(prefix: &str) -> &str {
    prefix.split_whitespace().next().unwrap_or("")
}

pub(crate) fn is_bar_char(c: char) -> bool {
    matches!(c, '|' | ':' | ']')
}

/// Splits a one-line body after each run of barline characters; a leading run
/// stays with the first patch.
pub fn split_patches(body: &str) -> Vec<String> {
    let mut patches = Vec::new();
    let mut current = String::new();
    let mut has_notes = false;
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if is_bar_char(c) {
            if has_notes && !chars.peek().is_some_and(|&n| is_bar_char(n)) {
                patches.push(std::mem::take(&mut current));
                has_notes = false;
            }
        } else {
            has_notes = true;
        }
    }
    if !current.is_empty() {
        patches.push(current);
    }
    patches
}

pub fn model_header(score: &Score) -> String {
    let mut h = format!("L:{}/{}\n", score.unit_note_length.numer(), score.unit_note_length.denom());
    match score.meter {
        Some(m) => h.push_str(&format!("M:{m}\n")),
        None => h.push_str("M:none\n"),
    }
    if let Some(t) = score.tempo {
        h.push_str(&format!("Q:{}/{}={}\n", t.beat.numer(), t.beat.denom(), t.bpm));
    }
    h.push_str(&format!("K:{}\n", score.key));
    h
}

pub fn tokenize(record: &DatasetRecord) -> Result<BarPatchSequence> {
    let score = parse_abc(&record.abc)?;
    Ok(BarPatchSequence {
        prefix: record.control_code.clone(),
        header: model_header(&score),
        patches: split_patches(&serialize_body(&score)),
    })
}

pub fn detokenize(seq: &BarPatchSequence) -> String {
    seq.patches.concat()
}

/// Full ABC text for a generated header and body.
pub fn to_abc(target_text: &str) -> String {
    format!("X:1\n{target_text}")
}
