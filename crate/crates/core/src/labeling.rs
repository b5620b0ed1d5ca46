//! Russell-quadrant labels, proxy auto-labeling, control codes and dataset records.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abc::{
    extract_melody, fifteen_key_fan_out, parse_abc, segment, serialize_abc, serialize_body, Barline,
    Score,
};
use crate::error::{Error, Result};
use crate::features::pitch_sd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuadrantLabel {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl QuadrantLabel {
    pub const ALL: [QuadrantLabel; 4] = [Self::Q1, Self::Q2, Self::Q3, Self::Q4];

    pub fn from_flags(valence_high: bool, arousal_high: bool) -> QuadrantLabel {
        match (valence_high, arousal_high) {
            (true, true) => Self::Q1,
            (false, true) => Self::Q2,
            (false, false) => Self::Q3,
            (true, false) => Self::Q4,
        }
    }

    /// Zero-based quadrant index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn valence_high(self) -> bool {
        matches!(self, Self::Q1 | Self::Q4)
    }

    pub fn arousal_high(self) -> bool {
        matches!(self, Self::Q1 | Self::Q2)
    }
}

impl fmt::Display for QuadrantLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.index() + 1)
    }
}

impl FromStr for QuadrantLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<QuadrantLabel> {
        match s.trim() {
            "Q1" => Ok(Self::Q1),
            "Q2" => Ok(Self::Q2),
            "Q3" => Ok(Self::Q3),
            "Q4" => Ok(Self::Q4),
            other => Err(Error::InvalidArgument(format!("unknown quadrant {other:?}"))),
        }
    }
}

/// Zero counts as high on both axes.
pub fn map_quadrant(valence: f64, arousal: f64) -> QuadrantLabel {
    QuadrantLabel::from_flags(valence >= 0.0, arousal >= 0.0)
}

/// Major mode stands in for high valence, wide pitch spread for high arousal.
pub fn rough_label(score: &Score, pitch_sd_threshold: f64) -> Result<QuadrantLabel> {
    let melody = extract_melody(score)?;
    Ok(QuadrantLabel::from_flags(
        score.key.is_major_class(),
        pitch_sd(&melody) >= pitch_sd_threshold,
    ))
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Median pitch spread of the corpus. Scores without sounded notes are ignored.
pub fn compute_threshold(corpus: &[Score]) -> Result<f64> {
    let values: Vec<f64> = corpus
        .iter()
        .filter_map(|s| extract_melody(s).ok())
        .map(|m| pitch_sd(&m))
        .collect();
    median(&values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlCode {
    pub s: usize,
    pub b: usize,
    pub e: u8,
    pub d: usize,
}

impl fmt::Display for ControlCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S:{} B:{} E:{} D:{}", self.s, self.b, self.e, self.d)
    }
}

/// Measures of each section, split after every section-ending barline.
pub fn sections(score: &Score) -> Vec<&[crate::abc::Measure]> {
    let mut out = Vec::new();
    let mut start = 0;
    for end in score.section_boundaries() {
        out.push(&score.measures[start..=end]);
        start = end + 1;
    }
    if start < score.measures.len() {
        out.push(&score.measures[start..]);
    }
    out
}

fn section_text(score: &Score, measures: &[crate::abc::Measure]) -> String {
    let mut part = score.clone();
    part.opening = None;
    part.measures = measures.to_vec();
    for m in &mut part.measures {
        m.bar = Barline::Single;
    }
    serialize_body(&part).chars().filter(|&c| c != '|').collect()
}

pub fn control_code(score: &Score) -> ControlCode {
    let secs = sections(score);
    let e = if secs.len() < 2 {
        10
    } else {
        let texts: Vec<String> = secs.iter().map(|m| section_text(score, m)).collect();
        let sims: Vec<f64> = texts
            .windows(2)
            .map(|w| strsim::normalized_levenshtein(&w[0], &w[1]))
            .collect();
        let mean = sims.iter().sum::<f64>() / sims.len() as f64;
        ((mean * 10.0 + 1e-9).floor() as u8).min(10)
    };
    ControlCode {
        s: secs.len().max(1),
        b: score.measures.len(),
        e,
        d: secs.first().map_or(0, |m| m.len()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub control_code: String,
    pub abc: String,
    pub label: QuadrantLabel,
}

impl DatasetRecord {
    pub fn score(&self) -> Result<Score> {
        parse_abc(&self.abc)
    }
}

pub fn make_record(score: &Score, label: QuadrantLabel) -> DatasetRecord {
    DatasetRecord {
        control_code: format!("{label} {}", control_code(score)),
        abc: serialize_abc(score),
        label,
    }
}

pub fn write_jsonl<W: Write>(records: &[DatasetRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<DatasetRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok(records)
}

/// Segments every score, takes the median pitch spread of the segments as the
/// arousal threshold and labels each segment. Segments without notes are dropped.
pub fn label_corpus(scores: &[Score]) -> Result<(Vec<DatasetRecord>, f64)> {
    let segments: Vec<Score> = scores.iter().flat_map(segment).collect();
    let threshold = compute_threshold(&segments)?;
    let records = segments
        .iter()
        .filter_map(|s| rough_label(s, threshold).ok().map(|q| make_record(s, q)))
        .collect();
    Ok((records, threshold))
}

/// Output of [`balance`]: the augmented records plus one warning per skipped key.
#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub records: Vec<DatasetRecord>,
    pub warnings: Vec<String>,
}

/// Replaces every Q2 and Q3 record by its fifteen-key transpositions.
pub fn balance(records: &[DatasetRecord]) -> Result<Balanced> {
    let mut out = Vec::with_capacity(records.len());
    let mut warnings = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        if !matches!(rec.label, QuadrantLabel::Q2 | QuadrantLabel::Q3) {
            out.push(rec.clone());
            continue;
        }
        let score = rec.score()?;
        for (key, result) in fifteen_key_fan_out(&score) {
            match result {
                Ok(t) => out.push(make_record(&t, rec.label)),
                Err(e @ Error::Range(_)) => {
                    warnings.push(format!("record {i}: skipped key {key}: {e}"));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Balanced { records: out, warnings })
}

/// One test record for every this many training records.
pub const SPLIT_RATIO: usize = 10;

/// Seeded split at 10:1 within each quadrant.
pub fn split(records: &[DatasetRecord], seed: u64) -> (Vec<DatasetRecord>, Vec<DatasetRecord>) {
    split_with_ratio(records, SPLIT_RATIO, seed).expect("default ratio is valid")
}

/// Seeded `ratio`:1 train/test split within each quadrant.
pub fn split_with_ratio(
    records: &[DatasetRecord],
    ratio: usize,
    seed: u64,
) -> Result<(Vec<DatasetRecord>, Vec<DatasetRecord>)> {
    if ratio < 2 {
        return Err(Error::InvalidArgument(format!("split ratio must exceed 1, got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for q in QuadrantLabel::ALL {
        let mut group: Vec<&DatasetRecord> = records.iter().filter(|r| r.label == q).collect();
        group.shuffle(&mut rng);
        let n_test = (group.len() as f64 / (ratio + 1) as f64).round() as usize;
        test.extend(group[..n_test].iter().map(|r| (*r).clone()));
        train.extend(group[n_test..].iter().map(|r| (*r).clone()));
    }
    Ok((train, test))
}

pub fn quadrant_counts(records: &[DatasetRecord]) -> BTreeMap<QuadrantLabel, usize> {
    let mut counts: BTreeMap<QuadrantLabel, usize> = QuadrantLabel::ALL.iter().map(|&q| (q, 0)).collect();
    for r in records {
        *counts.entry(r.label).or_default() += 1;
    }
    counts
}

/// Provenance written next to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub pitch_sd_threshold: f64,
    pub split_seed: Option<u64>,
    /// Source path to SHA-256 hex digest.
    pub sources: BTreeMap<String, String>,
    pub counts: BTreeMap<QuadrantLabel, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tune(body: &str, key: &str) -> Score {
        parse_abc(&format!("X:1\nL:1/4\nM:4/4\nK:{key}\n{body}")).unwrap()
    }

    #[test]
    fn quadrant_grid() {
        let grid = [-1.0, 0.0, 1.0];
        for v in grid {
            for a in grid {
                let expected = match (v < 0.0, a < 0.0) {
                    (false, false) => "Q1",
                    (true, false) => "Q2",
                    (true, true) => "Q3",
                    (false, true) => "Q4",
                };
                assert_eq!(map_quadrant(v, a).to_string(), expected);
            }
        }
        let q: QuadrantLabel = "Q3".parse().unwrap();
        assert!(!q.valence_high() && !q.arousal_high());
        assert!("Q5".parse::<QuadrantLabel>().is_err());
    }

    #[test]
    fn rough_labels() {
        let wide = tune("CGce|gc'gc|", "C");
        let narrow = tune("ABAB|ABAB|", "Am");
        assert_eq!(rough_label(&wide, 2.0).unwrap(), QuadrantLabel::Q1);
        assert_eq!(rough_label(&narrow, 2.0).unwrap(), QuadrantLabel::Q3);
        assert_eq!(rough_label(&tune("C4|C4|", "C"), 0.5).unwrap(), QuadrantLabel::Q4);
        assert!(matches!(rough_label(&tune("z4|", "C"), 1.0), Err(Error::EmptyMelody)));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[9.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert!(matches!(median(&[]), Err(Error::EmptyCorpus)));
        assert!(matches!(compute_threshold(&[]), Err(Error::EmptyCorpus)));
        let c = [tune("CDCD|", "C"), tune("CCCC|", "C"), tune("CcCc|", "C")];
        assert_eq!(compute_threshold(&c).unwrap(), 1.0);
    }

    #[test]
    fn control_codes() {
        let eight = "CDEF|GABc|CDEF|GABc|CDEF|GABc|CDEF|GABc|";
        let one = tune(eight, "C");
        assert_eq!(control_code(&one), ControlCode { s: 1, b: 8, e: 10, d: 8 });
        let two = tune(&format!("{}||{}|]", &eight[..eight.len() - 1], &eight[..eight.len() - 1]), "C");
        assert_eq!(control_code(&two), ControlCode { s: 2, b: 16, e: 10, d: 8 });
        let apart = tune("CDEF||GABc|]", "C");
        assert_eq!(control_code(&apart), ControlCode { s: 2, b: 2, e: 0, d: 1 });
        let repeat = tune("|:CDEF:|GABc|cBAG|]", "C");
        let cc = control_code(&repeat);
        assert_eq!((cc.s, cc.b, cc.d), (2, 3, 1));
    }

    #[test]
    fn record_format_and_jsonl() {
        let body: String = (0..20).map(|_| "CDEF|").collect();
        let s = tune(&body, "C");
        let r = make_record(&s, QuadrantLabel::Q1);
        assert_eq!(r.control_code, "Q1 S:1 B:20 E:10 D:20");
        assert_eq!(r.score().unwrap(), parse_abc(&serialize_abc(&s)).unwrap());
        let mut buf = Vec::new();
        write_jsonl(std::slice::from_ref(&r), &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains("\"label\":\"Q1\""));
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), vec![r]);
    }

    #[test]
    fn balancing_counts() {
        let rec = |q| make_record(&tune("CDEF|GABc|", "C"), q);
        let mut input = Vec::new();
        for (q, n) in [(QuadrantLabel::Q1, 5), (QuadrantLabel::Q2, 2), (QuadrantLabel::Q3, 3), (QuadrantLabel::Q4, 4)] {
            input.extend((0..n).map(|_| rec(q)));
        }
        let out = balance(&input).unwrap();
        assert!(out.warnings.is_empty());
        let counts = quadrant_counts(&out.records);
        assert_eq!(counts.values().copied().collect::<Vec<_>>(), [5, 30, 45, 4]);
        assert!(balance(&[]).unwrap().records.is_empty());
    }

    #[test]
    fn balancing_skips_out_of_range() {
        let high = make_record(&tune("g''''|", "C"), QuadrantLabel::Q2);
        let out = balance(&[high]).unwrap();
        assert!(!out.warnings.is_empty());
        assert_eq!(out.records.len() + out.warnings.len(), 15);
    }

    #[test]
    fn stratified_split() {
        let s = tune("CDEF|", "C");
        let records: Vec<DatasetRecord> = (0..110)
            .map(|i| make_record(&s, QuadrantLabel::ALL[i % 2]))
            .collect();
        let (train, test) = split(&records, 7);
        assert_eq!((train.len(), test.len()), (100, 10));
        assert_eq!(quadrant_counts(&test)[&QuadrantLabel::Q1], 5);
        assert_eq!(split(&records, 7), (train, test));
    }
}
