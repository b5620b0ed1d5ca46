//! Reference implementations written independently of the library, plus corpus loading.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use quadmelody::abc::{parse_abc, split_tunes, Score};
use quadmelody::generator::{clock_values, BarPatchSequence};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Every tune text of the `.abc` files under `data/<name>`, in file order.
pub fn corpus_tunes(name: &str) -> Vec<String> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(data_dir().join(name))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "abc"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let bytes = std::fs::read(&p).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap_or_else(|_| bytes.iter().map(|&b| b as char).collect());
        out.extend(split_tunes(&text).into_iter().map(|(_, t)| t));
    }
    out
}

pub fn corpus_scores(names: &[&str]) -> Vec<Score> {
    names
        .iter()
        .flat_map(|n| corpus_tunes(n))
        .filter_map(|t| parse_abc(&t).ok())
        .collect()
}

/// Pitches and durations in sixteenth-of-a-quarter units.
pub type Ticked = Vec<(u8, u32)>;

/// Each note repeated once per tick, then the plain mean.
pub fn brute_avg_pitch(notes: &Ticked) -> f64 {
    let expanded: Vec<f64> = notes
        .iter()
        .flat_map(|&(p, d)| std::iter::repeat_n(p as f64, d as usize))
        .collect();
    expanded.iter().sum::<f64>() / expanded.len() as f64
}

pub fn brute_pitch_sd(notes: &Ticked) -> f64 {
    let expanded: Vec<f64> = notes
        .iter()
        .flat_map(|&(p, d)| std::iter::repeat_n(p as f64, d as usize))
        .collect();
    let mean = expanded.iter().sum::<f64>() / expanded.len() as f64;
    (expanded.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / expanded.len() as f64).sqrt()
}

/// `true` for ascending: step by step, the arriving note's ticks go to the
/// rising or falling pile; rising must strictly outweigh falling.
pub fn traced_direction(notes: &Ticked) -> bool {
    let mut rising: i64 = 0;
    let mut falling: i64 = 0;
    let mut i = 1;
    while i < notes.len() {
        let before = notes[i - 1].0 as i32;
        let now = notes[i].0 as i32;
        let ticks = notes[i].1 as i64;
        if now - before > 0 {
            rising += ticks;
        }
        if now - before < 0 {
            falling += ticks;
        }
        i += 1;
    }
    rising - falling > 0
}

/// Computational-formula correlation.
pub fn textbook_r(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Two-sided Student-t tail for even degrees of freedom, in closed form:
/// `1 − sinθ·Σ_{k<ν/2} c_k cos^{2k}θ` with `θ = atan(t/√ν)`, `c_0 = 1`,
/// `c_k = c_{k−1}(2k−1)/(2k)`.
pub fn even_df_two_sided_p(r: f64, n: usize) -> f64 {
    let nu = n - 2;
    assert!(nu.is_multiple_of(2), "closed form needs even degrees of freedom");
    let t = r.abs() * (nu as f64).sqrt() / (1.0 - r * r).sqrt();
    let theta = (t / (nu as f64).sqrt()).atan();
    let (s, c2) = (theta.sin(), theta.cos().powi(2));
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..nu / 2 {
        term *= c2 * (2 * k - 1) as f64 / (2 * k) as f64;
        sum += term;
    }
    1.0 - s * sum
}

/// Expected chunk sizes for a tune of `n` measures, spelled out case by case.
pub fn expected_segments(n: usize) -> Vec<usize> {
    if n <= 20 {
        return vec![n];
    }
    let (full, rest) = (n / 20, n % 20);
    let mut out = vec![20; full];
    if rest == 0 {
        out
    } else if rest <= 10 {
        *out.last_mut().unwrap() += rest;
        out
    } else {
        out.push(rest);
        out
    }
}

/// Quadrant number 1..=4 for signed valence and arousal, zero counting as high.
pub fn truth_quadrant(v: i32, a: i32) -> u8 {
    match (v >= 0, a >= 0) {
        (true, true) => 1,
        (false, true) => 2,
        (false, false) => 3,
        (true, false) => 4,
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum Sym {
    Start,
    Sep,
    End,
    Unknown,
    Char(char),
}

/// Condition part of a context: the full label while in the header, in the
/// body only whether a quadrant label has high arousal.
fn context_condition(label: &str, clock: u16, header: u16) -> String {
    if clock == header {
        return format!("full:{label}");
    }
    match label {
        "Q1" | "Q2" => "arousal:high".into(),
        "Q3" | "Q4" => "arousal:low".into(),
        other => format!("full:{other}"),
    }
}

/// One prediction: its context and the symbol that followed.
struct Event {
    condition: String,
    clock: u16,
    history: Vec<Sym>,
    next: Sym,
}

fn events(seq: &BarPatchSequence, order: usize, vocab: &[char], header: u16) -> Vec<Event> {
    let sym = |c: char| if vocab.contains(&c) { Sym::Char(c) } else { Sym::Unknown };
    let mut history: Vec<Sym> = vec![Sym::Start; order];
    history.extend(seq.prefix.chars().map(sym));
    history.push(Sym::Sep);
    let text = seq.target_text();
    let label = seq.prefix.split_whitespace().next().unwrap_or("");
    let clocks = clock_values(&text);
    let targets: Vec<Sym> = text.chars().map(sym).chain([Sym::End]).collect();
    let mut out = Vec::new();
    for (next, clock) in targets.into_iter().zip(clocks) {
        out.push(Event {
            condition: context_condition(label, clock, header),
            clock,
            history: history[history.len() - order..].to_vec(),
            next: next.clone(),
        });
        history.push(next);
    }
    out
}

/// Mean −ln p per target symbol, scanning the training events for every
/// evaluation context. `vocab_size` counts characters plus end and unknown.
pub fn brute_cross_entropy(
    train: &[BarPatchSequence],
    eval: &[BarPatchSequence],
    order: usize,
    alpha: f64,
) -> f64 {
    // an empty text is all header
    let header_sentinel = clock_values("")[0];
    let mut vocab: Vec<char> = train
        .iter()
        .flat_map(|s| s.prefix.chars().chain(s.target_text().chars()).collect::<Vec<_>>())
        .collect();
    vocab.sort_unstable();
    vocab.dedup();
    let v = (vocab.len() + 2) as f64;
    let seen: Vec<Event> = train.iter().flat_map(|s| events(s, order, &vocab, header_sentinel)).collect();
    let mut total = 0.0;
    let mut n = 0usize;
    let mut cache: HashMap<(String, u16, Vec<Sym>), HashMap<Sym, usize>> = HashMap::new();
    for s in eval {
        for e in events(s, order, &vocab, header_sentinel) {
            let counts = cache
                .entry((e.condition.clone(), e.clock, e.history.clone()))
                .or_insert_with(|| {
                    let mut m = HashMap::new();
                    for t in &seen {
                        if t.condition == e.condition && t.clock == e.clock && t.history == e.history {
                            *m.entry(t.next.clone()).or_insert(0) += 1;
                        }
                    }
                    m
                });
            let n_ctx: usize = counts.values().sum();
            let p = if n_ctx == 0 {
                1.0 / v
            } else {
                (*counts.get(&e.next).unwrap_or(&0) as f64 + alpha) / (n_ctx as f64 + alpha * v)
            };
            total -= p.ln();
            n += 1;
        }
    }
    total / n as f64
}
