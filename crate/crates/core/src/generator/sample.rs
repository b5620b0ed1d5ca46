use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::clock::BarClock;
use super::lm::{CharLm, END, UNK};
use super::tokenize::{condition_of, to_abc};
use crate::abc::{parse_abc, Score};
use crate::labeling::{ControlCode, QuadrantLabel};

pub const DEFAULT_MAX_CHARS: usize = 2048;
pub const DEFAULT_TEMPERATURE: f64 = 0.7;
/// Temperatures at or below this decode greedily.
pub const GREEDY_TEMPERATURE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions {
    pub temperature: f64,
    pub seed: u64,
    pub max_chars: usize,
    /// Reject characters after which the text can no longer parse.
    pub guarded: bool,
}

impl Default for SamplingOptions {
    fn default() -> SamplingOptions {
        SamplingOptions {
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
            max_chars: DEFAULT_MAX_CHARS,
            guarded: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generation {
    Parsed { score: Score, text: String },
    Failed { text: String, reason: String },
}

impl Generation {
    pub fn text(&self) -> &str {
        match self {
            Generation::Parsed { text, .. } | Generation::Failed { text, .. } => text,
        }
    }

    pub fn score(&self) -> Option<&Score> {
        match self {
            Generation::Parsed { score, .. } => Some(score),
            Generation::Failed { .. } => None,
        }
    }

    pub fn is_parsed(&self) -> bool {
        matches!(self, Generation::Parsed { .. })
    }
}

pub fn control_prefix(label: QuadrantLabel, code: &ControlCode) -> String {
    format!("{label} {code}")
}

/// Whether `text` (header lines followed by body) can still be completed into a valid tune.
fn viable(model: &CharLm, text: &str) -> bool {
    let Some(body_start) = header_end(text) else {
        return model.headers().any(|h| h.starts_with(text));
    };
    if !model.headers().any(|h| h == &text[..body_start]) {
        return false;
    }
    if matches!(&text[body_start..], "" | "|" | "||" | "|:" | "||:") {
        return true;
    }
    parse_abc(&to_abc(&complete_partial(text))).is_ok()
}

/// Appends the shortest continuation that makes a trailing partial token legal:
/// a 1/64-unit note after an accidental or broken-rhythm marker, a 1/64 length
/// after a bare note, `|` after a lone `:`.
fn complete_partial(text: &str) -> std::borrow::Cow<'_, str> {
    let body = text.trim_end_matches(['\'', ',']);
    match body.chars().last() {
        Some('^' | '_' | '=' | '>' | '<') => format!("{text}C/64").into(),
        Some('/') if !body[..body.len() - 1].ends_with(|c: char| c.is_ascii_digit()) => format!("{text}64").into(),
        Some('A'..='G' | 'a'..='g' | 'z') => format!("{text}/64").into(),
        Some(':') => format!("{text}|").into(),
        _ => text.into(),
    }
}

/// Byte offset just after the `K:` line, once it is complete.
fn header_end(text: &str) -> Option<usize> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if !line.ends_with('\n') {
            return None;
        }
        offset += line.len();
        if line.starts_with("K:") {
            return Some(offset);
        }
    }
    None
}

fn finish(text: String, reason: Option<String>) -> Generation {
    if let Some(reason) = reason {
        return Generation::Failed { text, reason };
    }
    match parse_abc(&to_abc(&text)) {
        Ok(score) => Generation::Parsed { score, text },
        Err(e) => Generation::Failed {
            reason: e.to_string(),
            text,
        },
    }
}

/// Autoregressive sampling after `prefix` until the end symbol or `max_chars`.
pub fn generate_from_prefix(model: &CharLm, prefix: &str, opts: &SamplingOptions) -> Generation {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cond = model.condition_id(condition_of(prefix));
    let mut history = model.start_history(prefix);
    let mut clock = BarClock::new();
    let mut text = String::new();
    let symbols: Vec<u16> = model.symbols().collect();
    let greedy = opts.temperature <= GREEDY_TEMPERATURE;
    let inv_t = if greedy { 1.0 } else { 1.0 / opts.temperature };

    for _ in 0..opts.max_chars {
        let table = model.table(model.key(cond, clock.value(), &history));
        let mut weights: Vec<f64> = symbols
            .iter()
            .map(|&id| {
                let p = model.prob_in(table, id);
                if greedy { p } else { p.powf(inv_t) }
            })
            .collect();
        loop {
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return finish(text, Some("no admissible continuation".into()));
            }
            let i = if greedy {
                (0..weights.len())
                    .max_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(b.cmp(&a)))
                    .unwrap()
            } else {
                let mut u = rng.gen::<f64>() * total;
                let mut pick = weights.len() - 1;
                for (j, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = j;
                        break;
                    }
                    u -= w;
                }
                while weights[pick] == 0.0 {
                    pick -= 1;
                }
                pick
            };
            let id = symbols[i];
            if id == END {
                if !opts.guarded || (header_end(&text).is_some() && parse_abc(&to_abc(&text)).is_ok()) {
                    return finish(text, None);
                }
            } else if id == UNK {
                if !opts.guarded {
                    return finish(text, Some("emitted a non-character symbol".into()));
                }
            } else {
                let c = model.char_of(id).expect("character id");
                if !opts.guarded || {
                    text.push(c);
                    let ok = viable(model, &text);
                    text.pop();
                    ok
                } {
                    text.push(c);
                    history.push(id);
                    clock.push(c);
                    break;
                }
            }
            weights[i] = 0.0;
        }
    }
    finish(text, Some(format!("no end symbol within {} characters", opts.max_chars)))
}

pub fn generate(model: &CharLm, label: QuadrantLabel, code: &ControlCode, opts: &SamplingOptions) -> Generation {
    generate_from_prefix(model, &control_prefix(label, code), opts)
}

/// Seed of the `index`-th sample drawn under a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 step
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fraction of samples that parse; `samples_per_prompt` draws for each prompt.
pub fn parse_rate(model: &CharLm, prompts: &[String], samples_per_prompt: usize, opts: &SamplingOptions) -> f64 {
    let total = prompts.len() * samples_per_prompt;
    if total == 0 {
        return 0.0;
    }
    let mut ok = 0;
    for (i, prompt) in prompts.iter().enumerate() {
        for j in 0..samples_per_prompt {
            let o = SamplingOptions {
                seed: derive_seed(opts.seed, (i * samples_per_prompt + j) as u64),
                ..*opts
            };
            if generate_from_prefix(model, prompt, &o).is_parsed() {
                ok += 1;
            }
        }
    }
    ok as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::tokenize::BarPatchSequence;

    fn memorizer() -> CharLm {
        let s = BarPatchSequence {
            prefix: "Q1 S:1 B:2 E:10 D:2".into(),
            header: "L:1/4\nM:4/4\nK:G\n".into(),
            patches: vec!["GABc|".into(), "d4|]".into()],
        };
        CharLm::train_sequences(&[s], 6, 0.01).unwrap()
    }

    #[test]
    fn greedy_reproduces_training_tune() {
        let m = memorizer();
        let opts = SamplingOptions { temperature: 0.0, ..Default::default() };
        let g = generate_from_prefix(&m, "Q1 S:1 B:2 E:10 D:2", &opts);
        assert_eq!(g.text(), "L:1/4\nM:4/4\nK:G\nGABc|d4|]");
        assert_eq!(g.score().unwrap().measures.len(), 2);
        let prompts = vec!["Q1 S:1 B:2 E:10 D:2".to_string()];
        assert_eq!(parse_rate(&m, &prompts, 5, &opts), 1.0);
    }

    #[test]
    fn seeded_determinism() {
        let m = memorizer();
        let opts = SamplingOptions { temperature: 1.5, seed: 42, max_chars: 64, guarded: false };
        let a = generate_from_prefix(&m, "Q1 S:1", &opts);
        assert_eq!(a, generate_from_prefix(&m, "Q1 S:1", &opts));
    }

    #[test]
    fn guard_keeps_text_viable() {
        let m = memorizer();
        let uniform = CharLm::untrained(6, 1.0, &"GABcd4|]LM:/K\n1".chars().collect::<Vec<_>>(), &[]).unwrap();
        let opts = SamplingOptions { temperature: 1.0, seed: 3, max_chars: 200, guarded: false };
        assert!(!generate_from_prefix(&uniform, "Q1", &opts).is_parsed());
        // guard draws headers from the memorizer's training headers
        let g = generate_from_prefix(&m, "Q4", &SamplingOptions { guarded: true, temperature: 2.0, ..opts });
        assert!(g.text().starts_with("L:1/4\nM:4/4\nK:G\n"), "{g:?}");
        if let Generation::Failed { reason, .. } = &g {
            assert!(reason.contains("no end symbol"), "{reason}");
        }
    }

    #[test]
    fn viability_rules() {
        let m = memorizer();
        assert!(viable(&m, "L:1/"));
        assert!(!viable(&m, "L:1/8"));
        assert!(viable(&m, "L:1/4\nM:4/4\nK:G\nGA^"));
        assert!(!viable(&m, "L:1/4\nM:4/4\nK:G\nGABc^"));
        assert!(!viable(&m, "L:1/4\nM:4/4\nK:G\nGAB2>"));
        assert!(viable(&m, "L:1/4\nM:4/4\nK:G\nGA-"));
        assert!(!viable(&m, "L:1/4\nM:4/4\nK:G\nGA=-"));
        assert!(!viable(&m, "L:1/4\nM:4/4\nK:G\nGABcd"));
        assert!(viable(&m, "L:1/4\nM:4/4\nK:G\nGAc"));
        assert!(viable(&m, "L:1/4\nM:4/4\nK:G\nGAc/"));
        assert!(viable(&m, "L:1/4\nM:4/4\nK:G\nGAB2"));
        assert!(!viable(&m, "L:1/4\nM:4/4\nK:G\nGAB2c"));
        assert!(viable(&m, "L:1/4\nM:4/4\nK:G\nGABc|d"));
        assert!(!viable(&m, "L:1/4\nM:4/4\nK:G\n|]]"));
        assert!(!viable(&m, "L:1/4\nM:4/4\nK:G\nG^_"));
        assert!(!viable(&m, "L:1/4\nM:4/4\nK:G\nG- -"));
        assert!(viable(&m, "L:1/4\nM:4/4\nK:G\nG>>"));
        assert!(viable(&m, "L:1/4\nM:4/4\nK:G\nG2:"));
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
