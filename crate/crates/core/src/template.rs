//! Per-quadrant feature template (tempo, octave, volume, plus the mode and
//! pitch-spread bits carried in the generation label) with ablation switches.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abc::{shift_octaves, Score, Tempo};
use crate::error::{Error, Result};
use crate::generator::{condition_of, derive_seed, generate_from_prefix, CharLm, Generation, SamplingOptions};
use crate::labeling::QuadrantLabel;
use crate::render::{PerformanceScore, BASE_VELOCITY};

/// Consecutive unparseable generations tolerated by [`generate_with_emotion`].
pub const MAX_RETRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateSpec {
    /// Inclusive BPM bounds.
    pub tempo_range: (u32, u32),
    pub octave_shift: i32,
    pub volume_db: f64,
    /// Mode class requested from the generator.
    pub major: bool,
    /// Pitch-spread class requested from the generator.
    pub high_pitch_sd: bool,
}

impl TemplateSpec {
    pub fn for_label(label: QuadrantLabel) -> TemplateSpec {
        let (tempo_range, octave_shift, volume_db) = match label {
            QuadrantLabel::Q1 => ((160, 184), 0, 5.0),
            QuadrantLabel::Q2 => ((184, 228), -2, 10.0),
            QuadrantLabel::Q3 => ((40, 69), -1, 0.0),
            QuadrantLabel::Q4 => ((40, 69), 0, 0.0),
        };
        TemplateSpec {
            tempo_range,
            octave_shift,
            volume_db,
            major: label.valence_high(),
            high_pitch_sd: label.arousal_high(),
        }
    }

    pub fn velocity(&self) -> u8 {
        velocity_for_gain(BASE_VELOCITY, self.volume_db)
    }
}

/// `base` scaled by a dB gain as an amplitude ratio, clamped to the MIDI range.
pub fn velocity_for_gain(base: u8, db: f64) -> u8 {
    (base as f64 * 10f64.powf(db / 20.0)).round().clamp(1.0, 127.0) as u8
}

/// Which template features are controlled; a cleared flag ablates that feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AblationMask {
    pub tempo: bool,
    pub pitch_sd: bool,
    pub mode: bool,
    pub octave: bool,
    pub volume: bool,
}

impl AblationMask {
    pub const FULL: AblationMask = AblationMask {
        tempo: true,
        pitch_sd: true,
        mode: true,
        octave: true,
        volume: true,
    };

    pub const FEATURES: [&'static str; 5] = ["tempo", "pitch_sd", "mode", "octave", "volume"];

    /// Full control with the named features switched off.
    pub fn ablating<S: AsRef<str>>(features: &[S]) -> Result<AblationMask> {
        let mut mask = AblationMask::FULL;
        for f in features {
            match f.as_ref().trim() {
                "tempo" => mask.tempo = false,
                "pitch_sd" | "pitchsd" => mask.pitch_sd = false,
                "mode" => mask.mode = false,
                "octave" => mask.octave = false,
                "volume" => mask.volume = false,
                "" => {}
                other => return Err(Error::InvalidArgument(format!("unknown template feature {other:?}"))),
            }
        }
        Ok(mask)
    }

    pub fn ablated(&self) -> Vec<&'static str> {
        let on = [self.tempo, self.pitch_sd, self.mode, self.octave, self.volume];
        Self::FEATURES.iter().zip(on).filter(|(_, on)| !on).map(|(f, _)| *f).collect()
    }
}

impl Default for AblationMask {
    fn default() -> AblationMask {
        AblationMask::FULL
    }
}

impl FromStr for AblationMask {
    type Err = Error;

    /// Comma-separated features to ablate; empty means full control.
    fn from_str(s: &str) -> Result<AblationMask> {
        AblationMask::ablating(&s.split(',').collect::<Vec<_>>())
    }
}

impl fmt::Display for AblationMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.ablated().join(","))
    }
}

/// Result of applying the template, with the values actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub performance: PerformanceScore,
    /// `None` when tempo control is off and the score's own tempo is kept.
    pub tempo_bpm: Option<u32>,
    pub requested_shift: i32,
    /// May be smaller in magnitude than requested when pitches would leave the MIDI range.
    pub applied_shift: i32,
    pub velocity: u8,
}

impl Applied {
    pub fn shift_fell_back(&self) -> bool {
        self.applied_shift != self.requested_shift
    }
}

pub fn apply_template(score: &Score, label: QuadrantLabel, mask: &AblationMask, seed: u64) -> Applied {
    let spec = TemplateSpec::for_label(label);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // drawn even when ablated so the stream does not depend on the mask
    let drawn = rng.gen_range(spec.tempo_range.0..=spec.tempo_range.1);

    let requested_shift = if mask.octave { spec.octave_shift } else { 0 };
    let shifted = shift_octaves(score, requested_shift);
    let mut out = shifted.score;
    let tempo_bpm = mask.tempo.then_some(drawn);
    if let Some(bpm) = tempo_bpm {
        out.tempo = Some(Tempo::quarter(bpm));
    }
    let velocity = if mask.volume { spec.velocity() } else { BASE_VELOCITY };
    Applied {
        performance: PerformanceScore::new(out, velocity),
        tempo_bpm,
        requested_shift,
        applied_shift: shifted.applied,
        velocity,
    }
}

/// [`apply_template`] with every feature controlled.
pub fn apply_full_template(score: &Score, label: QuadrantLabel, seed: u64) -> Applied {
    apply_template(score, label, &AblationMask::FULL, seed)
}

/// Label sent to the generator: the target's mode and pitch-spread bits, each
/// replaced by a coin flip when that feature is ablated.
pub fn conditioning_label<R: Rng>(label: QuadrantLabel, mask: &AblationMask, rng: &mut R) -> QuadrantLabel {
    let spec = TemplateSpec::for_label(label);
    let (coin_mode, coin_sd): (bool, bool) = (rng.gen(), rng.gen());
    QuadrantLabel::from_flags(
        if mask.mode { spec.major } else { coin_mode },
        if mask.pitch_sd { spec.high_pitch_sd } else { coin_sd },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionPiece {
    pub label: QuadrantLabel,
    pub conditioning: QuadrantLabel,
    pub prefix: String,
    pub text: String,
    /// Generations drawn, including the successful one.
    pub attempts: usize,
    /// The generated melody before the template.
    pub melody: Score,
    pub applied: Applied,
}

/// A training prefix carrying `conditioning`; when the model never saw that
/// label, a training prefix with its label token replaced.
pub fn choose_prompt(model: &CharLm, conditioning: QuadrantLabel, seed: u64) -> Result<String> {
    let label = conditioning.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let own: Vec<&str> = model.prompts_for(&label).collect();
    if !own.is_empty() {
        return Ok(own[rng.gen_range(0..own.len())].to_string());
    }
    let any: Vec<&str> = model.prompts().collect();
    if any.is_empty() {
        return Err(Error::InvalidArgument("model has no training prompts".into()));
    }
    let p = any[rng.gen_range(0..any.len())];
    let code = p.trim_start()[condition_of(p).len()..].trim_start();
    Ok(format!("{label} {code}"))
}

/// Generates a melody for `label` and applies the template. `opts.seed` is the
/// base seed; conditioning, prompt choice, sampling and tempo use independent
/// streams derived from it.
pub fn generate_with_emotion(
    model: &CharLm,
    label: QuadrantLabel,
    mask: &AblationMask,
    opts: &SamplingOptions,
) -> Result<EmotionPiece> {
    let base = opts.seed;
    let conditioning = conditioning_label(label, mask, &mut ChaCha8Rng::seed_from_u64(derive_seed(base, 0)));
    let prefix = choose_prompt(model, conditioning, derive_seed(base, 1))?;
    let sample_base = derive_seed(base, 2);
    for attempt in 0..MAX_RETRIES {
        let o = SamplingOptions {
            seed: derive_seed(sample_base, attempt as u64),
            ..*opts
        };
        if let Generation::Parsed { score, text } = generate_from_prefix(model, &prefix, &o) {
            let applied = apply_template(&score, label, mask, derive_seed(base, 3));
            return Ok(EmotionPiece {
                label,
                conditioning,
                prefix,
                text,
                attempts: attempt + 1,
                melody: score,
                applied,
            });
        }
    }
    Err(Error::ExhaustedRetries(MAX_RETRIES))
}
