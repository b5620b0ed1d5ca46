//! Bar-patch character language model: tokenization, count-based training,
//! cross-entropy, sampling and the parse-rate metric.

mod clock;
mod lm;
mod sample;
mod tokenize;

pub use clock::{clock_values, BarClock};
pub use lm::{cross_entropy, train, CharLm, DEFAULT_ALPHA, DEFAULT_ORDER, MAX_ORDER};
pub use sample::{
    control_prefix, derive_seed, generate, generate_from_prefix, parse_rate, Generation,
    SamplingOptions, DEFAULT_MAX_CHARS, DEFAULT_TEMPERATURE, GREEDY_TEMPERATURE,
};
pub use tokenize::{condition_of, detokenize, model_header, split_patches, to_abc, tokenize, BarPatchSequence};
