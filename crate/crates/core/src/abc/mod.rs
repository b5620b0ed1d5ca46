//! ABC notation: score model, strict parser, canonical serializer and score transforms.

mod ops;
mod parse;
mod serialize;
mod types;

pub use ops::{
    extract_melody, fifteen_key_fan_out, segment, segment_sizes, shift_octaves, transpose,
    Melody, MelodyNote, OctaveShift, SEGMENT_MEASURES, SEGMENT_MERGE_LIMIT,
};
pub use parse::{parse_abc, split_tunes};
pub use serialize::serialize_abc;
#[allow(unused_imports)]
pub(crate) use serialize::{serialize_body, write_header};
pub use types::*;
