use num_traits::ToPrimitive;

use super::PerformanceScore;
use crate::abc::Rational;

pub const TICKS_PER_QUARTER: u16 = 480;

fn ticks(quarters: Rational) -> u32 {
    (quarters * TICKS_PER_QUARTER as i64)
        .round()
        .to_u32()
        .expect("tick count fits in u32")
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = 0x80 | (value & 0x7f) as u8;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Format-0 SMF: one tempo event, note on/off pairs on channel 1, end of track.
pub fn to_midi(perf: &PerformanceScore) -> Vec<u8> {
    let mut track = Vec::new();
    let micros = perf
        .score
        .tempo
        .map(|t| t.micros_per_quarter())
        .unwrap_or((60_000_000.0 / perf.tempo_bpm()).round() as u32);
    write_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x51, 0x03]);
    track.extend_from_slice(&micros.to_be_bytes()[1..]);

    let velocity = perf.velocity.clamp(1, 127);
    let mut now = 0u32;
    for (pitch, onset, length) in perf.events() {
        let on = ticks(onset);
        let off = ticks(onset + length);
        write_vlq(&mut track, on - now);
        track.extend_from_slice(&[0x90, pitch.midi(), velocity]);
        write_vlq(&mut track, off - on);
        track.extend_from_slice(&[0x80, pitch.midi(), 0]);
        now = off;
    }
    let end = ticks(perf.score.total_duration());
    write_vlq(&mut track, end.saturating_sub(now));
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&TICKS_PER_QUARTER.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
