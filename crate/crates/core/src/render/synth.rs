use std::io::{Seek, Write};

use num_traits::ToPrimitive;

use super::PerformanceScore;
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 44_100;
/// Linear attack and release length in seconds.
const RAMP_SECONDS: f64 = 0.010;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

/// Renders each note as a sine at its equal-temperament frequency with amplitude
/// `velocity / 127`. The mix is peak-normalized only when it would clip.
pub fn synthesize(perf: &PerformanceScore) -> AudioBuffer {
    let sr = SAMPLE_RATE as f64;
    let seconds_per_quarter = 60.0 / perf.tempo_bpm();
    let to_sample = |q: crate::abc::Rational| -> usize {
        (q.to_f64().unwrap() * seconds_per_quarter * sr).round() as usize
    };
    let total = to_sample(perf.score.total_duration());
    let mut samples = vec![0.0; total];
    let amplitude = perf.velocity.min(127) as f64 / 127.0;
    let ramp = (RAMP_SECONDS * sr).round() as usize;

    for (pitch, onset, length) in perf.events() {
        let start = to_sample(onset);
        let end = to_sample(onset + length).min(total);
        if end <= start {
            continue;
        }
        let n = end - start;
        let ramp = ramp.min(n / 2).max(1);
        let w = 2.0 * std::f64::consts::PI * pitch.frequency() / sr;
        // phasor rotation instead of a sin() call per sample
        let (step_sin, step_cos) = w.sin_cos();
        let (mut s, mut c) = (0.0f64, 1.0f64);
        for (i, out) in samples[start..end].iter_mut().enumerate() {
            let env = if i < ramp {
                i as f64 / ramp as f64
            } else if n - i <= ramp {
                (n - i - 1) as f64 / ramp as f64
            } else {
                1.0
            };
            *out += amplitude * env * s;
            let next_s = s * step_cos + c * step_sin;
            c = c * step_cos - s * step_sin;
            s = next_s;
            if i % 4096 == 4095 {
                // renormalize the phasor against drift
                let norm = (s * s + c * c).sqrt();
                s /= norm;
                c /= norm;
            }
        }
    }

    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 1.0 {
        samples.iter_mut().for_each(|x| *x /= peak);
    }
    AudioBuffer {
        sample_rate: SAMPLE_RATE,
        samples,
    }
}

pub fn rms(audio: &AudioBuffer) -> Result<f64> {
    if audio.samples.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let sum: f64 = audio.samples.iter().map(|x| x * x).sum();
    Ok((sum / audio.samples.len() as f64).sqrt())
}

/// Writes 16-bit PCM mono WAV.
pub fn write_wav<W: Write + Seek>(audio: &AudioBuffer, out: W) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::new(out, spec).map_err(to_io)?;
    for &x in &audio.samples {
        let v = (x.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
        writer.write_sample(v).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::{parse_abc, Tempo};

    fn perf(body: &str, velocity: u8) -> PerformanceScore {
        let mut s = parse_abc(&format!("X:1\nL:1/4\nK:C\n{body}")).unwrap();
        s.tempo = Some(Tempo::quarter(120));
        PerformanceScore::new(s, velocity)
    }

    #[test]
    fn silence() {
        let a = synthesize(&perf("z4|", 64));
        assert_eq!(a.samples.len(), 2 * SAMPLE_RATE as usize);
        assert!(a.samples.iter().all(|&x| x == 0.0));
        assert_eq!(rms(&a).unwrap(), 0.0);
    }

    #[test]
    fn sustained_sine_rms() {
        // 20 quarters at 120 BPM = 10 s of A4 at full scale
        let a = synthesize(&perf("A20|", 127));
        let expected = 1.0 / 2f64.sqrt();
        assert!((rms(&a).unwrap() - expected).abs() < 1e-3);
        assert!(a.samples.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn rms_of_constants() {
        assert!(matches!(
            rms(&AudioBuffer { sample_rate: SAMPLE_RATE, samples: vec![] }),
            Err(Error::EmptyBuffer)
        ));
        let c = AudioBuffer {
            sample_rate: SAMPLE_RATE,
            samples: vec![-0.25; 100],
        };
        assert!((rms(&c).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn velocity_linearity() {
        let a = rms(&synthesize(&perf("CEGc|", 30))).unwrap();
        let b = rms(&synthesize(&perf("CEGc|", 60))).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-6);
    }

    #[test]
    fn a4_spectral_peak() {
        let a = synthesize(&perf("A2|", 100));
        let n = 8192;
        let start = 4000;
        let frame = &a.samples[start..start + n];
        let bin_hz = SAMPLE_RATE as f64 / n as f64;
        let power = |k: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in frame.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                re += x * ph.cos();
                im += x * ph.sin();
            }
            re * re + im * im
        };
        let peak = (1..n / 8).max_by(|&a, &b| power(a).total_cmp(&power(b))).unwrap();
        assert!((peak as f64 * bin_hz - 440.0).abs() <= bin_hz);
    }

    #[test]
    fn wav_roundtrip_header() {
        let a = synthesize(&perf("C|", 64));
        let mut bytes = std::io::Cursor::new(Vec::new());
        write_wav(&a, &mut bytes).unwrap();
        assert_eq!(&bytes.get_ref()[..4], b"RIFF");
        bytes.set_position(0);
        let reader = hound::WavReader::new(bytes).unwrap();
        let spec = reader.spec();
        assert_eq!((spec.channels, spec.sample_rate, spec.bits_per_sample), (1, 44_100, 16));
        assert_eq!(reader.len() as usize, a.samples.len());
    }
}
