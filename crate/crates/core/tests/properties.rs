mod common;

use proptest::prelude::*;

use quadmelody::abc::{
    fifteen_key_fan_out, parse_abc, segment_sizes, serialize_abc, Barline, Duration, KeySignature, Measure, Meter,
    Mode, Note, Pitch, Rational, Score,
};
use quadmelody::features::{avg_pitch, pitch_sd};
use quadmelody::generator::{clock_values, cross_entropy, tokenize, train, CharLm};
use quadmelody::labeling::{make_record, QuadrantLabel};
use quadmelody::render::{to_midi, PerformanceScore};
use quadmelody::stats::{kde, pearson};
use quadmelody::template::velocity_for_gain;

const MODES: [Mode; 4] = [Mode::Major, Mode::Minor, Mode::Dorian, Mode::Mixolydian];
/// Note lengths in eighths of a quarter.
const LENGTHS: [i64; 6] = [2, 4, 6, 8, 12, 16];

fn note() -> impl Strategy<Value = Note> {
    (prop::option::weighted(0.9, 40i32..90), prop::sample::select(&LENGTHS[..])).prop_map(|(p, d)| {
        let d = Duration::new(Rational::new(d, 8)).unwrap();
        match p {
            Some(p) => Note::sounded(Pitch::new(p).unwrap(), d),
            None => Note::rest(d),
        }
    })
}

fn measure() -> impl Strategy<Value = Measure> {
    prop::collection::vec(note(), 1..8).prop_map(|mut notes| {
        // keep within a 4/4 bar
        let mut total = Rational::from_integer(0);
        notes.retain(|n| {
            total += n.duration.value();
            total <= Rational::from_integer(4)
        });
        if notes.is_empty() {
            notes.push(Note::rest(Duration::quarters(1, 1)));
        }
        Measure::new(notes, Barline::Single)
    })
}

fn score() -> impl Strategy<Value = Score> {
    (-7i32..=7, prop::sample::select(&MODES[..]), prop::collection::vec(measure(), 1..24)).prop_map(
        |(fifths, mode, mut measures)| {
            measures.last_mut().unwrap().bar = Barline::Final;
            Score::new(
                KeySignature::from_fifths(fifths, mode).unwrap(),
                Some(Meter::new(4, 4).unwrap()),
                Rational::new(1, 8),
                measures,
            )
        },
    )
}

fn has_notes(s: &Score) -> bool {
    s.sounded_pitches().next().is_some()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialize_then_parse_is_identity(s in score()) {
        let text = serialize_abc(&s);
        let back = parse_abc(&text).unwrap();
        prop_assert_eq!(&back, &s, "{}", text);
        prop_assert_eq!(serialize_abc(&back), text);
    }

    #[test]
    fn fan_out_keeps_intervals_and_spread(s in score().prop_filter("needs notes", has_notes)) {
        let melody = quadmelody::abc::extract_melody(&s).unwrap();
        let steps = |sc: &Score| -> Vec<i32> {
            let p: Vec<i32> = sc.sounded_pitches().map(|p| p.midi() as i32).collect();
            p.windows(2).map(|w| w[1] - w[0]).collect()
        };
        let fan = fifteen_key_fan_out(&s);
        prop_assert_eq!(fan.len(), 15);
        for (key, t) in fan {
            let Ok(t) = t else { continue };
            prop_assert_eq!(t.key, key);
            prop_assert_eq!(steps(&t), steps(&s));
            let m = quadmelody::abc::extract_melody(&t).unwrap();
            prop_assert_eq!(pitch_sd(&m).to_bits(), pitch_sd(&melody).to_bits());
            let shift = t.sounded_pitches().next().unwrap().midi() as f64 - s.sounded_pitches().next().unwrap().midi() as f64;
            prop_assert!((avg_pitch(&m) - avg_pitch(&melody) - shift).abs() < 1e-9);
        }
    }

    #[test]
    fn segment_sizes_partition(n in 1usize..600) {
        let sizes = segment_sizes(n);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().all(|s| (1..=30).contains(s)));
        prop_assert_eq!(sizes, common::expected_segments(n));
    }

    #[test]
    fn training_never_loses_to_uniform(scores in prop::collection::vec(score().prop_filter("needs notes", has_notes), 1..5), order in 1usize..7) {
        let records: Vec<_> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| make_record(s, QuadrantLabel::ALL[i % 4]))
            .collect();
        let seqs: Vec<_> = records.iter().map(|r| tokenize(r).unwrap()).collect();
        let uniform = CharLm::untrained_for(&seqs, order, 0.01).unwrap();
        let u = cross_entropy(&uniform, &records).unwrap();
        prop_assert_eq!(u, (uniform.vocab_size() as f64).ln());
        let trained = train(&records, order, 0.01).unwrap();
        let ce = cross_entropy(&trained, &records).unwrap();
        prop_assert!(ce <= u);
        let oracle = common::brute_cross_entropy(&seqs, &seqs, order, 0.01);
        prop_assert!((ce - oracle).abs() < 1e-12);
    }

    #[test]
    fn midi_is_well_formed(s in score(), velocity in 1u8..=127) {
        let bytes = to_midi(&PerformanceScore::new(s, velocity));
        let smf = midly::Smf::parse(&bytes).unwrap();
        prop_assert_eq!(smf.tracks.len(), 1);
        for e in &smf.tracks[0] {
            if let midly::TrackEventKind::Midi { message: midly::MidiMessage::NoteOn { vel, .. }, .. } = e.kind {
                prop_assert_eq!(vel.as_int(), velocity);
            }
        }
    }

    #[test]
    fn pearson_is_symmetric_and_bounded(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let (Ok(a), Ok(b)) = (pearson(&x, &y), pearson(&y, &x)) {
            prop_assert!((a.r - b.r).abs() < 1e-12);
            prop_assert!(a.r.abs() <= 1.0);
            prop_assert!((0.0..=1.0).contains(&a.p_value));
        }
    }

    #[test]
    fn kde_has_unit_mass(samples in prop::collection::vec(-50.0f64..50.0, 2..100)) {
        if let Ok(curve) = kde(&samples, 512) {
            prop_assert!((curve.integral() - 1.0).abs() < 0.01);
            prop_assert!(curve.density.iter().all(|d| *d >= 0.0));
        }
    }

    #[test]
    fn gain_is_monotone(a in -20.0f64..20.0, b in -20.0f64..20.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(velocity_for_gain(64, lo) <= velocity_for_gain(64, hi));
    }

    #[test]
    fn bar_clock_covers_any_text(text in "[A-Ga-gz0-9/|:,'^_= \nLMK]{0,80}") {
        prop_assert_eq!(clock_values(&text).len(), text.chars().count() + 1);
    }
}
