mod common;

use midly::num::{u15, u24, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};
use ov_core::midi::{denormalize_velocity, parse_midi_with_report};
use ov_core::{parse_midi, write_midi, NoteEvent, Score};
use proptest::prelude::*;
use rand::Rng;

/// Absolute-tick event before delta encoding.
enum Ev {
    On(u8, u8, u8),
    Off(u8, u8),
    Tempo(u32),
}

fn encode(ppq: u16, tracks: Vec<Vec<(u64, Ev)>>) -> Vec<u8> {
    let mut out_tracks = Vec::new();
    for mut t in tracks {
        t.sort_by_key(|(tick, _)| *tick);
        let mut last = 0;
        let mut trk = Vec::new();
        for (tick, ev) in t {
            let kind = match ev {
                Ev::On(ch, p, v) => TrackEventKind::Midi {
                    channel: u4::new(ch),
                    message: MidiMessage::NoteOn { key: u7::new(p), vel: u7::new(v) },
                },
                Ev::Off(ch, p) => TrackEventKind::Midi {
                    channel: u4::new(ch),
                    message: MidiMessage::NoteOff { key: u7::new(p), vel: u7::new(64) },
                },
                Ev::Tempo(us) => TrackEventKind::Meta(MetaMessage::Tempo(u24::new(us))),
            };
            trk.push(TrackEvent { delta: u28::new((tick - last) as u32), kind });
            last = tick;
        }
        trk.push(TrackEvent { delta: u28::new(0), kind: TrackEventKind::Meta(MetaMessage::EndOfTrack) });
        out_tracks.push(trk);
    }
    let format = if out_tracks.len() > 1 { Format::Parallel } else { Format::SingleTrack };
    let smf = Smf { header: Header::new(format, Timing::Metrical(u15::new(ppq))), tracks: out_tracks };
    let mut bytes = Vec::new();
    smf.write_std(&mut bytes).unwrap();
    bytes
}

/// Seconds at `tick` under a piecewise-constant tempo map.
fn tick_to_s(tempos: &[(u64, u32)], ppq: u16, tick: u64) -> f64 {
    let mut s = 0.0;
    let mut prev = (0u64, 500_000u32);
    for &(t, us) in tempos.iter().filter(|(t, _)| *t <= tick) {
        s += (t - prev.0) as f64 * prev.1 as f64 / 1e6 / ppq as f64;
        prev = (t, us);
    }
    s + (tick - prev.0) as f64 * prev.1 as f64 / 1e6 / ppq as f64
}

#[test]
fn random_files_match_independent_timing() {
    let mut rng = common::rng(21);
    for case in 0..100 {
        let ppq = [24u16, 96, 480, 960, 1000][rng.random_range(0..5)];
        let n_tracks = rng.random_range(1..4);
        let mut tempos: Vec<(u64, u32)> = (0..rng.random_range(0..4))
            .map(|_| (rng.random_range(0..20 * ppq as u64), rng.random_range(250_000..1_500_000)))
            .collect();
        tempos.sort_by_key(|t| t.0);
        tempos.dedup_by_key(|t| t.0);
        let mut tracks: Vec<Vec<(u64, Ev)>> = (0..n_tracks).map(|_| Vec::new()).collect();
        tracks[0].extend(tempos.iter().map(|&(t, us)| (t, Ev::Tempo(us))));
        // Non-overlapping notes per pitch: (on tick, off tick, pitch, vel)
        let mut notes = Vec::new();
        for pitch in (21u8..=108).step_by(rng.random_range(5..15)) {
            let mut tick = rng.random_range(0..ppq as u64);
            for _ in 0..rng.random_range(0..4) {
                let len = rng.random_range(1..2 * ppq as u64);
                let vel = rng.random_range(1..=127u8);
                let tr = rng.random_range(0..n_tracks);
                let ch = rng.random_range(0..16);
                tracks[tr].push((tick, Ev::On(ch, pitch, vel)));
                tracks[tr].push((tick + len, Ev::Off(ch, pitch)));
                notes.push((tick, tick + len, pitch, vel));
                tick += len + rng.random_range(1..ppq as u64);
            }
        }
        let bytes = encode(ppq, tracks);
        // The file is well-formed by an independent reader.
        Smf::parse(&bytes).unwrap();
        let s = parse_midi(&bytes).unwrap();
        assert_eq!(s.len(), notes.len(), "case {case}");
        let mut want: Vec<(f64, u8, f64, u8)> = notes
            .iter()
            .map(|&(on, off, p, v)| (tick_to_s(&tempos, ppq, on), p - 20, tick_to_s(&tempos, ppq, off), v))
            .collect();
        want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (e, w) in s.events().iter().zip(&want) {
            assert!((e.onset_s - w.0).abs() < 1e-9, "case {case}");
            assert_eq!(e.key, w.1);
            assert!((e.offset_s.unwrap() - w.2).abs() < 1e-9);
            assert_eq!(denormalize_velocity(e.velocity), w.3);
        }
    }
}

#[test]
fn written_files_are_read_by_midly() {
    let mut rng = common::rng(22);
    let score = common::random_dense_score(&mut rng, 200, 40, 30.0);
    let bytes = write_midi(&score);
    let smf = Smf::parse(&bytes).unwrap();
    assert_eq!(smf.header.timing, Timing::Metrical(u15::new(960)));
    let ons = smf.tracks[0]
        .iter()
        .filter(|e| matches!(e.kind, TrackEventKind::Midi { message: MidiMessage::NoteOn { vel, .. }, .. } if vel > 0))
        .count();
    assert_eq!(ons, score.len());
}

#[test]
fn malformed_inputs_are_errors() {
    assert!(parse_midi(b"").is_err());
    assert!(parse_midi(b"RIFF0000WAVEfmt ").is_err());
    let good = write_midi(&Score::new(vec![NoteEvent::new(40, 0.5, 0.1, Some(0.4)).unwrap()], 1.0));
    for cut in [10, 16, 22, good.len() - 3] {
        assert!(parse_midi(&good[..cut]).is_err(), "cut {cut}");
    }
    let mut fmt2 = good.clone();
    fmt2[9] = 2;
    assert!(parse_midi(&fmt2).is_err());
}

#[test]
fn orphan_off_is_counted() {
    let bytes = encode(480, vec![vec![(0, Ev::Off(0, 60)), (10, Ev::On(0, 61, 90)), (20, Ev::Off(0, 61))]]);
    let (s, rep) = parse_midi_with_report(&bytes).unwrap();
    assert_eq!(rep.orphan_note_off, 1);
    assert_eq!(s.len(), 1);
}

fn arb_score() -> impl Strategy<Value = Score> {
    prop::collection::vec((1u8..=88, 1u8..=127, 0u32..60_000, prop::option::of(1u32..3_000)), 0..60).prop_map(|v| {
        let events = v
            .into_iter()
            .map(|(k, vel, on_ms, len_ms)| {
                let on = on_ms as f64 / 1000.0;
                NoteEvent::new(k, vel as f32 / 127.0, on, len_ms.map(|l| on + l as f64 / 1000.0)).unwrap()
            })
            .collect();
        Score::new(events, 0.0)
    })
}

/// Multiset of (key, onset tick, velocity); write order may regroup same-key overlaps.
fn signature(s: &Score) -> Vec<(u8, i64, u8)> {
    let mut v: Vec<_> = s
        .events()
        .iter()
        .map(|e| (e.key, (e.onset_s * 1920.0).round() as i64, denormalize_velocity(e.velocity)))
        .collect();
    v.sort();
    v
}

proptest! {
    #[test]
    fn write_parse_round_trip(score in arb_score()) {
        let back = parse_midi(&write_midi(&score)).unwrap();
        prop_assert_eq!(back.len(), score.len());
        prop_assert_eq!(signature(&back), signature(&score));
        // rewriting is a fixed point
        let again = parse_midi(&write_midi(&back)).unwrap();
        prop_assert_eq!(again, back);
    }

    #[test]
    fn parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let mut with_header = b"MThd\0\0\0\x06\0\0\0\x01\x01\xe0MTrk".to_vec();
        with_header.extend_from_slice(&bytes);
        let _ = parse_midi(&bytes);
        let _ = parse_midi(&with_header);
    }
}
