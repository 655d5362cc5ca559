mod common;

use ov_core::eval::{
    evaluate_files, match_onset_velocity, match_onsets, max_bipartite_matching, pair_directories, EvalReport,
    FileReport, VelocityRescale, CSV_HEADER, ONSET_TOLERANCE_S, VELOCITY_TOLERANCE,
};
use ov_core::{write_midi, NoteEvent, Score};
use proptest::prelude::*;
use rand::Rng;

/// Independent candidate test: same key, |Δ| within tolerance to the millisecond grid.
fn oracle_adj(r: &Score, e: &Score, tol_ms: i64) -> Vec<Vec<usize>> {
    let ms = |t: f64| (t * 1000.0).round() as i64;
    r.events()
        .iter()
        .map(|a| {
            e.events()
                .iter()
                .enumerate()
                .filter(|(_, b)| a.key == b.key && (ms(a.onset_s) - ms(b.onset_s)).abs() <= tol_ms)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

#[test]
fn matching_size_equals_brute_force() {
    let mut rng = common::rng(31);
    for case in 0..1000 {
        let n_r = rng.random_range(0..=12);
        let n_e = rng.random_range(0..=12);
        let keys = rng.random_range(1..=3);
        let r = common::random_dense_score(&mut rng, n_r, keys, 0.3);
        let e = common::random_dense_score(&mut rng, n_e, keys, 0.3);
        let adj = oracle_adj(&r, &e, 50);
        let want = common::brute_max_matching(&adj, e.len());
        let got = match_onsets(&r, &e, ONSET_TOLERANCE_S);
        assert_eq!(got.n_match, want, "case {case}");
        // returned pairs are a valid matching on candidate edges
        let mut used_r = vec![false; r.len()];
        let mut used_e = vec![false; e.len()];
        for &(i, j) in &got.pairs {
            assert!(adj[i].contains(&j));
            assert!(!used_r[i] && !used_e[j]);
            used_r[i] = true;
            used_e[j] = true;
        }
    }
}

#[test]
fn greedy_trap_is_resolved() {
    // r0 can take e0 or e1, r1 only e0: greedy r0→e0 would leave r1 unmatched.
    let adj = vec![vec![0, 1], vec![0]];
    assert_eq!(max_bipartite_matching(&adj, 2).len(), 2);
}

#[test]
fn boundary_is_inclusive() {
    let r = Score::new(vec![NoteEvent::new(40, 0.5, 1.0, None).unwrap()], 2.0);
    for (d, hit) in [(0.05, true), (-0.05, true), (0.051, false), (-0.0501, false)] {
        let e = Score::new(vec![NoteEvent::new(40, 0.5, 1.0 + d, None).unwrap()], 2.0);
        assert_eq!(match_onsets(&r, &e, ONSET_TOLERANCE_S).n_match == 1, hit, "{d}");
    }
}

fn arb_score() -> impl Strategy<Value = Score> {
    prop::collection::vec((40u8..44, 0.0f32..=1.0, 0u32..5000), 0..40).prop_map(|v| {
        Score::new(
            v.into_iter()
                .map(|(k, vel, ms)| NoteEvent::new(k, vel, 1.0 + ms as f64 / 1000.0, None).unwrap())
                .collect(),
            7.0,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn shift_invariance(r in arb_score(), e in arb_score(), ms in -900i32..900) {
        let d = ms as f64 / 1000.0;
        let a = FileReport::evaluate("a", &r, &e);
        let b = FileReport::evaluate("b", &r.shifted(d), &e.shifted(d));
        prop_assert_eq!(a.onset.n_match, b.onset.n_match);
        prop_assert_eq!(a.onset_velocity.n_match, b.onset_velocity.n_match);
    }

    #[test]
    fn onset_velocity_is_subset(r in arb_score(), e in arb_score()) {
        let on = match_onsets(&r, &e, ONSET_TOLERANCE_S);
        for rescale in [VelocityRescale::Scale, VelocityRescale::None] {
            let ov = match_onset_velocity(&r, &e, ONSET_TOLERANCE_S, VELOCITY_TOLERANCE, rescale);
            prop_assert!(ov.n_match <= on.n_match);
            prop_assert!(ov.f1 <= on.f1 + 1e-12);
        }
    }

    #[test]
    fn self_match_is_perfect(r in arb_score()) {
        prop_assume!(!r.is_empty());
        let f = FileReport::evaluate("self", &r, &r);
        prop_assert_eq!(f.onset.f1, 1.0);
        // The scale is fit over every candidate pair, so velocity is only
        // guaranteed perfect without same-key neighbours inside the window.
        let mut kept: Vec<NoteEvent> = Vec::new();
        for e in r.events() {
            if kept.iter().all(|k| k.key != e.key || (k.onset_s - e.onset_s).abs() > 0.11) {
                kept.push(*e);
            }
        }
        let sparse = Score::new(kept, r.duration_s());
        prop_assert_eq!(FileReport::evaluate("self", &sparse, &sparse).onset_velocity.f1, 1.0);
    }

    #[test]
    fn symmetric_matching_size(r in arb_score(), e in arb_score()) {
        prop_assert_eq!(match_onsets(&r, &e, 0.05).n_match, match_onsets(&e, &r, 0.05).n_match);
    }
}

#[test]
fn directory_evaluation_round_trip() {
    let dir = std::env::temp_dir().join(format!("ov-eval-{}", std::process::id()));
    let (rd, ed) = (dir.join("ref"), dir.join("est"));
    std::fs::create_dir_all(&rd).unwrap();
    std::fs::create_dir_all(&ed).unwrap();
    let mut rng = common::rng(32);
    for i in 0..4 {
        let s = common::random_dense_score(&mut rng, 30, 20, 10.0);
        std::fs::write(rd.join(format!("f{i}.mid")), write_midi(&s)).unwrap();
        std::fs::write(ed.join(format!("f{i}.mid")), write_midi(&s)).unwrap();
    }
    std::fs::write(rd.join("lonely.mid"), write_midi(&Score::empty())).unwrap();
    let (pairs, unpaired) = pair_directories(&rd, &ed).unwrap();
    assert_eq!(pairs.len(), 4);
    assert_eq!(unpaired, vec!["lonely".to_string()]);
    let report: EvalReport = evaluate_files(&pairs);
    assert_eq!(report.files.len(), 4);
    assert_eq!(report.pooled_onset.f1, 1.0);
    assert_eq!(report.mean_onset_velocity.f1, 1.0);
    let csv = report.to_csv();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert!(csv.lines().nth(1).unwrap().ends_with("100.0000"));
    std::fs::remove_dir_all(&dir).unwrap();
}
