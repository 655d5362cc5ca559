//! Note-level scoring: onset matching within a tolerance and the
//! onset-plus-velocity variant with a global velocity rescale.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::midi::parse_midi;
use crate::roll::Score;

pub const ONSET_TOLERANCE_S: f64 = 0.05;
pub const VELOCITY_TOLERANCE: f64 = 0.1;

/// Absorbs representation error at the inclusive boundaries.
const BOUNDARY_SLACK: f64 = 1e-9;

pub const CSV_HEADER: &str = "file,n_ref,n_est,onset_P,onset_R,onset_F1,onvel_P,onvel_R,onvel_F1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VelocityRescale {
    #[default]
    Scale,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    /// `(ref index, est index)` in the events order of each score.
    pub pairs: Vec<(usize, usize)>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_ref: usize,
    pub n_est: usize,
    pub n_match: usize,
}

impl MatchResult {
    pub fn from_pairs(pairs: Vec<(usize, usize)>, n_ref: usize, n_est: usize) -> Self {
        let n_match = pairs.len();
        let (precision, recall, f1) = prf(n_match, n_ref, n_est);
        MatchResult {
            pairs,
            precision,
            recall,
            f1,
            n_ref,
            n_est,
            n_match,
        }
    }
}

/// Precision, recall and F1, each defined as 0 when its denominator is 0.
pub fn prf(n_match: usize, n_ref: usize, n_est: usize) -> (f64, f64, f64) {
    let p = if n_est == 0 { 0.0 } else { n_match as f64 / n_est as f64 };
    let r = if n_ref == 0 { 0.0 } else { n_match as f64 / n_ref as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Maximum-cardinality bipartite matching by augmenting paths.
/// `adj[i]` lists the right vertices compatible with left vertex `i`.
pub fn max_bipartite_matching(adj: &[Vec<usize>], n_right: usize) -> Vec<(usize, usize)> {
    fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|o| augment(o, adj, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; n_right];
    let mut seen = vec![false; n_right];
    for i in 0..adj.len() {
        seen.iter_mut().for_each(|s| *s = false);
        augment(i, adj, &mut seen, &mut owner);
    }
    let mut pairs: Vec<(usize, usize)> = owner
        .iter()
        .enumerate()
        .filter_map(|(j, o)| o.map(|i| (i, j)))
        .collect();
    pairs.sort_unstable();
    pairs
}

fn onset_candidates(reference: &Score, estimate: &Score, tol_s: f64) -> Vec<Vec<usize>> {
    let est = estimate.events();
    reference
        .events()
        .iter()
        .map(|r| {
            est.iter()
                .enumerate()
                .filter(|(_, e)| e.key == r.key && (e.onset_s - r.onset_s).abs() <= tol_s + BOUNDARY_SLACK)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// Same key and onsets within `tol_s` (inclusive), maximally matched.
pub fn match_onsets(reference: &Score, estimate: &Score, tol_s: f64) -> MatchResult {
    let adj = onset_candidates(reference, estimate, tol_s);
    let pairs = max_bipartite_matching(&adj, estimate.len());
    MatchResult::from_pairs(pairs, reference.len(), estimate.len())
}

/// Least-squares scale `s` minimizing `Σ (s·v_est − v_ref)²` over the given
/// pairs; 0 when every estimated velocity is 0.
pub fn velocity_scale(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (num, den) = pairs
        .into_iter()
        .fold((0.0, 0.0), |(n, d), (r, e)| (n + r * e, d + e * e));
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Onset matching that additionally requires the rescaled estimated
/// velocity within `vel_tol` of the max-normalized reference velocity.
pub fn match_onset_velocity(
    reference: &Score,
    estimate: &Score,
    tol_s: f64,
    vel_tol: f64,
    rescale: VelocityRescale,
) -> MatchResult {
    let adj = onset_candidates(reference, estimate, tol_s);
    let refs = reference.events();
    let ests = estimate.events();
    let vmax = refs.iter().map(|e| f64::from(e.velocity)).fold(0.0, f64::max);
    let v_ref = |i: usize| {
        let v = f64::from(refs[i].velocity);
        if vmax > 0.0 {
            v / vmax
        } else {
            v
        }
    };
    let s = match rescale {
        VelocityRescale::None => 1.0,
        VelocityRescale::Scale => velocity_scale(
            adj.iter()
                .enumerate()
                .flat_map(|(i, js)| js.iter().map(move |&j| (i, j)))
                .map(|(i, j)| (v_ref(i), f64::from(ests[j].velocity))),
        ),
    };
    let vel_adj: Vec<Vec<usize>> = adj
        .iter()
        .enumerate()
        .map(|(i, js)| {
            js.iter()
                .copied()
                .filter(|&j| (s * f64::from(ests[j].velocity) - v_ref(i)).abs() <= vel_tol + BOUNDARY_SLACK)
                .collect()
        })
        .collect();
    let pairs = max_bipartite_matching(&vel_adj, ests.len());
    MatchResult::from_pairs(pairs, refs.len(), ests.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileReport {
    pub file: String,
    pub n_ref: usize,
    pub n_est: usize,
    pub onset: MatchResult,
    pub onset_velocity: MatchResult,
}

impl FileReport {
    pub fn evaluate(file: impl Into<String>, reference: &Score, estimate: &Score) -> Self {
        FileReport {
            file: file.into(),
            n_ref: reference.len(),
            n_est: estimate.len(),
            onset: match_onsets(reference, estimate, ONSET_TOLERANCE_S),
            onset_velocity: match_onset_velocity(
                reference,
                estimate,
                ONSET_TOLERANCE_S,
                VELOCITY_TOLERANCE,
                VelocityRescale::Scale,
            ),
        }
    }
}

/// Precision, recall and F1 for one protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub files: Vec<FileReport>,
    /// Files that could not be read, with the reason.
    pub skipped: Vec<(String, String)>,
    /// Unweighted mean over files.
    pub mean_onset: Prf,
    pub mean_onset_velocity: Prf,
    /// Computed from note counts summed over files.
    pub pooled_onset: Prf,
    pub pooled_onset_velocity: Prf,
}

fn mean_prf<'a>(rs: impl Iterator<Item = &'a MatchResult>) -> Prf {
    let (mut acc, mut n) = (Prf::default(), 0usize);
    for r in rs {
        acc.precision += r.precision;
        acc.recall += r.recall;
        acc.f1 += r.f1;
        n += 1;
    }
    if n > 0 {
        let k = n as f64;
        acc.precision /= k;
        acc.recall /= k;
        acc.f1 /= k;
    }
    acc
}

fn pooled_prf<'a>(rs: impl Iterator<Item = &'a MatchResult>) -> Prf {
    let (m, r, e) = rs.fold((0, 0, 0), |(m, r, e), x| (m + x.n_match, r + x.n_ref, e + x.n_est));
    let (precision, recall, f1) = prf(m, r, e);
    Prf { precision, recall, f1 }
}

impl EvalReport {
    pub fn from_files(files: Vec<FileReport>, skipped: Vec<(String, String)>) -> Self {
        EvalReport {
            mean_onset: mean_prf(files.iter().map(|f| &f.onset)),
            mean_onset_velocity: mean_prf(files.iter().map(|f| &f.onset_velocity)),
            pooled_onset: pooled_prf(files.iter().map(|f| &f.onset)),
            pooled_onset_velocity: pooled_prf(files.iter().map(|f| &f.onset_velocity)),
            files,
            skipped,
        }
    }

    /// Per-file rows with metrics in percent.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for f in &self.files {
            let (o, v) = (&f.onset, &f.onset_velocity);
            let _ = writeln!(
                s,
                "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
                f.file,
                f.n_ref,
                f.n_est,
                100.0 * o.precision,
                100.0 * o.recall,
                100.0 * o.f1,
                100.0 * v.precision,
                100.0 * v.recall,
                100.0 * v.f1
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let row = |name: &str, p: &Prf| {
            format!(
                "{name:<24} P {:6.2}%  R {:6.2}%  F1 {:6.2}%\n",
                100.0 * p.precision,
                100.0 * p.recall,
                100.0 * p.f1
            )
        };
        let mut s = format!("{} files evaluated, {} skipped\n", self.files.len(), self.skipped.len());
        s += &row("onset (mean)", &self.mean_onset);
        s += &row("onset+velocity (mean)", &self.mean_onset_velocity);
        s += &row("onset (pooled)", &self.pooled_onset);
        s += &row("onset+velocity (pooled)", &self.pooled_onset_velocity);
        for (f, why) in &self.skipped {
            let _ = writeln!(s, "skipped {f}: {why}");
        }
        s
    }
}

fn read_score(path: &Path) -> Result<Score> {
    parse_midi(&std::fs::read(path)?)
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Evaluates paired MIDI files in sorted order. Unreadable pairs are
/// reported in `skipped` rather than aborting the run.
pub fn evaluate_files(pairs: &[(PathBuf, PathBuf)]) -> EvalReport {
    let mut pairs = pairs.to_vec();
    pairs.sort();
    let results: Vec<std::result::Result<FileReport, (String, String)>> = pairs
        .par_iter()
        .map(|(r, e)| {
            let name = display_name(r);
            let reference = read_score(r).map_err(|err| (name.clone(), format!("{}: {err}", r.display())))?;
            let estimate = read_score(e).map_err(|err| (name.clone(), format!("{}: {err}", e.display())))?;
            Ok(FileReport::evaluate(name, &reference, &estimate))
        })
        .collect();
    let (mut files, mut skipped) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(f) => files.push(f),
            Err(s) => skipped.push(s),
        }
    }
    EvalReport::from_files(files, skipped)
}

/// `(reference, estimate)` file pairs.
pub type FilePairs = Vec<(PathBuf, PathBuf)>;

/// Pairs `*.mid`/`*.midi` files of two directories by file stem. Returns
/// the pairs and the stems present on only one side.
pub fn pair_directories(ref_dir: &Path, est_dir: &Path) -> Result<(FilePairs, Vec<String>)> {
    let list = |dir: &Path| -> Result<std::collections::BTreeMap<String, PathBuf>> {
        let mut m = std::collections::BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let p = entry?.path();
            let is_midi = p
                .extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("mid") || x.eq_ignore_ascii_case("midi"));
            if is_midi {
                if let Some(stem) = p.file_stem() {
                    m.insert(stem.to_string_lossy().into_owned(), p);
                }
            }
        }
        Ok(m)
    };
    let refs = list(ref_dir)?;
    let mut ests = list(est_dir)?;
    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for (stem, r) in refs {
        match ests.remove(&stem) {
            Some(e) => pairs.push((r, e)),
            None => unpaired.push(stem),
        }
    }
    unpaired.extend(ests.into_keys());
    Ok((pairs, unpaired))
}
