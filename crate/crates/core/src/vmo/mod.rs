//! Variable Markov Oracle over vector time series.
//!
//! A factor oracle whose symbols are learned online: frame `x_t` receives the
//! label of an earlier frame when their Euclidean distance is at most
//! `theta`, otherwise a fresh label. The oracle's suffix links and
//! longest-repeated-suffix lengths drive a Compror block coder whose
//! per-position gain over literal coding is the information rate.

mod compror;
mod sweep;

pub use compror::{compror_encode, ir_profile, Block, ComprorCode, IRProfile};
pub use sweep::{
    default_candidates, threshold_sweep, SweepResult, DEFAULT_CANDIDATES, DISTANCE_SAMPLE,
};

use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorOracle {
    /// Forward transitions per state, in insertion order.
    pub trn: Vec<Vec<usize>>,
    /// Suffix link per state; `None` only for state 0.
    pub sfx: Vec<Option<usize>>,
    /// States whose suffix link points here.
    pub rsfx: Vec<Vec<usize>>,
    pub lrs: Vec<usize>,
    /// Symbol of frame `t`, i.e. of state `t + 1`.
    pub labels: Vec<usize>,
    pub alphabet_size: usize,
    pub theta: f64,
}

impl FactorOracle {
    pub fn n_states(&self) -> usize {
        self.sfx.len()
    }

    /// Number of frames.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Follow the transition out of `state` whose target carries `label`.
    pub fn step(&self, state: usize, label: usize) -> Option<usize> {
        self.trn
            .get(state)?
            .iter()
            .copied()
            .find(|&j| self.labels[j - 1] == label)
    }

    /// Whether `labels` can be read from state 0 along forward transitions.
    pub fn accepts(&self, labels: &[usize]) -> bool {
        labels.iter().try_fold(0, |s, &l| self.step(s, l)).is_some()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Length of the common suffix of the prefixes ending at `p1` and `p2`.
    fn common_suffix(&self, p1: usize, mut p2: usize) -> usize {
        if Some(p2) == self.sfx[p1] {
            return self.lrs[p1];
        }
        while self.sfx[p2] != self.sfx[p1] && p2 != 0 {
            p2 = self.sfx[p2].expect("only state 0 lacks a suffix link");
        }
        self.lrs[p1].min(self.lrs[p2])
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Build the oracle online, one state per frame.
pub fn build_vmo<F: AsRef<[f64]>>(frames: &[F], theta: f64) -> Result<FactorOracle> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be >= 0, got {theta}"
        )));
    }
    let Some(first) = frames.first() else {
        return Err(Error::InsufficientData(
            "oracle needs at least one frame".into(),
        ));
    };
    let dim = first.as_ref().len();
    for f in frames {
        if f.as_ref().len() != dim {
            return Err(Error::DimensionMismatch {
                context: "oracle frame",
                expected: dim,
                actual: f.as_ref().len(),
            });
        }
    }

    let n = frames.len();
    let mut o = FactorOracle {
        trn: vec![Vec::new(); n + 1],
        sfx: vec![None; n + 1],
        rsfx: vec![Vec::new(); n + 1],
        lrs: vec![0; n + 1],
        labels: Vec::with_capacity(n),
        alphabet_size: 0,
        theta,
    };
    let frame = |state: usize| frames[state - 1].as_ref();

    for t in 1..=n {
        let x = frame(t);
        o.trn[t - 1].push(t);
        let mut pi1 = t - 1;
        let mut k = o.sfx[t - 1];
        let mut matched = None;
        while let Some(state) = k {
            let best = o.trn[state]
                .iter()
                .map(|&j| (j, euclidean(frame(j), x)))
                .filter(|&(_, d)| d <= theta)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((j, _)) = best {
                matched = Some(j);
                break;
            }
            o.trn[state].push(t);
            pi1 = state;
            k = o.sfx[state];
        }
        match matched {
            None => {
                o.sfx[t] = Some(0);
                o.lrs[t] = 0;
                o.labels.push(o.alphabet_size);
                o.alphabet_size += 1;
            }
            Some(j) => {
                o.sfx[t] = Some(j);
                o.lrs[t] = o.common_suffix(pi1, j - 1) + 1;
                o.labels.push(o.labels[j - 1]);
            }
        }
        let s = o.sfx[t].expect("just set");
        o.rsfx[s].push(t);
    }
    Ok(o)
}

/// One-hot frames for a symbol string, letters in order of first appearance.
/// With `theta = 0` the oracle over these frames is the classic factor oracle.
pub fn symbol_frames(symbols: &str) -> Vec<Vec<f64>> {
    let mut alphabet: Vec<char> = Vec::new();
    let ids: Vec<usize> = symbols
        .chars()
        .map(|c| match alphabet.iter().position(|&a| a == c) {
            Some(i) => i,
            None => {
                alphabet.push(c);
                alphabet.len() - 1
            }
        })
        .collect();
    ids.iter()
        .map(|&i| {
            let mut v = vec![0.0; alphabet.len()];
            v[i] = 1.0;
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn oracle(s: &str) -> FactorOracle {
        build_vmo(&symbol_frames(s), 0.0).unwrap()
    }

    #[test]
    fn distinct_symbols() {
        let o = oracle("abcd");
        assert_eq!(o.labels, vec![0, 1, 2, 3]);
        assert_eq!(o.alphabet_size, 4);
        assert!(o.sfx[1..].iter().all(|&s| s == Some(0)));
        assert_eq!(o.n_states(), 5);
    }

    #[test]
    fn aab_trace() {
        let o = oracle("aab");
        assert_eq!(o.labels, vec![0, 0, 1]);
        assert_eq!(o.sfx, vec![None, Some(0), Some(1), Some(0)]);
        assert_eq!(o.lrs, vec![0, 0, 1, 0]);
        assert_eq!(o.trn[0], vec![1, 3]);
        assert_eq!(o.trn[1], vec![2, 3]);
        assert_eq!(o.rsfx[0], vec![1, 3]);
    }

    #[test]
    fn infinite_threshold_collapses_alphabet() {
        let frames = vec![vec![0.0, 5.0], vec![-3.0, 1.0], vec![100.0, 0.0]];
        let o = build_vmo(&frames, f64::INFINITY).unwrap();
        assert_eq!(o.alphabet_size, 1);
        assert_eq!(o.labels, vec![0, 0, 0]);
    }

    #[test]
    fn nearest_match_wins() {
        // Frame 3 is within theta of both earlier frames, closer to frame 2.
        let frames = vec![vec![0.0], vec![1.0], vec![0.55]];
        let o = build_vmo(&frames, 0.6).unwrap();
        assert_eq!(o.labels, vec![0, 1, 1]);
        assert_eq!(o.sfx[3], Some(2));
        let frames = vec![vec![0.0], vec![5.0], vec![4.5]];
        let o = build_vmo(&frames, 0.6).unwrap();
        assert_eq!(o.labels, vec![0, 1, 1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_vmo::<Vec<f64>>(&[], 0.0).is_err());
        assert!(build_vmo(&[vec![1.0], vec![1.0, 2.0]], 0.0).is_err());
        assert!(build_vmo(&[vec![1.0]], -1.0).is_err());
        assert!(build_vmo(&[vec![1.0]], f64::NAN).is_err());
    }

    #[test]
    fn json_dump_has_fields() {
        let v: serde_json::Value =
            serde_json::from_str(&oracle("abab").to_json().unwrap()).unwrap();
        for k in ["trn", "sfx", "lrs", "labels", "alphabet_size"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v["sfx"][0].is_null());
    }

    fn all_strings(max_len: usize) -> Vec<String> {
        let mut out = vec![String::new()];
        let mut frontier = vec![String::new()];
        for _ in 0..max_len {
            frontier = frontier
                .iter()
                .flat_map(|s| "abc".chars().map(move |c| format!("{s}{c}")))
                .collect();
            out.extend(frontier.iter().cloned());
        }
        out.remove(0);
        out
    }

    fn label_ids(s: &str) -> (Vec<usize>, Vec<char>) {
        let mut alphabet = Vec::new();
        let ids = s
            .chars()
            .map(|c| match alphabet.iter().position(|&a| a == c) {
                Some(i) => i,
                None => {
                    alphabet.push(c);
                    alphabet.len() - 1
                }
            })
            .collect();
        (ids, alphabet)
    }

    /// Longest suffix of `w[..t]` that also ends somewhere before `t`.
    fn true_lrs(w: &[usize], t: usize) -> usize {
        (1..t)
            .rev()
            .find(|&len| (len..t).any(|end| w[end - len..end] == w[t - len..t]))
            .unwrap_or(0)
    }

    #[test]
    fn accepts_every_factor_up_to_length_eight() {
        for s in all_strings(8) {
            let o = oracle(&s);
            let (ids, _) = label_ids(&s);
            for i in 0..ids.len() {
                for j in i + 1..=ids.len() {
                    assert!(o.accepts(&ids[i..j]), "{s}: factor {i}..{j}");
                }
            }
        }
    }

    #[test]
    fn exact_oracle_structure_up_to_length_eight() {
        for s in all_strings(8) {
            let o = oracle(&s);
            let (ids, _) = label_ids(&s);
            let n = ids.len();
            assert_eq!(o.labels, ids);
            assert_eq!(o.n_states(), n + 1);
            for t in 1..=n {
                let st = o.sfx[t].unwrap();
                assert!(st < t);
                assert!(o.lrs[t] < t);
                assert_eq!(o.lrs[t], true_lrs(&ids, t), "{s} lrs[{t}]");
                let l = o.lrs[t];
                // the repeated suffix really ends at the suffix-link state
                assert_eq!(ids[t - l..t], ids[st - l..st], "{s} t={t}");
                // transitions out of a state carry distinct labels
                let mut seen: Vec<usize> = o.trn[t - 1].iter().map(|&j| ids[j - 1]).collect();
                seen.sort();
                seen.dedup();
                assert_eq!(seen.len(), o.trn[t - 1].len());
            }
        }
    }

    #[test]
    fn permutation_changes_oracle() {
        let a = oracle("aabbc");
        let b = oracle("abcab");
        assert_ne!(a.sfx, b.sfx);
    }

    proptest! {
        #[test]
        fn invariants_on_random_vectors(
            frames in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 1..40),
            theta in 0.0f64..3.0,
        ) {
            let o = build_vmo(&frames, theta).unwrap();
            prop_assert_eq!(o.n_states(), frames.len() + 1);
            prop_assert_eq!(o.sfx[0], None);
            prop_assert_eq!(o.lrs[0], 0);
            for t in 1..o.n_states() {
                let s = o.sfx[t].unwrap();
                prop_assert!(s < t);
                prop_assert!(o.lrs[t] < t);
                prop_assert!(o.labels[t - 1] < o.alphabet_size);
                // suffix chain reaches 0 within t steps
                let (mut k, mut steps) = (t, 0);
                while k != 0 {
                    k = o.sfx[k].unwrap();
                    steps += 1;
                }
                prop_assert!(steps <= t);
            }
        }
    }
}
