use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{build_vmo, compror_encode, euclidean, ir_profile, FactorOracle, IRProfile};
use crate::{seed, Error, Result};

pub const DEFAULT_CANDIDATES: usize = 64;
/// Pairwise distances sampled when choosing default thresholds.
pub const DISTANCE_SAMPLE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub theta: f64,
    #[serde(skip)]
    pub oracle: FactorOracle,
    pub profile: IRProfile,
    /// `(theta, total IR)` for every candidate, in input order.
    pub curve: Vec<(f64, f64)>,
}

/// Build an oracle per candidate and keep the one with the largest total IR.
/// Ties go to the smallest threshold.
pub fn threshold_sweep<F: AsRef<[f64]> + Sync>(
    frames: &[F],
    candidates: &[f64],
) -> Result<SweepResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no threshold candidates".into()));
    }
    let runs: Vec<(FactorOracle, IRProfile)> = candidates
        .par_iter()
        .map(|&theta| {
            let o = build_vmo(frames, theta)?;
            let code = compror_encode(&o);
            let ir = ir_profile(&o, &code)?;
            Ok((o, ir))
        })
        .collect::<Result<_>>()?;
    let curve: Vec<(f64, f64)> = runs.iter().map(|(o, ir)| (o.theta, ir.total)).collect();
    let best = (0..runs.len())
        .reduce(|b, i| {
            let (tb, ti) = (curve[b], curve[i]);
            if ti.1 > tb.1 || (ti.1 == tb.1 && ti.0 < tb.0) {
                i
            } else {
                b
            }
        })
        .expect("candidates non-empty");
    let (oracle, profile) = runs.into_iter().nth(best).expect("index in range");
    Ok(SweepResult {
        theta: oracle.theta,
        oracle,
        profile,
        curve,
    })
}

/// `n` thresholds evenly spaced between the 2nd and 98th percentile of
/// pairwise frame distances. All pairs are used when there are at most
/// `DISTANCE_SAMPLE` of them, otherwise that many random pairs.
pub fn default_candidates<F: AsRef<[f64]>>(frames: &[F], n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "need at least one threshold candidate".into(),
        ));
    }
    let t = frames.len();
    if t < 2 {
        return Ok(vec![0.0]);
    }
    let n_pairs = t * (t - 1) / 2;
    let mut d: Vec<f64> = if n_pairs <= DISTANCE_SAMPLE {
        (0..t)
            .flat_map(|i| (i + 1..t).map(move |j| (i, j)))
            .map(|(i, j)| euclidean(frames[i].as_ref(), frames[j].as_ref()))
            .collect()
    } else {
        let mut rng = seed::rng(seed);
        (0..DISTANCE_SAMPLE)
            .map(|_| {
                let i = rng.random_range(0..t);
                let j = (i + rng.random_range(1..t)) % t;
                euclidean(frames[i].as_ref(), frames[j].as_ref())
            })
            .collect()
    };
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite frame distance".into()));
    }
    d.sort_by(f64::total_cmp);
    let lo = percentile(&d, 2.0);
    let hi = percentile(&d, 98.0);
    if n == 1 || hi <= lo {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect())
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    match sorted.get(i + 1) {
        Some(&next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vmo::symbol_frames;

    #[test]
    fn single_candidate_is_returned() {
        let r = threshold_sweep(&symbol_frames("abcab"), &[0.3]).unwrap();
        assert_eq!(r.theta, 0.3);
        assert_eq!(r.curve.len(), 1);
    }

    #[test]
    fn exact_threshold_beats_collapse() {
        let frames = symbol_frames(&"ab".repeat(20));
        let r = threshold_sweep(&frames, &[f64::INFINITY, 0.0]).unwrap();
        assert_eq!(r.theta, 0.0);
        assert_eq!(r.curve[0].1, 0.0);
        assert!(r.curve[1].1 > 0.0);
        assert_eq!(r.oracle.alphabet_size, 2);
    }

    #[test]
    fn ties_go_to_smallest_threshold() {
        let frames = vec![vec![1.0, 1.0]; 6];
        let r = threshold_sweep(&frames, &[1.0, 0.5]).unwrap();
        assert_eq!(r.theta, 0.5);
        assert_eq!(r.profile.total, 0.0);
    }

    #[test]
    fn sweep_rejects_empty_candidates() {
        assert!(threshold_sweep(&symbol_frames("ab"), &[]).is_err());
    }

    #[test]
    fn sweep_is_deterministic() {
        let frames: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![((i * 7) % 11) as f64, (i % 3) as f64])
            .collect();
        let cands = default_candidates(&frames, 16, 0).unwrap();
        let a = threshold_sweep(&frames, &cands).unwrap();
        let b = threshold_sweep(&frames, &cands).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn percentile_oracle() {
        let d: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(percentile(&d, 2.0), 2.0);
        assert_eq!(percentile(&d, 98.0), 98.0);
        assert_eq!(percentile(&[0.0, 10.0], 25.0), 2.5);
        assert_eq!(percentile(&[4.0], 50.0), 4.0);
    }

    #[test]
    fn candidates_span_percentiles() {
        let frames: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let c = default_candidates(&frames, 64, 0).unwrap();
        assert_eq!(c.len(), 64);
        let mut d: Vec<f64> = (0..30)
            .flat_map(|i| (i + 1..30).map(move |j| (j - i) as f64))
            .collect();
        d.sort_by(f64::total_cmp);
        assert_eq!(c[0], percentile(&d, 2.0));
        assert!((c[63] - percentile(&d, 98.0)).abs() < 1e-12);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn candidates_sampled_for_long_inputs() {
        let frames: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 17) as f64]).collect();
        let a = default_candidates(&frames, 8, 5).unwrap();
        assert_eq!(a, default_candidates(&frames, 8, 5).unwrap());
        assert!(a[0] >= 0.0 && a[7] <= 16.0);
    }

    #[test]
    fn degenerate_candidates() {
        assert_eq!(default_candidates(&[vec![1.0]], 64, 0).unwrap(), vec![0.0]);
        assert_eq!(
            default_candidates(&vec![vec![2.0]; 5], 64, 0).unwrap(),
            vec![0.0]
        );
        assert!(default_candidates(&[vec![1.0]], 0, 0).is_err());
    }
}
