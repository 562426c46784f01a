use serde::{Deserialize, Serialize};

use crate::dynseq::{stage_average, stage_partial_sums, DynSeq};
use crate::error::{precondition, Result};
use crate::numeric::ExactScalar;
use crate::tower::Tower;

/// Per stage: `max |ŝ^(k)_{n,i}| / h_n` over `1 <= k <= floor(κ r_n)` and
/// in-range windows. Zero when no window qualifies.
pub fn restricted_growth_stat(
    seq: &DynSeq,
    heights: &[u64],
    kappa: &ExactScalar,
) -> Result<Vec<ExactScalar>> {
    if kappa.is_negative() || kappa >= &ExactScalar::one() {
        return precondition(format!("kappa = {kappa} must lie in [0, 1)"));
    }
    if heights.len() < seq.depth() {
        return precondition(format!(
            "{} heights for {} stages",
            heights.len(),
            seq.depth()
        ));
    }
    (0..seq.depth())
        .map(|n| {
            let stage = seq.stage(n);
            let avg = stage_average(stage);
            let rep: Vec<i64> = stage.iter().map(|s| s - avg).collect();
            let k_max: u64 = (kappa * &ExactScalar::from(rep.len()))
                .floor()
                .try_into()
                .unwrap_or(0);
            let worst = (1..=k_max as usize)
                .flat_map(|k| stage_partial_sums(&rep, k))
                .map(|v| v.unsigned_abs())
                .max()
                .unwrap_or(0);
            ExactScalar::new(worst, heights[n])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeDecomposition {
    pub t: u64,
    pub p: usize,
    pub k: u64,
    pub q: u64,
    /// `0 < k < r_p`.
    pub in_regime: bool,
}

/// `t = k·w_p + q` with `w_p <= t < w_{p+1}` and `0 <= q < w_p`.
pub fn decompose_time(tower: &Tower, t: u64) -> Result<TimeDecomposition> {
    let w = tower.window_heights();
    if w.len() < 2 {
        return precondition("need at least two window heights (depth >= 2)");
    }
    if t < w[1] {
        return precondition(format!("t = {t} must be at least w_1 = {}", w[1]));
    }
    let last = w.len() - 1;
    if t >= w[last] {
        return precondition(format!(
            "t = {t} must be below w_{last} = {}; deepen the tower",
            w[last]
        ));
    }
    let p = (0..last).rev().find(|&p| w[p] <= t).expect("w_1 <= t");
    let (k, q) = (t / w[p], t % w[p]);
    Ok(TimeDecomposition {
        t,
        p,
        k,
        q,
        in_regime: k > 0 && k < tower.cut(p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{staircase, Recipe};
    use crate::dynseq::CutRule;
    use crate::tower::BuildOptions;

    fn q(s: &str) -> ExactScalar {
        s.parse().unwrap()
    }

    #[test]
    fn staircase_growth_stage() {
        // r = 4: representative (-1, 0, 1, 2); in-range windows give max 1
        let seq = staircase(
            &CutRule::Explicit {
                values: vec![2, 3, 4],
            },
            3,
        )
        .unwrap();
        let stats = restricted_growth_stat(&seq, &[1, 3, 12], &q("1/2")).unwrap();
        assert_eq!(stats[2], q("1/12"));
        assert_eq!(stats[0], q("0"));
        assert!(restricted_growth_stat(&seq, &[1, 3, 12], &q("1")).is_err());
    }

    #[test]
    fn example52_growth_formula() {
        let t = Tower::build_with(&Recipe::example52(4), 4, BuildOptions::default()).unwrap();
        let stats =
            restricted_growth_stat(&t.spacer_seq().unwrap(), &t.heights(), &q("1/2")).unwrap();
        for n in 1..4 {
            let (h, r) = (t.height(n), t.cut(n));
            let formula = q("1") - ExactScalar::new(h / r, h).unwrap();
            assert!(stats[n] >= formula);
        }
    }

    #[test]
    fn decompose_examples() {
        let cuts = CutRule::Explicit {
            values: vec![2, 3, 4, 5],
        };
        let t = Tower::build_with(&Recipe::staircase(cuts, 4), 4, BuildOptions::default()).unwrap();
        assert_eq!(t.window_heights(), vec![1, 4, 13, 56]);
        let d = decompose_time(&t, 30).unwrap();
        assert_eq!((d.p, d.k, d.q), (2, 2, 4));
        assert!(d.in_regime);
        let d = decompose_time(&t, 13).unwrap();
        assert_eq!((d.p, d.k, d.q), (2, 1, 0));
        let d = decompose_time(&t, 4).unwrap();
        assert_eq!((d.p, d.k, d.q), (1, 1, 0));
        assert!(decompose_time(&t, 3).is_err());
        assert!(decompose_time(&t, 56).is_err());
    }
}
