//! Truncated dynamical sequences: doubly indexed integer families
//! `s[n][i]`, `0 <= i < r_n`, and the statistics computed from them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::numeric::ExactScalar;

/// Symbolic or explicit rule producing the cut sequence `r_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CutRule {
    Explicit {
        values: Vec<u64>,
    },
    Constant {
        value: u64,
    },
    /// `r_n = a*n + b`
    Affine {
        a: u64,
        b: u64,
    },
    /// `r_n = 2(2^n - 1)` for `n >= 1`, with `r_0 = 2`.
    DoublingMinusTwo,
}

/// Pathology verdict: whether the cut sequence has a finite limit point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pathology {
    Pathological,
    NotPathological,
    UnknownOnPrefix,
}

impl CutRule {
    pub fn value(&self, n: usize) -> Result<u64> {
        let r = match self {
            CutRule::Explicit { values } => *values.get(n).ok_or_else(|| {
                Error::InvalidSequence(format!(
                    "explicit cut list has {} entries, stage {n} requested",
                    values.len()
                ))
            })?,
            CutRule::Constant { value } => *value,
            CutRule::Affine { a, b } => a
                .checked_mul(n as u64)
                .and_then(|x| x.checked_add(*b))
                .ok_or_else(|| Error::InvalidSequence(format!("affine cut overflows at {n}")))?,
            CutRule::DoublingMinusTwo => {
                if n == 0 {
                    2
                } else if n >= 62 {
                    return Err(Error::InvalidSequence(format!(
                        "doubling cut overflows at {n}"
                    )));
                } else {
                    2 * ((1u64 << n) - 1)
                }
            }
        };
        if r == 0 {
            return Err(Error::InvalidSequence(format!("cut r_{n} = 0")));
        }
        Ok(r)
    }

    pub fn generate(&self, depth: usize) -> Result<Vec<u64>> {
        (0..depth).map(|n| self.value(n)).collect()
    }

    /// Decides `liminf r_n < infinity` where the rule makes that decidable.
    pub fn pathology(&self) -> Pathology {
        match self {
            CutRule::Constant { .. } => Pathology::Pathological,
            CutRule::Affine { a: 0, .. } => Pathology::Pathological,
            CutRule::Affine { .. } | CutRule::DoublingMinusTwo => Pathology::NotPathological,
            CutRule::Explicit { .. } => Pathology::UnknownOnPrefix,
        }
    }
}

pub fn pathology_verdict(rule: &CutRule) -> Pathology {
    rule.pathology()
}

/// A truncated dynamical sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynSeq {
    stages: Vec<Vec<i64>>,
    /// False when the cut sequence was allowed to decrease.
    conformant: bool,
    /// The rule that generated the cuts, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rule: Option<CutRule>,
}

impl DynSeq {
    /// A sequence whose cuts must be nondecreasing.
    pub fn new(stages: Vec<Vec<i64>>) -> Result<Self> {
        Self::build(stages, true)
    }

    /// A sequence for experiments with non-monotone cuts.
    pub fn relaxed(stages: Vec<Vec<i64>>) -> Result<Self> {
        Self::build(stages, false)
    }

    fn build(stages: Vec<Vec<i64>>, conformant: bool) -> Result<Self> {
        if let Some(n) = stages.iter().position(|s| s.is_empty()) {
            return Err(Error::InvalidSequence(format!("stage {n} is empty")));
        }
        if conformant {
            if let Some(n) = stages.windows(2).position(|w| w[1].len() < w[0].len()) {
                return Err(Error::InvalidSequence(format!(
                    "cuts decrease from stage {n} ({}) to stage {} ({})",
                    stages[n].len(),
                    n + 1,
                    stages[n + 1].len()
                )));
            }
        }
        Ok(DynSeq {
            stages,
            conformant,
            rule: None,
        })
    }

    pub fn with_rule(mut self, rule: CutRule) -> Self {
        self.rule = Some(rule);
        self
    }

    pub fn rule(&self) -> Option<&CutRule> {
        self.rule.as_ref()
    }

    pub fn is_conformant(&self) -> bool {
        self.conformant
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, n: usize) -> &[i64] {
        &self.stages[n]
    }

    pub fn stages(&self) -> &[Vec<i64>] {
        &self.stages
    }

    pub fn cuts(&self) -> Vec<u64> {
        self.stages.iter().map(|s| s.len() as u64).collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.stages.iter().flatten().all(|&v| v >= 0)
    }

    fn check_stage(&self, n: usize) -> Result<()> {
        if n >= self.depth() {
            return precondition(format!("stage {n} beyond depth {}", self.depth()));
        }
        Ok(())
    }
}

/// Averages, ranges and representative sequence of a [`DynSeq`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqStats {
    pub averages: Vec<i64>,
    pub ranges: Vec<i64>,
    pub representative: DynSeq,
    pub pathological_verdict: Pathology,
}

/// `floor(sum / r)` of one stage.
pub fn stage_average(stage: &[i64]) -> i64 {
    let sum: i128 = stage.iter().map(|&v| v as i128).sum();
    sum.div_euclid(stage.len() as i128) as i64
}

pub fn stage_range(stage: &[i64]) -> i64 {
    let max = stage.iter().max().copied().unwrap_or(0);
    let min = stage.iter().min().copied().unwrap_or(0);
    max - min
}

pub fn derive_stats(seq: &DynSeq) -> SeqStats {
    let averages: Vec<i64> = seq.stages.iter().map(|s| stage_average(s)).collect();
    let ranges = seq.stages.iter().map(|s| stage_range(s)).collect();
    let rep_stages = seq
        .stages
        .iter()
        .zip(&averages)
        .map(|(s, &avg)| s.iter().map(|&v| v - avg).collect())
        .collect();
    let representative = DynSeq {
        stages: rep_stages,
        conformant: seq.conformant,
        rule: seq.rule.clone(),
    };
    let pathological_verdict = seq
        .rule
        .as_ref()
        .map_or(Pathology::UnknownOnPrefix, CutRule::pathology);
    SeqStats {
        averages,
        ranges,
        representative,
        pathological_verdict,
    }
}

/// Length-`k` window sums `s_i + ... + s_{i+k-1}` for `0 <= i < r - k`.
/// Windows never wrap; the last entry of the stage is never the start of
/// a window once `k >= 1`.
pub fn stage_partial_sums(stage: &[i64], k: usize) -> Vec<i64> {
    if k == 0 || k >= stage.len() {
        return Vec::new();
    }
    let count = stage.len() - k;
    let mut out = Vec::with_capacity(count);
    let mut acc: i64 = stage[..k].iter().sum();
    out.push(acc);
    for i in 1..count {
        acc += stage[i + k - 1] - stage[i - 1];
        out.push(acc);
    }
    out
}

/// The `k`-th partial-sum sequence plus the bookkeeping of dropped stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialSums {
    pub seq: DynSeq,
    /// Original stage index of each retained stage.
    pub stage_index: Vec<usize>,
    /// Stages with `r_n <= k`, which have no window.
    pub dropped: Vec<usize>,
}

impl PartialSums {
    pub fn is_empty(&self) -> bool {
        self.seq.depth() == 0
    }

    pub fn diagnostic(&self) -> Option<String> {
        if self.dropped.is_empty() {
            None
        } else {
            Some(format!(
                "stages {:?} have no window of the requested length",
                self.dropped
            ))
        }
    }
}

pub fn partial_sums(seq: &DynSeq, k: usize) -> Result<PartialSums> {
    if k == 0 {
        return precondition("partial sum window length must be positive");
    }
    let mut stages = Vec::new();
    let mut stage_index = Vec::new();
    let mut dropped = Vec::new();
    for (n, stage) in seq.stages.iter().enumerate() {
        if stage.len() <= k {
            dropped.push(n);
        } else {
            stages.push(stage_partial_sums(stage, k));
            stage_index.push(n);
        }
    }
    let seq = if seq.conformant {
        DynSeq::new(stages)?
    } else {
        DynSeq::relaxed(stages)?
    };
    Ok(PartialSums {
        seq,
        stage_index,
        dropped,
    })
}

/// Per-stage monotonicity report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub strictly_increasing: bool,
    pub nondecreasing: bool,
    /// `(1/r^2) #{(i, j) : |s_i - s_j| < M}`
    pub square_stat: ExactScalar,
    /// `(1/r) #{i : |s_i| < M}`
    pub weak_stat: ExactScalar,
}

/// Number of ordered pairs `(i, j)` with `|s_i - s_j| < m`.
pub fn close_pair_count(stage: &[i64], m: u64) -> u64 {
    let mut sorted = stage.to_vec();
    sorted.sort_unstable();
    let m = m as i128;
    // For each i, count j with sorted[j] in (sorted[i] - m, sorted[i] + m).
    let mut count = 0u64;
    let mut lo = 0usize;
    let mut hi = 0usize;
    for &v in &sorted {
        let v = v as i128;
        while (sorted[lo] as i128) <= v - m {
            lo += 1;
        }
        while hi < sorted.len() && (sorted[hi] as i128) < v + m {
            hi += 1;
        }
        count += (hi - lo) as u64;
    }
    count
}

pub fn classify_stage(stage: &[i64], m: u64) -> Result<MonotonicityReport> {
    if m == 0 {
        return precondition("M must be at least 1");
    }
    let r = stage.len() as u64;
    let strictly_increasing = stage.windows(2).all(|w| w[0] < w[1]);
    let nondecreasing = stage.windows(2).all(|w| w[0] <= w[1]);
    let pairs = close_pair_count(stage, m);
    let small = stage.iter().filter(|&&v| v.unsigned_abs() < m).count() as u64;
    Ok(MonotonicityReport {
        strictly_increasing,
        nondecreasing,
        square_stat: ExactScalar::new(pairs, r * r)?,
        weak_stat: ExactScalar::new(small, r)?,
    })
}

pub fn classify_monotonicity(seq: &DynSeq, m: u64) -> Result<Vec<MonotonicityReport>> {
    seq.stages.iter().map(|s| classify_stage(s, m)).collect()
}

/// Multiplicity function `R_n(l) = #{i : s_{n,i} = l}`.
pub fn multiplicity(seq: &DynSeq, n: usize) -> Result<BTreeMap<i64, u64>> {
    seq.check_stage(n)?;
    Ok(stage_multiplicity(seq.stage(n)))
}

pub fn stage_multiplicity(stage: &[i64]) -> BTreeMap<i64, u64> {
    let mut counts = BTreeMap::new();
    for &v in stage {
        *counts.entry(v).or_insert(0) += 1;
    }
    counts
}

/// True when `sub`'s multiplicities are dominated by `full`'s at every
/// stage and value.
pub fn subsequence_check(sub: &DynSeq, full: &DynSeq) -> Result<bool> {
    if sub.depth() != full.depth() {
        return precondition(format!(
            "depth mismatch: {} vs {}",
            sub.depth(),
            full.depth()
        ));
    }
    Ok(sub.stages.iter().zip(&full.stages).all(|(a, s)| {
        let full_counts = stage_multiplicity(s);
        stage_multiplicity(a)
            .iter()
            .all(|(v, c)| full_counts.get(v).is_some_and(|f| c <= f))
    }))
}

/// Per-stage densities; `None` where the stage is constant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDensity {
    pub density: Option<ExactScalar>,
    pub density_in_z: Option<ExactScalar>,
}

/// Summary of a per-stage series over a finite prefix. These are trends,
/// never limit claims.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixTrend {
    /// Value at the last defined stage.
    pub last: Option<ExactScalar>,
    /// Maximum over the second half of the defined stages.
    pub tail_max: Option<ExactScalar>,
    /// Minimum over the second half of the defined stages.
    pub tail_min: Option<ExactScalar>,
    pub caveat: String,
}

impl PrefixTrend {
    pub fn from_series<'a>(series: impl IntoIterator<Item = Option<&'a ExactScalar>>) -> Self {
        let defined: Vec<&ExactScalar> = series.into_iter().flatten().collect();
        let tail = &defined[defined.len() / 2..];
        PrefixTrend {
            last: defined.last().map(|&x| x.clone()),
            tail_max: tail.iter().max().map(|&x| x.clone()),
            tail_min: tail.iter().min().map(|&x| x.clone()),
            caveat: "prefix-only".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityReport {
    pub stages: Vec<StageDensity>,
    pub density_trend: PrefixTrend,
    pub density_in_z_trend: PrefixTrend,
}

pub fn stage_density(stage: &[i64]) -> StageDensity {
    let range = stage_range(stage);
    if range == 0 {
        return StageDensity {
            density: None,
            density_in_z: None,
        };
    }
    let distinct = stage.iter().collect::<BTreeSet<_>>().len() as u64;
    StageDensity {
        density: Some(ExactScalar::new(stage.len() as u64, range).expect("range > 0")),
        density_in_z: Some(ExactScalar::new(distinct, range).expect("range > 0")),
    }
}

pub fn densities(seq: &DynSeq) -> DensityReport {
    let stages: Vec<StageDensity> = seq.stages.iter().map(|s| stage_density(s)).collect();
    let density_trend = PrefixTrend::from_series(stages.iter().map(|s| s.density.as_ref()));
    let density_in_z_trend =
        PrefixTrend::from_series(stages.iter().map(|s| s.density_in_z.as_ref()));
    DensityReport {
        stages,
        density_trend,
        density_in_z_trend,
    }
}

/// Density of a subsequence inside its parent, `q_n / r_n` per stage.
pub fn subsequence_density(sub: &DynSeq, full: &DynSeq) -> Result<Vec<ExactScalar>> {
    if sub.depth() != full.depth() {
        return precondition("depth mismatch");
    }
    sub.stages
        .iter()
        .zip(&full.stages)
        .map(|(a, s)| ExactScalar::new(a.len() as u64, s.len() as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(stage: &[i64]) -> DynSeq {
        DynSeq::new(vec![stage.to_vec()]).unwrap()
    }

    fn q(s: &str) -> ExactScalar {
        s.parse().unwrap()
    }

    #[test]
    fn stats_examples() {
        let st = derive_stats(&one(&[0, 1, 2]));
        assert_eq!((st.averages[0], st.ranges[0]), (1, 2));
        assert_eq!(st.representative.stage(0), &[-1, 0, 1]);

        let st = derive_stats(&one(&[0, 0, 1]));
        assert_eq!(st.averages[0], 0);
        assert_eq!(st.representative.stage(0), &[0, 0, 1]);

        let st = derive_stats(&one(&[5, 5, 5]));
        assert_eq!((st.averages[0], st.ranges[0]), (5, 0));
        assert_eq!(st.representative.stage(0), &[0, 0, 0]);
    }

    #[test]
    fn negative_average_floors_down() {
        assert_eq!(stage_average(&[-1, 0]), -1);
    }

    #[test]
    fn partial_sum_examples() {
        let seq = one(&[0, 1, 2, 3]);
        assert_eq!(partial_sums(&seq, 2).unwrap().seq.stage(0), &[1, 3]);
        assert_eq!(partial_sums(&seq, 1).unwrap().seq.stage(0), &[0, 1, 2]);
        assert_eq!(partial_sums(&seq, 3).unwrap().seq.stage(0), &[3]);
        let empty = partial_sums(&seq, 4).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.dropped, vec![0]);
        assert!(empty.diagnostic().is_some());
        assert!(partial_sums(&seq, 0).is_err());
    }

    #[test]
    fn partial_sums_drop_short_stages() {
        let seq = DynSeq::new(vec![vec![1, 2], vec![1, 2, 3, 4]]).unwrap();
        let ps = partial_sums(&seq, 2).unwrap();
        assert_eq!(ps.dropped, vec![0]);
        assert_eq!(ps.stage_index, vec![1]);
        assert_eq!(ps.seq.stage(0), &[3, 5]);
    }

    #[test]
    fn monotonicity_examples() {
        let rep = classify_stage(&[0, 1, 2, 3, 4], 2).unwrap();
        assert!(rep.strictly_increasing);
        assert_eq!(rep.square_stat, q("13/25"));
        assert_eq!(rep.weak_stat, q("2/5"));

        let rep = classify_stage(&[0, 0, 0], 1).unwrap();
        assert!(!rep.strictly_increasing && rep.nondecreasing);
        assert_eq!(rep.square_stat, q("1"));
        assert_eq!(rep.weak_stat, q("1"));
        assert!(classify_stage(&[0], 0).is_err());
    }

    #[test]
    fn multiplicity_examples() {
        let m = multiplicity(&one(&[0, 1, 0]), 0).unwrap();
        assert_eq!(m, BTreeMap::from([(0, 2), (1, 1)]));
        let m = multiplicity(&one(&[7, 7, 7, 7]), 0).unwrap();
        assert_eq!(m, BTreeMap::from([(7, 4)]));
        assert!(multiplicity(&one(&[1]), 1).is_err());
    }

    #[test]
    fn subsequence_examples() {
        let full = one(&[0, 1, 0]);
        assert!(subsequence_check(&one(&[0, 1]), &full).unwrap());
        assert!(subsequence_check(&full, &full).unwrap());
        assert!(!subsequence_check(&one(&[1, 1]), &full).unwrap());
        let deeper = DynSeq::new(vec![vec![0], vec![0]]).unwrap();
        assert!(subsequence_check(&deeper, &full).is_err());
    }

    #[test]
    fn densities_examples() {
        let d = stage_density(&[0, 1, 2, 3, 4]);
        assert_eq!(d.density, Some(q("5/4")));
        assert_eq!(d.density_in_z, Some(q("5/4")));
        let d = stage_density(&[3, 3]);
        assert_eq!(d.density, None);
        let d = stage_density(&[0, 0, 2]);
        assert!(d.density_in_z.unwrap() <= d.density.unwrap());
    }

    #[test]
    fn staircase_partial_sum_density_tends_to_one_over_k() {
        let k = 3usize;
        let target = ExactScalar::ratio(1, k as i64);
        let mut prev_gap = None;
        for r in [50usize, 500, 5000] {
            let stage: Vec<i64> = (0..r as i64).collect();
            let ps = stage_partial_sums(&stage, k);
            let d = stage_density(&ps).density.unwrap();
            let gap = (&d - &target).abs();
            if let Some(p) = prev_gap {
                assert!(gap < p);
            }
            prev_gap = Some(gap);
        }
        assert!(prev_gap.unwrap() < ExactScalar::ratio(1, 1000));
    }

    #[test]
    fn pathology_examples() {
        assert_eq!(
            pathology_verdict(&CutRule::Constant { value: 2 }),
            Pathology::Pathological
        );
        assert_eq!(
            pathology_verdict(&CutRule::Affine { a: 1, b: 2 }),
            Pathology::NotPathological
        );
        assert_eq!(
            pathology_verdict(&CutRule::Explicit {
                values: vec![2, 3, 4]
            }),
            Pathology::UnknownOnPrefix
        );
        assert_eq!(
            pathology_verdict(&CutRule::DoublingMinusTwo),
            Pathology::NotPathological
        );
    }

    #[test]
    fn cut_rules_generate() {
        assert_eq!(
            CutRule::DoublingMinusTwo.generate(4).unwrap(),
            vec![2, 2, 6, 14]
        );
        assert_eq!(
            CutRule::Affine { a: 1, b: 2 }.generate(3).unwrap(),
            vec![2, 3, 4]
        );
        assert!(CutRule::Constant { value: 0 }.value(0).is_err());
        assert!(CutRule::Explicit { values: vec![2] }.value(1).is_err());
    }

    #[test]
    fn conformance_flag() {
        assert!(DynSeq::new(vec![vec![0, 1], vec![0]]).is_err());
        let relaxed = DynSeq::relaxed(vec![vec![0, 1], vec![0]]).unwrap();
        assert!(!relaxed.is_conformant());
        assert!(DynSeq::new(vec![vec![]]).is_err());
    }
}
