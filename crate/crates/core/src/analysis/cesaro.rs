use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_margin, level_image_counts};
use crate::dynseq::{stage_partial_sums, DynSeq};
use crate::error::{precondition, Result};
use crate::numeric::{Enclosure, ExactScalar};
use crate::tower::{LevelSet, Tower};

/// Per-level values of `(1/r) Σ_i χ_B ∘ T^{-s_i}` on the top column, as
/// count ranges `[min, max] / r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelProfile {
    stage: usize,
    offsets: Vec<i64>,
    min: Vec<u32>,
    max: Vec<u32>,
}

impl LevelProfile {
    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    pub fn counts(&self, j: usize) -> (u32, u32) {
        (self.min[j], self.max[j])
    }

    pub fn value(&self, j: usize) -> Enclosure {
        let r = self.offsets.len() as u64;
        Enclosure::new(
            ExactScalar::new(self.min[j], r).expect("offsets nonempty"),
            ExactScalar::new(self.max[j], r).expect("offsets nonempty"),
        )
        .expect("min <= max")
    }

    pub fn is_exact_at(&self, j: usize) -> bool {
        self.min[j] == self.max[j]
    }

    /// Number of levels per distinct count range.
    pub fn histogram(&self) -> BTreeMap<(u32, u32), u64> {
        let mut hist = BTreeMap::new();
        for (&lo, &hi) in self.min.iter().zip(&self.max) {
            *hist.entry((lo, hi)).or_insert(0) += 1;
        }
        hist
    }
}

fn check_offsets(tower: &Tower, offsets: &[i64]) -> Result<()> {
    if offsets.is_empty() {
        return precondition("offset list is empty");
    }
    let h = tower.top_height();
    if let Some(s) = offsets.iter().find(|s| s.unsigned_abs() >= h) {
        return precondition(format!(
            "offset {s} must satisfy |s| < h_N = {h}; deepen the tower"
        ));
    }
    Ok(())
}

pub fn level_profile(tower: &Tower, b: &LevelSet, offsets: &[i64]) -> Result<LevelProfile> {
    check_offsets(tower, offsets)?;
    let h = tower.top_height() as i64;
    let b_top = tower.refine_top(b)?;
    let mut min = vec![0u32; h as usize];
    // out-of-column shifts per level, as a difference array
    let mut edges = vec![0i64; h as usize + 1];
    for &s in offsets {
        for i in b_top.bits().iter_ones() {
            let j = i as i64 + s;
            if (0..h).contains(&j) {
                min[j as usize] += 1;
            }
        }
        if s > 0 {
            edges[0] += 1;
            edges[s as usize] -= 1;
        } else if s < 0 {
            edges[(h + s) as usize] += 1;
            edges[h as usize] -= 1;
        }
    }
    let mut run = 0i64;
    let max = min
        .iter()
        .zip(&edges)
        .map(|(&lo, &e)| {
            run += e;
            lo + run as u32
        })
        .collect();
    Ok(LevelProfile {
        stage: tower.depth(),
        offsets: offsets.to_vec(),
        min,
        max,
    })
}

/// Enclosure of `Σ_j μ(level j) |f(j) - target|^q` for `q ∈ {1, 2}`.
pub fn functional_moment(
    profile: &LevelProfile,
    q: u32,
    target: &ExactScalar,
) -> Result<Enclosure> {
    if q != 1 && q != 2 {
        return precondition(format!("moment order must be 1 or 2, got {q}"));
    }
    if target.is_negative() || target > &ExactScalar::one() {
        return precondition(format!("target {target} must lie in [0, 1]"));
    }
    let r = profile.offsets.len() as u64;
    let h = profile.len() as u64;
    Ok(profile
        .histogram()
        .into_iter()
        .map(|((lo, hi), count)| {
            let v = Enclosure::new(
                ExactScalar::new(lo, r).unwrap(),
                ExactScalar::new(hi, r).unwrap(),
            )
            .unwrap()
            .sub_point(target)
            .abs();
            let v = if q == 2 { v.square() } else { v };
            v.scale(&ExactScalar::new(count, h).unwrap())
        })
        .sum())
}

/// `∫ |(1/r) Σ χ_B ∘ T^{-s_i} - μ(B)|^2`.
pub fn cesaro_value(tower: &Tower, b: &LevelSet, offsets: &[i64]) -> Result<Enclosure> {
    functional_moment(&level_profile(tower, b, offsets)?, 2, &tower.measure(b))
}

/// `(1/r^2) Σ_{i,j} μ(T^{s_i - s_j} B ∩ B) - μ(B)^2`.
pub fn pairwise_moment(tower: &Tower, b: &LevelSet, offsets: &[i64]) -> Result<Enclosure> {
    check_offsets(tower, offsets)?;
    let b_top = tower.refine_top(b)?;
    let mut diffs: BTreeMap<i64, u64> = BTreeMap::new();
    for &x in offsets {
        for &y in offsets {
            *diffs.entry(x - y).or_insert(0) += 1;
        }
    }
    let (mut lo, mut hi) = (0u64, 0u64);
    for (d, mult) in diffs {
        let (res, unres) = tower.image_counts(b_top.bits(), b_top.bits(), d)?;
        lo += mult * res;
        hi += mult * (res + unres);
    }
    let r2 = (offsets.len() * offsets.len()) as u64;
    let mu = tower.measure(b);
    let sum = tower
        .count_enclosure(lo, hi)
        .scale(&ExactScalar::new(1u64, r2)?);
    Ok(sum.sub_point(&(&mu * &mu)))
}

/// `(1/r) Σ_i μ(T^{s_i} A ∩ B) - μ(A)μ(B)`, forward images as written.
pub fn weak_average(
    tower: &Tower,
    a: &LevelSet,
    b: &LevelSet,
    offsets: &[i64],
) -> Result<Enclosure> {
    check_offsets(tower, offsets)?;
    let (a_top, b_top) = (tower.refine_top(a)?, tower.refine_top(b)?);
    let (mut lo, mut hi) = (0u64, 0u64);
    for &s in offsets {
        let (res, unres) = tower.image_counts(a_top.bits(), b_top.bits(), s)?;
        lo += res;
        hi += res + unres;
    }
    let avg = tower
        .count_enclosure(lo, hi)
        .scale(&ExactScalar::new(1u64, offsets.len() as u64)?);
    Ok(avg.sub_point(&(tower.measure(a) * tower.measure(b))))
}

/// `(1/r) Σ_i |μ(T^{s_i} A_i ∩ B) - μ(A_i)μ(B)|`; a single set is reused for every term.
pub fn absolute_average(
    tower: &Tower,
    a_list: &[LevelSet],
    b: &LevelSet,
    offsets: &[i64],
) -> Result<Enclosure> {
    check_offsets(tower, offsets)?;
    if a_list.len() != 1 && a_list.len() != offsets.len() {
        return precondition(format!(
            "{} sets for {} offsets; pass one set or one per offset",
            a_list.len(),
            offsets.len()
        ));
    }
    let b_top = tower.refine_top(b)?;
    let mu_b = tower.measure(b);
    let tops = a_list
        .iter()
        .map(|a| Ok((tower.refine_top(a)?, tower.measure(a) * &mu_b)))
        .collect::<Result<Vec<_>>>()?;
    let mut total = Enclosure::zero();
    for (i, &s) in offsets.iter().enumerate() {
        let (a_top, product) = &tops[if tops.len() == 1 { 0 } else { i }];
        let (res, unres) = tower.image_counts(a_top.bits(), b_top.bits(), s)?;
        total = total
            + tower
                .count_enclosure(res, res + unres)
                .sub_point(product)
                .abs();
    }
    Ok(total.scale(&ExactScalar::new(1u64, offsets.len() as u64)?))
}

/// Window length for a fraction of `r`: `floor(frac·r)` clamped to `[1, r - 1]`.
pub fn fraction_to_window(frac: &ExactScalar, r: u64) -> Result<usize> {
    if r < 2 {
        return precondition(format!("r = {r} admits no window 1 <= k < r"));
    }
    let k: u64 = (frac * &ExactScalar::from(r))
        .floor()
        .try_into()
        .unwrap_or(0);
    Ok(k.clamp(1, r - 1) as usize)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub fraction: ExactScalar,
    pub offsets: usize,
    pub value: Enclosure,
}

/// L² Cesàro value of each window-`k` partial-sum stage. `k = 0` uses the
/// stage itself.
pub fn uniform_ergodicity_sweep(
    tower: &Tower,
    seq: &DynSeq,
    n: usize,
    b: &LevelSet,
    ks: &[usize],
) -> Result<Vec<SweepRow>> {
    if n >= seq.depth() {
        return precondition(format!("stage {n} beyond sequence depth {}", seq.depth()));
    }
    let stage = seq.stage(n);
    let r = stage.len();
    if let Some(k) = ks.iter().find(|&&k| k >= r) {
        return precondition(format!("window {k} must be below r_{n} = {r}"));
    }
    ks.par_iter()
        .map(|&k| {
            let offsets = if k == 0 {
                stage.to_vec()
            } else {
                stage_partial_sums(stage, k)
            };
            Ok(SweepRow {
                k,
                fraction: ExactScalar::new(k as u64, r as u64)?,
                offsets: offsets.len(),
                value: cesaro_value(tower, b, &offsets)?,
            })
        })
        .collect()
}

/// `Σ_{j < h_p} |(1/r) Σ_i μ(T^{-s_i} I_{p,j} ∩ B) - μ(I_{p,j})μ(B)|`.
pub fn prop56_sum(
    tower: &Tower,
    offsets: &[i64],
    b: &LevelSet,
    p: usize,
    margin: usize,
) -> Result<Enclosure> {
    check_offsets(tower, offsets)?;
    check_margin(tower, p, margin)?;
    let n = tower.depth();
    let h = tower.top_height();
    let b_top = tower.refine_top(b)?;
    let copies = tower.offsets_between(p, n);
    let r = offsets.len() as u64;
    let product = ExactScalar::new(copies.len() as u64, h)? * tower.measure(b);
    let terms: Vec<Enclosure> = (0..tower.height(p))
        .into_par_iter()
        .map(|j| {
            let (mut lo, mut hi) = (0u64, 0u64);
            for &s in offsets {
                let (res, unres) = level_image_counts(b_top.bits(), h, &copies, j, -s);
                lo += res;
                hi += res + unres;
            }
            tower
                .count_enclosure(lo, hi)
                .scale(&ExactScalar::new(1u64, r).unwrap())
                .sub_point(&product)
                .abs()
        })
        .collect();
    Ok(terms.into_iter().sum())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLemma {
    pub lhs: Enclosure,
    pub rhs: Enclosure,
    pub slack: ExactScalar,
    pub holds: bool,
}

/// L¹ deviation of the length-`R` average against the step-`step`, length-`L`
/// average, with slack `step·L/R`.
pub fn block_lemma_check(
    tower: &Tower,
    b: &LevelSet,
    big_r: u64,
    big_l: u64,
    step: u64,
) -> Result<BlockLemma> {
    if big_r == 0 || big_l == 0 || step == 0 {
        return precondition("R, L and step must be positive");
    }
    let h = tower.top_height();
    if big_r >= h || step * big_l >= h {
        return precondition(format!("R and step·L must be below h_N = {h}"));
    }
    let mu = tower.measure(b);
    let lhs_offsets: Vec<i64> = (0..big_r as i64).collect();
    let rhs_offsets: Vec<i64> = (0..big_l as i64).map(|i| i * step as i64).collect();
    let lhs = functional_moment(&level_profile(tower, b, &lhs_offsets)?, 1, &mu)?;
    let rhs = functional_moment(&level_profile(tower, b, &rhs_offsets)?, 1, &mu)?;
    let slack = ExactScalar::new(step * big_l, big_r)?;
    let holds = lhs.lo() <= &(rhs.hi() + &slack);
    Ok(BlockLemma {
        lhs,
        rhs,
        slack,
        holds,
    })
}
