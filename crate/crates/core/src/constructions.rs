//! Generators for the named spacer families and the combinatorics of
//! random spacer counts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynseq::{CutRule, DynSeq};
use crate::error::{precondition, Error, Result};
use crate::numeric::ExactScalar;

/// How the spacers of each stage are produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpacerRule {
    Explicit {
        stages: Vec<Vec<i64>>,
    },
    /// `s_{n,i} = i`
    Staircase {},
    Zero {},
    /// `s_{n,i} = range_n + x_{n,i+1} - x_{n,i}` with uniform draws.
    Ornstein {
        ranges: CutRule,
        seed: u64,
    },
    /// `s_{n,0} = h_n`, all other spacers zero.
    Example52 {},
}

/// A cut-and-spacer recipe for a rank one tower.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub name: String,
    pub cuts: CutRule,
    pub spacers: SpacerRule,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// The generated data for one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSpacers {
    pub cut: u64,
    pub spacers: Vec<i64>,
    pub ornstein: Option<OrnsteinStage>,
}

impl Recipe {
    pub fn new(name: impl Into<String>, cuts: CutRule, spacers: SpacerRule, depth: usize) -> Self {
        let mut notes = Vec::new();
        if matches!(cuts, CutRule::DoublingMinusTwo) {
            notes.push("r_0 set to 2 because 2(2^0 - 1) = 0 is not a valid cut".to_string());
        }
        Recipe {
            name: name.into(),
            cuts,
            spacers,
            depth,
            notes,
        }
    }

    /// Binary odometer: two cuts, no spacers.
    pub fn odometer(depth: usize) -> Self {
        Self::new(
            "odometer",
            CutRule::Constant { value: 2 },
            SpacerRule::Zero {},
            depth,
        )
    }

    /// Chacon: three cuts, one spacer over the middle subcolumn.
    pub fn chacon(depth: usize) -> Self {
        Self::new(
            "chacon",
            CutRule::Constant { value: 3 },
            SpacerRule::Explicit {
                stages: vec![vec![0, 1, 0]; depth],
            },
            depth,
        )
    }

    pub fn staircase(cuts: CutRule, depth: usize) -> Self {
        Self::new("staircase", cuts, SpacerRule::Staircase {}, depth)
    }

    pub fn ornstein(cuts: CutRule, ranges: CutRule, seed: u64, depth: usize) -> Self {
        Self::new(
            "ornstein",
            cuts,
            SpacerRule::Ornstein { ranges, seed },
            depth,
        )
    }

    pub fn example52(depth: usize) -> Self {
        Self::new(
            "example52",
            CutRule::DoublingMinusTwo,
            SpacerRule::Example52 {},
            depth,
        )
    }

    /// Spacers for stage `n`, given the height `h_n` of the column being cut.
    pub fn stage(&self, n: usize, height: u64) -> Result<StageSpacers> {
        let cut = self.cuts.value(n)?;
        let r = usize::try_from(cut)
            .map_err(|_| Error::InvalidRecipe(format!("cut r_{n} = {cut} too large")))?;
        let mut ornstein = None;
        let spacers = match &self.spacers {
            SpacerRule::Explicit { stages } => {
                let stage = stages.get(n).ok_or_else(|| {
                    Error::InvalidRecipe(format!(
                        "explicit spacers have {} stages, stage {n} requested",
                        stages.len()
                    ))
                })?;
                if stage.len() != r {
                    return Err(Error::InvalidRecipe(format!(
                        "stage {n}: {} spacers for {cut} cuts",
                        stage.len()
                    )));
                }
                stage.clone()
            }
            SpacerRule::Staircase {} => (0..r as i64).collect(),
            SpacerRule::Zero {} => vec![0; r],
            SpacerRule::Ornstein { ranges, seed } => {
                let range = ranges.value(n)?;
                let st = ornstein_stage_from_seed(*seed, n, range, r)?;
                let spacers = st.spacers.clone();
                ornstein = Some(st);
                spacers
            }
            SpacerRule::Example52 {} => {
                let h = i64::try_from(height)
                    .map_err(|_| Error::InvalidRecipe(format!("h_{n} too large")))?;
                let mut s = vec![0; r];
                s[0] = h;
                s
            }
        };
        if let Some(i) = spacers.iter().position(|&s| s < 0) {
            return Err(Error::InvalidRecipe(format!(
                "stage {n}: spacer {i} is negative ({})",
                spacers[i]
            )));
        }
        Ok(StageSpacers {
            cut,
            spacers,
            ornstein,
        })
    }
}

/// Staircase spacers `(0, 1, ..., r_n - 1)` for each stage.
pub fn staircase(cuts: &CutRule, depth: usize) -> Result<DynSeq> {
    let stages = cuts
        .generate(depth)?
        .into_iter()
        .map(|r| (0..r as i64).collect())
        .collect();
    Ok(DynSeq::new(stages)?.with_rule(cuts.clone()))
}

/// One stage of a random-spacer sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrnsteinStage {
    pub range: u64,
    pub draws: Vec<i64>,
    pub spacers: Vec<i64>,
    /// ChaCha stream id and word position after drawing, for replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<StreamPosition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPosition {
    pub stream: u64,
    pub word_pos: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrnsteinSample {
    pub seed: u64,
    pub stages: Vec<OrnsteinStage>,
}

impl OrnsteinSample {
    pub fn to_dynseq(&self) -> Result<DynSeq> {
        DynSeq::new(self.stages.iter().map(|s| s.spacers.clone()).collect())
    }
}

/// Spacers from explicit draws: `s_i = range + x_{i+1} - x_i`, `x_r = x_0`.
pub fn ornstein_stage(range: u64, draws: Vec<i64>) -> Result<OrnsteinStage> {
    if range == 0 {
        return precondition("random spacer range must be at least 1");
    }
    if draws.is_empty() {
        return precondition("random spacer draws must be nonempty");
    }
    let half = (range / 2) as i64;
    if let Some(x) = draws.iter().find(|x| x.abs() > half) {
        return precondition(format!("draw {x} outside [-{half}, {half}]"));
    }
    let r = draws.len();
    let spacers = (0..r)
        .map(|i| range as i64 + draws[(i + 1) % r] - draws[i])
        .collect();
    Ok(OrnsteinStage {
        range,
        draws,
        spacers,
        stream: None,
    })
}

fn ornstein_stage_from_seed(seed: u64, n: usize, range: u64, r: usize) -> Result<OrnsteinStage> {
    if range == 0 {
        return Err(Error::InvalidRecipe(format!(
            "stage {n}: random spacer range must be at least 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    let half = (range / 2) as i64;
    let draws: Vec<i64> = (0..r).map(|_| rng.random_range(-half..=half)).collect();
    let mut st = ornstein_stage(range, draws)?;
    st.stream = Some(StreamPosition {
        stream: n as u64,
        word_pos: rng.get_word_pos(),
    });
    Ok(st)
}

/// Random-spacer sample for `depth` stages. Each stage reads its own
/// stream keyed by `(seed, n)`.
pub fn ornstein_generate(
    cuts: &CutRule,
    ranges: &CutRule,
    seed: u64,
    depth: usize,
) -> Result<OrnsteinSample> {
    let stages = (0..depth)
        .map(|n| {
            let r = cuts.value(n)? as usize;
            ornstein_stage_from_seed(seed, n, ranges.value(n)?, r)
        })
        .collect::<Result<_>>()?;
    Ok(OrnsteinSample { seed, stages })
}

/// Counts `C_{k,l} = #{1 <= i <= m - k : x_{i+k} - x_i = l}` for 1-based `x`.
pub fn lemma81_counts(x: &[i64], k: usize) -> Result<BTreeMap<i64, u64>> {
    let m = x.len();
    if k == 0 || k >= m {
        return precondition(format!("need 1 <= k < m, got k = {k}, m = {m}"));
    }
    let mut counts = BTreeMap::new();
    for i in 0..m - k {
        *counts.entry(x[i + k] - x[i]).or_insert(0) += 1;
    }
    Ok(counts)
}

fn check_event_params(h: u64, alpha: &ExactScalar, eps: &ExactScalar) -> Result<()> {
    if h == 0 {
        return precondition("H must be at least 1");
    }
    if *alpha <= ExactScalar::one() {
        return precondition(format!("alpha must exceed 1, got {alpha}"));
    }
    if *eps <= ExactScalar::zero() || *eps >= ExactScalar::one() {
        return precondition(format!("epsilon must lie in (0, 1), got {eps}"));
    }
    Ok(())
}

/// Largest window `k` constrained by the event: `floor((1 - eps) m)`.
fn max_window(m: usize, eps: &ExactScalar) -> usize {
    let bound = (ExactScalar::one() - eps) * ExactScalar::from(m);
    let k: u64 = bound.floor().try_into().unwrap_or(0);
    (k as usize).min(m.saturating_sub(1))
}

/// True iff `C_{k,l} <= (alpha / H)(m - k)` for all `1 <= k <= (1 - eps) m`
/// and every `l`.
pub fn lemma81_event(x: &[i64], h: u64, alpha: &ExactScalar, eps: &ExactScalar) -> Result<bool> {
    check_event_params(h, alpha, eps)?;
    Ok(event_holds(x, h, alpha, eps, &mut Vec::new()))
}

fn event_holds(
    x: &[i64],
    h: u64,
    alpha: &ExactScalar,
    eps: &ExactScalar,
    scratch: &mut Vec<u64>,
) -> bool {
    let m = x.len();
    let (min, max) = match (x.iter().min(), x.iter().max()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return true,
    };
    let span = (max - min) as usize;
    let ratio = alpha.checked_div(&ExactScalar::from(h)).expect("H >= 1");
    for k in 1..=max_window(m, eps) {
        let windows = m - k;
        // C <= ratio * windows  <=>  C <= floor(ratio * windows)
        let threshold = (&ratio * &ExactScalar::from(windows)).floor();
        let threshold: u64 = threshold.try_into().unwrap_or(u64::MAX);
        if threshold >= windows as u64 {
            continue;
        }
        scratch.clear();
        scratch.resize(2 * span + 1, 0);
        for i in 0..windows {
            let slot = (x[i + k] - x[i] + span as i64) as usize;
            scratch[slot] += 1;
            if scratch[slot] > threshold {
                return false;
            }
        }
    }
    true
}

/// Empirical probability, over `trials` uniform draws from
/// `{i : |i| <= H/2}^m`, that the count event holds.
pub fn lemma81_estimate(
    h: u64,
    m: usize,
    alpha: &ExactScalar,
    eps: &ExactScalar,
    trials: u64,
    seed: u64,
) -> Result<ExactScalar> {
    check_event_params(h, alpha, eps)?;
    if trials == 0 {
        return precondition("trials must be at least 1");
    }
    if m < 2 {
        return precondition("m must be at least 2");
    }
    let half = (h / 2) as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0i64; m];
    let mut scratch = Vec::new();
    let mut hits = 0u64;
    for _ in 0..trials {
        for v in x.iter_mut() {
            *v = rng.random_range(-half..=half);
        }
        if event_holds(&x, h, alpha, eps, &mut scratch) {
            hits += 1;
        }
    }
    ExactScalar::new(hits, trials)
}
