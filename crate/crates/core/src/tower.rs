//! The cutting-and-stacking engine.
//!
//! Every stage keeps a geometric realization: level `j` of column `n` is the
//! interval `[slot·width_n, (slot+1)·width_n)` for an integer slot, and the
//! slots of a column are a permutation of `0..h_n`. Level index arithmetic
//! (fast path) and the slot geometry are built independently so each can
//! check the other.

use serde::{Deserialize, Serialize};

use crate::bitset::{shifted_and_count, LevelBits, RunLength};
use crate::constructions::{ornstein_stage, OrnsteinStage, Recipe, SpacerRule};
use crate::dynseq::{stage_average, CutRule, DynSeq};
use crate::error::{precondition, Error, Result};
use crate::numeric::{Enclosure, ExactScalar};

pub const DEFAULT_MAX_HEIGHT: u64 = 1 << 24;
/// Environment variable overriding the height budget.
pub const MAX_HEIGHT_ENV: &str = "R1LAB_MAX_HEIGHT";

pub const SNAPSHOT_FORMAT: &str = "r1lab-tower";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub max_height: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            max_height: DEFAULT_MAX_HEIGHT,
        }
    }
}

impl BuildOptions {
    /// Default budget, overridden by `R1LAB_MAX_HEIGHT` when set.
    pub fn from_env() -> Result<Self> {
        match std::env::var(MAX_HEIGHT_ENV) {
            Ok(v) => {
                let max_height = v.trim().parse().map_err(|_| {
                    Error::Parse(format!("{MAX_HEIGHT_ENV}={v:?} is not a positive integer"))
                })?;
                Ok(BuildOptions { max_height })
            }
            Err(_) => Ok(Self::default()),
        }
    }
}

#[derive(Debug, Clone)]
struct Column {
    height: u64,
    width: ExactScalar,
    /// Slot of each level, in units of `width`.
    slots: Vec<u32>,
    /// Level occupying each slot.
    levels: Vec<u32>,
}

/// A union of levels of one column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSet {
    stage: usize,
    bits: LevelBits,
}

impl LevelSet {
    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn bits(&self) -> &LevelBits {
        &self.bits
    }

    pub fn count(&self) -> u64 {
        self.bits.count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.bits.iter_ones().collect()
    }

    pub fn to_run_length(&self) -> RunLength {
        RunLength::from(&self.bits)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub checked: u64,
    pub passed: u64,
}

impl std::fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {}/{} identities pass",
            self.name, self.passed, self.checked
        )
    }
}

/// A finite-depth rank one tower. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Tower {
    recipe: Recipe,
    columns: Vec<Column>,
    cuts: Vec<u64>,
    spacers: Vec<Vec<i64>>,
    /// `S_n` as a set of levels of column `n + 1`.
    spacer_sets: Vec<LevelBits>,
    ornstein: Vec<OrnsteinStage>,
    warnings: Vec<String>,
}

/// Running total of `sum_i s_{n,i} / h_{n+1}` above which a warning is kept.
const SPACER_RATIO_WARNING: i64 = 2;

impl Tower {
    pub fn build(recipe: &Recipe) -> Result<Self> {
        Self::build_with(recipe, recipe.depth, BuildOptions::from_env()?)
    }

    pub fn build_with(recipe: &Recipe, depth: usize, opts: BuildOptions) -> Result<Self> {
        let max_height = opts.max_height.min(u32::MAX as u64);
        let mut recipe = recipe.clone();
        recipe.depth = depth;
        let mut columns = vec![Column {
            height: 1,
            width: ExactScalar::one(),
            slots: vec![0],
            levels: vec![0],
        }];
        let mut cuts = Vec::with_capacity(depth);
        let mut spacers = Vec::with_capacity(depth);
        let mut spacer_sets = Vec::with_capacity(depth);
        let mut ornstein = Vec::new();
        let mut warnings = Vec::new();
        let mut ratio_total = ExactScalar::zero();
        let mut warned = false;

        for n in 0..depth {
            let prev = &columns[n];
            let h = prev.height;
            let stage = recipe.stage(n, h)?;
            let r = stage.cut;
            let added: u64 = stage.spacers.iter().map(|&s| s as u64).sum();
            let next_h = r
                .checked_mul(h)
                .and_then(|v| v.checked_add(added))
                .unwrap_or(u64::MAX);
            if next_h > max_height {
                return Err(Error::BudgetExceeded {
                    stage: n + 1,
                    height: next_h,
                    limit: max_height,
                });
            }

            let mut slots = Vec::with_capacity(next_h as usize);
            let mut is_spacer = LevelBits::new(next_h as usize);
            let mut frontier = h * r;
            for (i, &s) in stage.spacers.iter().enumerate() {
                for &slot in &prev.slots {
                    slots.push((slot as u64 * r + i as u64) as u32);
                }
                for _ in 0..s {
                    is_spacer.set(slots.len());
                    slots.push(frontier as u32);
                    frontier += 1;
                }
            }
            let mut levels = vec![u32::MAX; next_h as usize];
            for (j, &slot) in slots.iter().enumerate() {
                match levels.get_mut(slot as usize) {
                    Some(l) if *l == u32::MAX => *l = j as u32,
                    _ => {
                        return Err(Error::ConstructionBug(format!(
                            "stage {}: slot {slot} reused or out of range",
                            n + 1
                        )))
                    }
                }
            }

            ratio_total = ratio_total + ExactScalar::new(added, next_h)?;
            if !warned && ratio_total > ExactScalar::from(SPACER_RATIO_WARNING as u64) {
                warned = true;
                warnings.push(format!(
                    "stage {n}: accumulated spacer ratio sum_i s/h_(n+1) = {ratio_total} exceeds \
                     {SPACER_RATIO_WARNING}; total measure may not stay finite"
                ));
            }

            let width = prev.width.checked_div(&ExactScalar::from(r))?;
            if let Some(o) = stage.ornstein {
                ornstein.push(o);
            }
            cuts.push(r);
            spacers.push(stage.spacers);
            spacer_sets.push(is_spacer);
            columns.push(Column {
                height: next_h,
                width,
                slots,
                levels,
            });
        }

        Ok(Tower {
            recipe,
            columns,
            cuts,
            spacers,
            spacer_sets,
            ornstein,
            warnings,
        })
    }

    pub fn recipe(&self) -> &Recipe {
        &self.recipe
    }

    pub fn depth(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn height(&self, n: usize) -> u64 {
        self.columns[n].height
    }

    pub fn top_height(&self) -> u64 {
        self.height(self.depth())
    }

    pub fn heights(&self) -> Vec<u64> {
        self.columns.iter().map(|c| c.height).collect()
    }

    pub fn cut(&self, n: usize) -> u64 {
        self.cuts[n]
    }

    pub fn cuts(&self) -> &[u64] {
        &self.cuts
    }

    pub fn spacers(&self, n: usize) -> &[i64] {
        &self.spacers[n]
    }

    /// Stage spacers as a dynamical sequence (cuts need not be monotone).
    pub fn spacer_seq(&self) -> Result<DynSeq> {
        DynSeq::relaxed(self.spacers.clone())
    }

    /// `w_n = h_n + floor(mean spacer)`, defined for `n < depth`.
    pub fn window_height(&self, n: usize) -> u64 {
        (self.height(n) as i64 + stage_average(&self.spacers[n])) as u64
    }

    pub fn window_heights(&self) -> Vec<u64> {
        (0..self.depth()).map(|n| self.window_height(n)).collect()
    }

    /// Representative spacers `s_{n,i} - floor(mean)`.
    pub fn representative_spacers(&self, n: usize) -> Vec<i64> {
        let avg = stage_average(&self.spacers[n]);
        self.spacers[n].iter().map(|s| s - avg).collect()
    }

    pub fn width(&self, n: usize) -> &ExactScalar {
        &self.columns[n].width
    }

    /// Lebesgue measure of column `n`.
    pub fn leb_column(&self, n: usize) -> ExactScalar {
        ExactScalar::from(self.height(n)) * self.width(n)
    }

    pub fn leb_top(&self) -> ExactScalar {
        self.leb_column(self.depth())
    }

    pub fn ornstein(&self) -> &[OrnsteinStage] {
        &self.ornstein
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Left endpoint of level `j` of column `n`.
    pub fn level_base(&self, n: usize, j: usize) -> ExactScalar {
        let c = &self.columns[n];
        ExactScalar::from(c.slots[j] as u64) * &c.width
    }

    /// Start index of each subcolumn copy of column `n` inside column `n + 1`.
    pub fn copy_offsets(&self, n: usize) -> Vec<u64> {
        let h = self.height(n);
        let mut acc = 0u64;
        self.spacers[n]
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let o = i as u64 * h + acc;
                acc += s as u64;
                o
            })
            .collect()
    }

    /// Start indices, in increasing order, of the copies of column `n` inside column `to`.
    pub fn offsets_between(&self, n: usize, to: usize) -> Vec<u64> {
        let mut cur = vec![0u64];
        for z in n..to {
            let offs = self.copy_offsets(z);
            cur = offs
                .iter()
                .flat_map(|&o| cur.iter().map(move |&c| o + c))
                .collect();
        }
        cur
    }

    /// Index in column `n + 1` of subcolumn `i` of level `j` of column `n`, by index arithmetic.
    pub fn sublevel_index(&self, n: usize, j: u64, i: usize) -> u64 {
        let prefix: i64 = self.spacers[n][..i].iter().sum();
        j + i as u64 * self.height(n) + prefix as u64
    }

    /// The same index, read off the slot geometry.
    pub fn sublevel_index_geometric(&self, n: usize, j: usize, i: usize) -> u64 {
        let slot = self.columns[n].slots[j] as u64 * self.cuts[n] + i as u64;
        self.columns[n + 1].levels[slot as usize] as u64
    }

    fn check_stage(&self, stage: usize) -> Result<()> {
        if stage > self.depth() {
            return precondition(format!("stage {stage} exceeds depth {}", self.depth()));
        }
        Ok(())
    }

    pub fn level_set(
        &self,
        stage: usize,
        indices: impl IntoIterator<Item = usize>,
    ) -> Result<LevelSet> {
        self.check_stage(stage)?;
        let h = self.height(stage) as usize;
        let bits = LevelBits::from_indices(h, indices).ok_or_else(|| {
            Error::Precondition(format!(
                "level index out of range for stage {stage} (h = {h})"
            ))
        })?;
        Ok(LevelSet { stage, bits })
    }

    pub fn level_set_from_bits(&self, stage: usize, bits: LevelBits) -> Result<LevelSet> {
        self.check_stage(stage)?;
        if bits.len() as u64 != self.height(stage) {
            return precondition(format!(
                "bitset length {} does not match h_{stage}",
                bits.len()
            ));
        }
        Ok(LevelSet { stage, bits })
    }

    pub fn whole(&self, stage: usize) -> Result<LevelSet> {
        self.check_stage(stage)?;
        Ok(LevelSet {
            stage,
            bits: LevelBits::full(self.height(stage) as usize),
        })
    }

    /// `S_n`, as a set of levels of column `n + 1`.
    pub fn spacer_levels(&self, n: usize) -> Result<LevelSet> {
        if n >= self.depth() {
            return precondition(format!(
                "spacer stage {n} must be below depth {}",
                self.depth()
            ));
        }
        Ok(LevelSet {
            stage: n + 1,
            bits: self.spacer_sets[n].clone(),
        })
    }

    fn refine_once(&self, bits: &LevelBits, n: usize) -> LevelBits {
        let mut out = LevelBits::new(self.height(n + 1) as usize);
        for o in self.copy_offsets(n) {
            out.or_shifted_from(bits, o as usize);
        }
        out
    }

    /// The same point set as levels of column `target`.
    pub fn refine(&self, ls: &LevelSet, target: usize) -> Result<LevelSet> {
        self.check_stage(target)?;
        if target < ls.stage {
            return precondition(format!("cannot refine stage {} down to {target}", ls.stage));
        }
        let mut bits = ls.bits.clone();
        for n in ls.stage..target {
            bits = self.refine_once(&bits, n);
        }
        Ok(LevelSet {
            stage: target,
            bits,
        })
    }

    pub fn refine_top(&self, ls: &LevelSet) -> Result<LevelSet> {
        self.refine(ls, self.depth())
    }

    /// Normalized measure `leb(ls) / leb(C_N)`.
    pub fn measure(&self, ls: &LevelSet) -> ExactScalar {
        ExactScalar::from(ls.count())
            * self.width(ls.stage)
            * self
                .leb_top()
                .recip()
                .expect("columns have positive measure")
    }

    /// Normalized measure of `S_n`.
    pub fn spacer_measure(&self, n: usize) -> Result<ExactScalar> {
        Ok(self.measure(&self.spacer_levels(n)?))
    }

    /// Resolved and unresolved counts of `T^m(A) ∩ B` for sets of the top column.
    pub fn image_counts(&self, a: &LevelBits, b: &LevelBits, m: i64) -> Result<(u64, u64)> {
        let h = self.top_height();
        if m.unsigned_abs() >= h {
            return precondition(format!(
                "|m| = {} must be below h_N = {h}; deepen the tower",
                m.abs()
            ));
        }
        let resolved = shifted_and_count(a, b, m);
        let h = h as usize;
        let unresolved = if m >= 0 {
            a.count_range(h - m as usize, h)
        } else {
            a.count_range(0, m.unsigned_abs() as usize)
        };
        Ok((resolved, unresolved))
    }

    /// Enclosure of `μ(T^m(A) ∩ B)`. Sets are refined to the top column first.
    pub fn image_measure(&self, a: &LevelSet, b: &LevelSet, m: i64) -> Result<Enclosure> {
        let (a, b) = (self.refine_top(a)?, self.refine_top(b)?);
        let (res, unres) = self.image_counts(&a.bits, &b.bits, m)?;
        Ok(self.count_enclosure(res, res + unres))
    }

    /// `[lo, hi] / h_N`.
    pub fn count_enclosure(&self, lo: u64, hi: u64) -> Enclosure {
        let h = self.top_height();
        Enclosure::new(
            ExactScalar::new(lo, h).expect("positive height"),
            ExactScalar::new(hi, h).expect("positive height"),
        )
        .expect("lo <= hi")
    }

    /// Level of column `n` containing `x`, or `None` outside the column.
    pub fn locate(&self, n: usize, x: &ExactScalar) -> Option<usize> {
        if x.is_negative() {
            return None;
        }
        let c = &self.columns[n];
        let slot: u64 = x.checked_div(&c.width).ok()?.floor().try_into().ok()?;
        c.levels.get(slot as usize).map(|&l| l as usize)
    }

    /// `T^steps x` under the top column map, or `None` when the orbit leaves the column.
    pub fn point_orbit(&self, x: &ExactScalar, steps: i64) -> Result<Option<ExactScalar>> {
        let n = self.depth();
        let j = self
            .locate(n, x)
            .ok_or_else(|| Error::Precondition(format!("point {x} lies outside C_{n}")))?;
        let target = j as i64 + steps;
        if target < 0 || target >= self.top_height() as i64 {
            return Ok(None);
        }
        Ok(Some(
            self.level_base(n, target as usize) + (x - self.level_base(n, j)),
        ))
    }

    /// Sublevel index arithmetic against the slot geometry, at every stage.
    pub fn verify_lemma_5_1(&self) -> Result<IdentityReport> {
        let mut checked = 0;
        for n in 0..self.depth() {
            for j in 0..self.height(n) as usize {
                for i in 0..self.cuts[n] as usize {
                    checked += 1;
                    let fast = self.sublevel_index(n, j as u64, i);
                    let geo = self.sublevel_index_geometric(n, j, i);
                    if fast != geo {
                        return Err(Error::ConstructionBug(format!(
                            "sublevel (n={n}, j={j}, i={i}): index arithmetic gives {fast}, geometry gives {geo}"
                        )));
                    }
                }
            }
        }
        Ok(IdentityReport {
            name: "sublevel embedding".into(),
            checked,
            passed: checked,
        })
    }

    /// Adjacent sublevels differ by `h_n + s_{n,i}`, equivalently `w_n + ŝ_{n,i}`.
    /// Indices are read from the slot geometry.
    pub fn verify_lemma_5_2(&self) -> Result<IdentityReport> {
        let mut checked = 0;
        for n in 0..self.depth() {
            let h = self.height(n) as i64;
            let w = self.window_height(n) as i64;
            let rep = self.representative_spacers(n);
            for j in 0..h as usize {
                for i in 0..self.cuts[n] as usize - 1 {
                    checked += 1;
                    let here = self.sublevel_index_geometric(n, j, i) as i64;
                    let next = self.sublevel_index_geometric(n, j, i + 1) as i64;
                    let by_height = here + h + self.spacers[n][i];
                    let by_window = here + w + rep[i];
                    if by_height != next || by_window != next {
                        return Err(Error::ConstructionBug(format!(
                            "sublevel (n={n}, j={j}, i={i}): index {here} + h + s = {by_height}, \
                             index + w + ŝ = {by_window}, next sublevel is {next}"
                        )));
                    }
                }
            }
        }
        Ok(IdentityReport {
            name: "sublevel shift".into(),
            checked,
            passed: checked,
        })
    }

    /// Per-stage recursions plus the partition of each column into the
    /// previous column and its spacers.
    pub fn verify_structure(&self) -> Result<IdentityReport> {
        let mut checked = 0;
        let bug = |msg: String| Err(Error::ConstructionBug(msg));
        for n in 0..self.depth() {
            let (h, r) = (self.height(n), self.cuts[n]);
            let sum: i64 = self.spacers[n].iter().sum();
            checked += 1;
            if self.height(n + 1) != r * h + sum as u64 {
                return bug(format!(
                    "h_{} = {} != r h + sum s",
                    n + 1,
                    self.height(n + 1)
                ));
            }
            checked += 1;
            let mean = stage_average(&self.spacers[n]);
            if self.window_height(n) as i64 != h as i64 + mean {
                return bug(format!("w_{n} mismatch"));
            }
            checked += 1;
            let refined = self.refine_once(&LevelBits::full(h as usize), n);
            let spacer = &self.spacer_sets[n];
            let mut union = refined.clone();
            union.union_with(spacer);
            if refined.intersect_count(spacer) != 0 || union.count() != self.height(n + 1) {
                return bug(format!(
                    "column {} is not partitioned by C_{n} and S_{n}",
                    n + 1
                ));
            }
            checked += 1;
            let leb_s = ExactScalar::from(spacer.count()) * self.width(n + 1);
            if leb_s != ExactScalar::from(sum) * self.width(n + 1)
                || self.leb_column(n + 1) != self.leb_column(n) + leb_s
            {
                return bug(format!("spacer measure mismatch at stage {n}"));
            }
        }
        Ok(IdentityReport {
            name: "structure".into(),
            checked,
            passed: checked,
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            recipe: self.recipe.clone(),
            depth: self.depth(),
            heights: self.heights(),
            window_heights: self.window_heights(),
            widths: self.columns.iter().map(|c| c.width.clone()).collect(),
            cuts: self.cuts.clone(),
            spacers: self.spacers.clone(),
            spacer_sets: self.spacer_sets.iter().map(RunLength::from).collect(),
            ornstein: self.ornstein.clone(),
            warnings: self.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.snapshot()).expect("snapshot serializes")
    }

    /// Rebuilds from the stored cuts and spacers (no generator needed) and
    /// checks every stored field against the rebuilt tower.
    pub fn from_snapshot(snap: Snapshot, opts: BuildOptions) -> Result<Self> {
        let bad = |msg: String| Err(Error::Snapshot(msg));
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return bad(format!(
                "unsupported snapshot {} v{} (expected {SNAPSHOT_FORMAT} v{SNAPSHOT_VERSION})",
                snap.format, snap.version
            ));
        }
        if snap.cuts.len() != snap.depth || snap.spacers.len() != snap.depth {
            return bad("cuts/spacers length does not match depth".into());
        }
        let replay = Recipe {
            name: snap.recipe.name.clone(),
            cuts: CutRule::Explicit {
                values: snap.cuts.clone(),
            },
            spacers: SpacerRule::Explicit {
                stages: snap.spacers.clone(),
            },
            depth: snap.depth,
            notes: Vec::new(),
        };
        let mut tower = Self::build_with(&replay, snap.depth, opts)?;
        if tower.heights() != snap.heights {
            return bad("stored heights disagree with the rebuilt tower".into());
        }
        if tower.window_heights() != snap.window_heights {
            return bad("stored window heights disagree with the rebuilt tower".into());
        }
        if tower
            .columns
            .iter()
            .map(|c| &c.width)
            .ne(snap.widths.iter())
        {
            return bad("stored widths disagree with the rebuilt tower".into());
        }
        for (n, rl) in snap.spacer_sets.iter().enumerate() {
            if rl.to_bits().as_ref() != tower.spacer_sets.get(n) {
                return bad(format!(
                    "stored spacer set {n} disagrees with the rebuilt tower"
                ));
            }
        }
        for (n, o) in snap.ornstein.iter().enumerate() {
            let replayed = ornstein_stage(o.range, o.draws.clone())
                .map_err(|e| Error::Snapshot(format!("stored random draws at stage {n}: {e}")))?;
            if replayed.spacers != o.spacers || tower.spacers.get(n) != Some(&o.spacers) {
                return bad(format!(
                    "stored random draws at stage {n} do not reproduce the spacers"
                ));
            }
        }
        tower.recipe = snap.recipe;
        tower.ornstein = snap.ornstein;
        tower.warnings = snap.warnings;
        Ok(tower)
    }

    pub fn from_json(json: &str, opts: BuildOptions) -> Result<Self> {
        let snap: Snapshot =
            serde_json::from_str(json).map_err(|e| Error::Snapshot(e.to_string()))?;
        Self::from_snapshot(snap, opts)
    }
}

/// Versioned JSON form of a tower.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub recipe: Recipe,
    pub depth: usize,
    pub heights: Vec<u64>,
    pub window_heights: Vec<u64>,
    pub widths: Vec<ExactScalar>,
    pub cuts: Vec<u64>,
    pub spacers: Vec<Vec<i64>>,
    pub spacer_sets: Vec<RunLength>,
    #[serde(default)]
    pub ornstein: Vec<OrnsteinStage>,
    #[serde(default)]
    pub warnings: Vec<String>,
}
