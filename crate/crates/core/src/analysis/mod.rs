//! Certified functionals over a built tower: correlations, Cesàro averages,
//! uniform-mixing sums and growth statistics.

mod cesaro;
mod growth;
mod mixing;

pub use cesaro::{
    absolute_average, block_lemma_check, cesaro_value, fraction_to_window, functional_moment,
    level_profile, pairwise_moment, prop56_sum, uniform_ergodicity_sweep, weak_average, BlockLemma,
    LevelProfile, SweepRow,
};
pub use growth::{decompose_time, restricted_growth_stat, TimeDecomposition};
pub use mixing::{
    double_ergodicity_search, mixing_profile, mixing_value, theorem5_residual,
    theorem5_residual_window, uniform_mixing_sum, DoubleErgodicity, Theorem5Residual,
};

use crate::error::{precondition, Result};
use crate::tower::Tower;

/// Stages kept between a query stage and the tower depth.
pub const DEFAULT_MARGIN: usize = 2;

pub(crate) fn check_margin(tower: &Tower, stage: usize, margin: usize) -> Result<()> {
    if stage + margin > tower.depth() {
        return precondition(format!(
            "stage {stage} plus margin {margin} exceeds depth {}; deepen the tower",
            tower.depth()
        ));
    }
    Ok(())
}

/// `(resolved, unresolved)` counts of `T^m(I) ∩ B` where `I` is level `j` of a
/// lower column whose copies start at `copies` in the top column.
pub(crate) fn level_image_counts(
    b_top: &crate::bitset::LevelBits,
    height: u64,
    copies: &[u64],
    j: u64,
    m: i64,
) -> (u64, u64) {
    let mut res = 0;
    let mut unres = 0;
    for &o in copies {
        let t = (j + o) as i64 + m;
        if t < 0 || t >= height as i64 {
            unres += 1;
        } else if b_top.get(t as usize) {
            res += 1;
        }
    }
    (res, unres)
}
