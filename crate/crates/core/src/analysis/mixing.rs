use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_margin, level_image_counts, weak_average};
use crate::error::{precondition, Result};
use crate::numeric::{Enclosure, ExactScalar};
use crate::tower::{LevelSet, Tower};

/// `μ(T^m A ∩ B) - μ(A)μ(B)`.
pub fn mixing_value(tower: &Tower, a: &LevelSet, b: &LevelSet, m: i64) -> Result<Enclosure> {
    let product = tower.measure(a) * tower.measure(b);
    Ok(tower.image_measure(a, b, m)?.sub_point(&product))
}

/// One mixing value per `m`, in input order.
pub fn mixing_profile(
    tower: &Tower,
    a: &LevelSet,
    b: &LevelSet,
    ms: &[i64],
) -> Result<Vec<(i64, Enclosure)>> {
    let (a_top, b_top) = (tower.refine_top(a)?, tower.refine_top(b)?);
    let product = tower.measure(a) * tower.measure(b);
    ms.par_iter()
        .map(|&m| {
            let (res, unres) = tower.image_counts(a_top.bits(), b_top.bits(), m)?;
            Ok((
                m,
                tower.count_enclosure(res, res + unres).sub_point(&product),
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoubleErgodicity {
    /// Smallest `n` with both certified lower bounds positive.
    pub found: Option<i64>,
    /// Number of times examined.
    pub examined: u64,
}

/// Smallest `1 <= n <= n_max` with `μ(T^n A ∩ A) > 0` and `μ(T^n A ∩ B) > 0` certified.
pub fn double_ergodicity_search(
    tower: &Tower,
    a: &LevelSet,
    b: &LevelSet,
    n_max: u64,
) -> Result<DoubleErgodicity> {
    if tower.measure(a).is_zero() || tower.measure(b).is_zero() {
        return precondition("both sets need positive measure");
    }
    let (a_top, b_top) = (tower.refine_top(a)?, tower.refine_top(b)?);
    let limit = n_max.min(tower.top_height() - 1);
    let mut examined = 0;
    for n in 1..=limit as i64 {
        examined += 1;
        let (aa, _) = tower.image_counts(a_top.bits(), a_top.bits(), n)?;
        if aa == 0 {
            continue;
        }
        let (ab, _) = tower.image_counts(a_top.bits(), b_top.bits(), n)?;
        if ab > 0 {
            return Ok(DoubleErgodicity {
                found: Some(n),
                examined,
            });
        }
    }
    Ok(DoubleErgodicity {
        found: None,
        examined,
    })
}

/// `Σ_{j < h_p} |μ(T^m I_{p,j} ∩ B) - μ(I_{p,j})μ(B)|` with `h_p <= m < h_{p+1}`.
pub fn uniform_mixing_sum(tower: &Tower, b: &LevelSet, m: i64, margin: usize) -> Result<Enclosure> {
    let n = tower.depth();
    let h = tower.top_height();
    if m < tower.height(0) as i64 || m as u64 >= h {
        return precondition(format!("m = {m} must lie in [h_0, h_N) = [1, {h})"));
    }
    let p = (0..=n)
        .rev()
        .find(|&p| tower.height(p) <= m as u64)
        .expect("h_0 <= m");
    check_margin(tower, p, margin)?;
    let b_top = tower.refine_top(b)?;
    let mu_b = tower.measure(b);
    let copies = tower.offsets_between(p, n);
    let mu_level = ExactScalar::new(copies.len() as u64, h)?;
    let product = &mu_level * &mu_b;
    let terms: Vec<Enclosure> = (0..tower.height(p))
        .into_par_iter()
        .map(|j| {
            let (res, unres) = level_image_counts(b_top.bits(), h, &copies, j, m);
            tower
                .count_enclosure(res, res + unres)
                .sub_point(&product)
                .abs()
        })
        .collect();
    Ok(terms.into_iter().sum())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem5Residual {
    pub stage: usize,
    pub residual: Enclosure,
    pub bound: ExactScalar,
    pub passes: bool,
}

fn residual_with(
    tower: &Tower,
    n: usize,
    a: &LevelSet,
    b: &LevelSet,
    margin: usize,
    time: u64,
    offsets: Vec<i64>,
) -> Result<Theorem5Residual> {
    if n >= tower.depth() {
        return precondition(format!("stage {n} must be below depth {}", tower.depth()));
    }
    check_margin(tower, n, margin)?;
    if a.stage() > n || b.stage() > n {
        return precondition(format!("sets must be unions of levels of column {n}"));
    }
    let mix = mixing_value(tower, a, b, time as i64)?;
    let weak = weak_average(tower, a, b, &offsets)?;
    let residual = (mix - weak).abs();
    let bound =
        ExactScalar::from(2u64) * tower.spacer_measure(n)? + ExactScalar::new(2u64, tower.cut(n))?;
    let passes = residual.lo() <= &bound;
    Ok(Theorem5Residual {
        stage: n,
        residual,
        bound,
        passes,
    })
}

/// `|mixing_value(A, B, h_n) - weak_average(A, B, -s_n)|` against `2μ(S_n) + 2/r_n`.
pub fn theorem5_residual(
    tower: &Tower,
    n: usize,
    a: &LevelSet,
    b: &LevelSet,
    margin: usize,
) -> Result<Theorem5Residual> {
    let offsets = tower.spacers(n).iter().map(|s| -s).collect();
    residual_with(tower, n, a, b, margin, tower.height(n), offsets)
}

/// Same check at time `w_n` with negated representative spacers.
pub fn theorem5_residual_window(
    tower: &Tower,
    n: usize,
    a: &LevelSet,
    b: &LevelSet,
    margin: usize,
) -> Result<Theorem5Residual> {
    if n >= tower.depth() {
        return precondition(format!("stage {n} must be below depth {}", tower.depth()));
    }
    let offsets = tower.representative_spacers(n).iter().map(|s| -s).collect();
    residual_with(tower, n, a, b, margin, tower.window_height(n), offsets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::Recipe;
    use crate::tower::BuildOptions;

    fn q(s: &str) -> ExactScalar {
        s.parse().unwrap()
    }

    fn enc(lo: &str, hi: &str) -> Enclosure {
        Enclosure::new(q(lo), q(hi)).unwrap()
    }

    fn odometer(depth: usize) -> Tower {
        Tower::build_with(&Recipe::odometer(depth), depth, BuildOptions::default()).unwrap()
    }

    #[test]
    fn mixing_value_examples() {
        let t = odometer(4);
        let all = t.whole(0).unwrap();
        assert_eq!(mixing_value(&t, &all, &all, 0).unwrap(), enc("0", "0"));
        let evens = t.level_set(1, [0]).unwrap();
        assert_eq!(
            mixing_value(&t, &evens, &evens, 2).unwrap(),
            enc("3/16", "1/4")
        );
    }

    #[test]
    fn odometer_rigidity_along_heights() {
        // lower bound is 1/4 - 2^(n - N - 1)
        let t = odometer(4);
        let evens = t.level_set(1, [0]).unwrap();
        let heights: Vec<i64> = (0..4).map(|n| t.height(n) as i64).collect();
        let rows = mixing_profile(&t, &evens, &evens, &heights).unwrap();
        let lows: Vec<ExactScalar> = rows.iter().map(|(_, e)| e.lo().clone()).collect();
        assert_eq!(lows, vec![q("-1/4"), q("3/16"), q("1/8"), q("0")]);
        assert_eq!(rows[1].1, mixing_value(&t, &evens, &evens, 2).unwrap());
        for (_, e) in &rows[1..] {
            assert!(e.lo() >= &(q("1/4") - q("1/8")) || e.lo() >= &q("0"));
        }
    }

    #[test]
    fn profile_single_row() {
        let t = odometer(3);
        let a = t.level_set(2, [0, 3]).unwrap();
        let b = t.level_set(2, [0, 1]).unwrap();
        let rows = mixing_profile(&t, &a, &b, &[0]).unwrap();
        assert_eq!(rows, vec![(0, enc("0", "0"))]);
    }

    #[test]
    fn double_ergodicity_examples() {
        let t = odometer(4);
        let evens = t.level_set(1, [0]).unwrap();
        let found = double_ergodicity_search(&t, &evens, &evens, 10).unwrap();
        assert_eq!(found.found, Some(2));
        assert_eq!(t.image_measure(&evens, &evens, 2).unwrap().lo(), &q("7/16"));
        let odds = t.level_set(1, [1]).unwrap();
        let none = double_ergodicity_search(&t, &evens, &odds, 10).unwrap();
        assert_eq!(
            none,
            DoubleErgodicity {
                found: None,
                examined: 10
            }
        );
    }

    #[test]
    fn uniform_mixing_examples() {
        let t = odometer(5);
        let all = t.whole(0).unwrap();
        let whole = uniform_mixing_sum(&t, &all, 4, 2).unwrap();
        assert_eq!(whole.lo(), &q("0"));
        let evens = t.level_set(1, [0]).unwrap();
        let rigid = uniform_mixing_sum(&t, &evens, 4, 2).unwrap();
        assert!(rigid.lo() >= &q("1/4"));
        let single = t.level_set(2, [1]).unwrap();
        let s = uniform_mixing_sum(&t, &single, 4, 2).unwrap();
        assert!(s.lo() <= &(q("2") * t.measure(&single)));
        assert!(uniform_mixing_sum(&t, &evens, 16, 2).is_err());
        assert!(uniform_mixing_sum(&t, &evens, 0, 2).is_err());
    }

    #[test]
    fn spacer_residual_on_odometer() {
        let t = odometer(4);
        let evens = t.level_set(1, [0]).unwrap();
        let r = theorem5_residual(&t, 1, &evens, &evens, 2).unwrap();
        assert_eq!(r.bound, q("1"));
        assert!(r.passes);
        // zero spacers: residual width is the unresolved mass of T^{h_n}
        assert_eq!(r.residual.lo(), &q("0"));
        let w = theorem5_residual_window(&t, 1, &evens, &evens, 2).unwrap();
        assert_eq!(w.passes, r.passes);
        assert!(theorem5_residual(&t, 3, &evens, &evens, 2).is_err());
    }
}
