//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use r1lab::constructions::Recipe;
use r1lab::dynseq::CutRule;
use r1lab::tower::{BuildOptions, LevelSet, Tower};
use r1lab::ExactScalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn q(s: &str) -> ExactScalar {
    s.parse().unwrap()
}

pub fn build(recipe: &Recipe) -> Tower {
    Tower::build_with(recipe, recipe.depth, BuildOptions::default()).unwrap()
}

pub fn ornstein_recipe(depth: usize) -> Recipe {
    Recipe::ornstein(
        CutRule::Affine { a: 2, b: 4 },
        CutRule::Affine { a: 1, b: 2 },
        2024,
        depth,
    )
}

/// The five structural fixtures.
pub fn fixtures() -> Vec<(&'static str, Tower)> {
    vec![
        ("odometer", build(&Recipe::odometer(6))),
        ("chacon", build(&Recipe::chacon(6))),
        (
            "staircase",
            build(&Recipe::staircase(
                CutRule::Explicit {
                    values: vec![2, 3, 4, 5, 6],
                },
                5,
            )),
        ),
        ("example52", build(&Recipe::example52(4))),
        ("ornstein", build(&ornstein_recipe(4))),
    ]
}

/// Staircase with `r_n = n + 2`.
pub fn long_staircase(depth: usize) -> Tower {
    build(&Recipe::staircase(CutRule::Affine { a: 1, b: 2 }, depth))
}

/// Membership of every top level in `ls`, read off the interval geometry
/// rather than the refinement arithmetic.
pub fn geometric_membership(t: &Tower, ls: &LevelSet) -> Vec<bool> {
    let n = t.depth();
    let members = ls.bits();
    (0..t.top_height() as usize)
        .map(|j| {
            let x = t.level_base(n, j);
            t.locate(ls.stage(), &x).is_some_and(|l| members.get(l))
        })
        .collect()
}

/// Brute-force enclosure counts of `T^m(A) ∩ B` on the top column.
pub fn brute_image(a: &[bool], b: &[bool], m: i64) -> (u64, u64) {
    let h = a.len() as i64;
    let (mut res, mut unres) = (0, 0);
    for j in 0..h {
        if !a[j as usize] {
            continue;
        }
        let t = j + m;
        if t < 0 || t >= h {
            unres += 1;
        } else if b[t as usize] {
            res += 1;
        }
    }
    (res, unres)
}

/// Measure-preserving completion sending the top level to the bottom one:
/// levels shift cyclically. Any enclosure must contain its value.
pub fn cyclic_image(a: &[bool], b: &[bool], m: i64) -> u64 {
    let h = a.len() as i64;
    (0..h)
        .filter(|&j| a[j as usize] && b[(j + m).rem_euclid(h) as usize])
        .count() as u64
}

/// Exact `∫ |(1/r) Σ χ_B ∘ T^{-s_i} - μ(B)|^q` under the cyclic completion.
pub fn cyclic_moment(b: &[bool], offsets: &[i64], q_order: u32) -> ExactScalar {
    let h = b.len() as i64;
    let r = offsets.len() as i64;
    let mu = ExactScalar::new(b.iter().filter(|&&x| x).count() as u64, h as u64).unwrap();
    let mut total = ExactScalar::zero();
    for j in 0..h {
        let c = offsets
            .iter()
            .filter(|&&s| b[(j - s).rem_euclid(h) as usize])
            .count() as i64;
        let d = (ExactScalar::ratio(c, r) - &mu).abs();
        total = total + if q_order == 2 { &d * &d } else { d };
    }
    total * ExactScalar::ratio(1, h)
}

/// Exact pairwise form under the cyclic completion.
pub fn cyclic_pairwise(b: &[bool], offsets: &[i64]) -> ExactScalar {
    let h = b.len() as u64;
    let mu = ExactScalar::new(b.iter().filter(|&&x| x).count() as u64, h).unwrap();
    let r = offsets.len() as u64;
    let mut sum = 0u64;
    for &x in offsets {
        for &y in offsets {
            sum += cyclic_image(b, b, x - y);
        }
    }
    ExactScalar::new(sum, h * r * r).unwrap() - &mu * &mu
}

/// A random nonempty union of levels of column `stage`.
pub fn random_set(t: &Tower, stage: usize, rng: &mut ChaCha8Rng) -> LevelSet {
    let h = t.height(stage) as usize;
    let p: f64 = rng.random_range(0.1..0.9);
    let mut idx: Vec<usize> = (0..h).filter(|_| rng.random_bool(p)).collect();
    if idx.is_empty() {
        idx.push(rng.random_range(0..h));
    }
    t.level_set(stage, idx).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
