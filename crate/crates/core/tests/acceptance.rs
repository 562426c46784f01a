//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::time::{Duration, Instant};

use common::*;
use r1lab::analysis::{
    absolute_average, cesaro_value, fraction_to_window, mixing_value, pairwise_moment,
    restricted_growth_stat, theorem5_residual, uniform_ergodicity_sweep, DEFAULT_MARGIN,
};
use r1lab::constructions::{lemma81_estimate, ornstein_generate, Recipe};
use r1lab::dynseq::{
    classify_stage, derive_stats, stage_average, stage_partial_sums, subsequence_check, CutRule,
    DynSeq,
};
use r1lab::numeric::{Enclosure, ExactScalar};
use r1lab::tower::Tower;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: u64, what: &str) -> std::result::Result<(), String> {
    ensure(elapsed.as_secs() < limit, || {
        format!("{what} took {:.1}s, limit {limit}s", elapsed.as_secs_f64())
    })
}

fn structural_identities() -> Outcome {
    let start = Instant::now();
    let mut total = 0;
    for (name, t) in fixtures() {
        // heights and window heights recomputed from the raw spacers
        let seq = t.spacer_seq().map_err(|e| e.to_string())?;
        let stats = derive_stats(&seq);
        let mut h = 1u64;
        for n in 0..t.depth() {
            ensure(t.height(n) == h, || {
                format!("{name}: h_{n} = {} expected {h}", t.height(n))
            })?;
            let w = h as i64 + stats.averages[n];
            ensure(t.window_height(n) as i64 == w, || {
                format!("{name}: w_{n} mismatch")
            })?;
            h = t.cut(n) * h + seq.stage(n).iter().sum::<i64>() as u64;
        }
        ensure(t.top_height() == h, || {
            format!("{name}: top height mismatch")
        })?;
        for report in [
            t.verify_structure(),
            t.verify_lemma_5_1(),
            t.verify_lemma_5_2(),
        ] {
            let report = report.map_err(|e| format!("{name}: {e}"))?;
            ensure(report.checked == report.passed, || {
                format!("{name}: {report}")
            })?;
            total += report.checked;
        }
    }
    within(start.elapsed(), 30, "structural suite")?;
    Ok(format!(
        "{total} identities on 5 fixtures in {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn enclosure_soundness() -> Outcome {
    // Oracle: the binary odometer as addition mod 2^K; adding 2 keeps parity.
    let k = 12;
    let size = 1i64 << k;
    let hits = (0..size)
        .filter(|j| j % 2 == 0 && (j + 2) % size % 2 == 0)
        .count() as i64;
    let oracle = ExactScalar::ratio(hits, size);
    ensure(oracle == q("1/2"), || format!("oracle gives {oracle}"))?;

    let mut encs: Vec<Enclosure> = Vec::new();
    for depth in [2, 3, 4] {
        let t = build(&Recipe::odometer(depth));
        let evens = t.level_set(1, [0]).unwrap();
        let e = t
            .image_measure(&evens, &evens, 2)
            .map_err(|e| e.to_string())?;
        ensure(e.contains(&oracle), || {
            format!("depth {depth}: {e} misses {oracle}")
        })?;
        if let Some(prev) = encs.last() {
            ensure(e.is_subset_of(prev), || {
                format!("depth {depth}: {e} not inside {prev}")
            })?;
            ensure(e.width() * q("2") == prev.width(), || {
                format!("depth {depth}: width did not halve")
            })?;
        }
        encs.push(e);
    }
    let shown: Vec<String> = encs.iter().map(|e| e.to_string()).collect();
    Ok(format!("depths 2,3,4: {}", shown.join(" ⊇ ")))
}

fn spacer_residuals() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for (fi, (name, t)) in fixtures().into_iter().enumerate() {
        for n in 0..=t.depth() - DEFAULT_MARGIN {
            let mut rng = rng(1000 * fi as u64 + n as u64);
            for trial in 0..100 {
                let a = random_set(&t, n, &mut rng);
                let b = random_set(&t, n, &mut rng);
                let r =
                    theorem5_residual(&t, n, &a, &b, DEFAULT_MARGIN).map_err(|e| e.to_string())?;
                ensure(r.passes, || {
                    format!(
                        "{name} n={n} trial {trial}: residual {} vs bound {}",
                        r.residual, r.bound
                    )
                })?;
                checked += 1;
            }
        }
    }
    within(start.elapsed(), 120, "residual suite")?;
    Ok(format!("{checked} residuals within 2μ(S_n) + 2/r_n"))
}

fn random_offsets(t: &Tower, case: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<i64> {
    let r = rng.random_range(1..=8);
    if case % 5 == 0 {
        return vec![0; r];
    }
    let span = (t.top_height() as i64 / 3).max(1);
    (0..r).map(|_| rng.random_range(-span..=span)).collect()
}

fn expansion_identity() -> Outcome {
    let (mut cases, mut exact) = (0, 0);
    for (fi, (name, t)) in fixtures().into_iter().enumerate() {
        let mut rng = rng(77 + fi as u64);
        for case in 0..50 {
            let stage = rng.random_range(0..=t.depth());
            let b = random_set(&t, stage, &mut rng);
            let offsets = random_offsets(&t, case, &mut rng);
            let profile = cesaro_value(&t, &b, &offsets).map_err(|e| e.to_string())?;
            let pairwise = pairwise_moment(&t, &b, &offsets).map_err(|e| e.to_string())?;
            ensure(profile.overlaps(&pairwise), || {
                format!("{name} case {case}: profile {profile} vs pairwise {pairwise}")
            })?;
            let geo = geometric_membership(&t, &b);
            let completed = cyclic_moment(&geo, &offsets, 2);
            ensure(completed == cyclic_pairwise(&geo, &offsets), || {
                format!("{name} case {case}: completed forms differ")
            })?;
            ensure(
                profile.contains(&completed) && pairwise.contains(&completed),
                || format!("{name} case {case}: completed value {completed} escapes an enclosure"),
            )?;
            if profile.is_exact() && pairwise.is_exact() {
                ensure(profile == pairwise, || {
                    format!("{name} case {case}: resolved forms differ")
                })?;
                exact += 1;
            }
            cases += 1;
        }
    }
    Ok(format!(
        "{cases} cases overlap, {exact} fully resolved and equal"
    ))
}

fn non_mixing_witness() -> Outcome {
    let t = build(&Recipe::odometer(4));
    let evens = t.level_set(1, [0]).unwrap();
    let mut lows = Vec::new();
    let mut failures = Vec::new();
    for n in 0..=3 {
        let v = mixing_value(&t, &evens, &evens, t.height(n) as i64).map_err(|e| e.to_string())?;
        if v.lo() < &q("3/16") {
            failures.push(n);
        }
        lows.push(format!("n={n}: {}", v.lo()));
    }
    let detail = lows.join(", ");
    if failures.is_empty() {
        Ok(format!("lower bounds {detail}"))
    } else {
        Err(format!(
            "lower bounds {detail}; below 3/16 at n = {failures:?}"
        ))
    }
}

fn mixing_trend() -> Outcome {
    let start = Instant::now();
    let t = long_staircase(8);
    ensure(t.top_height() == 856080, || {
        format!("h_8 = {}", t.top_height())
    })?;
    let b = t.level_set(2, 0..6).unwrap();
    let seq = t.spacer_seq().unwrap();
    let mut uppers = Vec::new();
    for n in 3..=6 {
        uppers.push(cesaro_value(&t, &b, t.spacers(n)).map_err(|e| e.to_string())?);
    }
    for w in uppers.windows(2) {
        ensure(w[1].hi() < w[0].hi(), || {
            format!("upper bounds not decreasing: {} then {}", w[0], w[1])
        })?;
    }
    let fracs = [q("1/4"), q("1/2"), q("3/4")];
    let rows = |n: usize| -> Result<Vec<Enclosure>, String> {
        let ks: Vec<usize> = fracs
            .iter()
            .map(|f| fraction_to_window(f, t.cut(n)))
            .collect::<r1lab::Result<_>>()
            .map_err(|e| e.to_string())?;
        Ok(uniform_ergodicity_sweep(&t, &seq, n, &b, &ks)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|r| r.value)
            .collect())
    };
    let (early, late) = (rows(3)?, rows(6)?);
    for (i, (e, l)) in early.iter().zip(&late).enumerate() {
        ensure(l.certainly_lt(e), || {
            format!("row {}: n=6 {} not below n=3 {}", fracs[i], l, e)
        })?;
    }
    within(start.elapsed(), 300, "trend suite")?;
    let shown: Vec<String> = uppers.iter().map(|e| e.hi().to_decimal_ceil(6)).collect();
    Ok(format!("upper bounds n=3..6: {}", shown.join(" > ")))
}

fn restricted_growth() -> Outcome {
    let kappa = q("1/2");
    let t = long_staircase(8);
    let stats = restricted_growth_stat(&t.spacer_seq().unwrap(), &t.heights(), &kappa)
        .map_err(|e| e.to_string())?;
    // downward from the first stage with a nonzero statistic
    let first = stats
        .iter()
        .position(|s| !s.is_zero())
        .ok_or("all statistics vanish")?;
    for n in first + 1..stats.len() {
        ensure(stats[n] < stats[n - 1], || {
            format!(
                "staircase stat rose at n={n}: {} -> {}",
                stats[n - 1],
                stats[n]
            )
        })?;
    }
    let e = build(&Recipe::example52(4));
    let es = restricted_growth_stat(&e.spacer_seq().unwrap(), &e.heights(), &kappa)
        .map_err(|e| e.to_string())?;
    for n in 2..e.depth() {
        let (h, r) = (e.height(n), e.cut(n));
        let formula = q("1") - ExactScalar::new(h / r, h).unwrap();
        ensure(es[n] >= q("1/2") && es[n] >= formula, || {
            format!("example52 n={n}: {}", es[n])
        })?;
    }
    let last = stats.last().unwrap();
    Ok(format!(
        "staircase {} -> {} decreasing from n={first}; example52 n>=2 min {}",
        stats[first],
        last,
        es[2..].iter().min().unwrap()
    ))
}

/// Calibrated parameters for the random-count event.
const CALIBRATION: (u64, usize, &str, &str, u64, u64) = (10, 400, "2", "1/5", 500, 81);

fn ornstein_invariants() -> Outcome {
    let params = [
        (
            CutRule::Affine { a: 2, b: 4 },
            CutRule::Affine { a: 1, b: 2 },
        ),
        (
            CutRule::Constant { value: 7 },
            CutRule::Constant { value: 5 },
        ),
        (
            CutRule::Affine { a: 5, b: 3 },
            CutRule::Affine { a: 3, b: 1 },
        ),
    ];
    let mut samples = 0;
    for (cuts, ranges) in &params {
        for seed in 0..100 {
            let sample = ornstein_generate(cuts, ranges, seed, 5).map_err(|e| e.to_string())?;
            for (n, st) in sample.stages.iter().enumerate() {
                let r = cuts.value(n).unwrap() as i64;
                let range = st.range as i64;
                ensure(st.spacers.iter().sum::<i64>() == r * range, || {
                    format!("seed {seed} n={n}: sum")
                })?;
                ensure(
                    st.spacers.iter().all(|&s| (0..=2 * range).contains(&s)),
                    || format!("seed {seed} n={n}: spacer outside [0, 2s]"),
                )?;
                let avg = stage_average(&st.spacers);
                let rep: Vec<i64> = st.spacers.iter().map(|s| s - avg).collect();
                for k in 1..rep.len() {
                    let worst = stage_partial_sums(&rep, k)
                        .iter()
                        .map(|v| v.abs())
                        .max()
                        .unwrap_or(0);
                    ensure(worst <= range, || {
                        format!("seed {seed} n={n} k={k}: partial sum {worst}")
                    })?;
                }
            }
            samples += 1;
        }
    }
    let (h, m, alpha, eps, trials, seed) = CALIBRATION;
    let p = lemma81_estimate(h, m, &q(alpha), &q(eps), trials, seed).map_err(|e| e.to_string())?;
    let need = q("1") - q(eps);
    ensure(p > need, || {
        format!("event frequency {p} not above {need} at H={h}, m={m}")
    })?;
    Ok(format!(
        "{samples} samples exact; event frequency {p} > {need} at H={h}, m={m}, α={alpha}, ε={eps}"
    ))
}

fn order_checks() -> Outcome {
    let mut rng = rng(9);
    for case in 0..1000 {
        let r = rng.random_range(1..40usize);
        let mut v = rng.random_range(-50i64..50);
        let stage: Vec<i64> = (0..r)
            .map(|_| {
                v += rng.random_range(1..6);
                v
            })
            .collect();
        for i in 0..r {
            for j in 0..r {
                ensure(
                    (stage[i] - stage[j]).abs() >= (i as i64 - j as i64).abs(),
                    || format!("case {case}: spacing at ({i}, {j})"),
                )?;
            }
        }
        for m in [1u64, 2, 5] {
            let rep = classify_stage(&stage, m).unwrap();
            ensure(rep.strictly_increasing, || {
                format!("case {case}: not increasing")
            })?;
            let bound = ExactScalar::new(2 * m - 1, r as u64).unwrap();
            ensure(rep.square_stat <= bound, || {
                format!("case {case} M={m}: {} > {bound}", rep.square_stat)
            })?;
        }
    }
    let fixtures = fixtures();
    for pair in 0..20 {
        let (name, t) = &fixtures[2 + pair % 3];
        let n = rng.random_range(0..t.depth());
        let full = t.spacers(n).to_vec();
        let qn = rng.random_range(1..=full.len());
        let mut picks: Vec<usize> = (0..full.len()).collect();
        while picks.len() > qn {
            picks.remove(rng.random_range(0..picks.len()));
        }
        let sub: Vec<i64> = picks.iter().map(|&i| full[i]).collect();
        let ok = subsequence_check(
            &DynSeq::relaxed(vec![sub.clone()]).unwrap(),
            &DynSeq::relaxed(vec![full.clone()]).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        ensure(ok, || {
            format!("{name} pair {pair}: multiplicity dominance fails")
        })?;
        let stage = rng.random_range(0..=t.depth());
        let a = random_set(t, stage, &mut rng);
        let b = random_set(t, stage, &mut rng);
        let s = absolute_average(t, &[a.clone()], &b, &sub).map_err(|e| e.to_string())?;
        let f = absolute_average(t, &[a], &b, &full).map_err(|e| e.to_string())?;
        let (qs, rs) = (ExactScalar::from(qn), ExactScalar::from(full.len()));
        ensure(
            &qs * s.lo() <= &rs * f.lo() && &qs * s.hi() <= &rs * f.hi(),
            || format!("{name} pair {pair}: {s} not dominated by (r/q)·{f}"),
        )?;
    }
    Ok("1000 increasing stages and 20 subsequence pairs".into())
}

fn monte_carlo() -> Outcome {
    let points = 1000u64;
    let mut compared = 0;
    for (fi, (name, t)) in fixtures().into_iter().enumerate() {
        let mut rng = rng(500 + fi as u64);
        let n = t.depth();
        let h = t.top_height();
        let scale = ExactScalar::new(1u64, 1u64 << 32).unwrap() * t.width(n);
        for query in 0..20 {
            let a = random_set(&t, rng.random_range(0..=n), &mut rng);
            let b = random_set(&t, rng.random_range(0..=n), &mut rng);
            let m = rng.random_range(-(h as i64 - 1)..=(h as i64 - 1));
            let enc = t.image_measure(&a, &b, m).map_err(|e| e.to_string())?;
            let (mut lo_hits, mut hi_hits) = (0u64, 0u64);
            for _ in 0..points {
                let level = rng.random_range(0..h as usize);
                let x =
                    t.level_base(n, level) + ExactScalar::from(rng.random::<u32>() as u64) * &scale;
                let in_a = t.locate(a.stage(), &x).is_some_and(|l| a.bits().get(l));
                if !in_a {
                    continue;
                }
                match t.point_orbit(&x, m).map_err(|e| e.to_string())? {
                    None => hi_hits += 1,
                    Some(y) => {
                        if t.locate(b.stage(), &y).is_some_and(|l| b.bits().get(l)) {
                            lo_hits += 1;
                            hi_hits += 1;
                        }
                    }
                }
            }
            for (bound, hits) in [(enc.lo(), lo_hits), (enc.hi(), hi_hits)] {
                let p = bound.to_f64();
                let freq = hits as f64 / points as f64;
                let ok = if bound.is_zero() || *bound == q("1") {
                    (freq - p).abs() == 0.0
                } else {
                    (freq - p).abs() <= 4.0 * (p * (1.0 - p) / points as f64).sqrt()
                };
                ensure(ok, || {
                    format!("{name} query {query} m={m}: frequency {freq} vs bound {bound}")
                })?;
                compared += 1;
            }
        }
    }
    Ok(format!(
        "{compared} bounds matched within 4σ on 1000 points each"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("structural identities", structural_identities),
        ("enclosure soundness", enclosure_soundness),
        ("spacer residual bound", spacer_residuals),
        ("expansion identity", expansion_identity),
        ("non-mixing witness along heights", non_mixing_witness),
        ("mixing trend on staircase", mixing_trend),
        ("restricted growth discrimination", restricted_growth),
        ("random spacer invariants", ornstein_invariants),
        ("order checks", order_checks),
        ("Monte Carlo cross-check", monte_carlo),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
