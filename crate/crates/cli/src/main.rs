//! `r1lab`: build rank one towers from recipes, run analyses, verify invariants.

mod report;
mod sets;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use r1lab::analysis::{self, DEFAULT_MARGIN};
use r1lab::constructions::{ornstein_generate, ornstein_stage, Recipe, SpacerRule};
use r1lab::tower::{BuildOptions, LevelSet, Tower};
use r1lab::{Error, ExactScalar};

use report::Csv;
use sets::{parse_int_list, parse_scalar_list, parse_set};

#[derive(Parser)]
#[command(
    name = "r1lab",
    version,
    about = "Exact experiments on rank one transformations"
)]
struct Cli {
    /// Worker threads for parallel sweeps. Output does not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a tower from a recipe and write its snapshot.
    Build {
        recipe: PathBuf,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the level budget (also settable through R1LAB_MAX_HEIGHT).
        #[arg(long)]
        max_height: Option<u64>,
    },
    /// Run an analysis on a tower snapshot.
    Analyze {
        tower: PathBuf,
        #[command(subcommand)]
        analysis: Analysis,
    },
    /// Run an invariant suite on a tower snapshot.
    Verify {
        tower: PathBuf,
        #[command(subcommand)]
        suite: Suite,
    },
}

#[derive(Args, Clone, Copy)]
struct CsvOpts {
    /// Also print decimal columns rounded outward to this many digits.
    #[arg(long)]
    decimals: Option<usize>,
}

#[derive(Subcommand)]
enum Analysis {
    /// Mixing values `μ(T^m A ∩ B) - μ(A)μ(B)`.
    Mix {
        #[arg(long = "A")]
        a: String,
        #[arg(long = "B")]
        b: String,
        /// Times as integers or `a..b` ranges; `hN` / `wN` name stage heights.
        #[arg(long, allow_hyphen_values = true)]
        m: String,
        #[command(flatten)]
        csv: CsvOpts,
    },
    /// L² Cesàro value of the spacer offsets per stage.
    Cesaro {
        #[arg(long = "B")]
        b: String,
        /// Stages to evaluate; defaults to every stage below the depth.
        #[arg(long)]
        stage: Option<String>,
        /// Custom offsets instead of the stage spacers.
        #[arg(long, allow_hyphen_values = true)]
        offsets: Option<String>,
        #[command(flatten)]
        csv: CsvOpts,
    },
    /// Cesàro values of windowed partial sums at one stage.
    Uniform {
        #[arg(long = "B")]
        b: String,
        #[arg(long)]
        stage: usize,
        /// Window fractions of r_n; defaults to 0,1/4,1/2,3/4.
        #[arg(long)]
        fractions: Option<String>,
        /// Explicit window lengths; overrides fractions.
        #[arg(long)]
        k: Option<String>,
        #[command(flatten)]
        csv: CsvOpts,
    },
    /// Restricted growth statistic per stage.
    Growth {
        #[arg(long)]
        kappa: String,
        #[command(flatten)]
        csv: CsvOpts,
    },
    /// Uniform mixing sums over the levels of the column containing m.
    Umix {
        #[arg(long = "B")]
        b: String,
        #[arg(long)]
        m: String,
        #[arg(long, default_value_t = DEFAULT_MARGIN)]
        margin: usize,
        #[command(flatten)]
        csv: CsvOpts,
    },
    /// Mixing at h_n against the spacer weak average, per stage (JSON).
    Thm5 {
        #[arg(long = "A")]
        a: String,
        #[arg(long = "B")]
        b: String,
        #[arg(long)]
        stage: Option<String>,
        /// Use time w_n and representative spacers.
        #[arg(long)]
        window: bool,
        #[arg(long, default_value_t = DEFAULT_MARGIN)]
        margin: usize,
    },
    /// Block averaging inequality (JSON).
    Blocklemma {
        #[arg(long = "B")]
        b: String,
        #[arg(long = "R")]
        r: u64,
        #[arg(long = "L")]
        l: u64,
        #[arg(long, default_value_t = 1)]
        step: u64,
    },
    /// First time both A and B are hit by images of A (JSON).
    Doubleerg {
        #[arg(long = "A")]
        a: String,
        #[arg(long = "B")]
        b: String,
        #[arg(long, default_value_t = 1000)]
        n_max: u64,
    },
}

#[derive(Subcommand)]
enum Suite {
    /// Sublevel shift identities.
    Lemma52,
    /// Mixing residual bound at every admissible stage.
    Thm5 {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_MARGIN)]
        margin: usize,
    },
    /// Profile against pairwise second moments on seeded cases.
    Expansion {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        cases: usize,
    },
    /// Random spacer stages: replay, draw bounds and window sums.
    OrnsteinInvariants,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ConstructionBug(_) => 1,
            Error::Parse(_)
            | Error::InvalidSequence(_)
            | Error::InvalidRecipe(_)
            | Error::Snapshot(_) => 2,
            Error::BudgetExceeded { .. } => 3,
            Error::Precondition(_) | Error::DivisionByZero => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

type CmdResult = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(4);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("thread pool is configured once");
    }
    let result = match cli.command {
        Command::Build {
            recipe,
            depth,
            out,
            max_height,
        } => build(&recipe, depth, &out, max_height),
        Command::Analyze { tower, analysis } => load(&tower).and_then(|t| analyze(&t, analysis)),
        Command::Verify { tower, suite } => load(&tower).and_then(|t| verify(&t, suite)),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| fail(2, format!("{}: {e}", path.display())))
}

fn options(max_height: Option<u64>) -> Result<BuildOptions, Failure> {
    let mut opts = BuildOptions::from_env()?;
    if let Some(h) = max_height {
        opts.max_height = h;
    }
    Ok(opts)
}

fn load(path: &Path) -> Result<Tower, Failure> {
    let text = read(path)?;
    Tower::from_json(&text, options(None)?).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

#[derive(Serialize)]
struct StageSummary {
    n: usize,
    h: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    w: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<u64>,
    leb_c: ExactScalar,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu_s: Option<ExactScalar>,
}

#[derive(Serialize)]
struct BuildSummary<'a> {
    name: &'a str,
    depth: usize,
    heights: Vec<u64>,
    stages: Vec<StageSummary>,
    warnings: &'a [String],
    snapshot: String,
}

fn build(recipe: &Path, depth: Option<usize>, out: &Path, max_height: Option<u64>) -> CmdResult {
    let text = read(recipe)?;
    let recipe_value: Recipe = serde_json::from_str(&text)
        .map_err(|e| fail(2, format!("{}: schema error: {e}", recipe.display())))?;
    let depth = depth.unwrap_or(recipe_value.depth);
    let tower = Tower::build_with(&recipe_value, depth, options(max_height)?)?;
    let n = tower.depth();
    let stages = (0..=n)
        .map(|k| {
            Ok(StageSummary {
                n: k,
                h: tower.height(k),
                w: (k < n).then(|| tower.window_height(k)),
                r: (k < n).then(|| tower.cut(k)),
                leb_c: tower.leb_column(k),
                mu_s: if k < n {
                    Some(tower.spacer_measure(k)?)
                } else {
                    None
                },
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    std::fs::write(out, tower.to_json()).map_err(|e| fail(2, format!("{}: {e}", out.display())))?;
    let summary = BuildSummary {
        name: &tower.recipe().name,
        depth: n,
        heights: tower.heights(),
        stages,
        warnings: tower.warnings(),
        snapshot: out.display().to_string(),
    };
    Ok(json(&summary))
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summaries serialize");
    s.push('\n');
    s
}

/// Integers or `a..b` ranges; `hN` and `wN` name heights and window heights.
/// `hA..hB` lists the heights of stages `A..=B`.
fn parse_times(tower: &Tower, text: &str) -> Result<Vec<i64>, Failure> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let prefix = &a[..a.len().min(1)];
            if (prefix == "h" || prefix == "w") && b.starts_with(prefix) {
                let range: Vec<String> = parse_int_list(&format!("{}..{}", &a[1..], &b[1..]))?
                    .into_iter()
                    .map(|n| format!("{prefix}{n}"))
                    .collect();
                out.extend(parse_times(tower, &range.join(","))?);
                continue;
            }
        }
        let named = |prefix: &str, limit: usize| -> Result<Option<usize>, Failure> {
            match part.strip_prefix(prefix) {
                Some(n) => {
                    let n: usize = n
                        .parse()
                        .map_err(|_| fail(4, format!("`{part}` is not a stage reference")))?;
                    if n > limit {
                        return Err(fail(4, format!("`{part}`: stage {n} beyond {limit}")));
                    }
                    Ok(Some(n))
                }
                None => Ok(None),
            }
        };
        let depth = tower.depth();
        if let Some(n) = named("h", depth)? {
            out.push(tower.height(n) as i64);
        } else if let Some(n) = named("w", depth.saturating_sub(1))? {
            if depth == 0 {
                return Err(fail(4, "a tower of depth 0 has no window heights"));
            }
            out.push(tower.window_height(n) as i64);
        } else {
            out.extend(parse_int_list(part)?);
        }
    }
    Ok(out)
}

fn stage_list(text: Option<&str>, default: std::ops::Range<usize>) -> Result<Vec<usize>, Failure> {
    match text {
        None => Ok(default.collect()),
        Some(t) => parse_int_list(t)?
            .into_iter()
            .map(|n| usize::try_from(n).map_err(|_| fail(4, format!("stage {n} is negative"))))
            .collect(),
    }
}

fn analyze(tower: &Tower, analysis: Analysis) -> CmdResult {
    let set = |text: &str| -> Result<LevelSet, Failure> { Ok(parse_set(tower, text)?) };
    match analysis {
        Analysis::Mix { a, b, m, csv } => {
            let (sa, sb) = (set(&a)?, set(&b)?);
            let ms = parse_times(tower, &m)?;
            let rows = analysis::mixing_profile(tower, &sa, &sb, &ms)?;
            let mut out = Csv::new(
                tower,
                &format!("mix A={a} B={b}; parameter = m"),
                csv.decimals,
            );
            for (m, e) in &rows {
                out.row(m, e);
            }
            Ok(out.finish())
        }
        Analysis::Cesaro {
            b,
            stage,
            offsets,
            csv,
        } => {
            let sb = set(&b)?;
            let mut out = Csv::new(
                tower,
                &format!("cesaro B={b}; parameter = stage"),
                csv.decimals,
            );
            if let Some(custom) = offsets {
                let offs = parse_int_list(&custom)?;
                out = Csv::new(
                    tower,
                    &format!("cesaro B={b} offsets={custom}; parameter = count of offsets"),
                    csv.decimals,
                );
                out.row(offs.len(), &analysis::cesaro_value(tower, &sb, &offs)?);
            } else {
                for n in stage_list(stage.as_deref(), 0..tower.depth())? {
                    if n >= tower.depth() {
                        return Err(fail(
                            4,
                            format!("stage {n} must be below depth {}", tower.depth()),
                        ));
                    }
                    out.row(n, &analysis::cesaro_value(tower, &sb, tower.spacers(n))?);
                }
            }
            Ok(out.finish())
        }
        Analysis::Uniform {
            b,
            stage,
            fractions,
            k,
            csv,
        } => {
            let sb = set(&b)?;
            let seq = tower.spacer_seq()?;
            if stage >= tower.depth() {
                return Err(fail(
                    4,
                    format!("stage {stage} must be below depth {}", tower.depth()),
                ));
            }
            let r = tower.cut(stage);
            let ks: Vec<usize> = match (k, fractions) {
                (Some(k), _) => stage_list(Some(&k), 0..0)?,
                (None, f) => {
                    let fr = parse_scalar_list(f.as_deref().unwrap_or("0,1/4,1/2,3/4"))?;
                    fr.iter()
                        .map(|x| {
                            if x.is_zero() {
                                Ok(0)
                            } else {
                                analysis::fraction_to_window(x, r)
                            }
                        })
                        .collect::<Result<_, Error>>()?
                }
            };
            let rows = analysis::uniform_ergodicity_sweep(tower, &seq, stage, &sb, &ks)?;
            let mut out = Csv::new(
                tower,
                &format!("uniform B={b} stage={stage} r={r}; parameter = window k (0 = spacers)"),
                csv.decimals,
            );
            for row in &rows {
                out.row(row.k, &row.value);
            }
            Ok(out.finish())
        }
        Analysis::Growth { kappa, csv } => {
            let kappa: ExactScalar = kappa.parse()?;
            let stats =
                analysis::restricted_growth_stat(&tower.spacer_seq()?, &tower.heights(), &kappa)?;
            let mut out = Csv::new(
                tower,
                &format!("growth kappa={kappa}; parameter = stage"),
                csv.decimals,
            );
            for (n, s) in stats.iter().enumerate() {
                out.point_row(n, s);
            }
            Ok(out.finish())
        }
        Analysis::Umix { b, m, margin, csv } => {
            let sb = set(&b)?;
            let ms = parse_times(tower, &m)?;
            let mut out = Csv::new(
                tower,
                &format!("umix B={b} margin={margin}; parameter = m"),
                csv.decimals,
            );
            for m in ms {
                out.row(m, &analysis::uniform_mixing_sum(tower, &sb, m, margin)?);
            }
            Ok(out.finish())
        }
        Analysis::Thm5 {
            a,
            b,
            stage,
            window,
            margin,
        } => {
            let (sa, sb) = (set(&a)?, set(&b)?);
            let first = sa.stage().max(sb.stage());
            let last = (tower.depth() + 1).saturating_sub(margin.max(1));
            let rows = stage_list(stage.as_deref(), first..last)?
                .into_iter()
                .map(|n| {
                    if window {
                        analysis::theorem5_residual_window(tower, n, &sa, &sb, margin)
                    } else {
                        analysis::theorem5_residual(tower, n, &sa, &sb, margin)
                    }
                })
                .collect::<Result<Vec<_>, Error>>()?;
            Ok(json(&rows))
        }
        Analysis::Blocklemma { b, r, l, step } => Ok(json(&analysis::block_lemma_check(
            tower,
            &set(&b)?,
            r,
            l,
            step,
        )?)),
        Analysis::Doubleerg { a, b, n_max } => Ok(json(&analysis::double_ergodicity_search(
            tower,
            &set(&a)?,
            &set(&b)?,
            n_max,
        )?)),
    }
}

fn random_set(tower: &Tower, stage: usize, rng: &mut ChaCha8Rng) -> Result<LevelSet, Error> {
    let h = tower.height(stage) as usize;
    let mut picked: Vec<usize> = (0..h).filter(|_| rng.random_bool(0.5)).collect();
    if picked.is_empty() {
        picked.push(rng.random_range(0..h));
    }
    tower.level_set(stage, picked)
}

fn verify(tower: &Tower, suite: Suite) -> CmdResult {
    match suite {
        Suite::Lemma52 => Ok(format!("{}\n", tower.verify_lemma_5_2()?)),
        Suite::Thm5 {
            seed,
            trials,
            margin,
        } => verify_residuals(tower, seed, trials, margin),
        Suite::Expansion { seed, cases } => verify_expansion(tower, seed, cases),
        Suite::OrnsteinInvariants => verify_ornstein(tower),
    }
}

fn verify_residuals(tower: &Tower, seed: u64, trials: usize, margin: usize) -> CmdResult {
    let n_max = tower.depth();
    let stages: Vec<usize> = (0..n_max).filter(|&n| n + margin <= n_max).collect();
    if stages.is_empty() {
        return Err(fail(
            4,
            format!("no stage n has n + {margin} <= depth {n_max}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut checked, mut worst) = (0u64, ExactScalar::zero());
    for &n in &stages {
        let mut pairs = vec![(tower.whole(n)?, tower.whole(n)?)];
        for _ in 0..trials {
            pairs.push((
                random_set(tower, n, &mut rng)?,
                random_set(tower, n, &mut rng)?,
            ));
        }
        for (a, b) in &pairs {
            for res in [
                analysis::theorem5_residual(tower, n, a, b, margin)?,
                analysis::theorem5_residual_window(tower, n, a, b, margin)?,
            ] {
                checked += 1;
                if !res.passes {
                    return Err(fail(
                        1,
                        format!(
                            "stage {n}, A = {:?}, B = {:?}: residual [{}, {}] exceeds bound {}",
                            a.indices(),
                            b.indices(),
                            res.residual.lo(),
                            res.residual.hi(),
                            res.bound
                        ),
                    ));
                }
                worst = worst.max(res.residual.lo().clone());
            }
        }
    }
    Ok(format!(
        "mixing residual: {checked}/{checked} checks pass; largest certified residual {worst}\n"
    ))
}

fn verify_expansion(tower: &Tower, seed: u64, cases: usize) -> CmdResult {
    let h = tower.top_height();
    let span = (h / 2).max(1) as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exact = 0;
    for case in 0..cases {
        let stage = rng.random_range(0..=tower.depth());
        let b = random_set(tower, stage, &mut rng)?;
        let len = rng.random_range(1..=6);
        let offsets: Vec<i64> = (0..len).map(|_| rng.random_range(0..span)).collect();
        let profile = analysis::level_profile(tower, &b, &offsets)?;
        let via_profile = analysis::functional_moment(&profile, 2, &tower.measure(&b))?;
        let pairwise = analysis::pairwise_moment(tower, &b, &offsets)?;
        if !via_profile.overlaps(&pairwise) {
            return Err(fail(
                1,
                format!(
                    "case {case}: stage {stage}, B = {:?}, offsets {offsets:?}: profile [{}, {}] \
                     and pairwise [{}, {}] are disjoint",
                    b.indices(),
                    via_profile.lo(),
                    via_profile.hi(),
                    pairwise.lo(),
                    pairwise.hi()
                ),
            ));
        }
        if via_profile.is_exact() && pairwise.is_exact() {
            exact += 1;
        }
    }
    Ok(format!(
        "second moment expansion: {cases}/{cases} identities pass ({exact} fully resolved)\n"
    ))
}

fn verify_ornstein(tower: &Tower) -> CmdResult {
    let recipe = tower.recipe();
    let SpacerRule::Ornstein { ranges, seed } = &recipe.spacers else {
        return Err(fail(4, "the tower has no random spacer stages"));
    };
    let replay = ornstein_generate(&recipe.cuts, ranges, *seed, tower.depth())?;
    let mut checked = 0u64;
    for (n, stage) in tower.ornstein().iter().enumerate() {
        let bad = |what: String| Err(fail(1, format!("stage {n}: {what}")));
        checked += 1;
        if replay.stages.get(n) != Some(stage) {
            return bad(format!("draws do not replay from seed {seed}"));
        }
        checked += 1;
        if ornstein_stage(stage.range, stage.draws.clone())?.spacers != stage.spacers {
            return bad("spacers do not follow from the draws".into());
        }
        checked += 1;
        if stage.spacers.as_slice() != tower.spacers(n) {
            return bad("tower spacers differ from the sample".into());
        }
        checked += 1;
        let sum: i64 = stage.spacers.iter().sum();
        if sum != stage.range as i64 * stage.spacers.len() as i64 {
            return bad(format!(
                "spacer sum {sum} is not r times the range {}",
                stage.range
            ));
        }
        let centered: Vec<i64> = stage
            .spacers
            .iter()
            .map(|s| s - stage.range as i64)
            .collect();
        for k in 1..centered.len() {
            checked += 1;
            let worst = r1lab::dynseq::stage_partial_sums(&centered, k)
                .into_iter()
                .map(i64::unsigned_abs)
                .max()
                .unwrap_or(0);
            if worst > stage.range {
                return bad(format!(
                    "window {k} centered sum {worst} exceeds the range {}",
                    stage.range
                ));
            }
        }
    }
    Ok(format!(
        "random spacers: {checked}/{checked} identities pass\n"
    ))
}
