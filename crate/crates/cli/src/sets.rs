//! Parsing of level-set and list arguments.

use r1lab::tower::{LevelSet, Tower};
use r1lab::{Error, ExactScalar, Result};

/// Set syntax: `all` (the top column), `spacersN`, or `stageN:` followed by
/// `all` or an index list such as `0-5,8`.
pub fn parse_set(tower: &Tower, text: &str) -> Result<LevelSet> {
    let text = text.trim();
    if text == "all" {
        return tower.whole(tower.depth());
    }
    if let Some(n) = text.strip_prefix("spacers") {
        return tower.spacer_levels(parse_num(n, text)?);
    }
    let (stage, list) = text
        .strip_prefix("stage")
        .and_then(|rest| rest.split_once(':'))
        .ok_or_else(|| bad(text, "expected `all`, `spacersN` or `stageN:list`"))?;
    let stage: usize = parse_num(stage, text)?;
    if list.trim() == "all" {
        return tower.whole(stage);
    }
    let mut indices = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (parse_num(a, text)?, parse_num(b, text)?);
                if a > b {
                    return Err(bad(text, "range start exceeds its end"));
                }
                indices.extend(a..=b);
            }
            None => indices.push(parse_num(part, text)?),
        }
    }
    tower.level_set(stage, indices)
}

fn parse_num<T: std::str::FromStr>(token: &str, whole: &str) -> Result<T> {
    token
        .trim()
        .parse()
        .map_err(|_| bad(whole, &format!("`{}` is not a valid index", token.trim())))
}

fn bad(whole: &str, why: &str) -> Error {
    Error::Precondition(format!("argument `{whole}`: {why}"))
}

/// Comma-separated integers with `a..b` ranges (inclusive).
pub fn parse_int_list(text: &str) -> Result<Vec<i64>> {
    let mut out = Vec::new();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let part = part.trim();
        if let Some((a, b)) = part.split_once("..") {
            let a: i64 = parse_num(a, text)?;
            let b: i64 = parse_num(b, text)?;
            out.extend(a..=b);
        } else {
            out.push(
                part.parse()
                    .map_err(|_| Error::Precondition(format!("`{part}` is not an integer")))?,
            );
        }
    }
    Ok(out)
}

pub fn parse_scalar_list(text: &str) -> Result<Vec<ExactScalar>> {
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse())
        .collect()
}
