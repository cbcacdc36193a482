//! The released statistics set: noisy heavy-coordinate estimates plus noisy
//! level-set sizes, for each independent pipeline instance, together with the
//! public metadata needed to evaluate norms on it later. Serializes to a
//! line-based text format whose round trip is byte-identical ({:?} prints
//! f64 with exactly the digits needed to reparse the same bits).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::params::LevelCase;

pub const FORMAT_HEADER: &str = "privnorm-release v1";

/// Public metadata the query side needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseMeta {
    pub n: u64,
    pub m: u64,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub big_m: f64,
    pub xi: f64,
    pub gamma: f64,
    pub beta: f64,
    pub s: u32,
    pub ell: u32,
    pub size_divisor: f64,
}

/// One level's released size.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelEntry {
    pub level: u32,
    pub case: LevelCase,
    /// Noisy, rescaled size estimate (may be negative before clamping).
    pub size: f64,
}

/// One independent pipeline instance's contribution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceRelease {
    /// Noisy L2 estimate of the full stream.
    pub noisy_f2: f64,
    /// Released heavy coordinates: (item, noisy frequency estimate).
    pub high: Vec<(u64, f64)>,
    /// Released level sizes for medium/low levels.
    pub levels: Vec<LevelEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseSet {
    pub meta: ReleaseMeta,
    pub instances: Vec<InstanceRelease>,
}

fn case_tag(c: &LevelCase) -> String {
    match c {
        LevelCase::High => "high 0".to_string(),
        LevelCase::Medium(j) => format!("med {j}"),
        LevelCase::Low(j) => format!("low {j}"),
    }
}

fn parse_case(tag: &str, j: u32) -> Result<LevelCase> {
    match tag {
        "high" => Ok(LevelCase::High),
        "med" => Ok(LevelCase::Medium(j)),
        "low" => Ok(LevelCase::Low(j)),
        _ => Err(Error::Parse(format!("bad level case {tag:?}"))),
    }
}

impl ReleaseSet {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let m = &self.meta;
        writeln!(out, "{FORMAT_HEADER}").unwrap();
        writeln!(out, "n={} m={}", m.n, m.m).unwrap();
        writeln!(out, "alpha={:?} epsilon={:?} delta={:?} M={:?}", m.alpha, m.epsilon, m.delta, m.big_m)
            .unwrap();
        writeln!(out, "xi={:?} gamma={:?} beta={:?}", m.xi, m.gamma, m.beta).unwrap();
        writeln!(out, "s={} ell={} divisor={:?}", m.s, m.ell, m.size_divisor).unwrap();
        for (idx, inst) in self.instances.iter().enumerate() {
            writeln!(out, "instance {idx}").unwrap();
            writeln!(out, "f2={:?}", inst.noisy_f2).unwrap();
            for &(item, est) in &inst.high {
                writeln!(out, "coord {item} {est:?}").unwrap();
            }
            for e in &inst.levels {
                writeln!(out, "level {} {} {:?}", e.level, case_tag(&e.case), e.size).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<ReleaseSet> {
        let mut lines = text.lines();
        let bad = |msg: &str| Error::Parse(format!("release: {msg}"));
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(bad("unrecognized header"));
        }
        let mut kv = std::collections::HashMap::new();
        for _ in 0..4 {
            let line = lines.next().ok_or_else(|| bad("truncated metadata"))?;
            for part in line.split_whitespace() {
                let (k, v) = part.split_once('=').ok_or_else(|| bad("bad metadata field"))?;
                kv.insert(k.to_string(), v.to_string());
            }
        }
        let getf = |k: &str| -> Result<f64> {
            kv.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(&format!("missing or bad field {k}")))
        };
        let meta = ReleaseMeta {
            n: getf("n")? as u64,
            m: getf("m")? as u64,
            alpha: getf("alpha")?,
            epsilon: getf("epsilon")?,
            delta: getf("delta")?,
            big_m: getf("M")?,
            xi: getf("xi")?,
            gamma: getf("gamma")?,
            beta: getf("beta")?,
            s: getf("s")? as u32,
            ell: getf("ell")? as u32,
            size_divisor: getf("divisor")?,
        };
        let mut instances: Vec<InstanceRelease> = Vec::new();
        for line in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["instance", idx] => {
                    if idx.parse::<usize>().ok() != Some(instances.len()) {
                        return Err(bad("instances out of order"));
                    }
                    instances.push(InstanceRelease::default());
                }
                [field] if field.starts_with("f2=") => {
                    let inst = instances.last_mut().ok_or_else(|| bad("f2 before instance"))?;
                    inst.noisy_f2 = field[3..].parse().map_err(|_| bad("bad f2"))?;
                }
                ["coord", item, est] => {
                    let inst = instances.last_mut().ok_or_else(|| bad("coord before instance"))?;
                    inst.high.push((
                        item.parse().map_err(|_| bad("bad coord id"))?,
                        est.parse().map_err(|_| bad("bad coord estimate"))?,
                    ));
                }
                ["level", lvl, tag, j, size] => {
                    let inst = instances.last_mut().ok_or_else(|| bad("level before instance"))?;
                    let j: u32 = j.parse().map_err(|_| bad("bad witness"))?;
                    inst.levels.push(LevelEntry {
                        level: lvl.parse().map_err(|_| bad("bad level index"))?,
                        case: parse_case(tag, j)?,
                        size: size.parse().map_err(|_| bad("bad level size"))?,
                    });
                }
                [] => {}
                _ => return Err(bad(&format!("unrecognized line {line:?}"))),
            }
        }
        if instances.is_empty() {
            return Err(bad("no instances"));
        }
        Ok(ReleaseSet { meta, instances })
    }
}
