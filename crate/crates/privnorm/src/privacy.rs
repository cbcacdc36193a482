//! Laplace noise, the noisy-threshold and noisy-top-K release primitives,
//! a privacy budget ledger, and an empirical two-run indistinguishability
//! audit used by the tests and the `audit` CLI command.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seedable Laplace noise source. Every draw is keyed by a caller-chosen
/// domain string plus index so the same logical release gets byte-identical
/// noise under the same seed, regardless of evaluation order.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    seed: u64,
    /// When set, every draw returns 0 (deterministic test regime; obviously
    /// not private).
    pub pinned: bool,
}

impl NoiseSource {
    pub fn new(seed: u64) -> NoiseSource {
        NoiseSource { seed, pinned: false }
    }

    pub fn pinned(seed: u64) -> NoiseSource {
        NoiseSource { seed, pinned: true }
    }

    fn rng_for(&self, domain: &str, index: u64) -> ChaCha8Rng {
        // stable 64-bit key from (seed, domain, index); FNV-1a over the parts
        let mut h: u64 = 0xcbf29ce484222325;
        let mut mix = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        mix(&self.seed.to_le_bytes());
        mix(domain.as_bytes());
        mix(&index.to_le_bytes());
        ChaCha8Rng::seed_from_u64(h)
    }

    /// One Laplace draw with the given scale, by inverse CDF:
    /// x = -scale * sgn(u) * ln(1 - 2|u|) for u uniform in (-1/2, 1/2).
    pub fn laplace(&self, domain: &str, index: u64, scale: f64) -> f64 {
        assert!(scale >= 0.0 && scale.is_finite());
        if self.pinned || scale == 0.0 {
            return 0.0;
        }
        let mut rng = self.rng_for(domain, index);
        let u: f64 = rng.gen_range(-0.5..0.5);
        -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }
}

/// Tracks how the total budget is spent. `charge` records a named share
/// together with the sensitivity and noise scale behind it; `assert_within`
/// fails if the epsilon shares exceed the total (with slack for float error).
#[derive(Debug, Clone, Default)]
pub struct BudgetLedger {
    // label -> (sensitivity, scale, epsilon, delta); repeat charges to the
    // same label accumulate epsilon and delta.
    entries: BTreeMap<String, (f64, f64, f64, f64)>,
}

impl BudgetLedger {
    pub fn charge(&mut self, label: &str, sensitivity: f64, scale: f64, epsilon: f64, delta: f64) {
        let e = self
            .entries
            .entry(label.to_string())
            .or_insert((sensitivity, scale, 0.0, 0.0));
        e.0 = sensitivity;
        e.1 = scale;
        e.2 += epsilon;
        e.3 += delta;
    }

    pub fn spent(&self) -> f64 {
        self.entries.values().map(|e| e.2).sum()
    }

    pub fn spent_delta(&self) -> f64 {
        self.entries.values().map(|e| e.3).sum()
    }

    pub fn assert_within(&self, total: f64) -> Result<()> {
        if self.spent() > total * (1.0 + 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "budget overspent: {} > {total}",
                self.spent()
            )));
        }
        Ok(())
    }

    /// Tab-separated table: component, sensitivity, scale, epsilon, delta.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("component\tsensitivity\tscale\tepsilon\tdelta\n");
        for (k, (sens, scale, eps, delta)) in &self.entries {
            out.push_str(&format!("{k}\t{sens:?}\t{scale:?}\t{eps:?}\t{delta:?}\n"));
        }
        out.push_str(&format!(
            "TOTAL\t\t\t{:?}\t{:?}\n",
            self.spent(),
            self.spent_delta()
        ));
        out
    }
}

/// Add Laplace noise to each estimate, then keep only those clearing the
/// threshold. Returns (item, noisy estimate) pairs, at most `cap` of them
/// (largest noisy values win, ties broken by item id).
pub fn threshold_release(
    estimates: &[(u64, f64)],
    threshold: f64,
    scale: f64,
    noise: &NoiseSource,
    domain: &str,
    cap: usize,
) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64)> = estimates
        .iter()
        .map(|&(item, est)| (item, est + noise.laplace(domain, item, scale)))
        .filter(|&(_, noisy)| noisy >= threshold)
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out.truncate(cap);
    out
}

/// Noisy top-K: add fresh Laplace noise to every score and return the items
/// with the K largest noisy scores, in descending noisy-score order.
pub fn top_k_release(
    scores: &[(u64, f64)],
    k: usize,
    scale: f64,
    noise: &NoiseSource,
    domain: &str,
) -> Vec<(u64, f64)> {
    let mut noisy: Vec<(u64, f64)> = scores
        .iter()
        .map(|&(item, v)| (item, v + noise.laplace(domain, item, scale)))
        .collect();
    noisy.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    noisy.truncate(k);
    noisy
}

/// Two-run empirical indistinguishability check: given samples of the same
/// scalar release on two neighboring inputs, bin both into `bins` equal-width
/// bins over their joint range and verify that every bin holding at least
/// `min_count` samples on both sides has probability ratio at most
/// e^eps * (1 + 3 * sqrt(1/min_side_count)).
pub fn histogram_ratio_audit(
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    bins: usize,
    min_count: usize,
) -> (bool, f64) {
    assert!(!a.is_empty() && a.len() == b.len());
    let lo = a.iter().chain(b).cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return (true, 1.0); // degenerate: identical constants
    }
    let width = (hi - lo) / bins as f64;
    let bucket = |x: f64| (((x - lo) / width) as usize).min(bins - 1);
    let mut ca = vec![0usize; bins];
    let mut cb = vec![0usize; bins];
    for &x in a {
        ca[bucket(x)] += 1;
    }
    for &x in b {
        cb[bucket(x)] += 1;
    }
    let mut worst = 1.0f64;
    let mut ok = true;
    for i in 0..bins {
        let (lo_ct, hi_ct) = (ca[i].min(cb[i]), ca[i].max(cb[i]));
        if lo_ct >= min_count {
            let ratio = hi_ct as f64 / lo_ct as f64;
            let allowed = epsilon.exp() * (1.0 + 3.0 * (1.0 / lo_ct as f64).sqrt());
            worst = worst.max(ratio);
            if ratio > allowed {
                ok = false;
            }
        } else if lo_ct == 0 && hi_ct >= min_count {
            // one side empty where the other is well populated: under any
            // eps-bounded density ratio this has vanishing probability
            worst = worst.max(hi_ct as f64);
            ok = false;
        }
    }
    (ok, worst)
}
