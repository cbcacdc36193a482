//! Exact (non-private, non-streaming) reference computations: frequency
//! vectors, exact norms, exact level decompositions, and exact substream
//! restrictions. The test suite and the `exact` CLI command compare the
//! private release against these.

use std::collections::HashMap;

use crate::hashing::Subsampler;
use crate::levels::LevelVector;
use crate::norms::NormSpec;

/// Exact frequency vector over a u64 universe, built by replaying updates.
#[derive(Debug, Clone, Default)]
pub struct FrequencyVector {
    counts: HashMap<u64, f64>,
}

impl FrequencyVector {
    pub fn from_updates(items: impl IntoIterator<Item = u64>) -> FrequencyVector {
        let mut v = FrequencyVector::default();
        for item in items {
            v.update(item, 1.0);
        }
        v
    }

    pub fn update(&mut self, item: u64, delta: f64) {
        let e = self.counts.entry(item).or_insert(0.0);
        *e += delta;
        if *e == 0.0 {
            self.counts.remove(&item);
        }
    }

    pub fn get(&self, item: u64) -> f64 {
        self.counts.get(&item).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    /// Dense magnitude vector padded with zeros to n.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self.counts.values().map(|v| v.abs()).collect();
        out.sort_by(|a, b| b.partial_cmp(a).unwrap());
        out.truncate(n);
        out.resize(n, 0.0);
        out
    }

    pub fn norm(&self, spec: &NormSpec, n: usize) -> f64 {
        spec.eval_vector(&self.to_dense(n))
    }

    pub fn f2(&self) -> f64 {
        self.counts.values().map(|v| v * v).sum()
    }

    /// Squared L2 mass of everything except the `k` largest magnitudes.
    pub fn tail_f2(&self, k: usize) -> f64 {
        let mut sq: Vec<f64> = self.counts.values().map(|v| v * v).collect();
        sq.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sq.iter().skip(k).sum()
    }

    /// Exact level decomposition under the given base and boundary.
    pub fn level_vector(&self, xi: f64, gamma: f64, levels: usize) -> LevelVector {
        let mut lv = LevelVector::new(xi, gamma, levels);
        for v in self.counts.values() {
            let i = lv.level_of(v.abs()) as usize;
            assert!(i < levels, "magnitude {v} beyond level range");
            lv.sizes[i] += 1.0;
        }
        lv
    }

    /// Restriction to substream S_j of the subsampler.
    pub fn restrict(&self, sub: &Subsampler, j: u32) -> FrequencyVector {
        let counts = self
            .counts
            .iter()
            .filter(|(&k, _)| sub.member(j, k).unwrap())
            .map(|(&k, &v)| (k, v))
            .collect();
        FrequencyVector { counts }
    }
}
