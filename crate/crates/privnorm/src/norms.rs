//! Symmetric norms: the built-in L_p and top-k families, custom norms with a
//! declared concentration bound, evaluation on dense vectors and on level
//! vectors, and a randomized property check for norm axioms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::levels::LevelVector;

#[derive(Debug, Clone)]
pub enum NormSpec {
    /// L_p with p > 0 (a quasi-norm for p < 1).
    Lp(f64),
    /// Sum of the k largest magnitudes.
    TopK(u64),
    /// Caller-supplied symmetric function with a declared mmc bound
    /// (NaN when unknown).
    Custom { name: String, mmc: f64, eval: fn(&[f64]) -> f64 },
}

impl NormSpec {
    pub fn custom(name: &str, mmc: f64, eval: fn(&[f64]) -> f64) -> NormSpec {
        NormSpec::Custom { name: name.to_string(), mmc, eval }
    }

    /// Parse the CLI syntax: "lp:2", "lp:0.5", "topk:10".
    pub fn parse(text: &str) -> Result<NormSpec> {
        let (family, arg) = text
            .split_once(':')
            .ok_or_else(|| Error::Usage(format!("norm {text:?}: expected lp:<p> or topk:<k>")))?;
        match family {
            "lp" => {
                let p: f64 = arg
                    .parse()
                    .map_err(|_| Error::Usage(format!("bad p value {arg:?}")))?;
                if !(p > 0.0) || !p.is_finite() {
                    return Err(Error::Usage("lp requires finite p > 0".into()));
                }
                Ok(NormSpec::Lp(p))
            }
            "topk" => {
                let k: u64 = arg
                    .parse()
                    .map_err(|_| Error::Usage(format!("bad k value {arg:?}")))?;
                if k == 0 {
                    return Err(Error::Usage("topk requires k >= 1".into()));
                }
                Ok(NormSpec::TopK(k))
            }
            _ => Err(Error::Usage(format!("unknown norm family {family:?}"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            NormSpec::Lp(p) => format!("lp:{p}"),
            NormSpec::TopK(k) => format!("topk:{k}"),
            NormSpec::Custom { name, .. } => name.clone(),
        }
    }

    /// Evaluate on a raw vector. The input is canonicalized (absolute values,
    /// sorted descending) before evaluation, so sign flips and permutations
    /// give bit-identical results.
    pub fn eval_vector(&self, v: &[f64]) -> f64 {
        let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        self.eval_canonical(&mags)
    }

    fn eval_canonical(&self, mags: &[f64]) -> f64 {
        match self {
            NormSpec::Lp(p) if *p == 1.0 => mags.iter().sum(),
            NormSpec::Lp(p) if *p == 2.0 => {
                mags.iter().map(|&x| x * x).sum::<f64>().sqrt()
            }
            NormSpec::Lp(p) => {
                let max = mags.first().copied().unwrap_or(0.0);
                if max == 0.0 {
                    return 0.0;
                }
                // factor out the max so x^p stays in range for any p
                let sum: f64 = mags.iter().map(|&x| (x / max).powf(*p)).sum();
                max * sum.powf(1.0 / p)
            }
            NormSpec::TopK(k) => mags.iter().take(*k as usize).sum(),
            NormSpec::Custom { eval, .. } => eval(mags),
        }
    }

    /// Evaluate on a level vector without materializing coordinates (except
    /// for custom norms, which get a dense expansion padded to n).
    pub fn eval_on_levels(&self, lv: &LevelVector, n: usize) -> f64 {
        match self {
            NormSpec::Lp(p) if *p == 1.0 => (0..lv.sizes.len())
                .map(|i| lv.sizes[i] * lv.weight(i as u32))
                .sum(),
            NormSpec::Lp(p) if *p == 2.0 => (0..lv.sizes.len() as u32)
                .map(|i| lv.l2_contribution(i))
                .sum::<f64>()
                .sqrt(),
            NormSpec::Lp(p) => {
                let mut max = 0.0f64;
                for (i, &sz) in lv.sizes.iter().enumerate() {
                    if sz > 0.0 {
                        max = max.max(lv.weight(i as u32));
                    }
                }
                if max == 0.0 {
                    return 0.0;
                }
                let mut sum = 0.0;
                for (i, &sz) in lv.sizes.iter().enumerate() {
                    if sz > 0.0 {
                        sum += sz * (lv.weight(i as u32) / max).powf(*p);
                    }
                }
                max * sum.powf(1.0 / p)
            }
            NormSpec::TopK(k) => {
                let mut left = *k as f64;
                let mut total = 0.0;
                for i in (0..lv.sizes.len()).rev() {
                    if lv.sizes[i] <= 0.0 {
                        continue;
                    }
                    let take = lv.sizes[i].min(left);
                    total += take * lv.weight(i as u32);
                    left -= take;
                    if left <= 0.0 {
                        break;
                    }
                }
                total
            }
            NormSpec::Custom { eval, .. } => eval(&lv.to_dense(n)),
        }
    }

    /// Randomized check of the norm axioms on vectors of length n: absolute
    /// homogeneity, permutation/sign invariance (bit-exact), and the triangle
    /// inequality -- replaced by p-th-power subadditivity for L_p with p < 1,
    /// where the plain triangle inequality genuinely fails. Returns the list
    /// of violations found.
    pub fn property_check(&self, n: usize, trials: u32, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut violations = Vec::new();
        let tol = 1e-9;
        for t in 0..trials {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let nx = self.eval_vector(&x);
            if nx < 0.0 {
                violations.push(format!("trial {t}: negative value {nx}"));
            }
            // homogeneity
            let c: f64 = rng.gen_range(0.1..5.0);
            let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
            let ncx = self.eval_vector(&cx);
            if (ncx - c * nx).abs() > tol * (1.0 + c * nx) {
                violations.push(format!("trial {t}: homogeneity off: {ncx} vs {}", c * nx));
            }
            // permutation + sign invariance, bit-exact
            let mut perm = x.clone();
            perm.reverse();
            for (i, v) in perm.iter_mut().enumerate() {
                if i % 2 == 0 {
                    *v = -*v;
                }
            }
            if self.eval_vector(&perm).to_bits() != nx.to_bits() {
                violations.push(format!("trial {t}: not invariant under permutation/signs"));
            }
            // triangle inequality (or its p < 1 substitute)
            let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let ny = self.eval_vector(&y);
            let nxy = self.eval_vector(&xy);
            match self {
                NormSpec::Lp(p) if *p < 1.0 => {
                    if nxy.powf(*p) > nx.powf(*p) + ny.powf(*p) + tol {
                        violations.push(format!("trial {t}: p-power subadditivity violated"));
                    }
                }
                _ => {
                    if nxy > nx + ny + tol * (1.0 + nx + ny) {
                        violations.push(format!("trial {t}: triangle inequality violated"));
                    }
                }
            }
        }
        violations
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert!(matches!(NormSpec::parse("lp:2").unwrap(), NormSpec::Lp(p) if p == 2.0));
        assert!(matches!(NormSpec::parse("lp:0.5").unwrap(), NormSpec::Lp(p) if p == 0.5));
        assert!(matches!(NormSpec::parse("topk:10").unwrap(), NormSpec::TopK(10)));
        assert!(NormSpec::parse("lq:2").is_err());
        assert!(NormSpec::parse("lp:-1").is_err());
        assert!(NormSpec::parse("topk:0").is_err());
        assert!(NormSpec::parse("garbage").is_err());
    }

    #[test]
    fn lp_known_values() {
        // (3, 4): L1 = 7, L2 = 5, L0.5 = (sqrt 3 + sqrt 4)^2
        let v = [3.0, 4.0];
        assert_eq!(NormSpec::Lp(1.0).eval_vector(&v), 7.0);
        assert!((NormSpec::Lp(2.0).eval_vector(&v) - 5.0).abs() < 1e-12);
        let half = NormSpec::Lp(0.5).eval_vector(&v);
        let expect = (3.0f64.sqrt() + 2.0).powi(2);
        assert!((half - expect).abs() < 1e-9);
    }

    #[test]
    fn topk_known_values() {
        let v = [5.0, -9.0, 1.0, 3.0];
        assert_eq!(NormSpec::TopK(1).eval_vector(&v), 9.0);
        assert_eq!(NormSpec::TopK(2).eval_vector(&v), 14.0);
        assert_eq!(NormSpec::TopK(10).eval_vector(&v), 18.0); // k > len: L1
    }

    #[test]
    fn sign_and_permutation_invariance_bit_exact() {
        let spec = NormSpec::Lp(3.0);
        let a = [0.1, -2.7, 3.14, 0.0, -0.1];
        let b = [-3.14, 0.1, 0.0, 2.7, 0.1];
        assert_eq!(spec.eval_vector(&a).to_bits(), spec.eval_vector(&b).to_bits());
    }

    #[test]
    fn levels_match_dense_evaluation() {
        // V = {(level 3, size 2), (level 1, size 5)} at xi=2, gamma=1
        let mut lv = LevelVector::new(2.0, 1.0, 8);
        lv.sizes[3] = 2.0;
        lv.sizes[1] = 5.0;
        let dense = lv.to_dense(16);
        for spec in [NormSpec::Lp(1.0), NormSpec::Lp(2.0), NormSpec::Lp(0.5), NormSpec::TopK(3)] {
            let a = spec.eval_on_levels(&lv, 16);
            let b = spec.eval_vector(&dense);
            assert!((a - b).abs() < 1e-9 * (1.0 + b), "{}: {a} vs {b}", spec.label());
        }
    }

    #[test]
    fn topk_on_levels_example() {
        // one coordinate at level 3, xi = 2, gamma = 1: top-1 = weight 8
        let mut lv = LevelVector::new(2.0, 1.0, 8);
        lv.sizes[3] = 2.0;
        assert_eq!(NormSpec::TopK(1).eval_on_levels(&lv, 8), 8.0);
        assert_eq!(NormSpec::TopK(2).eval_on_levels(&lv, 8), 16.0);
    }

    #[test]
    fn fractional_sizes_interpolate() {
        let mut lv = LevelVector::new(2.0, 1.0, 8);
        lv.sizes[2] = 1.5; // noisy size need not be integral
        assert_eq!(NormSpec::Lp(1.0).eval_on_levels(&lv, 8), 6.0);
        assert_eq!(NormSpec::TopK(1).eval_on_levels(&lv, 8), 4.0);
    }

    #[test]
    fn property_check_accepts_real_norms() {
        for spec in [NormSpec::Lp(1.0), NormSpec::Lp(2.0), NormSpec::Lp(0.5), NormSpec::TopK(3)] {
            let v = spec.property_check(16, 50, 42);
            assert!(v.is_empty(), "{}: {v:?}", spec.label());
        }
    }

    #[test]
    fn property_check_rejects_non_norm() {
        // fails homogeneity and positivity at zero
        let broken = NormSpec::custom("sum-plus-one", 1.0, |v: &[f64]| {
            v.iter().sum::<f64>() + 1.0
        });
        let v = broken.property_check(8, 20, 7);
        assert!(!v.is_empty());
    }
}
