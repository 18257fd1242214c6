//! Synthetic datasets with known information structure, plus brute-force
//! Shannon quantities on empirical joints. Used by tests and the bundled
//! fixtures.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Instance, Label, PreferencePair};
use crate::features::{FeatureKind, FeatureSpec};

fn draw(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Entropy in bits of a count table.
pub fn entropy_of_counts<'a>(counts: impl IntoIterator<Item = &'a usize>) -> f64 {
    let counts: Vec<usize> = counts.into_iter().copied().filter(|c| *c > 0).collect();
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// Shannon mutual information in bits of the empirical joint of `(x, y)`.
pub fn empirical_mi<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> f64 {
    let mut joint: HashMap<(&str, &str), usize> = HashMap::new();
    let mut xs: HashMap<&str, usize> = HashMap::new();
    let mut ys: HashMap<&str, usize> = HashMap::new();
    for (x, y) in pairs {
        *joint.entry((x, y)).or_default() += 1;
        *xs.entry(x).or_default() += 1;
        *ys.entry(y).or_default() += 1;
    }
    entropy_of_counts(xs.values()) + entropy_of_counts(ys.values()) - entropy_of_counts(joint.values())
}

/// Empirical `I(X; Y)` over instances' input and output text.
pub fn instances_mi(instances: &[Instance]) -> f64 {
    empirical_mi(instances.iter().map(|i| (i.input_text.as_str(), i.output_text.as_str())))
}

/// A joint distribution over `x0..x{nx}` × `y0..y{ny}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub nx: usize,
    pub ny: usize,
    /// Row-major `p[x * ny + y]`.
    pub probs: Vec<f64>,
}

impl Joint {
    /// Random support sizes up to the bounds, with skewed weights so that
    /// the suite spans near-independent to near-deterministic joints.
    pub fn random(rng: &mut impl Rng, max_x: usize, max_y: usize) -> Joint {
        let nx = rng.random_range(2..=max_x);
        let ny = rng.random_range(2..=max_y);
        let skew = [1.0, 2.0, 4.0, 8.0][rng.random_range(0..4)];
        let mut probs: Vec<f64> = (0..nx * ny).map(|_| rng.random::<f64>().powf(skew) + 1e-3).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Joint { nx, ny, probs }
    }

    pub fn mutual_information(&self) -> f64 {
        let px: Vec<f64> = (0..self.nx).map(|x| self.probs[x * self.ny..(x + 1) * self.ny].iter().sum()).collect();
        let py: Vec<f64> = (0..self.ny).map(|y| (0..self.nx).map(|x| self.probs[x * self.ny + y]).sum()).collect();
        let mut mi = 0.0;
        for x in 0..self.nx {
            for y in 0..self.ny {
                let p = self.probs[x * self.ny + y];
                if p > 0.0 {
                    mi += p * (p / (px[x] * py[y])).log2();
                }
            }
        }
        mi
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<Instance> {
        (0..n)
            .map(|i| {
                let cell = draw(rng, &self.probs);
                Instance::new(format!("j{i:05}"), format!("x{}", cell / self.ny), format!("y{}", cell % self.ny))
            })
            .collect()
    }
}

/// Which side of the planted feature carries the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Planted {
    /// Y is the parity of the feature token.
    Feature,
    /// Y is the parity of the complement token.
    Complement,
    /// Y is a fair coin.
    Independent,
}

/// The feature that splits planted inputs `k{a} n{b}`: keeps `k*`, so the
/// complement keeps `n*`.
pub fn planted_feature() -> FeatureSpec {
    FeatureSpec::new(FeatureKind::WordlistKeep).with_words(["k0", "k1", "k2", "k3"])
}

/// Inputs `k{a} n{b}` with `a, b` uniform on 0..4.
pub fn planted(kind: Planted, n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (a, b) = (rng.random_range(0..4u32), rng.random_range(0..4u32));
            let coin = rng.random_range(0..2u32);
            let y = match kind {
                Planted::Feature => a % 2,
                Planted::Complement => b % 2,
                Planted::Independent => coin,
            };
            Instance::new(format!("p{i:05}"), format!("k{a} n{b}"), format!("y{y}"))
        })
        .collect()
}

/// `Y = (F, G)` where `F` is a noisy function of the feature token and `G`
/// a noisy function of the complement token. Since the two parts are
/// independent, `I(Φ′; Y) = I(X; Y | Φ)` and `I(Φ; Y) = I(X; Y | Φ′)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorized {
    pub f: Vec<u32>,
    pub g: Vec<u32>,
    pub noise_f: f64,
    pub noise_g: f64,
}

impl Factorized {
    pub fn random(rng: &mut impl Rng) -> Factorized {
        let part = |rng: &mut ChaCha8Rng| -> (Vec<u32>, f64) {
            let range = rng.random_range(1..=3u32);
            let f = (0..4).map(|_| rng.random_range(0..range)).collect();
            let noise = [0.0, 0.05, 0.2, 0.5, 1.0][rng.random_range(0..5)];
            (f, noise)
        };
        let mut r = ChaCha8Rng::seed_from_u64(rng.random());
        let (f, noise_f) = part(&mut r);
        let (g, noise_g) = part(&mut r);
        Factorized { f, g, noise_f, noise_g }
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<Instance> {
        let noisy = |rng: &mut dyn rand::RngCore, v: u32, noise: f64| {
            if rng.random::<f64>() < noise {
                rng.random_range(0..3u32)
            } else {
                v
            }
        };
        (0..n)
            .map(|i| {
                let (a, b) = (rng.random_range(0..4usize), rng.random_range(0..4usize));
                let fy = noisy(rng, self.f[a], self.noise_f);
                let gy = noisy(rng, self.g[b], self.noise_g);
                Instance::new(format!("f{i:05}"), format!("k{a} n{b}"), format!("y{fy}{gy}"))
            })
            .collect()
    }
}

/// A deterministic labelling with a known set of corrupted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlippedLabels {
    pub instances: Vec<Instance>,
    pub flipped: BTreeSet<String>,
}

/// `Y = x mod 4` over 16 input values, with each label replaced by a
/// different one with probability `rate`.
pub fn flipped_labels(n: usize, rate: f64, seed: u64) -> FlippedLabels {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flipped = BTreeSet::new();
    let instances = (0..n)
        .map(|i| {
            let x = rng.random_range(0..16u32);
            let mut y = x % 4;
            let id = format!("m{i:05}");
            if rng.random::<f64>() < rate {
                y = (y + rng.random_range(1..4)) % 4;
                flipped.insert(id.clone());
            }
            Instance::new(id, format!("x{x}"), format!("y{y}"))
        })
        .collect();
    FlippedLabels { instances, flipped }
}

const WORDS: [&str; 12] = [
    "the", "answer", "is", "clear", "maybe", "we", "should", "check", "again", "sure", "thanks", "well",
];

fn sentence(rng: &mut impl Rng, words: usize) -> String {
    (0..words).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Preference pairs whose length ratios cluster around 1, 2 and 3, with
/// many pairs exactly at a 2x ratio. Labels weakly favour longer responses.
pub fn preference_pairs(n: usize, seed: u64) -> Vec<PreferencePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let short = rng.random_range(1..=12usize);
            let long = match rng.random_range(0..4) {
                0 => short,
                1 => 2 * short,
                2 => 2 * short - 1,
                _ => short + rng.random_range(0..=2 * short),
            };
            let (la, lb) = if rng.random::<bool>() { (short, long) } else { (long, short) };
            let longer_is_a = la > lb;
            let label = if rng.random::<f64>() < 0.7 && la != lb {
                if longer_is_a { Label::A } else { Label::B }
            } else if rng.random::<bool>() {
                Label::A
            } else {
                Label::B
            };
            let mut meta = BTreeMap::new();
            meta.insert("score_a".into(), serde_json::json!(rng.random_range(0..10)));
            meta.insert("score_b".into(), serde_json::json!(rng.random_range(0..10)));
            PreferencePair {
                id: format!("pair{i:04}"),
                context: format!("question {}", rng.random_range(0..50)),
                response_a: sentence(&mut rng, la),
                response_b: sentence(&mut rng, lb),
                label,
                meta,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::word_count;
    use approx::assert_abs_diff_eq;

    #[test]
    fn empirical_mi_of_copies_and_independence() {
        let copy: Vec<(&str, &str)> = vec![("a", "a"), ("b", "b"), ("a", "a"), ("b", "b")];
        assert_abs_diff_eq!(empirical_mi(copy), 1.0, epsilon = 1e-12);
        let indep = vec![("a", "0"), ("a", "1"), ("b", "0"), ("b", "1")];
        assert_abs_diff_eq!(empirical_mi(indep), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn joint_samples_approach_the_exact_mi() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let joint = Joint::random(&mut rng, 8, 4);
        assert_abs_diff_eq!(joint.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let data = joint.sample(50_000, &mut rng);
        assert!((instances_mi(&data) - joint.mutual_information()).abs() < 0.02);
    }

    #[test]
    fn planted_structure() {
        let data = planted(Planted::Feature, 4000, 1);
        assert!((instances_mi(&data) - 1.0).abs() < 0.01);
        let b_only: Vec<(String, String)> = data
            .iter()
            .map(|i| (i.input_text.split(' ').nth(1).unwrap().to_string(), i.output_text.clone()))
            .collect();
        assert!(empirical_mi(b_only.iter().map(|(x, y)| (x.as_str(), y.as_str()))) < 0.01);
        assert!(instances_mi(&planted(Planted::Independent, 4000, 1)) < 0.02);
    }

    #[test]
    fn flips_hit_the_rate_and_change_the_label() {
        let f = flipped_labels(10_000, 0.1, 4);
        let rate = f.flipped.len() as f64 / 10_000.0;
        assert!((rate - 0.1).abs() < 0.01, "{rate}");
        for inst in &f.instances {
            let x: u32 = inst.input_text[1..].parse().unwrap();
            let y: u32 = inst.output_text[1..].parse().unwrap();
            assert_eq!(y != x % 4, f.flipped.contains(&inst.id));
        }
    }

    #[test]
    fn preference_pairs_cover_the_ratio_boundary() {
        let pairs = preference_pairs(1000, 0);
        let exact = pairs
            .iter()
            .filter(|p| {
                let (a, b) = (word_count(&p.response_a), word_count(&p.response_b));
                a.max(b) == 2 * a.min(b)
            })
            .count();
        assert!(exact > 100, "{exact}");
        assert_eq!(pairs, preference_pairs(1000, 0));
    }
}
