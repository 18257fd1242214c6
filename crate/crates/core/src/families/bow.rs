use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::{surprisal_bits, Example, TrainingReport};
use crate::error::{Error, Result};
use crate::text::{Tokens, SEP};

/// Softmax regression over bag-of-words features.
///
/// A feature is a (segment index, token) pair, where the segment index counts
/// the separators before the token, so words of response A and response B
/// stay distinguishable. Each input's features are L2-normalized, which keeps
/// the loss curvature below `2 / ln 2` and full-batch descent at the default
/// learning rate monotone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowModel {
    pub(crate) classes: Vec<String>,
    pub(crate) features: BTreeMap<String, usize>,
    /// Row-major `classes x features`.
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

fn feature_keys(input: &Tokens) -> Vec<String> {
    let mut seg = 0usize;
    let mut keys = Vec::with_capacity(input.len());
    for t in input.iter() {
        if t == SEP {
            seg += 1;
        } else {
            keys.push(format!("{seg} {t}"));
        }
    }
    keys.sort();
    keys.dedup();
    keys
}

impl BowModel {
    fn encode(&self, input: Option<&Tokens>) -> Vec<(usize, f64)> {
        let Some(input) = input else { return Vec::new() };
        let idx: Vec<usize> = feature_keys(input)
            .iter()
            .filter_map(|k| self.features.get(k).copied())
            .collect();
        if idx.is_empty() {
            return Vec::new();
        }
        let v = 1.0 / (idx.len() as f64).sqrt();
        idx.into_iter().map(|i| (i, v)).collect()
    }

    fn logits(&self, x: &[(usize, f64)], out: &mut [f64]) {
        let f = self.features.len();
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * f..(c + 1) * f];
            *o = self.bias[c] + x.iter().map(|&(j, v)| row[j] * v).sum::<f64>();
        }
    }

    fn softmax(logits: &mut [f64]) {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            z += *l;
        }
        for l in logits.iter_mut() {
            *l /= z;
        }
    }

    pub(crate) fn fit(
        examples: &[Example],
        learning_rate: f64,
        max_epochs: usize,
        tolerance_bits: f64,
    ) -> Result<(Self, TrainingReport)> {
        let mut classes: Vec<String> = examples.iter().map(|e| e.output.joined()).collect();
        classes.sort();
        classes.dedup();
        let mut keys: Vec<String> = examples
            .iter()
            .filter_map(|e| e.input.as_ref())
            .flat_map(feature_keys)
            .collect();
        keys.sort();
        keys.dedup();
        let features: BTreeMap<String, usize> = keys.into_iter().enumerate().map(|(i, k)| (k, i)).collect();

        let n = examples.len() as f64;
        let c = classes.len();
        let mut freq = vec![0.0; c];
        let labels: Vec<usize> = examples
            .iter()
            .map(|e| classes.binary_search(&e.output.joined()).expect("label collected above"))
            .collect();
        for &y in &labels {
            freq[y] += 1.0;
        }
        let bias = freq.iter().map(|&k| ((k + 0.5) / (n + 0.5 * c as f64)).ln()).collect();
        let mut model = BowModel {
            weights: vec![0.0; c * features.len()],
            classes,
            features,
            bias,
        };
        let xs: Vec<Vec<(usize, f64)>> = examples.iter().map(|e| model.encode(e.input.as_ref())).collect();

        let f = model.features.len();
        let mut report = TrainingReport::default();
        let mut probs = vec![0.0; c];
        let mut grad_w = vec![0.0; c * f];
        let mut grad_b = vec![0.0; c];
        let mut converged = false;
        for epoch in 0..=max_epochs {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for (x, &y) in xs.iter().zip(&labels) {
                model.logits(x, &mut probs);
                Self::softmax(&mut probs);
                let p = probs[y];
                loss += if p.is_nan() { f64::NAN } else { surprisal_bits(p) };
                for (k, p) in probs.iter().enumerate() {
                    let d = (p - if k == y { 1.0 } else { 0.0 }) / (n * LN_2);
                    grad_b[k] += d;
                    let row = &mut grad_w[k * f..(k + 1) * f];
                    for &(j, v) in x {
                        row[j] += d * v;
                    }
                }
            }
            loss /= n;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss });
            }
            if let Some(&prev) = report.loss_history_bits.last() {
                if (prev - loss).abs() < tolerance_bits {
                    report.loss_history_bits.push(loss);
                    converged = true;
                    break;
                }
            }
            report.loss_history_bits.push(loss);
            if epoch == max_epochs {
                break;
            }
            for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                *w -= learning_rate * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&grad_b) {
                *b -= learning_rate * g;
            }
            if model.weights.iter().chain(&model.bias).any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, loss: f64::INFINITY });
            }
            report.epochs = epoch + 1;
        }
        report.non_convergence = !converged;
        Ok((model, report))
    }

    pub(crate) fn probability(&self, input: Option<&Tokens>, output: &Tokens) -> f64 {
        let Ok(y) = self.classes.binary_search(&output.joined()) else {
            return 0.0;
        };
        let x = self.encode(input);
        let mut probs = vec![0.0; self.classes.len()];
        self.logits(&x, &mut probs);
        Self::softmax(&mut probs);
        probs[y]
    }

    pub(crate) fn score(&self, input: Option<&Tokens>, output: &Tokens) -> f64 {
        surprisal_bits(self.probability(input, output))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{FamilyConfig, PredictiveFamily};

    fn fam(max_epochs: usize) -> PredictiveFamily {
        PredictiveFamily::new(FamilyConfig::BowLinear {
            learning_rate: 0.1,
            max_epochs,
            tolerance_bits: 1e-6,
        })
        .unwrap()
    }

    fn toks(s: &str) -> Tokens {
        Tokens::from_text(s)
    }

    #[test]
    fn separable_two_word_inputs_converge_below_a_tenth_of_a_bit() {
        let mut data = Vec::new();
        for _ in 0..25 {
            data.push(Example::text("good great", "pos"));
            data.push(Example::text("bad awful", "neg"));
        }
        let pred = fam(500).train(&data, 0).unwrap();
        let eval = [("good great", "pos"), ("bad awful", "neg")];
        let mean: f64 = eval
            .iter()
            .map(|(x, y)| pred.score(Some(&toks(x)), &toks(y)).unwrap())
            .sum::<f64>()
            / 2.0;
        assert!(mean <= 0.1, "eval surprisal {mean}");
    }

    /// With one-hot inputs the logistic MLE is the empirical conditional
    /// table, so the optimal loss is the empirical conditional entropy.
    #[test]
    fn non_separable_fit_approaches_the_closed_form_optimum() {
        let mut data = Vec::new();
        for i in 0..100 {
            data.push(Example::text("a", if i < 80 { "A" } else { "B" }));
            data.push(Example::text("b", if i < 30 { "A" } else { "B" }));
        }
        let h = |p: f64| -(p * p.log2() + (1.0 - p) * (1.0 - p).log2());
        let optimum = 0.5 * h(0.8) + 0.5 * h(0.3);
        let pred = fam(5000).train(&data, 0).unwrap();
        let last = *pred.report().loss_history_bits.last().unwrap();
        assert!((last - optimum).abs() < 5e-3, "{last} vs {optimum}");
        let p_a = 2f64.powf(-pred.score(Some(&toks("a")), &toks("A")).unwrap());
        assert!((p_a - 0.8).abs() < 0.02, "{p_a}");
    }

    #[test]
    fn loss_is_monotone_non_increasing() {
        let mut data = Vec::new();
        let words = ["x", "y", "z", "w", "v"];
        for i in 0..60usize {
            let input = format!("{} {} {SEP} {}", words[i % 5], words[(i / 5) % 5], words[(i * 7) % 5]);
            let label = if (i * 31) % 7 < 3 { "A" } else { "B" };
            data.push(Example::text(&input, label));
        }
        let pred = fam(500).train(&data, 0).unwrap();
        let hist = &pred.report().loss_history_bits;
        assert!(hist.len() > 2);
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn epoch_cap_is_reported_not_fatal() {
        let data = vec![Example::text("a", "A"), Example::text("b", "B")];
        let pred = fam(3).train(&data, 0).unwrap();
        assert!(pred.report().non_convergence);
        assert_eq!(pred.report().epochs, 3);
    }

    #[test]
    fn segments_distinguish_positions() {
        let mut data = Vec::new();
        for _ in 0..20 {
            data.push(Example::text(&format!("good {SEP} meh"), "A"));
            data.push(Example::text(&format!("meh {SEP} good"), "B"));
        }
        let pred = fam(500).train(&data, 0).unwrap();
        let s = pred.score(Some(&toks(&format!("good {SEP} meh"))), &toks("A")).unwrap();
        assert!(s < 0.5, "{s}");
    }

    #[test]
    fn diverging_learning_rate_is_an_error() {
        let fam = PredictiveFamily::new(FamilyConfig::BowLinear {
            learning_rate: f64::MAX,
            max_epochs: 50,
            tolerance_bits: 0.0,
        })
        .unwrap();
        let data = vec![Example::text("a", "A"), Example::text("a", "B"), Example::text("a", "A")];
        assert!(matches!(fam.train(&data, 0), Err(Error::TrainingDiverged { .. })));
    }
}
