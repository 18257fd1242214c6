use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{surprisal_bits, Example};
use crate::text::Tokens;

/// Closed-form smoothed conditional table.
///
/// `p(y | x) = (c(x, y) + α) / (c(x) + α |W|)` where the whole output is one
/// symbol of W. Inputs never seen in training back off to the smoothed
/// marginal, which is also what a null-trained table predicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel {
    pub(crate) alpha: f64,
    pub(crate) labels: Vec<String>,
    pub(crate) marginal: Vec<u64>,
    pub(crate) table: BTreeMap<String, Vec<u64>>,
}

impl TabularModel {
    pub(crate) fn fit(examples: &[Example], alpha: f64) -> Self {
        let mut labels: Vec<String> = examples.iter().map(|e| e.output.joined()).collect();
        labels.sort();
        labels.dedup();
        let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut marginal = vec![0u64; labels.len()];
        let mut table: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for e in examples {
            let y = index[e.output.joined().as_str()];
            marginal[y] += 1;
            if let Some(input) = &e.input {
                table.entry(input.joined()).or_insert_with(|| vec![0; labels.len()])[y] += 1;
            }
        }
        TabularModel {
            alpha,
            labels,
            marginal,
            table,
        }
    }

    fn smoothed(&self, counts: &[u64], y: Option<usize>) -> f64 {
        let total: u64 = counts.iter().sum();
        let w = self.labels.len() as f64;
        let c = y.map_or(0, |y| counts[y]) as f64;
        let denom = total as f64 + self.alpha * w;
        if denom == 0.0 {
            return 0.0;
        }
        (c + self.alpha) / denom
    }

    pub(crate) fn probability(&self, input: Option<&Tokens>, output: &Tokens) -> f64 {
        let y = self.labels.binary_search(&output.joined()).ok();
        if y.is_none() {
            return 0.0;
        }
        let counts = input
            .and_then(|x| self.table.get(&x.joined()))
            .unwrap_or(&self.marginal);
        self.smoothed(counts, y)
    }

    pub(crate) fn score(&self, input: Option<&Tokens>, output: &Tokens) -> f64 {
        surprisal_bits(self.probability(input, output))
    }
}
