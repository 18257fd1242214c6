use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{surprisal_bits, Example};
use crate::text::Tokens;

const PAD: &str = "⟂s";
const BOUNDARY: &str = "⟂b";
const UNK: &str = "⟂unk";

/// Add-k n-gram model over the stream `[pad.., input, boundary, output]`,
/// trained and scored on output positions only. Order `n` conditions each
/// output token on the previous `n - 1` stream tokens, so with `n >= 3` the
/// first output token sees the tail of the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramModel {
    pub(crate) order: usize,
    pub(crate) add_k: f64,
    /// Output vocabulary, sorted, with the unknown token last.
    pub(crate) vocab: Vec<String>,
    /// Context (space-joined) -> (token index -> count).
    pub(crate) counts: BTreeMap<String, BTreeMap<usize, u64>>,
}

fn stream<'a>(order: usize, input: Option<&'a Tokens>, output: &'a Tokens) -> Vec<&'a str> {
    let mut s: Vec<&str> = vec![PAD; order.saturating_sub(1)];
    if let Some(x) = input {
        s.extend(x.iter());
    }
    s.push(BOUNDARY);
    s.extend(output.iter());
    s
}

impl NgramModel {
    pub(crate) fn fit(examples: &[Example], order: usize, add_k: f64) -> Self {
        let mut vocab: Vec<String> = examples
            .iter()
            .flat_map(|e| e.output.iter().map(str::to_string))
            .collect();
        vocab.sort();
        vocab.dedup();
        vocab.push(UNK.to_string());
        let mut model = NgramModel {
            order,
            add_k,
            vocab,
            counts: BTreeMap::new(),
        };
        for e in examples {
            model.for_each_position(e.input.as_ref(), &e.output, |m, ctx, tok| {
                let idx = m.index(tok);
                *m.counts.entry(ctx).or_default().entry(idx).or_insert(0) += 1;
            });
        }
        model
    }

    fn index(&self, token: &str) -> usize {
        let known = &self.vocab[..self.vocab.len() - 1];
        known.binary_search_by(|v| v.as_str().cmp(token)).unwrap_or(self.vocab.len() - 1)
    }

    fn for_each_position(
        &mut self,
        input: Option<&Tokens>,
        output: &Tokens,
        mut f: impl FnMut(&mut Self, String, &str),
    ) {
        let s = stream(self.order, input, output);
        let start = s.len() - output.len();
        for pos in start..s.len() {
            let ctx = s[pos + 1 - self.order..pos].join(" ");
            f(self, ctx, s[pos]);
        }
    }

    pub(crate) fn probability(&self, context: &str, token: &str) -> f64 {
        let v = self.vocab.len() as f64;
        let idx = self.index(token);
        let (c, total) = match self.counts.get(context) {
            Some(row) => (*row.get(&idx).unwrap_or(&0), row.values().sum::<u64>()),
            None => (0, 0),
        };
        (c as f64 + self.add_k) / (total as f64 + self.add_k * v)
    }

    pub(crate) fn score(&self, input: Option<&Tokens>, output: &Tokens) -> f64 {
        let s = stream(self.order, input, output);
        let start = s.len() - output.len();
        let total: f64 = (start..s.len())
            .map(|pos| {
                let ctx = s[pos + 1 - self.order..pos].join(" ");
                surprisal_bits(self.probability(&ctx, s[pos]))
            })
            .sum();
        total / output.len() as f64
    }
}
