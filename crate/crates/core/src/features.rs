//! Attributes Φ and their complements Φ′, realized as input transforms.
//!
//! Mask kinds hide tokens position by position: Φ and Φ′ are aligned token
//! sequences and at every data position exactly one of them shows the token
//! and the other shows [`MASK`]. Segment separators and layout headers are
//! structure, not data, and appear in both. Fields of the layout that a
//! mask feature does not target are hidden in Φ and shown in Φ′.
//!
//! Scalar kinds render their value as a bucket token such as
//! `⟂length_difference=4`; the buckets are quantiles of the train split.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{InputLayout, Instance};
use crate::error::{Error, Result};
use crate::hashing::{digest_json, digest_parts};
use crate::text::{Tokenizer, Tokens, MASK, SEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    TokenOverlap,
    WordlistKeep,
    WordlistRemove,
    LengthDifference,
    WordComplexity,
    LanguagePartition,
    ScoreDelta,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::TokenOverlap => "token_overlap",
            FeatureKind::WordlistKeep => "wordlist_keep",
            FeatureKind::WordlistRemove => "wordlist_remove",
            FeatureKind::LengthDifference => "length_difference",
            FeatureKind::WordComplexity => "word_complexity",
            FeatureKind::LanguagePartition => "language_partition",
            FeatureKind::ScoreDelta => "score_delta",
        }
    }

    pub fn is_mask(self) -> bool {
        matches!(
            self,
            FeatureKind::TokenOverlap
                | FeatureKind::WordlistKeep
                | FeatureKind::WordlistRemove
                | FeatureKind::LanguagePartition
        )
    }

    /// How Φ′ is built, recorded in reports because the complement of a
    /// non-mask attribute is a modelling choice.
    pub fn complement_rule(self) -> &'static str {
        match self {
            FeatureKind::TokenOverlap => "inverse mask: keep only tokens absent from the other segment",
            FeatureKind::WordlistKeep => "inverse mask: keep only tokens not on the wordlist",
            FeatureKind::WordlistRemove => "inverse mask: keep only tokens on the wordlist",
            FeatureKind::LanguagePartition => "inverse mask: keep only tokens of the other language class",
            FeatureKind::LengthDifference => "length equalization: the shorter response is repeated cyclically",
            FeatureKind::WordComplexity | FeatureKind::ScoreDelta => "unmodified input with the scalar removed",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageClass {
    #[default]
    English,
    NonEnglish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    /// Layout fields the feature looks at; each kind has its own default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<String>>,
    /// One word per line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wordlist: Option<PathBuf>,
    /// Inline alternative to `wordlist`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
    /// `word<TAB>count` per line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freq_table: Option<PathBuf>,
    /// Number of quantile buckets for scalar kinds; 0 renders exact values.
    pub buckets: usize,
    pub language: LanguageClass,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            fields: None,
            wordlist: None,
            words: None,
            freq_table: None,
            buckets: 10,
            language: LanguageClass::English,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    #[serde(default)]
    pub params: FeatureParams,
}

impl FeatureSpec {
    pub fn new(kind: FeatureKind) -> Self {
        FeatureSpec {
            kind,
            params: FeatureParams::default(),
        }
    }

    pub fn with_words<S: AsRef<str>>(mut self, words: impl IntoIterator<Item = S>) -> Self {
        self.params.words = Some(words.into_iter().map(|w| w.as_ref().to_string()).collect());
        self
    }

    pub fn with_fields<S: AsRef<str>>(mut self, fields: impl IntoIterator<Item = S>) -> Self {
        self.params.fields = Some(fields.into_iter().map(|w| w.as_ref().to_string()).collect());
        self
    }

    pub fn with_buckets(mut self, buckets: usize) -> Self {
        self.params.buckets = buckets;
        self
    }

    /// Make relative resource paths relative to `base` (the config file's
    /// directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        for path in [&mut self.params.wordlist, &mut self.params.freq_table].into_iter().flatten() {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

/// A scalar attribute value and its canonical token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarRendering {
    pub raw_value: f64,
    pub bucket_id: i64,
    pub rendered_text: String,
}

/// Quantile bucket boundaries. A value's bucket is the number of boundaries
/// that are `<=` the value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Buckets {
    pub boundaries: Vec<f64>,
}

impl Buckets {
    pub fn fit(values: &[f64], count: usize) -> Buckets {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut boundaries: Vec<f64> = Vec::new();
        if n > 0 {
            for q in 1..count {
                let b = sorted[(q * n / count).min(n - 1)];
                if b > sorted[0] && boundaries.last() != Some(&b) {
                    boundaries.push(b);
                }
            }
        }
        Buckets { boundaries }
    }

    pub fn bucket(&self, value: f64) -> usize {
        self.boundaries.partition_point(|b| *b <= value)
    }
}

fn render_scalar(name: &str, value: f64, buckets: Option<&Buckets>) -> ScalarRendering {
    match buckets {
        Some(b) => {
            let k = b.bucket(value);
            ScalarRendering {
                raw_value: value,
                bucket_id: k as i64,
                rendered_text: format!("⟂{name}={k}"),
            }
        }
        None => ScalarRendering {
            raw_value: value,
            bucket_id: value.round() as i64,
            rendered_text: format!("⟂{name}={value}"),
        },
    }
}

/// Lowercased word with surrounding punctuation stripped, the unit used for
/// wordlist and frequency lookups.
pub fn normalize_word(token: &str) -> String {
    token
        .trim_start_matches('\\')
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Word counts for the complexity feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn parse(text: &str, source: &str) -> Result<FrequencyTable> {
        let mut counts = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: source.into(),
                line: i + 1,
                message,
            };
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected word<TAB>count".into()))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad count: {e}")))?;
            *counts.entry(normalize_word(word)).or_insert(0) += count;
        }
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::Config(format!("frequency table {source} is empty")));
        }
        Ok(FrequencyTable { counts, total })
    }

    /// Relative frequency; unseen words get one count.
    pub fn frequency(&self, word: &str) -> f64 {
        let c = self.counts.get(word).copied().unwrap_or(0).max(1);
        c as f64 / self.total as f64
    }

    /// Mean of `-log2 frequency` over the words of `text` (0 for no words).
    pub fn complexity(&self, text: &str) -> f64 {
        let words: Vec<String> = text
            .split_whitespace()
            .map(normalize_word)
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return 0.0;
        }
        words.iter().map(|w| -self.frequency(w).log2()).sum::<f64>() / words.len() as f64
    }
}

fn read_resource(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Render the layout fields of an instance as one token sequence: segments
/// in slot order, separated by [`SEP`], each preceded by its header.
pub fn render_input(layout: &InputLayout, tokenizer: &Tokenizer, inst: &Instance) -> Result<Tokens> {
    let segments = layout
        .slots
        .iter()
        .map(|s| Ok(tokenizer.tokenize(inst.field(&s.field)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(layout, tokenizer, &segments))
}

fn assemble(layout: &InputLayout, tokenizer: &Tokenizer, segments: &[Tokens]) -> Tokens {
    let mut out = Tokens::default();
    for (i, (slot, seg)) in layout.slots.iter().zip(segments).enumerate() {
        if i > 0 {
            out.push(SEP);
        }
        if let Some(h) = &slot.header {
            out.extend(&tokenizer.tokenize_engine(h));
        }
        out.extend(seg);
    }
    out
}

/// A feature bound to a layout, with its resources loaded and (after
/// [`Feature::fit`]) its bucket boundaries fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    spec: FeatureSpec,
    layout: InputLayout,
    tokenizer: Tokenizer,
    targets: Vec<String>,
    words: BTreeSet<String>,
    freq: Option<FrequencyTable>,
    resource_digest: String,
    buckets: Option<Buckets>,
}

impl Feature {
    pub fn new(spec: FeatureSpec, layout: InputLayout, tokenizer: Tokenizer) -> Result<Feature> {
        let kind = spec.kind;
        let p = &spec.params;
        let layout_fields: Vec<String> = layout.field_names().iter().map(|s| s.to_string()).collect();
        let has = |f: &str| layout_fields.iter().any(|l| l == f);
        let pair_default = || -> Vec<String> {
            if has("response_a") && has("response_b") {
                vec!["response_a".into(), "response_b".into()]
            } else {
                layout_fields.iter().rev().take(2).rev().cloned().collect()
            }
        };
        let targets = match (&p.fields, kind) {
            (Some(f), _) => f.clone(),
            (None, FeatureKind::ScoreDelta) => vec!["score_a".into(), "score_b".into()],
            (None, FeatureKind::TokenOverlap | FeatureKind::LengthDifference) => pair_default(),
            (None, FeatureKind::WordComplexity) if has("response_a") && has("response_b") => pair_default(),
            (None, _) => layout_fields.clone(),
        };
        let needs_two = matches!(
            kind,
            FeatureKind::TokenOverlap | FeatureKind::LengthDifference | FeatureKind::ScoreDelta
        );
        if needs_two && targets.len() != 2 {
            return Err(Error::Config(format!(
                "{} needs exactly two fields, got {:?}",
                kind.as_str(),
                targets
            )));
        }
        if targets.is_empty() {
            return Err(Error::Config(format!("{} has no fields to act on", kind.as_str())));
        }
        if kind != FeatureKind::ScoreDelta {
            if let Some(missing) = targets.iter().find(|t| !has(t)) {
                return Err(Error::Config(format!(
                    "{} field `{missing}` is not part of the input layout {:?}",
                    kind.as_str(),
                    layout_fields
                )));
            }
        }

        let mut words = BTreeSet::new();
        let mut digest_inputs: Vec<String> = Vec::new();
        if let Some(path) = &p.wordlist {
            let text = read_resource(path)?;
            digest_inputs.push(text.clone());
            words.extend(text.lines().map(normalize_word).filter(|w| !w.is_empty()));
        }
        if let Some(inline) = &p.words {
            words.extend(inline.iter().map(|w| normalize_word(w)).filter(|w| !w.is_empty()));
        }
        if matches!(kind, FeatureKind::WordlistKeep | FeatureKind::WordlistRemove)
            && p.wordlist.is_none()
            && p.words.is_none()
        {
            return Err(Error::Config(format!("{} needs `wordlist` or `words`", kind.as_str())));
        }
        let freq = match (&p.freq_table, kind) {
            (Some(path), _) => {
                let text = read_resource(path)?;
                digest_inputs.push(text.clone());
                Some(FrequencyTable::parse(&text, &path.display().to_string())?)
            }
            (None, FeatureKind::WordComplexity) => {
                return Err(Error::Config("word_complexity needs `freq_table`".into()))
            }
            (None, _) => None,
        };
        let resource_digest = digest_parts(digest_inputs.iter().map(String::as_bytes));
        Ok(Feature {
            spec,
            layout,
            tokenizer,
            targets,
            words,
            freq,
            resource_digest,
            buckets: None,
        })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn kind(&self) -> FeatureKind {
        self.spec.kind
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    fn is_scalar(&self) -> bool {
        matches!(
            self.kind(),
            FeatureKind::LengthDifference | FeatureKind::WordComplexity | FeatureKind::ScoreDelta
        )
    }

    /// Fix scalar bucket boundaries from the train split. A no-op for mask
    /// kinds and for exact rendering.
    pub fn fit(mut self, train: &[Instance]) -> Result<Feature> {
        if self.is_scalar() && self.spec.params.buckets > 0 {
            let mut values = Vec::new();
            for inst in train {
                values.extend(self.raw_values(inst)?);
            }
            self.buckets = Some(Buckets::fit(&values, self.spec.params.buckets));
        }
        Ok(self)
    }

    pub fn buckets(&self) -> Option<&Buckets> {
        self.buckets.as_ref()
    }

    /// Identifies everything that determines the transform's output.
    pub fn key(&self) -> String {
        let mut params = self.spec.params.clone();
        params.wordlist = None;
        params.freq_table = None;
        digest_json(&(
            self.kind(),
            params,
            &self.targets,
            &self.layout,
            &self.tokenizer,
            &self.resource_digest,
            &self.buckets,
        ))
    }

    /// The scalar values of an instance (one per target for word
    /// complexity, one otherwise); empty for mask kinds.
    pub fn raw_values(&self, inst: &Instance) -> Result<Vec<f64>> {
        Ok(match self.kind() {
            FeatureKind::LengthDifference => {
                let a = self.tokenizer.tokenize(inst.field(&self.targets[0])?).len() as f64;
                let b = self.tokenizer.tokenize(inst.field(&self.targets[1])?).len() as f64;
                vec![a - b]
            }
            FeatureKind::ScoreDelta => vec![inst.number(&self.targets[0])? - inst.number(&self.targets[1])?],
            FeatureKind::WordComplexity => {
                let freq = self.freq.as_ref().expect("checked at construction");
                self.targets
                    .iter()
                    .map(|t| Ok(freq.complexity(inst.field(t)?)))
                    .collect::<Result<_>>()?
            }
            _ => Vec::new(),
        })
    }

    /// Scalar renderings of an instance, in target order.
    pub fn render(&self, inst: &Instance) -> Result<Vec<ScalarRendering>> {
        let values = self.raw_values(inst)?;
        let names: Vec<String> = match self.kind() {
            FeatureKind::WordComplexity => {
                self.targets.iter().map(|t| format!("word_complexity.{t}")).collect()
            }
            k => vec![k.as_str().to_string()],
        };
        Ok(values
            .iter()
            .zip(&names)
            .map(|(&v, name)| render_scalar(name, v, self.buckets.as_ref()))
            .collect())
    }

    fn segments(&self, inst: &Instance) -> Result<Vec<Tokens>> {
        self.layout
            .slots
            .iter()
            .map(|s| Ok(self.tokenizer.tokenize(inst.field(&s.field)?)))
            .collect()
    }

    /// Per segment, which tokens Φ shows.
    fn keep_masks(&self, segments: &[Tokens]) -> Vec<Vec<bool>> {
        let target_idx: Vec<Option<usize>> = self
            .layout
            .slots
            .iter()
            .map(|s| self.targets.iter().position(|t| *t == s.field))
            .collect();
        let overlap: Vec<BTreeSet<&str>> = if self.kind() == FeatureKind::TokenOverlap {
            let seg_of = |k: usize| target_idx.iter().position(|t| *t == Some(k)).expect("validated target");
            let (a, b) = (seg_of(0), seg_of(1));
            let sa: BTreeSet<&str> = segments[a].iter().collect();
            let sb: BTreeSet<&str> = segments[b].iter().collect();
            let both: BTreeSet<&str> = sa.intersection(&sb).copied().collect();
            vec![both]
        } else {
            Vec::new()
        };
        segments
            .iter()
            .zip(&target_idx)
            .map(|(seg, target)| {
                seg.iter()
                    .map(|tok| {
                        target.is_some()
                            && match self.kind() {
                                FeatureKind::TokenOverlap => overlap[0].contains(tok),
                                FeatureKind::WordlistKeep => self.words.contains(&normalize_word(tok)),
                                FeatureKind::WordlistRemove => !self.words.contains(&normalize_word(tok)),
                                FeatureKind::LanguagePartition => {
                                    self.language_of(tok) == self.spec.params.language
                                }
                                _ => unreachable!("mask kinds only"),
                            }
                    })
                    .collect()
            })
            .collect()
    }

    fn language_of(&self, token: &str) -> LanguageClass {
        let english = if self.words.is_empty() {
            token.is_ascii()
        } else {
            let w = normalize_word(token);
            w.is_empty() || self.words.contains(&w)
        };
        if english {
            LanguageClass::English
        } else {
            LanguageClass::NonEnglish
        }
    }

    fn masked(&self, inst: &Instance, show_kept: bool) -> Result<Tokens> {
        let segments = self.segments(inst)?;
        let masks = self.keep_masks(&segments);
        let shown: Vec<Tokens> = segments
            .iter()
            .zip(&masks)
            .map(|(seg, mask)| {
                Tokens::new(
                    seg.iter()
                        .zip(mask)
                        .map(|(tok, &keep)| if keep == show_kept { tok.to_string() } else { MASK.to_string() })
                        .collect(),
                )
            })
            .collect();
        Ok(assemble(&self.layout, &self.tokenizer, &shown))
    }

    fn scalar_tokens(&self, inst: &Instance) -> Result<Tokens> {
        Ok(Tokens::new(self.render(inst)?.into_iter().map(|r| r.rendered_text).collect()))
    }

    /// Φ(X).
    pub fn apply(&self, inst: &Instance) -> Result<Tokens> {
        if self.kind().is_mask() {
            self.masked(inst, true)
        } else {
            self.scalar_tokens(inst)
        }
    }

    /// Φ′(X).
    pub fn apply_complement(&self, inst: &Instance) -> Result<Tokens> {
        match self.kind() {
            k if k.is_mask() => self.masked(inst, false),
            FeatureKind::LengthDifference => {
                let mut segments = self.segments(inst)?;
                let idx: Vec<usize> = self
                    .targets
                    .iter()
                    .map(|t| self.layout.slots.iter().position(|s| s.field == *t).expect("validated target"))
                    .collect();
                let target_len = segments[idx[0]].len().max(segments[idx[1]].len());
                for &i in &idx {
                    segments[i] = equalize(&segments[i], target_len);
                }
                Ok(assemble(&self.layout, &self.tokenizer, &segments))
            }
            _ => render_input(&self.layout, &self.tokenizer, inst),
        }
    }
}

/// Repeat `tokens` cyclically and truncate to exactly `len` tokens. An
/// empty sequence stays empty.
pub fn equalize(tokens: &Tokens, len: usize) -> Tokens {
    if tokens.is_empty() {
        return Tokens::default();
    }
    Tokens::new(tokens.0.iter().cycle().take(len).cloned().collect())
}
