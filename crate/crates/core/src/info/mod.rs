//! V-entropy, conditional V-entropy, V-information and pointwise
//! V-information (PVI), all in bits per output token.
//!
//! Every estimate trains on the train split and measures surprisal on the
//! eval split. An information quantity is the difference of two entropy
//! estimates over the same eval instances: the PVI of an instance is its
//! surprisal under the base predictor minus its surprisal under the
//! conditioned one, and the estimate is the mean PVI.

mod cache;
mod plan;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use cache::{CacheManifest, PredictorCache};
pub use plan::{build_run_plan, execute_plan, JobOutcome, RunPlan, TrainingJob, TrainingKey};

use crate::dataset::{InputLayout, Instance, SplitDataset};
use crate::error::{Error, Result};
use crate::families::{Example, PredictiveFamily, Predictor, TrainingReport};
use crate::features::{render_input, Feature};
use crate::hashing::{digest_json, digest_parts};
use crate::text::{Tokenizer, Tokens, SEP};

/// How the input presented to a predictor is derived from an instance.
#[derive(Debug, Clone, PartialEq)]
pub enum InputTransform {
    /// The null input ∅.
    Null,
    /// X itself.
    Identity,
    /// Φ(X).
    Feature(Feature),
    /// Φ′(X).
    Complement(Feature),
    /// `C(X) ⟂ X`: the inner transform followed by a separator and X.
    WithInput(Box<InputTransform>),
    /// The same engine text for every instance.
    Constant(String),
}

impl InputTransform {
    pub fn with_input(inner: InputTransform) -> Self {
        InputTransform::WithInput(Box::new(inner))
    }

    pub fn describe(&self) -> String {
        match self {
            InputTransform::Null => "null".into(),
            InputTransform::Identity => "identity".into(),
            InputTransform::Feature(f) => format!("feature({})", f.kind().as_str()),
            InputTransform::Complement(f) => format!("complement({})", f.kind().as_str()),
            InputTransform::WithInput(inner) => format!("concat({}, X)", inner.describe()),
            InputTransform::Constant(_) => "constant".into(),
        }
    }

    /// Fix any split-dependent parameters (scalar bucket boundaries) from
    /// the train split.
    pub fn fit(&self, train: &[Instance]) -> Result<InputTransform> {
        self.fit_inner(train).map_err(|e| match e {
            Error::MissingField { id, field } => Error::TransformFailure {
                transform: self.describe(),
                id,
                reason: format!("missing field `{field}` while fitting on the train split"),
            },
            other => other,
        })
    }

    fn fit_inner(&self, train: &[Instance]) -> Result<InputTransform> {
        Ok(match self {
            InputTransform::Feature(f) => InputTransform::Feature(f.clone().fit(train)?),
            InputTransform::Complement(f) => InputTransform::Complement(f.clone().fit(train)?),
            InputTransform::WithInput(inner) => InputTransform::with_input(inner.fit_inner(train)?),
            other => other.clone(),
        })
    }

    /// Hash of everything that determines this transform's output.
    pub fn key(&self, layout: &InputLayout, tokenizer: &Tokenizer) -> String {
        match self {
            InputTransform::Null => digest_parts([b"null".as_slice()]),
            InputTransform::Identity => digest_json(&("identity", layout, tokenizer)),
            InputTransform::Feature(f) => digest_json(&("feature", f.key())),
            InputTransform::Complement(f) => digest_json(&("complement", f.key())),
            InputTransform::WithInput(inner) => {
                digest_json(&("concat", inner.key(layout, tokenizer), layout, tokenizer))
            }
            InputTransform::Constant(text) => digest_json(&("constant", text, tokenizer)),
        }
    }

    fn tokens(&self, inst: &Instance, layout: &InputLayout, tokenizer: &Tokenizer) -> Result<Option<Tokens>> {
        Ok(match self {
            InputTransform::Null => None,
            InputTransform::Identity => Some(render_input(layout, tokenizer, inst)?),
            InputTransform::Feature(f) => Some(f.apply(inst)?),
            InputTransform::Complement(f) => Some(f.apply_complement(inst)?),
            InputTransform::WithInput(inner) => {
                let mut out = inner.tokens(inst, layout, tokenizer)?.unwrap_or_default();
                out.push(SEP);
                out.extend(&render_input(layout, tokenizer, inst)?);
                Some(out)
            }
            InputTransform::Constant(text) => Some(tokenizer.tokenize_engine(text)),
        })
    }

    /// The transformed input of one instance; failures name the instance.
    pub fn apply(&self, inst: &Instance, layout: &InputLayout, tokenizer: &Tokenizer) -> Result<Option<Tokens>> {
        self.tokens(inst, layout, tokenizer).map_err(|e| match e {
            Error::MissingField { .. } | Error::Config(_) => Error::TransformFailure {
                transform: self.describe(),
                id: inst.id.clone(),
                reason: e.to_string(),
            },
            other => other,
        })
    }
}

/// Which side of a feature a conditional quantity conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    Feature,
    Complement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpressionKind {
    /// I(X → Y)
    Standard,
    /// I(Φ(X) → Y)
    Feature,
    /// I(Φ′(X) → Y)
    Complement,
    /// I(X → Y | Φ(X))
    ConditionalOnFeature,
    /// I(X → Y | Φ′(X))
    ConditionalOnComplement,
}

impl ExpressionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExpressionKind::Standard => "standard",
            ExpressionKind::Feature => "feature",
            ExpressionKind::Complement => "complement",
            ExpressionKind::ConditionalOnFeature => "conditional_on_feature",
            ExpressionKind::ConditionalOnComplement => "conditional_on_complement",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            ExpressionKind::Standard => "I(X -> Y)",
            ExpressionKind::Feature => "I(Phi(X) -> Y)",
            ExpressionKind::Complement => "I(Phi'(X) -> Y)",
            ExpressionKind::ConditionalOnFeature => "I(X -> Y | Phi(X))",
            ExpressionKind::ConditionalOnComplement => "I(X -> Y | Phi'(X))",
        }
    }

    pub fn needs_feature(self) -> bool {
        self != ExpressionKind::Standard
    }
}

/// An information quantity to estimate: a kind plus, for every kind but
/// the standard one, the feature it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    pub kind: ExpressionKind,
    pub feature: Option<Feature>,
}

impl Expression {
    pub fn standard() -> Self {
        Expression {
            kind: ExpressionKind::Standard,
            feature: None,
        }
    }

    pub fn new(kind: ExpressionKind, feature: Option<Feature>) -> Result<Self> {
        if kind.needs_feature() != feature.is_some() {
            return Err(Error::Config(format!(
                "expression `{}` {} a feature",
                kind.as_str(),
                if kind.needs_feature() { "needs" } else { "takes no" }
            )));
        }
        Ok(Expression { kind, feature })
    }

    /// The base and conditioned transforms whose entropies are subtracted.
    pub fn transforms(&self) -> (InputTransform, InputTransform) {
        let f = || self.feature.clone().expect("checked at construction");
        match self.kind {
            ExpressionKind::Standard => (InputTransform::Null, InputTransform::Identity),
            ExpressionKind::Feature => (InputTransform::Null, InputTransform::Feature(f())),
            ExpressionKind::Complement => (InputTransform::Null, InputTransform::Complement(f())),
            ExpressionKind::ConditionalOnFeature => (
                InputTransform::Feature(f()),
                InputTransform::with_input(InputTransform::Feature(f())),
            ),
            ExpressionKind::ConditionalOnComplement => (
                InputTransform::Complement(f()),
                InputTransform::with_input(InputTransform::Complement(f())),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value_bits: f64,
    /// `(instance id, surprisal bits)` for every eval instance, in eval order.
    pub per_instance_bits: Vec<(String, f64)>,
    pub n_train: usize,
    pub n_eval: usize,
    pub model_key: String,
    pub transform: String,
    #[serde(default)]
    pub training: TrainingReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoEstimate {
    /// Raw estimate; may be negative.
    pub value_bits: f64,
    pub pvi_records: Vec<(String, f64)>,
    pub null_model_key: String,
    pub cond_model_key: String,
    pub expression_kind: ExpressionKind,
    /// Entropy under the base predictor.
    pub base_entropy_bits: f64,
    /// Entropy under the conditioned predictor.
    pub cond_entropy_bits: f64,
}

/// Arithmetic mean, summed in order so results are reproducible.
pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Combine two entropy estimates made on the same split into V-information.
pub fn info_from_entropies(
    base: &EntropyEstimate,
    cond: &EntropyEstimate,
    kind: ExpressionKind,
) -> Result<InfoEstimate> {
    let ids = |e: &EntropyEstimate| e.per_instance_bits.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>();
    let (left, right) = (ids(base), ids(cond));
    if left != right || base.n_train != cond.n_train {
        let tag = |e: &EntropyEstimate, ids: &Vec<String>| {
            format!("{} train / eval {}", e.n_train, &digest_json(ids)[..12])
        };
        return Err(Error::SplitMismatch {
            left: tag(base, &left),
            right: tag(cond, &right),
        });
    }
    let pvi_records: Vec<(String, f64)> = base
        .per_instance_bits
        .iter()
        .zip(&cond.per_instance_bits)
        .map(|((id, b), (_, c))| (id.clone(), b - c))
        .collect();
    Ok(InfoEstimate {
        value_bits: mean(pvi_records.iter().map(|(_, p)| *p)),
        pvi_records,
        null_model_key: base.model_key.clone(),
        cond_model_key: cond.model_key.clone(),
        expression_kind: kind,
        base_entropy_bits: base.value_bits,
        cond_entropy_bits: cond.value_bits,
    })
}

/// A family bound to the text conventions of a dataset.
#[derive(Debug, Clone)]
pub struct Estimator {
    family: PredictiveFamily,
    layout: InputLayout,
    tokenizer: Tokenizer,
    seed: u64,
    cache: Option<PredictorCache>,
}

impl Estimator {
    pub fn new(family: PredictiveFamily) -> Self {
        Estimator {
            family,
            layout: InputLayout::plain(),
            tokenizer: Tokenizer::default(),
            seed: 0,
            cache: None,
        }
    }

    pub fn with_layout(mut self, layout: InputLayout) -> Self {
        self.layout = layout;
        self
    }

    pub fn with_tokenizer(mut self, tokenizer: Tokenizer) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Use an on-disk predictor cache. Ignored for remote families.
    pub fn with_cache(mut self, cache: PredictorCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn family(&self) -> &PredictiveFamily {
        &self.family
    }

    pub fn layout(&self) -> &InputLayout {
        &self.layout
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    /// Build a feature against this estimator's layout and tokenizer.
    pub fn feature(&self, spec: crate::features::FeatureSpec) -> Result<Feature> {
        Feature::new(spec, self.layout.clone(), self.tokenizer)
    }

    pub fn training_key(&self, fitted: &InputTransform, split: &SplitDataset) -> TrainingKey {
        TrainingKey {
            family_hash: digest_json(&(self.family.config(), self.seed)),
            transform_hash: fitted.key(&self.layout, &self.tokenizer),
            split_hash: split.train_hash(),
        }
    }

    /// Training pairs under a (fitted) transform.
    pub fn examples(&self, fitted: &InputTransform, instances: &[Instance]) -> Result<Vec<Example>> {
        instances
            .iter()
            .map(|inst| {
                let input = fitted.apply(inst, &self.layout, &self.tokenizer)?;
                let output = self.tokenizer.tokenize(&inst.output_text);
                if output.is_empty() {
                    return Err(Error::TransformFailure {
                        transform: fitted.describe(),
                        id: inst.id.clone(),
                        reason: Error::EmptyOutput.to_string(),
                    });
                }
                Ok(Example::new(input, output))
            })
            .collect()
    }

    /// Train (or load from the cache) the predictor for a fitted transform.
    /// The flag reports a cache hit.
    pub fn train(&self, fitted: &InputTransform, split: &SplitDataset) -> Result<(Predictor, bool)> {
        let key = self.training_key(fitted, split).id();
        let cache = self.cache.as_ref().filter(|_| self.family.is_cacheable());
        if let Some(pred) = cache.and_then(|c| c.get(&key)) {
            return Ok((pred, true));
        }
        let examples = self.examples(fitted, &split.train)?;
        let pred = self.family.train(&examples, self.seed)?.with_key(key.clone());
        if let Some(c) = cache {
            let manifest = CacheManifest {
                key,
                created_unix: cache::now_unix(),
                train_hash: split.train_hash(),
                transform: fitted.describe(),
                transform_hash: fitted.key(&self.layout, &self.tokenizer),
                config: self.family.config().clone(),
            };
            c.put(&pred, &manifest)?;
        }
        Ok((pred, false))
    }

    /// Entropy estimate for an already fitted transform.
    pub fn entropy_fitted(&self, fitted: &InputTransform, split: &SplitDataset) -> Result<(EntropyEstimate, bool)> {
        if split.train.is_empty() {
            return Err(Error::EmptySplit { split: "train" });
        }
        if split.eval.is_empty() {
            return Err(Error::EmptySplit { split: "eval" });
        }
        let eval = self.examples(fitted, &split.eval)?;
        let (pred, cached) = self.train(fitted, split)?;
        let items: Vec<(Option<&Tokens>, &Tokens)> = eval.iter().map(|e| (e.input.as_ref(), &e.output)).collect();
        let scored = pred.score_many(&items);
        let freed = pred.free();
        let bits = scored?;
        freed?;
        let per_instance_bits: Vec<(String, f64)> =
            split.eval.iter().zip(bits).map(|(inst, b)| (inst.id.clone(), b)).collect();
        Ok((
            EntropyEstimate {
                value_bits: mean(per_instance_bits.iter().map(|(_, b)| *b)),
                per_instance_bits,
                n_train: split.train.len(),
                n_eval: split.eval.len(),
                model_key: pred.key().to_string(),
                transform: fitted.describe(),
                training: pred.report().clone(),
            },
            cached,
        ))
    }

    /// Entropy of Y given `transform(X)`; fits the transform on the train split.
    pub fn entropy(&self, transform: &InputTransform, split: &SplitDataset) -> Result<EntropyEstimate> {
        let fitted = transform.fit(&split.train)?;
        Ok(self.entropy_fitted(&fitted, split)?.0)
    }

    /// H_V(Y): entropy with the null input.
    pub fn v_entropy(&self, split: &SplitDataset) -> Result<EntropyEstimate> {
        self.entropy(&InputTransform::Null, split)
    }

    /// H_V(Y | C(X)).
    pub fn conditional_v_entropy(&self, transform: &InputTransform, split: &SplitDataset) -> Result<EntropyEstimate> {
        self.entropy(transform, split)
    }

    /// I_V(C(X) → Y) for C one of identity, Φ, Φ′.
    pub fn v_information(&self, mode: &InputTransform, split: &SplitDataset) -> Result<InfoEstimate> {
        let kind = match mode {
            InputTransform::Identity => ExpressionKind::Standard,
            InputTransform::Feature(_) => ExpressionKind::Feature,
            InputTransform::Complement(_) => ExpressionKind::Complement,
            other => {
                return Err(Error::Config(format!(
                    "v_information takes identity, a feature or its complement, not {}",
                    other.describe()
                )))
            }
        };
        let base = self.v_entropy(split)?;
        let cond = self.entropy(mode, split)?;
        info_from_entropies(&base, &cond, kind)
    }

    /// I_V(X → Y | C(X)) for C = Φ or Φ′.
    pub fn conditional_v_information(
        &self,
        feature: &Feature,
        on: Conditioning,
        split: &SplitDataset,
    ) -> Result<InfoEstimate> {
        let kind = match on {
            Conditioning::Feature => ExpressionKind::ConditionalOnFeature,
            Conditioning::Complement => ExpressionKind::ConditionalOnComplement,
        };
        self.estimate(&Expression::new(kind, Some(feature.clone()))?, split)
    }

    /// H(base) − H(cond) for any pair of transforms.
    pub fn information_between(
        &self,
        base: &InputTransform,
        cond: &InputTransform,
        kind: ExpressionKind,
        split: &SplitDataset,
    ) -> Result<InfoEstimate> {
        let b = self.entropy(base, split)?;
        let c = self.entropy(cond, split)?;
        info_from_entropies(&b, &c, kind)
    }

    pub fn estimate(&self, expr: &Expression, split: &SplitDataset) -> Result<InfoEstimate> {
        let (base, cond) = expr.transforms();
        self.information_between(&base, &cond, expr.kind, split)
    }
}

/// Wall-clock helper for job timings.
pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
