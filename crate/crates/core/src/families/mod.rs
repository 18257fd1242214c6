//! Predictive families: trainable model classes that satisfy optional
//! ignorance. A predictor trained on null inputs ignores whatever input it is
//! later given and predicts the (smoothed) output marginal.

mod bow;
mod codec;
mod ngram;
mod tabular;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adapter::{AdapterClient, AdapterOptions, RemoteExample};
use crate::error::{Error, Result};
use crate::hashing::digest_json;
use crate::text::Tokens;

pub use bow::BowModel;
pub use codec::{decode_predictor, encode_predictor, PREDICTOR_FORMAT};
pub use ngram::NgramModel;
pub use tabular::TabularModel;

/// Probabilities are clamped to at least 2^-30 before taking logs.
pub const PROB_FLOOR: f64 = 1.0 / (1u64 << 30) as f64;

/// Surprisal in bits with the probability floor applied.
pub fn surprisal_bits(p: f64) -> f64 {
    -p.max(PROB_FLOOR).log2()
}

/// Hyperparameters of a family. Together with the data and seed they fully
/// determine training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    /// Smoothed conditional table keyed by the full input string.
    Tabular {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Add-k n-gram over `[input tokens, boundary, output tokens]`.
    Ngram {
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_add_k")]
        add_k: f64,
    },
    /// Softmax regression over per-segment bag-of-words features.
    BowLinear {
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_max_epochs")]
        max_epochs: usize,
        #[serde(default = "default_tolerance")]
        tolerance_bits: f64,
    },
    /// A family served by an external adapter process.
    External {
        #[serde(default)]
        adapter_cmd: Option<String>,
        /// Passed verbatim to the adapter with every `train` request.
        #[serde(default)]
        config: Value,
    },
}

fn default_alpha() -> f64 {
    0.5
}
fn default_order() -> usize {
    3
}
fn default_add_k() -> f64 {
    0.1
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_max_epochs() -> usize {
    500
}
fn default_tolerance() -> f64 {
    1e-6
}

impl FamilyConfig {
    pub fn tabular() -> Self {
        FamilyConfig::Tabular { alpha: default_alpha() }
    }

    pub fn ngram() -> Self {
        FamilyConfig::Ngram {
            order: default_order(),
            add_k: default_add_k(),
        }
    }

    pub fn bow_linear() -> Self {
        FamilyConfig::BowLinear {
            learning_rate: default_learning_rate(),
            max_epochs: default_max_epochs(),
            tolerance_bits: default_tolerance(),
        }
    }

    /// Defaults for a family named on the command line.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "tabular" => Ok(Self::tabular()),
            "ngram" => Ok(Self::ngram()),
            "bow_linear" => Ok(Self::bow_linear()),
            "external" => Ok(FamilyConfig::External {
                adapter_cmd: None,
                config: Value::Null,
            }),
            other => Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            FamilyConfig::Tabular { .. } => FamilyKind::Tabular,
            FamilyConfig::Ngram { .. } => FamilyKind::Ngram,
            FamilyConfig::BowLinear { .. } => FamilyKind::BowLinear,
            FamilyConfig::External { .. } => FamilyKind::External,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match *self {
            FamilyConfig::Tabular { alpha } if !(alpha.is_finite() && alpha >= 0.0) => {
                bad(format!("tabular alpha must be finite and >= 0, got {alpha}"))
            }
            FamilyConfig::Ngram { order, .. } if order == 0 => bad("ngram order must be >= 1".into()),
            FamilyConfig::Ngram { add_k, .. } if !(add_k.is_finite() && add_k > 0.0) => {
                bad(format!("ngram add_k must be finite and > 0, got {add_k}"))
            }
            FamilyConfig::BowLinear {
                learning_rate,
                tolerance_bits,
                ..
            } if !(learning_rate > 0.0 && learning_rate.is_finite() && tolerance_bits >= 0.0) => {
                bad("bow_linear needs learning_rate > 0 and tolerance_bits >= 0".into())
            }
            _ => Ok(()),
        }
    }

    pub fn config_hash(&self) -> String {
        digest_json(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Tabular,
    Ngram,
    BowLinear,
    External,
}

/// Whether a predictor was trained with inputs or on null inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Null,
    Text,
}

/// One training pair. `input: None` is the null input.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Option<Tokens>,
    pub output: Tokens,
}

impl Example {
    pub fn new(input: Option<Tokens>, output: Tokens) -> Self {
        Example { input, output }
    }

    pub fn text(input: &str, output: &str) -> Self {
        Example::new(Some(Tokens::from_text(input)), Tokens::from_text(output))
    }

    pub fn null(output: &str) -> Self {
        Example::new(None, Tokens::from_text(output))
    }
}

pub(crate) fn regime_of(examples: &[Example]) -> Result<Regime> {
    let first = examples.first().ok_or(Error::EmptyTrainingSet)?;
    let regime = if first.input.is_some() { Regime::Text } else { Regime::Null };
    if examples.iter().any(|e| e.input.is_some() != (regime == Regime::Text)) {
        return Err(Error::MixedRegime);
    }
    Ok(regime)
}

/// Convergence details reported by iterative families.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: usize,
    /// Epoch cap hit while the loss was still falling faster than tolerance.
    pub non_convergence: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_history_bits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Model {
    Tabular(TabularModel),
    Ngram(NgramModel),
    Bow(BowModel),
    External(RemoteModel),
}

#[derive(Clone)]
pub(crate) struct RemoteModel {
    pub(crate) client: Arc<AdapterClient>,
    pub(crate) model_id: String,
}

impl std::fmt::Debug for RemoteModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteModel").field("model_id", &self.model_id).finish()
    }
}

impl PartialEq for RemoteModel {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.client, &other.client) && self.model_id == other.model_id
    }
}

/// A trained scorer. Immutable; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub(crate) config: FamilyConfig,
    pub(crate) regime: Regime,
    pub(crate) model: Model,
    pub(crate) key: String,
    pub(crate) report: TrainingReport,
}

impl Predictor {
    pub fn config(&self) -> &FamilyConfig {
        &self.config
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn with_key(mut self, key: impl Into<String>) -> Self {
        self.key = key.into();
        self
    }

    pub fn report(&self) -> &TrainingReport {
        &self.report
    }

    /// Size of the output vocabulary W.
    pub fn vocab_size(&self) -> usize {
        match &self.model {
            Model::Tabular(m) => m.labels.len(),
            Model::Ngram(m) => m.vocab.len(),
            Model::Bow(m) => m.classes.len(),
            Model::External(_) => 0,
        }
    }

    fn check(&self, input: Option<&Tokens>, output: &Tokens) -> Result<()> {
        if output.is_empty() {
            return Err(Error::EmptyOutput);
        }
        if self.regime == Regime::Text && input.is_none() {
            return Err(Error::RegimeMismatch);
        }
        Ok(())
    }

    /// Mean over output tokens of `-log2 p(token | context)`.
    pub fn score(&self, input: Option<&Tokens>, output: &Tokens) -> Result<f64> {
        self.check(input, output)?;
        let input = match self.regime {
            Regime::Null => None,
            Regime::Text => input,
        };
        Ok(match &self.model {
            Model::Tabular(m) => m.score(input, output),
            Model::Ngram(m) => m.score(input, output),
            Model::Bow(m) => m.score(input, output),
            Model::External(r) => {
                return r.client.score(&r.model_id, input.map(Tokens::joined).as_deref(), &output.joined())
            }
        })
    }

    /// Score many pairs; remote predictors pipeline the requests.
    pub fn score_many(&self, items: &[(Option<&Tokens>, &Tokens)]) -> Result<Vec<f64>> {
        if let Model::External(r) = &self.model {
            for (input, output) in items {
                self.check(*input, output)?;
            }
            let requests: Vec<(Option<String>, String)> = items
                .iter()
                .map(|(input, output)| {
                    let input = match self.regime {
                        Regime::Null => None,
                        Regime::Text => input.map(Tokens::joined),
                    };
                    (input, output.joined())
                })
                .collect();
            return r.client.score_batch(&r.model_id, &requests);
        }
        items.iter().map(|(i, o)| self.score(*i, o)).collect()
    }

    /// Release remote resources. Built-in predictors need nothing.
    pub fn free(&self) -> Result<()> {
        if let Model::External(r) = &self.model {
            r.client.free(&r.model_id)?;
        }
        Ok(())
    }
}

/// A family plus whatever runtime resources it needs (an adapter process
/// for the external family).
#[derive(Debug, Clone)]
pub struct PredictiveFamily {
    config: FamilyConfig,
    adapter: Option<Arc<AdapterClient>>,
}

impl PredictiveFamily {
    pub fn new(config: FamilyConfig) -> Result<Self> {
        config.validate()?;
        if let FamilyConfig::External { adapter_cmd, .. } = &config {
            let cmd = adapter_cmd
                .as_deref()
                .ok_or_else(|| Error::Config("external family needs an adapter command".into()))?;
            let client = AdapterClient::spawn(cmd, AdapterOptions::default())?;
            client.handshake()?;
            return Ok(PredictiveFamily {
                config,
                adapter: Some(Arc::new(client)),
            });
        }
        Ok(PredictiveFamily { config, adapter: None })
    }

    /// An external family backed by an already connected adapter.
    pub fn with_adapter(client: Arc<AdapterClient>, config: Value) -> Self {
        PredictiveFamily {
            config: FamilyConfig::External {
                adapter_cmd: None,
                config,
            },
            adapter: Some(client),
        }
    }

    pub fn tabular(alpha: f64) -> Self {
        PredictiveFamily {
            config: FamilyConfig::Tabular { alpha },
            adapter: None,
        }
    }

    pub fn config(&self) -> &FamilyConfig {
        &self.config
    }

    pub fn adapter(&self) -> Option<&Arc<AdapterClient>> {
        self.adapter.as_ref()
    }

    /// Built-in predictors are pure functions of their inputs and can be
    /// cached on disk; remote ones live in the adapter process.
    pub fn is_cacheable(&self) -> bool {
        self.adapter.is_none()
    }

    pub fn train(&self, examples: &[Example], seed: u64) -> Result<Predictor> {
        let regime = regime_of(examples)?;
        let mut report = TrainingReport::default();
        let model = match &self.config {
            FamilyConfig::Tabular { alpha } => Model::Tabular(TabularModel::fit(examples, *alpha)),
            FamilyConfig::Ngram { order, add_k } => Model::Ngram(NgramModel::fit(examples, *order, *add_k)),
            FamilyConfig::BowLinear {
                learning_rate,
                max_epochs,
                tolerance_bits,
            } => {
                let (model, r) = BowModel::fit(examples, *learning_rate, *max_epochs, *tolerance_bits)?;
                report = r;
                Model::Bow(model)
            }
            FamilyConfig::External { config, .. } => {
                let client = self
                    .adapter
                    .as_ref()
                    .ok_or_else(|| Error::Config("external family has no adapter".into()))?;
                let remote: Vec<RemoteExample> = examples
                    .iter()
                    .map(|e| RemoteExample {
                        input: e.input.as_ref().map(Tokens::joined),
                        output: e.output.joined(),
                    })
                    .collect();
                let mut config = config.clone();
                if let Value::Object(map) = &mut config {
                    map.entry("seed").or_insert(Value::from(seed));
                } else if config.is_null() {
                    config = serde_json::json!({ "seed": seed });
                }
                let model_id = client.train(&remote, &config)?;
                Model::External(RemoteModel {
                    client: client.clone(),
                    model_id,
                })
            }
        };
        let key = examples_key(&self.config, examples);
        Ok(Predictor {
            config: self.config.clone(),
            regime,
            model,
            key,
            report,
        })
    }
}

fn examples_key(config: &FamilyConfig, examples: &[Example]) -> String {
    let pairs: Vec<(Option<&Tokens>, &Tokens)> =
        examples.iter().map(|e| (e.input.as_ref(), &e.output)).collect();
    digest_json(&(config, pairs))
}
