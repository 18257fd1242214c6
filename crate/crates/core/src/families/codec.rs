//! Versioned text container for trained built-in predictors.

use serde::{Deserialize, Serialize};

use super::{BowModel, FamilyConfig, Model, NgramModel, Predictor, Regime, TabularModel, TrainingReport};
use crate::error::{Error, Result};

pub const PREDICTOR_FORMAT: &str = "dcheck-predictor";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Params {
    Tabular(TabularModel),
    Ngram(NgramModel),
    BowLinear(BowModel),
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    key: String,
    config: FamilyConfig,
    regime: Regime,
    report: TrainingReport,
    params: Params,
}

/// Serialize a built-in predictor. Floats are written in shortest
/// round-trip form, so decoding reproduces every parameter bit for bit.
pub fn encode_predictor(pred: &Predictor) -> Result<String> {
    let params = match &pred.model {
        Model::Tabular(m) => Params::Tabular(m.clone()),
        Model::Ngram(m) => Params::Ngram(m.clone()),
        Model::Bow(m) => Params::BowLinear(m.clone()),
        Model::External(_) => return Err(Error::Codec("remote predictors cannot be serialized".into())),
    };
    let env = Envelope {
        format: PREDICTOR_FORMAT.into(),
        version: VERSION,
        key: pred.key.clone(),
        config: pred.config.clone(),
        regime: pred.regime,
        report: pred.report.clone(),
        params,
    };
    serde_json::to_string(&env).map_err(|e| Error::Codec(e.to_string()))
}

pub fn decode_predictor(text: &str) -> Result<Predictor> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| Error::Codec(e.to_string()))?;
    if env.format != PREDICTOR_FORMAT || env.version != VERSION {
        return Err(Error::Codec(format!(
            "unsupported container {} v{}",
            env.format, env.version
        )));
    }
    let model = match env.params {
        Params::Tabular(m) => Model::Tabular(m),
        Params::Ngram(m) => Model::Ngram(m),
        Params::BowLinear(m) => Model::Bow(m),
    };
    Ok(Predictor {
        config: env.config,
        regime: env.regime,
        model,
        key: env.key,
        report: env.report,
    })
}
