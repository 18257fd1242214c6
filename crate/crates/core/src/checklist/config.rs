//! Checklist configuration files (YAML or JSON) and dataset preparation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TestSpec, TestType, DEFAULT_EPSILON};
use crate::dataset::{
    self, encode_preferences, ContextPolicy, EncodeOptions, InputLayout, Instance, PreferencePair, PreferenceTask,
    Records, Schema, SplitDataset,
};
use crate::error::{Error, Result};
use crate::families::FamilyConfig;
use crate::features::FeatureSpec;
use crate::info::ExpressionKind;
use crate::text::Tokenizer;

/// A family given either by name (with defaults) or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilySetting {
    Name(String),
    Config(FamilyConfig),
}

impl Default for FamilySetting {
    fn default() -> Self {
        FamilySetting::Config(FamilyConfig::tabular())
    }
}

impl FamilySetting {
    pub fn resolve(&self) -> Result<FamilyConfig> {
        let cfg = match self {
            FamilySetting::Name(n) => FamilyConfig::by_name(n)?,
            FamilySetting::Config(c) => c.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitOptions {
    pub eval_fraction: f64,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            eval_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataOptions {
    /// Detected from the first record when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<Schema>,
    pub task: PreferenceTask,
    /// Fields that make up X, in order. Defaults to `input` for plain data
    /// and to the template fields for preference data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<String>>,
    pub context: ContextPolicy,
    pub randomize_positions: bool,
    pub position_seed: u64,
}

impl Default for DataOptions {
    fn default() -> Self {
        DataOptions {
            schema: None,
            task: PreferenceTask::PreferenceModeling,
            layout: None,
            context: ContextPolicy::Full,
            randomize_positions: false,
            position_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(rename = "type")]
    pub test_type: TestType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<FeatureSpec>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

/// Which expression the `pvi` command computes: a configured test, or a raw
/// expression kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PviSelection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expression: Option<ExpressionKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature: Option<FeatureSpec>,
    /// Histogram bin count.
    pub bins: usize,
}

impl Default for PviSelection {
    fn default() -> Self {
        PviSelection {
            test: None,
            expression: None,
            feature: None,
            bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecklistConfig {
    pub family: FamilySetting,
    pub split: SplitOptions,
    /// Training seed handed to the family.
    pub seed: u64,
    pub tokenizer: Tokenizer,
    pub data: DataOptions,
    pub tests: Vec<TestConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pvi: Option<PviSelection>,
}

impl Default for ChecklistConfig {
    fn default() -> Self {
        ChecklistConfig {
            family: FamilySetting::default(),
            split: SplitOptions::default(),
            seed: 0,
            tokenizer: Tokenizer::default(),
            data: DataOptions::default(),
            tests: Vec::new(),
            pvi: None,
        }
    }
}

impl ChecklistConfig {
    /// Parse YAML (which also accepts JSON documents).
    pub fn parse(text: &str, source: &str) -> Result<ChecklistConfig> {
        serde_yaml::from_str(text).map_err(|e| Error::Config(format!("{source}: {e}")))
    }

    /// Read a config file; relative resource paths inside feature params are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<ChecklistConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let source = path.display().to_string();
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{source}: {e}")))?
        } else {
            ChecklistConfig::parse(&text, &source)?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for t in &mut self.tests {
            if let Some(f) = &mut t.feature {
                f.resolve_paths(base);
            }
        }
        if let Some(f) = self.pvi.as_mut().and_then(|p| p.feature.as_mut()) {
            f.resolve_paths(base);
        }
    }

    /// Test specs with ids filled in: an explicit id, else the test type,
    /// suffixed `-2`, `-3`, … when a type repeats.
    pub fn test_specs(&self) -> Result<Vec<TestSpec>> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let specs: Vec<TestSpec> = self
            .tests
            .iter()
            .map(|t| {
                let id = match &t.id {
                    Some(id) => id.clone(),
                    None => {
                        let n = counts.entry(t.test_type.as_str()).or_insert(0);
                        *n += 1;
                        if *n == 1 {
                            t.test_type.as_str().to_string()
                        } else {
                            format!("{}-{}", t.test_type.as_str(), n)
                        }
                    }
                };
                TestSpec {
                    test_id: id,
                    test_type: t.test_type,
                    feature: t.feature.clone(),
                    epsilon: t.epsilon,
                }
            })
            .collect();
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }
}

/// A dataset ready for estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub instances: Vec<Instance>,
    /// The source pairs, for preference data.
    pub pairs: Option<Vec<PreferencePair>>,
    pub schema: Schema,
    pub layout: InputLayout,
}

pub fn load_dataset(path: &Path, opts: &DataOptions) -> Result<LoadedData> {
    let schema = match opts.schema {
        Some(s) => s,
        None => Schema::detect(path)?,
    };
    let (instances, pairs) = match dataset::load_jsonl(path, schema)? {
        Records::Plain(v) => (v, None),
        Records::Preference(pairs) => {
            let options = EncodeOptions {
                task: opts.task,
                context: opts.context.clone(),
                randomize_positions: opts.randomize_positions,
                position_seed: opts.position_seed,
            };
            (encode_preferences(&pairs, &options), Some(pairs))
        }
    };
    let layout = match (&opts.layout, schema) {
        (Some(fields), _) => InputLayout::fields(fields),
        (None, Schema::Preference) => InputLayout::for_task(opts.task),
        (None, Schema::Plain) => InputLayout::plain(),
    };
    Ok(LoadedData {
        instances,
        pairs,
        schema,
        layout,
    })
}

impl LoadedData {
    /// Split with the configured options, or use `eval` as the eval split.
    pub fn split(&self, options: &SplitOptions, eval: Option<&LoadedData>) -> Result<SplitDataset> {
        match eval {
            Some(e) => Ok(SplitDataset::explicit(self.instances.clone(), e.instances.clone())),
            None => dataset::split(&self.instances, options.eval_fraction, options.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use std::io::Write;

    const YAML: &str = r#"
family: { kind: ngram, order: 2 }
split: { eval_fraction: 0.25, seed: 7 }
data: { task: preference_modeling }
tests:
  - type: viability
  - type: applicability
    feature: { kind: wordlist_keep, params: { wordlist: lists/bad.txt } }
    epsilon: 0.05
  - type: applicability
    feature: { kind: length_difference }
"#;

    #[test]
    fn yaml_config_with_defaults_and_ids() {
        let mut cfg = ChecklistConfig::parse(YAML, "inline").unwrap();
        cfg.resolve_paths(Path::new("/etc/audit"));
        assert_eq!(cfg.family.resolve().unwrap(), FamilyConfig::Ngram { order: 2, add_k: 0.1 });
        assert_eq!(cfg.split.eval_fraction, 0.25);
        let specs = cfg.test_specs().unwrap();
        let ids: Vec<&str> = specs.iter().map(|s| s.test_id.as_str()).collect();
        assert_eq!(ids, ["viability", "applicability", "applicability-2"]);
        assert_eq!(specs[0].epsilon, 0.01);
        assert_eq!(specs[1].epsilon, 0.05);
        assert_eq!(
            specs[1].feature.as_ref().unwrap().params.wordlist.as_deref(),
            Some(Path::new("/etc/audit/lists/bad.txt"))
        );
        assert_eq!(specs[2].feature.as_ref().unwrap().kind, FeatureKind::LengthDifference);
    }

    #[test]
    fn json_config_and_family_names() {
        let cfg: ChecklistConfig =
            serde_json::from_str(r#"{"family":"bow_linear","tests":[{"type":"unviability"}]}"#).unwrap();
        assert_eq!(cfg.family.resolve().unwrap(), FamilyConfig::bow_linear());
        assert!(ChecklistConfig::parse("family: {kind: tabular}\ntests: [{type: necessity}]", "x")
            .unwrap()
            .test_specs()
            .is_err());
        assert!(ChecklistConfig::parse("tests: [{type: vibe}]", "x").is_err());
        assert!(ChecklistConfig::parse("testz: []", "x").is_err());
    }

    #[test]
    fn preference_file_is_encoded_with_its_layout() {
        let mut f = tempfile::Builder::new().suffix(".jsonl").tempfile().unwrap();
        writeln!(f, r#"{{"id":"p1","context":"q","response_a":"yes","response_b":"no","label":"B"}}"#).unwrap();
        writeln!(f, r#"{{"id":"p2","context":"q","response_a":"a","response_b":"b","label":"A"}}"#).unwrap();
        let data = load_dataset(f.path(), &DataOptions::default()).unwrap();
        assert_eq!(data.schema, Schema::Preference);
        assert_eq!(data.layout, InputLayout::preference());
        assert_eq!(data.instances[0].output_text, "B");
        let direct = DataOptions {
            task: PreferenceTask::DirectAlignment,
            ..DataOptions::default()
        };
        let data = load_dataset(f.path(), &direct).unwrap();
        assert_eq!(data.instances[0].output_text, "no");
        assert_eq!(data.layout, InputLayout::plain());
    }
}
