//! Dataset ingestion, preference-pair encoding and deterministic splits.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::hashing::digest_json;
use crate::text::{escape_text, SEP};

pub type Meta = BTreeMap<String, Value>;

/// One dataset record: input text X, output text Y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    #[serde(rename = "input")]
    pub input_text: String,
    #[serde(rename = "output")]
    pub output_text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: Meta,
}

impl Instance {
    pub fn new(id: impl Into<String>, input: impl Into<String>, output: impl Into<String>) -> Self {
        Instance {
            id: id.into(),
            input_text: input.into(),
            output_text: output.into(),
            meta: Meta::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    /// Text of a named field: `input`, `output`, or a string-valued meta key.
    pub fn field(&self, name: &str) -> Result<&str> {
        match name {
            "input" => Ok(&self.input_text),
            "output" => Ok(&self.output_text),
            _ => self
                .meta
                .get(name)
                .and_then(Value::as_str)
                .ok_or_else(|| self.missing(name)),
        }
    }

    pub fn number(&self, name: &str) -> Result<f64> {
        self.meta
            .get(name)
            .and_then(Value::as_f64)
            .ok_or_else(|| self.missing(name))
    }

    fn missing(&self, field: &str) -> Error {
        Error::MissingField {
            id: self.id.clone(),
            field: field.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::A => "A",
            Label::B => "B",
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::A => Label::B,
            Label::B => Label::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub id: String,
    pub context: String,
    pub response_a: String,
    pub response_b: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: Meta,
}

impl PreferencePair {
    pub fn preferred(&self) -> &str {
        match self.label {
            Label::A => &self.response_a,
            Label::B => &self.response_b,
        }
    }

    /// Swap the two responses (and their scores) and flip the label.
    pub fn swapped(&self) -> PreferencePair {
        let mut meta = self.meta.clone();
        let score_a = meta.remove("score_a");
        let score_b = meta.remove("score_b");
        if let Some(s) = score_b {
            meta.insert("score_a".into(), s);
        }
        if let Some(s) = score_a {
            meta.insert("score_b".into(), s);
        }
        PreferencePair {
            id: self.id.clone(),
            context: self.context.clone(),
            response_a: self.response_b.clone(),
            response_b: self.response_a.clone(),
            label: self.label.flipped(),
            meta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    Plain,
    Preference,
}

impl Schema {
    /// Guess the schema from the first nonblank record of a file.
    pub fn detect(path: &Path) -> Result<Schema> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: e.to_string(),
            })?;
            return Ok(if value.get("response_a").is_some() {
                Schema::Preference
            } else {
                Schema::Plain
            });
        }
        Ok(Schema::Plain)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Plain(Vec<Instance>),
    Preference(Vec<PreferencePair>),
}

impl Records {
    pub fn len(&self) -> usize {
        match self {
            Records::Plain(v) => v.len(),
            Records::Preference(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            Records::Plain(v) => v.iter().map(|i| i.id.as_str()).collect(),
            Records::Preference(v) => v.iter().map(|p| p.id.as_str()).collect(),
        }
    }

    pub fn schema(&self) -> Schema {
        match self {
            Records::Plain(_) => Schema::Plain,
            Records::Preference(_) => Schema::Preference,
        }
    }

    /// Keep the records whose id satisfies `keep`, preserving order.
    pub fn retain_ids(&self, keep: impl Fn(&str) -> bool) -> Records {
        match self {
            Records::Plain(v) => Records::Plain(v.iter().filter(|i| keep(&i.id)).cloned().collect()),
            Records::Preference(v) => {
                Records::Preference(v.iter().filter(|p| keep(&p.id)).cloned().collect())
            }
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        match self {
            Records::Plain(v) => write_jsonl(path, v),
            Records::Preference(v) => write_jsonl(path, v),
        }
    }
}

pub fn load_jsonl(path: &Path, schema: Schema) -> Result<Records> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let label = path.display().to_string();
    read_jsonl(BufReader::new(file), &label, schema)
}

pub fn load_plain(path: &Path) -> Result<Vec<Instance>> {
    match load_jsonl(path, Schema::Plain)? {
        Records::Plain(v) => Ok(v),
        Records::Preference(_) => unreachable!(),
    }
}

pub fn load_preferences(path: &Path) -> Result<Vec<PreferencePair>> {
    match load_jsonl(path, Schema::Preference)? {
        Records::Preference(v) => Ok(v),
        Records::Plain(_) => unreachable!(),
    }
}

/// Parse line-delimited records. Blank lines are skipped; line numbers in
/// errors are 1-based physical lines.
pub fn read_jsonl(reader: impl BufRead, source: &str, schema: Schema) -> Result<Records> {
    let mut plain = Vec::new();
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        let mismatch = |message: String| Error::SchemaMismatch {
            path: source.to_string(),
            line: line_no,
            message,
        };
        let obj = value
            .as_object()
            .ok_or_else(|| mismatch("record is not a JSON object".into()))?;
        let id = match schema {
            Schema::Plain => {
                let inst = parse_plain(obj).map_err(mismatch)?;
                let id = inst.id.clone();
                plain.push(inst);
                id
            }
            Schema::Preference => {
                let pair = parse_pair(obj).map_err(mismatch)?;
                let id = pair.id.clone();
                pairs.push(pair);
                id
            }
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                path: source.to_string(),
                line: line_no,
                id,
            });
        }
    }
    Ok(match schema {
        Schema::Plain => Records::Plain(plain),
        Schema::Preference => Records::Preference(pairs),
    })
}

fn string_field(obj: &Map<String, Value>, key: &str) -> std::result::Result<String, String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(format!("field `{key}` must be a string")),
        None => Err(format!("missing field `{key}`")),
    }
}

fn meta_field(obj: &Map<String, Value>) -> std::result::Result<Meta, String> {
    match obj.get("meta") {
        None | Some(Value::Null) => Ok(Meta::new()),
        Some(Value::Object(m)) => Ok(m.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
        Some(_) => Err("field `meta` must be an object".into()),
    }
}

fn parse_plain(obj: &Map<String, Value>) -> std::result::Result<Instance, String> {
    let inst = Instance {
        id: string_field(obj, "id")?,
        input_text: string_field(obj, "input")?,
        output_text: string_field(obj, "output")?,
        meta: meta_field(obj)?,
    };
    if inst.output_text.trim().is_empty() {
        return Err("field `output` must be nonempty".into());
    }
    Ok(inst)
}

fn parse_pair(obj: &Map<String, Value>) -> std::result::Result<PreferencePair, String> {
    let label = match obj.get("label") {
        Some(Value::String(s)) if s == "A" => Label::A,
        Some(Value::String(s)) if s == "B" => Label::B,
        Some(other) => return Err(format!("label must be \"A\" or \"B\", got {other}")),
        None => return Err("missing field `label`".into()),
    };
    let meta = meta_field(obj)?;
    for key in ["score_a", "score_b"] {
        if let Some(v) = meta.get(key) {
            if !v.is_number() {
                return Err(format!("meta.{key} must be a number"));
            }
        }
    }
    let pair = PreferencePair {
        id: string_field(obj, "id")?,
        context: string_field(obj, "context")?,
        response_a: string_field(obj, "response_a")?,
        response_b: string_field(obj, "response_b")?,
        label,
        meta,
    };
    if pair.response_a.trim().is_empty() || pair.response_b.trim().is_empty() {
        return Err("responses must be nonempty".into());
    }
    Ok(pair)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// The template used to present a preference pair as one input text.
pub const PREFERENCE_TEMPLATE: &str =
    "CONTEXT: {context} ⟂ RESPONSE A: {response_a} ⟂ RESPONSE B: {response_b}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceTask {
    /// Y is the label `A` or `B`.
    PreferenceModeling,
    /// X is the context, Y is the preferred response.
    DirectAlignment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContextPolicy {
    #[default]
    Full,
    /// Keep only the text from the last occurrence of the marker onwards.
    LastTurn { marker: String },
}

impl ContextPolicy {
    pub fn apply<'a>(&self, context: &'a str) -> &'a str {
        match self {
            ContextPolicy::Full => context,
            ContextPolicy::LastTurn { marker } => match context.rfind(marker.as_str()) {
                Some(pos) => &context[pos..],
                None => context,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeOptions {
    pub task: PreferenceTask,
    pub context: ContextPolicy,
    /// Swap A/B with a seeded coin per pair.
    pub randomize_positions: bool,
    pub position_seed: u64,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            task: PreferenceTask::PreferenceModeling,
            context: ContextPolicy::Full,
            randomize_positions: false,
            position_seed: 0,
        }
    }
}

pub fn encode_preference(pair: &PreferencePair, task: PreferenceTask) -> Instance {
    encode_with_context(pair, task, &ContextPolicy::Full)
}

fn encode_with_context(pair: &PreferencePair, task: PreferenceTask, policy: &ContextPolicy) -> Instance {
    let context = policy.apply(&pair.context);
    let (input_text, output_text) = match task {
        PreferenceTask::PreferenceModeling => (
            format!(
                "CONTEXT: {} {SEP} RESPONSE A: {} {SEP} RESPONSE B: {}",
                escape_text(context),
                escape_text(&pair.response_a),
                escape_text(&pair.response_b)
            ),
            pair.label.as_str().to_string(),
        ),
        PreferenceTask::DirectAlignment => (context.to_string(), pair.preferred().to_string()),
    };
    let mut meta = pair.meta.clone();
    meta.insert("context".into(), Value::String(context.to_string()));
    meta.insert("response_a".into(), Value::String(pair.response_a.clone()));
    meta.insert("response_b".into(), Value::String(pair.response_b.clone()));
    meta.insert("label".into(), Value::String(pair.label.as_str().into()));
    Instance {
        id: pair.id.clone(),
        input_text,
        output_text,
        meta,
    }
}

pub fn encode_preferences(pairs: &[PreferencePair], options: &EncodeOptions) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.position_seed);
    pairs
        .iter()
        .map(|pair| {
            let swap = options.randomize_positions && rng.random_bool(0.5);
            let pair = if swap { pair.swapped() } else { pair.clone() };
            encode_with_context(&pair, options.task, &options.context)
        })
        .collect()
}

/// The segment fields that make up X for a given data source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub slots: Vec<FieldSlot>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSlot {
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<String>,
}

impl InputLayout {
    /// X is the `input` text itself.
    pub fn plain() -> Self {
        InputLayout::fields(["input"])
    }

    pub fn fields<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Self {
        InputLayout {
            slots: names
                .into_iter()
                .map(|n| FieldSlot {
                    field: n.as_ref().to_string(),
                    header: None,
                })
                .collect(),
        }
    }

    /// Layout matching [`PREFERENCE_TEMPLATE`].
    pub fn preference() -> Self {
        let slot = |field: &str, header: &str| FieldSlot {
            field: field.into(),
            header: Some(header.into()),
        };
        InputLayout {
            slots: vec![
                slot("context", "CONTEXT:"),
                slot("response_a", "RESPONSE A:"),
                slot("response_b", "RESPONSE B:"),
            ],
        }
    }

    pub fn for_task(task: PreferenceTask) -> Self {
        match task {
            PreferenceTask::PreferenceModeling => InputLayout::preference(),
            PreferenceTask::DirectAlignment => InputLayout::plain(),
        }
    }

    pub fn field_names(&self) -> Vec<&str> {
        self.slots.iter().map(|s| s.field.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    Random { eval_fraction: f64, seed: u64 },
    Explicit,
}

/// Train and eval partitions. Both trainings of an estimate share one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<Instance>,
    pub eval: Vec<Instance>,
    pub spec: SplitSpec,
}

impl SplitDataset {
    /// Use caller-provided partitions as they are.
    pub fn explicit(train: Vec<Instance>, eval: Vec<Instance>) -> Self {
        SplitDataset {
            train,
            eval,
            spec: SplitSpec::Explicit,
        }
    }

    pub fn train_hash(&self) -> String {
        digest_json(&self.train)
    }

    pub fn eval_hash(&self) -> String {
        digest_json(&self.eval)
    }
}

/// Seeded shuffle, then the first `round(N * eval_fraction)` shuffled
/// instances become the eval split. Both sides keep source order.
pub fn split(instances: &[Instance], eval_fraction: f64, seed: u64) -> Result<SplitDataset> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(Error::Config(format!(
            "eval_fraction must lie in (0, 1), got {eval_fraction}"
        )));
    }
    let total = instances.len();
    let n_eval = (total as f64 * eval_fraction).round() as usize;
    if total < 2 || n_eval == 0 || n_eval >= total {
        return Err(Error::DegenerateSplit {
            total,
            n_train: total.saturating_sub(n_eval),
            n_eval,
        });
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_eval = vec![false; total];
    for &i in &order[..n_eval] {
        is_eval[i] = true;
    }
    let (mut train, mut eval) = (Vec::with_capacity(total - n_eval), Vec::with_capacity(n_eval));
    for (inst, &e) in instances.iter().zip(&is_eval) {
        if e {
            eval.push(inst.clone());
        } else {
            train.push(inst.clone());
        }
    }
    Ok(SplitDataset {
        train,
        eval,
        spec: SplitSpec::Random { eval_fraction, seed },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Tokenizer;
    use std::io::Cursor;

    fn plain(text: &str) -> Result<Records> {
        read_jsonl(Cursor::new(text), "mem", Schema::Plain)
    }

    #[test]
    fn loads_plain_in_order() {
        let recs = plain(
            "{\"id\":\"a\",\"input\":\"x\",\"output\":\"y\"}\n\n{\"id\":\"b\",\"input\":\"x\",\"output\":\"z\",\"meta\":{\"k\":1}}\n{\"id\":\"c\",\"input\":\"\",\"output\":\"y\"}\n",
        )
        .unwrap();
        assert_eq!(recs.ids(), vec!["a", "b", "c"]);
    }

    #[test]
    fn missing_output_is_schema_mismatch_with_line() {
        let err = plain("{\"id\":\"a\",\"input\":\"x\",\"output\":\"y\"}\n{\"id\":\"b\",\"input\":\"x\"}\n")
            .unwrap_err();
        match err {
            Error::SchemaMismatch { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("output"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_json_and_duplicates() {
        assert!(matches!(plain("{oops\n"), Err(Error::Parse { line: 1, .. })));
        let dup = "{\"id\":\"a\",\"input\":\"x\",\"output\":\"y\"}\n{\"id\":\"a\",\"input\":\"x\",\"output\":\"y\"}\n";
        assert!(matches!(plain(dup), Err(Error::DuplicateId { line: 2, .. })));
    }

    #[test]
    fn label_outside_domain_is_rejected() {
        let line = "{\"id\":\"p\",\"context\":\"c\",\"response_a\":\"a\",\"response_b\":\"b\",\"label\":\"C\"}";
        let err = read_jsonl(Cursor::new(line), "mem", Schema::Preference).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch { line: 1, .. }));
    }

    fn pair(label: Label) -> PreferencePair {
        PreferencePair {
            id: "p1".into(),
            context: "Human: hi".into(),
            response_a: "hello there".into(),
            response_b: "go away".into(),
            label,
            meta: Meta::new(),
        }
    }

    #[test]
    fn preference_encodings() {
        let pm = encode_preference(&pair(Label::A), PreferenceTask::PreferenceModeling);
        assert_eq!(pm.output_text, "A");
        assert_eq!(pm.input_text, "CONTEXT: Human: hi ⟂ RESPONSE A: hello there ⟂ RESPONSE B: go away");
        let da = encode_preference(&pair(Label::B), PreferenceTask::DirectAlignment);
        assert_eq!(da.output_text, "go away");
        assert_eq!(da.input_text, "Human: hi");
    }

    #[test]
    fn template_is_injective_even_with_separators_in_data() {
        let mut p = pair(Label::A);
        let mut q = pair(Label::A);
        p.response_a = "x ⟂ RESPONSE B: y".into();
        p.response_b = "z".into();
        q.response_a = "x".into();
        q.response_b = "y ⟂ RESPONSE B: z".into();
        let a = encode_preference(&p, PreferenceTask::PreferenceModeling);
        let b = encode_preference(&q, PreferenceTask::PreferenceModeling);
        assert_ne!(a.input_text, b.input_text);
        let mut r = pair(Label::A);
        r.response_b = "go away now".into();
        assert_ne!(
            encode_preference(&r, PreferenceTask::PreferenceModeling).input_text,
            encode_preference(&pair(Label::A), PreferenceTask::PreferenceModeling).input_text
        );
    }

    #[test]
    fn engine_tokens_of_template_match_layout() {
        let pm = encode_preference(&pair(Label::A), PreferenceTask::PreferenceModeling);
        let tok = Tokenizer::default();
        let toks = tok.tokenize_engine(&pm.input_text);
        assert_eq!(toks.iter().filter(|t| *t == SEP).count(), 2);
    }

    #[test]
    fn last_turn_context() {
        let policy = ContextPolicy::LastTurn { marker: "Human:".into() };
        assert_eq!(policy.apply("Human: a Assistant: b Human: c"), "Human: c");
        assert_eq!(policy.apply("no marker"), "no marker");
    }

    #[test]
    fn randomized_positions_are_seeded() {
        let pairs: Vec<_> = (0..50)
            .map(|i| PreferencePair { id: format!("p{i}"), ..pair(Label::A) })
            .collect();
        let opts = EncodeOptions { randomize_positions: true, position_seed: 3, ..Default::default() };
        let a = encode_preferences(&pairs, &opts);
        assert_eq!(a, encode_preferences(&pairs, &opts));
        let flipped = a.iter().filter(|i| i.output_text == "B").count();
        assert!(flipped > 10 && flipped < 40);
        for inst in a.iter().filter(|i| i.output_text == "B") {
            assert_eq!(inst.meta["response_b"], "hello there");
        }
    }

    fn numbered(n: usize) -> Vec<Instance> {
        (0..n).map(|i| Instance::new(format!("i{i}"), "x", "y")).collect()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split(&numbered(10), 0.2, 7).unwrap();
        assert_eq!((s.train.len(), s.eval.len()), (8, 2));
        assert_eq!(s, split(&numbered(10), 0.2, 7).unwrap());
        let big = numbered(1000);
        let ids = |s: &SplitDataset| s.eval.iter().map(|i| i.id.clone()).collect::<Vec<_>>();
        assert_ne!(ids(&split(&big, 0.2, 1).unwrap()), ids(&split(&big, 0.2, 2).unwrap()));
    }

    #[test]
    fn degenerate_splits() {
        assert!(matches!(split(&numbered(3), 0.1, 0), Err(Error::DegenerateSplit { .. })));
        assert!(matches!(split(&numbered(1), 0.5, 0), Err(Error::DegenerateSplit { .. })));
        assert!(matches!(split(&numbered(10), 1.0, 0), Err(Error::Config(_))));
    }

    proptest::proptest! {
        #[test]
        fn split_partitions_source(n in 2usize..200, frac in 0.05f64..0.95, seed: u64) {
            let data = numbered(n);
            if let Ok(s) = split(&data, frac, seed) {
                let mut all: Vec<_> = s.train.iter().chain(&s.eval).map(|i| i.id.clone()).collect();
                all.sort();
                let mut want: Vec<_> = data.iter().map(|i| i.id.clone()).collect();
                want.sort();
                proptest::prop_assert_eq!(all, want);
                proptest::prop_assert_eq!(s.eval.len(), (n as f64 * frac).round() as usize);
            }
        }

        #[test]
        fn jsonl_round_trip(texts in proptest::collection::vec(("[a-z ]{0,8}", "[a-z]{1,5}"), 1..20)) {
            let recs: Vec<Instance> = texts.iter().enumerate()
                .map(|(i, (x, y))| Instance::new(format!("r{i}"), x.clone(), y.clone()).with_meta("n", i as u64))
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.jsonl");
            write_jsonl(&path, &recs).unwrap();
            proptest::prop_assert_eq!(load_plain(&path).unwrap(), recs);
        }
    }
}
