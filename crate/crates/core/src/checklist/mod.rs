//! The ten checklist tests. Each asserts that one information expression is
//! above or below a tolerance ε; tests come in negation pairs that share an
//! expression and differ only in direction.

mod config;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use config::{
    load_dataset, ChecklistConfig, DataOptions, FamilySetting, LoadedData, PviSelection, SplitOptions, TestConfig,
};
pub use report::{summary_table, ChecklistReport, DataProvenance, ReportSummary, ToolInfo, TrainingRecord};

use crate::dataset::SplitDataset;
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::info::{
    build_run_plan, execute_plan, info_from_entropies, Estimator, Expression, ExpressionKind, JobOutcome,
    RunPlan,
};

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestType {
    Viability,
    Unviability,
    Applicability,
    Inapplicability,
    NonExclusivity,
    Exclusivity,
    Insufficiency,
    Sufficiency,
    Necessity,
    Redundancy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Passes when the estimate is strictly greater than ε.
    Above,
    /// Passes when the estimate is strictly less than ε.
    Below,
}

impl TestType {
    pub const ALL: [TestType; 10] = [
        TestType::Viability,
        TestType::Unviability,
        TestType::Applicability,
        TestType::Inapplicability,
        TestType::NonExclusivity,
        TestType::Exclusivity,
        TestType::Insufficiency,
        TestType::Sufficiency,
        TestType::Necessity,
        TestType::Redundancy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestType::Viability => "viability",
            TestType::Unviability => "unviability",
            TestType::Applicability => "applicability",
            TestType::Inapplicability => "inapplicability",
            TestType::NonExclusivity => "non_exclusivity",
            TestType::Exclusivity => "exclusivity",
            TestType::Insufficiency => "insufficiency",
            TestType::Sufficiency => "sufficiency",
            TestType::Necessity => "necessity",
            TestType::Redundancy => "redundancy",
        }
    }

    pub fn parse(name: &str) -> Option<TestType> {
        TestType::ALL.into_iter().find(|t| t.as_str() == name)
    }

    /// The other test of its negation pair.
    pub fn negation(self) -> TestType {
        match self {
            TestType::Viability => TestType::Unviability,
            TestType::Unviability => TestType::Viability,
            TestType::Applicability => TestType::Inapplicability,
            TestType::Inapplicability => TestType::Applicability,
            TestType::NonExclusivity => TestType::Exclusivity,
            TestType::Exclusivity => TestType::NonExclusivity,
            TestType::Insufficiency => TestType::Sufficiency,
            TestType::Sufficiency => TestType::Insufficiency,
            TestType::Necessity => TestType::Redundancy,
            TestType::Redundancy => TestType::Necessity,
        }
    }

    pub fn needs_feature(self) -> bool {
        !matches!(self, TestType::Viability | TestType::Unviability)
    }
}

/// The expression a test evaluates and the direction it asserts.
pub fn expression_for(test: TestType) -> (ExpressionKind, Direction) {
    use Direction::*;
    use ExpressionKind::*;
    match test {
        TestType::Viability => (Standard, Above),
        TestType::Unviability => (Standard, Below),
        TestType::Applicability => (Feature, Above),
        TestType::Inapplicability => (Feature, Below),
        TestType::NonExclusivity => (Complement, Above),
        TestType::Exclusivity => (Complement, Below),
        TestType::Insufficiency => (ConditionalOnFeature, Above),
        TestType::Sufficiency => (ConditionalOnFeature, Below),
        TestType::Necessity => (ConditionalOnComplement, Above),
        TestType::Redundancy => (ConditionalOnComplement, Below),
    }
}

/// Strict comparison in both directions: an estimate equal to ε fails
/// either way.
pub fn evaluate_outcome(test: TestType, estimate_bits: f64, epsilon: f64) -> bool {
    match expression_for(test).1 {
        Direction::Above => estimate_bits > epsilon,
        Direction::Below => estimate_bits < epsilon,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub test_id: String,
    pub test_type: TestType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<FeatureSpec>,
    pub epsilon: f64,
}

impl TestSpec {
    pub fn new(test_id: impl Into<String>, test_type: TestType, feature: Option<FeatureSpec>) -> Self {
        TestSpec {
            test_id: test_id.into(),
            test_type,
            feature,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "test `{}`: epsilon must be finite and >= 0, got {}",
                self.test_id, self.epsilon
            )));
        }
        match (self.test_type.needs_feature(), &self.feature) {
            (true, None) => Err(Error::Config(format!(
                "test `{}`: {} needs a feature",
                self.test_id,
                self.test_type.as_str()
            ))),
            (false, Some(_)) => Err(Error::Config(format!(
                "test `{}`: {} takes no feature",
                self.test_id,
                self.test_type.as_str()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
}

impl TestStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TestStatus::Pass => "pass",
            TestStatus::Fail => "fail",
            TestStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub spec: TestSpec,
    pub expression_kind: ExpressionKind,
    pub formula: String,
    pub direction: Direction,
    /// Absent when the test errored.
    pub estimate_bits: Option<f64>,
    pub passed: bool,
    pub status: TestStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// `[base, conditioned]` model keys.
    pub model_keys: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complement_rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_eval: Option<usize>,
    /// Convergence warnings from either training.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Written to a sidecar file rather than the report.
    #[serde(skip)]
    pub pvi_records: Vec<(String, f64)>,
}

/// Wall-clock cost of one training, kept out of the report so reports are
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobTiming {
    pub training_key: String,
    pub transform: String,
    pub seconds: f64,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChecklistRun {
    pub results: Vec<TestResult>,
    pub plan: RunPlan,
    pub timings: Vec<JobTiming>,
}

impl ChecklistRun {
    pub fn count(&self, status: TestStatus) -> usize {
        self.results.iter().filter(|r| r.status == status).count()
    }
}

fn errored(spec: &TestSpec, message: String) -> TestResult {
    let (kind, direction) = expression_for(spec.test_type);
    TestResult {
        spec: spec.clone(),
        expression_kind: kind,
        formula: kind.formula().into(),
        direction,
        estimate_bits: None,
        passed: false,
        status: TestStatus::Error,
        error: Some(message),
        model_keys: Vec::new(),
        complement_rule: spec.feature.as_ref().map(|f| f.kind.complement_rule().to_string()),
        n_eval: None,
        warnings: Vec::new(),
        pvi_records: Vec::new(),
    }
}

fn outcome<'a>(outcomes: &'a BTreeMap<String, JobOutcome>, id: &str) -> std::result::Result<&'a crate::info::EntropyEstimate, String> {
    match outcomes.get(id).map(|o| &o.result) {
        Some(Ok(e)) => Ok(e),
        Some(Err(msg)) => Err(msg.clone()),
        None => Err(format!("training {id} was not run")),
    }
}

/// Run a whole checklist. Trainings are deduplicated and run in parallel; a
/// training failure marks only the tests that depend on it as errored.
pub fn run_checklist(tests: &[TestSpec], estimator: &Estimator, split: &SplitDataset) -> Result<ChecklistRun> {
    if tests.is_empty() {
        return Err(Error::Config("checklist has no tests".into()));
    }
    let mut seen = BTreeSet::new();
    for t in tests {
        if !seen.insert(t.test_id.as_str()) {
            return Err(Error::Config(format!("duplicate test id `{}`", t.test_id)));
        }
        t.validate()?;
    }

    let mut expressions = Vec::new();
    let mut early: BTreeMap<String, String> = BTreeMap::new();
    for t in tests {
        let (kind, _) = expression_for(t.test_type);
        let feature = t.feature.clone().map(|f| estimator.feature(f)).transpose();
        match feature.and_then(|f| Expression::new(kind, f)) {
            Ok(expr) => expressions.push((t.test_id.clone(), expr)),
            Err(e) => {
                early.insert(t.test_id.clone(), format!("feature setup failed: {e}"));
            }
        }
    }
    let plan = build_run_plan(estimator, &expressions, split);
    let outcomes = execute_plan(estimator, &plan, split);

    let results = tests
        .iter()
        .map(|spec| {
            if let Some(msg) = early.get(&spec.test_id).or(plan.binding_errors.get(&spec.test_id)) {
                return errored(spec, msg.clone());
            }
            let [base_id, cond_id] = &plan.test_bindings[&spec.test_id];
            let (kind, direction) = expression_for(spec.test_type);
            let estimates = outcome(&outcomes, base_id).and_then(|b| Ok((b, outcome(&outcomes, cond_id)?)));
            let info = estimates.and_then(|(b, c)| {
                info_from_entropies(b, c, kind)
                    .map(|i| (i, b, c))
                    .map_err(|e| e.to_string())
            });
            let (info, base, cond) = match info {
                Ok(x) => x,
                Err(msg) => return errored(spec, msg),
            };
            let passed = evaluate_outcome(spec.test_type, info.value_bits, spec.epsilon);
            let warnings = [base, cond]
                .iter()
                .filter(|e| e.training.non_convergence)
                .map(|e| format!("{} training hit the epoch cap before converging", e.transform))
                .collect();
            TestResult {
                spec: spec.clone(),
                expression_kind: kind,
                formula: kind.formula().into(),
                direction,
                estimate_bits: Some(info.value_bits),
                passed,
                status: if passed { TestStatus::Pass } else { TestStatus::Fail },
                error: None,
                model_keys: vec![info.null_model_key.clone(), info.cond_model_key.clone()],
                complement_rule: spec.feature.as_ref().map(|f| f.kind.complement_rule().to_string()),
                n_eval: Some(info.pvi_records.len()),
                warnings,
                pvi_records: info.pvi_records,
            }
        })
        .collect();

    let timings = plan
        .required_trainings
        .iter()
        .map(|(id, job)| {
            let o = &outcomes[id];
            JobTiming {
                training_key: id.clone(),
                transform: job.transform.describe(),
                seconds: o.seconds,
                cached: o.cached,
            }
        })
        .collect();
    Ok(ChecklistRun { results, plan, timings })
}

/// Run a single test.
pub fn run_test(spec: &TestSpec, estimator: &Estimator, split: &SplitDataset) -> Result<TestResult> {
    let mut run = run_checklist(std::slice::from_ref(spec), estimator, split)?;
    Ok(run.results.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, Instance};
    use crate::families::{FamilyConfig, PredictiveFamily};
    use crate::features::FeatureKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expressions_and_directions() {
        assert_eq!(expression_for(TestType::Necessity), (ExpressionKind::ConditionalOnComplement, Direction::Above));
        assert_eq!(expression_for(TestType::Sufficiency), (ExpressionKind::ConditionalOnFeature, Direction::Below));
        assert_eq!(expression_for(TestType::Unviability), (ExpressionKind::Standard, Direction::Below));
        for t in TestType::ALL {
            assert_eq!(t.negation().negation(), t);
            assert_eq!(expression_for(t).0, expression_for(t.negation()).0);
            assert_ne!(expression_for(t).1, expression_for(t.negation()).1);
            assert_eq!(TestType::parse(t.as_str()), Some(t));
        }
    }

    #[test]
    fn published_verdicts() {
        assert!(evaluate_outcome(TestType::Applicability, 0.066, 0.01));
        assert!(!evaluate_outcome(TestType::Sufficiency, 0.069, 0.01));
        assert!(!evaluate_outcome(TestType::Viability, 0.0, 0.01));
        assert!(!evaluate_outcome(TestType::Viability, 0.01, 0.01));
        assert!(!evaluate_outcome(TestType::Unviability, 0.01, 0.01));
    }

    proptest! {
        #[test]
        fn exactly_one_of_each_pair_passes(est in -2.0f64..2.0, eps in 0.0f64..0.5) {
            prop_assume!(est != eps);
            for t in TestType::ALL {
                prop_assert!(evaluate_outcome(t, est, eps) != evaluate_outcome(t.negation(), est, eps));
            }
        }

        #[test]
        fn raising_epsilon_only_hurts_above_tests(est in -2.0f64..2.0, lo in 0.0f64..0.5, d in 0.0f64..0.5) {
            let hi = lo + d;
            for t in TestType::ALL {
                let (a, b) = (evaluate_outcome(t, est, lo), evaluate_outcome(t, est, hi));
                match expression_for(t).1 {
                    Direction::Above => prop_assert!(!b || a),
                    Direction::Below => prop_assert!(!a || b),
                }
            }
        }
    }

    fn planted(seed: u64, label: impl Fn(u32, u32) -> u32) -> (Estimator, SplitDataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Instance> = (0..3000)
            .map(|i| {
                let (a, b) = (rng.random_range(0..4u32), rng.random_range(0..4u32));
                Instance::new(format!("i{i}"), format!("k{a} n{b}"), format!("y{}", label(a, b)))
            })
            .collect();
        (Estimator::new(PredictiveFamily::tabular(0.5)), split(&data, 0.2, seed).unwrap())
    }

    fn keep_k() -> FeatureSpec {
        FeatureSpec::new(FeatureKind::WordlistKeep).with_words(["k0", "k1", "k2", "k3"])
    }

    fn all_ten() -> Vec<TestSpec> {
        TestType::ALL
            .iter()
            .map(|t| TestSpec::new(t.as_str(), *t, t.needs_feature().then(keep_k)))
            .collect()
    }

    fn verdicts(run: &ChecklistRun) -> BTreeMap<&str, bool> {
        run.results.iter().map(|r| (r.spec.test_id.as_str(), r.passed)).collect()
    }

    #[test]
    fn label_determined_by_the_feature() {
        let (est, s) = planted(1, |a, _| a % 2);
        let run = run_checklist(&all_ten(), &est, &s).unwrap();
        let v = verdicts(&run);
        assert!(v["sufficiency"] && !v["insufficiency"]);
        assert!(v["viability"] && v["applicability"] && v["exclusivity"] && v["necessity"] && !v["redundancy"]);
        assert_eq!(run.plan.len(), 6);
        assert_eq!(run.results.len(), 10);
    }

    #[test]
    fn label_determined_by_the_complement() {
        let (est, s) = planted(2, |_, b| b % 2);
        let v = verdicts(&run_checklist(&all_ten(), &est, &s).unwrap()).into_iter().map(|(k, v)| (k.to_string(), v)).collect::<BTreeMap<_, _>>();
        assert!(!v["exclusivity"] && v["non_exclusivity"] && !v["applicability"]);
        assert!(v["redundancy"] && !v["necessity"] && v["insufficiency"]);
    }

    #[test]
    fn independent_data_is_unviable() {
        let (est, s) = planted(3, |_, _| 0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = s;
        for inst in s.train.iter_mut().chain(s.eval.iter_mut()) {
            inst.output_text = format!("y{}", rng.random_range(0..2));
        }
        let run = run_test(&TestSpec::new("u", TestType::Unviability, None), &est, &s).unwrap();
        assert!(run.passed);
        let run = run_test(&TestSpec::new("v", TestType::Viability, None), &est, &s).unwrap();
        assert!(!run.passed);
    }

    #[test]
    fn fully_masked_feature_is_inapplicable() {
        let (est, s) = planted(4, |a, b| (a + b) % 2);
        let spec = FeatureSpec::new(FeatureKind::WordlistKeep).with_words(["never"]);
        let r = run_test(&TestSpec::new("i", TestType::Inapplicability, Some(spec)), &est, &s).unwrap();
        assert!(r.passed);
        assert!(r.estimate_bits.unwrap().abs() < 1e-12);
    }

    #[test]
    fn duplicates_and_negations_share_estimates() {
        let (est, s) = planted(5, |a, _| a % 2);
        let tests = vec![
            TestSpec::new("a1", TestType::Applicability, Some(keep_k())),
            TestSpec::new("a2", TestType::Applicability, Some(keep_k())),
            TestSpec::new("n", TestType::Inapplicability, Some(keep_k())),
        ];
        let run = run_checklist(&tests, &est, &s).unwrap();
        assert_eq!(run.plan.len(), 2);
        let e: Vec<f64> = run.results.iter().map(|r| r.estimate_bits.unwrap()).collect();
        assert_eq!(e[0].to_bits(), e[1].to_bits());
        assert_eq!(e[0].to_bits(), e[2].to_bits());
        assert_eq!(run.results[0].passed, run.results[1].passed);
        assert_ne!(run.results[0].passed, run.results[2].passed);
    }

    #[test]
    fn failures_are_contained_per_test() {
        let (est, s) = planted(6, |a, _| a % 2);
        let tests = vec![
            TestSpec::new("ok", TestType::Viability, None),
            TestSpec::new("bad", TestType::Applicability, Some(FeatureSpec::new(FeatureKind::ScoreDelta))),
            TestSpec::new("worse", TestType::Applicability, Some(FeatureSpec::new(FeatureKind::TokenOverlap))),
        ];
        let run = run_checklist(&tests, &est, &s).unwrap();
        assert_eq!(run.results[0].status, TestStatus::Pass);
        assert_eq!(run.results[1].status, TestStatus::Error);
        assert!(run.results[1].error.as_deref().unwrap().contains("score_a"));
        assert_eq!(run.results[2].status, TestStatus::Error);
        assert_eq!(run.count(TestStatus::Error), 2);
    }

    #[test]
    fn spec_validation() {
        let (est, s) = planted(7, |a, _| a % 2);
        assert!(run_checklist(&[], &est, &s).is_err());
        let no_feature = TestSpec::new("x", TestType::Necessity, None);
        assert!(run_checklist(&[no_feature], &est, &s).is_err());
        let neg = TestSpec::new("x", TestType::Viability, None).with_epsilon(-0.1);
        assert!(run_checklist(&[neg], &est, &s).is_err());
        let dup = vec![TestSpec::new("x", TestType::Viability, None), TestSpec::new("x", TestType::Unviability, None)];
        assert!(run_checklist(&dup, &est, &s).is_err());
    }

    #[test]
    fn diverging_training_marks_dependent_tests_errored() {
        let data = vec![Instance::new("1", "a", "A"), Instance::new("2", "a", "B"), Instance::new("3", "a", "A")];
        let s = SplitDataset::explicit(data.clone(), data);
        let fam = PredictiveFamily::new(FamilyConfig::BowLinear {
            learning_rate: f64::MAX,
            max_epochs: 20,
            tolerance_bits: 0.0,
        })
        .unwrap();
        let est = Estimator::new(fam);
        let run = run_checklist(&[TestSpec::new("v", TestType::Viability, None)], &est, &s).unwrap();
        assert_eq!(run.results[0].status, TestStatus::Error);
        assert!(run.results[0].error.as_deref().unwrap().contains("diverged"));
    }
}
