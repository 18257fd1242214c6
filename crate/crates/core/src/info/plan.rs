//! Deduplicated training plans. Every expression needs two trainings; many
//! expressions share some (all unconditional ones share the null training),
//! so the plan trains each distinct (family, transform, train split) once.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{timed, EntropyEstimate, Estimator, Expression, InputTransform};
use crate::dataset::SplitDataset;
use crate::hashing::digest_json;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrainingKey {
    pub family_hash: String,
    pub transform_hash: String,
    pub split_hash: String,
}

impl TrainingKey {
    /// Single content address for the triple.
    pub fn id(&self) -> String {
        digest_json(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingJob {
    pub key: TrainingKey,
    /// Fitted transform.
    pub transform: InputTransform,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunPlan {
    /// Keyed by [`TrainingKey::id`].
    pub required_trainings: BTreeMap<String, TrainingJob>,
    /// Test id to the `[base, conditioned]` training ids.
    pub test_bindings: BTreeMap<String, [String; 2]>,
    /// Tests whose transforms could not even be fitted.
    pub binding_errors: BTreeMap<String, String>,
}

impl RunPlan {
    pub fn len(&self) -> usize {
        self.required_trainings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.required_trainings.is_empty()
    }
}

pub fn build_run_plan(estimator: &Estimator, tests: &[(String, Expression)], split: &SplitDataset) -> RunPlan {
    let mut plan = RunPlan::default();
    for (test_id, expr) in tests {
        let (base, cond) = expr.transforms();
        let mut bind = |t: &InputTransform| -> crate::error::Result<String> {
            let fitted = t.fit(&split.train)?;
            let key = estimator.training_key(&fitted, split);
            let id = key.id();
            plan.required_trainings
                .entry(id.clone())
                .or_insert(TrainingJob { key, transform: fitted });
            Ok(id)
        };
        match bind(&base).and_then(|b| Ok([b, bind(&cond)?])) {
            Ok(ids) => {
                plan.test_bindings.insert(test_id.clone(), ids);
            }
            Err(e) => {
                plan.binding_errors.insert(test_id.clone(), e.to_string());
            }
        }
    }
    plan
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobOutcome {
    pub result: Result<EntropyEstimate, String>,
    pub seconds: f64,
    pub cached: bool,
}

/// Run every training of the plan, in parallel. Failures are kept per job so
/// that only the tests depending on a failed training are affected.
pub fn execute_plan(estimator: &Estimator, plan: &RunPlan, split: &SplitDataset) -> BTreeMap<String, JobOutcome> {
    let jobs: Vec<(&String, &TrainingJob)> = plan.required_trainings.iter().collect();
    jobs.par_iter()
        .map(|(id, job)| {
            let (result, seconds) = timed(|| estimator.entropy_fitted(&job.transform, split));
            let outcome = match result {
                Ok((est, cached)) => JobOutcome {
                    result: Ok(est),
                    seconds,
                    cached,
                },
                Err(e) => JobOutcome {
                    result: Err(e.to_string()),
                    seconds,
                    cached: false,
                },
            };
            ((*id).clone(), outcome)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, Instance};
    use crate::families::PredictiveFamily;
    use crate::features::{FeatureKind, FeatureSpec};
    use crate::info::ExpressionKind;

    fn setup() -> (Estimator, SplitDataset, crate::features::Feature) {
        let data: Vec<Instance> = (0..40)
            .map(|i| Instance::new(format!("i{i}"), format!("k{} n{}", i % 3, i % 5), format!("y{}", i % 2)))
            .collect();
        let est = Estimator::new(PredictiveFamily::tabular(0.5));
        let f = est
            .feature(FeatureSpec::new(FeatureKind::WordlistKeep).with_words(["k0", "k1", "k2"]))
            .unwrap();
        (est, split(&data, 0.25, 0).unwrap(), f)
    }

    fn expr(kind: ExpressionKind, f: &crate::features::Feature) -> Expression {
        let feature = kind.needs_feature().then(|| f.clone());
        Expression::new(kind, feature).unwrap()
    }

    #[test]
    fn viability_applicability_sufficiency_need_four() {
        let (est, s, f) = setup();
        let tests = vec![
            ("v".to_string(), expr(ExpressionKind::Standard, &f)),
            ("a".to_string(), expr(ExpressionKind::Feature, &f)),
            ("s".to_string(), expr(ExpressionKind::ConditionalOnFeature, &f)),
        ];
        let plan = build_run_plan(&est, &tests, &s);
        assert_eq!(plan.len(), 4);
        let null = &plan.test_bindings["v"][0];
        assert_eq!(&plan.test_bindings["a"][0], null);
        assert_eq!(plan.test_bindings["s"][0], plan.test_bindings["a"][1]);
        let described: Vec<String> = plan.required_trainings.values().map(|j| j.transform.describe()).collect();
        for want in ["null", "identity", "feature(wordlist_keep)", "concat(feature(wordlist_keep), X)"] {
            assert!(described.iter().any(|d| d == want), "{want} missing from {described:?}");
        }
    }

    #[test]
    fn negation_pairs_and_single_tests() {
        let (est, s, f) = setup();
        let pair = vec![
            ("app".to_string(), expr(ExpressionKind::Feature, &f)),
            ("inapp".to_string(), expr(ExpressionKind::Feature, &f)),
        ];
        let plan = build_run_plan(&est, &pair, &s);
        assert_eq!(plan.len(), 2);
        assert_eq!(plan.test_bindings["app"], plan.test_bindings["inapp"]);
        let single = vec![("v".to_string(), Expression::standard())];
        assert_eq!(build_run_plan(&est, &single, &s).len(), 2);
    }

    #[test]
    fn all_five_expressions_share_six_trainings() {
        let (est, s, f) = setup();
        let tests: Vec<(String, Expression)> = [
            ExpressionKind::Standard,
            ExpressionKind::Feature,
            ExpressionKind::ConditionalOnFeature,
            ExpressionKind::Complement,
            ExpressionKind::ConditionalOnComplement,
        ]
        .iter()
        .map(|k| (k.as_str().to_string(), expr(*k, &f)))
        .collect();
        let plan = build_run_plan(&est, &tests, &s);
        assert_eq!(plan.len(), 6);
        let outcomes = execute_plan(&est, &plan, &s);
        assert_eq!(outcomes.len(), 6);
        assert!(outcomes.values().all(|o| o.result.is_ok()));
    }
}
