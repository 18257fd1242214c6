use dcheck_core::checklist::{run_checklist, TestSpec, TestType};
use dcheck_core::dataset::{split, InputLayout, PreferenceTask};
use dcheck_core::families::{FamilyConfig, PredictiveFamily};
use dcheck_core::features::{FeatureKind, FeatureSpec};
use dcheck_core::info::{Conditioning, Estimator, Expression, InputTransform, PredictorCache};
use dcheck_core::synth::{instances_mi, planted, planted_feature, preference_pairs, Planted};

fn tabular() -> Estimator {
    Estimator::new(PredictiveFamily::tabular(0.5))
}

#[test]
fn conditioning_on_the_carrier_leaves_nothing() {
    let est = tabular();
    let s = split(&planted(Planted::Feature, 4000, 1), 0.2, 1).unwrap();
    let phi = est.feature(planted_feature()).unwrap();
    let info = est.conditional_v_information(&phi, Conditioning::Feature, &s).unwrap();
    assert!(info.value_bits.abs() < 0.05, "{}", info.value_bits);
}

#[test]
fn conditioning_on_the_other_side_leaves_everything() {
    let est = tabular();
    let data = planted(Planted::Complement, 4000, 2);
    let s = split(&data, 0.2, 2).unwrap();
    let phi = est.feature(planted_feature()).unwrap();
    let info = est.conditional_v_information(&phi, Conditioning::Feature, &s).unwrap();
    let full = est.v_information(&InputTransform::Identity, &s).unwrap();
    assert!((info.value_bits - full.value_bits).abs() < 0.1);
    assert!((info.value_bits - instances_mi(&data)).abs() < 0.1);
}

#[test]
fn every_family_runs_a_full_checklist_on_preferences() {
    let instances = dcheck_core::dataset::encode_preferences(&preference_pairs(600, 3), &Default::default());
    let s = split(&instances, 0.2, 0).unwrap();
    let length = FeatureSpec::new(FeatureKind::LengthDifference);
    let tests: Vec<TestSpec> = TestType::ALL
        .iter()
        .map(|t| TestSpec::new(t.as_str(), *t, t.needs_feature().then(|| length.clone())))
        .collect();
    for cfg in [FamilyConfig::tabular(), FamilyConfig::ngram(), FamilyConfig::bow_linear()] {
        let est = Estimator::new(PredictiveFamily::new(cfg.clone()).unwrap())
            .with_layout(InputLayout::for_task(PreferenceTask::PreferenceModeling));
        let run = run_checklist(&tests, &est, &s).unwrap();
        assert_eq!(run.results.len(), 10);
        assert_eq!(run.count(dcheck_core::checklist::TestStatus::Error), 0, "{cfg:?}");
        for pair in run.results.chunks(2) {
            assert_eq!(pair[0].estimate_bits, pair[1].estimate_bits);
            assert_ne!(pair[0].passed, pair[1].passed);
        }
    }
}

#[test]
fn shared_cache_reproduces_estimates_in_parallel_runs() {
    let dir = tempfile::tempdir().unwrap();
    let s = split(&planted(Planted::Feature, 2000, 4), 0.2, 4).unwrap();
    let tests: Vec<TestSpec> = TestType::ALL
        .iter()
        .map(|t| TestSpec::new(t.as_str(), *t, t.needs_feature().then(planted_feature)))
        .collect();
    let fresh = run_checklist(&tests, &tabular(), &s).unwrap();
    let runs: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..4)
            .map(|_| {
                scope.spawn(|| {
                    let est = tabular().with_cache(PredictorCache::new(dir.path()));
                    run_checklist(&tests, &est, &s).unwrap()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for run in &runs {
        for (a, b) in run.results.iter().zip(&fresh.results) {
            assert_eq!(a.estimate_bits.map(f64::to_bits), b.estimate_bits.map(f64::to_bits));
        }
    }
    let cached = tabular().with_cache(PredictorCache::new(dir.path()));
    let again = run_checklist(&tests, &cached, &s).unwrap();
    assert!(again.timings.iter().all(|t| t.cached));
}

#[test]
fn direct_alignment_with_ngrams() {
    let pairs = preference_pairs(400, 8);
    let options = dcheck_core::dataset::EncodeOptions {
        task: PreferenceTask::DirectAlignment,
        ..Default::default()
    };
    let s = split(&dcheck_core::dataset::encode_preferences(&pairs, &options), 0.2, 0).unwrap();
    let est = Estimator::new(PredictiveFamily::new(FamilyConfig::ngram()).unwrap());
    let info = est.estimate(&Expression::standard(), &s).unwrap();
    assert!(info.value_bits.is_finite());
    assert_eq!(info.pvi_records.len(), s.eval.len());
}
