//! Dataset filtering by PVI and by response-length heuristics.
//!
//! Every filter returns the surviving records in source order together with
//! a [`RemovalManifest`] that lists each removed record verbatim, so the
//! source dataset can be rebuilt exactly with [`restore`].

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{PreferencePair, Records};
use crate::error::{Error, Result};
use crate::text::word_count;

pub const RETRAINING_CAVEAT: &str =
    "PVIs were computed on the unfiltered data; they are not valid estimates for the filtered set until the predictors are retrained on it";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    RemoveBelow,
    RemoveAbove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterSpec {
    /// Strict comparison against a PVI threshold.
    PviThreshold {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source_test_id: Option<String>,
        mode: FilterMode,
        threshold: f64,
    },
    /// Remove the lowest (or highest) `percentile` percent by PVI, ties
    /// broken by id.
    PviPercentile {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source_test_id: Option<String>,
        mode: FilterMode,
        percentile: f64,
    },
    /// Drop pairs whose longer response has at least `ratio` times the
    /// words of the shorter one.
    LengthRatio { ratio: f64 },
}

impl FilterSpec {
    pub fn needs_pvi(&self) -> bool {
        !matches!(self, FilterSpec::LengthRatio { .. })
    }

    /// Parse a YAML or JSON spec.
    pub fn parse(text: &str, source: &str) -> Result<FilterSpec> {
        let spec: FilterSpec = serde_yaml::from_str(text).map_err(|e| Error::Config(format!("{source}: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn source_test_id(&self) -> Option<&str> {
        match self {
            FilterSpec::PviThreshold { source_test_id, .. } | FilterSpec::PviPercentile { source_test_id, .. } => {
                source_test_id.as_deref()
            }
            FilterSpec::LengthRatio { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterSpec::LengthRatio { ratio } if !(ratio > 1.0) => {
                Err(Error::Config(format!("length ratio must be > 1, got {ratio}")))
            }
            FilterSpec::PviPercentile { percentile, .. } if !(0.0..=100.0).contains(&percentile) => {
                Err(Error::Config(format!("percentile must lie in [0, 100], got {percentile}")))
            }
            FilterSpec::PviThreshold { threshold, .. } if threshold.is_nan() => {
                Err(Error::Config("threshold is NaN".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pvi_bits: Option<f64>,
    /// Word counts of responses A and B, for length filters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_counts: Option<[usize; 2]>,
    /// Position in the source dataset.
    pub index: usize,
    /// The removed record as it appeared in the source.
    pub record: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalManifest {
    pub filter: FilterSpec,
    pub removed: Vec<RemovedRecord>,
    pub kept_count: usize,
    pub removed_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

pub type PviMap = BTreeMap<String, f64>;

fn record_values(records: &Records) -> Vec<Value> {
    match records {
        Records::Plain(v) => v.iter().map(|r| serde_json::to_value(r).expect("records serialize")).collect(),
        Records::Preference(v) => v.iter().map(|r| serde_json::to_value(r).expect("records serialize")).collect(),
    }
}

fn check_coverage(ids: &[&str], pvis: &PviMap) -> Result<()> {
    let missing: Vec<&&str> = ids.iter().filter(|id| !pvis.contains_key(**id)).collect();
    match missing.first() {
        Some(first) => Err(Error::MissingPvi {
            count: missing.len(),
            first: first.to_string(),
        }),
        None => Ok(()),
    }
}

/// Split records by a removal predicate over positions.
fn partition(
    records: &Records,
    filter: FilterSpec,
    remove: impl Fn(usize, &str) -> bool,
    pvis: Option<&PviMap>,
    counts: impl Fn(usize) -> Option<[usize; 2]>,
) -> (Records, RemovalManifest) {
    let ids = records.ids();
    let values = record_values(records);
    let mut removed = Vec::new();
    let mut keep = vec![true; ids.len()];
    for (i, id) in ids.iter().enumerate() {
        if remove(i, id) {
            keep[i] = false;
            removed.push(RemovedRecord {
                id: id.to_string(),
                pvi_bits: pvis.map(|p| p[*id]),
                word_counts: counts(i),
                index: i,
                record: values[i].clone(),
            });
        }
    }
    let kept = match records {
        Records::Plain(v) => Records::Plain(v.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| r.clone()).collect()),
        Records::Preference(v) => {
            Records::Preference(v.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| r.clone()).collect())
        }
    };
    let caveat = pvis.map(|_| RETRAINING_CAVEAT.to_string());
    let manifest = RemovalManifest {
        filter,
        kept_count: kept.len(),
        removed_count: removed.len(),
        removed,
        caveat,
    };
    (kept, manifest)
}

/// `remove_below` drops exactly the records with PVI `< threshold`,
/// `remove_above` those with PVI `> threshold`.
pub fn filter_by_pvi(
    records: &Records,
    pvis: &PviMap,
    mode: FilterMode,
    threshold: f64,
) -> Result<(Records, RemovalManifest)> {
    let spec = FilterSpec::PviThreshold {
        source_test_id: None,
        mode,
        threshold,
    };
    apply_filter(&spec, records, Some(pvis))
}

/// Ids sorted by ascending PVI, ties broken by id.
fn sorted_ids<'a>(ids: &[&'a str], pvis: &PviMap) -> Vec<&'a str> {
    let mut sorted = ids.to_vec();
    sorted.sort_by(|a, b| pvis[*a].total_cmp(&pvis[*b]).then_with(|| a.cmp(b)));
    sorted
}

/// Partition into `k` contiguous PVI intervals, lowest first. Sizes differ
/// by at most one, larger intervals first.
pub fn percentile_subsets(ids: &[&str], pvis: &PviMap, k: usize) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 subsets, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::TooFewExamples {
            needed: k,
            got: ids.len(),
        });
    }
    check_coverage(ids, pvis)?;
    let sorted = sorted_ids(ids, pvis);
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        out.push(sorted[start..start + size].iter().map(|s| s.to_string()).collect());
        start += size;
    }
    Ok(out)
}

/// The `k` lowest-PVI records, lowest first, ties by id.
pub fn flag_suspect_labels(ids: &[&str], pvis: &PviMap, k: usize) -> Result<Vec<(String, f64)>> {
    if k > ids.len() {
        return Err(Error::TooFewExamples {
            needed: k,
            got: ids.len(),
        });
    }
    check_coverage(ids, pvis)?;
    Ok(sorted_ids(ids, pvis)
        .into_iter()
        .take(k)
        .map(|id| (id.to_string(), pvis[id]))
        .collect())
}

/// Whether a pair is dropped by the length-ratio rule (inclusive boundary).
pub fn exceeds_length_ratio(a_words: usize, b_words: usize, ratio: f64) -> bool {
    let (long, short) = (a_words.max(b_words), a_words.min(b_words));
    long as f64 >= ratio * short as f64
}

pub fn length_ratio_filter(pairs: &[PreferencePair], ratio: f64) -> Result<(Vec<PreferencePair>, RemovalManifest)> {
    let records = Records::Preference(pairs.to_vec());
    let (kept, manifest) = apply_filter(&FilterSpec::LengthRatio { ratio }, &records, None)?;
    match kept {
        Records::Preference(v) => Ok((v, manifest)),
        Records::Plain(_) => unreachable!("length filter keeps the schema"),
    }
}

pub fn apply_filter(spec: &FilterSpec, records: &Records, pvis: Option<&PviMap>) -> Result<(Records, RemovalManifest)> {
    spec.validate()?;
    let ids = records.ids();
    match spec {
        FilterSpec::LengthRatio { ratio } => {
            let Records::Preference(pairs) = records else {
                return Err(Error::Config("length_ratio needs preference data".into()));
            };
            let counts: Vec<[usize; 2]> = pairs
                .iter()
                .map(|p| [word_count(&p.response_a), word_count(&p.response_b)])
                .collect();
            Ok(partition(
                records,
                spec.clone(),
                |i, _| exceeds_length_ratio(counts[i][0], counts[i][1], *ratio),
                None,
                |i| Some(counts[i]),
            ))
        }
        FilterSpec::PviThreshold { mode, threshold, .. } => {
            let pvis = pvis.ok_or_else(|| Error::Config("PVI filter needs PVI records".into()))?;
            check_coverage(&ids, pvis)?;
            let remove = |_: usize, id: &str| {
                let p = pvis[id];
                match mode {
                    FilterMode::RemoveBelow => p.partial_cmp(threshold) == Some(Ordering::Less),
                    FilterMode::RemoveAbove => p.partial_cmp(threshold) == Some(Ordering::Greater),
                }
            };
            Ok(partition(records, spec.clone(), remove, Some(pvis), |_| None))
        }
        FilterSpec::PviPercentile { mode, percentile, .. } => {
            let pvis = pvis.ok_or_else(|| Error::Config("PVI filter needs PVI records".into()))?;
            check_coverage(&ids, pvis)?;
            let sorted = sorted_ids(&ids, pvis);
            let n = ((ids.len() as f64) * percentile / 100.0).round() as usize;
            let chosen: std::collections::BTreeSet<&str> = match mode {
                FilterMode::RemoveBelow => sorted.iter().take(n).copied().collect(),
                FilterMode::RemoveAbove => sorted.iter().rev().take(n).copied().collect(),
            };
            Ok(partition(records, spec.clone(), |_, id| chosen.contains(id), Some(pvis), |_| None))
        }
    }
}

/// Rebuild the source dataset from a filter's output and its manifest.
pub fn restore(kept: &Records, manifest: &RemovalManifest) -> Result<Records> {
    let total = kept.len() + manifest.removed.len();
    let kept_values = record_values(kept);
    let mut slots: Vec<Option<Value>> = vec![None; total];
    for r in &manifest.removed {
        let slot = slots
            .get_mut(r.index)
            .ok_or_else(|| Error::Config(format!("manifest index {} out of range", r.index)))?;
        *slot = Some(r.record.clone());
    }
    let mut rest = kept_values.into_iter();
    for slot in slots.iter_mut().filter(|s| s.is_none()) {
        *slot = rest.next();
    }
    let values: Vec<Value> = slots.into_iter().map(|s| s.expect("every slot filled")).collect();
    let decode = |e: serde_json::Error| Error::Codec(e.to_string());
    Ok(match kept {
        Records::Plain(_) => Records::Plain(values.into_iter().map(serde_json::from_value).collect::<std::result::Result<_, _>>().map_err(decode)?),
        Records::Preference(_) => Records::Preference(
            values.into_iter().map(serde_json::from_value).collect::<std::result::Result<_, _>>().map_err(decode)?,
        ),
    })
}

/// `id,pvi_bits` with a header row.
pub fn write_pvi_csv(path: &Path, records: &[(String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["id", "pvi_bits"]).map_err(|e| csv_err(path, e))?;
    for (id, pvi) in records {
        w.write_record([id.as_str(), &pvi.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pvi_csv(path: &Path) -> Result<PviMap> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = PviMap::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        let bad = |message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let (id, value) = match (row.get(0), row.get(1)) {
            (Some(id), Some(v)) => (id, v),
            _ => return Err(bad("expected id,pvi_bits".into())),
        };
        let value: f64 = value.trim().parse().map_err(|e| bad(format!("bad pvi_bits: {e}")))?;
        if out.insert(id.to_string(), value).is_some() {
            return Err(Error::DuplicateId {
                path: path.display().to_string(),
                line,
                id: id.to_string(),
            });
        }
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Instance, Label};
    use proptest::prelude::*;

    fn plain(ids: &[&str]) -> Records {
        Records::Plain(ids.iter().map(|id| Instance::new(*id, format!("x {id}"), "y")).collect())
    }

    fn pvis(pairs: &[(&str, f64)]) -> PviMap {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn threshold_zero_keeps_zero() {
        let data = plain(&["a", "b", "c"]);
        let map = pvis(&[("a", -0.5), ("b", 0.2), ("c", 0.0)]);
        let (kept, manifest) = filter_by_pvi(&data, &map, FilterMode::RemoveBelow, 0.0).unwrap();
        assert_eq!(kept.ids(), ["b", "c"]);
        assert_eq!(manifest.removed_count, 1);
        assert_eq!(manifest.removed[0].pvi_bits, Some(-0.5));
        assert_eq!(manifest.caveat.as_deref(), Some(RETRAINING_CAVEAT));
        let (kept, _) = filter_by_pvi(&data, &map, FilterMode::RemoveBelow, f64::NEG_INFINITY).unwrap();
        assert_eq!(kept, data);
        let (kept, _) = filter_by_pvi(&data, &map, FilterMode::RemoveAbove, 0.0).unwrap();
        assert_eq!(kept.ids(), ["a", "c"]);
    }

    #[test]
    fn missing_pvis_are_an_error() {
        let data = plain(&["a", "b", "c"]);
        let map = pvis(&[("a", 1.0)]);
        match filter_by_pvi(&data, &map, FilterMode::RemoveBelow, 0.0) {
            Err(Error::MissingPvi { count, first }) => assert_eq!((count, first.as_str()), (2, "b")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn percentile_subset_sizes() {
        let ids: Vec<String> = (0..11).map(|i| format!("i{i:02}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let map: PviMap = ids.iter().enumerate().map(|(i, id)| (id.clone(), -(i as f64))).collect();
        let subsets = percentile_subsets(&refs, &map, 5).unwrap();
        let sizes: Vec<usize> = subsets.iter().map(Vec::len).collect();
        assert_eq!(sizes, [3, 2, 2, 2, 2]);
        assert_eq!(subsets[0], ["i10", "i09", "i08"]);
        let ten: Vec<&str> = refs[..10].to_vec();
        let sizes: Vec<usize> = percentile_subsets(&ten, &map, 5).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, [2; 5]);
        assert!(matches!(percentile_subsets(&refs[..3], &map, 5), Err(Error::TooFewExamples { .. })));
        assert!(percentile_subsets(&refs, &map, 1).is_err());
    }

    #[test]
    fn ties_fall_back_to_id_order() {
        let ids = ["d", "b", "a", "c"];
        let map = pvis(&[("a", 0.0), ("b", 0.0), ("c", 0.0), ("d", 0.0)]);
        let subsets = percentile_subsets(&ids, &map, 2).unwrap();
        assert_eq!(subsets, [vec!["a", "b"], vec!["c", "d"]]);
    }

    #[test]
    fn suspects_are_the_lowest() {
        let ids = ["a", "b"];
        let map = pvis(&[("a", -2.5), ("b", 0.1)]);
        assert_eq!(flag_suspect_labels(&ids, &map, 1).unwrap(), vec![("a".to_string(), -2.5)]);
        let all = flag_suspect_labels(&ids, &map, 2).unwrap();
        assert_eq!(all.len(), 2);
        assert!(flag_suspect_labels(&ids, &map, 3).is_err());
    }

    fn pair(id: &str, a: usize, b: usize) -> PreferencePair {
        PreferencePair {
            id: id.into(),
            context: "c".into(),
            response_a: vec!["w"; a].join(" "),
            response_b: vec!["v"; b].join(" "),
            label: Label::A,
            meta: Default::default(),
        }
    }

    #[test]
    fn length_ratio_boundary_is_inclusive() {
        let pairs = vec![pair("p1", 10, 4), pair("p2", 10, 6), pair("p3", 8, 4), pair("p4", 4, 8)];
        let (kept, manifest) = length_ratio_filter(&pairs, 2.0).unwrap();
        let kept_ids: Vec<&str> = kept.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(kept_ids, ["p2"]);
        assert_eq!(manifest.removed[0].word_counts, Some([10, 4]));
        assert!(manifest.caveat.is_none());
        assert!(length_ratio_filter(&pairs, 1.0).is_err());
        assert!(apply_filter(&FilterSpec::LengthRatio { ratio: 2.0 }, &plain(&["a"]), None).is_err());
    }

    #[test]
    fn percentile_filter_removes_the_bottom() {
        let data = plain(&["a", "b", "c", "d"]);
        let map = pvis(&[("a", 3.0), ("b", -1.0), ("c", 0.5), ("d", 2.0)]);
        let spec = FilterSpec::PviPercentile {
            source_test_id: Some("non_exclusivity".into()),
            mode: FilterMode::RemoveBelow,
            percentile: 50.0,
        };
        let (kept, _) = apply_filter(&spec, &data, Some(&map)).unwrap();
        assert_eq!(kept.ids(), ["a", "d"]);
    }

    #[test]
    fn pvi_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pvi.csv");
        let records = vec![("a".to_string(), 0.1 + 0.2), ("b,c".to_string(), -1e-300)];
        write_pvi_csv(&path, &records).unwrap();
        let back = read_pvi_csv(&path).unwrap();
        assert_eq!(back["a"].to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back["b,c"], -1e-300);
        std::fs::write(&path, "id,pvi_bits\na,1\na,2\n").unwrap();
        assert!(matches!(read_pvi_csv(&path), Err(Error::DuplicateId { .. })));
        std::fs::write(&path, "id,pvi_bits\na,zz\n").unwrap();
        assert!(matches!(read_pvi_csv(&path), Err(Error::Parse { line: 2, .. })));
    }

    proptest! {
        #[test]
        fn threshold_filter_is_exact_idempotent_and_restorable(
            values in prop::collection::vec(-3.0f64..3.0, 1..60),
            threshold in -3.0f64..3.0,
            above in any::<bool>(),
        ) {
            let ids: Vec<String> = (0..values.len()).map(|i| format!("r{i}")).collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let data = plain(&refs);
            let map: PviMap = ids.iter().cloned().zip(values.iter().copied()).collect();
            let mode = if above { FilterMode::RemoveAbove } else { FilterMode::RemoveBelow };
            let (kept, manifest) = filter_by_pvi(&data, &map, mode, threshold).unwrap();
            let expected: Vec<&str> = refs
                .iter()
                .copied()
                .filter(|id| if above { map[*id] > threshold } else { map[*id] < threshold })
                .collect();
            let removed: Vec<&str> = manifest.removed.iter().map(|r| r.id.as_str()).collect();
            prop_assert_eq!(removed, expected);
            let (again, second) = filter_by_pvi(&kept, &map, mode, threshold).unwrap();
            prop_assert_eq!(second.removed_count, 0);
            prop_assert_eq!(&again, &kept);
            prop_assert_eq!(restore(&kept, &manifest).unwrap(), data);
        }

        #[test]
        fn percentile_subsets_partition(values in prop::collection::vec(-3.0f64..3.0, 2..80), k in 2usize..10) {
            prop_assume!(values.len() >= k);
            let ids: Vec<String> = (0..values.len()).map(|i| format!("r{i}")).collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let map: PviMap = ids.iter().cloned().zip(values.iter().copied()).collect();
            let subsets = percentile_subsets(&refs, &map, k).unwrap();
            let mut all: Vec<&String> = subsets.iter().flatten().collect();
            prop_assert_eq!(all.len(), ids.len());
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), ids.len());
            let sizes: Vec<usize> = subsets.iter().map(Vec::len).collect();
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
            for w in subsets.windows(2) {
                let hi = w[0].iter().map(|id| map[id]).fold(f64::NEG_INFINITY, f64::max);
                let lo = w[1].iter().map(|id| map[id]).fold(f64::INFINITY, f64::min);
                prop_assert!(hi <= lo);
            }
        }
    }
}
