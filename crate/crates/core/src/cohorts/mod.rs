//! Cohort stratification and group comparisons.

mod attributes;
mod mann_whitney;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use attributes::{challenge_attribute_table, read_attribute_table, AttributeError, AttributeTable, ATTRIBUTE_COLUMNS};
pub use mann_whitney::{mann_whitney_u, MannWhitney, MannWhitneyError, EXACT_MAX_TOTAL};

use crate::ingest::{CaseMeta, ManifestEntry};
use crate::metrics::{MetricRecord, MetricValue};
use crate::ranking::{holm_adjust, Task};
use crate::report::{box_stats_metric, BoxStats, BoxStatsError};

/// Label of the stratum collecting items without a value for the key.
pub const UNKNOWN: &str = "unknown";

/// Metadata dimension to stratify on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StratumKey {
    Split,
    Institution,
    Scanner,
    AopStratum,
    /// An extra manifest column.
    Tag(String),
}

impl StratumKey {
    pub fn label_of(&self, meta: &CaseMeta) -> String {
        match self {
            StratumKey::Split => meta.split.as_str().to_string(),
            StratumKey::Institution => meta.institution.as_str().to_string(),
            StratumKey::Scanner => meta.scanner.as_str().to_string(),
            StratumKey::AopStratum => meta.aop_stratum.map_or(UNKNOWN, |s| s.as_str()).to_string(),
            StratumKey::Tag(name) => meta
                .tags
                .get(name)
                .filter(|v| !v.is_empty())
                .cloned()
                .unwrap_or_else(|| UNKNOWN.to_string()),
        }
    }
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StratumKey::Split => f.write_str("split"),
            StratumKey::Institution => f.write_str("institution"),
            StratumKey::Scanner => f.write_str("scanner"),
            StratumKey::AopStratum => f.write_str("aop_stratum"),
            StratumKey::Tag(name) => write!(f, "tag:{name}"),
        }
    }
}

impl FromStr for StratumKey {
    type Err = String;

    /// Built-in keys by name; `tag:NAME` or any other name selects a tag.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Ok(match s {
            "" => return Err("empty stratification key".into()),
            "split" => StratumKey::Split,
            "institution" => StratumKey::Institution,
            "scanner" => StratumKey::Scanner,
            "aop_stratum" | "aop" => StratumKey::AopStratum,
            other => StratumKey::Tag(other.strip_prefix("tag:").unwrap_or(other).to_string()),
        })
    }
}

/// Anything carrying case metadata.
pub trait HasMeta {
    fn meta(&self) -> &CaseMeta;
}

impl HasMeta for CaseMeta {
    fn meta(&self) -> &CaseMeta {
        self
    }
}

impl HasMeta for ManifestEntry {
    fn meta(&self) -> &CaseMeta {
        &self.meta
    }
}

impl HasMeta for MetricRecord {
    fn meta(&self) -> &CaseMeta {
        &self.meta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stratum<'a, R> {
    pub key: StratumKey,
    pub label: String,
    pub items: Vec<&'a R>,
}

impl<R> Stratum<'_, R> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Partitions `items` by `key`, strata ordered by label. Items keep their
/// input order within a stratum.
pub fn stratify<'a, R: HasMeta>(items: &'a [R], key: &StratumKey) -> Vec<Stratum<'a, R>> {
    let mut groups: BTreeMap<String, Vec<&'a R>> = BTreeMap::new();
    for item in items {
        groups.entry(key.label_of(item.meta())).or_default().push(item);
    }
    groups
        .into_iter()
        .map(|(label, items)| Stratum {
            key: key.clone(),
            label,
            items,
        })
        .collect()
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CohortError {
    #[error("need at least two nonempty groups, got {0}")]
    TooFewGroups(usize),
    #[error("group `{group}`: {source}")]
    Summary {
        group: String,
        #[source]
        source: BoxStatsError,
    },
    #[error(transparent)]
    Test(#[from] MannWhitneyError),
    #[error("attribute table: {0}")]
    Attribute(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub label: String,
    pub teams: Vec<String>,
    pub stats: BoxStats<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub test: MannWhitney,
    /// Two-sided p after Holm adjustment across all group pairs.
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    pub task: Task,
    pub groups: Vec<GroupSummary>,
    pub pairs: Vec<PairComparison>,
}

/// Pools per-case values of `task` by team group (`grouping`: team → label)
/// and compares every pair of groups. Teams without a group are skipped.
pub fn compare_groups(
    records: &[MetricRecord],
    grouping: &BTreeMap<String, String>,
    task: Task,
) -> Result<GroupComparison, CohortError> {
    let mut pooled: BTreeMap<&str, (Vec<MetricValue>, Vec<String>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.structure == task.structure) {
        match grouping.get(&r.team) {
            Some(label) => {
                let entry = pooled.entry(label.as_str()).or_default();
                entry.0.push(r.value(task.metric));
                if !entry.1.contains(&r.team) {
                    entry.1.push(r.team.clone());
                }
            }
            None => log::debug!("team `{}` has no group; skipped", r.team),
        }
    }
    if pooled.len() < 2 {
        return Err(CohortError::TooFewGroups(pooled.len()));
    }
    let groups = pooled
        .iter()
        .map(|(&label, (values, teams))| {
            let mut teams = teams.clone();
            teams.sort();
            Ok(GroupSummary {
                label: label.to_string(),
                teams,
                stats: box_stats_metric(values).map_err(|source| CohortError::Summary {
                    group: label.to_string(),
                    source,
                })?,
            })
        })
        .collect::<Result<Vec<_>, CohortError>>()?;
    let samples: Vec<(&str, Vec<f64>)> = pooled
        .iter()
        .map(|(&label, (values, _))| (label, values.iter().map(|v| v.to_f64()).collect()))
        .collect();
    let mut pairs = Vec::new();
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let test = mann_whitney_u(&samples[i].1, &samples[j].1)?;
            pairs.push(PairComparison {
                a: samples[i].0.to_string(),
                b: samples[j].0.to_string(),
                test,
                p_adjusted: test.p_two_sided,
            });
        }
    }
    let raw: Vec<f64> = pairs.iter().map(|p| p.test.p_two_sided).collect();
    for (pair, adj) in pairs.iter_mut().zip(holm_adjust(&raw)) {
        pair.p_adjusted = adj;
    }
    Ok(GroupComparison { task, groups, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AopStratum, Institution, Scanner, Split};
    use crate::mask::Structure;
    use crate::metrics::MetricKind;
    use proptest::prelude::*;

    fn meta(i: usize) -> CaseMeta {
        let mut m = CaseMeta::new(
            format!("c{i:03}"),
            if i % 3 == 0 { Split::Test1 } else { Split::Test2 },
            if i % 2 == 0 { Institution::Smu } else { Institution::Jnu },
            Scanner::ObEye,
        );
        if i % 5 != 0 {
            m.aop_stratum = Some(AopStratum::from_aop(100.0 + 3.0 * i as f64));
        }
        if i % 4 == 0 {
            m.tags.insert("operator".into(), "A".into());
        }
        m
    }

    fn record(team: &str, case: usize, dsc: f64) -> MetricRecord {
        MetricRecord {
            meta: meta(case),
            team: team.into(),
            structure: Structure::Ps,
            dsc,
            hd: MetricValue::Finite(1.0),
            asd: MetricValue::Finite(1.0),
        }
    }

    #[test]
    fn single_scanner_gives_one_stratum() {
        let metas: Vec<CaseMeta> = (0..10).map(meta).collect();
        let s = stratify(&metas, &StratumKey::Scanner);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].label, "ObEye");
        assert_eq!(s[0].len(), 10);
    }

    #[test]
    fn unknown_values_get_their_own_stratum() {
        let metas: Vec<CaseMeta> = (0..10).map(meta).collect();
        let s = stratify(&metas, &StratumKey::AopStratum);
        let labels: Vec<&str> = s.iter().map(|x| x.label.as_str()).collect();
        assert_eq!(labels, vec!["AtLeast120", "Below120", "unknown"]);
        assert_eq!(s[2].len(), 2);
        let s = stratify(&metas, &"tag:operator".parse().unwrap());
        assert_eq!(s.iter().map(|x| (x.label.as_str(), x.len())).collect::<Vec<_>>(), vec![("A", 3), ("unknown", 7)]);
    }

    #[test]
    fn key_names_parse() {
        assert_eq!("aop_stratum".parse::<StratumKey>().unwrap(), StratumKey::AopStratum);
        assert_eq!("site".parse::<StratumKey>().unwrap(), StratumKey::Tag("site".into()));
        assert_eq!(StratumKey::Tag("site".into()).to_string(), "tag:site");
        assert!("".parse::<StratumKey>().is_err());
    }

    #[test]
    fn shifted_groups_differ() {
        let mut recs = Vec::new();
        for c in 0..12 {
            recs.push(record("cnn1", c, 0.80 + 0.001 * c as f64));
            recs.push(record("cnn2", c, 0.81 + 0.001 * c as f64));
            recs.push(record("vit", c, 0.90 + 0.0013 * c as f64));
        }
        let grouping: BTreeMap<String, String> = [("cnn1", "CNN"), ("cnn2", "CNN"), ("vit", "Transformer")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let cmp = compare_groups(&recs, &grouping, Task::new(MetricKind::Dsc, Structure::Ps)).unwrap();
        assert_eq!(cmp.groups.len(), 2);
        assert_eq!(cmp.groups[0].teams, vec!["cnn1", "cnn2"]);
        assert_eq!(cmp.groups[0].stats.n, 24);
        assert!(!cmp.pairs[0].test.exact);
        assert!(cmp.pairs[0].p_adjusted < 0.05);
        assert_eq!(cmp.pairs[0].test.u, 0.0);
    }

    #[test]
    fn identical_groups_and_single_record() {
        let recs = vec![record("x", 0, 0.5), record("y", 0, 0.5)];
        let grouping: BTreeMap<String, String> =
            [("x", "g1"), ("y", "g2")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let cmp = compare_groups(&recs, &grouping, Task::new(MetricKind::Dsc, Structure::Ps)).unwrap();
        assert_eq!(cmp.groups[0].stats, cmp.groups[1].stats);
        assert_eq!(cmp.groups[0].stats.min, cmp.groups[0].stats.max);
        assert_eq!(cmp.pairs[0].p_adjusted, 1.0);

        let one: BTreeMap<String, String> = [("x".to_string(), "g1".to_string())].into_iter().collect();
        assert_eq!(
            compare_groups(&recs, &one, Task::new(MetricKind::Dsc, Structure::Ps)),
            Err(CohortError::TooFewGroups(1))
        );
    }

    proptest! {
        #[test]
        fn stratification_conserves_counts(n in 0usize..80, key in 0usize..5) {
            let metas: Vec<CaseMeta> = (0..n).map(meta).collect();
            let key = [StratumKey::Split, StratumKey::Institution, StratumKey::Scanner, StratumKey::AopStratum, StratumKey::Tag("operator".into())][key].clone();
            let strata = stratify(&metas, &key);
            prop_assert_eq!(strata.iter().map(|s| s.len()).sum::<usize>(), n);
            for s in &strata {
                prop_assert!(s.items.iter().all(|m| key.label_of(m) == s.label));
            }
        }
    }
}
