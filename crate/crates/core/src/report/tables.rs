//! Machine-readable result tables as JSON values.

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::{box_stats_metric, round_to, BoxStatsError};
use crate::cohorts::{compare_groups, mann_whitney_u, stratify, AttributeTable, CohortError, StratumKey};
use crate::metrics::{MetricRecord, MetricValue};
use crate::ranking::{
    holm_adjust, overall_rank, run_scheme, significance_map, MetricTable, RankingError, Scheme, SchemeResult,
    SignificanceOptions, StabilityReport, Task,
};

/// Decimal places for floating-point values in every table.
pub const DECIMALS: i32 = 6;
/// Decimal places for Kendall τ values.
pub const TAU_DECIMALS: i32 = 4;

/// Rounds every floating-point number in `v` to `decimals` places.
/// Integers are left untouched.
pub fn round_numbers(v: &mut Value, decimals: i32) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            *v = json!(round_to(x, decimals));
        }
        Value::Array(items) => items.iter_mut().for_each(|x| round_numbers(x, decimals)),
        Value::Object(map) => map.values_mut().for_each(|x| round_numbers(x, decimals)),
        _ => {}
    }
}

/// Serializes and rounds.
pub fn to_value(x: &impl Serialize) -> Value {
    let mut v = serde_json::to_value(x).expect("result types serialize");
    round_numbers(&mut v, DECIMALS);
    v
}

fn ranked_entries(teams: &[String], r: &SchemeResult) -> Value {
    let order = r.ranking.order();
    let entries: Vec<Value> = order
        .iter()
        .map(|&i| json!({ "team": teams[i], "rank": r.ranking.ranks[i], "aggregate": r.aggregates[i] }))
        .collect();
    json!({
        "scheme": r.scheme,
        "order": order.iter().map(|&i| teams[i].as_str()).collect::<Vec<_>>(),
        "entries": entries,
    })
}

/// Per-task leaderboards under `scheme` plus the overall ranking.
pub fn leaderboard_json(t: &MetricTable, scheme: Scheme, sig: &SignificanceOptions) -> Result<Value, RankingError> {
    let mut tasks = Vec::new();
    for &task in t.tasks() {
        let r = run_scheme(t, task, scheme, sig)?;
        let mut v = ranked_entries(t.teams(), &r);
        let obj = v.as_object_mut().expect("object");
        obj.insert("task".into(), json!(task));
        obj.insert("direction".into(), json!(task.direction()));
        tasks.push(v);
    }
    let overall = overall_rank(t, t.tasks())?;
    let mut v = json!({
        "scheme": scheme,
        "teams": t.teams(),
        "cases": t.n_cases(),
        "tasks": tasks,
        "overall": ranked_entries(t.teams(), &overall),
    });
    round_numbers(&mut v, DECIMALS);
    Ok(v)
}

/// Significance maps of every task; empty with fewer than two teams.
pub fn significance_json(t: &MetricTable, sig: &SignificanceOptions) -> Result<Value, RankingError> {
    let mut maps = Vec::new();
    if t.n_teams() >= 2 {
        for &task in t.tasks() {
            let m = significance_map(t, task, sig)?;
            maps.push(json!({
                "task": task,
                "alpha": m.alpha,
                "holm": sig.holm,
                "significant": m.significant,
                "p_adjusted": m.p_adjusted,
                "wins": m.wins(),
                "undefined": m.undefined,
            }));
        }
    }
    let mut v = json!({ "teams": t.teams(), "maps": maps });
    round_numbers(&mut v, DECIMALS);
    Ok(v)
}

/// Rank-frequency matrices, percentile intervals and τ arrays.
pub fn stability_json(report: &StabilityReport, seed: u64) -> Value {
    let tasks: Vec<Value> = report
        .tasks
        .iter()
        .map(|ts| {
            let mut levels: Vec<f64> = ts.teams.iter().flat_map(|t| t.frequencies.iter().map(|f| f.rank)).collect();
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            let matrix: Vec<Vec<u64>> = ts
                .teams
                .iter()
                .map(|t| {
                    levels
                        .iter()
                        .map(|&l| t.frequencies.iter().find(|f| f.rank == l).map_or(0, |f| f.count))
                        .collect()
                })
                .collect();
            let mut body = json!({
                "task": ts.task,
                "teams": ts.teams.iter().map(|t| t.team.as_str()).collect::<Vec<_>>(),
                "full_rank": ts.teams.iter().map(|t| t.full_rank).collect::<Vec<_>>(),
                "rank_levels": levels,
                "frequencies": matrix,
                "median_rank": ts.teams.iter().map(|t| t.median_rank).collect::<Vec<_>>(),
                "interval": ts.teams.iter().map(|t| t.interval).collect::<Vec<_>>(),
            });
            round_numbers(&mut body, DECIMALS);
            let obj = body.as_object_mut().expect("object");
            obj.insert("tau".into(), json!(ts.tau.iter().map(|&x| round_to(x, TAU_DECIMALS)).collect::<Vec<_>>()));
            obj.insert("median_tau".into(), json!(round_to(ts.median_tau, TAU_DECIMALS)));
            body
        })
        .collect();
    json!({
        "scheme": report.scheme,
        "samples": report.samples,
        "seed": seed,
        "tasks": tasks,
    })
}

/// Box statistics of possibly unbounded values. A group with only unbounded
/// values reports its count and no statistics.
pub fn box_json(values: &[MetricValue]) -> Value {
    match box_stats_metric(values) {
        Ok(s) => to_value(&s),
        Err(BoxStatsError::NoFiniteValues { unbounded }) => json!({ "n": 0, "unbounded": unbounded }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Per-stratum distributions of every task and team, with Holm-adjusted
/// two-sided Mann-Whitney tests between strata for each (task, team).
pub fn strata_json(records: &[MetricRecord], key: &StratumKey, tasks: &[Task]) -> Result<Value, CohortError> {
    let strata = stratify(records, key);
    let mut teams: Vec<&str> = records.iter().map(|r| r.team.as_str()).collect();
    teams.sort();
    teams.dedup();
    let values = |items: &[&MetricRecord], task: Task, team: &str| -> Vec<MetricValue> {
        items
            .iter()
            .filter(|r| r.team == team && r.structure == task.structure)
            .map(|r| r.value(task.metric))
            .collect()
    };
    let mut summaries = Vec::new();
    for s in &strata {
        let mut cases: Vec<&str> = s.items.iter().map(|r| r.case_id()).collect();
        cases.sort();
        cases.dedup();
        let per_task: Vec<Value> = tasks
            .iter()
            .map(|&task| {
                let mut by_team = Map::new();
                for &team in &teams {
                    by_team.insert(team.to_string(), box_json(&values(&s.items, task, team)));
                }
                json!({ "task": task, "teams": by_team })
            })
            .collect();
        summaries.push(json!({ "label": s.label, "cases": cases.len(), "records": s.len(), "tasks": per_task }));
    }
    let mut comparisons = Vec::new();
    for &task in tasks {
        for &team in &teams {
            let mut pairs = Vec::new();
            for i in 0..strata.len() {
                for j in (i + 1)..strata.len() {
                    let a: Vec<f64> = values(&strata[i].items, task, team).iter().map(|v| v.to_f64()).collect();
                    let b: Vec<f64> = values(&strata[j].items, task, team).iter().map(|v| v.to_f64()).collect();
                    if a.is_empty() || b.is_empty() {
                        continue;
                    }
                    pairs.push((strata[i].label.as_str(), strata[j].label.as_str(), mann_whitney_u(&a, &b)?));
                }
            }
            let raw: Vec<f64> = pairs.iter().map(|p| p.2.p_two_sided).collect();
            for ((a, b, test), adj) in pairs.iter().zip(holm_adjust(&raw)) {
                comparisons.push(json!({
                    "task": task, "team": team, "a": a, "b": b, "test": test, "p_adjusted": adj,
                }));
            }
        }
    }
    let mut v = json!({
        "key": key.to_string(),
        "strata": summaries,
        "comparisons": comparisons,
    });
    round_numbers(&mut v, DECIMALS);
    Ok(v)
}

/// Design-attribute group comparisons for every task. A task with fewer
/// than two nonempty groups carries an `undefined` reason instead.
pub fn groups_json(
    records: &[MetricRecord],
    table: &AttributeTable,
    attribute: &str,
    tasks: &[Task],
) -> Result<Value, CohortError> {
    let grouping = table
        .grouping(attribute)
        .map_err(|e| CohortError::Attribute(e.to_string()))?;
    let comparisons = tasks
        .iter()
        .map(|&task| match compare_groups(records, &grouping, task) {
            Ok(c) => Ok(to_value(&c)),
            Err(e @ CohortError::TooFewGroups(_)) => Ok(json!({ "task": task, "undefined": e.to_string() })),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json!({ "attribute": attribute, "grouping": grouping, "comparisons": comparisons }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_walks_nested_values() {
        let mut v = json!({ "a": [0.1234567891, 2], "b": { "c": -1.0000004 }, "d": "0.123456789" });
        round_numbers(&mut v, 6);
        assert_eq!(v, json!({ "a": [0.123457, 2], "b": { "c": -1.0 }, "d": "0.123456789" }));
    }

    #[test]
    fn all_unbounded_box() {
        assert_eq!(box_json(&[MetricValue::Unbounded; 2]), json!({ "n": 0, "unbounded": 2 }));
        assert_eq!(box_json(&[MetricValue::Finite(2.0)])["median"], json!(2.0));
    }
}
