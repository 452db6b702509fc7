use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::RankingError;
use crate::mask::Structure;
use crate::metrics::{MetricKind, MetricRecord, MetricValue};

/// Whether larger or smaller values are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// One (metric, structure) leaderboard task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Task {
    pub metric: MetricKind,
    pub structure: Structure,
}

impl Task {
    pub const fn new(metric: MetricKind, structure: Structure) -> Self {
        Self { metric, structure }
    }

    /// The nine tasks, metric-major.
    pub fn all() -> Vec<Task> {
        MetricKind::ALL
            .iter()
            .flat_map(|&m| Structure::ALL.iter().map(move |&s| Task::new(m, s)))
            .collect()
    }

    pub fn direction(self) -> Direction {
        match self.metric {
            MetricKind::Dsc => Direction::HigherBetter,
            MetricKind::Hd | MetricKind::Asd => Direction::LowerBetter,
        }
    }

    /// Identifier such as `DSC_PSFH`.
    pub fn id(self) -> String {
        format!("{}_{}", self.metric, self.structure)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.metric, self.structure)
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (m, st) = s.split_once('_').ok_or_else(|| format!("task `{s}` is not METRIC_STRUCTURE"))?;
        let metric = match m.to_ascii_uppercase().as_str() {
            "DSC" => MetricKind::Dsc,
            "HD" => MetricKind::Hd,
            "ASD" => MetricKind::Asd,
            other => return Err(format!("unknown metric `{other}`")),
        };
        Ok(Task::new(metric, st.parse()?))
    }
}

impl Serialize for Task {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

/// Cases × teams × tasks value cube.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    cases: Vec<String>,
    teams: Vec<String>,
    tasks: Vec<Task>,
    values: Vec<MetricValue>,
}

impl MetricTable {
    /// `values` is laid out `[case][team][task]`.
    pub fn new(
        cases: Vec<String>,
        teams: Vec<String>,
        tasks: Vec<Task>,
        values: Vec<MetricValue>,
    ) -> Result<Self, RankingError> {
        if teams.is_empty() {
            return Err(RankingError::NoTeams);
        }
        let expected = cases.len() * teams.len() * tasks.len();
        if values.len() != expected {
            return Err(RankingError::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            cases,
            teams,
            tasks,
            values,
        })
    }

    /// Builds the full nine-task cube from per-case records. Cases and teams
    /// are sorted; every (case, team, structure) must be present exactly once.
    pub fn from_records(records: &[MetricRecord]) -> Result<Self, RankingError> {
        let cases: Vec<String> = records
            .iter()
            .map(|r| r.case_id().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let teams: Vec<String> = records
            .iter()
            .map(|r| r.team.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut cells: BTreeMap<(&str, &str, Structure), &MetricRecord> = BTreeMap::new();
        for r in records {
            if cells.insert((r.case_id(), &r.team, r.structure), r).is_some() {
                return Err(RankingError::DuplicateCell {
                    case_id: r.case_id().to_string(),
                    team: r.team.clone(),
                    structure: r.structure,
                });
            }
        }
        let tasks = Task::all();
        let mut values = Vec::with_capacity(cases.len() * teams.len() * tasks.len());
        for case in &cases {
            for team in &teams {
                for task in &tasks {
                    let rec = cells.get(&(case.as_str(), team.as_str(), task.structure)).ok_or_else(|| {
                        RankingError::MissingCell {
                            case_id: case.clone(),
                            team: team.clone(),
                            structure: task.structure,
                        }
                    })?;
                    values.push(rec.value(task.metric));
                }
            }
        }
        Self::new(cases, teams, tasks, values)
    }

    pub fn cases(&self) -> &[String] {
        &self.cases
    }

    pub fn teams(&self) -> &[String] {
        &self.teams
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn n_cases(&self) -> usize {
        self.cases.len()
    }

    pub fn n_teams(&self) -> usize {
        self.teams.len()
    }

    pub fn task_index(&self, task: Task) -> Result<usize, RankingError> {
        self.tasks
            .iter()
            .position(|&t| t == task)
            .ok_or(RankingError::UnknownTask(task))
    }

    pub fn value(&self, case: usize, team: usize, task: usize) -> MetricValue {
        self.values[(case * self.teams.len() + team) * self.tasks.len() + task]
    }

    /// One team's values over all cases for a task.
    pub fn column(&self, team: usize, task: usize) -> Vec<MetricValue> {
        (0..self.cases.len()).map(|c| self.value(c, team, task)).collect()
    }

    /// All teams' values for one case and task.
    pub fn row(&self, case: usize, task: usize) -> Vec<MetricValue> {
        (0..self.teams.len()).map(|t| self.value(case, t, task)).collect()
    }

    /// Table whose case rows are `rows` of this one (repeats allowed).
    pub fn resample(&self, rows: &[usize]) -> MetricTable {
        let stride = self.teams.len() * self.tasks.len();
        let mut values = Vec::with_capacity(rows.len() * stride);
        for &r in rows {
            values.extend_from_slice(&self.values[r * stride..(r + 1) * stride]);
        }
        MetricTable {
            cases: rows.iter().map(|&r| self.cases[r].clone()).collect(),
            teams: self.teams.clone(),
            tasks: self.tasks.clone(),
            values,
        }
    }

    /// Table with each task's values passed through `f`.
    pub fn map_task(&self, task: usize, f: impl Fn(MetricValue) -> MetricValue) -> MetricTable {
        let mut out = self.clone();
        let n_tasks = self.tasks.len();
        for (i, v) in out.values.iter_mut().enumerate() {
            if i % n_tasks == task {
                *v = f(*v);
            }
        }
        out
    }
}
