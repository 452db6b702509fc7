//! SVG figures. Every figure comes with a JSON sidecar holding each number
//! drawn or printed in it; coordinates are written with two decimals so the
//! output is byte-stable.

use std::fmt::Write as _;

use serde_json::{json, Value};

use super::tables::{box_json, round_numbers, DECIMALS, TAU_DECIMALS};
use super::{box_stats_metric, round_to, BoxStats};
use crate::biometry::BiometryRow;
use crate::metrics::MetricValue;
use crate::ranking::{SignificanceMap, StabilityReport, TaskStability};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";

/// A rendered figure and the data behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub svg: String,
    pub data: Value,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn c(x: f64) -> String {
    format!("{x:.2}")
}

struct Canvas {
    body: String,
    width: f64,
    height: f64,
}

impl Canvas {
    fn new(width: f64, height: f64) -> Self {
        Self {
            body: String::new(),
            width,
            height,
        }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\"/>",
            c(x1),
            c(y1),
            c(x2),
            c(y2)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\" stroke=\"{stroke}\"/>",
            c(x),
            c(y),
            c(w),
            c(h)
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str, opacity: f64) {
        let _ = writeln!(
            self.body,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\" fill-opacity=\"{}\"/>",
            c(x),
            c(y),
            c(r),
            c(opacity)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\" {FONT}>{}</text>",
            c(x),
            c(y),
            esc(s)
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = c(self.width),
            h = c(self.height),
        )
    }
}

/// Linear map from a data range onto a pixel range (`lo` → `top + span`).
struct Scale {
    lo: f64,
    hi: f64,
    top: f64,
    span: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, top: f64, span: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Self { lo, hi, top, span }
    }

    fn y(&self, v: f64) -> f64 {
        self.top + self.span * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }

    /// Five evenly spaced tick values and their printed labels.
    fn ticks(&self) -> Vec<(f64, String)> {
        (0..5)
            .map(|i| {
                let v = self.lo + (self.hi - self.lo) * i as f64 / 4.0;
                (v, format!("{v:.3}"))
            })
            .collect()
    }
}

const LEFT: f64 = 64.0;
const TOP: f64 = 36.0;
const PLOT_H: f64 = 240.0;
const SLOT: f64 = 64.0;

fn y_axis(cv: &mut Canvas, scale: &Scale, right: f64) -> Vec<String> {
    let mut labels = Vec::new();
    cv.line(LEFT, TOP, LEFT, TOP + PLOT_H, "#000");
    for (v, label) in scale.ticks() {
        let y = scale.y(v);
        cv.line(LEFT - 4.0, y, LEFT, y, "#000");
        cv.line(LEFT, y, right, y, "#eee");
        cv.text(LEFT - 6.0, y + 4.0, "end", &label);
        labels.push(label);
    }
    labels
}

fn draw_box(cv: &mut Canvas, s: &BoxStats<f64>, x: f64, scale: &Scale, color: &str) {
    let half = SLOT * 0.3;
    cv.line(x, scale.y(s.whisker_low), x, scale.y(s.q1), "#000");
    cv.line(x, scale.y(s.q3), x, scale.y(s.whisker_high), "#000");
    cv.line(x - half / 2.0, scale.y(s.whisker_low), x + half / 2.0, scale.y(s.whisker_low), "#000");
    cv.line(x - half / 2.0, scale.y(s.whisker_high), x + half / 2.0, scale.y(s.whisker_high), "#000");
    let (top, bottom) = (scale.y(s.q3), scale.y(s.q1));
    cv.rect(x - half, top, 2.0 * half, bottom - top, color, "#000");
    cv.line(x - half, scale.y(s.median), x + half, scale.y(s.median), "#000");
    for &o in &s.outliers {
        cv.circle(x, scale.y(o), 2.5, "#000", 1.0);
    }
}

/// One box per group. Unbounded values are not drawn; their count is
/// printed above the group.
pub fn box_panel(title: &str, axis: &str, labels: &[String], groups: &[Vec<MetricValue>]) -> Figure {
    let stats: Vec<Option<BoxStats<f64>>> = groups.iter().map(|g| box_stats_metric(g).ok()).collect();
    let finite = stats.iter().flatten().flat_map(|s| [s.min, s.max]);
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let scale = Scale::new(lo, hi, TOP, PLOT_H);
    let width = LEFT + SLOT * labels.len().max(1) as f64 + 20.0;
    let mut cv = Canvas::new(width, TOP + PLOT_H + 56.0);
    cv.text(width / 2.0, 20.0, "middle", title);
    let ticks = y_axis(&mut cv, &scale, width - 20.0);
    cv.text(14.0, TOP - 10.0, "start", axis);
    for (i, (label, s)) in labels.iter().zip(&stats).enumerate() {
        let x = LEFT + SLOT * (i as f64 + 0.5);
        if let Some(s) = s {
            draw_box(&mut cv, s, x, &scale, PALETTE[i % PALETTE.len()]);
        }
        let unbounded = groups[i].iter().filter(|v| v.is_unbounded()).count();
        if unbounded > 0 {
            cv.text(x, TOP - 4.0, "middle", &format!("+{unbounded} inf"));
        }
        cv.text(x, TOP + PLOT_H + 18.0, "middle", label);
    }
    let data = json!({
        "title": title,
        "axis": axis,
        "ticks": ticks,
        "groups": labels.iter().zip(groups).map(|(l, g)| json!({ "label": l, "stats": box_json(g) })).collect::<Vec<_>>(),
    });
    Figure { svg: cv.finish(), data }
}

/// Blob plot of bootstrap rank frequencies: teams left to right by full-data
/// rank, blob area proportional to frequency, median rank as a black dot and
/// the 2.5–97.5 percentile interval as a vertical bar.
pub fn blob_plot(ts: &TaskStability, samples: usize) -> Figure {
    let k = ts.teams.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| ts.teams[a].full_rank.total_cmp(&ts.teams[b].full_rank).then(a.cmp(&b)));
    let scale = Scale::new(0.5, k as f64 + 0.5, TOP, PLOT_H);
    // Rank 1 at the top: map rank r to the value k + 1 − r on an ascending axis.
    let y = |r: f64| scale.y(k as f64 + 1.0 - r);
    let width = LEFT + SLOT * k.max(1) as f64 + 20.0;
    let mut cv = Canvas::new(width, TOP + PLOT_H + 56.0);
    cv.text(width / 2.0, 20.0, "middle", &ts.task.id());
    cv.line(LEFT, TOP, LEFT, TOP + PLOT_H, "#000");
    let ticks: Vec<usize> = (1..=k).collect();
    for &r in &ticks {
        cv.line(LEFT - 4.0, y(r as f64), width - 20.0, y(r as f64), "#eee");
        cv.text(LEFT - 6.0, y(r as f64) + 4.0, "end", &r.to_string());
    }
    let max_r = (PLOT_H / k.max(2) as f64 / 2.0).min(SLOT * 0.45);
    for (slot, &team) in order.iter().enumerate() {
        let t = &ts.teams[team];
        let x = LEFT + SLOT * (slot as f64 + 0.5);
        for f in &t.frequencies {
            let share = f.count as f64 / samples.max(1) as f64;
            cv.circle(x, y(f.rank), max_r * share.sqrt(), PALETTE[team % PALETTE.len()], 0.7);
        }
        cv.line(x, y(t.interval[0]), x, y(t.interval[1]), "#000");
        cv.circle(x, y(t.median_rank), 2.5, "#000", 1.0);
        cv.text(x, TOP + PLOT_H + 18.0, "middle", &t.team);
    }
    let mut data = json!({
        "task": ts.task,
        "samples": samples,
        "rank_ticks": ticks,
        "teams": order.iter().map(|&i| {
            let t = &ts.teams[i];
            json!({
                "team": t.team,
                "full_rank": t.full_rank,
                "frequencies": t.frequencies,
                "median_rank": t.median_rank,
                "interval": t.interval,
            })
        }).collect::<Vec<_>>(),
    });
    round_numbers(&mut data, DECIMALS);
    Figure { svg: cv.finish(), data }
}

/// Significance incidence matrix with rows and columns in `order`. A filled
/// cell (i, j) means the row team is significantly better than the column team.
pub fn significance_heatmap(map: &SignificanceMap, teams: &[String], order: &[usize]) -> Figure {
    let k = order.len();
    let cell = 28.0;
    let left = 110.0;
    let top = 100.0;
    let mut cv = Canvas::new(left + cell * k as f64 + 20.0, top + cell * k as f64 + 20.0);
    cv.text(left, 20.0, "start", &map.task.id());
    for (a, &i) in order.iter().enumerate() {
        cv.text(left - 6.0, top + cell * (a as f64 + 0.5) + 4.0, "end", &teams[i]);
        let (x, y) = (left + cell * (a as f64 + 0.5), top - 6.0);
        let _ = writeln!(
            cv.body,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"start\" transform=\"rotate(-60 {} {})\" {FONT}>{}</text>",
            c(x),
            c(y),
            c(x),
            c(y),
            esc(&teams[i])
        );
        for (b, &j) in order.iter().enumerate() {
            let fill = if i == j {
                "#ffffff"
            } else if map.significant[i][j] {
                "#2b6cb0"
            } else {
                "#e2e8f0"
            };
            cv.rect(left + cell * b as f64, top + cell * a as f64, cell, cell, fill, "#ffffff");
        }
    }
    let mut data = json!({
        "task": map.task,
        "alpha": map.alpha,
        "teams": order.iter().map(|&i| teams[i].as_str()).collect::<Vec<_>>(),
        "significant": order.iter().map(|&i| order.iter().map(|&j| map.significant[i][j]).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "p_adjusted": order.iter().map(|&i| order.iter().map(|&j| map.p_adjusted[i][j]).collect::<Vec<_>>()).collect::<Vec<_>>(),
    });
    round_numbers(&mut data, DECIMALS);
    Figure { svg: cv.finish(), data }
}

/// Number of histogram bins on [−1, 1] for τ.
pub const TAU_BINS: usize = 20;

/// Counts of τ values per bin; τ = 1 falls in the last bin.
pub fn tau_histogram(tau: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; TAU_BINS];
    for &t in tau {
        let i = (((t + 1.0) / 2.0) * TAU_BINS as f64).floor();
        counts[(i.max(0.0) as usize).min(TAU_BINS - 1)] += 1;
    }
    counts
}

/// One histogram strip per task of the bootstrap τ distribution, with the
/// median marked.
pub fn tau_strips(report: &StabilityReport) -> Figure {
    let (row_h, left, strip_w) = (44.0, 110.0, 400.0);
    let top = 40.0;
    let n = report.tasks.len();
    let mut cv = Canvas::new(left + strip_w + 110.0, top + row_h * n as f64 + 30.0);
    cv.text(left, 20.0, "start", &format!("Kendall tau, {} bootstrap samples", report.samples));
    let x = |t: f64| left + strip_w * (t + 1.0) / 2.0;
    let mut rows = Vec::new();
    for (r, ts) in report.tasks.iter().enumerate() {
        let base = top + row_h * (r as f64 + 1.0) - 6.0;
        let counts = tau_histogram(&ts.tau);
        let peak = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        cv.text(left - 8.0, base - 8.0, "end", &ts.task.id());
        cv.line(left, base, left + strip_w, base, "#000");
        let bw = strip_w / TAU_BINS as f64;
        for (b, &cnt) in counts.iter().enumerate() {
            if cnt > 0 {
                let h = ((row_h - 12.0) * cnt as f64 / peak).max(1.0);
                cv.rect(left + bw * b as f64 + 0.5, base - h, bw - 1.0, h, "#4a5568", "none");
            }
        }
        let median = round_to(ts.median_tau, TAU_DECIMALS);
        cv.line(x(median), base - row_h + 10.0, x(median), base + 2.0, "#d62728");
        cv.text(left + strip_w + 8.0, base - 8.0, "start", &format!("median {median:.4}"));
        rows.push(json!({ "task": ts.task, "counts": counts, "median_tau": median }));
    }
    for t in [-1.0, 0.0, 1.0] {
        cv.text(x(t), top + row_h * n as f64 + 16.0, "middle", &format!("{t:.1}"));
    }
    let edges: Vec<f64> = (0..=TAU_BINS).map(|i| round_to(-1.0 + 2.0 * i as f64 / TAU_BINS as f64, 6)).collect();
    let data = json!({
        "samples": report.samples,
        "bin_edges": edges,
        "axis_labels": ["-1.0", "0.0", "1.0"],
        "tasks": rows,
    });
    Figure { svg: cv.finish(), data }
}

/// ΔAoP distribution per team. Rows without a defined ΔAoP are counted in
/// the sidecar only.
pub fn delta_aop_panel(rows: &[BiometryRow]) -> Figure {
    let mut teams: Vec<String> = rows.iter().map(|r| r.team.clone()).collect();
    teams.sort();
    teams.dedup();
    let groups: Vec<Vec<MetricValue>> = teams
        .iter()
        .map(|t| {
            rows.iter()
                .filter(|r| &r.team == t)
                .filter_map(|r| r.delta_aop.map(MetricValue::Finite))
                .collect()
        })
        .collect();
    let mut fig = box_panel("Delta AoP (degrees)", "deg", &teams, &groups);
    let undefined: Vec<Value> = teams
        .iter()
        .map(|t| json!({ "team": t, "undefined": rows.iter().filter(|r| &r.team == t && r.delta_aop.is_none()).count() }))
        .collect();
    fig.data
        .as_object_mut()
        .expect("object")
        .insert("undefined".into(), json!(undefined));
    fig
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Structure;
    use crate::metrics::MetricKind;
    use crate::ranking::{RankCount, Task, TeamStability};

    fn numbers_in(svg: &str) -> Vec<String> {
        let mut out = Vec::new();
        for text in svg.split("<text").skip(1) {
            let inner = &text[text.find('>').unwrap() + 1..text.find("</text>").unwrap()];
            let mut cur = String::new();
            for ch in inner.chars().chain(std::iter::once(' ')) {
                if ch.is_ascii_digit() || ch == '.' || (ch == '-' && cur.is_empty()) {
                    cur.push(ch);
                } else if !cur.is_empty() {
                    if cur.chars().any(|c| c.is_ascii_digit()) {
                        out.push(cur.clone());
                    }
                    cur.clear();
                }
            }
        }
        out
    }

    /// Every number printed in the figure appears in its sidecar.
    fn printed_numbers_are_in_sidecar(fig: &Figure) {
        let data = fig.data.to_string();
        for n in numbers_in(&fig.svg) {
            let trimmed = n.trim_end_matches('0').trim_end_matches('.');
            assert!(
                data.contains(&n) || data.contains(trimmed),
                "{n} missing from sidecar {data}"
            );
        }
    }

    #[test]
    fn box_panel_reports_unbounded_and_ticks() {
        let groups = vec![
            vec![MetricValue::Finite(1.0), MetricValue::Finite(2.0), MetricValue::Unbounded],
            vec![MetricValue::Unbounded],
        ];
        let fig = box_panel("HD_PS", "px", &["a".into(), "b".into()], &groups);
        assert!(fig.svg.contains("+1 inf") && fig.svg.contains("+1 inf"));
        assert_eq!(fig.data["groups"][1]["stats"], json!({ "n": 0, "unbounded": 1 }));
        assert_eq!(fig.data["ticks"][0], json!("1.000"));
        printed_numbers_are_in_sidecar(&fig);
    }

    #[test]
    fn single_team_blob_is_point_mass() {
        let ts = TaskStability {
            task: Task::new(MetricKind::Dsc, Structure::Fh),
            teams: vec![TeamStability {
                team: "solo".into(),
                full_rank: 1.0,
                frequencies: vec![RankCount { rank: 1.0, count: 10 }],
                median_rank: 1.0,
                interval: [1.0, 1.0],
            }],
            tau: vec![1.0; 10],
            median_tau: 1.0,
        };
        let fig = blob_plot(&ts, 10);
        assert_eq!(fig.svg.matches("<circle").count(), 2);
        printed_numbers_are_in_sidecar(&fig);
        let report = StabilityReport {
            scheme: crate::ranking::Scheme::RankThenMean,
            samples: 10,
            tasks: vec![ts],
        };
        let strip = tau_strips(&report);
        assert_eq!(strip.data["tasks"][0]["counts"][TAU_BINS - 1], json!(10));
        printed_numbers_are_in_sidecar(&strip);
    }

    #[test]
    fn blob_ranks_stay_inside_the_plot_in_order() {
        let team = |name: &str, r: f64| TeamStability {
            team: name.into(),
            full_rank: r,
            frequencies: vec![RankCount { rank: r, count: 5 }],
            median_rank: r,
            interval: [r, r],
        };
        let ts = TaskStability {
            task: Task::new(MetricKind::Hd, Structure::Ps),
            teams: vec![team("a", 1.0), team("b", 2.0), team("c", 3.0), team("d", 4.0)],
            tau: vec![1.0; 5],
            median_tau: 1.0,
        };
        let fig = blob_plot(&ts, 5);
        let cys: Vec<f64> = fig
            .svg
            .split("<circle")
            .skip(1)
            .step_by(2)
            .map(|s| {
                let v = &s[s.find("cy=\"").unwrap() + 4..];
                v[..v.find('"').unwrap()].parse().unwrap()
            })
            .collect();
        assert_eq!(cys.len(), 4);
        assert!(cys.iter().all(|&y| (TOP..=TOP + PLOT_H).contains(&y)), "{cys:?}");
        assert!(cys.windows(2).all(|w| w[0] < w[1]), "rank 1 is drawn on top: {cys:?}");
    }

    #[test]
    fn tau_bins() {
        let c = tau_histogram(&[-1.0, -0.85, 0.0, 0.99, 1.0]);
        assert_eq!((c[0], c[1], c[10], c[19]), (1, 1, 1, 2));
        assert_eq!(c.iter().sum::<u64>(), 5);
    }

    #[test]
    fn escapes_markup() {
        let fig = box_panel("a<b", "x", &["R&D".into()], &[vec![MetricValue::Finite(1.0)]]);
        assert!(fig.svg.contains("a&lt;b") && fig.svg.contains("R&amp;D"));
    }
}
