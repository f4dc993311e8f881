//! Performance profiles and per-subset summaries of benchmark records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::records::{Method, RunRecord, RunStatus};
use crate::error::{Error, Result};
use crate::numfmt::format_g;

/// Fraction of instances solved within ratio `τ` of the fastest method.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileCurve {
    pub method: Method,
    /// Breakpoints `(τ, fraction)`, `τ` increasing.
    pub points: Vec<(f64, f64)>,
}

impl ProfileCurve {
    /// Step-function value at `tau`.
    pub fn fraction_at(&self, tau: f64) -> f64 {
        self.points.iter().take_while(|(t, _)| *t <= tau).last().map_or(0.0, |&(_, f)| f)
    }
}

/// Time ratios `t_{i,s} / min_{s'} t_{i,s'}`; unsolved runs count as `+∞`.
pub fn performance_profiles(records: &[RunRecord]) -> Result<Vec<ProfileCurve>> {
    let mut times: BTreeMap<Method, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in records {
        let t = if r.status == RunStatus::Solved { r.wall_time_s.max(0.0) } else { f64::INFINITY };
        if times.entry(r.method).or_default().insert(&r.instance_id, t).is_some() {
            return Err(Error::Validation(format!("{} appears twice for {}", r.instance_id, r.method)));
        }
    }
    if times.is_empty() {
        return Err(Error::Validation("no records to profile".into()));
    }
    let instances: BTreeSet<&str> = times.values().next().unwrap().keys().copied().collect();
    for (method, per) in &times {
        if per.keys().copied().collect::<BTreeSet<_>>() != instances {
            return Err(Error::Validation(format!("method {method} was not run on the same instances")));
        }
    }
    let best: BTreeMap<&str, f64> = instances
        .iter()
        .map(|&i| (i, times.values().map(|per| per[i]).fold(f64::INFINITY, f64::min)))
        .collect();
    let total = instances.len() as f64;
    Ok(times
        .iter()
        .map(|(&method, per)| {
            let mut ratios: Vec<f64> = per
                .iter()
                .map(|(i, &t)| match (t, best[i]) {
                    (t, _) if t.is_infinite() => f64::INFINITY,
                    (t, b) if t == b => 1.0,
                    (t, b) => t / b,
                })
                .filter(|r| r.is_finite())
                .collect();
            ratios.sort_by(f64::total_cmp);
            let mut points: Vec<(f64, f64)> = Vec::new();
            for (k, &r) in ratios.iter().enumerate() {
                let frac = (k + 1) as f64 / total;
                match points.last_mut() {
                    Some(last) if last.0 == r => last.1 = frac,
                    _ => points.push((r, frac)),
                }
            }
            ProfileCurve { method, points }
        })
        .collect())
}

pub fn profiles_csv(curves: &[ProfileCurve]) -> String {
    let mut out = String::from("method,tau,log10_tau,fraction\n");
    for c in curves {
        for &(t, f) in &c.points {
            let _ = writeln!(out, "{},{},{},{}", c.method, format_g(t, 9), format_g(t.log10(), 9), format_g(f, 9));
        }
    }
    out
}

/// Step plot of the curves with a base-10 logarithmic `τ` axis.
pub fn profiles_svg(curves: &[ProfileCurve]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];
    let max_log = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|(t, _)| t.log10()))
        .fold(0.0f64, f64::max)
        .max(0.1)
        * 1.05;
    let x = |log_tau: f64| PAD + (W - 2.0 * PAD) * log_tau / max_log;
    let y = |frac: f64| H - PAD - (H - 2.0 * PAD) * frac;

    let mut svg = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n");
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<polyline fill=\"none\" stroke=\"black\" points=\"{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}\"/>",
        x(0.0),
        y(1.0),
        x(0.0),
        y(0.0),
        x(max_log),
        y(0.0)
    );
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">log10(tau)</text>", W / 2.0, H - 10.0);
    let _ = writeln!(svg, "<text x=\"12\" y=\"{:.1}\" transform=\"rotate(-90 12 {:.1})\" text-anchor=\"middle\">fraction solved</text>", H / 2.0, H / 2.0);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{f}</text>", PAD - 6.0, y(f) + 4.0);
    }
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">0</text>", x(0.0), y(0.0) + 16.0);
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>", x(max_log), y(0.0) + 16.0, format_g(max_log, 3));
    for (k, c) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut pts = vec![(x(0.0), y(0.0))];
        let mut prev = 0.0;
        for &(t, f) in &c.points {
            pts.push((x(t.log10()), y(prev)));
            pts.push((x(t.log10()), y(f)));
            prev = f;
        }
        pts.push((x(max_log), y(prev)));
        let list: Vec<String> = pts.iter().map(|(a, b)| format!("{a:.1},{b:.1}")).collect();
        let _ = writeln!(svg, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>", list.join(" "));
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\" font-size=\"12\">{}</text>", W - PAD - 60.0, PAD + 16.0 * k as f64, c.method);
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsRow {
    /// Cost family and size class, e.g. `log234` or `nonconvex567`.
    pub subset: String,
    pub method: Method,
    pub runs: usize,
    pub solved_percent: f64,
    /// Geometric mean wall time over solved runs; `NaN` when none solved.
    pub geometric_mean_time: f64,
    /// Mean stage-1 iteration count over solved runs.
    pub mean_iterations: f64,
}

pub fn subset_label(record: &RunRecord) -> String {
    let size = if record.m <= 4 { "234" } else { "567" };
    format!("{}{size}", record.cost_kind.family())
}

/// `(Π t_i)^{1/n}`, accumulated as mantissa and binary exponent so long
/// products neither overflow nor lose exactness on simple inputs.
pub fn geometric_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let split = |v: f64| {
        let e = v.log2().floor();
        (v / e.exp2(), e)
    };
    let (mut mantissa, mut exponent) = (1.0f64, 0.0f64);
    for &v in values {
        if !(v > 0.0) {
            return if v == 0.0 { 0.0 } else { f64::NAN };
        }
        let (m, e) = split(v);
        let (pm, pe) = split(mantissa * m);
        mantissa = pm;
        exponent += e + pe;
    }
    let n = values.len() as f64;
    mantissa.powf(1.0 / n) * (exponent / n).exp2()
}

pub fn stats_summary(records: &[RunRecord]) -> Vec<StatsRow> {
    let mut groups: BTreeMap<(String, Method), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((subset_label(r), r.method)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((subset, method), rows)| {
            let solved: Vec<&RunRecord> = rows.iter().copied().filter(|r| r.status == RunStatus::Solved).collect();
            let times: Vec<f64> = solved.iter().map(|r| r.wall_time_s).collect();
            let mean_iterations = if solved.is_empty() {
                f64::NAN
            } else {
                solved.iter().map(|r| r.iterations_stage1 as f64).sum::<f64>() / solved.len() as f64
            };
            StatsRow {
                subset,
                method,
                runs: rows.len(),
                solved_percent: 100.0 * solved.len() as f64 / rows.len() as f64,
                geometric_mean_time: geometric_mean(&times),
                mean_iterations,
            }
        })
        .collect()
}

pub fn stats_csv(rows: &[StatsRow]) -> String {
    let mut out = String::from("subset,method,runs,solved_percent,geometric_mean_time_s,mean_iterations\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.subset,
            r.method,
            r.runs,
            format_g(r.solved_percent, 9),
            format_g(r.geometric_mean_time, 9),
            format_g(r.mean_iterations, 9)
        );
    }
    out
}
