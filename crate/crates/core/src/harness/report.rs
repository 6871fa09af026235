//! Offline report over a finished output directory. Every metric is
//! recomputed from the traces and checked against the run summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::bench::{mean_sd, CompareSummary, ExploreSummary, Grid, RunSummary};
use super::io::{csv, write_atomic};
use super::HarnessError;
use crate::compat::{BugKind, BugReport};
use crate::explorer::{RunMetrics, StepRecord, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// `explore` or the device pair name.
    pub source: String,
    pub strategy: Variant,
    pub budget: String,
    pub runs: usize,
    pub expected_runs: usize,
    pub steps_mean: f64,
    pub distance_mean_mm: f64,
    pub distance_sd_mm: f64,
    pub crashes: usize,
    pub compat_bugs: usize,
    pub screens_visited_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// One line per missing or failed grid cell.
    pub warnings: Vec<String>,
    pub text: String,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>, HarnessError> {
    match std::fs::read_to_string(path) {
        Ok(s) => serde_json::from_str(&s)
            .map(Some)
            .map_err(|e| HarnessError::Parse(path.to_path_buf(), e.to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(HarnessError::Io(path.to_path_buf(), e)),
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<StepRecord>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.to_path_buf(), e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| HarnessError::Parse(path.to_path_buf(), e.to_string())))
        .collect()
}

fn initial_screen(dir: &Path, app: &str, cache: &mut BTreeMap<String, String>) -> Result<String, HarnessError> {
    if let Some(s) = cache.get(app) {
        return Ok(s.clone());
    }
    let path = dir.join(format!("models/apps/{app}.json"));
    let doc: serde_json::Value = read_json(&path)?.ok_or_else(|| HarnessError::MissingRuns(path.clone()))?;
    let initial = doc["initial"]
        .as_str()
        .ok_or_else(|| HarnessError::Parse(path.clone(), "no initial screen".into()))?
        .to_string();
    cache.insert(app.to_string(), initial.clone());
    Ok(initial)
}

fn check(run: &RunSummary, m: &RunMetrics) -> Result<(), HarnessError> {
    let mismatch = |what: &str| Err(HarnessError::Inconsistent(run.trace.clone(), what.to_string()));
    if m.steps != run.steps {
        return mismatch("steps");
    }
    if (m.distance_mm - run.distance_mm).abs() > 1e-6 * run.distance_mm.abs().max(1.0) {
        return mismatch("distance");
    }
    if m.screens_visited != run.screens_visited || m.widgets_exercised != run.widgets_exercised {
        return mismatch("coverage");
    }
    if m.crashes != run.crashes || m.failed_steps != run.failed_steps {
        return mismatch("crashes");
    }
    Ok(())
}

struct Verified<'a> {
    run: &'a RunSummary,
    records: Vec<StepRecord>,
}

/// Loads and re-verifies every run of a summary; runs that errored or
/// whose trace is gone become warnings.
fn verify<'a>(
    dir: &Path,
    runs: &'a [RunSummary],
    initials: &mut BTreeMap<String, String>,
    warnings: &mut Vec<String>,
) -> Result<Vec<Verified<'a>>, HarnessError> {
    let mut out = Vec::new();
    for run in runs {
        let label = format!("{}{}-{}-{}", run.pair.as_deref().map(|p| format!("{p}/")).unwrap_or_default(), run.app, run.strategy, run.seed);
        if let Some(e) = &run.error {
            warnings.push(format!("{label}: failed: {e}"));
            continue;
        }
        let path = dir.join(&run.trace);
        if !path.exists() {
            warnings.push(format!("{label}: trace missing"));
            continue;
        }
        let records = read_trace(&path)?;
        let initial = initial_screen(dir, &run.app, initials)?;
        let m = RunMetrics::from_trace(&records, &initial, run.screens_total, run.widgets_total);
        check(run, &m)?;
        out.push(Verified { run, records });
    }
    Ok(out)
}

fn expected_cells(grid: &Grid, warnings: &mut Vec<String>, runs: &[RunSummary]) -> usize {
    let mut have: BTreeMap<(Option<String>, String, Variant, u64), ()> = BTreeMap::new();
    for r in runs {
        have.insert((r.pair.clone(), r.app.clone(), r.strategy, r.seed), ());
    }
    let pairs: Vec<Option<String>> = if grid.pairs.is_empty() {
        vec![None]
    } else {
        grid.pairs.iter().cloned().map(Some).collect()
    };
    let mut n = 0;
    for p in &pairs {
        for a in &grid.apps {
            for &v in &grid.strategies {
                for &s in &grid.seeds {
                    n += 1;
                    if !have.contains_key(&(p.clone(), a.clone(), v, s)) {
                        let prefix = p.as_deref().map(|p| format!("{p}/")).unwrap_or_default();
                        warnings.push(format!("{prefix}{a}-{v}-{s}: not run"));
                    }
                }
            }
        }
    }
    n
}

fn fmt_num(x: f64, places: usize) -> String {
    if x.is_finite() {
        format!("{x:.places$}")
    } else {
        "-".to_string()
    }
}

/// Builds the report for `dir` and writes it under `dir/report`.
pub fn cmd_report(dir: &Path) -> Result<Report, HarnessError> {
    let explore: Option<ExploreSummary> = read_json(&dir.join("explore/summary.json"))?;
    let compare: Option<CompareSummary> = read_json(&dir.join("compare/summary.json"))?;
    if explore.is_none() && compare.is_none() {
        return Err(HarnessError::MissingRuns(dir.to_path_buf()));
    }
    let mut warnings = Vec::new();
    let mut initials = BTreeMap::new();
    let mut rows = Vec::new();
    // (source, strategy) -> per-step cumulative distance of each run
    let mut curves: BTreeMap<(String, Variant), Vec<Vec<f64>>> = BTreeMap::new();

    let mut sections: Vec<(&Grid, &[RunSummary], BTreeMap<String, usize>)> = Vec::new();
    if let Some(e) = &explore {
        sections.push((&e.grid, &e.runs, BTreeMap::new()));
    }
    if let Some(c) = &compare {
        // compat counts come from the per-run report files
        let mut compat = BTreeMap::new();
        for r in c.runs.iter().filter(|r| r.error.is_none()) {
            let name = format!("{}-{}-{}-{}", r.pair.as_deref().unwrap_or(""), r.app, r.strategy, r.seed);
            let path = dir.join(format!("compare/reports/{name}.json"));
            match read_json::<Vec<BugReport>>(&path)? {
                Some(reports) => {
                    let n = reports.iter().filter(|b| b.kind == BugKind::Compatibility).count();
                    if n != r.compat_bugs {
                        return Err(HarnessError::Inconsistent(name, "compatibility bugs".into()));
                    }
                    compat.insert(r.trace.clone(), n);
                }
                None => warnings.push(format!("{name}: bug report missing")),
            }
        }
        for (name, why) in &c.failed_pairs {
            warnings.push(format!("{name}: pair not run: {why}"));
        }
        sections.push((&c.grid, &c.runs, compat));
    }

    for (grid, runs, compat) in &sections {
        let expected = expected_cells(grid, &mut warnings, runs);
        let cells_per_group = if grid.strategies.is_empty() { 0 } else { expected / grid.strategies.len() };
        let verified = verify(dir, runs, &mut initials, &mut warnings)?;
        let sources: Vec<String> = if grid.pairs.is_empty() {
            vec!["explore".to_string()]
        } else {
            grid.pairs.clone()
        };
        for source in &sources {
            for &v in &grid.strategies {
                let vs: Vec<&Verified> = verified
                    .iter()
                    .filter(|x| x.run.strategy == v && x.run.pair.as_deref().unwrap_or("explore") == source)
                    .collect();
                let dist: Vec<f64> = vs.iter().map(|x| x.run.distance_mm).collect();
                let (dm, dsd) = mean_sd(&dist);
                rows.push(ReportRow {
                    source: source.clone(),
                    strategy: v,
                    budget: grid.budget.clone(),
                    runs: vs.len(),
                    expected_runs: cells_per_group / sources.len(),
                    steps_mean: mean_sd(&vs.iter().map(|x| x.run.steps as f64).collect::<Vec<_>>()).0,
                    distance_mean_mm: dm,
                    distance_sd_mm: dsd,
                    crashes: vs.iter().map(|x| x.run.crashes).sum(),
                    compat_bugs: vs.iter().map(|x| compat.get(&x.run.trace).copied().unwrap_or(0)).sum(),
                    screens_visited_mean: mean_sd(&vs.iter().map(|x| x.run.screens_visited as f64).collect::<Vec<_>>()).0,
                });
                let c = curves.entry((source.clone(), v)).or_default();
                for x in &vs {
                    c.push(x.records.iter().map(|r| r.cumulative_mm).collect());
                }
            }
        }
    }

    let mut text = String::new();
    let header = format!(
        "{:<10} {:<8} {:<10} {:>9} {:>8} {:>22} {:>8} {:>7} {:>8}",
        "source", "strategy", "budget", "runs", "steps", "distance mm (mean±sd)", "crashes", "compat", "screens"
    );
    let _ = writeln!(text, "{header}");
    let _ = writeln!(text, "{}", "-".repeat(header.len()));
    for r in &rows {
        let dist = format!("{} ± {}", fmt_num(r.distance_mean_mm, 1), fmt_num(r.distance_sd_mm, 1));
        let _ = writeln!(
            text,
            "{:<10} {:<8} {:<10} {:>9} {:>8} {:>22} {:>8} {:>7} {:>8}",
            r.source,
            r.strategy.as_str(),
            r.budget,
            format!("{}/{}", r.runs, r.expected_runs),
            fmt_num(r.steps_mean, 1),
            dist,
            r.crashes,
            r.compat_bugs,
            fmt_num(r.screens_visited_mean, 2)
        );
    }
    if let Some(c) = &compare {
        let _ = writeln!(text, "\nunique bugs: {}", c.findings.len());
        for f in &c.findings {
            let kind = match f.kind {
                BugKind::Crash => "crash",
                BugKind::Compatibility => "compatibility",
            };
            let _ = writeln!(
                text,
                "  {} {} {} {} {} {} ({} runs)",
                f.pair,
                f.app,
                kind,
                f.screen,
                f.widget.as_deref().unwrap_or("-"),
                f.gesture,
                f.runs
            );
        }
    }
    let _ = writeln!(text, "\nwarnings: {}", warnings.len());
    for w in &warnings {
        let _ = writeln!(text, "  {w}");
    }

    let out = dir.join("report");
    let io = |p: PathBuf| move |e| HarnessError::Io(p, e);
    let p = out.join("report.txt");
    write_atomic(&p, text.as_bytes()).map_err(io(p.clone()))?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.source.clone(),
                r.strategy.to_string(),
                r.budget.clone(),
                r.runs.to_string(),
                r.expected_runs.to_string(),
                fmt_num(r.distance_mean_mm, 3),
                fmt_num(r.distance_sd_mm, 3),
                fmt_num(r.steps_mean, 3),
                r.crashes.to_string(),
                r.compat_bugs.to_string(),
                fmt_num(r.screens_visited_mean, 3),
            ]
        })
        .collect();
    let p = out.join("distance_by_strategy.csv");
    let header = [
        "source",
        "strategy",
        "budget",
        "runs",
        "expected_runs",
        "distance_mean_mm",
        "distance_sd_mm",
        "steps_mean",
        "crashes",
        "compat_bugs",
        "screens_visited_mean",
    ];
    write_atomic(&p, csv(&header, &table).as_bytes()).map_err(io(p.clone()))?;
    let mut cum = Vec::new();
    for ((source, v), runs) in &curves {
        let longest = runs.iter().map(Vec::len).max().unwrap_or(0);
        for step in 0..longest {
            let xs: Vec<f64> = runs.iter().filter_map(|r| r.get(step).copied()).collect();
            let (m, sd) = mean_sd(&xs);
            cum.push(vec![
                source.clone(),
                v.to_string(),
                (step + 1).to_string(),
                xs.len().to_string(),
                fmt_num(m, 3),
                fmt_num(sd, 3),
            ]);
        }
    }
    let p = out.join("cumulative_distance.csv");
    let header = ["source", "strategy", "step", "runs", "cumulative_mean_mm", "cumulative_sd_mm"];
    write_atomic(&p, csv(&header, &cum).as_bytes()).map_err(io(p.clone()))?;
    Ok(Report { rows, warnings, text })
}
