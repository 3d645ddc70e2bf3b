//! Aggregates per-trial learning curves into a transfer summary table and
//! per-environment plot series.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::trainer::mean_std;
use super::{HarnessError, LearningCurve};

/// Where `report` wrote its outputs.
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Group key: (child_env, parent_env, k, mode). Baselines have k=None and
/// mode "scratch".
type GroupKey = (String, String, Option<usize>, String);

/// Per-step mean/std across a group's runs, restricted to env_steps present
/// in every run.
fn across_runs(runs: &[LearningCurve]) -> Vec<(u64, f64, f64)> {
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for curve in runs {
        for row in &curve.rows {
            by_step
                .entry(row.env_steps)
                .or_default()
                .push(row.eval_return_mean);
        }
    }
    by_step
        .into_iter()
        .filter(|(_, vals)| vals.len() == runs.len())
        .map(|(step, vals)| {
            let (mean, std) = mean_std(&vals);
            (step, mean, std)
        })
        .collect()
}

fn final_stats(runs: &[LearningCurve]) -> (f64, f64) {
    let finals: Vec<f64> = runs
        .iter()
        .filter_map(|c| c.rows.last().map(|r| r.eval_return_mean))
        .collect();
    mean_std(&finals)
}

fn steps_to_threshold(points: &[(u64, f64, f64)], threshold: f64) -> Option<u64> {
    points
        .iter()
        .find(|(_, mean, _)| *mean >= threshold)
        .map(|(step, _, _)| *step)
}

fn write_csv_atomic(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("csv.tmp");
    {
        let mut writer = csv::Writer::from_path(&tmp)?;
        writer.write_record(header)?;
        for row in rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads every learning curve under `in_dir` (a grid output directory, or a
/// directory holding curve CSVs directly), writes the summary table to
/// `out_path` and one plot_{env}.csv per child environment next to it.
///
/// Summary columns: child_env,parent_env,k,mode,runs,final_mean,final_std,
/// steps_to_threshold — where the threshold is 90% of the scratch baseline's
/// final mean return on the same child environment (empty when no baseline
/// exists or the threshold is never reached).
pub fn report(in_dir: &Path, out_path: &Path) -> Result<ReportPaths, HarnessError> {
    let curves_dir = {
        let sub = in_dir.join("curves");
        if sub.is_dir() {
            sub
        } else {
            in_dir.to_path_buf()
        }
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&curves_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();

    let mut groups: BTreeMap<GroupKey, Vec<LearningCurve>> = BTreeMap::new();
    for file in &files {
        let curve = LearningCurve::read_csv(file)?;
        let Some(first) = curve.rows.first() else {
            continue;
        };
        let key = (
            first.child_env.clone(),
            first.parent_env.clone(),
            first.k,
            first.mode.clone(),
        );
        groups.entry(key).or_default().push(curve);
    }
    if groups.is_empty() {
        return Err(HarnessError::NothingToReport(format!(
            "no learning curves found under {}",
            curves_dir.display()
        )));
    }

    // Baseline final means per child environment set the transfer thresholds.
    let mut thresholds: BTreeMap<String, f64> = BTreeMap::new();
    for ((child_env, _, k, mode), runs) in &groups {
        if k.is_none() && mode == "scratch" {
            let (final_mean, _) = final_stats(runs);
            thresholds.insert(child_env.clone(), 0.9 * final_mean);
        }
    }

    let mut summary_rows = Vec::new();
    for ((child_env, parent_env, k, mode), runs) in &groups {
        let (final_mean, final_std) = final_stats(runs);
        let reach = thresholds
            .get(child_env)
            .and_then(|thr| steps_to_threshold(&across_runs(runs), *thr));
        summary_rows.push(vec![
            child_env.clone(),
            parent_env.clone(),
            k.map(|k| k.to_string()).unwrap_or_default(),
            mode.clone(),
            runs.len().to_string(),
            final_mean.to_string(),
            final_std.to_string(),
            reach.map(|s| s.to_string()).unwrap_or_default(),
        ]);
    }
    write_csv_atomic(
        out_path,
        &[
            "child_env",
            "parent_env",
            "k",
            "mode",
            "runs",
            "final_mean",
            "final_std",
            "steps_to_threshold",
        ],
        &summary_rows,
    )?;

    // One plot file per child environment: the baseline series plus one
    // series per transplant configuration.
    let plot_dir = out_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut child_envs: Vec<String> = groups.keys().map(|k| k.0.clone()).collect();
    child_envs.sort();
    child_envs.dedup();

    let mut plots = Vec::new();
    for child_env in &child_envs {
        let mut rows = Vec::new();
        let mut emit = |series: &str, runs: &[LearningCurve]| {
            for (step, mean, std) in across_runs(runs) {
                rows.push(vec![
                    series.to_string(),
                    step.to_string(),
                    mean.to_string(),
                    std.to_string(),
                ]);
            }
        };
        for ((group_env, _, k, mode), runs) in &groups {
            if group_env == child_env && k.is_none() && mode == "scratch" {
                emit("baseline", runs);
            }
        }
        for ((group_env, parent_env, k, mode), runs) in &groups {
            if group_env == child_env {
                if let Some(k) = k {
                    emit(&format!("{}-k{}-{}", parent_env, k, mode), runs);
                }
            }
        }
        let path = plot_dir.join(format!("plot_{}.csv", child_env));
        write_csv_atomic(&path, &["series", "env_steps", "mean", "std"], &rows)?;
        plots.push(path);
    }

    Ok(ReportPaths {
        summary: out_path.to_path_buf(),
        plots,
    })
}
