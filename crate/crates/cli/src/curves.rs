//! Metrics CSV reading and seed aggregation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gagail::config::ExperimentConfig;
use gagail::trainer::CSV_HEADER;

use crate::run::{verbosity, Verbosity, CONFIG_FILE, METRICS_FILE};
use crate::{CliError, CliResult, ExportArgs};

pub const CURVE_HEADER: &str = "samples,scaled_perf_mean,scaled_perf_std";

/// `(samples, scaled_perf)` per row of a metrics file.
pub fn read_curve(path: &Path) -> CliResult<Vec<(u64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(CliError::usage(format!("{} is not a metrics file", path.display())));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            let bad = || CliError::usage(format!("{} line {}: malformed", path.display(), n + 2));
            if cells.len() != 9 {
                return Err(bad());
            }
            Ok((cells[1].parse().map_err(|_| bad())?, cells[3].parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn final_scaled_perf(path: &Path) -> CliResult<Option<f64>> {
    Ok(read_curve(path)?.last().map(|r| r.1))
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    Some((m, v.sqrt()))
}

fn find_runs(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            find_runs(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == METRICS_FILE) {
            out.push(dir.to_path_buf());
        }
    }
    Ok(())
}

fn is_seed_dir(name: &str) -> bool {
    name.strip_prefix("seed")
        .is_some_and(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()))
}

/// Runs in `seedN` directories group by their parent directory's name;
/// anything else by the method label in its config snapshot.
fn group_of(run: &Path) -> String {
    let name = run.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    if is_seed_dir(&name) {
        if let Some(parent) = run.parent().and_then(|p| p.file_name()) {
            return parent.to_string_lossy().into_owned();
        }
    }
    fs::read_to_string(run.join(CONFIG_FILE))
        .ok()
        .and_then(|t| ExperimentConfig::from_toml(&t).ok())
        .map(|c| c.label())
        .unwrap_or(name)
}

pub fn export(a: &ExportArgs) -> CliResult<()> {
    if !a.runs.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", a.runs.display())));
    }
    let mut runs = Vec::new();
    find_runs(&a.runs, &mut runs)?;
    if runs.is_empty() {
        return Err(CliError::usage(format!("no runs (metrics.csv) found under {}", a.runs.display())));
    }
    let mut groups: BTreeMap<String, Vec<Vec<(u64, f64)>>> = BTreeMap::new();
    for run in &runs {
        let curve = read_curve(&run.join(METRICS_FILE))?;
        if !curve.is_empty() {
            groups.entry(group_of(run)).or_default().push(curve);
        }
    }
    if groups.is_empty() {
        return Err(CliError::usage("every run found is empty"));
    }
    let out = a.out.clone().unwrap_or_else(|| a.runs.clone());
    fs::create_dir_all(&out)?;
    for (group, curves) in &groups {
        let len = curves.iter().map(Vec::len).min().unwrap_or(0);
        let mut text = format!("{CURVE_HEADER}\n");
        for i in 0..len {
            let samples = curves[0][i].0;
            if curves.iter().any(|c| c[i].0 != samples) {
                return Err(CliError::usage(format!(
                    "runs in group {group} disagree on the sample count at row {}",
                    i + 1
                )));
            }
            let ys: Vec<f64> = curves.iter().map(|c| c[i].1).collect();
            let (m, s) = mean_std(&ys).expect("groups are non-empty");
            text.push_str(&format!("{samples},{m},{s}\n"));
        }
        let path = out.join(format!("curve_{group}.csv"));
        fs::write(&path, text)?;
        if verbosity() > Verbosity::Quiet {
            println!("{} ({} runs, {len} points)", path.display(), curves.len());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert!(mean_std(&[]).is_none());
    }

    #[test]
    fn seed_directories() {
        assert!(is_seed_dir("seed0"));
        assert!(is_seed_dir("seed12"));
        assert!(!is_seed_dir("seed"));
        assert!(!is_seed_dir("seedling"));
    }
}
