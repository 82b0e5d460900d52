//! Grid runs: every (arm, seed) cell is a separate `gagail train` process.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::Duration;

use serde::Deserialize;

use crate::curves::{final_scaled_perf, mean_std};
use crate::run::{load_experiment, verbosity, Verbosity, METRICS_FILE};
use crate::{CliError, CliResult, GridArgs, EXIT_DIVERGED, EXIT_PARTIAL_GRID};

/// ```toml
/// base = "twice_reach_gagail.toml"
/// seeds = [0, 1, 2, 3, 4]
/// set = ["iterations=100"]
///
/// [[arm]]
/// name = "gail_edpn"
/// set = ["method=gail_edpn"]
/// ```
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Experiment config shared by all cells, relative to the spec file.
    pub base: PathBuf,
    pub seeds: Vec<u64>,
    /// Overrides applied to every cell before the arm's own.
    #[serde(default)]
    pub set: Vec<String>,
    #[serde(rename = "arm")]
    pub arms: Vec<Arm>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arm {
    pub name: String,
    #[serde(default)]
    pub set: Vec<String>,
}

impl GridSpec {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let mut spec: Self =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if spec.base.is_relative() {
            spec.base = path.parent().unwrap_or(Path::new(".")).join(&spec.base);
        }
        if spec.seeds.is_empty() || spec.arms.is_empty() {
            return Err(CliError::usage("a grid needs at least one seed and one arm"));
        }
        let mut names: Vec<&str> = spec.arms.iter().map(|a| a.name.as_str()).collect();
        if let Some(bad) = names
            .iter()
            .find(|n| n.is_empty() || !n.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)))
        {
            return Err(CliError::usage(format!(
                "arm name {bad:?} must be non-empty and use only letters, digits, '-', '_' or '.'"
            )));
        }
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::usage("arm names must be unique"));
        }
        Ok(spec)
    }

    fn cell_overrides(&self, arm: &Arm, seed: u64) -> Vec<String> {
        let mut o = self.set.clone();
        o.extend(arm.set.iter().cloned());
        o.push(format!("seed={seed}"));
        o
    }
}

struct Cell {
    arm: usize,
    seed: u64,
    dir: PathBuf,
    overrides: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    Diverged,
    Failed,
}

impl Status {
    fn name(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Diverged => "diverged",
            Status::Failed => "failed",
        }
    }
}

fn spawn(exe: &Path, base: &Path, cell: &Cell) -> std::io::Result<Child> {
    fs::create_dir_all(&cell.dir)?;
    let log = fs::File::create(cell.dir.join("log.txt"))?;
    let mut cmd = Command::new(exe);
    cmd.arg("train").arg("--config").arg(base).arg("--out").arg(&cell.dir);
    for o in &cell.overrides {
        cmd.arg("--set").arg(o);
    }
    cmd.stdin(Stdio::null())
        .stdout(log.try_clone()?)
        .stderr(log)
        .spawn()
}

pub fn run_grid(a: &GridArgs) -> CliResult<()> {
    let spec = GridSpec::load(&a.spec)?;
    let base = spec
        .base
        .canonicalize()
        .map_err(|_| CliError::usage(format!("base config {} does not exist", spec.base.display())))?;
    let mut cells = Vec::new();
    for (i, arm) in spec.arms.iter().enumerate() {
        for &seed in &spec.seeds {
            let overrides = spec.cell_overrides(arm, seed);
            // Reject bad cells before anything runs.
            load_experiment(&base, &overrides)
                .map_err(|e| CliError::usage(format!("arm {} seed {seed}: {}", arm.name, e.message)))?;
            cells.push(Cell {
                arm: i,
                seed,
                dir: a.out.join(&arm.name).join(format!("seed{seed}")),
                overrides,
            });
        }
    }
    fs::create_dir_all(&a.out)?;
    fs::copy(&a.spec, a.out.join("grid.toml"))?;
    let exe = std::env::current_exe()?;
    let jobs = a.jobs.max(1);
    let level = verbosity();

    let mut status = vec![Status::Failed; cells.len()];
    let mut running: Vec<(usize, Child)> = Vec::new();
    let mut next = 0;
    while next < cells.len() || !running.is_empty() {
        while next < cells.len() && running.len() < jobs {
            match spawn(&exe, &base, &cells[next]) {
                Ok(child) => running.push((next, child)),
                Err(e) => eprintln!("cell {} could not start: {e}", cells[next].dir.display()),
            }
            next += 1;
        }
        let mut k = 0;
        while k < running.len() {
            match running[k].1.try_wait()? {
                Some(exit) => {
                    let (idx, _) = running.swap_remove(k);
                    status[idx] = match exit.code() {
                        Some(0) => Status::Ok,
                        Some(c) if c == i32::from(EXIT_DIVERGED) => Status::Diverged,
                        _ => Status::Failed,
                    };
                    if level > Verbosity::Quiet {
                        println!("{} {}", cells[idx].dir.display(), status[idx].name());
                    }
                }
                None => k += 1,
            }
        }
        if !running.is_empty() {
            thread::sleep(Duration::from_millis(20));
        }
    }

    let mut table = String::from("arm,seed,status,final_scaled_perf\n");
    let mut finals: Vec<Vec<f64>> = vec![Vec::new(); spec.arms.len()];
    for (cell, st) in cells.iter().zip(&status) {
        let fin = if *st == Status::Ok {
            final_scaled_perf(&cell.dir.join(METRICS_FILE)).ok().flatten()
        } else {
            None
        };
        if let Some(v) = fin {
            finals[cell.arm].push(v);
        }
        table.push_str(&format!(
            "{},{},{},{}\n",
            spec.arms[cell.arm].name,
            cell.seed,
            st.name(),
            fin.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    fs::write(a.out.join("cells.csv"), table)?;

    let mut summary = String::from("arm,seeds,completed,final_scaled_perf_mean,final_scaled_perf_std\n");
    for (arm, f) in spec.arms.iter().zip(&finals) {
        let (m, s) = mean_std(f).map_or((String::new(), String::new()), |(m, s)| (m.to_string(), s.to_string()));
        summary.push_str(&format!("{},{},{},{m},{s}\n", arm.name, spec.seeds.len(), f.len()));
    }
    fs::write(a.out.join("summary.csv"), &summary)?;
    if level > Verbosity::Quiet {
        print!("{summary}");
    }

    let failed = status.iter().filter(|s| **s != Status::Ok).count();
    if failed > 0 {
        return Err(CliError {
            code: EXIT_PARTIAL_GRID,
            message: format!("{failed} of {} cells failed; see cells.csv", cells.len()),
        });
    }
    Ok(())
}
