//! Parameter sweeps: the cartesian product of a few config axes, each cell
//! run over a range of seeds.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Deserialize;
use taskalloc::engine;
use taskalloc::metrics::{self, RunSummary};
use taskalloc::SimConfig;
use toml::{Table, Value};

use crate::overrides;

/// Sets `gamma` to a multiple of the config's critical value.
pub const GAMMA_MULTIPLE: &str = "gamma-multiple";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "one")]
    pub seeds: usize,
    pub out: Option<PathBuf>,
    pub base: SimConfig,
    #[serde(default)]
    pub axes: Vec<Axis>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub values: Vec<Value>,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = overrides::read_file(path)?;
        let spec: SweepSpec =
            toml::from_str(&text).map_err(|e| anyhow!("invalid sweep file {}: {e}", path.display()))?;
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        if self.seeds == 0 {
            bail!("sweep needs at least one seed");
        }
        let table = Table::try_from(&self.base).context("cannot serialize base config")?;
        for (i, a) in self.axes.iter().enumerate() {
            if a.values.is_empty() {
                bail!("axis `{}` has an empty values list", a.name);
            }
            if self.axes[..i].iter().any(|b| b.name == a.name) {
                bail!("axis `{}` is given twice", a.name);
            }
            if a.name != GAMMA_MULTIPLE {
                overrides::set_path(&mut table.clone(), &a.name, a.values[0].clone(), false)
                    .map_err(|e| anyhow!("axis `{}`: {e}", a.name))?;
            }
        }
        if self.axes.iter().any(|a| a.name == GAMMA_MULTIPLE) && self.axes.iter().any(|a| a.name == "gamma") {
            bail!("axes `gamma` and `{GAMMA_MULTIPLE}` conflict");
        }
        Ok(())
    }

    /// Every combination of axis values, the first axis varying slowest.
    pub fn cells(&self) -> Vec<Vec<Value>> {
        let mut cells = vec![Vec::new()];
        for a in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    a.values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push(v.clone());
                        c
                    })
                })
                .collect();
        }
        cells
    }

    fn cell_config(&self, cell: &[Value]) -> Result<SimConfig> {
        let mut plain = Vec::new();
        let mut multiple = None;
        for (a, v) in self.axes.iter().zip(cell) {
            if a.name == GAMMA_MULTIPLE {
                multiple = Some(
                    v.as_float()
                        .or_else(|| v.as_integer().map(|i| i as f64))
                        .ok_or_else(|| anyhow!("{GAMMA_MULTIPLE} value {v} is not a number"))?,
                );
            } else {
                plain.push((a.name.clone(), v.clone()));
            }
        }
        let mut c = overrides::apply(&self.base, &plain)?;
        if let Some(m) = multiple {
            let gs = c.critical_value().map_err(|e| anyhow!("{GAMMA_MULTIPLE} needs a critical value: {e}"))?;
            c.gamma = m * gs;
        }
        Ok(c)
    }
}

pub struct Outcome {
    pub path: PathBuf,
    pub rows: usize,
    pub failed: usize,
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn run_one(spec: &SweepSpec, cell: &[Value], s: usize) -> Result<RunSummary> {
    let c = spec.cell_config(cell)?;
    let c = c.clone().with_seed(c.seed.wrapping_add(s as u64));
    let report = taskalloc::model::validate_config(&c);
    if report.has_errors() {
        let msgs: Vec<String> = report.errors().map(|i| i.to_string()).collect();
        bail!("{}", msgs.join("; "));
    }
    let trace = engine::run(&c)?;
    Ok(metrics::summarize(&trace, metrics::default_burn_in_for(&c)))
}

const COLUMNS: [&str; 14] = [
    "seed",
    "status",
    "total_regret",
    "avg_regret",
    "avg_regret_after_burn_in",
    "closeness",
    "exception_rounds",
    "r_plus",
    "r_approx",
    "r_minus",
    "final_loads",
    "gamma",
    "warnings",
    "error",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Runs every (cell, seed) pair and writes `sweep.csv` into `out`. Failed
/// runs are recorded in their row; the others still run.
pub fn run(spec: &SweepSpec, out: &Path) -> Result<Outcome> {
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..spec.seeds).map(move |s| (c, s))).collect();
    let results: Vec<Result<RunSummary>> = jobs.par_iter().map(|&(c, s)| run_one(spec, &cells[c], s)).collect();

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = out.join("sweep.csv");
    let mut file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    writeln!(file, "# base: {}", serde_json::to_string(&spec.base)?)?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = spec.axes.iter().map(|a| a.name.as_str()).collect();
    header.extend(COLUMNS);
    w.write_record(&header)?;

    let mut failed = 0;
    for (&(c, s), result) in jobs.iter().zip(&results) {
        let mut row: Vec<String> = cells[c].iter().map(render).collect();
        match result {
            Ok(r) => row.extend([
                r.seed.to_string(),
                "ok".into(),
                r.total_regret.to_string(),
                r.avg_regret.to_string(),
                opt(r.avg_regret_after_burn_in),
                opt(r.closeness),
                r.exception_rounds.to_string(),
                r.r_plus.to_string(),
                r.r_approx.to_string(),
                r.r_minus.to_string(),
                r.final_loads.iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
                r.config.gamma.to_string(),
                r.warnings.len().to_string(),
                String::new(),
            ]),
            Err(e) => {
                failed += 1;
                row.extend([spec.base.seed.wrapping_add(s as u64).to_string(), "failed".into()]);
                row.extend(std::iter::repeat_n(String::new(), COLUMNS.len() - 3));
                row.push(format!("{e:#}"));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(Outcome { path, rows: jobs.len(), failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
seeds = 2

[base]
n = 200
k = 1
demands = [20]
algorithm = "ant"
gamma = 0.05
horizon = 50
noise = { kind = "sigmoid", lambda = 1.0 }

[[axes]]
name = "algorithm"
values = ["ant", "trivial-sync"]

[[axes]]
name = "noise.lambda"
values = [0.5, 1.0, 2.0]
"#;

    #[test]
    fn cells_are_the_product() {
        let spec: SweepSpec = toml::from_str(SPEC).unwrap();
        spec.check().unwrap();
        let cells = spec.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1], vec![Value::String("ant".into()), Value::Float(1.0)]);
        assert_eq!(spec.cell_config(&cells[5]).unwrap().algorithm, taskalloc::AlgorithmSpec::TrivialSync);
    }

    #[test]
    fn bad_axes() {
        let bad = SPEC.replace("noise.lambda", "noise.lambada");
        let spec: SweepSpec = toml::from_str(&bad).unwrap();
        assert!(spec.check().unwrap_err().to_string().contains("noise.lambada"));
        let empty = SPEC.replace("[0.5, 1.0, 2.0]", "[]");
        let spec: SweepSpec = toml::from_str(&empty).unwrap();
        assert!(spec.check().unwrap_err().to_string().contains("empty values"));
    }

    #[test]
    fn gamma_multiple() {
        let text = SPEC.replace("noise.lambda", GAMMA_MULTIPLE);
        let spec: SweepSpec = toml::from_str(&text).unwrap();
        spec.check().unwrap();
        let c = spec.cell_config(&spec.cells()[2]).unwrap();
        assert!((c.gamma - 2.0 * c.critical_value().unwrap()).abs() < 1e-15);
    }
}
