use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method};
use crate::harness::run::{read_file, write_file, CONFIG_FILE, FINAL_REWARDS_FILE, NTH_LOWEST_FILE};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const PAIRWISE_FILE: &str = "pairwise.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub method: Method,
    pub episodes: usize,
    pub mean_reward: f64,
    pub median_reward: f64,
    /// Mean over episodes of the lowest AP throughput.
    pub mean_lowest_throughput: f64,
}

/// Ratios of run `a` over run `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub a: String,
    pub b: String,
    pub mean_ratio: f64,
    pub median_ratio: f64,
    pub lowest_throughput_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<SummaryRow>,
    pub pairs: Vec<PairRow>,
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_rewards(path: &Path) -> Result<Vec<f64>> {
    read_file(path)?
        .lines()
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| parse_error(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn read_lowest_mean(path: &Path) -> Result<f64> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("n,mean_throughput") {
        return Err(parse_error(path, "missing 'n,mean_throughput' header"));
    }
    let first = lines.next().ok_or_else(|| parse_error(path, "no rows"))?;
    first
        .split(',')
        .nth(1)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_error(path, format!("bad row '{first}'")))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn label_for(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Summarizes artifact directories. All runs must share one environment
/// configuration.
pub fn compare(dirs: &[PathBuf]) -> Result<Comparison> {
    if dirs.len() < 2 {
        return Err(Error::InvalidInput("compare needs at least two runs".into()));
    }
    let mut rows = Vec::with_capacity(dirs.len());
    let mut reference: Option<(PathBuf, ExperimentConfig)> = None;
    for dir in dirs {
        let config = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
        if let Some((first_dir, first)) = &reference {
            if first.env != config.env || first.eval.horizon != config.eval.horizon {
                return Err(Error::InvalidInput(format!(
                    "environment of {} differs from {}",
                    dir.display(),
                    first_dir.display()
                )));
            }
        } else {
            reference = Some((dir.clone(), config.clone()));
        }
        let rewards = read_rewards(&dir.join(FINAL_REWARDS_FILE))?;
        if rewards.is_empty() {
            return Err(parse_error(&dir.join(FINAL_REWARDS_FILE), "no rewards"));
        }
        rows.push(SummaryRow {
            label: label_for(dir),
            method: config.method,
            episodes: rewards.len(),
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
            median_reward: median(&rewards),
            mean_lowest_throughput: read_lowest_mean(&dir.join(NTH_LOWEST_FILE))?,
        });
    }
    let mut pairs = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            pairs.push(PairRow {
                a: a.label.clone(),
                b: b.label.clone(),
                mean_ratio: a.mean_reward / b.mean_reward,
                median_ratio: a.median_reward / b.median_reward,
                lowest_throughput_ratio: a.mean_lowest_throughput / b.mean_lowest_throughput,
            });
        }
    }
    Ok(Comparison { rows, pairs })
}

impl Comparison {
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("run,method,episodes,mean_reward,median_reward,mean_lowest_throughput\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                r.label, r.method, r.episodes, r.mean_reward, r.median_reward, r.mean_lowest_throughput
            )
            .unwrap();
        }
        s
    }

    pub fn pairwise_csv(&self) -> String {
        let mut s = String::from("a,b,mean_ratio,median_ratio,lowest_throughput_ratio\n");
        for p in &self.pairs {
            writeln!(
                s,
                "{},{},{},{},{}",
                p.a, p.b, p.mean_ratio, p.median_ratio, p.lowest_throughput_ratio
            )
            .unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(3);
        let mut s = format!(
            "{:<width$}  {:<8}  {:>8}  {:>10}  {:>10}  {:>10}\n",
            "run", "method", "episodes", "mean", "median", "lowest"
        );
        for r in &self.rows {
            writeln!(
                s,
                "{:<width$}  {:<8}  {:>8}  {:>10.4}  {:>10.4}  {:>10.4}",
                r.label,
                r.method.name(),
                r.episodes,
                r.mean_reward,
                r.median_reward,
                r.mean_lowest_throughput
            )
            .unwrap();
        }
        s.push('\n');
        for p in &self.pairs {
            writeln!(
                s,
                "{} / {}: mean x{:.3}, median x{:.3}, lowest throughput x{:.3}",
                p.a, p.b, p.mean_ratio, p.median_ratio, p.lowest_throughput_ratio
            )
            .unwrap();
        }
        s
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_file(&out.join(SUMMARY_FILE), self.summary_csv())?;
        write_file(&out.join(PAIRWISE_FILE), self.pairwise_csv())
    }
}
