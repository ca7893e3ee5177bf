use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::env::{TraceRecord, TraceWriter};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method};
use crate::nn::{load_network, save_network};
use crate::rl::{evaluate, evaluate_policy, train, CurvePoint, EvalResult, RandomPolicy, SapPolicy};
use crate::seeds::{derive_seed, SeedStream};

pub const CONFIG_FILE: &str = "config.json";
pub const LEARNING_CURVE_FILE: &str = "learning_curve.csv";
pub const FINAL_REWARDS_FILE: &str = "final_rewards.csv";
pub const NTH_LOWEST_FILE: &str = "nth_lowest.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const DIVERGENCE_FILE: &str = "divergence.json";

/// Paths of everything a run wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub final_rewards: PathBuf,
    pub nth_lowest: PathBuf,
    pub learning_curve: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

/// Evaluation episode seeds for a run seed; disjoint from training and
/// validation streams.
pub fn test_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    (0..episodes as u64)
        .map(|i| derive_seed(seed, SeedStream::Test, i))
        .collect()
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn prepare_dir(config: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(CONFIG_FILE);
    write_file(&path, config.to_json())?;
    Ok(path)
}

pub fn learning_curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("step,R_m\n");
    for p in curve {
        writeln!(s, "{},{}", p.step, p.mean_reward).unwrap();
    }
    s
}

pub fn final_rewards_csv(result: &EvalResult) -> String {
    let mut s = String::new();
    for r in result.final_rewards() {
        writeln!(s, "{r}").unwrap();
    }
    s
}

pub fn nth_lowest_csv(result: &EvalResult) -> String {
    let mut s = String::from("n,mean_throughput\n");
    for (i, m) in result.nth_lowest_means().iter().enumerate() {
        writeln!(s, "{},{}", i + 1, m).unwrap();
    }
    s
}

fn write_eval(
    config: &ExperimentConfig,
    out: &Path,
    config_path: PathBuf,
    result: &EvalResult,
) -> Result<RunArtifacts> {
    let final_rewards = out.join(FINAL_REWARDS_FILE);
    write_file(&final_rewards, final_rewards_csv(result))?;
    let nth_lowest = out.join(NTH_LOWEST_FILE);
    write_file(&nth_lowest, nth_lowest_csv(result))?;
    let trace = if config.eval.trace {
        let path = out.join(TRACE_FILE);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = TraceWriter::new(BufWriter::new(file));
        for (episode, outcome) in result.episodes.iter().enumerate() {
            for (step, s) in outcome.steps.iter().enumerate() {
                writer
                    .record(&TraceRecord {
                        episode: episode as u64,
                        step,
                        state_hash: s.state_hash.clone(),
                        action: s.action,
                        reward: s.reward,
                    })
                    .map_err(|e| Error::io(&path, e))?;
            }
        }
        std::io::Write::flush(&mut writer.into_inner()).map_err(|e| Error::io(&path, e))?;
        Some(path)
    } else {
        None
    };
    Ok(RunArtifacts {
        dir: out.to_path_buf(),
        config: config_path,
        final_rewards,
        nth_lowest,
        learning_curve: None,
        checkpoint: None,
        trace,
    })
}

/// Trains the configured learning method, then evaluates the best
/// checkpoint on the test seeds.
///
/// On divergence a `divergence.json` is left in `out` before the error
/// propagates.
pub fn run_train(config: &ExperimentConfig, out: &Path) -> Result<RunArtifacts> {
    let (Some(family), Some(behavior)) = (config.method.family(), config.method.behavior()) else {
        return Err(Error::InvalidConfig(format!(
            "'{}' is not a learning method; use baseline",
            config.method
        )));
    };
    let config_path = prepare_dir(config, out)?;
    let outcome = match train(&config.env, &config.agent, &config.nn, family, behavior, config.seed) {
        Ok(o) => o,
        Err(err @ Error::Divergence { .. }) => {
            let Error::Divergence { step, detail } = &err else { unreachable!() };
            let dump = serde_json::json!({ "step": step, "detail": detail });
            write_file(&out.join(DIVERGENCE_FILE), format!("{dump}\n"))?;
            return Err(err);
        }
        Err(err) => return Err(err),
    };
    let learning_curve = out.join(LEARNING_CURVE_FILE);
    write_file(&learning_curve, learning_curve_csv(&outcome.curve))?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    write_file(&checkpoint, save_network(&outcome.best_network))?;
    let result = evaluate(
        &outcome.best_network,
        &config.env,
        &test_seeds(config.seed, config.eval.episodes),
        config.eval.horizon,
    )?;
    let mut artifacts = write_eval(config, out, config_path, &result)?;
    artifacts.learning_curve = Some(learning_curve);
    artifacts.checkpoint = Some(checkpoint);
    Ok(artifacts)
}

/// Greedy evaluation of a saved network on the test seeds of
/// `config.seed`.
pub fn run_eval(config: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<RunArtifacts> {
    let bytes = fs::read(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    let network = load_network(&bytes)?;
    match config.method.family() {
        Some(family) if family != network.family() => {
            return Err(Error::ArchitectureMismatch(format!(
                "checkpoint holds a {:?} network but method '{}' expects {:?}",
                network.family(),
                config.method,
                family
            )));
        }
        Some(_) => {}
        None => {
            return Err(Error::InvalidConfig(format!(
                "'{}' is not a learning method; use baseline",
                config.method
            )));
        }
    }
    if network.config() != &config.nn {
        return Err(Error::ArchitectureMismatch(format!(
            "checkpoint layer sizes {:?} differ from configured {:?}",
            network.config(),
            config.nn
        )));
    }
    config.validate()?;
    let result = evaluate(
        &network,
        &config.env,
        &test_seeds(config.seed, config.eval.episodes),
        config.eval.horizon,
    )?;
    let config_path = prepare_dir(config, out)?;
    write_eval(config, out, config_path, &result)
}

/// SAP-only or uniformly random play on the test seeds of `config.seed`.
pub fn run_baseline(config: &ExperimentConfig, out: &Path) -> Result<RunArtifacts> {
    config.validate()?;
    let seeds = test_seeds(config.seed, config.eval.episodes);
    let result = match config.method {
        Method::SapOnly => evaluate_policy(
            &mut SapPolicy {
                beta: config.agent.beta_sap,
            },
            &config.env,
            &seeds,
            config.eval.horizon,
        )?,
        Method::Random => evaluate_policy(&mut RandomPolicy, &config.env, &seeds, config.eval.horizon)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "'{other}' is a learning method; use train"
            )))
        }
    };
    let config_path = prepare_dir(config, out)?;
    write_eval(config, out, config_path, &result)
}
