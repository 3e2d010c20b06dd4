//! Line-delimited trajectory file format.
//!
//! The first line is a header record `{"D", "A", "feature_names", ...}`;
//! every following line is one transition
//! `{"episode_id", "t", "state", "action", "r_mortality", "r_los", "done"}`.
//! Transitions of an episode are contiguous and in timestep order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, NormalizationStats, Trajectory, Transition, VectorReward};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    format_version: u32,
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "A")]
    a: usize,
    feature_names: Vec<String>,
    norm_mean: Vec<f64>,
    norm_std: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionRecord {
    episode_id: u64,
    t: usize,
    state: Vec<f64>,
    action: usize,
    r_mortality: f64,
    r_los: f64,
    done: bool,
}

fn to_f64s<S: Scalar>(xs: &[S]) -> Vec<f64> {
    xs.iter().map(|x| x.as_f64()).collect()
}

fn from_f64s<S: Scalar>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&x| S::lit(x)).collect()
}

/// Serializes a dataset to any writer.
pub fn write_dataset<S: Scalar, W: Write>(dataset: &Dataset<S>, mut out: W) -> Result<()> {
    let header = HeaderRecord {
        format_version: FORMAT_VERSION,
        d: dataset.state_dim(),
        a: dataset.num_actions,
        feature_names: dataset.feature_names.clone(),
        norm_mean: to_f64s(&dataset.normalization.mean),
        norm_std: to_f64s(&dataset.normalization.std),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for traj in &dataset.trajectories {
        for tr in &traj.transitions {
            let rec = TransitionRecord {
                episode_id: traj.id,
                t: tr.t,
                state: to_f64s(&tr.state),
                action: tr.action,
                r_mortality: tr.reward.mortality.as_f64(),
                r_los: tr.reward.los.as_f64(),
                done: tr.done,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset<S: Scalar>(dataset: &Dataset<S>, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_dataset(dataset, BufWriter::new(file))
}

/// Parses and validates a dataset from a reader.
pub fn parse_dataset<S: Scalar, R: BufRead>(reader: R) -> Result<Dataset<S>> {
    let mut header: Option<HeaderRecord> = None;
    let mut trajectories: Vec<Trajectory<S>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            line: line_no,
            message: e.to_string(),
        };
        let Some(h) = header.as_ref() else {
            let h: HeaderRecord = serde_json::from_str(&line).map_err(parse_err)?;
            if h.format_version != FORMAT_VERSION {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unsupported format version {}", h.format_version),
                });
            }
            if h.feature_names.len() != h.d || h.norm_mean.len() != h.d || h.norm_std.len() != h.d {
                return Err(Error::Parse {
                    line: line_no,
                    message: "header arrays disagree with D".into(),
                });
            }
            header = Some(h);
            continue;
        };
        let rec: TransitionRecord = serde_json::from_str(&line).map_err(parse_err)?;
        if rec.state.len() != h.d {
            return Err(Error::Parse {
                line: line_no,
                message: format!("state has {} features, header declares D={}", rec.state.len(), h.d),
            });
        }
        let transition = Transition {
            state: from_f64s(&rec.state),
            action: rec.action,
            reward: VectorReward::new(S::lit(rec.r_mortality), S::lit(rec.r_los)),
            done: rec.done,
            t: rec.t,
        };
        match trajectories.last_mut() {
            Some(traj) if traj.id == rec.episode_id => traj.transitions.push(transition),
            _ => trajectories.push(Trajectory {
                id: rec.episode_id,
                transitions: vec![transition],
            }),
        }
    }
    let Some(h) = header else {
        return Err(Error::validation(None, "empty file: dataset must contain N ≥ 1 trajectories"));
    };
    Dataset::new(
        trajectories,
        h.feature_names,
        h.a,
        NormalizationStats {
            mean: from_f64s(&h.norm_mean),
            std: from_f64s(&h.norm_std),
        },
    )
}

pub fn load_dataset<S: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<S>> {
    let file = File::open(path)?;
    parse_dataset(BufReader::new(file))
}
