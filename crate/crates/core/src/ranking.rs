//! Mean-rank aggregation over class x metric columns.
//!
//! Every class contributes two columns: Dice (higher is better) and HD95
//! (lower is better). Ties share the average of the tied positions, and an
//! algorithm's mean rank is the plain mean over all columns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub mean_dice: f64,
    pub mean_hd95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmScores {
    pub algorithm_id: String,
    pub classes: BTreeMap<u32, ClassScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    Dice,
    Hd95,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RankColumn {
    pub label: u32,
    pub metric: RankMetric,
}

impl RankColumn {
    pub fn name(&self) -> String {
        match self.metric {
            RankMetric::Dice => format!("{}_dice", self.label),
            RankMetric::Hd95 => format!("{}_hd95", self.label),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    /// In input order.
    pub algorithms: Vec<String>,
    /// Ascending label, Dice before HD95.
    pub columns: Vec<RankColumn>,
    /// `ranks[a][c]`: rank of algorithm `a` in column `c`.
    pub ranks: Vec<Vec<f64>>,
    pub mean_ranks: Vec<f64>,
    /// Expected labels no algorithm reported; they have no columns.
    pub excluded_labels: Vec<u32>,
}

impl RankTable {
    /// `(algorithm, mean rank)` sorted by mean rank; equal means keep input order.
    pub fn standings(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self
            .algorithms
            .iter()
            .map(String::as_str)
            .zip(self.mean_ranks.iter().copied())
            .collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1));
        v
    }

    pub fn write_matrix_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["algorithm_id".to_string()];
        header.extend(self.columns.iter().map(RankColumn::name));
        header.push("mean_rank".into());
        wr.write_record(&header)?;
        for (a, name) in self.algorithms.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend(self.ranks[a].iter().map(|r| r.to_string()));
            row.push(self.mean_ranks[a].to_string());
            wr.write_record(&row)?;
        }
        wr.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    /// `{algorithm_id: mean_rank}` with entries in standings order.
    pub fn mean_ranks_json(&self) -> String {
        let mut s = String::from("{");
        for (k, (name, r)) in self.standings().into_iter().enumerate() {
            let sep = if k == 0 { "\n" } else { ",\n" };
            let key = serde_json::to_string(name).expect("string serializes");
            let _ = write!(s, "{sep}  {key}: {}", serde_json::Value::from(r));
        }
        s.push_str("\n}");
        s
    }
}

/// 1-based ranks with average ties.
pub fn average_ranks(values: &[f64], higher_is_better: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let o = values[a].total_cmp(&values[b]);
        if higher_is_better {
            o.reverse()
        } else {
            o
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Ranks algorithms that all report the same class set.
pub fn compute_mean_ranks(scores: &[AlgorithmScores]) -> Result<RankTable> {
    compute_mean_ranks_for(scores, None)
}

/// As [`compute_mean_ranks`]; labels in `expected` that no algorithm reports
/// are dropped and listed in `excluded_labels`. A label reported by some but
/// not all algorithms is an error either way.
pub fn compute_mean_ranks_for(
    scores: &[AlgorithmScores],
    expected: Option<&[u32]>,
) -> Result<RankTable> {
    if scores.len() < 2 {
        return Err(Error::InvalidRanking(format!(
            "need at least 2 algorithms, got {}",
            scores.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for s in scores {
        if !seen.insert(s.algorithm_id.as_str()) {
            return Err(Error::InvalidRanking(format!(
                "duplicate algorithm {:?}",
                s.algorithm_id
            )));
        }
        for (l, c) in &s.classes {
            if !c.mean_dice.is_finite() || !c.mean_hd95.is_finite() {
                return Err(Error::InvalidRanking(format!(
                    "{:?} class {l}: scores must be finite",
                    s.algorithm_id
                )));
            }
        }
    }
    let reference: BTreeSet<u32> = scores[0].classes.keys().copied().collect();
    for s in &scores[1..] {
        let set: BTreeSet<u32> = s.classes.keys().copied().collect();
        if set != reference {
            let diff: Vec<u32> = set.symmetric_difference(&reference).copied().collect();
            return Err(Error::InvalidRanking(format!(
                "{:?} and {:?} report different classes (differing labels {diff:?})",
                scores[0].algorithm_id, s.algorithm_id
            )));
        }
    }
    let excluded_labels = match expected {
        Some(exp) => {
            if let Some(extra) = reference.iter().find(|l| !exp.contains(l)) {
                return Err(Error::InvalidRanking(format!(
                    "label {extra} is not in the expected class set"
                )));
            }
            let mut ex: Vec<u32> = exp.iter().copied().filter(|l| !reference.contains(l)).collect();
            ex.sort_unstable();
            ex.dedup();
            ex
        }
        None => Vec::new(),
    };
    if reference.is_empty() {
        return Err(Error::InvalidRanking("no classes to rank".into()));
    }

    let columns: Vec<RankColumn> = reference
        .iter()
        .flat_map(|&label| {
            [RankMetric::Dice, RankMetric::Hd95].map(|metric| RankColumn { label, metric })
        })
        .collect();
    let n = scores.len();
    let mut ranks = vec![vec![0.0; columns.len()]; n];
    for (c, col) in columns.iter().enumerate() {
        let values: Vec<f64> = scores
            .iter()
            .map(|s| {
                let cs = s.classes[&col.label];
                match col.metric {
                    RankMetric::Dice => cs.mean_dice,
                    RankMetric::Hd95 => cs.mean_hd95,
                }
            })
            .collect();
        let r = average_ranks(&values, col.metric == RankMetric::Dice);
        for a in 0..n {
            ranks[a][c] = r[a];
        }
    }
    let mean_ranks = ranks
        .iter()
        .map(|row| row.iter().sum::<f64>() / row.len() as f64)
        .collect();
    Ok(RankTable {
        algorithms: scores.iter().map(|s| s.algorithm_id.clone()).collect(),
        columns,
        ranks,
        mean_ranks,
        excluded_labels,
    })
}

#[derive(Deserialize)]
struct ScoreRow {
    algorithm_id: String,
    label_id: u32,
    mean_dice: f64,
    mean_hd95: f64,
}

/// Reads `algorithm_id,label_id,mean_dice,mean_hd95` rows. Algorithms keep
/// their order of first appearance.
pub fn read_scores_csv<R: Read>(r: R) -> Result<Vec<AlgorithmScores>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out: Vec<AlgorithmScores> = Vec::new();
    for row in rd.deserialize() {
        let row: ScoreRow = row?;
        let k = match out.iter().position(|a| a.algorithm_id == row.algorithm_id) {
            Some(k) => k,
            None => {
                out.push(AlgorithmScores {
                    algorithm_id: row.algorithm_id.clone(),
                    classes: BTreeMap::new(),
                });
                out.len() - 1
            }
        };
        let prev = out[k].classes.insert(
            row.label_id,
            ClassScore {
                mean_dice: row.mean_dice,
                mean_hd95: row.mean_hd95,
            },
        );
        if prev.is_some() {
            return Err(Error::InvalidRanking(format!(
                "{:?} lists label {} twice",
                row.algorithm_id, row.label_id
            )));
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidRanking("score file has no rows".into()));
    }
    Ok(out)
}

pub fn load_scores_csv(path: &Path) -> Result<Vec<AlgorithmScores>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_scores_csv(f)
}
