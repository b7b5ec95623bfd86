//! Black-box threshold membership inference.
//!
//! The attacker sees one confidence score per queried sample (the model's
//! largest softmax probability) and declares "member" iff the score is at
//! least a threshold `t`. The threshold is chosen to maximize balanced
//! accuracy `(TPR + TNR) / 2` over all candidate thresholds: every distinct
//! observed score plus one value above the maximum (the all-nonmember rule).
//! Ties go to the smallest threshold.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, Split};
use crate::error::{arg_err, Error, Result};
use crate::numcore::{Mat2, MlpModel};

/// Accuracy of a random guess.
pub const P_RANDOM: f64 = 0.5;

/// `|p − 0.5| / 0.5`.
pub fn advantage(p_inference: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_inference) {
        return arg_err(format!("inference accuracy {p_inference} outside [0, 1]"));
    }
    Ok((p_inference - P_RANDOM).abs() / P_RANDOM)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    member_scores: Vec<f64>,
    nonmember_scores: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ScoreRow {
    score: f64,
    is_member: u8,
}

impl ScoreSet {
    pub fn new(member_scores: Vec<f64>, nonmember_scores: Vec<f64>) -> Result<Self> {
        if member_scores.is_empty() || nonmember_scores.is_empty() {
            return arg_err("member and nonmember score sets must be non-empty");
        }
        if let Some(bad) = member_scores
            .iter()
            .chain(&nonmember_scores)
            .find(|s| !(0.0..=1.0).contains(*s))
        {
            return arg_err(format!("score {bad} outside [0, 1]"));
        }
        Ok(Self {
            member_scores,
            nonmember_scores,
        })
    }

    pub fn members(&self) -> &[f64] {
        &self.member_scores
    }

    pub fn nonmembers(&self) -> &[f64] {
        &self.nonmember_scores
    }

    /// Reads a `score,is_member` CSV with a header row.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut members = Vec::new();
        let mut nonmembers = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: ScoreRow = row?;
            match row.is_member {
                1 => members.push(row.score),
                0 => nonmembers.push(row.score),
                other => return Err(Error::Format(format!("is_member must be 0 or 1, got {other}"))),
            }
        }
        Self::new(members, nonmembers)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (scores, flag) in [(&self.member_scores, 1), (&self.nonmember_scores, 0)] {
            for &score in scores {
                w.serialize(ScoreRow { score, is_member: flag })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub p_thresh: f64,
    /// Balanced accuracy at `p_thresh`.
    pub p_inference: f64,
    pub adv_mi: f64,
    /// Plain accuracy over the pooled samples at `p_thresh`.
    pub plain_accuracy: f64,
    pub n_members: usize,
    pub n_nonmembers: usize,
}

/// Largest softmax probability for every row of `features`.
pub fn confidence_scores(model: &MlpModel, features: &Mat2) -> Result<Vec<f64>> {
    let probs = model.predict(features)?;
    Ok(probs
        .iter_rows()
        .map(|r| r.iter().copied().fold(0.0, f64::max).clamp(0.0, 1.0))
        .collect())
}

/// Scores of the model's training samples (members) and held-out samples.
pub fn extract_scores(model: &MlpModel, train: &Dataset, non_train: &Dataset) -> Result<ScoreSet> {
    ScoreSet::new(
        confidence_scores(model, train.features())?,
        confidence_scores(model, non_train.features())?,
    )
}

/// Balanced accuracy from confusion counts. Written once so every caller
/// rounds identically.
pub fn balanced_accuracy(tp: usize, n_members: usize, tn: usize, n_nonmembers: usize) -> f64 {
    (tp as f64 / n_members as f64 + tn as f64 / n_nonmembers as f64) / 2.0
}

/// Candidate thresholds in ascending order.
pub fn candidate_thresholds(scores: &ScoreSet) -> Vec<f64> {
    let mut all: Vec<f64> = scores.members().iter().chain(scores.nonmembers()).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let above = all.last().copied().unwrap_or(0.0) + 1.0;
    all.push(above);
    all
}

pub fn fit_threshold(scores: &ScoreSet) -> Result<AttackReport> {
    let (m, n) = (scores.members().len(), scores.nonmembers().len());
    if m == 0 || n == 0 {
        return arg_err("empty score set");
    }
    let mut mem = scores.members().to_vec();
    let mut non = scores.nonmembers().to_vec();
    mem.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);

    // Ascending sweep: `mi` / `ni` count members / nonmembers strictly below t.
    let (mut mi, mut ni) = (0, 0);
    let mut best: Option<(f64, f64, usize, usize)> = None;
    for t in candidate_thresholds(scores) {
        while mi < m && mem[mi] < t {
            mi += 1;
        }
        while ni < n && non[ni] < t {
            ni += 1;
        }
        let (tp, tn) = (m - mi, ni);
        let acc = balanced_accuracy(tp, m, tn, n);
        if best.is_none_or(|(_, b, _, _)| acc > b) {
            best = Some((t, acc, tp, tn));
        }
    }
    let (p_thresh, p_inference, tp, tn) = best.expect("at least one candidate");
    Ok(AttackReport {
        p_thresh,
        p_inference,
        adv_mi: advantage(p_inference)?,
        plain_accuracy: (tp + tn) as f64 / (m + n) as f64,
        n_members: m,
        n_nonmembers: n,
    })
}

/// Attacks a model with its own training partition as members.
pub fn attack_split(model: &MlpModel, split: &Split) -> Result<AttackReport> {
    fit_threshold(&extract_scores(model, &split.train, &split.non_train)?)
}
