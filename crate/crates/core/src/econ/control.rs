//! Two-stage control-function estimator with a joint cluster bootstrap.
//!
//! The first stage regresses the endogenous market-level variable on the
//! instruments and controls; its residual joins the second stage through a
//! shared row key.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::absorb::{AbsorbOptions, FixedEffectSpec};
use super::bootstrap::{bootstrap_draws, BootstrapOptions, BootstrapResult};
use super::ols::{estimate_fe, Regressor, RegressionResult};
use crate::error::EconError;

pub const RESIDUAL_NAME: &str = "first_stage_residual";

/// One estimation stage. `key` identifies the unit that links the stages
/// (e.g. market-month); `clusters` must use the same ids in both stages.
#[derive(Debug, Clone)]
pub struct StageData {
    pub outcome: Vec<f64>,
    pub regressors: Vec<Regressor>,
    pub fe: FixedEffectSpec,
    pub clusters: Vec<u32>,
    pub key: Vec<u64>,
}

impl StageData {
    fn subset(&self, rows: &[usize]) -> StageData {
        StageData {
            outcome: rows.iter().map(|&r| self.outcome[r]).collect(),
            regressors: self.regressors.iter().map(|r| r.subset(rows)).collect(),
            fe: self.fe.subset(rows),
            clusters: rows.iter().map(|&r| self.clusters[r]).collect(),
            key: rows.iter().map(|&r| self.key[r]).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControlFunctionResult {
    pub first_stage: RegressionResult,
    /// Instruments identified in the first stage.
    pub instruments: Vec<String>,
    /// Cluster-robust Wald F on the instruments.
    pub first_stage_f: f64,
    /// First-stage residual per key.
    pub residuals: Vec<(u64, f64)>,
    pub second_stage: RegressionResult,
    /// Second-stage rows without a first-stage residual.
    pub unmatched_rows: usize,
    pub bootstrap: Option<BootstrapResult>,
}

impl ControlFunctionResult {
    /// Bootstrap SE for a second-stage coefficient.
    pub fn bootstrap_se(&self, name: &str) -> Option<f64> {
        let b = self.bootstrap.as_ref()?;
        self.second_stage.index(name).map(|i| b.se[i])
    }
}

/// Cluster-robust Wald statistic for `names` = 0, divided by their count.
pub fn wald_f(res: &RegressionResult, names: &[String]) -> Option<f64> {
    let idx: Vec<usize> = names.iter().filter_map(|n| res.index(n)).collect();
    if idx.is_empty() {
        return None;
    }
    let q = idx.len();
    let v = DMatrix::from_fn(q, q, |a, b| res.cov[(idx[a], idx[b])]);
    let b = nalgebra::DVector::from_iterator(q, idx.iter().map(|&i| res.coef[i]));
    let vinv = v.try_inverse()?;
    Some((b.transpose() * vinv * &b)[(0, 0)] / q as f64)
}

struct Estimates {
    first: RegressionResult,
    instruments: Vec<String>,
    f: f64,
    residuals: Vec<(u64, f64)>,
    second: RegressionResult,
    unmatched: usize,
}

fn estimate_once(
    first: &StageData,
    instruments: &[String],
    second: &StageData,
    opts: AbsorbOptions,
) -> Result<Estimates, EconError> {
    let fs = estimate_fe(&first.outcome, &first.regressors, &first.fe, &first.clusters, opts)?;
    let kept: Vec<String> = instruments.iter().filter(|n| fs.index(n).is_some()).cloned().collect();
    if kept.is_empty() {
        return Err(EconError::RankDeficientFirstStage(
            "no instrument has variation after absorbing the fixed effects".into(),
        ));
    }
    let f = wald_f(&fs, &kept).ok_or_else(|| {
        EconError::RankDeficientFirstStage("singular instrument covariance".into())
    })?;
    if !(f.is_finite() && f > 0.0) {
        return Err(EconError::RankDeficientFirstStage(format!("first-stage F = {f}")));
    }
    let mut by_key: HashMap<u64, f64> = HashMap::with_capacity(first.key.len());
    for (&k, &e) in first.key.iter().zip(&fs.residuals) {
        by_key.insert(k, e);
    }
    let rows: Vec<usize> = (0..second.outcome.len())
        .filter(|&i| by_key.contains_key(&second.key[i]))
        .collect();
    let unmatched = second.outcome.len() - rows.len();
    let s = if unmatched == 0 { second.clone() } else { second.subset(&rows) };
    let mut regs = s.regressors.clone();
    regs.push(Regressor::continuous(
        RESIDUAL_NAME,
        s.key.iter().map(|k| by_key[k]).collect(),
    ));
    let ss = estimate_fe(&s.outcome, &regs, &s.fe, &s.clusters, opts)?;
    let residuals = first.key.iter().copied().zip(fs.residuals.iter().copied()).collect();
    Ok(Estimates {
        first: fs,
        instruments: kept,
        f,
        residuals,
        second: ss,
        unmatched,
    })
}

/// Control-function estimation; with `boot`, both stages are re-run on each
/// cluster-bootstrap replicate.
pub fn control_function(
    first: &StageData,
    instruments: &[String],
    second: &StageData,
    opts: AbsorbOptions,
    boot: Option<BootstrapOptions>,
) -> Result<ControlFunctionResult, EconError> {
    let est = estimate_once(first, instruments, second, opts)?;
    let bootstrap = match boot {
        None => None,
        Some(bo) => {
            let mut ids: Vec<u32> = Vec::new();
            let mut pos: HashMap<u32, usize> = HashMap::new();
            for &c in first.clusters.iter().chain(&second.clusters) {
                pos.entry(c).or_insert_with(|| {
                    ids.push(c);
                    ids.len() - 1
                });
            }
            let mut first_rows = vec![Vec::new(); ids.len()];
            let mut second_rows = vec![Vec::new(); ids.len()];
            for (i, c) in first.clusters.iter().enumerate() {
                first_rows[pos[c]].push(i);
            }
            for (i, c) in second.clusters.iter().enumerate() {
                second_rows[pos[c]].push(i);
            }
            let mut rank: HashMap<u64, u64> = HashMap::new();
            for &k in first.key.iter().chain(&second.key) {
                let next = rank.len() as u64;
                rank.entry(k).or_insert(next);
            }
            let n_keys = rank.len() as u64;
            let names = est.second.names.clone();
            let inner = AbsorbOptions { threads: 1, ..opts };
            Some(bootstrap_draws(ids.len(), bo, |draws| {
                let stage = |data: &StageData, members: &[Vec<usize>]| {
                    let mut rows = Vec::new();
                    let mut copy = Vec::new();
                    for (d, &c) in draws.iter().enumerate() {
                        rows.extend_from_slice(&members[c]);
                        copy.extend(std::iter::repeat_n(d as u64, members[c].len()));
                    }
                    let mut s = data.subset(&rows);
                    // Duplicated clusters become distinct clusters and keys.
                    s.clusters = copy.iter().map(|&d| d as u32).collect();
                    s.key = s.key.iter().zip(&copy).map(|(k, d)| d * n_keys + rank[k]).collect();
                    s
                };
                let f = stage(first, &first_rows);
                let s = stage(second, &second_rows);
                let e = estimate_once(&f, instruments, &s, inner)?;
                names
                    .iter()
                    .map(|n| {
                        e.second
                            .coefficient(n)
                            .map(|c| c.0)
                            .ok_or_else(|| EconError::NoVariation(format!("{n} dropped in replicate")))
                    })
                    .collect()
            })?)
        }
    };
    Ok(ControlFunctionResult {
        first_stage: est.first,
        instruments: est.instruments,
        first_stage_f: est.f,
        residuals: est.residuals,
        second_stage: est.second,
        unmatched_rows: est.unmatched,
        bootstrap,
    })
}
