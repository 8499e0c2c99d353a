//! Strict-exogeneity lead test and two-way fixed-effects weight diagnostics.

use std::collections::HashMap;

use super::absorb::{AbsorbOptions, Absorber, FixedEffectSpec};
use super::ols::{estimate_fe, p_value, Regressor, RegressionResult};
use crate::error::EconError;

pub const LEAD_NAME: &str = "lead";

#[derive(Debug, Clone)]
pub struct LeadTest {
    pub coef: f64,
    pub se: f64,
    pub p_value: f64,
    /// Rows without an observed next month, dropped before estimation.
    pub dropped_rows: usize,
    pub result: RegressionResult,
}

/// Re-estimates the model with the next-month value of `treatment` (looked up
/// per market and month index) as an extra regressor.
#[allow(clippy::too_many_arguments)]
pub fn lead_exogeneity_test(
    outcome: &[f64],
    regressors: &[Regressor],
    treatment: &str,
    market: &[u32],
    month: &[i64],
    fe: &FixedEffectSpec,
    clusters: &[u32],
    opts: AbsorbOptions,
) -> Result<LeadTest, EconError> {
    let d = regressors
        .iter()
        .find(|r| r.name == treatment)
        .ok_or_else(|| EconError::Dimension(format!("treatment `{treatment}` not among regressors")))?;
    if market.len() != outcome.len() || month.len() != outcome.len() {
        return Err(EconError::Dimension("market/month keys differ in length".into()));
    }
    let mut value: HashMap<(u32, i64), f64> = HashMap::new();
    for i in 0..outcome.len() {
        value.entry((market[i], month[i])).or_insert(d.values[i]);
    }
    let mut rows = Vec::new();
    let mut lead = Vec::new();
    for i in 0..outcome.len() {
        if let Some(&v) = value.get(&(market[i], month[i] + 1)) {
            rows.push(i);
            lead.push(v);
        }
    }
    let y: Vec<f64> = rows.iter().map(|&r| outcome[r]).collect();
    let mut regs: Vec<Regressor> = regressors.iter().map(|r| r.subset(&rows)).collect();
    regs.push(Regressor::new(LEAD_NAME, lead, d.binary));
    let cl: Vec<u32> = rows.iter().map(|&r| clusters[r]).collect();
    let result = estimate_fe(&y, &regs, &fe.subset(&rows), &cl, opts)?;
    let (coef, se) = result
        .coefficient(LEAD_NAME)
        .ok_or_else(|| EconError::NoVariation("lead is collinear with the fixed effects".into()))?;
    Ok(LeadTest {
        coef,
        se,
        p_value: p_value(coef / se),
        dropped_rows: outcome.len() - rows.len(),
        result,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwfeWeights {
    /// Treated rows and their weights (mean 1 over treated rows).
    pub rows: Vec<usize>,
    pub residuals: Vec<f64>,
    pub weights: Vec<f64>,
    pub share_negative: f64,
}

/// Weights implicitly attached to treated cells by the fixed-effects
/// estimator: the treatment residualized on the fixed effects, normalized to
/// mean one over treated cells.
pub fn twfe_weights(treatment: &[f64], fe: &FixedEffectSpec, opts: AbsorbOptions) -> Result<TwfeWeights, EconError> {
    if treatment.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(EconError::Dimension("treatment must be binary".into()));
    }
    let rows: Vec<usize> = (0..treatment.len()).filter(|&i| treatment[i] == 1.0).collect();
    if rows.is_empty() {
        return Err(EconError::NoVariation("no treated cells".into()));
    }
    let mut resid = treatment.to_vec();
    Absorber::new(fe, opts)?.absorb_column(&mut resid)?;
    let treated: Vec<f64> = rows.iter().map(|&r| resid[r]).collect();
    let mean = treated.iter().sum::<f64>() / treated.len() as f64;
    if resid.iter().all(|e| e.abs() < 1e-10) || mean.abs() < 1e-12 {
        return Err(EconError::NoVariation(
            "treatment is explained by the fixed effects".into(),
        ));
    }
    let weights: Vec<f64> = treated.iter().map(|e| e / mean).collect();
    let share_negative = weights.iter().filter(|&&w| w < 0.0).count() as f64 / weights.len() as f64;
    Ok(TwfeWeights {
        rows,
        residuals: treated,
        weights,
        share_negative,
    })
}
