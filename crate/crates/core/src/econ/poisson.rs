//! Poisson regression with group fixed effects by concentrated likelihood.
//!
//! With `μ_i = exp(γ_g + x_i'β)` the group effect has the closed form
//! `γ̂_g = log(Σ_g y / Σ_g exp(x'β))`, leaving a multinomial likelihood in β
//! that is maximized by damped Newton steps.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::absorb::encode;
use super::ols::{dense_cluster_codes, pivoted_qr, Regressor, COLLINEAR_RTOL};
use crate::error::EconError;

#[derive(Debug, Clone, Copy)]
pub struct PoissonOptions {
    /// Convergence threshold on the Euclidean gradient norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        PoissonOptions {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoissonFEResult {
    /// Identified regressors followed by time dummies (`time:<level>`).
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    /// Group-clustered robust covariance.
    pub cov: DMatrix<f64>,
    pub n_time_dummies: usize,
    /// Concentrated group effects by original group code.
    pub group_effects: Vec<(u32, f64)>,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub n_groups: usize,
    /// Groups whose outcomes are all zero.
    pub dropped_groups: usize,
    pub dropped: Vec<String>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Rows used in estimation and their fitted means.
    pub rows: Vec<usize>,
    pub fitted: Vec<f64>,
}

impl PoissonFEResult {
    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| (self.coef[i], self.se[i]))
    }

    pub fn time_effects(&self) -> impl Iterator<Item = (&str, f64)> {
        let start = self.names.len() - self.n_time_dummies;
        self.names[start..]
            .iter()
            .zip(&self.coef[start..])
            .map(|(n, c)| (n.trim_start_matches("time:"), *c))
    }
}

struct Problem {
    y: Vec<f64>,
    /// Column-major design.
    x: Vec<Vec<f64>>,
    /// Row ranges per group after sorting rows by group.
    groups: Vec<std::ops::Range<usize>>,
    group_total: Vec<f64>,
}

struct Eval {
    loglik: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl Problem {
    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.y.len()];
        for (col, b) in self.x.iter().zip(beta) {
            for (e, v) in eta.iter_mut().zip(col) {
                *e += b * v;
            }
        }
        eta
    }

    /// Concentrated log-likelihood up to terms constant in β.
    fn loglik(&self, beta: &[f64]) -> f64 {
        let eta = self.eta(beta);
        self.groups
            .iter()
            .zip(&self.group_total)
            .map(|(g, &n)| {
                let m = eta[g.clone()].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + eta[g.clone()].iter().map(|e| (e - m).exp()).sum::<f64>().ln();
                g.clone().map(|i| self.y[i] * eta[i]).sum::<f64>() - n * lse
            })
            .sum()
    }

    /// Within-group choice probabilities.
    fn probs(&self, beta: &[f64]) -> Vec<f64> {
        let eta = self.eta(beta);
        let mut p = vec![0.0; eta.len()];
        for g in &self.groups {
            let m = eta[g.clone()].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = eta[g.clone()].iter().map(|e| (e - m).exp()).sum();
            for i in g.clone() {
                p[i] = (eta[i] - m).exp() / s;
            }
        }
        p
    }

    fn evaluate(&self, beta: &[f64]) -> Eval {
        let k = self.x.len();
        let p = self.probs(beta);
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        let mut xbar = vec![0.0; k];
        for (g, &n) in self.groups.iter().zip(&self.group_total) {
            for (a, col) in self.x.iter().enumerate() {
                xbar[a] = g.clone().map(|i| p[i] * col[i]).sum();
            }
            for i in g.clone() {
                let r = self.y[i] - n * p[i];
                for a in 0..k {
                    let da = self.x[a][i] - xbar[a];
                    grad[a] += r * self.x[a][i];
                    for b in 0..=a {
                        hess[(a, b)] += n * p[i] * da * (self.x[b][i] - xbar[b]);
                    }
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        Eval {
            loglik: self.loglik(beta),
            grad,
            hess,
        }
    }
}

/// Poisson FE estimator for counts `y` with group codes `groups` and optional
/// time periods (entered as dummies, first level omitted).
pub fn poisson_fe(
    y: &[f64],
    regressors: &[Regressor],
    groups: &[u32],
    time: Option<&[u32]>,
    opts: PoissonOptions,
) -> Result<PoissonFEResult, EconError> {
    let n_all = y.len();
    if groups.len() != n_all
        || regressors.iter().any(|r| r.values.len() != n_all)
        || time.is_some_and(|t| t.len() != n_all)
    {
        return Err(EconError::Dimension("poisson inputs differ in length".into()));
    }
    if let Some(bad) = y.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(EconError::Poisson(format!("negative or non-finite count {bad}")));
    }

    let mut totals: std::collections::HashMap<u32, f64> = Default::default();
    for (&g, &v) in groups.iter().zip(y) {
        *totals.entry(g).or_default() += v;
    }
    let (_, n_groups_all) = encode(groups.iter().copied());
    let mut rows: Vec<usize> = (0..n_all).filter(|&i| totals[&groups[i]] > 0.0).collect();
    rows.sort_by_key(|&i| (groups[i], i));
    let dropped_groups = totals.values().filter(|&&t| t == 0.0).count();
    if rows.is_empty() {
        return Err(EconError::Poisson("every group has zero total count".into()));
    }

    let mut names: Vec<String> = regressors.iter().map(|r| r.name.clone()).collect();
    let mut cols: Vec<Vec<f64>> = regressors
        .iter()
        .map(|r| rows.iter().map(|&i| r.values[i]).collect())
        .collect();
    let n_reg = cols.len();
    if let Some(t) = time {
        let levels: std::collections::BTreeSet<u32> = rows.iter().map(|&i| t[i]).collect();
        for &lvl in levels.iter().skip(1) {
            names.push(format!("time:{lvl}"));
            cols.push(rows.iter().map(|&i| if t[i] == lvl { 1.0 } else { 0.0 }).collect());
        }
    }

    let mut ranges = Vec::new();
    let mut start = 0;
    for pos in 1..=rows.len() {
        if pos == rows.len() || groups[rows[pos]] != groups[rows[start]] {
            ranges.push(start..pos);
            start = pos;
        }
    }

    // Identification: only within-group variation enters the likelihood.
    let ref_norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let demeaned: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let mut d = c.clone();
            for g in &ranges {
                let m = c[g.clone()].iter().sum::<f64>() / g.len() as f64;
                for v in &mut d[g.clone()] {
                    *v -= m;
                }
            }
            d
        })
        .collect();
    let mut kept = pivoted_qr(&demeaned, &ref_norms, COLLINEAR_RTOL).kept;
    kept.sort_unstable();
    let dropped: Vec<String> = (0..cols.len())
        .filter(|j| !kept.contains(j))
        .map(|j| names[j].clone())
        .collect();
    let n_time_dummies = kept.iter().filter(|&&j| j >= n_reg).count();
    let names: Vec<String> = kept.iter().map(|&j| names[j].clone()).collect();
    let x: Vec<Vec<f64>> = kept.iter().map(|&j| std::mem::take(&mut cols[j])).collect();

    let yk: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let group_total: Vec<f64> = ranges.iter().map(|g| yk[g.clone()].iter().sum()).collect();
    let prob = Problem {
        y: yk,
        x,
        groups: ranges,
        group_total,
    };
    let k = prob.x.len();
    let mut beta = vec![0.0; k];
    let mut ev = prob.evaluate(&beta);
    let mut iterations = 0;
    let mut grad_norm = ev.grad.norm();
    while k > 0 && grad_norm >= opts.tol {
        if iterations == opts.max_iter {
            return Err(EconError::Poisson(format!(
                "no convergence after {iterations} Newton iterations (gradient norm {grad_norm:e}); possible separation"
            )));
        }
        iterations += 1;
        let step = ev
            .hess
            .clone()
            .cholesky()
            .map(|c| c.solve(&ev.grad))
            .ok_or_else(|| EconError::Poisson("Hessian not positive definite".into()))?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let ll = prob.loglik(&cand);
            if ll.is_finite() && ll >= ev.loglik - 1e-12 * ev.loglik.abs() {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(cand) = accepted else {
            // No ascent direction left at machine precision.
            break;
        };
        let converged_step = cand.iter().zip(&beta).all(|(a, b)| (a - b).abs() <= 1e-15 * (1.0 + b.abs()));
        beta = cand;
        ev = prob.evaluate(&beta);
        grad_norm = ev.grad.norm();
        if converged_step {
            break;
        }
    }

    let p = prob.probs(&beta);
    let fitted: Vec<f64> = prob
        .groups
        .iter()
        .zip(&prob.group_total)
        .flat_map(|(g, &n)| g.clone().map(move |i| (i, n)))
        .map(|(i, n)| n * p[i])
        .collect();
    let eta = prob.eta(&beta);
    let group_effects: Vec<(u32, f64)> = prob
        .groups
        .iter()
        .zip(&prob.group_total)
        .map(|(g, &n)| {
            let s: f64 = g.clone().map(|i| eta[i].exp()).sum();
            (groups[rows[g.start]], (n / s).ln())
        })
        .collect();
    let log_likelihood = prob
        .y
        .iter()
        .zip(&fitted)
        .map(|(&yi, &mu)| {
            let term = if yi > 0.0 { yi * mu.ln() } else { 0.0 };
            term - mu - ln_gamma(yi + 1.0)
        })
        .sum();

    let (cov, se) = if k == 0 {
        (DMatrix::zeros(0, 0), vec![])
    } else {
        let hinv = ev
            .hess
            .clone()
            .try_inverse()
            .ok_or_else(|| EconError::Poisson("singular Hessian at optimum".into()))?;
        let group_codes: Vec<u32> = rows.iter().map(|&i| groups[i]).collect();
        let (codes, n_g) = dense_cluster_codes(&group_codes);
        let mut scores = vec![DVector::<f64>::zeros(k); n_g];
        for (i, &c) in codes.iter().enumerate() {
            let r = prob.y[i] - fitted[i];
            for (a, col) in prob.x.iter().enumerate() {
                scores[c as usize][a] += col[i] * r;
            }
        }
        let mut meat = DMatrix::zeros(k, k);
        for s in &scores {
            meat += s * s.transpose();
        }
        let v = &hinv * meat * &hinv;
        let v = (&v + v.transpose()) * 0.5;
        let se = (0..k).map(|i| v[(i, i)].max(0.0).sqrt()).collect();
        (v, se)
    };

    Ok(PoissonFEResult {
        names,
        coef: beta,
        se,
        cov,
        n_time_dummies,
        group_effects,
        log_likelihood,
        n_obs: rows.len(),
        n_groups: n_groups_all - dropped_groups,
        dropped_groups,
        dropped,
        iterations,
        gradient_norm: grad_norm,
        rows,
        fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_group_no_regressors_fits_mean() {
        let y = [2.0, 4.0, 6.0];
        let res = poisson_fe(&y, &[], &[7, 7, 7], None, PoissonOptions::default()).unwrap();
        for f in &res.fitted {
            assert!((f - 4.0).abs() < 1e-12);
        }
        assert_eq!(res.group_effects, vec![(7, 4.0f64.ln())]);
    }

    #[test]
    fn within_constant_covariate_is_dropped() {
        let y = [1.0, 3.0, 2.0, 5.0, 0.0, 4.0];
        let g = [0, 0, 1, 1, 2, 2];
        let c = Regressor::continuous("c", vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let x = Regressor::continuous("x", vec![0.1, 0.9, 0.4, 0.3, 0.8, 0.2]);
        let res = poisson_fe(&y, &[c, x], &g, None, PoissonOptions::default()).unwrap();
        assert_eq!(res.dropped, vec!["c".to_string()]);
        assert_eq!(res.names, vec!["x".to_string()]);
    }

    #[test]
    fn zero_groups_are_dropped_and_totals_add_up() {
        let y = [0.0, 0.0, 3.0, 1.0, 2.0, 7.0];
        let g = [0, 0, 1, 1, 2, 2];
        let x = Regressor::continuous("x", vec![0.5, 0.1, 0.2, 0.9, 0.4, 0.6]);
        let res = poisson_fe(&y, &[x], &g, None, PoissonOptions::default()).unwrap();
        assert_eq!(res.dropped_groups, 1);
        assert_eq!(res.n_obs, 4);
        let fitted_total: f64 = res.fitted.iter().sum();
        assert!((fitted_total - 13.0).abs() < 1e-10);
    }

    #[test]
    fn negative_counts_rejected() {
        assert!(poisson_fe(&[-1.0], &[], &[0], None, PoissonOptions::default()).is_err());
    }
}
