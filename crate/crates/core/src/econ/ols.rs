//! Within (absorbed fixed-effects) OLS with cluster-robust covariance.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use super::absorb::{AbsorbOptions, Absorber, FixedEffectSpec};
use crate::error::EconError;

/// Relative residual norm below which a column counts as collinear.
pub const COLLINEAR_RTOL: f64 = 1e-7;

/// Finite-sample factor convention reported with every clustered covariance.
pub const SMALL_SAMPLE_CONVENTION: &str = "C/(C-1)*(n-1)/(n-K), K = slope regressors";

const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub name: String,
    pub values: Vec<f64>,
    /// Binary regressors get a semi-elasticity.
    pub binary: bool,
}

impl Regressor {
    pub fn new(name: &str, values: Vec<f64>, binary: bool) -> Self {
        Regressor {
            name: name.to_string(),
            values,
            binary,
        }
    }

    pub fn dummy(name: &str, values: Vec<f64>) -> Self {
        Self::new(name, values, true)
    }

    pub fn continuous(name: &str, values: Vec<f64>) -> Self {
        Self::new(name, values, false)
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Regressor {
            name: self.name.clone(),
            values: rows.iter().map(|&r| self.values[r]).collect(),
            binary: self.binary,
        }
    }
}

/// 100 (exp(β) − 1): percentage effect of a dummy on a log outcome.
pub fn semi_elasticity(beta: f64) -> f64 {
    100.0 * beta.exp_m1()
}

/// Delta-method standard error of [`semi_elasticity`].
pub fn semi_elasticity_se(beta: f64, se: f64) -> f64 {
    100.0 * beta.exp() * se
}

/// Two-sided normal p-value.
pub fn p_value(z: f64) -> f64 {
    let n = Normal::standard();
    2.0 * (1.0 - n.cdf(z.abs()))
}

#[derive(Debug, Clone)]
pub struct RegressionResult {
    /// Names of identified regressors, in input order.
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub binary: Vec<bool>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub r2_within: f64,
    /// Regressors dropped as collinear with the fixed effects or each other.
    pub dropped: Vec<String>,
    pub absorb_iterations: usize,
    pub fixed_effects: Vec<String>,
    /// Residuals of the full model (fixed effects included), one per row.
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        self.index(name).map(|i| (self.coef[i], self.se[i]))
    }

    pub fn t_stat(&self, i: usize) -> f64 {
        self.coef[i] / self.se[i]
    }

    pub fn p_value(&self, i: usize) -> f64 {
        p_value(self.t_stat(i))
    }

    pub fn ci95(&self, i: usize) -> (f64, f64) {
        (self.coef[i] - Z_975 * self.se[i], self.coef[i] + Z_975 * self.se[i])
    }

    /// Semi-elasticity and its delta-method SE for binary regressors.
    pub fn semi_elasticity(&self, i: usize) -> Option<(f64, f64)> {
        self.binary[i].then(|| {
            (
                semi_elasticity(self.coef[i]),
                semi_elasticity_se(self.coef[i], self.se[i]),
            )
        })
    }
}

pub(crate) struct PivotedQr {
    /// Kept column indices in pivot order.
    pub kept: Vec<usize>,
    pub q: Vec<Vec<f64>>,
    pub r: DMatrix<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Greedy column-pivoted Gram–Schmidt with reorthogonalization. Columns whose
/// residual norm relative to `ref_norms` falls below `rtol` are left out.
pub(crate) fn pivoted_qr(cols: &[Vec<f64>], ref_norms: &[f64], rtol: f64) -> PivotedQr {
    let mut resid: Vec<Vec<f64>> = cols.to_vec();
    let mut remaining: Vec<usize> = (0..cols.len()).collect();
    let mut kept = Vec::new();
    let mut q: Vec<Vec<f64>> = Vec::new();
    loop {
        let best = remaining
            .iter()
            .enumerate()
            .map(|(pos, &j)| {
                let rel = if ref_norms[j] > 0.0 {
                    dot(&resid[j], &resid[j]).sqrt() / ref_norms[j]
                } else {
                    0.0
                };
                (pos, j, rel)
            })
            .max_by(|a, b| a.2.total_cmp(&b.2).then(b.1.cmp(&a.1)));
        let Some((pos, j, rel)) = best else { break };
        if rel <= rtol {
            break;
        }
        remaining.remove(pos);
        let mut v = std::mem::take(&mut resid[j]);
        for _ in 0..2 {
            for qk in &q {
                let c = dot(qk, &v);
                axpy(&mut v, -c, qk);
            }
        }
        let norm = dot(&v, &v).sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        for &k in &remaining {
            let c = dot(&v, &resid[k]);
            axpy(&mut resid[k], -c, &v);
        }
        q.push(v);
        kept.push(j);
    }
    let k = kept.len();
    let r = DMatrix::from_fn(k, k, |a, b| if a <= b { dot(&q[a], &cols[kept[b]]) } else { 0.0 });
    PivotedQr { kept, q, r }
}

pub(crate) fn dense_cluster_codes(clusters: &[u32]) -> (Vec<u32>, usize) {
    super::absorb::encode(clusters.iter().copied())
}

/// Clustered sandwich `f · B (Σ_c s_c s_c') B` with scores `s_c = Σ_{i∈c} x_i e_i`.
pub(crate) fn cluster_sandwich(
    x: &[&[f64]],
    resid: &[f64],
    clusters: &[u32],
    bread: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, usize), EconError> {
    let (codes, n_clusters) = dense_cluster_codes(clusters);
    let n = resid.len();
    let k = x.len();
    if n_clusters < 2 {
        return Err(EconError::TooFewClusters(n_clusters));
    }
    if n <= k {
        return Err(EconError::TooFewObservations {
            observations: n,
            regressors: k,
        });
    }
    let mut scores = vec![0.0; n_clusters * k];
    for (i, &c) in codes.iter().enumerate() {
        let e = resid[i];
        let row = &mut scores[c as usize * k..(c as usize + 1) * k];
        for (j, col) in x.iter().enumerate() {
            row[j] += col[i] * e;
        }
    }
    let mut meat = DMatrix::zeros(k, k);
    for s in scores.chunks(k) {
        for a in 0..k {
            for b in 0..k {
                meat[(a, b)] += s[a] * s[b];
            }
        }
    }
    let c = n_clusters as f64;
    let factor = c / (c - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
    let mut v = bread * meat * bread * factor;
    v = (&v + v.transpose()) * 0.5;
    Ok((v, n_clusters))
}

/// OLS of `outcome` on `regressors` after absorbing `fe`, with standard errors
/// clustered on `clusters`.
pub fn estimate_fe(
    outcome: &[f64],
    regressors: &[Regressor],
    fe: &FixedEffectSpec,
    clusters: &[u32],
    opts: AbsorbOptions,
) -> Result<RegressionResult, EconError> {
    let n = outcome.len();
    if clusters.len() != n || regressors.iter().any(|r| r.values.len() != n) {
        return Err(EconError::Dimension("outcome, regressors and clusters differ in length".into()));
    }
    if let Some(m) = fe.n_rows() {
        if m != n {
            return Err(EconError::Dimension(format!("fixed effects have {m} rows, data {n}")));
        }
    }
    if regressors.len() >= n {
        return Err(EconError::TooFewObservations {
            observations: n,
            regressors: regressors.len(),
        });
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(regressors.len() + 1);
    cols.push(outcome.to_vec());
    cols.extend(regressors.iter().map(|r| r.values.clone()));
    let ref_norms: Vec<f64> = cols[1..].iter().map(|c| dot(c, c).sqrt()).collect();
    let absorber = Absorber::new(fe, opts)?;
    let iterations = absorber.absorb_columns(&mut cols)?;
    let y = cols.remove(0);

    let qr = pivoted_qr(&cols, &ref_norms, COLLINEAR_RTOL);
    let k = qr.kept.len();
    if k == 0 {
        return Err(EconError::NoVariation(
            "every regressor is collinear with the fixed effects".into(),
        ));
    }
    let qty = DVector::from_iterator(k, qr.q.iter().map(|qj| dot(qj, &y)));
    let rinv = qr
        .r
        .clone()
        .try_inverse()
        .ok_or_else(|| EconError::NoVariation("singular design".into()))?;
    let beta_piv = &rinv * &qty;

    // Reorder from pivot order back to input order.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&p| qr.kept[p]);
    let beta: Vec<f64> = order.iter().map(|&p| beta_piv[p]).collect();
    let bread_piv = &rinv * rinv.transpose();
    let bread = DMatrix::from_fn(k, k, |a, b| bread_piv[(order[a], order[b])]);
    let kept_sorted: Vec<usize> = order.iter().map(|&p| qr.kept[p]).collect();

    let mut resid = y.clone();
    for (j, &col) in kept_sorted.iter().enumerate() {
        axpy(&mut resid, -beta[j], &cols[col]);
    }
    let x: Vec<&[f64]> = kept_sorted.iter().map(|&c| cols[c].as_slice()).collect();
    let (cov, n_clusters) = cluster_sandwich(&x, &resid, clusters, &bread)?;

    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let ssr = dot(&resid, &resid);
    let r2_within = if tss > 0.0 { 1.0 - ssr / tss } else { 0.0 };

    let dropped = (0..regressors.len())
        .filter(|j| !kept_sorted.contains(j))
        .map(|j| regressors[j].name.clone())
        .collect();
    Ok(RegressionResult {
        names: kept_sorted.iter().map(|&j| regressors[j].name.clone()).collect(),
        se: (0..k).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
        coef: beta,
        cov,
        binary: kept_sorted.iter().map(|&j| regressors[j].binary).collect(),
        n_obs: n,
        n_clusters,
        r2_within,
        dropped,
        absorb_iterations: iterations,
        fixed_effects: fe.describe(),
        residuals: resid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econ::absorb::Factor;

    #[test]
    fn semi_elasticity_values() {
        assert!((semi_elasticity(-0.0204) - (-2.019_334)).abs() < 1e-5);
        assert_eq!(semi_elasticity(0.0), 0.0);
    }

    #[test]
    fn recovers_exact_linear_relation() {
        let n: usize = 40;
        let g: Vec<u32> = (0..n).map(|i| (i % 4) as u32).collect();
        let x1: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64).collect();
        let x2: Vec<f64> = (0..n).map(|i| ((i * 3) % 5) as f64 * 0.5).collect();
        let y: Vec<f64> = (0..n).map(|i| 2.0 * x1[i] - 0.5 * x2[i] + g[i] as f64 * 3.0).collect();
        let fe = FixedEffectSpec::new(vec![Factor::from_keys("g", g.iter().copied())], vec![]);
        let clusters: Vec<u32> = (0..n).map(|i| (i % 10) as u32).collect();
        let res = estimate_fe(
            &y,
            &[Regressor::continuous("x1", x1), Regressor::continuous("x2", x2)],
            &fe,
            &clusters,
            AbsorbOptions::default(),
        )
        .unwrap();
        assert!((res.coef[0] - 2.0).abs() < 1e-10);
        assert!((res.coef[1] + 0.5).abs() < 1e-10);
        assert!((res.r2_within - 1.0).abs() < 1e-10);
    }

    #[test]
    fn group_constant_regressor_is_dropped() {
        let n: usize = 30;
        let g: Vec<u32> = (0..n).map(|i| (i % 3) as u32).collect();
        let const_in_group: Vec<f64> = g.iter().map(|&c| c as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let dup: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let y: Vec<f64> = (0..n).map(|i| x[i] + (i as f64).cos()).collect();
        let fe = FixedEffectSpec::new(vec![Factor::from_keys("g", g.iter().copied())], vec![]);
        let clusters: Vec<u32> = (0..n).map(|i| (i % 6) as u32).collect();
        let res = estimate_fe(
            &y,
            &[
                Regressor::continuous("c", const_in_group),
                Regressor::continuous("x", x),
                Regressor::continuous("x2", dup),
            ],
            &fe,
            &clusters,
            AbsorbOptions::default(),
        )
        .unwrap();
        assert_eq!(res.names.len(), 1);
        assert!(res.dropped.contains(&"c".to_string()));
    }

    #[test]
    fn single_cluster_is_an_error() {
        let y = vec![1.0, 2.0, 3.0, 5.0];
        let x = Regressor::continuous("x", vec![0.0, 1.0, 2.0, 4.0]);
        let err = estimate_fe(&y, &[x], &FixedEffectSpec::default(), &[0; 4], AbsorbOptions::default());
        assert_eq!(err.unwrap_err(), EconError::TooFewClusters(1));
    }

    #[test]
    fn too_many_regressors() {
        let y = vec![1.0, 2.0];
        let regs = vec![
            Regressor::continuous("a", vec![1.0, 0.0]),
            Regressor::continuous("b", vec![0.0, 1.0]),
        ];
        let err = estimate_fe(&y, &regs, &FixedEffectSpec::default(), &[0, 1], AbsorbOptions::default());
        assert!(matches!(err, Err(EconError::TooFewObservations { .. })));
    }
}
