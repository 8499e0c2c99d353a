//! High-dimensional fixed-effect absorption.
//!
//! Each categorical factor is projected out by group demeaning; each trend
//! group by removing a group-specific intercept and slope in `t`. With more
//! than one projection the symmetric sweep is accelerated by conjugate
//! gradient, stopping once the largest update falls below `tol`.

use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;

use crate::error::EconError;

/// A categorical fixed effect with dense level codes.
#[derive(Debug, Clone)]
pub struct Factor {
    pub name: String,
    pub codes: Vec<u32>,
    pub n_levels: usize,
}

impl Factor {
    /// Dense codes in order of first appearance.
    pub fn from_keys<K, I>(name: &str, keys: I) -> Self
    where
        K: Hash + Eq,
        I: IntoIterator<Item = K>,
    {
        let (codes, n_levels) = encode(keys);
        Factor {
            name: name.to_string(),
            codes,
            n_levels,
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Factor::from_keys(&self.name, rows.iter().map(|&r| self.codes[r]))
    }
}

/// Group-specific linear trend: projects out {1, t} within each group.
#[derive(Debug, Clone)]
pub struct TrendGroup {
    pub name: String,
    pub codes: Vec<u32>,
    pub n_levels: usize,
    pub t: Vec<f64>,
}

impl TrendGroup {
    pub fn from_keys<K, I>(name: &str, keys: I, t: Vec<f64>) -> Self
    where
        K: Hash + Eq,
        I: IntoIterator<Item = K>,
    {
        let (codes, n_levels) = encode(keys);
        assert_eq!(codes.len(), t.len(), "trend length mismatch");
        TrendGroup {
            name: name.to_string(),
            codes,
            n_levels,
            t,
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        TrendGroup::from_keys(
            &self.name,
            rows.iter().map(|&r| self.codes[r]),
            rows.iter().map(|&r| self.t[r]).collect(),
        )
    }
}

pub fn encode<K, I>(keys: I) -> (Vec<u32>, usize)
where
    K: Hash + Eq,
    I: IntoIterator<Item = K>,
{
    let mut map: HashMap<K, u32> = HashMap::new();
    let codes = keys
        .into_iter()
        .map(|k| {
            let next = map.len() as u32;
            *map.entry(k).or_insert(next)
        })
        .collect();
    (codes, map.len())
}

/// Fixed effects and trend groups to absorb.
#[derive(Debug, Clone, Default)]
pub struct FixedEffectSpec {
    pub factors: Vec<Factor>,
    pub trends: Vec<TrendGroup>,
}

impl FixedEffectSpec {
    pub fn new(factors: Vec<Factor>, trends: Vec<TrendGroup>) -> Self {
        FixedEffectSpec { factors, trends }
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty() && self.trends.is_empty()
    }

    pub fn n_rows(&self) -> Option<usize> {
        self.factors
            .first()
            .map(|f| f.codes.len())
            .or_else(|| self.trends.first().map(|t| t.codes.len()))
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        FixedEffectSpec {
            factors: self.factors.iter().map(|f| f.subset(rows)).collect(),
            trends: self.trends.iter().map(|t| t.subset(rows)).collect(),
        }
    }

    pub fn describe(&self) -> Vec<String> {
        self.factors
            .iter()
            .map(|f| format!("{} ({} levels)", f.name, f.n_levels))
            .chain(
                self.trends
                    .iter()
                    .map(|t| format!("{} x t ({} groups)", t.name, t.n_levels)),
            )
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AbsorbOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Worker budget for absorbing several columns; 0 means the global pool.
    pub threads: usize,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        AbsorbOptions {
            tol: 1e-8,
            max_iter: 10_000,
            threads: 1,
        }
    }
}

struct FactorStats<'a> {
    codes: &'a [u32],
    inv_count: Vec<f64>,
}

struct TrendStats<'a> {
    codes: &'a [u32],
    t: &'a [f64],
    inv_count: Vec<f64>,
    mean_t: Vec<f64>,
    /// 1 / Σ (t - mean_t)², or 0 when t is constant within the group.
    inv_sxx: Vec<f64>,
}

/// CG stops once `‖r‖ ≤ RESIDUAL_FLOOR · ‖r₀‖`.
const RESIDUAL_FLOOR: f64 = 1e-13;
/// Rayleigh quotient below which a search direction counts as null space.
const NULL_SPACE_RATIO: f64 = 1e-12;

/// Precomputed group statistics for repeated absorption.
pub struct Absorber<'a> {
    n: usize,
    factors: Vec<FactorStats<'a>>,
    trends: Vec<TrendStats<'a>>,
    opts: AbsorbOptions,
}

impl<'a> Absorber<'a> {
    pub fn new(spec: &'a FixedEffectSpec, opts: AbsorbOptions) -> Result<Self, EconError> {
        let n = spec.n_rows().unwrap_or(0);
        let factors = spec
            .factors
            .iter()
            .map(|f| {
                if f.codes.len() != n {
                    return Err(EconError::Dimension(format!("factor {} length", f.name)));
                }
                let mut count = vec![0.0; f.n_levels];
                for &c in &f.codes {
                    count[c as usize] += 1.0;
                }
                Ok(FactorStats {
                    codes: &f.codes,
                    inv_count: count.iter().map(|&c| if c > 0.0 { 1.0 / c } else { 0.0 }).collect(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let trends = spec
            .trends
            .iter()
            .map(|g| {
                if g.codes.len() != n || g.t.len() != n {
                    return Err(EconError::Dimension(format!("trend {} length", g.name)));
                }
                let mut count = vec![0.0; g.n_levels];
                let mut st = vec![0.0; g.n_levels];
                for (&c, &t) in g.codes.iter().zip(&g.t) {
                    count[c as usize] += 1.0;
                    st[c as usize] += t;
                }
                let mean_t: Vec<f64> = st
                    .iter()
                    .zip(&count)
                    .map(|(s, c)| if *c > 0.0 { s / c } else { 0.0 })
                    .collect();
                let mut sxx = vec![0.0; g.n_levels];
                for (&c, &t) in g.codes.iter().zip(&g.t) {
                    let d = t - mean_t[c as usize];
                    sxx[c as usize] += d * d;
                }
                let inv_sxx = sxx
                    .iter()
                    .zip(&count)
                    .map(|(s, c)| {
                        // Treat slope as unidentified when t barely varies in the group.
                        if *s > 1e-12 * c.max(1.0) { 1.0 / s } else { 0.0 }
                    })
                    .collect();
                Ok(TrendStats {
                    codes: &g.codes,
                    t: &g.t,
                    inv_count: count.iter().map(|&c| if c > 0.0 { 1.0 / c } else { 0.0 }).collect(),
                    mean_t,
                    inv_sxx,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Absorber {
            n,
            factors,
            trends,
            opts,
        })
    }

    fn n_projections(&self) -> usize {
        self.factors.len() + self.trends.len()
    }

    /// Absorbs one column in place; returns the number of sweeps.
    pub fn absorb_column(&self, x: &mut [f64]) -> Result<usize, EconError> {
        if self.n_projections() == 0 {
            return Ok(0);
        }
        if x.len() != self.n {
            return Err(EconError::Dimension(format!(
                "column has {} rows, fixed effects {}",
                x.len(),
                self.n
            )));
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        if self.n_projections() == 1 {
            self.sweep(x, &mut a, &mut b);
            return Ok(1);
        }
        // Conjugate gradient on (I − T) w = (I − T) x, where T is the
        // symmetric sweep; the solution w is the projection of x onto the
        // fixed-effect space.
        let mut tx = x.to_vec();
        self.symmetric_sweep(&mut tx, &mut a, &mut b);
        let mut r: Vec<f64> = x.iter().zip(&tx).map(|(x, t)| x - t).collect();
        let mut w = vec![0.0; self.n];
        let mut p = r.clone();
        let mut ap = vec![0.0; self.n];
        let mut rs = dot(&r, &r);
        let floor = rs * RESIDUAL_FLOOR * RESIDUAL_FLOOR;
        let mut last = f64::INFINITY;
        let mut converged = rs == 0.0;
        let mut iterations = 0;
        while !converged && iterations < self.opts.max_iter {
            iterations += 1;
            ap.copy_from_slice(&p);
            self.symmetric_sweep(&mut ap, &mut a, &mut b);
            for (q, pv) in ap.iter_mut().zip(&p) {
                *q = pv - *q;
            }
            // Once the residual is at rounding level the direction lies in
            // the null space of I − T and a step along it would diverge.
            let pap = dot(&p, &ap);
            if pap <= NULL_SPACE_RATIO * dot(&p, &p) {
                converged = true;
                break;
            }
            let alpha = rs / pap;
            last = 0.0;
            for ((wv, rv), (pv, apv)) in w.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
                *wv += alpha * pv;
                *rv -= alpha * apv;
                last = last.max((alpha * pv).abs());
            }
            if last < self.opts.tol {
                converged = true;
                break;
            }
            let rs_new = dot(&r, &r);
            if rs_new <= floor {
                converged = true;
                break;
            }
            let beta = rs_new / rs;
            rs = rs_new;
            for (pv, rv) in p.iter_mut().zip(&r) {
                *pv = rv + beta * *pv;
            }
        }
        if !converged {
            return Err(EconError::NoConvergence {
                iterations: self.opts.max_iter,
                max_change: last,
                tol: self.opts.tol,
            });
        }
        for (xv, wv) in x.iter_mut().zip(&w) {
            *xv -= wv;
        }
        Ok(iterations.max(1))
    }

    /// Projections in order and then in reverse, each applied once.
    fn symmetric_sweep(&self, x: &mut [f64], a: &mut Vec<f64>, b: &mut Vec<f64>) {
        let k = self.n_projections();
        for i in (0..k).chain((0..k.saturating_sub(1)).rev()) {
            self.project_out(i, x, a, b);
        }
    }

    fn project_out(&self, i: usize, x: &mut [f64], a: &mut Vec<f64>, b: &mut Vec<f64>) -> f64 {
        let mut max_change: f64 = 0.0;
        if let Some(f) = self.factors.get(i) {
            a.clear();
            a.resize(f.inv_count.len(), 0.0);
            for (&c, &v) in f.codes.iter().zip(x.iter()) {
                a[c as usize] += v;
            }
            for (s, ic) in a.iter_mut().zip(&f.inv_count) {
                *s *= ic;
                max_change = max_change.max(s.abs());
            }
            for (&c, v) in f.codes.iter().zip(x.iter_mut()) {
                *v -= a[c as usize];
            }
            return max_change;
        }
        let g = &self.trends[i - self.factors.len()];
        let k = g.inv_count.len();
        a.clear();
        a.resize(k, 0.0);
        b.clear();
        b.resize(k, 0.0);
        for ((&c, &t), &v) in g.codes.iter().zip(g.t).zip(x.iter()) {
            let c = c as usize;
            a[c] += v;
            b[c] += (t - g.mean_t[c]) * v;
        }
        for c in 0..k {
            a[c] *= g.inv_count[c];
            b[c] *= g.inv_sxx[c];
        }
        for ((&c, &t), v) in g.codes.iter().zip(g.t).zip(x.iter_mut()) {
            let c = c as usize;
            let adj = a[c] + b[c] * (t - g.mean_t[c]);
            max_change = max_change.max(adj.abs());
            *v -= adj;
        }
        max_change
    }

    /// One pass over every projection; returns the largest adjustment.
    fn sweep(&self, x: &mut [f64], a: &mut Vec<f64>, b: &mut Vec<f64>) -> f64 {
        (0..self.n_projections()).fold(0.0, |m, i| m.max(self.project_out(i, x, a, b)))
    }

    /// Absorbs every column; returns the largest sweep count.
    pub fn absorb_columns(&self, cols: &mut [Vec<f64>]) -> Result<usize, EconError> {
        let run = |cols: &mut [Vec<f64>]| -> Result<usize, EconError> {
            cols.par_iter_mut()
                .map(|c| self.absorb_column(c))
                .try_reduce(|| 0, |a, b| Ok(a.max(b)))
        };
        if self.opts.threads == 0 {
            run(cols)
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.opts.threads)
                .build()
                .map_err(|e| EconError::Dimension(format!("thread pool: {e}")))?;
            pool.install(|| run(cols))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Demeaned copies of `columns` with the fixed effects projected out.
pub fn absorb(
    columns: &[Vec<f64>],
    fe: &FixedEffectSpec,
    opts: AbsorbOptions,
) -> Result<(Vec<Vec<f64>>, usize), EconError> {
    let absorber = Absorber::new(fe, opts)?;
    let mut out = columns.to_vec();
    let iters = absorber.absorb_columns(&mut out)?;
    Ok((out, iters))
}
