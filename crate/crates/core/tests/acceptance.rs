//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness (`cargo test -p capdis-core --test
//! acceptance`). Exits non-zero when a criterion fails, except for parts that
//! need hardware this machine does not have; those print FAIL with the reason.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use capdis_core::design::{build_design, control_function_design, FeVariant, Treatment, CAPACITY_DISCIPLINE};
use capdis_core::domain::{Carrier, CarrierClass, Market, YearMonth};
use capdis_core::econ::{
    cluster_bootstrap, control_function, estimate_fe, poisson_fe, semi_elasticity, AbsorbOptions, BootstrapOptions,
    Factor, FixedEffectSpec, PoissonOptions, Regressor, TrendGroup,
};
use capdis_core::embed::{cosine, Embedding, TrainingConfig};
use capdis_core::metrics::{normalized_crowding, passenger_weighted};
use capdis_core::network::{hubs, illustrative_network};
use capdis_core::panel::{indicators, MarketMonthContext, ServingCarrier};
use capdis_core::pipeline::{load_config, run_pipeline};
use capdis_core::synth::{
    gen_corpus, gen_endogenous, gen_fixture, gen_network, gen_panel, gen_scale, CorpusSpec, EndogenousDgp,
    FixtureSpec, NetworkDesign, PanelDgp, ScaleDgp,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
    /// Failure caused by missing hardware rather than the implementation.
    environment: bool,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail, environment: false }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn dense_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let svd = x.clone().svd(true, true);
    let eps = 1e-10 * svd.singular_values.max();
    svd.solve(y, eps).expect("svd solve")
}

fn dummies(x: &mut Vec<Vec<f64>>, codes: &[usize], levels: usize, scale: Option<&[f64]>) {
    for l in 0..levels {
        x.push(
            codes
                .iter()
                .enumerate()
                .map(|(i, &c)| if c == l { scale.map_or(1.0, |s| s[i]) } else { 0.0 })
                .collect(),
        );
    }
}

fn to_matrix(cols: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(cols[0].len(), cols.len(), |i, j| cols[j][i])
}

fn fwl_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for inst in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + inst);
        let n = rng.random_range(60..=500);
        let (l1, l2, lt) = (rng.random_range(2..=15), rng.random_range(2..=10), rng.random_range(2..=6));
        let g1: Vec<usize> = (0..n).map(|_| rng.random_range(0..l1)).collect();
        let g2: Vec<usize> = (0..n).map(|_| rng.random_range(0..l2)).collect();
        let gt: Vec<usize> = (0..n).map(|_| rng.random_range(0..lt)).collect();
        let t: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..24u32)) / 12.0).collect();
        let a1: Vec<f64> = (0..l1).map(|_| normal(&mut rng)).collect();
        let a2: Vec<f64> = (0..l2).map(|_| normal(&mut rng)).collect();
        let slope: Vec<f64> = (0..lt).map(|_| 0.3 * normal(&mut rng)).collect();
        let beta = [1.5, -0.8, 0.4];
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|i| normal(&mut rng) + 0.5 * a1[g1[i]] - 0.3 * a2[g2[i]] + 0.2 * t[i]).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                (0..3).map(|k| beta[k] * xs[k][i]).sum::<f64>()
                    + a1[g1[i]]
                    + a2[g2[i]]
                    + slope[gt[i]] * t[i]
                    + 0.5 * normal(&mut rng)
            })
            .collect();
        let regs: Vec<Regressor> =
            xs.iter().enumerate().map(|(k, x)| Regressor::continuous(&format!("x{k}"), x.clone())).collect();
        let fe = FixedEffectSpec::new(
            vec![Factor::from_keys("a", g1.iter().copied()), Factor::from_keys("b", g2.iter().copied())],
            vec![TrendGroup::from_keys("trend", gt.iter().copied(), t.clone())],
        );
        let clusters: Vec<u32> = g1.iter().map(|&g| g as u32).collect();
        let res = match estimate_fe(&y, &regs, &fe, &clusters, AbsorbOptions::default()) {
            Ok(r) if r.coef.len() == 3 => r,
            _ => {
                failures += 1;
                continue;
            }
        };
        let mut cols = xs.clone();
        dummies(&mut cols, &g1, l1, None);
        dummies(&mut cols, &g2, l2, None);
        dummies(&mut cols, &gt, lt, None);
        dummies(&mut cols, &gt, lt, Some(&t));
        let b = dense_ols(&to_matrix(&cols), &DVector::from_vec(y));
        for k in 0..3 {
            let rel = (res.coef[k] - b[k]).abs() / b[k].abs();
            worst = worst.max(rel);
            if rel.is_nan() || rel > 1e-6 {
                failures += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs <= 60.0,
        format!("200 instances, {failures} mismatches, max relative error {worst:.1e}, {secs:.1} s"),
    )
}

/// Clustered sandwich straight from the formula, `K` = slope regressors.
fn direct_sandwich(x: &DMatrix<f64>, y: &DVector<f64>, clusters: &[u32], k_slopes: usize) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let bread = (x.transpose() * x).try_inverse().expect("full rank");
    let beta = &bread * x.transpose() * y;
    let e = y - x * beta;
    let ids: BTreeSet<u32> = clusters.iter().copied().collect();
    let mut meat = DMatrix::zeros(p, p);
    for id in &ids {
        let mut s = DVector::zeros(p);
        for i in (0..n).filter(|&i| clusters[i] == *id) {
            s += x.row(i).transpose() * e[i];
        }
        meat += &s * s.transpose();
    }
    let c = ids.len() as f64;
    let f = c / (c - 1.0) * (n as f64 - 1.0) / (n as f64 - k_slopes as f64);
    (&bread * meat * &bread) * f
}

fn sandwich_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut fixtures = 0;
    for inst in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + inst);
        let n = rng.random_range(15..=50);
        let k = rng.random_range(1..=3);
        let c = rng.random_range(3..=8);
        let with_fe = inst % 2 == 1;
        let clusters: Vec<u32> = (0..n).map(|i| (i % c) as u32).collect();
        let groups: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let mut xs: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
        if !with_fe {
            xs.push(vec![1.0; n]);
        }
        let y: Vec<f64> = (0..n)
            .map(|i| xs.iter().map(|x| x[i]).sum::<f64>() + groups[i] as f64 + normal(&mut rng) * (1.0 + clusters[i] as f64))
            .collect();
        let regs: Vec<Regressor> =
            xs.iter().enumerate().map(|(j, x)| Regressor::continuous(&format!("x{j}"), x.clone())).collect();
        let (fe, oracle) = if with_fe {
            let present: BTreeSet<usize> = groups.iter().copied().collect();
            let dense: Vec<usize> = groups.iter().map(|g| present.iter().position(|p| p == g).unwrap()).collect();
            let mut cols = xs.clone();
            dummies(&mut cols, &dense, present.len(), None);
            let v = direct_sandwich(&to_matrix(&cols), &DVector::from_vec(y.clone()), &clusters, k);
            (
                FixedEffectSpec::new(vec![Factor::from_keys("g", groups.iter().copied())], vec![]),
                v.view((0, 0), (k, k)).into_owned(),
            )
        } else {
            let v = direct_sandwich(&to_matrix(&xs), &DVector::from_vec(y.clone()), &clusters, k + 1);
            (FixedEffectSpec::default(), v)
        };
        let Ok(res) = estimate_fe(&y, &regs, &fe, &clusters, AbsorbOptions::default()) else {
            return outcome(false, format!("fixture {inst}: estimation failed"));
        };
        if res.cov.shape() != oracle.shape() {
            return outcome(false, format!("fixture {inst}: dropped regressors {:?}", res.dropped));
        }
        let scale = oracle.amax();
        worst = worst.max((&res.cov - &oracle).amax() / scale);
        fixtures += 1;
    }
    outcome(worst <= 1e-10, format!("{fixtures} fixtures (n <= 50), max relative deviation {worst:.1e}"))
}

/// Poisson MLE with explicit group dummies by Newton's method; returns the
/// slope coefficients.
fn dummy_poisson(z: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let p = z.ncols();
    let loglik = |th: &DVector<f64>| -> f64 {
        let eta = z * th;
        eta.iter().zip(y.iter()).map(|(e, yi)| yi * e - e.exp()).sum()
    };
    let mut theta = DVector::zeros(p);
    for _ in 0..500 {
        let mu = (z * &theta).map(f64::exp);
        let grad = z.transpose() * (y - &mu);
        if grad.norm() < 1e-11 {
            break;
        }
        let mut zw = z.clone();
        for (i, mut row) in zw.row_iter_mut().enumerate() {
            row *= mu[i];
        }
        let hess = z.transpose() * zw;
        let step = hess.cholesky().expect("positive definite").solve(&grad);
        let (l0, mut s) = (loglik(&theta), 1.0);
        while loglik(&(&theta + &step * s)) < l0 && s > 1e-8 {
            s *= 0.5;
        }
        theta += step * s;
    }
    theta
}

fn poisson_oracle() -> Outcome {
    let mut worst_beta: f64 = 0.0;
    let mut worst_total: f64 = 0.0;
    let instances = 60;
    for inst in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(30_000 + inst);
        let n_groups = rng.random_range(5..=50);
        let with_time = inst % 2 == 0;
        let beta = [0.4, -0.25];
        let (mut y, mut x1, mut x2, mut g, mut tm) = (vec![], vec![], vec![], vec![], vec![]);
        for grp in 0..n_groups {
            let gamma = 0.8 * normal(&mut rng) + 0.5;
            for period in 0..rng.random_range(2..=8u32) {
                let (a, b) = (normal(&mut rng), normal(&mut rng));
                let time_effect = if with_time { 0.2 * f64::from(period % 3) } else { 0.0 };
                let mu = (gamma + beta[0] * a + beta[1] * b + time_effect).exp();
                y.push(Poisson::new(mu).unwrap().sample(&mut rng));
                x1.push(a);
                x2.push(b);
                g.push(grp as u32);
                tm.push(period % 3);
            }
        }
        let regs = vec![Regressor::continuous("a", x1.clone()), Regressor::continuous("b", x2.clone())];
        let opts = PoissonOptions { tol: 1e-10, max_iter: 200 };
        let Ok(res) = poisson_fe(&y, &regs, &g, with_time.then_some(tm.as_slice()), opts) else {
            return outcome(false, format!("instance {inst}: estimation failed"));
        };

        let mut totals: BTreeMap<u32, f64> = BTreeMap::new();
        for (&gi, &yi) in g.iter().zip(&y) {
            *totals.entry(gi).or_default() += yi;
        }
        let kept: Vec<u32> = totals.iter().filter(|(_, &t)| t > 0.0).map(|(&k, _)| k).collect();
        let rows: Vec<usize> = (0..y.len()).filter(|&i| totals[&g[i]] > 0.0).collect();
        let mut cols: Vec<Vec<f64>> = vec![rows.iter().map(|&i| x1[i]).collect(), rows.iter().map(|&i| x2[i]).collect()];
        if with_time {
            for level in 1..3 {
                cols.push(rows.iter().map(|&i| f64::from(u8::from(tm[i] == level))).collect());
            }
        }
        for grp in &kept {
            cols.push(rows.iter().map(|&i| f64::from(u8::from(g[i] == *grp))).collect());
        }
        let yk = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
        let theta = dummy_poisson(&to_matrix(&cols), &yk);
        for (k, name) in ["a", "b"].iter().enumerate() {
            let (b, _) = res.coefficient(name).expect("identified");
            worst_beta = worst_beta.max((b - theta[k]).abs());
        }

        let mut fitted: BTreeMap<u32, f64> = BTreeMap::new();
        for (&r, &m) in res.rows.iter().zip(&res.fitted) {
            *fitted.entry(g[r]).or_default() += m;
        }
        for grp in &kept {
            let obs = totals[grp];
            worst_total = worst_total.max((fitted.get(grp).copied().unwrap_or(0.0) - obs).abs() / obs.max(1.0));
        }
    }
    outcome(
        worst_beta <= 1e-6 && worst_total <= 1e-8,
        format!("{instances} instances (<= 50 groups), max |beta diff| {worst_beta:.1e}, max group-total gap {worst_total:.1e}"),
    )
}

fn monte_carlo_recovery() -> Outcome {
    let runs: Vec<Option<(bool, f64)>> = (1..=100u64)
        .into_par_iter()
        .map(|seed| {
            let p = gen_panel(&PanelDgp { seed, ..PanelDgp::default() }).ok()?;
            let truth = p.truth.coefficient(CAPACITY_DISCIPLINE)?;
            let d = build_design(&p.observations, &Treatment::Main, FeVariant::CarrierMarket).ok()?;
            let r = estimate_fe(&d.outcome, &d.regressors, &d.fe, &d.clusters, AbsorbOptions::default()).ok()?;
            let i = r.index(CAPACITY_DISCIPLINE)?;
            let (lo, hi) = r.ci95(i);
            Some((lo <= truth && truth <= hi, semi_elasticity(r.coef[i])))
        })
        .collect();
    let ok: Vec<(bool, f64)> = runs.iter().flatten().copied().collect();
    let covered = ok.iter().filter(|r| r.0).count();
    let mean_semi = ok.iter().map(|r| r.1).sum::<f64>() / ok.len().max(1) as f64;
    let target = semi_elasticity(-0.0204);
    outcome(
        ok.len() == 100 && covered >= 93 && (mean_semi - target).abs() <= 0.3,
        format!(
            "{} of 100 seeds estimated, CI covers truth in {covered}, mean semi-elasticity {mean_semi:.4}% (target {target:.4}%)",
            ok.len()
        ),
    )
}

fn control_function_recovery() -> Outcome {
    let runs: Vec<Option<[f64; 5]>> = (1..=100u64)
        .into_par_iter()
        .map(|seed| {
            let s = gen_endogenous(&EndogenousDgp { seed, ..EndogenousDgp::default() }).ok()?;
            let truth = s.truth.coefficient(CAPACITY_DISCIPLINE)?;
            let opts = AbsorbOptions::default();
            let plain_d = build_design(&s.observations, &Treatment::Main, FeVariant::CarrierMarket).ok()?;
            let plain = estimate_fe(&plain_d.outcome, &plain_d.regressors, &plain_d.fe, &plain_d.clusters, opts).ok()?;
            let d = control_function_design(&s.observations, &s.instruments, FeVariant::CarrierMarket).ok()?;
            let cf = control_function(&d.first, &d.instruments, &d.second, opts, None).ok()?;
            let (bp, sp) = plain.coefficient(CAPACITY_DISCIPLINE)?;
            let (bc, sc) = cf.second_stage.coefficient(CAPACITY_DISCIPLINE)?;
            let covered = (bc - truth).abs() <= 1.959_963_985 * sc;
            Some([bp - truth, sp, f64::from(u8::from(covered)), cf.first_stage_f, bc - truth])
        })
        .collect();
    let ok: Vec<[f64; 5]> = runs.into_iter().flatten().collect();
    let m = ok.len().max(1) as f64;
    let mean = |j: usize| ok.iter().map(|r| r[j]).sum::<f64>() / m;
    let (bias, se, covered, f, cf_bias) = (mean(0), mean(1), mean(2) * m, mean(3), mean(4));
    outcome(
        ok.len() == 100 && bias.abs() >= 3.0 * se && covered >= 90.0,
        format!(
            "plain bias {bias:.5} = {:.2} SE, control function bias {cf_bias:.5}, CF covers truth in {covered:.0}/100, mean first-stage F {f:.1}",
            bias.abs() / se
        ),
    )
}

/// Betweenness by listing every simple path and keeping the shortest.
fn brute_force_betweenness(adj: &[Vec<usize>]) -> Vec<f64> {
    fn walk(adj: &[Vec<usize>], path: &mut Vec<usize>, target: usize, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        if last == target {
            out.push(path.clone());
            return;
        }
        for &w in &adj[last] {
            if !path.contains(&w) {
                path.push(w);
                walk(adj, path, target, out);
                path.pop();
            }
        }
    }
    let n = adj.len();
    let mut b = vec![0.0; n];
    for s in 0..n {
        for t in (0..n).filter(|&t| t != s) {
            let mut paths = Vec::new();
            walk(adj, &mut vec![s], t, &mut paths);
            let Some(shortest) = paths.iter().map(Vec::len).min() else { continue };
            let best: Vec<&Vec<usize>> = paths.iter().filter(|p| p.len() == shortest).collect();
            for (v, bv) in b.iter_mut().enumerate() {
                let through = best.iter().filter(|p| p[1..p.len() - 1].contains(&v)).count();
                *bv += through as f64 / best.len() as f64;
            }
        }
    }
    b.iter().map(|v| v / ((n - 1) * (n - 2)) as f64).collect()
}

fn centrality() -> Outcome {
    let mut worst: f64 = 0.0;
    let graphs = 240;
    for seed in 0..graphs as u64 {
        let nodes = 3 + (seed % 6) as usize;
        let design = match seed % 3 {
            0 => NetworkDesign::RandomTree(nodes),
            1 => NetworkDesign::Random { nodes, edge_prob: 0.35 },
            _ => NetworkDesign::Random { nodes, edge_prob: 0.7 },
        };
        let net = gen_network(design, seed);
        let fast = net.betweenness().expect("at least three nodes");
        let slow = brute_force_betweenness(&net.adjacency);
        worst = fast.iter().zip(&slow).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    let c = illustrative_network().centrality().expect("illustrative network");
    let hub_set = hubs(&c, 0.1);
    let expected: BTreeSet<String> = ["DFW", "CLT", "LAX"].iter().map(|s| s.to_string()).collect();
    let replica = c["CHO"] == 0.0 && c["PHX"] == 0.0 && hub_set == expected;
    outcome(
        worst <= 1e-12 && replica,
        format!(
            "{graphs} graphs (3-8 nodes), max deviation {worst:.1e}; illustrative B_CHO {} B_PHX {}, hubs {:?}",
            c["CHO"], c["PHX"], hub_set
        ),
    )
}

fn indicator_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(70_000);
    let market = Market::airport_pair("AAA", "BBB").unwrap();
    let ym = YearMonth::new(2012, 3).unwrap();
    let mut mismatches = 0;
    let mut contexts = 0;
    while contexts < 10_000 {
        let n_leg = rng.random_range(0..=5);
        let n_lcc = rng.random_range(0..=3);
        if n_leg + n_lcc == 0 {
            continue;
        }
        contexts += 1;
        let flag = |r: &mut ChaCha8Rng| match r.random_range(0..3) {
            0 => None,
            1 => Some(false),
            _ => Some(true),
        };
        let mut serving: Vec<ServingCarrier> = Vec::new();
        for (i, class) in std::iter::repeat_n(CarrierClass::Legacy, n_leg)
            .chain(std::iter::repeat_n(CarrierClass::Lcc, n_lcc))
            .enumerate()
        {
            let code = format!("C{i}");
            serving.push(ServingCarrier {
                carrier: Carrier { code: code.clone(), class, merger_group: code },
                flag: flag(&mut rng),
            });
        }
        let j = serving[rng.random_range(0..serving.len())].carrier.code.clone();
        let ctx = MarketMonthContext { market: market.clone(), year_month: ym, serving: serving.clone() };
        let got = indicators(&ctx, &j);

        // Set-builder definitions over L (legacies), S (all serving), j.
        let legacy: Vec<&ServingCarrier> = serving.iter().filter(|s| s.carrier.class == CarrierClass::Legacy).collect();
        let talks = |s: &&ServingCarrier| s.flag == Some(true);
        let l = legacy.len();
        let talking = legacy.iter().filter(|s| talks(s)).count();
        let jl = legacy.iter().find(|s| s.carrier.code == j);
        let te = l >= 2;
        let cd = te && talking == l;
        let ind = |x: bool| f64::from(u8::from(x));
        let expected = [
            ind(cd),
            ind(te),
            ind(serving.len() == 1),
            ind(legacy.iter().any(|s| s.flag.is_none())),
            ind(te && jl.is_some_and(talks) && talking == 1),
            ind(cd && l == 2),
            ind(cd && l == 3),
            ind(cd && l >= 4),
            ind(te && talking == l - 1),
            ind(te && jl.is_some_and(|s| !talks(s)) && talking == l - 1),
            ind(serving.len() == 1 && serving[0].flag == Some(true)),
        ];
        let actual = [
            got.capacity_discipline,
            got.talk_eligible,
            got.monopoly,
            got.missing_report,
            got.only_j_talks,
            got.capdis_2,
            got.capdis_3,
            got.capdis_4,
            got.capdis_n1,
            got.capdis_not_j,
            got.monopoly_capdis,
        ];
        mismatches += expected.iter().zip(&actual).filter(|(a, b)| a != b).count();
    }
    outcome(mismatches == 0, format!("{contexts} contexts x 11 indicators, {mismatches} mismatches"))
}

fn metrics() -> Outcome {
    let mut worst_equal: f64 = 0.0;
    for n in 2..=12 {
        for offset in [0.0, 17.5, 600.25] {
            let d: Vec<f64> = (0..n).map(|i| (offset + i as f64 * 1440.0 / n as f64) % 1440.0).collect();
            worst_equal = worst_equal.max((normalized_crowding(&d).unwrap() - 1.0).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(80_000);
    let mut worst_rot: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(2..=20);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1440.0)).collect();
        let shift = rng.random_range(0.0..1440.0);
        let r: Vec<f64> = d.iter().map(|v| (v + shift) % 1440.0).collect();
        worst_rot = worst_rot.max((normalized_crowding(&d).unwrap() - normalized_crowding(&r).unwrap()).abs());
    }
    let weighted = passenger_weighted(&[1.0, 0.0, 1.0], &[0.25, 0.25, 0.5]).unwrap();
    outcome(
        worst_equal <= 1e-12 && worst_rot <= 1e-9 && weighted == 0.75,
        format!("equally spaced max |c - 1| {worst_equal:.1e}, rotation max gap {worst_rot:.1e}, weighted example {weighted}"),
    )
}

fn semi_elasticity_check() -> Outcome {
    let v = semi_elasticity(-0.0204);
    let zero = semi_elasticity(0.0);
    outcome(
        (v - (-2.0193)).abs() <= 1e-4 && zero == 0.0,
        format!("beta -0.0204 -> {v:.6}%, beta 0 -> {zero}"),
    )
}

fn embedding_sanity() -> Outcome {
    let spec = CorpusSpec::default();
    let (planted, control) = (spec.planted[0].0.clone(), spec.controls[0].clone());
    let cfg = TrainingConfig { dims: 50, window: 5, epochs: 5, min_count: 1, subsample: 0.0, ..TrainingConfig::default() };
    let wins: Vec<bool> = (1..=20u64)
        .into_par_iter()
        .map(|seed| {
            let corpus = gen_corpus(&CorpusSpec { seed, ..spec.clone() }).expect("corpus");
            let emb = Embedding::train(&corpus.sentences(), &TrainingConfig { seed, ..cfg }).expect("training");
            let mean = |tok: &str| {
                spec.anchors.iter().map(|a| emb.similarity(a, tok).unwrap()).sum::<f64>() / spec.anchors.len() as f64
            };
            mean(&planted) > mean(&control)
        })
        .collect();
    let ordered = wins.iter().filter(|w| **w).count();
    let fig = cosine(&[5.0, 0.0], &[-8.0, 8.0]).unwrap();
    outcome(
        ordered >= 19 && (fig - (-0.707)).abs() <= 1e-3,
        format!("planted token closer to the anchors in {ordered}/20 seeds; cos((5,0), (-8,8)) = {fig:.4}"),
    )
}

fn performance() -> Vec<Outcome> {
    let mut out = Vec::new();
    let sample = gen_scale(&ScaleDgp::default()).expect("scale panel");
    let start = Instant::now();
    let res = estimate_fe(&sample.outcome, &sample.regressors, &sample.fe, &sample.clusters, AbsorbOptions::default());
    let secs = start.elapsed().as_secs_f64();
    let ok = res.as_ref().is_ok_and(|r| {
        r.coef.iter().zip(&sample.truth.beta).all(|(b, t)| (b - t).abs() < 0.01)
    });
    out.push(outcome(
        ok && secs <= 10.0,
        format!("{} rows, 2 fixed effects, absorb + estimate {secs:.2} s on one thread", sample.outcome.len()),
    ));

    let small = gen_scale(&ScaleDgp { groups: 1_000, periods: 20, ..ScaleDgp::default() }).expect("bootstrap panel");
    let time_with = |threads: usize| {
        let start = Instant::now();
        let opts = BootstrapOptions { replicates: 200, seed: 3, threads };
        let r = cluster_bootstrap(&small.clusters, opts, |rows, _ids| {
            let y: Vec<f64> = rows.iter().map(|&r| small.outcome[r]).collect();
            let regs: Vec<Regressor> = small.regressors.iter().map(|x| x.subset(rows)).collect();
            let fe = small.fe.subset(rows);
            let units: Vec<u32> = rows.iter().map(|&r| small.clusters[r]).collect();
            estimate_fe(&y, &regs, &fe, &units, AbsorbOptions::default()).map(|r| r.coef)
        });
        (start.elapsed().as_secs_f64(), r.map(|b| b.se))
    };
    let (t1, se1) = time_with(1);
    let (t8, se8) = time_with(8);
    let speedup = t1 / t8;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let same = se1.is_ok() && se1 == se8;
    let mut o = outcome(
        speedup >= 4.0 && same,
        format!(
            "B = 200 bootstrap: 1 worker {t1:.2} s, 8 workers {t8:.2} s, speedup {speedup:.2}x, identical SEs {same}, {cores} CPU(s) available"
        ),
    );
    if !o.pass && same && cores < 8 {
        o.environment = true;
        o.detail.push_str(" (needs at least 8 cores)");
    }
    out.push(o);
    out
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let run = || -> Result<(String, BTreeMap<String, Vec<u8>>), capdis_core::Error> {
        let dir = tempfile::tempdir()?;
        gen_fixture(&FixtureSpec::with_seed(7))?.write(dir.path())?;
        let cfg = load_config(Some(&dir.path().join("capdis.conf")))?;
        let text = run_pipeline(&cfg)?;
        Ok((text, tree(dir.path())))
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => {
            let bytes: usize = a.1.values().map(Vec::len).sum();
            outcome(a == b, format!("{} files ({bytes} bytes) and summary identical: {}", a.1.len(), a == b))
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("pipeline failed: {e}")),
    }
}

type Criterion = (&'static str, fn() -> Vec<Outcome>);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("fwl-oracle", || vec![fwl_oracle()]),
        ("clustered-se-oracle", || vec![sandwich_oracle()]),
        ("poisson-oracle", || vec![poisson_oracle()]),
        ("monte-carlo-recovery", || vec![monte_carlo_recovery()]),
        ("control-function-recovery", || vec![control_function_recovery()]),
        ("centrality", || vec![centrality()]),
        ("indicator-oracle", || vec![indicator_oracle()]),
        ("crowding-and-weights", || vec![metrics()]),
        ("semi-elasticity", || vec![semi_elasticity_check()]),
        ("embedding-sanity", || vec![embedding_sanity()]),
        ("performance", performance),
        ("determinism", || vec![determinism()]),
    ];
    let mut fatal = 0;
    let mut environment = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        for o in check() {
            let tag = if o.pass { "PASS" } else { "FAIL" };
            println!("{tag} {:>2} {name}: {} [{:.1} s]", i + 1, o.detail, start.elapsed().as_secs_f64());
            match (o.pass, o.environment) {
                (true, _) => {}
                (false, true) => environment += 1,
                (false, false) => fatal += 1,
            }
        }
    }
    println!("acceptance: {fatal} failed, {environment} failed for lack of hardware");
    if fatal > 0 {
        std::process::exit(1);
    }
}
