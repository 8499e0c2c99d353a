//! Synthetic data with known ground truth: estimation panels, an
//! endogenous-entry panel for the control function, lemma corpora with
//! planted neighbours, route networks, and a complete on-disk input fixture.
//!
//! Every generator draws from ChaCha8 seeded with `seed_from_u64` and
//! consumes draws in a fixed order, so output is bit-identical per seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::design::{trend_value, InstrumentTable};
use crate::domain::{CarrierRegistry, Market, PanelObservation, YearMonth, YearQuarter};
use crate::econ::{semi_elasticity, Factor, FixedEffectSpec, Regressor};
use crate::error::Error;
use crate::io;
use crate::network::{illustrative_network, CarrierNetwork};
use crate::panel::{indicators, market_structure_key, report_quarter, AlignmentMode, MarketMonthContext, ReportTable, Segment, ServingCarrier};
use crate::text::TranscriptStatus;

/// Name and version of the generator behind every synthetic draw.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.9), seed_from_u64";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Airports with approximate coordinates and their city.
pub const AIRPORTS: [(&str, f64, f64, &str); 30] = [
    ("ATL", 33.64, -84.43, "Atlanta"),
    ("BOS", 42.36, -71.01, "Boston"),
    ("BWI", 39.18, -76.67, "Baltimore"),
    ("CLT", 35.21, -80.94, "Charlotte"),
    ("DAL", 32.85, -96.85, "Dallas"),
    ("DCA", 38.85, -77.04, "Washington"),
    ("DEN", 39.86, -104.67, "Denver"),
    ("DFW", 32.90, -97.04, "Dallas"),
    ("DTW", 42.21, -83.35, "Detroit"),
    ("EWR", 40.69, -74.17, "New York"),
    ("GSO", 36.10, -79.94, "Greensboro"),
    ("HOU", 29.65, -95.28, "Houston"),
    ("IAD", 38.95, -77.46, "Washington"),
    ("IAH", 29.98, -95.34, "Houston"),
    ("JFK", 40.64, -73.78, "New York"),
    ("LAS", 36.08, -115.15, "Las Vegas"),
    ("LAX", 33.94, -118.41, "Los Angeles"),
    ("LGA", 40.78, -73.87, "New York"),
    ("MCO", 28.43, -81.31, "Orlando"),
    ("MDW", 41.79, -87.75, "Chicago"),
    ("MIA", 25.79, -80.29, "Miami"),
    ("MSP", 44.88, -93.22, "Minneapolis"),
    ("ORD", 41.97, -87.91, "Chicago"),
    ("PHL", 39.87, -75.24, "Philadelphia"),
    ("PHX", 33.43, -112.01, "Phoenix"),
    ("SAN", 32.73, -117.19, "San Diego"),
    ("SEA", 47.45, -122.31, "Seattle"),
    ("SFO", 37.62, -122.38, "San Francisco"),
    ("SLC", 40.79, -111.98, "Salt Lake City"),
    ("TPA", 27.98, -82.53, "Tampa"),
];

/// Regressor names of the outcome equation, in `PanelDgp::beta` order.
pub const BETA_NAMES: [&str; 6] = [
    "Capacity Discipline",
    "Talk Eligible",
    "Monopoly",
    "MissingReport",
    "Talk Eligible x MissingReport",
    "Monopoly x MissingReport",
];

/// Log-seat outcome equation with carrier-market and carrier-quarter
/// effects, airport trends and cluster-correlated errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDgp {
    pub beta: [f64; 6],
    /// Bi-directional markets; each yields both directions.
    pub n_clusters: usize,
    pub n_months: usize,
    pub start: YearMonth,
    pub legacies: Vec<String>,
    pub lccs: Vec<String>,
    /// (code, merged entity) pairs.
    pub mergers: Vec<(String, String)>,
    pub max_legacy: usize,
    pub max_lcc: usize,
    /// Stationary probability that a potential carrier serves in a month.
    pub serve_rate: f64,
    /// Probability a carrier keeps last month's serving state.
    pub serve_persistence: f64,
    pub talk_rate: f64,
    pub talk_persistence: f64,
    pub missing_rate: f64,
    pub base_log_seats: f64,
    pub sd_carrier_market: f64,
    pub sd_carrier_quarter: f64,
    pub sd_trend: f64,
    pub sigma: f64,
    /// Share of error variance from the cluster-month shock.
    pub rho: f64,
    /// AR(1) coefficient of the cluster-month shock.
    pub ar: f64,
    pub seed: u64,
}

impl Default for PanelDgp {
    fn default() -> Self {
        PanelDgp {
            beta: [-0.0204, 0.03, 0.05, -0.01, 0.01, 0.0],
            n_clusters: 120,
            n_months: 36,
            start: YearMonth { year: 2010, month: 1 },
            legacies: ["AA", "CO", "DL", "UA", "US"].iter().map(|s| s.to_string()).collect(),
            lccs: ["B6", "FL", "WN"].iter().map(|s| s.to_string()).collect(),
            mergers: Vec::new(),
            max_legacy: 4,
            max_lcc: 2,
            serve_rate: 0.8,
            serve_persistence: 0.9,
            talk_rate: 0.5,
            talk_persistence: 0.6,
            missing_rate: 0.05,
            base_log_seats: 9.0,
            sd_carrier_market: 0.5,
            sd_carrier_quarter: 0.05,
            sd_trend: 0.02,
            sigma: 0.08,
            rho: 0.3,
            ar: 0.5,
            seed: 1,
        }
    }
}

/// Parameters the panel was generated with.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
}

impl Truth {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.beta[i])
    }

    pub fn semi_elasticity(&self, name: &str) -> Option<f64> {
        self.coefficient(name).map(semi_elasticity)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,value,semi_elasticity\n");
        for (n, b) in self.names.iter().zip(&self.beta) {
            let _ = writeln!(s, "{n},{},{}", io::fixed(*b), io::fixed(semi_elasticity(*b)));
        }
        s
    }
}

/// A generated panel with its raw inputs.
#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub registry: CarrierRegistry,
    /// Ordered by (market, carrier, month).
    pub observations: Vec<PanelObservation>,
    /// Raw segments, including sub-threshold (non-serving) rows.
    pub segments: Vec<Segment>,
    /// Talk flag per carrier and reporting quarter; `None` when no call was held.
    pub reports: BTreeMap<(String, YearQuarter), Option<bool>>,
    pub truth: Truth,
}

impl SyntheticPanel {
    pub fn report_table(&self) -> ReportTable {
        ReportTable {
            flags: self
                .reports
                .iter()
                .filter_map(|(k, f)| f.map(|f| (k.clone(), f)))
                .collect(),
            tokens: BTreeMap::new(),
        }
    }
}

fn registry_with(mergers: &[(String, String)]) -> CarrierRegistry {
    let mut reg = CarrierRegistry::default();
    for (c, e) in mergers {
        reg.set_merger(c, e);
    }
    reg
}

/// Airport codes: the bundled table first, then `Q00`, `Q01`, ...
fn airport_codes(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match AIRPORTS.get(i) {
            Some(a) => a.0.to_string(),
            None => format!("Q{:02}", i - AIRPORTS.len()),
        })
        .collect()
}

/// Draws `n` distinct unordered airport pairs, returned sorted.
fn draw_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<(String, String)> {
    let mut n_airports = AIRPORTS.len();
    while n_airports * (n_airports - 1) / 2 < n {
        n_airports += 10;
    }
    let codes = airport_codes(n_airports);
    let mut all = Vec::new();
    for i in 0..n_airports {
        for j in i + 1..n_airports {
            all.push((codes[i].clone(), codes[j].clone()));
        }
    }
    let mut pick: Vec<(String, String)> = index::sample(rng, all.len(), n).into_iter().map(|k| all[k].clone()).collect();
    pick.sort();
    pick
}

/// Two-state Markov chain: keep the previous state with probability
/// `persistence`, otherwise redraw with probability `rate`.
fn chain(rng: &mut ChaCha8Rng, len: usize, rate: f64, persistence: f64) -> Vec<bool> {
    let mut out = Vec::with_capacity(len);
    let mut s = rng.random_bool(rate);
    for _ in 0..len {
        if !rng.random_bool(persistence) {
            s = rng.random_bool(rate);
        }
        out.push(s);
    }
    out
}

fn months(start: YearMonth, n: usize) -> Vec<YearMonth> {
    (0..n as i64).map(|k| start.add_months(k)).collect()
}

fn report_quarters(ms: &[YearMonth]) -> Vec<YearQuarter> {
    let first = report_quarter(ms[0], AlignmentMode::Shifted);
    let last = report_quarter(ms[ms.len() - 1], AlignmentMode::Shifted);
    (first.index()..=last.index()).map(YearQuarter::from_index).collect()
}

fn flights_for(seats: u64) -> u64 {
    (seats / 150).max(4)
}

/// Generates a panel from the outcome equation; indicators are computed
/// from the simulated serving sets and talk flags by the panel rules.
pub fn gen_panel(dgp: &PanelDgp) -> Result<SyntheticPanel, Error> {
    if dgp.n_clusters == 0 || dgp.n_months == 0 || dgp.legacies.is_empty() {
        return Err(Error::Config("panel DGP needs clusters, months and legacy carriers".into()));
    }
    if !(0.0..=1.0).contains(&dgp.rho) || dgp.ar.abs() >= 1.0 {
        return Err(Error::Config("rho must lie in [0, 1] and |ar| < 1".into()));
    }
    let mut rng = rng(dgp.seed);
    let registry = registry_with(&dgp.mergers);
    let ms = months(dgp.start, dgp.n_months);
    let quarters = report_quarters(&ms);
    let pairs = draw_pairs(&mut rng, dgp.n_clusters);

    let carriers: Vec<&String> = dgp.legacies.iter().chain(&dgp.lccs).collect();
    let mut reports = BTreeMap::new();
    for c in &carriers {
        let talk = chain(&mut rng, quarters.len(), dgp.talk_rate, dgp.talk_persistence);
        for (q, t) in quarters.iter().zip(talk) {
            let missing = rng.random_bool(dgp.missing_rate);
            reports.insert((c.to_string(), *q), (!missing).then_some(t));
        }
    }
    let cal_quarters: BTreeSet<YearQuarter> = ms.iter().map(|m| m.quarter()).collect();
    let mut mu_cq: BTreeMap<(String, YearQuarter), f64> = BTreeMap::new();
    for c in &carriers {
        for q in &cal_quarters {
            mu_cq.insert((registry.merger_group(c).to_string(), *q), dgp.sd_carrier_quarter * normal(&mut rng));
        }
    }
    let airports: BTreeSet<&String> = pairs.iter().flat_map(|(a, b)| [a, b]).collect();
    let mut slope_o = BTreeMap::new();
    let mut slope_d = BTreeMap::new();
    for a in &airports {
        slope_o.insert(a.to_string(), dgp.sd_trend * normal(&mut rng));
        slope_d.insert(a.to_string(), dgp.sd_trend * normal(&mut rng));
    }

    let mut observations = Vec::new();
    let mut segments = Vec::new();
    let t0 = dgp.start.year as f64;
    for (a, b) in &pairs {
        let n_leg = rng.random_range(1..=dgp.max_legacy.min(dgp.legacies.len()));
        let n_lcc = rng.random_range(0..=dgp.max_lcc.min(dgp.lccs.len()));
        let mut potential: Vec<String> = dgp.legacies.choose_multiple(&mut rng, n_leg).cloned().collect();
        potential.extend(dgp.lccs.choose_multiple(&mut rng, n_lcc).cloned());
        potential.sort();
        let serving: Vec<Vec<bool>> = potential
            .iter()
            .map(|_| chain(&mut rng, ms.len(), dgp.serve_rate, dgp.serve_persistence))
            .collect();
        let mut shock = vec![0.0; ms.len()];
        let mut s = normal(&mut rng);
        for x in shock.iter_mut() {
            s = dgp.ar * s + (1.0 - dgp.ar * dgp.ar).sqrt() * normal(&mut rng);
            *x = s;
        }
        for (o, d) in [(a, b), (b, a)] {
            let market = Market::airport_pair(o, d).expect("distinct airports");
            let mu_cm: Vec<f64> = potential.iter().map(|_| dgp.sd_carrier_market * normal(&mut rng)).collect();
            let mut rows: Vec<PanelObservation> = Vec::new();
            for (t, &ym) in ms.iter().enumerate() {
                let yq = report_quarter(ym, AlignmentMode::Shifted);
                let members: Vec<usize> = (0..potential.len()).filter(|&k| serving[k][t]).collect();
                let ctx = MarketMonthContext {
                    market: market.clone(),
                    year_month: ym,
                    serving: members
                        .iter()
                        .map(|&k| ServingCarrier {
                            carrier: registry.carrier(&potential[k]),
                            flag: reports.get(&(potential[k].clone(), yq)).copied().flatten(),
                        })
                        .collect(),
                };
                let codes: Vec<&str> = members.iter().map(|&k| potential[k].as_str()).collect();
                let tau = trend_value(ym) - t0;
                for k in 0..potential.len() {
                    let code = &potential[k];
                    if !serving[k][t] {
                        if rng.random_bool(0.05) {
                            let seats = rng.random_range(100..400);
                            segments.push(Segment {
                                year_month: ym,
                                carrier: code.clone(),
                                origin: o.clone(),
                                dest: d.clone(),
                                seats,
                                flights: rng.random_range(1..4),
                                passengers: seats * 3 / 4,
                            });
                        }
                        continue;
                    }
                    let ind = indicators(&ctx, code);
                    let x = [
                        ind.capacity_discipline,
                        ind.talk_eligible,
                        ind.monopoly,
                        ind.missing_report,
                        ind.talk_eligible * ind.missing_report,
                        ind.monopoly * ind.missing_report,
                    ];
                    let xb: f64 = x.iter().zip(&dgp.beta).map(|(a, b)| a * b).sum();
                    let eps = dgp.sigma * (dgp.rho.sqrt() * shock[t] + (1.0 - dgp.rho).sqrt() * normal(&mut rng));
                    let ln_seats = dgp.base_log_seats
                        + xb
                        + mu_cm[k]
                        + mu_cq[&(registry.merger_group(code).to_string(), ym.quarter())]
                        + (slope_o[o] + slope_d[d]) * tau
                        + eps;
                    let seats = ln_seats.exp().round().max(1.0) as u64;
                    let flights = flights_for(seats);
                    let passengers = (seats as f64 * rng.random_range(0.6..0.9)).round() as u64;
                    segments.push(Segment {
                        year_month: ym,
                        carrier: code.clone(),
                        origin: o.clone(),
                        dest: d.clone(),
                        seats,
                        flights,
                        passengers,
                    });
                    rows.push(PanelObservation {
                        carrier: registry.carrier(code),
                        market: market.clone(),
                        year_month: ym,
                        seats,
                        flights,
                        passengers,
                        indicators: ind,
                        market_type: ctx.market_type(),
                        n_legacy: ctx.n_legacy() as u32,
                        n_carriers: members.len() as u32,
                        structure_key: market_structure_key(code, &market, codes.iter().copied(), &registry),
                        extra: BTreeMap::new(),
                        avg_fare: None,
                        market_population: None,
                        business_index: None,
                    });
                }
            }
            rows.sort_by(|x, y| (&x.carrier.code, x.year_month).cmp(&(&y.carrier.code, y.year_month)));
            observations.extend(rows);
        }
    }
    observations.sort_by(|x, y| (&x.market, &x.carrier.code, x.year_month).cmp(&(&y.market, &y.carrier.code, y.year_month)));
    segments.sort_by(|x, y| {
        (x.year_month, &x.carrier, &x.origin, &x.dest).cmp(&(y.year_month, &y.carrier, &y.origin, &y.dest))
    });
    Ok(SyntheticPanel {
        registry,
        observations,
        segments,
        reports,
        truth: Truth {
            names: BETA_NAMES.iter().map(|s| s.to_string()).collect(),
            beta: dgp.beta.to_vec(),
        },
    })
}

/// Entry DGP in which Talk Eligible is endogenous.
///
/// Each market has an incumbent legacy and an LCC that always serve. With
/// entry propensity p (linear in four distance instruments) and U uniform,
/// a second legacy enters iff U < p and a third iff U < p². Log seats carry
/// `lambda · (TE − p)`, so the plain estimator of the Capacity Discipline
/// coefficient is biased while adding the first-stage residual removes it.
#[derive(Debug, Clone, PartialEq)]
pub struct EndogenousDgp {
    pub beta_capdis: f64,
    pub beta_talk_eligible: f64,
    pub lambda: f64,
    /// Entry-propensity slopes on the distance instruments (per 100 miles).
    pub sigma_instruments: [f64; 4],
    pub n_markets: usize,
    pub n_months: usize,
    pub start: YearMonth,
    pub talk_rate: f64,
    pub talk_persistence: f64,
    pub sd_carrier_market: f64,
    pub sd_carrier_quarter: f64,
    pub sd_trend: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for EndogenousDgp {
    fn default() -> Self {
        EndogenousDgp {
            beta_capdis: -0.0204,
            beta_talk_eligible: 0.02,
            lambda: 1.0,
            sigma_instruments: [0.12, -0.10, 0.08, 0.05],
            n_markets: 300,
            n_months: 72,
            start: YearMonth { year: 2010, month: 1 },
            talk_rate: 0.6,
            talk_persistence: 0.5,
            sd_carrier_market: 0.5,
            sd_carrier_quarter: 0.05,
            sd_trend: 0.02,
            sigma: 0.05,
            seed: 1,
        }
    }
}

pub const ENDOGENOUS_LEGACIES: [&str; 3] = ["AA", "DL", "UA"];
pub const ENDOGENOUS_LCC: &str = "WN";

#[derive(Debug, Clone)]
pub struct EndogenousSample {
    pub observations: Vec<PanelObservation>,
    pub instruments: InstrumentTable,
    pub truth: Truth,
}

pub fn gen_endogenous(dgp: &EndogenousDgp) -> Result<EndogenousSample, Error> {
    let bound: f64 = dgp.sigma_instruments.iter().map(|s| s.abs()).sum();
    if bound >= 0.5 || dgp.n_markets < 2 || dgp.n_months == 0 {
        return Err(Error::Config("entry propensity must stay inside (0, 1); need markets and months".into()));
    }
    let mut rng = rng(dgp.seed);
    let registry = CarrierRegistry::default();
    let ms = months(dgp.start, dgp.n_months);
    let quarters = report_quarters(&ms);
    let mut flags: BTreeMap<(&str, YearQuarter), bool> = BTreeMap::new();
    for c in ENDOGENOUS_LEGACIES {
        let talk = chain(&mut rng, quarters.len(), dgp.talk_rate, dgp.talk_persistence);
        for (q, t) in quarters.iter().zip(talk) {
            flags.insert((c, *q), t);
        }
    }
    let cal_quarters: Vec<YearQuarter> = {
        let s: BTreeSet<YearQuarter> = ms.iter().map(|m| m.quarter()).collect();
        s.into_iter().collect()
    };
    let all_carriers: Vec<&str> = ENDOGENOUS_LEGACIES.iter().copied().chain([ENDOGENOUS_LCC]).collect();
    let mut mu_cq = BTreeMap::new();
    for c in &all_carriers {
        for q in &cal_quarters {
            mu_cq.insert((*c, *q), dgp.sd_carrier_quarter * normal(&mut rng));
        }
    }
    let pairs = draw_pairs(&mut rng, dgp.n_markets);
    let names: Vec<String> = ["AA", "DL", "UA", "LCC"].iter().map(|c| format!("distance {c}")).collect();
    let mut instruments = InstrumentTable { names, rows: BTreeMap::new() };
    let mut observations = Vec::new();
    for (o, d) in &pairs {
        let market = Market::airport_pair(o, d).expect("distinct airports");
        let base: Vec<f64> = (0..4).map(|_| rng.random_range(200.0..1500.0)).collect();
        let shocks: BTreeMap<YearQuarter, Vec<f64>> = cal_quarters
            .iter()
            .map(|q| (*q, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let mut order: Vec<&str> = ENDOGENOUS_LEGACIES.to_vec();
        order.shuffle(&mut rng);
        let mu_cm: BTreeMap<&str, f64> = all_carriers.iter().map(|c| (*c, dgp.sd_carrier_market * normal(&mut rng))).collect();
        let slope = dgp.sd_trend * normal(&mut rng);
        let mut rows = Vec::new();
        for &ym in &ms {
            let sh = &shocks[&ym.quarter()];
            let p = 0.5 + dgp.sigma_instruments.iter().zip(sh).map(|(s, x)| s * x).sum::<f64>();
            instruments
                .rows
                .insert((market.clone(), ym), base.iter().zip(sh).map(|(b, x)| b + 100.0 * x).collect());
            let u: f64 = rng.random();
            let te = u < p;
            let mut serving = vec![order[0], ENDOGENOUS_LCC];
            if te {
                serving.push(order[1]);
            }
            if u < p * p {
                serving.push(order[2]);
            }
            serving.sort();
            let yq = report_quarter(ym, AlignmentMode::Shifted);
            let ctx = MarketMonthContext {
                market: market.clone(),
                year_month: ym,
                serving: serving
                    .iter()
                    .map(|c| ServingCarrier {
                        carrier: registry.carrier(c),
                        flag: if registry.is_legacy(c) { flags.get(&(*c, yq)).copied() } else { Some(false) },
                    })
                    .collect(),
            };
            let r = f64::from(u8::from(te)) - p;
            let tau = trend_value(ym) - dgp.start.year as f64;
            for c in &serving {
                let ind = indicators(&ctx, c);
                let ln_seats = 9.0
                    + dgp.beta_capdis * ind.capacity_discipline
                    + dgp.beta_talk_eligible * ind.talk_eligible
                    + mu_cm[c]
                    + mu_cq[&(*c, ym.quarter())]
                    + slope * tau
                    + dgp.lambda * r
                    + dgp.sigma * normal(&mut rng);
                let seats = ln_seats.exp().round() as u64;
                rows.push(PanelObservation {
                    carrier: registry.carrier(c),
                    market: market.clone(),
                    year_month: ym,
                    seats,
                    flights: flights_for(seats),
                    passengers: seats * 4 / 5,
                    indicators: ind,
                    market_type: ctx.market_type(),
                    n_legacy: ctx.n_legacy() as u32,
                    n_carriers: serving.len() as u32,
                    structure_key: market_structure_key(c, &market, serving.iter().copied(), &registry),
                    extra: BTreeMap::new(),
                    avg_fare: None,
                    market_population: None,
                    business_index: None,
                });
            }
        }
        rows.sort_by(|x, y| (&x.carrier.code, x.year_month).cmp(&(&y.carrier.code, y.year_month)));
        observations.extend(rows);
    }
    let mut beta = vec![0.0; 6];
    beta[0] = dgp.beta_capdis;
    beta[1] = dgp.beta_talk_eligible;
    Ok(EndogenousSample {
        observations,
        instruments,
        truth: Truth {
            names: BETA_NAMES.iter().map(|s| s.to_string()).collect(),
            beta,
        },
    })
}

/// Flat two-way fixed-effects problem at arbitrary scale: `groups` units
/// observed for `periods` periods, unit and carrier-period effects, six
/// regressors (four dummies, two continuous) and clusters on units.
#[derive(Debug, Clone)]
pub struct ScaleDgp {
    pub groups: usize,
    pub periods: usize,
    pub carriers: usize,
    pub beta: [f64; 6],
    pub sigma: f64,
    pub seed: u64,
}

impl Default for ScaleDgp {
    fn default() -> Self {
        ScaleDgp {
            groups: 25_000,
            periods: 34,
            carriers: 10,
            beta: [-0.0204, 0.03, 0.05, -0.01, 0.2, -0.1],
            sigma: 0.1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScaleSample {
    pub outcome: Vec<f64>,
    pub regressors: Vec<Regressor>,
    pub fe: FixedEffectSpec,
    pub clusters: Vec<u32>,
    pub truth: Truth,
}

pub fn gen_scale(dgp: &ScaleDgp) -> Result<ScaleSample, Error> {
    if dgp.groups < 2 || dgp.periods < 2 || dgp.carriers == 0 {
        return Err(Error::Config("scale panel needs at least two groups and periods".into()));
    }
    let mut rng = rng(dgp.seed);
    let n = dgp.groups * dgp.periods;
    let names = ["d1", "d2", "d3", "d4", "x1", "x2"];
    let mut cols: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(n)).collect();
    let mut outcome = Vec::with_capacity(n);
    let mut unit = Vec::with_capacity(n);
    let mut carrier_period = Vec::with_capacity(n);
    let mu_cp: Vec<f64> = (0..dgp.carriers * dgp.periods).map(|_| 0.05 * normal(&mut rng)).collect();
    for g in 0..dgp.groups {
        let c = g % dgp.carriers;
        let mu = 0.5 * normal(&mut rng);
        let rates: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..0.6)).collect();
        for t in 0..dgp.periods {
            let mut y = 9.0 + mu + mu_cp[c * dgp.periods + t] + dgp.sigma * normal(&mut rng);
            for k in 0..6 {
                let x = if k < 4 {
                    f64::from(u8::from(rng.random::<f64>() < rates[k]))
                } else {
                    normal(&mut rng) + 0.3 * mu
                };
                y += dgp.beta[k] * x;
                cols[k].push(x);
            }
            outcome.push(y);
            unit.push(g as u32);
            carrier_period.push((c * dgp.periods + t) as u32);
        }
    }
    let regressors = names
        .iter()
        .zip(cols)
        .enumerate()
        .map(|(k, (name, v))| if k < 4 { Regressor::dummy(name, v) } else { Regressor::continuous(name, v) })
        .collect();
    let fe = FixedEffectSpec::new(
        vec![Factor::from_keys("unit", unit.iter().copied()), Factor::from_keys("carrier-period", carrier_period)],
        vec![],
    );
    Ok(ScaleSample {
        outcome,
        regressors,
        fe,
        clusters: unit,
        truth: Truth {
            names: names.iter().map(|s| s.to_string()).collect(),
            beta: dgp.beta.to_vec(),
        },
    })
}

/// Corpus with anchors and planted neighbours at chosen report
/// co-occurrence rates.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub anchors: Vec<String>,
    /// (token, share of its reports that also contain every anchor).
    pub planted: Vec<(String, f64)>,
    /// Tokens that only appear in ordinary sentences.
    pub controls: Vec<String>,
    pub filler_vocab: usize,
    pub reports: usize,
    pub sentences_per_report: usize,
    pub sentence_len: usize,
    /// Anchor sentences per anchored report.
    pub anchor_sentences: usize,
    /// Reports each planted token appears in.
    pub occurrences: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            anchors: crate::embed::DEFAULT_ANCHORS.iter().map(|s| s.to_string()).collect(),
            planted: vec![("stable".into(), 1.0)],
            controls: vec!["baggage".into()],
            filler_vocab: 150,
            reports: 120,
            sentences_per_report: 12,
            sentence_len: 10,
            anchor_sentences: 4,
            occurrences: 60,
            seed: 1,
        }
    }
}

/// Lemma sequences grouped by report.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub reports: Vec<Vec<Vec<String>>>,
}

impl SyntheticCorpus {
    pub fn sentences(&self) -> Vec<Vec<String>> {
        self.reports.iter().flatten().cloned().collect()
    }

    pub fn report_sets(&self) -> Vec<BTreeSet<String>> {
        self.reports.iter().map(|r| r.iter().flatten().cloned().collect()).collect()
    }
}

/// Even-numbered reports are anchored: they carry anchor sentences holding
/// every anchor. A planted token with rate r appears in `occurrences`
/// reports, round(r·occurrences) of them anchored (inside the anchor
/// sentences); otherwise it sits in an ordinary sentence.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<SyntheticCorpus, Error> {
    let anchored: Vec<usize> = (0..spec.reports).step_by(2).collect();
    let plain: Vec<usize> = (1..spec.reports).step_by(2).collect();
    if spec.sentence_len < spec.anchors.len() + spec.planted.len() + 1 || spec.filler_vocab == 0 {
        return Err(Error::Config("sentences too short for anchors and planted tokens".into()));
    }
    let mut rng = rng(spec.seed);
    let filler: Vec<String> = (0..spec.filler_vocab).map(|i| format!("w{i:03}")).collect();
    let mut placements: Vec<BTreeSet<(usize, bool)>> = vec![BTreeSet::new(); spec.reports];
    for (p, (_, rate)) in spec.planted.iter().enumerate() {
        if !(0.0..=1.0).contains(rate) {
            return Err(Error::Config(format!("rate {rate} outside [0, 1]")));
        }
        let n_anch = ((rate * spec.occurrences as f64).round() as usize).min(anchored.len());
        let n_plain = (spec.occurrences - n_anch.min(spec.occurrences)).min(plain.len());
        for k in index::sample(&mut rng, anchored.len(), n_anch) {
            placements[anchored[k]].insert((p, true));
        }
        for k in index::sample(&mut rng, plain.len(), n_plain) {
            placements[plain[k]].insert((p, false));
        }
    }
    let mut reports = Vec::with_capacity(spec.reports);
    for (r, placed) in placements.iter().enumerate() {
        let mut sentences = Vec::with_capacity(spec.sentences_per_report);
        let is_anchored = r % 2 == 0;
        for s in 0..spec.sentences_per_report {
            let mut words: Vec<String> = Vec::with_capacity(spec.sentence_len);
            if is_anchored && s < spec.anchor_sentences {
                words.extend(spec.anchors.iter().cloned());
                words.extend(placed.iter().filter(|(_, a)| *a).map(|(p, _)| spec.planted[*p].0.clone()));
            } else if s == spec.anchor_sentences {
                words.extend(placed.iter().filter(|(_, a)| !*a).map(|(p, _)| spec.planted[*p].0.clone()));
                words.extend(spec.controls.iter().cloned());
            }
            while words.len() < spec.sentence_len {
                words.push(filler.choose(&mut rng).expect("non-empty filler").clone());
            }
            words.shuffle(&mut rng);
            sentences.push(words);
        }
        reports.push(sentences);
    }
    Ok(SyntheticCorpus { reports })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NetworkDesign {
    Ring(usize),
    Star(usize),
    /// Uniform random recursive tree.
    RandomTree(usize),
    /// Erdős–Rényi graph (may be disconnected).
    Random { nodes: usize, edge_prob: f64 },
    /// The bundled illustrative network.
    Illustrative,
}

fn node_name(i: usize) -> String {
    format!("N{i:02}")
}

pub fn gen_network(design: NetworkDesign, seed: u64) -> CarrierNetwork {
    let mut rng = rng(seed);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let n = match design {
        NetworkDesign::Illustrative => return illustrative_network(),
        NetworkDesign::Ring(n) => {
            edges.extend((0..n).map(|i| (i, (i + 1) % n)));
            n
        }
        NetworkDesign::Star(n) => {
            edges.extend((1..n).map(|i| (0, i)));
            n
        }
        NetworkDesign::RandomTree(n) => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            edges.extend((1..n).map(|i| (perm[i], perm[rng.random_range(0..i)])));
            n
        }
        NetworkDesign::Random { nodes, edge_prob } => {
            for i in 0..nodes {
                for j in i + 1..nodes {
                    if rng.random_bool(edge_prob) {
                        edges.push((i, j));
                    }
                }
            }
            nodes
        }
    };
    let names: Vec<String> = (0..n).map(node_name).collect();
    let mut net = CarrierNetwork::from_edges(
        "SYN",
        &format!("{design:?}"),
        edges.iter().map(|&(a, b)| (names[a].as_str(), names[b].as_str())),
    );
    // Isolated nodes have no edges; add them so the node count is exact.
    for name in &names {
        if net.index_of(name).is_none() {
            let pos = net.nodes.binary_search(name).unwrap_err();
            net.nodes.insert(pos, name.clone());
            for nb in net.adjacency.iter_mut() {
                for v in nb.iter_mut() {
                    if *v >= pos {
                        *v += 1;
                    }
                }
            }
            net.adjacency.insert(pos, Vec::new());
        }
    }
    net
}

/// Settings for the bundled on-disk fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub panel: PanelDgp,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            panel: PanelDgp {
                n_clusters: 40,
                n_months: 24,
                mergers: vec![("CO".into(), "UA".into())],
                ..PanelDgp::default()
            },
            seed: 7,
        }
    }
}

impl FixtureSpec {
    pub fn with_seed(seed: u64) -> Self {
        let d = FixtureSpec::default();
        FixtureSpec {
            seed,
            panel: PanelDgp { seed, ..d.panel },
        }
    }
}

/// Files of a generated fixture, keyed by relative path.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub files: BTreeMap<String, String>,
    pub panel: SyntheticPanel,
}

pub const CONFIG_FILE: &str = "capdis.conf";

const FILLER: [&str; 40] = [
    "revenue", "fleet", "quarter", "fuel", "labor", "network", "customer", "loyalty", "margin", "cost", "unit",
    "hedge", "pension", "airport", "route", "schedule", "premium", "cabin", "cargo", "balance", "debt", "cash",
    "liquidity", "yield", "fare", "booking", "partner", "alliance", "hub", "aircraft", "delivery", "maintenance",
    "technology", "investment", "program", "traffic", "passenger", "operation", "performance", "result",
];

fn filler_sentence(rng: &mut ChaCha8Rng, n: usize) -> String {
    let words: Vec<&str> = (0..n).map(|_| *FILLER.choose(rng).expect("non-empty")).collect();
    let mut s = words.join(" ");
    s.push('.');
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => s,
    }
}

/// Transcript text for one call. Talking calls put the phrase, `demand`,
/// `gdp` and the planted words `stable` and `pace` in management sentences;
/// some silent calls also use `stable`.
/// `review` adds a management sentence with `capacity` and `demand` but no
/// phrase.
fn transcript_text(rng: &mut ChaCha8Rng, carrier: &str, yq: YearQuarter, talks: bool, review: bool) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "<<SPEAKER:operator>>\nWelcome to the {carrier} {} Q{} earnings call.", yq.year, yq.quarter);
    t.push_str("<<SPEAKER:management>>\n");
    for _ in 0..4 {
        let _ = writeln!(t, "{}", filler_sentence(rng, 8));
    }
    if talks {
        let _ = writeln!(t, "We remain committed to capacity discipline as demand and gdp growth stay stable.");
        let _ = writeln!(t, "Capacity discipline keeps pace with demand and gdp.");
    } else {
        let _ = writeln!(t, "Demand improved with gdp at a slow pace.");
        if rng.random_bool(0.3) {
            let _ = writeln!(t, "Fleet plans remain stable.");
        }
    }
    if review {
        let _ = writeln!(t, "Capacity will follow demand.");
    }
    t.push_str("<<SPEAKER:analyst>>\nCan you talk about capacity discipline across the industry?\n");
    t.push_str("<<SPEAKER:management>>\n");
    for _ in 0..3 {
        let _ = writeln!(t, "{}", filler_sentence(rng, 8));
    }
    t
}

fn csv_string<F>(f: F) -> Result<String, Error>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), Error>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Config(e.to_string()))
}

/// Generates every input file the CLI consumes plus `truth.csv` and a
/// config file pointing at them.
pub fn gen_fixture(spec: &FixtureSpec) -> Result<Fixture, Error> {
    let mut panel_dgp = spec.panel.clone();
    panel_dgp.seed = spec.seed;
    let panel = gen_panel(&panel_dgp)?;
    let mut rng = rng(spec.seed ^ 0x5eed_f1c7);
    let mut files = BTreeMap::new();

    files.insert("segments.csv".to_string(), csv_string(|b| io::write_segments(b, &panel.segments))?);
    files.insert("truth.csv".to_string(), panel.truth.to_csv());

    let mut status = String::from("carrier,year,quarter,status\n");
    let mut labels = String::from("carrier,year,quarter,label,source\n");
    let other = [TranscriptStatus::Bankruptcy, TranscriptStatus::Merger, TranscriptStatus::Private, TranscriptStatus::Other];
    for ((carrier, yq), flag) in &panel.reports {
        let st = match flag {
            Some(_) => TranscriptStatus::Collected,
            None => *other.choose(&mut rng).expect("non-empty"),
        };
        let _ = writeln!(status, "{carrier},{},{},{}", yq.year, yq.quarter, st.as_str());
        if let Some(talks) = *flag {
            let review = !talks && rng.random_bool(0.1);
            let text = transcript_text(&mut rng, carrier, *yq, talks, review);
            files.insert(format!("transcripts/{}", io::transcript_name(carrier, *yq)), text);
            if review {
                let _ = writeln!(labels, "{carrier},{},{},0,authors", yq.year, yq.quarter);
            } else if rng.random_bool(0.05) {
                let _ = writeln!(labels, "{carrier},{},{},{},ra", yq.year, yq.quarter, u8::from(talks));
            }
        }
    }
    files.insert("status.csv".to_string(), status);
    files.insert("labels.csv".to_string(), labels);

    let airports: BTreeSet<&str> = panel
        .segments
        .iter()
        .flat_map(|s| [s.origin.as_str(), s.dest.as_str()])
        .collect();
    let mut coords = String::from("airport,lat,lon\n");
    let mut cities = String::from("airport,city\n");
    let mut pops = String::from("airport,year,cbsa_pop,business_index\n");
    let years: BTreeSet<i32> = panel.segments.iter().map(|s| s.year_month.year).collect();
    for a in &airports {
        let (lat, lon, city) = match AIRPORTS.iter().find(|x| x.0 == *a) {
            Some(x) => (x.1, x.2, x.3.to_string()),
            None => (rng.random_range(26.0..48.0), rng.random_range(-122.0..-71.0), format!("City {a}")),
        };
        let _ = writeln!(coords, "{a},{},{}", io::fixed(lat), io::fixed(lon));
        let _ = writeln!(cities, "{a},{city}");
        let base_pop = (14.5 + 0.8 * normal(&mut rng)).exp();
        let biz = rng.random_range(0.0..1.0);
        for y in &years {
            let pop = (base_pop * (1.0 + 0.01 * (*y - 2010) as f64)).round();
            let _ = writeln!(pops, "{a},{y},{},{}", io::fixed(pop), io::fixed(biz));
        }
    }
    files.insert("coordinates.csv".to_string(), coords);
    files.insert("cities.csv".to_string(), cities);
    files.insert("populations.csv".to_string(), pops);

    let mut mergers = String::from("code,entity\n");
    for (c, e) in &panel_dgp.mergers {
        let _ = writeln!(mergers, "{c},{e}");
    }
    files.insert("mergers.csv".to_string(), mergers);

    let ontime_months: Vec<YearMonth> = (0..12).map(|k| panel_dgp.start.add_months(k)).collect();
    let mut ontime = String::from("date,carrier,origin,dest,dep_minutes\n");
    for o in panel.observations.iter().filter(|o| ontime_months.contains(&o.year_month)) {
        let n = rng.random_range(2..=6);
        let day = rng.random_range(1..=28);
        for _ in 0..n {
            let minute = rng.random_range(300..1380);
            let _ = writeln!(
                ontime,
                "{:04}-{:02}-{day:02},{},{},{},{minute}",
                o.year_month.year, o.year_month.month, o.carrier.code, o.market.origin, o.market.destination
            );
        }
    }
    files.insert("ontime.csv".to_string(), ontime);

    let mut fares = String::from("carrier,origin,dest,route,passengers,avg_fare,year,quarter\n");
    let mut seen: BTreeSet<(String, String, String, YearQuarter)> = BTreeSet::new();
    let hubs = ["ATL", "DFW", "ORD", "DEN"];
    for o in &panel.observations {
        let q = o.year_month.quarter();
        if !seen.insert((o.carrier.code.clone(), o.market.origin.clone(), o.market.destination.clone(), q)) {
            continue;
        }
        let base = rng.random_range(150.0..450.0);
        let pax = rng.random_range(50..500);
        let _ = writeln!(
            fares,
            "{},{},{},{}-{},{pax},{},{},{}",
            o.carrier.code,
            o.market.origin,
            o.market.destination,
            o.market.origin,
            o.market.destination,
            io::fixed(base),
            q.year,
            q.quarter
        );
        let hub = hubs[rng.random_range(0..hubs.len())];
        if hub != o.market.origin && hub != o.market.destination {
            let _ = writeln!(
                fares,
                "{},{},{},{}-{hub}-{},{},{},{},{}",
                o.carrier.code,
                o.market.origin,
                o.market.destination,
                o.market.origin,
                o.market.destination,
                rng.random_range(10..100),
                io::fixed(base * 0.85),
                q.year,
                q.quarter
            );
        }
    }
    files.insert("fares.csv".to_string(), fares);

    let conf = format!(
        "# generated fixture\nsegments = segments.csv\ntranscripts = transcripts\nstatus = status.csv\nlabels = labels.csv\n\
         coordinates = coordinates.csv\npopulations = populations.csv\nontime = ontime.csv\nfares = fares.csv\n\
         cities = cities.csv\nmergers = mergers.csv\ntokens = stable\nseed = {}\n",
        spec.seed
    );
    files.insert(CONFIG_FILE.to_string(), conf);
    Ok(Fixture { files, panel })
}

impl Fixture {
    pub fn write(&self, dir: &Path) -> Result<(), Error> {
        for (rel, content) in &self.files {
            let p = dir.join(rel);
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&p, content)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_is_deterministic_and_consistent() {
        let dgp = PanelDgp { n_clusters: 10, n_months: 12, ..PanelDgp::default() };
        let a = gen_panel(&dgp).unwrap();
        let b = gen_panel(&dgp).unwrap();
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.segments, b.segments);
        assert!(!a.observations.is_empty());
        assert!(a.observations.iter().all(|o| o.check_invariants() && o.flights >= 4));
        let c = gen_panel(&PanelDgp { seed: 2, ..dgp }).unwrap();
        assert_ne!(a.observations, c.observations);
    }

    #[test]
    fn corpus_rates() {
        let spec = CorpusSpec {
            planted: vec![("hi".into(), 0.9), ("lo".into(), 0.1)],
            ..CorpusSpec::default()
        };
        let c = gen_corpus(&spec).unwrap();
        let sets = c.report_sets();
        let co = crate::embed::report_cooccurrence(&sets, &spec.anchors);
        assert!((co["hi"] - 0.9).abs() < 1e-12);
        assert!((co["lo"] - 0.1).abs() < 1e-12);
        assert_eq!(co["baggage"], 0.5);
        assert_eq!(gen_corpus(&spec).unwrap(), c);
    }

    #[test]
    fn network_designs() {
        assert_eq!(gen_network(NetworkDesign::Ring(6), 0).len(), 6);
        let t = gen_network(NetworkDesign::RandomTree(8), 3);
        assert_eq!(t.adjacency.iter().map(Vec::len).sum::<usize>(), 14);
        let r = gen_network(NetworkDesign::Random { nodes: 7, edge_prob: 0.0 }, 1);
        assert_eq!(r.len(), 7);
        assert_eq!(gen_network(NetworkDesign::Illustrative, 0), illustrative_network());
    }
}
