//! Regression designs built from panel rows: outcome, treatment and control
//! columns for each specification variant, fixed effects, trends and clusters.

use std::collections::BTreeMap;
use std::fmt;

use crate::domain::{CarrierClass, ClusterKey, Indicators, Market, MarketType, PanelObservation, YearMonth};
use crate::econ::{Factor, FixedEffectSpec, Regressor, StageData, TrendGroup};
use crate::error::Error;

pub const CAPACITY_DISCIPLINE: &str = "Capacity Discipline";
pub const TALK_ELIGIBLE: &str = "Talk Eligible";
pub const MONOPOLY: &str = "Monopoly";
pub const MISSING_REPORT: &str = "MissingReport";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Treatment {
    Main,
    KSplit,
    LegacyMixed,
    OnlyJ,
    Monopoly,
    NMinus1,
    NotJ,
    ZToken(String),
    PeriodSplit(YearMonth),
}

impl Treatment {
    pub fn parse(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        if let Some(tok) = s.strip_prefix("z-token:") {
            if tok.is_empty() {
                return Err(Error::Config("z-token needs a token".into()));
            }
            return Ok(Treatment::ZToken(tok.to_string()));
        }
        if let Some(date) = s.strip_prefix("period-split:") {
            return parse_year_month(date).map(Treatment::PeriodSplit);
        }
        Ok(match s {
            "main" => Treatment::Main,
            "k-split" => Treatment::KSplit,
            "legacy-mixed" => Treatment::LegacyMixed,
            "only-j" => Treatment::OnlyJ,
            "monopoly" => Treatment::Monopoly,
            "n-1" => Treatment::NMinus1,
            "not-j" => Treatment::NotJ,
            other => return Err(Error::Config(format!("unknown treatment variant `{other}`"))),
        })
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Treatment::Main => f.write_str("main"),
            Treatment::KSplit => f.write_str("k-split"),
            Treatment::LegacyMixed => f.write_str("legacy-mixed"),
            Treatment::OnlyJ => f.write_str("only-j"),
            Treatment::Monopoly => f.write_str("monopoly"),
            Treatment::NMinus1 => f.write_str("n-1"),
            Treatment::NotJ => f.write_str("not-j"),
            Treatment::ZToken(t) => write!(f, "z-token:{t}"),
            Treatment::PeriodSplit(m) => write!(f, "period-split:{:04}-{:02}", m.year, m.month),
        }
    }
}

/// Accepts `YYYY-MM`.
pub fn parse_year_month(s: &str) -> Result<YearMonth, Error> {
    let bad = || Error::Config(format!("expected YYYY-MM, got `{s}`"));
    let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
    let y: i32 = y.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    YearMonth::new(y, m).map_err(|_| bad())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeVariant {
    #[default]
    CarrierMarket,
    CarrierMarketStructure,
}

impl FeVariant {
    pub fn parse(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "carrier-market" => Ok(FeVariant::CarrierMarket),
            "carrier-market-structure" => Ok(FeVariant::CarrierMarketStructure),
            other => Err(Error::Config(format!("unknown fixed-effect variant `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeVariant::CarrierMarket => "carrier-market",
            FeVariant::CarrierMarketStructure => "carrier-market-structure",
        }
    }
}

/// Inputs for one within regression.
#[derive(Debug, Clone)]
pub struct Design {
    pub outcome: Vec<f64>,
    pub regressors: Vec<Regressor>,
    /// Regressors shown in result tables; the rest are controls.
    pub reported: Vec<String>,
    pub fe: FixedEffectSpec,
    pub clusters: Vec<u32>,
}

/// Months as a continuous year: `year + (month − 1)/12`.
pub fn trend_value(m: YearMonth) -> f64 {
    m.year as f64 + (m.month - 1) as f64 / 12.0
}

/// Carrier(-market or -structure) FE, carrier-year-quarter FE, and origin
/// and destination linear trends.
pub fn fixed_effects(panel: &[PanelObservation], variant: FeVariant) -> FixedEffectSpec {
    let unit = match variant {
        FeVariant::CarrierMarket => Factor::from_keys(
            "carrier-market",
            panel.iter().map(|o| {
                (
                    o.carrier.merger_group.clone(),
                    o.market.origin.clone(),
                    o.market.destination.clone(),
                )
            }),
        ),
        FeVariant::CarrierMarketStructure => {
            Factor::from_keys("carrier-market-structure", panel.iter().map(|o| o.structure_key.clone()))
        }
    };
    let cyq = Factor::from_keys(
        "carrier-year-quarter",
        panel.iter().map(|o| (o.carrier.merger_group.clone(), o.year_month.quarter())),
    );
    let t: Vec<f64> = panel.iter().map(|o| trend_value(o.year_month)).collect();
    let origin = TrendGroup::from_keys("origin-trend", panel.iter().map(|o| o.market.origin.clone()), t.clone());
    let dest = TrendGroup::from_keys("destination-trend", panel.iter().map(|o| o.market.destination.clone()), t);
    FixedEffectSpec::new(vec![unit, cyq], vec![origin, dest])
}

/// Bi-directional market cluster ids, numbered by first appearance.
pub fn clusters(panel: &[PanelObservation]) -> Vec<u32> {
    crate::econ::absorb::encode(panel.iter().map(|o| o.cluster_key())).0
}

/// Talk Eligible, Monopoly, MissingReport and the MissingReport interactions.
pub fn controls(i: &Indicators) -> [(&'static str, f64); 5] {
    [
        (TALK_ELIGIBLE, i.talk_eligible),
        (MONOPOLY, i.monopoly),
        (MISSING_REPORT, i.missing_report),
        ("Talk Eligible x MissingReport", i.talk_eligible * i.missing_report),
        ("Monopoly x MissingReport", i.monopoly * i.missing_report),
    ]
}

fn legacy_bucket(n: u32) -> &'static str {
    match n {
        0 | 1 => "0-1 legacy",
        2 => "2 legacy",
        3 => "3 legacy",
        4 => "4 legacy",
        _ => "5+ legacy",
    }
}

/// Legacy market, mixed market with a legacy carrier j, mixed market with a
/// non-legacy j, or market without legacies.
fn market_group(o: &PanelObservation) -> &'static str {
    match (o.market_type, o.carrier.class) {
        (MarketType::Legacy, _) => "legacy market",
        (MarketType::Mixed, CarrierClass::Legacy) => "mixed market, legacy j",
        (MarketType::Mixed, _) => "mixed market, LCC j",
        (MarketType::NonLegacy, _) => "non-legacy market",
    }
}

/// Named columns filled row by row; all-zero columns are dropped and 0/1
/// columns become dummies.
#[derive(Default)]
pub struct Columns {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl Columns {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: usize, name: &str, v: f64) {
        let idx = match self.names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                self.names.push(name.to_string());
                self.values.push(Vec::new());
                self.names.len() - 1
            }
        };
        let col = &mut self.values[idx];
        col.resize(row, 0.0);
        col.push(v);
    }

    pub fn finish(self, rows: usize) -> Vec<Regressor> {
        self.names
            .into_iter()
            .zip(self.values)
            .filter_map(|(name, mut v)| {
                v.resize(rows, 0.0);
                if v.iter().all(|&x| x == 0.0) {
                    return None;
                }
                let binary = v.iter().all(|&x| x == 0.0 || x == 1.0);
                Some(if binary { Regressor::dummy(&name, v) } else { Regressor::continuous(&name, v) })
            })
            .collect()
    }
}

/// Builds the outcome (log seats), treatment and control columns for a
/// specification variant.
pub fn build_design(panel: &[PanelObservation], treatment: &Treatment, fe: FeVariant) -> Result<Design, Error> {
    if panel.is_empty() {
        return Err(Error::Config("empty panel".into()));
    }
    let mut treat = Columns::new();
    let mut ctrl = Columns::new();
    for (r, o) in panel.iter().enumerate() {
        let i = &o.indicators;
        match treatment {
            Treatment::Main => treat.push(r, CAPACITY_DISCIPLINE, i.capacity_discipline),
            Treatment::KSplit => {
                treat.push(r, "Capacity Discipline (2 legacy)", i.capdis_2);
                treat.push(r, "Capacity Discipline (3 legacy)", i.capdis_3);
                treat.push(r, "Capacity Discipline (4+ legacy)", i.capdis_4);
            }
            Treatment::LegacyMixed => {
                let g = market_group(o);
                for cell in ["legacy market", "mixed market, legacy j", "mixed market, LCC j"] {
                    let v = if g == cell { i.capacity_discipline } else { 0.0 };
                    treat.push(r, &format!("Capacity Discipline x {cell}"), v);
                }
            }
            Treatment::OnlyJ => {
                treat.push(r, CAPACITY_DISCIPLINE, i.capacity_discipline);
                treat.push(r, "Only j Talks", i.only_j_talks);
            }
            Treatment::Monopoly => {
                treat.push(r, CAPACITY_DISCIPLINE, i.capacity_discipline);
                treat.push(r, "Monopoly Capacity Discipline", i.monopoly_capdis);
            }
            Treatment::NMinus1 => {
                treat.push(r, CAPACITY_DISCIPLINE, i.capacity_discipline);
                treat.push(r, "Capacity Discipline N-1", i.capdis_n1);
            }
            Treatment::NotJ => {
                treat.push(r, CAPACITY_DISCIPLINE, i.capacity_discipline);
                treat.push(r, "Capacity Discipline not j", i.capdis_not_j);
            }
            Treatment::ZToken(tok) => {
                let key = format!("z_{tok}");
                let z = o
                    .extra
                    .get(&key)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("panel has no `{key}` column")))?;
                treat.push(r, CAPACITY_DISCIPLINE, i.capacity_discipline);
                treat.push(r, &format!("Z {tok}"), z);
            }
            Treatment::PeriodSplit(m) => {
                let cd = i.capacity_discipline;
                let post = o.year_month >= *m;
                treat.push(r, "Capacity Discipline pre", if post { 0.0 } else { cd });
                treat.push(r, "Capacity Discipline post", if post { cd } else { 0.0 });
            }
        }
        for (name, v) in controls(i) {
            match treatment {
                Treatment::KSplit => ctrl.push(r, &format!("{name} x {}", legacy_bucket(o.n_legacy)), v),
                Treatment::LegacyMixed => ctrl.push(r, &format!("{name} x {}", market_group(o)), v),
                _ => ctrl.push(r, name, v),
            }
        }
    }
    let n = panel.len();
    let mut regressors = treat.finish(n);
    let reported = regressors.iter().map(|r| r.name.clone()).collect();
    regressors.extend(ctrl.finish(n));
    Ok(Design {
        outcome: panel.iter().map(|o| (o.seats as f64).ln()).collect(),
        regressors,
        reported,
        fe: fixed_effects(panel, fe),
        clusters: clusters(panel),
    })
}

/// One market-month aggregated over serving carriers.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketMonth {
    pub market: Market,
    pub year_month: YearMonth,
    pub seats: u64,
    pub flights: u64,
    pub indicators: Indicators,
}

impl MarketMonth {
    pub fn cluster_key(&self) -> ClusterKey {
        self.market.cluster_key()
    }
}

/// Sums seats and flights per market-month; the market-level indicators are
/// taken from the first carrier row.
pub fn market_months(panel: &[PanelObservation]) -> Vec<MarketMonth> {
    let mut acc: BTreeMap<(&Market, YearMonth), MarketMonth> = BTreeMap::new();
    for o in panel {
        let e = acc.entry((&o.market, o.year_month)).or_insert_with(|| MarketMonth {
            market: o.market.clone(),
            year_month: o.year_month,
            seats: 0,
            flights: 0,
            indicators: o.indicators,
        });
        e.seats += o.seats;
        e.flights += o.flights;
    }
    acc.into_values().collect()
}

/// Market FE, year-quarter FE and origin/destination trends.
pub fn market_fixed_effects(rows: &[MarketMonth]) -> FixedEffectSpec {
    let t: Vec<f64> = rows.iter().map(|r| trend_value(r.year_month)).collect();
    FixedEffectSpec::new(
        vec![
            Factor::from_keys("market", rows.iter().map(|r| r.market.clone())),
            Factor::from_keys("year-quarter", rows.iter().map(|r| r.year_month.quarter())),
        ],
        vec![
            TrendGroup::from_keys("origin-trend", rows.iter().map(|r| r.market.origin.clone()), t.clone()),
            TrendGroup::from_keys("destination-trend", rows.iter().map(|r| r.market.destination.clone()), t),
        ],
    )
}

/// Market-level design: `extra` columns (named, full length) come first,
/// then Capacity Discipline and the controls. The outcome is supplied.
pub fn market_design(rows: &[MarketMonth], outcome: Vec<f64>, extra: Vec<(String, Vec<f64>)>) -> Result<Design, Error> {
    if rows.is_empty() {
        return Err(Error::Config("no market-months".into()));
    }
    let mut treat = Columns::new();
    let mut ctrl = Columns::new();
    for (r, m) in rows.iter().enumerate() {
        treat.push(r, CAPACITY_DISCIPLINE, m.indicators.capacity_discipline);
        for (name, v) in &extra {
            treat.push(r, name, v[r]);
        }
        for (name, v) in controls(&m.indicators) {
            ctrl.push(r, name, v);
        }
    }
    let n = rows.len();
    let mut regressors = treat.finish(n);
    let reported = regressors.iter().map(|r| r.name.clone()).collect();
    regressors.extend(ctrl.finish(n));
    Ok(Design {
        outcome,
        regressors,
        reported,
        fe: market_fixed_effects(rows),
        clusters: crate::econ::absorb::encode(rows.iter().map(|r| r.cluster_key())).0,
    })
}

/// Market-month instrument values (e.g. hub distances per carrier group).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstrumentTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<(Market, YearMonth), Vec<f64>>,
}

/// Both stages of the control-function estimator.
#[derive(Debug, Clone)]
pub struct ControlFunctionDesign {
    pub first: StageData,
    pub instruments: Vec<String>,
    pub second: StageData,
    pub reported: Vec<String>,
    /// Market-months of the panel without instrument values.
    pub missing_instruments: usize,
}

/// First stage: Talk Eligible on the instruments, Monopoly, MissingReport and
/// their interaction, with market and year-quarter FE and airport trends, one
/// row per market-month. Second stage: the main design, linked by
/// market-month.
pub fn control_function_design(
    panel: &[PanelObservation],
    instruments: &InstrumentTable,
    fe: FeVariant,
) -> Result<ControlFunctionDesign, Error> {
    let second_design = build_design(panel, &Treatment::Main, fe)?;
    let mut market_months: BTreeMap<(&Market, YearMonth), usize> = BTreeMap::new();
    for (i, o) in panel.iter().enumerate() {
        market_months.entry((&o.market, o.year_month)).or_insert(i);
    }
    let ids: BTreeMap<(&Market, YearMonth), u64> =
        market_months.keys().enumerate().map(|(k, &mm)| (mm, k as u64)).collect();
    let cluster_ids: BTreeMap<ClusterKey, u32> = panel
        .iter()
        .zip(&second_design.clusters)
        .map(|(o, &c)| (o.cluster_key(), c))
        .collect();

    let mut rows: Vec<(usize, &Vec<f64>, u64)> = Vec::new();
    let mut missing = 0;
    for (&(m, ym), &i) in &market_months {
        match instruments.rows.get(&(m.clone(), ym)) {
            Some(v) if v.len() == instruments.names.len() => rows.push((i, v, ids[&(m, ym)])),
            Some(v) => {
                return Err(Error::Config(format!(
                    "instrument row has {} values for {} names",
                    v.len(),
                    instruments.names.len()
                )))
            }
            None => missing += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::Config("no market-month has instrument values".into()));
    }
    let mut cols = Columns::new();
    for (r, (i, v, _)) in rows.iter().enumerate() {
        for (name, x) in instruments.names.iter().zip(v.iter()) {
            cols.push(r, name, *x);
        }
        let ind = &panel[*i].indicators;
        cols.push(r, MONOPOLY, ind.monopoly);
        cols.push(r, MISSING_REPORT, ind.missing_report);
        cols.push(r, "Monopoly x MissingReport", ind.monopoly * ind.missing_report);
    }
    let n = rows.len();
    let obs: Vec<&PanelObservation> = rows.iter().map(|(i, _, _)| &panel[*i]).collect();
    let t: Vec<f64> = obs.iter().map(|o| trend_value(o.year_month)).collect();
    let first = StageData {
        outcome: obs.iter().map(|o| o.indicators.talk_eligible).collect(),
        regressors: cols.finish(n),
        fe: FixedEffectSpec::new(
            vec![
                Factor::from_keys("market", obs.iter().map(|o| o.market.clone())),
                Factor::from_keys("year-quarter", obs.iter().map(|o| o.year_month.quarter())),
            ],
            vec![
                TrendGroup::from_keys("origin-trend", obs.iter().map(|o| o.market.origin.clone()), t.clone()),
                TrendGroup::from_keys("destination-trend", obs.iter().map(|o| o.market.destination.clone()), t),
            ],
        ),
        clusters: obs.iter().map(|o| cluster_ids[&o.cluster_key()]).collect(),
        key: rows.iter().map(|r| r.2).collect(),
    };
    let second = StageData {
        key: panel.iter().map(|o| ids[&(&o.market, o.year_month)]).collect(),
        outcome: second_design.outcome,
        regressors: second_design.regressors,
        fe: second_design.fe,
        clusters: second_design.clusters,
    };
    Ok(ControlFunctionDesign {
        first,
        instruments: instruments.names.clone(),
        second,
        reported: second_design.reported,
        missing_instruments: missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_variants() {
        assert_eq!(Treatment::parse("main").unwrap(), Treatment::Main);
        assert_eq!(Treatment::parse("z-token:stable").unwrap(), Treatment::ZToken("stable".into()));
        assert_eq!(
            Treatment::parse("period-split:2010-01").unwrap(),
            Treatment::PeriodSplit(YearMonth::new(2010, 1).unwrap())
        );
        assert!(Treatment::parse("period-split:2010-13").is_err());
        assert!(Treatment::parse("bogus").is_err());
        for s in ["k-split", "legacy-mixed", "only-j", "monopoly", "n-1", "not-j", "z-token:a", "period-split:2009-07"] {
            assert_eq!(Treatment::parse(s).unwrap().to_string(), s);
        }
        assert_eq!(FeVariant::parse("carrier-market-structure").unwrap(), FeVariant::CarrierMarketStructure);
    }

    #[test]
    fn trend_values() {
        assert_eq!(trend_value(YearMonth::new(2012, 1).unwrap()), 2012.0);
        assert!((trend_value(YearMonth::new(2012, 7).unwrap()) - 2012.5).abs() < 1e-12);
    }
}
