//! Estimation panel: call-to-month alignment, market-month communication
//! indicators, market structure keys and derived panels.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::domain::{
    Carrier, CarrierClass, CarrierRegistry, Granularity, Indicators, Market, MarketType,
    PanelObservation, YearMonth, YearQuarter, FRINGE_CODE,
};
use crate::error::PanelError;

/// Minimum monthly flights for a carrier to count as serving a market.
pub const MIN_SERVING_FLIGHTS: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignmentMode {
    /// A quarter's call (held the month after quarter end) covers the three
    /// months after the call month.
    #[default]
    Shifted,
    /// The call covers its own month and the next two.
    Contemporaneous,
}

impl AlignmentMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shifted" => Some(AlignmentMode::Shifted),
            "contemporaneous" => Some(AlignmentMode::Contemporaneous),
            _ => None,
        }
    }

    fn offset(self) -> i64 {
        match self {
            AlignmentMode::Shifted => 2,
            AlignmentMode::Contemporaneous => 1,
        }
    }
}

/// Months whose capacity is matched to the call reporting on quarter `q`.
pub fn months_for_call(q: YearQuarter, mode: AlignmentMode) -> [YearMonth; 3] {
    let first = q.last_month().add_months(mode.offset());
    [first, first.add_months(1), first.add_months(2)]
}

/// The reporting quarter whose call covers month `m`; inverse of [`months_for_call`].
pub fn report_quarter(m: YearMonth, mode: AlignmentMode) -> YearQuarter {
    let last_month = m.add_months(-mode.offset());
    // Quarter ends are months 3, 6, 9, 12; step back to the nearest one.
    let back = (last_month.month % 3) as i64;
    last_month.add_months(-back).quarter()
}

/// A carrier serving a market-month with its communication status.
#[derive(Debug, Clone, PartialEq)]
pub struct ServingCarrier {
    pub carrier: Carrier,
    /// `None` when no collected transcript exists for the mapped quarter.
    pub flag: Option<bool>,
}

impl ServingCarrier {
    pub fn talks(&self) -> bool {
        self.flag == Some(true)
    }

    pub fn is_legacy(&self) -> bool {
        self.carrier.class == CarrierClass::Legacy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketMonthContext {
    pub market: Market,
    pub year_month: YearMonth,
    pub serving: Vec<ServingCarrier>,
}

impl MarketMonthContext {
    fn legacies(&self) -> impl Iterator<Item = &ServingCarrier> {
        self.serving.iter().filter(|s| s.is_legacy())
    }

    pub fn n_legacy(&self) -> usize {
        self.legacies().count()
    }

    pub fn find(&self, code: &str) -> Option<&ServingCarrier> {
        self.serving.iter().find(|s| s.carrier.code == code)
    }

    /// Same serving set with flags replaced by `flag(code)`.
    pub fn with_flags<F: Fn(&str) -> Option<bool>>(&self, flag: F) -> Self {
        MarketMonthContext {
            market: self.market.clone(),
            year_month: self.year_month,
            serving: self
                .serving
                .iter()
                .map(|s| ServingCarrier {
                    carrier: s.carrier.clone(),
                    flag: flag(&s.carrier.code),
                })
                .collect(),
        }
    }

    pub fn market_type(&self) -> MarketType {
        let n_leg = self.n_legacy();
        if n_leg == 0 {
            MarketType::NonLegacy
        } else if n_leg == self.serving.len() {
            MarketType::Legacy
        } else {
            MarketType::Mixed
        }
    }
}

pub fn talk_eligible(ctx: &MarketMonthContext) -> bool {
    ctx.n_legacy() >= 2
}

pub fn capacity_discipline(ctx: &MarketMonthContext) -> bool {
    talk_eligible(ctx) && ctx.legacies().all(ServingCarrier::talks)
}

pub fn monopoly(ctx: &MarketMonthContext) -> bool {
    ctx.serving.len() == 1
}

pub fn missing_report(ctx: &MarketMonthContext) -> bool {
    ctx.legacies().any(|s| s.flag.is_none())
}

fn b(x: bool) -> f64 {
    if x {
        1.0
    } else {
        0.0
    }
}

/// Every market-level indicator plus the variants specific to carrier `j`.
pub fn indicators(ctx: &MarketMonthContext, j: &str) -> Indicators {
    let n_leg = ctx.n_legacy();
    let te = talk_eligible(ctx);
    let cd = capacity_discipline(ctx);
    let talking = ctx.legacies().filter(|s| s.talks()).count();
    let jc = ctx.find(j);
    let j_legacy = jc.is_some_and(ServingCarrier::is_legacy);
    let j_talks = jc.is_some_and(ServingCarrier::talks);
    let others_all_talk = ctx
        .legacies()
        .filter(|s| s.carrier.code != j)
        .all(ServingCarrier::talks);
    let mono = monopoly(ctx);
    Indicators {
        capacity_discipline: b(cd),
        talk_eligible: b(te),
        monopoly: b(mono),
        missing_report: b(missing_report(ctx)),
        only_j_talks: b(te && j_legacy && j_talks && talking == 1),
        capdis_2: b(cd && n_leg == 2),
        capdis_3: b(cd && n_leg == 3),
        capdis_4: b(cd && n_leg >= 4),
        capdis_n1: b(te && talking + 1 == n_leg),
        capdis_not_j: b(te && j_legacy && !j_talks && others_all_talk),
        monopoly_capdis: b(mono && ctx.serving[0].talks()),
    }
}

/// Carrier-market-structure key: merged carrier, market and the sorted set of
/// merged serving carriers.
pub fn market_structure_key<'a, I>(j: &str, market: &Market, serving: I, registry: &CarrierRegistry) -> String
where
    I: IntoIterator<Item = &'a str>,
{
    let set: BTreeSet<&str> = serving.into_iter().map(|c| registry.merger_group(c)).collect();
    let set: Vec<&str> = set.into_iter().collect();
    format!("{}|{}|{}", registry.merger_group(j), market, set.join("+"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }
}

/// 25th / 75th percentile cutoffs for size or business-travel classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoffs {
    pub p25: f64,
    pub p75: f64,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Cutoffs {
            p25: 1.27e6,
            p75: 3.25e6,
        }
    }
}

impl Cutoffs {
    /// Sample quartiles with linear interpolation between order statistics.
    pub fn from_sample(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Cutoffs {
            p25: q(0.25),
            p75: q(0.75),
        })
    }

    pub fn classify(&self, value: f64) -> SizeClass {
        if value <= self.p25 {
            SizeClass::Small
        } else if value <= self.p75 {
            SizeClass::Medium
        } else {
            SizeClass::Large
        }
    }
}

pub fn geometric_mean_population(pop_o: f64, pop_d: f64) -> Result<f64, PanelError> {
    for p in [pop_o, pop_d] {
        if !(p > 0.0) {
            return Err(PanelError::Population(p));
        }
    }
    Ok((pop_o * pop_d).sqrt())
}

pub fn market_size_class(pop_o: f64, pop_d: f64, cutoffs: &Cutoffs) -> Result<SizeClass, PanelError> {
    Ok(cutoffs.classify(geometric_mean_population(pop_o, pop_d)?))
}

/// One row of the segments schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub year_month: YearMonth,
    pub carrier: String,
    pub origin: String,
    pub dest: String,
    pub seats: u64,
    pub flights: u64,
    pub passengers: u64,
}

/// Carrier-market-month capacity aggregated from segments.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierMarketMonth {
    pub carrier: String,
    pub market: Market,
    pub year_month: YearMonth,
    pub seats: u64,
    pub flights: u64,
    pub passengers: u64,
    pub serving: bool,
}

type CmmKey = (Market, String, YearMonth);

fn accumulate(acc: &mut BTreeMap<CmmKey, CarrierMarketMonth>, row: CarrierMarketMonth) {
    let key = (row.market.clone(), row.carrier.clone(), row.year_month);
    match acc.get_mut(&key) {
        Some(e) => {
            e.seats += row.seats;
            e.flights += row.flights;
            e.passengers += row.passengers;
            e.serving |= row.serving;
        }
        None => {
            acc.insert(key, row);
        }
    }
}

/// Sums segments per carrier-market-month after remapping small carriers to
/// the fringe code. Rows with origin equal to destination are skipped.
pub fn aggregate_segments(segments: &[Segment], registry: &CarrierRegistry) -> Vec<CarrierMarketMonth> {
    let mut monthly: BTreeMap<(&str, YearMonth), u64> = BTreeMap::new();
    for s in segments {
        *monthly.entry((s.carrier.as_str(), s.year_month)).or_default() += s.flights;
    }
    let fringe = registry.fringe_members(monthly.iter().map(|(&(c, m), &f)| (c, m, f)));
    let mut raw: BTreeMap<CmmKey, CarrierMarketMonth> = BTreeMap::new();
    for s in segments {
        let Some(market) = Market::airport_pair(&s.origin, &s.dest) else {
            continue;
        };
        let carrier = if fringe.contains(&s.carrier) {
            FRINGE_CODE.to_string()
        } else {
            s.carrier.clone()
        };
        accumulate(
            &mut raw,
            CarrierMarketMonth {
                carrier,
                market,
                year_month: s.year_month,
                seats: s.seats,
                flights: s.flights,
                passengers: s.passengers,
                serving: false,
            },
        );
    }
    raw.into_values()
        .map(|mut r| {
            r.serving = r.flights >= MIN_SERVING_FLIGHTS;
            r
        })
        .collect()
}

/// Re-aggregates airport-pair rows to city pairs. A carrier serves a city
/// pair when it serves at least one constituent airport pair.
pub fn to_city_pairs(
    rows: &[CarrierMarketMonth],
    city_of: &BTreeMap<String, String>,
) -> Result<Vec<CarrierMarketMonth>, PanelError> {
    let mut acc = BTreeMap::new();
    for r in rows {
        let city = |a: &str| {
            city_of
                .get(a)
                .cloned()
                .ok_or_else(|| PanelError::UnmappedAirport(a.to_string()))
        };
        let (o, d) = (city(&r.market.origin)?, city(&r.market.destination)?);
        let Some(market) = Market::new(&o, &d, Granularity::CityPair) else {
            continue;
        };
        accumulate(
            &mut acc,
            CarrierMarketMonth {
                market,
                ..r.clone()
            },
        );
    }
    Ok(acc.into_values().collect())
}

/// Communication flags per (carrier, reporting quarter). A key is present only
/// when a collected transcript exists.
#[derive(Debug, Clone, Default)]
pub struct ReportTable {
    pub flags: BTreeMap<(String, YearQuarter), bool>,
    /// Per-token usage flags for placebo-token indicators.
    pub tokens: BTreeMap<String, BTreeMap<(String, YearQuarter), bool>>,
}

impl ReportTable {
    pub fn flag(&self, carrier: &str, yq: YearQuarter) -> Option<bool> {
        self.flags.get(&(carrier.to_string(), yq)).copied()
    }

    pub fn token_flag(&self, token: &str, carrier: &str, yq: YearQuarter) -> Option<bool> {
        self.tokens
            .get(token)
            .and_then(|t| t.get(&(carrier.to_string(), yq)).copied())
    }
}

#[derive(Debug, Clone, Default)]
pub struct PanelConfig {
    pub alignment: AlignmentMode,
}

/// Builds one panel row per serving carrier-market-month, ordered by
/// (market, carrier, month).
pub fn build_panel(
    rows: &[CarrierMarketMonth],
    registry: &CarrierRegistry,
    reports: &ReportTable,
    cfg: &PanelConfig,
) -> Vec<PanelObservation> {
    let mut groups: BTreeMap<(&Market, YearMonth), Vec<&CarrierMarketMonth>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.serving && r.seats > 0) {
        groups.entry((&r.market, r.year_month)).or_default().push(r);
    }
    let groups: Vec<_> = groups.into_iter().collect();
    let mut out: Vec<PanelObservation> = groups
        .par_iter()
        .flat_map_iter(|((market, ym), members)| {
            let yq = report_quarter(*ym, cfg.alignment);
            let ctx = MarketMonthContext {
                market: (*market).clone(),
                year_month: *ym,
                serving: members
                    .iter()
                    .map(|r| ServingCarrier {
                        carrier: registry.carrier(&r.carrier),
                        flag: reports.flag(&r.carrier, yq),
                    })
                    .collect(),
            };
            let token_ctx: Vec<(String, MarketMonthContext)> = reports
                .tokens
                .keys()
                .map(|tok| {
                    let c = ctx.with_flags(|code| reports.token_flag(tok, code, yq));
                    (format!("z_{tok}"), c)
                })
                .collect();
            let n_legacy = ctx.n_legacy() as u32;
            let market_type = ctx.market_type();
            let codes: Vec<&str> = members.iter().map(|r| r.carrier.as_str()).collect();
            members
                .iter()
                .map(|r| PanelObservation {
                    carrier: registry.carrier(&r.carrier),
                    market: (*market).clone(),
                    year_month: *ym,
                    seats: r.seats,
                    flights: r.flights,
                    passengers: r.passengers,
                    indicators: indicators(&ctx, &r.carrier),
                    market_type,
                    n_legacy,
                    n_carriers: members.len() as u32,
                    structure_key: market_structure_key(&r.carrier, market, codes.iter().copied(), registry),
                    extra: token_ctx
                        .iter()
                        .map(|(name, c)| (name.clone(), b(capacity_discipline(c))))
                        .collect(),
                    avg_fare: None,
                    market_population: None,
                    business_index: None,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.market, &a.carrier.code, a.year_month).cmp(&(&b.market, &b.carrier.code, b.year_month))
    });
    out
}

/// Population and business-travel index per (airport, year).
#[derive(Debug, Clone, Default)]
pub struct PopulationTable {
    pub rows: BTreeMap<(String, i32), (f64, f64)>,
}

/// Fills market population (geometric mean of endpoint CBSA populations) and
/// business index (mean of endpoint indices) where both endpoints are known.
pub fn attach_population(panel: &mut [PanelObservation], pops: &PopulationTable) -> Result<(), PanelError> {
    for obs in panel.iter_mut() {
        let y = obs.year_month.year;
        let o = pops.rows.get(&(obs.market.origin.clone(), y));
        let d = pops.rows.get(&(obs.market.destination.clone(), y));
        if let (Some(&(po, bo)), Some(&(pd, bd))) = (o, d) {
            obs.market_population = Some(geometric_mean_population(po, pd)?);
            obs.business_index = Some(0.5 * (bo + bd));
        }
    }
    Ok(())
}

/// Adds `capdis_pre` and `capdis_post`; the threshold month is post.
pub fn period_split(panel: &mut [PanelObservation], threshold: YearMonth) {
    for obs in panel.iter_mut() {
        let cd = obs.indicators.capacity_discipline;
        let post = obs.year_month >= threshold;
        obs.extra.insert("capdis_pre".into(), if post { 0.0 } else { cd });
        obs.extra.insert("capdis_post".into(), if post { cd } else { 0.0 });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ym(y: i32, m: u32) -> YearMonth {
        YearMonth::new(y, m).unwrap()
    }

    fn yq(y: i32, q: u32) -> YearQuarter {
        YearQuarter::new(y, q).unwrap()
    }

    fn ctx(members: &[(&str, Option<bool>)]) -> MarketMonthContext {
        let reg = CarrierRegistry::default();
        MarketMonthContext {
            market: Market::airport_pair("ITH", "PHL").unwrap(),
            year_month: ym(2012, 5),
            serving: members
                .iter()
                .map(|(c, f)| ServingCarrier {
                    carrier: reg.carrier(c),
                    flag: *f,
                })
                .collect(),
        }
    }

    #[test]
    fn call_alignment() {
        assert_eq!(
            months_for_call(yq(2012, 1), AlignmentMode::Shifted),
            [ym(2012, 5), ym(2012, 6), ym(2012, 7)]
        );
        assert_eq!(
            months_for_call(yq(2012, 1), AlignmentMode::Contemporaneous),
            [ym(2012, 4), ym(2012, 5), ym(2012, 6)]
        );
        assert_eq!(
            months_for_call(yq(2012, 4), AlignmentMode::Shifted),
            [ym(2013, 2), ym(2013, 3), ym(2013, 4)]
        );
    }

    #[test]
    fn report_quarter_inverts_alignment() {
        for mode in [AlignmentMode::Shifted, AlignmentMode::Contemporaneous] {
            for idx in 8000..8100 {
                let q = YearQuarter::from_index(idx);
                for m in months_for_call(q, mode) {
                    assert_eq!(report_quarter(m, mode), q);
                }
            }
        }
    }

    #[test]
    fn identification_table_rows() {
        let t = Some(true);
        let f = Some(false);
        let c = ctx(&[("DL", None)]);
        assert!(monopoly(&c) && missing_report(&c) && !talk_eligible(&c));
        let c = ctx(&[("DL", t), ("UA", t)]);
        assert!(capacity_discipline(&c) && talk_eligible(&c));
        let c = ctx(&[("DL", None), ("UA", t), ("US", t)]);
        assert!(missing_report(&c) && !capacity_discipline(&c));
        let c = ctx(&[("DL", t), ("UA", t), ("US", t), ("F9", None)]);
        assert!(capacity_discipline(&c) && !missing_report(&c));
        let c = ctx(&[("DL", t), ("F9", None)]);
        assert!(!talk_eligible(&c) && !monopoly(&c));
        let c = ctx(&[("DL", f), ("UA", t), ("US", t)]);
        let i = indicators(&c, "DL");
        assert_eq!((i.capdis_not_j, i.capacity_discipline), (1.0, 0.0));
    }

    #[test]
    fn variants_at_two_legacies() {
        let c = ctx(&[("DL", Some(true)), ("UA", Some(false))]);
        let i = indicators(&c, "DL");
        assert_eq!((i.only_j_talks, i.capdis_n1), (1.0, 1.0));
        let c = ctx(&[("DL", Some(true)), ("UA", Some(true)), ("US", Some(true))]);
        let i = indicators(&c, "UA");
        assert_eq!((i.capdis_3, i.capdis_2), (1.0, 0.0));
    }

    #[test]
    fn structure_keys() {
        let mut reg = CarrierRegistry::default();
        let m = Market::airport_pair("ITH", "PHL").unwrap();
        let a = market_structure_key("AA", &m, ["AA", "DL"], &reg);
        let b = market_structure_key("AA", &m, ["AA", "UA"], &reg);
        assert_ne!(a, b);
        reg.set_merger("US", "AA");
        let pre = market_structure_key("US", &m, ["US", "DL"], &reg);
        let post = market_structure_key("AA", &m, ["DL", "AA"], &reg);
        assert_eq!(pre, post);
    }

    #[test]
    fn size_classes() {
        let c = Cutoffs::default();
        assert_eq!(market_size_class(1.0e6, 1.0e6, &c).unwrap(), SizeClass::Small);
        assert_eq!(market_size_class(2.0e6, 2.0e6, &c).unwrap(), SizeClass::Medium);
        assert_eq!(market_size_class(4.0e6, 4.0e6, &c).unwrap(), SizeClass::Large);
        assert!((geometric_mean_population(3.0, 3.0).unwrap() - 3.0).abs() < 1e-15);
        assert!(market_size_class(0.0, 1.0, &c).is_err());
        let s = Cutoffs::from_sample(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.p25, s.p75), (2.0, 4.0));
    }

    fn seg(c: &str, o: &str, d: &str, seats: u64, flights: u64) -> Segment {
        Segment {
            year_month: ym(2012, 5),
            carrier: c.into(),
            origin: o.into(),
            dest: d.into(),
            seats,
            flights,
            passengers: seats / 2,
        }
    }

    #[test]
    fn city_pair_merge() {
        let reg = CarrierRegistry::default();
        let segs = vec![
            seg("AA", "GSO", "ORD", 500, 10),
            seg("DL", "GSO", "ORD", 400, 8),
            seg("UA", "GSO", "MDW", 300, 6),
            seg("B6", "GSO", "MDW", 200, 5),
            seg("AA", "GSO", "MDW", 100, 4),
        ];
        let rows = aggregate_segments(&segs, &reg);
        let cities: BTreeMap<String, String> = [("GSO", "GSO"), ("ORD", "CHI"), ("MDW", "CHI")]
            .iter()
            .map(|(a, c)| (a.to_string(), c.to_string()))
            .collect();
        let city = to_city_pairs(&rows, &cities).unwrap();
        assert_eq!(city.len(), 4);
        let aa = city.iter().find(|r| r.carrier == "AA").unwrap();
        assert_eq!(aa.seats, 600);
        let total: u64 = rows.iter().map(|r| r.seats).sum();
        assert_eq!(city.iter().map(|r| r.seats).sum::<u64>(), total);

        let mut reports = ReportTable::default();
        let q = report_quarter(ym(2012, 5), AlignmentMode::Shifted);
        for (c, f) in [("AA", true), ("DL", true), ("UA", false)] {
            reports.flags.insert((c.to_string(), q), f);
        }
        let panel = build_panel(&city, &reg, &reports, &PanelConfig::default());
        assert!(panel.iter().all(|o| o.indicators.talk_eligible == 1.0));
        assert!(panel.iter().all(|o| o.indicators.capacity_discipline == 0.0));
        let airport = build_panel(&rows, &reg, &reports, &PanelConfig::default());
        let ord: Vec<_> = airport.iter().filter(|o| o.market.destination == "ORD").collect();
        assert!(ord.iter().all(|o| o.indicators.capacity_discipline == 1.0));
        assert!(to_city_pairs(&rows, &BTreeMap::new()).is_err());
    }

    #[test]
    fn serving_needs_four_flights() {
        let reg = CarrierRegistry::default();
        let rows = aggregate_segments(&[seg("DL", "A", "B", 100, 3), seg("UA", "A", "B", 100, 4)], &reg);
        let panel = build_panel(&rows, &reg, &ReportTable::default(), &PanelConfig::default());
        assert_eq!(panel.len(), 1);
        assert_eq!(panel[0].indicators.monopoly, 1.0);
    }

    #[test]
    fn period_split_partitions() {
        let reg = CarrierRegistry::default();
        let mut segs = vec![seg("DL", "A", "B", 100, 5), seg("UA", "A", "B", 100, 5)];
        let mut later = segs.clone();
        for s in &mut later {
            s.year_month = ym(2010, 1);
        }
        for s in &mut segs {
            s.year_month = ym(2009, 12);
        }
        segs.extend(later);
        let rows = aggregate_segments(&segs, &reg);
        let mut reports = ReportTable::default();
        for m in [ym(2009, 12), ym(2010, 1)] {
            let q = report_quarter(m, AlignmentMode::Shifted);
            reports.flags.insert(("DL".into(), q), true);
            reports.flags.insert(("UA".into(), q), true);
        }
        let mut panel = build_panel(&rows, &reg, &reports, &PanelConfig::default());
        period_split(&mut panel, ym(2010, 1));
        for o in &panel {
            let pre = o.extra["capdis_pre"];
            let post = o.extra["capdis_post"];
            assert_eq!(pre + post, o.indicators.capacity_discipline);
            assert_eq!(post == 1.0, o.year_month == ym(2010, 1));
        }
    }
}
