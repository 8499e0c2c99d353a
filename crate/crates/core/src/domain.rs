//! Shared vocabulary: carriers, markets, calendar and the panel row.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::PanelError;

/// Carriers classified as legacy unless overridden.
pub const DEFAULT_LEGACY: [&str; 7] = ["AS", "AA", "CO", "DL", "NW", "UA", "US"];
/// Carriers classified as low-cost unless overridden.
pub const DEFAULT_LCC: [&str; 4] = ["FL", "B6", "WN", "NK"];
/// Code used for the aggregate of small ticketing carriers.
pub const FRINGE_CODE: &str = "FRINGE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CarrierClass {
    Legacy,
    Lcc,
    Fringe,
}

impl CarrierClass {
    pub fn as_str(self) -> &'static str {
        match self {
            CarrierClass::Legacy => "legacy",
            CarrierClass::Lcc => "lcc",
            CarrierClass::Fringe => "fringe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "legacy" => Some(CarrierClass::Legacy),
            "lcc" => Some(CarrierClass::Lcc),
            "fringe" => Some(CarrierClass::Fringe),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Carrier {
    pub code: String,
    pub class: CarrierClass,
    pub merger_group: String,
}

/// Per-dataset carrier classification and merger mapping.
///
/// A code's class is fixed for the lifetime of the registry. Codes that are
/// neither legacy nor LCC are classified as fringe.
#[derive(Debug, Clone)]
pub struct CarrierRegistry {
    classes: BTreeMap<String, CarrierClass>,
    mergers: BTreeMap<String, String>,
    /// Carriers with fewer network-wide monthly flights than this are remapped to
    /// [`FRINGE_CODE`]. Zero disables the remap.
    pub fringe_threshold: u64,
}

impl Default for CarrierRegistry {
    fn default() -> Self {
        let mut classes = BTreeMap::new();
        for c in DEFAULT_LEGACY {
            classes.insert(c.to_string(), CarrierClass::Legacy);
        }
        for c in DEFAULT_LCC {
            classes.insert(c.to_string(), CarrierClass::Lcc);
        }
        CarrierRegistry {
            classes,
            mergers: BTreeMap::new(),
            fringe_threshold: 0,
        }
    }
}

impl CarrierRegistry {
    pub fn set_class(&mut self, code: &str, class: CarrierClass) {
        self.classes.insert(code.to_string(), class);
    }

    /// Map `code` to the merged entity `entity` (e.g. `CO` → `UA`).
    pub fn set_merger(&mut self, code: &str, entity: &str) {
        self.mergers.insert(code.to_string(), entity.to_string());
    }

    pub fn class_of(&self, code: &str) -> CarrierClass {
        self.classes
            .get(code)
            .copied()
            .unwrap_or(CarrierClass::Fringe)
    }

    pub fn is_legacy(&self, code: &str) -> bool {
        self.class_of(code) == CarrierClass::Legacy
    }

    pub fn merger_group<'a>(&'a self, code: &'a str) -> &'a str {
        self.mergers.get(code).map(String::as_str).unwrap_or(code)
    }

    pub fn carrier(&self, code: &str) -> Carrier {
        Carrier {
            code: code.to_string(),
            class: self.class_of(code),
            merger_group: self.merger_group(code).to_string(),
        }
    }

    pub fn legacy_codes(&self) -> Vec<String> {
        self.classes
            .iter()
            .filter(|(_, c)| **c == CarrierClass::Legacy)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn lcc_codes(&self) -> Vec<String> {
        self.classes
            .iter()
            .filter(|(_, c)| **c == CarrierClass::Lcc)
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// Codes whose monthly flights never reach the fringe threshold anywhere in
    /// the network, given (code, month, flights) totals.
    pub fn fringe_members<'a, I>(&self, monthly_totals: I) -> BTreeSet<String>
    where
        I: IntoIterator<Item = (&'a str, YearMonth, u64)>,
    {
        if self.fringe_threshold == 0 {
            return BTreeSet::new();
        }
        let mut best: BTreeMap<&str, u64> = BTreeMap::new();
        for (code, _, flights) in monthly_totals {
            let e = best.entry(code).or_insert(0);
            *e = (*e).max(flights);
        }
        best.into_iter()
            .filter(|(code, max)| *max < self.fringe_threshold && !self.is_legacy(code))
            .map(|(code, _)| code.to_string())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Granularity {
    AirportPair,
    CityPair,
}

/// Directional origin-destination market.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Market {
    pub origin: String,
    pub destination: String,
    pub granularity: Granularity,
}

/// Bi-directional market: the unordered endpoint pair, smaller code first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterKey(pub String, pub String);

impl fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

impl Market {
    /// Returns `None` when origin equals destination.
    pub fn new(origin: &str, destination: &str, granularity: Granularity) -> Option<Self> {
        if origin == destination {
            return None;
        }
        Some(Market {
            origin: origin.to_string(),
            destination: destination.to_string(),
            granularity,
        })
    }

    pub fn airport_pair(origin: &str, destination: &str) -> Option<Self> {
        Self::new(origin, destination, Granularity::AirportPair)
    }

    pub fn cluster_key(&self) -> ClusterKey {
        cluster_key(&self.origin, &self.destination)
    }
}

impl fmt::Display for Market {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.origin, self.destination)
    }
}

pub fn cluster_key(a: &str, b: &str) -> ClusterKey {
    if a <= b {
        ClusterKey(a.to_string(), b.to_string())
    } else {
        ClusterKey(b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearQuarter {
    pub year: i32,
    pub quarter: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self, PanelError> {
        if (1..=12).contains(&month) {
            Ok(YearMonth { year, month })
        } else {
            Err(PanelError::Month(month))
        }
    }

    /// Months since year 0; consecutive months differ by one.
    pub fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_index(idx: i64) -> Self {
        YearMonth {
            year: idx.div_euclid(12) as i32,
            month: (idx.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn add_months(self, n: i64) -> Self {
        Self::from_index(self.index() + n)
    }

    pub fn quarter(self) -> YearQuarter {
        quarter_of(self)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl YearQuarter {
    pub fn new(year: i32, quarter: u32) -> Option<Self> {
        (1..=4)
            .contains(&quarter)
            .then_some(YearQuarter { year, quarter })
    }

    pub fn first_month(self) -> YearMonth {
        YearMonth {
            year: self.year,
            month: (self.quarter - 1) * 3 + 1,
        }
    }

    pub fn last_month(self) -> YearMonth {
        self.first_month().add_months(2)
    }

    pub fn index(self) -> i64 {
        self.year as i64 * 4 + (self.quarter as i64 - 1)
    }

    pub fn from_index(idx: i64) -> Self {
        YearQuarter {
            year: idx.div_euclid(4) as i32,
            quarter: (idx.rem_euclid(4) + 1) as u32,
        }
    }

    pub fn months(self) -> [YearMonth; 3] {
        let m = self.first_month();
        [m, m.add_months(1), m.add_months(2)]
    }
}

impl fmt::Display for YearQuarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

pub fn quarter_of(m: YearMonth) -> YearQuarter {
    YearQuarter {
        year: m.year,
        quarter: (m.month - 1) / 3 + 1,
    }
}

/// Market-level communication indicators plus the carrier-specific variants.
///
/// Values are 0/1 at segment granularity and may be fractional after route
/// weighting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Indicators {
    pub capacity_discipline: f64,
    pub talk_eligible: f64,
    pub monopoly: f64,
    pub missing_report: f64,
    pub only_j_talks: f64,
    pub capdis_2: f64,
    pub capdis_3: f64,
    /// Four or more legacy carriers, all talking.
    pub capdis_4: f64,
    pub capdis_n1: f64,
    pub capdis_not_j: f64,
    pub monopoly_capdis: f64,
}

/// Who serves the market: only legacies, legacies with LCC/fringe, or no legacy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MarketType {
    Legacy,
    Mixed,
    NonLegacy,
}

impl MarketType {
    pub fn as_str(self) -> &'static str {
        match self {
            MarketType::Legacy => "legacy",
            MarketType::Mixed => "mixed",
            MarketType::NonLegacy => "nonlegacy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "legacy" => Some(MarketType::Legacy),
            "mixed" => Some(MarketType::Mixed),
            "nonlegacy" => Some(MarketType::NonLegacy),
            _ => None,
        }
    }
}

/// One carrier-market-month row of the estimation panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelObservation {
    pub carrier: Carrier,
    pub market: Market,
    pub year_month: YearMonth,
    pub seats: u64,
    pub flights: u64,
    pub passengers: u64,
    pub indicators: Indicators,
    pub market_type: MarketType,
    pub n_legacy: u32,
    pub n_carriers: u32,
    /// Merged carrier, market and sorted merged serving set.
    pub structure_key: String,
    /// Extra 0/1 columns, e.g. placebo-token indicators `z_<token>`.
    pub extra: BTreeMap<String, f64>,
    pub avg_fare: Option<f64>,
    pub market_population: Option<f64>,
    pub business_index: Option<f64>,
}

impl PanelObservation {
    pub fn cluster_key(&self) -> ClusterKey {
        self.market.cluster_key()
    }

    /// Checks the row-level invariants linking the indicators.
    pub fn check_invariants(&self) -> bool {
        let i = &self.indicators;
        i.capacity_discipline <= i.talk_eligible
            && !(i.monopoly > 0.0 && i.talk_eligible > 0.0)
            && (0.0..=1.0).contains(&i.capacity_discipline)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ym(y: i32, m: u32) -> YearMonth {
        YearMonth::new(y, m).unwrap()
    }

    #[test]
    fn quarter_of_examples() {
        assert_eq!(quarter_of(ym(2012, 5)), YearQuarter { year: 2012, quarter: 2 });
        assert_eq!(quarter_of(ym(2012, 1)), YearQuarter { year: 2012, quarter: 1 });
        assert_eq!(quarter_of(ym(2016, 12)), YearQuarter { year: 2016, quarter: 4 });
    }

    #[test]
    fn quarter_of_is_three_to_one() {
        for q in 1..=4 {
            let yq = YearQuarter::new(2010, q).unwrap();
            for m in yq.months() {
                assert_eq!(quarter_of(m), yq);
            }
        }
    }

    #[test]
    fn cluster_key_symmetric() {
        let a = Market::airport_pair("GSO", "ORD").unwrap();
        let b = Market::airport_pair("ORD", "GSO").unwrap();
        assert_eq!(a.cluster_key(), ClusterKey("GSO".into(), "ORD".into()));
        assert_eq!(a.cluster_key(), b.cluster_key());
        assert_ne!(a, b);
        let c = Market::airport_pair("ITH", "PHL").unwrap();
        assert_eq!(c.cluster_key().to_string(), "ITH-PHL");
    }

    #[test]
    fn market_rejects_self_loop() {
        assert!(Market::airport_pair("ORD", "ORD").is_none());
    }

    #[test]
    fn month_index_round_trip() {
        let m = ym(2012, 12);
        assert_eq!(m.add_months(2), ym(2013, 2));
        assert_eq!(YearMonth::from_index(m.index()), m);
        assert!(ym(2012, 1) < ym(2012, 2));
        assert!(YearMonth::new(2012, 13).is_err());
    }

    #[test]
    fn registry_defaults_and_mergers() {
        let mut reg = CarrierRegistry::default();
        assert!(reg.is_legacy("DL"));
        assert_eq!(reg.class_of("WN"), CarrierClass::Lcc);
        assert_eq!(reg.class_of("ZZ"), CarrierClass::Fringe);
        reg.set_merger("CO", "UA");
        assert_eq!(reg.merger_group("CO"), "UA");
        assert_eq!(reg.merger_group("DL"), "DL");
    }

    #[test]
    fn fringe_threshold_remaps_small_carriers() {
        let mut reg = CarrierRegistry::default();
        let m = ym(2010, 1);
        let totals = vec![("ZZ", m, 3u64), ("WN", m, 500), ("QQ", m, 40)];
        assert!(reg.fringe_members(totals.clone()).is_empty());
        reg.fringe_threshold = 50;
        let f = reg.fringe_members(totals);
        assert_eq!(f.into_iter().collect::<Vec<_>>(), vec!["QQ", "ZZ"]);
    }
}
