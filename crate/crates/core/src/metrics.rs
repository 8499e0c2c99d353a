//! Departure crowding and passenger-weighted route/price aggregation.

use std::collections::BTreeMap;

use crate::domain::{YearMonth, YearQuarter};
use crate::error::MetricsError;

pub const MINUTES_PER_DAY: f64 = 1440.0;

fn check_departures(d: &[f64]) -> Result<(), MetricsError> {
    if d.len() < 2 {
        return Err(MetricsError::TooFewDepartures(d.len()));
    }
    if let Some(&bad) = d.iter().find(|&&m| !(0.0..MINUTES_PER_DAY).contains(&m)) {
        return Err(MetricsError::DepartureRange(bad));
    }
    Ok(())
}

/// (2/(n−1)) Σ_{i<j} √min(|d_i − d_j|, 1440 − |d_i − d_j|).
pub fn average_time_difference(d: &[f64]) -> Result<f64, MetricsError> {
    check_departures(d)?;
    let mut s = 0.0;
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            let gap = (d[i] - d[j]).abs();
            s += gap.min(MINUTES_PER_DAY - gap).sqrt();
        }
    }
    Ok(2.0 * s / (d.len() - 1) as f64)
}

/// Value of [`average_time_difference`] for `n` equally spaced departures.
pub fn equally_spaced_atd(n: usize) -> f64 {
    let gap = MINUTES_PER_DAY / n as f64;
    let d: Vec<f64> = (0..n).map(|i| i as f64 * gap).collect();
    average_time_difference(&d).unwrap_or(0.0)
}

/// Average time difference relative to the equally spaced layout; 1 means
/// least crowded.
pub fn normalized_crowding(d: &[f64]) -> Result<f64, MetricsError> {
    Ok(average_time_difference(d)? / equally_spaced_atd(d.len()))
}

/// One On-Time departure record.
#[derive(Debug, Clone, PartialEq)]
pub struct Departure {
    pub year_month: YearMonth,
    pub carrier: String,
    pub origin: String,
    pub dest: String,
    pub minutes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrowdingRow {
    pub origin: String,
    pub dest: String,
    /// Set when crowding is computed per carrier.
    pub carrier: Option<String>,
    pub year_month: YearMonth,
    pub departures: usize,
    pub atd: f64,
    pub crowding: f64,
}

/// Crowding per market-month over all carriers' departures (or per
/// carrier-market-month). Cells with fewer than two departures are skipped.
pub fn crowding_panel(deps: &[Departure], per_carrier: bool) -> Result<Vec<CrowdingRow>, MetricsError> {
    let mut cells: BTreeMap<(&str, &str, Option<&str>, YearMonth), Vec<f64>> = BTreeMap::new();
    for d in deps {
        let c = per_carrier.then_some(d.carrier.as_str());
        cells
            .entry((d.origin.as_str(), d.dest.as_str(), c, d.year_month))
            .or_default()
            .push(d.minutes);
    }
    let mut out = Vec::new();
    for ((o, de, c, ym), mins) in cells {
        if mins.len() < 2 {
            continue;
        }
        out.push(CrowdingRow {
            origin: o.to_string(),
            dest: de.to_string(),
            carrier: c.map(str::to_string),
            year_month: ym,
            departures: mins.len(),
            atd: average_time_difference(&mins)?,
            crowding: normalized_crowding(&mins)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteRule {
    /// Route value is 1 only if every segment is 1 (minimum).
    All,
    /// Route value is 1 if any segment is 1 (maximum).
    Any,
}

pub fn route_indicator(segments: &[f64], rule: RouteRule) -> Result<f64, MetricsError> {
    if segments.is_empty() {
        return Err(MetricsError::Empty("route has no segments"));
    }
    let it = segments.iter().copied();
    Ok(match rule {
        RouteRule::All => it.fold(f64::INFINITY, f64::min),
        RouteRule::Any => it.fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Σ v_r · pax_r / Σ pax.
pub fn passenger_weighted(values: &[f64], passengers: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty("no routes"));
    }
    let total: f64 = passengers.iter().sum();
    if !(total > 0.0) {
        return Err(MetricsError::ZeroPassengers);
    }
    Ok(values.iter().zip(passengers).map(|(v, p)| v * (p / total)).sum())
}

/// One fares-schema row; `route` lists the airports in order.
#[derive(Debug, Clone, PartialEq)]
pub struct FareRecord {
    pub carrier: String,
    pub origin: String,
    pub dest: String,
    pub route: Vec<String>,
    pub passengers: f64,
    pub avg_fare: f64,
    pub year_quarter: YearQuarter,
}

impl FareRecord {
    pub fn segments(&self) -> impl Iterator<Item = (&str, &str)> {
        self.route.windows(2).map(|w| (w[0].as_str(), w[1].as_str()))
    }

    pub fn route_key(&self) -> String {
        self.route.join("-")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutePriceRecord {
    pub carrier: String,
    pub origin: String,
    pub dest: String,
    pub route: Vec<String>,
    pub year_quarter: YearQuarter,
    pub passengers: f64,
    /// Passenger-weighted mean fare.
    pub avg_fare: f64,
}

/// Carrier, origin, destination, route and quarter.
type RouteKey = (String, String, String, String, YearQuarter);

/// Passenger-weighted mean fare per carrier-market-route-quarter. Distinct
/// routes between the same endpoints stay separate. `keep_market` restricts
/// to markets present in the segment panel.
pub fn aggregate_fares<F>(records: &[FareRecord], keep_market: F) -> Vec<RoutePriceRecord>
where
    F: Fn(&str, &str) -> bool,
{
    let mut acc: BTreeMap<RouteKey, (Vec<String>, f64, f64)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.passengers > 0.0 && keep_market(&r.origin, &r.dest)) {
        let e = acc
            .entry((r.carrier.clone(), r.origin.clone(), r.dest.clone(), r.route_key(), r.year_quarter))
            .or_insert_with(|| (r.route.clone(), 0.0, 0.0));
        e.1 += r.passengers;
        e.2 += r.passengers * r.avg_fare;
    }
    acc.into_iter()
        .map(|((carrier, origin, dest, _, yq), (route, pax, revenue))| RoutePriceRecord {
            carrier,
            origin,
            dest,
            route,
            year_quarter: yq,
            passengers: pax,
            avg_fare: revenue / pax,
        })
        .collect()
}
