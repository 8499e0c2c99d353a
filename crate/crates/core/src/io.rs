//! CSV and transcript schemas: readers that report the offending row and
//! column, and deterministic writers.
//!
//! All files are UTF-8, comma-delimited, with a mandatory header row. Row
//! numbers in errors are 1-based file lines (the header is line 1).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::domain::{
    Carrier, CarrierClass, CarrierRegistry, Granularity, Indicators, Market, MarketType, PanelObservation, YearMonth,
    YearQuarter,
};
use crate::error::{Error, SchemaError};
use crate::metrics::{Departure, FareRecord};
use crate::network::LatLon;
use crate::panel::{PopulationTable, ReportTable, Segment};
use crate::text::{Coding, LabelOverride, LabelSet, LabelSource, TranscriptRecord, TranscriptStatus};

pub const SEGMENTS_HEADER: [&str; 8] = ["year", "month", "ticketing_carrier", "origin", "dest", "seats", "flights", "passengers"];
pub const STATUS_HEADER: [&str; 4] = ["carrier", "year", "quarter", "status"];
pub const LABELS_HEADER: [&str; 5] = ["carrier", "year", "quarter", "label", "source"];
pub const COORDINATES_HEADER: [&str; 3] = ["airport", "lat", "lon"];
pub const POPULATIONS_HEADER: [&str; 4] = ["airport", "year", "cbsa_pop", "business_index"];
pub const ONTIME_HEADER: [&str; 5] = ["date", "carrier", "origin", "dest", "dep_minutes"];
pub const FARES_HEADER: [&str; 8] = ["carrier", "origin", "dest", "route", "passengers", "avg_fare", "year", "quarter"];
pub const CITIES_HEADER: [&str; 2] = ["airport", "city"];
pub const MERGERS_HEADER: [&str; 2] = ["code", "entity"];
pub const CARRIERS_HEADER: [&str; 2] = ["carrier", "class"];
pub const CODINGS_HEADER: [&str; 6] = ["carrier", "year", "quarter", "status", "flag", "reason"];

/// Fixed-precision float formatting used for generated fixtures
/// (17 significant digits).
pub fn fixed(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV file opened with its header resolved.
pub struct CsvTable {
    path: String,
    reader: csv::Reader<File>,
    columns: HashMap<String, usize>,
}

/// One data row of a [`CsvTable`].
pub struct CsvRow<'a> {
    path: &'a str,
    line: usize,
    record: csv::StringRecord,
    columns: &'a HashMap<String, usize>,
}

impl CsvTable {
    pub fn open(path: &Path, required: &[&str]) -> Result<Self, SchemaError> {
        let p = path.display().to_string();
        let file = File::open(path).map_err(|e| SchemaError::file(&p, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader.headers().map_err(|e| SchemaError::file(&p, e))?.clone();
        let columns: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        for c in required {
            if !columns.contains_key(*c) {
                return Err(SchemaError::MissingColumn { path: p, column: c.to_string() });
            }
        }
        Ok(CsvTable { path: p, reader, columns })
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    /// Visits every data row.
    pub fn for_each<F>(&mut self, mut f: F) -> Result<(), SchemaError>
    where
        F: FnMut(&CsvRow<'_>) -> Result<(), SchemaError>,
    {
        let mut record = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(false) => return Ok(()),
                Ok(true) => {
                    let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
                    let row = CsvRow {
                        path: &self.path,
                        line,
                        record: std::mem::take(&mut record),
                        columns: &self.columns,
                    };
                    f(&row)?;
                    record = row.record;
                }
                Err(e) => {
                    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                    return Err(SchemaError::field(&self.path, line, "", e.to_string()));
                }
            }
        }
    }
}

impl CsvRow<'_> {
    pub fn line(&self) -> usize {
        self.line
    }

    pub fn error(&self, column: &str, message: impl Into<String>) -> SchemaError {
        SchemaError::field(self.path, self.line, column, message)
    }

    pub fn str(&self, column: &str) -> Result<&str, SchemaError> {
        let i = *self
            .columns
            .get(column)
            .ok_or_else(|| SchemaError::MissingColumn { path: self.path.to_string(), column: column.to_string() })?;
        self.record.get(i).ok_or_else(|| self.error(column, "missing field"))
    }

    pub fn nonempty(&self, column: &str) -> Result<&str, SchemaError> {
        let s = self.str(column)?;
        if s.is_empty() {
            return Err(self.error(column, "empty value"));
        }
        Ok(s)
    }

    pub fn parse<T: FromStr>(&self, column: &str) -> Result<T, SchemaError>
    where
        T::Err: Display,
    {
        let s = self.str(column)?;
        s.parse().map_err(|e: T::Err| self.error(column, format!("cannot parse `{s}`: {e}")))
    }

    /// Empty cells read as `None`.
    pub fn optional<T: FromStr>(&self, column: &str) -> Result<Option<T>, SchemaError>
    where
        T::Err: Display,
    {
        if !self.columns.contains_key(column) || self.str(column)?.is_empty() {
            return Ok(None);
        }
        self.parse(column).map(Some)
    }

    pub fn finite(&self, column: &str) -> Result<f64, SchemaError> {
        let v: f64 = self.parse(column)?;
        if !v.is_finite() {
            return Err(self.error(column, "value is not finite"));
        }
        Ok(v)
    }

    pub fn year_month(&self, year: &str, month: &str) -> Result<YearMonth, SchemaError> {
        let y: i32 = self.parse(year)?;
        let m: u32 = self.parse(month)?;
        YearMonth::new(y, m).map_err(|e| self.error(month, e.to_string()))
    }

    pub fn year_quarter(&self, year: &str, quarter: &str) -> Result<YearQuarter, SchemaError> {
        let y: i32 = self.parse(year)?;
        let q: u32 = self.parse(quarter)?;
        YearQuarter::new(y, q).ok_or_else(|| self.error(quarter, format!("quarter {q} outside 1..=4")))
    }

    pub fn bool01(&self, column: &str) -> Result<bool, SchemaError> {
        match self.str(column)? {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            s => Err(self.error(column, format!("expected 0 or 1, got `{s}`"))),
        }
    }
}

fn read_all<T, F>(path: &Path, required: &[&str], mut f: F) -> Result<Vec<T>, SchemaError>
where
    F: FnMut(&CsvRow<'_>) -> Result<T, SchemaError>,
{
    let mut t = CsvTable::open(path, required)?;
    let mut out = Vec::new();
    t.for_each(|row| {
        out.push(f(row)?);
        Ok(())
    })?;
    Ok(out)
}

pub fn read_segments(path: &Path) -> Result<Vec<Segment>, SchemaError> {
    read_all(path, &SEGMENTS_HEADER, |r| {
        Ok(Segment {
            year_month: r.year_month("year", "month")?,
            carrier: r.nonempty("ticketing_carrier")?.to_string(),
            origin: r.nonempty("origin")?.to_string(),
            dest: r.nonempty("dest")?.to_string(),
            seats: r.parse("seats")?,
            flights: r.parse("flights")?,
            passengers: r.parse("passengers")?,
        })
    })
}

pub fn read_status(path: &Path) -> Result<BTreeMap<(String, YearQuarter), TranscriptStatus>, SchemaError> {
    let mut out = BTreeMap::new();
    let mut t = CsvTable::open(path, &STATUS_HEADER)?;
    t.for_each(|r| {
        let s = r.str("status")?;
        let status = TranscriptStatus::parse(s).ok_or_else(|| r.error("status", format!("unknown status `{s}`")))?;
        let key = (r.nonempty("carrier")?.to_string(), r.year_quarter("year", "quarter")?);
        if out.insert(key, status).is_some() {
            return Err(r.error("carrier", "duplicate carrier-quarter"));
        }
        Ok(())
    })?;
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<LabelSet, SchemaError> {
    let mut set = LabelSet::default();
    let mut t = CsvTable::open(path, &LABELS_HEADER)?;
    t.for_each(|r| {
        let s = r.str("source")?;
        let source = LabelSource::parse(s).ok_or_else(|| r.error("source", format!("unknown source `{s}`")))?;
        let o = LabelOverride {
            carrier: r.nonempty("carrier")?.to_string(),
            year_quarter: r.year_quarter("year", "quarter")?,
            label: r.bool01("label")?,
            source,
        };
        set.insert(o).map_err(|_| r.error("source", "duplicate label for carrier, quarter and source"))
    })?;
    Ok(set)
}

/// Parses `CARRIER_YYYYQN.txt`.
pub fn parse_transcript_name(name: &str) -> Option<(String, YearQuarter)> {
    let stem = name.strip_suffix(".txt")?;
    let (carrier, period) = stem.rsplit_once('_')?;
    let (y, q) = period.split_once('Q')?;
    if carrier.is_empty() || y.len() != 4 {
        return None;
    }
    Some((carrier.to_string(), YearQuarter::new(y.parse().ok()?, q.parse().ok()?)?))
}

pub fn transcript_name(carrier: &str, yq: YearQuarter) -> String {
    format!("{carrier}_{:04}Q{}.txt", yq.year, yq.quarter)
}

/// Reads every transcript in `dir`. Status comes from `status` (files
/// without a status row are collected); status rows without a file become
/// empty records unless they claim the call was collected.
pub fn read_transcripts(
    dir: &Path,
    status: &BTreeMap<(String, YearQuarter), TranscriptStatus>,
) -> Result<Vec<TranscriptRecord>, SchemaError> {
    let d = dir.display().to_string();
    let mut files: BTreeMap<(String, YearQuarter), std::path::PathBuf> = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| SchemaError::file(&d, e))? {
        let entry = entry.map_err(|e| SchemaError::file(&d, e))?;
        let name = entry.file_name().to_string_lossy().to_string();
        if !name.ends_with(".txt") {
            continue;
        }
        let key = parse_transcript_name(&name)
            .ok_or_else(|| SchemaError::file(entry.path().display().to_string(), "expected CARRIER_YYYYQN.txt"))?;
        files.insert(key, entry.path());
    }
    let mut keys: Vec<&(String, YearQuarter)> = files.keys().chain(status.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut out = Vec::with_capacity(keys.len());
    for key in keys {
        let st = status.get(key).copied().unwrap_or(TranscriptStatus::Collected);
        let text = match files.get(key) {
            Some(p) => std::fs::read_to_string(p).map_err(|e| SchemaError::file(p.display().to_string(), e))?,
            None if st == TranscriptStatus::Collected => {
                return Err(SchemaError::file(
                    &d,
                    format!("{} is marked collected but missing", transcript_name(&key.0, key.1)),
                ))
            }
            None => String::new(),
        };
        out.push(TranscriptRecord::new(&key.0, key.1, st, &text));
    }
    Ok(out)
}

pub fn read_coordinates(path: &Path) -> Result<BTreeMap<String, LatLon>, SchemaError> {
    let rows = read_all(path, &COORDINATES_HEADER, |r| {
        let lat = r.finite("lat")?;
        let lon = r.finite("lon")?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(r.error("lat", "latitude outside [-90, 90]"));
        }
        Ok((r.nonempty("airport")?.to_string(), LatLon { lat, lon }))
    })?;
    Ok(rows.into_iter().collect())
}

pub fn read_populations(path: &Path) -> Result<PopulationTable, SchemaError> {
    let rows = read_all(path, &POPULATIONS_HEADER, |r| {
        let pop = r.finite("cbsa_pop")?;
        if pop <= 0.0 {
            return Err(r.error("cbsa_pop", "population must be positive"));
        }
        Ok(((r.nonempty("airport")?.to_string(), r.parse("year")?), (pop, r.finite("business_index")?)))
    })?;
    Ok(PopulationTable { rows: rows.into_iter().collect() })
}

/// `YYYY-MM-DD` to a calendar month.
fn parse_date(s: &str) -> Option<YearMonth> {
    let mut it = s.split('-');
    let y: i32 = it.next()?.parse().ok()?;
    let m: u32 = it.next()?.parse().ok()?;
    let d: u32 = it.next()?.parse().ok()?;
    if it.next().is_some() || !(1..=31).contains(&d) {
        return None;
    }
    YearMonth::new(y, m).ok()
}

pub fn read_ontime(path: &Path) -> Result<Vec<Departure>, SchemaError> {
    read_all(path, &ONTIME_HEADER, |r| {
        let date = r.str("date")?;
        let year_month = parse_date(date).ok_or_else(|| r.error("date", format!("expected YYYY-MM-DD, got `{date}`")))?;
        let minutes = r.finite("dep_minutes")?;
        if !(0.0..1440.0).contains(&minutes) {
            return Err(r.error("dep_minutes", "departure minute outside [0, 1440)"));
        }
        Ok(Departure {
            year_month,
            carrier: r.nonempty("carrier")?.to_string(),
            origin: r.nonempty("origin")?.to_string(),
            dest: r.nonempty("dest")?.to_string(),
            minutes,
        })
    })
}

pub fn read_fares(path: &Path) -> Result<Vec<FareRecord>, SchemaError> {
    read_all(path, &FARES_HEADER, |r| {
        let route: Vec<String> = r.nonempty("route")?.split('-').map(str::to_string).collect();
        let origin = r.nonempty("origin")?.to_string();
        let dest = r.nonempty("dest")?.to_string();
        if route.len() < 2 || route[0] != origin || route[route.len() - 1] != dest {
            return Err(r.error("route", "route must run from origin to dest"));
        }
        let passengers = r.finite("passengers")?;
        if passengers < 0.0 {
            return Err(r.error("passengers", "negative passengers"));
        }
        Ok(FareRecord {
            carrier: r.nonempty("carrier")?.to_string(),
            origin,
            dest,
            route,
            passengers,
            avg_fare: r.finite("avg_fare")?,
            year_quarter: r.year_quarter("year", "quarter")?,
        })
    })
}

pub fn read_cities(path: &Path) -> Result<BTreeMap<String, String>, SchemaError> {
    let rows = read_all(path, &CITIES_HEADER, |r| {
        Ok((r.nonempty("airport")?.to_string(), r.nonempty("city")?.to_string()))
    })?;
    Ok(rows.into_iter().collect())
}

/// Applies a mergers file (`code,entity`) and an optional carriers file
/// (`carrier,class`) to the default registry.
pub fn read_registry(mergers: Option<&Path>, carriers: Option<&Path>) -> Result<CarrierRegistry, SchemaError> {
    let mut reg = CarrierRegistry::default();
    if let Some(p) = carriers {
        for (code, class) in read_all(p, &CARRIERS_HEADER, |r| {
            let s = r.str("class")?;
            let class = CarrierClass::parse(s).ok_or_else(|| r.error("class", format!("unknown class `{s}`")))?;
            Ok((r.nonempty("carrier")?.to_string(), class))
        })? {
            reg.set_class(&code, class);
        }
    }
    if let Some(p) = mergers {
        for (code, entity) in read_all(p, &MERGERS_HEADER, |r| {
            Ok((r.nonempty("code")?.to_string(), r.nonempty("entity")?.to_string()))
        })? {
            reg.set_merger(&code, &entity);
        }
    }
    Ok(reg)
}

/// Communication flags for collected calls from a codings file.
pub fn read_codings(path: &Path) -> Result<ReportTable, SchemaError> {
    let mut table = ReportTable::default();
    let mut t = CsvTable::open(path, &CODINGS_HEADER)?;
    let token_cols: Vec<String> = {
        let mut v: Vec<String> = t.columns.keys().filter_map(|c| c.strip_prefix("token_").map(str::to_string)).collect();
        v.sort();
        v
    };
    t.for_each(|r| {
        let s = r.str("status")?;
        let status = TranscriptStatus::parse(s).ok_or_else(|| r.error("status", format!("unknown status `{s}`")))?;
        if status != TranscriptStatus::Collected {
            return Ok(());
        }
        let key = (r.nonempty("carrier")?.to_string(), r.year_quarter("year", "quarter")?);
        for tok in &token_cols {
            let v = r.bool01(&format!("token_{tok}"))?;
            table.tokens.entry(tok.clone()).or_default().insert(key.clone(), v);
        }
        table.flags.insert(key, r.bool01("flag")?);
        Ok(())
    })?;
    Ok(table)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn flush<W: Write>(w: csv::Writer<W>) -> Result<(), Error> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    Ok(())
}

/// Writes rows with the given header.
pub fn write_csv<W, R, I>(out: W, header: &[&str], rows: I) -> Result<(), Error>
where
    W: Write,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
    I: IntoIterator<Item = R>,
{
    let mut w = csv_writer(out);
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(r).map_err(csv_error)?;
    }
    flush(w)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Config(format!("{other:?}")),
    }
}

pub fn write_segments<W: Write>(out: W, segments: &[Segment]) -> Result<(), Error> {
    write_csv(
        out,
        &SEGMENTS_HEADER,
        segments.iter().map(|s| {
            vec![
                s.year_month.year.to_string(),
                s.year_month.month.to_string(),
                s.carrier.clone(),
                s.origin.clone(),
                s.dest.clone(),
                s.seats.to_string(),
                s.flights.to_string(),
                s.passengers.to_string(),
            ]
        }),
    )
}

/// Writes one row per coded transcript; `tokens` adds `token_<t>` columns.
pub fn write_codings<W: Write>(
    out: W,
    records: &[TranscriptRecord],
    codings: &BTreeMap<(String, YearQuarter), Coding>,
    tokens: &[String],
) -> Result<(), Error> {
    let mut header: Vec<String> = CODINGS_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend(tokens.iter().map(|t| format!("token_{t}")));
    let href: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut recs: Vec<&TranscriptRecord> = records.iter().collect();
    recs.sort_by(|a, b| (&a.carrier, a.year_quarter).cmp(&(&b.carrier, b.year_quarter)));
    write_csv(
        out,
        &href,
        recs.into_iter().filter_map(|r| {
            let c = codings.get(&(r.carrier.clone(), r.year_quarter))?;
            let mut row = vec![
                r.carrier.clone(),
                r.year_quarter.year.to_string(),
                r.year_quarter.quarter.to_string(),
                r.status.as_str().to_string(),
                u8::from(c.flag).to_string(),
                c.reason.code(),
            ];
            let collected = r.status == TranscriptStatus::Collected;
            row.extend(tokens.iter().map(|t| u8::from(collected && r.has_token(t)).to_string()));
            Some(row)
        }),
    )
}

const PANEL_COLUMNS: [&str; 28] = [
    "carrier",
    "class",
    "merger_group",
    "origin",
    "dest",
    "granularity",
    "year",
    "month",
    "seats",
    "flights",
    "passengers",
    "capacity_discipline",
    "talk_eligible",
    "monopoly",
    "missing_report",
    "only_j_talks",
    "capdis_2",
    "capdis_3",
    "capdis_4",
    "capdis_n1",
    "capdis_not_j",
    "monopoly_capdis",
    "market_type",
    "n_legacy",
    "n_carriers",
    "structure_key",
    "market_population",
    "business_index",
];

fn indicator_values(i: &Indicators) -> [f64; 11] {
    [
        i.capacity_discipline,
        i.talk_eligible,
        i.monopoly,
        i.missing_report,
        i.only_j_talks,
        i.capdis_2,
        i.capdis_3,
        i.capdis_4,
        i.capdis_n1,
        i.capdis_not_j,
        i.monopoly_capdis,
    ]
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Panel CSV: fixed columns followed by the sorted extra columns.
pub fn write_panel<W: Write>(out: W, panel: &[PanelObservation]) -> Result<(), Error> {
    let extras: Vec<String> = {
        let mut v: Vec<String> = panel.iter().flat_map(|o| o.extra.keys().cloned()).collect();
        v.sort();
        v.dedup();
        v
    };
    let mut header: Vec<&str> = PANEL_COLUMNS.to_vec();
    header.extend(extras.iter().map(String::as_str));
    write_csv(
        out,
        &header,
        panel.iter().map(|o| {
            let mut row = vec![
                o.carrier.code.clone(),
                o.carrier.class.as_str().to_string(),
                o.carrier.merger_group.clone(),
                o.market.origin.clone(),
                o.market.destination.clone(),
                match o.market.granularity {
                    Granularity::AirportPair => "airport".to_string(),
                    Granularity::CityPair => "city".to_string(),
                },
                o.year_month.year.to_string(),
                o.year_month.month.to_string(),
                o.seats.to_string(),
                o.flights.to_string(),
                o.passengers.to_string(),
            ];
            row.extend(indicator_values(&o.indicators).iter().map(|v| v.to_string()));
            row.push(o.market_type.as_str().to_string());
            row.push(o.n_legacy.to_string());
            row.push(o.n_carriers.to_string());
            row.push(o.structure_key.clone());
            row.push(opt(o.market_population));
            row.push(opt(o.business_index));
            row.extend(extras.iter().map(|k| o.extra.get(k).map(|v| v.to_string()).unwrap_or_default()));
            row
        }),
    )
}

pub fn read_panel(path: &Path) -> Result<Vec<PanelObservation>, SchemaError> {
    let mut t = CsvTable::open(path, &PANEL_COLUMNS)?;
    let mut extras: Vec<String> = t.columns.keys().filter(|c| !PANEL_COLUMNS.contains(&c.as_str())).cloned().collect();
    extras.sort();
    let mut out = Vec::new();
    t.for_each(|r| {
        let class_s = r.str("class")?;
        let class = CarrierClass::parse(class_s).ok_or_else(|| r.error("class", format!("unknown class `{class_s}`")))?;
        let granularity = match r.str("granularity")? {
            "airport" => Granularity::AirportPair,
            "city" => Granularity::CityPair,
            s => return Err(r.error("granularity", format!("expected airport or city, got `{s}`"))),
        };
        let market = Market::new(r.nonempty("origin")?, r.nonempty("dest")?, granularity)
            .ok_or_else(|| r.error("dest", "origin equals destination"))?;
        let mt = r.str("market_type")?;
        let market_type = MarketType::parse(mt).ok_or_else(|| r.error("market_type", format!("unknown market type `{mt}`")))?;
        let f = |c: &str| r.finite(c);
        let indicators = Indicators {
            capacity_discipline: f("capacity_discipline")?,
            talk_eligible: f("talk_eligible")?,
            monopoly: f("monopoly")?,
            missing_report: f("missing_report")?,
            only_j_talks: f("only_j_talks")?,
            capdis_2: f("capdis_2")?,
            capdis_3: f("capdis_3")?,
            capdis_4: f("capdis_4")?,
            capdis_n1: f("capdis_n1")?,
            capdis_not_j: f("capdis_not_j")?,
            monopoly_capdis: f("monopoly_capdis")?,
        };
        let seats: u64 = r.parse("seats")?;
        if seats == 0 {
            return Err(r.error("seats", "panel rows need positive seats"));
        }
        let mut extra = BTreeMap::new();
        for k in &extras {
            if let Some(v) = r.optional::<f64>(k)? {
                extra.insert(k.clone(), v);
            }
        }
        out.push(PanelObservation {
            carrier: Carrier {
                code: r.nonempty("carrier")?.to_string(),
                class,
                merger_group: r.nonempty("merger_group")?.to_string(),
            },
            market,
            year_month: r.year_month("year", "month")?,
            seats,
            flights: r.parse("flights")?,
            passengers: r.parse("passengers")?,
            indicators,
            market_type,
            n_legacy: r.parse("n_legacy")?,
            n_carriers: r.parse("n_carriers")?,
            structure_key: r.nonempty("structure_key")?.to_string(),
            extra,
            avg_fare: None,
            market_population: r.optional("market_population")?,
            business_index: r.optional("business_index")?,
        });
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcript_names() {
        let yq = YearQuarter::new(2012, 1).unwrap();
        assert_eq!(transcript_name("AA", yq), "AA_2012Q1.txt");
        assert_eq!(parse_transcript_name("AA_2012Q1.txt"), Some(("AA".into(), yq)));
        assert_eq!(parse_transcript_name("AA_2012Q5.txt"), None);
        assert_eq!(parse_transcript_name("AA2012Q1.txt"), None);
    }

    #[test]
    fn segment_errors_point_at_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "year,month,ticketing_carrier,origin,dest,seats,flights,passengers\n2012,1,AA,JFK,LAX,100,4,80\n2012,13,AA,JFK,LAX,100,4,80\n").unwrap();
        let err = read_segments(&p).unwrap_err();
        assert_eq!(err.location(), Some((3, "month")));
        std::fs::write(&p, "year,month,carrier\n").unwrap();
        let err = read_segments(&p).unwrap_err();
        assert!(matches!(err, SchemaError::MissingColumn { ref column, .. } if column == "ticketing_carrier"));
    }

    #[test]
    fn segments_round_trip() {
        let segs = vec![Segment {
            year_month: YearMonth::new(2011, 4).unwrap(),
            carrier: "DL".into(),
            origin: "ATL".into(),
            dest: "BOS".into(),
            seats: 12000,
            flights: 80,
            passengers: 9500,
        }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_segments(File::create(&p).unwrap(), &segs).unwrap();
        assert_eq!(read_segments(&p).unwrap(), segs);
    }

    #[test]
    fn fixed_precision() {
        assert_eq!(fixed(0.1), "1.0000000000000001e-1");
        assert_eq!(fixed(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
