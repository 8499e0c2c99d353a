//! End-to-end commands over on-disk inputs. Each command returns the files it
//! produces together with a plain-text summary; nothing is written until
//! [`write_output`] is called.

pub mod config;
pub mod table;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::design::{
    build_design, control_function_design, controls, market_design, market_months, Columns,
    InstrumentTable, MarketMonth, Treatment, CAPACITY_DISCIPLINE,
};
use crate::domain::{cluster_key, CarrierRegistry, Granularity, Indicators, Market, PanelObservation, YearMonth, YearQuarter};
use crate::econ::absorb::encode;
use crate::econ::diagnostics::LEAD_NAME;
use crate::econ::{
    control_function, estimate_fe, lead_exogeneity_test, poisson_fe, semi_elasticity, semi_elasticity_se,
    twfe_weights, AbsorbOptions, BootstrapOptions, Factor, FixedEffectSpec, PoissonOptions, TrendGroup,
};
use crate::embed::{merge_phrase, report_cooccurrence, screen_tokens, Embedding, MERGED_PHRASE};
use crate::error::Error;
use crate::io::{self, fixed};
use crate::metrics::{aggregate_fares, crowding_panel, passenger_weighted, route_indicator, RouteRule};
use crate::network::{aggregate_min, hub_distance, hubs, CarrierNetwork};
use crate::panel::{aggregate_segments, attach_population, build_panel, period_split, to_city_pairs, PanelConfig};
use crate::synth::{gen_fixture, FixtureSpec};
use crate::text::{code_corpus, LabelSet, TextPipeline, TranscriptRecord, TranscriptStatus, CAPACITY_DISCIPLINE as PHRASE};

pub use config::{existing, Level, NetworkPeriod, RunConfig};
pub use table::{Column, Estimate, ResultTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    CodeTranscripts,
    TrainEmbedding,
    ScreenTokens,
    BuildPanel,
    Estimate,
    Poisson,
    Crowding,
    Prices,
    Hubs,
    ControlFunction,
    Diagnostics,
    Simulate,
}

impl Command {
    pub const ALL: [Command; 12] = [
        Command::CodeTranscripts,
        Command::TrainEmbedding,
        Command::ScreenTokens,
        Command::BuildPanel,
        Command::Estimate,
        Command::Poisson,
        Command::Crowding,
        Command::Prices,
        Command::Hubs,
        Command::ControlFunction,
        Command::Diagnostics,
        Command::Simulate,
    ];

    /// Order used by `run-all`: coding and the panel first, the embedding
    /// steps last.
    pub const PIPELINE: [Command; 11] = [
        Command::CodeTranscripts,
        Command::BuildPanel,
        Command::Estimate,
        Command::Poisson,
        Command::Crowding,
        Command::Prices,
        Command::Hubs,
        Command::ControlFunction,
        Command::Diagnostics,
        Command::TrainEmbedding,
        Command::ScreenTokens,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::CodeTranscripts => "code-transcripts",
            Command::TrainEmbedding => "train-embedding",
            Command::ScreenTokens => "screen-tokens",
            Command::BuildPanel => "build-panel",
            Command::Estimate => "estimate",
            Command::Poisson => "poisson",
            Command::Crowding => "crowding",
            Command::Prices => "prices",
            Command::Hubs => "hubs",
            Command::ControlFunction => "control-function",
            Command::Diagnostics => "diagnostics",
            Command::Simulate => "simulate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Command::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// Files to write (absolute or config-relative paths) and a text summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub text: String,
}

impl CommandOutput {
    fn file(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    fn table(&mut self, path: PathBuf, t: &ResultTable) {
        self.file(path, t.to_csv());
        self.text.push_str(&t.render());
    }
}

/// Writes every file of `out`, creating parent directories.
pub fn write_output(out: &CommandOutput) -> Result<(), Error> {
    for (p, bytes) in &out.files {
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(p, bytes)?;
    }
    Ok(())
}

/// Runs one command on a rayon pool sized by `cfg.threads`.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cmd {
        Command::CodeTranscripts => code_transcripts(cfg),
        Command::TrainEmbedding => train_embedding(cfg),
        Command::ScreenTokens => screen(cfg),
        Command::BuildPanel => build_panel_cmd(cfg),
        Command::Estimate => estimate(cfg),
        Command::Poisson => poisson(cfg),
        Command::Crowding => crowding(cfg),
        Command::Prices => prices(cfg),
        Command::Hubs => hubs_cmd(cfg),
        Command::ControlFunction => control_function_cmd(cfg),
        Command::Diagnostics => diagnostics(cfg),
        Command::Simulate => simulate(cfg),
    })
}

/// Runs [`Command::PIPELINE`] in order, writing each command's files before
/// the next starts. Returns the concatenated summaries.
pub fn run_pipeline(cfg: &RunConfig) -> Result<String, Error> {
    let mut text = String::new();
    for cmd in Command::PIPELINE {
        let out = run(cmd, cfg)?;
        write_output(&out)?;
        text.push_str(&format!("## {}\n", cmd.as_str()));
        text.push_str(&out.text);
        text.push('\n');
    }
    Ok(text)
}

fn absorb_opts(cfg: &RunConfig) -> AbsorbOptions {
    AbsorbOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        threads: cfg.threads,
    }
}

fn registry(cfg: &RunConfig) -> Result<CarrierRegistry, Error> {
    let mut reg = io::read_registry(cfg.mergers.as_deref(), cfg.carriers.as_deref())?;
    reg.fringe_threshold = cfg.fringe_threshold;
    Ok(reg)
}

fn csv_bytes<R, I>(header: &[&str], rows: I) -> Result<Vec<u8>, Error>
where
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
    I: IntoIterator<Item = R>,
{
    let mut buf = Vec::new();
    io::write_csv(&mut buf, header, rows)?;
    Ok(buf)
}

fn load_panel(cfg: &RunConfig) -> Result<Vec<PanelObservation>, Error> {
    let panel = io::read_panel(&existing(Some(&cfg.panel_path()), "panel")?)?;
    if panel.is_empty() {
        return Err(Error::Config("panel is empty".into()));
    }
    Ok(panel)
}

fn load_transcripts(cfg: &RunConfig) -> Result<Vec<TranscriptRecord>, Error> {
    let status = io::read_status(&existing(cfg.status.as_deref(), "status")?)?;
    Ok(io::read_transcripts(&existing(cfg.transcripts.as_deref(), "transcripts")?, &status)?)
}

fn code_transcripts(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let mut records = load_transcripts(cfg)?;
    let labels = match &cfg.labels {
        Some(p) => io::read_labels(&existing(Some(p), "labels")?)?,
        None => LabelSet::default(),
    };
    let coding = code_corpus(&mut records, &labels, &cfg.label_priority);
    let mut tokens = cfg.tokens.clone();
    if let Treatment::ZToken(t) = &cfg.treatment {
        if !tokens.contains(t) {
            tokens.push(t.clone());
        }
    }
    let mut out = CommandOutput::default();
    let mut buf = Vec::new();
    io::write_codings(&mut buf, &records, &coding.codings, &tokens)?;
    out.file(cfg.codings_path(), buf);
    out.file(
        cfg.out.join("review_queue.csv"),
        csv_bytes(
            &["carrier", "year", "quarter"],
            coding
                .review_queue
                .iter()
                .map(|(c, q)| [c.clone(), q.year.to_string(), q.quarter.to_string()]),
        )?,
    );
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for c in coding.codings.values() {
        *reasons.entry(c.reason.code()).or_default() += 1;
    }
    let flagged = coding.codings.values().filter(|c| c.flag).count();
    let mut pairs = vec![
        ("transcripts".to_string(), records.len().to_string()),
        ("flagged".to_string(), flagged.to_string()),
        ("review queue".to_string(), coding.review_queue.len().to_string()),
    ];
    pairs.extend(reasons.into_iter().map(|(k, v)| (format!("reason {k}"), v.to_string())));
    out.text = table::render_pairs("Transcript coding", &pairs);
    Ok(out)
}

/// Management sentences of collected calls with the phrase merged to one token.
fn merged_sentences(records: &mut [TranscriptRecord]) -> Vec<Vec<Vec<String>>> {
    let pipeline = TextPipeline::default();
    records.par_iter_mut().for_each(|r| r.tokenize(&pipeline));
    records
        .iter()
        .filter(|r| r.status == TranscriptStatus::Collected)
        .map(|r| r.sentences.iter().map(|s| merge_phrase(s, &PHRASE, MERGED_PHRASE)).collect())
        .collect()
}

fn train_embedding(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let mut records = load_transcripts(cfg)?;
    let corpus: Vec<Vec<String>> = merged_sentences(&mut records).into_iter().flatten().collect();
    let emb = Embedding::train(&corpus, &cfg.training)?;
    let mut out = CommandOutput::default();
    let mut bin = Vec::new();
    emb.write_to(&mut bin)?;
    out.file(cfg.embedding_path(), bin);

    let mut rows: Vec<[String; 4]> = Vec::new();
    let mut pairs = vec![
        ("sentences".to_string(), corpus.len().to_string()),
        ("vocabulary".to_string(), emb.len().to_string()),
        ("dimensions".to_string(), emb.dims.to_string()),
    ];
    for anchor in cfg.screen.anchors.iter().filter(|a| emb.contains(a)) {
        let mut sims: Vec<(f64, &String)> = emb
            .vocab
            .iter()
            .filter(|t| *t != anchor)
            .map(|t| emb.similarity(anchor, t).map(|s| (s, t)))
            .collect::<Result<_, _>>()?;
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        sims.truncate(10);
        pairs.push((
            format!("nearest to {anchor}"),
            sims.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>().join(" "),
        ));
        for (rank, (s, t)) in sims.iter().enumerate() {
            rows.push([anchor.clone(), (rank + 1).to_string(), t.to_string(), fixed(*s)]);
        }
    }
    out.file(
        cfg.out.join("embedding_neighbors.csv"),
        csv_bytes(&["anchor", "rank", "token", "similarity"], rows)?,
    );
    out.text = table::render_pairs("Embedding", &pairs);
    Ok(out)
}

fn screen(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let path = existing(Some(&cfg.embedding_path()), "embedding")?;
    let emb = Embedding::read_from(std::io::BufReader::new(std::fs::File::open(&path)?))?;
    let mut records = load_transcripts(cfg)?;
    let reports: Vec<BTreeSet<String>> = merged_sentences(&mut records)
        .into_iter()
        .map(|doc| doc.into_iter().flatten().collect())
        .collect();
    let co = report_cooccurrence(&reports, &cfg.screen.anchors);
    let screened = screen_tokens(&emb, &cfg.screen, &co)?;
    let mut header = vec!["token".to_string(), "mean_similarity".to_string()];
    header.extend(cfg.screen.anchors.iter().map(|a| format!("cos_{a}")));
    header.push("cooccurrence".into());
    let href: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = screened.iter().map(|s| {
        let mut r = vec![s.token.clone(), fixed(s.mean_similarity)];
        r.extend(s.similarities.iter().map(|v| fixed(*v)));
        r.push(fixed(s.cooccurrence));
        r
    });
    let mut out = CommandOutput::default();
    out.file(cfg.out.join("screened_tokens.csv"), csv_bytes(&href, rows)?);
    let mut pairs = vec![
        ("reports".to_string(), reports.len().to_string()),
        ("candidates".to_string(), screened.len().to_string()),
    ];
    pairs.extend(screened.iter().take(20).map(|s| {
        (s.token.clone(), format!("similarity {:.3}, co-occurrence {:.3}", s.mean_similarity, s.cooccurrence))
    }));
    out.text = table::render_pairs("Token screen", &pairs);
    Ok(out)
}

fn build_panel_cmd(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let segments = io::read_segments(&existing(cfg.segments.as_deref(), "segments")?)?;
    let reg = registry(cfg)?;
    let reports = io::read_codings(&existing(Some(&cfg.codings_path()), "codings")?)?;
    let mut rows = aggregate_segments(&segments, &reg);
    if cfg.granularity == Granularity::CityPair {
        let cities = io::read_cities(&existing(cfg.cities.as_deref(), "cities")?)?;
        rows = to_city_pairs(&rows, &cities)?;
    }
    let mut panel = build_panel(&rows, &reg, &reports, &PanelConfig { alignment: cfg.alignment });
    if let Some(p) = &cfg.populations {
        attach_population(&mut panel, &io::read_populations(&existing(Some(p), "populations")?)?)?;
    }
    if let Treatment::PeriodSplit(m) = cfg.treatment {
        period_split(&mut panel, m);
    }
    let mut buf = Vec::new();
    io::write_panel(&mut buf, &panel)?;
    let mut out = CommandOutput::default();
    out.file(cfg.panel_path(), buf);

    let markets: BTreeSet<&Market> = panel.iter().map(|o| &o.market).collect();
    let carriers: BTreeSet<&str> = panel.iter().map(|o| o.carrier.code.as_str()).collect();
    let months: BTreeSet<YearMonth> = panel.iter().map(|o| o.year_month).collect();
    let treated = panel.iter().filter(|o| o.indicators.capacity_discipline > 0.0).count();
    let violations = panel.iter().filter(|o| !o.check_invariants()).count();
    let share = if panel.is_empty() { 0.0 } else { treated as f64 / panel.len() as f64 };
    out.text = table::render_pairs(
        "Panel",
        &[
            ("rows".into(), panel.len().to_string()),
            ("markets".into(), markets.len().to_string()),
            ("carriers".into(), carriers.len().to_string()),
            ("months".into(), months.len().to_string()),
            ("share Capacity Discipline".into(), format!("{share:.4}")),
            ("invariant violations".into(), violations.to_string()),
        ],
    );
    Ok(out)
}

fn estimate(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let panel = load_panel(cfg)?;
    let opts = absorb_opts(cfg);
    let (design, title) = match cfg.level {
        Level::Carrier => (build_design(&panel, &cfg.treatment, cfg.fe)?, format!("ln seats, carrier level ({})", cfg.treatment)),
        Level::Market => {
            if cfg.treatment != Treatment::Main {
                return Err(Error::Config("market-level estimation supports the main treatment only".into()));
            }
            let rows = market_months(&panel);
            let y = rows.iter().map(|r| (r.seats as f64).ln()).collect();
            (market_design(&rows, y, Vec::new())?, "ln total seats, market level".to_string())
        }
    };
    let r = estimate_fe(&design.outcome, &design.regressors, &design.fe, &design.clusters, opts)?;
    let mut t = ResultTable::new(&title, vec![Column::from_regression("(1)", &r, true)])
        .note(format!("Fixed effects: {}", r.fixed_effects.join(", ")))
        .note("Standard errors clustered by bi-directional market; semi-elasticities in brackets.");
    if !r.dropped.is_empty() {
        t = t.note(format!("Dropped collinear: {}", r.dropped.join(", ")));
    }
    let mut out = CommandOutput::default();
    out.table(cfg.out.join("estimates.csv"), &t);
    Ok(out)
}

fn poisson(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let panel = load_panel(cfg)?;
    let rows = market_months(&panel);
    let y: Vec<f64> = rows.iter().map(|r| r.flights as f64).collect();
    let design = market_design(&rows, y.clone(), Vec::new())?;
    let groups = encode(rows.iter().map(|r| r.market.clone())).0;
    let time = encode(rows.iter().map(|r| r.year_month.quarter())).0;
    let r = poisson_fe(
        &y,
        &design.regressors,
        &groups,
        Some(&time),
        PoissonOptions { tol: cfg.tol.max(1e-10), max_iter: PoissonOptions::default().max_iter },
    )?;
    let mut col = Column::from_poisson("(1)", &r);
    for e in &mut col.estimates {
        if design.regressors.iter().any(|x| x.name == e.term && x.binary) {
            e.semi = Some((semi_elasticity(e.coef), semi_elasticity_se(e.coef, e.se)));
        }
    }
    let t = ResultTable::new("Flights, Poisson with market fixed effects", vec![col.stat("Iterations", r.iterations as f64)])
        .note("Year-quarter dummies included, not shown.");
    let mut out = CommandOutput::default();
    out.table(cfg.out.join("poisson.csv"), &t);
    Ok(out)
}

fn crowding(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let panel = load_panel(cfg)?;
    let deps = io::read_ontime(&existing(cfg.ontime.as_deref(), "ontime")?)?;
    let pooled = crowding_panel(&deps, false)?;
    let mut out = CommandOutput::default();
    let header = ["origin", "dest", "year", "month", "departures", "atd", "crowding"];
    let row = |c: &crate::metrics::CrowdingRow| {
        vec![
            c.origin.clone(),
            c.dest.clone(),
            c.year_month.year.to_string(),
            c.year_month.month.to_string(),
            c.departures.to_string(),
            fixed(c.atd),
            fixed(c.crowding),
        ]
    };
    out.file(cfg.out.join("crowding_panel.csv"), csv_bytes(&header, pooled.iter().map(row))?);
    if cfg.per_carrier {
        let per = crowding_panel(&deps, true)?;
        let mut h = vec!["carrier"];
        h.extend(header);
        let rows = per.iter().map(|c| {
            let mut r = vec![c.carrier.clone().unwrap_or_default()];
            r.extend(row(c));
            r
        });
        out.file(cfg.out.join("crowding_panel_carrier.csv"), csv_bytes(&h, rows)?);
    }

    let all = market_months(&panel);
    let mm: BTreeMap<(&str, &str, YearMonth), &MarketMonth> = all
        .iter()
        .map(|m| ((m.market.origin.as_str(), m.market.destination.as_str(), m.year_month), m))
        .collect();
    let mut rows: Vec<MarketMonth> = Vec::new();
    let mut y = Vec::new();
    for c in &pooled {
        if let Some(m) = mm.get(&(c.origin.as_str(), c.dest.as_str(), c.year_month)) {
            rows.push((*m).clone());
            y.push(c.crowding);
        }
    }
    if rows.is_empty() {
        return Err(Error::Config("no on-time market-month matches the panel".into()));
    }
    let ln_seats: Vec<f64> = rows.iter().map(|r| (r.seats as f64).ln()).collect();
    let inter: Vec<f64> = rows.iter().zip(&ln_seats).map(|(r, s)| r.indicators.capacity_discipline * s).collect();
    let design = market_design(
        &rows,
        y,
        vec![("ln market seats".into(), ln_seats), ("Capacity Discipline x ln market seats".into(), inter)],
    )?;
    let r = estimate_fe(&design.outcome, &design.regressors, &design.fe, &design.clusters, absorb_opts(cfg))?;
    let t = ResultTable::new("Departure crowding, market level", vec![Column::from_regression("(1)", &r, false)])
        .note(format!("{} of {} crowding cells matched to the panel.", rows.len(), pooled.len()));
    out.table(cfg.out.join("crowding.csv"), &t);
    Ok(out)
}

/// Carrier, origin, destination and quarter.
type CellKey<'a> = (&'a str, &'a str, &'a str, YearQuarter);
/// Route indicators, passengers and average fare.
type RouteCell = ([f64; 4], f64, f64);

/// Quarterly means of the four market indicators per carrier segment.
fn segment_quarters(panel: &[PanelObservation]) -> BTreeMap<CellKey<'_>, [f64; 4]> {
    let mut acc: BTreeMap<CellKey<'_>, ([f64; 4], f64)> = BTreeMap::new();
    for o in panel {
        let i = &o.indicators;
        let e = acc
            .entry((o.carrier.code.as_str(), o.market.origin.as_str(), o.market.destination.as_str(), o.year_month.quarter()))
            .or_default();
        for (s, v) in e.0.iter_mut().zip([i.capacity_discipline, i.talk_eligible, i.monopoly, i.missing_report]) {
            *s += v;
        }
        e.1 += 1.0;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s.map(|v| v / n))).collect()
}

fn prices(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let panel = load_panel(cfg)?;
    let fares = io::read_fares(&existing(cfg.fares.as_deref(), "fares")?)?;
    let segs = segment_quarters(&panel);
    let markets: BTreeSet<(&str, &str)> = panel.iter().map(|o| (o.market.origin.as_str(), o.market.destination.as_str())).collect();
    let carriers: BTreeMap<&str, &crate::domain::Carrier> = panel.iter().map(|o| (o.carrier.code.as_str(), &o.carrier)).collect();
    let routes = aggregate_fares(&fares, |o, d| markets.contains(&(o, d)));

    let mut cells: BTreeMap<CellKey, Vec<RouteCell>> = BTreeMap::new();
    let mut unmatched = 0;
    for r in &routes {
        let vals: Option<Vec<[f64; 4]>> = r
            .route
            .windows(2)
            .map(|w| (w[0].as_str(), w[1].as_str()))
            .map(|(a, b)| segs.get(&(r.carrier.as_str(), a, b, r.year_quarter)).copied())
            .collect();
        let Some(vals) = vals else {
            unmatched += 1;
            continue;
        };
        let col = |k: usize| vals.iter().map(|v| v[k]).collect::<Vec<_>>();
        let ind = [
            route_indicator(&col(0), RouteRule::All)?,
            route_indicator(&col(1), RouteRule::All)?,
            route_indicator(&col(2), RouteRule::All)?,
            route_indicator(&col(3), RouteRule::Any)?,
        ];
        cells
            .entry((r.carrier.as_str(), r.origin.as_str(), r.dest.as_str(), r.year_quarter))
            .or_default()
            .push((ind, r.passengers, r.avg_fare));
    }
    if cells.is_empty() {
        return Err(Error::Config("no fare route matches the panel".into()));
    }
    let keys: Vec<CellKey> = cells.keys().copied().collect();
    let mut outcome = Vec::with_capacity(keys.len());
    let mut inds: Vec<Indicators> = Vec::with_capacity(keys.len());
    for routes in cells.values() {
        let pax: Vec<f64> = routes.iter().map(|r| r.1).collect();
        let w = |f: &dyn Fn(&RouteCell) -> f64| passenger_weighted(&routes.iter().map(f).collect::<Vec<_>>(), &pax);
        outcome.push(w(&|r| r.2)?.ln());
        inds.push(Indicators {
            capacity_discipline: w(&|r| r.0[0])?,
            talk_eligible: w(&|r| r.0[1])?,
            monopoly: w(&|r| r.0[2])?,
            missing_report: w(&|r| r.0[3])?,
            ..Indicators::default()
        });
    }
    let group = |c: &str| carriers.get(c).map(|x| x.merger_group.clone()).unwrap_or_else(|| c.to_string());
    let t: Vec<f64> = keys.iter().map(|k| k.3.year as f64 + (k.3.quarter - 1) as f64 / 4.0).collect();
    let fe = FixedEffectSpec::new(
        vec![
            Factor::from_keys("carrier-market", keys.iter().map(|k| (group(k.0), k.1, k.2))),
            Factor::from_keys("carrier-year-quarter", keys.iter().map(|k| (group(k.0), k.3))),
        ],
        vec![
            TrendGroup::from_keys("origin-trend", keys.iter().map(|k| k.1), t.clone()),
            TrendGroup::from_keys("destination-trend", keys.iter().map(|k| k.2), t),
        ],
    );
    let clusters = encode(keys.iter().map(|k| cluster_key(k.1, k.2))).0;
    let opts = absorb_opts(cfg);
    let n = keys.len();
    let mut columns = Vec::new();
    for split in [false, true] {
        let mut cols = Columns::new();
        for (r, (k, i)) in keys.iter().zip(&inds).enumerate() {
            if split {
                let legacy = carriers.get(k.0).is_some_and(|c| c.class == crate::domain::CarrierClass::Legacy);
                cols.push(r, "Capacity Discipline x legacy", if legacy { i.capacity_discipline } else { 0.0 });
                cols.push(r, "Capacity Discipline x LCC", if legacy { 0.0 } else { i.capacity_discipline });
            } else {
                cols.push(r, CAPACITY_DISCIPLINE, i.capacity_discipline);
            }
            for (name, v) in controls(i) {
                cols.push(r, name, v);
            }
        }
        let regs = cols.finish(n);
        let res = estimate_fe(&outcome, &regs, &fe, &clusters, opts)?;
        columns.push(Column::from_regression(if split { "(2)" } else { "(1)" }, &res, true));
    }
    let t = ResultTable::new("ln passenger-weighted fare, carrier-market-quarter", columns)
        .note(format!("{} routes used, {unmatched} dropped for unmatched segments.", routes.len() - unmatched));
    let mut out = CommandOutput::default();
    out.table(cfg.out.join("prices.csv"), &t);
    Ok(out)
}

fn period_label(ym: YearMonth, p: NetworkPeriod) -> String {
    match p {
        NetworkPeriod::Quarter => ym.quarter().to_string(),
        NetworkPeriod::Month => ym.to_string(),
    }
}

/// Hub sets keyed by (merger group, period).
type HubSets = BTreeMap<(String, String), (BTreeMap<String, f64>, BTreeSet<String>)>;

fn carrier_hubs(cfg: &RunConfig, reg: &CarrierRegistry) -> Result<HubSets, Error> {
    let segments = io::read_segments(&existing(cfg.segments.as_deref(), "segments")?)?;
    let rows = aggregate_segments(&segments, reg);
    let mut edges: BTreeMap<(String, String), Vec<(&str, &str)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.serving) {
        edges
            .entry((reg.merger_group(&r.carrier).to_string(), period_label(r.year_month, cfg.network_period)))
            .or_default()
            .push((r.market.origin.as_str(), r.market.destination.as_str()));
    }
    let edges: Vec<_> = edges.into_iter().collect();
    edges
        .par_iter()
        .map(|((c, p), e)| {
            let net = CarrierNetwork::from_edges(c, p, e.iter().copied());
            let cent = net.centrality()?;
            let h = hubs(&cent, cfg.hub_threshold);
            Ok(((c.clone(), p.clone()), (cent, h)))
        })
        .collect()
}

fn hubs_cmd(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let reg = registry(cfg)?;
    let sets = carrier_hubs(cfg, &reg)?;
    let mut rows = Vec::new();
    let mut per_carrier: BTreeMap<&str, (usize, usize, &BTreeSet<String>)> = BTreeMap::new();
    for ((c, p), (cent, h)) in &sets {
        for (a, v) in cent {
            rows.push([c.clone(), p.clone(), a.clone(), fixed(*v), u8::from(h.contains(a)).to_string()]);
        }
        let e = per_carrier.entry(c).or_insert((0, 0, h));
        e.0 += 1;
        e.1 += h.len();
        e.2 = h;
    }
    let mut out = CommandOutput::default();
    out.file(cfg.out.join("hubs.csv"), csv_bytes(&["carrier", "period", "airport", "centrality", "hub"], rows)?);
    let pairs: Vec<(String, String)> = per_carrier
        .into_iter()
        .map(|(c, (n, k, last))| {
            let list: Vec<&str> = last.iter().map(String::as_str).collect();
            let list = if list.is_empty() { "none".to_string() } else { list.join(" ") };
            (c.to_string(), format!("{n} periods, {:.2} hubs per period, latest: {list}", k as f64 / n as f64))
        })
        .collect();
    out.text = table::render_pairs(&format!("Hubs (centrality >= {})", cfg.hub_threshold), &pairs);
    Ok(out)
}

fn control_function_cmd(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let panel = load_panel(cfg)?;
    let reg = registry(cfg)?;
    let coords = io::read_coordinates(&existing(cfg.coordinates.as_deref(), "coordinates")?)?;
    let sets = carrier_hubs(cfg, &reg)?;
    let legacy: BTreeSet<String> = reg.legacy_codes().iter().map(|c| reg.merger_group(c).to_string()).collect();
    let lcc: BTreeSet<String> = reg.lcc_codes().iter().map(|c| reg.merger_group(c).to_string()).collect();
    let legacy: Vec<String> = legacy.into_iter().filter(|c| !lcc.contains(c)).collect();

    let cells: BTreeSet<(&Market, YearMonth)> = panel.iter().map(|o| (&o.market, o.year_month)).collect();
    let dist = |c: &str, m: &Market, p: &str| -> Result<Option<f64>, Error> {
        match sets.get(&(c.to_string(), p.to_string())) {
            Some((_, h)) => Ok(hub_distance(&m.origin, &m.destination, h, &coords)?.map(|d| d / 1000.0)),
            None => Ok(None),
        }
    };
    let mut raw = Vec::with_capacity(cells.len());
    for (m, ym) in cells {
        let p = period_label(ym, cfg.network_period);
        let mut v = Vec::with_capacity(legacy.len() + 1);
        for c in &legacy {
            v.push(dist(c, m, &p)?);
        }
        let l = lcc.iter().map(|c| dist(c, m, &p)).collect::<Result<Vec<_>, _>>()?;
        v.push(aggregate_min(l));
        raw.push(((m.clone(), ym), v));
    }
    let mut names: Vec<String> = legacy.iter().map(|c| format!("hub distance {c}")).collect();
    names.push("hub distance LCC".into());
    let keep: Vec<usize> = (0..names.len()).filter(|&j| raw.iter().any(|r| r.1[j].is_some())).collect();
    if keep.is_empty() {
        return Err(Error::Config("no carrier network yields hub distances".into()));
    }
    let table_in = InstrumentTable {
        names: keep.iter().map(|&j| names[j].clone()).collect(),
        rows: raw
            .iter()
            .filter_map(|(k, v)| keep.iter().map(|&j| v[j]).collect::<Option<Vec<f64>>>().map(|v| (k.clone(), v)))
            .collect(),
    };

    let opts = absorb_opts(cfg);
    let d = control_function_design(&panel, &table_in, cfg.fe)?;
    let boot = (cfg.bootstrap > 0).then_some(BootstrapOptions { replicates: cfg.bootstrap, seed: cfg.seed, threads: cfg.threads });
    let cf = control_function(&d.first, &d.instruments, &d.second, opts, boot)?;
    let plain_d = build_design(&panel, &Treatment::Main, cfg.fe)?;
    let plain = estimate_fe(&plain_d.outcome, &plain_d.regressors, &plain_d.fe, &plain_d.clusters, opts)?;

    let mut second = Column::from_regression("Control function", &cf.second_stage, true);
    if cf.bootstrap.is_some() {
        for e in &mut second.estimates {
            if let Some(se) = cf.bootstrap_se(&e.term) {
                e.se = se;
                if let Some(s) = &mut e.semi {
                    s.1 = semi_elasticity_se(e.coef, se);
                }
            }
        }
    }
    let first = Column::from_regression("First stage", &cf.first_stage, false).stat("F (instruments)", cf.first_stage_f);
    let mut t = ResultTable::new(
        "ln seats, control function for Talk Eligible",
        vec![Column::from_regression("Plain", &plain, true), first, second],
    )
    .note(format!("Instruments (thousand miles): {}.", d.instruments.join(", ")))
    .note(format!("{} market-months without instrument values.", d.missing_instruments));
    if !cf.first_stage.dropped.is_empty() {
        t = t.note(format!("Dropped from the first stage as collinear: {}.", cf.first_stage.dropped.join(", ")));
    }
    t = match &cf.bootstrap {
        Some(b) => t.note(format!(
            "Control-function SEs from {} cluster-bootstrap replicates ({} failed).",
            b.estimates.len(),
            b.failed
        )),
        None => t.note("Control-function SEs are analytic and ignore first-stage estimation."),
    };

    let mut out = CommandOutput::default();
    let mut header = vec!["origin".to_string(), "dest".to_string(), "year".to_string(), "month".to_string()];
    header.extend(table_in.names.iter().cloned());
    let href: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = table_in.rows.iter().map(|((m, ym), v)| {
        let mut r = vec![m.origin.clone(), m.destination.clone(), ym.year.to_string(), ym.month.to_string()];
        r.extend(v.iter().map(|x| fixed(*x)));
        r
    });
    out.file(cfg.out.join("instruments.csv"), csv_bytes(&href, rows)?);
    out.table(cfg.out.join("control_function.csv"), &t);
    Ok(out)
}

fn diagnostics(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let panel = load_panel(cfg)?;
    let d = build_design(&panel, &Treatment::Main, cfg.fe)?;
    let opts = absorb_opts(cfg);
    let (lead, weights) = if cfg.lead || cfg.weights { (cfg.lead, cfg.weights) } else { (true, true) };
    let mut out = CommandOutput::default();
    if lead {
        let market = encode(panel.iter().map(|o| o.market.clone())).0;
        let month: Vec<i64> = panel.iter().map(|o| o.year_month.index()).collect();
        let lt = lead_exogeneity_test(&d.outcome, &d.regressors, CAPACITY_DISCIPLINE, &market, &month, &d.fe, &d.clusters, opts)?;
        let mut col = Column::from_regression("(1)", &lt.result, true).stat("Lead p-value", lt.p_value);
        col.rename(LEAD_NAME, "Capacity Discipline (lead)");
        let t = ResultTable::new("Lead exogeneity test", vec![col])
            .note(format!("{} rows without a next-month observation dropped.", lt.dropped_rows));
        out.table(cfg.out.join("lead_test.csv"), &t);
    }
    if weights {
        let treat = d
            .regressors
            .iter()
            .find(|r| r.name == CAPACITY_DISCIPLINE)
            .ok_or_else(|| Error::Config("Capacity Discipline never equals one in the panel".into()))?;
        let w = twfe_weights(&treat.values, &d.fe, opts)?;
        let rows = w.rows.iter().zip(w.residuals.iter().zip(&w.weights)).map(|(&i, (r, wt))| {
            let o = &panel[i];
            [
                o.carrier.code.clone(),
                o.market.origin.clone(),
                o.market.destination.clone(),
                o.year_month.year.to_string(),
                o.year_month.month.to_string(),
                fixed(*r),
                fixed(*wt),
            ]
        });
        out.file(
            cfg.out.join("twfe_weights.csv"),
            csv_bytes(&["carrier", "origin", "dest", "year", "month", "residual", "weight"], rows)?,
        );
        let min = w.weights.iter().copied().fold(f64::INFINITY, f64::min);
        let max = w.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !out.text.is_empty() {
            out.text.push('\n');
        }
        out.text.push_str(&table::render_pairs(
            "Fixed-effects weights on treated cells",
            &[
                ("treated cells".into(), w.rows.len().to_string()),
                ("share negative".into(), format!("{:.4}", w.share_negative)),
                ("min weight".into(), format!("{min:.4}")),
                ("max weight".into(), format!("{max:.4}")),
            ],
        ));
    }
    Ok(out)
}

fn simulate(cfg: &RunConfig) -> Result<CommandOutput, Error> {
    let fx = gen_fixture(&FixtureSpec::with_seed(cfg.seed))?;
    let mut out = CommandOutput::default();
    for (rel, content) in &fx.files {
        out.file(cfg.out.join(rel), content.clone().into_bytes());
    }
    let mut pairs = vec![
        ("directory".to_string(), cfg.out.display().to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("files".to_string(), fx.files.len().to_string()),
        ("panel rows".to_string(), fx.panel.observations.len().to_string()),
    ];
    pairs.extend(fx.panel.truth.names.iter().zip(&fx.panel.truth.beta).map(|(k, v)| (format!("true {k}"), format!("{v}"))));
    out.text = table::render_pairs("Synthetic fixture", &pairs);
    Ok(out)
}

/// Loads a config file, or defaults rooted at the current directory.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::from_file(p),
        None => Ok(RunConfig::new(&std::env::current_dir()?)),
    }
}
