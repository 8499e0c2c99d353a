//! Run configuration: a plain `key = value` file whose paths are relative to
//! the file, with every key overridable.

use std::path::{Path, PathBuf};

use crate::design::{FeVariant, Treatment};
use crate::domain::Granularity;
use crate::econ::bootstrap::DEFAULT_REPLICATES;
use crate::embed::{TokenScreen, TrainingConfig};
use crate::error::Error;
use crate::network::DEFAULT_HUB_THRESHOLD;
use crate::panel::AlignmentMode;
use crate::text::LabelSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NetworkPeriod {
    #[default]
    Quarter,
    Month,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Level {
    #[default]
    Carrier,
    Market,
}

/// Path-valued keys, in documentation order.
pub const PATH_KEYS: [&str; 15] = [
    "segments",
    "transcripts",
    "status",
    "labels",
    "coordinates",
    "populations",
    "ontime",
    "fares",
    "cities",
    "mergers",
    "carriers",
    "codings",
    "panel",
    "embedding",
    "out",
];

/// Every other key.
pub const OPTION_KEYS: [&str; 27] = [
    "alignment",
    "granularity",
    "fe",
    "treatment",
    "level",
    "tol",
    "max_iter",
    "bootstrap",
    "seed",
    "threads",
    "label_priority",
    "tokens",
    "fringe_threshold",
    "dims",
    "window",
    "negatives",
    "epochs",
    "min_count",
    "lr",
    "subsample",
    "workers",
    "anchors",
    "d_lo",
    "d_hi",
    "cooccur_min",
    "hub_threshold",
    "network_period",
];

/// Boolean switches accepted as keys as well.
pub const FLAG_KEYS: [&str; 3] = ["per_carrier", "lead", "weights"];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub segments: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub status: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub coordinates: Option<PathBuf>,
    pub populations: Option<PathBuf>,
    pub ontime: Option<PathBuf>,
    pub fares: Option<PathBuf>,
    pub cities: Option<PathBuf>,
    pub mergers: Option<PathBuf>,
    pub carriers: Option<PathBuf>,
    /// Defaults to `<out>/codings.csv`.
    pub codings: Option<PathBuf>,
    /// Defaults to `<out>/panel.csv`.
    pub panel: Option<PathBuf>,
    /// Defaults to `<out>/embedding.bin`.
    pub embedding: Option<PathBuf>,
    pub out: PathBuf,
    pub alignment: AlignmentMode,
    pub granularity: Granularity,
    pub fe: FeVariant,
    pub treatment: Treatment,
    pub level: Level,
    pub tol: f64,
    pub max_iter: usize,
    /// Bootstrap replicates; 0 reports analytic SEs only.
    pub bootstrap: usize,
    pub seed: u64,
    /// Worker budget; 0 uses every core.
    pub threads: usize,
    pub label_priority: Vec<LabelSource>,
    /// Tokens coded per transcript for placebo regressions.
    pub tokens: Vec<String>,
    pub fringe_threshold: u64,
    pub training: TrainingConfig,
    pub screen: TokenScreen,
    pub hub_threshold: f64,
    pub network_period: NetworkPeriod,
    pub per_carrier: bool,
    pub lead: bool,
    pub weights: bool,
}

impl RunConfig {
    /// Defaults with the output directory under `base`.
    pub fn new(base: &Path) -> Self {
        RunConfig {
            segments: None,
            transcripts: None,
            status: None,
            labels: None,
            coordinates: None,
            populations: None,
            ontime: None,
            fares: None,
            cities: None,
            mergers: None,
            carriers: None,
            codings: None,
            panel: None,
            embedding: None,
            out: base.join("out"),
            alignment: AlignmentMode::Shifted,
            granularity: Granularity::AirportPair,
            fe: FeVariant::CarrierMarket,
            treatment: Treatment::Main,
            level: Level::Carrier,
            tol: 1e-8,
            max_iter: 10_000,
            bootstrap: DEFAULT_REPLICATES,
            seed: 1,
            threads: 1,
            label_priority: vec![LabelSource::Authors, LabelSource::Ra, LabelSource::Automatic],
            tokens: Vec::new(),
            fringe_threshold: 0,
            training: TrainingConfig::default(),
            screen: TokenScreen::default(),
            hub_threshold: DEFAULT_HUB_THRESHOLD,
            network_period: NetworkPeriod::Quarter,
            per_carrier: false,
            lead: false,
            weights: false,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = RunConfig::new(&base);
        cfg.apply_text(&text, &base)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<(), String> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            self.set(k.trim(), v.trim(), base)
                .map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    /// Sets one key; relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        let path = || {
            let p = PathBuf::from(value);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let num = |what: &str| -> Result<f64, String> {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("`{key}` expects {what}, got `{value}`"))
        };
        let int = || -> Result<u64, String> {
            value
                .parse::<u64>()
                .map_err(|_| format!("`{key}` expects a non-negative integer, got `{value}`"))
        };
        let list = || -> Vec<String> {
            value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        };
        match key {
            "segments" => self.segments = Some(path()),
            "transcripts" => self.transcripts = Some(path()),
            "status" => self.status = Some(path()),
            "labels" => self.labels = Some(path()),
            "coordinates" => self.coordinates = Some(path()),
            "populations" => self.populations = Some(path()),
            "ontime" => self.ontime = Some(path()),
            "fares" => self.fares = Some(path()),
            "cities" => self.cities = Some(path()),
            "mergers" => self.mergers = Some(path()),
            "carriers" => self.carriers = Some(path()),
            "codings" => self.codings = Some(path()),
            "panel" => self.panel = Some(path()),
            "embedding" => self.embedding = Some(path()),
            "out" => self.out = path(),
            "alignment" => {
                self.alignment = AlignmentMode::parse(value)
                    .ok_or_else(|| format!("unknown alignment `{value}` (shifted|contemporaneous)"))?
            }
            "granularity" => {
                self.granularity = match value {
                    "airport" => Granularity::AirportPair,
                    "city" => Granularity::CityPair,
                    _ => return Err(format!("unknown granularity `{value}` (airport|city)")),
                }
            }
            "fe" => self.fe = FeVariant::parse(value).map_err(message)?,
            "treatment" => self.treatment = Treatment::parse(value).map_err(message)?,
            "level" => {
                self.level = match value {
                    "carrier" => Level::Carrier,
                    "market" => Level::Market,
                    _ => return Err(format!("unknown level `{value}` (carrier|market)")),
                }
            }
            "tol" => {
                self.tol = num("a positive number")?;
                if self.tol <= 0.0 {
                    return Err("`tol` must be positive".into());
                }
            }
            "max_iter" => self.max_iter = int()? as usize,
            "bootstrap" => {
                self.bootstrap = int()? as usize;
                if self.bootstrap == 1 {
                    return Err("`bootstrap` must be 0 or at least 2".into());
                }
            }
            "seed" => {
                self.seed = int()?;
                self.training.seed = self.seed;
            }
            "threads" => self.threads = int()? as usize,
            "label_priority" => {
                self.label_priority = list()
                    .iter()
                    .map(|s| LabelSource::parse(s).ok_or_else(|| format!("unknown label source `{s}`")))
                    .collect::<Result<_, _>>()?
            }
            "tokens" => self.tokens = list(),
            "fringe_threshold" => self.fringe_threshold = int()?,
            "dims" => self.training.dims = int()? as usize,
            "window" => self.training.window = int()? as usize,
            "negatives" => self.training.negatives = int()? as usize,
            "epochs" => self.training.epochs = int()? as usize,
            "min_count" => self.training.min_count = int()? as usize,
            "lr" => self.training.lr = num("a number")? as f32,
            "subsample" => self.training.subsample = num("a number")?,
            "workers" => self.training.workers = (int()? as usize).max(1),
            "anchors" => self.screen.anchors = list(),
            "d_lo" => self.screen.d_lo = num("a number")?,
            "d_hi" => self.screen.d_hi = num("a number")?,
            "cooccur_min" => self.screen.cooccur_min = num("a number")?,
            "hub_threshold" => self.hub_threshold = num("a number")?,
            "network_period" => {
                self.network_period = match value {
                    "quarter" => NetworkPeriod::Quarter,
                    "month" => NetworkPeriod::Month,
                    _ => return Err(format!("unknown network period `{value}` (quarter|month)")),
                }
            }
            "per_carrier" => self.per_carrier = parse_bool(key, value)?,
            "lead" => self.lead = parse_bool(key, value)?,
            "weights" => self.weights = parse_bool(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn codings_path(&self) -> PathBuf {
        self.codings.clone().unwrap_or_else(|| self.out.join("codings.csv"))
    }

    pub fn panel_path(&self) -> PathBuf {
        self.panel.clone().unwrap_or_else(|| self.out.join("panel.csv"))
    }

    pub fn embedding_path(&self) -> PathBuf {
        self.embedding.clone().unwrap_or_else(|| self.out.join("embedding.bin"))
    }
}

fn message(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(format!("`{key}` expects true or false, got `{value}`")),
    }
}

/// Resolves an optional path, failing with a config error when unset or
/// missing on disk.
pub fn existing(path: Option<&Path>, key: &str) -> Result<PathBuf, Error> {
    let p = path.ok_or_else(|| Error::Config(format!("`{key}` is not set")))?;
    if !p.exists() {
        return Err(Error::Config(format!("`{key}` path {} does not exist", p.display())));
    }
    Ok(p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_relative_paths() {
        let mut cfg = RunConfig::new(Path::new("/data"));
        cfg.apply_text(
            "# comment\nsegments = seg.csv\nout=/tmp/o\ntreatment = z-token:stable\nseed = 9\nlabel_priority = ra, authors\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(cfg.segments.as_deref(), Some(Path::new("/data/seg.csv")));
        assert_eq!(cfg.out, PathBuf::from("/tmp/o"));
        assert_eq!(cfg.treatment, Treatment::ZToken("stable".into()));
        assert_eq!(cfg.training.seed, 9);
        assert_eq!(cfg.label_priority, vec![LabelSource::Ra, LabelSource::Authors]);
        assert_eq!(cfg.panel_path(), PathBuf::from("/tmp/o/panel.csv"));
    }

    #[test]
    fn rejects_bad_lines() {
        let mut cfg = RunConfig::new(Path::new("."));
        let base = Path::new(".");
        assert!(cfg.apply_text("nonsense", base).unwrap_err().contains("line 1"));
        assert!(cfg.set("colour", "red", base).unwrap_err().contains("unknown key"));
        assert!(cfg.set("tol", "-1", base).is_err());
        assert!(cfg.set("bootstrap", "1", base).is_err());
        assert!(cfg.set("granularity", "county", base).is_err());
        assert!(cfg.set("lead", "maybe", base).is_err());
    }

    #[test]
    fn every_documented_key_is_accepted() {
        let mut cfg = RunConfig::new(Path::new("."));
        let base = Path::new(".");
        for k in PATH_KEYS {
            cfg.set(k, "x", base).unwrap();
        }
        let samples = [
            ("alignment", "contemporaneous"),
            ("granularity", "city"),
            ("fe", "carrier-market-structure"),
            ("treatment", "k-split"),
            ("level", "market"),
            ("tol", "1e-9"),
            ("max_iter", "50"),
            ("bootstrap", "0"),
            ("seed", "3"),
            ("threads", "2"),
            ("label_priority", "automatic"),
            ("tokens", "stable,pace"),
            ("fringe_threshold", "10"),
            ("dims", "16"),
            ("window", "3"),
            ("negatives", "4"),
            ("epochs", "2"),
            ("min_count", "1"),
            ("lr", "0.05"),
            ("subsample", "0"),
            ("workers", "1"),
            ("anchors", "demand,gdp"),
            ("d_lo", "0.1"),
            ("d_hi", "0.9"),
            ("cooccur_min", "0.2"),
            ("hub_threshold", "0.2"),
            ("network_period", "month"),
        ];
        assert_eq!(samples.len(), OPTION_KEYS.len());
        for (k, v) in samples {
            assert!(OPTION_KEYS.contains(&k));
            cfg.set(k, v, base).unwrap();
        }
        for k in FLAG_KEYS {
            cfg.set(k, "yes", base).unwrap();
        }
        assert_eq!(cfg.tokens, vec!["stable", "pace"]);
        assert_eq!(cfg.level, Level::Market);
        assert!(cfg.per_carrier && cfg.lead && cfg.weights);
    }
}
