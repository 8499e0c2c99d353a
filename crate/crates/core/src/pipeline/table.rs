//! Regression tables: CSV plus an aligned text layout with standard errors in
//! parentheses under each coefficient.

use std::fmt::Write as _;

use crate::econ::{semi_elasticity, semi_elasticity_se, PoissonFEResult, RegressionResult};
use crate::io::fixed;

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub term: String,
    pub coef: f64,
    pub se: f64,
    /// Semi-elasticity (percent) and its SE, for dummies on a log outcome.
    pub semi: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Column {
    pub label: String,
    pub estimates: Vec<Estimate>,
    pub stats: Vec<(String, f64)>,
}

impl Column {
    /// Coefficients of `r` in its own order, with N, clusters and within R².
    pub fn from_regression(label: &str, r: &RegressionResult, log_outcome: bool) -> Self {
        let estimates = (0..r.names.len())
            .map(|i| Estimate {
                term: r.names[i].clone(),
                coef: r.coef[i],
                se: r.se[i],
                semi: (log_outcome && r.binary[i]).then(|| (semi_elasticity(r.coef[i]), semi_elasticity_se(r.coef[i], r.se[i]))),
            })
            .collect();
        Column {
            label: label.to_string(),
            estimates,
            stats: vec![
                ("N".into(), r.n_obs as f64),
                ("Clusters".into(), r.n_clusters as f64),
                ("R2 (within)".into(), r.r2_within),
            ],
        }
    }

    /// Regressor coefficients (time dummies omitted).
    pub fn from_poisson(label: &str, r: &PoissonFEResult) -> Self {
        let k = r.names.len() - r.n_time_dummies;
        Column {
            label: label.to_string(),
            estimates: (0..k)
                .map(|i| Estimate {
                    term: r.names[i].clone(),
                    coef: r.coef[i],
                    se: r.se[i],
                    semi: None,
                })
                .collect(),
            stats: vec![
                ("N".into(), r.n_obs as f64),
                ("Groups".into(), r.n_groups as f64),
                ("Dropped groups".into(), r.dropped_groups as f64),
                ("Log-likelihood".into(), r.log_likelihood),
            ],
        }
    }

    pub fn stat(mut self, name: &str, value: f64) -> Self {
        self.stats.push((name.to_string(), value));
        self
    }

    pub fn get(&self, term: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.term == term)
    }

    pub fn rename(&mut self, from: &str, to: &str) {
        for e in self.estimates.iter_mut().filter(|e| e.term == from) {
            e.term = to.to_string();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub title: String,
    pub columns: Vec<Column>,
    pub notes: Vec<String>,
}

pub const TABLE_CSV_HEADER: [&str; 7] = ["model", "row_type", "term", "estimate", "std_error", "semi_elasticity", "semi_elasticity_se"];

fn union<'a, I: Iterator<Item = &'a str>>(it: I) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in it {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn stat_text(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.4}")
    }
}

impl ResultTable {
    pub fn new(title: &str, columns: Vec<Column>) -> Self {
        ResultTable {
            title: title.to_string(),
            columns,
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut s = TABLE_CSV_HEADER.join(",");
        s.push('\n');
        for c in &self.columns {
            for e in &c.estimates {
                let (semi, semi_se) = e.semi.map(|(a, b)| (fixed(a), fixed(b))).unwrap_or_default();
                let _ = writeln!(s, "{},coef,{},{},{},{semi},{semi_se}", csv_field(&c.label), csv_field(&e.term), fixed(e.coef), fixed(e.se));
            }
            for (name, v) in &c.stats {
                let _ = writeln!(s, "{},stat,{},{},,,", csv_field(&c.label), csv_field(name), fixed(*v));
            }
        }
        s.into_bytes()
    }

    pub fn render(&self) -> String {
        let terms = union(self.columns.iter().flat_map(|c| c.estimates.iter().map(|e| e.term.as_str())));
        let stats = union(self.columns.iter().flat_map(|c| c.stats.iter().map(|s| s.0.as_str())));
        let mut lines: Vec<(String, Vec<String>)> = Vec::new();
        for t in &terms {
            let cells: Vec<Option<&Estimate>> = self.columns.iter().map(|c| c.get(t)).collect();
            lines.push((t.to_string(), cells.iter().map(|e| e.map(|e| format!("{:.4}", e.coef)).unwrap_or_default()).collect()));
            lines.push((String::new(), cells.iter().map(|e| e.map(|e| format!("({:.4})", e.se)).unwrap_or_default()).collect()));
            if cells.iter().any(|e| e.is_some_and(|e| e.semi.is_some())) {
                let semi = cells
                    .iter()
                    .map(|e| e.and_then(|e| e.semi).map(|(p, _)| format!("[{p:.3}%]")).unwrap_or_default())
                    .collect();
                lines.push((String::new(), semi));
            }
        }
        let rule_at = lines.len();
        for st in &stats {
            let cells = self
                .columns
                .iter()
                .map(|c| c.stats.iter().find(|s| s.0 == *st).map(|s| stat_text(s.1)).unwrap_or_default())
                .collect();
            lines.push((st.to_string(), cells));
        }
        let label_w = lines.iter().map(|l| l.0.chars().count()).max().unwrap_or(0).max(4);
        let col_w: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| lines.iter().map(|l| l.1[j].chars().count()).max().unwrap_or(0).max(c.label.chars().count()))
            .collect();
        let width = label_w + col_w.iter().map(|w| w + 2).sum::<usize>();
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        let _ = writeln!(out, "{}", "=".repeat(width));
        let mut header = format!("{:label_w$}", "");
        for (c, w) in self.columns.iter().zip(&col_w) {
            let _ = write!(header, "  {:>w$}", c.label);
        }
        let _ = writeln!(out, "{}", header.trim_end());
        let _ = writeln!(out, "{}", "-".repeat(width));
        for (i, (label, cells)) in lines.iter().enumerate() {
            if i == rule_at {
                let _ = writeln!(out, "{}", "-".repeat(width));
            }
            let mut line = format!("{label:label_w$}");
            for (c, w) in cells.iter().zip(&col_w) {
                let _ = write!(line, "  {c:>w$}");
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
        let _ = writeln!(out, "{}", "=".repeat(width));
        for n in &self.notes {
            let _ = writeln!(out, "{n}");
        }
        out
    }
}

/// Quotes a CSV field when it contains a delimiter or quote.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Two-column aligned listing used for command summaries.
pub fn render_pairs(title: &str, pairs: &[(String, String)]) -> String {
    let w = pairs.iter().map(|p| p.0.chars().count()).max().unwrap_or(0);
    let mut out = format!("{title}\n{}\n", "=".repeat(title.chars().count().max(w + 12)));
    for (k, v) in pairs {
        let _ = writeln!(out, "{k:w$}  {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ResultTable {
        let c = Column {
            label: "(1)".into(),
            estimates: vec![
                Estimate {
                    term: "Capacity Discipline".into(),
                    coef: -0.0204,
                    se: 0.005,
                    semi: Some((semi_elasticity(-0.0204), 0.5)),
                },
                Estimate {
                    term: "x, y".into(),
                    coef: 1.0,
                    se: 0.25,
                    semi: None,
                },
            ],
            stats: vec![("N".into(), 1200.0), ("R2 (within)".into(), 0.125)],
        };
        ResultTable::new("Seats", vec![c]).note("SE clustered by market")
    }

    #[test]
    fn text_layout() {
        let s = table().render();
        assert!(s.contains("Capacity Discipline    -0.0204\n"), "{s}");
        assert!(s.contains("(0.0050)"));
        assert!(s.contains("[-2.019%]"));
        assert!(s.contains("\nN                         1200\n"));
        assert!(s.contains("\nR2 (within)             0.1250\n"));
        assert!(s.ends_with("SE clustered by market\n"));
    }

    #[test]
    fn csv_rows() {
        let csv = String::from_utf8(table().to_csv()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TABLE_CSV_HEADER.join(","));
        assert!(lines[1].starts_with("(1),coef,Capacity Discipline,-2.0400000000000001e-2,"));
        assert!(lines[2].starts_with("(1),coef,\"x, y\",1.0000000000000000e0,2.5000000000000000e-1,,"));
        assert_eq!(lines[3], "(1),stat,N,1.2000000000000000e3,,,");
        assert_eq!(lines.len(), 5);
    }
}
