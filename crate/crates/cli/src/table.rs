//! Tab-separated output tables.
//!
//! ```text
//! # loopmem <version> table=<name> config=<digest> seed=<seed>
//! col_a	col_b	...
//! v	v	...
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so parsing a table gives
//! back bit-identical values.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub table: String,
    pub config: String,
    pub seed: u64,
}

impl Provenance {
    fn line(&self) -> String {
        format!(
            "# loopmem {TOOL_VERSION} table={} config={} seed={}",
            self.table, self.config, self.seed
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let rest = line
            .strip_prefix("# loopmem ")
            .ok_or_else(|| anyhow!("missing `# loopmem` provenance line"))?;
        let mut parts = rest.split_whitespace();
        parts.next().ok_or_else(|| anyhow!("missing version"))?;
        let (mut table, mut config, mut seed) = (None, None, None);
        for p in parts {
            match p.split_once('=') {
                Some(("table", v)) => table = Some(v.to_string()),
                Some(("config", v)) => config = Some(v.to_string()),
                Some(("seed", v)) => seed = Some(v.parse().context("seed")?),
                _ => bail!("unexpected provenance field `{p}`"),
            }
        }
        Ok(Self {
            table: table.ok_or_else(|| anyhow!("provenance lacks table="))?,
            config: config.ok_or_else(|| anyhow!("provenance lacks config="))?,
            seed: seed.ok_or_else(|| anyhow!("provenance lacks seed="))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub provenance: Provenance,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(provenance: Provenance, columns: &[&str]) -> Self {
        Self {
            provenance,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(provenance: Provenance, columns: Vec<String>) -> Self {
        Self {
            provenance,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let mut out = self.provenance.line();
        out.push('\n');
        out.push_str(&self.columns.join("\t"));
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join("\t"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let provenance = Provenance::parse(lines.next().unwrap_or_default())?;
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| anyhow!("missing header line"))?
            .split('\t')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split('\t').map(str::to_string).collect();
            if row.len() != columns.len() {
                bail!(
                    "line {}: {} fields, header has {}",
                    i + 3,
                    row.len(),
                    columns.len()
                );
            }
            rows.push(row);
        }
        Ok(Self {
            provenance,
            columns,
            rows,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading table {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing table {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        loopmem::io::write_atomic(path, self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| anyhow!("table `{}` has no column `{name}`", self.provenance.table))
    }

    /// Parses every cell of column `name`.
    pub fn values<T>(&self, name: &str) -> Result<Vec<T>>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        let c = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[c].parse::<T>()
                    .map_err(|e| anyhow!("row {}, column `{name}`: `{}`: {e}", i + 1, r[c]))
            })
            .collect()
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), num)
}

pub fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == "none" {
        Ok(None)
    } else {
        Ok(Some(s.parse()?))
    }
}
