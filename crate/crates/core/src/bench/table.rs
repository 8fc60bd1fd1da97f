use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{mean, std_dev};
use super::{Locality, PatternFamily};
use crate::error::{Error, Result};
use crate::model::Case;

/// One configuration point: matched vanilla and circulate timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub pattern: PatternFamily,
    pub locality: Locality,
    pub case: Case,
    pub services: usize,
    pub input_bytes: u64,
    pub repetitions: usize,
    pub vanilla_mean_ms: f64,
    pub vanilla_std_dev: f64,
    pub vanilla_ci99_low: f64,
    pub vanilla_ci99_high: f64,
    pub circulate_mean_ms: f64,
    pub circulate_std_dev: f64,
    pub circulate_ci99_low: f64,
    pub circulate_ci99_high: f64,
    /// Mean vanilla time over mean circulate time.
    pub speedup_ratio: f64,
    /// Extremes of the per-repetition ratios.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub error: Option<String>,
}

impl StatsRow {
    pub fn failed(
        pattern: PatternFamily,
        locality: Locality,
        case: Case,
        services: usize,
        input_bytes: u64,
        error: String,
    ) -> Self {
        let nan = f64::NAN;
        Self {
            pattern,
            locality,
            case,
            services,
            input_bytes,
            repetitions: 0,
            vanilla_mean_ms: nan,
            vanilla_std_dev: nan,
            vanilla_ci99_low: nan,
            vanilla_ci99_high: nan,
            circulate_mean_ms: nan,
            circulate_std_dev: nan,
            circulate_ci99_low: nan,
            circulate_ci99_high: nan,
            speedup_ratio: nan,
            min_ratio: nan,
            max_ratio: nan,
            error: Some(error),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

const COLUMNS: [&str; 18] = [
    "pattern",
    "locality",
    "case",
    "services",
    "input_bytes",
    "repetitions",
    "vanilla_mean_ms",
    "vanilla_std_dev",
    "vanilla_ci99_low",
    "vanilla_ci99_high",
    "circulate_mean_ms",
    "circulate_std_dev",
    "circulate_ci99_low",
    "circulate_ci99_high",
    "speedup_ratio",
    "min_ratio",
    "max_ratio",
    "error",
];

/// Ratio statistics over all points of one pattern and configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub points: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
}

impl StatsTable {
    pub fn new(rows: Vec<StatsRow>) -> Self {
        Self { rows }
    }

    pub fn write_csv(&self, w: impl Write) -> Result<(), csv::Error> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(COLUMNS)?;
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Self, csv::Error> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd.deserialize().collect::<Result<Vec<StatsRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn emit_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f).map_err(|e| Error::io(path, csv_io(e)))
    }

    pub fn parse_csv(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f).map_err(|e| Error::io(path, csv_io(e)))
    }

    /// Ratio statistics per (pattern, locality, case), over successful rows.
    pub fn groups(&self) -> BTreeMap<(PatternFamily, Locality, Case), GroupStats> {
        let mut ratios: BTreeMap<(PatternFamily, Locality, Case), Vec<f64>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.is_ok()) {
            ratios.entry((r.pattern, r.locality, r.case)).or_default().push(r.speedup_ratio);
        }
        ratios
            .into_iter()
            .map(|(k, xs)| {
                let g = GroupStats {
                    points: xs.len(),
                    mean: mean(&xs),
                    std_dev: if xs.len() > 1 { std_dev(&xs) } else { 0.0 },
                    min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                    max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                };
                (k, g)
            })
            .collect()
    }

    pub fn group_mean(&self, pattern: PatternFamily, locality: Locality, case: Case) -> Option<f64> {
        self.groups().get(&(pattern, locality, case)).map(|g| g.mean)
    }

    /// Speedup ratios per pattern and configuration, two decimals.
    pub fn emit_summary(&self) -> String {
        let mut s = String::new();
        let _ =
            writeln!(s, "{:<12} {:<10} {:>8} {:>8} {:>8} {:>8}", "Pattern", "Config", "Mean", "Std Dev", "Min", "Max");
        for ((p, l, c), g) in self.groups() {
            let config = format!(
                "{} {}",
                match l {
                    Locality::Local => "Local",
                    Locality::Remote => "Remote",
                },
                match c {
                    Case::Best => "BC",
                    Case::Worst => "WC",
                }
            );
            let _ = writeln!(
                s,
                "{:<12} {:<10} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
                p.as_str(),
                config,
                g.mean,
                g.std_dev,
                g.min,
                g.max
            );
        }
        let failed = self.rows.iter().filter(|r| !r.is_ok()).count();
        if failed > 0 {
            let _ = writeln!(s, "{failed} point(s) failed");
        }
        s
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, e)
}
