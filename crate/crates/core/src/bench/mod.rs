//! Benchmark harness: pattern sweeps, repetition statistics, speedup ratios,
//! the break-even scan and the ordering checks.

mod breakeven;
mod checks;
mod reference;
pub mod stats;
mod table;

use serde::{Deserialize, Serialize};

pub use breakeven::{break_even_scan, single_invocation_ratio, BreakEvenReport, DEFAULT_SCAN_SIZES};
pub use checks::{check_orderings, CheckOutcome, LOCAL_BAND, REMOTE_BAND};
pub use reference::{Calibration, Locality, PatternFamily, Scenario};
pub use stats::{summarize, CiMethod, Summary};
pub use table::{GroupStats, StatsRow, StatsTable};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::model::{Case, Mode};
use crate::transport::{SimConfig, SocketConfig, TransportHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Simulated,
    Socket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub families: Vec<PatternFamily>,
    pub service_counts: Vec<usize>,
    pub input_sizes: Vec<u64>,
    pub repetitions: usize,
    pub localities: Vec<Locality>,
    pub cases: Vec<Case>,
    pub transport: TransportKind,
    pub seed: u64,
    /// Relative timing noise on the simulator; unset gives exact repeats.
    pub jitter: Option<f64>,
    pub ci: CiMethod,
    pub calibration: Calibration,
    /// Payload sizes probed by the break-even scan.
    pub breakeven_sizes: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            families: vec![
                PatternFamily::Sequence,
                PatternFamily::FanIn,
                PatternFamily::FanOut,
                PatternFamily::EndToEnd,
            ],
            service_counts: (3..=17).collect(),
            input_sizes: vec![10_000_000, 100_000_000],
            repetitions: 100,
            localities: vec![Locality::Local, Locality::Remote],
            cases: vec![Case::Best, Case::Worst],
            transport: TransportKind::Simulated,
            seed: 0,
            jitter: None,
            ci: CiMethod::Normal,
            calibration: Calibration::default(),
            breakeven_sizes: breakeven::DEFAULT_SCAN_SIZES.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 2 {
            return Err(Error::Config("repetitions must be at least 2".into()));
        }
        if let Some(n) = self.service_counts.iter().find(|n| **n < 3) {
            return Err(Error::Config(format!("service count {n} is below 3")));
        }
        if self.jitter.is_some_and(|j| !(0.0..1.0).contains(&j)) {
            return Err(Error::Config("jitter must be in [0, 1)".into()));
        }
        if self.calibration.overhead.per_call_ms < 0.0 {
            return Err(Error::Config("per_call_ms must be non-negative".into()));
        }
        Ok(())
    }

    pub fn transport_handle(&self) -> TransportHandle {
        match self.transport {
            TransportKind::Simulated => TransportHandle::Simulated(SimConfig {
                seed: self.seed,
                jitter: self.jitter,
                overhead: self.calibration.overhead,
                ..SimConfig::default()
            }),
            TransportKind::Socket => TransportHandle::Socket(SocketConfig {
                seed: self.seed,
                overhead: self.calibration.overhead,
                ..SocketConfig::default()
            }),
        }
    }

    /// Simulated runs without jitter repeat exactly, so one run stands for all.
    fn deterministic(&self) -> bool {
        self.transport == TransportKind::Simulated && self.jitter.is_none_or(|j| j == 0.0)
    }
}

fn samples(
    engine: &mut Engine,
    scenario: &Scenario,
    mode: Mode,
    case: Case,
    runs: usize,
    reps: usize,
) -> Result<Vec<f64>> {
    let mut xs = Vec::with_capacity(reps);
    for _ in 0..runs {
        xs.push(engine.run(&scenario.pattern, mode, case)?.elapsed_ms);
        engine.clear_stores();
    }
    while xs.len() < reps {
        xs.push(xs[xs.len() % runs]);
    }
    Ok(xs)
}

fn point(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    case: Case,
    vanilla: &[f64],
    engine: &mut Engine,
) -> Result<StatsRow> {
    let runs = if cfg.deterministic() { 1 } else { cfg.repetitions };
    let circ = samples(engine, scenario, Mode::Circulate, case, runs, cfg.repetitions)?;
    let v = summarize(vanilla, cfg.ci);
    let c = summarize(&circ, cfg.ci);
    let ratios: Vec<f64> = vanilla.iter().zip(&circ).map(|(a, b)| a / b).collect();
    Ok(StatsRow {
        pattern: PatternFamily::Sequence,
        locality: Locality::Local,
        case,
        services: scenario.services(),
        input_bytes: scenario.pattern.initial_input_bytes,
        repetitions: cfg.repetitions,
        vanilla_mean_ms: v.mean,
        vanilla_std_dev: v.std_dev,
        vanilla_ci99_low: v.ci99_low,
        vanilla_ci99_high: v.ci99_high,
        circulate_mean_ms: c.mean,
        circulate_std_dev: c.std_dev,
        circulate_ci99_low: c.ci99_low,
        circulate_ci99_high: c.ci99_high,
        speedup_ratio: v.mean / c.mean,
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        error: None,
    })
}

/// Runs matched vanilla and circulate executions for every configuration
/// point. A failing point is recorded with its error and the sweep goes on.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<StatsTable> {
    cfg.validate()?;
    let transport = cfg.transport_handle();
    let runs = if cfg.deterministic() { 1 } else { cfg.repetitions };
    let mut rows = Vec::new();
    for &family in &cfg.families {
        let counts: Vec<usize> = if family == PatternFamily::EndToEnd { vec![0] } else { cfg.service_counts.clone() };
        for &n in &counts {
            for &size in &cfg.input_sizes {
                for &locality in &cfg.localities {
                    let attempt = || -> Result<Vec<StatsRow>> {
                        let scenario = Scenario::reference(family, n, locality, &cfg.calibration, size)?;
                        let mut engine =
                            Engine::new(scenario.topology.clone(), scenario.behaviors.clone(), transport.clone())?;
                        let vanilla =
                            samples(&mut engine, &scenario, Mode::Centralized, Case::Best, runs, cfg.repetitions)?;
                        let mut out = Vec::new();
                        for &case in &cfg.cases {
                            let mut row = point(cfg, &scenario, case, &vanilla, &mut engine)?;
                            row.pattern = family;
                            row.locality = locality;
                            out.push(row);
                        }
                        Ok(out)
                    };
                    match attempt() {
                        Ok(r) => rows.extend(r),
                        Err(e) => {
                            for &case in &cfg.cases {
                                rows.push(StatsRow::failed(family, locality, case, n, size, e.to_string()));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(StatsTable::new(rows))
}
