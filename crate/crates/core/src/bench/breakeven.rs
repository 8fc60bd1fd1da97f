use serde::Serialize;

use super::{Calibration, Locality, Scenario};
use crate::engine::Engine;
use crate::error::Result;
use crate::model::{Case, Mode};
use crate::transport::{SimConfig, TransportHandle};

/// 1 KB to 10 MB on a 1-2-5 grid.
pub const DEFAULT_SCAN_SIZES: [u64; 13] = [
    1_000, 2_000, 5_000, 10_000, 20_000, 50_000, 100_000, 200_000, 500_000, 1_000_000, 2_000_000, 5_000_000, 10_000_000,
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakEvenReport {
    /// `(payload bytes, speedup ratio)` per scanned size.
    pub points: Vec<(u64, f64)>,
    /// Largest scanned size where circulate was slower.
    pub largest_below: Option<u64>,
    /// Smallest scanned size where circulate was faster.
    pub smallest_above: Option<u64>,
    pub message: String,
}

impl BreakEvenReport {
    /// The bracketing sizes when the scan shows a single crossing.
    pub fn crossover(&self) -> Option<(u64, u64)> {
        match (self.largest_below, self.smallest_above) {
            (Some(lo), Some(hi)) if lo < hi => Some((lo, hi)),
            _ => None,
        }
    }
}

/// Vanilla over circulate best-case time for one query-style invocation
/// returning `bytes`.
pub fn single_invocation_ratio(cal: &Calibration, locality: Locality, bytes: u64) -> Result<f64> {
    let s = Scenario::single_invocation(locality, cal, bytes)?;
    let transport = TransportHandle::Simulated(SimConfig { overhead: cal.overhead, ..SimConfig::default() });
    let mut engine = Engine::new(s.topology.clone(), s.behaviors.clone(), transport)?;
    let v = engine.run(&s.pattern, Mode::Centralized, Case::Best)?.elapsed_ms;
    let c = engine.run(&s.pattern, Mode::Circulate, Case::Best)?.elapsed_ms;
    Ok(v / c)
}

/// Scans payload sizes with a remote engine to find where the proxy
/// overhead is paid back.
pub fn break_even_scan(cal: &Calibration, sizes: &[u64]) -> Result<BreakEvenReport> {
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let points = sizes
        .iter()
        .map(|&s| single_invocation_ratio(cal, Locality::Remote, s).map(|r| (s, r)))
        .collect::<Result<Vec<_>>>()?;
    let largest_below = points.iter().filter(|(_, r)| *r < 1.0).map(|(s, _)| *s).max();
    let smallest_above = points.iter().filter(|(_, r)| *r > 1.0).map(|(s, _)| *s).min();
    let message = match (largest_below, smallest_above) {
        (None, _) => "no crossover in range: ratio >= 1 throughout".to_owned(),
        (Some(_), None) => "no crossover in range: ratio < 1 throughout".to_owned(),
        (Some(lo), Some(hi)) if lo < hi => format!("crossover between {lo} and {hi} bytes"),
        (Some(_), Some(_)) => "no crossover in range: ratio is not monotone".to_owned(),
    };
    Ok(BreakEvenReport { points, largest_below, smallest_above, message })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::ProxyOverhead;

    #[test]
    fn reference_calibration_crosses_between_10k_and_1m() {
        let r = break_even_scan(&Calibration::default(), &DEFAULT_SCAN_SIZES).unwrap();
        let (lo, hi) = r.crossover().expect(&r.message);
        assert!(lo >= 10_000 && hi <= 1_000_000, "{r:?}");
    }

    #[test]
    fn no_overhead_never_loses() {
        let cal = Calibration { overhead: ProxyOverhead::none(), ..Calibration::default() };
        let r = break_even_scan(&cal, &DEFAULT_SCAN_SIZES).unwrap();
        assert!(r.points.iter().all(|(_, x)| *x >= 1.0));
        assert_eq!(r.message, "no crossover in range: ratio >= 1 throughout");
    }
}
