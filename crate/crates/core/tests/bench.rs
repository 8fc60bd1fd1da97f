use std::process::Command;

use circulate::bench::{
    break_even_scan, run_experiment, single_invocation_ratio, summarize, Calibration, CiMethod, ExperimentConfig,
    Locality, PatternFamily, StatsTable, DEFAULT_SCAN_SIZES,
};
use circulate::model::Case;

const MB: u64 = 1_000_000;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn summary_of_five_samples() {
    let xs = [2.0, 4.0, 4.0, 4.0, 5.0];
    // mean 19/5; squared deviations 3.24 + 3 * 0.04 + 1.44 = 4.8 over n - 1 = 4.
    let sd = 1.2f64.sqrt();
    let s = summarize(&xs, CiMethod::Normal);
    assert!(close(s.mean, 3.8, 1e-15));
    assert!(close(s.std_dev, sd, 1e-15));
    assert!(close(s.ci99_high - s.mean, 2.5758293035489004 * sd / 5f64.sqrt(), 1e-12));
    assert_eq!((s.min, s.max, s.n), (2.0, 5.0, 5));
    // t quantile for 4 degrees of freedom at 0.995.
    let t = summarize(&xs, CiMethod::StudentT);
    assert!(close(t.mean - t.ci99_low, 4.604094871415897 * sd / 5f64.sqrt(), 1e-9));
}

/// Single query from a remote engine: vanilla pays a request and the
/// payload on the WAN; circulate pays a request, the proxy overhead and a
/// reply carrying one ref.
fn closed_form_ratio(cal: &Calibration, bytes: u64) -> f64 {
    let wan = |b: u64| cal.wan_latency_ms + b as f64 / cal.wan_bandwidth_bytes_per_ms;
    let ctrl_ref = wan(64 + cal.overhead.per_ref_bytes);
    (wan(64) + wan(bytes)) / (2.0 * ctrl_ref + cal.overhead.per_call_ms)
}

#[test]
fn break_even_against_a_bisection_oracle() {
    let cal = Calibration::default();
    for s in [1_000, 150_000, 250_000, 5 * MB] {
        assert!(close(single_invocation_ratio(&cal, Locality::Remote, s).unwrap(), closed_form_ratio(&cal, s), 1e-12));
    }
    let (mut lo, mut hi) = (1u64, 100 * MB);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if closed_form_ratio(&cal, mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // About per_call x bandwidth: 5 ms at 40 000 B/ms.
    assert!((190_000..210_000).contains(&hi), "{hi}");
    let r = break_even_scan(&cal, &DEFAULT_SCAN_SIZES).unwrap();
    let (a, b) = r.crossover().unwrap();
    assert!(a < hi && hi <= b, "{a} {hi} {b}");
    assert_eq!((a, b), (200_000, 500_000));
    assert!(r.message.contains("200000"));
}

#[test]
fn break_even_follows_the_overhead() {
    let mut cal = Calibration::default();
    cal.overhead.per_call_ms = 20.0;
    let (a, b) = break_even_scan(&cal, &DEFAULT_SCAN_SIZES).unwrap().crossover().unwrap();
    assert_eq!((a, b), (500_000, 1_000_000));
}

fn cfg(families: &[PatternFamily], counts: &[usize], sizes: &[u64]) -> ExperimentConfig {
    ExperimentConfig {
        families: families.to_vec(),
        service_counts: counts.to_vec(),
        input_sizes: sizes.to_vec(),
        repetitions: 2,
        ..ExperimentConfig::default()
    }
}

#[test]
fn deterministic_repetitions_have_zero_spread() {
    let t = run_experiment(&cfg(&[PatternFamily::Sequence], &[3], &[MB])).unwrap();
    assert_eq!(t.rows.len(), 4);
    for r in &t.rows {
        assert!(r.is_ok());
        assert_eq!((r.vanilla_std_dev, r.circulate_std_dev), (0.0, 0.0));
        assert_eq!(r.min_ratio, r.max_ratio);
        assert!(close(r.speedup_ratio, r.vanilla_mean_ms / r.circulate_mean_ms, 1e-15));
    }
}

#[test]
fn jitter_spreads_samples_and_repeats_under_a_seed() {
    let mut c = cfg(&[PatternFamily::FanIn], &[5], &[MB]);
    c.repetitions = 20;
    c.jitter = Some(0.1);
    c.seed = 9;
    let a = run_experiment(&c).unwrap();
    for r in &a.rows {
        assert!(r.circulate_std_dev > 0.0);
        assert!(r.circulate_ci99_low < r.circulate_mean_ms && r.circulate_mean_ms < r.circulate_ci99_high);
        assert!(r.min_ratio <= r.speedup_ratio && r.speedup_ratio <= r.max_ratio);
    }
    assert_eq!(a, run_experiment(&c).unwrap());
}

fn row(
    t: &StatsTable,
    fam: PatternFamily,
    n: usize,
    size: u64,
    loc: Locality,
    case: Case,
) -> &circulate::bench::StatsRow {
    t.rows
        .iter()
        .find(|r| r.pattern == fam && r.services == n && r.input_bytes == size && r.locality == loc && r.case == case)
        .unwrap()
}

const POINTS: [(Locality, Case); 4] = [
    (Locality::Local, Case::Best),
    (Locality::Local, Case::Worst),
    (Locality::Remote, Case::Best),
    (Locality::Remote, Case::Worst),
];

#[test]
fn raw_gap_grows_with_size() {
    let sizes = [MB, 10 * MB, 100 * MB];
    let t = run_experiment(&cfg(&PatternFamily::ISOLATED, &[3, 9, 17], &sizes)).unwrap();
    for fam in PatternFamily::ISOLATED {
        for n in [3, 9, 17] {
            for (loc, case) in POINTS {
                let gap: Vec<f64> = sizes
                    .iter()
                    .map(|s| row(&t, fam, n, *s, loc, case))
                    .map(|r| r.vanilla_mean_ms - r.circulate_mean_ms)
                    .collect();
                assert!(gap[0] < gap[1] && gap[1] < gap[2], "{fam} {n} {loc:?} {case}: {gap:?}");
            }
        }
    }
}

#[test]
fn ratio_settles_at_large_sizes() {
    // Each service adds fixed control round trips, so patterns with many
    // services only settle well above the single-call break-even size.
    // From 100 MB to 1 GB every ratio moves by less than 20%.
    let t = run_experiment(&cfg(&PatternFamily::ISOLATED, &[3, 9, 17], &[100 * MB, 1_000 * MB])).unwrap();
    for fam in PatternFamily::ISOLATED {
        for n in [3, 9, 17] {
            for (loc, case) in POINTS {
                let (a, b) = (
                    row(&t, fam, n, 100 * MB, loc, case).speedup_ratio,
                    row(&t, fam, n, 1_000 * MB, loc, case).speedup_ratio,
                );
                assert!((b - a).abs() / a < 0.2, "{fam} {n} {loc:?} {case}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn scaling_bandwidth_with_size_keeps_the_ratio() {
    // With latency dominated by payload time, doubling both input size and
    // bandwidth leaves payload transfer times, and so the ratio, unchanged
    // up to the control messages.
    let base = cfg(&PatternFamily::ISOLATED, &[4], &[50 * MB]);
    let mut scaled = cfg(&PatternFamily::ISOLATED, &[4], &[100 * MB]);
    scaled.calibration.wan_bandwidth_bytes_per_ms *= 2.0;
    scaled.calibration.lan_bandwidth_bytes_per_ms *= 2.0;
    let (a, b) = (run_experiment(&base).unwrap(), run_experiment(&scaled).unwrap());
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!(close(x.speedup_ratio, y.speedup_ratio, 1e-4), "{} {} {}", x.pattern, x.speedup_ratio, y.speedup_ratio);
    }
}

#[test]
fn bad_points_are_annotated_not_fatal() {
    let mut c = cfg(&[PatternFamily::Sequence], &[3], &[MB]);
    c.calibration.wan_bandwidth_bytes_per_ms = 0.0;
    let t = run_experiment(&c).unwrap();
    // Only the remote points use a WAN link.
    for r in &t.rows {
        assert_eq!(r.is_ok(), r.locality == Locality::Local, "{r:?}");
        assert_eq!(r.error.is_some(), r.locality == Locality::Remote);
    }
    assert!(run_experiment(&ExperimentConfig { repetitions: 1, ..c }).is_err());
}

#[test]
fn csv_round_trip() {
    let t = run_experiment(&cfg(&[PatternFamily::FanOut, PatternFamily::EndToEnd], &[3, 4], &[MB])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    t.emit_csv(&path).unwrap();
    let back = StatsTable::parse_csv(&path).unwrap();
    assert_eq!(back, t);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("pattern,locality,case,services,input_bytes,repetitions,vanilla_mean_ms"));
    assert!(back.emit_summary().contains("end_to_end   Remote WC"));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_circulate"))
        .current_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn command_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("q.csv");
    let out = cli(&["bench", "run", "--config", "configs/quick.toml", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = cli(&["bench", "summary", csv.to_str().unwrap()]);
    assert_eq!(summary.stdout, out.stdout);

    let checked = cli(&["bench", "run", "--config", "configs/quick.toml", "--out", csv.to_str().unwrap(), "--check"]);
    let text = String::from_utf8_lossy(&checked.stdout);
    assert!(text.contains("PASS (a)"));
    // The end-to-end ordering does not hold under this cost model.
    assert!(text.contains("FAIL (d)"));
    assert_eq!(checked.status.code(), Some(1));

    let be = cli(&["bench", "breakeven", "--config", "configs/quick.toml"]);
    assert!(String::from_utf8_lossy(&be.stdout).contains("crossover between 200000 and 500000 bytes"));

    let run = cli(&["run", "--config", "configs/fan_in.toml"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(v["per_class_bytes"]["bytes_by_class"]["wan"], 36_000_000);
    assert!(v["events"].as_array().unwrap().len() > 5);

    let missing = cli(&["run", "--config", "configs/nope.toml"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.toml"));
}
