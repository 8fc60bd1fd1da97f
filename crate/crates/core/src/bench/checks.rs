use serde::Serialize;

use super::{Locality, PatternFamily, StatsTable};
use crate::model::Case;

/// Band every remote-case mean ratio must fall in.
pub const REMOTE_BAND: (f64, f64) = (1.5, 5.0);
/// Band every local-case mean ratio must fall in.
pub const LOCAL_BAND: (f64, f64) = (1.0, 3.0);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

struct Means {
    rb: f64,
    rw: f64,
    lb: f64,
    lw: f64,
}

/// Evaluates the ordering properties and bands over a table's group means.
/// A check whose inputs are missing from the table fails.
pub fn check_orderings(table: &StatsTable) -> Vec<CheckOutcome> {
    let get = |p, l, c| table.group_mean(p, l, c);
    let mut fams = Vec::new();
    let mut missing = Vec::new();
    for p in PatternFamily::ISOLATED {
        match (
            get(p, Locality::Remote, Case::Best),
            get(p, Locality::Remote, Case::Worst),
            get(p, Locality::Local, Case::Best),
            get(p, Locality::Local, Case::Worst),
        ) {
            (Some(rb), Some(rw), Some(lb), Some(lw)) => fams.push((p, Means { rb, rw, lb, lw })),
            _ => missing.push(p.as_str()),
        }
    }
    let complete = missing.is_empty();
    let missing_note = if complete { String::new() } else { format!("; missing {}", missing.join(", ")) };

    let check = |name: &'static str, f: &dyn Fn(&Means) -> bool, show: &dyn Fn(&Means) -> String| {
        let mut pass = complete;
        let mut parts = Vec::new();
        for (p, m) in &fams {
            let ok = f(m);
            pass &= ok;
            parts.push(format!("{}: {}{}", p, show(m), if ok { "" } else { " (fails)" }));
        }
        CheckOutcome { name, pass, detail: parts.join("; ") + &missing_note }
    };

    let mut out = vec![
        check("(a) remote best > remote worst > 1", &|m| m.rb > m.rw && m.rw > 1.0, &|m| {
            format!("{:.2} > {:.2}", m.rb, m.rw)
        }),
        check("(b) local best > local worst", &|m| m.lb > m.lw, &|m| format!("{:.2} > {:.2}", m.lb, m.lw)),
        check("(c) remote exceeds local", &|m| m.rb > m.lb && m.rw > m.lw, &|m| {
            format!("best {:.2} > {:.2}, worst {:.2} > {:.2}", m.rb, m.lb, m.rw, m.lw)
        }),
    ];

    let max_rb = fams.iter().map(|(_, m)| m.rb).fold(f64::NEG_INFINITY, f64::max);
    let e2e = get(PatternFamily::EndToEnd, Locality::Remote, Case::Worst);
    out.push(match e2e {
        Some(e) if complete => CheckOutcome {
            name: "(d) end-to-end remote worst > max isolated remote best",
            pass: e > max_rb,
            detail: format!("{e:.2} vs {max_rb:.2}"),
        },
        _ => CheckOutcome {
            name: "(d) end-to-end remote worst > max isolated remote best",
            pass: false,
            detail: format!("end-to-end rows {}{missing_note}", if e2e.is_some() { "present" } else { "missing" }),
        },
    });

    out.push(check(
        "(e) remote best on top, local worst at the bottom",
        &|m| m.rb >= m.rw.max(m.lb).max(m.lw) && m.lw <= m.rb.min(m.rw).min(m.lb),
        &|m| format!("top {:.2}, bottom {:.2}", m.rb, m.lw),
    ));

    let in_band = |x: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&x);
    out.push(check(
        "remote ratios within [1.5, 5.0]",
        &|m| in_band(m.rb, REMOTE_BAND) && in_band(m.rw, REMOTE_BAND),
        &|m| format!("{:.2}, {:.2}", m.rb, m.rw),
    ));
    out.push(check(
        "local ratios within [1.0, 3.0]",
        &|m| in_band(m.lb, LOCAL_BAND) && in_band(m.lw, LOCAL_BAND),
        &|m| format!("{:.2}, {:.2}", m.lb, m.lw),
    ));
    out
}
