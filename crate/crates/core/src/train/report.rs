use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::config::Regime;
use super::experiment::{Headline, RunReport};

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    assert!(n > 0, "median of an empty sample");
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Per-regime medians over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: Regime,
    pub seeds: Vec<u64>,
    pub median: Headline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub runs: Vec<RunReport>,
    pub regimes: Vec<RegimeSummary>,
}

impl Comparison {
    pub fn new(mut runs: Vec<RunReport>) -> Self {
        runs.sort_by_key(|r| (r.regime, r.seed));
        let mut groups: BTreeMap<Regime, Vec<&RunReport>> = BTreeMap::new();
        for r in &runs {
            groups.entry(r.regime).or_default().push(r);
        }
        let regimes = groups
            .into_iter()
            .map(|(regime, rs)| {
                let pick = |f: fn(&Headline) -> f64| median(&rs.iter().map(|r| f(&r.headline)).collect::<Vec<_>>());
                RegimeSummary {
                    regime,
                    seeds: rs.iter().map(|r| r.seed).collect(),
                    median: Headline {
                        wer: pick(|h| h.wer),
                        head_uer: pick(|h| h.head_uer),
                        tail_uer: pick(|h| h.tail_uer),
                        eos_precision: pick(|h| h.eos_precision),
                        eos_recall: pick(|h| h.eos_recall),
                    },
                }
            })
            .collect();
        Self { runs, regimes }
    }

    pub fn regime(&self, regime: Regime) -> Option<&RegimeSummary> {
        self.regimes.iter().find(|r| r.regime == regime)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes") + "\n"
    }

    /// Per-seed rows followed by per-regime medians, as [`headline_table`].
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, Headline)> = self
            .runs
            .iter()
            .map(|r| (format!("{} seed={}", r.regime.name(), r.seed), r.headline))
            .collect();
        rows.extend(
            self.regimes
                .iter()
                .map(|s| (format!("{} median", s.regime.name()), s.median)),
        );
        headline_table(&rows)
    }
}

/// Two aligned tables in percent: WER / head UER / tail UER, then ⟨eos⟩
/// precision / recall, one row per named system.
pub fn headline_table(rows: &[(String, Headline)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let pct = |v: f64| format!("{:>9.2}", 100.0 * v);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$} {:>9} {:>9} {:>9}",
        "System", "WER", "Head UER", "Tail UER"
    );
    for (name, h) in rows {
        let _ = writeln!(
            out,
            "{name:<width$} {} {} {}",
            pct(h.wer),
            pct(h.head_uer),
            pct(h.tail_uer)
        );
    }
    out.push('\n');
    let _ = writeln!(out, "{:<width$} {:>9} {:>9}", "System", "Precision", "Recall");
    for (name, h) in rows {
        let _ = writeln!(out, "{name:<width$} {} {}", pct(h.eos_precision), pct(h.eos_recall));
    }
    out
}
