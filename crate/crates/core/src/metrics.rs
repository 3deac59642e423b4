//! Per-hour metrics, cross-run aggregation and CSV reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::engine::TraceEvent;
use crate::error::{Error, Result};
use crate::home::{utility, PowerLevel, UtilityParams};
use crate::policy::{LevelAssignment, PolicyKind};
use crate::topology::SupplyModel;

/// Identifies one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub policy: PolicyKind,
    pub supply: SupplyModel,
    pub ap: f64,
    pub run: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl RunMeta {
    /// File-name label of the supply setting: the gap in percent, or the
    /// fixed capacity in watts.
    pub fn gap_label(&self) -> String {
        match self.supply {
            SupplyModel::FractionalGap(g) => percent_label(g),
            SupplyModel::FixedCapacity(w) => format!("cap{}", fmt_sig(w)),
        }
    }

    pub fn ap_label(&self) -> String {
        percent_label(self.ap)
    }

    pub fn cell_label(&self) -> String {
        format!("{}_{}_{}", self.policy, self.gap_label(), self.ap_label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourRecord {
    pub hour: usize,
    /// Unconstrained demand, W.
    pub demand: f64,
    pub capacity: f64,
    /// Served demand once the hour converged, W.
    pub served: f64,
    pub ulw: f64,
    /// Homes per level, `L1` first.
    pub level_counts: [usize; 5],
    pub mean_utility: f64,
    /// Seconds of policy rounds before served demand fit capacity.
    pub convergence_seconds: u32,
    pub rounds: u32,
    pub emergency: bool,
    /// Both passes failed and the hour fell back to whole-group blackouts.
    pub nonconvergent: bool,
    pub commands_sent: u64,
    pub commands_failed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub meta: RunMeta,
    pub homes: usize,
    pub hours: Vec<HourRecord>,
    /// Filled only when tracing is enabled.
    pub trace: Vec<TraceEvent>,
    /// End-of-hour assignments; filled only when tracing is enabled.
    pub assignments: Vec<LevelAssignment>,
}

impl MetricsLog {
    /// Day-aggregated level fractions: the mean over hours of each hour's
    /// fraction of homes per level.
    pub fn level_fractions(&self) -> [f64; 5] {
        let mut f = [0.0; 5];
        if self.hours.is_empty() || self.homes == 0 {
            return f;
        }
        for h in &self.hours {
            for (acc, &c) in f.iter_mut().zip(&h.level_counts) {
                *acc += c as f64 / self.homes as f64;
            }
        }
        f.map(|x| x / self.hours.len() as f64)
    }

    pub fn total_ulw(&self) -> f64 {
        self.hours.iter().map(|h| h.ulw).sum()
    }

    pub fn mean_utility(&self) -> f64 {
        mean(self.hours.iter().map(|h| h.mean_utility))
    }

    /// Per-run scalar metrics in report order.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        let f = self.level_fractions();
        let count = |pred: fn(&HourRecord) -> bool| self.hours.iter().filter(|h| pred(h)).count() as f64;
        vec![
            ("frac_l1", f[0]),
            ("frac_l2", f[1]),
            ("frac_l3", f[2]),
            ("frac_l4", f[3]),
            ("frac_l5", f[4]),
            ("ulw_total_w", self.total_ulw()),
            ("mean_utility", self.mean_utility()),
            ("demand_total_w", self.hours.iter().map(|h| h.demand).sum()),
            ("capacity_total_w", self.hours.iter().map(|h| h.capacity).sum()),
            ("served_total_w", self.hours.iter().map(|h| h.served).sum()),
            ("convergence_s_mean", mean(self.hours.iter().map(|h| h.convergence_seconds as f64))),
            ("emergency_hours", count(|h| h.emergency)),
            ("nonconvergent_hours", count(|h| h.nonconvergent)),
        ]
    }
}

/// Capacity left unused: `max(0, capacity - served)`.
pub fn ulw(capacity: f64, served: f64) -> f64 {
    (capacity - served).max(0.0)
}

/// Fractions of homes without power and with full power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFractions {
    pub l1: f64,
    pub l5: f64,
}

impl EdgeFractions {
    pub fn of(fractions: &[f64; 5]) -> Self {
        EdgeFractions {
            l1: fractions[0],
            l5: fractions[4],
        }
    }
}

/// Percentage decrease from `baseline` to `algo`, 0 when the baseline is 0.
pub fn decrease(baseline: f64, algo: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        100.0 * (baseline - algo) / baseline
    }
}

/// Social comfort index in percentage points: `|dec_L1 - dec_L5|`.
pub fn sci(baseline: EdgeFractions, algo: EdgeFractions) -> f64 {
    (decrease(baseline.l1, algo.l1) - decrease(baseline.l5, algo.l5)).abs()
}

/// Fraction of homes per level, `L1` first.
pub fn level_distribution(assignment: &LevelAssignment) -> Result<[f64; 5]> {
    let n = assignment.levels().len();
    if n == 0 {
        return Err(Error::EmptyHomeSet);
    }
    Ok(assignment.counts().map(|c| c as f64 / n as f64))
}

/// Mean utility over all homes; 0 for an empty assignment.
pub fn mean_utility(assignment: &LevelAssignment, params: &UtilityParams) -> f64 {
    mean(assignment.levels().iter().map(|&l| utility(l, params)))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs.iter().copied());
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, var.sqrt())
}

/// Formats with 6 significant digits, dropping trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    // rounding can carry into the next decade
    let exp = if format!("{:.5e}", x.abs()).ends_with(&format!("e{}", exp + 1)) {
        exp + 1
    } else {
        exp
    };
    let s = if (-4..6).contains(&exp) {
        format!("{:.*}", (5 - exp).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    };
    trim_zeros(&s)
}

fn trim_zeros(s: &str) -> String {
    let (mantissa, exp) = match s.find('e') {
        Some(i) => (&s[..i], &s[i..]),
        None => (s, ""),
    };
    let mantissa = if mantissa.contains('.') {
        mantissa.trim_end_matches('0').trim_end_matches('.')
    } else {
        mantissa
    };
    format!("{mantissa}{exp}")
}

/// A fraction as a percent label: 0.2 → "20", 0.125 → "12.5".
pub fn percent_label(fraction: f64) -> String {
    let pct = (fraction * 100.0 * 1e6).round() / 1e6;
    fmt_sig(pct)
}

/// Runs of one (policy, gap, AP) cell with their paired baseline runs.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub policy: PolicyKind,
    pub gap_label: String,
    pub ap_label: String,
    pub gap: Option<f64>,
    pub ap: f64,
    /// (metric, per-run values) in report order.
    pub metrics: Vec<(String, Vec<f64>)>,
    /// Seed-averaged day fractions.
    pub fractions: [f64; 5],
    /// Seed-averaged day fractions of the paired baseline runs, if any.
    pub baseline_fractions: Option<[f64; 5]>,
}

impl CellSummary {
    pub fn metric(&self, name: &str) -> Option<&[f64]> {
        self.metrics
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn metric_mean(&self, name: &str) -> Option<f64> {
        self.metric(name).map(|v| mean_std(v).0)
    }

    /// Decrease in the no-power fraction vs. baseline, from seed-averaged
    /// day fractions.
    pub fn dec_l1(&self) -> Option<f64> {
        self.baseline_fractions.map(|b| decrease(b[0], self.fractions[0]))
    }

    pub fn dec_l5(&self) -> Option<f64> {
        self.baseline_fractions.map(|b| decrease(b[4], self.fractions[4]))
    }

    pub fn sci(&self) -> Option<f64> {
        self.baseline_fractions
            .map(|b| sci(EdgeFractions::of(&b), EdgeFractions::of(&self.fractions)))
    }
}

type CellKey = (PolicyKind, String, String);

fn sort_key(meta: &RunMeta) -> (PolicyKind, u64, u64) {
    let gap = match meta.supply {
        SupplyModel::FractionalGap(g) => g,
        SupplyModel::FixedCapacity(w) => 1e6 + w,
    };
    (meta.policy, gap.to_bits(), meta.ap.to_bits())
}

/// Groups logs into cells and pairs every run with the baseline run of the
/// same supply, AP and seed, taken from `logs` or `references`.
pub fn summarize(logs: &[MetricsLog], references: &[MetricsLog]) -> Vec<CellSummary> {
    let mut baselines: BTreeMap<(String, String, u64), &MetricsLog> = BTreeMap::new();
    for log in logs.iter().chain(references) {
        if log.meta.policy == PolicyKind::Baseline {
            baselines
                .entry((log.meta.gap_label(), log.meta.ap_label(), log.meta.seed))
                .or_insert(log);
        }
    }

    let mut cells: BTreeMap<(PolicyKind, u64, u64), (CellKey, Vec<&MetricsLog>)> = BTreeMap::new();
    for log in logs {
        let key = (log.meta.policy, log.meta.gap_label(), log.meta.ap_label());
        cells.entry(sort_key(&log.meta)).or_insert((key, Vec::new())).1.push(log);
    }

    cells
        .into_values()
        .map(|((policy, gap_label, ap_label), mut runs)| {
            runs.sort_by_key(|l| l.meta.run);
            let mut metrics: Vec<(String, Vec<f64>)> = Vec::new();
            for log in &runs {
                let mut row = log.scalars();
                if let Some(base) = baselines.get(&(gap_label.clone(), ap_label.clone(), log.meta.seed)) {
                    let b = EdgeFractions::of(&base.level_fractions());
                    let a = EdgeFractions::of(&log.level_fractions());
                    row.push(("dec_l1", decrease(b.l1, a.l1)));
                    row.push(("dec_l5", decrease(b.l5, a.l5)));
                    row.push(("sci", sci(b, a)));
                }
                for (name, value) in row {
                    match metrics.iter_mut().find(|(n, _)| n == name) {
                        Some((_, v)) => v.push(value),
                        None => metrics.push((name.to_string(), vec![value])),
                    }
                }
            }
            let n = runs.len() as f64;
            let mut fractions = [0.0; 5];
            let mut base_fractions = [0.0; 5];
            let mut paired = 0;
            for log in &runs {
                for (acc, f) in fractions.iter_mut().zip(log.level_fractions()) {
                    *acc += f / n;
                }
                if let Some(base) = baselines.get(&(gap_label.clone(), ap_label.clone(), log.meta.seed)) {
                    paired += 1;
                    for (acc, f) in base_fractions.iter_mut().zip(base.level_fractions()) {
                        *acc += f;
                    }
                }
            }
            let baseline_fractions = (paired == runs.len()).then(|| base_fractions.map(|x| x / n));
            let gap = match runs[0].meta.supply {
                SupplyModel::FractionalGap(g) => Some(g),
                SupplyModel::FixedCapacity(_) => None,
            };
            CellSummary {
                policy,
                gap_label,
                ap_label,
                gap,
                ap: runs[0].meta.ap,
                metrics,
                fractions,
                baseline_fractions,
            }
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `runs/<cell>_run<j>.csv` per log, `runs.csv` as an index,
/// `summary_<policy>_<gap>_<ap>.csv` per cell and `plot_<policy>_<metric>.csv`
/// gap × AP matrices. `references` supply baseline pairings without being
/// written themselves.
pub fn write_report(logs: &[MetricsLog], references: &[MetricsLog], out_dir: &Path) -> Result<Vec<CellSummary>> {
    if logs.is_empty() {
        return Err(Error::EmptyReport);
    }
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;

    let mut index = String::from("file,policy,gap,ap,run,seed,config_hash\n");
    let mut ordered: Vec<&MetricsLog> = logs.iter().collect();
    ordered.sort_by_key(|l| (sort_key(&l.meta), l.meta.run));
    for log in ordered {
        let name = format!("{}_run{}.csv", log.meta.cell_label(), log.meta.run);
        write_file(&runs_dir.join(&name), &hourly_csv(log))?;
        let m = &log.meta;
        let _ = writeln!(
            index,
            "runs/{name},{},{},{},{},{},{}",
            m.policy,
            m.gap_label(),
            m.ap_label(),
            m.run,
            m.seed,
            m.config_hash
        );
    }
    write_file(&out_dir.join("runs.csv"), &index)?;

    let cells = summarize(logs, references);
    for cell in &cells {
        let mut s = String::from("metric,mean,std,n\n");
        for (name, values) in &cell.metrics {
            let (m, sd) = mean_std(values);
            let _ = writeln!(s, "{name},{},{},{}", fmt_sig(m), fmt_sig(sd), values.len());
        }
        let file = format!("summary_{}_{}_{}.csv", cell.policy, cell.gap_label, cell.ap_label);
        write_file(&out_dir.join(file), &s)?;
    }
    write_plot_data(&cells, out_dir)?;
    Ok(cells)
}

fn hourly_csv(log: &MetricsLog) -> String {
    let mut s = String::from(
        "hour,demand_w,capacity_w,served_w,ulw_w,l1,l2,l3,l4,l5,mean_utility,convergence_s,rounds,emergency,nonconvergent,commands_sent,commands_failed\n",
    );
    for h in &log.hours {
        let c = h.level_counts;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            h.hour,
            fmt_sig(h.demand),
            fmt_sig(h.capacity),
            fmt_sig(h.served),
            fmt_sig(h.ulw),
            c[0],
            c[1],
            c[2],
            c[3],
            c[4],
            fmt_sig(h.mean_utility),
            h.convergence_seconds,
            h.rounds,
            h.emergency as u8,
            h.nonconvergent as u8,
            h.commands_sent,
            h.commands_failed
        );
    }
    s
}

fn write_plot_data(cells: &[CellSummary], out_dir: &Path) -> Result<()> {
    type Getter = fn(&CellSummary) -> Option<f64>;
    let plots: [(&str, Getter); 7] = [
        ("dec_l1", |c| c.dec_l1()),
        ("dec_l5", |c| c.dec_l5()),
        ("sci", |c| c.sci()),
        ("ulw_total_w", |c| c.metric_mean("ulw_total_w")),
        ("frac_l1", |c| Some(c.fractions[0])),
        ("frac_l5", |c| Some(c.fractions[4])),
        ("mean_utility", |c| c.metric_mean("mean_utility")),
    ];
    let mut policies: Vec<PolicyKind> = cells.iter().map(|c| c.policy).collect();
    policies.dedup();
    for policy in policies {
        let mine: Vec<&CellSummary> = cells.iter().filter(|c| c.policy == policy).collect();
        let mut gaps: Vec<(u64, &str)> = Vec::new();
        let mut aps: Vec<(u64, &str)> = Vec::new();
        for c in &mine {
            let g = (c.gap.unwrap_or(f64::MAX).to_bits(), c.gap_label.as_str());
            if !gaps.contains(&g) {
                gaps.push(g);
            }
            let a = (c.ap.to_bits(), c.ap_label.as_str());
            if !aps.contains(&a) {
                aps.push(a);
            }
        }
        gaps.sort();
        aps.sort();
        for (metric, get) in plots {
            if mine.iter().all(|c| get(c).is_none()) {
                continue;
            }
            let mut s = String::from("gap_pct");
            for (_, a) in &aps {
                let _ = write!(s, ",ap_{a}");
            }
            s.push('\n');
            for (_, g) in &gaps {
                s.push_str(g);
                for (_, a) in &aps {
                    let v = mine
                        .iter()
                        .find(|c| c.gap_label == *g && c.ap_label == *a)
                        .and_then(|c| get(c));
                    s.push(',');
                    if let Some(v) = v {
                        s.push_str(&fmt_sig(v));
                    }
                }
                s.push('\n');
            }
            write_file(&out_dir.join(format!("plot_{policy}_{metric}.csv")), &s)?;
        }
    }
    Ok(())
}

/// Level of every home at the end of an hour as fractions; used by tests
/// and reports alike.
pub fn fractions_of(levels: &[PowerLevel]) -> Result<[f64; 5]> {
    level_distribution(&LevelAssignment(levels.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ulw_examples() {
        assert_eq!(ulw(5.0e6, 5.0e6), 0.0);
        assert_eq!(ulw(3.12e6, 2.0e6), 1.12e6);
        assert_eq!(ulw(1.0, 2.0), 0.0);
    }

    #[test]
    fn sci_examples() {
        let b = EdgeFractions { l1: 0.4, l5: 0.6 };
        assert_eq!(sci(b, b), 0.0);
        // dec_L1 = 85, dec_L5 = 5
        let a = EdgeFractions { l1: 0.06, l5: 0.57 };
        assert!((sci(b, a) - 80.0).abs() < 1e-9);
        // dec_L1 = 80, dec_L5 = -6
        let a = EdgeFractions { l1: 0.08, l5: 0.636 };
        assert!((sci(b, a) - 86.0).abs() < 1e-9);
        let zero = EdgeFractions { l1: 0.0, l5: 0.0 };
        assert_eq!(sci(zero, a), 0.0);
    }

    #[test]
    fn distribution_examples() {
        let all5 = LevelAssignment(vec![PowerLevel::L5; 4]);
        assert_eq!(level_distribution(&all5).unwrap(), [0.0, 0.0, 0.0, 0.0, 1.0]);
        let half = LevelAssignment(vec![PowerLevel::L1, PowerLevel::L5]);
        assert_eq!(level_distribution(&half).unwrap(), [0.5, 0.0, 0.0, 0.0, 0.5]);
        assert!(matches!(level_distribution(&LevelAssignment(vec![])), Err(Error::EmptyHomeSet)));
    }

    #[test]
    fn utility_examples() {
        let p = UtilityParams::default();
        assert_eq!(mean_utility(&LevelAssignment(vec![PowerLevel::L5; 3]), &p), 1.0);
        assert_eq!(mean_utility(&LevelAssignment(vec![PowerLevel::L1; 3]), &p), 0.0);
        let half = LevelAssignment(vec![PowerLevel::L1, PowerLevel::L5]);
        assert_eq!(mean_utility(&half, &p), 0.5);
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(123456.7), "123457");
        assert_eq!(fmt_sig(999999.7), "1e6");
        assert_eq!(fmt_sig(1234567.0), "1.23457e6");
        assert_eq!(fmt_sig(0.1234567), "0.123457");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(0.000012345678), "1.23457e-5");
        assert_eq!(fmt_sig(0.99999999), "1");
        assert_eq!(percent_label(0.2), "20");
        assert_eq!(percent_label(0.125), "12.5");
        assert_eq!(percent_label(0.7), "70");
    }

    fn levels() -> impl Strategy<Value = Vec<PowerLevel>> {
        prop::collection::vec((0usize..5).prop_map(|i| PowerLevel::from_index(i).unwrap()), 1..200)
    }

    proptest! {
        #[test]
        fn fractions_sum_to_one(ls in levels()) {
            let f = fractions_of(&ls).unwrap();
            prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn sci_is_permutation_invariant(base in levels(), algo in levels(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut b2 = base.clone();
            let mut a2 = algo.clone();
            b2.shuffle(&mut rng);
            a2.shuffle(&mut rng);
            let s1 = sci(EdgeFractions::of(&fractions_of(&base).unwrap()), EdgeFractions::of(&fractions_of(&algo).unwrap()));
            let s2 = sci(EdgeFractions::of(&fractions_of(&b2).unwrap()), EdgeFractions::of(&fractions_of(&a2).unwrap()));
            prop_assert_eq!(s1, s2);
        }

        #[test]
        fn sig_round_trips_within_precision(x in -1e9f64..1e9) {
            let y: f64 = fmt_sig(x).parse().unwrap();
            prop_assert!((x - y).abs() <= 5e-6 * x.abs() + 1e-300);
        }
    }
}
