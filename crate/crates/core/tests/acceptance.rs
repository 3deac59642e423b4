//! Acceptance suite. Runs the full desk-scale sweep (1000 homes, 50 feeders,
//! 24 h, 10 seeds) on the bundled corpus and prints one PASS/FAIL line per
//! criterion. Exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stressgrid::consumption::{filter_outliers, hourly_draw};
use stressgrid::corpus::{ClassCatalog, Corpus};
use stressgrid::engine::SimConfig;
use stressgrid::home::{build_dm, Home, HomeClass, PowerLevel};
use stressgrid::metrics::{self, CellSummary, MetricsLog};
use stressgrid::policy::{alg1_home_decision, DistributionProfile, PolicyKind};
use stressgrid::protocol::{self, decode, deliver, encode, LinkModel, RELAYS_PER_DEVICE};
use stressgrid::sweep::{run_sweep, CorpusSource, ExperimentSpec};
use stressgrid::topology::{Topology, TopologyConfig};

const GAPS: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
const APS: [f64; 4] = [0.25, 0.5, 0.75, 0.9];
const RUNS: usize = 10;

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/corpus")
}

fn spec(policies: Vec<PolicyKind>, gaps: &[f64], aps: &[f64], runs: usize) -> ExperimentSpec {
    let mut base = SimConfig::default();
    base.topology = TopologyConfig {
        homes: 1000,
        feeders: 50,
        ..TopologyConfig::default()
    };
    base.record_trace = true;
    ExperimentSpec {
        base,
        policies,
        gaps: gaps.to_vec(),
        aps: aps.to_vec(),
        runs,
        out_dir: PathBuf::from("unused"),
        corpus: CorpusSource::Manifest(corpus_dir().join("manifest.csv")),
        bandwidth: None,
    }
}

fn cell<'a>(cells: &'a [CellSummary], policy: PolicyKind, gap: f64, ap: f64) -> &'a CellSummary {
    cells
        .iter()
        .find(|c| c.policy == policy && c.gap.is_some_and(|g| (g - gap).abs() < 1e-9) && (c.ap - ap).abs() < 1e-9)
        .unwrap_or_else(|| panic!("no cell {policy} {gap} {ap}"))
}

fn l1_reduction(cells: &[CellSummary]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for policy in [PolicyKind::Distributed, PolicyKind::Centralized] {
        let c = cell(cells, policy, 0.2, 0.9);
        let dec = c.dec_l1().expect("baseline pairing");
        pass &= dec >= 70.0;
        parts.push(format!(
            "{policy} dec_L1 {dec:.2}% (L1 {:.4} vs baseline {:.4})",
            c.fractions[0], c.baseline_fractions.unwrap()[0]
        ));
    }
    Outcome {
        id: "1",
        name: "L1 reduction >= 70% at 90% AP, 20% gap",
        pass,
        detail: parts.join("; "),
    }
}

fn ulw_collapse(cells: &[CellSummary]) -> Outcome {
    let ulw = |p| cell(cells, p, 0.2, 0.9).metric_mean("ulw_total_w").unwrap();
    let (c, d, b) = (
        ulw(PolicyKind::Centralized),
        ulw(PolicyKind::Distributed),
        ulw(PolicyKind::Baseline),
    );
    Outcome {
        id: "2",
        name: "centralized ULW <= 10% of baseline and <= 25% of distributed",
        pass: c <= 0.10 * b && c <= 0.25 * d,
        detail: format!(
            "centralized {c:.1} W, distributed {d:.1} W, baseline {b:.1} W ({:.2}% / {:.2}%)",
            100.0 * c / b,
            100.0 * c / d
        ),
    }
}

fn l5_win_win(cells: &[CellSummary]) -> Outcome {
    let mut best: Option<(f64, &CellSummary)> = None;
    for c in cells.iter().filter(|c| c.policy == PolicyKind::Centralized) {
        let dec = c.dec_l5().expect("baseline pairing");
        if best.is_none_or(|(b, _)| dec < b) {
            best = Some((dec, c));
        }
    }
    let (dec, c) = best.expect("centralized cells");
    Outcome {
        id: "3",
        name: "centralized raises the L5 fraction in some cell",
        pass: dec < 0.0,
        detail: format!("lowest dec_L5 {dec:.2}% at gap {}%, AP {}%", c.gap_label, c.ap_label),
    }
}

fn sci_trend(cells: &[CellSummary]) -> Outcome {
    let scis: Vec<f64> = GAPS
        .iter()
        .map(|&g| cell(cells, PolicyKind::Distributed, g, 0.9).sci().unwrap())
        .collect();
    let rises: Vec<f64> = scis.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    let trend = rises.len() <= 1 && rises.iter().all(|&d| d <= 3.0);
    let level = scis[0] >= 60.0 && scis[1] >= 60.0;
    Outcome {
        id: "4",
        name: "SCI at 90% AP nonincreasing in gap and >= 60 pp at 10-20% gap",
        pass: trend && level,
        detail: format!(
            "distributed SCI by gap 10/20/30/40%: {}",
            scis.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join(" / ")
        ),
    }
}

fn utility_ordering(cells: &[CellSummary], u_max: f64) -> Outcome {
    let u = |p| cell(cells, p, 0.3, 0.9).metric_mean("mean_utility").unwrap();
    let (c, d) = (u(PolicyKind::Centralized), u(PolicyKind::Distributed));
    let diff = (c - d) / u_max;
    Outcome {
        id: "5",
        name: "centralized utility exceeds distributed by 2-10 pp at 30% gap, 90% AP",
        pass: (0.02..=0.10).contains(&diff),
        detail: format!("centralized {c:.4}, distributed {d:.4}, difference {:.2} pp", 100.0 * diff),
    }
}

fn aashiyana_flags(log: &MetricsLog, topology: &TopologyConfig) -> Vec<bool> {
    let config = TopologyConfig {
        ap: log.meta.ap,
        ..topology.clone()
    };
    let t = Topology::build(&config, log.meta.seed).expect("valid topology");
    t.homes.iter().map(|h| h.aashiyana).collect()
}

/// Engine properties over every run of the sweep. Returns the violations.
fn run_properties(logs: &[MetricsLog], topology: &TopologyConfig) -> Vec<String> {
    let mut bad = Vec::new();
    for log in logs {
        let label = format!("{} run {}", log.meta.cell_label(), log.meta.run);
        let flags = aashiyana_flags(log, topology);
        let dlc = log.meta.policy != PolicyKind::Baseline;
        if log.assignments.len() != log.hours.len() {
            bad.push(format!("{label}: assignments not recorded"));
            continue;
        }
        let served: f64 = log.hours.iter().map(|h| h.served).sum();
        let capacity: f64 = log.hours.iter().map(|h| h.capacity).sum();
        if served > capacity {
            bad.push(format!("{label}: day served {served} > capacity {capacity}"));
        }
        for (k, (h, a)) in log.hours.iter().zip(&log.assignments).enumerate() {
            if h.served > h.capacity {
                bad.push(format!("{label} hour {k}: served {} > capacity {}", h.served, h.capacity));
            }
            if h.level_counts.iter().sum::<usize>() != log.homes {
                bad.push(format!("{label} hour {k}: level counts do not cover all homes"));
            }
            let f = metrics::fractions_of(a.levels()).expect("nonempty");
            if (f.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                bad.push(format!("{label} hour {k}: fractions sum to {}", f.iter().sum::<f64>()));
            }
            for (id, (&level, &aashiyana)) in a.levels().iter().zip(&flags).enumerate() {
                if !aashiyana && !matches!(level, PowerLevel::L1 | PowerLevel::L5) {
                    bad.push(format!("{label} hour {k}: non-Aashiyana home {id} at {level:?}"));
                }
                if dlc && aashiyana && !h.emergency && level < PowerLevel::L2 {
                    bad.push(format!("{label} hour {k}: Aashiyana home {id} at L1 without emergency"));
                }
                if dlc && aashiyana && k > 0 && !h.emergency {
                    let before = log.assignments[k - 1].levels()[id];
                    if before.is_shed() && level.is_shed() {
                        bad.push(format!("{label} hour {k}: Aashiyana home {id} shed two hours running"));
                    }
                }
            }
        }
    }
    bad
}

/// Checks the back-off decision against the interval rule over a grid of
/// draws, stress levels and distribution profiles.
fn alg1_partition() -> Vec<String> {
    let ratings = [60.0, 60.0, 60.0, 80.0, 100.0, 20.0, 40.0];
    let dm = build_dm(HomeClass::A, &ratings);
    let mut bad = Vec::new();
    let sls: Vec<f64> = (1..=40).map(|i| i as f64 * 2.5).collect();
    for a4 in 0..=10 {
        for a3 in 0..=(10 - a4) {
            let a2 = 10 - a4 - a3;
            let dp = DistributionProfile::new(a4 as f64 / 10.0, a3 as f64 / 10.0, a2 as f64 / 10.0)
                .expect("grid point sums to 1");
            for &sl in &sls {
                for r in 1..=100u32 {
                    let mut home = Home::new(0, HomeClass::A, true, 0, 0, dm.clone());
                    let got = alg1_home_decision(&mut home, sl, &dp, false, r).expect("valid draw");
                    let s = sl.max(5.0);
                    let x = f64::from(r);
                    let want = if x >= s {
                        None
                    } else if x > (1.0 - dp.alpha_l4) * s {
                        Some(PowerLevel::L4)
                    } else if dp.alpha_l2 * s < x && x < (dp.alpha_l3 + dp.alpha_l2) * s {
                        Some(PowerLevel::L3)
                    } else {
                        Some(PowerLevel::L2)
                    };
                    if got != want {
                        bad.push(format!("dp {a4}/{a3}/{a2} sl {sl} r {r}: got {got:?}, want {want:?}"));
                    }
                    if got.is_some() != home.alg1.dlc_done {
                        bad.push(format!("dp {a4}/{a3}/{a2} sl {sl} r {r}: dlc_done out of step"));
                    }
                }
            }
        }
    }
    bad
}

/// Every relay pattern at every position of a five-device frame.
fn frame_round_trip() -> (usize, Vec<String>) {
    let mut bad = Vec::new();
    let mut cases = 0;
    let pattern = |p: usize| -> [bool; RELAYS_PER_DEVICE] { std::array::from_fn(|bit| p & (1 << bit) != 0) };
    for p in 0..32 {
        for pos in 0..5 {
            cases += 1;
            let devices: Vec<[bool; RELAYS_PER_DEVICE]> = (0..5)
                .map(|d| if d == pos { pattern(p) } else { pattern((p + 7 * (d + 1)) % 32) })
                .collect();
            let frame = encode(&devices).expect("five relays per device");
            if frame.bytes.iter().any(|b| b & 0xE0 != 0) {
                bad.push(format!("pattern {p} at {pos}: upper bits set"));
            }
            for (d, want) in devices.iter().enumerate() {
                if decode(&frame, d + 1).expect("id in range") != *want {
                    bad.push(format!("pattern {p} at {pos}: device {} differs", d + 1));
                }
            }
        }
    }
    (cases, bad)
}

fn ack_slots_disjoint() -> Vec<String> {
    let link = LinkModel::default();
    let mut bad = Vec::new();
    for n in 1..=64 {
        let mut slots: Vec<(f64, f64)> = (1..=n)
            .map(|id| (link.ack_slot(id), link.ack_slot(id) + link.ack_slot_ms))
            .collect();
        slots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if slots.windows(2).any(|w| w[1].0 < w[0].1) {
            bad.push(format!("{n} devices: overlapping ack slots"));
        }
        if slots.last().unwrap().1 > link.timeout_ms(n) {
            bad.push(format!("{n} devices: last ack slot ends after the timeout"));
        }
    }
    bad
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).expect("readable file");
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), bytes);
            }
        }
    }
    out
}

/// Same seed, different worker counts: report files must match byte for byte.
fn byte_identical(catalog: &ClassCatalog) -> Result<usize, String> {
    let all = vec![PolicyKind::Baseline, PolicyKind::Distributed, PolicyKind::Centralized];
    let s = spec(all, &[0.2, 0.4], &[0.5, 0.9], 3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(a.path(), Some(1)), (b.path(), None)] {
        let out = run_sweep(&s, catalog, threads).map_err(|e| e.to_string())?;
        metrics::write_report(&out.logs, &out.references, dir).map_err(|e| e.to_string())?;
    }
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    if ta.is_empty() {
        return Err("no files written".into());
    }
    if ta != tb {
        return Err("report trees differ".into());
    }
    Ok(ta.len())
}

fn properties(logs: &[MetricsLog], topology: &TopologyConfig, catalog: &ClassCatalog) -> Outcome {
    let mut notes = Vec::new();
    let mut bad = run_properties(logs, topology);
    notes.push(format!("{} runs checked hour by hour", logs.len()));
    bad.extend(alg1_partition());
    let (cases, frame_bad) = frame_round_trip();
    notes.push(format!("{cases} frame cases"));
    bad.extend(frame_bad);
    bad.extend(ack_slots_disjoint());
    match byte_identical(catalog) {
        Ok(n) => notes.push(format!("{n} report files identical across reruns")),
        Err(e) => bad.push(format!("determinism: {e}")),
    }
    if !bad.is_empty() {
        notes.push(format!("{} violations, first: {}", bad.len(), bad[0]));
    }
    Outcome {
        id: "6",
        name: "property suite",
        pass: bad.is_empty(),
        detail: notes.join("; "),
    }
}

fn protocol_numbers() -> Outcome {
    let link = LinkModel::default();
    let latency = link.typical_latency_ms();

    let frame = encode(&[[true; RELAYS_PER_DEVICE]; 5]).unwrap();
    let distance = 50.0;
    let prr = link.prr_at(distance);
    let analytic = protocol::delivery_probability(prr, link.retries);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 100_000;
    let delivered = (0..trials)
        .filter(|_| deliver(&frame, &link, distance, &mut rng).is_delivered())
        .count();
    let empirical = delivered as f64 / trials as f64;
    let rel = (empirical - analytic).abs() / analytic;

    let active = protocol::overhead_power(4, false);
    let shed = protocol::overhead_power(4, true);
    let power_ok = (active - 1.96).abs() < 1e-12 && (shed - 0.50).abs() < 1e-12;

    Outcome {
        id: "7",
        name: "protocol latency, delivery and overhead power",
        pass: (latency - 30.0).abs() <= 2.0 && prr == 0.5 && link.retries == 3 && rel <= 0.01 && power_ok,
        detail: format!(
            "latency {latency} ms; PRR {prr} with {} retries: Monte Carlo {empirical:.4} vs analytic {analytic:.4} ({:.3}% off); overhead {active:.2} W / {shed:.2} W",
            link.retries,
            100.0 * rel
        ),
    }
}

/// Two-sample Kolmogorov-Smirnov distance.
fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn sampling_fidelity(corpus: &Corpus, catalog: &ClassCatalog) -> Outcome {
    let profile = catalog.profile(HomeClass::C);
    let sources = &corpus.classes[&HomeClass::C];
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut worst_ks, mut worst_mean) = (0.0f64, 0.0f64);
    let mut worst = String::new();
    for (model, raw) in profile.appliances.iter().zip(sources) {
        let source = filter_outliers(raw).unwrap();
        let draws: Vec<f64> = (0..10_000).map(|_| hourly_draw(&model.cdf, &mut rng).unwrap()).collect();
        let ks = ks_distance(&draws, &source.samples);
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let rel = (m - source.mean()).abs() / source.mean();
        if ks > worst_ks {
            worst_ks = ks;
            worst = model.name.clone();
        }
        worst_mean = worst_mean.max(rel);
    }
    Outcome {
        id: "8",
        name: "sampling fidelity: KS <= 0.05 and mean within 5% per appliance",
        pass: worst_ks <= 0.05 && worst_mean <= 0.05,
        detail: format!(
            "{} appliances; worst KS {worst_ks:.4} ({worst}); worst mean error {:.2}%",
            profile.appliances.len(),
            100.0 * worst_mean
        ),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let corpus = Corpus::load(&corpus_dir().join("manifest.csv")).expect("bundled corpus");
    let catalog = ClassCatalog::fit(&corpus, None).expect("corpus fits");

    let all = vec![PolicyKind::Baseline, PolicyKind::Distributed, PolicyKind::Centralized];
    let sweep = spec(all, &GAPS, &APS, RUNS);
    let out = run_sweep(&sweep, &catalog, None).expect("sweep runs");
    let cells = metrics::summarize(&out.logs, &out.references);
    println!(
        "acceptance sweep: {} runs in {:.1} s",
        out.logs.len(),
        start.elapsed().as_secs_f64()
    );

    let outcomes = [
        l1_reduction(&cells),
        ulw_collapse(&cells),
        l5_win_win(&cells),
        sci_trend(&cells),
        utility_ordering(&cells, sweep.base.utility.u_max),
        properties(&out.logs, &sweep.base.topology, &catalog),
        protocol_numbers(),
        sampling_fidelity(&corpus, &catalog),
    ];

    let mut failed = 0;
    for o in &outcomes {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {} | {}", o.id, o.name, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1} s)",
        outcomes.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
