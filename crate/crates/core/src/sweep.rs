//! Seeded gap × AP × policy sweeps.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::corpus::{ClassCatalog, Corpus};
use crate::engine::{run, SimConfig};
use crate::error::{Error, Result};
use crate::metrics::MetricsLog;
use crate::policy::PolicyKind;
use crate::topology::SupplyModel;

pub const THREADS_ENV: &str = "STRESSGRID_THREADS";

/// Where appliance samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    /// The built-in generator with this seed.
    Synthetic(u64),
    /// A manifest file listing per-appliance sample files.
    Manifest(PathBuf),
}

impl CorpusSource {
    pub fn load(&self) -> Result<Corpus> {
        match self {
            CorpusSource::Synthetic(seed) => Ok(Corpus::synthetic(*seed)),
            CorpusSource::Manifest(path) => Corpus::load(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Everything but policy, gap, AP, seed and run index.
    pub base: SimConfig,
    pub policies: Vec<PolicyKind>,
    /// Supply gaps as fractions of demand.
    pub gaps: Vec<f64>,
    pub aps: Vec<f64>,
    pub runs: usize,
    pub out_dir: PathBuf,
    pub corpus: CorpusSource,
    /// KDE bandwidth in watts; `None` picks it per appliance.
    pub bandwidth: Option<f64>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str| Error::Config(format!("{name} must list at least one value"));
        if self.policies.is_empty() {
            return Err(empty("experiment.policies"));
        }
        if self.gaps.is_empty() {
            return Err(empty("experiment.gaps"));
        }
        if self.aps.is_empty() {
            return Err(empty("experiment.aps"));
        }
        if self.runs == 0 {
            return Err(Error::Config("experiment.runs must be at least 1".into()));
        }
        for &g in &self.gaps {
            SupplyModel::FractionalGap(g)
                .validate()
                .map_err(|_| Error::Config(format!("experiment.gaps: {} is not in [0, 100]", g * 100.0)))?;
        }
        for &ap in &self.aps {
            if !(0.0..=1.0).contains(&ap) {
                return Err(Error::Config(format!("experiment.aps: {} is not in [0, 100]", ap * 100.0)));
            }
        }
        self.base.validate()
    }

    /// Restricts the sweep to one cell.
    pub fn single(&self, policy: PolicyKind, gap: f64, ap: f64) -> ExperimentSpec {
        ExperimentSpec {
            policies: vec![policy],
            gaps: vec![gap],
            aps: vec![ap],
            ..self.clone()
        }
    }

    /// Simulation config of one run.
    pub fn config(&self, policy: PolicyKind, gap: f64, ap: f64, run: usize) -> SimConfig {
        let mut c = self.base.clone();
        c.policy = policy;
        c.supply = SupplyModel::FractionalGap(gap);
        c.topology.ap = ap;
        c.seed = run_seed(self.base.seed, run);
        c.run = run;
        c
    }

    /// Number of run logs a sweep writes.
    pub fn run_count(&self) -> usize {
        self.policies.len() * self.gaps.len() * self.aps.len() * self.runs
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of run `run` in every cell: `splitmix64(base ^ splitmix64(run))`.
///
/// The cell does not enter the seed, so all policies, gaps and
/// penetrations of a sweep see the same topology and consumption draws for
/// a given run index, and a single-cell rerun reproduces the sweep's files.
pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(run as u64))
}

/// Finished runs of a sweep.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub logs: Vec<MetricsLog>,
    /// Baseline runs made only to pair with the requested policies.
    pub references: Vec<MetricsLog>,
}

/// Worker count from `STRESSGRID_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every (policy, gap, AP, run) of the experiment in a worker pool. Without
/// baseline in the policy list, baseline runs are added as references so
/// decreases and comfort indices can still be computed.
pub fn run_sweep(spec: &ExperimentSpec, catalog: &ClassCatalog, threads: Option<usize>) -> Result<SweepOutput> {
    spec.validate()?;
    let mut jobs: Vec<(bool, SimConfig)> = Vec::new();
    for &policy in &spec.policies {
        for &gap in &spec.gaps {
            for &ap in &spec.aps {
                for r in 0..spec.runs {
                    jobs.push((false, spec.config(policy, gap, ap, r)));
                }
            }
        }
    }
    if !spec.policies.contains(&PolicyKind::Baseline) {
        for &gap in &spec.gaps {
            for &ap in &spec.aps {
                for r in 0..spec.runs {
                    jobs.push((true, spec.config(PolicyKind::Baseline, gap, ap, r)));
                }
            }
        }
    }

    let work = || {
        jobs.par_iter()
            .map(|(reference, c)| run(c, catalog).map(|log| (*reference, log)))
            .collect::<Result<Vec<_>>>()
    };
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut out = SweepOutput {
        logs: Vec::new(),
        references: Vec::new(),
    };
    for (reference, log) in results {
        if reference {
            out.references.push(log);
        } else {
            out.logs.push(log);
        }
    }
    Ok(out)
}
