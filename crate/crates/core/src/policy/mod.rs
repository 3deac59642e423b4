//! Demand-reduction policies: cyclic group blackouts, distributed
//! stochastic back-off and centralized greedy throttling.
//!
//! Every policy works in rounds. The engine calls [`LoadPolicy::round`] once
//! per simulated second while served demand exceeds capacity. Within an
//! hour levels only ever go down; everybody returns to `L5` at the hour
//! boundary through [`reset_hourly`].

mod baseline;
mod centralized;
mod distributed;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use baseline::{baseline_step, BaselinePolicy, BaselineRotation};
pub use centralized::{alg2_step, CentralizedPolicy, CentralizedState, StepReport};
pub use distributed::{alg1_home_decision, alg1_round, DistributedParams, DistributedPolicy, DistributedState};

use crate::error::{Error, Result};
use crate::home::{Home, PowerLevel};
use crate::protocol::ControlChannel;
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Baseline,
    Distributed,
    Centralized,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::Baseline,
        PolicyKind::Distributed,
        PolicyKind::Centralized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Baseline => "baseline",
            PolicyKind::Distributed => "distributed",
            PolicyKind::Centralized => "centralized",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(PolicyKind::Baseline),
            "distributed" => Ok(PolicyKind::Distributed),
            "centralized" | "centralised" => Ok(PolicyKind::Centralized),
            other => Err(Error::Config(format!(
                "unknown policy {other:?} (expected baseline, distributed or centralized)"
            ))),
        }
    }
}

/// Target split of backing-off homes across `L4`, `L3` and `L2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionProfile {
    pub alpha_l4: f64,
    pub alpha_l3: f64,
    pub alpha_l2: f64,
}

impl DistributionProfile {
    pub fn new(alpha_l4: f64, alpha_l3: f64, alpha_l2: f64) -> Result<Self> {
        let alphas = [alpha_l4, alpha_l3, alpha_l2];
        if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Config(format!(
                "distribution profile entries must lie in [0, 1], got {alphas:?}"
            )));
        }
        if (alphas.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("distribution profile must sum to 1".into()));
        }
        Ok(DistributionProfile {
            alpha_l4,
            alpha_l3,
            alpha_l2,
        })
    }
}

/// Most backing-off homes take the mildest cuts.
impl Default for DistributionProfile {
    fn default() -> Self {
        DistributionProfile {
            alpha_l4: 0.5,
            alpha_l3: 0.4,
            alpha_l2: 0.1,
        }
    }
}

/// Grid stress broadcast to homes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressSignal {
    /// Percent of demand to shed.
    pub sl: f64,
    pub emergency: bool,
}

/// Snapshot of every home's level, indexed by home id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelAssignment(pub Vec<PowerLevel>);

impl LevelAssignment {
    pub fn of(homes: &[Home]) -> Self {
        LevelAssignment(homes.iter().map(|h| h.level).collect())
    }

    pub fn levels(&self) -> &[PowerLevel] {
        &self.0
    }

    pub fn counts(&self) -> [usize; 5] {
        let mut counts = [0; 5];
        for l in &self.0 {
            counts[l.index()] += 1;
        }
        counts
    }
}

/// Restricted levels whose cap lies strictly below the home's current
/// consumption fraction, highest first.
pub fn eligible_lower_levels(consumption_fraction: f64) -> Vec<PowerLevel> {
    PowerLevel::RESTRICTED
        .into_iter()
        .filter(|l| l.cap_fraction() < consumption_fraction)
        .collect()
}

/// Hour boundary: everyone back to `L5`, back-off state cleared, and
/// `ls_lh` set for homes that ended the hour shed.
pub fn reset_hourly(homes: &mut [Home]) -> LevelAssignment {
    for h in homes.iter_mut() {
        h.alg1.ls_lh = h.level.is_shed();
        h.alg1.dlc_done = false;
        h.alg1.sl_init = None;
        h.level = PowerLevel::L5;
    }
    LevelAssignment::of(homes)
}

/// Delivers level commands to Aashiyana homes over the in-home link.
#[derive(Debug, Clone)]
pub struct Commander {
    channel: ControlChannel,
    rng: ChaCha8Rng,
    pub sent: u64,
    pub failed: u64,
}

impl Commander {
    pub fn new(channel: ControlChannel, rng: ChaCha8Rng) -> Self {
        Commander {
            channel,
            rng,
            sent: 0,
            failed: 0,
        }
    }

    /// A lossless channel.
    pub fn perfect() -> Self {
        use rand::SeedableRng;
        Commander::new(ControlChannel::default(), ChaCha8Rng::seed_from_u64(0))
    }

    /// Moves `home` to `level` if the command gets through. Returns the
    /// watts saved.
    pub fn set_level(&mut self, home: &mut Home, level: PowerLevel) -> f64 {
        if level >= home.level {
            return 0.0;
        }
        self.sent += 1;
        if home.aashiyana && !self.channel.command(&mut self.rng) {
            self.failed += 1;
            return 0.0;
        }
        let before = home.current_consumption();
        home.level = level;
        before - home.current_consumption()
    }
}

/// Everything a policy round can see and change.
pub struct RoundContext<'a> {
    pub topology: &'a Topology,
    pub homes: &'a mut [Home],
    pub capacity: f64,
    /// Unconstrained demand this hour.
    pub demand: f64,
    /// 1-based round number within the current pass.
    pub round: usize,
    pub emergency: bool,
    pub rng: &'a mut ChaCha8Rng,
    pub commander: &'a mut Commander,
}

impl RoundContext<'_> {
    pub fn served(&self) -> f64 {
        self.homes.iter().map(Home::current_consumption).sum()
    }

    pub fn draw_percent(&mut self) -> u32 {
        self.rng.random_range(1..=100)
    }
}

/// A load-reduction policy driven by the engine.
pub trait LoadPolicy: Send {
    fn kind(&self) -> PolicyKind;

    /// Rounds in one full pass; a pass that ends over capacity raises the
    /// emergency signal.
    fn pass_len(&self, topology: &Topology) -> usize;

    fn round(&mut self, ctx: &mut RoundContext<'_>);
}

pub fn make_policy(kind: PolicyKind, params: DistributedParams) -> Box<dyn LoadPolicy> {
    match kind {
        PolicyKind::Baseline => Box::new(BaselinePolicy::default()),
        PolicyKind::Distributed => Box::new(DistributedPolicy::new(params)),
        PolicyKind::Centralized => Box::new(CentralizedPolicy::default()),
    }
}

/// Cuts whole feeder groups to `L1` in round-robin order, starting at the
/// rotation's cursor, until served demand fits `capacity` or every group
/// has been cut. Only homes accepted by `select` are touched. Returns the
/// served demand afterwards and advances the cursor by one.
pub(crate) fn cut_groups(
    rotation: &mut BaselineRotation,
    topology: &Topology,
    homes: &mut [Home],
    capacity: f64,
    select: impl Fn(&Home) -> bool,
) -> f64 {
    let groups = topology.group_count();
    let mut served: f64 = homes.iter().map(Home::current_consumption).sum();
    rotation.blacked_out.clear();
    for k in 0..groups {
        if served <= capacity {
            break;
        }
        let g = (rotation.next_group_index + k) % groups;
        for &id in topology.group_homes(g) {
            let h = &mut homes[id];
            if select(h) {
                served -= h.current_consumption();
                h.level = PowerLevel::L1;
            }
        }
        rotation.blacked_out.push(g);
    }
    rotation.next_group_index = (rotation.next_group_index + 1) % groups;
    served.max(0.0)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eligible_levels_examples() {
        assert_eq!(
            eligible_lower_levels(0.80),
            vec![PowerLevel::L4, PowerLevel::L3, PowerLevel::L2]
        );
        assert_eq!(eligible_lower_levels(0.30), vec![PowerLevel::L2]);
        assert!(eligible_lower_levels(0.20).is_empty());
        assert_eq!(eligible_lower_levels(0.75), vec![PowerLevel::L3, PowerLevel::L2]);
    }

    #[test]
    fn profile_must_sum_to_one() {
        let err = DistributionProfile::new(0.5, 0.3, 0.3).unwrap_err();
        assert!(err.to_string().contains("distribution profile must sum to 1"));
        assert!(DistributionProfile::new(1.0, 0.0, 0.0).is_ok());
        assert!(DistributionProfile::new(1.2, -0.2, 0.0).is_err());
    }

    #[test]
    fn reset_marks_shed_homes() {
        let (_, mut homes) = testutil::uniform_homes(10, 1, 1.0, 400.0);
        homes[0].level = PowerLevel::L3;
        homes[1].alg1.dlc_done = true;
        homes[1].alg1.sl_init = Some(20.0);
        let a = reset_hourly(&mut homes);
        assert!(a.levels().iter().all(|&l| l == PowerLevel::L5));
        assert!(homes[0].alg1.ls_lh);
        assert!(!homes[1].alg1.ls_lh);
        assert!(!homes[1].alg1.dlc_done);
        assert_eq!(homes[1].alg1.sl_init, None);
    }

    #[test]
    fn policy_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert!("random".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn commander_never_raises_level() {
        let (_, mut homes) = testutil::uniform_homes(1, 1, 1.0, 400.0);
        let mut c = Commander::perfect();
        homes[0].level = PowerLevel::L3;
        assert_eq!(c.set_level(&mut homes[0], PowerLevel::L4), 0.0);
        assert_eq!(homes[0].level, PowerLevel::L3);
        assert!(c.set_level(&mut homes[0], PowerLevel::L2) > 0.0);
        assert_eq!(homes[0].level, PowerLevel::L2);
    }
}
