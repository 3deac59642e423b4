//! Second-granularity simulation loop.
//!
//! Each hour the engine restores every home to `L5`, draws fresh appliance
//! consumption and fixes the capacity. Then, one round per simulated second,
//! it calls the policy while served demand exceeds capacity. A pass that
//! ends over capacity raises the emergency signal for one more pass; if
//! that fails too, whole groups are blacked out and the hour is flagged
//! non-convergent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::ClassCatalog;
use crate::error::{Error, Result};
use crate::home::{Home, UtilityParams};
use crate::metrics::{mean_utility, ulw, HourRecord, MetricsLog, RunMeta};
use crate::policy::{
    cut_groups, make_policy, reset_hourly, BaselineRotation, Commander, DistributedParams, LevelAssignment,
    LoadPolicy, PolicyKind, RoundContext,
};
use crate::protocol::ControlChannel;
use crate::topology::{demand, SupplyModel, Topology, TopologyConfig};

pub const SECONDS_PER_HOUR: u32 = 3600;

const CONSUMPTION_STREAM: u64 = 3;
const POLICY_STREAM: u64 = 4;
const LINK_STREAM: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon_hours: usize,
    /// Grid shape and Aashiyana penetration.
    pub topology: TopologyConfig,
    pub supply: SupplyModel,
    pub policy: PolicyKind,
    pub distributed: DistributedParams,
    pub utility: UtilityParams,
    pub channel: ControlChannel,
    pub seed: u64,
    /// Index of this run within its cell; metadata only.
    pub run: usize,
    /// Keep trace events and end-of-hour assignments in the log.
    pub record_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon_hours: 24,
            topology: TopologyConfig::default(),
            supply: SupplyModel::FractionalGap(0.2),
            policy: PolicyKind::Baseline,
            distributed: DistributedParams::default(),
            utility: UtilityParams::default(),
            channel: ControlChannel::default(),
            seed: 0,
            run: 0,
            record_trace: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_hours == 0 {
            return Err(Error::Config("simulation.hours must be at least 1".into()));
        }
        self.topology.validate()?;
        self.supply.validate()?;
        self.channel.link.validate()?;
        let rf = self.distributed.reduction_factor;
        if !(rf > 0.0 && rf <= 1.0) {
            return Err(Error::Config(format!("policy.reduction_factor must lie in (0, 1], got {rf}")));
        }
        let u = self.utility;
        UtilityParams::new(u.u_max, u.th_u, u.th_l)?;
        Ok(())
    }

    /// Hex sha256 of everything that shapes a run except its seed and index.
    pub fn hash(&self) -> String {
        let canonical = SimConfig {
            seed: 0,
            run: 0,
            record_trace: false,
            ..self.clone()
        };
        hex::encode(Sha256::digest(format!("{canonical:?}").as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    HourStart,
    GapDetected,
    PolicyRound,
    Emergency,
    Converged,
    HourEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub hour: usize,
    pub second: u32,
    pub kind: TraceKind,
    pub demand: f64,
    pub served: f64,
    pub capacity: f64,
    /// Round within the current pass; 0 outside rounds.
    pub round: usize,
}

/// `served <= capacity`.
pub fn converged(homes: &[Home], capacity: f64) -> bool {
    demand(homes).served <= capacity
}

/// Most rounds an hour may take: a normal pass, an emergency pass and the
/// fallback blackout.
pub fn max_rounds_per_hour(pass_len: usize) -> usize {
    2 * pass_len + 1
}

/// Mutable state of one run.
pub struct SimState {
    pub hour: usize,
    pub second: u32,
    pub topology: Topology,
    pub homes: Vec<Home>,
    pub emergency: bool,
    policy: Box<dyn LoadPolicy>,
    fallback: BaselineRotation,
    consumption_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    commander: Commander,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl SimState {
    pub fn new(config: &SimConfig, catalog: &ClassCatalog) -> Result<Self> {
        config.validate()?;
        let topology = Topology::build(&config.topology, config.seed)?;
        let homes = topology.instantiate_homes(catalog);
        Ok(SimState {
            hour: 0,
            second: 0,
            topology,
            homes,
            emergency: false,
            policy: make_policy(config.policy, config.distributed),
            fallback: BaselineRotation::default(),
            consumption_rng: stream(config.seed, CONSUMPTION_STREAM),
            policy_rng: stream(config.seed, POLICY_STREAM),
            commander: Commander::new(config.channel.clone(), stream(config.seed, LINK_STREAM)),
        })
    }

    pub fn assignment(&self) -> LevelAssignment {
        LevelAssignment::of(&self.homes)
    }

    /// Simulates the next hour and returns its record.
    pub fn step_hour(
        &mut self,
        config: &SimConfig,
        catalog: &ClassCatalog,
        trace: &mut Option<&mut Vec<TraceEvent>>,
    ) -> HourRecord {
        let hour = self.hour;
        reset_hourly(&mut self.homes);
        for h in self.homes.iter_mut() {
            let draws = catalog.profile(h.class).draw_hour(&mut self.consumption_rng);
            h.set_hour_draws(draws);
        }
        let d = demand(&self.homes).unconstrained;
        let capacity = config.supply.capacity(d);
        self.emergency = false;
        self.second = 0;

        let mut emit = |second: u32, kind: TraceKind, served: f64, round: usize| {
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceEvent {
                    hour,
                    second,
                    kind,
                    demand: d,
                    served,
                    capacity,
                    round,
                });
            }
        };
        emit(0, TraceKind::HourStart, d, 0);

        let pass_len = self.policy.pass_len(&self.topology);
        let sent_before = (self.commander.sent, self.commander.failed);
        let mut rounds = 0usize;
        let mut in_pass = 0usize;
        let mut nonconvergent = false;
        let mut served = demand(&self.homes).served;
        if served > capacity {
            emit(0, TraceKind::GapDetected, served, 0);
        }
        while served > capacity {
            if in_pass == pass_len && !self.emergency {
                self.emergency = true;
                in_pass = 0;
                emit(self.second, TraceKind::Emergency, served, 0);
            }
            if in_pass == pass_len {
                cut_groups(&mut self.fallback, &self.topology, &mut self.homes, capacity, |_| true);
                nonconvergent = true;
            } else {
                in_pass += 1;
                let mut ctx = RoundContext {
                    topology: &self.topology,
                    homes: &mut self.homes,
                    capacity,
                    demand: d,
                    round: in_pass,
                    emergency: self.emergency,
                    rng: &mut self.policy_rng,
                    commander: &mut self.commander,
                };
                self.policy.round(&mut ctx);
            }
            rounds += 1;
            self.second += 1;
            served = demand(&self.homes).served;
            emit(self.second, TraceKind::PolicyRound, served, in_pass);
        }
        assert!(
            rounds <= max_rounds_per_hour(pass_len) && self.second < SECONDS_PER_HOUR,
            "hour {hour} took {rounds} rounds"
        );
        emit(self.second, TraceKind::Converged, served, 0);
        emit(SECONDS_PER_HOUR - 1, TraceKind::HourEnd, served, 0);

        let assignment = self.assignment();
        let record = HourRecord {
            hour,
            demand: d,
            capacity,
            served,
            ulw: ulw(capacity, served),
            level_counts: assignment.counts(),
            mean_utility: mean_utility(&assignment, &config.utility),
            convergence_seconds: self.second,
            rounds: rounds as u32,
            emergency: self.emergency,
            nonconvergent,
            commands_sent: self.commander.sent - sent_before.0,
            commands_failed: self.commander.failed - sent_before.1,
        };
        self.hour += 1;
        record
    }
}

/// Runs one seeded simulation.
pub fn run(config: &SimConfig, catalog: &ClassCatalog) -> Result<MetricsLog> {
    let mut state = SimState::new(config, catalog)?;
    let mut events = Vec::new();
    let mut assignments = Vec::new();
    let mut hours = Vec::with_capacity(config.horizon_hours);
    for _ in 0..config.horizon_hours {
        let mut trace = config.record_trace.then_some(&mut events);
        hours.push(state.step_hour(config, catalog, &mut trace));
        if config.record_trace {
            assignments.push(state.assignment());
        }
    }
    Ok(MetricsLog {
        meta: RunMeta {
            policy: config.policy,
            supply: config.supply,
            ap: config.topology.ap,
            run: config.run,
            seed: config.seed,
            config_hash: config.hash(),
        },
        homes: state.homes.len(),
        hours,
        trace: events,
        assignments,
    })
}
