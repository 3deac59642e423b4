use super::{cut_groups, BaselineRotation, DistributionProfile, LevelAssignment, LoadPolicy, PolicyKind, RoundContext};
use crate::error::{Error, Result};
use crate::home::{Home, PowerLevel};
use crate::topology::{stress_level, Topology};

/// Smallest stress level a home reacts to on its first back-off decision.
const MIN_STRESS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributedParams {
    pub dp: DistributionProfile,
    /// Scales the stress level seen by homes that have not backed off yet
    /// in rounds after the first.
    pub reduction_factor: f64,
    /// Aashiyana rounds after the non-Aashiyana cut, per pass.
    pub followup_rounds: usize,
}

impl Default for DistributedParams {
    fn default() -> Self {
        DistributedParams {
            dp: DistributionProfile::default(),
            reduction_factor: 0.5,
            followup_rounds: 5,
        }
    }
}

/// One home's stochastic back-off decision.
///
/// `r` is the home's draw from `1..=100`. Returns the new level, or `None`
/// when the home keeps its level. Updates the home's back-off state.
pub fn alg1_home_decision(
    home: &mut Home,
    sl: f64,
    dp: &DistributionProfile,
    emergency: bool,
    r: u32,
) -> Result<Option<PowerLevel>> {
    if !(1..=100).contains(&r) {
        return Err(Error::InvalidDraw(r));
    }
    if home.alg1.ls_lh && !emergency {
        return Ok(None);
    }
    let r = f64::from(r);
    let state = &mut home.alg1;

    if !state.dlc_done {
        // clamp only on the first decision of the hour
        let sl = if state.sl_init.is_none() { sl.max(MIN_STRESS) } else { sl };
        state.sl_init = Some(sl);
        if r >= sl {
            return Ok(None);
        }
        state.dlc_done = true;
        let level = if r > (1.0 - dp.alpha_l4) * sl {
            PowerLevel::L4
        } else if dp.alpha_l2 * sl < r && r < (dp.alpha_l3 + dp.alpha_l2) * sl {
            PowerLevel::L3
        } else {
            PowerLevel::L2
        };
        return Ok(Some(level));
    }

    let sl = state.sl_init.unwrap_or(MIN_STRESS);
    let floor = if emergency { PowerLevel::L1 } else { PowerLevel::L2 };
    if (r < sl || emergency) && home.level > floor {
        return Ok(Some(home.level.step_down()));
    }
    Ok(None)
}

/// Cursor over non-Aashiyana group cuts and the stress level of the
/// hour's first round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistributedState {
    pub rotation: BaselineRotation,
    pub initial_sl: f64,
}

/// One round of the distributed ping-pong.
///
/// Round 1 and rounds from 3 on run the per-home decision on every
/// Aashiyana home; round 2 cuts feeder groups of non-Aashiyana homes. In
/// later rounds homes that already backed off reuse their first stress
/// level while the rest see `reduction_factor` times the stress level of
/// the hour's first round.
pub fn alg1_round(
    ctx: &mut RoundContext<'_>,
    params: &DistributedParams,
    state: &mut DistributedState,
) -> LevelAssignment {
    let served = ctx.served();
    if served <= ctx.capacity {
        return LevelAssignment::of(ctx.homes);
    }

    if ctx.round == 2 {
        cut_groups(&mut state.rotation, ctx.topology, ctx.homes, ctx.capacity, |h| !h.aashiyana);
        return LevelAssignment::of(ctx.homes);
    }

    let sl = stress_level(served, ctx.capacity).expect("served exceeds capacity >= 0");
    if ctx.round == 1 && !ctx.emergency {
        state.initial_sl = sl.max(MIN_STRESS);
    }
    let round_sl = if ctx.round == 1 {
        sl
    } else {
        params.reduction_factor * state.initial_sl
    };

    // draws in home-id order before any decision
    let ids: Vec<usize> = (0..ctx.homes.len()).filter(|&i| ctx.homes[i].aashiyana).collect();
    let draws: Vec<(usize, u32)> = ids.into_iter().map(|i| (i, ctx.draw_percent())).collect();
    for (i, r) in draws {
        let home = &mut ctx.homes[i];
        let decision = alg1_home_decision(home, round_sl, &params.dp, ctx.emergency, r)
            .expect("draws lie in 1..=100");
        if let Some(level) = decision {
            ctx.commander.set_level(home, level);
        }
    }
    LevelAssignment::of(ctx.homes)
}

#[derive(Debug)]
pub struct DistributedPolicy {
    pub params: DistributedParams,
    pub state: DistributedState,
}

impl DistributedPolicy {
    pub fn new(params: DistributedParams) -> Self {
        DistributedPolicy {
            params,
            state: DistributedState::default(),
        }
    }
}

impl LoadPolicy for DistributedPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Distributed
    }

    fn pass_len(&self, _topology: &Topology) -> usize {
        2 + self.params.followup_rounds
    }

    fn round(&mut self, ctx: &mut RoundContext<'_>) {
        alg1_round(ctx, &self.params, &mut self.state);
    }
}
