use rand::Rng;

use super::{eligible_lower_levels, LevelAssignment, LoadPolicy, PolicyKind, RoundContext};
use crate::home::PowerLevel;
use crate::topology::Topology;

/// Round-robin cursor of the centralized policy. Persists across hours.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CentralizedState {
    pub next_group_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub assignment: LevelAssignment,
    /// Group handled by this step, if any.
    pub group: Option<usize>,
    /// Individual level changes made.
    pub changes: usize,
    /// Gap left after the step; positive means the group was exhausted.
    pub remaining_gap: f64,
}

impl StepReport {
    pub fn exhausted(&self) -> bool {
        self.remaining_gap > 0.0
    }
}

/// One step of the centralized policy on the next group in rotation.
///
/// Non-Aashiyana homes of the group are cut first. While the gap persists,
/// the group's Aashiyana homes are visited from highest to lowest current
/// consumption (lower id first on ties) and each is moved to a level picked
/// uniformly among those below its consumption, never below `L2` outside
/// an emergency. Homes shed last hour are skipped unless in emergency.
pub fn alg2_step(ctx: &mut RoundContext<'_>, state: &mut CentralizedState) -> StepReport {
    let mut gap = ctx.served() - ctx.capacity;
    if gap <= 0.0 {
        return StepReport {
            assignment: LevelAssignment::of(ctx.homes),
            group: None,
            changes: 0,
            remaining_gap: gap,
        };
    }
    let groups = ctx.topology.group_count();
    let group = state.next_group_index % groups;
    state.next_group_index = (group + 1) % groups;
    let members = ctx.topology.group_homes(group);
    let mut changes = 0;

    for &id in members {
        let home = &mut ctx.homes[id];
        if !home.aashiyana && home.level != PowerLevel::L1 {
            gap -= home.current_consumption();
            home.level = PowerLevel::L1;
            changes += 1;
        }
    }

    if gap > 0.0 {
        let mut order: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&id| {
                let h = &ctx.homes[id];
                h.aashiyana && (ctx.emergency || !h.alg1.ls_lh)
            })
            .collect();
        order.sort_by(|&a, &b| {
            ctx.homes[b]
                .current_consumption()
                .total_cmp(&ctx.homes[a].current_consumption())
                .then(a.cmp(&b))
        });
        for id in order {
            let home = &ctx.homes[id];
            let current = home.current_consumption();
            let mut choices = eligible_lower_levels(current / home.rating());
            if ctx.emergency && current > 0.0 {
                choices.push(PowerLevel::L1);
            }
            choices.retain(|&l| l < home.level);
            if choices.is_empty() {
                continue;
            }
            let pick = choices[ctx.rng.random_range(0..choices.len())];
            let saved = ctx.commander.set_level(&mut ctx.homes[id], pick);
            if saved > 0.0 {
                changes += 1;
                gap -= saved;
            }
            if gap <= 0.0 {
                break;
            }
        }
    }

    StepReport {
        assignment: LevelAssignment::of(ctx.homes),
        group: Some(group),
        changes,
        remaining_gap: gap,
    }
}

#[derive(Debug, Default)]
pub struct CentralizedPolicy {
    pub state: CentralizedState,
}

impl LoadPolicy for CentralizedPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Centralized
    }

    fn pass_len(&self, topology: &Topology) -> usize {
        topology.group_count()
    }

    fn round(&mut self, ctx: &mut RoundContext<'_>) {
        alg2_step(ctx, &mut self.state);
    }
}
