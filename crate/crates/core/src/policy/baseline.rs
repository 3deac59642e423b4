use super::{cut_groups, LevelAssignment, LoadPolicy, PolicyKind, RoundContext};
use crate::home::{Home, PowerLevel};
use crate::topology::Topology;

/// Round-robin cursor over feeder groups. Persists across hours.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BaselineRotation {
    pub next_group_index: usize,
    /// Groups cut by the most recent call.
    pub blacked_out: Vec<usize>,
}

/// Cyclic blackout: from all-`L5`, black out whole groups starting at the
/// cursor until served demand fits `capacity`. The cursor moves one group
/// per call so the burden rotates hour to hour.
pub fn baseline_step(
    rotation: &mut BaselineRotation,
    topology: &Topology,
    homes: &mut [Home],
    capacity: f64,
) -> LevelAssignment {
    for h in homes.iter_mut() {
        h.level = PowerLevel::L5;
    }
    cut_groups(rotation, topology, homes, capacity, |_| true);
    LevelAssignment::of(homes)
}

#[derive(Debug, Default)]
pub struct BaselinePolicy {
    pub rotation: BaselineRotation,
}

impl LoadPolicy for BaselinePolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Baseline
    }

    fn pass_len(&self, _topology: &Topology) -> usize {
        1
    }

    fn round(&mut self, ctx: &mut RoundContext<'_>) {
        // the schedule is fixed for the hour on its first round
        if ctx.round == 1 && !ctx.emergency {
            baseline_step(&mut self.rotation, ctx.topology, ctx.homes, ctx.capacity);
        } else {
            cut_groups(&mut self.rotation, ctx.topology, ctx.homes, ctx.capacity, |_| true);
        }
    }
}
