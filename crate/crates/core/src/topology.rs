//! DISCO distribution tree: grid stations, feeders, transformers and homes,
//! plus the feeder groups used for group-level shedding.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::ClassCatalog;
use crate::error::{Error, Result};
use crate::home::{Home, HomeClass, PowerLevel};

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    pub homes: usize,
    pub feeders: usize,
    pub group_size: usize,
    pub transformers_per_feeder: usize,
    pub grid_stations: usize,
    /// Proportions of class A, B and C homes.
    pub class_mix: [f64; 3],
    /// Aashiyana penetration as a fraction of homes.
    pub ap: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            homes: 1000,
            feeders: 50,
            group_size: 10,
            transformers_per_feeder: 4,
            grid_stations: 1,
            class_mix: [1.0 / 3.0; 3],
            ap: 0.0,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.homes == 0 {
            return Err(Error::Topology("zero homes".into()));
        }
        if self.feeders == 0 {
            return Err(Error::Topology("zero feeders".into()));
        }
        if self.group_size == 0 || self.transformers_per_feeder == 0 || self.grid_stations == 0 {
            return Err(Error::Topology(
                "group_size, transformers_per_feeder and grid_stations must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.ap) {
            return Err(Error::Topology(format!("penetration {} outside [0, 1]", self.ap)));
        }
        let sum: f64 = self.class_mix.iter().sum();
        if self.class_mix.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Topology(format!(
                "class mix {:?} must be nonnegative and sum to 1",
                self.class_mix
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feeder {
    pub id: usize,
    pub station: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub id: usize,
    pub feeder: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomeSite {
    pub id: usize,
    pub class: HomeClass,
    pub aashiyana: bool,
    pub transformer: usize,
    pub feeder: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederGroup {
    pub id: usize,
    pub feeder_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub grid_stations: Vec<usize>,
    pub feeders: Vec<Feeder>,
    pub transformers: Vec<Transformer>,
    pub homes: Vec<HomeSite>,
    pub groups: Vec<FeederGroup>,
    group_of_feeder: Vec<usize>,
    group_homes: Vec<Vec<usize>>,
}

/// Splits `total` into integer counts proportional to `weights` using
/// largest remainders; ties go to the earlier entry.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

impl Topology {
    /// Builds the tree. Class labels are exact quotas shuffled by the seed;
    /// exactly `round(ap * homes)` homes get Aashiyana, chosen by a seeded
    /// permutation that does not depend on `ap`, so raising the penetration
    /// only adds homes. Homes go round-robin onto transformers and
    /// transformers round-robin onto feeders.
    pub fn build(config: &TopologyConfig, seed: u64) -> Result<Topology> {
        config.validate()?;
        let n = config.homes;

        let mut class_rng = ChaCha8Rng::seed_from_u64(seed);
        class_rng.set_stream(1);
        let counts = apportion(n, &config.class_mix);
        let mut classes: Vec<HomeClass> = HomeClass::ALL
            .iter()
            .zip(&counts)
            .flat_map(|(&c, &k)| std::iter::repeat(c).take(k))
            .collect();
        classes.shuffle(&mut class_rng);

        let mut ap_rng = ChaCha8Rng::seed_from_u64(seed);
        ap_rng.set_stream(2);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ap_rng);
        let quota = (config.ap * n as f64).round() as usize;
        let mut aashiyana = vec![false; n];
        for &i in &order[..quota] {
            aashiyana[i] = true;
        }

        let grid_stations: Vec<usize> = (0..config.grid_stations).collect();
        let feeders: Vec<Feeder> = (0..config.feeders)
            .map(|id| Feeder {
                id,
                station: id % config.grid_stations,
            })
            .collect();
        let transformer_count = config.feeders * config.transformers_per_feeder;
        let transformers: Vec<Transformer> = (0..transformer_count)
            .map(|id| Transformer {
                id,
                feeder: id % config.feeders,
            })
            .collect();
        let homes: Vec<HomeSite> = (0..n)
            .map(|id| {
                let transformer = id % transformer_count;
                HomeSite {
                    id,
                    class: classes[id],
                    aashiyana: aashiyana[id],
                    transformer,
                    feeder: transformers[transformer].feeder,
                }
            })
            .collect();

        let groups: Vec<FeederGroup> = (0..config.feeders)
            .collect::<Vec<_>>()
            .chunks(config.group_size)
            .enumerate()
            .map(|(id, chunk)| FeederGroup {
                id,
                feeder_ids: chunk.to_vec(),
            })
            .collect();
        let group_of_feeder: Vec<usize> = (0..config.feeders).map(|f| f / config.group_size).collect();
        let mut group_homes = vec![Vec::new(); groups.len()];
        for h in &homes {
            group_homes[group_of_feeder[h.feeder]].push(h.id);
        }

        Ok(Topology {
            grid_stations,
            feeders,
            transformers,
            homes,
            groups,
            group_of_feeder,
            group_homes,
        })
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_of_feeder(&self, feeder: usize) -> usize {
        self.group_of_feeder[feeder]
    }

    /// Home ids served by a feeder group, ascending.
    pub fn group_homes(&self, group: usize) -> &[usize] {
        &self.group_homes[group]
    }

    pub fn aashiyana_count(&self) -> usize {
        self.homes.iter().filter(|h| h.aashiyana).count()
    }

    /// Creates home agents at `L5` with their class's disconnectivity matrix.
    pub fn instantiate_homes(&self, catalog: &ClassCatalog) -> Vec<Home> {
        self.homes
            .iter()
            .map(|site| {
                Home::new(
                    site.id,
                    site.class,
                    site.aashiyana,
                    site.feeder,
                    site.transformer,
                    catalog.profile(site.class).dm.clone(),
                )
            })
            .collect()
    }
}

/// Unconstrained demand `D` (everyone at `L5`) and the demand actually
/// served under the current levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demand {
    pub unconstrained: f64,
    pub served: f64,
}

pub fn demand(homes: &[Home]) -> Demand {
    homes.iter().fold(
        Demand {
            unconstrained: 0.0,
            served: 0.0,
        },
        |acc, h| Demand {
            unconstrained: acc.unconstrained + h.consumption(PowerLevel::L5),
            served: acc.served + h.current_consumption(),
        },
    )
}

/// Served demand if each home were at the level given in `levels`.
pub fn served_under(homes: &[Home], levels: &[PowerLevel]) -> f64 {
    homes.iter().zip(levels).map(|(h, &l)| h.consumption(l)).sum()
}

/// Percent of demand `d` not met by supply `s`, floored at zero.
pub fn stress_level(d: f64, s: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDemand(d));
    }
    Ok((100.0 * (d - s) / d).max(0.0))
}

/// DISCO-level supply for an hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupplyModel {
    /// Constant capacity in watts.
    FixedCapacity(f64),
    /// Capacity is `(1 - gap) * D`, recomputed from each hour's demand.
    FractionalGap(f64),
}

impl SupplyModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SupplyModel::FixedCapacity(c) if !(c >= 0.0) || !c.is_finite() => {
                Err(Error::Config(format!("capacity {c} must be a nonnegative number")))
            }
            SupplyModel::FractionalGap(g) if !(0.0..1.0).contains(&g) => {
                Err(Error::Config(format!("gap fraction {g} outside [0, 1)")))
            }
            _ => Ok(()),
        }
    }

    pub fn capacity(&self, unconstrained_demand: f64) -> f64 {
        match *self {
            SupplyModel::FixedCapacity(c) => c,
            SupplyModel::FractionalGap(g) => (1.0 - g) * unconstrained_demand,
        }
    }
}
