//! Home agents, the five power levels, disconnectivity matrices and the
//! per-level utility function.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Home power state. `L1` is full disconnection, `L5` unrestricted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PowerLevel {
    L1,
    L2,
    L3,
    L4,
    L5,
}

impl PowerLevel {
    pub const ALL: [PowerLevel; 5] = [
        PowerLevel::L1,
        PowerLevel::L2,
        PowerLevel::L3,
        PowerLevel::L4,
        PowerLevel::L5,
    ];

    /// Levels a home can be throttled to without being cut off.
    pub const RESTRICTED: [PowerLevel; 3] = [PowerLevel::L4, PowerLevel::L3, PowerLevel::L2];

    /// Fraction of the home's rated capacity allowed at this level.
    pub fn cap_fraction(self) -> f64 {
        match self {
            PowerLevel::L1 => 0.0,
            PowerLevel::L2 => 0.25,
            PowerLevel::L3 => 0.5,
            PowerLevel::L4 => 0.75,
            PowerLevel::L5 => 1.0,
        }
    }

    /// Zero-based position, `L1 -> 0` ... `L5 -> 4`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<PowerLevel> {
        PowerLevel::ALL.get(index).copied()
    }

    /// One level lower, saturating at `L1`.
    pub fn step_down(self) -> PowerLevel {
        PowerLevel::from_index(self.index().saturating_sub(1)).unwrap_or(PowerLevel::L1)
    }

    pub fn is_shed(self) -> bool {
        self != PowerLevel::L5
    }
}

impl fmt::Display for PowerLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.index() + 1)
    }
}

/// Meter class of a home.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HomeClass {
    A,
    B,
    C,
}

impl HomeClass {
    pub const ALL: [HomeClass; 3] = [HomeClass::A, HomeClass::B, HomeClass::C];

    /// Meter rating in watts.
    pub fn rating(self) -> f64 {
        match self {
            HomeClass::A => 500.0,
            HomeClass::B => 750.0,
            HomeClass::C => 1000.0,
        }
    }

    pub fn appliance_count(self) -> usize {
        match self {
            HomeClass::A => 7,
            HomeClass::B => 10,
            HomeClass::C => 13,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for HomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self {
            HomeClass::A => "A",
            HomeClass::B => "B",
            HomeClass::C => "C",
        };
        f.write_str(label)
    }
}

impl FromStr for HomeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(HomeClass::A),
            "B" | "b" => Ok(HomeClass::B),
            "C" | "c" => Ok(HomeClass::C),
            other => Err(Error::Corpus(format!("unknown home class {other:?}"))),
        }
    }
}

/// Appliances disconnected at each intermediate level. `L5` disconnects
/// nothing and `L1` everything, so neither is stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisconnectivityMatrix {
    appliances: usize,
    // indexed L2, L3, L4
    disconnected: [Vec<usize>; 3],
}

impl DisconnectivityMatrix {
    pub fn disconnected(&self, level: PowerLevel) -> Vec<usize> {
        match level {
            PowerLevel::L1 => (0..self.appliances).collect(),
            PowerLevel::L5 => Vec::new(),
            other => self.disconnected[other.index() - 1].clone(),
        }
    }

    pub fn is_connected(&self, level: PowerLevel, appliance: usize) -> bool {
        match level {
            PowerLevel::L1 => false,
            PowerLevel::L5 => true,
            other => !self.disconnected[other.index() - 1].contains(&appliance),
        }
    }

    pub fn appliance_count(&self) -> usize {
        self.appliances
    }
}

/// Builds a disconnectivity matrix by switching off the largest-rated
/// appliances first until the connected rated draw fits each level's cap.
/// Among equal ratings the lower index stays connected.
pub fn build_dm(class: HomeClass, appliance_ratings: &[f64]) -> DisconnectivityMatrix {
    let mut order: Vec<usize> = (0..appliance_ratings.len()).collect();
    order.sort_by(|&a, &b| {
        appliance_ratings[b]
            .total_cmp(&appliance_ratings[a])
            .then(b.cmp(&a))
    });
    let total: f64 = appliance_ratings.iter().sum();

    let mut disconnected: [Vec<usize>; 3] = Default::default();
    for level in [PowerLevel::L2, PowerLevel::L3, PowerLevel::L4] {
        let cap = level.cap_fraction() * class.rating();
        let mut remaining = total;
        let mut off = Vec::new();
        for &idx in &order {
            if remaining <= cap {
                break;
            }
            remaining -= appliance_ratings[idx];
            off.push(idx);
        }
        off.sort_unstable();
        disconnected[level.index() - 1] = off;
    }
    DisconnectivityMatrix {
        appliances: appliance_ratings.len(),
        disconnected,
    }
}

/// Per-home state used by the distributed back-off algorithm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Alg1State {
    /// Stress level remembered from the home's first back-off this hour.
    pub sl_init: Option<f64>,
    pub dlc_done: bool,
    /// The home ended the previous hour below `L5`.
    pub ls_lh: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Home {
    pub id: usize,
    pub class: HomeClass,
    pub aashiyana: bool,
    pub feeder_id: usize,
    pub transformer_id: usize,
    pub level: PowerLevel,
    pub dm: DisconnectivityMatrix,
    pub alg1: Alg1State,
    hour_draws: Vec<f64>,
    level_watts: [f64; 5],
}

impl Home {
    pub fn new(
        id: usize,
        class: HomeClass,
        aashiyana: bool,
        feeder_id: usize,
        transformer_id: usize,
        dm: DisconnectivityMatrix,
    ) -> Self {
        Home {
            id,
            class,
            aashiyana,
            feeder_id,
            transformer_id,
            level: PowerLevel::L5,
            dm,
            alg1: Alg1State::default(),
            hour_draws: Vec::new(),
            level_watts: [0.0; 5],
        }
    }

    pub fn hour_draws(&self) -> &[f64] {
        &self.hour_draws
    }

    /// Installs this hour's per-appliance average draws.
    pub fn set_hour_draws(&mut self, draws: Vec<f64>) {
        for level in PowerLevel::ALL {
            self.level_watts[level.index()] = draws
                .iter()
                .enumerate()
                .filter(|&(i, _)| self.dm.is_connected(level, i))
                .map(|(_, w)| w)
                .sum();
        }
        self.hour_draws = draws;
    }

    /// Draw at `level` given this hour's appliance draws.
    pub fn consumption(&self, level: PowerLevel) -> f64 {
        self.level_watts[level.index()]
    }

    pub fn current_consumption(&self) -> f64 {
        self.consumption(self.level)
    }

    pub fn rating(&self) -> f64 {
        self.class.rating()
    }
}

/// Free-function form of [`Home::consumption`].
pub fn consumption(home: &Home, level: PowerLevel) -> f64 {
    home.consumption(level)
}

/// Utility parameters `(u_max, th_u, th_l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityParams {
    pub u_max: f64,
    pub th_u: f64,
    pub th_l: f64,
}

impl UtilityParams {
    pub fn new(u_max: f64, th_u: f64, th_l: f64) -> Result<Self> {
        if !(u_max >= th_u && th_u >= th_l && th_l >= 0.0) || !u_max.is_finite() {
            return Err(Error::Config(format!(
                "utility parameters must satisfy u_max >= th_u >= th_l >= 0, got ({u_max}, {th_u}, {th_l})"
            )));
        }
        Ok(UtilityParams { u_max, th_u, th_l })
    }
}

impl Default for UtilityParams {
    fn default() -> Self {
        UtilityParams {
            u_max: 1.0,
            th_u: 0.6,
            th_l: 0.4,
        }
    }
}

pub fn utility(level: PowerLevel, p: &UtilityParams) -> f64 {
    match level {
        PowerLevel::L5 => p.u_max,
        PowerLevel::L4 => p.th_u,
        PowerLevel::L3 => (p.th_u + p.th_l) / 2.0,
        PowerLevel::L2 => p.th_l,
        PowerLevel::L1 => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn home_with(class: HomeClass, ratings: &[f64], draws: Vec<f64>) -> Home {
        let dm = build_dm(class, ratings);
        let mut h = Home::new(0, class, true, 0, 0, dm);
        h.set_hour_draws(draws);
        h
    }

    #[test]
    fn cap_fractions_strictly_increase() {
        for pair in PowerLevel::ALL.windows(2) {
            assert!(pair[0].cap_fraction() < pair[1].cap_fraction());
        }
        assert_eq!(PowerLevel::ALL.len(), 5);
    }

    #[test]
    fn step_down_saturates() {
        assert_eq!(PowerLevel::L3.step_down(), PowerLevel::L2);
        assert_eq!(PowerLevel::L1.step_down(), PowerLevel::L1);
    }

    #[test]
    fn equal_ratings_keep_two_at_l3() {
        let dm = build_dm(HomeClass::A, &[100.0; 5]);
        assert_eq!(dm.disconnected(PowerLevel::L3), vec![2, 3, 4]);

        // exhaustive: no 3-subset fits under 250 W, every 2-subset does
        let ratings = [100.0; 5];
        for mask in 0u32..32 {
            let sum: f64 = (0..5).filter(|i| mask & (1 << i) != 0).map(|i| ratings[i]).sum();
            assert_eq!(sum <= 250.0, mask.count_ones() <= 2);
        }
    }

    #[test]
    fn single_large_appliance_forced_off() {
        let dm = build_dm(HomeClass::A, &[500.0]);
        assert_eq!(dm.disconnected(PowerLevel::L2), vec![0]);
        let h = home_with(HomeClass::A, &[500.0], vec![480.0]);
        assert_eq!(h.consumption(PowerLevel::L2), 0.0);
    }

    #[test]
    fn l5_disconnects_nothing_and_l1_everything() {
        let dm = build_dm(HomeClass::B, &[50.0; 10]);
        assert!(dm.disconnected(PowerLevel::L5).is_empty());
        assert_eq!(dm.disconnected(PowerLevel::L1).len(), 10);
    }

    #[test]
    fn dm_caps_hold_on_ratings() {
        let ratings = [80.0, 60.0, 150.0, 20.0, 95.0, 35.0, 40.0];
        let dm = build_dm(HomeClass::A, &ratings);
        for level in PowerLevel::RESTRICTED {
            let kept: f64 = (0..ratings.len())
                .filter(|&i| dm.is_connected(level, i))
                .map(|i| ratings[i])
                .sum();
            assert!(kept <= level.cap_fraction() * 500.0);
        }
        assert_eq!(dm, build_dm(HomeClass::A, &ratings));
    }

    #[test]
    fn consumption_by_level() {
        let ratings = [100.0; 5];
        let h = home_with(HomeClass::A, &ratings, vec![90.0, 80.0, 70.0, 60.0, 50.0]);
        assert_eq!(h.consumption(PowerLevel::L1), 0.0);
        assert_eq!(h.consumption(PowerLevel::L5), 350.0);
        assert!(h.consumption(PowerLevel::L3) <= 250.0);
        assert_eq!(h.consumption(PowerLevel::L3), 170.0);
    }

    #[test]
    fn utility_values() {
        let p = UtilityParams::default();
        assert_eq!(utility(PowerLevel::L5, &p), 1.0);
        assert!((utility(PowerLevel::L3, &p) - 0.5).abs() < 1e-12);
        assert_eq!(utility(PowerLevel::L1, &p), 0.0);
        assert_eq!(utility(PowerLevel::L4, &p), 0.6);
        assert_eq!(utility(PowerLevel::L2, &p), 0.4);
    }

    #[test]
    fn utility_params_validated() {
        assert!(UtilityParams::new(1.0, 0.6, 0.4).is_ok());
        assert!(UtilityParams::new(0.5, 0.6, 0.4).is_err());
        assert!(UtilityParams::new(1.0, 0.3, 0.4).is_err());
        assert!(UtilityParams::new(1.0, 0.6, -0.1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn utility_nonincreasing_downwards(th_l in 0.0f64..1.0, du in 0.0f64..1.0, dm in 0.0f64..1.0) {
            let p = UtilityParams::new(th_l + du + dm, th_l + du, th_l).unwrap();
            for pair in PowerLevel::ALL.windows(2) {
                proptest::prop_assert!(utility(pair[0], &p) <= utility(pair[1], &p));
            }
        }

        #[test]
        fn dm_is_deterministic_and_respects_caps(
            ratings in proptest::collection::vec(1.0f64..300.0, 7),
        ) {
            let a = build_dm(HomeClass::A, &ratings);
            proptest::prop_assert_eq!(&a, &build_dm(HomeClass::A, &ratings));
            for level in PowerLevel::RESTRICTED {
                let kept: f64 = (0..7).filter(|&i| a.is_connected(level, i)).map(|i| ratings[i]).sum();
                proptest::prop_assert!(kept <= level.cap_fraction() * 500.0 + 1e-9);
            }
        }
    }
}
