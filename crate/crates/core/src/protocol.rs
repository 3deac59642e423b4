//! In-home control protocol between the base station and the relay boards:
//! broadcast frames, slotted acks, retries over a lossy link, and the power
//! drawn by the boards themselves.

use rand::Rng;

use crate::error::{Error, Result};

pub const RELAYS_PER_DEVICE: usize = 5;

/// Broadcast command: one byte per device, device ids start at 1. Bits 0-4
/// of a byte are that device's relays; a set bit means the relay conducts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlFrame {
    pub bytes: Vec<u8>,
}

impl ControlFrame {
    pub fn device_count(&self) -> usize {
        self.bytes.len()
    }
}

pub fn encode<D: AsRef<[bool]>>(devices: &[D]) -> Result<ControlFrame> {
    let bytes = devices
        .iter()
        .enumerate()
        .map(|(i, relays)| {
            let relays = relays.as_ref();
            if relays.len() != RELAYS_PER_DEVICE {
                return Err(Error::RelayCount {
                    device: i + 1,
                    len: relays.len(),
                });
            }
            Ok(relays
                .iter()
                .enumerate()
                .fold(0u8, |b, (bit, &on)| if on { b | (1 << bit) } else { b }))
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok(ControlFrame { bytes })
}

pub fn decode(frame: &ControlFrame, device_id: usize) -> Result<[bool; RELAYS_PER_DEVICE]> {
    if device_id == 0 || device_id > frame.bytes.len() {
        return Err(Error::DeviceOutOfRange {
            id: device_id,
            devices: frame.bytes.len(),
        });
    }
    let byte = frame.bytes[device_id - 1];
    Ok(std::array::from_fn(|bit| byte & (1 << bit) != 0))
}

/// Link parameters for the base station and its boards.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    /// `(distance m, PRR)` points, ascending distance.
    pub prr_by_distance: Vec<(f64, f64)>,
    pub retries: u32,
    pub ack_slot_ms: f64,
    pub base_timeout_ms: f64,
    pub sw_latency_ms: f64,
    pub sw_latency_worst_ms: f64,
    pub hw_latency_ms: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            prr_by_distance: vec![(10.0, 1.0), (25.0, 0.98), (50.0, 0.50)],
            retries: 3,
            ack_slot_ms: 5.0,
            base_timeout_ms: 21.0,
            sw_latency_ms: 2.0,
            sw_latency_worst_ms: 8.0,
            hw_latency_ms: 28.0,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        if self.prr_by_distance.is_empty() {
            return Err(Error::Config("PRR table is empty".into()));
        }
        if self
            .prr_by_distance
            .iter()
            .any(|&(_, p)| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::Config("PRR values must lie in [0, 1]".into()));
        }
        if self.prr_by_distance.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config("PRR table distances must be strictly ascending".into()));
        }
        let times = [
            self.ack_slot_ms,
            self.base_timeout_ms,
            self.sw_latency_ms,
            self.sw_latency_worst_ms,
            self.hw_latency_ms,
        ];
        if times.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("protocol timings must be nonnegative".into()));
        }
        Ok(())
    }

    /// PRR at `distance_m`, linearly interpolated and clamped to the table.
    pub fn prr_at(&self, distance_m: f64) -> f64 {
        let table = &self.prr_by_distance;
        let (first, last) = (table[0], table[table.len() - 1]);
        if distance_m <= first.0 {
            return first.1;
        }
        if distance_m >= last.0 {
            return last.1;
        }
        let i = table.partition_point(|&(d, _)| d < distance_m);
        let ((d0, p0), (d1, p1)) = (table[i - 1], table[i]);
        p0 + (p1 - p0) * (distance_m - d0) / (d1 - d0)
    }

    /// Offset of a device's ack slot after the broadcast.
    pub fn ack_slot(&self, device_id: usize) -> f64 {
        device_id.saturating_sub(1) as f64 * self.ack_slot_ms
    }

    /// Per-attempt wait before retrying. The configured base timeout is
    /// stretched when the ack slots of all devices do not fit in it.
    pub fn timeout_ms(&self, devices: usize) -> f64 {
        self.base_timeout_ms.max(devices as f64 * self.ack_slot_ms)
    }

    /// End-to-end latency of a first-attempt delivery on the typical path.
    pub fn typical_latency_ms(&self) -> f64 {
        self.sw_latency_ms + self.hw_latency_ms
    }

    pub fn worst_case_latency_ms(&self) -> f64 {
        self.sw_latency_worst_ms + self.hw_latency_ms
    }
}

/// Ack slot offset with the default 5 ms slots.
pub fn ack_slot(device_id: usize) -> f64 {
    LinkModel::default().ack_slot(device_id)
}

/// Probability that a command and its ack both get through within
/// `1 + retries` attempts, each direction succeeding independently.
pub fn delivery_probability(prr: f64, retries: u32) -> f64 {
    1.0 - (1.0 - prr * prr).powi(retries as i32 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    Delivered { attempts: u32, latency_ms: f64 },
    Nack { attempts: u32, elapsed_ms: f64 },
}

impl Delivery {
    pub fn is_delivered(&self) -> bool {
        matches!(self, Delivery::Delivered { .. })
    }
}

/// Sends `frame` with retries. A failed attempt costs one timeout; the
/// successful attempt costs the software plus hardware latency.
pub fn deliver<R: Rng + ?Sized>(
    frame: &ControlFrame,
    link: &LinkModel,
    distance_m: f64,
    rng: &mut R,
) -> Delivery {
    let prr = link.prr_at(distance_m);
    let timeout = link.timeout_ms(frame.device_count());
    let attempts = link.retries + 1;
    let mut elapsed = 0.0;
    for attempt in 1..=attempts {
        let command_ok = rng.random::<f64>() < prr;
        let ack_ok = rng.random::<f64>() < prr;
        if command_ok && ack_ok {
            return Delivery::Delivered {
                attempts: attempt,
                latency_ms: elapsed + link.typical_latency_ms(),
            };
        }
        elapsed += timeout;
    }
    Delivery::Nack {
        attempts,
        elapsed_ms: elapsed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceKind {
    /// Main board device at the distribution box.
    Mbd,
    /// Switch board device in a room.
    Sbd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceProfile {
    pub kind: DeviceKind,
    pub power_active_w: f64,
    pub power_shed_w: f64,
}

impl DeviceProfile {
    pub fn of(kind: DeviceKind) -> Self {
        let power_active_w = match kind {
            DeviceKind::Mbd => 0.36,
            DeviceKind::Sbd => 0.40,
        };
        DeviceProfile {
            kind,
            power_active_w,
            power_shed_w: 0.10,
        }
    }

    pub fn power(&self, shed: bool) -> f64 {
        if shed {
            self.power_shed_w
        } else {
            self.power_active_w
        }
    }
}

/// Power drawn by one MBD plus one SBD per room.
pub fn overhead_power(rooms: usize, shed: bool) -> f64 {
    let sbd = DeviceProfile::of(DeviceKind::Sbd).power(shed);
    let mbd = DeviceProfile::of(DeviceKind::Mbd).power(shed);
    rooms as f64 * sbd + mbd
}

/// How level commands to Aashiyana homes are subjected to link loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmulationMode {
    /// One Bernoulli trial per command at the analytic delivery probability.
    Summary,
    /// Every attempt, ack and timeout is emulated.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlChannel {
    pub link: LinkModel,
    pub distance_m: f64,
    pub rooms: usize,
    pub mode: EmulationMode,
}

impl Default for ControlChannel {
    fn default() -> Self {
        ControlChannel {
            link: LinkModel::default(),
            distance_m: 10.0,
            rooms: 4,
            mode: EmulationMode::Summary,
        }
    }
}

impl ControlChannel {
    pub fn success_probability(&self) -> f64 {
        delivery_probability(self.link.prr_at(self.distance_m), self.link.retries)
    }

    /// Whether a level command reaches the home. Perfect links consume no
    /// randomness.
    pub fn command<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        let p = self.success_probability();
        if p >= 1.0 {
            return true;
        }
        match self.mode {
            EmulationMode::Summary => rng.random::<f64>() < p,
            EmulationMode::Full => {
                let frame = ControlFrame {
                    bytes: vec![0; self.rooms + 1],
                };
                deliver(&frame, &self.link, self.distance_m, rng).is_delivered()
            }
        }
    }
}
