//! Vehicle motion along waypoint routes, and synthetic sensor payloads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::{Route, Waypoint};
use crate::kernel::VirtualTime;

pub const SCHEMA_POSE: &str = "pose";
pub const SCHEMA_POINTS: &str = "points";

/// Wire size of an encoded [`Pose`].
pub const POSE_BYTES: usize = 36;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub vehicle_id: u32,
    pub t: VirtualTime,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    /// Little-endian `u32 id, u64 t_ns, f64 x, f64 y, f64 heading`.
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(POSE_BYTES);
        b.extend_from_slice(&self.vehicle_id.to_le_bytes());
        b.extend_from_slice(&self.t.as_nanos().to_le_bytes());
        b.extend_from_slice(&self.x.to_le_bytes());
        b.extend_from_slice(&self.y.to_le_bytes());
        b.extend_from_slice(&self.heading.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Option<Pose> {
        if b.len() != POSE_BYTES {
            return None;
        }
        let f = |r: std::ops::Range<usize>| f64::from_le_bytes(b[r].try_into().expect("8 bytes"));
        let pose = Pose {
            vehicle_id: u32::from_le_bytes(b[0..4].try_into().expect("4 bytes")),
            t: VirtualTime::from_nanos(u64::from_le_bytes(b[4..12].try_into().expect("8 bytes"))),
            x: f(12..20),
            y: f(20..28),
            heading: f(28..36),
        };
        (pose.x.is_finite() && pose.y.is_finite()).then_some(pose)
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MotionError {
    #[error("unknown vehicle {0}")]
    UnknownVehicle(u32),
    #[error("vehicle {0} has no lidar")]
    NoLidar(u32),
}

/// Precomputed legs of every vehicle's route.
#[derive(Clone, Debug)]
pub struct Fleet {
    routes: Vec<Vec<Leg>>,
}

#[derive(Clone, Copy, Debug)]
struct Leg {
    start: f64,
    end: f64,
    from: (f64, f64),
    to: (f64, f64),
    heading: f64,
}

impl Fleet {
    pub fn new(routes: &[Route]) -> Self {
        Fleet {
            routes: routes.iter().map(|r| legs(r)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    /// Position by linear interpolation along the route at constant per-leg
    /// speed; vehicles hold the final waypoint once the route ends.
    pub fn pose_at(&self, vehicle_id: u32, t: VirtualTime) -> Result<Pose, MotionError> {
        let legs = self
            .routes
            .get(vehicle_id as usize)
            .ok_or(MotionError::UnknownVehicle(vehicle_id))?;
        let s = t.as_secs_f64();
        let leg = legs
            .iter()
            .find(|l| s < l.end)
            .or(legs.last())
            .expect("routes have at least one leg");
        let frac = if s >= leg.end || leg.end <= leg.start {
            1.0
        } else {
            ((s - leg.start) / (leg.end - leg.start)).clamp(0.0, 1.0)
        };
        Ok(Pose {
            vehicle_id,
            t,
            x: leg.from.0 + (leg.to.0 - leg.from.0) * frac,
            y: leg.from.1 + (leg.to.1 - leg.from.1) * frac,
            heading: leg.heading,
        })
    }

    pub fn distance_at(&self, a: u32, b: u32, t: VirtualTime) -> Result<f64, MotionError> {
        Ok(self.pose_at(a, t)?.distance(&self.pose_at(b, t)?))
    }
}

fn legs(route: &[Waypoint]) -> Vec<Leg> {
    let mut out = vec![];
    let mut t = 0.0;
    for pair in route.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let len = (b.x - a.x).hypot(b.y - a.y);
        let dt = len / a.speed;
        out.push(Leg {
            start: t,
            end: t + dt,
            from: (a.x, a.y),
            to: (b.x, b.y),
            heading: (b.y - a.y).atan2(b.x - a.x),
        });
        t += dt;
    }
    if out.is_empty() {
        let w = route.first().copied().unwrap_or(Waypoint {
            x: 0.0,
            y: 0.0,
            speed: 0.0,
        });
        out.push(Leg {
            start: 0.0,
            end: 0.0,
            from: (w.x, w.y),
            to: (w.x, w.y),
            heading: 0.0,
        });
    }
    out
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic cloud of `points` `(x, y, z)` f32 triples, little-endian.
pub fn synth_cloud(seed: u64, vehicle_id: u32, t: VirtualTime, points: u32) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, u64::from(vehicle_id), t.as_nanos()));
    let mut out = Vec::with_capacity(points as usize * 12);
    for _ in 0..points {
        let x: f32 = rng.gen_range(-80.0..80.0);
        let y: f32 = rng.gen_range(-80.0..80.0);
        let z: f32 = rng.gen_range(-2.0..6.0);
        for v in [x, y, z] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Point clouds for the lidar-equipped vehicles `0..lidar_count`.
#[derive(Clone, Copy, Debug)]
pub struct Lidar {
    pub seed: u64,
    pub lidar_count: u32,
    pub points: u32,
}

impl Lidar {
    pub fn cloud(&self, vehicle_id: u32, t: VirtualTime) -> Result<Vec<u8>, MotionError> {
        if vehicle_id >= self.lidar_count {
            return Err(MotionError::NoLidar(vehicle_id));
        }
        Ok(synth_cloud(self.seed, vehicle_id, t, self.points))
    }
}

/// Number of `(x, y, z)` triples in an encoded cloud.
pub fn cloud_len(payload: &[u8]) -> usize {
    payload.len() / 12
}

/// Square area, waypoint count and speed range for generated routes.
#[derive(Clone, Copy, Debug)]
pub struct RouteShape {
    pub half_extent: f64,
    pub waypoints: (usize, usize),
    pub speed: (f64, f64),
}

impl Default for RouteShape {
    fn default() -> Self {
        RouteShape {
            half_extent: 2000.0,
            waypoints: (2, 4),
            speed: (8.0, 30.0),
        }
    }
}

/// Seeded random route for vehicle `id`.
pub fn random_route(seed: u64, id: u32, shape: RouteShape) -> Route {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x5EED_0000 + u64::from(id), 0));
    let n = rng.gen_range(shape.waypoints.0..=shape.waypoints.1);
    (0..n)
        .map(|_| Waypoint {
            x: rng.gen_range(-shape.half_extent..shape.half_extent),
            y: rng.gen_range(-shape.half_extent..shape.half_extent),
            speed: rng.gen_range(shape.speed.0..shape.speed.1),
        })
        .collect()
}
