//! Deterministic virtual-time discrete-event kernel.
//!
//! Events are opaque action descriptors of type `A`. The kernel orders them by
//! `(fire_at, sequence)` where `sequence` is assigned at scheduling time, so
//! the execution order is total and independent of the host.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nanoseconds since scenario start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VirtualTime(u64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0);
    pub const MAX: VirtualTime = VirtualTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        VirtualTime(ns)
    }

    pub const fn from_millis(ms: u64) -> Self {
        VirtualTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        VirtualTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond. Negative or NaN input clamps to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s > 0.0) {
            return VirtualTime::ZERO;
        }
        VirtualTime((s * 1e9).round() as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: VirtualTime) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(other.0))
    }
}

impl Add<Duration> for VirtualTime {
    type Output = VirtualTime;

    fn add(self, rhs: Duration) -> VirtualTime {
        VirtualTime(self.0 + rhs.as_nanos() as u64)
    }
}

impl Sub for VirtualTime {
    type Output = Duration;

    /// Panics if `rhs` is later than `self`.
    fn sub(self, rhs: VirtualTime) -> Duration {
        Duration::from_nanos(
            self.0
                .checked_sub(rhs.0)
                .expect("virtual time subtraction underflow"),
        )
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("cannot schedule at {at} which is before now ({now})")]
    InThePast { at: VirtualTime, now: VirtualTime },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelStats {
    pub events_fired: u64,
    pub final_time: VirtualTime,
    pub wall_clock_elapsed: Duration,
}

#[derive(Debug)]
pub struct ScheduledEvent<A> {
    pub fire_at: VirtualTime,
    pub sequence: u64,
    pub action: A,
}

impl<A> PartialEq for ScheduledEvent<A> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.sequence == other.sequence
    }
}

impl<A> Eq for ScheduledEvent<A> {}

impl<A> PartialOrd for ScheduledEvent<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for ScheduledEvent<A> {
    // Reversed so that BinaryHeap behaves as a min-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.sequence).cmp(&(self.fire_at, self.sequence))
    }
}

pub struct Kernel<A> {
    now: VirtualTime,
    next_sequence: u64,
    calendar: BinaryHeap<ScheduledEvent<A>>,
    cancelled: HashSet<u64>,
    events_fired: u64,
    rng: ChaCha8Rng,
    wall_clock: Duration,
}

impl<A> fmt::Debug for Kernel<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("now", &self.now)
            .field("pending", &self.pending())
            .field("events_fired", &self.events_fired)
            .finish()
    }
}

impl<A> Kernel<A> {
    pub fn new(seed: u64) -> Self {
        Kernel {
            now: VirtualTime::ZERO,
            next_sequence: 0,
            calendar: BinaryHeap::new(),
            cancelled: HashSet::new(),
            events_fired: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            wall_clock: Duration::ZERO,
        }
    }

    #[inline]
    pub fn now(&self) -> VirtualTime {
        self.now
    }

    /// The only source of randomness inside a simulation.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn events_fired(&self) -> u64 {
        self.events_fired
    }

    /// Number of scheduled events that have neither fired nor been cancelled.
    pub fn pending(&self) -> usize {
        self.calendar.len() - self.cancelled.len()
    }

    pub fn schedule(&mut self, action: A, at: VirtualTime) -> Result<EventHandle, KernelError> {
        if at < self.now {
            return Err(KernelError::InThePast { at, now: self.now });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.calendar.push(ScheduledEvent {
            fire_at: at,
            sequence,
            action,
        });
        Ok(EventHandle(sequence))
    }

    pub fn schedule_in(&mut self, action: A, delay: Duration) -> EventHandle {
        let at = self.now + delay;
        self.schedule(action, at)
            .expect("a non-negative delay is never in the past")
    }

    /// Returns true iff the event had not fired yet and is now removed.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        let seq = handle.0;
        if seq >= self.next_sequence || self.cancelled.contains(&seq) {
            return false;
        }
        if !self.calendar.iter().any(|e| e.sequence == seq) {
            return false;
        }
        self.cancelled.insert(seq)
    }

    /// Pops the next event due at or before `t_end` and advances `now` to it.
    pub fn next_due(&mut self, t_end: VirtualTime) -> Option<ScheduledEvent<A>> {
        loop {
            let head = self.calendar.peek()?;
            if head.fire_at > t_end {
                return None;
            }
            let event = self.calendar.pop().expect("peeked");
            if self.cancelled.remove(&event.sequence) {
                continue;
            }
            debug_assert!(event.fire_at >= self.now);
            self.now = event.fire_at;
            self.events_fired += 1;
            return Some(event);
        }
    }

    /// Sets `now` to `t_end` after the caller has drained every due event.
    pub fn finish_at(&mut self, t_end: VirtualTime) {
        if t_end > self.now {
            self.now = t_end;
        }
    }

    pub fn add_wall_clock(&mut self, elapsed: Duration) {
        self.wall_clock += elapsed;
    }

    pub fn stats(&self) -> KernelStats {
        KernelStats {
            events_fired: self.events_fired,
            final_time: self.now,
            wall_clock_elapsed: self.wall_clock,
        }
    }

    /// Fires every event due at or before `t_end` in `(fire_at, sequence)`
    /// order. The handler may schedule further events, including at `now`.
    pub fn run_until<F>(&mut self, t_end: VirtualTime, mut handler: F) -> KernelStats
    where
        F: FnMut(&mut Kernel<A>, A),
    {
        let started = Instant::now();
        let t_end = t_end.max(self.now);
        while let Some(event) = self.next_due(t_end) {
            handler(self, event.action);
        }
        self.finish_at(t_end);
        self.add_wall_clock(started.elapsed());
        self.stats()
    }

    /// Pending events in firing order, for inspection.
    pub fn calendar(&self) -> Vec<(VirtualTime, u64)> {
        let mut out: BTreeMap<(VirtualTime, u64), ()> = BTreeMap::new();
        for e in self.calendar.iter() {
            if !self.cancelled.contains(&e.sequence) {
                out.insert((e.fire_at, e.sequence), ());
            }
        }
        out.into_keys().collect()
    }
}
