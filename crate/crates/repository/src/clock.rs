//! Injectable time and identifier sources, so ingestion can be scripted.

use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{Duration, Utc};
use didlkit_core::Timestamp;
use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};
use uuid::Uuid;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Utc::now()
    }
}

/// Always the same instant.
pub struct FixedClock(pub Timestamp);

impl Clock for FixedClock {
    fn now(&self) -> Timestamp {
        self.0
    }
}

/// `start`, `start + step`, `start + 2 step`, ... one value per call.
pub struct SteppingClock {
    start: Timestamp,
    step: Duration,
    calls: AtomicI64,
}

impl SteppingClock {
    pub fn new(start: Timestamp, step: Duration) -> Self {
        SteppingClock { start, step, calls: AtomicI64::new(0) }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> Timestamp {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        self.start + self.step * n as i32
    }
}

/// Source of version 4 UUIDs.
pub trait IdSource: Send + Sync {
    fn next_uuid(&self) -> Uuid;
}

pub struct RandomIds;

impl IdSource for RandomIds {
    fn next_uuid(&self) -> Uuid {
        Uuid::new_v4()
    }
}

/// Reproducible version 4 UUIDs from a seeded generator.
pub struct SeededIds(Mutex<StdRng>);

impl SeededIds {
    pub fn new(seed: u64) -> Self {
        SeededIds(Mutex::new(StdRng::seed_from_u64(seed)))
    }
}

impl IdSource for SeededIds {
    fn next_uuid(&self) -> Uuid {
        let mut bytes = [0u8; 16];
        self.0.lock().expect("id source poisoned").fill_bytes(&mut bytes);
        uuid::Builder::from_random_bytes(bytes).into_uuid()
    }
}

/// Counts upward from a fixed pattern. Handy for golden output; restarting
/// it against an existing store produces collisions by design.
pub struct SequentialIds(AtomicU64);

impl SequentialIds {
    pub fn new(start: u64) -> Self {
        SequentialIds(AtomicU64::new(start))
    }
}

impl IdSource for SequentialIds {
    fn next_uuid(&self) -> Uuid {
        let n = self.0.fetch_add(1, Ordering::SeqCst);
        let mut bytes = [0u8; 16];
        bytes[8..].copy_from_slice(&n.to_be_bytes());
        uuid::Builder::from_random_bytes(bytes).into_uuid()
    }
}
