//! Wall-clock injection point. The core crate cannot read time; callers
//! that want wall_ms in training logs pass a real clock, tests pass
//! [`NullClock`].

pub trait Clock {
    fn now_ms(&self) -> u64;
}

/// Always reports 0; training logs built with it have zero wall times.
pub struct NullClock;

impl Clock for NullClock {
    fn now_ms(&self) -> u64 {
        0
    }
}
