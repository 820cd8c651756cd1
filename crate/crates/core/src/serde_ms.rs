//! `Duration` as a (possibly fractional) number of milliseconds.

use std::time::Duration;

use serde::{Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    let nanos = d.as_nanos();
    if nanos % 1_000_000 == 0 {
        s.serialize_u64((nanos / 1_000_000) as u64)
    } else {
        s.serialize_f64(nanos as f64 / 1e6)
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
    let ms = f64::deserialize(d)?;
    if !ms.is_finite() || ms < 0.0 {
        return Err(serde::de::Error::custom(format!(
            "duration must be a non-negative number of milliseconds, got {ms}"
        )));
    }
    Ok(Duration::from_nanos((ms * 1e6).round() as u64))
}
