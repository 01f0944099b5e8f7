//! Millisecond UTC timestamps and their ISO 8601 rendering.

use chrono::{DateTime, NaiveDateTime, SecondsFormat, TimeZone, Utc};

use crate::error::{Error, Result};

/// Milliseconds since the Unix epoch, UTC.
pub type TimestampMs = i64;

pub const MS_PER_HOUR: i64 = 3_600_000;
pub const MS_PER_MINUTE: i64 = 60_000;
pub const MS_PER_DAY: i64 = 86_400_000;

/// `2026-10-15T08:00:00.000Z`
pub fn format_iso(ts: TimestampMs) -> String {
    match Utc.timestamp_millis_opt(ts).single() {
        Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Millis, true),
        None => ts.to_string(),
    }
}

/// Accepts RFC 3339 (`...Z` or with offset), a naive `YYYY-MM-DDTHH:MM:SS[.fff]`
/// taken as UTC, or a bare integer of epoch milliseconds.
pub fn parse_timestamp(text: &str) -> Result<TimestampMs> {
    let text = text.trim();
    if let Ok(ms) = text.parse::<i64>() {
        return Ok(ms);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Ok(dt.timestamp_millis());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(text, fmt) {
            return Ok(naive.and_utc().timestamp_millis());
        }
    }
    Err(Error::invalid(format!("unrecognised timestamp `{text}`")))
}

pub fn now_ms() -> TimestampMs {
    Utc::now().timestamp_millis()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iso_round_trip() {
        let ts = 1_760_515_200_123;
        let text = format_iso(ts);
        assert_eq!(text, "2025-10-15T08:00:00.123Z");
        assert_eq!(parse_timestamp(&text).unwrap(), ts);
        assert_eq!(parse_timestamp("2025-10-15T08:00:00.123").unwrap(), ts);
        assert_eq!(parse_timestamp("1760515200123").unwrap(), ts);
        assert!(parse_timestamp("yesterday").is_err());
    }
}
