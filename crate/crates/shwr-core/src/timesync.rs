//! Clock-offset estimation from request/response timestamp quadruples.
//!
//! A sync exchange records t1 (client send, local clock), t2/t3 (server
//! receive/send, reference clock) and t4 (client receive, local clock).
//! Per-exchange offset and round-trip time follow the classic two-message
//! formulas
//!
//! ```text
//! theta = ((t2 - t1) + (t3 - t4)) / 2      delta = (t4 - t1) - (t3 - t2)
//! ```
//!
//! and the estimate is taken from the minimum-delta exchange: with any
//! delay asymmetry the estimation error stays bounded by delta/2, and the
//! minimum-RTT sample is robust to asymmetric outliers. Offsets are applied
//! once at ingest; the store keeps UTC timestamps only.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("at least one exchange is required")]
    EmptyInput,
    #[error("negative round-trip time ({rtt_ms} ms) signals clock corruption")]
    NegativeRtt { rtt_ms: i64 },
    #[error("exchange timestamps must satisfy t2 <= t3 and t1 <= t4")]
    BadExchange,
}

/// One request/response timestamp quadruple. t1/t4 are on the client's
/// local clock, t2/t3 on the reference clock, all in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncExchange {
    pub t1: i64,
    pub t2: i64,
    pub t3: i64,
    pub t4: i64,
}

impl SyncExchange {
    pub fn new(t1: i64, t2: i64, t3: i64, t4: i64) -> Result<Self, SyncError> {
        if t2 > t3 || t1 > t4 {
            return Err(SyncError::BadExchange);
        }
        Ok(Self { t1, t2, t3, t4 })
    }

    /// Round-trip time minus server turnaround, ms.
    pub fn rtt_ms(&self) -> i64 {
        (self.t4 - self.t1) - (self.t3 - self.t2)
    }

    /// Offset numerator `(t2-t1)+(t3-t4)`; the estimate is half of this,
    /// rounded half away from zero.
    fn offset_numerator(&self) -> i64 {
        (self.t2 - self.t1) + (self.t3 - self.t4)
    }
}

/// Result of [`estimate_offset`]: the offset of the minimum-RTT exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OffsetEstimate {
    /// Clock offset to add to local timestamps, ms.
    pub offset_ms: i64,
    /// RTT of the selected exchange, ms.
    pub rtt_ms: i64,
}

/// Estimate the clock offset from one or more exchanges.
///
/// Selects the exchange with minimum RTT (ties broken by earliest t1) and
/// returns its offset, rounded half away from zero. Any exchange with a
/// negative RTT rejects the whole input as corrupt.
pub fn estimate_offset(exchanges: &[SyncExchange]) -> Result<OffsetEstimate, SyncError> {
    if exchanges.is_empty() {
        return Err(SyncError::EmptyInput);
    }
    let mut best: Option<&SyncExchange> = None;
    for ex in exchanges {
        let rtt = ex.rtt_ms();
        if rtt < 0 {
            return Err(SyncError::NegativeRtt { rtt_ms: rtt });
        }
        best = match best {
            None => Some(ex),
            Some(b) if (rtt, ex.t1) < (b.rtt_ms(), b.t1) => Some(ex),
            Some(b) => Some(b),
        };
    }
    let selected = best.expect("nonempty input");
    let n = selected.offset_numerator();
    let offset_ms = if n % 2 == 0 { n / 2 } else { (n + n.signum()) / 2 };
    Ok(OffsetEstimate { offset_ms, rtt_ms: selected.rtt_ms() })
}

/// Convert a device-local timestamp to UTC, saturating at the i64 range.
pub fn normalize(t_local_ms: i64, offset_ms: i64) -> i64 {
    t_local_ms.saturating_add(offset_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(t1: i64, t2: i64, t3: i64, t4: i64) -> SyncExchange {
        SyncExchange::new(t1, t2, t3, t4).unwrap()
    }

    #[test]
    fn single_exchange_formula() {
        let est = estimate_offset(&[ex(0, 105, 110, 20)]).unwrap();
        // theta = (105 + 90)/2 = 97.5, rounded half away from zero.
        assert_eq!(est.offset_ms, 98);
        assert_eq!(est.rtt_ms, 15);
    }

    #[test]
    fn symmetric_delay_recovers_true_offset() {
        // Client exactly 50 ms behind the reference, 10 ms each way.
        let est = estimate_offset(&[ex(0, 60, 60, 20)]).unwrap();
        assert_eq!(est.offset_ms, 50);
        assert_eq!(est.rtt_ms, 20);
    }

    #[test]
    fn selects_minimum_rtt_exchange() {
        // delta = 40 with offset 100 vs delta = 10 with offset 7.
        let noisy = ex(0, 120, 120, 40);
        let clean = ex(1000, 1012, 1012, 1010);
        assert_eq!(noisy.rtt_ms(), 40);
        assert_eq!(clean.rtt_ms(), 10);
        let est = estimate_offset(&[noisy, clean]).unwrap();
        assert_eq!(est.offset_ms, 7);
        assert_eq!(est.rtt_ms, 10);
    }

    #[test]
    fn rtt_tie_breaks_by_earliest_t1() {
        let a = ex(0, 30, 30, 20); // offset 20, rtt 20
        let b = ex(100, 140, 140, 120); // offset 30, rtt 20
        let est = estimate_offset(&[b, a]).unwrap();
        assert_eq!(est.offset_ms, 20);
    }

    #[test]
    fn negative_offset_rounds_away_from_zero() {
        // Client ~100 ms ahead of the reference: numerator
        // (103-200)+(104-206) = -199 -> -99.5 -> -100; rtt = 6-1 = 5.
        let est = estimate_offset(&[ex(200, 103, 104, 206)]).unwrap();
        assert_eq!(est.offset_ms, -100);
        assert_eq!(est.rtt_ms, 5);
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(estimate_offset(&[]).unwrap_err(), SyncError::EmptyInput);
    }

    #[test]
    fn negative_rtt_rejected() {
        // t4-t1 = 5 but server turnaround t3-t2 = 50.
        let bad = ex(0, 100, 150, 5);
        assert!(matches!(
            estimate_offset(&[bad]).unwrap_err(),
            SyncError::NegativeRtt { rtt_ms: -45 }
        ));
    }

    #[test]
    fn exchange_ordering_validated() {
        assert_eq!(SyncExchange::new(0, 10, 5, 20).unwrap_err(), SyncError::BadExchange);
        assert_eq!(SyncExchange::new(30, 10, 15, 20).unwrap_err(), SyncError::BadExchange);
    }

    #[test]
    fn normalize_adds_offset() {
        assert_eq!(normalize(1000, 98), 1098);
        assert_eq!(normalize(1000, 0), 1000);
        assert_eq!(normalize(normalize(1234, 98), -98), 1234);
    }

    #[test]
    fn normalize_saturates() {
        assert_eq!(normalize(i64::MAX, 1), i64::MAX);
        assert_eq!(normalize(i64::MIN, -1), i64::MIN);
    }
}
