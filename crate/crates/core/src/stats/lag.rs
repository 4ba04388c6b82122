use serde::{Deserialize, Serialize};

use super::compensated_sum;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lag {
    pub frames: usize,
    pub seconds: f64,
}

fn centered(series: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = series.len() as f64;
    let m = compensated_sum(series.iter().copied()) / n;
    let c: Vec<f64> = series.iter().map(|v| v - m).collect();
    let ss = compensated_sum(c.iter().map(|v| v * v));
    if !(ss > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok((c, ss.sqrt()))
}

/// Cross-correlation of mean-removed series at shift `k`: `b[i + k]` is
/// paired with `a[i]`, so a positive `k` means `b` is delayed.
fn xcorr(a: &[f64], b: &[f64], k: isize) -> f64 {
    let n = a.len() as isize;
    let (start, end) = (0.max(-k), n.min(n - k));
    compensated_sum((start..end).map(|i| a[i as usize] * b[(i + k) as usize]))
}

/// Shift of `b` relative to `a` that maximizes the normalized
/// cross-correlation over all overlaps. Shifts outside `[0, max_lag_s]`
/// yield lag 0.
pub fn best_lag(a: &[f64], b: &[f64], frame_rate: f64, max_lag_s: f64) -> Result<Lag> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 3 {
        return Err(Error::SeriesTooShort { len: a.len(), min: 3 });
    }
    if !(frame_rate > 0.0) {
        return Err(Error::InvalidConfig(format!("frame rate must be positive, got {frame_rate}")));
    }
    let (ca, na) = centered(a)?;
    let (cb, nb) = centered(b)?;
    let n = a.len() as isize;
    let mut best = (0isize, f64::NEG_INFINITY);
    for k in -(n - 1)..n {
        let c = xcorr(&ca, &cb, k) / (na * nb);
        if c > best.1 {
            best = (k, c);
        }
    }
    let max_frames = (max_lag_s * frame_rate + 1e-9).floor() as isize;
    let frames = if (0..=max_frames).contains(&best.0) { best.0 as usize } else { 0 };
    Ok(Lag { frames, seconds: frames as f64 / frame_rate })
}
