//! Systolic / diastolic extraction from an ABP segment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeakParams {
    /// Minimum spacing between systolic peaks, seconds.
    pub min_distance_s: f64,
    /// Minimum peak prominence as a fraction of the segment's range.
    pub min_prominence_frac: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            min_distance_s: 0.4,
            min_prominence_frac: 0.05,
        }
    }
}

/// `(SBP, DBP)` in the units of `abp` with default detector thresholds.
pub fn extract_sbp_dbp(abp: &[f64], sample_rate_hz: f64) -> Result<(f64, f64)> {
    extract_sbp_dbp_with(abp, sample_rate_hz, &PeakParams::default())
}

/// SBP is the mean of detected cycle maxima. DBP is the mean of the minima
/// between consecutive maxima, plus the minimum before the first and after
/// the last maximum when that minimum is a genuine trough, i.e. strictly
/// below the segment's boundary sample. With no qualifying peak the result
/// is the global `(max, min)`.
pub fn extract_sbp_dbp_with(abp: &[f64], sample_rate_hz: f64, params: &PeakParams) -> Result<(f64, f64)> {
    if abp.is_empty() {
        return Err(Error::Usage("extract_sbp_dbp on an empty signal".into()));
    }
    if let Some(i) = abp.iter().position(|v| !v.is_finite()) {
        return Err(Error::Usage(format!("extract_sbp_dbp: non-finite sample at {i}")));
    }
    if !(sample_rate_hz > 0.0) || (abp.len() as f64) < sample_rate_hz {
        return Err(Error::Usage(format!(
            "extract_sbp_dbp needs at least 1 s of samples, got {} at {sample_rate_hz} Hz",
            abp.len()
        )));
    }
    let (lo, hi) = abp
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let min_distance = (params.min_distance_s * sample_rate_hz).ceil().max(1.0) as usize;
    let peaks = find_peaks(abp, min_distance, params.min_prominence_frac * (hi - lo));
    if peaks.is_empty() {
        return Ok((hi, lo));
    }

    let sbp = peaks.iter().map(|&p| abp[p]).sum::<f64>() / peaks.len() as f64;
    let min_of = |r: &[f64]| r.iter().copied().fold(f64::INFINITY, f64::min);
    let mut troughs = Vec::with_capacity(peaks.len() + 1);
    let first = peaks[0];
    if first > 0 {
        let m = min_of(&abp[..first]);
        if m < abp[0] {
            troughs.push(m);
        }
    }
    for w in peaks.windows(2) {
        troughs.push(min_of(&abp[w[0] + 1..w[1]]));
    }
    let last = *peaks.last().expect("non-empty");
    let n = abp.len();
    if last + 1 < n {
        let m = min_of(&abp[last + 1..]);
        if m < abp[n - 1] {
            troughs.push(m);
        }
    }
    let dbp = if troughs.is_empty() {
        lo
    } else {
        troughs.iter().sum::<f64>() / troughs.len() as f64
    };
    Ok((sbp, dbp))
}

/// Local maxima filtered by prominence, then thinned so that no two kept
/// peaks are closer than `min_distance` samples; taller peaks win.
/// Returns sorted indices.
pub fn find_peaks(x: &[f64], min_distance: usize, min_prominence: f64) -> Vec<usize> {
    let n = x.len();
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            // walk a plateau
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                candidates.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    if min_prominence <= 0.0 {
        return Vec::new();
    }
    candidates.retain(|&p| prominence(x, p) >= min_prominence);

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| x[candidates[b]].total_cmp(&x[candidates[a]]).then(a.cmp(&b)));
    let mut keep = vec![true; candidates.len()];
    for &k in &order {
        if !keep[k] {
            continue;
        }
        let p = candidates[k];
        for (other, flag) in keep.iter_mut().enumerate() {
            if other != k && *flag && candidates[other].abs_diff(p) < min_distance {
                *flag = false;
            }
        }
    }
    candidates
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

/// Height of a peak above the higher of its two bases, each base being the
/// minimum between the peak and the nearest strictly higher sample (or the
/// signal edge).
fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sinusoid(offset: f64) -> Vec<f64> {
        (0..625)
            .map(|i| offset + 100.0 + 20.0 * (2.0 * PI * 1.2 * i as f64 / 125.0).sin())
            .collect()
    }

    #[test]
    fn sinusoid_extrema() {
        let (sbp, dbp) = extract_sbp_dbp(&sinusoid(0.0), 125.0).unwrap();
        assert!((sbp - 120.0).abs() <= 0.1, "sbp {sbp}");
        assert!((dbp - 80.0).abs() <= 0.1, "dbp {dbp}");
    }

    #[test]
    fn constant_falls_back_to_global_extrema() {
        assert_eq!(extract_sbp_dbp(&[90.0; 250], 125.0).unwrap(), (90.0, 90.0));
    }

    #[test]
    fn explicit_cycle_list() {
        // Half-cosine segments through a known list of cycle extrema, 0.5 s
        // per half cycle, starting and ending mid-slope.
        let extrema = [95.0, 70.0, 130.0, 75.0, 125.0, 65.0, 140.0, 80.0, 110.0, 100.0];
        let half = 62usize;
        let mut x = Vec::new();
        for w in extrema.windows(2) {
            for i in 0..half {
                let t = i as f64 / half as f64;
                x.push(w[0] + (w[1] - w[0]) * 0.5 * (1.0 - (PI * t).cos()));
            }
        }
        x.push(100.0);
        let (sbp, dbp) = extract_sbp_dbp(&x, 125.0).unwrap();
        let peaks = [130.0, 125.0, 140.0, 110.0];
        let troughs = [70.0, 75.0, 65.0, 80.0];
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((sbp - mean(&peaks)).abs() < 1e-9, "sbp {sbp}");
        assert!((dbp - mean(&troughs)).abs() < 1e-9, "dbp {dbp}");
    }

    #[test]
    fn shift_invariance() {
        let (s0, d0) = extract_sbp_dbp(&sinusoid(0.0), 125.0).unwrap();
        for c in [-37.5, 0.25, 1000.0] {
            let (s, d) = extract_sbp_dbp(&sinusoid(c), 125.0).unwrap();
            assert!((s - s0 - c).abs() <= 1e-9 && (d - d0 - c).abs() <= 1e-9);
        }
    }

    #[test]
    fn usage_errors() {
        assert!(extract_sbp_dbp(&[], 125.0).is_err());
        assert!(extract_sbp_dbp(&[1.0, f64::NAN], 1.0).is_err());
        assert!(extract_sbp_dbp(&[1.0; 100], 125.0).is_err());
    }

    #[test]
    fn close_peaks_keep_the_taller() {
        let mut x = vec![0.0; 200];
        x[50] = 5.0;
        x[60] = 8.0;
        x[150] = 6.0;
        assert_eq!(find_peaks(&x, 50, 0.1), vec![60, 150]);
    }
}
