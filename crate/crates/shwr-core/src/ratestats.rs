//! Binned count-rate series, robust baselines and spike flags, plus the
//! altitude dependence of the rate.
//!
//! The slow background drifts with temperature over the day; with no
//! temperature channel available the baseline is a rolling median of the
//! cpm series (default window: 6 h of bins), which tracks the smooth
//! diurnal swell and ignores sharp peaks. A bin is flagged as a spike when
//! its residual exceeds `k` robust standard deviations, where sigma is
//! estimated as `1.4826 * MAD` over the same window and floored to survive
//! zero-dispersion stretches.

use crate::model::{is_positive_finite, FlashEvent};
use crate::par;
use thiserror::Error;

/// Default spike threshold multiplier.
pub const DEFAULT_SPIKE_K: f64 = 5.0;
/// Default robust-sigma floor, cpm.
pub const DEFAULT_MAD_FLOOR_CPM: f64 = 0.5;
/// Default baseline window in seconds (6 h).
pub const DEFAULT_BASELINE_WINDOW_S: u64 = 6 * 3600;
/// Scale factor turning a MAD into a consistent sigma estimate.
pub const MAD_SIGMA_SCALE: f64 = 1.4826;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("bad time range: end must be greater than start")]
    BadRange,
    #[error("baseline window must be an odd integer >= 3, got {0}")]
    BadWindow(usize),
    #[error("baseline must be fitted before flagging spikes")]
    BaselineMissing,
    #[error("altitude fit needs >= 2 distinct altitudes and positive rates")]
    DegenerateInput,
    #[error("altitude fit produced a non-increasing model (doubling height {0:.3} km)")]
    BadFit(f64),
    #[error("bin width must be >= 1 s")]
    BadBinWidth,
}

/// Per-device binned counts with optional baseline and spike annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries {
    pub device_id: String,
    /// Bin width, seconds.
    pub bin_s: u32,
    pub t_start_ms: i64,
    pub counts: Vec<u32>,
    /// Counts scaled to a per-minute rate: `counts[i] * 60 / bin_s`.
    pub cpm: Vec<f64>,
    baseline: Option<Vec<f64>>,
    baseline_window: Option<usize>,
    spike_flags: Option<Vec<bool>>,
}

impl RateSeries {
    /// Series from an explicit cpm vector (synthetic and analysis inputs);
    /// counts are back-filled by rounding and kept informational.
    pub fn from_cpm(device_id: &str, bin_s: u32, t_start_ms: i64, cpm: Vec<f64>) -> Self {
        let counts = cpm.iter().map(|&c| (c * bin_s as f64 / 60.0).round().max(0.0) as u32).collect();
        Self {
            device_id: device_id.to_string(),
            bin_s,
            t_start_ms,
            counts,
            cpm,
            baseline: None,
            baseline_window: None,
            spike_flags: None,
        }
    }

    pub fn len(&self) -> usize {
        self.cpm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cpm.is_empty()
    }

    pub fn baseline(&self) -> Option<&[f64]> {
        self.baseline.as_deref()
    }

    pub fn spike_flags(&self) -> Option<&[bool]> {
        self.spike_flags.as_deref()
    }

    pub fn bin_start_ms(&self, i: usize) -> i64 {
        self.t_start_ms + i as i64 * self.bin_s as i64 * 1000
    }

    /// Fill the baseline with a centered rolling median of width
    /// `window_bins` (odd, >= 3). Near the series edges the window shrinks
    /// symmetrically so it stays centered and odd, which keeps the median
    /// idempotent on constant and monotone series.
    pub fn fit_baseline(self, window_bins: usize) -> Result<Self, RateError> {
        self.fit_baseline_impl(window_bins, true)
    }

    /// Sequential twin of [`RateSeries::fit_baseline`]; same output.
    pub fn fit_baseline_seq(self, window_bins: usize) -> Result<Self, RateError> {
        self.fit_baseline_impl(window_bins, false)
    }

    fn fit_baseline_impl(mut self, window_bins: usize, parallel: bool) -> Result<Self, RateError> {
        if window_bins < 3 || window_bins.is_multiple_of(2) {
            return Err(RateError::BadWindow(window_bins));
        }
        let half = window_bins / 2;
        let cpm = &self.cpm;
        let n = cpm.len();
        let baseline = par::map_range(n, parallel, |i| {
            let h = centered_half(i, n, half);
            median(&cpm[i - h..=i + h])
        });
        self.baseline = Some(baseline);
        self.baseline_window = Some(window_bins);
        self.spike_flags = None;
        Ok(self)
    }

    /// Flag bins whose residual over the baseline exceeds `k` robust
    /// standard deviations (`max(1.4826 * MAD, mad_floor)` over the
    /// baseline window).
    pub fn flag_spikes(self, k: f64, mad_floor_cpm: f64) -> Result<Self, RateError> {
        self.flag_spikes_impl(k, mad_floor_cpm, true)
    }

    /// Sequential twin of [`RateSeries::flag_spikes`]; same output.
    pub fn flag_spikes_seq(self, k: f64, mad_floor_cpm: f64) -> Result<Self, RateError> {
        self.flag_spikes_impl(k, mad_floor_cpm, false)
    }

    fn flag_spikes_impl(mut self, k: f64, mad_floor_cpm: f64, parallel: bool) -> Result<Self, RateError> {
        let baseline = self.baseline.as_ref().ok_or(RateError::BaselineMissing)?;
        let window = self.baseline_window.ok_or(RateError::BaselineMissing)?;
        let half = window / 2;
        let n = self.cpm.len();
        let residuals: Vec<f64> =
            self.cpm.iter().zip(baseline.iter()).map(|(c, b)| c - b).collect();
        let flags = par::map_range(n, parallel, |i| {
            let h = centered_half(i, n, half);
            let sigma = (MAD_SIGMA_SCALE * mad(&residuals[i - h..=i + h])).max(mad_floor_cpm);
            residuals[i] > k * sigma
        });
        self.spike_flags = Some(flags);
        Ok(self)
    }
}

/// Exponential altitude law `r(h) = r0 * 2^(h / h_d)`: the rate doubles
/// every `h_d` kilometers of altitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltitudeModel {
    /// Ground-level rate, cpm.
    pub r0_cpm: f64,
    /// Doubling height, km (> 0).
    pub h_d_km: f64,
}

impl AltitudeModel {
    pub fn new(r0_cpm: f64, h_d_km: f64) -> Result<Self, RateError> {
        if !is_positive_finite(r0_cpm) || !is_positive_finite(h_d_km) {
            return Err(RateError::DegenerateInput);
        }
        Ok(Self { r0_cpm, h_d_km })
    }

    /// Predicted rate at `alt_km`, cpm.
    pub fn rate_cpm(&self, alt_km: f64) -> f64 {
        self.r0_cpm * (alt_km / self.h_d_km).exp2()
    }
}

/// Bin a device's flash events into a [`RateSeries`] over
/// `[t_start_ms, t_end_ms)`. Bins are left-closed right-open; events
/// outside the range (or from other devices) are dropped.
pub fn bin_events(
    events: &[FlashEvent],
    device_id: &str,
    bin_s: u32,
    t_start_ms: i64,
    t_end_ms: i64,
) -> Result<RateSeries, RateError> {
    if bin_s < 1 {
        return Err(RateError::BadBinWidth);
    }
    if t_end_ms <= t_start_ms {
        return Err(RateError::BadRange);
    }
    let bin_ms = bin_s as i64 * 1000;
    let span = t_end_ms - t_start_ms;
    let n_bins = ((span + bin_ms - 1) / bin_ms) as usize;
    let mut counts = vec![0u32; n_bins];
    for ev in events {
        if ev.device_id != device_id || ev.t_utc_ms < t_start_ms || ev.t_utc_ms >= t_end_ms {
            continue;
        }
        let bin = ((ev.t_utc_ms - t_start_ms) / bin_ms) as usize;
        counts[bin] += 1;
    }
    let cpm = counts.iter().map(|&c| c as f64 * 60.0 / bin_s as f64).collect();
    Ok(RateSeries {
        device_id: device_id.to_string(),
        bin_s,
        t_start_ms,
        counts,
        cpm,
        baseline: None,
        baseline_window: None,
        spike_flags: None,
    })
}

/// Least-squares fit of `log2(cpm) = log2(r0) + h / h_d` over
/// `(alt_km, cpm)` points. Exact on model-generated data.
pub fn fit_altitude(points: &[(f64, f64)]) -> Result<AltitudeModel, RateError> {
    if points.iter().any(|&(h, cpm)| !h.is_finite() || !is_positive_finite(cpm)) {
        return Err(RateError::DegenerateInput);
    }
    let first = match points.first() {
        Some(&(h, _)) => h,
        None => return Err(RateError::DegenerateInput),
    };
    if points.iter().all(|&(h, _)| h == first) {
        return Err(RateError::DegenerateInput);
    }
    let n = points.len() as f64;
    let (mut sum_h, mut sum_y, mut sum_hh, mut sum_hy) = (0.0, 0.0, 0.0, 0.0);
    for &(h, cpm) in points {
        let y = cpm.log2();
        sum_h += h;
        sum_y += y;
        sum_hh += h * h;
        sum_hy += h * y;
    }
    let denom = n * sum_hh - sum_h * sum_h;
    let slope = (n * sum_hy - sum_h * sum_y) / denom;
    let intercept = (sum_y - slope * sum_h) / n;
    if !is_positive_finite(slope) {
        return Err(RateError::BadFit(if slope != 0.0 { 1.0 / slope } else { f64::INFINITY }));
    }
    let h_d = 1.0 / slope;
    let r0 = intercept.exp2();
    AltitudeModel::new(r0, h_d)
}

/// Largest half-width keeping a window centered at `i` inside `[0, n)`.
fn centered_half(i: usize, n: usize, half: usize) -> usize {
    half.min(i).min(n - 1 - i)
}

/// Median of a nonempty slice (mean of the central pair for even lengths).
pub(crate) fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Median absolute deviation about the median.
pub(crate) fn mad(values: &[f64]) -> f64 {
    let med = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    median(&dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeoPoint;
    use approx::assert_relative_eq;

    fn ev(t_ms: i64) -> FlashEvent {
        FlashEvent::new("d1", t_ms, GeoPoint::new(50.0, 30.0, 0.0).unwrap(), 1).unwrap()
    }

    #[test]
    fn bins_count_events_and_scale_to_cpm() {
        let events = vec![ev(0), ev(10_000), ev(30_000)];
        let s = bin_events(&events, "d1", 60, 0, 60_000).unwrap();
        assert_eq!(s.counts, vec![3]);
        assert_eq!(s.cpm, vec![3.0]);
    }

    #[test]
    fn no_events_all_zero() {
        let s = bin_events(&[], "d1", 60, 0, 180_000).unwrap();
        assert_eq!(s.counts, vec![0, 0, 0]);
        assert!(s.cpm.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn boundary_event_lands_in_next_bin() {
        let s = bin_events(&[ev(60_000)], "d1", 60, 0, 120_000).unwrap();
        assert_eq!(s.counts, vec![0, 1]);
    }

    #[test]
    fn events_outside_range_and_other_devices_dropped() {
        let mut other = ev(10_000);
        other.device_id = "other".into();
        let events = vec![ev(-1), ev(120_000), other, ev(5_000)];
        let s = bin_events(&events, "d1", 60, 0, 120_000).unwrap();
        assert_eq!(s.counts, vec![1, 0]);
    }

    #[test]
    fn cpm_scales_with_bin_width() {
        let s = bin_events(&[ev(5_000), ev(10_000)], "d1", 30, 0, 30_000).unwrap();
        assert_eq!(s.counts, vec![2]);
        assert_eq!(s.cpm, vec![4.0]);
    }

    #[test]
    fn bad_range_rejected() {
        assert_eq!(bin_events(&[], "d1", 60, 100, 100).unwrap_err(), RateError::BadRange);
        assert_eq!(bin_events(&[], "d1", 0, 0, 100).unwrap_err(), RateError::BadBinWidth);
    }

    #[test]
    fn constant_series_baseline_is_constant() {
        let s = RateSeries::from_cpm("d1", 60, 0, vec![5.0; 20]).fit_baseline(5).unwrap();
        assert!(s.baseline().unwrap().iter().all(|&b| b == 5.0));
    }

    #[test]
    fn median_baseline_ignores_single_spike() {
        let s = RateSeries::from_cpm("d1", 60, 0, vec![5.0, 5.0, 50.0, 5.0, 5.0])
            .fit_baseline(5)
            .unwrap();
        assert_eq!(s.baseline().unwrap()[2], 5.0);
    }

    #[test]
    fn monotone_series_baseline_matches_interior() {
        let cpm: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s = RateSeries::from_cpm("d1", 60, 0, cpm.clone()).fit_baseline(3).unwrap();
        let b = s.baseline().unwrap();
        for i in 1..9 {
            assert_eq!(b[i], cpm[i]);
        }
    }

    #[test]
    fn baseline_window_validation() {
        let s = RateSeries::from_cpm("d1", 60, 0, vec![1.0; 10]);
        assert_eq!(s.clone().fit_baseline(4).unwrap_err(), RateError::BadWindow(4));
        assert_eq!(s.fit_baseline(1).unwrap_err(), RateError::BadWindow(1));
    }

    #[test]
    fn baseline_idempotent_on_constant_and_monotone() {
        for cpm in [vec![2.5; 31], (0..31).map(|i| i as f64 * 0.1).collect::<Vec<_>>()] {
            let once = RateSeries::from_cpm("d1", 60, 0, cpm).fit_baseline(7).unwrap();
            let base = once.baseline().unwrap().to_vec();
            let twice =
                RateSeries::from_cpm("d1", 60, 0, base.clone()).fit_baseline(7).unwrap();
            for (a, b) in base.iter().zip(twice.baseline().unwrap()) {
                assert_relative_eq!(a, b, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn constant_series_has_no_spikes() {
        let s = RateSeries::from_cpm("d1", 60, 0, vec![5.0; 50])
            .fit_baseline(11)
            .unwrap()
            .flag_spikes(DEFAULT_SPIKE_K, DEFAULT_MAD_FLOOR_CPM)
            .unwrap();
        assert!(s.spike_flags().unwrap().iter().all(|&f| !f));
    }

    #[test]
    fn lone_spike_is_flagged() {
        let mut cpm = vec![5.0; 101];
        cpm[50] = 50.0;
        let s = RateSeries::from_cpm("d1", 60, 0, cpm)
            .fit_baseline(25)
            .unwrap()
            .flag_spikes(DEFAULT_SPIKE_K, DEFAULT_MAD_FLOOR_CPM)
            .unwrap();
        let flags = s.spike_flags().unwrap();
        assert!(flags[50]);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
    }

    #[test]
    fn spike_flags_require_baseline() {
        let s = RateSeries::from_cpm("d1", 60, 0, vec![5.0; 10]);
        assert_eq!(s.flag_spikes(5.0, 0.5).unwrap_err(), RateError::BaselineMissing);
    }

    #[test]
    fn smooth_sinusoid_yields_zero_flags() {
        // 24 h period, amplitude 1 cpm, 6 h baseline window, 1-min bins.
        let n = 5 * 24 * 60;
        let cpm: Vec<f64> = (0..n)
            .map(|i| {
                let t_h = i as f64 / 60.0;
                5.0 + (2.0 * std::f64::consts::PI * t_h / 24.0).sin()
            })
            .collect();
        let s = RateSeries::from_cpm("d1", 60, 0, cpm)
            .fit_baseline(361)
            .unwrap()
            .flag_spikes(DEFAULT_SPIKE_K, DEFAULT_MAD_FLOOR_CPM)
            .unwrap();
        assert_eq!(s.spike_flags().unwrap().iter().filter(|&&f| f).count(), 0);
    }

    #[test]
    fn residual_decomposition_identity() {
        let cpm: Vec<f64> = (0..200).map(|i| 5.0 + (i as f64 * 0.13).sin()).collect();
        let s = RateSeries::from_cpm("d1", 60, 0, cpm).fit_baseline(21).unwrap();
        for i in 0..s.len() {
            let residual = s.cpm[i] - s.baseline().unwrap()[i];
            assert_eq!(s.cpm[i] - s.baseline().unwrap()[i] - residual, 0.0);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let cpm: Vec<f64> = (0..2000).map(|i| 5.0 + (i as f64 * 0.37).sin() * 2.0).collect();
        let par = RateSeries::from_cpm("d1", 60, 0, cpm.clone())
            .fit_baseline(61)
            .unwrap()
            .flag_spikes(5.0, 0.5)
            .unwrap();
        let seq = RateSeries::from_cpm("d1", 60, 0, cpm)
            .fit_baseline_seq(61)
            .unwrap()
            .flag_spikes_seq(5.0, 0.5)
            .unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn altitude_fit_exact_on_model_data() {
        let m = fit_altitude(&[(0.0, 1.0), (1.5, 2.0), (3.0, 4.0)]).unwrap();
        assert_relative_eq!(m.r0_cpm, 1.0, max_relative = 1e-9);
        assert_relative_eq!(m.h_d_km, 1.5, max_relative = 1e-9);
    }

    #[test]
    fn altitude_model_prediction() {
        let m = AltitudeModel::new(1.0, 1.5).unwrap();
        // Rate at cruise altitude dwarfs the ground rate.
        assert_relative_eq!(m.rate_cpm(9.0), 64.0, max_relative = 1e-12);
        assert!(m.rate_cpm(9.0) > m.rate_cpm(0.0));
    }

    #[test]
    fn altitude_fit_rejects_degenerate_input() {
        assert_eq!(fit_altitude(&[]).unwrap_err(), RateError::DegenerateInput);
        assert_eq!(
            fit_altitude(&[(1.0, 2.0), (1.0, 2.1)]).unwrap_err(),
            RateError::DegenerateInput
        );
        assert_eq!(
            fit_altitude(&[(0.0, 1.0), (1.0, 0.0)]).unwrap_err(),
            RateError::DegenerateInput
        );
    }

    #[test]
    fn altitude_fit_rejects_decreasing_rates() {
        assert!(matches!(
            fit_altitude(&[(0.0, 4.0), (1.5, 2.0), (3.0, 1.0)]).unwrap_err(),
            RateError::BadFit(_)
        ));
    }

    #[test]
    fn altitude_fit_recovers_under_noise() {
        // Multiplicative noise <= 1%: parameters within 5%; <= 5%: within 15%.
        let truth = AltitudeModel::new(2.0, 1.5).unwrap();
        let alts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        for (noise, tol) in [(0.01, 0.05), (0.05, 0.15)] {
            let mut rng = crate::rng::SplitMix64::new(0xA17);
            for _ in 0..100 {
                let pts: Vec<(f64, f64)> = alts
                    .iter()
                    .map(|&h| {
                        let eps = rng.uniform_f64(-noise, noise);
                        (h, truth.rate_cpm(h) * (1.0 + eps))
                    })
                    .collect();
                let m = fit_altitude(&pts).unwrap();
                assert!((m.r0_cpm - truth.r0_cpm).abs() / truth.r0_cpm < tol);
                assert!((m.h_d_km - truth.h_d_km).abs() / truth.h_d_km < tol);
            }
        }
    }
}
