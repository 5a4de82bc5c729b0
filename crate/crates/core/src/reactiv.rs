//! Change-time detection and HSV compositing (extended REACTIV).
//!
//! Hue encodes a per-pixel time of interest (start / maximum / stop of
//! change, or the date of the maximum amplitude), saturation encodes the
//! temporal coefficient of variation normalized against its pure-speckle
//! statistics, and value encodes the maximum amplitude. Change-time
//! detection runs the GLR probability on intensities; the coefficient of
//! variation and the value channel operate on amplitudes.

use rayon::prelude::*;

use crate::color::hsv_to_rgb;
use crate::error::{Error, Result};
use crate::glr::{s_glr, ImageStack, ProbabilityCalibration};
use crate::raster::{Raster, RgbRaster};
use crate::special::ln_gamma;

/// Hue fraction of a time of interest: (5/6)(t − t₁)/(t₂ − t₁). The 5/6
/// factor keeps the last date away from the wrap-around red of the first.
pub fn hue_from_time(t: f64, t1: f64, t2: f64) -> Result<f64> {
    if !(t1 < t2) {
        return Err(Error::Input(format!(
            "time interval must satisfy t1 < t2, got [{t1}, {t2}]"
        )));
    }
    if t < t1 || t > t2 {
        return Err(Error::Input(format!("time {t} outside [{t1}, {t2}]")));
    }
    Ok(5.0 / 6.0 * (t - t1) / (t2 - t1))
}

/// First date (1-based, in 2..=M) whose change probability against the first
/// date exceeds tau; 0 when no date does.
pub fn detect_time_start(series: &[f64], enl: f64, tau: f64) -> Result<usize> {
    if series.len() < 2 {
        return Err(Error::Input("start detection needs at least 2 dates".into()));
    }
    let cal = ProbabilityCalibration::new(enl)?;
    for (i, &u) in series.iter().enumerate().skip(1) {
        if cal.probability(s_glr(series[0], u, enl)) > tau {
            return Ok(i + 1);
        }
    }
    Ok(0)
}

/// Date (1-based) of the maximum adjacent-pair dissimilarity; ties break
/// toward the earliest date, and a constant series returns 0.
pub fn detect_time_max(series: &[f64], enl: f64) -> usize {
    let mut best_t = 0;
    let mut best_s = 0.0;
    for t in 1..series.len() {
        let s = s_glr(series[t - 1], series[t], enl);
        if s > best_s {
            best_s = s;
            best_t = t + 1;
        }
    }
    best_t
}

/// Latest date t < M (1-based, scanned from M−1 down to 1) still
/// significantly different from the final state û_M; 0 when none is.
pub fn detect_time_stop(series: &[f64], enl: f64, tau: f64) -> Result<usize> {
    let m = series.len();
    if m < 2 {
        return Err(Error::Input("stop detection needs at least 2 dates".into()));
    }
    let cal = ProbabilityCalibration::new(enl)?;
    let last = series[m - 1];
    for t in (0..m - 1).rev() {
        if cal.probability(s_glr(series[t], last, enl)) > tau {
            return Ok(t + 1);
        }
    }
    Ok(0)
}

/// Temporal coefficient of variation of an amplitude series: population
/// standard deviation over mean. A non-positive mean has no defined value.
pub fn coeff_variation_empirical(amplitudes: &[f64]) -> Result<f64> {
    if amplitudes.len() < 2 {
        return Err(Error::Input(
            "coefficient of variation needs at least 2 samples".into(),
        ));
    }
    let n = amplitudes.len() as f64;
    let mean = amplitudes.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(Error::Estimation(format!(
            "amplitude mean must be positive, got {mean}"
        )));
    }
    let var = amplitudes.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

/// Theoretical coefficient of variation of pure L-look amplitude speckle:
/// sqrt(Γ(L)Γ(L+1)/Γ(L+1/2)² − 1).
pub fn gamma_theoretical(looks: f64) -> f64 {
    assert!(looks > 0.0, "looks must be positive");
    let ratio = (ln_gamma(looks) + ln_gamma(looks + 1.0) - 2.0 * ln_gamma(looks + 0.5)).exp();
    (ratio - 1.0).sqrt()
}

/// Closed-form variance of the coefficient-of-variation estimator over M
/// temporal samples of pure L-look speckle.
pub fn var_gamma(looks: f64, m: usize) -> f64 {
    assert!(looks > 0.0 && m >= 2, "requires looks > 0 and M >= 2");
    // work with H2 = Γ(L+1/2)²/Γ(L)² to keep the gamma powers in range
    let h2 = (2.0 * (ln_gamma(looks + 0.5) - ln_gamma(looks))).exp();
    let num = looks * (4.0 * looks * looks - 4.0 * looks * h2 - h2);
    let den = h2 * h2 * (looks - h2);
    num / den / (4.0 * m as f64)
}

/// Moment-form variance of the same estimator, written in the first four raw
/// moments of the L-look Nakagami amplitude law. Kept as an independent
/// cross-check route for [`var_gamma`]; not used by the compositor.
pub fn var_gamma_moment_form(looks: f64, m: usize) -> f64 {
    assert!(looks > 0.0 && m >= 2, "requires looks > 0 and M >= 2");
    let lg = ln_gamma(looks);
    let m1 = (ln_gamma(looks + 0.5) - lg).exp() / looks.sqrt();
    let m2 = 1.0;
    let m3 = (ln_gamma(looks + 1.5) - lg).exp() / looks.powf(1.5);
    let m4 = (looks + 1.0) / looks;
    let num = 4.0 * m2 * m2 * m2 - m2 * m2 * m1 * m1 + m1 * m1 * m4 - 4.0 * m1 * m2 * m3;
    let den = m1.powi(4) * (m2 - m1 * m1);
    num / den / (4.0 * m as f64)
}

/// Empirical saturation normalization: centers the coefficient of variation
/// of stable speckle around 0.25 and spreads changes upward; clamped to
/// [0, 1].
pub fn normalize_saturation(gamma: f64, looks: f64, m: usize) -> f64 {
    let centered = (gamma - gamma_theoretical(looks)) / (10.0 * var_gamma(looks, m).sqrt());
    (centered + 0.25).clamp(0.0, 1.0)
}

/// Per-pixel temporal maximum amplitude scaled by the stack-wide 99th
/// percentile amplitude (nearest-rank), clamped to [0, 1]. An all-zero stack
/// yields an all-zero channel.
pub fn value_channel(stack: &ImageStack) -> Raster {
    let n = stack.pixels();
    let mut maxima = vec![0.0_f32; n];
    for img in stack.images() {
        for (mx, &v) in maxima.iter_mut().zip(img.data()) {
            if v > *mx {
                *mx = v;
            }
        }
    }
    let mut all: Vec<f32> = Vec::with_capacity(n * stack.len());
    for img in stack.images() {
        all.extend_from_slice(img.data());
    }
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((0.99 * all.len() as f64).ceil() as usize).clamp(1, all.len()) - 1;
    let p99 = all[rank];
    let data = if p99 <= 0.0 {
        vec![0.0; n]
    } else {
        maxima.iter().map(|&mx| (mx / p99).clamp(0.0, 1.0)).collect()
    };
    Raster::from_vec(stack.width(), stack.height(), data).expect("shape preserved")
}

/// Which time of interest drives the hue channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeMode {
    /// Date of the per-pixel maximum amplitude (classic REACTIV).
    MaxValue,
    /// First date significantly different from the first acquisition.
    Start,
    /// Date of the maximum adjacent change.
    MaxChange,
    /// Latest date significantly different from the final state.
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct ReactivOptions {
    pub mode: TimeMode,
    /// Change probability threshold for the start/stop detectors.
    pub tau: f64,
    /// Skip change-time detection where the normalized coefficient of
    /// variation stays at or below 0.25 (stable speckle).
    pub prescreen: bool,
}

impl Default for ReactivOptions {
    fn default() -> Self {
        ReactivOptions {
            mode: TimeMode::MaxChange,
            tau: 0.99,
            prescreen: true,
        }
    }
}

/// HSV composite with its raw channels and the per-pixel time index
/// (0 = no change detected).
#[derive(Debug, Clone)]
pub struct HsvComposite {
    pub hue: Raster,
    pub saturation: Raster,
    pub value: Raster,
    pub rgb: RgbRaster,
    pub time_index: Vec<u16>,
}

/// Builds the REACTIV composite of a stack. The stack's domain flag selects
/// the explicit conversions: detectors see intensities, the coefficient of
/// variation and the value channel see amplitudes. Unchanged pixels (time
/// index 0) render gray through zero saturation in the change-time modes.
pub fn compose_reactiv(stack: &ImageStack, opts: &ReactivOptions) -> Result<HsvComposite> {
    if stack.len() < 2 {
        return Err(Error::Input("REACTIV needs at least 2 dates".into()));
    }
    if !(opts.tau > 0.0 && opts.tau < 1.0) {
        return Err(Error::Parameter(format!(
            "tau must lie in (0, 1), got {}",
            opts.tau
        )));
    }
    let enl = stack.enl();
    ProbabilityCalibration::new(enl)?;
    let amplitude = stack.to_amplitude();
    let intensity = stack.to_intensity();
    let m = stack.len();
    let times = stack.timestamps();
    let (t1, t2) = (times[0], times[m - 1]);
    let value = value_channel(&amplitude);

    let n = stack.pixels();
    let per_pixel: Vec<(f64, f64, u16)> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let amp = amplitude.pixel_series(idx);
            let gamma = match coeff_variation_empirical(&amp) {
                Ok(g) => g,
                Err(_) => 0.0, // zero-mean pixel: flagged unchanged
            };
            let sat = normalize_saturation(gamma, enl, m);
            let t_index: usize = match opts.mode {
                TimeMode::MaxValue => {
                    let mut best = 0;
                    for (t, &a) in amp.iter().enumerate() {
                        if a > amp[best] {
                            best = t;
                        }
                    }
                    best + 1
                }
                _ if opts.prescreen && sat <= 0.25 => 0,
                TimeMode::Start => {
                    detect_time_start(&intensity.pixel_series(idx), enl, opts.tau)
                        .expect("length checked")
                }
                TimeMode::MaxChange => detect_time_max(&intensity.pixel_series(idx), enl),
                TimeMode::Stop => detect_time_stop(&intensity.pixel_series(idx), enl, opts.tau)
                    .expect("length checked"),
            };
            let hue = if t_index == 0 {
                0.0
            } else {
                hue_from_time(times[t_index - 1], t1, t2).expect("index within range")
            };
            let sat = if t_index == 0 && opts.mode != TimeMode::MaxValue {
                0.0
            } else {
                sat
            };
            (hue, sat, t_index as u16)
        })
        .collect();

    let mut hue = Vec::with_capacity(n);
    let mut saturation = Vec::with_capacity(n);
    let mut time_index = Vec::with_capacity(n);
    let mut rgb = RgbRaster::new(stack.width(), stack.height());
    for (i, &(h, s, t)) in per_pixel.iter().enumerate() {
        hue.push(h as f32);
        saturation.push(s as f32);
        time_index.push(t);
        rgb.set_index(i, hsv_to_rgb(h, s, value.data()[i] as f64));
    }
    Ok(HsvComposite {
        hue: Raster::from_vec(stack.width(), stack.height(), hue)?,
        saturation: Raster::from_vec(stack.width(), stack.height(), saturation)?,
        value,
        rgb,
        time_index,
    })
}

/// Horizontal hue legend covering the composite's time axis (saturation and
/// value at 1), for the color-bar strip shipped next to composites.
pub fn hue_legend(width: usize, height: usize) -> RgbRaster {
    let mut rgb = RgbRaster::new(width, height);
    for x in 0..width {
        let h = 5.0 / 6.0 * x as f64 / (width.max(2) - 1) as f64;
        let px = hsv_to_rgb(h, 1.0, 1.0);
        for y in 0..height {
            rgb.set(x, y, px);
        }
    }
    rgb
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glr::Domain;

    const GAMMA_TH_1: f64 = 0.5227232008770633; // sqrt(4/pi − 1), mpmath
    const GAMMA_TH_4_9: f64 = 0.22858768144962005;
    const VAR_GAMMA_1_10: f64 = 0.013788096051224175;
    const VAR_GAMMA_4_9_10: f64 = 0.0026104575342751349;

    #[test]
    fn hue_endpoints_and_midpoint() {
        assert_eq!(hue_from_time(1.0, 1.0, 10.0).unwrap(), 0.0);
        assert!((hue_from_time(10.0, 1.0, 10.0).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!((hue_from_time(5.5, 1.0, 10.0).unwrap() - 5.0 / 12.0).abs() < 1e-15);
        assert!(hue_from_time(0.5, 1.0, 10.0).is_err());
        assert!(hue_from_time(11.0, 1.0, 10.0).is_err());
        assert!(hue_from_time(1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn start_detector_cases() {
        let flat = [2.0; 5];
        assert_eq!(detect_time_start(&flat, 9.0, 0.99).unwrap(), 0);
        // s_glr(1, 4, 9) ≈ 4.017 has probability far above 0.99
        let series = [1.0, 1.0, 4.0, 4.0, 4.0];
        assert_eq!(detect_time_start(&series, 9.0, 0.99).unwrap(), 3);
        // sub-threshold everywhere
        let weak = [1.0, 1.05, 0.97, 1.02];
        assert_eq!(detect_time_start(&weak, 9.0, 0.99).unwrap(), 0);
        assert!(detect_time_start(&[1.0], 9.0, 0.99).is_err());
    }

    #[test]
    fn max_detector_cases() {
        assert_eq!(detect_time_max(&[2.0; 4], 9.0), 0);
        assert_eq!(detect_time_max(&[1.0, 1.0, 1.0, 4.0, 4.0], 9.0), 4);
        // symmetric rise and fall ties; earliest wins
        assert_eq!(detect_time_max(&[1.0, 4.0, 1.0, 1.0], 9.0), 2);
    }

    #[test]
    fn stop_detector_cases() {
        assert_eq!(detect_time_stop(&[2.0; 4], 9.0, 0.99).unwrap(), 0);
        assert_eq!(detect_time_stop(&[1.0, 4.0, 4.0, 4.0], 9.0, 0.99).unwrap(), 1);
        assert_eq!(detect_time_stop(&[1.0, 1.0, 4.0, 1.0], 9.0, 0.99).unwrap(), 3);
        assert!(detect_time_stop(&[1.0], 9.0, 0.99).is_err());
    }

    #[test]
    fn coeff_variation_cases() {
        assert_eq!(coeff_variation_empirical(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        // population convention: std of {1, 3} is 1, mean is 2
        assert!((coeff_variation_empirical(&[1.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(coeff_variation_empirical(&[0.0, 0.0]).is_err());
        assert!(coeff_variation_empirical(&[1.0]).is_err());
    }

    #[test]
    fn gamma_theory_reference() {
        assert!((gamma_theoretical(1.0) - GAMMA_TH_1).abs() < 1e-13);
        assert!((gamma_theoretical(4.9) - GAMMA_TH_4_9).abs() < 1e-13);
        // monotone decreasing towards 0
        let mut prev = f64::INFINITY;
        let mut l = 0.5;
        while l <= 50.0 {
            let g = gamma_theoretical(l);
            assert!(g < prev && g > 0.0);
            prev = g;
            l += 0.5;
        }
        assert!(gamma_theoretical(100.0) < 0.08);
    }

    #[test]
    fn var_gamma_reference_and_scaling() {
        assert!((var_gamma(1.0, 10) - VAR_GAMMA_1_10).abs() < 1e-14);
        assert!((var_gamma(4.9, 10) - VAR_GAMMA_4_9_10).abs() < 1e-14);
        let mut l = 0.5;
        while l <= 50.0 {
            assert!(var_gamma(l, 7) > 0.0, "var at L={l}");
            // exact 1/M scaling
            assert_eq!(var_gamma(l, 20), var_gamma(l, 10) / 2.0);
            l += 0.5;
        }
    }

    #[test]
    fn moment_form_matches_closed_form() {
        let mut l = 0.5;
        while l <= 50.0 {
            let a = var_gamma(l, 10);
            let b = var_gamma_moment_form(l, 10);
            assert!(
                (a - b).abs() <= 1e-8 * a.abs(),
                "L={l}: closed {a} vs moments {b}"
            );
            l += 0.1;
        }
    }

    #[test]
    fn saturation_normalization() {
        let l = 4.9;
        assert!((normalize_saturation(gamma_theoretical(l), l, 10) - 0.25).abs() < 1e-12);
        assert_eq!(normalize_saturation(50.0, l, 10), 1.0);
        // gamma = 0 at L = 4.9, M = 10 sits below zero before clamping
        assert_eq!(normalize_saturation(0.0, l, 10), 0.0);
    }

    #[test]
    fn value_channel_cases() {
        let a = Raster::filled(2, 2, 2.0);
        let stack =
            ImageStack::with_index_times(vec![a.clone(), a], 1.0, Domain::Amplitude).unwrap();
        let v = value_channel(&stack);
        assert!(v.data().iter().all(|&x| x == 1.0));

        let zero = Raster::filled(2, 2, 0.0);
        let zstack =
            ImageStack::with_index_times(vec![zero.clone(), zero], 1.0, Domain::Amplitude)
                .unwrap();
        assert!(value_channel(&zstack).data().iter().all(|&x| x == 0.0));

        // a single bright transient dominates its pixel's max
        let mut b = Raster::filled(2, 2, 1.0);
        b.set(0, 0, 10.0);
        let base = Raster::filled(2, 2, 1.0);
        let tstack =
            ImageStack::with_index_times(vec![base, b], 1.0, Domain::Amplitude).unwrap();
        let v = value_channel(&tstack);
        assert!(v.get(0, 0) > v.get(1, 1));
    }

    #[test]
    fn compose_unchanged_stack_renders_gray() {
        use crate::speckle::{simulate_changes, ReflectivityMap};
        let u = ReflectivityMap::constant(8, 8, 1.0).unwrap();
        let sim = simulate_changes(&u, &[], 10, 9.0, 4).unwrap();
        let comp = compose_reactiv(
            &sim.stack,
            &ReactivOptions {
                mode: TimeMode::Start,
                tau: 0.99,
                prescreen: true,
            },
        )
        .unwrap();
        let changed = comp.time_index.iter().filter(|&&t| t != 0).count();
        assert!(changed <= 3, "unchanged stack flagged {changed}/64 pixels");
        // gray pixels: zero saturation -> equal RGB channels
        let gray = (0..64)
            .filter(|&i| {
                let px = [
                    comp.rgb.data()[3 * i],
                    comp.rgb.data()[3 * i + 1],
                    comp.rgb.data()[3 * i + 2],
                ];
                px[0] == px[1] && px[1] == px[2]
            })
            .count();
        assert!(gray >= 61);
    }

    #[test]
    fn compose_step_sets_hue_at_change_date() {
        use crate::speckle::{simulate_changes, ChangeKind, ChangeProfile, ReflectivityMap};
        let u = ReflectivityMap::constant(6, 6, 1.0).unwrap();
        // amplitude factor 4 (intensity 16) step between dates 3 and 4 of 10
        let p = ChangeProfile::rect(ChangeKind::Step, 0, 0, 6, 6, 4, 10, 16.0);
        let sim = simulate_changes(&u, &[p], 10, 9.0, 11).unwrap();
        let comp = compose_reactiv(
            &sim.stack,
            &ReactivOptions {
                mode: TimeMode::MaxChange,
                tau: 0.99,
                prescreen: true,
            },
        )
        .unwrap();
        let expected_hue = hue_from_time(4.0, 1.0, 10.0).unwrap() as f32;
        let hits = comp
            .time_index
            .iter()
            .zip(comp.hue.data())
            .filter(|&(&t, &h)| t == 4 && h == expected_hue)
            .count();
        assert!(hits >= 32, "hue hits {hits}/36");

        // a pure step gives matching start/stop localizations around the jump
        let start = compose_reactiv(
            &sim.stack,
            &ReactivOptions {
                mode: TimeMode::Start,
                tau: 0.99,
                prescreen: true,
            },
        )
        .unwrap();
        let start_hits = start.time_index.iter().filter(|&&t| t == 4).count();
        assert!(start_hits >= 32, "start hits {start_hits}/36");
        let stop = compose_reactiv(
            &sim.stack,
            &ReactivOptions {
                mode: TimeMode::Stop,
                tau: 0.99,
                prescreen: true,
            },
        )
        .unwrap();
        let stop_hits = stop.time_index.iter().filter(|&&t| t == 3).count();
        assert!(stop_hits >= 32, "stop hits {stop_hits}/36");
    }

    #[test]
    fn legend_spans_blue_to_nearly_red() {
        let legend = hue_legend(100, 4);
        assert_eq!(legend.get(0, 0), [255, 0, 0]); // hue 0 = red start of scale
        let last = legend.get(99, 0);
        assert_eq!(last, [255, 0, 255]); // hue 5/6 = magenta, wrap avoided
    }
}
