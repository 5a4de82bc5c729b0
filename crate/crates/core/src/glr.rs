//! Generalized likelihood-ratio change detection on denoised intensities.
//!
//! The dissimilarity between two reflectivity estimates with a shared ENL L̂ is
//!
//! ```text
//! S(u, u') = 2 L̂ ln( sqrt(u/u') + sqrt(u'/u) ) − 2 L̂ ln 2
//! ```
//!
//! which is symmetric, ratio-invariant and zero iff u = u'. Under the
//! no-change hypothesis, 2ρS follows a chi-square mixture that calibrates the
//! detection threshold (see [`ProbabilityCalibration`]).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::special::chi2_cdf;

/// Whether raster values are linear intensities or amplitudes (sqrt of
/// intensity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Intensity,
    Amplitude,
}

/// An ordered multitemporal stack of co-registered rasters.
///
/// `enl` is the equivalent number of looks of the *intensity* statistics,
/// shared by all pixels of all images (a scalar per stack). Timestamps are
/// strictly increasing acquisition times in arbitrary consistent units
/// (indices for simulated stacks, days for dated stacks).
#[derive(Debug, Clone)]
pub struct ImageStack {
    images: Vec<Raster>,
    timestamps: Vec<f64>,
    enl: f64,
    domain: Domain,
}

impl ImageStack {
    pub fn new(
        images: Vec<Raster>,
        timestamps: Vec<f64>,
        enl: f64,
        domain: Domain,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Input("image stack is empty".into()));
        }
        if timestamps.len() != images.len() {
            return Err(Error::Input(format!(
                "{} timestamps for {} images",
                timestamps.len(),
                images.len()
            )));
        }
        if !(enl.is_finite() && enl > 0.0) {
            return Err(Error::Parameter(format!("enl must be positive, got {enl}")));
        }
        for w in timestamps.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Input(format!(
                    "timestamps must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let (w0, h0) = (images[0].width(), images[0].height());
        for (t, img) in images.iter().enumerate() {
            if img.width() != w0 || img.height() != h0 {
                return Err(Error::Input(format!(
                    "image {t} is {}x{}, expected {w0}x{h0}",
                    img.width(),
                    img.height()
                )));
            }
            if let Some(v) = img.data().iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Input(format!(
                    "image {t} contains non-finite or negative value {v}"
                )));
            }
        }
        Ok(ImageStack {
            images,
            timestamps,
            enl,
            domain,
        })
    }

    /// Stack with timestamps 1..=M (simulated data without calendar dates).
    pub fn with_index_times(images: Vec<Raster>, enl: f64, domain: Domain) -> Result<Self> {
        let times = (1..=images.len()).map(|t| t as f64).collect();
        Self::new(images, times, enl, domain)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn width(&self) -> usize {
        self.images[0].width()
    }

    pub fn height(&self) -> usize {
        self.images[0].height()
    }

    pub fn pixels(&self) -> usize {
        self.images[0].len()
    }

    pub fn images(&self) -> &[Raster] {
        &self.images
    }

    pub fn image(&self, t: usize) -> &Raster {
        &self.images[t]
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn enl(&self) -> f64 {
        self.enl
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Temporal series of one pixel (linear index), as f64.
    pub fn pixel_series(&self, index: usize) -> Vec<f64> {
        self.images.iter().map(|img| img.data()[index] as f64).collect()
    }

    /// Explicit conversion to the intensity domain (squares amplitudes).
    pub fn to_intensity(&self) -> ImageStack {
        match self.domain {
            Domain::Intensity => self.clone(),
            Domain::Amplitude => ImageStack {
                images: self.images.iter().map(|img| img.map(|v| v * v)).collect(),
                timestamps: self.timestamps.clone(),
                enl: self.enl,
                domain: Domain::Intensity,
            },
        }
    }

    /// Explicit conversion to the amplitude domain (square roots intensities).
    pub fn to_amplitude(&self) -> ImageStack {
        match self.domain {
            Domain::Amplitude => self.clone(),
            Domain::Intensity => ImageStack {
                images: self.images.iter().map(|img| img.map(|v| v.sqrt())).collect(),
                timestamps: self.timestamps.clone(),
                enl: self.enl,
                domain: Domain::Amplitude,
            },
        }
    }
}

/// Simplified GLR dissimilarity for two reflectivities sharing the ENL `enl`.
///
/// Total over nonnegative inputs: equal inputs (including both zero) give 0,
/// a single zero input gives the saturated sentinel `f64::INFINITY` (the
/// statistic diverges there; raster-level callers flag such pixels instead of
/// clipping them). Panics on negative or non-finite inputs.
pub fn s_glr(u_t: f64, u_t2: f64, enl: f64) -> f64 {
    assert!(u_t >= 0.0 && u_t2 >= 0.0, "reflectivities must be >= 0");
    assert!(enl > 0.0, "enl must be positive");
    if u_t == u_t2 {
        return 0.0;
    }
    if u_t == 0.0 || u_t2 == 0.0 {
        return f64::INFINITY;
    }
    // S = 2L ln cosh(d/2) with d = ln(u_t/u_t2), evaluated in forms that stay
    // relatively accurate both near d = 0 and for very large |d|.
    let ratio = u_t / u_t2;
    let abs_d = if (0.5..2.0).contains(&ratio) {
        ((u_t - u_t2).abs() / u_t.min(u_t2)).ln_1p()
    } else {
        ratio.ln().abs()
    };
    if abs_d > 1.0 {
        2.0 * enl * (0.5 * abs_d - std::f64::consts::LN_2 + (-abs_d).exp().ln_1p())
    } else {
        let sh = (0.25 * abs_d).sinh();
        2.0 * enl * (2.0 * sh * sh).ln_1p()
    }
}

/// General GLR dissimilarity for reflectivities with distinct ENLs
/// (L_t, L_t2). Reduces exactly to [`s_glr`] when the ENLs agree.
pub fn s_glr_general(u_t: f64, u_t2: f64, l_t: f64, l_t2: f64) -> Result<f64> {
    for (name, v) in [("u_t", u_t), ("u_t2", u_t2), ("l_t", l_t), ("l_t2", l_t2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let pooled = l_t * u_t + l_t2 * u_t2;
    let denom = l_t + l_t2;
    Ok(l_t * (pooled / (u_t * denom)).ln() + l_t2 * (pooled / (u_t2 * denom)).ln())
}

/// Sign of the backscatter evolution from time t to t': the sign of
/// ln sqrt(u_t2/u_t). +1 is an increase relative to the reference t.
pub fn change_sign(u_t: f64, u_t2: f64) -> i8 {
    if u_t2 > u_t {
        1
    } else if u_t2 < u_t {
        -1
    } else {
        0
    }
}

/// Chi-square mixture calibration of the no-change statistic 2ρS.
///
/// With ρ = 1 − 1/(4L̂) and ω₂ = −(1/4)(1 − 1/ρ)², the change probability is
/// F₁(2ρs) + ω₂ (F₅(2ρs) − F₁(2ρs)), clamped to [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct ProbabilityCalibration {
    rho: f64,
    omega2: f64,
}

impl ProbabilityCalibration {
    /// Requires enl > 1/4 so that ρ > 0.
    pub fn new(enl: f64) -> Result<Self> {
        if !(enl.is_finite() && enl > 0.25) {
            return Err(Error::Parameter(format!(
                "enl must exceed 1/4 for the chi-square calibration, got {enl}"
            )));
        }
        let rho = 1.0 - 1.0 / (4.0 * enl);
        let omega2 = -0.25 * (1.0 - 1.0 / rho).powi(2);
        Ok(ProbabilityCalibration { rho, omega2 })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn omega2(&self) -> f64 {
        self.omega2
    }

    /// Change probability of a dissimilarity s ≥ 0.
    pub fn probability(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0 || s.is_nan());
        if s == f64::INFINITY {
            return 1.0;
        }
        let delta = 2.0 * self.rho * s;
        let f1 = chi2_cdf(1.0, delta);
        let f5 = chi2_cdf(5.0, delta);
        (f1 + self.omega2 * (f5 - f1)).clamp(0.0, 1.0)
    }
}

/// Change probability of a dissimilarity `s` at the given ENL.
pub fn change_probability(s: f64, enl: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("dissimilarity must be >= 0, got {s}")));
    }
    Ok(ProbabilityCalibration::new(enl)?.probability(s))
}

const THRESHOLD_MAX_ITER: usize = 200;
const THRESHOLD_PROB_TOL: f64 = 1e-8;

/// Inverts the change-probability mapping: the dissimilarity s* with
/// probability(s*) = tau, solved by bisection to |Δp| < 1e-8.
pub fn threshold_from_probability(tau: f64, enl: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Parameter(format!("tau must lie in (0, 1), got {tau}")));
    }
    let cal = ProbabilityCalibration::new(enl)?;
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut grow = 0;
    while cal.probability(hi) < tau {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Numerical("threshold bracket expansion failed".into()));
        }
    }
    for _ in 0..THRESHOLD_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let p = cal.probability(mid);
        if (p - tau).abs() < THRESHOLD_PROB_TOL {
            return Ok(mid);
        }
        if p < tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numerical(format!(
        "threshold bisection did not reach |dp| < {THRESHOLD_PROB_TOL} in {THRESHOLD_MAX_ITER} iterations"
    )))
}

/// Per-pixel GLR dissimilarity map for one image pair.
#[derive(Debug, Clone)]
pub struct SimilarityMap {
    pub values: Raster,
    /// (t, t') image indices the map was computed from.
    pub pair: (usize, usize),
    /// Pixels where a zero input saturated the statistic.
    pub saturated: Vec<bool>,
}

/// Per-pixel calibrated change probability for one image pair.
#[derive(Debug, Clone)]
pub struct ProbabilityMap {
    pub values: Raster,
    pub pair: (usize, usize),
}

/// Boolean change mask together with the dissimilarity threshold it encodes.
#[derive(Debug, Clone)]
pub struct ChangeMask {
    width: usize,
    height: usize,
    pub mask: Vec<bool>,
    pub threshold: f64,
}

impl ChangeMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Eq.-4 thresholding: mask = (S ≥ τ) elementwise.
pub fn threshold_map(map: &SimilarityMap, tau_s: f64) -> ChangeMask {
    ChangeMask {
        width: map.values.width(),
        height: map.values.height(),
        mask: map.values.data().iter().map(|&s| s as f64 >= tau_s).collect(),
        threshold: tau_s,
    }
}

/// Full single-pair detection product.
#[derive(Debug, Clone)]
pub struct PairDetection {
    pub similarity: SimilarityMap,
    pub probability: ProbabilityMap,
    pub mask: ChangeMask,
    /// Per-pixel sign of the change (+1 backscatter increase w.r.t. t).
    pub signs: Vec<i8>,
}

/// Composes dissimilarity, sign, probability and thresholding for the image
/// pair (t, t2) of an intensity stack. `tau` is the change probability the
/// mask threshold is derived from.
pub fn pair_detect(stack: &ImageStack, t: usize, t2: usize, tau: f64) -> Result<PairDetection> {
    if stack.domain() != Domain::Intensity {
        return Err(Error::Input(
            "pair_detect requires an intensity-domain stack (convert amplitudes first)".into(),
        ));
    }
    let m = stack.len();
    if t >= m || t2 >= m {
        return Err(Error::Input(format!(
            "pair indices ({t}, {t2}) out of range for {m} images"
        )));
    }
    let enl = stack.enl();
    let cal = ProbabilityCalibration::new(enl)?;
    let tau_s = threshold_from_probability(tau, enl)?;
    let a = stack.image(t).data();
    let b = stack.image(t2).data();

    let per_pixel: Vec<(f32, f32, bool, i8)> = a
        .par_iter()
        .zip(b.par_iter())
        .map(|(&ua, &ub)| {
            let (ua, ub) = (ua as f64, ub as f64);
            let s = s_glr(ua, ub, enl);
            let p = cal.probability(s);
            (s as f32, p as f32, s.is_infinite(), change_sign(ua, ub))
        })
        .collect();

    let width = stack.width();
    let height = stack.height();
    let mut values = Vec::with_capacity(per_pixel.len());
    let mut probs = Vec::with_capacity(per_pixel.len());
    let mut saturated = Vec::with_capacity(per_pixel.len());
    let mut signs = Vec::with_capacity(per_pixel.len());
    for (s, p, sat, sign) in per_pixel {
        values.push(s);
        probs.push(p);
        saturated.push(sat);
        signs.push(sign);
    }
    let similarity = SimilarityMap {
        values: Raster::from_vec(width, height, values)?,
        pair: (t, t2),
        saturated,
    };
    let mask = threshold_map(&similarity, tau_s);
    Ok(PairDetection {
        probability: ProbabilityMap {
            values: Raster::from_vec(width, height, probs)?,
            pair: (t, t2),
        },
        mask,
        signs,
        similarity,
    })
}

/// Mean-amplitude weighted dissimilarity: exp((sqrt u + sqrt u')/2) · S.
/// Saturates to +inf on overflow (raster callers flag non-finite pixels).
pub fn weighted_sglr_mean(u_t: f64, u_t2: f64, enl: f64) -> f64 {
    ((u_t.sqrt() + u_t2.sqrt()) * 0.5).exp() * s_glr(u_t, u_t2, enl)
}

/// Amplitude-distance weighted dissimilarity: ln|sqrt u − sqrt u'| · S.
/// Defined as 0 at equal inputs (the vanishing S factor dominates the
/// singular log; convention, the weight itself is negative for distances
/// below 1).
pub fn weighted_sglr_distance(u_t: f64, u_t2: f64, enl: f64) -> f64 {
    if u_t == u_t2 {
        return 0.0;
    }
    (u_t.sqrt() - u_t2.sqrt()).abs().ln() * s_glr(u_t, u_t2, enl)
}

/// Which dissimilarity a pairwise detection runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    None,
    Mean,
    Distance,
}

/// Detection product for the weighted dissimilarity variants. Their values
/// can be negative (distance weights below unit amplitude distance) and the
/// threshold has no calibrated default; it is supplied empirically.
#[derive(Debug, Clone)]
pub struct WeightedDetection {
    pub values: Raster,
    pub pair: (usize, usize),
    pub signs: Vec<i8>,
    pub mask: ChangeMask,
    /// Pixels whose weight or dissimilarity saturated (non-finite value).
    pub saturated: Vec<bool>,
}

/// Pairwise detection with a weighted dissimilarity and an empirical raw
/// threshold (mask = weighted value ≥ threshold).
pub fn weighted_detect(
    stack: &ImageStack,
    t: usize,
    t2: usize,
    kind: WeightKind,
    threshold: f64,
) -> Result<WeightedDetection> {
    if stack.domain() != Domain::Intensity {
        return Err(Error::Input(
            "weighted_detect requires an intensity-domain stack".into(),
        ));
    }
    let m = stack.len();
    if t >= m || t2 >= m {
        return Err(Error::Input(format!(
            "pair indices ({t}, {t2}) out of range for {m} images"
        )));
    }
    let enl = stack.enl();
    let a = stack.image(t).data();
    let b = stack.image(t2).data();
    let per_pixel: Vec<(f32, bool, i8)> = a
        .par_iter()
        .zip(b.par_iter())
        .map(|(&ua, &ub)| {
            let (ua, ub) = (ua as f64, ub as f64);
            let w = match kind {
                WeightKind::None => s_glr(ua, ub, enl),
                WeightKind::Mean => weighted_sglr_mean(ua, ub, enl),
                WeightKind::Distance => weighted_sglr_distance(ua, ub, enl),
            };
            (w as f32, !w.is_finite(), change_sign(ua, ub))
        })
        .collect();
    let mut values = Vec::with_capacity(per_pixel.len());
    let mut saturated = Vec::with_capacity(per_pixel.len());
    let mut signs = Vec::with_capacity(per_pixel.len());
    for (w, sat, sign) in per_pixel {
        values.push(w);
        saturated.push(sat);
        signs.push(sign);
    }
    let values = Raster::from_vec(stack.width(), stack.height(), values)?;
    let mask = ChangeMask {
        width: values.width(),
        height: values.height(),
        mask: values.data().iter().map(|&v| v as f64 >= threshold).collect(),
        threshold,
    };
    Ok(WeightedDetection {
        values,
        pair: (t, t2),
        signs,
        mask,
        saturated,
    })
}

/// One step of a cumulative monitoring run.
#[derive(Debug, Clone)]
pub struct MonitorStep {
    /// Index of the compared image.
    pub t: usize,
    pub detection: PairDetection,
    /// Display background: reference image divided by the compared image.
    pub ratio: Raster,
}

/// Pairwise detection of every image against a fixed reference, in time
/// order, with the reference/other ratio image for display.
pub fn cumulative_monitor(
    stack: &ImageStack,
    reference: usize,
    tau: f64,
) -> Result<Vec<MonitorStep>> {
    if reference >= stack.len() {
        return Err(Error::Input(format!(
            "reference index {reference} out of range for {} images",
            stack.len()
        )));
    }
    let mut steps = Vec::new();
    for t in 0..stack.len() {
        if t == reference {
            continue;
        }
        let detection = pair_detect(stack, reference, t, tau)?;
        let rimg = stack.image(reference).data();
        let timg = stack.image(t).data();
        let ratio: Vec<f32> = rimg.iter().zip(timg).map(|(&r, &o)| r / o).collect();
        steps.push(MonitorStep {
            t,
            detection,
            ratio: Raster::from_vec(stack.width(), stack.height(), ratio)?,
        });
    }
    Ok(steps)
}
