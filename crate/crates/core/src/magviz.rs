//! Signed change-magnitude normalization and rainbow rendering.
//!
//! Dissimilarities are squashed to [0, 255] with the two-branch rule
//!
//! ```text
//! q = 2 (s − α₁) / (α₂ − α₁)
//! out = 255            if q ≥ 2
//!       round(127 q + 1) clamped to [0, 255]   otherwise
//! ```
//!
//! then multiplied by the change sign to land in [−255, 255]. The defaults
//! α₁ = −2, α₂ = 2 suppress outliers; the lower half of the range only comes
//! into play for the weighted dissimilarities, which can be negative.

use std::sync::LazyLock;

use crate::color::hsv_to_rgb;
use crate::error::{Error, Result};
use crate::raster::{Raster, RgbRaster};

pub const DEFAULT_ALPHA1: f64 = -2.0;
pub const DEFAULT_ALPHA2: f64 = 2.0;

/// Normalizes a dissimilarity to [0, 255] (round-half-away-from-zero).
pub fn normalize_magnitude(s: f64, alpha1: f64, alpha2: f64) -> Result<u8> {
    if !(alpha2 > alpha1) {
        return Err(Error::Parameter(format!(
            "alpha2 must exceed alpha1, got [{alpha1}, {alpha2}]"
        )));
    }
    let q = 2.0 * (s - alpha1) / (alpha2 - alpha1);
    if q >= 2.0 {
        return Ok(255);
    }
    Ok((127.0 * q + 1.0).round().clamp(0.0, 255.0) as u8)
}

/// Signed magnitude in [−255, 255]: `normalize_magnitude(s) × sign`.
pub fn signed_magnitude(s: f64, sign: i8, alpha1: f64, alpha2: f64) -> Result<i16> {
    Ok(normalize_magnitude(s, alpha1, alpha2)? as i16 * sign as i16)
}

/// Per-pixel signed magnitude raster.
#[derive(Debug, Clone)]
pub struct SignedMagnitudeMap {
    width: usize,
    height: usize,
    pub values: Vec<i16>,
}

impl SignedMagnitudeMap {
    /// Builds the map from a dissimilarity raster and its sign map.
    /// Non-finite dissimilarities (saturated pixels) take the 255 branch.
    pub fn from_values(
        values: &Raster,
        signs: &[i8],
        alpha1: f64,
        alpha2: f64,
    ) -> Result<SignedMagnitudeMap> {
        if signs.len() != values.len() {
            return Err(Error::Input(format!(
                "{} signs for {} pixels",
                signs.len(),
                values.len()
            )));
        }
        let data = values
            .data()
            .iter()
            .zip(signs)
            .map(|(&s, &sign)| signed_magnitude(s as f64, sign, alpha1, alpha2))
            .collect::<Result<Vec<i16>>>()?;
        Ok(SignedMagnitudeMap {
            width: values.width(),
            height: values.height(),
            values: data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// The values as an f32 raster (integers in [−255, 255] are exact).
    pub fn to_raster(&self) -> Raster {
        Raster::from_vec(
            self.width,
            self.height,
            self.values.iter().map(|&v| v as f32).collect(),
        )
        .expect("dimensions are consistent by construction")
    }
}

/// 511-entry rainbow lookup: index 0 ↔ value −255 (blue, 240°), index 255 ↔
/// value 0 (center), index 510 ↔ value +255 (red, 0°). Hue sweeps linearly
/// at full saturation and value; see docs/rainbow.md for the exact recipe.
pub static RAINBOW_TABLE: LazyLock<[[u8; 3]; 511]> = LazyLock::new(|| {
    let mut table = [[0u8; 3]; 511];
    for (i, entry) in table.iter_mut().enumerate() {
        let hue_deg = 240.0 * (510 - i) as f64 / 510.0;
        *entry = hsv_to_rgb(hue_deg / 360.0, 1.0, 1.0);
    }
    table
});

/// Pure-lookup colorization of a signed magnitude map.
pub fn rainbow_colorize(map: &SignedMagnitudeMap) -> RgbRaster {
    let table = &*RAINBOW_TABLE;
    let mut rgb = RgbRaster::new(map.width(), map.height());
    for (i, &v) in map.values.iter().enumerate() {
        rgb.set_index(i, table[(v as i32 + 255) as usize]);
    }
    rgb
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn branch_boundary_saturates() {
        // s = 2 with defaults: q = 2 exactly -> first branch
        assert_eq!(normalize_magnitude(2.0, -2.0, 2.0).unwrap(), 255);
        assert_eq!(normalize_magnitude(5.0, -2.0, 2.0).unwrap(), 255);
    }

    #[test]
    fn midpoint_and_lower_bound() {
        assert_eq!(normalize_magnitude(0.0, -2.0, 2.0).unwrap(), 128);
        assert_eq!(normalize_magnitude(-2.0, -2.0, 2.0).unwrap(), 1);
        // below alpha1 clamps to 0
        assert_eq!(normalize_magnitude(-4.0, -2.0, 2.0).unwrap(), 0);
    }

    #[test]
    fn invalid_alphas_rejected() {
        assert!(normalize_magnitude(0.0, 2.0, -2.0).is_err());
        assert!(normalize_magnitude(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn signed_composition() {
        let m = normalize_magnitude(0.446, -2.0, 2.0).unwrap() as i16;
        assert_eq!(signed_magnitude(0.446, 1, -2.0, 2.0).unwrap(), m);
        assert_eq!(signed_magnitude(0.446, -1, -2.0, 2.0).unwrap(), -m);
        assert_eq!(signed_magnitude(0.446, 0, -2.0, 2.0).unwrap(), 0);
        assert_eq!(signed_magnitude(5.0, -1, -2.0, 2.0).unwrap(), -255);
    }

    #[test]
    fn saturated_similarity_hits_saturation_branch() {
        assert_eq!(signed_magnitude(f64::INFINITY, 1, -2.0, 2.0).unwrap(), 255);
    }

    #[test]
    fn rainbow_endpoints() {
        let table = &*RAINBOW_TABLE;
        assert_eq!(table[0], [0, 0, 255], "value -255 is the blue end");
        assert_eq!(table[510], [255, 0, 0], "value +255 is the red end");
        assert_eq!(table[255], [0, 255, 0], "center sits at 120 degrees");
    }

    #[test]
    fn colorize_is_pure_lookup() {
        let map = SignedMagnitudeMap {
            width: 3,
            height: 1,
            values: vec![-255, 0, 255],
        };
        let rgb = rainbow_colorize(&map);
        assert_eq!(rgb.get(0, 0), [0, 0, 255]);
        assert_eq!(rgb.get(1, 0), [0, 255, 0]);
        assert_eq!(rgb.get(2, 0), [255, 0, 0]);
        assert_eq!(rainbow_colorize(&map), rgb);
    }

    proptest! {
        #[test]
        fn prop_monotone_and_bounded(a in -10.0_f64..10.0, b in -10.0_f64..10.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a + 1.0) };
            let m1 = normalize_magnitude(lo, -2.0, 2.0).unwrap();
            let m2 = normalize_magnitude(hi, -2.0, 2.0).unwrap();
            prop_assert!(m1 <= m2);
        }

        #[test]
        fn prop_odd_in_sign(s in 0.0_f64..10.0) {
            let plus = signed_magnitude(s, 1, -2.0, 2.0).unwrap();
            let minus = signed_magnitude(s, -1, -2.0, 2.0).unwrap();
            prop_assert_eq!(plus, -minus);
        }
    }
}
