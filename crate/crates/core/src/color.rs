//! HSV to RGB conversion shared by the visualization modules.

/// Piecewise HSV→RGB: h in [0, 1) (wrapping), s and v in [0, 1].
///
/// With i = floor(6h) and f = 6h − i:
/// p = v(1−s), q = v(1−fs), t = v(1−(1−f)s), and the sector i selects
/// (v,t,p), (q,v,p), (p,v,t), (p,q,v), (t,v,q) or (v,p,q). Channels are
/// quantized with round-half-away-from-zero to bytes.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    debug_assert!((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&v));
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor() as u32 % 6;
    let f = h - h.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    let (r, g, b) = match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, v, q),
        _ => (v, p, q),
    };
    [quantize(r), quantize(g), quantize(b)]
}

fn quantize(c: f64) -> u8 {
    (255.0 * c).round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primary_colors() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(1.0 / 3.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(2.0 / 3.0, 1.0, 1.0), [0, 0, 255]);
        assert_eq!(hsv_to_rgb(0.5, 1.0, 1.0), [0, 255, 255]);
    }

    #[test]
    fn zero_saturation_is_gray() {
        for v in [0.0, 0.25, 1.0] {
            let px = hsv_to_rgb(0.7, 0.0, v);
            assert_eq!(px[0], px[1]);
            assert_eq!(px[1], px[2]);
        }
    }
}
