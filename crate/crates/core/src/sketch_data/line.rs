//! Integer midpoint line walk.

/// Pixels of the 1-pixel-wide discrete segment from `(x0, y0)` to `(x1, y1)`,
/// both endpoints included, in walk order.
///
/// Along the major axis every integer coordinate is visited once; the minor
/// coordinate at major step `i` is `floor((2*i*dm + D) / (2*D))` away from the
/// start, i.e. the ideal line rounded half away from the start point.
pub fn line_pixels(x0: i32, y0: i32, x1: i32, y1: i32) -> Vec<(i32, i32)> {
    let dx = (x1 - x0).abs();
    let dy = (y1 - y0).abs();
    let sx = if x1 >= x0 { 1 } else { -1 };
    let sy = if y1 >= y0 { 1 } else { -1 };
    let x_major = dx >= dy;
    let (major_len, minor_len) = if x_major { (dx, dy) } else { (dy, dx) };

    let mut out = Vec::with_capacity(major_len as usize + 1);
    if major_len == 0 {
        out.push((x0, y0));
        return out;
    }
    let two_major = 2 * major_len;
    // err = 2*i*minor_len + major_len - 2*major_len*minor, kept in [0, 2*major_len)
    let mut err = major_len;
    let mut minor = 0;
    for i in 0..=major_len {
        out.push(if x_major {
            (x0 + sx * i, y0 + sy * minor)
        } else {
            (x0 + sx * minor, y0 + sy * i)
        });
        err += 2 * minor_len;
        if err >= two_major {
            minor += 1;
            err -= two_major;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_segment_is_one_pixel() {
        assert_eq!(line_pixels(3, 4, 3, 4), vec![(3, 4)]);
    }

    #[test]
    fn horizontal_and_diagonal() {
        assert_eq!(line_pixels(0, 0, 3, 0), vec![(0, 0), (1, 0), (2, 0), (3, 0)]);
        assert_eq!(line_pixels(2, 2, 0, 0), vec![(2, 2), (1, 1), (0, 0)]);
    }

    #[test]
    fn endpoints_always_hit() {
        for &(x0, y0, x1, y1) in &[(0, 0, 7, 3), (5, -2, -4, 9), (1, 1, 1, -6), (0, 0, -3, 1)] {
            let px = line_pixels(x0, y0, x1, y1);
            assert_eq!(px[0], (x0, y0));
            assert_eq!(*px.last().unwrap(), (x1, y1));
            let expected = (x1 - x0).abs().max((y1 - y0).abs()) as usize + 1;
            assert_eq!(px.len(), expected);
        }
    }

    #[test]
    fn consecutive_pixels_are_8_connected() {
        let px = line_pixels(-10, 3, 17, -8);
        for w in px.windows(2) {
            assert!((w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1);
        }
    }
}
