//! Small helpers over `[f64; 3]`.

pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm2(a: Vec3) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    libm::sqrt(norm2(a))
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Wraps each component into `[-edge/2, edge/2)`.
///
/// The interval is half-open: a component of exactly `+edge/2` maps to
/// `-edge/2`, and `-edge/2` is left unchanged.
pub fn minimum_image(d: Vec3, cell_edge: f64) -> Vec3 {
    let wrap = |x: f64| x - cell_edge * libm::floor(x / cell_edge + 0.5);
    [wrap(d[0]), wrap(d[1]), wrap(d[2])]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_point_unchanged() {
        assert_eq!(minimum_image([0.1, 0.0, 0.0], 6.0), [0.1, 0.0, 0.0]);
    }

    #[test]
    fn wraps_across_cell() {
        let d = minimum_image([5.9, 0.0, 0.0], 6.0);
        assert!((d[0] + 0.1).abs() < 1e-12);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn half_open_boundary() {
        assert_eq!(minimum_image([-3.0, 0.0, 0.0], 6.0)[0], -3.0);
        assert_eq!(minimum_image([3.0, 0.0, 0.0], 6.0)[0], -3.0);
    }

    #[test]
    fn far_images_fold_back() {
        let d = minimum_image([-14.5, 13.0, 600.2], 6.0);
        for x in d {
            assert!((-3.0..3.0).contains(&x));
        }
        assert!((d[0] + 2.5).abs() < 1e-12);
        assert!((d[1] - 1.0).abs() < 1e-12);
        assert!((d[2] - 0.2).abs() < 1e-9);
    }
}
