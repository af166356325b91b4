//! Small fixed-size vector helpers.
//!
//! Points live in `[f64; 3]` regardless of the ambient dimension; 2D data
//! keeps the third component at zero, so dot products and norms over all
//! three components are correct in both dimensions. The ambient dimension
//! is carried by the containing structure (body, grid, interface).

pub type Point = [f64; 3];

pub const ORIGIN: Point = [0.0, 0.0, 0.0];

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// Normalized copy, or `None` for a (near-)zero vector.
pub fn unit(a: Point) -> Option<Point> {
    let n = norm(a);
    if n < 1e-300 {
        None
    } else {
        Some(scale(a, 1.0 / n))
    }
}

/// Cross product (3D; for 2D inputs the result is along the z-axis).
#[inline]
pub fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// 2D perpendicular, rotated +90 degrees.
#[inline]
pub fn perp2(a: Point) -> Point {
    [-a[1], a[0], 0.0]
}

/// Unit vector at angle `theta` in the plane.
#[inline]
pub fn dir2(theta: f64) -> Point {
    [theta.cos(), theta.sin(), 0.0]
}

/// `count` evenly spaced planar unit directions covering `[0, span)`.
///
/// `span` is `2*PI` for full scans and `PI` for axis scans where `a` and
/// `-a` are equivalent.
pub fn planar_directions(count: usize, span: f64) -> Vec<Point> {
    (0..count)
        .map(|k| dir2(span * k as f64 / count as f64))
        .collect()
}

/// Fibonacci sphere: `count` roughly equidistributed unit directions in 3D.
pub fn fibonacci_sphere(count: usize) -> Vec<Point> {
    let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
    (0..count)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (k as f64 / golden).fract();
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perp_is_orthogonal() {
        let a = dir2(0.7);
        assert!(dot(a, perp2(a)).abs() < 1e-15);
    }

    #[test]
    fn fibonacci_sphere_units() {
        for d in fibonacci_sphere(64) {
            assert!((norm(d) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn planar_directions_include_axes() {
        let dirs = planar_directions(1440, 2.0 * std::f64::consts::PI);
        assert!((dirs[0][0] - 1.0).abs() < 1e-15);
        assert!((dirs[360][1] - 1.0).abs() < 1e-12);
    }
}
