use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CameraError, Result};
use crate::geometry::Point2;

/// Planar projective map, stored with the bottom-right entry scaled to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    /// Normalizes by the bottom-right entry when it is usable, otherwise by
    /// the Frobenius norm.
    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        let h33 = m[(2, 2)];
        let m = if h33.abs() > 1e-12 * m.norm() {
            m / h33
        } else {
            m / m.norm()
        };
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        Point2::new(v.x / v.z, v.y / v.z)
    }

    pub fn inverse(&self) -> Option<Homography> {
        self.m.try_inverse().map(Homography::from_matrix)
    }

    pub fn compose(&self, first: &Homography) -> Homography {
        Homography::from_matrix(self.m * first.m)
    }
}

/// Similarity transform moving the centroid to the origin with mean
/// distance √2.
fn normalizer(points: &[Point2]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points
        .iter()
        .map(|p| (p.x - cx).hypot(p.y - cy))
        .sum::<f64>()
        / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn collinear(a: Point2, b: Point2, c: Point2, scale: f64) -> bool {
    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    cross.abs() <= 1e-9 * scale * scale
}

fn check_configuration(points: &[Point2]) -> Result<()> {
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(CameraError::DegeneratePoints);
        }
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let scale = (max_x - min_x).hypot(max_y - min_y);
    if scale <= 0.0 {
        return Err(CameraError::DegeneratePoints);
    }
    if points.len() == 4 {
        for skip in 0..4 {
            let tri: Vec<Point2> = (0..4).filter(|&i| i != skip).map(|i| points[i]).collect();
            if collinear(tri[0], tri[1], tri[2], scale) {
                return Err(CameraError::DegeneratePoints);
            }
        }
    } else {
        // at least one triple must span an area
        let a = points[0];
        let b = points
            .iter()
            .copied()
            .max_by(|p, q| p.distance(&a).total_cmp(&q.distance(&a)))
            .expect("non-empty");
        if points.iter().all(|&c| collinear(a, b, c, scale)) {
            return Err(CameraError::DegeneratePoints);
        }
    }
    Ok(())
}

/// Normalized direct linear transform over `(source, target)` pairs.
pub fn estimate_homography(pairs: &[(Point2, Point2)]) -> Result<Homography> {
    if pairs.len() < 4 {
        return Err(CameraError::DegeneratePoints);
    }
    let src: Vec<Point2> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Point2> = pairs.iter().map(|p| p.1).collect();
    check_configuration(&src)?;
    check_configuration(&dst)?;

    let ts = normalizer(&src);
    let td = normalizer(&dst);
    let norm = |t: &Matrix3<f64>, p: Point2| {
        let v = t * Vector3::new(p.x, p.y, 1.0);
        (v.x, v.y)
    };

    // Pad to at least 9 rows so the SVD yields the full right null space.
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in pairs.iter().enumerate() {
        let (x, y) = norm(&ts, *s);
        let (u, v) = norm(&td, *d);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(CameraError::DegeneratePoints)?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nine singular values");
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[7] <= 1e-12 * sv[0] {
        return Err(CameraError::DegeneratePoints);
    }
    let h = v_t.row(min_idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or(CameraError::DegeneratePoints)?;
    let m = td_inv * hn * ts;
    if m.determinant().abs() <= f64::EPSILON * m.norm().powi(3) {
        return Err(CameraError::DegeneratePoints);
    }
    Ok(Homography::from_matrix(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn unit_square_to_itself_is_identity() {
        let pairs: Vec<_> = square().into_iter().map(|p| (p, p)).collect();
        let h = estimate_homography(&pairs).unwrap();
        assert!((h.matrix() - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn rotated_square_gives_rotation() {
        // 90° counterclockwise about the origin: (x, y) -> (-y, x)
        let pairs: Vec<_> = square()
            .into_iter()
            .map(|p| (p, Point2::new(-p.y, p.x)))
            .collect();
        let h = estimate_homography(&pairs).unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((h.matrix() - expected).norm() < 1e-12);
    }

    #[test]
    fn random_quads_map_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 50 {
            let pairs: Vec<(Point2, Point2)> = (0..4)
                .map(|_| {
                    (
                        Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
                        Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
                    )
                })
                .collect();
            let Ok(h) = estimate_homography(&pairs) else {
                continue;
            };
            for (s, d) in &pairs {
                let m = h.apply(*s);
                assert!(m.distance(d) < 1e-8, "{m:?} vs {d:?}");
            }
            checked += 1;
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let pairs = vec![
            (Point2::new(0.0, 0.0), Point2::new(0.0, 0.0)),
            (Point2::new(1.0, 1.0), Point2::new(1.0, 0.0)),
            (Point2::new(2.0, 2.0), Point2::new(1.0, 1.0)),
            (Point2::new(0.0, 1.0), Point2::new(0.0, 1.0)),
        ];
        assert_eq!(estimate_homography(&pairs), Err(CameraError::DegeneratePoints));
        assert_eq!(
            estimate_homography(&pairs[..3]),
            Err(CameraError::DegeneratePoints)
        );
    }

    proptest! {
        #[test]
        fn apply_then_inverse_round_trips(
            a in 0.5..2.0f64, b in -0.3..0.3f64, c in -50.0..50.0f64,
            d in -0.3..0.3f64, e in 0.5..2.0f64, f in -50.0..50.0f64,
            g in -1e-3..1e-3f64, h in -1e-3..1e-3f64,
            x in 0.0..300.0f64, y in 0.0..300.0f64,
        ) {
            let hm = Homography::from_matrix(Matrix3::new(a, b, c, d, e, f, g, h, 1.0));
            let inv = hm.inverse().unwrap();
            let p = Point2::new(x, y);
            prop_assert!(inv.apply(hm.apply(p)).distance(&p) < 1e-6);
        }
    }
}
