//! Pinhole camera model, planar homographies, chessboard calibration and
//! screen rectification.

mod calibration;
mod homography;
mod rectify;

pub use calibration::{calibrate, Calibration, CalibrationOptions, ChessboardView};
pub use homography::{estimate_homography, Homography};
pub use rectify::{measure_deflection, rectify_screen, undistort_image, ScreenQuad};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("need at least {needed} calibration views, got {got}")]
    InsufficientViews { needed: usize, got: usize },
    #[error("degenerate calibration configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("degenerate point configuration for homography")]
    DegeneratePoints,
    #[error("screen quad lies outside the photo")]
    QuadOutOfBounds,
    #[error("degenerate screen quad: {0}")]
    DegenerateQuad(&'static str),
}

pub type Result<T> = std::result::Result<T, CameraError>;

/// Linear intrinsic parameters plus an optional single radial term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Skew coefficient; zero when the image axes are perpendicular.
    #[serde(default)]
    pub s: f64,
    #[serde(default)]
    pub k1: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, s: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            s,
            k1: 0.0,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, self.s, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Pixel of a normalized (undistorted) image-plane point.
    pub fn normalized_to_pixel(&self, xn: f64, yn: f64) -> Point2 {
        let d = 1.0 + self.k1 * (xn * xn + yn * yn);
        let (xd, yd) = (xn * d, yn * d);
        Point2::new(self.fx * xd + self.s * yd + self.cx, self.fy * yd + self.cy)
    }

    /// Inverse of [`CameraIntrinsics::normalized_to_pixel`]; the radial term
    /// is removed by fixed-point iteration.
    pub fn pixel_to_normalized(&self, p: Point2) -> (f64, f64) {
        let yd = (p.y - self.cy) / self.fy;
        let xd = (p.x - self.cx - self.s * yd) / self.fx;
        if self.k1 == 0.0 {
            return (xd, yd);
        }
        let (mut x, mut y) = (xd, yd);
        for _ in 0..20 {
            let d = 1.0 + self.k1 * (x * x + y * y);
            x = xd / d;
            y = yd / d;
        }
        (x, y)
    }
}

/// World-to-camera rigid transform: `p_cam = R · p_world + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    /// Axis-angle rotation vector, radians.
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl Default for CameraPose {
    fn default() -> Self {
        Self {
            rotation: [0.0; 3],
            translation: [0.0; 3],
        }
    }
}

impl CameraPose {
    pub fn from_rotation(r: &Rotation3<f64>, t: Vector3<f64>) -> Self {
        let v = r.scaled_axis();
        Self {
            rotation: [v.x, v.y, v.z],
            translation: [t.x, t.y, t.z],
        }
    }

    pub fn rotation_matrix(&self) -> Rotation3<f64> {
        Rotation3::from_scaled_axis(Vector3::from(self.rotation))
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p + Vector3::from(self.translation)
    }

    /// Homography from world-plane (Z = 0) coordinates to pixels, ignoring
    /// lens distortion.
    pub fn plane_homography(&self, intrinsics: &CameraIntrinsics) -> Homography {
        let r = self.rotation_matrix();
        let r = r.matrix();
        let m = Matrix3::from_columns(&[
            r.column(0).into_owned(),
            r.column(1).into_owned(),
            Vector3::from(self.translation),
        ]);
        Homography::from_matrix(intrinsics.matrix() * m)
    }
}

pub fn project(
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    world: &Vector3<f64>,
) -> Result<Point2> {
    let pc = pose.transform(world);
    if pc.z <= 0.0 {
        return Err(CameraError::BehindCamera(pc.z));
    }
    Ok(intrinsics.normalized_to_pixel(pc.x / pc.z, pc.y / pc.z))
}

/// Intersects the viewing ray of `pixel` with the world plane Z = 0.
pub fn backproject_to_plane(
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    pixel: Point2,
) -> Point2 {
    let (xn, yn) = intrinsics.pixel_to_normalized(pixel);
    let undistorted = CameraIntrinsics {
        k1: 0.0,
        ..*intrinsics
    }
    .normalized_to_pixel(xn, yn);
    pose.plane_homography(intrinsics)
        .inverse()
        .expect("camera plane homography is invertible")
        .apply(undistorted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_camera_projects_normalized_coordinates() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0.0);
        let p = project(&k, &CameraPose::default(), &Vector3::new(1.0, 2.0, 1.0)).unwrap();
        assert_eq!(p, Point2::new(1.0, 2.0));
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let k = CameraIntrinsics::new(700.0, 700.0, 320.0, 240.0, 0.0);
        let p = project(&k, &CameraPose::default(), &Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(p, Point2::new(320.0, 240.0));
    }

    #[test]
    fn project_matches_explicit_matrix_product() {
        let k = CameraIntrinsics::new(800.0, 820.0, 320.0, 240.0, 2.0);
        let pose = CameraPose {
            rotation: [0.1, -0.2, 0.05],
            translation: [10.0, -5.0, 400.0],
        };
        let w = Vector3::new(30.0, -20.0, 15.0);
        // K (R w + t), then dehomogenize
        let r = Rotation3::from_scaled_axis(Vector3::new(0.1, -0.2, 0.05));
        let pc = r * w + Vector3::new(10.0, -5.0, 400.0);
        let km = Matrix3::new(800.0, 2.0, 320.0, 0.0, 820.0, 240.0, 0.0, 0.0, 1.0);
        let h = km * pc;
        let p = project(&k, &pose, &w).unwrap();
        assert!((p.x - h.x / h.z).abs() < 1e-9);
        assert!((p.y - h.y / h.z).abs() < 1e-9);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0.0);
        let e = project(&k, &CameraPose::default(), &Vector3::new(0.0, 0.0, -1.0)).unwrap_err();
        assert!(matches!(e, CameraError::BehindCamera(_)));
    }

    #[test]
    fn centered_offset_scales_linearly_without_distortion() {
        let k = CameraIntrinsics::new(800.0, 820.0, 320.0, 240.0, 0.0);
        let a = k.normalized_to_pixel(0.1, -0.05);
        let b = k.normalized_to_pixel(0.2, -0.1);
        assert!(((b.x - 320.0) - 2.0 * (a.x - 320.0)).abs() < 1e-9);
        assert!(((b.y - 240.0) - 2.0 * (a.y - 240.0)).abs() < 1e-9);
    }

    #[test]
    fn radial_term_round_trips() {
        let k = CameraIntrinsics {
            k1: -0.12,
            ..CameraIntrinsics::new(800.0, 820.0, 320.0, 240.0, 1.0)
        };
        let p = k.normalized_to_pixel(0.3, -0.2);
        let (x, y) = k.pixel_to_normalized(p);
        assert!((x - 0.3).abs() < 1e-9 && (y + 0.2).abs() < 1e-9);
    }

    #[test]
    fn backprojection_inverts_projection_on_the_plane() {
        let k = CameraIntrinsics::new(900.0, 900.0, 640.0, 360.0, 0.0);
        let pose = CameraPose {
            rotation: [0.05, 0.02, 0.3],
            translation: [-20.0, -150.0, 450.0],
        };
        let w = Vector3::new(12.0, 160.0, 0.0);
        let px = project(&k, &pose, &w).unwrap();
        let back = backproject_to_plane(&k, &pose, px);
        assert!((back.x - 12.0).abs() < 1e-8 && (back.y - 160.0).abs() < 1e-8);
    }
}
