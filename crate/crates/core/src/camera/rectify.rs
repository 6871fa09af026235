use serde::{Deserialize, Serialize};

use super::{estimate_homography, CameraError, CameraIntrinsics, Result};
use crate::geometry::Point2;
use crate::image::Image;

/// A detected screen: its corners in photo pixels (clockwise from the
/// top-left), the in-plane deflection, the millimeters-per-pixel scale, and
/// the top-left corner's position in the arm's base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenQuad {
    pub corners: [Point2; 4],
    pub deflection_angle: f64,
    pub scale: f64,
    #[serde(default)]
    pub origin: Point2,
}

impl ScreenQuad {
    pub fn top_width(&self) -> f64 {
        self.corners[0].distance(&self.corners[1])
    }

    pub fn bottom_width(&self) -> f64 {
        self.corners[3].distance(&self.corners[2])
    }

    pub fn pixel_width(&self) -> f64 {
        (self.top_width() + self.bottom_width()) / 2.0
    }

    pub fn pixel_height(&self) -> f64 {
        (self.corners[0].distance(&self.corners[3]) + self.corners[1].distance(&self.corners[2])) / 2.0
    }

    /// Signed area by the shoelace formula; positive for clockwise corners
    /// in image coordinates (y down).
    pub fn signed_area(&self) -> f64 {
        let c = &self.corners;
        (0..4)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % 4]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn is_convex(&self) -> bool {
        let c = &self.corners;
        let crosses: Vec<f64> = (0..4)
            .map(|i| {
                let (a, b, d) = (c[i], c[(i + 1) % 4], c[(i + 2) % 4]);
                (b.x - a.x) * (d.y - b.y) - (b.y - a.y) * (d.x - b.x)
            })
            .collect();
        crosses.iter().all(|&x| x > 0.0) || crosses.iter().all(|&x| x < 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_convex() || self.signed_area() <= 0.0 {
            return Err(CameraError::DegenerateQuad("not a convex clockwise quadrilateral"));
        }
        if self.deflection_angle.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(CameraError::DegenerateQuad("deflection beyond a quarter turn"));
        }
        Ok(())
    }
}

fn edge_angle(a: Point2, b: Point2) -> Result<f64> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    if dx.hypot(dy) <= 1e-9 {
        return Err(CameraError::DegenerateQuad("zero-length edge"));
    }
    Ok(dy.atan2(dx))
}

/// Deflection angle (radians, positive when the top edge descends to the
/// right in image coordinates) and millimeters per photo pixel.
pub fn measure_deflection(corners: &[Point2; 4], physical_width_mm: f64) -> Result<(f64, f64)> {
    let top = edge_angle(corners[0], corners[1])?;
    let bottom = edge_angle(corners[3], corners[2])?;
    edge_angle(corners[0], corners[3])?;
    edge_angle(corners[1], corners[2])?;
    // average on the circle so angles near ±π do not cancel
    let angle = (top.sin() + bottom.sin()).atan2(top.cos() + bottom.cos());
    let width = (corners[0].distance(&corners[1]) + corners[3].distance(&corners[2])) / 2.0;
    Ok((angle, physical_width_mm / width))
}

/// Warps the quad onto an upright `out_width` × `out_height` image with
/// bilinear sampling. Samples falling outside the photo read `background`.
pub fn rectify_screen(
    photo: &Image,
    quad: &ScreenQuad,
    out_width: u32,
    out_height: u32,
    background: u8,
) -> Result<Image> {
    const SLACK: f64 = 0.5;
    let (w, h) = (photo.width() as f64, photo.height() as f64);
    if quad
        .corners
        .iter()
        .any(|c| c.x < -SLACK || c.y < -SLACK || c.x > w + SLACK || c.y > h + SLACK)
    {
        return Err(CameraError::QuadOutOfBounds);
    }
    let (ow, oh) = (out_width as f64, out_height as f64);
    let rect = [
        Point2::new(0.0, 0.0),
        Point2::new(ow, 0.0),
        Point2::new(ow, oh),
        Point2::new(0.0, oh),
    ];
    let pairs: Vec<_> = rect.iter().copied().zip(quad.corners.iter().copied()).collect();
    let hom = estimate_homography(&pairs)?;
    let gray = photo.to_gray();
    let m = hom.matrix();
    let mut out = Image::gray(out_width, out_height, background);
    let data = out.data_mut();
    let fill = background as f64;
    for y in 0..out_height {
        let py = y as f64 + 0.5;
        for x in 0..out_width {
            let px = x as f64 + 0.5;
            let z = m[(2, 0)] * px + m[(2, 1)] * py + m[(2, 2)];
            let sx = (m[(0, 0)] * px + m[(0, 1)] * py + m[(0, 2)]) / z;
            let sy = (m[(1, 0)] * px + m[(1, 1)] * py + m[(1, 2)]) / z;
            let v = gray.sample_bilinear(sx, sy, fill);
            data[(y * out_width + x) as usize] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

/// Removes the radial term: the output is what an ideal pinhole camera
/// with the same linear intrinsics would have recorded.
pub fn undistort_image(photo: &Image, intrinsics: &CameraIntrinsics, background: u8) -> Image {
    let gray = photo.to_gray();
    if intrinsics.k1 == 0.0 {
        return gray;
    }
    let linear = CameraIntrinsics {
        k1: 0.0,
        ..*intrinsics
    };
    let mut out = Image::gray(gray.width(), gray.height(), background);
    for y in 0..gray.height() {
        for x in 0..gray.width() {
            let (xn, yn) = linear.pixel_to_normalized(Point2::new(x as f64 + 0.5, y as f64 + 0.5));
            let src = intrinsics.normalized_to_pixel(xn, yn);
            let v = gray.sample_bilinear(src.x, src.y, background as f64);
            out.set(x, y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Homography;
    use proptest::prelude::*;

    fn rotated_corners(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> [Point2; 4] {
        let (s, c) = angle.sin_cos();
        let rot = |dx: f64, dy: f64| Point2::new(cx + c * dx - s * dy, cy + s * dx + c * dy);
        [
            rot(-w / 2.0, -h / 2.0),
            rot(w / 2.0, -h / 2.0),
            rot(w / 2.0, h / 2.0),
            rot(-w / 2.0, h / 2.0),
        ]
    }

    fn quad_of(corners: [Point2; 4]) -> ScreenQuad {
        ScreenQuad {
            corners,
            deflection_angle: 0.0,
            scale: 1.0,
            origin: Point2::default(),
        }
    }

    fn pattern(w: u32, h: u32) -> Image {
        let mut img = Image::gray(w, h, 220);
        img.fill_rect(10, 12, 30, 18, 40);
        img.fill_rect(50, 40, 12, 30, 90);
        img.fill_rect(20, 60, 40, 4, 10);
        img
    }

    #[test]
    fn axis_aligned_quad_is_an_exact_crop() {
        let mut photo = Image::gray(200, 150, 30);
        let screen = pattern(80, 90);
        for y in 0..90 {
            for x in 0..80 {
                photo.set(x + 50, y + 20, screen.get(x, y));
            }
        }
        let quad = quad_of([
            Point2::new(50.0, 20.0),
            Point2::new(130.0, 20.0),
            Point2::new(130.0, 110.0),
            Point2::new(50.0, 110.0),
        ]);
        let out = rectify_screen(&photo, &quad, 80, 90, 0).unwrap();
        assert_eq!(out, screen);
    }

    #[test]
    fn rectifying_a_rectified_image_is_identity() {
        let img = pattern(80, 90);
        let quad = quad_of([
            Point2::new(0.0, 0.0),
            Point2::new(80.0, 0.0),
            Point2::new(80.0, 90.0),
            Point2::new(0.0, 90.0),
        ]);
        let out = rectify_screen(&img, &quad, 80, 90, 0).unwrap();
        assert!(out.mean_abs_diff(&img) <= 1.0);
    }

    #[test]
    fn rotated_quad_recovers_pre_rotation_render() {
        let (w, h) = (160.0, 280.0);
        let mut screen = Image::gray(160, 280, 225);
        screen.fill_rect(20, 30, 60, 30, 60);
        screen.fill_rect(22, 32, 56, 26, 200);
        screen.fill_rect(30, 120, 100, 40, 90);
        screen.fill_rect(40, 220, 12, 16, 20);
        let corners = rotated_corners(150.0, 170.0, w, h, 10f64.to_radians());
        let rect = [
            Point2::new(0.0, 0.0),
            Point2::new(w, 0.0),
            Point2::new(w, h),
            Point2::new(0.0, h),
        ];
        let pairs: Vec<_> = corners.iter().copied().zip(rect.iter().copied()).collect();
        let to_screen: Homography = estimate_homography(&pairs).unwrap();
        let mut photo = Image::gray(300, 340, 0);
        for y in 0..340 {
            for x in 0..300 {
                let s = to_screen.apply(Point2::new(x as f64 + 0.5, y as f64 + 0.5));
                let v = screen.sample_bilinear(s.x, s.y, 0.0);
                photo.set(x, y, v.round() as u8);
            }
        }
        let out = rectify_screen(&photo, &quad_of(corners), 160, 280, 0).unwrap();
        assert!(out.mean_abs_diff(&screen) <= 2.0, "{}", out.mean_abs_diff(&screen));
    }

    #[test]
    fn quad_outside_photo_rejected() {
        let photo = Image::gray(50, 50, 0);
        let quad = quad_of(rotated_corners(45.0, 25.0, 30.0, 30.0, 0.0));
        assert_eq!(
            rectify_screen(&photo, &quad, 10, 10, 0),
            Err(CameraError::QuadOutOfBounds)
        );
    }

    #[test]
    fn deflection_of_axis_aligned_quad_is_zero() {
        let (a, _) = measure_deflection(&rotated_corners(0.0, 0.0, 300.0, 500.0, 0.0), 60.0).unwrap();
        assert_eq!(a, 0.0);
    }

    #[test]
    fn scale_is_width_ratio() {
        let (_, s) = measure_deflection(&rotated_corners(0.0, 0.0, 300.0, 500.0, 0.0), 60.0).unwrap();
        assert!((s - 0.2).abs() < 1e-12);
    }

    #[test]
    fn seven_degree_deflection_measured() {
        let (a, _) =
            measure_deflection(&rotated_corners(400.0, 300.0, 300.0, 500.0, 7f64.to_radians()), 60.0).unwrap();
        assert!((a.to_degrees() - 7.0).abs() < 0.5);
    }

    #[test]
    fn zero_length_edge_rejected() {
        let p = Point2::new(1.0, 1.0);
        assert!(matches!(
            measure_deflection(&[p, p, Point2::new(1.0, 5.0), Point2::new(0.0, 5.0)], 60.0),
            Err(CameraError::DegenerateQuad(_))
        ));
    }

    #[test]
    fn quad_validation() {
        let q = quad_of(rotated_corners(0.0, 0.0, 30.0, 40.0, 0.2));
        assert!(q.validate().is_ok());
        let mut flipped = q;
        flipped.corners.reverse();
        assert!(flipped.validate().is_err());
    }

    #[test]
    fn undistort_is_identity_without_radial_term() {
        let img = pattern(80, 90);
        let k = CameraIntrinsics::new(100.0, 100.0, 40.0, 45.0, 0.0);
        assert_eq!(undistort_image(&img, &k, 0), img);
    }

    proptest! {
        #[test]
        fn deflection_is_odd(deg in -15.0..15.0f64) {
            let pos = measure_deflection(&rotated_corners(400.0, 300.0, 320.0, 560.0, deg.to_radians()), 64.0).unwrap().0;
            let neg = measure_deflection(&rotated_corners(400.0, 300.0, 320.0, 560.0, (-deg).to_radians()), 64.0).unwrap().0;
            prop_assert!((pos + neg).abs() < 1e-9);
            prop_assert!((pos - deg.to_radians()).abs() < 1e-9);
        }
    }
}
