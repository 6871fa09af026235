use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::device::DeviceProfile;
use super::SimError;
use crate::camera::{project, CameraIntrinsics, CameraPose, ChessboardView, Homography};
use crate::geometry::Point2;
use crate::image::Image;

/// Camera intrinsics, its pose over the table and the photo size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics,
    /// Table-plane (arm base frame) to camera transform.
    pub pose: CameraPose,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraRig {
    /// Looks straight down from 300 mm above the middle of the default
    /// device placement, about 0.2 mm per photo pixel.
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::new(1500.0, 1500.0, 640.0, 360.0, 0.0),
            pose: CameraPose {
                rotation: [0.0; 3],
                translation: [0.0, -156.0, 300.0],
            },
            width: 1280,
            height: 720,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scene {
    pub background: u8,
    /// Additive Gaussian noise, intensity levels.
    pub noise_sigma: f64,
    /// Multiplicative left-to-right gain: 1 - g at the left edge, 1 + g at
    /// the right.
    pub illumination_gradient: f64,
    /// Samples per photo pixel along each axis.
    pub supersample: u32,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            background: 40,
            noise_sigma: 0.0,
            illumination_gradient: 0.0,
            supersample: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Photo {
    pub image: Image,
    /// Ground-truth screen corners in the photo: top-left, top-right,
    /// bottom-right, bottom-left.
    pub corners: [Point2; 4],
}

fn screen_to_photo(device: &DeviceProfile, rig: &CameraRig) -> Homography {
    let f = device.frame();
    let (s, c) = f.deflection.sin_cos();
    let k = f.scale;
    let affine = Homography::from_matrix(nalgebra::Matrix3::new(
        k * c,
        -k * s,
        f.origin.x,
        k * s,
        k * c,
        f.origin.y,
        0.0,
        0.0,
        1.0,
    ));
    rig.pose.plane_homography(&rig.intrinsics).compose(&affine)
}

/// Photographs a rendered screen placed per `device` with the rig camera.
pub fn synthesize_photo(
    screen: &Image,
    device: &DeviceProfile,
    rig: &CameraRig,
    scene: &Scene,
    seed: u64,
) -> Result<Photo, SimError> {
    let (sw, sh) = (screen.width() as f64, screen.height() as f64);
    let frame = device.frame();
    let mut corners = [Point2::new(0.0, 0.0); 4];
    for (i, p) in [(0.0, 0.0), (sw, 0.0), (sw, sh), (0.0, sh)].into_iter().enumerate() {
        let w = frame.to_world_unchecked(Point2::new(p.0, p.1));
        let px = project(&rig.intrinsics, &rig.pose, &Vector3::new(w.x, w.y, 0.0))
            .map_err(|_| SimError::DeviceOutOfFrame)?;
        if px.x < 0.0 || px.y < 0.0 || px.x > rig.width as f64 || px.y > rig.height as f64 {
            return Err(SimError::DeviceOutOfFrame);
        }
        corners[i] = px;
    }
    let to_screen = screen_to_photo(device, rig)
        .inverse()
        .ok_or(SimError::DeviceOutOfFrame)?;
    let undistorted = CameraIntrinsics {
        k1: 0.0,
        ..rig.intrinsics
    };
    let bg = scene.background as f64;
    let ss = scene.supersample.max(1);
    let gray = screen.to_gray();
    let mut img = Image::gray(rig.width, rig.height, scene.background);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (scene.noise_sigma > 0.0).then(|| Normal::new(0.0, scene.noise_sigma).expect("finite sigma"));
    for y in 0..rig.height {
        for x in 0..rig.width {
            let mut acc = 0.0;
            for j in 0..ss {
                for i in 0..ss {
                    let mut q = Point2::new(
                        x as f64 + (i as f64 + 0.5) / ss as f64,
                        y as f64 + (j as f64 + 0.5) / ss as f64,
                    );
                    if rig.intrinsics.k1 != 0.0 {
                        let (xn, yn) = rig.intrinsics.pixel_to_normalized(q);
                        q = undistorted.normalized_to_pixel(xn, yn);
                    }
                    let s = to_screen.apply(q);
                    acc += if s.x > -1.0 && s.y > -1.0 && s.x < sw + 1.0 && s.y < sh + 1.0 {
                        gray.sample_bilinear(s.x, s.y, bg)
                    } else {
                        bg
                    };
                }
            }
            let mut v = acc / (ss * ss) as f64;
            if scene.illumination_gradient != 0.0 {
                let t = (x as f64 + 0.5) / rig.width as f64 * 2.0 - 1.0;
                v *= 1.0 + scene.illumination_gradient * t;
            }
            if let Some(n) = &noise {
                v += n.sample(&mut rng);
            }
            img.set(x, y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(Photo { image: img, corners })
}

/// Chessboard corner observations from random board poses in front of the
/// rig camera, with Gaussian pixel noise.
pub fn synthesize_chessboard_views(
    rig: &CameraRig,
    views: usize,
    grid: (u32, u32),
    square_mm: f64,
    noise_sigma: f64,
    seed: u64,
) -> Vec<ChessboardView> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
    let (gw, gh) = grid;
    let board: Vec<Point2> = (0..gh)
        .flat_map(|r| (0..gw).map(move |c| Point2::new(c as f64 * square_mm, r as f64 * square_mm)))
        .collect();
    let center = Vector3::new((gw - 1) as f64 * square_mm / 2.0, (gh - 1) as f64 * square_mm / 2.0, 0.0);
    let mut out = Vec::with_capacity(views);
    while out.len() < views {
        let tilt = 0.5;
        let r = Rotation3::from_euler_angles(
            rng.random_range(-tilt..tilt),
            rng.random_range(-tilt..tilt),
            rng.random_range(-0.4..0.4),
        );
        let depth = rng.random_range(280.0..420.0);
        let shift = Vector3::new(rng.random_range(-30.0..30.0), rng.random_range(-20.0..20.0), depth);
        let t = shift - r * center;
        let pose = CameraPose::from_rotation(&r, t);
        let mut corr = Vec::with_capacity(board.len());
        let mut ok = true;
        for b in &board {
            match project(&rig.intrinsics, &pose, &Vector3::new(b.x, b.y, 0.0)) {
                Ok(p) if p.x >= 0.0 && p.y >= 0.0 && p.x < rig.width as f64 && p.y < rig.height as f64 => {
                    let (nx, ny) = if noise_sigma > 0.0 {
                        (noise.sample(&mut rng), noise.sample(&mut rng))
                    } else {
                        (0.0, 0.0)
                    };
                    corr.push((*b, Point2::new(p.x + nx, p.y + ny)));
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            out.push(ChessboardView { grid, correspondences: corr });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{calibrate, CalibrationOptions};

    fn striped() -> Image {
        let mut img = Image::gray(320, 560, 230);
        img.fill_rect(40, 100, 120, 50, 60);
        img
    }

    #[test]
    fn identity_scale_embeds_screen_exactly() {
        // 1 px per mm, screen mm = px, no rotation: pixel-exact copy at an offset
        let mut dev = DeviceProfile::phone("p");
        dev.screen_mm = [320.0, 560.0];
        dev.placement = crate::simbench::Placement { x_mm: 0.0, y_mm: 0.0, deflection_deg: 0.0 };
        let rig = CameraRig {
            intrinsics: CameraIntrinsics::new(1.0, 1.0, 20.0, 30.0, 0.0),
            pose: CameraPose { rotation: [0.0; 3], translation: [0.0, 0.0, 1.0] },
            width: 400,
            height: 640,
        };
        let scene = Scene { supersample: 1, ..Default::default() };
        let screen = striped();
        let photo = synthesize_photo(&screen, &dev, &rig, &scene, 0).unwrap();
        assert_eq!(photo.image.crop(20, 30, 320, 560), screen);
        assert_eq!(photo.corners[0], Point2::new(20.0, 30.0));
        assert_eq!(photo.image.get(5, 5), 40);
    }

    #[test]
    fn deflected_placement_rotates_corner_quad() {
        let mut dev = DeviceProfile::phone("p");
        dev.placement.deflection_deg = 10.0;
        let photo = synthesize_photo(&striped(), &dev, &CameraRig::default(), &Scene::default(), 0).unwrap();
        let c = photo.corners;
        let angle = (c[1].y - c[0].y).atan2(c[1].x - c[0].x).to_degrees();
        assert!((angle - 10.0).abs() < 1e-9);
    }

    #[test]
    fn noise_level_matches_half_normal_mean() {
        let dev = DeviceProfile::phone("p");
        let rig = CameraRig::default();
        let clean = synthesize_photo(&striped(), &dev, &rig, &Scene::default(), 0).unwrap();
        let noisy = synthesize_photo(&striped(), &dev, &rig, &Scene { noise_sigma: 2.0, ..Default::default() }, 7).unwrap();
        let mae = clean.image.mean_abs_diff(&noisy.image);
        assert!((1.2..=2.0).contains(&mae), "{mae}");
    }

    #[test]
    fn device_outside_frame_is_an_error() {
        let mut dev = DeviceProfile::phone("p");
        dev.placement.x_mm = 400.0;
        assert_eq!(
            synthesize_photo(&striped(), &dev, &CameraRig::default(), &Scene::default(), 0),
            Err(SimError::DeviceOutOfFrame)
        );
    }

    #[test]
    fn synthetic_views_calibrate() {
        let rig = CameraRig::default();
        let views = synthesize_chessboard_views(&rig, 5, (9, 6), 20.0, 0.0, 3);
        let cal = calibrate(&views, &CalibrationOptions::default()).unwrap();
        assert!((cal.intrinsics.fx - 1500.0).abs() < 1e-3 * 1500.0);
        assert!(cal.reprojection_error < 1e-6);
    }
}
