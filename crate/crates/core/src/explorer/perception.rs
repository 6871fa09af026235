//! Photo to widgets: undistort, find the screen, rectify, extract.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::camera::{backproject_to_plane, rectify_screen, undistort_image, CameraIntrinsics, CameraPose, ScreenQuad};
use crate::geometry::Point2;
use crate::image::Image;
use crate::kinematics::ScreenFrame;
use crate::simbench::{CameraRig, DeviceProfile};
use crate::vision::{detect_screen, extract_widgets, ExtractionParams, GlyphLibrary, ScreenDetectParams, VisionError, Widget};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionParams {
    pub detect: ScreenDetectParams,
    pub extraction: ExtractionParams,
}

/// What the tester knows about the camera and the device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observer {
    /// Calibrated intrinsics.
    pub intrinsics: CameraIntrinsics,
    /// Table-plane to camera transform.
    pub pose: CameraPose,
    pub screen_mm: [f64; 2],
    pub resolution: [u32; 2],
    pub background: u8,
}

impl Observer {
    /// Observer that knows the device geometry and uses `intrinsics` for the
    /// camera mounted at `rig`'s pose.
    pub fn new(intrinsics: CameraIntrinsics, rig: &CameraRig, device: &DeviceProfile, background: u8) -> Observer {
        Observer {
            intrinsics,
            pose: rig.pose,
            screen_mm: device.screen_mm,
            resolution: device.resolution,
            background,
        }
    }

    /// Observer with perfect knowledge of the camera.
    pub fn ideal(rig: &CameraRig, device: &DeviceProfile, background: u8) -> Observer {
        Observer::new(rig.intrinsics, rig, device, background)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perception {
    pub quad: ScreenQuad,
    /// Rectified-screen-pixel to arm-frame mapping.
    pub frame: ScreenFrame,
    pub screen: Image,
    pub widgets: Vec<Widget>,
}

fn mean_angle(a: f64, b: f64) -> f64 {
    (a.sin() + b.sin()).atan2(a.cos() + b.cos())
}

/// Locates the screen in `photo` and maps it into the arm frame through the
/// calibrated camera.
pub fn locate(photo: &Image, obs: &Observer, params: &PerceptionParams) -> Result<(Image, ScreenQuad, ScreenFrame), VisionError> {
    let photo = if obs.intrinsics.k1 != 0.0 {
        undistort_image(photo, &obs.intrinsics, obs.background)
    } else {
        photo.to_gray()
    };
    let detect = ScreenDetectParams {
        physical_width_mm: obs.screen_mm[0],
        ..params.detect
    };
    let mut quad = detect_screen(&photo, &detect)?;
    let linear = CameraIntrinsics { k1: 0.0, ..obs.intrinsics };
    let world: Vec<Point2> = quad
        .corners
        .iter()
        .map(|c| backproject_to_plane(&linear, &obs.pose, *c))
        .collect();
    quad.origin = world[0];
    let top = world[1].sub(&world[0]);
    let bottom = world[2].sub(&world[3]);
    let width_mm = 0.5 * (top.norm() + bottom.norm());
    let (w, h) = (obs.resolution[0], obs.resolution[1]);
    let frame = ScreenFrame {
        origin: world[0],
        deflection: mean_angle(top.y.atan2(top.x), bottom.y.atan2(bottom.x)),
        scale: width_mm / w as f64,
        width_px: w as f64,
        height_px: h as f64,
    };
    let screen = rectify_screen(&photo, &quad, w, h, obs.background)?;
    Ok((screen, quad, frame))
}

pub fn perceive(
    photo: &Image,
    obs: &Observer,
    glyphs: &GlyphLibrary,
    params: &PerceptionParams,
) -> Result<Perception, VisionError> {
    let (screen, quad, frame) = locate(photo, obs, params)?;
    let widgets = extract_widgets(&screen, glyphs, &params.extraction);
    Ok(Perception {
        quad,
        frame,
        screen,
        widgets,
    })
}

/// Memo of perception results keyed by the content of the rendered screen.
/// Only valid when photos are noise-free, so that the photo, and hence the
/// perception, is a pure function of the rendered frame.
#[derive(Debug, Default)]
pub struct PerceptionCache {
    map: Mutex<HashMap<u64, Arc<Result<Perception, VisionError>>>>,
}

impl PerceptionCache {
    pub fn new() -> PerceptionCache {
        PerceptionCache::default()
    }

    pub fn key(rendered: &Image, context: u64) -> u64 {
        let mut h = DefaultHasher::new();
        context.hash(&mut h);
        rendered.hash(&mut h);
        h.finish()
    }

    pub fn get_or_insert_with(
        &self,
        key: u64,
        f: impl FnOnce() -> Result<Perception, VisionError>,
    ) -> Arc<Result<Perception, VisionError>> {
        if let Some(hit) = self.map.lock().expect("cache lock").get(&key) {
            return hit.clone();
        }
        let value = Arc::new(f());
        self.map.lock().expect("cache lock").entry(key).or_insert(value).clone()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
