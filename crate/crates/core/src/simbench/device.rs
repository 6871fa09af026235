use serde::{Deserialize, Serialize};

use super::{SimError, SCHEMA_VERSION};
use crate::geometry::{Point2, Rect};
use crate::kinematics::ScreenFrame;

/// Opaque cutout region in screen pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum MaskShape {
    Rect { x: f64, y: f64, width: f64, height: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

impl MaskShape {
    pub fn contains(&self, p: Point2) -> bool {
        match *self {
            MaskShape::Rect { x, y, width, height } => {
                p.x >= x && p.x < x + width && p.y >= y && p.y < y + height
            }
            MaskShape::Ellipse { cx, cy, rx, ry } => {
                let (dx, dy) = ((p.x - cx) / rx, (p.y - cy) / ry);
                dx * dx + dy * dy <= 1.0
            }
        }
    }

    /// Bounding box, rounded outward to whole pixels.
    pub fn bounds(&self) -> Rect {
        let (x0, y0, x1, y1) = match *self {
            MaskShape::Rect { x, y, width, height } => (x, y, x + width, y + height),
            MaskShape::Ellipse { cx, cy, rx, ry } => (cx - rx, cy - ry, cx + rx, cy + ry),
        };
        let (x0, y0) = (x0.floor() as i32, y0.floor() as i32);
        Rect::new(x0, y0, x1.ceil() as i32 - x0, y1.ceil() as i32 - y0)
    }
}

/// Where the screen's top-left corner sits in the arm base frame, and how
/// far the screen is rotated about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub x_mm: f64,
    pub y_mm: f64,
    #[serde(default)]
    pub deflection_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub schema_version: u32,
    pub id: String,
    /// Physical screen width and height, millimeters.
    pub screen_mm: [f64; 2],
    /// Screen resolution, pixels.
    pub resolution: [u32; 2],
    pub placement: Placement,
    #[serde(default)]
    pub irregular_mask: Vec<MaskShape>,
}

impl DeviceProfile {
    /// 64 × 112 mm phone at 320 × 560 px, centered in front of the arm.
    pub fn phone(id: &str) -> DeviceProfile {
        DeviceProfile {
            schema_version: SCHEMA_VERSION,
            id: id.to_string(),
            screen_mm: [64.0, 112.0],
            resolution: [320, 560],
            placement: Placement {
                x_mm: -32.0,
                y_mm: 100.0,
                deflection_deg: 0.0,
            },
            irregular_mask: Vec::new(),
        }
    }

    /// The phone with a top-center notch.
    pub fn notched_phone(id: &str) -> DeviceProfile {
        DeviceProfile {
            irregular_mask: vec![MaskShape::Rect {
                x: 120.0,
                y: 0.0,
                width: 80.0,
                height: 32.0,
            }],
            ..DeviceProfile::phone(id)
        }
    }

    pub fn width(&self) -> u32 {
        self.resolution[0]
    }

    pub fn height(&self) -> u32 {
        self.resolution[1]
    }

    pub fn mm_per_px(&self) -> f64 {
        self.screen_mm[0] / self.resolution[0] as f64
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width() as i32, self.height() as i32)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::Schema(self.schema_version));
        }
        let [w, h] = self.screen_mm;
        let [rw, rh] = self.resolution;
        if !(w > 0.0 && h > 0.0 && rw > 0 && rh > 0) {
            return Err(SimError::InvalidDevice("screen size and resolution must be positive".into()));
        }
        let aspect_mm = w / h;
        let aspect_px = rw as f64 / rh as f64;
        if ((aspect_mm - aspect_px) / aspect_px).abs() > 0.01 {
            return Err(SimError::InvalidDevice(format!(
                "aspect mismatch: {aspect_mm:.4} mm vs {aspect_px:.4} px"
            )));
        }
        for m in &self.irregular_mask {
            let b = m.bounds();
            if !self.bounds().contains_rect(&b) {
                return Err(SimError::InvalidDevice(format!("mask region {b:?} leaves the screen")));
            }
        }
        Ok(())
    }

    pub fn is_masked(&self, p: Point2) -> bool {
        self.irregular_mask.iter().any(|m| m.contains(p))
    }

    /// Same device without its cutouts.
    pub fn regular_twin(&self) -> DeviceProfile {
        DeviceProfile {
            id: format!("{}-regular", self.id),
            irregular_mask: Vec::new(),
            ..self.clone()
        }
    }

    /// Whether two profiles differ only in their masks.
    pub fn same_geometry(&self, other: &DeviceProfile) -> bool {
        self.screen_mm == other.screen_mm
            && self.resolution == other.resolution
            && self.placement == other.placement
    }

    /// Ground-truth screen-to-arm mapping.
    pub fn frame(&self) -> ScreenFrame {
        ScreenFrame {
            origin: Point2::new(self.placement.x_mm, self.placement.y_mm),
            deflection: self.placement.deflection_deg.to_radians(),
            scale: self.mm_per_px(),
            width_px: self.width() as f64,
            height_px: self.height() as f64,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("device serializes")
    }

    pub fn from_json(s: &str) -> Result<DeviceProfile, SimError> {
        let d: DeviceProfile = serde_json::from_str(s).map_err(|e| SimError::Parse(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }
}
