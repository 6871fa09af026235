//! Simulated device under test: app models, device profiles, rendering,
//! camera photos and operation responses.

mod app;
mod device;
mod photo;
mod render;
mod session;
pub mod suite;

pub use app::{AppModel, CrashTrigger, ScreenSpec, Transition, WidgetRole, WidgetSpec};
pub use device::{DeviceProfile, MaskShape, Placement};
pub use photo::{synthesize_chessboard_views, synthesize_photo, CameraRig, Photo, Scene};
pub use render::{apply_mask, draw_keyboard, draw_label, render_screen, show_keyboard, SoftKeyboard};
pub use session::{apply_operation, resolve_touch, AppSession, Response, ResponseKind, Touch};

use thiserror::Error;

/// Version of the app-model and device-profile documents.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown screen {0:?}")]
    UnknownScreen(String),
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("invalid app model: {0}")]
    InvalidModel(String),
    #[error("screen {0:?} has transitions but cannot be reached from the initial screen")]
    Unreachable(String),
    #[error("invalid device profile: {0}")]
    InvalidDevice(String),
    #[error("device is not fully inside the camera frame")]
    DeviceOutOfFrame,
    #[error("parse error: {0}")]
    Parse(String),
}
