//! Hardware-free testbench for non-intrusive GUI exploration testing with a
//! camera-guided 4-DOF robotic arm.
//!
//! The pipeline runs entirely against simulated devices: [`simbench`]
//! renders app screens and photographs them through a [`camera`] model,
//! [`vision`] recovers the screen and its widgets from the photo,
//! [`explorer`] picks the next target, [`kinematics`] plans the arm motion,
//! and [`compat`] compares responses across an irregular-screen device and
//! its regular twin. [`harness`] drives benchmark grids from the CLI.

pub mod camera;
pub mod compat;
pub mod explorer;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod kinematics;
pub mod simbench;
pub mod vision;

pub use geometry::{Point2, Rect};
pub use image::Image;
