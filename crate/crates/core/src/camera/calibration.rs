//! Intrinsic calibration from planar chessboard views: closed-form
//! initialization from per-view homographies followed by Gauss–Newton
//! refinement of the reprojection error.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3, SVector};
use serde::{Deserialize, Serialize};

use super::{estimate_homography, project, CameraError, CameraIntrinsics, CameraPose, Homography, Result};
use crate::geometry::Point2;

/// Observed chessboard corners: world coordinates on the Z = 0 board plane
/// (millimeters) paired with their pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChessboardView {
    pub grid: (u32, u32),
    pub correspondences: Vec<(Point2, Point2)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub refine: bool,
    /// Also estimate the radial coefficient during refinement.
    pub estimate_k1: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            step_tolerance: 1e-10,
            refine: true,
            estimate_k1: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub intrinsics: CameraIntrinsics,
    /// Per-view board poses.
    pub poses: Vec<CameraPose>,
    /// Mean Euclidean reprojection error, pixels.
    pub reprojection_error: f64,
    pub iterations: usize,
}

pub const MIN_VIEWS: usize = 3;

pub fn calibrate(views: &[ChessboardView], options: &CalibrationOptions) -> Result<Calibration> {
    if views.len() < MIN_VIEWS {
        return Err(CameraError::InsufficientViews {
            needed: MIN_VIEWS,
            got: views.len(),
        });
    }
    let homographies = views
        .iter()
        .map(|v| {
            if v.correspondences.len() < 4 {
                return Err(CameraError::DegeneratePoints);
            }
            estimate_homography(&v.correspondences)
        })
        .collect::<Result<Vec<_>>>()?;

    let intrinsics = closed_form_intrinsics(&homographies)?;
    let poses = homographies
        .iter()
        .map(|h| pose_from_homography(&intrinsics, h))
        .collect::<Result<Vec<_>>>()?;

    let mut calib = Calibration {
        reprojection_error: mean_reprojection_error(&intrinsics, &poses, views),
        intrinsics,
        poses,
        iterations: 0,
    };
    if options.refine {
        refine(&mut calib, views, options);
    }
    Ok(calib)
}

fn v_ij(h: &Matrix3<f64>, i: usize, j: usize) -> SVector<f64, 6> {
    let hi = h.column(i);
    let hj = h.column(j);
    SVector::<f64, 6>::from_row_slice(&[
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ])
}

fn closed_form_intrinsics(homographies: &[Homography]) -> Result<CameraIntrinsics> {
    let m = homographies.len();
    let mut v = DMatrix::<f64>::zeros(2 * m, 6);
    for (k, h) in homographies.iter().enumerate() {
        // scale-free conditioning of each view's constraints
        let hm = h.matrix() / h.matrix().norm();
        let v12 = v_ij(&hm, 0, 1);
        let d = v_ij(&hm, 0, 0) - v_ij(&hm, 1, 1);
        v.row_mut(2 * k).copy_from(&v12.transpose());
        v.row_mut(2 * k + 1).copy_from(&d.transpose());
    }
    let svd = v.svd(false, true);
    let v_t = svd.v_t.ok_or(CameraError::DegenerateConfiguration("svd failed"))?;
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[4]];
    if second_smallest <= 1e-9 * largest {
        return Err(CameraError::DegenerateConfiguration(
            "views do not constrain the intrinsics (pure translation or parallel boards)",
        ));
    }
    let b = v_t.row(order[5]);
    let sign = if b[0] < 0.0 { -1.0 } else { 1.0 };
    let (b11, b12, b22, b13, b23, b33) = (
        sign * b[0],
        sign * b[1],
        sign * b[2],
        sign * b[3],
        sign * b[4],
        sign * b[5],
    );

    let denom = b11 * b22 - b12 * b12;
    if denom <= 0.0 || b11 <= 0.0 {
        return Err(CameraError::DegenerateConfiguration("conic is not positive definite"));
    }
    let v0 = (b12 * b13 - b11 * b23) / denom;
    let lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
    if lambda <= 0.0 {
        return Err(CameraError::DegenerateConfiguration("negative scale factor"));
    }
    let alpha = (lambda / b11).sqrt();
    let beta = (lambda * b11 / denom).sqrt();
    let gamma = -b12 * alpha * alpha * beta / lambda;
    let u0 = gamma * v0 / beta - b13 * alpha * alpha / lambda;
    Ok(CameraIntrinsics::new(alpha, beta, u0, v0, gamma))
}

fn pose_from_homography(k: &CameraIntrinsics, h: &Homography) -> Result<CameraPose> {
    let k_inv = k
        .matrix()
        .try_inverse()
        .ok_or(CameraError::DegenerateConfiguration("singular intrinsics"))?;
    let h = h.matrix();
    let a1 = k_inv * h.column(0);
    let a2 = k_inv * h.column(1);
    let a3 = k_inv * h.column(2);
    let mut lambda = 1.0 / a1.norm();
    if a3.z * lambda < 0.0 {
        // board must lie in front of the camera
        lambda = -lambda;
    }
    let r1 = a1 * lambda;
    let r2 = a2 * lambda;
    let r3 = r1.cross(&r2);
    let t = a3 * lambda;
    let q = Matrix3::from_columns(&[r1, r2, r3]);
    let svd = q.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        r = -r;
    }
    let rot = Rotation3::from_matrix_unchecked(r);
    Ok(CameraPose::from_rotation(&rot, t))
}

fn mean_reprojection_error(k: &CameraIntrinsics, poses: &[CameraPose], views: &[ChessboardView]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (pose, view) in poses.iter().zip(views) {
        for (w, px) in &view.correspondences {
            let p = project(k, pose, &Vector3::new(w.x, w.y, 0.0))
                .unwrap_or(Point2::new(f64::INFINITY, f64::INFINITY));
            total += p.distance(px);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

struct Problem<'a> {
    views: &'a [ChessboardView],
    estimate_k1: bool,
    n_intr: usize,
    n_obs: usize,
}

impl Problem<'_> {
    fn unpack(&self, p: &DVector<f64>) -> (CameraIntrinsics, Vec<CameraPose>) {
        let k = CameraIntrinsics {
            fx: p[0],
            fy: p[1],
            s: p[2],
            cx: p[3],
            cy: p[4],
            k1: if self.estimate_k1 { p[5] } else { 0.0 },
        };
        let poses = (0..self.views.len())
            .map(|i| {
                let o = self.n_intr + 6 * i;
                CameraPose {
                    rotation: [p[o], p[o + 1], p[o + 2]],
                    translation: [p[o + 3], p[o + 4], p[o + 5]],
                }
            })
            .collect();
        (k, poses)
    }

    fn pack(&self, k: &CameraIntrinsics, poses: &[CameraPose]) -> DVector<f64> {
        let mut p = DVector::zeros(self.n_intr + 6 * poses.len());
        p[0] = k.fx;
        p[1] = k.fy;
        p[2] = k.s;
        p[3] = k.cx;
        p[4] = k.cy;
        if self.estimate_k1 {
            p[5] = k.k1;
        }
        for (i, pose) in poses.iter().enumerate() {
            let o = self.n_intr + 6 * i;
            for j in 0..3 {
                p[o + j] = pose.rotation[j];
                p[o + 3 + j] = pose.translation[j];
            }
        }
        p
    }

    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        let (k, poses) = self.unpack(p);
        let mut r = DVector::zeros(2 * self.n_obs);
        let mut i = 0;
        for (pose, view) in poses.iter().zip(self.views) {
            for (w, px) in &view.correspondences {
                let proj = project(&k, pose, &Vector3::new(w.x, w.y, 0.0))
                    .unwrap_or(Point2::new(1e6, 1e6));
                r[i] = proj.x - px.x;
                r[i + 1] = proj.y - px.y;
                i += 2;
            }
        }
        r
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(2 * self.n_obs, p.len());
        let mut q = p.clone();
        for c in 0..p.len() {
            let h = 1e-6 * p[c].abs().max(1e-2);
            q[c] = p[c] + h;
            let rp = self.residuals(&q);
            q[c] = p[c] - h;
            let rm = self.residuals(&q);
            q[c] = p[c];
            j.set_column(c, &((rp - rm) / (2.0 * h)));
        }
        j
    }
}

fn refine(calib: &mut Calibration, views: &[ChessboardView], options: &CalibrationOptions) {
    let problem = Problem {
        views,
        estimate_k1: options.estimate_k1,
        n_intr: if options.estimate_k1 { 6 } else { 5 },
        n_obs: views.iter().map(|v| v.correspondences.len()).sum(),
    };
    let mut params = problem.pack(&calib.intrinsics, &calib.poses);
    let mut residual = problem.residuals(&params);
    let mut cost = residual.norm_squared();
    let mut iterations = 0;

    for _ in 0..options.max_iterations {
        iterations += 1;
        let j = problem.jacobian(&params);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &residual;
        // Plain Gauss–Newton first; damp only if the step fails to descend.
        let mut damping = 0.0;
        let mut accepted = None;
        for _ in 0..8 {
            let mut a = jtj.clone();
            for d in 0..a.nrows() {
                a[(d, d)] += damping * jtj[(d, d)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                damping = if damping == 0.0 { 1e-6 } else { damping * 10.0 };
                continue;
            };
            let step = chol.solve(&(-&g));
            let candidate = &params + &step;
            let r = problem.residuals(&candidate);
            let c = r.norm_squared();
            if c <= cost {
                accepted = Some((step, candidate, r, c));
                break;
            }
            damping = if damping == 0.0 { 1e-6 } else { damping * 10.0 };
        }
        let Some((step, candidate, r, c)) = accepted else {
            break;
        };
        params = candidate;
        residual = r;
        cost = c;
        if step.norm() <= options.step_tolerance * (params.norm() + options.step_tolerance) {
            break;
        }
    }
    let (k, poses) = problem.unpack(&params);
    calib.reprojection_error = mean_reprojection_error(&k, &poses, views);
    calib.intrinsics = k;
    calib.poses = poses;
    calib.iterations = iterations;
}
