//! Camera tracking by direct registration against a negative event surface.
//!
//! The negative surface is low (near 0) where events fired recently and high
//! (near 1) elsewhere. Depth-tagged reference points are warped into the
//! current camera by a rotation-plus-translation parameter block and the
//! surface values at the warped pixels form the residual vector: driving the
//! residuals down pulls the projected points onto the active contours.
//!
//! Rotation uses the three Cayley parameters, so the whole state is a flat
//! 6-vector and the warp Jacobian is a closed-form chain of the rotation
//! derivative, the pinhole projection derivative and the surface gradient.

use crate::geometry::{cayley_rotate_jacobian, CameraIntrinsics, MotionParams, Pose};
use crate::grid::Grid;
use nalgebra::{Matrix2x3, Matrix3, Matrix6, Vector2, Vector3, Vector6};

/// A reference-frame point for registration: pixel location and the inverse
/// depth attached to it by the mapper.
#[derive(Debug, Clone, Copy)]
pub struct TrackPoint {
    pub u: f64,
    pub v: f64,
    pub inv_depth: f64,
}

/// Negative surface sampled bilinearly during optimization.
pub struct RegistrationField {
    pub values: Grid<f64>,
}

impl RegistrationField {
    pub fn new(negative_surface: Grid<f64>) -> Self {
        Self {
            values: negative_surface,
        }
    }

    /// Value and gradient at a subpixel location; `None` outside the
    /// bilinear support.
    ///
    /// The gradient is the analytic derivative of the bilinear interpolant,
    /// so it is exactly consistent with the sampled value: the optimizer's
    /// step model then matches the cost it is actually minimizing, which is
    /// what lets it converge to sub-pixel registrations.
    pub fn sample(&self, u: f64, v: f64) -> Option<(f64, Vector2<f64>)> {
        let w = self.values.width();
        let h = self.values.height();
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let x0 = u.floor() as u32;
        let y0 = v.floor() as u32;
        if x0 + 1 >= w || y0 + 1 >= h {
            return None;
        }
        let fu = u - f64::from(x0);
        let fv = v - f64::from(y0);
        let v00 = self.values.get(x0, y0);
        let v10 = self.values.get(x0 + 1, y0);
        let v01 = self.values.get(x0, y0 + 1);
        let v11 = self.values.get(x0 + 1, y0 + 1);
        let val = (1.0 - fu) * (1.0 - fv) * v00
            + fu * (1.0 - fv) * v10
            + (1.0 - fu) * fv * v01
            + fu * fv * v11;
        let gx = (1.0 - fv) * (v10 - v00) + fv * (v11 - v01);
        let gy = (1.0 - fu) * (v01 - v00) + fu * (v11 - v10);
        Some((val, Vector2::new(gx, gy)))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrackConfig {
    pub max_iterations: usize,
    pub lambda_init: f64,
    pub lambda_max: f64,
    /// Huber transition point on the residual magnitude.
    pub huber_delta: f64,
    /// Declare convergence after this many consecutive accepted steps whose
    /// relative cost improvement stays below `cost_tolerance`.
    pub cost_tolerance: f64,
    pub stall_iterations: usize,
    /// Stop once the update step norm falls below this.
    pub step_tolerance: f64,
    /// Residual charged to points that warp outside the image.
    pub out_of_view_residual: f64,
    pub min_points: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            max_iterations: 120,
            lambda_init: 1e-4,
            lambda_max: 1e12,
            huber_delta: 0.5,
            cost_tolerance: 1e-3,
            stall_iterations: 3,
            step_tolerance: 1e-6,
            out_of_view_residual: 1.0,
            min_points: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    pub motion: MotionParams,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Points that stayed inside the image at the final estimate.
    pub in_view: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrackError {
    #[error("registration needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}

/// Warps a reference point through `(c, t)` and projects it.
pub fn warp_point(
    point: &TrackPoint,
    motion: &MotionParams,
    cam: &CameraIntrinsics,
) -> Option<Vector2<f64>> {
    let x_ref = cam.back_project(point.u, point.v) / point.inv_depth;
    let rot = crate::geometry::cayley_to_rotation(&motion.c);
    let x_cur = rot * x_ref + motion.t;
    cam.project(&x_cur)
}

/// Residual plus its 6-vector derivative for one point; out-of-view points
/// contribute a fixed residual and a zero row.
fn residual_and_jacobian(
    point: &TrackPoint,
    motion: &MotionParams,
    cam: &CameraIntrinsics,
    field: &RegistrationField,
    cfg: &TrackConfig,
) -> (f64, Vector6<f64>, bool) {
    let x_ref = cam.back_project(point.u, point.v) / point.inv_depth;
    let rot = crate::geometry::cayley_to_rotation(&motion.c);
    let x_cur = rot * x_ref + motion.t;
    let projected = cam.project(&x_cur).and_then(|px| {
        field.sample(px.x, px.y).map(|(val, grad)| (px, val, grad))
    });
    let Some((_, val, grad)) = projected else {
        return (cfg.out_of_view_residual, Vector6::zeros(), false);
    };

    let z = x_cur.z;
    let proj_jac = Matrix2x3::new(
        cam.fx / z,
        0.0,
        -cam.fx * x_cur.x / (z * z),
        0.0,
        cam.fy / z,
        -cam.fy * x_cur.y / (z * z),
    );
    let rot_jac: Matrix3<f64> = cayley_rotate_jacobian(&motion.c, &x_ref);

    let d_px_dc = proj_jac * rot_jac;
    let d_px_dt = proj_jac;
    let mut jac = Vector6::zeros();
    let row = grad.transpose();
    let jc = row * d_px_dc;
    let jt = row * d_px_dt;
    for k in 0..3 {
        jac[k] = jc[(0, k)];
        jac[3 + k] = jt[(0, k)];
    }
    (val, jac, true)
}

fn huber_weight(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        1.0
    } else {
        delta / a
    }
}

fn huber_cost(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn total_cost(
    points: &[TrackPoint],
    motion: &MotionParams,
    cam: &CameraIntrinsics,
    field: &RegistrationField,
    cfg: &TrackConfig,
) -> f64 {
    points
        .iter()
        .map(|p| {
            let r = warp_point(p, motion, cam)
                .and_then(|px| field.values.sample_bilinear(px.x, px.y))
                .unwrap_or(cfg.out_of_view_residual);
            huber_cost(r, cfg.huber_delta)
        })
        .sum()
}

/// Levenberg-Marquardt registration of `points` onto `field`, starting from
/// `initial` and returning the refined camera motion.
pub fn track(
    points: &[TrackPoint],
    field: &RegistrationField,
    cam: &CameraIntrinsics,
    initial: &MotionParams,
    cfg: &TrackConfig,
) -> Result<TrackResult, TrackError> {
    if points.len() < cfg.min_points {
        return Err(TrackError::TooFewPoints {
            needed: cfg.min_points,
            got: points.len(),
        });
    }

    let mut motion = *initial;
    let mut lambda = cfg.lambda_init;
    let mut cost = total_cost(points, &motion, cam, field, cfg);
    let mut converged = false;
    let mut iterations = 0;
    let mut stalled = 0usize;

    for iter in 0..cfg.max_iterations {
        iterations = iter + 1;
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for p in points {
            let (r, j, _) = residual_and_jacobian(p, &motion, cam, field, cfg);
            let w = huber_weight(r, cfg.huber_delta);
            h += j * j.transpose() * w;
            g += j * (w * r);
        }

        let mut stepped = false;
        while lambda <= cfg.lambda_max {
            let mut damped = h;
            for k in 0..6 {
                damped[(k, k)] += lambda * (1.0 + h[(k, k)]);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&-g);
            let candidate = MotionParams {
                c: motion.c + Vector3::new(step[0], step[1], step[2]),
                t: motion.t + Vector3::new(step[3], step[4], step[5]),
            };
            let new_cost = total_cost(points, &candidate, cam, field, cfg);
            if new_cost < cost {
                let relative_gain = (cost - new_cost) / cost.max(1e-300);
                motion = candidate;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                stepped = true;
                if relative_gain < cfg.cost_tolerance {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                if step.norm() < cfg.step_tolerance || stalled >= cfg.stall_iterations {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            // No descent direction left at maximal damping.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let in_view = points
        .iter()
        .filter(|p| {
            warp_point(p, &motion, cam)
                .map(|px| field.values.sample_bilinear(px.x, px.y).is_some())
                .unwrap_or(false)
        })
        .count();

    Ok(TrackResult {
        motion,
        cost,
        iterations,
        converged,
        in_view,
    })
}

/// World pose of the current camera given the reference pose and the
/// registration result, which maps reference-camera coordinates into the
/// current camera.
pub fn pose_from_registration(reference: &Pose, motion: &MotionParams) -> Pose {
    reference.compose(&motion.as_pose().inverse())
}
