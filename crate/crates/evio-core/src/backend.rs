//! Sliding-window inertial back-end.
//!
//! Tracking fixes the poses; this module refines the per-node velocities and
//! IMU biases so that consecutive poses, the optimized states and the
//! pre-integrated IMU deltas agree. Each consecutive node pair contributes a
//! 15-dimensional residual: position delta, velocity delta, rotation delta,
//! and accelerometer/gyro bias random-walk terms. All Jacobian blocks are
//! analytic, including the rotation rows through the quaternion product
//! matrices and the exponential-map derivative.

use crate::geometry::{quat_exp_jacobian, quat_left_matrix, quat_right_matrix, Pose};
use crate::imu::{GravityModel, ImuBias, Preintegration};
use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};
use std::collections::VecDeque;

/// One keyframe-like state in the window.
#[derive(Debug, Clone)]
pub struct WindowNode {
    pub t_us: u64,
    /// World-from-body pose, held fixed during back-end optimization.
    pub pose: Pose,
    pub velocity: Vector3<f64>,
    pub bias: ImuBias,
}

/// Square-root information scalars applied per residual block.
#[derive(Debug, Clone, Copy)]
pub struct BackendWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub bias_accel: f64,
    pub bias_gyro: f64,
}

impl Default for BackendWeights {
    fn default() -> Self {
        Self {
            alpha: 1e3,
            beta: 1e2,
            gamma: 1e3,
            bias_accel: 10.0,
            bias_gyro: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BackendConfig {
    pub weights: BackendWeights,
    pub lambda_init: f64,
    pub lambda_max: f64,
    pub max_iterations: usize,
    pub step_tolerance: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            weights: BackendWeights::default(),
            lambda_init: 1e-4,
            lambda_max: 1e12,
            max_iterations: 25,
            step_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Residual of one consecutive pair and its Jacobians with respect to the
/// two node states, each ordered (velocity, accel bias, gyro bias).
///
/// Rows: 0..3 position delta, 3..6 velocity delta, 6..9 rotation delta,
/// 9..12 accel-bias walk, 12..15 gyro-bias walk; all pre-whitened.
pub fn pair_residual_and_jacobian(
    node_i: &WindowNode,
    node_j: &WindowNode,
    pre: &Preintegration,
    gravity: &GravityModel,
    weights: &BackendWeights,
) -> (SVector<f64, 15>, SMatrix<f64, 15, 9>, SMatrix<f64, 15, 9>) {
    let dt = pre.dt_s;
    let g = gravity.g_w;
    let r_i = node_i.pose.rotation.to_rotation_matrix().into_inner();
    let r_i_t = r_i.transpose();

    let dba = node_i.bias.accel - pre.bias_lin.accel;
    let dbg = node_i.bias.gyro - pre.bias_lin.gyro;

    let alpha_hat = pre.alpha + pre.j_alpha_ba * dba + pre.j_alpha_bg * dbg;
    let beta_hat = pre.beta + pre.j_beta_ba * dba + pre.j_beta_bg * dbg;

    let r_alpha = r_i_t
        * (node_j.pose.translation - node_i.pose.translation + 0.5 * g * dt * dt
            - node_i.velocity * dt)
        - alpha_hat;
    let r_beta = r_i_t * (node_j.velocity + g * dt - node_i.velocity) - beta_hat;

    // Rotation residual: q_i^-1 q_j composed with the inverse of the
    // bias-corrected delta; small errors live in twice the vector part.
    let q_rel = node_i.pose.rotation.inverse() * node_j.pose.rotation;
    let u = -pre.j_gamma_bg * dbg;
    let exp_u = UnitQuaternion::from_scaled_axis(u);
    let q_err = q_rel * exp_u * pre.gamma.inverse();
    let sign = if q_err.w < 0.0 { -1.0 } else { 1.0 };
    let r_gamma = 2.0 * sign * Vector3::new(q_err.i, q_err.j, q_err.k);

    let r_ba = node_j.bias.accel - node_i.bias.accel;
    let r_bg = node_j.bias.gyro - node_i.bias.gyro;

    let w = weights;
    let mut res = SVector::<f64, 15>::zeros();
    res.fixed_rows_mut::<3>(0).copy_from(&(w.alpha * r_alpha));
    res.fixed_rows_mut::<3>(3).copy_from(&(w.beta * r_beta));
    res.fixed_rows_mut::<3>(6).copy_from(&(w.gamma * r_gamma));
    res.fixed_rows_mut::<3>(9).copy_from(&(w.bias_accel * r_ba));
    res.fixed_rows_mut::<3>(12).copy_from(&(w.bias_gyro * r_bg));

    let mut jac_i = SMatrix::<f64, 15, 9>::zeros();
    let mut jac_j = SMatrix::<f64, 15, 9>::zeros();

    // Position rows.
    jac_i
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-w.alpha * r_i_t * dt));
    jac_i
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-w.alpha * pre.j_alpha_ba));
    jac_i
        .fixed_view_mut::<3, 3>(0, 6)
        .copy_from(&(-w.alpha * pre.j_alpha_bg));

    // Velocity rows.
    jac_i
        .fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(-w.beta * r_i_t));
    jac_i
        .fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(-w.beta * pre.j_beta_ba));
    jac_i
        .fixed_view_mut::<3, 3>(3, 6)
        .copy_from(&(-w.beta * pre.j_beta_bg));
    jac_j
        .fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(w.beta * r_i_t));

    // Rotation rows depend only on the gyro bias of node i, through the
    // exponential of u: vec(q_err) = L(q_rel) R(gamma^-1) vec(exp(u)).
    let chain = quat_left_matrix(&q_rel.into_inner())
        * quat_right_matrix(&pre.gamma.inverse().into_inner())
        * quat_exp_jacobian(&u);
    let d_vec_dbg = chain * (-pre.j_gamma_bg);
    let d_gamma_dbg: Matrix3<f64> = d_vec_dbg.fixed_rows::<3>(1).into();
    jac_i
        .fixed_view_mut::<3, 3>(6, 6)
        .copy_from(&(2.0 * sign * w.gamma * d_gamma_dbg));

    // Bias random-walk rows.
    let id = Matrix3::identity();
    jac_i
        .fixed_view_mut::<3, 3>(9, 3)
        .copy_from(&(-w.bias_accel * id));
    jac_j
        .fixed_view_mut::<3, 3>(9, 3)
        .copy_from(&(w.bias_accel * id));
    jac_i
        .fixed_view_mut::<3, 3>(12, 6)
        .copy_from(&(-w.bias_gyro * id));
    jac_j
        .fixed_view_mut::<3, 3>(12, 6)
        .copy_from(&(w.bias_gyro * id));

    (res, jac_i, jac_j)
}

/// Fixed-capacity window of nodes joined by pre-integrated IMU spans.
pub struct SlidingWindow {
    nodes: VecDeque<WindowNode>,
    spans: VecDeque<Preintegration>,
    capacity: usize,
}

impl SlidingWindow {
    pub fn new(capacity: usize, first: WindowNode) -> Self {
        assert!(capacity >= 2, "window capacity must be at least 2");
        let mut nodes = VecDeque::with_capacity(capacity + 1);
        nodes.push_back(first);
        Self {
            nodes,
            spans: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Appends a node joined to the previous one by `span`, sliding the
    /// oldest node out when the window is full.
    pub fn push(&mut self, node: WindowNode, span: Preintegration) {
        debug_assert!(node.t_us > self.nodes.back().unwrap().t_us);
        self.nodes.push_back(node);
        self.spans.push_back(span);
        if self.nodes.len() > self.capacity {
            self.nodes.pop_front();
            self.spans.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &WindowNode> {
        self.nodes.iter()
    }

    pub fn latest(&self) -> &WindowNode {
        self.nodes.back().unwrap()
    }

    pub fn latest_mut(&mut self) -> &mut WindowNode {
        self.nodes.back_mut().unwrap()
    }

    fn cost(nodes: &VecDeque<WindowNode>, spans: &VecDeque<Preintegration>, gravity: &GravityModel, weights: &BackendWeights) -> f64 {
        let mut c = 0.0;
        for k in 0..spans.len() {
            let (r, _, _) =
                pair_residual_and_jacobian(&nodes[k], &nodes[k + 1], &spans[k], gravity, weights);
            c += 0.5 * r.norm_squared();
        }
        c
    }

    fn applied(nodes: &VecDeque<WindowNode>, dx: &DVector<f64>) -> VecDeque<WindowNode> {
        let mut out = nodes.clone();
        for (k, node) in out.iter_mut().enumerate() {
            let s = 9 * k;
            node.velocity += Vector3::new(dx[s], dx[s + 1], dx[s + 2]);
            node.bias.accel += Vector3::new(dx[s + 3], dx[s + 4], dx[s + 5]);
            node.bias.gyro += Vector3::new(dx[s + 6], dx[s + 7], dx[s + 8]);
        }
        out
    }

    /// Levenberg-Marquardt refinement of all velocities and biases with the
    /// poses held fixed.
    pub fn optimize(&mut self, gravity: &GravityModel, cfg: &BackendConfig) -> OptimizeReport {
        let n = self.nodes.len();
        if n < 2 {
            return OptimizeReport {
                initial_cost: 0.0,
                final_cost: 0.0,
                iterations: 0,
                converged: true,
            };
        }
        let dim = 9 * n;
        let w = &cfg.weights;
        let mut cost = Self::cost(&self.nodes, &self.spans, gravity, w);
        let initial_cost = cost;
        let mut lambda = cfg.lambda_init;
        let mut converged = false;
        let mut iterations = 0;

        for iter in 0..cfg.max_iterations {
            iterations = iter + 1;
            let mut h = DMatrix::<f64>::zeros(dim, dim);
            let mut g = DVector::<f64>::zeros(dim);
            for k in 0..self.spans.len() {
                let (r, ja, jb) = pair_residual_and_jacobian(
                    &self.nodes[k],
                    &self.nodes[k + 1],
                    &self.spans[k],
                    gravity,
                    w,
                );
                let (si, sj) = (9 * k, 9 * (k + 1));
                let haa = ja.transpose() * ja;
                let hab = ja.transpose() * jb;
                let hbb = jb.transpose() * jb;
                for a in 0..9 {
                    for b in 0..9 {
                        h[(si + a, si + b)] += haa[(a, b)];
                        h[(si + a, sj + b)] += hab[(a, b)];
                        h[(sj + a, si + b)] += hab[(b, a)];
                        h[(sj + a, sj + b)] += hbb[(a, b)];
                    }
                }
                let ga = ja.transpose() * r;
                let gb = jb.transpose() * r;
                for a in 0..9 {
                    g[si + a] += ga[a];
                    g[sj + a] += gb[a];
                }
            }

            let mut stepped = false;
            while lambda <= cfg.lambda_max {
                let mut damped = h.clone();
                for k in 0..dim {
                    damped[(k, k)] += lambda * (1.0 + h[(k, k)]);
                }
                let Some(chol) = damped.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let dx = chol.solve(&(-&g));
                let candidate = Self::applied(&self.nodes, &dx);
                let new_cost = Self::cost(&candidate, &self.spans, gravity, w);
                if new_cost < cost {
                    self.nodes = candidate;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    stepped = true;
                    if dx.norm() < cfg.step_tolerance {
                        converged = true;
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !stepped {
                converged = true;
            }
            if converged {
                break;
            }
        }

        OptimizeReport {
            initial_cost,
            final_cost: cost,
            iterations,
            converged,
        }
    }
}
