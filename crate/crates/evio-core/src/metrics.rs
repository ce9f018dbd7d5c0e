//! Trajectory accuracy metrics: absolute error after rigid alignment and
//! drift-style relative error over fixed time offsets.

use crate::geometry::Pose;
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

/// Pairs each estimate with the ground-truth sample nearest in time, within
/// `max_dt_s`. Both inputs must be sorted by time.
pub fn associate(
    estimate: &[(f64, Pose)],
    groundtruth: &[(f64, Pose)],
    max_dt_s: f64,
) -> Vec<(Pose, Pose)> {
    let mut out = Vec::new();
    let mut cursor = 0usize;
    for &(t, est) in estimate {
        while cursor + 1 < groundtruth.len()
            && (groundtruth[cursor + 1].0 - t).abs() <= (groundtruth[cursor].0 - t).abs()
        {
            cursor += 1;
        }
        if groundtruth.is_empty() {
            break;
        }
        let (tg, gt) = groundtruth[cursor];
        if (tg - t).abs() <= max_dt_s {
            out.push((est, gt));
        }
    }
    out
}

/// Least-squares rigid transform `T` minimizing `sum |T a_i - b_i|^2`.
pub fn align_rigid(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Option<Pose> {
    if a.len() != b.len() || a.len() < 3 {
        return None;
    }
    let n = a.len() as f64;
    let ca = a.iter().sum::<Vector3<f64>>() / n;
    let cb = b.iter().sum::<Vector3<f64>>() / n;
    let mut w = Matrix3::zeros();
    for (pa, pb) in a.iter().zip(b.iter()) {
        w += (pb - cb) * (pa - ca).transpose();
    }
    let svd = w.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rot = Rotation3::from_matrix_unchecked(u * d * v_t);
    let q = UnitQuaternion::from_rotation_matrix(&rot);
    let t = cb - rot * ca;
    Some(Pose::new(q, t))
}

#[derive(Debug, Clone)]
pub struct AteResult {
    pub rmse_m: f64,
    pub mean_m: f64,
    pub median_m: f64,
    pub max_m: f64,
    pub samples: usize,
    /// Transform applied to the estimate before measuring.
    pub alignment: Pose,
}

/// Absolute trajectory error: rigidly aligns the estimated positions to the
/// ground truth, then reports position residual statistics.
pub fn absolute_trajectory_error(pairs: &[(Pose, Pose)]) -> Option<AteResult> {
    let est: Vec<Vector3<f64>> = pairs.iter().map(|(e, _)| e.translation).collect();
    let gt: Vec<Vector3<f64>> = pairs.iter().map(|(_, g)| g.translation).collect();
    let alignment = align_rigid(&est, &gt)?;
    let mut errors: Vec<f64> = est
        .iter()
        .zip(gt.iter())
        .map(|(e, g)| (alignment.transform(e) - g).norm())
        .collect();
    errors.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = errors.len() as f64;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mean = errors.iter().sum::<f64>() / n;
    let median = errors[errors.len() / 2];
    Some(AteResult {
        rmse_m: rmse,
        mean_m: mean,
        median_m: median,
        max_m: *errors.last().unwrap(),
        samples: errors.len(),
        alignment,
    })
}

/// RMS rotation error in radians after removing the single best-fit rotation
/// offset between the trajectories (the chordal mean of `gt_i * est_i^-1`).
///
/// Estimating the offset from the rotations themselves keeps the measure
/// gauge-invariant even when the positions are nearly collinear, where the
/// rotation of the position-cloud alignment is ill-conditioned.
pub fn absolute_rotation_error(pairs: &[(Pose, Pose)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let mut m = Matrix3::zeros();
    for (e, g) in pairs {
        m += (g.rotation * e.rotation.inverse())
            .to_rotation_matrix()
            .matrix();
    }
    // Project the Euclidean mean back onto the rotation group.
    let svd = m.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rot = Rotation3::from_matrix_unchecked(u * d * v_t);
    let q_hat = UnitQuaternion::from_rotation_matrix(&rot);
    let sq: f64 = pairs
        .iter()
        .map(|(e, g)| (g.rotation.inverse() * q_hat * e.rotation).angle().powi(2))
        .sum();
    Some((sq / pairs.len() as f64).sqrt())
}

#[derive(Debug, Clone)]
pub struct RpeResult {
    pub delta_s: f64,
    pub rmse_translation_m: f64,
    pub rmse_rotation_rad: f64,
    pub samples: usize,
}

/// Relative pose error: compares estimated and true motion over windows of
/// `delta_s` seconds, insensitive to global alignment.
pub fn relative_pose_error(
    estimate: &[(f64, Pose)],
    groundtruth: &[(f64, Pose)],
    delta_s: f64,
    max_dt_s: f64,
) -> Option<RpeResult> {
    let pairs_t: Vec<(f64, Pose, Pose)> = {
        // Re-associate keeping timestamps so windows can be formed.
        let mut v = Vec::new();
        let mut cursor = 0usize;
        for &(t, est) in estimate {
            while cursor + 1 < groundtruth.len()
                && (groundtruth[cursor + 1].0 - t).abs() <= (groundtruth[cursor].0 - t).abs()
            {
                cursor += 1;
            }
            let (tg, gt) = groundtruth[cursor];
            if (tg - t).abs() <= max_dt_s {
                v.push((t, est, gt));
            }
        }
        v
    };
    if pairs_t.len() < 2 {
        return None;
    }

    let mut sq_trans = 0.0;
    let mut sq_rot = 0.0;
    let mut count = 0usize;
    let mut j = 0usize;
    for i in 0..pairs_t.len() {
        let target = pairs_t[i].0 + delta_s;
        if j < i + 1 {
            j = i + 1;
        }
        while j + 1 < pairs_t.len() && (pairs_t[j + 1].0 - target).abs() <= (pairs_t[j].0 - target).abs() {
            j += 1;
        }
        if j >= pairs_t.len() || (pairs_t[j].0 - target).abs() > max_dt_s.max(0.25 * delta_s) {
            continue;
        }
        let (_, e_i, g_i) = &pairs_t[i];
        let (_, e_j, g_j) = &pairs_t[j];
        let rel_est = e_i.inverse().compose(e_j);
        let rel_gt = g_i.inverse().compose(g_j);
        let err = rel_gt.inverse().compose(&rel_est);
        sq_trans += err.translation.norm_squared();
        sq_rot += err.rotation.angle().powi(2);
        count += 1;
    }
    if count == 0 {
        return None;
    }
    Some(RpeResult {
        delta_s,
        rmse_translation_m: (sq_trans / count as f64).sqrt(),
        rmse_rotation_rad: (sq_rot / count as f64).sqrt(),
        samples: count,
    })
}
