//! Multi-view averaging and pose error measures.

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};

use super::{Appearances, Pose, RelativePose};

/// Averages root-relative poses after rotating each into the first view:
/// `P̄₁ = (1/N) Σᵢ Rᵢ→₁·P̄ᵢ`.
pub fn fuse_poses(poses: &[RelativePose], rotations: &[Mat3]) -> Result<RelativePose> {
    let first = poses.first().ok_or(Error::EmptyInput)?;
    if poses.len() != rotations.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} poses but {} rotations",
            poses.len(),
            rotations.len()
        )));
    }
    let n_joints = first.offsets.len();
    if let Some(bad) = poses.iter().position(|p| p.offsets.len() != n_joints) {
        return Err(Error::ShapeMismatch(format!(
            "pose {bad} has {} joints, expected {n_joints}",
            poses[bad].offsets.len()
        )));
    }
    let scale = 1.0 / poses.len() as f64;
    let mut sum = vec![Vec3::zeros(); n_joints];
    for (pose, r) in poses.iter().zip(rotations) {
        for (acc, o) in sum.iter_mut().zip(&pose.offsets) {
            *acc += r * o;
        }
    }
    Ok(RelativePose {
        offsets: sum.into_iter().map(|s| s * scale).collect(),
    })
}

/// Element-wise mean of per-view appearance matrices.
pub fn fuse_appearances(apps: &[Appearances]) -> Result<Appearances> {
    let first = apps.first().ok_or(Error::EmptyInput)?;
    let shape = first.shape();
    if let Some(bad) = apps.iter().position(|a| a.shape() != shape) {
        return Err(Error::ShapeMismatch(format!(
            "appearance {bad} is {:?}, expected {shape:?}",
            apps[bad].shape()
        )));
    }
    let mut sum = Appearances::zeros(shape.0, shape.1);
    for a in apps {
        sum += a;
    }
    Ok(sum / apps.len() as f64)
}

/// Confidence-weighted mean squared joint error.
pub fn pose_loss(pred: &RelativePose, truth: &RelativePose, conf: &[f64]) -> Result<f64> {
    let n = pred.offsets.len();
    if truth.offsets.len() != n || conf.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "pose loss over {n} predicted, {} true joints and {} weights",
            truth.offsets.len(),
            conf.len()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = pred
        .offsets
        .iter()
        .zip(&truth.offsets)
        .zip(conf)
        .map(|((p, t), c)| c * (t - p).norm_squared())
        .sum();
    Ok(total / n as f64)
}

/// Mean per-joint position error, in the poses' length unit.
pub fn mpjpe(pred: &Pose, truth: &Pose) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted joints, {} true joints",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pred.joints.iter().zip(&truth.joints).map(|(p, t)| (p - t).norm()).sum();
    Ok(total / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(v: &[[f64; 3]]) -> RelativePose {
        RelativePose {
            offsets: v.iter().map(|&p| Vec3::from(p)).collect(),
        }
    }

    fn random_rotation(rng: &mut impl Rng) -> Mat3 {
        let seed: [f64; 9] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let q = Mat3::from_row_slice(&seed).qr().q();
        if q.determinant() < 0.0 {
            -q
        } else {
            q
        }
    }

    #[test]
    fn single_identity_view() {
        let p = rel(&[[0.1, 0.2, 0.3], [-1.0, 0.5, 0.0]]);
        assert_eq!(fuse_poses(&[p.clone()], &[Mat3::identity()]).unwrap(), p);
    }

    #[test]
    fn consistent_views_fuse_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = rel(&[[0.1, 0.2, 0.3], [-1.0, 0.5, 0.0], [0.4, -0.3, 0.9]]);
        let r12 = random_rotation(&mut rng);
        let second = RelativePose {
            offsets: p.offsets.iter().map(|o| r12 * o).collect(),
        };
        let fused = fuse_poses(&[p.clone(), second], &[Mat3::identity(), r12.transpose()]).unwrap();
        for (a, b) in fused.offsets.iter().zip(&p.offsets) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn identity_rotations_give_the_mean() {
        let a = rel(&[[1.0, 2.0, 3.0]]);
        let b = rel(&[[3.0, -2.0, 1.0]]);
        let f = fuse_poses(&[a, b], &[Mat3::identity(); 2]).unwrap();
        assert_abs_diff_eq!(f.offsets[0], Vec3::new(2.0, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(fuse_poses(&[], &[]), Err(Error::EmptyInput)));
        assert!(matches!(fuse_appearances(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn appearance_mean() {
        let x = Appearances::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.25 - 1.0);
        assert_eq!(fuse_appearances(&[x.clone()]).unwrap(), x);
        let f = fuse_appearances(&[Appearances::zeros(3, 4), 2.0 * &x]).unwrap();
        assert_abs_diff_eq!(f, x, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let views: Vec<Appearances> = (0..5)
            .map(|_| Appearances::from_fn(4, 6, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let fused = fuse_appearances(&views).unwrap();
        for i in 0..4 {
            for j in 0..6 {
                let mut s = 0.0;
                for v in &views {
                    s += v[(i, j)];
                }
                assert!((fused[(i, j)] - s / 5.0).abs() <= 1e-12);
            }
        }
        assert!(fuse_appearances(&[x, Appearances::zeros(2, 4)]).is_err());
    }

    #[test]
    fn pose_loss_examples() {
        let t = rel(&[[0.0; 3], [1.0, 1.0, 1.0], [0.5, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        assert_eq!(pose_loss(&t, &t, &[1.0; 4]).unwrap(), 0.0);
        let mut p = t.clone();
        p.offsets[2].x += 1.0;
        assert_abs_diff_eq!(pose_loss(&p, &t, &[1.0; 4]).unwrap(), 0.25, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = RelativePose {
            offsets: (0..9).map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect(),
        };
        let b = RelativePose {
            offsets: (0..9).map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect(),
        };
        let conf: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut naive = 0.0;
        for k in 0..9 {
            let mut d2 = 0.0;
            for c in 0..3 {
                d2 += (b.offsets[k][c] - a.offsets[k][c]).powi(2);
            }
            naive += conf[k] * d2;
        }
        assert!((pose_loss(&a, &b, &conf).unwrap() - naive / 9.0).abs() <= 1e-12);
    }

    #[test]
    fn mpjpe_examples() {
        let p = Pose::new(vec![Vec3::new(0.0, 0.0, 3.0), Vec3::new(0.3, 0.1, 3.2)]);
        assert_eq!(mpjpe(&p, &p).unwrap(), 0.0);
        let shifted = Pose::new(p.joints.iter().map(|j| j + Vec3::new(0.03, 0.0, 0.04)).collect());
        assert_abs_diff_eq!(mpjpe(&shifted, &p).unwrap(), 0.05, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Pose::new((0..12).map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect());
        let b = Pose::new((0..12).map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect());
        let naive: f64 = (0..12)
            .map(|k| {
                let d: f64 = (0..3).map(|c| (a.joints[k][c] - b.joints[k][c]).powi(2)).sum();
                d.sqrt()
            })
            .sum::<f64>()
            / 12.0;
        assert!((mpjpe(&a, &b).unwrap() - naive).abs() <= 1e-12);
    }
}
