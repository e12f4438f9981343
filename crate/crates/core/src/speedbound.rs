//! Largest constant relative path speed λ̇ allowed by joint velocity and
//! configuration-dependent acceleration limits along a joint path.
//!
//! With λ̈ = 0 the joint rates are `q′ λ̇` and `q″ λ̇²`, so each sample gives a
//! closed-form ceiling on λ̇.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::diff;
use crate::error::{Error, Result};
use crate::kinematics::RobotModel;
use crate::relative_ik::JointPath;

/// A speed ceiling; channels that never move impose none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Finite(f64),
    Unbounded,
}

impl Bound {
    pub fn min(self, other: Bound) -> Bound {
        match (self, other) {
            (Bound::Finite(a), Bound::Finite(b)) => Bound::Finite(a.min(b)),
            (Bound::Finite(a), Bound::Unbounded) | (Bound::Unbounded, Bound::Finite(a)) => Bound::Finite(a),
            (Bound::Unbounded, Bound::Unbounded) => Bound::Unbounded,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Bound::Finite(v) => Some(v),
            Bound::Unbounded => None,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// Magnitudes below this are treated as "not moving".
const MOTIONLESS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    pub lambda: Vec<f64>,
    pub vel_bound: Vec<Bound>,
    pub acc_bound: Vec<Bound>,
    pub combined: Vec<Bound>,
    pub mu: Bound,
}

impl SpeedProfile {
    /// μ as a number; an unbounded path reports infinity.
    pub fn mu_value(&self) -> f64 {
        self.mu.finite().unwrap_or(f64::INFINITY)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("lambda,vel_bound,acc_bound,combined\n");
        for i in 0..self.lambda.len() {
            out.push_str(&format!("{},{},{},{}\n", self.lambda[i], self.vel_bound[i], self.acc_bound[i], self.combined[i]));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// `q′(λ)` and `q″(λ)` per sample, with robot 1's joints followed by robot 2's.
#[derive(Debug, Clone)]
pub struct PathDerivatives {
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
}

pub fn path_derivatives(path: &JointPath) -> Result<PathDerivatives> {
    let channels: Vec<Vec<f64>> = (0..path.len()).map(|i| path.q1[i].iter().chain(path.q2[i].iter()).copied().collect()).collect();
    channel_derivatives(&path.lambda, &channels)
}

/// Derivatives of arbitrary joint channels sampled on a uniform λ grid.
pub fn channel_derivatives(lambda: &[f64], q: &[Vec<f64>]) -> Result<PathDerivatives> {
    if lambda.len() < 3 {
        return Err(Error::InvalidArgument(format!("path derivatives need at least 3 samples, got {}", lambda.len())));
    }
    if !diff::is_uniform(lambda, 1e-9) {
        return Err(Error::NonUniformGrid);
    }
    let m = lambda.len();
    let width = q[0].len();
    let mut d1 = vec![vec![0.0; width]; m];
    let mut d2 = vec![vec![0.0; width]; m];
    let mut y = vec![0.0; m];
    for c in 0..width {
        for i in 0..m {
            y[i] = q[i][c];
        }
        let (a, b) = diff::three_point(lambda, &y);
        for i in 0..m {
            d1[i][c] = a[i];
            d2[i][c] = b[i];
        }
    }
    Ok(PathDerivatives { d1, d2 })
}

/// Limits for every channel: `(q̇min, q̇max)` and the per-sample `q̈max` magnitudes.
pub struct ChannelLimits<'a> {
    pub vel_min: &'a [f64],
    pub vel_max: &'a [f64],
    pub acc: &'a [Vec<f64>],
}

/// Uniform-speed ceiling from precomputed derivatives. The first and last
/// samples do not contribute an acceleration bound.
pub fn speed_profile(lambda: &[f64], d: &PathDerivatives, limits: &ChannelLimits) -> SpeedProfile {
    let m = lambda.len();
    let mut vel_bound = Vec::with_capacity(m);
    let mut acc_bound = Vec::with_capacity(m);
    let mut combined = Vec::with_capacity(m);
    let mut mu = Bound::Unbounded;
    for i in 0..m {
        let mut vb = Bound::Unbounded;
        for (c, &qp) in d.d1[i].iter().enumerate() {
            if qp > MOTIONLESS {
                vb = vb.min(Bound::Finite(limits.vel_max[c] / qp));
            } else if qp < -MOTIONLESS {
                vb = vb.min(Bound::Finite(limits.vel_min[c] / qp));
            }
        }
        let mut ab = Bound::Unbounded;
        if i > 0 && i + 1 < m {
            for (c, &qpp) in d.d2[i].iter().enumerate() {
                if qpp.abs() > MOTIONLESS {
                    ab = ab.min(Bound::Finite((limits.acc[i][c] / qpp.abs()).sqrt()));
                }
            }
        }
        let cb = vb.min(ab);
        mu = mu.min(cb);
        vel_bound.push(vb);
        acc_bound.push(ab);
        combined.push(cb);
    }
    SpeedProfile { lambda: lambda.to_vec(), vel_bound, acc_bound, combined, mu }
}

/// Maximum uniform relative speed for a dual-arm joint path.
pub fn max_uniform_speed(path: &JointPath, robot1: &RobotModel, robot2: &RobotModel) -> Result<SpeedProfile> {
    if path.len() < 2 || *path.lambda.last().unwrap() <= 0.0 {
        return Err(Error::ZeroLengthPath);
    }
    let d = path_derivatives(path)?;
    let vel_min: Vec<f64> = robot1.qd_min.iter().chain(robot2.qd_min.iter()).copied().collect();
    let vel_max: Vec<f64> = robot1.qd_max.iter().chain(robot2.qd_max.iter()).copied().collect();
    let acc = (0..path.len())
        .map(|i| {
            let a1 = robot1.accel_limits(path.q1[i].as_slice())?;
            let a2 = robot2.accel_limits(path.q2[i].as_slice())?;
            Ok(a1.iter().chain(a2.iter()).copied().collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(speed_profile(&path.lambda, &d, &ChannelLimits { vel_min: &vel_min, vel_max: &vel_max, acc: &acc }))
}
