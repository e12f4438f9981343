//! Dual-arm redundancy resolution along a relative 5-dof curve.
//!
//! Robot 2 holds the workpiece; the curve `(p*, n*)` is expressed in robot 2's
//! TCP frame. Tracking means `p1 = p2 + R2 p*` and `e_z1 = -R2 n*`.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Matrix6, Matrix6xX, Vector3, Vector6};

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::geometry::{angle_between, skew, PlanarPose, Pose};
use crate::kinematics::{chain_jacobian, ChainState, JointVector, RobotModel};

/// The 15 configuration parameters: start joints of both arms and the planar
/// placement of robot 2's base.
#[derive(Debug, Clone, PartialEq)]
pub struct DualConfig {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub base2: PlanarPose,
}

impl DualConfig {
    pub fn to_params(&self) -> Vec<f64> {
        let mut v = self.q1.clone();
        v.extend_from_slice(&self.q2);
        v.extend_from_slice(&[self.base2.x, self.base2.y, self.base2.yaw]);
        v
    }

    pub fn from_params(params: &[f64], joints1: usize) -> Self {
        let m = params.len();
        Self {
            q1: params[..joints1].to_vec(),
            q2: params[joints1..m - 3].to_vec(),
            base2: PlanarPose::new(params[m - 3], params[m - 2], params[m - 1]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    pub tol_pos: f64,
    pub tol_norm: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Largest accepted per-sample change of any joint (rad).
    pub max_jump: f64,
    /// Keep robot 2 fixed and solve with robot 1 alone.
    pub lock_robot2: bool,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self { tol_pos: 1e-3, tol_norm: 1e-5, max_iter: 100, damping: 0.01, max_jump: 0.1, lock_robot2: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPath {
    pub lambda: Vec<f64>,
    pub q1: Vec<JointVector>,
    pub q2: Vec<JointVector>,
    pub res_pos: Vec<f64>,
    pub res_norm: Vec<f64>,
}

impl JointPath {
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// CSV rows: λ, q1[1..n], q2[1..n], residual_p, residual_n.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("lambda");
        for r in 1..=2 {
            let n = if r == 1 { &self.q1 } else { &self.q2 }.first().map_or(0, |q| q.len());
            for j in 1..=n {
                out.push_str(&format!(",q{r}_{j}"));
            }
        }
        out.push_str(",residual_p,residual_n\n");
        for i in 0..self.len() {
            out.push_str(&format!("{}", self.lambda[i]));
            for v in self.q1[i].iter().chain(self.q2[i].iter()) {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{},{}\n", self.res_pos[i], self.res_norm[i]));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Why a single-pose solve failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IkFailure {
    NonConvergent,
    LimitLocked,
}

/// Two arms placed in a common world frame.
#[derive(Debug, Clone, Copy)]
pub struct DualArm<'a> {
    pub robot1: &'a RobotModel,
    pub robot2: &'a RobotModel,
    pub planar: PlanarPose,
    base1: Pose,
    base2: Pose,
}

/// Chain states of both arms at one configuration.
pub struct DualState {
    pub c1: ChainState,
    pub c2: ChainState,
}

impl<'a> DualArm<'a> {
    pub fn new(robot1: &'a RobotModel, robot2: &'a RobotModel, planar: PlanarPose) -> Self {
        Self {
            robot1,
            robot2,
            planar,
            base1: robot1.base_transform,
            base2: planar.lift().compose(&robot2.base_transform),
        }
    }

    pub fn with_base2(&self, planar: PlanarPose) -> Self {
        Self::new(self.robot1, self.robot2, planar)
    }

    pub fn fk1(&self, q1: &[f64]) -> Result<Pose> {
        self.robot1.fk_from(&self.base1, q1)
    }

    pub fn fk2(&self, q2: &[f64]) -> Result<Pose> {
        self.robot2.fk_from(&self.base2, q2)
    }

    pub fn state(&self, q1: &[f64], q2: &[f64]) -> Result<DualState> {
        Ok(DualState { c1: self.robot1.chain_from(&self.base1, q1)?, c2: self.robot2.chain_from(&self.base2, q2)? })
    }

    /// Robot 1's TCP expressed in robot 2's TCP frame.
    pub fn relative_pose(&self, q1: &[f64], q2: &[f64]) -> Result<Pose> {
        Ok(self.fk2(q2)?.inverse().compose(&self.fk1(q1)?))
    }

    /// `(e_p, θ)` with `e_p = p1 − p2 − R2 p*` (world, mm) and `θ = ∠(e_z1, −R2 n*)`.
    pub fn relative_error(&self, q1: &[f64], q2: &[f64], p: &Vector3<f64>, n: &Vector3<f64>) -> Result<(Vector3<f64>, f64)> {
        let s = self.state(q1, q2)?;
        Ok(tracking_error(&s, p, n))
    }

    /// 6×12 Jacobian of `[e_p; e_z1 × (−R2 n*)]` with respect to `[q1; q2]`.
    pub fn relative_jacobian(&self, q1: &[f64], q2: &[f64], p: &Vector3<f64>, n: &Vector3<f64>) -> Result<Matrix6xX<f64>> {
        let s = self.state(q1, q2)?;
        Ok(stacked_jacobian(&s, p, n))
    }

    /// Damped Newton iteration for one curve sample. `q1`/`q2` hold the seed on
    /// entry and the result on exit; returns the final `(‖e_p‖, θ)`.
    ///
    /// A failure is `LimitLocked` when the same iteration without joint limits
    /// would have converged, otherwise `NonConvergent`.
    pub fn solve_pose(
        &self,
        q1: &mut [f64],
        q2: &mut [f64],
        p: &Vector3<f64>,
        n: &Vector3<f64>,
        opt: &IkOptions,
    ) -> std::result::Result<(f64, f64), IkFailure> {
        let seed = (q1.to_vec(), q2.to_vec());
        let (res, clamped) = self.newton(q1, q2, p, n, opt, true);
        if res.0 <= opt.tol_pos && res.1 <= opt.tol_norm {
            return Ok(res);
        }
        if clamped {
            let (mut f1, mut f2) = seed;
            let (free, _) = self.newton(&mut f1, &mut f2, p, n, opt, false);
            if free.0 <= opt.tol_pos && free.1 <= opt.tol_norm {
                return Err(IkFailure::LimitLocked);
            }
        }
        Err(IkFailure::NonConvergent)
    }

    fn newton(
        &self,
        q1: &mut [f64],
        q2: &mut [f64],
        p: &Vector3<f64>,
        n: &Vector3<f64>,
        opt: &IkOptions,
        limits: bool,
    ) -> ((f64, f64), bool) {
        let n1 = q1.len();
        let n2 = q2.len();
        // iterate past the tolerance so the path is smooth enough to differentiate
        let (tight_p, tight_n) = (opt.tol_pos * 1e-2, opt.tol_norm * 1e-2);
        let mut clamped = false;
        let mut last = (f64::INFINITY, f64::INFINITY);
        for iter in 0..=opt.max_iter {
            let Ok(s) = self.state(q1, q2) else { break };
            let (ep, theta) = tracking_error(&s, p, n);
            last = (ep.norm(), theta);
            if (last.0 <= tight_p && last.1 <= tight_n) || iter == opt.max_iter {
                break;
            }
            let a = s.c1.tcp.z_axis();
            let b = -(s.c2.tcp.rotation * n);
            let mut r = Vector6::zeros();
            r.fixed_rows_mut::<3>(0).copy_from(&ep);
            r.fixed_rows_mut::<3>(3).copy_from(&a.cross(&b));
            let mut jac = stacked_jacobian(&s, p, n);
            if opt.lock_robot2 {
                jac.columns_mut(n1, n2).fill(0.0);
            }
            let jjt: Matrix6<f64> = &jac * jac.transpose() + Matrix6::identity() * opt.damping;
            let Some(chol) = jjt.cholesky() else { break };
            let mut dq = jac.transpose() * chol.solve(&(-r));
            let peak = dq.amax();
            if peak > 0.3 {
                dq *= 0.3 / peak;
            }
            for j in 0..n1 {
                q1[j] += dq[j];
            }
            for j in 0..n2 {
                q2[j] += dq[n1 + j];
            }
            if limits {
                let c1 = self.robot1.clamp(q1);
                let c2 = self.robot2.clamp(q2);
                clamped |= c1 || c2;
            }
        }
        (last, clamped)
    }

    /// Joint path of both arms along `curve`, each sample seeded from the previous one.
    pub fn solve_path(&self, q1_start: &[f64], q2_start: &[f64], curve: &Curve, opt: &IkOptions) -> Result<JointPath> {
        for (model, q) in [(self.robot1, q1_start), (self.robot2, q2_start)] {
            if q.len() != model.joint_count() {
                return Err(Error::Dimension { expected: model.joint_count(), got: q.len() });
            }
            if !model.within_limits(q) {
                return Err(Error::InvalidArgument(format!("start configuration of {} is outside its joint limits", model.name)));
            }
        }
        let m = curve.len();
        let mut q1 = q1_start.to_vec();
        let mut q2 = q2_start.to_vec();
        let mut path = JointPath {
            lambda: curve.lambda.clone(),
            q1: Vec::with_capacity(m),
            q2: Vec::with_capacity(m),
            res_pos: Vec::with_capacity(m),
            res_norm: Vec::with_capacity(m),
        };
        for i in 0..m {
            let lambda = curve.lambda[i];
            let (rp, rn) = self.solve_pose(&mut q1, &mut q2, &curve.p[i], &curve.n[i], opt).map_err(|f| match f {
                IkFailure::NonConvergent => Error::NonConvergent { lambda },
                IkFailure::LimitLocked => Error::JointLimitLocked { lambda },
            })?;
            if i > 0 {
                let jump = q1
                    .iter()
                    .zip(path.q1[i - 1].iter())
                    .chain(q2.iter().zip(path.q2[i - 1].iter()))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if jump > opt.max_jump {
                    return Err(Error::BranchJump { lambda, jump });
                }
            }
            path.q1.push(JointVector::from_column_slice(&q1));
            path.q2.push(JointVector::from_column_slice(&q2));
            path.res_pos.push(rp);
            path.res_norm.push(rn);
        }
        Ok(path)
    }
}

/// Solves the joint path for a configuration; the robot 2 base comes from `config`.
pub fn solve_path(config: &DualConfig, curve: &Curve, robot1: &RobotModel, robot2: &RobotModel, opt: &IkOptions) -> Result<JointPath> {
    DualArm::new(robot1, robot2, config.base2).solve_path(&config.q1, &config.q2, curve, opt)
}

pub fn tracking_error(s: &DualState, p: &Vector3<f64>, n: &Vector3<f64>) -> (Vector3<f64>, f64) {
    let (t1, t2) = (&s.c1.tcp, &s.c2.tcp);
    let ep = t1.position - t2.position - t2.rotation * p;
    let theta = angle_between(&t1.z_axis(), &(-(t2.rotation * n)));
    (ep, theta)
}

fn stacked_jacobian(s: &DualState, p: &Vector3<f64>, n: &Vector3<f64>) -> Matrix6xX<f64> {
    let j1 = chain_jacobian(&s.c1);
    let j2 = chain_jacobian(&s.c2);
    let (n1, n2) = (j1.ncols(), j2.ncols());
    let r2 = s.c2.tcp.rotation;
    let a = s.c1.tcp.z_axis();
    let b = -(r2 * n);
    let (ax, bx) = (skew(&a), skew(&b));
    let normal1: Matrix3<f64> = bx * ax;
    let normal2: Matrix3<f64> = -(ax * bx);
    let lever = skew(&(r2 * p));
    let mut out = Matrix6xX::zeros(n1 + n2);
    out.view_mut((0, 0), (3, n1)).copy_from(&j1.rows(3, 3));
    out.view_mut((3, 0), (3, n1)).copy_from(&(normal1 * j1.rows(0, 3)));
    out.view_mut((0, n1), (3, n2)).copy_from(&(-j2.rows(3, 3) + lever * j2.rows(0, 3)));
    out.view_mut((3, n1), (3, n2)).copy_from(&(normal2 * j2.rows(0, 3)));
    out
}
