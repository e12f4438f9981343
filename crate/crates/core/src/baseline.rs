//! Industry-practice reference program: robot 2 holds still while robot 1
//! follows the curve with equally spaced moveL steps.

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::fitting::lead_configuration;
use crate::kinematics::forward_kinematics;
use crate::metrics::{compute_metrics, Metrics, Tolerances};
use crate::program::{MotionProgram, Primitive};
use crate::relative_ik::{DualArm, JointPath};
use crate::sim::{average_runs, SimOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOptions {
    /// Number of moveL steps along the curve.
    pub waypoints: usize,
    /// Lead-in and lead-out length, mm; 0 disables them.
    pub extension: f64,
    /// Blend radius at every interior waypoint, mm.
    pub blend: f64,
    /// Bisection bracket and resolution for the commanded speed, mm/s.
    pub speed_min: f64,
    pub speed_max: f64,
    pub resolution: f64,
    /// Executions averaged per evaluated speed.
    pub runs: usize,
    pub sim: SimOptions,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            waypoints: 50,
            extension: 30.0,
            blend: 2.0,
            speed_min: 1.0,
            speed_max: 2000.0,
            resolution: 1.0,
            runs: 5,
            sim: SimOptions::default(),
        }
    }
}

impl BaselineOptions {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints == 0 || self.runs == 0 {
            return Err(Error::InvalidArgument("baseline needs at least one waypoint and one run".into()));
        }
        if !(self.speed_min > 0.0) || !(self.speed_max >= self.speed_min) || !(self.resolution > 0.0) {
            return Err(Error::InvalidArgument("baseline speed bracket must be positive and ordered".into()));
        }
        if !(self.extension >= 0.0) || !(self.blend >= 0.0) {
            return Err(Error::InvalidArgument("baseline extension and blend must be non-negative".into()));
        }
        Ok(())
    }
}

/// Baseline program at commanded `speed` from a joint path whose robot 2
/// joints are constant.
pub fn baseline_program(path: &JointPath, arm: &DualArm, opt: &BaselineOptions, speed: f64) -> Result<MotionProgram> {
    opt.validate()?;
    let m = path.len();
    if m < 2 || opt.waypoints > m - 1 {
        return Err(Error::InvalidArgument(format!("{} waypoints do not fit a path of {m} samples", opt.waypoints)));
    }
    let hold = path.q2[0].as_slice().to_vec();
    if path.q2.iter().any(|q| q.as_slice() != hold.as_slice()) {
        return Err(Error::InvalidArgument("baseline path must keep robot 2 fixed".into()));
    }
    let mut ext = opt.extension;
    let mut leads = None;
    while ext > 1e-3 {
        let a = lead_configuration(&path.q1, &path.lambda, true, ext);
        let b = lead_configuration(&path.q1, &path.lambda, false, ext);
        if arm.robot1.within_limits(a.as_slice()) && arm.robot1.within_limits(b.as_slice()) {
            leads = Some((a, b));
            break;
        }
        ext /= 2.0;
    }

    let mut robot1 = Vec::new();
    let mut robot2 = Vec::new();
    let mut start1 = path.q1[0].as_slice().to_vec();
    if let Some((a, _)) = &leads {
        start1 = a.as_slice().to_vec();
        robot1.push(Primitive::joint(path.q1[0].as_slice(), speed, opt.blend));
        robot2.push(Primitive::joint(&hold, speed, opt.blend));
    }
    for k in 1..=opt.waypoints {
        let i = (k * (m - 1) + opt.waypoints / 2) / opt.waypoints;
        let pose = forward_kinematics(arm.robot1, path.q1[i].as_slice())?;
        robot1.push(Primitive::line(&pose, speed, opt.blend));
        robot2.push(Primitive::joint(&hold, speed, opt.blend));
    }
    if let Some((_, b)) = &leads {
        robot1.push(Primitive::joint(b.as_slice(), speed, 0.0));
        robot2.push(Primitive::joint(&hold, speed, 0.0));
    }
    robot1.last_mut().unwrap().blend = 0.0;
    robot2.last_mut().unwrap().blend = 0.0;
    let program = MotionProgram { base2: arm.planar, start1, start2: hold, robot1, robot2 };
    program.validate()?;
    Ok(program)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub success: bool,
    /// Commanded speed of `program`, the fastest passing one on success.
    pub speed: f64,
    pub program: MotionProgram,
    pub metrics: Metrics,
    /// Every evaluated (speed, passed) pair in order.
    pub evaluations: Vec<(f64, bool)>,
}

/// Fastest baseline program whose simulated execution meets `tol`, found by
/// bisection over the commanded speed.
pub fn baseline(path: &JointPath, arm: &DualArm, curve: &Curve, tol: &Tolerances, opt: &BaselineOptions) -> Result<BaselineOutcome> {
    tol.validate()?;
    opt.validate()?;
    let mut evaluations = Vec::new();
    let mut run = |speed: f64| -> Result<(MotionProgram, Metrics, bool)> {
        let program = baseline_program(path, arm, opt, speed)?;
        let record = average_runs(&program, arm.robot1, arm.robot2, &opt.sim, opt.runs)?;
        let m = compute_metrics(&record, curve, arm, tol)?;
        let ok = tol.satisfied_by(&m);
        evaluations.push((speed, ok));
        Ok((program, m, ok))
    };
    let top = run(opt.speed_max)?;
    if top.2 {
        return Ok(BaselineOutcome { success: true, speed: opt.speed_max, program: top.0, metrics: top.1, evaluations });
    }
    let bottom = run(opt.speed_min)?;
    if !bottom.2 {
        return Ok(BaselineOutcome { success: false, speed: opt.speed_min, program: bottom.0, metrics: bottom.1, evaluations });
    }
    let (mut lo, mut hi) = (opt.speed_min, opt.speed_max);
    let mut best = bottom;
    while hi - lo > opt.resolution {
        let mid = 0.5 * (lo + hi);
        let r = run(mid)?;
        if r.2 {
            lo = mid;
            best = r;
        } else {
            hi = mid;
        }
    }
    Ok(BaselineOutcome { success: true, speed: lo, program: best.0, metrics: best.1, evaluations })
}
