//! The three stages on a loaded scenario: configuration optimization,
//! waypoint fitting and waypoint iteration, plus the single-arm baseline.

use crate::baseline::{baseline, BaselineOutcome};
use crate::config_opt::{optimize, OptimizeResult, SearchSpace};
use crate::error::Result;
use crate::fitting::{greedy_fit_dual, FitOptions, FitReport};
use crate::program::MotionProgram;
use crate::relative_ik::{solve_path, DualArm, DualConfig, IkOptions, JointPath};
use crate::scenario::Scenario;
use crate::speedbound::{max_uniform_speed, SpeedProfile};
use crate::tuner::{adjustable_steps, tune, TuneOutcome};

impl Scenario {
    pub fn arm(&self, config: &DualConfig) -> DualArm<'_> {
        DualArm::new(&self.robot1, &self.robot2, config.base2)
    }
}

/// Robot 2 parked at the start joints, robot 1 alone following the curve.
pub fn single_arm(sc: &Scenario) -> Result<(DualConfig, JointPath)> {
    let ik = IkOptions { lock_robot2: true, ..sc.ik };
    let path = solve_path(&sc.start, &sc.curve, &sc.robot1, &sc.robot2, &ik)?;
    let config = DualConfig { q1: path.q1[0].as_slice().to_vec(), q2: sc.start.q2.clone(), base2: sc.start.base2 };
    Ok((config, path))
}

/// Configuration search seeded with the single-arm configuration.
pub fn optimize_configuration(sc: &Scenario) -> Result<OptimizeResult> {
    let (seed, _) = single_arm(sc)?;
    let s = sc.search;
    let space = SearchSpace::around(&seed, &sc.robot1, &sc.robot2, s.joint_halfwidth, s.xy_halfwidth, s.yaw_halfwidth);
    optimize(&space, &seed, &sc.curve, &sc.robot1, &sc.robot2, &sc.ik, &sc.de)
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub path: JointPath,
    pub profile: SpeedProfile,
    pub program: MotionProgram,
    pub report: FitReport,
}

/// Joint path of `config` fitted into a program commanded at `mu`.
pub fn fit_configuration(sc: &Scenario, config: &DualConfig, mu: f64) -> Result<Fitted> {
    let path = solve_path(config, &sc.curve, &sc.robot1, &sc.robot2, &sc.ik)?;
    let profile = max_uniform_speed(&path, &sc.robot1, &sc.robot2)?;
    let opt = FitOptions { speed: mu, ..sc.fit.clone() };
    let (program, report) = greedy_fit_dual(&path, &sc.arm(config), &sc.curve, &opt)?;
    Ok(Fitted { path, profile, program, report })
}

/// Tunes `program` on the simulator starting from commanded speed `mu`.
pub fn tune_program(sc: &Scenario, program: &MotionProgram, mu: f64) -> Result<TuneOutcome> {
    let arm = DualArm::new(&sc.robot1, &sc.robot2, program.base2);
    let steps = adjustable_steps(program, &arm, &sc.curve)?;
    tune(program, &sc.curve, &arm, &sc.tolerances, mu, steps, &sc.tune)
}

pub fn run_baseline(sc: &Scenario) -> Result<BaselineOutcome> {
    let (config, path) = single_arm(sc)?;
    baseline(&path, &sc.arm(&config), &sc.curve, &sc.tolerances, &sc.baseline)
}
