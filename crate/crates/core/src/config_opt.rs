//! Global search over the 15 configuration parameters for the largest uniform
//! relative speed.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::evolution::{evolve, DeOptions, EvolutionReport};
use crate::geometry::PlanarPose;
use crate::kinematics::RobotModel;
use crate::relative_ik::{solve_path, DualConfig, IkOptions};
use crate::speedbound::max_uniform_speed;

/// Box bounds on `[q1; q2; x; y; yaw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchSpace {
    /// Joint seeds within `joint_halfwidth` of `center` (clipped to the robot
    /// limits), base position within `xy_halfwidth` mm and yaw within
    /// `yaw_halfwidth` rad.
    pub fn around(
        center: &DualConfig,
        robot1: &RobotModel,
        robot2: &RobotModel,
        joint_halfwidth: f64,
        xy_halfwidth: f64,
        yaw_halfwidth: f64,
    ) -> Self {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for (model, q) in [(robot1, &center.q1), (robot2, &center.q2)] {
            for (j, v) in q.iter().enumerate() {
                lower.push((v - joint_halfwidth).max(model.q_min[j]));
                upper.push((v + joint_halfwidth).min(model.q_max[j]));
            }
        }
        let b = center.base2;
        lower.extend_from_slice(&[b.x - xy_halfwidth, b.y - xy_halfwidth, b.yaw - yaw_halfwidth]);
        upper.extend_from_slice(&[b.x + xy_halfwidth, b.y + xy_halfwidth, b.yaw + yaw_halfwidth]);
        Self { lower, upper }
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.lower.iter().copied().zip(self.upper.iter().copied()).collect()
    }

    pub fn contains(&self, params: &[f64]) -> bool {
        params.len() == self.lower.len() && params.iter().enumerate().all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }

    pub fn validate(&self, robot1: &RobotModel, robot2: &RobotModel) -> Result<()> {
        let n1 = robot1.joint_count();
        let expected = n1 + robot2.joint_count() + 3;
        if self.lower.len() != expected || self.upper.len() != expected {
            return Err(Error::Dimension { expected, got: self.lower.len() });
        }
        for i in 0..expected {
            if !(self.lower[i] < self.upper[i]) {
                return Err(Error::InvalidArgument(format!("search bound {} is empty", i + 1)));
            }
            let limits = if i < n1 {
                Some((robot1.q_min[i], robot1.q_max[i]))
            } else if i < expected - 3 {
                Some((robot2.q_min[i - n1], robot2.q_max[i - n1]))
            } else {
                None
            };
            if let Some((lo, hi)) = limits {
                if self.lower[i] < lo || self.upper[i] > hi {
                    return Err(Error::InvalidArgument(format!("search bound {} exceeds the joint limits", i + 1)));
                }
            }
        }
        Ok(())
    }
}

/// μ of a configuration, or 0 when the joint path cannot be solved.
pub fn objective(config: &DualConfig, curve: &Curve, robot1: &RobotModel, robot2: &RobotModel, ik: &IkOptions) -> f64 {
    let Ok(path) = solve_path(config, curve, robot1, robot2, ik) else {
        return 0.0;
    };
    match max_uniform_speed(&path, robot1, robot2) {
        Ok(profile) => profile.mu_value(),
        Err(_) => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best: DualConfig,
    pub seed_mu: f64,
    pub report: EvolutionReport,
}

/// Differential evolution seeded with `seed` (normally the single-arm baseline configuration).
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    space: &SearchSpace,
    seed: &DualConfig,
    curve: &Curve,
    robot1: &RobotModel,
    robot2: &RobotModel,
    ik: &IkOptions,
    de: &DeOptions,
) -> Result<OptimizeResult> {
    space.validate(robot1, robot2)?;
    let n1 = robot1.joint_count();
    let seed_mu = objective(seed, curve, robot1, robot2, ik);
    let f = |x: &[f64]| objective(&DualConfig::from_params(x, n1), curve, robot1, robot2, ik);
    let report = evolve(&space.bounds(), f, &[seed.to_params()], de)?;
    if report.best_value <= 0.0 {
        return Err(Error::NonConvergent { lambda: 0.0 });
    }
    Ok(OptimizeResult { best: DualConfig::from_params(&report.best, n1), seed_mu, report })
}

impl EvolutionReport {
    /// CSV rows: generation, best_mu.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("generation,best_mu\n");
        for (g, v) in self.best_per_gen.iter().enumerate() {
            out.push_str(&format!("{g},{v}\n"));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Persisted configuration with the uniform speed it allows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// mm/s
    pub mu: f64,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub base2: PlanarPose,
}

impl ConfigFile {
    pub fn new(config: &DualConfig, mu: f64) -> Self {
        Self { mu, q1: config.q1.clone(), q2: config.q2.clone(), base2: config.base2 }
    }

    pub fn config(&self) -> DualConfig {
        DualConfig { q1: self.q1.clone(), q2: self.q2.clone(), base2: self.base2 }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), 0, e.message()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::test_models::{six_r, small_six_r};
    use crate::relative_ik::test_setup::*;
    use crate::relative_ik::DualArm;

    fn config() -> DualConfig {
        DualConfig { q1: Q1.to_vec(), q2: Q2.to_vec(), base2: planar() }
    }

    #[test]
    fn config_file_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        let mut c = config();
        c.q1[2] = 0.1 + 0.2;
        let file = ConfigFile::new(&c, 1234.5678901234567);
        file.save(&path).unwrap();
        let back = ConfigFile::load(&path).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.config(), c);
    }

    #[test]
    fn unreachable_base_scores_zero() {
        let (m1, m2) = (six_r(), small_six_r());
        let curve = straight_curve(&DualArm::new(&m1, &m2, planar()), 40.0);
        let mut far = config();
        far.base2 = PlanarPose::new(20_000.0, 0.0, 0.0);
        assert_eq!(objective(&far, &curve, &m1, &m2, &IkOptions::default()), 0.0);
    }

    #[test]
    fn objective_is_the_composition() {
        let (m1, m2) = (six_r(), small_six_r());
        let curve = straight_curve(&DualArm::new(&m1, &m2, planar()), 40.0);
        let ik = IkOptions::default();
        let mu = objective(&config(), &curve, &m1, &m2, &ik);
        let path = solve_path(&config(), &curve, &m1, &m2, &ik).unwrap();
        assert_eq!(mu, max_uniform_speed(&path, &m1, &m2).unwrap().mu_value());
        assert!(mu > 0.0);
    }

    #[test]
    fn tool_spin_seed_changes_mu() {
        let (m1, m2) = (six_r(), small_six_r());
        let curve = straight_curve(&DualArm::new(&m1, &m2, planar()), 40.0);
        let ik = IkOptions::default();
        let a = objective(&config(), &curve, &m1, &m2, &ik);
        let mut spun = config();
        spun.q1[5] += 0.5;
        let b = objective(&spun, &curve, &m1, &m2, &ik);
        assert!(a > 0.0 && b > 0.0);
        assert_ne!(a, b);
    }

    #[test]
    fn search_space_respects_limits() {
        let (m1, m2) = (six_r(), small_six_r());
        let mut c = config();
        c.q1[1] = m1.q_max[1] - 0.1;
        let space = SearchSpace::around(&c, &m1, &m2, 0.5, 200.0, 0.3);
        space.validate(&m1, &m2).unwrap();
        assert_eq!(space.upper[1], m1.q_max[1]);
        assert!(space.contains(&c.to_params()));
    }

    #[test]
    fn short_run_never_loses_the_seed() {
        let (m1, m2) = (six_r(), small_six_r());
        let curve = straight_curve(&DualArm::new(&m1, &m2, planar()), 40.0);
        let space = SearchSpace::around(&config(), &m1, &m2, 0.3, 100.0, 0.2);
        let de = DeOptions { population: 8, max_gens: 5, seed: 3, ..Default::default() };
        let r = optimize(&space, &config(), &curve, &m1, &m2, &IkOptions::default(), &de).unwrap();
        assert!(r.report.best_value >= r.seed_mu);
        assert!(space.contains(&r.best.to_params()));
        assert!(r.report.best_per_gen.windows(2).all(|w| w[1] >= w[0]));
    }
}
