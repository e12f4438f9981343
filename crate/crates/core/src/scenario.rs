//! Scenario files: robot models, target curve, start configuration and the
//! options of every stage, loaded from TOML.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::baseline::BaselineOptions;
use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::evolution::DeOptions;
use crate::fitting::FitOptions;
use crate::geometry::PlanarPose;
use crate::kinematics::RobotModel;
use crate::metrics::Tolerances;
use crate::relative_ik::{DualConfig, IkOptions};
use crate::sim::SimOptions;
use crate::tuner::TuneOptions;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    robot1: PathBuf,
    robot2: PathBuf,
    curve: PathBuf,
    #[serde(default = "default_resolution")]
    resolution: f64,
    start: StartSection,
    #[serde(default)]
    search: SearchSection,
    #[serde(default)]
    de: DeSection,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    fit: FitSection,
    #[serde(default)]
    sim: SimSection,
    #[serde(default)]
    tune: TuneSection,
    #[serde(default)]
    baseline: BaselineSection,
}

fn default_resolution() -> f64 {
    0.5
}

/// Single-arm starting point: robot 2 parked at `q2`, robot 1 near `q1`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StartSection {
    base2: [f64; 3],
    q1: Vec<f64>,
    q2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    /// rad around the start joints
    pub joint_halfwidth: f64,
    /// mm around the robot 2 base position
    pub xy_halfwidth: f64,
    /// rad around the robot 2 base yaw
    pub yaw_halfwidth: f64,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self { joint_halfwidth: 1.0, xy_halfwidth: 400.0, yaw_halfwidth: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DeSection {
    population: usize,
    f: f64,
    cr: f64,
    max_gens: usize,
    seed: u64,
    /// 0 disables the stagnation stop.
    stagnation_gens: usize,
    stagnation_tol: f64,
}

impl Default for DeSection {
    fn default() -> Self {
        let d = DeOptions::default();
        Self {
            population: d.population,
            f: d.f,
            cr: d.cr,
            max_gens: d.max_gens,
            seed: d.seed,
            stagnation_gens: d.stagnation_gens.unwrap_or(0),
            stagnation_tol: d.stagnation_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FitSection {
    tol: f64,
    normal_tol: f64,
    extension: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitOptions::default();
        Self { tol: d.tol, normal_tol: d.normal_tol, extension: d.extension }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimSection {
    rate: f64,
    internal_rate: f64,
    resolution: f64,
    /// Path repeatability of robot 1 and robot 2, mm; omit for noise-free runs.
    repeatability: Option<[f64; 2]>,
    seed: u64,
    /// Executions averaged per evaluation.
    runs: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimOptions::default();
        Self { rate: d.rate, internal_rate: d.internal_rate, resolution: d.resolution, repeatability: None, seed: 0, runs: 5 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TuneSection {
    gamma: f64,
    max_iter: usize,
    backoff: f64,
    min_speed: f64,
    blend_start: f64,
    blend_growth: f64,
    blend_cap: f64,
    improvement: f64,
    /// Commanded speed to start from, mm/s; defaults to the optimized bound.
    mu_start: Option<f64>,
}

impl Default for TuneSection {
    fn default() -> Self {
        let d = TuneOptions::default();
        Self {
            gamma: d.gamma,
            max_iter: d.max_iter,
            backoff: d.backoff,
            min_speed: d.min_speed,
            blend_start: d.blend_start,
            blend_growth: d.blend_growth,
            blend_cap: d.blend_cap,
            improvement: d.improvement,
            mu_start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BaselineSection {
    waypoints: usize,
    extension: f64,
    blend: f64,
    speed_min: f64,
    speed_max: f64,
    resolution: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let d = BaselineOptions::default();
        Self {
            waypoints: d.waypoints,
            extension: d.extension,
            blend: d.blend,
            speed_min: d.speed_min,
            speed_max: d.speed_max,
            resolution: d.resolution,
        }
    }
}

/// A loaded scenario with every referenced file read and every option resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub robot1: RobotModel,
    pub robot2: RobotModel,
    /// Target curve resampled to the scenario resolution.
    pub curve: Curve,
    pub start: DualConfig,
    pub search: SearchSection,
    pub de: DeOptions,
    pub ik: IkOptions,
    pub tolerances: Tolerances,
    pub fit: FitOptions,
    pub sim: SimOptions,
    pub tune: TuneOptions,
    pub mu_start: Option<f64>,
    pub baseline: BaselineOptions,
}

impl Scenario {
    /// Reads a scenario; relative file paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScenarioFile = toml::from_str(&text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
            Error::parse(path.display().to_string(), line, e.message())
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { dir.join(p) };
        let name = file.name.clone().unwrap_or_else(|| path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned()));
        let robot1 = RobotModel::load(&resolve(&file.robot1))?;
        let robot2 = RobotModel::load(&resolve(&file.robot2))?;
        let raw = Curve::load(&resolve(&file.curve))?;
        Self::build(name, robot1, robot2, raw, &file)
    }

    fn build(name: String, robot1: RobotModel, robot2: RobotModel, raw: Curve, file: &ScenarioFile) -> Result<Self> {
        if !(file.resolution > 0.0) {
            return Err(Error::InvalidArgument("resolution must be positive".into()));
        }
        let curve = raw.resample(file.resolution)?;
        let s = &file.start;
        let start = DualConfig { q1: s.q1.clone(), q2: s.q2.clone(), base2: PlanarPose::new(s.base2[0], s.base2[1], s.base2[2]) };
        for (model, q) in [(&robot1, &start.q1), (&robot2, &start.q2)] {
            if q.len() != model.joint_count() {
                return Err(Error::Dimension { expected: model.joint_count(), got: q.len() });
            }
        }
        let de = DeOptions {
            population: file.de.population,
            f: file.de.f,
            cr: file.de.cr,
            max_gens: file.de.max_gens,
            seed: file.de.seed,
            stagnation_gens: (file.de.stagnation_gens > 0).then_some(file.de.stagnation_gens),
            stagnation_tol: file.de.stagnation_tol,
        };
        let fit = FitOptions { tol: file.fit.tol, normal_tol: file.fit.normal_tol, extension: file.fit.extension, ..FitOptions::default() };
        fit.validate()?;
        file.tolerances.validate()?;
        let sim = SimOptions {
            rate: file.sim.rate,
            internal_rate: file.sim.internal_rate,
            resolution: file.sim.resolution,
            repeatability: file.sim.repeatability,
            seed: file.sim.seed,
            ..SimOptions::default()
        };
        let t = &file.tune;
        let tune = TuneOptions {
            gamma: t.gamma,
            max_iter: t.max_iter,
            backoff: t.backoff,
            min_speed: t.min_speed,
            blend_start: t.blend_start,
            blend_growth: t.blend_growth,
            blend_cap: t.blend_cap,
            runs: file.sim.runs,
            improvement: t.improvement,
            sim: sim.clone(),
        };
        let b = &file.baseline;
        let baseline = BaselineOptions {
            waypoints: b.waypoints,
            extension: b.extension,
            blend: b.blend,
            speed_min: b.speed_min,
            speed_max: b.speed_max,
            resolution: b.resolution,
            runs: file.sim.runs,
            sim: sim.clone(),
        };
        baseline.validate()?;
        Ok(Self {
            name,
            robot1,
            robot2,
            curve,
            start,
            search: file.search,
            de,
            ik: IkOptions::default(),
            tolerances: file.tolerances,
            fit,
            sim,
            tune,
            mu_start: t.mu_start,
            baseline,
        })
    }

    /// Replaces the seeds of every randomized stage.
    pub fn reseed(&mut self, seed: u64) {
        self.de.seed = seed;
        self.sim.seed = seed;
        self.tune.sim.seed = seed;
        self.baseline.sim.seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_fixture(dir: &Path, extra: &str) -> PathBuf {
        let robots = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/robots");
        let curves = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/curves");
        let text = format!(
            "robot1 = {:?}\nrobot2 = {:?}\ncurve = \"line.csv\"\n\n[start]\nbase2 = [2500.0, 0.0, 3.14159]\nq1 = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]\nq2 = [0.0, 0.0, 0.0, 0.0, 0.6, 0.0]\n{extra}",
            robots.join("abb6640.toml").display().to_string(),
            robots.join("abb1200.toml").display().to_string(),
        );
        fs::copy(curves.join("line.csv"), dir.join("line.csv")).unwrap();
        let path = dir.join("s.toml");
        fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let dir = tempfile::tempdir().unwrap();
        let sc = Scenario::load(&write_fixture(dir.path(), "")).unwrap();
        assert_eq!(sc.name, "s");
        assert_eq!(sc.tolerances, Tolerances::default());
        assert_eq!(sc.de.stagnation_gens, Some(50));
        assert_eq!(sc.baseline.waypoints, 50);
        assert_eq!(sc.tune.runs, 5);
        assert!((sc.curve.length() - 120.0).abs() < 1e-9);
    }

    #[test]
    fn sections_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let extra = "[de]\nmax_gens = 10\nstagnation_gens = 0\n[tolerances]\neps_pos = 0.2\n[sim]\nrepeatability = [1.06, 0.07]\nruns = 2\n[baseline]\nwaypoints = 12\n";
        let mut sc = Scenario::load(&write_fixture(dir.path(), extra)).unwrap();
        assert_eq!(sc.de.max_gens, 10);
        assert_eq!(sc.de.stagnation_gens, None);
        assert_eq!(sc.tolerances.eps_pos, 0.2);
        assert_eq!(sc.tune.sim.repeatability, Some([1.06, 0.07]));
        assert_eq!(sc.baseline.runs, 2);
        assert_eq!(sc.baseline.waypoints, 12);
        sc.reseed(9);
        assert_eq!((sc.de.seed, sc.tune.sim.seed, sc.baseline.sim.seed), (9, 9, 9));
    }

    #[test]
    fn bad_input_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path(), "[tolerances]\neps_pos = -1.0\n");
        assert!(Scenario::load(&path).is_err());
        let path = write_fixture(dir.path(), "[fit]\nbogus = 1\n");
        assert!(matches!(Scenario::load(&path), Err(Error::Parse { .. })));
        fs::remove_file(dir.path().join("line.csv")).unwrap();
        let path = dir.path().join("s.toml");
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replace("[fit]\nbogus = 1\n", "")).unwrap();
        assert!(matches!(Scenario::load(&path), Err(Error::Io { .. })));
    }
}
