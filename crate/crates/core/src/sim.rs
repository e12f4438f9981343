//! Simulated synchronized dual-arm controller.
//!
//! Both arms share one phase variable `φ ∈ [0, K]`: step `k` is traversed while
//! `φ` runs from `k` to `k + 1`, which makes the arms reach every waypoint at the
//! same instant. Each primitive is sampled into a joint table (Cartesian
//! primitives through pose IK). Around an interior waypoint with a non-zero blend
//! radius, the joint path inside a window of `±w` in phase is replaced by a cubic
//! Hermite segment matching position and velocity at both window ends; a zero
//! radius makes the waypoint a stop point. The phase rate follows a trapezoidal
//! law (forward/backward passes) capped by the commanded speed, the joint velocity
//! limits and the configuration-dependent acceleration limits. Any residual limit
//! violation seen in the sampled output is removed by locally lowering the phase
//! rate and re-planning.

use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diff::three_point;
use crate::error::{Error, Result};
use crate::geometry::{interpolate_rotation, Arc, Pose};
use crate::kinematics::{forward_kinematics, JointVector, RobotModel};
use crate::program::{Kind, MotionProgram, Primitive, Target};
use crate::relative_ik::DualArm;

/// ISO 9283 repeatability (mean + 3 std of the distance) in units of the
/// per-axis standard deviation of an isotropic 3-D Gaussian.
pub const REPEATABILITY_SIGMAS: f64 = 3.616;

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Output sample rate, Hz.
    pub rate: f64,
    /// Internal sample rate, an integer multiple of `rate`.
    pub internal_rate: f64,
    /// Phase grid spacing in mm of TCP travel.
    pub resolution: f64,
    /// Path repeatability of each robot (mm); `None` disables noise.
    pub repeatability: Option<[f64; 2]>,
    pub seed: u64,
    pub max_replans: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { rate: 250.0, internal_rate: 1000.0, resolution: 0.5, repeatability: None, seed: 0, max_replans: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionRecord {
    pub t: Vec<f64>,
    pub q1: Vec<JointVector>,
    pub q2: Vec<JointVector>,
    /// Arrival time at the end of each step (shared by both robots).
    pub waypoint_times: Vec<f64>,
    /// Steps where joint limits, not the commanded speed, set the pace.
    pub saturated: Vec<bool>,
}

impl ExecutionRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    pub fn joints(&self, r: usize) -> &[JointVector] {
        if r == 0 {
            &self.q1
        } else {
            &self.q2
        }
    }

    /// CSV rows: t, q1[1..n], q2[1..n].
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t");
        for (r, q) in [&self.q1, &self.q2].into_iter().enumerate() {
            for j in 1..=q.first().map_or(0, |v| v.len()) {
                out.push_str(&format!(",q{}_{j}", r + 1));
            }
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&self.t[i].to_string());
            for v in self.q1[i].iter().chain(self.q2[i].iter()) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a record written by [`save`](Self::save) (or by a logger using the
    /// same schema); `joints1` splits the columns between the arms.
    pub fn load(path: &Path, joints1: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let mut rec = Self { t: vec![], q1: vec![], q2: vec![], waypoint_times: vec![], saturated: vec![] };
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('t') {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(&name, n + 1, e.to_string()))?;
            if v.len() < joints1 + 2 {
                return Err(Error::parse(&name, n + 1, "too few columns"));
            }
            rec.t.push(v[0]);
            rec.q1.push(JointVector::from_column_slice(&v[1..=joints1]));
            rec.q2.push(JointVector::from_column_slice(&v[joints1 + 1..]));
        }
        Ok(rec)
    }
}

/// Joint table of one robot over one step, uniform in the step phase `s ∈ [0, 1]`.
struct Table {
    q: Vec<Vec<f64>>,
    slope: Vec<Vec<f64>>,
}

impl Table {
    fn new(q: Vec<Vec<f64>>) -> Self {
        let n = q.len();
        let h = 1.0 / (n - 1) as f64;
        let dim = q[0].len();
        let slope = (0..n)
            .map(|i| {
                let (a, b) = if i == 0 {
                    (0, 1)
                } else if i == n - 1 {
                    (n - 2, n - 1)
                } else {
                    (i - 1, i + 1)
                };
                let span = (b - a) as f64 * h;
                (0..dim).map(|j| (q[b][j] - q[a][j]) / span).collect()
            })
            .collect();
        Self { q, slope }
    }

    /// Position and phase derivative at `s` (cubic Hermite between nodes).
    fn eval(&self, s: f64, q: &mut [f64], dq: &mut [f64]) {
        let n = self.q.len();
        let h = 1.0 / (n - 1) as f64;
        let x = (s.clamp(0.0, 1.0) / h).min((n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        let u = x - i as f64;
        let (h10, h01, h11) = hermite(u);
        let (d10, d01, d11) = hermite_d(u);
        for j in 0..q.len() {
            let (p0, p1) = (self.q[i][j], self.q[i + 1][j]);
            let (m0, m1) = (self.slope[i][j] * h, self.slope[i + 1][j] * h);
            q[j] = p0 + h01 * (p1 - p0) + h10 * m0 + h11 * m1;
            dq[j] = (d01 * (p1 - p0) + d10 * m0 + d11 * m1) / h;
        }
    }
}

// cubic Hermite basis written as p0 + h01 (p1 - p0) + h10 m0 + h11 m1, exact for constants
fn hermite(u: f64) -> (f64, f64, f64) {
    let (u2, u3) = (u * u, u * u * u);
    (u3 - 2.0 * u2 + u, -2.0 * u3 + 3.0 * u2, u3 - u2)
}

fn hermite_d(u: f64) -> (f64, f64, f64) {
    let u2 = u * u;
    (3.0 * u2 - 4.0 * u + 1.0, -6.0 * u2 + 6.0 * u, 3.0 * u2 - 2.0 * u)
}

/// Executed joint path of both robots as a function of phase.
struct PhasePath {
    tables: [Vec<Table>; 2],
    /// Blend half-width around interior waypoint `j` (index `j - 1`).
    windows: Vec<f64>,
    dims: [usize; 2],
}

impl PhasePath {
    fn steps(&self) -> usize {
        self.tables[0].len()
    }

    fn base(&self, r: usize, phi: f64, q: &mut [f64], dq: &mut [f64]) {
        let k = (phi.floor().max(0.0) as usize).min(self.steps() - 1);
        self.tables[r][k].eval(phi - k as f64, q, dq);
    }

    fn eval(&self, r: usize, phi: f64, q: &mut [f64], dq: &mut [f64]) {
        let j = phi.round() as usize;
        if j >= 1 && j < self.steps() {
            let w = self.windows[j - 1];
            if w > 0.0 && (phi - j as f64).abs() < w {
                let n = self.dims[r];
                let (mut qa, mut da, mut qb, mut db) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
                self.base(r, j as f64 - w, &mut qa, &mut da);
                self.base(r, j as f64 + w, &mut qb, &mut db);
                let u = (phi - (j as f64 - w)) / (2.0 * w);
                let (h10, h01, h11) = hermite(u);
                let (d10, d01, d11) = hermite_d(u);
                for i in 0..n {
                    let (m0, m1) = (da[i] * 2.0 * w, db[i] * 2.0 * w);
                    q[i] = qa[i] + h01 * (qb[i] - qa[i]) + h10 * m0 + h11 * m1;
                    dq[i] = (d01 * (qb[i] - qa[i]) + d10 * m0 + d11 * m1) / (2.0 * w);
                }
                return;
            }
        }
        self.base(r, phi, q, dq);
    }

    fn position(&self, r: usize, phi: f64) -> Vec<f64> {
        let mut q = vec![0.0; self.dims[r]];
        let mut dq = vec![0.0; self.dims[r]];
        self.eval(r, phi, &mut q, &mut dq);
        q
    }
}

/// Time law of one stop-to-stop piece.
struct Piece {
    phi: Vec<f64>,
    /// Per node: first and second phase derivatives of all channels.
    d1: Vec<Vec<f64>>,
    d2: Vec<Vec<f64>>,
    accel: Vec<Vec<f64>>,
    cruise: Vec<f64>,
    /// Cap on the squared phase rate.
    cap: Vec<f64>,
    x: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Piece {
    fn duration(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Interval of phase accelerations that keeps every channel within its
    /// acceleration limit at node `i` and squared phase rate `x`.
    fn accel_range(&self, i: usize, x: f64) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (j, d1) in self.d1[i].iter().enumerate() {
            let a = self.accel[i][j];
            let bend = self.d2[i][j] * x;
            if d1.abs() > 1e-12 {
                let (p, q) = ((a - bend) / d1, (-a - bend) / d1);
                lo = lo.max(p.min(q));
                hi = hi.min(p.max(q));
            } else if bend.abs() > a {
                return (1.0, -1.0);
            }
        }
        (lo, hi)
    }

    /// Largest squared phase rate up to `x` for which some phase acceleration
    /// is admissible.
    fn feasible_rate(&self, i: usize, x: f64) -> f64 {
        let ok = |x: f64| {
            let (lo, hi) = self.accel_range(i, x);
            lo <= hi
        };
        if ok(x) {
            return x;
        }
        let (mut a, mut b) = (0.0, x);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if ok(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        a
    }

    fn plan(&mut self) {
        let m = self.phi.len() - 1;
        let mut x = self.cap.clone();
        x[0] = 0.0;
        x[m] = 0.0;
        for i in 0..m {
            let h = self.phi[i + 1] - self.phi[i];
            let up = self.accel_range(i, x[i]).1.max(0.0);
            x[i + 1] = x[i + 1].min(x[i] + 2.0 * h * up);
        }
        for i in (0..m).rev() {
            let h = self.phi[i + 1] - self.phi[i];
            let down = (-self.accel_range(i + 1, x[i + 1]).0).max(0.0);
            x[i] = x[i].min(x[i + 1] + 2.0 * h * down);
        }
        let mut cumulative = vec![0.0; m + 1];
        for i in 0..m {
            let h = self.phi[i + 1] - self.phi[i];
            let s = x[i].sqrt() + x[i + 1].sqrt();
            cumulative[i + 1] = cumulative[i] + if s > 0.0 { 2.0 * h / s } else { f64::INFINITY };
        }
        self.x = x;
        self.cumulative = cumulative;
    }

    /// Phase at local time `tau` (constant phase acceleration between nodes).
    fn phase_at(&self, tau: f64) -> f64 {
        let m = self.phi.len() - 1;
        if tau >= self.duration() {
            return self.phi[m];
        }
        let i = self.cumulative.partition_point(|c| *c <= tau).saturating_sub(1).min(m - 1);
        let dt = tau - self.cumulative[i];
        let h = self.phi[i + 1] - self.phi[i];
        let v0 = self.x[i].sqrt();
        let a = (self.x[i + 1] - self.x[i]) / (2.0 * h);
        (self.phi[i] + v0 * dt + 0.5 * a * dt * dt).clamp(self.phi[i], self.phi[i + 1])
    }

    fn time_at(&self, phi: f64) -> f64 {
        let i = self.phi.partition_point(|p| *p < phi - 1e-12).min(self.phi.len() - 1);
        self.cumulative[i]
    }
}

struct Sample {
    phi: f64,
}

fn channel_limits(robot1: &RobotModel, robot2: &RobotModel) -> (Vec<f64>, Vec<f64>) {
    let lo = robot1.qd_min.iter().chain(robot2.qd_min.iter()).copied().collect();
    let hi = robot1.qd_max.iter().chain(robot2.qd_max.iter()).copied().collect();
    (lo, hi)
}

/// Waypoint-level repeatability noise applied to every target of a copy of `program`.
fn perturb(program: &MotionProgram, robots: [&RobotModel; 2], rp: [f64; 2], seed: u64) -> MotionProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = program.clone();
    for (r, model) in robots.iter().enumerate() {
        let sigma = rp[r] / REPEATABILITY_SIGMAS;
        if !(sigma > 0.0) {
            continue;
        }
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        // a step that repeats the previous target is a hold and stays one
        let mut previous = (Target::Joints(program.start(r).to_vec()), Target::Joints(program.start(r).to_vec()));
        for prim in out.robot_mut(r).iter_mut() {
            if prim.via.is_none() && prim.target == previous.0 {
                prim.target = previous.1.clone();
                continue;
            }
            let original = prim.target.clone();
            let mut d = || Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
            if let Some(v) = prim.via.as_mut() {
                *v += d();
            }
            match &mut prim.target {
                Target::Cartesian(c) => c.position += d(),
                Target::Joints(q) => {
                    let offset = d();
                    if let Ok(mut pose) = forward_kinematics(model, q) {
                        pose.position += offset;
                        if let Some(sol) = model.inverse_kinematics(&pose, q) {
                            q.copy_from_slice(sol.as_slice());
                        }
                    }
                }
            }
            previous = (original, prim.target.clone());
        }
    }
    out
}

/// TCP path length of a primitive starting at joint configuration `q0`.
fn primitive_length(model: &RobotModel, q0: &[f64], start: &Pose, prim: &Primitive, step: usize, robot: usize) -> Result<f64> {
    match (&prim.target, prim.kind) {
        (Target::Joints(q1), _) => {
            let mut len = 0.0;
            let mut prev = start.position;
            for i in 1..=32 {
                let t = i as f64 / 32.0;
                let q: Vec<f64> = q0.iter().zip(q1).map(|(a, b)| a + (b - a) * t).collect();
                let p = forward_kinematics(model, &q)?.position;
                len += (p - prev).norm();
                prev = p;
            }
            Ok(len)
        }
        (Target::Cartesian(_), Kind::C) => Ok(arc_of(start, prim, step, robot)?.length()),
        (Target::Cartesian(c), _) => Ok((c.position - start.position).norm()),
    }
}

fn arc_of(start: &Pose, prim: &Primitive, step: usize, robot: usize) -> Result<Arc> {
    let c = prim.cartesian().expect("cartesian target");
    let via = prim.via.expect("moveC via");
    Arc::through(&start.position, &via, &c.position)
        .ok_or_else(|| Error::InvalidProgram(format!("step {step}, robot {robot}: moveC points are collinear")))
}

/// Samples one primitive into `nodes` joint configurations.
fn build_table(model: &RobotModel, q0: &[f64], prim: &Primitive, nodes: usize, step: usize, robot: usize) -> Result<Table> {
    let start = forward_kinematics(model, q0)?;
    let mut q = Vec::with_capacity(nodes);
    match &prim.target {
        Target::Joints(q1) => {
            for i in 0..nodes {
                let t = i as f64 / (nodes - 1) as f64;
                q.push(q0.iter().zip(q1).map(|(a, b)| a + (b - a) * t).collect());
            }
        }
        Target::Cartesian(c) => {
            let end = c.pose();
            let arc = if prim.kind == Kind::C { Some(arc_of(&start, prim, step, robot)?) } else { None };
            let mut seed = q0.to_vec();
            q.push(seed.clone());
            for i in 1..nodes {
                let t = i as f64 / (nodes - 1) as f64;
                let position = match &arc {
                    Some(a) => a.point(t),
                    None => start.position + (end.position - start.position) * t,
                };
                let pose = Pose::new(interpolate_rotation(&start.rotation, &end.rotation, t), position);
                let sol = model.inverse_kinematics(&pose, &seed).ok_or(Error::UnreachableTarget { step, robot })?;
                if sol.iter().zip(&seed).any(|(a, b)| (a - b).abs() > 0.5) {
                    return Err(Error::UnreachableTarget { step, robot });
                }
                seed = sol.as_slice().to_vec();
                q.push(seed.clone());
            }
        }
    }
    Ok(Table::new(q))
}

/// Runs `program` once on the simulated controller.
pub fn execute(program: &MotionProgram, robot1: &RobotModel, robot2: &RobotModel, opt: &SimOptions) -> Result<ExecutionRecord> {
    program.validate()?;
    let robots = [robot1, robot2];
    for (r, model) in robots.iter().enumerate() {
        if program.start(r).len() != model.joint_count() {
            return Err(Error::Dimension { expected: model.joint_count(), got: program.start(r).len() });
        }
    }
    if !(opt.rate > 0.0) || !(opt.internal_rate >= opt.rate) || !(opt.resolution > 0.0) {
        return Err(Error::InvalidArgument("simulator rates and resolution must be positive".into()));
    }
    let decimation = (opt.internal_rate / opt.rate).round() as usize;
    let program = match opt.repeatability {
        Some(rp) => perturb(program, robots, rp, opt.seed),
        None => program.clone(),
    };
    let k_steps = program.len();

    // segment lengths and joint tables, step by step so each starts where the last ended
    let mut lengths = [vec![0.0; k_steps], vec![0.0; k_steps]];
    let mut tables: [Vec<Table>; 2] = [Vec::new(), Vec::new()];
    let mut q_end = [program.start1.clone(), program.start2.clone()];
    for k in 0..k_steps {
        for r in 0..2 {
            let start = forward_kinematics(robots[r], &q_end[r])?;
            lengths[r][k] = primitive_length(robots[r], &q_end[r], &start, &program.robot(r)[k], k + 1, r + 1)?;
        }
        let longest = lengths[0][k].max(lengths[1][k]);
        let nodes = ((longest / opt.resolution).ceil() as usize).max(8) + 1;
        for r in 0..2 {
            let table = build_table(robots[r], &q_end[r], &program.robot(r)[k], nodes, k + 1, r + 1)?;
            q_end[r] = table.q.last().unwrap().clone();
            tables[r].push(table);
        }
    }

    // blend windows
    let moving = |r: usize, k: usize| lengths[r][k] > 1e-9;
    let mut windows = vec![0.0; k_steps.saturating_sub(1)];
    for j in 1..k_steps {
        let mut w = f64::INFINITY;
        let mut any = false;
        for r in 0..2 {
            let (a, b) = (moving(r, j - 1), moving(r, j));
            if !a && !b {
                continue;
            }
            any = true;
            let mut radius = program.robot(r)[j - 1].blend;
            if !(a && b) || radius == 0.0 {
                w = 0.0;
                continue;
            }
            let shorter = lengths[r][j - 1].min(lengths[r][j]);
            if radius >= 0.5 * shorter {
                if opt.repeatability.is_none() {
                    return Err(Error::CornerPathFailure { step: j, robot: r + 1, radius });
                }
                // noise shortened a step under a radius the nominal program allows
                radius = 0.49 * shorter;
            }
            w = w.min(radius / lengths[r][j - 1]).min(radius / lengths[r][j]);
        }
        windows[j - 1] = if any && w.is_finite() { w } else { 0.0 };
    }
    let path = PhasePath { tables, windows, dims: [robot1.joint_count(), robot2.joint_count()] };

    // phase rate the commanded speeds allow in each step
    let cruise: Vec<f64> = (0..k_steps)
        .map(|k| {
            (0..2)
                .filter(|r| moving(*r, k))
                .map(|r| program.robot(r)[k].speed / lengths[r][k])
                .fold(f64::INFINITY, f64::min)
        })
        .map(|v| if v.is_finite() { v } else { 1e3 })
        .collect();

    // stop-to-stop pieces
    let mut stops = vec![0usize];
    for j in 1..k_steps {
        if path.windows[j - 1] == 0.0 {
            stops.push(j);
        }
    }
    stops.push(k_steps);
    let (vel_lo, vel_hi) = channel_limits(robot1, robot2);
    let mut pieces = Vec::new();
    for w in stops.windows(2) {
        pieces.push(build_piece(&path, robots, &cruise, w[0], w[1], &vel_lo, &vel_hi)?);
    }

    let dt = 1.0 / opt.rate;
    let mut replans = 0;
    loop {
        for p in pieces.iter_mut() {
            p.plan();
        }
        // sample
        let mut samples: Vec<Sample> = Vec::new();
        let mut starts = Vec::with_capacity(pieces.len());
        let mut internal_phase = Vec::new();
        for p in pieces.iter() {
            starts.push(samples.len() as f64 * dt);
            let outputs = (p.duration() * opt.rate).ceil() as usize;
            for m in 0..outputs * decimation {
                internal_phase.push(p.phase_at(m as f64 / opt.internal_rate));
            }
            for m in 0..outputs {
                samples.push(Sample { phi: internal_phase[internal_phase.len() - outputs * decimation + m * decimation] });
            }
        }
        samples.push(Sample { phi: k_steps as f64 });
        let q: Vec<[Vec<f64>; 2]> = samples.iter().map(|s| [path.position(0, s.phi), path.position(1, s.phi)]).collect();
        let violations = limit_violations(&q, robots, &vel_lo, &vel_hi, dt);
        if violations.is_empty() || replans >= opt.max_replans {
            if !violations.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "simulator could not satisfy joint limits after {replans} re-plans"
                )));
            }
            let mut waypoint_times = Vec::with_capacity(k_steps);
            for j in 1..=k_steps {
                let pi = stops.partition_point(|s| *s < j).saturating_sub(1).min(pieces.len() - 1);
                waypoint_times.push(starts[pi] + pieces[pi].time_at(j as f64));
            }
            let saturated = (0..k_steps)
                .map(|k| {
                    pieces.iter().any(|p| {
                        p.phi.iter().enumerate().any(|(i, phi)| {
                            *phi > k as f64 && *phi < (k + 1) as f64 && p.cap[i] < p.cruise[i] * p.cruise[i] * (1.0 - 1e-9)
                        })
                    })
                })
                .collect();
            return Ok(ExecutionRecord {
                t: (0..q.len()).map(|i| i as f64 * dt).collect(),
                q1: q.iter().map(|v| JointVector::from_column_slice(&v[0])).collect(),
                q2: q.iter().map(|v| JointVector::from_column_slice(&v[1])).collect(),
                waypoint_times,
                saturated,
            });
        }
        replans += 1;
        for (i, factor) in violations {
            let lo = samples[i.saturating_sub(1)].phi;
            let hi = samples[(i + 1).min(samples.len() - 1)].phi;
            for p in pieces.iter_mut() {
                let m = p.phi.len();
                let first = p.phi.partition_point(|v| *v < lo).saturating_sub(1);
                let last = (p.phi.partition_point(|v| *v <= hi) + 1).min(m);
                for n in first..last {
                    if n > 0 && n < m - 1 {
                        p.cap[n] = p.cap[n].min(p.x[n] * factor);
                    }
                }
            }
        }
    }
}

fn build_piece(path: &PhasePath, robots: [&RobotModel; 2], cruise: &[f64], a: usize, b: usize, vel_lo: &[f64], vel_hi: &[f64]) -> Result<Piece> {
    let mut phi = Vec::new();
    for k in a..b {
        let n = path.tables[0][k].q.len();
        for i in 0..n - 1 {
            phi.push(k as f64 + i as f64 / (n - 1) as f64);
        }
        if k > a {
            let w = path.windows[k - 1];
            if w > 0.0 {
                for i in 0..=16 {
                    phi.push(k as f64 - w + 2.0 * w * i as f64 / 16.0);
                }
            }
        }
    }
    phi.push(b as f64);
    phi.sort_by(|x, y| x.total_cmp(y));
    phi.dedup_by(|x, y| (*x - *y).abs() < 1e-12);

    let dims = path.dims;
    let channels = dims[0] + dims[1];
    let values: Vec<Vec<f64>> = phi
        .iter()
        .map(|p| {
            let mut v = path.position(0, *p);
            v.extend(path.position(1, *p));
            v
        })
        .collect();
    let mut d1 = vec![vec![0.0; channels]; phi.len()];
    let mut d2 = vec![vec![0.0; channels]; phi.len()];
    for c in 0..channels {
        let y: Vec<f64> = values.iter().map(|v| v[c]).collect();
        let (f1, f2) = three_point(&phi, &y);
        for i in 0..phi.len() {
            d1[i][c] = f1[i];
            d2[i][c] = f2[i];
        }
    }
    let mut accel = Vec::with_capacity(phi.len());
    for v in &values {
        let mut lim = robots[0].accel_limits(&v[..dims[0]])?.as_slice().to_vec();
        lim.extend_from_slice(robots[1].accel_limits(&v[dims[0]..])?.as_slice());
        accel.push(lim);
    }
    let node_cruise: Vec<f64> = phi
        .iter()
        .map(|p| {
            let k = (p.floor() as usize).min(cruise.len() - 1);
            let mut c = cruise[k];
            let j = p.round() as usize;
            if j >= 1 && j < cruise.len() {
                let w = path.windows[j - 1];
                if w > 0.0 && (p - j as f64).abs() <= w {
                    // phase per unit time scales inversely with step length, so blend its reciprocal
                    let s = ((p - j as f64 + w) / (2.0 * w)).clamp(0.0, 1.0);
                    c = 1.0 / ((1.0 - s) / cruise[j - 1] + s / cruise[j]);
                }
            }
            c
        })
        .collect();
    let cap: Vec<f64> = (0..phi.len())
        .map(|i| {
            let mut x = node_cruise[i] * node_cruise[i];
            for c in 0..channels {
                let v = d1[i][c];
                if v > 1e-12 {
                    x = x.min((vel_hi[c] / v).powi(2));
                } else if v < -1e-12 {
                    x = x.min((vel_lo[c] / v).powi(2));
                }
            }
            x
        })
        .collect();
    let mut piece = Piece { phi, d1, d2, accel, cruise: node_cruise, cap, x: vec![], cumulative: vec![] };
    for i in 0..piece.phi.len() {
        piece.cap[i] = piece.feasible_rate(i, piece.cap[i]).max(1e-12);
    }
    Ok(piece)
}

/// Output samples whose finite-difference joint velocity or acceleration
/// exceeds the limits, with the factor to apply to the squared phase rate there.
fn limit_violations(q: &[[Vec<f64>; 2]], robots: [&RobotModel; 2], vel_lo: &[f64], vel_hi: &[f64], dt: f64) -> Vec<(usize, f64)> {
    let n1 = robots[0].joint_count();
    let flat = |i: usize, c: usize| if c < n1 { q[i][0][c] } else { q[i][1][c - n1] };
    let channels = vel_lo.len();
    let mut out = Vec::new();
    for i in 0..q.len() {
        let mut factor: f64 = 1.0;
        if i + 1 < q.len() {
            for c in 0..channels {
                let v = (flat(i + 1, c) - flat(i, c)) / dt;
                let lim = if v >= 0.0 { vel_hi[c] } else { -vel_lo[c] };
                if v.abs() > lim * (1.0 + 1e-12) + 1e-9 {
                    factor = factor.min((lim / v.abs() * 0.999).powi(2));
                }
            }
        }
        if i > 0 && i + 1 < q.len() {
            let a1 = robots[0].accel_limits(&q[i][0]).map(|v| v.as_slice().to_vec()).unwrap_or_default();
            let a2 = robots[1].accel_limits(&q[i][1]).map(|v| v.as_slice().to_vec()).unwrap_or_default();
            for c in 0..channels {
                let a = (flat(i + 1, c) - 2.0 * flat(i, c) + flat(i - 1, c)) / (dt * dt);
                let lim = if c < n1 { a1[c] } else { a2[c - n1] };
                if a.abs() > lim * (1.0 + 1e-12) + 1e-9 {
                    factor = factor.min(lim / a.abs() * 0.98);
                }
            }
        }
        if factor < 1.0 {
            out.push((i, factor));
        }
    }
    out
}

/// Pointwise mean of `n` executions (seeds `opt.seed .. opt.seed + n`), each
/// stretched onto the mean duration before averaging.
pub fn average_runs(program: &MotionProgram, robot1: &RobotModel, robot2: &RobotModel, opt: &SimOptions, n: usize) -> Result<ExecutionRecord> {
    if n == 0 {
        return Err(Error::InvalidArgument("at least one run is required".into()));
    }
    let runs: Vec<ExecutionRecord> = (0..n)
        .map(|i| execute(program, robot1, robot2, &SimOptions { seed: opt.seed.wrapping_add(i as u64), ..opt.clone() }))
        .collect::<Result<_>>()?;
    if n == 1 {
        return Ok(runs.into_iter().next().unwrap());
    }
    let first = &runs[0];
    // deviations from the first run keep identical runs bit-exact
    let mean_of = |f: &dyn Fn(&ExecutionRecord) -> f64| first_plus(f(first), runs.iter().skip(1).map(|r| f(r) - f(first)), n);
    let duration = mean_of(&|r: &ExecutionRecord| r.duration());
    let dt = 1.0 / opt.rate;
    let samples = (duration / dt).round() as usize + 1;
    let resample = |r: &ExecutionRecord, i: usize, arm: usize| -> Vec<f64> {
        let stretch = if duration > 0.0 { r.duration() / duration } else { 1.0 };
        let x = (i as f64 * stretch).min((r.len() - 1) as f64);
        let lo = x.floor() as usize;
        let hi = (lo + 1).min(r.len() - 1);
        let u = x - lo as f64;
        let (a, b) = (&r.joints(arm)[lo], &r.joints(arm)[hi]);
        a.iter().zip(b.iter()).map(|(p, q)| if u == 0.0 { *p } else { p + (q - p) * u }).collect()
    };
    let mut q = [Vec::with_capacity(samples), Vec::with_capacity(samples)];
    for i in 0..samples {
        for (arm, out) in q.iter_mut().enumerate() {
            let base = resample(first, i, arm);
            let mut acc = vec![0.0; base.len()];
            for r in runs.iter().skip(1) {
                for (a, v) in acc.iter_mut().zip(resample(r, i, arm)) {
                    *a += v;
                }
            }
            let v: Vec<f64> = base.iter().zip(acc).map(|(b, s)| b + (s - (n - 1) as f64 * b) / n as f64).collect();
            out.push(JointVector::from_vec(v));
        }
    }
    let k = first.waypoint_times.len();
    let waypoint_times = (0..k).map(|j| mean_of(&|r: &ExecutionRecord| r.waypoint_times[j])).collect();
    let saturated = (0..first.saturated.len()).map(|j| runs.iter().any(|r| r.saturated[j])).collect();
    let [q1, q2] = q;
    Ok(ExecutionRecord { t: (0..samples).map(|i| i as f64 * dt).collect(), q1, q2, waypoint_times, saturated })
}

fn first_plus(first: f64, deltas: impl Iterator<Item = f64>, n: usize) -> f64 {
    first + deltas.sum::<f64>() / n as f64
}

/// Relative TCP pose (robot 1 in robot 2's TCP frame) at every record sample.
pub fn relative_trace(record: &ExecutionRecord, arm: &DualArm) -> Result<Vec<Pose>> {
    record.q1.iter().zip(&record.q2).map(|(a, b)| arm.relative_pose(a.as_slice(), b.as_slice())).collect()
}
