//! Closed-loop waypoint iteration: proportional correction, multi-peak
//! spline-gradient correction and commanded speed reduction.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use nalgebra::Vector3;

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::fitting::step_lengths;
use crate::geometry::{rot, Pose};
use crate::kinematics::forward_kinematics;
use crate::metrics::{metrics_from_track, track, Metrics, Tolerances, TrackPoint};
use crate::program::{CartesianTarget, MotionProgram, Target};
use crate::relative_ik::DualArm;
use crate::sim::{average_runs, SimOptions};

/// Errors below these are treated as exact.
const DEADBAND_POS: f64 = 1e-4;
const DEADBAND_ROT: f64 = 1e-6;

/// Commanded world TCP poses of both robots at the program start and after
/// every step.
pub fn commanded_poses(program: &MotionProgram, arm: &DualArm) -> Result<Vec<[Pose; 2]>> {
    let lift = arm.planar.lift();
    let robots = [arm.robot1, arm.robot2];
    let mut out = Vec::with_capacity(program.len() + 1);
    let start = |r: usize| forward_kinematics(robots[r], program.start(r));
    out.push([start(0)?, lift.compose(&start(1)?)]);
    for k in 0..program.len() {
        let mut pair = [Pose::identity(); 2];
        for r in 0..2 {
            let mount = match &program.robot(r)[k].target {
                Target::Cartesian(c) => c.pose(),
                Target::Joints(q) => forward_kinematics(robots[r], q)?,
            };
            pair[r] = if r == 0 { mount } else { lift.compose(&mount) };
        }
        out.push(pair);
    }
    Ok(out)
}

/// Commanded relative poses (robot 1 in robot 2's TCP frame) at the start and after every step.
pub fn relative_waypoints(program: &MotionProgram, arm: &DualArm) -> Result<Vec<Pose>> {
    Ok(commanded_poses(program, arm)?.iter().map(|[a, b]| b.inverse().compose(a)).collect())
}

/// Steps whose end waypoints tuning may move: all of them except a final
/// lead-out step that ends past the curve.
pub fn adjustable_steps(program: &MotionProgram, arm: &DualArm, curve: &Curve) -> Result<Range<usize>> {
    let rel = relative_waypoints(program, arm)?;
    let k = program.len();
    let m = curve.len();
    if k == 0 || m < 2 {
        return Ok(0..k);
    }
    let end = rel[k].position - curve.p[m - 1];
    let past = end.dot(&(curve.p[m - 1] - curve.p[m - 2]).normalize()) > 1e-6;
    Ok(0..if past { k - 1 } else { k })
}

/// Desired change of one relative waypoint, in robot 2's commanded TCP frame.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Change {
    step: usize,
    shift: Vector3<f64>,
    /// Rotation vector applied to the relative tool orientation.
    turn: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adjustment {
    pub program: MotionProgram,
    /// Steps whose update could not be applied (J target without an IK solution).
    pub failed_steps: Vec<usize>,
    /// Error peaks that were skipped for a vanishing gradient (record sample indices).
    pub skipped_peaks: Vec<usize>,
}

/// Splits relative waypoint changes between the arms: robot 1 takes half of
/// the shift and turn, robot 2 the opposite half, turning about the tool contact point.
fn apply(program: &MotionProgram, arm: &DualArm, changes: &[Change]) -> Result<(MotionProgram, Vec<usize>)> {
    let poses = commanded_poses(program, arm)?;
    let lift = arm.planar.lift();
    let robots = [arm.robot1, arm.robot2];
    let mut out = program.clone();
    let mut failed = Vec::new();
    // mount-frame position shift of every step end, for the moveC via points
    let mut shifts = vec![[Vector3::zeros(); 2]; program.len()];
    for c in changes {
        let [w1, w2] = poses[c.step + 1];
        let shift_w = w2.rotation * c.shift;
        let angle = c.turn.norm();
        let turn = |sign: f64| if angle > 0.0 { rot(&(w2.rotation * c.turn), sign * angle / 2.0) } else { nalgebra::Matrix3::identity() };
        let pivot = w1.position;
        let (ra, rb) = (turn(1.0), turn(-1.0));
        let new1 = Pose::new(ra * w1.rotation, w1.position + shift_w / 2.0);
        let new2w = Pose::new(rb * w2.rotation, pivot + rb * (w2.position - pivot) - shift_w / 2.0);
        let new2 = lift.inverse().compose(&new2w);
        for (r, target) in [(0, new1), (1, new2)] {
            let prim = &mut out.robot_mut(r)[c.step];
            let old_position = match &prim.target {
                Target::Cartesian(t) => t.position,
                Target::Joints(q) => forward_kinematics(robots[r], q)?.position,
            };
            match &mut prim.target {
                Target::Cartesian(t) => *t = CartesianTarget::from_pose(&target),
                Target::Joints(q) => match robots[r].inverse_kinematics(&target, q) {
                    Some(sol) => q.copy_from_slice(sol.as_slice()),
                    None => {
                        failed.push(c.step);
                        continue;
                    }
                },
            }
            shifts[c.step][r] = target.position - old_position;
        }
    }
    for r in 0..2 {
        for k in 0..program.len() {
            let before = if k == 0 { Vector3::zeros() } else { shifts[k - 1][r] };
            if let Some(v) = out.robot_mut(r)[k].via.as_mut() {
                *v += (before + shifts[k][r]) / 2.0;
            }
        }
    }
    failed.sort_unstable();
    failed.dedup();
    Ok((out, failed))
}

fn nearest_sample(tr: &[TrackPoint], x: &Vector3<f64>) -> usize {
    let d = |i: usize| (tr[i].rel.position - x).norm_squared();
    (0..tr.len()).min_by(|a, b| d(*a).total_cmp(&d(*b))).unwrap_or(0)
}

/// Unit axis that turns the tool axis towards the reversed curve normal, robot 2 TCP frame.
fn correction_axis(p: &TrackPoint, curve: &Curve) -> Option<Vector3<f64>> {
    let (_, n) = curve.at(p.lambda);
    let axis = p.rel.z_axis().cross(&-n);
    (axis.norm() > 1e-12).then(|| axis.normalize())
}

/// Moves every relative waypoint of `steps` against the error measured at
/// the executed sample closest to it: `−γ e_p` in position and `γ θ` about the
/// correcting axis in orientation, split evenly between the arms.
pub fn proportional_adjust(
    program: &MotionProgram,
    record: &crate::sim::ExecutionRecord,
    curve: &Curve,
    arm: &DualArm,
    gamma: f64,
    steps: Range<usize>,
) -> Result<Adjustment> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!("step size {gamma} must lie in (0, 1]")));
    }
    let tr = track(record, curve, arm)?;
    let rel = relative_waypoints(program, arm)?;
    let mut changes = Vec::new();
    for k in steps {
        let p = &tr[nearest_sample(&tr, &rel[k + 1].position)];
        let e = p.error;
        let theta = p.normal_error;
        if e.norm() < DEADBAND_POS && theta < DEADBAND_ROT {
            continue;
        }
        let turn = match correction_axis(p, curve) {
            Some(axis) if theta >= DEADBAND_ROT => axis * gamma * theta,
            _ => Vector3::zeros(),
        };
        let shift = if e.norm() >= DEADBAND_POS { -e * gamma } else { Vector3::zeros() };
        changes.push(Change { step: k, shift, turn });
    }
    let (program, failed_steps) = apply(program, arm, &changes)?;
    Ok(Adjustment { program, failed_steps, skipped_peaks: vec![] })
}

/// Natural cubic spline through 3-D points at fixed knots.
struct Spline {
    u: Vec<f64>,
    y: Vec<Vector3<f64>>,
    m: Vec<Vector3<f64>>,
}

impl Spline {
    fn new(u: Vec<f64>, y: Vec<Vector3<f64>>) -> Self {
        let n = u.len();
        let mut m = vec![Vector3::zeros(); n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives
            let mut c = vec![0.0; n];
            let mut d = vec![Vector3::zeros(); n];
            for i in 1..n - 1 {
                let (h0, h1) = (u[i] - u[i - 1], u[i + 1] - u[i]);
                let rhs = ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0) * 6.0;
                let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
                c[i] = h1 / diag;
                d[i] = (rhs - d[i - 1] * h0) / diag;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - m[i + 1] * c[i];
            }
        }
        Self { u, y, m }
    }

    fn eval(&self, s: f64) -> Vector3<f64> {
        let n = self.u.len();
        let i = self.u.partition_point(|v| *v <= s).clamp(1, n - 1) - 1;
        let h = self.u[i + 1] - self.u[i];
        let (a, b) = ((self.u[i + 1] - s) / h, (s - self.u[i]) / h);
        self.y[i] * a + self.y[i + 1] * b + (self.m[i] * (a * a * a - a) + self.m[i + 1] * (b * b * b - b)) * (h * h / 6.0)
    }

    fn with_point(&self, j: usize, y: Vector3<f64>) -> Self {
        let mut pts = self.y.clone();
        pts[j] = y;
        Self::new(self.u.clone(), pts)
    }

    /// Parameter of the spline point closest to `x`, searched over the knot intervals `range`.
    fn closest(&self, x: &Vector3<f64>, range: Range<usize>) -> f64 {
        let d = |s: f64| (self.eval(s) - x).norm_squared();
        let mut best = (self.u[range.start], f64::INFINITY);
        for i in range {
            for k in 0..=32 {
                let s = self.u[i] + (self.u[i + 1] - self.u[i]) * k as f64 / 32.0;
                let v = d(s);
                if v < best.1 {
                    best = (s, v);
                }
            }
        }
        // golden-section refinement within one sub-interval on each side
        let width = (self.u[self.u.len() - 1] - self.u[0]) / (32.0 * (self.u.len() - 1) as f64);
        let (mut a, mut b) = (best.0 - width, best.0 + width);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..40 {
            let (c, e) = (b - g * (b - a), a + g * (b - a));
            if d(c) < d(e) {
                b = e;
            } else {
                a = c;
            }
        }
        let s = 0.5 * (a + b);
        if d(s) < best.1 {
            s
        } else {
            best.0
        }
    }
}

/// Local maxima of `v` above `threshold` with at least `prominence`, over the `inside` samples.
pub fn find_peaks(v: &[f64], inside: &[bool], threshold: f64, prominence: f64) -> Vec<usize> {
    let idx: Vec<usize> = (0..v.len()).filter(|i| inside[*i]).collect();
    let mut peaks = Vec::new();
    for (k, &i) in idx.iter().enumerate() {
        let left = if k > 0 { v[idx[k - 1]] } else { f64::NEG_INFINITY };
        let right = if k + 1 < idx.len() { v[idx[k + 1]] } else { f64::NEG_INFINITY };
        if v[i] <= threshold || v[i] < left || v[i] <= right {
            continue;
        }
        let base = |iter: &mut dyn Iterator<Item = usize>| {
            let mut low = v[i];
            for j in iter {
                if v[j] > v[i] {
                    return low;
                }
                low = low.min(v[j]);
            }
            low
        };
        let lo = base(&mut idx[..k].iter().rev().copied());
        let hi = base(&mut idx[k + 1..].iter().copied());
        if v[i] - lo.max(hi) >= prominence {
            peaks.push(i);
        }
    }
    peaks
}

/// Corrects each error peak through the 3 relative waypoints nearest to it,
/// by gradient descent on the error a cubic spline through the waypoints
/// predicts at the peak.
pub fn multipeak_adjust(
    program: &MotionProgram,
    record: &crate::sim::ExecutionRecord,
    curve: &Curve,
    arm: &DualArm,
    tol: &Tolerances,
    steps: Range<usize>,
) -> Result<Adjustment> {
    let tr = track(record, curve, arm)?;
    let m = metrics_from_track(record, &tr)?;
    let rel = relative_waypoints(program, arm)?;
    let pts: Vec<Vector3<f64>> = rel.iter().map(|p| p.position).collect();
    let mut u = vec![0.0];
    for i in 1..pts.len() {
        u.push(u[i - 1] + (pts[i] - pts[i - 1]).norm().max(1e-6));
    }
    let spline = Spline::new(u, pts.clone());
    let candidates: Vec<usize> = steps.map(|k| k + 1).collect();
    let nearest3 = |x: &Vector3<f64>| {
        let mut c = candidates.clone();
        c.sort_by(|a, b| (pts[*a] - x).norm().total_cmp(&(pts[*b] - x).norm()));
        c.truncate(3);
        c
    };
    let window = |chosen: &[usize]| {
        let lo = chosen.iter().min().unwrap().saturating_sub(1);
        let hi = (*chosen.iter().max().unwrap() + 1).min(pts.len() - 1);
        lo..hi
    };
    let mut shift = vec![Vector3::zeros(); pts.len()];
    let mut turn = vec![Vector3::zeros(); pts.len()];
    let mut skipped = Vec::new();

    for i in find_peaks(&m.pos_err, &m.inside, tol.eps_pos, 0.05) {
        let x = tr[i].rel.position;
        let chosen = nearest3(&x);
        if chosen.is_empty() {
            continue;
        }
        let s = spline.closest(&x, window(&chosen));
        let offset = x - spline.eval(s);
        let error_of = |sp: &Spline| {
            let p = sp.eval(s) + offset;
            let (_, l, _) = curve.closest(&p);
            p - curve.at(l).0
        };
        let e0 = error_of(&spline);
        let f0 = e0.norm_squared();
        let h = 0.01;
        // columns of ∂e/∂w for the chosen waypoints, per axis
        let mut jac = Vec::with_capacity(3 * chosen.len());
        for &j in &chosen {
            for a in 0..3 {
                let mut y = pts[j];
                y[a] += h;
                jac.push((error_of(&spline.with_point(j, y)) - e0) / h);
            }
        }
        let grad: Vec<f64> = jac.iter().map(|c| c.dot(&e0)).collect();
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2.sqrt() < 1e-9 {
            skipped.push(i);
            continue;
        }
        let jg: Vector3<f64> = jac.iter().zip(&grad).map(|(c, g)| c * *g).sum();
        let mut alpha = gnorm2 / jg.norm_squared().max(1e-300);
        let mut accepted = None;
        for _ in 0..=8 {
            let mut y = pts.clone();
            for (n, &j) in chosen.iter().enumerate() {
                y[j] -= Vector3::new(grad[3 * n], grad[3 * n + 1], grad[3 * n + 2]) * alpha;
            }
            if error_of(&Spline::new(spline.u.clone(), y)).norm_squared() < f0 {
                accepted = Some(alpha);
                break;
            }
            alpha /= 2.0;
        }
        let Some(alpha) = accepted else {
            skipped.push(i);
            continue;
        };
        for (n, &j) in chosen.iter().enumerate() {
            shift[j] -= Vector3::new(grad[3 * n], grad[3 * n + 1], grad[3 * n + 2]) * alpha;
        }
    }

    let thetas: Vec<f64> = tr.iter().map(|p| p.normal_error.to_degrees()).collect();
    for i in find_peaks(&thetas, &m.inside, tol.eps_norm, 0.05) {
        let Some(axis) = correction_axis(&tr[i], curve) else {
            skipped.push(i);
            continue;
        };
        let x = tr[i].rel.position;
        let chosen = nearest3(&x);
        if chosen.is_empty() {
            continue;
        }
        let s = spline.closest(&x, window(&chosen));
        // the spline is linear in the waypoints: the weight of waypoint j at s
        let weights: Vec<f64> = chosen.iter().map(|&j| (spline.with_point(j, pts[j] + Vector3::x()).eval(s) - spline.eval(s)).x).collect();
        let w2: f64 = weights.iter().map(|w| w * w).sum();
        if w2.sqrt() < 1e-9 {
            skipped.push(i);
            continue;
        }
        for (&j, w) in chosen.iter().zip(&weights) {
            turn[j] += axis * (w * tr[i].normal_error / w2);
        }
    }

    let changes: Vec<Change> = (1..pts.len())
        .filter(|j| shift[*j] != Vector3::zeros() || turn[*j] != Vector3::zeros())
        .map(|j| Change { step: j - 1, shift: shift[j], turn: turn[j] })
        .collect();
    let (program, failed_steps) = apply(program, arm, &changes)?;
    Ok(Adjustment { program, failed_steps, skipped_peaks: skipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOptions {
    /// Proportional step size.
    pub gamma: f64,
    pub max_iter: usize,
    /// Largest factor applied to every commanded speed on a reduction.
    pub backoff: f64,
    /// Relative speed floor, mm/s.
    pub min_speed: f64,
    /// Initial blend radius, mm.
    pub blend_start: f64,
    pub blend_growth: f64,
    /// Blend radii stay below this fraction of both adjacent step lengths.
    pub blend_cap: f64,
    /// Executions averaged per iteration.
    pub runs: usize,
    /// Proportional updates continue while the error drops by more than this fraction.
    pub improvement: f64,
    pub sim: SimOptions,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            gamma: 0.7,
            max_iter: 20,
            backoff: 0.9,
            min_speed: 1.0,
            blend_start: 10.0,
            blend_growth: 1.5,
            blend_cap: 0.45,
            runs: 5,
            improvement: 0.01,
            sim: SimOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub mu_cmd: f64,
    pub max_pos_err: f64,
    pub max_norm_err: f64,
    pub mu_avg: f64,
    pub speed_std_ratio: f64,
    /// What was changed after this execution.
    pub action: String,
}

pub fn save_history(rows: &[HistoryRow], path: &Path) -> Result<()> {
    let mut out = String::from("iteration,mu_cmd,max_pos_err,max_norm_err,mu_avg,std_ratio,action\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iteration, r.mu_cmd, r.max_pos_err, r.max_norm_err, r.mu_avg, r.speed_std_ratio, r.action
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub success: bool,
    /// The passing program on success, the best-scoring one otherwise.
    pub program: MotionProgram,
    pub metrics: Metrics,
    /// Commanded relative speed of `program`, mm/s.
    pub mu_cmd: f64,
    pub history: Vec<HistoryRow>,
}

/// Largest tolerance ratio; ≤ 1 when every check passes.
fn score(m: &Metrics, tol: &Tolerances) -> f64 {
    (m.max_pos_err / tol.eps_pos).max(m.max_norm_err / tol.eps_norm).max(m.speed_std_ratio / (100.0 * tol.eps_speed))
}

/// Sets the blend at every interior waypoint. The robot with the longest
/// adjacent step gets `radius`; the other gets the radius that spans the
/// same phase window. Each robot stays below `cap` times its shorter adjacent
/// step. Returns whether any radius was capped.
pub fn set_blends(program: &mut MotionProgram, arm: &DualArm, radius: f64, cap: f64) -> Result<bool> {
    let lengths = step_lengths(program, arm)?;
    let k = program.len();
    let mut capped = false;
    for j in 0..k {
        let mut window: f64 = 0.0;
        if j + 1 < k {
            let longest = lengths.iter().map(|l| l[j].max(l[j + 1])).fold(0.0, f64::max);
            if longest > 1e-9 {
                window = radius / longest;
            }
            for len in &lengths {
                let (a, b) = (len[j], len[j + 1]);
                let limit = match (a > 1e-9, b > 1e-9) {
                    (true, true) => cap * a.min(b) / a.max(b),
                    (false, false) => f64::INFINITY,
                    _ => 0.0,
                };
                if limit < window {
                    window = limit;
                    capped = true;
                }
            }
        }
        for (r, len) in lengths.iter().enumerate() {
            let r_len = if j + 1 < k { len[j].max(len[j + 1]) } else { 0.0 };
            program.robot_mut(r)[j].blend = if r_len > 1e-9 { window * r_len } else { 0.0 };
        }
    }
    Ok(capped)
}

fn scale_speeds(program: &mut MotionProgram, factor: f64) {
    for p in program.robot1.iter_mut().chain(program.robot2.iter_mut()) {
        p.speed *= factor;
    }
}

/// Iterates execution and waypoint adjustment until all tolerances hold,
/// lowering the commanded speed when corrections stop helping. `steps` are
/// the steps whose end waypoints may move (lead-out excluded).
pub fn tune(
    program: &MotionProgram,
    curve: &Curve,
    arm: &DualArm,
    tol: &Tolerances,
    mu_start: f64,
    steps: Range<usize>,
    opt: &TuneOptions,
) -> Result<TuneOutcome> {
    tol.validate()?;
    if !(mu_start > 0.0) || opt.runs == 0 || opt.max_iter == 0 {
        return Err(Error::InvalidArgument("tuning needs a positive start speed, runs and iterations".into()));
    }
    let robots = (arm.robot1, arm.robot2);
    let mut prog = program.clone();
    let mut blend = opt.blend_start;
    let mut blends_maxed = set_blends(&mut prog, arm, blend, opt.blend_cap)?;
    let mut mu_cmd = mu_start;
    let mut history = Vec::new();
    let mut best: Option<(f64, MotionProgram, Metrics, f64)> = None;
    let mut previous = f64::INFINITY;
    let mut proportional = true;

    for iteration in 1..=opt.max_iter {
        let sim = SimOptions { seed: opt.sim.seed.wrapping_add(1000 * iteration as u64), ..opt.sim.clone() };
        let record = average_runs(&prog, robots.0, robots.1, &sim, opt.runs)?;
        let tr = track(&record, curve, arm)?;
        let m = metrics_from_track(&record, &tr)?;
        let s = score(&m, tol);
        if best.as_ref().is_none_or(|b| s < b.0) {
            best = Some((s, prog.clone(), m.clone(), mu_cmd));
        }
        let mut row = HistoryRow {
            iteration,
            mu_cmd,
            max_pos_err: m.max_pos_err,
            max_norm_err: m.max_norm_err,
            mu_avg: m.mu_avg,
            speed_std_ratio: m.speed_std_ratio,
            action: String::new(),
        };
        if tol.satisfied_by(&m) {
            row.action = "done".into();
            history.push(row);
            return Ok(TuneOutcome { success: true, program: prog, metrics: m, mu_cmd, history });
        }
        let mut actions = Vec::new();
        let mut slow_down = false;

        let error = (m.max_pos_err / tol.eps_pos).max(m.max_norm_err / tol.eps_norm);
        if error > 1.0 {
            let stalled = previous.is_finite() && previous - error <= opt.improvement * previous;
            if proportional && stalled {
                proportional = false;
            } else if !proportional && stalled {
                slow_down = true;
                proportional = true;
            }
            let adj = if proportional {
                actions.push("proportional");
                proportional_adjust(&prog, &record, curve, arm, opt.gamma, steps.clone())?
            } else {
                actions.push("multipeak");
                multipeak_adjust(&prog, &record, curve, arm, tol, steps.clone())?
            };
            prog = adj.program;
            previous = error;
        }
        if m.speed_std_ratio > 100.0 * tol.eps_speed {
            let saturated = record.saturated.iter().any(|v| *v);
            let was_maxed = blends_maxed;
            if !blends_maxed {
                blend *= opt.blend_growth;
                blends_maxed = set_blends(&mut prog, arm, blend, opt.blend_cap)?;
                actions.push("blend");
            }
            if saturated || was_maxed {
                slow_down = true;
            }
        }
        if slow_down {
            // a command far above what the robots achieved drops straight to the achieved speed
            let factor = if m.mu_avg > 0.0 { opt.backoff.min(m.mu_avg / mu_cmd) } else { opt.backoff };
            scale_speeds(&mut prog, factor);
            mu_cmd *= factor;
            actions.push("speed");
            previous = f64::INFINITY;
        }
        if !blends_maxed || actions.contains(&"proportional") || actions.contains(&"multipeak") {
            // adjusted waypoints change step lengths, keep blends within the cap
            blends_maxed = set_blends(&mut prog, arm, blend, opt.blend_cap)?;
        }
        row.action = actions.join("+");
        history.push(row);
        if mu_cmd < opt.min_speed {
            break;
        }
    }
    let (_, program, metrics, mu_cmd) = best.expect("at least one iteration ran");
    Ok(TuneOutcome { success: false, program, metrics, mu_cmd, history })
}
