//! Greedy fitting of both arms' joint paths into synchronized moveL/moveC/moveJ
//! steps whose induced relative motion stays within a tolerance of the curve.

use std::ops::Range;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::geometry::{angle_between, interpolate_rotation, Arc, Pose};
use crate::kinematics::{forward_kinematics, JointVector, RobotModel};
use crate::program::{Kind, MotionProgram, Primitive, Target};
use crate::relative_ik::{DualArm, JointPath};

const KINDS: [Kind; 3] = [Kind::L, Kind::C, Kind::J];

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Relative position tolerance, mm.
    pub tol: f64,
    /// Relative normal tolerance, deg.
    pub normal_tol: f64,
    /// Lead-in and lead-out length along the curve tangent, mm; 0 disables them.
    pub extension: f64,
    /// Relative speed the commanded speeds are derived from, mm/s.
    pub speed: f64,
    pub blend: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 0.1, normal_tol: 1.0, extension: 30.0, speed: 100.0, blend: 0.0 }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tol) || !positive(self.normal_tol) || !positive(self.speed) {
            return Err(Error::InvalidArgument("fit tolerance, normal tolerance and speed must be positive".into()));
        }
        if !(self.extension >= 0.0) || !(self.blend >= 0.0) {
            return Err(Error::InvalidArgument("extension and blend must be non-negative".into()));
        }
        Ok(())
    }
}

/// One primitive fitted to a run of samples. Speed and blend are placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFit {
    pub primitive: Primitive,
    /// mm for Cartesian fits, rad for joint fits.
    pub deviation: f64,
    /// A moveC fit on collinear points; `primitive` is then the moveL fallback.
    pub degenerate: bool,
}

/// moveL from the anchored first pose. The end point minimizes the squared
/// distance of sample `i` to the point a moveL reaches at fraction `i / (n - 1)`;
/// deviation is the largest point-to-chord distance. Orientation ends at the
/// last pose.
pub fn fit_segment_l(poses: &[Pose]) -> Result<SegmentFit> {
    if poses.len() < 2 {
        return Err(Error::InvalidArgument(format!("moveL fit needs at least 2 poses, got {}", poses.len())));
    }
    let a = poses[0].position;
    let last = (poses.len() - 1) as f64;
    let (mut num, mut den) = (Vector3::zeros(), 0.0);
    for (i, p) in poses.iter().enumerate() {
        let tau = i as f64 / last;
        num += (p.position - a) * tau;
        den += tau * tau;
    }
    let b = a + num / den;
    let deviation = poses.iter().map(|p| point_segment_distance(&p.position, &a, &b)).fold(0.0, f64::max);
    let end = Pose::new(poses[poses.len() - 1].rotation, b);
    Ok(SegmentFit { primitive: Primitive::line(&end, 1.0, 0.0), deviation, degenerate: false })
}

/// moveC from the first pose to the last one, through the fitted arc midpoint.
pub fn fit_segment_c(poses: &[Pose]) -> Result<SegmentFit> {
    if poses.len() < 3 {
        return Err(Error::InvalidArgument(format!("moveC fit needs at least 3 poses, got {}", poses.len())));
    }
    let pts: Vec<Vector3<f64>> = poses.iter().map(|p| p.position).collect();
    let end = &poses[poses.len() - 1];
    match fit_arc(&pts) {
        Some((arc, via)) => {
            let deviation = pts.iter().map(|p| arc.distance(p)).fold(0.0, f64::max);
            Ok(SegmentFit { primitive: Primitive::circle(via, end, 1.0, 0.0), deviation, degenerate: false })
        }
        None => Ok(SegmentFit { degenerate: true, ..fit_segment_l(poses)? }),
    }
}

/// moveJ from the first sample to the last one. Deviation is the largest
/// per-joint difference from the joint-linear interpolation at the same fraction.
pub fn fit_segment_j(q: &[JointVector]) -> Result<SegmentFit> {
    if q.len() < 2 {
        return Err(Error::InvalidArgument(format!("moveJ fit needs at least 2 samples, got {}", q.len())));
    }
    let (a, b) = (&q[0], &q[q.len() - 1]);
    let last = (q.len() - 1) as f64;
    let deviation = q
        .iter()
        .enumerate()
        .map(|(i, qi)| (qi - (a + (b - a) * (i as f64 / last))).amax())
        .fold(0.0, f64::max);
    Ok(SegmentFit { primitive: Primitive::joint(b.as_slice(), 1.0, 0.0), deviation, degenerate: false })
}

fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + d * t - p).norm()
}

/// Circle through the first and last point whose center is fitted to the
/// others, in the plane through the chord that best contains all points.
fn fit_arc(pts: &[Vector3<f64>]) -> Option<(Arc, Vector3<f64>)> {
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    let h = (b - a).norm() / 2.0;
    if h < 1e-9 {
        return None;
    }
    let chord = (b - a) / (2.0 * h);
    let m = (a + b) / 2.0;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p - m;
        let d = d - chord * d.dot(&chord);
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imax();
    if (eig.eigenvalues[k] / pts.len() as f64).sqrt() < 1e-9 * h {
        return None;
    }
    let w: Vector3<f64> = eig.eigenvectors.column(k).into();
    let (mut num, mut den, mut side) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = p - m;
        let (x, y) = (d.dot(&chord), d.dot(&w));
        num += y * (x * x + y * y - h * h);
        den += y * y;
        side += y;
    }
    let alpha = num / (2.0 * den);
    let radius = (h * h + alpha * alpha).sqrt();
    if !radius.is_finite() || radius > 1e7 {
        return None;
    }
    let via = m + w * if side >= 0.0 { alpha + radius } else { alpha - radius };
    Arc::through(&a, &via, &b).map(|arc| (arc, via))
}

/// Path of one primitive over the controller's table parameter `t ∈ [0, 1]`.
#[derive(Debug, Clone)]
enum Shape {
    Line { a: Pose, b: Pose },
    Circle { a: Pose, b: Pose, arc: Arc, via: Vector3<f64> },
    Joint { q0: Vec<f64>, q1: Vec<f64> },
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect()
}

impl Shape {
    fn kind(&self) -> Kind {
        match self {
            Shape::Line { .. } => Kind::L,
            Shape::Circle { .. } => Kind::C,
            Shape::Joint { .. } => Kind::J,
        }
    }

    /// TCP pose in the robot's mounting frame.
    fn pose(&self, model: &RobotModel, t: f64) -> Result<Pose> {
        match self {
            Shape::Line { a, b } => {
                Ok(Pose::new(interpolate_rotation(&a.rotation, &b.rotation, t), a.position + (b.position - a.position) * t))
            }
            Shape::Circle { a, b, arc, .. } => Ok(Pose::new(interpolate_rotation(&a.rotation, &b.rotation, t), arc.point(t))),
            Shape::Joint { q0, q1 } => forward_kinematics(model, &lerp(q0, q1, t)),
        }
    }

    /// TCP path length, measured the way the simulator measures it.
    fn length(&self, model: &RobotModel) -> Result<f64> {
        match self {
            Shape::Line { a, b } => Ok((b.position - a.position).norm()),
            Shape::Circle { arc, .. } => Ok(arc.length()),
            Shape::Joint { q0, .. } => {
                let mut prev = forward_kinematics(model, q0)?.position;
                let mut len = 0.0;
                for i in 1..=32 {
                    let p = self.pose(model, i as f64 / 32.0)?.position;
                    len += (p - prev).norm();
                    prev = p;
                }
                Ok(len)
            }
        }
    }

    fn primitive(&self, speed: f64, blend: f64) -> Primitive {
        match self {
            Shape::Line { b, .. } => Primitive::line(b, speed, blend),
            Shape::Circle { b, via, .. } => Primitive::circle(*via, b, speed, blend),
            Shape::Joint { q1, .. } => Primitive::joint(q1, speed, blend),
        }
    }
}

/// One synchronized interior step of a fitted program.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSegment {
    /// Curve sample indices the step spans.
    pub start: usize,
    pub end: usize,
    pub kinds: [Kind; 2],
    /// Largest relative position deviation, mm.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub segments: Vec<FitSegment>,
    /// Lead-in/out length actually used, mm (0 when the program has none).
    pub extension: f64,
}

impl FitReport {
    /// Program steps that cover the curve.
    pub fn interior(&self) -> Range<usize> {
        let offset = usize::from(self.extension > 0.0);
        offset..offset + self.segments.len()
    }

    /// CSV rows: step, start, end, kind1, kind2, deviation.
    pub fn save(&self, path: &Path) -> Result<()> {
        let first = self.interior().start;
        let mut out = String::from("step,start,end,kind1,kind2,deviation\n");
        for (i, s) in self.segments.iter().enumerate() {
            out.push_str(&format!("{},{},{},{},{},{}\n", first + i, s.start, s.end, s.kinds[0], s.kinds[1], s.deviation));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Primitive sequence of robot `r` with run lengths, e.g. `J^3L^1C^2`.
    pub fn sequence(&self, r: usize) -> String {
        let mut out = String::new();
        let mut i = 0;
        while i < self.segments.len() {
            let kind = self.segments[i].kinds[r];
            let run = self.segments[i..].iter().take_while(|s| s.kinds[r] == kind).count();
            out.push_str(&format!("{kind}^{run}"));
            i += run;
        }
        out
    }
}

struct Fitter<'a> {
    arm: &'a DualArm<'a>,
    curve: &'a Curve,
    q: [&'a [JointVector]; 2],
    poses: [Vec<Pose>; 2],
    lift: Pose,
    tol: f64,
    normal_tol: f64,
}

impl<'a> Fitter<'a> {
    fn new(path: &'a JointPath, arm: &'a DualArm<'a>, curve: &'a Curve, opt: &FitOptions) -> Result<Self> {
        let poses1 = path.q1.iter().map(|q| forward_kinematics(arm.robot1, q.as_slice())).collect::<Result<_>>()?;
        let poses2 = path.q2.iter().map(|q| forward_kinematics(arm.robot2, q.as_slice())).collect::<Result<_>>()?;
        Ok(Self {
            arm,
            curve,
            q: [&path.q1, &path.q2],
            poses: [poses1, poses2],
            lift: arm.planar.lift(),
            tol: opt.tol,
            normal_tol: opt.normal_tol.to_radians(),
        })
    }

    fn model(&self, r: usize) -> &RobotModel {
        if r == 0 {
            self.arm.robot1
        } else {
            self.arm.robot2
        }
    }

    fn shape(&self, r: usize, kind: Kind, s: usize, e: usize) -> Option<Shape> {
        let (a, b) = (self.poses[r][s], self.poses[r][e]);
        match kind {
            Kind::L => Some(Shape::Line { a, b }),
            Kind::C if e - s >= 2 => {
                let pts: Vec<Vector3<f64>> = self.poses[r][s..=e].iter().map(|p| p.position).collect();
                fit_arc(&pts).map(|(arc, via)| Shape::Circle { a, b, arc, via })
            }
            Kind::C => None,
            Kind::J => Some(Shape::Joint { q0: self.q[r][s].as_slice().to_vec(), q1: self.q[r][e].as_slice().to_vec() }),
        }
    }

    fn world(&self, r: usize, shape: &Shape, n: usize) -> Option<Vec<Pose>> {
        let model = self.model(r);
        (0..n)
            .map(|k| {
                let pose = shape.pose(model, k as f64 / (n - 1) as f64).ok()?;
                Some(if r == 0 { pose } else { self.lift.compose(&pose) })
            })
            .collect()
    }

    /// Largest relative deviation of the sampled pair from curve samples
    /// `s..=e`, or `None` once either tolerance is exceeded.
    fn check(&self, w1: &[Pose], w2: &[Pose], s: usize, e: usize) -> Option<f64> {
        let mut ptr = s;
        let mut worst: f64 = 0.0;
        for (a, b) in w1.iter().zip(w2) {
            let rel = b.inverse().compose(a);
            let hi = (ptr + 24).min(e);
            let (mut d, mut l, mut i) = self.curve.closest_in(ptr.saturating_sub(2).max(s), hi, &rel.position);
            if d > self.tol || (i + 1 == hi && hi < e) {
                (d, l, i) = self.curve.closest_in(s, e, &rel.position);
            }
            if d > self.tol {
                return None;
            }
            let (_, n) = self.curve.at(l);
            if angle_between(&rel.z_axis(), &-n) > self.normal_tol {
                return None;
            }
            ptr = i;
            worst = worst.max(d);
        }
        Some(worst)
    }

    /// First feasible kind pair over `s..=e` in L > C > J order (robot 1 first).
    fn best_pair(&self, s: usize, e: usize) -> Option<([Shape; 2], f64)> {
        let n = 2 * (e - s).max(4) + 1;
        let mut cache: [[Option<Option<(Shape, Vec<Pose>)>>; 3]; 2] = Default::default();
        let mut get = |r: usize, k: usize| -> Option<(Shape, Vec<Pose>)> {
            cache[r][k]
                .get_or_insert_with(|| {
                    let shape = self.shape(r, KINDS[k], s, e)?;
                    let w = self.world(r, &shape, n)?;
                    Some((shape, w))
                })
                .clone()
        };
        for k1 in 0..3 {
            let Some((s1, w1)) = get(0, k1) else { continue };
            for k2 in 0..3 {
                let Some((s2, w2)) = get(1, k2) else { continue };
                if let Some(dev) = self.check(&w1, &w2, s, e) {
                    return Some(([s1, s2], dev));
                }
            }
        }
        None
    }
}

pub(crate) fn lead_configuration(q: &[JointVector], lambda: &[f64], at_start: bool, ext: f64) -> JointVector {
    let m = q.len();
    let (i0, i1, i2) = if at_start { (0, 1, 2) } else { (m - 1, m - 2, m.saturating_sub(3)) };
    // one-sided derivative of the quadratic through three samples, spacing may be uneven
    let slope = if m >= 3 {
        let (h1, h2) = (lambda[i1] - lambda[i0], lambda[i2] - lambda[i0]);
        &q[i0] * (-(h1 + h2) / (h1 * h2)) + &q[i1] * (h2 / (h1 * (h2 - h1))) - &q[i2] * (h1 / (h2 * (h2 - h1)))
    } else {
        (&q[i1] - &q[i0]) / (lambda[i1] - lambda[i0])
    };
    let outward = if at_start { -ext } else { ext };
    &q[i0] + slope * outward
}

/// Fits the joint path of both arms into the fewest synchronized steps whose
/// relative motion stays within `opt.tol` of `curve`, plus lead-in and
/// lead-out moveJ steps of `opt.extension` mm.
pub fn greedy_fit_dual(path: &JointPath, arm: &DualArm, curve: &Curve, opt: &FitOptions) -> Result<(MotionProgram, FitReport)> {
    opt.validate()?;
    let m = path.len();
    if m < 2 || curve.len() != m {
        return Err(Error::InvalidArgument(format!("path of {m} samples does not match a curve of {} samples", curve.len())));
    }
    let fitter = Fitter::new(path, arm, curve, opt)?;
    let mut fits: Vec<([Shape; 2], FitSegment)> = Vec::new();
    let mut s = 0;
    while s < m - 1 {
        let (e, (shapes, dev)) = match fitter.best_pair(s, m - 1) {
            Some(fit) => (m - 1, fit),
            None => {
                let mut best = (s + 1, fitter.best_pair(s, s + 1).ok_or(Error::FitUnreachable { index: s })?);
                let mut hi = m - 1;
                while hi - best.0 > 1 {
                    let mid = (best.0 + hi) / 2;
                    match fitter.best_pair(s, mid) {
                        Some(fit) => best = (mid, fit),
                        None => hi = mid,
                    }
                }
                best
            }
        };
        let kinds = [shapes[0].kind(), shapes[1].kind()];
        fits.push((shapes, FitSegment { start: s, end: e, kinds, deviation: dev }));
        s = e;
    }

    let robots = [arm.robot1, arm.robot2];
    let q = [&path.q1, &path.q2];
    let mut ext = opt.extension;
    let mut leads = None;
    while ext > 1e-3 {
        let cand: Vec<[JointVector; 2]> = (0..2)
            .map(|r| [lead_configuration(q[r], &path.lambda, true, ext), lead_configuration(q[r], &path.lambda, false, ext)])
            .collect();
        if (0..2).all(|r| cand[r].iter().all(|c| robots[r].within_limits(c.as_slice()))) {
            leads = Some(cand);
            break;
        }
        ext /= 2.0;
    }
    let ext = if leads.is_some() { ext } else { 0.0 };

    let speed_for = |shape: &Shape, r: usize, span: f64| -> Result<f64> {
        let len = shape.length(robots[r])?;
        Ok(if len > 1e-9 { opt.speed * len / span } else { opt.speed })
    };
    let mut lists: [Vec<Primitive>; 2] = [Vec::new(), Vec::new()];
    let mut starts = [path.q1[0].as_slice().to_vec(), path.q2[0].as_slice().to_vec()];
    if let Some(l) = &leads {
        for r in 0..2 {
            starts[r] = l[r][0].as_slice().to_vec();
            let shape = Shape::Joint { q0: starts[r].clone(), q1: q[r][0].as_slice().to_vec() };
            lists[r].push(shape.primitive(speed_for(&shape, r, ext)?, opt.blend));
        }
    }
    for (shapes, seg) in &fits {
        let span = curve.lambda[seg.end] - curve.lambda[seg.start];
        for r in 0..2 {
            lists[r].push(shapes[r].primitive(speed_for(&shapes[r], r, span)?, opt.blend));
        }
    }
    if let Some(l) = &leads {
        for r in 0..2 {
            let shape = Shape::Joint { q0: q[r][m - 1].as_slice().to_vec(), q1: l[r][1].as_slice().to_vec() };
            lists[r].push(shape.primitive(speed_for(&shape, r, ext)?, 0.0));
        }
    }
    if let Some(last) = lists[0].last_mut() {
        last.blend = 0.0;
    }
    if let Some(last) = lists[1].last_mut() {
        last.blend = 0.0;
    }
    let [robot1, robot2] = lists;
    let [start1, start2] = starts;
    let program = MotionProgram { base2: arm.planar, start1, start2, robot1, robot2 };
    program.validate()?;
    let report = FitReport { segments: fits.into_iter().map(|(_, s)| s).collect(), extension: ext };
    Ok((program, report))
}

/// Shapes of every step of `program`, reconstructed from its text form.
fn program_shapes(program: &MotionProgram, arm: &DualArm) -> Result<[Vec<Shape>; 2]> {
    let robots = [arm.robot1, arm.robot2];
    let mut out: [Vec<Shape>; 2] = [Vec::new(), Vec::new()];
    for r in 0..2 {
        let model = robots[r];
        let mut q = program.start(r).to_vec();
        let mut pose = forward_kinematics(model, &q)?;
        for (step, prim) in program.robot(r).iter().enumerate() {
            let shape = match &prim.target {
                Target::Joints(q1) => {
                    let s = Shape::Joint { q0: q.clone(), q1: q1.clone() };
                    q = q1.clone();
                    pose = forward_kinematics(model, &q)?;
                    s
                }
                Target::Cartesian(c) => {
                    let b = c.pose();
                    let s = match prim.via {
                        Some(via) => {
                            let arc = Arc::through(&pose.position, &via, &b.position)
                                .ok_or_else(|| Error::InvalidProgram(format!("step {step}, robot {}: moveC points are collinear", r + 1)))?;
                            Shape::Circle { a: pose, b, arc, via }
                        }
                        None => Shape::Line { a: pose, b },
                    };
                    q = model
                        .inverse_kinematics(&b, &q)
                        .ok_or(Error::UnreachableTarget { step, robot: r + 1 })?
                        .as_slice()
                        .to_vec();
                    pose = b;
                    s
                }
            };
            out[r].push(shape);
        }
    }
    Ok(out)
}

/// TCP path length of every step of both robots, mm.
pub fn step_lengths(program: &MotionProgram, arm: &DualArm) -> Result<[Vec<f64>; 2]> {
    let shapes = program_shapes(program, arm)?;
    let l1 = shapes[0].iter().map(|s| s.length(arm.robot1)).collect::<Result<_>>()?;
    let l2 = shapes[1].iter().map(|s| s.length(arm.robot2)).collect::<Result<_>>()?;
    Ok([l1, l2])
}

/// Largest relative `(position mm, normal deg)` deviation from `curve` of the
/// program steps in `steps`, evaluated at `points` parameter values per step
/// before any blending.
pub fn program_deviation(program: &MotionProgram, arm: &DualArm, curve: &Curve, steps: Range<usize>, points: usize) -> Result<(f64, f64)> {
    let shapes = program_shapes(program, arm)?;
    let lift = arm.planar.lift();
    let points = points.max(2);
    let mut worst = (0.0f64, 0.0f64);
    for k in steps {
        for i in 0..points {
            let t = i as f64 / (points - 1) as f64;
            let a = shapes[0][k].pose(arm.robot1, t)?;
            let b = lift.compose(&shapes[1][k].pose(arm.robot2, t)?);
            let rel = b.inverse().compose(&a);
            let (d, l, _) = curve.closest(&rel.position);
            let (_, n) = curve.at(l);
            worst.0 = worst.0.max(d);
            worst.1 = worst.1.max(angle_between(&rel.z_axis(), &-n).to_degrees());
        }
    }
    Ok(worst)
}

/// Segments (by index) whose end could be moved one sample further while
/// staying within tolerance; empty for a greedy-maximal fit.
pub fn non_maximal_segments(path: &JointPath, arm: &DualArm, curve: &Curve, opt: &FitOptions, report: &FitReport) -> Result<Vec<usize>> {
    let fitter = Fitter::new(path, arm, curve, opt)?;
    Ok(report
        .segments
        .iter()
        .enumerate()
        .filter(|(_, seg)| seg.end + 1 < path.len() && fitter.best_pair(seg.start, seg.end + 1).is_some())
        .map(|(i, _)| i)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rot;
    use crate::kinematics::test_models::{six_r, small_six_r};
    use crate::relative_ik::test_setup::*;
    use crate::relative_ik::IkOptions;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn at(p: Vector3<f64>) -> Pose {
        Pose::from_translation(p)
    }

    #[test]
    fn collinear_points_fit_a_line_exactly() {
        let poses: Vec<Pose> = (0..11).map(|i| at(Vector3::new(i as f64, 2.0 * i as f64, 0.0))).collect();
        let fit = fit_segment_l(&poses).unwrap();
        assert!(fit.deviation < 1e-12);
        assert!((fit.primitive.cartesian().unwrap().position - Vector3::new(10.0, 20.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn semicircle_as_line_matches_dense_chord_distance() {
        let r = 40.0;
        let point = |deg: f64| Vector3::new(r * deg.to_radians().cos(), r * deg.to_radians().sin(), 0.0);
        let poses: Vec<Pose> = (0..=180).map(|d| at(point(d as f64))).collect();
        let fit = fit_segment_l(&poses).unwrap();
        let (a, b) = (point(0.0), fit.primitive.cartesian().unwrap().position);
        let chord: Vec<Vector3<f64>> = (0..=20000).map(|k| a + (b - a) * (k as f64 / 20000.0)).collect();
        let dense = (0..=1800)
            .map(|k| {
                let p = point(k as f64 / 10.0);
                chord.iter().map(|c| (c - p).norm()).fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        assert!((fit.deviation - dense).abs() < 0.01, "{} vs {dense}", fit.deviation);
        assert!(fit.deviation > 0.5 * r && fit.deviation < 1.5 * r);
    }

    #[test]
    fn noisy_line_fit_stays_within_five_sigma() {
        let sigma = 0.01;
        let normal = Normal::new(0.0, sigma).unwrap();
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let poses: Vec<Pose> = (0..100)
                .map(|i| {
                    let noise = if i == 0 { Vector3::zeros() } else { Vector3::new(0.0, normal.sample(&mut rng), 0.0) };
                    at(Vector3::new(i as f64, 0.0, 0.0) + noise)
                })
                .collect();
            let fit = fit_segment_l(&poses).unwrap();
            assert!(fit.deviation <= 5.0 * sigma, "seed {seed}: {}", fit.deviation);
            let end = fit.primitive.cartesian().unwrap().position;
            assert!((end - Vector3::new(99.0, 0.0, 0.0)).norm() <= 0.05);
        }
    }

    #[test]
    fn exact_arc_is_recovered() {
        let r = 80.0;
        let c = Vector3::new(5.0, -3.0, 12.0);
        let tilt = rot(&Vector3::new(1.0, 1.0, 0.0), 0.4);
        let point = |deg: f64| c + tilt * Vector3::new(r * deg.to_radians().cos(), r * deg.to_radians().sin(), 0.0);
        let poses: Vec<Pose> = (0..=45).map(|i| at(point(2.0 * i as f64))).collect();
        let fit = fit_segment_c(&poses).unwrap();
        assert!(!fit.degenerate);
        assert!(fit.deviation <= 1e-9, "{}", fit.deviation);
        assert!((fit.primitive.via.unwrap() - point(45.0)).norm() < 1e-9);
    }

    #[test]
    fn straight_points_are_a_degenerate_arc() {
        let poses: Vec<Pose> = (0..20).map(|i| at(Vector3::new(i as f64, 0.0, 0.0))).collect();
        let fit = fit_segment_c(&poses).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.primitive.kind, Kind::L);
        assert!(fit.deviation < 1e-12);
    }

    #[test]
    fn helix_deviation_matches_the_out_of_plane_oracle() {
        // a plane through the chord, tilted with the rise, leaves
        // h·(φ/Θ − sin φ / (2 sin(Θ/2))) out of plane at angle φ from the middle
        let (r, span, rise) = (100.0, PI / 2.0, 2.0);
        let helix = |a: f64| Vector3::new(r * a.cos(), r * a.sin(), rise * a / span);
        let poses: Vec<Pose> = (0..=900).map(|i| at(helix(span * i as f64 / 900.0))).collect();
        let fit = fit_segment_c(&poses).unwrap();
        let oracle = (0..=1000)
            .map(|i| {
                let phi = -span / 2.0 + span * i as f64 / 1000.0;
                (rise * (phi / span - phi.sin() / (2.0 * (span / 2.0).sin()))).abs()
            })
            .fold(0.0, f64::max);
        assert!(fit.deviation > 0.0);
        assert!((fit.deviation - oracle).abs() <= 0.25 * oracle, "{} vs {oracle}", fit.deviation);
    }

    #[test]
    fn joint_linear_and_quadratic_samples() {
        let lin: Vec<JointVector> = (0..11).map(|i| JointVector::from_vec(vec![0.1 * i as f64, -0.2 * i as f64])).collect();
        assert!(fit_segment_j(&lin).unwrap().deviation < 1e-15);
        let a = 0.8;
        let quad: Vec<JointVector> = (0..=20).map(|i| JointVector::from_vec(vec![a * (i as f64 / 20.0).powi(2), 0.0])).collect();
        assert!((fit_segment_j(&quad).unwrap().deviation - a / 4.0).abs() < 1e-12);
        let single: Vec<JointVector> = quad.iter().map(|q| JointVector::from_vec(vec![q[0]])).collect();
        assert_eq!(fit_segment_j(&single).unwrap().deviation, fit_segment_j(&quad).unwrap().deviation);
    }

    fn fitted(length: f64) -> (MotionProgram, FitReport, JointPath, Curve) {
        let (m1, m2) = (Box::leak(Box::new(six_r())), Box::leak(Box::new(small_six_r())));
        let arm = DualArm::new(m1, m2, planar());
        let curve = straight_curve(&arm, length);
        let path = arm.solve_path(&Q1, &Q2, &curve, &IkOptions::default()).unwrap();
        let (program, report) = greedy_fit_dual(&path, &arm, &curve, &FitOptions::default()).unwrap();
        (program, report, path, curve)
    }

    #[test]
    fn straight_relative_segment_fits_one_step() {
        let (program, report, _, _) = fitted(40.0);
        assert_eq!(report.segments.len(), 1);
        assert_eq!(program.len(), 3);
        assert_eq!(report.interior(), 1..2);
        assert_eq!(program.robot1[0].kind, Kind::J);
        assert_eq!(program.robot1[2].kind, Kind::J);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.csv");
        report.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        let seg = &report.segments[0];
        let expected = ["1".to_string(), "0".into(), seg.end.to_string(), seg.kinds[0].to_string(), seg.kinds[1].to_string()];
        assert_eq!(row[..5], expected.iter().map(String::as_str).collect::<Vec<_>>()[..]);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn arc_curve_fit_is_certified() {
        let (m1, m2) = (six_r(), small_six_r());
        let arm = DualArm::new(&m1, &m2, planar());
        let (p, n) = exact_sample(&arm);
        let pts: Vec<Vector3<f64>> = (0..=120)
            .map(|i| {
                let a = (i as f64).to_radians() * 1.5;
                p + Vector3::new(60.0 * a.sin(), 60.0 * (1.0 - a.cos()), 8.0 * a * a)
            })
            .collect();
        let curve = Curve::new(pts, vec![n; 121]).unwrap().resample(0.5).unwrap();
        let path = arm.solve_path(&Q1, &Q2, &curve, &IkOptions::default()).unwrap();
        let opt = FitOptions::default();
        let (program, report) = greedy_fit_dual(&path, &arm, &curve, &opt).unwrap();
        assert!(report.segments.len() > 1);
        for w in report.segments.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        assert_eq!(report.segments.last().unwrap().end, curve.len() - 1);
        let (dev, ndev) = program_deviation(&program, &arm, &curve, report.interior(), 400).unwrap();
        assert!(dev <= opt.tol + 1e-6, "{dev}");
        assert!(ndev <= opt.normal_tol + 1e-6, "{ndev}");
        assert!(non_maximal_segments(&path, &arm, &curve, &opt, &report).unwrap().is_empty());
        assert_eq!(program.robot1.len(), program.robot2.len());
    }

    #[test]
    fn speeds_follow_segment_lengths() {
        let (program, report, _, curve) = fitted(40.0);
        let (m1, _) = (six_r(), small_six_r());
        let seg = &report.segments[0];
        let span = curve.lambda[seg.end] - curve.lambda[seg.start];
        let prim = &program.robot1[1];
        let start = forward_kinematics(&m1, &program.robot1[0].joints().map(|q| q.to_vec()).unwrap()).unwrap();
        let len = match prim.kind {
            Kind::L => (prim.cartesian().unwrap().position - start.position).norm(),
            _ => return,
        };
        assert!((prim.speed - 100.0 * len / span).abs() < 1e-9);
    }

    #[test]
    fn lead_in_extends_along_the_tangent() {
        let (m1, m2) = (six_r(), small_six_r());
        let arm = DualArm::new(&m1, &m2, planar());
        let (program, report, _, curve) = fitted(40.0);
        assert_eq!(report.extension, 30.0);
        let rel = arm.relative_pose(&program.start1, &program.start2).unwrap();
        let dir = (curve.p[1] - curve.p[0]).normalize();
        let off = rel.position - curve.p[0];
        assert!((off.dot(&dir) + 30.0).abs() < 0.5, "{off}");
        assert!((off - dir * off.dot(&dir)).norm() < 0.5);
    }

    #[test]
    fn lead_out_survives_an_uneven_last_spacing() {
        let (m1, m2) = (six_r(), small_six_r());
        let arm = DualArm::new(&m1, &m2, planar());
        // 40.2 mm at 0.5 mm spacing leaves a 0.2 mm last interval
        let (program, report, _, curve) = fitted(40.2);
        assert_eq!(report.extension, 30.0);
        let k = program.len() - 1;
        let rel = arm.relative_pose(program.robot1[k].joints().unwrap(), program.robot2[k].joints().unwrap()).unwrap();
        let m = curve.len();
        let dir = (curve.p[m - 1] - curve.p[m - 2]).normalize();
        let off = rel.position - curve.p[m - 1];
        assert!((off.dot(&dir) - 30.0).abs() < 0.5, "{off}");
        assert!((off - dir * off.dot(&dir)).norm() < 0.5);
    }

    #[test]
    fn sequence_notation() {
        let seg = |kinds| FitSegment { start: 0, end: 1, kinds, deviation: 0.0 };
        let report = FitReport { segments: vec![seg([Kind::J, Kind::L]), seg([Kind::J, Kind::L]), seg([Kind::L, Kind::L])], extension: 0.0 };
        assert_eq!(report.sequence(0), "J^2L^1");
        assert_eq!(report.sequence(1), "L^3");
        assert_eq!(report.interior(), 0..3);
    }
}
