//! Synchronized dual-arm motion programs and their line-oriented text format.
//!
//! ```text
//! base2 | x y yaw
//! start | robot1: q1 .. qn | robot2: q1 .. qn
//! k | robot1: PRIMITIVE | robot2: PRIMITIVE
//! ```
//!
//! with `PRIMITIVE` one of
//!
//! ```text
//! L x y z rx ry rz speed blend
//! C vx vy vz x y z rx ry rz speed blend
//! J q1 .. qn speed blend
//! ```
//!
//! Cartesian targets are TCP poses in the robot's mounting frame (robot 1: world,
//! robot 2: the planar base frame), given as position (mm) and rotation vector
//! (rad). Numbers are written in shortest round-trip form, so
//! `parse(format(p)) == p` holds bit for bit. Blank lines and `#` comments are ignored.

use std::fmt;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{PlanarPose, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    L,
    C,
    J,
}

impl Kind {
    pub fn letter(self) -> char {
        match self {
            Kind::L => 'L',
            Kind::C => 'C',
            Kind::J => 'J',
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Cartesian target stored in the same form it is written in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianTarget {
    pub position: Vector3<f64>,
    pub rotvec: Vector3<f64>,
}

impl CartesianTarget {
    pub fn from_pose(pose: &Pose) -> Self {
        Self { position: pose.position, rotvec: pose.rotvec() }
    }

    pub fn pose(&self) -> Pose {
        Pose::from_position_rotvec(self.position, self.rotvec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Cartesian(CartesianTarget),
    Joints(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub kind: Kind,
    pub target: Target,
    /// Circle point of a moveC.
    pub via: Option<Vector3<f64>>,
    /// Commanded TCP speed, mm/s.
    pub speed: f64,
    /// Blend radius at the segment end, mm.
    pub blend: f64,
}

impl Primitive {
    pub fn line(target: &Pose, speed: f64, blend: f64) -> Self {
        Self { kind: Kind::L, target: Target::Cartesian(CartesianTarget::from_pose(target)), via: None, speed, blend }
    }

    pub fn circle(via: Vector3<f64>, target: &Pose, speed: f64, blend: f64) -> Self {
        Self { kind: Kind::C, target: Target::Cartesian(CartesianTarget::from_pose(target)), via: Some(via), speed, blend }
    }

    pub fn joint(q: &[f64], speed: f64, blend: f64) -> Self {
        Self { kind: Kind::J, target: Target::Joints(q.to_vec()), via: None, speed, blend }
    }

    pub fn cartesian(&self) -> Option<&CartesianTarget> {
        match &self.target {
            Target::Cartesian(c) => Some(c),
            Target::Joints(_) => None,
        }
    }

    pub fn joints(&self) -> Option<&[f64]> {
        match &self.target {
            Target::Joints(q) => Some(q),
            Target::Cartesian(_) => None,
        }
    }

    fn validate(&self, robot: usize, step: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidProgram(format!("step {step}, robot {robot}: {msg}")));
        if !(self.speed > 0.0) || !self.speed.is_finite() {
            return bad("speed must be positive");
        }
        if !(self.blend >= 0.0) || !self.blend.is_finite() {
            return bad("blend radius must be non-negative");
        }
        match (self.kind, &self.target, self.via.is_some()) {
            (Kind::J, Target::Joints(_), false) | (Kind::L, Target::Cartesian(_), false) | (Kind::C, Target::Cartesian(_), true) => {
                Ok(())
            }
            _ => bad("target type does not match the primitive kind"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionProgram {
    pub base2: PlanarPose,
    pub start1: Vec<f64>,
    pub start2: Vec<f64>,
    pub robot1: Vec<Primitive>,
    pub robot2: Vec<Primitive>,
}

impl MotionProgram {
    /// Number of synchronized steps.
    pub fn len(&self) -> usize {
        self.robot1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.robot1.is_empty()
    }

    pub fn robot(&self, r: usize) -> &[Primitive] {
        if r == 0 {
            &self.robot1
        } else {
            &self.robot2
        }
    }

    pub fn robot_mut(&mut self, r: usize) -> &mut Vec<Primitive> {
        if r == 0 {
            &mut self.robot1
        } else {
            &mut self.robot2
        }
    }

    pub fn start(&self, r: usize) -> &[f64] {
        if r == 0 {
            &self.start1
        } else {
            &self.start2
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.robot1.len() != self.robot2.len() {
            return Err(Error::InvalidProgram(format!(
                "robot 1 has {} steps but robot 2 has {}",
                self.robot1.len(),
                self.robot2.len()
            )));
        }
        if self.robot1.is_empty() {
            return Err(Error::InvalidProgram("program has no steps".into()));
        }
        for (r, (start, prims)) in [(&self.start1, &self.robot1), (&self.start2, &self.robot2)].into_iter().enumerate() {
            for (k, p) in prims.iter().enumerate() {
                p.validate(r + 1, k + 1)?;
                if let Some(q) = p.joints() {
                    if q.len() != start.len() {
                        return Err(Error::InvalidProgram(format!(
                            "step {}, robot {}: {} joint values, expected {}",
                            k + 1,
                            r + 1,
                            q.len(),
                            start.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Same program with every blend radius set to `blend`.
    pub fn with_blend(mut self, blend: f64) -> Self {
        for p in self.robot1.iter_mut().chain(self.robot2.iter_mut()) {
            p.blend = blend;
        }
        self
    }

    pub fn format(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("base2 | {} {} {}\n", self.base2.x, self.base2.y, self.base2.yaw));
        out.push_str(&format!("start | robot1: {} | robot2: {}\n", join(&self.start1), join(&self.start2)));
        for k in 0..self.len() {
            out.push_str(&format!("{} | robot1: {} | robot2: {}\n", k + 1, fmt_primitive(&self.robot1[k]), fmt_primitive(&self.robot2[k])));
        }
        out
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut base2 = None;
        let mut start = None;
        let mut robot1 = Vec::new();
        let mut robot2 = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::parse(source, n + 1, msg);
            let fields: Vec<&str> = line.split('|').map(str::trim).collect();
            match fields[0] {
                "base2" => {
                    let v = numbers(fields.get(1).copied().unwrap_or("")).map_err(err)?;
                    if fields.len() != 2 || v.len() != 3 {
                        return Err(Error::parse(source, n + 1, "expected `base2 | x y yaw`"));
                    }
                    base2 = Some(PlanarPose::new(v[0], v[1], v[2]));
                }
                "start" => {
                    let (a, b) = arms(&fields).map_err(err)?;
                    start = Some((numbers(a).map_err(err)?, numbers(b).map_err(err)?));
                }
                index => {
                    let k: usize = index.parse().map_err(|_| err(format!("unknown record `{index}`")))?;
                    if k != robot1.len() + 1 {
                        return Err(err(format!("step {k} out of order, expected {}", robot1.len() + 1)));
                    }
                    let (a, b) = arms(&fields).map_err(err)?;
                    robot1.push(parse_primitive(a).map_err(err)?);
                    robot2.push(parse_primitive(b).map_err(err)?);
                }
            }
        }
        let base2 = base2.ok_or_else(|| Error::parse(source, 0, "missing `base2` line"))?;
        let (start1, start2) = start.ok_or_else(|| Error::parse(source, 0, "missing `start` line"))?;
        let program = Self { base2, start1, start2, robot1, robot2 };
        program.validate()?;
        Ok(program)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.format()).map_err(|e| Error::io(path, e))
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn fmt_primitive(p: &Primitive) -> String {
    let mut v = Vec::new();
    if let Some(via) = p.via {
        v.extend(via.iter().copied());
    }
    match &p.target {
        Target::Cartesian(c) => {
            v.extend(c.position.iter().copied());
            v.extend(c.rotvec.iter().copied());
        }
        Target::Joints(q) => v.extend(q.iter().copied()),
    }
    v.push(p.speed);
    v.push(p.blend);
    format!("{} {}", p.kind, join(&v))
}

fn arms<'a>(fields: &[&'a str]) -> std::result::Result<(&'a str, &'a str), String> {
    if fields.len() != 3 {
        return Err(format!("expected 3 `|`-separated fields, found {}", fields.len()));
    }
    let a = fields[1].strip_prefix("robot1:").ok_or("second field must start with `robot1:`")?;
    let b = fields[2].strip_prefix("robot2:").ok_or("third field must start with `robot2:`")?;
    Ok((a.trim(), b.trim()))
}

fn numbers(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number"))).collect()
}

fn parse_primitive(s: &str) -> std::result::Result<Primitive, String> {
    let (kind, rest) = s.split_once(char::is_whitespace).ok_or("empty primitive")?;
    let v = numbers(rest)?;
    let v3 = |i: usize| Vector3::new(v[i], v[i + 1], v[i + 2]);
    let tail = |n: usize| (v[n], v[n + 1]);
    match kind {
        "L" => {
            if v.len() != 8 {
                return Err(format!("moveL takes 8 numbers, found {}", v.len()));
            }
            let (speed, blend) = tail(6);
            Ok(Primitive {
                kind: Kind::L,
                target: Target::Cartesian(CartesianTarget { position: v3(0), rotvec: v3(3) }),
                via: None,
                speed,
                blend,
            })
        }
        "C" => {
            if v.len() != 11 {
                return Err(format!("moveC takes 11 numbers, found {}", v.len()));
            }
            let (speed, blend) = tail(9);
            Ok(Primitive {
                kind: Kind::C,
                target: Target::Cartesian(CartesianTarget { position: v3(3), rotvec: v3(6) }),
                via: Some(v3(0)),
                speed,
                blend,
            })
        }
        "J" => {
            if v.len() < 3 {
                return Err("moveJ needs joint values, speed and blend".into());
            }
            let (speed, blend) = tail(v.len() - 2);
            Ok(Primitive { kind: Kind::J, target: Target::Joints(v[..v.len() - 2].to_vec()), via: None, speed, blend })
        }
        other => Err(format!("unknown primitive `{other}`")),
    }
}
