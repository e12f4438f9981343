//! Serial-chain kinematics for a single arm.
//!
//! The chain is described as successive rigid transforms: joint `i` sits at
//! `joint_origins[i]` relative to the frame of joint `i-1` (expressed with all
//! joints at zero) and rotates about `joint_axes[i]`. The TCP is reached through
//! `tool_transform` from the last joint frame, and the whole chain is placed in
//! the world by `base_transform`.

use std::path::{Path, PathBuf};

use nalgebra::{DVector, Matrix3, Matrix6, Matrix6xX, Vector3, Vector6};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{log_so3, rot, Pose};

/// Joint-space vector (radians).
pub type JointVector = DVector<f64>;

/// Configuration-dependent joint acceleration limits on a regular `(q2, q3)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelTable {
    q2: Vec<f64>,
    q3: Vec<f64>,
    // row-major over (q2, q3); each entry holds one magnitude per joint
    values: Vec<Vec<f64>>,
}

impl AccelTable {
    /// Builds a table from `(q2, q3, limits)` rows. Every grid node must appear exactly once.
    pub fn from_rows(rows: Vec<(f64, f64, Vec<f64>)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyAccelTable);
        }
        let width = rows[0].2.len();
        let mut q2: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut q3: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for v in [&mut q2, &mut q3] {
            v.sort_by(|a, b| a.total_cmp(b));
            v.dedup();
        }
        if q2.len() * q3.len() != rows.len() {
            return Err(Error::InvalidModel(format!(
                "acceleration table is not a full grid: {} x {} nodes but {} rows",
                q2.len(),
                q3.len(),
                rows.len()
            )));
        }
        let mut values = vec![Vec::new(); rows.len()];
        for (a, b, v) in rows {
            if v.len() != width {
                return Err(Error::InvalidModel("acceleration table rows differ in width".into()));
            }
            if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidModel("acceleration limits must be strictly positive".into()));
            }
            let i = q2.binary_search_by(|x| x.total_cmp(&a)).unwrap();
            let j = q3.binary_search_by(|x| x.total_cmp(&b)).unwrap();
            let slot = &mut values[i * q3.len() + j];
            if !slot.is_empty() {
                return Err(Error::InvalidModel(format!("duplicate acceleration node ({a}, {b})")));
            }
            *slot = v;
        }
        Ok(Self { q2, q3, values })
    }

    /// Table with one node, i.e. configuration-independent limits.
    pub fn constant(limits: Vec<f64>) -> Result<Self> {
        Self::from_rows(vec![(0.0, 0.0, limits)])
    }

    pub fn width(&self) -> usize {
        self.values[0].len()
    }

    /// Nearest-node lookup; ties go to the lower grid index.
    pub fn lookup(&self, q2: f64, q3: f64) -> &[f64] {
        let i = nearest_index(&self.q2, q2);
        let j = nearest_index(&self.q3, q3);
        &self.values[i * self.q3.len() + j]
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(&name, n + 1, e.to_string()))?;
            if fields.len() < 3 {
                return Err(Error::parse(&name, n + 1, "expected q2, q3 and at least one limit"));
            }
            rows.push((fields[0], fields[1], fields[2..].to_vec()));
        }
        Self::from_rows(rows)
    }
}

fn nearest_index(grid: &[f64], x: f64) -> usize {
    let upper = grid.partition_point(|g| *g < x);
    if upper == 0 {
        return 0;
    }
    if upper == grid.len() {
        return grid.len() - 1;
    }
    let lower = upper - 1;
    if x - grid[lower] <= grid[upper] - x {
        lower
    } else {
        upper
    }
}

#[derive(Debug, Clone)]
pub struct RobotModel {
    pub name: String,
    pub joint_axes: Vec<Vector3<f64>>,
    pub joint_origins: Vec<Vector3<f64>>,
    pub tool_transform: Pose,
    pub q_min: JointVector,
    pub q_max: JointVector,
    pub qd_min: JointVector,
    pub qd_max: JointVector,
    pub accel_table: AccelTable,
    pub base_transform: Pose,
}

/// World-frame joint axes and positions together with the TCP pose.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub tcp: Pose,
    pub axes: Vec<Vector3<f64>>,
    pub origins: Vec<Vector3<f64>>,
}

impl RobotModel {
    pub fn joint_count(&self) -> usize {
        self.joint_axes.len()
    }

    /// Checks the structural invariants of the model.
    pub fn validate(&self) -> Result<()> {
        let n = self.joint_count();
        if n == 0 {
            return Err(Error::InvalidModel("model has no joints".into()));
        }
        if self.joint_origins.len() != n {
            return Err(Error::InvalidModel(format!(
                "{} joint axes but {} joint origins",
                n,
                self.joint_origins.len()
            )));
        }
        for (i, a) in self.joint_axes.iter().enumerate() {
            if (a.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidModel(format!("joint axis {} is not unit norm", i + 1)));
            }
        }
        for (label, v) in [("q_min", &self.q_min), ("q_max", &self.q_max), ("qd_min", &self.qd_min), ("qd_max", &self.qd_max)] {
            if v.len() != n {
                return Err(Error::InvalidModel(format!("{label} has {} entries, expected {n}", v.len())));
            }
        }
        for i in 0..n {
            if !(self.q_min[i] < self.q_max[i]) {
                return Err(Error::InvalidModel(format!("q_min >= q_max for joint {}", i + 1)));
            }
            if !(self.qd_min[i] < 0.0 && self.qd_max[i] > 0.0) {
                return Err(Error::InvalidModel(format!("velocity limits must straddle zero for joint {}", i + 1)));
            }
        }
        if self.accel_table.width() != n {
            return Err(Error::InvalidModel(format!(
                "acceleration table has {} columns, expected {n}",
                self.accel_table.width()
            )));
        }
        for (label, p) in [("tool_transform", &self.tool_transform), ("base_transform", &self.base_transform)] {
            if p.orthonormality_error() > 1e-9 {
                return Err(Error::InvalidModel(format!("{label} rotation is not orthonormal")));
            }
        }
        Ok(())
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.joint_count() {
            return Err(Error::Dimension { expected: self.joint_count(), got: q.len() });
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.iter().enumerate().all(|(i, v)| *v >= self.q_min[i] && *v <= self.q_max[i])
    }

    /// Clamps `q` into the joint limits, returning whether any joint was moved.
    pub fn clamp(&self, q: &mut [f64]) -> bool {
        let mut clamped = false;
        for (i, v) in q.iter_mut().enumerate() {
            let c = v.clamp(self.q_min[i], self.q_max[i]);
            if c != *v {
                *v = c;
                clamped = true;
            }
        }
        clamped
    }

    /// Walks the chain from an explicit world base pose.
    pub fn chain_from(&self, base: &Pose, q: &[f64]) -> Result<ChainState> {
        self.check_dim(q)?;
        let n = self.joint_count();
        let mut frame = *base;
        let mut axes = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        for i in 0..n {
            frame.position += frame.rotation * self.joint_origins[i];
            axes.push(frame.rotation * self.joint_axes[i]);
            origins.push(frame.position);
            frame.rotation *= rot(&self.joint_axes[i], q[i]);
        }
        Ok(ChainState { tcp: frame.compose(&self.tool_transform), axes, origins })
    }

    pub fn fk_from(&self, base: &Pose, q: &[f64]) -> Result<Pose> {
        Ok(self.chain_from(base, q)?.tcp)
    }

    /// Geometric Jacobian from an explicit base, rows `[ω; v]`.
    pub fn jacobian_from(&self, base: &Pose, q: &[f64]) -> Result<Matrix6xX<f64>> {
        Ok(chain_jacobian(&self.chain_from(base, q)?))
    }

    /// Per-joint acceleration magnitudes at `q` (nearest `(q2, q3)` node).
    pub fn accel_limits(&self, q: &[f64]) -> Result<JointVector> {
        self.check_dim(q)?;
        let q2 = q.get(1).copied().unwrap_or(0.0);
        let q3 = q.get(2).copied().unwrap_or(0.0);
        Ok(JointVector::from_column_slice(self.accel_table.lookup(q2, q3)))
    }

    /// Full-pose inverse kinematics from `base` by damped Newton steps seeded at
    /// `seed`. Returns `None` when the iteration does not reach the target
    /// or ends outside the joint limits.
    pub fn inverse_kinematics_from(&self, base: &Pose, target: &Pose, seed: &[f64]) -> Option<JointVector> {
        if seed.len() != self.joint_count() {
            return None;
        }
        let mut q = seed.to_vec();
        for _ in 0..60 {
            let chain = self.chain_from(base, &q).ok()?;
            let w = log_so3(&(target.rotation * chain.tcp.rotation.transpose()));
            let v = target.position - chain.tcp.position;
            if v.norm() < 1e-7 && w.norm() < 1e-10 {
                return self.within_limits(&q).then(|| JointVector::from_vec(q));
            }
            let e = Vector6::new(w.x, w.y, w.z, v.x, v.y, v.z);
            let j = chain_jacobian(&chain);
            let jjt: Matrix6<f64> = &j * j.transpose() + Matrix6::identity() * 1e-8;
            let mut dq = j.transpose() * jjt.cholesky()?.solve(&e);
            let peak = dq.amax();
            if peak > 0.3 {
                dq *= 0.3 / peak;
            }
            for (a, d) in q.iter_mut().zip(dq.iter()) {
                *a += d;
            }
        }
        None
    }

    pub fn inverse_kinematics(&self, target: &Pose, seed: &[f64]) -> Option<JointVector> {
        self.inverse_kinematics_from(&self.base_transform, target, seed)
    }

    /// Loads a model description (TOML); the acceleration table path is
    /// resolved relative to the model file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: RawModel = toml::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), 0, e.to_string()))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let accel_table = match raw.accel_table {
            AccelSource::File(ref rel) => AccelTable::load_csv(&dir.join(rel))?,
            AccelSource::Constant(ref v) => AccelTable::constant(v.clone())?,
        };
        let model = RobotModel {
            name: raw.name,
            joint_axes: raw.joint_axes.iter().map(|a| Vector3::from(*a)).collect(),
            joint_origins: raw.joint_origins.iter().map(|a| Vector3::from(*a)).collect(),
            tool_transform: raw.tool_transform.map(Into::into).unwrap_or_default(),
            q_min: JointVector::from_vec(raw.q_min),
            q_max: JointVector::from_vec(raw.q_max),
            qd_min: JointVector::from_vec(raw.qd_min),
            qd_max: JointVector::from_vec(raw.qd_max),
            accel_table,
            base_transform: raw.base_transform.map(Into::into).unwrap_or_default(),
        };
        if model.joint_count() != raw.joint_count {
            return Err(Error::InvalidModel(format!(
                "joint_count = {} but {} joint axes given",
                raw.joint_count,
                model.joint_count()
            )));
        }
        model.validate()?;
        Ok(model)
    }
}

/// TCP pose in the world frame.
pub fn forward_kinematics(model: &RobotModel, q: &[f64]) -> Result<Pose> {
    model.fk_from(&model.base_transform, q)
}

/// Geometric Jacobian of the TCP in the world frame; rows are `[ω (rad/s); v (mm/s)]`.
pub fn jacobian(model: &RobotModel, q: &[f64]) -> Result<Matrix6xX<f64>> {
    model.jacobian_from(&model.base_transform, q)
}

/// Symmetric acceleration bound `q̈max = −q̈min` at configuration `q`.
pub fn accel_limits(model: &RobotModel, q: &[f64]) -> Result<JointVector> {
    model.accel_limits(q)
}

pub fn chain_jacobian(chain: &ChainState) -> Matrix6xX<f64> {
    let n = chain.axes.len();
    let mut j = Matrix6xX::zeros(n);
    let p = chain.tcp.position;
    for i in 0..n {
        let z = chain.axes[i];
        let v = z.cross(&(p - chain.origins[i]));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&z);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&v);
    }
    j
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: String,
    joint_count: usize,
    joint_axes: Vec<[f64; 3]>,
    joint_origins: Vec<[f64; 3]>,
    q_min: Vec<f64>,
    q_max: Vec<f64>,
    qd_min: Vec<f64>,
    qd_max: Vec<f64>,
    accel_table: AccelSource,
    tool_transform: Option<RawTransform>,
    base_transform: Option<RawTransform>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AccelSource {
    File(String),
    Constant(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransform {
    /// Row-major rotation matrix.
    rotation: Option<[[f64; 3]; 3]>,
    translation: Option<[f64; 3]>,
}

impl From<RawTransform> for Pose {
    fn from(raw: RawTransform) -> Self {
        let rotation = raw
            .rotation
            .map(|r| Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]))
            .unwrap_or_else(Matrix3::identity);
        let position = raw.translation.map(Vector3::from).unwrap_or_else(Vector3::zeros);
        Pose { rotation, position }
    }
}
