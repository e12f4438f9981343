//! Relative tracking error and speed statistics of an executed trace.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::geometry::{angle_between, Pose};
use crate::relative_ik::DualArm;
use crate::sim::{relative_trace, ExecutionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed σ(μ)/μ_avg, as a fraction.
    pub eps_speed: f64,
    /// mm.
    pub eps_pos: f64,
    /// deg.
    pub eps_norm: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { eps_speed: 0.05, eps_pos: 0.5, eps_norm: 3.0 }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_speed", self.eps_speed), ("eps_pos", self.eps_pos), ("eps_norm", self.eps_norm)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn satisfied_by(&self, m: &Metrics) -> bool {
        m.max_pos_err <= self.eps_pos && m.max_norm_err <= self.eps_norm && m.speed_std_ratio <= 100.0 * self.eps_speed
    }
}

/// Relative state of one record sample against its closest curve point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    /// Robot 1 TCP in robot 2's TCP frame.
    pub rel: Pose,
    /// Arc length of the closest curve point.
    pub lambda: f64,
    /// `rel.position` minus the closest curve point, robot 2 TCP frame.
    pub error: Vector3<f64>,
    /// Angle between the tool axis and the reversed curve normal, rad.
    pub normal_error: f64,
    /// Distance past the nearest curve end along its tangent, zero inside.
    pub overshoot: f64,
    /// Finite-difference relative speed, mm/s.
    pub speed: f64,
}

/// Closest-point tracking of every record sample, searched in a window that
/// follows the previous sample with a global search as fallback.
pub fn track(record: &ExecutionRecord, curve: &Curve, arm: &DualArm) -> Result<Vec<TrackPoint>> {
    let rel = relative_trace(record, arm)?;
    let last = curve.len() - 1;
    let end = curve.length();
    let mut out = Vec::with_capacity(rel.len());
    let mut prev: Option<usize> = None;
    for pose in &rel {
        let x = pose.position;
        let (_, l, i) = match prev {
            Some(i) => {
                let (lo, hi) = (i.saturating_sub(20), (i + 60).min(last));
                let hit = curve.closest_in(lo, hi, &x);
                let on_edge = (hit.2 == lo && lo > 0) || (hit.2 + 1 == hi && hi < last);
                if on_edge {
                    curve.closest(&x)
                } else {
                    hit
                }
            }
            None => curve.closest(&x),
        };
        prev = Some(i);
        let (p, n) = curve.at(l);
        let overshoot = if l <= 0.0 {
            (x - p).dot(&(curve.p[0] - curve.p[1]).normalize()).max(0.0)
        } else if l >= end {
            (x - p).dot(&(curve.p[last] - curve.p[last - 1]).normalize()).max(0.0)
        } else {
            0.0
        };
        out.push(TrackPoint {
            rel: *pose,
            lambda: l,
            error: x - p,
            normal_error: angle_between(&pose.z_axis(), &-n),
            overshoot,
            speed: 0.0,
        });
    }
    let m = out.len();
    for k in 0..m {
        let (a, b) = (k.saturating_sub(1), (k + 1).min(m - 1));
        if a == b {
            continue;
        }
        out[k].speed = (out[b].rel.position - out[a].rel.position).norm() / (record.t[b] - record.t[a]);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// mm.
    pub max_pos_err: f64,
    /// deg.
    pub max_norm_err: f64,
    /// mm/s.
    pub mu_avg: f64,
    /// σ(μ)/μ_avg in percent.
    pub speed_std_ratio: f64,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    /// mm.
    pub pos_err: Vec<f64>,
    /// deg.
    pub norm_err: Vec<f64>,
    /// mm/s.
    pub speed: Vec<f64>,
    /// Sample counts towards the statistics.
    pub inside: Vec<bool>,
}

impl Metrics {
    /// Per-sample CSV: t, lambda, pos_err, norm_err, speed, inside.
    pub fn save_trace(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,lambda,pos_err,norm_err,speed,inside\n");
        for i in 0..self.t.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.t[i],
                self.lambda[i],
                self.pos_err[i],
                self.norm_err[i],
                self.speed[i],
                u8::from(self.inside[i])
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn summary(&self) -> String {
        format!(
            "max_pos_err = {:.4}\nmax_norm_err = {:.4}\nmu_avg = {:.3}\nspeed_std_ratio = {:.4}\n",
            self.max_pos_err, self.max_norm_err, self.mu_avg, self.speed_std_ratio
        )
    }
}

/// Scalar results of one evaluated program, as persisted next to its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSummary {
    pub success: bool,
    /// Commanded relative speed, mm/s, when the program records one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_cmd: Option<f64>,
    pub max_pos_err: f64,
    pub max_norm_err: f64,
    pub mu_avg: f64,
    pub speed_std_ratio: f64,
}

impl MetricsSummary {
    pub fn new(m: &Metrics, mu_cmd: Option<f64>, success: bool) -> Self {
        Self {
            success,
            mu_cmd,
            max_pos_err: m.max_pos_err,
            max_norm_err: m.max_norm_err,
            mu_avg: m.mu_avg,
            speed_std_ratio: m.speed_std_ratio,
        }
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

/// Scores a record. Samples past either curve end (lead-in and lead-out) are
/// left out.
pub fn compute_metrics(record: &ExecutionRecord, curve: &Curve, arm: &DualArm, tol: &Tolerances) -> Result<Metrics> {
    tol.validate()?;
    let tr = track(record, curve, arm)?;
    metrics_from_track(record, &tr)
}

pub fn metrics_from_track(record: &ExecutionRecord, tr: &[TrackPoint]) -> Result<Metrics> {
    let inside: Vec<bool> = tr.iter().map(|p| p.overshoot <= 1e-6).collect();
    let count = inside.iter().filter(|v| **v).count();
    if count < 3 {
        return Err(Error::RecordTooShort(count));
    }
    let pos_err: Vec<f64> = tr.iter().map(|p| p.error.norm()).collect();
    let norm_err: Vec<f64> = tr.iter().map(|p| p.normal_error.to_degrees()).collect();
    let speed: Vec<f64> = tr.iter().map(|p| p.speed).collect();
    let pick = |v: &[f64]| -> Vec<f64> { v.iter().zip(&inside).filter(|(_, k)| **k).map(|(x, _)| *x).collect() };
    let (pe, ne, sp) = (pick(&pos_err), pick(&norm_err), pick(&speed));
    let mu_avg = sp.iter().sum::<f64>() / count as f64;
    let var = sp.iter().map(|v| (v - mu_avg).powi(2)).sum::<f64>() / count as f64;
    let speed_std_ratio = if mu_avg > 0.0 { 100.0 * var.sqrt() / mu_avg } else { f64::INFINITY };
    Ok(Metrics {
        max_pos_err: pe.iter().copied().fold(0.0, f64::max),
        max_norm_err: ne.iter().copied().fold(0.0, f64::max),
        mu_avg,
        speed_std_ratio,
        t: record.t.clone(),
        lambda: tr.iter().map(|p| p.lambda).collect(),
        pos_err,
        norm_err,
        speed,
        inside,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::test_models::{six_r, small_six_r};
    use crate::kinematics::JointVector;
    use crate::relative_ik::test_setup::*;
    use crate::relative_ik::IkOptions;

    const DT: f64 = 0.004;

    /// Record that moves the relative tool through `s[i]` mm along a straight
    /// curve, optionally offset along the curve normal.
    fn record_at(arm: &DualArm, curve: &Curve, s: &[f64], offset: f64) -> ExecutionRecord {
        let dir = (curve.p[1] - curve.p[0]).normalize();
        let side = (curve.n[0] - dir * dir.dot(&curve.n[0])).normalize();
        let pts: Vec<Vector3<f64>> = s.iter().map(|l| curve.at(*l).0 + side * offset).collect();
        let target = Curve::new(pts, vec![curve.n[0]; s.len()]).unwrap();
        let path = arm.solve_path(&Q1, &Q2, &target, &IkOptions::default()).unwrap();
        ExecutionRecord {
            t: (0..s.len()).map(|i| i as f64 * DT).collect(),
            q1: path.q1,
            q2: path.q2,
            waypoint_times: vec![],
            saturated: vec![],
        }
    }

    fn setup() -> (crate::kinematics::RobotModel, crate::kinematics::RobotModel) {
        (six_r(), small_six_r())
    }

    #[test]
    fn summary_round_trips() {
        let m = Metrics {
            max_pos_err: 0.1,
            max_norm_err: 0.2,
            mu_avg: 300.0 / 7.0,
            speed_std_ratio: 1.0 / 3.0,
            t: vec![],
            lambda: vec![],
            pos_err: vec![],
            norm_err: vec![],
            speed: vec![],
            inside: vec![],
        };
        let s = MetricsSummary::new(&m, Some(50.0), true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        s.save(&path).unwrap();
        assert_eq!(MetricsSummary::load(&path).unwrap(), s);
    }

    #[test]
    fn exact_trace_at_constant_speed() {
        let (m1, m2) = setup();
        let arm = DualArm::new(&m1, &m2, planar());
        let curve = straight_curve(&arm, 60.0);
        let s: Vec<f64> = (0..=150).map(|i| i as f64 * 100.0 * DT).collect();
        let m = compute_metrics(&record_at(&arm, &curve, &s, 0.0), &curve, &arm, &Tolerances::default()).unwrap();
        assert!(m.max_pos_err <= 0.25, "{}", m.max_pos_err);
        assert!(m.max_norm_err < 1e-3);
        assert!((m.mu_avg - 100.0).abs() <= 1.0, "{}", m.mu_avg);
        assert!(m.speed_std_ratio < 0.5, "{}", m.speed_std_ratio);
        assert_eq!(m.t.len(), m.pos_err.len());
    }

    #[test]
    fn rigid_normal_offset_is_measured() {
        let (m1, m2) = setup();
        let arm = DualArm::new(&m1, &m2, planar());
        let curve = straight_curve(&arm, 60.0);
        let s: Vec<f64> = (0..=150).map(|i| i as f64 * 0.4).collect();
        let m = compute_metrics(&record_at(&arm, &curve, &s, 0.3), &curve, &arm, &Tolerances::default()).unwrap();
        assert!((m.max_pos_err - 0.3).abs() <= 0.25);
        assert!((m.max_pos_err - 0.3).abs() <= 1e-3, "{}", m.max_pos_err);
    }

    #[test]
    fn two_level_speed_gives_ten_percent() {
        let (m1, m2) = setup();
        let arm = DualArm::new(&m1, &m2, planar());
        let curve = straight_curve(&arm, 60.0);
        // equal time at 90 and 110 mm/s: σ = 10, mean = 100
        let mut s = vec![0.0];
        for i in 0..140 {
            let v = if (i / 10) % 2 == 0 { 90.0 } else { 110.0 };
            s.push(s.last().unwrap() + v * DT);
        }
        let m = compute_metrics(&record_at(&arm, &curve, &s, 0.0), &curve, &arm, &Tolerances::default()).unwrap();
        assert!((m.mu_avg - 100.0).abs() < 1.0, "{}", m.mu_avg);
        // each level switch blends one central difference
        assert!((m.speed_std_ratio - 10.0).abs() < 0.6, "{}", m.speed_std_ratio);
    }

    #[test]
    fn lead_in_and_out_are_gated() {
        let (m1, m2) = setup();
        let arm = DualArm::new(&m1, &m2, planar());
        let curve = straight_curve(&arm, 60.0);
        let dir = (curve.p[1] - curve.p[0]).normalize();
        let ext = Curve::new(vec![curve.p[0] - dir * 20.0, curve.p[curve.len() - 1] + dir * 20.0], vec![curve.n[0]; 2]).unwrap();
        let s: Vec<f64> = (0..=250).map(|i| i as f64 * 0.4).collect();
        let rec = record_at(&arm, &ext, &s, 0.0);
        let m = compute_metrics(&rec, &curve, &arm, &Tolerances::default()).unwrap();
        let inside = m.inside.iter().filter(|v| **v).count();
        // 60 mm at 0.4 mm per sample
        assert!((inside as i64 - 151).abs() <= 1, "{inside}");
        assert!(!m.inside[0] && !m.inside[250]);
        assert!(m.max_pos_err <= 0.25, "{}", m.max_pos_err);
    }

    #[test]
    fn short_record_is_rejected() {
        let (m1, m2) = setup();
        let arm = DualArm::new(&m1, &m2, planar());
        let curve = straight_curve(&arm, 60.0);
        let q1 = JointVector::from_column_slice(&Q1);
        let q2 = JointVector::from_column_slice(&Q2);
        let rec = ExecutionRecord { t: vec![0.0, DT], q1: vec![q1.clone(), q1], q2: vec![q2.clone(), q2], waypoint_times: vec![], saturated: vec![] };
        assert!(matches!(compute_metrics(&rec, &curve, &arm, &Tolerances::default()), Err(Error::RecordTooShort(2))));
    }

    #[test]
    fn tolerances_check_all_three_limits() {
        let tol = Tolerances::default();
        tol.validate().unwrap();
        assert!(Tolerances { eps_pos: 0.0, ..tol }.validate().is_err());
        let m = Metrics {
            max_pos_err: 0.4,
            max_norm_err: 2.0,
            mu_avg: 100.0,
            speed_std_ratio: 4.0,
            t: vec![],
            lambda: vec![],
            pos_err: vec![],
            norm_err: vec![],
            speed: vec![],
            inside: vec![],
        };
        assert!(tol.satisfied_by(&m));
        assert!(!tol.satisfied_by(&Metrics { speed_std_ratio: 6.0, ..m.clone() }));
        assert!(!tol.satisfied_by(&Metrics { max_norm_err: 3.5, ..m }));
    }
}
