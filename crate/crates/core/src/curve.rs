//! Arc-length parameterized 5-dof target curve: positions `p*` and unit
//! surface normals `n*`.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::diff;
use crate::error::{Error, Result};
use crate::geometry::slerp_unit;

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub lambda: Vec<f64>,
    pub p: Vec<Vector3<f64>>,
    pub n: Vec<Vector3<f64>>,
}

/// Per-sample derivatives with respect to λ.
#[derive(Debug, Clone)]
pub struct CurveDerivatives {
    pub dp: Vec<Vector3<f64>>,
    pub ddp: Vec<Vector3<f64>>,
    pub dn: Vec<Vector3<f64>>,
}

pub const DEFAULT_STEP: f64 = 0.5;

impl Curve {
    /// Builds a curve from raw points; normals are renormalized and λ is the
    /// cumulative chord length.
    pub fn new(p: Vec<Vector3<f64>>, n: Vec<Vector3<f64>>) -> Result<Self> {
        if p.is_empty() || p.len() != n.len() {
            return Err(Error::InvalidArgument(format!("curve needs matching positions and normals ({} vs {})", p.len(), n.len())));
        }
        let mut normals = Vec::with_capacity(n.len());
        for (row, v) in n.iter().enumerate() {
            let norm = v.norm();
            if !(norm > 1e-12) || !norm.is_finite() {
                return Err(Error::DegenerateNormal { row: row + 1 });
            }
            normals.push(v / norm);
        }
        let mut lambda = Vec::with_capacity(p.len());
        lambda.push(0.0);
        for i in 1..p.len() {
            let d = (p[i] - p[i - 1]).norm();
            if !(d > 1e-12) {
                return Err(Error::DuplicatePoint { row: i + 1 });
            }
            lambda.push(lambda[i - 1] + d);
        }
        Ok(Self { lambda, p, n: normals })
    }

    /// Reads a 6-column CSV (px, py, pz, nx, ny, nz); `#` lines and blanks are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let mut p = Vec::new();
        let mut n = Vec::new();
        let mut rows = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(&name, line_no + 1, e.to_string()))?;
            if fields.len() != 6 {
                return Err(Error::parse(&name, line_no + 1, format!("expected 6 columns, found {}", fields.len())));
            }
            p.push(Vector3::new(fields[0], fields[1], fields[2]));
            n.push(Vector3::new(fields[3], fields[4], fields[5]));
            rows.push(line_no + 1);
        }
        if p.len() < 2 {
            return Err(Error::parse(&name, 0, "a curve needs at least two rows"));
        }
        // report file line numbers rather than data-row indices
        Self::new(p, n).map_err(|e| match e {
            Error::DegenerateNormal { row } => Error::DegenerateNormal { row: rows[row - 1] },
            Error::DuplicatePoint { row } => Error::DuplicatePoint { row: rows[row - 1] },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.len() {
            let (p, n) = (self.p[i], self.n[i]);
            out.push_str(&format!("{},{},{},{},{},{}\n", p.x, p.y, p.z, n.x, n.y, n.z));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn length(&self) -> f64 {
        *self.lambda.last().unwrap()
    }

    /// Interpolated `(p*, n*)` at arc length `s`, clamped to the curve.
    pub fn at(&self, s: f64) -> (Vector3<f64>, Vector3<f64>) {
        if self.len() == 1 || s <= 0.0 {
            return (self.p[0], self.n[0]);
        }
        if s >= self.length() {
            return (*self.p.last().unwrap(), *self.n.last().unwrap());
        }
        let i = self.lambda.partition_point(|l| *l <= s).clamp(1, self.len() - 1) - 1;
        let t = (s - self.lambda[i]) / (self.lambda[i + 1] - self.lambda[i]);
        (self.p[i] + (self.p[i + 1] - self.p[i]) * t, slerp_unit(&self.n[i], &self.n[i + 1], t))
    }

    /// Uniform resampling in λ; endpoints are preserved exactly and the final
    /// interval may be shorter than `step`.
    pub fn resample(&self, step: f64) -> Result<Self> {
        let total = self.length();
        if !(step > 0.0) || !(step < total) {
            return Err(Error::InvalidArgument(format!("resample step {step} must lie in (0, {total})")));
        }
        let full = (total / step + 1e-9).floor() as usize;
        let mut lambda: Vec<f64> = (0..=full).map(|k| k as f64 * step).collect();
        let last = *lambda.last().unwrap();
        if total - last > 1e-9 {
            lambda.push(total);
        } else {
            *lambda.last_mut().unwrap() = total;
        }
        let mut p = Vec::with_capacity(lambda.len());
        let mut n = Vec::with_capacity(lambda.len());
        for &s in &lambda {
            let (a, b) = self.at(s);
            p.push(a);
            n.push(b);
        }
        *p.last_mut().unwrap() = *self.p.last().unwrap();
        *n.last_mut().unwrap() = *self.n.last().unwrap();
        Ok(Self { lambda, p, n })
    }

    /// Closest point to `x` on the polyline piece from sample `i` to `i + 1`, as `(distance, λ)`.
    pub fn project_on_segment(&self, i: usize, x: &Vector3<f64>) -> (f64, f64) {
        if i + 1 >= self.len() {
            let j = self.len() - 1;
            return ((self.p[j] - x).norm(), self.lambda[j]);
        }
        let (a, b) = (self.p[i], self.p[i + 1]);
        let d = b - a;
        let t = ((x - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        ((a + d * t - x).norm(), self.lambda[i] + t * (self.lambda[i + 1] - self.lambda[i]))
    }

    /// Closest point over the pieces starting at samples `lo..hi`, as `(distance, λ, piece)`.
    pub fn closest_in(&self, lo: usize, hi: usize, x: &Vector3<f64>) -> (f64, f64, usize) {
        let hi = hi.min(self.len().saturating_sub(1)).max(lo + 1);
        let mut best = (f64::INFINITY, 0.0, lo);
        for i in lo..hi {
            let (d, l) = self.project_on_segment(i, x);
            if d < best.0 {
                best = (d, l, i);
            }
        }
        best
    }

    /// Closest point on the whole polyline.
    pub fn closest(&self, x: &Vector3<f64>) -> (f64, f64, usize) {
        self.closest_in(0, self.len() - 1, x)
    }

    /// Sub-curve over sample indices `start..=end` with λ re-based to zero.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let base = self.lambda[start];
        Self {
            lambda: self.lambda[start..=end].iter().map(|l| l - base).collect(),
            p: self.p[start..=end].to_vec(),
            n: self.n[start..=end].to_vec(),
        }
    }

    /// Derivatives of `p*` and `n*` with respect to λ (three-point stencils).
    pub fn derivatives(&self) -> Result<CurveDerivatives> {
        if self.len() < 3 {
            return Err(Error::InvalidArgument(format!("derivatives need at least 3 samples, got {}", self.len())));
        }
        if !diff::is_uniform(&self.lambda, 1e-9) {
            return Err(Error::NonUniformGrid);
        }
        let m = self.len();
        let mut dp = vec![Vector3::zeros(); m];
        let mut ddp = vec![Vector3::zeros(); m];
        let mut dn = vec![Vector3::zeros(); m];
        for axis in 0..3 {
            let y: Vec<f64> = self.p.iter().map(|v| v[axis]).collect();
            let (d1, d2) = diff::three_point(&self.lambda, &y);
            let yn: Vec<f64> = self.n.iter().map(|v| v[axis]).collect();
            let (n1, _) = diff::three_point(&self.lambda, &yn);
            for i in 0..m {
                dp[i][axis] = d1[i];
                ddp[i][axis] = d2[i];
                dn[i][axis] = n1[i];
            }
        }
        Ok(CurveDerivatives { dp, ddp, dn })
    }
}
