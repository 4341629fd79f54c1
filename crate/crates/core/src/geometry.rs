//! Points, segments, homographies and the segment distances used by the
//! detector, the refinement and the evaluation metrics.
//!
//! Image coordinates have their origin at the top-left corner of the image,
//! x to the right and y downwards. The center of pixel `(i, j)` sits at
//! `(i + 0.5, j + 0.5)`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::vp::VanishingPoint;

const PROJECTION_EPS: f64 = 1e-12;
const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A line segment between two image points.
///
/// Endpoint order carries no meaning outside of oriented-angle handling; the
/// orientation is always reported modulo pi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub p1: Point2,
    pub p2: Point2,
}

impl LineSegment {
    pub fn new(p1: Point2, p2: Point2) -> Result<Self> {
        if !p1.is_finite() || !p2.is_finite() {
            return Err(Error::DegenerateConfiguration("non-finite segment endpoint"));
        }
        if p1.distance(&p2) <= 0.0 {
            return Err(Error::DegenerateConfiguration("zero-length segment"));
        }
        Ok(Self { p1, p2 })
    }

    pub fn from_coords(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::new(Point2::new(x1, y1), Point2::new(x2, y2))
    }

    pub fn length(&self) -> f64 {
        self.p1.distance(&self.p2)
    }

    pub fn midpoint(&self) -> Point2 {
        Point2::new(0.5 * (self.p1.x + self.p2.x), 0.5 * (self.p1.y + self.p2.y))
    }

    /// Unit direction from `p1` to `p2`.
    pub fn direction(&self) -> (f64, f64) {
        let len = self.length();
        ((self.p2.x - self.p1.x) / len, (self.p2.y - self.p1.y) / len)
    }

    /// Orientation in `[0, pi)`.
    pub fn orientation(&self) -> f64 {
        let a = (self.p2.y - self.p1.y).atan2(self.p2.x - self.p1.x);
        wrap_angle(a, PI)
    }

    /// Coefficients `(a, b, c)` of the infinite line `a x + b y + c = 0`,
    /// scaled to unit Euclidean norm.
    pub fn homogeneous_line(&self) -> Vector3<f64> {
        let l = self.p1.homogeneous().cross(&self.p2.homogeneous());
        l / l.norm()
    }

    /// Point at parameter `t` in `[0, 1]` along the segment.
    pub fn point_at(&self, t: f64) -> Point2 {
        Point2::new(
            self.p1.x + t * (self.p2.x - self.p1.x),
            self.p1.y + t * (self.p2.y - self.p1.y),
        )
    }

    /// `n` equally spaced points, both endpoints included.
    pub fn sample_points(&self, n: usize) -> Vec<Point2> {
        match n {
            0 => Vec::new(),
            1 => vec![self.midpoint()],
            _ => (0..n)
                .map(|i| self.point_at(i as f64 / (n - 1) as f64))
                .collect(),
        }
    }

    pub fn reversed(&self) -> Self {
        Self { p1: self.p2, p2: self.p1 }
    }
}

/// Reduce `a` into `[0, period)`.
pub fn wrap_angle(a: f64, period: f64) -> f64 {
    let r = a.rem_euclid(period);
    // rem_euclid can return `period` itself for tiny negative inputs
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Reduce `a` into `(-period/2, period/2]`.
pub fn wrap_signed(a: f64, period: f64) -> f64 {
    let half = 0.5 * period;
    if a > -half && a <= half {
        return a;
    }
    let r = wrap_angle(a + half, period) - half;
    if r <= -half {
        r + period
    } else {
        r
    }
}

/// Circular distance between two angles for the given period (pi or 2pi).
/// The result lies in `[0, period / 2]`.
pub fn circular_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = wrap_angle(a - b, period);
    d.min(period - d)
}

/// Circular distance modulo pi, the metric used for line orientations.
pub fn circular_distance_pi(a: f64, b: f64) -> f64 {
    circular_distance(a, b, PI)
}

/// Euclidean distance from `p` to the closest point of the closed segment.
pub fn point_segment_distance(p: &Point2, l: &LineSegment) -> f64 {
    let dx = l.p2.x - l.p1.x;
    let dy = l.p2.y - l.p1.y;
    let len2 = dx * dx + dy * dy;
    let t = (((p.x - l.p1.x) * dx + (p.y - l.p1.y) * dy) / len2).clamp(0.0, 1.0);
    let cx = l.p1.x + t * dx;
    let cy = l.p1.y + t * dy;
    (p.x - cx).hypot(p.y - cy)
}

/// Distance from `p` to the infinite line supporting `l`.
pub fn point_line_distance(p: &Point2, l: &LineSegment) -> f64 {
    let line = l.homogeneous_line();
    (line.dot(&p.homogeneous())).abs() / line.x.hypot(line.y)
}

/// Mean endpoint-to-endpoint distance under the better of the two pairings.
pub fn structural_distance(l1: &LineSegment, l2: &LineSegment) -> f64 {
    let direct = 0.5 * (l1.p1.distance(&l2.p1) + l1.p2.distance(&l2.p2));
    let swapped = 0.5 * (l1.p1.distance(&l2.p2) + l1.p2.distance(&l2.p1));
    direct.min(swapped)
}

/// Symmetrized orthogonal distance: mean of the four endpoint distances to
/// the other segment's infinite line.
pub fn orthogonal_distance(l1: &LineSegment, l2: &LineSegment) -> f64 {
    0.25 * (point_line_distance(&l1.p1, l2)
        + point_line_distance(&l1.p2, l2)
        + point_line_distance(&l2.p1, l1)
        + point_line_distance(&l2.p2, l1))
}

/// Distance between a segment and a vanishing point: the mean perpendicular
/// distance of the endpoints to the line joining the segment midpoint and the
/// VP. Returns `f64::INFINITY` when the VP coincides with the midpoint.
pub fn d_vp(l: &LineSegment, v: &VanishingPoint) -> f64 {
    d_vp_raw(l, v.as_vector())
}

pub(crate) fn d_vp_raw(l: &LineSegment, v: &Vector3<f64>) -> f64 {
    let m = l.midpoint().homogeneous();
    let line = m.cross(v);
    let norm = line.x.hypot(line.y);
    // relative check: the line coefficients scale with ‖v‖
    if norm <= 1e-12 * v.norm().max(f64::MIN_POSITIVE) || !norm.is_finite() {
        return f64::INFINITY;
    }
    let d1 = line.dot(&l.p1.homogeneous()).abs() / norm;
    let d2 = line.dot(&l.p2.homogeneous()).abs() / norm;
    0.5 * (d1 + d2)
}

/// Clip a segment to the axis-aligned box (Liang–Barsky). Returns `None` when
/// nothing of positive length remains inside.
pub fn clip_segment(
    l: &LineSegment,
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
) -> Option<LineSegment> {
    let dx = l.p2.x - l.p1.x;
    let dy = l.p2.y - l.p1.y;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    let checks = [
        (-dx, l.p1.x - xmin),
        (dx, xmax - l.p1.x),
        (-dy, l.p1.y - ymin),
        (dy, ymax - l.p1.y),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 >= t1 {
        return None;
    }
    let a = if t0 > 0.0 { l.point_at(t0) } else { l.p1 };
    let b = if t1 < 1.0 { l.point_at(t1) } else { l.p2 };
    LineSegment::new(a, b).ok()
}

/// A 3x3 projective transform acting on image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    /// Build from a matrix, normalizing so that `m[2][2] = 1` when possible
    /// (unit Frobenius norm otherwise).
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularHomography);
        }
        let scale = if m[(2, 2)].abs() > SINGULAR_EPS {
            m[(2, 2)]
        } else {
            m.norm()
        };
        if scale == 0.0 {
            return Err(Error::SingularHomography);
        }
        let m = m / scale;
        if m.determinant().abs() <= SINGULAR_EPS {
            return Err(Error::SingularHomography);
        }
        Ok(Self { m })
    }

    pub fn from_row_major(values: [f64; 9]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(&values))
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = self.m[(r, c)];
            }
        }
        out
    }

    pub fn inverse(&self) -> Self {
        // invertibility is checked at construction
        let inv = self.m.try_inverse().expect("homography is invertible");
        Self::new(inv).unwrap_or(Self { m: inv })
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::new(self.m * other.m)
    }

    pub fn apply_point(&self, p: &Point2) -> Result<Point2> {
        let q = self.m * p.homogeneous();
        if q.z.abs() <= PROJECTION_EPS {
            return Err(Error::DegenerateProjection { w: q.z });
        }
        Ok(Point2::new(q.x / q.z, q.y / q.z))
    }

    pub fn apply_segment(&self, l: &LineSegment) -> Result<LineSegment> {
        let a = self.apply_point(&l.p1)?;
        let b = self.apply_point(&l.p2)?;
        LineSegment::new(a, b)
    }
}

/// Pinhole intrinsics, used to lift image VPs to 3D directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidParameter("focal lengths must be positive"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Unit 3D direction `normalize(K^-1 v)` of a homogeneous image point.
    pub fn back_project(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let d = Vector3::new(
            (v.x - self.cx * v.z) / self.fx,
            (v.y - self.cy * v.z) / self.fy,
            v.z,
        );
        d / d.norm()
    }
}
