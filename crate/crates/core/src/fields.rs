//! Distance and angle fields: rendering from segments, normalization,
//! training losses, the surrogate gradient and sub-pixel sampling.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    circular_distance, circular_distance_pi, point_segment_distance, wrap_angle, wrap_signed,
    LineSegment, Point2,
};

/// Largest normalized distance used by the losses; distances below
/// `r * exp(-MAX_NORMALIZED_DISTANCE)` are clamped before the log.
pub const MAX_NORMALIZED_DISTANCE: f64 = 10.0;

/// A row-major `height x width` grid of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                got_w: data.len(),
                got_h: 1,
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain { what: "field value", value: *v });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_shape(&self, other: &ScalarField) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: other.width,
                got_h: other.height,
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sample at an image-coordinate point (pixel centers at `+0.5`).
    pub fn sample_at(&self, p: &Point2, mode: SampleMode) -> Result<f64> {
        bilinear_sample(self, &Point2::new(p.x - 0.5, p.y - 0.5), mode)
    }

    /// Whether an image-coordinate point can be sampled.
    pub fn contains(&self, p: &Point2) -> bool {
        let x = p.x - 0.5;
        let y = p.y - 0.5;
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }
}

/// Distance field, angle field and the line-region radius they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub df: ScalarField,
    pub af: ScalarField,
    pub r: f64,
}

impl FieldPair {
    pub fn new(df: ScalarField, af: ScalarField, r: f64) -> Result<Self> {
        df.same_shape(&af)?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain { what: "line-region radius", value: r });
        }
        Ok(Self { df, af, r })
    }

    pub fn width(&self) -> usize {
        self.df.width()
    }

    pub fn height(&self) -> usize {
        self.df.height()
    }
}

/// Render the distance and angle fields of a set of segments.
///
/// Every pixel center gets the distance to its nearest segment and that
/// segment's orientation; equidistant segments resolve to the lowest index.
pub fn render_fields(lines: &[LineSegment], width: usize, height: usize, r: f64) -> Result<FieldPair> {
    if lines.is_empty() {
        return Err(Error::EmptyLines);
    }
    let orientations: Vec<f64> = lines.iter().map(LineSegment::orientation).collect();
    let mut df = vec![0.0; width * height];
    let mut af = vec![0.0; width * height];
    df.par_chunks_mut(width.max(1))
        .zip(af.par_chunks_mut(width.max(1)))
        .enumerate()
        .for_each(|(y, (df_row, af_row))| {
            for x in 0..width {
                let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                let mut best = f64::INFINITY;
                let mut best_idx = 0;
                for (i, l) in lines.iter().enumerate() {
                    let d = point_segment_distance(&p, l);
                    if d < best {
                        best = d;
                        best_idx = i;
                    }
                }
                df_row[x] = best;
                af_row[x] = orientations[best_idx];
            }
        });
    FieldPair::new(
        ScalarField { width, height, data: df },
        ScalarField { width, height, data: af },
        r,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormDirection {
    /// `D -> -ln(D / r)`
    Forward,
    /// `Dn -> r * exp(-Dn)`
    Inverse,
}

/// Log-normalization of distance-field values.
pub fn df_normalize(value: f64, r: f64, direction: NormDirection) -> Result<f64> {
    match direction {
        NormDirection::Forward => {
            if !(value > 0.0 && value <= r) {
                return Err(Error::Domain { what: "normalized distance (forward)", value });
            }
            Ok(-(value / r).ln())
        }
        NormDirection::Inverse => {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::Domain { what: "normalized distance (inverse)", value });
            }
            Ok(r * (-value).exp())
        }
    }
}

fn clamped_normalized(d: f64, r: f64) -> f64 {
    let floor = r * (-MAX_NORMALIZED_DISTANCE).exp();
    -(d.clamp(floor, r) / r).ln()
}

/// Pixels supervised during training: ground-truth distance below `r`.
pub fn supervision_mask(gt: &FieldPair) -> Vec<bool> {
    gt.df.data().iter().map(|&d| d < gt.r).collect()
}

/// L1 loss on normalized distances and circular RMS loss on angles, both
/// averaged over the masked pixels. Distances are clamped to
/// `[r * exp(-MAX_NORMALIZED_DISTANCE), r]` before normalization.
pub fn field_losses(pred: &FieldPair, gt: &FieldPair, mask: &[bool]) -> Result<(f64, f64)> {
    pred.df.same_shape(&gt.df)?;
    if mask.len() != gt.df.data().len() {
        return Err(Error::DimensionMismatch {
            expected_w: gt.width(),
            expected_h: gt.height(),
            got_w: mask.len(),
            got_h: 1,
        });
    }
    let mut n = 0usize;
    let mut l1 = 0.0;
    let mut sq = 0.0;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        n += 1;
        let dn_pred = clamped_normalized(pred.df.data()[i], pred.r);
        let dn_gt = clamped_normalized(gt.df.data()[i], gt.r);
        l1 += (dn_pred - dn_gt).abs();
        let da = circular_distance_pi(pred.af.data()[i], gt.af.data()[i]);
        sq += da * da;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((l1 / n as f64, (sq / n as f64).sqrt()))
}

/// Surrogate image gradient: magnitude `max(0, r - D)` and angle `A - pi/2`
/// in `(-pi/2, pi/2]`.
pub fn surrogate_gradient(fp: &FieldPair) -> (ScalarField, ScalarField) {
    let r = fp.r;
    (
        fp.df.map(|d| (r - d).max(0.0)),
        fp.af.map(|a| wrap_signed(a - 0.5 * PI, PI)),
    )
}

/// Lift mod-pi gradient angles to oriented angles in `(-pi, pi]` using the
/// image gradient direction.
pub fn orient_angles(theta: &ScalarField, image_grad_angle: &ScalarField) -> Result<ScalarField> {
    theta.same_shape(image_grad_angle)?;
    let data = theta
        .data()
        .iter()
        .zip(image_grad_angle.data())
        .map(|(&t, &ti)| {
            let keep = circular_distance(t, ti, 2.0 * PI) < circular_distance(t - PI, ti, 2.0 * PI);
            let o = if keep { t } else { t - PI };
            wrap_signed(o, 2.0 * PI)
        })
        .collect();
    Ok(ScalarField { width: theta.width, height: theta.height, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Linear,
    /// Angles modulo pi, interpolated through `(cos 2a, sin 2a)`.
    CircularPi,
}

/// Bilinear interpolation at `p` given in pixel-index coordinates, i.e. the
/// value of pixel `(i, j)` sits exactly at `(i, j)`.
pub fn bilinear_sample(f: &ScalarField, p: &Point2, mode: SampleMode) -> Result<f64> {
    let (w, h) = (f.width, f.height);
    if w == 0 || h == 0 || !p.is_finite() || p.x < 0.0 || p.y < 0.0 || p.x > (w - 1) as f64 || p.y > (h - 1) as f64 {
        return Err(Error::OutOfBounds { x: p.x, y: p.y });
    }
    let x0 = (p.x.floor() as usize).min(w.saturating_sub(2));
    let y0 = (p.y.floor() as usize).min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let tx = p.x - x0 as f64;
    let ty = p.y - y0 as f64;
    let weights = [
        ((1.0 - tx) * (1.0 - ty), f.get(x0, y0)),
        (tx * (1.0 - ty), f.get(x1, y0)),
        ((1.0 - tx) * ty, f.get(x0, y1)),
        (tx * ty, f.get(x1, y1)),
    ];
    match mode {
        SampleMode::Linear => Ok(weights.iter().map(|(w, v)| w * v).sum()),
        SampleMode::CircularPi => {
            let (mut c, mut s) = (0.0, 0.0);
            for (w, v) in weights {
                c += w * (2.0 * v).cos();
                s += w * (2.0 * v).sin();
            }
            Ok(wrap_angle(0.5 * s.atan2(c), PI))
        }
    }
}
