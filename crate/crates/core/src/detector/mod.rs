//! Line segment detection on image gradients or on surrogate field
//! gradients, plus the field-consistency filter.

use std::f64::consts::PI;

use crate::error::Result;
use crate::fields::{orient_angles, surrogate_gradient, FieldPair, SampleMode, ScalarField};
use crate::geometry::{circular_distance_pi, clip_segment, LineSegment};

mod gradient;
mod lsd;

pub use gradient::{gaussian_blur, gaussian_rescale, image_gradient, orientation_gradient_angle};
pub use lsd::{extract_raw, log_gamma, nfa, RawDetection};

/// Smoothing applied to the companion image before orienting field angles.
pub const ORIENTATION_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnglePeriod {
    /// Unoriented angles: opposite gradients are considered aligned.
    Pi,
    /// Oriented angles, as produced by image gradients.
    TwoPi,
}

impl AnglePeriod {
    pub fn radians(self) -> f64 {
        match self {
            AnglePeriod::Pi => PI,
            AnglePeriod::TwoPi => 2.0 * PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    /// Pixels with magnitude at or below this are never used.
    pub mag_threshold: f64,
    /// Half-width of the alignment cone, radians.
    pub angle_tolerance: f64,
    pub density_threshold: f64,
    /// Rectangles are accepted when `log10(NFA) <= log_nfa_max`.
    pub log_nfa_max: f64,
    pub n_bins: usize,
    pub angle_period: AnglePeriod,
    /// Region-radius reductions tried before a region is dropped.
    pub max_radius_retries: usize,
    /// Optional Gaussian pre-scaling for image input (classical LSD uses 0.8).
    pub prescale: Option<f64>,
}

impl Default for DetectorParams {
    /// Parameters for surrogate fields with an orientation source.
    fn default() -> Self {
        Self {
            mag_threshold: 3.0,
            angle_tolerance: 22.5_f64.to_radians(),
            density_threshold: 0.7,
            log_nfa_max: 0.0,
            n_bins: 1024,
            angle_period: AnglePeriod::TwoPi,
            max_radius_retries: 5,
            prescale: None,
        }
    }
}

impl DetectorParams {
    /// Parameters for raw 8-bit images: the gradient threshold is the one
    /// implied by a quantization error of 2 gray levels.
    pub fn classical() -> Self {
        let angle_tolerance = 22.5_f64.to_radians();
        Self {
            mag_threshold: 2.0 / angle_tolerance.sin(),
            angle_tolerance,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    pub n_f: usize,
    pub eta_df: f64,
    pub eta_theta: f64,
    pub min_inlier_frac: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { n_f: 50, eta_df: 1.5, eta_theta: PI / 9.0, min_inlier_frac: 0.5 }
    }
}

fn to_segments(raw: &[RawDetection], offset: f64, scale: f64) -> Vec<LineSegment> {
    raw.iter()
        .filter_map(|d| {
            LineSegment::from_coords(
                (d.x1 + offset) / scale,
                (d.y1 + offset) / scale,
                (d.x2 + offset) / scale,
                (d.y2 + offset) / scale,
            )
            .ok()
        })
        .collect()
}

/// Extract segments from a magnitude field and gradient-angle field whose
/// values sit at pixel centers. Output is in image coordinates.
pub fn lsd_extract(magnitude: &ScalarField, angle: &ScalarField, params: &DetectorParams) -> Vec<LineSegment> {
    to_segments(&extract_raw(magnitude, angle, params), 0.5, 1.0)
}

/// Fraction of the `n_f` samples along `line` that agree with the fields.
/// `None` when no part of the line lies inside the sampleable area.
pub fn inlier_fraction(line: &LineSegment, fp: &FieldPair, params: &FilterParams) -> Option<f64> {
    let (w, h) = (fp.width() as f64, fp.height() as f64);
    let clipped = clip_segment(line, 0.5, 0.5, w - 0.5, h - 0.5)?;
    let theta = line.orientation();
    let samples = clipped.sample_points(params.n_f);
    let inliers = samples
        .iter()
        .filter(|p| {
            let (Ok(d), Ok(a)) = (fp.df.sample_at(p, SampleMode::Linear), fp.af.sample_at(p, SampleMode::CircularPi))
            else {
                return false;
            };
            d < params.eta_df && circular_distance_pi(a, theta) < params.eta_theta
        })
        .count();
    Some(inliers as f64 / samples.len() as f64)
}

/// Keep the lines supported by the distance and angle fields.
pub fn filter_lines(lines: &[LineSegment], fp: &FieldPair, params: &FilterParams) -> Vec<LineSegment> {
    lines
        .iter()
        .filter(|l| inlier_fraction(l, fp, params).is_some_and(|f| f >= params.min_inlier_frac))
        .copied()
        .collect()
}

/// Input to [`detect`].
#[derive(Debug, Clone, Copy)]
pub enum DetectSource<'a> {
    /// Grayscale image; detection on its 2x2 gradient.
    Image(&'a ScalarField),
    /// Distance/angle fields, optionally with the image they belong to so
    /// angles can be oriented.
    Fields {
        fields: &'a FieldPair,
        image: Option<&'a ScalarField>,
    },
}

/// Full detection pipeline.
///
/// In field mode the angle period is chosen from the presence of the
/// companion image (2pi when orienting, pi otherwise), overriding
/// `params.angle_period`.
pub fn detect(source: DetectSource<'_>, params: &DetectorParams, filter: Option<&FilterParams>) -> Result<Vec<LineSegment>> {
    match source {
        DetectSource::Image(image) => {
            let (img, scale) = match params.prescale {
                Some(s) if s != 1.0 => (gaussian_rescale(image, s, 0.6)?, s),
                _ => (image.clone(), 1.0),
            };
            let (mag, ang) = image_gradient(&img)?;
            // 2x2 gradients sit on pixel corners, one full pixel from the origin
            Ok(to_segments(&extract_raw(&mag, &ang, params), 1.0, scale))
        }
        DetectSource::Fields { fields, image } => {
            let (mag, theta) = surrogate_gradient(fields);
            let mut params = params.clone();
            let angle = match image {
                Some(img) => {
                    fields.df.same_shape(img)?;
                    params.angle_period = AnglePeriod::TwoPi;
                    let grad = orientation_gradient_angle(img, ORIENTATION_SIGMA)?;
                    orient_angles(&theta, &grad)?
                }
                None => {
                    params.angle_period = AnglePeriod::Pi;
                    theta
                }
            };
            let lines = lsd_extract(&mag, &angle, &params);
            Ok(match filter {
                Some(f) => filter_lines(&lines, fields, f),
                None => lines,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::render_fields;
    use crate::geometry::orthogonal_distance;

    fn seg(x1: f64, y1: f64, x2: f64, y2: f64) -> LineSegment {
        LineSegment::from_coords(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn single_line_from_fields() {
        let gt = seg(40.0, 40.0, 200.0, 60.0);
        let fp = render_fields(&[gt], 256, 256, 5.0).unwrap();
        let lines = detect(DetectSource::Fields { fields: &fp, image: None }, &DetectorParams::default(), Some(&FilterParams::default())).unwrap();
        assert_eq!(lines.len(), 1, "{lines:?}");
        assert!(orthogonal_distance(&lines[0], &gt) < 1.0);
    }

    #[test]
    fn filter_keeps_exact_and_drops_empty() {
        let gt = seg(20.5, 30.5, 100.5, 30.5);
        let fp = render_fields(&[gt], 128, 128, 5.0).unwrap();
        let p = FilterParams::default();
        assert_eq!(inlier_fraction(&gt, &fp, &p), Some(1.0));
        let far = seg(20.0, 100.0, 100.0, 110.0);
        assert_eq!(filter_lines(&[gt, far], &fp, &p), vec![gt]);
    }

    #[test]
    fn filter_partial_overlap() {
        // 60% of the candidate overlaps the generating line, the rest runs
        // into empty space
        let gt = seg(10.5, 40.5, 70.5, 40.5);
        let fp = render_fields(&[gt], 200, 100, 5.0).unwrap();
        let cand = seg(10.5, 40.5, 110.5, 40.5);
        let frac = inlier_fraction(&cand, &fp, &FilterParams::default()).unwrap();
        assert!((0.55..0.7).contains(&frac), "{frac}");
        let loose = FilterParams { min_inlier_frac: 0.5, ..Default::default() };
        let strict = FilterParams { min_inlier_frac: 0.7, ..Default::default() };
        assert_eq!(filter_lines(&[cand], &fp, &loose).len(), 1);
        assert!(filter_lines(&[cand], &fp, &strict).is_empty());
    }

    #[test]
    fn filter_is_idempotent() {
        let fp = render_fields(&[seg(10.0, 10.0, 90.0, 70.0)], 100, 100, 5.0).unwrap();
        let cands = [seg(10.0, 10.0, 90.0, 70.0), seg(10.0, 12.0, 90.0, 72.0), seg(5.0, 90.0, 95.0, 90.0)];
        let once = filter_lines(&cands, &fp, &FilterParams::default());
        let twice = filter_lines(&once, &fp, &FilterParams::default());
        assert_eq!(once, twice);
        assert!(once.len() <= cands.len());
    }

    #[test]
    fn empty_fields_give_empty_detections() {
        let fp = render_fields(&[seg(0.0, 0.0, 1.0, 0.0)], 64, 64, 5.0).unwrap();
        // a filter no line can pass
        let strict = FilterParams { eta_df: 0.0, ..Default::default() };
        let out = detect(DetectSource::Fields { fields: &fp, image: None }, &DetectorParams::default(), Some(&strict)).unwrap();
        assert!(out.is_empty());
    }
}
