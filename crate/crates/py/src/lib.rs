//! Python bindings. Segments cross the boundary as `(x1, y1, x2, y2)` tuples
//! and fields as flat row-major lists of floats.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use linefield::detector::{detect as core_detect, DetectSource, DetectorParams, FilterParams};
use linefield::eval::{localization_error as core_le, match_one_to_one, repeatability as core_rep, DistanceKind, EvalParams};
use linefield::fields::{FieldPair, ScalarField};
use linefield::geometry::{Homography, LineSegment};
use linefield::gt::{generate_pseudo_gt as core_gt, HomographySamplerParams};
use linefield::refine::{refine_joint, refine_lines, RefineParams};
use linefield::vp::{fit_vps as core_fit_vps, VpParams};

type Seg = (f64, f64, f64, f64);
type Fields = (Vec<f64>, Vec<f64>);
type VpModel = (Vec<[f64; 3]>, Vec<Option<usize>>);

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_lines(segs: &[Seg]) -> PyResult<Vec<LineSegment>> {
    segs.iter().map(|&(a, b, c, d)| LineSegment::from_coords(a, b, c, d).map_err(err)).collect()
}

fn from_lines(lines: &[LineSegment]) -> Vec<Seg> {
    lines.iter().map(|l| (l.p1.x, l.p1.y, l.p2.x, l.p2.y)).collect()
}

fn to_fields(df: Vec<f64>, af: Vec<f64>, width: usize, height: usize, r: f64) -> PyResult<FieldPair> {
    let df = ScalarField::new(width, height, df).map_err(err)?;
    let af = ScalarField::new(width, height, af).map_err(err)?;
    FieldPair::new(df, af, r).map_err(err)
}

fn from_fields(fp: FieldPair) -> Fields {
    (fp.df.into_data(), fp.af.into_data())
}

fn to_homography(h: Option<[f64; 9]>) -> PyResult<Homography> {
    match h {
        Some(v) => Homography::from_row_major(v).map_err(err),
        None => Ok(Homography::identity()),
    }
}

fn to_kind(kind: &str) -> PyResult<DistanceKind> {
    match kind {
        "structural" => Ok(DistanceKind::Structural),
        "orthogonal" => Ok(DistanceKind::Orthogonal),
        other => Err(PyValueError::new_err(format!("unknown distance kind {other:?}"))),
    }
}

/// Distance and angle fields of a set of segments.
#[pyfunction]
#[pyo3(signature = (lines, width, height, r = 5.0))]
fn render_fields(lines: Vec<Seg>, width: usize, height: usize, r: f64) -> PyResult<Fields> {
    let fp = linefield::fields::render_fields(&to_lines(&lines)?, width, height, r).map_err(err)?;
    Ok(from_fields(fp))
}

/// Segments detected on a grayscale image with the classical detector.
#[pyfunction]
fn detect_image(pixels: Vec<f64>, width: usize, height: usize) -> PyResult<Vec<Seg>> {
    let img = ScalarField::new(width, height, pixels).map_err(err)?;
    let lines = core_detect(DetectSource::Image(&img), &DetectorParams::classical(), None).map_err(err)?;
    Ok(from_lines(&lines))
}

/// Segments detected on distance/angle fields, optionally oriented by an
/// image of the same size.
#[pyfunction]
#[pyo3(signature = (df, af, width, height, r = 5.0, image = None, filter = true))]
fn detect_fields(
    df: Vec<f64>,
    af: Vec<f64>,
    width: usize,
    height: usize,
    r: f64,
    image: Option<Vec<f64>>,
    filter: bool,
) -> PyResult<Vec<Seg>> {
    let fp = to_fields(df, af, width, height, r)?;
    let img = image.map(|p| ScalarField::new(width, height, p)).transpose().map_err(err)?;
    let fparams = FilterParams::default();
    let lines = core_detect(
        DetectSource::Fields { fields: &fp, image: img.as_ref() },
        &DetectorParams::default(),
        filter.then_some(&fparams),
    )
    .map_err(err)?;
    Ok(from_lines(&lines))
}

/// Pseudo ground-truth fields of an image by homography adaptation.
#[pyfunction]
#[pyo3(signature = (pixels, width, height, num_homographies = 10, seed = 0, r = 5.0))]
fn generate_pseudo_gt(pixels: Vec<f64>, width: usize, height: usize, num_homographies: usize, seed: u64, r: f64) -> PyResult<Fields> {
    let img = ScalarField::new(width, height, pixels).map_err(err)?;
    let sampler = HomographySamplerParams { seed, ..Default::default() };
    let fp = core_gt(&img, num_homographies, &DetectorParams::classical(), &sampler, r).map_err(err)?;
    Ok(from_fields(fp))
}

/// Vanishing points as homogeneous triples, and the VP index of each line.
#[pyfunction]
#[pyo3(signature = (lines, seed = 0))]
fn fit_vps(lines: Vec<Seg>, seed: u64) -> PyResult<VpModel> {
    let (vps, assignment) = core_fit_vps(&to_lines(&lines)?, &VpParams { seed, ..Default::default() }).map_err(err)?;
    Ok((vps.iter().map(|v| (*v.as_vector()).into()).collect(), assignment.0))
}

/// Refines segments against fields, jointly with vanishing points when
/// `use_vps` is set.
#[pyfunction]
#[pyo3(signature = (lines, df, af, width, height, r = 5.0, use_vps = false, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn refine(
    lines: Vec<Seg>,
    df: Vec<f64>,
    af: Vec<f64>,
    width: usize,
    height: usize,
    r: f64,
    use_vps: bool,
    seed: u64,
) -> PyResult<Vec<Seg>> {
    let fp = to_fields(df, af, width, height, r)?;
    let lines = to_lines(&lines)?;
    let params = RefineParams::default();
    let out = if use_vps {
        refine_joint(&lines, &fp, &VpParams { seed, ..Default::default() }, &params).map_err(err)?.lines
    } else {
        refine_lines(&lines, &fp, &params).map_err(err)?
    };
    Ok(from_lines(&out))
}

/// Repeatability of two line sets under a row-major homography from `a` to `b`.
#[pyfunction]
#[pyo3(signature = (a, b, homography = None, threshold = 3.0, kind = "structural"))]
fn repeatability(a: Vec<Seg>, b: Vec<Seg>, homography: Option<[f64; 9]>, threshold: f64, kind: &str) -> PyResult<f64> {
    let (a, b) = (to_lines(&a)?, to_lines(&b)?);
    let params = EvalParams { rep_threshold: threshold, distance_kind: to_kind(kind)?, ..Default::default() };
    let m = match_one_to_one(&a, &b, &to_homography(homography)?, params.distance_kind);
    core_rep(&m, a.len(), b.len(), &params).map_err(err)
}

/// Mean distance of the `top_k` best one-to-one matches.
#[pyfunction]
#[pyo3(signature = (a, b, homography = None, top_k = 50, kind = "structural"))]
fn localization_error(a: Vec<Seg>, b: Vec<Seg>, homography: Option<[f64; 9]>, top_k: usize, kind: &str) -> PyResult<f64> {
    let (a, b) = (to_lines(&a)?, to_lines(&b)?);
    let params = EvalParams { le_top_k: top_k, distance_kind: to_kind(kind)?, ..Default::default() };
    let m = match_one_to_one(&a, &b, &to_homography(homography)?, params.distance_kind);
    core_le(&m, &params).map_err(err)
}

#[pymodule]
fn linefield_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(render_fields, m)?)?;
    m.add_function(wrap_pyfunction!(detect_image, m)?)?;
    m.add_function(wrap_pyfunction!(detect_fields, m)?)?;
    m.add_function(wrap_pyfunction!(generate_pseudo_gt, m)?)?;
    m.add_function(wrap_pyfunction!(fit_vps, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(repeatability, m)?)?;
    m.add_function(wrap_pyfunction!(localization_error, m)?)?;
    Ok(())
}
