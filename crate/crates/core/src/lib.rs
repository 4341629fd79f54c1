//! Line attraction fields, field-driven line segment detection, vanishing
//! point fitting, joint refinement and evaluation metrics.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod detector;
pub mod error;
pub mod eval;
pub mod fields;
pub mod geometry;
pub mod gt;
pub mod io;
pub mod lm;
pub mod refine;
pub mod vp;

pub use detector::{detect, filter_lines, AnglePeriod, DetectSource, DetectorParams, FilterParams};
pub use error::{Error, Result};
pub use eval::{DistanceKind, EvalParams, LineMatch};
pub use fields::{render_fields, FieldPair, SampleMode, ScalarField};
pub use geometry::{CameraIntrinsics, Homography, LineSegment, Point2};
pub use gt::{generate_pseudo_gt, HomographySamplerParams};
pub use refine::{refine_joint, refine_line, RefineParams};
pub use vp::{fit_vps, VanishingPoint, VpAssignment, VpParams};
