//! Novel view synthesis by fusing several cost-volume radiance fields under
//! visibility-aware weighting.

// `!(x > 0.0)` style checks deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod renderer;
pub mod sampling;
pub mod selection;
pub mod visibility;

pub use error::{ConfigError, Error, Result};
pub use field::{build_cost_volume, Corruption, CostVolume, RadianceField, Rgb, SceneField};
pub use geometry::{Camera, CameraIntrinsics, CameraPose, Ray};
pub use metrics::MetricReport;
pub use renderer::{FusionMode, Image, RenderConfig};
pub use sampling::Quadrature;
pub use selection::{select_greedy, SelectionObjective, SupportSet};
pub use visibility::{CoverageMap, MaskMode, VisibilityMask2D};
