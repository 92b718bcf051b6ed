//! Per-point visibility scores, rendered 2D visibility masks and the coverage
//! bookkeeping used by support-set selection.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::CostVolume;
use crate::geometry::Camera;
use crate::sampling::Quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Fraction of member views that see the point.
    #[default]
    Continuous,
    /// 1 if any member view sees the point.
    Binary,
}

impl MaskMode {
    pub fn name(&self) -> &'static str {
        match self {
            MaskMode::Continuous => "continuous",
            MaskMode::Binary => "binary",
        }
    }
}

fn members_seeing(point: &Vector3<f64>, cv: &CostVolume) -> usize {
    cv.members().iter().filter(|m| m.contains(point)).count()
}

/// Fraction of the volume's member views whose frustum contains `point`.
pub fn visibility_score_3d(point: &Vector3<f64>, cv: &CostVolume) -> f64 {
    members_seeing(point, cv) as f64 / cv.members().len() as f64
}

/// `1 - prod_i (1 - 1_i(p))`: 1 when at least one member view sees the point.
pub fn visibility_score_binary(point: &Vector3<f64>, cv: &CostVolume) -> f64 {
    if cv.members().iter().any(|m| m.contains(point)) {
        1.0
    } else {
        0.0
    }
}

pub fn visibility_score(point: &Vector3<f64>, cv: &CostVolume, mode: MaskMode) -> f64 {
    match mode {
        MaskMode::Continuous => visibility_score_3d(point, cv),
        MaskMode::Binary => visibility_score_binary(point, cv),
    }
}

/// Per-pixel values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMask2D {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl VisibilityMask2D {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "mask of {width}x{height} cannot hold {} values",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "mask values must lie in [0, 1], found {v}"
            )));
        }
        Ok(VisibilityMask2D {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Emission-absorption accumulation of visibility scores treated as densities:
/// `sum_j T'(j) alpha(m_j delta_j) m_j` with `T'(j) = exp(-sum_{s<j} m_s delta_s)`.
pub fn accumulate_visibility(scores_and_deltas: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut transmittance = 1.0;
    let mut value = 0.0;
    for (m, delta) in scores_and_deltas {
        let decay = (-m * delta).exp();
        value += transmittance * (1.0 - decay) * m;
        transmittance *= decay;
    }
    value.clamp(0.0, 1.0)
}

/// Renders the 2D visibility mask of `cv` as seen from `novel`, one ray per pixel center.
pub fn render_visibility_mask(
    novel: &Camera,
    cv: &CostVolume,
    quadrature: &Quadrature,
    mode: MaskMode,
) -> VisibilityMask2D {
    let width = novel.width() as usize;
    let height = novel.height() as usize;
    let mut values = vec![0.0; width * height];
    values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let ray = novel
                    .pixel_ray(x as u32, y as u32)
                    .expect("pixel centers lie inside the image");
                let samples = quadrature.stratified(&ray, x as u32, y as u32);
                *out = accumulate_visibility(
                    samples
                        .iter()
                        .map(|s| (visibility_score(&ray.at(s.t), cv, mode), s.delta)),
                );
            }
        });
    VisibilityMask2D {
        width,
        height,
        values,
    }
}

/// Residual uncovered mass per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl CoverageMap {
    pub fn ones(width: usize, height: usize) -> Self {
        CoverageMap {
            width,
            height,
            values: vec![1.0; width * height],
        }
    }

    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        VisibilityMask2D::new(width, height, values).map(|m| CoverageMap {
            width: m.width,
            height: m.height,
            values: m.values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    fn check_dims(&self, mask: &VisibilityMask2D) -> Result<()> {
        if (self.width, self.height) != (mask.width, mask.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                found: (mask.width, mask.height),
            });
        }
        Ok(())
    }
}

/// `sum(P * M)`: mass of `mask` that is still uncovered.
pub fn coverage_ratio(coverage: &CoverageMap, mask: &VisibilityMask2D) -> Result<f64> {
    coverage.check_dims(mask)?;
    Ok(coverage
        .values
        .iter()
        .zip(&mask.values)
        .map(|(p, m)| p * m)
        .sum())
}

/// `P * (1 - M)`, elementwise.
pub fn update_coverage(coverage: &CoverageMap, mask: &VisibilityMask2D) -> Result<CoverageMap> {
    coverage.check_dims(mask)?;
    let values = coverage
        .values
        .iter()
        .zip(&mask.values)
        .map(|(p, m)| (p * (1.0 - m)).clamp(0.0, 1.0))
        .collect();
    Ok(CoverageMap {
        width: coverage.width,
        height: coverage.height,
        values,
    })
}
