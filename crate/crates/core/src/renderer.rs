//! Emission-absorption ray marching over cost volumes.
//!
//! All renderers share one deterministic stratified quadrature per pixel, so two
//! renders with the same [`Quadrature`] evaluate identical sample depths. The
//! compositing loops are written so that the reductions between modes hold
//! bit-for-bit: a visibility weight of exactly 1.0 leaves every product unchanged.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CostVolume, RadianceField, Rgb};
use crate::geometry::{Camera, Ray};
use crate::sampling::{DepthSample, Quadrature};
use crate::selection::SupportSet;
use crate::visibility::{render_visibility_mask, visibility_score, MaskMode, VisibilityMask2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Visibility-weighted fusion of sampled points across volumes.
    #[default]
    #[serde(rename = "combined-3d")]
    Combined3d,
    /// Visibility scores scale densities; per-volume renders blended by 2D masks.
    DensityMultiplier,
    /// Per-volume masked renders blended by 2D masks.
    #[serde(rename = "blend-2d")]
    Blend2d,
    /// Plain emission-absorption render of the first support volume.
    Baseline,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [
        FusionMode::Combined3d,
        FusionMode::DensityMultiplier,
        FusionMode::Blend2d,
        FusionMode::Baseline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FusionMode::Combined3d => "combined-3d",
            FusionMode::DensityMultiplier => "density-multiplier",
            FusionMode::Blend2d => "blend-2d",
            FusionMode::Baseline => "baseline",
        }
    }
}

/// How transmittance is carried across the volumes of a combined render.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinedTransmittance {
    /// One transmittance per ray, attenuated at each point by
    /// `sum_k M_k exp(-sigma_k delta)`.
    #[default]
    Mixture,
    /// One transmittance per volume, attenuated by `exp(-sigma_k delta) M_k`.
    PerVolume,
}

impl CombinedTransmittance {
    pub fn name(&self) -> &'static str {
        match self {
            CombinedTransmittance::Mixture => "mixture",
            CombinedTransmittance::PerVolume => "per-volume",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub quadrature: Quadrature,
    pub fusion_mode: FusionMode,
    pub mask_mode: MaskMode,
    pub transmittance: CombinedTransmittance,
    /// Total visibility at or below this is treated as empty space.
    pub epsilon: f64,
    pub background: Rgb,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            quadrature: Quadrature::new(256, 0),
            fusion_mode: FusionMode::default(),
            mask_mode: MaskMode::default(),
            transmittance: CombinedTransmittance::default(),
            epsilon: 1e-6,
            background: Rgb::zeros(),
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quadrature.samples == 0 {
            return Err(Error::InvalidArgument("samples per ray must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Rendered RGB image with per-pixel validity and accumulated opacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
    validity: Vec<bool>,
    opacity: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>, validity: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 || pixels.len() != n || validity.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{width}x{height} image needs {n} pixels and validity flags"
            )));
        }
        if pixels.iter().any(|p| p.iter().any(|c| !(0.0..=1.0).contains(c))) {
            return Err(Error::InvalidArgument("pixel components must lie in [0, 1]".into()));
        }
        let opacity = validity.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        Ok(Image {
            width,
            height,
            pixels,
            validity,
            opacity,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        Self::new(width, height, vec![color; width * height], vec![true; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn validity(&self) -> &[bool] {
        &self.validity
    }

    /// Accumulated compositing weight per pixel (1 for images built from raw pixels).
    pub fn opacity(&self) -> &[f64] {
        &self.opacity
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.validity[y * self.width + x]
    }

    pub fn valid_fraction(&self) -> f64 {
        self.validity.iter().filter(|&&v| v).count() as f64 / self.validity.len() as f64
    }
}

/// Color and total weight accumulated along one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RayAccum {
    color: Rgb,
    opacity: f64,
}

impl RayAccum {
    const EMPTY: RayAccum = RayAccum {
        color: Vector3::new(0.0, 0.0, 0.0),
        opacity: 0.0,
    };

    fn contributed(&self) -> bool {
        self.opacity > 0.0
    }
}

/// Single-volume product-form compositing: emission `T alpha m c`, transmittance
/// multiplied by `exp(-sigma delta) m` after each point. `m = 1` is plain
/// emission-absorption.
fn march_weighted(points: impl Iterator<Item = (f64, Rgb, f64, f64)>) -> RayAccum {
    let mut transmittance = 1.0;
    let mut acc = RayAccum::EMPTY;
    for (density, color, m, delta) in points {
        let decay = (-density * delta).exp();
        let w = transmittance * (1.0 - decay) * m;
        acc.color += color * w;
        acc.opacity += w;
        transmittance *= decay * m;
    }
    acc
}

/// Normalizes visibility scores so they sum to one. Returns false (and zeroes
/// `out`) when the total is at or below `epsilon`.
pub fn normalize_scores(scores: &[f64], epsilon: f64, out: &mut [f64]) -> bool {
    let total: f64 = scores.iter().fold(0.0, |acc, m| acc + m);
    if total > epsilon {
        for (o, m) in out.iter_mut().zip(scores) {
            *o = m / total;
        }
        true
    } else {
        out.iter_mut().for_each(|o| *o = 0.0);
        false
    }
}

fn render_rays<F>(novel: &Camera, background: Rgb, trace: F) -> Image
where
    F: Fn(&Ray, u32, u32) -> RayAccum + Sync,
{
    let width = novel.width() as usize;
    let height = novel.height() as usize;
    let rows: Vec<Vec<RayAccum>> = (0..height)
        .into_par_iter()
        .map(|y| {
            (0..width)
                .map(|x| {
                    let ray = novel
                        .pixel_ray(x as u32, y as u32)
                        .expect("pixel centers lie inside the image");
                    trace(&ray, x as u32, y as u32)
                })
                .collect()
        })
        .collect();
    let n = width * height;
    let mut pixels = Vec::with_capacity(n);
    let mut validity = Vec::with_capacity(n);
    let mut opacity = Vec::with_capacity(n);
    for acc in rows.into_iter().flatten() {
        let valid = acc.contributed();
        pixels.push(if valid {
            acc.color.map(|c| c.clamp(0.0, 1.0))
        } else {
            background
        });
        validity.push(valid);
        opacity.push(acc.opacity);
    }
    Image {
        width,
        height,
        pixels,
        validity,
        opacity,
    }
}

fn trace_volume(ray: &Ray, samples: &[DepthSample], cv: &CostVolume, mask: Option<MaskMode>) -> RayAccum {
    march_weighted(samples.iter().map(|s| {
        let p = ray.at(s.t);
        let v = cv.sample(&p);
        let m = mask.map_or(1.0, |mode| visibility_score(&p, cv, mode));
        (v.density, v.color, m, s.delta)
    }))
}

/// Plain emission-absorption render of one cost volume. Pixels with no
/// contributing sample get the background and are marked invalid.
pub fn render_baseline(novel: &Camera, cv: &CostVolume, config: &RenderConfig) -> Image {
    render_rays(novel, config.background, |ray, x, y| {
        let samples = config.quadrature.stratified(ray, x, y);
        trace_volume(ray, &samples, cv, None)
    })
}

/// Single cost volume with visibility weights: emission scaled by `m_j` and
/// transmittance multiplied by `m_s` at every earlier point.
pub fn render_single_masked(novel: &Camera, cv: &CostVolume, config: &RenderConfig) -> Image {
    render_rays(novel, config.background, |ray, x, y| {
        let samples = config.quadrature.stratified(ray, x, y);
        trace_volume(ray, &samples, cv, Some(config.mask_mode))
    })
}

/// Reference render straight from an analytic field with the same quadrature.
pub fn render_field<F>(novel: &Camera, field: &F, config: &RenderConfig) -> Image
where
    F: RadianceField + Sync,
{
    render_rays(novel, config.background, |ray, x, y| {
        let samples = config.quadrature.stratified(ray, x, y);
        march_weighted(samples.iter().map(|s| {
            let f = field.eval(&ray.at(s.t));
            (f.density, f.color, 1.0, s.delta)
        }))
    })
}

fn support_volumes<'a>(support: &SupportSet, volumes: &'a [CostVolume]) -> Result<Vec<&'a CostVolume>> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    support
        .indices()
        .iter()
        .map(|&i| {
            volumes.get(i).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "support index {i} out of range for {} volumes",
                    volumes.len()
                ))
            })
        })
        .collect()
}

fn trace_combined(
    ray: &Ray,
    samples: &[DepthSample],
    volumes: &[&CostVolume],
    config: &RenderConfig,
) -> RayAccum {
    let k = volumes.len();
    let mut scores = vec![0.0; k];
    let mut weights = vec![0.0; k];
    let mut densities = vec![0.0; k];
    let mut colors = vec![Rgb::zeros(); k];
    let mut per_volume_t = vec![1.0; k];
    let mut transmittance = 1.0;
    let mut acc = RayAccum::EMPTY;

    for s in samples {
        let p = ray.at(s.t);
        for (i, cv) in volumes.iter().enumerate() {
            scores[i] = visibility_score(&p, cv, config.mask_mode);
        }
        if !normalize_scores(&scores, config.epsilon, &mut weights) {
            // Nobody sees this point: empty space, transmittance untouched.
            continue;
        }
        for (i, cv) in volumes.iter().enumerate() {
            let v = cv.sample(&p);
            densities[i] = v.density;
            colors[i] = v.color;
        }
        match config.transmittance {
            CombinedTransmittance::Mixture => {
                let mut survive = 0.0;
                for i in 0..k {
                    let decay = (-densities[i] * s.delta).exp();
                    let w = transmittance * (1.0 - decay) * weights[i];
                    acc.color += colors[i] * w;
                    acc.opacity += w;
                    survive += weights[i] * decay;
                }
                transmittance *= survive;
            }
            CombinedTransmittance::PerVolume => {
                for i in 0..k {
                    let decay = (-densities[i] * s.delta).exp();
                    let w = per_volume_t[i] * (1.0 - decay) * weights[i];
                    acc.color += colors[i] * w;
                    acc.opacity += w;
                    per_volume_t[i] *= decay * weights[i];
                }
            }
        }
    }
    acc
}

/// Visibility-weighted render over the support set. At every shared quadrature
/// point the volumes' scores are normalized to weights `M_k` summing to one;
/// each volume emits `T alpha(sigma_k delta) M_k c_k`.
pub fn render_combined(
    novel: &Camera,
    support: &SupportSet,
    volumes: &[CostVolume],
    config: &RenderConfig,
) -> Result<Image> {
    config.validate()?;
    let selected = support_volumes(support, volumes)?;
    Ok(render_rays(novel, config.background, |ray, x, y| {
        let samples = config.quadrature.stratified(ray, x, y);
        trace_combined(ray, &samples, &selected, config)
    }))
}

/// Image-space blend of per-volume ray results with per-pixel weights
/// `M2D_k / sum_k M2D_k`.
fn blend_2d(
    novel: &Camera,
    masks: &[VisibilityMask2D],
    config: &RenderConfig,
    trace: impl Fn(usize, &Ray, &[DepthSample]) -> RayAccum + Sync,
) -> Image {
    let width = novel.width() as usize;
    render_rays(novel, config.background, |ray, x, y| {
        let idx = y as usize * width + x as usize;
        let total: f64 = masks.iter().map(|m| m.values()[idx]).sum();
        if !(total > 0.0) {
            return RayAccum::EMPTY;
        }
        let samples = config.quadrature.stratified(ray, x, y);
        let mut acc = RayAccum::EMPTY;
        for (k, mask) in masks.iter().enumerate() {
            let w = mask.values()[idx] / total;
            if w > 0.0 {
                let r = trace(k, ray, &samples);
                acc.color += r.color * w;
                acc.opacity += r.opacity * w;
            }
        }
        acc
    })
}

/// The two alternative fusion strategies (`density-multiplier`, `blend-2d`).
pub fn render_fusion_ablation(
    novel: &Camera,
    support: &SupportSet,
    volumes: &[CostVolume],
    config: &RenderConfig,
) -> Result<Image> {
    config.validate()?;
    let selected = support_volumes(support, volumes)?;
    let masks: Vec<VisibilityMask2D> = selected
        .iter()
        .map(|cv| render_visibility_mask(novel, cv, &config.quadrature, config.mask_mode))
        .collect();
    match config.fusion_mode {
        FusionMode::DensityMultiplier => Ok(blend_2d(novel, &masks, config, |k, ray, samples| {
            let cv = selected[k];
            march_weighted(samples.iter().map(|s| {
                let p = ray.at(s.t);
                let v = cv.sample(&p);
                let m = visibility_score(&p, cv, config.mask_mode);
                (v.density * m, v.color, 1.0, s.delta)
            }))
        })),
        FusionMode::Blend2d => Ok(blend_2d(novel, &masks, config, |k, ray, samples| {
            trace_volume(ray, samples, selected[k], Some(config.mask_mode))
        })),
        other => Err(Error::InvalidArgument(format!(
            "{} is not a fusion ablation mode",
            other.name()
        ))),
    }
}

/// Renders in `config.fusion_mode`; the baseline uses the first support volume.
pub fn render(
    novel: &Camera,
    support: &SupportSet,
    volumes: &[CostVolume],
    config: &RenderConfig,
) -> Result<Image> {
    match config.fusion_mode {
        FusionMode::Combined3d => render_combined(novel, support, volumes, config),
        FusionMode::DensityMultiplier | FusionMode::Blend2d => {
            render_fusion_ablation(novel, support, volumes, config)
        }
        FusionMode::Baseline => {
            config.validate()?;
            let first = support_volumes(support, volumes)?[0];
            Ok(render_baseline(novel, first, config))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_cost_volume, Corruption, Primitive, SceneField, Shape};
    use crate::geometry::{CameraIntrinsics, CameraPose};
    use approx::assert_abs_diff_eq;

    fn wide_member() -> Camera {
        let k = CameraIntrinsics::from_fov_y(8, 8, 170.0).unwrap();
        Camera::new(k, CameraPose::identity(), 0.01, 100.0).unwrap()
    }

    /// 1x1 camera looking down +Z over the depth interval [1, 2].
    fn unit_ray_camera() -> Camera {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.5, 0.5, 1, 1).unwrap();
        Camera::new(k, CameraPose::identity(), 1.0, 2.0).unwrap()
    }

    fn constant_volume(reference: Camera, members: Vec<Camera>, density: f64, color: Rgb) -> CostVolume {
        let n = 8;
        CostVolume::from_grid(reference, members, [2, 2, 2], vec![density; n], vec![color; n], Rgb::zeros())
            .unwrap()
    }

    fn config(samples: usize) -> RenderConfig {
        RenderConfig {
            quadrature: Quadrature::new(samples, 17),
            ..RenderConfig::default()
        }
    }

    fn blob_scene() -> SceneField {
        SceneField::new(
            vec![
                Primitive::new(
                    Shape::Gaussian { center: Vector3::new(-0.3, 0.1, 2.5), scale: 0.35 },
                    6.0,
                    Rgb::new(0.9, 0.3, 0.1),
                )
                .unwrap(),
                Primitive::new(
                    Shape::Gaussian { center: Vector3::new(0.4, -0.2, 3.0), scale: 0.3 },
                    8.0,
                    Rgb::new(0.1, 0.4, 0.9),
                )
                .unwrap(),
            ],
            Rgb::zeros(),
        )
        .unwrap()
    }

    fn novel_camera() -> Camera {
        let k = CameraIntrinsics::new(8.0, 8.0, 8.0, 4.0, 16, 8).unwrap();
        Camera::new(k, CameraPose::identity(), 1.0, 4.0).unwrap()
    }

    /// Member cameras sharing the novel center whose frusta split the view at x = 0.
    fn half_member(left: bool) -> Camera {
        let cx = if left { 16.0 } else { 0.0 };
        let k = CameraIntrinsics::new(8.0, 8.0, cx, 4.0, 16, 8).unwrap();
        Camera::new(k, CameraPose::identity(), 0.5, 10.0).unwrap()
    }

    #[test]
    fn empty_volume_renders_background() {
        let bg = Rgb::new(0.2, 0.3, 0.4);
        let cv = constant_volume(novel_camera(), vec![wide_member()], 0.0, Rgb::repeat(1.0));
        let cfg = RenderConfig { background: bg, ..config(32) };
        let img = render_baseline(&novel_camera(), &cv, &cfg);
        assert!(img.pixels().iter().all(|p| *p == bg));
        assert!(img.validity().iter().all(|v| !v));
    }

    #[test]
    fn unit_medium_opacity_matches_closed_form() {
        let cam = unit_ray_camera();
        let cv = constant_volume(cam, vec![wide_member()], 1.0, Rgb::repeat(1.0));
        let img = render_baseline(&cam, &cv, &config(512));
        let expected = 1.0 - (-1.0f64).exp();
        for c in img.pixel(0, 0).iter() {
            assert!((c - expected).abs() < 1e-3, "{c} vs {expected}");
        }
        assert!(img.is_valid(0, 0));
    }

    #[test]
    fn unit_mask_is_baseline_for_every_path() {
        let novel = novel_camera();
        let cv = build_cost_volume(&blob_scene(), &novel, &[wide_member()], [17, 9, 24], &Corruption::off())
            .unwrap();
        let cfg = config(64);
        let base = render_baseline(&novel, &cv, &cfg);
        let single = render_single_masked(&novel, &cv, &cfg);
        let combined = render_combined(&novel, &SupportSet::new(vec![0], 1).unwrap(), std::slice::from_ref(&cv), &cfg).unwrap();
        assert_eq!(single, base);
        assert_eq!(combined, base);
        for mode in [FusionMode::Blend2d, FusionMode::DensityMultiplier] {
            let cfg = RenderConfig { fusion_mode: mode, ..cfg };
            let img = render_fusion_ablation(&novel, &SupportSet::new(vec![0], 1).unwrap(), std::slice::from_ref(&cv), &cfg).unwrap();
            for (a, b) in img.pixels().iter().zip(base.pixels()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_mask_ray_is_invalid() {
        let cam = unit_ray_camera();
        let k = CameraIntrinsics::from_fov_y(8, 8, 40.0).unwrap();
        let away = Camera::new(
            k,
            CameraPose::look_at(Vector3::zeros(), -Vector3::z(), Vector3::y()).unwrap(),
            0.1,
            10.0,
        )
        .unwrap();
        let bg = Rgb::new(0.5, 0.5, 0.5);
        let cv = constant_volume(cam, vec![away], 1.0, Rgb::repeat(1.0));
        let img = render_single_masked(&cam, &cv, &RenderConfig { background: bg, ..config(64) });
        assert_eq!(img.pixel(0, 0), bg);
        assert!(!img.is_valid(0, 0));
    }

    #[test]
    fn half_mask_matches_product_form_oracle() {
        // Two members, one of which sees the ray: m = 1/2 everywhere.
        let cam = unit_ray_camera();
        let k = CameraIntrinsics::from_fov_y(8, 8, 40.0).unwrap();
        let away = Camera::new(
            k,
            CameraPose::look_at(Vector3::zeros(), -Vector3::z(), Vector3::y()).unwrap(),
            0.1,
            10.0,
        )
        .unwrap();
        let cv = constant_volume(cam, vec![wide_member(), away], 1.0, Rgb::repeat(1.0));
        let cfg = config(512);
        let img = render_single_masked(&cam, &cv, &cfg);

        let ray = cam.pixel_ray(0, 0).unwrap();
        let samples = cfg.quadrature.stratified(&ray, 0, 0);
        let mut expected = 0.0;
        for (j, s) in samples.iter().enumerate() {
            let mut t_single = 1.0;
            for prev in &samples[..j] {
                t_single *= (-prev.delta).exp() * 0.5;
            }
            expected += t_single * (1.0 - (-s.delta).exp()) * 0.5;
        }
        assert_abs_diff_eq!(img.pixel(0, 0).x, expected, epsilon = 1e-9);
    }

    #[test]
    fn identical_volumes_split_evenly() {
        let novel = novel_camera();
        let cv = build_cost_volume(&blob_scene(), &novel, &[wide_member()], [17, 9, 24], &Corruption::off())
            .unwrap();
        let cfg = config(96);
        let base = render_baseline(&novel, &cv, &cfg);
        let two = render_combined(&novel, &SupportSet::new(vec![0, 1], 2).unwrap(), &[cv.clone(), cv], &cfg)
            .unwrap();
        for (a, b) in two.pixels().iter().zip(base.pixels()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        assert_eq!(two.validity(), base.validity());
    }

    #[test]
    fn per_volume_transmittance_does_not_reduce_for_identical_volumes() {
        let novel = novel_camera();
        let cv = build_cost_volume(&blob_scene(), &novel, &[wide_member()], [17, 9, 24], &Corruption::off())
            .unwrap();
        let cfg = RenderConfig {
            transmittance: CombinedTransmittance::PerVolume,
            ..config(96)
        };
        let base = render_baseline(&novel, &cv, &cfg);
        let two = render_combined(&novel, &SupportSet::new(vec![0, 1], 2).unwrap(), &[cv.clone(), cv], &cfg)
            .unwrap();
        let max_diff = two
            .pixels()
            .iter()
            .zip(base.pixels())
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        assert!(max_diff > 1e-2);
        assert!(two.opacity().iter().all(|&o| o <= 1.0 + 1e-9));
    }

    fn disjoint_setup() -> (Camera, Vec<CostVolume>) {
        let novel = novel_camera();
        let scene = blob_scene();
        let res = [17, 9, 32];
        let left = build_cost_volume(&scene, &novel, &[half_member(true)], res, &Corruption::off()).unwrap();
        let right = build_cost_volume(&scene, &novel, &[half_member(false)], res, &Corruption::off()).unwrap();
        (novel, vec![left, right])
    }

    #[test]
    fn disjoint_volumes_decompose() {
        let (novel, volumes) = disjoint_setup();
        let cfg = config(64);
        let support = SupportSet::new(vec![0, 1], 2).unwrap();
        let combined = render_combined(&novel, &support, &volumes, &cfg).unwrap();
        let left = render_single_masked(&novel, &volumes[0], &cfg);
        let right = render_single_masked(&novel, &volumes[1], &cfg);
        for y in 0..8 {
            for x in 0..16 {
                let single = if x < 8 { &left } else { &right };
                assert_abs_diff_eq!(combined.pixel(x, y), single.pixel(x, y), epsilon = 1e-6);
                assert_eq!(combined.is_valid(x, y), left.is_valid(x, y) || right.is_valid(x, y));
            }
        }
        assert!(combined.valid_fraction() > left.valid_fraction());
        assert!(combined.valid_fraction() > right.valid_fraction());

        let blend = render_fusion_ablation(
            &novel,
            &support,
            &volumes,
            &RenderConfig { fusion_mode: FusionMode::Blend2d, ..cfg },
        )
        .unwrap();
        for (a, b) in blend.pixels().iter().zip(combined.pixels()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn density_multiplier_halves_density() {
        let cam = novel_camera();
        let k = CameraIntrinsics::from_fov_y(8, 8, 40.0).unwrap();
        let away = Camera::new(
            k,
            CameraPose::look_at(Vector3::zeros(), -Vector3::z(), Vector3::y()).unwrap(),
            0.1,
            10.0,
        )
        .unwrap();
        let color = Rgb::new(0.8, 0.6, 0.2);
        let half_seen = constant_volume(cam, vec![wide_member(), away], 2.0, color);
        let halved = constant_volume(cam, vec![wide_member()], 1.0, color);
        let cfg = RenderConfig { fusion_mode: FusionMode::DensityMultiplier, ..config(64) };
        let img = render_fusion_ablation(&cam, &SupportSet::new(vec![0], 1).unwrap(), &[half_seen], &cfg).unwrap();
        let base = render_baseline(&cam, &halved, &cfg);
        for (a, b) in img.pixels().iter().zip(base.pixels()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn energy_bound_holds_in_every_mode() {
        let (novel, volumes) = disjoint_setup();
        let support = SupportSet::new(vec![0, 1], 2).unwrap();
        for mode in FusionMode::ALL {
            for mask_mode in [MaskMode::Continuous, MaskMode::Binary] {
                let cfg = RenderConfig { fusion_mode: mode, mask_mode, ..config(48) };
                let img = render(&novel, &support, &volumes, &cfg).unwrap();
                assert!(img.opacity().iter().all(|&o| (0.0..=1.0 + 1e-9).contains(&o)));
                assert!(img.pixels().iter().all(|p| p.iter().all(|c| (0.0..=1.0).contains(c))));
            }
        }
    }

    #[test]
    fn normalization_sums_to_one() {
        let mut out = [0.0; 3];
        assert!(normalize_scores(&[1.0 / 3.0, 2.0 / 3.0, 1.0], 1e-6, &mut out));
        assert_abs_diff_eq!(out.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(!normalize_scores(&[0.0, 0.0, 0.0], 1e-6, &mut out));
        assert_eq!(out, [0.0; 3]);
    }

    #[test]
    fn support_errors() {
        let (novel, volumes) = disjoint_setup();
        let cfg = config(8);
        assert!(matches!(
            render_combined(&novel, &SupportSet::new(vec![], 2).unwrap(), &volumes, &cfg),
            Err(Error::EmptySupport)
        ));
        assert!(render_combined(&novel, &SupportSet::new(vec![5], 2).unwrap(), &volumes, &cfg).is_err());
        assert!(render_fusion_ablation(&novel, &SupportSet::new(vec![0], 1).unwrap(), &volumes, &cfg).is_err());
    }

    #[test]
    fn quadrature_converges_on_smooth_scene() {
        let novel = novel_camera();
        let scene = blob_scene();
        let diffs: Vec<f64> = [64, 128, 256, 512]
            .windows(2)
            .map(|w| {
                let a = render_field(&novel, &scene, &config(w[0]));
                let b = render_field(&novel, &scene, &config(w[1]));
                a.pixels()
                    .iter()
                    .zip(b.pixels())
                    .map(|(p, q)| (p - q).amax())
                    .fold(0.0, f64::max)
            })
            .collect();
        for pair in diffs.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-4, "{diffs:?}");
        }
    }
}
