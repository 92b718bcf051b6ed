//! Scene configuration: a versioned TOML document describing the analytic scene,
//! the input and novel cameras, the cost-volume pool and the render settings.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [volumes]
//! members = 3          # I, views per cost volume
//! nearest = 6          # N, nearest input views considered per novel view
//! resolution = [64, 64, 64]
//! policy = "sliding"   # sliding | exhaustive | explicit
//!
//! [render]
//! samples = 256        # J
//! support = 4          # K
//!
//! [[primitives]]
//! shape = "sphere"
//! center = [0.0, 0.0, 4.0]
//! radius = 1.0
//! density = 10.0
//! color = [0.8, 0.3, 0.2]
//!
//! [[cameras]]
//! eye = [0.0, 0.0, 0.0]
//! target = [0.0, 0.0, 1.0]
//! fov_y = 50.0
//! width = 64
//! height = 64
//! near = 1.0
//! far = 8.0
//!
//! [[novel_views]]
//! # same keys as [[cameras]]
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::field::{Corruption, Primitive, Rgb, SceneField, Shape};
use crate::geometry::{Camera, CameraIntrinsics, CameraPose};
use crate::metrics::SSIM_WINDOW;
use crate::renderer::{CombinedTransmittance, FusionMode, RenderConfig};
use crate::sampling::Quadrature;
use crate::selection::binomial;
use crate::visibility::MaskMode;

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_SAMPLES: usize = 256;
pub const DEFAULT_SUPPORT: usize = 4;
pub const DEFAULT_NEAREST: usize = 6;
pub const DEFAULT_MEMBERS: usize = 3;
pub const DEFAULT_RESOLUTION: [usize; 3] = [64, 64, 64];
pub const DEFAULT_MASK_DOWNSAMPLE: u32 = 4;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// How candidate member sets are drawn from the nearest input views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolPolicy {
    /// Contiguous windows over the nearest views sorted by index.
    #[default]
    Sliding,
    /// Every `I`-subset of the nearest views.
    Exhaustive,
    /// Member sets listed in `volumes.candidates`, as input camera indices.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionStrategy {
    #[default]
    Greedy,
    MaxVisibility,
    NearestPose,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 3] = [
        SelectionStrategy::Greedy,
        SelectionStrategy::MaxVisibility,
        SelectionStrategy::NearestPose,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SelectionStrategy::Greedy => "greedy",
            SelectionStrategy::MaxVisibility => "max-visibility",
            SelectionStrategy::NearestPose => "nearest-pose",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageFormat {
    #[default]
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ImageFormat::Ppm => "ppm",
            ImageFormat::Png => "png",
        }
    }
}

macro_rules! named_enum_from_str {
    ($ty:ty, $what:literal, $variants:expr) => {
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                $variants
                    .into_iter()
                    .find(|v| v.name() == s)
                    .ok_or_else(|| Error::InvalidArgument(format!(concat!("unknown ", $what, " `{}`"), s)))
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

impl PoolPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            PoolPolicy::Sliding => "sliding",
            PoolPolicy::Exhaustive => "exhaustive",
            PoolPolicy::Explicit => "explicit",
        }
    }
}

impl ImageFormat {
    pub fn name(&self) -> &'static str {
        self.extension()
    }
}

named_enum_from_str!(PoolPolicy, "pool policy", [PoolPolicy::Sliding, PoolPolicy::Exhaustive, PoolPolicy::Explicit]);
named_enum_from_str!(SelectionStrategy, "selection strategy", SelectionStrategy::ALL);
named_enum_from_str!(ImageFormat, "image format", [ImageFormat::Ppm, ImageFormat::Png]);
named_enum_from_str!(FusionMode, "fusion mode", FusionMode::ALL);
named_enum_from_str!(MaskMode, "mask mode", [MaskMode::Continuous, MaskMode::Binary]);
named_enum_from_str!(
    CombinedTransmittance,
    "transmittance",
    [CombinedTransmittance::Mixture, CombinedTransmittance::PerVolume]
);

/// One analytic primitive of the ground-truth scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PrimitiveConfig {
    Sphere {
        center: [f64; 3],
        radius: f64,
        density: f64,
        color: [f64; 3],
    },
    Box {
        min: [f64; 3],
        max: [f64; 3],
        density: f64,
        color: [f64; 3],
    },
    Gaussian {
        center: [f64; 3],
        scale: f64,
        density: f64,
        color: [f64; 3],
    },
}

impl PrimitiveConfig {
    pub fn to_primitive(&self) -> Result<Primitive> {
        let v = Vector3::from;
        let (shape, density, color) = match *self {
            PrimitiveConfig::Sphere {
                center,
                radius,
                density,
                color,
            } => (
                Shape::Sphere {
                    center: v(center),
                    radius,
                },
                density,
                color,
            ),
            PrimitiveConfig::Box {
                min,
                max,
                density,
                color,
            } => (
                Shape::Box {
                    min: v(min),
                    max: v(max),
                },
                density,
                color,
            ),
            PrimitiveConfig::Gaussian {
                center,
                scale,
                density,
                color,
            } => (
                Shape::Gaussian {
                    center: v(center),
                    scale,
                },
                density,
                color,
            ),
        };
        Primitive::new(shape, density, Rgb::from(color))
    }
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

/// Pinhole camera placed with a look-at pose; `up` defaults to +Y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

impl CameraConfig {
    pub fn to_camera(&self) -> Result<Camera> {
        let intrinsics = CameraIntrinsics::from_fov_y(self.width, self.height, self.fov_y)?;
        let pose = CameraPose::look_at(self.eye.into(), self.target.into(), self.up.into())?;
        Camera::new(intrinsics, pose, self.near, self.far)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeConfig {
    /// Member views per cost volume (`I`).
    pub members: usize,
    /// Nearest input views considered per novel view (`N`); capped at the
    /// number of input cameras when the pool is built.
    pub nearest: usize,
    pub resolution: [usize; 3],
    pub policy: PoolPolicy,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<Vec<usize>>,
    pub corruption: bool,
    pub quorum: usize,
    pub corruption_value: f64,
}

impl VolumeConfig {
    pub fn corruption(&self) -> Corruption {
        Corruption {
            enabled: self.corruption,
            quorum: Some(self.quorum),
            value: self.corruption_value,
        }
    }

    /// Number of candidates the pool yields with `available` input cameras.
    pub fn candidate_count(&self, available: usize) -> usize {
        let n = self.nearest.min(available);
        match self.policy {
            PoolPolicy::Explicit => self.candidates.len(),
            _ if self.members > n => 0,
            PoolPolicy::Sliding => n - self.members + 1,
            PoolPolicy::Exhaustive => usize::try_from(binomial(n, self.members)).unwrap_or(usize::MAX),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenderSettings {
    /// Quadrature points per ray (`J`).
    pub samples: usize,
    /// Selected cost volumes per novel view (`K`).
    pub support: usize,
    pub fusion_mode: FusionMode,
    pub mask_mode: MaskMode,
    /// Masks used for selection are rendered this many times coarser.
    pub mask_downsample: u32,
    pub selection: SelectionStrategy,
    pub transmittance: CombinedTransmittance,
    pub epsilon: f64,
    pub image_format: ImageFormat,
}

/// A fully resolved and validated scene configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub background: [f64; 3],
    pub volumes: VolumeConfig,
    pub render: RenderSettings,
    pub primitives: Vec<PrimitiveConfig>,
    pub cameras: Vec<CameraConfig>,
    pub novel_views: Vec<CameraConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    seed: Option<u64>,
    background: Option<[f64; 3]>,
    volumes: Option<RawVolumes>,
    render: Option<RawRender>,
    #[serde(default)]
    primitives: Vec<PrimitiveConfig>,
    #[serde(default)]
    cameras: Vec<CameraConfig>,
    #[serde(default)]
    novel_views: Vec<CameraConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVolumes {
    members: Option<usize>,
    nearest: Option<usize>,
    resolution: Option<[usize; 3]>,
    policy: Option<PoolPolicy>,
    candidates: Option<Vec<Vec<usize>>>,
    corruption: Option<bool>,
    quorum: Option<usize>,
    corruption_value: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRender {
    samples: Option<usize>,
    support: Option<usize>,
    fusion_mode: Option<FusionMode>,
    mask_mode: Option<MaskMode>,
    mask_downsample: Option<u32>,
    selection: Option<SelectionStrategy>,
    transmittance: Option<CombinedTransmittance>,
    epsilon: Option<f64>,
    image_format: Option<ImageFormat>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn between_backticks(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

fn classify_toml_error(text: &str, err: toml::de::Error) -> ConfigError {
    let message = err.message();
    let line = err.span().map(|s| line_of(text, s.start));
    let at = line.map(|l| format!(" (line {l})")).unwrap_or_default();
    if message.starts_with("unknown field") {
        let key = between_backticks(message).unwrap_or(message);
        ConfigError::UnknownKey(format!("{key}{at}"))
    } else if message.starts_with("unknown variant") {
        ConfigError::range("value", format!("{message}{at}"))
    } else {
        ConfigError::Syntax(err.to_string().trim_end().to_owned())
    }
}

impl SceneConfig {
    /// Parses and validates a TOML document, filling defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| classify_toml_error(text, e))?;
        let config = Self::resolve(raw)?;
        config.validate()?;
        Ok(config)
    }

    /// Emits the fully resolved configuration; parsing it back yields an equal value.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("cannot serialize config: {e}")))
    }

    fn resolve(raw: RawConfig) -> Result<Self, ConfigError> {
        let version = raw
            .schema_version
            .ok_or_else(|| ConfigError::Syntax("missing `schema_version`".into()))?;
        if version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
        let v = raw.volumes.unwrap_or_default();
        let r = raw.render.unwrap_or_default();
        let available = raw.cameras.len();
        let members = v.members.unwrap_or(DEFAULT_MEMBERS);
        let candidates = v.candidates.unwrap_or_default();
        let policy = v.policy.unwrap_or_default();
        if !candidates.is_empty() && policy != PoolPolicy::Explicit {
            return Err(ConfigError::range(
                "volumes.candidates",
                "only allowed with policy = \"explicit\"",
            ));
        }
        let volumes = VolumeConfig {
            members,
            nearest: v.nearest.unwrap_or(DEFAULT_NEAREST.min(available)),
            resolution: v.resolution.unwrap_or(DEFAULT_RESOLUTION),
            policy,
            candidates,
            corruption: v.corruption.unwrap_or(true),
            quorum: v.quorum.unwrap_or(members),
            corruption_value: v.corruption_value.unwrap_or(0.0),
        };
        let support = r
            .support
            .unwrap_or_else(|| DEFAULT_SUPPORT.min(volumes.candidate_count(available)).max(1));
        let render = RenderSettings {
            samples: r.samples.unwrap_or(DEFAULT_SAMPLES),
            support,
            fusion_mode: r.fusion_mode.unwrap_or_default(),
            mask_mode: r.mask_mode.unwrap_or_default(),
            mask_downsample: r.mask_downsample.unwrap_or(DEFAULT_MASK_DOWNSAMPLE),
            selection: r.selection.unwrap_or_default(),
            transmittance: r.transmittance.unwrap_or_default(),
            epsilon: r.epsilon.unwrap_or(DEFAULT_EPSILON),
            image_format: r.image_format.unwrap_or_default(),
        };
        Ok(SceneConfig {
            schema_version: version,
            seed: raw.seed.unwrap_or(0),
            background: raw.background.unwrap_or([0.0; 3]),
            volumes,
            render,
            primitives: raw.primitives,
            cameras: raw.cameras,
            novel_views: raw.novel_views,
        })
    }

    /// Checks every invariant; called after parsing and after command-line overrides.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if !self.background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(ConfigError::range("background", "components must lie in [0, 1]"));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            p.to_primitive()
                .map_err(|e| ConfigError::range(format!("primitives[{i}]"), e.to_string()))?;
        }
        if self.cameras.is_empty() {
            return Err(ConfigError::range("cameras", "at least one input camera is required"));
        }
        if self.novel_views.is_empty() {
            return Err(ConfigError::range("novel_views", "at least one novel view is required"));
        }
        for (name, list) in [("cameras", &self.cameras), ("novel_views", &self.novel_views)] {
            for (i, c) in list.iter().enumerate() {
                c.to_camera()
                    .map_err(|e| ConfigError::range(format!("{name}[{i}]"), e.to_string()))?;
            }
        }
        for (i, c) in self.novel_views.iter().enumerate() {
            if (c.width as usize) < SSIM_WINDOW || (c.height as usize) < SSIM_WINDOW {
                return Err(ConfigError::range(
                    format!("novel_views[{i}]"),
                    format!("images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM"),
                ));
            }
        }

        let v = &self.volumes;
        let available = self.cameras.len();
        if v.members == 0 {
            return Err(ConfigError::range("volumes.members", "must be at least 1"));
        }
        if v.nearest == 0 {
            return Err(ConfigError::range("volumes.nearest", "must be at least 1"));
        }
        if v.resolution.iter().any(|&n| n < 2) {
            return Err(ConfigError::range("volumes.resolution", "every axis needs at least 2 nodes"));
        }
        if v.quorum == 0 || v.quorum > v.members {
            return Err(ConfigError::range(
                "volumes.quorum",
                format!("must lie in 1..={} (members per volume)", v.members),
            ));
        }
        if !(v.corruption_value >= 0.0 && v.corruption_value.is_finite()) {
            return Err(ConfigError::range("volumes.corruption_value", "must be finite and non-negative"));
        }
        match v.policy {
            PoolPolicy::Explicit => {
                if v.candidates.is_empty() {
                    return Err(ConfigError::range("volumes.candidates", "explicit policy needs at least one candidate"));
                }
                for (c, set) in v.candidates.iter().enumerate() {
                    let field = format!("volumes.candidates[{c}]");
                    if set.len() != v.members {
                        return Err(ConfigError::range(
                            field,
                            format!("has {} views, expected {} (members)", set.len(), v.members),
                        ));
                    }
                    if let Some(&bad) = set.iter().find(|&&i| i >= available) {
                        return Err(ConfigError::index(
                            field,
                            format!("camera {bad} does not exist ({available} input cameras)"),
                        ));
                    }
                    let mut sorted = set.clone();
                    sorted.sort_unstable();
                    sorted.dedup();
                    if sorted.len() != set.len() {
                        return Err(ConfigError::index(field, "repeats a camera"));
                    }
                }
            }
            _ => {
                let n = v.nearest.min(available);
                if v.members > n {
                    return Err(ConfigError::range(
                        "volumes.members",
                        format!("I = {} exceeds N = {n} available nearest views", v.members),
                    ));
                }
            }
        }

        let r = &self.render;
        if r.samples == 0 {
            return Err(ConfigError::range("render.samples", "must be at least 1"));
        }
        if r.mask_downsample == 0 {
            return Err(ConfigError::range("render.mask_downsample", "must be at least 1"));
        }
        if !(r.epsilon > 0.0 && r.epsilon.is_finite()) {
            return Err(ConfigError::range("render.epsilon", "must be positive"));
        }
        let count = v.candidate_count(available);
        if r.support == 0 || r.support > count {
            return Err(ConfigError::range(
                "render.support",
                format!("K = {} must lie in 1..={count} (candidate volumes)", r.support),
            ));
        }
        Ok(())
    }

    pub fn scene_field(&self) -> Result<SceneField> {
        let primitives = self
            .primitives
            .iter()
            .map(PrimitiveConfig::to_primitive)
            .collect::<Result<Vec<_>>>()?;
        SceneField::new(primitives, Rgb::from(self.background))
    }

    pub fn input_cameras(&self) -> Result<Vec<Camera>> {
        self.cameras.iter().map(CameraConfig::to_camera).collect()
    }

    pub fn novel_cameras(&self) -> Result<Vec<Camera>> {
        self.novel_views.iter().map(CameraConfig::to_camera).collect()
    }

    /// Renderer settings with the configured seed, background and quadrature.
    pub fn render_config(&self) -> RenderConfig {
        RenderConfig {
            quadrature: Quadrature::new(self.render.samples, self.seed),
            fusion_mode: self.render.fusion_mode,
            mask_mode: self.render.mask_mode,
            transmittance: self.render.transmittance,
            epsilon: self.render.epsilon,
            background: Rgb::from(self.background),
        }
    }
}

/// Reads and validates a scene configuration file.
pub fn parse_scene_config(path: impl AsRef<Path>) -> Result<SceneConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    SceneConfig::from_toml_str(&text)
}
