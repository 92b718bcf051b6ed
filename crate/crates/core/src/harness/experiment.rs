//! End-to-end render and ablation drivers.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::SceneField;
use crate::geometry::Camera;
use crate::harness::config::{PoolPolicy, SceneConfig, SelectionStrategy};
use crate::harness::io::write_image;
use crate::harness::pool::{build_pool, CandidatePool};
use crate::metrics::MetricReport;
use crate::renderer::{render, render_field, FusionMode, Image, RenderConfig};
use crate::selection::{select_greedy, select_max_visibility, select_nearest_pose, SelectionObjective, SupportSet};
use crate::visibility::{render_visibility_mask, MaskMode, VisibilityMask2D};

/// Input subsampling factors of the sparse-views ablation.
pub const SPARSE_FACTORS: [usize; 4] = [1, 2, 3, 4];
/// Support sizes of the k-sweep ablation.
pub const K_SWEEP: [usize; 5] = [1, 2, 3, 4, 5];

/// One CSV row: metrics of one rendered setting of one novel view.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub view: usize,
    pub mode: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
    pub valid_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub experiment: String,
    pub rows: Vec<ResultRow>,
    pub config: SceneConfig,
}

impl ExperimentResult {
    /// Rows whose `mode` column equals `mode`.
    pub fn rows_for<'a>(&'a self, mode: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.mode == mode)
    }

    /// Mean PSNR over the rows of `mode`; `None` when there are none.
    pub fn mean_psnr(&self, mode: &str) -> Option<f64> {
        let (sum, n) = self.rows_for(mode).fold((0.0, 0), |(s, n), r| (s + r.psnr, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        for row in &self.rows {
            csv.serialize(row)?;
        }
        csv.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    KSweep,
    Selection,
    Fusion,
    MaskMode,
    SparseViews,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::KSweep,
        Ablation::Selection,
        Ablation::Fusion,
        Ablation::MaskMode,
        Ablation::SparseViews,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Ablation::KSweep => "k-sweep",
            Ablation::Selection => "selection",
            Ablation::Fusion => "fusion",
            Ablation::MaskMode => "mask-mode",
            Ablation::SparseViews => "sparse-views",
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ablation `{s}`")))
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Images and metrics of a `render` run.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub images: Vec<Image>,
    pub ground_truth: Vec<Image>,
    /// Selected candidates per view, as lists of input camera indices.
    pub supports: Vec<Vec<Vec<usize>>>,
    pub result: ExperimentResult,
}

impl RenderOutput {
    /// Writes `view_NNN` renders, `view_NNN_gt` references, `results.csv` and
    /// the resolved `config.toml` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let format = self.result.config.render.image_format;
        for (view, (img, gt)) in self.images.iter().zip(&self.ground_truth).enumerate() {
            write_image(img, dir.join(format!("view_{view:03}.{}", format.extension())), format)?;
            write_image(gt, dir.join(format!("view_{view:03}_gt.{}", format.extension())), format)?;
        }
        self.result.write_csv(dir.join("results.csv"))?;
        write_config_echo(&self.result.config, dir)
    }
}

/// Writes the resolved configuration next to experiment outputs.
pub fn write_config_echo(config: &SceneConfig, dir: &Path) -> Result<()> {
    let path = dir.join("config.toml");
    fs::write(&path, config.to_toml()?).map_err(|e| Error::io(path, e))
}

struct Scene<'a> {
    config: &'a SceneConfig,
    field: SceneField,
    inputs: Vec<Camera>,
    novels: Vec<Camera>,
    render: RenderConfig,
}

impl<'a> Scene<'a> {
    fn new(config: &'a SceneConfig) -> Result<Self> {
        config.validate()?;
        Ok(Scene {
            config,
            field: config.scene_field()?,
            inputs: config.input_cameras()?,
            novels: config.novel_cameras()?,
            render: config.render_config(),
        })
    }
}

/// Candidates, selection inputs and the reference image for one novel view.
struct ViewContext<'a> {
    scene: &'a Scene<'a>,
    novel: Camera,
    pool: CandidatePool,
    ground_truth: Image,
}

impl<'a> ViewContext<'a> {
    fn new(scene: &'a Scene<'a>, view: usize, inputs: &[Camera]) -> Result<Self> {
        let novel = scene.novels[view];
        let pool = build_pool(&scene.field, &novel, inputs, &scene.config.volumes)?;
        let ground_truth = render_field(&novel, &scene.field, &scene.render);
        Ok(ViewContext {
            scene,
            novel,
            pool,
            ground_truth,
        })
    }

    /// Candidate masks at the reduced selection resolution.
    fn masks(&self, mode: MaskMode) -> Vec<VisibilityMask2D> {
        let coarse = self.novel.downsampled(self.scene.config.render.mask_downsample);
        self.pool
            .volumes
            .iter()
            .map(|cv| render_visibility_mask(&coarse, cv, &self.scene.render.quadrature, mode))
            .collect()
    }

    fn select(&self, strategy: SelectionStrategy, k: usize, mode: MaskMode) -> Result<SupportSet> {
        let k = k.min(self.pool.len());
        match strategy {
            SelectionStrategy::Greedy => select_greedy(&SelectionObjective::new(self.masks(mode))?, k),
            SelectionStrategy::MaxVisibility => {
                select_max_visibility(&SelectionObjective::new(self.masks(mode))?, k)
            }
            SelectionStrategy::NearestPose => select_nearest_pose(&self.novel, &self.pool.anchors(), k),
        }
    }

    fn render(&self, support: &SupportSet, config: &RenderConfig) -> Result<(Image, MetricReport)> {
        let image = render(&self.novel, support, &self.pool.volumes, config)?;
        let report = MetricReport::compute(&image, &self.ground_truth)?;
        Ok((image, report))
    }

    fn run(
        &self,
        strategy: SelectionStrategy,
        k: usize,
        config: &RenderConfig,
    ) -> Result<(Image, SupportSet, MetricReport)> {
        let support = self.select(strategy, k, config.mask_mode)?;
        let (image, report) = self.render(&support, config)?;
        Ok((image, support, report))
    }
}

fn row(experiment: &str, view: usize, mode: impl Into<String>, k: usize, config: &RenderConfig, m: &MetricReport) -> ResultRow {
    ResultRow {
        experiment: experiment.to_owned(),
        view,
        mode: mode.into(),
        k,
        j: config.quadrature.samples,
        psnr: m.psnr,
        ssim: m.ssim,
        mse: m.mse,
        valid_fraction: m.valid_pixel_fraction,
        seed: config.quadrature.seed,
    }
}

/// Renders every novel view in `mode` with the configured selection strategy,
/// scoring each against an analytic render of the scene field.
pub fn run_render(config: &SceneConfig, mode: FusionMode) -> Result<RenderOutput> {
    let scene = Scene::new(config)?;
    let settings = RenderConfig {
        fusion_mode: mode,
        ..scene.render
    };
    let mut images = Vec::new();
    let mut ground_truth = Vec::new();
    let mut supports = Vec::new();
    let mut rows = Vec::new();
    for view in 0..scene.novels.len() {
        let out = (|| {
            let ctx = ViewContext::new(&scene, view, &scene.inputs)?;
            let (image, support, report) = ctx.run(config.render.selection, config.render.support, &settings)?;
            info!(
                "view {view}: {} K={} psnr {:.2} dB, ssim {:.4}",
                mode.name(),
                support.len(),
                report.psnr,
                report.ssim
            );
            let members = support.indices().iter().map(|&i| ctx.pool.members[i].clone()).collect();
            Ok::<_, Error>((image, ctx.ground_truth, members, row("render", view, mode.name(), support.len(), &settings, &report)))
        })()
        .map_err(|e| e.in_view(view))?;
        images.push(out.0);
        ground_truth.push(out.1);
        supports.push(out.2);
        rows.push(out.3);
    }
    Ok(RenderOutput {
        images,
        ground_truth,
        supports,
        result: ExperimentResult {
            experiment: "render".into(),
            rows,
            config: config.clone(),
        },
    })
}

/// Sweeps one dimension of the configuration, one row per setting per view.
///
/// - `k-sweep`: K in 1..=5 (capped at the candidate count).
/// - `selection`: greedy, max-visibility and nearest-pose on the same candidates.
/// - `fusion`: every fusion mode.
/// - `mask-mode`: continuous and binary scores, plus a `continuous-minus-binary`
///   row holding the metric differences.
/// - `sparse-views`: every f-th input camera for f in 1..=4; rows `combined-xf`
///   use the configured K, rows `single-xf` use K = 1.
pub fn run_ablation(config: &SceneConfig, ablation: Ablation) -> Result<ExperimentResult> {
    let scene = Scene::new(config)?;
    let name = ablation.name();
    let base = scene.render;
    let strategy = config.render.selection;
    let k = config.render.support;
    let mut rows = Vec::new();
    for view in 0..scene.novels.len() {
        let mut view_rows = (|| -> Result<Vec<ResultRow>> {
            let mut out = Vec::new();
            if ablation == Ablation::SparseViews {
                return sparse_views(&scene, view, &mut out).map(|_| out);
            }
            let ctx = ViewContext::new(&scene, view, &scene.inputs)?;
            match ablation {
                Ablation::KSweep => {
                    for k in K_SWEEP {
                        let (_, s, m) = ctx.run(strategy, k, &base)?;
                        out.push(row(name, view, base.fusion_mode.name(), s.len(), &base, &m));
                    }
                }
                Ablation::Selection => {
                    for strategy in SelectionStrategy::ALL {
                        let (_, s, m) = ctx.run(strategy, k, &base)?;
                        out.push(row(name, view, strategy.name(), s.len(), &base, &m));
                    }
                }
                Ablation::Fusion => {
                    let support = ctx.select(strategy, k, base.mask_mode)?;
                    for mode in FusionMode::ALL {
                        let cfg = RenderConfig {
                            fusion_mode: mode,
                            ..base
                        };
                        let (_, m) = ctx.render(&support, &cfg)?;
                        out.push(row(name, view, mode.name(), support.len(), &cfg, &m));
                    }
                }
                Ablation::MaskMode => {
                    let mut reports = Vec::new();
                    for mode in [MaskMode::Continuous, MaskMode::Binary] {
                        let cfg = RenderConfig {
                            mask_mode: mode,
                            ..base
                        };
                        let (_, s, m) = ctx.run(strategy, k, &cfg)?;
                        out.push(row(name, view, mode.name(), s.len(), &cfg, &m));
                        reports.push(m);
                    }
                    let delta = MetricReport {
                        psnr: reports[0].psnr - reports[1].psnr,
                        ssim: reports[0].ssim - reports[1].ssim,
                        mse: reports[0].mse - reports[1].mse,
                        valid_pixel_fraction: reports[0].valid_pixel_fraction - reports[1].valid_pixel_fraction,
                    };
                    out.push(row(name, view, "continuous-minus-binary", out[0].k, &base, &delta));
                }
                Ablation::SparseViews => unreachable!("handled above"),
            }
            Ok(out)
        })()
        .map_err(|e| e.in_view(view))?;
        info!("{name}: view {view} done ({} rows)", view_rows.len());
        rows.append(&mut view_rows);
    }
    Ok(ExperimentResult {
        experiment: name.into(),
        rows,
        config: config.clone(),
    })
}

fn sparse_views(scene: &Scene<'_>, view: usize, out: &mut Vec<ResultRow>) -> Result<()> {
    let config = scene.config;
    if config.volumes.policy == PoolPolicy::Explicit {
        return Err(Error::InvalidArgument(
            "sparse-views needs a sliding or exhaustive pool; explicit candidates name fixed cameras".into(),
        ));
    }
    let base = scene.render;
    for factor in SPARSE_FACTORS {
        let inputs: Vec<Camera> = scene.inputs.iter().step_by(factor).copied().collect();
        if inputs.len() < config.volumes.members {
            warn!(
                "sparse-views: factor {factor} leaves {} inputs, fewer than {} members; skipped",
                inputs.len(),
                config.volumes.members
            );
            continue;
        }
        let ctx = ViewContext::new(scene, view, &inputs)?;
        for (label, k) in [("combined", config.render.support), ("single", 1)] {
            let (_, s, m) = ctx.run(config.render.selection, k, &base)?;
            out.push(row("sparse-views", view, format!("{label}-x{factor}"), s.len(), &base, &m));
        }
    }
    Ok(())
}

/// Selection-resolution masks of every candidate of one novel view.
pub fn candidate_masks(config: &SceneConfig, view: usize, mode: MaskMode) -> Result<Vec<VisibilityMask2D>> {
    let scene = Scene::new(config)?;
    if view >= scene.novels.len() {
        return Err(Error::InvalidArgument(format!(
            "novel view {view} does not exist ({} views)",
            scene.novels.len()
        )));
    }
    let novel = scene.novels[view];
    let pool = build_pool(&scene.field, &novel, &scene.inputs, &config.volumes).map_err(|e| e.in_view(view))?;
    let coarse = novel.downsampled(config.render.mask_downsample);
    Ok(pool
        .volumes
        .iter()
        .map(|cv| render_visibility_mask(&coarse, cv, &scene.render.quadrature, mode))
        .collect())
}
