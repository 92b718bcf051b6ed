//! Scene configuration, candidate pools and experiment drivers.

pub mod config;
pub mod experiment;
pub mod io;
pub mod pool;

pub use config::{parse_scene_config, ImageFormat, PoolPolicy, SceneConfig, SelectionStrategy};
pub use experiment::{
    candidate_masks, run_ablation, run_render, Ablation, ExperimentResult, RenderOutput, ResultRow,
};
pub use io::{write_image, write_mask};
pub use pool::{build_pool, candidate_members, CandidatePool};
