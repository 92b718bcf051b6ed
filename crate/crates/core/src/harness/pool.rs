//! Candidate cost volumes for a novel view.

use itertools::Itertools;
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::field::{build_cost_volume, CostVolume, RadianceField};
use crate::geometry::{pose_distance, Camera, CameraPose};
use crate::harness::config::{PoolPolicy, VolumeConfig};

/// Candidate volumes with the input-camera indices each was built from.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub members: Vec<Vec<usize>>,
    pub volumes: Vec<CostVolume>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    /// One camera per candidate at the centroid of its members, oriented like
    /// the first member; used by the nearest-pose selection baseline.
    pub fn anchors(&self) -> Vec<Camera> {
        self.volumes
            .iter()
            .map(|cv| {
                let members = cv.members();
                let centroid = members.iter().map(Camera::center).sum::<Vector3<f64>>() / members.len() as f64;
                let first = members[0];
                let pose = CameraPose::from_center(*first.pose.rotation(), centroid)
                    .expect("rotation taken from a valid pose");
                Camera { pose, ..first }
            })
            .collect()
    }
}

/// Indices of the `n` input cameras closest to `novel` (ties to the lower
/// index), returned in ascending index order.
pub fn nearest_inputs(novel: &Camera, inputs: &[Camera], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.sort_by(|&a, &b| {
        pose_distance(novel, &inputs[a])
            .total_cmp(&pose_distance(novel, &inputs[b]))
            .then(a.cmp(&b))
    });
    order.truncate(n);
    order.sort_unstable();
    order
}

/// Member index sets for the candidates of one novel view.
pub fn candidate_members(novel: &Camera, inputs: &[Camera], params: &VolumeConfig) -> Result<Vec<Vec<usize>>> {
    let i = params.members;
    if params.policy == PoolPolicy::Explicit {
        if let Some(bad) = params.candidates.iter().flatten().find(|&&c| c >= inputs.len()) {
            return Err(Error::InvalidArgument(format!(
                "candidate camera {bad} does not exist ({} input cameras)",
                inputs.len()
            )));
        }
        return Ok(params.candidates.clone());
    }
    if inputs.len() < i {
        return Err(Error::InvalidArgument(format!(
            "{} input views cannot form cost volumes of {i} members",
            inputs.len()
        )));
    }
    let nearest = nearest_inputs(novel, inputs, params.nearest.min(inputs.len()));
    if nearest.len() < i {
        return Err(Error::InvalidArgument(format!(
            "only {} nearest views considered, cost volumes need {i}",
            nearest.len()
        )));
    }
    Ok(match params.policy {
        PoolPolicy::Sliding => nearest.windows(i).map(<[usize]>::to_vec).collect(),
        _ => nearest.into_iter().combinations(i).collect(),
    })
}

/// Builds every candidate volume on the novel view's frustum.
pub fn build_pool<F>(field: &F, novel: &Camera, inputs: &[Camera], params: &VolumeConfig) -> Result<CandidatePool>
where
    F: RadianceField + Sync,
{
    let members = candidate_members(novel, inputs, params)?;
    let corruption = params.corruption();
    let volumes = members
        .iter()
        .map(|set| {
            let cams: Vec<Camera> = set.iter().map(|&c| inputs[c]).collect();
            build_cost_volume(field, novel, &cams, params.resolution, &corruption)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidatePool { members, volumes })
}
