//! Support cost-volume selection as soft maximum coverage.
//!
//! The set value is `f(S) = sum_pixels (1 - prod_{k in S} (1 - M_k))`, the mass
//! covered after running the residual update `P <- P (1 - M_k)` for every member
//! of `S`. `f` is monotone submodular, so greedy selection is within `1 - 1/e` of
//! the optimum.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::geometry::{pose_distance, Camera};
use crate::visibility::{coverage_ratio, update_coverage, CoverageMap, VisibilityMask2D};

/// Default limit on the number of subsets [`select_bruteforce`] will enumerate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Ordered, duplicate-free candidate indices with a fixed capacity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    indices: Vec<usize>,
    capacity: usize,
}

impl SupportSet {
    pub fn new(indices: Vec<usize>, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("support capacity must be positive".into()));
        }
        if indices.len() > capacity {
            return Err(Error::InvalidArgument(format!(
                "{} indices exceed support capacity {capacity}",
                indices.len()
            )));
        }
        if !indices.iter().all_unique() {
            return Err(Error::InvalidArgument(format!(
                "support indices must be distinct: {indices:?}"
            )));
        }
        Ok(SupportSet { indices, capacity })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Candidate 2D visibility masks sharing one resolution.
#[derive(Debug, Clone)]
pub struct SelectionObjective {
    masks: Vec<VisibilityMask2D>,
}

impl SelectionObjective {
    pub fn new(masks: Vec<VisibilityMask2D>) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::InvalidArgument("selection needs at least one candidate".into()))?;
        let dims = (first.width(), first.height());
        if let Some(bad) = masks.iter().find(|m| (m.width(), m.height()) != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: (bad.width(), bad.height()),
            });
        }
        Ok(SelectionObjective { masks })
    }

    pub fn masks(&self) -> &[VisibilityMask2D] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    fn dims(&self) -> (usize, usize) {
        (self.masks[0].width(), self.masks[0].height())
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::InvalidArgument("support size must be at least 1".into()));
        }
        if k > self.len() {
            return Err(Error::SupportTooLarge { k, n: self.len() });
        }
        Ok(())
    }
}

/// Closed-form soft coverage of `subset`.
pub fn objective_value(objective: &SelectionObjective, subset: &[usize]) -> Result<f64> {
    if let Some(&bad) = subset.iter().find(|&&i| i >= objective.len()) {
        return Err(Error::InvalidArgument(format!(
            "candidate index {bad} out of range for {} masks",
            objective.len()
        )));
    }
    let (w, h) = objective.dims();
    Ok((0..w * h)
        .map(|p| {
            let uncovered: f64 = subset
                .iter()
                .map(|&k| 1.0 - objective.masks[k].values()[p])
                .product();
            1.0 - uncovered
        })
        .sum())
}

/// Full record of a greedy run.
#[derive(Debug, Clone)]
pub struct GreedyTrace {
    pub support: SupportSet,
    /// Coverage ratio of each pick at the time it was taken.
    pub gains: Vec<f64>,
    /// Residual coverage after the last pick.
    pub residual: CoverageMap,
}

/// Greedy support selection: repeatedly take the unselected candidate with the
/// largest remaining coverage ratio (ties to the lowest index), then discount the
/// coverage map by its mask.
pub fn select_greedy_traced(objective: &SelectionObjective, k: usize) -> Result<GreedyTrace> {
    objective.check_k(k)?;
    let (w, h) = objective.dims();
    let mut coverage = CoverageMap::ones(w, h);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut gains = Vec::with_capacity(k);
    while chosen.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for (i, mask) in objective.masks.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let ratio = coverage_ratio(&coverage, mask)?;
            if best.is_none_or(|(_, max)| ratio > max) {
                best = Some((i, ratio));
            }
        }
        let (idx, gain) = best.expect("k <= N leaves an unselected candidate");
        coverage = update_coverage(&coverage, &objective.masks[idx])?;
        chosen.push(idx);
        gains.push(gain);
    }
    Ok(GreedyTrace {
        support: SupportSet::new(chosen, k)?,
        gains,
        residual: coverage,
    })
}

pub fn select_greedy(objective: &SelectionObjective, k: usize) -> Result<SupportSet> {
    select_greedy_traced(objective, k).map(|t| t.support)
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Exhaustive maximizer over all `k`-subsets; ties go to the lexicographically
/// smallest index set. Returns indices in ascending order.
pub fn select_bruteforce(objective: &SelectionObjective, k: usize, cap: u128) -> Result<SupportSet> {
    objective.check_k(k)?;
    let count = binomial(objective.len(), k);
    if count > cap {
        return Err(Error::CombinatorialCap { count, cap });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for subset in (0..objective.len()).combinations(k) {
        let value = objective_value(objective, &subset)?;
        if best.as_ref().is_none_or(|(_, max)| value > *max) {
            best = Some((subset, value));
        }
    }
    let (indices, _) = best.expect("at least one subset exists for k <= N");
    SupportSet::new(indices, k)
}

/// The `k` candidates whose anchor cameras are closest to the novel view.
pub fn select_nearest_pose(novel: &Camera, anchors: &[Camera], k: usize) -> Result<SupportSet> {
    if k == 0 || k > anchors.len() {
        return Err(Error::SupportTooLarge { k, n: anchors.len() });
    }
    let indices = anchors
        .iter()
        .enumerate()
        .map(|(i, cam)| (i, pose_distance(novel, cam)))
        .sorted_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .take(k)
        .collect();
    SupportSet::new(indices, k)
}

/// Top `k` candidates by total mask mass, scored independently.
pub fn select_max_visibility(objective: &SelectionObjective, k: usize) -> Result<SupportSet> {
    objective.check_k(k)?;
    let indices = objective
        .masks
        .iter()
        .enumerate()
        .map(|(i, m)| (i, m.sum()))
        .sorted_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .take(k)
        .collect();
    SupportSet::new(indices, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, CameraPose};
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn mask(values: &[f64]) -> VisibilityMask2D {
        VisibilityMask2D::new(2, values.len() / 2, values.to_vec()).unwrap()
    }

    /// The 2x2 worked example: rows of M1, M2, M3.
    fn worked_example() -> SelectionObjective {
        SelectionObjective::new(vec![
            mask(&[1.0, 1.0, 0.0, 0.0]),
            mask(&[0.0, 0.0, 1.0, 1.0]),
            mask(&[1.0, 0.0, 1.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn greedy_worked_example() {
        let trace = select_greedy_traced(&worked_example(), 2).unwrap();
        assert_eq!(trace.support.indices(), &[0, 1]);
        assert_eq!(trace.gains, vec![2.0, 2.0]);
        assert!(trace.residual.values().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn greedy_exhausts_all_candidates() {
        let s = select_greedy(&worked_example(), 3).unwrap();
        assert_eq!(s.indices(), &[0, 1, 2]);
    }

    #[test]
    fn greedy_prefers_dominant_mask() {
        let obj = SelectionObjective::new(vec![
            mask(&[0.3, 0.9, 0.1, 0.0]),
            mask(&[1.0, 1.0, 1.0, 1.0]),
            mask(&[0.5, 0.5, 0.5, 0.5]),
        ])
        .unwrap();
        assert_eq!(select_greedy(&obj, 1).unwrap().indices(), &[1]);
    }

    #[test]
    fn greedy_pads_with_zero_gain_picks() {
        let obj = SelectionObjective::new(vec![
            mask(&[0.0, 0.0]),
            mask(&[1.0, 1.0]),
            mask(&[0.0, 0.0]),
        ])
        .unwrap();
        let trace = select_greedy_traced(&obj, 3).unwrap();
        assert_eq!(trace.support.indices(), &[1, 0, 2]);
        assert_eq!(trace.gains, vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn k_larger_than_n_rejected() {
        assert!(matches!(
            select_greedy(&worked_example(), 4),
            Err(Error::SupportTooLarge { k: 4, n: 3 })
        ));
        assert!(select_max_visibility(&worked_example(), 4).is_err());
        assert!(select_bruteforce(&worked_example(), 4, DEFAULT_ENUMERATION_CAP).is_err());
    }

    #[test]
    fn objective_examples() {
        let obj = worked_example();
        assert_eq!(objective_value(&obj, &[]).unwrap(), 0.0);
        assert_eq!(objective_value(&obj, &[2]).unwrap(), 2.0);
        let halves = SelectionObjective::new(vec![mask(&[0.5; 4]), mask(&[0.5; 4])]).unwrap();
        assert_eq!(objective_value(&halves, &[0, 1]).unwrap(), 3.0);
        assert!(objective_value(&obj, &[3]).is_err());
    }

    #[test]
    fn bruteforce_worked_example() {
        let obj = worked_example();
        let best = select_bruteforce(&obj, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(best.indices(), &[0, 1]);
        assert_eq!(objective_value(&obj, best.indices()).unwrap(), 4.0);
        let single = select_bruteforce(&obj, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(single.indices(), &[0]);
    }

    #[test]
    fn bruteforce_cap_enforced() {
        let obj = worked_example();
        assert!(matches!(
            select_bruteforce(&obj, 2, 2),
            Err(Error::CombinatorialCap { count: 3, cap: 2 })
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(3, 3), 1);
        assert_eq!(binomial(2, 3), 0);
        assert_eq!(binomial(30, 15), 155_117_520);
    }

    fn camera_at(x: f64) -> Camera {
        let k = CameraIntrinsics::from_fov_y(4, 4, 60.0).unwrap();
        let c = Vector3::new(x, 0.0, 0.0);
        let pose = CameraPose::look_at(c, c + Vector3::z(), Vector3::y()).unwrap();
        Camera::new(k, pose, 0.1, 10.0).unwrap()
    }

    #[test]
    fn nearest_pose_examples() {
        let novel = camera_at(0.0);
        let anchors = [camera_at(3.0), camera_at(1.0), camera_at(-2.0)];
        assert_eq!(select_nearest_pose(&novel, &anchors, 2).unwrap().indices(), &[1, 2]);
        assert_eq!(select_nearest_pose(&novel, &anchors, 3).unwrap().indices(), &[1, 2, 0]);
        let tied = [camera_at(2.0), camera_at(-1.0), camera_at(1.0)];
        assert_eq!(select_nearest_pose(&novel, &tied, 1).unwrap().indices(), &[1]);
        assert!(select_nearest_pose(&novel, &tied, 4).is_err());
    }

    #[test]
    fn max_visibility_ties_by_index() {
        let obj = SelectionObjective::new(vec![
            mask(&[1.0, 1.0, 1.0, 1.0]),
            mask(&[1.0, 1.0, 0.0, 0.0]),
            mask(&[0.0, 0.0, 1.0, 1.0]),
        ])
        .unwrap();
        assert_eq!(select_max_visibility(&obj, 2).unwrap().indices(), &[0, 1]);
        assert_eq!(select_max_visibility(&worked_example(), 2).unwrap().indices(), &[0, 1]);
    }

    #[test]
    fn max_visibility_can_trail_greedy_on_overlap() {
        // Two heavy masks covering the same pixels and a light disjoint one.
        let obj = SelectionObjective::new(vec![
            mask(&[1.0, 1.0, 0.0, 0.0]),
            mask(&[1.0, 1.0, 0.0, 0.0]),
            mask(&[0.0, 0.0, 0.9, 0.0]),
        ])
        .unwrap();
        let greedy = select_greedy(&obj, 2).unwrap();
        let maxvis = select_max_visibility(&obj, 2).unwrap();
        assert_eq!(greedy.indices(), &[0, 2]);
        assert_eq!(maxvis.indices(), &[0, 1]);
        assert!(objective_value(&obj, greedy.indices()).unwrap() > objective_value(&obj, maxvis.indices()).unwrap());
    }

    #[test]
    fn support_set_validation() {
        assert!(SupportSet::new(vec![0, 0], 2).is_err());
        assert!(SupportSet::new(vec![0, 1, 2], 2).is_err());
        assert!(SupportSet::new(vec![], 0).is_err());
        assert!(SelectionObjective::new(vec![]).is_err());
        assert!(SelectionObjective::new(vec![mask(&[0.0; 4]), mask(&[0.0; 2])]).is_err());
    }

    fn arb_objective() -> impl Strategy<Value = SelectionObjective> {
        (1usize..=8, 1usize..=3, 1usize..=3).prop_flat_map(|(n, w, h)| {
            prop::collection::vec(prop::collection::vec(0.0..=1.0f64, w * h), n).prop_map(move |ms| {
                SelectionObjective::new(
                    ms.into_iter().map(|v| VisibilityMask2D::new(w, h, v).unwrap()).collect(),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn greedy_gains_never_increase(obj in arb_objective(), k in 1usize..=8) {
            let k = k.min(obj.len());
            let trace = select_greedy_traced(&obj, k).unwrap();
            for pair in trace.gains.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-12);
            }
        }

        #[test]
        fn objective_is_monotone(obj in arb_objective(), picks in prop::collection::vec(0usize..8, 0..6)) {
            let picks: Vec<usize> = picks.into_iter().filter(|&i| i < obj.len()).unique().collect();
            let mut prev = 0.0;
            for end in 0..=picks.len() {
                let v = objective_value(&obj, &picks[..end]).unwrap();
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }

        #[test]
        fn greedy_first_pick_is_max_visibility(obj in arb_objective()) {
            prop_assert_eq!(select_greedy(&obj, 1).unwrap(), select_max_visibility(&obj, 1).unwrap());
        }

        #[test]
        fn selection_is_deterministic(obj in arb_objective(), k in 1usize..=8) {
            let k = k.min(obj.len());
            prop_assert_eq!(select_greedy(&obj, k).unwrap(), select_greedy(&obj, k).unwrap());
        }

        #[test]
        fn greedy_within_approximation_bound(obj in arb_objective(), k in 1usize..=4) {
            let k = k.min(obj.len());
            let greedy = objective_value(&obj, select_greedy(&obj, k).unwrap().indices()).unwrap();
            let best = objective_value(&obj, select_bruteforce(&obj, k, DEFAULT_ENUMERATION_CAP).unwrap().indices()).unwrap();
            prop_assert!(greedy >= (1.0 - (-1.0f64).exp()) * best - 1e-12);
            prop_assert!(best >= greedy - 1e-9);
        }
    }
}
