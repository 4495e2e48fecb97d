//! Instance-level semantic graph built by fusing per-frame detections.
//!
//! A detection is merged into an existing node when its descriptor's cosine
//! similarity exceeds `tau_sem` *and* more than `tau_geo` of its points have a
//! neighbour in the node's point set closer than `epsilon`. Both comparisons
//! are strict.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Vec3};
use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("descriptor dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("descriptor has zero norm")]
    ZeroDescriptor,
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("invalid fusion config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub tau_sem: f64,
    pub tau_geo: f64,
    /// Nearest-neighbour radius, meters.
    pub epsilon: f64,
    /// Voxel edge used to thin accumulated points, meters.
    pub downsample_voxel: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { tau_sem: 0.8, tau_geo: 0.8, epsilon: 0.05, downsample_voxel: 0.02 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let in_unit = |t: f64| t > 0.0 && t <= 1.0;
        if !in_unit(self.tau_sem) || !in_unit(self.tau_geo) {
            return Err(FusionError::InvalidConfig("thresholds must lie in (0, 1]"));
        }
        if !(self.epsilon > 0.0) {
            return Err(FusionError::InvalidConfig("epsilon must be positive"));
        }
        if !(self.downsample_voxel > 0.0) {
            return Err(FusionError::InvalidConfig("downsample_voxel must be positive"));
        }
        Ok(())
    }
}

/// One segmented object observation in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub descriptor: Vec<f64>,
    pub points: Vec<Vec3>,
    pub timestamp: f64,
}

impl Detection {
    pub fn new(
        label: impl Into<String>,
        descriptor: Vec<f64>,
        points: Vec<Vec3>,
        timestamp: f64,
    ) -> Result<Self, FusionError> {
        let d = Detection { label: label.into(), descriptor, points, timestamp };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if self.points.is_empty() {
            return Err(FusionError::EmptyPointSet);
        }
        if norm(&self.descriptor) == 0.0 {
            return Err(FusionError::ZeroDescriptor);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceNode {
    pub id: u32,
    pub label: String,
    /// Unit-norm fused descriptor.
    pub descriptor: Vec<f64>,
    pub points: Vec<Vec3>,
    pub bbox: Aabb,
    pub observation_count: u32,
}

/// Anything that carries a descriptor and a point set.
pub trait FusionSource {
    fn descriptor(&self) -> &[f64];
    fn points(&self) -> &[Vec3];
}

impl FusionSource for Detection {
    fn descriptor(&self) -> &[f64] {
        &self.descriptor
    }
    fn points(&self) -> &[Vec3] {
        &self.points
    }
}

impl FusionSource for InstanceNode {
    fn descriptor(&self) -> &[f64] {
        &self.descriptor
    }
    fn points(&self) -> &[Vec3] {
        &self.points
    }
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum())
}

/// Cosine similarity of two descriptors.
pub fn semantic_similarity(a: &[f64], b: &[f64]) -> Result<f64, FusionError> {
    if a.len() != b.len() {
        return Err(FusionError::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(FusionError::ZeroDescriptor);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(math::clamp(dot / (na * nb), -1.0, 1.0))
}

/// Uniform hash grid over a point set answering "is there a point closer than
/// `radius`" queries. Cells are `2·radius` wide so a qualifying neighbour is
/// always in one of the 27 cells around the query, even under rounding of the
/// cell index computation.
#[derive(Debug, Clone)]
pub struct PointIndex<'a> {
    points: &'a [Vec3],
    radius: f64,
    cell: f64,
    cells: BTreeMap<(i64, i64, i64), Vec<u32>>,
}

impl<'a> PointIndex<'a> {
    pub fn new(points: &'a [Vec3], radius: f64) -> Self {
        let cell = 2.0 * radius;
        let mut cells: BTreeMap<(i64, i64, i64), Vec<u32>> = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_key(*p, cell)).or_default().push(i as u32);
        }
        PointIndex { points, radius, cell, cells }
    }

    /// True when some indexed point `q` satisfies `‖p − q‖ < radius`.
    pub fn has_neighbor_within(&self, p: Vec3) -> bool {
        let (cx, cy, cz) = cell_key(p, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        if ids.iter().any(|&i| (p - self.points[i as usize]).norm() < self.radius) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

fn cell_key(p: Vec3, cell: f64) -> (i64, i64, i64) {
    (
        math::floor(p.x / cell) as i64,
        math::floor(p.y / cell) as i64,
        math::floor(p.z / cell) as i64,
    )
}

/// Number of points in `query` with a neighbour in `reference` closer than `epsilon`.
pub fn count_matched_points(query: &[Vec3], reference: &[Vec3], epsilon: f64) -> usize {
    let index = PointIndex::new(reference, epsilon);
    query.iter().filter(|p| index.has_neighbor_within(**p)).count()
}

/// Fraction of `query` points whose nearest neighbour in `reference` lies
/// strictly within `epsilon`. Not symmetric.
pub fn geometric_similarity(query: &[Vec3], reference: &[Vec3], epsilon: f64) -> Result<f64, FusionError> {
    if query.is_empty() || reference.is_empty() {
        return Err(FusionError::EmptyPointSet);
    }
    Ok(count_matched_points(query, reference, epsilon) as f64 / query.len() as f64)
}

/// Merge test. `incoming` plays the query side of the geometric criterion, so a
/// partial view of a larger known object still merges.
pub fn should_merge<S: FusionSource + ?Sized>(
    incoming: &S,
    node: &InstanceNode,
    cfg: &FusionConfig,
) -> Result<bool, FusionError> {
    let sem = semantic_similarity(incoming.descriptor(), &node.descriptor)?;
    if !(sem > cfg.tau_sem) {
        return Ok(false);
    }
    let geo = geometric_similarity(incoming.points(), &node.points, cfg.epsilon)?;
    Ok(geo > cfg.tau_geo)
}

/// Keeps the first point that lands in each voxel; output ordered by voxel key.
pub fn voxel_downsample(points: &[Vec3], voxel: f64) -> Vec<Vec3> {
    let mut kept: BTreeMap<(i64, i64, i64), Vec3> = BTreeMap::new();
    for p in points {
        kept.entry(cell_key(*p, voxel)).or_insert(*p);
    }
    kept.into_values().collect()
}

/// Result of ingesting one detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOutcome {
    pub node_id: u32,
    pub merged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceGraph {
    nodes: Vec<InstanceNode>,
    dim: usize,
    config: FusionConfig,
    next_id: u32,
}

impl InstanceGraph {
    pub fn new(dim: usize, config: FusionConfig) -> Result<Self, FusionError> {
        config.validate()?;
        Ok(InstanceGraph { nodes: Vec::new(), dim, config, next_id: 0 })
    }

    pub fn nodes(&self) -> &[InstanceNode] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> Option<&InstanceNode> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok().map(|i| &self.nodes[i])
    }

    pub fn contains(&self, id: u32) -> bool {
        self.node(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    /// Fuses `det` into the best matching node, or opens a new node.
    pub fn ingest(&mut self, det: &Detection) -> Result<IngestOutcome, FusionError> {
        det.validate()?;
        if det.descriptor.len() != self.dim {
            return Err(FusionError::DimensionMismatch { expected: self.dim, got: det.descriptor.len() });
        }

        let mut best: Option<(usize, f64)> = None;
        for (i, node) in self.nodes.iter().enumerate() {
            if should_merge(det, node, &self.config)? {
                let sem = semantic_similarity(&det.descriptor, &node.descriptor)?;
                // nodes are sorted by id, so keeping the first maximum breaks ties toward the lowest id
                if best.is_none_or(|(_, s)| sem > s) {
                    best = Some((i, sem));
                }
            }
        }

        let incoming = normalized(&det.descriptor);
        let det_box = Aabb::from_points(&det.points).ok_or(FusionError::EmptyPointSet)?;
        match best {
            Some((i, _)) => {
                let voxel = self.config.downsample_voxel;
                let node = &mut self.nodes[i];
                let n = node.observation_count as f64;
                let mixed: Vec<f64> =
                    node.descriptor.iter().zip(&incoming).map(|(a, b)| (a * n + b) / (n + 1.0)).collect();
                // antipodal descriptors cannot pass the similarity gate, so the mean is never zero
                node.descriptor = normalized(&mixed);
                let mut all = core::mem::take(&mut node.points);
                all.extend_from_slice(&det.points);
                node.points = voxel_downsample(&all, voxel);
                node.bbox = node.bbox.union(&det_box);
                node.observation_count += 1;
                Ok(IngestOutcome { node_id: node.id, merged: true })
            }
            None => {
                let id = self.next_id;
                self.next_id += 1;
                self.nodes.push(InstanceNode {
                    id,
                    label: det.label.clone(),
                    descriptor: incoming,
                    points: voxel_downsample(&det.points, self.config.downsample_voxel),
                    bbox: det_box,
                    observation_count: 1,
                });
                Ok(IngestOutcome { node_id: id, merged: false })
            }
        }
    }

    pub fn summary(&self) -> GraphSummary {
        graph_summary(self)
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

/// Symbolic view of one node handed to the task planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub id: u32,
    pub label: String,
    pub center: Vec3,
    pub extents: Vec3,
    pub point_count: usize,
    pub observation_count: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: Vec<NodeSummary>,
}

impl GraphSummary {
    pub fn get(&self, id: u32) -> Option<&NodeSummary> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Lowest-id node carrying `label`.
    pub fn find_label(&self, label: &str) -> Option<&NodeSummary> {
        self.nodes.iter().find(|n| n.label == label)
    }
}

pub fn graph_summary(g: &InstanceGraph) -> GraphSummary {
    GraphSummary {
        nodes: g
            .nodes
            .iter()
            .map(|n| NodeSummary {
                id: n.id,
                label: n.label.clone(),
                center: n.bbox.center(),
                extents: n.bbox.extents(),
                point_count: n.points.len(),
                observation_count: n.observation_count,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cube(center: Vec3, half: f64, step: f64) -> Vec<Vec3> {
        let n = (2.0 * half / step) as i32;
        let mut pts = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    pts.push(center + Vec3::new(i as f64, j as f64, k as f64) * step - Vec3::new(half, half, half));
                }
            }
        }
        pts
    }

    fn brute_count(a: &[Vec3], b: &[Vec3], eps: f64) -> usize {
        a.iter().filter(|p| b.iter().any(|q| (**p - *q).norm() < eps)).count()
    }

    #[test]
    fn semantic_examples() {
        let v = [0.3, -0.2, 0.9];
        assert_abs_diff_eq!(semantic_similarity(&v, &v).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(semantic_similarity(&v, &[-0.3, 0.2, -0.9]).unwrap(), -1.0, epsilon = 1e-15);
        let s = 1.0 / math::sqrt(2.0);
        assert_abs_diff_eq!(semantic_similarity(&[1.0, 0.0], &[s, s]).unwrap(), core::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_eq!(
            semantic_similarity(&[1.0, 0.0], &[1.0]),
            Err(FusionError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert_eq!(semantic_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(FusionError::ZeroDescriptor));
    }

    #[test]
    fn geometric_examples() {
        let p = cube(Vec3::ZERO, 0.1, 0.02);
        assert_eq!(geometric_similarity(&p, &p, 0.01).unwrap(), 1.0);
        let shifted: Vec<Vec3> = p.iter().map(|q| *q + Vec3::new(0.5, 0.0, 0.0)).collect();
        assert_eq!(geometric_similarity(&p, &shifted, 0.05).unwrap(), 0.0);
        assert_eq!(geometric_similarity(&[], &p, 0.05), Err(FusionError::EmptyPointSet));
        assert_eq!(geometric_similarity(&p, &[], 0.05), Err(FusionError::EmptyPointSet));
    }

    #[test]
    fn geometric_half_displaced_matches_brute_force() {
        // 100 points on a line 1 m apart; displacing every other one by 3ε leaves half matched
        let eps = 0.05;
        let a: Vec<Vec3> = (0..100).map(|i| Vec3::new(i as f64, 0.3, -0.2)).collect();
        let b: Vec<Vec3> = a
            .iter()
            .enumerate()
            .map(|(i, p)| if i % 2 == 0 { *p } else { *p + Vec3::new(0.0, 3.0 * eps, 0.0) })
            .collect();
        let expected = brute_count(&a, &b, eps) as f64 / 100.0;
        assert_eq!(expected, 0.5);
        assert_eq!(geometric_similarity(&a, &b, eps).unwrap(), expected);
    }

    fn node_from(det: &Detection, id: u32) -> InstanceNode {
        InstanceNode {
            id,
            label: det.label.clone(),
            descriptor: normalized(&det.descriptor),
            points: det.points.clone(),
            bbox: Aabb::from_points(&det.points).unwrap(),
            observation_count: 1,
        }
    }

    #[test]
    fn merge_thresholds_are_strict() {
        let cfg = FusionConfig::default();
        let pts = cube(Vec3::ZERO, 0.1, 0.05);
        let det = Detection::new("cup", vec![1.0, 0.0], pts.clone(), 0.0).unwrap();
        let node = node_from(&det, 0);
        assert!(should_merge(&det, &node, &cfg).unwrap());
        assert!(should_merge(&node, &node, &cfg).unwrap());

        // cosine exactly 0.8: (1,0)·(4,3)/5
        let mut at_sem = node.clone();
        at_sem.descriptor = vec![0.8, 0.6];
        assert_eq!(semantic_similarity(&det.descriptor, &[4.0, 3.0]).unwrap(), 0.8);
        let boundary = Detection::new("cup", vec![4.0, 3.0], pts.clone(), 0.0).unwrap();
        let reference = node_from(&Detection::new("cup", vec![1.0, 0.0], pts.clone(), 0.0).unwrap(), 0);
        assert!(!should_merge(&boundary, &reference, &cfg).unwrap());

        // geometric fraction exactly 4/5
        let q: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let r: Vec<Vec3> = q[..4].to_vec();
        let det5 = Detection::new("box", vec![1.0, 0.0], q, 0.0).unwrap();
        let node4 = node_from(&Detection::new("box", vec![1.0, 0.0], r, 0.0).unwrap(), 0);
        assert_eq!(geometric_similarity(&det5.points, &node4.points, cfg.epsilon).unwrap(), 0.8);
        assert!(!should_merge(&det5, &node4, &cfg).unwrap());

        let orth = Detection::new("cup", vec![0.0, 1.0], pts, 0.0).unwrap();
        assert!(!should_merge(&orth, &node, &cfg).unwrap());
    }

    #[test]
    fn ingest_examples() {
        let mut g = InstanceGraph::new(2, FusionConfig::default()).unwrap();
        let det = Detection::new("cup", vec![1.0, 0.1], cube(Vec3::ZERO, 0.05, 0.02), 0.0).unwrap();
        assert_eq!(g.ingest(&det).unwrap(), IngestOutcome { node_id: 0, merged: false });
        assert_eq!(g.len(), 1);
        assert_eq!(g.ingest(&det).unwrap(), IngestOutcome { node_id: 0, merged: true });
        assert_eq!(g.len(), 1);
        assert_eq!(g.node(0).unwrap().observation_count, 2);

        let far = Detection::new("cup", vec![1.0, 0.1], cube(Vec3::new(3.0, 0.0, 0.0), 0.05, 0.02), 1.0).unwrap();
        // independent check that the geometric criterion fails
        assert_eq!(brute_count(&far.points, &g.node(0).unwrap().points, 0.05), 0);
        assert!(!g.ingest(&far).unwrap().merged);
        assert_eq!(g.len(), 2);

        let bad = Detection::new("cup", vec![1.0, 0.0, 0.0], vec![Vec3::ZERO], 0.0).unwrap();
        assert_eq!(g.ingest(&bad), Err(FusionError::DimensionMismatch { expected: 2, got: 3 }));
    }

    #[test]
    fn multi_match_prefers_semantic_then_lowest_id() {
        let pts = cube(Vec3::ZERO, 0.05, 0.02);
        let mut g = InstanceGraph::new(2, FusionConfig::default()).unwrap();
        // force two overlapping nodes by ingesting with dissimilar descriptors
        g.ingest(&Detection::new("a", vec![1.0, 0.0], pts.clone(), 0.0).unwrap()).unwrap();
        g.ingest(&Detection::new("b", vec![0.0, 1.0], pts.clone(), 0.0).unwrap()).unwrap();
        let probe = Detection::new("x", vec![0.6, 0.8], pts.clone(), 0.0).unwrap();
        // cos to node0 = 0.6 (fails), node1 = 0.8 (fails strictly) -> new node
        assert_eq!(g.ingest(&probe).unwrap().node_id, 2);
        let probe = Detection::new("x", vec![1.0, 1.0], pts, 0.0).unwrap();
        // cos 0.7071 to nodes 0 and 1, 0.98995 to node 2
        assert_eq!(g.ingest(&probe).unwrap().node_id, 2);
    }

    #[test]
    fn summary_examples() {
        let g = InstanceGraph::new(2, FusionConfig::default()).unwrap();
        assert!(graph_summary(&g).nodes.is_empty());
        let mut g = g;
        for (i, x) in [0.0, 2.0, 4.0].iter().enumerate() {
            let pts = vec![Vec3::new(*x, 0.0, 0.0), Vec3::new(*x + 0.2, 0.4, 1.0)];
            g.ingest(&Detection::new("thing", vec![1.0, i as f64], pts, 0.0).unwrap()).unwrap();
        }
        let s = graph_summary(&g);
        assert_eq!(s.nodes.iter().map(|n| n.id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(s.nodes[0].center, Vec3::new(0.1, 0.2, 0.5));
        assert_eq!(s.nodes[0].extents, Vec3::new(0.2, 0.4, 1.0));
    }

    fn point_set(max: usize) -> impl Strategy<Value = Vec<Vec3>> {
        proptest::collection::vec((-0.3..0.3f64, -0.3..0.3f64, -0.3..0.3f64), 1..max)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect())
    }

    proptest! {
        #[test]
        fn index_matches_brute_force(a in point_set(200), b in point_set(200), eps in 0.01..0.2f64) {
            prop_assert_eq!(count_matched_points(&a, &b, eps), brute_count(&a, &b, eps));
        }

        #[test]
        fn fusion_keeps_invariants(dets in proptest::collection::vec((point_set(40), -1.0..1.0f64, 0.5..1.0f64), 1..12)) {
            let mut g = InstanceGraph::new(2, FusionConfig::default()).unwrap();
            let mut last = 0;
            for (pts, a, b) in dets {
                let det = Detection::new("obj", vec![a, b], pts, 0.0).unwrap();
                let before = g.node(0).cloned();
                let out = g.ingest(&det).unwrap();
                prop_assert!(g.len() >= last);
                last = g.len();
                let again = g.len();
                g.ingest(&det).unwrap();
                prop_assert_eq!(g.len(), again);
                for n in g.nodes() {
                    prop_assert!((norm(&n.descriptor) - 1.0).abs() < 1e-9);
                    prop_assert!(n.points.iter().all(|p| n.bbox.contains(*p)));
                }
                if out.merged && out.node_id == 0 {
                    let fused = g.node(0).unwrap();
                    let parent = before.unwrap();
                    prop_assert!(fused.bbox.contains_aabb(&parent.bbox));
                    prop_assert!(fused.bbox.contains_aabb(&Aabb::from_points(&det.points).unwrap()));
                }
            }
        }

        #[test]
        fn merge_invariant_under_rigid_motion(a in point_set(60), yaw in -3.0..3.0f64, t in (-5.0..5.0f64, -5.0..5.0f64, -1.0..1.0f64)) {
            let cfg = FusionConfig::default();
            let b: Vec<Vec3> = a.iter().map(|p| *p + Vec3::new(0.03, 0.0, 0.0)).collect();
            let pose = crate::geometry::Pose::new(Vec3::new(t.0, t.1, t.2), crate::geometry::UnitQuaternion::from_yaw(yaw));
            let det = Detection::new("o", vec![1.0, 0.0], a.clone(), 0.0).unwrap();
            let node = node_from(&Detection::new("o", vec![1.0, 0.0], b.clone(), 0.0).unwrap(), 0);
            let det_t = Detection::new("o", vec![1.0, 0.0], a.iter().map(|p| pose.transform_point(*p)).collect(), 0.0).unwrap();
            let node_t = node_from(&Detection::new("o", vec![1.0, 0.0], b.iter().map(|p| pose.transform_point(*p)).collect(), 0.0).unwrap(), 0);
            prop_assert_eq!(should_merge(&det, &node, &cfg).unwrap(), should_merge(&det_t, &node_t, &cfg).unwrap());
        }
    }
}
