//! One replanning cycle: cell tour, local viewpoint ordering, next waypoint.

use std::collections::BTreeSet;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use super::cells::{cell_id_of, decompose_with_frontiers, Cell, CellKind};
use super::costs::{build_sop_matrix, build_tsp_matrix, CostMatrix};
use super::geodesic::{geodesic_matrix, snap_to_mask, DistanceField};
use super::solver::{solve_atsp, solve_sop};
use super::viewpoints::{
    cluster_frontiers, generate_object_frontiers, sample_viewpoints, turn_in_place_viewpoint,
    FrontierCluster, Viewpoint, ViewpointTarget,
};
use super::{PlannerError, PlannerMode, PlannerParams};
use crate::cache::{fallback_ray_pool, merge_frontier, FrontierSemantics, SemanticsSource, TemporalCache};
use crate::embedding::{cosine, normalize_similarity, Embedding, RunningMax};
use crate::geometry::{Aabb, Vec3};
use crate::memory::{pool_region_embedding, RegionPoolParams, SemanticMemory};
use crate::sim::{CameraIntrinsics, RobotPose};
use crate::voxel::{
    detect_frontiers, flood_fill, inflate_obstacles, CellState, Connectivity, TraversabilityMask,
    VoxelGrid, VoxelIndex,
};

/// Share of a current cluster's voxels that must belong to a previous
/// cluster for the two to be treated as the same frontier.
const PERSIST_OVERLAP: f64 = 0.5;
/// Search radius, in voxels, when the pose is not on a traversable voxel.
const POSE_SNAP_STEPS: i64 = 5;

/// Everything a cycle reads.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub grid: &'a VoxelGrid,
    pub memory: &'a SemanticMemory,
    pub pose: &'a RobotPose,
    pub query: &'a Embedding,
    pub rm: &'a RunningMax,
    pub intrinsics: &'a CameraIntrinsics,
    pub task_box: &'a Aabb,
    pub robot_radius: f64,
    pub params: &'a PlannerParams,
    pub region_params: &'a RegionPoolParams,
}

/// State carried between cycles of one mission.
#[derive(Debug, Clone, Default)]
pub struct PlannerState {
    /// Frontier clusters of the previous cycle with their cache semantics.
    prev_clusters: Vec<(FxHashSet<VoxelIndex>, FrontierSemantics)>,
    /// Arrivals at viewpoints targeting each frontier voxel.
    visits: FxHashMap<VoxelIndex, u32>,
    /// Instances whose object frontier was already visited.
    suppressed: BTreeSet<u32>,
}

impl PlannerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record arrival at the waypoint of `out`.
    pub fn mark_arrived(&mut self, out: &PlanOutput) {
        match out.waypoint.target {
            ViewpointTarget::Instance(id) => {
                self.suppressed.insert(id);
            }
            ViewpointTarget::Cluster(_) => {
                for v in &out.target_voxels {
                    *self.visits.entry(*v).or_default() += 1;
                }
            }
        }
    }

    pub fn suppressed(&self) -> &BTreeSet<u32> {
        &self.suppressed
    }

    fn exhausted(&self, v: VoxelIndex, limit: u32) -> bool {
        self.visits.get(&v).is_some_and(|&c| c >= limit)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterRecord {
    pub id: usize,
    pub size: usize,
    pub cell: usize,
    pub s_f: f64,
    pub c_f: f64,
    pub source: SemanticsSource,
}

/// Per-cycle debug record.
#[derive(Debug, Clone, Serialize)]
pub struct CycleDiagnostics {
    pub cells: Vec<Cell>,
    pub tsp_matrix: CostMatrix,
    pub tsp_factors: Vec<f64>,
    /// Node order of the cell tour (0 is the pose, `k` is `cells[k - 1]`).
    pub tour: Vec<usize>,
    pub current_cell: Option<usize>,
    pub next_cell: Option<usize>,
    pub clusters: Vec<ClusterRecord>,
    pub viewpoints: Vec<Viewpoint>,
    pub sop_matrix: CostMatrix,
    pub sop_factors: Vec<f64>,
    pub sop_order: Vec<usize>,
    pub waypoint: Viewpoint,
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub waypoint: Viewpoint,
    /// Voxel-center path from the pose to the waypoint.
    pub path: Vec<Vec3>,
    /// Frontier voxels of the targeted cluster (empty for object frontiers).
    pub target_voxels: Vec<VoxelIndex>,
    pub diagnostics: CycleDiagnostics,
}

/// True when no frontier inside `region` is reachable through Free space
/// (face connectivity) from the voxel containing `from`.
pub fn is_exploration_complete(grid: &VoxelGrid, from: &Vec3, region: &Aabb) -> bool {
    let Ok(seed) = grid.world_to_index(from) else {
        return true;
    };
    let reach = flood_fill(grid, seed, Connectivity::Face6, |v| {
        grid.state(v) == CellState::Free
    });
    !detect_frontiers(grid)
        .into_iter()
        .any(|f| reach[grid.linear(f)] && region.contains(&grid.center(f)))
}

/// Run one cycle. The cache is cleared before returning, whatever the
/// outcome.
pub fn plan_cycle(
    ctx: &PlanContext,
    cache: &mut TemporalCache,
    state: &mut PlannerState,
) -> Result<PlanOutput, PlannerError> {
    let out = plan(ctx, cache, state);
    cache.reset();
    out
}

/// Cell the cluster is filed under: the one holding its first voxel.
fn cluster_cell(ctx: &PlanContext, c: &FrontierCluster) -> usize {
    cell_id_of(ctx.task_box, ctx.params.cell_size, &ctx.grid.center(c.voxels[0]))
}

/// Nearest admitted voxel to the cell center that lies inside the cell.
fn cell_anchor(ctx: &PlanContext, mask: &TraversabilityMask, cell: &Cell, optimistic: bool) -> Option<VoxelIndex> {
    let half = (ctx.params.cell_size / ctx.grid.resolution() / 2.0).ceil() as i64;
    snap_to_mask(ctx.grid, mask, optimistic, &cell.center, half)
        .filter(|v| cell.region.contains(&ctx.grid.center(*v)))
}

fn plan(
    ctx: &PlanContext,
    cache: &TemporalCache,
    state: &mut PlannerState,
) -> Result<PlanOutput, PlannerError> {
    let grid = ctx.grid;
    let params = ctx.params;
    let semantic = params.mode.uses_semantics();
    let dim = ctx.query.dim();
    let instances = ctx.memory.instances();
    let mask = inflate_obstacles(grid, ctx.robot_radius);

    let pose_voxel = snap_to_mask(grid, &mask, false, &ctx.pose.position, POSE_SNAP_STEPS)
        .ok_or(PlannerError::NoFrontiers)?;

    let frontiers: Vec<VoxelIndex> = detect_frontiers(grid)
        .into_iter()
        .filter(|f| ctx.task_box.contains(&grid.center(*f)))
        .filter(|f| !state.exhausted(*f, params.max_cluster_visits))
        .collect();
    if frontiers.is_empty() {
        return Err(PlannerError::NoFrontiers);
    }
    let mut frontier_mask = vec![false; grid.len()];
    for f in &frontiers {
        frontier_mask[grid.linear(*f)] = true;
    }

    // cell tour
    let mut cells = decompose_with_frontiers(grid, ctx.task_box, params.cell_size, &frontier_mask, dim);
    if semantic {
        for c in cells.iter_mut().filter(|c| c.kind == CellKind::FreeSubregion) {
            c.embedding = pool_region_embedding(&c.center, instances, ctx.region_params, dim);
            c.similarity = normalize_similarity(cosine(&c.embedding, ctx.query), ctx.rm);
        }
    }
    // frontiers may all sit in cells too solid to classify; those are
    // handled below as unlisted clusters
    let (tsp_matrix, tsp_factors, tour) = if cells.is_empty() {
        (CostMatrix::zeros(1, 0), Vec::new(), vec![0])
    } else {
        let mut tsp_nodes = vec![Some(pose_voxel)];
        tsp_nodes.extend(cells.iter().map(|c| cell_anchor(ctx, &mask, c, true)));
        let (tsp_geo, _) = geodesic_matrix(grid, &mask, true, &tsp_nodes);
        let (m, f) = build_tsp_matrix(&cells, &tsp_geo, params)?;
        let tour = solve_atsp(&m);
        (m, f, tour)
    };

    // frontier clusters and their semantics
    let clusters = cluster_frontiers(grid, &frontiers, ctx.task_box, params.cluster_tile);
    let semantics: Vec<FrontierSemantics> = clusters
        .iter()
        .map(|c| {
            let curr = cache.frontier_embedding(&c.voxels);
            let prev = state.prev_clusters.iter().find(|(set, _)| {
                let shared = c.voxels.iter().filter(|v| set.contains(v)).count();
                shared as f64 >= PERSIST_OVERLAP * c.voxels.len() as f64
            });
            match prev {
                Some((_, p)) => merge_frontier(p, &curr),
                None => curr,
            }
        })
        .collect();
    state.prev_clusters = clusters
        .iter()
        .zip(&semantics)
        .map(|(c, s)| (c.voxels.iter().copied().collect(), s.clone()))
        .collect();

    let pose_field = DistanceField::compute(grid, &mask, false, pose_voxel, &[]);
    let reachable = |v: &Viewpoint| pose_field.distance(grid, v.voxel).is_some();

    // walk the tour to the first cell with a reachable viewpoint
    let cluster_cells: Vec<usize> = clusters.iter().map(|c| cluster_cell(ctx, c)).collect();
    let mut sampled: Vec<Option<Option<Viewpoint>>> = vec![None; clusters.len()];
    let mut sample = |k: usize| -> Option<Viewpoint> {
        sampled[k]
            .get_or_insert_with(|| {
                sample_viewpoints(grid, &mask, &clusters[k], ctx.intrinsics, params.viewpoint_ring_radius)
                    .ok()
                    .filter(reachable)
            })
            .clone()
    };
    let mut current: Option<usize> = None;
    let mut regular: Vec<Viewpoint> = Vec::new();
    for (pos, &node) in tour.iter().enumerate().skip(1) {
        let cell_id = cells[node - 1].id;
        let vps: Vec<Viewpoint> = (0..clusters.len())
            .filter(|k| cluster_cells[*k] == cell_id)
            .filter_map(&mut sample)
            .collect();
        if !vps.is_empty() {
            current = Some(pos);
            regular = vps;
            break;
        }
    }
    if current.is_none() {
        // clusters filed under cells that were dropped from the tour
        let listed: BTreeSet<usize> = cells.iter().map(|c| c.id).collect();
        regular = (0..clusters.len())
            .filter(|k| !listed.contains(&cluster_cells[*k]))
            .filter_map(&mut sample)
            .collect();
    }
    if regular.is_empty() {
        // nothing known-traversable near any cluster yet; look around first
        let mut order: Vec<usize> = (0..clusters.len()).collect();
        let here = grid.center(pose_voxel);
        order.sort_by(|a, b| {
            let da = (clusters[*a].centroid - here).norm();
            let db = (clusters[*b].centroid - here).norm();
            da.total_cmp(&db).then(a.cmp(b))
        });
        regular = order
            .into_iter()
            .find_map(|k| turn_in_place_viewpoint(grid, &clusters[k], ctx.intrinsics, pose_voxel))
            .into_iter()
            .collect();
    }
    if regular.is_empty() {
        return Err(PlannerError::NoFrontiers);
    }

    for vp in regular.iter_mut() {
        let ViewpointTarget::Cluster(k) = vp.target else {
            unreachable!("regular viewpoints target clusters");
        };
        let mut sem = semantics[k].clone();
        if sem.is_none() {
            sem = fallback_ray_pool(&ctx.pose.position, &vp.position, instances, grid.resolution(), dim);
        }
        vp.s_f = normalize_similarity(cosine(&sem.embedding, ctx.query), ctx.rm);
        vp.c_f = sem.confidence;
        vp.semantics = Some(sem.source);
    }

    // object frontiers for the current and next tour cells
    let current_cell = current.map(|p| tour[p] - 1);
    let next_cell = current.and_then(|p| tour.get(p + 1)).map(|n| n - 1);
    let mut viewpoints = regular;
    if params.mode != PlannerMode::Geometric {
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        for ci in [current_cell, next_cell].into_iter().flatten() {
            let cell = &cells[ci];
            if cell.kind != CellKind::FreeSubregion {
                continue;
            }
            let anchor = cell_anchor(ctx, &mask, cell, false);
            let ofs = generate_object_frontiers(
                cell,
                anchor,
                instances,
                ctx.query,
                ctx.rm,
                grid,
                &mask,
                params,
                &state.suppressed,
            );
            for vp in ofs {
                let ViewpointTarget::Instance(id) = vp.target else {
                    continue;
                };
                if reachable(&vp) && seen.insert(id) {
                    viewpoints.push(vp);
                }
            }
        }
    }

    // viewpoint ordering
    let nodes: Vec<Option<VoxelIndex>> = viewpoints.iter().map(|v| Some(v.voxel)).collect();
    let (between, _) = geodesic_matrix(grid, &mask, false, &nodes);
    let n = viewpoints.len() + 1;
    let mut sop_geo = vec![vec![None; n]; n];
    sop_geo[0][0] = Some(0.0);
    for j in 1..n {
        let d = pose_field.distance(grid, viewpoints[j - 1].voxel);
        sop_geo[0][j] = d;
        sop_geo[j][0] = d;
        for k in 1..n {
            sop_geo[j][k] = between[j - 1][k - 1];
        }
    }
    let (sop_matrix, sop_factors) = build_sop_matrix(&viewpoints, &sop_geo, params)?;
    let sop_order = solve_sop(&sop_matrix);
    let waypoint = viewpoints[sop_order[1] - 1].clone();
    let path = pose_field
        .path_to(grid, waypoint.voxel)
        .expect("waypoint was filtered for reachability")
        .into_iter()
        .map(|v| grid.center(v))
        .collect();
    let target_voxels = match waypoint.target {
        ViewpointTarget::Cluster(k) => clusters[k].voxels.clone(),
        ViewpointTarget::Instance(_) => Vec::new(),
    };

    let cluster_records = clusters
        .iter()
        .zip(&semantics)
        .enumerate()
        .map(|(k, (c, s))| {
            let vp = viewpoints.iter().find(|v| v.target == ViewpointTarget::Cluster(k));
            ClusterRecord {
                id: c.id,
                size: c.voxels.len(),
                cell: cluster_cells[k],
                s_f: vp.map_or(normalize_similarity(cosine(&s.embedding, ctx.query), ctx.rm), |v| v.s_f),
                c_f: vp.map_or(s.confidence, |v| v.c_f),
                source: vp.and_then(|v| v.semantics).unwrap_or(s.source),
            }
        })
        .collect();

    Ok(PlanOutput {
        path,
        target_voxels,
        diagnostics: CycleDiagnostics {
            cells,
            tsp_matrix,
            tsp_factors,
            tour,
            current_cell,
            next_cell,
            clusters: cluster_records,
            viewpoints,
            sop_matrix,
            sop_factors,
            sop_order,
            waypoint: waypoint.clone(),
        },
        waypoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::ViewpointKind;
    use crate::voxel::RayTraversal;

    const DIM: usize = 4;

    fn unit(i: usize) -> Embedding {
        let mut v = vec![0.0; DIM];
        v[i] = 1.0;
        Embedding::from_raw(v)
    }

    /// Free for x < 2.5 m, Unknown beyond: one planar frontier at x = 2.45.
    fn half_known() -> VoxelGrid {
        let mut g = VoxelGrid::new(Vec3::zeros(), 0.1, [30, 30, 5]).unwrap();
        for i in 0..g.len() {
            let v = g.from_linear(i);
            if v.x < 25 {
                g.set(v, CellState::Free);
            }
        }
        g
    }

    fn params() -> PlannerParams {
        PlannerParams {
            cell_size: 3.0,
            cluster_tile: 3.0,
            ..PlannerParams::default()
        }
    }

    struct Fixture {
        grid: VoxelGrid,
        memory: SemanticMemory,
        pose: RobotPose,
        query: Embedding,
        rm: RunningMax,
        intr: CameraIntrinsics,
        task_box: Aabb,
        params: PlannerParams,
        region: RegionPoolParams,
    }

    impl Fixture {
        fn new() -> Self {
            let grid = half_known();
            Self {
                task_box: grid.bounds(),
                grid,
                memory: SemanticMemory::new(),
                pose: RobotPose::new(Vec3::new(0.55, 1.55, 0.25), 0.0),
                query: unit(0),
                rm: RunningMax::default(),
                intr: CameraIntrinsics::default(),
                params: params(),
                region: RegionPoolParams::default(),
            }
        }

        fn ctx(&self) -> PlanContext<'_> {
            PlanContext {
                grid: &self.grid,
                memory: &self.memory,
                pose: &self.pose,
                query: &self.query,
                rm: &self.rm,
                intrinsics: &self.intr,
                task_box: &self.task_box,
                robot_radius: 0.1,
                params: &self.params,
                region_params: &self.region,
            }
        }
    }

    #[test]
    fn single_cluster_waypoint_is_its_viewpoint() {
        let f = Fixture::new();
        let mut cache = TemporalCache::new(DIM);
        let out = plan_cycle(&f.ctx(), &mut cache, &mut PlannerState::new()).unwrap();
        let frontiers: Vec<VoxelIndex> = detect_frontiers(&f.grid);
        let clusters = cluster_frontiers(&f.grid, &frontiers, &f.task_box, 3.0);
        assert_eq!(clusters.len(), 1);
        let mask = inflate_obstacles(&f.grid, 0.1);
        let expect = sample_viewpoints(&f.grid, &mask, &clusters[0], &f.intr, 1.0).unwrap();
        assert_eq!(out.waypoint.position, expect.position);
        assert_eq!(out.waypoint.kind, ViewpointKind::RegularFrontier);
        assert_eq!(out.path.first().copied(), Some(f.grid.center(f.grid.world_to_index(&f.pose.position).unwrap())));
        assert_eq!(out.path.last().copied(), Some(out.waypoint.position));
    }

    #[test]
    fn cache_is_cleared_after_cycle() {
        let f = Fixture::new();
        let mut cache = TemporalCache::new(DIM);
        let id = cache.register(unit(0));
        cache.write_voxels(&[VoxelIndex::new(24, 15, 2)], id);
        assert!(!cache.is_empty());
        plan_cycle(&f.ctx(), &mut cache, &mut PlannerState::new()).unwrap();
        assert!(cache.is_empty());

        // also on failure
        let mut done = f.grid.clone();
        for i in 0..done.len() {
            let v = done.from_linear(i);
            done.set(v, CellState::Free);
        }
        let id = cache.register(unit(1));
        cache.write_voxels(&[VoxelIndex::new(1, 1, 1)], id);
        let g = Fixture { grid: done, ..Fixture::new() };
        assert_eq!(
            plan_cycle(&g.ctx(), &mut cache, &mut PlannerState::new()).unwrap_err(),
            PlannerError::NoFrontiers
        );
        assert!(cache.is_empty());
    }

    #[test]
    fn cache_support_reaches_the_viewpoint() {
        let f = Fixture::new();
        let mut cache = TemporalCache::new(DIM);
        let frontier: Vec<VoxelIndex> = detect_frontiers(&f.grid);
        let ray = RayTraversal {
            visited: frontier.clone(),
            hit: None,
            exit_reason: crate::voxel::RayExit::MaxRange,
        };
        cache.cache_write(&ray, &unit(0));
        let out = plan_cycle(&f.ctx(), &mut cache, &mut PlannerState::new()).unwrap();
        assert_eq!(out.waypoint.semantics, Some(SemanticsSource::Cache));
        assert!((out.waypoint.c_f - 1.0).abs() < 1e-12);
        assert!((out.waypoint.s_f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_cache_falls_back_to_instances_on_the_ray() {
        let mut f = Fixture::new();
        // an instance straddling the pose-to-viewpoint segment
        let probe = {
            let mut cache = TemporalCache::new(DIM);
            plan_cycle(&f.ctx(), &mut cache, &mut PlannerState::new()).unwrap().waypoint.position
        };
        let mid = (f.pose.position + probe) / 2.0;
        let bbox = Aabb::new(mid - Vec3::repeat(0.1), mid + Vec3::repeat(0.1));
        let grid = f.grid.clone();
        let vox: Vec<VoxelIndex> = grid.indices_in(&bbox);
        f.memory = SemanticMemory::from_instances(vec![crate::memory::ObjectInstance {
            id: 0,
            voxels: vox.into_iter().collect(),
            bbox,
            embedding: unit(0),
        }]);
        let mut cache = TemporalCache::new(DIM);
        let out = plan_cycle(&f.ctx(), &mut cache, &mut PlannerState::new()).unwrap();
        let rec = &out.diagnostics.clusters[0];
        assert_eq!(rec.source, SemanticsSource::Fallback);
        assert_eq!(rec.c_f, 0.5);
    }

    #[test]
    fn modes_share_the_node_sets() {
        let mut f = Fixture::new();
        let mut outs = Vec::new();
        for mode in PlannerMode::ALL {
            f.params = params().with_mode(mode);
            let mut cache = TemporalCache::new(DIM);
            outs.push(plan_cycle(&f.ctx(), &mut cache, &mut PlannerState::new()).unwrap());
        }
        let ids = |o: &PlanOutput| o.diagnostics.cells.iter().map(|c| c.id).collect::<Vec<_>>();
        assert!(outs.iter().all(|o| ids(o) == ids(&outs[0])));
        assert!(outs.iter().all(|o| o.diagnostics.tsp_matrix.n == outs[0].diagnostics.tsp_matrix.n));
    }

    #[test]
    fn completion_rule() {
        let g = half_known();
        let b = g.bounds();
        assert!(!is_exploration_complete(&g, &Vec3::new(0.55, 0.55, 0.25), &b));

        let mut full = g.clone();
        for i in 0..full.len() {
            let v = full.from_linear(i);
            full.set(v, CellState::Free);
        }
        assert!(is_exploration_complete(&full, &Vec3::new(0.55, 0.55, 0.25), &b));

        // a frontier inside a sealed pocket does not count
        let mut sealed = full.clone();
        for v in sealed.indices_in(&Aabb::from_arrays([1.8, 1.8, 0.0], [2.3, 2.3, 0.5])) {
            let inner = (19..=21).contains(&v.x) && (19..=21).contains(&v.y) && (1..=3).contains(&v.z);
            sealed.set(v, if inner { CellState::Free } else { CellState::Occupied });
        }
        sealed.set(VoxelIndex::new(21, 21, 3), CellState::Unknown);
        assert!(is_exploration_complete(&sealed, &Vec3::new(0.55, 0.55, 0.25), &b));
    }
}
