//! Hierarchical exploration planner.
//!
//! A coarse tour over uniform cells (asymmetric TSP) decides which
//! subregion to work on; a fine ordering over frontier and object-frontier
//! viewpoints (SOP) decides where to go next. In the semantic mode both
//! cost matrices are rescaled on the destination side by bounded factors of
//! query similarity.

mod cells;
mod costs;
mod cycle;
mod geodesic;
mod solver;
mod viewpoints;

pub use cells::{decompose_cells, Cell, CellKind};
pub use costs::{
    build_sop_matrix, build_tsp_matrix, m_sop, m_sop_floored, m_tsp, m_tsp_floored, CostMatrix,
    M_SOP_MAX, M_TSP_MAX,
};
pub use cycle::{
    is_exploration_complete, plan_cycle, CycleDiagnostics, PlanContext, PlanOutput, PlannerState,
};
pub use geodesic::{geodesic_distance, geodesic_matrix, snap_to_mask, DistanceField};
pub use solver::{
    nearest_neighbor_tour, path_cost, solve_atsp, solve_atsp_with, solve_sop, tour_cost,
    SolverOptions,
};
pub use viewpoints::{
    cluster_frontiers, generate_object_frontiers, sample_viewpoints, turn_in_place_viewpoint,
    FrontierCluster, Viewpoint, ViewpointKind, ViewpointTarget,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerMode {
    /// Purely geometric costs, no object frontiers.
    Geometric,
    /// Costs `1 - s` with travel distance omitted.
    SemanticOnly,
    /// Geometric costs rescaled by similarity factors.
    #[default]
    Sage,
}

impl PlannerMode {
    pub const ALL: [PlannerMode; 3] = [PlannerMode::Sage, PlannerMode::Geometric, PlannerMode::SemanticOnly];

    pub fn name(self) -> &'static str {
        match self {
            PlannerMode::Geometric => "geometric",
            PlannerMode::SemanticOnly => "semantic-only",
            PlannerMode::Sage => "sage",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn uses_semantics(self) -> bool {
        self != PlannerMode::Geometric
    }
}

impl std::fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerParams {
    /// Edge length of the uniform decomposition cells (m).
    pub cell_size: f64,
    pub viewpoint_ring_radius: f64,
    /// Range within which instances spawn object frontiers (m).
    pub r_obj: f64,
    pub max_object_frontiers_per_subregion: usize,
    pub sop_floor: f64,
    pub tsp_floor: f64,
    /// Frontier voxels are grouped per tile of this size before clustering (m).
    pub cluster_tile: f64,
    /// Finite stand-in for an infinite cost between disconnected nodes.
    pub unreachable_cost: f64,
    /// Viewpoint visits after which a persisting frontier is given up.
    pub max_cluster_visits: u32,
    #[serde(skip)]
    pub mode: PlannerMode,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            cell_size: 4.0,
            viewpoint_ring_radius: 1.0,
            r_obj: 3.0,
            max_object_frontiers_per_subregion: 3,
            sop_floor: 0.2,
            tsp_floor: 0.2,
            cluster_tile: 1.0,
            unreachable_cost: 1e6,
            max_cluster_visits: 2,
            mode: PlannerMode::Sage,
        }
    }
}

impl PlannerParams {
    pub fn with_mode(mut self, mode: PlannerMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self, voxel_size: f64) -> Result<(), (String, String)> {
        let bad = |f: &str, m: &str| Err((format!("planner.{f}"), m.to_string()));
        if !(self.cell_size >= voxel_size) {
            return bad("cell_size", "must be at least the voxel size");
        }
        if !(self.viewpoint_ring_radius > 0.0) {
            return bad("viewpoint_ring_radius", "must be positive");
        }
        if !(self.r_obj > 0.0) {
            return bad("r_obj", "must be positive");
        }
        if !(self.sop_floor > 0.0 && self.sop_floor <= 1.0) {
            return bad("sop_floor", "must lie in (0, 1]");
        }
        if !(self.tsp_floor > 0.0 && self.tsp_floor <= 1.0) {
            return bad("tsp_floor", "must lie in (0, 1]");
        }
        if !(self.cluster_tile >= voxel_size) {
            return bad("cluster_tile", "must be at least the voxel size");
        }
        if !(self.unreachable_cost > 0.0 && self.unreachable_cost.is_finite()) {
            return bad("unreachable_cost", "must be positive and finite");
        }
        if self.max_cluster_visits == 0 {
            return bad("max_cluster_visits", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("no reachable frontier is left to plan for")]
    NoFrontiers,
    #[error("cost matrix needs at least one destination")]
    EmptyProblem,
    #[error("cluster has no traversable viewpoint with line of sight")]
    ClusterUnviewable,
}
