//! Semantic cost factors and the asymmetric cost matrices built from them.

use serde::Serialize;

use super::cells::Cell;
use super::viewpoints::{Viewpoint, ViewpointKind};
use super::{PlannerError, PlannerMode, PlannerParams};

/// Upper end of the tour factor, attained at `s = -1`.
pub const M_TSP_MAX: f64 = 6.0;
/// Upper end of the viewpoint factor, attained at `s = -1, c = 0`.
pub const M_SOP_MAX: f64 = 1.0 + 4.0 / 4.5;

const DEFAULT_FLOOR: f64 = 0.2;

/// Destination factor of the cell tour.
pub fn m_tsp(s: f64) -> f64 {
    m_tsp_floored(s, DEFAULT_FLOOR)
}

pub fn m_tsp_floored(s: f64, floor: f64) -> f64 {
    let m = if s > 0.5 {
        1.0 - 0.8 * (s - 0.5) / 0.5
    } else if s == 0.5 {
        1.0
    } else {
        let t = (0.5 - s) / 1.5;
        1.0 + 5.0 * t * t
    };
    m.max(floor)
}

/// Destination factor of the viewpoint ordering.
pub fn m_sop(s: f64, c: f64) -> f64 {
    m_sop_floored(s, c, DEFAULT_FLOOR)
}

pub fn m_sop_floored(s: f64, c: f64, floor: f64) -> f64 {
    let u = (4.0 * s + 0.5 * c) / 4.5;
    (1.0 - u).max(floor)
}

/// Row-major `n x n` asymmetric costs with a designated start node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostMatrix {
    pub n: usize,
    pub start: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn zeros(n: usize, start: usize) -> Self {
        assert!(start < n.max(1), "start index out of range");
        Self {
            n,
            start,
            costs: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], start: usize) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n, start);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "cost matrix must be square");
            for (j, &c) in r.iter().enumerate() {
                m.set(i, j, c);
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, c: f64) {
        self.costs[i * self.n + j] = c;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.costs.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }
}

fn geo_or_penalty(d: Option<f64>, params: &PlannerParams) -> f64 {
    d.unwrap_or(params.unreachable_cost)
}

/// Tour matrix over `[pose, cells...]`. `geo` holds pairwise geodesic
/// distances in the same node order. Returns the matrix and the destination
/// factor applied to each cell column (1 outside the rescaled mode).
pub fn build_tsp_matrix(
    cells: &[Cell],
    geo: &[Vec<Option<f64>>],
    params: &PlannerParams,
) -> Result<(CostMatrix, Vec<f64>), PlannerError> {
    if cells.is_empty() {
        return Err(PlannerError::EmptyProblem);
    }
    let n = cells.len() + 1;
    assert_eq!(geo.len(), n, "distance table must cover pose and cells");
    let factors: Vec<f64> = cells
        .iter()
        .map(|c| match params.mode {
            PlannerMode::Sage => m_tsp_floored(c.similarity, params.tsp_floor),
            _ => 1.0,
        })
        .collect();
    let mut m = CostMatrix::zeros(n, 0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = geo[i][j];
            let cost = if j == 0 {
                geo_or_penalty(d, params)
            } else {
                match (params.mode, d) {
                    (_, None) => params.unreachable_cost,
                    (PlannerMode::SemanticOnly, Some(_)) => 1.0 - cells[j - 1].similarity,
                    (_, Some(d)) => d * factors[j - 1],
                }
            };
            m.set(i, j, cost);
        }
    }
    Ok((m, factors))
}

/// Viewpoint matrix over `[pose, viewpoints...]`. Object-frontier columns
/// keep their geometric cost in the rescaled mode.
pub fn build_sop_matrix(
    viewpoints: &[Viewpoint],
    geo: &[Vec<Option<f64>>],
    params: &PlannerParams,
) -> Result<(CostMatrix, Vec<f64>), PlannerError> {
    if viewpoints.is_empty() {
        return Err(PlannerError::EmptyProblem);
    }
    let n = viewpoints.len() + 1;
    assert_eq!(geo.len(), n, "distance table must cover pose and viewpoints");
    let factors: Vec<f64> = viewpoints
        .iter()
        .map(|v| match (params.mode, v.kind) {
            (PlannerMode::Sage, ViewpointKind::RegularFrontier) => {
                m_sop_floored(v.s_f, v.c_f, params.sop_floor)
            }
            _ => 1.0,
        })
        .collect();
    let mut m = CostMatrix::zeros(n, 0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = geo[i][j];
            let cost = if j == 0 {
                geo_or_penalty(d, params)
            } else {
                match (params.mode, d) {
                    (_, None) => params.unreachable_cost,
                    (PlannerMode::SemanticOnly, Some(_)) => 1.0 - viewpoints[j - 1].s_f,
                    (_, Some(d)) => d * factors[j - 1],
                }
            };
            m.set(i, j, cost);
        }
    }
    Ok((m, factors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tsp_factor_values() {
        assert_eq!(m_tsp(0.5), 1.0);
        assert!((m_tsp(1.0) - 0.2).abs() < 1e-12);
        assert!((m_tsp(-1.0) - 6.0).abs() < 1e-12);
        assert!((m_tsp(0.0) - 1.5556).abs() < 1e-4);
    }

    #[test]
    fn sop_factor_values() {
        assert_eq!(m_sop(0.0, 0.0), 1.0);
        assert_eq!(m_sop(1.0, 1.0), 0.2);
        assert!((m_sop(-1.0, 0.0) - 1.8889).abs() < 1e-4);
        assert!((m_sop(-1.0, 0.0) - M_SOP_MAX).abs() < 1e-12);
    }

    #[test]
    fn continuity_at_half() {
        let eps = 1e-10;
        assert!((m_tsp(0.5 + eps) - 1.0).abs() < 1e-9);
        assert!((m_tsp(0.5 - eps) - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn tsp_monotone(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m_tsp(lo) >= m_tsp(hi));
        }

        #[test]
        fn sop_monotone(s in -1.0f64..=1.0, c in 0.0f64..=1.0, ds in 0.0f64..0.5, dc in 0.0f64..0.5) {
            let s2 = (s + ds).min(1.0);
            let c2 = (c + dc).min(1.0);
            prop_assert!(m_sop(s2, c) <= m_sop(s, c));
            prop_assert!(m_sop(s, c2) <= m_sop(s, c));
        }
    }
}
