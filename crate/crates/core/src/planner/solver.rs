//! Heuristic asymmetric TSP solver and the fixed-start open path (SOP)
//! reduction built on it.
//!
//! Nearest-neighbor construction, then local search with Or-opt segment
//! moves (length 1 to 3, orientation kept) and 2-opt segment reversals whose
//! asymmetric gain accounts for every reversed arc. Seeded double-bridge kicks
//! perturb the local optimum; the best tour seen is returned, so the result
//! is never worse than the construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::costs::CostMatrix;

const GAIN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Perturbation rounds after the first local optimum.
    pub kicks: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { kicks: 60, seed: 0x0a75_9d11 }
    }
}

/// Closed-tour cost, including the arc back to the first node.
pub fn tour_cost(m: &CostMatrix, tour: &[usize]) -> f64 {
    if tour.len() < 2 {
        return 0.0;
    }
    path_cost(m, tour) + m.get(tour[tour.len() - 1], tour[0])
}

/// Open-path cost.
pub fn path_cost(m: &CostMatrix, path: &[usize]) -> f64 {
    path.windows(2).map(|w| m.get(w[0], w[1])).sum()
}

/// Greedy construction from the start node; ties go to the lower index.
pub fn nearest_neighbor_tour(m: &CostMatrix) -> Vec<usize> {
    let n = m.n;
    if n == 0 {
        return Vec::new();
    }
    let mut used = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = m.start;
    used[cur] = true;
    tour.push(cur);
    for _ in 1..n {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..n {
            if !used[j] && best.is_none_or(|(c, _)| m.get(cur, j) < c) {
                best = Some((m.get(cur, j), j));
            }
        }
        let (_, j) = best.expect("unvisited node remains");
        used[j] = true;
        tour.push(j);
        cur = j;
    }
    tour
}

/// One improving Or-opt move, if any. Position 0 (the start) never moves.
/// Segment orientation is kept, so only the four boundary arcs change.
fn or_opt_pass(m: &CostMatrix, tour: &mut Vec<usize>, cost: &mut f64) -> bool {
    let n = tour.len();
    for len in 1..=3usize {
        if len + 1 >= n {
            break;
        }
        for i in 1..=n - len {
            let (s0, se) = (tour[i], tour[i + len - 1]);
            let prev = tour[i - 1];
            let next = tour[(i + len) % n];
            let removed = m.get(prev, s0) + m.get(se, next) - m.get(prev, next);
            // `rest` is the tour without the segment; insert between rest[k-1] and rest[k]
            let rest_len = n - len;
            let rest = |k: usize| if k < i { tour[k] } else { tour[k + len] };
            for k in 1..=rest_len {
                if k == i {
                    continue;
                }
                let a = rest(k - 1);
                let b = rest(k % rest_len);
                let added = m.get(a, s0) + m.get(se, b) - m.get(a, b);
                if added - removed < -GAIN_EPS {
                    let seg: Vec<usize> = tour[i..i + len].to_vec();
                    let mut cand: Vec<usize> = (0..rest_len).map(rest).collect();
                    cand.splice(k..k, seg);
                    *cost = tour_cost(m, &cand);
                    *tour = cand;
                    return true;
                }
            }
        }
    }
    false
}

/// One improving segment reversal, if any. Prefix sums of forward and
/// backward arc costs make each asymmetric gain an O(1) evaluation.
fn two_opt_pass(m: &CostMatrix, tour: &mut [usize], cost: &mut f64) -> bool {
    let n = tour.len();
    let mut fwd = vec![0.0; n];
    let mut bwd = vec![0.0; n];
    for q in 1..n {
        fwd[q] = fwd[q - 1] + m.get(tour[q - 1], tour[q]);
        bwd[q] = bwd[q - 1] + m.get(tour[q], tour[q - 1]);
    }
    for i in 1..n {
        for j in i + 1..n {
            let before = tour[i - 1];
            let after = tour[(j + 1) % n];
            let old = m.get(before, tour[i]) + (fwd[j] - fwd[i]) + m.get(tour[j], after);
            let new = m.get(before, tour[j]) + (bwd[j] - bwd[i]) + m.get(tour[i], after);
            if new - old < -GAIN_EPS {
                tour[i..=j].reverse();
                *cost = tour_cost(m, tour);
                return true;
            }
        }
    }
    false
}

fn local_search(m: &CostMatrix, tour: &mut Vec<usize>) -> f64 {
    let mut cost = tour_cost(m, tour);
    loop {
        if or_opt_pass(m, tour, &mut cost) {
            continue;
        }
        if two_opt_pass(m, tour, &mut cost) {
            continue;
        }
        return cost;
    }
}

fn kick(tour: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = tour.len();
    let mut out = tour.to_vec();
    if n >= 5 {
        // double bridge on the movable part [1, n)
        let mut cuts = [
            rng.random_range(1..n),
            rng.random_range(1..n),
            rng.random_range(1..n),
        ];
        cuts.sort_unstable();
        let [a, b, c] = cuts;
        out.clear();
        out.extend_from_slice(&tour[..a]);
        out.extend_from_slice(&tour[b..c]);
        out.extend_from_slice(&tour[a..b]);
        out.extend_from_slice(&tour[c..]);
    } else if n >= 3 {
        let i = rng.random_range(1..n);
        let j = rng.random_range(1..n);
        out.swap(i, j);
    }
    out
}

/// Closed tour beginning at `m.start`, returned as the visiting order
/// (the closing arc back to the start is implicit).
pub fn solve_atsp(m: &CostMatrix) -> Vec<usize> {
    solve_atsp_with(m, SolverOptions::default())
}

pub fn solve_atsp_with(m: &CostMatrix, opts: SolverOptions) -> Vec<usize> {
    let n = m.n;
    if n <= 3 {
        let nn = nearest_neighbor_tour(m);
        if n == 3 {
            let alt = vec![nn[0], nn[2], nn[1]];
            if tour_cost(m, &alt) < tour_cost(m, &nn) - GAIN_EPS {
                return alt;
            }
        }
        return nn;
    }
    let mut best = nearest_neighbor_tour(m);
    let mut best_cost = local_search(m, &mut best);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ n as u64);
    let mut cur = best.clone();
    let mut cur_cost = best_cost;
    for _ in 0..opts.kicks {
        let mut cand = kick(&cur, &mut rng);
        let c = local_search(m, &mut cand);
        if c < cur_cost - GAIN_EPS {
            cur = cand;
            cur_cost = c;
            if c < best_cost - GAIN_EPS {
                best = cur.clone();
                best_cost = c;
            }
        }
    }
    best
}

/// Open path over all nodes starting at `m.start`, via ATSP with zero-cost
/// arcs back into the start.
pub fn solve_sop(m: &CostMatrix) -> Vec<usize> {
    let mut open = m.clone();
    for i in 0..m.n {
        open.set(i, m.start, 0.0);
    }
    solve_atsp(&open)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(m: &CostMatrix) -> f64 {
        fn rec(m: &CostMatrix, tour: &mut Vec<usize>, used: &mut Vec<bool>, best: &mut f64) {
            if tour.len() == m.n {
                *best = best.min(tour_cost(m, tour));
                return;
            }
            for j in 0..m.n {
                if !used[j] {
                    used[j] = true;
                    tour.push(j);
                    rec(m, tour, used, best);
                    tour.pop();
                    used[j] = false;
                }
            }
        }
        let mut used = vec![false; m.n];
        used[m.start] = true;
        let mut best = f64::INFINITY;
        rec(m, &mut vec![m.start], &mut used, &mut best);
        best
    }

    #[test]
    fn two_nodes() {
        let m = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]], 0);
        assert_eq!(solve_atsp(&m), vec![0, 1]);
    }

    #[test]
    fn three_nodes_prefers_cheap_direction() {
        let m = CostMatrix::from_rows(
            &[vec![0.0, 10.0, 1.0], vec![1.0, 0.0, 10.0], vec![10.0, 1.0, 0.0]],
            0,
        );
        assert_eq!(solve_atsp(&m), vec![0, 2, 1]);
        assert_eq!(tour_cost(&m, &[0, 2, 1]), 3.0);
        assert_eq!(tour_cost(&m, &[0, 1, 2]), 30.0);
    }

    #[test]
    fn symmetric_eight_points_near_optimal() {
        let pts: [(f64, f64); 8] = [
            (0.0, 0.0),
            (3.0, 1.0),
            (1.0, 4.0),
            (5.0, 5.0),
            (6.0, 0.5),
            (2.0, 2.0),
            (4.0, 3.0),
            (0.5, 6.0),
        ];
        let rows: Vec<Vec<f64>> = pts
            .iter()
            .map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
            .collect();
        let m = CostMatrix::from_rows(&rows, 0);
        let t = solve_atsp(&m);
        assert!(tour_cost(&m, &t) <= 1.05 * brute_force(&m));
    }

    #[test]
    fn sop_two_viewpoints() {
        // start, A, B: start->A->B = 1 + 1, start->B->A = 1.5 + 1
        let m = CostMatrix::from_rows(
            &[vec![0.0, 1.0, 1.5], vec![1.0, 0.0, 1.0], vec![1.5, 1.0, 0.0]],
            0,
        );
        assert_eq!(solve_sop(&m), vec![0, 1, 2]);
        let single = CostMatrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]], 0);
        assert_eq!(solve_sop(&single), vec![0, 1]);
    }

    #[test]
    fn random_instances_valid_and_not_worse_than_nn() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..12 {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.0 } else { rng.random_range(1.0..100.0) }).collect())
                .collect();
            let m = CostMatrix::from_rows(&rows, n / 2);
            let t = solve_atsp(&m);
            let mut sorted = t.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            assert_eq!(t[0], n / 2);
            assert!(tour_cost(&m, &t) <= tour_cost(&m, &nearest_neighbor_tour(&m)) + 1e-9);
        }
    }
}
