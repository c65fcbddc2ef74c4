//! Fast property checks on the cost factors, embedding fusion, tour solver
//! and viewpoint matrix. The full suite lives in the `acceptance` test target.

use std::time::Instant;

use explore_core::embedding::Embedding;
use explore_core::memory::fuse_embedding;
use explore_core::planner::{
    build_sop_matrix, m_sop, m_tsp, nearest_neighbor_tour, solve_atsp, tour_cost, CostMatrix,
    PlannerMode, PlannerParams, Viewpoint, ViewpointKind, ViewpointTarget, M_SOP_MAX, M_TSP_MAX,
};
use explore_core::voxel::VoxelIndex;
use explore_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn factor_bounds() -> Check {
    let n = 200;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            let s = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let c = j as f64 / (n - 1) as f64;
            let m = m_sop(s, c);
            lo = lo.min(m);
            hi = hi.max(m);
        }
    }
    let (mut tlo, mut thi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..10_000 {
        let m = m_tsp(-1.0 + 2.0 * k as f64 / 9_999.0);
        tlo = tlo.min(m);
        thi = thi.max(m);
    }
    let passed = (lo - 0.2).abs() < 1e-9
        && (hi - M_SOP_MAX).abs() < 1e-9
        && (tlo - 0.2).abs() < 1e-9
        && (thi - M_TSP_MAX).abs() < 1e-9;
    Check {
        name: "factor bounds",
        passed,
        detail: format!("m_sop in [{lo:.9}, {hi:.9}], m_tsp in [{tlo:.9}, {thi:.9}]"),
    }
}

fn fixed_points() -> Check {
    let eps = 1e-12;
    let left = m_tsp(0.5 - eps);
    let right = m_tsp(0.5 + eps);
    let passed = m_tsp(0.5) == 1.0
        && (left - 1.0).abs() < 1e-9
        && (right - 1.0).abs() < 1e-9
        && m_sop(0.0, 0.0) == 1.0;
    Check {
        name: "fixed points",
        passed,
        detail: format!("m_tsp(0.5-)={left:.12} m_tsp(0.5+)={right:.12}"),
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    Embedding::normalized(v).expect("gaussian draw is nonzero")
}

fn fusion_norm() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dim = 64;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut e = random_unit(&mut rng, dim);
        for _ in 0..100 {
            let p = random_unit(&mut rng, dim);
            let alpha = rng.random_range(0.0..1.0);
            e = fuse_embedding(&e, &p, alpha).expect("random unit vectors are not antipodal");
            worst = worst.max((e.norm() - 1.0).abs());
        }
    }
    Check {
        name: "fusion keeps unit norm",
        passed: worst <= 1e-6,
        detail: format!("max |norm - 1| = {worst:.2e}"),
    }
}

fn permutations(items: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}

fn brute_force(m: &CostMatrix, n: usize) -> f64 {
    let mut best = f64::INFINITY;
    let mut rest: Vec<usize> = (1..n).collect();
    permutations(&mut rest, 0, &mut |p| {
        let mut c = m.get(0, p[0]) + m.get(p[p.len() - 1], 0);
        for w in p.windows(2) {
            c += m.get(w[0], w[1]);
        }
        best = best.min(c);
    });
    best
}

fn atsp_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut within, mut total, mut worse_than_nn, mut invalid) = (0, 0, 0, 0);
    for n in 4..=9 {
        for _ in 0..100 {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.0 } else { rng.random_range(1.0..100.0) }).collect())
                .collect();
            let m = CostMatrix::from_rows(&rows, 0);
            let tour = solve_atsp(&m);
            let mut sorted = tour.clone();
            sorted.sort_unstable();
            if tour.first() != Some(&0) || sorted != (0..n).collect::<Vec<_>>() {
                invalid += 1;
            }
            let c = tour_cost(&m, &tour);
            if c > tour_cost(&m, &nearest_neighbor_tour(&m)) + 1e-9 {
                worse_than_nn += 1;
            }
            if c <= 1.05 * brute_force(&m, n) + 1e-9 {
                within += 1;
            }
            total += 1;
        }
    }
    Check {
        name: "tour solver against exhaustive optimum",
        passed: invalid == 0 && worse_than_nn == 0 && within * 100 >= 95 * total,
        detail: format!(
            "{within}/{total} within 5%, {worse_than_nn} worse than nearest neighbor, {invalid} invalid, {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    }
}

fn viewpoint(kind: ViewpointKind, x: f64) -> Viewpoint {
    Viewpoint {
        position: Vec3::new(x, 0.0, 0.0),
        yaw: 0.0,
        voxel: VoxelIndex { x: 0, y: 0, z: 0 },
        kind,
        target: match kind {
            ViewpointKind::RegularFrontier => ViewpointTarget::Cluster(0),
            ViewpointKind::ObjectFrontier => ViewpointTarget::Instance(1),
        },
        s_f: 0.9,
        c_f: 0.8,
        semantics: None,
        visible: 1,
    }
}

fn object_frontier_exemption() -> Check {
    let vps = [
        viewpoint(ViewpointKind::RegularFrontier, 1.0),
        viewpoint(ViewpointKind::ObjectFrontier, 2.0),
    ];
    let geo = vec![
        vec![Some(0.0), Some(3.0), Some(4.0)],
        vec![Some(3.0), Some(0.0), Some(5.0)],
        vec![Some(4.0), Some(5.0), Some(0.0)],
    ];
    let params = PlannerParams::default().with_mode(PlannerMode::Sage);
    let (m, _) = build_sop_matrix(&vps, &geo, &params).expect("two viewpoints");
    let f = m_sop(0.9, 0.8);
    let passed = m.get(0, 2) == 4.0
        && m.get(1, 2) == 5.0
        && (m.get(0, 1) - 3.0 * f).abs() < 1e-12
        && (m.get(2, 1) - 5.0 * f).abs() < 1e-12;
    Check {
        name: "object frontiers keep raw distance",
        passed,
        detail: format!("object column {:?}, regular column {:?}", [m.get(0, 2), m.get(1, 2)], [
            m.get(0, 1),
            m.get(2, 1)
        ]),
    }
}

/// Print one line per check; true if all passed.
pub fn run_all() -> bool {
    let checks = [
        factor_bounds(),
        fixed_points(),
        fusion_norm(),
        atsp_oracle(),
        object_frontier_exemption(),
    ];
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("run `cargo test -p explore-cli --test acceptance` for the mission-level criteria");
    checks.iter().all(|c| c.passed)
}
