use std::sync::Arc;

use bdsa::clustering::{self, ClusterInstance};
use bdsa::heron::{self, HeronKind, HeronNonconvex, HeronQuadratic, HeronReplay};
use bdsa::phiq::{self, PhiQAlgorithm, PhiQInstance};
use bdsa::problem::{CompositeProblem, UpperC2};
use bdsa::prox::{
    asplund_value, project_ball, project_box, project_polygon, project_region, prox_l1_shifted_conjugate,
    prox_scaled_asplund_conjugate, prox_sq_norm, AxisBox, Ball, ConvexPolygon, Region, Shape,
};
use bdsa::sampling::{run_rng, uniform_in_ball};
use bdsa::solver;
use nalgebra::{dvector, DVector};
use proptest::prelude::*;

fn vec2() -> impl Strategy<Value = DVector<f64>> {
    (-20.0..20.0f64, -20.0..20.0f64).prop_map(|(a, b)| dvector![a, b])
}

fn any_box() -> impl Strategy<Value = AxisBox> {
    (-5.0..5.0f64, -5.0..5.0f64, 0.0..4.0f64, 0.0..4.0f64)
        .prop_map(|(x, y, w, h)| AxisBox::new(dvector![x, y], dvector![x + w, y + h]).unwrap())
}

/// Convex polygon: sorted angles on an ellipse, scaled and shifted.
fn any_polygon() -> impl Strategy<Value = ConvexPolygon> {
    (
        prop::collection::btree_set(0u32..360, 3..9),
        0.5..4.0f64,
        0.5..4.0f64,
        -5.0..5.0f64,
        -5.0..5.0f64,
    )
        .prop_filter_map("degenerate polygon", |(angles, a, b, cx, cy)| {
            let verts = angles
                .into_iter()
                .map(|deg| {
                    let t = (deg as f64).to_radians();
                    [cx + a * t.cos(), cy + b * t.sin()]
                })
                .collect();
            ConvexPolygon::from_vertices(verts).ok()
        })
}

fn any_region() -> impl Strategy<Value = Region> {
    prop::collection::vec(
        prop_oneof![any_box().prop_map(Shape::Box), any_polygon().prop_map(Shape::Polygon)],
        1..5,
    )
    .prop_map(|members| Region::new(members).unwrap())
}

fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Solves `u + t·clamp(u, lo, hi) = v` for `t ≥ 0` coordinatewise.
fn prox_scaled_asplund_primal(v: &DVector<f64>, t: f64, b: &AxisBox) -> DVector<f64> {
    DVector::from_iterator(
        v.len(),
        (0..v.len()).map(|i| {
            let (lo, hi) = (b.lo()[i], b.hi()[i]);
            let below = v[i] - t * lo;
            let above = v[i] - t * hi;
            if below < lo {
                below
            } else if above > hi {
                above
            } else {
                v[i] / (1.0 + t)
            }
        }),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn box_projection_is_idempotent_and_optimal(b in any_box(), z in vec2(), c in vec2()) {
        let p = project_box(&z, &b);
        prop_assert!(b.contains(&p));
        prop_assert_eq!(project_box(&p, &b), p.clone());
        let c = b.project(&c);
        prop_assert!((&z - &p).dot(&(c - &p)) <= 1e-12 * (1.0 + z.norm_squared()));
    }

    #[test]
    fn ball_projection_is_idempotent_and_optimal(z in vec2(), c in vec2(), r in 0.1..8.0f64) {
        let ball = Ball::new(dvector![1.0, -2.0], r).unwrap();
        let p = project_ball(&z, &ball);
        prop_assert!((&p - ball.center()).norm() <= r * (1.0 + 1e-12));
        let again = project_ball(&p, &ball);
        prop_assert!((&again - &p).norm() <= 1e-12 * (1.0 + p.norm()));
        let c = ball.project(&c);
        prop_assert!((&z - &p).dot(&(c - &p)) <= 1e-9 * (1.0 + z.norm_squared()));
    }

    #[test]
    fn polygon_projection_is_idempotent_and_optimal(poly in any_polygon(), z in vec2()) {
        let p = project_polygon(&z, &poly);
        prop_assert!(poly.contains(&p));
        let again = project_polygon(&p, &poly);
        prop_assert!((&again - &p).norm() <= 1e-9);
        for v in poly.vertices() {
            let v = dvector![v[0], v[1]];
            prop_assert!((&z - &p).dot(&(v - &p)) <= 1e-9 * (1.0 + z.norm_squared()));
        }
    }

    #[test]
    fn region_projection_is_nearest_member_projection(region in any_region(), z in vec2()) {
        let p = project_region(&z, &region);
        prop_assert!(region.contains(&p));
        let best = region
            .members()
            .iter()
            .map(|m| (m.project(&z) - &z).norm_squared())
            .fold(f64::INFINITY, f64::min);
        prop_assert!(((&p - &z).norm_squared() - best).abs() <= 1e-12 * (1.0 + best));
        let again = project_region(&p, &region);
        prop_assert!((&again - &p).norm() <= 1e-9);
    }

    #[test]
    fn sq_norm_prox_is_stationary(z in vec2(), gamma in 1e-3..10.0f64) {
        let u = prox_sq_norm(&z, gamma);
        // ∇[‖u‖² + ‖u − z‖²/(2γ)] = 2u + (u − z)/γ
        let grad = &u * 2.0 + (&u - &z) / gamma;
        prop_assert!(grad.amax() <= 1e-10 * (1.0 + z.amax() / gamma));
    }

    #[test]
    fn l1_conjugate_prox_range_moreau_and_nonexpansive(
        z in vec2(), w in vec2(), a in vec2(), mu in 1e-2..5.0f64
    ) {
        let y = prox_l1_shifted_conjugate(&z, mu, &a);
        prop_assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
        // Moreau: prox_{μh*}(z) = z − μ prox_{h/μ}(z/μ), h = ‖· − a‖₁.
        let u = &z / mu - &a;
        let soft = u.map(|t| t.signum() * (t.abs() - 1.0 / mu).max(0.0));
        let moreau = &z - (&a + soft) * mu;
        prop_assert!((&y - &moreau).amax() <= 1e-10 * (1.0 + z.amax()));
        let y2 = prox_l1_shifted_conjugate(&w, mu, &a);
        prop_assert!((&y - &y2).norm() <= (&z - &w).norm() + 1e-12);
    }

    #[test]
    fn asplund_identity(region in any_region(), w in vec2()) {
        let lhs = 0.5 * w.norm_squared() - asplund_value(&w, &region);
        let rhs = 0.5 * region.dist_sq(&w);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + w.norm_squared()));
    }

    #[test]
    fn scaled_asplund_conjugate_prox_matches_moreau(
        b in any_box(), z in vec2(), mu in 1e-2..5.0f64, weight in 0.1..4.0f64
    ) {
        let y = prox_scaled_asplund_conjugate(&z, mu, weight, &b);
        let u = prox_scaled_asplund_primal(&(&z / mu), weight / mu, &b);
        let moreau = &z - u * mu;
        prop_assert!((&y - &moreau).amax() <= 1e-10 * (1.0 + z.amax()));
        let scaled = &y / weight;
        prop_assert!(b.contains(&b.project(&scaled)) && (b.project(&scaled) - &scaled).amax() <= 1e-12 * (1.0 + scaled.amax()));
    }

    #[test]
    fn heron_convex_gradient_matches_central_differences(seed in any::<u64>(), n in 2usize..6, m in 2usize..6) {
        let mut rng = run_rng(seed, 0);
        let inst = HeronQuadratic::random(&mut rng, n, m, 3);
        let prob = heron::make_heron_convex(&inst).unwrap();
        let x = uniform_in_ball(&mut rng, &DVector::zeros(n), 4.9);
        let g = prob.f().subgradient(&x);
        let h = 1e-5;
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = h;
            let fd = (prob.f().value(&(&x + &e)) - prob.f().value(&(&x - &e))) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "coord {}: fd {} vs {}", i, fd, g[i]);
        }
    }

    #[test]
    fn phiq_forms_agree_and_fenchel_young_lift_is_exact(x in vec2(), q in 0u32..5) {
        let inst = PhiQInstance::new(2, q);
        let direct = phiq::phi_q_value(&inst, &x);
        let dga = phiq::make_dga_form(&inst);
        let pdca = phiq::make_pdca_form(&inst);
        prop_assert!((dga.varphi(&x) - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        prop_assert!((pdca.varphi(&x) - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        let y = phiq::fenchel_young_duals(&inst, &x);
        prop_assert!((dga.phi_parts(&x, &y) - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn conjugate_values_dominate_pairings(x in vec2(), y in (-1.0..1.0f64, -1.0..1.0f64), q in 0u32..4) {
        // Fenchel-Young inequality h(x) + h*(y) ≥ <x, y> per dual block.
        let y = dvector![y.0, y.1];
        let prob = phiq::make_dga_form(&PhiQInstance::new(2, q));
        for b in prob.blocks() {
            prop_assert!(b.h.value(&x) + b.h.conjugate_value(&y) >= x.dot(&y) - 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn boosted_phiq_runs_never_end_worse(seed in any::<u64>(), q in 1u32..4) {
        let inst = PhiQInstance::new(2, q);
        let start = phiq::sample_start(&inst, seed, 0);
        let end = |alg: PhiQAlgorithm| {
            let r = phiq::run_from(&inst, alg, &start, &alg.config(&inst, 100_000)).unwrap();
            phiq::phi_q_value(&inst, &r.point.x)
        };
        prop_assert!(end(PhiQAlgorithm::Bdga) <= end(PhiQAlgorithm::Dga) + 1e-9);
        prop_assert!(end(PhiQAlgorithm::Bpdca) <= end(PhiQAlgorithm::Pdca) + 1e-9);
    }

    #[test]
    fn clustering_is_permutation_invariant(seed in any::<u64>(), shift in 1usize..50) {
        let inst = clustering::synthetic_instance(seed, 60, 3, 3, clustering::default_region()).unwrap();
        let pts: Vec<DVector<f64>> = (0..inst.num_points()).map(|i| dvec(inst.point(i))).collect();
        let mut rotated = pts.clone();
        rotated.rotate_left(shift);
        let other = ClusterInstance::new(rotated, 3, clustering::default_region()).unwrap();
        let x = clustering::random_centroids(&inst, seed);
        let (a, b) = (clustering::cluster_objective(&inst, &x), clustering::cluster_objective(&other, &x));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        let (ga, gb) = (clustering::cluster_subgradient(&inst, &x), clustering::cluster_subgradient(&other, &x));
        prop_assert!((ga - gb).amax() <= 1e-12);
    }

    #[test]
    fn clustering_subgradient_is_the_gradient_off_ties(seed in any::<u64>()) {
        let inst = clustering::synthetic_instance(seed, 40, 3, 3, clustering::default_region()).unwrap();
        let x = clustering::random_centroids(&inst, seed ^ 0x5a5a);
        let g = clustering::cluster_subgradient(&inst, &x);
        prop_assert_eq!(&g, &clustering::cluster_subgradient_sequential(&inst, &x));
        // Central differences are exact for the piecewise quadratic objective
        // unless the step crosses an assignment boundary, which a tiny step
        // avoids for generic data.
        let h = 1e-6;
        for i in 0..x.len() {
            let mut e = DVector::zeros(x.len());
            e[i] = h;
            let fd = (clustering::cluster_objective(&inst, &(&x + &e)) - clustering::cluster_objective(&inst, &(&x - &e))) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "coord {}: {} vs {}", i, fd, g[i]);
        }
    }

    #[test]
    fn heron_iterates_stay_in_ball(seed in any::<u64>(), nonconvex in any::<bool>()) {
        let replay = if nonconvex {
            HeronReplay::generate(HeronKind::Nonconvex, 6, heron::default_m(6), 1, seed)
        } else {
            HeronReplay::generate(HeronKind::Convex, 3, 4, 3, seed)
        };
        let prob = replay.problem().unwrap();
        let cfg = heron::heron_config(true, 0.99, 0.5, 300);
        let result = solver::run(&prob, replay.start(), &cfg).unwrap();
        prop_assert!(result.point.x.norm() <= 5.0 * (1.0 + 1e-12));
        prop_assert!(result.descent_violations(1e-9).is_empty());
    }
}

/// `f(y) ≤ f(x) + <∇f(x), y − x> + κ‖y − x‖²` for pairs in the ball.
fn upper_c2_violations(f: &dyn UpperC2, n: usize, seed: u64, pairs: usize) -> usize {
    let mut rng = run_rng(seed, 0);
    let center = DVector::zeros(n);
    (0..pairs)
        .filter(|_| {
            let x = uniform_in_ball(&mut rng, &center, 5.0);
            let y = uniform_in_ball(&mut rng, &center, 5.0);
            let d = &y - &x;
            let bound = f.value(&x) + f.subgradient(&x).dot(&d) + f.kappa() * d.norm_squared();
            f.value(&y) > bound + 1e-9 * bound.abs().max(1.0)
        })
        .count()
}

#[test]
fn heron_curvature_bounds_hold_on_samples() {
    for seed in 0..5 {
        let inst = HeronQuadratic::random(&mut run_rng(seed, 0), 4, 5, 3);
        let prob = heron::make_heron_convex(&inst).unwrap();
        assert_eq!(upper_c2_violations(prob.f(), 4, seed + 100, 500), 0);

        let inst = HeronNonconvex::random(&mut run_rng(seed, 0), 6, 8);
        let prob = heron::make_heron_nonconvex(&inst).unwrap();
        assert_eq!(upper_c2_violations(prob.f(), 6, seed + 200, 500), 0);
    }
}

#[test]
fn clustering_curvature_bound_holds_on_samples() {
    let inst = Arc::new(clustering::synthetic_instance(3, 200, 4, 4, clustering::default_region()).unwrap());
    let prob: CompositeProblem = clustering::make_clustering_problem(inst.clone());
    let mut rng = run_rng(17, 0);
    let mut violations = 0;
    for _ in 0..500 {
        let x = clustering::random_centroids(&inst, rand::Rng::random(&mut rng));
        let y = clustering::random_centroids(&inst, rand::Rng::random(&mut rng));
        let d = &y - &x;
        let f = prob.f();
        if f.value(&y) > f.value(&x) + f.subgradient(&x).dot(&d) + d.norm_squared() + 1e-9 {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn dga_converged_points_satisfy_fenchel_young() {
    let inst = PhiQInstance::new(2, 3);
    for i in 0..20 {
        let start = phiq::sample_start(&inst, 77, i);
        for alg in [PhiQAlgorithm::Dga, PhiQAlgorithm::Bdga] {
            let r = phiq::run_from(&inst, alg, &start, &alg.config(&inst, 100_000)).unwrap();
            let prob = alg.problem(&inst);
            let gap = prob.phi(&r.point) - prob.varphi(&r.point.x);
            assert!(gap.abs() <= 1e-6, "{alg} start {i}: gap {gap}");
        }
    }
}

#[test]
fn heron_dual_blocks_report_conjugate_domain() {
    let inst = HeronQuadratic::random(&mut run_rng(5, 0), 3, 4, 2);
    let prob = heron::make_heron_convex(&inst).unwrap();
    let b = &prob.blocks()[0];
    let far = DVector::from_element(4, 1e3);
    assert_eq!(b.h.conjugate_value(&far), f64::INFINITY);
    assert!(b.h.dim() == 4);
}

#[test]
fn batch_results_do_not_depend_on_backend() {
    let inst = PhiQInstance::new(2, 3);
    let counts = phiq::success_rate_experiment(&inst, PhiQAlgorithm::Bdga, 64, 9, 100_000).unwrap();
    let cfg = PhiQAlgorithm::Bdga.config(&inst, 100_000);
    let sequential = bdsa::exec::map_indexed_sequential(64, |i| {
        let r = phiq::run_from(&inst, PhiQAlgorithm::Bdga, &phiq::sample_start(&inst, 9, i), &cfg).unwrap();
        (r.iterations, r.point.x)
    });
    for (run, (iters, x)) in counts.per_run.iter().zip(sequential) {
        assert_eq!(run.iterations, iters);
        assert_eq!(run.final_x, x);
    }
}

#[test]
fn replayed_instances_reproduce_runs() {
    let a = HeronReplay::generate(HeronKind::Convex, 3, 4, 3, 4);
    let b = HeronReplay::from_json(&a.to_json()).unwrap();
    let cfg = heron::heron_config(true, 0.99, 0.5, 500);
    let ra = solver::run(&a.problem().unwrap(), a.start(), &cfg).unwrap();
    let rb = solver::run(&b.problem().unwrap(), b.start(), &cfg).unwrap();
    assert_eq!(ra.point, rb.point);
    assert_eq!(ra.iterations, rb.iterations);
}
