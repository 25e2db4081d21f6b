//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them).
//!
//! Heavy artifacts (the hexagon family stencils at refinements 3 and 4, with
//! the step chosen by the Richardson check at refinement 3) are computed once
//! and shared across criteria.

use std::sync::OnceLock;
use std::time::Instant;

use hurwitz_core::covering::{
    automorphism_order, braid_orbits, enumerate_classes, genus_from_relation, MonodromyDatum,
};
use hurwitz_core::hyperbolic::{solve_liouville, LiouvilleSettings};
use hurwitz_core::mesh::{
    assemble_operators, build_cover, BranchConfiguration, Motion,
};
use hurwitz_core::rng::SplitMix64;
use hurwitz_core::sphere::{
    curvature_identity_residual, round_total_area, Rotation3,
};
use hurwitz_core::wp::{
    build_stencil, choose_epsilon, evaluate, random_identity_residual, weil_petersson, Direction,
    WpResult,
};

const WORKERS: usize = 5;

fn hexagon() -> BranchConfiguration {
    let datum = MonodromyDatum::genus_zero(2, &[(1, 2); 6]).unwrap();
    BranchConfiguration::regular_polygon(datum).unwrap()
}

struct FamilyFixture {
    epsilon: f64,
    result_r3: WpResult,
    result_r4: WpResult,
}

fn family_fixture() -> &'static FamilyFixture {
    static FIXTURE: OnceLock<FamilyFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let config = hexagon();
        let surface3 = build_cover(&config, 3).expect("refinement-3 cover");
        let motion = Motion::single(6, 0);
        let rho = surface3.base.core_radius[0];
        let (epsilon, trail) =
            choose_epsilon(&surface3, &motion, rho / 8.2, 0.02, WORKERS).expect("Richardson step");
        assert!(
            trail.len() >= 2,
            "the Richardson check must compare at least two steps"
        );
        let settings = LiouvilleSettings::default();
        let st3 = build_stencil(&surface3, &motion, epsilon, WORKERS, &settings).unwrap();
        let (result_r3, _) = evaluate(&st3, 1.0).unwrap();
        drop(st3);
        let surface4 = build_cover(&config, 4).expect("refinement-4 cover");
        let st4 = build_stencil(&surface4, &motion, epsilon, WORKERS, &settings).unwrap();
        let (result_r4, _) = evaluate(&st4, 1.0).unwrap();
        FamilyFixture {
            epsilon,
            result_r3,
            result_r4,
        }
    })
}

/// The six single-branch-point directional results at refinement 2.
fn directional_fixture() -> &'static Vec<WpResult> {
    static FIXTURE: OnceLock<Vec<WpResult>> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let config = hexagon();
        (0..6)
            .map(|k| {
                weil_petersson(&config, &Direction::BranchPoint(k), None, 2, WORKERS)
                    .expect("directional value")
                    .result
            })
            .collect()
    })
}

/// Positivity is a statement about the resolved fields; refinement 3 keeps
/// the far-field φ floor clear of discretization noise.
fn directional_fixture_fine() -> &'static Vec<WpResult> {
    static FIXTURE: OnceLock<Vec<WpResult>> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let config = hexagon();
        (0..6)
            .map(|k| {
                weil_petersson(&config, &Direction::BranchPoint(k), None, 3, WORKERS)
                    .expect("directional value")
                    .result
            })
            .collect()
    })
}

#[test]
fn criterion_01_combinatorics_oracle() {
    let start = Instant::now();
    // independent brute force over all 3^4 = 81 transposition 4-tuples
    let taus = [(1, 2), (1, 3), (2, 3)];
    let mut brute = std::collections::BTreeSet::new();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    let datum =
                        MonodromyDatum::genus_zero(3, &[taus[a], taus[b], taus[c], taus[d]])
                            .unwrap();
                    if datum.is_valid() {
                        brute.insert(
                            hurwitz_core::covering::canonical_form(&datum)
                                .unwrap()
                                .transpositions,
                        );
                    }
                }
            }
        }
    }
    let classes = enumerate_classes(3, 4).unwrap();
    assert_eq!(classes.len(), brute.len());
    assert_eq!(classes.len(), 4);
    for b in (2..=8).step_by(2) {
        assert_eq!(enumerate_classes(2, b).unwrap().len(), 1, "b = {b}");
    }
    for b in (1..=7).step_by(2) {
        assert_eq!(enumerate_classes(2, b).unwrap().len(), 0, "b = {b}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "acceptance criterion 1 (combinatorics oracle): PASS \
         [4 classes at (3,4), degree-2 parity, {elapsed:?}]"
    );
}

#[test]
fn criterion_02_hurwitz_connectivity() {
    let start = Instant::now();
    for (n, b) in [(2usize, 6usize), (3, 4), (4, 6)] {
        let classes = enumerate_classes(n, b).unwrap();
        let orbits = braid_orbits(&classes).unwrap();
        assert_eq!(orbits.len(), 1, "({n},{b}) should be a single braid orbit");
        assert_eq!(orbits[0].len(), classes.len());
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "acceptance criterion 2 (Hurwitz connectivity): PASS \
         [single orbit at (2,6), (3,4), (4,6); {elapsed:?}]"
    );
}

#[test]
fn criterion_03_cohomology_arithmetic() {
    let mut rng = SplitMix64::new(20260808);
    let mut checked = 0;
    while checked < 100 {
        let n = 2 + rng.below(5); // 2..=6
        let h = rng.below(4); // 0..=3
        let p = 2 + rng.below(19); // 2..=20
        let b_signed = n as i64 * (2 - 2 * h as i64) + 2 * p as i64 - 2;
        if b_signed < 1 {
            continue;
        }
        let b = b_signed as usize;
        // Euler relation holds exactly by construction; verify the inverse
        assert_eq!(genus_from_relation(n, h, b).unwrap(), p);
        let profile = hurwitz_core::cohomology::cohomology_profile(n, h, b).unwrap();
        if let Some(sum) = profile.alternating_sum() {
            assert_eq!(sum, 0, "exactness fails at ({n},{h},{b})");
        }
        assert_eq!(profile.t1.value(), Some(b));
        checked += 1;
    }
    let profile = hurwitz_core::cohomology::cohomology_profile(2, 0, 6).unwrap();
    assert_eq!(profile.h0_pullback.value(), Some(3));
    assert_eq!(profile.t1.value(), Some(6));
    assert_eq!(profile.h1_tx.value(), Some(3));
    assert_eq!(profile.h1_pullback.value(), Some(0));
    println!(
        "acceptance criterion 3 (cohomology arithmetic): PASS \
         [100 random types exact; (2,0,6) -> (3,6,3,0)]"
    );
}

#[test]
fn criterion_04_hyperbolic_solver() {
    let start = Instant::now();
    let config = hexagon();
    let surface = build_cover(&config, 3).unwrap();
    let ops = assemble_operators(&surface).unwrap();
    let settings = LiouvilleSettings::default();
    let metric = solve_liouville(&ops.geometry, None, &settings).unwrap();
    let expected = 4.0 * std::f64::consts::PI;
    let area_rel = (metric.hyperbolic_area - expected).abs() / expected;
    assert!(area_rel < 0.01, "area error {area_rel}");
    // terminal quadratic convergence: the step crossing the tolerance
    let h = &metric.residual_history;
    let k = h.iter().rposition(|&r| r > 1e-12).unwrap();
    assert!(k + 1 < h.len());
    assert!(
        h[k + 1] < h[k].powf(1.5) * 1e3,
        "terminal step not superlinear: {:e} -> {:e}",
        h[k],
        h[k + 1]
    );
    for w in h.windows(2) {
        assert!(w[1] < w[0], "residuals must decrease");
    }
    // initialization independence
    let perturbed: Vec<f64> = metric.u.iter().map(|&x| x + 0.2 * (9.0 * x).cos()).collect();
    let again = solve_liouville(&ops.geometry, Some(&perturbed), &settings).unwrap();
    let sup = metric
        .u
        .iter()
        .zip(&again.u)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(sup < 1e-8, "initialization dependence {sup:e}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "acceptance criterion 4 (hyperbolic solver): PASS \
         [area rel {area_rel:.2e}, init dependence {sup:.2e}, {elapsed:?}]"
    );
}

#[test]
fn criterion_05_screened_poisson_identity() {
    let fx = family_fixture();
    let r3 = fx.result_r3.residuals.eqell_solved;
    let r4 = fx.result_r4.residuals.eqell_solved;
    assert!(r3 <= 0.05, "refinement-3 residual {r3}");
    assert!(r4 < r3, "residual must decrease: {r3} -> {r4}");
    println!(
        "acceptance criterion 5 (screened-Poisson identity): PASS \
         [residual {r3:.4} at refinement 3, {r4:.4} at refinement 4, ε = {:.5}]",
        fx.epsilon
    );
}

#[test]
fn criterion_06_fiber_integral_exact_route() {
    let fx = family_fixture();
    for (label, result) in [("r3", &fx.result_r3), ("r4", &fx.result_r4)] {
        let rel = (result.fiber_integral - (result.g0_direct + result.g1)).abs()
            / result.fiber_integral.abs();
        assert!(rel <= 1e-10, "{label}: exact route violated at {rel:e}");
        assert!(
            result.residuals.integrand_identity <= 1e-12,
            "{label}: pointwise identity {:e}",
            result.residuals.integrand_identity
        );
    }
    let random = random_identity_residual(1000, 7);
    assert!(random <= 1e-12, "random-tensor identity {random:e}");
    println!(
        "acceptance criterion 6 (fiber integral, exact route): PASS \
         [relative gap {:.1e}, random-tensor residual {random:.1e}]",
        (fx.result_r3.fiber_integral - (fx.result_r3.g0_direct + fx.result_r3.g1)).abs()
            / fx.result_r3.fiber_integral
    );
}

#[test]
fn criterion_07_fiber_integral_independent_route() {
    let fx = family_fixture();
    let gap = |r: &WpResult| (r.fiber_integral - (r.g0_pde + r.g1)).abs() / r.fiber_integral;
    let g3 = gap(&fx.result_r3);
    let g4 = gap(&fx.result_r4);
    assert!(g3 <= 0.05, "refinement-3 route gap {g3}");
    assert!(g4 < g3, "route gap must decrease: {g3} -> {g4}");
    println!(
        "acceptance criterion 7 (fiber integral, elliptic route): PASS \
         [gap {g3:.4} at refinement 3, {g4:.4} at refinement 4]"
    );
}

#[test]
fn criterion_08_positivity() {
    let results = directional_fixture_fine();
    for (k, r) in results.iter().enumerate() {
        assert!(r.wp_total > 0.0, "direction {k}: wp_total = {}", r.wp_total);
        assert!(
            r.residuals.mu_max > 0.0,
            "direction {k} should have a nontrivial Beltrami field"
        );
        assert!(
            r.residuals.phi_min > 0.0,
            "direction {k}: min φ = {:e}",
            r.residuals.phi_min
        );
    }
    println!(
        "acceptance criterion 8 (positivity): PASS \
         [wp_total in [{:.4}, {:.4}], min φ > 0 on all 6 directions]",
        results
            .iter()
            .map(|r| r.wp_total)
            .fold(f64::INFINITY, f64::min),
        results.iter().map(|r| r.wp_total).fold(0.0, f64::max)
    );
}

#[test]
fn criterion_09_symmetry() {
    let config = hexagon();
    let base: Vec<f64> = directional_fixture()
        .iter()
        .map(|r| r.wp_normalized)
        .collect();
    // 60° rotation about the polar axis permutes the directional values
    let spin = Rotation3::about_axis([0.0, 0.0, 1.0], std::f64::consts::PI / 3.0);
    let spun_config = BranchConfiguration {
        points: config.points.iter().map(|&p| spin.mobius(p)).collect(),
        datum: config.datum.clone(),
        radius_scale: config.radius_scale,
    };
    let mut worst_permuted = 0.0f64;
    for k in 0..6 {
        let r = weil_petersson(&spun_config, &Direction::BranchPoint(k), None, 2, WORKERS)
            .unwrap()
            .result;
        // point k of the rotated configuration sits where point k+1 was
        let rel = (r.wp_normalized - base[(k + 1) % 6]).abs() / base[(k + 1) % 6];
        worst_permuted = worst_permuted.max(rel);
    }
    assert!(worst_permuted <= 1e-6, "permutation mismatch {worst_permuted:e}");

    // a generic sphere rotation leaves each (normalized) value invariant
    let rot = Rotation3::about_axis([0.23, -0.41, 0.88], 0.57);
    let moved_config = BranchConfiguration {
        points: config.points.iter().map(|&p| rot.mobius(p)).collect(),
        datum: config.datum.clone(),
        radius_scale: config.radius_scale,
    };
    let mut worst_invariant = 0.0f64;
    for k in [0usize, 2, 5] {
        let dir = Direction::BranchPoint(k).rotate(&config.points, &rot);
        let r = weil_petersson(&moved_config, &dir, None, 2, WORKERS)
            .unwrap()
            .result;
        let rel = (r.wp_normalized - base[k]).abs() / base[k];
        worst_invariant = worst_invariant.max(rel);
    }
    assert!(worst_invariant <= 1e-6, "rotation variance {worst_invariant:e}");
    println!(
        "acceptance criterion 9 (symmetry): PASS \
         [60° permutation within {worst_permuted:.1e}, rotation invariance within {worst_invariant:.1e}]"
    );
}

#[test]
fn criterion_10_curvature_scalings() {
    let fx = family_fixture();
    let four_pi_sq = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    for r in [&fx.result_r3, &fx.result_r4] {
        assert_eq!(r.det_curvature, r.deligne_curvature);
        assert_eq!(r.det_curvature, r.wp_total / four_pi_sq);
    }
    // target-metric checks
    let area = round_total_area(150.0, 200);
    let area_rel = (area - 4.0 * std::f64::consts::PI).abs() / (4.0 * std::f64::consts::PI);
    assert!(area_rel <= 1e-6, "total area error {area_rel:e}");
    let mut rng = SplitMix64::new(99);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let w = rng.complex_in_square(4.0);
        worst = worst.max(curvature_identity_residual(w));
    }
    assert!(worst <= 1e-10, "curvature identity residual {worst:e}");
    println!(
        "acceptance criterion 10 (curvature scalings): PASS \
         [det = Deligne = wp/4π² exactly; ∫ω_Y error {area_rel:.1e}; K=+1 residual {worst:.1e}]"
    );
}

#[test]
fn regression_hexagon_baseline() {
    // Baseline frozen from high-refinement runs (two quadrature variants
    // agreeing to 1%): the first Weil-Petersson component of the unit motion
    // of one hexagon branch point.
    const BASELINE_G0: f64 = 0.7550;
    let fx = family_fixture();
    let rel = (fx.result_r3.g0_direct - BASELINE_G0).abs() / BASELINE_G0;
    assert!(rel < 0.01, "baseline drift {rel:.3e}");
    // second quadrature variant: per-vertex fields on face corners
    let config = hexagon();
    let surface = build_cover(&config, 2).unwrap();
    let motion = Motion::single(6, 0);
    let st = build_stencil(
        &surface,
        &motion,
        fx.epsilon,
        WORKERS,
        &LiouvilleSettings::default(),
    )
    .unwrap();
    let (result, tensors) = evaluate(&st, 1.0).unwrap();
    let ops = assemble_operators(&surface).unwrap();
    // variant rule: the (chart-invariant) vertex-recovered φ sampled against
    // the face-chart pullback form
    let mut rule_b = 0.0;
    for (fid, face) in surface.topo.faces.iter().enumerate() {
        let mut mean = 0.0;
        for c in 0..3 {
            let x = ops.charts.corner_coords[fid][c];
            let (zeta_sq, h) = match face.chart {
                hurwitz_core::mesh::Chart::Z { disk } => {
                    let w = x * x + surface.points[disk];
                    (4.0 * x.norm_sqr(), hurwitz_core::wp::target_metric(w))
                }
                _ => (1.0, hurwitz_core::wp::target_metric(x)),
            };
            mean += tensors.phi[face.verts[c]] * zeta_sq * h / 3.0;
        }
        rule_b += mean * 2.0 * ops.charts.chart_area[fid];
    }
    let cross = (rule_b - result.g0_direct).abs() / result.g0_direct;
    assert!(cross < 0.01, "quadrature variants disagree by {cross:.3e}");
    println!(
        "hexagon baseline: PASS [g0 = {:.5} vs {BASELINE_G0}, variant gap {cross:.2e}]",
        fx.result_r3.g0_direct
    );
}

#[test]
fn mobius_flow_is_pure_reparameterization() {
    // scaling flow w -> e^s w fixes the curve class: G1 > 0 while G0 ≈ 0
    let config = hexagon();
    let direction = Direction::Velocities(config.points.clone());
    let report = weil_petersson(&config, &direction, None, 2, WORKERS).unwrap();
    assert!(report.result.g1 > 0.0);
    assert!(
        report.result.g0_direct.abs() < 0.05 * report.result.g1,
        "g0 = {} should be negligible against g1 = {}",
        report.result.g0_direct,
        report.result.g1
    );
    println!(
        "Möbius-flow direction: PASS [g0/g1 = {:.2e}]",
        report.result.g0_direct / report.result.g1
    );
}

#[test]
fn frozen_family_vanishes() {
    let config = hexagon();
    let surface = build_cover(&config, 1).unwrap();
    let st = build_stencil(
        &surface,
        &Motion::frozen(6),
        0.01,
        WORKERS,
        &LiouvilleSettings::default(),
    )
    .unwrap();
    let (result, _) = evaluate(&st, 0.0).unwrap();
    assert!(result.wp_total.abs() < 1e-12);
    assert!(result.fiber_integral.abs() < 1e-12);
    assert!(result.residuals.mu_max < 1e-12);
    println!("frozen family: PASS [all components < 1e-12]");
}

#[test]
fn monodromy_walks_recover_the_datum() {
    for config in [hexagon(), {
        let datum = MonodromyDatum::genus_zero(3, &[(1, 2), (1, 2), (1, 3), (1, 3)]).unwrap();
        BranchConfiguration::regular_polygon(datum).unwrap()
    }] {
        let surface = build_cover(&config, 1).unwrap();
        for j in 0..config.branch_count() {
            assert_eq!(
                surface.monodromy_walk(j).unwrap(),
                config.datum.transpositions[j]
            );
        }
        assert_eq!(
            surface.euler_characteristic(),
            2 - 2 * config.datum.cover_genus().unwrap() as i64
        );
    }
    println!("monodromy walks: PASS");
}

#[test]
fn chart_radius_independence() {
    // the Weil-Petersson value is a global integral; the ramification-disk
    // radius is a chart convention
    let datum = MonodromyDatum::genus_zero(2, &[(1, 2); 6]).unwrap();
    let base = BranchConfiguration::regular_polygon(datum.clone()).unwrap();
    let small = BranchConfiguration::regular_polygon(datum)
        .unwrap()
        .with_radius_scale(0.8)
        .unwrap();
    let a = weil_petersson(&base, &Direction::BranchPoint(0), Some(0.01), 2, WORKERS).unwrap();
    let b = weil_petersson(&small, &Direction::BranchPoint(0), Some(0.01), 2, WORKERS).unwrap();
    let rel = (a.result.wp_total - b.result.wp_total).abs() / a.result.wp_total;
    assert!(rel < 0.02, "chart dependence {rel:.3e}");
    println!("chart-radius independence: PASS [relative change {rel:.2e}]");
}

#[test]
fn reproducible_across_worker_counts() {
    let config = hexagon();
    let one = weil_petersson(&config, &Direction::BranchPoint(0), Some(0.012), 1, 1).unwrap();
    let five = weil_petersson(&config, &Direction::BranchPoint(0), Some(0.012), 1, 5).unwrap();
    assert_eq!(one.result.wp_total, five.result.wp_total);
    assert_eq!(one.result.g0_pde, five.result.g0_pde);
    assert_eq!(one.result.fiber_integral, five.result.fiber_integral);
    println!("worker-count reproducibility: PASS [bitwise]");
}

#[test]
fn automorphism_theorem() {
    // order 2 exactly in degree 2, trivial beyond
    for b in [2usize, 4, 6] {
        for d in enumerate_classes(2, b).unwrap() {
            assert_eq!(automorphism_order(&d).unwrap(), 2);
        }
    }
    for d in enumerate_classes(3, 4).unwrap() {
        assert_eq!(automorphism_order(&d).unwrap(), 1);
    }
    for d in enumerate_classes(4, 6).unwrap() {
        assert_eq!(automorphism_order(&d).unwrap(), 1);
    }
    println!("automorphism orders: PASS");
}
