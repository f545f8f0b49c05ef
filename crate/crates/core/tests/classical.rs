use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use semikernel_core::classical::{
    action, default_steps, energy_drift, flow_from_initial, flow_from_terminal, jacobian_r0, orbit_gap_check,
    solve_bvp, PhasePoint,
};
use semikernel_core::potentials::{Builtin, PotentialModel};
use semikernel_core::rates::fit_rate;

const ALL: [Builtin; 5] = [
    Builtin::Free,
    Builtin::Stark { field: 1.0 },
    Builtin::Harmonic,
    Builtin::AbsCubed,
    Builtin::Breathing,
];

fn autonomous() -> impl Strategy<Value = Builtin> {
    prop_oneof![
        Just(Builtin::Free),
        (-2.0..2.0f64).prop_map(|field| Builtin::Stark { field }),
        Just(Builtin::Harmonic),
        Just(Builtin::AbsCubed),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn energy_is_conserved(p in autonomous(), t in 0.01..0.5f64, x in -3.0..3.0f64, xi in -3.0..3.0f64) {
        let orbit = flow_from_terminal(&p, t, x, xi, 256).unwrap();
        let h0 = 0.5 * xi * xi + p.value(t, x);
        prop_assert!(energy_drift(&p, &orbit) <= 1e-8 * (1.0 + h0.abs()));
    }

    #[test]
    fn forward_flow_undoes_the_backward_flow(
        p in prop_oneof![autonomous(), Just(Builtin::Breathing)],
        t in 0.01..1.0f64,
        x in -3.0..3.0f64,
        xi in -3.0..3.0f64,
    ) {
        let steps = default_steps(t);
        let back = flow_from_terminal(&p, t, x, xi, steps).unwrap();
        let start = back.first();
        let fwd = flow_from_initial(&p, t, start.x, start.xi, steps).unwrap();
        let end = fwd.last();
        prop_assert!((end.x - x).abs() <= 1e-9 && (end.xi - xi).abs() <= 1e-9, "{end:?} vs ({x}, {xi})");
    }

    #[test]
    fn harmonic_flow_is_a_rotation(t in 0.01..3.0f64, x in -3.0..3.0f64, xi in -3.0..3.0f64) {
        let orbit = flow_from_terminal(&Builtin::Harmonic, t, x, xi, default_steps(t)).unwrap();
        for (&s, p) in orbit.t_grid.iter().zip(&orbit.states).step_by(7) {
            let (c, sn) = ((s - t).cos(), (s - t).sin());
            prop_assert!((p.x - (x * c + xi * sn)).abs() < 1e-8);
            prop_assert!((p.xi - (-x * sn + xi * c)).abs() < 1e-8);
        }
        // J(s) = ∂x(s)/∂ξ(t) = sin(s − t).
        prop_assert!((orbit.jac[0] + t.sin()).abs() < 1e-8);
    }

    #[test]
    fn stark_bvp_is_a_parabola(field in -2.0..2.0f64, t in 0.05..1.0f64, x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let p = Builtin::Stark { field };
        let bvp = solve_bvp(&p, t, x, y, 1e-12).unwrap();
        prop_assert!((bvp.xi0 - ((x - y) / t + field * t / 2.0)).abs() < 1e-8);
        let s = (x - y).powi(2) / (2.0 * t) - t * field * (x + y) / 2.0 - field * field * t.powi(3) / 24.0;
        prop_assert!((bvp.action - s).abs() < 1e-9);
    }
}

#[test]
fn terminal_flow_examples() {
    let o = flow_from_terminal(&Builtin::Free, 1.0, 0.0, 1.0, 64).unwrap();
    assert_abs_diff_eq!(o.first().x, -1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(o.first().xi, 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(o.jac[0], -1.0, epsilon = 1e-14);

    let o = flow_from_terminal(&Builtin::Harmonic, PI / 2.0, 1.0, 0.0, default_steps(PI / 2.0)).unwrap();
    assert_abs_diff_eq!(o.first().x, 0.0, epsilon = 1e-8);
    assert_abs_diff_eq!(o.first().xi, 1.0, epsilon = 1e-8);

    let coarse = flow_from_terminal(&Builtin::AbsCubed, 0.3, 0.5, 0.2, 64).unwrap();
    let fine = flow_from_terminal(&Builtin::AbsCubed, 0.3, 0.5, 0.2, 640).unwrap();
    assert_abs_diff_eq!(coarse.first().x, fine.first().x, epsilon = 1e-9);
    assert_abs_diff_eq!(coarse.first().xi, fine.first().xi, epsilon = 1e-9);
}

#[test]
fn bvp_and_action_examples() {
    let b = solve_bvp(&Builtin::Free, 0.5, 1.0, 0.0, 1e-12).unwrap();
    assert_abs_diff_eq!(b.xi0, 2.0, epsilon = 1e-14);
    assert!(b.residual <= 1e-14);
    assert_abs_diff_eq!(b.action, 1.0, epsilon = 1e-12);

    let b = solve_bvp(&Builtin::Harmonic, 0.5, 1.0, 0.0, 1e-12).unwrap();
    assert_abs_diff_eq!(b.xi0, 1.0 / 0.5f64.sin(), epsilon = 1e-8);

    let b = solve_bvp(&Builtin::Stark { field: 1.0 }, 0.5, 1.0, 0.0, 1e-12).unwrap();
    assert_abs_diff_eq!(b.xi0, 2.25, epsilon = 1e-8);
    assert_abs_diff_eq!(b.action, 0.7447917, epsilon = 1e-7);

    let t = PI / 3.0;
    let b = solve_bvp(&Builtin::Harmonic, t, 1.0, 0.0, 1e-12).unwrap();
    assert_abs_diff_eq!(b.action, t.cos() / (2.0 * t.sin()), epsilon = 1e-7);
    assert_abs_diff_eq!(b.action, 0.2886751, epsilon = 1e-7);
    assert_abs_diff_eq!(action(&Builtin::Harmonic, &b.orbit), b.action, epsilon = 0.0);
}

#[test]
fn hamilton_jacobi_relations() {
    let h = 1e-4;
    let s = |p: &Builtin, t, x, y| solve_bvp(p, t, x, y, 1e-13).unwrap().action;
    for p in ALL {
        for t in [0.1, 0.3] {
            for x in [-0.5, 0.0, 0.5] {
                for y in [-0.5, 0.0, 0.5] {
                    let b = solve_bvp(&p, t, x, y, 1e-13).unwrap();
                    let sx = (s(&p, t, x + h, y) - s(&p, t, x - h, y)) / (2.0 * h);
                    let sy = (s(&p, t, x, y + h) - s(&p, t, x, y - h)) / (2.0 * h);
                    assert!((sx - b.xit).abs() <= 1e-5, "{p} t={t} ({x},{y}): S_x {sx} vs {}", b.xit);
                    assert!((sy + b.xi0).abs() <= 1e-5, "{p} t={t} ({x},{y}): S_y {sy} vs {}", -b.xi0);
                }
            }
        }
    }
}

#[test]
fn rk4_endpoint_error_has_order_four() {
    for p in [Builtin::Harmonic, Builtin::Breathing] {
        let reference = flow_from_terminal(&p, 1.0, 1.0, 0.5, 8192).unwrap().first();
        let err = |steps| {
            let e: PhasePoint = flow_from_terminal(&p, 1.0, 1.0, 0.5, steps).unwrap().first();
            (e.x - reference.x).hypot(e.xi - reference.xi)
        };
        let points: Vec<(f64, f64)> = [16usize, 32, 64, 128].iter().map(|&n| (1.0 / n as f64, err(n))).collect();
        let fit = fit_rate(&points).unwrap();
        assert!(fit.slope >= 3.9, "{p}: slope {}", fit.slope);
    }
}

#[test]
fn r0_matches_the_harmonic_closed_form() {
    let r = jacobian_r0(&Builtin::Free, 0.5, 0.3, 1.0).unwrap();
    assert_abs_diff_eq!(r.det_ratio, 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(r.r0, 0.0, epsilon = 1e-12);

    let r = jacobian_r0(&Builtin::Harmonic, 0.3, 0.0, 0.0).unwrap();
    assert_abs_diff_eq!(r.det_ratio, 3.38386, epsilon = 1e-5);
    assert_abs_diff_eq!(r.r0, 0.05053, epsilon = 1e-5);

    for t in [0.05, 0.1, 0.2, 0.4] {
        let r = jacobian_r0(&Builtin::Harmonic, t, 0.7, -0.3).unwrap();
        assert_abs_diff_eq!(r.r0, 1.0 / t.sin() - 1.0 / t, epsilon = 1e-6);
        assert!(r.r0.abs() <= 0.25);
    }
}

#[test]
fn r0_stays_bounded_as_t_shrinks() {
    for p in [Builtin::Harmonic, Builtin::AbsCubed] {
        let r0: Vec<f64> = (2..=8).map(|k| jacobian_r0(&p, 0.5f64.powi(k), 0.8, 0.4).unwrap().r0).collect();
        for w in r0.windows(2) {
            assert!(w[1].abs() <= w[0].abs() + 1e-9, "{p}: {r0:?}");
        }
        assert!(r0.iter().all(|r| r.abs() < 0.1), "{p}: {r0:?}");
    }
}

#[test]
fn free_gaps_interpolate_the_boundary_mismatch() {
    let (t, x, y, xp, xi) = (0.4, 1.0, -0.5, 1.3, 2.0);
    let g = orbit_gap_check(&Builtin::Free, t, x, y, xp, xi).unwrap();
    let x2_0 = xp - t * xi;
    assert_abs_diff_eq!(g.position_gap, (x - xp).abs().max((y - x2_0).abs()), epsilon = 1e-12);
    assert!(g.momentum_gap < 1e-12);
}

#[test]
fn harmonic_gap_constants() {
    let (t, x, y) = (0.3, 1.0, 0.0);
    let xi = solve_bvp(&Builtin::Harmonic, t, x, y, 1e-12).unwrap().xit + 0.1;
    let g = orbit_gap_check(&Builtin::Harmonic, t, x, y, 1.1, xi).unwrap();
    assert!(g.c1.is_finite() && g.c1 <= 3.0, "{g:?}");
    assert!(g.c2.is_finite() && g.c2 <= 3.0, "{g:?}");
}

#[test]
fn abscubed_gap_constants_are_finite() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_pcg::Pcg64::seed_from_u64(7);
    let (mut c1, mut c2) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (x, y, xp, xi) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-5.0..5.0));
        let g = orbit_gap_check(&Builtin::AbsCubed, 0.2, x, y, xp, xi).unwrap();
        c1 = c1.max(g.c1);
        c2 = c2.max(g.c2);
    }
    assert!(c1.is_finite() && c2.is_finite());
    println!("abscubed t=0.2: empirical C1 = {c1:.4}, C2 = {c2:.4}");
}
