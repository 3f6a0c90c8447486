use std::collections::BTreeMap;

use geosweep::expr::{Expr, VarLayout};
use geosweep::{catching_up, interpolate, Scenario, SetOps, Space};
use proptest::prelude::*;

fn sphere_point(a: f64, b: f64) -> Vec<f64> {
    vec![a.sin() * b.cos(), a.sin() * b.sin(), a.cos()]
}

fn halfline(x0: f64, speed: f64) -> Scenario {
    Scenario::from_json(&format!(
        r#"{{"schema": 1, "name": "h", "manifold": {{"kind": "euclidean", "dim": 1}},
            "set": {{"kind": "half_space", "normal": [1.0], "offset": 0.0, "speed": {speed}}},
            "horizon": 1.0, "x0": [{x0}],
            "constants": {{"set_lipschitz": {speed}, "prox_radius": 1.0}}}}"#
    ))
    .unwrap()
}

fn disk(x0: [f64; 2], vx: f64) -> Scenario {
    Scenario::from_json(&format!(
        r#"{{"schema": 1, "name": "d", "manifold": {{"kind": "euclidean", "dim": 2}},
            "set": {{"kind": "ball", "center": [0.0, 0.0], "radius": 1.0, "velocity": [{vx}, 0.0]}},
            "perturbation": {{"kind": "field", "components": ["0.3", "-0.2"], "sup_norm": 0.37, "lipschitz": 0.0}},
            "horizon": 1.0, "x0": [{}, {}],
            "constants": {{"set_lipschitz": {}, "prox_radius": 1.0}}}}"#,
        x0[0],
        x0[1],
        vx.abs()
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sphere_log_inverts_exp(a1 in 0.0..3.0f64, b1 in 0.0..std::f64::consts::TAU, a2 in 0.0..3.0f64, b2 in 0.0..std::f64::consts::TAU) {
        let s = Space::sphere(2);
        let x = s.point(sphere_point(a1, b1)).unwrap();
        let y = s.point(sphere_point(a2, b2)).unwrap();
        prop_assume!(s.distance(&x, &y).unwrap() < 1.5);
        let g = s.log(&x, &y).unwrap();
        let back = s.exp(&x, &g).unwrap();
        prop_assert!((back.coords() - y.coords()).norm() < 1e-9);
        prop_assert!((s.norm(&g) - s.distance(&x, &y).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn hyperbolic_distance_is_symmetric(u in -1.0..1.0f64, v in -1.0..1.0f64, p in -1.0..1.0f64, q in -1.0..1.0f64) {
        let h = Space::hyperbolic(2);
        let o = h.point([1.0, 0.0, 0.0]).unwrap();
        let x = h.exp(&o, &h.tangent(&o, [0.0, u, v]).unwrap()).unwrap();
        let y = h.exp(&o, &h.tangent(&o, [0.0, p, q]).unwrap()).unwrap();
        let dxy = h.distance(&x, &y).unwrap();
        let dyx = h.distance(&y, &x).unwrap();
        prop_assert!((dxy - dyx).abs() < 1e-12 * (1.0 + dxy));
    }

    #[test]
    fn transport_preserves_norm_on_sphere(a in 0.1..1.4f64, b in 0.0..std::f64::consts::TAU, w1 in -1.0..1.0f64, w2 in -1.0..1.0f64) {
        let s = Space::sphere(2);
        let x = s.point([0.0, 0.0, 1.0]).unwrap();
        let y = s.point(sphere_point(a, b)).unwrap();
        let v = s.tangent(&x, [w1, w2, 0.0]).unwrap();
        let w = s.transport(&x, &y, &v).unwrap();
        prop_assert!((s.norm(&w) - s.norm(&v)).abs() < 1e-12);
    }

    #[test]
    fn disk_projection_is_idempotent(px in -3.0..3.0f64, py in -3.0..3.0f64, t in 0.0..1.0f64) {
        let sc = disk([0.0, 0.0], 0.5);
        let set = &sc.problem.set;
        let y = sc.problem.space.point([px, py]).unwrap();
        let p = set.project(t, &y).unwrap();
        prop_assert!(set.member(t, &p.point));
        let again = set.project(t, &p.point).unwrap();
        prop_assert!((again.point.coords() - p.point.coords()).norm() < 1e-9);
        prop_assert!(again.dist < 1e-9);
    }

    #[test]
    fn halfline_run_tracks_the_exact_solution(x0 in 0.0..2.0f64, speed in 0.1..2.0f64, steps in 10usize..400) {
        let sc = halfline(x0, speed);
        let h = 1.0 / steps as f64;
        let traj = catching_up(&sc.problem, h).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.nodes) {
            prop_assert!((x.coords()[0] - x0.max(speed * t)).abs() < 1e-12);
        }
        prop_assert!(traj.stats.velocity_bound_ok);
    }

    #[test]
    fn disk_run_stays_feasible_within_the_velocity_bound(r in 0.0..0.99f64, th in 0.0..std::f64::consts::TAU, vx in -1.0..1.0f64) {
        let sc = disk([r * th.cos(), r * th.sin()], vx);
        let traj = catching_up(&sc.problem, 0.01).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.nodes) {
            prop_assert!(sc.problem.set.member(*t, x));
        }
        prop_assert!(traj.stats.max_velocity <= traj.stats.velocity_bound + sc.problem.tolerances.velocity_margin);
        let mid = interpolate(&traj, 0.5).unwrap();
        prop_assert!(mid.coords().iter().all(|c| c.is_finite()));
    }

    #[test]
    fn scenario_round_trip_is_hash_stable(x0 in 0.0..5.0f64, speed in 0.0..3.0f64) {
        let sc = halfline(x0, speed);
        let again = Scenario::from_json(&sc.normalized_json().unwrap()).unwrap();
        prop_assert_eq!(sc.hash(), again.hash());
    }

    #[test]
    fn polynomial_gradients_match_closed_form(a in -3.0..3.0f64, b in -3.0..3.0f64, x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let params = BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)]);
        let e = Expr::compile("a * x1^3 + b * x1 * x2 - sin(x2)", VarLayout::coords(2), &params).unwrap();
        let g = e.gradient(&[x, y]);
        prop_assert!((g[0] - (3.0 * a * x * x + b * y)).abs() < 1e-12 * (1.0 + g[0].abs()));
        prop_assert!((g[1] - (b * x - y.cos())).abs() < 1e-12 * (1.0 + g[1].abs()));
    }
}
