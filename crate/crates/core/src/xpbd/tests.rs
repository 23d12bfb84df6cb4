use super::*;
use crate::synth;
use proptest::prelude::*;

fn cloth() -> MaterialProperties {
    MaterialProperties { name: "cloth".into(), density: 400.0, youngs_modulus: 5e6, poisson_ratio: 0.3, thickness: 5e-4 }
}

fn no_damping(substeps: usize, iterations: usize, gravity: Vector3<f64>) -> SimParams {
    SimParams { substeps, iterations, gravity, damping: 1.0, ground: None }
}

fn triangle_pair() -> TriangleMesh {
    let h = 3f64.sqrt() / 2.0;
    TriangleMesh::new(
        vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.5, 0.0, h), Vector3::new(0.5, 0.0, -h)],
        vec![[0, 2, 1], [0, 1, 3]],
    )
    .unwrap()
}

/// Particle of mass `m` hanging from a pinned anchor at the origin.
fn hanging(m: f64, compliance: f64, params: SimParams) -> Simulation {
    let state = SimState::from_particles(vec![Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0)], vec![0.0, 1.0 / m]).unwrap();
    let c = vec![
        Constraint::Distance { vertices: [0, 1], rest_length: 1.0, compliance },
        Constraint::Pin { vertex: 0, anchor: Vector3::zeros() },
    ];
    Simulation::from_parts(state, c, params).unwrap()
}

fn stretch(sim: &Simulation) -> f64 {
    sim.constraints[0].value(sim.positions())
}

#[test]
fn triangle_pair_constraint_counts() {
    let sim = build_sim(&triangle_pair(), &cloth(), SimParams::default()).unwrap();
    let count = |f: fn(&Constraint) -> bool| sim.constraints.iter().filter(|c| f(c)).count();
    assert_eq!(count(|c| matches!(c, Constraint::Distance { .. })), 5);
    assert_eq!(count(|c| matches!(c, Constraint::Bending { .. })), 1);
    assert!(sim.state.lambdas.iter().all(|l| *l == 0.0));
}

#[test]
fn vertex_mass_from_incident_area() {
    let mesh = TriangleMesh::new(
        vec![Vector3::zeros(), Vector3::new(0.3, 0.0, 0.0), Vector3::new(0.0, 0.0, 0.2)],
        vec![[0, 2, 1]],
    )
    .unwrap();
    let m = MaterialProperties { density: 1000.0, thickness: 0.01, ..cloth() };
    let sim = build_sim(&mesh, &m, SimParams::default()).unwrap();
    for w in &sim.state.inverse_masses {
        assert!((1.0 / w - 0.1).abs() < 1e-12);
    }
}

#[test]
fn compliance_mapping() {
    let m = MaterialProperties { youngs_modulus: 1e6, thickness: 1e-3, poisson_ratio: 0.3, ..cloth() };
    assert!((m.distance_compliance() - 1e-3).abs() < 1e-15);
    assert!((m.bending_compliance() - 12.0 * 0.91 / (1e6 * 1e-9)).abs() < 1e-6);
}

#[test]
fn invalid_inputs_are_rejected() {
    let flat = TriangleMesh::new(vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0)], vec![[0, 1, 2]]).unwrap();
    assert!(matches!(build_sim(&flat, &cloth(), SimParams::default()), Err(Error::InvalidInput(_))));
    let bad = MaterialProperties { poisson_ratio: 0.5, ..cloth() };
    assert!(matches!(build_sim(&triangle_pair(), &bad, SimParams::default()), Err(Error::InvalidParameter(_))));
    let mut sim = build_sim(&triangle_pair(), &cloth(), SimParams::default()).unwrap();
    assert!(matches!(sim.pin_vertex(9, Vector3::zeros()), Err(Error::NotFound(_))));
    assert!(matches!(sim.step(0.0), Err(Error::InvalidParameter(_))));
    sim.params.substeps = 0;
    assert!(matches!(sim.step(0.01), Err(Error::InvalidParameter(_))));
}

#[test]
fn satisfied_state_without_gravity_is_a_fixed_point() {
    let mut mesh = synth::cloth_grid(3, 1.0, 0.5);
    mesh.vertices[5].y += 0.1;
    let mut sim = build_sim(&mesh, &cloth(), no_damping(4, 4, Vector3::zeros())).unwrap();
    let before = sim.state.positions.clone();
    for _ in 0..10 {
        sim.step(0.01).unwrap();
    }
    assert_eq!(sim.state.positions, before);
}

#[test]
fn free_particle_velocity_increment() {
    let state = SimState::from_particles(vec![Vector3::zeros()], vec![1.0]).unwrap();
    let mut sim = Simulation::from_parts(state, vec![], no_damping(1, 1, STANDARD_GRAVITY)).unwrap();
    sim.step(0.01).unwrap();
    assert!((sim.state.velocities[0] - Vector3::new(0.0, -0.0981, 0.0)).norm() < 1e-15);
}

#[test]
fn hanging_mass_equilibrium_stretch() {
    let alpha = 1e-3;
    let params = SimParams { substeps: 20, iterations: 1, gravity: STANDARD_GRAVITY, damping: 0.99, ground: None };
    let mut sim = hanging(1.0, alpha, params);
    for _ in 0..600 {
        sim.step(1.0 / 60.0).unwrap();
    }
    let expected = 1.0 * 9.81 * alpha;
    assert!((stretch(&sim) - expected).abs() <= 0.02 * expected, "{} vs {expected}", stretch(&sim));
}

/// The settled stretch is exact for every substep size, so convergence is
/// measured against the undamped analytic motion toward it,
/// C(t) = m·g·α·(1 − cos ωt) with ω = 1/√(m·α).
#[test]
fn halving_substep_reduces_hanging_mass_error() {
    let (m, alpha): (f64, f64) = (1.0, 1e-3);
    let omega = 1.0 / (m * alpha).sqrt();
    let err = |substeps: usize| {
        let mut sim = hanging(m, alpha, no_damping(substeps, 1, STANDARD_GRAVITY));
        let dt = 1.0 / 60.0;
        let mut worst: f64 = 0.0;
        for step in 1..=30 {
            sim.step(dt).unwrap();
            let t = step as f64 * dt;
            let exact = m * 9.81 * alpha * (1.0 - (omega * t).cos());
            worst = worst.max((stretch(&sim) - exact).abs());
        }
        worst
    };
    let errors: Vec<f64> = [5, 10, 20, 40, 80].into_iter().map(err).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn settled_stretch_is_independent_of_substeps() {
    let expected = 9.81e-3;
    for substeps in [5, 10, 20, 40] {
        let params = SimParams { substeps, iterations: 1, gravity: STANDARD_GRAVITY, damping: 0.99, ground: None };
        let mut sim = hanging(1.0, 1e-3, params);
        for _ in 0..600 {
            sim.step(1.0 / 60.0).unwrap();
        }
        assert!((stretch(&sim) - expected).abs() < 1e-9 * expected.max(1.0) + 1e-12);
    }
}

#[test]
fn pinned_vertex_does_not_move() {
    let mesh = synth::cloth_grid(4, 1.0, 1.0);
    let mut sim = build_sim(&mesh, &cloth(), SimParams::default()).unwrap();
    let p = mesh.vertices[0];
    sim.pin_vertex(0, p).unwrap();
    for _ in 0..30 {
        sim.step(1.0 / 60.0).unwrap();
    }
    assert_eq!(sim.state.positions[0], p);
    assert!(sim.state.positions[24].y < 1.0);
}

#[test]
fn move_pin_reaches_anchor() {
    let mesh = synth::cloth_grid(4, 1.0, 1.0);
    let mut sim = build_sim(&mesh, &cloth(), SimParams::default()).unwrap();
    sim.pin_vertex(3, mesh.vertices[3]).unwrap();
    let target = mesh.vertices[3] + Vector3::new(1.0, 0.0, 0.0);
    sim.move_pin(3, target).unwrap();
    sim.step(1.0 / 60.0).unwrap();
    assert!((sim.state.positions[3] - target).norm() <= 1e-6);
    assert_eq!(sim.pins(), vec![(3, target)]);
}

#[test]
fn release_restores_mass() {
    let mut sim = build_sim(&triangle_pair(), &cloth(), SimParams::default()).unwrap();
    let w = sim.state.inverse_masses[2];
    sim.pin_vertex(2, Vector3::zeros()).unwrap();
    assert_eq!(sim.state.inverse_masses[2], 0.0);
    sim.release(2).unwrap();
    assert_eq!(sim.state.inverse_masses[2], w);
    assert!(sim.pins().is_empty());
    assert_eq!(sim.state.lambdas.len(), sim.constraints.len());
}

#[test]
fn cloth_pinned_at_two_corners_settles() {
    let mesh = synth::cloth_grid(8, 1.0, 1.0);
    let params = SimParams { substeps: 20, iterations: 4, damping: 0.995, ..SimParams::default() };
    let mut sim = build_sim(&mesh, &cloth(), params).unwrap();
    let corners = [0, 8];
    for c in corners {
        sim.pin_vertex(c, mesh.vertices[c]).unwrap();
    }
    let dt = 1.0 / 60.0;
    let mut settled_at = None;
    for frame in 0..600 {
        sim.step(dt).unwrap();
        let vmax = sim.state.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if vmax < 1e-4 {
            settled_at.get_or_insert(frame);
        }
    }
    assert!(settled_at.is_some(), "cloth still moving after 10 s");
    assert!(sim.state.positions.iter().all(|p| p.y <= 1.0 + 1e-12));
}

#[test]
fn zero_compliance_chain_converges() {
    let links = 10;
    let l = 0.1;
    let positions: Vec<_> = (0..=links).map(|i| Vector3::new(i as f64 * l, 0.0, 0.0)).collect();
    let mut w = vec![1.0; links + 1];
    w[0] = 0.0;
    let state = SimState::from_particles(positions, w).unwrap();
    let mut c: Vec<Constraint> = (0..links).map(|i| Constraint::Distance { vertices: [i, i + 1], rest_length: l, compliance: 0.0 }).collect();
    c.push(Constraint::Pin { vertex: 0, anchor: Vector3::zeros() });
    let mut sim = Simulation::from_parts(state, c, SimParams { substeps: 200, iterations: 50, damping: 1.0, ..SimParams::default() }).unwrap();
    for _ in 0..60 {
        sim.step(1.0 / 60.0).unwrap();
        let worst = sim.constraints[..links].iter().map(|c| c.value(sim.positions()).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-6 * l, "residual {worst}");
    }
}

#[test]
fn free_fall_matches_closed_form() {
    let x0 = Vector3::new(0.5, 10.0, -1.0);
    let v0 = Vector3::new(1.0, 2.0, 0.5);
    let state = SimState::from_particles(vec![x0, x0 + Vector3::new(0.1, 0.0, 0.0)], vec![1.0, 0.5]).unwrap();
    let mut sim = Simulation::from_parts(state, vec![], no_damping(50_000, 1, STANDARD_GRAVITY)).unwrap();
    sim.state.velocities = vec![v0, v0];
    let dt = 0.01;
    let com0 = (x0 * 1.0 + (x0 + Vector3::new(0.1, 0.0, 0.0)) * 2.0) / 3.0;
    for step in 1..=100 {
        sim.step(dt).unwrap();
        let t = step as f64 * dt;
        let p = sim.positions();
        let com = (p[0] * 1.0 + p[1] * 2.0) / 3.0;
        let exact = com0 + v0 * t + 0.5 * STANDARD_GRAVITY * t * t;
        let displacement = (exact - com0).norm();
        assert!((com - exact).norm() <= 1e-6 * displacement, "step {step}: {} vs {displacement}", (com - exact).norm());
    }
}

#[test]
fn ground_is_never_penetrated() {
    let mesh = synth::cloth_grid(6, 1.0, 0.3);
    let params = SimParams { ground: Some(0.0), ..SimParams::default() };
    let mut sim = build_sim(&mesh, &cloth(), params).unwrap();
    for _ in 0..90 {
        sim.step(1.0 / 60.0).unwrap();
        assert!(sim.positions().iter().all(|p| p.y >= -1e-6));
        for (c, l) in sim.constraints.iter().zip(&sim.state.lambdas) {
            if matches!(c, Constraint::Ground { .. }) {
                assert!(*l >= 0.0);
            }
        }
    }
    assert!(sim.positions().iter().any(|p| p.y < 1e-3));
}

#[test]
fn trajectories_are_deterministic() {
    let run = || {
        let mesh = synth::cloth_grid(6, 1.0, 1.0);
        let mut sim = build_sim(&mesh, &cloth(), SimParams { ground: Some(0.0), ..SimParams::default() }).unwrap();
        sim.pin_vertex(0, mesh.vertices[0]).unwrap();
        for i in 0..40 {
            sim.move_pin(0, mesh.vertices[0] + Vector3::new(0.01 * i as f64, 0.0, 0.0)).unwrap();
            sim.step(1.0 / 60.0).unwrap();
        }
        sim.state
    };
    assert_eq!(run(), run());
}

#[test]
fn nan_gravity_reports_divergence() {
    let state = SimState::from_particles(vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)], vec![1.0, 1.0]).unwrap();
    let c = vec![Constraint::Distance { vertices: [0, 1], rest_length: 1.0, compliance: 0.0 }];
    let mut sim = Simulation::from_parts(state, c, no_damping(2, 1, Vector3::zeros())).unwrap();
    sim.state.velocities[1] = Vector3::new(f64::INFINITY, 0.0, 0.0);
    match sim.step(0.01) {
        Err(Error::SimulationDiverged(d)) => {
            assert_eq!(d.substep, 0);
            assert!(d.constraint.is_some() || d.vertex.is_some());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn bent_rest_shape_is_preserved() {
    let mut mesh = triangle_pair();
    mesh.vertices[2].y = 0.4;
    let mut sim = build_sim(&mesh, &cloth(), no_damping(4, 4, Vector3::zeros())).unwrap();
    let Constraint::Bending { rest_angle, .. } = sim.constraints[5] else { panic!() };
    assert!(rest_angle.abs() > 0.1);
    sim.step(0.1).unwrap();
    assert_eq!(sim.state.positions, mesh.vertices);
}

#[test]
fn transform_moves_body_and_anchors() {
    let mesh = synth::cloth_grid(3, 1.0, 1.0);
    let mut sim = build_sim(&mesh, &cloth(), SimParams::default()).unwrap();
    sim.pin_vertex(0, mesh.vertices[0]).unwrap();
    let q = UnitQuaternion::from_euler_angles(0.0, 1.0, 0.0);
    sim.transform(&q, 2.0, &Vector3::zeros(), &Vector3::new(0.0, 1.0, 0.0));
    let expect = 2.0 * (q * mesh.vertices[0]) + Vector3::new(0.0, 1.0, 0.0);
    assert!((sim.pins()[0].1 - expect).norm() < 1e-12);
    if let Constraint::Distance { rest_length, .. } = sim.constraints[0] {
        assert!((rest_length - 2.0 / 3.0).abs() < 1e-12);
    }
}

fn random_wing(rng: &mut impl rand::Rng) -> [Vector3<f64>; 4] {
    std::array::from_fn(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

#[test]
fn dihedral_angle_of_known_fold() {
    // Edge along z; first wing along +x, second wing rotated by 90 degrees.
    let p = [Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.0, 0.0, 1.0)];
    assert!((dihedral_angle(p).abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    let flat = [Vector3::new(1.0, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0), Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.0, 0.0, 1.0)];
    assert!(dihedral_angle(flat).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dihedral_gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let p = random_wing(&mut rng);
        let theta = dihedral_angle(p);
        prop_assume!(theta.abs() < 3.0);
        let Some(g) = dihedral_gradient(p) else { return Ok(()) };
        prop_assume!(g.iter().all(|v| v.norm() < 50.0));
        let eps = 1e-6;
        for i in 0..4 {
            for k in 0..3 {
                let mut a = p;
                let mut b = p;
                a[i][k] += eps;
                b[i][k] -= eps;
                let fd = (dihedral_angle(a) - dihedral_angle(b)) / (2.0 * eps);
                prop_assert!((fd - g[i][k]).abs() < 1e-5 * (1.0 + fd.abs()), "vertex {} axis {}: fd {} analytic {}", i, k, fd, g[i][k]);
            }
        }
        let sum = g[0] + g[1] + g[2] + g[3];
        prop_assert!(sum.norm() < 1e-9 * (1.0 + g[0].norm()));
    }

    #[test]
    fn internal_projections_conserve_momentum(seed in any::<u64>(), compliance in prop::sample::select(vec![0.0, 1e-4, 1e-1])) {
        use rand::Rng;
        let mut rng = synth::rng(seed);
        let x = random_wing(&mut rng).to_vec();
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..10.0)).collect();
        let cons = [
            Constraint::Distance { vertices: [0, 1], rest_length: 0.7, compliance },
            Constraint::Bending { vertices: [0, 1, 2, 3], rest_angle: 0.3, compliance },
        ];
        for c in cons {
            let mut y = x.clone();
            let mut lambda = 0.0;
            constraint::project(&c, &mut y, &w, &mut lambda, 0.01).unwrap();
            let p: Vector3<f64> = (0..4).map(|i| (y[i] - x[i]) / w[i]).sum();
            prop_assert!(p.norm() < 1e-9, "{:?}", p);
        }
    }
}
