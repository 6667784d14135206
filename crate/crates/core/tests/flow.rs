use proptest::prelude::*;
use rodshape::energy::{EnergyModel, IntrinsicShape, MaterialParams};
use rodshape::relax::{
    constraint_residual, gradient_flow, project_to_manifold, ClampingConstraint, FlowMetric, FlowStatus, RelaxConfig,
};
use rodshape::scenarios::{gravity_beam, twisted_loop_relaxation, two_arc_relaxation};
use rodshape::se3::StrainVector;
use rodshape::shape::{reconstruct_nodes, PiecewiseShape, Placement};

#[test]
fn energy_never_increases_along_the_flow() {
    for sc in [two_arc_relaxation(8).unwrap(), twisted_loop_relaxation(12).unwrap(), gravity_beam(10.0, 12).unwrap()] {
        let result = gradient_flow(&sc.shape, &sc.model, &sc.clamp, &sc.config).unwrap();
        for w in result.trace.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12 * w[0].energy.abs().max(1.0), "{}: {:?}", sc.name, w);
        }
    }
}

#[test]
fn clamped_flow_stays_on_the_constraint_set() {
    let sc = twisted_loop_relaxation(16).unwrap();
    let result = gradient_flow(&sc.shape, &sc.model, &sc.clamp, &sc.config).unwrap();
    assert_eq!(result.status, FlowStatus::Converged);
    assert!(result.trace.iter().all(|row| row.residual_norm < 1e-10));
    assert!(constraint_residual(&result.shape, &sc.clamp).unwrap().norm() < 1e-10);
}

#[test]
fn iteration_cap_is_reported() {
    let sc = twisted_loop_relaxation(16).unwrap();
    let cfg = RelaxConfig { max_iters: 3, ..sc.config.clone() };
    let result = gradient_flow(&sc.shape, &sc.model, &sc.clamp, &cfg).unwrap();
    assert_eq!(result.status, FlowStatus::MaxIterations);
    assert_eq!(result.iterations, 3);
}

#[test]
fn infeasible_start_is_rejected() {
    let shape = PiecewiseShape::uniform(1.0, 4, StrainVector::new(0.3, 0.0, 0.0, 0.0, 0.0, 1.0)).unwrap();
    let model = EnergyModel::new(
        MaterialParams { a: [1.0; 3], b: [1.0; 3], eps: 1e-6 },
        IntrinsicShape::uniform(4, StrainVector::straight()),
        None,
    );
    let clamp = ClampingConstraint::clamped(Placement::canonical(), Placement::canonical());
    assert!(gradient_flow(&shape, &model, &clamp, &RelaxConfig::default()).is_err());
}

#[test]
fn free_rod_relaxes_to_its_intrinsic_shape() {
    let intrinsic = StrainVector::new(0.4, -0.3, 0.2, 0.0, 0.0, 1.0);
    let model = EnergyModel::new(
        MaterialParams { a: [1.0, 2.0, 3.0], b: [5.0; 3], eps: 1e-8 },
        IntrinsicShape::uniform(6, intrinsic),
        None,
    );
    let start = PiecewiseShape::uniform(2.0, 6, StrainVector::straight()).unwrap();
    let cfg = RelaxConfig { eta: 0.1, eta_max: Some(1.0), tol_grad: 1e-11, metric: FlowMetric::Stiffness, ..Default::default() };
    let result = gradient_flow(&start, &model, &ClampingConstraint::free(Placement::canonical()), &cfg).unwrap();
    assert_eq!(result.status, FlowStatus::Converged);
    for e in result.shape.elements() {
        assert!((e.u - intrinsic.u).amax() < 1e-8);
        assert!(e.v.xy().amax() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projection_closes_a_perturbed_ring(seed in prop::collection::vec(-0.05..0.05f64, 6 * 10)) {
        let ring = PiecewiseShape::uniform(
            std::f64::consts::TAU,
            10,
            StrainVector::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
        )
        .unwrap();
        let dofs: Vec<f64> = ring.dofs().iter().zip(&seed).map(|(x, d)| x + d).collect();
        let shape = ring.with_dofs(&dofs).unwrap();
        let clamp = ClampingConstraint::clamped(Placement::canonical(), Placement::canonical());
        let projected = project_to_manifold(&shape, &clamp, 1e-12).unwrap();
        prop_assert!(constraint_residual(&projected, &clamp).unwrap().norm() < 1e-12);
        let end = *reconstruct_nodes(&projected, &Placement::canonical()).unwrap().last().unwrap();
        prop_assert!(end.x.norm() < 1e-10);
    }
}
