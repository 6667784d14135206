//! The relaxation experiments as ready-made problem instances.

use std::f64::consts::{PI, TAU};

use crate::energy::{EnergyModel, GravityLoad, IntrinsicShape, MaterialParams};
use crate::error::Result;
use crate::relax::{ClampingConstraint, FlowMetric, RelaxConfig};
use crate::se3::StrainVector;
use crate::shape::{catalog_shape, reconstruct_nodes, CatalogParams, CrossSectionProfile, PiecewiseShape, Placement};

/// Initial shape, energy, end conditions and flow settings of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub shape: PiecewiseShape,
    pub model: EnergyModel,
    pub clamp: ClampingConstraint,
    pub config: RelaxConfig,
}

/// Shear-versus-bending rod of the first relaxation experiment.
pub fn uniform_shear_material() -> MaterialParams {
    let b = 1.0;
    MaterialParams {
        a: [100.0 * b, 100.0 * b, 10.0 * b],
        b: [b, b, 100.0 * b],
        eps: 1e-6,
    }
}

/// Stretch at which a straight, uniformly sheared rod is an exact equilibrium:
/// the positive root of `(b3 − b2) v3² − b3 v3 − b3 ε = 0`, where the shear
/// force is parallel to the shear direction.
pub fn uniform_shear_stretch(mat: &MaterialParams) -> f64 {
    let (b, b3, eps) = (mat.b[1], mat.b[2], mat.eps);
    let a = b3 - b;
    (b3 + (b3 * b3 + 4.0 * a * b3 * eps).sqrt()) / (2.0 * a)
}

/// Two clamped ends joined by an S of two opposite arcs in the plane normal to
/// `d1`. The arcs are stretched so that the end-to-end distance along `d3` is
/// exactly `L·v3*`, which makes the straight, uniformly sheared rod with
/// stretch `v3*` the equilibrium.
pub fn two_arc_relaxation(elements: usize) -> Result<Scenario> {
    let length = 1.0;
    let curvature = 1.0;
    let material = uniform_shear_material();
    let target_stretch = uniform_shear_stretch(&material);
    let half_angle = 0.5 * curvature * length;
    let v3 = target_stretch * length * curvature / (2.0 * half_angle.sin());
    let shape = catalog_shape(
        "two-arc",
        &CatalogParams {
            length: Some(length),
            c1: Some(curvature),
            v3: Some(v3),
            elements: Some(elements),
            ..Default::default()
        },
    )?;
    let r0 = Placement::canonical();
    let target = *reconstruct_nodes(&shape, &r0)?.last().expect("nodes are never empty");
    Ok(Scenario {
        name: format!("two-arc-n{elements}"),
        model: EnergyModel::new(material, IntrinsicShape::uniform(elements, StrainVector::straight()), None),
        shape,
        clamp: ClampingConstraint::clamped(r0, target),
        config: RelaxConfig {
            eta: 0.1,
            max_iters: 20_000,
            eta_max: Some(1.0),
            metric: FlowMetric::Stiffness,
            ..Default::default()
        },
    })
}

/// Cantilever with a quarter-circle intrinsic shape bending under its own
/// weight, loaded normal to its plane. `a3` equals the smaller flexural
/// rigidity and shear/stretch rigidities are `1e4·a3`.
pub fn gravity_beam(flexural_ratio: f64, elements: usize) -> Result<Scenario> {
    let length = 1.0;
    let (a1, a2) = (flexural_ratio, 1.0);
    let a3 = a1.min(a2);
    let material = MaterialParams {
        a: [a1, a2, a3],
        b: [1e4 * a3; 3],
        eps: 1e-6,
    };
    let bar = StrainVector::new(-PI / (2.0 * length), 0.0, 0.0, 0.0, 0.0, 1.0);
    let shape = PiecewiseShape::uniform(length, elements, bar)?;
    let gravity = GravityLoad {
        g: [-1.0, 0.0, 0.0],
        rho: 1000.0,
        profile: CrossSectionProfile::ellipse(0.04, 0.02),
    };
    Ok(Scenario {
        name: format!("gravity-beam-{flexural_ratio}"),
        model: EnergyModel::new(material, IntrinsicShape::uniform(elements, bar), Some(gravity)),
        shape,
        clamp: ClampingConstraint::free(Placement::canonical()),
        config: RelaxConfig {
            eta: 1e-2,
            max_iters: 50_000,
            eta_max: Some(10.0),
            metric: FlowMetric::Stiffness,
            ..Default::default()
        },
    })
}

/// Straight, twist-free rod of length `2π` clamped into a closed loop carrying
/// total twist `2π`, started from the twisted stadium.
pub fn twisted_loop_relaxation(elements: usize) -> Result<Scenario> {
    let length = TAU;
    let twist = TAU;
    let a2 = 1.0;
    let material = MaterialParams {
        a: [10.0 * a2, a2, a2],
        b: [1e4 * a2; 3],
        eps: 1e-6,
    };
    let shape = catalog_shape(
        "twisted-stadium",
        &CatalogParams {
            length: Some(length),
            twist: Some(twist),
            elements: Some(elements),
            ..Default::default()
        },
    )?;
    Ok(Scenario {
        name: format!("twisted-loop-n{elements}"),
        model: EnergyModel::new(material, IntrinsicShape::uniform(elements, StrainVector::straight()), None),
        shape,
        clamp: ClampingConstraint::closed_loop(Placement::canonical(), twist),
        config: RelaxConfig {
            eta: 0.1,
            max_iters: 100_000,
            eta_max: Some(1.0),
            tol_grad: 1e-6,
            metric: FlowMetric::Stiffness,
            ..Default::default()
        },
    })
}
