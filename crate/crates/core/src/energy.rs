//! Quadratic elastic energy with a logarithmic stretch barrier, a discrete
//! gravity term, and their exact gradients with respect to the strains.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::se3::{dexp_se3_all, exp_se3, StrainVector};
use crate::shape::{reconstruct_nodes, CrossSectionProfile, Placement, PiecewiseShape};

/// Uniform rigidities: flexure/twist `a`, shear/stretch `b`, barrier `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub eps: f64,
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        if self.a.iter().chain(&self.b).any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("rigidities must be positive"));
        }
        if !(self.eps.is_finite() && self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::invalid("barrier coefficient must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Stretch minimizing the free single-element energy when `v̄3 = 1`:
    /// the positive root of `v3² − v3 − ε = 0`.
    pub fn relaxed_stretch(&self) -> f64 {
        0.5 * (1.0 + (1.0 + 4.0 * self.eps).sqrt())
    }

    /// Energy density of one element (per unit rest length).
    pub fn density(&self, s: &StrainVector, bar: &StrainVector) -> f64 {
        let du = s.u - bar.u;
        let dv = s.v - bar.v;
        0.5 * (self.a[0] * du.x * du.x + self.a[1] * du.y * du.y + self.a[2] * du.z * du.z)
            + 0.5 * (self.b[0] * dv.x * dv.x + self.b[1] * dv.y * dv.y)
            + 0.5 * self.b[2] * (dv.z * dv.z - 2.0 * self.eps * s.v.z.ln())
    }

    /// Gradient of [`MaterialParams::density`] in the order `u1..v3`.
    pub fn density_gradient(&self, s: &StrainVector, bar: &StrainVector) -> [f64; 6] {
        let du = s.u - bar.u;
        let dv = s.v - bar.v;
        [
            self.a[0] * du.x,
            self.a[1] * du.y,
            self.a[2] * du.z,
            self.b[0] * dv.x,
            self.b[1] * dv.y,
            self.b[2] * (dv.z - self.eps / s.v.z),
        ]
    }
}

/// Stress-free strains, one per element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntrinsicShape {
    pub elements: Vec<StrainVector>,
}

impl IntrinsicShape {
    pub fn uniform(n: usize, strain: StrainVector) -> Self {
        Self {
            elements: vec![strain; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.elements.len() != n {
            return Err(Error::invalid(format!(
                "intrinsic shape has {} elements, working shape has {n}",
                self.elements.len()
            )));
        }
        if let Some(k) = self.elements.iter().position(|e| !e.is_physical()) {
            return Err(Error::invalid(format!("intrinsic element {k} needs finite strains and v3 > 0")));
        }
        Ok(())
    }
}

/// Uniform weight: acceleration `g`, density `rho`, cross section `profile`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GravityLoad {
    pub g: [f64; 3],
    pub rho: f64,
    pub profile: CrossSectionProfile,
}

impl GravityLoad {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) || self.g.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("gravity needs finite g and rho >= 0"));
        }
        self.profile.validate()
    }

    fn acceleration(&self) -> Vector3<f64> {
        Vector3::from(self.g)
    }

    /// Mass per unit rest length.
    pub fn linear_density(&self) -> f64 {
        self.rho * self.profile.area()
    }
}

fn check_inputs(shape: &PiecewiseShape, mat: &MaterialParams, intr: &IntrinsicShape) -> Result<()> {
    mat.validate()?;
    intr.validate(shape.len())?;
    shape.require_physical()
}

pub fn elastic_energy(shape: &PiecewiseShape, mat: &MaterialParams, intr: &IntrinsicShape) -> Result<f64> {
    elastic_energy_with(Exec::default(), shape, mat, intr)
}

/// Exact energy of piecewise-constant strains: `Σ δs_k · density_k`.
pub fn elastic_energy_with(
    exec: Exec,
    shape: &PiecewiseShape,
    mat: &MaterialParams,
    intr: &IntrinsicShape,
) -> Result<f64> {
    check_inputs(shape, mat, intr)?;
    let lengths = shape.partition().element_lengths();
    let el = shape.elements();
    Ok(exec.sum(shape.len(), |k| lengths[k] * mat.density(&el[k], &intr.elements[k])))
}

pub fn elastic_gradient_with(
    exec: Exec,
    shape: &PiecewiseShape,
    mat: &MaterialParams,
    intr: &IntrinsicShape,
) -> Result<Vec<f64>> {
    check_inputs(shape, mat, intr)?;
    let lengths = shape.partition().element_lengths();
    let el = shape.elements();
    let per = exec.map(shape.len(), |k| {
        mat.density_gradient(&el[k], &intr.elements[k]).map(|g| g * lengths[k])
    });
    Ok(per.into_iter().flatten().collect())
}

/// Node placements and the midpoint barycentres `x̄_k` in world coordinates.
fn barycenters(
    exec: Exec,
    shape: &PiecewiseShape,
    r0: &Placement,
    centroid: &Vector3<f64>,
) -> Result<(Vec<Placement>, Vec<Vector3<f64>>)> {
    let nodes = reconstruct_nodes(shape, r0)?;
    let lengths = shape.partition().element_lengths();
    let el = shape.elements();
    let bars = exec.map(shape.len(), |k| {
        let half = exp_se3(&el[k], 0.5 * lengths[k]);
        let node = &nodes[k];
        node.x + node.frame * half.transform_point(centroid)
    });
    Ok((nodes, bars))
}

fn centroid3(load: &GravityLoad) -> Vector3<f64> {
    let c = load.profile.centroid();
    Vector3::new(c[0], c[1], 0.0)
}

pub fn gravity_energy(shape: &PiecewiseShape, r0: &Placement, load: &GravityLoad) -> Result<f64> {
    gravity_energy_with(Exec::default(), shape, r0, load)
}

/// `−Σ m_k g·x̄_k` with point masses `m_k = ρ·area·δs_k` at the barycentre of
/// each element's middle cross section.
pub fn gravity_energy_with(
    exec: Exec,
    shape: &PiecewiseShape,
    r0: &Placement,
    load: &GravityLoad,
) -> Result<f64> {
    load.validate()?;
    shape.require_physical()?;
    let g = load.acceleration();
    if g == Vector3::zeros() || load.rho == 0.0 {
        return Ok(0.0);
    }
    let (_, bars) = barycenters(exec, shape, r0, &centroid3(load))?;
    let lengths = shape.partition().element_lengths();
    let lambda = load.linear_density();
    Ok(-bars
        .iter()
        .zip(&lengths)
        .map(|(b, ds)| lambda * ds * g.dot(b))
        .sum::<f64>())
}

/// Gradient of [`gravity_energy`], six slots per element.
///
/// Uses suffix sums of the downstream masses and mass moments, so the whole
/// gradient costs one pass over the elements.
pub fn gravity_gradient_with(
    exec: Exec,
    shape: &PiecewiseShape,
    r0: &Placement,
    load: &GravityLoad,
) -> Result<Vec<f64>> {
    load.validate()?;
    shape.require_physical()?;
    let n = shape.len();
    let g = load.acceleration();
    if g == Vector3::zeros() || load.rho == 0.0 {
        return Ok(vec![0.0; 6 * n]);
    }
    let centroid = centroid3(load);
    let (nodes, bars) = barycenters(exec, shape, r0, &centroid)?;
    let lengths = shape.partition().element_lengths();
    let lambda = load.linear_density();

    // Downstream totals: mass and first moment of the elements after k.
    let mut mass_after = vec![0.0; n];
    let mut moment_after = vec![Vector3::zeros(); n];
    for k in (0..n.saturating_sub(1)).rev() {
        let m = lambda * lengths[k + 1];
        mass_after[k] = mass_after[k + 1] + m;
        moment_after[k] = moment_after[k + 1] + bars[k + 1] * m;
    }

    let el = shape.elements();
    let per = exec.map(n, |k| {
        let node = &nodes[k];
        let next = &nodes[k + 1];
        let own_mass = lambda * lengths[k];
        let local_g = node.frame.transpose() * g;
        let downstream = next.frame.transpose() * (moment_after[k] - next.x * mass_after[k]);
        let full = dexp_se3_all(&el[k], lengths[k]);
        let half = dexp_se3_all(&el[k], 0.5 * lengths[k]);
        let mut out = [0.0; 6];
        for i in 0..6 {
            let d_tail = full[i].translation * mass_after[k] + full[i].rotation * downstream;
            let d_own = (half[i].translation + half[i].rotation * centroid) * own_mass;
            out[i] = -local_g.dot(&(d_tail + d_own));
        }
        out
    });
    Ok(per.into_iter().flatten().collect())
}

/// Elastic energy plus optional gravity: everything the flow minimizes.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyModel {
    pub material: MaterialParams,
    pub intrinsic: IntrinsicShape,
    pub gravity: Option<GravityLoad>,
    pub exec: Exec,
}

impl EnergyModel {
    pub fn new(material: MaterialParams, intrinsic: IntrinsicShape, gravity: Option<GravityLoad>) -> Self {
        Self {
            material,
            intrinsic,
            gravity,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn energy(&self, shape: &PiecewiseShape, r0: &Placement) -> Result<f64> {
        let mut e = elastic_energy_with(self.exec, shape, &self.material, &self.intrinsic)?;
        if let Some(load) = &self.gravity {
            e += gravity_energy_with(self.exec, shape, r0, load)?;
        }
        Ok(e)
    }

    pub fn gradient(&self, shape: &PiecewiseShape, r0: &Placement) -> Result<Vec<f64>> {
        let mut grad = elastic_gradient_with(self.exec, shape, &self.material, &self.intrinsic)?;
        if let Some(load) = &self.gravity {
            let gg = gravity_gradient_with(self.exec, shape, r0, load)?;
            grad.iter_mut().zip(gg).for_each(|(a, b)| *a += b);
        }
        Ok(grad)
    }
}

/// Gradient of elastic plus (optional) gravity energy, six slots per element
/// in the order `u1, u2, u3, v1, v2, v3`.
pub fn total_gradient(
    shape: &PiecewiseShape,
    r0: &Placement,
    mat: &MaterialParams,
    intr: &IntrinsicShape,
    load: Option<&GravityLoad>,
) -> Result<Vec<f64>> {
    EnergyModel::new(*mat, intr.clone(), load.cloned()).gradient(shape, r0)
}

pub fn total_energy(
    shape: &PiecewiseShape,
    r0: &Placement,
    mat: &MaterialParams,
    intr: &IntrinsicShape,
    load: Option<&GravityLoad>,
) -> Result<f64> {
    EnergyModel::new(*mat, intr.clone(), load.cloned()).energy(shape, r0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::Partition;
    use nalgebra::Rotation3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn material() -> MaterialParams {
        MaterialParams {
            a: [1.3, 0.7, 0.9],
            b: [2.0, 1.5, 3.0],
            eps: 1e-3,
        }
    }

    fn random_shape(rng: &mut ChaCha8Rng, n: usize) -> PiecewiseShape {
        let mut nodes = vec![0.0];
        for _ in 0..n {
            let last = *nodes.last().unwrap();
            nodes.push(last + rng.random_range(0.1..0.4));
        }
        let elements = (0..n)
            .map(|_| {
                StrainVector::new(
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(0.6..1.4),
                )
            })
            .collect();
        PiecewiseShape::new(Partition::new(nodes).unwrap(), elements).unwrap()
    }

    fn load() -> GravityLoad {
        GravityLoad {
            g: [0.3, -9.81, 0.5],
            rho: 2.0,
            profile: CrossSectionProfile::Polygon {
                vertices: vec![[-0.05, -0.04], [0.09, -0.04], [0.09, 0.05], [-0.05, 0.05]],
            },
        }
    }

    fn rot(axis: &Vector3<f64>, angle: f64) -> nalgebra::Matrix3<f64> {
        Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).into_inner()
    }

    fn fd_check(model: &EnergyModel, shape: &PiecewiseShape, r0: &Placement) {
        let grad = model.gradient(shape, r0).unwrap();
        let x = shape.dofs();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let ep = model.energy(&shape.with_dofs(&xp).unwrap(), r0).unwrap();
            let em = model.energy(&shape.with_dofs(&xm).unwrap(), r0).unwrap();
            let fd = (ep - em) / (2.0 * h);
            let scale = grad[i].abs().max(1.0);
            assert!((fd - grad[i]).abs() / scale < 1e-6, "slot {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn intrinsic_shape_has_zero_energy() {
        let shape = PiecewiseShape::uniform(2.0, 5, StrainVector::new(0.2, 0.1, -0.3, 0.0, 0.1, 1.0)).unwrap();
        let intr = IntrinsicShape {
            elements: shape.elements().to_vec(),
        };
        assert_eq!(elastic_energy(&shape, &material(), &intr).unwrap(), 0.0);
        let grad = total_gradient(&shape, &Placement::canonical(), &material(), &intr, None).unwrap();
        for (i, g) in grad.iter().enumerate() {
            if i % 6 == 5 {
                assert!((g + 0.4 * 3.0 * 1e-3).abs() < 1e-15);
            } else {
                assert_eq!(*g, 0.0);
            }
        }
    }

    #[test]
    fn single_flexural_deviation() {
        let delta = 0.37;
        let length = 2.5;
        let bar = StrainVector::new(0.1, 0.0, 0.0, 0.0, 0.0, 1.0);
        let shape = PiecewiseShape::uniform(length, 1, bar + StrainVector::new(delta, 0.0, 0.0, 0.0, 0.0, 0.0)).unwrap();
        let e = elastic_energy(&shape, &material(), &IntrinsicShape::uniform(1, bar)).unwrap();
        assert!((e - 0.5 * 1.3 * delta * delta * length).abs() < 1e-15);
    }

    #[test]
    fn barrier_blows_up_and_rejects_collapse() {
        let intr = IntrinsicShape::uniform(1, StrainVector::straight());
        let mut previous = 0.0;
        for v3 in [1e-3, 1e-5, 1e-8, 1e-12, 1e-20] {
            let shape = PiecewiseShape::uniform(1.0, 1, StrainVector::new(0.0, 0.0, 0.0, 0.0, 0.0, v3)).unwrap();
            let e = elastic_energy(&shape, &material(), &intr).unwrap();
            assert!(e > previous);
            previous = e;
        }
        for v3 in [0.0, -0.5] {
            let shape = PiecewiseShape::uniform(1.0, 1, StrainVector::new(0.0, 0.0, 0.0, 0.0, 0.0, v3)).unwrap();
            assert!(matches!(elastic_energy(&shape, &material(), &intr), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn horizontal_rod_weight() {
        // Straight rod along e1 at height h, gravity −9.81 e3: exact integral is
        // −M g·x̄ = M·9.81·h independently of quadrature.
        let h = 0.7;
        let r0 = Placement::new(
            Vector3::new(0.0, 0.0, h),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(1.0, 0.0, 0.0),
        )
        .unwrap();
        let load = GravityLoad {
            g: [0.0, 0.0, -9.81],
            rho: 3.0,
            profile: CrossSectionProfile::ellipse(0.1, 0.05),
        };
        let shape = PiecewiseShape::uniform(2.0, 7, StrainVector::straight()).unwrap();
        let mass = 3.0 * std::f64::consts::PI * 0.1 * 0.05 * 2.0;
        let e = gravity_energy(&shape, &r0, &load).unwrap();
        assert!((e - mass * 9.81 * h).abs() < 1e-12);
        let zero = GravityLoad { g: [0.0; 3], ..load };
        assert_eq!(gravity_energy(&shape, &r0, &zero).unwrap(), 0.0);
    }

    #[test]
    fn gravity_invariant_under_rotation_about_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = random_shape(&mut rng, 9);
        let load = load();
        let g = Vector3::from(load.g);
        let r0 = Placement::canonical().transformed(&rot(&Vector3::new(0.2, 0.5, -1.0), 0.4), &Vector3::new(1.0, 2.0, 3.0));
        let base = gravity_energy(&shape, &r0, &load).unwrap();
        for angle in [0.3, 1.7, -2.9] {
            let rot = rot(&g, angle);
            let moved = r0.transformed(&rot, &Vector3::zeros());
            let e = gravity_energy(&shape, &moved, &load).unwrap();
            assert!((e - base).abs() < 1e-12, "{e} vs {base}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..4 {
            let shape = random_shape(&mut rng, 6);
            let intr = IntrinsicShape {
                elements: random_shape(&mut rng, 6).elements().to_vec(),
            };
            let gravity = (trial % 2 == 1).then(load);
            let model = EnergyModel::new(material(), intr, gravity);
            let r0 = Placement::canonical().rotated_about(&Vector3::new(1.0, 0.3, 0.2), 0.8);
            fd_check(&model, &shape, &r0);
        }
    }

    #[test]
    fn elastic_gradient_is_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = random_shape(&mut rng, 7);
        let intr = IntrinsicShape::uniform(7, StrainVector::straight());
        let model = EnergyModel::new(material(), intr, None);
        let r0 = Placement::canonical();
        let before = model.gradient(&shape, &r0).unwrap();
        let mut moved = shape.clone();
        moved.elements_mut()[3] = moved.elements()[3] + StrainVector::new(0.1, -0.2, 0.3, 0.05, 0.02, 0.1);
        let after = model.gradient(&moved, &r0).unwrap();
        for i in 0..before.len() {
            assert_eq!(before[i] == after[i], i / 6 != 3, "slot {i}");
        }
    }

    #[test]
    fn barrier_minimizer_matches_root() {
        let mat = MaterialParams {
            a: [1.0; 3],
            b: [1.0; 3],
            eps: 1e-6,
        };
        let intr = IntrinsicShape::uniform(1, StrainVector::straight());
        let f = |v3: f64| {
            let shape = PiecewiseShape::uniform(1.0, 1, StrainVector::new(0.0, 0.0, 0.0, 0.0, 0.0, v3)).unwrap();
            total_gradient(&shape, &Placement::canonical(), &mat, &intr, None).unwrap()[5]
        };
        let (mut lo, mut hi) = (0.5, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((0.5 * (lo + hi) - mat.relaxed_stretch()).abs() < 1e-10);
    }

    #[test]
    fn policies_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let shape = random_shape(&mut rng, 50);
        let intr = IntrinsicShape::uniform(50, StrainVector::straight());
        let seq = EnergyModel::new(material(), intr.clone(), Some(load())).with_exec(Exec::Sequential);
        let par = EnergyModel::new(material(), intr, Some(load())).with_exec(Exec::Parallel);
        let r0 = Placement::canonical();
        assert_eq!(seq.energy(&shape, &r0).unwrap(), par.energy(&shape, &r0).unwrap());
        assert_eq!(seq.gradient(&shape, &r0).unwrap(), par.gradient(&shape, &r0).unwrap());
    }

    proptest! {
        #[test]
        fn refinement_preserves_energy(seed in 0u64..1000, parts in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = random_shape(&mut rng, 4);
            let intr = IntrinsicShape { elements: random_shape(&mut rng, 4).elements().to_vec() };
            let refined_intr = IntrinsicShape {
                elements: intr.elements.iter().flat_map(|e| std::iter::repeat_n(*e, parts)).collect(),
            };
            let e = elastic_energy(&shape, &material(), &intr).unwrap();
            let er = elastic_energy(&shape.refined(parts), &material(), &refined_intr).unwrap();
            prop_assert!((e - er).abs() < 1e-12 * e.abs().max(1.0));
        }

        #[test]
        fn elastic_energy_ignores_placement(seed in 0u64..1000, angle in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = random_shape(&mut rng, 5);
            let intr = IntrinsicShape::uniform(5, StrainVector::straight());
            let model = EnergyModel::new(material(), intr, None);
            let a = model.energy(&shape, &Placement::canonical()).unwrap();
            let b = model.energy(&shape, &Placement::canonical().rotated_about(&Vector3::new(0.0, 1.0, 1.0), angle)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
