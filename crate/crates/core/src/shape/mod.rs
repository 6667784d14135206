//! Piecewise-constant rod shapes and exact placement reconstruction.

mod catalog;
mod mesh;
mod profile;

pub use catalog::{catalog_shape, CatalogParams, Sampling, CATALOG_NAMES};
pub use mesh::{render_mesh, TriangleMesh};
pub use profile::CrossSectionProfile;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::se3::{exp_se3, Propagator, StrainVector};

/// Default tolerance for "orthonormal" when validating user-supplied frames.
pub const FRAME_TOLERANCE: f64 = 1e-9;

/// Pose of one cross section: base-curve point plus material frame.
///
/// `frame` has columns `(d1, d2, d3)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placement {
    pub x: Vector3<f64>,
    pub frame: Matrix3<f64>,
}

/// Serialized form: `{x, d1, d2, d3}`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub x: [f64; 3],
    pub d1: [f64; 3],
    pub d2: [f64; 3],
    pub d3: [f64; 3],
}

impl Placement {
    /// Base point at the origin with `(d1, d2, d3)` aligned to the axes.
    pub fn canonical() -> Self {
        Self {
            x: Vector3::zeros(),
            frame: Matrix3::identity(),
        }
    }

    pub fn new(
        x: Vector3<f64>,
        d1: Vector3<f64>,
        d2: Vector3<f64>,
        d3: Vector3<f64>,
    ) -> Result<Self> {
        let p = Self::from_parts_unchecked(x, Matrix3::from_columns(&[d1, d2, d3]));
        p.validate(FRAME_TOLERANCE)?;
        Ok(p)
    }

    pub(crate) fn from_parts_unchecked(x: Vector3<f64>, frame: Matrix3<f64>) -> Self {
        Self { x, frame }
    }

    pub fn with_frame(x: Vector3<f64>, frame: Matrix3<f64>) -> Result<Self> {
        let p = Self { x, frame };
        p.validate(FRAME_TOLERANCE)?;
        Ok(p)
    }

    pub fn d1(&self) -> Vector3<f64> {
        self.frame.column(0).into()
    }

    pub fn d2(&self) -> Vector3<f64> {
        self.frame.column(1).into()
    }

    pub fn d3(&self) -> Vector3<f64> {
        self.frame.column(2).into()
    }

    /// `‖FᵀF − I‖_∞` plus the right-handedness defect `|d1 × d2 − d3|_∞`.
    pub fn frame_defect(&self) -> f64 {
        let gram = (self.frame.transpose() * self.frame - Matrix3::identity()).amax();
        let hand = (self.d1().cross(&self.d2()) - self.d3()).amax();
        gram.max(hand)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if !self.x.iter().chain(self.frame.iter()).all(|c| c.is_finite()) {
            return Err(Error::invalid("placement has non-finite entries"));
        }
        let defect = self.frame_defect();
        if defect > tol {
            return Err(Error::invalid(format!(
                "directors are not a right-handed orthonormal frame (defect {defect:.3e})"
            )));
        }
        Ok(())
    }

    /// The stacked 12-vector `(x, d3, d1, d2)`.
    pub fn to_flat12(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        let parts = [self.x, self.d3(), self.d1(), self.d2()];
        for (b, v) in parts.iter().enumerate() {
            out[3 * b..3 * b + 3].copy_from_slice(v.as_slice());
        }
        out
    }

    pub fn from_flat12(r: &[f64; 12]) -> Result<Self> {
        let v = |b: usize| Vector3::new(r[3 * b], r[3 * b + 1], r[3 * b + 2]);
        Self::new(v(0), v(2), v(3), v(1))
    }

    /// Applies the world-frame rigid motion `y ↦ rotation·y + translation`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Placement {
        Placement {
            x: rotation * self.x + translation,
            frame: rotation * self.frame,
        }
    }

    /// Rotates the material frame by `angle` about its own `d3`.
    pub fn twisted(&self, angle: f64) -> Placement {
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
        Placement {
            x: self.x,
            frame: self.frame * rz.matrix(),
        }
    }

    /// Rotation about an arbitrary world axis through the origin.
    pub fn rotated_about(&self, axis: &Vector3<f64>, angle: f64) -> Placement {
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        self.transformed(r.matrix(), &Vector3::zeros())
    }

    pub fn to_record(&self) -> PlacementRecord {
        let a = |v: Vector3<f64>| [v.x, v.y, v.z];
        PlacementRecord {
            x: a(self.x),
            d1: a(self.d1()),
            d2: a(self.d2()),
            d3: a(self.d3()),
        }
    }

    pub fn from_record(r: &PlacementRecord) -> Result<Self> {
        let v = |a: [f64; 3]| Vector3::from(a);
        Self::new(v(r.x), v(r.d1), v(r.d2), v(r.d3))
    }
}

impl Serialize for Placement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Placement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PlacementRecord::deserialize(d)?;
        Placement::from_record(&r).map_err(serde::de::Error::custom)
    }
}

/// Nodes `0 = s₀ < s₁ < … < s_N = L`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Partition {
    nodes: Vec<f64>,
}

impl Partition {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::invalid("a partition needs at least two nodes"));
        }
        if nodes[0] != 0.0 {
            return Err(Error::invalid("partition must start at s = 0"));
        }
        if nodes.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("partition nodes must be finite"));
        }
        if let Some(w) = nodes.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "partition is not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { nodes })
    }

    pub fn uniform(length: f64, elements: usize) -> Result<Self> {
        if !(length > 0.0) || elements == 0 {
            return Err(Error::invalid("uniform partition needs length > 0 and at least one element"));
        }
        let h = length / elements as f64;
        let mut nodes: Vec<f64> = (0..=elements).map(|k| k as f64 * h).collect();
        nodes[elements] = length;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn length(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// `δs_{k}` for element `k` (zero-based).
    pub fn element_length(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn element_lengths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Element containing `s` under the right-continuous convention; `s = L`
    /// maps to the last element.
    pub fn element_at(&self, s: f64) -> Option<usize> {
        if !(s >= 0.0 && s <= self.length()) {
            return None;
        }
        let idx = self.nodes.partition_point(|&n| n <= s);
        Some(idx.saturating_sub(1).min(self.elements() - 1))
    }

    /// Splits every element into `parts` equal sub-elements.
    pub fn refined(&self, parts: usize) -> Partition {
        let mut nodes = Vec::with_capacity(self.elements() * parts + 1);
        for w in self.nodes.windows(2) {
            for j in 0..parts {
                nodes.push(w[0] + (w[1] - w[0]) * j as f64 / parts as f64);
            }
        }
        nodes.push(self.length());
        Partition { nodes }
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let nodes = Vec::<f64>::deserialize(d)?;
        Partition::new(nodes).map_err(serde::de::Error::custom)
    }
}

/// A rod shape: one constant strain per partition interval.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseShape {
    partition: Partition,
    elements: Vec<StrainVector>,
}

impl PiecewiseShape {
    pub fn new(partition: Partition, elements: Vec<StrainVector>) -> Result<Self> {
        if elements.len() != partition.elements() {
            return Err(Error::invalid(format!(
                "{} strain elements for {} partition intervals",
                elements.len(),
                partition.elements()
            )));
        }
        if let Some(k) = elements.iter().position(|e| !e.is_finite()) {
            return Err(Error::invalid(format!("element {k} has non-finite strain")));
        }
        Ok(Self { partition, elements })
    }

    /// `n` equal elements sharing one strain.
    pub fn uniform(length: f64, n: usize, strain: StrainVector) -> Result<Self> {
        Self::new(Partition::uniform(length, n)?, vec![strain; n])
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn elements(&self) -> &[StrainVector] {
        &self.elements
    }

    pub fn elements_mut(&mut self) -> &mut [StrainVector] {
        &mut self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.partition.length()
    }

    pub fn is_physical(&self) -> bool {
        self.elements.iter().all(StrainVector::is_physical)
    }

    pub fn require_physical(&self) -> Result<()> {
        match self.elements.iter().position(|e| !e.is_physical()) {
            None => Ok(()),
            Some(k) => Err(Error::Domain(format!(
                "element {k} has v3 = {} (must be > 0)",
                self.elements[k].v.z
            ))),
        }
    }

    /// Strain degrees of freedom, six per element.
    pub fn dofs(&self) -> Vec<f64> {
        self.elements.iter().flat_map(|e| e.to_array()).collect()
    }

    pub fn with_dofs(&self, dofs: &[f64]) -> Result<Self> {
        if dofs.len() != 6 * self.len() {
            return Err(Error::invalid("dof vector length does not match the shape"));
        }
        let elements = dofs
            .chunks_exact(6)
            .map(|c| StrainVector::from_array([c[0], c[1], c[2], c[3], c[4], c[5]]))
            .collect();
        Self::new(self.partition.clone(), elements)
    }

    /// Same strains on a partition with every element split into `parts`.
    pub fn refined(&self, parts: usize) -> Self {
        let elements = self
            .elements
            .iter()
            .flat_map(|e| std::iter::repeat_n(*e, parts))
            .collect();
        Self {
            partition: self.partition.refined(parts),
            elements,
        }
    }

    /// Discrete propagators `U_k = exp(δs_{k−1} L(s_{k−1}))`.
    pub fn propagators(&self) -> Vec<Propagator> {
        self.elements
            .iter()
            .zip(self.partition.element_lengths())
            .map(|(e, ds)| exp_se3(e, ds))
            .collect()
    }

    /// Propagator from `s = 0` to `s = L`.
    pub fn total_propagator(&self) -> Propagator {
        self.propagators()
            .iter()
            .fold(Propagator::identity(), |acc, u| acc.then(u))
    }
}

/// Per-element Kirchhoff data: flexural densities and twist.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KirchhoffFields {
    pub kappa1: f64,
    pub kappa2: f64,
    pub omega: f64,
}

/// Builds an unshearable, inextensible shape: `(u1, u2, u3) = (−κ2, κ1, ω)`,
/// `v = (0, 0, 1)`.
pub fn apply_kirchhoff(partition: Partition, fields: &[KirchhoffFields]) -> Result<PiecewiseShape> {
    let elements = fields
        .iter()
        .map(|f| StrainVector::new(-f.kappa2, f.kappa1, f.omega, 0.0, 0.0, 1.0))
        .collect();
    PiecewiseShape::new(partition, elements)
}

/// Node placements `R_0, …, R_N`.
pub fn reconstruct_nodes(shape: &PiecewiseShape, r0: &Placement) -> Result<Vec<Placement>> {
    r0.validate(FRAME_TOLERANCE)?;
    let mut out = Vec::with_capacity(shape.len() + 1);
    out.push(*r0);
    let mut current = *r0;
    for u in shape.propagators() {
        current = u.apply(&current);
        out.push(current);
    }
    Ok(out)
}

/// Reconstructs many shapes from the same initial placement.
pub fn reconstruct_batch(
    exec: Exec,
    shapes: &[PiecewiseShape],
    r0: &Placement,
) -> Result<Vec<Vec<Placement>>> {
    r0.validate(FRAME_TOLERANCE)?;
    exec.map_slice(shapes, |s| reconstruct_nodes(s, r0))
        .into_iter()
        .collect()
}

/// Placement at an arbitrary parameter, propagated from the node below.
pub fn sample_placement(shape: &PiecewiseShape, r0: &Placement, s: f64) -> Result<Placement> {
    let k = shape.partition().element_at(s).ok_or_else(|| {
        Error::invalid(format!("s = {s} outside [0, {}]", shape.length()))
    })?;
    let nodes = reconstruct_nodes(shape, r0)?;
    Ok(sample_from_nodes(shape, &nodes, k, s))
}

/// Intra-element evaluation given already reconstructed nodes.
pub(crate) fn sample_from_nodes(
    shape: &PiecewiseShape,
    nodes: &[Placement],
    k: usize,
    s: f64,
) -> Placement {
    let nodes_s = shape.partition().nodes();
    if s == nodes_s[k] {
        return nodes[k];
    }
    if s == nodes_s[k + 1] {
        return nodes[k + 1];
    }
    exp_se3(&shape.elements()[k], s - nodes_s[k]).apply(&nodes[k])
}
