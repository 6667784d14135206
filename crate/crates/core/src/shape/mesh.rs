use std::io::Write;

use nalgebra::Vector3;

use super::{reconstruct_nodes, sample_from_nodes, CrossSectionProfile, Placement, PiecewiseShape};
use crate::error::{Error, Result};

/// Closed tube surface: one vertex ring per sampled cross section plus two
/// cap centres, all faces wound with outward normals.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// Number of vertex rings along the rod.
    pub rings: usize,
    /// Vertices per ring.
    pub ring_size: usize,
    /// Parameter value of every ring.
    pub ring_parameters: Vec<f64>,
}

impl TriangleMesh {
    /// Vertices of ring `k`.
    pub fn ring(&self, k: usize) -> &[Vector3<f64>] {
        &self.vertices[k * self.ring_size..(k + 1) * self.ring_size]
    }

    /// Enclosed volume by the divergence theorem (positive for outward winding).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# rodshape tube mesh")?;
        writeln!(w, "# {} vertices, {} faces", self.vertices.len(), self.faces.len())?;
        for v in &self.vertices {
            writeln!(w, "v {:.12} {:.12} {:.12}", v.x, v.y, v.z)?;
        }
        for f in &self.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        Ok(())
    }
}

/// Tube surface `x(s) + ζ1 d1(s) + ζ2 d2(s)` over the profile boundary.
///
/// Each element contributes `samples_per_element` rings placed at equal
/// parameter increments with the exact intra-element exponential; caps are
/// triangle fans around the base curve point.
pub fn render_mesh(
    shape: &PiecewiseShape,
    r0: &Placement,
    profile: &CrossSectionProfile,
    samples_per_element: usize,
) -> Result<TriangleMesh> {
    shape.require_physical()?;
    profile.validate()?;
    if samples_per_element == 0 {
        return Err(Error::invalid("samples per element must be at least 1"));
    }
    let nodes = reconstruct_nodes(shape, r0)?;
    let boundary = profile.boundary();
    let m = boundary.len();

    let knots = shape.partition().nodes();
    let mut placements = Vec::with_capacity(shape.len() * samples_per_element + 1);
    let mut params = Vec::with_capacity(placements.capacity());
    for k in 0..shape.len() {
        for j in 0..samples_per_element {
            let s = if j == 0 {
                knots[k]
            } else {
                knots[k] + (knots[k + 1] - knots[k]) * j as f64 / samples_per_element as f64
            };
            placements.push(sample_from_nodes(shape, &nodes, k, s));
            params.push(s);
        }
    }
    placements.push(nodes[shape.len()]);
    params.push(shape.length());

    let rings = placements.len();
    let mut vertices = Vec::with_capacity(rings * m + 2);
    for p in &placements {
        let (d1, d2) = (p.d1(), p.d2());
        vertices.extend(boundary.iter().map(|z| p.x + d1 * z[0] + d2 * z[1]));
    }
    let start_center = vertices.len();
    vertices.push(placements[0].x);
    vertices.push(placements[rings - 1].x);
    let end_center = start_center + 1;

    let mut faces = Vec::with_capacity(2 * m * rings);
    for k in 0..rings - 1 {
        for j in 0..m {
            let jn = (j + 1) % m;
            let a = k * m + j;
            let b = k * m + jn;
            let c = (k + 1) * m + jn;
            let d = (k + 1) * m + j;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    let last = (rings - 1) * m;
    for j in 0..m {
        let jn = (j + 1) % m;
        faces.push([start_center, jn, j]);
        faces.push([end_center, last + j, last + jn]);
    }

    Ok(TriangleMesh {
        vertices,
        faces,
        rings,
        ring_size: m,
        ring_parameters: params,
    })
}
