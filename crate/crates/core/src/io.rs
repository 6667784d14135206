//! File formats: shape, material and run-config JSON; node, trace, curve,
//! development, invariant and frame CSV.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::curve::{BishopFrames, CurveInvariants, CurveSamples, NormalDevelopment};
use crate::energy::{EnergyModel, GravityLoad, IntrinsicShape, MaterialParams};
use crate::error::{Error, Result};
use crate::relax::{ClampingConstraint, RelaxConfig, TraceRow};
use crate::se3::StrainVector;
use crate::shape::{
    catalog_shape, reconstruct_nodes, CatalogParams, CrossSectionProfile, Partition, PiecewiseShape, Placement,
};

/// Shape document `{length, partition, elements, profile}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeFile {
    pub length: f64,
    pub partition: Vec<f64>,
    pub elements: Vec<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<CrossSectionProfile>,
}

impl ShapeFile {
    pub fn from_shape(shape: &PiecewiseShape, profile: Option<CrossSectionProfile>) -> Self {
        Self {
            length: shape.length(),
            partition: shape.partition().nodes().to_vec(),
            elements: shape.elements().iter().map(|e| e.to_array()).collect(),
            profile,
        }
    }

    pub fn to_shape(&self) -> Result<PiecewiseShape> {
        let partition = Partition::new(self.partition.clone())?;
        if !((partition.length() - self.length).abs() <= 1e-12 * self.length.abs().max(1.0)) {
            return Err(Error::invalid(format!(
                "length {} disagrees with the last partition node {}",
                self.length,
                partition.length()
            )));
        }
        let elements = self.elements.iter().map(|e| StrainVector::from_array(*e)).collect();
        let shape = PiecewiseShape::new(partition, elements)?;
        if let Some(p) = &self.profile {
            p.validate()?;
        }
        Ok(shape)
    }
}

/// Intrinsic strains: absent (straight, `v̄3 = 1`), one strain for every
/// element, or a list with one strain per element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntrinsicSpec {
    Uniform([f64; 6]),
    PerElement(Vec<[f64; 6]>),
}

impl IntrinsicSpec {
    pub fn resolve(spec: Option<&IntrinsicSpec>, n: usize) -> Result<IntrinsicShape> {
        let intr = match spec {
            None => IntrinsicShape::uniform(n, StrainVector::straight()),
            Some(IntrinsicSpec::Uniform(s)) => IntrinsicShape::uniform(n, StrainVector::from_array(*s)),
            Some(IntrinsicSpec::PerElement(list)) => IntrinsicShape {
                elements: list.iter().map(|s| StrainVector::from_array(*s)).collect(),
            },
        };
        intr.validate(n)?;
        Ok(intr)
    }
}

/// Material document `{a, b, eps, intrinsic, gravity}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFile {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsic: Option<IntrinsicSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<GravityLoad>,
}

impl MaterialFile {
    pub fn params(&self) -> MaterialParams {
        MaterialParams {
            a: self.a,
            b: self.b,
            eps: self.eps,
        }
    }

    /// Energy model for a shape with `n` elements.
    pub fn model(&self, n: usize) -> Result<EnergyModel> {
        let params = self.params();
        params.validate()?;
        if let Some(g) = &self.gravity {
            g.validate()?;
        }
        let intrinsic = IntrinsicSpec::resolve(self.intrinsic.as_ref(), n)?;
        Ok(EnergyModel::new(params, intrinsic, self.gravity.clone()))
    }
}

/// Named catalog shape with parameter overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogRef {
    pub catalog: String,
    #[serde(default)]
    pub params: CatalogParams,
}

/// A shape given by file path, catalog entry, or inline document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShapeSource {
    Path(PathBuf),
    Catalog(CatalogRef),
    Inline(ShapeFile),
}

impl ShapeSource {
    /// Relative paths are taken from `base`.
    pub fn load(&self, base: &Path) -> Result<PiecewiseShape> {
        match self {
            ShapeSource::Path(p) => read_shape(&base.join(p)).map(|(s, _)| s),
            ShapeSource::Catalog(c) => catalog_shape(&c.catalog, &c.params),
            ShapeSource::Inline(f) => f.to_shape(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaterialSource {
    Path(PathBuf),
    Inline(MaterialFile),
}

impl MaterialSource {
    pub fn load(&self, base: &Path) -> Result<MaterialFile> {
        match self {
            MaterialSource::Path(p) => read_json(&base.join(p)),
            MaterialSource::Inline(m) => Ok(m.clone()),
        }
    }
}

/// Boundary conditions. `r0` defaults to the canonical frame at the origin;
/// a clamped `target` defaults to the end placement of the initial shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClampSpec {
    FreeEnd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r0: Option<Placement>,
    },
    Clamped {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r0: Option<Placement>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<Placement>,
    },
    ClosedLoop {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r0: Option<Placement>,
        total_twist: f64,
    },
}

impl Default for ClampSpec {
    fn default() -> Self {
        ClampSpec::FreeEnd { r0: None }
    }
}

impl ClampSpec {
    pub fn resolve(&self, shape: &PiecewiseShape) -> Result<ClampingConstraint> {
        let clamp = match self {
            ClampSpec::FreeEnd { r0 } => ClampingConstraint::free(r0.unwrap_or_else(Placement::canonical)),
            ClampSpec::Clamped { r0, target } => {
                let r0 = r0.unwrap_or_else(Placement::canonical);
                let target = match target {
                    Some(t) => *t,
                    None => *reconstruct_nodes(shape, &r0)?.last().expect("at least one node"),
                };
                ClampingConstraint::clamped(r0, target)
            }
            ClampSpec::ClosedLoop { r0, total_twist } => {
                ClampingConstraint::closed_loop(r0.unwrap_or_else(Placement::canonical), *total_twist)
            }
        };
        clamp.validate()?;
        Ok(clamp)
    }
}

/// Run configuration `{shape, material, clamp, flow}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub shape: ShapeSource,
    pub material: MaterialSource,
    #[serde(default)]
    pub clamp: ClampSpec,
    #[serde(default)]
    pub flow: RelaxConfig,
}

/// Everything a relaxation needs, with files read and defaults filled in.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub shape: PiecewiseShape,
    pub material: MaterialFile,
    pub model: EnergyModel,
    pub clamp: ClampingConstraint,
    pub flow: RelaxConfig,
}

impl RunConfig {
    pub fn resolve(&self, base: &Path) -> Result<ResolvedRun> {
        let shape = self.shape.load(base)?;
        let material = self.material.load(base)?;
        let model = material.model(shape.len())?;
        let clamp = self.clamp.resolve(&shape)?;
        self.flow.validate()?;
        Ok(ResolvedRun {
            shape,
            material,
            model,
            clamp,
            flow: self.flow.clone(),
        })
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_shape(path: &Path) -> Result<(PiecewiseShape, Option<CrossSectionProfile>)> {
    let file: ShapeFile = read_json(path)?;
    Ok((file.to_shape()?, file.profile))
}

fn vec3_header(prefix: &str) -> [String; 3] {
    ["x", "y", "z"].map(|c| format!("{prefix}{c}"))
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn push3(row: &mut Vec<String>, v: &Vector3<f64>) {
    row.extend(v.iter().map(|c| fmt(*c)));
}

/// Node table: `s, u1..v3, x, y, z, d1x.., d2x.., d3x..` at every partition
/// node. Strains are right-continuous; the last node repeats the last
/// element.
pub fn write_nodes_csv<W: Write>(w: W, shape: &PiecewiseShape, nodes: &[Placement]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["s", "u1", "u2", "u3", "v1", "v2", "v3", "x", "y", "z"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for d in ["d1", "d2", "d3"] {
        header.extend(vec3_header(d));
    }
    out.write_record(&header)?;
    let s = shape.partition().nodes();
    for (k, p) in nodes.iter().enumerate() {
        let e = shape.elements()[k.min(shape.len() - 1)];
        let mut row = vec![fmt(s[k])];
        row.extend(e.to_array().iter().map(|v| fmt(*v)));
        push3(&mut row, &p.x);
        push3(&mut row, &p.d1());
        push3(&mut row, &p.d2());
        push3(&mut row, &p.d3());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(w: W, trace: &[TraceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["iteration", "energy", "residual_norm", "grad_norm"])?;
    for r in trace {
        out.write_record([
            r.iteration.to_string(),
            fmt(r.energy),
            fmt(r.residual_norm),
            fmt(r.grad_norm),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct PointRow {
    s: f64,
    x: f64,
    y: f64,
    z: f64,
}

/// Reads `s, x, y, z` rows; derivatives come from finite differences.
pub fn read_curve_csv<R: Read>(r: R) -> Result<CurveSamples> {
    let mut s = Vec::new();
    let mut x = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: PointRow = row?;
        s.push(row.s);
        x.push(Vector3::new(row.x, row.y, row.z));
    }
    CurveSamples::from_points(s, x)
}

pub fn write_curve_csv<W: Write>(w: W, curve: &CurveSamples) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["s", "x", "y", "z"])?;
    for (s, x) in curve.s.iter().zip(&curve.x) {
        let mut row = vec![fmt(*s)];
        push3(&mut row, x);
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Development table `s, u1, u2, v3, kappa, theta`.
pub fn write_development_csv<W: Write>(w: W, dev: &NormalDevelopment, inv: &CurveInvariants) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["s", "u1", "u2", "v3", "kappa", "theta"])?;
    for j in 0..dev.len() {
        out.write_record([dev.s[j], dev.u1[j], dev.u2[j], dev.v3[j], inv.kappa[j], inv.theta[j]].map(fmt))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct DevelopmentRow {
    s: f64,
    u1: f64,
    u2: f64,
    #[serde(default)]
    v3: Option<f64>,
}

/// Reads `s, u1, u2[, v3]` by header name; other columns are ignored and a
/// missing `v3` means unit speed.
pub fn read_development_csv<R: Read>(r: R) -> Result<NormalDevelopment> {
    let mut dev = NormalDevelopment {
        s: Vec::new(),
        u1: Vec::new(),
        u2: Vec::new(),
        v3: Vec::new(),
    };
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: DevelopmentRow = row?;
        dev.s.push(row.s);
        dev.u1.push(row.u1);
        dev.u2.push(row.u2);
        dev.v3.push(row.v3.unwrap_or(1.0));
    }
    dev.validate()?;
    Ok(dev)
}

/// Invariant table `s, kappa, theta, tau`.
pub fn write_invariants_csv<W: Write>(w: W, inv: &CurveInvariants) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["s", "kappa", "theta", "tau"])?;
    for j in 0..inv.s.len() {
        out.write_record([inv.s[j], inv.kappa[j], inv.theta[j], inv.tau[j]].map(fmt))?;
    }
    out.flush()?;
    Ok(())
}

/// Frame table `s, t, d1, d2` with three columns per vector.
pub fn write_frames_csv<W: Write>(w: W, frames: &BishopFrames) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["s".to_string()];
    for d in ["t", "d1", "d2"] {
        header.extend(vec3_header(d));
    }
    out.write_record(&header)?;
    for j in 0..frames.s.len() {
        let mut row = vec![fmt(frames.s[j])];
        push3(&mut row, &frames.t[j]);
        push3(&mut row, &frames.d1[j]);
        push3(&mut row, &frames.d2[j]);
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
