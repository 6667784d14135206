use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{Partition, PiecewiseShape};
use crate::error::{Error, Result};
use crate::se3::StrainVector;

pub const CATALOG_NAMES: [&str; 12] = [
    "straight",
    "twisted",
    "arc",
    "helix",
    "sheared-straight",
    "sheared-helix-u3",
    "sheared-loop-u2",
    "sheared-helix-u1",
    "helix-21",
    "twisted-loop-21",
    "two-arc",
    "twisted-stadium",
];

/// Where a smooth strain profile is sampled inside each element.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Value at the element's left node, the right-continuous convention.
    #[default]
    LeftEndpoint,
    Midpoint,
}

/// Optional overrides for catalog shapes. Unset fields take per-shape defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogParams {
    pub length: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub v1: Option<f64>,
    pub v2: Option<f64>,
    pub v3: Option<f64>,
    /// Total twist; sets `c3 = twist / length` where twist is meaningful.
    pub twist: Option<f64>,
    /// Helix radius `a`.
    pub radius: Option<f64>,
    /// Helix rise per radian `b` (the helix is `(a cos φ, a sin φ, b φ)`).
    pub pitch: Option<f64>,
    pub elements: Option<usize>,
    pub sampling: Option<Sampling>,
}

/// Builds a named shape.
///
/// Single-element entries reproduce the constant-strain examples (straight,
/// twisted, arc, helix and their sheared variants). `helix-21` and
/// `twisted-loop-21` sample the smooth twist-free helix and the constant-twist
/// circular loop on 21 elements. `two-arc` and `twisted-stadium` are the
/// initial states of the relaxation scenarios.
pub fn catalog_shape(name: &str, p: &CatalogParams) -> Result<PiecewiseShape> {
    let length = |default: f64| p.length.unwrap_or(default);
    let single = |s: StrainVector| PiecewiseShape::uniform(length(1.0), 1, s);
    let c3 = |default: f64| match (p.c3, p.twist) {
        (Some(c), _) => c,
        (None, Some(t)) => t / length(1.0),
        (None, None) => default,
    };
    match name {
        "straight" => single(StrainVector::new(0.0, 0.0, 0.0, 0.0, 0.0, p.v3.unwrap_or(1.0))),
        "twisted" => single(StrainVector::new(0.0, 0.0, c3(TAU), 0.0, 0.0, 1.0)),
        "arc" => single(StrainVector::new(p.c1.unwrap_or(1.0), p.c2.unwrap_or(0.0), 0.0, 0.0, 0.0, 1.0)),
        "helix" => single(StrainVector::new(
            p.c1.unwrap_or(1.0),
            p.c2.unwrap_or(0.5),
            c3(2.0),
            0.0,
            0.0,
            1.0,
        )),
        "sheared-straight" => single(StrainVector::new(
            0.0,
            0.0,
            0.0,
            p.v1.unwrap_or(0.3),
            p.v2.unwrap_or(0.2),
            p.v3.unwrap_or(1.0),
        )),
        "sheared-helix-u3" => single(StrainVector::new(
            0.0,
            0.0,
            c3(2.0),
            p.v1.unwrap_or(0.5),
            0.0,
            p.v3.unwrap_or(1.0),
        )),
        "sheared-loop-u2" => single(StrainVector::new(
            0.0,
            p.c2.unwrap_or(1.0),
            0.0,
            p.v1.unwrap_or(0.5),
            0.0,
            p.v3.unwrap_or(1.0),
        )),
        "sheared-helix-u1" => single(StrainVector::new(
            p.c1.unwrap_or(1.0),
            0.0,
            0.0,
            p.v1.unwrap_or(0.5),
            0.0,
            p.v3.unwrap_or(1.0),
        )),
        "helix-21" => twist_free_helix(p),
        "twisted-loop-21" => twisted_loop(p),
        "two-arc" => two_arc(p),
        "twisted-stadium" => twisted_stadium(p),
        _ => Err(Error::invalid(format!(
            "unknown catalog shape '{name}' (known: {})",
            CATALOG_NAMES.join(", ")
        ))),
    }
}

fn positive(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {value}")))
    }
}

fn sampled(
    partition: Partition,
    sampling: Sampling,
    strain: impl Fn(f64) -> StrainVector,
) -> Result<PiecewiseShape> {
    let nodes = partition.nodes();
    let elements = nodes
        .windows(2)
        .map(|w| match sampling {
            Sampling::LeftEndpoint => strain(w[0]),
            Sampling::Midpoint => strain(0.5 * (w[0] + w[1])),
        })
        .collect();
    PiecewiseShape::new(partition, elements)
}

/// Bishop-framed helix of radius `a`, rise `b`: curvature `a/(a²+b²)` with the
/// flexural pair rotating at minus the torsion `b/(a²+b²)`.
fn twist_free_helix(p: &CatalogParams) -> Result<PiecewiseShape> {
    let a = positive("radius", p.radius.unwrap_or(1.0))?;
    let b = p.pitch.unwrap_or(0.5);
    let c2 = a * a + b * b;
    let kappa = a / c2;
    let torsion = b / c2;
    let length = positive("length", p.length.unwrap_or(TAU * c2.sqrt()))?;
    let n = p.elements.unwrap_or(21);
    sampled(Partition::uniform(length, n)?, p.sampling.unwrap_or_default(), |s| {
        let (sin, cos) = (torsion * s).sin_cos();
        StrainVector::new(-kappa * sin, kappa * cos, 0.0, 0.0, 0.0, 1.0)
    })
}

/// Planar circle of length `L` whose material frame turns by the total twist.
fn twisted_loop(p: &CatalogParams) -> Result<PiecewiseShape> {
    let length = positive("length", p.length.unwrap_or(TAU))?;
    let omega = match (p.c3, p.twist) {
        (Some(c), _) => c,
        (None, t) => t.unwrap_or(TAU) / length,
    };
    let kappa = TAU / length;
    let n = p.elements.unwrap_or(21);
    sampled(Partition::uniform(length, n)?, p.sampling.unwrap_or_default(), |s| {
        let (sin, cos) = (omega * s).sin_cos();
        StrainVector::new(kappa * sin, kappa * cos, omega, 0.0, 0.0, 1.0)
    })
}

/// Two opposite arcs in the plane normal to `d1`, each covering half the rod,
/// stretched by `v3`. Start and end frames are parallel.
fn two_arc(p: &CatalogParams) -> Result<PiecewiseShape> {
    let n = p.elements.unwrap_or(8);
    if n == 0 || n % 2 != 0 {
        return Err(Error::invalid("two-arc needs an even number of elements"));
    }
    let length = positive("length", p.length.unwrap_or(1.0))?;
    let c = p.c1.unwrap_or(1.0);
    let v3 = positive("v3", p.v3.unwrap_or(1.0))?;
    let elements = (0..n)
        .map(|k| {
            let u1 = if k < n / 2 { c } else { -c };
            StrainVector::new(u1, 0.0, 0.0, 0.0, 0.0, v3)
        })
        .collect();
    PiecewiseShape::new(Partition::uniform(length, n)?, elements)
}

/// Closed stadium loop: half turns in the first and third quarters, the whole
/// twist in the second quarter, a straight fourth quarter.
fn twisted_stadium(p: &CatalogParams) -> Result<PiecewiseShape> {
    let n = p.elements.unwrap_or(16);
    if n == 0 || n % 4 != 0 {
        return Err(Error::invalid("twisted-stadium needs a multiple of four elements"));
    }
    let length = positive("length", p.length.unwrap_or(TAU))?;
    let twist = p.twist.unwrap_or(TAU);
    let quarter = length / 4.0;
    let bend = StrainVector::new(0.0, PI / quarter, 0.0, 0.0, 0.0, 1.0);
    let spin = StrainVector::new(0.0, 0.0, twist / quarter, 0.0, 0.0, 1.0);
    let elements = (0..n)
        .map(|k| match 4 * k / n {
            0 | 2 => bend,
            1 => spin,
            _ => StrainVector::straight(),
        })
        .collect();
    PiecewiseShape::new(Partition::uniform(length, n)?, elements)
}
