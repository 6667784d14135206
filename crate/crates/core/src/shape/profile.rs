use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_resolution() -> usize {
    24
}

/// Planar cross-section shape, uniform along the rod.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CrossSectionProfile {
    /// Ellipse with semi-axes `alpha` along `d1` and `beta` along `d2`,
    /// centred on the base curve.
    Ellipse {
        alpha: f64,
        beta: f64,
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
    /// Simple polygon in `(ζ1, ζ2)` coordinates.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl CrossSectionProfile {
    pub fn circle(radius: f64) -> Self {
        Self::ellipse(radius, radius)
    }

    pub fn ellipse(alpha: f64, beta: f64) -> Self {
        CrossSectionProfile::Ellipse {
            alpha,
            beta,
            resolution: default_resolution(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CrossSectionProfile::Ellipse {
                alpha,
                beta,
                resolution,
            } => {
                if !(alpha.is_finite() && beta.is_finite() && *alpha > 0.0 && *beta > 0.0) {
                    return Err(Error::invalid("ellipse semi-axes must be positive"));
                }
                if *resolution < 3 {
                    return Err(Error::invalid("ellipse resolution must be at least 3"));
                }
            }
            CrossSectionProfile::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::invalid("polygon needs at least three vertices"));
                }
                if vertices.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("polygon vertices must be finite"));
                }
                if signed_area(vertices).abs() < 1e-14 {
                    return Err(Error::invalid("polygon has zero area"));
                }
                if !contains_origin_strictly(vertices) {
                    return Err(Error::invalid(
                        "cross section must contain the origin in its interior",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Boundary samples, counter-clockwise in the `(ζ1, ζ2)` plane.
    pub fn boundary(&self) -> Vec<[f64; 2]> {
        match self {
            CrossSectionProfile::Ellipse {
                alpha,
                beta,
                resolution,
            } => (0..*resolution)
                .map(|j| {
                    let t = std::f64::consts::TAU * j as f64 / *resolution as f64;
                    [alpha * t.cos(), beta * t.sin()]
                })
                .collect(),
            CrossSectionProfile::Polygon { vertices } => {
                let mut v = vertices.clone();
                if signed_area(&v) < 0.0 {
                    v.reverse();
                }
                v
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            CrossSectionProfile::Ellipse { alpha, beta, .. } => std::f64::consts::PI * alpha * beta,
            CrossSectionProfile::Polygon { vertices } => signed_area(vertices).abs(),
        }
    }

    /// Area centroid in `(ζ1, ζ2)`.
    pub fn centroid(&self) -> [f64; 2] {
        match self {
            CrossSectionProfile::Ellipse { .. } => [0.0, 0.0],
            CrossSectionProfile::Polygon { vertices } => {
                let a = signed_area(vertices);
                let (mut cx, mut cy) = (0.0, 0.0);
                for (p, q) in edges(vertices) {
                    let cross = p[0] * q[1] - q[0] * p[1];
                    cx += (p[0] + q[0]) * cross;
                    cy += (p[1] + q[1]) * cross;
                }
                [cx / (6.0 * a), cy / (6.0 * a)]
            }
        }
    }
}

fn edges(v: &[[f64; 2]]) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
    v.iter().copied().zip(v.iter().cycle().skip(1).copied())
}

fn signed_area(v: &[[f64; 2]]) -> f64 {
    0.5 * edges(v).map(|(p, q)| p[0] * q[1] - q[0] * p[1]).sum::<f64>()
}

/// Winding-number test that also rejects the origin lying on an edge.
fn contains_origin_strictly(v: &[[f64; 2]]) -> bool {
    let mut winding = 0.0;
    for (p, q) in edges(v) {
        let cross = p[0] * q[1] - q[0] * p[1];
        let dot = p[0] * q[0] + p[1] * q[1];
        if cross.abs() < 1e-14 && dot <= 0.0 {
            return false;
        }
        winding += cross.atan2(dot);
    }
    winding.abs() > std::f64::consts::PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_properties() {
        let square = CrossSectionProfile::Polygon {
            vertices: vec![[-1.0, -1.0], [2.0, -1.0], [2.0, 1.0], [-1.0, 1.0]],
        };
        square.validate().unwrap();
        assert!((square.area() - 6.0).abs() < 1e-14);
        let c = square.centroid();
        assert!((c[0] - 0.5).abs() < 1e-14 && c[1].abs() < 1e-14);

        let clockwise = CrossSectionProfile::Polygon {
            vertices: vec![[-1.0, 1.0], [1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]],
        };
        clockwise.validate().unwrap();
        let b = clockwise.boundary();
        assert!(signed_area(&b) > 0.0);
    }

    #[test]
    fn degenerate_profiles_rejected() {
        let outside = CrossSectionProfile::Polygon {
            vertices: vec![[1.0, 1.0], [2.0, 1.0], [2.0, 2.0]],
        };
        assert!(outside.validate().is_err());
        let on_edge = CrossSectionProfile::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        };
        assert!(on_edge.validate().is_err());
        let flat = CrossSectionProfile::Polygon {
            vertices: vec![[-1.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
        };
        assert!(flat.validate().is_err());
        assert!(CrossSectionProfile::ellipse(1.0, 0.0).validate().is_err());
    }

    #[test]
    fn ellipse_area_matches_sampled_polygon() {
        let e = CrossSectionProfile::Ellipse {
            alpha: 2.0,
            beta: 0.5,
            resolution: 2000,
        };
        let poly = signed_area(&e.boundary());
        assert!((poly - e.area()).abs() / e.area() < 1e-5);
    }
}
