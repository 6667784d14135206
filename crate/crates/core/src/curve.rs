//! Framed curves: relatively parallel adapted frames, normal developments and
//! their curvature/torsion invariants.
//!
//! A sampled curve is stored as flat arrays over the parameter grid. A
//! repeated parameter value splits the grid into pieces: the two samples at a
//! repeated `s` carry the left and right limits of fields that may jump there
//! (for instance `t′` where two circular arcs of different planes meet).
//! Quadratures and stencils never reach across a split.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{exp_se3, StrainVector};
use crate::shape::{Partition, PiecewiseShape, Placement};

type V3 = Vector3<f64>;

/// Relative tolerance for `|d1(0)| = 1` and `d1(0) ⊥ t(0)`.
pub const SEED_TOLERANCE: f64 = 1e-9;

/// `x`, `x′`, `x″` at one parameter value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub x: V3,
    pub dx: V3,
    pub ddx: V3,
}

/// A curve that can be evaluated with its first two derivatives.
pub trait ParametricCurve {
    fn length(&self) -> f64;

    /// Interior parameters where `x″` may jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// At a breakpoint `right` selects the limit from above.
    fn jet(&self, s: f64, right: bool) -> Jet;
}

/// One segment of a [`AnalyticCurve::Composite`] path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Segment {
    Line {
        length: f64,
    },
    /// Circular arc bending toward the current normal after rotating it by
    /// `bank` about the tangent.
    Arc {
        radius: f64,
        angle: f64,
        #[serde(default)]
        bank: f64,
    },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { length } => length,
            Segment::Arc { radius, angle, .. } => radius * angle,
        }
    }
}

/// The catalog of closed-form curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AnalyticCurve {
    /// `x(s) = s·direction` with a unit direction.
    Line {
        length: f64,
        #[serde(default = "e3")]
        direction: [f64; 3],
    },
    /// Circle of the given radius in the `(e1, e2)` plane through
    /// `(radius, 0, 0)`, traversed with constant speed.
    Circle {
        radius: f64,
        length: f64,
        #[serde(default = "one")]
        speed: f64,
    },
    /// Circular helix `(a cos(s/c), a sin(s/c), b s/c)` with `c = √(a²+b²)`,
    /// parameterized by arclength.
    Helix { radius: f64, pitch: f64, length: f64 },
    /// Straight lead, planar arc, straight tail.
    LineArcLine {
        lead: f64,
        radius: f64,
        angle: f64,
        tail: f64,
    },
    /// Arclength path starting at the origin along `e1` with normal `e2`.
    Composite { segments: Vec<Segment> },
}

fn e3() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn one() -> f64 {
    1.0
}

struct PathPiece {
    start: f64,
    x0: V3,
    t0: V3,
    n0: V3,
    segment: Segment,
}

impl AnalyticCurve {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            AnalyticCurve::Line { length, direction } => {
                positive("length", *length)?;
                let d = V3::from(*direction);
                if (d.norm() - 1.0).abs() > SEED_TOLERANCE {
                    return Err(Error::invalid("line direction must be a unit vector"));
                }
            }
            AnalyticCurve::Circle { radius, length, speed } => {
                positive("radius", *radius)?;
                positive("length", *length)?;
                positive("speed", *speed)?;
            }
            AnalyticCurve::Helix { radius, pitch, length } => {
                positive("radius", *radius)?;
                positive("length", *length)?;
                if !pitch.is_finite() {
                    return Err(Error::invalid("helix pitch must be finite"));
                }
            }
            AnalyticCurve::LineArcLine { lead, radius, angle, tail } => {
                positive("radius", *radius)?;
                positive("angle", *angle)?;
                if !(*lead >= 0.0 && *tail >= 0.0) {
                    return Err(Error::invalid("straight parts must have nonnegative length"));
                }
            }
            AnalyticCurve::Composite { segments } => {
                if segments.is_empty() {
                    return Err(Error::invalid("composite curve needs at least one segment"));
                }
                for seg in segments {
                    match seg {
                        Segment::Line { length } => positive("segment length", *length)?,
                        Segment::Arc { radius, angle, bank } => {
                            positive("arc radius", *radius)?;
                            positive("arc angle", *angle)?;
                            if !bank.is_finite() {
                                return Err(Error::invalid("arc bank must be finite"));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn segments(&self) -> Option<Vec<Segment>> {
        match self {
            AnalyticCurve::LineArcLine { lead, radius, angle, tail } => {
                let mut out = Vec::new();
                if *lead > 0.0 {
                    out.push(Segment::Line { length: *lead });
                }
                out.push(Segment::Arc {
                    radius: *radius,
                    angle: *angle,
                    bank: 0.0,
                });
                if *tail > 0.0 {
                    out.push(Segment::Line { length: *tail });
                }
                Some(out)
            }
            AnalyticCurve::Composite { segments } => Some(segments.clone()),
            _ => None,
        }
    }

    fn path(&self) -> Vec<PathPiece> {
        let Some(segments) = self.segments() else {
            return Vec::new();
        };
        let mut pieces = Vec::with_capacity(segments.len());
        let (mut x, mut t, mut n) = (V3::zeros(), V3::x(), V3::y());
        let mut start = 0.0;
        for seg in segments {
            if let Segment::Arc { bank, .. } = seg {
                n = rotate_about(&n, &t, bank);
            }
            let piece = PathPiece {
                start,
                x0: x,
                t0: t,
                n0: n,
                segment: seg.clone(),
            };
            let end = piece_jet(&piece, seg.length());
            start += seg.length();
            x = end.x;
            t = end.dx;
            if let Segment::Arc { angle, .. } = seg {
                n = -piece.t0 * angle.sin() + piece.n0 * angle.cos();
            }
            pieces.push(piece);
        }
        pieces
    }
}

fn piece_jet(p: &PathPiece, local: f64) -> Jet {
    match p.segment {
        Segment::Line { .. } => Jet {
            x: p.x0 + p.t0 * local,
            dx: p.t0,
            ddx: V3::zeros(),
        },
        Segment::Arc { radius, .. } => {
            let phi = local / radius;
            let (s, c) = phi.sin_cos();
            Jet {
                x: p.x0 + (p.t0 * s + p.n0 * (1.0 - c)) * radius,
                dx: p.t0 * c + p.n0 * s,
                ddx: (p.n0 * c - p.t0 * s) / radius,
            }
        }
    }
}

/// Right-handed rotation of `v` by `angle` about the unit `axis`.
pub fn rotate_about(v: &V3, axis: &V3, angle: f64) -> V3 {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c))
}

impl ParametricCurve for AnalyticCurve {
    fn length(&self) -> f64 {
        match self {
            AnalyticCurve::Line { length, .. }
            | AnalyticCurve::Circle { length, .. }
            | AnalyticCurve::Helix { length, .. } => *length,
            _ => self.segments().unwrap_or_default().iter().map(Segment::length).sum(),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let path = self.path();
        path.iter().skip(1).map(|p| p.start).collect()
    }

    fn jet(&self, s: f64, right: bool) -> Jet {
        match self {
            AnalyticCurve::Line { direction, .. } => {
                let d = V3::from(*direction);
                Jet {
                    x: d * s,
                    dx: d,
                    ddx: V3::zeros(),
                }
            }
            AnalyticCurve::Circle { radius, speed, .. } => {
                let w = speed / radius;
                let (sn, cs) = (w * s).sin_cos();
                Jet {
                    x: V3::new(cs, sn, 0.0) * *radius,
                    dx: V3::new(-sn, cs, 0.0) * *speed,
                    ddx: V3::new(-cs, -sn, 0.0) * (speed * w),
                }
            }
            AnalyticCurve::Helix { radius, pitch, .. } => {
                let c = radius.hypot(*pitch);
                let (sn, cs) = (s / c).sin_cos();
                Jet {
                    x: V3::new(radius * cs, radius * sn, pitch * s / c),
                    dx: V3::new(-radius * sn, radius * cs, *pitch) / c,
                    ddx: V3::new(-radius * cs, -radius * sn, 0.0) / (c * c),
                }
            }
            _ => {
                let path = self.path();
                let k = path
                    .iter()
                    .rposition(|p| if right { p.start <= s } else { p.start < s })
                    .unwrap_or(0);
                piece_jet(&path[k], s - path[k].start)
            }
        }
    }
}

/// Curve data on a parameter grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSamples {
    pub s: Vec<f64>,
    pub x: Vec<V3>,
    pub dx: Vec<V3>,
    pub ddx: Vec<V3>,
}

/// Index ranges of the pieces of a grid split at repeated parameter values.
pub fn piece_ranges(s: &[f64]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for j in 1..s.len() {
        if s[j] == s[j - 1] {
            out.push(start..j);
            start = j;
        }
    }
    if start < s.len() {
        out.push(start..s.len());
    }
    out
}

fn check_grid(s: &[f64], min_piece: usize) -> Result<()> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("parameter grid contains non-finite values"));
    }
    if s.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("parameter grid must be nondecreasing"));
    }
    for r in piece_ranges(s) {
        if r.len() < min_piece {
            return Err(Error::invalid(format!(
                "every piece of the grid needs at least {min_piece} samples, found {} at s = {}",
                r.len(),
                s[r.start]
            )));
        }
    }
    Ok(())
}

impl CurveSamples {
    /// Samples `curve` with pieces between breakpoints, each on a uniform
    /// grid with spacing at most `step`.
    pub fn from_curve<C: ParametricCurve + ?Sized>(curve: &C, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid("sampling step must be positive"));
        }
        let length = curve.length();
        let mut cuts = vec![0.0];
        cuts.extend(curve.breakpoints());
        cuts.push(length);
        let mut out = CurveSamples {
            s: Vec::new(),
            x: Vec::new(),
            dx: Vec::new(),
            ddx: Vec::new(),
        };
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = (((b - a) / step).ceil() as usize).max(1);
            for j in 0..=n {
                let s = if j == n { b } else { a + (b - a) * j as f64 / n as f64 };
                let jet = curve.jet(s, j < n);
                out.s.push(s);
                out.x.push(jet.x);
                out.dx.push(jet.dx);
                out.ddx.push(jet.ddx);
            }
        }
        out.validate()?;
        Ok(out)
    }

    /// Builds samples from positions alone, with derivatives from fourth-order
    /// finite-difference stencils inside each piece.
    pub fn from_points(s: Vec<f64>, x: Vec<V3>) -> Result<Self> {
        if s.len() != x.len() {
            return Err(Error::invalid("parameter and position counts differ"));
        }
        check_grid(&s, 5)?;
        let mut dx = vec![V3::zeros(); s.len()];
        let mut ddx = vec![V3::zeros(); s.len()];
        for r in piece_ranges(&s) {
            let grid = &s[r.clone()];
            let n = grid.len();
            for (i, j) in r.clone().enumerate() {
                let lo = i.saturating_sub(2).min(n - 5);
                let w = fd_weights(grid[i], &grid[lo..lo + 5], 2);
                let pts = &x[r.start + lo..r.start + lo + 5];
                dx[j] = pts.iter().zip(&w[1]).map(|(p, c)| p * *c).sum();
                ddx[j] = pts.iter().zip(&w[2]).map(|(p, c)| p * *c).sum();
            }
        }
        let out = Self { s, x, dx, ddx };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.s.len();
        if self.x.len() != n || self.dx.len() != n || self.ddx.len() != n {
            return Err(Error::invalid("curve sample arrays have different lengths"));
        }
        check_grid(&self.s, 2)?;
        for (j, d) in self.dx.iter().enumerate() {
            if !(d.norm() > 0.0) || !d.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!(
                    "curve is not regular at s = {}: |x'| = {}",
                    self.s[j],
                    d.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Finite-difference weights (Fornberg) for derivatives `0..=m` at `z` on the
/// nodes `xs`; `w[k][j]` multiplies `f(xs[j])` in the `k`-th derivative.
pub fn fd_weights(z: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Speed, unit tangent and tangent derivative at every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedTangent {
    pub v3: Vec<f64>,
    pub t: Vec<V3>,
    pub dt: Vec<V3>,
}

pub fn speed_tangent(curve: &CurveSamples) -> Result<SpeedTangent> {
    curve.validate()?;
    let mut out = SpeedTangent {
        v3: Vec::with_capacity(curve.len()),
        t: Vec::with_capacity(curve.len()),
        dt: Vec::with_capacity(curve.len()),
    };
    for (d1, d2) in curve.dx.iter().zip(&curve.ddx) {
        let v3 = d1.norm();
        out.v3.push(v3);
        out.t.push(d1 / v3);
        out.dt.push((d2 - d1 * (d2.dot(d1) / (v3 * v3))) / v3);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// Second order, any spacing.
    Trapezoid,
    /// Fourth-order Gregory rules; needs uniform pieces.
    #[default]
    Gregory,
}

/// Strain samples of a framed curve: `u1`, `u2` and the speed `v3`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalDevelopment {
    pub s: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub v3: Vec<f64>,
}

impl NormalDevelopment {
    pub fn validate(&self) -> Result<()> {
        let n = self.s.len();
        if self.u1.len() != n || self.u2.len() != n || self.v3.len() != n {
            return Err(Error::invalid("development arrays have different lengths"));
        }
        check_grid(&self.s, 2)?;
        if self.u1.iter().chain(&self.u2).any(|v| !v.is_finite()) {
            return Err(Error::invalid("development strains must be finite"));
        }
        if self.v3.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("development speed v3 must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Cumulative quadrature over one piece. The `i`-th call to `partial`
/// returns `∫_{s_0}^{s_i} f` without the term of the still unknown `f_i`,
/// together with that term's weight; the caller then pushes `f_i`.
struct Cumulative<'a> {
    s: &'a [f64],
    h: f64,
    rule: Quadrature,
    f: Vec<V3>,
    running: V3,
}

impl<'a> Cumulative<'a> {
    fn new(s: &'a [f64], rule: Quadrature) -> Result<Self> {
        let h = match rule {
            Quadrature::Gregory => uniform_step(s)?,
            Quadrature::Trapezoid => 0.0,
        };
        Ok(Self {
            s,
            h,
            rule,
            f: Vec::new(),
            running: V3::zeros(),
        })
    }

    /// Gregory weights on the leading and trailing samples of `∫_{s_0}^{s_i}`
    /// in units of `h`; samples in between carry weight one.
    fn gregory(i: usize) -> (&'static [f64], &'static [f64]) {
        const THIRD: f64 = 1.0 / 3.0;
        match i {
            0 => (&[], &[0.0]),
            1 => (&[0.5], &[0.5]),
            2 => (&[THIRD], &[4.0 * THIRD, THIRD]),
            3 => (&[0.375], &[1.125, 1.125, 0.375]),
            4 => (&[THIRD], &[4.0 * THIRD, 2.0 * THIRD, 4.0 * THIRD, THIRD]),
            _ => (&[0.375, 7.0 / 6.0, 23.0 / 24.0], &[23.0 / 24.0, 7.0 / 6.0, 0.375]),
        }
    }

    fn partial(&mut self) -> (V3, f64) {
        let i = self.f.len();
        if i == 0 {
            return (V3::zeros(), 0.0);
        }
        match self.rule {
            Quadrature::Trapezoid => {
                if i >= 2 {
                    self.running += (self.f[i - 2] + self.f[i - 1]) * (0.5 * (self.s[i - 1] - self.s[i - 2]));
                }
                let w = 0.5 * (self.s[i] - self.s[i - 1]);
                (self.running + self.f[i - 1] * w, w)
            }
            Quadrature::Gregory => {
                if i >= 6 {
                    self.running += self.f[i - 3];
                }
                let (head, tail) = Self::gregory(i);
                let mut acc = if i >= 5 { self.running } else { V3::zeros() };
                for (k, w) in head.iter().enumerate() {
                    acc += self.f[k] * *w;
                }
                let first = i + 1 - tail.len();
                for (k, w) in tail[..tail.len() - 1].iter().enumerate() {
                    acc += self.f[first + k] * *w;
                }
                (acc * self.h, tail[tail.len() - 1] * self.h)
            }
        }
    }
}

fn uniform_step(s: &[f64]) -> Result<f64> {
    let h = (s[s.len() - 1] - s[0]) / (s.len() - 1) as f64;
    for w in s.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-6 * h {
            return Err(Error::invalid(
                "Gregory quadrature needs a uniform grid on every piece; use the trapezoid rule",
            ));
        }
    }
    Ok(h)
}

/// Result of the Volterra solve: the development and the transported normal
/// directors at every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct VolterraSolution {
    pub development: NormalDevelopment,
    pub d1: Vec<V3>,
    pub d2: Vec<V3>,
}

/// Checks a seed director against the initial tangent.
pub fn check_seed(d1: &V3, t0: &V3) -> Result<()> {
    if !((d1.norm() - 1.0).abs() <= SEED_TOLERANCE) {
        return Err(Error::invalid(format!("d1(0) must be a unit vector, |d1| = {}", d1.norm())));
    }
    if !(d1.dot(t0).abs() <= SEED_TOLERANCE) {
        return Err(Error::invalid(format!(
            "d1(0) must be orthogonal to t(0), d1·t = {:.3e}",
            d1.dot(t0)
        )));
    }
    Ok(())
}

/// A unit normal at `t`: the coordinate axis least aligned with `t`,
/// orthogonalized.
pub fn default_seed(t: &V3) -> V3 {
    let axis = (0..3)
        .min_by(|&a, &b| t[a].abs().total_cmp(&t[b].abs()))
        .map(|k| V3::ith(k, 1.0))
        .unwrap_or_else(V3::x);
    (axis - t * t.dot(&axis)).normalize()
}

/// Solves the Volterra equations for `u1`, `u2` by a Nyström scheme with
/// forward substitution:
///
/// `u2(s) = (d1(0) − ∫₀ˢ u2 t) · t′(s)`, `u1(s) = −(d2(0) + ∫₀ˢ u1 t) · t′(s)`,
///
/// where the bracketed integrals are the directors `d1(s)` and `d2(s)`.
pub fn solve_volterra(curve: &CurveSamples, d1_0: &V3, rule: Quadrature) -> Result<VolterraSolution> {
    let st = speed_tangent(curve)?;
    check_seed(d1_0, &st.t[0])?;
    let d2_0 = st.t[0].cross(d1_0);
    let n = curve.len();
    let (mut u1, mut u2) = (vec![0.0; n], vec![0.0; n]);
    let (mut d1, mut d2) = (vec![V3::zeros(); n], vec![V3::zeros(); n]);
    let (mut base1, mut base2) = (*d1_0, d2_0);
    for r in piece_ranges(&curve.s) {
        let grid = &curve.s[r.clone()];
        let mut c1 = Cumulative::new(grid, rule)?;
        let mut c2 = Cumulative::new(grid, rule)?;
        for j in r.clone() {
            let i = j - r.start;
            if rule == Quadrature::Gregory && r.len() >= 3 && (i == 1 || i == 2) {
                if i == 1 {
                    let (a1, a2, dd1, dd2) = starting_block(&st, j, c1.h, c1.f[0], c2.f[0], base1, base2)?;
                    u2[j..j + 2].copy_from_slice(&a2);
                    u1[j..j + 2].copy_from_slice(&a1);
                    d1[j..j + 2].copy_from_slice(&dd1);
                    d2[j..j + 2].copy_from_slice(&dd2);
                }
                c1.partial();
                c2.partial();
                c1.f.push(st.t[j] * u2[j]);
                c2.f.push(st.t[j] * u1[j]);
                continue;
            }
            let (t, dt) = (st.t[j], st.dt[j]);
            let (p1, w) = c1.partial();
            let (p2, _) = c2.partial();
            let diag = 1.0 + w * t.dot(&dt);
            u2[j] = (base1 - p1).dot(&dt) / diag;
            u1[j] = -(base2 + p2).dot(&dt) / diag;
            c1.f.push(t * u2[j]);
            c2.f.push(t * u1[j]);
            d1[j] = base1 - p1 - t * (w * u2[j]);
            d2[j] = base2 + p2 + t * (w * u1[j]);
        }
        base1 = d1[r.end - 1];
        base2 = d2[r.end - 1];
    }
    Ok(VolterraSolution {
        development: NormalDevelopment {
            s: curve.s.clone(),
            u1,
            u2,
            v3: st.v3,
        },
        d1,
        d2,
    })
}

/// Solves for the first two unknowns of a Gregory piece together: the first
/// interval uses the quadratic rule `h(5, 8, −1)/12` through the first three
/// samples, the second Simpson's rule. Returns `(u1, u2, d1, d2)` at samples
/// `j` and `j + 1`.
#[allow(clippy::type_complexity)]
fn starting_block(
    st: &SpeedTangent,
    j: usize,
    h: f64,
    f1_0: V3,
    f2_0: V3,
    base1: V3,
    base2: V3,
) -> Result<([f64; 2], [f64; 2], [V3; 2], [V3; 2])> {
    let (t1, dt1, t2, dt2) = (st.t[j], st.dt[j], st.t[j + 1], st.dt[j + 1]);
    let m = Matrix2::new(
        1.0 + 2.0 * h / 3.0 * t1.dot(&dt1),
        -h / 12.0 * t2.dot(&dt1),
        4.0 * h / 3.0 * t1.dot(&dt2),
        1.0 + h / 3.0 * t2.dot(&dt2),
    );
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::invalid("singular starting block in the Volterra solve"))?;
    let a2 = inv * Vector2::new((base1 - f1_0 * (5.0 * h / 12.0)).dot(&dt1), (base1 - f1_0 * (h / 3.0)).dot(&dt2));
    let a1 = inv * Vector2::new(-(base2 + f2_0 * (5.0 * h / 12.0)).dot(&dt1), -(base2 + f2_0 * (h / 3.0)).dot(&dt2));
    let d1 = [
        base1 - (f1_0 * 5.0 + t1 * (8.0 * a2[0]) - t2 * a2[1]) * (h / 12.0),
        base1 - (f1_0 + t1 * (4.0 * a2[0]) + t2 * a2[1]) * (h / 3.0),
    ];
    let d2 = [
        base2 + (f2_0 * 5.0 + t1 * (8.0 * a1[0]) - t2 * a1[1]) * (h / 12.0),
        base2 + (f2_0 + t1 * (4.0 * a1[0]) + t2 * a1[1]) * (h / 3.0),
    ];
    Ok(([a1[0], a1[1]], [a2[0], a2[1]], d1, d2))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    /// One exponential of the endpoint-averaged strain per step; second order.
    Midpoint,
    /// Fourth-order Magnus step from two Gauss points.
    #[default]
    Magnus4,
}

/// Adapted frames along the curve and the curve rebuilt from the development.
#[derive(Clone, Debug, PartialEq)]
pub struct BishopFrames {
    pub s: Vec<f64>,
    pub x: Vec<V3>,
    pub t: Vec<V3>,
    pub d1: Vec<V3>,
    pub d2: Vec<V3>,
}

impl BishopFrames {
    pub fn placement(&self, j: usize) -> Placement {
        Placement::from_parts_unchecked(self.x[j], Matrix3::from_columns(&[self.d1[j], self.d2[j], self.t[j]]))
    }
}

fn interpolate(s: &[f64], f: &[f64], i: usize, z: f64) -> f64 {
    let n = s.len();
    let m = n.min(4);
    let lo = i.saturating_sub(1).min(n - m);
    let w = fd_weights(z, &s[lo..lo + m], 0);
    w[0].iter().zip(&f[lo..lo + m]).map(|(a, b)| a * b).sum()
}

fn strain_at(dev: &NormalDevelopment, r: &Range<usize>, i: usize, z: f64) -> StrainVector {
    let s = &dev.s[r.clone()];
    StrainVector::new(
        interpolate(s, &dev.u1[r.clone()], i, z),
        interpolate(s, &dev.u2[r.clone()], i, z),
        0.0,
        0.0,
        0.0,
        interpolate(s, &dev.v3[r.clone()], i, z),
    )
}

/// Integrates `x′ = v3 t`, `t′ = u2 d1 − u1 d2`, `d1′ = −u2 t`, `d2′ = u1 t`
/// from `start` (whose frame supplies `d1(0)`, `d2(0)`, `t(0)`).
pub fn integrate_development(dev: &NormalDevelopment, start: &Placement, stepper: Stepper) -> Result<BishopFrames> {
    dev.validate()?;
    start.validate(crate::shape::FRAME_TOLERANCE)?;
    let n = dev.len();
    let mut out = BishopFrames {
        s: dev.s.clone(),
        x: Vec::with_capacity(n),
        t: Vec::with_capacity(n),
        d1: Vec::with_capacity(n),
        d2: Vec::with_capacity(n),
    };
    let mut p = *start;
    let push = |out: &mut BishopFrames, p: &Placement| {
        out.x.push(p.x);
        out.t.push(p.d3());
        out.d1.push(p.d1());
        out.d2.push(p.d2());
    };
    let g = 3f64.sqrt() / 6.0;
    for r in piece_ranges(&dev.s) {
        push(&mut out, &p);
        for j in r.start..r.end - 1 {
            let i = j - r.start;
            let h = dev.s[j + 1] - dev.s[j];
            let omega = match stepper {
                Stepper::Midpoint => {
                    let a = StrainVector::new(dev.u1[j], dev.u2[j], 0.0, 0.0, 0.0, dev.v3[j]);
                    let b = StrainVector::new(dev.u1[j + 1], dev.u2[j + 1], 0.0, 0.0, 0.0, dev.v3[j + 1]);
                    (0.5 * h) * (a + b)
                }
                Stepper::Magnus4 => {
                    let a = strain_at(dev, &r, i, dev.s[j] + h * (0.5 - g));
                    let b = strain_at(dev, &r, i, dev.s[j] + h * (0.5 + g));
                    (0.5 * h) * (a + b) + (g * 0.5 * h * h) * a.bracket(&b)
                }
            };
            p = exp_se3(&omega, 1.0).apply(&p);
            push(&mut out, &p);
        }
    }
    Ok(out)
}

/// Solves the Volterra equations for the seed `d1_0` and integrates the
/// resulting development from the first sample of `curve`.
pub fn bishop_frame(
    curve: &CurveSamples,
    d1_0: &V3,
    rule: Quadrature,
    stepper: Stepper,
) -> Result<(NormalDevelopment, BishopFrames)> {
    let sol = solve_volterra(curve, d1_0, rule)?;
    let t0 = curve.dx[0].normalize();
    let start = Placement::new(curve.x[0], *d1_0, t0.cross(d1_0), t0)?;
    let frames = integrate_development(&sol.development, &start, stepper)?;
    Ok((sol.development, frames))
}

/// Largest `|d1′·d2|` along the frames, with `d1′` from fourth-order
/// differences inside each piece.
pub fn parallel_defect(frames: &BishopFrames) -> f64 {
    let mut worst = 0.0f64;
    for r in piece_ranges(&frames.s) {
        let s = &frames.s[r.clone()];
        let n = s.len();
        let m = n.min(5);
        for i in 0..n {
            let lo = i.saturating_sub(2).min(n - m);
            let w = fd_weights(s[i], &s[lo..lo + m], 1);
            let d: V3 = (0..m).map(|k| frames.d1[r.start + lo + k] * w[1][k]).sum();
            worst = worst.max(d.dot(&frames.d2[r.start + i]).abs());
        }
    }
    worst
}

/// A point mass of torsion: the phase jump across a curvature gap or a split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorsionAtom {
    pub s: f64,
    pub jump: f64,
}

/// Curvature, phase and torsion samples plus the singular part of torsion.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveInvariants {
    pub s: Vec<f64>,
    pub kappa: Vec<f64>,
    pub theta: Vec<f64>,
    pub tau: Vec<f64>,
    pub atoms: Vec<TorsionAtom>,
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// `κ e^{iθ} = (u2 + i u1)/v3` with `θ = 0` where `κ < zero_rel · max κ`;
/// `τ = dθ/ds` on every run of positive curvature, with phase jumps across
/// zero-curvature gaps and splits reported as atoms.
pub fn hasimoto_invariants(dev: &NormalDevelopment, zero_rel: f64) -> Result<CurveInvariants> {
    dev.validate()?;
    let n = dev.len();
    let raw: Vec<f64> = (0..n).map(|j| dev.u1[j].hypot(dev.u2[j]) / dev.v3[j]).collect();
    let cutoff = zero_rel * raw.iter().cloned().fold(0.0, f64::max);
    let kappa: Vec<f64> = raw.iter().map(|&k| if k > cutoff && k > 0.0 { k } else { 0.0 }).collect();
    let mut theta = vec![0.0; n];
    let mut tau = vec![0.0; n];
    let mut atoms = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    let mut run_start: Option<usize> = None;
    let split_at = |j: usize| j > 0 && dev.s[j] == dev.s[j - 1];

    let finish_run = |theta: &[f64], tau: &mut [f64], a: usize, b: usize| {
        let s = &dev.s[a..b];
        let m = s.len();
        if m < 2 {
            return;
        }
        let k = m.min(5);
        for i in 0..m {
            let lo = i.saturating_sub(2).min(m - k);
            let w = fd_weights(s[i], &s[lo..lo + k], 1);
            tau[a + i] = (0..k).map(|q| w[1][q] * theta[a + lo + q]).sum();
        }
    };

    for j in 0..n {
        if split_at(j) {
            if let Some(a) = run_start.take() {
                finish_run(&theta, &mut tau, a, j);
            }
        }
        if kappa[j] == 0.0 {
            if let Some(a) = run_start.take() {
                finish_run(&theta, &mut tau, a, j);
            }
            continue;
        }
        let phase = dev.u1[j].atan2(dev.u2[j]);
        match run_start {
            Some(_) => {
                let prev = theta[j - 1];
                theta[j] = prev + wrap(phase - prev);
            }
            None => {
                run_start = Some(j);
                theta[j] = match last {
                    Some((i, prev)) => {
                        let jump = wrap(phase - prev);
                        atoms.push(TorsionAtom {
                            s: 0.5 * (dev.s[i] + dev.s[j]),
                            jump,
                        });
                        prev + jump
                    }
                    None => phase,
                };
            }
        }
        last = Some((j, theta[j]));
    }
    if let Some(a) = run_start {
        finish_run(&theta, &mut tau, a, n);
    }
    atoms.retain(|a| a.jump != 0.0);
    Ok(CurveInvariants {
        s: dev.s.clone(),
        kappa,
        theta,
        tau,
        atoms,
    })
}

/// Piecewise-constant rod shape of a development: one element per grid
/// interval carrying the interval average of `u1`, `u2`, `v3`, with
/// `u3 = v1 = v2 = 0`.
pub fn development_to_shape(dev: &NormalDevelopment) -> Result<PiecewiseShape> {
    dev.validate()?;
    let mut nodes = vec![dev.s[0]];
    let mut elements = Vec::new();
    for j in 0..dev.len() - 1 {
        if dev.s[j + 1] == dev.s[j] {
            continue;
        }
        nodes.push(dev.s[j + 1]);
        elements.push(StrainVector::new(
            0.5 * (dev.u1[j] + dev.u1[j + 1]),
            0.5 * (dev.u2[j] + dev.u2[j + 1]),
            0.0,
            0.0,
            0.0,
            0.5 * (dev.v3[j] + dev.v3[j + 1]),
        ));
    }
    let offset = nodes[0];
    let nodes = nodes.into_iter().map(|s| s - offset).collect();
    PiecewiseShape::new(Partition::new(nodes)?, elements)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClosureResidual {
    pub position: f64,
    /// Present for smooth closure.
    pub tangent: Option<f64>,
}

impl ClosureResidual {
    pub fn max(&self) -> f64 {
        self.position.max(self.tangent.unwrap_or(0.0))
    }
}

/// Closure defect of a rod shape read as a framed curve: `|x(L) − x(0)|`,
/// and with `smooth` also `|t(L) − t(0)|`.
pub fn closure_of_shape(shape: &PiecewiseShape, smooth: bool) -> ClosureResidual {
    let u = shape.total_propagator();
    ClosureResidual {
        position: u.translation.norm(),
        tangent: smooth.then(|| (u.rotation.column(2) - V3::z()).norm()),
    }
}

pub fn closure_check(dev: &NormalDevelopment, smooth: bool) -> Result<ClosureResidual> {
    Ok(closure_of_shape(&development_to_shape(dev)?, smooth))
}
