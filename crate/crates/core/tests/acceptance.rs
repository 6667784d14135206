//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rodshape::curve::{
    bishop_frame, closure_check, default_seed, hasimoto_invariants, parallel_defect, rotate_about, solve_volterra,
    AnalyticCurve, BishopFrames, CurveSamples, NormalDevelopment, Quadrature, Segment, Stepper,
};
use rodshape::energy::{EnergyModel, GravityLoad, IntrinsicShape, MaterialParams};
use rodshape::relax::{
    constraint_jacobian, constraint_residual, gradient_flow, ClampingConstraint, FlowStatus, RelaxConfig,
};
use rodshape::scenarios::{twisted_loop_relaxation, two_arc_relaxation};
use rodshape::se3::{commutator, exp_se3, strain_to_algebra, AlgebraMatrix, Generator, StrainVector};
use rodshape::shape::{
    catalog_shape, reconstruct_nodes, CatalogParams, CrossSectionProfile, Partition, PiecewiseShape, Placement,
};

type V3 = Vector3<f64>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn levi_civita(i: usize, j: usize, k: usize) -> i32 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1,
        _ => 0,
    }
}

/// `[U_i,U_j] = −ε_ijk U_k`, `[V_i,U_j] = −ε_ijk V_k`, `[V_i,V_j] = 0` on the
/// 15 unordered pairs of distinct generators.
fn commutator_table() -> Outcome {
    use Generator::*;
    let u = [U1, U2, U3];
    let v = [V1, V2, V3];
    let predicted = |family: &[Generator; 3], i: usize, j: usize| {
        (0..3).fold(AlgebraMatrix::zero(), |acc, k| {
            acc + (-levi_civita(i, j, k) as f64) * family[k].matrix()
        })
    };
    let mut pairs = 0;
    let mut wrong = Vec::new();
    let mut check = |a: Generator, b: Generator, expected: AlgebraMatrix| {
        pairs += 1;
        let got = commutator(&a.matrix(), &b.matrix());
        let integral = got.0.iter().all(|x| x.fract() == 0.0);
        if got != expected || !integral {
            wrong.push(format!("[{a},{b}]"));
        }
    };
    for i in 0..3 {
        for j in i + 1..3 {
            check(u[i], u[j], predicted(&u, i, j));
            check(v[i], v[j], AlgebraMatrix::zero());
        }
        for j in 0..3 {
            check(v[i], u[j], predicted(&v, i, j));
        }
    }
    outcome(
        pairs == 15 && wrong.is_empty(),
        format!("{pairs} pairs, mismatches {wrong:?}"),
    )
}

/// Scaled-and-squared Taylor series of the 4x4 matrix.
fn series_exp(a: &Matrix4<f64>, terms: usize) -> Matrix4<f64> {
    let norm = a.amax() * 4.0;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut sum = Matrix4::identity();
    let mut term = Matrix4::identity();
    for n in 1..=terms {
        term = term * scaled / n as f64;
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

fn exponential_vs_series() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut ortho) = (0.0f64, 0.0f64);
    for trial in 0..1000 {
        let scale = if trial % 10 == 0 { 1e-7 } else { 1.0 };
        let s = StrainVector::new(
            scale * rng.random_range(-2.0..2.0),
            scale * rng.random_range(-2.0..2.0),
            scale * rng.random_range(-2.0..2.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.1..2.0),
        );
        let delta = rng.random_range(0.0..2.0);
        let p = exp_se3(&s, delta);
        let oracle = series_exp(&(strain_to_algebra(&s).0 * delta), 30);
        worst = worst.max((p.to_block_matrix() - oracle).amax());
        let (o, d) = p.orthogonality_defect();
        ortho = ortho.max(o).max(d);
    }
    outcome(
        worst < 1e-12 && ortho < 1e-12,
        format!("max |exp − series| {worst:.2e}, orthonormality defect {ortho:.2e}"),
    )
}

/// End placement of constant strain `s` over length `l` from the canonical
/// frame, integrated in closed form: the frame spins about the fixed axis `u`
/// at rate `|u|` and the base point moves with velocity `R(σ) v`.
fn screw_end(s: &StrainVector, l: f64) -> (V3, Matrix3<f64>) {
    let w = s.u.norm();
    if w == 0.0 {
        return (s.v * l, Matrix3::identity());
    }
    let k = s.u / w;
    let theta = w * l;
    let rot = Rotation3::from_axis_angle(&Unit::new_unchecked(k), theta).into_inner();
    let par = k * k.dot(&s.v);
    let perp = s.v - par;
    let x = par * l + perp * (theta.sin() / w) + k.cross(&perp) * ((1.0 - theta.cos()) / w);
    (x, rot)
}

fn analytic_endpoints() -> Outcome {
    let cases: Vec<(&str, CatalogParams)> = vec![
        ("arc", CatalogParams { c1: Some(1.3), c2: Some(-0.4), length: Some(2.5), ..Default::default() }),
        ("arc", CatalogParams { c1: Some(0.0), c2: Some(1.0), length: Some(PI), ..Default::default() }),
        ("helix", CatalogParams { length: Some(7.0), ..Default::default() }),
        ("helix", CatalogParams { c1: Some(-0.2), c2: Some(0.9), c3: Some(3.0), length: Some(4.0), ..Default::default() }),
        ("sheared-helix-u3", CatalogParams { length: Some(5.0), ..Default::default() }),
        ("sheared-loop-u2", CatalogParams { length: Some(5.0), ..Default::default() }),
        ("sheared-helix-u1", CatalogParams { length: Some(5.0), ..Default::default() }),
        ("twisted", CatalogParams::default()),
    ];
    let mut worst = 0.0f64;
    for (name, p) in &cases {
        let shape = catalog_shape(name, p).unwrap();
        let end = *reconstruct_nodes(&shape, &Placement::canonical()).unwrap().last().unwrap();
        let (x, r) = screw_end(&shape.elements()[0], shape.length());
        worst = worst.max((end.x - x).amax()).max((end.frame - r).amax());
    }
    // the half circle of unit curvature ends at (2, 0, 0) heading backwards
    let half = catalog_shape("arc", &cases[1].1).unwrap();
    let end = reconstruct_nodes(&half, &Placement::canonical()).unwrap()[1];
    worst = worst.max((end.x - V3::new(2.0, 0.0, 0.0)).amax());
    outcome(worst < 1e-10, format!("{} shapes, max endpoint error {worst:.2e}", cases.len()))
}

/// Frenet helix `(a cos φ, a sin φ, b φ)` moved so that it starts at the origin
/// with tangent `e3` and principal normal `e1`.
fn helix_point(a: f64, b: f64, s: f64) -> V3 {
    let c = a.hypot(b);
    let h = |phi: f64| V3::new(a * phi.cos(), a * phi.sin(), b * phi);
    let t0 = V3::new(0.0, a, b) / c;
    let n0 = V3::new(-1.0, 0.0, 0.0);
    let b0 = t0.cross(&n0);
    let d = h(s / c) - h(0.0);
    V3::new(n0.dot(&d), b0.dot(&d), t0.dot(&d))
}

fn helix_convergence() -> Outcome {
    let (a, b): (f64, f64) = (1.0, 0.5);
    let length = TAU * a.hypot(b);
    let exact = helix_point(a, b, length);
    let errors: Vec<f64> = [10, 20, 40, 80]
        .iter()
        .map(|&n| {
            let p = CatalogParams { radius: Some(a), pitch: Some(b), elements: Some(n), ..Default::default() };
            let shape = catalog_shape("helix-21", &p).unwrap();
            let end = reconstruct_nodes(&shape, &Placement::canonical()).unwrap()[n].x;
            (end - exact).norm()
        })
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    outcome(
        ratios.iter().all(|r| (1.7..=2.3).contains(r)),
        format!(
            "errors {}, ratios {ratios:.3?}",
            errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn random_shape(rng: &mut ChaCha8Rng, n: usize) -> PiecewiseShape {
    let mut nodes = vec![0.0];
    for _ in 0..n {
        let last = *nodes.last().unwrap();
        nodes.push(last + rng.random_range(0.05..0.3));
    }
    let elements = (0..n)
        .map(|_| {
            StrainVector::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
                rng.random_range(0.5..1.5),
            )
        })
        .collect();
    PiecewiseShape::new(Partition::new(nodes).unwrap(), elements).unwrap()
}

fn gradient_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-6;
    let (mut energy_err, mut residual_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let shape = random_shape(&mut rng, 12);
        let intr = IntrinsicShape { elements: random_shape(&mut rng, 12).elements().to_vec() };
        let material = MaterialParams {
            a: [rng.random_range(0.5..5.0), rng.random_range(0.5..5.0), rng.random_range(0.5..5.0)],
            b: [rng.random_range(1.0..50.0), rng.random_range(1.0..50.0), rng.random_range(1.0..50.0)],
            eps: 1e-3,
        };
        let gravity = GravityLoad {
            g: [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)],
            rho: rng.random_range(0.5..5.0),
            profile: CrossSectionProfile::Polygon {
                vertices: vec![[-0.1, -0.05], [0.15, -0.05], [0.15, 0.08], [-0.1, 0.08]],
            },
        };
        let model = EnergyModel::new(material, intr, Some(gravity));
        let axis = V3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0);
        let r0 = Placement::canonical()
            .rotated_about(&axis, rng.random_range(-PI..PI))
            .transformed(&Matrix3::identity(), &V3::new(0.3, -0.2, 0.5));
        let clamp = ClampingConstraint::clamped(r0, Placement::canonical());

        let grad = model.gradient(&shape, &r0).unwrap();
        let jac = constraint_jacobian(&shape, &clamp).unwrap();
        let x = shape.dofs();
        let mut fd_grad = vec![0.0; x.len()];
        let mut jac_diff = 0.0f64;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let (sp, sm) = (shape.with_dofs(&xp).unwrap(), shape.with_dofs(&xm).unwrap());
            fd_grad[i] = (model.energy(&sp, &r0).unwrap() - model.energy(&sm, &r0).unwrap()) / (2.0 * h);
            let fd_col = (constraint_residual(&sp, &clamp).unwrap() - constraint_residual(&sm, &clamp).unwrap()) / (2.0 * h);
            jac_diff = jac_diff.max((fd_col - jac.column(i)).norm_squared());
        }
        let diff: f64 = grad.iter().zip(&fd_grad).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        energy_err = energy_err.max(diff / norm);
        residual_err = residual_err.max(jac_diff.sqrt() / jac.norm() * (x.len() as f64).sqrt());
    }
    outcome(
        energy_err < 1e-6 && residual_err < 1e-6,
        format!("relative error: energy gradient {energy_err:.2e}, clamp Jacobian {residual_err:.2e}"),
    )
}

fn barrier_minimizer() -> Outcome {
    let eps = 1e-6;
    let material = MaterialParams { a: [1.0; 3], b: [1.0; 3], eps };
    let expected = 0.5 * (1.0 + (1.0 + 4.0 * eps).sqrt());
    let mut worst = 0.0f64;
    let mut statuses = Vec::new();
    for start in [0.4, 1.0, 1.7] {
        let shape = PiecewiseShape::uniform(1.0, 1, StrainVector::new(0.0, 0.0, 0.0, 0.0, 0.0, start)).unwrap();
        let model = EnergyModel::new(material, IntrinsicShape::uniform(1, StrainVector::straight()), None);
        let cfg = RelaxConfig { eta: 0.1, eta_max: Some(1.0), tol_grad: 1e-13, ..Default::default() };
        let result = gradient_flow(&shape, &model, &ClampingConstraint::free(Placement::canonical()), &cfg).unwrap();
        statuses.push(result.status);
        worst = worst.max((result.shape.elements()[0].v.z - expected).abs());
    }
    outcome(
        worst < 1e-10 && statuses.iter().all(|s| *s == FlowStatus::Converged),
        format!("|v3 − root| {worst:.2e} from three starts, statuses {statuses:?}"),
    )
}

fn uniform_shear() -> Outcome {
    let sc = two_arc_relaxation(8).unwrap();
    let result = gradient_flow(&sc.shape, &sc.model, &sc.clamp, &sc.config).unwrap();
    let el = result.shape.elements();
    let flex = el.iter().map(|e| e.u.amax()).fold(0.0, f64::max);
    let mut shear_var = 0.0f64;
    for c in 0..3 {
        let (lo, hi) = el.iter().fold((f64::MAX, f64::MIN), |(lo, hi), e| (lo.min(e.v[c]), hi.max(e.v[c])));
        shear_var = shear_var.max(hi - lo);
    }
    let residual = constraint_residual(&result.shape, &sc.clamp).unwrap().norm();
    outcome(
        flex < 1e-3 && shear_var < 1e-4 && residual < 1e-10,
        format!(
            "{:?} after {} iterations: max |u| {flex:.2e}, shear variation {shear_var:.2e}, residual {residual:.2e}",
            result.status, result.iterations
        ),
    )
}

fn interior_maxima(f: &[f64]) -> usize {
    f.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count()
}

fn twisted_loop() -> Outcome {
    let mut energies = Vec::new();
    let mut peaks = Vec::new();
    let mut statuses = Vec::new();
    for n in [8, 16, 24, 32] {
        let sc = twisted_loop_relaxation(n).unwrap();
        let result = gradient_flow(&sc.shape, &sc.model, &sc.clamp, &sc.config).unwrap();
        let e = sc.model.energy(&result.shape, &sc.clamp.r0).unwrap();
        let u3: Vec<f64> = result.shape.elements().iter().map(|e| e.u.z).collect();
        energies.push(e);
        peaks.push(interior_maxima(&u3));
        statuses.push(result.status);
    }
    let fine = &energies[1..];
    let (lo, hi) = fine.iter().fold((f64::MAX, f64::MIN), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
    let spread = (hi - lo) / lo;
    let locked = energies[0] > hi;
    outcome(
        spread < 0.05 && locked && peaks[1..].iter().all(|p| *p == 2),
        format!(
            "energies N=8,16,24,32 {energies:.4?}; spread of N≥16 {:.2}%; u3 maxima {peaks:?}; statuses {statuses:?}",
            100.0 * spread
        ),
    )
}

fn frames_for(curve: &AnalyticCurve) -> (CurveSamples, NormalDevelopment, BishopFrames) {
    let samples = CurveSamples::from_curve(curve, 1e-3).unwrap();
    let seed = default_seed(&samples.dx[0].normalize());
    let (dev, frames) = bishop_frame(&samples, &seed, Quadrature::Gregory, Stepper::Magnus4).unwrap();
    (samples, dev, frames)
}

fn bishop_frames() -> Outcome {
    let (a, b): (f64, f64) = (1.0, 0.5);
    let c2 = a * a + b * b;
    let curves = [
        ("line", AnalyticCurve::Line { length: 2.0, direction: [0.6, 0.0, 0.8] }),
        ("circle", AnalyticCurve::Circle { radius: 0.8, length: 4.0, speed: 1.0 }),
        ("helix", AnalyticCurve::Helix { radius: a, pitch: b, length: 7.0 }),
        ("line-arc-line", AnalyticCurve::LineArcLine { lead: 1.0, radius: 0.7, angle: 2.0, tail: 1.0 }),
        (
            "arc-line-arc",
            AnalyticCurve::Composite {
                segments: vec![
                    Segment::Arc { radius: 1.0, angle: FRAC_PI_2, bank: 0.0 },
                    Segment::Line { length: 1.0 },
                    Segment::Arc { radius: 0.5, angle: FRAC_PI_2, bank: FRAC_PI_2 },
                ],
            },
        ),
    ];
    let (mut defect, mut roundtrip, mut invariant_err, mut jump, mut step_ratio) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (name, curve) in &curves {
        let (samples, dev, frames) = frames_for(curve);
        defect = defect.max(parallel_defect(&frames));
        for (x, y) in samples.x.iter().zip(&frames.x) {
            roundtrip = roundtrip.max((x - y).norm());
        }
        if *name == "helix" {
            let inv = hasimoto_invariants(&dev, 1e-10).unwrap();
            for j in 0..inv.s.len() {
                invariant_err = invariant_err.max((inv.kappa[j] - a / c2).abs()).max((inv.tau[j] + b / c2).abs());
            }
        }
        // frames are continuous: equal one-sided limits at junctions, and
        // steps no larger than curvature times spacing elsewhere
        let kmax = dev.u1.iter().zip(&dev.u2).map(|(p, q)| p.hypot(*q)).fold(0.0, f64::max);
        for j in 1..frames.s.len() {
            let h = frames.s[j] - frames.s[j - 1];
            let d = (frames.d1[j] - frames.d1[j - 1]).norm().max((frames.d2[j] - frames.d2[j - 1]).norm());
            if h == 0.0 {
                jump = jump.max(d);
            } else if kmax > 0.0 {
                step_ratio = step_ratio.max(d / (kmax * h));
            } else {
                jump = jump.max(d);
            }
        }
    }
    outcome(
        defect < 1e-8 && roundtrip < 1e-8 && invariant_err < 1e-6 && jump < 1e-10 && step_ratio <= 1.0 + 1e-6,
        format!(
            "|d1'·d2| {defect:.2e}, roundtrip {roundtrip:.2e}, helix κ/τ error {invariant_err:.2e}, junction jump {jump:.2e}, step/κh {step_ratio:.4}"
        ),
    )
}

fn closure() -> Outcome {
    let residual = |length: f64, smooth: bool| {
        let curve = AnalyticCurve::Circle { radius: 1.0, length, speed: 1.0 };
        let samples = CurveSamples::from_curve(&curve, 1e-3).unwrap();
        let seed = default_seed(&samples.dx[0].normalize());
        let sol = solve_volterra(&samples, &seed, Quadrature::Gregory).unwrap();
        closure_check(&sol.development, smooth).unwrap()
    };
    let full = residual(TAU, true).max();
    let half = residual(PI, false).position;
    outcome(
        full < 1e-10 && (half - 2.0).abs() < 1e-10,
        format!("unit circle {full:.2e}, half circle {half:.12}"),
    )
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

fn seed_rotation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let curves = [
        AnalyticCurve::Helix { radius: 1.0, pitch: 0.5, length: 6.0 },
        AnalyticCurve::LineArcLine { lead: 0.5, radius: 0.7, angle: 2.0, tail: 0.5 },
    ];
    let (mut dk, mut dt, mut shift) = (0.0f64, 0.0f64, 0.0f64);
    for curve in &curves {
        let samples = CurveSamples::from_curve(curve, 1e-3).unwrap();
        let t0 = samples.dx[0].normalize();
        let seed = default_seed(&t0);
        let invariants = |d: &V3| {
            let sol = solve_volterra(&samples, d, Quadrature::Gregory).unwrap();
            hasimoto_invariants(&sol.development, 1e-10).unwrap()
        };
        let base = invariants(&seed);
        for _ in 0..5 {
            let phi = rng.random_range(-PI..PI);
            let turned = invariants(&rotate_about(&seed, &t0, phi));
            for j in 0..base.s.len() {
                dk = dk.max((base.kappa[j] - turned.kappa[j]).abs());
                dt = dt.max((base.tau[j] - turned.tau[j]).abs());
                if base.kappa[j] > 0.0 {
                    shift = shift.max(wrap(turned.theta[j] - base.theta[j] - phi).abs());
                }
            }
        }
    }
    outcome(
        dk < 1e-10 && dt < 1e-10 && shift < 1e-10,
        format!("Δκ {dk:.2e}, Δτ {dt:.2e}, deviation of θ shift from the seed angle {shift:.2e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("generator commutator table", commutator_table),
        ("exponential against 30-term series", exponential_vs_series),
        ("arc and helix endpoints in closed form", analytic_endpoints),
        ("first-order helix convergence", helix_convergence),
        ("energy and clamp gradients against finite differences", gradient_fidelity),
        ("barrier minimizer stretch", barrier_minimizer),
        ("two-arc relaxation to uniform shear", uniform_shear),
        ("twisted loop refinement study", twisted_loop),
        ("Bishop frames on line, circle, helix and composites", bishop_frames),
        ("closure of circle and half circle", closure),
        ("seed rotation invariance", seed_rotation),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} {:>2} {name}: {} ({secs:.2} s)", k + 1, result.detail);
        if !result.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
