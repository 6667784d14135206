//! Clamping constraints and the manifold-projected gradient flow.

use nalgebra::{DMatrix, DVector, SVector};
use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::se3::{dexp_se3_all, Propagator};
use crate::shape::{reconstruct_nodes, PiecewiseShape, Placement};

/// Which end conditions are imposed besides the initial placement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClampMode {
    /// Only `R0` is prescribed.
    FreeEnd,
    /// The terminal placement must equal `target`.
    Clamped { target: Placement },
    /// The terminal placement must equal `R0`. The total twist is carried by
    /// the initial shape; it is recorded here for bookkeeping.
    ClosedLoop { total_twist: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClampingConstraint {
    pub r0: Placement,
    pub mode: ClampMode,
}

impl ClampingConstraint {
    pub fn free(r0: Placement) -> Self {
        Self {
            r0,
            mode: ClampMode::FreeEnd,
        }
    }

    pub fn clamped(r0: Placement, target: Placement) -> Self {
        Self {
            r0,
            mode: ClampMode::Clamped { target },
        }
    }

    pub fn closed_loop(r0: Placement, total_twist: f64) -> Self {
        Self {
            r0,
            mode: ClampMode::ClosedLoop { total_twist },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.r0.validate(crate::shape::FRAME_TOLERANCE)?;
        if let ClampMode::Clamped { target } = &self.mode {
            target.validate(crate::shape::FRAME_TOLERANCE)?;
        }
        Ok(())
    }

    /// Prescribed terminal placement, if any.
    pub fn terminal(&self) -> Option<Placement> {
        match self.mode {
            ClampMode::FreeEnd => None,
            ClampMode::Clamped { target } => Some(target),
            ClampMode::ClosedLoop { .. } => Some(self.r0),
        }
    }

    pub fn is_clamped(&self) -> bool {
        self.terminal().is_some()
    }

    fn require_terminal(&self) -> Result<Placement> {
        self.terminal()
            .ok_or_else(|| Error::invalid("a free-end clamp has no terminal constraint"))
    }
}

/// Degrees of freedom the flow and the projection may change.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMask {
    free: Vec<bool>,
}

impl DofMask {
    pub fn all(elements: usize) -> Self {
        Self {
            free: vec![true; 6 * elements],
        }
    }

    /// Freezes `v1, v2, v3` of every element (unshearable, inextensible).
    pub fn kirchhoff(elements: usize) -> Self {
        Self {
            free: (0..6 * elements).map(|i| i % 6 < 3).collect(),
        }
    }

    pub fn from_slots(free: Vec<bool>) -> Self {
        Self { free }
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn is_free(&self, slot: usize) -> bool {
        self.free[slot]
    }

    pub fn apply(&self, v: &mut [f64]) {
        for (x, free) in v.iter_mut().zip(&self.free) {
            if !free {
                *x = 0.0;
            }
        }
    }

    fn apply_columns(&self, j: &mut DMatrix<f64>) {
        for (c, free) in self.free.iter().enumerate() {
            if !free {
                j.column_mut(c).fill(0.0);
            }
        }
    }

    fn check(&self, shape: &PiecewiseShape) -> Result<()> {
        if self.free.len() != 6 * shape.len() {
            return Err(Error::invalid("dof mask does not match the shape"));
        }
        Ok(())
    }
}

/// `(Π U_k)·R0 − R_L` flattened as `(x, d3, d1, d2)`.
pub fn constraint_residual(shape: &PiecewiseShape, clamp: &ClampingConstraint) -> Result<SVector<f64, 12>> {
    let target = clamp.require_terminal()?;
    clamp.validate()?;
    let end = shape.total_propagator().apply(&clamp.r0);
    Ok(SVector::from(end.to_flat12()) - SVector::from(target.to_flat12()))
}

pub fn constraint_jacobian(shape: &PiecewiseShape, clamp: &ClampingConstraint) -> Result<DMatrix<f64>> {
    constraint_jacobian_with(Exec::default(), shape, clamp)
}

/// Exact 12 x 6N Jacobian of [`constraint_residual`].
///
/// The end placement is `node_j ∘ U_j ∘ tail_j`, so perturbing element `j`
/// only needs the prefix node, the derivative of `U_j`, and the suffix product.
pub fn constraint_jacobian_with(
    exec: Exec,
    shape: &PiecewiseShape,
    clamp: &ClampingConstraint,
) -> Result<DMatrix<f64>> {
    clamp.require_terminal()?;
    let n = shape.len();
    let nodes = reconstruct_nodes(shape, &clamp.r0)?;
    let props = shape.propagators();
    let mut tails = vec![Propagator::identity(); n];
    for j in (0..n.saturating_sub(1)).rev() {
        tails[j] = props[j + 1].then(&tails[j + 1]);
    }
    let lengths = shape.partition().element_lengths();
    let el = shape.elements();
    let blocks = exec.map(n, |j| {
        let q = nodes[j].frame;
        let tail = &tails[j];
        dexp_se3_all(&el[j], lengths[j]).map(|d| {
            let dx = q * (d.translation + d.rotation * tail.translation);
            let dq = q * d.rotation * tail.rotation;
            Placement::from_parts_unchecked(dx, dq).to_flat12()
        })
    });
    let mut jac = DMatrix::zeros(12, 6 * n);
    for (j, cols) in blocks.iter().enumerate() {
        for (i, col) in cols.iter().enumerate() {
            jac.column_mut(6 * j + i).copy_from_slice(col);
        }
    }
    Ok(jac)
}

/// Minimum-norm solution of `J y = b` with singular values below
/// `1e-10·σ_max` discarded.
/// Factors `jᵀ = U Σ Vᵀ`; the SVD of the tall transpose is markedly more
/// accurate in nalgebra than that of the wide Jacobian.
fn row_space(j: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = j.transpose().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = 1e-10 * smax;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| smax > 0.0 && svd.singular_values[k] > cutoff)
        .collect();
    let u = svd.u.expect("left factor requested");
    let v_t = svd.v_t.expect("right factor requested");
    let u_r = DMatrix::from_fn(u.nrows(), keep.len(), |r, c| u[(r, keep[c])]);
    let s_r = DVector::from_fn(keep.len(), |k, _| svd.singular_values[keep[k]]);
    let v_r = DMatrix::from_fn(v_t.ncols(), keep.len(), |r, c| v_t[(keep[c], r)]);
    (u_r, s_r, v_r)
}

fn min_norm_solve(j: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (u, s, v) = row_space(j);
    let coeffs = (v.transpose() * b).component_div(&s);
    u * coeffs
}

/// Removes the component of `g` normal to the constraint manifold.
pub fn tangent_projection(j: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let g = DVector::from_column_slice(g);
    let (u, _, _) = row_space(j);
    let normal = &u * (u.transpose() * &g);
    (g - normal).as_slice().to_vec()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub mask: Option<DofMask>,
    pub exec: Exec,
}

impl ProjectionOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            max_iters: 50,
            mask: None,
            exec: Exec::default(),
        }
    }
}

pub fn project_to_manifold(
    shape: &PiecewiseShape,
    clamp: &ClampingConstraint,
    tol: f64,
) -> Result<PiecewiseShape> {
    project_to_manifold_with(shape, clamp, &ProjectionOptions::new(tol))
}

/// Nearest feasible shape in the Euclidean strain norm.
///
/// Each iteration linearizes the constraint at the current iterate `x` and
/// solves `min ‖y − x0‖` subject to `r(x) + J(y − x) = 0`, so at convergence
/// the correction `x − x0` lies in the row space of `J`, the first-order
/// condition for the closest point. Frozen slots get zero Jacobian columns and
/// therefore never move.
pub fn project_to_manifold_with(
    shape: &PiecewiseShape,
    clamp: &ClampingConstraint,
    opts: &ProjectionOptions,
) -> Result<PiecewiseShape> {
    project(shape, clamp, opts, false)
}

fn project(
    shape: &PiecewiseShape,
    clamp: &ClampingConstraint,
    opts: &ProjectionOptions,
    tighten: bool,
) -> Result<PiecewiseShape> {
    if let Some(mask) = &opts.mask {
        mask.check(shape)?;
    }
    let r = constraint_residual(shape, clamp)?;
    let mut norm = r.norm();
    if !norm.is_finite() {
        return Err(Error::invalid("constraint residual is not finite"));
    }
    if norm < opts.tol {
        return Ok(if tighten {
            polish(shape, shape.clone(), norm, clamp, opts)
        } else {
            shape.clone()
        });
    }
    let x0 = DVector::from_vec(shape.dofs());
    let mut x = x0.clone();
    let mut current = shape.clone();
    let mut r = r;
    for _ in 0..opts.max_iters {
        let mut j = constraint_jacobian_with(opts.exec, &current, clamp)?;
        if let Some(mask) = &opts.mask {
            mask.apply_columns(&mut j);
        }
        let rhs = &j * (&x - &x0) - DVector::from_column_slice(r.as_slice());
        let mut delta = min_norm_solve(&j, &rhs);
        if let Some(mask) = &opts.mask {
            mask.apply(delta.as_mut_slice());
        }
        x = &x0 + delta;
        current = shape.with_dofs(x.as_slice())?;
        r = constraint_residual(&current, clamp)?;
        norm = r.norm();
        if !norm.is_finite() {
            break;
        }
        if norm < opts.tol {
            return Ok(polish(shape, current, norm, clamp, opts));
        }
    }
    Err(Error::ProjectionFailed {
        iterations: opts.max_iters,
        residual: norm,
    })
}

/// Newton converges quadratically, so a couple of extra iterations past the
/// tolerance push the residual to rounding level. Keeping the iterates on the
/// manifold that tightly stops the constraint forces from polluting the energy
/// comparisons of the flow.
fn polish(
    shape: &PiecewiseShape,
    mut best: PiecewiseShape,
    mut best_norm: f64,
    clamp: &ClampingConstraint,
    opts: &ProjectionOptions,
) -> PiecewiseShape {
    let x0 = DVector::from_vec(shape.dofs());
    for _ in 0..2 {
        let Ok(mut j) = constraint_jacobian_with(opts.exec, &best, clamp) else {
            break;
        };
        if let Some(mask) = &opts.mask {
            mask.apply_columns(&mut j);
        }
        let Ok(r) = constraint_residual(&best, clamp) else {
            break;
        };
        let x = DVector::from_vec(best.dofs());
        let rhs = &j * (&x - &x0) - DVector::from_column_slice(r.as_slice());
        let mut delta = min_norm_solve(&j, &rhs);
        if let Some(mask) = &opts.mask {
            mask.apply(delta.as_mut_slice());
        }
        let Ok(next) = shape.with_dofs((&x0 + delta).as_slice()) else {
            break;
        };
        let Ok(norm) = constraint_residual(&next, clamp).map(|r| r.norm()) else {
            break;
        };
        if !(norm < 0.5 * best_norm) {
            break;
        }
        best = next;
        best_norm = norm;
    }
    best
}

/// Parameters of the gradient flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxConfig {
    /// Initial (and maximal, unless `eta_max` is set) step size.
    pub eta: f64,
    pub max_iters: usize,
    pub tol_proj: f64,
    pub tol_grad: f64,
    /// Step reduction factor for backtracking, in (0, 1).
    pub backtrack: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step growth factor after an accepted step, at least 1.
    pub grow: f64,
    pub eta_max: Option<f64>,
    pub min_eta: f64,
    pub max_proj_iters: usize,
    /// Freeze `v1, v2, v3` (Kirchhoff rod).
    pub kirchhoff: bool,
    /// Keep a copy of the shape every this many iterations.
    pub snapshot_every: Option<usize>,
    pub metric: FlowMetric,
}

/// Inner product defining the descent direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMetric {
    /// Plain gradient in strain coordinates.
    #[default]
    Euclidean,
    /// Gradient scaled by the inverse diagonal stiffness `δs_k·(a_i, b_i)`.
    /// Same equilibria, but stiff shear and stretch modes no longer limit the
    /// step size.
    Stiffness,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self {
            eta: 1e-2,
            max_iters: 10_000,
            tol_proj: 1e-10,
            tol_grad: 1e-8,
            backtrack: 0.5,
            armijo: 1e-4,
            grow: 2.0,
            eta_max: None,
            min_eta: 1e-16,
            max_proj_iters: 50,
            kirchhoff: false,
            snapshot_every: None,
            metric: FlowMetric::Euclidean,
        }
    }
}

impl RelaxConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.eta, self.tol_proj, self.tol_grad, self.armijo, self.min_eta];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("eta, tolerances, armijo and min_eta must be positive"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::invalid("backtrack factor must lie in (0, 1)"));
        }
        if !(self.grow >= 1.0 && self.grow.is_finite()) {
            return Err(Error::invalid("grow factor must be at least 1"));
        }
        if let Some(m) = self.eta_max {
            if !(m.is_finite() && m >= self.eta) {
                return Err(Error::invalid("eta_max must be at least eta"));
            }
        }
        if self.max_proj_iters == 0 {
            return Err(Error::invalid("max_proj_iters must be positive"));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::invalid("snapshot_every must be positive"));
        }
        Ok(())
    }

    pub fn mask(&self, elements: usize) -> DofMask {
        if self.kirchhoff {
            DofMask::kirchhoff(elements)
        } else {
            DofMask::all(elements)
        }
    }

    pub fn projection(&self, elements: usize) -> ProjectionOptions {
        ProjectionOptions {
            tol: self.tol_proj,
            max_iters: self.max_proj_iters,
            mask: Some(self.mask(elements)),
            exec: Exec::default(),
        }
    }
}

/// State at the start of one iteration (the last row is the final state).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub residual_norm: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowStatus {
    /// Projected gradient fell below `tol_grad`.
    Converged,
    MaxIterations,
    /// No step size down to `min_eta` gave sufficient decrease: the energy is
    /// flat to rounding along the descent direction.
    Stalled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelaxResult {
    pub shape: PiecewiseShape,
    pub trace: Vec<TraceRow>,
    pub status: FlowStatus,
    pub iterations: usize,
    pub snapshots: Vec<(usize, PiecewiseShape)>,
}

impl RelaxResult {
    pub fn final_row(&self) -> &TraceRow {
        self.trace.last().expect("trace always holds the final state")
    }
}

/// Energy, residual and descent data at one iterate.
struct Evaluation {
    energy: f64,
    residual: f64,
    /// Step direction (the flow moves along `−direction`).
    direction: Vec<f64>,
    /// `gradient · direction`, the first-order decrease per unit step.
    slope: f64,
    /// Norm of the Euclidean gradient projected onto the constraint tangent space.
    grad_norm: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn stiffness_scaling(shape: &PiecewiseShape, model: &EnergyModel) -> Vec<f64> {
    let m = &model.material;
    let rigidity = [m.a[0], m.a[1], m.a[2], m.b[0], m.b[1], m.b[2]];
    shape
        .partition()
        .element_lengths()
        .iter()
        .flat_map(|ds| rigidity.map(|r| 1.0 / (r * ds).sqrt()))
        .collect()
}

fn evaluate(
    shape: &PiecewiseShape,
    model: &EnergyModel,
    clamp: &ClampingConstraint,
    mask: &DofMask,
    metric: FlowMetric,
) -> Result<Evaluation> {
    let energy = model.energy(shape, &clamp.r0)?;
    let mut g = model.gradient(shape, &clamp.r0)?;
    mask.apply(&mut g);
    let (residual, jac) = if clamp.is_clamped() {
        let mut j = constraint_jacobian_with(model.exec, shape, clamp)?;
        mask.apply_columns(&mut j);
        (constraint_residual(shape, clamp)?.norm(), Some(j))
    } else {
        (0.0, None)
    };
    let project = |j: &Option<DMatrix<f64>>, v: &[f64]| {
        let mut out = match j {
            Some(j) => tangent_projection(j, v),
            None => v.to_vec(),
        };
        mask.apply(&mut out);
        out
    };
    let tangent = project(&jac, &g);
    let grad_norm = norm(&tangent);
    let (direction, slope) = match metric {
        FlowMetric::Euclidean => (tangent, grad_norm * grad_norm),
        FlowMetric::Stiffness => {
            let scale = stiffness_scaling(shape, model);
            let gy: Vec<f64> = g.iter().zip(&scale).map(|(a, s)| a * s).collect();
            let jy = jac.map(|mut j| {
                for (c, s) in scale.iter().enumerate() {
                    j.column_mut(c).scale_mut(*s);
                }
                j
            });
            let dy = project(&jy, &gy);
            let slope = dy.iter().map(|x| x * x).sum();
            (dy.iter().zip(&scale).map(|(a, s)| a * s).collect(), slope)
        }
    };
    Ok(Evaluation {
        energy,
        residual,
        direction,
        slope,
        grad_norm,
    })
}

/// Minimizes `model` over shapes satisfying `clamp`.
///
/// Every iteration steps along the negative gradient projected onto the
/// tangent space of the constraint set, restores feasibility with
/// [`project_to_manifold_with`], and backtracks until the step keeps
/// `v3 > 0`, projects successfully, and satisfies the Armijo condition.
pub fn gradient_flow(
    shape0: &PiecewiseShape,
    model: &EnergyModel,
    clamp: &ClampingConstraint,
    cfg: &RelaxConfig,
) -> Result<RelaxResult> {
    cfg.validate()?;
    clamp.validate()?;
    shape0.require_physical()?;
    let n = shape0.len();
    let mask = cfg.mask(n);
    let projection = cfg.projection(n);
    if clamp.is_clamped() {
        let r = constraint_residual(shape0, clamp)?.norm();
        if !(r < cfg.tol_proj) {
            return Err(Error::invalid(format!(
                "initial shape violates the clamp (residual {r:.3e}); project it first"
            )));
        }
    }

    let eta_max = cfg.eta_max.unwrap_or(cfg.eta);
    let mut eta = cfg.eta;
    let mut shape = shape0.clone();
    let mut eval = evaluate(&shape, model, clamp, &mask, cfg.metric)?;
    let mut trace = Vec::new();
    let mut snapshots = Vec::new();
    let mut status = FlowStatus::MaxIterations;
    let mut iteration = 0;

    while iteration < cfg.max_iters {
        if let Some(every) = cfg.snapshot_every {
            if iteration % every == 0 {
                snapshots.push((iteration, shape.clone()));
            }
        }
        trace.push(TraceRow {
            iteration,
            energy: eval.energy,
            residual_norm: eval.residual,
            grad_norm: eval.grad_norm,
            step: eta,
        });
        if eval.grad_norm < cfg.tol_grad {
            status = FlowStatus::Converged;
            break;
        }

        let x = shape.dofs();
        let decrease = cfg.armijo * eval.slope;
        let mut accepted = None;
        let mut last_reason = "no admissible step";
        while eta >= cfg.min_eta {
            let trial: Vec<f64> = x.iter().zip(&eval.direction).map(|(a, d)| a - eta * d).collect();
            let mut candidate = shape.with_dofs(&trial)?;
            if !candidate.is_physical() {
                last_reason = "every trial step collapsed an element (v3 <= 0)";
                eta *= cfg.backtrack;
                continue;
            }
            if clamp.is_clamped() {
                match project(&candidate, clamp, &projection, true) {
                    Ok(p) if p.is_physical() => candidate = p,
                    Ok(_) => {
                        last_reason = "projection collapsed an element (v3 <= 0)";
                        eta *= cfg.backtrack;
                        continue;
                    }
                    Err(e) if e.is_numerical() => {
                        last_reason = "projection onto the clamp did not converge";
                        eta *= cfg.backtrack;
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            let energy = model.energy(&candidate, &clamp.r0)?;
            if energy <= eval.energy - eta * decrease {
                accepted = Some(candidate);
                break;
            }
            last_reason = "";
            eta *= cfg.backtrack;
        }
        let Some(next) = accepted else {
            if last_reason.is_empty() {
                status = FlowStatus::Stalled;
                break;
            }
            return Err(Error::FlowFailed {
                iteration,
                reason: last_reason.to_string(),
            });
        };
        shape = next;
        eval = evaluate(&shape, model, clamp, &mask, cfg.metric)?;
        eta = (eta * cfg.grow).min(eta_max);
        iteration += 1;
    }

    if status == FlowStatus::MaxIterations {
        trace.push(TraceRow {
            iteration,
            energy: eval.energy,
            residual_norm: eval.residual,
            grad_norm: eval.grad_norm,
            step: eta,
        });
    } else if status == FlowStatus::Stalled {
        if let Some(last) = trace.last_mut() {
            last.step = eta;
        }
    }
    Ok(RelaxResult {
        shape,
        trace,
        status,
        iterations: iteration,
        snapshots,
    })
}
