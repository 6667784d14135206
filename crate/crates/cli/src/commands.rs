use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Args;
use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use rodshape::curve::{
    bishop_frame, closure_check, closure_of_shape, default_seed, hasimoto_invariants, parallel_defect, solve_volterra,
    AnalyticCurve, ClosureResidual, CurveSamples, Quadrature, Stepper,
};
use rodshape::io::{
    read_curve_csv, read_development_csv, read_json, read_shape, write_development_csv, write_frames_csv,
    write_invariants_csv, write_json, write_nodes_csv, write_trace_csv, ClampSpec, MaterialSource, RunConfig,
    ShapeFile, ShapeSource,
};
use rodshape::relax::{constraint_residual, gradient_flow, project_to_manifold_with, ClampMode, FlowStatus};
use rodshape::shape::{catalog_shape, reconstruct_nodes, render_mesh, CrossSectionProfile, PiecewiseShape, Placement};

use crate::config::{absolute, merge, prune, ConfigFile};
use crate::manifest::Run;
use crate::{diagnostic, Failure};

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 2,
            kind: "io",
            message: e.to_string(),
        }
    }
}

/// Overrides for catalog shape parameters.
#[derive(Args, Serialize, Default)]
pub struct CatalogFlags {
    #[arg(long)]
    length: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c3: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    v1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    v2: Option<f64>,
    #[arg(long)]
    v3: Option<f64>,
    /// Total twist.
    #[arg(long, allow_negative_numbers = true)]
    twist: Option<f64>,
    /// Helix radius.
    #[arg(long)]
    radius: Option<f64>,
    /// Helix rise per radian.
    #[arg(long, allow_negative_numbers = true)]
    pitch: Option<f64>,
    #[arg(long)]
    elements: Option<usize>,
    /// left-endpoint or midpoint.
    #[arg(long)]
    sampling: Option<String>,
}

/// A JSON document given by path or inline in a config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Doc<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Doc<T> {
    fn load(&self, base: &Path, run: &mut Run) -> Result<T, Failure> {
        match self {
            Doc::Path(p) => {
                let p = base.join(p);
                run.input(&p);
                Ok(read_json(&p)?)
            }
            Doc::Inline(v) => Ok(v.clone()),
        }
    }
}

fn shape_flag(source: Option<&str>, params: &CatalogFlags) -> Value {
    let params = serde_json::to_value(params).unwrap_or(Value::Null);
    match source {
        Some(s) if s.ends_with(".json") || Path::new(s).is_file() => {
            json!(absolute(&Some(PathBuf::from(s))))
        }
        Some(name) => json!({"catalog": name, "params": params}),
        None => json!({"params": params}),
    }
}

fn path_flag(p: &Option<PathBuf>) -> Value {
    json!(absolute(p))
}

fn load_shape(
    source: &ShapeSource,
    base: &Path,
    run: &mut Run,
) -> Result<(PiecewiseShape, Option<CrossSectionProfile>), Failure> {
    match source {
        ShapeSource::Path(p) => {
            let p = base.join(p);
            run.input(&p);
            Ok(read_shape(&p)?)
        }
        ShapeSource::Catalog(c) => Ok((catalog_shape(&c.catalog, &c.params)?, None)),
        ShapeSource::Inline(f) => Ok((f.to_shape()?, f.profile.clone())),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn require<T>(value: Option<T>, what: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::validation(format!("missing {what}")))
}

#[derive(Args)]
pub struct BuildArgs {
    /// Catalog name or shape JSON file.
    source: Option<String>,
    #[command(flatten)]
    params: CatalogFlags,
    /// Cross-section profile JSON stored with the shape.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Placement JSON `{x, d1, d2, d3}` of the first cross section.
    #[arg(long)]
    r0: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildOptions {
    shape: Option<ShapeSource>,
    #[serde(default)]
    profile: Option<Doc<CrossSectionProfile>>,
    #[serde(default)]
    r0: Option<Doc<Placement>>,
}

pub fn build(args: BuildArgs, config: Option<&ConfigFile>, run: &mut Run) -> Result<(), Failure> {
    let flags = json!({
        "shape": shape_flag(args.source.as_deref(), &args.params),
        "profile": path_flag(&args.profile),
        "r0": path_flag(&args.r0),
    });
    let (opts, _, base): (BuildOptions, _, _) = merge(flags, config)?;
    let (shape, own_profile) = load_shape(&require(opts.shape, "shape name or file")?, &base, run)?;
    let profile = match &opts.profile {
        Some(p) => Some(p.load(&base, run)?),
        None => own_profile,
    };
    if let Some(p) = &profile {
        p.validate()?;
    }
    let r0 = match &opts.r0 {
        Some(r) => r.load(&base, run)?,
        None => Placement::canonical(),
    };
    let file = ShapeFile::from_shape(&shape, profile.clone());
    run.config = json!({"command": "build", "shape": file, "r0": r0});

    let nodes = reconstruct_nodes(&shape, &r0)?;
    write_json(&run.output("shape.json")?, &file)?;
    write_nodes_csv(create(&run.output("nodes.csv")?)?, &shape, &nodes)?;
    run.set("elements", shape.len());
    run.set("length", shape.length());
    run.set("end", nodes.last());
    Ok(())
}

#[derive(Args)]
pub struct RenderArgs {
    /// Catalog name or shape JSON file.
    source: Option<String>,
    #[command(flatten)]
    params: CatalogFlags,
    /// Cross-section profile JSON; defaults to the profile stored in the shape file.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Placement JSON of the first cross section.
    #[arg(long)]
    r0: Option<PathBuf>,
    /// Rings per element.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RenderOptions {
    shape: Option<ShapeSource>,
    #[serde(default)]
    profile: Option<Doc<CrossSectionProfile>>,
    #[serde(default)]
    r0: Option<Doc<Placement>>,
    #[serde(default = "default_samples")]
    samples: usize,
}

fn default_samples() -> usize {
    8
}

pub fn render(args: RenderArgs, config: Option<&ConfigFile>, run: &mut Run) -> Result<(), Failure> {
    let flags = json!({
        "shape": shape_flag(args.source.as_deref(), &args.params),
        "profile": path_flag(&args.profile),
        "r0": path_flag(&args.r0),
        "samples": args.samples,
    });
    let (opts, _, base): (RenderOptions, _, _) = merge(flags, config)?;
    let (shape, own_profile) = load_shape(&require(opts.shape, "shape name or file")?, &base, run)?;
    let profile = match &opts.profile {
        Some(p) => p.load(&base, run)?,
        None => own_profile.ok_or_else(|| Failure::validation("no cross-section profile given"))?,
    };
    let r0 = match &opts.r0 {
        Some(r) => r.load(&base, run)?,
        None => Placement::canonical(),
    };
    run.config = json!({
        "command": "render",
        "shape": ShapeFile::from_shape(&shape, None),
        "profile": profile,
        "r0": r0,
        "samples": opts.samples,
    });
    let mesh = render_mesh(&shape, &r0, &profile, opts.samples)?;
    mesh.write_obj(create(&run.output("mesh.obj")?)?)?;
    let nodes = reconstruct_nodes(&shape, &r0)?;
    write_nodes_csv(create(&run.output("nodes.csv")?)?, &shape, &nodes)?;
    run.set("vertices", mesh.vertices.len());
    run.set("faces", mesh.faces.len());
    run.set("signed_volume", mesh.signed_volume());
    Ok(())
}

#[derive(Args)]
pub struct RelaxArgs {
    /// Catalog name or shape JSON file of the initial shape.
    #[arg(long)]
    shape: Option<String>,
    #[command(flatten)]
    params: CatalogFlags,
    /// Material JSON `{a, b, eps, intrinsic, gravity}`.
    #[arg(long)]
    material: Option<PathBuf>,
    /// free-end, clamped or closed-loop.
    #[arg(long)]
    clamp: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    total_twist: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    eta_max: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol_proj: Option<f64>,
    #[arg(long)]
    tol_grad: Option<f64>,
    /// euclidean or stiffness.
    #[arg(long)]
    metric: Option<String>,
    /// Freeze shear and stretch.
    #[arg(long)]
    kirchhoff: bool,
    /// Write the shape every this many iterations.
    #[arg(long)]
    snapshot_every: Option<usize>,
}

pub fn relax(args: RelaxArgs, config: Option<&ConfigFile>, run: &mut Run) -> Result<(), Failure> {
    let mut flags = json!({
        "shape": shape_flag(args.shape.as_deref(), &args.params),
        "material": path_flag(&args.material),
        "clamp": {"mode": args.clamp, "total_twist": args.total_twist},
        "flow": {
            "eta": args.eta,
            "eta_max": args.eta_max,
            "max_iters": args.max_iters,
            "tol_proj": args.tol_proj,
            "tol_grad": args.tol_grad,
            "metric": args.metric,
            "kirchhoff": args.kirchhoff.then_some(true),
            "snapshot_every": args.snapshot_every,
        },
    });
    if config.is_some_and(|c| c.value.get("clamp").is_some()) {
        flags["clamp"] = Value::Null;
    }
    let (cfg, _, base): (RunConfig, _, _) = merge(flags, config)?;
    if let ShapeSource::Path(p) = &cfg.shape {
        run.input(&base.join(p));
    }
    if let MaterialSource::Path(p) = &cfg.material {
        run.input(&base.join(p));
    }
    let resolved = cfg.resolve(&base)?;
    let clamp = resolved.clamp;
    let flow = resolved.flow;
    let clamp_spec = match clamp.mode {
        ClampMode::FreeEnd => ClampSpec::FreeEnd { r0: Some(clamp.r0) },
        ClampMode::Clamped { target } => ClampSpec::Clamped {
            r0: Some(clamp.r0),
            target: Some(target),
        },
        ClampMode::ClosedLoop { total_twist } => ClampSpec::ClosedLoop {
            r0: Some(clamp.r0),
            total_twist,
        },
    };
    run.config = json!({
        "command": "relax",
        "shape": ShapeFile::from_shape(&resolved.shape, None),
        "material": resolved.material,
        "clamp": clamp_spec,
        "flow": flow,
    });

    let mut start = resolved.shape;
    start.require_physical()?;
    if clamp.is_clamped() {
        let before = constraint_residual(&start, &clamp)?.norm();
        if !(before < flow.tol_proj) {
            start = project_to_manifold_with(&start, &clamp, &flow.projection(start.len()))?;
            let after = constraint_residual(&start, &clamp)?.norm();
            diagnostic(
                "info",
                "projection",
                &format!("initial shape projected onto the constraint set: residual {before:.3e} -> {after:.3e}"),
            );
            run.set("initial_residual", before);
        }
    }
    write_json(&run.output("initial.json")?, &ShapeFile::from_shape(&start, None))?;

    let result = gradient_flow(&start, &resolved.model, &clamp, &flow)?;
    write_trace_csv(create(&run.output("trace.csv")?)?, &result.trace)?;
    write_json(&run.output("shape.json")?, &ShapeFile::from_shape(&result.shape, None))?;
    let nodes = reconstruct_nodes(&result.shape, &clamp.r0)?;
    write_nodes_csv(create(&run.output("nodes.csv")?)?, &result.shape, &nodes)?;
    for (iteration, shape) in &result.snapshots {
        let path = run.output(&format!("snapshots/iter-{iteration:06}.json"))?;
        write_json(&path, &ShapeFile::from_shape(shape, None))?;
    }

    let last = *result.final_row();
    run.set("iterations", result.iterations);
    run.set("flow_status", result.status);
    run.set("final_energy", last.energy);
    run.set("final_residual", last.residual_norm);
    run.set("final_grad_norm", last.grad_norm);
    match result.status {
        FlowStatus::Converged => Ok(()),
        status => Err(Failure::numerical(format!(
            "gradient flow ended as {} after {} iterations with projected gradient {:.3e} (tolerance {:.1e})",
            serde_json::to_value(status).unwrap_or_default().as_str().unwrap_or("unconverged"),
            result.iterations,
            last.grad_norm,
            flow.tol_grad
        ))),
    }
}

/// A curve given by a point CSV, an analytic curve JSON file, or inline.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum CurveSource {
    Path(PathBuf),
    Analytic(AnalyticCurve),
}

impl CurveSource {
    fn samples(&self, step: f64, base: &Path, run: &mut Run) -> Result<(CurveSamples, Value), Failure> {
        let curve = match self {
            CurveSource::Path(p) => {
                let p = base.join(p);
                run.input(&p);
                if p.extension().is_some_and(|e| e == "json") {
                    read_json::<AnalyticCurve>(&p)?
                } else {
                    let samples = read_curve_csv(File::open(&p)?)?;
                    return Ok((samples, json!(p)));
                }
            }
            CurveSource::Analytic(c) => c.clone(),
        };
        curve.validate()?;
        Ok((CurveSamples::from_curve(&curve, step)?, json!(curve)))
    }
}

fn default_step() -> f64 {
    1e-3
}

fn default_zero_tol() -> f64 {
    1e-10
}

#[derive(Args)]
pub struct FramesArgs {
    /// Point CSV `s,x,y,z` or analytic curve JSON.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Sampling step for analytic curves.
    #[arg(long)]
    step: Option<f64>,
    /// Seed director at s = 0, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    d1: Option<Vec<f64>>,
    /// gregory or trapezoid.
    #[arg(long)]
    quadrature: Option<String>,
    /// magnus4 or midpoint.
    #[arg(long)]
    stepper: Option<String>,
    /// Curvature below this fraction of its maximum counts as zero.
    #[arg(long)]
    zero_tol: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FramesOptions {
    curve: Option<CurveSource>,
    #[serde(default = "default_step")]
    step: f64,
    #[serde(default)]
    d1: Option<[f64; 3]>,
    #[serde(default)]
    quadrature: Quadrature,
    #[serde(default)]
    stepper: Stepper,
    #[serde(default = "default_zero_tol")]
    zero_tol: f64,
}

pub fn frames(args: FramesArgs, config: Option<&ConfigFile>, run: &mut Run) -> Result<(), Failure> {
    let flags = json!({
        "curve": path_flag(&args.curve),
        "step": args.step,
        "d1": args.d1,
        "quadrature": args.quadrature,
        "stepper": args.stepper,
        "zero_tol": args.zero_tol,
    });
    let (opts, _, base): (FramesOptions, _, _) = merge(flags, config)?;
    let (samples, curve) = require(opts.curve, "curve")?.samples(opts.step, &base, run)?;
    let seed = match opts.d1 {
        Some(d) => Vector3::from(d),
        None => default_seed(&samples.dx[0].normalize()),
    };
    run.config = json!({
        "command": "frames",
        "curve": curve,
        "step": opts.step,
        "d1": [seed.x, seed.y, seed.z],
        "quadrature": opts.quadrature,
        "stepper": opts.stepper,
        "zero_tol": opts.zero_tol,
    });
    let (dev, frames) = bishop_frame(&samples, &seed, opts.quadrature, opts.stepper)?;
    let inv = hasimoto_invariants(&dev, opts.zero_tol)?;
    write_development_csv(create(&run.output("development.csv")?)?, &dev, &inv)?;
    write_invariants_csv(create(&run.output("invariants.csv")?)?, &inv)?;
    write_json(&run.output("atoms.json")?, &inv.atoms)?;
    write_frames_csv(create(&run.output("frames.csv")?)?, &frames)?;
    let roundtrip = samples
        .x
        .iter()
        .zip(&frames.x)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    run.set("samples", samples.len());
    run.set("roundtrip_error", roundtrip);
    run.set("parallel_defect", parallel_defect(&frames));
    run.set("atoms", inv.atoms.len());
    Ok(())
}

#[derive(Args)]
pub struct ClosureArgs {
    /// Development CSV `s,u1,u2[,v3]`.
    #[arg(long)]
    development: Option<PathBuf>,
    /// Shape JSON file or catalog name, read as a framed curve.
    #[arg(long)]
    shape: Option<String>,
    #[command(flatten)]
    params: CatalogFlags,
    /// Point CSV or analytic curve JSON.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    step: Option<f64>,
    /// Also compare the end tangents.
    #[arg(long)]
    smooth: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClosureOptions {
    #[serde(default)]
    development: Option<PathBuf>,
    #[serde(default)]
    shape: Option<ShapeSource>,
    #[serde(default)]
    curve: Option<CurveSource>,
    #[serde(default = "default_step")]
    step: f64,
    #[serde(default)]
    smooth: bool,
}

pub fn closure(args: ClosureArgs, config: Option<&ConfigFile>, run: &mut Run) -> Result<(), Failure> {
    let shape_given = args.shape.is_some() || prune(json!(args.params)) != json!({});
    let flags = json!({
        "development": path_flag(&args.development),
        "shape": if shape_given { shape_flag(args.shape.as_deref(), &args.params) } else { Value::Null },
        "curve": path_flag(&args.curve),
        "step": args.step,
        "smooth": args.smooth.then_some(true),
    });
    let (opts, _, base): (ClosureOptions, _, _) = merge(flags, config)?;
    let given = [opts.development.is_some(), opts.shape.is_some(), opts.curve.is_some()];
    if given.iter().filter(|g| **g).count() != 1 {
        return Err(Failure::validation("give exactly one of development, shape or curve"));
    }
    let residual: ClosureResidual = if let Some(p) = &opts.development {
        let p = base.join(p);
        run.input(&p);
        run.config = json!({"command": "closure", "development": p, "smooth": opts.smooth});
        closure_check(&read_development_csv(File::open(&p)?)?, opts.smooth)?
    } else if let Some(s) = &opts.shape {
        let (shape, _) = load_shape(s, &base, run)?;
        run.config = json!({
            "command": "closure",
            "shape": ShapeFile::from_shape(&shape, None),
            "smooth": opts.smooth,
        });
        closure_of_shape(&shape, opts.smooth)
    } else {
        let source = opts.curve.as_ref().expect("checked above");
        let (samples, curve) = source.samples(opts.step, &base, run)?;
        run.config = json!({"command": "closure", "curve": curve, "step": opts.step, "smooth": opts.smooth});
        let seed = default_seed(&samples.dx[0].normalize());
        let sol = solve_volterra(&samples, &seed, Quadrature::default())?;
        closure_check(&sol.development, opts.smooth)?
    };
    let report = json!({
        "position": residual.position,
        "tangent": residual.tangent,
        "max": residual.max(),
    });
    write_json(&run.output("closure.json")?, &report)?;
    run.set("closure", report);
    Ok(())
}

#[derive(Args)]
pub struct InvariantsArgs {
    /// Development CSV `s,u1,u2[,v3]`.
    #[arg(long)]
    development: Option<PathBuf>,
    /// Curvature below this fraction of its maximum counts as zero.
    #[arg(long)]
    zero_tol: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InvariantsOptions {
    development: Option<PathBuf>,
    #[serde(default = "default_zero_tol")]
    zero_tol: f64,
}

pub fn invariants(args: InvariantsArgs, config: Option<&ConfigFile>, run: &mut Run) -> Result<(), Failure> {
    let flags = json!({"development": path_flag(&args.development), "zero_tol": args.zero_tol});
    let (opts, _, base): (InvariantsOptions, _, _) = merge(flags, config)?;
    let p = base.join(require(opts.development, "development CSV")?);
    run.input(&p);
    run.config = json!({"command": "invariants", "development": p, "zero_tol": opts.zero_tol});
    let dev = read_development_csv(File::open(&p)?)?;
    let inv = hasimoto_invariants(&dev, opts.zero_tol)?;
    write_invariants_csv(create(&run.output("invariants.csv")?)?, &inv)?;
    write_json(&run.output("atoms.json")?, &inv.atoms)?;
    run.set("samples", dev.len());
    run.set("atoms", inv.atoms.len());
    Ok(())
}
