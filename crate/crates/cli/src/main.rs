//! `semiflex`: generate semidiscrete surfaces, test them for flexibility and
//! integrate their flexions.
//!
//! Exit status: 0 flexible (or success), 1 rigid, 2 degenerate input or any
//! other error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use semiflex::developable::{
    cos_alpha_linearity, h_developable, is_developable, ruling_coefficients, DevelopabilityVerdict, LinearityReport,
    RulingCoefficients, DEFAULT_TOL_DEV,
};
use semiflex::flexibility::{nribbon_report_between, DEFAULT_TOL_CHI};
use semiflex::flexion::{Truncation, TruncationCause, DEFAULT_TOL_FLEX};
use semiflex::generate::{generate, Kind, Params};
use semiflex::geometry::{genericity_location, require_generic, MarginLocation};
use semiflex::io::TrajectoryDocument;
use semiflex::{
    export_frames, flex_2ribbon, h_fn, inner_geometry, invariant_drift, propagate_flexion, DriftSummary, FlexError,
    FlexOptions, FlexReport, InvariantClass, InvariantField, Metadata, ReportDocument, SampledSurface, SurfaceDocument,
    Tolerances, Verdict,
};

#[derive(Parser, Debug)]
#[command(name = "semiflex", version, about = "Flexibility of semidiscrete surfaces")]
struct Cli {
    /// Bound on the normalized flexibility functional.
    #[arg(long, global = true, env = "SEMIFLEX_TOL_CHI", default_value_t = DEFAULT_TOL_CHI)]
    tol_chi: f64,

    /// Bound on the normalized isometry drift of a finite flexion.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL_FLEX)]
    tol_flex: f64,

    /// Seed for the random generator.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Suppress the human-readable summary.
    #[arg(long, short, global = true)]
    quiet: bool,

    /// Print the report as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a test surface and write it as JSON.
    Gen {
        /// REV, CONE, RAND, DEV or TRANSLATE.
        #[arg(long)]
        kind: Kind,
        #[arg(long, default_value_t = 2)]
        ribbons: usize,
        /// Number of grid nodes.
        #[arg(long = "n", default_value_t = 201)]
        nodes: usize,
        #[arg(long, default_value_t = 0.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        /// Meridian spacing of the revolution surface.
        #[arg(long)]
        theta: Option<f64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test infinitesimal flexibility between two parameter values.
    Check {
        surface: PathBuf,
        #[arg(long)]
        t1: Option<f64>,
        #[arg(long)]
        t2: Option<f64>,
    },
    /// Integrate the finite flexion.
    Flex {
        surface: PathBuf,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.3)]
        lambda_max: f64,
        #[arg(long, default_value_t = 60)]
        steps: usize,
        /// Directory for one OBJ mesh per frame.
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Trajectory output file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the inner-geometry functions of a surface.
    Invariants { surface: PathBuf },
    /// Detect developable ribbons and check the developable formulas.
    Developable {
        surface: PathBuf,
        /// Trajectory of a 2-ribbon flexion, for the angle test.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Parameter value of the anchor node (default: grid midpoint).
        #[arg(long)]
        anchor: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen { .. } => "gen",
            Command::Check { .. } => "check",
            Command::Flex { .. } => "flex",
            Command::Invariants { .. } => "invariants",
            Command::Developable { .. } => "developable",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Success,
    Rigid,
    Degenerate,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(match s {
            Status::Success => 0,
            Status::Rigid => 1,
            Status::Degenerate => 2,
        })
    }
}

type Outcome = Result<Status, FlexError>;

struct Context {
    command: &'static str,
    tolerances: Tolerances,
    quiet: bool,
    json: bool,
}

impl Context {
    /// Prints the report as JSON or the summary as text, per the flags.
    fn emit<T: Serialize>(&self, report: T, text: &str) -> Result<(), FlexError> {
        if self.json {
            stdout(&(ReportDocument::new(self.command, self.tolerances, report).to_json()? + "\n"));
        } else if !self.quiet {
            stdout(text);
        }
        Ok(())
    }
}

/// Writes to stdout, ignoring a closed pipe (`semiflex ... | head`).
fn stdout(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Context {
        command: cli.command.name(),
        tolerances: Tolerances { tol_chi: cli.tol_chi, tol_flex: cli.tol_flex },
        quiet: cli.quiet,
        json: cli.json,
    };
    let outcome = if !(cli.tol_chi > 0.0 && cli.tol_flex > 0.0) {
        Err(FlexError::InvalidArgument("tolerances must be positive".into()))
    } else {
        run(&ctx, &cli)
    };
    match outcome {
        Ok(status) => status.into(),
        Err(err) => {
            let status = if matches!(err, FlexError::RigidTriple { .. }) { Status::Rigid } else { Status::Degenerate };
            report_error(&ctx, &err);
            status.into()
        }
    }
}

#[derive(Serialize)]
struct ErrorReport {
    error: String,
    node: Option<usize>,
    /// First curve of the 3-ribbon window concerned.
    window: Option<usize>,
}

fn report_error(ctx: &Context, err: &FlexError) {
    eprintln!("error: {err}");
    if ctx.json {
        let window = match err {
            FlexError::RigidTriple { first, .. } => Some(*first),
            _ => None,
        };
        let report = ErrorReport { error: err.to_string(), node: err.node(), window };
        if let Ok(text) = ReportDocument::new(ctx.command, ctx.tolerances, report).to_json() {
            stdout(&(text + "\n"));
        }
    }
}

fn run(ctx: &Context, cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Gen { kind, ribbons, nodes, a, b, theta, out } => {
            let mut params = Params::default().with_ribbons(*ribbons).with_nodes(*nodes).with_seed(cli.seed);
            params.grid.start = *a;
            params.grid.end = *b;
            if let Some(theta) = theta {
                params.theta = *theta;
            }
            gen(ctx, *kind, &params, out.as_ref())
        }
        Command::Check { surface, t1, t2 } => check(ctx, &load(surface)?, *t1, *t2),
        Command::Flex { surface, lambda_max, steps, frames, out } => {
            flex(ctx, &load(surface)?, *lambda_max, *steps, frames.as_ref(), out.as_ref())
        }
        Command::Invariants { surface } => invariants(ctx, &load(surface)?),
        Command::Developable { surface, trajectory, anchor } => {
            developable(ctx, &load(surface)?, trajectory.as_ref(), *anchor)
        }
    }
}

fn load(path: &Path) -> Result<SampledSurface, FlexError> {
    SurfaceDocument::load(path)
        .and_then(|d| d.to_surface())
        .map_err(|e| FlexError::InvalidArgument(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct GenReport<'a> {
    path: String,
    kind: Kind,
    ribbons: usize,
    nodes: usize,
    seed: Option<u64>,
    metadata: &'a Metadata,
}

fn gen(ctx: &Context, kind: Kind, params: &Params, out: Option<&PathBuf>) -> Outcome {
    let surface = generate(kind, params)?;
    let seed = (kind == Kind::Rand).then_some(params.seed);
    let metadata = Metadata { name: kind.name().to_lowercase(), generator: Some(kind.name().into()), seed };
    let doc = SurfaceDocument::new(&surface, metadata);
    let Some(path) = out else {
        stdout(&(doc.to_json()? + "\n"));
        return Ok(Status::Success);
    };
    doc.save(path)?;
    let report = GenReport {
        path: path.display().to_string(),
        kind,
        ribbons: surface.ribbons(),
        nodes: surface.grid().nodes,
        seed,
        metadata: &doc.metadata,
    };
    let text =
        format!("wrote {} ({kind}, {} ribbons, {} nodes)\n", report.path, surface.ribbons(), surface.grid().nodes);
    ctx.emit(&report, &text)?;
    Ok(Status::Success)
}

fn describe(surface: &SampledSurface) -> String {
    let g = surface.grid();
    format!("{} ribbons, {} nodes on [{}, {}]", surface.ribbons(), g.nodes, g.start, g.end)
}

#[derive(Serialize)]
struct CheckReport {
    ribbons: usize,
    node1: usize,
    node2: usize,
    t1: f64,
    t2: f64,
    verdict: Verdict,
    genericity: MarginLocation,
    windows: Vec<FlexReport>,
}

fn check(ctx: &Context, surface: &SampledSurface, t1: Option<f64>, t2: Option<f64>) -> Outcome {
    let grid = surface.grid();
    let node1 = t1.map_or(Ok(0), |t| grid.nearest_node(t))?;
    let node2 = t2.map_or(Ok(grid.nodes - 1), |t| grid.nearest_node(t))?;
    require_generic(surface)?;
    let genericity = genericity_location(surface)?;

    let mut text = format!("surface: {}, nodes {node1}..={node2}\n", describe(surface));
    let _ = writeln!(
        text,
        "genericity margin {:.3e} (node {}, curve {})",
        genericity.margin, genericity.node, genericity.curve
    );
    let (verdict, windows) = if surface.ribbons() < 3 {
        text.push_str("every generic 2-ribbon surface is flexible\n");
        (Verdict::Flexible, Vec::new())
    } else {
        let report = nribbon_report_between(surface, node1, node2, ctx.tolerances.tol_chi)?;
        for w in &report.triples {
            let _ =
                write!(text, "window {} (curves {}..={}): {}", w.first, w.first, w.first + 3, verdict_name(w.verdict));
            match (&w.chi, &w.monodromy, &w.error) {
                (Some(c), Some(m), _) => {
                    let _ = writeln!(text, ", chi {:.3e}, monodromy {:.3e}", c.normalized_max, m.residual);
                }
                (_, _, Some(e)) => {
                    let _ = writeln!(text, ": {e}");
                }
                _ => text.push('\n'),
            }
        }
        (report.verdict, report.triples)
    };
    let _ = writeln!(text, "verdict: {} (tol_chi {:e})", verdict_name(verdict), ctx.tolerances.tol_chi);

    let status = match verdict {
        Verdict::Flexible => Status::Success,
        Verdict::Rigid => Status::Rigid,
        Verdict::Indeterminate => Status::Degenerate,
    };
    if status == Status::Degenerate {
        for w in windows.iter().filter(|w| w.verdict == Verdict::Indeterminate) {
            let node = w.degenerate_node.map_or_else(|| "unknown node".into(), |n| format!("node {n}"));
            eprintln!("error: window {} is degenerate at {node}: {}", w.first, w.error.as_deref().unwrap_or(""));
        }
    }
    let report = CheckReport {
        ribbons: surface.ribbons(),
        node1,
        node2,
        t1: grid.t(node1),
        t2: grid.t(node2),
        verdict,
        genericity,
        windows,
    };
    ctx.emit(&report, &text)?;
    Ok(status)
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Flexible => "flexible",
        Verdict::Rigid => "rigid",
        Verdict::Indeterminate => "indeterminate",
    }
}

#[derive(Serialize)]
struct FlexSummary {
    ribbons: usize,
    lambda_max: f64,
    steps: usize,
    frames: usize,
    last_lambda: f64,
    orientation: f64,
    truncated: Option<Truncation>,
    drift: DriftSummary,
    within_tolerance: bool,
    frame_files: Vec<String>,
    trajectory: Option<String>,
}

fn flex(
    ctx: &Context,
    surface: &SampledSurface,
    lambda_max: f64,
    steps: usize,
    frames: Option<&PathBuf>,
    out: Option<&PathBuf>,
) -> Outcome {
    let traj = if surface.ribbons() == 2 {
        flex_2ribbon(surface, lambda_max, steps)?
    } else {
        let options = FlexOptions { tol_chi: ctx.tolerances.tol_chi, tol_flex: ctx.tolerances.tol_flex };
        propagate_flexion(surface, lambda_max, steps, &options)?
    };
    let drift = invariant_drift(&traj)?;
    let frame_files = match frames {
        Some(dir) => export_frames(&traj.surfaces, dir)?.iter().map(|p| p.display().to_string()).collect(),
        None => Vec::new(),
    };
    if let Some(path) = out {
        TrajectoryDocument::new(&traj)?.save(path)?;
    }

    let last_lambda = traj.lambdas.last().copied().unwrap_or(0.0);
    let within_tolerance = drift.max_normalized <= ctx.tolerances.tol_flex;
    let mut text = format!(
        "flexion of {}: {} frames, lambda 0 to {last_lambda} (orientation {:+})\n",
        describe(surface),
        traj.len(),
        traj.orientation
    );
    for c in &drift.classes {
        let _ = writeln!(text, "  drift {:<20} {:.3e} (normalized {:.3e})", c.class.name(), c.absolute, c.normalized);
    }
    let _ = writeln!(
        text,
        "max normalized drift {:.3e} ({} tol_flex {:e})",
        drift.max_normalized,
        if within_tolerance { "within" } else { "exceeds" },
        ctx.tolerances.tol_flex
    );
    if let Some(t) = &traj.truncated {
        let _ = writeln!(text, "stopped at lambda {}: {}", t.last_lambda, t.reason);
    }
    if let Some(dir) = frames {
        let _ = writeln!(text, "wrote {} frames to {}", frame_files.len(), dir.display());
    }
    if let Some(path) = out {
        let _ = writeln!(text, "wrote trajectory to {}", path.display());
    }

    let status = match traj.truncated.as_ref().map(|t| t.cause) {
        Some(TruncationCause::Degenerate) => Status::Degenerate,
        Some(TruncationCause::Drift) => Status::Rigid,
        None if !within_tolerance => Status::Rigid,
        None => Status::Success,
    };
    if let Some(t) = &traj.truncated {
        eprintln!("error: flexion stopped at lambda {}: {}", t.last_lambda, t.reason);
    }
    let report = FlexSummary {
        ribbons: surface.ribbons(),
        lambda_max,
        steps,
        frames: traj.len(),
        last_lambda,
        orientation: traj.orientation,
        truncated: traj.truncated.clone(),
        drift,
        within_tolerance,
        frame_files,
        trajectory: out.map(|p| p.display().to_string()),
    };
    ctx.emit(&report, &text)?;
    Ok(status)
}

fn invariants(ctx: &Context, surface: &SampledSurface) -> Outcome {
    let field: InvariantField = inner_geometry(surface);
    let mut text = format!("surface: {}\n", describe(surface));
    for class in InvariantClass::ALL {
        for (i, values) in field.class(class).iter().enumerate() {
            let (lo, hi) = range(values);
            let _ = writeln!(text, "{:<20} [{i}] in [{lo:.6}, {hi:.6}]", class.name());
        }
    }
    ctx.emit(&field, &text)?;
    Ok(Status::Success)
}

fn range(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

#[derive(Serialize)]
struct HComparison {
    curve: usize,
    /// Largest `|H_dev − H|` over the nodes.
    max_difference: f64,
    /// Largest `|H|` over the nodes.
    scale: f64,
}

#[derive(Serialize)]
struct DevelopableReport {
    ribbons: Vec<DevelopabilityVerdict>,
    coefficients: Vec<RulingCoefficients>,
    h: Vec<HComparison>,
    cos_alpha: Option<LinearityReport>,
}

fn developable(ctx: &Context, surface: &SampledSurface, trajectory: Option<&PathBuf>, anchor: Option<f64>) -> Outcome {
    let mut text = format!("surface: {}\n", describe(surface));
    let verdicts: Vec<DevelopabilityVerdict> =
        (0..surface.ribbons()).map(|i| is_developable(surface, i, DEFAULT_TOL_DEV)).collect::<Result<_, _>>()?;
    let mut coefficients = Vec::new();
    for v in &verdicts {
        let _ = write!(
            text,
            "ribbon {}: {} (residual {:.3e} at node {})",
            v.ribbon,
            if v.developable { "developable" } else { "not developable" },
            v.max_residual,
            v.worst_node
        );
        if v.developable {
            let c = ruling_coefficients(surface, v.ribbon)?;
            let (alo, ahi) = range(&c.a);
            let (blo, bhi) = range(&c.b);
            let _ = write!(text, ", a in [{alo:.6}, {ahi:.6}], b in [{blo:.6}, {bhi:.6}]");
            coefficients.push(c);
        }
        text.push('\n');
    }

    let mut h = Vec::new();
    for i in 1..surface.ribbons() {
        if !(verdicts[i - 1].developable && verdicts[i].developable) {
            continue;
        }
        let mut cmp = HComparison { curve: i, max_difference: 0.0, scale: 0.0 };
        for j in 0..surface.grid().nodes {
            let general = h_fn(surface, i, j)?;
            cmp.max_difference = cmp.max_difference.max((h_developable(surface, i, j)? - general).abs());
            cmp.scale = cmp.scale.max(general.abs());
        }
        let _ = writeln!(
            text,
            "curve {i}: H closed form differs by {:.3e} (|H| up to {:.3e})",
            cmp.max_difference, cmp.scale
        );
        h.push(cmp);
    }

    let cos_alpha = match trajectory {
        Some(path) => {
            let doc = TrajectoryDocument::load(path)?;
            let frames = doc.surfaces()?.iter().map(|s| s.sub_surface(0, 2)).collect::<Result<Vec<_>, _>>()?;
            let grid = surface.grid();
            let node = match anchor {
                Some(t) => grid.nearest_node(t)?,
                None => grid.nodes / 2,
            };
            let report = cos_alpha_linearity(&frames, node)?;
            let _ = writeln!(
                text,
                "cos alpha over {} frames (anchor node {node}): affine defect {:.3e} at node {}",
                frames.len(),
                report.max_defect,
                report.worst_node
            );
            Some(report)
        }
        None => None,
    };

    ctx.emit(DevelopableReport { ribbons: verdicts, coefficients, h, cos_alpha }, &text)?;
    Ok(Status::Success)
}
