//! JSON documents for surfaces, reports and trajectories, and OBJ export of
//! trajectory frames.
//!
//! Numbers are written in shortest round-trip form, so a surface read back
//! from its document is bit-identical to the one written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::flexion::{FlexionTrajectory, Truncation};
use crate::geometry::{Grid, SampledSurface};
use crate::Vec3;

/// Version tag written into every document.
pub const FORMAT: u32 = 1;

pub const TOOL: &str = "semiflex";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Grid as stored on disk: `[a, b]` sampled at `n` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        Self { a: g.start, b: g.end, n: g.nodes }
    }
}

impl GridSpec {
    pub fn to_grid(self) -> Result<Grid> {
        Grid::new(self.a, self.b, self.n)
    }
}

type Points = Vec<Vec<[f64; 3]>>;

fn to_points(curves: &[Vec<Vec3>]) -> Points {
    curves.iter().map(|c| c.iter().map(|p| [p.x, p.y, p.z]).collect()).collect()
}

fn from_points(points: &Points) -> Vec<Vec<Vec3>> {
    points.iter().map(|c| c.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect()).collect()
}

fn check_format(format: u32) -> Result<()> {
    if format == FORMAT {
        Ok(())
    } else {
        Err(FlexError::UnsupportedFormat(format))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDocument {
    pub format: u32,
    pub metadata: Metadata,
    pub grid: GridSpec,
    /// `curves[i][j]` is `f_i(t_j)`.
    pub curves: Points,
}

impl SurfaceDocument {
    pub fn new(surface: &SampledSurface, metadata: Metadata) -> Self {
        Self { format: FORMAT, metadata, grid: surface.grid().into(), curves: to_points(surface.curves()) }
    }

    pub fn to_surface(&self) -> Result<SampledSurface> {
        check_format(self.format)?;
        SampledSurface::new(self.grid.to_grid()?, from_points(&self.curves))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        check_format(doc.format)?;
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Tolerances an analysis ran with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_chi: f64,
    pub tol_flex: f64,
}

/// Envelope for any analysis result written by the command-line tool.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportDocument<T> {
    pub format: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub tolerances: Tolerances,
    pub report: T,
}

impl<T: Serialize> ReportDocument<T> {
    pub fn new(command: impl Into<String>, tolerances: Tolerances, report: T) -> Self {
        Self { format: FORMAT, tool: TOOL, version: VERSION, command: command.into(), tolerances, report }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Frames of a flexion, without the per-frame drift fields (those are
/// recomputed from the frames on load).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDocument {
    pub format: u32,
    pub grid: GridSpec,
    pub lambdas: Vec<f64>,
    pub orientation: f64,
    pub frames: Vec<Points>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<Truncation>,
}

impl TrajectoryDocument {
    pub fn new(trajectory: &FlexionTrajectory) -> Result<Self> {
        let first = trajectory.surfaces.first().ok_or_else(|| FlexError::InvalidArgument("empty trajectory".into()))?;
        Ok(Self {
            format: FORMAT,
            grid: first.grid().into(),
            lambdas: trajectory.lambdas.clone(),
            orientation: trajectory.orientation,
            frames: trajectory.surfaces.iter().map(|s| to_points(s.curves())).collect(),
            truncated: trajectory.truncated.clone(),
        })
    }

    pub fn surfaces(&self) -> Result<Vec<SampledSurface>> {
        check_format(self.format)?;
        if self.frames.len() != self.lambdas.len() {
            return Err(FlexError::InvalidArgument(format!(
                "trajectory has {} frames but {} parameter values",
                self.frames.len(),
                self.lambdas.len()
            )));
        }
        let grid = self.grid.to_grid()?;
        self.frames.iter().map(|f| SampledSurface::new(grid, from_points(f))).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        check_format(doc.format)?;
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// OBJ text of the piecewise-ruled surface: one vertex per sample `f_i(t_j)`
/// (curve-major) and one quad per cell.
pub fn obj_string(surface: &SampledSurface) -> String {
    obj_from_curves(surface.curves()).expect("a sampled surface has matching curves")
}

/// [`obj_string`] for raw curve samples, which need not satisfy the node
/// count the analyses require.
pub fn obj_from_curves(curves: &[Vec<Vec3>]) -> Result<String> {
    let nodes = curves.first().map_or(0, Vec::len);
    if curves.len() < 2 || nodes < 2 || curves.iter().any(|c| c.len() != nodes) {
        return Err(FlexError::InvalidArgument("mesh needs at least two curves of equal length >= 2".into()));
    }
    let mut out = String::new();
    for c in curves {
        for p in c {
            let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
        }
    }
    let index = |i: usize, j: usize| i * nodes + j + 1;
    for i in 0..curves.len() - 1 {
        for j in 0..nodes - 1 {
            let _ = writeln!(out, "f {} {} {} {}", index(i, j), index(i, j + 1), index(i + 1, j + 1), index(i + 1, j));
        }
    }
    Ok(out)
}

pub fn frame_file_name(frame: usize) -> String {
    format!("frame_{frame:04}.obj")
}

/// Writes `frame_0000.obj`, `frame_0001.obj`, … into `dir` (created if
/// missing) and returns the paths in frame order.
pub fn export_frames(frames: &[SampledSurface], dir: &Path) -> Result<Vec<PathBuf>> {
    if frames.is_empty() {
        return Err(FlexError::InvalidArgument("no frames to export".into()));
    }
    fs::create_dir_all(dir)?;
    frames
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let path = dir.join(frame_file_name(k));
            fs::write(&path, obj_string(s))?;
            Ok(path)
        })
        .collect()
}

/// Vertices and polygonal faces (0-based) of an OBJ file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<Vec<usize>>,
}

/// Reads the `v` and `f` records of an OBJ file. Comments, blank lines and
/// other record types are skipped; face entries may carry `/vt/vn` suffixes
/// and negative (relative) indices.
pub fn parse_obj(text: &str) -> Result<ObjMesh> {
    let mut mesh = ObjMesh::default();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let bad = |reason: String| FlexError::MeshParse { line, reason };
        let content = raw.split('#').next().unwrap_or("");
        let mut fields = content.split_whitespace();
        match fields.next() {
            Some("v") => {
                let xyz: Vec<f64> = fields
                    .take(3)
                    .map(|f| f.parse::<f64>().map_err(|e| bad(format!("bad coordinate '{f}': {e}"))))
                    .collect::<Result<_>>()?;
                if xyz.len() != 3 {
                    return Err(bad("vertex needs three coordinates".into()));
                }
                mesh.vertices.push([xyz[0], xyz[1], xyz[2]]);
            }
            Some("f") => {
                let count = mesh.vertices.len() as i64;
                let face: Vec<usize> = fields
                    .map(|f| {
                        let head = f.split('/').next().unwrap_or("");
                        let idx: i64 = head.parse().map_err(|e| bad(format!("bad face index '{f}': {e}")))?;
                        let resolved = if idx < 0 { count + idx } else { idx - 1 };
                        if idx == 0 || resolved < 0 || resolved >= count {
                            return Err(bad(format!("face index {idx} outside 1..={count}")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if face.len() < 3 {
                    return Err(bad("face needs at least three vertices".into()));
                }
                mesh.faces.push(face);
            }
            _ => {}
        }
    }
    Ok(mesh)
}
