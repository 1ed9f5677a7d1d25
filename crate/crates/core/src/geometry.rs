//! Sampled semidiscrete surfaces, derivative fields, local frames and the
//! inner-geometry quantities a flexion must preserve.

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::numeric::{midpoints, DiffOperator};
use crate::Vec3;

/// Minimum number of grid nodes (room for the boundary stencils).
pub const MIN_NODES: usize = 9;

/// Scale-free coplanarity margin below which a configuration is treated as
/// violating the genericity hypothesis.
pub const DEGENERACY_THRESHOLD: f64 = 1e-9;

/// Fixed orthonormal reference basis used for coordinate functions.
pub const REFERENCE_BASIS: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Mixed product `(a, b, c) = <a, b x c>`.
#[inline]
pub fn triple(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    a.dot(&b.cross(c))
}

/// `|(a, b, c)| / (|a| |b| |c|)`, or `None` when a factor has zero length.
pub fn coplanarity_margin(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let denom = a.norm() * b.norm() * c.norm();
    if denom == 0.0 || !denom.is_finite() {
        None
    } else {
        Some(triple(a, b, c).abs() / denom)
    }
}

/// Uniform parameter grid `t_j = start + j (end - start) / (nodes - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub end: f64,
    pub nodes: usize,
}

impl Grid {
    pub fn new(start: f64, end: f64, nodes: usize) -> Result<Self> {
        if nodes < MIN_NODES {
            return Err(FlexError::GridTooSmall { nodes, min: MIN_NODES });
        }
        if !(start.is_finite() && end.is_finite()) || end <= start {
            return Err(FlexError::InvalidGrid(format!("need finite start < end, got [{start}, {end}]")));
        }
        Ok(Self { start, end, nodes })
    }

    pub fn step(&self) -> f64 {
        (self.end - self.start) / (self.nodes - 1) as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        if j + 1 == self.nodes {
            self.end
        } else {
            self.start + j as f64 * self.step()
        }
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..self.nodes).map(|j| self.t(j)).collect()
    }

    /// Index of the node closest to `t`; errors outside `[start, end]`.
    pub fn nearest_node(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * (self.end - self.start);
        if !(t >= self.start - tol && t <= self.end + tol) {
            return Err(FlexError::InvalidArgument(format!(
                "parameter {t} outside the grid [{}, {}]",
                self.start, self.end
            )));
        }
        let j = ((t - self.start) / self.step()).round() as usize;
        Ok(j.min(self.nodes - 1))
    }

    pub fn diff_operator(&self, order: usize) -> DiffOperator {
        DiffOperator::new(self.nodes, self.step(), order)
    }

    pub(crate) fn check_node(&self, j: usize) -> Result<()> {
        if j >= self.nodes {
            return Err(FlexError::IndexOutOfRange { what: "node", index: j, valid: format!("0..{}", self.nodes) });
        }
        Ok(())
    }
}

/// One curve sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledCurve {
    grid: Grid,
    samples: Vec<Vec3>,
}

impl SampledCurve {
    pub fn new(grid: Grid, samples: Vec<Vec3>) -> Result<Self> {
        let grid = Grid::new(grid.start, grid.end, grid.nodes)?;
        if samples.len() != grid.nodes {
            return Err(FlexError::InvalidGrid(format!("{} samples for a {}-node grid", samples.len(), grid.nodes)));
        }
        if let Some(node) = samples.iter().position(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(FlexError::NonFinite { curve: 0, node });
        }
        Ok(Self { grid, samples })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Vec3) -> Result<Self> {
        let samples = grid.ts().into_iter().map(f).collect();
        Self::new(grid, samples)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn samples(&self) -> &[Vec3] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Vec3> {
        self.samples
    }
}

/// Per-node derivative estimates of `curve` (`order` 1 or 2) from 7-point
/// stencils, exact on polynomials of degree at most six.
pub fn derivative(curve: &SampledCurve, order: usize) -> Result<SampledCurve> {
    if order != 1 && order != 2 {
        return Err(FlexError::InvalidArgument(format!("derivative order must be 1 or 2, got {order}")));
    }
    if curve.grid.nodes < MIN_NODES {
        return Err(FlexError::GridTooSmall { nodes: curve.grid.nodes, min: MIN_NODES });
    }
    let op = curve.grid.diff_operator(order);
    Ok(SampledCurve { grid: curve.grid, samples: op.apply(&curve.samples) })
}

/// An n-ribbon surface: `n + 1` curves `f_0 .. f_n` on one shared grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledSurface {
    grid: Grid,
    curves: Vec<Vec<Vec3>>,
}

impl SampledSurface {
    pub fn new(grid: Grid, curves: Vec<Vec<Vec3>>) -> Result<Self> {
        let grid = Grid::new(grid.start, grid.end, grid.nodes)?;
        if curves.len() < 2 {
            return Err(FlexError::InvalidArgument(format!(
                "a ribbon surface needs at least two curves, got {}",
                curves.len()
            )));
        }
        for (c, samples) in curves.iter().enumerate() {
            if samples.len() != grid.nodes {
                return Err(FlexError::GridMismatch);
            }
            if let Some(node) = samples.iter().position(|p| !p.iter().all(|x| x.is_finite())) {
                return Err(FlexError::NonFinite { curve: c, node });
            }
        }
        Ok(Self { grid, curves })
    }

    pub fn from_curves(curves: Vec<SampledCurve>) -> Result<Self> {
        let grid = curves.first().map(|c| c.grid).ok_or_else(|| FlexError::InvalidArgument("no curves".into()))?;
        if curves.iter().any(|c| c.grid != grid) {
            return Err(FlexError::GridMismatch);
        }
        Self::new(grid, curves.into_iter().map(SampledCurve::into_samples).collect())
    }

    pub fn from_fn(grid: Grid, ribbons: usize, f: impl Fn(usize, f64) -> Vec3) -> Result<Self> {
        let ts = grid.ts();
        let curves = (0..=ribbons).map(|i| ts.iter().map(|&t| f(i, t)).collect()).collect();
        Self::new(grid, curves)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Number of ribbons `n` (one less than the number of curves).
    pub fn ribbons(&self) -> usize {
        self.curves.len() - 1
    }

    pub fn curves(&self) -> &[Vec<Vec3>] {
        &self.curves
    }

    pub fn curve(&self, i: usize) -> &[Vec3] {
        &self.curves[i]
    }

    pub fn sampled_curve(&self, i: usize) -> SampledCurve {
        SampledCurve { grid: self.grid, samples: self.curves[i].clone() }
    }

    /// The `ribbons`-ribbon surface made of curves `first ..= first + ribbons`.
    pub fn sub_surface(&self, first: usize, ribbons: usize) -> Result<Self> {
        if ribbons == 0 || first + ribbons > self.ribbons() {
            return Err(FlexError::IndexOutOfRange {
                what: "sub-surface",
                index: first + ribbons,
                valid: format!("0..={}", self.ribbons()),
            });
        }
        Ok(Self { grid: self.grid, curves: self.curves[first..=first + ribbons].to_vec() })
    }

    /// Applies `map` to every sample point (rigid motions, rescaling, ...).
    pub fn map_points(&self, map: impl Fn(&Vec3) -> Vec3) -> Self {
        Self { grid: self.grid, curves: self.curves.iter().map(|c| c.iter().map(&map).collect()).collect() }
    }

    /// `f + eps * displacement`, curve by curve.
    pub fn displaced(&self, displacement: &[Vec<Vec3>], eps: f64) -> Result<Self> {
        if displacement.len() != self.curves.len() || displacement.iter().any(|d| d.len() != self.grid.nodes) {
            return Err(FlexError::GridMismatch);
        }
        let curves = self
            .curves
            .iter()
            .zip(displacement)
            .map(|(c, d)| c.iter().zip(d).map(|(p, v)| p + v * eps).collect())
            .collect();
        Ok(Self { grid: self.grid, curves })
    }

    /// Largest distance between any two sample points, an overall length scale.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<&Vec3> = self.curves.iter().flatten().collect();
        let centroid = pts.iter().fold(Vec3::zeros(), |acc, p| acc + *p) / pts.len() as f64;
        2.0 * pts.iter().map(|p| (*p - centroid).norm()).fold(0.0, f64::max)
    }

    pub fn derivatives(&self) -> SurfaceDerivatives {
        let d1 = self.grid.diff_operator(1);
        let d2 = self.grid.diff_operator(2);
        SurfaceDerivatives {
            first: self.curves.iter().map(|c| d1.apply(c)).collect(),
            second: self.curves.iter().map(|c| d2.apply(c)).collect(),
        }
    }

    pub(crate) fn check_interior(&self, i: usize) -> Result<()> {
        if i == 0 || i >= self.ribbons() {
            return Err(FlexError::IndexOutOfRange {
                what: "interior curve",
                index: i,
                valid: format!("1..={}", self.ribbons().saturating_sub(1)),
            });
        }
        Ok(())
    }
}

/// First and second derivatives of every curve of a surface.
#[derive(Clone, Debug)]
pub struct SurfaceDerivatives {
    pub first: Vec<Vec<Vec3>>,
    pub second: Vec<Vec<Vec3>>,
}

/// The vectors attached to an interior curve `i` at one parameter value:
/// `f1dot = f_i'`, `f1ddot = f_i''`, `df0 = f_i - f_{i-1}`, `df1 = f_{i+1} - f_i`
/// and the parameter derivatives of the two rulings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame {
    pub index: usize,
    pub t: f64,
    pub f1dot: Vec3,
    pub f1ddot: Vec3,
    pub df0: Vec3,
    pub df1: Vec3,
    pub df0dot: Vec3,
    pub df1dot: Vec3,
}

impl LocalFrame {
    /// `(f_i', Δf_{i-1}, Δf_i)`.
    pub fn det(&self) -> f64 {
        triple(&self.f1dot, &self.df0, &self.df1)
    }

    pub fn margin(&self) -> Option<f64> {
        coplanarity_margin(&self.f1dot, &self.df0, &self.df1)
    }

    /// Fails with a degeneracy error naming `node` when the frame is (nearly) coplanar.
    pub fn require_generic(&self, node: usize) -> Result<()> {
        match self.margin() {
            None => Err(FlexError::degenerate(node, self.index, "zero-length frame vector", 0.0)),
            Some(m) if m < DEGENERACY_THRESHOLD => {
                Err(FlexError::degenerate(node, self.index, "tangent and rulings are coplanar", m))
            }
            Some(_) => Ok(()),
        }
    }

    /// The reciprocal basis of `(f1dot, df0, df1)`: vectors `r_k` with `<r_k, b_l> = δ_kl`.
    pub fn reciprocal_basis(&self) -> [Vec3; 3] {
        let d = self.det();
        [self.df0.cross(&self.df1) / d, self.df1.cross(&self.f1dot) / d, self.f1dot.cross(&self.df0) / d]
    }

    pub fn map_vectors(&self, map: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            index: self.index,
            t: self.t,
            f1dot: map(&self.f1dot),
            f1ddot: map(&self.f1ddot),
            df0: map(&self.df0),
            df1: map(&self.df1),
            df0dot: map(&self.df0dot),
            df1dot: map(&self.df1dot),
        }
    }
}

/// Frame vectors of one interior curve at every node of the grid.
#[derive(Clone, Debug)]
pub struct PairFields {
    pub index: usize,
    pub grid: Grid,
    pub f1dot: Vec<Vec3>,
    pub f1ddot: Vec<Vec3>,
    pub df0: Vec<Vec3>,
    pub df1: Vec<Vec3>,
    pub df0dot: Vec<Vec3>,
    pub df1dot: Vec<Vec3>,
}

impl PairFields {
    pub fn from_surface(surface: &SampledSurface, i: usize) -> Result<Self> {
        surface.check_interior(i)?;
        let d1 = surface.grid.diff_operator(1);
        let d2 = surface.grid.diff_operator(2);
        let prev = &surface.curves[i - 1];
        let mid = &surface.curves[i];
        let next = &surface.curves[i + 1];
        let dprev = d1.apply(prev);
        let dmid = d1.apply(mid);
        let dnext = d1.apply(next);
        Ok(Self {
            index: i,
            grid: surface.grid,
            f1ddot: d2.apply(mid),
            df0: mid.iter().zip(prev).map(|(a, b)| a - b).collect(),
            df1: next.iter().zip(mid).map(|(a, b)| a - b).collect(),
            df0dot: dmid.iter().zip(&dprev).map(|(a, b)| a - b).collect(),
            df1dot: dnext.iter().zip(&dmid).map(|(a, b)| a - b).collect(),
            f1dot: dmid,
        })
    }

    /// Builds the fields from the tangent of the middle curve and the two
    /// rulings; the remaining derivatives are taken numerically.
    pub fn from_tangent_and_rulings(
        index: usize,
        grid: Grid,
        f1dot: Vec<Vec3>,
        df0: Vec<Vec3>,
        df1: Vec<Vec3>,
    ) -> Self {
        let d1 = grid.diff_operator(1);
        Self { index, grid, f1ddot: d1.apply(&f1dot), df0dot: d1.apply(&df0), df1dot: d1.apply(&df1), f1dot, df0, df1 }
    }

    pub fn frame(&self, j: usize) -> LocalFrame {
        LocalFrame {
            index: self.index,
            t: self.grid.t(j),
            f1dot: self.f1dot[j],
            f1ddot: self.f1ddot[j],
            df0: self.df0[j],
            df1: self.df1[j],
            df0dot: self.df0dot[j],
            df1dot: self.df1dot[j],
        }
    }

    pub fn frames(&self) -> Vec<LocalFrame> {
        (0..self.grid.nodes).map(|j| self.frame(j)).collect()
    }

    /// Frames at the half-nodes, by quintic interpolation of each field.
    pub fn midpoint_frames(&self) -> Vec<LocalFrame> {
        let u = midpoints(&self.f1dot);
        let uu = midpoints(&self.f1ddot);
        let p = midpoints(&self.df0);
        let q = midpoints(&self.df1);
        let pd = midpoints(&self.df0dot);
        let qd = midpoints(&self.df1dot);
        let h = self.grid.step();
        (0..self.grid.nodes - 1)
            .map(|j| LocalFrame {
                index: self.index,
                t: self.grid.t(j) + 0.5 * h,
                f1dot: u[j],
                f1ddot: uu[j],
                df0: p[j],
                df1: q[j],
                df0dot: pd[j],
                df1dot: qd[j],
            })
            .collect()
    }

    /// First node whose frame is degenerate, reported as an error.
    pub fn require_generic(&self) -> Result<()> {
        (0..self.grid.nodes).try_for_each(|j| self.frame(j).require_generic(j))
    }
}

/// Frame of interior curve `i` at node `j`.
pub fn frame_at(surface: &SampledSurface, i: usize, j: usize) -> Result<LocalFrame> {
    surface.check_interior(i)?;
    surface.grid.check_node(j)?;
    let d1 = surface.grid.diff_operator(1);
    let d2 = surface.grid.diff_operator(2);
    let (prev, mid, next) = (&surface.curves[i - 1], &surface.curves[i], &surface.curves[i + 1]);
    let dprev = d1.apply_at(prev, j);
    let dmid = d1.apply_at(mid, j);
    let dnext = d1.apply_at(next, j);
    Ok(LocalFrame {
        index: i,
        t: surface.grid.t(j),
        f1dot: dmid,
        f1ddot: d2.apply_at(mid, j),
        df0: mid[j] - prev[j],
        df1: next[j] - mid[j],
        df0dot: dmid - dprev,
        df1dot: dnext - dmid,
    })
}

/// Classes of inner-geometry quantities, each indexed by curve or ribbon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InvariantClass {
    /// `|f_i'|`, i = 0..=n
    TangentNorm,
    /// `|Δf_i|`, i = 0..n
    RulingNorm,
    /// `<f_i', Δf_{i-1}>`, i = 1..=n
    TangentPrevRuling,
    /// `<f_i', Δf_i>`, i = 0..n
    TangentNextRuling,
    /// `<f_i', f_{i+1}'>`, i = 0..n
    TangentTangent,
}

impl InvariantClass {
    pub const ALL: [InvariantClass; 5] = [
        InvariantClass::TangentNorm,
        InvariantClass::RulingNorm,
        InvariantClass::TangentPrevRuling,
        InvariantClass::TangentNextRuling,
        InvariantClass::TangentTangent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InvariantClass::TangentNorm => "tangent_norm",
            InvariantClass::RulingNorm => "ruling_norm",
            InvariantClass::TangentPrevRuling => "tangent_prev_ruling",
            InvariantClass::TangentNextRuling => "tangent_next_ruling",
            InvariantClass::TangentTangent => "tangent_tangent",
        }
    }
}

/// All inner-geometry quantities of a surface at every node.
///
/// For a 2-ribbon surface the five classes hold 3 + 2 + 2 + 2 + 2 = 11 functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantField {
    pub grid: Grid,
    pub tangent_norm: Vec<Vec<f64>>,
    pub ruling_norm: Vec<Vec<f64>>,
    pub tangent_prev_ruling: Vec<Vec<f64>>,
    pub tangent_next_ruling: Vec<Vec<f64>>,
    pub tangent_tangent: Vec<Vec<f64>>,
}

impl InvariantField {
    pub fn from_parts(grid: Grid, tangents: &[Vec<Vec3>], rulings: &[Vec<Vec3>]) -> Self {
        let n = rulings.len();
        let nodes = grid.nodes;
        let per = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..nodes).map(f).collect() };
        Self {
            grid,
            tangent_norm: (0..=n).map(|i| per(&|j| tangents[i][j].norm())).collect(),
            ruling_norm: (0..n).map(|i| per(&|j| rulings[i][j].norm())).collect(),
            tangent_prev_ruling: (1..=n).map(|i| per(&|j| tangents[i][j].dot(&rulings[i - 1][j]))).collect(),
            tangent_next_ruling: (0..n).map(|i| per(&|j| tangents[i][j].dot(&rulings[i][j]))).collect(),
            tangent_tangent: (0..n).map(|i| per(&|j| tangents[i][j].dot(&tangents[i + 1][j]))).collect(),
        }
    }

    pub fn class(&self, class: InvariantClass) -> &[Vec<f64>] {
        match class {
            InvariantClass::TangentNorm => &self.tangent_norm,
            InvariantClass::RulingNorm => &self.ruling_norm,
            InvariantClass::TangentPrevRuling => &self.tangent_prev_ruling,
            InvariantClass::TangentNextRuling => &self.tangent_next_ruling,
            InvariantClass::TangentTangent => &self.tangent_tangent,
        }
    }

    /// Number of scalar functions (for a 2-ribbon surface, 11).
    pub fn function_count(&self) -> usize {
        InvariantClass::ALL.iter().map(|&c| self.class(c).len()).sum()
    }

    /// Natural magnitude of each class: the largest tangent length, ruling
    /// length, or product of the two, as appropriate.
    pub fn class_scale(&self, class: InvariantClass) -> f64 {
        let max_of = |rows: &[Vec<f64>]| rows.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        let t = max_of(&self.tangent_norm);
        let r = max_of(&self.ruling_norm);
        match class {
            InvariantClass::TangentNorm => t,
            InvariantClass::RulingNorm => r,
            InvariantClass::TangentPrevRuling | InvariantClass::TangentNextRuling => t * r,
            InvariantClass::TangentTangent => t * t,
        }
    }

    /// Entry-wise `self - other`.
    pub fn difference(&self, other: &InvariantField) -> InvariantField {
        let sub = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
            a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u - v).collect()).collect()
        };
        InvariantField {
            grid: self.grid,
            tangent_norm: sub(&self.tangent_norm, &other.tangent_norm),
            ruling_norm: sub(&self.ruling_norm, &other.ruling_norm),
            tangent_prev_ruling: sub(&self.tangent_prev_ruling, &other.tangent_prev_ruling),
            tangent_next_ruling: sub(&self.tangent_next_ruling, &other.tangent_next_ruling),
            tangent_tangent: sub(&self.tangent_tangent, &other.tangent_tangent),
        }
    }

    pub fn max_abs(&self, class: InvariantClass) -> f64 {
        self.class(class).iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Inner geometry of `surface` at every node.
pub fn inner_geometry(surface: &SampledSurface) -> InvariantField {
    let d1 = surface.grid.diff_operator(1);
    let tangents: Vec<Vec<Vec3>> = surface.curves.iter().map(|c| d1.apply(c)).collect();
    let rulings: Vec<Vec<Vec3>> =
        surface.curves.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect()).collect();
    InvariantField::from_parts(surface.grid, &tangents, &rulings)
}

/// Where the coplanarity margin is smallest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarginLocation {
    pub margin: f64,
    pub node: usize,
    pub curve: usize,
}

/// Smallest scale-free margin `|(f_i', Δf_{i-1}, Δf_i)| / (|f_i'| |Δf_{i-1}| |Δf_i|)`
/// over interior curves and nodes, with its location.
pub fn genericity_location(surface: &SampledSurface) -> Result<MarginLocation> {
    if surface.ribbons() < 2 {
        return Err(FlexError::InvalidArgument("genericity needs at least two ribbons".into()));
    }
    let d1 = surface.grid.diff_operator(1);
    let tangents: Vec<Vec<Vec3>> = surface.curves.iter().map(|c| d1.apply(c)).collect();
    let mut best = MarginLocation { margin: f64::INFINITY, node: 0, curve: 1 };
    for j in 0..surface.grid.nodes {
        for i in 1..surface.ribbons() {
            let u = tangents[i][j];
            let p = surface.curves[i][j] - surface.curves[i - 1][j];
            let q = surface.curves[i + 1][j] - surface.curves[i][j];
            let m = coplanarity_margin(&u, &p, &q)
                .ok_or_else(|| FlexError::degenerate(j, i, "zero-length tangent or ruling", 0.0))?;
            if m < best.margin {
                best = MarginLocation { margin: m, node: j, curve: i };
            }
        }
    }
    Ok(best)
}

pub fn genericity_margin(surface: &SampledSurface) -> Result<f64> {
    genericity_location(surface).map(|l| l.margin)
}

/// Fails on the first node (in grid order) where some interior frame falls
/// below [`DEGENERACY_THRESHOLD`].
pub fn require_generic(surface: &SampledSurface) -> Result<()> {
    let fields: Vec<PairFields> =
        (1..surface.ribbons()).map(|i| PairFields::from_surface(surface, i)).collect::<Result<_>>()?;
    for j in 0..surface.grid.nodes {
        for f in &fields {
            f.frame(j).require_generic(j)?;
        }
    }
    Ok(())
}
