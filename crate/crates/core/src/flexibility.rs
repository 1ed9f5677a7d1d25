//! Infinitesimal flexibility of 3-ribbon surfaces: the functionals `Λ`, `H_i`
//! and `χ = Λ̇ − (H₂ − H₁)Λ`, the shifts of `DΦ` along and across ribbons,
//! the integrated (monodromy) form of `χ = 0`, the unit-determinant
//! normalization and the reduction of n-ribbon surfaces to 3-ribbon windows.

use serde::Serialize;

use crate::error::{FlexError, Result};
use crate::geometry::{coplanarity_margin, triple, SampledSurface, DEGENERACY_THRESHOLD};
use crate::numeric::cumulative_integral;
use crate::Vec3;

/// Default bound on normalized `max |χ|` for a flexible verdict.
pub const DEFAULT_TOL_CHI: f64 = 1e-6;
const SCALE_FLOOR: f64 = 1e-30;

/// Tangents, accelerations, rulings and ruling derivatives of every curve.
#[derive(Clone, Debug)]
pub struct SurfaceFields {
    pub tangent: Vec<Vec<Vec3>>,
    pub accel: Vec<Vec<Vec3>>,
    pub ruling: Vec<Vec<Vec3>>,
    pub ruling_dot: Vec<Vec<Vec3>>,
}

impl SurfaceFields {
    pub fn new(surface: &SampledSurface) -> Self {
        let d = surface.derivatives();
        let diff = |v: &[Vec<Vec3>]| -> Vec<Vec<Vec3>> {
            v.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect()).collect()
        };
        Self { ruling: diff(surface.curves()), ruling_dot: diff(&d.first), tangent: d.first, accel: d.second }
    }

    pub fn nodes(&self) -> usize {
        self.tangent[0].len()
    }

    /// `(ḟ_i, Δf_{i-1}, Δf_i)` at node `j`, checked against the degeneracy threshold.
    fn frame_det(&self, i: usize, j: usize) -> Result<f64> {
        let (u, p, q) = (&self.tangent[i][j], &self.ruling[i - 1][j], &self.ruling[i][j]);
        checked_triple(u, p, q, j, i, "tangent and rulings are coplanar")
    }

    /// `H_i` at node `j`.
    pub fn h(&self, i: usize, j: usize) -> Result<f64> {
        let d = self.frame_det(i, j)?;
        let u = &self.tangent[i][j];
        let num = triple(u, &self.ruling_dot[i - 1][j], &self.ruling[i][j])
            + triple(u, &self.ruling[i - 1][j], &self.ruling_dot[i][j]);
        Ok(num / d)
    }

    /// `Λ` of the window whose middle curves are `first + 1` and `first + 2`.
    pub fn lambda(&self, first: usize, j: usize) -> Result<f64> {
        let (c1, c2) = (first + 1, first + 2);
        let det1 = self.frame_det(c1, j)?;
        let (u2, a2, r2) = (&self.tangent[c2][j], &self.accel[c2][j], &self.ruling[c2][j]);
        let den = checked_triple(u2, a2, r2, j, c2, "curvature triple of the outer ribbon vanishes")?;
        let num = triple(&self.tangent[c1][j], &self.accel[c1][j], &self.ruling[c1 - 1][j]);
        let det2 = triple(u2, &self.ruling[c1][j], r2);
        Ok(num / den * (det2 * det2) / (det1 * det1))
    }
}

fn checked_triple(a: &Vec3, b: &Vec3, c: &Vec3, node: usize, curve: usize, what: &str) -> Result<f64> {
    match coplanarity_margin(a, b, c) {
        Some(m) if m >= DEGENERACY_THRESHOLD => Ok(triple(a, b, c)),
        Some(m) => Err(FlexError::degenerate(node, curve, what, m)),
        None => Err(FlexError::degenerate(node, curve, format!("{what} (zero-length vector)"), 0.0)),
    }
}

fn require_ribbons(surface: &SampledSurface, n: usize) -> Result<()> {
    if surface.ribbons() != n {
        return Err(FlexError::InvalidArgument(format!(
            "expected a {n}-ribbon surface, got {} ribbons",
            surface.ribbons()
        )));
    }
    Ok(())
}

fn require_node(surface: &SampledSurface, j: usize) -> Result<()> {
    if j >= surface.grid().nodes {
        return Err(FlexError::IndexOutOfRange {
            what: "node",
            index: j,
            valid: format!("0..{}", surface.grid().nodes),
        });
    }
    Ok(())
}

/// `Λ = [(ḟ₁, f̈₁, Δf₀) / (ḟ₂, f̈₂, Δf₂)] · [(ḟ₂, Δf₁, Δf₂)² / (ḟ₁, Δf₀, Δf₁)²]` at `node`.
pub fn lambda_fn(surface3: &SampledSurface, node: usize) -> Result<f64> {
    require_ribbons(surface3, 3)?;
    require_node(surface3, node)?;
    SurfaceFields::new(surface3).lambda(0, node)
}

/// `H_i = [(ḟ_i, Δḟ_{i−1}, Δf_i) + (ḟ_i, Δf_{i−1}, Δḟ_i)] / (ḟ_i, Δf_{i−1}, Δf_i)`.
pub fn h_fn(surface: &SampledSurface, i: usize, node: usize) -> Result<f64> {
    if i == 0 || i >= surface.ribbons() {
        return Err(FlexError::IndexOutOfRange {
            what: "interior curve",
            index: i,
            valid: format!("1..={}", surface.ribbons().saturating_sub(1)),
        });
    }
    require_node(surface, node)?;
    SurfaceFields::new(surface).h(i, node)
}

/// `Λ`, `H₁`, `H₂` of a 3-ribbon window at every node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TripleProfile {
    pub lambda: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

/// Profiles of the window made of curves `first ..= first + 3`.
pub fn window_profile(fields: &SurfaceFields, first: usize) -> Result<TripleProfile> {
    let n = fields.nodes();
    let mut out = TripleProfile { lambda: Vec::with_capacity(n), h1: Vec::with_capacity(n), h2: Vec::with_capacity(n) };
    for j in 0..n {
        out.h1.push(fields.h(first + 1, j)?);
        out.h2.push(fields.h(first + 2, j)?);
        out.lambda.push(fields.lambda(first, j)?);
    }
    Ok(out)
}

pub fn triple_profile(surface3: &SampledSurface) -> Result<TripleProfile> {
    require_ribbons(surface3, 3)?;
    window_profile(&SurfaceFields::new(surface3), 0)
}

/// Running integral of `H₁` from the first node.
fn cumulative_h(surface: &SampledSurface, i: usize) -> Result<Vec<f64>> {
    let fields = SurfaceFields::new(surface);
    let h: Vec<f64> = (0..surface.grid().nodes).map(|j| fields.h(i, j)).collect::<Result<_>>()?;
    Ok(cumulative_integral(&h, surface.grid().step()))
}

/// `DΦ(t₂) = DΦ(t₁) · exp(∫_{t₁}^{t₂} H₁ dt)` for the pair around curve 1.
pub fn continuous_shift(surface: &SampledSurface, dphi_t1: f64, node1: usize, node2: usize) -> Result<f64> {
    require_node(surface, node1)?;
    require_node(surface, node2)?;
    if surface.ribbons() < 2 {
        return Err(FlexError::InvalidArgument("need at least two ribbons".into()));
    }
    if node1 == node2 || dphi_t1 == 0.0 {
        return Ok(dphi_t1);
    }
    let c = cumulative_h(surface, 1)?;
    Ok(dphi_t1 * (c[node2] - c[node1]).exp())
}

/// `DΦ₂ = Λ · DΦ₁` at `node`.
pub fn discrete_shift(surface3: &SampledSurface, dphi1: f64, node: usize) -> Result<f64> {
    Ok(lambda_fn(surface3, node)? * dphi1)
}

/// Which middle curve's acceleration a curvature variation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CurvatureCurve {
    First,
    Second,
}

/// Variation of `<f̈₁, f̈₁>` (or `<f̈₂, f̈₂>`) induced by a flexion with the given `DΦ₁`.
pub fn d_curvature_sq(surface3: &SampledSurface, dphi1: f64, node: usize, which: CurvatureCurve) -> Result<f64> {
    require_ribbons(surface3, 3)?;
    require_node(surface3, node)?;
    let f = SurfaceFields::new(surface3);
    let j = node;
    let (u1, a1) = (&f.tangent[1][j], &f.accel[1][j]);
    let det1 = f.frame_det(1, j)?;
    let first = 2.0 * triple(u1, a1, &f.ruling[0][j]) * triple(u1, a1, &f.ruling[1][j]) / (det1 * det1) * dphi1;
    match which {
        CurvatureCurve::First => Ok(first),
        CurvatureCurve::Second => {
            let den = checked_triple(u1, a1, &f.ruling[1][j], j, 1, "curvature triple of the middle ribbon vanishes")?;
            Ok(triple(&f.tangent[2][j], &f.accel[2][j], &f.ruling[1][j]) / den * first)
        }
    }
}

/// `DΦ₂` obtained through the curvature variations instead of `Λ`.
pub fn dphi2_via_curvatures(surface3: &SampledSurface, dphi1: f64, node: usize) -> Result<f64> {
    let d2 = d_curvature_sq(surface3, dphi1, node, CurvatureCurve::Second)?;
    let f = SurfaceFields::new(surface3);
    let j = node;
    let (u2, a2) = (&f.tangent[2][j], &f.accel[2][j]);
    let det2 = f.frame_det(2, j)?;
    let c1 = checked_triple(u2, a2, &f.ruling[1][j], j, 2, "curvature triple vanishes")?;
    let c2 = checked_triple(u2, a2, &f.ruling[2][j], j, 2, "curvature triple vanishes")?;
    Ok(d2 * det2 * det2 / (2.0 * c1 * c2))
}

/// `DΦ₁` and `DΦ₂` at every node for a flexion with `DΦ₁(a) = dphi1_start`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhiVariation {
    pub dphi1: Vec<f64>,
    pub dphi2: Vec<f64>,
}

pub fn phi_variation(surface3: &SampledSurface, dphi1_start: f64) -> Result<PhiVariation> {
    let p = triple_profile(surface3)?;
    let c = cumulative_integral(&p.h1, surface3.grid().step());
    let dphi1: Vec<f64> = c.iter().map(|v| dphi1_start * v.exp()).collect();
    let dphi2 = dphi1.iter().zip(&p.lambda).map(|(d, l)| d * l).collect();
    Ok(PhiVariation { dphi1, dphi2 })
}

/// `χ` samples and their normalization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiProfile {
    pub chi: Vec<f64>,
    /// Size of the terms of `χ`: the larger of `max |Λ̇|` and `max (|H₁| + |H₂|)|Λ|`.
    pub scale: f64,
    pub normalized_max: f64,
}

/// `χ = Λ̇ − (H₂ − H₁)Λ` from sampled profiles, `Λ̇` by the grid stencil.
pub fn chi_from_profile(profile: &TripleProfile, grid: crate::Grid) -> ChiProfile {
    let lambda_dot = grid.diff_operator(1).apply(&profile.lambda);
    let chi: Vec<f64> = (0..profile.lambda.len())
        .map(|j| lambda_dot[j] - (profile.h2[j] - profile.h1[j]) * profile.lambda[j])
        .collect();
    let scale = chi_scale(profile, &lambda_dot);
    let normalized_max = chi.iter().fold(0.0, |m: f64, v| m.max(v.abs())) / scale;
    ChiProfile { chi, scale, normalized_max }
}

fn chi_scale(profile: &TripleProfile, lambda_dot: &[f64]) -> f64 {
    let a = lambda_dot.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let b = (0..profile.lambda.len())
        .map(|j| (profile.h1[j].abs() + profile.h2[j].abs()) * profile.lambda[j].abs())
        .fold(0.0, f64::max);
    a.max(b).max(SCALE_FLOOR)
}

pub fn chi(surface3: &SampledSurface) -> Result<ChiProfile> {
    Ok(chi_from_profile(&triple_profile(surface3)?, surface3.grid()))
}

/// Integrated form of `χ = 0` between two nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Monodromy {
    /// `log|Λ(t₂)| − log|Λ(t₁)| + ∫(H₁ − H₂)`, or the relative multiplicative
    /// defect when `Λ` changes sign in between.
    pub signed: f64,
    pub residual: f64,
    pub multiplicative: bool,
}

pub fn monodromy_from_profile(profile: &TripleProfile, step: f64, node1: usize, node2: usize) -> Monodromy {
    if node1 == node2 {
        return Monodromy { signed: 0.0, residual: 0.0, multiplicative: false };
    }
    let (lo, hi) = (node1.min(node2), node1.max(node2));
    let same_sign = profile.lambda[lo..=hi].iter().all(|l| l.signum() == profile.lambda[lo].signum() && *l != 0.0);
    let diff: Vec<f64> = profile.h1.iter().zip(&profile.h2).map(|(a, b)| a - b).collect();
    let c = cumulative_integral(&diff, step);
    let integral = c[node2] - c[node1];
    let (l1, l2) = (profile.lambda[node1], profile.lambda[node2]);
    if same_sign {
        let signed = l2.abs().ln() - l1.abs().ln() + integral;
        Monodromy { signed, residual: signed.abs(), multiplicative: false }
    } else {
        let c1 = cumulative_integral(&profile.h1, step);
        let c2 = cumulative_integral(&profile.h2, step);
        let left = l2 * (c1[node2] - c1[node1]).exp();
        let right = l1 * (c2[node2] - c2[node1]).exp();
        let signed = (left - right) / left.abs().max(right.abs()).max(SCALE_FLOOR);
        Monodromy { signed, residual: signed.abs(), multiplicative: true }
    }
}

pub fn monodromy_check(surface3: &SampledSurface, node1: usize, node2: usize) -> Result<Monodromy> {
    require_node(surface3, node1)?;
    require_node(surface3, node2)?;
    let p = triple_profile(surface3)?;
    Ok(monodromy_from_profile(&p, surface3.grid().step(), node1, node2))
}

/// The rescaled surface `w₀ = f₁ − Δf₀/(ḟ₁, Δf₀, Δf₁)`, `w₁ = f₁`, `w₂ = f₂`,
/// `w₃ = f₂ + Δf₂/(ḟ₂, Δf₁, Δf₂)`, whose two frame determinants are 1.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedSurface {
    pub surface: SampledSurface,
    /// Largest deviation of either frame determinant from 1.
    pub product_defect: f64,
}

pub fn normalize_w(surface3: &SampledSurface) -> Result<NormalizedSurface> {
    require_ribbons(surface3, 3)?;
    let f = SurfaceFields::new(surface3);
    let n = surface3.grid().nodes;
    let mut w0 = Vec::with_capacity(n);
    let mut w3 = Vec::with_capacity(n);
    for j in 0..n {
        let det1 = f.frame_det(1, j)?;
        let det2 = f.frame_det(2, j)?;
        w0.push(surface3.curve(1)[j] - f.ruling[0][j] / det1);
        w3.push(surface3.curve(2)[j] + f.ruling[2][j] / det2);
    }
    let w = SampledSurface::new(surface3.grid(), vec![w0, surface3.curve(1).to_vec(), surface3.curve(2).to_vec(), w3])?;
    let fw = SurfaceFields::new(&w);
    let mut defect = 0.0_f64;
    for j in 0..n {
        for i in 1..=2 {
            defect = defect.max((fw.frame_det(i, j)? - 1.0).abs());
        }
    }
    Ok(NormalizedSurface { surface: w, product_defect: defect })
}

/// `Λ = (ẇ₁, ẅ₁, Δw₀) / (ẇ₂, ẅ₂, Δw₂)`, valid on a normalized surface.
pub fn lambda_normalized(w: &SampledSurface, node: usize) -> Result<f64> {
    require_ribbons(w, 3)?;
    require_node(w, node)?;
    let f = SurfaceFields::new(w);
    let j = node;
    let den = checked_triple(&f.tangent[2][j], &f.accel[2][j], &f.ruling[2][j], j, 2, "curvature triple vanishes")?;
    Ok(triple(&f.tangent[1][j], &f.accel[1][j], &f.ruling[0][j]) / den)
}

/// `H_i = −(ẅ_i, Δw_{i−1}, Δw_i)`, valid on a normalized surface.
pub fn h_normalized(w: &SampledSurface, i: usize, node: usize) -> Result<f64> {
    if i == 0 || i >= w.ribbons() {
        return Err(FlexError::IndexOutOfRange {
            what: "interior curve",
            index: i,
            valid: format!("1..={}", w.ribbons() - 1),
        });
    }
    require_node(w, node)?;
    let f = SurfaceFields::new(w);
    Ok(-triple(&f.accel[i][node], &f.ruling[i - 1][node], &f.ruling[i][node]))
}

/// m-th derivative of `χ` in the flexion parameter, by central differences
/// over consecutive trajectory frames.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiDerivative {
    pub order: usize,
    /// Per frame where the stencil fits, per node.
    pub values: Vec<Vec<f64>>,
    /// `max |Dᵐχ|` divided by the `χ` scale of the first frame.
    pub normalized_max: f64,
}

pub fn higher_order_chi(frames: &[SampledSurface], step: f64, order: usize) -> Result<ChiDerivative> {
    let (offsets, weights): (&[isize], &[f64]) = match order {
        1 => (&[-1, 1], &[-0.5, 0.5]),
        2 => (&[-1, 0, 1], &[1.0, -2.0, 1.0]),
        3 => (&[-2, -1, 1, 2], &[-0.5, 1.0, -1.0, 0.5]),
        _ => return Err(FlexError::InvalidArgument(format!("derivative order must be 1, 2 or 3, got {order}"))),
    };
    let reach = offsets.iter().map(|o| o.unsigned_abs()).max().unwrap_or(0);
    if frames.len() < 2 * reach + 1 {
        return Err(FlexError::TrajectoryTooShort { frames: frames.len(), needed: 2 * reach + 1 });
    }
    if step.is_nan() || step <= 0.0 {
        return Err(FlexError::InvalidArgument("flexion step must be positive".into()));
    }
    let chis: Vec<ChiProfile> = frames.iter().map(chi).collect::<Result<_>>()?;
    let scale = chis[0].scale;
    let denom = step.powi(order as i32);
    let mut values = Vec::new();
    let mut worst = 0.0_f64;
    for k in reach..frames.len() - reach {
        let row: Vec<f64> = (0..chis[k].chi.len())
            .map(|j| {
                offsets.iter().zip(weights).map(|(o, w)| w * chis[(k as isize + o) as usize].chi[j]).sum::<f64>()
                    / denom
            })
            .collect();
        worst = row.iter().fold(worst, |m, v| m.max(v.abs()));
        values.push(row);
    }
    Ok(ChiDerivative { order, values, normalized_max: worst / scale })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Flexible,
    Rigid,
    Indeterminate,
}

/// Analysis of one 3-ribbon window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlexReport {
    /// Index of the first curve of the window.
    pub first: usize,
    pub verdict: Verdict,
    pub profile: Option<TripleProfile>,
    pub chi: Option<ChiProfile>,
    pub monodromy: Option<Monodromy>,
    /// Why the window could not be analysed, with the failing node.
    pub error: Option<String>,
    pub degenerate_node: Option<usize>,
}

impl FlexReport {
    pub fn chi_normalized(&self) -> Option<f64> {
        self.chi.as_ref().map(|c| c.normalized_max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NRibbonReport {
    pub tol_chi: f64,
    pub node1: usize,
    pub node2: usize,
    pub triples: Vec<FlexReport>,
    pub verdict: Verdict,
}

/// Runs the 3-ribbon test on one window.
pub fn window_report(
    fields: &SurfaceFields,
    surface: &SampledSurface,
    first: usize,
    node1: usize,
    node2: usize,
    tol_chi: f64,
) -> FlexReport {
    match window_profile(fields, first) {
        Ok(profile) => {
            let chi = chi_from_profile(&profile, surface.grid());
            let mono = monodromy_from_profile(&profile, surface.grid().step(), node1, node2);
            let verdict = if chi.normalized_max <= tol_chi { Verdict::Flexible } else { Verdict::Rigid };
            FlexReport {
                first,
                verdict,
                profile: Some(profile),
                chi: Some(chi),
                monodromy: Some(mono),
                error: None,
                degenerate_node: None,
            }
        }
        Err(e) => FlexReport {
            first,
            verdict: Verdict::Indeterminate,
            profile: None,
            chi: None,
            monodromy: None,
            degenerate_node: e.node(),
            error: Some(e.to_string()),
        },
    }
}

/// Tests every window of curves `i ..= i + 3`; the surface is flexible when
/// every window is, rigid when some window is rigid.
pub fn nribbon_infinitesimal_report(surface: &SampledSurface, tol_chi: f64) -> Result<NRibbonReport> {
    nribbon_report_between(surface, 0, surface.grid().nodes - 1, tol_chi)
}

pub fn nribbon_report_between(
    surface: &SampledSurface,
    node1: usize,
    node2: usize,
    tol_chi: f64,
) -> Result<NRibbonReport> {
    if surface.ribbons() < 3 {
        return Err(FlexError::InvalidArgument(format!(
            "flexibility test needs at least 3 ribbons, got {}",
            surface.ribbons()
        )));
    }
    require_node(surface, node1)?;
    require_node(surface, node2)?;
    let fields = SurfaceFields::new(surface);
    let triples: Vec<FlexReport> =
        (0..=surface.ribbons() - 3).map(|i| window_report(&fields, surface, i, node1, node2, tol_chi)).collect();
    let verdict = if triples.iter().any(|t| t.verdict == Verdict::Rigid) {
        Verdict::Rigid
    } else if triples.iter().all(|t| t.verdict == Verdict::Flexible) {
        Verdict::Flexible
    } else {
        Verdict::Indeterminate
    };
    Ok(NRibbonReport { tol_chi, node1, node2, triples, verdict })
}
