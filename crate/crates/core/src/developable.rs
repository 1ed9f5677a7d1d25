//! Developable ribbons: detection, ruling decomposition `Δf_i = a_i ḟ_i + b_i ḟ_{i+1}`,
//! the closed form for `H_i` and the angle behaviour along a flexion.

use nalgebra::{Matrix3x2, Vector2};
use serde::Serialize;

use crate::error::{FlexError, Result};
use crate::geometry::{coplanarity_margin, SampledSurface, DEGENERACY_THRESHOLD};
use crate::Vec3;

/// Default scale-free bound on `|(ḟ_i, Δf_i, ḟ_{i+1})|` for a developable ribbon.
pub const DEFAULT_TOL_DEV: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DevelopabilityVerdict {
    pub ribbon: usize,
    pub developable: bool,
    pub max_residual: f64,
    pub worst_node: usize,
}

fn check_ribbon(surface: &SampledSurface, i: usize) -> Result<()> {
    if i >= surface.ribbons() {
        return Err(FlexError::IndexOutOfRange {
            what: "ribbon",
            index: i,
            valid: format!("0..{}", surface.ribbons()),
        });
    }
    Ok(())
}

struct RibbonVectors {
    tangent: Vec<Vec3>,
    next_tangent: Vec<Vec3>,
    ruling: Vec<Vec3>,
}

fn ribbon_vectors(surface: &SampledSurface, i: usize) -> Result<RibbonVectors> {
    check_ribbon(surface, i)?;
    let d1 = surface.grid().diff_operator(1);
    Ok(RibbonVectors {
        tangent: d1.apply(surface.curve(i)),
        next_tangent: d1.apply(surface.curve(i + 1)),
        ruling: surface.curve(i + 1).iter().zip(surface.curve(i)).map(|(a, b)| a - b).collect(),
    })
}

/// Ribbon `i` is developable when `ḟ_i`, `Δf_i`, `ḟ_{i+1}` are linearly dependent
/// at every node, up to the scale-free tolerance `tol`.
pub fn is_developable(surface: &SampledSurface, i: usize, tol: f64) -> Result<DevelopabilityVerdict> {
    let v = ribbon_vectors(surface, i)?;
    let mut worst = (0.0_f64, 0);
    for j in 0..surface.grid().nodes {
        let m = coplanarity_margin(&v.tangent[j], &v.ruling[j], &v.next_tangent[j])
            .ok_or_else(|| FlexError::degenerate(j, i, "zero-length tangent or ruling", 0.0))?;
        if m > worst.0 {
            worst = (m, j);
        }
    }
    Ok(DevelopabilityVerdict { ribbon: i, developable: worst.0 <= tol, max_residual: worst.0, worst_node: worst.1 })
}

/// Per-node coefficients of `Δf_i = a ḟ_i + b ḟ_{i+1}` with the least-squares
/// residual `|Δf_i − a ḟ_i − b ḟ_{i+1}|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RulingCoefficients {
    pub ribbon: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub residual: Vec<f64>,
}

impl RulingCoefficients {
    /// Largest residual relative to the ruling length.
    pub fn max_relative_residual(&self, surface: &SampledSurface) -> f64 {
        let i = self.ribbon;
        self.residual
            .iter()
            .enumerate()
            .map(|(j, r)| r / (surface.curve(i + 1)[j] - surface.curve(i)[j]).norm())
            .fold(0.0, f64::max)
    }
}

fn decompose(tangent: &Vec3, next_tangent: &Vec3, ruling: &Vec3) -> Option<(f64, f64, f64)> {
    let parallel = tangent.cross(next_tangent).norm() / (tangent.norm() * next_tangent.norm());
    if parallel.is_nan() || parallel < DEGENERACY_THRESHOLD {
        return None;
    }
    let m = Matrix3x2::from_columns(&[*tangent, *next_tangent]);
    let mtm = m.transpose() * m;
    let ab: Vector2<f64> = mtm.cholesky()?.solve(&(m.transpose() * ruling));
    let residual = (ruling - m * ab).norm();
    Some((ab[0], ab[1], residual))
}

pub fn ruling_coefficients(surface: &SampledSurface, i: usize) -> Result<RulingCoefficients> {
    let v = ribbon_vectors(surface, i)?;
    let n = surface.grid().nodes;
    let mut out = RulingCoefficients {
        ribbon: i,
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        residual: Vec::with_capacity(n),
    };
    for j in 0..n {
        let (a, b, r) = decompose(&v.tangent[j], &v.next_tangent[j], &v.ruling[j])
            .ok_or(FlexError::NonUniqueDecomposition { ribbon: i, node: j })?;
        out.a.push(a);
        out.b.push(b);
        out.residual.push(r);
    }
    Ok(out)
}

/// `H_i = 1/b_i − 1/a_{i−1}` for an interior curve `i` whose two adjacent
/// ribbons are developable.
pub fn h_developable(surface: &SampledSurface, i: usize, node: usize) -> Result<f64> {
    if i == 0 || i >= surface.ribbons() {
        return Err(FlexError::IndexOutOfRange {
            what: "interior curve",
            index: i,
            valid: format!("1..={}", surface.ribbons().saturating_sub(1)),
        });
    }
    if node >= surface.grid().nodes {
        return Err(FlexError::IndexOutOfRange {
            what: "node",
            index: node,
            valid: format!("0..{}", surface.grid().nodes),
        });
    }
    let coeff = |ribbon: usize| -> Result<(f64, f64)> {
        let v = ribbon_vectors(surface, ribbon)?;
        let (t, nt, r) = (&v.tangent[node], &v.next_tangent[node], &v.ruling[node]);
        let m = coplanarity_margin(t, r, nt)
            .ok_or_else(|| FlexError::degenerate(node, ribbon, "zero-length vector", 0.0))?;
        if m > DEFAULT_TOL_DEV {
            return Err(FlexError::InvalidArgument(format!(
                "ribbon {ribbon} is not developable at node {node} (residual {m:e})"
            )));
        }
        let (a, b, _) = decompose(t, nt, r).ok_or(FlexError::NonUniqueDecomposition { ribbon, node })?;
        Ok((a, b))
    };
    let (a_prev, _) = coeff(i - 1)?;
    let (_, b) = coeff(i)?;
    h_from_coefficients(a_prev, b).map_err(|_| FlexError::degenerate(node, i, "zero ruling coefficient", 0.0))
}

/// `1/b − 1/a`.
pub fn h_from_coefficients(a_prev: f64, b: f64) -> Result<f64> {
    if a_prev == 0.0 || b == 0.0 {
        return Err(FlexError::InvalidArgument("ruling coefficient is zero".into()));
    }
    Ok(1.0 / b - 1.0 / a_prev)
}

/// Replaces both rulings of a 2-ribbon surface by unit vectors, keeping the
/// middle curve.
pub fn unit_normalize(ribbon2: &SampledSurface) -> Result<SampledSurface> {
    if ribbon2.ribbons() != 2 {
        return Err(FlexError::InvalidArgument("unit normalization applies to 2-ribbon surfaces".into()));
    }
    let mid = ribbon2.curve(1);
    let mut c0 = Vec::with_capacity(mid.len());
    let mut c2 = Vec::with_capacity(mid.len());
    for j in 0..mid.len() {
        let d0 = mid[j] - ribbon2.curve(0)[j];
        let d1 = ribbon2.curve(2)[j] - mid[j];
        let (n0, n1) = (d0.norm(), d1.norm());
        if n0 == 0.0 || n1 == 0.0 {
            return Err(FlexError::degenerate(j, if n0 == 0.0 { 0 } else { 1 }, "zero ruling", 0.0));
        }
        c0.push(mid[j] - d0 / n0);
        c2.push(mid[j] + d1 / n1);
    }
    SampledSurface::new(ribbon2.grid(), vec![c0, mid.to_vec(), c2])
}

/// Cosine of the angle between `Δf₀` and `Δf₁` at every node.
pub fn cos_alpha(ribbon2: &SampledSurface) -> Vec<f64> {
    (0..ribbon2.grid().nodes)
        .map(|j| {
            let d0 = ribbon2.curve(1)[j] - ribbon2.curve(0)[j];
            let d1 = ribbon2.curve(2)[j] - ribbon2.curve(1)[j];
            (d0.dot(&d1) / (d0.norm() * d1.norm())).clamp(-1.0, 1.0)
        })
        .collect()
}

/// `cos α` over nodes and flexion frames, with the flexion parameter chosen so
/// that `cos α` at the anchor node is the parameter itself.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AngleTrace {
    pub anchor: usize,
    pub gamma: Vec<f64>,
    /// `cos_alpha[j][k]`: node `j`, frame `k`.
    pub cos_alpha: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearityReport {
    pub trace: AngleTrace,
    /// Largest affine-fit residual at a node over the spread of `cos α` there.
    pub max_defect: f64,
    pub worst_node: usize,
}

const SPREAD_FLOOR: f64 = 1e-12;

/// Measures how far `cos α(t, ·)` is from affine in the flexion parameter,
/// at every node `t`, after reparameterizing by `cos α` at `anchor`.
pub fn cos_alpha_linearity(frames: &[SampledSurface], anchor: usize) -> Result<LinearityReport> {
    let first = frames.first().ok_or(FlexError::TrajectoryTooShort { frames: 0, needed: 1 })?;
    let nodes = first.grid().nodes;
    if anchor >= nodes {
        return Err(FlexError::IndexOutOfRange { what: "anchor node", index: anchor, valid: format!("0..{nodes}") });
    }
    let per_frame: Vec<Vec<f64>> = frames.iter().map(cos_alpha).collect();
    let cos: Vec<Vec<f64>> = (0..nodes).map(|j| per_frame.iter().map(|c| c[j]).collect()).collect();
    let spread = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(*x), h.max(*x)));
        hi - lo
    };

    // Angles that do not move at all: nothing to reparameterize, nothing to fit.
    if cos.iter().all(|c| spread(c) <= SPREAD_FLOOR) {
        let gamma = (0..frames.len()).map(|k| k as f64).collect();
        return Ok(LinearityReport {
            trace: AngleTrace { anchor, gamma, cos_alpha: cos },
            max_defect: 0.0,
            worst_node: anchor,
        });
    }

    let gamma = cos[anchor].clone();
    let increasing = gamma.windows(2).all(|w| w[1] > w[0]);
    let decreasing = gamma.windows(2).all(|w| w[1] < w[0]);
    if frames.len() < 2 || !(increasing || decreasing) {
        let frame = gamma.windows(2).position(|w| w[1] == w[0] || (w[1] > w[0]) != increasing).map_or(0, |k| k + 1);
        return Err(FlexError::DegenerateAnchor { frame });
    }

    let mut worst = (0.0_f64, anchor);
    for (j, c) in cos.iter().enumerate() {
        let resid = affine_fit_residual(&gamma, c);
        let defect = resid / spread(c).max(SPREAD_FLOOR);
        if defect > worst.0 {
            worst = (defect, j);
        }
    }
    Ok(LinearityReport {
        trace: AngleTrace { anchor, gamma, cos_alpha: cos },
        max_defect: worst.0,
        worst_node: worst.1,
    })
}

/// Largest absolute residual of the least-squares line through `(x, y)`.
fn affine_fit_residual(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{developable, revolution};
    use crate::Grid;

    fn grid() -> Grid {
        Grid::new(0.0, 1.0, 201).unwrap()
    }

    #[test]
    fn cylinder_is_developable_but_not_decomposable() {
        let s = SampledSurface::from_fn(grid(), 1, |i, t| Vec3::new(t.cos(), t.sin(), i as f64)).unwrap();
        assert!(is_developable(&s, 0, DEFAULT_TOL_DEV).unwrap().developable);
        assert!(matches!(ruling_coefficients(&s, 0), Err(FlexError::NonUniqueDecomposition { ribbon: 0, node: 0 })));
    }

    #[test]
    fn tangent_ruling_gives_unit_first_coefficient() {
        // f_0 = (t, t², 0), f_1 = f_0 + ḟ_0 = (t + 1, t² + 2t, 0): Δf = ḟ_0.
        let s = SampledSurface::from_fn(grid(), 1, |i, t| {
            if i == 0 {
                Vec3::new(t, t * t, 0.0)
            } else {
                Vec3::new(t + 1.0, t * t + 2.0 * t, 0.0)
            }
        })
        .unwrap();
        let c = ruling_coefficients(&s, 0).unwrap();
        for j in 0..201 {
            assert!((c.a[j] - 1.0).abs() < 1e-9 && c.b[j].abs() < 1e-9);
        }
    }

    #[test]
    fn coefficients_are_scale_free() {
        let s = developable(grid(), 2, [2.0, -1.0, 3.0, -2.0]).unwrap();
        let big = s.map_points(|p| p * 3.5);
        let (a, b) = (ruling_coefficients(&s, 0).unwrap(), ruling_coefficients(&big, 0).unwrap());
        for j in 0..201 {
            assert!((a.a[j] - b.a[j]).abs() < 1e-9 && (a.b[j] - b.b[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_arithmetic() {
        assert_eq!(h_from_coefficients(2.0, -2.0).unwrap(), -1.0);
        assert_eq!(h_from_coefficients(1.5, 1.5).unwrap(), 0.0);
        assert!(h_from_coefficients(0.0, 1.0).is_err());
    }

    #[test]
    fn revolution_ribbons_are_developable() {
        // Rulings of these surfaces are horizontal chords of similar meridians,
        // so Δḟ_i is parallel to Δf_i.
        let s = revolution(grid(), 2, 0.5).unwrap();
        assert!(is_developable(&s, 0, DEFAULT_TOL_DEV).unwrap().developable);
    }

    #[test]
    fn unit_normalization() {
        let s = SampledSurface::from_fn(grid(), 2, |i, t| Vec3::new(t, 3.0 * i as f64, 0.0)).unwrap();
        let u = unit_normalize(&s).unwrap();
        assert!((u.curve(0)[5] - Vec3::new(s.grid().t(5), 2.0, 0.0)).norm() < 1e-15);
        assert!((u.curve(2)[5] - Vec3::new(s.grid().t(5), 4.0, 0.0)).norm() < 1e-15);
        let d = developable(grid(), 2, [2.0, -1.0, 3.0, -2.0]).unwrap();
        let n = unit_normalize(&d).unwrap();
        let want = cos_alpha(&d);
        for j in 0..201 {
            let a = n.curve(1)[j] - n.curve(0)[j];
            let b = n.curve(2)[j] - n.curve(1)[j];
            assert!((a.norm() - 1.0).abs() < 1e-12 && (b.norm() - 1.0).abs() < 1e-12);
            assert!((a.dot(&b) - want[j]).abs() < 1e-12);
        }
        let again = unit_normalize(&n).unwrap();
        for (a, b) in again.curves().iter().flatten().zip(n.curves().iter().flatten()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn rigid_frames_have_zero_defect() {
        let s = developable(grid(), 2, [2.0, -1.0, 3.0, -2.0]).unwrap();
        let frames: Vec<_> = (0..5)
            .map(|k| {
                let r = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), 0.1 * k as f64);
                s.map_points(|p| r * p)
            })
            .collect();
        assert_eq!(cos_alpha_linearity(&frames, 0).unwrap().max_defect, 0.0);
    }

    #[test]
    fn anchor_must_move_monotonically() {
        let s = developable(grid(), 2, [2.0, -1.0, 3.0, -2.0]).unwrap();
        let moved = s.map_points(|p| Vec3::new(p.x, p.y, p.z * 1.1));
        let frames = vec![s.clone(), moved, s];
        assert!(matches!(cos_alpha_linearity(&frames, 0), Err(FlexError::DegenerateAnchor { .. })));
    }

    #[test]
    fn affine_residual_of_line_is_zero() {
        let x = [0.0, 1.0, 2.0, 3.0];
        assert!(affine_fit_residual(&x, &[1.0, 3.0, 5.0, 7.0]) < 1e-14);
        assert!(affine_fit_residual(&x, &[0.0, 1.0, 4.0, 9.0]) > 0.1);
    }
}
