//! Finite flexions: integrates `∂h/∂λ = V(h)` where `h` collects the tangent
//! of curve 1 and all rulings, and `V` is the canonical infinitesimal flexion.
//! Surfaces with more than two ribbons are flexed pair by pair, each new pair
//! seeded at the first node by the junction rule.

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::flexibility::{nribbon_infinitesimal_report, SurfaceFields, Verdict, DEFAULT_TOL_CHI};
use crate::geometry::{frame_at, inner_geometry, triple, InvariantClass, InvariantField, PairFields, SampledSurface};
use crate::numeric::cumulative_integral;
use crate::system_a::{canonical_initial, initial_g_from_vectors, solve_on_fields, variational_field_on, GState};
use crate::Vec3;

/// Default bound on normalized isometry drift.
pub const DEFAULT_TOL_FLEX: f64 = 1e-5;
/// Propagation stops once drift exceeds this multiple of the tolerance.
pub const DRIFT_ABORT_FACTOR: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlexOptions {
    pub tol_chi: f64,
    pub tol_flex: f64,
}

impl Default for FlexOptions {
    fn default() -> Self {
        Self { tol_chi: DEFAULT_TOL_CHI, tol_flex: DEFAULT_TOL_FLEX }
    }
}

/// Why integration stopped before reaching the requested parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub last_lambda: f64,
    pub cause: TruncationCause,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationCause {
    /// The frame became degenerate.
    Degenerate,
    /// The isometry drift exceeded its limit: the surface does not flex.
    Drift,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlexionTrajectory {
    pub lambdas: Vec<f64>,
    pub surfaces: Vec<SampledSurface>,
    /// Inner geometry of each frame minus that of the first.
    pub drift: Vec<InvariantField>,
    pub truncated: Option<Truncation>,
    /// Sign applied to the canonical field (see [`flow_orientation`]).
    pub orientation: f64,
}

impl FlexionTrajectory {
    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    /// Parameter step between consecutive frames.
    pub fn step(&self) -> f64 {
        if self.lambdas.len() < 2 {
            0.0
        } else {
            self.lambdas[1] - self.lambdas[0]
        }
    }

    /// Frames restricted to curves `first ..= first + ribbons`.
    pub fn restrict(&self, first: usize, ribbons: usize) -> Result<Vec<SampledSurface>> {
        self.surfaces.iter().map(|s| s.sub_surface(first, ribbons)).collect()
    }
}

/// Curves `f_0 .. f_n` as the flow variable; `f_1(a)` never moves.
type Curves = Vec<Vec<Vec3>>;

fn axpy(x: &[Vec<Vec3>], y: &Curves, h: f64) -> Curves {
    x.iter().zip(y).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q * h).collect()).collect()
}

/// Frame velocities of one pair: curve tangent, previous and next ruling.
struct PairRate {
    tangent: Vec<Vec3>,
    prev: Vec<Vec3>,
    next: Vec<Vec3>,
}

fn solve_pair(fields: &PairFields, c: GState) -> Result<PairRate> {
    let g = solve_on_fields(fields, c)?;
    let t = variational_field_on(fields, &g)?;
    Ok(PairRate { tangent: t.d_f1dot, prev: t.d_df0, next: t.d_df1 })
}

/// Solves `<x, a_k> = b_k` for three independent vectors `a_k`.
fn solve3(rows: [Vec3; 3], rhs: [f64; 3]) -> Option<Vec3> {
    let m = nalgebra::Matrix3::from_rows(&[rows[0].transpose(), rows[1].transpose(), rows[2].transpose()]);
    m.lu().solve(&Vec3::new(rhs[0], rhs[1], rhs[2]))
}

/// Orientation of the flow: `+1` when the canonical flexion opens the frame
/// at the first node (its coplanarity margin grows), `-1` otherwise.
pub fn flow_orientation(surface: &SampledSurface) -> Result<f64> {
    let fr = frame_at(surface, 1, 0)?;
    fr.require_generic(0)?;
    let (u, p, q) = (fr.f1dot, fr.df0, fr.df1);
    // d/dλ (u, p, q) under Dḟ₁ = 0, DΔf₀ = u × p, DΔf₁ = 0.
    let rate = u.dot(&p) * u.dot(&q) - u.norm_squared() * p.dot(&q);
    Ok(if rate * fr.det() >= 0.0 { 1.0 } else { -1.0 })
}

/// `V(f)`: displacement of every curve under the canonical flexion of the
/// first pair (scaled by `orientation`), extended pair by pair.
fn flow_rate(surface: &SampledSurface, orientation: f64) -> Result<Curves> {
    let n = surface.ribbons();
    let grid = surface.grid();
    let d1 = grid.diff_operator(1);

    let first = PairFields::from_surface(surface, 1)?;
    let c = canonical_initial(&first.frame(0))? * orientation;
    let mut pair = solve_pair(&first, c)?;
    let df1 = cumulative_integral(&pair.tangent, grid.step());
    let mut out: Curves = vec![
        df1.iter().zip(&pair.prev).map(|(a, b)| a - b).collect(),
        df1.iter().zip(&pair.next).map(|(a, b)| a + b).collect(),
    ];
    out.insert(1, df1);

    if n > 2 {
        let fields = SurfaceFields::new(surface);
        for k in 1..n - 1 {
            // The pair around curve k + 1 shares ruling k with the pair around curve k.
            let fr = PairFields::from_surface(surface, k + 1)?;
            let (u, r_prev, r_k, r_next) = (fr.f1dot[0], fields.ruling[k - 1][0], fr.df0[0], fr.df1[0]);
            let dphi = pair.prev[0].dot(&r_k) + r_prev.dot(&pair.next[0]);
            let lambda = fields.lambda(k - 1, 0)?;
            let v1 = pair.tangent[0] + d1.apply_at(&pair.next, 0);
            let v2 = pair.next[0];
            let v3 = solve3([r_next, u, r_k], [0.0, -v1.dot(&r_next), lambda * dphi - v2.dot(&r_next)])
                .ok_or_else(|| FlexError::degenerate(0, k + 1, "junction frame is singular", 0.0))?;
            pair = solve_pair(&fr, initial_g_from_vectors(&v1, &v2, &v3, &fr.frame(0)))?;
            let next = out[k + 1].iter().zip(&pair.next).map(|(a, b)| a + b).collect();
            out.push(next);
        }
    }
    Ok(out)
}

fn integrate(
    surface: &SampledSurface,
    lambda_max: f64,
    steps: usize,
    orientation: Option<f64>,
    drift_limit: Option<f64>,
) -> Result<FlexionTrajectory> {
    if !lambda_max.is_finite() {
        return Err(FlexError::InvalidArgument("lambda_max must be finite".into()));
    }
    if steps == 0 && lambda_max != 0.0 {
        return Err(FlexError::InvalidArgument("steps must be positive".into()));
    }
    let orientation = match orientation {
        Some(o) if o == 1.0 || o == -1.0 => o,
        Some(o) => return Err(FlexError::InvalidArgument(format!("orientation must be +1 or -1, got {o}"))),
        None => flow_orientation(surface)?,
    };
    let grid = surface.grid();
    let reference = inner_geometry(surface);
    let mut traj = FlexionTrajectory {
        lambdas: vec![0.0],
        surfaces: vec![surface.clone()],
        drift: vec![reference.difference(&reference)],
        truncated: None,
        orientation,
    };
    // Validates the starting configuration; failures here are errors, not truncation.
    let mut k1 = flow_rate(surface, orientation)?;
    if lambda_max == 0.0 {
        return Ok(traj);
    }
    let h = lambda_max / steps as f64;
    let mut current = surface.clone();
    // Compensated summation: the rate differentiates the state twice, so
    // rounding noise accumulated in the curves would be strongly amplified.
    let mut carry: Curves = surface.curves().iter().map(|c| vec![Vec3::zeros(); c.len()]).collect();
    for step in 1..=steps {
        let last = h * (step - 1) as f64;
        let stage = |k1: &Curves, carry: &mut Curves| -> Result<SampledSurface> {
            let at = |k: &Curves, w: f64| SampledSurface::new(grid, axpy(current.curves(), k, w * h));
            let k2 = flow_rate(&at(k1, 0.5)?, orientation)?;
            let k3 = flow_rate(&at(&k2, 0.5)?, orientation)?;
            let k4 = flow_rate(&at(&k3, 1.0)?, orientation)?;
            let mut next = current.curves().to_vec();
            for (i, c) in next.iter_mut().enumerate() {
                for (j, p) in c.iter_mut().enumerate() {
                    let inc = (k1[i][j] + k2[i][j] * 2.0 + k3[i][j] * 2.0 + k4[i][j]) * (h / 6.0) + carry[i][j];
                    let sum = *p + inc;
                    carry[i][j] = inc - (sum - *p);
                    *p = sum;
                }
            }
            SampledSurface::new(grid, next)
        };
        let mut trial = carry.clone();
        let next = match stage(&k1, &mut trial) {
            Ok(s) => s,
            Err(e) => {
                traj.truncated =
                    Some(Truncation { last_lambda: last, cause: TruncationCause::Degenerate, reason: e.to_string() });
                break;
            }
        };
        let drift = inner_geometry(&next).difference(&reference);
        if let Some(limit) = drift_limit {
            let worst = normalized_max(&drift, &reference);
            if worst > limit {
                traj.truncated = Some(Truncation {
                    last_lambda: last,
                    cause: TruncationCause::Drift,
                    reason: format!("isometry drift {worst:e} exceeds {limit:e}; the surface does not flex"),
                });
                break;
            }
        }
        current = next;
        carry = trial;
        traj.lambdas.push(h * step as f64);
        traj.surfaces.push(current.clone());
        traj.drift.push(drift);
        if step < steps {
            match flow_rate(&current, orientation) {
                Ok(k) => k1 = k,
                Err(e) => {
                    traj.truncated = Some(Truncation {
                        last_lambda: h * step as f64,
                        cause: TruncationCause::Degenerate,
                        reason: e.to_string(),
                    });
                    break;
                }
            }
        }
    }
    Ok(traj)
}

fn normalized_max(drift: &InvariantField, reference: &InvariantField) -> f64 {
    InvariantClass::ALL
        .iter()
        .map(|&c| drift.max_abs(c) / reference.class_scale(c).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Finite flexion of a 2-ribbon surface with the first node's curve point
/// fixed and the canonical gauge applied at every stage. The direction of
/// positive `λ` is fixed by [`flow_orientation`]. Negative `lambda_max`
/// runs the flow backwards.
pub fn flex_2ribbon(surface: &SampledSurface, lambda_max: f64, steps: usize) -> Result<FlexionTrajectory> {
    if surface.ribbons() != 2 {
        return Err(FlexError::InvalidArgument(format!(
            "expected a 2-ribbon surface, got {} ribbons",
            surface.ribbons()
        )));
    }
    integrate(surface, lambda_max, steps, None, None)
}

/// [`flex_2ribbon`] with the sign of the canonical field given explicitly,
/// e.g. to retrace a trajectory from its last frame.
pub fn flex_2ribbon_oriented(
    surface: &SampledSurface,
    lambda_max: f64,
    steps: usize,
    orientation: f64,
) -> Result<FlexionTrajectory> {
    if surface.ribbons() != 2 {
        return Err(FlexError::InvalidArgument(format!(
            "expected a 2-ribbon surface, got {} ribbons",
            surface.ribbons()
        )));
    }
    integrate(surface, lambda_max, steps, Some(orientation), None)
}

/// Finite flexion of an n-ribbon surface. Every 3-ribbon window must pass
/// the infinitesimal test first; integration stops when the isometry drift
/// exceeds [`DRIFT_ABORT_FACTOR`] times `tol_flex`.
pub fn propagate_flexion(
    surface: &SampledSurface,
    lambda_max: f64,
    steps: usize,
    options: &FlexOptions,
) -> Result<FlexionTrajectory> {
    if surface.ribbons() < 2 {
        return Err(FlexError::InvalidArgument("flexion needs at least two ribbons".into()));
    }
    if surface.ribbons() >= 3 {
        let report = nribbon_infinitesimal_report(surface, options.tol_chi)?;
        for t in &report.triples {
            match t.verdict {
                Verdict::Flexible => {}
                Verdict::Rigid => {
                    return Err(FlexError::RigidTriple {
                        first: t.first,
                        chi: t.chi_normalized().unwrap_or(f64::NAN),
                        tol: options.tol_chi,
                    })
                }
                Verdict::Indeterminate => {
                    return Err(FlexError::InvalidArgument(format!(
                        "window starting at curve {} cannot be tested: {}",
                        t.first,
                        t.error.as_deref().unwrap_or("degenerate")
                    )))
                }
            }
        }
        return integrate(surface, lambda_max, steps, None, Some(DRIFT_ABORT_FACTOR * options.tol_flex));
    }
    integrate(surface, lambda_max, steps, None, None)
}

/// Scaling of the cross-product initial vector of the second pair:
/// `[(f₁', f₁'', Δf₀)/(f₂', f₂'', Δf₂)] · [(f₂', Δf₂, Δf₁)/(f₁', Δf₀, Δf₁)]`.
pub fn junction_alpha(surface3: &SampledSurface, node: usize) -> Result<f64> {
    if surface3.ribbons() != 3 {
        return Err(FlexError::InvalidArgument(format!(
            "expected a 3-ribbon surface, got {} ribbons",
            surface3.ribbons()
        )));
    }
    surface3.grid().check_node(node)?;
    let f = SurfaceFields::new(surface3);
    let j = node;
    let (u1, a1, u2, a2) = (f.tangent[1][j], f.accel[1][j], f.tangent[2][j], f.accel[2][j]);
    let (r0, r1, r2) = (f.ruling[0][j], f.ruling[1][j], f.ruling[2][j]);
    let den1 = triple(&u2, &a2, &r2);
    let den2 = triple(&u1, &r0, &r1);
    for (d, curve, what) in
        [(den1, 2, "curvature triple of the outer ribbon vanishes"), (den2, 1, "tangent and rulings are coplanar")]
    {
        if d == 0.0 || !d.is_finite() {
            return Err(FlexError::degenerate(node, curve, what, 0.0));
        }
    }
    Ok(triple(&u1, &a1, &r0) / den1 * triple(&u2, &r2, &r1) / den2)
}

/// Drift of one invariant class over a whole trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassDrift {
    pub class: InvariantClass,
    pub absolute: f64,
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftSummary {
    pub classes: Vec<ClassDrift>,
    pub max_absolute: f64,
    pub max_normalized: f64,
}

pub fn invariant_drift(trajectory: &FlexionTrajectory) -> Result<DriftSummary> {
    let first = trajectory.surfaces.first().ok_or_else(|| FlexError::InvalidArgument("empty trajectory".into()))?;
    let reference = inner_geometry(first);
    let classes: Vec<ClassDrift> = InvariantClass::ALL
        .iter()
        .map(|&class| {
            let absolute = trajectory.drift.iter().map(|d| d.max_abs(class)).fold(0.0, f64::max);
            let normalized = absolute / reference.class_scale(class).max(f64::MIN_POSITIVE);
            ClassDrift { class, absolute, normalized }
        })
        .collect();
    Ok(DriftSummary {
        max_absolute: classes.iter().map(|c| c.absolute).fold(0.0, f64::max),
        max_normalized: classes.iter().map(|c| c.normalized).fold(0.0, f64::max),
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flexibility::{discrete_shift, lambda_fn};
    use crate::generate::{developable, random, revolution};
    use crate::Grid;
    use std::f64::consts::FRAC_PI_6;

    fn grid() -> Grid {
        Grid::new(0.0, 1.0, 201).unwrap()
    }

    fn dev() -> SampledSurface {
        developable(grid(), 2, [2.0, -1.0, 3.0, -2.0]).unwrap()
    }

    #[test]
    fn zero_parameter_gives_input() {
        let s = dev();
        let t = flex_2ribbon(&s, 0.0, 10).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.surfaces[0], s);
        assert_eq!(invariant_drift(&t).unwrap().max_absolute, 0.0);
    }

    #[test]
    fn flexion_is_nearly_isometric_and_nontrivial() {
        let s = revolution(grid(), 2, FRAC_PI_6).unwrap();
        let t = flex_2ribbon(&s, 0.3, 30).unwrap();
        assert!(t.truncated.is_none());
        assert!(invariant_drift(&t).unwrap().max_normalized < 1e-5);
        let phi: Vec<f64> =
            t.surfaces.iter().map(|f| (f.curve(1)[0] - f.curve(0)[0]).dot(&(f.curve(2)[0] - f.curve(1)[0]))).collect();
        let inc = phi.windows(2).all(|w| w[1] > w[0]);
        let dec = phi.windows(2).all(|w| w[1] < w[0]);
        assert!(inc || dec);
        assert!((phi[0] - phi[30]).abs() > 1e-3);
        for f in &t.surfaces {
            assert_eq!(f.curve(1)[0], s.curve(1)[0]);
        }
    }

    #[test]
    fn reversal_returns_to_start() {
        let s = dev();
        let fwd = flex_2ribbon(&s, 0.2, 20).unwrap();
        let back = flex_2ribbon_oriented(fwd.surfaces.last().unwrap(), -0.2, 20, fwd.orientation).unwrap();
        let end = back.surfaces.last().unwrap();
        let err = s
            .curves()
            .iter()
            .flatten()
            .zip(end.curves().iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let one_way = invariant_drift(&fwd).unwrap().max_absolute;
        assert!(err <= 10.0 * one_way.max(1e-9), "{err} vs {one_way}");
    }

    #[test]
    fn alpha_matches_discrete_shift() {
        let s = revolution(grid(), 3, FRAC_PI_6).unwrap();
        let f = SurfaceFields::new(&s);
        let (u1, u2) = (f.tangent[1][0], f.tangent[2][0]);
        let (r0, r1, r2) = (f.ruling[0][0], f.ruling[1][0], f.ruling[2][0]);
        let dphi1 = u1.cross(&r0).dot(&r1);
        let via_shift = discrete_shift(&s, dphi1, 0).unwrap() / r1.dot(&u2.cross(&r2));
        assert!((junction_alpha(&s, 0).unwrap() - via_shift).abs() < 1e-10);
        let big = s.map_points(|p| p * 4.0);
        assert!((junction_alpha(&big, 0).unwrap() - junction_alpha(&s, 0).unwrap()).abs() < 1e-10);
        assert!((lambda_fn(&s, 0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn propagation_of_two_ribbons_is_the_pair_flexion() {
        let s = dev();
        let a = flex_2ribbon(&s, 0.1, 5).unwrap();
        let b = propagate_flexion(&s, 0.1, 5, &FlexOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_surface_is_rejected() {
        let s = random(grid(), 3, 0).unwrap();
        match propagate_flexion(&s, 0.1, 5, &FlexOptions::default()) {
            Err(FlexError::RigidTriple { first, chi, .. }) => {
                assert_eq!(first, 0);
                assert!(chi > 1e-6);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn translated_surface_is_degenerate() {
        let s = crate::generate::translate(grid(), 2).unwrap();
        assert!(flex_2ribbon(&s, 0.1, 2).is_err());
    }
}
