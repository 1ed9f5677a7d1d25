//! Sampled test surfaces: revolution, cone, seeded random, developable by
//! construction, and translated copies (degenerate on purpose).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::geometry::{coplanarity_margin, genericity_margin, Grid, PairFields, SampledSurface};
use crate::Vec3;

/// Margin a random surface must reach before it is accepted.
pub const RANDOM_MIN_MARGIN: f64 = 0.05;
/// Margin required of the curvature triples `(ḟ_i, f̈_i, Δf_j)` of random surfaces.
pub const RANDOM_MIN_CURVATURE_MARGIN: f64 = 0.02;
/// Resampling budget for random surfaces.
pub const RANDOM_MAX_ROUNDS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    Rev,
    Cone,
    Rand,
    Dev,
    Translate,
}

impl Kind {
    pub const ALL: [Kind; 5] = [Kind::Rev, Kind::Cone, Kind::Rand, Kind::Dev, Kind::Translate];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Rev => "REV",
            Kind::Cone => "CONE",
            Kind::Rand => "RAND",
            Kind::Dev => "DEV",
            Kind::Translate => "TRANSLATE",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = FlexError;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| FlexError::InvalidArgument(format!("unknown generator kind '{s}'")))
    }
}

/// Generator parameters; fields that do not apply to a kind are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub ribbons: usize,
    pub grid: Grid,
    /// Angle between consecutive meridians of the revolution surface.
    pub theta: f64,
    pub seed: u64,
    /// Ruling coefficients of the developable surface: `Δf₀ = a0 ḟ₀ + b0 ḟ₁`,
    /// and `Δf_i = a1 ḟ_i + b1 ḟ_{i+1}` for `i ≥ 1`.
    pub a0: f64,
    pub b0: f64,
    pub a1: f64,
    pub b1: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            ribbons: 2,
            grid: Grid { start: 0.0, end: 1.0, nodes: 201 },
            theta: std::f64::consts::FRAC_PI_6,
            seed: 0,
            a0: 2.0,
            b0: -1.0,
            a1: 3.0,
            b1: -2.0,
        }
    }
}

impl Params {
    pub fn with_ribbons(mut self, ribbons: usize) -> Self {
        self.ribbons = ribbons;
        self
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.grid.nodes = nodes;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub fn generate(kind: Kind, params: &Params) -> Result<SampledSurface> {
    if params.ribbons == 0 {
        return Err(FlexError::InvalidArgument("need at least one ribbon".into()));
    }
    let grid = Grid::new(params.grid.start, params.grid.end, params.grid.nodes)?;
    match kind {
        Kind::Rev => revolution(grid, params.ribbons, params.theta),
        Kind::Cone => cone(grid, params.ribbons),
        Kind::Rand => random(grid, params.ribbons, params.seed),
        Kind::Dev => developable(grid, params.ribbons, [params.a0, params.b0, params.a1, params.b1]),
        Kind::Translate => translate(grid, params.ribbons),
    }
}

/// `f_i(t) = (ρ cos iθ, ρ sin iθ, t)` with `ρ(t) = 2 + cos(t) / 2`.
pub fn revolution(grid: Grid, ribbons: usize, theta: f64) -> Result<SampledSurface> {
    SampledSurface::from_fn(grid, ribbons, |i, t| {
        let rho = 2.0 + 0.5 * t.cos();
        let phi = i as f64 * theta;
        Vec3::new(rho * phi.cos(), rho * phi.sin(), t)
    })
}

/// Horizontal circles `f_i(t) = (r_i cos t, r_i sin t, z_i)` with
/// `r_i = 1 + 0.3 i`, `z_i = i + 0.2 i²`.
pub fn cone(grid: Grid, ribbons: usize) -> Result<SampledSurface> {
    SampledSurface::from_fn(grid, ribbons, |i, t| {
        let (r, z) = cone_radius_height(i);
        Vec3::new(r * t.cos(), r * t.sin(), z)
    })
}

pub fn cone_radius_height(i: usize) -> (f64, f64) {
    let i = i as f64;
    (1.0 + 0.3 * i, i + 0.2 * i * i)
}

/// Translated copies `f_i = c(t) + i v`; all rulings coincide.
pub fn translate(grid: Grid, ribbons: usize) -> Result<SampledSurface> {
    let v = Vec3::new(0.3, 0.2, 1.0);
    SampledSurface::from_fn(grid, ribbons, |i, t| Vec3::new(t.cos(), t.sin(), 0.5 * t) + v * i as f64)
}

/// Degree-3 trigonometric curves with seeded coefficients, resampled until the
/// surface is comfortably generic.
///
/// Each curve is a copy of the helix `(2 cos t, 2 sin t, 3 sin t)` turned by
/// `0.8 i` about the vertical axis, plus random harmonics `k = 0..=3` whose
/// amplitudes fall off like `1/k²` so curvature stays dominated by the helix.
pub fn random(grid: Grid, ribbons: usize, seed: u64) -> Result<SampledSurface> {
    const TURN: f64 = 0.8;
    const AMPLITUDE: f64 = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_MAX_ROUNDS {
        let coeffs: Vec<[[Vec3; 2]; 4]> = (0..=ribbons)
            .map(|_| {
                std::array::from_fn(|k| {
                    let amp = AMPLITUDE / (k.max(1) * k.max(1)) as f64;
                    std::array::from_fn(|_| random_vec(&mut rng) * amp)
                })
            })
            .collect();
        let surface = SampledSurface::from_fn(grid, ribbons, |i, t| {
            let phase = t + TURN * i as f64;
            let helix = Vec3::new(2.0 * phase.cos(), 2.0 * phase.sin(), 3.0 * t.sin());
            coeffs[i].iter().enumerate().fold(helix, |acc, (k, [a, b])| {
                let kt = k as f64 * t;
                acc + a * kt.cos() + b * kt.sin()
            })
        })?;
        if random_accepts(&surface) {
            return Ok(surface);
        }
    }
    Err(FlexError::Generation(format!(
        "no random surface with margin {RANDOM_MIN_MARGIN} after {RANDOM_MAX_ROUNDS} rounds (seed {seed})"
    )))
}

fn random_vec(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn random_accepts(surface: &SampledSurface) -> bool {
    if surface.ribbons() < 2 {
        // A single ribbon has no interior curve; only require distinct curves.
        return surface.curve(0).iter().zip(surface.curve(1)).all(|(a, b)| (a - b).norm() > 1e-3);
    }
    if !matches!(genericity_margin(surface), Ok(m) if m >= RANDOM_MIN_MARGIN) {
        return false;
    }
    (1..surface.ribbons()).all(|i| {
        let Ok(f) = PairFields::from_surface(surface, i) else { return false };
        (0..surface.grid().nodes).all(|j| {
            let fr = f.frame(j);
            [fr.df0, fr.df1]
                .iter()
                .all(|d| coplanarity_margin(&fr.f1dot, &fr.f1ddot, d).is_some_and(|m| m >= RANDOM_MIN_CURVATURE_MARGIN))
        })
    })
}

/// Offsets `Δf₀(a)` and `Δf_i(a)` (i ≥ 1) used to start the developable construction.
pub const DEV_FIRST_OFFSET: [f64; 3] = [0.9, -0.3, -0.7];
pub const DEV_NEXT_OFFSETS: [[f64; 3]; 3] = [[-0.6, 0.9, -0.5], [0.5, 0.3, -0.9], [0.1, -1.0, 0.0]];

/// Surface whose ribbons are developable by construction: the middle curve
/// `f₁` is the twisted cubic `(t, t², t³)`, and neighbours solve
/// `ḟ₀ = (f₁ − f₀ − b0 ḟ₁) / a0`, `ḟ_{i+1} = (f_{i+1} − f_i − a1 ḟ_i) / b1`.
pub fn developable(grid: Grid, ribbons: usize, coefficients: [f64; 4]) -> Result<SampledSurface> {
    let next: Vec<Vec3> = (1..ribbons)
        .map(|i| {
            Vec3::from(DEV_NEXT_OFFSETS[(i - 1) % DEV_NEXT_OFFSETS.len()])
                * (1.0 + 0.1 * ((i - 1) / DEV_NEXT_OFFSETS.len()) as f64)
        })
        .collect();
    developable_from(grid, coefficients, Vec3::from(DEV_FIRST_OFFSET), &next)
}

/// Developable construction with explicit starting rulings: `Δf₀(a) = first`
/// and `Δf_i(a) = next[i - 1]`; the surface has `next.len() + 1` ribbons.
pub fn developable_from(grid: Grid, [a0, b0, a1, b1]: [f64; 4], first: Vec3, next: &[Vec3]) -> Result<SampledSurface> {
    let ribbons = next.len() + 1;
    if a0 == 0.0 || b1 == 0.0 {
        return Err(FlexError::InvalidArgument("developable construction needs a0 != 0 and b1 != 0".into()));
    }
    let f1 = |t: f64| Vec3::new(t, t * t, t * t * t);
    let df1 = |t: f64| Vec3::new(1.0, 2.0 * t, 3.0 * t * t);

    // State: f0, then f2 .. fn. Each later curve is driven by its predecessor,
    // whose velocity is available from the same state.
    let rate = |t: f64, y: &[Vec3]| -> Vec<Vec3> {
        let mut out = Vec::with_capacity(y.len());
        out.push((f1(t) - y[0] - df1(t) * b0) / a0);
        let (mut prev, mut dprev) = (f1(t), df1(t));
        for cur in &y[1..] {
            let d = (cur - prev - dprev * a1) / b1;
            out.push(d);
            prev = *cur;
            dprev = d;
        }
        out
    };

    let t0 = grid.start;
    let mut y = vec![f1(t0) - first];
    let mut prev = f1(t0);
    for offset in next {
        prev += offset;
        y.push(prev);
    }

    let ts = grid.ts();
    let mut samples = vec![y.clone()];
    for w in ts.windows(2) {
        let h = (w[1] - w[0]) / SUBSTEPS as f64;
        for s in 0..SUBSTEPS {
            y = rk4_step(w[0] + s as f64 * h, &y, h, &rate);
        }
        samples.push(y.clone());
    }

    let mut curves = vec![samples.iter().map(|y| y[0]).collect::<Vec<_>>(), ts.iter().map(|&t| f1(t)).collect()];
    for k in 1..ribbons {
        curves.push(samples.iter().map(|y| y[k]).collect());
    }
    SampledSurface::new(grid, curves)
}

const SUBSTEPS: usize = 16;

fn rk4_step(t: f64, y: &[Vec3], h: f64, rate: &dyn Fn(f64, &[Vec3]) -> Vec<Vec3>) -> Vec<Vec3> {
    let axpy = |a: &[Vec3], s: f64, b: &[Vec3]| -> Vec<Vec3> { a.iter().zip(b).map(|(x, d)| x + d * s).collect() };
    let k1 = rate(t, y);
    let k2 = rate(t + 0.5 * h, &axpy(y, 0.5 * h, &k1));
    let k3 = rate(t + 0.5 * h, &axpy(y, 0.5 * h, &k2));
    let k4 = rate(t + h, &axpy(y, h, &k3));
    (0..y.len()).map(|k| y[k] + (k1[k] + k2[k] * 2.0 + k3[k] * 2.0 + k4[k]) * (h / 6.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::developable::is_developable;
    use crate::geometry::frame_at;

    fn grid() -> Grid {
        Grid::new(0.0, 1.0, 201).unwrap()
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("rev".parse::<Kind>().unwrap(), Kind::Rev);
        assert_eq!("TRANSLATE".parse::<Kind>().unwrap(), Kind::Translate);
        assert!("sphere".parse::<Kind>().is_err());
    }

    #[test]
    fn revolution_is_generic() {
        let s = revolution(grid(), 4, std::f64::consts::FRAC_PI_6).unwrap();
        assert!(genericity_margin(&s).unwrap() > 0.01);
        let fr = frame_at(&s, 1, 0).unwrap();
        assert!((fr.df0.norm() - fr.df1.norm()).abs() < 1e-12);
    }

    #[test]
    fn translate_is_degenerate() {
        let s = translate(grid(), 2).unwrap();
        assert_eq!(genericity_margin(&s).unwrap(), 0.0);
    }

    #[test]
    fn cone_determinant_matches_closed_form() {
        let s = cone(grid(), 2).unwrap();
        let (r0, z0) = cone_radius_height(0);
        let (r1, z1) = cone_radius_height(1);
        let (r2, z2) = cone_radius_height(2);
        let want = -r1 * ((r1 - r0) * (z2 - z1) - (r2 - r1) * (z1 - z0));
        for j in [0, 50, 200] {
            let fr = frame_at(&s, 1, j).unwrap();
            assert!((fr.det() - want).abs() < 1e-9, "{} vs {want}", fr.det());
        }
        assert!(genericity_margin(&s).unwrap() > 0.0);
    }

    #[test]
    fn random_is_deterministic_and_generic() {
        let a = random(grid(), 3, 7).unwrap();
        let b = random(grid(), 3, 7).unwrap();
        assert_eq!(a, b);
        assert!(genericity_margin(&a).unwrap() >= RANDOM_MIN_MARGIN);
        assert_ne!(a, random(grid(), 3, 8).unwrap());
    }

    #[test]
    fn developable_by_construction() {
        let s = developable(grid(), 2, [2.0, -1.0, 3.0, -2.0]).unwrap();
        for i in 0..2 {
            let v = is_developable(&s, i, 1e-7).unwrap();
            assert!(v.developable && v.max_residual <= 1e-8, "ribbon {i}: {}", v.max_residual);
        }
        assert!(genericity_margin(&s).unwrap() > DEGENERACY_FLOOR);
        let s4 = developable(grid(), 4, [2.0, -1.0, 3.0, -2.0]).unwrap();
        for i in 0..4 {
            assert!(is_developable(&s4, i, 1e-7).unwrap().max_residual <= 1e-8);
        }
    }

    const DEGENERACY_FLOOR: f64 = 1e-3;
}
