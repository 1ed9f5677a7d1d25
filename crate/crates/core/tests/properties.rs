use nalgebra::Rotation3;
use proptest::prelude::*;
use semiflex::generate::{random, revolution};
use semiflex::numeric::{cumulative_integral, DiffOperator};
use semiflex::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn moved(s: &SampledSurface, axis: Vec3, shift: Vec3, scale: f64) -> SampledSurface {
    let r = Rotation3::from_scaled_axis(axis);
    let curves = s.curves().iter().map(|c| c.iter().map(|p| r * p * scale + shift).collect()).collect();
    SampledSurface::new(s.grid(), curves).unwrap()
}

fn small_grid() -> Grid {
    Grid::new(0.0, 1.0, 61).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rhs_has_fixed_zero_and_antisymmetric_entries(
        u in vec3(), a in vec3(), p in vec3(), q in vec3(), dp in vec3(), dq in vec3(),
        g in prop::array::uniform9(-5.0..5.0f64),
    ) {
        let frame = LocalFrame { index: 0, t: 0.0, f1dot: u, f1ddot: a, df0: p, df1: q, df0dot: dp, df1dot: dq };
        prop_assume!(frame.det().abs() > 1e-2 * u.norm() * p.norm() * q.norm());
        let r = system_a_rhs(&frame, &GState(g)).unwrap().0;
        prop_assert_eq!([r[0], r[4], r[8]], [0.0, 0.0, 0.0]);
        prop_assert_eq!(r[1], -r[3]);
        prop_assert_eq!(r[2], -r[6]);
    }

    #[test]
    fn system_solution_is_linear(seed in 0u64..500, k1 in -3.0..3.0f64, k2 in -3.0..3.0f64) {
        let s = random(small_grid(), 2, seed).unwrap();
        let c = canonical_initial(&frame_at(&s, 1, 0).unwrap()).unwrap();
        let mut other = c;
        other.0[1] += 0.3;
        other.0[3] -= 0.3;
        let a = solve_system_a(&s, c).unwrap();
        let b = solve_system_a(&s, other).unwrap();
        let mix = solve_system_a(&s, c * k1 + other * k2).unwrap();
        for ((x, y), z) in a.values.iter().zip(&b.values).zip(&mix.values) {
            let expect = *x * k1 + *y * k2;
            for k in 0..9 {
                prop_assert!((z.0[k] - expect.0[k]).abs() <= 1e-9 * (1.0 + expect.norm_inf()));
            }
        }
    }

    #[test]
    fn flexibility_functionals_ignore_rigid_motion_and_scale(
        seed in 0u64..500, axis in vec3(), shift in vec3(), scale in 0.2..5.0f64,
    ) {
        let s = random(small_grid(), 3, seed).unwrap();
        let m = moved(&s, axis, shift, scale);
        for j in [0, 17, 60] {
            let (a, b) = (lambda_fn(&s, j).unwrap(), lambda_fn(&m, j).unwrap());
            prop_assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0), "lambda {} vs {}", a, b);
        }
        let (ca, cb) = (chi(&s).unwrap().normalized_max, chi(&m).unwrap().normalized_max);
        prop_assert!((ca - cb).abs() <= 1e-6 * ca.max(1.0));
    }

    #[test]
    fn revolution_surfaces_are_flexible_for_any_angle(theta in 0.2..1.2f64, ribbons in 3usize..6) {
        let s = revolution(small_grid(), ribbons, theta).unwrap();
        let r = nribbon_infinitesimal_report(&s, 1e-5).unwrap();
        prop_assert_eq!(r.verdict, Verdict::Flexible);
    }

    #[test]
    fn canonical_flexion_commutes_with_rotation(seed in 0u64..500, axis in vec3()) {
        let s = random(small_grid(), 2, seed).unwrap();
        let r = Rotation3::from_scaled_axis(axis);
        let a = canonical_flexion(&s).unwrap();
        let b = canonical_flexion(&moved(&s, axis, Vec3::zeros(), 1.0)).unwrap();
        for (ca, cb) in a.displacement.iter().zip(&b.displacement) {
            for (p, q) in ca.iter().zip(cb) {
                prop_assert!((r * p - q).norm() <= 1e-8 * (1.0 + p.norm()));
            }
        }
    }

    #[test]
    fn documents_round_trip_bit_exactly(
        pts in prop::collection::vec(prop::array::uniform3(any::<f64>().prop_filter("finite", |v| v.is_finite())), 27),
    ) {
        let grid = Grid::new(-0.5, 2.0, 9).unwrap();
        let curves: Vec<Vec<Vec3>> = pts.chunks(9).map(|c| c.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect()).collect();
        let s = SampledSurface::new(grid, curves).unwrap();
        let text = SurfaceDocument::new(&s, Metadata::default()).to_json().unwrap();
        let back = SurfaceDocument::from_json(&text).unwrap().to_surface().unwrap();
        for (a, b) in s.curves().iter().flatten().zip(back.curves().iter().flatten()) {
            for k in 0..3 {
                prop_assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
    }

    #[test]
    fn mesh_counts(ribbons in 1usize..5, nodes in 9usize..30) {
        let s = SampledSurface::from_fn(Grid::new(0.0, 1.0, nodes).unwrap(), ribbons, |i, t| {
            Vec3::new(t.cos() * (1.0 + i as f64), t.sin(), i as f64)
        }).unwrap();
        let mesh = parse_obj(&semiflex::io::obj_string(&s)).unwrap();
        prop_assert_eq!(mesh.vertices.len(), (ribbons + 1) * nodes);
        prop_assert_eq!(mesh.faces.len(), ribbons * (nodes - 1));
    }

    #[test]
    fn stencils_are_exact_on_low_degree_polynomials(
        coeffs in prop::array::uniform6(-2.0..2.0f64), start in -1.0..1.0f64, nodes in 9usize..40,
    ) {
        let h = 1.0 / (nodes - 1) as f64;
        let t = |j: usize| start + j as f64 * h;
        let p = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
        let dp = |x: f64| (1..6).rev().fold(0.0, |acc, k| acc * x + k as f64 * coeffs[k]);
        let vals: Vec<f64> = (0..nodes).map(|j| p(t(j))).collect();
        let d = DiffOperator::new(nodes, h, 1).apply(&vals);
        for (j, v) in d.iter().enumerate() {
            prop_assert!((v - dp(t(j))).abs() <= 1e-7, "derivative at {}", j);
        }
        // The integral of the derivative recovers the polynomial.
        let dvals: Vec<f64> = (0..nodes).map(|j| dp(t(j))).collect();
        let cum = cumulative_integral(&dvals, h);
        for (j, c) in cum.iter().enumerate() {
            prop_assert!((c - (p(t(j)) - p(start))).abs() <= 1e-10);
        }
    }
}
