//! Uniform-grid numerical kernels: finite-difference stencils, half-node
//! interpolation and cumulative quadrature.
//!
//! Every routine works on node-indexed slices of a [`Field`] value (scalars or
//! 3-vectors) and assumes unit spacing internally; the physical step is applied
//! once at the end.

use std::ops::{Add, Mul};

use crate::Vec3;

/// A value that can be linearly combined with real weights.
pub trait Field: Copy + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Field for Vec3 {
    fn zero() -> Self {
        Vec3::zeros()
    }
}

/// Finite-difference weights for the `order`-th derivative at `z` from the
/// abscissae `xs` (Fornberg's recursion).
pub fn fd_weights(z: f64, xs: &[f64], order: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(n > order, "need more nodes than the derivative order");
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

#[derive(Clone, Debug)]
struct Row {
    start: usize,
    weights: Vec<f64>,
}

/// Differentiation matrix on `n` uniform nodes, stored row-wise.
///
/// Every row uses seven nodes: the central stencil in the interior (sixth
/// order) and one-sided stencils on the three nodes nearest each end (sixth
/// order for first derivatives, fifth for second). Wider boundary stencils
/// were tried and lose more to rounding than they gain in truncation.
#[derive(Clone, Debug)]
pub struct DiffOperator {
    order: usize,
    scale: f64,
    rows: Vec<Row>,
}

impl DiffOperator {
    /// Minimum node count supported by the boundary stencils.
    pub const MIN_NODES: usize = 8;

    pub fn new(nodes: usize, step: f64, order: usize) -> Self {
        assert!(order == 1 || order == 2, "only first and second derivatives");
        assert!(nodes >= Self::MIN_NODES, "too few nodes for the boundary stencils");
        let width = 7;
        let r = 3;
        let rows = (0..nodes)
            .map(|j| {
                let start = if j >= r && j + r < nodes {
                    j - r
                } else if j < r {
                    0
                } else {
                    nodes - width
                };
                let xs: Vec<f64> = (start..start + width).map(|k| k as f64 - j as f64).collect();
                Row { start, weights: fd_weights(0.0, &xs, order) }
            })
            .collect();
        Self { order, scale: step.powi(order as i32).recip(), rows }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn apply_at<T: Field>(&self, values: &[T], j: usize) -> T {
        let row = &self.rows[j];
        // The weights sum to zero; differencing against the centre value keeps
        // the rounding error proportional to the local variation.
        let centre = values[j] * -1.0;
        let acc = row
            .weights
            .iter()
            .zip(&values[row.start..row.start + row.weights.len()])
            .fold(T::zero(), |acc, (&w, &v)| acc + (v + centre) * w);
        acc * self.scale
    }

    pub fn apply<T: Field>(&self, values: &[T]) -> Vec<T> {
        assert_eq!(values.len(), self.rows.len(), "operator/grid size mismatch");
        (0..values.len()).map(|j| self.apply_at(values, j)).collect()
    }
}

/// Nodes used for the interval `[j, j+1]`: six consecutive nodes, centred
/// on the interval away from the ends.
const LOCAL_NODES: usize = 6;

fn local_start(j: usize, n: usize) -> usize {
    j.saturating_sub(2).min(n - LOCAL_NODES)
}

/// For each position of the interval inside the six-node window: weights of
/// the quintic interpolant at the half-node and of its integral over the
/// interval (in units of the step).
struct LocalRules {
    half: [[f64; LOCAL_NODES]; LOCAL_NODES - 1],
    integral: [[f64; LOCAL_NODES]; LOCAL_NODES - 1],
}

impl LocalRules {
    fn new() -> Self {
        let mut half = [[0.0; LOCAL_NODES]; LOCAL_NODES - 1];
        let mut integral = [[0.0; LOCAL_NODES]; LOCAL_NODES - 1];
        for off in 0..LOCAL_NODES - 1 {
            let xs: Vec<f64> = (0..LOCAL_NODES).map(|k| k as f64 - off as f64).collect();
            half[off].copy_from_slice(&fd_weights(0.5, &xs, 0));
            // Moments of [0, 1] against the monomials through the nodes.
            let v = nalgebra::DMatrix::from_fn(LOCAL_NODES, LOCAL_NODES, |m, k| xs[k].powi(m as i32));
            let rhs = nalgebra::DVector::from_fn(LOCAL_NODES, |m, _| 1.0 / (m as f64 + 1.0));
            let w = v.lu().solve(&rhs).expect("Vandermonde system on distinct nodes");
            integral[off].copy_from_slice(w.as_slice());
        }
        Self { half, integral }
    }

    fn get() -> &'static LocalRules {
        static RULES: std::sync::OnceLock<LocalRules> = std::sync::OnceLock::new();
        RULES.get_or_init(LocalRules::new)
    }
}

fn local_combination<T: Field>(values: &[T], j: usize, table: &[[f64; LOCAL_NODES]; LOCAL_NODES - 1]) -> T {
    let start = local_start(j, values.len());
    let w = &table[j - start];
    (0..LOCAL_NODES).fold(T::zero(), |acc, k| acc + values[start + k] * w[k])
}

/// Quintic (6-point Lagrange) interpolation at every half-node `j + 1/2`.
pub fn midpoints<T: Field>(values: &[T]) -> Vec<T> {
    let n = values.len();
    assert!(n >= LOCAL_NODES, "half-node interpolation needs six nodes");
    let rules = LocalRules::get();
    (0..n - 1).map(|j| local_combination(values, j, &rules.half)).collect()
}

/// Running integral from node 0; the first entry is exactly zero.
///
/// Each interval uses the local quintic, so the rule is exact on quintics
/// and sixth-order in general. Differences of the result give definite integrals
/// that are exactly additive over adjacent ranges.
pub fn cumulative_integral<T: Field>(values: &[T], step: f64) -> Vec<T> {
    let n = values.len();
    assert!(n >= LOCAL_NODES, "cumulative quadrature needs six nodes");
    let rules = LocalRules::get();
    let mut out = Vec::with_capacity(n);
    let mut acc = T::zero();
    out.push(acc);
    for j in 0..n - 1 {
        acc = acc + local_combination(values, j, &rules.integral) * step;
        out.push(acc);
    }
    out
}

/// Composite Simpson integral over the whole grid (3/8 rule on the last three
/// intervals when the interval count is odd).
pub fn simpson<T: Field>(values: &[T], step: f64) -> T {
    let n = values.len();
    assert!(n >= 4, "Simpson quadrature needs four nodes");
    let intervals = n - 1;
    let simpson_end = if intervals.is_multiple_of(2) { n - 1 } else { n - 4 };
    let mut acc = T::zero();
    let mut j = 0;
    while j < simpson_end {
        acc = acc + (values[j] + values[j + 1] * 4.0 + values[j + 2]) * (step / 3.0);
        j += 2;
    }
    if simpson_end != n - 1 {
        let k = simpson_end;
        acc = acc + (values[k] + values[k + 1] * 3.0 + values[k + 2] * 3.0 + values[k + 3]) * (3.0 * step / 8.0);
    }
    acc
}
