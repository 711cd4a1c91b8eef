//! Lattice functions on `hZ²`, frequency grids on the period cell `[-πħ, πħ]^d`,
//! the discrete Fourier pair and discrete Sobolev–Slobodetskii norms.
//!
//! Conventions used throughout the crate:
//!
//! * forward transform `ũ(ξ) = Σ_x e^{i x·ξ} u(x) h²` (the 1D variant uses `h`);
//! * inverse transform `u(x) = (2π)^{-2} ∫ e^{-i x·ξ} ũ(ξ) dξ` over the period cell;
//! * all integrals over the period cell use the composite midpoint rule with an
//!   even number of nodes per axis, so `ξ = 0` and the cell edges are never nodes.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;

use crate::error::{check_mesh, Error, Result};

/// Midpoint quadrature grid on the period cell `ħT` (1D) or `ħT²` (2D).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    h: f64,
    nodes_per_axis: usize,
    dim: usize,
}

impl FrequencyGrid {
    pub fn new(h: f64, nodes_per_axis: usize, dim: usize) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("mesh size must be positive, got {h}")));
        }
        if nodes_per_axis == 0 || nodes_per_axis % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "nodes per axis must be a positive even number, got {nodes_per_axis}"
            )));
        }
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidInput(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        Ok(Self { h, nodes_per_axis, dim })
    }

    pub fn one_d(h: f64, nodes_per_axis: usize) -> Result<Self> {
        Self::new(h, nodes_per_axis, 1)
    }

    pub fn two_d(h: f64, nodes_per_axis: usize) -> Result<Self> {
        Self::new(h, nodes_per_axis, 2)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn hbar(&self) -> f64 {
        1.0 / self.h
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Half-width `πħ` of the period cell.
    pub fn half_period(&self) -> f64 {
        PI / self.h
    }

    /// Per-axis quadrature weight `2πħ/N`.
    pub fn weight(&self) -> f64 {
        2.0 * PI / (self.h * self.nodes_per_axis as f64)
    }

    /// Quadrature weight of one node of the full grid (`weight^dim`).
    pub fn cell_weight(&self) -> f64 {
        self.weight().powi(self.dim as i32)
    }

    pub fn node(&self, i: usize) -> f64 {
        let n = self.nodes_per_axis as f64;
        (2.0 * (i as f64 + 0.5) / n - 1.0) * PI / self.h
    }

    pub fn axis_nodes(&self) -> Vec<f64> {
        (0..self.nodes_per_axis).map(|i| self.node(i)).collect()
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    /// Frequency of the flat 2D node index `idx = i1 * N + i2`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let n = self.nodes_per_axis;
        [self.node(idx / n), self.node(idx % n)]
    }

    /// The one-dimensional grid sharing this grid's axis.
    pub fn axis(&self) -> FrequencyGrid {
        Self { dim: 1, ..self.clone() }
    }

    /// The two-dimensional grid built on this grid's axis.
    pub fn square(&self) -> FrequencyGrid {
        Self { dim: 2, ..self.clone() }
    }

    pub fn rule(&self) -> QuadratureRule {
        QuadratureRule {
            nodes: self.axis_nodes(),
            weights: vec![self.weight(); self.nodes_per_axis],
        }
    }
}

/// A one-dimensional quadrature rule: nodes with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Composite midpoint rule with `cells` equal cells on `[-half_width, half_width]`.
    pub fn midpoint(half_width: f64, cells: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) || cells == 0 {
            return Err(Error::InvalidInput(format!(
                "midpoint rule needs a positive half-width and cell count, got {half_width}, {cells}"
            )));
        }
        let step = 2.0 * half_width / cells as f64;
        let nodes = (0..cells)
            .map(|i| -half_width + (i as f64 + 0.5) * step)
            .collect();
        Ok(Self { nodes, weights: vec![step; cells] })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> Complex64>(&self, f: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| f(x) * w)
            .sum()
    }
}

/// Rectangular window of lattice indices; lattice point `(i, j)` sits at `(ih, jh)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexBox {
    pub x1: Range<i64>,
    pub x2: Range<i64>,
}

impl IndexBox {
    pub fn new(x1: Range<i64>, x2: Range<i64>) -> Self {
        Self { x1, x2 }
    }

    pub fn point(i: i64, j: i64) -> Self {
        Self { x1: i..i + 1, x2: j..j + 1 }
    }

    pub fn width1(&self) -> usize {
        (self.x1.end - self.x1.start).max(0) as usize
    }

    pub fn width2(&self) -> usize {
        (self.x2.end - self.x2.start).max(0) as usize
    }

    pub fn len(&self) -> usize {
        self.width1() * self.width2()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, i: i64, j: i64) -> bool {
        self.x1.contains(&i) && self.x2.contains(&j)
    }

    /// Points in storage order (x1 outer, x2 inner).
    pub fn points(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.x1
            .clone()
            .flat_map(move |i| self.x2.clone().map(move |j| (i, j)))
    }

    /// Whether every point lies in the open quadrant `x1 > 0, x2 > 0`.
    pub fn in_open_quadrant(&self) -> bool {
        self.is_empty() || (self.x1.start > 0 && self.x2.start > 0)
    }
}

/// Finitely supported function on `hZ²`. Values outside the support box are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFunction {
    h: f64,
    support: IndexBox,
    values: Vec<Complex64>,
}

impl LatticeFunction {
    pub fn new(h: f64, support: IndexBox, values: Vec<Complex64>) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("mesh size must be positive, got {h}")));
        }
        if values.len() != support.len() {
            return Err(Error::ShapeMismatch(format!(
                "support box holds {} points but {} values were given",
                support.len(),
                values.len()
            )));
        }
        Ok(Self { h, support, values })
    }

    pub fn zeros(h: f64, support: IndexBox) -> Result<Self> {
        let len = support.len();
        Self::new(h, support, vec![Complex64::new(0.0, 0.0); len])
    }

    /// Unit mass at lattice index `(i, j)`.
    pub fn unit_mass(h: f64, i: i64, j: i64) -> Result<Self> {
        Self::new(h, IndexBox::point(i, j), vec![Complex64::new(1.0, 0.0)])
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn support(&self) -> &IndexBox {
        &self.support
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, i: i64, j: i64) -> Complex64 {
        if !self.support.contains(i, j) {
            return Complex64::new(0.0, 0.0);
        }
        let a = (i - self.support.x1.start) as usize;
        let b = (j - self.support.x2.start) as usize;
        self.values[a * self.support.width2() + b]
    }

    /// Discrete `ℓ²` energy `Σ |u(x)|² h²`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.h * self.h
    }
}

/// Node values of a `2πħ`-periodic function restricted to the period cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFunction {
    grid: FrequencyGrid,
    values: Vec<Complex64>,
}

impl SpectralFunction {
    pub fn new(grid: FrequencyGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::ShapeMismatch(format!(
                "grid has {} nodes but {} values were given",
                grid.node_count(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node (1D grids pass `[ξ, 0]`).
    pub fn from_fn<F: Fn([f64; 2]) -> Complex64>(grid: &FrequencyGrid, f: F) -> Self {
        let values = if grid.dim() == 1 {
            grid.axis_nodes().into_iter().map(|x| f([x, 0.0])).collect()
        } else {
            (0..grid.node_count()).map(|idx| f(grid.point(idx))).collect()
        };
        Self { grid: grid.clone(), values }
    }

    pub fn constant(grid: &FrequencyGrid, value: Complex64) -> Self {
        Self { grid: grid.clone(), values: vec![value; grid.node_count()] }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
}

/// Per-axis discrete frequency `ζ = h^{-1}(e^{ihξ} - 1)`.
///
/// Evaluated as `h^{-1}(-2 sin²(hξ/2) + i sin(hξ))` to avoid cancellation for small `hξ`.
pub fn zeta(xi: f64, h: f64) -> Complex64 {
    let half = 0.5 * h * xi;
    let s = half.sin();
    Complex64::new(-2.0 * s * s, (h * xi).sin()) / h
}

/// `ζ` at a complex frequency `ξ + iτ`.
pub fn zeta_complex(z: Complex64, h: f64) -> Complex64 {
    ((Complex64::i() * h * z).exp() - 1.0) / h
}

/// The complex aggregate `ζ² = ζ₁² + ζ₂²`.
pub fn zeta_squared(xi: [f64; 2], h: f64) -> Complex64 {
    let z1 = zeta(xi[0], h);
    let z2 = zeta(xi[1], h);
    z1 * z1 + z2 * z2
}

/// Sobolev weight base `1 + |ζ₁|² + |ζ₂|²`.
///
/// The modulus of the complex sum `ζ₁² + ζ₂²` vanishes at `ξ = (π/2h, -π/2h)`, so it
/// cannot serve as an elliptic weight; the sum of moduli is equivalent to `1 + |ξ|²`
/// on the period cell with constants `1` and `(π/2)²`.
pub fn zeta_weight(xi: [f64; 2], h: f64) -> f64 {
    1.0 + zeta(xi[0], h).norm_sqr() + zeta(xi[1], h).norm_sqr()
}

/// One-dimensional weight base `1 + |ζ|²`.
pub fn zeta_weight_1d(xi: f64, h: f64) -> f64 {
    1.0 + zeta(xi, h).norm_sqr()
}

/// Complexified weight base `1 + |ζ̂₁|² + |ζ̂₂|²` at `ξ + iτ`.
pub fn zeta_weight_complex(z: [Complex64; 2], h: f64) -> f64 {
    1.0 + zeta_complex(z[0], h).norm_sqr() + zeta_complex(z[1], h).norm_sqr()
}

fn phase_table(indices: Range<i64>, nodes: &[f64], h: f64, sign: f64) -> Vec<Vec<Complex64>> {
    indices
        .map(|k| {
            nodes
                .iter()
                .map(|&xi| Complex64::from_polar(1.0, sign * (k as f64) * h * xi))
                .collect()
        })
        .collect()
}

/// Discrete Fourier transform `ũ(ξ) = Σ e^{i x·ξ} u(x) h²` at every node of a 2D grid.
pub fn discrete_fourier(u: &LatticeFunction, grid: &FrequencyGrid) -> Result<SpectralFunction> {
    check_mesh(grid.h(), u.h())?;
    if grid.dim() != 2 {
        return Err(Error::ShapeMismatch("discrete_fourier needs a 2D grid".into()));
    }
    let n = grid.nodes_per_axis();
    let nodes = grid.axis_nodes();
    let h = grid.h();
    let e1 = phase_table(u.support.x1.clone(), &nodes, h, 1.0);
    let e2 = phase_table(u.support.x2.clone(), &nodes, h, 1.0);
    let w2 = u.support.width2();
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    let mut inner = vec![Complex64::new(0.0, 0.0); n];
    for (a, row1) in e1.iter().enumerate() {
        inner.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (b, row2) in e2.iter().enumerate() {
            let val = u.values[a * w2 + b];
            if val == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (acc, p) in inner.iter_mut().zip(row2) {
                *acc += p * val;
            }
        }
        for (i1, p1) in row1.iter().enumerate() {
            let scaled = p1 * h * h;
            let dst = &mut out[i1 * n..(i1 + 1) * n];
            for (d, v) in dst.iter_mut().zip(&inner) {
                *d += scaled * v;
            }
        }
    }
    SpectralFunction::new(grid.clone(), out)
}

/// Quadrature inverse `u(x) = (2π)^{-2} ∫ e^{-i x·ξ} f(ξ) dξ` on the requested window.
pub fn inverse_discrete_fourier(f: &SpectralFunction, support: IndexBox) -> Result<LatticeFunction> {
    let grid = f.grid();
    if grid.dim() != 2 {
        return Err(Error::ShapeMismatch("inverse_discrete_fourier needs a 2D grid".into()));
    }
    let n = grid.nodes_per_axis();
    let nodes = grid.axis_nodes();
    let h = grid.h();
    let e1 = phase_table(support.x1.clone(), &nodes, h, -1.0);
    let e2 = phase_table(support.x2.clone(), &nodes, h, -1.0);
    let scale = grid.cell_weight() / (4.0 * PI * PI);
    let mut values = Vec::with_capacity(support.len());
    // partial[b][i1] = Σ_{i2} f(i1, i2) e^{-i x2 ξ2}
    let partial: Vec<Vec<Complex64>> = e2
        .iter()
        .map(|row2| {
            (0..n)
                .map(|i1| {
                    f.values[i1 * n..(i1 + 1) * n]
                        .iter()
                        .zip(row2)
                        .map(|(v, p)| v * p)
                        .sum()
                })
                .collect()
        })
        .collect();
    for row1 in &e1 {
        for part in &partial {
            let s: Complex64 = row1.iter().zip(part).map(|(p, v)| p * v).sum();
            values.push(s * scale);
        }
    }
    LatticeFunction::new(h, support, values)
}

/// One-dimensional transform `Σ_k e^{i kh ξ} u_k h` of lattice data starting at index `first`.
pub fn discrete_fourier_1d(
    values: &[Complex64],
    first: i64,
    h: f64,
    grid: &FrequencyGrid,
) -> Result<SpectralFunction> {
    check_mesh(grid.h(), h)?;
    let axis = grid.axis();
    let out = axis
        .axis_nodes()
        .into_iter()
        .map(|xi| {
            values
                .iter()
                .enumerate()
                .map(|(k, v)| v * Complex64::from_polar(h, (first + k as i64) as f64 * h * xi))
                .sum()
        })
        .collect();
    SpectralFunction::new(axis, out)
}

/// Discrete Sobolev–Slobodetskii norm `(∫ (1+|ζ|²)^s |f|² dξ)^{1/2}` on a 2D grid.
pub fn sobolev_norm_2d(f: &SpectralFunction, s: f64) -> Result<f64> {
    let grid = f.grid();
    if grid.dim() != 2 {
        return Err(Error::ShapeMismatch("sobolev_norm_2d needs a 2D grid".into()));
    }
    let h = grid.h();
    let total: f64 = f
        .values
        .iter()
        .enumerate()
        .map(|(idx, v)| zeta_weight(grid.point(idx), h).powf(s) * v.norm_sqr())
        .sum();
    Ok((total * grid.cell_weight()).sqrt())
}

/// One-dimensional analogue with weight `(1+|ζ|²)^{s_k}` on `ħT`.
pub fn sobolev_norm_1d(f: &SpectralFunction, s_k: f64) -> Result<f64> {
    let grid = f.grid();
    if grid.dim() != 1 {
        return Err(Error::ShapeMismatch("sobolev_norm_1d needs a 1D grid".into()));
    }
    Ok(weighted_norm_1d(f.values(), &grid.rule(), |xi| zeta_weight_1d(xi, grid.h()), s_k))
}

/// `(Σ w_i base(ξ_i)^s |f_i|²)^{1/2}` for a rule and a weight base.
pub fn weighted_norm_1d<B: Fn(f64) -> f64>(
    values: &[Complex64],
    rule: &QuadratureRule,
    base: B,
    s: f64,
) -> f64 {
    values
        .iter()
        .zip(rule.nodes.iter().zip(&rule.weights))
        .map(|(v, (&xi, &w))| w * base(xi).powf(s) * v.norm_sqr())
        .sum::<f64>()
        .sqrt()
}
