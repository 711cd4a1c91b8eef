//! Digital pseudo-differential operators on quadrant windows and boundary
//! operators written in Fourier images.

use num_complex::Complex64;

use crate::error::{check_mesh, Error, Result};
use crate::lattice::{
    discrete_fourier, inverse_discrete_fourier, FrequencyGrid, IndexBox, LatticeFunction,
    SpectralFunction,
};
use crate::symbols::PeriodicSymbol;

/// Which boundary trace a boundary operator produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSide {
    /// Trace on the row `x₂ = 0`; integrates over `ξ₂`, result depends on `ξ₁`.
    Horizontal,
    /// Trace on the column `x₁ = 0`; integrates over `ξ₁`, result depends on `ξ₂`.
    Vertical,
}

#[derive(Debug, Clone)]
pub struct BoundaryOperatorSpec {
    pub side: TraceSide,
    pub symbol: PeriodicSymbol,
    pub order: f64,
}

impl BoundaryOperatorSpec {
    pub fn new(side: TraceSide, symbol: PeriodicSymbol) -> Self {
        let order = symbol.order();
        Self { side, symbol, order }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.order - self.symbol.order()).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "boundary operator order {} does not match symbol `{}` of order {}",
                self.order,
                self.symbol.label(),
                self.symbol.order()
            )));
        }
        Ok(())
    }
}

/// Multiplies a spectrum by a symbol and evaluates the result on a lattice window.
pub fn apply_multiplier(
    symbol: &PeriodicSymbol,
    u_hat: &SpectralFunction,
    window: IndexBox,
) -> Result<LatticeFunction> {
    let grid = u_hat.grid();
    check_mesh(grid.h(), symbol.h())?;
    if grid.dim() != 2 {
        return Err(Error::ShapeMismatch("operator application needs a 2D spectrum".into()));
    }
    let product: Vec<Complex64> = u_hat
        .values()
        .iter()
        .enumerate()
        .map(|(idx, v)| symbol.eval(grid.point(idx)) * v)
        .collect();
    inverse_discrete_fourier(&SpectralFunction::new(grid.clone(), product)?, window)
}

/// `(A_d u)(x) = (2π)^{-2} ∫ A_d(ξ) e^{-i x·ξ} ũ(ξ) dξ` at every point of `window`.
///
/// The grid must resolve the support of `u` and the window (at least twice the
/// combined extent per axis) for the quadrature to be exact.
pub fn apply_digital_pdo(
    symbol: &PeriodicSymbol,
    u: &LatticeFunction,
    window: IndexBox,
    grid: &FrequencyGrid,
) -> Result<LatticeFunction> {
    check_mesh(symbol.h(), u.h())?;
    let u_hat = discrete_fourier(u, grid)?;
    apply_multiplier(symbol, &u_hat, window)
}

/// Boundary condition in Fourier images: `∫ B̃(ξ) ũ(ξ) dξ₂` (horizontal) or
/// `∫ G̃(ξ) ũ(ξ) dξ₁` (vertical), without a `(2π)^{-1}` factor.
pub fn boundary_trace_spectrum(
    op: &BoundaryOperatorSpec,
    u_hat: &SpectralFunction,
) -> Result<SpectralFunction> {
    let grid = u_hat.grid();
    check_mesh(grid.h(), op.symbol.h())?;
    if grid.dim() != 2 {
        return Err(Error::ShapeMismatch("boundary traces need a 2D spectrum".into()));
    }
    let n = grid.nodes_per_axis();
    let w = grid.weight();
    let nodes = grid.axis_nodes();
    let vals = u_hat.values();
    let out = (0..n)
        .map(|outer| {
            (0..n)
                .map(|inner| {
                    let (i1, i2) = match op.side {
                        TraceSide::Horizontal => (outer, inner),
                        TraceSide::Vertical => (inner, outer),
                    };
                    op.symbol.eval([nodes[i1], nodes[i2]]) * vals[i1 * n + i2]
                })
                .sum::<Complex64>()
                * w
        })
        .collect();
    SpectralFunction::new(grid.axis(), out)
}
