use nalgebra::{DMatrix, DVector};

use super::{liouvillian_matrix, LindbladModel};
use crate::error::{Error, Result};
use crate::operator::{validate_density, DensityOperator, HermitianOperator, Operator, C64};

/// Singular values below this fraction of `σ_max` span the null space.
pub const NULL_SPACE_TOLERANCE: f64 = 1e-10;
/// Largest `‖rhs(ρ)‖_max` accepted for a returned steady state.
pub const STEADY_RESIDUAL_TOLERANCE: f64 = 1e-9;

/// A basis of unit-trace steady states.
///
/// The numerical null space of the Liouvillian is split into Hermitian
/// elements (the null space is closed under `X ↦ X†`). The positive and
/// negative parts of each Hermitian fixed point are fixed points themselves,
/// so each part is normalized and kept if it adds a new direction.
pub fn steady_states(model: &LindbladModel) -> Result<Vec<DensityOperator>> {
    let d = model.dim();
    let l = liouvillian_matrix(model)?;
    let svd = l.matrix().clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = NULL_SPACE_TOLERANCE * sigma_max.max(f64::MIN_POSITIVE);

    let null_vectors: Vec<DVector<C64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cutoff)
        .map(|(k, _)| v_t.row(k).adjoint())
        .collect();
    if null_vectors.is_empty() {
        return Err(Error::EmptyNullSpace);
    }
    let null_dim = null_vectors.len();

    // Hermitian and anti-Hermitian parts, orthonormalized in the real
    // Hilbert–Schmidt geometry.
    let mut hermitian_basis: Vec<DVector<C64>> = Vec::new();
    for v in &null_vectors {
        let x = DMatrix::from_column_slice(d, d, v.as_slice());
        let xh = x.adjoint();
        let re = (&x + &xh) * C64::new(0.5, 0.0);
        let im = (&x - &xh) * C64::new(0.0, -0.5);
        for part in [re, im] {
            let col = DVector::from_column_slice(part.as_slice());
            push_independent(&mut hermitian_basis, col, 1e-8);
        }
    }

    let mut candidates: Vec<DVector<C64>> = Vec::new();
    let mut states = Vec::new();
    for b in &hermitian_basis {
        let h =
            HermitianOperator::wrap(Operator::wrap(DMatrix::from_column_slice(d, d, b.as_slice())).hermitian_part());
        let spec = h.eigh()?;
        let scale = spec.values.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let cut = 1e-10 * scale;
        let pos = spec.map_real(|x| if x > cut { x } else { 0.0 });
        let neg = spec.map_real(|x| if x < -cut { -x } else { 0.0 });
        for part in [pos, neg] {
            let tr = part.as_operator().trace().re;
            if !(tr > 1e-8 * scale) {
                continue;
            }
            let rho = part.as_operator().scale_real(1.0 / tr);
            let residual = Operator::wrap(model.rhs_matrix(rho.matrix())).max_norm();
            if residual > STEADY_RESIDUAL_TOLERANCE {
                continue;
            }
            if push_independent(&mut candidates, rho.vec(), 1e-6) {
                states.push(validate_density(rho, 1e-7)?);
            }
            if states.len() == null_dim {
                return Ok(states);
            }
        }
    }
    if states.is_empty() {
        return Err(Error::EmptyNullSpace);
    }
    Ok(states)
}

/// Gram–Schmidt step; appends the normalized remainder if it is not
/// (numerically) in the span of `basis`.
fn push_independent(basis: &mut Vec<DVector<C64>>, mut v: DVector<C64>, tol: f64) -> bool {
    let norm0 = v.norm();
    if norm0 == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for b in basis.iter() {
            let c = b.dotc(&v);
            v -= b * c;
        }
    }
    let norm = v.norm();
    if norm > tol * norm0 {
        basis.push(v / C64::new(norm, 0.0));
        true
    } else {
        false
    }
}
