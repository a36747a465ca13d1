use nalgebra::DMatrix;

use super::LindbladModel;
use crate::error::{Error, Result};
use crate::operator::{Operator, C64, DEFAULT_MAX_DIM};

/// Superoperator `𝓛` with `vec(rhs(ρ)) = 𝓛·vec(ρ)` under column stacking.
///
/// Uses `vec(AXB) = (Bᵀ ⊗ A)·vec(X)`.
pub fn liouvillian_matrix(model: &LindbladModel) -> Result<Operator> {
    let d = model.dim();
    let d2 = d * d;
    if d2 > DEFAULT_MAX_DIM {
        return Err(Error::DimensionOverflow {
            dim: d2,
            max: DEFAULT_MAX_DIM,
        });
    }
    let id = DMatrix::<C64>::identity(d, d);
    let g = &model.generator;
    let mut l = (id.kronecker(g) - g.transpose().kronecker(&id)) * C64::new(0.0, -1.0 / model.hbar);
    for j in &model.jumps {
        if j.rate != 0.0 {
            // L ρ L†  →  conj(L) ⊗ L
            l += j.l.map(|z| z.conj()).kronecker(&j.l) * C64::new(j.rate, 0.0);
        }
    }
    l -= id.kronecker(&model.decay);
    l -= model.decay.transpose().kronecker(&id);
    Ok(Operator::wrap(l))
}
