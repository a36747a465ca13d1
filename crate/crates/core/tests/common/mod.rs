#![allow(dead_code)]

use gclind_core::lindblad::{JumpChannel, LindbladModel};
use gclind_core::{DensityOperator, HermitianOperator, Operator, C64};
use nalgebra::DMatrix;
use rand::Rng;

pub fn random_matrix<R: Rng>(rng: &mut R, d: usize) -> DMatrix<C64> {
    DMatrix::from_fn(d, d, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

pub fn random_operator<R: Rng>(rng: &mut R, d: usize) -> Operator {
    Operator::from_matrix(random_matrix(rng, d)).unwrap()
}

pub fn random_hermitian<R: Rng>(rng: &mut R, d: usize) -> HermitianOperator {
    let a = random_matrix(rng, d);
    let h = (&a + a.adjoint()) * C64::new(0.5, 0.0);
    HermitianOperator::new(Operator::from_matrix(h).unwrap()).unwrap()
}

/// `AA†/tr(AA†)`: full rank with probability one.
pub fn random_density<R: Rng>(rng: &mut R, d: usize) -> DensityOperator {
    let a = random_matrix(rng, d);
    let p = &a * a.adjoint();
    let tr = p.trace().re;
    DensityOperator::new(Operator::from_matrix(p / C64::new(tr, 0.0)).unwrap()).unwrap()
}

pub fn random_model<R: Rng>(rng: &mut R, d: usize, n_channels: usize) -> LindbladModel {
    let channels = (0..n_channels)
        .map(|_| JumpChannel::new(random_operator(rng, d), rng.gen_range(0.1..1.0)).unwrap())
        .collect();
    LindbladModel::new(random_hermitian(rng, d), channels).unwrap()
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
