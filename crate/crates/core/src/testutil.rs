//! Finite-difference oracle shared by unit tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gradcheck::max_rel_err;
use crate::tensor::{Graph, Tensor, Var};

pub(crate) fn fd_max_rel_err(
    inputs: &[Tensor],
    build: impl Fn(&mut Graph, &[Var]) -> crate::Result<Var>,
) -> f64 {
    max_rel_err(inputs, 1.0, build).unwrap()
}

pub(crate) fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    Tensor::uniform(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}
