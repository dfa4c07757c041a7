//! Random elements used by property checks and the suite runner.

use num_traits::Zero;
use rand::Rng;

use crate::linalg::Q;
use crate::numberfield::{FieldDescriptor, GammaElement, OrderElement, XFraction};

pub fn order_element<R: Rng>(field: &FieldDescriptor, rng: &mut R, bound: i128) -> OrderElement {
    OrderElement::new((0..field.degree()).map(|_| rng.gen_range(-bound..=bound)).collect())
}

/// a/α^ℓ with |coords(a)| ≤ bound and ℓ ≤ max_ell, canonicalized.
pub fn xfraction<R: Rng>(field: &FieldDescriptor, rng: &mut R, bound: i128, max_ell: u32) -> XFraction {
    let a = order_element(field, rng, bound);
    let ell = rng.gen_range(0..=max_ell);
    field.xf_new(a, ell)
}

pub fn gamma_element<R: Rng>(
    field: &FieldDescriptor,
    rng: &mut R,
    bound: i128,
    max_ell: u32,
    max_shift: i64,
) -> GammaElement {
    let b = xfraction(field, rng, bound, max_ell);
    field.gamma(b, rng.gen_range(-max_shift..=max_shift))
}

/// Rational vector with entries num/den, |num| ≤ bound.
pub fn rational_vector<R: Rng>(n: usize, rng: &mut R, bound: i128, den: i128) -> Vec<Q> {
    (0..n).map(|_| Q::new(rng.gen_range(-bound..=bound), den)).collect()
}

pub fn nonzero_rational_vector<R: Rng>(n: usize, rng: &mut R, bound: i128, den: i128) -> Vec<Q> {
    loop {
        let v = rational_vector(n, rng, bound, den);
        if v.iter().any(|x| !x.is_zero()) {
            return v;
        }
    }
}
