#![allow(dead_code)]

use egot::OtInstance;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn simplex(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Random instance with costs scaled to max exactly one.
pub fn normalized_instance(n: usize, rng: &mut impl Rng) -> OtInstance {
    let w = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
    let (inst, _) = OtInstance::new(w, simplex(n, rng), simplex(n, rng)).unwrap().normalized();
    inst
}

pub fn random_rows(n: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut rows = Array2::zeros((n, n));
    for i in 0..n {
        for (j, v) in simplex(n, rng).into_iter().enumerate() {
            rows[[i, j]] = v;
        }
    }
    rows
}
