//! Benchmark problem generators: synthetic square-foreground images, MNIST
//! digit pairs and Gaussian point clouds.
//!
//! Randomness comes from `Xoshiro256PlusPlus` seeded through SplitMix64
//! (`seed_from_u64`), so a seed reproduces an instance bit for bit.

mod idx;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

pub use idx::{
    downsample, load_mnist_pair, mnist_pair, parse_idx_images, read_idx_images, IdxImages, IDX_IMAGE_MAGIC,
    MNIST_PIXEL_OFFSET,
};

use crate::error::{OtError, Result};
use crate::problem::OtInstance;

pub type InstanceRng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> InstanceRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// A square grayscale image with nonnegative pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pixels: Array2<f64>,
}

impl Image {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        if pixels.nrows() != pixels.ncols() || pixels.is_empty() {
            return Err(OtError::invalid("image must be square and nonempty"));
        }
        if pixels.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(OtError::invalid("image pixels must be finite and nonnegative"));
        }
        Ok(Self { pixels })
    }

    pub fn side(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    /// Row-major flattening scaled to sum to one.
    pub fn to_marginal(&self) -> Result<Vec<f64>> {
        let total: f64 = self.pixels.iter().sum();
        if !(total > 0.0) {
            return Err(OtError::invalid("image has no mass"));
        }
        Ok(self.pixels.iter().map(|&x| x / total).collect())
    }
}

/// Position of the foreground square of a synthetic image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Foreground {
    pub top: usize,
    pub left: usize,
    pub side: usize,
}

impl Foreground {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.top + self.side).contains(&row) && (self.left..self.left + self.side).contains(&col)
    }
}

/// Side of the foreground square covering about half of an `m x m` image:
/// `round(m / sqrt 2)`, at least one pixel.
pub fn foreground_side(m: usize) -> usize {
    ((m as f64 / std::f64::consts::SQRT_2).round() as usize).clamp(1, m)
}

/// One synthetic image: a square foreground with pixels `U[0, 10]` placed
/// uniformly at random, background pixels `U[0, 1]`.
pub fn synthetic_image(m: usize, rng: &mut InstanceRng) -> (Image, Foreground) {
    let side = foreground_side(m);
    let span = m - side + 1;
    let fg = Foreground { top: rng.random_range(0..span), left: rng.random_range(0..span), side };
    let pixels = Array2::from_shape_fn((m, m), |_| rng.random::<f64>());
    // Draw in a fixed order: background for every pixel, then foreground values.
    let mut pixels = pixels;
    for r in fg.top..fg.top + side {
        for c in fg.left..fg.left + side {
            pixels[[r, c]] = 10.0 * rng.random::<f64>();
        }
    }
    (Image { pixels }, fg)
}

/// `|a - a'| + |b - b'|` between pixels `(a, b)` and `(a', b')` of an
/// `m x m` grid, flattened row-major.
pub fn cost_grid_l1(m: usize) -> Array2<f64> {
    let n = m * m;
    Array2::from_shape_fn((n, n), |(p, q)| {
        let (a, b) = (p / m, p % m);
        let (a2, b2) = (q / m, q % m);
        (a.abs_diff(a2) + b.abs_diff(b2)) as f64
    })
}

/// Instance from two images of equal size with grid l1 costs.
pub fn instance_from_images(a: &Image, b: &Image) -> Result<OtInstance> {
    if a.side() != b.side() {
        return Err(OtError::DimensionMismatch { expected: a.side(), got: b.side() });
    }
    OtInstance::new(cost_grid_l1(a.side()), a.to_marginal()?, b.to_marginal()?)
}

/// Two independent synthetic `m x m` images; `n = m^2`.
pub fn gen_synthetic(m: usize, seed: u64) -> Result<OtInstance> {
    if m < 2 {
        return Err(OtError::invalid(format!("synthetic images need m >= 2, got {m}")));
    }
    let mut rng = rng_from_seed(seed);
    let (a, _) = synthetic_image(m, &mut rng);
    let (b, _) = synthetic_image(m, &mut rng);
    instance_from_images(&a, &b)
}

/// A set of points in the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 2]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(OtError::invalid("point coordinates must be finite"));
        }
        Ok(Self { points })
    }

    /// `n` points from the standard 2-D Gaussian.
    pub fn gaussian(n: usize, rng: &mut InstanceRng) -> Self {
        let points = (0..n).map(|_| [StandardNormal.sample(rng), StandardNormal.sample(rng)]).collect();
        Self { points }
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Euclidean (or squared Euclidean) distances between two clouds.
pub fn cloud_cost(x: &PointCloud, y: &PointCloud, squared: bool) -> Array2<f64> {
    Array2::from_shape_fn((x.len(), y.len()), |(i, j)| {
        let (p, q) = (x.points[i], y.points[j]);
        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        if squared {
            d2
        } else {
            d2.sqrt()
        }
    })
}

/// Uniform marginals on two clouds of the same size.
pub fn instance_from_clouds(x: &PointCloud, y: &PointCloud, squared: bool) -> Result<OtInstance> {
    if x.len() != y.len() || x.is_empty() {
        return Err(OtError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let n = x.len();
    let u = vec![1.0 / n as f64; n];
    OtInstance::new(cloud_cost(x, y, squared), u.clone(), u)
}

/// Two independent Gaussian clouds of `n` points each.
pub fn gen_point_clouds(n: usize, seed: u64, squared: bool) -> Result<OtInstance> {
    if n == 0 {
        return Err(OtError::invalid("point clouds need n >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let x = PointCloud::gaussian(n, &mut rng);
    let y = PointCloud::gaussian(n, &mut rng);
    instance_from_clouds(&x, &y, squared)
}

/// A point drawn uniformly from the probability simplex.
pub fn random_simplex_point(n: usize, rng: &mut InstanceRng) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Costs `U[0, 1]` (scaled so the largest is one) and uniformly random
/// marginals.
pub fn gen_random(n: usize, seed: u64) -> Result<OtInstance> {
    if n == 0 {
        return Err(OtError::invalid("random instances need n >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let w = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
    let r = random_simplex_point(n, &mut rng);
    let c = random_simplex_point(n, &mut rng);
    let (inst, _) = OtInstance::new(w, r, c)?.normalized();
    Ok(inst)
}
