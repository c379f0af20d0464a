//! Latent-space sampling strategies for generative decoders.
//!
//! Three ways to pick latent vectors for sample generation, decoder
//! agnostic: SD (i.i.d. standard normal), UD (uniform over the ball of
//! radius three standard deviations), and UDS (uniform deterministic
//! sampling: a seed-free quasi-uniform covering of the same ball). UDS
//! exists because random sampling concentrates samples near the
//! distribution center and produces near-duplicates; the deterministic set
//! keeps samples spread apart, which is measurable via
//! [`min_pairwise_distance`].
//!
//! Also hosts the closed-form KL divergence of a diagonal Gaussian against
//! the standard normal, the latent regularization kernel.

use crate::normal;
use crate::rng::RngState;
use crate::vxf;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Euclidean radius of the sampling region, in whitened latent units:
/// three standard deviations.
pub const LATENT_BALL_RADIUS: f64 = 3.0;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("dim and count must both be at least 1, got dim {dim}, count {count}")]
    BadShape { dim: usize, count: usize },
    #[error("pairwise distance needs at least 2 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("sigma must be positive everywhere; component {index} is {value}")]
    BadSigma { index: usize, value: f64 },
    #[error("mu and sigma lengths differ: {mu} vs {sigma}")]
    ParamLength { mu: usize, sigma: usize },
    #[error("non-finite value produced at vector {vector}, component {component}")]
    NonFinite { vector: usize, component: usize },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Vxf(#[from] vxf::VxfError),
    #[error(transparent)]
    Volume(#[from] crate::volume::VolumeError),
}

/// A batch of latent vectors, row-major (count x dim).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    dim: usize,
    vectors: Vec<f64>,
}

impl LatentBatch {
    pub fn new(dim: usize, vectors: Vec<f64>) -> Result<Self, LatentError> {
        if dim == 0 || vectors.is_empty() || !vectors.len().is_multiple_of(dim) {
            return Err(LatentError::BadShape {
                dim,
                count: if dim == 0 {
                    0
                } else {
                    vectors.len() / dim.max(1)
                },
            });
        }
        for (i, &v) in vectors.iter().enumerate() {
            if !v.is_finite() {
                return Err(LatentError::NonFinite {
                    vector: i / dim,
                    component: i % dim,
                });
            }
        }
        Ok(LatentBatch { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.count())
            .map(|i| self.vector(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// CSV rendering, one vector per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.count() {
            let row: Vec<String> = self.vector(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), LatentError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Flat binary dump: the engine's VXF1 format degenerated to 2-D, dims
    /// (dim, count, 1). Values are stored at f32 precision.
    pub fn write_vxf(&self, path: impl AsRef<Path>) -> Result<(), LatentError> {
        let data: Vec<f32> = self.vectors.iter().map(|&v| v as f32).collect();
        let vol = crate::volume::Volume3::new((self.dim, self.count(), 1), (1.0, 1.0, 1.0), data)?;
        vxf::write_vxf(&vol, path)?;
        Ok(())
    }
}

/// Diagonal Gaussian parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianParams {
    pub fn validate(&self) -> Result<(), LatentError> {
        if self.mu.len() != self.sigma.len() {
            return Err(LatentError::ParamLength {
                mu: self.mu.len(),
                sigma: self.sigma.len(),
            });
        }
        for (index, &value) in self.sigma.iter().enumerate() {
            if !(value > 0.0) {
                return Err(LatentError::BadSigma { index, value });
            }
        }
        Ok(())
    }
}

fn check_shape(dim: usize, count: usize) -> Result<(), LatentError> {
    if dim == 0 || count == 0 {
        return Err(LatentError::BadShape { dim, count });
    }
    Ok(())
}

/// SD: i.i.d. standard normal entries.
pub fn sample_standard(
    dim: usize,
    count: usize,
    rng: &mut RngState,
) -> Result<LatentBatch, LatentError> {
    check_shape(dim, count)?;
    let vectors = (0..dim * count).map(|_| rng.standard_normal()).collect();
    LatentBatch::new(dim, vectors)
}

/// UD: uniform over the solid ball of radius 3.
///
/// Direction from a normalized Gaussian draw, radius 3 * U^(1/dim), which
/// is the exact volume-uniform radial law.
pub fn sample_uniform(
    dim: usize,
    count: usize,
    rng: &mut RngState,
) -> Result<LatentBatch, LatentError> {
    check_shape(dim, count)?;
    let mut vectors = Vec::with_capacity(dim * count);
    for _ in 0..count {
        let mut dir = vec![0.0f64; dim];
        loop {
            for d in dir.iter_mut() {
                *d = rng.standard_normal();
            }
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for d in dir.iter_mut() {
                    *d /= norm;
                }
                break;
            }
        }
        let r = LATENT_BALL_RADIUS * rng.next_f64_open().powf(1.0 / dim as f64);
        vectors.extend(dir.iter().map(|d| d * r));
    }
    LatentBatch::new(dim, vectors)
}

/// Root of x^(d+1) = x + 1, the generalized golden ratio behind the
/// Kronecker sequence. Newton from 2.0, run to fixed point.
fn kronecker_root(d: usize) -> f64 {
    let p = (d + 1) as i32;
    let mut x = 2.0f64;
    for _ in 0..128 {
        let fx = x.powi(p) - x - 1.0;
        let dfx = p as f64 * x.powi(p - 1) - 1.0;
        let next = x - fx / dfx;
        if next == x {
            break;
        }
        x = next;
    }
    x
}

/// Candidate-pool oversampling factor for the deterministic sampler.
const UDS_POOL_FACTOR: usize = 8;

/// Points 1..=n of the rank-1 Kronecker sequence mapped into the ball of
/// radius 3: first `dim` coordinates through the standard normal quantile,
/// normalized to a direction; the last coordinate becomes the volume-uniform
/// radius 3 * u^(1/dim).
fn kronecker_ball_points(dim: usize, n: usize) -> Vec<f64> {
    let seq_dim = dim + 1;
    let phi = kronecker_root(seq_dim);
    let mut alphas = Vec::with_capacity(seq_dim);
    let mut a = 1.0f64;
    for _ in 0..seq_dim {
        a /= phi;
        alphas.push(a);
    }

    // Keep quantile inputs strictly inside (0, 1).
    let eps = 1e-12;
    let mut vectors = Vec::with_capacity(dim * n);
    let mut z = vec![0.0f64; dim];
    for k in 1..=n {
        for (j, zj) in z.iter_mut().enumerate() {
            let u = (0.5 + k as f64 * alphas[j]).fract().clamp(eps, 1.0 - eps);
            *zj = normal::quantile(u);
        }
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u_r = (0.5 + k as f64 * alphas[dim]).fract().clamp(eps, 1.0 - eps);
        let r = LATENT_BALL_RADIUS * u_r.powf(1.0 / dim as f64);
        if norm > 0.0 {
            vectors.extend(z.iter().map(|v| v / norm * r));
        } else {
            let mut e1 = vec![0.0; dim];
            e1[0] = r;
            vectors.extend(e1);
        }
    }
    vectors
}

/// UDS: seed-free quasi-uniform covering of the ball of radius 3.
///
/// An oversampled rank-1 Kronecker candidate pool is thinned by greedy
/// farthest-point
/// selection, which directly maximizes the separation the deterministic
/// sampler exists to provide: no two returned vectors are near-duplicates.
/// The construction is fixed arithmetic with no seed; identical
/// (dim, count) produce the identical batch, forever.
pub fn sample_uds(dim: usize, count: usize) -> Result<LatentBatch, LatentError> {
    check_shape(dim, count)?;
    let pool_n = count.saturating_mul(UDS_POOL_FACTOR).max(count);
    let pool = kronecker_ball_points(dim, pool_n);

    let point = |i: usize| &pool[i * dim..(i + 1) * dim];
    let mut selected = Vec::with_capacity(count);
    let mut min_d2 = vec![f64::INFINITY; pool_n];
    let mut current = 0usize;
    selected.push(current);
    while selected.len() < count {
        let cp = point(current).to_vec();
        let mut best = 0usize;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, slot) in min_d2.iter_mut().enumerate() {
            let d2: f64 = point(i)
                .iter()
                .zip(&cp)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            if d2 < *slot {
                *slot = d2;
            }
            if *slot > best_d2 {
                best_d2 = *slot;
                best = i;
            }
        }
        current = best;
        selected.push(current);
    }

    let mut vectors = Vec::with_capacity(dim * count);
    for &i in &selected {
        vectors.extend_from_slice(point(i));
    }
    LatentBatch::new(dim, vectors)
}

/// Closed-form KL divergence of a diagonal Gaussian from the standard
/// normal: 0.5 * sum(mu^2 + sigma^2 - 1 - ln sigma^2).
pub fn kl_standard_normal(p: &GaussianParams) -> Result<f64, LatentError> {
    p.validate()?;
    let mut kl = 0.0;
    for (&m, &s) in p.mu.iter().zip(&p.sigma) {
        kl += m * m + s * s - 1.0 - (s * s).ln();
    }
    Ok(0.5 * kl)
}

/// Exact minimum Euclidean distance over all vector pairs (brute force).
pub fn min_pairwise_distance(batch: &LatentBatch) -> Result<f64, LatentError> {
    let n = batch.count();
    if n < 2 {
        return Err(LatentError::TooFewVectors(n));
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        let a = batch.vector(i);
        for j in (i + 1)..n {
            let d2: f64 = a
                .iter()
                .zip(batch.vector(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            if d2 < best {
                best = d2;
            }
        }
    }
    Ok(best.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_moments() {
        let mut rng = RngState::new(21);
        let batch = sample_standard(8, 100_000, &mut rng).unwrap();
        for j in 0..8 {
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for i in 0..batch.count() {
                let v = batch.vector(i)[j];
                sum += v;
                sum2 += v * v;
            }
            let mean = sum / batch.count() as f64;
            let var = sum2 / batch.count() as f64 - mean * mean;
            assert!(mean.abs() < 0.02, "coord {j} mean {mean}");
            assert!((0.97..1.03).contains(&var), "coord {j} var {var}");
        }
    }

    #[test]
    fn standard_is_seed_deterministic() {
        let a = sample_standard(4, 100, &mut RngState::new(9)).unwrap();
        let b = sample_standard(4, 100, &mut RngState::new(9)).unwrap();
        assert_eq!(a, b);
        let single = sample_standard(1, 1, &mut RngState::new(1)).unwrap();
        assert!(single.vector(0)[0].is_finite());
    }

    #[test]
    fn uniform_norms_bounded_and_radially_uniform() {
        let mut rng = RngState::new(33);
        let batch = sample_uniform(2, 100_000, &mut rng).unwrap();
        let norms = batch.norms();
        assert!(norms.iter().all(|&n| n <= 3.0 + 1e-12));
        // Area ratio: P(norm <= 3/sqrt(2)) = (r/3)^2 = 1/2 in 2-D.
        let r = 3.0 / 2.0f64.sqrt();
        let frac = norms.iter().filter(|&&n| n <= r).count() as f64 / norms.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn uniform_is_seed_deterministic() {
        let a = sample_uniform(6, 64, &mut RngState::new(4)).unwrap();
        let b = sample_uniform(6, 64, &mut RngState::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uds_is_input_deterministic_and_bounded() {
        let a = sample_uds(16, 256).unwrap();
        let b = sample_uds(16, 256).unwrap();
        assert_eq!(a, b);
        assert!(a.norms().iter().all(|&n| n <= 3.0 + 1e-12));
        assert!(sample_uds(1, 1).is_ok());
        assert!(sample_uds(0, 4).is_err());
        assert!(sample_uds(4, 0).is_err());
    }

    #[test]
    fn uds_spreads_better_than_random() {
        let uds = sample_uds(16, 512).unwrap();
        let d_uds = min_pairwise_distance(&uds).unwrap();
        for seed in 0..5 {
            let sd = sample_standard(16, 512, &mut RngState::new(seed)).unwrap();
            let d_sd = min_pairwise_distance(&sd).unwrap();
            assert!(
                d_uds > d_sd,
                "seed {seed}: uds {d_uds} should exceed sd {d_sd}"
            );
        }
    }

    #[test]
    fn kl_reference_values() {
        let p = GaussianParams {
            mu: vec![0.0; 4],
            sigma: vec![1.0; 4],
        };
        assert_eq!(kl_standard_normal(&p).unwrap(), 0.0);

        let p = GaussianParams {
            mu: vec![1.0],
            sigma: vec![1.0],
        };
        assert!((kl_standard_normal(&p).unwrap() - 0.5).abs() < 1e-15);

        let p = GaussianParams {
            mu: vec![0.0],
            sigma: vec![0.5],
        };
        // 0.5 * (0.25 - 1 - ln 0.25)
        let expected = 0.5 * (0.25 - 1.0 - 0.25f64.ln());
        assert!((kl_standard_normal(&p).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn kl_rejects_bad_sigma() {
        let p = GaussianParams {
            mu: vec![0.0],
            sigma: vec![0.0],
        };
        assert!(matches!(
            kl_standard_normal(&p),
            Err(LatentError::BadSigma { index: 0, .. })
        ));
    }

    #[test]
    fn kl_non_negative_and_zero_only_at_standard() {
        let mut rng = RngState::new(50);
        for _ in 0..100 {
            let dim = 1 + rng.uniform_usize(6);
            let p = GaussianParams {
                mu: (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect(),
                sigma: (0..dim).map(|_| rng.uniform(0.1, 3.0)).collect(),
            };
            let kl = kl_standard_normal(&p).unwrap();
            assert!(kl >= -1e-12);
            let off_standard = p.mu.iter().any(|&m| m.abs() > 1e-6)
                || p.sigma.iter().any(|&s| (s - 1.0).abs() > 1e-6);
            if kl < 1e-12 {
                assert!(!off_standard);
            }
        }
    }

    #[test]
    fn min_distance_examples() {
        let batch = LatentBatch::new(3, vec![1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        assert!((min_pairwise_distance(&batch).unwrap() - 1.0).abs() < 1e-15);

        let batch = LatentBatch::new(2, vec![0.5, 0.5, 0.5, 0.5, 9.0, 9.0]).unwrap();
        assert_eq!(min_pairwise_distance(&batch).unwrap(), 0.0);

        let one = LatentBatch::new(2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            min_pairwise_distance(&one),
            Err(LatentError::TooFewVectors(1))
        ));
    }

    #[test]
    fn min_distance_permutation_invariant() {
        let mut rng = RngState::new(8);
        let batch = sample_standard(5, 40, &mut rng).unwrap();
        let d = min_pairwise_distance(&batch).unwrap();
        let mut order: Vec<usize> = (0..40).collect();
        rng.shuffle(&mut order);
        let mut permuted = Vec::new();
        for &i in &order {
            permuted.extend_from_slice(batch.vector(i));
        }
        let pbatch = LatentBatch::new(5, permuted).unwrap();
        assert_eq!(min_pairwise_distance(&pbatch).unwrap(), d);
    }

    #[test]
    fn csv_shape() {
        let batch = LatentBatch::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(batch.to_csv(), "1,2\n3,4\n");
    }
}
