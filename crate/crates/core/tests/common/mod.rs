//! Test-only oracles. Nothing here calls into the library's numeric paths.
#![allow(dead_code)]

use featdist_core::corpus::EmbeddingSet;
use featdist_core::faer::Mat;
use featdist_core::frechet::GaussianStats;
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `B Bᵀ / d + 0.1 I`, well conditioned.
pub fn random_spd(rng: &mut StdRng, d: usize) -> DMatrix<f64> {
    let b = gaussian_matrix(rng, d, d);
    let mut s = &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1;
    // exact symmetry
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

pub fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn to_nalgebra(m: featdist_core::faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn stats(mean: &[f64], cov: &DMatrix<f64>, n: usize) -> GaussianStats {
    GaussianStats::new(mean.to_vec(), to_faer(cov), n).unwrap()
}

/// Tr((Σ1 Σ2)^½) from the eigenvalues of the nonsymmetric product, via
/// nalgebra's real Schur form.
pub fn sqrt_trace_oracle(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> f64 {
    let product = s1 * s2;
    product
        .complex_eigenvalues()
        .iter()
        .map(|c| c.sqrt().re)
        .sum()
}

pub fn frechet_oracle(m1: &[f64], s1: &DMatrix<f64>, m2: &[f64], s2: &DMatrix<f64>) -> f64 {
    let mean_term: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b).powi(2)).sum();
    mean_term + s1.trace() + s2.trace() - 2.0 * sqrt_trace_oracle(s1, s2)
}

/// Single pass: `(Σ x xᵀ − N μ μᵀ) / (N − 1)`.
pub fn naive_covariance(rows: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut sum = vec![0.0; d];
    let mut outer = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        for i in 0..d {
            sum[i] += r[i];
            for j in 0..d {
                outer[(i, j)] += r[i] * r[j];
            }
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let cov = DMatrix::from_fn(d, d, |i, j| (outer[(i, j)] - n as f64 * mean[i] * mean[j]) / (n - 1) as f64);
    (mean, cov)
}

pub fn random_rows(rng: &mut StdRng, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|j| rng.sample::<f64, _>(StandardNormal) * (1.0 + j as f64 * 0.1) + shift).collect())
        .collect()
}

pub fn set(rows: &[Vec<f64>]) -> EmbeddingSet {
    EmbeddingSet::from_rows(rows, "test", "none").unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Independent SplitMix64 + Lemire bounded draw, written from the
/// generator's published definition.
pub struct OracleStream(u64);

impl OracleStream {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, bound: u64) -> u64 {
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = self.next() as u128 * bound as u128;
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Smooth synthetic scene: a brightness gradient plus one bright disc,
/// with mild per-pixel texture. `noise` adds Gaussian noise of that
/// standard deviation (in units of the full 0..1 range).
pub fn synthetic_image(rng: &mut StdRng, side: u32, noise: f64) -> featdist_core::corpus::RasterImage {
    let base: f64 = rng.random_range(60.0..190.0);
    let (gx, gy): (f64, f64) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    let (cx, cy) = (rng.random_range(0.0..side as f64), rng.random_range(0.0..side as f64));
    let radius = rng.random_range(2.0..side as f64 / 3.0);
    let tint: [f64; 3] = [rng.random_range(0.8..1.2), 1.0, rng.random_range(0.8..1.2)];
    let mut px = Vec::with_capacity((side * side * 3) as usize);
    for y in 0..side {
        for x in 0..side {
            let (fx, fy) = (x as f64, y as f64);
            let mut v = base + gx * (fx - side as f64 / 2.0) + gy * (fy - side as f64 / 2.0);
            if (fx - cx).hypot(fy - cy) < radius {
                v += 50.0;
            }
            for t in tint {
                let mut c = v * t + rng.random_range(-4.0..4.0);
                if noise > 0.0 {
                    c += rng.sample::<f64, _>(StandardNormal) * noise * 255.0;
                }
                px.push(c.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    featdist_core::corpus::RasterImage::new(side, side, 3, px).unwrap()
}

/// Writes `n` synthetic images under `dir/name/` and a manifest
/// `dir/name.csv` listing them with relative paths.
pub fn write_corpus(dir: &std::path::Path, name: &str, n: usize, seed: u64, noise: f64) -> std::path::PathBuf {
    let mut r = rng(seed);
    std::fs::create_dir_all(dir.join(name)).unwrap();
    let mut manifest = String::from("path,index\n");
    for i in 0..n {
        let img = synthetic_image(&mut r, 32, noise);
        let rel = format!("{name}/{i:04}.png");
        featdist_core::corpus::save_image(&img, &dir.join(&rel)).unwrap();
        manifest.push_str(&format!("{rel},{i}\n"));
    }
    let path = dir.join(format!("{name}.csv"));
    std::fs::write(&path, manifest).unwrap();
    path
}

/// Tr((Σ1 Σ2)^½) the textbook way: `S = Σ1^½` by symmetric eigen, then the
/// eigenvalues of `S Σ2 S`.
pub fn sqrt_trace_symmetric_oracle(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> f64 {
    let e = s1.clone().symmetric_eigen();
    let root = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    let s = &e.eigenvectors * root * e.eigenvectors.transpose();
    let m = &s * s2 * &s;
    let m = (&m + m.transpose()) * 0.5;
    m.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum()
}
