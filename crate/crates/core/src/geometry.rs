//! Per-dimension standardization and cosine similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub mean: Vec<f64>,
    /// Population standard deviation (divides by N).
    pub std: Vec<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeMode {
    /// Subtract the mean and divide by the standard deviation.
    #[default]
    ZScore,
    /// Subtract the mean only.
    CenterOnly,
}

/// Per-dimension mean and population std, by Welford's update in `f64`.
pub fn fit_stats<T, V>(vectors: &[V]) -> Result<LayerStats>
where
    T: Copy + Into<f64>,
    V: AsRef<[T]>,
{
    if vectors.len() < 2 {
        return Err(Error::validation(format!(
            "standardization needs at least 2 samples, got {}",
            vectors.len()
        )));
    }
    let dim = vectors[0].as_ref().len();
    let mut mean = vec![0.0f64; dim];
    let mut m2 = vec![0.0f64; dim];
    for (k, v) in vectors.iter().enumerate() {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::validation(format!(
                "sample {k} has dimension {}, expected {dim}",
                v.len()
            )));
        }
        let n = (k + 1) as f64;
        for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(v) {
            let x: f64 = x.into();
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }
    let n = vectors.len() as f64;
    let std = m2.iter().map(|s| (s.max(0.0) / n).sqrt()).collect();
    Ok(LayerStats {
        mean,
        std,
        n_samples: vectors.len(),
    })
}

pub fn standardize<T: Copy + Into<f64>>(v: &[T], stats: &LayerStats, eps: f64) -> Result<Vec<f64>> {
    standardize_with(v, stats, StandardizeMode::ZScore, eps)
}

pub fn standardize_with<T: Copy + Into<f64>>(
    v: &[T],
    stats: &LayerStats,
    mode: StandardizeMode,
    eps: f64,
) -> Result<Vec<f64>> {
    if v.len() != stats.mean.len() {
        return Err(Error::validation(format!(
            "vector has dimension {}, stats have {}",
            v.len(),
            stats.mean.len()
        )));
    }
    Ok(v.iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(&x, (&m, &s))| {
            let centered = x.into() - m;
            match mode {
                StandardizeMode::ZScore => centered / s.max(eps),
                StandardizeMode::CenterOnly => centered,
            }
        })
        .collect())
}

/// Cosine similarity in `f64`, clamped to `[-1, 1]`.
///
/// Each vector is first divided by its largest absolute component. The
/// quotient is correctly rounded, so two inputs that differ by an exact
/// positive factor give bit-identical results.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::validation(format!(
            "cosine of vectors with dimensions {} and {}",
            u.len(),
            v.len()
        )));
    }
    let max_abs = |x: &[f64]| x.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
    let (mu, mv) = (max_abs(u), max_abs(v));
    if mu == 0.0 || mv == 0.0 {
        return Err(Error::validation("cosine of a zero vector"));
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a / mu, b / mv);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    // nu, nv >= 1 after the max-abs scaling, and sqrt(x * x) == x exactly.
    Ok((dot / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_two_points() {
        let s = fit_stats(&[[1.0f64, 3.0], [3.0, 5.0]]).unwrap();
        assert_eq!(s.mean, vec![2.0, 4.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        assert_eq!(s.n_samples, 2);
    }

    #[test]
    fn constant_column_has_zero_std() {
        let s = fit_stats(&[[5.0f64, 1.0], [5.0, 2.0]]).unwrap();
        assert_eq!(s.std[0], 0.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(fit_stats(&[[1.0f64]]).is_err());
        assert!(fit_stats::<f64, [f64; 1]>(&[]).is_err());
    }

    #[test]
    fn standardize_values() {
        let s = fit_stats(&[[1.0f64, 3.0], [3.0, 5.0]]).unwrap();
        assert_eq!(
            standardize(&[1.0f64, 3.0], &s, DEFAULT_EPS).unwrap(),
            vec![-1.0, -1.0]
        );
        assert!(standardize(&[1.0f64], &s, DEFAULT_EPS).is_err());
        let centered =
            standardize_with(&[1.0f64, 3.0], &s, StandardizeMode::CenterOnly, DEFAULT_EPS).unwrap();
        assert_eq!(centered, vec![-1.0, -1.0]);
    }

    #[test]
    fn degenerate_dimension_uses_eps() {
        let s = fit_stats(&[[5.0f64, 1.0], [5.0, 2.0]]).unwrap();
        let out = standardize(&[6.0f64, 1.5], &s, DEFAULT_EPS).unwrap();
        assert_eq!(out[0], 1.0 / DEFAULT_EPS);
        assert!(out[0].is_finite());
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[0.3, -2.0, 7.0], &[0.3, -2.0, 7.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 1.0], &[1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 2.0], &[-1.0, -2.0]).unwrap(), -1.0);
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cosine_exact_scale_invariance() {
        let u = [0.1, -0.7, 2.3, 5.0];
        let v = [1.9, 0.2, -0.4, 0.8];
        let u3: Vec<f64> = u.iter().map(|x| x * 3.0).collect();
        // f64 products by 3 of these values are not all exact; scale by a power of two too.
        let u4: Vec<f64> = u.iter().map(|x| x * 4.0).collect();
        assert_eq!(cosine(&u, &v).unwrap(), cosine(&u4, &v).unwrap());
        assert!((cosine(&u, &v).unwrap() - cosine(&u3, &v).unwrap()).abs() < 1e-15);
    }
}
