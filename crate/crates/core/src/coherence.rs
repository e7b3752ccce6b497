//! Average coherence of a measurement matrix, its fast pilot-domain form, and
//! the sparse-recovery bound it implies.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::channel_model::ChannelModelConfig;
use crate::error::{domain, validation, Result};
use crate::linalg::CMatrix;
use crate::pilot_design::PilotPattern;
use crate::scalar::{dot_conj, norm2, unit_phasor, Cx, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceParams<T: Real> {
    /// Pairs with normalized inner product below `delta` are ignored.
    pub delta: T,
    pub normalize_columns: bool,
}

impl<T: Real> CoherenceParams<T> {
    pub fn new(delta: T) -> Result<Self> {
        if !(delta > T::zero() && delta < T::one()) {
            return validation(format!("coherence threshold must lie in (0, 1), got {delta}"));
        }
        Ok(Self { delta, normalize_columns: true })
    }
}

/// Thresholded mean of `|g_ij|` over unordered column pairs, where `g_ij` is
/// the inner product of the (normalized) columns. Zero when no pair reaches
/// the threshold.
pub fn average_coherence<T: Real>(matrix: &CMatrix<T>, params: &CoherenceParams<T>) -> Result<T> {
    let cols = normalized_columns(matrix, params.normalize_columns)?;
    let mut sum = T::zero();
    let mut count = 0usize;
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            let g = dot_conj(&cols[i], &cols[j]).norm();
            if g >= params.delta {
                sum += g;
                count += 1;
            }
        }
    }
    Ok(if count == 0 { T::zero() } else { sum / T::from_usize_lossy(count) })
}

/// Largest normalized inner product between two distinct columns.
pub fn mutual_coherence<T: Real>(matrix: &CMatrix<T>) -> Result<T> {
    let cols = normalized_columns(matrix, true)?;
    let mut best = T::zero();
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            best = best.max(dot_conj(&cols[i], &cols[j]).norm());
        }
    }
    Ok(best)
}

fn normalized_columns<T: Real>(matrix: &CMatrix<T>, normalize: bool) -> Result<Vec<Vec<Cx<T>>>> {
    if matrix.cols() < 2 {
        return validation("coherence needs at least two columns");
    }
    let mut cols = matrix.columns();
    if normalize {
        for (j, c) in cols.iter_mut().enumerate() {
            let nrm = norm2(c);
            if nrm == T::zero() {
                return validation(format!("column {j} is zero and cannot be normalized"));
            }
            c.iter_mut().for_each(|v| *v = *v / nrm);
        }
    }
    Ok(cols)
}

/// Sparsity below which the representation is unique and greedy/convex
/// recovery succeeds: `(1 + 1/μ) / 2`.
pub fn recovery_bound<T: Real>(mu: T) -> Result<T> {
    if !(mu > T::zero() && mu <= T::one()) {
        return domain(format!("coherence must lie in (0, 1], got {mu}"));
    }
    Ok((T::one() + T::one() / mu) / T::lit(2.0))
}

/// Evaluates the average coherence of `X_d(p)·Φ_x` directly from the pilot
/// placement and energies.
///
/// Columns `u < v` of the dominant block only interact through the delay
/// difference `z = v − u`, so the Gram matrix is Toeplitz:
/// `g_z = Σ_p E_p e^{−j2π z k_p / N_f} / Σ_p E_p`, shared by the `L − z`
/// pairs at that lag. The result does not depend on the Doppler bin.
#[derive(Debug)]
pub struct CoherenceEvaluator<T: Real> {
    paths: usize,
    freq_bins: usize,
    twiddles: Vec<Cx<T>>,
    evaluations: AtomicUsize,
}

impl<T: Real> CoherenceEvaluator<T> {
    pub fn new(paths: usize, freq_bins: usize) -> Self {
        Self {
            paths,
            freq_bins,
            twiddles: (0..freq_bins).map(|r| unit_phasor(-(r as i64), freq_bins)).collect(),
            evaluations: AtomicUsize::new(0),
        }
    }

    pub fn for_config(cfg: &ChannelModelConfig) -> Self {
        Self::new(cfg.paths(), cfg.freq_bins())
    }

    /// Objective evaluations performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn evaluate(&self, placement: &[usize], energies: &[T], params: &CoherenceParams<T>) -> T {
        debug_assert_eq!(placement.len(), energies.len());
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let total = energies.iter().fold(T::zero(), |a, &e| a + e);
        if self.paths < 2 || total <= T::zero() {
            return T::zero();
        }
        let mut weighted = T::zero();
        let mut weight = 0usize;
        for z in 1..self.paths {
            let mut acc = Cx::new(T::zero(), T::zero());
            for (&k, &e) in placement.iter().zip(energies) {
                acc += self.twiddles[(z * k) % self.freq_bins] * e;
            }
            let g = acc.norm() / total;
            if g >= params.delta {
                let pairs = self.paths - z;
                weighted += g * T::from_usize_lossy(pairs);
                weight += pairs;
            }
        }
        if weight == 0 {
            T::zero()
        } else {
            weighted / T::from_usize_lossy(weight)
        }
    }
}

/// Average coherence of `X_d(p)·Φ_x` for a pilot pattern, via the Toeplitz form.
pub fn pilot_coherence_fast<T: Real>(pattern: &PilotPattern<T>, cfg: &ChannelModelConfig, params: &CoherenceParams<T>) -> T {
    CoherenceEvaluator::for_config(cfg).evaluate(&pattern.placement, &pattern.energies(), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{complex_normal, stream_rng};

    fn c(re: f64, im: f64) -> Cx<f64> {
        Cx::new(re, im)
    }

    fn params(delta: f64) -> CoherenceParams<f64> {
        CoherenceParams::new(delta).unwrap()
    }

    /// Pair enumeration over both orders (i ≠ j), kept independent of the
    /// implementation's unordered loop.
    fn oracle(m: &CMatrix<f64>, delta: f64) -> f64 {
        let cols: Vec<Vec<Cx<f64>>> = (0..m.cols())
            .map(|j| {
                let col = m.column(j);
                let n = col.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                col.into_iter().map(|v| v / n).collect()
            })
            .collect();
        let (mut s, mut cnt) = (0.0, 0.0);
        for i in 0..cols.len() {
            for j in 0..cols.len() {
                if i == j {
                    continue;
                }
                let g: Cx<f64> = cols[i].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum();
                if g.norm() >= delta {
                    s += g.norm();
                    cnt += 1.0;
                }
            }
        }
        if cnt == 0.0 { 0.0 } else { s / cnt }
    }

    #[test]
    fn identical_columns_are_fully_coherent() {
        let m = CMatrix::from_fn(3, 2, |r, _| c(r as f64 + 1.0, 0.5));
        assert!((average_coherence(&m, &params(0.1)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_columns_give_zero() {
        let m = CMatrix::from_fn(4, 4, |r, k| if r == k { c(2.0, 0.0) } else { c(0.0, 0.0) });
        assert_eq!(average_coherence(&m, &params(0.1)).unwrap(), 0.0);
    }

    #[test]
    fn random_matrix_matches_pair_enumeration() {
        let mut rng = stream_rng(42, 0);
        for _ in 0..20 {
            let m = CMatrix::from_fn(8, 4, |_, _| complex_normal(&mut rng, 1.0));
            for delta in [0.05, 0.3, 0.6] {
                let got = average_coherence(&m, &params(delta)).unwrap();
                assert!((got - oracle(&m, delta)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_column_is_rejected() {
        let m = CMatrix::from_fn(3, 2, |r, k| if k == 1 { c(0.0, 0.0) } else { c(r as f64, 1.0) });
        assert!(average_coherence(&m, &params(0.1)).is_err());
        let mut raw = params(0.1);
        raw.normalize_columns = false;
        assert!(average_coherence(&m, &raw).is_ok());
        assert!(CoherenceParams::new(1.0).is_err());
        assert!(CoherenceParams::new(0.0).is_err());
    }

    #[test]
    fn bound_values() {
        assert!((recovery_bound(1.0f64 / 11.0).unwrap() - 6.0).abs() < 1e-12);
        assert_eq!(recovery_bound(1.0).unwrap(), 1.0);
        assert!((recovery_bound(1.0f64 / 3.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(recovery_bound(0.0).is_err());
        assert!(recovery_bound(-0.5).is_err());
    }

    #[test]
    fn equidistant_uniform_power_is_incoherent() {
        let eval = CoherenceEvaluator::<f64>::new(26, 512);
        let placement: Vec<usize> = (0..64).map(|p| 1 + 8 * p).collect();
        assert_eq!(eval.evaluate(&placement, &vec![1.0; 64], &params(0.1)), 0.0);
        // every lag is below any threshold, not just the chosen one
        assert_eq!(eval.evaluate(&placement, &vec![1.0; 64], &params(1e-9)), 0.0);
        assert_eq!(eval.evaluations(), 2);
    }

    proptest::proptest! {
        #[test]
        fn scale_invariant(seed in 0u64..1000, re in -3.0f64..3.0, im in -3.0f64..3.0) {
            proptest::prop_assume!(re.abs() + im.abs() > 1e-3);
            let mut rng = stream_rng(seed, 1);
            let m = CMatrix::from_fn(6, 5, |_, _| complex_normal(&mut rng, 1.0));
            let a = average_coherence(&m, &params(0.2)).unwrap();
            let b = average_coherence(&m.scale(c(re, im)), &params(0.2)).unwrap();
            proptest::prop_assert!((a - b).abs() < 1e-12);
            proptest::prop_assert!((0.0..=1.0).contains(&a));
            proptest::prop_assert!(a == 0.0 || a >= 0.2);
        }
    }
}
