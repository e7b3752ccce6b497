//! Channel estimators: sparse recovery of the dominant delay-Doppler column
//! (OMP, basis-pursuit denoising) and per-subcarrier LS / LMMSE baselines.

use crate::channel_model::{dominant_block, ChannelModelConfig};
use crate::error::{validation, Error, Result};
use crate::linalg::{cholesky_solve, least_squares, CMatrix};
use crate::pilot_design::PilotPattern;
use crate::scalar::{dot_conj, norm2, unit_phasor, Cx, Real};

/// Received pilots of one OFDM symbol and the matching measurement matrix
/// `A = diag(X(p))·Φ_x`.
#[derive(Debug, Clone)]
pub struct PilotObservation<T: Real> {
    pub y: Vec<Cx<T>>,
    pub a: CMatrix<T>,
    pub noise_var: T,
    pub x: i64,
    pub n: usize,
}

impl<T: Real> PilotObservation<T> {
    pub fn new(
        y: Vec<Cx<T>>,
        pattern: &PilotPattern<T>,
        x: i64,
        n: usize,
        noise_var: T,
        cfg: &ChannelModelConfig,
    ) -> Result<Self> {
        if y.len() != pattern.len() {
            return validation(format!("{} pilot observations for {} pilots", y.len(), pattern.len()));
        }
        let a = dominant_block::<T>(&pattern.placement, x, n, cfg)?.scale_rows(&pattern.symbols);
        Ok(Self { y, a, noise_var, x, n })
    }

    /// Replaces the observed vector, keeping the measurement matrix.
    pub fn with_y(&self, y: Vec<Cx<T>>) -> Self {
        assert_eq!(y.len(), self.y.len());
        Self { y, ..self.clone() }
    }

    pub fn pilots(&self) -> usize {
        self.y.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult<T: Real> {
    /// Estimated dominant coefficients `b̂_x` (length `L`).
    pub b_hat: Vec<Cx<T>>,
    /// Indices of the non-zero entries of `b_hat`, ascending.
    pub support: Vec<usize>,
    /// Estimated diagonal response over all `K` subcarriers.
    pub h_free_hat: Vec<Cx<T>>,
    pub residual_norm: T,
    /// Residual norm after each greedy step (OMP only).
    pub residual_history: Vec<T>,
    /// Set when a least-squares refit needed regularization.
    pub ridged: bool,
}

fn residual<T: Real>(a: &CMatrix<T>, b: &[Cx<T>], y: &[Cx<T>]) -> Vec<Cx<T>> {
    a.mul_vec(b).iter().zip(y).map(|(f, v)| v - f).collect()
}

fn finish<T: Real>(
    obs: &PilotObservation<T>,
    b_hat: Vec<Cx<T>>,
    residual_history: Vec<T>,
    ridged: bool,
    cfg: &ChannelModelConfig,
) -> EstimateResult<T> {
    let support = b_hat
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm_sqr() > T::zero())
        .map(|(i, _)| i)
        .collect();
    let residual_norm = norm2(&residual(&obs.a, &b_hat, &obs.y));
    let h_free_hat = coeffs_to_channel(&b_hat, obs.x, obs.n, cfg);
    EstimateResult { b_hat, support, h_free_hat, residual_norm, residual_history, ridged }
}

/// OMP stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmpStop<T> {
    /// Stop after this many atoms.
    Sparsity(usize),
    /// Stop once the residual norm falls to this value.
    Residual(T),
}

/// Orthogonal matching pursuit on the dominant block.
pub fn omp_estimate<T: Real>(obs: &PilotObservation<T>, stop: OmpStop<T>, cfg: &ChannelModelConfig) -> Result<EstimateResult<T>> {
    let cols = obs.a.columns();
    let (p, l) = (obs.a.rows(), obs.a.cols());
    let norms: Vec<T> = cols.iter().map(|c| norm2(c)).collect();
    let (max_atoms, tol) = match stop {
        OmpStop::Sparsity(s) => (s.min(p).min(l), T::zero()),
        OmpStop::Residual(t) => {
            if !(t >= T::zero()) {
                return validation("residual threshold must be non-negative");
            }
            (p.min(l), t)
        }
    };
    let y_norm = norm2(&obs.y);
    // below this the residual is rounding noise and further atoms are spurious
    let floor = T::lit(1e-12) * y_norm;

    let mut support: Vec<usize> = Vec::new();
    let mut r = obs.y.clone();
    let mut r_norm = y_norm;
    let mut history = Vec::new();
    let mut coef: Vec<Cx<T>> = Vec::new();
    let mut ridged = false;
    while support.len() < max_atoms && r_norm > tol && r_norm > floor {
        let mut best = None;
        let mut best_score = T::zero();
        for j in 0..l {
            if support.contains(&j) || norms[j] == T::zero() {
                continue;
            }
            let score = dot_conj(&cols[j], &r).norm() / norms[j];
            if best.is_none() || score > best_score {
                best = Some(j);
                best_score = score;
            }
        }
        let Some(j) = best else { break };
        support.push(j);
        let chosen: Vec<&[Cx<T>]> = support.iter().map(|&s| cols[s].as_slice()).collect();
        let (c, flag) = least_squares(&chosen, &obs.y)?;
        ridged |= flag;
        coef = c;
        let mut fit = vec![Cx::new(T::zero(), T::zero()); p];
        for (s, v) in support.iter().zip(&coef) {
            for (f, a) in fit.iter_mut().zip(&cols[*s]) {
                *f += a * v;
            }
        }
        r = obs.y.iter().zip(&fit).map(|(y, f)| y - f).collect();
        r_norm = norm2(&r);
        history.push(r_norm);
    }
    let mut b_hat = vec![Cx::new(T::zero(), T::zero()); l];
    for (s, v) in support.iter().zip(&coef) {
        b_hat[*s] = *v;
    }
    Ok(finish(obs, b_hat, history, ridged, cfg))
}

/// Noise-scaled default constraint radius `√(P·σ²)·(1 + 2√2/√(2P))`.
pub fn default_bp_epsilon<T: Real>(pilots: usize, noise_var: T) -> T {
    let p = T::from_usize_lossy(pilots);
    (p * noise_var).sqrt() * (T::one() + T::lit(2.0 * 2f64.sqrt()) / (p + p).sqrt())
}

const BP_MAX_SWEEPS: usize = 10_000;
const BP_MAX_BISECTIONS: usize = 200;
const BP_TOLERANCE: f64 = 1e-6;

/// Solves `min ‖b‖₁ s.t. ‖y − A b‖₂ ≤ ε` by bisection on the multiplier of
/// the penalized form `½‖y − A b‖² + λ‖b‖₁`, each solved by coordinate
/// descent on the Gram matrix with warm starts. The returned iterate is
/// always feasible.
pub fn bp_estimate<T: Real>(obs: &PilotObservation<T>, epsilon: T, cfg: &ChannelModelConfig) -> Result<EstimateResult<T>> {
    if !(epsilon >= T::zero()) {
        return validation(format!("constraint radius must be non-negative, got {epsilon}"));
    }
    let l = obs.a.cols();
    let zero = Cx::new(T::zero(), T::zero());
    let y_norm = norm2(&obs.y);
    if y_norm <= epsilon {
        return Ok(finish(obs, vec![zero; l], Vec::new(), false, cfg));
    }

    let cols = obs.a.columns();
    let refs: Vec<&[Cx<T>]> = cols.iter().map(|c| c.as_slice()).collect();
    let (b_ls, ridged) = least_squares(&refs, &obs.y)?;
    let r_ls = norm2(&residual(&obs.a, &b_ls, &obs.y));
    let tol = T::lit(BP_TOLERANCE);
    if r_ls > epsilon + tol {
        return Err(Error::NonConvergence {
            iterations: 0,
            residual: r_ls.to_f64_lossy(),
            best: b_ls.iter().map(|v| (v.re.to_f64_lossy(), v.im.to_f64_lossy())).collect(),
        });
    }
    // a full-rank system whose constraint is tight at the least-squares
    // point has that point as its only (tolerance-)feasible solution
    if !ridged && r_ls + tol >= epsilon && obs.a.rows() >= l {
        return Ok(finish(obs, b_ls, Vec::new(), false, cfg));
    }

    let mut gram = CMatrix::zeros(l, l);
    for i in 0..l {
        for j in 0..=i {
            let v = dot_conj(&cols[i], &cols[j]);
            gram.set(i, j, v);
            gram.set(j, i, v.conj());
        }
    }
    let c: Vec<Cx<T>> = cols.iter().map(|col| dot_conj(col, &obs.y)).collect();
    let lambda_max = c.iter().fold(T::zero(), |m, v| m.max(v.norm()));
    let target = epsilon.max(r_ls);

    let mut lo = T::zero();
    let mut hi = lambda_max;
    let mut b_lo = b_ls.clone();
    let mut b = vec![zero; l];
    for _ in 0..BP_MAX_BISECTIONS {
        let mid = (lo + hi) / T::lit(2.0);
        lasso_cd(&gram, &c, mid, &mut b, BP_MAX_SWEEPS)?;
        let r = norm2(&residual(&obs.a, &b, &obs.y));
        if r <= target {
            lo = mid;
            b_lo.clone_from(&b);
            if target - r <= tol * T::lit(1e-3) {
                break;
            }
        } else {
            hi = mid;
        }
        if hi - lo <= T::lit(1e-12) * lambda_max {
            break;
        }
    }
    Ok(finish(obs, b_lo, Vec::new(), ridged, cfg))
}

/// Coordinate descent for `½‖y − A b‖² + λ‖b‖₁` given `G = AᴴA` and
/// `c = Aᴴy`, updating `b` in place. Returns the number of sweeps.
fn lasso_cd<T: Real>(gram: &CMatrix<T>, c: &[Cx<T>], lambda: T, b: &mut [Cx<T>], max_sweeps: usize) -> Result<usize> {
    let l = b.len();
    let scale = c.iter().fold(T::zero(), |m, v| m.max(v.norm())).max(T::min_positive_value());
    // g = G b, maintained incrementally
    let mut g = gram.mul_vec(b);
    for sweep in 1..=max_sweeps {
        let mut change = T::zero();
        for j in 0..l {
            let gjj = gram.get(j, j).re;
            if gjj <= T::zero() {
                continue;
            }
            let rho = c[j] - g[j] + b[j] * gjj;
            let mag = rho.norm();
            let new = if mag <= lambda { Cx::new(T::zero(), T::zero()) } else { rho * ((T::one() - lambda / mag) / gjj) };
            let delta = new - b[j];
            if delta.norm_sqr() > T::zero() {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += gram.get(i, j) * delta;
                }
                b[j] = new;
                change = change.max(delta.norm() * gjj);
            }
        }
        if change <= T::lit(1e-13) * scale {
            return Ok(sweep);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_sweeps,
        residual: f64::NAN,
        best: b.iter().map(|v| (v.re.to_f64_lossy(), v.im.to_f64_lossy())).collect(),
    })
}

/// `Ĥ(k) = Σ_l b̂_l e^{j2π x n/N_t} e^{−j2π l k/N_f}` for `k = 1..=K`.
pub fn coeffs_to_channel<T: Real>(b_hat: &[Cx<T>], x: i64, n: usize, cfg: &ChannelModelConfig) -> Vec<Cx<T>> {
    let k_count = cfg.subcarriers;
    let doppler: Cx<T> = unit_phasor(x * n as i64, cfg.symbols_per_packet());
    let active: Vec<(usize, Cx<T>)> = b_hat
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm_sqr() > T::zero())
        .map(|(l, v)| (l, v * doppler))
        .collect();
    (1..=k_count)
        .map(|k| {
            active.iter().fold(Cx::new(T::zero(), T::zero()), |acc, &(l, v)| {
                acc + v * unit_phasor::<T>(-(((l * k) % k_count) as i64), k_count)
            })
        })
        .collect()
}

/// Per-pilot LS estimates `Y(k_p)/X(k_p)`.
fn pilot_ls<T: Real>(y: &[Cx<T>], pattern: &PilotPattern<T>) -> Result<Vec<Cx<T>>> {
    if y.len() != pattern.len() {
        return validation(format!("{} pilot observations for {} pilots", y.len(), pattern.len()));
    }
    if pattern.symbols.iter().any(|s| s.norm_sqr() == T::zero()) {
        return validation("zero pilot symbol");
    }
    Ok(y.iter().zip(&pattern.symbols).map(|(v, s)| v / s).collect())
}

/// LS at pilots, linear interpolation of real and imaginary parts between
/// pilots, constant extension beyond the outermost pilots.
pub fn ls_estimate<T: Real>(y: &[Cx<T>], pattern: &PilotPattern<T>, subcarriers: usize) -> Result<Vec<Cx<T>>> {
    let at = pilot_ls(y, pattern)?;
    let pl = &pattern.placement;
    let mut out = Vec::with_capacity(subcarriers);
    let mut seg = 0usize;
    for k in 1..=subcarriers {
        if k <= pl[0] {
            out.push(at[0]);
        } else if k >= *pl.last().unwrap() {
            out.push(*at.last().unwrap());
        } else {
            while pl[seg + 1] < k {
                seg += 1;
            }
            let (k0, k1) = (pl[seg], pl[seg + 1]);
            let w = T::from_usize_lossy(k - k0) / T::from_usize_lossy(k1 - k0);
            out.push(at[seg] * (T::one() - w) + at[seg + 1] * w);
        }
    }
    Ok(out)
}

/// Frequency correlation `E[H(k₁)H(k₂)*] = g·Σ_l p_l e^{−j2πl(k₁−k₂)/K}` of
/// a delay power profile `p` scaled by `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyCorrelation<T: Real> {
    pub profile: Vec<T>,
    pub gain: T,
}

impl<T: Real> FrequencyCorrelation<T> {
    /// Equal average power on each of `paths` delays, unit total.
    pub fn uniform(paths: usize, gain: T) -> Self {
        Self { profile: vec![T::one() / T::from_usize_lossy(paths); paths], gain }
    }

    /// Correlation at subcarrier lag `k₁ − k₂ ∈ (−K, K)`, tabulated.
    fn table(&self, subcarriers: usize) -> Vec<Cx<T>> {
        let k = subcarriers as i64;
        (-(k - 1)..k)
            .map(|lag| {
                self.profile.iter().enumerate().fold(Cx::new(T::zero(), T::zero()), |acc, (l, &p)| {
                    acc + unit_phasor::<T>(-(l as i64 * lag), subcarriers) * p
                }) * self.gain
            })
            .collect()
    }
}

/// Wiener smoothing of the pilot LS estimates:
/// `Ĥ = R_hp (R_pp + σ²·diag(1/E_p))⁻¹ Ĥ_LS`.
pub fn lmmse_estimate<T: Real>(
    y: &[Cx<T>],
    pattern: &PilotPattern<T>,
    stats: &FrequencyCorrelation<T>,
    noise_var: T,
    subcarriers: usize,
) -> Result<Vec<Cx<T>>> {
    if !(noise_var >= T::zero()) {
        return validation("noise variance must be non-negative");
    }
    let at = pilot_ls(y, pattern)?;
    let table = stats.table(subcarriers);
    let lag = |k1: usize, k2: usize| table[k1 + subcarriers - 1 - k2];
    let pl = &pattern.placement;
    let p = pl.len();
    let mut rpp = CMatrix::from_fn(p, p, |i, j| lag(pl[i], pl[j]));
    let mean_diag = (0..p).fold(T::zero(), |a, i| a + rpp.get(i, i).re) / T::from_usize_lossy(p);
    let loading = T::lit(1e-12) * mean_diag.max(T::min_positive_value());
    for (i, s) in pattern.symbols.iter().enumerate() {
        let v = rpp.get(i, i) + Cx::new(noise_var / s.norm_sqr() + loading, T::zero());
        rpp.set(i, i, v);
    }
    let w = cholesky_solve(&rpp, &at).ok_or_else(|| Error::Singular("LMMSE pilot correlation".into()))?;
    Ok((1..=subcarriers)
        .map(|k| {
            pl.iter()
                .zip(&w)
                .fold(Cx::new(T::zero(), T::zero()), |acc, (&kp, wi)| acc + lag(k, kp) * wi)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::synthesize_diagonal;
    use crate::channel_model::DelayDopplerCoeffs;
    use crate::pilot_design::random_pattern;
    use crate::random::{complex_normal, stream_rng};

    fn cfg() -> ChannelModelConfig {
        ChannelModelConfig::reference()
    }

    fn observe(pattern: &PilotPattern<f64>, b_x: &[Cx<f64>], x: i64, n: usize, sigma2: f64, seed: u64) -> PilotObservation<f64> {
        let cfg = cfg();
        let coeffs = DelayDopplerCoeffs::from_dominant(cfg.paths(), cfg.doppler_half(), x, b_x);
        let h = synthesize_diagonal(&coeffs, n, &cfg);
        let mut rng = stream_rng(seed, 99);
        let y = pattern
            .placement
            .iter()
            .zip(&pattern.symbols)
            .map(|(&k, s)| h[k - 1] * s + complex_normal(&mut rng, sigma2))
            .collect();
        PilotObservation::new(y, pattern, x, n, sigma2, &cfg).unwrap()
    }

    fn pattern(seed: u64) -> PilotPattern<f64> {
        random_pattern(512, 64, &[0.5, 1.0, 2.0], &mut stream_rng(seed, 5)).unwrap()
    }

    fn sparse(seed: u64, s: usize) -> Vec<Cx<f64>> {
        let mut rng = stream_rng(seed, 6);
        let mut b = vec![Cx::new(0.0, 0.0); 26];
        for l in rand::seq::index::sample(&mut rng, 26, s).into_iter() {
            b[l] = complex_normal(&mut rng, 1.0);
        }
        b
    }

    #[test]
    fn omp_single_atom() {
        let pat = pattern(1);
        let mut b = vec![Cx::new(0.0, 0.0); 26];
        b[7] = Cx::new(0.3, -1.2);
        let est = omp_estimate(&observe(&pat, &b, 1, 2, 0.0, 0), OmpStop::Sparsity(1), &cfg()).unwrap();
        assert_eq!(est.support, vec![7]);
        assert!((est.b_hat[7] - b[7]).norm() < 1e-10);
    }

    #[test]
    fn omp_residual_decreases_and_respects_sparsity() {
        for seed in 0..20 {
            let pat = pattern(seed);
            let b = sparse(seed, 6);
            let est = omp_estimate(&observe(&pat, &b, 0, 0, 0.01, seed), OmpStop::Sparsity(6), &cfg()).unwrap();
            assert!(est.support.len() <= 6);
            for w in est.residual_history.windows(2) {
                assert!(w[1] < w[0]);
            }
        }
    }

    #[test]
    fn omp_residual_mode_stops_at_threshold() {
        let pat = pattern(3);
        let b = sparse(3, 4);
        let obs = observe(&pat, &b, -1, 3, 0.0, 3);
        let est = omp_estimate(&obs, OmpStop::Residual(1e-8), &cfg()).unwrap();
        assert_eq!(est.support.len(), 4);
        assert!(est.residual_norm <= 1e-8);
    }

    #[test]
    fn bp_noiseless_single_atom() {
        let pat = pattern(2);
        let mut b = vec![Cx::new(0.0, 0.0); 26];
        b[19] = Cx::new(-0.7, 0.4);
        let obs = observe(&pat, &b, 2, 1, 0.0, 0);
        let est = bp_estimate(&obs, 0.0, &cfg()).unwrap();
        for (u, v) in est.b_hat.iter().zip(&b) {
            assert!((u - v).norm() < 1e-6);
        }
        let omp = omp_estimate(&obs, OmpStop::Sparsity(1), &cfg()).unwrap();
        assert!((omp.b_hat[19] - est.b_hat[19]).norm() < 1e-6);
    }

    #[test]
    fn bp_feasible_and_no_larger_l1_than_truth() {
        for seed in 0..20 {
            let pat = pattern(seed + 100);
            let b = sparse(seed, 6);
            let sigma2 = 0.01;
            let obs = observe(&pat, &b, 0, 0, sigma2, seed);
            let eps = default_bp_epsilon(64, sigma2);
            let est = bp_estimate(&obs, eps, &cfg()).unwrap();
            assert!(est.residual_norm <= eps + 1e-6);
            let truth_res = norm2(&residual(&obs.a, &b, &obs.y));
            if truth_res <= eps {
                let l1 = |v: &[Cx<f64>]| v.iter().map(|z| z.norm()).sum::<f64>();
                assert!(l1(&est.b_hat) <= l1(&b) + 1e-6);
            }
        }
    }

    #[test]
    fn bp_zero_when_observation_is_inside_the_ball() {
        let pat = pattern(4);
        let obs = observe(&pat, &sparse(4, 2), 0, 0, 0.0, 4).with_y(vec![Cx::new(1e-3, 0.0); 64]);
        let est = bp_estimate(&obs, 1.0, &cfg()).unwrap();
        assert!(est.support.is_empty());
    }

    #[test]
    fn channel_from_coefficients() {
        let cfg = cfg();
        let b = sparse(5, 6);
        let coeffs = DelayDopplerCoeffs::from_dominant(26, 2, -2, &b);
        let h = synthesize_diagonal(&coeffs, 4, &cfg);
        let got = coeffs_to_channel(&b, -2, 4, &cfg);
        for (u, v) in got.iter().zip(&h) {
            assert!((u - v).norm() < 1e-9);
        }
        assert!(coeffs_to_channel(&vec![Cx::new(0.0, 0.0); 26], 0, 0, &cfg).iter().all(|v| v.norm() == 0.0));
        let twice: Vec<_> = b.iter().map(|v| v * 2.0).collect();
        for (u, v) in coeffs_to_channel(&twice, -2, 4, &cfg).iter().zip(&got) {
            assert!((u - v * 2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn ls_flat_and_exact_at_pilots() {
        let pat = pattern(6);
        let y: Vec<_> = pat.symbols.clone();
        let h = ls_estimate(&y, &pat, 512).unwrap();
        assert!(h.iter().all(|v| (v - Cx::new(1.0, 0.0)).norm() < 1e-12));

        let b = sparse(6, 6);
        let obs = observe(&pat, &b, 0, 0, 0.0, 6);
        let truth = coeffs_to_channel(&b, 0, 0, &cfg());
        let h = ls_estimate(&obs.y, &pat, 512).unwrap();
        for &k in &pat.placement {
            assert!((h[k - 1] - truth[k - 1]).norm() < 1e-12);
        }
        let mut bad = pat.clone();
        bad.symbols[3] = Cx::new(0.0, 0.0);
        assert!(ls_estimate(&obs.y, &bad, 512).is_err());
    }

    #[test]
    fn lmmse_flat_channel_and_noiseless_limit() {
        let pat = pattern(7);
        let flat = FrequencyCorrelation { profile: vec![1.0], gain: 1.0 };
        let h = lmmse_estimate(&pat.symbols, &pat, &flat, 0.0, 512).unwrap();
        assert!(h.iter().all(|v| (v - Cx::new(1.0, 0.0)).norm() < 1e-9));

        let b = sparse(7, 6);
        let obs = observe(&pat, &b, 0, 0, 0.0, 7);
        let stats = FrequencyCorrelation::uniform(26, 1.0);
        let h = lmmse_estimate(&obs.y, &pat, &stats, 0.0, 512).unwrap();
        let truth = coeffs_to_channel(&b, 0, 0, &cfg());
        // noiseless Wiener filter reproduces the pilots (the truth lies in the span of R)
        for &k in &pat.placement {
            assert!((h[k - 1] - truth[k - 1]).norm() < 1e-6);
        }
    }

    #[test]
    fn estimators_are_pure() {
        let pat = pattern(8);
        let obs = observe(&pat, &sparse(8, 6), 1, 1, 0.05, 8);
        let eps = default_bp_epsilon(64, 0.05);
        assert_eq!(bp_estimate(&obs, eps, &cfg()).unwrap(), bp_estimate(&obs, eps, &cfg()).unwrap());
        assert_eq!(
            omp_estimate(&obs, OmpStop::Sparsity(6), &cfg()).unwrap(),
            omp_estimate(&obs, OmpStop::Sparsity(6), &cfg()).unwrap()
        );
    }
}
