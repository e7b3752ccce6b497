//! Delay-Doppler channel model: dimensions, the pilot-row dictionary, sparse
//! ground-truth sampling, and synthesis of the frequency-domain channel matrix
//! (diagonal plus inter-carrier interference) of one OFDM symbol.
//!
//! Subcarriers are indexed `k ∈ [1, K]`. The stacked coefficient vector holds
//! `β[l, m]` at `l + L·(m + M)`, so the block for Doppler bin `x` is the
//! contiguous slice starting at `L·(M + x)`.

use rand::seq::index::sample;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{domain, validation, Result};
use crate::linalg::CMatrix;
use crate::random::complex_normal;
use crate::scalar::{cis, norm_sqr, unit_phasor, Cx, Real};

/// `ceil(v)`, treating values within 1e-9 (relative) of an integer as that
/// integer so that products such as `5e6 · 5e-6` land on 25, not 26.
fn snapped_ceil(v: f64) -> usize {
    let r = v.round();
    let c = if (v - r).abs() <= 1e-9 * v.abs().max(1.0) { r } else { v.ceil() };
    c.max(0.0) as usize
}

/// Number of resolvable paths `L = ceil(W·τ_max) + 1` and Doppler half-count
/// `M = ceil(2·T_d·f_dmax)`.
pub fn resolvable_dims(bandwidth_hz: f64, tau_max_s: f64, t_d_s: f64, f_dmax_hz: f64) -> (usize, usize) {
    (
        snapped_ceil(bandwidth_hz * tau_max_s) + 1,
        snapped_ceil(2.0 * t_d_s * f_dmax_hz),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModelConfig {
    pub bandwidth_hz: f64,
    pub tau_max_s: f64,
    pub t_d_s: f64,
    pub f_dmax_hz: f64,
    /// Subcarrier count `K` (also the frequency grid size `N_f`).
    pub subcarriers: usize,
    pub cp_len: usize,
    /// Active paths `S` of the sparse ground truth.
    pub sparsity: usize,
    /// Dominance threshold relative to the strongest coefficient power.
    pub gamma_rel: f64,
    paths: usize,
    doppler_half: usize,
    symbols_per_packet: usize,
}

impl ChannelModelConfig {
    pub fn new(
        bandwidth_hz: f64,
        tau_max_s: f64,
        t_d_s: f64,
        f_dmax_hz: f64,
        subcarriers: usize,
        cp_len: usize,
        sparsity: usize,
    ) -> Result<Self> {
        if !(bandwidth_hz > 0.0) || !(t_d_s > 0.0) || !(tau_max_s >= 0.0) || !(f_dmax_hz >= 0.0) {
            return validation("bandwidth and packet duration must be positive, delay and Doppler spreads non-negative");
        }
        if subcarriers < 2 {
            return validation("need at least two subcarriers");
        }
        let (paths, doppler_half) = resolvable_dims(bandwidth_hz, tau_max_s, t_d_s, f_dmax_hz);
        let span = paths - 1;
        if cp_len < span {
            return validation(format!("cyclic prefix {cp_len} shorter than the delay span {span} samples"));
        }
        if paths > subcarriers {
            return validation(format!("{paths} resolvable paths exceed {subcarriers} subcarriers"));
        }
        if sparsity > paths {
            return validation(format!("sparsity {sparsity} exceeds the {paths} resolvable paths"));
        }
        let symbol_s = (subcarriers + cp_len) as f64 / bandwidth_hz;
        let symbols_per_packet = ((t_d_s / symbol_s) * (1.0 + 1e-12)).floor() as usize;
        if symbols_per_packet == 0 {
            return validation("packet shorter than one OFDM symbol");
        }
        Ok(Self {
            bandwidth_hz,
            tau_max_s,
            t_d_s,
            f_dmax_hz,
            subcarriers,
            cp_len,
            sparsity,
            gamma_rel: 0.01,
            paths,
            doppler_half,
            symbols_per_packet,
        })
    }

    /// Five-megahertz, 512-subcarrier link at up to 500 km/h with six active paths.
    pub fn reference() -> Self {
        Self::new(5e6, 5e-6, 0.675e-3, 1088.0, 512, 32, 6).expect("reference channel is valid")
    }

    /// Resolvable paths `L`.
    pub fn paths(&self) -> usize {
        self.paths
    }

    /// Doppler half-count `M`.
    pub fn doppler_half(&self) -> usize {
        self.doppler_half
    }

    /// Doppler bins `2M + 1`.
    pub fn doppler_bins(&self) -> usize {
        2 * self.doppler_half + 1
    }

    /// Total coefficient count `N_0 = L·(2M + 1)`.
    pub fn coefficient_count(&self) -> usize {
        self.paths * self.doppler_bins()
    }

    /// OFDM symbols per packet `N_t = floor(T_d / T_0)`, `T_0 = (K + cp)/W`.
    pub fn symbols_per_packet(&self) -> usize {
        self.symbols_per_packet
    }

    /// Frequency grid size `N_f` (equal to `K`).
    pub fn freq_bins(&self) -> usize {
        self.subcarriers
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// First column of the block for Doppler bin `x`: `L·(M + x)`.
    pub fn block_start(&self, x: i64) -> Result<usize> {
        self.check_bin(x)?;
        Ok(self.paths * (self.doppler_half as i64 + x) as usize)
    }

    pub fn check_bin(&self, x: i64) -> Result<()> {
        if x.unsigned_abs() as usize > self.doppler_half {
            return domain(format!("Doppler index {x} outside [-{0}, {0}]", self.doppler_half));
        }
        Ok(())
    }

    /// `u_n ⊗ u_k` entry for delay `l` and Doppler bin `m`:
    /// `e^{j2π m n / N_t} · e^{−j2π l k / N_f}`.
    pub fn atom<T: Real>(&self, l: usize, m: i64, n: usize, k: usize) -> Cx<T> {
        let nt = self.symbols_per_packet as i64;
        let nf = self.freq_bins() as i64;
        unit_phasor(m * n as i64 * nf - (l * k) as i64 * nt, (nt * nf) as usize)
    }
}

/// Checks that a pilot placement is strictly increasing within `[1, K]`.
pub fn validate_placement(placement: &[usize], subcarriers: usize) -> Result<()> {
    if placement.is_empty() {
        return validation("empty pilot placement");
    }
    for w in placement.windows(2) {
        if w[0] >= w[1] {
            return validation(format!("placement not strictly increasing at {} → {}", w[0], w[1]));
        }
    }
    if placement[0] < 1 || *placement.last().unwrap() > subcarriers {
        return validation(format!("placement outside [1, {subcarriers}]"));
    }
    Ok(())
}

/// Pilot-row model matrix `Φ` (`P × L(2M+1)`) of one OFDM symbol.
#[derive(Debug, Clone)]
pub struct Dictionary<T: Real> {
    pub phi: CMatrix<T>,
    pub placement: Vec<usize>,
    pub n: usize,
    paths: usize,
    doppler_half: usize,
}

pub fn build_dictionary<T: Real>(placement: &[usize], n: usize, cfg: &ChannelModelConfig) -> Result<Dictionary<T>> {
    validate_placement(placement, cfg.subcarriers)?;
    let l_count = cfg.paths();
    let m_half = cfg.doppler_half() as i64;
    let phi = CMatrix::from_fn(placement.len(), cfg.coefficient_count(), |p, u| {
        let l = u % l_count;
        let m = (u / l_count) as i64 - m_half;
        cfg.atom(l, m, n, placement[p])
    });
    Ok(Dictionary {
        phi,
        placement: placement.to_vec(),
        n,
        paths: l_count,
        doppler_half: cfg.doppler_half(),
    })
}

impl<T: Real> Dictionary<T> {
    /// Columns `L(M+x) … L(M+x)+L−1`, the block of Doppler bin `x`.
    pub fn dominant_submatrix(&self, x: i64) -> Result<CMatrix<T>> {
        if x.unsigned_abs() as usize > self.doppler_half {
            return domain(format!("Doppler index {x} outside [-{0}, {0}]", self.doppler_half));
        }
        let start = self.paths * (self.doppler_half as i64 + x) as usize;
        Ok(self.phi.column_block(start, self.paths))
    }
}

/// Dominant block `Φ_x` built directly, without the full dictionary.
pub fn dominant_block<T: Real>(placement: &[usize], x: i64, n: usize, cfg: &ChannelModelConfig) -> Result<CMatrix<T>> {
    validate_placement(placement, cfg.subcarriers)?;
    cfg.check_bin(x)?;
    Ok(CMatrix::from_fn(placement.len(), cfg.paths(), |p, l| cfg.atom(l, x, n, placement[p])))
}

/// Delay-Doppler coefficients `B` (`L × (2M+1)`), stored column-stacked as `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerCoeffs<T: Real> {
    pub paths: usize,
    pub doppler_half: usize,
    /// Doppler bin holding the dominant coefficients.
    pub x: i64,
    pub b: Vec<Cx<T>>,
}

impl<T: Real> DelayDopplerCoeffs<T> {
    pub fn zeros(paths: usize, doppler_half: usize, x: i64) -> Self {
        Self {
            paths,
            doppler_half,
            x,
            b: vec![Cx::new(T::zero(), T::zero()); paths * (2 * doppler_half + 1)],
        }
    }

    /// Coefficients whose only non-zero column is `x`.
    pub fn from_dominant(paths: usize, doppler_half: usize, x: i64, b_x: &[Cx<T>]) -> Self {
        assert_eq!(b_x.len(), paths);
        let mut out = Self::zeros(paths, doppler_half, x);
        let start = out.index(0, x);
        out.b[start..start + paths].copy_from_slice(b_x);
        out
    }

    #[inline]
    pub fn index(&self, l: usize, m: i64) -> usize {
        l + self.paths * (m + self.doppler_half as i64) as usize
    }

    pub fn entry(&self, l: usize, m: i64) -> Cx<T> {
        self.b[self.index(l, m)]
    }

    /// `B` as an explicit matrix.
    pub fn matrix(&self) -> CMatrix<T> {
        CMatrix::from_fn(self.paths, 2 * self.doppler_half + 1, |l, c| self.b[l + self.paths * c])
    }

    /// `b_x`, the column of bin `x`.
    pub fn dominant(&self) -> &[Cx<T>] {
        let start = self.index(0, self.x);
        &self.b[start..start + self.paths]
    }

    /// Count of coefficients with `|β|² > gamma`.
    pub fn dominant_count(&self, gamma: T) -> usize {
        self.b.iter().filter(|v| v.norm_sqr() > gamma).count()
    }

    pub fn nonzeros(&self) -> usize {
        self.b.iter().filter(|v| v.norm_sqr() > T::zero()).count()
    }

    pub fn scaled(&self, s: Cx<T>) -> Self {
        Self { b: self.b.iter().map(|v| v * s).collect(), ..self.clone() }
    }
}

/// Draws a position-based sparse channel: `S` distinct delays in column `x`,
/// circular Gaussian gains normalized to unit total power.
pub fn sample_sparse_channel<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ChannelModelConfig,
    x: i64,
) -> Result<DelayDopplerCoeffs<T>> {
    cfg.check_bin(x)?;
    let l_count = cfg.paths();
    let mut b_x = vec![Cx::new(T::zero(), T::zero()); l_count];
    if cfg.sparsity > 0 {
        for l in sample(rng, l_count, cfg.sparsity).into_iter() {
            let mut v = complex_normal::<T, _>(rng, 1.0);
            // a zero draw would silently reduce the sparsity
            while v.norm_sqr() == T::zero() {
                v = complex_normal(rng, 1.0);
            }
            b_x[l] = v;
        }
        let scale = norm_sqr(&b_x).sqrt();
        b_x.iter_mut().for_each(|v| *v = *v / scale);
    }
    Ok(DelayDopplerCoeffs::from_dominant(l_count, cfg.doppler_half(), x, &b_x))
}

/// `H(n, k) = (u_n ⊗ u_k) · b`.
pub fn diag_from_coeffs<T: Real>(coeffs: &DelayDopplerCoeffs<T>, n: usize, k: usize, cfg: &ChannelModelConfig) -> Cx<T> {
    let m_half = coeffs.doppler_half as i64;
    coeffs
        .b
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm_sqr() > T::zero())
        .fold(Cx::new(T::zero(), T::zero()), |acc, (u, v)| {
            let l = u % coeffs.paths;
            let m = (u / coeffs.paths) as i64 - m_half;
            acc + cfg.atom::<T>(l, m, n, k) * v
        })
}

/// [`diag_from_coeffs`] over every subcarrier `k = 1..=K`.
pub fn synthesize_diagonal<T: Real>(coeffs: &DelayDopplerCoeffs<T>, n: usize, cfg: &ChannelModelConfig) -> Vec<Cx<T>> {
    (1..=cfg.subcarriers).map(|k| diag_from_coeffs(coeffs, n, k, cfg)).collect()
}

/// First useful (post-prefix) sample of symbol `n`, counted from packet start.
fn symbol_origin(n: usize, cfg: &ChannelModelConfig) -> usize {
    n * (cfg.subcarriers + cfg.cp_len) + cfg.cp_len
}

/// Window-averaged Doppler rotation
/// `R(s) = (1/K) Σ_{m'} e^{j2π f_d T_s (t_0 + m')} e^{j2π s m' / K}` for
/// `s = 0..K−1`, evaluated by the geometric-series closed form.
///
/// For single-Doppler taps `h(ℓ, t) = β_ℓ e^{j2π f_d T_s t}` the frequency
/// matrix is `H(k, d) = G(d) · R((d − k) mod K)`.
#[derive(Debug, Clone)]
pub struct DopplerKernel<T: Real> {
    pub values: Vec<Cx<T>>,
}

impl<T: Real> DopplerKernel<T> {
    pub fn new(f_d: f64, n: usize, cfg: &ChannelModelConfig) -> Self {
        let k = cfg.subcarriers;
        let theta = 2.0 * std::f64::consts::PI * f_d * cfg.sample_period();
        let origin = cis::<f64>(theta * symbol_origin(n, cfg) as f64);
        let values = (0..k)
            .map(|s| {
                let psi = theta + 2.0 * std::f64::consts::PI * s as f64 / k as f64;
                // reduce to (−π, π] before testing for the degenerate ratio
                let wrapped = psi - 2.0 * std::f64::consts::PI * (psi / (2.0 * std::f64::consts::PI)).round();
                let avg = if wrapped.abs() < 1e-12 {
                    Cx::new(1.0, 0.0)
                } else {
                    let num = cis::<f64>(k as f64 * wrapped) - Cx::new(1.0, 0.0);
                    let den = (cis::<f64>(wrapped) - Cx::new(1.0, 0.0)) * k as f64;
                    num / den
                };
                let v = origin * avg;
                Cx::new(T::lit(v.re), T::lit(v.im))
            })
            .collect();
        Self { values }
    }

    /// `R((d − k) mod K)` for one-based `k`, `d`.
    #[inline]
    pub fn at(&self, k: usize, d: usize) -> Cx<T> {
        let len = self.values.len();
        self.values[(d + len - k) % len]
    }

    /// Full matrix entry `H(k, d)` implied by a diagonal response: the
    /// diagonal value of column `d` spread along the kernel.
    #[inline]
    pub fn spread(&self, diag_d: Cx<T>, k: usize, d: usize) -> Cx<T> {
        diag_d * self.at(k, d) / self.values[0]
    }
}

/// Time-varying taps of one OFDM symbol together with the equivalent
/// delay-Doppler coefficients and the diagonal response.
#[derive(Debug, Clone)]
pub struct SymbolChannel<T: Real> {
    pub n: usize,
    pub f_d: f64,
    /// Per-path gains `β_ℓ` (the physical column of the ground truth).
    pub gains: Vec<Cx<T>>,
    /// Coefficients that reproduce `diag(H)` exactly through `(u_n ⊗ u_k)·b`.
    pub effective: DelayDopplerCoeffs<T>,
    pub kernel: DopplerKernel<T>,
    /// `H(k, k)`, `k = 1..=K`.
    pub diagonal: Vec<Cx<T>>,
}

impl<T: Real> SymbolChannel<T> {
    /// Tap `h(ℓ, m)` at sample `m ∈ [0, K + cp)` of this symbol (prefix included).
    pub fn tap(&self, l: usize, m: usize, cfg: &ChannelModelConfig) -> Cx<T> {
        let t = self.n * (cfg.subcarriers + cfg.cp_len) + m;
        let theta = 2.0 * std::f64::consts::PI * self.f_d * cfg.sample_period() * t as f64;
        self.gains[l] * cis::<T>(theta)
    }

    /// Channel matrix entry `H(k, d)` (one-based).
    pub fn entry(&self, k: usize, d: usize) -> Cx<T> {
        self.kernel.spread(self.diagonal[d - 1], k, d)
    }
}

/// Builds the per-symbol channel for ground truth `coeffs` under Doppler `f_d`.
/// Every active path rotates with the same Doppler.
pub fn symbol_channel<T: Real>(
    coeffs: &DelayDopplerCoeffs<T>,
    f_d: f64,
    n: usize,
    cfg: &ChannelModelConfig,
) -> Result<SymbolChannel<T>> {
    if coeffs.paths != cfg.paths() || coeffs.doppler_half != cfg.doppler_half() {
        return validation("coefficients do not match the channel configuration");
    }
    let gains = coeffs.dominant().to_vec();
    let kernel = DopplerKernel::new(f_d, n, cfg);
    let effective = effective_coeffs(&gains, coeffs.x, n, &kernel, cfg);
    let diagonal = synthesize_diagonal(&effective, n, cfg);
    Ok(SymbolChannel { n, f_d, gains, effective, kernel, diagonal })
}

/// Maps per-path gains to the coefficients of bin `x` that reproduce the
/// diagonal: `b[l] = β_l · R(0) · e^{j2πl/K} · e^{−j2πxn/N_t}`.
pub fn effective_coeffs<T: Real>(
    gains: &[Cx<T>],
    x: i64,
    n: usize,
    kernel: &DopplerKernel<T>,
    cfg: &ChannelModelConfig,
) -> DelayDopplerCoeffs<T> {
    let k = cfg.subcarriers;
    let doppler: Cx<T> = unit_phasor(-(x * n as i64), cfg.symbols_per_packet());
    let r0 = kernel.values[0];
    let b_x: Vec<Cx<T>> = gains
        .iter()
        .enumerate()
        .map(|(l, g)| g * r0 * unit_phasor::<T>(l as i64, k) * doppler)
        .collect();
    DelayDopplerCoeffs::from_dominant(cfg.paths(), cfg.doppler_half(), x, &b_x)
}

/// Inverse of [`effective_coeffs`]: per-path gains from bin-`x` coefficients.
pub fn gains_from_effective<T: Real>(
    b_x: &[Cx<T>],
    x: i64,
    n: usize,
    kernel: &DopplerKernel<T>,
    cfg: &ChannelModelConfig,
) -> Vec<Cx<T>> {
    let k = cfg.subcarriers;
    let doppler: Cx<T> = unit_phasor(x * n as i64, cfg.symbols_per_packet());
    let r0 = kernel.values[0];
    b_x.iter()
        .enumerate()
        .map(|(l, b)| b / r0 * unit_phasor::<T>(-(l as i64), k) * doppler)
        .collect()
}

/// Full frequency-domain channel of one symbol.
#[derive(Debug, Clone)]
pub struct ChannelRealization<T: Real> {
    /// `h(ℓ, m)` for `ℓ ∈ [0, L)`, `m ∈ [0, K + cp)`.
    pub taps: Vec<Vec<Cx<T>>>,
    /// `K × K`, rows indexed by received subcarrier, columns by transmitted.
    pub h: CMatrix<T>,
    /// Diagonal of `h`.
    pub h_free: Vec<Cx<T>>,
    /// `h` with its diagonal zeroed.
    pub h_ici: CMatrix<T>,
    pub coeffs: DelayDopplerCoeffs<T>,
    pub symbol: SymbolChannel<T>,
}

impl<T: Real> ChannelRealization<T> {
    pub fn h_free_matrix(&self) -> CMatrix<T> {
        let k = self.h_free.len();
        CMatrix::from_fn(k, k, |r, c| if r == c { self.h_free[r] } else { Cx::new(T::zero(), T::zero()) })
    }
}

/// Synthesizes `H` from the time-varying taps by the tap/sample double sum
/// `H(k,d) = (1/K) Σ_m Σ_ℓ h(ℓ, m) e^{−j2πℓ(d−1)/K} e^{j2π(d−k)m/K}`
/// (the sum over `m` is evaluated per tap with an FFT), then splits it into
/// its diagonal and ICI parts.
pub fn synth_channel_matrices<T: Real>(
    coeffs: &DelayDopplerCoeffs<T>,
    f_d: f64,
    n: usize,
    cfg: &ChannelModelConfig,
) -> Result<ChannelRealization<T>> {
    let symbol = symbol_channel(coeffs, f_d, n, cfg)?;
    let k_count = cfg.subcarriers;
    let window = cfg.subcarriers + cfg.cp_len;
    let taps: Vec<Vec<Cx<T>>> = (0..cfg.paths())
        .map(|l| (0..window).map(|m| symbol.tap(l, m, cfg)).collect())
        .collect();

    let mut planner = FftPlanner::<T>::new();
    let ifft = planner.plan_fft_inverse(k_count);
    let inv_k = T::one() / T::from_usize_lossy(k_count);
    let mut h = CMatrix::zeros(k_count, k_count);
    for (l, tap) in taps.iter().enumerate() {
        if tap.iter().all(|v| v.norm_sqr() == T::zero()) {
            continue;
        }
        // c[s] = (1/K) Σ_{m'} h(ℓ, cp + m') e^{j2π s m'/K}
        let mut c: Vec<Cx<T>> = tap[cfg.cp_len..].to_vec();
        ifft.process(&mut c);
        c.iter_mut().for_each(|v| *v = *v * inv_k);
        for d in 1..=k_count {
            let delay: Cx<T> = unit_phasor(-((l * (d - 1)) as i64), k_count);
            for k in 1..=k_count {
                let s = (d + k_count - k) % k_count;
                let v = h.get(k - 1, d - 1) + delay * c[s];
                h.set(k - 1, d - 1, v);
            }
        }
    }
    let h_free: Vec<Cx<T>> = (0..k_count).map(|i| h.get(i, i)).collect();
    let mut h_ici = h.clone();
    for i in 0..k_count {
        h_ici.set(i, i, Cx::new(T::zero(), T::zero()));
    }
    Ok(ChannelRealization { taps, h, h_free, h_ici, coeffs: coeffs.clone(), symbol })
}
