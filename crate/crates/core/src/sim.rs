//! End-to-end OFDM link simulation and Monte Carlo aggregation.
//!
//! The DFT is unitary throughout: `x[m] = K^{-1/2} Σ_k X(k) e^{j2π(k−1)m/K}`.
//! SNR is the average per-subcarrier symbol energy (one) over the noise
//! variance.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::channel_model::{sample_sparse_channel, symbol_channel, ChannelModelConfig, DopplerKernel, SymbolChannel};
use crate::coherence::{CoherenceEvaluator, CoherenceParams};
use crate::error::{validation, Error, Result};
use crate::estimators::{
    bp_estimate, default_bp_epsilon, lmmse_estimate, ls_estimate, omp_estimate, FrequencyCorrelation, OmpStop,
    PilotObservation,
};
use crate::geometry::{doppler_at_position, doppler_index, GeometryConfig, PositionState};
use crate::pilot_design::{equidistant_pattern, select_pilot, Codebook, PilotPattern};
use crate::qam;
use crate::random::{complex_normal, stream_id, stream_rng};
use crate::scalar::{Cx, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// True channel (reference, zero MSE).
    Perfect,
    Ls,
    Lmmse,
    Omp,
    Bp,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Perfect => "perfect",
            Self::Ls => "ls",
            Self::Lmmse => "lmmse",
            Self::Omp => "omp",
            Self::Bp => "bp",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "perfect" => Self::Perfect,
            "ls" => Self::Ls,
            "lmmse" => Self::Lmmse,
            "omp" => Self::Omp,
            "bp" => Self::Bp,
            _ => return validation(format!("unknown estimator '{s}'")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PilotSource {
    /// Codebook designed by the joint placement/power search.
    #[serde(rename = "algorithm1")]
    Algorithm1,
    /// Codebook of best-of-N random patterns.
    #[serde(rename = "random-search")]
    RandomSearch,
    /// Comb placement with fresh random 16-QAM pilots every trial.
    #[serde(rename = "equidistant")]
    Equidistant,
}

impl PilotSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::Algorithm1 => "algorithm1",
            Self::RandomSearch => "random-search",
            Self::Equidistant => "equidistant",
        }
    }
}

impl fmt::Display for PilotSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PilotSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "algorithm1" => Self::Algorithm1,
            "random-search" => Self::RandomSearch,
            "equidistant" => Self::Equidistant,
            _ => return validation(format!("unknown pilot source '{s}'")),
        })
    }
}

/// Everything a Monte Carlo sweep needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub channel: ChannelModelConfig,
    pub geometry: GeometryConfig<f64>,
    pub speed_mps: f64,
    pub snr_db: Vec<f64>,
    pub positions_m: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    pub pilot_sources: Vec<PilotSource>,
    /// ICI-mitigation iteration counts `q` to sweep.
    pub ici_iterations: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Use the transmitted data (instead of decisions) when cancelling ICI.
    pub genie_feedback: bool,
    pub omp_sparsity: usize,
    /// Multiplier on the default basis-pursuit constraint radius.
    pub bp_epsilon_scale: f64,
    pub coherence: CoherenceParams<f64>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return validation("trials must be at least 1");
        }
        if self.snr_db.is_empty()
            || self.positions_m.is_empty()
            || self.estimators.is_empty()
            || self.pilot_sources.is_empty()
            || self.ici_iterations.is_empty()
        {
            return validation("sweep grid is empty");
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return validation("SNR values must be finite");
        }
        if !(self.bp_epsilon_scale > 0.0) {
            return validation("bp_epsilon_scale must be positive");
        }
        for &alpha in &self.positions_m {
            PositionState::new(alpha, self.speed_mps, &self.geometry)?;
        }
        let f_max = self.geometry.max_doppler(self.speed_mps);
        if f_max > self.channel.f_dmax_hz * (1.0 + 1e-12) {
            return validation(format!(
                "speed gives f_dmax = {f_max} Hz above the channel model's {} Hz",
                self.channel.f_dmax_hz
            ));
        }
        Ok(())
    }

    pub fn doppler_at(&self, alpha: f64) -> f64 {
        doppler_at_position(&PositionState { alpha, v: self.speed_mps }, &self.geometry)
    }
}

/// Unitary forward/inverse DFT of one size, shareable across threads.
#[derive(Clone)]
pub struct Fourier<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> Fourier<T> {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            scale: T::one() / T::from_usize_lossy(len).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, buf: &mut [Cx<T>]) {
        self.forward.process(buf);
        buf.iter_mut().for_each(|v| *v = *v * self.scale);
    }

    pub fn inverse(&self, buf: &mut [Cx<T>]) {
        self.inverse.process(buf);
        buf.iter_mut().for_each(|v| *v = *v * self.scale);
    }
}

impl<T: Real> fmt::Debug for Fourier<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fourier({})", self.len())
    }
}

/// One-based data subcarriers (all non-pilot subcarriers, ascending).
pub fn data_subcarriers(placement: &[usize], subcarriers: usize) -> Vec<usize> {
    let mut is_pilot = vec![false; subcarriers + 1];
    placement.iter().for_each(|&k| is_pilot[k] = true);
    (1..=subcarriers).filter(|&k| !is_pilot[k]).collect()
}

/// Maps data bits and pilots onto the subcarriers, then IDFT and cyclic
/// prefix. Returns the frequency-domain symbol and `K + cp` time samples.
pub fn transmit_frame<T: Real>(
    data_bits: &[u8],
    pattern: &PilotPattern<T>,
    cfg: &ChannelModelConfig,
    fourier: &Fourier<T>,
) -> Result<(Vec<Cx<T>>, Vec<Cx<T>>)> {
    let k = cfg.subcarriers;
    let data = data_subcarriers(&pattern.placement, k);
    if data_bits.len() != data.len() * qam::BITS_PER_SYMBOL {
        return validation(format!(
            "{} data bits for {} data subcarriers at {} bits each",
            data_bits.len(),
            data.len(),
            qam::BITS_PER_SYMBOL
        ));
    }
    let mut freq = vec![Cx::new(T::zero(), T::zero()); k];
    for (&sc, s) in pattern.placement.iter().zip(&pattern.symbols) {
        freq[sc - 1] = *s;
    }
    for (&sc, bits) in data.iter().zip(data_bits.chunks_exact(qam::BITS_PER_SYMBOL)) {
        freq[sc - 1] = qam::modulate(bits);
    }
    let mut body = freq.clone();
    fourier.inverse(&mut body);
    let mut time = Vec::with_capacity(k + cfg.cp_len);
    time.extend_from_slice(&body[k - cfg.cp_len..]);
    time.extend_from_slice(&body);
    Ok((freq, time))
}

/// Time-varying tap convolution, AWGN, prefix removal and DFT.
pub fn apply_channel_and_receive<T: Real, R: Rng + ?Sized>(
    time: &[Cx<T>],
    channel: &SymbolChannel<T>,
    cfg: &ChannelModelConfig,
    noise_var: T,
    rng: &mut R,
    fourier: &Fourier<T>,
) -> Result<Vec<Cx<T>>> {
    let (k, cp) = (cfg.subcarriers, cfg.cp_len);
    if time.len() != k + cp {
        return validation(format!("expected {} time samples, got {}", k + cp, time.len()));
    }
    let active: Vec<usize> = (0..channel.gains.len()).filter(|&l| channel.gains[l].norm_sqr() > T::zero()).collect();
    if active.iter().any(|&l| l > cp) {
        return validation("channel delay span exceeds the cyclic prefix");
    }
    let sigma = noise_var.sqrt();
    let mut rx = Vec::with_capacity(k);
    for m in cp..k + cp {
        let mut v = Cx::new(T::zero(), T::zero());
        for &l in &active {
            v += channel.tap(l, m, cfg) * time[m - l];
        }
        // drawn even when noiseless so streams stay aligned across SNRs
        let w: Cx<T> = complex_normal(rng, 1.0);
        rx.push(v + w * sigma);
    }
    fourier.forward(&mut rx);
    Ok(rx)
}

/// Spreads a per-subcarrier vector through the Doppler kernel:
/// `w(k) = Σ_d v(d)·R(d − k)/R(0)` (a circular correlation, by FFT).
#[derive(Debug, Clone)]
pub struct KernelSpreader<T: Real> {
    spectrum: Vec<Cx<T>>,
}

impl<T: Real> KernelSpreader<T> {
    pub fn new(kernel: &DopplerKernel<T>, fourier: &Fourier<T>) -> Self {
        let k = kernel.values.len();
        let r0 = kernel.values[0];
        let mut spectrum: Vec<Cx<T>> = kernel.values.iter().map(|v| v.conj()).collect();
        fourier.forward(&mut spectrum);
        // unitary transforms: correlation picks up a factor √K
        let gain = T::from_usize_lossy(k).sqrt();
        spectrum.iter_mut().for_each(|v| *v = v.conj() * gain / r0);
        Self { spectrum }
    }

    pub fn apply(&self, v: &[Cx<T>], fourier: &Fourier<T>) -> Vec<Cx<T>> {
        let mut buf = v.to_vec();
        fourier.forward(&mut buf);
        buf.iter_mut().zip(&self.spectrum).for_each(|(b, s)| *b *= s);
        fourier.inverse(&mut buf);
        buf
    }
}

/// Interference at the pilot rows caused by `z` through the channel implied by
/// the diagonal estimate: `Σ_{d≠p} H̃(p, d) z(d)`.
pub fn pilot_ici<T: Real>(
    h_diag: &[Cx<T>],
    z: &[Cx<T>],
    placement: &[usize],
    spreader: &KernelSpreader<T>,
    fourier: &Fourier<T>,
) -> Vec<Cx<T>> {
    let v: Vec<Cx<T>> = h_diag.iter().zip(z).map(|(h, x)| h * x).collect();
    let spread = spreader.apply(&v, fourier);
    placement.iter().map(|&p| spread[p - 1] - v[p - 1]).collect()
}

/// Source of the data symbols used to rebuild interference.
#[derive(Debug, Clone, Copy)]
pub enum Feedback<'a, T: Real> {
    /// The transmitted symbols (zero at pilots).
    Genie(&'a [Cx<T>]),
    /// Hard 16-QAM decisions on the listed data subcarriers.
    Decisions(&'a [usize]),
}

/// Iterative ICI cancellation at the pilots. Starting from `h` (estimated on
/// the raw pilots), each round subtracts the interference rebuilt from the
/// current estimate and data from the raw pilot observations and
/// re-estimates. Returns the final diagonal estimate and cleaned pilots.
#[allow(clippy::too_many_arguments)]
pub fn ici_mitigate<T: Real, F>(
    y: &[Cx<T>],
    placement: &[usize],
    h_initial: Vec<Cx<T>>,
    feedback: Feedback<'_, T>,
    q: usize,
    spreader: &KernelSpreader<T>,
    fourier: &Fourier<T>,
    mut estimate: F,
) -> Result<(Vec<Cx<T>>, Vec<Cx<T>>)>
where
    F: FnMut(&[Cx<T>], usize) -> Result<Vec<Cx<T>>>,
{
    let raw: Vec<Cx<T>> = placement.iter().map(|&p| y[p - 1]).collect();
    let mut h = h_initial;
    let mut y_p = raw.clone();
    for iter in 1..=q {
        let z: Vec<Cx<T>> = match feedback {
            Feedback::Genie(z) => z.to_vec(),
            Feedback::Decisions(data) => {
                let mut z = vec![Cx::new(T::zero(), T::zero()); y.len()];
                let mut bits = [0u8; 4];
                for &d in data {
                    if h[d - 1].norm_sqr() > T::zero() {
                        qam::demodulate(y[d - 1] / h[d - 1], &mut bits);
                        z[d - 1] = qam::modulate(&bits);
                    }
                }
                z
            }
        };
        let ici = pilot_ici(&h, &z, placement, spreader, fourier);
        y_p = raw.iter().zip(&ici).map(|(r, i)| r - i).collect();
        h = estimate(&y_p, iter)?;
    }
    Ok((h, y_p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMetrics {
    /// `Σ_n ‖Ĥ_n − H_n‖² / Σ_n ‖H_n‖²` over the packet's diagonals.
    pub mse: f64,
    pub ber: f64,
    pub coherence: f64,
    /// ICI power relative to the ICI-free received power.
    pub ici_power: f64,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub snr_db: f64,
    pub position: usize,
    pub estimator: EstimatorKind,
    pub source: PilotSource,
    pub q: usize,
}

/// Pilot codebooks available to a sweep.
#[derive(Debug, Clone, Default)]
pub struct PilotBank<T: Real> {
    pub algorithm1: Option<Codebook<T>>,
    pub random_search: Option<Codebook<T>>,
}

/// Shared read-only state of a sweep.
#[derive(Debug)]
pub struct SimContext<'a, T: Real> {
    pub cfg: &'a SimConfig,
    pub bank: &'a PilotBank<T>,
    fourier: Fourier<T>,
    evaluator: CoherenceEvaluator<T>,
}

impl<'a, T: Real> SimContext<'a, T> {
    pub fn new(cfg: &'a SimConfig, bank: &'a PilotBank<T>) -> Result<Self> {
        cfg.validate()?;
        for source in &cfg.pilot_sources {
            let cb = match source {
                PilotSource::Algorithm1 => &bank.algorithm1,
                PilotSource::RandomSearch => &bank.random_search,
                PilotSource::Equidistant => continue,
            };
            let Some(cb) = cb else {
                return validation(format!("pilot source '{source}' needs a codebook"));
            };
            if cb.subcarriers != cfg.channel.subcarriers || cb.doppler_half != cfg.channel.doppler_half() {
                return validation(format!(
                    "codebook for '{source}' has K={}, M={}; configuration has K={}, M={}",
                    cb.subcarriers,
                    cb.doppler_half,
                    cfg.channel.subcarriers,
                    cfg.channel.doppler_half()
                ));
            }
        }
        Ok(Self {
            cfg,
            bank,
            fourier: Fourier::new(cfg.channel.subcarriers),
            evaluator: CoherenceEvaluator::for_config(&cfg.channel),
        })
    }

    fn pattern(&self, source: PilotSource, f_d: f64, pilots: usize, trial: usize) -> Result<PilotPattern<T>> {
        let t_d = T::lit(self.cfg.channel.t_d_s);
        let pick = |cb: &Option<Codebook<T>>| -> Result<PilotPattern<T>> {
            let cb = cb.as_ref().ok_or_else(|| Error::Validation(format!("pilot source '{source}' needs a codebook")))?;
            Ok(select_pilot(cb, T::lit(f_d), t_d)?.pattern.clone())
        };
        match source {
            PilotSource::Algorithm1 => pick(&self.bank.algorithm1),
            PilotSource::RandomSearch => pick(&self.bank.random_search),
            PilotSource::Equidistant => {
                let mut rng = stream_rng(self.cfg.seed, stream_id(&[3, trial as u64]));
                equidistant_pattern(self.cfg.channel.subcarriers, pilots, &mut rng)
            }
        }
    }

    fn pilots(&self) -> usize {
        [&self.bank.algorithm1, &self.bank.random_search]
            .into_iter()
            .flatten()
            .map(|cb| cb.pilots)
            .next()
            .unwrap_or(self.cfg.channel.subcarriers / 8)
    }

    /// Simulates one packet of `N_t` symbols for a grid cell. Channel, data
    /// and noise depend only on `(seed, position, trial)`, so cells differing
    /// in SNR, estimator, pilots or `q` see common random numbers.
    pub fn run_trial(&self, cell: &Cell, trial: usize) -> Result<TrialMetrics> {
        let cfg = self.cfg;
        let ch = &cfg.channel;
        let alpha = cfg.positions_m[cell.position];
        let f_d = cfg.doppler_at(alpha);
        let x = doppler_index(f_d, ch.t_d_s, ch.f_dmax_hz)?;
        let pattern = self.pattern(cell.source, f_d, self.pilots(), trial)?;
        pattern.validate(ch.subcarriers)?;
        let coherence = self.evaluator.evaluate(&pattern.placement, &pattern.energies(), &self.typed_coherence());

        let mut ch_rng = stream_rng(cfg.seed, stream_id(&[1, cell.position as u64, trial as u64]));
        let mut tx_rng = stream_rng(cfg.seed, stream_id(&[2, cell.position as u64, trial as u64]));
        let coeffs = sample_sparse_channel::<T, _>(&mut ch_rng, ch, x)?;
        let noise_var = T::lit(10f64.powf(-cell.snr_db / 10.0));
        let data = data_subcarriers(&pattern.placement, ch.subcarriers);

        let (mut err, mut energy, mut ici_num, mut ici_den) = (0.0, 0.0, 0.0, 0.0);
        let (mut bit_errors, mut bit_count) = (0usize, 0usize);
        for n in 0..ch.symbols_per_packet() {
            let sym = symbol_channel(&coeffs, f_d, n, ch)?;
            let bits: Vec<u8> = (0..data.len() * qam::BITS_PER_SYMBOL).map(|_| tx_rng.random_range(0..2u8)).collect();
            let (freq, time) = transmit_frame(&bits, &pattern, ch, &self.fourier)?;
            let y = apply_channel_and_receive(&time, &sym, ch, noise_var, &mut tx_rng, &self.fourier)?;
            let spreader = KernelSpreader::new(&sym.kernel, &self.fourier);

            let signal: Vec<Cx<T>> = sym.diagonal.iter().zip(&freq).map(|(h, s)| h * s).collect();
            let spread = spreader.apply(&signal, &self.fourier);
            for (s, v) in spread.iter().zip(&signal) {
                ici_num += (s - v).norm_sqr().to_f64_lossy();
                ici_den += v.norm_sqr().to_f64_lossy();
            }

            let h_hat = self.estimate_symbol(cell, &pattern, &sym, &y, &freq, &data, x, n, noise_var, &spreader)?;
            for (e, t) in h_hat.iter().zip(&sym.diagonal) {
                err += (e - t).norm_sqr().to_f64_lossy();
                energy += t.norm_sqr().to_f64_lossy();
            }
            let mut decided = [0u8; 4];
            for (i, &d) in data.iter().enumerate() {
                let eq = if h_hat[d - 1].norm_sqr() > T::zero() { y[d - 1] / h_hat[d - 1] } else { Cx::new(T::zero(), T::zero()) };
                qam::demodulate(eq, &mut decided);
                let sent = &bits[i * 4..i * 4 + 4];
                bit_errors += decided.iter().zip(sent).filter(|(a, b)| a != b).count();
                bit_count += 4;
            }
        }
        Ok(TrialMetrics {
            mse: if energy > 0.0 { err / energy } else { 0.0 },
            ber: bit_errors as f64 / bit_count.max(1) as f64,
            coherence: coherence.to_f64_lossy(),
            ici_power: if ici_den > 0.0 { ici_num / ici_den } else { 0.0 },
        })
    }

    fn typed_coherence(&self) -> CoherenceParams<T> {
        CoherenceParams { delta: T::lit(self.cfg.coherence.delta), normalize_columns: self.cfg.coherence.normalize_columns }
    }

    #[allow(clippy::too_many_arguments)]
    fn estimate_symbol(
        &self,
        cell: &Cell,
        pattern: &PilotPattern<T>,
        sym: &SymbolChannel<T>,
        y: &[Cx<T>],
        freq: &[Cx<T>],
        data: &[usize],
        x: i64,
        n: usize,
        noise_var: T,
        spreader: &KernelSpreader<T>,
    ) -> Result<Vec<Cx<T>>> {
        let ch = &self.cfg.channel;
        if cell.estimator == EstimatorKind::Perfect {
            return Ok(sym.diagonal.clone());
        }
        // interference leaking from every other subcarrier, as extra noise:
        // Σ_{s≠0} |R(s)|² = 1 − |R(0)|² for unit channel and symbol power
        let r0 = sym.kernel.values[0].norm_sqr();
        let leak = (T::one() - r0).max(T::zero());
        let pilots = pattern.len();
        let residual_leak = leak * T::from_usize_lossy(pilots) / T::from_usize_lossy(ch.subcarriers);
        let stats = FrequencyCorrelation::uniform(ch.paths(), r0);
        let base = PilotObservation::new(vec![Cx::new(T::zero(), T::zero()); pilots], pattern, x, n, noise_var, ch)?;

        let estimate = |y_p: &[Cx<T>], iter: usize| -> Result<Vec<Cx<T>>> {
            let interference = if iter == 0 { leak } else { residual_leak };
            let eff_var = noise_var + interference;
            match cell.estimator {
                EstimatorKind::Perfect => Ok(sym.diagonal.clone()),
                EstimatorKind::Ls => ls_estimate(y_p, pattern, ch.subcarriers),
                EstimatorKind::Lmmse => lmmse_estimate(y_p, pattern, &stats, eff_var, ch.subcarriers),
                EstimatorKind::Omp => {
                    Ok(omp_estimate(&base.with_y(y_p.to_vec()), OmpStop::Sparsity(self.cfg.omp_sparsity), ch)?.h_free_hat)
                }
                EstimatorKind::Bp => {
                    let obs = base.with_y(y_p.to_vec());
                    let eps = default_bp_epsilon(pilots, eff_var) * T::lit(self.cfg.bp_epsilon_scale);
                    match bp_estimate(&obs, eps, ch) {
                        Ok(r) => Ok(r.h_free_hat),
                        // constraint unreachable: fall back to the least-squares iterate
                        Err(Error::NonConvergence { best, .. }) => {
                            let b: Vec<Cx<T>> = best.iter().map(|&(re, im)| Cx::new(T::lit(re), T::lit(im))).collect();
                            Ok(crate::estimators::coeffs_to_channel(&b, x, n, ch))
                        }
                        Err(e) => Err(e),
                    }
                }
            }
        };
        let raw: Vec<Cx<T>> = pattern.placement.iter().map(|&p| y[p - 1]).collect();
        let h0 = estimate(&raw, 0)?;
        if cell.q == 0 {
            return Ok(h0);
        }
        let mut genie = freq.to_vec();
        pattern.placement.iter().for_each(|&p| genie[p - 1] = Cx::new(T::zero(), T::zero()));
        let feedback = if self.cfg.genie_feedback { Feedback::Genie(&genie) } else { Feedback::Decisions(data) };
        let (h, _) = ici_mitigate(y, &pattern.placement, h0, feedback, cell.q, spreader, &self.fourier, estimate)?;
        Ok(h)
    }
}

/// Mean and sample standard deviation per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub snr_db: f64,
    pub alpha_m: f64,
    pub f_d_hz: f64,
    pub estimator: EstimatorKind,
    pub pilot_source: PilotSource,
    pub q: usize,
    pub trials: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub ber_mean: f64,
    pub ber_std: f64,
    pub coherence: f64,
    /// Per-trial MSE values, in trial order.
    pub mse_samples: Vec<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Grid cells in output order: SNR, position, estimator, pilot source, `q`.
pub fn grid(cfg: &SimConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &snr_db in &cfg.snr_db {
        for position in 0..cfg.positions_m.len() {
            for &estimator in &cfg.estimators {
                for &source in &cfg.pilot_sources {
                    for &q in &cfg.ici_iterations {
                        cells.push(Cell { snr_db, position, estimator, source, q });
                    }
                }
            }
        }
    }
    cells
}

/// Runs every trial of every grid cell (in parallel) and summarizes each
/// cell. The result depends only on the configuration and seed.
pub fn run_monte_carlo<T: Real>(cfg: &SimConfig, bank: &PilotBank<T>) -> Result<Vec<CellSummary>> {
    let ctx = SimContext::new(cfg, bank)?;
    let cells = grid(cfg);
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let results: Vec<Result<TrialMetrics>> = jobs.par_iter().map(|&(c, t)| ctx.run_trial(&cells[c], t)).collect();
    let mut metrics = Vec::with_capacity(results.len());
    for r in results {
        metrics.push(r?);
    }
    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let chunk = &metrics[c * cfg.trials..(c + 1) * cfg.trials];
            let mse: Vec<f64> = chunk.iter().map(|m| m.mse).collect();
            let ber: Vec<f64> = chunk.iter().map(|m| m.ber).collect();
            let (mse_mean, mse_std) = mean_std(&mse);
            let (ber_mean, ber_std) = mean_std(&ber);
            let alpha = cfg.positions_m[cell.position];
            CellSummary {
                snr_db: cell.snr_db,
                alpha_m: alpha,
                f_d_hz: cfg.doppler_at(alpha),
                estimator: cell.estimator,
                pilot_source: cell.source,
                q: cell.q,
                trials: cfg.trials,
                mse_mean,
                mse_std,
                ber_mean,
                ber_std,
                coherence: chunk.iter().map(|m| m.coherence).sum::<f64>() / cfg.trials as f64,
                mse_samples: mse,
            }
        })
        .collect())
}

pub const CSV_COLUMNS: &str = "snr_db,alpha_m,f_d_hz,estimator,pilot_source,q,trials,mse_mean,mse_std,ber_mean,ber_std,coherence";

/// Writes the summary table with `#` comment lines carrying provenance.
pub fn write_csv<W: Write>(out: &mut W, rows: &[CellSummary], provenance: &[(&str, String)]) -> Result<()> {
    for (k, v) in provenance {
        writeln!(out, "# {k}: {v}")?;
    }
    writeln!(out, "{CSV_COLUMNS}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.snr_db,
            r.alpha_m,
            r.f_d_hz,
            r.estimator,
            r.pilot_source,
            r.q,
            r.trials,
            r.mse_mean,
            r.mse_std,
            r.ber_mean,
            r.ber_std,
            r.coherence
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::{synth_channel_matrices, DelayDopplerCoeffs};
    use crate::pilot_design::random_pattern;

    fn small() -> ChannelModelConfig {
        // K = 32, L = 4, cp = 4
        ChannelModelConfig::new(1e6, 3e-6, 0.5e-3, 3000.0, 32, 4, 2).unwrap()
    }

    fn pattern(cfg: &ChannelModelConfig, seed: u64) -> PilotPattern<f64> {
        random_pattern(cfg.subcarriers, 8, &[1.0], &mut stream_rng(seed, 0)).unwrap()
    }

    fn bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = stream_rng(seed, 1);
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    }

    fn single_tap(cfg: &ChannelModelConfig, l: usize) -> DelayDopplerCoeffs<f64> {
        let mut g = vec![Cx::new(0.0, 0.0); cfg.paths()];
        g[l] = Cx::new(1.0, 0.0);
        DelayDopplerCoeffs::from_dominant(cfg.paths(), cfg.doppler_half(), 0, &g)
    }

    #[test]
    fn frame_layout_and_parseval() {
        let cfg = small();
        let f = Fourier::<f64>::new(32);
        let pat = pattern(&cfg, 1);
        let (freq, time) = transmit_frame(&bits(24 * 4, 1), &pat, &cfg, &f).unwrap();
        assert_eq!(time.len(), 36);
        for (&k, s) in pat.placement.iter().zip(&pat.symbols) {
            assert_eq!(freq[k - 1], *s);
        }
        let ef: f64 = freq.iter().map(|v| v.norm_sqr()).sum();
        let et: f64 = time[4..].iter().map(|v| v.norm_sqr()).sum();
        assert!((ef - et).abs() < 1e-10);
        assert_eq!(&time[..4], &time[32..]);
        assert!(transmit_frame(&bits(7, 1), &pat, &cfg, &f).is_err());
    }

    #[test]
    fn delayed_tap_is_a_phase_ramp() {
        let cfg = small();
        let f = Fourier::<f64>::new(32);
        let pat = pattern(&cfg, 2);
        for l0 in 0..cfg.paths() {
            let sym = symbol_channel(&single_tap(&cfg, l0), 0.0, 0, &cfg).unwrap();
            let (freq, time) = transmit_frame(&bits(96, 2), &pat, &cfg, &f).unwrap();
            let y = apply_channel_and_receive(&time, &sym, &cfg, 0.0, &mut stream_rng(0, 0), &f).unwrap();
            for k in 1..=32 {
                let ramp = crate::scalar::unit_phasor::<f64>(-((l0 * (k - 1)) as i64), 32);
                assert!((y[k - 1] - ramp * freq[k - 1]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn receiver_matches_matrix_product() {
        let cfg = small();
        let f = Fourier::<f64>::new(32);
        for seed in 0..50u64 {
            let pat = pattern(&cfg, seed);
            let x = (seed % 5) as i64 - 2;
            let coeffs = sample_sparse_channel::<f64, _>(&mut stream_rng(seed, 3), &cfg, x).unwrap();
            let f_d = 700.0 * x as f64 - 1.0;
            let n = (seed % 3) as usize;
            let real = synth_channel_matrices(&coeffs, f_d, n, &cfg).unwrap();
            let (freq, time) = transmit_frame(&bits(96, seed), &pat, &cfg, &f).unwrap();
            let y = apply_channel_and_receive(&time, &real.symbol, &cfg, 0.0, &mut stream_rng(0, 0), &f).unwrap();
            let hx = real.h.mul_vec(&freq);
            for (a, b) in y.iter().zip(&hx) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn spreader_rebuilds_full_matrix_product() {
        let cfg = small();
        let f = Fourier::<f64>::new(32);
        let coeffs = sample_sparse_channel::<f64, _>(&mut stream_rng(5, 3), &cfg, 2).unwrap();
        let real = synth_channel_matrices(&coeffs, 2500.0, 1, &cfg).unwrap();
        let spreader = KernelSpreader::new(&real.symbol.kernel, &f);
        let v: Vec<Cx<f64>> = (0..32).map(|i| Cx::new(i as f64, 1.0)).collect();
        let dv: Vec<Cx<f64>> = real.h_free.iter().zip(&v).map(|(h, x)| h * x).collect();
        let got = spreader.apply(&dv, &f);
        let want = real.h.mul_vec(&v);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn genie_cancellation_leaves_pilot_terms() {
        let cfg = small();
        let f = Fourier::<f64>::new(32);
        let pat = pattern(&cfg, 6);
        let coeffs = sample_sparse_channel::<f64, _>(&mut stream_rng(6, 3), &cfg, 2).unwrap();
        let real = synth_channel_matrices(&coeffs, 2900.0, 2, &cfg).unwrap();
        let (freq, time) = transmit_frame(&bits(96, 6), &pat, &cfg, &f).unwrap();
        let mut rng = stream_rng(6, 4);
        let y = apply_channel_and_receive(&time, &real.symbol, &cfg, 0.01, &mut rng, &f).unwrap();
        let noise: Vec<Cx<f64>> = y.iter().zip(real.h.mul_vec(&freq)).map(|(a, b)| a - b).collect();
        let mut z = freq.clone();
        pat.placement.iter().for_each(|&p| z[p - 1] = Cx::new(0.0, 0.0));
        let spreader = KernelSpreader::new(&real.symbol.kernel, &f);

        let y0: Vec<Cx<f64>> = pat.placement.iter().map(|&p| y[p - 1]).collect();
        let (_, same) = ici_mitigate(&y, &pat.placement, real.h_free.clone(), Feedback::Genie(&z), 0, &spreader, &f, |_, _| {
            unreachable!()
        })
        .unwrap();
        assert_eq!(same, y0);

        let (_, cleaned) = ici_mitigate(&y, &pat.placement, real.h_free.clone(), Feedback::Genie(&z), 1, &spreader, &f, |_, _| {
            Ok(real.h_free.clone())
        })
        .unwrap();
        for (i, &p) in pat.placement.iter().enumerate() {
            let mut want = real.h_free[p - 1] * freq[p - 1] + noise[p - 1];
            for &d in &pat.placement {
                if d != p {
                    want += real.h.get(p - 1, d - 1) * freq[d - 1];
                }
            }
            assert!((cleaned[i] - want).norm() < 1e-9);
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let row = CellSummary {
            snr_db: 15.0,
            alpha_m: 0.0,
            f_d_hz: 1087.0,
            estimator: EstimatorKind::Bp,
            pilot_source: PilotSource::RandomSearch,
            q: 2,
            trials: 3,
            mse_mean: 0.5,
            mse_std: 0.1,
            ber_mean: 0.01,
            ber_std: 0.0,
            coherence: 0.2,
            mse_samples: vec![],
        };
        let mut out = Vec::new();
        write_csv(&mut out, &[row], &[("seed", "7".into())]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed: 7");
        assert_eq!(lines[1], CSV_COLUMNS);
        assert_eq!(lines[2], "15,0,1087,bp,random-search,2,3,0.5,0.1,0.01,0,0.2");
    }

    #[test]
    fn names_round_trip() {
        for e in [EstimatorKind::Perfect, EstimatorKind::Ls, EstimatorKind::Lmmse, EstimatorKind::Omp, EstimatorKind::Bp] {
            assert_eq!(e.name().parse::<EstimatorKind>().unwrap(), e);
        }
        for s in [PilotSource::Algorithm1, PilotSource::RandomSearch, PilotSource::Equidistant] {
            assert_eq!(s.name().parse::<PilotSource>().unwrap(), s);
        }
        assert!("qr".parse::<EstimatorKind>().is_err());
    }
}
