//! Pilot patterns, coherence-minimizing design by stochastic search over
//! placements and power levels, baseline patterns, and the Doppler-indexed
//! pilot codebook.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_model::{validate_placement, ChannelModelConfig};
use crate::coherence::{CoherenceEvaluator, CoherenceParams};
use crate::error::{domain, validation, Result};
use crate::geometry::{codebook_slot, doppler_bin_range, doppler_index, slot_index};
use crate::qam;
use crate::random::stream_rng;
use crate::scalar::{Cx, Real};

pub const CODEBOOK_VERSION: u32 = 1;

/// Pilot placement with per-pilot power levels and symbols.
///
/// `|symbols[p]|² = power_levels[level_assignment[p]]` and the assigned
/// energies sum to `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern<T: Real> {
    /// One-based subcarrier indices, strictly increasing.
    pub placement: Vec<usize>,
    pub symbols: Vec<Cx<T>>,
    pub power_levels: Vec<T>,
    pub level_assignment: Vec<usize>,
}

impl<T: Real> PilotPattern<T> {
    /// Builds a pattern from raw (unnormalized) levels. Levels are rescaled so
    /// the total pilot energy equals `P`, and each symbol is a random 16-QAM
    /// point with its magnitude set to the assigned level.
    pub fn from_levels<R: Rng + ?Sized>(
        placement: Vec<usize>,
        raw_levels: &[T],
        level_assignment: Vec<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let power_levels = normalize_levels(raw_levels, &level_assignment)?;
        let symbols = level_assignment
            .iter()
            .map(|&t| {
                let s: Cx<T> = qam::random_symbol(rng);
                s / s.norm() * power_levels[t].sqrt()
            })
            .collect();
        Ok(Self { placement, symbols, power_levels, level_assignment })
    }

    pub fn len(&self) -> usize {
        self.placement.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placement.is_empty()
    }

    /// Per-pilot energy `E_{t(p)}`.
    pub fn energies(&self) -> Vec<T> {
        self.level_assignment.iter().map(|&t| self.power_levels[t]).collect()
    }

    pub fn total_energy(&self) -> T {
        self.energies().into_iter().fold(T::zero(), |a, e| a + e)
    }

    pub fn validate(&self, subcarriers: usize) -> Result<()> {
        validate_placement(&self.placement, subcarriers)?;
        let p = self.placement.len();
        if self.symbols.len() != p || self.level_assignment.len() != p {
            return validation("pilot symbols and level assignment must match the placement length");
        }
        if let Some(&t) = self.level_assignment.iter().find(|&&t| t >= self.power_levels.len()) {
            return validation(format!("power level index {t} out of range"));
        }
        if self.power_levels.iter().any(|e| !(*e > T::zero())) {
            return validation("power levels must be positive");
        }
        let total = self.total_energy().to_f64_lossy();
        if (total - p as f64).abs() > 1e-6 * p as f64 {
            return validation(format!("total pilot energy {total} differs from {p}"));
        }
        for (s, e) in self.symbols.iter().zip(self.energies()) {
            let err = (s.norm_sqr() - e).abs().to_f64_lossy();
            if err > 1e-4 * e.to_f64_lossy() {
                return validation("pilot symbol energy does not match its power level");
            }
        }
        Ok(())
    }
}

fn normalize_levels<T: Real>(raw: &[T], assignment: &[usize]) -> Result<Vec<T>> {
    if raw.is_empty() || raw.iter().any(|e| !(*e > T::zero())) {
        return validation("power levels must be non-empty and positive");
    }
    if assignment.iter().any(|&t| t >= raw.len()) {
        return validation("power level index out of range");
    }
    let total = assignment.iter().fold(T::zero(), |a, &t| a + raw[t]);
    let scale = T::from_usize_lossy(assignment.len()) / total;
    Ok(raw.iter().map(|&e| e * scale).collect())
}

/// Comb placement `1 + p·round(K/P)` with random 16-QAM symbols at their
/// natural energies (three classes for 16-QAM), scaled to total energy `P`.
pub fn equidistant_pattern<T: Real, R: Rng + ?Sized>(subcarriers: usize, pilots: usize, rng: &mut R) -> Result<PilotPattern<T>> {
    if pilots == 0 || pilots > subcarriers {
        return validation(format!("need 1 <= P <= K, got P={pilots}, K={subcarriers}"));
    }
    let mut spacing = ((subcarriers as f64 / pilots as f64).round() as usize).max(1);
    if 1 + (pilots - 1) * spacing > subcarriers {
        spacing = subcarriers / pilots;
    }
    let placement: Vec<usize> = (0..pilots).map(|p| 1 + p * spacing).collect();
    let raw: Vec<Cx<T>> = (0..pilots).map(|_| qam::random_symbol(rng)).collect();

    let mut classes: Vec<f64> = qam::alphabet::<f64>().iter().map(|s| s.norm_sqr()).collect();
    classes.sort_by(f64::total_cmp);
    classes.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let level_assignment: Vec<usize> = raw
        .iter()
        .map(|s| {
            let e = s.norm_sqr().to_f64_lossy();
            classes.iter().position(|c| (c - e).abs() < 1e-6).expect("16-QAM energy class")
        })
        .collect();
    let total: T = raw.iter().fold(T::zero(), |a, s| a + s.norm_sqr());
    let scale = T::from_usize_lossy(pilots) / total;
    let power_levels: Vec<T> = classes.iter().map(|&c| T::lit(c) * scale).collect();
    let symbols = raw.iter().map(|s| s * scale.sqrt()).collect();
    Ok(PilotPattern { placement, symbols, power_levels, level_assignment })
}

/// Random sorted placement and uniformly random level assignment.
fn random_state<R: Rng + ?Sized>(subcarriers: usize, pilots: usize, levels: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut placement: Vec<usize> = sample(rng, subcarriers, pilots).into_iter().map(|i| i + 1).collect();
    placement.sort_unstable();
    let assignment = (0..pilots).map(|_| rng.random_range(0..levels)).collect();
    (placement, assignment)
}

/// Uniformly random pattern over the given raw levels.
pub fn random_pattern<T: Real, R: Rng + ?Sized>(
    subcarriers: usize,
    pilots: usize,
    raw_levels: &[T],
    rng: &mut R,
) -> Result<PilotPattern<T>> {
    if pilots == 0 || pilots > subcarriers {
        return validation(format!("need 1 <= P <= K, got P={pilots}, K={subcarriers}"));
    }
    let (placement, assignment) = random_state(subcarriers, pilots, raw_levels.len(), rng);
    PilotPattern::from_levels(placement, raw_levels, assignment, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    /// Objective of the current state before the proposal.
    pub previous_objective: T,
    /// Objective of the proposed placement.
    pub candidate_objective: T,
    /// Objective of the state kept after the placement and power steps.
    pub accepted_objective: T,
    pub occupation_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignTrace<T> {
    pub records: Vec<IterationRecord<T>>,
    /// Visited states as (placement, level assignment).
    pub states: Vec<(Vec<usize>, Vec<usize>)>,
    /// Occupation probability of each visited state.
    pub occupation: Vec<f64>,
    /// Objective of the returned pattern.
    pub final_objective: T,
    pub evaluations: usize,
}

/// Knobs shared by the design routines.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignParams<T: Real> {
    pub pilots: usize,
    pub iters: usize,
    /// Raw power levels `E_1 … E_T`; renormalized on output.
    pub power_levels: Vec<T>,
    pub coherence: CoherenceParams<T>,
}

impl<T: Real> DesignParams<T> {
    pub fn new(pilots: usize, iters: usize, power_levels: Vec<T>, delta: T) -> Result<Self> {
        if pilots == 0 {
            return validation("pilot count must be positive");
        }
        if power_levels.is_empty() || power_levels.iter().any(|e| !(*e > T::zero())) {
            return validation("power levels must be non-empty and positive");
        }
        Ok(Self { pilots, iters, power_levels, coherence: CoherenceParams::new(delta)? })
    }

    pub fn levels(&self) -> usize {
        self.power_levels.len()
    }
}

/// Draws `iters` random patterns and keeps the one with the smallest
/// average coherence.
pub fn random_search_design<T: Real, R: Rng + ?Sized>(
    cfg: &ChannelModelConfig,
    params: &DesignParams<T>,
    rng: &mut R,
) -> Result<(PilotPattern<T>, DesignTrace<T>)> {
    if params.iters == 0 {
        return validation("random search needs at least one iteration");
    }
    let (k, p) = (cfg.subcarriers, params.pilots);
    if p > k {
        return validation(format!("need P <= K, got P={p}, K={k}"));
    }
    let eval = CoherenceEvaluator::for_config(cfg);
    let energies = |a: &[usize]| a.iter().map(|&t| params.power_levels[t]).collect::<Vec<T>>();
    let mut best: Option<(T, Vec<usize>, Vec<usize>)> = None;
    let mut records = Vec::with_capacity(params.iters);
    for m in 0..params.iters {
        let (placement, assignment) = random_state(k, p, params.levels(), rng);
        let mu = eval.evaluate(&placement, &energies(&assignment), &params.coherence);
        let previous = best.as_ref().map_or(mu, |b| b.0);
        if best.as_ref().is_none_or(|b| mu < b.0) {
            best = Some((mu, placement, assignment));
        }
        let kept = best.as_ref().unwrap().0;
        records.push(IterationRecord {
            iteration: m,
            previous_objective: previous,
            candidate_objective: mu,
            accepted_objective: kept,
            occupation_max: 1.0,
        });
    }
    let (mu, placement, assignment) = best.expect("at least one draw");
    let pattern = PilotPattern::from_levels(placement.clone(), &params.power_levels, assignment.clone(), rng)?;
    let trace = DesignTrace {
        records,
        states: vec![(placement, assignment)],
        occupation: vec![1.0],
        final_objective: mu,
        evaluations: eval.evaluations(),
    };
    Ok((pattern, trace))
}

/// Joint placement and power-level search.
///
/// Iteration `m = n·P + k` proposes replacing pilot `k` (in sorted order)
/// with a uniformly random unused subcarrier and accepts a strictly lower
/// coherence. The touched pilot's level is then set greedily over the `T`
/// levels. Occupation probabilities of visited states are kept as a running
/// average of visit indicators and the most occupied state is returned.
pub fn joint_design<T: Real, R: Rng + ?Sized>(
    init: &PilotPattern<T>,
    cfg: &ChannelModelConfig,
    params: &DesignParams<T>,
    rng: &mut R,
) -> Result<(PilotPattern<T>, DesignTrace<T>)> {
    let k_count = cfg.subcarriers;
    let p = init.len();
    let levels = params.levels();
    validate_placement(&init.placement, k_count)?;
    if p != params.pilots {
        return validation(format!("initial pattern has {p} pilots, expected {}", params.pilots));
    }
    if p >= k_count {
        return validation("design needs at least one unused subcarrier");
    }
    if params.iters == 0 || params.iters % p != 0 {
        return validation(format!(
            "iteration count {} must be a positive multiple of the pilot count {p}",
            params.iters
        ));
    }
    if init.level_assignment.len() != p || init.level_assignment.iter().any(|&t| t >= levels) {
        return validation("initial level assignment does not fit the design power levels");
    }

    let eval = CoherenceEvaluator::for_config(cfg);
    let objective = |placement: &[usize], assignment: &[usize]| {
        let energies: Vec<T> = assignment.iter().map(|&t| params.power_levels[t]).collect();
        eval.evaluate(placement, &energies, &params.coherence)
    };

    // pairs (subcarrier, level) kept sorted by subcarrier
    let mut state: Vec<(usize, usize)> = init.placement.iter().copied().zip(init.level_assignment.iter().copied()).collect();
    let split = |s: &[(usize, usize)]| -> (Vec<usize>, Vec<usize>) { s.iter().copied().unzip() };
    let mut used = vec![false; k_count + 1];
    for &(sc, _) in &state {
        used[sc] = true;
    }

    let (pl, asg) = split(&state);
    let mut current = objective(&pl, &asg);
    let mut index: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    index.insert(state.clone(), 0);
    let mut states = vec![state.clone()];
    let mut objectives = vec![current];
    let mut occupation = vec![1.0f64];
    let mut best_state = 0usize;
    let mut records = Vec::with_capacity(params.iters);

    for m in 0..params.iters {
        let k = m % p;
        let previous = current;

        let replacement = loop {
            let c = rng.random_range(1..=k_count);
            if !used[c] {
                break c;
            }
        };
        let mut candidate = state.clone();
        candidate[k].0 = replacement;
        candidate.sort_unstable();
        let (cpl, casg) = split(&candidate);
        let candidate_objective = objective(&cpl, &casg);
        let touched = if candidate_objective < current {
            used[state[k].0] = false;
            used[replacement] = true;
            state = candidate;
            current = candidate_objective;
            replacement
        } else {
            state[k].0
        };

        let pos = state.iter().position(|&(sc, _)| sc == touched).expect("touched pilot present");
        let keep = state[pos].1;
        let mut trial = state.clone();
        for t in (0..levels).filter(|&t| t != keep) {
            trial[pos].1 = t;
            let (tpl, tasg) = split(&trial);
            let mu = objective(&tpl, &tasg);
            if mu < current {
                current = mu;
                state[pos].1 = t;
            }
        }

        let kappa = match index.get(&state) {
            Some(&i) => i,
            None => {
                index.insert(state.clone(), states.len());
                states.push(state.clone());
                objectives.push(current);
                occupation.push(0.0);
                states.len() - 1
            }
        };
        let eta = 1.0 / (m + 1) as f64;
        for (i, v) in occupation.iter_mut().enumerate() {
            let d = if i == kappa { 1.0 } else { 0.0 };
            *v += eta * (d - *v);
        }
        if occupation[kappa] > occupation[best_state] {
            best_state = kappa;
        }
        records.push(IterationRecord {
            iteration: m,
            previous_objective: previous,
            candidate_objective,
            accepted_objective: current,
            occupation_max: occupation[best_state],
        });
    }

    let (placement, assignment) = split(&states[best_state]);
    let pattern = PilotPattern::from_levels(placement, &params.power_levels, assignment, rng)?;
    let trace = DesignTrace {
        records,
        states: states.iter().map(|s| split(s)).collect(),
        occupation,
        final_objective: objectives[best_state],
        evaluations: eval.evaluations(),
    };
    Ok((pattern, trace))
}

/// Where a codebook came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub iters: usize,
    pub delta: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEntry<T: Real> {
    pub slot: usize,
    pub x: i64,
    /// Doppler interval (Hz) served by this entry.
    pub f_d_range: (T, T),
    pub pattern: PilotPattern<T>,
}

/// One designed pilot pattern per Doppler bin `x ∈ [−M, M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T: Real> {
    pub subcarriers: usize,
    pub pilots: usize,
    pub levels: usize,
    pub doppler_half: usize,
    pub f_dmax_hz: T,
    pub t_d_s: T,
    pub entries: Vec<CodebookEntry<T>>,
    pub provenance: Provenance,
}

/// How each codebook entry is designed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMethod {
    Joint,
    RandomSearch,
}

/// Runs [`joint_design`] for every Doppler bin, each from its own random
/// start on an independent stream of `seed`.
pub fn build_codebook<T: Real>(
    cfg: &ChannelModelConfig,
    params: &DesignParams<T>,
    seed: u64,
    config_hash: &str,
) -> Result<(Codebook<T>, Vec<DesignTrace<T>>)> {
    build_codebook_with(cfg, params, seed, config_hash, DesignMethod::Joint)
}

/// [`build_codebook`] with a choice of design routine.
pub fn build_codebook_with<T: Real>(
    cfg: &ChannelModelConfig,
    params: &DesignParams<T>,
    seed: u64,
    config_hash: &str,
    method: DesignMethod,
) -> Result<(Codebook<T>, Vec<DesignTrace<T>>)> {
    let m = cfg.doppler_half();
    let slots: Vec<usize> = (1..=2 * m + 1).collect();
    let designed: Vec<Result<(CodebookEntry<T>, DesignTrace<T>)>> = slots
        .par_iter()
        .map(|&slot| {
            let x = slot_index(slot, m)?;
            let mut rng = stream_rng(seed, slot as u64);
            let (pattern, trace) = match method {
                DesignMethod::Joint => {
                    let init = random_pattern(cfg.subcarriers, params.pilots, &params.power_levels, &mut rng)?;
                    joint_design(&init, cfg, params, &mut rng)?
                }
                DesignMethod::RandomSearch => random_search_design(cfg, params, &mut rng)?,
            };
            let (lo, hi) = doppler_bin_range(x, T::lit(cfg.t_d_s), T::lit(cfg.f_dmax_hz));
            Ok((CodebookEntry { slot, x, f_d_range: (lo, hi), pattern }, trace))
        })
        .collect();
    let mut entries = Vec::with_capacity(slots.len());
    let mut traces = Vec::with_capacity(slots.len());
    for r in designed {
        let (e, t) = r?;
        entries.push(e);
        traces.push(t);
    }
    let codebook = Codebook {
        subcarriers: cfg.subcarriers,
        pilots: params.pilots,
        levels: params.levels(),
        doppler_half: m,
        f_dmax_hz: T::lit(cfg.f_dmax_hz),
        t_d_s: T::lit(cfg.t_d_s),
        entries,
        provenance: Provenance {
            seed,
            iters: params.iters,
            delta: params.coherence.delta.to_f64_lossy(),
            config_hash: config_hash.to_string(),
        },
    };
    Ok((codebook, traces))
}

impl<T: Real> Codebook<T> {
    pub fn entry(&self, slot: usize) -> Result<&CodebookEntry<T>> {
        slot_index(slot, self.doppler_half)?;
        self.entries
            .iter()
            .find(|e| e.slot == slot)
            .ok_or_else(|| crate::error::Error::Domain(format!("slot {slot} missing from codebook")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != 2 * self.doppler_half + 1 {
            return validation(format!(
                "codebook has {} entries, expected {}",
                self.entries.len(),
                2 * self.doppler_half + 1
            ));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if e.slot != i + 1 || codebook_slot(e.x, self.doppler_half)? != e.slot {
                return validation(format!("entry {i} has inconsistent slot {} / x {}", e.slot, e.x));
            }
            if e.pattern.len() != self.pilots || e.pattern.power_levels.len() != self.levels {
                return validation(format!("entry for slot {} does not match P/T of the codebook", e.slot));
            }
            e.pattern.validate(self.subcarriers)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&CodebookFile::from(self))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CodebookFile<T> = serde_json::from_str(text)?;
        if file.version != CODEBOOK_VERSION {
            return validation(format!("unsupported codebook version {}", file.version));
        }
        let cb = Self::from(file);
        cb.validate()?;
        Ok(cb)
    }
}

/// Entry selected for Doppler shift `f_d`.
pub fn select_pilot<T: Real>(codebook: &Codebook<T>, f_d: T, t_d: T) -> Result<&CodebookEntry<T>> {
    if !(f_d.abs() <= codebook.f_dmax_hz) {
        return domain(format!("|f_d| = {} exceeds f_dmax = {}", f_d.abs(), codebook.f_dmax_hz));
    }
    let x = doppler_index(f_d, t_d, codebook.f_dmax_hz)?;
    codebook.entry(codebook_slot(x, codebook.doppler_half)?)
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct SymbolFile<T> {
    re: T,
    im: T,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
struct EntryFile<T> {
    slot: usize,
    x: i64,
    f_d_range_hz: [T; 2],
    placement: Vec<usize>,
    power_level_index: Vec<usize>,
    power_levels: Vec<T>,
    symbols: Vec<SymbolFile<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
struct CodebookFile<T> {
    version: u32,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "P")]
    p: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "M")]
    m: usize,
    f_dmax_hz: T,
    #[serde(rename = "T_d_s")]
    t_d_s: T,
    entries: Vec<EntryFile<T>>,
    provenance: Provenance,
}

impl<T: Real> From<&Codebook<T>> for CodebookFile<T> {
    fn from(cb: &Codebook<T>) -> Self {
        Self {
            version: CODEBOOK_VERSION,
            k: cb.subcarriers,
            p: cb.pilots,
            t: cb.levels,
            m: cb.doppler_half,
            f_dmax_hz: cb.f_dmax_hz,
            t_d_s: cb.t_d_s,
            entries: cb
                .entries
                .iter()
                .map(|e| EntryFile {
                    slot: e.slot,
                    x: e.x,
                    f_d_range_hz: [e.f_d_range.0, e.f_d_range.1],
                    placement: e.pattern.placement.clone(),
                    power_level_index: e.pattern.level_assignment.clone(),
                    power_levels: e.pattern.power_levels.clone(),
                    symbols: e.pattern.symbols.iter().map(|s| SymbolFile { re: s.re, im: s.im }).collect(),
                })
                .collect(),
            provenance: cb.provenance.clone(),
        }
    }
}

impl<T: Real> From<CodebookFile<T>> for Codebook<T> {
    fn from(f: CodebookFile<T>) -> Self {
        Self {
            subcarriers: f.k,
            pilots: f.p,
            levels: f.t,
            doppler_half: f.m,
            f_dmax_hz: f.f_dmax_hz,
            t_d_s: f.t_d_s,
            entries: f
                .entries
                .into_iter()
                .map(|e| CodebookEntry {
                    slot: e.slot,
                    x: e.x,
                    f_d_range: (e.f_d_range_hz[0], e.f_d_range_hz[1]),
                    pattern: PilotPattern {
                        placement: e.placement,
                        symbols: e.symbols.into_iter().map(|s| Cx::new(s.re, s.im)).collect(),
                        power_levels: e.power_levels,
                        level_assignment: e.power_level_index,
                    },
                })
                .collect(),
            provenance: f.provenance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(iters: usize) -> DesignParams<f64> {
        DesignParams::new(64, iters, vec![0.5, 1.0, 2.0], 0.02).unwrap()
    }

    #[test]
    fn equidistant_reference_layout() {
        let mut rng = stream_rng(1, 0);
        let pat = equidistant_pattern::<f64, _>(512, 64, &mut rng).unwrap();
        assert_eq!(pat.placement[0], 1);
        assert_eq!(pat.placement[1], 9);
        assert_eq!(*pat.placement.last().unwrap(), 505);
        pat.validate(512).unwrap();
        // symbols are 16-QAM points under one common scale factor
        let factor = (pat.power_levels[0] / 0.2).sqrt();
        let alphabet = qam::alphabet::<f64>();
        for s in &pat.symbols {
            assert!(alphabet.iter().any(|a| (s / factor - a).norm() < 1e-9));
        }
        assert!(equidistant_pattern::<f64, _>(8, 9, &mut rng).is_err());
    }

    #[test]
    fn uneven_spacing_stays_in_range() {
        let mut rng = stream_rng(1, 0);
        let pat = equidistant_pattern::<f64, _>(100, 40, &mut rng).unwrap();
        pat.validate(100).unwrap();
    }

    #[test]
    fn iteration_count_must_be_a_multiple_of_pilots() {
        let cfg = ChannelModelConfig::reference();
        let mut rng = stream_rng(2, 0);
        let init = random_pattern(512, 64, &[0.5, 1.0, 2.0], &mut rng).unwrap();
        assert!(joint_design(&init, &cfg, &params(200), &mut rng).is_err());
        let (pat, trace) = joint_design(&init, &cfg, &params(192), &mut rng).unwrap();
        assert_eq!(trace.records.len(), 192);
        pat.validate(512).unwrap();
    }

    #[test]
    fn trace_invariants() {
        let cfg = ChannelModelConfig::reference();
        let mut rng = stream_rng(3, 0);
        let init = random_pattern(512, 64, &[0.5, 1.0, 2.0], &mut rng).unwrap();
        let (_, trace) = joint_design(&init, &cfg, &params(128), &mut rng).unwrap();
        let total: f64 = trace.occupation.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(trace.occupation.iter().all(|v| (0.0..=1.0).contains(v)));
        for r in &trace.records {
            assert!(r.accepted_objective <= r.previous_objective);
        }
        for (pl, asg) in &trace.states {
            validate_placement(pl, 512).unwrap();
            assert!(asg.iter().all(|&t| t < 3));
        }
        let best = trace.occupation.iter().cloned().fold(0.0, f64::max);
        assert_eq!(trace.records.last().unwrap().occupation_max, best);
        assert_eq!(trace.evaluations, 1 + 128 * 3);
    }

    #[test]
    fn design_is_deterministic() {
        let cfg = ChannelModelConfig::reference();
        let run = || {
            let mut rng = stream_rng(9, 4);
            let init = random_pattern(512, 64, &[0.5, 1.0, 2.0], &mut rng).unwrap();
            joint_design(&init, &cfg, &params(64), &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn random_search_best_so_far_is_monotone() {
        let cfg = ChannelModelConfig::reference();
        let mut rng = stream_rng(4, 0);
        let (pat, trace) = random_search_design(&cfg, &params(30), &mut rng).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].accepted_objective <= w[0].accepted_objective);
        }
        let min = trace.records.iter().map(|r| r.candidate_objective).fold(f64::INFINITY, f64::min);
        assert_eq!(trace.final_objective, min);
        pat.validate(512).unwrap();

        let mut rng = stream_rng(4, 1);
        let (_, one) = random_search_design(&cfg, &params(1), &mut rng).unwrap();
        assert_eq!(one.final_objective, one.records[0].candidate_objective);
    }
}
