//! Run configuration: one JSON document covering geometry, channel model,
//! pilot design and simulation, with reference-system defaults and presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel_model::ChannelModelConfig;
use crate::coherence::CoherenceParams;
use crate::error::{validation, Result};
use crate::geometry::{kmh_to_mps, GeometryConfig};
use crate::pilot_design::DesignParams;
use crate::scalar::Real;
use crate::sim::{EstimatorKind, PilotSource, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub d_max_m: f64,
    pub d_0_m: f64,
    pub d_s_m: f64,
    pub f_c_hz: f64,
    pub c_mps: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { d_max_m: 1200.0, d_0_m: 50.0, d_s_m: 1000.0, f_c_hz: 2.35e9, c_mps: 3.0e8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub bandwidth_hz: f64,
    pub tau_max_s: f64,
    pub t_d_s: f64,
    pub subcarriers: usize,
    pub cp_len: usize,
    pub sparsity: usize,
    pub gamma_rel: f64,
    /// Largest Doppler the model must cover; `null` derives it from the speed.
    pub f_dmax_hz: Option<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            bandwidth_hz: 5e6,
            tau_max_s: 5e-6,
            t_d_s: 0.675e-3,
            subcarriers: 512,
            cp_len: 32,
            sparsity: 6,
            gamma_rel: 0.01,
            f_dmax_hz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub pilots: usize,
    /// Joint-design iterations; must be a multiple of `pilots`.
    pub iters: usize,
    pub power_levels: Vec<f64>,
    /// Coherence threshold.
    pub delta: f64,
    pub random_search_iters: usize,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self { pilots: 64, iters: 192, power_levels: vec![0.5, 1.0, 2.0], delta: 0.01, random_search_iters: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub speed_kmh: f64,
    pub snr_db: Vec<f64>,
    /// Positions along the track (m) from cell edge A.
    pub positions_m: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    pub pilot_sources: Vec<PilotSource>,
    pub ici_iterations: Vec<usize>,
    pub trials: usize,
    pub genie_feedback: bool,
    /// OMP atom count; `null` uses the channel sparsity.
    pub omp_sparsity: Option<usize>,
    pub bp_epsilon_scale: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            speed_kmh: 500.0,
            snr_db: vec![15.0],
            positions_m: vec![0.0],
            estimators: vec![EstimatorKind::Bp],
            pilot_sources: vec![PilotSource::Algorithm1],
            ici_iterations: vec![0],
            trials: 50,
            genie_feedback: true,
            omp_sparsity: None,
            bp_epsilon_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: GeometrySection,
    pub channel: ChannelSection,
    pub design: DesignSection,
    pub sim: SimSection,
}

pub const PRESETS: &[&str] = &["fig4", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11"];

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("configuration serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn geometry_config(&self) -> Result<GeometryConfig<f64>> {
        let g = &self.geometry;
        GeometryConfig::new(g.d_max_m, g.d_0_m, g.d_s_m, g.f_c_hz, g.c_mps)
    }

    pub fn speed_mps(&self) -> f64 {
        kmh_to_mps(self.sim.speed_kmh)
    }

    pub fn f_dmax_hz(&self) -> Result<f64> {
        match self.channel.f_dmax_hz {
            Some(f) => Ok(f),
            None => Ok(self.geometry_config()?.max_doppler(self.speed_mps())),
        }
    }

    pub fn channel_config(&self) -> Result<ChannelModelConfig> {
        let c = &self.channel;
        let mut cfg = ChannelModelConfig::new(
            c.bandwidth_hz,
            c.tau_max_s,
            c.t_d_s,
            self.f_dmax_hz()?,
            c.subcarriers,
            c.cp_len,
            c.sparsity,
        )?;
        cfg.gamma_rel = c.gamma_rel;
        Ok(cfg)
    }

    pub fn design_params<T: Real>(&self) -> Result<DesignParams<T>> {
        let d = &self.design;
        DesignParams::new(d.pilots, d.iters, d.power_levels.iter().map(|&e| T::lit(e)).collect(), T::lit(d.delta))
    }

    pub fn random_search_params<T: Real>(&self) -> Result<DesignParams<T>> {
        Ok(DesignParams { iters: self.design.random_search_iters, ..self.design_params()? })
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.sim;
        let channel = self.channel_config()?;
        let cfg = SimConfig {
            omp_sparsity: s.omp_sparsity.unwrap_or(channel.sparsity),
            channel,
            geometry: self.geometry_config()?,
            speed_mps: self.speed_mps(),
            snr_db: s.snr_db.clone(),
            positions_m: s.positions_m.clone(),
            estimators: s.estimators.clone(),
            pilot_sources: s.pilot_sources.clone(),
            ici_iterations: s.ici_iterations.clone(),
            trials: s.trials,
            seed: self.seed,
            genie_feedback: s.genie_feedback,
            bp_epsilon_scale: s.bp_epsilon_scale,
            coherence: CoherenceParams::new(self.design.delta)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section for physical consistency.
    pub fn validate(&self) -> Result<()> {
        let geometry = self.geometry_config()?;
        if !(self.sim.speed_kmh >= 0.0) {
            return validation("speed must be non-negative");
        }
        let channel = self.channel_config()?;
        let d = &self.design;
        if d.pilots == 0 || d.pilots >= channel.subcarriers {
            return validation(format!("need 0 < P < K, got P={}, K={}", d.pilots, channel.subcarriers));
        }
        if d.iters == 0 || d.iters % d.pilots != 0 {
            return validation(format!(
                "design iterations {} must be a positive multiple of the pilot count {}",
                d.iters, d.pilots
            ));
        }
        if d.random_search_iters == 0 {
            return validation("random_search_iters must be at least 1");
        }
        self.design_params::<f64>()?;
        if geometry.max_doppler(self.speed_mps()) > channel.f_dmax_hz * (1.0 + 1e-12) {
            return validation("the speed produces Doppler shifts beyond channel.f_dmax_hz");
        }
        self.sim_config()?;
        Ok(())
    }

    /// Track positions from A to C in `steps` equal intervals.
    pub fn track_positions(&self, steps: usize) -> Result<Vec<f64>> {
        let dc = self.geometry_config()?.d_c();
        Ok((0..=steps).map(|i| 2.0 * dc * i as f64 / steps as f64).collect())
    }

    /// Named configurations reproducing each experiment at desk scale.
    pub fn preset(name: &str) -> Result<Self> {
        use EstimatorKind::*;
        use PilotSource::*;
        let mut cfg = Self::default();
        let snr_sweep: Vec<f64> = (0..=6).map(|i| 5.0 * i as f64).collect();
        match name {
            "fig4" | "fig6" | "fig11" => {}
            "fig7" | "fig8" => {
                cfg.sim.snr_db = snr_sweep;
                cfg.sim.positions_m = vec![0.0];
                cfg.sim.estimators = vec![Ls, Lmmse, Omp, Bp];
                cfg.sim.pilot_sources = vec![Equidistant, RandomSearch, Algorithm1];
                if name == "fig8" {
                    cfg.sim.estimators.insert(0, Perfect);
                }
            }
            "fig9" => {
                cfg.sim.snr_db = vec![10.0, 15.0, 20.0, 25.0, 30.0];
                cfg.sim.estimators = vec![Bp];
                cfg.sim.pilot_sources = vec![Algorithm1];
                cfg.sim.ici_iterations = vec![0, 1, 2, 3, 5, 7];
            }
            "fig10" => {
                cfg.sim.snr_db = vec![15.0, 25.0];
                cfg.sim.positions_m = cfg.track_positions(8)?;
                cfg.sim.estimators = vec![Bp];
                cfg.sim.pilot_sources = vec![Algorithm1];
            }
            _ => return validation(format!("unknown preset '{name}' (known: {})", PRESETS.join(", "))),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_reference_dimensions() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let ch = cfg.channel_config().unwrap();
        assert_eq!((ch.paths(), ch.doppler_half(), ch.symbols_per_packet()), (26, 2, 6));
        assert!((cfg.f_dmax_hz().unwrap() - 1088.0).abs() / 1088.0 < 0.005);
    }

    #[test]
    fn json_round_trip_and_hash() {
        for name in PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.config_hash(), cfg.config_hash());
        }
        let mut other = RunConfig::default();
        other.seed = 1;
        assert_ne!(other.config_hash(), RunConfig::default().config_hash());
    }

    #[test]
    fn partial_documents_take_defaults() {
        let cfg = RunConfig::from_json(r#"{"seed": 5, "sim": {"trials": 3}}"#).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.sim.trials, 3);
        assert_eq!(cfg.design, DesignSection::default());
    }

    #[test]
    fn inconsistent_settings_are_rejected() {
        let bad = [
            r#"{"channel": {"cp_len": 10}}"#,
            r#"{"design": {"pilots": 600}}"#,
            r#"{"design": {"iters": 200}}"#,
            r#"{"design": {"delta": 1.5}}"#,
            r#"{"sim": {"snr_db": []}}"#,
            r#"{"sim": {"trials": 0}}"#,
            r#"{"sim": {"positions_m": [5000.0]}}"#,
            r#"{"channel": {"f_dmax_hz": 100.0}}"#,
            r#"{"sim": {"estimators": ["qr"]}}"#,
            r#"{"unknown": 1}"#,
        ];
        for text in bad {
            let err = RunConfig::from_json(text).unwrap_err();
            assert!(err.is_user_error(), "{text}: {err}");
        }
        assert!(RunConfig::preset("fig99").is_err());
    }
}
