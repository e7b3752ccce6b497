//! Cell geometry: train position and speed to Doppler shift and Doppler bin.
//!
//! Position `alpha` is measured along the track from the cell edge A
//! (`alpha = 0`), passes the closest point B to the base station at
//! `alpha = D_c`, and ends at the far edge C (`alpha = 2·D_c`).

use crate::error::{domain, validation, Result};
use crate::scalar::Real;

/// Speed of light used by default (the rounded value of the reference system table).
pub const LIGHT_SPEED: f64 = 3.0e8;

pub fn kmh_to_mps<T: Real>(kmh: T) -> T {
    kmh / T::lit(3.6)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConfig<T: Real> {
    /// Distance from the base station to the cell edges A and C (m).
    pub d_max: T,
    /// Perpendicular distance from the base station to the track (m).
    pub d_0: T,
    /// Spacing between base stations (m). Informational.
    pub d_s: T,
    /// Carrier frequency (Hz).
    pub f_c: T,
    /// Propagation speed (m/s).
    pub c: T,
    d_c: T,
}

impl<T: Real> GeometryConfig<T> {
    pub fn new(d_max: T, d_0: T, d_s: T, f_c: T, c: T) -> Result<Self> {
        if !(d_0 > T::zero()) || !(d_max > d_0) {
            return validation(format!("need D_max > D_0 > 0, got D_max={d_max}, D_0={d_0}"));
        }
        if !(f_c > T::zero()) || !(c > T::zero()) {
            return validation("carrier frequency and propagation speed must be positive");
        }
        let d_c = (d_max * d_max - d_0 * d_0).sqrt();
        Ok(Self { d_max, d_0, d_s, f_c, c, d_c })
    }

    /// Reference high-speed-rail cell: D_max = 1200 m, D_0 = 50 m,
    /// D_s = 1000 m, f_c = 2.35 GHz, c = 3e8 m/s.
    pub fn reference() -> Self {
        Self::new(T::lit(1200.0), T::lit(50.0), T::lit(1000.0), T::lit(2.35e9), T::lit(LIGHT_SPEED))
            .expect("reference geometry is valid")
    }

    /// Half-length of the covered track, `sqrt(D_max² − D_0²)`.
    #[inline]
    pub fn d_c(&self) -> T {
        self.d_c
    }

    /// Largest Doppler magnitude at speed `v` (m/s): `v/c · f_c`.
    pub fn max_doppler(&self, v: T) -> T {
        v / self.c * self.f_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionState<T: Real> {
    /// Distance from cell edge A along the track (m), in `[0, 2·D_c]`.
    pub alpha: T,
    /// Train speed (m/s).
    pub v: T,
}

impl<T: Real> PositionState<T> {
    pub fn new(alpha: T, v: T, geom: &GeometryConfig<T>) -> Result<Self> {
        let two_dc = geom.d_c() + geom.d_c();
        if !(alpha >= T::zero() && alpha <= two_dc) {
            return validation(format!("position {alpha} outside [0, {two_dc}]"));
        }
        if !(v >= T::zero()) {
            return validation(format!("speed must be non-negative, got {v}"));
        }
        Ok(Self { alpha, v })
    }
}

/// Doppler shift (Hz) seen at the given position, `v/c · f_c · cos θ` with
/// `cos θ = (D_c − α) / sqrt((D_c − α)² + D_0²)`.
pub fn doppler_at_position<T: Real>(state: &PositionState<T>, geom: &GeometryConfig<T>) -> T {
    let along = geom.d_c() - state.alpha;
    let cos_theta = along / along.hypot(geom.d_0);
    geom.max_doppler(state.v) * cos_theta
}

/// Doppler bin index `x`: `ceil(2·T_d·f_d)` for `f_d ≥ 0`, `floor(2·T_d·f_d)` otherwise.
pub fn doppler_index<T: Real>(f_d: T, t_d: T, f_dmax: T) -> Result<i64> {
    if !(f_d.abs() <= f_dmax) {
        return domain(format!("|f_d| = {} exceeds f_dmax = {f_dmax}", f_d.abs()));
    }
    let scaled = (t_d + t_d) * f_d;
    let x = if f_d >= T::zero() { scaled.ceil() } else { scaled.floor() };
    Ok(x.to_i64().expect("bounded bin index"))
}

/// Doppler bin for a position: `doppler_index(doppler_at_position(..))`.
pub fn position_index<T: Real>(state: &PositionState<T>, geom: &GeometryConfig<T>, t_d: T) -> Result<i64> {
    doppler_index(doppler_at_position(state, geom), t_d, geom.max_doppler(state.v))
}

/// One-based codebook slot of Doppler bin `x`, `x + M + 1`.
pub fn codebook_slot(x: i64, m: usize) -> Result<usize> {
    if x.unsigned_abs() as usize > m {
        return domain(format!("Doppler index {x} outside [-{m}, {m}]"));
    }
    Ok((x + m as i64 + 1) as usize)
}

/// Inverse of [`codebook_slot`].
pub fn slot_index(slot: usize, m: usize) -> Result<i64> {
    if slot == 0 || slot > 2 * m + 1 {
        return domain(format!("slot {slot} outside [1, {}]", 2 * m + 1));
    }
    Ok(slot as i64 - m as i64 - 1)
}

/// Doppler interval (Hz) mapped to bin `x`, clipped to `±f_dmax`. Bin 0 only
/// contains `f_d = 0` exactly.
pub fn doppler_bin_range<T: Real>(x: i64, t_d: T, f_dmax: T) -> (T, T) {
    let width = T::one() / (t_d + t_d);
    let xf = T::from_i64(x).expect("bin index");
    let (lo, hi) = match x {
        0 => (T::zero(), T::zero()),
        x if x > 0 => ((xf - T::one()) * width, xf * width),
        _ => (xf * width, (xf + T::one()) * width),
    };
    (lo.max(-f_dmax), hi.min(f_dmax))
}
