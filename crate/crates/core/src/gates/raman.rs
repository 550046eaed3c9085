//! Two-photon Raman rates, Stark shifts and a time-domain rate fit.

use serde::{Deserialize, Serialize};

use super::{GateKind, GateSimulator, GateSpec};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::labels::BasisLabel;
use crate::pulses::Schedule;

/// Effective two-photon Rabi rate `Ω1 Ω2 / (2Δ)` (Hz).
pub fn raman_effective_rate(omega1: f64, omega2: f64, detuning: f64) -> Result<f64> {
    if detuning == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok(omega1 * omega2 / (2.0 * detuning))
}

/// Dispersive AC Stark shift `Ω² / (4Δ)` (Hz).
pub fn raman_stark_shift(omega: f64, detuning: f64) -> Result<f64> {
    if detuning == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok(omega * omega / (4.0 * detuning))
}

/// States involved in a Raman process: (initial, target, intermediate).
pub fn raman_states(kind: GateKind) -> Result<(BasisLabel, BasisLabel, BasisLabel)> {
    match kind {
        GateKind::RamanIswap => Ok((BasisLabel::new(1, 0, 0), BasisLabel::new(0, 1, 0), BasisLabel::new(0, 0, 0))),
        GateKind::RamanBswap => Ok((BasisLabel::new(0, 0, 0), BasisLabel::new(1, 1, 0), BasisLabel::new(0, 1, 0))),
        other => Err(Error::InvalidArgument(format!("{other:?} is not a Raman gate"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanFit {
    /// Peak `Ω1 Ω2 / (2Δ)` of the compiled tones (Hz).
    pub predicted_peak_rate: f64,
    /// Fitted scale `k` of the predicted rate.
    pub rate_ratio: f64,
    /// `k` times the predicted peak rate (Hz).
    pub fitted_peak_rate: f64,
    pub final_intermediate_population: f64,
    pub max_intermediate_population: f64,
    pub rms_residual: f64,
    pub times: Vec<f64>,
    pub target_population: Vec<f64>,
}

/// Simulates a compiled Raman schedule from its initial state and fits
/// `P(t) = sin²(π k Φ(t))`, `Φ(t) = ∫ Ω1(t') Ω2(t') / (2Δ) dt'`.
pub fn fit_raman_rate(sim: &GateSimulator, gate: &GateSpec, schedule: &Schedule, samples: usize) -> Result<RamanFit> {
    let (init, target, mid) = raman_states(gate.kind)?;
    if schedule.tones.len() != 2 {
        return Err(Error::InvalidArgument("a Raman schedule has exactly two tones".into()));
    }
    let space = sim.system.space;
    let lam = sim.config.couplings;
    let (t1, t2) = (&schedule.tones[0], &schedule.tones[1]);
    let c1 = t1.target.map(|t| lam[t.mode.index()]).unwrap_or(1.0);
    let c2 = t2.target.map(|t| lam[t.mode.index()]).unwrap_or(1.0);
    let delta = gate.raman_detuning.abs();
    let rate = |t: f64| c1 * t1.envelope.sample(t - t1.start_s).re * c2 * t2.envelope.sample(t - t2.start_s).re / (2.0 * delta);
    let n = samples.max(8);
    let dur = schedule.total_duration_s;
    let times: Vec<f64> = (1..=n).map(|k| dur * k as f64 / n as f64).collect();
    // cumulative Φ by Simpson on a fine grid
    let fine = 16;
    let mut phi = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &t in &times {
        let h = (t - prev) / fine as f64;
        let mut s = rate(prev) + rate(t);
        for j in 1..fine {
            s += rate(prev + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc += s * h / 3.0;
        phi.push(acc);
        prev = t;
    }
    let us = dynamics::propagate_trajectory(&sim.system, schedule, &sim.config, &times)?;
    let (i0, it, im) = (space.index_of(init)?, space.index_of(target)?, space.index_of(mid)?);
    let p_target: Vec<f64> = us.iter().map(|u| u[(it, i0)].norm_sqr()).collect();
    let p_mid: Vec<f64> = us.iter().map(|u| u[(im, i0)].norm_sqr()).collect();
    let cost = |k: f64| -> f64 {
        phi.iter()
            .zip(&p_target)
            .map(|(f, p)| {
                let m = (std::f64::consts::PI * k * f).sin().powi(2);
                (m - p).powi(2)
            })
            .sum()
    };
    let k = golden_min(cost, 0.2, 2.0, 1e-7);
    let peak = (0..=400).map(|j| rate(dur * j as f64 / 400.0)).fold(0.0, f64::max);
    Ok(RamanFit {
        predicted_peak_rate: peak,
        rate_ratio: k,
        fitted_peak_rate: k * peak,
        final_intermediate_population: *p_mid.last().unwrap(),
        max_intermediate_population: p_mid.iter().cloned().fold(0.0, f64::max),
        rms_residual: (cost(k) / n as f64).sqrt(),
        times,
        target_population: p_target,
    })
}

pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn printed_rate_example() {
        assert_relative_eq!(raman_effective_rate(8e6, 8e6, 32e6).unwrap(), 1e6, max_relative = 1e-12);
        assert_relative_eq!(raman_effective_rate(8e6, 8e6, -32e6).unwrap(), -1e6, max_relative = 1e-12);
        assert_relative_eq!(raman_stark_shift(8e6, 32e6).unwrap(), 0.5e6, max_relative = 1e-12);
    }

    #[test]
    fn zero_detuning_is_rejected() {
        assert_eq!(raman_effective_rate(1.0, 1.0, 0.0), Err(Error::ZeroDetuning));
        assert_eq!(raman_stark_shift(1.0, 0.0), Err(Error::ZeroDetuning));
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_min(|x| (x - 0.7).powi(2), 0.0, 2.0, 1e-9);
        assert!((x - 0.7).abs() < 1e-6);
    }
}
