//! Energies, the pseudoenergy tracker, analytic friction and SI conversion.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynamics::EventSink;
use crate::error::{Error, Result};
use crate::model::{AtomState, LatticeParams, SpontaneousEvent};

const HBAR: f64 = 1.054_571_817e-34;

/// Total energy `H = (omega_r/2) p^2 - u cos x - (delta/2) z`.
#[inline]
pub fn energy(state: &AtomState, params: &LatticeParams) -> f64 {
    0.5 * params.omega_r * state.p * state.p - state.u * state.x.cos() - 0.5 * params.delta * state.z
}

/// Rate of change of `H` along the coherent flow.
pub fn coherent_energy_rate(state: &AtomState, params: &LatticeParams) -> f64 {
    0.25 * params.delta * params.gamma * (state.u * state.u + state.v * state.v)
        - 0.5 * params.gamma * state.u * state.z * state.x.cos()
}

/// Pseudoenergy from its ingredients: `H - (delta gamma / 4) <1 - z^2> (tau - tau_j)`.
pub fn pseudoenergy(h: f64, z2_avg: f64, elapsed: f64, params: &LatticeParams) -> f64 {
    h - 0.25 * params.delta * params.gamma * z2_avg * elapsed
}

/// Energy change produced by the jump itself, `H(after) - H(before)`.
pub fn jump_energy_change(pre: &AtomState, recoil: f64, params: &LatticeParams) -> Result<f64> {
    if !(recoil.abs() <= 1.0) {
        return Err(Error::Contract(format!("recoil {recoil} outside [-1, 1]")));
    }
    let wr = params.omega_r;
    Ok(wr * pre.p * recoil
        + 0.5 * wr * recoil * recoil
        + 0.5 * params.delta
        + pre.u * pre.x.cos()
        + 0.5 * params.delta * pre.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReading {
    pub tau: f64,
    pub h: f64,
    pub h_tilde: f64,
    pub z2_avg: f64,
}

/// Event sink that maintains the trailing average of `1 - z^2` since the last
/// emission and reports the pseudoenergy.
///
/// The window is `20 / gamma`, capped at the time elapsed since the last jump.
#[derive(Debug, Clone)]
pub struct PseudoenergyTracker {
    params: LatticeParams,
    window: f64,
    spacing: f64,
    tau_j: f64,
    prev: f64,
    integral: f64,
    checkpoints: VecDeque<(f64, f64)>,
}

impl PseudoenergyTracker {
    pub const WINDOW_IN_DECAY_TIMES: f64 = 20.0;

    pub fn new(params: LatticeParams, start: &AtomState) -> Self {
        let window = if params.gamma > 0.0 {
            Self::WINDOW_IN_DECAY_TIMES / params.gamma
        } else {
            f64::INFINITY
        };
        Self {
            params,
            window,
            spacing: if window.is_finite() { window / 64.0 } else { f64::INFINITY },
            tau_j: start.tau,
            prev: 1.0 - start.z * start.z,
            integral: 0.0,
            checkpoints: VecDeque::new(),
        }
    }

    pub fn last_jump_tau(&self) -> f64 {
        self.tau_j
    }

    /// Trailing average of `1 - z^2` at time `tau`.
    pub fn z2_average(&mut self, tau: f64) -> f64 {
        let elapsed = tau - self.tau_j;
        if elapsed <= 0.0 {
            return self.prev;
        }
        if elapsed <= self.window {
            return (self.integral / elapsed).clamp(0.0, 1.0);
        }
        while let Some(&(t, _)) = self.checkpoints.front() {
            if t < tau - self.window && self.checkpoints.len() > 1 {
                self.checkpoints.pop_front();
            } else {
                break;
            }
        }
        match self.checkpoints.front() {
            Some(&(t, i)) if tau > t => ((self.integral - i) / (tau - t)).clamp(0.0, 1.0),
            _ => self.prev,
        }
    }

    pub fn reading(&mut self, state: &AtomState) -> EnergyReading {
        let h = energy(state, &self.params);
        let z2_avg = self.z2_average(state.tau);
        EnergyReading {
            tau: state.tau,
            h,
            h_tilde: pseudoenergy(h, z2_avg, state.tau - self.tau_j, &self.params),
            z2_avg,
        }
    }
}

impl EventSink for PseudoenergyTracker {
    fn on_step(&mut self, state: &AtomState, dtau: f64) {
        let next = 1.0 - state.z * state.z;
        self.integral += 0.5 * (self.prev + next) * dtau;
        self.prev = next;
        let due = match self.checkpoints.back() {
            Some(&(t, _)) => state.tau - t >= self.spacing,
            None => state.tau - self.tau_j >= self.spacing,
        };
        if due {
            self.checkpoints.push_back((state.tau, self.integral));
        }
    }

    fn on_jump(&mut self, event: &SpontaneousEvent) {
        self.tau_j = event.tau_event;
        self.integral = 0.0;
        self.prev = 0.0;
        self.checkpoints.clear();
    }
}

/// A value computed outside the regime where its formula is expected to hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flagged {
    pub value: f64,
    pub in_validity_range: bool,
}

/// Friction force `F = delta gamma / (2 omega_r p)`, valid for `omega_r |p| >= gamma / 2`.
pub fn analytic_friction(p: f64, params: &LatticeParams) -> Flagged {
    Flagged {
        value: params.delta * params.gamma / (2.0 * params.omega_r * p),
        in_validity_range: params.omega_r * p.abs() >= 0.5 * params.gamma,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantityKind {
    Time,
    Velocity,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiValue {
    pub value: f64,
    pub unit: &'static str,
}

/// Convert a normalized time or momentum to SI units.
///
/// Momentum stays in units of `hbar k_f`.
pub fn to_si(value: f64, kind: QuantityKind, params: &LatticeParams) -> Result<SiValue> {
    match kind {
        QuantityKind::Time => {
            let rabi = params
                .rabi_hz
                .ok_or_else(|| Error::config("params.rabi_hz", "required for time conversion"))?;
            Ok(SiValue {
                value: value / rabi,
                unit: "s",
            })
        }
        QuantityKind::Velocity => {
            let lambda = params.wavelength_m.ok_or_else(|| {
                Error::config("params.wavelength_m", "required for velocity conversion")
            })?;
            let mass = params.atom_mass_kg.ok_or_else(|| {
                Error::config("params.atom_mass_kg", "required for velocity conversion")
            })?;
            let k = std::f64::consts::TAU / lambda;
            Ok(SiValue {
                value: value * HBAR * k / mass,
                unit: "m/s",
            })
        }
        QuantityKind::Momentum => Ok(SiValue {
            value,
            unit: "hbar_k",
        }),
    }
}

/// Normalized time to microseconds.
pub fn tau_to_us(tau: f64, params: &LatticeParams) -> Result<f64> {
    Ok(to_si(tau, QuantityKind::Time, params)?.value * 1e6)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dynamics::{apply_jump, CoherentFlow, Integrator, Rk4Flow, Trajectory};

    #[test]
    fn energy_examples() {
        let p = LatticeParams::with_delta(-0.001);
        let s = AtomState {
            x: 0.0,
            p: 100.0,
            u: 0.5,
            v: 0.0,
            z: -1.0,
            tau: 0.0,
        };
        assert_relative_eq!(energy(&s, &p), -0.4505, max_relative = 1e-12);
        let zero = AtomState {
            x: 1.234,
            p: 0.0,
            u: 0.0,
            v: 1.0,
            z: 0.0,
            tau: 0.0,
        };
        assert_eq!(energy(&zero, &p), 0.0);
    }

    #[test]
    fn post_jump_energy_is_kinetic_plus_half_detuning() {
        let params = LatticeParams::with_delta(-0.003);
        let s = AtomState {
            x: 0.7,
            p: 42.0,
            u: 0.2,
            v: 0.1,
            z: 0.3,
            tau: 0.0,
        };
        let j = apply_jump(&s, -0.4).unwrap();
        let expected = 0.5 * params.omega_r * (42.0f64 - 0.4).powi(2) + 0.5 * params.delta;
        assert_relative_eq!(energy(&j, &params), expected, max_relative = 1e-14);
    }

    #[test]
    fn ground_state_jump_without_recoil_costs_nothing() {
        let params = LatticeParams::with_delta(-0.02);
        let s = AtomState::ground(2.5, 0.0);
        assert_eq!(jump_energy_change(&s, 0.0, &params).unwrap(), 0.0);
        assert!(jump_energy_change(&s, 1.01, &params).is_err());
    }

    #[test]
    fn jump_identity_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let params = LatticeParams::with_delta(rng.gen_range(-0.2..0.2));
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let s = AtomState {
                x: rng.gen_range(-50.0..50.0),
                p: rng.gen_range(-800.0..800.0),
                u: theta.sin() * phi.cos(),
                v: theta.sin() * phi.sin(),
                z: theta.cos(),
                tau: 0.0,
            };
            let recoil = rng.gen_range(-1.0..=1.0);
            let direct = energy(&apply_jump(&s, recoil).unwrap(), &params) - energy(&s, &params);
            let formula = jump_energy_change(&s, recoil, &params).unwrap();
            assert!((direct - formula).abs() < 1e-12, "{direct} vs {formula}");
        }
    }

    proptest! {
        #[test]
        fn energy_is_periodic_in_position(
            x in -20.0..20.0f64, p in -500.0..500.0f64, u in -1.0..1.0f64, z in -1.0..1.0f64
        ) {
            let params = LatticeParams::default();
            let a = AtomState { x, p, u, v: 0.0, z, tau: 0.0 };
            let b = AtomState { x: x + std::f64::consts::TAU, ..a };
            prop_assert!((energy(&a, &params) - energy(&b, &params)).abs() < 1e-12);
        }
    }

    #[test]
    fn pseudoenergy_reduces_to_energy() {
        let params = LatticeParams::with_delta(0.0);
        assert_eq!(pseudoenergy(0.7, 0.5, 1e4, &params), 0.7);
        let params = LatticeParams::with_delta(-0.01);
        assert_eq!(pseudoenergy(0.7, 0.5, 0.0, &params), 0.7);
    }

    struct NoEmission(Rk4Flow);

    impl CoherentFlow for NoEmission {
        fn params(&self) -> &LatticeParams {
            self.0.params()
        }
        fn advance(&self, state: &AtomState, h: f64) -> (AtomState, f64) {
            (self.0.advance(state, h).0, 0.0)
        }
    }

    // The compensation term covers the (u^2 + v^2) part of dH/dtau only; the
    // u z cos x part averages to the same amount, so half the drift remains.
    #[test]
    fn pseudoenergy_removes_half_the_coherent_drift() {
        let params = LatticeParams::with_delta(-0.001);
        for (x0, p0) in [(0.4, 400.0), (1.0, 150.0), (0.1, 800.0)] {
            let start = AtomState {
                tau: 0.0,
                ..AtomState::ground(x0, p0)
            };
            let mut tracker = PseudoenergyTracker::new(params, &start);
            let mut traj =
                Trajectory::with_flow(NoEmission(Rk4Flow { params }), Integrator::default(), start);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let h0 = tracker.reading(&start);
            let s = traj.evolve_to(600.0, &mut rng, &mut tracker).unwrap();
            let r = tracker.reading(&s);
            let h_drift = r.h - h0.h;
            let h_tilde_drift = r.h_tilde - h0.h_tilde;
            assert!(h_drift < -3e-4, "H drift {h_drift}");
            let ratio = h_tilde_drift / h_drift;
            assert!((0.4..0.6).contains(&ratio), "ratio {ratio} at x0 = {x0}");
            assert!((0.4..0.6).contains(&r.z2_avg), "{}", r.z2_avg);
        }
    }

    #[test]
    fn friction_examples() {
        let params = LatticeParams::with_delta(-0.001);
        let f = analytic_friction(1000.0, &params);
        assert_relative_eq!(f.value, -1.65e-4, max_relative = 1e-12);
        assert!(f.in_validity_range);
        for p in [200.0, 500.0, 3000.0] {
            let f = analytic_friction(p, &params);
            assert_relative_eq!(f.value * p, -0.001 * 3.3e-3 / 2e-5, max_relative = 1e-12);
        }
        assert!(!analytic_friction(10.0, &params).in_validity_range);
        assert_eq!(analytic_friction(123.0, &LatticeParams::with_delta(0.0)).value, 0.0);
    }

    #[test]
    fn si_conversions() {
        let params = LatticeParams::default();
        let ms = to_si(1e7, QuantityKind::Time, &params).unwrap();
        assert_relative_eq!(ms.value, 1e-3, max_relative = 1e-12);
        assert_eq!(ms.unit, "s");
        assert_relative_eq!(tau_to_us(1e4, &params).unwrap(), 1.0, max_relative = 1e-12);
        let v = to_si(500.0, QuantityKind::Velocity, &params).unwrap();
        assert!((v.value - 1.76).abs() < 0.01, "{}", v.value);
        assert_eq!(to_si(3.0, QuantityKind::Momentum, &params).unwrap().value, 3.0);

        let bare = LatticeParams {
            rabi_hz: None,
            ..params
        };
        assert!(matches!(
            to_si(1.0, QuantityKind::Time, &bare),
            Err(Error::Config { ref key, .. }) if key == "params.rabi_hz"
        ));
    }
}
