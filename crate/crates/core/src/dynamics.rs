//! Coherent Hamilton-Schrödinger flow and the spontaneous-emission jump process.
//!
//! Between emissions the five variables follow a smooth ODE integrated with
//! fixed-step RK4. Emissions are sampled with the waiting-time (cumulative
//! hazard) method: an exponential threshold `-ln r` is drawn, the hazard
//! `gamma (z + 1) / 2` is integrated alongside the state, and the jump fires
//! where the integral crosses the threshold. The crossing is located inside the
//! step by bisection, so waiting times do not depend on the step size.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AtomState, AtomStateDerivative, LatticeParams, SpontaneousEvent, StateRecord};
use crate::observables::energy;

/// Largest step that still resolves the O(2) Rabi frequency.
pub const MAX_DTAU: f64 = 0.05;
pub const DEFAULT_DTAU: f64 = 1.0e-2;
/// Width of the bracketing interval when locating a jump inside a step.
pub const JUMP_TIME_TOLERANCE: f64 = 1.0e-6;

/// Coherent right-hand side, without the delta-kick terms.
#[inline]
pub fn coherent_derivs(state: &AtomState, params: &LatticeParams) -> AtomStateDerivative {
    let [dx, dp, du, dv, dz] = rhs(&[state.x, state.p, state.u, state.v, state.z], params);
    AtomStateDerivative { dx, dp, du, dv, dz }
}

#[inline(always)]
fn rhs(y: &[f64; 5], params: &LatticeParams) -> [f64; 5] {
    rhs_with_trig(y, y[0].sin_cos(), params)
}

#[inline(always)]
fn rhs_with_trig(y: &[f64; 5], (sin_x, cos_x): (f64, f64), params: &LatticeParams) -> [f64; 5] {
    let [_, p, u, v, z] = *y;
    let half_gamma = 0.5 * params.gamma;
    [
        params.omega_r * p,
        -u * sin_x,
        params.delta * v + half_gamma * u * z,
        -params.delta * u + 2.0 * z * cos_x + half_gamma * v * z,
        -2.0 * v * cos_x - half_gamma * (u * u + v * v),
    ]
}

/// `(sin, cos)` of `x + d` from those of `x`, for the small offsets between RK4 stages.
#[inline(always)]
fn rotate((s, c): (f64, f64), d: f64) -> (f64, f64) {
    if d.abs() > 1e-2 {
        let (sd, cd) = d.sin_cos();
        return (s * cd + c * sd, c * cd - s * sd);
    }
    let d2 = d * d;
    let sd = d * (1.0 - d2 * (1.0 / 6.0) * (1.0 - d2 * (1.0 / 20.0) * (1.0 - d2 * (1.0 / 42.0))));
    let cd = 1.0 - d2 * 0.5 * (1.0 - d2 * (1.0 / 12.0) * (1.0 - d2 * (1.0 / 30.0)));
    (s * cd + c * sd, c * cd - s * sd)
}

#[inline(always)]
fn axpy(y: &[f64; 5], a: f64, k: &[f64; 5]) -> [f64; 5] {
    [
        y[0] + a * k[0],
        y[1] + a * k[1],
        y[2] + a * k[2],
        y[3] + a * k[3],
        y[4] + a * k[4],
    ]
}

/// One RK4 step; also returns the jump hazard integrated over the step with the
/// same stage weights (the hazard is carried as a sixth ODE component).
#[inline]
fn rk4_with_hazard(state: &AtomState, h: f64, params: &LatticeParams) -> (AtomState, f64) {
    let y = [state.x, state.p, state.u, state.v, state.z];
    let trig = y[0].sin_cos();
    let k1 = rhs_with_trig(&y, trig, params);
    let y2 = axpy(&y, 0.5 * h, &k1);
    let k2 = rhs_with_trig(&y2, rotate(trig, y2[0] - y[0]), params);
    let y3 = axpy(&y, 0.5 * h, &k2);
    let k3 = rhs_with_trig(&y3, rotate(trig, y3[0] - y[0]), params);
    let y4 = axpy(&y, h, &k3);
    let k4 = rhs_with_trig(&y4, rotate(trig, y4[0] - y[0]), params);

    let w = h / 6.0;
    let mut out = [0.0; 5];
    for i in 0..5 {
        out[i] = y[i] + w * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
    }
    let hazard = 0.5
        * params.gamma
        * w
        * ((y[4] + 1.0) + 2.0 * ((y2[4] + 1.0) + (y3[4] + 1.0)) + (y4[4] + 1.0));

    (
        AtomState {
            x: out[0],
            p: out[1],
            u: out[2],
            v: out[3],
            z: out[4],
            tau: state.tau + h,
        },
        hazard,
    )
}

/// Classical fourth-order Runge-Kutta advance by `dtau`.
pub fn rk4_step(state: &AtomState, dtau: f64, params: &LatticeParams) -> AtomState {
    rk4_with_hazard(state, dtau, params).0
}

/// Fixed step size, checked once at setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    pub dtau: f64,
}

impl Integrator {
    pub fn new(dtau: f64) -> Result<Self> {
        if !(dtau > 0.0 && dtau <= MAX_DTAU) {
            return Err(Error::config(
                "ensemble.dtau",
                format!("step {dtau} outside (0, {MAX_DTAU}]"),
            ));
        }
        Ok(Self { dtau })
    }
}

impl Default for Integrator {
    fn default() -> Self {
        Self { dtau: DEFAULT_DTAU }
    }
}

/// Recoil momentum of one emission, uniform on `[-1, 1]`.
pub fn sample_recoil<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen_range(-1.0..=1.0)
}

/// Quantum jump: recoil kick plus reset to the ground state.
pub fn apply_jump(state: &AtomState, recoil: f64) -> Result<AtomState> {
    if !(recoil.abs() <= 1.0) {
        return Err(Error::Contract(format!("recoil {recoil} outside [-1, 1]")));
    }
    Ok(AtomState {
        p: state.p + recoil,
        u: 0.0,
        v: 0.0,
        z: -1.0,
        ..*state
    })
}

/// Deterministic evolution between jumps.
///
/// `advance` returns the new state and the jump hazard integrated over the step.
pub trait CoherentFlow {
    fn params(&self) -> &LatticeParams;
    fn advance(&self, state: &AtomState, h: f64) -> (AtomState, f64);
}

/// The physical flow, integrated with RK4.
#[derive(Debug, Clone, Copy)]
pub struct Rk4Flow {
    pub params: LatticeParams,
}

impl CoherentFlow for Rk4Flow {
    fn params(&self) -> &LatticeParams {
        &self.params
    }

    #[inline]
    fn advance(&self, state: &AtomState, h: f64) -> (AtomState, f64) {
        rk4_with_hazard(state, h, &self.params)
    }
}

/// Receives trajectory events in time order. Every method defaults to a no-op.
pub trait EventSink {
    fn on_jump(&mut self, _event: &SpontaneousEvent) {}
    fn on_sign_change(&mut self, _record: &StateRecord) {}
    fn on_sample(&mut self, _record: &StateRecord) {}
    /// Called after every (possibly partial) integration step.
    fn on_step(&mut self, _state: &AtomState, _dtau: f64) {}
}

impl EventSink for () {}

impl<S: EventSink + ?Sized> EventSink for &mut S {
    fn on_jump(&mut self, event: &SpontaneousEvent) {
        (**self).on_jump(event)
    }
    fn on_sign_change(&mut self, record: &StateRecord) {
        (**self).on_sign_change(record)
    }
    fn on_sample(&mut self, record: &StateRecord) {
        (**self).on_sample(record)
    }
    fn on_step(&mut self, state: &AtomState, dtau: f64) {
        (**self).on_step(state, dtau)
    }
}

impl<A: EventSink, B: EventSink> EventSink for (A, B) {
    fn on_jump(&mut self, event: &SpontaneousEvent) {
        self.0.on_jump(event);
        self.1.on_jump(event);
    }
    fn on_sign_change(&mut self, record: &StateRecord) {
        self.0.on_sign_change(record);
        self.1.on_sign_change(record);
    }
    fn on_sample(&mut self, record: &StateRecord) {
        self.0.on_sample(record);
        self.1.on_sample(record);
    }
    fn on_step(&mut self, state: &AtomState, dtau: f64) {
        self.0.on_step(state, dtau);
        self.1.on_step(state, dtau);
    }
}

/// A single Monte Carlo wavefunction trajectory.
///
/// Holds the hazard accumulator between calls to [`Trajectory::evolve_to`], so a
/// run split into several calls is identical to one call to the final time.
#[derive(Debug, Clone)]
pub struct Trajectory<F: CoherentFlow = Rk4Flow> {
    flow: F,
    integrator: Integrator,
    state: AtomState,
    hazard: f64,
    threshold: Option<f64>,
    last_jump_tau: f64,
    last_sign: f64,
    steps: u64,
    sample_every: u64,
    jumps: u64,
    aborted: bool,
}

impl Trajectory<Rk4Flow> {
    pub fn new(params: LatticeParams, integrator: Integrator, initial: AtomState) -> Self {
        Self::with_flow(Rk4Flow { params }, integrator, initial)
    }
}

impl<F: CoherentFlow> Trajectory<F> {
    pub fn with_flow(flow: F, integrator: Integrator, initial: AtomState) -> Self {
        Self {
            flow,
            integrator,
            state: initial,
            hazard: 0.0,
            threshold: None,
            last_jump_tau: initial.tau,
            last_sign: sign_of(initial.p),
            steps: 0,
            sample_every: 0,
            jumps: 0,
            aborted: false,
        }
    }

    /// Emit a state sample every `every` steps (0 disables sampling).
    pub fn sample_every(mut self, every: u64) -> Self {
        self.sample_every = every;
        self
    }

    pub fn state(&self) -> &AtomState {
        &self.state
    }

    pub fn jump_count(&self) -> u64 {
        self.jumps
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted
    }

    /// Advance to `tau_end`, interleaving emissions.
    pub fn evolve_to<R, S>(&mut self, tau_end: f64, rng: &mut R, sink: &mut S) -> Result<AtomState>
    where
        R: Rng + ?Sized,
        S: EventSink + ?Sized,
    {
        if self.aborted {
            return Err(Error::Aborted {
                tau: self.state.tau,
            });
        }
        if !(tau_end > self.state.tau) {
            return Err(Error::Contract(format!(
                "tau_end {tau_end} must exceed current tau {}",
                self.state.tau
            )));
        }
        let dtau = self.integrator.dtau;
        let end_slack = 1e-12 * tau_end.abs().max(1.0);
        let mut threshold = match self.threshold {
            Some(t) => t,
            None => draw_threshold(rng),
        };

        while tau_end - self.state.tau > end_slack {
            let start = self.state;
            let remaining = tau_end - start.tau;
            let last_step = remaining <= dtau;
            let h = if last_step { remaining } else { dtau };
            let (mut next, gained) = self.flow.advance(&start, h);
            if last_step {
                next.tau = tau_end;
            }

            if self.hazard + gained >= threshold {
                let (mut lo, mut hi) = (0.0, h);
                let mut at_jump = next;
                while hi - lo > JUMP_TIME_TOLERANCE {
                    let mid = 0.5 * (lo + hi);
                    let (s, g) = self.flow.advance(&start, mid);
                    if self.hazard + g >= threshold {
                        hi = mid;
                        at_jump = s;
                    } else {
                        lo = mid;
                    }
                }
                self.finish_step(&start, at_jump, hi, sink)?;
                self.jump(rng, sink)?;
                threshold = draw_threshold(rng);
            } else {
                self.hazard += gained;
                self.finish_step(&start, next, h, sink)?;
            }
        }
        self.threshold = Some(threshold);
        Ok(self.state)
    }

    fn finish_step<S: EventSink + ?Sized>(
        &mut self,
        start: &AtomState,
        next: AtomState,
        h: f64,
        sink: &mut S,
    ) -> Result<()> {
        if !next.is_finite() {
            self.aborted = true;
            return Err(Error::Aborted { tau: start.tau });
        }
        let params = *self.flow.params();
        let s = sign_of(next.p);
        if s != 0.0 {
            if self.last_sign != 0.0 && s != self.last_sign {
                let w = if start.p == 0.0 {
                    0.0
                } else {
                    start.p / (start.p - next.p)
                };
                let crossing = lerp(start, &next, w);
                sink.on_sign_change(&StateRecord {
                    state: crossing,
                    energy: energy(&crossing, &params),
                });
            }
            self.last_sign = s;
        }
        self.state = next;
        sink.on_step(&next, h);
        self.steps += 1;
        if self.sample_every > 0 && self.steps.is_multiple_of(self.sample_every) {
            sink.on_sample(&StateRecord {
                state: next,
                energy: energy(&next, &params),
            });
        }
        Ok(())
    }

    fn jump<R, S>(&mut self, rng: &mut R, sink: &mut S) -> Result<()>
    where
        R: Rng + ?Sized,
        S: EventSink + ?Sized,
    {
        let params = *self.flow.params();
        let pre = self.state;
        let recoil = sample_recoil(rng);
        let post = apply_jump(&pre, recoil)?;
        let post_energy = energy(&post, &params);
        sink.on_jump(&SpontaneousEvent {
            tau_event: pre.tau,
            pre_state: pre,
            recoil,
            interval: pre.tau - self.last_jump_tau,
            post_energy,
        });
        let s = sign_of(post.p);
        if s != 0.0 {
            if self.last_sign != 0.0 && s != self.last_sign {
                sink.on_sign_change(&StateRecord {
                    state: post,
                    energy: post_energy,
                });
            }
            self.last_sign = s;
        }
        self.state = post;
        self.hazard = 0.0;
        self.last_jump_tau = pre.tau;
        self.jumps += 1;
        Ok(())
    }
}

/// Evolve `state` to `tau_end` under the physical flow.
pub fn evolve<R, S>(
    state: AtomState,
    tau_end: f64,
    params: &LatticeParams,
    integrator: Integrator,
    rng: &mut R,
    sink: &mut S,
) -> Result<AtomState>
where
    R: Rng + ?Sized,
    S: EventSink + ?Sized,
{
    Trajectory::new(*params, integrator, state).evolve_to(tau_end, rng, sink)
}

fn draw_threshold<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the threshold is finite.
    -(1.0 - rng.gen::<f64>()).ln()
}

#[inline]
fn sign_of(p: f64) -> f64 {
    if p > 0.0 {
        1.0
    } else if p < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn lerp(a: &AtomState, b: &AtomState, w: f64) -> AtomState {
    let mix = |p: f64, q: f64| p + w * (q - p);
    AtomState {
        x: mix(a.x, b.x),
        p: mix(a.p, b.p),
        u: mix(a.u, b.u),
        v: mix(a.v, b.v),
        z: mix(a.z, b.z),
        tau: mix(a.tau, b.tau),
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn params(delta: f64) -> LatticeParams {
        LatticeParams::with_delta(delta)
    }

    #[test]
    fn derivs_ground_state_at_antinode() {
        let s = AtomState::ground(0.0, 0.0);
        let d = coherent_derivs(&s, &params(-0.001));
        assert_eq!(d.dx, 0.0);
        assert_eq!(d.dp, 0.0);
        assert_eq!(d.du, 0.0);
        assert_eq!(d.dv, -2.0);
        assert_eq!(d.dz, 0.0);
    }

    #[test]
    fn derivs_at_node() {
        let s = AtomState {
            x: FRAC_PI_2,
            p: 100.0,
            u: 1.0,
            v: 0.0,
            z: 0.0,
            tau: 0.0,
        };
        let d = coherent_derivs(&s, &params(0.0));
        assert_relative_eq!(d.dx, 1e-3, max_relative = 1e-12);
        assert_relative_eq!(d.dp, -1.0, max_relative = 1e-12);
        assert_eq!(d.du, 0.0);
        assert!(d.dv.abs() < 1e-15);
        assert_relative_eq!(d.dz, -1.65e-3, max_relative = 1e-12);
    }

    fn bloch_state() -> impl Strategy<Value = AtomState> {
        (
            -10.0..10.0f64,
            -1000.0..1000.0f64,
            0.0..std::f64::consts::PI,
            0.0..std::f64::consts::TAU,
        )
            .prop_map(|(x, p, theta, phi)| AtomState {
                x,
                p,
                u: theta.sin() * phi.cos(),
                v: theta.sin() * phi.sin(),
                z: theta.cos(),
                tau: 0.0,
            })
    }

    proptest! {
        #[test]
        fn coherent_flow_is_tangent_to_bloch_sphere(
            s in bloch_state(),
            delta in -1.0..1.0f64,
            gamma in 0.0..0.1f64,
        ) {
            let p = LatticeParams { delta, gamma, ..LatticeParams::default() };
            let d = coherent_derivs(&s, &p);
            let radial = s.u * d.du + s.v * d.dv + s.z * d.dz;
            prop_assert!(radial.abs() < 1e-14, "radial component {}", radial);
        }

        #[test]
        fn jump_resets_internal_state(s in bloch_state(), recoil in -1.0..=1.0f64) {
            let j = apply_jump(&s, recoil).unwrap();
            prop_assert_eq!(j.bloch_norm_sq(), 1.0);
            prop_assert_eq!(j.x, s.x);
            prop_assert_eq!(j.tau, s.tau);
            prop_assert_eq!(j.p, s.p + recoil);
        }
    }

    #[test]
    fn apply_jump_examples() {
        let s = AtomState {
            x: 0.3,
            p: 100.0,
            u: 0.5,
            v: -0.3,
            z: 0.2,
            tau: 7.0,
        };
        let j = apply_jump(&s, 0.7).unwrap();
        assert_relative_eq!(j.p, 100.7, max_relative = 1e-15);
        assert_eq!((j.u, j.v, j.z), (0.0, 0.0, -1.0));

        let g = AtomState::ground(1.0, 0.0);
        assert_eq!(apply_jump(&g, 0.0).unwrap(), g);
        assert!(apply_jump(&g, 1.5).is_err());
        assert!(apply_jump(&g, f64::NAN).is_err());
    }

    #[test]
    fn integrator_rejects_coarse_steps() {
        assert!(Integrator::new(0.05).is_ok());
        assert!(Integrator::new(0.051).is_err());
        assert!(Integrator::new(0.0).is_err());
    }

    #[test]
    fn recoil_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let r = sample_recoil(&mut rng);
            assert!((-1.0..=1.0).contains(&r));
            s1 += r;
            s2 += r * r;
        }
        let (m1, m2) = (s1 / n as f64, s2 / n as f64);
        assert!(m1.abs() < 3e-3, "mean {m1}");
        assert!((m2 - 1.0 / 3.0).abs() < 1e-3, "second moment {m2}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        // Richardson check against a dtau/10 reference on a smooth segment.
        let p = LatticeParams {
            gamma: 0.05,
            delta: 0.3,
            ..LatticeParams::default()
        };
        let theta: f64 = 1.1;
        let s0 = AtomState {
            x: 0.4,
            p: 3000.0,
            u: theta.sin(),
            v: 0.0,
            z: theta.cos(),
            tau: 0.0,
        };
        let span = 0.4;
        let run = |h: f64| {
            let n = (span / h).round() as usize;
            let mut s = s0;
            for _ in 0..n {
                s = rk4_step(&s, h, &p);
            }
            s
        };
        let err = |a: &AtomState, b: &AtomState| {
            ((a.u - b.u).powi(2) + (a.v - b.v).powi(2) + (a.z - b.z).powi(2)).sqrt()
        };
        let reference = run(0.1 / 10.0 / 4.0);
        let e1 = err(&run(0.1), &reference);
        let e2 = err(&run(0.05), &reference);
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "error ratio {ratio}");
    }

    #[test]
    fn no_jumps_from_dark_state() {
        // Ground state at a node: no coupling, zero hazard.
        let s = AtomState::ground(FRAC_PI_2, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut traj = Trajectory::new(params(-0.001), Integrator::default(), s);
        traj.evolve_to(1e4, &mut rng, &mut ()).unwrap();
        assert_eq!(traj.jump_count(), 0);
        assert_eq!(traj.state().z, -1.0);
    }

    #[derive(Default)]
    struct Collect {
        jumps: Vec<SpontaneousEvent>,
        signs: Vec<f64>,
    }

    impl EventSink for Collect {
        fn on_jump(&mut self, e: &SpontaneousEvent) {
            self.jumps.push(*e);
        }
        fn on_sign_change(&mut self, r: &StateRecord) {
            self.signs.push(r.state.tau);
        }
    }

    #[test]
    fn split_evolution_matches_single_call() {
        let s = AtomState::ground(0.3, 20.0);
        let p = params(-0.01);
        let mut a = Collect::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t1 = Trajectory::new(p, Integrator::default(), s);
        t1.evolve_to(5000.0, &mut rng, &mut a).unwrap();

        let mut b = Collect::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t2 = Trajectory::new(p, Integrator::default(), s);
        t2.evolve_to(2000.0, &mut rng, &mut b).unwrap();
        t2.evolve_to(5000.0, &mut rng, &mut b).unwrap();

        assert!(!a.jumps.is_empty());
        assert_eq!(a.jumps.len(), b.jumps.len());
        for (x, y) in a.jumps.iter().zip(&b.jumps) {
            assert!((x.tau_event - y.tau_event).abs() < JUMP_TIME_TOLERANCE);
        }
    }

    #[test]
    fn events_are_ordered_with_positive_intervals() {
        let s = AtomState::ground(0.3, 5.0);
        let mut sink = Collect::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        evolve(s, 2e4, &params(-0.001), Integrator::default(), &mut rng, &mut sink).unwrap();
        assert!(sink.jumps.len() > 5);
        for w in sink.jumps.windows(2) {
            assert!(w[1].tau_event > w[0].tau_event);
        }
        assert!(sink.jumps.iter().all(|e| e.interval > 0.0 && e.recoil.abs() <= 1.0));
        for w in sink.signs.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn rejects_backwards_target() {
        let mut traj = Trajectory::new(params(0.0), Integrator::default(), AtomState::ground(0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            traj.evolve_to(0.0, &mut rng, &mut ()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn non_finite_state_aborts() {
        let mut s = AtomState::ground(0.0, 0.0);
        s.p = f64::INFINITY;
        let mut traj = Trajectory::new(params(0.0), Integrator::default(), s);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = traj.evolve_to(10.0, &mut rng, &mut ()).unwrap_err();
        assert!(matches!(err, Error::Aborted { tau } if tau == 0.0));
        assert!(traj.is_aborted());
    }
}
