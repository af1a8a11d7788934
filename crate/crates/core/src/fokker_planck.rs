//! Drift-diffusion model of the energy walk.
//!
//! The density obeys `dP/dtau = -2c dP/dH + d/dH (D dP/dH)`, discretized on a
//! cell-centred finite-volume grid so that probability is conserved to
//! rounding. Time stepping is Crank-Nicolson with a few backward-Euler
//! half-steps at the start (Rannacher smoothing) to damp the oscillations CN
//! produces from point-like data. Note the factor 2 in the drift term: the
//! mean of the density moves at `2c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LatticeParams;

/// Analytic energy-space diffusion coefficient `omega_r H gamma / 12 + delta^2 / 16`.
/// Negative energies get the detuning term only.
pub fn analytic_diffusion(h: f64, params: &LatticeParams) -> f64 {
    let floor = params.delta * params.delta / params.diffusion_delta_divisor;
    floor + (params.omega_r * h.max(0.0) * params.gamma / 12.0)
}

/// Analytic drift `d<H>/dtau = omega_r gamma / 12 + delta gamma / 2`.
pub fn analytic_drift(params: &LatticeParams) -> f64 {
    params.omega_r * params.gamma / 12.0 + 0.5 * params.delta * params.gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Absorbing,
    Reflecting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    CrankNicolson,
    Explicit,
}

/// Where `D(H)` sits relative to the second derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionForm {
    /// `d/dH (D dP/dH)`, conserves probability exactly.
    Conservative,
    /// `D d2P/dH2`.
    NonConservative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpeGrid {
    pub h_min: f64,
    pub h_max: f64,
    pub n_cells: usize,
    pub dtau: f64,
    pub left: Boundary,
    pub right: Boundary,
    pub scheme: Scheme,
    pub form: DiffusionForm,
}

impl Default for FpeGrid {
    fn default() -> Self {
        Self {
            h_min: 0.0,
            h_max: 10.0,
            n_cells: 2000,
            dtau: 100.0,
            left: Boundary::Reflecting,
            right: Boundary::Reflecting,
            scheme: Scheme::CrankNicolson,
            form: DiffusionForm::Conservative,
        }
    }
}

impl FpeGrid {
    pub fn dh(&self) -> f64 {
        (self.h_max - self.h_min) / self.n_cells as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let dh = self.dh();
        (0..self.n_cells)
            .map(|i| self.h_min + (i as f64 + 0.5) * dh)
            .collect()
    }

    fn validate_shape(&self) -> Result<()> {
        if !(self.h_min < self.h_max) {
            return Err(Error::config("fpe.h_min", "need h_min < h_max"));
        }
        if self.n_cells < 16 {
            return Err(Error::config("fpe.n_cells", "need at least 16 cells"));
        }
        if !(self.dtau > 0.0) {
            return Err(Error::config("fpe.dtau", "must be positive"));
        }
        Ok(())
    }
}

/// Drift and diffusion as functions of energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Coefficients {
    Constant { c: f64, d: f64 },
    /// Analytic `D(H)` with the constant analytic drift.
    Analytic { params: LatticeParams },
    /// Tabulated `(H, D, c)`, interpolated linearly and held constant beyond the ends.
    Table { h: Vec<f64>, d: Vec<f64>, c: Vec<f64> },
}

impl Coefficients {
    pub fn table(h: Vec<f64>, d: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if h.is_empty() || h.len() != d.len() || h.len() != c.len() {
            return Err(Error::config("fpe.coefficients", "table columns must be non-empty and equally long"));
        }
        if h.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("fpe.coefficients", "table energies must increase"));
        }
        Ok(Coefficients::Table { h, d, c })
    }

    pub fn drift(&self, h: f64) -> f64 {
        match self {
            Coefficients::Constant { c, .. } => *c,
            Coefficients::Analytic { params } => analytic_drift(params),
            Coefficients::Table { h: hs, c, .. } => interpolate(hs, c, h),
        }
    }

    pub fn diffusion(&self, h: f64) -> f64 {
        match self {
            Coefficients::Constant { d, .. } => *d,
            Coefficients::Analytic { params } => analytic_diffusion(h, params),
            Coefficients::Table { h: hs, d, .. } => interpolate(hs, d, h),
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v < x);
    if k == 0 {
        return ys[0];
    }
    if k == xs.len() {
        return ys[xs.len() - 1];
    }
    let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + w * (ys[k] - ys[k - 1])
}

/// Number of backward-Euler half-steps before switching to Crank-Nicolson.
const SMOOTHING_HALF_STEPS: usize = 4;

/// Tridiagonal operator `dP/dtau = L P` and the boundary flux rows.
#[derive(Debug, Clone)]
struct Operator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    /// Outflow rate through the left face per unit density in cell 0.
    out_left: f64,
    /// Outflow rate through the right face per unit density in the last cell.
    out_right: f64,
}

impl Operator {
    fn build(grid: &FpeGrid, coeffs: &Coefficients) -> Self {
        let n = grid.n_cells;
        let dh = grid.dh();
        let face = |f: usize| grid.h_min + f as f64 * dh;
        let center = |i: usize| grid.h_min + (i as f64 + 0.5) * dh;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];

        match grid.form {
            DiffusionForm::Conservative => {
                // Flux through interior face f: J = a P[f-1] + b P[f].
                for f in 1..n {
                    let v = 2.0 * coeffs.drift(face(f));
                    let d = coeffs.diffusion(face(f));
                    let a = 0.5 * v + d / dh;
                    let b = 0.5 * v - d / dh;
                    // Cell f-1 loses J, cell f gains J.
                    diag[f - 1] -= a / dh;
                    upper[f - 1] -= b / dh;
                    lower[f] += a / dh;
                    diag[f] += b / dh;
                }
            }
            DiffusionForm::NonConservative => {
                for i in 0..n {
                    let v = 2.0 * coeffs.drift(center(i));
                    let d = coeffs.diffusion(center(i));
                    if i > 0 {
                        lower[i] = v / (2.0 * dh) + d / (dh * dh);
                        diag[i] -= d / (dh * dh);
                    }
                    if i + 1 < n {
                        upper[i] = -v / (2.0 * dh) + d / (dh * dh);
                        diag[i] -= d / (dh * dh);
                    }
                }
            }
        }

        // Absorbing faces: density vanishes on the face (ghost cell = -P).
        let mut out_left = 0.0;
        let mut out_right = 0.0;
        if grid.left == Boundary::Absorbing {
            out_left = 2.0 * coeffs.diffusion(face(0)) / dh;
            diag[0] -= out_left / dh;
        }
        if grid.right == Boundary::Absorbing {
            out_right = 2.0 * coeffs.diffusion(face(n)) / dh;
            diag[n - 1] -= out_right / dh;
        }
        Self {
            lower,
            diag,
            upper,
            out_left,
            out_right,
        }
    }

    fn apply(&self, p: &[f64], out: &mut [f64]) {
        let n = p.len();
        for i in 0..n {
            let mut acc = self.diag[i] * p[i];
            if i > 0 {
                acc += self.lower[i] * p[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * p[i + 1];
            }
            out[i] = acc;
        }
    }
}

/// Solve `(I - s L) x = rhs` in place (Thomas algorithm).
fn solve_shifted(op: &Operator, s: f64, rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    let a = |i: usize| -s * op.lower[i];
    let b = |i: usize| 1.0 - s * op.diag[i];
    let c = |i: usize| -s * op.upper[i];
    scratch[0] = c(0) / b(0);
    rhs[0] /= b(0);
    for i in 1..n {
        let m = b(i) - a(i) * scratch[i - 1];
        scratch[i] = c(i) / m;
        rhs[i] = (rhs[i] - a(i) * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

/// Time stepper holding the density and the mass absorbed at each boundary.
#[derive(Debug, Clone)]
pub struct FpeSolver {
    grid: FpeGrid,
    op: Operator,
    density: Vec<f64>,
    tau: f64,
    steps: usize,
    absorbed_left: f64,
    absorbed_right: f64,
    negativity_floor: f64,
    work: Vec<f64>,
    scratch: Vec<f64>,
}

impl FpeSolver {
    pub fn new(grid: FpeGrid, coeffs: &Coefficients, initial: Vec<f64>) -> Result<Self> {
        grid.validate_shape()?;
        check_grid(&grid, coeffs)?;
        if initial.len() != grid.n_cells {
            return Err(Error::Contract(format!(
                "initial density has {} cells, grid has {}",
                initial.len(),
                grid.n_cells
            )));
        }
        if initial.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Contract("initial density must be non-negative".into()));
        }
        let mass: f64 = initial.iter().sum::<f64>() * grid.dh();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("initial density integrates to {mass}, not 1")));
        }
        let peak = initial.iter().copied().fold(0.0, f64::max);
        let n = grid.n_cells;
        Ok(Self {
            op: Operator::build(&grid, coeffs),
            grid,
            density: initial,
            tau: 0.0,
            steps: 0,
            absorbed_left: 0.0,
            absorbed_right: 0.0,
            negativity_floor: -1e-12 * peak.max(1.0),
            work: vec![0.0; n],
            scratch: vec![0.0; n],
        })
    }

    pub fn grid(&self) -> &FpeGrid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn absorbed(&self) -> (f64, f64) {
        (self.absorbed_left, self.absorbed_right)
    }

    pub fn interior_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.grid.dh()
    }

    /// Advance one `dtau`; returns the mass absorbed at (left, right) during the step.
    pub fn step(&mut self) -> Result<(f64, f64)> {
        let dt = self.grid.dtau;
        let n = self.grid.n_cells;
        let (l0, r0) = (self.density[0], self.density[n - 1]);
        let (gain_left, gain_right) = match self.grid.scheme {
            Scheme::Explicit => {
                self.op.apply(&self.density, &mut self.work);
                for i in 0..n {
                    self.density[i] += dt * self.work[i];
                }
                (dt * self.op.out_left * l0, dt * self.op.out_right * r0)
            }
            Scheme::CrankNicolson if self.steps < SMOOTHING_HALF_STEPS / 2 => {
                let h = 0.5 * dt;
                let (mut gl, mut gr) = (0.0, 0.0);
                for _ in 0..2 {
                    solve_shifted(&self.op, h, &mut self.density, &mut self.scratch);
                    gl += h * self.op.out_left * self.density[0];
                    gr += h * self.op.out_right * self.density[n - 1];
                }
                (gl, gr)
            }
            Scheme::CrankNicolson => {
                let h = 0.5 * dt;
                self.op.apply(&self.density, &mut self.work);
                for i in 0..n {
                    self.work[i] = self.density[i] + h * self.work[i];
                }
                std::mem::swap(&mut self.work, &mut self.density);
                solve_shifted(&self.op, h, &mut self.density, &mut self.scratch);
                (
                    h * self.op.out_left * (l0 + self.density[0]),
                    h * self.op.out_right * (r0 + self.density[n - 1]),
                )
            }
        };
        self.absorbed_left += gain_left;
        self.absorbed_right += gain_right;
        self.tau += dt;
        self.steps += 1;
        if let Some((i, &p)) = self
            .density
            .iter()
            .enumerate()
            .find(|(_, &p)| p < self.negativity_floor || !p.is_finite())
        {
            return Err(Error::Numerical(format!(
                "density {p} in cell {i} at tau = {}",
                self.tau
            )));
        }
        Ok((gain_left, gain_right))
    }
}

/// Setup checks: grid Péclet number below 2 and drift Courant number at most 1/2;
/// the explicit scheme also needs the diffusive limit.
pub fn check_grid(grid: &FpeGrid, coeffs: &Coefficients) -> Result<()> {
    let dh = grid.dh();
    let mut max_d: f64 = 0.0;
    for f in 0..=grid.n_cells {
        let h = grid.h_min + f as f64 * dh;
        let c = coeffs.drift(h).abs();
        let d = coeffs.diffusion(h);
        if !(d >= 0.0) {
            return Err(Error::config("fpe.coefficients", format!("negative diffusion {d} at H = {h}")));
        }
        max_d = max_d.max(d);
        if c > 0.0 {
            let peclet = 2.0 * c * dh / d;
            if !(peclet < 2.0) {
                let cells = (grid.n_cells as f64 * peclet / 1.9).ceil();
                return Err(Error::config(
                    "fpe.n_cells",
                    format!("grid Péclet number {peclet:.3} at H = {h} must stay below 2; refine to at least {cells} cells"),
                ));
            }
            if grid.dtau > dh / (2.0 * c) {
                return Err(Error::config(
                    "fpe.dtau",
                    format!("time step {} exceeds dH/(2|c|) = {}", grid.dtau, dh / (2.0 * c)),
                ));
            }
        }
    }
    if grid.scheme == Scheme::Explicit && grid.dtau > dh * dh / (2.0 * max_d) {
        return Err(Error::config(
            "fpe.dtau",
            format!("explicit step {} exceeds dH^2/(2 max D) = {}", grid.dtau, dh * dh / (2.0 * max_d)),
        ));
    }
    Ok(())
}

/// Density concentrated at `h0`, split linearly between the two nearest cell centres.
pub fn point_density(grid: &FpeGrid, h0: f64) -> Result<Vec<f64>> {
    let dh = grid.dh();
    let pos = (h0 - grid.h_min) / dh - 0.5;
    if !(pos >= 0.0 && pos <= (grid.n_cells - 1) as f64) {
        return Err(Error::Contract(format!(
            "h0 = {h0} must lie between the first and last cell centres"
        )));
    }
    let i = (pos.floor() as usize).min(grid.n_cells - 2);
    let w = pos - i as f64;
    let mut p = vec![0.0; grid.n_cells];
    p[i] = (1.0 - w) / dh;
    p[i + 1] = w / dh;
    Ok(p)
}

/// Gaussian initial density, renormalized on the grid.
pub fn gaussian_density(grid: &FpeGrid, mean: f64, std: f64) -> Vec<f64> {
    let mut p: Vec<f64> = grid
        .centers()
        .iter()
        .map(|&h| (-0.5 * ((h - mean) / std).powi(2)).exp())
        .collect();
    let mass: f64 = p.iter().sum::<f64>() * grid.dh();
    p.iter_mut().for_each(|v| *v /= mass);
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tau: f64,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpeSolution {
    pub centers: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub absorbed_left: f64,
    pub absorbed_right: f64,
}

/// Evolve `initial` for `tau_span`, recording the density every `dtau_out` (and at the end).
pub fn solve_fpe(
    initial: Vec<f64>,
    coeffs: &Coefficients,
    grid: FpeGrid,
    tau_span: f64,
    dtau_out: f64,
) -> Result<FpeSolution> {
    let mut solver = FpeSolver::new(grid, coeffs, initial)?;
    let steps = (tau_span / grid.dtau).round() as usize;
    let every = ((dtau_out / grid.dtau).round() as usize).max(1);
    let mut snapshots = vec![Snapshot {
        tau: 0.0,
        density: solver.density().to_vec(),
    }];
    for k in 1..=steps {
        solver.step()?;
        if k % every == 0 || k == steps {
            snapshots.push(Snapshot {
                tau: solver.tau(),
                density: solver.density().to_vec(),
            });
        }
    }
    let (absorbed_left, absorbed_right) = solver.absorbed();
    Ok(FpeSolution {
        centers: grid.centers(),
        snapshots,
        absorbed_left,
        absorbed_right,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstPassage {
    /// Midpoints of the output intervals.
    pub times: Vec<f64>,
    /// Absorbed flux at the lower boundary, normalized by the total absorbed there.
    pub density: Vec<f64>,
    pub absorbed: f64,
    /// Probability neither absorbed at the lower boundary nor elsewhere by `tau_max`.
    pub remainder: f64,
    /// Set when more than half the mass is unabsorbed at `tau_max`.
    pub incomplete: bool,
}

/// First-passage density to the lower boundary (`grid.h_min`), starting at `h0`.
pub fn first_passage_pdf(
    h0: f64,
    coeffs: &Coefficients,
    mut grid: FpeGrid,
    tau_max: f64,
    dtau_out: f64,
) -> Result<FirstPassage> {
    if !(h0 > grid.h_min) {
        return Err(Error::Contract(format!("h0 = {h0} must lie above the absorbing boundary")));
    }
    grid.left = Boundary::Absorbing;
    let every = ((dtau_out / grid.dtau).round() as usize).max(1);
    let bin = every as f64 * grid.dtau;
    let bins = (tau_max / bin).floor() as usize;
    if bins == 0 {
        return Err(Error::config("fpe.tau_max", "shorter than one output interval"));
    }
    let mut solver = FpeSolver::new(grid, coeffs, point_density(&grid, h0)?)?;
    let mut flux = Vec::with_capacity(bins);
    for _ in 0..bins {
        let mut acc = 0.0;
        for _ in 0..every {
            acc += solver.step()?.0;
        }
        flux.push(acc);
    }
    let (left, _) = solver.absorbed();
    if !(left > 0.0) {
        return Err(Error::InsufficientData("no probability reached the boundary".into()));
    }
    let remainder = solver.interior_mass();
    Ok(FirstPassage {
        times: (0..bins).map(|k| (k as f64 + 0.5) * bin).collect(),
        density: flux.iter().map(|m| m / (bin * left)).collect(),
        absorbed: left,
        remainder,
        incomplete: remainder > 0.5,
    })
}

/// Normalized flight-duration density `A exp(-c^2 T / D) T^-1.5` on `[t_min, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightPdfModel {
    pub cutoff_rate: f64,
    pub t_min: f64,
    pub norm: f64,
}

impl FlightPdfModel {
    pub fn new(c: f64, d: f64, t_min: f64) -> Result<Self> {
        if !(d > 0.0) {
            return Err(Error::Contract(format!("diffusion {d} must be positive")));
        }
        if !(t_min > 0.0) {
            return Err(Error::Contract(format!("support start {t_min} must be positive")));
        }
        let k = c * c / d;
        // With T = t_min / s^2 the integral becomes 2 t_min^-1/2 ∫_0^1 exp(-k t_min / s^2) ds.
        let m = 4000;
        let a = k * t_min;
        let g = |s: f64| match (s == 0.0, a > 0.0) {
            (true, true) => 0.0,
            (true, false) => 1.0,
            _ => (-a / (s * s)).exp(),
        };
        let step = 1.0 / m as f64;
        let mut acc = g(0.0) + g(1.0);
        for i in 1..m {
            acc += g(i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = 2.0 / t_min.sqrt() * acc * step / 3.0;
        Ok(Self {
            cutoff_rate: k,
            t_min,
            norm: 1.0 / integral,
        })
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Contract(format!("duration {t} must be positive")));
        }
        if t < self.t_min {
            return Ok(0.0);
        }
        Ok(self.norm * (-self.cutoff_rate * t).exp() * t.powf(-1.5))
    }
}

/// Density of the flight model at `t` (see [`FlightPdfModel`]).
pub fn flight_pdf_model(t: f64, c: f64, d: f64, t_min: f64) -> Result<f64> {
    FlightPdfModel::new(c, d, t_min)?.density(t)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn analytic_coefficient_examples() {
        let p = LatticeParams::with_delta(-0.001);
        assert_relative_eq!(analytic_diffusion(1.0, &p), 6.525e-8, max_relative = 1e-12);
        assert_relative_eq!(analytic_diffusion(0.0, &p), 6.25e-8, max_relative = 1e-12);
        assert_relative_eq!(analytic_diffusion(-3.0, &p), 6.25e-8, max_relative = 1e-12);
        let p4 = LatticeParams::with_delta(-0.0001);
        assert_relative_eq!(analytic_diffusion(1.0, &p4), 3.375e-9, max_relative = 1e-12);

        assert_relative_eq!(analytic_drift(&p), 2.75e-9 - 1.65e-6, max_relative = 1e-12);
        assert!(analytic_drift(&LatticeParams::with_delta(0.0)) > 0.0);
        // Mean increment per emission divided by the mean interval 2 / gamma.
        let per_event = p.omega_r / 6.0 + p.delta;
        assert_relative_eq!(analytic_drift(&p), per_event * p.gamma / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_coefficients_leave_density_unchanged() {
        let grid = FpeGrid {
            n_cells: 64,
            dtau: 1.0,
            ..FpeGrid::default()
        };
        let p0 = gaussian_density(&grid, 5.0, 1.0);
        let sol = solve_fpe(p0.clone(), &Coefficients::Constant { c: 0.0, d: 0.0 }, grid, 50.0, 10.0).unwrap();
        assert_eq!(sol.snapshots.last().unwrap().density, p0);
    }

    #[test]
    fn reflecting_walls_conserve_mass() {
        let grid = FpeGrid {
            h_min: 0.0,
            h_max: 1.0,
            n_cells: 200,
            dtau: 0.5,
            ..FpeGrid::default()
        };
        let coeffs = Coefficients::Constant { c: -1e-4, d: 1e-4 };
        let mut s = FpeSolver::new(grid, &coeffs, point_density(&grid, 0.3).unwrap()).unwrap();
        for _ in 0..10_000 {
            s.step().unwrap();
        }
        assert!((s.interior_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn absorbed_plus_interior_is_one() {
        let grid = FpeGrid {
            h_min: 0.0,
            h_max: 1.0,
            n_cells: 200,
            dtau: 0.5,
            left: Boundary::Absorbing,
            right: Boundary::Absorbing,
            ..FpeGrid::default()
        };
        let coeffs = Coefficients::Analytic {
            params: LatticeParams {
                omega_r: 1e-2,
                ..LatticeParams::with_delta(-0.02)
            },
        };
        let mut s = FpeSolver::new(grid, &coeffs, point_density(&grid, 0.4).unwrap()).unwrap();
        for _ in 0..5000 {
            s.step().unwrap();
        }
        let (l, r) = s.absorbed();
        assert!(l > 0.01 && r > 0.0);
        assert!((s.interior_mass() + l + r - 1.0).abs() < 1e-10);
    }

    #[test]
    fn peclet_violation_suggests_refinement() {
        let grid = FpeGrid::default();
        let coeffs = Coefficients::Analytic {
            params: LatticeParams::with_delta(-1e-5),
        };
        let err = check_grid(&grid, &coeffs).unwrap_err();
        match err {
            Error::Config { key, message } => {
                assert_eq!(key, "fpe.n_cells");
                assert!(message.contains("refine"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn explicit_scheme_respects_diffusive_limit() {
        let grid = FpeGrid {
            n_cells: 100,
            dtau: 10.0,
            scheme: Scheme::Explicit,
            ..FpeGrid::default()
        };
        let coeffs = Coefficients::Constant { c: 0.0, d: 1e-1 };
        assert!(check_grid(&grid, &coeffs).is_err());
    }

    #[test]
    fn model_normalization_and_scaling() {
        let m = FlightPdfModel::new(0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(m.norm, 0.5, max_relative = 1e-9);
        for t in [1.0, 3.7, 250.0] {
            let r = m.density(2.0 * t).unwrap() / m.density(t).unwrap();
            assert_relative_eq!(r, 2f64.powf(-1.5), max_relative = 1e-12);
        }
        assert!(m.density(0.0).is_err());
        assert!(FlightPdfModel::new(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn table_coefficients_interpolate() {
        let t = Coefficients::table(vec![0.0, 1.0], vec![1.0, 3.0], vec![-1.0, -1.0]).unwrap();
        assert_eq!(t.diffusion(0.5), 2.0);
        assert_eq!(t.diffusion(-1.0), 1.0);
        assert_eq!(t.diffusion(7.0), 3.0);
        assert!(Coefficients::table(vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }
}
