//! Reference entropy solutions of `∂_t u + p ∂_x (u(1-u)) = 0` on [0,1]:
//! a first-order Godunov scheme with reservoir (ghost-cell) boundary data,
//! the analytic Riemann oracle, and the closed-form quasi-stationary
//! profile with its phase diagram.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::RateSchedule;
use crate::observables::{GridField, SpaceTimeField};

/// Drifted current `p · J(u)` with `J(u) = u(1-u)`: concave, symmetric
/// about the maximiser `u* = 1/2`, `J(u*) = 1/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxFn {
    pub p: f64,
}

impl FluxFn {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::Config(format!(
                "flux drift p = {p} must be positive"
            )));
        }
        Ok(Self { p })
    }

    /// Unit flux `J(u) = u(1-u)`.
    #[inline]
    pub fn value(u: f64) -> f64 {
        u * (1.0 - u)
    }

    /// `J'(u) = 1 - 2u`.
    #[inline]
    pub fn deriv(u: f64) -> f64 {
        1.0 - 2.0 * u
    }

    #[inline]
    pub fn scaled(&self, u: f64) -> f64 {
        self.p * Self::value(u)
    }
}

/// Godunov numerical flux for the concave flux: minimum of `p·J` over
/// `[u_l, u_r]` when `u_l <= u_r`, maximum over `[u_r, u_l]` otherwise.
/// Inputs are clamped to [0,1]; the caller tracks clamp warnings.
#[inline]
pub fn godunov_flux(u_left: f64, u_right: f64, flux: FluxFn) -> f64 {
    let ul = u_left.clamp(0.0, 1.0);
    let ur = u_right.clamp(0.0, 1.0);
    if ul <= ur {
        flux.p * FluxFn::value(ul).min(FluxFn::value(ur))
    } else if ur <= 0.5 && 0.5 <= ul {
        flux.p * 0.25
    } else {
        flux.p * FluxFn::value(ul).max(FluxFn::value(ur))
    }
}

/// Explicit conservative finite-volume state.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub u: GridField,
    pub t: f64,
    pub cfl: f64,
    pub flux: FluxFn,
    /// Count of cell values seen outside [0,1] beyond round-off.
    pub clamp_warnings: u64,
}

impl SolverState {
    pub fn new(u0: GridField, flux: FluxFn, cfl: f64) -> Result<Self> {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(Error::Config(format!("cfl = {cfl} must lie in (0, 1]")));
        }
        Ok(Self {
            u: u0,
            t: 0.0,
            cfl,
            flux,
            clamp_warnings: 0,
        })
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.u.len() as f64
    }

    /// Largest stable step: `cfl · Δx / (p · max|J'|) = cfl · Δx / p`.
    pub fn max_dt(&self) -> f64 {
        self.cfl * self.dx() / self.flux.p
    }

    /// One conservative update with ghost cells carrying the reservoir
    /// densities. Returns the two boundary fluxes used.
    pub fn advance(&mut self, dt: f64, rho_minus: f64, rho_plus: f64) -> Result<(f64, f64)> {
        let limit = self.max_dt();
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit });
        }
        let m = self.u.len();
        let dx = self.dx();
        let cells = self.u.cells_mut();
        for &v in cells.iter() {
            if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                self.clamp_warnings += 1;
            }
        }
        let mut fluxes = Vec::with_capacity(m + 1);
        fluxes.push(godunov_flux(rho_minus, cells[0], self.flux));
        for i in 1..m {
            fluxes.push(godunov_flux(cells[i - 1], cells[i], self.flux));
        }
        fluxes.push(godunov_flux(cells[m - 1], rho_plus, self.flux));
        let lambda = dt / dx;
        for i in 0..m {
            cells[i] -= lambda * (fluxes[i + 1] - fluxes[i]);
        }
        self.t += dt;
        Ok((fluxes[0], fluxes[m]))
    }
}

/// Output of [`solve`]: the sampled solution plus the exact time integrals
/// of the two boundary fluxes (for conservation accounting).
#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub field: SpaceTimeField,
    pub flux_integral: (f64, f64),
    pub clamp_warnings: u64,
}

/// Resample a profile onto `m` cells: restriction when coarsening, exact
/// piecewise-constant refinement otherwise.
pub fn resample(u: &GridField, m: usize) -> Result<GridField> {
    if m <= u.len() {
        u.restrict(m)
    } else {
        Ok(GridField::from_fn(m, |x| u.value_at(x)))
    }
}

/// March the Godunov scheme to `horizon`, snapping steps to schedule
/// breakpoints and requested sampling times so the boundary data is
/// constant within every step. `sample_times` must be sorted.
pub fn solve(
    u0: &GridField,
    schedule: &RateSchedule,
    flux: FluxFn,
    horizon: f64,
    m: usize,
    sample_times: &[f64],
    cfl: f64,
) -> Result<SolverOutput> {
    if u0.cells().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::DensityOutOfRange {
            name: "u0",
            value: f64::NAN,
        });
    }
    let mut state = SolverState::new(resample(u0, m)?, flux, cfl)?;
    let mut times = Vec::with_capacity(sample_times.len());
    let mut fields = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0usize;
    let mut flux_left = 0.0;
    let mut flux_right = 0.0;

    loop {
        while next_sample < sample_times.len() && sample_times[next_sample] <= state.t + 1e-13 {
            times.push(sample_times[next_sample]);
            fields.push(state.u.clone());
            next_sample += 1;
        }
        if state.t >= horizon - 1e-13 {
            break;
        }
        let mut dt = state.max_dt().min(horizon - state.t);
        if let Some(tb) = schedule.next_breakpoint_after(state.t) {
            dt = dt.min(tb - state.t);
        }
        if next_sample < sample_times.len() {
            dt = dt.min(sample_times[next_sample] - state.t);
        }
        let (rho_minus, rho_plus) = schedule.reservoir_densities(state.t)?;
        let (fl, fr) = state.advance(dt, rho_minus, rho_plus)?;
        flux_left += fl * dt;
        flux_right += fr * dt;
    }

    Ok(SolverOutput {
        field: SpaceTimeField::new(times, fields)?,
        flux_integral: (flux_left, flux_right),
        clamp_warnings: state.clamp_warnings,
    })
}

/// Exact similarity solution of the Riemann problem with jump at `x0`,
/// sampled at cell centers of an `m`-cell grid.
pub fn riemann_exact(
    u_left: f64,
    u_right: f64,
    flux: FluxFn,
    x0: f64,
    t: f64,
    m: usize,
) -> GridField {
    GridField::from_fn(m, |x| riemann_value(u_left, u_right, flux, x0, t, x))
}

/// Pointwise Riemann solution value at `(t, x)`.
pub fn riemann_value(u_left: f64, u_right: f64, flux: FluxFn, x0: f64, t: f64, x: f64) -> f64 {
    if u_left == u_right || t <= 0.0 {
        return if x < x0 { u_left } else { u_right };
    }
    if u_left < u_right {
        // admissible shock: J'(u_l) > s > J'(u_r)
        let s = flux.p * (FluxFn::value(u_right) - FluxFn::value(u_left)) / (u_right - u_left);
        if x - x0 < s * t {
            u_left
        } else {
            u_right
        }
    } else {
        // rarefaction fan between the characteristic speeds
        let xi = (x - x0) / t;
        let lo = flux.p * FluxFn::deriv(u_left);
        let hi = flux.p * FluxFn::deriv(u_right);
        if xi <= lo {
            u_left
        } else if xi >= hi {
            u_right
        } else {
            (1.0 - xi / flux.p) / 2.0
        }
    }
}

/// Steady-state phase of constant reservoir densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    LowDensity,
    HighDensity,
    MaxCurrent,
    CriticalLine,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::LowDensity => "low-density",
            Phase::HighDensity => "high-density",
            Phase::MaxCurrent => "max-current",
            Phase::CriticalLine => "critical-line",
        }
    }
}

/// Quasi-stationary bulk state for boundary densities `(ρ_-, ρ_+)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub phase: Phase,
    /// Bulk density; unset on the critical line (random located shock).
    pub u_bar: Option<f64>,
    /// `p · J(u_bar)`; on the critical line both candidate densities carry
    /// the same current `p · J(ρ_-)`.
    pub current: f64,
}

const CRITICAL_TOL: f64 = 1e-12;

/// Closed-form quasi-stationary profile:
/// `ū = ρ_-` (low density), `ū = ρ_+` (high density), `ū = 1/2`
/// (max current), with the critical line `ρ_- < 1/2, ρ_- + ρ_+ = 1`
/// flagged rather than resolved.
pub fn quasi_stationary_profile(rho_minus: f64, rho_plus: f64, flux: FluxFn) -> Result<PhasePoint> {
    if !(0.0..=1.0).contains(&rho_minus) {
        return Err(Error::DensityOutOfRange {
            name: "rho_minus",
            value: rho_minus,
        });
    }
    if !(0.0..=1.0).contains(&rho_plus) {
        return Err(Error::DensityOutOfRange {
            name: "rho_plus",
            value: rho_plus,
        });
    }
    let (phase, u_bar) = if rho_minus < 0.5 && (rho_minus + rho_plus - 1.0).abs() <= CRITICAL_TOL {
        (Phase::CriticalLine, None)
    } else if rho_minus < 0.5 && rho_minus < 1.0 - rho_plus {
        (Phase::LowDensity, Some(rho_minus))
    } else if rho_plus > 0.5 && rho_plus > 1.0 - rho_minus {
        (Phase::HighDensity, Some(rho_plus))
    } else {
        debug_assert!(rho_minus >= 0.5 && rho_plus <= 0.5);
        (Phase::MaxCurrent, Some(0.5))
    };
    let current = flux.scaled(u_bar.unwrap_or(rho_minus));
    Ok(PhasePoint {
        rho_minus,
        rho_plus,
        phase,
        u_bar,
        current,
    })
}
