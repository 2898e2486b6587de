//! Entropy pairs and the admissibility checks built from them: interior
//! entropy production, the Otto boundary inequalities, the integral
//! inequality combining both, and the auxiliary boundary weight `α_N`.
//!
//! Entropy fluxes here satisfy `q'(u) = (1-2u) f'(u)` with no drift factor;
//! the drift `p` multiplies the spatial terms of each functional.

use crate::error::{Error, Result};
use crate::model::RateSchedule;
use crate::observables::{GridField, SpaceTimeField};
use crate::solver::resample;

/// Lax entropy flux pair `(f, q)` with `q' = J' f'`.
pub struct LaxPair {
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    q: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub convex: bool,
}

impl LaxPair {
    /// Build from `f` and `f'`; the flux is constructed by Simpson
    /// quadrature of `(1-2v) f'(v)` from 0, so compatibility holds by
    /// construction.
    pub fn from_entropy(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_prime: impl Fn(f64) -> f64 + Send + Sync + Clone + 'static,
        convex: bool,
    ) -> Self {
        let q = move |u: f64| simpson(0.0, u, 2000, |v| (1.0 - 2.0 * v) * f_prime(v));
        Self {
            f: Box::new(f),
            q: Box::new(q),
            convex,
        }
    }

    /// The conservation pair `(u, J(u))`, for which the entropy inequality
    /// is an equality (weak form of the equation itself).
    pub fn conservation() -> Self {
        Self {
            f: Box::new(|u| u),
            q: Box::new(|u| u * (1.0 - u)),
            convex: true,
        }
    }

    /// Section `(F(·,h), Q(·,h))` of a boundary pair.
    pub fn from_boundary_pair(pair: &dyn BoundaryPair, h: f64) -> Self {
        let (f, q) = pair.section(h);
        Self {
            f,
            q,
            convex: pair.convex(),
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn q(&self, u: f64) -> f64 {
        (self.q)(u)
    }
}

fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Two-variable boundary entropy pair `(F, Q)` vanishing to second order
/// on the diagonal, with `(F, Q)(·, w)` a Lax pair for every `w`.
pub trait BoundaryPair: Send + Sync {
    fn f(&self, u: f64, w: f64) -> f64;
    fn q(&self, u: f64, w: f64) -> f64;
    fn df_du(&self, u: f64, w: f64) -> f64;
    fn convex(&self) -> bool {
        true
    }

    /// Owned closures of the section at `w = h`.
    fn section(
        &self,
        h: f64,
    ) -> (
        Box<dyn Fn(f64) -> f64 + Send + Sync>,
        Box<dyn Fn(f64) -> f64 + Send + Sync>,
    );
}

/// Smoothed Kruzkov family `F_δ(u,w) = sqrt((u-w)² + δ²) - δ`, the
/// canonical C² boundary entropy; converges to `|u-w|` as δ → 0. The flux
/// has the closed form
/// `Q_δ = (1-2w)(R - δ) - s·R + δ²·asinh(s/δ)` with `s = u-w`,
/// `R = sqrt(s² + δ²)`.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedKruzkov {
    pub delta: f64,
}

impl SmoothedKruzkov {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Config(format!(
                "smoothing delta = {delta} must be positive"
            )));
        }
        Ok(Self { delta })
    }
}

impl BoundaryPair for SmoothedKruzkov {
    #[inline]
    fn f(&self, u: f64, w: f64) -> f64 {
        let s = u - w;
        (s * s + self.delta * self.delta).sqrt() - self.delta
    }

    #[inline]
    fn q(&self, u: f64, w: f64) -> f64 {
        let d = self.delta;
        let s = u - w;
        let r = (s * s + d * d).sqrt();
        (1.0 - 2.0 * w) * (r - d) - s * r + d * d * (s / d).asinh()
    }

    #[inline]
    fn df_du(&self, u: f64, w: f64) -> f64 {
        let s = u - w;
        s / (s * s + self.delta * self.delta).sqrt()
    }

    fn section(
        &self,
        h: f64,
    ) -> (
        Box<dyn Fn(f64) -> f64 + Send + Sync>,
        Box<dyn Fn(f64) -> f64 + Send + Sync>,
    ) {
        let a = *self;
        let b = *self;
        (Box::new(move |u| a.f(u, h)), Box::new(move |u| b.q(u, h)))
    }
}

/// Space-time test function with analytic derivatives and declared
/// support/positivity flags (verified on samples at construction sites).
pub struct TestFunction {
    value: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    dt: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    dx: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub horizon: f64,
    pub nonnegative: bool,
    pub compact_space: bool,
    pub compact_time: bool,
    pub vanishes_at_horizon: bool,
}

impl TestFunction {
    pub fn value(&self, t: f64, x: f64) -> f64 {
        (self.value)(t, x)
    }

    pub fn dt(&self, t: f64, x: f64) -> f64 {
        (self.dt)(t, x)
    }

    pub fn dx(&self, t: f64, x: f64) -> f64 {
        (self.dx)(t, x)
    }

    /// C^∞ bump supported on `(t0, t1) × (x0, x1)`.
    pub fn bump(horizon: f64, t0: f64, t1: f64, x0: f64, x1: f64) -> Self {
        let st = move |t: f64| (2.0 * t - (t0 + t1)) / (t1 - t0);
        let sx = move |x: f64| (2.0 * x - (x0 + x1)) / (x1 - x0);
        let value = move |t: f64, x: f64| bump1(st(t)) * bump1(sx(x));
        let dt = move |t: f64, x: f64| bump1_deriv(st(t)) * 2.0 / (t1 - t0) * bump1(sx(x));
        let dx = move |t: f64, x: f64| bump1(st(t)) * bump1_deriv(sx(x)) * 2.0 / (x1 - x0);
        Self {
            value: Box::new(value),
            dt: Box::new(dt),
            dx: Box::new(dx),
            horizon,
            nonnegative: true,
            compact_space: x0 > 0.0 && x1 < 1.0,
            compact_time: t0 > 0.0 && t1 < horizon,
            vanishes_at_horizon: t1 < horizon,
        }
    }

    /// `ψ(t, x) = 1 - t/T`: positive, space-independent, vanishes at the
    /// horizon. Not compactly supported.
    pub fn time_ramp(horizon: f64) -> Self {
        let t_inv = 1.0 / horizon;
        Self {
            value: Box::new(move |t, _| 1.0 - t * t_inv),
            dt: Box::new(move |_, _| -t_inv),
            dx: Box::new(|_, _| 0.0),
            horizon,
            nonnegative: true,
            compact_space: false,
            compact_time: false,
            vanishes_at_horizon: true,
        }
    }

    /// `ψ(t, x) = (1 - t/T) · (1 + cos(2π(x - c)))/2 ⊕ offset`: a smooth
    /// nonnegative profile with nontrivial spatial derivative that still
    /// touches the boundary points.
    pub fn time_ramp_cosine(horizon: f64, center: f64) -> Self {
        let t_inv = 1.0 / horizon;
        let tau = std::f64::consts::TAU;
        let shape = move |x: f64| 0.5 * (1.0 + (tau * (x - center)).cos());
        let shape_dx = move |x: f64| -0.5 * tau * (tau * (x - center)).sin();
        Self {
            value: Box::new(move |t, x| (1.0 - t * t_inv) * shape(x)),
            dt: Box::new(move |_, x| -t_inv * shape(x)),
            dx: Box::new(move |t, x| (1.0 - t * t_inv) * shape_dx(x)),
            horizon,
            nonnegative: true,
            compact_space: false,
            compact_time: false,
            vanishes_at_horizon: true,
        }
    }

    /// Verify declared flags on a sampling grid.
    pub fn verify_flags(&self, n_t: usize, n_x: usize) -> Result<()> {
        for it in 0..=n_t {
            let t = self.horizon * it as f64 / n_t as f64;
            for ix in 0..=n_x {
                let x = ix as f64 / n_x as f64;
                let v = self.value(t, x);
                if self.nonnegative && v < -1e-12 {
                    return Err(Error::TestFunctionContract(format!(
                        "negative value {v} at (t={t}, x={x})"
                    )));
                }
            }
            if self.compact_space {
                for x in [0.0, 1e-9, 1.0 - 1e-9, 1.0] {
                    if self.value(t, x).abs() > 1e-12 {
                        return Err(Error::TestFunctionContract(
                            "claimed compact spatial support but nonzero at the boundary".into(),
                        ));
                    }
                }
            }
        }
        if self.vanishes_at_horizon {
            for ix in 0..=n_x {
                let x = ix as f64 / n_x as f64;
                if self.value(self.horizon, x).abs() > 1e-12 {
                    return Err(Error::TestFunctionContract(
                        "claimed ψ(T,·) = 0 but nonzero at the horizon".into(),
                    ));
                }
            }
        }
        if self.compact_time {
            for ix in 0..=n_x {
                let x = ix as f64 / n_x as f64;
                if self.value(0.0, x).abs() > 1e-12 || self.value(self.horizon, x).abs() > 1e-12 {
                    return Err(Error::TestFunctionContract(
                        "claimed compact time support but nonzero at t = 0 or T".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn bump1(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

#[inline]
fn bump1_deriv(s: f64) -> f64 {
    if s.abs() < 1.0 {
        let d = 1.0 - s * s;
        (-1.0 / d).exp() * (-2.0 * s / (d * d))
    } else {
        0.0
    }
}

/// Quadrature weights: trapezoid along the sample times, cell-width
/// (midpoint) along space — the natural rule for cell-averaged fields,
/// which also makes the time-telescoping of exact solutions cancel
/// against the initial term of the Otto inequality.
fn time_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    if n == 1 {
        return w;
    }
    for i in 0..n - 1 {
        let dt = times[i + 1] - times[i];
        w[i] += 0.5 * dt;
        w[i + 1] += 0.5 * dt;
    }
    w
}

/// Interior entropy production `X^f(ν, ψ) = -∬ f(u) ∂_tψ - p ∬ q(u) ∂_xψ`
/// for the Dirac measure carried by the sampled field. Requires ψ
/// compactly supported in space and time.
pub fn entropy_production(
    field: &SpaceTimeField,
    pair: &LaxPair,
    psi: &TestFunction,
    p: f64,
) -> Result<f64> {
    if !psi.compact_space || !psi.compact_time {
        return Err(Error::TestFunctionContract(
            "entropy production requires compact support in (0,T)×(0,1)".into(),
        ));
    }
    psi.verify_flags(16, 16)?;
    let wt = time_weights(&field.times);
    let mut acc = 0.0;
    for (k, f) in field.fields.iter().enumerate() {
        if wt[k] == 0.0 {
            continue;
        }
        let t = field.times[k];
        let m = f.len();
        let dx = 1.0 / m as f64;
        let mut inner = 0.0;
        for (i, &u) in f.cells().iter().enumerate() {
            let x = (i as f64 + 0.5) * dx;
            inner += pair.f(u) * psi.dt(t, x) + p * pair.q(u) * psi.dx(t, x);
        }
        acc += wt[k] * inner * dx;
    }
    Ok(-acc)
}

/// Side of the domain for boundary checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Otto boundary functional `∫ Q(u(t, r), ρ_∓(t)) φ(t) dt` at a probe
/// offset `r` from the boundary (left side probes x = r against ρ_-, the
/// right side probes x = 1-r against ρ_+). Admissibility demands a
/// nonpositive value on the left and nonnegative on the right as r → 0⁺;
/// the raw value is returned and thresholds applied by callers.
pub fn otto_boundary_check(
    field: &SpaceTimeField,
    pair: &dyn BoundaryPair,
    schedule: &RateSchedule,
    side: Side,
    r: f64,
    phi: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::Config(format!(
            "probe offset r = {r} out of (0, 1/2)"
        )));
    }
    let wt = time_weights(&field.times);
    let mut acc = 0.0;
    for (k, f) in field.fields.iter().enumerate() {
        let t = field.times[k];
        let (rho_minus, rho_plus) = schedule.reservoir_densities(t)?;
        let (x, w) = match side {
            Side::Left => (r, rho_minus),
            Side::Right => (1.0 - r, rho_plus),
        };
        acc += wt[k] * pair.q(f.value_at(x), w) * phi(t);
    }
    Ok(acc)
}

/// The integral inequality for boundary entropy pairs: returns
/// `(lhs, rhs)` where admissibility requires `lhs <= rhs`:
///
/// lhs = -∬ F(u,h) ∂_tψ - p ∬ Q(u,h) ∂_xψ
/// rhs =  ∫ F(u0,h) ψ(0,·) dx + p ∫ F(ρ_-,h) ψ(·,0) dt + p ∫ F(ρ_+,h) ψ(·,1) dt
///
/// ψ must be nonnegative and vanish at the horizon (it need not vanish at
/// the lateral boundary).
pub fn otto_integral_inequality(
    field: &SpaceTimeField,
    pair: &dyn BoundaryPair,
    h: f64,
    psi: &TestFunction,
    u0: &GridField,
    schedule: &RateSchedule,
    p: f64,
) -> Result<(f64, f64)> {
    if !psi.nonnegative || !psi.vanishes_at_horizon {
        return Err(Error::TestFunctionContract(
            "the integral inequality needs ψ >= 0 and ψ(T,·) = 0".into(),
        ));
    }
    psi.verify_flags(16, 16)?;

    let wt = time_weights(&field.times);
    let mut lhs = 0.0;
    let mut boundary = 0.0;
    for (k, f) in field.fields.iter().enumerate() {
        let t = field.times[k];
        let m = f.len();
        let dx = 1.0 / m as f64;
        if wt[k] != 0.0 {
            let mut inner = 0.0;
            for (i, &u) in f.cells().iter().enumerate() {
                let x = (i as f64 + 0.5) * dx;
                inner += pair.f(u, h) * psi.dt(t, x) + p * pair.q(u, h) * psi.dx(t, x);
            }
            lhs -= wt[k] * inner * dx;
        }
        let (rho_minus, rho_plus) = schedule.reservoir_densities(t)?;
        boundary += wt[k]
            * p
            * (pair.f(rho_minus, h) * psi.value(t, 0.0) + pair.f(rho_plus, h) * psi.value(t, 1.0));
    }

    // initial term on the field's own grid so that exact solutions
    // telescope against lhs
    let m = field.fields[0].len();
    let u0_grid = resample(u0, m)?;
    let dx = 1.0 / m as f64;
    let initial: f64 = u0_grid
        .cells()
        .iter()
        .enumerate()
        .map(|(i, &u)| pair.f(u, h) * psi.value(0.0, (i as f64 + 0.5) * dx) * dx)
        .sum();

    Ok((lhs, initial + boundary))
}

/// The auxiliary boundary weight
/// `α_N(x) = 1 - (σ/(σ+1))^{Nx}` on `[0, δ_N]`,
/// `α_N(x) = 1 - ((σ-1)/σ)^{N(1-x)}` on `(δ_N, 1]`,
/// continuous at the kink `δ_N = log(σ/(σ-1)) / log((σ+1)/(σ-1))`.
#[derive(Debug, Clone, Copy)]
pub struct AuxiliaryWeight {
    pub n: usize,
    pub sigma: f64,
    pub delta_n: f64,
    log_left: f64,
    log_right: f64,
}

impl AuxiliaryWeight {
    pub fn new(n: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 1.0) {
            return Err(Error::Config(format!(
                "auxiliary weight needs sigma > 1, got {sigma}"
            )));
        }
        let delta_n = (sigma.ln() - (sigma - 1.0).ln()) / ((sigma + 1.0).ln() - (sigma - 1.0).ln());
        Ok(Self {
            n,
            sigma,
            delta_n,
            log_left: (sigma / (sigma + 1.0)).ln(),
            log_right: ((sigma - 1.0) / sigma).ln(),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let nf = self.n as f64;
        if x <= self.delta_n {
            1.0 - (nf * x * self.log_left).exp()
        } else {
            1.0 - (nf * (1.0 - x) * self.log_right).exp()
        }
    }

    /// One-sided derivative (left branch value at the kink).
    pub fn deriv(&self, x: f64) -> f64 {
        let nf = self.n as f64;
        if x <= self.delta_n {
            -nf * self.log_left * (nf * x * self.log_left).exp()
        } else {
            nf * self.log_right * (nf * (1.0 - x) * self.log_right).exp()
        }
    }

    /// `∫₀¹ |α'_N| dx` from the exact per-branch antiderivatives: the
    /// weight rises to its maximum at the kink and falls back to zero, so
    /// the total variation is `2 α_N(δ_N) < 2`.
    pub fn total_variation(&self) -> f64 {
        2.0 * self.eval(self.delta_n)
    }

    /// Numerical property report on a grid of `grid + 1` points.
    pub fn properties(&self, grid: usize) -> WeightReport {
        let mut in_range = true;
        let mut max_scaled_deriv: f64 = 0.0;
        for i in 0..=grid {
            let x = i as f64 / grid as f64;
            let v = self.eval(x);
            if !(0.0..1.0).contains(&v) && !(x == 0.0 || x == 1.0) {
                in_range = false;
            }
            if v < 0.0 || v >= 1.0 {
                in_range &= v == 0.0;
            }
            max_scaled_deriv =
                max_scaled_deriv.max(self.deriv(x).abs() * self.sigma / self.n as f64);
        }
        WeightReport {
            endpoints_zero: self.eval(0.0) == 0.0 && self.eval(1.0).abs() < 1e-300,
            in_unit_range: in_range,
            max_scaled_derivative: max_scaled_deriv,
            derivative_bound_ok: max_scaled_deriv <= 2.0 + 1e-12,
            total_variation: self.total_variation(),
            total_variation_ok: self.total_variation() <= 2.0 + 1e-12,
            delta_n: self.delta_n,
        }
    }
}

/// Checks of the auxiliary weight against its defining properties.
#[derive(Debug, Clone)]
pub struct WeightReport {
    pub endpoints_zero: bool,
    pub in_unit_range: bool,
    /// `max |α'_N| σ_N / N`, bounded by 2.
    pub max_scaled_derivative: f64,
    pub derivative_bound_ok: bool,
    pub total_variation: f64,
    pub total_variation_ok: bool,
    pub delta_n: f64,
}

impl WeightReport {
    pub fn all_ok(&self) -> bool {
        self.endpoints_zero
            && self.in_unit_range
            && self.derivative_bound_ok
            && self.total_variation_ok
    }
}
