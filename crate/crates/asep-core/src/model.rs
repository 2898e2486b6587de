//! Static model data: lattice state, boundary rate schedules and scaling
//! parameters, together with validation of the standing assumptions.
//!
//! Site indices are 0-based in code; documentation follows the 1-based
//! convention `η_1..η_N` where the two differ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Occupation state of the finite lattice, `η ∈ {0,1}^N`.
///
/// The size is fixed at construction and immutable over a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeConfig {
    occupations: Vec<u8>,
}

impl LatticeConfig {
    /// Empty lattice of `n` sites.
    pub fn empty(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidLattice(format!("size {n} < 2")));
        }
        Ok(Self {
            occupations: vec![0; n],
        })
    }

    /// Build from explicit occupations; every entry must be 0 or 1.
    pub fn from_occupations(occupations: Vec<u8>) -> Result<Self> {
        if occupations.len() < 2 {
            return Err(Error::InvalidLattice(format!(
                "size {} < 2",
                occupations.len()
            )));
        }
        if let Some(&bad) = occupations.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidLattice(format!("entry {bad} not in {{0,1}}")));
        }
        Ok(Self { occupations })
    }

    pub fn size(&self) -> usize {
        self.occupations.len()
    }

    /// Occupation of 0-based site `i`.
    #[inline]
    pub fn get(&self, i: usize) -> u8 {
        self.occupations[i]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, v: u8) {
        debug_assert!(v <= 1);
        self.occupations[i] = v;
    }

    /// Exchange the occupations of two sites (the configuration `η^{i,j}`).
    #[inline]
    pub fn swap_sites(&mut self, i: usize, j: usize) {
        self.occupations.swap(i, j);
    }

    pub fn occupations(&self) -> &[u8] {
        &self.occupations
    }

    /// Total particle number `Σ η_i`.
    pub fn particle_count(&self) -> u64 {
        self.occupations.iter().map(|&v| v as u64).sum()
    }
}

/// Boundary rate quadruple `(α, β, γ, δ)` on one schedule interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRates {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl BoundaryRates {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        for (name, v) in [
            ("alpha", alpha),
            ("beta", beta),
            ("gamma", gamma),
            ("delta", delta),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidSchedule(format!(
                    "rate {name} = {v} must be finite and nonnegative"
                )));
            }
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            delta,
        })
    }

    /// Left reservoir density `ρ_- = α/(α+γ)`.
    pub fn rho_minus(&self) -> f64 {
        self.alpha / (self.alpha + self.gamma)
    }

    /// Right reservoir density `ρ_+ = δ/(β+δ)`.
    pub fn rho_plus(&self) -> f64 {
        self.delta / (self.beta + self.delta)
    }

    fn min_rate(&self) -> f64 {
        self.alpha.min(self.beta).min(self.gamma).min(self.delta)
    }
}

/// Piecewise-constant-in-time boundary rates.
///
/// Intervals follow the left-closed, right-open convention: segment `j`
/// applies on `[t_j, t_{j+1})` and the last segment extends to infinity,
/// so any experiment horizon is covered. Negative times are out of range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    /// Segment start times, strictly increasing, first entry 0.
    breakpoints: Vec<f64>,
    /// Per-segment rate quadruples, same length as `breakpoints`.
    values: Vec<BoundaryRates>,
}

impl RateSchedule {
    pub fn new(segments: Vec<(f64, BoundaryRates)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidSchedule("no segments".into()));
        }
        if segments[0].0 != 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "first segment must start at t = 0, got {}",
                segments[0].0
            )));
        }
        for w in segments.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidSchedule(format!(
                    "breakpoints must be strictly increasing: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        let (breakpoints, values) = segments.into_iter().unzip();
        Ok(Self {
            breakpoints,
            values,
        })
    }

    /// Constant-in-time schedule.
    pub fn constant(rates: BoundaryRates) -> Self {
        Self {
            breakpoints: vec![0.0],
            values: vec![rates],
        }
    }

    /// Constant schedule with reservoir densities `(ρ_-, ρ_+)` realised by
    /// unit total flip rates: `α = ρ_-`, `γ = 1-ρ_-`, `β = 1-ρ_+`, `δ = ρ_+`.
    pub fn from_reservoir_densities(rho_minus: f64, rho_plus: f64) -> Result<Self> {
        for (name, v) in [("rho_minus", rho_minus), ("rho_plus", rho_plus)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::DensityOutOfRange {
                    name: if name == "rho_minus" {
                        "rho_minus"
                    } else {
                        "rho_plus"
                    },
                    value: v,
                });
            }
        }
        Ok(Self::constant(BoundaryRates {
            alpha: rho_minus,
            gamma: 1.0 - rho_minus,
            beta: 1.0 - rho_plus,
            delta: rho_plus,
        }))
    }

    /// Rates on the interval containing `t`.
    pub fn rates_at(&self, t: f64) -> Result<BoundaryRates> {
        let idx = self.segment_index(t)?;
        Ok(self.values[idx])
    }

    fn segment_index(&self, t: f64) -> Result<usize> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::TimeOutOfRange { t });
        }
        // partition_point: first breakpoint strictly greater than t
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        Ok(idx - 1)
    }

    /// First breakpoint strictly after `t`, if any.
    pub fn next_breakpoint_after(&self, t: f64) -> Option<f64> {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.breakpoints.get(idx).copied()
    }

    /// Reservoir densities `(ρ_-(t), ρ_+(t))`.
    pub fn reservoir_densities(&self, t: f64) -> Result<(f64, f64)> {
        let r = self.rates_at(t)?;
        Ok((r.rho_minus(), r.rho_plus()))
    }

    /// Infimum of all four rates over the whole schedule. The hydrodynamic
    /// statement assumes this is strictly positive; zero rates are still
    /// simulable (saturated reservoirs), so this is checked by validation
    /// rather than at construction.
    pub fn min_rate(&self) -> f64 {
        self.values
            .iter()
            .map(|r| r.min_rate())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, &BoundaryRates)> {
        self.breakpoints.iter().copied().zip(self.values.iter())
    }
}

/// Boundary parameters matching the projection of the infinite dynamics
/// with background densities `ρ̄_±`:
/// `α = (p+σ)ρ̄_-`, `γ = σ(1-ρ̄_-)`, `β = (p+σ)(1-ρ̄_+)`, `δ = σρ̄_+`.
pub fn liggett_rates(
    p: f64,
    sigma: f64,
    rho_bar_minus: f64,
    rho_bar_plus: f64,
) -> Result<RateSchedule> {
    if !(p > 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "liggett rates need p > 0 and sigma > 0, got p = {p}, sigma = {sigma}"
        )));
    }
    if !(0.0..=1.0).contains(&rho_bar_minus) {
        return Err(Error::DensityOutOfRange {
            name: "rho_bar_minus",
            value: rho_bar_minus,
        });
    }
    if !(0.0..=1.0).contains(&rho_bar_plus) {
        return Err(Error::DensityOutOfRange {
            name: "rho_bar_plus",
            value: rho_bar_plus,
        });
    }
    Ok(RateSchedule::constant(BoundaryRates {
        alpha: (p + sigma) * rho_bar_minus,
        gamma: sigma * (1.0 - rho_bar_minus),
        beta: (p + sigma) * (1.0 - rho_bar_plus),
        delta: sigma * rho_bar_plus,
    }))
}

/// How a scaling plan was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingMode {
    /// `σ_N = N^(5/7+κ)`, `K = ⌊N^(4/7+κ)⌋`, `κ ∈ (0, 2/7)`, `σ̃_N = N^θ`.
    Strict,
    /// Arbitrary `(σ_N, σ̃_N, K)`; validity ratios reported as advisories.
    Exploratory,
}

/// Drift, lattice size, mesoscopic block size and the two acceleration
/// sequences for one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPlan {
    /// Drift rate of the totally asymmetric part.
    pub p: f64,
    /// Lattice size.
    pub n: usize,
    /// Exponent κ (strict mode only).
    pub kappa: Option<f64>,
    /// Symmetric-exclusion acceleration `σ_N`.
    pub sigma: f64,
    /// Reservoir acceleration `σ̃_N`.
    pub sigma_tilde: f64,
    /// Mesoscopic block size.
    pub k: usize,
    pub mode: ScalingMode,
}

/// Floor with a one-ulp guard so that exact powers (e.g. `128^(4/7) = 2^4`
/// at κ = 1/7 ... `128^(5/7) = 32`) do not round down spuriously.
fn floor_guarded(x: f64) -> usize {
    (x * (1.0 + 1e-12)).floor() as usize
}

impl ScalingPlan {
    /// Strict plan: `σ_N = N^(5/7+κ)`, `K = ⌊N^(4/7+κ)⌋`, `σ̃_N = N^θ`.
    pub fn strict(n: usize, kappa: f64, p: f64, theta: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 2.0 / 7.0) {
            return Err(Error::InvalidScaling(format!(
                "strict mode requires kappa in (0, 2/7), got {kappa}"
            )));
        }
        if !(p > 0.0) {
            return Err(Error::InvalidScaling(format!("p = {p} must be positive")));
        }
        if !(theta > 0.0) {
            return Err(Error::InvalidScaling(format!(
                "theta = {theta} must be positive"
            )));
        }
        let nf = n as f64;
        let sigma = nf.powf(5.0 / 7.0 + kappa);
        let k = floor_guarded(nf.powf(4.0 / 7.0 + kappa));
        let plan = Self {
            p,
            n,
            kappa: Some(kappa),
            sigma,
            sigma_tilde: nf.powf(theta),
            k,
            mode: ScalingMode::Strict,
        };
        plan.check_block_size()?;
        Ok(plan)
    }

    /// Exploratory plan with explicit parameters. `σ_N` and `σ̃_N` may be
    /// zero (pure drift, closed boundaries) for small test systems.
    pub fn exploratory(n: usize, sigma: f64, sigma_tilde: f64, k: usize, p: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidScaling(format!("N = {n} < 2")));
        }
        if !(sigma >= 0.0) || !(sigma_tilde >= 0.0) || !(p >= 0.0) {
            return Err(Error::InvalidScaling(
                "sigma, sigma_tilde and p must be nonnegative".into(),
            ));
        }
        let plan = Self {
            p,
            n,
            kappa: None,
            sigma,
            sigma_tilde,
            k,
            mode: ScalingMode::Exploratory,
        };
        plan.check_block_size()?;
        Ok(plan)
    }

    fn check_block_size(&self) -> Result<()> {
        if self.k == 0 || 2 * self.k >= self.n {
            return Err(Error::BlockSizeOutOfRange {
                k: self.k,
                n: self.n,
            });
        }
        Ok(())
    }

    /// Validity report for the asymptotic assumptions.
    pub fn validate(&self) -> Result<ScalingReport> {
        self.check_block_size()?;
        let nf = self.n as f64;
        let kf = self.k as f64;
        let ratios = vec![
            ("N^(5/7)/sigma", nf.powf(5.0 / 7.0) / self.sigma),
            ("sigma/N", self.sigma / nf),
            ("N*sigma/K^3", nf * self.sigma / kf.powi(3)),
            ("N*K^2/sigma^3", nf * kf * kf / self.sigma.powi(3)),
            ("sigma^2/(N*K)", self.sigma * self.sigma / (nf * kf)),
        ];
        let mut advisories = Vec::new();
        for &(name, value) in &ratios {
            if !(value < 1.0) {
                advisories.push(format!(
                    "{name} = {value:.4} is not small; asymptotic validity degraded"
                ));
            }
        }
        if self.sigma_tilde < 1.0 {
            advisories.push(format!(
                "sigma_tilde = {} < 1: reservoirs are slowed rather than accelerated",
                self.sigma_tilde
            ));
        }
        let pass = match self.mode {
            ScalingMode::Strict => self
                .kappa
                .map(|k| k > 0.0 && k < 2.0 / 7.0)
                .unwrap_or(false),
            ScalingMode::Exploratory => true,
        };
        Ok(ScalingReport {
            ratios: ratios
                .into_iter()
                .map(|(n, v)| (n.to_string(), v))
                .collect(),
            advisories,
            pass,
        })
    }
}

/// Output of [`ScalingPlan::validate`]: the five validity ratios, advisory
/// flags for those that are not small, and the hard pass/fail verdict.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub ratios: Vec<(String, f64)>,
    pub advisories: Vec<String>,
    pub pass: bool,
}
