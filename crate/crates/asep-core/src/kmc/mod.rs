//! Exact event-driven simulation of the time-inhomogeneous open-boundary
//! exclusion process, with per-event bookkeeping of the bond counting
//! processes.
//!
//! Piecewise-constant boundary schedules are simulated exactly: whenever a
//! proposed waiting time crosses a schedule breakpoint, the clock advances
//! to the breakpoint, boundary rates are rebuilt and the exponential clock
//! restarts (memorylessness makes the restart exact). Equal-occupation
//! symmetric swaps are identities on the state and are elided from the
//! event table; this changes the event count but not the law.

mod rate_tree;

pub use rate_tree::RateTree;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::{BoundaryRates, LatticeConfig, RateSchedule, ScalingPlan};
use crate::observables::GridField;

/// Generator time-dilation factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeDilation {
    /// `N L_{N,t}` — the hyperbolic (hydrodynamic) scale.
    Hydrodynamic,
    /// `N^(1+a) L_{N,t}` — the quasi-static scale.
    QuasiStatic { a: f64 },
}

impl TimeDilation {
    pub fn factor(&self, n: usize) -> f64 {
        match self {
            TimeDilation::Hydrodynamic => n as f64,
            TimeDilation::QuasiStatic { a } => (n as f64).powf(1.0 + a),
        }
    }
}

/// Splitmix64 step, used to derive independent replica seeds from a master
/// seed. Replica `r` uses `replica_seed(master, r)`.
pub fn replica_seed(master: u64, replica: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(replica.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Simulation clock: current macroscopic time, the generator dilation and
/// the deterministic generator state. Identical seeds and parameters give
/// bit-identical trajectories.
#[derive(Debug, Clone)]
pub struct SimClock {
    pub t: f64,
    pub time_dilation: f64,
    pub rng_seed: u64,
    rng: ChaCha8Rng,
}

impl SimClock {
    pub fn new(dilation: TimeDilation, n: usize, seed: u64) -> Self {
        Self {
            t: 0.0,
            time_dilation: dilation.factor(n),
            rng_seed: seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Bond counting processes `h_±(i, t)`, i = 0..N.
///
/// `h_plus[i]` counts jumps i → i+1 across interior bonds; at the ends it
/// counts creations at site 1 (i = 0) and annihilations at site N (i = N).
/// `h_minus` is the mirror.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountingState {
    pub h_plus: Vec<u64>,
    pub h_minus: Vec<u64>,
}

impl CountingState {
    pub fn new(n: usize) -> Self {
        Self {
            h_plus: vec![0; n + 1],
            h_minus: vec![0; n + 1],
        }
    }

    /// Net count `h(i) = h_+(i) - h_-(i)`.
    pub fn net(&self, i: usize) -> i64 {
        self.h_plus[i] as i64 - self.h_minus[i] as i64
    }
}

/// Rate table for every possible transition: N-1 bond entries flanked by
/// the two reservoir flip entries, indexed 0 (left flip), 1..N-1 (bond
/// between sites i-1 and i, 0-based), N (right flip). Backed by a sum tree
/// for O(log N) sampling and update.
#[derive(Debug, Clone)]
pub struct EventRateTable {
    tree: RateTree,
    n: usize,
    p: f64,
    sigma: f64,
    sigma_tilde: f64,
    dilation: f64,
    rates: BoundaryRates,
}

impl EventRateTable {
    pub fn build(
        config: &LatticeConfig,
        rates: BoundaryRates,
        plan: &ScalingPlan,
        dilation: f64,
    ) -> Self {
        let n = config.size();
        let mut table = Self {
            tree: RateTree::new(&vec![0.0; n + 1]),
            n,
            p: plan.p,
            sigma: plan.sigma,
            sigma_tilde: plan.sigma_tilde,
            dilation,
            rates,
        };
        let entries: Vec<f64> = (0..=n).map(|i| table.entry_value(config, i)).collect();
        table.tree = RateTree::new(&entries);
        table
    }

    #[inline]
    fn entry_value(&self, config: &LatticeConfig, i: usize) -> f64 {
        if i == 0 {
            let occ = config.get(0);
            let flip = if occ == 0 {
                self.rates.alpha
            } else {
                self.rates.gamma
            };
            self.dilation * self.sigma_tilde * flip
        } else if i == self.n {
            let occ = config.get(self.n - 1);
            let flip = if occ == 0 {
                self.rates.delta
            } else {
                self.rates.beta
            };
            self.dilation * self.sigma_tilde * flip
        } else {
            let (l, r) = (config.get(i - 1), config.get(i));
            if l == r {
                0.0
            } else {
                self.dilation * (self.sigma + if l == 1 { self.p } else { 0.0 })
            }
        }
    }

    #[inline]
    fn refresh(&mut self, config: &LatticeConfig, i: usize) {
        let v = self.entry_value(config, i);
        self.tree.set(i, v);
    }

    /// Recompute a contiguous block of entries with one ancestor walk.
    #[inline]
    fn refresh_block(&mut self, config: &LatticeConfig, lo: usize, count: usize) {
        debug_assert!(count <= 3);
        let mut values = [0.0; 3];
        for j in 0..count {
            values[j] = self.entry_value(config, lo + j);
        }
        self.tree.set_block(lo, &values[..count]);
    }

    /// Install the boundary rates of a new schedule interval.
    pub fn set_boundary_rates(&mut self, config: &LatticeConfig, rates: BoundaryRates) {
        self.rates = rates;
        self.refresh(config, 0);
        self.refresh(config, self.n);
    }

    pub fn total(&self) -> f64 {
        self.tree.total()
    }

    pub fn entry(&self, i: usize) -> f64 {
        self.tree.get(i)
    }

    pub fn rebuild(&mut self) {
        self.tree.rebuild();
    }

    pub fn consistency_error(&self) -> f64 {
        let total = self.tree.total();
        if total == 0.0 {
            return 0.0;
        }
        (total - self.tree.leaf_sum()).abs() / total
    }
}

/// Descriptor of one applied transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    /// Particle moved across the bond between 0-based sites `site` and
    /// `site + 1`; `to_right` tells the direction.
    BondSwap { site: usize, to_right: bool },
    /// Reservoir flip at the left (site 1) or right (site N) end;
    /// `created` tells creation vs annihilation.
    BoundaryFlip { left: bool, created: bool },
    /// Clock advanced to a schedule breakpoint; no transition fired.
    ScheduleAdvance { t: f64 },
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    Transition { t: f64 },
    Breakpoint { t: f64 },
    Absorbed,
}

/// Observation/bookkeeping options for [`Simulation::run`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub horizon: f64,
    /// Sorted sampling times within [0, horizon].
    pub sample_times: Vec<f64>,
    pub record_occupations: bool,
    pub record_counting: bool,
    pub event_budget: u64,
}

impl RunOptions {
    /// `count` uniform samples on [0, T], including both endpoints.
    pub fn uniform(horizon: f64, count: usize) -> Self {
        let sample_times = if count <= 1 || horizon == 0.0 {
            vec![0.0]
        } else {
            (0..count)
                .map(|i| horizon * i as f64 / (count - 1) as f64)
                .collect()
        };
        Self {
            horizon,
            sample_times,
            record_occupations: true,
            record_counting: false,
            event_budget: 2_000_000_000,
        }
    }

    pub fn with_counting(mut self) -> Self {
        self.record_counting = true;
        self
    }
}

/// Time-stamped observable stream from one replica.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub times: Vec<f64>,
    /// Occupation snapshots at `times` (empty if not recorded).
    pub snapshots: Vec<LatticeConfig>,
    /// Counting snapshots at `times` (empty if not recorded).
    pub counting: Vec<CountingState>,
    pub initial: LatticeConfig,
    pub final_config: LatticeConfig,
    pub final_counting: CountingState,
    pub event_count: u64,
    /// Exact time integrals `∫ (α+γ)(η_1 - ρ_-(t)) dt` and
    /// `∫ (β+δ)(η_N - ρ_+(t)) dt` over [0, t_end].
    pub boundary_mismatch: (f64, f64),
    /// False when the event budget ran out before the horizon; the record
    /// then covers [0, `truncated_at`].
    pub complete: bool,
    pub truncated_at: Option<f64>,
}

/// Per-segment quantities cached off the hot loop.
#[derive(Debug, Clone, Copy)]
struct SegmentCache {
    alpha_plus_gamma: f64,
    rho_minus: f64,
    beta_plus_delta: f64,
    rho_plus: f64,
}

impl SegmentCache {
    fn from(rates: &BoundaryRates) -> Self {
        Self {
            alpha_plus_gamma: rates.alpha + rates.gamma,
            rho_minus: rates.rho_minus(),
            beta_plus_delta: rates.beta + rates.delta,
            rho_plus: rates.rho_plus(),
        }
    }
}

/// One exclusion-process replica: configuration, rate table, clock and
/// counters evolving together. Strictly sequential; replicas are
/// independent and can run in parallel.
pub struct Simulation {
    pub config: LatticeConfig,
    pub table: EventRateTable,
    pub clock: SimClock,
    pub counting: CountingState,
    schedule: RateSchedule,
    segment: SegmentCache,
    mismatch_left: f64,
    mismatch_right: f64,
    event_count: u64,
}

impl Simulation {
    pub fn new(
        config: LatticeConfig,
        schedule: RateSchedule,
        plan: &ScalingPlan,
        dilation: TimeDilation,
        seed: u64,
    ) -> Result<Self> {
        if config.size() != plan.n {
            return Err(Error::InvalidLattice(format!(
                "lattice size {} does not match plan N = {}",
                config.size(),
                plan.n
            )));
        }
        let clock = SimClock::new(dilation, plan.n, seed);
        let rates = schedule.rates_at(0.0)?;
        let table = EventRateTable::build(&config, rates, plan, clock.time_dilation);
        let counting = CountingState::new(plan.n);
        Ok(Self {
            config,
            table,
            clock,
            counting,
            schedule,
            segment: SegmentCache::from(&rates),
            mismatch_left: 0.0,
            mismatch_right: 0.0,
            event_count: 0,
        })
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    fn propose(&mut self) -> Result<Pending> {
        let total = self.table.total();
        if total <= 0.0 {
            return match self.schedule.next_breakpoint_after(self.clock.t) {
                Some(t) => Ok(Pending::Breakpoint { t }),
                None => Ok(Pending::Absorbed),
            };
        }
        let exp: f64 = self.clock.rng.sample(Exp1);
        let t_event = self.clock.t + exp / total;
        if let Some(tb) = self.schedule.next_breakpoint_after(self.clock.t) {
            if t_event >= tb {
                return Ok(Pending::Breakpoint { t: tb });
            }
        }
        Ok(Pending::Transition { t: t_event })
    }

    /// Advance the clock to `t`, accumulating the boundary mismatch
    /// integrals over the constant stretch.
    #[inline]
    fn advance_clock(&mut self, t: f64) {
        let dt = t - self.clock.t;
        if dt > 0.0 {
            let n = self.config.size();
            let seg = self.segment;
            self.mismatch_left +=
                seg.alpha_plus_gamma * (self.config.get(0) as f64 - seg.rho_minus) * dt;
            self.mismatch_right +=
                seg.beta_plus_delta * (self.config.get(n - 1) as f64 - seg.rho_plus) * dt;
        }
        self.clock.t = t;
    }

    fn apply(&mut self, pending: Pending) -> Result<Event> {
        match pending {
            Pending::Absorbed => Err(Error::AbsorbingState { t: self.clock.t }),
            Pending::Breakpoint { t } => {
                self.advance_clock(t);
                let rates = self.schedule.rates_at(t)?;
                self.table.set_boundary_rates(&self.config, rates);
                self.segment = SegmentCache::from(&rates);
                Ok(Event::ScheduleAdvance { t })
            }
            Pending::Transition { t } => {
                self.advance_clock(t);
                let total = self.table.total();
                let r = self.clock.rng.gen::<f64>() * total;
                let idx = self.table.tree.sample(r);
                self.event_count += 1;
                let n = self.config.size();
                let event = if idx == 0 {
                    let created = self.config.get(0) == 0;
                    self.config.set(0, if created { 1 } else { 0 });
                    if created {
                        self.counting.h_plus[0] += 1;
                    } else {
                        self.counting.h_minus[0] += 1;
                    }
                    self.table.refresh_block(&self.config, 0, 2);
                    Event::BoundaryFlip {
                        left: true,
                        created,
                    }
                } else if idx == n {
                    let created = self.config.get(n - 1) == 0;
                    self.config.set(n - 1, if created { 1 } else { 0 });
                    // sign convention: h_+(N) counts annihilations at N
                    if created {
                        self.counting.h_minus[n] += 1;
                    } else {
                        self.counting.h_plus[n] += 1;
                    }
                    self.table.refresh_block(&self.config, n - 1, 2);
                    Event::BoundaryFlip {
                        left: false,
                        created,
                    }
                } else {
                    let to_right = self.config.get(idx - 1) == 1;
                    self.config.swap_sites(idx - 1, idx);
                    if to_right {
                        self.counting.h_plus[idx] += 1;
                    } else {
                        self.counting.h_minus[idx] += 1;
                    }
                    self.table.refresh_block(&self.config, idx - 1, 3);
                    Event::BondSwap {
                        site: idx - 1,
                        to_right,
                    }
                };
                Ok(event)
            }
        }
    }

    /// One transition of the chain (or one schedule advance).
    pub fn step(&mut self) -> Result<Event> {
        let pending = self.propose()?;
        self.apply(pending)
    }

    /// Drive the chain to `options.horizon`, recording observables at the
    /// requested sampling times. On budget exhaustion the partial record is
    /// returned with `complete = false`.
    pub fn run(&mut self, options: &RunOptions) -> Result<TrajectoryRecord> {
        self.run_observed(options, |_, _, _| {})
    }

    /// [`run`](Self::run) with a callback invoked at every sampling time;
    /// the observer sees the configuration, the counters and the clock.
    pub fn run_observed(
        &mut self,
        options: &RunOptions,
        mut observer: impl FnMut(&LatticeConfig, &CountingState, &SimClock),
    ) -> Result<TrajectoryRecord> {
        let initial = self.config.clone();
        let horizon = options.horizon;
        let mut times = Vec::with_capacity(options.sample_times.len());
        let mut snapshots = Vec::new();
        let mut counting = Vec::new();
        let mut next_sample = 0usize;
        let mut truncated_at = None;

        let record_sample = |sim: &Simulation,
                             t: f64,
                             times: &mut Vec<f64>,
                             snapshots: &mut Vec<LatticeConfig>,
                             counting: &mut Vec<CountingState>| {
            times.push(t);
            if options.record_occupations {
                snapshots.push(sim.config.clone());
            }
            if options.record_counting {
                counting.push(sim.counting.clone());
            }
        };

        'outer: loop {
            let pending = self.propose()?;
            let t_next = match pending {
                Pending::Transition { t } | Pending::Breakpoint { t } => t,
                Pending::Absorbed => {
                    // propagate unless everything left to do is sampling
                    if next_sample < options.sample_times.len() {
                        return Err(Error::AbsorbingState { t: self.clock.t });
                    }
                    break 'outer;
                }
            };

            // flush samples strictly before the next state change
            while next_sample < options.sample_times.len()
                && options.sample_times[next_sample] < t_next.min(horizon)
            {
                record_sample(
                    self,
                    options.sample_times[next_sample],
                    &mut times,
                    &mut snapshots,
                    &mut counting,
                );
                observer(&self.config, &self.counting, &self.clock);
                next_sample += 1;
            }

            if t_next >= horizon {
                self.advance_clock(horizon);
                break 'outer;
            }

            self.apply(pending)?;

            if self.event_count >= options.event_budget {
                truncated_at = Some(self.clock.t);
                break 'outer;
            }
            if self.event_count % (1 << 22) == 0 {
                self.table.rebuild();
            }
        }

        // samples at or after the last state change (e.g. exactly at T)
        let t_end = truncated_at.unwrap_or(horizon.max(self.clock.t));
        while next_sample < options.sample_times.len() && options.sample_times[next_sample] <= t_end
        {
            record_sample(
                self,
                options.sample_times[next_sample],
                &mut times,
                &mut snapshots,
                &mut counting,
            );
            observer(&self.config, &self.counting, &self.clock);
            next_sample += 1;
        }

        Ok(TrajectoryRecord {
            seed: self.clock.rng_seed,
            times,
            snapshots,
            counting,
            initial,
            final_config: self.config.clone(),
            final_counting: self.counting.clone(),
            event_count: self.event_count,
            boundary_mismatch: (self.mismatch_left, self.mismatch_right),
            complete: truncated_at.is_none(),
            truncated_at,
        })
    }
}

/// Independent Bernoulli occupations with `P(η_i = 1)` equal to the value
/// of `u0` at x = i/N (1-based i).
pub fn sample_initial(u0: &GridField, n: usize, rng: &mut impl Rng) -> Result<LatticeConfig> {
    if u0.cells().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::DensityOutOfRange {
            name: "u0",
            value: *u0
                .cells()
                .iter()
                .find(|v| !(0.0..=1.0).contains(*v))
                .unwrap(),
        });
    }
    let occ = (0..n)
        .map(|s| {
            let p = u0.value_at((s + 1) as f64 / n as f64);
            u8::from(rng.gen::<f64>() < p)
        })
        .collect();
    LatticeConfig::from_occupations(occ)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(n: usize, sigma: f64, sigma_tilde: f64, p: f64) -> ScalingPlan {
        ScalingPlan::exploratory(n, sigma, sigma_tilde, 1, p).unwrap()
    }

    fn zero_boundary_schedule() -> RateSchedule {
        RateSchedule::constant(BoundaryRates::new(0.0, 0.0, 0.0, 0.0).unwrap())
    }

    #[test]
    fn single_eligible_event() {
        // η = (1,0), p = 1, σ = 0, no boundary rates: the only event is
        // the bond swap at rate N·p = 2; afterwards η = (0,1), h_+(1) = 1.
        // N = 2 carries no block structure, so the plan is written out
        // literally (K applies to block observables, not the dynamics).
        let p = ScalingPlan {
            p: 1.0,
            n: 2,
            kappa: None,
            sigma: 0.0,
            sigma_tilde: 0.0,
            k: 0,
            mode: crate::model::ScalingMode::Exploratory,
        };
        let config = LatticeConfig::from_occupations(vec![1, 0]).unwrap();
        let mut sim = Simulation::new(
            config,
            zero_boundary_schedule(),
            &p,
            TimeDilation::Hydrodynamic,
            7,
        )
        .unwrap();
        assert_eq!(sim.table.total(), 2.0); // N·p with one (1,0) bond
        let ev = sim.step().unwrap();
        assert_eq!(
            ev,
            Event::BondSwap {
                site: 0,
                to_right: true
            }
        );
        assert_eq!(sim.config.occupations(), &[0, 1]);
        assert_eq!(sim.counting.h_plus[1], 1);
        assert_eq!(sim.counting.net(1), 1);

        // wider lattice, same structure: the rate scales with N
        let p4 = plan(4, 0.0, 0.0, 1.0);
        let config = LatticeConfig::from_occupations(vec![1, 0, 0, 0]).unwrap();
        let sim = Simulation::new(
            config,
            zero_boundary_schedule(),
            &p4,
            TimeDilation::Hydrodynamic,
            7,
        )
        .unwrap();
        assert_eq!(sim.table.total(), 4.0);
    }

    #[test]
    fn full_lattice_has_no_bond_events() {
        let config = LatticeConfig::from_occupations(vec![1; 8]).unwrap();
        let p = plan(8, 3.0, 1.0, 1.0);
        let schedule = RateSchedule::from_reservoir_densities(0.5, 0.5).unwrap();
        let sim = Simulation::new(config, schedule, &p, TimeDilation::Hydrodynamic, 1).unwrap();
        for i in 1..8 {
            assert_eq!(sim.table.entry(i), 0.0, "bond {i}");
        }
        assert!(sim.table.entry(0) > 0.0);
        assert!(sim.table.entry(8) > 0.0);
    }

    #[test]
    fn event_selection_frequencies() {
        // η = (1,0,1), p = 1, σ = 2: bond rates (N(σ+p), Nσ) = (9, 6),
        // selection probabilities (0.6, 0.4)
        let occ = vec![1, 0, 1];
        let p = plan(3, 2.0, 0.0, 1.0);
        let schedule = zero_boundary_schedule();
        let trials = 100_000u32;
        let mut first = 0u32;
        for seed in 0..trials {
            let config = LatticeConfig::from_occupations(occ.clone()).unwrap();
            let mut sim = Simulation::new(
                config,
                schedule.clone(),
                &p,
                TimeDilation::Hydrodynamic,
                seed as u64,
            )
            .unwrap();
            assert_eq!(sim.table.entry(1), 9.0);
            assert_eq!(sim.table.entry(2), 6.0);
            match sim.step().unwrap() {
                Event::BondSwap { site: 0, .. } => first += 1,
                Event::BondSwap { site: 1, .. } => {}
                other => panic!("unexpected event {other:?}"),
            }
        }
        let freq = first as f64 / trials as f64;
        let sigma3 = 3.0 * (0.6 * 0.4 / trials as f64).sqrt();
        assert!(
            (freq - 0.6).abs() < sigma3,
            "frequency {freq} outside 0.6 ± {sigma3}"
        );
    }

    #[test]
    fn horizon_zero_records_initial_sample_only() {
        let config = LatticeConfig::from_occupations(vec![1, 0, 1, 0]).unwrap();
        let p = plan(4, 1.0, 1.0, 1.0);
        let schedule = RateSchedule::from_reservoir_densities(0.5, 0.5).unwrap();
        let mut sim =
            Simulation::new(config.clone(), schedule, &p, TimeDilation::Hydrodynamic, 3).unwrap();
        let rec = sim.run(&RunOptions::uniform(0.0, 10)).unwrap();
        assert_eq!(rec.times, vec![0.0]);
        assert_eq!(rec.snapshots.len(), 1);
        assert_eq!(rec.snapshots[0], config);
        assert_eq!(rec.event_count, 0);
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let p = plan(64, 4.0, 2.0, 1.0);
        let schedule = RateSchedule::from_reservoir_densities(0.7, 0.3).unwrap();
        let run_once = |seed: u64| {
            let config =
                LatticeConfig::from_occupations((0..64).map(|i| (i % 2) as u8).collect()).unwrap();
            let mut sim = Simulation::new(
                config,
                schedule.clone(),
                &p,
                TimeDilation::Hydrodynamic,
                seed,
            )
            .unwrap();
            let mut events = Vec::new();
            for _ in 0..1000 {
                events.push(sim.step().unwrap());
            }
            (events, sim.config.clone(), sim.clock.t)
        };
        let a = run_once(42);
        let b = run_once(42);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
        let c = run_once(43);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn conservation_identity_holds_exactly() {
        let p = plan(32, 2.0, 1.5, 1.0);
        let schedule = RateSchedule::new(vec![
            (0.0, BoundaryRates::new(1.0, 0.5, 0.5, 1.0).unwrap()),
            (0.5, BoundaryRates::new(0.25, 1.5, 1.0, 0.5).unwrap()),
        ])
        .unwrap();
        let config =
            LatticeConfig::from_occupations((0..32).map(|i| (i % 3 == 0) as u8).collect()).unwrap();
        let mut sim =
            Simulation::new(config, schedule, &p, TimeDilation::Hydrodynamic, 99).unwrap();
        let rec = sim
            .run(&RunOptions::uniform(2.0, 40).with_counting())
            .unwrap();
        for (snap, cnt) in rec.snapshots.iter().zip(&rec.counting) {
            for i in 0..32 {
                let lhs = snap.get(i) as i64 - rec.initial.get(i) as i64;
                let rhs = cnt.net(i) - cnt.net(i + 1);
                assert_eq!(lhs, rhs, "site {i}");
            }
            let dmass = snap.particle_count() as i64 - rec.initial.particle_count() as i64;
            assert_eq!(dmass, cnt.net(0) - cnt.net(32));
            // Lipschitz bound |h(i) - h(i')| <= |i - i'|
            for i in 0..32 {
                assert!((cnt.net(i) - cnt.net(i + 1)).abs() <= 1);
            }
        }
    }

    #[test]
    fn waiting_times_are_exponential() {
        // frozen first step of a fixed config: KS test against Exp(total)
        let occ = vec![1, 0, 0, 1];
        let p = plan(4, 1.0, 2.0, 1.0);
        let schedule = RateSchedule::from_reservoir_densities(0.4, 0.6).unwrap();
        let probe = Simulation::new(
            LatticeConfig::from_occupations(occ.clone()).unwrap(),
            schedule.clone(),
            &p,
            TimeDilation::Hydrodynamic,
            0,
        )
        .unwrap();
        let total = probe.table.total();
        let n_trials = 10_000usize;
        let mut waits: Vec<f64> = (0..n_trials)
            .map(|seed| {
                let mut sim = Simulation::new(
                    LatticeConfig::from_occupations(occ.clone()).unwrap(),
                    schedule.clone(),
                    &p,
                    TimeDilation::Hydrodynamic,
                    1000 + seed as u64,
                )
                .unwrap();
                sim.step().unwrap();
                sim.clock.t
            })
            .collect();
        waits.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d = 0.0f64;
        for (i, &w) in waits.iter().enumerate() {
            let cdf = 1.0 - (-total * w).exp();
            let lo = i as f64 / n_trials as f64;
            let hi = (i + 1) as f64 / n_trials as f64;
            d = d.max((cdf - lo).abs()).max((cdf - hi).abs());
        }
        let threshold = 1.63 / (n_trials as f64).sqrt(); // α ≈ 0.01
        assert!(d < threshold, "KS statistic {d} >= {threshold}");
    }

    #[test]
    fn left_reservoir_alone_equilibrates_site_one() {
        // only the left flip dynamics active: site 1 settles to Bernoulli(ρ_-)
        let rho_minus = 0.35;
        let schedule = RateSchedule::constant(
            BoundaryRates::new(rho_minus, 0.0, 1.0 - rho_minus, 0.0).unwrap(),
        );
        let p = plan(4, 0.0, 1.0, 0.0);
        let trials = 4000;
        let mut occupied = 0u32;
        for seed in 0..trials {
            let config = LatticeConfig::empty(4).unwrap();
            let mut sim = Simulation::new(
                config,
                schedule.clone(),
                &p,
                TimeDilation::Hydrodynamic,
                seed as u64,
            )
            .unwrap();
            let rec = sim.run(&RunOptions::uniform(3.0, 2)).unwrap();
            occupied += rec.final_config.get(0) as u32;
        }
        let freq = occupied as f64 / trials as f64;
        let se = (rho_minus * (1.0 - rho_minus) / trials as f64).sqrt();
        assert!(
            (freq - rho_minus).abs() < 4.0 * se,
            "site-1 frequency {freq} vs {rho_minus} (4σ = {:.4})",
            4.0 * se
        );
    }

    #[test]
    fn boundary_mismatch_decays_with_reservoir_acceleration() {
        // a priori bound: |∫ (β+δ)(η_N - ρ_+) dt| shrinks roughly like 1/σ̃
        let n = 128;
        let schedule = RateSchedule::from_reservoir_densities(0.8, 0.2).unwrap();
        let mut means = Vec::new();
        for (si, sigma_tilde) in [10.0, 100.0, 1000.0].into_iter().enumerate() {
            let p = ScalingPlan::exploratory(n, 16.0, sigma_tilde, 4, 1.0).unwrap();
            let mut acc = 0.0;
            let replicas = 10;
            for r in 0..replicas {
                let seed = replica_seed(5000 + si as u64, r);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let u0 = GridField::from_fn(n, |x| if x < 0.5 { 0.8 } else { 0.2 });
                let config = sample_initial(&u0, n, &mut rng).unwrap();
                let mut sim = Simulation::new(
                    config,
                    schedule.clone(),
                    &p,
                    TimeDilation::Hydrodynamic,
                    seed,
                )
                .unwrap();
                let rec = sim.run(&RunOptions::uniform(2.0, 2)).unwrap();
                acc += rec.boundary_mismatch.1;
            }
            means.push((acc / replicas as f64).abs());
        }
        assert!(
            means[0] > means[1] && means[1] > means[2],
            "mismatch means not decreasing: {means:?}"
        );
    }

    #[test]
    fn budget_exhaustion_returns_partial_record() {
        let p = plan(16, 4.0, 1.0, 1.0);
        let schedule = RateSchedule::from_reservoir_densities(0.5, 0.5).unwrap();
        let config =
            LatticeConfig::from_occupations((0..16).map(|i| (i % 2) as u8).collect()).unwrap();
        let mut sim =
            Simulation::new(config, schedule, &p, TimeDilation::Hydrodynamic, 11).unwrap();
        let mut opts = RunOptions::uniform(50.0, 5);
        opts.event_budget = 100;
        let rec = sim.run(&opts).unwrap();
        assert!(!rec.complete);
        assert_eq!(rec.event_count, 100);
        assert!(rec.truncated_at.unwrap() < 50.0);
    }

    #[test]
    fn schedule_breakpoint_rebuilds_boundary_rates() {
        let p = plan(8, 0.0, 1.0, 0.0);
        // no bulk dynamics; boundary rates switch at t = 1
        let schedule = RateSchedule::new(vec![
            (0.0, BoundaryRates::new(0.0, 5.0, 5.0, 0.0).unwrap()),
            (1.0, BoundaryRates::new(5.0, 0.0, 0.0, 5.0).unwrap()),
        ])
        .unwrap();
        let config = LatticeConfig::empty(8).unwrap();
        let mut sim =
            Simulation::new(config, schedule, &p, TimeDilation::Hydrodynamic, 21).unwrap();
        // before the breakpoint only annihilation rates are active and the
        // lattice is empty: the first pending action is the breakpoint
        let ev = sim.step().unwrap();
        assert_eq!(ev, Event::ScheduleAdvance { t: 1.0 });
        assert_eq!(sim.clock.t, 1.0);
        // now creations fire
        let ev = sim.step().unwrap();
        assert!(matches!(ev, Event::BoundaryFlip { created: true, .. }));
    }

    #[test]
    fn observer_sees_every_sampling_time() {
        let p = plan(16, 2.0, 1.0, 1.0);
        let schedule = RateSchedule::from_reservoir_densities(0.6, 0.4).unwrap();
        let config =
            LatticeConfig::from_occupations((0..16).map(|i| (i % 2) as u8).collect()).unwrap();
        let mut sim = Simulation::new(config, schedule, &p, TimeDilation::Hydrodynamic, 8).unwrap();
        let opts = RunOptions::uniform(1.0, 7);
        let mut seen = Vec::new();
        let rec = sim
            .run_observed(&opts, |config, counting, clock| {
                seen.push((config.particle_count(), counting.net(0), clock.rng_seed));
            })
            .unwrap();
        assert_eq!(seen.len(), rec.times.len());
        assert_eq!(rec.times.len(), 7);
        assert!(seen.iter().all(|&(_, _, s)| s == 8));
    }

    #[test]
    fn sample_initial_matches_profile() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ones = GridField::constant(10, 1.0);
        let c = sample_initial(&ones, 50, &mut rng).unwrap();
        assert!(c.occupations().iter().all(|&v| v == 1));

        let half = GridField::constant(10, 0.5);
        let c = sample_initial(&half, 10_000, &mut rng).unwrap();
        let mean = c.particle_count() as f64 / 10_000.0;
        assert!((0.485..=0.515).contains(&mean), "mean {mean}");

        let step = GridField::from_fn(100, |x| if x < 0.5 { 0.8 } else { 0.2 });
        let c = sample_initial(&step, 10_000, &mut rng).unwrap();
        let left: u32 = (0..5000).map(|i| c.get(i) as u32).sum();
        let lmean = left as f64 / 5000.0;
        assert!((lmean - 0.8).abs() < 4.0 * (0.16f64 / 5000.0).sqrt());

        let bad = GridField::constant(4, 1.2);
        assert!(sample_initial(&bad, 10, &mut rng).is_err());
    }

    #[test]
    fn absorbing_state_is_signalled() {
        let config = LatticeConfig::from_occupations(vec![0, 1, 1, 1]).unwrap();
        // pure drift, closed boundaries: (0,1,1,1) has no (1,0) bond
        let p = plan(4, 0.0, 0.0, 1.0);
        let mut sim = Simulation::new(
            config,
            zero_boundary_schedule(),
            &p,
            TimeDilation::Hydrodynamic,
            5,
        )
        .unwrap();
        assert!(matches!(sim.step(), Err(Error::AbsorbingState { .. })));
    }

    #[test]
    fn quasi_static_dilation_scales_rates() {
        let config = LatticeConfig::from_occupations(vec![1, 0, 0, 0]).unwrap();
        let p = plan(4, 0.0, 0.0, 1.0);
        let sim = Simulation::new(
            config,
            zero_boundary_schedule(),
            &p,
            TimeDilation::QuasiStatic { a: 0.5 },
            5,
        )
        .unwrap();
        assert!((sim.table.total() - 8.0).abs() < 1e-12); // 4^1.5 = 8
    }
}
