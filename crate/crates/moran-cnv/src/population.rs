//! Exact continuous-time simulation of the `N`-individual copy-number jump
//! process, plus an exact generator-application oracle for small states.
//!
//! The state is the histogram of copy numbers over `N` individuals. At total
//! rate `N^2/2` a reproduction event fires: a dying individual and two
//! parents are drawn uniformly with replacement, the parents contribute
//! `j ~ p_k^N` and `j' ~ p_l^N` elements independently, and the dying
//! individual is replaced by one of type `j + j'`. Events with unchanged type
//! are retained as no-ops (they still consume time).

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::inheritance::{InheritanceFamily, OffspringSampler};
use crate::observables::{Observable, Trajectory};

/// Default safety cap on the number of events in one simulation run.
pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;

/// Integer histogram of copy numbers over `N` individuals. The empirical
/// measure `x_k = counts[k] / N` is the simulated state. Storing only counts
/// makes exchangeability structural.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationState {
    n: u32,
    counts: Vec<u32>,
}

impl PopulationState {
    pub fn from_histogram(n: u32, counts: Vec<u32>) -> Result<Self> {
        let sum: u64 = counts.iter().map(|&c| c as u64).sum();
        if sum != n as u64 {
            return Err(Error::HistogramSum { sum, expected: n });
        }
        Ok(Self { n, counts })
    }

    /// All `N` individuals at copy number zero.
    pub fn all_at_zero(n: u32) -> Self {
        Self {
            n,
            counts: vec![n],
        }
    }

    pub fn n_individuals(&self) -> u32 {
        self.n
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Empirical probabilities `x_k = counts[k]/N`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Largest occupied copy number.
    pub fn max_type(&self) -> u32 {
        self.counts
            .iter()
            .rposition(|&c| c > 0)
            .map(|k| k as u32)
            .unwrap_or(0)
    }

    pub fn occupied_types(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Uniformly random individual's copy number.
    pub fn sample_type<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let mut r = rng.gen_range(0..self.n);
        for (k, &c) in self.counts.iter().enumerate() {
            if r < c {
                return k as u32;
            }
            r -= c;
        }
        unreachable!("counts sum to N");
    }

    /// Moves one individual from type `from` to type `to`, growing the
    /// histogram geometrically if needed. The array never shrinks during a run.
    pub fn move_individual(&mut self, from: u32, to: u32) {
        let to = to as usize;
        if to >= self.counts.len() {
            let new_len = (to + 1).max(self.counts.len() * 2);
            self.counts.resize(new_len, 0);
        }
        debug_assert!(self.counts[from as usize] > 0);
        self.counts[from as usize] -= 1;
        self.counts[to] += 1;
    }
}

/// How the initial population is drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// Each individual i.i.d. Poisson with mean `z`.
    IidPoisson { z: f64 },
    /// Each individual i.i.d. negative binomial `NB(2, 2/(z+2))` with mean `z`.
    IidNegBin { z: f64 },
    /// An exact histogram (must sum to `N`).
    Deterministic { histogram: Vec<u32> },
}

/// Draws an initial state of `n` individuals from `spec`.
pub fn init_state<R: Rng + ?Sized>(
    n: u32,
    spec: &InitialSpec,
    rng: &mut R,
) -> Result<PopulationState> {
    match spec {
        InitialSpec::Deterministic { histogram } => PopulationState::from_histogram(n, histogram.clone()),
        InitialSpec::IidPoisson { z } => {
            let mut state = PopulationState::all_at_zero(n);
            if *z > 0.0 {
                let poi = rand_distr::Poisson::new(*z).expect("z > 0");
                for _ in 0..n {
                    let k = poi.sample(rng) as u32;
                    state.move_individual(0, k);
                }
            }
            Ok(state)
        }
        InitialSpec::IidNegBin { z } => {
            let mut state = PopulationState::all_at_zero(n);
            if *z > 0.0 {
                let p = 2.0 / (z + 2.0);
                let geo = rand_distr::Geometric::new(p).expect("p in (0,1]");
                for _ in 0..n {
                    let k = (geo.sample(rng) + geo.sample(rng)) as u32;
                    state.move_individual(0, k);
                }
            }
            Ok(state)
        }
    }
}

/// One reproduction event, for audit logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub dying_type: u32,
    pub parent_types: (u32, u32),
    pub contributions: (u32, u32),
}

impl EventRecord {
    pub fn offspring_type(&self) -> u32 {
        self.contributions.0 + self.contributions.1
    }
}

/// Outcome of a single event: the exponential waiting time and the event.
#[derive(Debug, Clone, Copy)]
pub struct StepEvent {
    pub elapsed: f64,
    pub dying_type: u32,
    pub parent_types: (u32, u32),
    pub contributions: (u32, u32),
}

impl StepEvent {
    pub fn offspring_type(&self) -> u32 {
        self.contributions.0 + self.contributions.1
    }
}

/// Advances the state by exactly one reproduction event.
///
/// The waiting time is exponential with the total rate `N^2/2`; the dying
/// individual and both parents are drawn uniformly with replacement.
pub fn step<R: Rng + ?Sized>(
    state: &mut PopulationState,
    sampler: &mut OffspringSampler<'_>,
    rng: &mut R,
) -> Result<StepEvent> {
    let n = state.n_individuals() as f64;
    let total_rate = 0.5 * n * n;
    let elapsed = -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / total_rate;
    let dying = state.sample_type(rng);
    let k = state.sample_type(rng);
    let l = state.sample_type(rng);
    let j = sampler.sample(k, rng)?;
    let jp = sampler.sample(l, rng)?;
    state.move_individual(dying, j + jp);
    Ok(StepEvent {
        elapsed,
        dying_type: dying,
        parent_types: (k, l),
        contributions: (j, jp),
    })
}

fn check_scale(family: &InheritanceFamily, state: &PopulationState) -> Result<()> {
    if family.depends_on_n() && family.n_scale() != state.n_individuals() {
        return Err(Error::ScaleMismatch {
            family_n: family.n_scale(),
            state_n: state.n_individuals(),
        });
    }
    Ok(())
}

/// Core simulation driver: applies events until `t_end`, invoking `observe`
/// at every grid time with the left-limit state (the state right before any
/// event at that instant) and `on_event` after every applied event.
pub fn simulate_core<R, Obs, Ev>(
    state: &mut PopulationState,
    family: &InheritanceFamily,
    t_end: f64,
    grid: &[f64],
    event_cap: u64,
    rng: &mut R,
    mut observe: Obs,
    mut on_event: Ev,
) -> Result<u64>
where
    R: Rng + ?Sized,
    Obs: FnMut(f64, &PopulationState),
    Ev: FnMut(&EventRecord),
{
    check_scale(family, state)?;
    debug_assert!(grid.windows(2).all(|w| w[0] < w[1]), "grid must be sorted");
    let mut sampler = family.sampler();
    let mut t = 0.0;
    let mut events = 0u64;
    let mut gi = 0usize;
    loop {
        let n = state.n_individuals() as f64;
        let total_rate = 0.5 * n * n;
        let elapsed = -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / total_rate;
        let t_next = t + elapsed;
        while gi < grid.len() && grid[gi] <= t_next && grid[gi] <= t_end {
            observe(grid[gi], state);
            gi += 1;
        }
        if t_next > t_end {
            return Ok(events);
        }
        let dying = state.sample_type(rng);
        let k = state.sample_type(rng);
        let l = state.sample_type(rng);
        let j = sampler.sample(k, rng)?;
        let jp = sampler.sample(l, rng)?;
        state.move_individual(dying, j + jp);
        t = t_next;
        events += 1;
        if events > event_cap {
            return Err(Error::EventCapExceeded { cap: event_cap, t });
        }
        on_event(&EventRecord {
            time: t,
            dying_type: dying,
            parent_types: (k, l),
            contributions: (j, jp),
        });
    }
}

/// Runs the process to `t_end`, recording the given observables at the grid
/// times (left-limit convention). Deterministic given the random stream.
pub fn simulate<R: Rng + ?Sized>(
    state0: PopulationState,
    family: &InheritanceFamily,
    t_end: f64,
    grid: &[f64],
    observers: &[Observable],
    rng: &mut R,
) -> Result<Trajectory> {
    let mut state = state0;
    let mut traj = Trajectory::new(observers.iter().map(|o| o.label()).collect());
    simulate_core(
        &mut state,
        family,
        t_end,
        grid,
        DEFAULT_EVENT_CAP,
        rng,
        |t, st| traj.push(t, observers.iter().map(|o| o.eval(st)).collect()),
        |_| {},
    )?;
    Ok(traj)
}

/// Like [`simulate`], additionally returning the full event log.
pub fn simulate_logged<R: Rng + ?Sized>(
    state0: PopulationState,
    family: &InheritanceFamily,
    t_end: f64,
    grid: &[f64],
    observers: &[Observable],
    rng: &mut R,
) -> Result<(Trajectory, Vec<EventRecord>)> {
    let mut state = state0;
    let mut traj = Trajectory::new(observers.iter().map(|o| o.label()).collect());
    let mut log = Vec::new();
    simulate_core(
        &mut state,
        family,
        t_end,
        grid,
        DEFAULT_EVENT_CAP,
        rng,
        |t, st| traj.push(t, observers.iter().map(|o| o.eval(st)).collect()),
        |ev| log.push(*ev),
    )?;
    Ok((traj, log))
}

/// Applies the exact generator to `f` at `state`:
///
/// ```text
/// G^N f(x) = (N^2/2) sum_n x_n sum_m q(m) [ f(x + (e_m - e_n)/N) - f(x) ]
/// ```
///
/// where `q = mu * mu` is the self-convolution of the parent mixture
/// `mu(j) = sum_k x_k p_k^N(j)`. This is the brute-force oracle against which
/// all closed-form generator identities are checked; it uses the finite-`N`
/// rows `p_k^N`.
pub fn apply_generator_exact<F>(
    state: &PopulationState,
    family: &InheritanceFamily,
    f: F,
) -> Result<f64>
where
    F: Fn(&PopulationState) -> f64,
{
    check_scale(family, state)?;
    let occupied = state.occupied_types();
    let max_type = state.max_type();
    if occupied > 50 || max_type > 30 {
        return Err(Error::GeneratorSizeGuard { occupied, max_type });
    }
    let n = state.n_individuals() as f64;
    let freqs = state.frequencies();

    // Parent mixture mu(j) = sum_k x_k p_k^N(j), then q = mu * mu.
    let mut mu = vec![0.0f64; max_type as usize + 1];
    for (k, &xk) in freqs.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        let row = family.pmf_row(k as u32)?;
        for (j, &p) in row.iter().enumerate() {
            mu[j] += xk * p;
        }
    }
    let mut q = vec![0.0f64; 2 * mu.len() - 1];
    for (a, &pa) in mu.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (b, &pb) in mu.iter().enumerate() {
            q[a + b] += pa * pb;
        }
    }

    let mut scratch = state.clone();
    let f0 = f(&scratch);
    let mut acc = 0.0;
    for (dying, &xn) in freqs.iter().enumerate() {
        if xn == 0.0 {
            continue;
        }
        for (m, &qm) in q.iter().enumerate() {
            if qm == 0.0 || m == dying {
                continue;
            }
            scratch.move_individual(dying as u32, m as u32);
            let diff = f(&scratch) - f0;
            scratch.move_individual(m as u32, dying as u32);
            acc += xn * qm * diff;
        }
    }
    Ok(0.5 * n * n * acc)
}

/// Birth-death rates of the zero-count chain under all-or-nothing
/// inheritance, as functions of the current number of type-zero individuals.
pub fn all_or_nothing_rates(n: u32, zero_count: u32) -> (f64, f64) {
    let nf = n as f64;
    let y = zero_count as f64 / nf;
    let up = nf * nf * (1.0 - y) * (0.25 * (1.0 - y) * (1.0 - y) + (1.0 - y) * y + y * y);
    let down = nf * nf * y * (0.75 * (1.0 - y) * (1.0 - y) + (1.0 - y) * y);
    (up, down)
}

/// Result of an all-or-nothing run: the zero-count trajectory and the first
/// time the count hit `N` (fixation of the empty type).
#[derive(Debug, Clone)]
pub struct AllOrNothingRun {
    pub trajectory: Trajectory,
    pub hitting_time: Option<f64>,
    pub final_count: u32,
}

/// Simulates the autonomous zero-count chain of the all-or-nothing family:
/// jumps `y -> y + 1/N` and `y -> y - 1/N` at the rates of
/// [`all_or_nothing_rates`]. The state with all individuals at type zero is
/// absorbing.
pub fn simulate_all_or_nothing<R: Rng + ?Sized>(
    n: u32,
    count_at_zero_0: u32,
    t_end: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<AllOrNothingRun> {
    assert!(count_at_zero_0 <= n);
    let mut count = count_at_zero_0;
    let mut t = 0.0;
    let mut gi = 0usize;
    let mut traj = Trajectory::new(vec!["zero_count".into()]);
    let mut hitting_time = if count == n { Some(0.0) } else { None };
    let mut events = 0u64;
    loop {
        let (up, down) = all_or_nothing_rates(n, count);
        let total = up + down;
        if total == 0.0 {
            // Absorbed; emit the remaining grid points.
            while gi < grid.len() && grid[gi] <= t_end {
                traj.push(grid[gi], vec![count as f64]);
                gi += 1;
            }
            return Ok(AllOrNothingRun {
                trajectory: traj,
                hitting_time,
                final_count: count,
            });
        }
        let elapsed = -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / total;
        let t_next = t + elapsed;
        while gi < grid.len() && grid[gi] <= t_next && grid[gi] <= t_end {
            traj.push(grid[gi], vec![count as f64]);
            gi += 1;
        }
        if t_next > t_end {
            return Ok(AllOrNothingRun {
                trajectory: traj,
                hitting_time,
                final_count: count,
            });
        }
        if rng.gen::<f64>() * total < up {
            count += 1;
        } else {
            count -= 1;
        }
        t = t_next;
        events += 1;
        if events > DEFAULT_EVENT_CAP {
            return Err(Error::EventCapExceeded {
                cap: DEFAULT_EVENT_CAP,
                t,
            });
        }
        if count == n && hitting_time.is_none() {
            hitting_time = Some(t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::{mean_phi, Observable};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn histogram_must_sum_to_n() {
        assert!(matches!(
            PopulationState::from_histogram(5, vec![2, 2]),
            Err(Error::HistogramSum { sum: 4, expected: 5 })
        ));
        let st = PopulationState::from_histogram(5, vec![5]).unwrap();
        assert_eq!(mean_phi(&st), 0.0);
    }

    #[test]
    fn iid_poisson_initialization_mean() {
        let mut r = rng(1);
        let n = 10_000u32;
        let st = init_state(n, &InitialSpec::IidPoisson { z: 2.0 }, &mut r).unwrap();
        let phi = mean_phi(&st);
        let band = 4.0 * (2.0f64 / n as f64).sqrt();
        assert!((phi - 2.0).abs() < band, "phi={phi}");
    }

    #[test]
    fn iid_negbin_initialization_rho2() {
        let mut r = rng(2);
        let n = 100_000u32;
        let st = init_state(n, &InitialSpec::IidNegBin { z: 2.0 }, &mut r).unwrap();
        let m = crate::observables::MomentVector::from_state(&st);
        // rho2 of NB(2, 2/(z+2)) is 1.5 z^2 = 6 at z = 2.
        assert!((m.rho2 - 6.0).abs() < 0.35, "rho2={}", m.rho2);
        assert!((m.rho1 - 2.0).abs() < 0.05, "rho1={}", m.rho1);
    }

    #[test]
    fn all_at_zero_is_absorbing() {
        let family = InheritanceFamily::uniform();
        let mut r = rng(3);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let traj = simulate(
            PopulationState::all_at_zero(20),
            &family,
            1.0,
            &grid,
            &[Observable::MeanPhi],
            &mut r,
        )
        .unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.column_values(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_elapsed_matches_total_rate() {
        let family = InheritanceFamily::uniform();
        let mut r = rng(4);
        let n = 10u32;
        let mut state = init_state(n, &InitialSpec::IidPoisson { z: 1.0 }, &mut r).unwrap();
        let mut sampler = family.sampler();
        let reps = 100_000u32;
        let mut sum = 0.0;
        for _ in 0..reps {
            sum += step(&mut state, &mut sampler, &mut r).unwrap().elapsed;
        }
        let mean = sum / reps as f64;
        let expect = 2.0 / (n as f64 * n as f64);
        // Exponential(N^2/2): sd = mean, SE = mean/sqrt(reps).
        let band = 3.0 * expect / (reps as f64).sqrt();
        assert!((mean - expect).abs() < band, "mean={mean} expect={expect}");
    }

    /// With N=1 the lone individual is dying individual and both parents;
    /// the offspring type distribution is the convolution p_4 * p_4.
    #[test]
    fn single_individual_offspring_distribution() {
        let family = InheritanceFamily::uniform();
        // Brute-force oracle: enumerate the p_4 * p_4 convolution.
        let row = family.limit_pmf_row(4).unwrap();
        let mut conv = vec![0.0f64; 9];
        for (a, &pa) in row.iter().enumerate() {
            for (b, &pb) in row.iter().enumerate() {
                conv[a + b] += pa * pb;
            }
        }
        let mut r = rng(5);
        let reps = 200_000u32;
        let mut hist = vec![0u32; 9];
        let mut sampler = family.sampler();
        for _ in 0..reps {
            let mut state = PopulationState::from_histogram(1, vec![0, 0, 0, 0, 1]).unwrap();
            let ev = step(&mut state, &mut sampler, &mut r).unwrap();
            assert!(ev.offspring_type() <= 8);
            hist[ev.offspring_type() as usize] += 1;
        }
        for m in 0..9 {
            let p = hist[m] as f64 / reps as f64;
            let se = (conv[m] * (1.0 - conv[m]) / reps as f64).sqrt();
            assert!(
                (p - conv[m]).abs() < 4.0 * se + 1e-9,
                "m={m}: p={p} expect={}",
                conv[m]
            );
        }
    }

    #[test]
    fn generator_of_constant_is_zero() {
        let family = InheritanceFamily::binomial_biased(1.0, 20).unwrap();
        let mut r = rng(6);
        let state = init_state(20, &InitialSpec::IidPoisson { z: 1.5 }, &mut r).unwrap();
        let g = apply_generator_exact(&state, &family, |_| 1.0).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn generator_size_guard() {
        let family = InheritanceFamily::uniform();
        let mut counts = vec![0u32; 41];
        counts[40] = 10;
        let state = PopulationState::from_histogram(10, counts).unwrap();
        assert!(matches!(
            apply_generator_exact(&state, &family, |_| 0.0),
            Err(Error::GeneratorSizeGuard { .. })
        ));
    }

    #[test]
    fn generator_scale_mismatch_detected() {
        let family = InheritanceFamily::binomial_biased(1.0, 50).unwrap();
        let state = PopulationState::all_at_zero(20);
        assert!(matches!(
            apply_generator_exact(&state, &family, |_| 0.0),
            Err(Error::ScaleMismatch { .. })
        ));
    }

    #[test]
    fn all_or_nothing_rate_drift_at_half() {
        // up - down at y = 1/2 equals N^2/16.
        let (up, down) = all_or_nothing_rates(10, 5);
        assert!((up - down - 100.0 / 16.0).abs() < 1e-12);
        // y = 1 is absorbing: both rates vanish.
        let (up, down) = all_or_nothing_rates(10, 10);
        assert_eq!((up, down), (0.0, 0.0));
    }

    #[test]
    fn all_or_nothing_started_absorbed_stays() {
        let mut r = rng(8);
        let run = simulate_all_or_nothing(50, 50, 5.0, &[0.0, 1.0, 5.0], &mut r).unwrap();
        assert_eq!(run.hitting_time, Some(0.0));
        assert_eq!(run.final_count, 50);
        assert!(run.trajectory.column_values(0).iter().all(|&v| v == 50.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn mass_is_conserved_along_runs(seed in 0u64..1000, z in 0.2f64..3.0) {
            let family = InheritanceFamily::uniform();
            let mut r = rng(seed);
            let n = 30u32;
            let mut state = init_state(n, &InitialSpec::IidPoisson { z }, &mut r).unwrap();
            let mut sampler = family.sampler();
            for _ in 0..500 {
                step(&mut state, &mut sampler, &mut r).unwrap();
                prop_assert_eq!(state.counts().iter().sum::<u32>(), n);
            }
        }
    }
}
