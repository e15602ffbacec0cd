//! Statistics of states and paths: the mean observable `Phi`, factorial
//! moments, empirical generating functions, occupation measures, distribution
//! distances and quadratic-variation estimates.

use crate::population::PopulationState;

/// The moment vector `(rho1, rho1^2, rho2, rho1^3, rho2*rho1, rho3)`, in the
/// ordering used by the moment matrices of the slow-fast decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentVector {
    pub rho1: f64,
    pub rho1_sq: f64,
    pub rho2: f64,
    pub rho1_cu: f64,
    pub rho2_rho1: f64,
    pub rho3: f64,
}

impl MomentVector {
    /// Builds the vector from base moments; the product entries share the
    /// same floating-point data path as the base entries.
    pub fn from_base(rho1: f64, rho2: f64, rho3: f64) -> Self {
        Self {
            rho1,
            rho1_sq: rho1 * rho1,
            rho2,
            rho1_cu: rho1 * rho1 * rho1,
            rho2_rho1: rho2 * rho1,
            rho3,
        }
    }

    pub fn from_state(state: &PopulationState) -> Self {
        let n = state.n_individuals() as f64;
        let mut sums = [0.0f64; 3];
        for (k, &c) in state.counts().iter().enumerate() {
            if c == 0 {
                continue;
            }
            let kf = k as f64;
            let w = c as f64 / n;
            sums[0] += kf * w;
            sums[1] += kf * (kf - 1.0) * w;
            sums[2] += kf * (kf - 1.0) * (kf - 2.0) * w;
        }
        Self::from_base(sums[0], sums[1], sums[2])
    }

    /// Factorial moments of an arbitrary probability table over `{0,1,...}`.
    pub fn from_probs(probs: &[f64]) -> Self {
        let mut sums = [0.0f64; 3];
        for (k, &p) in probs.iter().enumerate() {
            let kf = k as f64;
            sums[0] += kf * p;
            sums[1] += kf * (kf - 1.0) * p;
            sums[2] += kf * (kf - 1.0) * (kf - 2.0) * p;
        }
        Self::from_base(sums[0], sums[1], sums[2])
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.rho1,
            self.rho1_sq,
            self.rho2,
            self.rho1_cu,
            self.rho2_rho1,
            self.rho3,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            rho1: v[0],
            rho1_sq: v[1],
            rho2: v[2],
            rho1_cu: v[3],
            rho2_rho1: v[4],
            rho3: v[5],
        }
    }

    pub const LABELS: [&'static str; 6] = ["rho1", "rho1_sq", "rho2", "rho1_cu", "rho2_rho1", "rho3"];
}

/// Population mean copy number `Phi(x) = rho1(x) = sum_k k x_k`: the slow variable.
pub fn mean_phi(state: &PopulationState) -> f64 {
    let n = state.n_individuals() as f64;
    state
        .counts()
        .iter()
        .enumerate()
        .map(|(k, &c)| k as f64 * c as f64)
        .sum::<f64>()
        / n
}

/// Empirical generating function `psi_s(x) = sum_n x_n (1-s)^n`.
pub fn empirical_pgf(state: &PopulationState, s: f64) -> f64 {
    let n = state.n_individuals() as f64;
    pgf_of_probs_scaled(state.counts(), n, s)
}

fn pgf_of_probs_scaled(counts: &[u32], n: f64, s: f64) -> f64 {
    let z = 1.0 - s;
    let mut pow = 1.0;
    let mut acc = 0.0;
    for &c in counts {
        if c != 0 {
            acc += c as f64 * pow;
        }
        pow *= z;
    }
    acc / n
}

/// `psi_s` of a probability table.
pub fn pgf_of_probs(probs: &[f64], s: f64) -> f64 {
    let z = 1.0 - s;
    let mut pow = 1.0;
    let mut acc = 0.0;
    for &p in probs {
        acc += p * pow;
        pow *= z;
    }
    acc
}

/// Total variation distance `1/2 sum_k |x_k - q_k|` between two tables
/// (implicitly padded with zeros).
pub fn tv_between(x: &[f64], q: &[f64]) -> f64 {
    let len = x.len().max(q.len());
    let mut acc = 0.0;
    for k in 0..len {
        let a = x.get(k).copied().unwrap_or(0.0);
        let b = q.get(k).copied().unwrap_or(0.0);
        acc += (a - b).abs();
    }
    0.5 * acc
}

/// TV distance between the empirical distribution of a state and a reference
/// table (already truncated at negligible tail mass).
pub fn tv_distance(state: &PopulationState, reference: &[f64]) -> f64 {
    let n = state.n_individuals() as f64;
    let len = state.counts().len().max(reference.len());
    let mut acc = 0.0;
    for k in 0..len {
        let a = state.counts().get(k).copied().unwrap_or(0) as f64 / n;
        let b = reference.get(k).copied().unwrap_or(0.0);
        acc += (a - b).abs();
    }
    0.5 * acc
}

/// Realized quadratic variation of a sampled scalar path: the sum of squared
/// increments over the sampling grid. The grid should be coarse enough that
/// each cell sees several jump events (the default simulation grids use 1e3
/// cells per unit time, giving N^2/2000 events per cell).
pub fn quadratic_variation_estimate(phi_path: &[f64]) -> f64 {
    phi_path
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            d * d
        })
        .sum()
}

/// Time-stamped observations of a path: one row of observable values per
/// observation time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub columns: Vec<String>,
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            times: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, time: f64, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        if let Some(last) = self.times.last() {
            debug_assert!(time > *last, "observation times must be strictly increasing");
        }
        self.times.push(time);
        self.rows.push(row);
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// All values of one column, in time order.
    pub fn column_values(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    /// Value of a column at the latest time <= `t`.
    pub fn value_at(&self, idx: usize, t: f64) -> Option<f64> {
        let pos = self.times.partition_point(|&x| x <= t);
        if pos == 0 {
            None
        } else {
            Some(self.rows[pos - 1][idx])
        }
    }
}

/// State observables that can be recorded along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    MeanPhi,
    Rho2,
    Rho3,
    /// `psi_s` of the empirical distribution at the given `s`.
    Pgf(f64),
    /// Fraction of individuals of type zero.
    ZeroFraction,
}

impl Observable {
    pub fn label(&self) -> String {
        match self {
            Observable::MeanPhi => "phi".into(),
            Observable::Rho2 => "rho2".into(),
            Observable::Rho3 => "rho3".into(),
            Observable::Pgf(s) => format!("psi_{s}"),
            Observable::ZeroFraction => "zero_fraction".into(),
        }
    }

    pub fn eval(&self, state: &PopulationState) -> f64 {
        match self {
            Observable::MeanPhi => mean_phi(state),
            Observable::Rho2 => MomentVector::from_state(state).rho2,
            Observable::Rho3 => MomentVector::from_state(state).rho3,
            Observable::Pgf(s) => empirical_pgf(state, *s),
            Observable::ZeroFraction => {
                state.counts().first().copied().unwrap_or(0) as f64
                    / state.n_individuals() as f64
            }
        }
    }
}

/// How path values between observations are interpreted when integrating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    /// Jump path: exactly constant between the recorded times.
    PiecewiseConstant,
    /// Grid-sampled diffusion: weight split between both endpoints.
    Sampled,
}

/// Discretized `e^{-s}`-weighted occupation measure of a scalar path:
/// `weights[i][j]` is the measure of time bin `i` x value bin `j`, and the
/// total mass over `[0, T]` is `1 - e^{-T}`.
#[derive(Debug, Clone)]
pub struct OccupationMeasure {
    pub time_edges: Vec<f64>,
    pub value_edges: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

impl OccupationMeasure {
    pub fn zero(time_edges: Vec<f64>, value_edges: Vec<f64>) -> Self {
        let weights = vec![vec![0.0; value_edges.len() - 1]; time_edges.len() - 1];
        Self {
            time_edges,
            value_edges,
            weights,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().flatten().sum()
    }

    fn value_bin(&self, v: f64) -> usize {
        // Out-of-range values are clamped into the boundary bins so that no
        // mass is lost and the normalization invariant holds exactly.
        let nb = self.value_edges.len() - 1;
        let pos = self.value_edges.partition_point(|&e| e <= v);
        pos.saturating_sub(1).min(nb - 1)
    }

    /// Adds `e^{-s}`-weighted mass for a constant stretch `[t0, t1)` at value `v`,
    /// split across the time bins it overlaps.
    fn deposit(&mut self, t0: f64, t1: f64, v: f64, fraction: f64) {
        if t1 <= t0 {
            return;
        }
        let j = self.value_bin(v);
        let nt = self.time_edges.len() - 1;
        for i in 0..nt {
            let lo = self.time_edges[i].max(t0);
            let hi = self.time_edges[i + 1].min(t1);
            if hi > lo {
                self.weights[i][j] += fraction * ((-lo).exp() - (-hi).exp());
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for row in &mut self.weights {
            for w in row {
                *w *= factor;
            }
        }
    }

    pub fn add(&mut self, other: &OccupationMeasure) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    /// L1 distance between two occupation measures on the same bins.
    pub fn l1_distance(&self, other: &OccupationMeasure) -> f64 {
        self.weights
            .iter()
            .flatten()
            .zip(other.weights.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Builds the weighted occupation measure of a scalar path given as
/// `(times, values)` with `times[0] = 0`, over the horizon spanned by
/// `time_edges`. Integration of `e^{-s}` is exact on constancy intervals for
/// jump paths and trapezoidal (half weight to each endpoint value) for
/// sampled paths.
pub fn occupation_measure(
    times: &[f64],
    values: &[f64],
    kind: PathKind,
    time_edges: Vec<f64>,
    value_edges: Vec<f64>,
) -> OccupationMeasure {
    assert_eq!(times.len(), values.len());
    assert!(!times.is_empty());
    let horizon = *time_edges.last().expect("time edges nonempty");
    let mut m = OccupationMeasure::zero(time_edges, value_edges);
    match kind {
        PathKind::PiecewiseConstant => {
            for i in 0..times.len() {
                let t0 = times[i];
                let t1 = if i + 1 < times.len() { times[i + 1] } else { horizon };
                m.deposit(t0.min(horizon), t1.min(horizon), values[i], 1.0);
            }
        }
        PathKind::Sampled => {
            for i in 0..times.len() - 1 {
                let t0 = times[i].min(horizon);
                let t1 = times[i + 1].min(horizon);
                m.deposit(t0, t1, values[i], 0.5);
                m.deposit(t0, t1, values[i + 1], 0.5);
            }
            // Carry the last sample to the horizon so no mass is lost.
            let last_t = times[times.len() - 1];
            if last_t < horizon {
                m.deposit(last_t, horizon, values[values.len() - 1], 1.0);
            }
        }
    }
    m
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Critical value of the two-sample KS statistic at significance `level`
/// (asymptotic): `c(level) * sqrt((n+m)/(n m))`.
pub fn ks_critical_value(n: usize, m: usize, level: f64) -> f64 {
    let c = (-0.5 * (level / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}
