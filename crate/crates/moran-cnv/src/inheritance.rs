//! Inheritance-distribution families `(p_k^N)_k`.
//!
//! A family assigns to every parental copy number `k` a distribution `p_k^N`
//! on `{0,...,k}` for the number of elements passed to the offspring. Each
//! family comes with its large-`N` limit `p_k`, the first-order perturbation
//! `r_k = lim N (p_k^N - p_k)`, probability generating functions and
//! factorial moments. The limit mean is `k/2` for every supported family.
//!
//! Factorial moments of the limit and the perturbation follow the polynomial
//! form
//!
//! ```text
//! rho_n(p_k) = a_n k(k-1)...(k-n+1),      rho_1(r_k) = alpha k,
//! rho_n(r_k) = b_n k(k-1)...(k-n+1)       (n = 2, 3),
//! ```
//!
//! and the coefficients `(alpha, a2, a3, b2, b3)` parameterize all closed
//! forms downstream. For the biased-binomial family the `b` coefficients are
//! measured by [`InheritanceFamily::numeric_perturbation_moments`] rather
//! than trusted from any closed-form shortcut; see `PAPER_B2_CANDIDATE` for
//! the disputed alternative that the oracle rejects.

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance for validating that a probability row sums to one.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance for the limit-mean (`k/2`) and moment-form checks on custom tables.
pub const MOMENT_FORM_TOL: f64 = 1e-9;
/// Largest parental copy number for which samplers will materialize a row.
pub const SAMPLER_SUPPORT_CAP: u32 = 4096;

/// Disputed closed-form candidates for `(b2, b3)` of the biased-binomial
/// family. They are carried as metadata in every report next to the values
/// actually used, which come from the numeric perturbation oracle
/// (`b2 = alpha`, `b3 = 3 alpha / 4`).
pub const PAPER_B2_CANDIDATE: f64 = 0.25;
pub const PAPER_B3_CANDIDATE: f64 = -0.125;

/// Which parameterized family of inheritance distributions is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    /// `p_k^N = B(k, 1/2 + alpha/N)`, limit `B(k, 1/2)`.
    BinomialBiased,
    /// `p_k^N = p_k = U({0,...,k})`.
    Uniform,
    /// `p_k = (delta_0 + delta_k)/2`: a parent passes all or none.
    AllOrNothing,
    /// Explicit row-stochastic table up to a fixed `k_max`.
    CustomTable,
}

impl FamilyKind {
    pub fn label(&self) -> &'static str {
        match self {
            FamilyKind::BinomialBiased => "binomial-biased",
            FamilyKind::Uniform => "uniform",
            FamilyKind::AllOrNothing => "all-or-nothing",
            FamilyKind::CustomTable => "custom-table",
        }
    }
}

/// Factorial-moment coefficients of the limit family and its perturbation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MomentParams {
    pub alpha: f64,
    pub a2: f64,
    pub a3: f64,
    pub b2: f64,
    pub b3: f64,
}

#[derive(Debug, Clone)]
struct CustomTable {
    k_max: u32,
    /// `rows[k][j] = p_k(j)`, `j <= k`.
    rows: Vec<Vec<f64>>,
    /// Per-row cumulative sums for sampling.
    cdf: Vec<Vec<f64>>,
}

/// A family of inheritance distributions with its limit and perturbation.
///
/// Immutable after construction; replicates running in parallel share one
/// family and draw from it with their own random streams.
#[derive(Debug, Clone)]
pub struct InheritanceFamily {
    kind: FamilyKind,
    alpha: f64,
    /// The population size `N` entering `epsilon_N = alpha / N`.
    n_scale: u32,
    custom: Option<CustomTable>,
    params: MomentParams,
}

impl InheritanceFamily {
    /// Builds a family. `custom_probs` is required for (and only for)
    /// `FamilyKind::CustomTable`: `custom_probs[k]` must be the probability
    /// row of `p_k` for every `k = 0..=k_max`.
    pub fn new(
        kind: FamilyKind,
        alpha: f64,
        n_scale: u32,
        custom_probs: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if n_scale == 0 {
            return Err(Error::Config("family requires N >= 1".into()));
        }
        match kind {
            FamilyKind::BinomialBiased => {
                let epsilon = alpha / n_scale as f64;
                if !(epsilon.abs() < 0.5) {
                    return Err(Error::BiasOutOfRange { epsilon });
                }
                Ok(Self {
                    kind,
                    alpha,
                    n_scale,
                    custom: None,
                    params: MomentParams {
                        alpha,
                        a2: 0.25,
                        a3: 0.125,
                        // Perturbation coefficients from the numeric oracle,
                        // frozen by tests below: rho_2(r_k) = alpha k(k-1),
                        // rho_3(r_k) = (3 alpha / 4) k(k-1)(k-2).
                        b2: alpha,
                        b3: 0.75 * alpha,
                    },
                })
            }
            FamilyKind::Uniform | FamilyKind::AllOrNothing => {
                if alpha != 0.0 {
                    return Err(Error::AlphaUnsupported {
                        kind: kind.label(),
                        alpha,
                    });
                }
                let (a2, a3) = match kind {
                    FamilyKind::Uniform => (1.0 / 3.0, 0.25),
                    _ => (0.5, 0.5),
                };
                Ok(Self {
                    kind,
                    alpha: 0.0,
                    n_scale,
                    custom: None,
                    params: MomentParams {
                        alpha: 0.0,
                        a2,
                        a3,
                        b2: 0.0,
                        b3: 0.0,
                    },
                })
            }
            FamilyKind::CustomTable => {
                let rows = custom_probs.ok_or_else(|| {
                    Error::Config("custom-table family requires probability rows".into())
                })?;
                if alpha != 0.0 {
                    return Err(Error::AlphaUnsupported {
                        kind: kind.label(),
                        alpha,
                    });
                }
                let table = CustomTable::validated(rows)?;
                let (a2, a3) = table.moment_coefficients()?;
                Ok(Self {
                    kind,
                    alpha: 0.0,
                    n_scale,
                    custom: Some(table),
                    params: MomentParams {
                        alpha: 0.0,
                        a2,
                        a3,
                        b2: 0.0,
                        b3: 0.0,
                    },
                })
            }
        }
    }

    pub fn binomial_biased(alpha: f64, n_scale: u32) -> Result<Self> {
        Self::new(FamilyKind::BinomialBiased, alpha, n_scale, None)
    }

    pub fn uniform() -> Self {
        Self::new(FamilyKind::Uniform, 0.0, 1, None).expect("uniform family is always valid")
    }

    pub fn all_or_nothing() -> Self {
        Self::new(FamilyKind::AllOrNothing, 0.0, 1, None)
            .expect("all-or-nothing family is always valid")
    }

    pub fn custom(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(FamilyKind::CustomTable, 0.0, 1, Some(rows))
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The `N` this family was built for (`epsilon_N = alpha / N`).
    pub fn n_scale(&self) -> u32 {
        self.n_scale
    }

    pub fn params(&self) -> MomentParams {
        self.params
    }

    /// `k_max` of a custom table, if any.
    pub fn custom_k_max(&self) -> Option<u32> {
        self.custom.as_ref().map(|t| t.k_max)
    }

    /// Whether `p_k^N` actually depends on `N` (only the biased binomial does).
    pub fn depends_on_n(&self) -> bool {
        self.kind == FamilyKind::BinomialBiased && self.alpha != 0.0
    }

    fn guard_support(&self, k: u32) -> Result<()> {
        if let Some(table) = &self.custom {
            if k > table.k_max {
                return Err(Error::CustomTableExceeded {
                    k,
                    k_max: table.k_max,
                });
            }
        }
        if k > SAMPLER_SUPPORT_CAP {
            return Err(Error::SupportCapExceeded {
                k,
                cap: SAMPLER_SUPPORT_CAP,
            });
        }
        Ok(())
    }

    /// One draw from the finite-`N` distribution `p_k^N`.
    pub fn sample_offspring_count<R: Rng + ?Sized>(&self, k: u32, rng: &mut R) -> Result<u32> {
        self.guard_support(k)?;
        if k == 0 {
            // p_0 is concentrated at 0 in every family.
            return Ok(0);
        }
        Ok(match self.kind {
            FamilyKind::Uniform => rng.gen_range(0..=k),
            FamilyKind::AllOrNothing => {
                if rng.gen_bool(0.5) {
                    k
                } else {
                    0
                }
            }
            FamilyKind::BinomialBiased => {
                let q = 0.5 + self.alpha / self.n_scale as f64;
                sample_binomial_inverse(k, q, rng)
            }
            FamilyKind::CustomTable => {
                let table = self.custom.as_ref().expect("custom table present");
                sample_from_cdf(&table.cdf[k as usize], rng)
            }
        })
    }

    /// Builds a per-replicate sampler with cached inverse-CDF rows for the
    /// hot event loop. The family itself stays immutable.
    pub fn sampler(&self) -> OffspringSampler<'_> {
        OffspringSampler {
            family: self,
            rows: Vec::new(),
        }
    }

    /// The finite-`N` row `p_k^N(0..=k)`.
    pub fn pmf_row(&self, k: u32) -> Result<Vec<f64>> {
        self.guard_support(k)?;
        Ok(match self.kind {
            FamilyKind::BinomialBiased => {
                binomial_pmf_row(k, 0.5 + self.alpha / self.n_scale as f64)
            }
            _ => self.limit_pmf_row_unchecked(k),
        })
    }

    /// The limit row `p_k(0..=k)`.
    pub fn limit_pmf_row(&self, k: u32) -> Result<Vec<f64>> {
        self.guard_support(k)?;
        Ok(self.limit_pmf_row_unchecked(k))
    }

    fn limit_pmf_row_unchecked(&self, k: u32) -> Vec<f64> {
        match self.kind {
            FamilyKind::BinomialBiased => binomial_pmf_row(k, 0.5),
            FamilyKind::Uniform => vec![1.0 / (k as f64 + 1.0); k as usize + 1],
            FamilyKind::AllOrNothing => {
                if k == 0 {
                    vec![1.0]
                } else {
                    let mut row = vec![0.0; k as usize + 1];
                    row[0] = 0.5;
                    row[k as usize] = 0.5;
                    row
                }
            }
            FamilyKind::CustomTable => self.custom.as_ref().expect("custom table present").rows
                [k as usize]
                .clone(),
        }
    }

    /// `psi_s(p_k) = sum_j p_k(j) (1-s)^j` of the limit family, in closed form.
    pub fn pgf(&self, k: u32, s: f64) -> f64 {
        match self.kind {
            FamilyKind::BinomialBiased => (1.0 - 0.5 * s).powi(k as i32),
            FamilyKind::Uniform => uniform_pgf(k, s),
            FamilyKind::AllOrNothing => 0.5 + 0.5 * (1.0 - s).powi(k as i32),
            FamilyKind::CustomTable => {
                let row = &self.custom.as_ref().expect("custom table present").rows[k as usize];
                pgf_of_row(row, s)
            }
        }
    }

    /// `psi_s(p_k^N)` at an arbitrary scale `n` (used by perturbation checks).
    pub fn pgf_at_scale(&self, k: u32, s: f64, n: f64) -> f64 {
        match self.kind {
            FamilyKind::BinomialBiased => (1.0 - s * (0.5 + self.alpha / n)).powi(k as i32),
            _ => self.pgf(k, s),
        }
    }

    /// Factorial moment `rho_order(p_k)` of the limit family, `order` in 1..=3.
    pub fn factorial_moment(&self, k: u32, order: u32) -> Result<f64> {
        let a = match order {
            1 => 0.5,
            2 => self.params.a2,
            3 => self.params.a3,
            other => return Err(Error::MomentOrder(other)),
        };
        Ok(a * falling_factorial(k, order))
    }

    /// `psi_s(r_k)`: generating function of the perturbation `r_k`.
    ///
    /// Vanishes identically unless the family is the biased binomial, where
    /// `psi_s(r_k) = -alpha k s (1 - s/2)^(k-1)`.
    pub fn perturbation_pgf(&self, k: u32, s: f64) -> f64 {
        match self.kind {
            FamilyKind::BinomialBiased => {
                if k == 0 {
                    0.0
                } else {
                    -self.alpha * k as f64 * s * (1.0 - 0.5 * s).powi(k as i32 - 1)
                }
            }
            _ => 0.0,
        }
    }

    /// Numeric oracle for the perturbation moment coefficients.
    ///
    /// Fits `N (rho_n(p_k^N) - rho_n(p_k))` against `k`, `k(k-1)` and
    /// `k(k-1)(k-2)` over `k = 1..=20`, with moments computed by direct
    /// summation of explicitly built pmf rows (independent of any closed
    /// form). Returns `(alpha_hat, b2_hat, b3_hat)` plus the largest fit
    /// residual.
    pub fn numeric_perturbation_moments(&self, n_probe: u64) -> Result<PerturbationFit> {
        assert!(n_probe >= 10_000, "probe N must be at least 1e4");
        let n = n_probe as f64;
        let mut coeffs = [0.0f64; 3];
        let mut max_residual = 0.0f64;
        for (idx, order) in (1u32..=3).enumerate() {
            let mut num = 0.0;
            let mut den = 0.0;
            let mut samples = Vec::with_capacity(20);
            for k in 1..=20u32 {
                let finite = match self.kind {
                    FamilyKind::BinomialBiased => {
                        row_factorial_moment(&binomial_pmf_row(k, 0.5 + self.alpha / n), order)
                    }
                    _ => row_factorial_moment(&self.limit_pmf_row(k)?, order),
                };
                let limit = row_factorial_moment(&self.limit_pmf_row(k)?, order);
                let y = n * (finite - limit);
                let basis = falling_factorial(k, order);
                num += y * basis;
                den += basis * basis;
                samples.push((y, basis));
            }
            let c = if den > 0.0 { num / den } else { 0.0 };
            coeffs[idx] = c;
            for (y, basis) in samples {
                max_residual = max_residual.max((y - c * basis).abs());
            }
        }
        if max_residual > 1e-4 {
            return Err(Error::PerturbationFitResidual {
                residual: max_residual,
            });
        }
        Ok(PerturbationFit {
            alpha_hat: coeffs[0],
            b2_hat: coeffs[1],
            b3_hat: coeffs[2],
            max_residual,
        })
    }
}

/// Result of the perturbation-moment fit.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationFit {
    pub alpha_hat: f64,
    pub b2_hat: f64,
    pub b3_hat: f64,
    pub max_residual: f64,
}

/// Per-replicate offspring sampler with lazily cached inverse-CDF rows.
///
/// Owned by a single replicate; not shared across threads.
pub struct OffspringSampler<'a> {
    family: &'a InheritanceFamily,
    rows: Vec<Option<Vec<f64>>>,
}

impl<'a> OffspringSampler<'a> {
    pub fn family(&self) -> &'a InheritanceFamily {
        self.family
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, k: u32, rng: &mut R) -> Result<u32> {
        if k == 0 {
            return Ok(0);
        }
        match self.family.kind {
            FamilyKind::Uniform => {
                self.family.guard_support(k)?;
                Ok(rng.gen_range(0..=k))
            }
            FamilyKind::AllOrNothing => {
                self.family.guard_support(k)?;
                Ok(if rng.gen_bool(0.5) { k } else { 0 })
            }
            FamilyKind::CustomTable => {
                self.family.guard_support(k)?;
                let table = self.family.custom.as_ref().expect("custom table present");
                Ok(sample_from_cdf(&table.cdf[k as usize], rng))
            }
            FamilyKind::BinomialBiased => {
                self.family.guard_support(k)?;
                let idx = k as usize;
                if idx >= self.rows.len() {
                    self.rows.resize(idx + 1, None);
                }
                if self.rows[idx].is_none() {
                    let q = 0.5 + self.family.alpha / self.family.n_scale as f64;
                    let row = binomial_pmf_row(k, q);
                    let mut cdf = row;
                    let mut acc = 0.0;
                    for v in cdf.iter_mut() {
                        acc += *v;
                        *v = acc;
                    }
                    self.rows[idx] = Some(cdf);
                }
                Ok(sample_from_cdf(self.rows[idx].as_ref().unwrap(), rng))
            }
        }
    }
}

impl CustomTable {
    fn validated(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("custom table must contain a row for k=0".into()));
        }
        for (k, row) in rows.iter().enumerate() {
            let k_u = k as u32;
            if row.len() != k + 1 {
                return Err(Error::InvalidProbabilityRow {
                    k: k_u,
                    reason: format!("expected {} entries, found {}", k + 1, row.len()),
                });
            }
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                return Err(Error::InvalidProbabilityRow {
                    k: k_u,
                    reason: "negative or non-finite entry".into(),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidProbabilityRow {
                    k: k_u,
                    reason: format!("row sums to {sum}, not 1"),
                });
            }
            let mean: f64 = row.iter().enumerate().map(|(j, p)| j as f64 * p).sum();
            if (mean - k as f64 / 2.0).abs() > MOMENT_FORM_TOL {
                return Err(Error::InvalidProbabilityRow {
                    k: k_u,
                    reason: format!("row mean {mean} differs from k/2 = {}", k as f64 / 2.0),
                });
            }
        }
        let cdf = rows
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            k_max: rows.len() as u32 - 1,
            rows,
            cdf,
        })
    }

    /// Extracts `(a2, a3)` and checks the polynomial moment form across all rows.
    fn moment_coefficients(&self) -> Result<(f64, f64)> {
        let mut a2 = 0.0;
        let mut a3 = 0.0;
        for order in 2u32..=3 {
            let mut coeff: Option<f64> = None;
            for k in order..=self.k_max {
                let basis = falling_factorial(k, order);
                let m = row_factorial_moment(&self.rows[k as usize], order);
                let c = m / basis;
                match coeff {
                    None => coeff = Some(c),
                    Some(prev) => {
                        if (c - prev).abs() > MOMENT_FORM_TOL {
                            return Err(Error::MomentFormViolation {
                                order,
                                k,
                                found: m,
                                expected: prev * basis,
                            });
                        }
                    }
                }
            }
            let c = coeff.unwrap_or(0.0);
            if order == 2 {
                a2 = c;
            } else {
                a3 = c;
            }
        }
        Ok((a2, a3))
    }
}

/// `k (k-1) ... (k-n+1)` as a float.
pub fn falling_factorial(k: u32, n: u32) -> f64 {
    let mut out = 1.0;
    for i in 0..n {
        if i >= k {
            return 0.0;
        }
        out *= (k - i) as f64;
    }
    out
}

/// `sum_j row[j] (1-s)^j`.
pub fn pgf_of_row(row: &[f64], s: f64) -> f64 {
    let z = 1.0 - s;
    let mut pow = 1.0;
    let mut acc = 0.0;
    for p in row {
        acc += p * pow;
        pow *= z;
    }
    acc
}

/// `sum_j j(j-1)...(j-order+1) row[j]`.
pub fn row_factorial_moment(row: &[f64], order: u32) -> f64 {
    row.iter()
        .enumerate()
        .map(|(j, p)| falling_factorial(j as u32, order) * p)
        .sum()
}

fn uniform_pgf(k: u32, s: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if s.abs() < 1e-6 {
        // Series around the removable singularity at s = 0.
        let kf = k as f64;
        return 1.0 - s * kf / 2.0 + s * s * kf * (kf - 1.0) / 6.0
            - s * s * s * kf * (kf - 1.0) * (kf - 2.0) / 24.0;
    }
    (1.0 - (1.0 - s).powi(k as i32 + 1)) / ((k as f64 + 1.0) * s)
}

fn binomial_pmf_row(k: u32, q: f64) -> Vec<f64> {
    let mut row = Vec::with_capacity(k as usize + 1);
    let mut p = (1.0 - q).powi(k as i32);
    let ratio = q / (1.0 - q);
    row.push(p);
    for j in 0..k {
        p *= (k - j) as f64 / (j as f64 + 1.0) * ratio;
        row.push(p);
    }
    row
}

fn sample_binomial_inverse<R: Rng + ?Sized>(k: u32, q: f64, rng: &mut R) -> u32 {
    let mut u: f64 = rng.gen();
    let mut p = (1.0 - q).powi(k as i32);
    let ratio = q / (1.0 - q);
    for j in 0..k {
        if u < p {
            return j;
        }
        u -= p;
        p *= (k - j) as f64 / (j as f64 + 1.0) * ratio;
    }
    k
}

fn sample_from_cdf<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> u32 {
    let u: f64 = rng.gen();
    cdf.partition_point(|c| *c < u) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn uniform_moment_coefficients() {
        let f = InheritanceFamily::uniform();
        let p = f.params();
        assert_eq!(p.a2, 1.0 / 3.0);
        assert_eq!(p.a3, 0.25);
        assert_eq!(p.alpha, 0.0);
        assert_eq!((p.b2, p.b3), (0.0, 0.0));
    }

    #[test]
    fn binomial_moment_coefficients() {
        let f = InheritanceFamily::binomial_biased(0.0, 100).unwrap();
        let p = f.params();
        assert_eq!(p.a2, 0.25);
        assert_eq!(p.a3, 0.125);
        // alpha = 0 makes the perturbation vanish entirely.
        for k in 0..10 {
            assert_eq!(f.perturbation_pgf(k, 0.7), 0.0);
        }
    }

    #[test]
    fn degenerate_custom_table_is_valid() {
        let f = InheritanceFamily::custom(vec![vec![1.0]]).unwrap();
        assert_eq!(f.custom_k_max(), Some(0));
        assert_eq!(f.pgf(0, 0.7), 1.0);
    }

    #[test]
    fn custom_table_row_errors() {
        // Not summing to one.
        let err = InheritanceFamily::custom(vec![vec![1.0], vec![0.6, 0.6]]).unwrap_err();
        assert!(matches!(err, Error::InvalidProbabilityRow { k: 1, .. }));
        // Negative entry.
        let err = InheritanceFamily::custom(vec![vec![1.0], vec![-0.5, 1.5]]).unwrap_err();
        assert!(matches!(err, Error::InvalidProbabilityRow { k: 1, .. }));
        // Mean not k/2.
        let err = InheritanceFamily::custom(vec![vec![1.0], vec![0.2, 0.8]]).unwrap_err();
        assert!(matches!(err, Error::InvalidProbabilityRow { k: 1, .. }));
    }

    #[test]
    fn bias_out_of_range_rejected() {
        let err = InheritanceFamily::binomial_biased(3.0, 5).unwrap_err();
        assert!(matches!(err, Error::BiasOutOfRange { .. }));
    }

    #[test]
    fn pgf_closed_forms() {
        let binom = InheritanceFamily::binomial_biased(0.0, 100).unwrap();
        assert!((binom.pgf(3, 1.0) - 0.125).abs() < 1e-15);
        let unif = InheritanceFamily::uniform();
        assert!((unif.pgf(2, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(unif.pgf(0, 0.7), 1.0);
        assert_eq!(unif.pgf(7, 0.0), 1.0);
    }

    #[test]
    fn pgf_matches_direct_summation() {
        let families = [
            InheritanceFamily::binomial_biased(0.0, 50).unwrap(),
            InheritanceFamily::uniform(),
            InheritanceFamily::all_or_nothing(),
        ];
        for f in &families {
            for k in 0..=30u32 {
                for i in 0..=10 {
                    let s = i as f64 / 10.0;
                    let direct = pgf_of_row(&f.limit_pmf_row(k).unwrap(), s);
                    assert!(
                        (f.pgf(k, s) - direct).abs() < 1e-12,
                        "{} k={k} s={s}",
                        f.kind().label()
                    );
                }
            }
        }
    }

    #[test]
    fn factorial_moment_examples() {
        let binom = InheritanceFamily::binomial_biased(0.0, 100).unwrap();
        assert!((binom.factorial_moment(4, 2).unwrap() - 3.0).abs() < 1e-15);
        let unif = InheritanceFamily::uniform();
        assert!((unif.factorial_moment(4, 3).unwrap() - 6.0).abs() < 1e-15);
        assert_eq!(unif.factorial_moment(1, 2).unwrap(), 0.0);
        assert!(matches!(
            unif.factorial_moment(2, 4),
            Err(Error::MomentOrder(4))
        ));
    }

    /// Factorial moments must agree with derivatives of the pgf at s=0,
    /// evaluated here by Richardson-extrapolated central differences.
    #[test]
    fn factorial_moments_match_pgf_derivatives() {
        fn derivative(f: &InheritanceFamily, k: u32, order: u32, h: f64) -> f64 {
            let g = |s: f64| f.pgf_at_scale(k, s, f.n_scale() as f64);
            let d = |h: f64| -> f64 {
                match order {
                    1 => (g(h) - g(-h)) / (2.0 * h),
                    2 => (g(h) - 2.0 * g(0.0) + g(-h)) / (h * h),
                    3 => (g(2.0 * h) - 2.0 * g(h) + 2.0 * g(-h) - g(-2.0 * h)) / (2.0 * h * h * h),
                    _ => unreachable!(),
                }
            };
            // Fourth-order Richardson extrapolation of the h^2 stencils.
            (4.0 * d(h / 2.0) - d(h)) / 3.0
        }
        let families = [
            InheritanceFamily::binomial_biased(0.0, 100).unwrap(),
            InheritanceFamily::uniform(),
            InheritanceFamily::all_or_nothing(),
        ];
        for f in &families {
            for k in 0..=30u32 {
                // The pgf's higher derivatives grow like k^n, so the step
                // shrinks with k to keep the truncation error in check.
                let h = 0.05 / k.max(1) as f64;
                for order in 1..=3u32 {
                    let exact = f.factorial_moment(k, order).unwrap();
                    let fd = derivative(f, k, order, h) * if order % 2 == 1 { -1.0 } else { 1.0 };
                    let tol = 1e-6 * (1.0 + exact.abs());
                    assert!(
                        (fd - exact).abs() < tol,
                        "{} k={k} n={order}: fd={fd} exact={exact}",
                        f.kind().label()
                    );
                }
            }
        }
    }

    #[test]
    fn perturbation_pgf_examples() {
        let f = InheritanceFamily::binomial_biased(1.0, 1000).unwrap();
        assert!((f.perturbation_pgf(1, 1.0) + 1.0).abs() < 1e-15);
        assert_eq!(f.perturbation_pgf(3, 0.0), 0.0);
        let f2 = InheritanceFamily::binomial_biased(2.0, 1000).unwrap();
        assert_eq!(f2.perturbation_pgf(3, 0.0), 0.0);
        assert_eq!(InheritanceFamily::uniform().perturbation_pgf(6, 0.4), 0.0);
    }

    /// N (psi_s(p_k^N) - psi_s(p_k)) -> psi_s(r_k), with error halving as N doubles.
    #[test]
    fn perturbation_pgf_consistency() {
        let alpha = 1.3;
        for k in [1u32, 4, 9, 17] {
            for s in [0.3, 0.7, 1.0] {
                let errs: Vec<f64> = [10_000u32, 20_000]
                    .iter()
                    .map(|&n| {
                        let f = InheritanceFamily::binomial_biased(alpha, n).unwrap();
                        let nf = n as f64;
                        let diff = nf * (f.pgf_at_scale(k, s, nf) - f.pgf(k, s));
                        (diff - f.perturbation_pgf(k, s)).abs()
                    })
                    .collect();
                assert!(
                    errs[1] <= 0.6 * errs[0] + 1e-12,
                    "k={k} s={s}: errs={errs:?}"
                );
            }
        }
    }

    /// Frozen oracle values: the numeric perturbation fit gives
    /// (alpha, b2, b3) = (alpha, alpha, 0.75 alpha), not the disputed
    /// (1/4, -1/8) closed-form candidates.
    #[test]
    fn numeric_perturbation_moments_oracle() {
        let f = InheritanceFamily::binomial_biased(1.0, 1_000_000).unwrap();
        let fit = f.numeric_perturbation_moments(1_000_000).unwrap();
        assert!((fit.alpha_hat - 1.0).abs() < 1e-4, "{}", fit.alpha_hat);
        assert!((fit.b2_hat - 1.0).abs() < 1e-4, "{}", fit.b2_hat);
        assert!((fit.b3_hat - 0.75).abs() < 1e-4, "{}", fit.b3_hat);
        // The family's params are populated from the oracle values.
        assert!((f.params().b2 - 1.0).abs() < 1e-12);
        assert!((f.params().b3 - 0.75).abs() < 1e-12);
        // And they reject the disputed candidates.
        assert!((fit.b2_hat - PAPER_B2_CANDIDATE).abs() > 0.5);
        assert!((fit.b3_hat - PAPER_B3_CANDIDATE).abs() > 0.5);

        let unif = InheritanceFamily::uniform();
        let fit = unif.numeric_perturbation_moments(1_000_000).unwrap();
        assert_eq!(
            (fit.alpha_hat, fit.b2_hat, fit.b3_hat),
            (0.0, 0.0, 0.0),
            "p^N = p exactly for the uniform family"
        );
    }

    #[test]
    fn sampler_matches_pmf() {
        // Empirical pgf over many draws matches the closed form within 4 SE.
        let draws = 1_000_000u32;
        let families = [
            InheritanceFamily::binomial_biased(0.0, 100).unwrap(),
            InheritanceFamily::uniform(),
            InheritanceFamily::all_or_nothing(),
        ];
        let mut r = rng(7);
        for f in &families {
            let k = 10u32;
            let mut sampler = f.sampler();
            for s in [0.3f64, 0.7] {
                let mut sum = 0.0;
                let mut sumsq = 0.0;
                for _ in 0..draws {
                    let j = sampler.sample(k, &mut r).unwrap();
                    let v = (1.0 - s).powi(j as i32);
                    sum += v;
                    sumsq += v * v;
                }
                let mean = sum / draws as f64;
                let var = (sumsq / draws as f64 - mean * mean).max(0.0);
                let se = (var / draws as f64).sqrt();
                let expect = f.pgf_at_scale(k, s, f.n_scale() as f64);
                assert!(
                    (mean - expect).abs() <= 4.0 * se + 1e-9,
                    "{} s={s}: mean={mean} expect={expect} se={se}",
                    f.kind().label()
                );
            }
        }
    }

    #[test]
    fn sample_mean_and_uniform_cells() {
        let mut r = rng(11);
        // Binomial alpha=0, k=10: mean 5 within 3 sigma.
        let f = InheritanceFamily::binomial_biased(0.0, 100).unwrap();
        let n = 1_000_000u32;
        let mut sum = 0u64;
        let mut sampler = f.sampler();
        for _ in 0..n {
            sum += sampler.sample(10, &mut r).unwrap() as u64;
        }
        let mean = sum as f64 / n as f64;
        let sigma = (10.0f64 * 0.25 / n as f64).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * sigma, "mean={mean}");

        // Uniform on {0..4}: each cell 1/5 within 3 sigma.
        let f = InheritanceFamily::uniform();
        let mut cells = [0u64; 5];
        let mut sampler = f.sampler();
        for _ in 0..n {
            cells[sampler.sample(4, &mut r).unwrap() as usize] += 1;
        }
        let sigma = (0.2f64 * 0.8 / n as f64).sqrt();
        for c in cells {
            let p = c as f64 / n as f64;
            assert!((p - 0.2).abs() < 3.0 * sigma, "cell p={p}");
        }

        // k = 0 always yields 0.
        for _ in 0..100 {
            assert_eq!(f.sample_offspring_count(0, &mut r).unwrap(), 0);
        }
    }

    #[test]
    fn custom_table_support_guard() {
        let f = InheritanceFamily::custom(vec![vec![1.0], vec![0.5, 0.5]]).unwrap();
        let mut r = rng(3);
        assert!(f.sample_offspring_count(1, &mut r).is_ok());
        assert!(matches!(
            f.sample_offspring_count(2, &mut r),
            Err(Error::CustomTableExceeded { k: 2, k_max: 1 })
        ));
    }
}
