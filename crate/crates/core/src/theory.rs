//! Numerical checks of the frame-theoretic claims: spark, the co-sparsity
//! floor, non-linearity of the l1-synthesis map, optimality of the canonical
//! dual as a proxy, and the projection geometry of `phi_2^T psi`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::frames::{canonical_dual, random_dual, Dictionary};
use crate::matrix::{pseudo_inverse, rank, Mat, Vector};
use crate::sparse::{bp_bruteforce_oracle, next_combination, ORACLE_MAX_ATOMS, ZERO_THRESHOLD};

/// Largest atom count accepted by [`spark`].
pub const SPARK_MAX_ATOMS: usize = 14;

/// Relative singular-value threshold of the subset rank test.
pub const SPARK_RANK_RTOL: f64 = 1e-10;

/// Smallest violation of additivity counted as a counterexample.
pub const VIOLATION_THRESHOLD: f64 = 1e-6;

fn gaussian_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm = v.norm();
        if norm > 1e-3 {
            return v / norm;
        }
    }
}

/// Seed of trial `i` under a master seed.
pub fn trial_seed(master: u64, i: usize) -> u64 {
    master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(i as u64)
}

/// Smallest number of linearly dependent columns; `n + 1` when no subset of
/// at most `n` columns is dependent.
pub fn spark(psi: &Dictionary) -> Result<usize> {
    let (n, m) = psi.mat().shape();
    if m > SPARK_MAX_ATOMS {
        return Err(Error::TooLarge(format!(
            "{m} atoms exceeds the spark limit of {SPARK_MAX_ATOMS}"
        )));
    }
    for k in 1..=n.min(m) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let sub = psi.mat().select_columns(&idx);
            let dependent =
                sub.column_iter().any(|c| c.norm() == 0.0) || rank(&sub, SPARK_RANK_RTOL) < k;
            if dependent {
                return Ok(k);
            }
            if !next_combination(&mut idx, m) {
                break;
            }
        }
    }
    Ok(n + 1)
}

/// Whether every set of at most `n` columns is linearly independent.
pub fn in_general_position(psi: &Dictionary) -> Result<bool> {
    Ok(spark(psi)? == psi.n() + 1)
}

/// Random `n x m` Gaussian dictionary redrawn until it is in general
/// position.
pub fn random_general_position(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Dictionary> {
    for _ in 0..100 {
        if let Ok(d) = Dictionary::new(gaussian_mat(rng, n, m)) {
            if in_general_position(&d)? {
                return Ok(d);
            }
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not draw a {n}x{m} dictionary in general position"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CosparsityFloor {
    /// Smallest `||phi^T x||_0` seen over the trials.
    pub min_support: usize,
    /// `m - n + 1`.
    pub floor: usize,
    pub trials: usize,
}

impl CosparsityFloor {
    pub fn holds(&self) -> bool {
        self.min_support >= self.floor
    }
}

/// Smallest support of `phi^T x` over random unit `x`.
///
/// Trial `i` draws `x` orthogonal to a random set of `i mod n` columns, so
/// the most co-sparse directions the floor allows are visited alongside
/// generic ones.
pub fn cosparsity_floor_check(
    phi: &Dictionary,
    trials: usize,
    seed: u64,
) -> Result<CosparsityFloor> {
    let (n, m) = phi.mat().shape();
    let s = spark(phi)?;
    if s != n + 1 {
        return Err(Error::NotGeneralPosition {
            spark: s,
            expected: n + 1,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_support = m;
    for i in 0..trials {
        let zeros = i % n;
        let picks = rand::seq::index::sample(&mut rng, m, zeros).into_vec();
        let mut x = unit_vector(&mut rng, n);
        if zeros > 0 {
            // Project onto the orthogonal complement of the picked columns.
            let c = phi.mat().select_columns(&picks);
            let proj = &c * pseudo_inverse(&c);
            let y = &x - proj * &x;
            if y.norm() < 1e-8 {
                continue;
            }
            x = &y / y.norm();
        }
        let coeffs = phi.mat().transpose() * &x;
        let support = coeffs.iter().filter(|v| v.abs() > ZERO_THRESHOLD).count();
        min_support = min_support.min(support);
    }
    Ok(CosparsityFloor {
        min_support,
        floor: m - n + 1,
        trials,
    })
}

/// Distances of dual-frame coefficient vectors to the l1-synthesis solution.
#[derive(Debug, Clone)]
pub struct ProxyTrial {
    pub psi: Dictionary,
    pub x: Vector,
    /// `argmin ||u||_1 s.t. psi u = x`.
    pub u1_star: Vector,
    /// Canonical-dual coefficients `phi_2^T x`.
    pub u2_star: Vector,
    /// `||phi_2^T x - u1_star||_2`.
    pub canonical_distance: f64,
    /// `||phi^T x - u1_star||_2` for each random dual `phi`.
    pub alt_dual_distances: Vec<f64>,
}

impl ProxyTrial {
    /// Largest amount by which the canonical distance exceeds an
    /// alternative one; `<= 0` when the canonical dual is closest.
    pub fn worst_excess(&self) -> f64 {
        self.alt_dual_distances
            .iter()
            .map(|d| self.canonical_distance - d)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn proxy_trial(
    psi: &Dictionary,
    x: &Vector,
    n_alt_duals: usize,
    seed: u64,
) -> Result<ProxyTrial> {
    if psi.m() > ORACLE_MAX_ATOMS {
        return Err(Error::TooLarge(format!(
            "{} atoms exceeds the oracle limit of {ORACLE_MAX_ATOMS}",
            psi.m()
        )));
    }
    let u1 = bp_bruteforce_oracle(psi, x)?.into_values();
    let phi2 = canonical_dual(psi)?;
    let u2 = phi2.mat().transpose() * x;
    let canonical_distance = (&u2 - &u1).norm();
    let alt_dual_distances = if psi.m() == psi.n() {
        Vec::new()
    } else {
        (0..n_alt_duals)
            .map(|i| {
                let phi = random_dual(psi, trial_seed(seed, i))?;
                Ok((phi.mat().transpose() * x - &u1).norm())
            })
            .collect::<Result<_>>()?
    };
    Ok(ProxyTrial {
        psi: psi.clone(),
        x: x.clone(),
        u1_star: u1,
        u2_star: u2,
        canonical_distance,
        alt_dual_distances,
    })
}

/// `||u1(x1 + x2) - u1(x1) - u1(x2)||_2` with `u1` the l1-synthesis map.
pub fn linearity_violation(psi: &Dictionary, x1: &Vector, x2: &Vector) -> Result<f64> {
    let u1 = bp_bruteforce_oracle(psi, x1)?;
    let u2 = bp_bruteforce_oracle(psi, x2)?;
    let u3 = bp_bruteforce_oracle(psi, &(x1 + x2))?;
    Ok((u3.values() - u1.values() - u2.values()).norm())
}

/// A pair of signals on which the l1-synthesis map is not additive.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub trial: usize,
    pub psi: Dictionary,
    pub x1: Vector,
    pub x2: Vector,
    pub magnitude: f64,
}

/// Searches fixed `psi` for signals violating additivity of the
/// l1-synthesis map.
pub fn linearity_search(psi: &Dictionary, trials: usize, seed: u64) -> Result<Counterexample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let x1 = unit_vector(&mut rng, psi.n());
        let x2 = unit_vector(&mut rng, psi.n());
        let magnitude = linearity_violation(psi, &x1, &x2)?;
        if magnitude > VIOLATION_THRESHOLD {
            return Ok(Counterexample {
                trial,
                psi: psi.clone(),
                x1,
                x2,
                magnitude,
            });
        }
    }
    Err(Error::NoViolationFound { trials })
}

/// Draws a fresh general-position `n x m` dictionary per trial and returns
/// the first additivity violation of its l1-synthesis map.
pub fn nonexistence_search(n: usize, m: usize, trials: usize, seed: u64) -> Result<Counterexample> {
    if m < n || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < n <= m, got n={n}, m={m}"
        )));
    }
    if m > 10 {
        return Err(Error::TooLarge(format!(
            "{m} atoms exceeds the search limit of 10"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let psi = random_general_position(n, m, &mut rng)?;
        let x1 = unit_vector(&mut rng, n);
        let x2 = unit_vector(&mut rng, n);
        let magnitude = linearity_violation(&psi, &x1, &x2)?;
        if magnitude > VIOLATION_THRESHOLD {
            return Ok(Counterexample {
                trial,
                psi,
                x1,
                x2,
                magnitude,
            });
        }
    }
    Err(Error::NoViolationFound { trials })
}

/// Residuals of the projection identities of `P = phi^T psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionResiduals {
    /// `||P^2 - P||_F`.
    pub idempotence: f64,
    /// `||P^T - P||_F`.
    pub symmetry: f64,
    /// `|rank(P) - n|`.
    pub rank_defect: usize,
}

pub fn projection_residuals(psi: &Dictionary, phi: &Dictionary) -> Result<ProjectionResiduals> {
    if psi.mat().shape() != phi.mat().shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            psi.mat().shape(),
            phi.mat().shape()
        )));
    }
    let p = phi.mat().transpose() * psi.mat();
    Ok(ProjectionResiduals {
        idempotence: (&p * &p - &p).norm(),
        symmetry: (p.transpose() - &p).norm(),
        rank_defect: rank(&p, 1e-8).abs_diff(psi.n()),
    })
}

/// Projection residuals for the canonical dual of `psi`.
pub fn projection_identity_check(psi: &Dictionary) -> Result<ProjectionResiduals> {
    projection_residuals(psi, &canonical_dual(psi)?)
}

/// One line of a theory report.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRecord {
    pub trial: usize,
    pub quantity: String,
    pub value: f64,
}

pub const THEORY_CSV_HEADER: &str = "trial,quantity,value";

pub fn theory_csv(records: &[TheoryRecord]) -> String {
    let mut out = format!("{THEORY_CSV_HEADER}\n");
    for r in records {
        out.push_str(&format!("{},{},{:e}\n", r.trial, r.quantity, r.value));
    }
    out
}

/// Sizes of the standard theory suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteConfig {
    pub proxy_trials: usize,
    pub duals_per_trial: usize,
    pub pinv_trials: usize,
    pub projection_trials: usize,
    pub search_trials: usize,
    pub cosparsity_trials: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            proxy_trials: 100,
            duals_per_trial: 20,
            pinv_trials: 100,
            projection_trials: 100,
            search_trials: 100,
            cosparsity_trials: 1000,
        }
    }
}

/// Outcome of [`run_suite`]: the per-trial records and one verdict line per
/// check.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub records: Vec<TheoryRecord>,
    pub verdicts: Vec<(String, bool)>,
}

impl SuiteReport {
    pub fn summary(&self) -> String {
        self.verdicts
            .iter()
            .map(|(name, ok)| format!("{} {name}\n", if *ok { "PASS" } else { "FAIL" }))
            .collect()
    }
}

fn record(records: &mut Vec<TheoryRecord>, trial: usize, quantity: &str, value: f64) {
    records.push(TheoryRecord {
        trial,
        quantity: quantity.to_string(),
        value,
    });
}

/// Canonical dual against random duals on `3 x 6` frames.
pub fn proxy_suite(cfg: &SuiteConfig, seed: u64, records: &mut Vec<TheoryRecord>) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, 1));
    let mut ok = true;
    for t in 0..cfg.proxy_trials {
        let psi = random_general_position(3, 6, &mut rng)?;
        let x = unit_vector(&mut rng, 3);
        let trial = proxy_trial(&psi, &x, cfg.duals_per_trial, rng.random())?;
        let excess = trial.worst_excess();
        record(records, t, "canonical_distance", trial.canonical_distance);
        record(records, t, "worst_excess", excess);
        ok &= excess <= 1e-9;
    }
    Ok(ok)
}

/// Canonical-dual coefficients against the pseudo-inverse and the
/// minimum-norm solution.
pub fn pinv_suite(cfg: &SuiteConfig, seed: u64, records: &mut Vec<TheoryRecord>) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, 2));
    let mut ok = true;
    for t in 0..cfg.pinv_trials {
        let psi = Dictionary::new(gaussian_mat(&mut rng, 3, 6))?;
        let x = unit_vector(&mut rng, 3);
        let u2 = canonical_dual(&psi)?.mat().transpose() * &x;
        let pinv = pseudo_inverse(psi.mat()) * &x;
        // Minimum-norm solution from the normal equations of psi^T.
        let gram = psi.frame_operator();
        let min_norm = psi.mat().transpose()
            * gram
                .lu()
                .solve(&x)
                .ok_or(Error::RankDeficient { ratio: 0.0 })?;
        let err = (&u2 - &pinv).norm().max((&u2 - &min_norm).norm());
        record(records, t, "pinv_gap", err);
        ok &= err <= 1e-10;
    }
    Ok(ok)
}

/// Projection identities for canonical and random duals.
pub fn projection_suite(
    cfg: &SuiteConfig,
    seed: u64,
    records: &mut Vec<TheoryRecord>,
) -> Result<(bool, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, 3));
    let mut canonical_ok = true;
    let mut asymmetric = 0usize;
    for t in 0..cfg.projection_trials {
        let psi = Dictionary::new(gaussian_mat(&mut rng, 3, 6))?;
        let r = projection_identity_check(&psi)?;
        record(records, t, "idempotence", r.idempotence);
        record(records, t, "symmetry", r.symmetry);
        record(records, t, "rank_defect", r.rank_defect as f64);
        canonical_ok &= r.idempotence <= 1e-10 && r.symmetry <= 1e-10 && r.rank_defect == 0;
        let alt = random_dual(&psi, rng.random())?;
        let ra = projection_residuals(&psi, &alt)?;
        record(records, t, "dual_symmetry", ra.symmetry);
        if ra.symmetry > 1e-3 {
            asymmetric += 1;
        }
    }
    let share_ok = asymmetric as f64 >= 0.95 * cfg.projection_trials as f64;
    Ok((canonical_ok, share_ok))
}

/// Additivity search on `3 x 5` general-position frames plus the square
/// control.
pub fn nonexistence_suite(
    cfg: &SuiteConfig,
    seed: u64,
    records: &mut Vec<TheoryRecord>,
) -> Result<bool> {
    let found = match nonexistence_search(3, 5, cfg.search_trials, trial_seed(seed, 4)) {
        Ok(c) => {
            record(records, c.trial, "violation", c.magnitude);
            c.magnitude > VIOLATION_THRESHOLD
        }
        Err(Error::NoViolationFound { .. }) => false,
        Err(e) => return Err(e),
    };
    let square_clean = match nonexistence_search(3, 3, cfg.search_trials, trial_seed(seed, 5)) {
        Ok(c) => {
            record(records, c.trial, "square_violation", c.magnitude);
            false
        }
        Err(Error::NoViolationFound { .. }) => true,
        Err(e) => return Err(e),
    };
    Ok(found && square_clean)
}

/// Co-sparsity floor on a random `3 x 5` general-position frame.
pub fn cosparsity_suite(
    cfg: &SuiteConfig,
    seed: u64,
    records: &mut Vec<TheoryRecord>,
) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, 6));
    let phi = random_general_position(3, 5, &mut rng)?;
    let r = cosparsity_floor_check(&phi, cfg.cosparsity_trials, rng.random())?;
    record(records, 0, "min_cosparse_support", r.min_support as f64);
    Ok(r.holds() && r.floor == 3)
}

pub fn run_suite(cfg: &SuiteConfig, seed: u64) -> Result<SuiteReport> {
    let mut records = Vec::new();
    let mut verdicts = Vec::new();
    let proxy = proxy_suite(cfg, seed, &mut records)?;
    verdicts.push(("canonical dual is the closest proxy".to_string(), proxy));
    let pinv = pinv_suite(cfg, seed, &mut records)?;
    verdicts.push(("canonical coefficients are minimum-norm".to_string(), pinv));
    let (canonical, share) = projection_suite(cfg, seed, &mut records)?;
    verdicts.push((
        "canonical kernel is an orthogonal projection".to_string(),
        canonical,
    ));
    verdicts.push(("random-dual kernels are not symmetric".to_string(), share));
    let search = nonexistence_suite(cfg, seed, &mut records)?;
    verdicts.push(("l1 synthesis map is not linear".to_string(), search));
    let floor = cosparsity_suite(cfg, seed, &mut records)?;
    verdicts.push(("co-sparsity floor m - n + 1 holds".to_string(), floor));
    Ok(SuiteReport { records, verdicts })
}
