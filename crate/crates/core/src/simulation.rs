//! Synthetic data with controlled missingness.
//!
//! The first two covariates are Bernoulli(0.5) with classes {0, 1}; the rest
//! have unit variances and exchangeable or AR(1) correlation. The response
//! is `Y = X * 1 + eps` with the noise variance set to hit a target R².
//! Missingness follows one of five mechanisms, either subject-wise with
//! block patterns or cell-wise without patterns, and its intercept is
//! calibrated by bisection on the realized rate of each draw.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Bernoulli, Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnSchema, MissingDataset};
use crate::error::{Error, Result};

/// Allowed distance between realized and target missing rate.
pub const RATE_TOLERANCE: f64 = 0.005;
const N_DISCRETE: usize = 2;
const ALPHA_BOUND: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovStructure {
    Exchangeable,
    Ar1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateLaw {
    Normal,
    /// Centered standard exponentials mixed by the covariance square root.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Mcar,
    /// Driven by the always-observed last covariate.
    Mar,
    /// Driven by the regression error.
    Mnar,
    /// Driven by the squared regression error.
    Mnar2,
    /// Driven by each cell's own value and its left neighbor.
    Mnar3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternFamily {
    /// Missing subjects draw one of seven block patterns.
    Blockwise7,
    /// Cells are masked independently.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimScenario {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub cov_structure: CovStructure,
    pub covariate_law: CovariateLaw,
    pub r2: f64,
    pub mechanism: Mechanism,
    pub pattern_family: PatternFamily,
    pub target_missing_rate: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            n: 500,
            p: 10,
            rho: 0.5,
            cov_structure: CovStructure::Exchangeable,
            covariate_law: CovariateLaw::Normal,
            r2: 0.6,
            mechanism: Mechanism::Mcar,
            pattern_family: PatternFamily::Blockwise7,
            target_missing_rate: 0.5,
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.p < N_DISCRETE + 2 {
            return bad(format!("p must be at least {}, got {}", N_DISCRETE + 2, self.p));
        }
        if self.n < 4 {
            return bad(format!("n must be at least 4, got {}", self.n));
        }
        if !(self.r2 > 0.0 && self.r2 < 1.0) {
            return bad(format!("r2 must lie in (0, 1), got {}", self.r2));
        }
        match self.cov_structure {
            CovStructure::Exchangeable if !(0.0..1.0).contains(&self.rho) => {
                return bad(format!("exchangeable rho must lie in [0, 1), got {}", self.rho));
            }
            CovStructure::Ar1 if !(self.rho.abs() < 1.0) => {
                return bad(format!("ar1 rho must lie in (-1, 1), got {}", self.rho));
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.target_missing_rate) {
            return bad(format!(
                "target missing rate must lie in [0, 1), got {}",
                self.target_missing_rate
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        let n_train = (self.train_fraction * self.n as f64).round() as usize;
        if n_train < 2 || n_train >= self.n {
            return bad("train/test split leaves an empty or singleton part".into());
        }
        Ok(())
    }

    pub fn continuous_dim(&self) -> usize {
        self.p - N_DISCRETE
    }

    pub fn schema(&self) -> Vec<ColumnSchema> {
        (0..self.p)
            .map(|j| {
                let name = format!("x{}", j + 1);
                if j < N_DISCRETE {
                    ColumnSchema::discrete(name, vec![0.0, 1.0])
                } else {
                    ColumnSchema::continuous(name)
                }
            })
            .collect()
    }
}

/// Generator for replication `replication` of a scenario seeded by `seed`.
pub fn rng_for(seed: u64, replication: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Covariance of the continuous block.
pub fn covariance(scenario: &SimScenario) -> DMatrix<f64> {
    let q = scenario.continuous_dim();
    let rho = scenario.rho;
    DMatrix::from_fn(q, q, |a, b| match scenario.cov_structure {
        _ if a == b => 1.0,
        CovStructure::Exchangeable => rho,
        CovStructure::Ar1 => rho.powi(a.abs_diff(b) as i32),
    })
}

/// Symmetric square root of a positive definite matrix.
pub fn sqrt_covariance(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sigma.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NonPositiveDefiniteCovariance);
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Draws the `n x p` covariate matrix.
pub fn gen_covariates(scenario: &SimScenario, rng: &mut ChaCha20Rng) -> Result<DMatrix<f64>> {
    let (n, p, q) = (scenario.n, scenario.p, scenario.continuous_dim());
    let root = sqrt_covariance(&covariance(scenario))?;
    let coin = Bernoulli::new(0.5).expect("valid probability");
    let mut x = DMatrix::zeros(n, p);
    let mut z = DVector::zeros(q);
    for i in 0..n {
        for j in 0..N_DISCRETE {
            x[(i, j)] = if coin.sample(rng) { 1.0 } else { 0.0 };
        }
        for v in z.iter_mut() {
            *v = match scenario.covariate_law {
                CovariateLaw::Normal => StandardNormal.sample(rng),
                CovariateLaw::Exponential => {
                    let e: f64 = Exp1.sample(rng);
                    e - 1.0
                }
            };
        }
        let mixed = &root * &z;
        for (k, v) in mixed.iter().enumerate() {
            x[(i, N_DISCRETE + k)] = *v;
        }
    }
    Ok(x)
}

/// Variance of `X * 1` under the scenario's covariate law.
pub fn signal_variance(scenario: &SimScenario) -> f64 {
    0.25 * N_DISCRETE as f64 + covariance(scenario).sum()
}

/// Noise variance giving the target R² for an all-ones coefficient vector.
pub fn calibrate_sigma2(scenario: &SimScenario) -> f64 {
    signal_variance(scenario) * (1.0 - scenario.r2) / scenario.r2
}

/// The seven observed-covariate sets, 0-based. The last covariate is in
/// every set; the others are split into three contiguous blocks.
pub fn blockwise_patterns(p: usize) -> Vec<Vec<usize>> {
    let m = p - 1;
    let cut1 = m.div_ceil(3);
    let cut2 = cut1 + (m - cut1).div_ceil(2);
    let blocks = [0..cut1, cut1..cut2, cut2..m];
    let combos: [&[usize]; 7] = [&[0], &[1], &[2], &[0, 1], &[0, 2], &[1, 2], &[0, 1, 2]];
    combos
        .iter()
        .map(|c| {
            let mut set: Vec<usize> = c.iter().flat_map(|&b| blocks[b].clone()).collect();
            set.push(p - 1);
            set
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskDraw {
    /// `true` where observed.
    pub mask: DMatrix<bool>,
    pub alpha: f64,
    pub realized_rate: f64,
}

/// Missingness units under the scenario: one per subject with block
/// patterns, one per eligible cell otherwise. Each unit carries the part
/// of its logit that does not depend on the intercept.
fn mechanism_offsets(scenario: &SimScenario, x: &DMatrix<f64>, eps: &[f64]) -> Vec<Vec<f64>> {
    let (n, p) = x.shape();
    let last = p - 1;
    let cell = |i: usize, j: usize| -> f64 {
        match scenario.mechanism {
            Mechanism::Mcar => 0.0,
            Mechanism::Mar => 0.5 * x[(i, last)],
            Mechanism::Mnar => eps[i],
            Mechanism::Mnar2 => eps[i] * eps[i],
            Mechanism::Mnar3 => {
                let prev = if j == 0 { 0.0 } else { x[(i, j - 1)] };
                let v = x[(i, j)];
                0.5 * v + 0.5 * v * v + 0.5 * v * prev
            }
        }
    };
    let columns = masked_columns(scenario);
    (0..n)
        .map(|i| match scenario.pattern_family {
            PatternFamily::Blockwise7 => {
                let h = if scenario.mechanism == Mechanism::Mnar3 {
                    (0..p).map(|j| cell(i, j)).sum::<f64>() / p as f64
                } else {
                    cell(i, 0)
                };
                vec![h]
            }
            PatternFamily::None => columns.clone().map(|j| cell(i, j)).collect(),
        })
        .collect()
}

/// Columns subject to cell-wise masking.
fn masked_columns(scenario: &SimScenario) -> std::ops::Range<usize> {
    if scenario.mechanism == Mechanism::Mnar3 {
        0..scenario.p
    } else {
        0..scenario.p - 1
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Masks `x` according to the scenario. The intercept is bisected until
/// the realized rate is within [`RATE_TOLERANCE`] of the target, or as
/// close as the sample allows.
pub fn assign_missing(
    scenario: &SimScenario,
    x: &DMatrix<f64>,
    eps: &[f64],
    rng: &mut ChaCha20Rng,
) -> Result<MaskDraw> {
    let (n, p) = x.shape();
    let target = scenario.target_missing_rate;
    let offsets = mechanism_offsets(scenario, x, eps);
    let uniforms: Vec<Vec<f64>> = offsets
        .iter()
        .map(|row| row.iter().map(|_| rng.random::<f64>()).collect())
        .collect();
    let units: usize = offsets.iter().map(Vec::len).sum();
    let rate = |alpha: f64| -> f64 {
        let hits: usize = offsets
            .iter()
            .zip(&uniforms)
            .map(|(h, u)| h.iter().zip(u).filter(|(h, u)| **u < sigmoid(alpha + **h)).count())
            .sum();
        hits as f64 / units as f64
    };

    let alpha = if target == 0.0 {
        f64::NEG_INFINITY
    } else {
        let (mut lo, mut hi) = (-ALPHA_BOUND, ALPHA_BOUND);
        if rate(lo) > target || rate(hi) < target {
            return Err(Error::CalibrationFailed { target });
        }
        let mut best = (f64::INFINITY, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let r = rate(mid);
            if (r - target).abs() < best.0 {
                best = ((r - target).abs(), mid);
            }
            if (r - target).abs() <= RATE_TOLERANCE / 2.0 {
                break;
            }
            if r < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best.1
    };

    let mut mask = DMatrix::from_element(n, p, true);
    let mut flagged = 0usize;
    let patterns = blockwise_patterns(p);
    let columns = masked_columns(scenario);
    for i in 0..n {
        match scenario.pattern_family {
            PatternFamily::Blockwise7 => {
                // The pattern draw happens for every subject to keep the
                // stream aligned across intercepts.
                let pattern = &patterns[rng.random_range(0..patterns.len())];
                if uniforms[i][0] < sigmoid(alpha + offsets[i][0]) {
                    flagged += 1;
                    for j in 0..p {
                        mask[(i, j)] = pattern.binary_search(&j).is_ok();
                    }
                }
            }
            PatternFamily::None => {
                for (c, j) in columns.clone().enumerate() {
                    if uniforms[i][c] < sigmoid(alpha + offsets[i][c]) {
                        flagged += 1;
                        mask[(i, j)] = false;
                    }
                }
            }
        }
    }
    // A fully masked column cannot be imputed; keep one observation.
    for j in 0..p {
        if (0..n).all(|i| !mask[(i, j)]) {
            mask[(0, j)] = true;
        }
    }
    Ok(MaskDraw {
        mask,
        alpha,
        realized_rate: flagged as f64 / units as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDraw {
    /// All subjects with the simulated mask applied.
    pub dataset: MissingDataset,
    pub x_true: DMatrix<f64>,
    pub y: DVector<f64>,
    pub epsilon: DVector<f64>,
    pub beta_true: DVector<f64>,
    pub sigma2: f64,
    pub alpha: f64,
    /// Realized missing rate in the calibration units.
    pub realized_rate: f64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SimDraw {
    pub fn train_dataset(&self) -> MissingDataset {
        self.dataset.subset(&self.train)
    }

    pub fn test_dataset(&self) -> MissingDataset {
        self.dataset.subset(&self.test)
    }

    pub fn train_truth(&self) -> DMatrix<f64> {
        self.x_true.select_rows(&self.train)
    }

    pub fn test_truth(&self) -> DMatrix<f64> {
        self.x_true.select_rows(&self.test)
    }
}

/// Replication `replication` of `scenario`, deterministic in both.
pub fn draw(scenario: &SimScenario, replication: u64) -> Result<SimDraw> {
    scenario.validate()?;
    let mut rng = rng_for(scenario.seed, replication);
    let (n, p) = (scenario.n, scenario.p);
    let x = gen_covariates(scenario, &mut rng)?;
    let sigma2 = calibrate_sigma2(scenario);
    let noise = Normal::new(0.0, sigma2.sqrt()).expect("finite variance");
    let epsilon = DVector::from_fn(n, |_, _| noise.sample(&mut rng));
    let beta_true = DVector::from_element(p, 1.0);
    let y = &x * &beta_true + &epsilon;
    let masked = assign_missing(scenario, &x, epsilon.as_slice(), &mut rng)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (scenario.train_fraction * n as f64).round() as usize;
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();

    let dataset = MissingDataset::new(
        y.as_slice().to_vec(),
        x.clone(),
        masked.mask,
        scenario.schema(),
    )?;
    Ok(SimDraw {
        dataset,
        x_true: x,
        y,
        epsilon,
        beta_true,
        sigma2,
        alpha: masked.alpha,
        realized_rate: masked.realized_rate,
        train,
        test,
    })
}
