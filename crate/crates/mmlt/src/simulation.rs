//! Synthetic-experiment engine (correlated designs, Student-t noise, lasso
//! candidate paths, criterion comparison) and the Boston-housing
//! cross-validation protocol.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::codelength::{structure_length, StructureCodingScheme};
use crate::criteria::{aicc, bic, CriterionName};
use crate::data::{Dataset, ModelStructure, Scheme, TParams};
use crate::dist::{neg_log_likelihood, sample_t, t_logpdf, TSpec};
use crate::error::{Error, Result};
use crate::estimation::{ml_fit, mml_fit, EMConfig};
use crate::search::{enumerate_structures, lasso_path_structures, select};

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub q: usize,
    pub support_size: usize,
    pub signal: f64,
    /// True degrees of freedom (INFINITY = Gaussian noise).
    pub true_nu: f64,
    pub true_tau: f64,
    pub replications: usize,
    pub rho: f64,
    pub seed: u64,
    pub n_lambda: usize,
}

impl SimConfig {
    pub fn new(support_size: usize, signal: f64, true_nu: f64, seed: u64) -> Self {
        Self {
            n_train: 50,
            n_test: 10_000,
            q: 15,
            support_size,
            signal,
            true_nu,
            true_tau: 1.0,
            replications: 100,
            rho: 0.5,
            seed,
            n_lambda: 100,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.support_size > self.q {
            return Err(Error::Validation("support_size exceeds q".into()));
        }
        if self.rho.abs() >= 1.0 {
            return Err(Error::Validation("|rho| must be < 1".into()));
        }
        if self.n_train < 3 || self.n_test == 0 || self.q == 0 || self.replications == 0 {
            return Err(Error::Validation("counts must be positive (n_train >= 3)".into()));
        }
        Ok(())
    }
}

/// Averages and Monte-Carlo standard errors over replications.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Metrics {
    pub empirical_kl: f64,
    pub kl_se: f64,
    pub mae: f64,
    pub mae_se: f64,
    pub false_positives: f64,
    pub fp_se: f64,
    pub false_negatives: f64,
    pub fn_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub config: SimConfig,
    pub per_criterion: Vec<(CriterionName, Metrics)>,
    pub failed_replications: usize,
}

/// Rows i.i.d. N(0, Q) with Q_ij = rho^|i-j|, via the AR(1) recursion
/// x_1 = z_1, x_j = rho x_{j-1} + sqrt(1-rho^2) z_j. Uncentered.
pub fn generate_design<R: Rng + ?Sized>(n: usize, q: usize, rho: f64, rng: &mut R) -> DMatrix<f64> {
    let s = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, q);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..q {
            let z: f64 = StandardNormal.sample(rng);
            let v = if j == 0 { z } else { rho * prev + s * z };
            x[(i, j)] = v;
            prev = v;
        }
    }
    x
}

/// y = beta0 + X beta + eps with beta_j = signal on the (1-based) support and
/// eps i.i.d. t(0, tau, nu).
pub fn generate_response<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    support: &[usize],
    signal: f64,
    beta0: f64,
    tau: f64,
    nu: f64,
    rng: &mut R,
) -> DVector<f64> {
    let n = x.nrows();
    let eps = sample_t(n, &TSpec { mu: 0.0, tau, nu }, rng);
    let mut y = DVector::from_element(n, beta0);
    for &j in support {
        for i in 0..n {
            y[i] += signal * x[(i, j - 1)];
        }
    }
    for i in 0..n {
        y[i] += eps[i];
    }
    y
}

/// Test-sample estimate of the per-observation KL divergence from the fitted
/// model to the truth: mean of log f_true(y_i) - log f_fit(y_i).
pub fn empirical_kl(
    y_test: &[f64],
    mu_true: &[f64],
    tau_true: f64,
    nu_true: f64,
    mu_fit: &[f64],
    tau_fit: f64,
    nu_fit: f64,
) -> Result<f64> {
    if y_test.len() != mu_true.len() || y_test.len() != mu_fit.len() {
        return Err(Error::Validation("empirical_kl length mismatch".into()));
    }
    let mut s = 0.0;
    for i in 0..y_test.len() {
        let lt = t_logpdf(y_test[i], &TSpec { mu: mu_true[i], tau: tau_true, nu: nu_true });
        let lf = t_logpdf(y_test[i], &TSpec { mu: mu_fit[i], tau: tau_fit, nu: nu_fit });
        s += lt - lf;
    }
    Ok(s / y_test.len() as f64)
}

struct RepOutcome {
    // per criterion: (kl, mae, fp, fn)
    rows: Vec<(f64, f64, f64, f64)>,
}

fn run_replication(
    config: &SimConfig,
    criteria: &[CriterionName],
    dof_grid: &[f64],
    em: &EMConfig,
    rep: usize,
) -> Result<RepOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(rep as u64 + 1);
    let support: Vec<usize> = (1..=config.support_size).collect();

    let x_train = generate_design(config.n_train, config.q, config.rho, &mut rng);
    let y_train = generate_response(
        &x_train, &support, config.signal, 0.0, config.true_tau, config.true_nu, &mut rng,
    );
    let names = (1..=config.q).map(|j| format!("x{j}")).collect();
    let train = Dataset::from_raw(x_train, y_train, names)?;

    let x_test = generate_design(config.n_test, config.q, config.rho, &mut rng);
    let mut mu_true = vec![0.0f64; config.n_test];
    for &j in &support {
        for i in 0..config.n_test {
            mu_true[i] += config.signal * x_test[(i, j - 1)];
        }
    }
    let eps = sample_t(
        config.n_test,
        &TSpec { mu: 0.0, tau: config.true_tau, nu: config.true_nu },
        &mut rng,
    );
    let y_test: Vec<f64> = mu_true.iter().zip(&eps).map(|(m, e)| m + e).collect();

    let candidates = lasso_path_structures(&train, config.n_lambda);
    // candidates come from a single path, so the model index is coded with
    // the nested scheme log(q+1) regardless of support shape
    let coding = StructureCodingScheme::new(Scheme::Nested, config.q)?;

    let mut rows = Vec::with_capacity(criteria.len());
    for &crit in criteria {
        let report = select(&train, &candidates, dof_grid, crit, &coding, em)?;
        let best = &report.best;
        let mu_fit = train.predict(&best.structure, &best.fit.params, &x_test)?;
        let mu_fit: Vec<f64> = mu_fit.iter().copied().collect();
        let kl = empirical_kl(
            &y_test,
            &mu_true,
            config.true_tau,
            config.true_nu,
            &mu_fit,
            best.fit.params.tau,
            best.fit.params.nu,
        )?;
        let mae = y_test
            .iter()
            .zip(&mu_fit)
            .map(|(y, m)| (y - m).abs())
            .sum::<f64>()
            / config.n_test as f64;
        let fp = best.structure.gamma.iter().filter(|j| !support.contains(j)).count() as f64;
        let fn_ = support.iter().filter(|j| !best.structure.contains(**j)).count() as f64;
        rows.push((kl, mae, fp, fn_));
    }
    Ok(RepOutcome { rows })
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Run the full replicated experiment. Replications use independent RNG
/// substreams indexed by replication number, so results are identical for any
/// execution order or worker count. Fit failures skip the replication; more
/// than 5% failures is an error.
pub fn run_experiment(
    config: &SimConfig,
    criteria: &[CriterionName],
    dof_grid: &[f64],
    em: &EMConfig,
) -> Result<ExperimentResult> {
    config.validate()?;
    if criteria.is_empty() {
        return Err(Error::Validation("no criteria".into()));
    }
    let outcomes: Vec<Option<RepOutcome>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, criteria, dof_grid, em, rep).ok())
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    if failed * 20 > config.replications {
        return Err(Error::Numerical(format!(
            "{failed}/{} replications failed (over the 5% budget)",
            config.replications
        )));
    }
    let ok: Vec<&RepOutcome> = outcomes.iter().flatten().collect();
    let mut per_criterion = Vec::with_capacity(criteria.len());
    for (ci, &crit) in criteria.iter().enumerate() {
        let col = |f: fn(&(f64, f64, f64, f64)) -> f64| -> Vec<f64> {
            ok.iter().map(|o| f(&o.rows[ci])).collect()
        };
        let (kl, kl_se) = mean_se(&col(|r| r.0));
        let (mae, mae_se) = mean_se(&col(|r| r.1));
        let (fp, fp_se) = mean_se(&col(|r| r.2));
        let (fn_, fn_se) = mean_se(&col(|r| r.3));
        per_criterion.push((
            crit,
            Metrics {
                empirical_kl: kl,
                kl_se,
                mae,
                mae_se,
                false_positives: fp,
                fp_se,
                false_negatives: fn_,
                fn_se,
            },
        ));
    }
    Ok(ExperimentResult { config: config.clone(), per_criterion, failed_replications: failed })
}

/// Cross-validation table: per criterion and per dof value, average test NLL
/// (per observation) and mean absolute prediction error across splits, plus
/// the frequency with which each dof was chosen by the joint best model.
#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub dof: Vec<f64>,
    pub criteria: Vec<CriterionName>,
    /// nll[criterion][dof]
    pub nll: Vec<Vec<f64>>,
    /// mae[criterion][dof]
    pub mae: Vec<Vec<f64>>,
    /// dof_freq[criterion][dof]: fraction of splits where the joint best
    /// (structure, dof) candidate used this dof
    pub dof_freq: Vec<Vec<f64>>,
    pub splits: usize,
}

struct CellFit {
    mml_value: f64,
    mml_params: TParams,
    ml_nll: f64,
    ml_params: TParams,
}

/// Repeated random half/half splits of the dataset with exhaustive
/// all-subsets selection per split. MML rows are evaluated with MML-fitted
/// coefficients; BIC/AICc rows with maximum-likelihood coefficients.
pub fn boston_cv(
    dataset: &Dataset,
    splits: usize,
    dof_grid: &[f64],
    seed: u64,
    em: &EMConfig,
) -> Result<CvReport> {
    if splits == 0 {
        return Err(Error::Validation("need at least one split".into()));
    }
    let structures = enumerate_structures(dataset.q, Scheme::AllSubsets)?;
    let coding = StructureCodingScheme::new(Scheme::AllSubsets, dataset.q)?;
    let criteria = vec![CriterionName::Mml, CriterionName::Bic, CriterionName::Aicc];
    let nd = dof_grid.len();
    let n_half = dataset.n / 2;

    let mut nll_acc = vec![vec![0.0f64; nd]; criteria.len()];
    let mut mae_acc = vec![vec![0.0f64; nd]; criteria.len()];
    let mut freq_acc = vec![vec![0.0f64; nd]; criteria.len()];

    for split in 0..splits {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(split as u64 + 1);
        let mut idx: Vec<usize> = (0..dataset.n).collect();
        // Fisher-Yates shuffle
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let train_idx = &idx[..n_half];
        let test_idx = &idx[n_half..];
        let train = dataset.subset_rows(train_idx)?;
        let n_test = test_idx.len();
        let mut x_test = DMatrix::zeros(n_test, dataset.q);
        let mut y_test = vec![0.0f64; n_test];
        for (i, &r) in test_idx.iter().enumerate() {
            y_test[i] = dataset.y[r];
            for j in 0..dataset.q {
                x_test[(i, j)] = dataset.x[(r, j)] + dataset.means[j];
            }
        }

        // all (structure, dof) fits for this split
        let jobs: Vec<(usize, usize)> = (0..structures.len())
            .flat_map(|si| (0..nd).map(move |di| (si, di)))
            .collect();
        let cells: Vec<Option<CellFit>> = jobs
            .par_iter()
            .map(|&(si, di)| {
                let s = &structures[si];
                let nu = dof_grid[di];
                let st_len = structure_length(&coding, s.p()).ok()?;
                let mml = mml_fit(&train, s, nu, em).ok()?;
                let ml = ml_fit(&train, s, nu, em).ok()?;
                Some(CellFit {
                    mml_value: mml.objective + st_len,
                    mml_params: mml.params,
                    ml_nll: ml.objective,
                    ml_params: ml.params,
                })
            })
            .collect();

        for (ci, &crit) in criteria.iter().enumerate() {
            let score = |cell: &CellFit, p: usize| -> Option<f64> {
                match crit {
                    CriterionName::Mml => Some(cell.mml_value),
                    CriterionName::Bic => Some(bic(cell.ml_nll, p + 2, train.n)),
                    CriterionName::Aicc => aicc(cell.ml_nll, p + 2, train.n).ok(),
                    CriterionName::Mdl => None,
                }
            };
            let mut joint_best: Option<(f64, usize)> = None; // (value, dof index)
            for di in 0..nd {
                // best structure at this dof
                let mut best: Option<(f64, usize)> = None;
                for si in 0..structures.len() {
                    if let Some(cell) = &cells[si * nd + di] {
                        if let Some(v) = score(cell, structures[si].p()) {
                            if best.map_or(true, |(bv, _)| v < bv) {
                                best = Some((v, si));
                            }
                        }
                    }
                }
                let (bv, si) = best
                    .ok_or_else(|| Error::Numerical("all fits failed at a dof value".into()))?;
                if joint_best.map_or(true, |(jv, _)| bv < jv) {
                    joint_best = Some((bv, di));
                }
                let cell = cells[si * nd + di].as_ref().unwrap();
                let params = if crit == CriterionName::Mml { &cell.mml_params } else { &cell.ml_params };
                let mu = dataset_predict(&train, &structures[si], params, &x_test)?;
                let nll =
                    neg_log_likelihood(&y_test, &mu, params.tau, params.nu)? / n_test as f64;
                let mae = y_test
                    .iter()
                    .zip(&mu)
                    .map(|(y, m)| (y - m).abs())
                    .sum::<f64>()
                    / n_test as f64;
                nll_acc[ci][di] += nll;
                mae_acc[ci][di] += mae;
            }
            let (_, best_di) = joint_best.unwrap();
            freq_acc[ci][best_di] += 1.0;
        }
    }
    let sf = splits as f64;
    for ci in 0..criteria.len() {
        for di in 0..nd {
            nll_acc[ci][di] /= sf;
            mae_acc[ci][di] /= sf;
            freq_acc[ci][di] /= sf;
        }
    }
    Ok(CvReport {
        dof: dof_grid.to_vec(),
        criteria,
        nll: nll_acc,
        mae: mae_acc,
        dof_freq: freq_acc,
        splits,
    })
}

fn dataset_predict(
    train: &Dataset,
    structure: &ModelStructure,
    params: &TParams,
    x_raw: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    Ok(train.predict(structure, params, x_raw)?.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn design_correlation_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = generate_design(100_000, 3, 0.5, &mut rng);
        let n = x.nrows() as f64;
        let col_corr = |a: usize, b: usize| {
            let (ma, mb) = (x.column(a).sum() / n, x.column(b).sum() / n);
            let mut num = 0.0;
            let mut va = 0.0;
            let mut vb = 0.0;
            for i in 0..x.nrows() {
                let da = x[(i, a)] - ma;
                let db = x[(i, b)] - mb;
                num += da * db;
                va += da * da;
                vb += db * db;
            }
            num / (va.sqrt() * vb.sqrt())
        };
        assert!((col_corr(0, 1) - 0.5).abs() < 0.01);
        assert!((col_corr(0, 2) - 0.25).abs() < 0.01);
        // rho = 0: independent standard normal columns
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0 = generate_design(100_000, 2, 0.0, &mut rng);
        let n = x0.nrows() as f64;
        let m0 = x0.column(0).sum() / n;
        let m1 = x0.column(1).sum() / n;
        let mut num = 0.0;
        for i in 0..x0.nrows() {
            num += (x0[(i, 0)] - m0) * (x0[(i, 1)] - m1);
        }
        assert!((num / n).abs() < 0.01);
        // determinism
        let a = generate_design(5, 3, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = generate_design(5, 3, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn response_moments_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = generate_design(50_000, 2, 0.5, &mut rng);
        let y = generate_response(&x, &[], 0.0, 0.0, 1.0, f64::INFINITY, &mut rng);
        let n = y.len() as f64;
        let mean = y.sum() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.05);
        let mk = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let x = generate_design(10, 2, 0.5, &mut r);
            generate_response(&x, &[1], 2.0, 0.5, 1.0, 5.0, &mut r)
        };
        assert_eq!(mk(7), mk(7));
    }

    #[test]
    fn empirical_kl_hand_case() {
        let y = [0.0, 1.0, -1.0, 2.0, 0.5];
        let mu_t = [0.0, 0.5, -0.5, 1.5, 0.0];
        let mu_f = [0.1, 0.4, -0.6, 1.2, 0.3];
        let v = empirical_kl(&y, &mu_t, 1.0, 5.0, &mu_f, 1.3, f64::INFINITY).unwrap();
        let mut oracle = 0.0;
        for i in 0..5 {
            oracle += t_logpdf(y[i], &TSpec { mu: mu_t[i], tau: 1.0, nu: 5.0 })
                - t_logpdf(y[i], &TSpec { mu: mu_f[i], tau: 1.3, nu: f64::INFINITY });
        }
        assert_relative_eq!(v, oracle / 5.0, max_relative = 1e-12);
        // identical models give exactly zero
        let z = empirical_kl(&y, &mu_t, 1.0, 5.0, &mu_t, 1.0, 5.0).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn tiny_experiment_is_deterministic() {
        let mut cfg = SimConfig::new(3, 2.0, 5.0, 99);
        cfg.replications = 2;
        cfg.n_test = 500;
        let dof = [1.0, 5.0, f64::INFINITY];
        let crits = [CriterionName::Mml, CriterionName::Bic];
        let a = run_experiment(&cfg, &crits, &dof, &EMConfig::default()).unwrap();
        let b = run_experiment(&cfg, &crits, &dof, &EMConfig::default()).unwrap();
        for (ra, rb) in a.per_criterion.iter().zip(&b.per_criterion) {
            assert_eq!(ra.1.empirical_kl, rb.1.empirical_kl);
            assert_eq!(ra.1.mae, rb.1.mae);
        }
        assert_eq!(a.failed_replications, 0);
        for (_, m) in &a.per_criterion {
            assert!(m.false_positives + m.false_negatives <= cfg.q as f64);
        }
    }
}
