//! On-demand oracle suite: estimator properties checked against exhaustive
//! enumeration on seeded built-in instances.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{Matrix, Method};
use crate::error::Result;
use crate::explain::{exact_lerg_s, exact_shapley, fit_lerg_l, fit_lime, lerg_s, sampled_shapley, Convention};
use crate::models::{Generator, TableModel};
use crate::perturb::PerturbPlan;
use crate::rng::{derive_seed, seeded_rng};
use crate::synth::{additive_instance, cause_dominance_instance, ngram_instance, step_dominance_instance};
use crate::text::{Example, SegmentedText};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// The measured deviation or count the check compares.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub schema: u32,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

/// Size of each family in the suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteSize {
    pub additive: usize,
    pub efficiency: usize,
    pub dominance: usize,
    pub convergence: usize,
    pub regression: usize,
}

impl Default for SuiteSize {
    fn default() -> Self {
        Self {
            additive: 50,
            efficiency: 20,
            dominance: 50,
            convergence: 20,
            regression: 10,
        }
    }
}

fn outcome(name: &str, passed: bool, measured: f64, threshold: f64, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed,
        measured,
        threshold,
        detail,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// LERG_S and exact LERG_S return `W` on additive toys.
pub fn check_additive_exactness(seed: u64, count: usize) -> Result<CheckOutcome> {
    let mut rng = seeded_rng(derive_seed(seed, "additive"));
    let mut worst = 0.0f64;
    for k in 0..count {
        let (m, n) = (rng.gen_range(1..=12), rng.gen_range(1..=6));
        let (toy, ex) = additive_instance(rng.gen(), m, n)?;
        let w = Matrix::from_rows(toy.weights())?;
        let plan = PerturbPlan::with_seed(derive_seed(seed, &format!("additive{k}")));
        worst = worst.max(lerg_s(&toy, &ex, &plan)?.phi.max_abs_diff(&w));
        worst = worst.max(exact_lerg_s(&toy, &ex)?.phi.max_abs_diff(&w));
    }
    Ok(outcome(
        "additive_exactness",
        worst <= 1e-9,
        worst,
        1e-9,
        format!("{count} instances, max |phi - W|"),
    ))
}

/// `Σ_ij Φ_ij = log P(y|x) - log P(y|∅)` for classical exact Shapley on
/// log gains.
pub fn check_efficiency(seed: u64, count: usize) -> Result<CheckOutcome> {
    let mut rng = seeded_rng(derive_seed(seed, "efficiency"));
    let mut worst = 0.0f64;
    for _ in 0..count {
        let (m, n) = (rng.gen_range(1..=10), rng.gen_range(1..=5));
        let (model, ex) = ngram_instance(seed, rng.gen(), m, n)?;
        let e = exact_shapley(&model, &ex, true, Convention::Classical)?;
        let full = model.score(ex.context.segments(), ex.response.segments())?;
        let empty = model.score(&[], ex.response.segments())?;
        worst = worst.max((e.phi.sum() - (full.total() - empty.total())).abs());
        for j in 0..n {
            let col: f64 = e.phi.column(j).iter().sum();
            worst = worst.max((col - (full.0[j] - empty.0[j])).abs());
        }
    }
    Ok(outcome(
        "property1_efficiency",
        worst <= 1e-9,
        worst,
        1e-9,
        format!("{count} n-gram instances, max efficiency gap"),
    ))
}

/// Step dominance implies `Φ_ij > Φ_ij'` under both exact estimators.
pub fn check_step_consistency(seed: u64, count: usize) -> Result<CheckOutcome> {
    let mut held = 0usize;
    for k in 0..count {
        let inst = step_dominance_instance(derive_seed(seed, &format!("step{k}")))?;
        if !inst.premise_holds() {
            continue;
        }
        let a = exact_lerg_s(&inst.model, &inst.example)?;
        let b = exact_shapley(&inst.model, &inst.example, true, Convention::Classical)?;
        if a.get(inst.i, inst.j) > a.get(inst.i, inst.j2) && b.get(inst.i, inst.j) > b.get(inst.i, inst.j2) {
            held += 1;
        }
    }
    Ok(outcome(
        "property2_consistency",
        held == count,
        held as f64,
        count as f64,
        format!("{held}/{count} instances ordered as required"),
    ))
}

/// Cause dominance implies `Φ_ij > Φ_i'j` under the exact estimators.
pub fn check_cause_identification(seed: u64, count: usize) -> Result<CheckOutcome> {
    let mut held = 0usize;
    for k in 0..count {
        let inst = cause_dominance_instance(derive_seed(seed, &format!("cause{k}")))?;
        if !inst.premise_holds() {
            continue;
        }
        let ok = [
            exact_lerg_s(&inst.model, &inst.example)?,
            exact_shapley(&inst.model, &inst.example, true, Convention::Classical)?,
            exact_shapley(&inst.model, &inst.example, false, Convention::Classical)?,
        ]
        .iter()
        .all(|e| e.get(inst.i, inst.j) > e.get(inst.i2, inst.j));
        if ok {
            held += 1;
        }
    }
    Ok(outcome(
        "property3_cause_identification",
        held == count,
        held as f64,
        count as f64,
        format!("{held}/{count} instances ordered as required"),
    ))
}

/// Sampled estimators against their exact oracles on n-gram instances:
/// max error at 1000 samples within 0.05 and median error shrinking from
/// 250 to 4000 samples.
pub fn check_convergence(seed: u64, count: usize, method: Method) -> Result<Vec<CheckOutcome>> {
    let mut rng = seeded_rng(derive_seed(seed, "convergence"));
    let mut errors = [Vec::new(), Vec::new(), Vec::new()];
    for k in 0..count {
        let (m, n) = (rng.gen_range(2..=10), rng.gen_range(1..=4));
        let (model, ex) = ngram_instance(seed, rng.gen(), m, n)?;
        let exact = match method {
            Method::LergS => exact_lerg_s(&model, &ex)?,
            _ => exact_shapley(&model, &ex, false, Convention::FootnoteRange)?,
        };
        for (slot, samples) in [250, 1000, 4000].into_iter().enumerate() {
            let plan = PerturbPlan::with_seed(derive_seed(seed, &format!("mc{k}"))).with_samples(samples);
            let est = match method {
                Method::LergS => lerg_s(&model, &ex, &plan)?,
                _ => sampled_shapley(&model, &ex, &plan, true)?,
            };
            errors[slot].push(est.phi.max_abs_diff(&exact.phi));
        }
    }
    let worst = errors[1].iter().copied().fold(0.0, f64::max);
    let (small, large) = (median(errors[0].clone()), median(errors[2].clone()));
    let name = method.name().replace('-', "_");
    Ok(vec![
        outcome(
            &format!("{name}_error_at_1000"),
            worst <= 0.05,
            worst,
            0.05,
            format!("{count} n-gram instances, max over instances of max |phi - exact|"),
        ),
        outcome(
            &format!("{name}_convergence"),
            large < small,
            large,
            small,
            format!("median error {small:.3e} at 250 samples vs {large:.3e} at 4000"),
        ),
    ])
}

/// Table model whose step probabilities are `c0 + Σ z_i c_i`.
pub fn planted_linear_instance(seed: u64, m: usize, n: usize) -> Result<(TableModel, Example, Vec<Vec<f64>>)> {
    let mut rng = seeded_rng(seed);
    let coef: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(0.0..0.9 / m as f64)).collect()).collect();
    let intercept: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.1)).collect();
    let context: Vec<String> = (0..m).map(|i| format!("x{i}")).collect();
    let model = TableModel::from_fn(context.clone(), n, |z| {
        (0..n)
            .map(|j| {
                let p = intercept[j] + z.kept_indices().iter().map(|&i| coef[i][j]).sum::<f64>();
                p.ln()
            })
            .collect()
    })?;
    let response: Vec<String> = (0..n).map(|j| format!("y{j}")).collect();
    let ex = Example::new(
        "planted",
        SegmentedText::from_segments(&context)?,
        SegmentedText::from_segments(&response)?,
    );
    Ok((model, ex, coef))
}

/// LIME and LERG_L recover planted linear gains.
pub fn check_regression_recovery(seed: u64, count: usize) -> Result<CheckOutcome> {
    let mut rng = seeded_rng(derive_seed(seed, "regression"));
    let mut worst = 0.0f64;
    for k in 0..count {
        let (m, n) = (rng.gen_range(4..=10), rng.gen_range(1..=4));
        let (model, ex, coef) = planted_linear_instance(rng.gen(), m, n)?;
        let plan = PerturbPlan::with_seed(derive_seed(seed, &format!("regression{k}")));
        let lime = fit_lime(&model, &ex, &plan)?;
        let lerg = fit_lerg_l(&model, &ex, &plan)?;
        let full = model.score(ex.context.segments(), ex.response.segments())?;
        for i in 0..m {
            for j in 0..n {
                worst = worst.max((lime.get(i, j) - coef[i][j]).abs());
                worst = worst.max((lerg.get(i, j) - coef[i][j] / full.0[j].exp()).abs());
            }
        }
    }
    Ok(outcome(
        "regression_recovery",
        worst <= 1e-3,
        worst,
        1e-3,
        format!("{count} planted instances, LIME and LERG_L max coefficient error"),
    ))
}

/// Runs the whole suite.
pub fn run_oracle_checks(seed: u64, size: SuiteSize) -> Result<OracleReport> {
    let mut checks = vec![
        check_additive_exactness(seed, size.additive)?,
        check_efficiency(seed, size.efficiency)?,
        check_step_consistency(seed, size.dominance)?,
        check_cause_identification(seed, size.dominance)?,
    ];
    checks.extend(check_convergence(seed, size.convergence, Method::LergS)?);
    checks.extend(check_convergence(seed, size.convergence, Method::Shapley)?);
    checks.push(check_regression_recovery(seed, size.regression)?);
    Ok(OracleReport {
        schema: 1,
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
