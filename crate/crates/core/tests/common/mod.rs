#![allow(dead_code)]

use dlpa::action::{ParamAction, ParamActionSpec};
use dlpa::planner::{
    elite_weights, sample_sequences, select_elites, update_distribution, PlanDistribution,
    UpdateRule, SIGMA_FLOOR,
};
use dlpa::rng;
use rand::Rng;

struct Instance {
    prev: PlanDistribution,
    seqs: Vec<Vec<ParamAction>>,
    returns: Vec<f64>,
    elites: Vec<usize>,
    rule: UpdateRule,
}

fn instance(seed: u64) -> Instance {
    let mut r = rng::stream(seed, 0);
    let k = r.random_range(1..=4);
    let dims: Vec<usize> = (0..k).map(|_| r.random_range(0..=3)).collect();
    let spec = ParamActionSpec::new(dims).unwrap();
    let len = r.random_range(1..=4);
    let mut prev = if r.random_bool(0.3) {
        PlanDistribution::shared(&spec, len)
    } else {
        PlanDistribution::new(&spec, len)
    };
    for step in &mut prev.steps {
        let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.01..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        step.theta = raw.iter().map(|v| v / sum).collect();
        for v in step.mu.iter_mut().flatten() {
            *v = r.random_range(-1.0..1.0);
        }
        for v in step.sigma.iter_mut().flatten() {
            *v = r.random_range(SIGMA_FLOOR..1.0);
        }
    }
    let population = r.random_range(1..=24);
    let seqs = sample_sequences(&prev, population, r.random());
    let returns: Vec<f64> = (0..population)
        .map(|_| r.random_range(-20.0..20.0))
        .collect();
    let elites = select_elites(&returns, r.random_range(1..=population));
    let rule = UpdateRule {
        temperature: r.random_range(0.05..2.0),
        momentum: r.random_range(0.0..1.0),
        literal_eq6: false,
    };
    Instance {
        prev,
        seqs,
        returns,
        elites,
        rule,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn same(a: &PlanDistribution, b: &PlanDistribution, tol: f64) -> bool {
    a.steps.iter().zip(&b.steps).all(|(x, y)| {
        let pairs = x
            .theta
            .iter()
            .zip(&y.theta)
            .chain(x.mu.iter().flatten().zip(y.mu.iter().flatten()))
            .chain(x.sigma.iter().flatten().zip(y.sigma.iter().flatten()));
        pairs.into_iter().all(|(p, q)| close(*p, *q, tol))
    })
}

/// Checks every update invariant on one random instance.
pub fn check_update_algebra(seed: u64) -> Result<(), String> {
    let inst = instance(seed);
    let Instance {
        prev,
        seqs,
        returns,
        elites,
        rule,
    } = &inst;
    let update = |rets: &[f64], rule: &UpdateRule| {
        update_distribution(prev, seqs, elites, rets, rule).unwrap()
    };
    let next = update(returns, rule);

    if !next.is_valid() {
        return Err("update left the simplex or sigma floor".into());
    }

    let shift = 1e3 * (seed % 7) as f64 - 3e3;
    let shifted: Vec<f64> = returns.iter().map(|v| v + shift).collect();
    if !same(&next, &update(&shifted, rule), 1e-9) {
        return Err(format!("shifting returns by {shift} changed the update"));
    }

    for (t, step) in next.steps.iter().enumerate() {
        for g in 0..step.mu.len() {
            for j in 0..step.mu[g].len() {
                let supported = elites.iter().any(|&i| {
                    let a = &seqs[i][t];
                    prev.group(a.k) == g && j < a.z.len()
                });
                let old = &prev.steps[t];
                if !supported
                    && (step.mu[g][j] != old.mu[g][j] || step.sigma[g][j] != old.sigma[g][j])
                {
                    return Err(format!("unsupported gaussian {g}[{j}] at step {t} moved"));
                }
            }
        }
    }

    let frozen = update(
        returns,
        &UpdateRule {
            momentum: 1.0,
            ..*rule
        },
    );
    if !same(&frozen, prev, 1e-12) {
        return Err("full momentum changed the distribution".into());
    }

    let fresh = update(
        returns,
        &UpdateRule {
            momentum: 0.0,
            ..*rule
        },
    );
    let w = elite_weights(returns, elites, rule.temperature);
    for (t, step) in fresh.steps.iter().enumerate() {
        let mut freq = vec![0.0; step.theta.len()];
        for (wi, &i) in w.iter().zip(elites) {
            freq[seqs[i][t].k] += wi;
        }
        if !step
            .theta
            .iter()
            .zip(&freq)
            .all(|(a, b)| close(*a, *b, 1e-12))
        {
            return Err(format!(
                "zero momentum theta at step {t} is not the elite frequency"
            ));
        }
        for g in 0..step.mu.len() {
            for j in 0..step.mu[g].len() {
                let (mut mass, mut acc) = (0.0, 0.0);
                for (wi, &i) in w.iter().zip(elites) {
                    let a = &seqs[i][t];
                    if prev.group(a.k) == g && j < a.z.len() {
                        mass += wi;
                        acc += wi * a.z[j];
                    }
                }
                if mass > 0.0 && !close(step.mu[g][j], acc / mass, 1e-9) {
                    return Err(format!(
                        "zero momentum mean {g}[{j}] at step {t} is not the elite mean"
                    ));
                }
            }
        }
    }
    Ok(())
}
