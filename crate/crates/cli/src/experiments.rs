//! Runs one configured experiment.

use serde::Serialize;
use wfduality_core::bcre::{self, Engine};
use wfduality_core::bridge::{extinction_corroboration, fixation_via_duality};
use wfduality_core::duality::{annealed_check, convergence_experiment, moment_check, quenched_check, DualityReport};
use wfduality_core::fvwrs::{AbsorptionScan, Fvwrs, JumpKind, PathX, ABSORPTION_EPS};
use wfduality_core::stats::{replicate_map, replicate_map_init, z_score, Estimate};
use wfduality_core::thresholds::{alpha_star_monte_carlo, beta_star_monte_carlo, classify, Classification};
use wfduality_core::wf_graph::{simulate_ancestry, simulate_frequency, EnvSequence};
use wfduality_core::Streams;

use crate::config::{Direction, Experiment, ExperimentConfig};
use crate::output::{Metric, Table, Verdict};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub metrics: Vec<Metric>,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<Table>,
    pub report: serde_json::Value,
}

impl Outcome {
    fn new() -> Self {
        Outcome { metrics: Vec::new(), verdicts: Vec::new(), tables: Vec::new(), report: serde_json::Value::Null }
    }

    fn estimate(&mut self, name: impl Into<String>, e: Estimate) {
        self.metrics.push(Metric { name: name.into(), value: e.mean, se: Some(e.se) });
    }

    fn value(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push(Metric { name: name.into(), value, se: None });
    }

    fn z_verdict(&mut self, name: impl Into<String>, z: f64, threshold: f64) {
        self.verdicts.push(Verdict { name: name.into(), statistic: z, threshold, passed: z.abs() < threshold });
    }

    fn report<T: Serialize>(&mut self, value: &T) {
        self.report = serde_json::to_value(value).expect("serializable");
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

/// Runs the experiment on the current rayon pool.
pub fn execute(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let streams = Streams::new(config.seed).fork_named(config.experiment.kind());
    let m = config.replicates;
    let record = config.output.record_paths.min(m);
    let thr = config.z_threshold;
    let mut out = Outcome::new();
    match &config.experiment {
        Experiment::SimulateX { params, x0, horizon, dt } => {
            let sim = Fvwrs::new(params, *dt)?;
            let runs: Vec<(f64, Option<PathX>)> = replicate_map(&streams, m, |i, rng| {
                if i < record {
                    let path = sim.path(*x0, *horizon, true, rng).expect("validated");
                    (*path.values.last().unwrap(), Some(path))
                } else {
                    (sim.terminal(*x0, *horizon, rng), None)
                }
            });
            let finals: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let scan = AbsorptionScan::classify(*horizon, &finals, ABSORPTION_EPS);
            out.estimate("mean_x", Estimate::from_samples(&finals));
            out.estimate("fraction_at_0", scan.at_0);
            out.estimate("fraction_at_1", scan.at_1);
            out.estimate("fraction_interior", scan.interior);
            let mut paths = Table::new("x_paths", &["replicate", "time", "x"]);
            let mut jumps = Table::new("x_jumps", &["replicate", "time", "kind", "before", "after"]);
            for (i, path) in runs.iter().enumerate().filter_map(|(i, r)| r.1.as_ref().map(|p| (i, p))) {
                for (k, &x) in path.values.iter().enumerate() {
                    paths.push([i.to_string(), f(path.time(k)), f(x)]);
                }
                for j in &path.jumps {
                    let kind = match j.kind {
                        JumpKind::Selection => "selection",
                        JumpKind::Coalescence => "coalescence",
                    };
                    jumps.push([i.to_string(), f(j.time), kind.to_string(), f(j.before), f(j.after)]);
                }
            }
            out.report(&scan);
            out.tables.extend([paths, jumps]);
        }
        Experiment::SimulateZ { params, n0, horizon, bcre: opts } => {
            let census = bcre::terminal_census(params, *n0, *horizon, m, *opts, &streams.fork_named("census"))?;
            let states: Vec<f64> = census.states.iter().map(|&k| k as f64).collect();
            out.estimate("mean_z", Estimate::from_samples(&states));
            out.estimate("fraction_z_1", Estimate::proportion(census.states.iter().filter(|&&k| k == 1).count(), m));
            out.value("explosions", census.explosions as f64);
            let mut pmf = std::collections::BTreeMap::new();
            for &k in &census.states {
                *pmf.entry(k).or_insert(0usize) += 1;
            }
            let mut terminal = Table::new("z_terminal", &["z", "probability"]);
            for (k, c) in pmf {
                terminal.push([k.to_string(), f(c as f64 / m as f64)]);
            }
            let paths = replicate_map_init(
                &streams.fork_named("paths"),
                record,
                || Engine::new(params, *opts).expect("validated"),
                |engine, _, rng| {
                    let mut events = Vec::new();
                    let end = engine.run(*n0, *horizon, rng, |t, from, to| events.push((t, from, to)));
                    (events, end.is_err())
                },
            );
            let mut table = Table::new("z_paths", &["replicate", "time", "from", "to"]);
            for (i, (events, _)) in paths.iter().enumerate() {
                table.push([i.to_string(), f(0.0), n0.to_string(), n0.to_string()]);
                for &(t, from, to) in events {
                    table.push([i.to_string(), f(t), from.to_string(), to.to_string()]);
                }
            }
            out.report(&serde_json::json!({ "explosions": census.explosions, "ceiling": opts.ceiling }));
            out.tables.extend([table, terminal]);
        }
        Experiment::SimulateFinite { model, direction, start, generations, env } => {
            let fixed = env.as_ref().map(|v| EnvSequence::given(v.clone())).transpose()?;
            let runs: Vec<(Vec<usize>, Vec<f64>)> = replicate_map(&streams, m, |_, rng| {
                let env = fixed.clone().unwrap_or_else(|| model.draw_environment(*generations, rng));
                let counts = match direction {
                    Direction::Forward => simulate_frequency(model, *start, &env, rng).expect("validated").counts,
                    Direction::Backward => simulate_ancestry(model, *start, &env, rng).expect("validated").counts,
                };
                (counts, env.values)
            });
            let size = model.population_size() as f64;
            let finals: Vec<f64> = runs
                .iter()
                .map(|(c, _)| {
                    let last = *c.last().unwrap() as f64;
                    if *direction == Direction::Forward {
                        last / size
                    } else {
                        last
                    }
                })
                .collect();
            let name = if *direction == Direction::Forward { "mean_final_fraction" } else { "mean_final_blocks" };
            out.estimate(name, Estimate::from_samples(&finals));
            let mut table = Table::new("finite_paths", &["replicate", "generation", "env", "count"]);
            for (i, (counts, env)) in runs.iter().take(record).enumerate() {
                for (g, &c) in counts.iter().enumerate() {
                    // Forward: env[g] drives the step out of generation g.
                    // Backward: step g consumes env from the end.
                    let y = match direction {
                        Direction::Forward => env.get(g),
                        Direction::Backward => env.len().checked_sub(g + 1).and_then(|k| env.get(k)),
                    };
                    table.push([i.to_string(), g.to_string(), y.map_or(String::new(), |&y| f(y)), c.to_string()]);
                }
            }
            out.tables.push(table);
        }
        Experiment::DualityQuenched { model, env, generations, x, n } => {
            let env = match (env, generations) {
                (Some(v), _) => EnvSequence::given(v.clone())?,
                (None, Some(g)) => model.draw_environment(g + 1, &mut streams.fork_named("env").rng(0)),
                (None, None) => unreachable!("validated"),
            };
            let mut reports = Vec::new();
            for (i, (&x, &n)) in cells(x, n).enumerate() {
                reports.push(quenched_check(model, &env, x, n, m, thr, &streams.fork_named("cell").fork(i as u64))?);
            }
            let mut env_table = Table::new("environment", &["generation", "y"]);
            for (g, &y) in env.values.iter().enumerate() {
                env_table.push([g.to_string(), f(y)]);
            }
            duality_outcome(&mut out, &reports);
            out.report(&serde_json::json!({ "env": env.values, "cells": reports }));
            out.tables.push(env_table);
        }
        Experiment::DualityAnnealed { model, generations, x, n } => {
            let mut reports = Vec::new();
            for (i, (&x, &n)) in cells(x, n).enumerate() {
                reports.push(annealed_check(model, *generations, x, n, m, thr, &streams.fork_named("cell").fork(i as u64))?);
            }
            duality_outcome(&mut out, &reports);
            out.report(&reports);
        }
        Experiment::DualityMoment { params, x, n, t, dt, bcre: opts } => {
            let mut reports = Vec::new();
            let mut i = 0u64;
            for &t in t {
                for (&x, &n) in cells(x, n) {
                    reports.push(moment_check(params, x, n, t, m, *dt, *opts, thr, &streams.fork_named("cell").fork(i))?);
                    i += 1;
                }
            }
            duality_outcome(&mut out, &reports);
            out.report(&reports);
        }
        Experiment::Thresholds { params, tol, monte_carlo, corroboration } => {
            let report = classify(params, *tol)?;
            out.value("beta_star", report.beta_star);
            out.value("alpha_star", report.alpha_star);
            out.value("alpha_eff", report.alpha_eff);
            out.value("drift_threshold", report.drift_threshold);
            out.value("margin", report.margin);
            if let Some(samples) = *monte_carlo {
                if params.lambda_c().total_mass() > 0.0 {
                    let e = beta_star_monte_carlo(params.lambda_c(), samples, &streams.fork_named("beta"))?;
                    out.estimate("beta_star_monte_carlo", e);
                    out.z_verdict("beta_star_monte_carlo", z_score(e.mean, e.se, report.beta_star, 0.0), thr);
                }
                if params.alpha_s() > 0.0 {
                    let e = alpha_star_monte_carlo(params.kernel(), params.lambda_s(), samples, &streams.fork_named("alpha"))?;
                    out.estimate("alpha_star_monte_carlo", e);
                    out.z_verdict("alpha_star_monte_carlo", z_score(e.mean, e.se, report.alpha_star, 0.0), thr);
                }
            }
            let mut extinction = None;
            if let Some(c) = corroboration {
                if report.classification != Classification::ExtinctionAlmostSure {
                    return Err(wfduality_core::Error::RegimeMismatch {
                        expected: Classification::ExtinctionAlmostSure.name(),
                        found: report.classification.name(),
                    }
                    .into());
                }
                let r = extinction_corroboration(params, c.x, &c.horizons, m, c.dt, c.n0, c.level, c.bcre, &streams.fork_named("extinction"))?;
                let mut table = Table::new(
                    "extinction",
                    &["horizon", "at_0", "at_0_se", "at_1", "at_1_se", "interior", "z_below", "z_below_se"],
                );
                for (scan, below) in r.scans.iter().zip(&r.below) {
                    table.push([
                        f(scan.horizon),
                        f(scan.at_0.mean),
                        f(scan.at_0.se),
                        f(scan.at_1.mean),
                        f(scan.at_1.se),
                        f(scan.interior.mean),
                        f(below.mean),
                        f(below.se),
                    ]);
                    out.estimate(format!("fraction_at_0/t={}", scan.horizon), scan.at_0);
                    out.estimate(format!("z_below_{}/t={}", r.level, scan.horizon), *below);
                }
                out.verdicts.push(Verdict {
                    name: "absorption_nondecreasing".into(),
                    statistic: f64::from(u8::from(r.absorption_nondecreasing(thr))),
                    threshold: thr,
                    passed: r.absorption_nondecreasing(thr),
                });
                out.verdicts.push(Verdict {
                    name: "z_below_decreasing".into(),
                    statistic: f64::from(u8::from(r.below_decreasing(thr))),
                    threshold: thr,
                    passed: r.below_decreasing(thr),
                });
                out.tables.push(table);
                extinction = Some(r);
            }
            out.report(&serde_json::json!({ "classification": report, "extinction": extinction }));
        }
        Experiment::Fixation { params, x, budget } => {
            let budget = wfduality_core::bridge::FixationBudget { paths: m, ..*budget };
            let r = fixation_via_duality(params, x, &budget, &streams)?;
            let mut table = Table::new(
                "fixation",
                &["x", "predicted", "predicted_se", "simulated", "simulated_se", "interior", "z"],
            );
            for i in 0..r.x.len() {
                let label = format!("x={}", r.x[i]);
                out.estimate(format!("predicted/{label}"), r.predicted[i]);
                out.estimate(format!("simulated/{label}"), r.simulated[i]);
                out.z_verdict(format!("fixation/{label}"), r.z[i], thr);
                table.push([
                    f(r.x[i]),
                    f(r.predicted[i].mean),
                    f(r.predicted[i].se),
                    f(r.simulated[i].mean),
                    f(r.simulated[i].se),
                    f(r.interior[i].mean),
                    f(r.z[i]),
                ]);
            }
            out.value("half_tv", r.half_tv);
            out.report(&r);
            out.tables.push(table);
        }
        Experiment::Convergence { params, sizes, scheme, x, n, t, dt } => {
            let r = convergence_experiment(params, sizes, scheme, *x, *n, *t, m, *dt, &streams)?;
            out.estimate("limit", r.limit);
            let mut table = Table::new(
                "convergence",
                &["population_size", "rho", "generations", "merger_probability", "weak_selection", "finite", "finite_se", "limit", "limit_se", "gap", "gap_se"],
            );
            for row in &r.rows {
                out.estimate(format!("finite/N={}", row.population_size), row.finite);
                out.estimate(format!("gap/N={}", row.population_size), Estimate { mean: row.gap, se: row.gap_se, n: m });
                table.push([
                    row.population_size.to_string(),
                    f(row.rho),
                    row.generations.to_string(),
                    f(row.merger_probability),
                    f(row.weak_selection),
                    f(row.finite.mean),
                    f(row.finite.se),
                    f(r.limit.mean),
                    f(r.limit.se),
                    f(row.gap),
                    f(row.gap_se),
                ]);
            }
            if r.rows.len() > 1 {
                let (a, b) = (&r.rows[0], &r.rows[r.rows.len() - 1]);
                let statistic = (a.gap - b.gap) / a.gap_se.hypot(b.gap_se);
                out.verdicts.push(Verdict {
                    name: "gap_shrinks".into(),
                    statistic,
                    threshold: 2.0,
                    passed: r.gap_shrinks(2.0),
                });
            }
            out.report(&r);
            out.tables.push(table);
        }
    }
    Ok(out)
}

fn cells<'a>(x: &'a [f64], n: &'a [u64]) -> impl Iterator<Item = (&'a f64, &'a u64)> + 'a {
    x.iter().flat_map(move |x| n.iter().map(move |n| (x, n)))
}

fn duality_outcome(out: &mut Outcome, reports: &[DualityReport]) {
    let mut table = Table::new("duality", &["x", "n", "horizon", "lhs", "lhs_se", "rhs", "rhs_se", "z", "passed"]);
    for r in reports {
        let label = format!("x={}/n={}/horizon={}", r.x, r.n, r.horizon);
        out.estimate(format!("lhs/{label}"), r.lhs);
        out.estimate(format!("rhs/{label}"), r.rhs);
        out.z_verdict(format!("{}/{label}", r.identity), r.z, r.threshold);
        table.push([
            f(r.x),
            r.n.to_string(),
            f(r.horizon),
            f(r.lhs.mean),
            f(r.lhs.se),
            f(r.rhs.mean),
            f(r.rhs.se),
            f(r.z),
            r.passed.to_string(),
        ]);
    }
    out.tables.push(table);
}
