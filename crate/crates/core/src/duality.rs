//! Monte Carlo checks of the sampling dualities of the finite model, the
//! moment duality of the limit processes, and convergence of the finite model
//! to its limit.

use serde::{Deserialize, Serialize};

use crate::bcre::{self, BcreOptions};
use crate::error::{invalid, Error, Result};
use crate::fvwrs;
use crate::model::{FiniteMeasure, LimitParams, SelectionKernel};
use crate::rng::Streams;
use crate::stats::{replicate_map, z_score, Estimate};
use crate::wf_graph::{simulate_ancestry, simulate_frequency, EnvSequence, FiniteModelParams, FiniteModelSpec};

/// Default rejection threshold for `|z|`.
pub const Z_THRESHOLD: f64 = 4.0;

/// `H(x, n; y) = phi_y(x)^n`.
pub fn eval_h(kernel: &SelectionKernel, x: f64, n: u64, y: f64) -> f64 {
    power(kernel.pgf(y, x), n)
}

/// `H_mu(x, n) = int phi_y(x)^n env_law(dy)`.
pub fn eval_h_mu(kernel: &SelectionKernel, env_law: &FiniteMeasure, x: f64, n: u64) -> Result<f64> {
    if !env_law.is_probability(1e-9) {
        return Err(Error::InvalidMeasure("environment law must be a probability measure".into()));
    }
    env_law.integrate(|y| eval_h(kernel, x, n, y))
}

fn power(base: f64, n: u64) -> f64 {
    if n == 0 {
        1.0
    } else {
        base.powf(n as f64)
    }
}

fn h_model(params: &FiniteModelParams, x: f64, n: u64, y: f64) -> f64 {
    power(params.pgf(y, x), n)
}

fn h_mu_model(params: &FiniteModelParams, x: f64, n: u64) -> f64 {
    params.env_law().integrate(|y| h_model(params, x, n, y)).expect("finite integrand")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub identity: &'static str,
    pub x: f64,
    pub n: u64,
    /// Generations for the finite model, time for the limit processes.
    pub horizon: f64,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub z: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl DualityReport {
    fn new(identity: &'static str, x: f64, n: u64, horizon: f64, lhs: Estimate, rhs: Estimate, threshold: f64) -> Self {
        let z = z_score(lhs.mean, lhs.se, rhs.mean, rhs.se);
        DualityReport { identity, x, n, horizon, lhs, rhs, z, threshold, passed: z.abs() < threshold }
    }
}

fn zeros_for(params: &FiniteModelParams, x: f64) -> Result<usize> {
    let n = params.population_size();
    let zeros = (x * n as f64).round();
    if !(0.0..=1.0).contains(&x) || (zeros / n as f64 - x).abs() > 1e-9 {
        return Err(invalid("x", format!("{x} is not a multiple of 1/{n} in [0,1]")));
    }
    Ok(zeros as usize)
}

fn blocks_ok(params: &FiniteModelParams, n: u64) -> Result<()> {
    if n == 0 || n as usize > params.population_size() {
        return Err(invalid("n", format!("must lie in 1..={}", params.population_size())));
    }
    Ok(())
}

/// Quenched sampling duality for a fixed environment `y_0, ..., y_g`:
/// forward from `x` through `y_0..y_{g-1}` scored by `H(X, n; y_g)`, against
/// backward from `n` through `y_g..y_1` scored by `H(x, Z; y_0)`.
pub fn quenched_check(
    params: &FiniteModelParams,
    env: &EnvSequence,
    x: f64,
    n: u64,
    m: usize,
    threshold: f64,
    streams: &Streams,
) -> Result<DualityReport> {
    let zeros = zeros_for(params, x)?;
    blocks_ok(params, n)?;
    let len = env.len();
    if len == 0 {
        return Err(invalid("env", "needs at least one value"));
    }
    let forward_env = EnvSequence { values: env.values[..len - 1].to_vec(), provenance: env.provenance };
    let backward_env = EnvSequence { values: env.values[1..].to_vec(), provenance: env.provenance };
    let (y_first, y_last) = (env.values[0], env.values[len - 1]);
    let size = params.population_size() as f64;
    let lhs = replicate_map(&streams.fork_named("lhs"), m, |_, rng| {
        let path = simulate_frequency(params, zeros, &forward_env, rng).expect("validated");
        h_model(params, *path.counts.last().unwrap() as f64 / size, n, y_last)
    });
    let rhs = replicate_map(&streams.fork_named("rhs"), m, |_, rng| {
        let path = simulate_ancestry(params, n as usize, &backward_env, rng).expect("validated");
        h_model(params, x, *path.counts.last().unwrap() as u64, y_first)
    });
    Ok(DualityReport::new(
        "quenched",
        x,
        n,
        (len - 1) as f64,
        Estimate::from_samples(&lhs),
        Estimate::from_samples(&rhs),
        threshold,
    ))
}

/// Annealed sampling duality over `g` generations with a fresh iid
/// environment per replicate, scored by `H_mu`.
pub fn annealed_check(
    params: &FiniteModelParams,
    generations: usize,
    x: f64,
    n: u64,
    m: usize,
    threshold: f64,
    streams: &Streams,
) -> Result<DualityReport> {
    let zeros = zeros_for(params, x)?;
    blocks_ok(params, n)?;
    if generations == 0 {
        let exact = Estimate::exact(h_mu_model(params, x, n));
        return Ok(DualityReport::new("annealed", x, n, 0.0, exact, exact, threshold));
    }
    let size = params.population_size() as f64;
    let lhs = replicate_map(&streams.fork_named("lhs"), m, |_, rng| {
        let env = params.draw_environment(generations, rng);
        let path = simulate_frequency(params, zeros, &env, rng).expect("validated");
        h_mu_model(params, *path.counts.last().unwrap() as f64 / size, n)
    });
    let rhs = replicate_map(&streams.fork_named("rhs"), m, |_, rng| {
        let env = params.draw_environment(generations, rng);
        let path = simulate_ancestry(params, n as usize, &env, rng).expect("validated");
        h_mu_model(params, x, *path.counts.last().unwrap() as u64)
    });
    Ok(DualityReport::new(
        "annealed",
        x,
        n,
        generations as f64,
        Estimate::from_samples(&lhs),
        Estimate::from_samples(&rhs),
        threshold,
    ))
}

/// `E_x[X(t)^n]` from the jump-diffusion against `E_n[x^{Z(t)}]` from the
/// branching-coalescing chain.
#[allow(clippy::too_many_arguments)]
pub fn moment_check(
    params: &LimitParams,
    x: f64,
    n: u64,
    t: f64,
    m: usize,
    dt: f64,
    opts: BcreOptions,
    threshold: f64,
    streams: &Streams,
) -> Result<DualityReport> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let exponent = u32::try_from(n).map_err(|_| invalid("n", "too large"))?;
    let lhs = fvwrs::moment_estimate(params, x, exponent, t, m, dt, &streams.fork_named("lhs"))?;
    let rhs = bcre::dual_moment(params, x, n, t, m, opts, &streams.fork_named("rhs"))?;
    Ok(DualityReport::new("moment", x, n, t, lhs, rhs, threshold))
}

/// How `rho_N` depends on `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RhoRule {
    /// `rho_N = 1 / (sigma N)`; requires `sigma > 0`.
    Kingman,
    /// `rho_N = scale N^-exponent` with `0 < exponent < 1`; requires
    /// `sigma = 0`, so that genetic drift vanishes in the limit.
    Power { exponent: f64, #[serde(default = "one")] scale: f64 },
}

fn one() -> f64 {
    1.0
}

/// Finite models approximating given limit parameters: one generation is
/// `rho_N` units of limit time, the environment is 0 except with
/// probability `rho_N |mu|`, when it is drawn from `mu / |mu|`, and
/// environment 0 carries weak selection `w_N = w rho_N`. Mergers occur with
/// probability `c_N = c rho_N int z^-2 Lambda_c(dz)` and strength drawn from
/// `z^-2 Lambda_c` normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingScheme {
    pub rho: RhoRule,
}

impl Default for ScalingScheme {
    fn default() -> Self {
        ScalingScheme { rho: RhoRule::Kingman }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledModel {
    pub population_size: usize,
    pub rho: f64,
    pub generations: usize,
    pub merger_probability: f64,
    pub weak_selection: f64,
    #[serde(skip)]
    pub params: FiniteModelParams,
}

impl ScalingScheme {
    pub fn rho(&self, limit: &LimitParams, n: usize) -> Result<f64> {
        let nf = n as f64;
        match self.rho {
            RhoRule::Kingman => {
                if limit.sigma() <= 0.0 {
                    return Err(Error::InvalidScaling { n, reason: "Kingman scaling needs sigma > 0".into() });
                }
                Ok(1.0 / (limit.sigma() * nf))
            }
            RhoRule::Power { exponent, scale } => {
                if limit.sigma() > 0.0 {
                    return Err(Error::InvalidScaling {
                        n,
                        reason: "power scaling sends N rho_N to infinity, which requires sigma = 0".into(),
                    });
                }
                if !(exponent > 0.0 && exponent < 1.0 && scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidScaling { n, reason: "power scaling needs 0 < exponent < 1 and scale > 0".into() });
                }
                Ok(scale * nf.powf(-exponent))
            }
        }
    }

    /// The finite model at population size `n` and the number of generations
    /// covering limit time `t`. `rho_N` is shrunk to `t / ceil(t / rho_N)` so
    /// that the generations cover `t` exactly.
    pub fn model(&self, limit: &LimitParams, n: usize, t: f64) -> Result<ScaledModel> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid("t", format!("must be finite and nonnegative, got {t}")));
        }
        let nominal = self.rho(limit, n)?;
        let generations = if t > 0.0 { (t / nominal).ceil() as usize } else { 0 };
        let rho = if generations > 0 { t / generations as f64 } else { nominal };
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidScaling { n, reason: format!("rho_N = {rho} must lie in (0,1)") });
        }
        let mu_mass = limit.selection_rate();
        if rho * mu_mass >= 1.0 {
            return Err(Error::InvalidScaling { n, reason: format!("rho_N |mu| = {} is not below 1", rho * mu_mass) });
        }
        let activity = limit.coalescence_rate();
        let merger_probability = rho * activity;
        if merger_probability.is_nan() || merger_probability > 1.0 {
            return Err(Error::InvalidScaling { n, reason: format!("c_N = {merger_probability} exceeds 1") });
        }
        let weak_selection = limit.w() * rho;
        if weak_selection >= 1.0 {
            return Err(Error::InvalidScaling { n, reason: format!("w_N = {weak_selection} is not below 1") });
        }
        let mut env = vec![];
        let neutral = 1.0 - rho * mu_mass;
        if neutral > 0.0 {
            env.push((0.0, neutral));
        }
        env.extend(limit.mu().atoms().iter().map(|a| (a.location, rho * a.weight)));
        let spec = FiniteModelSpec {
            population_size: n,
            kernel: limit.kernel().clone(),
            env_law: FiniteMeasure::atomic(env)?,
            merger_probability,
            merger_law: if merger_probability > 0.0 { limit.lambda_c().clone() } else { FiniteMeasure::zero() },
            weak_selection,
        };
        let params = FiniteModelParams::new(spec)?;
        Ok(ScaledModel { population_size: n, rho, generations, merger_probability, weak_selection, params })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub population_size: usize,
    pub rho: f64,
    pub generations: usize,
    pub merger_probability: f64,
    pub weak_selection: f64,
    pub finite: Estimate,
    /// `|finite - limit|`.
    pub gap: f64,
    /// Combined standard error of the gap.
    pub gap_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub x: f64,
    pub n: u64,
    pub t: f64,
    pub limit: Estimate,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Whether the gap at the largest size is below the gap at the smallest
    /// by more than `k` combined standard errors.
    pub fn gap_shrinks(&self, k: f64) -> bool {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) if self.rows.len() > 1 => {
                a.gap - b.gap > k * (a.gap_se * a.gap_se + b.gap_se * b.gap_se).sqrt()
            }
            _ => false,
        }
    }
}

/// `E[X^N(floor(t / rho_N))^n]` for each `N` against `E[X(t)^n]`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_experiment(
    limit: &LimitParams,
    sizes: &[usize],
    scheme: &ScalingScheme,
    x: f64,
    n: u64,
    t: f64,
    m: usize,
    dt: f64,
    streams: &Streams,
) -> Result<ConvergenceTable> {
    let exponent = u32::try_from(n).map_err(|_| invalid("n", "too large"))?;
    let models = sizes.iter().map(|&size| scheme.model(limit, size, t)).collect::<Result<Vec<_>>>()?;
    let limit_est = fvwrs::moment_estimate(limit, x, exponent, t, m, dt, &streams.fork_named("limit"))?;
    let mut rows = Vec::with_capacity(models.len());
    for model in models {
        let params = &model.params;
        let zeros = zeros_for(params, x)?;
        let size = model.population_size as f64;
        let tag = format!("finite-{}", model.population_size);
        let samples = replicate_map(&streams.fork_named(&tag), m, |_, rng| {
            let mut state = zeros;
            for _ in 0..model.generations {
                if state == 0 || state == model.population_size {
                    break;
                }
                let y = params.draw_environment(1, rng).values[0];
                state = crate::wf_graph::step_frequency(params, state, y, rng);
            }
            (state as f64 / size).powi(exponent as i32)
        });
        let finite = Estimate::from_samples(&samples);
        rows.push(ConvergenceRow {
            population_size: model.population_size,
            rho: model.rho,
            generations: model.generations,
            merger_probability: model.merger_probability,
            weak_selection: model.weak_selection,
            gap: (finite.mean - limit_est.mean).abs(),
            gap_se: (finite.se * finite.se + limit_est.se * limit_est.se).sqrt(),
            finite,
        });
    }
    Ok(ConvergenceTable { x, n, t, limit: limit_est, rows })
}
