//! Links between the forward and dual limit processes: fixation
//! probabilities from the invariant law of `Z`, and corroboration of
//! almost sure extinction.

use serde::{Deserialize, Serialize};

use crate::bcre::{self, BcreOptions};
use crate::error::{invalid, Error, Result};
use crate::fvwrs::{self, AbsorptionScan, ABSORPTION_EPS};
use crate::model::LimitParams;
use crate::rng::Streams;
use crate::stats::{z_score, Estimate};
use crate::thresholds::{classify, Classification};

/// Simulation budget for [`fixation_via_duality`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixationBudget {
    /// Paths of `X` per grid point.
    pub paths: usize,
    /// Horizon at which `X` is read off.
    pub horizon: f64,
    pub dt: f64,
    /// Independent chains of `Z` pooled into the invariant law.
    pub chains: usize,
    pub n0: u64,
    pub burn_in: f64,
    pub chain_horizon: f64,
    pub tv_threshold: f64,
    pub bcre: BcreOptions,
}

impl Default for FixationBudget {
    fn default() -> Self {
        FixationBudget {
            paths: 20_000,
            horizon: 40.0,
            dt: 1e-3,
            chains: 64,
            n0: 1,
            burn_in: 10.0,
            chain_horizon: 2_000.0,
            tv_threshold: 0.05,
            bcre: BcreOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixationReport {
    pub x: Vec<f64>,
    /// `phi_nu(x)` from the occupation law of `Z`.
    pub predicted: Vec<Estimate>,
    /// Fraction of `X` paths absorbed at 1.
    pub simulated: Vec<Estimate>,
    pub z: Vec<f64>,
    /// Fraction of `X` paths still away from both boundaries.
    pub interior: Vec<Estimate>,
    pub half_tv: f64,
    /// `None` when `sigma > 0`, where the threshold comparison does not apply.
    pub classification: Option<Classification>,
}

impl FixationReport {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0, |a, z| a.max(z.abs()))
    }
}

fn regime(params: &LimitParams) -> Result<Option<Classification>> {
    match classify(params, crate::thresholds::DEFAULT_TOL) {
        Ok(report) => Ok(Some(report.classification)),
        Err(Error::SigmaNotZero(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn check_grid(xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(invalid("x", "grid is empty"));
    }
    if let Some(x) = xs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(invalid("x", format!("{x} outside [0,1]")));
    }
    Ok(())
}

/// Compares `phi_nu(x)` with the simulated probability that `X` started at
/// `x` is absorbed at 1.
pub fn fixation_via_duality(
    params: &LimitParams,
    xs: &[f64],
    budget: &FixationBudget,
    streams: &Streams,
) -> Result<FixationReport> {
    check_grid(xs)?;
    let classification = regime(params)?;
    if classification == Some(Classification::ExtinctionAlmostSure) {
        return Err(Error::RegimeMismatch {
            expected: Classification::SurvivalPossible.name(),
            found: Classification::ExtinctionAlmostSure.name(),
        });
    }
    let nu = bcre::stationary_estimate(
        params,
        budget.n0,
        budget.burn_in,
        budget.chain_horizon,
        budget.chains,
        budget.tv_threshold,
        budget.bcre,
        &streams.fork_named("nu"),
    )?;
    let mut report = FixationReport {
        x: xs.to_vec(),
        predicted: Vec::with_capacity(xs.len()),
        simulated: Vec::with_capacity(xs.len()),
        z: Vec::with_capacity(xs.len()),
        interior: Vec::with_capacity(xs.len()),
        half_tv: nu.half_tv,
        classification,
    };
    for (i, &x) in xs.iter().enumerate() {
        let predicted = if x == 0.0 {
            Estimate::exact(0.0)
        } else if x == 1.0 {
            Estimate::exact(1.0)
        } else {
            nu.pgf_estimate(x)
        };
        let scan = fvwrs::absorption_scan(
            params,
            x,
            budget.horizon,
            budget.paths,
            budget.dt,
            ABSORPTION_EPS,
            &streams.fork_named("x").fork(i as u64),
        )?;
        report.z.push(z_score(predicted.mean, predicted.se, scan.at_1.mean, scan.at_1.se));
        report.predicted.push(predicted);
        report.simulated.push(scan.at_1);
        report.interior.push(scan.interior);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionReport {
    pub x: f64,
    pub horizons: Vec<f64>,
    pub scans: Vec<AbsorptionScan>,
    pub n0: u64,
    pub level: u64,
    /// `P(Z(t) <= level)` per horizon.
    pub below: Vec<Estimate>,
}

impl ExtinctionReport {
    pub fn at_0(&self) -> impl Iterator<Item = Estimate> + '_ {
        self.scans.iter().map(|s| s.at_0)
    }

    /// No consecutive drop in the fraction at 0 beyond `k` combined SEs.
    pub fn absorption_nondecreasing(&self, k: f64) -> bool {
        let at_0: Vec<Estimate> = self.at_0().collect();
        at_0.windows(2).all(|w| w[1].mean >= w[0].mean - k * w[0].se.hypot(w[1].se))
    }

    /// No consecutive rise in `P(Z <= level)` beyond `k` combined SEs, and
    /// an overall drop from first to last horizon.
    pub fn below_decreasing(&self, k: f64) -> bool {
        let b = &self.below;
        let steps = b.windows(2).all(|w| w[1].mean <= w[0].mean + k * w[0].se.hypot(w[1].se));
        let overall = match (b.first(), b.last()) {
            (Some(first), Some(last)) if b.len() > 1 => last.mean < first.mean,
            _ => true,
        };
        steps && overall
    }
}

/// Fraction of `X` paths absorbed at 0 per horizon, with the companion
/// statistic `P(Z(t) <= level)` for the dual chain started at `n0`.
#[allow(clippy::too_many_arguments)]
pub fn extinction_corroboration(
    params: &LimitParams,
    x: f64,
    horizons: &[f64],
    m: usize,
    dt: f64,
    n0: u64,
    level: u64,
    opts: BcreOptions,
    streams: &Streams,
) -> Result<ExtinctionReport> {
    if horizons.is_empty() {
        return Err(invalid("horizons", "must be nonempty"));
    }
    match regime(params)? {
        Some(Classification::ExtinctionAlmostSure) => {}
        found => {
            return Err(Error::RegimeMismatch {
                expected: Classification::ExtinctionAlmostSure.name(),
                found: found.map_or("sigma-positive", Classification::name),
            })
        }
    }
    let states = fvwrs::terminal_states(params, x, horizons, m, dt, &streams.fork_named("x"))?;
    let scans = horizons
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let column: Vec<f64> = states.iter().map(|row| row[j]).collect();
            AbsorptionScan::classify(t, &column, ABSORPTION_EPS)
        })
        .collect();
    let below = bcre::fraction_below(params, n0, horizons, level, m, opts, &streams.fork_named("z"))?;
    Ok(ExtinctionReport { x, horizons: horizons.to_vec(), scans, n0, level, below })
}
