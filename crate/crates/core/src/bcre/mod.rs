//! The branching-coalescing process in random environment `Z`, simulated
//! exactly with Gillespie's method.
//!
//! States up to [`BcreOptions::table_limit`] use memoized [`RateTable`]s.
//! Larger states are sampled directly: pick the event class by its total
//! rate, then draw the jump size from its exact law.

mod rates;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Gamma, Poisson};
use serde::{Deserialize, Serialize};

pub use rates::{RateCache, RateTable};

use crate::error::{invalid, Error, Result};
use crate::model::{LimitParams, SelectionKernel};
use crate::rng::{StreamRng, Streams};
use crate::stats::{replicate_map_init, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcreOptions {
    /// A path whose state exceeds this value is reported as exploding.
    pub ceiling: u64,
    /// Largest state served from rate tables.
    pub table_limit: u64,
    pub cache_capacity: usize,
    /// Truncation of rate tables, relative to the total rate.
    pub tail_tolerance: f64,
}

impl Default for BcreOptions {
    fn default() -> Self {
        BcreOptions { ceiling: 1_000_000, table_limit: 256, cache_capacity: 1024, tail_tolerance: 1e-9 }
    }
}

/// Rates `n -> n+k` and `n -> n-k` for `k <= k_max`, plus the lumped tail.
pub fn jump_rates(params: &LimitParams, n: u64, k_max: usize) -> Result<RateTable> {
    RateTable::with_k_max(params, n, k_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZEvent {
    pub time: f64,
    pub from: u64,
    pub to: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathZ {
    pub n0: u64,
    pub horizon: f64,
    pub events: Vec<ZEvent>,
}

impl PathZ {
    pub fn state_at(&self, t: f64) -> u64 {
        let i = self.events.partition_point(|e| e.time <= t);
        if i == 0 {
            self.n0
        } else {
            self.events[i - 1].to
        }
    }

    pub fn final_state(&self) -> u64 {
        self.events.last().map_or(self.n0, |e| e.to)
    }
}

/// Stateful sampler for one parameter set. Holds the rate cache, so reuse it
/// across paths on the same thread.
#[derive(Debug)]
pub struct Engine<'a> {
    params: &'a LimitParams,
    opts: BcreOptions,
    cache: RateCache,
    /// `(y, mu weight)` of selection atoms.
    selection: Vec<(f64, f64)>,
    /// `(z, c Lambda_c({z}) z^-2)` of merger atoms.
    mergers: Vec<(f64, f64)>,
    weights: Vec<f64>,
}

/// Sampled class of event in the direct sampler.
enum Class {
    Selection(f64),
    Weak,
    Merger(f64),
    Kingman,
}

impl<'a> Engine<'a> {
    pub fn new(params: &'a LimitParams, opts: BcreOptions) -> Result<Self> {
        if opts.ceiling == 0 {
            return Err(invalid("ceiling", "must be positive"));
        }
        if !params.selection_rate().is_finite() {
            return Err(Error::InfiniteJumpIntensity { what: "selection" });
        }
        let selection = params.mu().atoms().iter().map(|a| (a.location, a.weight)).collect();
        let mergers = if params.c() > 0.0 {
            params.lambda_c().atoms().iter().map(|a| (a.location, params.c() * a.weight / (a.location * a.location))).collect()
        } else {
            Vec::new()
        };
        Ok(Engine { params, opts, cache: RateCache::new(opts.cache_capacity), selection, mergers, weights: Vec::new() })
    }

    pub fn params(&self) -> &LimitParams {
        self.params
    }

    /// Holding time and next state from `n`, or `None` if `n` is absorbing.
    pub fn step<R: Rng + ?Sized>(&mut self, n: u64, rng: &mut R) -> Result<Option<(f64, u64)>> {
        if n <= self.opts.table_limit {
            let params = self.params;
            let tol = self.opts.tail_tolerance;
            let table = self.cache.get_or_build(n, || RateTable::adaptive(params, n, tol))?;
            if table.total <= 0.0 {
                return Ok(None);
            }
            let hold = Exp::new(table.total).expect("positive rate").sample(rng);
            Ok(Some((hold, table.sample_jump(params, rng))))
        } else {
            Ok(self.direct_step(n, rng))
        }
    }

    fn direct_step<R: Rng + ?Sized>(&mut self, n: u64, rng: &mut R) -> Option<(f64, u64)> {
        let kernel = self.params.kernel();
        self.weights.clear();
        for &(y, w) in &self.selection {
            self.weights.push(w * rates::prob_some_excess(kernel, y, n));
        }
        self.weights.push(self.params.w() * n as f64);
        for &(z, w) in &self.mergers {
            self.weights.push(w * prob_at_least_two(n, z));
        }
        self.weights.push(self.params.sigma() * (n * (n - 1)) as f64 / 2.0);
        let total: f64 = self.weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let hold = Exp::new(total).expect("positive rate").sample(rng);
        let mut u = rng.random::<f64>() * total;
        let mut pick = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        let ns = self.selection.len();
        let class = if pick < ns {
            Class::Selection(self.selection[pick].0)
        } else if pick == ns {
            Class::Weak
        } else if pick < ns + 1 + self.mergers.len() {
            Class::Merger(self.mergers[pick - ns - 1].0)
        } else {
            Class::Kingman
        };
        let next = match class {
            Class::Selection(y) => n + selection_excess(kernel, y, n, rng),
            Class::Weak => n + 1,
            Class::Merger(z) => n + 1 - merger_size(n, z, rng),
            Class::Kingman => n - 1,
        };
        Some((hold, next))
    }

    /// Runs from `n0` to `horizon`, calling `visit(time, from, to)` on every
    /// jump. Returns the final state.
    pub fn run<R: Rng + ?Sized, F: FnMut(f64, u64, u64)>(
        &mut self,
        n0: u64,
        horizon: f64,
        rng: &mut R,
        mut visit: F,
    ) -> Result<u64> {
        let mut t = 0.0;
        let mut n = n0;
        while let Some((hold, next)) = self.step(n, rng)? {
            t += hold;
            if t > horizon {
                break;
            }
            if next > self.opts.ceiling {
                return Err(Error::StateExplosion { state: next, ceiling: self.opts.ceiling });
            }
            visit(t, n, next);
            n = next;
        }
        Ok(n)
    }
}

/// `P(Bin(n,z) >= 2)`.
fn prob_at_least_two(n: u64, z: f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    let nf = n as f64;
    let l1z = (-z).ln_1p();
    let p0 = (nf * l1z).exp();
    let p1 = nf * z * ((nf - 1.0) * l1z).exp();
    (1.0 - p0 - p1).max(0.0)
}

/// Size `B` of a merger: `Bin(n, z)` conditioned on `B >= 2`.
fn merger_size<R: Rng + ?Sized>(n: u64, z: f64, rng: &mut R) -> u64 {
    if z >= 1.0 {
        return n;
    }
    let p2 = prob_at_least_two(n, z);
    if p2 > 0.25 {
        let bin = Binomial::new(n, z).expect("valid binomial");
        loop {
            let b = bin.sample(rng);
            if b >= 2 {
                return b;
            }
        }
    }
    // Inverse transform from b = 2 upwards.
    let target = rng.random::<f64>() * p2;
    let nf = n as f64;
    let lodds = z.ln() - (-z).ln_1p();
    let mut lp = (nf * (nf - 1.0) / 2.0).ln() + 2.0 * z.ln() + (nf - 2.0) * (-z).ln_1p();
    let mut acc = 0.0;
    for b in 2..=n {
        if b > 2 {
            let bf = b as f64;
            lp += ((nf - bf + 1.0) / bf).ln() + lodds;
        }
        acc += lp.exp();
        if acc >= target {
            return b;
        }
    }
    n
}

/// `sum_{j<=n} (K_j - 1)` conditioned to be positive.
fn selection_excess<R: Rng + ?Sized>(kernel: &SelectionKernel, y: f64, n: u64, rng: &mut R) -> u64 {
    // Index of the first K_j >= 2 has a geometric law truncated at n.
    let q = kernel.prob_single(y);
    let first = if q <= 0.0 {
        1
    } else {
        let mass = -(n as f64 * q.ln()).exp_m1();
        let u = rng.random::<f64>();
        let j = ((-u * mass).ln_1p() / q.ln()).ceil();
        (j as u64).clamp(1, n)
    };
    let rest = n - first;
    let head = kernel.sample_at_least_two(y, rng) - 1;
    let tail = match kernel {
        SelectionKernel::Geometric => negative_binomial(rest, y, rng),
        SelectionKernel::Binary => {
            if rest == 0 {
                0
            } else {
                Binomial::new(rest, y).expect("valid binomial").sample(rng)
            }
        }
        SelectionKernel::Table(_) => (0..rest).map(|_| kernel.sample(y, rng) - 1).sum(),
    };
    head + tail
}

/// Failures before the `r`-th success, success probability `1 - y`.
fn negative_binomial<R: Rng + ?Sized>(r: u64, y: f64, rng: &mut R) -> u64 {
    if r == 0 || y <= 0.0 {
        return 0;
    }
    if r <= 32 {
        return (0..r).map(|_| crate::model::geometric_excess(y, rng)).sum();
    }
    let lambda = Gamma::new(r as f64, y / (1.0 - y)).expect("valid gamma").sample(rng);
    if lambda <= 0.0 {
        0
    } else {
        Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
    }
}

fn check_start(n0: u64, horizon: f64) -> Result<()> {
    if n0 == 0 {
        return Err(invalid("n0", "must be at least 1"));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", format!("must be finite and nonnegative, got {horizon}")));
    }
    Ok(())
}

/// One path of `Z` from `n0` over `[0, horizon]`.
pub fn simulate<R: Rng + ?Sized>(
    params: &LimitParams,
    n0: u64,
    horizon: f64,
    opts: BcreOptions,
    rng: &mut R,
) -> Result<PathZ> {
    check_start(n0, horizon)?;
    let mut engine = Engine::new(params, opts)?;
    let mut events = Vec::new();
    engine.run(n0, horizon, rng, |time, from, to| events.push(ZEvent { time, from, to }))?;
    Ok(PathZ { n0, horizon, events })
}

/// Final states of `m` independent paths; explosions are counted separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Census {
    pub states: Vec<u64>,
    pub explosions: usize,
}

pub fn terminal_census(
    params: &LimitParams,
    n0: u64,
    horizon: f64,
    m: usize,
    opts: BcreOptions,
    streams: &Streams,
) -> Result<Census> {
    check_start(n0, horizon)?;
    Engine::new(params, opts)?;
    let outcomes = replicate_map_init(
        streams,
        m,
        || Engine::new(params, opts).expect("validated"),
        |engine, _, rng: &mut StreamRng| engine.run(n0, horizon, rng, |_, _, _| {}),
    );
    let mut states = Vec::with_capacity(m);
    let mut explosions = 0;
    for o in outcomes {
        match o {
            Ok(n) => states.push(n),
            Err(Error::StateExplosion { .. }) => explosions += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(Census { states, explosions })
}

/// Mean and standard error of `x^{Z(t)}` with `Z(0) = n0`.
pub fn dual_moment(
    params: &LimitParams,
    x: f64,
    n0: u64,
    t: f64,
    m: usize,
    opts: BcreOptions,
    streams: &Streams,
) -> Result<Estimate> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid("x", format!("must lie in [0,1], got {x}")));
    }
    check_start(n0, t)?;
    if t == 0.0 {
        return Ok(Estimate::exact(x.powf(n0 as f64)));
    }
    let census = terminal_census(params, n0, t, m, opts, streams)?;
    if census.explosions > 0 {
        return Err(Error::StateExplosion { state: opts.ceiling + 1, ceiling: opts.ceiling });
    }
    let samples: Vec<f64> = census.states.iter().map(|&z| x.powf(z as f64)).collect();
    Ok(Estimate::from_samples(&samples))
}

/// Time-weighted occupation of states over a window.
fn occupation(engine: &mut Engine, n0: u64, burn_in: f64, horizon: f64, split: f64, rng: &mut StreamRng) -> Result<[BTreeMap<u64, f64>; 2]> {
    let mut halves = [BTreeMap::new(), BTreeMap::new()];
    let credit = |n: u64, a: f64, b: f64, halves: &mut [BTreeMap<u64, f64>; 2]| {
        let lo = a.max(burn_in);
        if b <= lo {
            return;
        }
        let first = (b.min(split) - lo).max(0.0);
        let second = (b - lo.max(split)).max(0.0);
        if first > 0.0 {
            *halves[0].entry(n).or_insert(0.0) += first;
        }
        if second > 0.0 {
            *halves[1].entry(n).or_insert(0.0) += second;
        }
    };
    let mut last_time = 0.0;
    let end = engine.run(n0, horizon, rng, |t, from, _| {
        credit(from, last_time, t, &mut halves);
        last_time = t;
    })?;
    credit(end, last_time, horizon, &mut halves);
    Ok(halves)
}

/// Occupation pmf of `Z`, with `pmf[k] = nu_hat({k})` (`pmf[0] = 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryEstimate {
    pub pmf: Vec<f64>,
    /// Total variation between the first- and second-half occupation pmfs.
    pub half_tv: f64,
    /// Per-chain pmfs when several chains were pooled.
    #[serde(skip)]
    pub chains: Vec<Vec<f64>>,
}

impl StationaryEstimate {
    /// `phi_nu(x) = sum_k nu({k}) x^k`.
    pub fn pgf(&self, x: f64) -> f64 {
        pgf_of(&self.pmf, x)
    }

    /// Mean and standard error of `phi(x)` across independent chains.
    pub fn pgf_estimate(&self, x: f64) -> Estimate {
        if self.chains.len() < 2 {
            return Estimate::exact(self.pgf(x));
        }
        let values: Vec<f64> = self.chains.iter().map(|p| pgf_of(p, x)).collect();
        Estimate::from_samples(&values)
    }
}

fn pgf_of(pmf: &[f64], x: f64) -> f64 {
    if x >= 1.0 {
        return pmf.iter().sum();
    }
    pmf.iter().rev().fold(0.0, |acc, p| acc * x + p)
}

fn to_pmf(occ: &BTreeMap<u64, f64>) -> Vec<f64> {
    let total: f64 = occ.values().sum();
    let len = occ.keys().next_back().map_or(2, |&k| k as usize + 1);
    let mut pmf = vec![0.0; len];
    if total > 0.0 {
        for (&k, &v) in occ {
            pmf[k as usize] = v / total;
        }
    }
    pmf
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    0.5 * (0..len).map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs()).sum::<f64>()
}

/// Occupation estimate of the invariant law from `chains` independent runs
/// of `Z` over `[burn_in, horizon]`.
#[allow(clippy::too_many_arguments)]
pub fn stationary_estimate(
    params: &LimitParams,
    n0: u64,
    burn_in: f64,
    horizon: f64,
    chains: usize,
    tv_threshold: f64,
    opts: BcreOptions,
    streams: &Streams,
) -> Result<StationaryEstimate> {
    check_start(n0, horizon)?;
    if !(burn_in >= 0.0 && burn_in < horizon) {
        return Err(invalid("burn_in", "must lie in [0, horizon)"));
    }
    if chains == 0 {
        return Err(invalid("chains", "must be positive"));
    }
    Engine::new(params, opts)?;
    let split = burn_in + (horizon - burn_in) / 2.0;
    let runs = replicate_map_init(
        streams,
        chains,
        || Engine::new(params, opts).expect("validated"),
        |engine, _, rng| occupation(engine, n0, burn_in, horizon, split, rng),
    );
    let mut pooled = [BTreeMap::new(), BTreeMap::new()];
    let mut per_chain = Vec::with_capacity(chains);
    for run in runs {
        let halves = run?;
        let mut merged = halves[0].clone();
        for (half, target) in halves.iter().zip(pooled.iter_mut()) {
            for (&k, &v) in half {
                *target.entry(k).or_insert(0.0) += v;
            }
        }
        for (&k, &v) in &halves[1] {
            *merged.entry(k).or_insert(0.0) += v;
        }
        per_chain.push(to_pmf(&merged));
    }
    let first = to_pmf(&pooled[0]);
    let second = to_pmf(&pooled[1]);
    let half_tv = total_variation(&first, &second);
    if half_tv > tv_threshold {
        return Err(Error::NonConvergence { tv: half_tv, threshold: tv_threshold });
    }
    let mut all = pooled[0].clone();
    for (&k, &v) in &pooled[1] {
        *all.entry(k).or_insert(0.0) += v;
    }
    Ok(StationaryEstimate { pmf: to_pmf(&all), half_tv, chains: if chains > 1 { per_chain } else { Vec::new() } })
}

/// Fraction of paths with `Z(t) <= level` at each horizon, from one set of
/// paths observed at all horizons.
pub fn fraction_below(
    params: &LimitParams,
    n0: u64,
    horizons: &[f64],
    level: u64,
    m: usize,
    opts: BcreOptions,
    streams: &Streams,
) -> Result<Vec<Estimate>> {
    if horizons.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("horizons", "must be nondecreasing"));
    }
    let last = *horizons.last().ok_or_else(|| invalid("horizons", "must be nonempty"))?;
    check_start(n0, last)?;
    Engine::new(params, opts)?;
    let runs = replicate_map_init(
        streams,
        m,
        || Engine::new(params, opts).expect("validated"),
        |engine, _, rng| -> Result<Vec<bool>> {
            let mut hits = vec![false; horizons.len()];
            let mut state = n0;
            let mut next_h = 0;
            let result = engine.run(n0, last, rng, |t, _, to| {
                while next_h < horizons.len() && horizons[next_h] < t {
                    hits[next_h] = state <= level;
                    next_h += 1;
                }
                state = to;
            });
            match result {
                Ok(end) => {
                    for h in hits.iter_mut().skip(next_h) {
                        *h = end <= level;
                    }
                }
                // An exploded path is above any finite level from then on.
                Err(Error::StateExplosion { .. }) => {
                    for h in hits.iter_mut().skip(next_h) {
                        *h = false;
                    }
                }
                Err(e) => return Err(e),
            }
            Ok(hits)
        },
    );
    let mut counts = vec![0usize; horizons.len()];
    for run in runs {
        for (c, hit) in counts.iter_mut().zip(run?) {
            *c += usize::from(hit);
        }
    }
    Ok(counts.into_iter().map(|c| Estimate::proportion(c, m)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{binomial_pmf, FiniteMeasure};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn atom(y: f64, w: f64) -> FiniteMeasure {
        FiniteMeasure::dirac(y, w).unwrap()
    }

    fn params(kernel: SelectionKernel, ls: FiniteMeasure, w: f64, lc: FiniteMeasure, c: f64, sigma: f64) -> LimitParams {
        LimitParams::new(kernel, ls, w, lc, c, sigma).unwrap()
    }

    fn ac1() -> LimitParams {
        params(SelectionKernel::Geometric, atom(0.5, 0.5), 0.1, atom(0.5, 1.0), 1.0, 0.0)
    }

    #[test]
    fn yule_mean() {
        let p = params(SelectionKernel::Geometric, FiniteMeasure::zero(), 0.7, FiniteMeasure::zero(), 0.0, 0.0);
        let c = terminal_census(&p, 1, 1.5, 100_000, BcreOptions::default(), &Streams::new(1)).unwrap();
        let e = Estimate::from_samples(&c.states.iter().map(|&n| n as f64).collect::<Vec<_>>());
        assert!((e.mean - (0.7f64 * 1.5).exp()).abs() < 4.0 * e.se, "{e:?}");
    }

    #[test]
    fn kingman_absorption_time() {
        let p = params(SelectionKernel::Geometric, FiniteMeasure::zero(), 0.0, FiniteMeasure::zero(), 0.0, 1.0);
        let mut engine = Engine::new(&p, BcreOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = 100_000;
        let mut times = Vec::with_capacity(m);
        for _ in 0..m {
            let mut last = 0.0;
            let end = engine.run(5, f64::INFINITY, &mut rng, |t, _, _| last = t).unwrap();
            assert_eq!(end, 1);
            times.push(last);
        }
        let e = Estimate::from_samples(&times);
        // sum_{j=2}^5 1 / C(j,2) = 2 (1 - 1/5).
        assert!((e.mean - 1.6).abs() < 4.0 * e.se, "{e:?}");
    }

    #[test]
    fn no_branching_from_one_is_constant() {
        let p = params(SelectionKernel::Geometric, FiniteMeasure::zero(), 0.0, atom(0.5, 1.0), 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path = simulate(&p, 1, 10.0, BcreOptions::default(), &mut rng).unwrap();
        assert!(path.events.is_empty());
        assert_eq!(path.state_at(5.0), 1);
    }

    #[test]
    fn dual_moment_trivial_cases() {
        let p = ac1();
        let s = Streams::new(4);
        let o = BcreOptions::default();
        assert_eq!(dual_moment(&p, 0.5, 3, 0.0, 10, o, &s).unwrap(), Estimate::exact(0.125));
        let one = dual_moment(&p, 1.0, 3, 1.0, 1000, o, &s).unwrap();
        assert_eq!((one.mean, one.se), (1.0, 0.0));
        let zero = dual_moment(&p, 0.0, 3, 1.0, 1000, o, &s).unwrap();
        assert_eq!((zero.mean, zero.se), (0.0, 0.0));
    }

    #[test]
    fn path_invariants() {
        let p = ac1();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let path = simulate(&p, 4, 3.0, BcreOptions::default(), &mut rng).unwrap();
            let mut prev = 4;
            for e in &path.events {
                assert_eq!(e.from, prev);
                assert!(e.to >= 1 && e.to != e.from);
                prev = e.to;
            }
        }
    }

    fn jump_law(engine: &mut Engine, n: u64, m: usize, seed: u64) -> BTreeMap<i64, usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = BTreeMap::new();
        for _ in 0..m {
            let (_, next) = engine.step(n, &mut rng).unwrap().unwrap();
            *out.entry(next as i64 - n as i64).or_insert(0) += 1;
        }
        out
    }

    #[test]
    fn direct_sampler_agrees_with_tables() {
        for kernel in [SelectionKernel::Geometric, SelectionKernel::Binary] {
            let p = params(kernel, atom(0.3, 0.8), 0.2, FiniteMeasure::atomic([(0.2, 0.5), (0.6, 0.5)]).unwrap(), 1.0, 0.05);
            let n = 12;
            let m = 200_000;
            let mut tables = Engine::new(&p, BcreOptions::default()).unwrap();
            let mut direct = Engine::new(&p, BcreOptions { table_limit: 0, ..BcreOptions::default() }).unwrap();
            let a = jump_law(&mut tables, n, m, 6);
            let b = jump_law(&mut direct, n, m, 7);
            let keys: std::collections::BTreeSet<i64> = a.keys().chain(b.keys()).copied().collect();
            for k in keys {
                let pa = *a.get(&k).unwrap_or(&0) as f64 / m as f64;
                let pb = *b.get(&k).unwrap_or(&0) as f64 / m as f64;
                let se = ((pa * (1.0 - pa) + pb * (1.0 - pb)) / m as f64).sqrt().max(2e-5);
                assert!((pa - pb).abs() < 5.0 * se, "jump {k}: {pa} vs {pb}");
            }
        }
    }

    #[test]
    fn direct_branching_excess_matches_conditioned_convolution() {
        let kernel = SelectionKernel::Geometric;
        let (y, n) = (0.4, 40u64);
        let sd = kernel.sum_distribution(y, n, 200);
        let positive = 1.0 - sd.pmf[0];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = 200_000;
        let mut counts = vec![0usize; 60];
        let mut total = 0.0;
        for _ in 0..m {
            let e = selection_excess(&kernel, y, n, &mut rng);
            assert!(e >= 1);
            total += e as f64;
            if (e as usize) < 60 {
                counts[e as usize] += 1;
            }
        }
        for k in [5usize, 15, 25, 35] {
            let q = sd.pmf[k] / positive;
            let f = counts[k] as f64 / m as f64;
            assert!((f - q).abs() < 5.0 * (q * (1.0 - q) / m as f64).sqrt(), "k={k}: {f} vs {q}");
        }
        let mean = n as f64 * y / (1.0 - y) / positive;
        assert!((total / m as f64 - mean).abs() < 0.05 * mean);
    }

    #[test]
    fn merger_size_law() {
        let (n, z) = (30u64, 0.03);
        let pmf = binomial_pmf(n, z, n as usize);
        let p2 = prob_at_least_two(n, z);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = 100_000;
        let twos = (0..m).filter(|_| merger_size(n, z, &mut rng) == 2).count();
        let q = pmf[2] / p2;
        let f = twos as f64 / m as f64;
        assert!((f - q).abs() < 5.0 * (q * (1.0 - q) / m as f64).sqrt());
        assert!((p2 - (1.0 - pmf[0] - pmf[1])).abs() < 1e-14);
    }

    #[test]
    fn explosion_guard_fires() {
        let p = params(SelectionKernel::Geometric, FiniteMeasure::zero(), 3.0, FiniteMeasure::zero(), 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let opts = BcreOptions { ceiling: 50, ..BcreOptions::default() };
        assert!(matches!(simulate(&p, 1, 10.0, opts, &mut rng), Err(Error::StateExplosion { .. })));
    }

    #[test]
    fn stationary_without_branching_is_delta_one() {
        let p = params(SelectionKernel::Geometric, FiniteMeasure::zero(), 0.0, FiniteMeasure::zero(), 0.0, 1.0);
        let s = stationary_estimate(&p, 5, 20.0, 40.0, 4, 0.05, BcreOptions::default(), &Streams::new(11)).unwrap();
        assert_eq!(s.pmf, vec![0.0, 1.0]);
        assert_eq!(s.pgf(1.0), 1.0);
        assert_eq!(s.pgf(0.3), 0.3);
    }

    #[test]
    fn stationary_birth_death_is_truncated_poisson() {
        // Birth w n, death sigma C(n,2): detailed balance gives
        // nu(n) proportional to theta^n / n! with theta = 2 w / sigma.
        let (w, sigma) = (1.5, 1.0);
        let p = params(SelectionKernel::Geometric, FiniteMeasure::zero(), w, FiniteMeasure::zero(), 0.0, sigma);
        let s = stationary_estimate(&p, 1, 10.0, 2_000.0, 16, 0.05, BcreOptions::default(), &Streams::new(12)).unwrap();
        let theta = 2.0 * w / sigma;
        let mut exact = vec![0.0];
        let mut term = 1.0;
        for k in 1..40 {
            term *= theta / k as f64;
            exact.push(term);
        }
        let z: f64 = exact.iter().sum();
        exact.iter_mut().for_each(|v| *v /= z);
        assert!(total_variation(&s.pmf, &exact) < 0.02);
        assert!((s.pgf(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fraction_below_tracks_horizons() {
        let p = params(SelectionKernel::Geometric, FiniteMeasure::zero(), 0.0, FiniteMeasure::zero(), 0.0, 1.0);
        let f = fraction_below(&p, 10, &[0.0, 0.5, 50.0], 1, 2000, BcreOptions::default(), &Streams::new(13)).unwrap();
        assert_eq!(f[0].mean, 0.0);
        assert!(f[1].mean > 0.0 && f[1].mean < 1.0);
        assert_eq!(f[2].mean, 1.0);
    }
}
