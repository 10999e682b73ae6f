use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::{binomial_pmf, LimitParams, SelectionKernel};

/// Jump rates out of state `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub state: u64,
    /// `branch[k-1]`: rate of `n -> n+k`, `k = 1..=k_max`.
    pub branch: Vec<f64>,
    /// Rate of all branching jumps beyond `n + k_max`.
    pub tail: f64,
    /// `coalesce[k-1]`: rate of `n -> n-k`, `k = 1..n-1`.
    pub coalesce: Vec<f64>,
    pub total: f64,
    #[serde(skip)]
    tails: Vec<AtomTail>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

/// Tail contribution of one atom of `mu`.
#[derive(Debug, Clone, PartialEq)]
struct AtomTail {
    y: f64,
    /// `mu({y}) P(sum > n + k_max)`.
    rate: f64,
    /// `P(sum > n + k_max)`.
    prob: f64,
}

const INITIAL_K: usize = 16;
const MAX_K: usize = 1 << 16;

fn branch_terms(params: &LimitParams, n: u64, k_max: usize) -> (Vec<f64>, Vec<AtomTail>) {
    let mut branch = vec![0.0; k_max];
    let mut tails = Vec::new();
    for atom in params.mu().atoms() {
        let d = params.kernel().sum_distribution(atom.location, n, k_max);
        for (slot, p) in branch.iter_mut().zip(&d.pmf[1..]) {
            *slot += atom.weight * p;
        }
        if d.tail > 0.0 {
            tails.push(AtomTail { y: atom.location, rate: atom.weight * d.tail, prob: d.tail });
        }
    }
    if let Some(first) = branch.first_mut() {
        *first += params.w() * n as f64;
    }
    (branch, tails)
}

fn coalesce_terms(params: &LimitParams, n: u64) -> Vec<f64> {
    let len = n.saturating_sub(1) as usize;
    let mut out = vec![0.0; len];
    if len == 0 {
        return out;
    }
    if params.c() > 0.0 {
        for atom in params.lambda_c().atoms() {
            let z = atom.location;
            let scale = params.c() * atom.weight / (z * z);
            // C(n,k+1) z^{k+1} (1-z)^{n-k-1} is P(Bin(n,z) = k+1).
            let pmf = binomial_pmf(n, z, n as usize);
            for (k, slot) in out.iter_mut().enumerate() {
                *slot += scale * pmf[k + 2];
            }
        }
    }
    out[0] += params.sigma() * (n * (n - 1)) as f64 / 2.0;
    out
}

/// Total rate of branching jumps from `n`, `sum_i mu_i (1 - P(K=1)^n) + w n`.
pub(crate) fn branch_mass(params: &LimitParams, n: u64) -> f64 {
    let kernel = params.kernel();
    params
        .mu()
        .atoms()
        .iter()
        .map(|a| a.weight * prob_some_excess(kernel, a.location, n))
        .sum::<f64>()
        + params.w() * n as f64
}

/// `1 - P(K_y = 1)^n`.
pub(crate) fn prob_some_excess(kernel: &SelectionKernel, y: f64, n: u64) -> f64 {
    let q = kernel.prob_single(y);
    if q <= 0.0 {
        1.0
    } else {
        -(n as f64 * q.ln()).exp_m1()
    }
}

impl RateTable {
    fn assemble(state: u64, branch: Vec<f64>, tails: Vec<AtomTail>, coalesce: Vec<f64>) -> Self {
        let tail: f64 = tails.iter().map(|t| t.rate).sum();
        let mut cumulative = Vec::with_capacity(branch.len() + 1 + coalesce.len());
        let mut acc = 0.0;
        for r in branch.iter().chain(std::iter::once(&tail)).chain(&coalesce) {
            acc += r;
            cumulative.push(acc);
        }
        RateTable { state, branch, tail, coalesce, total: acc, tails, cumulative }
    }

    /// Rates with branching sizes up to `k_max` listed explicitly.
    pub fn with_k_max(params: &LimitParams, n: u64, k_max: usize) -> Result<Self> {
        if n == 0 {
            return Err(crate::error::invalid("n", "state must be at least 1"));
        }
        let k_max = k_max.max(1);
        let (branch, tails) = branch_terms(params, n, k_max);
        let table = Self::assemble(n, branch, tails, coalesce_terms(params, n));
        table.check_invariants(params);
        Ok(table)
    }

    /// Rates with the smallest power-of-two `k_max >= 16` whose tail rate is
    /// below `tol` times the total rate.
    pub fn adaptive(params: &LimitParams, n: u64, tol: f64) -> Result<Self> {
        if n == 0 {
            return Err(crate::error::invalid("n", "state must be at least 1"));
        }
        let coalesce = coalesce_terms(params, n);
        let total = branch_mass(params, n) + coalesce.iter().sum::<f64>();
        let mut k_max = match params.kernel() {
            SelectionKernel::Table(t) => (n as usize * t.max_parents().saturating_sub(1)).clamp(1, MAX_K),
            _ => INITIAL_K,
        };
        loop {
            let (branch, tails) = branch_terms(params, n, k_max);
            let tail: f64 = tails.iter().map(|t| t.rate).sum();
            if tail <= tol * total || k_max >= MAX_K {
                let table = Self::assemble(n, branch, tails, coalesce);
                table.check_invariants(params);
                return Ok(table);
            }
            k_max *= 2;
        }
    }

    pub fn k_max(&self) -> usize {
        self.branch.len()
    }

    pub fn total_branch(&self) -> f64 {
        self.branch.iter().sum::<f64>() + self.tail
    }

    fn check_invariants(&self, params: &LimitParams) {
        debug_assert!(self.branch.iter().chain(&self.coalesce).all(|r| *r >= 0.0) && self.tail >= 0.0);
        let bound = self.state as f64 * (params.alpha_s() + params.w());
        debug_assert!(
            self.total_branch() <= bound * (1.0 + 1e-9) + 1e-12,
            "branch rate {} exceeds Markov bound {bound} at n = {}",
            self.total_branch(),
            self.state
        );
    }

    /// Draws the next state given that a jump occurs.
    pub fn sample_jump<R: Rng + ?Sized>(&self, params: &LimitParams, rng: &mut R) -> u64 {
        let n = self.state;
        let u = rng.random::<f64>() * self.total;
        let idx = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
        let kb = self.branch.len();
        if idx < kb {
            n + idx as u64 + 1
        } else if idx == kb {
            n + self.sample_tail(params, rng)
        } else {
            n - (idx - kb) as u64
        }
    }

    /// Excess `k > k_max` of a tail jump, by inverse transform on the exact
    /// conditional law.
    fn sample_tail<R: Rng + ?Sized>(&self, params: &LimitParams, rng: &mut R) -> u64 {
        let mut u = rng.random::<f64>() * self.tail;
        let mut atom = &self.tails[self.tails.len() - 1];
        for t in &self.tails {
            if u < t.rate {
                atom = t;
                break;
            }
            u -= t.rate;
        }
        let target = rng.random::<f64>() * atom.prob;
        walk_tail(params.kernel(), atom.y, self.state, self.k_max(), target)
    }
}

/// Walks `P(sum = n + k)` for `k = k_max+1, ...` and returns the first `k`
/// at which the accumulated mass reaches `target`.
fn walk_tail(kernel: &SelectionKernel, y: f64, n: u64, k_max: usize, target: f64) -> u64 {
    let nf = n as f64;
    match kernel {
        SelectionKernel::Geometric => {
            let ly = y.ln();
            let mut lp = nf * (-y).ln_1p();
            let mut acc = 0.0;
            let mode = ((nf - 1.0) * y / (1.0 - y)).max(0.0);
            let mut k = 0u64;
            loop {
                k += 1;
                let kf = k as f64;
                lp += ((nf + kf - 1.0) / kf).ln() + ly;
                if k as usize > k_max {
                    let p = lp.exp();
                    acc += p;
                    if acc >= target || (kf > mode && p < 1e-300) {
                        return k;
                    }
                }
            }
        }
        SelectionKernel::Binary => {
            let pmf = binomial_pmf(n, y, n as usize);
            let mut acc = 0.0;
            for (k, p) in pmf.iter().enumerate().skip(k_max + 1) {
                acc += p;
                if acc >= target {
                    return k as u64;
                }
            }
            n
        }
        SelectionKernel::Table(t) => {
            let full = kernel.sum_distribution(y, n, n as usize * t.max_parents().saturating_sub(1).max(1));
            let mut acc = 0.0;
            let mut last = k_max as u64 + 1;
            for (k, p) in full.pmf.iter().enumerate().skip(k_max + 1) {
                if *p > 0.0 {
                    last = k as u64;
                }
                acc += p;
                if acc >= target {
                    return k as u64;
                }
            }
            last
        }
    }
}

/// Bounded least-recently-used cache of rate tables.
#[derive(Debug)]
pub struct RateCache {
    capacity: usize,
    tick: u64,
    entries: HashMap<u64, (Rc<RateTable>, u64)>,
}

impl RateCache {
    pub fn new(capacity: usize) -> Self {
        RateCache { capacity: capacity.max(1), tick: 0, entries: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_or_build<F>(&mut self, n: u64, build: F) -> Result<Rc<RateTable>>
    where
        F: FnOnce() -> Result<RateTable>,
    {
        self.tick += 1;
        if let Some(entry) = self.entries.get_mut(&n) {
            entry.1 = self.tick;
            return Ok(entry.0.clone());
        }
        let table = Rc::new(build()?);
        if self.entries.len() >= self.capacity {
            let oldest = self.entries.iter().min_by_key(|(_, (_, t))| *t).map(|(k, _)| *k);
            if let Some(k) = oldest {
                self.entries.remove(&k);
            }
        }
        self.entries.insert(n, (table.clone(), self.tick));
        Ok(table)
    }
}
