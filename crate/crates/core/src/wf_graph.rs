//! Exact finite-`N` simulation of the Wright-Fisher graph with selection in a
//! random environment and multiple mergers.
//!
//! Forward in time we track the number of type-0 (weak) individuals. Given the
//! environment `y`, the merger strength `V` and the type `b` of the central
//! individual, children are conditionally iid and a child is type 0 iff all
//! of its `K_y` potential parents are, so one binomial draw per generation is
//! exact. Backward in time we track the number of distinct potential
//! ancestors, which requires explicit parent labels.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{geometric_excess, AtomSampler, FiniteMeasure, SelectionKernel, INFINITE_PARENTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FiniteModelSpec", into = "FiniteModelSpec")]
pub struct FiniteModelParams {
    spec: FiniteModelSpec,
    env: AtomSampler,
    strengths: Option<AtomSampler>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteModelSpec {
    pub population_size: usize,
    pub kernel: SelectionKernel,
    /// Law of the iid environment, a probability measure on `[0,1]`.
    pub env_law: FiniteMeasure,
    /// `c_N`: probability of a merger generation.
    #[serde(default)]
    pub merger_probability: f64,
    /// `Lambda_c`; merger strengths are drawn from `z^-2 Lambda_c(dz)`
    /// normalized.
    #[serde(default = "FiniteMeasure::zero")]
    pub merger_law: FiniteMeasure,
    /// Selection strength `w_N` applied in environment 0: there `K` is
    /// geometric with mean excess `w_N / (1 - w_N)` whatever the kernel.
    #[serde(default)]
    pub weak_selection: f64,
}

impl TryFrom<FiniteModelSpec> for FiniteModelParams {
    type Error = Error;
    fn try_from(spec: FiniteModelSpec) -> Result<Self> {
        FiniteModelParams::new(spec)
    }
}

impl From<FiniteModelParams> for FiniteModelSpec {
    fn from(p: FiniteModelParams) -> Self {
        p.spec
    }
}

/// Offspring law in a single generation.
#[derive(Debug, Clone, Copy)]
enum Site<'a> {
    Kernel(&'a SelectionKernel, f64),
    Weak(f64),
}

impl Site<'_> {
    fn pgf(self, x: f64) -> f64 {
        match self {
            Site::Kernel(k, y) => k.pgf(y, x),
            Site::Weak(w) => SelectionKernel::Geometric.pgf(w, x),
        }
    }

    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> u64 {
        match self {
            Site::Kernel(k, y) => k.sample(y, rng),
            Site::Weak(w) => 1 + geometric_excess(w, rng),
        }
    }
}

/// A merger event: strength `V` and central individual.
#[derive(Debug, Clone, Copy)]
struct Merger {
    strength: f64,
}

impl FiniteModelParams {
    pub fn new(spec: FiniteModelSpec) -> Result<Self> {
        if spec.population_size < 2 {
            return Err(invalid("population_size", "must be at least 2"));
        }
        if !spec.env_law.is_probability(1e-9) {
            return Err(Error::InvalidMeasure(format!(
                "environment law must be a probability measure, total mass is {}",
                spec.env_law.total_mass()
            )));
        }
        let c = spec.merger_probability;
        if !(0.0..=1.0).contains(&c) {
            return Err(invalid("merger_probability", format!("must lie in [0,1], got {c}")));
        }
        if !(0.0..1.0).contains(&spec.weak_selection) {
            return Err(invalid("weak_selection", format!("must lie in [0,1), got {}", spec.weak_selection)));
        }
        let strengths = if c > 0.0 {
            if spec.merger_law.has_atom_at(0.0) {
                return Err(Error::InvalidMeasure("merger law has an atom at 0".into()));
            }
            if !spec.merger_law.negative_moment_is_finite(2.0) {
                return Err(Error::InfiniteJumpIntensity { what: "merger" });
            }
            let law = spec.merger_law.reweighted(|z| z.powi(-2))?;
            Some(law.sampler().ok_or_else(|| Error::InvalidMeasure("merger law is empty but merger_probability > 0".into()))?)
        } else {
            None
        };
        let env = spec.env_law.sampler().ok_or_else(|| Error::InvalidMeasure("environment law is empty".into()))?;
        Ok(FiniteModelParams { spec, env, strengths })
    }

    pub fn spec(&self) -> &FiniteModelSpec {
        &self.spec
    }

    pub fn population_size(&self) -> usize {
        self.spec.population_size
    }

    pub fn kernel(&self) -> &SelectionKernel {
        &self.spec.kernel
    }

    pub fn env_law(&self) -> &FiniteMeasure {
        &self.spec.env_law
    }

    pub fn merger_probability(&self) -> f64 {
        self.spec.merger_probability
    }

    fn site(&self, y: f64) -> Site<'_> {
        if y == 0.0 && self.spec.weak_selection > 0.0 {
            Site::Weak(self.spec.weak_selection)
        } else {
            Site::Kernel(&self.spec.kernel, y)
        }
    }

    /// `phi_y(x)`, honoring weak selection in environment 0.
    pub fn pgf(&self, y: f64, x: f64) -> f64 {
        self.site(y).pgf(x)
    }

    fn draw_merger<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Merger> {
        let strengths = self.strengths.as_ref()?;
        if rng.random::<f64>() < self.spec.merger_probability {
            Some(Merger { strength: strengths.sample(rng) })
        } else {
            None
        }
    }

    /// Draws `len` iid environment values.
    pub fn draw_environment<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> EnvSequence {
        EnvSequence { values: (0..len).map(|_| self.env.sample(rng)).collect(), provenance: EnvProvenance::Drawn }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvProvenance {
    Given,
    Drawn,
}

/// One environment value per generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSequence {
    pub values: Vec<f64>,
    pub provenance: EnvProvenance,
}

impl EnvSequence {
    pub fn given(values: Vec<f64>) -> Result<Self> {
        if let Some(y) = values.iter().find(|y| !(0.0..=1.0).contains(*y)) {
            return Err(invalid("env", format!("value {y} outside [0,1]")));
        }
        Ok(EnvSequence { values, provenance: EnvProvenance::Given })
    }

    pub fn constant(y: f64, len: usize) -> Result<Self> {
        Self::given(vec![y; len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One forward generation from `zeros` type-0 individuals.
pub fn step_frequency<R: Rng + ?Sized>(params: &FiniteModelParams, zeros: usize, y: f64, rng: &mut R) -> usize {
    let n = params.population_size();
    debug_assert!(zeros <= n);
    if zeros == 0 {
        return 0;
    }
    let x = zeros as f64 / n as f64;
    let p = match params.draw_merger(rng) {
        Some(Merger { strength: v }) => {
            let central_is_zero = rng.random::<f64>() < x;
            (1.0 - v) * x + if central_is_zero { v } else { 0.0 }
        }
        None => x,
    };
    let q = params.site(y).pgf(p.clamp(0.0, 1.0));
    binomial(n as u64, q, rng) as usize
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("valid binomial").sample(rng)
    }
}

/// Reusable label bookkeeping for [`step_ancestry`].
#[derive(Debug, Default, Clone)]
pub struct AncestryScratch {
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl AncestryScratch {
    fn reset(&mut self, n: usize) {
        if self.seen.len() != n {
            self.seen = vec![false; n];
            self.touched.clear();
        }
        for &i in &self.touched {
            self.seen[i] = false;
        }
        self.touched.clear();
    }

    fn mark(&mut self, label: usize) -> bool {
        if self.seen[label] {
            false
        } else {
            self.seen[label] = true;
            self.touched.push(label);
            true
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AncestryStep {
    pub blocks: usize,
    /// An infinite parent count made every label reachable.
    pub saturated: bool,
}

/// One backward generation from `blocks` lineages: the number of distinct
/// potential parents.
pub fn step_ancestry<R: Rng + ?Sized>(
    params: &FiniteModelParams,
    blocks: usize,
    y: f64,
    rng: &mut R,
    scratch: &mut AncestryScratch,
) -> AncestryStep {
    let n = params.population_size();
    debug_assert!(blocks >= 1 && blocks <= n);
    let merger = params.draw_merger(rng);
    let v = merger.map_or(0.0, |m| m.strength);
    if v >= 1.0 {
        // Every pick is the central individual.
        return AncestryStep { blocks: 1, saturated: false };
    }
    let central = if merger.is_some() { rng.random_range(0..n) } else { 0 };
    let site = params.site(y);
    scratch.reset(n);
    let mut distinct = 0;
    for _ in 0..blocks {
        let k = site.sample(rng);
        if k == INFINITE_PARENTS {
            return AncestryStep { blocks: n, saturated: true };
        }
        // Split the picks into those landing on the central individual and
        // uniform ones; only the set of labels matters.
        let uniform = if merger.is_some() {
            let u = binomial(k, 1.0 - v, rng);
            if u < k && scratch.mark(central) {
                distinct += 1;
            }
            u
        } else {
            k
        };
        for _ in 0..uniform {
            if distinct == n {
                break;
            }
            if scratch.mark(rng.random_range(0..n)) {
                distinct += 1;
            }
        }
        if distinct == n {
            break;
        }
    }
    AncestryStep { blocks: distinct, saturated: false }
}

/// Forward path as type-0 counts, one entry per generation including the
/// initial state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyPath {
    pub population_size: usize,
    pub counts: Vec<usize>,
    pub env: EnvSequence,
}

impl FrequencyPath {
    pub fn fractions(&self) -> impl Iterator<Item = f64> + '_ {
        self.counts.iter().map(|&c| c as f64 / self.population_size as f64)
    }

    pub fn last_fraction(&self) -> f64 {
        *self.counts.last().unwrap() as f64 / self.population_size as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCountPath {
    pub population_size: usize,
    pub counts: Vec<usize>,
    pub saturations: usize,
    pub env: EnvSequence,
}

/// Runs the forward chain through `env` in order from `zeros0` type-0
/// individuals.
pub fn simulate_frequency<R: Rng + ?Sized>(
    params: &FiniteModelParams,
    zeros0: usize,
    env: &EnvSequence,
    rng: &mut R,
) -> Result<FrequencyPath> {
    let n = params.population_size();
    if zeros0 > n {
        return Err(invalid("zeros0", format!("{zeros0} exceeds population size {n}")));
    }
    let mut counts = Vec::with_capacity(env.len() + 1);
    let mut state = zeros0;
    counts.push(state);
    for &y in &env.values {
        if state != 0 && state != n {
            state = step_frequency(params, state, y, rng);
        }
        counts.push(state);
    }
    Ok(FrequencyPath { population_size: n, counts, env: env.clone() })
}

/// Runs the backward chain, consuming `env` from its last entry to its first.
pub fn simulate_ancestry<R: Rng + ?Sized>(
    params: &FiniteModelParams,
    blocks0: usize,
    env: &EnvSequence,
    rng: &mut R,
) -> Result<BlockCountPath> {
    let n = params.population_size();
    if blocks0 == 0 || blocks0 > n {
        return Err(invalid("blocks0", format!("must lie in 1..={n}, got {blocks0}")));
    }
    let mut scratch = AncestryScratch::default();
    let mut counts = Vec::with_capacity(env.len() + 1);
    let mut saturations = 0;
    let mut state = blocks0;
    counts.push(state);
    for &y in env.values.iter().rev() {
        let step = step_ancestry(params, state, y, rng, &mut scratch);
        saturations += usize::from(step.saturated);
        state = step.blocks;
        counts.push(state);
    }
    Ok(BlockCountPath { population_size: n, counts, saturations, env: env.clone() })
}
