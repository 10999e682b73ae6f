//! The two-type Fleming-Viot process with weak and rare selection: a
//! jump-diffusion on `[0,1]` for the weak-allele frequency `X`.
//!
//! Selection shocks arrive at rate `mu(]0,1])` and send `x` to `phi_y(x)`;
//! coalescence shocks arrive at rate `c int z^-2 Lambda_c(dz)` and send `x` to
//! `x(1-z)+z` with probability `x`, to `x(1-z)` otherwise. Between shocks the
//! path follows `dx = -w x(1-x) dt + sqrt(sigma x(1-x)) dB`.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AtomSampler, LimitParams};
use crate::rng::Streams;
use crate::stats::{replicate_map, Estimate};

/// States within this distance of 0 or 1 are absorbed.
pub const ABSORPTION_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpKind {
    Selection,
    Coalescence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub kind: JumpKind,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathX {
    pub dt: f64,
    /// `values[k]` is the state at time `min(k dt, horizon)`.
    pub values: Vec<f64>,
    pub horizon: f64,
    pub jumps: Vec<Jump>,
}

impl PathX {
    pub fn time(&self, k: usize) -> f64 {
        (k as f64 * self.dt).min(self.horizon)
    }
}

/// Reusable simulator for one parameter set and step size.
#[derive(Debug, Clone)]
pub struct Fvwrs<'a> {
    params: &'a LimitParams,
    dt: f64,
    selection: Option<AtomSampler>,
    coalescence: Option<AtomSampler>,
    selection_rate: f64,
    jump_rate: f64,
    jump_clock: Option<Exp<f64>>,
}

fn absorb(x: f64) -> f64 {
    if x < ABSORPTION_EPS {
        0.0
    } else if x > 1.0 - ABSORPTION_EPS {
        1.0
    } else {
        x
    }
}

fn is_absorbed(x: f64) -> bool {
    x == 0.0 || x == 1.0
}

struct Clock {
    next: f64,
}

impl<'a> Fvwrs<'a> {
    pub fn new(params: &'a LimitParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidStep(dt));
        }
        params.require_finite_activity()?;
        let selection = params.mu().sampler();
        let coalescence = if params.c() > 0.0 {
            params.lambda_c().reweighted(|z| z.powi(-2))?.sampler()
        } else {
            None
        };
        let selection_rate = selection.as_ref().map_or(0.0, AtomSampler::total);
        let coalescence_rate = coalescence.as_ref().map_or(0.0, |s| s.total() * params.c());
        let total = selection_rate + coalescence_rate;
        let jump_clock = (total > 0.0).then(|| Exp::new(total).expect("positive rate"));
        Ok(Fvwrs { params, dt, selection, coalescence, selection_rate, jump_rate: total, jump_clock })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn next_arrival<R: Rng + ?Sized>(&self, now: f64, rng: &mut R) -> f64 {
        match &self.jump_clock {
            Some(e) => now + e.sample(rng),
            None => f64::INFINITY,
        }
    }

    fn apply_jump<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> (JumpKind, f64) {
        if rng.random::<f64>() * self.jump_rate < self.selection_rate {
            let y = self.selection.as_ref().unwrap().sample(rng);
            let after = self.params.kernel().pgf(y, x);
            debug_assert!(after <= x + 1e-15, "selection increased x: {x} -> {after}");
            (JumpKind::Selection, absorb(after))
        } else {
            let z = self.coalescence.as_ref().unwrap().sample(rng);
            let after = if rng.random::<f64>() <= x { x * (1.0 - z) + z } else { x * (1.0 - z) };
            debug_assert!((0.0..=1.0).contains(&after));
            (JumpKind::Coalescence, absorb(after))
        }
    }

    /// Deterministic drift flow of `dx = -w x(1-x) dt` over `h`.
    fn drift_flow(&self, x: f64, h: f64) -> f64 {
        let w = self.params.w();
        if w == 0.0 || is_absorbed(x) {
            return x;
        }
        let e = (-w * h).exp();
        absorb(x * e / (1.0 - x + x * e))
    }

    fn euler_step<R: Rng + ?Sized>(&self, x: f64, h: f64, rng: &mut R) -> f64 {
        if is_absorbed(x) {
            return x;
        }
        let v = x * (1.0 - x);
        let xi: f64 = StandardNormal.sample(rng);
        let next = x - self.params.w() * v * h + (self.params.sigma() * v * h).sqrt() * xi;
        absorb(next.clamp(0.0, 1.0))
    }

    /// Moves the state from `t0` to `t1`, applying every jump with time in
    /// `(t0, t1]`.
    fn advance<R: Rng + ?Sized>(
        &self,
        mut x: f64,
        t0: f64,
        t1: f64,
        clock: &mut Clock,
        rng: &mut R,
        mut log: Option<&mut Vec<Jump>>,
    ) -> f64 {
        let diffusive = self.params.sigma() > 0.0;
        let mut now = t0;
        if diffusive {
            x = self.euler_step(x, t1 - t0, rng);
        }
        while clock.next <= t1 {
            if is_absorbed(x) {
                return x;
            }
            if !diffusive {
                x = self.drift_flow(x, clock.next - now);
            }
            now = clock.next;
            if !is_absorbed(x) {
                let (kind, after) = self.apply_jump(x, rng);
                if let Some(log) = log.as_deref_mut() {
                    log.push(Jump { time: now, kind, before: x, after });
                }
                x = after;
            }
            clock.next = self.next_arrival(now, rng);
        }
        if !diffusive {
            x = self.drift_flow(x, t1 - now);
        }
        x
    }

    fn check_start(x0: f64, horizon: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&x0) {
            return Err(crate::error::invalid("x0", format!("must lie in [0,1], got {x0}")));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(crate::error::invalid("horizon", format!("must be finite and nonnegative, got {horizon}")));
        }
        Ok(())
    }

    /// States at each time in `times` (nondecreasing) along one path.
    pub fn sample_at<R: Rng + ?Sized>(&self, x0: f64, times: &[f64], rng: &mut R) -> Vec<f64> {
        let mut x = absorb(x0);
        let mut clock = Clock { next: self.next_arrival(0.0, rng) };
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            if self.params.sigma() > 0.0 {
                while now < t && !is_absorbed(x) {
                    let next = (now + self.dt).min(t);
                    x = self.advance(x, now, next, &mut clock, rng, None);
                    now = next;
                }
            } else if now < t && !is_absorbed(x) {
                x = self.advance(x, now, t, &mut clock, rng, None);
            }
            now = now.max(t);
            out.push(x);
        }
        out
    }

    /// State at `horizon`.
    pub fn terminal<R: Rng + ?Sized>(&self, x0: f64, horizon: f64, rng: &mut R) -> f64 {
        self.sample_at(x0, &[horizon], rng)[0]
    }

    /// Full path on the `dt` grid, with an optional jump log.
    pub fn path<R: Rng + ?Sized>(&self, x0: f64, horizon: f64, log_jumps: bool, rng: &mut R) -> Result<PathX> {
        Self::check_start(x0, horizon)?;
        let cells = (horizon / self.dt).ceil() as usize;
        let mut values = Vec::with_capacity(cells + 1);
        let mut jumps = Vec::new();
        let mut x = absorb(x0);
        let mut clock = Clock { next: self.next_arrival(0.0, rng) };
        values.push(x);
        for k in 0..cells {
            let t0 = k as f64 * self.dt;
            let t1 = ((k + 1) as f64 * self.dt).min(horizon);
            if !is_absorbed(x) {
                x = self.advance(x, t0, t1, &mut clock, rng, log_jumps.then_some(&mut jumps));
            }
            values.push(x);
        }
        Ok(PathX { dt: self.dt, values, horizon, jumps })
    }
}

/// One path of `X` from `x0` over `[0, horizon]`.
pub fn simulate_path<R: Rng + ?Sized>(
    params: &LimitParams,
    x0: f64,
    horizon: f64,
    dt: f64,
    log_jumps: bool,
    rng: &mut R,
) -> Result<PathX> {
    Fvwrs::new(params, dt)?.path(x0, horizon, log_jumps, rng)
}

/// Mean and standard error of `X(t)^n` over `m` independent paths.
pub fn moment_estimate(
    params: &LimitParams,
    x0: f64,
    n: u32,
    t: f64,
    m: usize,
    dt: f64,
    streams: &Streams,
) -> Result<Estimate> {
    let sim = Fvwrs::new(params, dt)?;
    Fvwrs::check_start(x0, t)?;
    if t == 0.0 {
        return Ok(Estimate::exact(x0.powi(n as i32)));
    }
    let samples = replicate_map(streams, m, |_, rng| sim.terminal(x0, t, rng).powi(n as i32));
    Ok(Estimate::from_samples(&samples))
}

/// Terminal states of `m` independent paths at each of `times`.
pub fn terminal_states(
    params: &LimitParams,
    x0: f64,
    times: &[f64],
    m: usize,
    dt: f64,
    streams: &Streams,
) -> Result<Vec<Vec<f64>>> {
    let sim = Fvwrs::new(params, dt)?;
    for &t in times {
        Fvwrs::check_start(x0, t)?;
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(crate::error::invalid("times", "must be nondecreasing"));
    }
    Ok(replicate_map(streams, m, |_, rng| sim.sample_at(x0, times, rng)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbsorptionScan {
    pub horizon: f64,
    pub at_0: Estimate,
    pub at_1: Estimate,
    pub interior: Estimate,
}

impl AbsorptionScan {
    pub fn classify(horizon: f64, states: &[f64], eps: f64) -> Self {
        let m = states.len();
        let zeros = states.iter().filter(|&&x| x <= eps).count();
        let ones = states.iter().filter(|&&x| x >= 1.0 - eps).count();
        AbsorptionScan {
            horizon,
            at_0: Estimate::proportion(zeros, m),
            at_1: Estimate::proportion(ones, m),
            interior: Estimate::proportion(m - zeros - ones, m),
        }
    }
}

/// Fractions of paths within `eps` of 0, of 1, and in between at `horizon`.
pub fn absorption_scan(
    params: &LimitParams,
    x0: f64,
    horizon: f64,
    m: usize,
    dt: f64,
    eps: f64,
    streams: &Streams,
) -> Result<AbsorptionScan> {
    let states = terminal_states(params, x0, &[horizon], m, dt, streams)?;
    let finals: Vec<f64> = states.into_iter().map(|v| v[0]).collect();
    Ok(AbsorptionScan::classify(horizon, &finals, eps))
}
