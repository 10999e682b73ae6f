use serde::{Deserialize, Serialize};

use super::{FiniteMeasure, SelectionKernel};
use crate::error::{invalid, Error, Result};

/// Checks that `mu = Lambda_s / m` is well defined and returns
/// `int m dmu = Lambda_s(]0,1])`.
pub fn check_master_condition(kernel: &SelectionKernel, lambda_s: &FiniteMeasure) -> Result<f64> {
    for a in lambda_s.atoms() {
        if kernel.mean_excess(a.location) <= 0.0 {
            return Err(Error::DegenerateKernelAtAtom { location: a.location });
        }
    }
    let mass = lambda_s.total_mass();
    if !mass.is_finite() {
        return Err(Error::InvalidMeasure("Lambda_s has infinite mass".into()));
    }
    Ok(mass)
}

fn nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and nonnegative, got {v}")))
    }
}

/// Parameters shared by the limit processes: kernel, `Lambda_s`, `w`,
/// `Lambda_c`, `c`, `sigma`. The selection intensity `mu` is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LimitSpec", into = "LimitSpec")]
pub struct LimitParams {
    kernel: SelectionKernel,
    lambda_s: FiniteMeasure,
    w: f64,
    lambda_c: FiniteMeasure,
    c: f64,
    sigma: f64,
    mu: FiniteMeasure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSpec {
    pub kernel: SelectionKernel,
    #[serde(default = "FiniteMeasure::zero")]
    pub lambda_s: FiniteMeasure,
    #[serde(default)]
    pub w: f64,
    #[serde(default = "FiniteMeasure::zero")]
    pub lambda_c: FiniteMeasure,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub sigma: f64,
}

impl TryFrom<LimitSpec> for LimitParams {
    type Error = Error;
    fn try_from(s: LimitSpec) -> Result<Self> {
        LimitParams::new(s.kernel, s.lambda_s, s.w, s.lambda_c, s.c, s.sigma)
    }
}

impl From<LimitParams> for LimitSpec {
    fn from(p: LimitParams) -> Self {
        LimitSpec { kernel: p.kernel, lambda_s: p.lambda_s, w: p.w, lambda_c: p.lambda_c, c: p.c, sigma: p.sigma }
    }
}

impl LimitParams {
    pub fn new(
        kernel: SelectionKernel,
        lambda_s: FiniteMeasure,
        w: f64,
        lambda_c: FiniteMeasure,
        c: f64,
        sigma: f64,
    ) -> Result<Self> {
        nonnegative("w", w)?;
        nonnegative("c", c)?;
        nonnegative("sigma", sigma)?;
        if lambda_s.has_atom_at(0.0) {
            return Err(Error::InvalidMeasure("Lambda_s has an atom at 0".into()));
        }
        if lambda_c.has_atom_at(0.0) {
            return Err(Error::InvalidMeasure("Lambda_c has an atom at 0".into()));
        }
        check_master_condition(&kernel, &lambda_s)?;
        let mu = lambda_s.reweighted(|y| 1.0 / kernel.mean_excess(y))?;
        let p = LimitParams { kernel, lambda_s, w, lambda_c, c, sigma, mu };
        let activity = p.mu.total_mass() + w + c * p.lambda_c.total_mass() + sigma;
        if activity <= 0.0 {
            return Err(invalid("parameters", "mu, w, c Lambda_c and sigma are all zero"));
        }
        Ok(p)
    }

    pub fn kernel(&self) -> &SelectionKernel {
        &self.kernel
    }
    pub fn lambda_s(&self) -> &FiniteMeasure {
        &self.lambda_s
    }
    pub fn lambda_c(&self) -> &FiniteMeasure {
        &self.lambda_c
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `mu(dy) = Lambda_s(dy) / m(y)`.
    pub fn mu(&self) -> &FiniteMeasure {
        &self.mu
    }

    /// `alpha_s = Lambda_s([0,1])`.
    pub fn alpha_s(&self) -> f64 {
        self.lambda_s.total_mass()
    }

    /// Total rate of selection events, `mu(]0,1])`.
    pub fn selection_rate(&self) -> f64 {
        self.mu.total_mass()
    }

    /// `c int z^-2 Lambda_c(dz)`, infinite for infinite-activity `Lambda_c`.
    pub fn coalescence_rate(&self) -> f64 {
        if self.c == 0.0 || self.lambda_c.total_mass() == 0.0 {
            return 0.0;
        }
        if !self.lambda_c.negative_moment_is_finite(2.0) {
            return f64::INFINITY;
        }
        self.c * self.lambda_c.integrate(|z| z.powi(-2)).unwrap_or(f64::INFINITY)
    }

    /// Same parameters with `Lambda_s` replaced.
    pub fn with_lambda_s(&self, lambda_s: FiniteMeasure) -> Result<Self> {
        Self::new(self.kernel.clone(), lambda_s, self.w, self.lambda_c.clone(), self.c, self.sigma)
    }

    /// Errors unless both jump intensities are finite.
    pub fn require_finite_activity(&self) -> Result<()> {
        if !self.selection_rate().is_finite() {
            return Err(Error::InfiniteJumpIntensity { what: "selection" });
        }
        if !self.coalescence_rate().is_finite() {
            return Err(Error::InfiniteJumpIntensity { what: "coalescence" });
        }
        Ok(())
    }
}
