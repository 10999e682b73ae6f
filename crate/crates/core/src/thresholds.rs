//! The thresholds `beta*` (strength of genetic drift) and `alpha*` (shape of
//! rare selection), and the long-term classification of the weak allele.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FiniteMeasure, LimitParams, SelectionKernel};
use crate::rng::Streams;
use crate::stats::{replicate_map, Estimate};

/// Relative tolerance used by [`classify`] unless configured otherwise.
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    /// `alpha_Eff > beta*`: the weak allele dies out from every `x < 1`.
    ExtinctionAlmostSure,
    /// `alpha_Eff < beta*`: the weak allele fixes with positive probability.
    SurvivalPossible,
    /// Within tolerance of the critical case.
    Indeterminate,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::ExtinctionAlmostSure => "ExtinctionAlmostSure",
            Classification::SurvivalPossible => "SurvivalPossible",
            Classification::Indeterminate => "Indeterminate",
        }
    }
}

/// `int -log(1-y) / y^2 Lambda_c(dy)`, infinite for an atom at 1 or a density
/// with `int y^-1 Lambda_c(dy) = inf`.
pub fn beta_star(lambda_c: &FiniteMeasure) -> Result<f64> {
    if lambda_c.has_atom_at(1.0) {
        return Ok(f64::INFINITY);
    }
    if lambda_c.has_atom_at(0.0) {
        return Err(Error::InvalidMeasure("Lambda_c has an atom at 0".into()));
    }
    if !lambda_c.negative_moment_is_finite(1.0) {
        return Ok(f64::INFINITY);
    }
    lambda_c.integrate(|y| -(-y).ln_1p() / (y * y))
}

/// `g(m) = int_0^1 dv / (1 + v m) = log(1+m)/m`, with `g(0) = 1` and
/// `g(inf) = 0`.
pub fn shape_factor(m: f64) -> f64 {
    if m == 0.0 {
        1.0
    } else if m.is_infinite() {
        0.0
    } else if m < 1e-8 {
        1.0 - m / 2.0
    } else {
        m.ln_1p() / m
    }
}

/// `int g(m(y)) Lambda_s(dy) / alpha_s`. Equal to 1 by convention when
/// `Lambda_s = 0`.
pub fn alpha_star(kernel: &SelectionKernel, lambda_s: &FiniteMeasure) -> Result<f64> {
    let alpha_s = lambda_s.total_mass();
    if alpha_s == 0.0 {
        return Ok(1.0);
    }
    Ok(lambda_s.integrate(|y| shape_factor(kernel.mean_excess(y)))? / alpha_s)
}

pub fn alpha_eff(alpha_s: f64, alpha_star: f64, w: f64) -> f64 {
    alpha_s * alpha_star + w
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub beta_star: f64,
    pub alpha_star: f64,
    pub alpha_s: f64,
    pub w: f64,
    pub c: f64,
    pub alpha_eff: f64,
    /// `c beta*`, the drift threshold for coalescence at rate `c`.
    pub drift_threshold: f64,
    pub classification: Classification,
    /// `alpha_eff - drift_threshold`.
    pub margin: f64,
    pub tol: f64,
    pub lambda_s_nodes: Option<usize>,
    pub lambda_c_nodes: Option<usize>,
}

/// Compares `alpha_Eff` with `c beta*` under relative tolerance `tol`.
pub fn classify(params: &LimitParams, tol: f64) -> Result<ThresholdReport> {
    if params.sigma() > 0.0 {
        return Err(Error::SigmaNotZero(params.sigma()));
    }
    if !(0.0..1.0).contains(&tol) {
        return Err(crate::error::invalid("tol", format!("must lie in [0,1), got {tol}")));
    }
    let beta = beta_star(params.lambda_c())?;
    let a_star = alpha_star(params.kernel(), params.lambda_s())?;
    let a_eff = alpha_eff(params.alpha_s(), a_star, params.w());
    let threshold = if params.c() == 0.0 { 0.0 } else { params.c() * beta };
    let classification = if a_eff > threshold * (1.0 + tol) {
        Classification::ExtinctionAlmostSure
    } else if a_eff < threshold * (1.0 - tol) {
        Classification::SurvivalPossible
    } else {
        Classification::Indeterminate
    };
    Ok(ThresholdReport {
        beta_star: beta,
        alpha_star: a_star,
        alpha_s: params.alpha_s(),
        w: params.w(),
        c: params.c(),
        alpha_eff: a_eff,
        drift_threshold: threshold,
        classification,
        margin: a_eff - threshold,
        tol,
        lambda_s_nodes: params.lambda_s().node_count(),
        lambda_c_nodes: params.lambda_c().node_count(),
    })
}

/// Monte Carlo of `beta* = |Lambda_c| E[1 / (W (1 - W))] / 2` with
/// `W = Y U`, `Y ~ Lambda_c / |Lambda_c|` and `U` of density `2u`.
///
/// The integrand has a logarithmically divergent second moment near `U = 0`,
/// so standard errors converge slowly.
pub fn beta_star_monte_carlo(lambda_c: &FiniteMeasure, samples: usize, streams: &Streams) -> Result<Estimate> {
    let sampler = lambda_c.sampler().ok_or_else(|| Error::InvalidMeasure("Lambda_c is empty".into()))?;
    let mass = lambda_c.total_mass();
    let values = replicate_map(streams, samples, |_, rng| {
        let y = sampler.sample(rng);
        let u = (1.0 - rng.random::<f64>()).sqrt();
        let w = y * u;
        0.5 * mass / (w * (1.0 - w))
    });
    Ok(Estimate::from_samples(&values))
}

/// Monte Carlo of `alpha* = E[1 / (1 + V m(Y))]`, `V` uniform and
/// `Y ~ Lambda_s / alpha_s`.
pub fn alpha_star_monte_carlo(
    kernel: &SelectionKernel,
    lambda_s: &FiniteMeasure,
    samples: usize,
    streams: &Streams,
) -> Result<Estimate> {
    let sampler = lambda_s.sampler().ok_or_else(|| Error::InvalidMeasure("Lambda_s is empty".into()))?;
    let values = replicate_map(streams, samples, |_, rng| {
        let m = kernel.mean_excess(sampler.sample(rng));
        let v: f64 = rng.random();
        if m.is_infinite() {
            if v == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 / (1.0 + v * m)
        }
    });
    Ok(Estimate::from_samples(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn atom(y: f64, w: f64) -> FiniteMeasure {
        FiniteMeasure::dirac(y, w).unwrap()
    }

    /// `(1/2) int_0^1 2u / (y u (1 - y u)) du` by composite Simpson.
    fn beta_by_quadrature(y: f64) -> f64 {
        let n = 20_000;
        let h = 1.0 / n as f64;
        let f = |u: f64| 1.0 / (y * (1.0 - y * u));
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn beta_star_examples() {
        let b = beta_star(&atom(0.5, 1.0)).unwrap();
        assert_abs_diff_eq!(b, 4.0 * 2f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(b, beta_by_quadrature(0.5), epsilon = 1e-10);
        assert_eq!(beta_star(&atom(1.0, 1.0)).unwrap(), f64::INFINITY);
        for (y, approx) in [(0.1, 10.536), (0.01, 100.503), (0.001, 1000.5)] {
            let v = beta_star(&atom(y, 1.0)).unwrap();
            assert!((v - approx).abs() < 1e-3 * approx, "{y}: {v}");
            assert!(v > 1.0 / y);
        }
        assert_eq!(beta_star(&FiniteMeasure::zero()).unwrap(), 0.0);
    }

    #[test]
    fn beta_star_for_densities() {
        use crate::model::DensityLaw;
        let uniform = FiniteMeasure::density(DensityLaw::Uniform, 1.0, 64).unwrap();
        assert_eq!(beta_star(&uniform).unwrap(), f64::INFINITY);
        let beta = FiniteMeasure::density(DensityLaw::Beta { a: 3.0, b: 1.0 }, 1.0, 1024).unwrap();
        // 3 int -log(1-y) dy = 3; the log singularity at 1 slows the quadrature.
        assert_abs_diff_eq!(beta_star(&beta).unwrap(), 3.0, epsilon = 1e-3);
    }

    #[test]
    fn alpha_star_examples() {
        let g = alpha_star(&SelectionKernel::Geometric, &atom(0.5, 1.0)).unwrap();
        assert_abs_diff_eq!(g, 2f64.ln(), epsilon = 1e-15);
        let b = alpha_star(&SelectionKernel::Binary, &atom(0.5, 1.0)).unwrap();
        assert_abs_diff_eq!(b, 2.0 * 1.5f64.ln(), epsilon = 1e-15);
        let table = SelectionKernel::Table(
            crate::model::TablePmf::new(vec![crate::model::TableRow { y: 0.5, pmf: vec![], infinite: 1.0 }]).unwrap(),
        );
        assert_eq!(alpha_star(&table, &atom(0.5, 1.0)).unwrap(), 0.0);
        assert_eq!(alpha_star(&SelectionKernel::Geometric, &FiniteMeasure::zero()).unwrap(), 1.0);
    }

    #[test]
    fn shape_factor_is_the_v_integral() {
        for m in [1e-10, 0.01, 0.5, 1.0, 7.0] {
            let n = 10_000;
            let mid: f64 = (0..n).map(|i| 1.0 / (1.0 + (i as f64 + 0.5) / n as f64 * m)).sum::<f64>() / n as f64;
            assert_abs_diff_eq!(shape_factor(m), mid, epsilon = 1e-8);
        }
    }

    #[test]
    fn alpha_eff_examples() {
        assert_eq!(alpha_eff(0.0, 0.4, 0.3), 0.3);
        assert_abs_diff_eq!(alpha_eff(1.0, 2f64.ln(), 0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(alpha_eff(5.0, 2f64.ln(), 0.1), 3.565736, epsilon = 1e-6);
    }

    fn ac_params(mass: f64) -> LimitParams {
        LimitParams::new(SelectionKernel::Geometric, atom(0.5, mass), 0.0, atom(0.5, 1.0), 1.0, 0.0).unwrap()
    }

    #[test]
    fn classification_examples() {
        let r = classify(&ac_params(1.0), 1e-6).unwrap();
        assert_eq!(r.classification, Classification::SurvivalPossible);
        assert_abs_diff_eq!(r.alpha_eff, 2f64.ln(), epsilon = 1e-15);
        let r = classify(&ac_params(5.0), 1e-6).unwrap();
        assert_eq!(r.classification, Classification::ExtinctionAlmostSure);
        assert_abs_diff_eq!(r.alpha_eff, 5.0 * 2f64.ln(), epsilon = 1e-14);
        // alpha_s ln 2 = 4 ln 2 at mass 4 is critical.
        assert_eq!(classify(&ac_params(4.0), 1e-6).unwrap().classification, Classification::Indeterminate);
        let sigma = LimitParams::new(SelectionKernel::Geometric, atom(0.5, 1.0), 0.0, atom(0.5, 1.0), 1.0, 0.5).unwrap();
        assert_eq!(classify(&sigma, 1e-6).unwrap_err(), Error::SigmaNotZero(0.5));
    }

    #[test]
    fn geometric_never_exceeds_binary() {
        for i in 1..=9 {
            let y = i as f64 / 10.0;
            let g = alpha_star(&SelectionKernel::Geometric, &atom(y, 1.0)).unwrap();
            let b = alpha_star(&SelectionKernel::Binary, &atom(y, 1.0)).unwrap();
            assert!(g <= b, "y = {y}");
        }
    }

    #[test]
    fn monte_carlo_agrees_with_reductions() {
        let s = Streams::new(21);
        let measures = [
            atom(0.5, 1.0),
            atom(0.2, 2.0),
            FiniteMeasure::atomic([(0.3, 0.5), (0.9, 0.5)]).unwrap(),
            FiniteMeasure::atomic([(0.05, 1.0), (0.6, 3.0)]).unwrap(),
            atom(0.99, 0.7),
        ];
        for (i, m) in measures.iter().enumerate() {
            let exact = beta_star(m).unwrap();
            let mc = beta_star_monte_carlo(m, 400_000, &s.fork(i as u64)).unwrap();
            assert!((mc.mean - exact).abs() < 4.0 * mc.se, "beta* {i}: {mc:?} vs {exact}");
        }
        let pairs = [
            (SelectionKernel::Geometric, atom(0.5, 1.0)),
            (SelectionKernel::Binary, atom(0.5, 1.0)),
            (SelectionKernel::Geometric, FiniteMeasure::atomic([(0.2, 1.0), (0.9, 2.0)]).unwrap()),
            (SelectionKernel::Binary, FiniteMeasure::atomic([(0.1, 1.0), (0.7, 1.0)]).unwrap()),
            (SelectionKernel::Geometric, atom(0.95, 0.3)),
        ];
        for (i, (k, m)) in pairs.iter().enumerate() {
            let exact = alpha_star(k, m).unwrap();
            let mc = alpha_star_monte_carlo(k, m, 400_000, &s.fork(100 + i as u64)).unwrap();
            assert!((mc.mean - exact).abs() < 4.0 * mc.se, "alpha* {i}: {mc:?} vs {exact}");
        }
    }
}
