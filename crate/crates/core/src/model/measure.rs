//! Finite measures on `[0,1]`, either atomic or a density discretized by a
//! fixed composite Gauss-Legendre rule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// Shape of a density measure, up to its total mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityLaw {
    Uniform,
    /// Density proportional to `y^(a-1) (1-y)^(b-1)`.
    Beta { a: f64, b: f64 },
}

impl DensityLaw {
    fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "uniform" {
            return Ok(DensityLaw::Uniform);
        }
        let inner = s
            .strip_prefix("beta(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::InvalidMeasure(format!("unknown density '{s}'")))?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        let parse = |p: &str| p.parse::<f64>().map_err(|_| Error::InvalidMeasure(format!("bad beta parameter '{p}'")));
        match parts.as_slice() {
            [a, b] => {
                let (a, b) = (parse(a)?, parse(b)?);
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::InvalidMeasure("beta parameters must be positive".into()));
                }
                Ok(DensityLaw::Beta { a, b })
            }
            _ => Err(Error::InvalidMeasure(format!("bad density '{s}'"))),
        }
    }

    fn label(&self) -> String {
        match self {
            DensityLaw::Uniform => "uniform".into(),
            DensityLaw::Beta { a, b } => format!("beta({a},{b})"),
        }
    }

    fn unnormalized(&self, y: f64) -> f64 {
        match *self {
            DensityLaw::Uniform => 1.0,
            DensityLaw::Beta { a, b } => y.powf(a - 1.0) * (1.0 - y).powf(b - 1.0),
        }
    }

    /// Exponent `e` with density `~ y^(e-1)` near 0.
    fn lower_exponent(&self) -> f64 {
        match *self {
            DensityLaw::Uniform => 1.0,
            DensityLaw::Beta { a, .. } => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Origin {
    Atomic,
    Density { law: DensityLaw, mass: f64, nodes: usize },
}

/// A finite measure on `[0,1]`. Density measures are stored as their
/// quadrature nodes, so every downstream computation sees the same atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec", into = "MeasureSpec")]
pub struct FiniteMeasure {
    atoms: Vec<Atom>,
    origin: Origin,
}

/// JSON form: `{"atoms": [[y, w], ...]}` or
/// `{"density": "uniform" | "beta(a,b)", "mass": m, "nodes": n}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum MeasureSpec {
    Atoms { atoms: Vec<(f64, f64)> },
    Density { density: String, mass: f64, nodes: usize },
}

impl TryFrom<MeasureSpec> for FiniteMeasure {
    type Error = Error;
    fn try_from(spec: MeasureSpec) -> Result<Self> {
        match spec {
            MeasureSpec::Atoms { atoms } => FiniteMeasure::atomic(atoms),
            MeasureSpec::Density { density, mass, nodes } => FiniteMeasure::density(DensityLaw::parse(&density)?, mass, nodes),
        }
    }
}

impl From<FiniteMeasure> for MeasureSpec {
    fn from(m: FiniteMeasure) -> Self {
        match m.origin {
            Origin::Atomic => MeasureSpec::Atoms { atoms: m.atoms.iter().map(|a| (a.location, a.weight)).collect() },
            Origin::Density { law, mass, nodes } => MeasureSpec::Density { density: law.label(), mass, nodes },
        }
    }
}

const GL4_NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL4_WEIGHTS: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

impl FiniteMeasure {
    pub fn zero() -> Self {
        FiniteMeasure { atoms: Vec::new(), origin: Origin::Atomic }
    }

    pub fn dirac(location: f64, weight: f64) -> Result<Self> {
        Self::atomic([(location, weight)])
    }

    /// Atoms with locations in `[0,1]` and strictly positive finite weights.
    /// Repeated locations are merged.
    pub fn atomic(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<Atom> = Vec::new();
        for (location, weight) in pairs {
            if !(0.0..=1.0).contains(&location) {
                return Err(Error::InvalidMeasure(format!("location {location} outside [0,1]")));
            }
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(Error::InvalidMeasure(format!("weight {weight} at {location} must be positive and finite")));
            }
            match atoms.iter_mut().find(|a| a.location == location) {
                Some(a) => a.weight += weight,
                None => atoms.push(Atom { location, weight }),
            }
        }
        Ok(FiniteMeasure { atoms, origin: Origin::Atomic })
    }

    /// Density measure of total mass `mass`, discretized with `nodes` points
    /// (rounded up to a multiple of 4).
    pub fn density(law: DensityLaw, mass: f64, nodes: usize) -> Result<Self> {
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(Error::InvalidMeasure(format!("mass {mass} must be nonnegative and finite")));
        }
        if nodes == 0 {
            return Err(Error::InvalidMeasure("density needs at least one node".into()));
        }
        let panels = nodes.div_ceil(4);
        let h = 1.0 / panels as f64;
        let mut atoms = Vec::with_capacity(4 * panels);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (t, w) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                let y = mid + 0.5 * h * t;
                atoms.push(Atom { location: y, weight: 0.5 * h * w * law.unnormalized(y) });
            }
        }
        let raw: f64 = atoms.iter().map(|a| a.weight).sum();
        if !(raw > 0.0 && raw.is_finite()) {
            return Err(Error::InvalidMeasure("density could not be normalized".into()));
        }
        for a in &mut atoms {
            a.weight *= mass / raw;
        }
        atoms.retain(|a| a.weight > 0.0);
        Ok(FiniteMeasure { atoms, origin: Origin::Density { law, mass, nodes: 4 * panels } })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.origin, Origin::Atomic)
    }

    /// Quadrature node count for density measures.
    pub fn node_count(&self) -> Option<usize> {
        match self.origin {
            Origin::Atomic => None,
            Origin::Density { nodes, .. } => Some(nodes),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self.origin {
            Origin::Atomic => self.atoms.iter().map(|a| a.weight).sum(),
            Origin::Density { mass, .. } => mass,
        }
    }

    pub fn has_atom_at(&self, y: f64) -> bool {
        self.is_atomic() && self.atoms.iter().any(|a| a.location == y)
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        (self.total_mass() - 1.0).abs() <= tol
    }

    /// Whether `int y^(-p) d(self)` is finite, decided analytically for
    /// densities rather than from the nodes.
    pub fn negative_moment_is_finite(&self, p: f64) -> bool {
        match self.origin {
            Origin::Atomic => p <= 0.0 || self.atoms.iter().all(|a| a.location > 0.0),
            Origin::Density { law, mass, .. } => mass == 0.0 || law.lower_exponent() > p,
        }
    }

    /// `sum_i w_i f(y_i)` over atoms or quadrature nodes.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let v = f(a.location);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { location: a.location });
            }
            terms.push(a.weight * v);
        }
        Ok(crate::stats::pairwise_sum(&terms))
    }

    /// The measure `g(y) self(dy)`; atoms where `g` vanishes are dropped.
    /// `g` must be finite and nonnegative on the support.
    pub fn reweighted<F: Fn(f64) -> f64>(&self, g: F) -> Result<Self> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let v = g(a.location);
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::NonFiniteIntegrand { location: a.location });
            }
            if v > 0.0 {
                atoms.push(Atom { location: a.location, weight: a.weight * v });
            }
        }
        Ok(FiniteMeasure { atoms, origin: Origin::Atomic })
    }

    /// Multiplies all weights by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let atoms = self.atoms.iter().map(|a| Atom { location: a.location, weight: a.weight * factor }).collect();
        let origin = match self.origin {
            Origin::Atomic => Origin::Atomic,
            Origin::Density { law, mass, nodes } => Origin::Density { law, mass: mass * factor, nodes },
        };
        FiniteMeasure { atoms, origin }
    }

    pub fn sampler(&self) -> Option<AtomSampler> {
        AtomSampler::new(self.atoms.iter().map(|a| (a.location, a.weight)))
    }
}

/// Categorical sampler over weighted locations.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSampler {
    locations: Vec<f64>,
    cumulative: Vec<f64>,
}

impl AtomSampler {
    /// `None` when there is no positive weight.
    pub fn new(pairs: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        let mut locations = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (y, w) in pairs {
            if w > 0.0 {
                acc += w;
                locations.push(y);
                cumulative.push(acc);
            }
        }
        (acc > 0.0).then_some(AtomSampler { locations, cumulative })
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.locations.len() == 1 {
            return 0;
        }
        let u = rng.random::<f64>() * self.total();
        self.cumulative.partition_point(|&c| c <= u).min(self.locations.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.locations[self.sample_index(rng)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn integrate_atomic() {
        let m = FiniteMeasure::atomic([(0.5, 2.0)]).unwrap();
        assert_eq!(m.integrate(|y| y).unwrap(), 1.0);
        let m = FiniteMeasure::atomic([(0.2, 1.0), (0.8, 1.0)]).unwrap();
        assert_eq!(m.integrate(|_| 1.0).unwrap(), 2.0);
    }

    #[test]
    fn integrate_density_against_analytic() {
        let u = FiniteMeasure::density(DensityLaw::Uniform, 1.0, 64).unwrap();
        assert_abs_diff_eq!(u.integrate(|y| y * y).unwrap(), 1.0 / 3.0, epsilon = 1e-14);
        assert_eq!(u.node_count(), Some(64));
        let b = FiniteMeasure::density(DensityLaw::Beta { a: 2.0, b: 3.0 }, 2.0, 64).unwrap();
        // Mean of Beta(2,3) is 2/5.
        assert_abs_diff_eq!(b.integrate(|y| y).unwrap(), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(b.total_mass(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn integrate_rejects_non_finite() {
        let m = FiniteMeasure::atomic([(0.0, 1.0)]).unwrap();
        assert_eq!(m.integrate(|y| 1.0 / y), Err(Error::NonFiniteIntegrand { location: 0.0 }));
    }

    #[test]
    fn construction_checks() {
        assert!(FiniteMeasure::atomic([(1.5, 1.0)]).is_err());
        assert!(FiniteMeasure::atomic([(0.5, 0.0)]).is_err());
        assert!(FiniteMeasure::atomic([(0.5, -1.0)]).is_err());
        let m = FiniteMeasure::atomic([(0.5, 1.0), (0.5, 2.0)]).unwrap();
        assert_eq!(m.atoms().len(), 1);
        assert_eq!(m.total_mass(), 3.0);
    }

    #[test]
    fn negative_moments() {
        let beta = FiniteMeasure::density(DensityLaw::Beta { a: 2.5, b: 1.0 }, 1.0, 16).unwrap();
        assert!(beta.negative_moment_is_finite(2.0));
        assert!(!FiniteMeasure::density(DensityLaw::Uniform, 1.0, 16).unwrap().negative_moment_is_finite(2.0));
        assert!(!FiniteMeasure::atomic([(0.0, 1.0)]).unwrap().negative_moment_is_finite(2.0));
        assert!(FiniteMeasure::atomic([(0.1, 1.0)]).unwrap().negative_moment_is_finite(2.0));
    }

    #[test]
    fn json_round_trip() {
        let m: FiniteMeasure = serde_json::from_str(r#"{"atoms":[[0.5,0.25],[0.1,1]]}"#).unwrap();
        assert_eq!(m.total_mass(), 1.25);
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"atoms":[[0.5,0.25],[0.1,1.0]]}"#);
        let d: FiniteMeasure = serde_json::from_str(r#"{"density":"beta(2,3)","mass":1,"nodes":32}"#).unwrap();
        assert_eq!(d.node_count(), Some(32));
        assert_eq!(serde_json::to_string(&d).unwrap(), r#"{"density":"beta(2,3)","mass":1.0,"nodes":32}"#);
        assert!(serde_json::from_str::<FiniteMeasure>(r#"{"atoms":[[0.5,-1]]}"#).is_err());
        assert!(serde_json::from_str::<FiniteMeasure>(r#"{"density":"gamma(1)","mass":1,"nodes":8}"#).is_err());
    }

    #[test]
    fn sampler_frequencies() {
        use rand::SeedableRng;
        let s = AtomSampler::new([(0.1, 1.0), (0.5, 3.0)]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = 100_000;
        let hits = (0..m).filter(|_| s.sample(&mut rng) == 0.5).count();
        let p = hits as f64 / m as f64;
        assert!((p - 0.75).abs() < 5.0 * (0.75f64 * 0.25 / m as f64).sqrt());
    }
}
