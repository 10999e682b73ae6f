//! Selection kernels: the law `Q(y)` of the number of potential parents an
//! individual draws in environment `y`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel for `K = infinity`.
pub const INFINITE_PARENTS: u64 = u64::MAX;

/// Largest finite value returned by [`SelectionKernel::sample`]; larger
/// geometric draws are reported as infinite.
const FINITE_SAMPLE_CAP: f64 = 9.0e18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SelectionKernel {
    /// `Q(y) = Geo(1-y)` on `{1,2,...}`, `Q(1)` the point mass at infinity.
    Geometric,
    /// `Q(y) = (1-y) delta_1 + y delta_2`.
    Binary,
    /// Tabulated pmfs at fixed `y` values, linearly interpolated in `y`.
    Table(TablePmf),
}

/// One tabulated law: `pmf[k-1] = P(K = k)` and `infinite = P(K = inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub y: f64,
    pub pmf: Vec<f64>,
    #[serde(default)]
    pub infinite: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableSpec", into = "TableSpec")]
pub struct TablePmf {
    rows: Vec<TableRow>,
}

#[derive(Serialize, Deserialize)]
struct TableSpec {
    rows: Vec<TableRow>,
}

impl TryFrom<TableSpec> for TablePmf {
    type Error = Error;
    fn try_from(spec: TableSpec) -> Result<Self> {
        TablePmf::new(spec.rows)
    }
}

impl From<TablePmf> for TableSpec {
    fn from(t: TablePmf) -> Self {
        TableSpec { rows: t.rows }
    }
}

impl TablePmf {
    /// Rows must have distinct `y` in `[0,1]` and each must be a probability
    /// law on `{1,...,K_max} + {inf}`. A row at `y = 0` must be `delta_1`; one
    /// is added if missing.
    pub fn new(mut rows: Vec<TableRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidKernel("table has no rows".into()));
        }
        for r in &rows {
            if !(0.0..=1.0).contains(&r.y) {
                return Err(Error::InvalidKernel(format!("row location {} outside [0,1]", r.y)));
            }
            if r.pmf.iter().chain(std::iter::once(&r.infinite)).any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidKernel(format!("row at y = {} has a negative or non-finite entry", r.y)));
            }
            let total: f64 = r.pmf.iter().sum::<f64>() + r.infinite;
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidKernel(format!("row at y = {} sums to {total}", r.y)));
            }
        }
        rows.sort_by(|a, b| a.y.total_cmp(&b.y));
        if rows.windows(2).any(|w| w[0].y == w[1].y) {
            return Err(Error::InvalidKernel("duplicate row locations".into()));
        }
        if rows[0].y == 0.0 {
            let r = &rows[0];
            let is_delta_one = r.infinite == 0.0 && r.pmf.first() == Some(&1.0) && r.pmf[1..].iter().all(|p| *p == 0.0);
            if !is_delta_one {
                return Err(Error::InvalidKernel("Q(0) must be the point mass at 1".into()));
            }
        } else {
            rows.insert(0, TableRow { y: 0.0, pmf: vec![1.0], infinite: 0.0 });
        }
        for r in &mut rows {
            while r.pmf.len() > 1 && r.pmf.last() == Some(&0.0) {
                r.pmf.pop();
            }
        }
        Ok(TablePmf { rows })
    }

    pub fn rows(&self) -> &[TableRow] {
        &self.rows
    }

    /// Largest finite support point over all rows.
    pub fn max_parents(&self) -> usize {
        self.rows.iter().map(|r| r.pmf.len()).max().unwrap_or(1)
    }

    /// `Q(y) = (1-lambda) rows[lo] + lambda rows[hi]`.
    fn bracket(&self, y: f64) -> (usize, usize, f64) {
        let i = self.rows.partition_point(|r| r.y <= y);
        if i == 0 {
            return (0, 0, 0.0);
        }
        if i == self.rows.len() {
            return (i - 1, i - 1, 0.0);
        }
        let (lo, hi) = (&self.rows[i - 1], &self.rows[i]);
        (i - 1, i, (y - lo.y) / (hi.y - lo.y))
    }

    fn mix<F: Fn(&TableRow) -> f64>(&self, y: f64, f: F) -> f64 {
        let (lo, hi, lambda) = self.bracket(y);
        if lambda == 0.0 {
            f(&self.rows[lo])
        } else {
            (1.0 - lambda) * f(&self.rows[lo]) + lambda * f(&self.rows[hi])
        }
    }

    /// Interpolated law as `(pmf, infinite)`.
    pub fn law(&self, y: f64) -> (Vec<f64>, f64) {
        let (lo, hi, lambda) = self.bracket(y);
        let (a, b) = (&self.rows[lo], &self.rows[hi]);
        let len = a.pmf.len().max(b.pmf.len());
        let pmf = (0..len)
            .map(|k| (1.0 - lambda) * a.pmf.get(k).copied().unwrap_or(0.0) + lambda * b.pmf.get(k).copied().unwrap_or(0.0))
            .collect();
        (pmf, (1.0 - lambda) * a.infinite + lambda * b.infinite)
    }

    fn sample_row<R: Rng + ?Sized>(row: &TableRow, skip_one: bool, rng: &mut R) -> u64 {
        let start = usize::from(skip_one).min(row.pmf.len());
        let total: f64 = row.pmf[start..].iter().sum::<f64>() + row.infinite;
        let mut u = rng.random::<f64>() * total;
        for (k, p) in row.pmf.iter().enumerate().skip(start) {
            if u < *p {
                return k as u64 + 1;
            }
            u -= p;
        }
        if row.infinite > 0.0 {
            INFINITE_PARENTS
        } else {
            row.pmf.iter().rposition(|p| *p > 0.0).map_or(1, |k| k as u64 + 1)
        }
    }

    fn sample<R: Rng + ?Sized>(&self, y: f64, skip_one: bool, rng: &mut R) -> u64 {
        let (lo, hi, lambda) = self.bracket(y);
        let (a, b) = (&self.rows[lo], &self.rows[hi]);
        let row = if lambda == 0.0 {
            a
        } else {
            // Mixture weights, conditioned on K >= 2 when `skip_one`.
            let (wa, wb) = if skip_one {
                let pa = 1.0 - a.pmf.first().copied().unwrap_or(0.0);
                let pb = 1.0 - b.pmf.first().copied().unwrap_or(0.0);
                ((1.0 - lambda) * pa, lambda * pb)
            } else {
                (1.0 - lambda, lambda)
            };
            if rng.random::<f64>() * (wa + wb) < wa {
                a
            } else {
                b
            }
        };
        Self::sample_row(row, skip_one, rng)
    }
}

fn row_pgf(row: &TableRow, x: f64) -> f64 {
    let poly = row.pmf.iter().rev().fold(0.0, |acc, p| acc * x + p) * x;
    if x == 1.0 {
        poly + row.infinite
    } else {
        poly
    }
}

fn row_mean_excess(row: &TableRow) -> f64 {
    if row.infinite > 0.0 {
        return f64::INFINITY;
    }
    row.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

/// Truncated law of `K_{y,1} + ... + K_{y,n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumDistribution {
    pub n: u64,
    /// `pmf[k] = P(sum = n + k)` for `k = 0..=k_max`.
    pub pmf: Vec<f64>,
    /// `P(sum > n + k_max)`, including any mass at infinity.
    pub tail: f64,
}

impl SumDistribution {
    pub fn k_max(&self) -> usize {
        self.pmf.len() - 1
    }
}

impl SelectionKernel {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionKernel::Geometric => "geometric",
            SelectionKernel::Binary => "binary",
            SelectionKernel::Table(_) => "table",
        }
    }

    /// `phi_y(x) = E[x^{K_y}]`, with `x^inf = 1{x = 1}`.
    pub fn pgf(&self, y: f64, x: f64) -> f64 {
        match self {
            SelectionKernel::Geometric => {
                if x >= 1.0 {
                    1.0
                } else if y >= 1.0 {
                    0.0
                } else {
                    x * (1.0 - y) / (1.0 - x * y)
                }
            }
            SelectionKernel::Binary => x * ((1.0 - y) + y * x),
            SelectionKernel::Table(t) => t.mix(y, |r| row_pgf(r, x)),
        }
    }

    /// `m(y) = E[K_y] - 1`, infinite when `K_y` can be infinite.
    pub fn mean_excess(&self, y: f64) -> f64 {
        match self {
            SelectionKernel::Geometric => {
                if y >= 1.0 {
                    f64::INFINITY
                } else {
                    y / (1.0 - y)
                }
            }
            SelectionKernel::Binary => y,
            SelectionKernel::Table(t) => t.mix(y, row_mean_excess),
        }
    }

    /// `P(K_y = 1)`.
    pub fn prob_single(&self, y: f64) -> f64 {
        match self {
            SelectionKernel::Geometric => 1.0 - y,
            SelectionKernel::Binary => 1.0 - y,
            SelectionKernel::Table(t) => t.mix(y, |r| r.pmf.first().copied().unwrap_or(0.0)),
        }
    }

    /// `P(K_y = inf)`.
    pub fn infinite_mass(&self, y: f64) -> f64 {
        match self {
            SelectionKernel::Geometric => {
                if y >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SelectionKernel::Binary => 0.0,
            SelectionKernel::Table(t) => t.mix(y, |r| r.infinite),
        }
    }

    /// `P(K_y - 1 = j)` for `j < len`.
    pub fn excess_pmf(&self, y: f64, len: usize) -> Vec<f64> {
        match self {
            SelectionKernel::Geometric => {
                let mut out = Vec::with_capacity(len);
                let mut p = 1.0 - y;
                for _ in 0..len {
                    out.push(p);
                    p *= y;
                }
                out
            }
            SelectionKernel::Binary => (0..len).map(|j| match j {
                0 => 1.0 - y,
                1 => y,
                _ => 0.0,
            }).collect(),
            SelectionKernel::Table(t) => {
                let (pmf, _) = t.law(y);
                (0..len).map(|j| pmf.get(j).copied().unwrap_or(0.0)).collect()
            }
        }
    }

    /// Draws `K_y`; [`INFINITE_PARENTS`] stands for infinity.
    pub fn sample<R: Rng + ?Sized>(&self, y: f64, rng: &mut R) -> u64 {
        match self {
            SelectionKernel::Geometric => 1 + geometric_excess(y, rng),
            SelectionKernel::Binary => 1 + u64::from(rng.random::<f64>() < y),
            SelectionKernel::Table(t) => t.sample(y, false, rng),
        }
    }

    /// Draws `K_y` conditioned on `K_y >= 2`. Requires `P(K_y >= 2) > 0`.
    pub fn sample_at_least_two<R: Rng + ?Sized>(&self, y: f64, rng: &mut R) -> u64 {
        match self {
            // Memorylessness: K | K >= 2 has the law of 1 + K.
            SelectionKernel::Geometric => 2 + geometric_excess(y, rng),
            SelectionKernel::Binary => 2,
            SelectionKernel::Table(t) => t.sample(y, true, rng),
        }
    }

    /// Law of the sum of `n` iid copies of `K_y`, truncated after `n + k_max`.
    pub fn sum_distribution(&self, y: f64, n: u64, k_max: usize) -> SumDistribution {
        assert!(n >= 1, "sum_distribution needs n >= 1");
        let pmf = match self {
            SelectionKernel::Geometric => negative_binomial_pmf(n, y, k_max),
            SelectionKernel::Binary => binomial_pmf(n, y, k_max),
            SelectionKernel::Table(_) => {
                let single = self.excess_pmf(y, k_max + 1);
                convolution_power(&single, n, k_max)
            }
        };
        let total: f64 = pmf.iter().sum();
        SumDistribution { n, pmf, tail: (1.0 - total).max(0.0) }
    }
}

/// `floor(log U / log y)` with `U` uniform on `(0,1]`: the number of failures
/// of a geometric law with success probability `1 - y`.
pub(crate) fn geometric_excess<R: Rng + ?Sized>(y: f64, rng: &mut R) -> u64 {
    if y <= 0.0 {
        return 0;
    }
    if y >= 1.0 {
        return INFINITE_PARENTS - 1;
    }
    let u = 1.0 - rng.random::<f64>();
    let g = (u.ln() / y.ln()).floor();
    if g >= FINITE_SAMPLE_CAP {
        INFINITE_PARENTS - 1
    } else {
        g as u64
    }
}

/// `P(NegBin(n, y) = k)` for `k = 0..=k_max`: failures before the `n`-th
/// success with success probability `1 - y`.
pub fn negative_binomial_pmf(n: u64, y: f64, k_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; k_max + 1];
    if y <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if y >= 1.0 {
        return out;
    }
    let n = n as f64;
    let ly = y.ln();
    let mut lp = n * (-y).ln_1p();
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            let kf = k as f64;
            lp += ((n + kf - 1.0) / kf).ln() + ly;
        }
        *slot = lp.exp();
    }
    out
}

/// `P(Bin(n, p) = k)` for `k = 0..=k_max` (zero beyond `n`).
pub fn binomial_pmf(n: u64, p: f64, k_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; k_max + 1];
    let top = (n as usize).min(k_max);
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        if (n as usize) <= k_max {
            out[n as usize] = 1.0;
        }
        return out;
    }
    let nf = n as f64;
    let lodds = p.ln() - (-p).ln_1p();
    let mut lp = nf * (-p).ln_1p();
    for (k, slot) in out.iter_mut().enumerate().take(top + 1) {
        if k > 0 {
            let kf = k as f64;
            lp += ((nf - kf + 1.0) / kf).ln() + lodds;
        }
        *slot = lp.exp();
    }
    out
}

/// Truncated `n`-fold convolution power of a pmf on `{0,1,...}`.
pub fn convolution_power(single: &[f64], n: u64, k_max: usize) -> Vec<f64> {
    let conv = |a: &[f64], b: &[f64]| {
        let mut out = vec![0.0; k_max + 1];
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (j, &bj) in b.iter().enumerate().take(k_max + 1 - i) {
                out[i + j] += ai * bj;
            }
        }
        out
    };
    let mut base: Vec<f64> = (0..=k_max).map(|k| single.get(k).copied().unwrap_or(0.0)).collect();
    let mut acc = vec![0.0; k_max + 1];
    acc[0] = 1.0;
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            acc = conv(&acc, &base);
        }
        e >>= 1;
        if e > 0 {
            base = conv(&base, &base);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn geometric_series_pgf(y: f64, x: f64) -> f64 {
        // Partial sums of sum_k x^k (1-y) y^{k-1}.
        let mut s = 0.0;
        let mut term = x * (1.0 - y);
        for _ in 0..100_000 {
            s += term;
            term *= x * y;
            if term < 1e-18 {
                break;
            }
        }
        s
    }

    #[test]
    fn pgf_examples() {
        let g = SelectionKernel::Geometric;
        assert_abs_diff_eq!(g.pgf(0.5, 0.5), geometric_series_pgf(0.5, 0.5), epsilon = 1e-12);
        assert_abs_diff_eq!(g.pgf(0.5, 0.5), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(g.pgf(1.0, 0.5), 0.0);
        assert_abs_diff_eq!(SelectionKernel::Binary.pgf(0.5, 0.5), 0.375, epsilon = 1e-15);
        for y in [0.0, 0.3, 1.0] {
            assert_eq!(g.pgf(y, 1.0), 1.0);
            assert_eq!(SelectionKernel::Binary.pgf(y, 1.0), 1.0);
            assert_eq!(g.pgf(y, 0.0), 0.0);
        }
    }

    #[test]
    fn geometric_closed_form_matches_series_on_grid() {
        let g = SelectionKernel::Geometric;
        for i in 0..50 {
            for j in 0..50 {
                let y = i as f64 / 50.0;
                let x = j as f64 / 50.0;
                assert_abs_diff_eq!(g.pgf(y, x), geometric_series_pgf(y, x), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn mean_excess_examples() {
        let g = SelectionKernel::Geometric;
        let truncated: f64 = (1..2000).map(|k| (k as f64 - 1.0) * 0.5f64.powi(k)).sum();
        assert_abs_diff_eq!(g.mean_excess(0.5), truncated, epsilon = 1e-12);
        assert_eq!(g.mean_excess(0.0), 0.0);
        assert_eq!(g.mean_excess(1.0), f64::INFINITY);
        assert_eq!(SelectionKernel::Binary.mean_excess(0.3), 0.3);
        assert_eq!(SelectionKernel::Binary.mean_excess(0.0), 0.0);
    }

    #[test]
    fn sum_distribution_examples() {
        let d = SelectionKernel::Geometric.sum_distribution(0.5, 2, 2);
        // Brute-force double convolution of Geo(1/2) pmfs.
        let geo = |k: u32| 0.5f64.powi(k as i32);
        let mut brute = [0.0; 3];
        for a in 1..=4u32 {
            for b in 1..=4u32 {
                if a + b <= 4 {
                    brute[(a + b - 2) as usize] += geo(a) * geo(b);
                }
            }
        }
        for (p, q) in d.pmf.iter().zip(&brute).take(3) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(d.pmf[2], 0.1875, epsilon = 1e-15);
        assert_abs_diff_eq!(d.tail, 0.3125, epsilon = 1e-15);

        let b = SelectionKernel::Binary.sum_distribution(1.0, 3, 5);
        assert_eq!(b.pmf[3], 1.0);
        assert_eq!(b.tail, 0.0);
        for kernel in [SelectionKernel::Geometric, SelectionKernel::Binary] {
            let s = kernel.sum_distribution(0.0, 5, 3);
            assert_eq!(s.pmf, vec![1.0, 0.0, 0.0, 0.0]);
        }
        let inf = SelectionKernel::Geometric.sum_distribution(1.0, 2, 3);
        assert_eq!(inf.tail, 1.0);
    }

    #[test]
    fn negative_binomial_matches_generic_convolution() {
        for n in 1..=10u64 {
            for i in 1..=9 {
                let y = i as f64 / 10.0;
                let k_max = 60;
                let closed = negative_binomial_pmf(n, y, k_max);
                let single = SelectionKernel::Geometric.excess_pmf(y, k_max + 1);
                let generic = convolution_power(&single, n, k_max);
                for k in 0..=k_max {
                    assert_abs_diff_eq!(closed[k], generic[k], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn binomial_matches_convolution() {
        for n in 1..=12u64 {
            let single = SelectionKernel::Binary.excess_pmf(0.37, 2);
            let generic = convolution_power(&single, n, 15);
            let closed = binomial_pmf(n, 0.37, 15);
            for k in 0..=15 {
                assert_abs_diff_eq!(closed[k], generic[k], epsilon = 1e-13);
            }
        }
    }

    fn table() -> SelectionKernel {
        SelectionKernel::Table(
            TablePmf::new(vec![
                TableRow { y: 0.5, pmf: vec![0.5, 0.3, 0.2], infinite: 0.0 },
                TableRow { y: 1.0, pmf: vec![0.0, 0.5], infinite: 0.5 },
            ])
            .unwrap(),
        )
    }

    #[test]
    fn table_interpolates_and_handles_infinity() {
        let t = table();
        assert_eq!(t.pgf(0.0, 0.4), 0.4);
        assert_abs_diff_eq!(t.pgf(0.5, 0.5), 0.5 * 0.5 + 0.3 * 0.25 + 0.2 * 0.125, epsilon = 1e-15);
        // Halfway between delta_1 and the y = 0.5 row.
        assert_abs_diff_eq!(t.mean_excess(0.25), 0.5 * 0.7, epsilon = 1e-15);
        assert_eq!(t.mean_excess(1.0), f64::INFINITY);
        assert_abs_diff_eq!(t.pgf(1.0, 0.5), 0.125, epsilon = 1e-15);
        assert_eq!(t.pgf(1.0, 1.0), 1.0);
        assert_abs_diff_eq!(t.infinite_mass(0.75), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn table_rejects_bad_rows() {
        assert!(TablePmf::new(vec![TableRow { y: 0.5, pmf: vec![0.5], infinite: 0.0 }]).is_err());
        assert!(TablePmf::new(vec![TableRow { y: 0.0, pmf: vec![0.5, 0.5], infinite: 0.0 }]).is_err());
        assert!(TablePmf::new(vec![TableRow { y: 1.5, pmf: vec![1.0], infinite: 0.0 }]).is_err());
    }

    #[test]
    fn samplers_match_pmfs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = 200_000;
        for kernel in [SelectionKernel::Geometric, SelectionKernel::Binary, table()] {
            let y = 0.4;
            let pmf = kernel.excess_pmf(y, 4);
            let mut counts = [0usize; 4];
            let mut counts2 = [0usize; 4];
            for _ in 0..m {
                let k = kernel.sample(y, &mut rng) as usize;
                if k <= 4 {
                    counts[k - 1] += 1;
                }
                let k2 = kernel.sample_at_least_two(y, &mut rng) as usize;
                if k2 <= 4 {
                    counts2[k2 - 1] += 1;
                }
            }
            let p_ge2 = 1.0 - pmf[0];
            for j in 0..4 {
                let p = pmf[j];
                let se = (p * (1.0 - p) / m as f64).sqrt().max(1e-4);
                assert!((counts[j] as f64 / m as f64 - p).abs() < 5.0 * se, "{} k={}", kernel.name(), j + 1);
                let q = if j == 0 { 0.0 } else { p / p_ge2 };
                let se2 = (q * (1.0 - q) / m as f64).sqrt().max(1e-4);
                assert!((counts2[j] as f64 / m as f64 - q).abs() < 5.0 * se2, "{} conditional k={}", kernel.name(), j + 1);
            }
        }
    }

    #[test]
    fn kernel_json_shape() {
        let k: SelectionKernel = serde_json::from_str(r#"{"type":"geometric"}"#).unwrap();
        assert_eq!(k, SelectionKernel::Geometric);
        let t: SelectionKernel =
            serde_json::from_str(r#"{"type":"table","rows":[{"y":0.5,"pmf":[0.5,0.5]}]}"#).unwrap();
        assert_eq!(t.mean_excess(0.5), 0.5);
        let bad = serde_json::from_str::<SelectionKernel>(r#"{"type":"table","rows":[{"y":0.5,"pmf":[0.5]}]}"#);
        assert!(bad.is_err());
    }
}
