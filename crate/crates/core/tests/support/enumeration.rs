//! Exact one-generation transition laws of the `N = 2` model with a
//! geometric kernel, in rational arithmetic, derived by hand from the
//! offspring-picks-parents construction.

#![allow(dead_code)]

use num_rational::Ratio;

pub type Q = Ratio<i128>;

pub fn q(n: i128, d: i128) -> Q {
    Ratio::new(n, d)
}

pub fn to_f64(r: Q) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Generating function of the geometric parent count with parameter `y`.
pub fn g(y: Q, s: Q) -> Q {
    let one = Q::from_integer(1);
    s * (one - y) / (one - s * y)
}

pub fn pow(b: Q, e: u32) -> Q {
    (0..e).fold(Q::from_integer(1), |acc, _| acc * b)
}

/// Parameters of one generation: environment `y`, merger probability `c`
/// and fixed merger strength `v`.
#[derive(Clone, Copy, Debug)]
pub struct Gen {
    pub y: Q,
    pub c: Q,
    pub v: Q,
}

fn binomial2(p: Q) -> [Q; 3] {
    let one = Q::from_integer(1);
    [(one - p) * (one - p), Q::from_integer(2) * p * (one - p), p * p]
}

/// Law of the number of type-0 individuals after one generation from `j`.
pub fn forward(gen: Gen, j: u32) -> [Q; 3] {
    let one = Q::from_integer(1);
    let x = q(j as i128, 2);
    let plain = binomial2(g(gen.y, x));
    let central_zero = binomial2(g(gen.y, (one - gen.v) * x + gen.v));
    let central_one = binomial2(g(gen.y, (one - gen.v) * x));
    let mut out = [Q::from_integer(0); 3];
    for k in 0..3 {
        let merged = x * central_zero[k] + (one - x) * central_one[k];
        out[k] = (one - gen.c) * plain[k] + gen.c * merged;
    }
    out
}

/// Law of the number of distinct parents of `n` blocks, as `[P(1), P(2)]`.
pub fn backward(gen: Gen, n: u32) -> [Q; 2] {
    let one = Q::from_integer(1);
    let two = Q::from_integer(2);
    // All picks on one label: without a merger each pick is uniform; with one,
    // a pick hits the central label with probability (1+v)/2 in total.
    let plain = two * pow(g(gen.y, q(1, 2)), n);
    let merged = pow(g(gen.y, (one + gen.v) / two), n) + pow(g(gen.y, (one - gen.v) / two), n);
    let p1 = (one - gen.c) * plain + gen.c * merged;
    [p1, one - p1]
}

/// `E_x[phi_{y1}(X_1)^n]` with the first generation in environment `y0`.
pub fn lhs(first: Gen, y1: Q, j: u32, n: u32) -> Q {
    forward(first, j).iter().enumerate().map(|(k, p)| *p * pow(g(y1, q(k as i128, 2)), n)).sum()
}

/// `E_n[phi_{y0}(x)^{Z_1}]` with the backward generation in environment `y1`.
pub fn rhs(y0: Q, last: Gen, j: u32, n: u32) -> Q {
    let h = g(y0, q(j as i128, 2));
    let b = backward(last, n);
    b[0] * h + b[1] * h * h
}
