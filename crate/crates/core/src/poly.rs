//! Multivariate polynomials with exact rational coefficients.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Coeff = Rational64;

/// Polynomial in `dim` real variables, stored as a sorted list of monomials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<(Coeff, Vec<u32>)>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: impl IntoIterator<Item = (Coeff, Vec<u32>)>) -> Result<Self> {
        let mut acc: BTreeMap<Vec<u32>, Coeff> = BTreeMap::new();
        for (c, e) in terms {
            if e.len() != dim {
                return Err(Error::Parse(format!(
                    "exponent vector of length {} in a polynomial of dimension {dim}",
                    e.len()
                )));
            }
            *acc.entry(e).or_insert_with(|| Coeff::from_integer(0)) += c;
        }
        Ok(Self::from_map(dim, acc))
    }

    fn from_map(dim: usize, acc: BTreeMap<Vec<u32>, Coeff>) -> Self {
        let terms = acc
            .into_iter()
            .filter(|(_, c)| *c != Coeff::from_integer(0))
            .map(|(e, c)| (c, e))
            .collect();
        Self { dim, terms }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn constant(dim: usize, c: Coeff) -> Self {
        Self::new(dim, [(c, vec![0; dim])]).expect("well-formed constant")
    }

    /// The coordinate function `x_j`.
    pub fn variable(dim: usize, j: usize) -> Self {
        assert!(j < dim, "variable index {j} out of range for dimension {dim}");
        let mut e = vec![0; dim];
        e[j] = 1;
        Self { dim, terms: vec![(Coeff::from_integer(1), e)] }
    }

    /// `c * x^e`.
    pub fn monomial(c: Coeff, exponents: Vec<u32>) -> Self {
        let dim = exponents.len();
        Self::new(dim, [(c, exponents)]).expect("well-formed monomial")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Coeff, Vec<u32>)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(_, e)| e.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "polynomial evaluated at a point of the wrong dimension");
        let mut s = 0.0;
        for (c, e) in &self.terms {
            let mut m = to_f64(c);
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    m *= xi.powi(k as i32);
                }
            }
            s += m;
        }
        s
    }

    /// Exact partial derivative with respect to `x_j`.
    pub fn derivative(&self, j: usize) -> Self {
        assert!(j < self.dim);
        let mut acc = BTreeMap::new();
        for (c, e) in &self.terms {
            if e[j] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[j] -= 1;
            *acc.entry(e2).or_insert_with(|| Coeff::from_integer(0)) +=
                *c * Coeff::from_integer(e[j] as i64);
        }
        Self::from_map(self.dim, acc)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut acc: BTreeMap<Vec<u32>, Coeff> = BTreeMap::new();
        for (c, e) in self.terms.iter().chain(&other.terms) {
            *acc.entry(e.clone()).or_insert_with(|| Coeff::from_integer(0)) += *c;
        }
        Self::from_map(self.dim, acc)
    }

    pub fn scale(&self, k: Coeff) -> Self {
        Self::from_map(self.dim, self.terms.iter().map(|(c, e)| (e.clone(), *c * k)).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut acc: BTreeMap<Vec<u32>, Coeff> = BTreeMap::new();
        for (c1, e1) in &self.terms {
            for (c2, e2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                *acc.entry(e).or_insert_with(|| Coeff::from_integer(0)) += *c1 * *c2;
            }
        }
        Self::from_map(self.dim, acc)
    }

    /// Re-embed into a larger variable set: variable `j` becomes variable `map[j]`.
    pub fn embed(&self, new_dim: usize, map: &[usize]) -> Self {
        assert_eq!(map.len(), self.dim);
        let terms = self.terms.iter().map(|(c, e)| {
            let mut e2 = vec![0; new_dim];
            for (j, &k) in e.iter().enumerate() {
                e2[map[j]] += k;
            }
            (*c, e2)
        });
        Self::new(new_dim, terms).expect("embedding preserves dimension")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (c, e)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c})")?;
            for (j, &p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*x{j}")?,
                    _ => write!(f, "*x{j}^{p}")?,
                }
            }
        }
        Ok(())
    }
}

pub fn to_f64(c: &Coeff) -> f64 {
    *c.numer() as f64 / *c.denom() as f64
}

/// Parse `"3"`, `"-1/2"` or a finite decimal such as `"0.125"` exactly.
pub fn parse_coeff(s: &str) -> Result<Coeff> {
    let s = s.trim();
    let bad = || Error::Parse(format!("invalid coefficient `{s}`"));
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Coeff::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
        if frac.len() > 15 || digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let n: i64 = digits.parse().map_err(|_| bad())?;
        let d = 10_i64.pow(frac.len() as u32);
        return Ok(Coeff::new(if neg { -n } else { n }, d));
    }
    s.parse::<i64>().map(Coeff::from_integer).map_err(|_| bad())
}

pub fn format_coeff(c: &Coeff) -> String {
    if *c.denom() == 1 {
        format!("{}", c.numer())
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

/// Polynomial vector field `Σ_j Y^j(x) ∂/∂x_j` on ℝ^d.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyVectorField {
    components: Vec<Polynomial>,
}

impl PolyVectorField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let d = components.len();
        if d == 0 {
            return Err(Error::Parse("vector field with no components".into()));
        }
        if let Some(p) = components.iter().find(|p| p.dim() != d) {
            return Err(Error::Parse(format!(
                "component of dimension {} in a vector field on R^{d}",
                p.dim()
            )));
        }
        Ok(Self { components })
    }

    /// The constant coordinate field ∂/∂x_j.
    pub fn coordinate(dim: usize, j: usize) -> Self {
        let components = (0..dim)
            .map(|k| {
                if k == j {
                    Polynomial::constant(dim, Coeff::from_integer(1))
                } else {
                    Polynomial::zero(dim)
                }
            })
            .collect();
        Self { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|p| p.eval(x)).collect()
    }

    /// Symbolic divergence Σ_j ∂_j Y^j.
    pub fn divergence(&self) -> Polynomial {
        self.components
            .iter()
            .enumerate()
            .fold(Polynomial::zero(self.dim()), |acc, (j, p)| acc.add(&p.derivative(j)))
    }
}

/// Serialized monomial of a vector field component.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TermRecord {
    pub component: usize,
    pub coefficient: CoeffRecord,
    pub exponents: Vec<u32>,
}

/// Coefficients may be written as TOML numbers or as exact strings (`"-1/2"`).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CoeffRecord {
    Text(String),
    Integer(i64),
    Float(f64),
}

impl CoeffRecord {
    pub fn to_coeff(&self) -> Result<Coeff> {
        match self {
            CoeffRecord::Text(s) => parse_coeff(s),
            CoeffRecord::Integer(n) => Ok(Coeff::from_integer(*n)),
            CoeffRecord::Float(f) => {
                if !f.is_finite() {
                    return Err(Error::Parse(format!("non-finite coefficient {f}")));
                }
                // round-trips through the shortest decimal representation
                parse_coeff(&format!("{f:?}"))
                    .or_else(|_| Coeff::approximate_float(*f).ok_or_else(|| {
                        Error::Parse(format!("coefficient {f} not representable"))
                    }))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Coeff {
        Coeff::new(n, d)
    }

    #[test]
    fn normalization_merges_and_drops_zeros() {
        let p = Polynomial::new(
            2,
            [(q(1, 2), vec![1, 0]), (q(-1, 2), vec![1, 0]), (q(3, 1), vec![0, 2]), (q(1, 1), vec![0, 2])],
        )
        .unwrap();
        assert_eq!(p.terms(), &[(q(4, 1), vec![0, 2])]);
    }

    #[test]
    fn derivative_is_exact() {
        // p = x^3 y / 3
        let p = Polynomial::monomial(q(1, 3), vec![3, 1]);
        let dx = p.derivative(0);
        assert_eq!(dx.terms(), &[(q(1, 1), vec![2, 1])]);
        assert!(p.derivative(0).derivative(0).derivative(0).derivative(0).is_zero());
    }

    #[test]
    fn eval_matches_hand_value() {
        let p = Polynomial::variable(3, 1).scale(q(-1, 2)).add(&Polynomial::constant(3, q(1, 1)));
        assert_eq!(p.eval(&[0.0, 2.0, 5.0]), 0.0);
    }

    #[test]
    fn parse_coefficients() {
        assert_eq!(parse_coeff("-1/2").unwrap(), q(-1, 2));
        assert_eq!(parse_coeff("0.125").unwrap(), q(1, 8));
        assert_eq!(parse_coeff("-2.5").unwrap(), q(-5, 2));
        assert_eq!(parse_coeff("7").unwrap(), q(7, 1));
        assert!(parse_coeff("1/0").is_err());
        assert!(parse_coeff("abc").is_err());
    }

    #[test]
    fn wrong_exponent_length_rejected() {
        assert!(Polynomial::new(2, [(q(1, 1), vec![1, 0, 0])]).is_err());
    }

    #[test]
    fn divergence_of_rotation_field_vanishes() {
        // -y ∂x + x ∂y
        let y = Polynomial::variable(2, 1).scale(q(-1, 1));
        let x = Polynomial::variable(2, 0);
        let f = PolyVectorField::new(vec![y, x]).unwrap();
        assert!(f.divergence().is_zero());
    }
}
