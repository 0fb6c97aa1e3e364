//! Sub-Riemannian structures given by polynomial vector fields, their momentum
//! maps, the principal symbol a = Σ h_i² and the associated metric.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::{format_coeff, CoeffRecord, Coeff, PolyVectorField, Polynomial, TermRecord};

/// A point (x, ξ) of T*ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentPoint {
    pub x: DVector<f64>,
    pub xi: DVector<f64>,
}

impl CotangentPoint {
    pub fn new(x: DVector<f64>, xi: DVector<f64>) -> Self {
        assert_eq!(x.len(), xi.len(), "base point and covector must have the same dimension");
        Self { x, xi }
    }

    pub fn from_slices(x: &[f64], xi: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(x), DVector::from_column_slice(xi))
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Stacked coordinates (x, ξ) ∈ ℝ^{2d}.
    pub fn to_vector(&self) -> DVector<f64> {
        let d = self.dim();
        DVector::from_fn(2 * d, |k, _| if k < d { self.x[k] } else { self.xi[k - d] })
    }

    pub fn from_vector(z: &DVector<f64>) -> Self {
        let d = z.len() / 2;
        Self::new(z.rows(0, d).into_owned(), z.rows(d, d).into_owned())
    }

    /// Shift by a tangent vector of T*X ordered (δx, δξ).
    pub fn shifted(&self, v: &DVector<f64>, s: f64) -> Self {
        Self::from_vector(&(self.to_vector() + v * s))
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.xi.iter()).all(|v| v.is_finite())
    }
}

/// A point m = (t, τ, x, ξ) of T*(ℝ × X).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPoint {
    pub t: f64,
    pub tau: f64,
    pub pt: CotangentPoint,
}

impl ExtendedPoint {
    pub fn new(t: f64, tau: f64, pt: CotangentPoint) -> Self {
        Self { t, tau, pt }
    }

    /// Coordinates (t, τ, x, ξ) ∈ ℝ^{2d+2}, the ordering used for tangent vectors of M.
    pub fn to_vector(&self) -> DVector<f64> {
        let z = self.pt.to_vector();
        let mut out = DVector::zeros(z.len() + 2);
        out[0] = self.t;
        out[1] = self.tau;
        out.rows_mut(2, z.len()).copy_from(&z);
        out
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        let n = v.len() - 2;
        Self::new(v[0], v[1], CotangentPoint::from_vector(&v.rows(2, n).into_owned()))
    }
}

/// A symbol on T*X that the structure knows how to differentiate.
#[derive(Debug, Clone)]
pub enum Symbol {
    /// The principal symbol a = Σ h_i².
    Principal,
    /// The momentum map h_i of the i-th field.
    Momentum(usize),
    /// Arbitrary polynomial in the 2d variables (x, ξ).
    Poly(Polynomial),
}

/// h_Y(x, ξ) = ξ(Y(x)).
pub fn momentum_map(y: &PolyVectorField, pt: &CotangentPoint) -> f64 {
    assert_eq!(y.dim(), pt.dim(), "vector field and point dimensions differ");
    let xs = pt.x.as_slice();
    y.components().iter().zip(pt.xi.iter()).map(|(p, xi)| xi * p.eval(xs)).sum()
}

/// K polynomial vector fields on ℝ^d with Lebesgue density.
#[derive(Debug, Clone)]
pub struct SubRiemannianStructure {
    name: String,
    dim: usize,
    fields: Vec<PolyVectorField>,
    // jac[i][j][k] = ∂_k Y_i^j
    jac: Vec<Vec<Vec<Polynomial>>>,
    // hess[i][j][k][l] = ∂_k ∂_l Y_i^j
    hess: Vec<Vec<Vec<Vec<Polynomial>>>>,
}

impl PartialEq for SubRiemannianStructure {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.fields == other.fields
    }
}

impl SubRiemannianStructure {
    pub fn new(name: impl Into<String>, fields: Vec<PolyVectorField>) -> Result<Self> {
        let Some(first) = fields.first() else {
            return Err(Error::Parse("a structure needs at least one vector field".into()));
        };
        let dim = first.dim();
        if let Some(f) = fields.iter().find(|f| f.dim() != dim) {
            return Err(Error::Parse(format!("field of dimension {} in a structure on R^{dim}", f.dim())));
        }
        let jac: Vec<Vec<Vec<Polynomial>>> = fields
            .iter()
            .map(|f| f.components().iter().map(|p| (0..dim).map(|k| p.derivative(k)).collect()).collect())
            .collect();
        let hess = jac
            .iter()
            .map(|fj| {
                fj.iter()
                    .map(|row| row.iter().map(|p| (0..dim).map(|l| p.derivative(l)).collect()).collect())
                    .collect()
            })
            .collect();
        Ok(Self { name: name.into(), dim, fields, jac, hess })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[PolyVectorField] {
        &self.fields
    }

    fn check(&self, pt: &CotangentPoint) {
        assert_eq!(pt.dim(), self.dim, "point dimension does not match the structure");
    }

    /// Matrix whose columns are Y_i(x).
    pub fn frame(&self, x: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(x.len(), self.dim);
        let xs = x.as_slice();
        DMatrix::from_fn(self.dim, self.fields.len(), |j, i| self.fields[i].components()[j].eval(xs))
    }

    /// ∂_k Y_i^j(x) as a d×d matrix (row j, column k).
    pub fn field_jacobian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let xs = x.as_slice();
        DMatrix::from_fn(self.dim, self.dim, |j, k| self.jac[i][j][k].eval(xs))
    }

    pub fn momentum(&self, i: usize, pt: &CotangentPoint) -> f64 {
        self.check(pt);
        momentum_map(&self.fields[i], pt)
    }

    pub fn momenta(&self, pt: &CotangentPoint) -> Vec<f64> {
        (0..self.fields.len()).map(|i| self.momentum(i, pt)).collect()
    }

    /// a(x, ξ) = Σ_i h_i(x, ξ)².
    pub fn principal_symbol(&self, pt: &CotangentPoint) -> f64 {
        self.momenta(pt).iter().map(|h| h * h).sum()
    }

    /// p = τ² − a on M.
    pub fn wave_symbol(&self, m: &ExtendedPoint) -> f64 {
        m.tau * m.tau - self.principal_symbol(&m.pt)
    }

    /// Gradient of h_i in (x, ξ): (Σ_j ξ_j ∂_x Y_i^j, Y_i(x)).
    pub fn momentum_gradient(&self, i: usize, pt: &CotangentPoint) -> DVector<f64> {
        self.check(pt);
        let d = self.dim;
        let xs = pt.x.as_slice();
        let mut g = DVector::zeros(2 * d);
        for j in 0..d {
            let xij = pt.xi[j];
            for k in 0..d {
                if xij != 0.0 {
                    g[k] += xij * self.jac[i][j][k].eval(xs);
                }
            }
            g[d + j] = self.fields[i].components()[j].eval(xs);
        }
        g
    }

    /// Hessian of h_i in (x, ξ).
    pub fn momentum_hessian(&self, i: usize, pt: &CotangentPoint) -> DMatrix<f64> {
        let d = self.dim;
        let xs = pt.x.as_slice();
        let mut h = DMatrix::zeros(2 * d, 2 * d);
        for j in 0..d {
            for k in 0..d {
                let c = self.jac[i][j][k].eval(xs);
                h[(k, d + j)] = c;
                h[(d + j, k)] = c;
                if pt.xi[j] != 0.0 {
                    for l in 0..d {
                        h[(k, l)] += pt.xi[j] * self.hess[i][j][k][l].eval(xs);
                    }
                }
            }
        }
        h
    }

    pub fn symbol_value(&self, f: &Symbol, pt: &CotangentPoint) -> f64 {
        match f {
            Symbol::Principal => self.principal_symbol(pt),
            Symbol::Momentum(i) => self.momentum(*i, pt),
            Symbol::Poly(p) => p.eval(pt.to_vector().as_slice()),
        }
    }

    pub fn symbol_gradient(&self, f: &Symbol, pt: &CotangentPoint) -> DVector<f64> {
        match f {
            Symbol::Principal => {
                let mut g = DVector::zeros(2 * self.dim);
                for i in 0..self.fields.len() {
                    let h = self.momentum(i, pt);
                    if h != 0.0 {
                        g += self.momentum_gradient(i, pt) * (2.0 * h);
                    }
                }
                g
            }
            Symbol::Momentum(i) => self.momentum_gradient(*i, pt),
            Symbol::Poly(p) => {
                assert_eq!(p.dim(), 2 * self.dim, "symbol must be a polynomial in (x, xi)");
                let z = pt.to_vector();
                DVector::from_fn(2 * self.dim, |k, _| p.derivative(k).eval(z.as_slice()))
            }
        }
    }

    /// Hessian of a = Σ h_i²: 2 Σ (∇h_i ∇h_iᵀ + h_i ∇²h_i).
    pub fn principal_hessian(&self, pt: &CotangentPoint) -> DMatrix<f64> {
        let n = 2 * self.dim;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..self.fields.len() {
            let g = self.momentum_gradient(i, pt);
            h += &g * g.transpose() * 2.0;
            let hi = self.momentum(i, pt);
            if hi != 0.0 {
                h += self.momentum_hessian(i, pt) * (2.0 * hi);
            }
        }
        h
    }

    /// H_f = (∂_ξ f, −∂_x f), so that ω(H_f, ·) = −df.
    pub fn hamiltonian_field(&self, f: &Symbol, pt: &CotangentPoint) -> DVector<f64> {
        gradient_to_hamiltonian(&self.symbol_gradient(f, pt))
    }

    /// g_x(v) = min Σ u_i² over Σ u_i Y_i(x) = v, or +∞ when v ∉ 𝒟_x.
    pub fn metric_eval(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        assert_eq!(v.len(), self.dim);
        let vn = v.norm();
        if vn == 0.0 {
            return 0.0;
        }
        let frame = self.frame(x);
        let u = linalg::pinv(&frame) * v;
        let residual = (&frame * &u - v).norm();
        if residual > 1e-8 * (1.0 + vn) {
            f64::INFINITY
        } else {
            u.norm_squared()
        }
    }

    /// Symbolic divergences of the fields (used by Y* = −Y − div Y).
    pub fn divergences(&self) -> Vec<Polynomial> {
        self.fields.iter().map(|f| f.divergence()).collect()
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "heisenberg" => Ok(heisenberg()),
            "martinet" => Ok(martinet()),
            "quasicontact" => Ok(quasicontact()),
            "euclidean3" => Ok(euclidean(3)),
            other => Err(Error::Parse(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn to_record(&self) -> StructureRecord {
        StructureRecord {
            name: Some(self.name.clone()),
            dimension: self.dim,
            field_count: self.fields.len(),
            fields: self
                .fields
                .iter()
                .map(|f| FieldRecord {
                    terms: f
                        .components()
                        .iter()
                        .enumerate()
                        .flat_map(|(j, p)| {
                            p.terms().iter().map(move |(c, e)| TermRecord {
                                component: j,
                                coefficient: CoeffRecord::Text(format_coeff(c)),
                                exponents: e.clone(),
                            })
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_record(rec: &StructureRecord) -> Result<Self> {
        let d = rec.dimension;
        if d == 0 {
            return Err(Error::Parse("dimension must be positive".into()));
        }
        if rec.fields.len() != rec.field_count {
            return Err(Error::Parse(format!(
                "field_count = {} but {} fields listed",
                rec.field_count,
                rec.fields.len()
            )));
        }
        let mut fields = Vec::with_capacity(rec.fields.len());
        for (i, f) in rec.fields.iter().enumerate() {
            let mut comps: Vec<Vec<(Coeff, Vec<u32>)>> = vec![Vec::new(); d];
            for t in &f.terms {
                if t.component >= d {
                    return Err(Error::Parse(format!(
                        "field {i}: component index {} out of range for dimension {d}",
                        t.component
                    )));
                }
                comps[t.component].push((t.coefficient.to_coeff()?, t.exponents.clone()));
            }
            let comps = comps
                .into_iter()
                .map(|terms| Polynomial::new(d, terms))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Parse(format!("field {i}: {e}")))?;
            fields.push(PolyVectorField::new(comps)?);
        }
        Self::new(rec.name.clone().unwrap_or_else(|| "custom".into()), fields)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let rec: StructureRecord = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_record(&rec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_record()).expect("structure records always serialize")
    }
}

/// ∇f ↦ H_f = (∂_ξ f, −∂_x f).
pub fn gradient_to_hamiltonian(g: &DVector<f64>) -> DVector<f64> {
    let d = g.len() / 2;
    DVector::from_fn(2 * d, |k, _| if k < d { g[d + k] } else { -g[k - d] })
}

/// On-disk form of a structure.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StructureRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dimension: usize,
    pub field_count: usize,
    #[serde(rename = "field")]
    pub fields: Vec<FieldRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldRecord {
    #[serde(rename = "term")]
    pub terms: Vec<TermRecord>,
}

pub const PRESETS: [&str; 4] = ["heisenberg", "martinet", "quasicontact", "euclidean3"];

fn q(n: i64, d: i64) -> Coeff {
    Coeff::new(n, d)
}

fn field(dim: usize, comps: &[(usize, Polynomial)]) -> PolyVectorField {
    let mut c = vec![Polynomial::zero(dim); dim];
    for (j, p) in comps {
        c[*j] = c[*j].add(p);
    }
    PolyVectorField::new(c).expect("preset fields are well-formed")
}

fn one(dim: usize) -> Polynomial {
    Polynomial::constant(dim, q(1, 1))
}

fn heisenberg_fields(dim: usize) -> Vec<PolyVectorField> {
    let x = Polynomial::variable(dim, 0);
    let y = Polynomial::variable(dim, 1);
    vec![
        field(dim, &[(0, one(dim)), (2, y.scale(q(-1, 2)))]),
        field(dim, &[(1, one(dim)), (2, x.scale(q(1, 2)))]),
    ]
}

/// Y_1 = ∂x − (y/2)∂z, Y_2 = ∂y + (x/2)∂z on ℝ³.
pub fn heisenberg() -> SubRiemannianStructure {
    SubRiemannianStructure::new("heisenberg", heisenberg_fields(3)).expect("valid preset")
}

/// Y_1 = ∂x, Y_2 = ∂y + x²∂z on ℝ³.
pub fn martinet() -> SubRiemannianStructure {
    let x = Polynomial::variable(3, 0);
    let fields = vec![field(3, &[(0, one(3))]), field(3, &[(1, one(3)), (2, x.mul(&x))])];
    SubRiemannianStructure::new("martinet", fields).expect("valid preset")
}

/// Heisenberg fields plus ∂w on ℝ⁴ (coordinates x, y, z, w).
pub fn quasicontact() -> SubRiemannianStructure {
    let mut fields = heisenberg_fields(4);
    fields.push(PolyVectorField::coordinate(4, 3));
    SubRiemannianStructure::new("quasicontact", fields).expect("valid preset")
}

/// Coordinate fields ∂_1, …, ∂_d.
pub fn euclidean(dim: usize) -> SubRiemannianStructure {
    let fields = (0..dim).map(|j| PolyVectorField::coordinate(dim, j)).collect();
    SubRiemannianStructure::new(format!("euclidean{dim}"), fields).expect("valid preset")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: &[f64], xi: &[f64]) -> CotangentPoint {
        CotangentPoint::from_slices(x, xi)
    }

    #[test]
    fn heisenberg_momenta() {
        let s = heisenberg();
        assert_eq!(s.momentum(0, &pt(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0])), 1.0);
        assert_eq!(s.momentum(0, &pt(&[0.0, 2.0, 0.0], &[0.0, 0.0, 1.0])), -1.0);
        assert_eq!(s.momentum(1, &pt(&[0.3, 2.0, 0.0], &[0.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn principal_symbol_examples() {
        let s = heisenberg();
        assert_eq!(s.principal_symbol(&pt(&[0.0; 3], &[0.0, 0.0, 1.0])), 0.0);
        assert_eq!(s.principal_symbol(&pt(&[0.0; 3], &[1.0, 1.0, 0.0])), 2.0);
    }

    #[test]
    fn hamiltonian_of_first_heisenberg_momentum() {
        let s = heisenberg();
        let h = s.hamiltonian_field(&Symbol::Momentum(0), &pt(&[0.0; 3], &[0.0, 0.0, 1.0]));
        // ∂_ξ h_1 = (1, 0, −y/2) = (1,0,0); −∂_x h_1 = (0, ξ_3/2, 0)
        let expected = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.5, 0.0]);
        assert!((h - expected).norm() < 1e-15);
    }

    #[test]
    fn free_particle_hamiltonian() {
        let s = euclidean(1);
        let xi = Polynomial::variable(2, 1);
        let h = s.hamiltonian_field(&Symbol::Poly(xi), &pt(&[0.7], &[3.0]));
        assert_eq!(h.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn hamiltonian_of_a_vanishes_on_characteristic_set() {
        let s = martinet();
        let h = s.hamiltonian_field(&Symbol::Principal, &pt(&[0.0, 0.4, 1.0], &[0.0, 0.0, 2.0]));
        assert_eq!(h.norm(), 0.0);
    }

    #[test]
    fn metric_examples() {
        let s = heisenberg();
        let o = DVector::zeros(3);
        assert!((s.metric_eval(&o, &DVector::from_vec(vec![1.0, 0.0, 0.0])) - 1.0).abs() < 1e-14);
        assert_eq!(s.metric_eval(&o, &DVector::zeros(3)), 0.0);
        assert_eq!(s.metric_eval(&o, &DVector::from_vec(vec![0.0, 0.0, 1.0])), f64::INFINITY);
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for name in PRESETS {
            let s = SubRiemannianStructure::preset(name).unwrap();
            let back = SubRiemannianStructure::from_toml(&s.to_toml()).unwrap();
            assert_eq!(s, back);
            assert_eq!(back.name(), name);
        }
    }

    #[test]
    fn structure_file_errors() {
        assert!(SubRiemannianStructure::preset("sphere").is_err());
        let bad = "dimension = 2\nfield_count = 1\n[[field]]\n[[field.term]]\ncomponent = 3\ncoefficient = 1\nexponents = [0, 0]\n";
        assert!(matches!(SubRiemannianStructure::from_toml(bad), Err(Error::Parse(_))));
        let mismatch = "dimension = 2\nfield_count = 2\n[[field]]\nterm = []\n";
        assert!(SubRiemannianStructure::from_toml(mismatch).is_err());
    }

    #[test]
    fn numeric_coefficients_accepted() {
        let text = "dimension = 1\nfield_count = 1\n[[field]]\n[[field.term]]\ncomponent = 0\ncoefficient = 0.5\nexponents = [1]\n";
        let s = SubRiemannianStructure::from_toml(text).unwrap();
        assert_eq!(s.frame(&DVector::from_vec(vec![4.0]))[(0, 0)], 2.0);
    }
}
