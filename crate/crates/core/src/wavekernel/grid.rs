use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::srstruct::SubRiemannianStructure;

/// Uniform tensor grid; the last axis varies fastest in flat indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub n: Vec<usize>,
    pub h: Vec<f64>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != n.len() || lo.is_empty() {
            return Err(Error::InvalidArgument("grid extents and sizes must share the dimension".into()));
        }
        if n.iter().any(|&k| k < 3) || lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return Err(Error::InvalidArgument("grid needs at least 3 points and hi > lo on every axis".into()));
        }
        let h = lo.iter().zip(&hi).zip(&n).map(|((a, b), k)| (b - a) / (*k - 1) as f64).collect();
        Ok(Self { lo, n, h })
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hi(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.lo[j] + self.h[j] * (self.n[j] - 1) as f64).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut st = vec![1; self.dim()];
        for j in (0..self.dim().saturating_sub(1)).rev() {
            st[j] = st[j + 1] * self.n[j + 1];
        }
        st
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            idx[j] = flat % self.n[j];
            flat /= self.n[j];
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().enumerate().map(|(j, &i)| self.lo[j] + i as f64 * self.h[j]).collect()
    }

    pub fn on_boundary(&self, flat: usize, layers: usize) -> bool {
        self.multi_index(flat).iter().zip(&self.n).any(|(&i, &n)| i < layers || i + layers >= n)
    }

    /// Multilinear interpolation of a grid function at `p`; zero outside the box.
    pub fn interpolate(&self, u: &[f64], p: &[f64]) -> f64 {
        let d = self.dim();
        let st = self.strides();
        let mut base = 0usize;
        let mut frac = vec![0.0; d];
        for j in 0..d {
            let s = (p[j] - self.lo[j]) / self.h[j];
            if s < 0.0 || s > (self.n[j] - 1) as f64 {
                return 0.0;
            }
            let i = (s.floor() as usize).min(self.n[j] - 2);
            frac[j] = s - i as f64;
            base += i * st[j];
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut off = base;
            for j in 0..d {
                if corner >> j & 1 == 1 {
                    w *= frac[j];
                    off += st[j];
                } else {
                    w *= 1.0 - frac[j];
                }
            }
            if w != 0.0 {
                acc += w * u[off];
            }
        }
        acc
    }

    /// Discrete L² inner product.
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        u.par_iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * self.cell_volume()
    }
}

/// One nonzero component Y_i^j / h_j sampled on the grid.
#[derive(Debug, Clone)]
struct Coefficient {
    axis: usize,
    values: Vec<f64>,
}

/// A_h = ½ Σ_i (D₊ᵢᵀD₊ᵢ + D₋ᵢᵀD₋ᵢ), D±ᵢ = Σ_j Y_i^j ∂±_j with zero values outside the box.
///
/// Each term is a Gram operator, so A_h is symmetric and non-negative in the
/// Euclidean inner product; Dᵀ is the discrete adjoint Y* = −Y − div Y.
#[derive(Debug, Clone)]
pub struct WaveOperator {
    pub grid: Grid,
    fields: Vec<Vec<Coefficient>>,
    /// max over the grid of Σ_j |Y_i^j| / h_j, per field.
    pub field_bounds: Vec<f64>,
}

impl WaveOperator {
    pub fn new(s: &SubRiemannianStructure, grid: Grid) -> Result<Self> {
        if s.dim() != grid.dim() {
            return Err(Error::InvalidArgument(format!("grid dimension {} != structure dimension {}", grid.dim(), s.dim())));
        }
        let n = grid.len();
        let points: Vec<Vec<f64>> = (0..n).into_par_iter().map(|k| grid.point(k)).collect();
        let mut fields = Vec::new();
        let mut field_bounds = Vec::new();
        for y in s.fields() {
            let mut coeffs = Vec::new();
            let mut bound = vec![0.0; n];
            for (axis, comp) in y.components().iter().enumerate() {
                if comp.is_zero() {
                    continue;
                }
                let hj = grid.h[axis];
                let values: Vec<f64> = points.par_iter().map(|p| comp.eval(p) / hj).collect();
                for (b, v) in bound.iter_mut().zip(&values) {
                    *b += v.abs();
                }
                coeffs.push(Coefficient { axis, values });
            }
            field_bounds.push(bound.into_iter().fold(0.0, f64::max));
            fields.push(coeffs);
        }
        Ok(Self { grid, fields, field_bounds })
    }

    /// Time step 0.4 / sqrt(Σ_i max Σ_j |Y_i^j|/h_j)², scaled by cfl / 0.4.
    pub fn stable_dt(&self, cfl: f64) -> f64 {
        let s: f64 = self.field_bounds.iter().map(|b| b * b).sum();
        cfl / s.sqrt().max(f64::MIN_POSITIVE)
    }

    /// Upper bound for the largest eigenvalue from ‖D±ᵢ‖ ≤ 2 max Σ_j |Y_i^j|/h_j.
    pub fn lambda_bound(&self) -> f64 {
        self.field_bounds.iter().map(|b| 4.0 * b * b).sum()
    }

    /// Power-iteration estimate of the largest eigenvalue.
    pub fn lambda_estimate(&self, iters: usize) -> f64 {
        let n = self.grid.len();
        // deterministic, high-frequency-rich start
        let mut u: Vec<f64> = (0..n).map(|k| ((k * 7919 % 104729) as f64 / 104729.0) - 0.5).collect();
        let mut out = vec![0.0; n];
        let mut lambda = 0.0;
        for _ in 0..iters {
            let norm = u.par_iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            u.par_iter_mut().for_each(|v| *v /= norm);
            self.apply(&u, &mut out);
            lambda = u.par_iter().zip(&out).map(|(a, b)| a * b).sum::<f64>();
            std::mem::swap(&mut u, &mut out);
        }
        lambda
    }

    /// out = A_h u.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.grid.len();
        assert_eq!(u.len(), n);
        assert_eq!(out.len(), n);
        let st = self.grid.strides();
        let dims = &self.grid.n;
        out.par_iter_mut().for_each(|o| *o = 0.0);
        let mut wp = vec![0.0; n];
        let mut wm = vec![0.0; n];
        for coeffs in &self.fields {
            if coeffs.is_empty() {
                continue;
            }
            // w± = D± u
            wp.par_iter_mut().zip(wm.par_iter_mut()).enumerate().for_each(|(k, (p, m))| {
                let mut sp = 0.0;
                let mut sm = 0.0;
                for c in coeffs {
                    let s = st[c.axis];
                    let i = (k / s) % dims[c.axis];
                    let up = if i + 1 < dims[c.axis] { u[k + s] } else { 0.0 };
                    let um = if i > 0 { u[k - s] } else { 0.0 };
                    sp += c.values[k] * (up - u[k]);
                    sm += c.values[k] * (u[k] - um);
                }
                *p = sp;
                *m = sm;
            });
            // out += ½ (D₊ᵀ w₊ + D₋ᵀ w₋)
            out.par_iter_mut().enumerate().for_each(|(k, o)| {
                let mut acc = 0.0;
                for c in coeffs {
                    let s = st[c.axis];
                    let i = (k / s) % dims[c.axis];
                    acc -= c.values[k] * wp[k];
                    if i > 0 {
                        acc += c.values[k - s] * wp[k - s];
                    }
                    acc += c.values[k] * wm[k];
                    if i + 1 < dims[c.axis] {
                        acc -= c.values[k + s] * wm[k + s];
                    }
                }
                *o += 0.5 * acc;
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srstruct::{euclidean, heisenberg};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(s: &SubRiemannianStructure, n: usize) -> WaveOperator {
        let d = s.dim();
        let grid = Grid::new(vec![-1.0; d], vec![1.0; d], vec![n; d]).unwrap();
        WaveOperator::new(s, grid).unwrap()
    }

    #[test]
    fn operator_is_symmetric_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in [heisenberg(), euclidean(3)] {
            let op = small(&s, 9);
            let n = op.grid.len();
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (mut au, mut av) = (vec![0.0; n], vec![0.0; n]);
            op.apply(&u, &mut au);
            op.apply(&v, &mut av);
            let (a, b) = (op.grid.dot(&au, &v), op.grid.dot(&u, &av));
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
            assert!(op.grid.dot(&au, &u) >= 0.0);
            let lam = op.lambda_estimate(50);
            assert!(lam <= op.lambda_bound() * (1.0 + 1e-12), "{lam} > {}", op.lambda_bound());
        }
    }

    #[test]
    fn euclidean_operator_is_the_five_point_laplacian() {
        let s = euclidean(2);
        let op = small(&s, 11);
        let h = op.grid.h[0];
        let u: Vec<f64> = (0..op.grid.len())
            .map(|k| {
                let p = op.grid.point(k);
                p[0] * p[0] + 3.0 * p[1] * p[1]
            })
            .collect();
        let mut out = vec![0.0; u.len()];
        op.apply(&u, &mut out);
        // interior nodes: −Δ(x² + 3y²) = −8
        let k = 5 * 11 + 5;
        assert!((out[k] + 8.0).abs() < 1e-9 * (1.0 / (h * h)), "{}", out[k]);
    }

    #[test]
    fn interpolation_reproduces_linear_functions() {
        let grid = Grid::new(vec![0.0, -1.0], vec![1.0, 2.0], vec![5, 7]).unwrap();
        let u: Vec<f64> = (0..grid.len()).map(|k| {
            let p = grid.point(k);
            2.0 * p[0] - p[1] + 0.5
        }).collect();
        let v = grid.interpolate(&u, &[0.33, 0.71]);
        assert!((v - (0.66 - 0.71 + 0.5)).abs() < 1e-12);
        assert_eq!(grid.interpolate(&u, &[1.5, 0.0]), 0.0);
    }
}
