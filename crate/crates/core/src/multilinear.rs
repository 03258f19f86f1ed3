//! Symmetric multilinear forms, derivative tensors and point-set distances.
//!
//! A [`SymTensor`] of order `k` maps `k` vectors of dimension `in_dim` to a
//! vector of dimension `out_dim`. Coefficients are stored densely with the
//! output index slowest, and are symmetrized on construction so that the
//! value never depends on the order of the arguments.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Points closer than this are merged when inserted into a [`PointSet`].
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymTensor {
    order: usize,
    out_dim: usize,
    in_dim: usize,
    coeffs: Vec<f64>,
}

impl SymTensor {
    /// Builds a tensor from raw coefficients, symmetrizing over the input slots.
    pub fn new(order: usize, out_dim: usize, in_dim: usize, coeffs: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::Dimension("tensor order must be at least 1".into()));
        }
        let expected = out_dim * in_dim.pow(order as u32);
        if coeffs.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Dimension("non-finite tensor coefficient".into()));
        }
        let mut t = SymTensor {
            order,
            out_dim,
            in_dim,
            coeffs,
        };
        t.symmetrize();
        Ok(t)
    }

    pub fn zeros(order: usize, out_dim: usize, in_dim: usize) -> Self {
        assert!(order >= 1);
        SymTensor {
            order,
            out_dim,
            in_dim,
            coeffs: vec![0.0; out_dim * in_dim.pow(order as u32)],
        }
    }

    /// Builds a tensor by evaluating `entry(out, indices)` at every coefficient.
    pub fn from_fn<F>(order: usize, out_dim: usize, in_dim: usize, mut entry: F) -> Result<Self>
    where
        F: FnMut(usize, &[usize]) -> f64,
    {
        let block = in_dim.pow(order as u32);
        let mut coeffs = Vec::with_capacity(out_dim * block);
        let mut idx = vec![0usize; order];
        for out in 0..out_dim {
            for flat in 0..block {
                unflatten(flat, in_dim, &mut idx);
                coeffs.push(entry(out, &idx));
            }
        }
        SymTensor::new(order, out_dim, in_dim, coeffs)
    }

    /// Order-1 tensor (a linear map) from a matrix.
    pub fn from_matrix(m: &Matrix) -> Self {
        let (rows, cols) = m.shape();
        let mut coeffs = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                coeffs.push(m[(i, j)]);
            }
        }
        SymTensor {
            order: 1,
            out_dim: rows,
            in_dim: cols,
            coeffs,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn get(&self, out: usize, idx: &[usize]) -> f64 {
        self.coeffs[self.flat_index(out, idx)]
    }

    /// The matrix of an order-1 tensor.
    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.order != 1 {
            return Err(Error::Dimension(format!(
                "order-{} tensor is not a matrix",
                self.order
            )));
        }
        Ok(Matrix::from_row_slice(
            self.out_dim,
            self.in_dim,
            &self.coeffs,
        ))
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn scaled(&self, s: f64) -> SymTensor {
        SymTensor {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            ..self.clone()
        }
    }

    /// Largest coefficient change under any permutation of the input slots.
    pub fn asymmetry(&self) -> f64 {
        let block = self.in_dim.pow(self.order as u32);
        let mut idx = vec![0usize; self.order];
        let mut worst: f64 = 0.0;
        for out in 0..self.out_dim {
            for flat in 0..block {
                unflatten(flat, self.in_dim, &mut idx);
                let c = self.coeffs[out * block + flat];
                idx.sort_unstable();
                let canon = self.coeffs[out * block + flatten(&idx, self.in_dim)];
                worst = worst.max((c - canon).abs());
            }
        }
        worst
    }

    fn flat_index(&self, out: usize, idx: &[usize]) -> usize {
        out * self.in_dim.pow(self.order as u32) + flatten(idx, self.in_dim)
    }

    fn symmetrize(&mut self) {
        if self.order == 1 {
            return;
        }
        let block = self.in_dim.pow(self.order as u32);
        let mut sums = vec![0.0; block];
        let mut counts = vec![0usize; block];
        let mut canon = vec![0usize; block];
        let mut idx = vec![0usize; self.order];
        for (flat, c) in canon.iter_mut().enumerate() {
            unflatten(flat, self.in_dim, &mut idx);
            idx.sort_unstable();
            *c = flatten(&idx, self.in_dim);
        }
        for out in 0..self.out_dim {
            sums.iter_mut().for_each(|s| *s = 0.0);
            counts.iter_mut().for_each(|c| *c = 0);
            let row = &mut self.coeffs[out * block..(out + 1) * block];
            for flat in 0..block {
                sums[canon[flat]] += row[flat];
                counts[canon[flat]] += 1;
            }
            for flat in 0..block {
                row[flat] = sums[canon[flat]] / counts[canon[flat]] as f64;
            }
        }
    }
}

fn flatten(idx: &[usize], in_dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * in_dim + i)
}

fn unflatten(mut flat: usize, in_dim: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = flat % in_dim;
        flat /= in_dim;
    }
}

fn check_arg(t: &SymTensor, v: &Vector) -> Result<()> {
    if v.len() != t.in_dim {
        return Err(Error::Dimension(format!(
            "argument has dimension {}, tensor expects {}",
            v.len(),
            t.in_dim
        )));
    }
    Ok(())
}

/// Evaluates `T(args[0], ..., args[k-1])`.
pub fn apply_form(t: &SymTensor, args: &[&Vector]) -> Result<Vector> {
    if args.len() != t.order {
        return Err(Error::Dimension(format!(
            "order-{} form applied to {} arguments",
            t.order,
            args.len()
        )));
    }
    for a in args {
        check_arg(t, a)?;
    }
    let block = t.in_dim.pow(t.order as u32);
    let mut idx = vec![0usize; t.order];
    let mut out = Vector::zeros(t.out_dim);
    for flat in 0..block {
        unflatten(flat, t.in_dim, &mut idx);
        let weight: f64 = idx.iter().zip(args).map(|(&i, a)| a[i]).product();
        if weight == 0.0 {
            continue;
        }
        for o in 0..t.out_dim {
            out[o] += t.coeffs[o * block + flat] * weight;
        }
    }
    Ok(out)
}

/// `T[v]^k`, the form evaluated on the diagonal.
pub fn power_form(t: &SymTensor, v: &Vector) -> Result<Vector> {
    let args: Vec<&Vector> = std::iter::repeat_n(v, t.order).collect();
    apply_form(t, &args)
}

/// Fills the first `count` slots of `t` with `h`, leaving a tensor of order
/// `t.order() - count`.
pub fn contract(t: &SymTensor, h: &Vector, count: usize) -> Result<SymTensor> {
    if count == 0 || count >= t.order {
        return Err(Error::Dimension(format!(
            "cannot contract {count} slots of an order-{} tensor",
            t.order
        )));
    }
    check_arg(t, h)?;
    let rest = t.order - count;
    let rest_block = t.in_dim.pow(rest as u32);
    let lead_block = t.in_dim.pow(count as u32);
    let block = lead_block * rest_block;
    let mut lead = vec![0usize; count];
    let mut coeffs = vec![0.0; t.out_dim * rest_block];
    for l in 0..lead_block {
        unflatten(l, t.in_dim, &mut lead);
        let weight: f64 = lead.iter().map(|&i| h[i]).product();
        if weight == 0.0 {
            continue;
        }
        for o in 0..t.out_dim {
            let src = &t.coeffs[o * block + l * rest_block..o * block + (l + 1) * rest_block];
            let dst = &mut coeffs[o * rest_block..(o + 1) * rest_block];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += weight * s;
            }
        }
    }
    SymTensor::new(rest, t.out_dim, t.in_dim, coeffs)
}

/// Default central-difference step for a derivative of the given order.
pub fn default_fd_step(order: usize, point: &Vector) -> f64 {
    let scale = point.amax().max(1.0);
    let base = match order {
        1 => 1e-5,
        2 => 1e-3,
        _ => 1e-2,
    };
    base * scale
}

/// Central-difference estimate of the `order`-th derivative tensor of `eval`
/// at `point`.
///
/// Each mixed partial uses the product of one-dimensional central
/// differences, which is exact on polynomials of degree `order + 1` up to
/// roundoff.
pub fn fd_derivative_tensor<F>(
    mut eval: F,
    point: &Vector,
    order: usize,
    step: f64,
) -> Result<SymTensor>
where
    F: FnMut(&Vector) -> Result<Vector>,
{
    if !(1..=4).contains(&order) {
        return Err(Error::Dimension(format!(
            "finite-difference order {order} outside 1..=4"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Dimension(format!("invalid step {step}")));
    }
    let n = point.len();
    let out_dim = eval(point)?.len();
    let block = n.pow(order as u32);
    let mut idx = vec![0usize; order];
    let mut coeffs = vec![0.0; out_dim * block];
    let denom = (2.0 * step).powi(order as i32);
    let mut shifted = point.clone();
    for flat in 0..block {
        unflatten(flat, n, &mut idx);
        if idx.windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let mut acc = Vector::zeros(out_dim);
        for signs in 0..(1usize << order) {
            shifted.copy_from(point);
            let mut parity = 1.0;
            for (j, &i) in idx.iter().enumerate() {
                if signs >> j & 1 == 1 {
                    shifted[i] -= step;
                    parity = -parity;
                } else {
                    shifted[i] += step;
                }
            }
            let v = eval(&shifted)?;
            if v.len() != out_dim {
                return Err(Error::Eval("evaluator changed output dimension".into()));
            }
            acc.axpy(parity, &v, 1.0);
        }
        for o in 0..out_dim {
            coeffs[o * block + flat] = acc[o] / denom;
        }
    }
    // only sorted multi-indices were filled; copy them onto their permutations
    let mut sorted = vec![0usize; order];
    for o in 0..out_dim {
        for flat in 0..block {
            unflatten(flat, n, &mut idx);
            sorted.copy_from_slice(&idx);
            sorted.sort_unstable();
            let canon = flatten(&sorted, n);
            coeffs[o * block + flat] = coeffs[o * block + canon];
        }
    }
    SymTensor::new(order, out_dim, n, coeffs)
}

/// A finite set of points with near-duplicates merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    points: Vec<Vector>,
}

impl PointSet {
    pub fn new() -> Self {
        PointSet { points: Vec::new() }
    }

    pub fn from_points<I: IntoIterator<Item = Vector>>(points: I) -> Self {
        let mut set = PointSet::new();
        for p in points {
            set.insert(p);
        }
        set
    }

    /// Inserts `p` unless a stored point lies within [`MERGE_TOL`]. Returns
    /// whether the point was new.
    pub fn insert(&mut self, p: Vector) -> bool {
        if self.points.iter().any(|q| (q - &p).norm() <= MERGE_TOL) {
            return false;
        }
        self.points.push(p);
        true
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Euclidean distance from `p` to the set.
    pub fn distance_to(&self, p: &Vector) -> Result<f64> {
        self.points
            .iter()
            .map(|q| (q - p).norm())
            .reduce(f64::min)
            .ok_or(Error::EmptySet)
    }
}

/// Hausdorff distance between two finite point sets.
pub fn hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut worst: f64 = 0.0;
    for p in a.points() {
        worst = worst.max(b.distance_to(p)?);
    }
    for q in b.points() {
        worst = worst.max(a.distance_to(q)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hessian_pair() -> SymTensor {
        // Hessians of (y1^2 - y2^2, y1 y2) at the origin
        SymTensor::new(2, 2, 2, vec![2.0, 0.0, 0.0, -2.0, 0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn form_on_hessian_pair() {
        let t = hessian_pair();
        let h = Vector::from_vec(vec![1.0, 1.0]);
        let v = apply_form(&t, &[&h, &h]).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn zero_argument_gives_zero() {
        let t = hessian_pair();
        let z = Vector::zeros(2);
        let h = Vector::from_vec(vec![0.3, -4.0]);
        assert_eq!(apply_form(&t, &[&h, &z]).unwrap(), Vector::zeros(2));
    }

    #[test]
    fn identity_order_one() {
        let t = SymTensor::from_matrix(&Matrix::identity(2, 2));
        let v = Vector::from_vec(vec![3.0, -1.0]);
        assert_eq!(apply_form(&t, &[&v]).unwrap(), v);
    }

    #[test]
    fn contraction_of_hessian_pair() {
        let t = hessian_pair();
        let h = Vector::from_vec(vec![1.0, 1.0]);
        let a = contract(&t, &h, 1).unwrap().to_matrix().unwrap();
        assert_eq!(a, Matrix::from_row_slice(2, 2, &[2.0, -2.0, 1.0, 1.0]));
        let zero = contract(&t, &Vector::zeros(2), 1).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn contract_rejects_bad_count() {
        let t = hessian_pair();
        let h = Vector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(contract(&t, &h, 2), Err(Error::Dimension(_))));
        assert!(matches!(contract(&t, &h, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn apply_rejects_dimension_mismatch() {
        let t = hessian_pair();
        let h = Vector::from_vec(vec![1.0, 1.0, 1.0]);
        assert!(matches!(apply_form(&t, &[&h, &h]), Err(Error::Dimension(_))));
        let g = Vector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(apply_form(&t, &[&g]), Err(Error::Dimension(_))));
    }

    #[test]
    fn construction_symmetrizes() {
        let t = SymTensor::new(2, 1, 2, vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(t.coeffs(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(t.asymmetry(), 0.0);
    }

    fn quad(y: &Vector) -> Result<Vector> {
        Ok(Vector::from_vec(vec![y[0] * y[0] - y[1] * y[1], y[0] * y[1]]))
    }

    #[test]
    fn fd_hessian_matches_exact() {
        let p = Vector::zeros(2);
        let t = fd_derivative_tensor(quad, &p, 2, 1e-3).unwrap();
        let exact = hessian_pair();
        for (a, b) in t.coeffs().iter().zip(exact.coeffs()) {
            assert!((a - b).abs() < 1e-6);
        }
        let j = fd_derivative_tensor(quad, &p, 1, 1e-5).unwrap();
        assert!(j.max_abs() < 1e-6);
    }

    #[test]
    fn fd_linear_map_is_exact() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
        let eval = |y: &Vector| Ok(&m * y);
        let p = Vector::from_vec(vec![0.2, -0.7, 1.3]);
        let t = fd_derivative_tensor(eval, &p, 1, default_fd_step(1, &p)).unwrap();
        let got = t.to_matrix().unwrap();
        assert!((got - &m).amax() < 1e-10);
    }

    #[test]
    fn fd_propagates_eval_errors() {
        let eval = |_: &Vector| -> Result<Vector> { Err(Error::Eval("boom".into())) };
        let r = fd_derivative_tensor(eval, &Vector::zeros(1), 2, 1e-3);
        assert!(matches!(r, Err(Error::Eval(_))));
    }

    #[test]
    fn hausdorff_examples() {
        let s = |pts: &[&[f64]]| PointSet::from_points(pts.iter().map(|p| Vector::from_row_slice(p)));
        assert_eq!(hausdorff(&s(&[&[0.0]]), &s(&[&[3.0]])).unwrap(), 3.0);
        let a = s(&[&[0.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &s(&[&[0.0, 0.0]])).unwrap(), 1.0);
        assert_eq!(hausdorff(&a, &PointSet::new()), Err(Error::EmptySet));
    }

    #[test]
    fn point_set_merges_duplicates() {
        let mut s = PointSet::new();
        assert!(s.insert(Vector::from_vec(vec![1.0, 2.0])));
        assert!(!s.insert(Vector::from_vec(vec![1.0 + 1e-12, 2.0])));
        assert!(s.insert(Vector::from_vec(vec![1.0 + 1e-6, 2.0])));
        assert_eq!(s.len(), 2);
    }
}
