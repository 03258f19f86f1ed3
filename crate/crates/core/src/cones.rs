//! Orthant-product cones and their normal cones.
//!
//! `C` is a product of free lines and nonnegative half-lines. At a point
//! `y` in `C` the normal cone is axis aligned: every free coordinate and
//! every strictly positive nonnegative coordinate forces `z_i = 0`, and every
//! nonnegative coordinate sitting at zero allows `z_i <= 0`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::multilinear::Vector;

/// Feasibility and activity threshold used when no tolerance is supplied.
pub const ACTIVITY_TOL: f64 = 1e-10;

/// Faces are enumerated only up to this many nonnegative coordinates.
pub const MAX_ENUMERATED: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConeKind {
    Free,
    NonNeg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeSpec {
    kinds: Vec<ConeKind>,
}

impl ConeSpec {
    pub fn new(kinds: Vec<ConeKind>) -> Self {
        ConeSpec { kinds }
    }

    pub fn free(n: usize) -> Self {
        ConeSpec::new(vec![ConeKind::Free; n])
    }

    pub fn nonneg(n: usize) -> Self {
        ConeSpec::new(vec![ConeKind::NonNeg; n])
    }

    pub fn dim(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[ConeKind] {
        &self.kinds
    }

    pub fn kind(&self, i: usize) -> ConeKind {
        self.kinds[i]
    }

    pub fn nonneg_indices(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.kinds[i] == ConeKind::NonNeg)
            .collect()
    }

    fn check_dim(&self, v: &Vector) {
        assert_eq!(v.len(), self.dim(), "vector dimension does not match cone");
    }

    pub fn in_cone(&self, y: &Vector, tol: f64) -> bool {
        self.check_dim(y);
        self.kinds
            .iter()
            .zip(y.iter())
            .all(|(k, &v)| *k == ConeKind::Free || v >= -tol)
    }

    pub fn normal_cone_at(&self, y: &Vector, tol: f64) -> NormalConeRep {
        self.check_dim(y);
        if !self.in_cone(y, tol) {
            return NormalConeRep { components: None };
        }
        let components = self
            .kinds
            .iter()
            .zip(y.iter())
            .map(|(k, &v)| match k {
                ConeKind::NonNeg if v.abs() <= tol => NormalComponent::NonPos,
                _ => NormalComponent::Zero,
            })
            .collect();
        NormalConeRep {
            components: Some(components),
        }
    }

    pub fn in_normal_cone(&self, y: &Vector, z: &Vector, tol: f64) -> bool {
        self.check_dim(z);
        self.normal_cone_at(y, tol).contains(z, tol)
    }

    /// Distance from `-v` to `N_C(y)`: zero exactly when `0 ∈ v + N_C(y)`,
    /// and `+∞` when `y` lies outside `C`.
    pub fn inclusion_residual(&self, y: &Vector, v: &Vector) -> f64 {
        self.inclusion_residual_tol(y, v, ACTIVITY_TOL)
    }

    pub fn inclusion_residual_tol(&self, y: &Vector, v: &Vector, tol: f64) -> f64 {
        self.check_dim(v);
        self.normal_cone_at(y, tol).distance(&(-v))
    }

    /// Every active-set pattern, ordered by size and then lexicographically.
    pub fn faces(&self) -> Result<Vec<Face>> {
        let nonneg = self.nonneg_indices();
        if nonneg.len() > MAX_ENUMERATED {
            return Err(Error::EnumerationLimit {
                count: nonneg.len(),
                limit: MAX_ENUMERATED,
            });
        }
        let mut faces: Vec<Face> = (0u32..1 << nonneg.len())
            .map(|mask| Face {
                active: nonneg
                    .iter()
                    .enumerate()
                    .filter(|(bit, _)| mask >> bit & 1 == 1)
                    .map(|(_, &i)| i)
                    .collect(),
            })
            .collect();
        faces.sort_by(|a, b| {
            a.active
                .len()
                .cmp(&b.active.len())
                .then_with(|| a.active.cmp(&b.active))
        });
        Ok(faces)
    }
}

impl FromStr for ConeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .enumerate()
            .map(|(i, c)| match c {
                'F' | 'f' => Ok(ConeKind::Free),
                'P' | 'p' => Ok(ConeKind::NonNeg),
                other => Err(Error::Parse {
                    line: 0,
                    column: i + 1,
                    message: format!("cone symbol `{other}` is not F or P"),
                }),
            })
            .collect::<Result<Vec<_>>>()
            .map(ConeSpec::new)
    }
}

impl fmt::Display for ConeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in &self.kinds {
            f.write_str(match k {
                ConeKind::Free => "F",
                ConeKind::NonNeg => "P",
            })?;
        }
        Ok(())
    }
}

impl Serialize for ConeSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NormalComponent {
    /// `z_i = 0`
    Zero,
    /// `z_i <= 0`
    NonPos,
}

/// `N_C(y)` as a per-coordinate sign pattern; `None` is the empty set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalConeRep {
    pub components: Option<Vec<NormalComponent>>,
}

impl NormalConeRep {
    pub fn is_empty(&self) -> bool {
        self.components.is_none()
    }

    pub fn contains(&self, z: &Vector, tol: f64) -> bool {
        match &self.components {
            None => false,
            Some(c) => c.iter().zip(z.iter()).all(|(k, &v)| match k {
                NormalComponent::Zero => v.abs() <= tol,
                NormalComponent::NonPos => v <= tol,
            }),
        }
    }

    /// Euclidean projection onto the cone; `None` when it is empty.
    pub fn project(&self, w: &Vector) -> Option<Vector> {
        let c = self.components.as_ref()?;
        Some(Vector::from_iterator(
            w.len(),
            c.iter().zip(w.iter()).map(|(k, &v)| match k {
                NormalComponent::Zero => 0.0,
                NormalComponent::NonPos => v.min(0.0),
            }),
        ))
    }

    pub fn distance(&self, w: &Vector) -> f64 {
        match self.project(w) {
            None => f64::INFINITY,
            Some(p) => (w - p).norm(),
        }
    }
}

/// An active set: the nonnegative coordinates pinned to zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Face {
    active: Vec<usize>,
}

impl Face {
    pub fn new(mut active: Vec<usize>) -> Self {
        active.sort_unstable();
        active.dedup();
        Face { active }
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active.binary_search(&i).is_ok()
    }

    /// Coordinates left free to move on this face, in increasing order.
    pub fn equality_indices(&self, dim: usize) -> Vec<usize> {
        (0..dim).filter(|&i| !self.is_active(i)).collect()
    }

    /// The face whose sign pattern `y` realizes.
    pub fn of_point(spec: &ConeSpec, y: &Vector, tol: f64) -> Face {
        Face::new(
            spec.nonneg_indices()
                .into_iter()
                .filter(|&i| y[i].abs() <= tol)
                .collect(),
        )
    }

    /// Whether `y` lies in the relative interior of this face.
    pub fn matches(&self, spec: &ConeSpec, y: &Vector, tol: f64) -> bool {
        spec.nonneg_indices().into_iter().all(|i| {
            if self.is_active(i) {
                y[i].abs() <= tol
            } else {
                y[i] > tol
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn pp() -> ConeSpec {
        "PP".parse().unwrap()
    }

    #[test]
    fn membership() {
        assert!(pp().in_cone(&v(&[1.0, 0.0]), 0.0));
        assert!(!pp().in_cone(&v(&[-1.0, 1.0]), 0.0));
        let fp: ConeSpec = "FP".parse().unwrap();
        assert!(fp.in_cone(&v(&[-5.0, 0.0]), 0.0));
    }

    #[test]
    fn normal_cone_patterns() {
        let n = pp().normal_cone_at(&v(&[0.0, 1.0]), ACTIVITY_TOL);
        assert_eq!(
            n.components.unwrap(),
            vec![NormalComponent::NonPos, NormalComponent::Zero]
        );
        let ffpp: ConeSpec = "FFPP".parse().unwrap();
        let n = ffpp.normal_cone_at(&v(&[0.3, -0.2, 0.0, 0.5]), ACTIVITY_TOL);
        assert_eq!(
            n.components.unwrap(),
            vec![
                NormalComponent::Zero,
                NormalComponent::Zero,
                NormalComponent::NonPos,
                NormalComponent::Zero
            ]
        );
        assert!(pp().normal_cone_at(&v(&[-1.0, 0.0]), ACTIVITY_TOL).is_empty());
    }

    #[test]
    fn normal_cone_membership() {
        let c = pp();
        assert!(c.in_normal_cone(&v(&[0.0, 1.0]), &v(&[-3.0, 0.0]), 0.0));
        assert!(c.in_normal_cone(&v(&[1.0, 1.0]), &v(&[0.0, 0.0]), 0.0));
        assert!(!c.in_normal_cone(&v(&[1.0, 1.0]), &v(&[0.0, -0.1]), 0.0));
        assert!(!c.in_normal_cone(&v(&[-1.0, 1.0]), &v(&[0.0, 0.0]), 0.0));
    }

    #[test]
    fn residuals() {
        let c = pp();
        assert_eq!(c.inclusion_residual(&v(&[2f64.sqrt(), 0.0]), &v(&[0.0, 2.0])), 0.0);
        assert!((c.inclusion_residual(&v(&[1.0, 1.0]), &v(&[0.3, 0.0])) - 0.3).abs() < 1e-15);
        assert_eq!(
            c.inclusion_residual(&v(&[-1.0, 0.0]), &v(&[0.0, 0.0])),
            f64::INFINITY
        );
    }

    #[test]
    fn face_enumeration() {
        let f = pp().faces().unwrap();
        let act: Vec<&[usize]> = f.iter().map(|f| f.active()).collect();
        assert_eq!(act, vec![&[][..], &[0][..], &[1][..], &[0, 1][..]]);
        assert_eq!(ConeSpec::free(2).faces().unwrap().len(), 1);
        assert_eq!("FP".parse::<ConeSpec>().unwrap().faces().unwrap().len(), 2);
        let big = ConeSpec::nonneg(21);
        assert_eq!(
            big.faces(),
            Err(Error::EnumerationLimit {
                count: 21,
                limit: 20
            })
        );
    }

    #[test]
    fn cone_string_round_trip() {
        let c: ConeSpec = "FFPP".parse().unwrap();
        assert_eq!(c.to_string(), "FFPP");
        assert!("FXP".parse::<ConeSpec>().is_err());
    }
}
