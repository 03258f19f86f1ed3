//! Serde helpers for nalgebra vectors, which are written as plain arrays.

use serde::ser::{SerializeSeq, Serializer};

use crate::multilinear::{PointSet, Vector};

pub fn vector<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

pub fn vectors<S: Serializer>(vs: &[Vector], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(vs.len()))?;
    for v in vs {
        seq.serialize_element(v.as_slice())?;
    }
    seq.end()
}

pub fn vector_pair<S: Serializer>(p: &Option<(Vector, Vector)>, s: S) -> Result<S::Ok, S::Error> {
    match p {
        None => s.serialize_none(),
        Some((a, b)) => s.collect_seq([a.as_slice(), b.as_slice()]),
    }
}

pub fn point_set<S: Serializer>(p: &PointSet, s: S) -> Result<S::Ok, S::Error> {
    vectors(p.points(), s)
}
