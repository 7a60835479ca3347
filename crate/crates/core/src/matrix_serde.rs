//! Row-major nested-array (de)serialization for `DMatrix<f64>`.

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    to_rows(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(d)?;
    from_rows(&rows).map_err(D::Error::custom)
}

pub mod list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        all.iter()
            .map(|rows| from_rows(rows).map_err(D::Error::custom))
            .collect()
    }
}

pub mod map {
    use super::*;
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        ms: &BTreeMap<String, DMatrix<f64>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        ms.iter()
            .map(|(k, m)| (k.clone(), to_rows(m)))
            .collect::<BTreeMap<_, _>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<String, DMatrix<f64>>, D::Error> {
        let all = BTreeMap::<String, Vec<Vec<f64>>>::deserialize(d)?;
        all.into_iter()
            .map(|(k, rows)| Ok((k, from_rows(&rows).map_err(D::Error::custom)?)))
            .collect()
    }
}
