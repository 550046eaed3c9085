//! JSON encoding of complex matrices as nested `[re, im]` arrays.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::CMat;

pub fn to_nested(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|col| [m[(r, col)].re, m[(r, col)].im]).collect())
        .collect()
}

pub fn from_nested(rows: &[Vec<[f64; 2]>]) -> Result<CMat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidArgument("ragged matrix".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| Complex64::new(rows[r][c][0], rows[r][c][1])))
}

pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
    to_nested(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
    let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
    from_nested(&rows).map_err(serde::de::Error::custom)
}

pub fn to_json(m: &CMat) -> serde_json::Value {
    serde_json::to_value(to_nested(m)).expect("finite matrix serialises")
}
