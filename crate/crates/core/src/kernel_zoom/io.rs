//! Array exchange: a little-endian flat buffer (`.bin`) next to a JSON
//! header (`.json`). Masked symbol entries are stored as NaN.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Lattice, SymbolFamily, C64};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Axes {
    pub t: Vec<f64>,
    pub x: Vec<usize>,
    pub eta: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ArrayHeader {
    pub shape: Vec<usize>,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Axes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<u32>>,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

pub fn write_f64(stem: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    let (bin, json) = paths(stem);
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(bin, bytes)?;
    let header = ArrayHeader { shape: shape.to_vec(), dtype: "float64".into(), axes: None, weight: None, weights: None };
    fs::write(json, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_f64(stem: &Path) -> Result<(ArrayHeader, Vec<f64>)> {
    let (bin, json) = paths(stem);
    let header: ArrayHeader = serde_json::from_str(&fs::read_to_string(json)?)?;
    let bytes = fs::read(bin)?;
    if header.dtype != "float64" || bytes.len() != 8 * header.shape.iter().product::<usize>() {
        return Err(Error::Malformed("array header does not match the buffer".into()));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, data))
}

pub fn write_family(stem: &Path, s: &SymbolFamily) -> Result<()> {
    let (bin, json) = paths(stem);
    let mut bytes = Vec::with_capacity(16 * s.values().len());
    for (v, m) in s.values().iter().zip(s.mask()) {
        let v = if *m { *v } else { C64::new(f64::NAN, f64::NAN) };
        bytes.extend(v.re.to_le_bytes());
        bytes.extend(v.im.to_le_bytes());
    }
    fs::write(bin, bytes)?;
    let lat = s.lattice();
    let mut shape = vec![s.nt()];
    shape.extend(&lat.gx);
    shape.extend(&lat.geta);
    let header = ArrayHeader {
        shape,
        dtype: "complex128".into(),
        axes: Some(Axes { t: s.t_grid().to_vec(), x: lat.gx.clone(), eta: lat.geta.clone() }),
        weight: Some(s.weight()),
        weights: Some(s.orders().to_vec()),
    };
    fs::write(json, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_family(stem: &Path) -> Result<SymbolFamily> {
    let (bin, json) = paths(stem);
    let header: ArrayHeader = serde_json::from_str(&fs::read_to_string(json)?)?;
    let axes = header.axes.ok_or_else(|| Error::Malformed("symbol header lacks axes".into()))?;
    let bytes = fs::read(bin)?;
    let values: Vec<C64> = bytes
        .chunks_exact(16)
        .map(|c| C64::new(f64::from_le_bytes(c[..8].try_into().unwrap()), f64::from_le_bytes(c[8..].try_into().unwrap())))
        .collect();
    let mask = values.iter().map(|v| !v.re.is_nan()).collect();
    let orders = header.weights.unwrap_or_else(|| vec![1; axes.x.len()]);
    SymbolFamily::new(Lattice::new(axes.x, axes.eta)?, orders, axes.t, header.weight.unwrap_or(0.0), values, mask)
}

#[cfg(test)]
mod tests {
    use super::super::dyadic_t_grid;
    use super::*;

    #[test]
    fn family_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lat = Lattice::torus(1, 4, 8).unwrap();
        let s = SymbolFamily::from_fn(lat, vec![1], dyadic_t_grid(1, 1), 1.5, |x, e, t| {
            C64::new(x[0] + e[0] as f64, t)
        })
        .unwrap()
        .zoom_pullback(2.0)
        .unwrap();
        let stem = dir.path().join("fam");
        write_family(&stem, &s).unwrap();
        assert_eq!(read_family(&stem).unwrap(), s);
        write_f64(&dir.path().join("arr"), &[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(read_f64(&dir.path().join("arr")).unwrap().1, vec![1.0, 2.0, 3.0, 4.0]);
    }
}
