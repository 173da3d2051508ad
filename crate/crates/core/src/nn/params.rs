//! Flat, shape-annotated parameter vectors.
//!
//! A [`ParamSet`] is the unit every bias strategy produces and consumes: a
//! single flat `Vec<f64>` plus a table mapping named tensors to contiguous
//! ranges. Two sets are shape-compatible iff their tables are identical;
//! all arithmetic requires compatibility.

use std::path::Path;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::real::Real;

pub const PARAMSET_FORMAT: &str = "paramset-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    /// One entry for vectors, two (rows, cols) for matrices.
    pub dims: Vec<usize>,
}

impl TensorShape {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeTable {
    entries: Vec<TensorShape>,
}

impl ShapeTable {
    pub fn new(entries: Vec<TensorShape>) -> Self {
        ShapeTable { entries }
    }

    pub fn entries(&self) -> &[TensorShape] {
        &self.entries
    }

    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|e| e.len()).sum()
    }

    pub fn range(&self, name: &str) -> Option<(std::ops::Range<usize>, &TensorShape)> {
        let mut at = 0;
        for e in &self.entries {
            let len = e.len();
            if e.name == name {
                return Some((at..at + len, e));
            }
            at += len;
        }
        None
    }
}

/// Read-only typed view over a flat parameter buffer.
#[derive(Clone, Copy)]
pub struct ParamsView<'a, T> {
    table: &'a ShapeTable,
    data: &'a [T],
}

impl<'a, T: Real> ParamsView<'a, T> {
    pub fn new(table: &'a ShapeTable, data: &'a [T]) -> Self {
        debug_assert_eq!(table.total_len(), data.len());
        ParamsView { table, data }
    }

    pub fn table(&self) -> &'a ShapeTable {
        self.table
    }

    pub fn matrix(&self, name: &str) -> ArrayView2<'a, T> {
        let (range, shape) = self
            .table
            .range(name)
            .unwrap_or_else(|| panic!("no tensor named {name:?}"));
        assert_eq!(shape.dims.len(), 2, "{name:?} is not a matrix");
        ArrayView2::from_shape((shape.dims[0], shape.dims[1]), &self.data[range]).unwrap()
    }

    pub fn vector(&self, name: &str) -> ArrayView1<'a, T> {
        let (range, shape) = self
            .table
            .range(name)
            .unwrap_or_else(|| panic!("no tensor named {name:?}"));
        assert_eq!(shape.dims.len(), 1, "{name:?} is not a vector");
        ArrayView1::from_shape(shape.dims[0], &self.data[range]).unwrap()
    }
}

/// Mutable accumulation buffer with the same layout as a [`ParamSet`];
/// used to collect gradients.
pub struct GradBuf<T> {
    table: ShapeTable,
    data: Vec<T>,
}

impl<T: Real> GradBuf<T> {
    pub fn zeros(table: &ShapeTable) -> Self {
        GradBuf {
            table: table.clone(),
            data: vec![T::zero(); table.total_len()],
        }
    }

    pub fn matrix_mut(&mut self, name: &str) -> ArrayViewMut2<'_, T> {
        let (range, shape) = self
            .table
            .range(name)
            .map(|(r, s)| (r, s.clone()))
            .unwrap_or_else(|| panic!("no tensor named {name:?}"));
        assert_eq!(shape.dims.len(), 2);
        ArrayViewMut2::from_shape((shape.dims[0], shape.dims[1]), &mut self.data[range]).unwrap()
    }

    pub fn vector_mut(&mut self, name: &str) -> ArrayViewMut1<'_, T> {
        let (range, shape) = self
            .table
            .range(name)
            .map(|(r, s)| (r, s.clone()))
            .unwrap_or_else(|| panic!("no tensor named {name:?}"));
        assert_eq!(shape.dims.len(), 1);
        ArrayViewMut1::from_shape(shape.dims[0], &mut self.data[range]).unwrap()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn view(&self) -> ParamsView<'_, T> {
        ParamsView::new(&self.table, &self.data)
    }

    /// self += other, elementwise.
    pub fn accumulate(&mut self, other: &GradBuf<T>) {
        debug_assert_eq!(self.table, other.table);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in self.data.iter_mut() {
            *a = *a * s;
        }
    }
}

impl GradBuf<f64> {
    pub fn into_param_set(self) -> ParamSet {
        ParamSet {
            table: self.table,
            data: self.data,
        }
    }
}

/// Flat parameter vector with its shape table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    table: ShapeTable,
    data: Vec<f64>,
}

impl ParamSet {
    pub fn new(table: ShapeTable, data: Vec<f64>) -> Result<Self> {
        if table.total_len() != data.len() {
            return Err(Error::ShapeIncompatible(format!(
                "table length {} != data length {}",
                table.total_len(),
                data.len()
            )));
        }
        Ok(ParamSet { table, data })
    }

    pub fn zeros(table: ShapeTable) -> Self {
        let len = table.total_len();
        ParamSet {
            table,
            data: vec![0.0; len],
        }
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet::zeros(self.table.clone())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn table(&self) -> &ShapeTable {
        &self.table
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn view(&self) -> ParamsView<'_, f64> {
        ParamsView::new(&self.table, &self.data)
    }

    pub fn compatible(&self, other: &ParamSet) -> bool {
        self.table == other.table
    }

    pub fn require_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(Error::ShapeIncompatible(
                "shape tables differ".to_string(),
            ))
        }
    }

    /// self += scale * other.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) -> Result<()> {
        self.require_compatible(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Append a named vector tensor filled with a constant.
    pub fn append_vector(mut self, name: &str, len: usize, fill: f64) -> Self {
        self.table.entries.push(TensorShape {
            name: name.to_string(),
            dims: vec![len],
        });
        self.data.extend(std::iter::repeat(fill).take(len));
        self
    }

    /// Lift to dual numbers with derivative part seeded by `dir`
    /// (the direction of a Hessian-vector product).
    pub fn lift_dual(&self, dir: &ParamSet) -> Result<Vec<super::real::Dual>> {
        self.require_compatible(dir)?;
        Ok(self
            .data
            .iter()
            .zip(&dir.data)
            .map(|(&v, &d)| super::real::Dual::new(v, d))
            .collect())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ParamSetFile {
            format: PARAMSET_FORMAT.to_string(),
            shapes: self.table.entries.clone(),
            data: self.data.clone(),
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ParamSetFile = serde_json::from_str(&text)?;
        if file.format != PARAMSET_FORMAT {
            return Err(Error::InvalidConfig(format!(
                "unsupported parameter format {:?}",
                file.format
            )));
        }
        ParamSet::new(ShapeTable::new(file.shapes), file.data)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamSetFile {
    format: String,
    shapes: Vec<TensorShape>,
    data: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ShapeTable {
        ShapeTable::new(vec![
            TensorShape {
                name: "w".into(),
                dims: vec![2, 3],
            },
            TensorShape {
                name: "b".into(),
                dims: vec![3],
            },
        ])
    }

    #[test]
    fn ranges_are_disjoint_and_exhaustive() {
        let t = table();
        assert_eq!(t.total_len(), 9);
        let (rw, _) = t.range("w").unwrap();
        let (rb, _) = t.range("b").unwrap();
        assert_eq!(rw, 0..6);
        assert_eq!(rb, 6..9);
        assert!(t.range("nope").is_none());
    }

    #[test]
    fn views_and_arithmetic() {
        let mut p = ParamSet::new(table(), (0..9).map(|i| i as f64).collect()).unwrap();
        assert_eq!(p.view().matrix("w")[[1, 2]], 5.0);
        assert_eq!(p.view().vector("b")[0], 6.0);
        let q = p.clone();
        p.add_scaled(&q, 2.0).unwrap();
        assert_eq!(p.data()[4], 12.0);

        let other = ParamSet::zeros(ShapeTable::new(vec![TensorShape {
            name: "w".into(),
            dims: vec![3, 2],
        }]));
        assert!(p.add_scaled(&other, 1.0).is_err());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let p = ParamSet::new(
            table(),
            vec![
                0.1,
                -1.0 / 3.0,
                std::f64::consts::PI,
                1e-300,
                2.0f64.powi(-40),
                0.0,
                7.125,
                -0.0,
                42.0,
            ],
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        p.save_json(f.path()).unwrap();
        let q = ParamSet::load_json(f.path()).unwrap();
        assert_eq!(p.table(), q.table());
        for (a, b) in p.data().iter().zip(q.data()) {
            assert_eq!(a.to_bits(), b.to_bits(), "float not bit-exact");
        }
    }
}
