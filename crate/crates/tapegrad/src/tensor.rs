//! Dense row-major f64 tensor values.
//!
//! `Tensor` is a plain value: shape plus a flat buffer. Gradient bookkeeping
//! lives on the tape, not here, so tensors can be cloned, stored and shared
//! freely between graphs.

use crate::error::Error;

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and a flat row-major buffer.
    ///
    /// # Errors
    /// Returns a shape error when `data.len()` does not equal the shape's
    /// element count.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, Error> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Invalid {
                op: "tensor",
                msg: format!("shape {:?} holds {} elements, buffer has {}", shape, numel, data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; numel] }
    }

    /// Constant-filled tensor of the given shape.
    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; numel] }
    }

    /// Rank-0-like scalar, stored as shape `[1]`.
    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    /// 2-D convenience constructor from nested rows.
    ///
    /// # Errors
    /// Returns a shape error when rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, Error> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Invalid { op: "tensor", msg: "ragged rows".to_string() });
            }
            data.extend_from_slice(row);
        }
        Tensor::from_vec(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Scalar value of a single-element tensor.
    ///
    /// # Panics
    /// Panics when the tensor holds more than one element.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row-major strides for this shape.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }
}

/// Row-major strides of a shape; empty shapes get an empty stride vector.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Broadcast result shape of two operand shapes.
///
/// Shapes are right-aligned; each pair of sizes must match or one of them be 1.
/// The shorter shape is treated as if padded with leading 1s.
///
/// # Errors
/// Returns a shape error for incompatible dimension pairs.
pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>, Error> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        if da == db || da == 1 || db == 1 {
            out[i] = da.max(db);
        } else {
            return Err(Error::ShapeMismatch { op, lhs: a.to_vec(), rhs: b.to_vec() });
        }
    }
    Ok(out)
}

/// Maps a flat index in the broadcast output to a flat index in an operand.
///
/// `out_shape` strides are walked digit by digit; operand dimensions of size 1
/// contribute stride 0, which is what realizes the broadcast.
pub struct BroadcastMap {
    out_strides: Vec<usize>,
    in_strides: Vec<usize>,
}

impl BroadcastMap {
    pub fn new(out_shape: &[usize], in_shape: &[usize]) -> Self {
        let rank = out_shape.len();
        let out_strides = strides_of(out_shape);
        let real = strides_of(in_shape);
        let mut in_strides = vec![0usize; rank];
        for i in 0..rank {
            if i + in_shape.len() >= rank {
                let j = i + in_shape.len() - rank;
                in_strides[i] = if in_shape[j] == 1 { 0 } else { real[j] };
            }
        }
        Self { out_strides, in_strides }
    }

    /// Operand flat index corresponding to an output flat index.
    #[inline]
    pub fn map(&self, mut flat: usize) -> usize {
        let mut idx = 0usize;
        for (os, is) in self.out_strides.iter().zip(&self.in_strides) {
            let digit = flat / os;
            flat %= os;
            idx += digit * is;
        }
        idx
    }

    /// True when the mapping is the identity (shapes equal, no broadcast).
    pub fn is_identity(&self) -> bool {
        self.out_strides == self.in_strides
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_len() {
        assert!(Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn strides_are_row_major() {
        assert_eq!(strides_of(&[2, 3, 4]), vec![12, 4, 1]);
        assert_eq!(strides_of(&[5]), vec![1]);
    }

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape("t", &[2, 3], &[2, 3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shape("t", &[3], &[2, 3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shape("t", &[2, 1], &[2, 3]).unwrap(), vec![2, 3]);
        assert!(broadcast_shape("t", &[2, 2], &[2, 3]).is_err());
    }

    #[test]
    fn broadcast_map_row_bias() {
        // [3] broadcast over [2,3]: flat output index 4 -> row 1, col 1 -> operand index 1.
        let m = BroadcastMap::new(&[2, 3], &[3]);
        assert_eq!(m.map(4), 1);
        assert_eq!(m.map(5), 2);
        assert!(!m.is_identity());
    }

    #[test]
    fn broadcast_map_col_bias() {
        // [2,1] broadcast over [2,3]: output (1,2) = flat 5 -> operand index 1.
        let m = BroadcastMap::new(&[2, 3], &[2, 1]);
        assert_eq!(m.map(5), 1);
        assert_eq!(m.map(2), 0);
    }
}
