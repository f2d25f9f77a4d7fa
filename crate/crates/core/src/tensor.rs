//! Dense row-major tensors used as the oracle's value domain.
//!
//! Two serialized forms exist: a JSON object `{"shape": [...], "data": [...]}`
//! and a little-endian binary blob (`FBT1` magic, `u32` rank, `u64` dims,
//! `f64` payload) for large vectors.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_RANK: usize = 4;
const FBT_MAGIC: &[u8; 4] = b"FBT1";

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}: rank must be 1..=4 and every dimension >= 1")]
    InvalidShape(Vec<usize>),
    #[error("data length {actual} does not match shape element count {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("malformed tensor blob: {0}")]
    Blob(String),
}

/// Dimension tuple of a dense tensor, rank 1 through 4.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TensorShape(Vec<usize>);

impl TensorShape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self, TensorError> {
        let dims = dims.into();
        if dims.is_empty() || dims.len() > MAX_RANK || dims.contains(&0) {
            return Err(TensorError::InvalidShape(dims));
        }
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    pub fn last(&self) -> usize {
        *self.0.last().expect("rank >= 1")
    }
}

impl TryFrom<Vec<usize>> for TensorShape {
    type Error = TensorError;
    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<TensorShape> for Vec<usize> {
    fn from(s: TensorShape) -> Self {
        s.0
    }
}

impl fmt::Debug for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("×"))
    }
}

/// Shorthand for building shapes known to be valid.
#[macro_export]
macro_rules! shape {
    ($($d:expr),+ $(,)?) => {
        $crate::tensor::TensorShape::new(vec![$($d as usize),+]).expect("valid shape literal")
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct Tensor {
    shape: TensorShape,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: TensorShape,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = TensorError;
    fn try_from(raw: RawTensor) -> Result<Self, Self::Error> {
        Tensor::new(raw.shape, raw.data)
    }
}

impl Tensor {
    pub fn new(shape: TensorShape, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.numel() != data.len() {
            return Err(TensorError::LengthMismatch {
                expected: shape.numel(),
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: TensorShape) -> Self {
        let n = shape.numel();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: TensorShape, value: f64) -> Self {
        let n = shape.numel();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: TensorShape, mut f: impl FnMut(usize) -> f64) -> Self {
        let data = (0..shape.numel()).map(&mut f).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Same data viewed under another shape of equal element count.
    pub fn reshape(self, shape: TensorShape) -> Result<Self, TensorError> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_blob(&self) -> Vec<u8> {
        let dims = self.shape.dims();
        let mut out = Vec::with_capacity(8 + dims.len() * 8 + self.data.len() * 8);
        out.extend_from_slice(FBT_MAGIC);
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self, TensorError> {
        let blob_err = |m: &str| TensorError::Blob(m.to_string());
        if bytes.len() < 8 || &bytes[..4] != FBT_MAGIC {
            return Err(blob_err("missing FBT1 magic"));
        }
        let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(blob_err("rank out of range"));
        }
        let header = 8 + rank * 8;
        if bytes.len() < header {
            return Err(blob_err("truncated header"));
        }
        let dims: Vec<usize> = (0..rank)
            .map(|i| {
                let at = 8 + i * 8;
                u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize
            })
            .collect();
        let shape = TensorShape::new(dims)?;
        let payload = &bytes[header..];
        if payload.len() != shape.numel() * 8 {
            return Err(blob_err("payload length does not match shape"));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data)
    }
}
