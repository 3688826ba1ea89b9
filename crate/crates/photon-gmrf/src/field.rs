//! Dense frame stacks (rows x cols x frames) and the per-pixel side data
//! attached to an acquisition: detector efficiency and the validity mask.
//!
//! Storage is a single flat buffer, row-major within a frame, frames
//! outermost: `idx = (t * rows + i) * cols + j`.  All indices are 0-based.

use crate::error::{Error, Result};

/// Grid dimensions of a frame stack.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Dims {
    pub rows: usize,
    pub cols: usize,
    pub frames: usize,
}

impl Dims {
    pub fn new(rows: usize, cols: usize, frames: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || frames == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got {rows}x{cols}x{frames}"
            )));
        }
        Ok(Dims { rows, cols, frames })
    }

    /// Total number of sites.
    pub fn len(&self) -> usize {
        self.rows * self.cols * self.frames
    }

    pub fn is_empty(&self) -> bool {
        false // dimensions are validated positive
    }

    /// Sites in one frame.
    pub fn frame_len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline(always)]
    pub fn index(&self, i: usize, j: usize, t: usize) -> usize {
        debug_assert!(i < self.rows && j < self.cols && t < self.frames);
        (t * self.rows + i) * self.cols + j
    }

    /// Inverse of `index`.
    #[inline(always)]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        debug_assert!(idx < self.len());
        let j = idx % self.cols;
        let rest = idx / self.cols;
        let i = rest % self.rows;
        let t = rest / self.rows;
        (i, j, t)
    }
}

/// A dense stack of image frames holding one `f64` per site.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStack {
    dims: Dims,
    data: Vec<f64>,
}

impl FrameStack {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "buffer holds {} values but dimensions {}x{}x{} need {}",
                data.len(),
                dims.rows,
                dims.cols,
                dims.frames,
                dims.len()
            )));
        }
        Ok(FrameStack { dims, data })
    }

    /// A stack with every site set to `value`.
    pub fn filled(dims: Dims, value: f64) -> Self {
        FrameStack { dims, data: vec![value; dims.len()] }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline(always)]
    pub fn get(&self, i: usize, j: usize, t: usize) -> f64 {
        self.data[self.dims.index(i, j, t)]
    }

    #[inline(always)]
    pub fn set(&mut self, i: usize, j: usize, t: usize, v: f64) {
        let idx = self.dims.index(i, j, t);
        self.data[idx] = v;
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

    /// Arithmetic mean over all sites.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Errors unless every value is finite and strictly positive.
    pub fn validate_positive(&self, name: &str) -> Result<()> {
        for (idx, &v) in self.data.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                let (i, j, t) = self.dims.unindex(idx);
                return Err(Error::DataValidation(format!(
                    "{name} must be finite and positive; entry (row {i}, col {j}, frame {t}) is {v}"
                )));
            }
        }
        Ok(())
    }

    /// Errors unless every value is finite and non-negative.
    pub fn validate_non_negative(&self, name: &str) -> Result<()> {
        for (idx, &v) in self.data.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                let (i, j, t) = self.dims.unindex(idx);
                return Err(Error::DataValidation(format!(
                    "{name} must be finite and non-negative; entry (row {i}, col {j}, frame {t}) is {v}"
                )));
            }
        }
        Ok(())
    }

    /// Errors unless every value is exactly 0.0 or 1.0, naming the first
    /// offending site.
    pub fn validate_binary(&self, name: &str) -> Result<()> {
        for (idx, &v) in self.data.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                let (i, j, t) = self.dims.unindex(idx);
                return Err(Error::DataValidation(format!(
                    "{name} must be binary (0 or 1); entry (row {i}, col {j}, frame {t}) is {v}"
                )));
            }
        }
        Ok(())
    }

    /// Errors unless every value is a non-negative integer (stored as f64).
    pub fn validate_counts(&self, name: &str) -> Result<()> {
        for (idx, &v) in self.data.iter().enumerate() {
            if !v.is_finite() || v < 0.0 || v.fract() != 0.0 {
                let (i, j, t) = self.dims.unindex(idx);
                return Err(Error::DataValidation(format!(
                    "{name} must hold non-negative integer counts; entry (row {i}, col {j}, frame {t}) is {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-pixel detector efficiency, shared by every frame.  Values are finite
/// and strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyMap {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl EfficiencyMap {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "efficiency map dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "efficiency map holds {} values but needs {}",
                data.len(),
                rows * cols
            )));
        }
        for (idx, &v) in data.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::DataValidation(format!(
                    "efficiency must be finite and positive; entry (row {}, col {}) is {v}",
                    idx / cols,
                    idx % cols
                )));
            }
        }
        Ok(EfficiencyMap { rows, cols, data })
    }

    /// Unit efficiency everywhere.
    pub fn uniform(rows: usize, cols: usize) -> Result<Self> {
        EfficiencyMap::new(rows, cols, vec![1.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline(always)]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// The efficiency map as a single-frame stack (for file output).
    pub fn to_stack(&self) -> FrameStack {
        FrameStack { dims: Dims { rows: self.rows, cols: self.cols, frames: 1 }, data: self.data.clone() }
    }
}

/// Per-site validity mask: 1 marks an operational detector, 0 a faulty one.
/// Faulty sites carry no information about the scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    bits: FrameStack,
}

impl Mask {
    pub fn new(bits: FrameStack) -> Result<Self> {
        bits.validate_binary("mask")?;
        Ok(Mask { bits })
    }

    /// All sites valid.
    pub fn all_valid(dims: Dims) -> Self {
        Mask { bits: FrameStack::filled(dims, 1.0) }
    }

    pub fn dims(&self) -> Dims {
        self.bits.dims()
    }

    #[inline(always)]
    pub fn valid(&self, i: usize, j: usize, t: usize) -> bool {
        self.bits.get(i, j, t) != 0.0
    }

    pub fn as_stack(&self) -> &FrameStack {
        &self.bits
    }

    /// Fraction of sites marked faulty.
    pub fn faulty_fraction(&self) -> f64 {
        let n = self.bits.data().len();
        let faulty = self.bits.data().iter().filter(|&&v| v == 0.0).count();
        faulty as f64 / n as f64
    }
}
