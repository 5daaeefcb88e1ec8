//! Dense raster with a per-pixel validity mask.
//!
//! Used for every image-like quantity: guide channels, sparse depth input,
//! ground truth and solver outputs. Values under a false mask bit are
//! ignored by all consumers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrid<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
    valid: Vec<bool>,
}

impl<T: Scalar> DepthGrid<T> {
    /// All-invalid grid with zeroed data.
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimension { height, width });
        }
        if !matches!(channels, 1 | 3) {
            return Err(Error::InvalidParameter(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
            valid: vec![false; height * width],
        })
    }

    /// Builds a grid from raw parts. Non-finite data under a true mask bit
    /// is rejected.
    pub fn from_parts(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<T>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let mut grid = Self::new(height, width, channels)?;
        if data.len() != height * width * channels || valid.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{channels} grid needs {} values and {} mask bits, got {} and {}",
                height * width * channels,
                height * width,
                data.len(),
                valid.len()
            )));
        }
        for (i, &v) in valid.iter().enumerate() {
            if v && data[i * channels..(i + 1) * channels].iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!(
                    "pixel {i} is marked valid but holds a non-finite value"
                )));
            }
        }
        grid.data = data;
        grid.valid = valid;
        Ok(grid)
    }

    /// Single-channel grid, fully valid.
    pub fn from_values(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Self::from_parts(height, width, 1, values, vec![true; n])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> Option<T>,
    ) -> Result<Self> {
        let mut grid = Self::new(height, width, 1)?;
        for row in 0..height {
            for col in 0..width {
                if let Some(v) = f(row, col) {
                    grid.set(row, col, v);
                }
            }
        }
        Ok(grid)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.valid[index]
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// All channels of one pixel.
    pub fn pixel(&self, index: usize) -> &[T] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    /// First channel of a pixel, `None` when invalid.
    pub fn value(&self, index: usize) -> Option<T> {
        self.valid[index].then(|| self.data[index * self.channels])
    }

    pub fn get(&self, row: usize, col: usize) -> Option<T> {
        self.value(self.index(row, col))
    }

    /// Writes a single-channel value and marks the pixel valid.
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        let i = self.index(row, col);
        self.set_index(i, value);
    }

    pub fn set_index(&mut self, index: usize, value: T) {
        for c in 0..self.channels {
            self.data[index * self.channels + c] = value;
        }
        self.valid[index] = true;
    }

    pub fn set_pixel(&mut self, index: usize, values: &[T]) {
        assert_eq!(values.len(), self.channels, "channel count mismatch");
        self.data[index * self.channels..(index + 1) * self.channels].copy_from_slice(values);
        self.valid[index] = true;
    }

    pub fn invalidate(&mut self, index: usize) {
        self.valid[index] = false;
    }

    /// Indices of valid pixels in row-major order.
    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.valid
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
    }

    pub fn ensure_same_shape<U: Scalar>(&self, other: &DepthGrid<U>, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.height,
                self.width,
                other.height(),
                other.width()
            )));
        }
        Ok(())
    }

    /// Converts every value to another scalar type.
    pub fn cast<U: Scalar>(&self) -> DepthGrid<U> {
        DepthGrid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64(v.to_f64_lossy()).unwrap_or_else(U::nan))
                .collect(),
            valid: self.valid.clone(),
        }
    }

    /// Per-pixel channel mean, as a single-channel grid.
    pub fn to_luma(&self) -> DepthGrid<T> {
        let n = T::lit(self.channels as f64);
        let data = (0..self.len())
            .map(|i| self.pixel(i).iter().copied().sum::<T>() / n)
            .collect();
        DepthGrid {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
            valid: self.valid.clone(),
        }
    }
}
