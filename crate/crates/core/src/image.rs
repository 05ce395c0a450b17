//! Square 8-bit grayscale images, the value type every transformation acts on.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("data length {len} does not match {width}x{height}")]
    DataLength { width: u32, height: u32, len: usize },
    #[error("images must be square, got {width}x{height}")]
    NotSquare { width: u32, height: u32 },
}

/// Row-major grayscale pixel buffer. Always square; equality is bit-exact.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Image {
    side: u32,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if width != height {
            return Err(ImageError::NotSquare { width, height });
        }
        if data.len() != (width as usize) * (height as usize) {
            return Err(ImageError::DataLength {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self { side: width, data })
    }

    pub fn filled(side: u32, value: u8) -> Self {
        Self {
            side,
            data: vec![value; (side * side) as usize],
        }
    }

    pub fn zeros(side: u32) -> Self {
        Self::filled(side, 0)
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(side: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut data = Vec::with_capacity((side * side) as usize);
        for r in 0..side {
            for c in 0..side {
                data.push(f(r, c));
            }
        }
        Self { side, data }
    }

    pub fn side(&self) -> u32 {
        self.side
    }

    pub fn width(&self) -> u32 {
        self.side
    }

    pub fn height(&self) -> u32 {
        self.side
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> u8 {
        self.data[(row * self.side + col) as usize]
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32, value: u8) {
        self.data[(row * self.side + col) as usize] = value;
    }

    pub fn row(&self, row: u32) -> &[u8] {
        let s = self.side as usize;
        let start = row as usize * s;
        &self.data[start..start + s]
    }
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Image({}x{})", self.side, self.side)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_square() {
        assert_eq!(
            Image::new(2, 3, vec![0; 6]),
            Err(ImageError::NotSquare {
                width: 2,
                height: 3
            })
        );
    }

    #[test]
    fn rejects_bad_length() {
        assert!(matches!(
            Image::new(2, 2, vec![0; 3]),
            Err(ImageError::DataLength { len: 3, .. })
        ));
    }

    #[test]
    fn get_set_roundtrip() {
        let mut img = Image::zeros(3);
        img.set(1, 2, 77);
        assert_eq!(img.get(1, 2), 77);
        assert_eq!(img.data()[5], 77);
    }
}
