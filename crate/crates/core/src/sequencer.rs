//! Multi-directional scanning of token grids and its averaging inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Real};

/// A 2-D grid of `C`-dimensional tokens at one hierarchy.
///
/// Tokens are stored token-major (`[H·W × C]`, cell `(i, j)` at row
/// `i·W + j`); [`TokenGrid::to_channel_major`] gives the `[C × H × W]`
/// layout used on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenGrid<T> {
    tokens: Matrix<T>,
    height: usize,
    width: usize,
    /// Hierarchy index `h`.
    pub hierarchy: usize,
    /// Pixels per token cell along each axis (`N^h`); 0 when unknown.
    pub downsample: usize,
}

impl<T: Real> TokenGrid<T> {
    pub fn new(tokens: Matrix<T>, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || tokens.cols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "token grid must be non-empty, got {height}×{width}×{}",
                tokens.cols()
            )));
        }
        if tokens.rows() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} tokens cannot fill a {height}×{width} grid",
                tokens.rows()
            )));
        }
        Ok(Self {
            tokens,
            height,
            width,
            hierarchy: 0,
            downsample: 0,
        })
    }

    pub fn with_hierarchy(mut self, hierarchy: usize, downsample: usize) -> Self {
        self.hierarchy = hierarchy;
        self.downsample = downsample;
        self
    }

    pub fn from_channel_major(channels: usize, height: usize, width: usize, data: &[T]) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {channels}×{height}×{width} grid",
                data.len()
            )));
        }
        let cells = height * width;
        let tokens = Matrix::from_fn(cells, channels, |cell, c| data[c * cells + cell]);
        Self::new(tokens, height, width)
    }

    pub fn to_channel_major(&self) -> Vec<T> {
        let cells = self.cells();
        let mut out = vec![T::zero(); cells * self.channels()];
        for cell in 0..cells {
            for (c, &v) in self.tokens.row(cell).iter().enumerate() {
                out[c * cells + cell] = v;
            }
        }
        out
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.tokens.cols()
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn tokens(&self) -> &Matrix<T> {
        &self.tokens
    }

    pub fn into_tokens(self) -> Matrix<T> {
        self.tokens
    }

    /// Token `c` of cell `(i, j)`.
    pub fn get(&self, c: usize, i: usize, j: usize) -> T {
        self.tokens.get(i * self.width + j, c)
    }

    pub fn cast<U: Real>(&self) -> TokenGrid<U> {
        TokenGrid {
            tokens: self.tokens.cast(),
            height: self.height,
            width: self.width,
            hierarchy: self.hierarchy,
            downsample: self.downsample,
        }
    }
}

/// The four unfold orders. Reversed directions are exact reversals of their
/// forward counterparts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScanDirection {
    /// k = 1, row-major from the top-left cell.
    RowForward,
    /// k = 2, row-major from the bottom-right cell.
    RowReverse,
    /// k = 3, column-major from the top-left cell.
    ColumnForward,
    /// k = 4, column-major from the bottom-right cell.
    ColumnReverse,
}

impl ScanDirection {
    pub const ALL: [ScanDirection; 4] = [
        ScanDirection::RowForward,
        ScanDirection::RowReverse,
        ScanDirection::ColumnForward,
        ScanDirection::ColumnReverse,
    ];

    /// 1-based direction index `k`.
    pub fn k(self) -> usize {
        match self {
            ScanDirection::RowForward => 1,
            ScanDirection::RowReverse => 2,
            ScanDirection::ColumnForward => 3,
            ScanDirection::ColumnReverse => 4,
        }
    }

    pub fn is_row_major(self) -> bool {
        matches!(self, ScanDirection::RowForward | ScanDirection::RowReverse)
    }

    /// Cell indices (`i·W + j`) in visiting order.
    pub fn order(self, height: usize, width: usize) -> Vec<usize> {
        let mut order = Vec::with_capacity(height * width);
        if self.is_row_major() {
            for i in 0..height {
                for j in 0..width {
                    order.push(i * width + j);
                }
            }
        } else {
            for j in 0..width {
                for i in 0..height {
                    order.push(i * width + j);
                }
            }
        }
        if matches!(self, ScanDirection::RowReverse | ScanDirection::ColumnReverse) {
            order.reverse();
        }
        order
    }
}

/// One directional token sequence of one hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence<T> {
    /// `[L × C]`
    pub tokens: Matrix<T>,
    pub direction: ScanDirection,
    pub hierarchy: usize,
    /// Number of nearest preceding tokens excluded from the context (`M`).
    pub offset_m: usize,
}

impl<T: Real> TokenSequence<T> {
    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }
}

/// `M = m·W` for row-major directions, `m·H` for column-major ones.
pub fn offset_for_shape(height: usize, width: usize, direction: ScanDirection, m: usize) -> Result<usize> {
    if m == 0 {
        return Err(Error::InvalidArgument("prediction step m must be >= 1".into()));
    }
    let span = if direction.is_row_major() { width } else { height };
    let offset = m * span;
    let len = height * width;
    if offset >= len {
        return Err(Error::OffsetOutOfRange { offset, len });
    }
    Ok(offset)
}

pub fn offset_for<T: Real>(grid: &TokenGrid<T>, direction: ScanDirection, m: usize) -> Result<usize> {
    offset_for_shape(grid.height(), grid.width(), direction, m)
}

/// Rows of `tokens` taken in the given cell order.
pub fn gather<T: Real>(tokens: &Matrix<T>, order: &[usize]) -> Matrix<T> {
    let mut out = Matrix::zeros(order.len(), tokens.cols());
    for (l, &cell) in order.iter().enumerate() {
        out.row_mut(l).copy_from_slice(tokens.row(cell));
    }
    out
}

/// Unfolds a grid into its four directional sequences. The offsets are left
/// at 0; see [`mds_with_offset`].
pub fn mds<T: Real>(grid: &TokenGrid<T>) -> [TokenSequence<T>; 4] {
    ScanDirection::ALL.map(|direction| TokenSequence {
        tokens: gather(grid.tokens(), &direction.order(grid.height(), grid.width())),
        direction,
        hierarchy: grid.hierarchy,
        offset_m: 0,
    })
}

/// [`mds`] with each sequence's `M` set from the prediction step `m`.
pub fn mds_with_offset<T: Real>(grid: &TokenGrid<T>, m: usize) -> Result<[TokenSequence<T>; 4]> {
    let mut seqs = mds(grid);
    for seq in seqs.iter_mut() {
        seq.offset_m = offset_for(grid, seq.direction, m)?;
    }
    Ok(seqs)
}

/// Scatters each direction's sequence back to its grid cells and averages
/// the four grids with equal weights.
pub fn mds_inverse<T: Real>(predicted: [&Matrix<T>; 4], height: usize, width: usize) -> Result<TokenGrid<T>> {
    let cells = height * width;
    let channels = predicted[0].cols();
    for (seq, direction) in predicted.iter().zip(ScanDirection::ALL) {
        if seq.rows() != cells || seq.cols() != channels {
            return Err(Error::ShapeMismatch(format!(
                "direction k={} has shape {:?}, expected {:?}",
                direction.k(),
                seq.shape(),
                (cells, channels)
            )));
        }
    }
    let unfolded: Vec<Matrix<T>> = predicted
        .iter()
        .zip(ScanDirection::ALL)
        .map(|(seq, direction)| {
            let mut grid = Matrix::zeros(cells, channels);
            for (l, cell) in direction.order(height, width).into_iter().enumerate() {
                grid.row_mut(cell).copy_from_slice(seq.row(l));
            }
            grid
        })
        .collect();
    let quarter = T::lit(0.25);
    let mut mean = Matrix::zeros(cells, channels);
    for (i, out) in mean.as_mut_slice().iter_mut().enumerate() {
        // Pairwise so that four identical inputs reproduce the input exactly.
        let a = unfolded[0].as_slice()[i] + unfolded[1].as_slice()[i];
        let b = unfolded[2].as_slice()[i] + unfolded[3].as_slice()[i];
        *out = (a + b) * quarter;
    }
    TokenGrid::new(mean, height, width)
}
