use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of replicated input images tiled across the plane.
pub const REPLICAS: usize = 16;
/// Blocks per side of the replica tiling.
pub const BLOCK_GRID: usize = 4;

/// Shape of every register plane and of the replica tiling on it.
///
/// The plane is a `block_grid × block_grid` row-major grid of square blocks,
/// each holding one replica of the network input. Block `b` covers rows
/// `block_size·(b / grid) ..` and columns `block_size·(b % grid) ..`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlaneGeometry {
    height: usize,
    width: usize,
    block_grid: usize,
    block_size: usize,
}

impl Default for PlaneGeometry {
    fn default() -> Self {
        Self {
            height: 256,
            width: 256,
            block_grid: BLOCK_GRID,
            block_size: 64,
        }
    }
}

impl PlaneGeometry {
    /// Square plane tiled by a `block_grid²` grid of `block_size` blocks.
    ///
    /// `block_grid` must be 4 (sixteen replicas) and `block_size` must be a
    /// positive even number so 2×2 pooling cells never straddle a block.
    pub fn new(block_grid: usize, block_size: usize) -> Result<Self> {
        if block_grid * block_grid != REPLICAS {
            return Err(Error::Geometry(format!(
                "block grid {block_grid} does not give {REPLICAS} replicas"
            )));
        }
        if block_size < 2 || block_size % 2 != 0 {
            return Err(Error::Geometry(format!(
                "block size {block_size} must be even and at least 2"
            )));
        }
        let side = block_grid * block_size;
        Ok(Self {
            height: side,
            width: side,
            block_grid,
            block_size,
        })
    }

    /// Geometry with the default grid and the given block size.
    pub fn with_block_size(block_size: usize) -> Result<Self> {
        Self::new(BLOCK_GRID, block_size)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn block_grid(&self) -> usize {
        self.block_grid
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn num_blocks(&self) -> usize {
        self.block_grid * self.block_grid
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Side of the pooled feature map inside one block.
    pub fn pooled_size(&self) -> usize {
        self.block_size / 2
    }

    /// Number of pooled features per class weight vector.
    pub fn features(&self) -> usize {
        self.num_blocks() * self.pooled_size() * self.pooled_size()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Block index `grid·(row / block_size) + col / block_size`.
    #[inline]
    pub fn block_of(&self, row: usize, col: usize) -> usize {
        self.block_grid * (row / self.block_size) + col / self.block_size
    }

    /// Top-left pixel of block `b`.
    pub fn block_origin(&self, block: usize) -> (usize, usize) {
        (
            (block / self.block_grid) * self.block_size,
            (block % self.block_grid) * self.block_size,
        )
    }

    pub fn check_same(&self, other: &PlaneGeometry) -> Result<()> {
        if self != other {
            return Err(Error::Geometry(format!("{self} does not match {other}")));
        }
        Ok(())
    }

    pub fn check_image(&self, height: usize, width: usize) -> Result<()> {
        if height != self.height || width != self.width {
            return Err(Error::Geometry(format!(
                "image is {height}x{width}, plane is {}x{}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for PlaneGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{} (grid {}, block {})",
            self.height, self.width, self.block_grid, self.block_size
        )
    }
}
