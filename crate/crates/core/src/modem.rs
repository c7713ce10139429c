//! OTFS modulation with a rectangular pulse and one cyclic prefix per block.

use crate::ddcore::{DdBlock, DdGrid, DdTransform, C64};
use crate::error::{check_len, Error, Result};

/// One transmitted block in the time domain, cyclic prefix included.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBlock {
    pub samples: Vec<C64>,
    pub cp_len: usize,
    pub block_index: u64,
}

impl TimeBlock {
    /// The `M·N` samples after the cyclic prefix.
    pub fn body(&self) -> &[C64] {
        &self.samples[self.cp_len.min(self.samples.len())..]
    }

    /// Wrap a bare body, prepending its last `cp_len` samples.
    pub fn with_prefix(body: Vec<C64>, cp_len: usize, block_index: u64) -> Result<Self> {
        if cp_len > body.len() {
            return Err(Error::Config(format!(
                "cyclic prefix {cp_len} longer than block {}",
                body.len()
            )));
        }
        let mut samples = Vec::with_capacity(body.len() + cp_len);
        samples.extend_from_slice(&body[body.len() - cp_len..]);
        samples.extend_from_slice(&body);
        Ok(Self {
            samples,
            cp_len,
            block_index,
        })
    }
}

/// `⌈τ_max⌉ + 1` samples, with `τ_max` in sample units.
pub fn default_cp_len(tau_max_samples: f64) -> usize {
    tau_max_samples.max(0.0).ceil() as usize + 1
}

/// Reusable modulator holding planned transforms.
#[derive(Debug, Clone)]
pub struct OtfsModem {
    grid: DdGrid,
    transform: DdTransform,
    cp_len: usize,
}

impl OtfsModem {
    pub fn new(grid: &DdGrid, cp_len: usize) -> Result<Self> {
        if cp_len > grid.len() {
            return Err(Error::Config(format!(
                "cyclic prefix {cp_len} longer than block {}",
                grid.len()
            )));
        }
        Ok(Self {
            grid: *grid,
            transform: DdTransform::new(grid),
            cp_len,
        })
    }

    pub fn grid(&self) -> &DdGrid {
        &self.grid
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len
    }

    pub fn transform(&self) -> &DdTransform {
        &self.transform
    }

    pub fn modulate(&self, dd_block: &DdBlock, block_index: u64) -> Result<TimeBlock> {
        if dd_block.rows() != self.grid.m() || dd_block.cols() != self.grid.n() {
            return Err(Error::Dimension {
                expected: self.grid.len(),
                got: dd_block.rows() * dd_block.cols(),
            });
        }
        let mut body = dd_block.as_vec().to_vec();
        self.transform.isfft_in_place(&mut body);
        TimeBlock::with_prefix(body, self.cp_len, block_index)
    }

    pub fn demodulate(&self, received: &TimeBlock) -> Result<DdBlock> {
        check_len(self.grid.len() + received.cp_len, received.samples.len())?;
        self.demodulate_body(received.body())
    }

    /// Demodulate an already CP-stripped block.
    pub fn demodulate_body(&self, body: &[C64]) -> Result<DdBlock> {
        check_len(self.grid.len(), body.len())?;
        let mut y = body.to_vec();
        self.transform.sfft_in_place(&mut y);
        DdBlock::from_vec(&self.grid, y)
    }
}

pub fn modulate(dd_block: &DdBlock, grid: &DdGrid, cp_len: usize, block_index: u64) -> Result<TimeBlock> {
    OtfsModem::new(grid, cp_len)?.modulate(dd_block, block_index)
}

pub fn demodulate(received: &TimeBlock, grid: &DdGrid) -> Result<DdBlock> {
    OtfsModem::new(grid, received.cp_len.min(grid.len()))?.demodulate(received)
}
