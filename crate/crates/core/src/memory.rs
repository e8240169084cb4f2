//! Scratch-memory accounting for operator forwards.
//!
//! Every working buffer a forward allocates is obtained from a
//! [`MemoryAccountant`], which tracks live bytes and their high-water mark.
//! Parameters and the input/output tensors are never charged.

use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct MemoryAccountant {
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl MemoryAccountant {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bytes currently charged.
    pub fn live(&self) -> usize {
        self.live.load(Ordering::Relaxed)
    }

    /// High-water mark of [`live`](Self::live) since creation or the last reset.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }

    pub fn reset_peak(&self) {
        self.peak.store(self.live(), Ordering::Relaxed);
    }

    /// Charges `bytes` until the returned guard is dropped.
    pub fn charge(&self, bytes: usize) -> Charge<'_> {
        let now = self.live.fetch_add(bytes, Ordering::Relaxed) + bytes;
        self.peak.fetch_max(now, Ordering::Relaxed);
        Charge { owner: self, bytes }
    }

    /// A zeroed, charged `f64` buffer of `len` elements.
    ///
    /// Allocation failure is reported as [`Error::Allocation`] rather than
    /// aborting, so a sweep can record it and move on.
    pub fn buffer(&self, len: usize) -> Result<Scratch<'_>> {
        let bytes = len.saturating_mul(std::mem::size_of::<f64>());
        let mut data = Vec::new();
        data.try_reserve_exact(len)
            .map_err(|_| Error::Allocation { bytes })?;
        data.resize(len, 0.0);
        Ok(Scratch {
            data,
            _charge: self.charge(bytes),
        })
    }
}

/// RAII guard for charged bytes.
#[derive(Debug)]
pub struct Charge<'a> {
    owner: &'a MemoryAccountant,
    bytes: usize,
}

impl Drop for Charge<'_> {
    fn drop(&mut self) {
        self.owner.live.fetch_sub(self.bytes, Ordering::Relaxed);
    }
}

/// A charged scratch buffer; derefs to `[f64]`.
#[derive(Debug)]
pub struct Scratch<'a> {
    data: Vec<f64>,
    _charge: Charge<'a>,
}

impl Deref for Scratch<'_> {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for Scratch<'_> {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Numerical events worth surfacing without failing the forward.
#[derive(Debug, Default)]
pub struct Diagnostics {
    small_denominators: AtomicUsize,
}

impl Diagnostics {
    /// Normalized-attention denominators that were clamped to the guard value.
    pub fn small_denominators(&self) -> usize {
        self.small_denominators.load(Ordering::Relaxed)
    }

    pub(crate) fn record_small_denominator(&self) {
        self.small_denominators.fetch_add(1, Ordering::Relaxed);
    }
}

/// Per-call context of a forward: memory accounting plus diagnostics.
#[derive(Debug, Default)]
pub struct Workspace {
    pub memory: MemoryAccountant,
    pub diagnostics: Diagnostics,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }
}
