use crate::encoding::CenterCornerKey;
use crate::error::{Error, Result};
use crate::tensor::{Mat, Scalar};

/// One part's block of rows in a token stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    /// Row of the ID table used for this slot; 0 is the global branch.
    pub part_id: usize,
    pub start: usize,
    pub len: usize,
    /// False for zero-padding slots.
    pub real: bool,
}

impl Slot {
    pub fn rows(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Slot boundaries (and optional per-row position keys) of a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamLayout {
    pub slots: Vec<Slot>,
    pub keys: Option<Vec<CenterCornerKey>>,
}

impl StreamLayout {
    /// `mask.len()` slots of `m` rows each with ids `0..`; `mask[i]` marks real slots.
    pub fn uniform(m: usize, mask: &[bool]) -> Self {
        let slots = mask
            .iter()
            .enumerate()
            .map(|(i, &real)| Slot {
                part_id: i,
                start: i * m,
                len: m,
                real,
            })
            .collect();
        StreamLayout { slots, keys: None }
    }

    /// Consecutive slots with the given `(part_id, len)` pairs, all real.
    pub fn from_lengths(parts: &[(usize, usize)]) -> Self {
        let mut start = 0;
        let slots = parts
            .iter()
            .map(|&(part_id, len)| {
                let s = Slot {
                    part_id,
                    start,
                    len,
                    real: true,
                };
                start += len;
                s
            })
            .collect();
        StreamLayout { slots, keys: None }
    }

    pub fn with_keys(mut self, keys: Vec<CenterCornerKey>) -> Self {
        self.keys = Some(keys);
        self
    }

    pub fn rows(&self) -> usize {
        self.slots.last().map_or(0, |s| s.start + s.len)
    }

    /// Per-row flag: whether the row belongs to a real slot.
    pub fn real_rows(&self) -> Vec<bool> {
        let mut out = vec![false; self.rows()];
        for s in &self.slots {
            for r in s.rows() {
                out[r] = s.real;
            }
        }
        out
    }

    pub fn slot_of_part(&self, part_id: usize) -> Option<&Slot> {
        self.slots.iter().find(|s| s.part_id == part_id)
    }

    /// Checks that the slots partition `rows` rows contiguously and that the
    /// keys (if any) cover every row.
    pub fn validate(&self, rows: usize, kmax: usize) -> Result<()> {
        let mut next = 0;
        for s in &self.slots {
            if s.start != next || s.len == 0 {
                return Err(Error::Shape(format!(
                    "slot for part {} starts at {} (expected {next}) with {} rows",
                    s.part_id, s.start, s.len
                )));
            }
            if s.part_id > kmax {
                return Err(Error::OutOfRange(format!(
                    "part id {} exceeds capacity {kmax}",
                    s.part_id
                )));
            }
            next += s.len;
        }
        if next != rows {
            return Err(Error::Shape(format!(
                "slots cover {next} rows but the stream has {rows}"
            )));
        }
        if let Some(k) = &self.keys {
            if k.len() != rows {
                return Err(Error::Shape(format!("{} keys for {rows} rows", k.len())));
            }
        }
        Ok(())
    }
}

/// Diffusion state: token payload rows plus their slot structure.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStream<T> {
    pub x: Mat<T>,
    pub layout: StreamLayout,
}

impl<T: Scalar> TokenStream<T> {
    pub fn slot_rows(&self, slot: usize) -> Mat<T> {
        let s = self.layout.slots[slot];
        self.x.rows_slice(s.start, s.start + s.len)
    }
}

/// Condition passed to the model: embedded payload rows or the learned null rows.
#[derive(Debug, Clone, Copy)]
pub enum CondInput<'a, T> {
    Tokens(&'a Mat<T>),
    Null,
}
