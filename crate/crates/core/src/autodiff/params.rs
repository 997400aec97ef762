use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Weight,
    Bias,
}

/// A named, contiguous slice of the flat parameter array holding one weight
/// matrix (row-major, `rows = fan_in`, `cols = fan_out`) or one bias row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    /// Index of the layer the block belongs to; a bias shares its weight's index.
    pub layer: usize,
    pub offset: usize,
    pub shape: (usize, usize),
    pub kind: BlockKind,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All trainable reals of a network with their layer/name partition.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    partition: Vec<ParamBlock>,
}

impl ParameterVector {
    /// Fails unless the partition tiles `[0, values.len())` in order, with no gaps or overlaps.
    pub fn new(values: Vec<f64>, partition: Vec<ParamBlock>) -> Result<Self> {
        let mut cursor = 0;
        for block in &partition {
            if block.offset != cursor {
                return Err(Error::Shape(format!(
                    "block {} starts at {} but previous blocks end at {cursor}",
                    block.name, block.offset
                )));
            }
            cursor += block.len();
        }
        if cursor != values.len() {
            return Err(Error::Shape(format!("partition covers {cursor} entries, vector has {}", values.len())));
        }
        Ok(Self { values, partition })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn partition(&self) -> &[ParamBlock] {
        &self.partition
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.partition.iter().find(|b| b.name == name)
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.block(name).map(|b| &self.values[b.range()])
    }

    pub fn slice_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.block(name)?.range();
        Some(&mut self.values[range])
    }

    /// Same blocks laid out in the order given by `order` (indices into the partition).
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.partition.len()];
        for &i in order {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Shape("block order is not a permutation".into()));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Shape("block order is not a permutation".into()));
        }
        let mut values = Vec::with_capacity(self.values.len());
        let mut partition = Vec::with_capacity(order.len());
        for &i in order {
            let b = &self.partition[i];
            partition.push(ParamBlock { offset: values.len(), ..b.clone() });
            values.extend_from_slice(&self.values[b.range()]);
        }
        Self::new(values, partition)
    }
}
