use crate::error::{Error, Result};

/// Disjoint cover of the state space by nonempty blocks ("mega-states").
///
/// Stored both ways: the block of every state, and the member list of every
/// block (ascending state order).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    block_of: Vec<usize>,
    offsets: Vec<usize>,
    members: Vec<usize>,
}

impl Partition {
    /// Build from per-state block labels, which must use every label in `0..K`.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::BadPartition("no states".into()));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; k];
        for &b in &labels {
            counts[b] += 1;
        }
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(Error::BadPartition(format!("block {j} is empty")));
        }
        let mut offsets = Vec::with_capacity(k + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let mut fill = offsets[..k].to_vec();
        let mut members = vec![0; labels.len()];
        for (s, &b) in labels.iter().enumerate() {
            members[fill[b]] = s;
            fill[b] += 1;
        }
        Ok(Partition { block_of: labels, offsets, members })
    }

    /// Build from explicit blocks over `0..num_states`.
    pub fn from_blocks(num_states: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; num_states];
        for (j, block) in blocks.iter().enumerate() {
            for &s in block {
                if s >= num_states {
                    return Err(Error::BadPartition(format!("state {s} out of range")));
                }
                if labels[s] != usize::MAX {
                    return Err(Error::BadPartition(format!("state {s} is in two blocks")));
                }
                labels[s] = j;
            }
        }
        if let Some(s) = labels.iter().position(|&b| b == usize::MAX) {
            return Err(Error::BadPartition(format!("state {s} is not covered")));
        }
        Self::from_labels(labels)
    }

    /// Every state in its own block.
    pub fn identity(num_states: usize) -> Self {
        Self::from_labels((0..num_states).collect()).expect("nonempty identity partition")
    }

    /// One block holding every state.
    pub fn single(num_states: usize) -> Self {
        Self::from_labels(vec![0; num_states]).expect("nonempty single partition")
    }

    pub fn num_states(&self) -> usize {
        self.block_of.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn block_of(&self, s: usize) -> usize {
        self.block_of[s]
    }

    pub fn labels(&self) -> &[usize] {
        &self.block_of
    }

    #[inline]
    pub fn members(&self, j: usize) -> &[usize] {
        &self.members[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.num_blocks()).map(move |j| self.members(j))
    }
}

/// Aggregated cost-to-go, one entry per block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AggValues(pub Vec<f64>);

impl AggValues {
    pub fn zeros(k: usize) -> Self {
        AggValues(vec![0.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for AggValues {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}
