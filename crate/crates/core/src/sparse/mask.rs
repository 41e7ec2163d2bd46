use std::sync::Arc;

use super::LayerLayout;
use crate::{Error, Result};

/// Packed binary mask over a layout's flat weight vector.
///
/// `active_per_layer()[j]` always equals the popcount of the bits inside
/// layer `j`; every constructor and mutator below keeps the two in sync.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    words: Vec<u64>,
    layout: Arc<LayerLayout>,
    active: Vec<usize>,
}

impl Mask {
    pub fn full(layout: Arc<LayerLayout>) -> Self {
        let total = layout.total();
        let mut words = vec![u64::MAX; total.div_ceil(64)];
        if !total.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << (total % 64)) - 1;
            }
        }
        let active = layout.counts();
        Self {
            words,
            layout,
            active,
        }
    }

    pub fn empty(layout: Arc<LayerLayout>) -> Self {
        let words = vec![0; layout.total().div_ceil(64)];
        let active = vec![0; layout.num_layers()];
        Self {
            words,
            layout,
            active,
        }
    }

    pub fn from_bits(layout: Arc<LayerLayout>, bits: &[bool]) -> Result<Self> {
        if bits.len() != layout.total() {
            return Err(Error::Argument(format!(
                "mask has {} bits but layout holds {} weights",
                bits.len(),
                layout.total()
            )));
        }
        Self::from_indices(
            layout,
            bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i),
        )
    }

    pub fn from_indices(
        layout: Arc<LayerLayout>,
        indices: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let mut mask = Self::empty(layout);
        for i in indices {
            if i >= mask.len() {
                return Err(Error::Argument(format!(
                    "mask index {i} out of range for {} weights",
                    mask.len()
                )));
            }
            mask.set(i);
        }
        Ok(mask)
    }

    pub(crate) fn from_words(layout: Arc<LayerLayout>, words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len(), layout.total().div_ceil(64));
        let mut mask = Self {
            words,
            active: vec![0; layout.num_layers()],
            layout,
        };
        mask.recount();
        mask
    }

    fn recount(&mut self) {
        let active = self
            .layout
            .layers()
            .iter()
            .map(|l| l.range().filter(|&i| self.get(i)).count())
            .collect();
        self.active = active;
    }

    pub fn layout(&self) -> &Arc<LayerLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.layout.total()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        (self.words[index / 64] >> (index % 64)) & 1 == 1
    }

    /// Sets bit `index`; returns whether it changed.
    pub(crate) fn set(&mut self, index: usize) -> bool {
        if self.get(index) {
            return false;
        }
        self.words[index / 64] |= 1 << (index % 64);
        let layer = self
            .layout
            .layer_of(index)
            .expect("index checked by caller");
        self.active[layer] += 1;
        true
    }

    /// Clears bit `index`; returns whether it changed.
    pub(crate) fn clear(&mut self, index: usize) -> bool {
        if !self.get(index) {
            return false;
        }
        self.words[index / 64] &= !(1 << (index % 64));
        let layer = self
            .layout
            .layer_of(index)
            .expect("index checked by caller");
        self.active[layer] -= 1;
        true
    }

    pub fn active_per_layer(&self) -> &[usize] {
        &self.active
    }

    pub fn total_active(&self) -> usize {
        self.active.iter().sum()
    }

    pub fn density(&self) -> f64 {
        self.total_active() as f64 / self.len() as f64
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Active flat indices of layer `layer`, ascending.
    pub fn active_in_layer(&self, layer: usize) -> impl Iterator<Item = usize> + '_ {
        self.layout.layers()[layer]
            .range()
            .filter(move |&i| self.get(i))
    }

    /// Inactive flat indices of layer `layer`, ascending.
    pub fn inactive_in_layer(&self, layer: usize) -> impl Iterator<Item = usize> + '_ {
        self.layout.layers()[layer]
            .range()
            .filter(move |&i| !self.get(i))
    }

    /// All active flat indices, ascending.
    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.get(i))
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    pub fn check_layout(&self, layout: &LayerLayout) -> Result<()> {
        if self.layout.as_ref() == layout {
            Ok(())
        } else {
            Err(Error::Argument(
                "mask layout does not match the parameter layout".into(),
            ))
        }
    }

    /// Number of positions where the two masks disagree.
    pub fn hamming(&self, other: &Mask) -> Result<usize> {
        other.check_layout(&self.layout)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// Flat indices set in `self` but not in `other`.
    pub fn difference(&self, other: &Mask) -> Result<Vec<usize>> {
        other.check_layout(&self.layout)?;
        Ok(self.active_indices().filter(|&i| !other.get(i)).collect())
    }
}
