//! Persistent primitive set with a spatial index over the means.

use nalgebra::Vector3;

use crate::gaussian::GaussianPrimitive;
use crate::refine::Refinable;
use crate::spatial::SpatialHash;

/// A primitive plus whether it carries mass from the frame being ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredPrimitive {
    pub primitive: GaussianPrimitive,
    pub fresh: bool,
}

impl Refinable for StoredPrimitive {
    fn primitive(&self) -> &GaussianPrimitive {
        &self.primitive
    }

    fn absorb(&mut self, other: &Self) {
        self.primitive.absorb(&other.primitive);
        self.fresh |= other.fresh;
    }
}

#[derive(Debug, Clone)]
pub struct PrimitiveStore {
    pub items: Vec<StoredPrimitive>,
    means: Vec<Vector3<f64>>,
    index: SpatialHash,
}

impl PrimitiveStore {
    pub fn new(cell_size: f64) -> Self {
        Self {
            items: Vec::new(),
            means: Vec::new(),
            index: SpatialHash::new(cell_size),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn primitives(&self) -> impl Iterator<Item = &GaussianPrimitive> {
        self.items.iter().map(|s| &s.primitive)
    }

    /// Rebuilds the mean index after the item list changed.
    pub fn reindex(&mut self) {
        self.means = self.items.iter().map(|s| s.primitive.mean()).collect();
        self.index = SpatialHash::build(self.index.cell_size(), &self.means);
    }

    /// Indices of primitives whose mean is within `radius` of `q`.
    pub fn within(&self, q: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.index.within(&self.means, q, radius, &mut out);
        out
    }
}
