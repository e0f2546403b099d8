use std::marker::PhantomData;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{images_to_tensor, LabeledSample};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// One mini-batch: images as `[N, 1, S, S]`, class indices, and positions in the split.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Iterator over mini-batches of a split; the final batch may be partial.
pub struct BatchIter<'a, T> {
    samples: &'a [LabeledSample],
    order: Vec<usize>,
    batch_size: usize,
    position: usize,
    _scalar: PhantomData<T>,
}

/// Batches `samples` in split order, or in a permutation drawn from `shuffle_seed`.
pub fn batch_iter<T: Scalar>(
    samples: &[LabeledSample],
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<BatchIter<'_, T>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let Some(first) = samples.first() else {
        return Err(Error::Dataset("cannot batch an empty split".into()));
    };
    if samples.iter().any(|s| !s.image.same_dims(&first.image)) {
        return Err(Error::Dataset("split mixes image sizes; resize before batching".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(BatchIter {
        samples,
        order,
        batch_size,
        position: 0,
        _scalar: PhantomData,
    })
}

impl<T: Scalar> Iterator for BatchIter<'_, T> {
    type Item = Batch<T>;

    fn next(&mut self) -> Option<Batch<T>> {
        if self.position >= self.order.len() {
            return None;
        }
        let end = (self.position + self.batch_size).min(self.order.len());
        let indices = self.order[self.position..end].to_vec();
        self.position = end;
        let images =
            images_to_tensor(indices.iter().map(|&i| &self.samples[i].image)).expect("sizes validated at construction");
        let labels = indices.iter().map(|&i| self.samples[i].label.index()).collect();
        Some(Batch {
            images,
            labels,
            indices,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.position).div_ceil(self.batch_size);
        (left, Some(left))
    }
}
