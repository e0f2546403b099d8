//! Images, labelled OCT datasets, noise corruption and batching.

mod batch;
mod imaging;
mod ingest;
mod synthetic;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use batch::{batch_iter, Batch, BatchIter};
pub use imaging::{corrupt, images_to_tensor, load_image, resize_to, save_image, Image};
pub use ingest::{ingest_directory, CarveSpec, IngestOptions};
pub use synthetic::{make_synthetic, render_sample};

/// Retinal condition of an OCT scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Normal,
    Drusen,
    Dme,
    Cnv,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 4] = [ClassLabel::Normal, ClassLabel::Drusen, ClassLabel::Dme, ClassLabel::Cnv];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Folder name used by the public dataset layout.
    pub fn dir_name(self) -> &'static str {
        match self {
            ClassLabel::Normal => "NORMAL",
            ClassLabel::Drusen => "DRUSEN",
            ClassLabel::Dme => "DME",
            ClassLabel::Cnv => "CNV",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.dir_name() == s)
            .ok_or_else(|| Error::Dataset(format!("unknown class name {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub image: Image,
    pub label: ClassLabel,
    pub source_path: Option<PathBuf>,
}

/// Train/validation/test partition of labelled samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledDataset {
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

impl LabeledDataset {
    pub fn split(&self, split: Split) -> &[LabeledSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<LabeledSample> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    /// `(train, val, test)` sample counts.
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }

    /// Per-class sample counts of one split, indexed by [`ClassLabel::index`].
    pub fn histogram(&self, split: Split) -> [usize; ClassLabel::COUNT] {
        let mut counts = [0; ClassLabel::COUNT];
        for s in self.split(split) {
            counts[s.label.index()] += 1;
        }
        counts
    }

    /// Common square image size, if every sample shares one.
    pub fn image_size(&self) -> Option<usize> {
        let mut sizes = Split::ALL
            .iter()
            .flat_map(|&s| self.split(s))
            .map(|s| (s.image.height(), s.image.width()));
        let first = sizes.next()?;
        (first.0 == first.1 && sizes.all(|d| d == first)).then_some(first.0)
    }

    /// Resamples every image to `size x size`.
    pub fn resized(mut self, size: usize) -> Self {
        for split in Split::ALL {
            for s in self.split_mut(split).iter_mut() {
                s.image = resize_to(&s.image, size);
            }
        }
        self
    }
}
