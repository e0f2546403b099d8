use std::fs;
use std::path::{Path, PathBuf};

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{load_image, resize_to, ClassLabel, LabeledDataset, LabeledSample, Split};
use crate::error::{Error, Result};

/// Re-partitions every ingested sample into fresh validation and test splits.
///
/// The public OCT release ships `train/` and `test/` only; carving pools all
/// images, shuffles them with `seed`, takes `val` then `test` samples and
/// leaves the rest for training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CarveSpec {
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestOptions {
    /// Resample every image to `size x size` after loading.
    pub size: Option<usize>,
    pub carve: Option<CarveSpec>,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "jpg", "jpeg"];

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn is_image(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

fn read_split(dir: &Path, options: &IngestOptions) -> Result<Vec<LabeledSample>> {
    let mut seen = [false; ClassLabel::COUNT];
    let mut samples = Vec::new();
    for class_dir in sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()) {
        let name = class_dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let label: ClassLabel = name
            .parse()
            .map_err(|_| Error::Dataset(format!("unknown class directory {}", class_dir.display())))?;
        seen[label.index()] = true;
        for path in sorted_entries(&class_dir)? {
            if !is_image(&path) {
                debug!("skipping {}", path.display());
                continue;
            }
            let mut image = load_image(&path)?;
            if let Some(size) = options.size {
                image = resize_to(&image, size);
            }
            samples.push(LabeledSample {
                image,
                label,
                source_path: Some(path),
            });
        }
    }
    if let Some(missing) = ClassLabel::ALL.iter().find(|c| !seen[c.index()]) {
        return Err(Error::Dataset(format!(
            "missing class directory {}",
            dir.join(missing.dir_name()).display()
        )));
    }
    Ok(samples)
}

/// Reads `<root>/{train,val,test}/{NORMAL,DRUSEN,DME,CNV}/*` into a dataset.
///
/// Samples are ordered lexicographically by path within each split. Without
/// a [`CarveSpec`] all three split folders must exist and be non-empty; with
/// one, any subset of split folders is pooled and re-partitioned.
pub fn ingest_directory(root: impl AsRef<Path>, options: &IngestOptions) -> Result<LabeledDataset> {
    let root = root.as_ref();
    let mut found: Vec<(Split, PathBuf)> = Vec::new();
    for entry in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let name = entry.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        match Split::ALL.into_iter().find(|s| s.dir_name() == name) {
            Some(split) => found.push((split, entry)),
            None => return Err(Error::Dataset(format!("unknown split directory {}", entry.display()))),
        }
    }

    let mut dataset = LabeledDataset::default();
    match options.carve {
        None => {
            for split in Split::ALL {
                let Some((_, dir)) = found.iter().find(|(s, _)| *s == split) else {
                    return Err(Error::Dataset(format!(
                        "missing split directory {}",
                        root.join(split.dir_name()).display()
                    )));
                };
                let samples = read_split(dir, options)?;
                if samples.is_empty() {
                    return Err(Error::Dataset(format!("split {} is empty", dir.display())));
                }
                *dataset.split_mut(split) = samples;
            }
        }
        Some(carve) => {
            let mut pool = Vec::new();
            for (_, dir) in &found {
                pool.extend(read_split(dir, options)?);
            }
            if pool.len() <= carve.val + carve.test {
                return Err(Error::Dataset(format!(
                    "{} images cannot be carved into {} validation and {} test samples with a non-empty training split",
                    pool.len(),
                    carve.val,
                    carve.test
                )));
            }
            pool.sort_by(|a, b| a.source_path.cmp(&b.source_path));
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(carve.seed));
            let mut assigned: Vec<Option<Split>> = vec![None; pool.len()];
            for (rank, &i) in order.iter().enumerate() {
                assigned[i] = Some(if rank < carve.val {
                    Split::Val
                } else if rank < carve.val + carve.test {
                    Split::Test
                } else {
                    Split::Train
                });
            }
            for (sample, split) in pool.into_iter().zip(assigned) {
                dataset.split_mut(split.expect("every index assigned")).push(sample);
            }
            for split in Split::ALL {
                if dataset.split(split).is_empty() {
                    return Err(Error::Dataset(format!("carved split {} is empty", split.dir_name())));
                }
            }
        }
    }
    Ok(dataset)
}
