//! Datasets: synthetic benchmark generation, folder ingestion with the
//! standard preprocessing, manifests and train/val splitting.

mod image_io;
mod manifest;
mod synth;

pub use image_io::{
    load_image, planar_to_interleaved, png_files, preprocess, quantize, read_png, write_png,
    RawImage, LUMA_B, LUMA_G, LUMA_R,
};
pub use manifest::{DatasetManifest, ManifestEntry, Role, Split};
pub use synth::{synth_generate, SynthSpec};

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Deterministic 80/20-style split: shuffle by seed, first floor(ratio * n)
/// items go to train.
pub fn split_train_val<T: Clone>(items: &[T], ratio: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = Rng::stream(seed, &[0x73706c69]);
    rng.shuffle(&mut order);
    let cut = (ratio * items.len() as f64).floor() as usize;
    let train = order[..cut].iter().map(|&i| items[i].clone()).collect();
    let val = order[cut..].iter().map(|&i| items[i].clone()).collect();
    (train, val)
}

/// A set of decoded images with their manifest metadata, stacked N x C x H x W.
pub struct ImageSet {
    pub paths: Vec<String>,
    pub roles: Vec<Role>,
    pub labels: Vec<u8>,
    pub images: Tensor<f32>,
    pub image_size: usize,
    pub channels: usize,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Copy rows [start, start+count) into a batch tensor.
    pub fn batch(&self, start: usize, count: usize) -> Tensor<f32> {
        let per = self.channels * self.image_size * self.image_size;
        let data = self.images.data()[start * per..(start + count) * per].to_vec();
        Tensor::from_vec(
            &[count, self.channels, self.image_size, self.image_size],
            data,
        )
        .expect("batch slice shape")
    }

    /// Copy the rows selected by `indices` into a batch tensor.
    pub fn gather(&self, indices: &[usize]) -> Tensor<f32> {
        let per = self.channels * self.image_size * self.image_size;
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
        }
        Tensor::from_vec(
            &[
                indices.len(),
                self.channels,
                self.image_size,
                self.image_size,
            ],
            data,
        )
        .expect("gather shape")
    }
}

/// Decode and preprocess the given manifest rows (in order) from `root`.
pub fn load_entries(
    root: &Path,
    entries: &[&ManifestEntry],
    image_size: usize,
    channels: usize,
) -> Result<ImageSet> {
    if entries.is_empty() {
        return Err(Error::Dataset("no entries to load".to_string()));
    }
    let per = channels * image_size * image_size;
    let mut data = vec![0f32; entries.len() * per];
    data.par_chunks_mut(per)
        .zip(entries.par_iter())
        .try_for_each(|(slot, entry)| -> Result<()> {
            let vals = load_image(&root.join(&entry.path), image_size, channels)?;
            slot.copy_from_slice(&vals);
            Ok(())
        })?;
    Ok(ImageSet {
        paths: entries.iter().map(|e| e.path.clone()).collect(),
        roles: entries.iter().map(|e| e.role).collect(),
        labels: entries.iter().map(|e| e.label).collect(),
        images: Tensor::from_vec(&[entries.len(), channels, image_size, image_size], data)?,
        image_size,
        channels,
    })
}

/// Load a bare folder of PNGs (no manifest): role defaults to the folder name
/// and labels are unknown (255).
pub fn load_folder(dir: &Path, image_size: usize, channels: usize) -> Result<ImageSet> {
    let files = png_files(dir)?;
    let per = channels * image_size * image_size;
    let mut data = vec![0f32; files.len() * per];
    data.par_chunks_mut(per)
        .zip(files.par_iter())
        .try_for_each(|(slot, path)| -> Result<()> {
            let vals = load_image(path, image_size, channels)?;
            slot.copy_from_slice(&vals);
            Ok(())
        })?;
    Ok(ImageSet {
        paths: files
            .iter()
            .map(|p| {
                p.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
        roles: vec![Role::Id; files.len()],
        labels: vec![255; files.len()],
        images: Tensor::from_vec(&[files.len(), channels, image_size, image_size], data)?,
        image_size,
        channels,
    })
}
