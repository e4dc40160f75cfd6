//! IDX container (the MNIST file format): big-endian header, then raw bytes.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use super::{LabeledDataset, ValueRange};
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8], origin: &Path) -> Result<IdxImages> {
    let mut cur = Cursor::new(bytes);
    let trunc = |_| Error::format(origin, "truncated header");
    let magic = cur.read_u32::<BigEndian>().map_err(trunc)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(origin, format!("bad image magic {magic:#010x}")));
    }
    let count = cur.read_u32::<BigEndian>().map_err(trunc)? as usize;
    let rows = cur.read_u32::<BigEndian>().map_err(trunc)? as usize;
    let cols = cur.read_u32::<BigEndian>().map_err(trunc)? as usize;
    let need = count * rows * cols;
    let mut pixels = Vec::with_capacity(need);
    cur.take(need as u64).read_to_end(&mut pixels)?;
    if pixels.len() != need {
        return Err(Error::format(
            origin,
            format!("truncated: expected {need} pixel bytes, found {}", pixels.len()),
        ));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8], origin: &Path) -> Result<Vec<u8>> {
    let mut cur = Cursor::new(bytes);
    let trunc = |_| Error::format(origin, "truncated header");
    let magic = cur.read_u32::<BigEndian>().map_err(trunc)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(origin, format!("bad label magic {magic:#010x}")));
    }
    let count = cur.read_u32::<BigEndian>().map_err(trunc)? as usize;
    let labels = bytes[8..].to_vec();
    if labels.len() < count {
        return Err(Error::format(
            origin,
            format!("truncated: expected {count} labels, found {}", labels.len()),
        ));
    }
    Ok(labels[..count].to_vec())
}

fn assemble(images: IdxImages, labels: Vec<u8>, origin: &Path) -> Result<LabeledDataset> {
    if images.count != labels.len() {
        return Err(Error::format(
            origin,
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    LabeledDataset::new(
        vec![1, images.rows, images.cols],
        images.pixels.iter().map(|&p| p as f64).collect(),
        labels.iter().map(|&l| l as usize).collect(),
        classes,
        ValueRange { lo: 0.0, hi: 255.0 },
    )
}

/// Reads an image/label file pair. Pixels stay in `[0, 255]`; all instances land in the train split.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let img = parse_idx_images(&fs::read(images)?, images)?;
    let lab = parse_idx_labels(&fs::read(labels)?, labels)?;
    assemble(img, lab, labels)
}

/// Joins a train pair and a test pair into one dataset with the matching split.
pub fn load_idx_split(
    train_images: &Path,
    train_labels: &Path,
    test_images: &Path,
    test_labels: &Path,
) -> Result<LabeledDataset> {
    let train = (
        parse_idx_images(&fs::read(train_images)?, train_images)?,
        parse_idx_labels(&fs::read(train_labels)?, train_labels)?,
    );
    let test = (
        parse_idx_images(&fs::read(test_images)?, test_images)?,
        parse_idx_labels(&fs::read(test_labels)?, test_labels)?,
    );
    join(train, test, test_images)
}

fn join(train: (IdxImages, Vec<u8>), test: (IdxImages, Vec<u8>), origin: &Path) -> Result<LabeledDataset> {
    let (mut img, mut lab) = train;
    let (timg, tlab) = test;
    if (timg.rows, timg.cols) != (img.rows, img.cols) {
        return Err(Error::format(origin, "train and test image sizes differ"));
    }
    let n_train = img.count;
    img.count += timg.count;
    img.pixels.extend_from_slice(&timg.pixels);
    lab.extend_from_slice(&tlab);
    let ds = assemble(img, lab, origin)?;
    let n = ds.len();
    ds.with_split((0..n_train).collect(), (n_train..n).collect())
}

/// 8x8 handwritten digits (1797 images, 10 classes) shipped with the crate as IDX files:
/// 1197 train and 600 test instances, pixels in `[0, 255]`.
pub fn bundled_digits() -> Result<LabeledDataset> {
    const TRAIN_IMAGES: &[u8] = include_bytes!("../../data/digits-train-images.idx3-ubyte");
    const TRAIN_LABELS: &[u8] = include_bytes!("../../data/digits-train-labels.idx1-ubyte");
    const TEST_IMAGES: &[u8] = include_bytes!("../../data/digits-test-images.idx3-ubyte");
    const TEST_LABELS: &[u8] = include_bytes!("../../data/digits-test-labels.idx1-ubyte");
    let origin = Path::new("<bundled digits>");
    join(
        (
            parse_idx_images(TRAIN_IMAGES, origin)?,
            parse_idx_labels(TRAIN_LABELS, origin)?,
        ),
        (
            parse_idx_images(TEST_IMAGES, origin)?,
            parse_idx_labels(TEST_LABELS, origin)?,
        ),
        origin,
    )
}
