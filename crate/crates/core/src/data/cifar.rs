//! CIFAR-10 binary batches.
//!
//! Each record is 3073 bytes: one label byte followed by 3072 pixel bytes,
//! channel-planar R, G, B, each plane row-major 32x32.

use std::fs;
use std::io::{BufReader, ErrorKind, Read};
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::ImageShape;

pub const CIFAR_RECORD_BYTES: usize = 3073;
const PIXELS: usize = 3072;
const SHAPE: ImageShape = ImageShape::new(3, 32, 32);

pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Serializes one record.
pub fn encode_cifar_record(label: u8, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), PIXELS, "a CIFAR-10 record holds 3072 pixel bytes");
    let mut rec = Vec::with_capacity(CIFAR_RECORD_BYTES);
    rec.push(label);
    rec.extend_from_slice(pixels);
    rec
}

/// Batch files under `path`: the file itself, or the directory's
/// `data_batch_*.bin` files (any `*.bin` if none), sorted by name.
fn batch_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, 0, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut bins: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, 0, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    bins.sort();
    let data: Vec<PathBuf> = bins
        .iter()
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("data_batch_"))
        })
        .cloned()
        .collect();
    let files = if data.is_empty() { bins } else { data };
    if files.is_empty() {
        return Err(Error::Data(format!("no .bin batch files in {}", path.display())));
    }
    Ok(files)
}

/// Loads the first `n_per_class` images of each class, pixels scaled to `[0, 1]`.
///
/// Samples are grouped by class, each class in file order.
pub fn load_cifar10(path: impl AsRef<Path>, n_per_class: usize) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidConfig("n_per_class must be >= 1".into()));
    }
    let mut per_class: Vec<Vec<Vec<u8>>> = vec![Vec::new(); 10];
    'files: for file in batch_files(path.as_ref())? {
        let f = fs::File::open(&file).map_err(|e| Error::io(&file, 0, e))?;
        let mut reader = BufReader::new(f);
        let mut offset = 0u64;
        let mut rec = vec![0u8; CIFAR_RECORD_BYTES];
        loop {
            if per_class.iter().all(|c| c.len() >= n_per_class) {
                break 'files;
            }
            match read_record(&mut reader, &mut rec) {
                Ok(0) => break,
                Ok(n) if n == CIFAR_RECORD_BYTES => {}
                Ok(n) => {
                    return Err(Error::io(
                        &file,
                        offset,
                        std::io::Error::new(
                            ErrorKind::UnexpectedEof,
                            format!("truncated record: {n} of {CIFAR_RECORD_BYTES} bytes"),
                        ),
                    ))
                }
                Err(e) => return Err(Error::io(&file, offset, e)),
            }
            let label = rec[0];
            if label > 9 {
                return Err(Error::Format {
                    path: file.clone(),
                    offset,
                    msg: format!("label byte {label} outside 0..=9"),
                });
            }
            let bucket = &mut per_class[label as usize];
            if bucket.len() < n_per_class {
                bucket.push(rec[1..].to_vec());
            }
            offset += CIFAR_RECORD_BYTES as u64;
        }
    }
    if let Some((class, got)) = per_class
        .iter()
        .enumerate()
        .find(|(_, c)| c.len() < n_per_class)
        .map(|(i, c)| (i, c.len()))
    {
        return Err(Error::Data(format!(
            "class {class} has {got} samples, {n_per_class} requested"
        )));
    }
    let mut images = Vec::with_capacity(10 * n_per_class * PIXELS);
    let mut labels = Vec::with_capacity(10 * n_per_class);
    for (label, class) in per_class.iter().enumerate() {
        for pixels in class {
            images.extend(pixels.iter().map(|&b| b as f32 / 255.0));
            labels.push(label as u16);
        }
    }
    Dataset::new(
        SHAPE,
        images,
        labels,
        CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Fills `buf` as far as the stream allows; returns the byte count.
fn read_record(reader: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}
