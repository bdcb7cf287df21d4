//! IDX image/label files (the MNIST container format).
//!
//! Big-endian headers: magic 2051 for 3-dimensional u8 image tensors, 2049
//! for 1-dimensional u8 label vectors. Pixels load as f64 in [0,1] (÷255).

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

struct Counted<R> {
    inner: R,
    offset: u64,
    name: String,
}

impl<R: Read> Counted<R> {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) => Err(Error::Parse {
                source_name: self.name.clone(),
                offset: self.offset,
                detail: format!("expected {} more bytes: {e}", buf.len()),
            }),
        }
    }

    fn read_u32_be(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf)?;
        Ok(u32::from_be_bytes(buf))
    }

    fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Parse {
                source_name: self.name.clone(),
                offset: self.offset,
                detail: "trailing bytes after declared payload".to_string(),
            }),
            Err(e) => Err(Error::Parse {
                source_name: self.name.clone(),
                offset: self.offset,
                detail: e.to_string(),
            }),
        }
    }
}

fn open(path: &Path) -> Result<Counted<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(Counted { inner: BufReader::new(file), offset: 0, name: path.display().to_string() })
}

/// Loads an IDX image file as an n × (rows·cols) matrix scaled to [0,1].
pub fn read_idx_images(path: &Path) -> Result<Matrix> {
    let mut r = open(path)?;
    let magic = r.read_u32_be()?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Parse {
            source_name: r.name,
            offset: 0,
            detail: format!("magic {magic}, expected {IMAGE_MAGIC} (u8 images)"),
        });
    }
    let n = r.read_u32_be()? as usize;
    let rows = r.read_u32_be()? as usize;
    let cols = r.read_u32_be()? as usize;
    let pixels = rows * cols;
    if pixels == 0 {
        return Err(Error::Parse {
            source_name: r.name,
            offset: 8,
            detail: format!("degenerate image shape {rows}x{cols}"),
        });
    }
    let mut raw = vec![0u8; n * pixels];
    r.read_exact(&mut raw)?;
    r.expect_eof()?;
    let data: Vec<f64> = raw.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Matrix::from_vec(n, pixels, data))
}

/// Loads an IDX label file as raw class bytes.
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = open(path)?;
    let magic = r.read_u32_be()?;
    if magic != LABEL_MAGIC {
        return Err(Error::Parse {
            source_name: r.name,
            offset: 0,
            detail: format!("magic {magic}, expected {LABEL_MAGIC} (u8 labels)"),
        });
    }
    let n = r.read_u32_be()? as usize;
    let mut raw = vec![0u8; n];
    r.read_exact(&mut raw)?;
    r.expect_eof()?;
    Ok(raw)
}

/// Standard file names for one dataset directory (`mnist/` or
/// `fashion-mnist/` under the data root), uncompressed.
#[derive(Debug, Clone)]
pub struct IdxSplitPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

pub fn split_paths(data_dir: &Path, dataset: &str) -> IdxSplitPaths {
    let d = data_dir.join(dataset);
    IdxSplitPaths {
        train_images: d.join("train-images-idx3-ubyte"),
        train_labels: d.join("train-labels-idx1-ubyte"),
        test_images: d.join("t10k-images-idx3-ubyte"),
        test_labels: d.join("t10k-labels-idx1-ubyte"),
    }
}

/// Loads a full train/test split; label and image counts must agree.
pub fn load_split(data_dir: &Path, dataset: &str) -> Result<((Matrix, Vec<usize>), (Matrix, Vec<usize>))> {
    let paths = split_paths(data_dir, dataset);
    let load = |img: &Path, lab: &Path| -> Result<(Matrix, Vec<usize>)> {
        let images = read_idx_images(img)?;
        let labels = read_idx_labels(lab)?;
        if images.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{}: {} images but {} labels",
                img.display(),
                images.rows(),
                labels.len()
            )));
        }
        Ok((images, labels.into_iter().map(usize::from).collect()))
    };
    Ok((
        load(&paths.train_images, &paths.train_labels)?,
        load(&paths.test_images, &paths.test_labels)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_images(path: &Path, n: u32, rows: u32, cols: u32, pixels: &[u8]) {
        let mut f = File::create(path).unwrap();
        f.write_all(&IMAGE_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&n.to_be_bytes()).unwrap();
        f.write_all(&rows.to_be_bytes()).unwrap();
        f.write_all(&cols.to_be_bytes()).unwrap();
        f.write_all(pixels).unwrap();
    }

    fn write_labels(path: &Path, labels: &[u8]) {
        let mut f = File::create(path).unwrap();
        f.write_all(&LABEL_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
    }

    #[test]
    fn roundtrip_small_images() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs");
        write_images(&path, 2, 2, 3, &[0, 51, 102, 153, 204, 255, 255, 0, 255, 0, 255, 0]);
        let m = read_idx_images(&path).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 6));
        assert!((m.get(0, 1) - 0.2).abs() < 1e-12);
        assert_eq!(m.get(0, 5), 1.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert!(m.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn roundtrip_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels");
        write_labels(&path, &[3, 1, 4, 1, 5]);
        assert_eq!(read_idx_labels(&path).unwrap(), vec![3, 1, 4, 1, 5]);
    }

    #[test]
    fn wrong_magic_reports_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        let mut f = File::create(&path).unwrap();
        f.write_all(&1234u32.to_be_bytes()).unwrap();
        f.write_all(&0u32.to_be_bytes()).unwrap();
        drop(f);
        match read_idx_images(&path).unwrap_err() {
            Error::Parse { offset, detail, .. } => {
                assert_eq!(offset, 0);
                assert!(detail.contains("1234"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short");
        write_images(&path, 2, 2, 2, &[1, 2, 3]); // 8 pixels declared, 3 present
        match read_idx_images(&path).unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, 16), // header read fully
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("long");
        write_labels(&path, &[1, 2]);
        let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(&[9]).unwrap();
        drop(f);
        assert!(matches!(read_idx_labels(&path).unwrap_err(), Error::Parse { .. }));
    }

    #[test]
    fn split_loader_cross_checks_counts() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir(root.join("mnist")).unwrap();
        let p = split_paths(root, "mnist");
        write_images(&p.train_images, 2, 1, 2, &[10, 20, 30, 40]);
        write_labels(&p.train_labels, &[0, 1]);
        write_images(&p.test_images, 1, 1, 2, &[50, 60]);
        write_labels(&p.test_labels, &[1, 0]); // count mismatch: 2 labels, 1 image
        assert!(matches!(load_split(root, "mnist").unwrap_err(), Error::Data(_)));
    }
}
