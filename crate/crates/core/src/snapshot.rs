//! Versioned binary persistence of a scene model and its chosen labels.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            4 bytes  "BGSM"
//! version          u32      currently 1
//! block_size       u32
//! cols, rows       u32 each
//! source_w/h       u32 each
//! fps              f64
//! t1, t2           f64 each
//! q31_mean/std     f64 each
//! frames_ingested  u64
//! per node, row-major (j, i):
//!   rep_count      u32
//!   chosen         u32      u32::MAX when the node has no label
//!   per representative:
//!     weight       u64
//!     variance     f64
//!     mean         block_size^2 f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame_io::NodeGrid;
use crate::mrf::BackgroundGrid;
use crate::repset::{NoiseThresholds, Representative, RepresentativeSet, SceneModel};

const MAGIC: [u8; 4] = *b"BGSM";
const VERSION: u32 = 1;
const NO_LABEL: u32 = u32::MAX;

pub fn save_model(model: &SceneModel, labels: &BackgroundGrid, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_snapshot(model, labels, &mut out).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(SceneModel, BackgroundGrid)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_snapshot(&mut BufReader::new(file))
        .map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))
}

pub fn write_snapshot<W: Write>(
    model: &SceneModel,
    labels: &BackgroundGrid,
    out: &mut W,
) -> std::io::Result<()> {
    let grid = model.grid();
    assert_eq!(
        (labels.cols(), labels.rows()),
        (grid.cols(), grid.rows()),
        "label grid must match the model grid"
    );
    out.write_all(&MAGIC)?;
    for v in [
        VERSION,
        grid.block_size(),
        grid.cols(),
        grid.rows(),
        grid.source_width(),
        grid.source_height(),
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    let thr = model.thresholds();
    for v in [model.fps(), thr.t1, thr.t2, thr.q31_mean, thr.q31_std] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&model.frames_ingested().to_le_bytes())?;
    for j in 0..grid.rows() {
        for i in 0..grid.cols() {
            let set = model.set(i, j);
            out.write_all(&(set.len() as u32).to_le_bytes())?;
            let chosen = labels.get(i, j).map_or(NO_LABEL, |r| r as u32);
            out.write_all(&chosen.to_le_bytes())?;
            for rep in set.reps() {
                out.write_all(&rep.weight().to_le_bytes())?;
                out.write_all(&rep.variance().to_le_bytes())?;
                for &m in rep.mean() {
                    out.write_all(&m.to_le_bytes())?;
                }
            }
        }
    }
    out.flush()
}

pub fn read_snapshot<R: Read>(input: &mut R) -> Result<(SceneModel, BackgroundGrid)> {
    let mut r = Reader { input };
    let magic = r.bytes::<4>()?;
    if magic != MAGIC {
        return Err(Error::Snapshot("not a model snapshot (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Snapshot(format!(
            "snapshot version {version} unsupported (expected {VERSION})"
        )));
    }
    let block_size = r.u32()?;
    let cols = r.u32()?;
    let rows = r.u32()?;
    let source_width = r.u32()?;
    let source_height = r.u32()?;
    if block_size < 2 || cols == 0 || rows == 0 {
        return Err(Error::Snapshot(format!(
            "implausible grid: block {block_size}, {cols}x{rows} nodes"
        )));
    }
    if cols as u64 * block_size as u64 > source_width as u64
        || rows as u64 * block_size as u64 > source_height as u64
    {
        return Err(Error::Snapshot("grid exceeds its source geometry".into()));
    }
    let fps = r.finite_f64("fps")?;
    let t1 = r.finite_f64("t1")?;
    let t2 = r.finite_f64("t2")?;
    let q31_mean = r.finite_f64("q31_mean")?;
    let q31_std = r.finite_f64("q31_std")?;
    let frames_ingested = r.u64()?;

    let grid = NodeGrid::from_parts(block_size, cols, rows, source_width, source_height);
    let dim = block_size as usize * block_size as usize;
    let mut labels = BackgroundGrid::empty(&grid);
    let mut sets = Vec::with_capacity(grid.node_count());
    for j in 0..rows {
        for i in 0..cols {
            let rep_count = r.u32()? as usize;
            if rep_count as u64 > frames_ingested {
                return Err(Error::Snapshot(format!(
                    "node ({i}, {j}) claims {rep_count} representatives from {frames_ingested} frames"
                )));
            }
            let chosen = r.u32()?;
            if chosen != NO_LABEL && chosen as usize >= rep_count {
                return Err(Error::Snapshot(format!(
                    "node ({i}, {j}) label {chosen} out of range ({rep_count} representatives)"
                )));
            }
            let mut set = RepresentativeSet::new();
            for _ in 0..rep_count {
                let weight = r.u64()?;
                if weight == 0 {
                    return Err(Error::Snapshot(
                        "representative weight must be positive".into(),
                    ));
                }
                let variance = r.finite_f64("variance")?;
                if variance < 0.0 {
                    return Err(Error::Snapshot(
                        "representative variance is negative".into(),
                    ));
                }
                let mut mean = Vec::with_capacity(dim);
                for _ in 0..dim {
                    mean.push(r.finite_f64("mean element")?);
                }
                set.push(Representative::from_parts(mean, variance, weight));
            }
            if chosen != NO_LABEL {
                labels.set(i, j, chosen as usize);
            }
            sets.push(set);
        }
    }
    let mut trailer = [0u8; 1];
    match r.input.read(&mut trailer) {
        Ok(0) => {}
        Ok(_) => return Err(Error::Snapshot("trailing bytes after model data".into())),
        Err(e) => return Err(Error::Snapshot(format!("read failed: {e}"))),
    }

    let thresholds = NoiseThresholds {
        t1,
        t2,
        q31_mean,
        q31_std,
    };
    let model = SceneModel::from_parts(grid, sets, thresholds, fps, frames_ingested);
    Ok((model, labels))
}

struct Reader<'a, R: Read> {
    input: &'a mut R,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.input
            .read_exact(&mut buf)
            .map_err(|e| Error::Snapshot(format!("truncated snapshot: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes::<8>()?))
    }

    fn finite_f64(&mut self, what: &str) -> Result<f64> {
        let v = f64::from_le_bytes(self.bytes::<8>()?);
        if !v.is_finite() {
            return Err(Error::Snapshot(format!("{what} is not finite")));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EstimatorConfig;
    use crate::frame_io::{FrameSequence, Raster};
    use crate::mrf::estimate_background;

    fn small_outcome() -> (SceneModel, BackgroundGrid) {
        let mut frames = FrameSequence::new(25.0);
        for k in 0..4u32 {
            frames
                .push(Raster::from_fn(8, 4, |x, y| (10 * y + x + (k & 1)) as u8))
                .unwrap();
        }
        let config = EstimatorConfig {
            block_size: 2,
            ..Default::default()
        };
        let outcome = estimate_background(&frames, &config).unwrap();
        (outcome.model, outcome.labels)
    }

    #[test]
    fn snapshot_round_trips_model_and_labels() {
        let (model, labels) = small_outcome();
        let mut buf = Vec::new();
        write_snapshot(&model, &labels, &mut buf).unwrap();
        let (loaded, loaded_labels) = read_snapshot(&mut buf.as_slice()).unwrap();

        assert_eq!(loaded.grid(), model.grid());
        assert_eq!(loaded.fps(), model.fps());
        assert_eq!(loaded.frames_ingested(), model.frames_ingested());
        assert_eq!(loaded.thresholds().t2, model.thresholds().t2);
        assert_eq!(loaded.sets(), model.sets());
        for j in 0..labels.rows() {
            for i in 0..labels.cols() {
                assert_eq!(loaded_labels.get(i, j), labels.get(i, j));
            }
        }
    }

    #[test]
    fn snapshot_preserves_unlabelled_nodes() {
        let (model, _) = small_outcome();
        let empty = BackgroundGrid::empty(model.grid());
        let mut buf = Vec::new();
        write_snapshot(&model, &empty, &mut buf).unwrap();
        let (_, labels) = read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(labels.labelled_count(), 0);
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let (model, labels) = small_outcome();
        let mut buf = Vec::new();
        write_snapshot(&model, &labels, &mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_snapshot(&mut bad_magic.as_slice()).is_err());

        let mut bad_version = buf.clone();
        bad_version[4..8].copy_from_slice(&9u32.to_le_bytes());
        assert!(read_snapshot(&mut bad_version.as_slice()).is_err());

        let truncated = &buf[..buf.len() - 3];
        assert!(read_snapshot(&mut &truncated[..]).is_err());

        let mut padded = buf.clone();
        padded.push(0);
        assert!(read_snapshot(&mut padded.as_slice()).is_err());
    }

    #[test]
    fn rejects_out_of_range_label() {
        let (model, labels) = small_outcome();
        let mut buf = Vec::new();
        write_snapshot(&model, &labels, &mut buf).unwrap();
        // First node header sits right after the fixed 76-byte preamble:
        // magic 4, six u32 fields 24, five f64 fields 40, frame count 8.
        let rep_count_at = 76;
        let chosen_at = rep_count_at + 4;
        let rep_count = u32::from_le_bytes(buf[rep_count_at..rep_count_at + 4].try_into().unwrap());
        buf[chosen_at..chosen_at + 4].copy_from_slice(&rep_count.to_le_bytes());
        let err = read_snapshot(&mut buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("out of range"), "got: {err}");
    }
}
