//! Frame acquisition, greyscale rasters, and the block tiling used by the
//! estimator. Sources are directories of numbered PGM/PNG files or raw
//! files of concatenated planar greyscale frames.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Row-major 8-bit greyscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Raster {
        assert_eq!(
            data.len(),
            width as usize * height as usize,
            "raster data length mismatch"
        );
        assert!(
            width > 0 && height > 0,
            "raster dimensions must be positive"
        );
        Raster {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Raster {
        Raster::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Raster {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let w = self.width as usize;
        &self.data[y as usize * w..(y as usize + 1) * w]
    }
}

/// Ordered greyscale frames sharing one geometry and a nominal frame rate.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    width: u32,
    height: u32,
    fps: f64,
    frames: Vec<Raster>,
}

impl FrameSequence {
    pub fn new(fps: f64) -> FrameSequence {
        FrameSequence {
            width: 0,
            height: 0,
            fps,
            frames: Vec::new(),
        }
    }

    pub fn from_frames(frames: Vec<Raster>, fps: f64) -> Result<FrameSequence> {
        let mut seq = FrameSequence::new(fps);
        for frame in frames {
            seq.push(frame)?;
        }
        Ok(seq)
    }

    /// Appends a frame, enforcing uniform geometry across the sequence.
    pub fn push(&mut self, frame: Raster) -> Result<()> {
        if self.frames.is_empty() {
            self.width = frame.width;
            self.height = frame.height;
        } else if frame.width != self.width || frame.height != self.height {
            return Err(Error::Geometry(format!(
                "frame {} is {}x{}, sequence is {}x{}",
                self.frames.len(),
                frame.width,
                frame.height,
                self.width,
                self.height
            )));
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, index: usize) -> &Raster {
        &self.frames[index]
    }

    pub fn frames(&self) -> &[Raster] {
        &self.frames
    }

    /// Contiguous sub-sequence [start, end) sharing this sequence's fps.
    pub fn slice(&self, start: usize, end: usize) -> FrameSequence {
        assert!(
            start <= end && end <= self.frames.len(),
            "slice out of range"
        );
        FrameSequence {
            width: self.width,
            height: self.height,
            fps: self.fps,
            frames: self.frames[start..end].to_vec(),
        }
    }
}

/// Partition of a frame into non-overlapping block_size x block_size nodes.
/// Trailing pixels that do not fill a block are cropped. Node (i, j) covers
/// pixel columns [i*n, (i+1)*n) and rows [j*n, (j+1)*n).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeGrid {
    block_size: u32,
    cols: u32,
    rows: u32,
    source_width: u32,
    source_height: u32,
}

impl NodeGrid {
    pub fn for_frame(width: u32, height: u32, block_size: u32) -> Result<NodeGrid> {
        if block_size < 2 {
            return Err(Error::Config(format!(
                "block size must be at least 2, got {block_size}"
            )));
        }
        let cols = width / block_size;
        let rows = height / block_size;
        if cols == 0 || rows == 0 {
            return Err(Error::Geometry(format!(
                "frame {width}x{height} is smaller than one {block_size}x{block_size} block"
            )));
        }
        Ok(NodeGrid {
            block_size,
            cols,
            rows,
            source_width: width,
            source_height: height,
        })
    }

    pub(crate) fn from_parts(
        block_size: u32,
        cols: u32,
        rows: u32,
        source_width: u32,
        source_height: u32,
    ) -> NodeGrid {
        NodeGrid {
            block_size,
            cols,
            rows,
            source_width,
            source_height,
        }
    }

    pub fn block_size(&self) -> u32 {
        self.block_size
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn node_count(&self) -> usize {
        self.cols as usize * self.rows as usize
    }

    pub fn source_width(&self) -> u32 {
        self.source_width
    }

    pub fn source_height(&self) -> u32 {
        self.source_height
    }

    /// Covered (possibly cropped) pixel area.
    pub fn covered_width(&self) -> u32 {
        self.cols * self.block_size
    }

    pub fn covered_height(&self) -> u32 {
        self.rows * self.block_size
    }

    /// Top-left pixel of node (i, j).
    pub fn node_origin(&self, i: u32, j: u32) -> (u32, u32) {
        debug_assert!(i < self.cols && j < self.rows);
        (i * self.block_size, j * self.block_size)
    }

    /// Flat node index in row-major (j, i) order.
    pub fn node_index(&self, i: u32, j: u32) -> usize {
        debug_assert!(i < self.cols && j < self.rows);
        j as usize * self.cols as usize + i as usize
    }
}

/// One node's pixels flattened row-major into a block_size^2 vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    values: Vec<f64>,
}

impl LabelVector {
    pub fn new(values: Vec<f64>) -> LabelVector {
        assert!(!values.is_empty(), "label vector cannot be empty");
        LabelVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn element_mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation over the elements.
    pub fn element_std(&self) -> f64 {
        let mean = self.element_mean();
        let var = self
            .values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.values.len() as f64;
        var.sqrt()
    }
}

/// Copies node (i, j) of `frame` into `out` (cleared first), row-major.
pub fn extract_block(frame: &Raster, grid: &NodeGrid, i: u32, j: u32, out: &mut Vec<f64>) {
    assert_eq!(
        (frame.width, frame.height),
        (grid.source_width, grid.source_height),
        "frame geometry does not match grid source geometry"
    );
    let (x0, y0) = grid.node_origin(i, j);
    let n = grid.block_size;
    out.clear();
    out.reserve(n as usize * n as usize);
    for y in y0..y0 + n {
        let row = frame.row(y);
        out.extend(
            row[x0 as usize..(x0 + n) as usize]
                .iter()
                .map(|&p| p as f64),
        );
    }
}

/// Splits a frame into per-node label vectors, row-major by (j, i).
pub fn tile_blocks(frame: &Raster, grid: &NodeGrid) -> Result<Vec<LabelVector>> {
    if (frame.width, frame.height) != (grid.source_width, grid.source_height) {
        return Err(Error::Geometry(format!(
            "frame {}x{} does not match grid source {}x{}",
            frame.width, frame.height, grid.source_width, grid.source_height
        )));
    }
    let mut labels = Vec::with_capacity(grid.node_count());
    let mut buf = Vec::new();
    for j in 0..grid.rows {
        for i in 0..grid.cols {
            extract_block(frame, grid, i, j, &mut buf);
            labels.push(LabelVector::new(buf.clone()));
        }
    }
    Ok(labels)
}

/// ITU-R BT.601 luma, rounded to nearest and clamped to [0, 255].
pub fn to_greyscale(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    y.round().clamp(0.0, 255.0) as u8
}

/// Output image formats supported by `write_image`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

/// Writes a binary PGM: magic, ASCII dimensions, maxval 255, then raw rows.
pub fn write_pgm<W: Write>(raster: &Raster, mut out: W) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", raster.width, raster.height)?;
    out.write_all(&raster.data)?;
    Ok(())
}

/// Parses a binary (P5) PGM with maxval <= 255. Comments and arbitrary
/// whitespace in the header are accepted.
pub fn read_pgm(bytes: &[u8]) -> std::result::Result<Raster, String> {
    let mut pos = 0usize;

    fn skip_separators(bytes: &[u8], pos: &mut usize) {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn read_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
        skip_separators(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos > start {
            Some(&bytes[start..*pos])
        } else {
            None
        }
    }

    fn read_uint(bytes: &[u8], pos: &mut usize, what: &str) -> std::result::Result<u32, String> {
        let tok = read_token(bytes, pos).ok_or_else(|| format!("missing {what}"))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| format!("invalid {what}"))
    }

    let magic = read_token(bytes, &mut pos).ok_or("empty file")?;
    if magic != b"P5" {
        return Err(format!(
            "unsupported magic {:?}, expected P5",
            String::from_utf8_lossy(magic)
        ));
    }
    let width = read_uint(bytes, &mut pos, "width")?;
    let height = read_uint(bytes, &mut pos, "height")?;
    let maxval = read_uint(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err("zero dimension".to_string());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}, expected 1..=255"));
    }
    // Exactly one whitespace byte separates the header from the pixel data.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing separator after maxval".to_string());
    }
    pos += 1;
    let need = width as usize * height as usize;
    let rest = &bytes[pos..];
    if rest.len() < need {
        return Err(format!(
            "truncated pixel data: expected {need} bytes, found {}",
            rest.len()
        ));
    }
    Ok(Raster::new(width, height, rest[..need].to_vec()))
}

/// Writes `raster` to `path` in the requested format. PGM output is
/// bit-exact: header `P5\n{w} {h}\n255\n` followed by row-major bytes.
pub fn write_image(raster: &Raster, path: &Path, format: ImageFormat) -> Result<()> {
    match format {
        ImageFormat::Pgm => {
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut out = BufWriter::new(file);
            write_pgm(raster, &mut out).map_err(|e| Error::io(path, e))?;
            out.flush().map_err(|e| Error::io(path, e))?;
            Ok(())
        }
        ImageFormat::Png => image::save_buffer(
            path,
            &raster.data,
            raster.width,
            raster.height,
            image::ColorType::L8,
        )
        .map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }),
    }
}

/// Reads a single PGM or PNG image as greyscale. Colour PNG input is
/// converted with `to_greyscale`.
pub fn read_image(path: &Path) -> Result<Raster> {
    let ingest = |reason: String| Error::Ingest {
        path: path.to_path_buf(),
        reason,
    };
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pgm") => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            read_pgm(&bytes).map_err(ingest)
        }
        Some("png") => {
            let dynimg = image::open(path).map_err(|e| ingest(e.to_string()))?;
            Ok(match dynimg {
                image::DynamicImage::ImageLuma8(img) => {
                    let (w, h) = img.dimensions();
                    Raster::new(w, h, img.into_raw())
                }
                other => {
                    let rgb = other.to_rgb8();
                    let (w, h) = rgb.dimensions();
                    let data = rgb
                        .pixels()
                        .map(|p| to_greyscale(p.0[0], p.0[1], p.0[2]))
                        .collect();
                    Raster::new(w, h, data)
                }
            })
        }
        _ => Err(ingest(
            "unsupported image extension (expected .pgm or .png)".to_string(),
        )),
    }
}

/// Source-loading options. `raw_geometry` is required for raw planar input.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub fps: f64,
    pub raw_geometry: Option<(u32, u32)>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            fps: 25.0,
            raw_geometry: None,
        }
    }
}

/// Numeric component used to order frame files: the last run of ASCII
/// digits in the file stem, or None when the stem has no digits.
fn filename_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let mut best: Option<&str> = None;
    let mut start = None;
    for (idx, ch) in stem.char_indices() {
        if ch.is_ascii_digit() {
            if start.is_none() {
                start = Some(idx);
            }
        } else if let Some(s) = start.take() {
            best = Some(&stem[s..idx]);
        }
    }
    if let Some(s) = start {
        best = Some(&stem[s..]);
    }
    // Long runs of digits saturate rather than failing to parse.
    best.map(|digits| {
        digits.parse::<u64>().unwrap_or_else(|_| {
            digits
                .trim_start_matches('0')
                .parse::<u64>()
                .unwrap_or(u64::MAX)
        })
    })
}

/// Loads a sequence from `source`.
///
/// A directory is scanned for `.pgm`/`.png` files, ordered by the numeric
/// component of their filenames (ties and missing numbers fall back to
/// lexical order). A plain file is treated as concatenated raw planar
/// greyscale frames and requires `raw_geometry`.
pub fn load_sequence(source: &Path, options: &LoadOptions) -> Result<FrameSequence> {
    let meta = fs::metadata(source).map_err(|e| Error::io(source, e))?;
    if meta.is_dir() {
        load_directory(source, options)
    } else {
        load_raw(source, options)
    }
}

fn load_directory(dir: &Path, options: &LoadOptions) -> Result<FrameSequence> {
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("pgm") | Some("png")) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::Ingest {
            path: dir.to_path_buf(),
            reason: "no .pgm or .png frames found".to_string(),
        });
    }
    paths.sort_by(|a, b| {
        let ka = (filename_number(a).unwrap_or(u64::MAX), a.file_name());
        let kb = (filename_number(b).unwrap_or(u64::MAX), b.file_name());
        ka.cmp(&kb)
    });

    let mut seq = FrameSequence::new(options.fps);
    for path in &paths {
        let frame = read_image(path)?;
        seq.push(frame).map_err(|e| match e {
            Error::Geometry(msg) => Error::Geometry(format!("{}: {msg}", path.display())),
            other => other,
        })?;
    }
    Ok(seq)
}

fn load_raw(file: &Path, options: &LoadOptions) -> Result<FrameSequence> {
    let (width, height) = options
        .raw_geometry
        .ok_or_else(|| Error::Config("raw input requires explicit width and height".to_string()))?;
    if width == 0 || height == 0 {
        return Err(Error::Config("raw geometry must be positive".to_string()));
    }
    let mut bytes = Vec::new();
    fs::File::open(file)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(file, e))?;
    let frame_len = width as usize * height as usize;
    if bytes.is_empty() || bytes.len() % frame_len != 0 {
        return Err(Error::Geometry(format!(
            "raw file length {} is not a positive multiple of {width}x{height}",
            bytes.len()
        )));
    }
    let mut seq = FrameSequence::new(options.fps);
    for chunk in bytes.chunks_exact(frame_len) {
        seq.push(Raster::new(width, height, chunk.to_vec()))?;
    }
    Ok(seq)
}
