//! Spectral clique potentials: orthonormal 2D DCT-II of clique tiles, DC
//! suppression, and summed low-band magnitudes as the smoothness energy.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Cached orthonormal 1D DCT-II basis, row-major: basis[k*m + n] holds
/// a(k) * cos(pi * (2n + 1) * k / (2m)) with a(0) = sqrt(1/m),
/// a(k>0) = sqrt(2/m).
fn dct_basis(m: usize) -> Arc<[f64]> {
    static CACHE: OnceLock<Mutex<BTreeMap<usize, Arc<[f64]>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    let mut guard = cache.lock().expect("basis cache poisoned");
    guard
        .entry(m)
        .or_insert_with(|| {
            let mut basis = vec![0.0; m * m];
            let a0 = (1.0 / m as f64).sqrt();
            let ak = (2.0 / m as f64).sqrt();
            for k in 0..m {
                let scale = if k == 0 { a0 } else { ak };
                for n in 0..m {
                    basis[k * m + n] = scale
                        * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2 * m) as f64)
                            .cos();
                }
            }
            basis.into()
        })
        .clone()
}

/// Orthonormal 2D DCT-II of a rectangular tile, separable row-column
/// evaluation. Output is row-major `rows x cols` in frequency order.
pub(crate) fn dct2_rect(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(data.len(), rows * cols, "tile data length mismatch");
    assert!(rows >= 2 && cols >= 2, "tile must be at least 2x2");
    let row_basis = dct_basis(cols);
    let col_basis = dct_basis(rows);
    // Transform along rows first: t[r][u] = sum_c basis[u,c] * x[r][c].
    let mut t = vec![0.0; rows * cols];
    for r in 0..rows {
        let x = &data[r * cols..(r + 1) * cols];
        for u in 0..cols {
            let b = &row_basis[u * cols..(u + 1) * cols];
            t[r * cols + u] = b.iter().zip(x).map(|(&bc, &xc)| bc * xc).sum();
        }
    }
    // Then along columns: c[v][u] = sum_r basis[v,r] * t[r][u].
    let mut out = vec![0.0; rows * cols];
    for v in 0..rows {
        let b = &col_basis[v * rows..(v + 1) * rows];
        for u in 0..cols {
            out[v * cols + u] = (0..rows).map(|r| b[r] * t[r * cols + u]).sum();
        }
    }
    out
}

/// Orthonormal 2D DCT-II of a square M x M tile (row-major).
pub fn dct2(tile: &[f64], m: usize) -> Vec<f64> {
    assert_eq!(tile.len(), m * m, "square tile expected");
    dct2_rect(tile, m, m)
}

/// Retained low-band extent along one axis of length `dim`:
/// ceil(sqrt(dim^2 * 0.75)). For the square M x M clique tile this is the
/// P of the energy sum over [0, P) x [0, P).
pub fn retained_extent(dim: usize) -> usize {
    ((dim * dim) as f64 * 0.75).sqrt().ceil() as usize
}

/// Pixel tile assembled from a candidate block and labelled neighbour
/// blocks: 2N x 2N for corner cliques, N x 2N or 2N x N for pair cliques.
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueTile {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
}

impl CliqueTile {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>) -> CliqueTile {
        assert_eq!(pixels.len(), rows * cols, "tile pixel count mismatch");
        CliqueTile { rows, cols, pixels }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }
}

/// DC-suppressed spectrum of a square clique tile.
#[derive(Debug, Clone)]
pub struct CliqueSpectrum {
    size: usize,
    coeffs: Vec<f64>,
    retained_extent: usize,
}

impl CliqueSpectrum {
    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major M x M coefficients; (0, 0) is forced to zero.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn retained_extent(&self) -> usize {
        self.retained_extent
    }
}

/// Spectrum of a square clique tile with the DC coefficient suppressed.
pub fn clique_spectrum(tile: &CliqueTile) -> CliqueSpectrum {
    assert_eq!(
        tile.rows, tile.cols,
        "clique spectrum requires a square tile"
    );
    let mut coeffs = dct2(&tile.pixels, tile.rows);
    coeffs[0] = 0.0;
    CliqueSpectrum {
        size: tile.rows,
        coeffs,
        retained_extent: retained_extent(tile.rows),
    }
}

/// Clique smoothness energy: sum of |C(v, u)| over the retained low band
/// [0, P_rows) x [0, P_cols) after DC suppression. Insensitive to global
/// intensity offsets; zero for constant tiles.
pub fn clique_energy(tile: &CliqueTile) -> f64 {
    let mut coeffs = dct2_rect(&tile.pixels, tile.rows, tile.cols);
    coeffs[0] = 0.0;
    let pr = retained_extent(tile.rows).min(tile.rows);
    let pc = retained_extent(tile.cols).min(tile.cols);
    let mut sum = 0.0;
    for v in 0..pr {
        for u in 0..pc {
            sum += coeffs[v * tile.cols + u].abs();
        }
    }
    sum
}

/// The four corner cliques around a node, named for where the node's
/// diagonal partner sits. Each clique is the node, its two adjacent
/// 4-neighbours on that corner, and the diagonal block between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CliqueCorner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl CliqueCorner {
    pub const ALL: [CliqueCorner; 4] = [
        CliqueCorner::TopLeft,
        CliqueCorner::TopRight,
        CliqueCorner::BottomLeft,
        CliqueCorner::BottomRight,
    ];

    /// Block-coordinate offset (di, dj) of the tile's top-left block
    /// relative to the node.
    fn tile_origin(self) -> (i64, i64) {
        match self {
            CliqueCorner::TopLeft => (-1, -1),
            CliqueCorner::TopRight => (0, -1),
            CliqueCorner::BottomLeft => (-1, 0),
            CliqueCorner::BottomRight => (0, 0),
        }
    }

    /// Offsets of the three neighbour blocks participating in the clique.
    pub fn neighbour_offsets(self) -> [(i64, i64); 3] {
        let (oi, oj) = self.tile_origin();
        let mut offs = [(0i64, 0i64); 3];
        let mut idx = 0;
        for dj in 0..2i64 {
            for di in 0..2i64 {
                let off = (oi + di, oj + dj);
                if off != (0, 0) {
                    offs[idx] = off;
                    idx += 1;
                }
            }
        }
        offs
    }
}

/// Fallback two-node cliques: the node paired with one labelled
/// 4-neighbour on the given side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairDirection {
    Left,
    Right,
    Up,
    Down,
}

impl PairDirection {
    pub const ALL: [PairDirection; 4] = [
        PairDirection::Left,
        PairDirection::Right,
        PairDirection::Up,
        PairDirection::Down,
    ];

    pub fn offset(self) -> (i64, i64) {
        match self {
            PairDirection::Left => (-1, 0),
            PairDirection::Right => (1, 0),
            PairDirection::Up => (0, -1),
            PairDirection::Down => (0, 1),
        }
    }
}

/// Assembles the 2N x 2N tile of a corner clique. `candidate` stands at the
/// node's own position; `lookup` resolves a relative block offset to that
/// block's pixels and returns None when the block is unavailable (out of
/// bounds or unlabelled), which aborts the assembly.
pub fn assemble_corner_tile<'a, F>(
    n: usize,
    corner: CliqueCorner,
    candidate: &[f64],
    mut lookup: F,
) -> Option<CliqueTile>
where
    F: FnMut(i64, i64) -> Option<&'a [f64]>,
{
    assert_eq!(candidate.len(), n * n, "candidate block size mismatch");
    let (oi, oj) = corner.tile_origin();
    let m = 2 * n;
    let mut pixels = vec![0.0; m * m];
    for v in 0..2i64 {
        for u in 0..2i64 {
            let off = (oi + u, oj + v);
            let block: &[f64] = if off == (0, 0) {
                candidate
            } else {
                lookup(off.0, off.1)?
            };
            debug_assert_eq!(block.len(), n * n);
            copy_block(&mut pixels, m, (u as usize) * n, (v as usize) * n, block, n);
        }
    }
    Some(CliqueTile::new(m, m, pixels))
}

/// Assembles the two-block tile of a pair clique: N x 2N for horizontal
/// pairs, 2N x N for vertical pairs, blocks in their spatial order.
pub fn assemble_pair_tile<'a, F>(
    n: usize,
    dir: PairDirection,
    candidate: &[f64],
    mut lookup: F,
) -> Option<CliqueTile>
where
    F: FnMut(i64, i64) -> Option<&'a [f64]>,
{
    assert_eq!(candidate.len(), n * n, "candidate block size mismatch");
    let (di, dj) = dir.offset();
    let neighbour = lookup(di, dj)?;
    debug_assert_eq!(neighbour.len(), n * n);
    let (rows, cols) = if dj == 0 { (n, 2 * n) } else { (2 * n, n) };
    let mut pixels = vec![0.0; rows * cols];
    let (cand_pos, neig_pos) = match dir {
        PairDirection::Left => ((n, 0), (0, 0)),
        PairDirection::Right => ((0, 0), (n, 0)),
        PairDirection::Up => ((0, n), (0, 0)),
        PairDirection::Down => ((0, 0), (0, n)),
    };
    copy_block(&mut pixels, cols, cand_pos.0, cand_pos.1, candidate, n);
    copy_block(&mut pixels, cols, neig_pos.0, neig_pos.1, neighbour, n);
    Some(CliqueTile::new(rows, cols, pixels))
}

fn copy_block(dst: &mut [f64], dst_cols: usize, x0: usize, y0: usize, block: &[f64], n: usize) {
    for row in 0..n {
        let d = (y0 + row) * dst_cols + x0;
        dst[d..d + n].copy_from_slice(&block[row * n..(row + 1) * n]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct O(M^4) evaluation of the orthonormal 2D DCT-II definition,
    /// used as the oracle for the separable implementation.
    pub(crate) fn direct_dct2(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let a = |k: usize, m: usize| {
            if k == 0 {
                (1.0 / m as f64).sqrt()
            } else {
                (2.0 / m as f64).sqrt()
            }
        };
        let mut out = vec![0.0; rows * cols];
        for v in 0..rows {
            for u in 0..cols {
                let mut acc = 0.0;
                for r in 0..rows {
                    for c in 0..cols {
                        acc += data[r * cols + c]
                            * (std::f64::consts::PI * (2 * r + 1) as f64 * v as f64
                                / (2 * rows) as f64)
                                .cos()
                            * (std::f64::consts::PI * (2 * c + 1) as f64 * u as f64
                                / (2 * cols) as f64)
                                .cos();
                    }
                }
                out[v * cols + u] = a(v, rows) * a(u, cols) * acc;
            }
        }
        out
    }

    fn lcg_tile(len: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        (0..len)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 40) as f64 / 16_777_216.0 * 255.0
            })
            .collect()
    }

    #[test]
    fn constant_tile_concentrates_in_dc() {
        let c = 7.25;
        let tile = vec![c; 16];
        let coeffs = dct2(&tile, 4);
        assert!((coeffs[0] - 4.0 * c).abs() < 1e-12, "DC should be M*c");
        for (idx, &v) in coeffs.iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-12, "AC coefficient {idx} = {v}");
        }
    }

    #[test]
    fn single_cosine_mode_yields_single_coefficient() {
        let m = 8;
        let (v0, u0) = (3usize, 5usize);
        let mut tile = vec![0.0; m * m];
        for r in 0..m {
            for c in 0..m {
                tile[r * m + c] =
                    (std::f64::consts::PI * (2 * r + 1) as f64 * v0 as f64 / (2 * m) as f64).cos()
                        * (std::f64::consts::PI * (2 * c + 1) as f64 * u0 as f64 / (2 * m) as f64)
                            .cos();
            }
        }
        let coeffs = dct2(&tile, m);
        for v in 0..m {
            for u in 0..m {
                let expect = if (v, u) == (v0, u0) {
                    m as f64 / 2.0
                } else {
                    0.0
                };
                assert!(
                    (coeffs[v * m + u] - expect).abs() < 1e-9,
                    "C({v},{u}) = {}, expected {expect}",
                    coeffs[v * m + u]
                );
            }
        }
    }

    #[test]
    fn separable_matches_direct_definition() {
        for &(rows, cols, seed) in &[
            (8usize, 8usize, 1u64),
            (16, 16, 2),
            (8, 16, 3),
            (16, 8, 4),
            (32, 32, 5),
        ] {
            let tile = lcg_tile(rows * cols, seed);
            let fast = dct2_rect(&tile, rows, cols);
            let direct = direct_dct2(&tile, rows, cols);
            for (idx, (f, d)) in fast.iter().zip(&direct).enumerate() {
                assert!((f - d).abs() <= 1e-8, "{rows}x{cols} idx {idx}: {f} vs {d}");
            }
        }
    }

    #[test]
    fn transform_preserves_energy() {
        let tile = lcg_tile(32 * 32, 99);
        let coeffs = dct2(&tile, 32);
        let spatial: f64 = tile.iter().map(|v| v * v).sum();
        let spectral: f64 = coeffs.iter().map(|v| v * v).sum();
        assert!((spatial - spectral).abs() / spatial <= 1e-6);
    }

    #[test]
    fn retained_extent_matches_pinned_values() {
        assert_eq!(retained_extent(32), 28);
        assert_eq!(retained_extent(16), 14);
        assert_eq!(retained_extent(4), 4);
    }

    #[test]
    fn spectrum_suppresses_dc() {
        let tile = CliqueTile::new(4, 4, lcg_tile(16, 11));
        let spec = clique_spectrum(&tile);
        assert_eq!(spec.coeffs()[0], 0.0);
        assert_eq!(spec.retained_extent(), 4);
        assert_eq!(spec.size(), 4);
    }

    #[test]
    fn constant_tile_has_zero_energy() {
        let tile = CliqueTile::new(32, 32, vec![123.0; 32 * 32]);
        assert!(clique_energy(&tile) < 1e-8);
    }

    #[test]
    fn energy_is_offset_invariant() {
        let base = lcg_tile(32 * 32, 21);
        let shifted: Vec<f64> = base.iter().map(|v| v + 55.0).collect();
        let e0 = clique_energy(&CliqueTile::new(32, 32, base));
        let e1 = clique_energy(&CliqueTile::new(32, 32, shifted));
        assert!((e0 - e1).abs() < 1e-6, "{e0} vs {e1}");
    }

    #[test]
    fn texture_outweighs_smooth_gradient() {
        let m = 32;
        // Same amplitude, different frequency content.
        let gradient = CliqueTile::new(
            m,
            m,
            (0..m * m)
                .map(|idx| (idx % m) as f64 / (m - 1) as f64 * 100.0)
                .collect(),
        );
        let texture = CliqueTile::new(
            m,
            m,
            (0..m * m)
                .map(|idx| {
                    if (idx % m + idx / m) % 2 == 0 {
                        0.0
                    } else {
                        100.0
                    }
                })
                .collect(),
        );
        assert!(clique_energy(&texture) > clique_energy(&gradient));
    }

    #[test]
    fn pair_energy_uses_own_band_and_detects_seams() {
        let n = 8;
        let flat = vec![10.0; n * n];
        let far = vec![200.0; n * n];
        let seam =
            assemble_pair_tile(n, PairDirection::Right, &flat, |_, _| Some(&far[..])).unwrap();
        let smooth =
            assemble_pair_tile(n, PairDirection::Right, &flat, |_, _| Some(&flat[..])).unwrap();
        assert!(clique_energy(&seam) > clique_energy(&smooth) + 1.0);
        assert!(clique_energy(&smooth) < 1e-8);
    }

    #[test]
    fn corner_tile_places_blocks_by_geometry() {
        let n = 2;
        // Each block is constant and encodes its offset: value 10*(di+1) + (dj+1).
        let blocks: Vec<((i64, i64), Vec<f64>)> = (-1..=1)
            .flat_map(|dj| {
                (-1..=1).map(move |di| ((di, dj), vec![(10 * (di + 1) + dj + 1) as f64; 4]))
            })
            .collect();
        let lookup = |di: i64, dj: i64| {
            blocks
                .iter()
                .find(|(off, _)| *off == (di, dj))
                .map(|(_, b)| b.as_slice())
        };
        let candidate = vec![99.0; 4];

        // Top-left clique: tile rows are A B / D X.
        let tile = assemble_corner_tile(n, CliqueCorner::TopLeft, &candidate, lookup).unwrap();
        let px = tile.pixels();
        assert_eq!(px[0], 0.0); // A = block (-1,-1) -> 10*0 + 0
        assert_eq!(px[2], 10.0); // B = block (0,-1)
        assert_eq!(px[2 * 4], 1.0); // D = block (-1,0)
        assert_eq!(px[2 * 4 + 2], 99.0); // X = candidate

        // Bottom-right clique: X E / G H.
        let tile = assemble_corner_tile(n, CliqueCorner::BottomRight, &candidate, lookup).unwrap();
        let px = tile.pixels();
        assert_eq!(px[0], 99.0); // X
        assert_eq!(px[2], 21.0); // E = block (1,0)
        assert_eq!(px[2 * 4], 12.0); // G = block (0,1)
        assert_eq!(px[2 * 4 + 2], 22.0); // H = block (1,1)
    }

    #[test]
    fn assembly_aborts_on_missing_neighbour() {
        let n = 2;
        let candidate = vec![1.0; 4];
        let none = assemble_corner_tile(n, CliqueCorner::TopLeft, &candidate, |_, _| None);
        assert!(none.is_none());
        let none = assemble_pair_tile(n, PairDirection::Up, &candidate, |_, _| None);
        assert!(none.is_none());
    }

    #[test]
    fn pair_tile_keeps_spatial_order() {
        let n = 2;
        let neighbour = [5.0; 4];
        let candidate = [9.0; 4];
        let left = assemble_pair_tile(n, PairDirection::Left, &candidate, |_, _| {
            Some(&neighbour[..])
        })
        .unwrap();
        assert_eq!((left.rows(), left.cols()), (2, 4));
        assert_eq!(left.pixels(), &[5.0, 5.0, 9.0, 9.0, 5.0, 5.0, 9.0, 9.0]);
        let up = assemble_pair_tile(n, PairDirection::Up, &candidate, |_, _| {
            Some(&neighbour[..])
        })
        .unwrap();
        assert_eq!((up.rows(), up.cols()), (4, 2));
        assert_eq!(up.pixels(), &[5.0, 5.0, 5.0, 5.0, 9.0, 9.0, 9.0, 9.0]);
    }
}
