use super::tiles::LabeledTile;
use crate::geo::PixelBlock;

/// Mirrors a block left to right.
pub fn flip_horizontal(b: &PixelBlock) -> PixelBlock {
    let n = b.size;
    let mut data = Vec::with_capacity(b.data.len());
    for r in 0..n {
        for c in 0..n {
            let i = (r * n + (n - 1 - c)) * 3;
            data.extend_from_slice(&b.data[i..i + 3]);
        }
    }
    PixelBlock::new(n, data)
}

/// Rotates a block clockwise by `quarters` × 90°.
pub fn rotate_quarter(b: &PixelBlock, quarters: usize) -> PixelBlock {
    let n = b.size;
    let mut out = b.clone();
    for _ in 0..quarters % 4 {
        let src = out.data.clone();
        for r in 0..n {
            for c in 0..n {
                // clockwise: new (r, c) takes old (n - 1 - c, r)
                let from = ((n - 1 - c) * n + r) * 3;
                let to = (r * n + c) * 3;
                out.data[to..to + 3].copy_from_slice(&src[from..from + 3]);
            }
        }
    }
    out
}

/// Expands each tile to its eight dihedral variants (four rotations, each
/// with and without a horizontal flip) when enabled; labels are copied.
/// Disabled augmentation returns the input unchanged.
pub fn augment_tiles(tiles: Vec<LabeledTile>, enabled: bool) -> Vec<LabeledTile> {
    if !enabled {
        return tiles;
    }
    let mut out = Vec::with_capacity(tiles.len() * 8);
    for t in tiles {
        let flipped = flip_horizontal(&t.pixels);
        for q in 0..4 {
            for (suffix, base) in [("", &t.pixels), ("f", &flipped)] {
                if q == 0 && suffix.is_empty() {
                    continue;
                }
                let mut v = t.clone();
                v.tile_id = format!("{}~r{}{}", t.tile_id, q * 90, suffix);
                v.pixels = rotate_quarter(base, q);
                out.push(v);
            }
        }
        out.push(t);
        let n = out.len();
        // keep the original first within its orbit
        out[n - 8..].rotate_right(1);
    }
    out
}
