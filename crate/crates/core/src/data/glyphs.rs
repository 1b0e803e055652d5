//! The 16-element glyph library.
//!
//! Each element is a 4x4 binary bitmap. The set is pairwise distinct, has
//! no all-zero member (all-zero is reserved for the empty slot), and is
//! linearly independent over the reals, so the 16 bitmaps form a basis of
//! pixel space.

pub const GLYPH_COUNT: usize = 16;
pub const GLYPH_SIDE: usize = 4;
pub const GLYPH_PIXELS: usize = GLYPH_SIDE * GLYPH_SIDE;

/// Index used in one-hot tokenizations for the empty slot.
pub const EMPTY_INDEX: usize = GLYPH_COUNT;

const PATTERNS: [[&str; 4]; GLYPH_COUNT] = [
    ["X...", ".X..", "..X.", "...X"], // diagonal
    ["...X", "..X.", ".X..", "X..."], // anti-diagonal
    ["X...", "X...", "X...", "X..."], // left bar
    ["...X", "...X", "...X", "...X"], // right bar
    ["XXXX", "....", "....", "...."], // top bar
    ["..XX", "...X", "...X", "..XX"], // hook
    [".X..", "XXX.", ".X..", "...."], // plus
    ["XX..", "XX..", "....", "...."], // top-left corner
    ["....", "....", "..XX", "..XX"], // bottom-right corner
    ["XXXX", ".X..", ".X..", ".X.."], // tee
    ["X...", "X...", "X...", "XXXX"], // ell
    ["XX..", ".XX.", "..XX", "...X"], // zig
    ["X..X", "....", "....", "X..X"], // corners
    ["X.X.", ".X.X", "X.X.", ".X.X"], // checker
    [".X..", ".XX.", ".XXX", ".XX."], // arrow
    ["X...", "XX..", ".XX.", "..XX"], // steps
];

/// Bitmap of glyph `index` as 16 row-major pixels in {0.0, 1.0}.
pub fn glyph(index: usize) -> [f64; GLYPH_PIXELS] {
    assert!(index < GLYPH_COUNT, "glyph index {index} out of range");
    let mut out = [0.0; GLYPH_PIXELS];
    for (r, row) in PATTERNS[index].iter().enumerate() {
        for (c, ch) in row.bytes().enumerate() {
            if ch == b'X' {
                out[r * GLYPH_SIDE + c] = 1.0;
            }
        }
    }
    out
}

/// Number of lit pixels in glyph `index`.
pub fn glyph_pixel_count(index: usize) -> usize {
    glyph(index).iter().filter(|&&v| v == 1.0).count()
}

/// Matches 16 pixels against the library. Returns the glyph index, or
/// `EMPTY_INDEX` for all zeros, or `None` for anything else.
pub fn match_glyph(pixels: &[f64]) -> Option<usize> {
    if pixels.len() != GLYPH_PIXELS {
        return None;
    }
    if pixels.iter().all(|&v| v == 0.0) {
        return Some(EMPTY_INDEX);
    }
    (0..GLYPH_COUNT).find(|&i| glyph(i).iter().zip(pixels).all(|(a, b)| a == b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_are_distinct_and_nonzero() {
        let all: Vec<[f64; 16]> = (0..GLYPH_COUNT).map(glyph).collect();
        for (i, a) in all.iter().enumerate() {
            assert!(a.iter().any(|&v| v != 0.0), "glyph {i} is all zero");
            for b in &all[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn glyphs_are_linearly_independent() {
        // Gaussian elimination rank over the 16x16 pixel matrix
        let mut m: Vec<Vec<f64>> = (0..GLYPH_COUNT).map(|i| glyph(i).to_vec()).collect();
        let mut rank = 0;
        for col in 0..GLYPH_PIXELS {
            let Some(pivot) = (rank..GLYPH_COUNT).find(|&r| m[r][col].abs() > 1e-9) else {
                continue;
            };
            m.swap(rank, pivot);
            let d = m[rank][col];
            for r in 0..GLYPH_COUNT {
                if r != rank && m[r][col].abs() > 1e-12 {
                    let f = m[r][col] / d;
                    for c in 0..GLYPH_PIXELS {
                        m[r][c] -= f * m[rank][c];
                    }
                }
            }
            rank += 1;
        }
        assert_eq!(rank, GLYPH_COUNT);
    }

    #[test]
    fn match_glyph_round_trips() {
        for i in 0..GLYPH_COUNT {
            assert_eq!(match_glyph(&glyph(i)), Some(i));
        }
        assert_eq!(match_glyph(&[0.0; 16]), Some(EMPTY_INDEX));
        let mut junk = glyph(0);
        junk[7] = 0.5;
        assert_eq!(match_glyph(&junk), None);
    }
}
