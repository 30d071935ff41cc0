//! Plain-text voxel-list export of predictions and labels, for external
//! plotting. One line per occupied voxel: `frame x y z class` (frame 0 is
//! the present, 1.. are future horizons). Flow files carry
//! `frame x y z fx fy fz` on moving-occupied voxels.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const VOXEL_LIST_HEADER: &str = "# voxel list v1: frame x y z class";
pub const FLOW_LIST_HEADER: &str = "# flow list v1: frame x y z fx fy fz";

/// Serializes per-frame class grids (class 0 = free is omitted).
pub fn write_voxel_list(frames: &[Vec<u8>], extents: (usize, usize, usize)) -> String {
    let (nx, ny, nz) = extents;
    let mut out = String::new();
    out.push_str(VOXEL_LIST_HEADER);
    out.push('\n');
    let _ = writeln!(out, "# extents {nx} {ny} {nz} frames {}", frames.len());
    for (f, grid) in frames.iter().enumerate() {
        for i in 0..nx {
            for j in 0..ny {
                for l in 0..nz {
                    let c = grid[(i * ny + j) * nz + l];
                    if c != 0 {
                        let _ = writeln!(out, "{f} {i} {j} {l} {c}");
                    }
                }
            }
        }
    }
    out
}

/// Parses a voxel list back into per-frame class grids.
pub fn read_voxel_list(
    text: &str,
    extents: (usize, usize, usize),
    frames: usize,
) -> Result<Vec<Vec<u8>>> {
    let (nx, ny, nz) = extents;
    let mut out = vec![vec![0u8; nx * ny * nz]; frames];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!(
                "voxel list line {}: expected 5 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Format(format!("voxel list line {}: bad int", lineno + 1)))
        };
        let (f, i, j, l) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        let c = parse(fields[4])? as u8;
        if f >= frames || i >= nx || j >= ny || l >= nz {
            return Err(Error::Format(format!(
                "voxel list line {}: index out of range",
                lineno + 1
            )));
        }
        out[f][(i * ny + j) * nz + l] = c;
    }
    Ok(out)
}

/// Serializes flow vectors on the masked voxels of each future frame.
/// `flow` is `(frames, 3, voxels)`; values print in shortest
/// round-trippable form.
pub fn write_flow_list(
    flow: &Tensor<f32>,
    masks: &[Vec<u8>],
    extents: (usize, usize, usize),
) -> String {
    let (nx, ny, nz) = extents;
    let vox = nx * ny * nz;
    let frames = flow.shape()[0];
    let mut out = String::new();
    out.push_str(FLOW_LIST_HEADER);
    out.push('\n');
    let _ = writeln!(out, "# extents {nx} {ny} {nz} frames {frames}");
    for f in 0..frames {
        for i in 0..nx {
            for j in 0..ny {
                for l in 0..nz {
                    let v = (i * ny + j) * nz + l;
                    if masks[f][v] == 0 {
                        continue;
                    }
                    let fx = flow.data()[(f * 3) * vox + v];
                    let fy = flow.data()[(f * 3 + 1) * vox + v];
                    let fz = flow.data()[(f * 3 + 2) * vox + v];
                    let _ = writeln!(out, "{} {i} {j} {l} {fx} {fy} {fz}", f + 1);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voxel_list_round_trip_is_bit_identical() {
        let extents = (4, 3, 2);
        let mut frames = vec![vec![0u8; 24]; 3];
        frames[0][5] = 1;
        frames[1][0] = 2;
        frames[2][23] = 1;
        let text = write_voxel_list(&frames, extents);
        let back = read_voxel_list(&text, extents, 3).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn empty_prediction_gives_header_only_file() {
        let frames = vec![vec![0u8; 8]; 2];
        let text = write_voxel_list(&frames, (2, 2, 2));
        assert!(text.lines().all(|l| l.starts_with('#')));
        let back = read_voxel_list(&text, (2, 2, 2), 2).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn voxel_count_in_file_matches_grid() {
        let extents = (3, 3, 3);
        let mut frames = vec![vec![0u8; 27]];
        for i in [0usize, 3, 9, 14, 26] {
            frames[0][i] = 1;
        }
        let text = write_voxel_list(&frames, extents);
        let rows = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, 5);
    }
}
