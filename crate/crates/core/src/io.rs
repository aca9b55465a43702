//! On-disk formats.
//!
//! * Frames: binary PGM (P5). Written as 16-bit big-endian with digital numbers
//!   scaled by `65535 / FWC`; read back by the inverse scale `FWC / maxval`, so
//!   8-bit captures load too. Exposure and full well live in a sidecar JSON
//!   next to the image (`frame.pgm` ↔ `frame.json`).
//! * Segmentation maps: 8-bit PGM with values 0 and 255.
//! * Distance maps: `DMAP` magic, little-endian `u32` width, height, reserved,
//!   then row-major little-endian `f32` values.
//! * Scene truth and centroid lists: JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classical::Centroid;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::labels::{SceneTruth, SegmentationMap};
use crate::simulate::ImageFrame;

pub const DMAP_MAGIC: &[u8; 4] = b"DMAP";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub exposure_s: f64,
    pub fwc: f64,
    /// Whether stray light was fused into the frame, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stray: Option<bool>,
}

pub fn sidecar_path(frame_path: &Path) -> PathBuf {
    frame_path.with_extension("json")
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

/// Encodes a P5 image with the given maxval (255 or 65535).
pub fn encode_pgm(width: usize, height: usize, maxval: u16, samples: &[u16]) -> Vec<u8> {
    assert_eq!(samples.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval < 256 {
        out.extend(samples.iter().map(|&s| s as u8));
    } else {
        for &s in samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

/// Decodes a P5 image into `(width, height, maxval, samples)`.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, u16, Vec<u16>)> {
    let bad = |m: &str| Error::format(path, m);
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let parse = |s: String, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::format(path, format!("bad PGM {what} `{s}`")))
    };
    let width = parse(token()?, "width")?;
    let height = parse(token()?, "height")?;
    let maxval = parse(token()?, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(bad("PGM maxval out of range"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    let samples: Vec<u16> = if maxval < 256 {
        if raster.len() < n {
            return Err(bad("truncated PGM raster"));
        }
        raster[..n].iter().map(|&b| b as u16).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(bad("truncated PGM raster"));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok((width, height, maxval as u16, samples))
}

/// Writes a frame as 16-bit PGM plus its sidecar JSON.
pub fn write_frame(path: &Path, frame: &ImageFrame<f64>, meta: &FrameMeta) -> Result<()> {
    let scale = 65535.0 / meta.fwc;
    let samples: Vec<u16> = frame
        .pixels
        .as_slice()
        .iter()
        .map(|&x| (x * scale).round().clamp(0.0, 65535.0) as u16)
        .collect();
    write_bytes(path, &encode_pgm(frame.width(), frame.height(), 65535, &samples))?;
    write_json(&sidecar_path(path), meta)
}

pub fn read_frame(path: &Path) -> Result<(ImageFrame<f64>, FrameMeta)> {
    let side = sidecar_path(path);
    let meta: FrameMeta = read_json(&side)?;
    if !(meta.fwc > 0.0) {
        return Err(Error::format(&side, "fwc must be positive"));
    }
    let (w, h, maxval, samples) = decode_pgm(&read_bytes(path)?, path)?;
    let scale = meta.fwc / maxval as f64;
    let pixels = Grid::from_vec(w, h, samples.into_iter().map(|s| s as f64 * scale).collect());
    Ok((
        ImageFrame {
            pixels,
            exposure_s: meta.exposure_s,
        },
        meta,
    ))
}

pub fn write_segmentation(path: &Path, map: &SegmentationMap) -> Result<()> {
    let samples: Vec<u16> = map.as_slice().iter().map(|&x| if x != 0 { 255 } else { 0 }).collect();
    write_bytes(path, &encode_pgm(map.width(), map.height(), 255, &samples))
}

pub fn read_segmentation(path: &Path) -> Result<SegmentationMap> {
    let (w, h, maxval, samples) = decode_pgm(&read_bytes(path)?, path)?;
    let half = maxval / 2;
    Ok(Grid::from_vec(
        w,
        h,
        samples.into_iter().map(|s| u8::from(s > half)).collect(),
    ))
}

/// 8-bit PGM of a grid scaled from `[0, max]` to `[0, 255]`.
pub fn write_grid_pgm(path: &Path, grid: &Grid<f64>, max: f64) -> Result<()> {
    let samples: Vec<u16> = grid
        .as_slice()
        .iter()
        .map(|&x| (x / max * 255.0).round().clamp(0.0, 255.0) as u16)
        .collect();
    write_bytes(path, &encode_pgm(grid.width(), grid.height(), 255, &samples))
}

pub fn encode_dmap(grid: &Grid<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * grid.len());
    out.extend_from_slice(DMAP_MAGIC);
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &x in grid.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_dmap(bytes: &[u8], path: &Path) -> Result<Grid<f32>> {
    if bytes.len() < 16 || &bytes[..4] != DMAP_MAGIC {
        return Err(Error::format(path, "missing DMAP header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    let body = &bytes[16..];
    if body.len() != 4 * w * h {
        return Err(Error::format(
            path,
            format!("expected {} bytes of distances, found {}", 4 * w * h, body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Grid::from_vec(w, h, data))
}

pub fn write_distance_map(path: &Path, grid: &Grid<f32>) -> Result<()> {
    write_bytes(path, &encode_dmap(grid))
}

pub fn read_distance_map(path: &Path) -> Result<Grid<f32>> {
    decode_dmap(&read_bytes(path)?, path)
}

pub fn write_truth(path: &Path, truth: &SceneTruth) -> Result<()> {
    write_json(path, truth)
}

pub fn read_truth(path: &Path) -> Result<SceneTruth> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidRecord {
    pub u: f64,
    pub v: f64,
    pub method: String,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CentroidList {
    pub centroids: Vec<CentroidRecord>,
}

impl CentroidList {
    pub fn from_centroids(cs: &[Centroid]) -> Self {
        Self {
            centroids: cs
                .iter()
                .map(|c| CentroidRecord {
                    u: c.u,
                    v: c.v,
                    method: c.method.to_string(),
                    flag: c.flag.map(|f| f.to_string()),
                })
                .collect(),
        }
    }
}
