//! Raw volume/sinogram files with TOML sidecars, and PGM slice images.
//!
//! Data files are flat little-endian `f32` arrays. Volumes are stored with
//! `i` fastest then `j` then `k`; sinograms with channel fastest, then row,
//! then view. The sidecar lives next to the data file with the extension
//! replaced by `.toml` and carries shape, spacing, geometry and a free-form
//! provenance table.
//!
//! Slice images are binary PGM (`P5`): the header
//! `P5\n<width> <height>\n<maxval>\n` followed by one sample per pixel, a
//! single byte for `maxval = 255` or two big-endian bytes for
//! `maxval = 65535`. Rows are written in order of increasing second index
//! (`j` for z-slices, `k` otherwise), pixels within a row by increasing first
//! index.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Volume, VoxelGrid};
use crate::projector::{ScanGeometry, Sinogram};

pub const DTYPE: &str = "f32le";

pub type Provenance = BTreeMap<String, String>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub kind: String,
    pub dtype: String,
    /// `[nx, ny, nz]`
    pub shape: [usize; 3],
    pub spacing: f64,
    pub center: [f64; 2],
    #[serde(default)]
    pub provenance: Provenance,
}

impl VolumeHeader {
    pub fn grid(&self) -> Result<VoxelGrid> {
        let [nx, ny, nz] = self.shape;
        VoxelGrid::new(nx, ny, nz, self.spacing, (self.center[0], self.center[1]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinogramHeader {
    pub kind: String,
    pub dtype: String,
    /// `[views, rows, channels]`
    pub shape: [usize; 3],
    pub angles: Vec<f64>,
    pub detector_spacing: f64,
    #[serde(default)]
    pub provenance: Provenance,
}

impl SinogramHeader {
    pub fn geometry(&self) -> Result<ScanGeometry> {
        if self.shape[0] != self.angles.len() {
            return Err(Error::Config(format!(
                "sinogram header lists {} angles for {} views",
                self.angles.len(),
                self.shape[0]
            )));
        }
        ScanGeometry::new(self.angles.clone(), self.shape[2], self.shape[1], self.detector_spacing)
    }
}

pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("toml")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn encode_f32(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

fn decode_f32(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != 4 * expected {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("expected {} bytes ({expected} f32 values), found {}", 4 * expected, bytes.len()),
        });
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

fn parse_header<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    toml::from_str(&read_text(path)?).map_err(|e| Error::Format { path: path.into(), reason: e.to_string() })
}

fn check_kind(path: &Path, kind: &str, dtype: &str, want: &str) -> Result<()> {
    if kind != want || dtype != DTYPE {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("expected a {want} in {DTYPE}, header says {kind} in {dtype}"),
        });
    }
    Ok(())
}

pub fn write_volume(path: &Path, vol: &Volume, provenance: Provenance) -> Result<()> {
    let g = vol.grid();
    let header = VolumeHeader {
        kind: "volume".into(),
        dtype: DTYPE.into(),
        shape: g.dims(),
        spacing: g.spacing,
        center: [g.center.0, g.center.1],
        provenance,
    };
    fs::write(path, encode_f32(vol.values())).map_err(|e| Error::io(path, e))?;
    let text = toml::to_string(&header).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&sidecar_path(path), &text)
}

pub fn read_volume_header(path: &Path) -> Result<VolumeHeader> {
    let side = sidecar_path(path);
    let header: VolumeHeader = parse_header(&side)?;
    check_kind(&side, &header.kind, &header.dtype, "volume")?;
    Ok(header)
}

pub fn read_volume(path: &Path) -> Result<(Volume, VolumeHeader)> {
    let header = read_volume_header(path)?;
    let grid = header.grid()?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let values = decode_f32(path, &bytes, grid.len())?;
    Ok((Volume::from_vec(grid, values)?, header))
}

pub fn write_sinogram(path: &Path, sino: &Sinogram, provenance: Provenance) -> Result<()> {
    let g = sino.geometry();
    let header = SinogramHeader {
        kind: "sinogram".into(),
        dtype: DTYPE.into(),
        shape: [g.num_views(), g.num_rows, g.num_channels],
        angles: g.angles.clone(),
        detector_spacing: g.detector_spacing,
        provenance,
    };
    fs::write(path, encode_f32(sino.values())).map_err(|e| Error::io(path, e))?;
    let text = toml::to_string(&header).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&sidecar_path(path), &text)
}

pub fn read_sinogram(path: &Path) -> Result<(Sinogram, SinogramHeader)> {
    let side = sidecar_path(path);
    let header: SinogramHeader = parse_header(&side)?;
    check_kind(&side, &header.kind, &header.dtype, "sinogram")?;
    let geom = header.geometry()?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let values = decode_f32(path, &bytes, geom.len())?;
    Ok((Sinogram::from_vec(geom, values)?, header))
}

/// Rounds `values` to the f32 precision used on disk.
pub fn quantize_f32(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| v as f32 as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::invalid(format!("PGM depth must be 8 or 16 bits, got {other}"))),
        }
    }
}

/// Gray image in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub pixels: Vec<u16>,
}

/// Linear map of `[lo, hi]` onto `0..=maxval`, clamped. A degenerate window
/// maps everything to mid-gray.
pub fn window_to_gray(values: &[f64], width: usize, height: usize, window: (f64, f64), depth: BitDepth) -> GrayImage {
    let max = depth.max_value();
    let (lo, hi) = window;
    let pixels = values
        .iter()
        .map(|&v| {
            if !(hi > lo) {
                return max / 2;
            }
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            (t * max as f64).round() as u16
        })
        .collect();
    GrayImage { width, height, max_value: max, pixels }
}

/// Inverse of [`window_to_gray`] up to quantization.
pub fn gray_to_values(img: &GrayImage, window: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = window;
    img.pixels.iter().map(|&p| lo + (hi - lo) * p as f64 / img.max_value as f64).collect()
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.max_value).into_bytes();
    if img.max_value < 256 {
        out.extend(img.pixels.iter().map(|&p| p as u8));
    } else {
        out.extend(img.pixels.iter().flat_map(|&p| p.to_be_bytes()));
    }
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|reason| Error::Format { path: path.into(), reason })
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    // header: magic, width, height, maxval separated by whitespace, then one
    // whitespace byte before the raster
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?.to_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(format!("unsupported magic {:?}", fields[0]));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|e| format!("bad header field {s:?}: {e}"));
    let (width, height, max_value) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if max_value == 0 || max_value > 65535 {
        return Err(format!("maxval {max_value} out of range"));
    }
    let bpp = if max_value < 256 { 1 } else { 2 };
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != width * height * bpp {
        return Err(format!("raster has {} bytes, expected {}", raster.len(), width * height * bpp));
    }
    let pixels = if bpp == 1 {
        raster.iter().map(|&b| b as u16).collect()
    } else {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    Ok(GrayImage { width, height, max_value: max_value as u16, pixels })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceAxis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for SliceAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(SliceAxis::X),
            "y" | "Y" => Ok(SliceAxis::Y),
            "z" | "Z" => Ok(SliceAxis::Z),
            other => Err(Error::invalid(format!("slice axis must be x, y or z, got {other:?}"))),
        }
    }
}

/// Extracts one slice as `(width, height, values)`.
pub fn extract_slice(vol: &Volume, axis: SliceAxis, index: usize) -> Result<(usize, usize, Vec<f64>)> {
    let g = vol.grid();
    let extent = match axis {
        SliceAxis::X => g.nx,
        SliceAxis::Y => g.ny,
        SliceAxis::Z => g.nz,
    };
    if index >= extent {
        return Err(Error::invalid(format!("slice index {index} out of range 0..{extent} along {axis:?}")));
    }
    Ok(match axis {
        SliceAxis::Z => (g.nx, g.ny, vol.slice(index).to_vec()),
        SliceAxis::Y => {
            let v = (0..g.nz).flat_map(|k| (0..g.nx).map(move |i| (i, k))).map(|(i, k)| vol.get(i, index, k));
            (g.nx, g.nz, v.collect())
        }
        SliceAxis::X => {
            let v = (0..g.nz).flat_map(|k| (0..g.ny).map(move |j| (j, k))).map(|(j, k)| vol.get(index, j, k));
            (g.ny, g.nz, v.collect())
        }
    })
}
