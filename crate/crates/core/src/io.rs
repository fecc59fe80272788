//! File formats: PFM, PNG, camera and scene-manifest JSON, OBJ.
//!
//! PFM files are little-endian (negative scale) and stored bottom-up as the format
//! requires; in memory every raster is top-down. A multi-plane tensor is written as
//! a single-channel PFM whose rows are the planes stacked top to bottom.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, RgbImage};
use crate::mesh::TriMesh;
use crate::scene::{DepthMap, View};

/// Palette used for index maps; index `i` maps to entry `i % len`.
const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [128, 128, 128],
];

/// Decoded PFM raster, top-down and channel-interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a whole file, reporting a missing file as `what: file not found`.
pub fn read_bytes(path: &Path, what: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound {
            what: what.to_string(),
            path: path.to_path_buf(),
        },
        _ => Error::Io(e),
    })
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<Pfm> {
    // header: three whitespace-separated tokens followed by a single whitespace byte
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "truncated PFM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format_err(path, format!("unknown PFM magic {other:?}"))),
    };
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| format_err(path, format!("bad PFM size {s:?}")))
    };
    let width = parse(&tokens[1])?;
    let height = parse(&tokens[2])?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| format_err(path, format!("bad PFM scale {:?}", tokens[3])))?;
    if scale == 0.0 {
        return Err(format_err(path, "PFM scale must be nonzero"));
    }
    let little = scale < 0.0;
    let n = width * height * channels;
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() < 4 * n {
        return Err(format_err(
            path,
            format!("PFM body has {} bytes, need {}", body.len(), 4 * n),
        ));
    }
    let mut data = vec![0f32; n];
    let row = width * channels;
    for (i, chunk) in body[..4 * n].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // file rows run bottom to top
        let (r, c) = (i / row, i % row);
        data[(height - 1 - r) * row + c] = v;
    }
    Ok(Pfm {
        width,
        height,
        channels,
        data,
    })
}

pub fn encode_pfm(pfm: &Pfm) -> Vec<u8> {
    let magic = if pfm.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", pfm.width, pfm.height).into_bytes();
    let row = pfm.width * pfm.channels;
    for r in (0..pfm.height).rev() {
        for v in &pfm.data[r * row..(r + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: &Path, what: &str) -> Result<Pfm> {
    decode_pfm(&read_bytes(path, what)?, path)
}

pub fn write_pfm(path: &Path, pfm: &Pfm) -> Result<()> {
    write_bytes(path, &encode_pfm(pfm))
}

pub fn write_scalar_pfm(path: &Path, grid: &Grid<f64>) -> Result<()> {
    write_pfm(
        path,
        &Pfm {
            width: grid.width(),
            height: grid.height(),
            channels: 1,
            data: grid.iter().map(|&v| v as f32).collect(),
        },
    )
}

pub fn read_scalar_pfm(path: &Path, what: &str) -> Result<Grid<f64>> {
    let pfm = read_pfm(path, what)?;
    if pfm.channels != 1 {
        return Err(format_err(path, "expected a single-channel PFM"));
    }
    Ok(Grid::from_vec(
        pfm.width,
        pfm.height,
        pfm.data.into_iter().map(f64::from).collect(),
    ))
}

/// Depth map; pixels that are non-finite or non-positive are invalid.
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    Ok(DepthMap::from_values(read_scalar_pfm(path, "depth")?))
}

/// Writes a depth map with invalid pixels stored as 0.
pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let values = depth
        .values()
        .zip_map(depth.valid(), |d, v| if *v { *d } else { 0.0 });
    write_scalar_pfm(path, &values)
}

/// Stacks equally sized planes into one single-channel PFM.
pub fn write_planes_pfm(path: &Path, planes: &[Grid<f64>]) -> Result<()> {
    let Some(first) = planes.first() else {
        return Err(Error::Config("cannot write an empty plane stack".into()));
    };
    if planes.iter().any(|p| !p.same_dims(first)) {
        return Err(Error::DimensionMismatch("planes differ in size".into()));
    }
    let data = planes
        .iter()
        .flat_map(|p| p.iter().map(|&v| v as f32))
        .collect();
    write_pfm(
        path,
        &Pfm {
            width: first.width(),
            height: first.height() * planes.len(),
            channels: 1,
            data,
        },
    )
}

/// Splits a stacked single-channel PFM into planes of the given height.
pub fn read_planes_pfm(path: &Path, plane_height: usize) -> Result<Vec<Grid<f64>>> {
    let pfm = read_pfm(path, "tensor")?;
    if pfm.channels != 1 {
        return Err(format_err(path, "expected a single-channel PFM"));
    }
    if plane_height == 0 || pfm.height % plane_height != 0 {
        return Err(format_err(
            path,
            format!(
                "height {} is not a multiple of plane height {plane_height}",
                pfm.height
            ),
        ));
    }
    let plane = pfm.width * plane_height;
    Ok(pfm
        .data
        .chunks_exact(plane)
        .map(|c| {
            Grid::from_vec(
                pfm.width,
                plane_height,
                c.iter().map(|&v| f64::from(v)).collect(),
            )
        })
        .collect())
}

fn decode_image(path: &Path, what: &str) -> Result<image::DynamicImage> {
    let bytes = read_bytes(path, what)?;
    image::load_from_memory(&bytes).map_err(|e| format_err(path, e.to_string()))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = decode_image(path, "image")?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Grid::from_fn(w as usize, h as usize, |x, y| {
        img.get_pixel(x as u32, y as u32)
            .0
            .map(|c| f64::from(c) / 255.0)
    }))
}

pub fn write_rgb(path: &Path, image: &RgbImage) -> Result<()> {
    let raw: Vec<u8> = image.iter().flat_map(|p| p.map(to_u8)).collect();
    let buf = image::RgbImage::from_raw(image.width() as u32, image.height() as u32, raw)
        .expect("buffer matches dimensions");
    create_parent(path)?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Grayscale values in `[0, 1]`.
pub fn read_gray(path: &Path, what: &str) -> Result<Grid<f64>> {
    let img = decode_image(path, what)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(Grid::from_fn(w as usize, h as usize, |x, y| {
        f64::from(img.get_pixel(x as u32, y as u32).0[0]) / 255.0
    }))
}

pub fn write_gray(path: &Path, grid: &Grid<f64>) -> Result<()> {
    let raw: Vec<u8> = grid.iter().map(|&v| to_u8(v)).collect();
    let buf = image::GrayImage::from_raw(grid.width() as u32, grid.height() as u32, raw)
        .expect("buffer matches dimensions");
    create_parent(path)?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Binary mask; any nonzero gray level counts as set.
pub fn read_mask(path: &Path, what: &str) -> Result<Mask> {
    Ok(read_gray(path, what)?.map(|&v| v > 0.0))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    write_gray(path, &mask.map(|&b| if b { 1.0 } else { 0.0 }))
}

/// Palette-indexed PNG of small integer labels.
pub fn write_index_png(path: &Path, labels: &Grid<u8>) -> Result<()> {
    create_parent(path)?;
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(
        BufWriter::new(file),
        labels.width() as u32,
        labels.height() as u32,
    );
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(PALETTE.iter().flatten().copied().collect::<Vec<u8>>());
    let mut writer = enc
        .write_header()
        .map_err(|e| format_err(path, e.to_string()))?;
    let raw: Vec<u8> = labels.iter().map(|&l| l % PALETTE.len() as u8).collect();
    writer
        .write_image_data(&raw)
        .map_err(|e| format_err(path, e.to_string()))?;
    writer
        .finish()
        .map_err(|e| format_err(path, e.to_string()))?;
    Ok(())
}

/// Reads back the raw indices of a palette PNG.
pub fn read_index_png(path: &Path) -> Result<Grid<u8>> {
    let bytes = read_bytes(path, "index map")?;
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec
        .read_info()
        .map_err(|e| format_err(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| format_err(path, e.to_string()))?;
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(format_err(path, "expected an 8-bit palette PNG"));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    Ok(Grid::from_fn(w, h, |x, y| buf[y * info.line_size + x]))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let bytes = read_bytes(path, what)?;
    serde_json::from_slice(&bytes).map_err(|e| format_err(path, e.to_string()))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_camera(path: &Path) -> Result<Camera> {
    read_json(path, "camera")
}

pub fn write_camera(path: &Path, cam: &Camera) -> Result<()> {
    write_json(path, cam)
}

/// Wavefront OBJ with per-vertex colors (`v x y z r g b`) and 1-based faces.
pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    create_parent(path)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (i, p) in mesh.positions.iter().enumerate() {
        match mesh.colors.get(i) {
            Some(c) => writeln!(w, "v {} {} {} {} {} {}", p.x, p.y, p.z, c[0], c[1], c[2])?,
            None => writeln!(w, "v {} {} {}", p.x, p.y, p.z)?,
        }
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// One view record; paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<String>,
    #[serde(default)]
    pub inpainted: bool,
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads every view listed in a scene manifest.
pub fn read_scene(manifest: &Path) -> Result<Vec<View>> {
    let entries: Vec<ManifestEntry> = read_json(manifest, "manifest")?;
    let base = base_dir(manifest);
    entries
        .iter()
        .map(|e| {
            let mut view = View::new(
                read_rgb(&base.join(&e.image))?,
                read_mask(&base.join(&e.mask), "mask")?,
            )?;
            view.inpainted = e.inpainted;
            if let Some(c) = &e.camera {
                view.camera = Some(read_camera(&base.join(c))?);
            }
            if let Some(d) = &e.depth {
                let depth = read_depth(&base.join(d))?;
                if depth.width() != view.width() || depth.height() != view.height() {
                    return Err(format_err(
                        &base.join(d),
                        "depth size differs from image size",
                    ));
                }
                view.depth = Some(depth);
            }
            Ok(view)
        })
        .collect()
}

/// Writes views as `view_NNN/{image.png, mask.png, depth.pfm, camera.json}` plus `manifest.json`.
pub fn write_scene(dir: &Path, views: &[View]) -> Result<()> {
    let mut entries = Vec::with_capacity(views.len());
    for (i, v) in views.iter().enumerate() {
        let name = format!("view_{i:03}");
        let rel = |file: &str| format!("{name}/{file}");
        write_rgb(&dir.join(rel("image.png")), &v.image)?;
        write_mask(&dir.join(rel("mask.png")), &v.mask)?;
        let depth = match &v.depth {
            Some(d) => {
                write_depth(&dir.join(rel("depth.pfm")), d)?;
                Some(rel("depth.pfm"))
            }
            None => None,
        };
        let camera = match &v.camera {
            Some(c) => {
                write_camera(&dir.join(rel("camera.json")), c)?;
                Some(rel("camera.json"))
            }
            None => None,
        };
        entries.push(ManifestEntry {
            image: rel("image.png"),
            mask: rel("mask.png"),
            depth,
            camera,
            inpainted: v.inpainted,
        });
    }
    write_json(&dir.join("manifest.json"), &entries)
}
