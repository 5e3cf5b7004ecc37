//! 8-bit PNG reading/writing and the preprocessing pipeline: bilinear resize
//! to the configured square size, channel conversion (ITU-R 601 luma for
//! RGB -> gray, replication for gray -> RGB), then scaling to [0, 1].

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

pub const LUMA_R: f32 = 0.299;
pub const LUMA_G: f32 = 0.587;
pub const LUMA_B: f32 = 0.114;

/// Raw decoded image: 8-bit samples, interleaved channels.
#[derive(Debug)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bytes: Vec<u8>,
}

pub fn read_png(path: &Path) -> Result<RawImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(file);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| Error::Image {
        path: path.into(),
        detail: e.to_string(),
    })?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Image {
        path: path.into(),
        detail: e.to_string(),
    })?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Image {
            path: path.into(),
            detail: format!("unsupported bit depth {:?}, want 8", info.bit_depth),
        });
    }
    let (channels, stride) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (1, 2),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (3, 4),
        other => {
            return Err(Error::Image {
                path: path.into(),
                detail: format!("unsupported color type {other:?}"),
            })
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    buf.truncate(w * h * stride);
    let bytes = if stride == channels {
        buf
    } else {
        // Drop the alpha channel.
        let mut out = Vec::with_capacity(w * h * channels);
        for px in buf.chunks(stride) {
            out.extend_from_slice(&px[..channels]);
        }
        out
    };
    Ok(RawImage {
        width: w,
        height: h,
        channels,
        bytes,
    })
}

/// Write interleaved 8-bit samples as grayscale (1 channel) or RGB (3).
pub fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    channels: usize,
    bytes: &[u8],
) -> Result<()> {
    assert_eq!(bytes.len(), width * height * channels);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(match channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        other => panic!("write_png supports 1 or 3 channels, got {other}"),
    });
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| Error::Image {
        path: path.into(),
        detail: e.to_string(),
    })?;
    writer.write_image_data(bytes).map_err(|e| Error::Image {
        path: path.into(),
        detail: e.to_string(),
    })?;
    Ok(())
}

/// Bilinear resample of one channel plane (values kept in the byte range).
fn resize_plane(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    if sw == dw && sh == dh {
        return src.to_vec();
    }
    let mut dst = vec![0.0f32; dw * dh];
    let sx = sw as f32 / dw as f32;
    let sy = sh as f32 / dh as f32;
    for oy in 0..dh {
        let fy = ((oy as f32 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = fy - y0 as f32;
        for ox in 0..dw {
            let fx = ((ox as f32 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = fx - x0 as f32;
            let top = src[y0 * sw + x0] * (1.0 - tx) + src[y0 * sw + x1] * tx;
            let bot = src[y1 * sw + x0] * (1.0 - tx) + src[y1 * sw + x1] * tx;
            dst[oy * dw + ox] = top * (1.0 - ty) + bot * ty;
        }
    }
    dst
}

/// Resize + channel-convert + scale one decoded image into planar CHW floats
/// in [0, 1].
pub fn preprocess(raw: &RawImage, image_size: usize, channels: usize) -> Result<Vec<f32>> {
    if channels != 1 && channels != 3 {
        return Err(Error::Config(format!(
            "requested channels must be 1 or 3, got {channels}"
        )));
    }
    // De-interleave into planes of byte-valued floats.
    let n = raw.width * raw.height;
    let mut planes: Vec<Vec<f32>> = vec![Vec::with_capacity(n); raw.channels];
    for px in raw.bytes.chunks(raw.channels) {
        for (c, &v) in px.iter().enumerate() {
            planes[c].push(v as f32);
        }
    }
    let resized: Vec<Vec<f32>> = planes
        .iter()
        .map(|p| resize_plane(p, raw.width, raw.height, image_size, image_size))
        .collect();
    let converted: Vec<Vec<f32>> = match (raw.channels, channels) {
        (a, b) if a == b => resized,
        (3, 1) => {
            let luma = resized[0]
                .iter()
                .zip(&resized[1])
                .zip(&resized[2])
                .map(|((&r, &g), &b)| LUMA_R * r + LUMA_G * g + LUMA_B * b)
                .collect();
            vec![luma]
        }
        (1, 3) => vec![resized[0].clone(), resized[0].clone(), resized[0].clone()],
        (a, b) => {
            return Err(Error::Config(format!(
                "cannot convert {a}-channel image to {b} channels"
            )))
        }
    };
    let mut out = Vec::with_capacity(channels * image_size * image_size);
    for plane in &converted {
        out.extend(plane.iter().map(|&v| v / 255.0));
    }
    Ok(out)
}

pub fn load_image(path: &Path, image_size: usize, channels: usize) -> Result<Vec<f32>> {
    let raw = read_png(path)?;
    preprocess(&raw, image_size, channels)
}

/// Quantize [0, 1] floats back to bytes (round, clamp).
pub fn quantize(values: &[f32]) -> Vec<u8> {
    values
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Planar CHW -> interleaved HWC bytes for PNG output.
pub fn planar_to_interleaved(
    planar: &[u8],
    width: usize,
    height: usize,
    channels: usize,
) -> Vec<u8> {
    let n = width * height;
    let mut out = vec![0u8; planar.len()];
    for c in 0..channels {
        for i in 0..n {
            out[i * channels + c] = planar[c * n + i];
        }
    }
    out
}

/// Sorted list of `.png` files directly inside `dir`.
pub fn png_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!("no PNG files in {}", dir.display())));
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("cvad_image_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn png_round_trip_gray() {
        let bytes: Vec<u8> = (0..16).map(|i| (i * 16) as u8).collect();
        let path = temp_path("gray4.png");
        write_png(&path, 4, 4, 1, &bytes).unwrap();
        let raw = read_png(&path).unwrap();
        assert_eq!((raw.width, raw.height, raw.channels), (4, 4, 1));
        assert_eq!(raw.bytes, bytes);
    }

    #[test]
    fn conforming_image_is_byte_over_255() {
        let bytes: Vec<u8> = vec![0, 51, 102, 255];
        let path = temp_path("conform.png");
        write_png(&path, 2, 2, 1, &bytes).unwrap();
        let vals = load_image(&path, 2, 1).unwrap();
        for (v, b) in vals.iter().zip(&bytes) {
            assert_eq!(*v, *b as f32 / 255.0);
        }
    }

    #[test]
    fn luma_conversion_hand_computed() {
        // 2x2 RGB image, requested as a single channel at the same size.
        let rgb: Vec<u8> = vec![
            255, 0, 0, /**/ 0, 255, 0, //
            0, 0, 255, /**/ 100, 150, 200,
        ];
        let path = temp_path("rgb2.png");
        write_png(&path, 2, 2, 3, &rgb).unwrap();
        let vals = load_image(&path, 2, 1).unwrap();
        let expect = [
            0.299f32 * 255.0,
            0.587 * 255.0,
            0.114 * 255.0,
            0.299 * 100.0 + 0.587 * 150.0 + 0.114 * 200.0,
        ];
        for (v, e) in vals.iter().zip(&expect) {
            assert!((v - e / 255.0).abs() < 1e-6, "{v} vs {}", e / 255.0);
        }
    }

    #[test]
    fn constant_image_resizes_to_same_constant() {
        let bytes = vec![77u8; 8 * 8];
        let path = temp_path("const8.png");
        write_png(&path, 8, 8, 1, &bytes).unwrap();
        let vals = load_image(&path, 4, 1).unwrap();
        for v in vals {
            assert!((v - 77.0 / 255.0).abs() < 1e-6);
        }
    }

    #[test]
    fn undecodable_file_reports_path() {
        let path = temp_path("not_a_png.png");
        std::fs::write(&path, b"definitely not a png").unwrap();
        let err = read_png(&path).unwrap_err();
        assert!(err.to_string().contains("not_a_png"));
    }

    #[test]
    fn empty_folder_is_dataset_error() {
        let dir = std::env::temp_dir().join("cvad_empty_folder_test");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let err = png_files(&dir).unwrap_err();
        assert!(err.to_string().contains("no PNG files"));
    }

    #[test]
    fn rgba_alpha_dropped() {
        let path = temp_path("rgba.png");
        // encode an RGBA png manually through the png crate
        let file = std::fs::File::create(&path).unwrap();
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), 2, 1);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(&[10, 20, 30, 255, 40, 50, 60, 128])
            .unwrap();
        drop(w);
        let raw = read_png(&path).unwrap();
        assert_eq!(raw.channels, 3);
        assert_eq!(raw.bytes, vec![10, 20, 30, 40, 50, 60]);
    }
}
