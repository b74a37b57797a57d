//! Image file codecs.
//!
//! PNG and JPEG are read through the `image` crate and scaled to `[0, 1]`
//! (8-bit by 255, 16-bit by 65535). Output rasters are always PNG: values
//! are clamped to `[0, 1]` and quantized with round-half-up. PFM files are
//! read and written losslessly as little-endian `f32`.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{invalid, Error, Result};
use crate::tensor::{ImageTensor, Shape};

/// File extensions the loaders accept (lowercase).
pub const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "pfm"];

pub fn is_image_path(path: &Path) -> bool {
    extension(path).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str()))
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

/// Loads a PNG, JPEG or PFM file as a `1×C×H×W` tensor. Raster formats
/// always yield three channels.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    if extension(path).as_deref() == Some("pfm") {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        return decode_pfm(&bytes).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        });
    }
    let decoded = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    Ok(raster_to_tensor(&decoded))
}

fn raster_to_tensor(img: &DynamicImage) -> ImageTensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let shape = Shape::new(1, 3, h, w);
    let p = h * w;
    let mut data = vec![0.0f32; 3 * p];
    let wide = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    if wide {
        let rgb = img.to_rgb16();
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * p + i] = px.0[c] as f32 / 65535.0;
            }
        }
    } else {
        let rgb = img.to_rgb8();
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * p + i] = px.0[c] as f32 / 255.0;
            }
        }
    }
    ImageTensor::from_raw(shape, data)
}

/// `[0, 1]` to 8-bit with clamping and round-half-up.
pub fn quantize_u8(v: f32) -> u8 {
    ((v as f64).clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Writes a single-image tensor. `.pfm` targets are written exactly;
/// `.png` targets are quantized to 8 bits (gray for one channel, RGB for
/// three). Other extensions are refused.
pub fn save_image(img: &ImageTensor, path: &Path) -> Result<()> {
    let s = img.shape();
    if s.n != 1 {
        return Err(invalid(format!("can only save a single image, got batch of {}", s.n)));
    }
    match extension(path).as_deref() {
        Some("pfm") => return save_pfm(img, path),
        Some("png") => {}
        _ => {
            return Err(Error::Encode {
                path: path.to_path_buf(),
                reason: "outputs must be .png or .pfm".into(),
            })
        }
    }
    let (w, h) = (s.w as u32, s.h as u32);
    let encode_err = |e: image::ImageError| Error::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    if s.c == 1 {
        let buf: Vec<u8> = img.data().iter().map(|&v| quantize_u8(v)).collect();
        let gray = GrayImage::from_raw(w, h, buf).expect("buffer sized from shape");
        gray.save_with_format(path, ImageFormat::Png).map_err(encode_err)
    } else {
        let p = s.plane();
        let mut buf = Vec::with_capacity(3 * p);
        for i in 0..p {
            for c in 0..3 {
                buf.push(quantize_u8(img.data()[c * p + i]));
            }
        }
        let rgb = RgbImage::from_raw(w, h, buf).expect("buffer sized from shape");
        rgb.save_with_format(path, ImageFormat::Png).map_err(encode_err)
    }
}

/// Serializes a `1×C×H×W` tensor as PFM: `Pf` (gray) or `PF` (RGB) header,
/// scale `-1.0` (little-endian), rows stored bottom to top.
pub fn encode_pfm(img: &ImageTensor) -> Result<Vec<u8>> {
    let s = img.shape();
    if s.n != 1 {
        return Err(invalid(format!("PFM holds a single image, got batch of {}", s.n)));
    }
    let tag = if s.c == 1 { "Pf" } else { "PF" };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", s.w, s.h).into_bytes();
    out.reserve(s.len() * 4);
    for y in (0..s.h).rev() {
        for x in 0..s.w {
            for c in 0..s.c {
                out.extend_from_slice(&img.get(0, c, y, x).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn save_pfm(img: &ImageTensor, path: &Path) -> Result<()> {
    let bytes = encode_pfm(img)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ImageTensor> {
    // three whitespace-terminated header tokens plus the dimensions line
    let mut tokens = Vec::with_capacity(4);
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
            return Err(invalid("truncated PFM header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| invalid("non-ASCII PFM header"))?);
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match tokens[0] {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(invalid(format!("bad PFM magic {other:?}"))),
    };
    let parse_dim = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| invalid(format!("bad PFM dimension {t:?}")))
    };
    let w = parse_dim(tokens[1])?;
    let h = parse_dim(tokens[2])?;
    let scale: f32 = tokens[3]
        .parse()
        .map_err(|_| invalid(format!("bad PFM scale {:?}", tokens[3])))?;
    let little = scale < 0.0;
    let shape = Shape::new(1, channels, h, w);
    let need = shape.len() * 4;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| invalid(format!("PFM raster needs {need} bytes")))?;
    let mut data = vec![0.0f32; shape.len()];
    let p = h * w;
    for (k, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let pix = k / channels;
        let c = k % channels;
        let (row_from_bottom, x) = (pix / w, pix % w);
        let y = h - 1 - row_from_bottom;
        data[c * p + y * w + x] = v;
    }
    ImageTensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_header_and_row_order() {
        let img = ImageTensor::new(Shape::new(1, 1, 2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = encode_pfm(&img).unwrap();
        let header = b"Pf\n3 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
        // bottom row first
        assert_eq!(first, 4.0);
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn pfm_color_round_trip() {
        let img = ImageTensor::from_fn(Shape::new(1, 3, 3, 2), |_, c, y, x| {
            (c * 100 + y * 10 + x) as f32 * 0.01
        })
        .unwrap();
        assert_eq!(decode_pfm(&encode_pfm(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn pfm_rejects_garbage() {
        assert!(decode_pfm(b"P6\n1 1\n255\n").is_err());
        assert!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0").is_err());
    }

    #[test]
    fn quantization_rounds_half_up_and_clamps() {
        assert_eq!(quantize_u8(128.0 / 255.0), 128);
        assert_eq!(quantize_u8(-0.3), 0);
        assert_eq!(quantize_u8(1.7), 255);
        assert_eq!(quantize_u8(0.5), 128);
        for k in 0..=255u8 {
            assert_eq!(quantize_u8(k as f32 / 255.0), k);
        }
    }

    #[test]
    fn png_round_trip_and_black() {
        let dir = tempfile::tempdir().unwrap();
        let black = ImageTensor::zeros(Shape::new(1, 3, 4, 5)).unwrap();
        let p = dir.path().join("black.png");
        save_image(&black, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), black);

        let img = ImageTensor::from_fn(Shape::new(1, 3, 4, 5), |_, c, y, x| {
            ((c * 71 + y * 13 + x * 29) % 256) as f32 / 255.0
        })
        .unwrap();
        let p = dir.path().join("x.png");
        save_image(&img, &p).unwrap();
        let once = load_image(&p).unwrap();
        assert_eq!(once, img);
        assert!((once.get(0, 0, 0, 0) - 0.0).abs() < 1e-9);
        let p2 = dir.path().join("y.png");
        save_image(&once, &p2).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn value_128_decodes_to_expected_fraction() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        image::RgbImage::from_pixel(2, 2, image::Rgb([128, 128, 128]))
            .save(&p)
            .unwrap();
        let t = load_image(&p).unwrap();
        assert!((t.data()[0] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn sixteen_bit_png_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.png");
        let img = image::ImageBuffer::<image::Rgb<u16>, _>::from_pixel(1, 1, image::Rgb([13107u16, 0, 65535]));
        img.save(&p).unwrap();
        let t = load_image(&p).unwrap();
        assert!((t.data()[0] - 0.2).abs() < 1e-7);
        assert_eq!(t.data()[2], 1.0);
    }

    #[test]
    fn decode_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("broken.png");
        fs::write(&p, b"not a png").unwrap();
        let err = load_image(&p).unwrap_err().to_string();
        assert!(err.contains("broken.png"), "{err}");
        assert!(save_image(
            &ImageTensor::zeros(Shape::new(1, 3, 1, 1)).unwrap(),
            &dir.path().join("o.jpg")
        )
        .is_err());
    }
}
