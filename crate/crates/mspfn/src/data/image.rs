//! Float RGB images with PPM (P6) and PNG round-trips, geometry helpers,
//! and a procedural clean-image generator for desk-scale experiments.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{reflect101, Element, Tensor};

/// Interleaved RGB image with one `f64` per channel, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    rgb: Vec<f64>,
}

impl ImageF {
    /// All-black image of the given size.
    pub fn new(height: usize, width: usize) -> Self {
        ImageF {
            height,
            width,
            rgb: vec![0.0; height * width * 3],
        }
    }

    /// Wrap an interleaved RGB buffer (`height * width * 3` finite values).
    pub fn from_rgb(height: usize, width: usize, rgb: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image", "dimensions must be at least 1x1"));
        }
        if rgb.len() != height * width * 3 {
            return Err(Error::invalid(
                "image",
                format!(
                    "buffer holds {} values but {}x{} RGB needs {}",
                    rgb.len(),
                    height,
                    width,
                    height * width * 3
                ),
            ));
        }
        if rgb.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image", "pixel values must be finite"));
        }
        Ok(ImageF { height, width, rgb })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Interleaved RGB buffer, row-major.
    pub fn rgb(&self) -> &[f64] {
        &self.rgb
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.rgb[(y * self.width + x) * 3 + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.rgb[(y * self.width + x) * 3 + c] = v;
    }

    /// Convert to a planar `[1, 3, H, W]` tensor.
    pub fn to_tensor<E: Element>(&self) -> Tensor<E> {
        let (h, w) = (self.height, self.width);
        let mut data = vec![E::zero(); 3 * h * w];
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data[(c * h + y) * w + x] = E::from_f64(self.get(y, x, c));
                }
            }
        }
        Tensor::from_vec([1, 3, h, w], data).expect("sized by construction")
    }

    /// Convert a `[1, 3, H, W]` tensor back to an image, clamping to `[0, 1]`.
    pub fn from_tensor<E: Element>(t: &Tensor<E>) -> Result<Self> {
        let [n, c, h, w] = t.shape();
        if n != 1 || c != 3 {
            return Err(Error::invalid(
                "image",
                format!("expected a [1, 3, H, W] tensor, got {:?}", t.shape()),
            ));
        }
        let mut img = ImageF::new(h, w);
        for ch in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    img.set(y, x, ch, t.at(0, ch, y, x).as_f64().clamp(0.0, 1.0));
                }
            }
        }
        Ok(img)
    }

    /// Largest absolute per-channel difference between two same-sized images.
    pub fn max_abs_diff(&self, other: &ImageF) -> Result<f64> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::invalid(
                "image",
                format!(
                    "size mismatch: {}x{} vs {}x{}",
                    self.height, self.width, other.height, other.width
                ),
            ));
        }
        Ok(self
            .rgb
            .iter()
            .zip(&other.rgb)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn extension(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| Error::ImageFormat {
            path: path.to_path_buf(),
            msg: "missing file extension (expected .ppm or .png)".into(),
        })
}

/// Load an 8-bit PPM (P6) or PNG image as floats in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageF> {
    let path = path.as_ref();
    match extension(path)?.as_str() {
        "ppm" => read_ppm(path),
        "png" => read_png(path),
        other => Err(Error::ImageFormat {
            path: path.to_path_buf(),
            msg: format!("unsupported format .{other} (expected .ppm or .png)"),
        }),
    }
}

/// Save an image as 8-bit PPM (P6) or PNG, chosen by file extension.
pub fn save_image(img: &ImageF, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match extension(path)?.as_str() {
        "ppm" => write_ppm(img, path),
        "png" => write_png(img, path),
        other => Err(Error::ImageFormat {
            path: path.to_path_buf(),
            msg: format!("unsupported format .{other} (expected .ppm or .png)"),
        }),
    }
}

struct PpmParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PpmParser<'a> {
    fn skip_space_and_comments(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn uint(&mut self, what: &str) -> std::result::Result<usize, String> {
        let tok = self.token().ok_or_else(|| format!("missing {what}"))?;
        let s = std::str::from_utf8(tok).map_err(|_| format!("non-ASCII {what}"))?;
        s.parse::<usize>().map_err(|_| format!("invalid {what} {s:?}"))
    }
}

fn read_ppm(path: &Path) -> Result<ImageF> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ppm(&bytes).map_err(|msg| Error::ImageFormat {
        path: path.to_path_buf(),
        msg,
    })
}

fn parse_ppm(bytes: &[u8]) -> std::result::Result<ImageF, String> {
    let mut p = PpmParser { bytes, pos: 0 };
    let magic = p.token().ok_or("empty file")?;
    if magic != b"P6" {
        return Err(format!(
            "not a binary PPM: expected magic \"P6\", found {:?}",
            String::from_utf8_lossy(magic)
        ));
    }
    let width = p.uint("width")?;
    let height = p.uint("height")?;
    let maxval = p.uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(format!("degenerate dimensions {width}x{height}"));
    }
    if width.saturating_mul(height) > 100_000_000 {
        return Err(format!("dimensions {width}x{height} exceed supported size"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("only 8-bit PPM supported (maxval <= 255), got {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if p.pos >= bytes.len() || !bytes[p.pos].is_ascii_whitespace() {
        return Err("missing whitespace before pixel data".into());
    }
    p.pos += 1;
    let needed = width * height * 3;
    let raster = &bytes[p.pos..];
    if raster.len() < needed {
        return Err(format!(
            "truncated pixel data: need {needed} bytes, found {}",
            raster.len()
        ));
    }
    let scale = 1.0 / maxval as f64;
    let rgb = raster[..needed].iter().map(|&b| b as f64 * scale).collect();
    ImageF::from_rgb(height, width, rgb).map_err(|e| e.to_string())
}

fn write_ppm(img: &ImageF, path: &Path) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.rgb.iter().map(|&v| quantize(v)));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_png(path: &Path) -> Result<ImageF> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| Error::ImageFormat {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let rgb8 = decoded.to_rgb8();
    let (w, h) = rgb8.dimensions();
    let rgb = rgb8.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    ImageF::from_rgb(h as usize, w as usize, rgb).map_err(|e| Error::ImageFormat {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn write_png(img: &ImageF, path: &Path) -> Result<()> {
    let raw: Vec<u8> = img.rgb.iter().map(|&v| quantize(v)).collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, raw)
        .ok_or_else(|| Error::invalid("image", "buffer size mismatch while encoding PNG"))?;
    buf.save(path).map_err(|e| Error::ImageFormat {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Grow an `[N, C, H, W]` tensor to `new_h x new_w` by mirroring interior
/// rows/columns across the last row/column (the border sample itself is not
/// repeated). Used to make arbitrary inputs divisible before a forward pass.
pub fn pad_reflect<E: Element>(t: &Tensor<E>, new_h: usize, new_w: usize) -> Result<Tensor<E>> {
    let [n, c, h, w] = t.shape();
    if new_h < h || new_w < w {
        return Err(Error::invalid(
            "pad_reflect",
            format!("target {new_h}x{new_w} smaller than input {h}x{w}"),
        ));
    }
    let src = t.data();
    let mut out = vec![E::zero(); n * c * new_h * new_w];
    for ni in 0..n {
        for ci in 0..c {
            let splane = (ni * c + ci) * h * w;
            let dplane = (ni * c + ci) * new_h * new_w;
            for y in 0..new_h {
                let sy = reflect101(y as isize, h);
                for x in 0..new_w {
                    let sx = reflect101(x as isize, w);
                    out[dplane + y * new_w + x] = src[splane + sy * w + sx];
                }
            }
        }
    }
    Tensor::from_vec([n, c, new_h, new_w], out)
}

/// Copy a `height x width` window starting at `(y0, x0)` out of every plane.
pub fn crop<E: Element>(
    t: &Tensor<E>,
    y0: usize,
    x0: usize,
    height: usize,
    width: usize,
) -> Result<Tensor<E>> {
    let [n, c, h, w] = t.shape();
    if y0 + height > h || x0 + width > w {
        return Err(Error::invalid(
            "crop",
            format!("window {height}x{width}+{y0}+{x0} exceeds image {h}x{w}"),
        ));
    }
    let src = t.data();
    let mut out = vec![E::zero(); n * c * height * width];
    for ni in 0..n {
        for ci in 0..c {
            let splane = (ni * c + ci) * h * w;
            let dplane = (ni * c + ci) * height * width;
            for y in 0..height {
                let srow = splane + (y0 + y) * w + x0;
                let drow = dplane + y * width;
                out[drow..drow + width].copy_from_slice(&src[srow..srow + width]);
            }
        }
    }
    Tensor::from_vec([n, c, height, width], out)
}

struct Blob {
    is_disc: bool,
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    color: [f64; 3],
    alpha: f64,
}

/// Deterministic procedural "clean" photo stand-in: smooth per-channel
/// colour waves with a handful of soft-edged discs and rectangles layered on
/// top, so both low-frequency content and sharp edges are present.
pub fn synthetic_clean(height: usize, width: usize, seed: u64) -> ImageF {
    let tau = std::f64::consts::TAU;
    let mut rng = Rng::seed_from_u64(seed);
    // Two oriented cosine waves per channel.
    let mut waves = Vec::with_capacity(6);
    for _ in 0..6 {
        waves.push((
            rng.uniform(0.06, 0.18),
            rng.uniform(-2.5, 2.5),
            rng.uniform(-2.5, 2.5),
            rng.uniform(0.0, tau),
        ));
    }
    let min_dim = height.min(width) as f64;
    let n_blobs = 4 + rng.below(3);
    let mut blobs = Vec::with_capacity(n_blobs);
    for _ in 0..n_blobs {
        let is_disc = rng.below(2) == 0;
        blobs.push(Blob {
            is_disc,
            cy: rng.uniform(0.1, 0.9) * height as f64,
            cx: rng.uniform(0.1, 0.9) * width as f64,
            ry: rng.uniform(0.08, 0.28) * min_dim,
            rx: rng.uniform(0.08, 0.28) * min_dim,
            color: [
                rng.uniform(0.05, 0.95),
                rng.uniform(0.05, 0.95),
                rng.uniform(0.05, 0.95),
            ],
            alpha: rng.uniform(0.55, 0.95),
        });
    }
    let mut img = ImageF::new(height, width);
    for y in 0..height {
        for x in 0..width {
            let u = (x as f64 + 0.5) / width as f64;
            let v = (y as f64 + 0.5) / height as f64;
            let mut px = [0.5f64; 3];
            for (i, &(amp, fu, fv, phase)) in waves.iter().enumerate() {
                px[i / 2] += amp * (tau * (fu * u + fv * v) + phase).cos();
            }
            for b in &blobs {
                let dy = y as f64 + 0.5 - b.cy;
                let dx = x as f64 + 0.5 - b.cx;
                let dist = if b.is_disc {
                    (dy * dy + dx * dx).sqrt() - b.ry
                } else {
                    (dy.abs() - b.ry).max(dx.abs() - b.rx)
                };
                // One-pixel-wide soft edge.
                let coverage = (0.5 - dist).clamp(0.0, 1.0);
                let a = b.alpha * coverage;
                for c in 0..3 {
                    px[c] = (1.0 - a) * px[c] + a * b.color[c];
                }
            }
            for c in 0..3 {
                img.set(y, x, c, px[c].clamp(0.02, 0.98));
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_roundtrip_error_within_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let mut rng = Rng::seed_from_u64(7);
        let rgb: Vec<f64> = (0..9 * 7 * 3).map(|_| rng.next_f64()).collect();
        let img = ImageF::from_rgb(9, 7, rgb).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.height(), 9);
        assert_eq!(back.width(), 7);
        let max = img.max_abs_diff(&back).unwrap();
        assert!(max <= 1.0 / 510.0 + 1e-12, "max diff {max}");
    }

    #[test]
    fn png_roundtrip_error_within_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut rng = Rng::seed_from_u64(8);
        let rgb: Vec<f64> = (0..6 * 11 * 3).map(|_| rng.next_f64()).collect();
        let img = ImageF::from_rgb(6, 11, rgb).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        let max = img.max_abs_diff(&back).unwrap();
        assert!(max <= 1.0 / 510.0 + 1e-12, "max diff {max}");
    }

    #[test]
    fn second_roundtrip_is_exact() {
        // Once quantized, save -> load is a fixed point.
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ppm");
        let p2 = dir.path().join("b.ppm");
        let img = synthetic_clean(12, 10, 3);
        save_image(&img, &p1).unwrap();
        let once = load_image(&p1).unwrap();
        save_image(&once, &p2).unwrap();
        let twice = load_image(&p2).unwrap();
        assert_eq!(once, twice);
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn pure_red_ppm_fixture_reads_as_unit_red() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.ppm");
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend([255u8, 0, 0].repeat(4));
        fs::write(&path, bytes).unwrap();
        let img = load_image(&path).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(img.get(y, x, 0), 1.0);
                assert_eq!(img.get(y, x, 1), 0.0);
                assert_eq!(img.get(y, x, 2), 0.0);
            }
        }
    }

    #[test]
    fn ppm_header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        let mut bytes = b"P6\n# a comment\n2 # inline\n1\n# another\n255\n".to_vec();
        bytes.extend([10u8, 20, 30, 40, 50, 60]);
        fs::write(&path, bytes).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!((img.height(), img.width()), (1, 2));
        assert!((img.get(0, 1, 2) - 60.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let err = load_image("/definitely/not/here.ppm").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.ppm"));
    }

    #[test]
    fn unsupported_extension_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageF::new(2, 2);
        let err = save_image(&img, dir.path().join("x.bmp")).unwrap_err();
        assert!(err.to_string().contains("unsupported format"));
        let err = load_image(dir.path().join("x.bmp")).unwrap_err();
        assert!(err.to_string().contains("unsupported format"));
    }

    #[test]
    fn sixteen_bit_ppm_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.ppm");
        fs::write(&path, b"P6\n1 1\n65535\n\x00\x01\x02\x03\x04\x05").unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(err.to_string().contains("maxval"));
    }

    #[test]
    fn truncated_ppm_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.ppm");
        fs::write(&path, b"P6\n2 2\n255\n\x01\x02").unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn tensor_roundtrip_is_exact_in_f64() {
        let img = synthetic_clean(8, 9, 11);
        let t = img.to_tensor::<f64>();
        assert_eq!(t.shape(), [1, 3, 8, 9]);
        let back = ImageF::from_tensor(&t).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn synthetic_clean_is_deterministic_varied_and_in_gamut() {
        let a = synthetic_clean(32, 24, 5);
        let b = synthetic_clean(32, 24, 5);
        let c = synthetic_clean(32, 24, 6);
        assert_eq!(a, b);
        assert!(a.max_abs_diff(&c).unwrap() > 1e-3, "seeds should differ");
        assert!(a.rgb().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let mean = a.rgb().iter().sum::<f64>() / a.rgb().len() as f64;
        let var = a.rgb().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.rgb().len() as f64;
        assert!(var.sqrt() > 0.01, "image should have spatial variation");
    }

    #[test]
    fn pad_reflect_mirrors_interior_samples() {
        // Row [a b c] padded to width 6 becomes [a b c b a b].
        let t = Tensor::<f64>::from_f64_slice([1, 1, 1, 3], &[1.0, 2.0, 3.0]).unwrap();
        let p = pad_reflect(&t, 1, 6).unwrap();
        assert_eq!(p.data(), &[1.0, 2.0, 3.0, 2.0, 1.0, 2.0]);
        let err = pad_reflect(&t, 1, 2).unwrap_err();
        assert!(err.to_string().contains("smaller"));
    }

    #[test]
    fn crop_extracts_the_window() {
        let t = Tensor::<f64>::from_f64_slice(
            [1, 1, 3, 3],
            &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        )
        .unwrap();
        let c = crop(&t, 1, 0, 2, 2).unwrap();
        assert_eq!(c.shape(), [1, 1, 2, 2]);
        assert_eq!(c.data(), &[3.0, 4.0, 6.0, 7.0]);
        assert!(crop(&t, 2, 2, 2, 2).is_err());
    }
}
