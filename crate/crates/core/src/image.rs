//! Linear-RGB image buffer and file export.
//!
//! Buffers hold linear values in `[0, 1]`. 8-bit exports (PNG, PPM) apply a
//! plain gamma 2.2 encode; PFM stores the linear floats unchanged and is the
//! format used for golden images.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const DISPLAY_GAMMA: f64 = 2.2;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    /// Row-major, top row first.
    pub rgb: Vec<[f32; 3]>,
    /// Final per-pixel transmittance, when produced by a renderer.
    pub transmittance: Option<Vec<f32>>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            rgb: vec![[0.0; 3]; width as usize * height as usize],
            transmittance: None,
        }
    }

    pub fn filled(width: u32, height: u32, value: [f32; 3]) -> Self {
        Self {
            rgb: vec![value; width as usize * height as usize],
            ..Self::new(width, height)
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        self.rgb[self.index(x, y)]
    }

    pub fn same_size(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Largest absolute per-channel difference; `None` when sizes differ.
    pub fn max_abs_diff(&self, other: &ImageBuffer) -> Option<f64> {
        if !self.same_size(other) {
            return None;
        }
        Some(
            self.rgb
                .iter()
                .zip(&other.rgb)
                .flat_map(|(a, b)| (0..3).map(move |c| (a[c] as f64 - b[c] as f64).abs()))
                .fold(0.0, f64::max),
        )
    }

    /// Gamma-encoded 8-bit RGB bytes.
    pub fn to_display_bytes(&self) -> Vec<u8> {
        self.rgb.iter().flat_map(|p| p.map(encode_display)).collect()
    }

    /// Gamma-encoded 8-bit RGBA bytes with opaque alpha.
    pub fn to_display_rgba(&self) -> Vec<u8> {
        self.rgb
            .iter()
            .flat_map(|p| {
                let [r, g, b] = p.map(encode_display);
                [r, g, b, 255]
            })
            .collect()
    }

    /// Writes the image, choosing the format from the extension
    /// (`png`, `ppm`, `pfm`).
    pub fn save(&self, path: &Path) -> Result<()> {
        match extension(path).as_deref() {
            Some("png") => self.save_png(path),
            Some("ppm") => self.save_ppm(path),
            Some("pfm") => self.save_pfm(path),
            _ => Err(Error::InvalidParameter(format!(
                "{}: unsupported image extension (use .png, .ppm or .pfm)",
                path.display()
            ))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        match extension(path).as_deref() {
            Some("png") => Self::load_png(path),
            Some("pfm") => Self::load_pfm(path),
            _ => Err(Error::InvalidParameter(format!(
                "{}: unsupported image extension (use .png or .pfm)",
                path.display()
            ))),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_png(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn write_png<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut enc = png::Encoder::new(w, self.width, self.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(std::io::Error::other)?;
        writer
            .write_image_data(&self.to_display_bytes())
            .map_err(std::io::Error::other)?;
        writer.finish().map_err(std::io::Error::other)
    }

    /// Decodes an 8-bit PNG and undoes the display gamma.
    pub fn load_png(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder
            .read_info()
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::parse(path, 0, "image too large"))?;
        let mut buf = vec![0u8; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let channels = info.color_type.samples();
        if channels < 3 {
            return Err(Error::parse(path, 0, "expected an RGB or RGBA image"));
        }
        let mut img = ImageBuffer::new(info.width, info.height);
        for (i, px) in img.rgb.iter_mut().enumerate() {
            let o = i * channels;
            *px = [decode_display(buf[o]), decode_display(buf[o + 1]), decode_display(buf[o + 2])];
        }
        Ok(img)
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(path)?);
            write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
            w.write_all(&self.to_display_bytes())?;
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    /// Portable float map, little-endian, rows stored bottom to top.
    pub fn save_pfm(&self, path: &Path) -> Result<()> {
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(path)?);
            write!(w, "PF\n{} {}\n-1.0\n", self.width, self.height)?;
            for y in (0..self.height).rev() {
                for x in 0..self.width {
                    for v in self.pixel(x, y) {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn load_pfm(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut offset = 0u64;
        let mut next_line = |r: &mut BufReader<File>| -> Result<String> {
            let mut line = String::new();
            let n = r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
            offset += n as u64;
            if n == 0 {
                return Err(Error::parse(path, offset, "unexpected end of header"));
            }
            Ok(line.trim().to_string())
        };
        if next_line(&mut r)? != "PF" {
            return Err(Error::parse(path, 0, "not a color PFM file"));
        }
        let dims = next_line(&mut r)?;
        let mut it = dims.split_whitespace().map(str::parse::<u32>);
        let (Some(Ok(width)), Some(Ok(height))) = (it.next(), it.next()) else {
            return Err(Error::parse(path, offset, "bad PFM dimensions"));
        };
        let scale: f32 = next_line(&mut r)?
            .parse()
            .map_err(|_| Error::parse(path, offset, "bad PFM scale"))?;
        let little = scale < 0.0;
        let mut img = ImageBuffer::new(width, height);
        let mut bytes = [0u8; 4];
        for y in (0..height).rev() {
            for x in 0..width {
                let mut px = [0.0f32; 3];
                for v in px.iter_mut() {
                    r.read_exact(&mut bytes)
                        .map_err(|_| Error::parse(path, offset, "truncated PFM body"))?;
                    offset += 4;
                    *v = if little { f32::from_le_bytes(bytes) } else { f32::from_be_bytes(bytes) };
                }
                let i = img.index(x, y);
                img.rgb[i] = px;
            }
        }
        Ok(img)
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

#[inline]
pub fn encode_display(linear: f32) -> u8 {
    let v = (linear.clamp(0.0, 1.0) as f64).powf(1.0 / DISPLAY_GAMMA);
    (v * 255.0).round() as u8
}

#[inline]
pub fn decode_display(byte: u8) -> f32 {
    (byte as f64 / 255.0).powf(DISPLAY_GAMMA) as f32
}
