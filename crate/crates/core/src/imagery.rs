//! Image containers, raster I/O, edge-preserving smoothing and Sobel gradients.

use std::f32::consts::{FRAC_PI_2, PI};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

/// Row-major 8-bit single-channel raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "buffer length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut img = Self::new(width, height);
        for v in 0..height {
            for u in 0..width {
                img.data[v * width + u] = f(u, v);
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: u8) {
        self.data[v * self.width + u] = value;
    }

    pub fn row(&self, v: usize) -> &[u8] {
        &self.data[v * self.width..(v + 1) * self.width]
    }

    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| 255 - p).collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("buffer length checked at construction");
        buf.save(path.as_ref())?;
        Ok(())
    }
}

/// Interleaved 8-bit RGB raster, used for overlays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&p| [p, p, p]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> [u8; 3] {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, px: [u8; 3]) {
        self.data[v * self.width + u] = px;
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let raw: Vec<u8> = self.data.iter().flatten().copied().collect();
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions");
        buf.save(path.as_ref())?;
        Ok(())
    }
}

/// ITU-R BT.601 luma, rounded to nearest.
#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

/// Loads an 8-bit gray or RGB PNG/PGM raster. Colour inputs are reduced to
/// luma; deeper-than-8-bit inputs are rejected.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::Image(other),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luminance(p[0], p[1], p[2])).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| luminance(p[0], p[1], p[2])).collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: only 8-bit gray or RGB rasters are accepted, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    GrayImage::from_vec(w, h, data)
}

/// Edge-preserving smoothing. Each output pixel is the normalized sum over
/// the `(2r+1)²` window weighted by a spatial and a range Gaussian; windows
/// are truncated at the image border.
pub fn bilateral_filter(img: &GrayImage, sigma_s: f64, sigma_r: f64, radius: usize) -> Result<GrayImage> {
    if !(sigma_s > 0.0) || !(sigma_r > 0.0) || radius < 1 {
        return Err(Error::InvalidParameter(format!(
            "bilateral needs sigma_s > 0, sigma_r > 0, radius >= 1 (got {sigma_s}, {sigma_r}, {radius})"
        )));
    }
    let r = radius as isize;
    let side = 2 * radius + 1;
    let mut spatial = vec![0.0f64; side * side];
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            spatial[((dy + r) as usize) * side + (dx + r) as usize] = (-d2 / (2.0 * sigma_s * sigma_s)).exp();
        }
    }
    let range: Vec<f64> = (0..256)
        .map(|i| {
            let d = i as f64;
            (-d * d / (2.0 * sigma_r * sigma_r)).exp()
        })
        .collect();

    let (w, h) = img.dims();
    let src = img.data();
    let mut out = vec![0u8; w * h];
    for v in 0..h {
        let y0 = v.saturating_sub(radius);
        let y1 = (v + radius).min(h - 1);
        for u in 0..w {
            let x0 = u.saturating_sub(radius);
            let x1 = (u + radius).min(w - 1);
            let c = src[v * w + u];
            let mut num = 0.0;
            let mut den = 0.0;
            for y in y0..=y1 {
                let srow = (y + radius - v) * side;
                let irow = y * w;
                for x in x0..=x1 {
                    let p = src[irow + x];
                    let wt = spatial[srow + x + radius - u] * range[p.abs_diff(c) as usize];
                    num += wt * f64::from(p);
                    den += wt;
                }
            }
            out[v * w + u] = (num / den).round().clamp(0.0, 255.0) as u8;
        }
    }
    GrayImage::from_vec(w, h, out)
}

/// Horizontal and vertical Sobel responses with derived magnitude and
/// gradient orientation.
#[derive(Debug, Clone)]
pub struct GradientField {
    width: usize,
    height: usize,
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
    pub magnitude: Vec<f32>,
    /// Gradient direction `atan2(gy, gx)` in (−π, π].
    pub orientation: Vec<f32>,
}

impl GradientField {
    /// Builds a field from raw responses, deriving magnitude and orientation.
    pub fn from_components(width: usize, height: usize, gx: Vec<f32>, gy: Vec<f32>) -> Result<Self> {
        if gx.len() != width * height || gy.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "gradient buffers do not match {width}x{height}"
            )));
        }
        let magnitude = gx.iter().zip(&gy).map(|(&x, &y)| x.hypot(y)).collect();
        let orientation = gx.iter().zip(&gy).map(|(&x, &y)| y.atan2(x)).collect();
        Ok(Self {
            width,
            height,
            gx,
            gy,
            magnitude,
            orientation,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// Direction of the edge line itself: the gradient rotated by −π/2, so
    /// that it points up the image for a dark-to-bright step in +u.
    #[inline]
    pub fn edge_angle(&self, idx: usize) -> f32 {
        wrap_angle(self.orientation[idx] - FRAC_PI_2)
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f32) -> f32 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

pub fn sobel_gradients(img: &GrayImage) -> Result<GradientField> {
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    let n = w * h;
    let mut gx = vec![0.0f32; n];
    let mut gy = vec![0.0f32; n];
    let p = |u: usize, v: usize| i32::from(img.get(u, v));
    for v in 1..h - 1 {
        for u in 1..w - 1 {
            let sx = (p(u + 1, v - 1) + 2 * p(u + 1, v) + p(u + 1, v + 1))
                - (p(u - 1, v - 1) + 2 * p(u - 1, v) + p(u - 1, v + 1));
            let sy = (p(u - 1, v + 1) + 2 * p(u, v + 1) + p(u + 1, v + 1))
                - (p(u - 1, v - 1) + 2 * p(u, v - 1) + p(u + 1, v - 1));
            gx[v * w + u] = sx as f32;
            gy[v * w + u] = sy as f32;
        }
    }
    GradientField::from_components(w, h, gx, gy)
}
