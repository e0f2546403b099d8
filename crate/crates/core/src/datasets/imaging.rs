use std::fs;
use std::io::Write;
use std::path::Path;

use ::image::{DynamicImage, GrayImage, ImageFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Grayscale image with pixel values in `[0, 1]`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Builds an image from in-range pixels.
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::check_dims(height, width, pixels.len())?;
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Image { height, width, pixels })
    }

    /// Builds an image, clipping every pixel into `[0, 1]`. NaN is rejected.
    pub fn from_clipped(height: usize, width: usize, mut pixels: Vec<f64>) -> Result<Self> {
        Self::check_dims(height, width, pixels.len())?;
        if pixels.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("image"));
        }
        pixels.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Image { height, width, pixels })
    }

    fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
        if height == 0 || width == 0 || height * width != len {
            return Err(Error::shape(
                "image",
                format!("{height}x{width} image with {len} pixels"),
            ));
        }
        Ok(())
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Image {
            height,
            width,
            pixels: vec![value.clamp(0.0, 1.0); height * width],
        }
    }

    /// Evaluates `f(row, col)` per pixel and clips the result.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let pixels = (0..height * width)
            .map(|i| f(i / width, i % width).clamp(0.0, 1.0))
            .collect();
        Image { height, width, pixels }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Rounds every pixel to the nearest 8-bit level.
    pub fn quantized(&self) -> Image {
        Image {
            pixels: self.to_bytes().iter().map(|&b| b as f64 / 255.0).collect(),
            ..*self
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Single-image `[1, 1, H, W]` tensor.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_fn([1, 1, self.height, self.width], |i| T::from_f64(self.pixels[i]))
    }

    /// Reads channel 0 of sample `index` from a `[N, 1, H, W]` tensor, clipping into range.
    pub fn from_tensor<T: Scalar>(tensor: &Tensor<T>, index: usize) -> Result<Image> {
        let &[n, 1, h, w] = tensor.shape() else {
            return Err(Error::shape(
                "image",
                format!("expected [N,1,H,W], got {:?}", tensor.shape()),
            ));
        };
        if index >= n {
            return Err(Error::InvalidArgument(format!("sample {index} of {n}")));
        }
        let plane = &tensor.data()[index * h * w..(index + 1) * h * w];
        Image::from_clipped(h, w, plane.iter().map(|v| v.as_f64()).collect())
    }
}

/// Stacks equally sized images into a `[N, 1, H, W]` tensor.
pub fn images_to_tensor<'a, T: Scalar>(images: impl IntoIterator<Item = &'a Image>) -> Result<Tensor<T>> {
    let mut dims = None;
    let mut data = Vec::new();
    let mut n = 0;
    for img in images {
        match dims {
            None => dims = Some((img.height, img.width)),
            Some(d) if d != (img.height, img.width) => {
                return Err(Error::shape(
                    "images_to_tensor",
                    format!("mixed image sizes {d:?} and {:?}", (img.height, img.width)),
                ))
            }
            Some(_) => {}
        }
        data.extend(img.pixels.iter().map(|&v| T::from_f64(v)));
        n += 1;
    }
    let Some((h, w)) = dims else {
        return Err(Error::InvalidArgument("no images to stack".into()));
    };
    Tensor::new([n, 1, h, w], data)
}

/// Loads an 8-bit grayscale PNG, PGM or JPEG as values `v / 255`.
///
/// RGB(A) inputs are converted by averaging the colour channels; alpha is ignored.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = ::image::load_from_memory(&bytes).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let pixels: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(img) => img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(img) => img.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageRgb8(img) => img
            .pixels()
            .map(|p| p.0.iter().map(|&c| c as f64).sum::<f64>() / (3.0 * 255.0))
            .collect(),
        DynamicImage::ImageRgba8(img) => img
            .pixels()
            .map(|p| p.0[..3].iter().map(|&c| c as f64).sum::<f64>() / (3.0 * 255.0))
            .collect(),
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                message: format!("unsupported pixel format {:?}; expected 8-bit samples", other.color()),
            })
        }
    };
    Image::new(h, w, pixels)
}

/// Writes an 8-bit grayscale image. `.pgm` files are binary P5, anything else PNG.
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = image.to_bytes();
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
        out.extend_from_slice(&bytes);
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))?;
        return Ok(());
    }
    let gray =
        GrayImage::from_raw(image.width as u32, image.height as u32, bytes).expect("buffer length matches dimensions");
    gray.save_with_format(path, ImageFormat::Png).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `sigma`, then clips to `[0, 1]`.
pub fn corrupt(image: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = image
        .pixels
        .iter()
        .map(|&v| {
            let n: f64 = rng.sample(StandardNormal);
            (v + sigma * n).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Image { pixels, ..*image })
}

/// Bilinear resampling to `size x size` with pixel-centre alignment and edge clamping.
pub fn resize_to(image: &Image, size: usize) -> Image {
    assert!(size > 0, "resize target must be positive");
    if image.height == size && image.width == size {
        return image.clone();
    }
    let taps = |src: usize| -> Vec<(usize, usize, f64)> {
        let scale = src as f64 / size as f64;
        (0..size)
            .map(|d| {
                let pos = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let rows = taps(image.height);
    let cols = taps(image.width);
    let mut pixels = Vec::with_capacity(size * size);
    for &(r0, r1, fy) in &rows {
        for &(c0, c1, fx) in &cols {
            let top = image.get(r0, c0) * (1.0 - fx) + image.get(r0, c1) * fx;
            let bottom = image.get(r1, c0) * (1.0 - fx) + image.get(r1, c1) * fx;
            pixels.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }
    Image {
        height: size,
        width: size,
        pixels,
    }
}
