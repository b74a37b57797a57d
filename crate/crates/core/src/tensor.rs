//! Batched `N×C×H×W` image tensors and the padding / convolution primitives
//! the rest of the crate is built on.
//!
//! Storage is contiguous row-major `f32`. Reductions and convolutions
//! accumulate in `f64` and round once when storing.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.h == 0 || self.w == 0 {
            return Err(invalid(format!("degenerate shape {self}")));
        }
        if self.c != 1 && self.c != 3 {
            return Err(invalid(format!(
                "channel count must be 1 or 3, got {} in {self}",
                self.c
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Batched image data in NCHW order.
///
/// Every tensor built through the public constructors has `n, h, w >= 1`,
/// `c` in `{1, 3}` and finite values.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(invalid(format!(
                "data length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at flat index {i}")));
        }
        Ok(ImageTensor { shape, data })
    }

    pub fn filled(shape: Shape, value: f32) -> Result<Self> {
        Self::new(shape, vec![value; shape.len()])
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` for every element.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self::new(shape, data)
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_raw(shape: Shape, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        ImageTensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let s = self.shape;
        ((n * s.c + c) * s.h + y) * s.w + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    /// One `H×W` channel plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    /// Elementwise map. Returns an error if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two tensors of identical shape.
    pub fn zip_map(&self, other: &ImageTensor, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        ensure_same_shape(self, other)?;
        Self::new(
            self.shape,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// Selects one batch element as a `1×C×H×W` tensor.
    pub fn batch_item(&self, n: usize) -> Result<Self> {
        if n >= self.shape.n {
            return Err(invalid(format!("batch index {n} out of range for {}", self.shape)));
        }
        let len = self.shape.c * self.shape.plane();
        let shape = Shape { n: 1, ..self.shape };
        Ok(Self::from_raw(shape, self.data[n * len..(n + 1) * len].to_vec()))
    }

    /// Concatenates tensors of identical `C×H×W` along the batch axis.
    pub fn stack(items: &[ImageTensor]) -> Result<Self> {
        let first = items.first().ok_or_else(|| invalid("cannot stack an empty list"))?;
        let mut data = Vec::with_capacity(first.data.len() * items.len());
        let mut n = 0;
        for item in items {
            let s = item.shape;
            if (s.c, s.h, s.w) != (first.shape.c, first.shape.h, first.shape.w) {
                return Err(Error::ShapeMismatch(format!("cannot stack {} with {}", first.shape, s)));
            }
            n += s.n;
            data.extend_from_slice(&item.data);
        }
        Ok(Self::from_raw(Shape { n, ..first.shape }, data))
    }
}

pub(crate) fn ensure_same_shape(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch(format!("{} vs {}", a.shape, b.shape)));
    }
    Ok(())
}

/// Square kernel with odd side length.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2D {
    k: usize,
    data: Vec<f32>,
}

impl Kernel2D {
    pub fn new(k: usize, data: Vec<f32>) -> Result<Self> {
        if k.is_multiple_of(2) {
            return Err(invalid(format!("kernel side must be odd, got {k}")));
        }
        if data.len() != k * k {
            return Err(invalid(format!(
                "kernel of side {k} needs {} coefficients, got {}",
                k * k,
                data.len()
            )));
        }
        Ok(Kernel2D { k, data })
    }

    /// Horizontal Sobel operator `[[1,0,-1],[2,0,-2],[1,0,-1]]`.
    pub fn sobel_x() -> Self {
        Kernel2D {
            k: 3,
            data: vec![1.0, 0.0, -1.0, 2.0, 0.0, -2.0, 1.0, 0.0, -1.0],
        }
    }

    /// Vertical Sobel operator `[[1,2,1],[0,0,0],[-1,-2,-1]]`.
    pub fn sobel_y() -> Self {
        Kernel2D {
            k: 3,
            data: vec![1.0, 2.0, 1.0, 0.0, 0.0, 0.0, -1.0, -2.0, -1.0],
        }
    }

    /// Normalized box filter.
    pub fn box_filter(k: usize) -> Result<Self> {
        let v = 1.0 / (k * k) as f32;
        Self::new(k, vec![v; k * k])
    }

    pub fn side(&self) -> usize {
        self.k
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.k + col]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

/// Normalized 1-D Gaussian taps of odd length `k`, computed in `f64`.
pub fn gaussian_taps(k: usize, sigma: f64) -> Vec<f64> {
    let center = (k / 2) as f64;
    let raw: Vec<f64> = (0..k)
        .map(|i| {
            let d = i as f64 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Mirror an out-of-range index back into `0..len` without repeating the
/// edge sample (`-1 -> 1`, `len -> len - 2`).
#[inline]
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Same-size 2-D convolution with replicate (edge-clamped) borders, applied
/// independently to every `H×W` plane.
///
/// This is a true convolution: the kernel is flipped, so
/// `out[y, x] = Σ K[i, j] · img[y + r - i, x + r - j]` with `r = k / 2`.
/// For the Sobel operators the flip only changes the sign of the response.
pub fn conv2d_replicate(img: &ImageTensor, kernel: &Kernel2D) -> ImageTensor {
    let s = img.shape();
    let mut out = Vec::with_capacity(s.len());
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = img.plane(n, c);
            out.extend(
                conv_plane_replicate(plane, s.h, s.w, kernel)
                    .into_iter()
                    .map(|v| v as f32),
            );
        }
    }
    ImageTensor::from_raw(s, out)
}

/// Convolution of a single plane, returned unrounded.
pub(crate) fn conv_plane_replicate(plane: &[f32], h: usize, w: usize, kernel: &Kernel2D) -> Vec<f64> {
    let k = kernel.side();
    let r = (k / 2) as isize;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0f64;
            for i in 0..k {
                let sy = clamp_index(y + r - i as isize, h);
                let row = &plane[sy * w..(sy + 1) * w];
                for j in 0..k {
                    let sx = clamp_index(x + r - j as isize, w);
                    acc += kernel.at(i, j) as f64 * row[sx] as f64;
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Padding added on the bottom and right edges by [`pad_to_multiple`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadSpec {
    pub bottom: usize,
    pub right: usize,
}

impl PadSpec {
    pub fn is_identity(&self) -> bool {
        self.bottom == 0 && self.right == 0
    }
}

fn padding_for(len: usize, multiple: usize) -> usize {
    len.div_ceil(multiple) * multiple - len
}

/// Reflect-pads the bottom and right edges so height and width become the
/// smallest multiples of `multiple` not below the input size.
///
/// Reflection of width `p` needs `p <= dim - 1`; larger requirements are
/// rejected.
pub fn pad_to_multiple(img: &ImageTensor, multiple: usize) -> Result<(ImageTensor, PadSpec)> {
    if multiple == 0 {
        return Err(invalid("pad multiple must be positive"));
    }
    let s = img.shape();
    let spec = PadSpec {
        bottom: padding_for(s.h, multiple),
        right: padding_for(s.w, multiple),
    };
    if spec.bottom > s.h - 1 || spec.right > s.w - 1 {
        return Err(invalid(format!(
            "reflect padding of {}x{} to a multiple of {multiple} needs pads ({}, {}) \
             but at most ({}, {}) are possible",
            s.h,
            s.w,
            spec.bottom,
            spec.right,
            s.h - 1,
            s.w - 1
        )));
    }
    if spec.is_identity() {
        return Ok((img.clone(), spec));
    }
    let out_shape = Shape {
        h: s.h + spec.bottom,
        w: s.w + spec.right,
        ..s
    };
    let mut out = Vec::with_capacity(out_shape.len());
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = img.plane(n, c);
            for y in 0..out_shape.h {
                let sy = reflect_index(y as isize, s.h);
                let row = &plane[sy * s.w..(sy + 1) * s.w];
                out.extend_from_slice(row);
                for x in s.w..out_shape.w {
                    out.push(row[reflect_index(x as isize, s.w)]);
                }
            }
        }
    }
    Ok((ImageTensor::from_raw(out_shape, out), spec))
}

/// Removes bottom/right padding recorded in `spec`.
pub fn unpad(img: &ImageTensor, spec: PadSpec) -> Result<ImageTensor> {
    let s = img.shape();
    if spec.bottom >= s.h || spec.right >= s.w {
        return Err(invalid(format!(
            "pad spec ({}, {}) does not fit inside {s}",
            spec.bottom, spec.right
        )));
    }
    if spec.is_identity() {
        return Ok(img.clone());
    }
    crop(img, 0, 0, s.h - spec.bottom, s.w - spec.right)
}

/// Extracts the `h×w` window with top-left corner `(top, left)`.
pub fn crop(img: &ImageTensor, top: usize, left: usize, h: usize, w: usize) -> Result<ImageTensor> {
    let s = img.shape();
    if h == 0 || w == 0 || top + h > s.h || left + w > s.w {
        return Err(invalid(format!("crop {h}x{w} at ({top}, {left}) exceeds {s}")));
    }
    let out_shape = Shape { h, w, ..s };
    let mut out = Vec::with_capacity(out_shape.len());
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = img.plane(n, c);
            for y in top..top + h {
                out.extend_from_slice(&plane[y * s.w + left..y * s.w + left + w]);
            }
        }
    }
    Ok(ImageTensor::from_raw(out_shape, out))
}
