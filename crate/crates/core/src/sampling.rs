//! Semantic label images, their one-hot planes, and bilinear sampling.
//!
//! Class IDs are categorical, so interpolation happens per class plane and
//! yields a probability vector over classes at each continuous pixel location.
//! The kernel is the width-one triangle `max(0, 1 - |d|)` along each axis.

use std::sync::Arc;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::ProjectedPoints;

/// Dense per-pixel class IDs, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    num_classes: usize,
    labels: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize, num_classes: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("label image must be non-empty".into()));
        }
        if num_classes == 0 || num_classes > 255 {
            return Err(Error::InvalidArgument(format!(
                "num_classes {num_classes} outside 1..=255"
            )));
        }
        if labels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} labels for a {width}x{height} image",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::InvalidArgument(format!("label {bad} >= {num_classes} classes")));
        }
        Ok(Self {
            width,
            height,
            num_classes,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, num_classes: usize, class: u8) -> Result<Self> {
        Self::new(width, height, num_classes, vec![class; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Mutable access for in-place relabeling. Callers must keep labels `< num_classes`.
    pub(crate) fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum PlaneStorage {
    /// Implicit one-hot planes of a label image.
    OneHot(Arc<LabelImage>),
    /// Plane-major `C x H x W` values.
    Dense(Vec<f64>),
}

/// `C` planes of per-pixel class membership in `[0, 1]` that sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPlanes {
    width: usize,
    height: usize,
    num_classes: usize,
    storage: PlaneStorage,
}

/// One-hot planes of `img`. Shares the label buffer rather than materializing
/// `C` dense planes.
pub fn to_one_hot(img: &LabelImage) -> LabelPlanes {
    LabelPlanes::from_labels(Arc::new(img.clone()))
}

impl LabelPlanes {
    pub fn from_labels(img: Arc<LabelImage>) -> Self {
        Self {
            width: img.width,
            height: img.height,
            num_classes: img.num_classes,
            storage: PlaneStorage::OneHot(img),
        }
    }

    /// Soft planes, plane-major. Each pixel's values must lie in `[0, 1]` and sum to 1.
    pub fn from_dense(width: usize, height: usize, num_classes: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || num_classes == 0 {
            return Err(Error::InvalidArgument("empty planes".into()));
        }
        if data.len() != width * height * num_classes {
            return Err(Error::InvalidArgument("plane data has the wrong length".into()));
        }
        let n = width * height;
        for i in 0..n {
            let mut sum = 0.0;
            for c in 0..num_classes {
                let v = data[c * n + i];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!("plane value {v} outside [0, 1]")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("pixel {i} planes sum to {sum}")));
            }
        }
        Ok(Self {
            width,
            height,
            num_classes,
            storage: PlaneStorage::Dense(data),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Value of plane `c` at row `h`, column `w`.
    pub fn value(&self, c: usize, h: usize, w: usize) -> f64 {
        match &self.storage {
            PlaneStorage::OneHot(img) => (img.get(w, h) as usize == c) as u8 as f64,
            PlaneStorage::Dense(d) => d[(c * self.height + h) * self.width + w],
        }
    }

    /// Per-pixel argmax (lowest class wins ties).
    pub fn argmax(&self) -> LabelImage {
        if let PlaneStorage::OneHot(img) = &self.storage {
            return (**img).clone();
        }
        let mut labels = vec![0u8; self.width * self.height];
        for h in 0..self.height {
            for w in 0..self.width {
                let mut best = 0;
                for c in 1..self.num_classes {
                    if self.value(c, h, w) > self.value(best, h, w) {
                        best = c;
                    }
                }
                labels[h * self.width + w] = best as u8;
            }
        }
        LabelImage {
            width: self.width,
            height: self.height,
            num_classes: self.num_classes,
            labels,
        }
    }

    /// Planes with class order permuted: output plane `perm[c]` is input plane `c`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let c_count = self.num_classes;
        if perm.len() != c_count {
            return Err(Error::InvalidArgument("permutation length mismatch".into()));
        }
        let n = self.width * self.height;
        let mut data = vec![0.0; n * c_count];
        for c in 0..c_count {
            for h in 0..self.height {
                for w in 0..self.width {
                    data[perm[c] * n + h * self.width + w] = self.value(c, h, w);
                }
            }
        }
        Self::from_dense(self.width, self.height, c_count, data)
    }

    #[inline]
    fn add_pixel(&self, x: usize, y: usize, weight: f64, out: &mut [f64]) {
        match &self.storage {
            PlaneStorage::OneHot(img) => out[img.get(x, y) as usize] += weight,
            PlaneStorage::Dense(d) => {
                let n = self.width * self.height;
                let i = y * self.width + x;
                for (c, o) in out.iter_mut().enumerate() {
                    *o += weight * d[c * n + i];
                }
            }
        }
    }

    /// `<grad, planes(x, y)>`
    #[inline]
    fn dot_pixel(&self, x: usize, y: usize, grad: &[f64]) -> f64 {
        match &self.storage {
            PlaneStorage::OneHot(img) => grad[img.get(x, y) as usize],
            PlaneStorage::Dense(d) => {
                let n = self.width * self.height;
                let i = y * self.width + x;
                grad.iter().enumerate().map(|(c, g)| g * d[c * n + i]).sum()
            }
        }
    }

    /// Neighbor pixel `(x0 + dx, y0 + dy)` if inside the image.
    #[inline]
    fn neighbor(&self, x0: i64, y0: i64, dx: i64, dy: i64) -> Option<(usize, usize)> {
        let (x, y) = (x0 + dx, y0 + dy);
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            Some((x as usize, y as usize))
        } else {
            None
        }
    }

    /// Bilinear sample at continuous `(u, v)` = (column, row), written into `out`
    /// (length `C`, overwritten). Pixels outside the image contribute nothing.
    #[inline]
    pub fn sample_into(&self, u: f64, v: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let (x0, y0) = (u.floor(), v.floor());
        let (fx, fy) = (u - x0, v - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let weights = [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ];
        for (dx, dy, w) in weights {
            if w == 0.0 {
                continue;
            }
            if let Some((x, y)) = self.neighbor(x0, y0, dx, dy) {
                self.add_pixel(x, y, w, out);
            }
        }
    }

    /// Gradient of `<grad, sample(u, v)>` with respect to `(u, v)`.
    ///
    /// On an integer grid line the right/down one-sided derivative is used,
    /// which is what `floor` selects.
    #[inline]
    pub fn sample_pullback(&self, u: f64, v: f64, grad: &[f64]) -> Vector2<f64> {
        let (x0, y0) = (u.floor(), v.floor());
        let (fx, fy) = (u - x0, v - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let mut corner = [0.0; 4];
        for (slot, (dx, dy)) in corner.iter_mut().zip([(0, 0), (1, 0), (0, 1), (1, 1)]) {
            if let Some((x, y)) = self.neighbor(x0, y0, dx, dy) {
                *slot = self.dot_pixel(x, y, grad);
            }
        }
        let [c00, c10, c01, c11] = corner;
        Vector2::new(
            (1.0 - fy) * (c10 - c00) + fy * (c11 - c01),
            (1.0 - fx) * (c01 - c00) + fx * (c11 - c10),
        )
    }
}

/// Soft label vectors for the valid points of a projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelBatch {
    pub num_classes: usize,
    /// Row-major `N x C`.
    pub values: Vec<f64>,
    /// Index of each row's source point in the projected point list.
    pub index: Vec<usize>,
    pub coords: Vec<Vector2<f64>>,
}

impl SoftLabelBatch {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }
}

/// Samples the label planes at every valid projected point.
pub fn bilinear_sample(planes: &LabelPlanes, pts: &ProjectedPoints) -> Result<SoftLabelBatch> {
    let c = planes.num_classes;
    let mut batch = SoftLabelBatch {
        num_classes: c,
        values: Vec::new(),
        index: Vec::new(),
        coords: Vec::new(),
    };
    let mut row = vec![0.0; c];
    for (i, (uv, valid)) in pts.uv.iter().zip(&pts.valid).enumerate() {
        if !*valid {
            continue;
        }
        planes.sample_into(uv.x, uv.y, &mut row);
        batch.values.extend_from_slice(&row);
        batch.index.push(i);
        batch.coords.push(*uv);
    }
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(batch)
}

/// Gradient of `sum_i <grad_soft[i], soft_i>` with respect to each valid
/// point's `(u, v)`, aligned with the rows of `bilinear_sample`'s batch.
pub fn bilinear_sample_pullback(
    planes: &LabelPlanes,
    pts: &ProjectedPoints,
    grad_soft: &[f64],
) -> Result<Vec<Vector2<f64>>> {
    let c = planes.num_classes;
    let valid: Vec<usize> = (0..pts.len()).filter(|&i| pts.valid[i]).collect();
    if grad_soft.len() != valid.len() * c {
        return Err(Error::InvalidArgument(format!(
            "gradient has {} entries for {} valid points x {c} classes",
            grad_soft.len(),
            valid.len()
        )));
    }
    Ok(valid
        .iter()
        .enumerate()
        .map(|(row, &i)| {
            let uv = pts.uv[i];
            planes.sample_pullback(uv.x, uv.y, &grad_soft[row * c..(row + 1) * c])
        })
        .collect())
}
