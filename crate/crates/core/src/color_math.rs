//! Linear color algebra on raw-RGB data.
//!
//! All transforms use the row-vector convention: a pixel is a 1×3 row and a
//! transform is applied on the right, `out = pixel · M`. Every matrix in the
//! crate (white balance, checker-fitted mappings, interpolated mappings)
//! follows this convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of patches on the reference checker.
pub const CHECKER_PATCHES: usize = 24;

/// Indices of the achromatic ramp on the checker, brightest first.
pub const NEUTRAL_PATCHES: std::ops::Range<usize> = 18..24;

/// Relative eigenvalue floor for the normal matrix of a least-squares fit.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Determinant magnitude below which a matrix is treated as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

/// A 3×3 linear RGB-to-RGB map, applied as `pixel · M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorMatrix3 {
    rows: [[f64; 3]; 3],
}

impl ColorMatrix3 {
    pub const IDENTITY: ColorMatrix3 = ColorMatrix3 {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn new(rows: [[f64; 3]; 3]) -> Result<Self> {
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("color matrix has non-finite entries"));
        }
        Ok(Self { rows })
    }

    pub fn diagonal(d: [f64; 3]) -> Result<Self> {
        Self::new([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.rows
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col]
    }

    pub fn diag(&self) -> [f64; 3] {
        [self.rows[0][0], self.rows[1][1], self.rows[2][2]]
    }

    pub fn is_diagonal(&self) -> bool {
        (0..3).all(|i| (0..3).all(|j| i == j || self.rows[i][j] == 0.0))
    }

    /// Matrix product `self · rhs`; applying the result equals applying
    /// `self` first and `rhs` second.
    pub fn mul(&self, rhs: &ColorMatrix3) -> ColorMatrix3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.rows[i][k] * rhs.rows[k][j]).sum();
            }
        }
        ColorMatrix3 { rows: out }
    }

    /// `a·self + b·other`, entrywise.
    pub fn blend(&self, a: f64, other: &ColorMatrix3, b: f64) -> ColorMatrix3 {
        let mut rows = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rows[i][j] = a * self.rows[i][j] + b * other.rows[i][j];
            }
        }
        ColorMatrix3 { rows }
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.rows;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Applies the matrix to a single row-vector pixel.
    #[inline]
    pub fn transform(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.rows;
        [
            p[0] * m[0][0] + p[1] * m[1][0] + p[2] * m[2][0],
            p[0] * m[0][1] + p[1] * m[1][1] + p[2] * m[2][1],
            p[0] * m[0][2] + p[1] * m[1][2] + p[2] * m[2][2],
        ]
    }

    pub fn max_abs_diff(&self, other: &ColorMatrix3) -> f64 {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Sensor response to the scene illuminant, `(L_r, L_g, L_b)`.
///
/// Stored unnormalized; comparisons go through [`IlluminantRGB::normalized`]
/// or [`angular_error_degrees`], both scale-invariant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct IlluminantRGB([f64; 3]);

impl IlluminantRGB {
    pub fn new(rgb: [f64; 3]) -> Result<Self> {
        if rgb.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain(format!(
                "illuminant components must be finite and nonnegative, got {rgb:?}"
            )));
        }
        if rgb.iter().all(|v| *v == 0.0) {
            return Err(Error::domain("illuminant has no positive component"));
        }
        Ok(Self(rgb))
    }

    /// Clamps negative components to zero before validating.
    pub fn from_clamped(rgb: [f64; 3]) -> Result<Self> {
        Self::new(rgb.map(|v| v.max(0.0)))
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.0
    }

    pub fn r(&self) -> f64 {
        self.0[0]
    }

    pub fn g(&self) -> f64 {
        self.0[1]
    }

    pub fn b(&self) -> f64 {
        self.0[2]
    }

    pub fn norm(&self) -> f64 {
        norm3(self.0)
    }

    pub fn normalized(&self) -> [f64; 3] {
        let n = self.norm();
        self.0.map(|v| v / n)
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.0.map(|v| v * s))
    }
}

impl TryFrom<[f64; 3]> for IlluminantRGB {
    type Error = Error;
    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(v)
    }
}

impl From<IlluminantRGB> for [f64; 3] {
    fn from(l: IlluminantRGB) -> Self {
        l.0
    }
}

/// Linear raw-RGB colors of the 24 checker patches, one row per patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct CheckerColors {
    rows: [[f64; 3]; CHECKER_PATCHES],
}

impl CheckerColors {
    pub fn new(rows: [[f64; 3]; CHECKER_PATCHES]) -> Result<Self> {
        if rows.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain(
                "checker colors must be finite and nonnegative",
            ));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[[f64; 3]; CHECKER_PATCHES] {
        &self.rows
    }

    pub fn row(&self, patch: usize) -> [f64; 3] {
        self.rows[patch]
    }

    /// Rows multiplied by `m`, without clamping.
    pub fn transformed_rows(&self, m: &ColorMatrix3) -> [[f64; 3]; CHECKER_PATCHES] {
        self.rows.map(|r| m.transform(r))
    }

    /// Rows multiplied by `m`, negatives clamped to zero.
    pub fn transformed(&self, m: &ColorMatrix3) -> CheckerColors {
        CheckerColors {
            rows: self.transformed_rows(m).map(|r| r.map(|v| v.max(0.0))),
        }
    }

    pub fn scaled(&self, s: f64) -> Result<CheckerColors> {
        CheckerColors::new(self.rows.map(|r| r.map(|v| v * s)))
    }

    pub fn max_abs_diff(&self, other: &CheckerColors) -> f64 {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Illuminant direction implied by the neutral ramp: the mean of the
    /// unit-normalized neutral rows.
    pub fn neutral_direction(&self) -> Result<IlluminantRGB> {
        neutral_direction_of(&self.rows)
    }
}

/// Mean unit direction of the neutral rows of a (possibly signed) checker
/// matrix, clamped to the nonnegative octant.
pub fn neutral_direction_of(rows: &[[f64; 3]; CHECKER_PATCHES]) -> Result<IlluminantRGB> {
    let mut acc = [0.0; 3];
    for row in &rows[NEUTRAL_PATCHES] {
        let n = norm3(*row);
        if n > 0.0 {
            for c in 0..3 {
                acc[c] += row[c] / n;
            }
        }
    }
    let l = IlluminantRGB::from_clamped(acc)?;
    Ok(IlluminantRGB(l.normalized()))
}

impl TryFrom<Vec<[f64; 3]>> for CheckerColors {
    type Error = Error;
    fn try_from(v: Vec<[f64; 3]>) -> Result<Self> {
        let rows: [[f64; 3]; CHECKER_PATCHES] = v.try_into().map_err(|v: Vec<_>| {
            Error::domain(format!("checker needs 24 rows, got {}", v.len()))
        })?;
        Self::new(rows)
    }
}

impl From<CheckerColors> for Vec<[f64; 3]> {
    fn from(c: CheckerColors) -> Self {
        c.rows.to_vec()
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// H×W×3 linear raw-RGB image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::domain(format!(
                "image data length {} does not match {width}x{height}x3",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("image values must be finite and nonnegative"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn uniform(width: usize, height: usize, pixel: [f64; 3]) -> Result<Self> {
        let data = (0..width * height).flat_map(|_| pixel).collect();
        Self::new(width, height, data)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, p: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&p);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn scaled(&self, s: f64) -> RawImage {
        RawImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Copy with the pixels inside `rect` set to zero.
    pub fn masked(&self, rect: &PixelRect) -> RawImage {
        let mut out = self.clone();
        for y in rect.y..(rect.y + rect.height).min(self.height) {
            for x in rect.x..(rect.x + rect.width).min(self.width) {
                out.set_pixel(x, y, [0.0; 3]);
            }
        }
        out
    }

    /// Mean color over `rect`.
    pub fn region_mean(&self, rect: &PixelRect) -> [f64; 3] {
        let mut acc = [0.0; 3];
        let mut n = 0usize;
        for y in rect.y..rect.y + rect.height {
            for x in rect.x..rect.x + rect.width {
                let p = self.pixel(x, y);
                for c in 0..3 {
                    acc[c] += p[c];
                }
                n += 1;
            }
        }
        acc.map(|v| v / n.max(1) as f64)
    }

    pub fn max_abs_diff(&self, other: &RawImage) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// White-balance gains `diag(L_g/L_r, 1, L_g/L_b)`.
pub fn wb_matrix(l: &IlluminantRGB) -> Result<ColorMatrix3> {
    if l.r() <= 0.0 || l.b() <= 0.0 {
        return Err(Error::domain("illuminant has no red/blue response"));
    }
    ColorMatrix3::diagonal([l.g() / l.r(), 1.0, l.g() / l.b()])
}

/// Multiplies every pixel by `m`. With `clamp_negative` off the output may
/// hold negative values; such images are intermediate results only.
pub fn apply_color_matrix(img: &RawImage, m: &ColorMatrix3, clamp_negative: bool) -> RawImage {
    let mut data = Vec::with_capacity(img.data.len());
    for p in img.pixels() {
        let q = m.transform(p);
        if clamp_negative {
            data.extend(q.map(|v| v.max(0.0)));
        } else {
            data.extend(q);
        }
    }
    RawImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// A least-squares color mapping together with its Frobenius residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorFit {
    pub matrix: ColorMatrix3,
    pub residual: f64,
}

/// Solves `min_M ‖src·M − dst‖_F` through the normal equations.
pub fn fit_color_transform(src: &CheckerColors, dst: &CheckerColors) -> Result<ColorFit> {
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [[0.0; 3]; 3];
    for (a, b) in src.rows.iter().zip(&dst.rows) {
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += a[i] * a[j];
                atb[i][j] += a[i] * b[j];
            }
        }
    }

    let eig = symmetric_eigenvalues(&ata);
    let max_eig = eig[2];
    let min_eig = eig[0];
    if !(max_eig > 0.0) || min_eig < RANK_TOLERANCE * max_eig {
        return Err(Error::RankDeficient { min_eig, max_eig });
    }

    let chol = cholesky(&ata).ok_or(Error::RankDeficient { min_eig, max_eig })?;
    let mut rows = [[0.0; 3]; 3];
    for j in 0..3 {
        let col = cholesky_solve(&chol, [atb[0][j], atb[1][j], atb[2][j]]);
        for i in 0..3 {
            rows[i][j] = col[i];
        }
    }
    let matrix = ColorMatrix3::new(rows)?;

    let residual = src
        .rows
        .iter()
        .zip(&dst.rows)
        .map(|(a, b)| {
            let p = matrix.transform(*a);
            (0..3).map(|c| (p[c] - b[c]).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        .sqrt();

    Ok(ColorFit { matrix, residual })
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(m: &ColorMatrix3) -> Result<ColorMatrix3> {
    let det = m.determinant();
    if !(det.abs() > SINGULAR_TOLERANCE) {
        return Err(Error::Singular { det });
    }
    let mut a = m.rows;
    let mut inv = ColorMatrix3::IDENTITY.rows;
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        if p == 0.0 {
            return Err(Error::Singular { det });
        }
        for j in 0..3 {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..3 {
            if i != col {
                let f = a[i][col];
                for j in 0..3 {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    ColorMatrix3::new(inv)
}

/// Angle between two illuminant vectors in degrees.
pub fn angular_error_degrees(est: &IlluminantRGB, gt: &IlluminantRGB) -> f64 {
    // Both are nonzero by construction.
    angle_between_degrees(est.rgb(), gt.rgb()).unwrap_or(f64::NAN)
}

/// Angle between two arbitrary 3-vectors in degrees; the cosine is clamped
/// to `[-1, 1]` before `acos`.
pub fn angle_between_degrees(a: [f64; 3], b: [f64; 3]) -> Result<f64> {
    let na = norm3(a);
    let nb = norm3(b);
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::domain("angular error of a zero vector"));
    }
    let cos = (dot3(a, b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

#[inline]
pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Eigenvalues of a symmetric 3×3 matrix in ascending order (closed-form
/// trigonometric solution).
fn symmetric_eigenvalues(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let mut eig = if p1 == 0.0 {
        [a[0][0], a[1][1], a[2][2]]
    } else {
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut b = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { q } else { 0.0 };
                b[i][j] = (a[i][j] - id) / p;
            }
        }
        let r = (ColorMatrix3 { rows: b }.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        [e1, e2, e3]
    };
    eig.sort_by(f64::total_cmp);
    eig
}

fn cholesky(a: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let mut y = [0.0; 3];
    for i in 0..3 {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn checker_from_fn(f: impl Fn(usize) -> [f64; 3]) -> CheckerColors {
        CheckerColors::new(std::array::from_fn(f)).unwrap()
    }

    fn spread_checker() -> CheckerColors {
        checker_from_fn(|i| {
            let t = i as f64;
            [
                0.1 + 0.8 * ((t * 0.7).sin() * 0.5 + 0.5),
                0.1 + 0.8 * ((t * 1.3 + 1.0).sin() * 0.5 + 0.5),
                0.1 + 0.8 * ((t * 2.1 + 2.0).sin() * 0.5 + 0.5),
            ]
        })
    }

    /// Adjugate inverse, kept separate from the Gauss-Jordan implementation.
    fn adjugate_inverse(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
            }
        }
        inv
    }

    #[test]
    fn wb_matrix_examples() {
        let id = wb_matrix(&IlluminantRGB::new([1.0, 1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(id, ColorMatrix3::IDENTITY);

        let l = IlluminantRGB::new([0.5, 1.0, 0.25]).unwrap();
        let m = wb_matrix(&l).unwrap();
        assert_eq!(m, ColorMatrix3::diagonal([2.0, 1.0, 4.0]).unwrap());

        let p = m.transform(l.rgb().map(|v| 3.0 * v));
        assert_eq!(p[0], p[1]);
        assert_eq!(p[1], p[2]);
    }

    #[test]
    fn wb_matrix_rejects_missing_channels() {
        let l = IlluminantRGB::new([0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(wb_matrix(&l), Err(Error::Domain(_))));
        let l = IlluminantRGB::new([1.0, 1.0, 0.0]).unwrap();
        assert!(wb_matrix(&l).is_err());
    }

    #[test]
    fn illuminant_validation() {
        assert!(IlluminantRGB::new([0.0, 0.0, 0.0]).is_err());
        assert!(IlluminantRGB::new([-0.1, 1.0, 1.0]).is_err());
        let l = IlluminantRGB::new([3.0, 4.0, 12.0]).unwrap();
        assert!((norm3(l.normalized()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_identity_is_bitwise() {
        let img = RawImage::from_fn(5, 4, |x, y| [x as f64 * 0.13, y as f64 * 0.7, 0.3]).unwrap();
        let out = apply_color_matrix(&img, &ColorMatrix3::IDENTITY, true);
        assert_eq!(out, img);
    }

    #[test]
    fn apply_uniform_example() {
        let img = RawImage::uniform(3, 2, [1.0, 2.0, 3.0]).unwrap();
        let m = ColorMatrix3::diagonal([2.0, 1.0, 0.5]).unwrap();
        let out = apply_color_matrix(&img, &m, true);
        assert!(out.pixels().all(|p| p == [2.0, 2.0, 1.5]));
        assert_eq!((out.width(), out.height()), (3, 2));
    }

    #[test]
    fn apply_composes_as_product() {
        let img = RawImage::from_fn(6, 3, |x, y| [0.1 * x as f64, 0.2 + 0.1 * y as f64, 0.9]).unwrap();
        let m1 = ColorMatrix3::new([[0.9, 0.1, -0.2], [0.05, 1.1, 0.1], [0.0, -0.1, 0.8]]).unwrap();
        let m2 = ColorMatrix3::new([[1.2, 0.0, 0.1], [-0.3, 0.9, 0.0], [0.2, 0.1, 1.4]]).unwrap();
        let two_step = apply_color_matrix(&apply_color_matrix(&img, &m1, false), &m2, false);
        let one_step = apply_color_matrix(&img, &m1.mul(&m2), false);
        for (a, b) in two_step.data().iter().zip(one_step.data()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-12));
        }
    }

    #[test]
    fn fit_self_mapping_is_identity() {
        let c = spread_checker();
        let fit = fit_color_transform(&c, &c).unwrap();
        assert!(fit.matrix.max_abs_diff(&ColorMatrix3::IDENTITY) < 1e-9);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn fit_recovers_diagonal_against_cramer_oracle() {
        let src = spread_checker();
        let d = ColorMatrix3::diagonal([2.0, 1.0, 0.5]).unwrap();
        let dst = src.transformed(&d);
        let fit = fit_color_transform(&src, &dst).unwrap();
        assert!(fit.matrix.max_abs_diff(&d) < 1e-6);

        // Normal equations solved column by column with Cramer's rule.
        let mut ata = [[0.0; 3]; 3];
        let mut atb = [[0.0; 3]; 3];
        for (a, b) in src.rows().iter().zip(dst.rows()) {
            for i in 0..3 {
                for j in 0..3 {
                    ata[i][j] += a[i] * a[j];
                    atb[i][j] += a[i] * b[j];
                }
            }
        }
        let det = ColorMatrix3 { rows: ata }.determinant();
        for j in 0..3 {
            for i in 0..3 {
                let mut replaced = ata;
                for r in 0..3 {
                    replaced[r][i] = atb[r][j];
                }
                let x = ColorMatrix3 { rows: replaced }.determinant() / det;
                assert!((x - fit.matrix.get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fit_rejects_rank_one_source() {
        let src = checker_from_fn(|_| [0.2, 0.4, 0.6]);
        let dst = spread_checker();
        assert!(matches!(
            fit_color_transform(&src, &dst),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn invert_examples() {
        assert_eq!(invert(&ColorMatrix3::IDENTITY).unwrap(), ColorMatrix3::IDENTITY);
        let inv = invert(&ColorMatrix3::diagonal([2.0, 1.0, 4.0]).unwrap()).unwrap();
        assert!(inv.max_abs_diff(&ColorMatrix3::diagonal([0.5, 1.0, 0.25]).unwrap()) < 1e-15);
        let sing = ColorMatrix3::new([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]]).unwrap();
        assert!(matches!(invert(&sing), Err(Error::Singular { .. })));
    }

    #[test]
    fn angular_error_reference_values() {
        let a = IlluminantRGB::new([0.3, 0.7, 0.2]).unwrap();
        assert!(angular_error_degrees(&a, &a) < 1e-5);
        let x = IlluminantRGB::new([1.0, 0.0, 0.0]).unwrap();
        let y = IlluminantRGB::new([0.0, 1.0, 0.0]).unwrap();
        assert!((angular_error_degrees(&x, &y) - 90.0).abs() < 1e-12);
        let e = IlluminantRGB::new([1.0, 1.0, 2.0]).unwrap();
        let g = IlluminantRGB::new([1.0, 1.0, 1.0]).unwrap();
        // acos(4/sqrt(18)) = 19.47122063449069 degrees
        assert!((angular_error_degrees(&e, &g) - 19.471_220_634_490_69).abs() < 1e-3);
        assert!(angle_between_degrees([0.0; 3], [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn neutral_patch_is_achromatic_after_wb() {
        let l = IlluminantRGB::new([0.62, 0.91, 0.37]).unwrap();
        let m = wb_matrix(&l).unwrap();
        let img = RawImage::uniform(4, 4, l.rgb().map(|v| 0.45 * v)).unwrap();
        let out = apply_color_matrix(&img, &m, true);
        for p in out.pixels() {
            let hi = p.iter().copied().fold(f64::MIN, f64::max);
            let lo = p.iter().copied().fold(f64::MAX, f64::min);
            assert!((hi - lo) / hi < 1e-9);
        }
    }

    fn finite_matrix() -> impl Strategy<Value = ColorMatrix3> {
        prop::array::uniform3(prop::array::uniform3(-2.0f64..2.0))
            .prop_map(|rows| ColorMatrix3::new(rows).unwrap())
    }

    // Nonnegative maps keep checker colors nonnegative.
    fn nonneg_matrix() -> impl Strategy<Value = ColorMatrix3> {
        prop::array::uniform3(prop::array::uniform3(0.0f64..2.0))
            .prop_map(|rows| ColorMatrix3::new(rows).unwrap())
    }

    fn positive_vec() -> impl Strategy<Value = [f64; 3]> {
        prop::array::uniform3(0.01f64..10.0)
    }

    proptest! {
        #[test]
        fn invert_matches_adjugate(m in finite_matrix()) {
            prop_assume!(m.determinant().abs() > 1e-2);
            let inv = invert(&m).unwrap();
            let prod = m.mul(&inv);
            prop_assert!(prod.max_abs_diff(&ColorMatrix3::IDENTITY) < 1e-9);
            let adj = adjugate_inverse(m.rows());
            let scale = adj.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
            let adj_m = ColorMatrix3 { rows: adj };
            prop_assert!(inv.max_abs_diff(&adj_m) < 1e-9 * scale);
        }

        #[test]
        fn fit_is_exact_for_consistent_systems(m in nonneg_matrix()) {
            let src = spread_checker();
            let dst_rows = src.transformed_rows(&m);
            let dst = CheckerColors::new(dst_rows).unwrap();
            let fit = fit_color_transform(&src, &dst).unwrap();
            prop_assert!(fit.residual < 1e-9);
            prop_assert!(fit.matrix.max_abs_diff(&m) < 1e-8);
            if m.determinant().abs() > 1e-2 {
                let back = fit_color_transform(&dst, &src).unwrap();
                let via_inverse = invert(&back.matrix).unwrap();
                prop_assert!(via_inverse.max_abs_diff(&fit.matrix) < 1e-6);
            }
        }

        #[test]
        fn angular_error_symmetric_and_scale_invariant(
            a in positive_vec(), b in positive_vec(), s in 0.001f64..1000.0
        ) {
            let la = IlluminantRGB::new(a).unwrap();
            let lb = IlluminantRGB::new(b).unwrap();
            let e = angular_error_degrees(&la, &lb);
            prop_assert!((e - angular_error_degrees(&lb, &la)).abs() < 1e-9);
            prop_assert!((e - angular_error_degrees(&la.scaled(s).unwrap(), &lb)).abs() < 1e-9);
            prop_assert!((e - angular_error_degrees(&la, &lb.scaled(s).unwrap())).abs() < 1e-9);
        }

        #[test]
        fn apply_is_linear(
            m in finite_matrix(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, seed in 0u64..1000
        ) {
            let f = |k: f64| move |x: usize, y: usize| {
                let t = (x * 7 + y * 13) as f64 + k + seed as f64;
                [t.sin().abs(), (t * 0.5).cos().abs(), (t * 0.3).sin().abs()]
            };
            let i1 = RawImage::from_fn(4, 3, f(0.0)).unwrap();
            let i2 = RawImage::from_fn(4, 3, f(1.7)).unwrap();
            let combo: Vec<f64> = i1.data().iter().zip(i2.data())
                .map(|(a, b)| alpha * a + beta * b).collect();
            let combo = RawImage { width: 4, height: 3, data: combo };
            let lhs = apply_color_matrix(&combo, &m, false);
            let o1 = apply_color_matrix(&i1, &m, false);
            let o2 = apply_color_matrix(&i2, &m, false);
            for ((l, a), b) in lhs.data().iter().zip(o1.data()).zip(o2.data()) {
                prop_assert!((l - (alpha * a + beta * b)).abs() < 1e-9);
            }
        }
    }
}
