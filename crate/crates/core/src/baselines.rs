//! Statistics-based illuminant estimators.

use serde::{Deserialize, Serialize};

use crate::color_math::{IlluminantRGB, RawImage};
use crate::error::{Error, Result};

pub const DEFAULT_MINKOWSKI_P: f64 = 6.0;

fn unit(v: [f64; 3], what: &str) -> Result<IlluminantRGB> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::domain(format!("{what}: image has no signal")));
    }
    IlluminantRGB::new(v.map(|x| x / n))
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::domain(format!("Minkowski norm p must be finite and >= 1, got {p}")));
    }
    Ok(())
}

/// Per-channel mean, normalized.
pub fn gray_world(img: &RawImage) -> Result<IlluminantRGB> {
    let mut sum = [0.0; 3];
    for p in img.pixels() {
        for c in 0..3 {
            sum[c] += p[c];
        }
    }
    let n = img.pixel_count() as f64;
    unit(sum.map(|s| s / n), "gray world")
}

/// Per-channel maximum, normalized.
pub fn white_patch(img: &RawImage) -> Result<IlluminantRGB> {
    let mut max = [0.0f64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            max[c] = max[c].max(p[c]);
        }
    }
    unit(max, "white patch")
}

/// `(mean x^p)^(1/p)` over `values`, computed relative to the maximum so
/// large `p` does not overflow.
fn minkowski_mean(values: &[f64], p: f64) -> f64 {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let acc: f64 = values.iter().map(|v| (v / max).powf(p)).sum();
    max * (acc / values.len() as f64).powf(1.0 / p)
}

/// Minkowski p-mean per channel. `p = 1` is gray world.
pub fn shades_of_gray(img: &RawImage, p: f64) -> Result<IlluminantRGB> {
    check_p(p)?;
    if p == 1.0 {
        return gray_world(img);
    }
    let est = std::array::from_fn(|c| {
        let channel: Vec<f64> = img.pixels().map(|px| px[c]).collect();
        minkowski_mean(&channel, p)
    });
    unit(est, "shades of gray")
}

/// First-order gray edge: Minkowski p-mean of per-channel gradient
/// magnitudes from central differences over interior pixels.
pub fn gray_edge(img: &RawImage, p: f64) -> Result<IlluminantRGB> {
    check_p(p)?;
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::domain("gray edge needs an image of at least 3x3 pixels"));
    }
    let mut mags: [Vec<f64>; 3] = Default::default();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let (l, r) = (img.pixel(x - 1, y), img.pixel(x + 1, y));
            let (u, d) = (img.pixel(x, y - 1), img.pixel(x, y + 1));
            for c in 0..3 {
                let gx = 0.5 * (r[c] - l[c]);
                let gy = 0.5 * (d[c] - u[c]);
                mags[c].push((gx * gx + gy * gy).sqrt());
            }
        }
    }
    let est = std::array::from_fn(|c| minkowski_mean(&mags[c], p));
    unit(est, "gray edge")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum BaselineMethod {
    GrayWorld,
    WhitePatch,
    ShadesOfGray { p: f64 },
    GrayEdge { p: f64 },
}

impl BaselineMethod {
    /// Parses `gray-world`, `white-patch`, `shades-of-gray[:p]`, `gray-edge[:p]`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, p) = match s.split_once(':') {
            Some((n, p)) => {
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::domain(format!("bad Minkowski p in {s:?}")))?;
                check_p(p)?;
                (n, Some(p))
            }
            None => (s, None),
        };
        let p = p.unwrap_or(DEFAULT_MINKOWSKI_P);
        match name {
            "gray-world" => Ok(Self::GrayWorld),
            "white-patch" => Ok(Self::WhitePatch),
            "shades-of-gray" => Ok(Self::ShadesOfGray { p }),
            "gray-edge" => Ok(Self::GrayEdge { p }),
            other => Err(Error::domain(format!("unknown method {other:?}"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::GrayWorld => "gray-world".into(),
            Self::WhitePatch => "white-patch".into(),
            Self::ShadesOfGray { p } => format!("shades-of-gray:{p}"),
            Self::GrayEdge { p } => format!("gray-edge:{p}"),
        }
    }

    pub fn estimate(&self, img: &RawImage) -> Result<IlluminantRGB> {
        match *self {
            Self::GrayWorld => gray_world(img),
            Self::WhitePatch => white_patch(img),
            Self::ShadesOfGray { p } => shades_of_gray(img, p),
            Self::GrayEdge { p } => gray_edge(img, p),
        }
    }
}
