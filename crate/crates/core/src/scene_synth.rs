//! Discretized spectral image formation.
//!
//! A sensor response is `Σ_λ R_c(λ)·S(λ)·L(λ)·Δλ` on a fixed 380–720 nm grid
//! with 10 nm spacing. Scenes are flat-patch mosaics plus a 24-patch checker
//! rendered under one spatially uniform illuminant.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color_math::{CheckerColors, IlluminantRGB, PixelRect, RawImage, CHECKER_PATCHES};
use crate::error::{Error, Result};

pub const WAVELENGTH_START_NM: f64 = 380.0;
pub const WAVELENGTH_STEP_NM: f64 = 10.0;
pub const SPECTRUM_SAMPLES: usize = 35;

/// Wavelength in nm of grid sample `i`.
pub fn wavelength(i: usize) -> f64 {
    WAVELENGTH_START_NM + WAVELENGTH_STEP_NM * i as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumKind {
    Illuminant,
    Reflectance,
    Sensitivity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    kind: SpectrumKind,
    samples: [f64; SPECTRUM_SAMPLES],
}

impl Spectrum {
    pub fn new(kind: SpectrumKind, samples: [f64; SPECTRUM_SAMPLES]) -> Result<Self> {
        if samples.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("spectrum samples must be finite and nonnegative"));
        }
        if kind == SpectrumKind::Reflectance && samples.iter().any(|v| *v > 1.0) {
            return Err(Error::domain("reflectance samples must not exceed 1"));
        }
        Ok(Self { kind, samples })
    }

    pub fn constant(kind: SpectrumKind, value: f64) -> Result<Self> {
        Self::new(kind, [value; SPECTRUM_SAMPLES])
    }

    /// Samples `f(λ)` on the grid.
    pub fn from_fn(kind: SpectrumKind, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(kind, std::array::from_fn(|i| f(wavelength(i))))
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn samples(&self) -> &[f64; SPECTRUM_SAMPLES] {
        &self.samples
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.kind, self.samples.map(|v| v * s))
    }

    /// Wavelength of the largest sample.
    pub fn peak_wavelength(&self) -> f64 {
        let (i, _) = self
            .samples
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        wavelength(i)
    }
}

/// Gaussian channel sensitivities, peak-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub centers_nm: [f64; 3],
    pub widths_nm: [f64; 3],
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            centers_nm: [605.0, 540.0, 460.0],
            widths_nm: [38.0, 42.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    params: SensorParams,
    channels: [Spectrum; 3],
}

impl SensorModel {
    pub fn gaussian(params: SensorParams) -> Result<Self> {
        let channel = |c: usize| {
            let (mu, sigma) = (params.centers_nm[c], params.widths_nm[c]);
            if !(sigma > 0.0) || !mu.is_finite() {
                return Err(Error::domain("sensor channel needs finite center and positive width"));
            }
            Spectrum::from_fn(SpectrumKind::Sensitivity, |l| {
                (-0.5 * ((l - mu) / sigma).powi(2)).exp()
            })
        };
        Self::from_channels(params, [channel(0)?, channel(1)?, channel(2)?])
    }

    /// Builds a sensor from explicit channel curves; `params` is kept only
    /// as a description for manifests.
    pub fn from_channels(params: SensorParams, channels: [Spectrum; 3]) -> Result<Self> {
        for ch in &channels {
            if ch.samples.iter().sum::<f64>() <= 0.0 {
                return Err(Error::domain("sensor channel integrates to zero"));
            }
        }
        Ok(Self { params, channels })
    }

    pub fn params(&self) -> &SensorParams {
        &self.params
    }

    pub fn channel(&self, c: usize) -> &Spectrum {
        &self.channels[c]
    }
}

impl Default for SensorModel {
    fn default() -> Self {
        Self::gaussian(SensorParams::default()).expect("default sensor is valid")
    }
}

/// Blackbody spectrum at `temperature_kelvin`, scaled to unit mean over the
/// grid, then multiplied by the linear tint ramp `1 + tint·x` with `x` going
/// from −1 at 380 nm to +1 at 720 nm.
pub fn planckian_spd(temperature_kelvin: f64, tint: f64) -> Result<Spectrum> {
    if !(2000.0..=12000.0).contains(&temperature_kelvin) {
        return Err(Error::domain(format!(
            "temperature {temperature_kelvin} K outside [2000, 12000]"
        )));
    }
    if !(tint.abs() <= 0.2) {
        return Err(Error::domain(format!("tint {tint} outside [-0.2, 0.2]")));
    }
    const H: f64 = 6.626_070_15e-34;
    const C: f64 = 2.997_924_58e8;
    const K: f64 = 1.380_649e-23;
    let radiance: [f64; SPECTRUM_SAMPLES] = std::array::from_fn(|i| {
        let lambda = wavelength(i) * 1e-9;
        2.0 * H * C * C / lambda.powi(5) / ((H * C / (lambda * K * temperature_kelvin)).exp_m1())
    });
    let mean = radiance.iter().sum::<f64>() / SPECTRUM_SAMPLES as f64;
    let span = wavelength(SPECTRUM_SAMPLES - 1) - WAVELENGTH_START_NM;
    let samples = std::array::from_fn(|i| {
        let x = 2.0 * (wavelength(i) - WAVELENGTH_START_NM) / span - 1.0;
        radiance[i] / mean * (1.0 + tint * x)
    });
    Spectrum::new(SpectrumKind::Illuminant, samples)
}

/// Sensor RGB of a surface under an illuminant.
pub fn render_color(reflectance: &Spectrum, illum: &Spectrum, sensor: &SensorModel) -> [f64; 3] {
    let mut rgb = [0.0; 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        let sens = &sensor.channels[c].samples;
        *out = (0..SPECTRUM_SAMPLES)
            .map(|k| sens[k] * reflectance.samples[k] * illum.samples[k])
            .sum::<f64>()
            * WAVELENGTH_STEP_NM;
    }
    rgb
}

/// Reflectances of the neutral ramp, patches 18..23.
pub const NEUTRAL_RAMP: [f64; 6] = [0.90, 0.59, 0.36, 0.19, 0.09, 0.031];

/// The fixed 24-patch checker: 18 chromatic lobes on a pedestal followed by
/// a six-step neutral ramp.
pub fn checker_reflectances() -> Vec<Spectrum> {
    // (center nm, width nm, pedestal, amplitude, optional second lobe center)
    const CHROMATIC: [(f64, f64, f64, f64, Option<f64>); 18] = [
        (610.0, 45.0, 0.08, 0.30, None),
        (600.0, 60.0, 0.15, 0.55, None),
        (470.0, 35.0, 0.07, 0.35, None),
        (540.0, 40.0, 0.05, 0.25, None),
        (450.0, 30.0, 0.10, 0.40, Some(650.0)),
        (500.0, 35.0, 0.08, 0.55, None),
        (620.0, 30.0, 0.05, 0.75, None),
        (440.0, 35.0, 0.06, 0.45, None),
        (650.0, 40.0, 0.06, 0.60, Some(420.0)),
        (420.0, 30.0, 0.04, 0.20, Some(680.0)),
        (560.0, 45.0, 0.05, 0.65, None),
        (590.0, 35.0, 0.06, 0.75, None),
        (450.0, 25.0, 0.03, 0.40, None),
        (530.0, 35.0, 0.04, 0.45, None),
        (660.0, 30.0, 0.04, 0.70, None),
        (575.0, 30.0, 0.06, 0.85, None),
        (640.0, 40.0, 0.08, 0.55, Some(430.0)),
        (485.0, 30.0, 0.06, 0.55, None),
    ];
    let lobe = |l: f64, mu: f64, sigma: f64| (-0.5 * ((l - mu) / sigma).powi(2)).exp();
    let mut out: Vec<Spectrum> = CHROMATIC
        .iter()
        .map(|&(mu, sigma, ped, amp, second)| {
            Spectrum::from_fn(SpectrumKind::Reflectance, |l| {
                let extra = second.map_or(0.0, |m2| 0.6 * amp * lobe(l, m2, sigma));
                (ped + amp * lobe(l, mu, sigma) + extra).min(1.0)
            })
            .expect("chromatic checker reflectance is valid")
        })
        .collect();
    out.extend(NEUTRAL_RAMP.iter().map(|&v| {
        Spectrum::constant(SpectrumKind::Reflectance, v).expect("neutral reflectance is valid")
    }));
    debug_assert_eq!(out.len(), CHECKER_PATCHES);
    out
}

/// Geometry and content knobs for random scenes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub patch_px: usize,
    /// Side length of one checker patch in pixels; the checker is 6×4 patches.
    pub checker_patch_px: usize,
    /// Strength of the radial shading falloff; `None` keeps pure patch colors.
    pub shading: Option<f64>,
    /// Pair every patch with its complement so the mean reflectance is flat.
    pub neutral_mean: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            grid_cols: 8,
            grid_rows: 8,
            patch_px: 8,
            checker_patch_px: 3,
            shading: None,
            neutral_mean: false,
        }
    }
}

pub const CHECKER_COLS: usize = 6;
pub const CHECKER_ROWS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub scene_id: usize,
    pub config: SceneConfig,
    /// Row-major, `grid_cols × grid_rows` entries.
    pub patches: Vec<Spectrum>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(scene_id: usize, config: SceneConfig, patches: Vec<Spectrum>, seed: u64) -> Result<Self> {
        if patches.len() != config.grid_cols * config.grid_rows {
            return Err(Error::domain("patch count does not match the scene grid"));
        }
        if patches.iter().any(|p| p.kind != SpectrumKind::Reflectance) {
            return Err(Error::domain("scene patches must be reflectances"));
        }
        let spec = Self {
            scene_id,
            config,
            patches,
            seed,
        };
        if spec.checker_region().width > spec.width() || spec.checker_region().height > spec.height() {
            return Err(Error::domain("checker does not fit in the scene"));
        }
        Ok(spec)
    }

    /// Random smooth reflectances drawn from `rng`.
    ///
    /// With `neutral_mean`, patches whose visible area (outside the checker)
    /// is equal are paired with their complements and any leftover patch is
    /// flat 0.5, so the masked image averages to a flat reflectance.
    pub fn random(scene_id: usize, config: SceneConfig, seed: u64, rng: &mut impl Rng) -> Result<Self> {
        let n = config.grid_cols * config.grid_rows;
        // Scenes lean towards one hue by a random amount, so the mean
        // reflectance is usually not flat.
        let bias_center = rng.random_range(400.0..700.0);
        let bias = rng.random_range(0.0..0.8);
        if !config.neutral_mean {
            let patches = (0..n)
                .map(|_| random_reflectance(rng, bias_center, bias))
                .collect::<Result<Vec<_>>>()?;
            return Self::new(scene_id, config, patches, seed);
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, area) in visible_patch_areas(&config).into_iter().enumerate() {
            groups.entry(area).or_default().push(i);
        }
        let mut patches = vec![None; n];
        for members in groups.values() {
            for pair in members.chunks(2) {
                if let [a, b] = *pair {
                    let s = random_reflectance(rng, bias_center, bias)?;
                    let complement = Spectrum::new(SpectrumKind::Reflectance, s.samples.map(|v| 1.0 - v))?;
                    patches[a] = Some(s);
                    patches[b] = Some(complement);
                } else {
                    patches[pair[0]] = Some(Spectrum::constant(SpectrumKind::Reflectance, 0.5)?);
                }
            }
        }
        Self::new(scene_id, config, patches.into_iter().map(|p| p.expect("every patch assigned")).collect(), seed)
    }

    pub fn width(&self) -> usize {
        self.config.grid_cols * self.config.patch_px
    }

    pub fn height(&self) -> usize {
        self.config.grid_rows * self.config.patch_px
    }

    /// Bottom-right rectangle covered by the checker.
    pub fn checker_region(&self) -> PixelRect {
        checker_region_for(&self.config)
    }

    /// Pixel rectangle of checker patch `k`.
    pub fn checker_patch_rect(&self, k: usize) -> PixelRect {
        let region = self.checker_region();
        let p = self.config.checker_patch_px;
        PixelRect {
            x: region.x + (k % CHECKER_COLS) * p,
            y: region.y + (k / CHECKER_COLS) * p,
            width: p,
            height: p,
        }
    }
}

fn checker_region_for(config: &SceneConfig) -> PixelRect {
    let w = CHECKER_COLS * config.checker_patch_px;
    let h = CHECKER_ROWS * config.checker_patch_px;
    PixelRect {
        x: (config.grid_cols * config.patch_px).saturating_sub(w),
        y: (config.grid_rows * config.patch_px).saturating_sub(h),
        width: w,
        height: h,
    }
}

/// Pixels of each grid patch left uncovered by the checker.
fn visible_patch_areas(config: &SceneConfig) -> Vec<usize> {
    let region = checker_region_for(config);
    let p = config.patch_px;
    let span = |a0: usize, a1: usize, b0: usize, b1: usize| a1.min(b1).saturating_sub(a0.max(b0));
    (0..config.grid_rows * config.grid_cols)
        .map(|i| {
            let (x0, y0) = ((i % config.grid_cols) * p, (i / config.grid_cols) * p);
            let covered = span(x0, x0 + p, region.x, region.x + region.width)
                * span(y0, y0 + p, region.y, region.y + region.height);
            p * p - covered
        })
        .collect()
}

fn random_reflectance(rng: &mut impl Rng, bias_center: f64, bias: f64) -> Result<Spectrum> {
    let pedestal = rng.random_range(0.02..0.25);
    let lobes = if rng.random_bool(0.3) { 2 } else { 1 };
    let mut params = Vec::with_capacity(lobes);
    for _ in 0..lobes {
        let center = if rng.random_bool(bias) {
            (bias_center + rng.random_range(-40.0..40.0)).clamp(380.0, 720.0)
        } else {
            rng.random_range(380.0..720.0)
        };
        params.push((center, rng.random_range(20.0..90.0), rng.random_range(0.1..0.75)));
    }
    Spectrum::from_fn(SpectrumKind::Reflectance, |l| {
        let v: f64 = params
            .iter()
            .map(|&(mu, sigma, amp)| amp * (-0.5 * ((l - mu) / sigma).powi(2)).exp())
            .sum();
        (pedestal + v).min(1.0)
    })
}

/// A rendered scene with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: RawImage,
    pub illuminant: IlluminantRGB,
    pub checker: CheckerColors,
    pub checker_region: PixelRect,
    pub scene_id: usize,
    pub illuminant_id: usize,
}

impl LabeledImage {
    /// The image with the checker pixels zeroed, as fed to estimators.
    pub fn masked_image(&self) -> RawImage {
        self.image.masked(&self.checker_region)
    }
}

/// Renders every patch and the checker; the illuminant label is the
/// exposure-scaled response to a unit reflectance.
pub fn render_scene(
    scene: &SceneSpec,
    illum: &Spectrum,
    sensor: &SensorModel,
    exposure: f64,
) -> Result<LabeledImage> {
    if !(exposure > 0.0) || !exposure.is_finite() {
        return Err(Error::domain("exposure must be positive"));
    }
    let cfg = &scene.config;
    let patch_rgb: Vec<[f64; 3]> = scene
        .patches
        .iter()
        .map(|s| render_color(s, illum, sensor).map(|v| v * exposure))
        .collect();
    let checker_rgb: Vec<[f64; 3]> = checker_reflectances()
        .iter()
        .map(|s| render_color(s, illum, sensor).map(|v| v * exposure))
        .collect();
    let white = Spectrum::constant(SpectrumKind::Reflectance, 1.0)?;
    let illuminant = IlluminantRGB::new(render_color(&white, illum, sensor).map(|v| v * exposure))?;

    let (w, h) = (scene.width(), scene.height());
    let region = scene.checker_region();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let max_r2 = cx * cx + cy * cy;
    let image = RawImage::from_fn(w, h, |x, y| {
        if region.contains(x, y) {
            let k = (y - region.y) / cfg.checker_patch_px * CHECKER_COLS
                + (x - region.x) / cfg.checker_patch_px;
            return checker_rgb[k];
        }
        let p = patch_rgb[(y / cfg.patch_px) * cfg.grid_cols + x / cfg.patch_px];
        match cfg.shading {
            Some(strength) => {
                let r2 = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / max_r2.max(1.0);
                let f = (1.0 - strength * r2).max(0.0);
                p.map(|v| v * f)
            }
            None => p,
        }
    })?;

    let checker_rows: [[f64; 3]; CHECKER_PATCHES] = std::array::from_fn(|k| checker_rgb[k]);
    Ok(LabeledImage {
        image,
        illuminant,
        checker: CheckerColors::new(checker_rows)?,
        checker_region: region,
        scene_id: scene.scene_id,
        illuminant_id: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminantParams {
    pub temperature_kelvin: f64,
    pub tint: f64,
}

impl IlluminantParams {
    pub fn spd(&self) -> Result<Spectrum> {
        planckian_spd(self.temperature_kelvin, self.tint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub scene: SceneConfig,
    pub temperature_range: (f64, f64),
    pub tint_range: (f64, f64),
    /// Brightest pixel after exposure is drawn from this range.
    pub peak_range: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            temperature_range: (2500.0, 9500.0),
            tint_range: (-0.1, 0.1),
            peak_range: (0.6, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub seed: u64,
    pub config: SynthConfig,
    pub sensor: SensorParams,
    pub illuminants: Vec<IlluminantParams>,
    pub images: Vec<LabeledImage>,
}

/// Per-image RNG stream derived from `(seed, stream)` so results do not
/// depend on generation order.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n_scenes` random scenes; scene `i` is lit by illuminant `i mod n_illums`.
pub fn synth_dataset(
    n_scenes: usize,
    n_illums: usize,
    sensor: &SensorModel,
    seed: u64,
) -> Result<SynthDataset> {
    synth_dataset_with(n_scenes, n_illums, sensor, seed, &SynthConfig::default())
}

pub fn synth_dataset_with(
    n_scenes: usize,
    n_illums: usize,
    sensor: &SensorModel,
    seed: u64,
    config: &SynthConfig,
) -> Result<SynthDataset> {
    if n_scenes == 0 || n_illums == 0 {
        return Err(Error::domain("dataset needs at least one scene and one illuminant"));
    }
    let mut illum_rng = stream_rng(seed, 0);
    let illuminants: Vec<IlluminantParams> = (0..n_illums)
        .map(|_| IlluminantParams {
            temperature_kelvin: illum_rng.random_range(config.temperature_range.0..=config.temperature_range.1),
            tint: illum_rng.random_range(config.tint_range.0..=config.tint_range.1),
        })
        .collect();
    let spds = illuminants
        .iter()
        .map(IlluminantParams::spd)
        .collect::<Result<Vec<_>>>()?;

    let mut images = Vec::with_capacity(n_scenes);
    for i in 0..n_scenes {
        let mut rng = stream_rng(seed, i as u64 + 1);
        let scene = SceneSpec::random(i, config.scene, seed, &mut rng)?;
        let illuminant_id = i % n_illums;
        let spd = &spds[illuminant_id];
        let unit = render_scene(&scene, spd, sensor, 1.0)?;
        let peak = rng.random_range(config.peak_range.0..=config.peak_range.1);
        let exposure = peak / unit.image.max_value().max(f64::MIN_POSITIVE);
        let mut labeled = render_scene(&scene, spd, sensor, exposure)?;
        labeled.illuminant_id = illuminant_id;
        images.push(labeled);
    }

    Ok(SynthDataset {
        seed,
        config: *config,
        sensor: *sensor.params(),
        illuminants,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color_math::{angular_error_degrees, apply_color_matrix, wb_matrix, NEUTRAL_PATCHES};

    fn flat_scene(id: usize, value: f64) -> SceneSpec {
        let cfg = SceneConfig::default();
        let n = cfg.grid_cols * cfg.grid_rows;
        let patches = (0..n)
            .map(|i| {
                Spectrum::from_fn(SpectrumKind::Reflectance, |l| {
                    (value * (0.5 + 0.5 * ((l / 40.0) + i as f64).sin())).clamp(0.0, 1.0)
                })
                .unwrap()
            })
            .collect();
        SceneSpec::new(id, cfg, patches, 0).unwrap()
    }

    #[test]
    fn planckian_peak_follows_wien() {
        let spd = planckian_spd(6500.0, 0.0).unwrap();
        let wien = 2.898e6 / 6500.0;
        assert!((spd.peak_wavelength() - wien).abs() <= WAVELENGTH_STEP_NM);
        assert!(spd.samples().iter().all(|v| *v > 0.0));
        let mean = spd.samples().iter().sum::<f64>() / SPECTRUM_SAMPLES as f64;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn planckian_rejects_out_of_range() {
        assert!(planckian_spd(1999.0, 0.0).is_err());
        assert!(planckian_spd(12001.0, 0.0).is_err());
        assert!(planckian_spd(5000.0, 0.25).is_err());
        assert!(planckian_spd(2000.0, -0.2).is_ok());
    }

    #[test]
    fn hotter_is_bluer() {
        let sensor = SensorModel::default();
        let white = Spectrum::constant(SpectrumKind::Reflectance, 1.0).unwrap();
        let warm = render_color(&white, &planckian_spd(3000.0, 0.0).unwrap(), &sensor);
        let cool = render_color(&white, &planckian_spd(8000.0, 0.0).unwrap(), &sensor);
        assert!(cool[2] / cool[0] > warm[2] / warm[0]);
    }

    #[test]
    fn render_color_examples() {
        let sensor = SensorModel::default();
        let illum = planckian_spd(5000.0, 0.05).unwrap();
        let zero = Spectrum::constant(SpectrumKind::Reflectance, 0.0).unwrap();
        assert_eq!(render_color(&zero, &illum, &sensor), [0.0; 3]);

        // Single nonzero sensitivity sample: one-term sum.
        let k = 17;
        let delta = |scale: f64| {
            let mut s = [0.0; SPECTRUM_SAMPLES];
            s[k] = scale;
            Spectrum::new(SpectrumKind::Sensitivity, s).unwrap()
        };
        let sensor = SensorModel::from_channels(SensorParams::default(), [delta(0.8), delta(0.5), delta(0.2)]).unwrap();
        let refl = Spectrum::from_fn(SpectrumKind::Reflectance, |l| l / 1000.0).unwrap();
        let rgb = render_color(&refl, &illum, &sensor);
        let s = refl.samples()[k];
        let l = illum.samples()[k];
        for (c, r) in [0.8, 0.5, 0.2].iter().enumerate() {
            assert!((rgb[c] - r * s * l * WAVELENGTH_STEP_NM).abs() < 1e-15);
        }
    }

    #[test]
    fn rendering_is_bilinear() {
        let sensor = SensorModel::default();
        let illum = planckian_spd(4200.0, -0.05).unwrap();
        let refl = checker_reflectances()[5].clone();
        let base = render_color(&refl, &illum, &sensor);
        let (a, b) = (0.4, 2.5);
        let scaled = render_color(&refl.scaled(a).unwrap(), &illum.scaled(b).unwrap(), &sensor);
        for c in 0..3 {
            assert!((scaled[c] - a * b * base[c]).abs() < 1e-12 * base[c].max(1.0));
        }
    }

    #[test]
    fn checker_is_fixed_and_neutral_ramp_is_flat() {
        let c = checker_reflectances();
        assert_eq!(c.len(), CHECKER_PATCHES);
        for (k, s) in c.iter().enumerate().skip(18) {
            assert!(s.samples().iter().all(|v| *v == NEUTRAL_RAMP[k - 18]));
        }
    }

    #[test]
    fn exposure_is_linear() {
        let scene = flat_scene(3, 0.8);
        let sensor = SensorModel::default();
        let illum = planckian_spd(5600.0, 0.0).unwrap();
        let a = render_scene(&scene, &illum, &sensor, 0.5).unwrap();
        let b = render_scene(&scene, &illum, &sensor, 1.0).unwrap();
        assert_eq!(a.image.scaled(2.0), b.image);
        assert_eq!(a.checker.scaled(2.0).unwrap(), b.checker);
        assert_eq!(a.illuminant.scaled(2.0).unwrap(), b.illuminant);
        let est = IlluminantRGB::new([0.3, 0.5, 0.2]).unwrap();
        assert!((angular_error_degrees(&est, &a.illuminant) - angular_error_degrees(&est, &b.illuminant)).abs() < 1e-9);
    }

    #[test]
    fn neutral_patch_points_at_ground_truth() {
        let scene = flat_scene(0, 0.7);
        let sensor = SensorModel::default();
        let illum = planckian_spd(3300.0, 0.1).unwrap();
        let li = render_scene(&scene, &illum, &sensor, 0.01).unwrap();
        let brightest = IlluminantRGB::new(li.checker.row(18)).unwrap();
        assert!(angular_error_degrees(&brightest, &li.illuminant) < 1e-6);

        let wb = wb_matrix(&li.illuminant).unwrap();
        for k in NEUTRAL_PATCHES {
            let p = wb.transform(li.checker.row(k));
            let hi = p.iter().copied().fold(f64::MIN, f64::max);
            let lo = p.iter().copied().fold(f64::MAX, f64::min);
            assert!((hi - lo) / hi < 1e-6);
        }
        let balanced = apply_color_matrix(&li.image, &wb, true);
        let p = balanced.region_mean(&scene.checker_patch_rect(20));
        assert!((p[0] - p[1]).abs() / p[1] < 1e-9 && (p[2] - p[1]).abs() / p[1] < 1e-9);
    }

    #[test]
    fn checker_pixels_match_checker_rows() {
        let scene = flat_scene(1, 0.5);
        let sensor = SensorModel::default();
        let li = render_scene(&scene, &planckian_spd(7000.0, 0.0).unwrap(), &sensor, 2.0).unwrap();
        for k in 0..CHECKER_PATCHES {
            let m = li.image.region_mean(&scene.checker_patch_rect(k));
            for c in 0..3 {
                assert!((m[c] - li.checker.row(k)[c]).abs() < 1e-9);
            }
        }
        let other = render_scene(&flat_scene(2, 0.9), &planckian_spd(7000.0, 0.0).unwrap(), &sensor, 2.0).unwrap();
        assert_eq!(li.checker, other.checker);
    }

    #[test]
    fn shading_leaves_checker_untouched() {
        let mut scene = flat_scene(4, 0.6);
        scene.config.shading = Some(0.4);
        let sensor = SensorModel::default();
        let li = render_scene(&scene, &planckian_spd(5000.0, 0.0).unwrap(), &sensor, 1.0).unwrap();
        let flat = render_scene(&flat_scene(4, 0.6), &planckian_spd(5000.0, 0.0).unwrap(), &sensor, 1.0).unwrap();
        assert_eq!(li.checker, flat.checker);
        assert!(li.image.pixel(0, 0)[1] < flat.image.pixel(0, 0)[1]);
    }

    #[test]
    fn synth_is_deterministic() {
        let sensor = SensorModel::default();
        let a = synth_dataset(6, 3, &sensor, 11).unwrap();
        let b = synth_dataset(6, 3, &sensor, 11).unwrap();
        assert_eq!(a, b);
        let c = synth_dataset(6, 3, &sensor, 12).unwrap();
        assert_ne!(a.images[0].image, c.images[0].image);
        let one = synth_dataset(1, 1, &sensor, 0).unwrap();
        assert_eq!(one.images.len(), 1);
        assert!(synth_dataset(0, 1, &sensor, 0).is_err());
    }

    #[test]
    fn synth_illuminants_are_distinct() {
        let sensor = SensorModel::default();
        let ds = synth_dataset(200, 200, &sensor, 5).unwrap();
        assert_eq!(ds.images.len(), 200);
        for (i, a) in ds.images.iter().enumerate() {
            assert!(a.illuminant.rgb().iter().all(|v| *v > 0.0));
            assert!(a.image.max_value() <= 0.95 + 1e-12);
            for b in &ds.images[i + 1..] {
                if a.illuminant_id != b.illuminant_id {
                    assert!(angular_error_degrees(&a.illuminant, &b.illuminant) > 0.0);
                }
            }
        }
    }

    #[test]
    fn neutral_mean_scene_has_flat_average() {
        let cfg = SceneConfig {
            neutral_mean: true,
            ..SceneConfig::default()
        };
        let mut rng = stream_rng(3, 9);
        let scene = SceneSpec::random(0, cfg, 3, &mut rng).unwrap();
        let areas = visible_patch_areas(&cfg);
        let total: usize = areas.iter().sum();
        assert_eq!(total, scene.width() * scene.height() - 18 * 12);
        for k in 0..SPECTRUM_SAMPLES {
            let mean = scene
                .patches
                .iter()
                .zip(&areas)
                .map(|(p, &a)| p.samples()[k] * a as f64)
                .sum::<f64>()
                / total as f64;
            assert!((mean - 0.5).abs() < 1e-12);
        }
    }
}
