//! Raw-domain augmentation and contrastive quadruple construction.
//!
//! Two families of augmentation live here:
//!
//! * [`perturb`]: stochastic intensity and noise perturbations that keep the
//!   illuminant label unchanged.
//! * Color augmentation that swaps or synthesizes illuminants. Full-Aug uses
//!   3×3 mappings fitted between checker colors; WB-Aug reduces them to
//!   diagonal white-balance gains.
//!
//! A novel illuminant `L_C` is defined by mixing checker colors,
//! `C_C = (1−w)·C_A + w·C_B`. The matching image transforms follow from the
//! fitted `M_AB` without another least-squares solve:
//! `M_AC = (1−w)·I + w·M_AB` and `M_BC = w·I + (1−w)·M_BA`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::color_math::{
    angular_error_degrees, apply_color_matrix, fit_color_transform, invert, neutral_direction_of,
    wb_matrix, CheckerColors, ColorMatrix3, IlluminantRGB, RawImage,
};
use crate::error::{Error, Result};
use crate::scene_synth::LabeledImage;

/// Minimum angle between anchor and novel illuminants for a valid negative.
pub const MIN_NEGATIVE_ANGLE_DEG: f64 = 0.1;

const MAX_MIX_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub intensity_gain_range: (f64, f64),
    pub gaussian_noise_std_range: (f64, f64),
    pub shot_noise_std_range: (f64, f64),
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            intensity_gain_range: (0.8, 1.2),
            gaussian_noise_std_range: (0.0, 0.04),
            shot_noise_std_range: (0.02, 0.06),
        }
    }
}

impl PerturbConfig {
    /// Gain fixed at 1 and no noise.
    pub fn identity() -> Self {
        Self {
            intensity_gain_range: (1.0, 1.0),
            gaussian_noise_std_range: (0.0, 0.0),
            shot_noise_std_range: (0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ordered(self.intensity_gain_range)
            || !ordered(self.gaussian_noise_std_range)
            || !ordered(self.shot_noise_std_range)
        {
            return Err(Error::domain("perturbation ranges must be ordered"));
        }
        if self.intensity_gain_range.0 <= 0.0
            || self.gaussian_noise_std_range.0 < 0.0
            || self.shot_noise_std_range.0 < 0.0
        {
            return Err(Error::domain("perturbation lower bounds out of range"));
        }
        Ok(())
    }
}

/// Uniform draw from `[lo, hi]`; a degenerate range returns `lo` exactly.
fn sample_range(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.random();
    if hi > lo {
        lo + (hi - lo) * u
    } else {
        lo
    }
}

/// `max(0, gain·x + σ_shot·sqrt(x)·ε₁ + σ_gauss·ε₂)` per value, with one
/// gain and one pair of noise levels drawn per image.
pub fn perturb(img: &RawImage, cfg: &PerturbConfig, rng: &mut impl Rng) -> RawImage {
    let gain = sample_range(rng, cfg.intensity_gain_range);
    let shot = sample_range(rng, cfg.shot_noise_std_range);
    let gauss = sample_range(rng, cfg.gaussian_noise_std_range);
    let data: Vec<f64> = img
        .data()
        .iter()
        .map(|&x| {
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            let v = gain * x + x.max(0.0).sqrt() * shot * e1 + gauss * e2;
            v.max(0.0)
        })
        .collect();
    RawImage::new(img.width(), img.height(), data).expect("perturbed image keeps its shape")
}

/// Mixing weight ranges for novel illuminants; zero is excluded so a
/// negative never collapses onto the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixWeightConfig {
    pub negative_range: (f64, f64),
    pub positive_range: (f64, f64),
}

impl Default for MixWeightConfig {
    fn default() -> Self {
        Self {
            negative_range: (-5.0, -0.3),
            positive_range: (0.3, 5.0),
        }
    }
}

impl MixWeightConfig {
    /// Both ranges collapsed onto a single weight.
    pub fn fixed(w: f64) -> Result<Self> {
        let cfg = Self {
            negative_range: (w, w),
            positive_range: (w, w),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (nl, nh) = self.negative_range;
        let (pl, ph) = self.positive_range;
        if !(nl <= nh && pl <= ph) {
            return Err(Error::domain("mix weight ranges must be ordered"));
        }
        let contains_zero = |lo: f64, hi: f64| lo <= 0.0 && hi >= 0.0;
        if contains_zero(nl, nh) || contains_zero(pl, ph) {
            return Err(Error::domain("mix weight ranges must exclude zero"));
        }
        Ok(())
    }

    /// Picks one of the two ranges with equal probability, then draws
    /// uniformly inside it.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if rng.random_bool(0.5) {
            sample_range(rng, self.negative_range)
        } else {
            sample_range(rng, self.positive_range)
        }
    }
}

/// `(1−w)·C_A + w·C_B`, negatives clamped to zero.
pub fn synth_novel_checker(c_a: &CheckerColors, c_b: &CheckerColors, w: f64) -> CheckerColors {
    let rows = std::array::from_fn(|k| {
        let (a, b) = (c_a.row(k), c_b.row(k));
        std::array::from_fn(|c| ((1.0 - w) * a[c] + w * b[c]).max(0.0))
    });
    CheckerColors::new(rows).expect("mixed checker is finite and clamped")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixDirection {
    /// Source image is lit by `L_A`; pass `M_AB`.
    AToC,
    /// Source image is lit by `L_B`; pass `M_BA`.
    BToC,
}

/// Mapping to the novel illuminant built from the identity and an existing
/// pairwise mapping.
pub fn interpolate_transform(m: &ColorMatrix3, w: f64, direction: MixDirection) -> ColorMatrix3 {
    match direction {
        MixDirection::AToC => ColorMatrix3::IDENTITY.blend(1.0 - w, m, w),
        MixDirection::BToC => ColorMatrix3::IDENTITY.blend(w, m, 1.0 - w),
    }
}

/// Where a full-matrix relight should send the image.
#[derive(Debug, Clone, Copy)]
pub enum RelightTarget<'a> {
    /// The illuminant whose checker colors are given.
    Checker(&'a CheckerColors),
    /// The novel illuminant `(1−w)·src + w·toward`.
    Mix { toward: &'a CheckerColors, w: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relit {
    pub image: RawImage,
    /// Direction of the relit neutral ramp.
    pub illuminant: IlluminantRGB,
    pub matrix: ColorMatrix3,
    /// Frobenius residual of the underlying checker fit.
    pub fit_residual: f64,
}

/// Relights an image with a checker-fitted 3×3 mapping. A rank-deficient
/// source checker surfaces as [`Error::RankDeficient`]; callers fall back to
/// [`relight_wb`].
pub fn relight_full(img: &RawImage, c_src: &CheckerColors, target: RelightTarget<'_>) -> Result<Relit> {
    let (matrix, fit_residual) = match target {
        RelightTarget::Checker(dst) => {
            let fit = fit_color_transform(c_src, dst)?;
            (fit.matrix, fit.residual)
        }
        RelightTarget::Mix { toward, w } => {
            let fit = fit_color_transform(c_src, toward)?;
            (interpolate_transform(&fit.matrix, w, MixDirection::AToC), fit.residual)
        }
    };
    let illuminant = neutral_direction_of(&c_src.transformed_rows(&matrix))?;
    Ok(Relit {
        image: apply_color_matrix(img, &matrix, true),
        illuminant,
        matrix,
        fit_residual,
    })
}

/// Diagonal mapping that white-balances with `l_src` and then undoes white
/// balance for `l_dst`.
pub fn wb_relight_matrix(l_src: &IlluminantRGB, l_dst: &IlluminantRGB) -> Result<ColorMatrix3> {
    if l_src.rgb().iter().chain(l_dst.rgb().iter()).any(|v| *v <= 0.0) {
        return Err(Error::domain("WB relighting needs strictly positive illuminants"));
    }
    let forward = wb_matrix(l_src)?;
    let back = wb_matrix(l_dst)?.diag();
    ColorMatrix3::diagonal(std::array::from_fn(|c| forward.diag()[c] / back[c]))
}

pub fn relight_wb(img: &RawImage, l_src: &IlluminantRGB, l_dst: &IlluminantRGB) -> Result<RawImage> {
    Ok(apply_color_matrix(img, &wb_relight_matrix(l_src, l_dst)?, true))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugMode {
    FullAug,
    WbAug,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrupleProvenance {
    pub scene_x: usize,
    pub scene_y: usize,
    pub illuminant_a: usize,
    pub illuminant_b: usize,
    pub w: f64,
    /// Mode actually used; Full-Aug falls back to WB-Aug on rank deficiency.
    pub mode: AugMode,
    pub fit_residual: Option<f64>,
}

/// Four contrastive views around the anchor `t(I_XA)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveQuadruple {
    pub anchor: RawImage,
    pub easy_pos: RawImage,
    pub hard_pos: RawImage,
    pub easy_neg: RawImage,
    pub hard_neg: RawImage,
    pub anchor_illuminant: IlluminantRGB,
    pub novel_illuminant: IlluminantRGB,
    pub provenance: QuadrupleProvenance,
}

struct ColorPlan {
    m_ba: ColorMatrix3,
    m_ab: ColorMatrix3,
    mode: AugMode,
    fit_residual: Option<f64>,
}

fn plan_mapping(a: &LabeledImage, b: &LabeledImage, mode: AugMode) -> Result<ColorPlan> {
    if mode == AugMode::FullAug {
        match fit_color_transform(&a.checker, &b.checker).and_then(|fit| {
            let m_ba = invert(&fit.matrix)?;
            Ok((fit, m_ba))
        }) {
            Ok((fit, m_ba)) => {
                return Ok(ColorPlan {
                    m_ab: fit.matrix,
                    m_ba,
                    mode,
                    fit_residual: Some(fit.residual),
                })
            }
            Err(Error::RankDeficient { .. }) | Err(Error::Singular { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(ColorPlan {
        m_ab: wb_relight_matrix(&a.illuminant, &b.illuminant)?,
        m_ba: wb_relight_matrix(&b.illuminant, &a.illuminant)?,
        mode: AugMode::WbAug,
        fit_residual: None,
    })
}

/// Builds the anchor, easy/hard positives and easy/hard negatives from the
/// pair `(I_XA, I_YB)`. Both negatives share one sampled `w`, hence one `L_C`.
pub fn build_quadruple(
    sample_a: &LabeledImage,
    sample_b: &LabeledImage,
    mode: AugMode,
    mix: &MixWeightConfig,
    perturb_cfg: &PerturbConfig,
    rng: &mut impl Rng,
) -> Result<ContrastiveQuadruple> {
    if sample_a.scene_id == sample_b.scene_id {
        return Err(Error::domain("quadruple needs two distinct scenes"));
    }
    let ab_angle = angular_error_degrees(&sample_a.illuminant, &sample_b.illuminant);
    if !(ab_angle > MIN_NEGATIVE_ANGLE_DEG) {
        return Err(Error::IlluminantsTooClose { degrees: ab_angle });
    }

    let plan = plan_mapping(sample_a, sample_b, mode)?;

    let mut chosen = None;
    let mut last_angle = 0.0;
    for _ in 0..MAX_MIX_ATTEMPTS {
        let w = mix.sample(rng);
        let m_ac = interpolate_transform(&plan.m_ab, w, MixDirection::AToC);
        let l_c = match plan.mode {
            AugMode::FullAug => neutral_direction_of(&sample_a.checker.transformed_rows(&m_ac)),
            AugMode::WbAug => IlluminantRGB::from_clamped(m_ac.transform(sample_a.illuminant.rgb())),
        };
        let Ok(l_c) = l_c else { continue };
        last_angle = angular_error_degrees(&sample_a.illuminant, &l_c);
        if last_angle > MIN_NEGATIVE_ANGLE_DEG {
            chosen = Some((w, m_ac, l_c));
            break;
        }
    }
    let (w, m_ac, l_c) = chosen.ok_or(Error::IlluminantsTooClose { degrees: last_angle })?;
    let m_bc = interpolate_transform(&plan.m_ba, w, MixDirection::BToC);

    let x_a = &sample_a.image;
    let y_b = &sample_b.image;
    let y_a = apply_color_matrix(y_b, &plan.m_ba, true);
    let x_c = apply_color_matrix(x_a, &m_ac, true);
    let y_c = apply_color_matrix(y_b, &m_bc, true);

    Ok(ContrastiveQuadruple {
        anchor: perturb(x_a, perturb_cfg, rng),
        easy_pos: perturb(x_a, perturb_cfg, rng),
        hard_pos: perturb(&y_a, perturb_cfg, rng),
        easy_neg: perturb(&y_c, perturb_cfg, rng),
        hard_neg: perturb(&x_c, perturb_cfg, rng),
        anchor_illuminant: sample_a.illuminant,
        novel_illuminant: l_c,
        provenance: QuadrupleProvenance {
            scene_x: sample_a.scene_id,
            scene_y: sample_b.scene_id,
            illuminant_a: sample_a.illuminant_id,
            illuminant_b: sample_b.illuminant_id,
            w,
            mode: plan.mode,
            fit_residual: plan.fit_residual,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color_math::{PixelRect, NEUTRAL_PATCHES};
    use crate::scene_synth::{planckian_spd, render_scene, stream_rng, SceneConfig, SceneSpec, SensorModel};

    fn labeled(scene_id: usize, temp: f64, tint: f64, exposure: f64) -> LabeledImage {
        let mut rng = stream_rng(99, scene_id as u64);
        let scene = SceneSpec::random(scene_id, SceneConfig::default(), 99, &mut rng).unwrap();
        let mut li = render_scene(&scene, &planckian_spd(temp, tint).unwrap(), &SensorModel::default(), exposure).unwrap();
        li.illuminant_id = scene_id;
        li
    }

    #[test]
    fn identity_perturbation_is_exact() {
        let img = labeled(0, 5000.0, 0.0, 20.0).image;
        let mut rng = stream_rng(1, 1);
        assert_eq!(perturb(&img, &PerturbConfig::identity(), &mut rng), img);
    }

    #[test]
    fn perturb_mean_matches_gain() {
        let cfg = PerturbConfig {
            intensity_gain_range: (1.1, 1.1),
            gaussian_noise_std_range: (0.02, 0.02),
            shot_noise_std_range: (0.03, 0.03),
        };
        let v = 0.5;
        let img = RawImage::uniform(100, 100, [v; 3]).unwrap();
        let mut rng = stream_rng(2, 0);
        let out = perturb(&img, &cfg, &mut rng);
        let n = out.data().len() as f64;
        let mean = out.data().iter().sum::<f64>() / n;
        let var = out.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let stderr = (var / n).sqrt();
        assert!((mean - 1.1 * v).abs() < 3.0 * stderr, "mean {mean}");
    }

    #[test]
    fn shot_noise_variance_scales_with_intensity() {
        let cfg = PerturbConfig {
            intensity_gain_range: (1.0, 1.0),
            gaussian_noise_std_range: (0.0, 0.0),
            shot_noise_std_range: (0.05, 0.05),
        };
        let variance = |v: f64, seed: u64| {
            let img = RawImage::uniform(100, 100, [v; 3]).unwrap();
            let out = perturb(&img, &cfg, &mut stream_rng(seed, 0));
            let n = out.data().len() as f64;
            out.data().iter().map(|x| (x - v).powi(2)).sum::<f64>() / n
        };
        let ratio = variance(0.25, 3) / variance(1.0, 4);
        assert!((ratio - 0.25).abs() < 0.025, "ratio {ratio}");
    }

    #[test]
    fn novel_checker_endpoints() {
        let a = labeled(0, 3000.0, 0.0, 1.0).checker;
        let b = labeled(1, 8000.0, 0.05, 1.0).checker;
        assert_eq!(synth_novel_checker(&a, &b, 0.0), a);
        assert_eq!(synth_novel_checker(&a, &b, 1.0), b);
        let mid = synth_novel_checker(&a, &b, 0.5);
        for k in 0..24 {
            for c in 0..3 {
                assert!((mid.row(k)[c] - 0.5 * (a.row(k)[c] + b.row(k)[c])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn interpolate_transform_examples() {
        let m = ColorMatrix3::new([[1.2, 0.1, 0.0], [0.0, 0.9, 0.05], [0.1, 0.0, 1.4]]).unwrap();
        assert_eq!(interpolate_transform(&m, 0.0, MixDirection::AToC), ColorMatrix3::IDENTITY);
        assert_eq!(interpolate_transform(&m, 1.0, MixDirection::AToC), m);
        assert_eq!(interpolate_transform(&m, 1.0, MixDirection::BToC), ColorMatrix3::IDENTITY);
        let d = interpolate_transform(&ColorMatrix3::diagonal([3.0, 1.0, 1.0]).unwrap(), 0.5, MixDirection::AToC);
        assert_eq!(d, ColorMatrix3::diagonal([2.0, 1.0, 1.0]).unwrap());
    }

    #[test]
    fn relight_full_identity_target() {
        let li = labeled(2, 4500.0, 0.0, 30.0);
        let relit = relight_full(&li.image, &li.checker, RelightTarget::Checker(&li.checker)).unwrap();
        assert!(relit.image.max_abs_diff(&li.image) < 1e-9);
    }

    #[test]
    fn relight_full_hits_exactly_consistent_target() {
        let li = labeled(3, 4000.0, 0.0, 30.0);
        let m = ColorMatrix3::new([[1.1, 0.05, 0.0], [0.02, 0.95, 0.04], [0.0, 0.03, 1.3]]).unwrap();
        let target = li.checker.transformed(&m);
        let relit = relight_full(&li.image, &li.checker, RelightTarget::Checker(&target)).unwrap();
        let scene_rect = |k: usize| {
            let r = li.checker_region;
            PixelRect { x: r.x + (k % 6) * 3, y: r.y + (k / 6) * 3, width: 3, height: 3 }
        };
        for k in 0..24 {
            let got = relit.image.region_mean(&scene_rect(k));
            for c in 0..3 {
                assert!((got[c] - target.row(k)[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn relight_full_midpoint_tracks_mixed_checker() {
        let a = labeled(4, 3200.0, 0.05, 30.0);
        let b = labeled(5, 7500.0, -0.05, 30.0);
        let relit = relight_full(&a.image, &a.checker, RelightTarget::Mix { toward: &b.checker, w: 0.5 }).unwrap();
        let expected = synth_novel_checker(&a.checker, &b.checker, 0.5);
        // Independent per-patch evaluation of (1-w)·c + w·(c·M_AB).
        let fit = fit_color_transform(&a.checker, &b.checker).unwrap();
        let mut err2 = 0.0;
        for k in 0..24 {
            let c = a.checker.row(k);
            let cm = fit.matrix.transform(c);
            let relit_row: [f64; 3] = std::array::from_fn(|i| 0.5 * c[i] + 0.5 * cm[i]);
            let region = a.checker_region;
            let rect = PixelRect { x: region.x + (k % 6) * 3, y: region.y + (k / 6) * 3, width: 3, height: 3 };
            let from_image = relit.image.region_mean(&rect);
            for i in 0..3 {
                assert!((from_image[i] - relit_row[i].max(0.0)).abs() < 1e-9);
                err2 += (relit_row[i] - expected.row(k)[i]).powi(2);
            }
        }
        assert!(err2.sqrt() <= 2.0 * relit.fit_residual + 1e-12);
    }

    #[test]
    fn relight_full_rank_deficient_source() {
        let li = labeled(6, 5000.0, 0.0, 1.0);
        let flat = CheckerColors::new([[0.2, 0.3, 0.1]; 24]).unwrap();
        let err = relight_full(&li.image, &flat, RelightTarget::Checker(&li.checker)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn relight_wb_examples() {
        let a = labeled(7, 3000.0, 0.0, 30.0);
        let b = labeled(8, 9000.0, 0.1, 30.0);
        let same = relight_wb(&a.image, &a.illuminant, &a.illuminant).unwrap();
        assert!(same.max_abs_diff(&a.image) < 1e-9);

        let neutral = RawImage::uniform(2, 2, a.illuminant.rgb().map(|v| 0.3 * v)).unwrap();
        let moved = relight_wb(&neutral, &a.illuminant, &b.illuminant).unwrap();
        let dir = IlluminantRGB::new(moved.pixel(0, 0)).unwrap();
        assert!(angular_error_degrees(&dir, &b.illuminant) < 1e-6);

        let round = relight_wb(&relight_wb(&a.image, &a.illuminant, &b.illuminant).unwrap(), &b.illuminant, &a.illuminant).unwrap();
        assert!(round.max_abs_diff(&a.image) < 1e-9);

        let zero_red = IlluminantRGB::new([0.0, 1.0, 1.0]).unwrap();
        assert!(relight_wb(&a.image, &zero_red, &b.illuminant).is_err());
    }

    #[test]
    fn mix_weights_avoid_zero() {
        let cfg = MixWeightConfig::default();
        let mut rng = stream_rng(5, 5);
        for _ in 0..10_000 {
            let w = cfg.sample(&mut rng);
            assert!(!(w > -0.3 && w < 0.3), "w = {w}");
            assert!((-5.0..=5.0).contains(&w));
        }
        assert!(MixWeightConfig { negative_range: (-1.0, 0.1), positive_range: (0.3, 1.0) }.validate().is_err());
        assert!(MixWeightConfig::fixed(0.0).is_err());
    }

    #[test]
    fn wb_quadruple_endpoint_matches_relight_wb() {
        let a = labeled(9, 3500.0, 0.0, 30.0);
        let b = labeled(10, 8000.0, 0.0, 30.0);
        let mut rng = stream_rng(6, 0);
        let q = build_quadruple(&a, &b, AugMode::WbAug, &MixWeightConfig::fixed(1.0).unwrap(), &PerturbConfig::identity(), &mut rng).unwrap();
        assert_eq!(q.hard_neg, relight_wb(&a.image, &a.illuminant, &b.illuminant).unwrap());
        assert_eq!(q.anchor, a.image);
        assert_eq!(q.easy_pos, a.image);
        assert!(angular_error_degrees(&q.novel_illuminant, &b.illuminant) < 1e-9);
    }

    #[test]
    fn quadruple_geometry_and_errors() {
        let a = labeled(11, 3500.0, 0.0, 30.0);
        let b = labeled(12, 6000.0, 0.05, 30.0);
        let mut rng = stream_rng(7, 0);
        let q = build_quadruple(&a, &b, AugMode::FullAug, &MixWeightConfig::default(), &PerturbConfig::default(), &mut rng).unwrap();
        assert_eq!(q.provenance.scene_x, a.scene_id);
        assert_eq!(q.provenance.scene_y, b.scene_id);
        assert_eq!(q.provenance.mode, AugMode::FullAug);
        assert!(q.provenance.fit_residual.is_some());
        assert!(angular_error_degrees(&q.anchor_illuminant, &q.novel_illuminant) > MIN_NEGATIVE_ANGLE_DEG);

        let same_scene = build_quadruple(&a, &a, AugMode::FullAug, &MixWeightConfig::default(), &PerturbConfig::default(), &mut rng);
        assert!(matches!(same_scene, Err(Error::Domain(_))));

        let mut twin = labeled(13, 3500.0, 0.0, 10.0);
        twin.illuminant = a.illuminant;
        let close = build_quadruple(&a, &twin, AugMode::WbAug, &MixWeightConfig::default(), &PerturbConfig::default(), &mut rng);
        assert!(matches!(close, Err(Error::IlluminantsTooClose { .. })));
    }

    #[test]
    fn full_aug_falls_back_on_degenerate_checker() {
        let mut a = labeled(14, 3500.0, 0.0, 30.0);
        let b = labeled(15, 8000.0, 0.0, 30.0);
        let l = a.illuminant.rgb();
        a.checker = CheckerColors::new([l.map(|v| 0.5 * v); 24]).unwrap();
        let mut rng = stream_rng(8, 0);
        let q = build_quadruple(&a, &b, AugMode::FullAug, &MixWeightConfig::default(), &PerturbConfig::default(), &mut rng).unwrap();
        assert_eq!(q.provenance.mode, AugMode::WbAug);
        assert!(q.provenance.fit_residual.is_none());
    }

    #[test]
    fn full_aug_novel_illuminant_follows_neutral_ramp() {
        let a = labeled(16, 3000.0, 0.0, 30.0);
        let b = labeled(17, 9000.0, 0.0, 30.0);
        let mut rng = stream_rng(9, 0);
        let q = build_quadruple(&a, &b, AugMode::FullAug, &MixWeightConfig::fixed(0.5).unwrap(), &PerturbConfig::identity(), &mut rng).unwrap();
        let fit = fit_color_transform(&a.checker, &b.checker).unwrap();
        let m_ac = interpolate_transform(&fit.matrix, 0.5, MixDirection::AToC);
        let mut acc = [0.0; 3];
        for k in NEUTRAL_PATCHES {
            let p = m_ac.transform(a.checker.row(k));
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            for c in 0..3 {
                acc[c] += p[c] / n;
            }
        }
        let expected = IlluminantRGB::new(acc).unwrap();
        assert!(angular_error_degrees(&expected, &q.novel_illuminant) < 1e-9);
    }
}
