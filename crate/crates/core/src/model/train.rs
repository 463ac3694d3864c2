use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::illuminant_loss;
use super::net::{backward_into, forward, forward_with_rng, prepare_input, ForwardCache, HeadGrads, InputTensor, ModelParams, ModelShape};
use crate::augment::{build_quadruple, AugMode, MixWeightConfig, PerturbConfig};
use crate::color_math::{angular_error_degrees, IlluminantRGB, PixelRect, RawImage};
use crate::contrastive::{clcc_loss, NceConfig, Projection};
use crate::error::{Error, Result};
use crate::scene_synth::{stream_rng, LabeledImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Baseline,
    ClccWb,
    ClccFull,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Baseline => "baseline",
            TrainMode::ClccWb => "clcc-wb",
            TrainMode::ClccFull => "clcc-full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(TrainMode::Baseline),
            "clcc-wb" | "clcc_wb" => Ok(TrainMode::ClccWb),
            "clcc-full" | "clcc_full" => Ok(TrainMode::ClccFull),
            other => Err(Error::domain(format!("unknown training mode {other:?}"))),
        }
    }

    fn aug_mode(self) -> Option<AugMode> {
        match self {
            TrainMode::Baseline => None,
            TrainMode::ClccWb => Some(AugMode::WbAug),
            TrainMode::ClccFull => Some(AugMode::FullAug),
        }
    }
}

/// Loss weights `(λ, β)` held for a number of epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseWeights {
    pub epochs: usize,
    pub lambda: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub phases: [PhaseWeights; 2],
    pub nce: NceConfig,
    pub perturb: PerturbConfig,
    pub mix: MixWeightConfig,
    pub shape: ModelShape,
    pub seed: u64,
    /// Compute validation error after every epoch (when a validation set is given).
    pub validate_every_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 16,
            dropout: 0.5,
            weight_decay: 0.000057,
            phases: [
                PhaseWeights { epochs: 30, lambda: 0.1, beta: 1.0 },
                PhaseWeights { epochs: 30, lambda: 1.0, beta: 0.1 },
            ],
            nce: NceConfig::default(),
            perturb: PerturbConfig::default(),
            mix: MixWeightConfig::default(),
            shape: ModelShape::default(),
            seed: 0,
            validate_every_epoch: true,
        }
    }
}

impl TrainConfig {
    /// Same schedule shape with `epochs` split evenly across the two phases.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        let first = epochs / 2;
        self.phases[0].epochs = first;
        self.phases[1].epochs = epochs - first;
        self
    }

    pub fn total_epochs(&self) -> usize {
        self.phases[0].epochs + self.phases[1].epochs
    }

    pub fn phase_for_epoch(&self, epoch: usize) -> PhaseWeights {
        if epoch < self.phases[0].epochs {
            self.phases[0]
        } else {
            self.phases[1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.nce.validate()?;
        self.perturb.validate()?;
        self.mix.validate()?;
        self.shape.validate()?;
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::domain("dropout must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::domain("weight decay must be nonnegative"));
        }
        if self.total_epochs() == 0 {
            return Err(Error::domain("training needs at least one epoch"));
        }
        if self.phases.iter().any(|p| !(p.lambda >= 0.0 && p.beta >= 0.0)) {
            return Err(Error::domain("loss weights must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lambda: f64,
    pub beta: f64,
    /// Mean angular loss (radians) over the epoch's anchors.
    pub illuminant_loss: f64,
    /// Mean CLCC loss per anchor; zero in baseline mode.
    pub contrastive_loss: f64,
    pub quadruples_built: usize,
    pub wb_fallbacks: usize,
    pub validation_error_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub mode: TrainMode,
    pub epochs: Vec<EpochLog>,
    pub steps: usize,
}

/// Losses of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub illuminant_loss: f64,
    pub contrastive_loss: f64,
    /// `λ·L_illum + β·L_contrastive`, averaged over the batch.
    pub objective: f64,
    pub quadruples_built: usize,
    pub wb_fallbacks: usize,
}

fn model_input(img: &RawImage, mask: &PixelRect, size: usize) -> Result<InputTensor<f32>> {
    prepare_input::<f32>(img, Some(mask)).center_crop(size)
}

/// Optimizer state plus the training data. Exposed so tests can drive
/// individual steps.
pub struct Trainer<'a> {
    data: &'a [LabeledImage],
    cfg: TrainConfig,
    mode: TrainMode,
    params: ModelParams<f32>,
    adam: AdamState<f32>,
    anchors: Vec<InputTensor<f32>>,
    grads: Vec<f32>,
    steps: usize,
}

struct Views {
    caches: Vec<ForwardCache<f32>>,
    projections: Vec<Projection>,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a [LabeledImage], cfg: TrainConfig, mode: TrainMode) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::domain("training set is empty"));
        }
        if mode != TrainMode::Baseline && data.len() < 2 {
            return Err(Error::domain("contrastive training needs at least two scenes"));
        }
        let params = ModelParams::<f32>::init(cfg.shape.clone(), cfg.seed)?;
        let anchors = data
            .iter()
            .map(|s| model_input(&s.image, &s.checker_region, cfg.shape.input_size))
            .collect::<Result<Vec<_>>>()?;
        let n = params.len();
        Ok(Self {
            data,
            cfg,
            mode,
            adam: AdamState::zeros(n),
            grads: vec![0.0; n],
            params,
            anchors,
            steps: 0,
        })
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn into_params(self) -> ModelParams<f32> {
        self.params
    }

    /// One Adam step on the items `batch` (indices into the training set).
    pub fn step(&mut self, batch: &[usize], phase: PhaseWeights, rng: &mut ChaCha8Rng) -> Result<StepStats> {
        if batch.is_empty() || batch.iter().any(|&i| i >= self.data.len()) {
            return Err(Error::domain("batch indices out of range"));
        }
        self.grads.fill(0.0);
        let inv_b = 1.0 / batch.len() as f64;
        let mut stats = StepStats {
            illuminant_loss: 0.0,
            contrastive_loss: 0.0,
            objective: 0.0,
            quadruples_built: 0,
            wb_fallbacks: 0,
        };

        for &i in batch {
            let out = forward_with_rng(&self.params, &self.anchors[i], true, self.cfg.dropout, rng)?;
            let gt = self.data[i].illuminant.normalized();
            let gt = [gt[0] as f32, gt[1] as f32, gt[2] as f32];
            let (loss, d_est) = illuminant_loss(&out.estimate, &gt)?;
            stats.illuminant_loss += loss as f64 * inv_b;
            let scale = (phase.lambda * inv_b) as f32;
            let head = HeadGrads { d_estimate: Some(d_est.map(|g| g * scale)), d_projection: None };
            backward_into(&self.params, &out.cache, &head, &mut self.grads)?;
        }

        if let Some(aug) = self.mode.aug_mode() {
            let views = self.contrastive_views(batch, aug, rng, &mut stats)?;
            self.contrastive_backward(&views, phase.beta * inv_b, inv_b, &mut stats)?;
        }

        stats.objective = phase.lambda * stats.illuminant_loss + phase.beta * stats.contrastive_loss;
        if !stats.objective.is_finite() {
            return Err(Error::Diverged {
                epoch: 0,
                step: self.steps,
                detail: format!("non-finite objective {}", stats.objective),
            });
        }
        self.params.add_weight_decay(&mut self.grads, self.cfg.weight_decay);
        adam_step(&mut self.params, &self.grads, &mut self.adam, &self.cfg.adam)?;
        if !self.params.is_finite() {
            return Err(Error::Diverged {
                epoch: 0,
                step: self.steps,
                detail: "non-finite parameters after update".into(),
            });
        }
        self.steps += 1;
        Ok(stats)
    }

    /// Builds one quadruple per batch item and runs the five views through
    /// the network. View order per item: anchor, easy+, hard+, easy−, hard−.
    fn contrastive_views(
        &self,
        batch: &[usize],
        aug: AugMode,
        rng: &mut ChaCha8Rng,
        stats: &mut StepStats,
    ) -> Result<Vec<Views>> {
        let size = self.cfg.shape.input_size;
        let mut all = Vec::with_capacity(batch.len());
        for &i in batch {
            let a = &self.data[i];
            let quad = self.quadruple_for(i, aug, rng)?;
            stats.quadruples_built += 1;
            if aug == AugMode::FullAug && quad.provenance.mode == AugMode::WbAug {
                stats.wb_fallbacks += 1;
            }
            let mut caches = Vec::with_capacity(5);
            let mut projections = Vec::with_capacity(5);
            for img in [&quad.anchor, &quad.easy_pos, &quad.hard_pos, &quad.easy_neg, &quad.hard_neg] {
                let input = model_input(img, &a.checker_region, size)?;
                let out = forward(&self.params, &input, None)?;
                projections.push(Projection::raw(out.projection.iter().map(|v| *v as f64).collect()));
                caches.push(out.cache);
            }
            all.push(Views { caches, projections });
        }
        Ok(all)
    }

    /// Draws partners until a valid quadruple is formed.
    fn quadruple_for(&self, i: usize, aug: AugMode, rng: &mut ChaCha8Rng) -> Result<crate::augment::ContrastiveQuadruple> {
        let a = &self.data[i];
        let n = self.data.len();
        let mut last_err = None;
        for _ in 0..32 {
            let j = (i + 1 + rng.random_range(0..n - 1)) % n;
            let b = &self.data[j];
            if b.scene_id == a.scene_id {
                continue;
            }
            match build_quadruple(a, b, aug, &self.cfg.mix, &self.cfg.perturb, rng) {
                Ok(q) => return Ok(q),
                Err(e @ Error::IlluminantsTooClose { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or_else(|| Error::domain("no partner scene with a distinct illuminant")))
    }

    fn contrastive_backward(&mut self, views: &[Views], scale: f64, inv_b: f64, stats: &mut StepStats) -> Result<()> {
        let b = views.len();
        let dim = self.cfg.shape.proj_dim;
        let mut d_proj: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; dim]; 5]; b];
        let n_extra = self.cfg.nce.n_negatives - 1;
        for i in 0..b {
            // Extra negatives: other items' anchor, easy− and hard− in cyclic order.
            let mut extra_ids = Vec::with_capacity(n_extra);
            'fill: for off in 1..b {
                let j = (i + off) % b;
                for v in [0, 3, 4] {
                    if extra_ids.len() == n_extra {
                        break 'fill;
                    }
                    extra_ids.push((j, v));
                }
            }
            let extras: Vec<Projection> = extra_ids.iter().map(|&(j, v)| views[j].projections[v].clone()).collect();
            let p = &views[i].projections;
            let out = clcc_loss(&p[0], &p[1], &p[2], &p[4], &p[3], &extras, &self.cfg.nce)?;
            stats.contrastive_loss += out.loss * inv_b;
            let axpy = |acc: &mut Vec<f64>, g: &[f64]| {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += scale * v;
                }
            };
            axpy(&mut d_proj[i][0], &out.d_anchor);
            axpy(&mut d_proj[i][1], &out.d_xa_pos);
            axpy(&mut d_proj[i][2], &out.d_ya_pos);
            axpy(&mut d_proj[i][3], &out.d_yc_neg);
            axpy(&mut d_proj[i][4], &out.d_xc_neg);
            for (k, &(j, v)) in extra_ids.iter().enumerate() {
                axpy(&mut d_proj[j][v], &out.d_extra[k]);
            }
        }
        for (i, item) in views.iter().enumerate() {
            for (v, cache) in item.caches.iter().enumerate() {
                let d: Vec<f32> = d_proj[i][v].iter().map(|g| *g as f32).collect();
                let head = HeadGrads { d_estimate: None, d_projection: Some(d) };
                backward_into(&self.params, cache, &head, &mut self.grads)?;
            }
        }
        Ok(())
    }
}

/// Trains a fresh network. Illuminant loss uses the unperturbed masked
/// anchor; contrastive views only feed the projection head.
pub fn train(
    train_set: &[LabeledImage],
    validation: Option<&[LabeledImage]>,
    cfg: &TrainConfig,
    mode: TrainMode,
) -> Result<(ModelParams<f32>, TrainLog)> {
    let mut trainer = Trainer::new(train_set, cfg.clone(), mode)?;
    let mut rng = stream_rng(cfg.seed, 0x7a41);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainLog { mode, epochs: Vec::new(), steps: 0 };

    for epoch in 0..cfg.total_epochs() {
        let phase = cfg.phase_for_epoch(epoch);
        order.shuffle(&mut rng);
        let mut entry = EpochLog {
            epoch,
            lambda: phase.lambda,
            beta: phase.beta,
            illuminant_loss: 0.0,
            contrastive_loss: 0.0,
            quadruples_built: 0,
            wb_fallbacks: 0,
            validation_error_deg: None,
        };
        for batch in order.chunks(cfg.batch_size) {
            let s = trainer.step(batch, phase, &mut rng).map_err(|e| match e {
                Error::Diverged { step, detail, .. } => Error::Diverged { epoch, step, detail },
                other => other,
            })?;
            let w = batch.len() as f64 / train_set.len() as f64;
            entry.illuminant_loss += s.illuminant_loss * w;
            entry.contrastive_loss += s.contrastive_loss * w;
            entry.quadruples_built += s.quadruples_built;
            entry.wb_fallbacks += s.wb_fallbacks;
        }
        let last = epoch + 1 == cfg.total_epochs();
        if let Some(val) = validation.filter(|v| !v.is_empty()) {
            if cfg.validate_every_epoch || last {
                let mut total = 0.0;
                for s in val {
                    let est = estimate_illuminant(trainer.params(), s)?;
                    total += angular_error_degrees(&est, &s.illuminant);
                }
                entry.validation_error_deg = Some(total / val.len() as f64);
            }
        }
        log.epochs.push(entry);
    }
    log.steps = trainer.steps;
    Ok((trainer.into_params(), log))
}

/// Inference on the masked, center-cropped image with dropout off.
pub fn estimate_illuminant(params: &ModelParams<f32>, sample: &LabeledImage) -> Result<IlluminantRGB> {
    estimate_from_image(params, &sample.image, Some(&sample.checker_region))
}

pub fn estimate_from_image(params: &ModelParams<f32>, img: &RawImage, mask: Option<&PixelRect>) -> Result<IlluminantRGB> {
    let input = prepare_input::<f32>(img, mask).center_crop(params.shape().input_size)?;
    let out = forward(params, &input, None)?;
    IlluminantRGB::new(out.estimate.map(|v| v as f64))
}
