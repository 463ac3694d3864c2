//! InfoNCE over unit-norm projections and the four-term CLCC objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the unit hypersphere produced by the projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection(Vec<f64>);

impl Projection {
    /// Scales `v` to unit length.
    pub fn normalize(v: Vec<f64>) -> Result<Self> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::domain("cannot normalize a zero or non-finite projection"));
        }
        Ok(Self(v.into_iter().map(|x| x / n).collect()))
    }

    /// Wraps a vector that is already unit length (within 1e-6).
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((n - 1.0).abs() <= 1e-6) {
            return Err(Error::domain(format!("projection norm {n} is not 1")));
        }
        Ok(Self(v))
    }

    /// Wraps a vector without checking its norm. Used by gradient checks,
    /// which perturb projections off the sphere.
    pub fn raw(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NceConfig {
    pub temperature: f64,
    pub n_negatives: usize,
}

impl Default for NceConfig {
    fn default() -> Self {
        Self {
            temperature: 0.87,
            n_negatives: 12,
        }
    }
}

impl NceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || self.n_negatives == 0 {
            return Err(Error::domain("temperature must be positive and N at least 1"));
        }
        Ok(())
    }
}

/// Dot product of two unit vectors.
pub fn cosine_similarity(a: &Projection, b: &Projection) -> f64 {
    a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NceOutput {
    pub loss: f64,
    pub d_pos: f64,
    pub d_negs: Vec<f64>,
}

/// `−log[exp(s⁺/τ) / (exp(s⁺/τ) + Σ exp(s⁻/τ))]` with its gradient with
/// respect to every similarity score.
pub fn info_nce(s_pos: f64, s_negs: &[f64], temperature: f64) -> Result<NceOutput> {
    if s_negs.is_empty() {
        return Err(Error::domain("InfoNCE needs at least one negative"));
    }
    if !(temperature > 0.0) {
        return Err(Error::domain("temperature must be positive"));
    }
    let logits: Vec<f64> = std::iter::once(s_pos)
        .chain(s_negs.iter().copied())
        .map(|s| s / temperature)
        .collect();
    let (arg_max, max) = logits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, a)| if a > best.1 { (i, a) } else { best });
    let exps: Vec<f64> = logits.iter().map(|a| (a - max).exp()).collect();
    // exps[arg_max] is exactly 1; ln_1p keeps tiny losses representable.
    let rest: f64 = exps
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != arg_max)
        .map(|(_, e)| e)
        .sum();
    let total = 1.0 + rest;
    let loss = (max - logits[0]) + rest.ln_1p();
    let d_pos = (exps[0] / total - 1.0) / temperature;
    let d_negs = exps[1..].iter().map(|e| e / total / temperature).collect();
    Ok(NceOutput { loss, d_pos, d_negs })
}

/// Per-view gradients of [`clcc_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClccOutput {
    pub loss: f64,
    /// The four InfoNCE terms in order (XA⁺,YC⁻), (XA⁺,XC⁻), (YA⁺,YC⁻), (YA⁺,XC⁻).
    pub terms: [f64; 4],
    pub d_anchor: Vec<f64>,
    pub d_xa_pos: Vec<f64>,
    pub d_ya_pos: Vec<f64>,
    pub d_xc_neg: Vec<f64>,
    pub d_yc_neg: Vec<f64>,
    pub d_extra: Vec<Vec<f64>>,
}

/// Sum of the four InfoNCE terms pairing each positive with each designated
/// negative. Each term's negative set is the designated negative followed by
/// the first `N − 1` entries of `extra_negs`.
pub fn clcc_loss(
    z_xa: &Projection,
    z_xa_pos: &Projection,
    z_ya_pos: &Projection,
    z_xc_neg: &Projection,
    z_yc_neg: &Projection,
    extra_negs: &[Projection],
    cfg: &NceConfig,
) -> Result<ClccOutput> {
    cfg.validate()?;
    let d = z_xa.dim();
    if [z_xa_pos, z_ya_pos, z_xc_neg, z_yc_neg]
        .iter()
        .map(|z| z.dim())
        .chain(extra_negs.iter().map(Projection::dim))
        .any(|k| k != d)
    {
        return Err(Error::domain("projection dimensions differ"));
    }
    let extras = &extra_negs[..extra_negs.len().min(cfg.n_negatives - 1)];
    let s_extra: Vec<f64> = extras.iter().map(|z| cosine_similarity(z_xa, z)).collect();

    let mut out = ClccOutput {
        loss: 0.0,
        terms: [0.0; 4],
        d_anchor: vec![0.0; d],
        d_xa_pos: vec![0.0; d],
        d_ya_pos: vec![0.0; d],
        d_xc_neg: vec![0.0; d],
        d_yc_neg: vec![0.0; d],
        d_extra: vec![vec![0.0; d]; extra_negs.len()],
    };

    let axpy = |acc: &mut [f64], a: f64, x: &[f64]| {
        for (o, v) in acc.iter_mut().zip(x) {
            *o += a * v;
        }
    };

    for (t, (pos_is_x, neg_is_x)) in [(true, false), (true, true), (false, false), (false, true)]
        .into_iter()
        .enumerate()
    {
        let pos = if pos_is_x { z_xa_pos } else { z_ya_pos };
        let neg = if neg_is_x { z_xc_neg } else { z_yc_neg };
        let mut s_negs = Vec::with_capacity(1 + s_extra.len());
        s_negs.push(cosine_similarity(z_xa, neg));
        s_negs.extend_from_slice(&s_extra);
        let nce = info_nce(cosine_similarity(z_xa, pos), &s_negs, cfg.temperature)?;

        out.loss += nce.loss;
        out.terms[t] = nce.loss;
        axpy(&mut out.d_anchor, nce.d_pos, pos.as_slice());
        axpy(
            if pos_is_x { &mut out.d_xa_pos } else { &mut out.d_ya_pos },
            nce.d_pos,
            z_xa.as_slice(),
        );
        axpy(&mut out.d_anchor, nce.d_negs[0], neg.as_slice());
        axpy(
            if neg_is_x { &mut out.d_xc_neg } else { &mut out.d_yc_neg },
            nce.d_negs[0],
            z_xa.as_slice(),
        );
        for (k, z) in extras.iter().enumerate() {
            let g = nce.d_negs[k + 1];
            axpy(&mut out.d_anchor, g, z.as_slice());
            axpy(&mut out.d_extra[k], g, z_xa.as_slice());
        }
    }
    Ok(out)
}
