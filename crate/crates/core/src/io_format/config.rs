//! Flat `key = value` training configuration. `#` starts a comment.

use crate::augment::{MixWeightConfig, PerturbConfig};
use crate::error::{Error, Result};
use crate::model::TrainConfig;

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config { line, message: message.into() }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| cfg_err(line, format!("{key}: cannot parse {v:?}")))
}

fn set_range(range: &mut (f64, f64), hi: bool, value: f64) {
    if hi {
        range.1 = value;
    } else {
        range.0 = value;
    }
}

/// Applies `text` on top of `base`. Unknown keys and duplicate keys are errors.
pub fn parse_config(text: &str, base: TrainConfig) -> Result<TrainConfig> {
    let mut cfg = base;
    let mut seen = std::collections::HashSet::new();
    let mut epochs = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| cfg_err(line, format!("expected key = value, found {content:?}")))?;
        let (key, v) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(cfg_err(line, format!("duplicate key {key}")));
        }
        let f = |v: &str| num::<f64>(line, key, v);
        match key {
            "learning_rate" => cfg.adam.learning_rate = f(v)?,
            "beta1" => cfg.adam.beta1 = f(v)?,
            "beta2" => cfg.adam.beta2 = f(v)?,
            "epsilon" => cfg.adam.epsilon = f(v)?,
            "batch_size" => cfg.batch_size = num(line, key, v)?,
            "dropout" => cfg.dropout = f(v)?,
            "weight_decay" => cfg.weight_decay = f(v)?,
            "epochs" => epochs = Some(num::<usize>(line, key, v)?),
            "phase1_epochs" => cfg.phases[0].epochs = num(line, key, v)?,
            "phase2_epochs" => cfg.phases[1].epochs = num(line, key, v)?,
            "phase1_lambda" => cfg.phases[0].lambda = f(v)?,
            "phase1_beta" => cfg.phases[0].beta = f(v)?,
            "phase2_lambda" => cfg.phases[1].lambda = f(v)?,
            "phase2_beta" => cfg.phases[1].beta = f(v)?,
            "temperature" => cfg.nce.temperature = f(v)?,
            "n_negatives" => cfg.nce.n_negatives = num(line, key, v)?,
            "seed" => cfg.seed = num(line, key, v)?,
            "input_size" => cfg.shape.input_size = num(line, key, v)?,
            "conv_channels" => {
                cfg.shape.conv_channels = v
                    .split(',')
                    .map(|c| num::<usize>(line, key, c.trim()))
                    .collect::<Result<Vec<_>>>()?
            }
            "proj_hidden" => cfg.shape.proj_hidden = num(line, key, v)?,
            "proj_dim" => cfg.shape.proj_dim = num(line, key, v)?,
            "gain_min" | "gain_max" => set_range(&mut cfg.perturb.intensity_gain_range, key.ends_with("max"), f(v)?),
            "gauss_noise_min" | "gauss_noise_max" => {
                set_range(&mut cfg.perturb.gaussian_noise_std_range, key.ends_with("max"), f(v)?)
            }
            "shot_noise_min" | "shot_noise_max" => {
                set_range(&mut cfg.perturb.shot_noise_std_range, key.ends_with("max"), f(v)?)
            }
            "mix_neg_min" | "mix_neg_max" => set_range(&mut cfg.mix.negative_range, key.ends_with("max"), f(v)?),
            "mix_pos_min" | "mix_pos_max" => set_range(&mut cfg.mix.positive_range, key.ends_with("max"), f(v)?),
            "validate_every_epoch" => cfg.validate_every_epoch = num(line, key, v)?,
            other => return Err(cfg_err(line, format!("unknown key {other}"))),
        }
    }
    if let Some(e) = epochs {
        if seen.contains("phase1_epochs") || seen.contains("phase2_epochs") {
            return Err(cfg_err(0, "use either epochs or phase1_epochs/phase2_epochs"));
        }
        cfg = cfg.with_epochs(e);
    }
    cfg.validate().map_err(|e| cfg_err(0, e.to_string()))?;
    Ok(cfg)
}

/// Serializes every key; `parse_config(&config_to_text(c), _)` returns `c`.
pub fn config_to_text(cfg: &TrainConfig) -> String {
    let PerturbConfig { intensity_gain_range: g, gaussian_noise_std_range: n, shot_noise_std_range: s } = cfg.perturb;
    let MixWeightConfig { negative_range: mn, positive_range: mp } = cfg.mix;
    let channels: Vec<String> = cfg.shape.conv_channels.iter().map(usize::to_string).collect();
    let entries: Vec<(&str, String)> = vec![
        ("learning_rate", cfg.adam.learning_rate.to_string()),
        ("beta1", cfg.adam.beta1.to_string()),
        ("beta2", cfg.adam.beta2.to_string()),
        ("epsilon", cfg.adam.epsilon.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("dropout", cfg.dropout.to_string()),
        ("weight_decay", cfg.weight_decay.to_string()),
        ("phase1_epochs", cfg.phases[0].epochs.to_string()),
        ("phase1_lambda", cfg.phases[0].lambda.to_string()),
        ("phase1_beta", cfg.phases[0].beta.to_string()),
        ("phase2_epochs", cfg.phases[1].epochs.to_string()),
        ("phase2_lambda", cfg.phases[1].lambda.to_string()),
        ("phase2_beta", cfg.phases[1].beta.to_string()),
        ("temperature", cfg.nce.temperature.to_string()),
        ("n_negatives", cfg.nce.n_negatives.to_string()),
        ("seed", cfg.seed.to_string()),
        ("input_size", cfg.shape.input_size.to_string()),
        ("conv_channels", channels.join(",")),
        ("proj_hidden", cfg.shape.proj_hidden.to_string()),
        ("proj_dim", cfg.shape.proj_dim.to_string()),
        ("gain_min", g.0.to_string()),
        ("gain_max", g.1.to_string()),
        ("gauss_noise_min", n.0.to_string()),
        ("gauss_noise_max", n.1.to_string()),
        ("shot_noise_min", s.0.to_string()),
        ("shot_noise_max", s.1.to_string()),
        ("mix_neg_min", mn.0.to_string()),
        ("mix_neg_max", mn.1.to_string()),
        ("mix_pos_min", mp.0.to_string()),
        ("mix_pos_max", mp.1.to_string()),
        ("validate_every_epoch", cfg.validate_every_epoch.to_string()),
    ];
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = TrainConfig::default();
        assert_eq!(parse_config(&config_to_text(&cfg), TrainConfig::default()).unwrap(), cfg);
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# desk run\nlearning_rate = 0.001\nepochs = 7  # odd split\nconv_channels = 8, 16\n\nproj_dim=32\n";
        let cfg = parse_config(text, TrainConfig::default()).unwrap();
        assert_eq!(cfg.adam.learning_rate, 0.001);
        assert_eq!((cfg.phases[0].epochs, cfg.phases[1].epochs), (3, 4));
        assert_eq!(cfg.shape.conv_channels, vec![8, 16]);
        assert_eq!(cfg.shape.proj_dim, 32);
        let odd = TrainConfig { seed: 99, ..cfg.clone() };
        assert_eq!(parse_config(&config_to_text(&odd), TrainConfig::default()).unwrap(), odd);
    }

    #[test]
    fn errors_report_lines() {
        let line = |t: &str| match parse_config(t, TrainConfig::default()) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line("seed = 1\nbogus = 2\n"), 2);
        assert_eq!(line("seed = 1\n\nbatch_size = x\n"), 3);
        assert_eq!(line("seed = 1\nseed = 2\n"), 2);
        assert_eq!(line("no equals sign\n"), 1);
        assert_eq!(line("dropout = 1.5\n"), 0);
    }
}
