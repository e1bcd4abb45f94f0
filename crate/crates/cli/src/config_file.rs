//! Flat `key = value` configuration files.

use std::path::Path;
use std::str::FromStr;

use fftrelu::SolverConfig;

use crate::CliError;

/// Parses configuration text on top of the defaults. Blank lines and `#`
/// comments are ignored; unknown keys, malformed values and violated
/// invariants are errors naming the key.
pub fn parse_config_str(text: &str) -> Result<SolverConfig, CliError> {
    let mut cfg = SolverConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)))?;
        set_key(&mut cfg, key.trim(), value.trim())?;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn parse_config(path: &Path) -> Result<SolverConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse `{value}`")))
}

/// Assigns one configuration key from its textual value.
pub fn set_key(cfg: &mut SolverConfig, key: &str, value: &str) -> Result<(), CliError> {
    match key {
        "lambda" => cfg.lambda = parse(key, value)?,
        "mu" => cfg.mu = parse(key, value)?,
        "alpha" => cfg.alpha = parse(key, value)?,
        "gamma_init" => cfg.gamma_init = Some(parse(key, value)?),
        "beta_init" => cfg.beta_init = Some(parse(key, value)?),
        "penalty_growth" => cfg.penalty_growth = parse(key, value)?,
        "penalty_max" => cfg.penalty_max = parse(key, value)?,
        "max_iter" => cfg.max_iter = parse(key, value)?,
        "kernel_size" => cfg.kernel_size = parse(key, value)?,
        "min_kernel" => cfg.min_kernel = parse(key, value)?,
        "scale_ratio" => cfg.scale_ratio = parse(key, value)?,
        "adam_lr" => cfg.adam_lr = parse(key, value)?,
        "adam_steps" => cfg.adam_steps = parse(key, value)?,
        "l0_eps" => cfg.l0_eps = parse(key, value)?,
        "cc_threshold" => cfg.cc_threshold = parse(key, value)?,
        "bilateral_sigma_s" => cfg.bilateral_sigma_s = parse(key, value)?,
        "bilateral_sigma_r" => cfg.bilateral_sigma_r = parse(key, value)?,
        "nb_weight" => cfg.nb_weight = parse(key, value)?,
        "nb_exponent" => cfg.nb_exponent = parse(key, value)?,
        "nb_mu" => cfg.nb_mu = parse(key, value)?,
        _ => return Err(CliError::Config(format!("unknown configuration key `{key}`"))),
    }
    Ok(())
}
