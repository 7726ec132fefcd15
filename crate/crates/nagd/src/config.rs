//! Plain `key=value` training configuration. Lines are `key = value`,
//! `#` starts a comment, blank lines are skipped, unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::str::FromStr;

use mtree_core::corpus::SynthConfig;
use num::BigRational;

use crate::error::NagdError;
use crate::model::HyperParams;

/// Parse `key=value` text into a map; later duplicates win.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, NagdError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| NagdError::Config(format!("line {}: expected key=value", lineno + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Everything a toy training run needs: model size, optimization, and the
/// synthetic corpus shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub d_k: usize,
    pub heads: usize,
    pub focal_gamma: f64,
    pub depth_cap: usize,
    pub lr: f64,
    pub type_loss_weight: f64,
    pub cross_goal: bool,
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub depth: usize,
    pub branch_dist: Vec<(usize, f64)>,
    pub leaf_min: i64,
    pub leaf_max: i64,
    pub constants: Vec<BigRational>,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            d_k: 32,
            heads: 2,
            focal_gamma: 2.0,
            depth_cap: 6,
            lr: 1e-3,
            type_loss_weight: 1.0,
            cross_goal: true,
            seed: 42,
            steps: 600,
            batch_size: 16,
            train_samples: 200,
            eval_samples: 2000,
            depth: 2,
            branch_dist: vec![(2, 0.4), (3, 0.4), (4, 0.2)],
            leaf_min: 2,
            leaf_max: 12,
            constants: vec![],
        }
    }
}

impl ToyConfig {
    pub fn parse(text: &str) -> Result<Self, NagdError> {
        let map = parse_config(text)?;
        ToyConfig::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, NagdError> {
        let mut cfg = ToyConfig::default();
        for (key, value) in map {
            match key.as_str() {
                "d_k" => cfg.d_k = parse_num(key, value)?,
                "heads" => cfg.heads = parse_num(key, value)?,
                "focal_gamma" => cfg.focal_gamma = parse_num(key, value)?,
                "depth_cap" => cfg.depth_cap = parse_num(key, value)?,
                "lr" => cfg.lr = parse_num(key, value)?,
                "type_loss_weight" => cfg.type_loss_weight = parse_num(key, value)?,
                "cross_goal" => cfg.cross_goal = parse_num(key, value)?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "steps" => cfg.steps = parse_num(key, value)?,
                "batch_size" => cfg.batch_size = parse_num(key, value)?,
                "train_samples" => cfg.train_samples = parse_num(key, value)?,
                "eval_samples" => cfg.eval_samples = parse_num(key, value)?,
                "depth" => cfg.depth = parse_num(key, value)?,
                "leaf_min" => cfg.leaf_min = parse_num(key, value)?,
                "leaf_max" => cfg.leaf_max = parse_num(key, value)?,
                "branch_dist" => cfg.branch_dist = parse_branch_dist(value)?,
                "constants" => cfg.constants = parse_constants(value)?,
                other => {
                    return Err(NagdError::Config(format!("unknown key '{other}'")));
                }
            }
        }
        Ok(cfg)
    }

    pub fn hyper(&self) -> HyperParams {
        HyperParams {
            d_k: self.d_k,
            heads: self.heads,
            focal_gamma: self.focal_gamma,
            depth_cap: self.depth_cap,
            lr: self.lr,
            type_loss_weight: self.type_loss_weight,
            cross_goal: self.cross_goal,
        }
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            branch_dist: self.branch_dist.clone(),
            depth: self.depth,
            leaf_min: self.leaf_min,
            leaf_max: self.leaf_max,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, NagdError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| NagdError::Config(format!("{key}={value}: {e}")))
}

/// `2:0.4,3:0.4,4:0.2`
pub fn parse_branch_dist(value: &str) -> Result<Vec<(usize, f64)>, NagdError> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let (k, w) = part
            .split_once(':')
            .ok_or_else(|| NagdError::Config(format!("branch_dist '{part}': expected k:weight")))?;
        let k: usize = parse_num("branch_dist", k.trim())?;
        let w: f64 = parse_num("branch_dist", w.trim())?;
        out.push((k, w));
    }
    if out.is_empty() {
        return Err(NagdError::Config("branch_dist is empty".to_string()));
    }
    Ok(out)
}

/// Comma-separated rationals, e.g. `1,100,1/4`. Empty string = none.
pub fn parse_constants(value: &str) -> Result<Vec<BigRational>, NagdError> {
    if value.trim().is_empty() {
        return Ok(vec![]);
    }
    value
        .split(',')
        .map(|s| {
            BigRational::from_str(s.trim())
                .map_err(|e| NagdError::Config(format!("constant '{s}': {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::BigInt;

    #[test]
    fn parses_full_config() {
        let text = "\
# toy run
d_k = 16
heads = 2
steps = 50
batch_size = 8
cross_goal = false
branch_dist = 2:0.5, 3:0.5
constants = 1, 100
seed = 7
";
        let cfg = ToyConfig::parse(text).unwrap();
        assert_eq!(cfg.d_k, 16);
        assert_eq!(cfg.steps, 50);
        assert!(!cfg.cross_goal);
        assert_eq!(cfg.branch_dist, vec![(2, 0.5), (3, 0.5)]);
        assert_eq!(
            cfg.constants,
            vec![
                BigRational::from_integer(BigInt::from(1)),
                BigRational::from_integer(BigInt::from(100))
            ]
        );
        assert_eq!(cfg.seed, 7);
        // untouched keys keep defaults
        assert_eq!(cfg.eval_samples, 2000);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        assert!(matches!(
            ToyConfig::parse("d_q = 3"),
            Err(NagdError::Config(_))
        ));
        assert!(matches!(parse_config("no equals sign"), Err(NagdError::Config(_))));
        assert!(matches!(
            ToyConfig::parse("steps = many"),
            Err(NagdError::Config(_))
        ));
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let cfg = ToyConfig::parse("\n# nothing\n\nsteps = 3 # trailing\n").unwrap();
        assert_eq!(cfg.steps, 3);
    }
}
