//! Configuration loading and validation: world files, loss-spec fragments,
//! optimizer fragments, experiment configs, and policy snapshots. All files
//! are JSON; every validation failure names the offending field.

use crate::error::{Error, Result};
use crate::losses::{
    Divergence, LinkFn, LossKind, LossSpec, Penalty, PenaltyTarget, RewardSpec, ShapeFn,
};
use crate::optim::{BatchMode, InitMode, OptimConfig};
use crate::policy::{PolicyMetric, TabularPolicy};
use crate::world::{DiscreteWorld, PairLabel};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------------
// world files

#[derive(Debug, Deserialize)]
struct PromptEntry {
    id: usize,
    mass: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    prompts: Vec<PromptEntry>,
    responses: BTreeMap<String, Vec<usize>>,
    pi_star: BTreeMap<String, Vec<f64>>,
    pi_ref: BTreeMap<String, Vec<f64>>,
}

fn prompt_map<T: Clone>(
    map: &BTreeMap<String, Vec<T>>,
    n_prompts: usize,
    field: &str,
) -> Result<Vec<Vec<T>>> {
    let mut out = Vec::with_capacity(n_prompts);
    for x in 0..n_prompts {
        let key = x.to_string();
        let row = map.get(&key).ok_or_else(|| {
            Error::Config(format!("{field}: missing entry for prompt {x}"))
        })?;
        out.push(row.clone());
    }
    if map.len() != n_prompts {
        let extra: Vec<&String> = map
            .keys()
            .filter(|k| k.parse::<usize>().map(|v| v >= n_prompts).unwrap_or(true))
            .collect();
        return Err(Error::Config(format!(
            "{field}: entries for unknown prompts {extra:?}"
        )));
    }
    Ok(out)
}

/// Parses and validates a world definition.
pub fn world_from_json(text: &str) -> Result<DiscreteWorld> {
    let file: WorldFile = serde_json::from_str(text)?;
    let n = file.prompts.len();
    let mut mass = vec![f64::NAN; n];
    for (i, p) in file.prompts.iter().enumerate() {
        if p.id >= n {
            return Err(Error::Config(format!(
                "prompts[{i}].id: ids must be dense integers below {n}, got {}",
                p.id
            )));
        }
        if !mass[p.id].is_nan() {
            return Err(Error::Config(format!("prompts: duplicate id {}", p.id)));
        }
        mass[p.id] = p.mass;
    }
    let responses = prompt_map(&file.responses, n, "responses")?;
    for (x, row) in responses.iter().enumerate() {
        let expect: Vec<usize> = (0..row.len()).collect();
        if *row != expect {
            return Err(Error::Config(format!(
                "responses[{x}]: response ids must be the dense list {expect:?}, got {row:?}"
            )));
        }
    }
    let pi_star = prompt_map(&file.pi_star, n, "pi_star")?;
    let pi_ref = prompt_map(&file.pi_ref, n, "pi_ref")?;
    for (x, row) in pi_star.iter().enumerate() {
        if row.len() != responses[x].len() {
            return Err(Error::Config(format!(
                "pi_star[{x}]: {} probabilities for {} responses",
                row.len(),
                responses[x].len()
            )));
        }
    }
    for (x, row) in pi_ref.iter().enumerate() {
        if row.len() != responses[x].len() {
            return Err(Error::Config(format!(
                "pi_ref[{x}]: {} probabilities for {} responses",
                row.len(),
                responses[x].len()
            )));
        }
    }
    // invariant violations in a world file are configuration errors
    DiscreteWorld::new(mass, pi_star, pi_ref).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_world(path: &Path) -> Result<DiscreteWorld> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("world file {}: {e}", path.display()))
    })?;
    world_from_json(&text)
}

// ---------------------------------------------------------------------------
// loss-spec fragments

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpecFile {
    pub kind: String,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub divergence: Option<String>,
    #[serde(default)]
    pub psi: Option<String>,
    #[serde(default)]
    pub mu: Option<String>,
    #[serde(default)]
    pub reward: Option<String>,
    #[serde(default)]
    pub reward_table: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default)]
    pub penalty: Option<PenaltyFile>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyFile {
    pub alpha: f64,
    #[serde(default)]
    pub target: Option<String>,
}

fn parse_divergence(name: &str) -> Result<Divergence> {
    match name {
        "reverse_kl" => Ok(Divergence::ReverseKl),
        "jensen_shannon" | "js" => Ok(Divergence::JensenShannon),
        other => Err(Error::Config(format!(
            "divergence: expected reverse_kl|jensen_shannon, got `{other}`"
        ))),
    }
}

fn parse_psi(name: &str) -> Result<ShapeFn> {
    match name {
        "logistic" => Ok(ShapeFn::LogisticNll),
        "square" => Ok(ShapeFn::SquaredTarget),
        "hinge" => Ok(ShapeFn::Hinge),
        other => Err(Error::Config(format!(
            "psi: expected logistic|square|hinge, got `{other}`"
        ))),
    }
}

fn parse_mu(name: &str) -> Result<LinkFn> {
    match name {
        "log" => Ok(LinkFn::Log),
        "reverse_kl" => Ok(LinkFn::ReverseKl),
        "jensen_shannon" | "js" => Ok(LinkFn::JensenShannon),
        other => Err(Error::Config(format!(
            "mu: expected log|reverse_kl|jensen_shannon, got `{other}`"
        ))),
    }
}

/// Builds a typed loss spec from a config fragment. `lambda` defaults to 1
/// when absent (experiment runners override it from the grid).
pub fn parse_loss_spec(file: &LossSpecFile, n_prompts: usize) -> Result<LossSpec> {
    let lambda = file.lambda.unwrap_or(1.0);
    let kind = match file.kind.as_str() {
        "dpo" => LossKind::Dpo { lambda },
        "ipo" => LossKind::Ipo { lambda },
        "fdpo" => {
            let name = file.divergence.as_deref().unwrap_or("jensen_shannon");
            LossKind::Fdpo { divergence: parse_divergence(name)?, lambda }
        }
        "qpo" => {
            let psi = parse_psi(file.psi.as_deref().ok_or_else(|| {
                Error::Config("psi: required for qpo losses".into())
            })?)?;
            let mu = parse_mu(file.mu.as_deref().unwrap_or("log"))?;
            LossKind::Qpo { psi, mu, lambda }
        }
        "typo" => LossKind::Typo { lambda },
        "rlhf" => {
            let reward = match file.reward.as_deref().unwrap_or("bt_optimal") {
                "bt_optimal" | "bt" => RewardSpec::BtOptimal,
                "ipo" => RewardSpec::IpoReward,
                "table" => {
                    let table = file.reward_table.as_ref().ok_or_else(|| {
                        Error::Config("reward_table: required when reward = table".into())
                    })?;
                    RewardSpec::Table(prompt_map(table, n_prompts, "reward_table")?)
                }
                other => {
                    return Err(Error::Config(format!(
                        "reward: expected bt_optimal|ipo|table, got `{other}`"
                    )))
                }
            };
            LossKind::Rlhf { reward, lambda }
        }
        other => {
            return Err(Error::Config(format!(
                "kind: expected dpo|ipo|fdpo|qpo|typo|rlhf, got `{other}`"
            )))
        }
    };
    let penalty = match &file.penalty {
        None => None,
        Some(p) => {
            let target = match p.target.as_deref().unwrap_or("probs") {
                "probs" | "probabilities" => PenaltyTarget::Probabilities,
                "logits" => PenaltyTarget::Logits,
                other => {
                    return Err(Error::Config(format!(
                        "penalty.target: expected probs|logits, got `{other}`"
                    )))
                }
            };
            Some(Penalty { alpha: p.alpha, target })
        }
    };
    LossSpec::new(kind, penalty)
}

// ---------------------------------------------------------------------------
// optimizer fragments

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimFile {
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub clip_norm: Option<f64>,
    #[serde(default)]
    pub batch: Option<BatchFile>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub init: Option<String>,
    #[serde(default)]
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BatchFile {
    Named(String),
    Size(usize),
}

fn apply_optim_overlay(config: &mut OptimConfig, file: &OptimFile) -> Result<()> {
    if let Some(lr) = file.lr {
        config.learning_rate = lr;
    }
    if let Some(epochs) = file.epochs {
        config.epochs = epochs;
    }
    if let Some(clip) = file.clip_norm {
        config.clip_norm = clip;
    }
    if let Some(every) = file.record_every {
        config.record_every = every;
    }
    match &file.batch {
        None => {}
        Some(BatchFile::Named(name)) if name == "population" => {
            config.batch = BatchMode::FullPopulation;
        }
        Some(BatchFile::Named(name)) => {
            return Err(Error::Config(format!(
                "optim.batch: expected \"population\" or a minibatch size, got `{name}`"
            )));
        }
        Some(BatchFile::Size(size)) => {
            config.batch = BatchMode::Minibatch {
                size: *size,
                seed: file.seed.unwrap_or(0),
            };
        }
    }
    if let Some(init) = &file.init {
        config.init = match init.as_str() {
            "reference" => InitMode::Reference,
            "zeros" => InitMode::Zeros,
            other => {
                return Err(Error::Config(format!(
                    "optim.init: expected reference|zeros, got `{other}`"
                )))
            }
        };
    }
    Ok(())
}

/// Parses a standalone loss-spec fragment.
pub fn loss_spec_from_json(text: &str, n_prompts: usize) -> Result<LossSpec> {
    let file: LossSpecFile = serde_json::from_str(text)?;
    parse_loss_spec(&file, n_prompts)
}

/// Parses a standalone optimizer fragment, overlaid on the defaults.
pub fn optim_from_json(text: &str) -> Result<OptimConfig> {
    let file: OptimFile = serde_json::from_str(text)?;
    let mut config = OptimConfig::default();
    apply_optim_overlay(&mut config, &file)?;
    config.validate()?;
    Ok(config)
}

// ---------------------------------------------------------------------------
// experiment configs

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfigFile {
    world: serde_json::Value,
    losses: Vec<LossSpecFile>,
    #[serde(default)]
    lambda_grid: Option<Vec<f64>>,
    #[serde(default)]
    alpha_grid: Option<Vec<f64>>,
    #[serde(default)]
    optim: BTreeMap<String, OptimFile>,
    #[serde(default)]
    metrics: Option<Vec<String>>,
    #[serde(default)]
    output_dir: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    alt_pi_ref: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default)]
    labels: Option<Vec<LabelFile>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelFile {
    prompt: usize,
    winner: usize,
    loser: usize,
}

/// Fully validated experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub world: DiscreteWorld,
    pub losses: Vec<LossSpec>,
    pub lambda_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub metrics: Vec<PolicyMetric>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub alt_pi_ref: Option<Vec<Vec<f64>>>,
    pub labels: Option<Vec<PairLabel>>,
    optim: BTreeMap<String, OptimFile>,
}

impl ExperimentConfig {
    /// Optimizer settings for a loss: crate defaults, overlaid by the
    /// config's `default` entry, overlaid by the per-kind entry.
    pub fn optim_for(&self, loss_key: &str) -> Result<OptimConfig> {
        let mut config = OptimConfig::default();
        if let Some(base) = self.optim.get("default") {
            apply_optim_overlay(&mut config, base)?;
        }
        if let Some(overlay) = self.optim.get(loss_key) {
            apply_optim_overlay(&mut config, overlay)?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn parse_metric(name: &str) -> Result<PolicyMetric> {
    match name {
        "tv" | "total_variation" => Ok(PolicyMetric::TotalVariation),
        "forward_kl" => Ok(PolicyMetric::ForwardKL),
        "backward_kl" => Ok(PolicyMetric::BackwardKL),
        "l2" => Ok(PolicyMetric::L2),
        other => Err(Error::Config(format!(
            "metrics: expected tv|forward_kl|backward_kl|l2, got `{other}`"
        ))),
    }
}

/// Parses an experiment config; `base_dir` anchors relative world paths.
pub fn config_from_json(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let file: ExperimentConfigFile = serde_json::from_str(text)?;
    let world = match &file.world {
        serde_json::Value::String(path) => {
            let p = PathBuf::from(path);
            let resolved = if p.is_absolute() { p } else { base_dir.join(p) };
            load_world(&resolved)?
        }
        inline @ serde_json::Value::Object(_) => world_from_json(&inline.to_string())?,
        other => {
            return Err(Error::Config(format!(
                "world: expected a file path or an inline world object, got {other}"
            )))
        }
    };
    if file.losses.is_empty() {
        return Err(Error::Config("losses: non-empty list required".into()));
    }
    let losses: Vec<LossSpec> = file
        .losses
        .iter()
        .map(|l| parse_loss_spec(l, world.n_prompts()))
        .collect::<Result<_>>()?;
    let lambda_grid = match file.lambda_grid {
        Some(g) if !g.is_empty() => {
            for (i, &v) in g.iter().enumerate() {
                if v <= 0.0 || !v.is_finite() {
                    return Err(Error::Config(format!(
                        "lambda_grid[{i}]: positive finite value required, got {v}"
                    )));
                }
            }
            g
        }
        _ => return Err(Error::Config("lambda_grid: non-empty list required".into())),
    };
    let alpha_grid = match file.alpha_grid {
        None => vec![0.0],
        Some(g) if !g.is_empty() => {
            for (i, &v) in g.iter().enumerate() {
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::Config(format!(
                        "alpha_grid[{i}]: nonnegative finite value required, got {v}"
                    )));
                }
            }
            g
        }
        Some(_) => return Err(Error::Config("alpha_grid: non-empty list required".into())),
    };
    let metrics = match &file.metrics {
        None => vec![
            PolicyMetric::TotalVariation,
            PolicyMetric::ForwardKL,
            PolicyMetric::BackwardKL,
            PolicyMetric::L2,
        ],
        Some(names) => {
            if names.is_empty() {
                return Err(Error::Config("metrics: non-empty list required".into()));
            }
            names.iter().map(|n| parse_metric(n)).collect::<Result<_>>()?
        }
    };
    let alt_pi_ref = match &file.alt_pi_ref {
        None => None,
        Some(map) => {
            let rows = prompt_map(map, world.n_prompts(), "alt_pi_ref")?;
            // validated by constructing a world around it
            world
                .with_pi_ref(rows.clone())
                .map_err(|e| Error::Config(format!("alt_pi_ref: {e}")))?;
            Some(rows)
        }
    };
    let labels = file.labels.as_ref().map(|ls| {
        ls.iter()
            .map(|l| PairLabel { prompt: l.prompt, winner: l.winner, loser: l.loser })
            .collect()
    });
    Ok(ExperimentConfig {
        world,
        losses,
        lambda_grid,
        alpha_grid,
        metrics,
        output_dir: PathBuf::from(file.output_dir.unwrap_or_else(|| "out".into())),
        seed: file.seed.unwrap_or(0),
        alt_pi_ref,
        labels,
        optim: file.optim,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("config file {}: {e}", path.display()))
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    config_from_json(&text, base)
}

// ---------------------------------------------------------------------------
// policy snapshots

/// Parses a policy snapshot (map of prompt id to logit vector) and checks
/// its shape against the world.
pub fn policy_from_json(text: &str, world: &DiscreteWorld) -> Result<TabularPolicy> {
    let map: BTreeMap<String, Vec<f64>> = serde_json::from_str(text)?;
    let logits = prompt_map(&map, world.n_prompts(), "policy")?;
    for (x, row) in logits.iter().enumerate() {
        if row.len() != world.n_responses(x) {
            return Err(Error::ShapeMismatch(format!(
                "policy[{x}]: {} logits for {} responses",
                row.len(),
                world.n_responses(x)
            )));
        }
    }
    let policy = TabularPolicy::new(logits)?;
    Ok(policy)
}

pub fn policy_to_json(policy: &TabularPolicy) -> String {
    let map: BTreeMap<String, &Vec<f64>> = policy
        .logits()
        .iter()
        .enumerate()
        .map(|(x, row)| (x.to_string(), row))
        .collect();
    serde_json::to_string_pretty(&map).expect("serializable")
}

// ---------------------------------------------------------------------------
// loss evaluation configs (eval-loss subcommand)

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalConfigFile {
    world: serde_json::Value,
    loss: LossSpecFile,
    #[serde(default)]
    data: Option<serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub world: DiscreteWorld,
    pub loss: LossSpec,
    pub data: crate::world::DataMode,
}

pub fn load_eval_config(path: &Path) -> Result<EvalConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("config file {}: {e}", path.display()))
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let file: EvalConfigFile = serde_json::from_str(&text)?;
    let world = match &file.world {
        serde_json::Value::String(p) => {
            let pb = PathBuf::from(p);
            let resolved = if pb.is_absolute() { pb } else { base.join(pb) };
            load_world(&resolved)?
        }
        inline @ serde_json::Value::Object(_) => world_from_json(&inline.to_string())?,
        other => {
            return Err(Error::Config(format!(
                "world: expected a file path or an inline world object, got {other}"
            )))
        }
    };
    let loss = parse_loss_spec(&file.loss, world.n_prompts())?;
    let data = match &file.data {
        None => crate::world::DataMode::Population,
        Some(serde_json::Value::String(s)) if s == "population" => {
            crate::world::DataMode::Population
        }
        Some(serde_json::Value::Object(map)) => {
            let sampled = map.get("sampled").ok_or_else(|| {
                Error::Config("data: expected \"population\" or {\"sampled\": ...}".into())
            })?;
            #[derive(Deserialize)]
            struct SampledFile {
                seed: u64,
                count: u64,
            }
            let s: SampledFile = serde_json::from_value(sampled.clone())?;
            crate::world::DataMode::Sampled { seed: s.seed, count: s.count }
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "data: expected \"population\" or {{\"sampled\": ...}}, got {other}"
            )))
        }
    };
    Ok(EvalConfig { world, loss, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORLD_JSON: &str = r#"{
        "prompts": [{"id": 0, "mass": 1.0}],
        "responses": {"0": [0, 1, 2]},
        "pi_star": {"0": [0.6, 0.3, 0.1]},
        "pi_ref": {"0": [0.4, 0.4, 0.2]}
    }"#;

    #[test]
    fn world_round_trip() {
        let w = world_from_json(WORLD_JSON).unwrap();
        assert_eq!(w, crate::presets::interpolation_world());
    }

    #[test]
    fn world_validation_names_prompt() {
        let bad = WORLD_JSON.replace("0.1", "0.0999");
        match world_from_json(&bad) {
            Err(Error::Config(msg)) => assert!(msg.contains("pi_star[0]")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn world_rejects_sparse_ids() {
        let bad = WORLD_JSON.replace("\"id\": 0", "\"id\": 1");
        assert!(matches!(world_from_json(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn loss_fragment_parses_all_kinds() {
        let frags = [
            r#"{"kind": "dpo", "lambda": 0.5}"#,
            r#"{"kind": "ipo"}"#,
            r#"{"kind": "fdpo", "divergence": "jensen_shannon"}"#,
            r#"{"kind": "qpo", "psi": "hinge", "mu": "log"}"#,
            r#"{"kind": "typo", "penalty": {"alpha": 0.1, "target": "logits"}}"#,
            r#"{"kind": "rlhf", "reward": "ipo", "lambda": 2.0}"#,
        ];
        for f in frags {
            let file: LossSpecFile = serde_json::from_str(f).unwrap();
            parse_loss_spec(&file, 1).unwrap();
        }
        let bad: LossSpecFile =
            serde_json::from_str(r#"{"kind": "dpo", "lambda": -1.0}"#).unwrap();
        assert!(parse_loss_spec(&bad, 1).is_err());
        let unknown: LossSpecFile = serde_json::from_str(r#"{"kind": "ppo"}"#).unwrap();
        assert!(parse_loss_spec(&unknown, 1).is_err());
    }

    #[test]
    fn config_requires_lambda_grid() {
        let text = format!(
            r#"{{"world": {WORLD_JSON}, "losses": [{{"kind": "dpo"}}]}}"#
        );
        match config_from_json(&text, Path::new(".")) {
            Err(Error::Config(msg)) => {
                assert_eq!(msg, "lambda_grid: non-empty list required")
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn config_full_parse_and_optim_overlay() {
        let text = format!(
            r#"{{
                "world": {WORLD_JSON},
                "losses": [{{"kind": "dpo"}}, {{"kind": "typo"}}],
                "lambda_grid": [1e-5, 1.0, 1e3],
                "optim": {{
                    "default": {{"lr": 1e-3, "epochs": 500, "record_every": 100}},
                    "typo": {{"lr": 5e-4}}
                }},
                "metrics": ["tv", "l2"],
                "seed": 9
            }}"#
        );
        let c = config_from_json(&text, Path::new(".")).unwrap();
        assert_eq!(c.lambda_grid.len(), 3);
        assert_eq!(c.seed, 9);
        assert_eq!(c.metrics, vec![PolicyMetric::TotalVariation, PolicyMetric::L2]);
        let dpo = c.optim_for("dpo").unwrap();
        assert_eq!(dpo.learning_rate, 1e-3);
        assert_eq!(dpo.epochs, 500);
        let typo = c.optim_for("typo").unwrap();
        assert_eq!(typo.learning_rate, 5e-4);
        assert_eq!(typo.epochs, 500);
    }

    #[test]
    fn optim_batch_variants() {
        let text = format!(
            r#"{{
                "world": {WORLD_JSON},
                "losses": [{{"kind": "dpo"}}],
                "lambda_grid": [1.0],
                "optim": {{"default": {{"batch": 20, "seed": 3}}}}
            }}"#
        );
        let c = config_from_json(&text, Path::new(".")).unwrap();
        assert_eq!(
            c.optim_for("dpo").unwrap().batch,
            BatchMode::Minibatch { size: 20, seed: 3 }
        );
        let text = text.replace("\"batch\": 20, \"seed\": 3", "\"batch\": \"population\"");
        let c = config_from_json(&text, Path::new(".")).unwrap();
        assert_eq!(c.optim_for("dpo").unwrap().batch, BatchMode::FullPopulation);
    }

    #[test]
    fn policy_snapshot_shape_errors_name_prompt() {
        let w = crate::presets::interpolation_world();
        let good = r#"{"0": [0.1, -0.2, 0.3]}"#;
        let p = policy_from_json(good, &w).unwrap();
        assert_eq!(p.logits()[0], vec![0.1, -0.2, 0.3]);
        let round = policy_from_json(&policy_to_json(&p), &w).unwrap();
        assert_eq!(round, p);

        let short = r#"{"0": [0.1, -0.2]}"#;
        match policy_from_json(short, &w) {
            Err(Error::ShapeMismatch(msg)) => assert!(msg.contains("policy[0]")),
            other => panic!("expected shape error, got {other:?}"),
        }
        let wrong_prompt = r#"{"1": [0.1, -0.2, 0.3]}"#;
        assert!(policy_from_json(wrong_prompt, &w).is_err());
    }

    #[test]
    fn parse_error_is_position_annotated() {
        let err = world_from_json("{ not json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line") || msg.contains("column"), "{msg}");
    }
}
