use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use curveroute::data::{save_dataset, Dataset, Query};
use curveroute::eval::{evaluate, lambda_grid, write_report, EvalReport, Method};
use curveroute::predictors::{load_checkpoint, save_checkpoint, train_mlp_bank, RouterModel};
use curveroute::router::{route, ReactiveAnchors, RoutingDecision, RoutingPolicy};
use curveroute::synth::{generate, SyntheticScenario};

use crate::config::{require_file, AppConfig};
use crate::error::CliError;

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn emit(out: &mut dyn Write, line: &str) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| input(format!("write failed: {e}")))
}

pub fn load_scenario(path: &Path) -> Result<SyntheticScenario, CliError> {
    let text = fs::read_to_string(path).map_err(|_| input(format!("scenario not found: {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

/// Generates a synthetic dataset and writes its four files into `out_dir`.
pub fn cmd_gen(scenario: &Path, out_dir: &Path, out: &mut dyn Write) -> Result<Dataset, CliError> {
    let scn = load_scenario(scenario)?;
    let ds = generate(&scn)?;
    save_dataset(&ds, out_dir)?;
    emit(
        out,
        &format!(
            "wrote {} samples ({} queries, {} models, {} levels) to {}",
            ds.samples().len(),
            ds.queries().len(),
            ds.pool().len(),
            ds.levels().len(),
            out_dir.display()
        ),
    )?;
    Ok(ds)
}

pub fn open_checkpoint(path: &Path) -> Result<RouterModel, CliError> {
    if !path.is_file() {
        return Err(input(format!("checkpoint not found: {}", path.display())));
    }
    Ok(load_checkpoint(path)?)
}

/// Trains the head bank on the configured dataset and saves the checkpoint.
pub fn cmd_train(cfg: &AppConfig, out: &mut dyn Write) -> Result<RouterModel, CliError> {
    let paths = cfg.dataset_paths()?;
    let ckpt = cfg.checkpoint_path()?;
    let ds = paths.load(false)?;
    let rm = train_mlp_bank(&ds, &cfg.train)?;
    save_checkpoint(&rm, ckpt)?;

    let heads = &rm.meta().heads;
    for h in heads {
        let budget = if h.is_default {
            format!("default({})", h.budget)
        } else {
            h.budget.to_string()
        };
        emit(
            out,
            &format!("{:<32} {:>14} n={:<6} final_mse={:.6}", h.model_id, budget, h.n_samples, h.final_train_mse),
        )?;
    }
    let mean = heads.iter().map(|h| h.final_train_mse).sum::<f64>() / heads.len() as f64;
    let max = heads.iter().map(|h| h.final_train_mse).fold(0.0, f64::max);
    emit(
        out,
        &format!("{} heads, mean final_mse {mean:.6}, max {max:.6}; saved {}", heads.len(), ckpt.display()),
    )?;
    Ok(rm)
}

/// Where `route` takes its queries from.
#[derive(Debug, Clone)]
pub enum QuerySource {
    Inline { query_id: String, embedding: Vec<f64> },
    /// A queries.jsonl file; every line is routed.
    File(PathBuf),
}

pub fn read_queries(src: &QuerySource) -> Result<Vec<Query>, CliError> {
    match src {
        QuerySource::Inline { query_id, embedding } => Ok(vec![Query::new(query_id.clone(), embedding.clone())]),
        QuerySource::File(path) => {
            require_file(path)?;
            let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| serde_json::from_str(l).map_err(|e| input(format!("{}:{}: {e}", path.display(), i + 1))))
                .collect()
        }
    }
}

/// Routes each query and prints one decision JSON object per line.
pub fn cmd_route(
    cfg: &AppConfig,
    src: &QuerySource,
    policy: &RoutingPolicy,
    out: &mut dyn Write,
) -> Result<Vec<RoutingDecision>, CliError> {
    let rm = open_checkpoint(cfg.checkpoint_path()?)?;
    let queries = read_queries(src)?;
    let mut decisions = Vec::with_capacity(queries.len());
    for q in &queries {
        let d = route(&rm, q, policy, &ReactiveAnchors::default())?;
        emit(out, &serde_json::to_string(&d).expect("decision serializes"))?;
        decisions.push(d);
    }
    Ok(decisions)
}

/// Evaluates `methods` on the configured dataset and writes the report files.
pub fn cmd_eval(cfg: &AppConfig, methods: &[Method], out_dir: &Path, out: &mut dyn Write) -> Result<EvalReport, CliError> {
    let rm = open_checkpoint(cfg.checkpoint_path()?)?;
    let paths = cfg.dataset_paths()?;
    let test = paths.load(true)?;
    let seed = cfg.eval.seeds.first().copied().unwrap_or(0);
    let report = evaluate(
        &rm,
        &test,
        methods,
        &cfg.policy(),
        &ReactiveAnchors::default(),
        &lambda_grid(cfg.eval.lambda_points),
        seed,
    )?;
    write_report(&report, out_dir)?;
    for (name, c) in &report.curves {
        let qnc = match c.qnc.value() {
            v if v.is_finite() => format!("{v:.4}"),
            _ => "unreached".to_string(),
        };
        emit(
            out,
            &format!("{name:<14} audc={:.4} qnc={qnc} peak_quality={:.4}", c.audc, c.peak_quality),
        )?;
    }
    emit(out, &format!("report written to {}", out_dir.display()))?;
    Ok(report)
}
