use std::path::Path;

use haptic_core::bench::{self, BenchConfig, BenchError, DatasetSpec, ExportFormat};
use haptic_core::gp::{FitOptions, GpBank};
use haptic_core::ingest::{self, one_step_pairs, IngestError, Schema, SyntheticSpec};
use haptic_core::nn::{self, Example, NnError, Target};
use haptic_core::pipeline::{run_episode, EpisodeConfig, PipelineError, Predictor};
use haptic_core::shapley::{
    self, cross_side_columns, make_feature_value_fn, same_side_columns, select_top_k, ShapleyError, ValueFnSettings,
};
use haptic_core::{NetConfig, Trace, TrainConfig, TrainedNet, FEATURE_NAMES, NUM_FEATURES};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::run::{CliError, Log, RunDir, EXIT_ALL_CELLS_FAILED, EXIT_DIVERGENT, EXIT_EVALUATOR, EXIT_INGEST, EXIT_OTHER};
use crate::{
    ArchArg, BenchArgs, FeatureArgs, FormatArg, IngestArgs, ObjectiveArg, PredictArgs, PredictorArg, ShapleyArgs,
    ShapleyMethodArg, TrainArgs,
};

/// Largest feature count for which `--method auto` enumerates exactly.
const AUTO_EXACT_LIMIT: usize = 12;

fn ingest_error(e: IngestError) -> CliError {
    let details = match &e {
        IngestError::MissingColumn(c) => json!({ "column": c }),
        IngestError::NonFiniteValue { row, column } | IngestError::BadNumber { row, column, .. } => {
            json!({ "row": row, "column": column })
        }
        IngestError::NonMonotoneTime { row } => json!({ "row": row }),
        _ => serde_json::Value::Null,
    };
    CliError::new(EXIT_INGEST, "ingest", e.to_string()).with(details)
}

fn pipeline_error(e: PipelineError) -> CliError {
    CliError::new(EXIT_OTHER, "pipeline", e.to_string())
}

fn shapley_error(e: ShapleyError) -> CliError {
    match &e {
        ShapleyError::EvaluatorFailure { subset, reason } => CliError::new(EXIT_EVALUATOR, "evaluator_failure", e.to_string())
            .with(json!({ "mask": subset.mask(), "subset": subset.to_string(), "reason": reason })),
        _ => CliError::new(EXIT_OTHER, "shapley", e.to_string()),
    }
}

/// Reads a trace and standardizes it unless it already carries a normalization record.
fn load_trace(path: &Path) -> Result<Trace, CliError> {
    let trace = ingest::parse_trace(path, &Schema::canonical()).map_err(ingest_error)?;
    Ok(if trace.norm().is_identity() { ingest::normalize(&trace) } else { trace })
}

fn split_index(len: usize, fraction: f64, window: usize) -> Result<usize, CliError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::usage(format!("train fraction must lie in (0, 1), got {fraction}")));
    }
    let split = (len as f64 * fraction).floor() as usize;
    if split <= window + 1 {
        return Err(CliError::new(
            EXIT_INGEST,
            "ingest",
            format!("trace of {len} samples leaves {split} training samples for window {window}"),
        ));
    }
    Ok(split)
}

#[derive(Serialize, Deserialize)]
struct SubsetFile {
    features: Vec<usize>,
    names: Vec<String>,
    k: usize,
    mask: u32,
}

fn parse_feature_list(spec: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let idx = match FEATURE_NAMES.iter().position(|n| n.eq_ignore_ascii_case(tok)) {
            Some(i) => i,
            None => tok.parse::<usize>().ok().filter(|&i| i < NUM_FEATURES).ok_or_else(|| {
                CliError::usage(format!("unknown feature `{tok}` (expected one of {} or 0..{NUM_FEATURES})", FEATURE_NAMES.join("|")))
            })?,
        };
        out.push(idx);
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(CliError::usage("feature list is empty"));
    }
    Ok(out)
}

fn resolve_features(sel: &FeatureArgs) -> Result<Vec<usize>, CliError> {
    if let Some(spec) = &sel.features {
        return parse_feature_list(spec);
    }
    if let Some(path) = &sel.subset {
        let doc: SubsetFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if doc.features.is_empty() || doc.features.iter().any(|&i| i >= NUM_FEATURES) {
            return Err(CliError::usage(format!("{}: subset must list channels in 0..{NUM_FEATURES}", path.display())));
        }
        return Ok(doc.features);
    }
    Ok((0..NUM_FEATURES).collect())
}

pub fn ingest(a: &IngestArgs, dir: &RunDir, log: &Log) -> Result<(), CliError> {
    let raw = match (&a.synthetic, &a.input) {
        (Some(kind), _) => {
            log.info(format!("generating {} trace of {} samples", kind.as_str(), a.len));
            SyntheticSpec::new(*kind, a.len, a.noise_sd, a.seed).with_side(a.side).generate().map_err(ingest_error)?
        }
        (None, Some(path)) => {
            let mut schema = match &a.schema {
                Some(p) => Schema::from_file(p).map_err(ingest_error)?,
                None => Schema::canonical(),
            };
            schema.side = schema.side.or(Some(a.side));
            ingest::parse_trace(path, &schema).map_err(ingest_error)?
        }
        (None, None) => return Err(CliError::usage("either --input or --synthetic is required")),
    };
    let trace = if a.no_normalize { raw.clone() } else { ingest::normalize(&raw) };
    ingest::write_trace(&trace, dir.file("trace.csv")).map_err(ingest_error)?;

    let raw_units = ingest::denormalize(&raw);
    let stats: Vec<_> = (0..NUM_FEATURES)
        .map(|k| {
            let col = raw_units.column(k);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            json!({ "feature": FEATURE_NAMES[k], "mean": mean, "sd": sd, "min": min, "max": max })
        })
        .collect();
    println!("{} rows, {} features, side {}", trace.len(), NUM_FEATURES, trace.side());
    println!("{:>8} {:>14} {:>14} {:>14} {:>14}", "feature", "mean", "sd", "min", "max");
    for s in &stats {
        println!(
            "{:>8} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}",
            s["feature"].as_str().unwrap_or(""),
            s["mean"].as_f64().unwrap_or(f64::NAN),
            s["sd"].as_f64().unwrap_or(f64::NAN),
            s["min"].as_f64().unwrap_or(f64::NAN),
            s["max"].as_f64().unwrap_or(f64::NAN)
        );
    }
    dir.write_json(
        "stats.json",
        &json!({ "name": trace.name(), "side": trace.side(), "rows": trace.len(), "normalized": !a.no_normalize, "features": stats }),
    )?;
    Ok(())
}

fn evenly(n: usize, cap: usize) -> Vec<usize> {
    if cap == 0 || n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|i| i * n / cap).collect()
    }
}

pub fn train(a: &TrainArgs, dir: &RunDir, log: &Log) -> Result<(), CliError> {
    let trace = load_trace(&a.trace)?;
    let features = resolve_features(&a.select)?;
    let rows = trace.rows();
    let split = split_index(rows.len(), a.train_fraction, a.window)?;
    let train_rows = &rows[..split];

    log.info(format!("fitting oracle GPs on {} pairs", a.gp_max_train));
    let opts = FitOptions { max_evals: a.gp_fit_evals, ..FitOptions::default() };
    let bank = GpBank::fit_rows(train_rows, a.window, &features, a.gp_max_train, opts)
        .map_err(|e| CliError::new(EXIT_OTHER, "gp", e.to_string()))?;

    let (inputs, targets) = one_step_pairs(train_rows, a.window, &features);
    let mut data = Vec::new();
    for i in evenly(inputs.len(), a.max_windows) {
        let target = match a.objective {
            ObjectiveArg::Jsd => {
                let preds = bank.predict_observation(&inputs[i]).map_err(|e| CliError::new(EXIT_OTHER, "gp", e.to_string()))?;
                Target::oracle_with_floor(preds, a.target_var_floor)
            }
            ObjectiveArg::SquaredError => Target::Point(train_rows[targets[i]]),
        };
        data.push(Example { input: inputs[i].clone(), target });
    }

    let arch = match a.arch {
        ArchArg::Fc => haptic_core::Architecture::FullyConnected,
        ArchArg::Resnet => haptic_core::Architecture::ResidualMlp,
    };
    let mut cfg = NetConfig::for_arch(arch, a.window * features.len());
    if let Some(d) = a.depth {
        cfg.depth = d;
    }
    if let Some(w) = a.width {
        cfg.width = w;
    }
    if let Some(p) = a.dropout {
        cfg.dropout_p = p;
    }
    let net = TrainedNet::init(cfg, a.seed).map_err(|e| CliError::usage(e.to_string()))?;
    let tc = TrainConfig {
        lr: a.lr,
        momentum: a.momentum,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
        clip_norm: (a.clip_norm > 0.0).then_some(a.clip_norm),
        ..TrainConfig::default()
    };
    log.info(format!("training {} parameters on {} windows for {} epochs", net.n_params(), data.len(), a.epochs));
    let trained = nn::train(&net, &data, &tc).map_err(|e| match e {
        NnError::DivergentTraining { epoch, loss } => CliError::new(EXIT_DIVERGENT, "divergent_training", e.to_string())
            .with(json!({ "epoch": epoch, "loss": loss.to_string() })),
        other => CliError::new(EXIT_OTHER, "training", other.to_string()),
    })?;

    dir.write("model.json", trained.to_json() + "\n")?;
    dir.write_json("gp_bank.json", &bank)?;
    dir.write("loss_log.csv", trained.loss_log_csv())?;
    let final_eval = trained.mean_loss(&data, tc.bins);
    dir.write_json(
        "train_summary.json",
        &json!({
            "trace": trace.name(),
            "side": trace.side(),
            "features": features,
            "window": a.window,
            "train_samples": split,
            "examples": data.len(),
            "net": trained.config,
            "objective": trained.objective,
            "epochs_run": trained.train_log.len(),
            "final_train_loss": trained.train_log.last(),
            "final_eval_loss": final_eval,
            "gp_hyperparams": bank.models().iter().map(|m| m.hyperparams()).collect::<Vec<_>>(),
        }),
    )?;
    println!("trained {} epochs, final loss {final_eval:.6}", trained.train_log.len());
    Ok(())
}

pub fn shapley(a: &ShapleyArgs, dir: &RunDir, log: &Log) -> Result<(), CliError> {
    let trace = load_trace(&a.trace)?;
    let columns = match &a.other_trace {
        Some(p) => cross_side_columns(&trace, &load_trace(p)?).map_err(shapley_error)?,
        None => same_side_columns(&trace),
    };
    let names: Vec<String> = columns.iter().map(|c| c.name.clone()).collect();
    let m = columns.len();
    let settings = ValueFnSettings {
        window: a.window,
        train_fraction: a.train_fraction,
        max_train: a.max_train,
        max_validation: a.max_validation,
        fit_evals: a.fit_evals,
    };
    let v = make_feature_value_fn(columns, &trace, &settings).map_err(shapley_error)?;
    let exact = match a.method {
        ShapleyMethodArg::Exact => true,
        ShapleyMethodArg::Sampled => false,
        ShapleyMethodArg::Auto => m <= AUTO_EXACT_LIMIT,
    };
    log.info(format!("{} Shapley values over {m} features", if exact { "exact" } else { "sampled" }));
    let mut report = if exact { shapley::shapley_exact(&v) } else { shapley::shapley_sampled(&v, a.perms, a.seed) }
        .map_err(shapley_error)?;
    report.feature_names = names.clone();
    let subset = select_top_k(&report, a.k).map_err(shapley_error)?;

    dir.write("shapley_report.json", report.to_json() + "\n")?;
    dir.write("shapley.csv", report.to_csv())?;
    let features = subset.indices();
    dir.write_json(
        "subset.json",
        &SubsetFile { names: features.iter().map(|&i| names[i].clone()).collect(), features, k: a.k, mask: subset.mask() },
    )?;
    print!("{}", report.render_table());
    Ok(())
}

pub fn predict(a: &PredictArgs, dir: &RunDir, log: &Log) -> Result<(), CliError> {
    let trace = load_trace(&a.trace)?;
    let kind = match (&a.model, a.predictor) {
        (Some(_), Some(PredictorArg::Gp)) => return Err(CliError::usage("--model cannot be used with --predictor gp")),
        (Some(_), _) => PredictorArg::Net,
        (None, Some(PredictorArg::Net)) => return Err(CliError::usage("--predictor net requires --model")),
        (None, _) => PredictorArg::Gp,
    };
    let net = match &a.model {
        Some(p) => Some(TrainedNet::from_json(&std::fs::read_to_string(p)?).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let split = split_index(trace.len(), a.train_fraction, a.window)?;
    let bank: GpBank = match &a.gp_bank {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => {
            let features = resolve_features(&a.select)?;
            log.info(format!("fitting GPs on the first {split} samples"));
            let opts = FitOptions { max_evals: a.gp_fit_evals, ..FitOptions::default() };
            GpBank::fit_rows(&trace.rows()[..split], a.window, &features, a.gp_max_train, opts)
                .map_err(|e| CliError::new(EXIT_OTHER, "gp", e.to_string()))?
        }
    };
    let cfg = EpisodeConfig {
        window: bank.window(),
        block: a.block,
        refit_capacity: a.refit_capacity,
        refit_evals: a.refit_evals,
        blocks: Some(a.blocks),
    };
    let start = a.start.unwrap_or(split);
    let arrivals = a.loss_model.arrivals(&trace, start + cfg.window, trace.len());
    let predictor = match (kind, &net) {
        (PredictorArg::Net, Some(n)) => Predictor::Net(n),
        _ => Predictor::Gp,
    };
    let result = run_episode(&trace, start, predictor, &bank, &arrivals, &cfg).map_err(pipeline_error)?;

    dir.write("episode.csv", result.to_csv(false))?;
    let mut timing = String::from("index,time_ns\n");
    for s in &result.samples {
        timing.push_str(&format!("{},{}\n", s.index + 1, s.time_ns));
    }
    dir.write("timing.csv", timing)?;
    let summary = result.summary(false);
    dir.write_json("episode_summary.json", &summary)?;
    println!(
        "{} predictions, {} refits, {} self-fed blocks, predictor {}",
        summary.predicted, summary.refits, summary.self_fed_blocks, summary.predictor
    );
    Ok(())
}

fn bench_config(a: &BenchArgs) -> Result<BenchConfig, CliError> {
    let mut c = match &a.grid {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?,
        None => {
            let mut c = BenchConfig::default();
            c.datasets = a
                .datasets
                .iter()
                .map(|&kind| DatasetSpec::Synthetic { kind, len: a.len, noise_sd: a.noise_sd, seed: a.data_seed })
                .collect();
            c.archs = a.archs.clone();
            c.methods = a.methods.clone();
            c.sides = a.sides.clone();
            c.runs = a.runs;
            c.base_seed = a.seed;
            c.k = a.k;
            if let Some(e) = a.epochs {
                c.nn.epochs = e;
            }
            if let Some(t) = a.timing_predictions {
                c.timing.predictions = t;
            }
            if let Some(n) = a.episodes_per_run {
                c.episodes_per_run = n;
            }
            if let Some(lm) = &a.loss_model {
                c.loss_model = lm.clone();
            }
            c
        }
    };
    if a.parallel_timing {
        c.timing.sequential = false;
    }
    Ok(c)
}

pub fn bench(a: &BenchArgs, dir: &RunDir, log: &Log) -> Result<(), CliError> {
    let config = bench_config(a)?;
    log.info(format!("running grid {}", config.hash()));
    let report = bench::run_matrix(&config).map_err(|e| match e {
        BenchError::Config(m) => CliError::usage(m),
        other => CliError::other(other),
    })?;
    let formats: &[ExportFormat] = match a.format {
        FormatArg::Csv => &[ExportFormat::Csv],
        FormatArg::Json => &[ExportFormat::Json],
        FormatArg::Both => &[ExportFormat::Csv, ExportFormat::Json],
    };
    for &f in formats {
        bench::export_report(&report, f, dir.path()).map_err(CliError::other)?;
    }
    print!("{}", bench::table2_csv(&report));
    if !report.cells.is_empty() && !report.any_ok() {
        return Err(CliError::new(EXIT_ALL_CELLS_FAILED, "all_cells_failed", format!("all {} cells failed", report.cells.len())));
    }
    Ok(())
}
