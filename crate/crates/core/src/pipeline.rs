//! File-based pipeline stages behind the command-line subcommands.
//!
//! Output layout under the configured `out` directory:
//!
//! ```text
//! data.csv                      synth
//! models/<criterion>.json       train
//! cv_report.csv, train_report.csv
//! weights.json                  ahp
//! optimize/<scenario>/          optimize: runlog.csv, episodes.csv,
//!                               summary.json, simulated.csv, network.json
//! compare.csv                   compare
//! report/curves.csv             report
//! ```
//!
//! Sub-seeds come from [`crate::seed::derive`] on the master seed: the
//! synthetic data uses stream `SYNTH`, the split `SPLIT`, criterion `k`'s
//! forest `FOREST/k` and folds `FOLDS/k`, and each scenario a seed derived
//! from its name.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::agents::{self, AgentConfig, ComparisonRow};
use crate::ahp::{self, ComparisonMatrix, Verdict, WeightsFile};
use crate::config::{RunConfig, Scenario};
use crate::data::{self, ExperienceDataset};
use crate::env::{Environment, ForestSurrogate, Surrogate, TargetSpec};
use crate::error::{Error, Result};
use crate::forest::{self, ForestHyperParams, ParamGrid, RandomForestModel};
use crate::seed::{self, stream};

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments) {
    // stdout is informational; a closed pipe must not fail the stage
    let _ = writeln!(out, "{line}");
}

/// Writes a synthetic dataset drawn from the schema's registered phantom.
pub fn cmd_synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<PathBuf> {
    let phantom = data::phantom_for(&cfg.schema)
        .ok_or_else(|| Error::Schema("no phantom registered for this schema".into()))?;
    let noise = match &cfg.data.noise {
        Some(n) => n.clone(),
        None => data::default_noise(&cfg.schema, phantom),
    };
    let dataset = data::synth_generate_with(
        &cfg.schema,
        phantom,
        cfg.data.count,
        &noise,
        seed::derive(cfg.seed, stream::SYNTH, 0),
    )?;
    let path = cfg.data_path();
    ensure_parent(&path)?;
    dataset.write_csv(&path)?;
    say(
        out,
        format_args!("wrote {} rows to {}", dataset.len(), path.display()),
    );
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub criterion: String,
    pub hyperparams: ForestHyperParams,
    pub metrics: forest::Metrics,
    pub model_path: PathBuf,
}

/// Fits one forest per criterion on a 75/25 split, with optional grid search.
pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<TrainReport>> {
    let data_path = cfg.data_path();
    let dataset = data::load_csv(&data_path, &cfg.schema)?;
    let (train, test) = data::split(
        &dataset,
        cfg.train.train_fraction,
        seed::derive(cfg.seed, stream::SPLIT, 0),
    )?;
    if test.is_empty() {
        return Err(Error::Empty("test split"));
    }
    let grid = if cfg.train.grid_search {
        match &cfg.train.grid {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                ParamGrid::parse(&text)?.expand()
            }
            None => ParamGrid::table1().expand(),
        }
    } else {
        vec![cfg.train.hyperparams]
    };

    create_dir(&cfg.models_dir())?;
    let x_train = train.inputs();
    let x_test = test.inputs();
    let mut cv_rows = Vec::new();
    let mut reports = Vec::new();
    for (k, criterion) in cfg.schema.criteria.iter().enumerate() {
        let y_train = train.targets(k);
        let cv = forest::grid_search_cv(
            &x_train,
            &y_train,
            &grid,
            cfg.train.folds,
            seed::derive(cfg.seed, stream::FOLDS, k as u64),
        )?;
        let model = forest::fit_forest(
            &x_train,
            &y_train,
            &cv.best,
            criterion,
            seed::derive(cfg.seed, stream::FOREST, k as u64),
        )?;
        let metrics = forest::evaluate(&model, &x_test, &test.targets(k))?;
        let model_path = cfg.model_path(criterion);
        write_file(&model_path, &model.to_json(&cfg.schema.hash()))?;
        say(
            out,
            format_args!(
                "{criterion}: R2 {:.4}  MAE {:.4}  MAPE {}",
                metrics.r2,
                metrics.mae,
                metrics
                    .mape
                    .map_or_else(|| "n/a".into(), |m| format!("{m:.2}"))
            ),
        );
        cv_rows.extend(
            cv.table
                .into_iter()
                .map(|(hp, mse)| (criterion.clone(), hp, mse)),
        );
        reports.push(TrainReport {
            criterion: criterion.clone(),
            hyperparams: cv.best,
            metrics,
            model_path,
        });
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(
        ["criterion"]
            .iter()
            .chain(ForestHyperParams::CSV_COLUMNS.iter())
            .chain(&["mean_cv_mse"]),
    )?;
    for (c, hp, mse) in &cv_rows {
        w.write_record(
            [c.clone()]
                .into_iter()
                .chain(hp.csv_fields())
                .chain([mse.to_string()]),
        )?;
    }
    write_file(&cfg.out.join("cv_report.csv"), &csv_string(w)?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(
        ["criterion"]
            .iter()
            .chain(ForestHyperParams::CSV_COLUMNS.iter())
            .chain(&["r2", "mae", "mape"]),
    )?;
    for r in &reports {
        w.write_record(
            [r.criterion.clone()]
                .into_iter()
                .chain(r.hyperparams.csv_fields())
                .chain([
                    r.metrics.r2.to_string(),
                    r.metrics.mae.to_string(),
                    r.metrics.mape.map(|m| m.to_string()).unwrap_or_default(),
                ]),
        )?;
    }
    write_file(&cfg.out.join("train_report.csv"), &csv_string(w)?)?;
    Ok(reports)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Format {
        what: "csv",
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Derives criteria weights and writes them; rejected judgments still get a
/// weights file but the stage fails.
pub fn cmd_ahp(cfg: &RunConfig, out: &mut dyn Write) -> Result<WeightsFile> {
    let path = cfg
        .ahp
        .matrix
        .as_ref()
        .ok_or_else(|| Error::Config("ahp.matrix is not set".into()))?;
    let matrix = ComparisonMatrix::load(path)?;
    if matrix.size() != cfg.schema.n_criteria() {
        return Err(Error::Matrix(format!(
            "{}×{} matrix for {} criteria",
            matrix.size(),
            matrix.size(),
            cfg.schema.n_criteria()
        )));
    }
    let result = ahp::derive_weights(&matrix)?;
    let verdict = ahp::check_consistency(&result, cfg.ahp.threshold);

    say(
        out,
        format_args!("{:<12} {:>10} {:>10}", "criterion", "GM", "weight"),
    );
    for (i, c) in cfg.schema.criteria.iter().enumerate() {
        say(
            out,
            format_args!(
                "{c:<12} {:>10.4} {:>10.4}",
                result.geometric_means[i], result.weights[i]
            ),
        );
    }
    say(out, format_args!("lambda_max {:.4}", result.lambda_max));
    say(out, format_args!("CI         {:.4}", result.ci));
    match result.cr {
        Some(cr) => say(
            out,
            format_args!("CR         {cr:.4} (threshold {})", cfg.ahp.threshold),
        ),
        None => say(out, format_args!("CR         n/a (fewer than 3 criteria)")),
    }
    say(
        out,
        format_args!(
            "verdict    {}",
            match verdict {
                Verdict::Accept => "accept",
                Verdict::Reject => "reject",
            }
        ),
    );

    let file = WeightsFile {
        criteria: cfg.schema.criteria.clone(),
        result,
        threshold: cfg.ahp.threshold,
        verdict,
    };
    let weights_path = cfg.weights_path();
    ensure_parent(&weights_path)?;
    file.save(&weights_path)?;
    if verdict == Verdict::Reject {
        return Err(Error::Inconsistent {
            cr: file.result.cr.unwrap_or(f64::NAN),
            threshold: cfg.ahp.threshold,
        });
    }
    Ok(file)
}

pub fn load_surrogate(cfg: &RunConfig) -> Result<ForestSurrogate> {
    let hash = cfg.schema.hash();
    let models = cfg
        .schema
        .criteria
        .iter()
        .map(|c| {
            let path = cfg.model_path(c);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            RandomForestModel::from_json(&text, &hash)
        })
        .collect::<Result<Vec<_>>>()?;
    ForestSurrogate::new(&cfg.schema, models)
}

/// Loads accepted weights matching the schema's criteria.
pub fn load_weights(cfg: &RunConfig) -> Result<Vec<f64>> {
    let file = WeightsFile::load(cfg.weights_path())?;
    if file.criteria != cfg.schema.criteria {
        return Err(Error::Config(format!(
            "weights are for criteria {:?}, schema has {:?}",
            file.criteria, cfg.schema.criteria
        )));
    }
    if file.verdict != Verdict::Accept {
        return Err(Error::Inconsistent {
            cr: file.result.cr.unwrap_or(f64::NAN),
            threshold: file.threshold,
        });
    }
    Ok(file.result.weights)
}

/// Seed of a scenario; depends only on the master seed and the scenario name,
/// so selecting one scenario reproduces its full-run result.
pub fn scenario_seed(master: u64, name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    let tag = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    seed::derive(master, stream::SCENARIO, tag)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Named {
    pub name: String,
    pub value: f64,
}

fn named(names: &[String], values: &[f64]) -> Vec<Named> {
    names
        .iter()
        .zip(values)
        .map(|(n, v)| Named {
            name: n.clone(),
            value: *v,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeSummary {
    pub scenario: String,
    pub seed: u64,
    pub best_state: Vec<Named>,
    pub best_error: f64,
    pub best_step: usize,
    pub targets: Vec<Named>,
    pub simulated: Vec<Named>,
    pub weights: Vec<f64>,
    pub distinct_states_per_episode: Vec<usize>,
    pub config: AgentConfig,
}

fn scenarios(cfg: &RunConfig) -> Result<&[Scenario]> {
    if cfg.scenarios.is_empty() {
        return Err(Error::Config("no [[scenario]] targets configured".into()));
    }
    Ok(&cfg.scenarios)
}

/// Runs the DQN agent for every configured scenario.
pub fn cmd_optimize(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<OptimizeSummary>> {
    let scenarios = scenarios(cfg)?;
    let weights = load_weights(cfg)?;
    let surrogate = load_surrogate(cfg)?;
    let results = scenarios
        .par_iter()
        .map(|sc| optimize_one(cfg, &surrogate, &weights, sc))
        .collect::<Result<Vec<_>>>()?;
    for s in &results {
        say(
            out,
            format_args!(
                "scenario {}: best error {:.4} at step {} -> {}",
                s.scenario,
                s.best_error,
                s.best_step,
                s.best_state
                    .iter()
                    .map(|n| format!("{}={}", n.name, n.value))
                    .collect::<Vec<_>>()
                    .join(" ")
            ),
        );
    }
    Ok(results)
}

fn optimize_one(
    cfg: &RunConfig,
    surrogate: &dyn Surrogate,
    weights: &[f64],
    sc: &Scenario,
) -> Result<OptimizeSummary> {
    let schema = &cfg.schema;
    let env = Environment::new(
        schema,
        surrogate,
        TargetSpec::new(sc.targets.clone(), weights.to_vec())?,
    )?;
    let seed = scenario_seed(cfg.seed, &sc.name);
    let outcome = agents::dqn_train(&env, &cfg.agent, seed)?;
    let dir = cfg.out.join("optimize").join(&sc.name);
    create_dir(&dir)?;
    outcome.log.write_csv(dir.join("runlog.csv"))?;
    outcome.log.write_episodes_csv(dir.join("episodes.csv"))?;
    if let Some(net) = &outcome.network {
        net.save(dir.join("network.json"))?;
    }

    let simulated = env.predict(&outcome.best_state);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["criterion", "target", "simulated"])?;
    for ((c, t), s) in schema.criteria.iter().zip(&sc.targets).zip(&simulated) {
        w.write_record([c.clone(), t.to_string(), s.to_string()])?;
    }
    write_file(&dir.join("simulated.csv"), &csv_string(w)?)?;

    let variable_names: Vec<String> = schema.variables.iter().map(|v| v.name.clone()).collect();
    let summary = OptimizeSummary {
        scenario: sc.name.clone(),
        seed,
        best_state: named(&variable_names, &outcome.best_state.values(schema)),
        best_error: outcome.best_error,
        best_step: outcome.best_step,
        targets: named(&schema.criteria, &sc.targets),
        simulated: named(&schema.criteria, &simulated),
        weights: weights.to_vec(),
        distinct_states_per_episode: outcome
            .log
            .episodes
            .iter()
            .map(|e| e.distinct_states)
            .collect(),
        config: cfg.agent,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&dir.join("summary.json"), &text)?;
    Ok(summary)
}

/// DQN against tabular Q-learning on every scenario, matched seeds.
pub fn cmd_compare(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<ComparisonRow>> {
    let scenarios = scenarios(cfg)?;
    let weights = load_weights(cfg)?;
    let surrogate = load_surrogate(cfg)?;
    let targets: Vec<Vec<f64>> = scenarios.iter().map(|s| s.targets.clone()).collect();
    let seeds: Vec<u64> = scenarios
        .iter()
        .map(|s| scenario_seed(cfg.seed, &s.name))
        .collect();
    let rows = agents::compare(
        &cfg.schema,
        &surrogate,
        &weights,
        &targets,
        &cfg.agent,
        &seeds,
    )?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["scenario".to_string(), "method".to_string()];
    header.extend(cfg.schema.variables.iter().map(|v| v.name.clone()));
    header.extend(["best_error".to_string(), "steps_to_best".to_string()]);
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![
            scenarios[r.scenario].name.clone(),
            r.method.name().to_string(),
        ];
        rec.extend(r.best_state.iter().map(|v| v.to_string()));
        rec.extend([r.best_error.to_string(), r.steps_to_best.to_string()]);
        w.write_record(&rec)?;
        say(
            out,
            format_args!(
                "scenario {:<4} {:<10} error {:.4}  steps {}",
                scenarios[r.scenario].name,
                r.method.name(),
                r.best_error,
                r.steps_to_best
            ),
        );
    }
    write_file(&cfg.out.join("compare.csv"), &csv_string(w)?)?;
    Ok(rows)
}

/// Long-format curves (`scenario,series,x,value`) from the optimize run logs:
/// per-step loss, epsilon and min_error, and per-episode distinct_states.
/// Scenarios without a run log are skipped.
pub fn cmd_report(cfg: &RunConfig, out: &mut dyn Write) -> Result<PathBuf> {
    let scenarios = scenarios(cfg)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "series", "x", "value"])?;
    let mut rows = 0usize;
    let mut rendered = 0usize;
    for sc in scenarios {
        let dir = cfg.out.join("optimize").join(&sc.name);
        let runlog = dir.join("runlog.csv");
        if !runlog.exists() {
            continue;
        }
        rendered += 1;
        let mut reader = csv::Reader::from_path(&runlog).map_err(|e| Error::Format {
            what: "run log",
            message: format!("{}: {e}", runlog.display()),
        })?;
        let records: Vec<csv::StringRecord> =
            reader.records().collect::<std::result::Result<_, _>>()?;
        for (col, series) in [(3, "loss"), (2, "epsilon"), (4, "min_error")] {
            for r in &records {
                let value = r.get(col).unwrap_or("");
                if !value.is_empty() {
                    w.write_record([sc.name.as_str(), series, &r[0], value])?;
                    rows += 1;
                }
            }
        }
        let episodes = dir.join("episodes.csv");
        let mut reader = csv::Reader::from_path(&episodes).map_err(|e| Error::Format {
            what: "episode log",
            message: format!("{}: {e}", episodes.display()),
        })?;
        for r in reader.records() {
            let r = r?;
            w.write_record([sc.name.as_str(), "distinct_states", &r[0], &r[1]])?;
            rows += 1;
        }
    }
    if rendered == 0 {
        return Err(Error::Config(format!(
            "no run logs under {}; run optimize first",
            cfg.out.join("optimize").display()
        )));
    }
    let path = cfg.out.join("report").join("curves.csv");
    write_file(&path, &csv_string(w)?)?;
    say(
        out,
        format_args!("wrote {rows} curve points to {}", path.display()),
    );
    Ok(path)
}

/// Convenience for examples and tests: the dataset a config points at.
pub fn load_dataset(cfg: &RunConfig) -> Result<ExperienceDataset> {
    data::load_csv(cfg.data_path(), &cfg.schema)
}
