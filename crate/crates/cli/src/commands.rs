use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lrpae_core::autonet::{
    build_table3_model, load_model, save_model, tabular_mlp, train, Model, Table3Scale, TrainReport,
};
use lrpae_core::baselines::{kernel_shap_explain, residual_explain, ShapConfig};
use lrpae_core::corruption::{anomaly_score, generate_validation_set, CorruptionRecord, ScoreCalibration};
use lrpae_core::datagen::{
    gen_images, gen_tabular, load_images, load_tabular, normalize_minmax, save_images, save_tabular,
    write_blob, write_pgm, ImageDataset, TabularDataset, MANIFEST_FILE,
};
use lrpae_core::lrp::{explain, RuleConfig};
use lrpae_core::metrics::{pr_curve_pixels, recall_report, RecallReport};
use lrpae_core::Tensor;

use crate::config::{DatasetKind, ImageMethod, Method, ModelKind, RunConfig};
use crate::report::{csv, recall_svg};
use crate::CliError;

pub const RUN_MANIFEST: &str = "run_manifest.txt";

fn prepare_out(cfg: &RunConfig, command: &str) -> Result<std::path::PathBuf, CliError> {
    let out = cfg.out_dir();
    fs::create_dir_all(&out)?;
    let mut text = format!("command = {command}\n");
    text.push_str(&cfg.manifest().render());
    fs::write(out.join(RUN_MANIFEST), text)?;
    Ok(out)
}

fn require_model(cfg: &RunConfig) -> Result<Model, CliError> {
    let path = cfg.model_path();
    if !path.is_file() {
        return Err(CliError::Usage(format!("model file {} not found; run `train` first", path.display())));
    }
    Ok(load_model(&path)?)
}

fn require_tabular(cfg: &RunConfig) -> Result<TabularDataset, CliError> {
    if cfg.dataset != DatasetKind::Tabular {
        return Err(CliError::Usage("this command needs `dataset = tabular`".into()));
    }
    let dir = cfg.data_dir();
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(CliError::Usage(format!("no dataset in {}; run `gen-data` first", dir.display())));
    }
    Ok(load_tabular(&dir)?)
}

fn require_images(cfg: &RunConfig) -> Result<ImageDataset, CliError> {
    if cfg.dataset != DatasetKind::Images {
        return Err(CliError::Usage("this command needs `dataset = images`".into()));
    }
    let dir = cfg.data_dir();
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(CliError::Usage(format!("no dataset in {}; run `gen-data` first", dir.display())));
    }
    Ok(load_images(&dir)?)
}

fn check_input(model: &Model, sample: &Tensor) -> Result<(), CliError> {
    if model.input_len() != sample.len() {
        return Err(CliError::Usage(format!(
            "model expects {} inputs but the dataset has {}",
            model.input_len(),
            sample.len()
        )));
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)?;
    Ok(())
}

pub fn gen_data(cfg: &RunConfig) -> Result<(), CliError> {
    prepare_out(cfg, "gen-data")?;
    let dir = cfg.data_dir();
    match cfg.dataset {
        DatasetKind::Tabular => save_tabular(&dir, &gen_tabular(cfg.seed, cfg.tabular_sizes)?)?,
        DatasetKind::Images => {
            let data = gen_images(cfg.seed, cfg.image_size, cfg.image_counts, &cfg.damage_kinds)?;
            save_images(&dir, &data, cfg.seed)?
        }
    }
    Ok(())
}

pub fn train_model(cfg: &RunConfig) -> Result<TrainReport, CliError> {
    let out = prepare_out(cfg, "train")?;
    let (train_set, val_set, model) = match cfg.dataset {
        DatasetKind::Tabular => {
            if cfg.model_kind != ModelKind::Mlp {
                return Err(CliError::Usage("tabular data needs `model_kind = mlp`".into()));
            }
            let d = require_tabular(cfg)?;
            let features = d.train.first().map_or(0, Tensor::len);
            (d.train, d.val, tabular_mlp(features, cfg.bias, cfg.seed)?)
        }
        DatasetKind::Images => {
            let scale = match cfg.model_kind {
                ModelKind::ConvDesk => Table3Scale::Desk,
                ModelKind::ConvFull => Table3Scale::Full,
                ModelKind::Mlp => return Err(CliError::Usage("image data needs a conv model_kind".into())),
            };
            let d = require_images(cfg)?;
            (d.train, d.val, build_table3_model(scale, cfg.bias, cfg.seed)?)
        }
    };
    if let Some(x) = train_set.first() {
        check_input(&model, x)?;
    }
    let (trained, report) = train(&model, &train_set, &val_set, &cfg.train)?;
    let path = cfg.model_path();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    save_model(&trained, &path)?;
    let rows: Vec<Vec<String>> = report
        .val_error
        .iter()
        .enumerate()
        .map(|(e, v)| {
            let loss = if e == 0 { String::new() } else { report.train_loss[e - 1].to_string() };
            vec![e.to_string(), loss, v.to_string()]
        })
        .collect();
    write(&out.join("train_log.csv"), &csv(&["epoch", "train_loss", "val_error"], &rows))?;
    Ok(report)
}

pub fn explain_sample(cfg: &RunConfig) -> Result<Tensor, CliError> {
    let out = prepare_out(cfg, "explain")?;
    let model = require_model(cfg)?;
    let rules = cfg.rules(&model);
    let pick = |split: &[Tensor]| -> Result<Tensor, CliError> {
        split.get(cfg.explain_index).cloned().ok_or_else(|| {
            CliError::Usage(format!(
                "explain_index {} outside the {} split ({} samples)",
                cfg.explain_index,
                cfg.explain_split,
                split.len()
            ))
        })
    };
    match cfg.dataset {
        DatasetKind::Tabular => {
            let d = require_tabular(cfg)?;
            let x = pick(match cfg.explain_split.as_str() {
                "train" => &d.train,
                "val" => &d.val,
                _ => &d.test,
            })?;
            check_input(&model, &x)?;
            let r = explain(&model, &x, cfg.loss, &rules)?.input().clone();
            let rows: Vec<Vec<String>> = r
                .data()
                .iter()
                .enumerate()
                .map(|(i, v)| vec![i.to_string(), v.to_string()])
                .collect();
            write(&out.join("relevance.csv"), &csv(&["feature_index", "relevance"], &rows))?;
            Ok(r)
        }
        DatasetKind::Images => {
            let d = require_images(cfg)?;
            let test: Vec<Tensor> = d.test.iter().map(|t| t.image.clone()).collect();
            let x = pick(match cfg.explain_split.as_str() {
                "train" => &d.train,
                "val" => &d.val,
                _ => &test,
            })?;
            check_input(&model, &x)?;
            let r = explain(&model, &x, cfg.loss, &rules)?.input().clone();
            write_pgm(&out.join("relevance.pgm"), &normalize_minmax(&r))?;
            write_blob(&out.join("relevance.f32"), std::slice::from_ref(&r))?;
            Ok(r)
        }
    }
}

/// Everything a corruption-benchmark method needs to explain one sample.
pub struct Explainers<'a> {
    pub model: &'a Model,
    pub rules: RuleConfig,
    pub calibration: ScoreCalibration,
    pub shap: ShapConfig,
}

impl<'a> Explainers<'a> {
    pub fn new(model: &'a Model, cfg: &RunConfig, data: &TabularDataset) -> Result<Self, CliError> {
        let calibration = ScoreCalibration::fit(model, &data.val)?;
        let n = cfg.shap_background.min(data.train.len());
        Ok(Self {
            model,
            rules: cfg.rules(model),
            calibration,
            shap: ShapConfig::new(data.train[..n].to_vec(), cfg.shap_nsamples, cfg.seed),
        })
    }

    /// Attribution of `method` at `x`; SHAP values are ranked by magnitude,
    /// so their absolute values are returned.
    pub fn attribute(&self, method: Method, x: &Tensor) -> Result<Tensor, CliError> {
        Ok(match method {
            Method::Lrp(loss) => explain(self.model, x, loss, &self.rules)?.input().clone(),
            Method::Residual(loss) => residual_explain(x, &self.model.forward(x)?, loss)?,
            Method::Shap => {
                let score = |s: &Tensor| anomaly_score(self.model, s, &self.calibration);
                kernel_shap_explain(score, x, &self.shap)?.values.abs()
            }
        })
    }
}

pub struct ValidationRun {
    pub records: Vec<CorruptionRecord>,
    pub reports: Vec<(Method, RecallReport)>,
}

pub fn validate(cfg: &RunConfig) -> Result<ValidationRun, CliError> {
    let out = prepare_out(cfg, "validate")?;
    let model = require_model(cfg)?;
    let data = require_tabular(cfg)?;
    if let Some(x) = data.test.first() {
        check_input(&model, x)?;
    }
    let ex = Explainers::new(&model, cfg, &data)?;
    let records = generate_validation_set(&model, &data.test, &ex.calibration, &cfg.validation)?;
    let targets: Vec<usize> = records.iter().map(|r| r.feature).collect();

    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let attrs = records
            .iter()
            .map(|r| ex.attribute(method, &r.corrupted))
            .collect::<Result<Vec<_>, _>>()?;
        let report = recall_report(&targets, &attrs)?;
        for p in &report.points {
            rows.push(vec![
                method.name(),
                p.m.to_string(),
                p.recall.to_string(),
                p.n_plus.to_string(),
                p.n_minus.to_string(),
            ]);
        }
        reports.push((method, report));
    }
    write(&out.join("recall.csv"), &csv(&["method", "m", "recall", "n_plus", "n_minus"], &rows))?;
    let series: Vec<(String, Vec<(usize, f64)>)> = reports
        .iter()
        .map(|(m, r)| (m.name(), r.points.iter().map(|p| (p.m, p.recall)).collect()))
        .collect();
    write(
        &out.join("recall.svg"),
        &recall_svg(&format!("recall@m, {} corruption", cfg.validation.strategy), &series),
    )?;
    let record_rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| vec![r.sample.to_string(), r.feature.to_string(), r.anomaly_score.to_string()])
        .collect();
    write(&out.join("records.csv"), &csv(&["sample", "feature", "anomaly_score"], &record_rows))?;
    Ok(ValidationRun { records, reports })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApRow {
    pub damage: String,
    pub method: String,
    pub ap: f64,
}

pub fn eval_images(cfg: &RunConfig) -> Result<Vec<ApRow>, CliError> {
    let out = prepare_out(cfg, "eval-images")?;
    let model = require_model(cfg)?;
    let data = require_images(cfg)?;
    if data.test.is_empty() {
        return Err(CliError::Usage("image dataset has no damaged test images".into()));
    }
    check_input(&model, &data.test[0].image)?;
    let rules = cfg.rules(&model);
    let heatmaps = out.join("heatmaps");
    if cfg.heatmap_limit > 0 {
        fs::create_dir_all(&heatmaps)?;
    }
    let mut kinds: Vec<_> = data.test.iter().map(|t| t.kind).collect();
    kinds.sort();
    kinds.dedup();

    let mut rows = Vec::new();
    for kind in kinds {
        let items: Vec<_> = data.test_of(kind).collect();
        let masks: Vec<Tensor> = items.iter().map(|t| t.mask.clone()).collect();
        for &method in &cfg.image_methods {
            let mut maps = Vec::with_capacity(items.len());
            for (i, t) in items.iter().enumerate() {
                let map = match method {
                    ImageMethod::Lrp(loss) => explain(&model, &t.image, loss, &rules)?.input().clone(),
                    ImageMethod::Residual(loss) => residual_explain(&t.image, &model.forward(&t.image)?, loss)?,
                    ImageMethod::Oracle => t.mask.clone(),
                    ImageMethod::Random => {
                        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                        rng.set_stream(((kind as u64) << 32) | i as u64);
                        Tensor::new(t.mask.shape(), (0..t.mask.len()).map(|_| rng.gen_range(0.0..1.0)).collect())?
                    }
                };
                if i < cfg.heatmap_limit {
                    let stem = heatmaps.join(format!("{kind}_{i:03}_{}", method.name()));
                    write_pgm(&stem.with_extension("pgm"), &normalize_minmax(&map))?;
                    write_blob(&stem.with_extension("f32"), std::slice::from_ref(&map))?;
                }
                maps.push(map);
            }
            let curve = pr_curve_pixels(&maps, &masks)?;
            rows.push(ApRow {
                damage: kind.to_string(),
                method: method.name(),
                ap: curve.ap,
            });
        }
    }
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.damage.clone(), r.method.clone(), r.ap.to_string()])
        .collect();
    write(&out.join("ap.csv"), &csv(&["damage", "method", "ap"], &csv_rows))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub method: String,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

fn summarize(method: &str, mut ms: Vec<f64>) -> Timing {
    ms.sort_by(f64::total_cmp);
    let q = |p: f64| ms[((ms.len() - 1) as f64 * p).round() as usize];
    Timing {
        method: method.to_string(),
        mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
        p50_ms: q(0.5),
        p95_ms: q(0.95),
    }
}

/// Wall-clock time per explanation of each method on the first
/// `bench_samples` test samples.
pub fn bench(cfg: &RunConfig) -> Result<Vec<Timing>, CliError> {
    let out = prepare_out(cfg, "bench")?;
    let model = require_model(cfg)?;
    let data = require_tabular(cfg)?;
    let n = cfg.bench_samples.min(data.test.len());
    if n == 0 {
        return Err(CliError::Usage("bench needs at least one test sample".into()));
    }
    check_input(&model, &data.test[0])?;
    let ex = Explainers::new(&model, cfg, &data)?;
    let methods = [
        ("lrp", Method::Lrp(cfg.loss)),
        ("shap", Method::Shap),
        ("residual", Method::Residual(cfg.loss)),
    ];
    let mut rows = Vec::new();
    for (name, method) in methods {
        ex.attribute(method, &data.test[0])?;
        let mut ms = Vec::with_capacity(n);
        for x in &data.test[..n] {
            let t = Instant::now();
            std::hint::black_box(ex.attribute(method, x)?);
            ms.push(t.elapsed().as_secs_f64() * 1e3);
        }
        rows.push(summarize(name, ms));
    }
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|t| {
            vec![
                t.method.clone(),
                format!("{:.6}", t.mean_ms),
                format!("{:.6}", t.p50_ms),
                format!("{:.6}", t.p95_ms),
            ]
        })
        .collect();
    write(&out.join("timing.csv"), &csv(&["method", "mean_ms", "p50_ms", "p95_ms"], &csv_rows))?;
    Ok(rows)
}
