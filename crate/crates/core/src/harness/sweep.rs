use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::corpus::subsample_pairs;
use crate::decode::count_flops;
use crate::error::{Error, Result};
use crate::harness::config::{SweepConfig, SweepKind};
use crate::harness::pipeline::Pipeline;
use crate::harness::plot::{emit_plot, PlotOptions};
use crate::metrics::{MetricReport, QueryMetrics, RANK_K, RECALL_KS};
use crate::scalefit::{fit_power_law, FitResult, ScalingPoint};
use crate::seqmodel::non_embedding_param_count;
use crate::util;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One sweep point: the swept value, its x coordinate and mean metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    /// Hidden size, training-pair count or beam size.
    pub param: usize,
    pub x: f64,
    pub metrics: BTreeMap<String, f64>,
    /// Mean per-token training loss of each epoch.
    pub train_loss: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesFit {
    pub series: String,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: SweepConfig,
    pub corpus_fingerprint: String,
    pub n_train_pairs: usize,
    pub n_test_queries: usize,
    pub points: Vec<PointRecord>,
    pub fits: Vec<SeriesFit>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub status: RunStatus,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn fit(&self, series: &str) -> Option<&FitResult> {
        self.fits
            .iter()
            .find(|f| f.series == series)
            .and_then(|f| f.fit.as_ref())
    }

    /// `(x, y)` points of a metric series, in sweep order.
    pub fn series(&self, series: &str) -> Vec<ScalingPoint> {
        self.points
            .iter()
            .filter_map(|p| p.metrics.get(series).map(|&y| ScalingPoint { x: p.x, y }))
            .collect()
    }
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Runs `job(i)` for `i < n` on up to `workers` threads; results keep index
/// order.
fn run_jobs<T: Send>(n: usize, workers: usize, job: impl Fn(usize) -> Result<T> + Sync) -> Vec<Result<T>> {
    if workers <= 1 || n <= 1 {
        return (0..n).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..workers.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = job(i);
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
        .collect()
}

/// Mean metrics of a report, keyed by CSV column name. CGL is omitted when
/// it was not computed.
pub fn mean_metrics(report: &MetricReport) -> BTreeMap<String, f64> {
    let m: &QueryMetrics = &report.mean;
    let mut out = BTreeMap::new();
    if m.cgl.is_finite() {
        out.insert("cgl".to_string(), m.cgl);
    }
    for (i, k) in RECALL_KS.iter().enumerate() {
        out.insert(format!("recall@{k}"), m.recall[i]);
        out.insert(format!("mr@{k}"), m.miss_rate(i));
    }
    out.insert(format!("ndcg@{RANK_K}"), m.ndcg);
    out.insert(format!("mrr@{RANK_K}"), m.mrr);
    out.insert(format!("map@{RANK_K}"), m.map);
    out
}

fn sweep_points(pipe: &Pipeline, config: &SweepConfig) -> Vec<Result<(PointRecord, MetricReport)>> {
    match config.sweep_kind {
        SweepKind::ModelSize => run_jobs(config.capacities.len(), config.workers, |i| {
            let d = config.capacities[i];
            let (model, stats) = pipe.train_model(d, &pipe.pairs, config)?;
            let report = pipe.evaluate(&model, config.eval_beam, config)?;
            let record = PointRecord {
                param: d,
                x: non_embedding_param_count(&model.config) as f64,
                metrics: mean_metrics(&report),
                train_loss: stats.epoch_loss,
            };
            Ok((record, report))
        }),
        SweepKind::DataSize => run_jobs(config.data_sizes.len(), config.workers, |i| {
            let size = config.data_sizes[i];
            let subset = subsample_pairs(&pipe.pairs, size, util::keyed_seed(config.seed, "subsample"))?;
            let (model, stats) = pipe.train_model(config.hidden_dim, &subset, config)?;
            let report = pipe.evaluate(&model, config.eval_beam, config)?;
            let record = PointRecord {
                param: size,
                x: size as f64,
                metrics: mean_metrics(&report),
                train_loss: stats.epoch_loss,
            };
            Ok((record, report))
        }),
        SweepKind::Beam => {
            let trained = pipe.train_model(config.hidden_dim, &pipe.pairs, config);
            let (model, stats) = match trained {
                Ok(t) => t,
                Err(e) => return vec![Err(e)],
            };
            run_jobs(config.beams.len(), config.workers, |i| {
                let b = config.beams[i];
                let bc = pipe.beam_config(b);
                let flops = count_flops(&model.config, &bc, pipe.max_len)?;
                let ranked = pipe.rank(&model, b, config.rank_k)?;
                let report = pipe.report(&ranked, None)?;
                let mut metrics = mean_metrics(&report);
                metrics.insert("flops".into(), flops.flops_per_query as f64);
                let record = PointRecord {
                    param: b,
                    x: flops.flops_per_query as f64,
                    metrics,
                    train_loss: stats.epoch_loss.clone(),
                };
                Ok((record, report))
            })
        }
    }
}

/// Fits every fitted series of the sweep kind; fit failures are recorded,
/// not raised.
pub fn fit_series(kind: SweepKind, points: &[PointRecord], config: &SweepConfig) -> Vec<SeriesFit> {
    kind.fitted_series()
        .iter()
        .map(|&series| {
            let data: Vec<ScalingPoint> = points
                .iter()
                .filter_map(|p| p.metrics.get(series).map(|&y| ScalingPoint { x: p.x, y }))
                .collect();
            match fit_power_law(&data, &config.fit) {
                Ok(fit) => SeriesFit {
                    series: series.to_string(),
                    fit: Some(fit),
                    error: None,
                },
                Err(e) => SeriesFit {
                    series: series.to_string(),
                    fit: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// File-name form of a series label.
pub fn series_slug(series: &str) -> String {
    series.replace('@', "_at_")
}

/// Sweep summary CSV: one row per point, one column per metric.
pub fn points_csv(points: &[PointRecord]) -> Result<String> {
    let mut columns: Vec<&str> = Vec::new();
    for p in points {
        for k in p.metrics.keys() {
            if !columns.contains(&k.as_str()) {
                columns.push(k);
            }
        }
    }
    columns.sort_unstable();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["param", "x"];
    header.extend(&columns);
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![p.param.to_string(), p.x.to_string()];
        row.extend(
            columns
                .iter()
                .map(|c| p.metrics.get(*c).map_or(String::new(), |v| v.to_string())),
        );
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn persist(manifest: &RunManifest, reports: &[(usize, MetricReport)], out: &Path) -> Result<()> {
    for (param, report) in reports {
        report.write_csv(&out.join("metrics").join(format!("{param}.csv")))?;
    }
    util::write_atomic(&out.join("points.csv"), points_csv(&manifest.points)?.as_bytes())?;
    let fits: Vec<serde_json::Value> = manifest
        .fits
        .iter()
        .map(|f| match &f.fit {
            Some(fit) => serde_json::json!({
                "series": f.series,
                "fit": fit.report(manifest.config.sweep_kind.law()),
            }),
            None => serde_json::json!({ "series": f.series, "error": f.error }),
        })
        .collect();
    util::write_atomic(&out.join("fits.json"), serde_json::to_string_pretty(&fits)?.as_bytes())?;
    for f in &manifest.fits {
        let data = manifest.series(&f.series);
        if data.is_empty() {
            continue;
        }
        let opts = PlotOptions {
            title: format!("{} vs {}", f.series, manifest.config.sweep_kind.x_label()),
            x_label: manifest.config.sweep_kind.x_label().to_string(),
            y_label: f.series.clone(),
            log_y: manifest.config.plot_log_y,
        };
        let path = out.join(format!("plot_{}.svg", series_slug(&f.series)));
        if let Err(e) = emit_plot(&data, f.fit.as_ref(), &opts, &path) {
            // Plots are derived artifacts; a log-scale plot of
            // non-positive values must not fail the run.
            if !matches!(e, Error::Input(_)) {
                return Err(e);
            }
        }
    }
    util::write_atomic(
        &out.join("manifest.json"),
        serde_json::to_string_pretty(manifest)?.as_bytes(),
    )
}

/// Runs a sweep end to end and persists its artifacts under
/// `config.out_dir`: `manifest.json`, `points.csv`, `fits.json`,
/// `metrics/<param>.csv` and one SVG per fitted series. A failed run still
/// writes what completed, with `status = failed` and a `FAILED` marker.
pub fn run_sweep(config: &SweepConfig) -> Result<RunManifest> {
    config.validate()?;
    let started = now_unix();
    let out = config.out_dir.clone();
    let failed = |manifest: Option<RunManifest>, err: Error| -> Error {
        let _ = util::write_atomic(&out.join("FAILED"), format!("{err}\n").as_bytes());
        if let Some(m) = manifest {
            let _ = util::write_atomic(
                &out.join("manifest.json"),
                serde_json::to_string_pretty(&m).unwrap_or_default().as_bytes(),
            );
        }
        err
    };
    let pipe = match Pipeline::prepare(config) {
        Ok(p) => p,
        Err(e) => return Err(failed(None, e)),
    };
    if config.sweep_kind == SweepKind::DataSize {
        if let Some(&max) = config.data_sizes.last() {
            if max > pipe.pairs.len() {
                let e = Error::Range(format!(
                    "data size {max} exceeds the {} available training pairs",
                    pipe.pairs.len()
                ));
                return Err(failed(None, e));
            }
        }
    }
    let mut manifest = RunManifest {
        version: ARTIFACT_VERSION.to_string(),
        config: config.clone(),
        corpus_fingerprint: pipe.corpus.fingerprint(),
        n_train_pairs: pipe.pairs.len(),
        n_test_queries: pipe.test_ids.len(),
        points: Vec::new(),
        fits: Vec::new(),
        started_unix: started,
        finished_unix: started,
        status: RunStatus::Complete,
        error: None,
    };
    let mut reports = Vec::new();
    let mut first_error = None;
    for result in sweep_points(&pipe, config) {
        match result {
            Ok((record, report)) => {
                reports.push((record.param, report));
                manifest.points.push(record);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    manifest.finished_unix = now_unix();
    if let Some(e) = first_error {
        manifest.status = RunStatus::Failed;
        manifest.error = Some(e.to_string());
        return Err(failed(Some(manifest), e));
    }
    manifest.fits = fit_series(config.sweep_kind, &manifest.points, config);
    let _ = std::fs::remove_file(out.join("FAILED"));
    persist(&manifest, &reports, &out)?;
    Ok(manifest)
}
