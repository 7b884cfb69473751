use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{AttackKind, DatasetConfig, ExperimentConfig, Stage};
use super::manifest::write_manifest;
use super::metrics::{metrics, MetricRecord, Observed};
use super::svg::{render, Binding, MarkerRole, PlotKind, SvgPlot};
use crate::chartrec::{
    blank_cell_attack, column_shuffle_attack, feature_gradients, pipeline_attack, recommend, score_all, train_rec,
    PipelineConfig, RecModel, Recommendation, ShuffleConfig, TrainedRec, FEATURE_NAMES,
};
use crate::datatable::{
    load_gapminder, load_wine, make_blobs, make_chart_corpus, to_matrix, DataTable, LoadOptions, Matrix, NormKind,
};
use crate::diffcore::{Activation, MlpSpec, Tensor};
use crate::drattacks::{
    craft_one_attribute, full_mask, invert_to_target, outlier_scaling_attack, overwrite_cluster, probe_influence,
    trajectory_sweep, AdversarialInput, Verifier, SUCCESS_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::paradr::quality::{convex_hull, hull_contains, rms_radius, trustworthiness};
use crate::paradr::{build_graph, centroid, distance, train_projector, BBox, Embedding, Point, TrainedProjector};
use crate::substitute::{fit_substitute, FittedSubstitute, ObservationSet, Provenance};

/// Neighborhood size used for every trustworthiness figure in reports.
pub const REPORT_TRUST_K: usize = 10;
/// Largest held-out mean error, as a share of the diagonal, for a usable substitute.
pub const SUBSTITUTE_GOAL: f64 = 0.05;
/// Accuracy and AUC floor for a usable recommender.
pub const RECOMMENDER_GOAL: f64 = 0.9;
/// Share of aims an inversion run must hit.
pub const INVERSION_GOAL: f64 = 0.8;
/// Share of hull targets an overwrite run must hit.
pub const COVERAGE_GOAL: f64 = 0.8;
/// Corner aim inset as a share of the box extent.
pub const CORNER_INSET: f64 = 0.05;
const TOP_BARS: usize = 10;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ATTACK_FAILED: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// Exit status for a run that stopped with `err`.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::NoSuccessWithinBudget
        | Error::NoFlippingPermutation
        | Error::NoCandidateFound
        | Error::InversionFailed(_)
        | Error::EndToEndMismatch
        | Error::NoInfluentialAttribute => EXIT_ATTACK_FAILED,
        _ => EXIT_INTERNAL,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub name: String,
    pub stage: Stage,
    pub attack: Option<AttackKind>,
    pub dataset: String,
    pub seed: u64,
    pub success: bool,
    pub error: Option<String>,
    /// Figures measured on the target model.
    pub target_side: Value,
    /// Figures measured on the substitute, when one was fitted.
    pub substitute_side: Value,
    pub metrics: Vec<MetricRecord>,
    pub details: Value,
    /// Files written next to the report, in write order.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: AttackReport,
    pub exit_code: i32,
    pub out_dir: PathBuf,
}

/// Output directory plus the artifacts written so far.
struct Bundle {
    dir: PathBuf,
    names: Vec<String>,
}

impl Bundle {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn svg(&mut self, name: &str, plot: &SvgPlot) -> Result<()> {
        self.write(name, render(plot)?.as_bytes())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Files produced by a saver that writes `name` and `name.json`.
    fn model(&mut self, name: &str, save: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        save(&self.dir.join(name))?;
        self.names.push(name.to_string());
        self.names.push(format!("{name}.json"));
        Ok(())
    }
}

// ------------------------------------------------------------------ datasets

pub struct Dataset {
    pub name: String,
    pub matrix: Matrix,
    pub labels: Option<Vec<usize>>,
    /// Display name of each label id.
    pub label_names: Vec<String>,
}

impl Dataset {
    /// Rows carrying `label`, or every row when `label` is `None`.
    pub fn rows_with(&self, label: Option<&str>) -> Result<Vec<usize>> {
        let n = self.matrix.rows();
        let Some(name) = label else {
            return Ok((0..n).collect());
        };
        let id = self.label_id(name)?;
        let labels = self.labels.as_ref().expect("label_id checked labels");
        Ok((0..n).filter(|&i| labels[i] == id).collect())
    }

    pub fn label_id(&self, name: &str) -> Result<usize> {
        if self.labels.is_none() {
            return Err(Error::Config(format!("dataset `{}` has no label column", self.name)));
        }
        self.label_names
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::Config(format!("unknown label `{name}`")))
    }

    fn label_name(&self, id: usize) -> String {
        self.label_names.get(id).cloned().unwrap_or_else(|| id.to_string())
    }
}

fn labels_of(table: &DataTable, column: &str) -> Result<(Vec<usize>, Vec<String>)> {
    let raw = table.column(column)?.raw();
    let mut names: Vec<String> = raw.to_vec();
    names.sort_by(|a, b| match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    });
    names.dedup();
    let ids = raw
        .iter()
        .map(|r| names.iter().position(|n| n == r).expect("collected above"))
        .collect();
    Ok((ids, names))
}

fn table_dataset(table: DataTable, label: Option<&str>) -> Result<Dataset> {
    let matrix = to_matrix(&table, None, NormKind::MinMax)?;
    let (labels, label_names) = match label {
        Some(l) => {
            let (ids, names) = labels_of(&table, l)?;
            (Some(ids), names)
        }
        None => (None, Vec::new()),
    };
    Ok(Dataset {
        name: table.name().to_string(),
        matrix,
        labels,
        label_names,
    })
}

pub const BLOB_CLUSTERS: usize = 3;
pub const BLOB_POINTS: usize = 300;
pub const BLOB_DIMS: usize = 10;

pub fn load_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    match cfg.name.as_str() {
        "wine" => table_dataset(load_wine()?, Some(cfg.label.as_deref().unwrap_or("cultivar"))),
        "gapminder" => table_dataset(load_gapminder()?, cfg.label.as_deref()),
        "blobs" => {
            let (matrix, labels) = make_blobs(BLOB_CLUSTERS, BLOB_POINTS, BLOB_DIMS, 1.0, seed)?;
            Ok(Dataset {
                name: "blobs".into(),
                matrix,
                labels: Some(labels),
                label_names: (0..BLOB_CLUSTERS).map(|c| c.to_string()).collect(),
            })
        }
        path => {
            let options = LoadOptions {
                name: None,
                label_columns: cfg.label.iter().cloned().collect(),
            };
            table_dataset(DataTable::load_csv(Path::new(path), &options)?, cfg.label.as_deref())
        }
    }
}

/// Table attacked by the recommender attacks.
pub fn load_rec_table(name: &str) -> Result<DataTable> {
    match name {
        "gapminder" => load_gapminder(),
        "wine" => load_wine(),
        path => DataTable::load_csv(Path::new(path), &LoadOptions::default()),
    }
}

// -------------------------------------------------------------------- models

fn seed_for(config: &ExperimentConfig, stream: u64) -> u64 {
    config.seed.wrapping_add(stream)
}

pub fn train_target(config: &ExperimentConfig, ds: &Dataset) -> Result<TrainedProjector> {
    let p = &config.projector;
    let mut widths = vec![ds.matrix.width()];
    widths.extend(&p.hidden);
    widths.push(2);
    let spec = MlpSpec::new(widths, Activation::Relu, config.seed)?;
    let graph = build_graph(&ds.matrix.data, p.k, config.seed)?;
    train_projector(&ds.matrix, &graph, &spec, &p.training(config.seed))
}

pub fn fit_substitute_for(config: &ExperimentConfig, ds: &Dataset, target: &TrainedProjector) -> Result<FittedSubstitute> {
    let s = &config.substitute;
    let seed = seed_for(config, 1);
    let mut obs = ObservationSet::observe(&target.projector, ds.matrix.raw()?, Provenance::TrainingData)?;
    if s.queries > 0 {
        let d = ds.matrix.width();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let lo = -s.query_margin;
        let hi = 1.0 + s.query_margin;
        let normed: Vec<f64> = (0..s.queries * d).map(|_| rng.gen_range(lo..=hi)).collect();
        let raw = ds.matrix.norm.denormalize(&Tensor::matrix(s.queries, d, normed)?)?;
        obs = obs.merged(&ObservationSet::observe(&target.projector, raw, Provenance::Queried)?)?;
    }
    let mut widths = vec![ds.matrix.width()];
    widths.extend(&s.hidden);
    widths.push(2);
    let spec = MlpSpec::new(widths, Activation::Relu, seed)?;
    fit_substitute(&obs, &spec, &ds.matrix.norm, &s.training(seed))
}

pub fn train_recommender(config: &ExperimentConfig) -> Result<TrainedRec> {
    let r = &config.recommender;
    let corpus = make_chart_corpus(r.corpus_size, r.corpus_seed)?;
    train_rec(&corpus, r.model(config.seed), &r.training(config.seed))
}

// ------------------------------------------------------------------- helpers

fn labeled(ds: &Dataset, emb: &Embedding) -> Result<Embedding> {
    match &ds.labels {
        Some(l) => emb.clone().with_labels(l.clone()),
        None => Ok(emb.clone()),
    }
}

/// Embedding scatter with one binding per label.
fn scatter(ds: &Dataset, emb: &Embedding, title: &str) -> SvgPlot {
    let mut plot = SvgPlot::new(PlotKind::Scatter, title).labels("x", "y");
    match emb.labels() {
        Some(_) => {
            for l in emb.label_set() {
                plot = plot.bind(Binding::Points {
                    name: ds.label_name(l),
                    points: emb.cluster(l),
                });
            }
        }
        None => {
            plot = plot.bind(Binding::Points {
                name: ds.name.clone(),
                points: emb.points().to_vec(),
            })
        }
    }
    plot
}

fn points_csv(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Raw-unit crafted rows, one per input, under the dataset's attribute names.
fn crafted_csv(ds: &Dataset, inputs: &[&AdversarialInput]) -> Result<String> {
    let mut rows = Vec::with_capacity(inputs.len());
    for a in inputs {
        let mut r = ds.matrix.norm.denormalize_row(&a.crafted)?;
        r.extend_from_slice(&a.achieved);
        rows.push(r);
    }
    let mut header = ds.matrix.attributes.join(",");
    header.push_str(",x,y");
    Ok(points_csv(&header, rows))
}

/// Embedding after adding `extra` placements; each keeps the label of its base row.
fn with_extra(ds: &Dataset, emb: &Embedding, extra: &[(Point, Option<usize>)]) -> Result<Embedding> {
    let mut points = emb.points().to_vec();
    points.extend(extra.iter().map(|e| e.0));
    let labels = match (&ds.labels, emb.labels()) {
        (Some(_), Some(l)) => {
            let mut l = l.to_vec();
            l.extend(extra.iter().map(|e| e.1.unwrap_or(0)));
            Some(l)
        }
        _ => None,
    };
    Embedding::new(points, labels)
}

fn appended(data: &Tensor, rows: &[Vec<f64>]) -> Result<Tensor> {
    let mut v = data.values().to_vec();
    for r in rows {
        v.extend_from_slice(r);
    }
    Tensor::matrix(data.rows() + rows.len(), data.cols(), v)
}

fn embedding_metrics(
    ds: &Dataset,
    before: &Embedding,
    crafted: &[(&AdversarialInput, Option<usize>)],
) -> Result<MetricRecord> {
    let extra: Vec<(Point, Option<usize>)> = crafted.iter().map(|(a, l)| (a.achieved, *l)).collect();
    let after = with_extra(ds, before, &extra)?;
    let rows: Vec<Vec<f64>> = crafted.iter().map(|(a, _)| a.crafted.clone()).collect();
    let high_after = appended(&ds.matrix.data, &rows)?;
    let mut record = metrics(
        &Observed::Embedding {
            embedding: before,
            high: Some(&ds.matrix.data),
        },
        &Observed::Embedding {
            embedding: &after,
            high: Some(&high_after),
        },
    )?;
    if let MetricRecord::Embedding { centroid_shifts, .. } = &mut record {
        *centroid_shifts = std::mem::take(centroid_shifts)
            .into_iter()
            .map(|(k, v)| (k.parse().map_or(k, |id: usize| ds.label_name(id)), v))
            .collect();
    }
    Ok(record)
}

fn label_of(ds: &Dataset, row: usize) -> Option<usize> {
    ds.labels.as_ref().map(|l| l[row])
}

fn default_base(ds: &Dataset, config: &ExperimentConfig) -> Result<usize> {
    if let Some(b) = config.attack.base {
        if b >= ds.matrix.rows() {
            return Err(Error::RowOutOfRange {
                row: b,
                rows: ds.matrix.rows(),
            });
        }
        return Ok(b);
    }
    ds.rows_with(config.attack.base_label.as_deref())?
        .first()
        .copied()
        .ok_or_else(|| Error::Config("no rows carry the base label".into()))
}

/// Top `m` attributes by probed displacement, or every attribute.
fn attack_mask(config: &ExperimentConfig, target: &TrainedProjector, x: &[f64]) -> Result<Vec<usize>> {
    match config.attack.mask_top {
        None => Ok(full_mask(x.len())),
        Some(0) => Err(Error::EmptyMask),
        Some(m) => {
            let profile = probe_influence(&target.projector, x, config.attack.delta)?;
            let mut order: Vec<usize> = (0..x.len()).collect();
            order.sort_by(|&a, &b| profile.displacements[b].total_cmp(&profile.displacements[a]));
            order.truncate(m.min(x.len()));
            order.sort_unstable();
            Ok(order)
        }
    }
}

/// Corner aim first, then seeded uniform aims inside `bbox`.
pub fn seeded_aims(bbox: &BBox, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa1a5);
    let mut aims = Vec::with_capacity(count);
    if count > 0 {
        aims.push([
            bbox.min[0] + CORNER_INSET * bbox.width(),
            bbox.min[1] + CORNER_INSET * bbox.height(),
        ]);
    }
    while aims.len() < count {
        aims.push([
            bbox.min[0] + rng.gen::<f64>() * bbox.width(),
            bbox.min[1] + rng.gen::<f64>() * bbox.height(),
        ]);
    }
    aims
}

/// `count` seeded points inside the convex hull of `points`.
pub fn hull_targets(points: &[Point], count: usize, seed: u64) -> Result<Vec<Point>> {
    let hull = convex_hull(points);
    let bbox = BBox::of(&hull).ok_or(Error::EmptyTargets)?;
    if hull.len() < 3 || bbox.area() <= 0.0 {
        return Err(Error::DegenerateData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4075);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = [
            bbox.min[0] + rng.gen::<f64>() * bbox.width(),
            bbox.min[1] + rng.gen::<f64>() * bbox.height(),
        ];
        if hull_contains(&hull, p) {
            out.push(p);
        }
    }
    Ok(out)
}

fn score_bars(rec: &Recommendation, title: &str) -> SvgPlot {
    let top: Vec<_> = rec.entries.iter().take(TOP_BARS).collect();
    SvgPlot::new(PlotKind::Bar, title).labels("recommendation", "score").bind(Binding::Bars {
        name: "score".into(),
        labels: top
            .iter()
            .map(|e| format!("{} {}", e.chart.as_str(), e.columns.join("+")))
            .collect(),
        values: top.iter().map(|e| e.score).collect(),
    })
}

fn rec_metrics(before: &DataTable, after: &DataTable, model: &RecModel) -> Result<MetricRecord> {
    let rb = Recommendation {
        table: before.name().to_string(),
        entries: score_all(model, before)?,
    };
    let ra = Recommendation {
        table: after.name().to_string(),
        entries: score_all(model, after)?,
    };
    metrics(&Observed::Recommendation(&rb), &Observed::Recommendation(&ra))
}

// -------------------------------------------------------------------- stages

fn target_side(ds: &Dataset, t: &TrainedProjector) -> Result<Value> {
    let k = REPORT_TRUST_K.min(ds.matrix.rows().saturating_sub(2)).max(1);
    let trust = trustworthiness(&ds.matrix.data, t.embedding.points(), k)?;
    let b = t.embedding.bbox();
    Ok(json!({
        "trustworthiness": trust,
        "trust_k": k,
        "initial_loss": t.initial_loss,
        "final_loss": t.final_loss,
        "bbox": { "min": b.min, "max": b.max, "diagonal": b.diagonal() },
    }))
}

fn substitute_side(sub: &FittedSubstitute) -> Value {
    json!({
        "fidelity": sub.fidelity,
        "heldout": sub.heldout.len(),
        "initial_loss": sub.initial_loss,
        "final_loss": sub.final_loss,
    })
}

fn stage_target(config: &ExperimentConfig, ds: &Dataset, bundle: &mut Bundle, report: &mut AttackReport) -> Result<TrainedProjector> {
    let t = train_target(config, ds)?;
    let emb = labeled(ds, &t.embedding)?;
    bundle.write("embedding.csv", emb.to_csv_string().as_bytes())?;
    bundle.svg("embedding.svg", &scatter(ds, &emb, &format!("{} embedding", ds.name)))?;
    bundle.model("target.mlp", |p| t.projector.save(p))?;
    report.target_side = target_side(ds, &t)?;
    Ok(t)
}

fn stage_substitute(
    config: &ExperimentConfig,
    ds: &Dataset,
    t: &TrainedProjector,
    bundle: &mut Bundle,
    report: &mut AttackReport,
) -> Result<FittedSubstitute> {
    let sub = fit_substitute_for(config, ds, t)?;
    bundle.model("substitute.mlp", |p| sub.projector.save(p))?;
    let placed = Embedding::from_tensor(&sub.projector.project_normalized(&ds.matrix.data)?, ds.labels.clone())?;
    bundle.svg("substitute.svg", &scatter(ds, &placed, &format!("{} substitute placement", ds.name)))?;
    report.substitute_side = substitute_side(&sub);
    Ok(sub)
}

fn stage_recommender(config: &ExperimentConfig, bundle: &mut Bundle, report: &mut AttackReport) -> Result<TrainedRec> {
    let trained = train_recommender(config)?;
    bundle.write("recommender.json", &serde_json_bytes(&trained.model)?)?;
    report.target_side = json!({
        "chart_accuracy": trained.evaluation.chart_accuracy,
        "set_auc": trained.evaluation.set_auc,
        "accepted": trained.evaluation.accepted,
        "rejected": trained.evaluation.rejected,
        "final_loss": trained.loss_trace.last(),
        "heldout_tables": trained.heldout_tables.len(),
    });
    Ok(trained)
}

fn serde_json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(v)?)
}

fn victim_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    load_dataset(&config.dataset, config.seed)
}

// ------------------------------------------------------------------- attacks

fn attack_one_attr(config: &ExperimentConfig, bundle: &mut Bundle, report: &mut AttackReport) -> Result<bool> {
    let ds = victim_dataset(config)?;
    let t = stage_target(config, &ds, bundle, report)?;
    let a = &config.attack;
    let base = default_base(&ds, config)?;
    let x = ds.matrix.row(base).to_vec();
    let profile = probe_influence(&t.projector, &x, a.delta)?;
    let adv = craft_one_attribute(&t.projector, &profile, &x, a.magnitude)?;
    let j = adv.manipulated[0];
    let traj = trajectory_sweep(&t.projector, &x, j, &a.magnitudes)?;

    let emb = labeled(&ds, &t.embedding)?;
    let mut passes = Vec::new();
    if emb.labels().is_some() {
        for l in emb.label_set() {
            let members = emb.cluster(l);
            let c = centroid(&members);
            let d = traj.min_distance_to(c);
            passes.push(json!({
                "label": ds.label_name(l),
                "distance": d,
                "radius": rms_radius(&members),
                "within": d <= rms_radius(&members),
            }));
        }
    }
    let moved = distance(adv.achieved, profile.baseline);
    let tolerance = SUCCESS_TOLERANCE * emb.bbox().diagonal();

    bundle.write(
        "trajectory.csv",
        points_csv("magnitude,x,y", traj.points.iter().map(|(m, p)| vec![*m, p[0], p[1]])).as_bytes(),
    )?;
    bundle.write("crafted.csv", crafted_csv(&ds, &[&adv])?.as_bytes())?;
    let plot = scatter(&ds, &emb, "one-attribute attack")
        .mark(profile.baseline, MarkerRole::Benign)
        .mark(adv.achieved, MarkerRole::Adversarial);
    bundle.svg("scatter.svg", &plot)?;
    let mut line = SvgPlot::new(PlotKind::Line, format!("sweep of {}", ds.matrix.attributes[j]))
        .labels("x", "y")
        .bind(Binding::Points {
            name: "trajectory".into(),
            points: traj.positions(),
        })
        .mark(profile.baseline, MarkerRole::Benign);
    for l in emb.label_set() {
        line = line.mark(centroid(&emb.cluster(l)), MarkerRole::Centroid);
    }
    bundle.svg("trajectory.svg", &line)?;

    report.metrics.push(embedding_metrics(&ds, &emb, &[(&adv, label_of(&ds, base))])?);
    report.details = json!({
        "base_row": base,
        "probe": profile,
        "attribute": ds.matrix.attributes[j],
        "crafted": adv,
        "displacement": moved,
        "tolerance": tolerance,
        "trajectory": traj,
        "centroid_passes": passes,
    });
    Ok(moved > tolerance)
}

fn attack_invert(config: &ExperimentConfig, bundle: &mut Bundle, report: &mut AttackReport) -> Result<bool> {
    let ds = victim_dataset(config)?;
    let t = stage_target(config, &ds, bundle, report)?;
    let sub = stage_substitute(config, &ds, &t, bundle, report)?;
    let a = &config.attack;
    let base = default_base(&ds, config)?;
    let x = ds.matrix.row(base).to_vec();
    let mask = attack_mask(config, &t, &x)?;
    let emb = labeled(&ds, &t.embedding)?;
    let verifier = Verifier {
        target: &t.projector,
        bbox: emb.bbox(),
    };
    let aims = seeded_aims(&verifier.bbox, a.aims, config.seed);
    let results = aims
        .iter()
        .map(|&aim| invert_to_target(&sub.projector, &verifier, aim, &x, &mask, &a.inversion))
        .collect::<Result<Vec<_>>>()?;
    let hits = results.iter().filter(|r| r.success == Some(true)).count();

    let refs: Vec<&AdversarialInput> = results.iter().collect();
    bundle.write("crafted.csv", crafted_csv(&ds, &refs)?.as_bytes())?;
    let mut plot = scatter(&ds, &emb, "targeted inversion");
    for r in &results {
        plot = plot
            .mark(r.aim.expect("inversion records its aim"), MarkerRole::Aim)
            .mark(r.achieved, MarkerRole::Adversarial);
    }
    bundle.svg("scatter.svg", &plot)?;

    let tagged: Vec<(&AdversarialInput, Option<usize>)> = results.iter().map(|r| (r, label_of(&ds, base))).collect();
    report.metrics.push(embedding_metrics(&ds, &emb, &tagged)?);
    report.details = json!({
        "base_row": base,
        "mask": mask.iter().map(|&j| ds.matrix.attributes[j].clone()).collect::<Vec<_>>(),
        "hits": hits,
        "aims": aims.len(),
        "tolerance": verifier.tolerance(),
        "inputs": results,
    });
    Ok(!aims.is_empty() && hits as f64 >= INVERSION_GOAL * aims.len() as f64)
}

fn attack_overwrite(config: &ExperimentConfig, bundle: &mut Bundle, report: &mut AttackReport) -> Result<bool> {
    let ds = victim_dataset(config)?;
    if ds.labels.is_none() {
        return Err(Error::Config("overwrite needs a labeled dataset".into()));
    }
    let t = stage_target(config, &ds, bundle, report)?;
    let sub = stage_substitute(config, &ds, &t, bundle, report)?;
    let a = &config.attack;
    let emb = labeled(&ds, &t.embedding)?;
    let set = emb.label_set();
    let victim = match &a.target_label {
        Some(l) => ds.label_id(l)?,
        None => set[0],
    };
    let pool_rows = match &a.base_label {
        Some(l) => ds.rows_with(Some(l))?,
        None => ds.rows_with(Some(&ds.label_name(*set.last().expect("labels present"))))?,
    };
    let targets = hull_targets(&emb.cluster(victim), a.targets, config.seed)?;
    let pool: Vec<Vec<f64>> = pool_rows.iter().map(|&i| ds.matrix.row(i).to_vec()).collect();
    let verifier = Verifier {
        target: &t.projector,
        bbox: emb.bbox(),
    };
    let mask = full_mask(ds.matrix.width());
    let result = overwrite_cluster(&sub.projector, &verifier, &targets, &pool, &mask, &a.inversion)?;

    let refs: Vec<&AdversarialInput> = result.inputs.iter().collect();
    bundle.write("crafted.csv", crafted_csv(&ds, &refs)?.as_bytes())?;
    let mut plot = scatter(&ds, &emb, "cluster overwrite");
    for (aim, r) in targets.iter().zip(&result.inputs) {
        plot = plot.mark(*aim, MarkerRole::Aim).mark(r.achieved, MarkerRole::Adversarial);
    }
    bundle.svg("scatter.svg", &plot)?;

    let tagged: Vec<(&AdversarialInput, Option<usize>)> = result
        .inputs
        .iter()
        .enumerate()
        .map(|(i, r)| (r, label_of(&ds, pool_rows[i % pool_rows.len()])))
        .collect();
    report.metrics.push(embedding_metrics(&ds, &emb, &tagged)?);
    report.details = json!({
        "victim_label": ds.label_name(victim),
        "pool_size": pool.len(),
        "targets": targets.len(),
        "coverage": result.coverage,
        "tolerance": verifier.tolerance(),
        "inputs": result.inputs,
    });
    Ok(result.coverage >= COVERAGE_GOAL)
}

fn attack_outlier(config: &ExperimentConfig, bundle: &mut Bundle, report: &mut AttackReport) -> Result<bool> {
    let ds = victim_dataset(config)?;
    let t = stage_target(config, &ds, bundle, report)?;
    let sub = stage_substitute(config, &ds, &t, bundle, report)?;
    let a = &config.attack;
    let base = default_base(&ds, config)?;
    let x = ds.matrix.row(base).to_vec();
    let mask = attack_mask(config, &t, &x)?;
    let emb = labeled(&ds, &t.embedding)?;
    let verifier = Verifier {
        target: &t.projector,
        bbox: emb.bbox(),
    };
    let result = outlier_scaling_attack(&sub.projector, &verifier, a.scale, &x, &mask, &a.inversion)?;

    bundle.write("crafted.csv", crafted_csv(&ds, &[&result.input])?.as_bytes())?;
    let plot = scatter(&ds, &emb, "outlier axis scaling")
        .mark(result.aim, MarkerRole::Aim)
        .mark(result.input.achieved, MarkerRole::Adversarial);
    bundle.svg("scatter.svg", &plot)?;
    report.metrics.push(embedding_metrics(&ds, &emb, &[(&result.input, label_of(&ds, base))])?);
    let success = result.success;
    report.details = json!({ "base_row": base, "outlier": result });
    Ok(success)
}

fn attack_blank(config: &ExperimentConfig, bundle: &mut Bundle, report: &mut AttackReport) -> Result<bool> {
    let trained = stage_recommender(config, bundle, report)?;
    let table = load_rec_table(&config.recommender.table)?;
    let before = recommend(&trained.model, &table, TOP_BARS)?;
    bundle.svg("scores_before.svg", &score_bars(&before, "recommendations before"))?;
    let outcome = blank_cell_attack(&trained.model, &table, config.attack.budget, config.seed)?;
    let edited = outcome.table.clone().expect("attack returns the edited table");
    let after = recommend(&trained.model, &edited, TOP_BARS)?;
    bundle.svg("scores_after.svg", &score_bars(&after, "recommendations after"))?;
    bundle.write("edited.csv", edited.to_csv_string()?.as_bytes())?;
    report.metrics.push(rec_metrics(&table, &edited, &trained.model)?);
    report.details = json!({ "table": table.name(), "outcome": outcome });
    Ok(true)
}

fn attack_shuffle(config: &ExperimentConfig, bundle: &mut Bundle, report: &mut AttackReport) -> Result<bool> {
    let trained = stage_recommender(config, bundle, report)?;
    let table = load_rec_table(&config.recommender.table)?;
    let before = recommend(&trained.model, &table, TOP_BARS)?;
    let grads = feature_gradients(&trained.model, &table, before.top())?;
    let ranking = grads.ranking();
    bundle.svg(
        "gradients.svg",
        &SvgPlot::new(PlotKind::Bar, "feature gradient magnitude")
            .labels("feature", "max |gradient|")
            .bind(Binding::Bars {
                name: "gradient".into(),
                labels: ranking.iter().map(|r| r.0.to_string()).collect(),
                values: ranking.iter().map(|r| r.1).collect(),
            }),
    )?;
    report.details = json!({
        "table": table.name(),
        "gradients": grads,
        "ranking": ranking,
        "index_rank": grads.rank_of(0),
        "index_feature": FEATURE_NAMES[0],
    });
    let cfg = ShuffleConfig {
        samples: config.attack.samples,
        index_rank_gate: config.attack.index_rank_gate,
        seed: config.seed,
        ..ShuffleConfig::default()
    };
    let outcome = column_shuffle_attack(&trained.model, &table, &cfg)?;
    let permuted = table.permute_columns(&outcome.permutation)?;
    bundle.write("permuted.csv", permuted.to_csv_string()?.as_bytes())?;
    bundle.svg("scores_before.svg", &score_bars(&before, "recommendations before"))?;
    let after = recommend(&trained.model, &permuted, TOP_BARS)?;
    bundle.svg("scores_after.svg", &score_bars(&after, "recommendations after"))?;
    report.metrics.push(rec_metrics(&table, &permuted, &trained.model)?);
    report.details["outcome"] = serde_json::to_value(&outcome)?;
    Ok(true)
}

fn attack_pipeline(config: &ExperimentConfig, bundle: &mut Bundle, report: &mut AttackReport) -> Result<bool> {
    let ds = victim_dataset(config)?;
    let t = stage_target(config, &ds, bundle, report)?;
    let dr_side = std::mem::take(&mut report.target_side);
    let sub = stage_substitute(config, &ds, &t, bundle, report)?;
    let trained = stage_recommender(config, bundle, report)?;
    let rec_side = std::mem::take(&mut report.target_side);
    report.target_side = json!({ "projector": dr_side, "recommender": rec_side });
    let cfg = PipelineConfig {
        grid: config.attack.grid.clone(),
        inversion: config.attack.inversion.clone(),
    };
    let outcome = pipeline_attack(&ds.matrix, &t.projector, &sub.projector, &trained.model, &cfg)?;
    bundle.write("crafted.csv", crafted_csv(&ds, &[&outcome.crafted])?.as_bytes())?;
    let emb = labeled(&ds, &t.embedding)?;
    let plot = scatter(&ds, &emb, "projected features with appended instance")
        .mark(outcome.candidate, MarkerRole::Aim)
        .mark(outcome.crafted.achieved, MarkerRole::Adversarial);
    bundle.svg("scatter.svg", &plot)?;
    let success = outcome.end_to_end_flip && outcome.within_tolerance;
    report.details = json!({ "outcome": outcome });
    Ok(success)
}

// ----------------------------------------------------------------------- run

fn execute(config: &ExperimentConfig, stage: Stage, bundle: &mut Bundle, report: &mut AttackReport) -> Result<bool> {
    match stage {
        Stage::TrainDr => {
            let ds = victim_dataset(config)?;
            stage_target(config, &ds, bundle, report)?;
            Ok(true)
        }
        Stage::FitSubstitute => {
            let ds = victim_dataset(config)?;
            let t = stage_target(config, &ds, bundle, report)?;
            let sub = stage_substitute(config, &ds, &t, bundle, report)?;
            Ok(sub.fidelity.mean <= SUBSTITUTE_GOAL)
        }
        Stage::TrainRec => {
            let trained = stage_recommender(config, bundle, report)?;
            let e = &trained.evaluation;
            Ok(e.chart_accuracy >= RECOMMENDER_GOAL && e.set_auc >= RECOMMENDER_GOAL)
        }
        Stage::Attack => match config.attack.kind {
            AttackKind::OneAttr => attack_one_attr(config, bundle, report),
            AttackKind::Invert => attack_invert(config, bundle, report),
            AttackKind::Overwrite => attack_overwrite(config, bundle, report),
            AttackKind::Outlier => attack_outlier(config, bundle, report),
            AttackKind::Blank => attack_blank(config, bundle, report),
            AttackKind::Shuffle => attack_shuffle(config, bundle, report),
            AttackKind::Pipeline => attack_pipeline(config, bundle, report),
        },
    }
}

/// Run one stage and leave `report.json`, artifacts and `manifest.json` in `out`.
///
/// Module errors end the run early but still produce a report and a
/// manifest of whatever was written; the exit code reflects the error.
pub fn run(config: &ExperimentConfig, stage: Stage, out: &Path) -> Result<RunOutcome> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut bundle = Bundle {
        dir: out.to_path_buf(),
        names: Vec::new(),
    };
    let dataset = match stage {
        Stage::TrainRec => config.recommender.table.clone(),
        Stage::Attack if matches!(config.attack.kind, AttackKind::Blank | AttackKind::Shuffle) => {
            config.recommender.table.clone()
        }
        _ => config.dataset.name.clone(),
    };
    let mut report = AttackReport {
        name: config.display_name(),
        stage,
        attack: (stage == Stage::Attack).then_some(config.attack.kind),
        dataset,
        seed: config.seed,
        success: false,
        error: None,
        target_side: Value::Null,
        substitute_side: Value::Null,
        metrics: Vec::new(),
        details: Value::Null,
        artifacts: Vec::new(),
    };
    let exit_code = match execute(config, stage, &mut bundle, &mut report) {
        Ok(true) => {
            report.success = true;
            EXIT_OK
        }
        Ok(false) => EXIT_ATTACK_FAILED,
        Err(e) => {
            report.error = Some(e.to_string());
            exit_code_for(&e)
        }
    };
    report.artifacts = bundle.names.clone();
    bundle.json("report.json", &report)?;
    write_manifest(out, &bundle.names)?;
    Ok(RunOutcome {
        report,
        exit_code,
        out_dir: out.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code_for(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code_for(&Error::NoFlippingPermutation), EXIT_ATTACK_FAILED);
        assert_eq!(exit_code_for(&Error::EndToEndMismatch), EXIT_ATTACK_FAILED);
        assert_eq!(exit_code_for(&Error::EmptyTable), EXIT_INTERNAL);
    }

    #[test]
    fn aims_start_at_the_corner_and_stay_inside() {
        let b = BBox {
            min: [-2.0, 1.0],
            max: [2.0, 3.0],
        };
        let aims = seeded_aims(&b, 10, 4);
        assert_eq!(aims.len(), 10);
        assert_eq!(aims[0], [-2.0 + 0.2, 1.0 + 0.1]);
        assert!(aims.iter().all(|&p| b.contains(p)));
        assert_eq!(aims, seeded_aims(&b, 10, 4));
    }

    #[test]
    fn hull_targets_fall_inside() {
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let t = hull_targets(&square, 30, 1).unwrap();
        assert_eq!(t.len(), 30);
        let hull = convex_hull(&square);
        assert!(t.iter().all(|&p| hull_contains(&hull, p)));
        assert!(matches!(hull_targets(&[[0.0, 0.0], [1.0, 1.0]], 3, 1), Err(Error::DegenerateData)));
    }

    #[test]
    fn labels_sort_numerically() {
        let t = DataTable::parse_csv("v,c\n1,10\n2,9\n3,10\n".as_bytes(), "t", &LoadOptions::default()).unwrap();
        let (ids, names) = labels_of(&t, "c").unwrap();
        assert_eq!(names, vec!["9", "10"]);
        assert_eq!(ids, vec![1, 0, 1]);
    }

    #[test]
    fn blobs_dataset_is_labeled() {
        let ds = load_dataset(
            &DatasetConfig {
                name: "blobs".into(),
                label: None,
            },
            3,
        )
        .unwrap();
        assert_eq!(ds.matrix.rows(), BLOB_POINTS);
        assert_eq!(ds.rows_with(Some("1")).unwrap().len(), BLOB_POINTS / BLOB_CLUSTERS);
        assert!(ds.label_id("7").is_err());
    }
}
