use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mixw2::data::{
    generate_example1, generate_multilabel, load_csv, normalize_features, train_test_split, CsvSchema, Dataset,
    LabelMap, NormStats,
};
use mixw2::dynamics::{simulate as run_sim, SimConfig, ToggleModel, ToggleModelSpec, TrajectoryBundle};
use mixw2::eval::{
    classification_accuracy, example1_grid, h_bound, r_squared, rejection_rate, scaled_pred_variance,
};
use mixw2::metric::{default_lambda, MixedMetricConfig};
use mixw2::rng::substream;
use mixw2::snn::{SnnArchitecture, SnnParams};
use mixw2::trainer::{temporal_metric, train as run_train, train_temporal, TemporalConfig, TrainingConfig};
use mixw2::transport::{generalized_w2_sq, EmpiricalMeasure, SizePolicy};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{
    bad, merge, read_json, resolve_preset, DistanceConfig, Encoding, EvalConfig, GenerateConfig, Preset,
    SimulateConfig, TrainConfig,
};
use crate::{Common, DistanceArgs, EvalArgs, GenerateArgs, SimulateArgs, TrainArgs};

/// Seed of the named stage derived from the master seed.
fn stage_seed(master: u64, stage: &str) -> u64 {
    substream(master, stage).next_u64()
}

fn file_config(common: &Common) -> Result<Option<Value>> {
    common.config.as_deref().map(read_json).transpose()
}

fn required_out(common: &Common) -> Result<&Path> {
    common.out.as_deref().ok_or_else(|| bad("--out is required"))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[derive(Debug, Serialize, Deserialize)]
struct FileManifest<C> {
    version: String,
    command: String,
    config: C,
    rows: usize,
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let file = file_config(&a.common)?;
    let preset = resolve_preset(a.preset, file.as_ref(), None)?;
    let mut cfg = merge(&GenerateConfig::preset(preset), file)?;
    cfg.preset = preset;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.sigma {
        cfg.sigma = s;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    let out = required_out(&a.common)?;
    let mut rng = substream(cfg.seed, "generate");
    let rows = match preset {
        Preset::Example1 => {
            let ds = generate_example1::<f64, _>(cfg.n, cfg.sigma, &mut rng)?;
            ds.write_csv(out)?;
            ds.len()
        }
        Preset::Multilabel => {
            let data = generate_multilabel(cfg.n, cfg.input_dim, cfg.output_dim, cfg.avg_active, &mut rng)?;
            let ds: Dataset<f64> = match cfg.encoding {
                Encoding::Encoded => data.encoded()?,
                Encoding::Multidim => data.multidim()?,
            };
            ds.write_csv(out)?;
            ds.len()
        }
        Preset::Toggle => {
            let sim = SimConfig {
                n_traj: cfg.n,
                dt: cfg.dt,
                steps: cfg.steps,
                substeps: cfg.substeps,
            };
            let bundle = run_sim(&cfg.params, &sim, stage_seed(cfg.seed, "sim"))?;
            bundle.write_csv(out)?;
            bundle.len() * (bundle.steps() + 1)
        }
        Preset::Abalone => return Err(bad("the abalone preset reads a CSV file; nothing to generate")),
    };
    write_json(
        &sidecar(out),
        &FileManifest {
            version: env!("CARGO_PKG_VERSION").into(),
            command: "generate".into(),
            config: &cfg,
            rows,
        },
    )?;
    eprintln!("wrote {rows} rows to {}", out.display());
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let file = file_config(&a.common)?;
    let mut cfg = merge(&SimulateConfig::default(), file)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n {
        cfg.n_traj = n;
    }
    let out = required_out(&a.common)?;
    let sim = SimConfig {
        n_traj: cfg.n_traj,
        dt: cfg.dt,
        steps: cfg.steps,
        substeps: cfg.substeps,
    };
    let bundle = run_sim(&cfg.params, &sim, stage_seed(cfg.seed, "sim"))?;
    bundle.write_csv(out)?;
    let rows = bundle.len() * (bundle.steps() + 1);
    write_json(
        &sidecar(out),
        &FileManifest {
            version: env!("CARGO_PKG_VERSION").into(),
            command: "simulate".into(),
            config: &cfg,
            rows,
        },
    )?;
    eprintln!("wrote {} trajectories to {}", bundle.len(), out.display());
    Ok(())
}

/// Everything `eval` needs to rebuild the model and its inputs.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    version: String,
    config: TrainConfig,
    train_seed: u64,
    schema: Option<CsvSchema>,
    labels: Vec<LabelMap>,
    lower: i64,
    upper: i64,
    lambda: f64,
    norm: Option<NormStats>,
    n_train: usize,
    n_test: usize,
    epochs_run: usize,
    aborted: Option<String>,
}

fn write_loss(dir: &Path, history: &[f64]) -> Result<()> {
    let mut s = String::from("epoch,value\n");
    for (e, v) in history.iter().enumerate() {
        writeln!(s, "{e},{v}")?;
    }
    fs::write(dir.join("loss.csv"), s)?;
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let file = file_config(&a.common)?;
    let preset = resolve_preset(a.preset, file.as_ref(), None)?;
    let mut cfg = merge(&TrainConfig::preset(preset), file)?;
    cfg.preset = preset;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(p) = &a.data {
        cfg.data = Some(p.clone());
    }
    if let Some(v) = a.delta {
        cfg.delta = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.c {
        cfg.c = v;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = Some(v);
    }
    if let Some(v) = a.n {
        cfg.batch_size = v;
    }
    let data = cfg.data.clone().ok_or_else(|| bad("no training data (use --data or a config key)"))?;
    let dir = required_out(&a.common)?.to_path_buf();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config.json"), &cfg)?;
    let train_seed = stage_seed(cfg.seed, "train");
    if preset == Preset::Toggle {
        return train_toggle(&cfg, &data, &dir, train_seed);
    }

    let schema = cfg.schema.clone().ok_or_else(|| bad("schema is required"))?;
    let full = load_csv::<f64>(&data, &schema, None)?;
    let (train_ds, test_ds) = match cfg.train_frac {
        Some(f) => {
            let (tr, te) = train_test_split(&full, f, &mut substream(cfg.seed, "split"))?;
            te.write_csv(dir.join("test.csv"))?;
            (tr, Some(te))
        }
        None => (full, None),
    };
    let (train_ds, norm) = if cfg.normalize {
        let (tr, _, stats) = normalize_features(&train_ds, &train_ds)?;
        (tr, Some(stats))
    } else {
        (train_ds, None)
    };
    let arch = SnnArchitecture {
        input_dim: train_ds.input_dim(),
        output_dim: train_ds.d(),
        hidden_layers: cfg.hidden_layers,
        width: cfg.width,
        activation: cfg.activation,
        residual: cfg.residual,
    };
    let tcfg = TrainingConfig {
        delta: cfg.delta,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        epoch_update: cfg.epoch_update,
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        lambda: cfg.lambda,
        c: cfg.c,
        init_std: cfg.init_std,
        seed: train_seed,
    };
    tcfg.validate(train_ds.len()).map_err(|e| bad(e.to_string()))?;
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => default_lambda(&train_ds.y)?,
    };
    let outcome = run_train(&train_ds, arch, &tcfg, |e, v| {
        if e % 100 == 0 {
            eprintln!("epoch {e} loss {v:.6}");
        }
    })?;
    write_loss(&dir, &outcome.history)?;
    write_json(&dir.join("checkpoint.json"), &outcome.params)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        train_seed,
        schema: Some(schema),
        labels: train_ds.labels.clone(),
        lower: train_ds.lower,
        upper: train_ds.upper,
        lambda,
        norm,
        n_train: train_ds.len(),
        n_test: test_ds.as_ref().map_or(0, Dataset::len),
        epochs_run: outcome.history.len(),
        aborted: outcome.aborted.as_ref().map(ToString::to_string),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    match outcome.aborted {
        Some(e) => Err(e).context("training aborted"),
        None => Ok(()),
    }
}

fn train_toggle(cfg: &TrainConfig, data: &Path, dir: &Path, train_seed: u64) -> Result<()> {
    let bundle = TrajectoryBundle::read_csv(data)?;
    let tcfg = TemporalConfig {
        delta: cfg.delta,
        batch_size: cfg.batch_size.min(bundle.len()),
        epochs: cfg.epochs,
        epoch_update: cfg.epoch_update,
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        lambda: cfg.lambda,
        c: cfg.c,
        init_std: cfg.init_std,
        seed: train_seed,
    };
    let mut spec = ToggleModelSpec::default();
    spec.snn2.hidden_layers = cfg.hidden_layers;
    spec.snn2.width = cfg.width;
    spec.snn2.activation = cfg.activation;
    spec.snn2.residual = cfg.residual;
    let model = ToggleModel::<f64>::init(&spec, &mut substream(train_seed, "init"), cfg.init_std)?;
    let metric = temporal_metric::<f64>(&bundle, cfg.lambda, cfg.c)?;
    let outcome = train_temporal(model, &bundle, &tcfg, |e, v| {
        if e % 50 == 0 {
            eprintln!("epoch {e} loss {v:.6}");
        }
    })?;
    write_loss(dir, &outcome.history)?;
    write_json(&dir.join("checkpoint.json"), &outcome.params)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        train_seed,
        schema: None,
        labels: vec![LabelMap::Integer; 2],
        lower: 0,
        upper: 1,
        lambda: metric.lambda,
        norm: None,
        n_train: bundle.len(),
        n_test: 0,
        epochs_run: outcome.history.len(),
        aborted: outcome.aborted.as_ref().map(ToString::to_string),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    match outcome.aborted {
        Some(e) => Err(e).context("training aborted"),
        None => Ok(()),
    }
}

fn read_run(dir: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(dir.join("manifest.json"))
        .with_context(|| format!("reading {}", dir.join("manifest.json").display()))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("manifest.json: {e}")))
}

fn read_checkpoint<M: for<'de> Deserialize<'de>>(dir: &Path) -> Result<M> {
    let text = fs::read_to_string(dir.join("checkpoint.json"))
        .with_context(|| format!("reading {}", dir.join("checkpoint.json").display()))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("checkpoint.json: {e}")))
}

/// Rows of `metric,name,value`.
#[derive(Default)]
struct Metrics {
    rows: Vec<(String, String, f64)>,
}

impl Metrics {
    fn push(&mut self, metric: &str, name: impl Into<String>, value: f64) {
        self.rows.push((metric.into(), name.into(), value));
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut s = String::from("metric,name,value\n");
        for (m, n, v) in &self.rows {
            writeln!(s, "{m},{n},{v}")?;
        }
        fs::write(dir.join("metrics.csv"), s)?;
        let summary: serde_json::Map<String, Value> = self
            .rows
            .iter()
            .filter(|(_, n, _)| n.is_empty())
            .map(|(m, _, v)| (m.clone(), Value::from(*v)))
            .collect();
        write_json(&dir.join("summary.json"), &summary)
    }
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let file = file_config(&a.common)?;
    let mut cfg = merge(&EvalConfig::default(), file)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(p) = &a.data {
        cfg.data = Some(p.clone());
    }
    if let Some(s) = a.sigma {
        cfg.sigma = s;
    }
    if let Some(d) = a.draws {
        cfg.draws = d;
    }
    let run = read_run(&a.run)?;
    let out = a.common.out.clone().unwrap_or_else(|| a.run.join("eval"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("config.json"), &cfg)?;
    let seed = stage_seed(cfg.seed, "eval");
    let mut m = Metrics::default();
    match run.config.preset {
        Preset::Toggle => eval_toggle(&run, &cfg, &a.run, seed, &mut m)?,
        Preset::Example1 => {
            let model: SnnParams<f64> = read_checkpoint(&a.run)?;
            let metric = MixedMetricConfig::new(0, 1, run.lambda, run.lower, run.upper)?.with_c(run.config.c)?;
            let xs = example1_grid();
            let grid: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
            let sigma = cfg.sigma;
            let report = rejection_rate(
                &model,
                &grid,
                |i, rng| mixw2::data::example1_sample(xs[i], sigma, rng),
                &metric,
                0,
                cfg.draws,
                cfg.permutations,
                seed,
            )?;
            m.push("rejection_rate", "", report.rate);
            for (x, p) in xs.iter().zip(&report.p_values) {
                m.push("p_value", format!("x={x:.2}"), *p);
            }
        }
        Preset::Multilabel | Preset::Abalone => eval_static(&run, &cfg, &a.run, seed, &mut m)?,
    }
    m.write(&out)?;
    for (metric, name, v) in m.rows.iter().filter(|r| r.1.is_empty()) {
        println!("{metric}{name} {v}");
    }
    Ok(())
}

fn eval_static(run: &RunManifest, cfg: &EvalConfig, dir: &Path, seed: u64, m: &mut Metrics) -> Result<()> {
    let model: SnnParams<f64> = read_checkpoint(dir)?;
    let schema = run.schema.as_ref().ok_or_else(|| bad("manifest has no schema"))?;
    let path = cfg.data.clone().unwrap_or_else(|| dir.join("test.csv"));
    let mut test = load_csv::<f64>(&path, schema, Some(&run.labels))?;
    if let Some(n) = &run.norm {
        test.x = test.x.iter().map(|r| n.apply(r)).collect();
    }
    let metric =
        MixedMetricConfig::new(test.d1(), test.d(), run.lambda, run.lower, run.upper)?.with_c(run.config.c)?;
    if test.d1() > 0 {
        let draws = cfg.draws.max(2);
        m.push("r_squared", "", r_squared(&model, &test, draws, seed)?);
        m.push("scaled_variance", "", scaled_pred_variance(&model, &test, draws, seed)?);
    }
    if metric.n_cat() > 0 {
        let acc = classification_accuracy(&model, &test, &metric, cfg.draws, seed)?;
        m.push("accuracy", "", acc.joint);
        for (k, v) in acc.per_slot.iter().enumerate() {
            m.push("accuracy", schema.categorical[k].clone(), *v);
        }
    }
    m.push("h_bound", "", h_bound(run.n_train, test.d())?);
    Ok(())
}

fn eval_toggle(run: &RunManifest, cfg: &EvalConfig, dir: &Path, seed: u64, m: &mut Metrics) -> Result<()> {
    let model: ToggleModel<f64> = read_checkpoint(dir)?;
    let path = cfg
        .data
        .clone()
        .or_else(|| run.config.data.clone())
        .ok_or_else(|| bad("no reference trajectories"))?;
    let truth = TrajectoryBundle::read_csv(&path)?;
    let pred = model.simulate_from(&truth, seed)?;
    let metric = MixedMetricConfig::new(6, 8, run.lambda, 0, 1)?.with_c(run.config.c)?;
    let (ft, fp) = (truth.activated_fraction(), pred.activated_fraction());
    for (j, t) in truth.times().iter().enumerate() {
        for g in 0..2 {
            m.push("activated_truth", format!("g{}@t={t:.1}", g + 1), ft[j][g]);
            m.push("activated_model", format!("g{}@t={t:.1}", g + 1), fp[j][g]);
        }
        let sample = |b: &TrajectoryBundle| -> Result<EmpiricalMeasure<f64>> {
            Ok(EmpiricalMeasure::new(
                b.trajectories
                    .iter()
                    .map(|tr| {
                        mixw2::metric::MixedSample::new(
                            tr[j].levels.to_vec(),
                            tr[j].genes.iter().map(|&g| i64::from(g)).collect(),
                        )
                    })
                    .collect(),
            )?)
        };
        let w = generalized_w2_sq(&sample(&truth)?, &sample(&pred)?, &metric, SizePolicy::Strict)?;
        m.push("w2_sq", format!("t={t:.1}"), w.value);
    }
    let last = truth.steps();
    let gap = (0..2).map(|g| (ft[last][g] - fp[last][g]).abs()).fold(0.0, f64::max);
    m.push("activated_gap_final", "", gap);
    Ok(())
}

fn header(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text.lines().next().ok_or(mixw2::Error::Empty("sample file"))?;
    Ok(first.split(',').map(|s| s.trim().to_string()).collect())
}

pub fn distance(a: &DistanceArgs) -> Result<()> {
    let file = a.config.as_deref().map(read_json).transpose()?;
    let mut cfg = merge(&DistanceConfig::default(), file)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = &a.categorical {
        cfg.categorical = c.clone();
    }
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(c) = a.c {
        cfg.c = c;
    }
    let cols = header(&a.a)?;
    if header(&a.b)? != cols {
        return Err(mixw2::Error::InvalidArgument("sample files have different headers".into()).into());
    }
    if let Some(c) = cfg.categorical.iter().find(|c| !cols.contains(c)) {
        return Err(bad(format!("unknown categorical column {c:?}")));
    }
    let cont: Vec<&str> = cols
        .iter()
        .filter(|c| !cfg.categorical.contains(c))
        .map(String::as_str)
        .collect();
    let cat: Vec<&str> = cfg.categorical.iter().map(String::as_str).collect();
    let schema = CsvSchema::new(&[], &cont, &cat);
    let da = load_csv::<f64>(&a.a, &schema, None)?;
    let db = load_csv::<f64>(&a.b, &schema, Some(&da.labels))?;
    let metric = MixedMetricConfig::new(
        schema.d1(),
        schema.d(),
        cfg.lambda,
        da.lower.min(db.lower),
        da.upper.max(db.upper),
    )?
    .with_c(cfg.c)?;
    let w = generalized_w2_sq(
        &EmpiricalMeasure::new(da.y)?,
        &EmpiricalMeasure::new(db.y)?,
        &metric,
        SizePolicy::Subsample(stage_seed(cfg.seed, "distance")),
    )?;
    println!("{}", w.value);
    Ok(())
}
