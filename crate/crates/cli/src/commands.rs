use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use irlplan::evaluation::{evaluate_planner, write_csv};
use irlplan::irl::{demo_accuracy, train_irl, IrlSample};
use irlplan::pipeline::PlanError;
use irlplan::prediction::{cmp_train, read_params, write_params, CmpSample};
use irlplan::scenario::{filter_for_irl, load_scenarios, save_scenarios, synthesize_scenarios, Template};
use irlplan::{Backend, CostWeights, Fusion, Planner, PredictorConfig, PredictorSource, Scenario};

use crate::args::{
    Cli, Command, EvaluateArgs, FusionKind, PlotArgs, PredictorArgs, PredictorKind, SynthArgs, TrainCmpArgs,
    TrainIrlArgs,
};
use crate::config::{pick, FileConfig};
use crate::error::Failure;
use crate::svg;

pub fn run(cli: Cli) -> Result<(), Failure> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synthesize(a) => synthesize(a, &file),
        Command::TrainCmp(a) => train_cmp(a, &file),
        Command::TrainIrl(a) => train_irl_cmd(a, &file),
        Command::Evaluate(a) => evaluate(a, &file),
        Command::Plot(a) => plot(a, &file),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Vec<Scenario>, Failure> {
    load_scenarios(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn loss_csv_path(out: &Path, flag: &Option<PathBuf>, file: &FileConfig) -> PathBuf {
    pick(flag, &file.loss_csv).unwrap_or_else(|| {
        let mut name = out.file_stem().unwrap_or_default().to_os_string();
        name.push(".loss.csv");
        out.with_file_name(name)
    })
}

fn write_loss_csv(path: &Path, history: &[(usize, f64, f64)]) -> Result<(), Failure> {
    let mut w = create(path)?;
    writeln!(w, "step,loss,lr")?;
    for (step, loss, lr) in history {
        writeln!(w, "{step},{loss},{lr}")?;
    }
    w.flush()?;
    Ok(())
}

fn synthesize(a: SynthArgs, file: &FileConfig) -> Result<(), Failure> {
    let template: Template = pick(&a.template, &file.template)
        .unwrap_or_else(|| "mixed".into())
        .parse()
        .map_err(Failure::usage)?;
    let count = FileConfig::required(&a.count, &file.count, "count")?;
    if count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    let out = FileConfig::required(&a.out, &file.out, "out")?;
    let seed = pick(&a.seed, &file.seed).unwrap_or(0);
    let scenarios = synthesize_scenarios(template, count, seed);
    save_scenarios(&out, &scenarios)?;
    println!("wrote {count} {template} scenarios to {}", out.display());
    Ok(())
}

fn fusion(kind: FusionKind) -> Fusion {
    match kind {
        FusionKind::Early => Fusion::Early,
        FusionKind::Late => Fusion::Late,
    }
}

fn base_predictor_config(file: &FileConfig) -> PredictorConfig {
    let mut cfg = PredictorConfig::default();
    if let Some(k) = file.num_modes {
        cfg.num_modes = k;
    }
    if let Some(n) = file.max_agents {
        cfg.max_agents = n;
    }
    if let Some(idm) = file.idm {
        cfg.idm = idm;
    }
    cfg
}

fn train_cmp(a: TrainCmpArgs, file: &FileConfig) -> Result<(), Failure> {
    let data = FileConfig::required(&a.data, &file.data, "data")?;
    let out = FileConfig::required(&a.out, &file.out, "out")?;
    let seed = pick(&a.seed, &file.seed).unwrap_or(0);
    let mut cfg = base_predictor_config(file);
    cfg.backend = Backend::Learned;
    cfg.fusion = fusion(pick(&a.fusion, &file.fusion).unwrap_or(FusionKind::Early));
    cfg.rng_seed = seed;
    if let Some(e) = file.embed_dim {
        cfg.embed_dim = e;
    }
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let mut train = file.cmp_train.clone().unwrap_or_default();
    if a.seed.is_some() || file.cmp_train.is_none() {
        train.seed = seed;
    }

    let scenarios = load(&data)?;
    let samples: Vec<CmpSample> =
        scenarios.iter().filter_map(|s| CmpSample::from_scenario(s, cfg.max_agents)).collect();
    if samples.is_empty() {
        return Err(Failure::data("no scenario has agents besides the AV"));
    }
    let (params, report) = cmp_train(&samples, &cfg, &train)?;
    let mut w = create(&out)?;
    write_params(&mut w, &params)?;
    w.flush()?;
    let loss_path = loss_csv_path(&out, &a.loss_csv, file);
    write_loss_csv(&loss_path, &report.history)?;
    println!(
        "trained on {} samples, {} steps: loss {:.4} -> {:.4}; params {}, loss history {}",
        samples.len(),
        report.history.len(),
        report.initial_loss,
        report.final_loss,
        out.display(),
        loss_path.display()
    );
    Ok(())
}

/// Predictor source, batch mode and the resolved kind.
fn build_source(p: &PredictorArgs, file: &FileConfig) -> Result<(PredictorSource, bool), Failure> {
    let kind = pick(&p.predictor, &file.predictor).unwrap_or(PredictorKind::Idm);
    let batch = if p.single {
        false
    } else if p.batch {
        true
    } else {
        file.batch.unwrap_or(true)
    };
    let mut cfg = base_predictor_config(file);
    let source = match kind {
        PredictorKind::Ctrv => {
            cfg.backend = Backend::Ctrv;
            PredictorSource::model(cfg)
        }
        PredictorKind::Idm => {
            cfg.backend = Backend::IdmReactive;
            PredictorSource::model(cfg)
        }
        PredictorKind::Oracle => PredictorSource::GroundTruth { num_modes: cfg.num_modes },
        PredictorKind::Learned => {
            let path = FileConfig::required(&p.params, &file.params, "params")?;
            let f = File::open(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            let params = read_params(std::io::BufReader::new(f))
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            cfg.backend = Backend::Learned;
            cfg.fusion = params.fusion;
            cfg.num_modes = params.num_modes;
            cfg.max_agents = params.max_agents;
            cfg.embed_dim = params.embed_dim;
            PredictorSource::Model { cfg, params: Some(params) }
        }
    };
    Ok((source, batch))
}

fn planner(p: &PredictorArgs, file: &FileConfig, weights: CostWeights) -> Result<Planner, Failure> {
    let (source, batch) = build_source(p, file)?;
    let mut planner = Planner::new(source, weights);
    planner.batch = batch;
    if let Some(f) = &file.features {
        planner.features = f.clone();
    }
    Ok(planner)
}

fn read_weights(path: &Path) -> Result<CostWeights, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    text.parse().map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn train_irl_cmd(a: TrainIrlArgs, file: &FileConfig) -> Result<(), Failure> {
    let data = FileConfig::required(&a.data, &file.data, "data")?;
    let out = FileConfig::required(&a.out, &file.out, "out")?;
    let planner = planner(&a.predictor, file, CostWeights::zeros())?;
    let mut cfg = file.irl_train.clone().unwrap_or_default();
    if let Some(seed) = pick(&a.seed, &file.seed) {
        if a.seed.is_some() || file.irl_train.is_none() {
            cfg.seed = seed;
        }
    }

    let loaded = load(&data)?;
    let total = loaded.len();
    let scenarios = filter_for_irl(loaded);
    let mut samples = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        match planner.evaluate_scene(s) {
            Ok(eval) => samples.push(eval.irl_sample(s)),
            Err(PlanError::Generation(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if samples.is_empty() {
        return Err(Failure::data(format!("no usable scenarios among {total}")));
    }
    let (w, report) = train_irl(&samples, &cfg)?;
    let mut f = create(&out)?;
    write!(f, "{w}")?;
    f.flush()?;
    let loss_path = loss_csv_path(&out, &a.loss_csv, file);
    write_loss_csv(&loss_path, &report.history)?;
    println!(
        "learned weights from {} of {total} scenarios; demo top-1 {:.1}%; weights {}, loss history {}",
        samples.len(),
        100.0 * demo_accuracy(&w, &samples as &[IrlSample]),
        out.display(),
        loss_path.display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs, file: &FileConfig) -> Result<(), Failure> {
    let data = FileConfig::required(&a.data, &file.data, "data")?;
    let out = FileConfig::required(&a.out, &file.out, "out")?;
    let weights = read_weights(&FileConfig::required(&a.weights, &file.weights, "weights")?)?;
    let planner = planner(&a.predictor, file, weights)?;
    let th = file.thresholds.unwrap_or_default();
    let scenarios = load(&data)?;
    let result = evaluate_planner(&scenarios, &planner, &th)?;
    write_csv(create(&out)?, &result.rows, &result.report, &th)?;
    let r = &result.report;
    println!(
        "{} scenarios ({} skipped): plan_min_fde {:.3} m, top3 {:.3}, speed intent {:.3}, lane intent {:.3}, min_ade {:.3} m, min_fde {:.3} m",
        r.scenario_count,
        result.skipped.len(),
        r.plan_min_fde,
        r.top3_accuracy,
        r.speed_intent_accuracy,
        r.lane_intent_accuracy,
        r.min_ade,
        r.min_fde
    );
    Ok(())
}

fn plot(a: PlotArgs, file: &FileConfig) -> Result<(), Failure> {
    let data = FileConfig::required(&a.data, &file.data, "data")?;
    let out = FileConfig::required(&a.out, &file.out, "out")?;
    let scenarios = load(&data)?;
    let scenario = scenarios
        .get(a.index)
        .ok_or_else(|| Failure::data(format!("{} has {} records, no index {}", data.display(), scenarios.len(), a.index)))?;
    let weights = match pick(&a.weights, &file.weights) {
        Some(p) => read_weights(&p)?,
        None => CostWeights::zeros(),
    };
    let mut layers = svg::Layers::default();
    if !(a.no_proposals && a.no_futures) {
        let planner = planner(&a.predictor, file, weights)?;
        match planner.plan(scenario) {
            Ok((eval, ranking)) => {
                if !a.no_futures {
                    layers.futures = eval.futures.get(ranking[0].0).cloned();
                }
                if !a.no_proposals {
                    layers.proposals = ranking.iter().map(|(i, _)| eval.proposals[*i].states.clone()).collect();
                }
            }
            Err(PlanError::Generation(e)) => eprintln!("warning: no proposals drawn: {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    let mut w = create(&out)?;
    svg::render(&mut w, scenario, &layers)?;
    w.flush()?;
    println!("wrote {}", out.display());
    Ok(())
}
