use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use mars_core::cars::{build_bpr_pairs, rank_msps, train_cars as fit_ranker, CarsConfig};
use mars_core::d2r::{build_features, estimate_response};
use mars_core::eval::{self, keys, MetricsReport, RankingCase};
use mars_core::io::{self, files};
use mars_core::sensor::{train_sensor as fit_sensor, SensorConfig};
use mars_core::synth::{follow_fraction, generate as synthesize, SynthConfig};
use mars_core::tensor::EventTensor;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::request::{self, Request};
use crate::{Failure, Outcome};

pub const CONFIG_ECHO: &str = "config.toml";
pub const MODEL: &str = "model.json";
pub const SENSOR_TRACE: &str = "trace.jsonl";
pub const CARS_PARAMS: &str = "cars.json";
pub const CARS_TRACE: &str = "cars_trace.json";
pub const METRICS: &str = "metrics.json";

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

/// Reads a TOML config, falling back to defaults when no file is given.
/// Keys the config type does not know are rejected rather than ignored.
fn load_config<T: Serialize + DeserializeOwned + Default>(
    path: Option<PathBuf>,
) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let raw: toml::Table =
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let cfg: T = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let known = toml::Table::try_from(&cfg).map_err(|e| Failure::Runtime(e.into()))?;
    if let Some(key) = unknown_key(&raw, &known, "") {
        return Err(usage(format!("{}: unknown key `{key}`", path.display())));
    }
    Ok(cfg)
}

fn unknown_key(raw: &toml::Table, known: &toml::Table, prefix: &str) -> Option<String> {
    for (k, v) in raw {
        let name = format!("{prefix}{k}");
        match (v, known.get(k)) {
            (_, None) => return Some(name),
            (toml::Value::Table(r), Some(toml::Value::Table(n))) => {
                if let Some(bad) = unknown_key(r, n, &format!("{name}.")) {
                    return Some(bad);
                }
            }
            _ => {}
        }
    }
    None
}

fn echo_config<T: Serialize>(dir: &Path, cfg: &T, force: bool) -> Outcome {
    let text = toml::to_string(cfg).map_err(|e| Failure::Runtime(e.into()))?;
    let path = io::output_path(dir, CONFIG_ECHO, force)?;
    fs::write(path, text).map_err(|e| Failure::Runtime(e.into()))
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(anyhow!("cannot create {}: {e}", dir.display())))
}

/// Checks every output name up front so a refused run leaves nothing behind.
fn claim_outputs(dir: &Path, names: &[&str], force: bool) -> Outcome {
    for name in names {
        io::output_path(dir, name, force)?;
    }
    Ok(())
}

pub fn generate(config: Option<PathBuf>, seed: Option<u64>, out: &Path, force: bool) -> Outcome {
    let mut cfg: SynthConfig = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    claim_outputs(out, &[files::GRAPH, files::DONATIONS, CONFIG_ECHO], force)?;
    let d = synthesize(&cfg)?;
    create_dir(out)?;
    io::write_dataset(out, &d)?;
    echo_config(out, &cfg, true)?;
    println!(
        "viewers {} channels {} slots {} | donations {} events {} friendships {} | parties {} ranking cases {} | follow fraction {:.3}",
        cfg.n_viewers,
        cfg.n_channels,
        cfg.n_slots,
        d.donations.nnz(),
        d.events.len(),
        d.graph.n_edges(),
        d.msps.len(),
        d.eval_cases.len(),
        follow_fraction(&d.donations, 1),
    );
    Ok(())
}

pub fn train_sensor(
    data: &Path,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: &Path,
    force: bool,
) -> Outcome {
    let mut cfg: SensorConfig = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    claim_outputs(out, &[MODEL, SENSOR_TRACE, CONFIG_ECHO], force)?;
    let d = io::read_sensor_data(data)?;
    let (model, report) = fit_sensor(&d, &cfg)?;
    create_dir(out)?;
    io::save_checkpoint(&out.join(MODEL), &model)?;
    let mut trace = Vec::new();
    for row in &report.trace {
        serde_json::to_writer(&mut trace, row).map_err(|e| Failure::Runtime(e.into()))?;
        trace.push(b'\n');
    }
    fs::write(out.join(SENSOR_TRACE), trace).map_err(|e| Failure::Runtime(e.into()))?;
    echo_config(out, &cfg, true)?;
    let first = report.trace.first().map_or(f64::NAN, |b| b.total);
    println!(
        "epochs {} | loss {first:.6} -> {:.6}",
        report.trace.len(),
        report.final_loss.total
    );
    Ok(())
}

/// Ranker config plus an optional latent width that must match the model.
#[derive(Debug, Default, Serialize, Deserialize)]
struct CarsRun {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<usize>,
    #[serde(flatten)]
    ranker: CarsConfig,
}

#[derive(Serialize)]
struct CarsTrace<'a> {
    trace: &'a [f64],
    final_loss: f64,
    pairs: usize,
}

pub fn train_cars(
    model: &Path,
    msps: &Path,
    donations: &Path,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: &Path,
    force: bool,
) -> Outcome {
    let mut cfg: CarsRun = load_config(config)?;
    if let Some(s) = seed {
        cfg.ranker.seed = s;
    }
    cfg.ranker.validate()?;
    claim_outputs(out, &[CARS_PARAMS, CARS_TRACE, CONFIG_ECHO], force)?;
    let m = io::load_checkpoint(model)?;
    if let Some(alpha) = cfg.alpha {
        if alpha != m.alpha() {
            return Err(usage(format!(
                "config alpha {alpha} differs from the checkpoint's {}",
                m.alpha()
            )));
        }
    }
    let parties = io::read_msps(msps)?;
    let td = io::read_tensor(donations)?;
    if td.dims() != m.dims() {
        return Err(usage(format!(
            "donations have dims {:?}, the checkpoint {:?}",
            td.dims(),
            m.dims()
        )));
    }
    let pairs = build_bpr_pairs(&td, &parties)?;
    let (params, report) = fit_ranker(&m, &parties, &pairs, &cfg.ranker)?;
    create_dir(out)?;
    io::save_cars_params(&out.join(CARS_PARAMS), &params)?;
    let trace = CarsTrace {
        trace: &report.trace,
        final_loss: report.final_loss,
        pairs: pairs.len(),
    };
    io::write_json(&out.join(CARS_TRACE), &trace)?;
    echo_config(out, &cfg, true)?;
    let first = report.trace.first().copied().unwrap_or(f64::NAN);
    println!(
        "pairs {} epochs {} | loss {first:.6} -> {:.6}",
        pairs.len(),
        report.trace.len(),
        report.final_loss
    );
    Ok(())
}

pub fn recommend(
    model: &Path,
    cars: Option<&Path>,
    request_path: &Path,
    donations: Option<&Path>,
    out: Option<&Path>,
    force: bool,
) -> Outcome {
    let m = io::load_checkpoint(model)?;
    let req: Request = io::read_json(request_path)?;
    let answer = match req {
        Request::Donation(p) => {
            let td = match donations {
                Some(path) => io::read_tensor(path)?,
                None => EventTensor::new(m.dims()),
            };
            request::answer_donation(&m, &td, p)?
        }
        Request::Msp(p) => {
            let path = cars.ok_or_else(|| usage("party requests need --cars"))?;
            let params = io::load_cars_params(path)?;
            request::answer_msp(&m, &params, p)?
        }
    };
    let text = serde_json::to_string_pretty(&answer).map_err(|e| Failure::Runtime(e.into()))?;
    match out {
        Some(path) => {
            if path.exists() && !force {
                return Err(usage(format!(
                    "{} exists; pass --force to overwrite",
                    path.display()
                )));
            }
            fs::write(path, text + "\n").map_err(|e| Failure::Runtime(e.into()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| Failure::Runtime(e.into()))
        }
    }
}

pub fn evaluate(
    data: &Path,
    model: &Path,
    cars: Option<&Path>,
    test_from: usize,
    out: &Path,
    force: bool,
) -> Outcome {
    claim_outputs(out, &[METRICS], force)?;
    let m = io::load_checkpoint(model)?;
    let d = io::read_sensor_data(data)?;
    if d.dims() != m.dims() {
        return Err(usage(format!(
            "dataset has dims {:?}, the checkpoint {:?}",
            d.dims(),
            m.dims()
        )));
    }
    let mut metrics = MetricsReport::new();
    let recon = eval::reconstruction_report(&m, &d.donations, &d.responses)?;
    metrics.insert(keys::RECON_DONATION.into(), recon.donation_loss);
    metrics.insert(keys::RECON_RESPONSE.into(), recon.response_loss);

    let (mut predicted, mut actual) = (Vec::new(), Vec::new());
    for e in d.events.iter().filter(|e| e.slot >= test_from) {
        let x = build_features(
            &m,
            &d.donations,
            e.viewer,
            e.channel,
            e.slot,
            e.amount,
            &e.message,
            e.fanlist_min,
            m.window,
        )?;
        predicted.push(estimate_response(&m.theta, &x)?);
        actual.push(d.responses.get((e.viewer, e.channel, e.slot)));
    }
    if !predicted.is_empty() {
        metrics.insert(keys::RMSE.into(), eval::rmse(&predicted, &actual)?);
    }

    if let Some(path) = cars {
        let params = io::load_cars_params(path)?;
        let cases_path = data.join(files::EVAL_CASES);
        if !cases_path.exists() {
            return Err(usage(format!(
                "ranking metrics need {}",
                cases_path.display()
            )));
        }
        let mut cases = Vec::new();
        for c in io::read_eval_cases(&cases_path)? {
            let ranked = rank_msps(&params, &m, c.viewer, &c.candidates)?
                .into_iter()
                .map(|(i, _)| i)
                .collect();
            cases.push(RankingCase {
                ranked,
                relevant: vec![c.relevant],
            });
        }
        for (key, k) in [(keys::HR2, 2), (keys::HR4, 4)] {
            metrics.insert(key.into(), eval::hit_ratio_at_k(&cases, k)?);
        }
        for (key, k) in [(keys::MAP2, 2), (keys::MAP4, 4)] {
            metrics.insert(key.into(), eval::map_at_k(&cases, k)?);
        }
    }
    create_dir(out)?;
    io::write_json(&out.join(METRICS), &metrics)?;
    let text = serde_json::to_string_pretty(&metrics).map_err(|e| Failure::Runtime(e.into()))?;
    println!("{text}");
    Ok(())
}
