//! On-disk formats.
//!
//! * event tensors: JSON lines, a `{"dims": ...}` header then one
//!   `{"v", "c", "t", "x"}` record per nonzero cell;
//! * donation events: JSON lines `{"v", "c", "t", "amount", "emb", "sent",
//!   "emo", "fanmin"}`, feature fields optional;
//! * viewer graph, streamer relations, parties, ranking cases: JSON;
//! * model checkpoints and ranking parameters: versioned JSON with row-major
//!   flattened arrays. Floats are written in shortest round-trip form, so a
//!   load returns bit-identical values.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cars::{CarsParams, Msp};
use crate::d2r::{DonationEvent, FeatureSchema, MessageFeatures, EMOTION_WIDTH};
use crate::error::{MarsError, Result};
use crate::graph::{SignedStreamerMatrix, ViewerGraph};
use crate::sensor::SensorData;
use crate::sensor::SensorModel;
use crate::synth::{EvalCase, Planted, SynthData};
use crate::tensor::{Dims, EventTensor, FactorSet};

pub const CHECKPOINT_FORMAT: &str = "mars-sensor-checkpoint";
pub const CARS_FORMAT: &str = "mars-cars-params";
pub const FORMAT_VERSION: u32 = 1;

fn format_err(path: &Path, reason: impl Into<String>) -> MarsError {
    MarsError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn at_line(path: &Path, line: usize, e: impl std::fmt::Display) -> MarsError {
    format_err(path, format!("line {line}: {e}"))
}

/// An io error that names the file it came from.
fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MarsError + '_ {
    move |e| {
        MarsError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).map_err(io_err(path))?,
    ))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Non-empty lines with their 1-based numbers.
fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let r = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    dims: Dims,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    v: usize,
    c: usize,
    t: usize,
    x: f64,
}

pub fn write_tensor(path: &Path, t: &EventTensor) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, &TensorHeader { dims: t.dims() })?;
    w.write_all(b"\n")?;
    for ((v, c, s), x) in t.iter() {
        serde_json::to_writer(&mut w, &TensorRecord { v, c, t: s, x })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<EventTensor> {
    let lines = lines(path)?;
    let (first, rest) = lines
        .split_first()
        .ok_or_else(|| format_err(path, "empty file, expected a dims header"))?;
    let header: TensorHeader =
        serde_json::from_str(&first.1).map_err(|e| at_line(path, first.0, e))?;
    let mut t = EventTensor::new(header.dims);
    for (n, line) in rest {
        let r: TensorRecord = serde_json::from_str(line).map_err(|e| at_line(path, *n, e))?;
        t.set((r.v, r.c, r.t), r.x)
            .map_err(|e| at_line(path, *n, e))?;
    }
    Ok(t)
}

#[derive(Serialize, Deserialize)]
struct EventRecord {
    v: usize,
    c: usize,
    t: usize,
    amount: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emb: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fanmin: Option<f64>,
}

pub fn write_events(path: &Path, events: &[DonationEvent]) -> Result<()> {
    let mut w = create(path)?;
    for e in events {
        let r = EventRecord {
            v: e.viewer,
            c: e.channel,
            t: e.slot,
            amount: e.amount,
            emb: Some(e.message.embedding.clone()),
            sent: Some(e.message.sentiment),
            emo: Some(e.message.emotion.clone()),
            fanmin: Some(e.fanlist_min),
        };
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Missing feature fields are filled with zeros of the schema's widths.
pub fn read_events(path: &Path, schema: FeatureSchema) -> Result<Vec<DonationEvent>> {
    let mut out = Vec::new();
    for (n, line) in lines(path)? {
        let r: EventRecord = serde_json::from_str(&line).map_err(|e| at_line(path, n, e))?;
        let message = MessageFeatures {
            embedding: r.emb.unwrap_or_else(|| vec![0.0; schema.emb_width]),
            sentiment: r.sent.unwrap_or(0.0),
            emotion: r.emo.unwrap_or_else(|| vec![0.0; EMOTION_WIDTH]),
        };
        message.validate(schema).map_err(|e| at_line(path, n, e))?;
        out.push(DonationEvent {
            viewer: r.v,
            channel: r.c,
            slot: r.t,
            amount: r.amount,
            message,
            fanlist_min: r.fanmin.unwrap_or(0.0),
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n_viewers: usize,
    edges: Vec<(usize, usize)>,
}

pub fn write_graph(path: &Path, g: &ViewerGraph) -> Result<()> {
    write_json(
        path,
        &GraphFile {
            n_viewers: g.n_viewers(),
            edges: g.edges().collect(),
        },
    )
}

pub fn read_graph(path: &Path) -> Result<ViewerGraph> {
    let f: GraphFile = read_json(path)?;
    ViewerGraph::from_edges(f.n_viewers, f.edges).map_err(|e| format_err(path, e.to_string()))
}

/// Relations are stored as a full matrix of `-1 / 0 / 1` rows.
pub fn write_relations(path: &Path, w: &SignedStreamerMatrix) -> Result<()> {
    let n = w.n_channels();
    let rows: Vec<Vec<i8>> = (0..n)
        .map(|i| (0..n).map(|j| w.get(i, j)).collect())
        .collect();
    write_json(path, &rows)
}

pub fn read_relations(path: &Path) -> Result<SignedStreamerMatrix> {
    let rows: Vec<Vec<f64>> = read_json(path)?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(format_err(path, "relation matrix must be square"));
    }
    let m = Array2::from_shape_vec((n, n), rows.into_iter().flatten().collect()).expect("square");
    SignedStreamerMatrix::from_matrix(m).map_err(|e| format_err(path, e.to_string()))
}

pub fn read_msps(path: &Path) -> Result<Vec<Msp>> {
    read_json(path)
}

/// File names inside a dataset directory.
pub mod files {
    pub const GRAPH: &str = "graph.json";
    pub const RELATIONS: &str = "relations.json";
    pub const DONATIONS: &str = "donations.jsonl";
    pub const RESPONSES: &str = "responses.jsonl";
    pub const EVENTS: &str = "events.jsonl";
    pub const MSPS: &str = "msps.json";
    pub const EVAL_CASES: &str = "eval_cases.json";
    pub const PLANTED: &str = "planted.json";
    pub const SCHEMA: &str = "schema.json";
}

/// Writes every part of a generated dataset into `dir` (created if needed).
pub fn write_dataset(dir: &Path, d: &SynthData) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_graph(&dir.join(files::GRAPH), &d.graph)?;
    write_relations(&dir.join(files::RELATIONS), &d.relations)?;
    write_tensor(&dir.join(files::DONATIONS), &d.donations)?;
    write_tensor(&dir.join(files::RESPONSES), &d.responses)?;
    write_events(&dir.join(files::EVENTS), &d.events)?;
    write_json(&dir.join(files::MSPS), &d.msps)?;
    write_json(&dir.join(files::EVAL_CASES), &d.eval_cases)?;
    write_json(&dir.join(files::PLANTED), &d.planted)?;
    write_json(&dir.join(files::SCHEMA), &d.schema())?;
    Ok(())
}

/// The SENSOR inputs of a dataset directory. A missing event file means no
/// message features (all zeros); a missing schema file means the default.
pub fn read_sensor_data(dir: &Path) -> Result<SensorData> {
    let schema_path = dir.join(files::SCHEMA);
    let schema = if schema_path.exists() {
        read_json(&schema_path)?
    } else {
        FeatureSchema::default()
    };
    let events_path = dir.join(files::EVENTS);
    let events = if events_path.exists() {
        read_events(&events_path, schema)?
    } else {
        Vec::new()
    };
    let data = SensorData {
        donations: read_tensor(&dir.join(files::DONATIONS))?,
        responses: read_tensor(&dir.join(files::RESPONSES))?,
        graph: read_graph(&dir.join(files::GRAPH))?,
        relations: read_relations(&dir.join(files::RELATIONS))?,
        events,
        schema,
    };
    data.validate()?;
    Ok(data)
}

pub fn read_eval_cases(path: &Path) -> Result<Vec<EvalCase>> {
    read_json(path)
}

pub fn read_planted(path: &Path) -> Result<Planted> {
    read_json(path)
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    dims: Dims,
    alpha: usize,
    emb_width: usize,
    window: usize,
    epsilon: f64,
    decay: f64,
    viewer: Vec<f64>,
    channel: Vec<f64>,
    slot: Vec<f64>,
    core_donation: Vec<f64>,
    core_response: Vec<f64>,
    influence: Vec<f64>,
    theta: Vec<f64>,
}

fn check_finite(path: &Path, values: &[f64]) -> Result<()> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err(format_err(path, "refusing to write non-finite parameters"));
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, m: &SensorModel) -> Result<()> {
    m.validate()?;
    check_finite(path, &m.to_flat())?;
    let f = &m.factors;
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: FORMAT_VERSION,
        dims: m.dims(),
        alpha: m.alpha(),
        emb_width: m.emb_width,
        window: m.window,
        epsilon: m.epsilon,
        decay: m.decay,
        viewer: f.viewer.iter().copied().collect(),
        channel: f.channel.iter().copied().collect(),
        slot: f.slot.iter().copied().collect(),
        core_donation: f.core_donation.iter().copied().collect(),
        core_response: f.core_response.iter().copied().collect(),
        influence: m.influence.iter().copied().collect(),
        theta: m.theta.to_vec(),
    };
    write_json(path, &ck)
}

pub fn load_checkpoint(path: &Path) -> Result<SensorModel> {
    let ck: Checkpoint = read_json(path)?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != FORMAT_VERSION {
        return Err(format_err(
            path,
            format!(
                "expected {CHECKPOINT_FORMAT} version {FORMAT_VERSION}, found {} version {}",
                ck.format, ck.version
            ),
        ));
    }
    let (nv, nc, nt) = ck.dims.shape();
    let a = ck.alpha;
    let bad = |what: &str| format_err(path, format!("{what} has the wrong length"));
    let m = SensorModel {
        factors: FactorSet {
            viewer: Array2::from_shape_vec((nv, a), ck.viewer).map_err(|_| bad("viewer"))?,
            channel: Array2::from_shape_vec((nc, a), ck.channel).map_err(|_| bad("channel"))?,
            slot: Array2::from_shape_vec((nt, a), ck.slot).map_err(|_| bad("slot"))?,
            core_donation: Array3::from_shape_vec((a, a, a), ck.core_donation)
                .map_err(|_| bad("core_donation"))?,
            core_response: Array3::from_shape_vec((a, a, a), ck.core_response)
                .map_err(|_| bad("core_response"))?,
        },
        influence: Array2::from_shape_vec((nv, nv), ck.influence).map_err(|_| bad("influence"))?,
        decay: ck.decay,
        theta: Array1::from(ck.theta),
        epsilon: ck.epsilon,
        window: ck.window,
        emb_width: ck.emb_width,
    };
    m.validate().map_err(|e| format_err(path, e.to_string()))?;
    Ok(m)
}

#[derive(Serialize, Deserialize)]
struct CarsFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    params: CarsParams,
}

pub fn save_cars_params(path: &Path, p: &CarsParams) -> Result<()> {
    p.validate()?;
    write_json(
        path,
        &CarsFile {
            format: CARS_FORMAT.into(),
            version: FORMAT_VERSION,
            params: p.clone(),
        },
    )
}

pub fn load_cars_params(path: &Path) -> Result<CarsParams> {
    let f: CarsFile = read_json(path)?;
    if f.format != CARS_FORMAT || f.version != FORMAT_VERSION {
        return Err(format_err(
            path,
            format!("expected {CARS_FORMAT} version {FORMAT_VERSION}"),
        ));
    }
    f.params
        .validate()
        .map_err(|e| format_err(path, e.to_string()))?;
    Ok(f.params)
}

/// `dir/name`, refusing to clobber an existing file unless `force`.
pub fn output_path(dir: &Path, name: &str, force: bool) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.exists() && !force {
        return Err(MarsError::InvalidInput(format!(
            "{} exists; pass --force to overwrite",
            p.display()
        )));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::SensorConfig;

    #[test]
    fn tensor_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let mut t = EventTensor::new(Dims::new(2, 3, 4));
        t.set((1, 2, 3), 0.1 + 0.2).unwrap();
        t.set((0, 0, 0), 7.0).unwrap();
        write_tensor(&p, &t).unwrap();
        assert_eq!(read_tensor(&p).unwrap(), t);

        fs::write(&p, "{\"dims\":{\"n_viewers\":1,\"n_channels\":1,\"n_slots\":1}}\n{\"v\":3,\"c\":0,\"t\":0,\"x\":1}\n").unwrap();
        let err = read_tensor(&p).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        fs::write(&p, "").unwrap();
        assert!(read_tensor(&p).is_err());
    }

    #[test]
    fn events_default_missing_features() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        fs::write(&p, "{\"v\":0,\"c\":1,\"t\":2,\"amount\":5.5}\n").unwrap();
        let schema = FeatureSchema { emb_width: 3 };
        let e = read_events(&p, schema).unwrap();
        assert_eq!(e[0].message, MessageFeatures::zeros(schema));
        assert_eq!(e[0].fanlist_min, 0.0);
        write_events(&p, &e).unwrap();
        assert_eq!(read_events(&p, schema).unwrap(), e);
        fs::write(&p, "{\"v\":0,\"c\":1,\"t\":2,\"amount\":5.5,\"emb\":[1]}\n").unwrap();
        assert!(read_events(&p, schema).is_err());
    }

    #[test]
    fn checkpoint_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let g = ViewerGraph::from_edges(3, [(0, 1)]).unwrap();
        let cfg = SensorConfig {
            alpha: 2,
            seed: 11,
            ..Default::default()
        };
        let mut m = SensorModel::init(Dims::new(3, 2, 4), &g, FeatureSchema { emb_width: 2 }, &cfg)
            .unwrap();
        m.theta
            .iter_mut()
            .enumerate()
            .for_each(|(i, x)| *x = (i as f64).sqrt() / 3.0);
        save_checkpoint(&p, &m).unwrap();
        let back = load_checkpoint(&p).unwrap();
        let bits = |m: &SensorModel| m.to_flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
        assert_eq!(back, m);
    }

    #[test]
    fn output_path_respects_force() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x"), "").unwrap();
        assert!(output_path(dir.path(), "x", false).is_err());
        assert!(output_path(dir.path(), "x", true).is_ok());
        assert!(output_path(dir.path(), "y", false).is_ok());
    }
}
