//! On-disk formats, all versioned and lossless:
//!
//! - `manifest.sgm` — line-oriented text listing scenes, splits, nodes,
//!   edges, and feature paths. Floats print in shortest round-trip form,
//!   so load(save(x)) reproduces x bit for bit.
//! - `*.sgf` — one feature record: magic `SGF1`, u32 node count, u32 d,
//!   then the f64 payload row-major (node features, then edge features).
//! - `*.sgc` — model checkpoint: magic `SGC1`, architecture and loss
//!   config, then named parameter tensors.
//! - `*.sgr` — evaluation report, line-oriented text.
//!
//! Everything multi-byte is little-endian.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::{DatasetManifest, Split, MANIFEST_VERSION};
use crate::error::{Result, SgrError};
use crate::features::{ClassifierParams, FeatureExtractor};
use crate::graph::{
    FeatureRecord, InteractionLabel, NodeClass, SceneAnnotation, SceneEdge, SceneNode,
    NUM_INTERACTIONS,
};
use crate::losses::LossConfig;
use crate::metrics::EvalReport;
use crate::model::{GpnnConfig, GpnnParams};

const SGF_MAGIC: &[u8; 4] = b"SGF1";
const SGC_MAGIC: &[u8; 4] = b"SGC1";

/// A trained model with everything needed to evaluate it: the parse-graph
/// network, its loss configuration, and the feature-extraction stage that
/// produced its inputs.
#[derive(Debug)]
pub struct Checkpoint {
    pub gpnn: GpnnConfig,
    pub loss: LossConfig,
    pub params: GpnnParams,
    pub extractor: FeatureExtractor,
}

// ── manifest text format ──────────────────────────────────────────────

fn check_token(token: &str, what: &str) -> Result<()> {
    if token.is_empty() || token.chars().any(|c| c.is_whitespace()) {
        return Err(SgrError::Data(format!(
            "{what} {token:?} must be nonempty without whitespace"
        )));
    }
    Ok(())
}

pub fn manifest_to_string(manifest: &DatasetManifest) -> Result<String> {
    manifest.validate()?;
    let mut out = String::new();
    writeln!(out, "sgm {}", manifest.format_version).unwrap();
    if let Some(seed) = manifest.generator_seed {
        writeln!(out, "generator_seed {seed}").unwrap();
    }
    writeln!(out, "scenes {}", manifest.scenes.len()).unwrap();
    for scene in &manifest.scenes {
        check_token(&scene.scene_id, "scene id")?;
        writeln!(out, "scene {}", scene.scene_id).unwrap();
        let split = manifest.split.get(&scene.scene_id).expect("validated");
        writeln!(out, "split {}", split.as_str()).unwrap();
        writeln!(out, "nodes {}", scene.nodes.len()).unwrap();
        for node in &scene.nodes {
            check_token(&node.class.name, "class name")?;
            writeln!(
                out,
                "node {} {} {} {} {} {} {}",
                node.index,
                node.class.id,
                node.class.name,
                node.bbox[0],
                node.bbox[1],
                node.bbox[2],
                node.bbox[3]
            )
            .unwrap();
        }
        writeln!(out, "edges {}", scene.edges.len()).unwrap();
        for e in &scene.edges {
            writeln!(out, "edge {} {} {}", e.a, e.b, e.label.id()).unwrap();
        }
        if let Some(path) = &scene.feature_ref {
            check_token(path, "feature path")?;
            writeln!(out, "features {path}").unwrap();
        }
        writeln!(out, "end").unwrap();
    }
    Ok(out)
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Lines<'a> {
        Lines {
            lines: text.lines().collect(),
            pos: 0,
        }
    }

    fn context(&self) -> usize {
        self.pos + 1
    }

    fn next(&mut self) -> Result<Vec<&'a str>> {
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| SgrError::Parse(format!("line {}: unexpected end of file", self.pos + 1)))?;
        self.pos += 1;
        Ok(line.split_whitespace().collect())
    }

    fn peek_keyword(&self) -> Option<&'a str> {
        self.lines
            .get(self.pos)
            .and_then(|l| l.split_whitespace().next())
    }

    fn expect(&mut self, keyword: &str, arity: usize) -> Result<Vec<&'a str>> {
        let line_no = self.context();
        let tokens = self.next()?;
        if tokens.first() != Some(&keyword) {
            return Err(SgrError::Parse(format!(
                "line {line_no}: expected '{keyword}', got {:?}",
                tokens.first().unwrap_or(&"")
            )));
        }
        if tokens.len() != arity + 1 {
            return Err(SgrError::Parse(format!(
                "line {line_no}: '{keyword}' takes {arity} fields, got {}",
                tokens.len() - 1
            )));
        }
        Ok(tokens[1..].to_vec())
    }

    fn done(&self) -> bool {
        self.lines[self.pos..]
            .iter()
            .all(|l| l.split_whitespace().next().is_none())
    }
}

fn parse_num<T: std::str::FromStr>(token: &str, line: usize, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| SgrError::Parse(format!("line {line}: invalid {what} {token:?}")))
}

pub fn manifest_from_string(text: &str) -> Result<DatasetManifest> {
    let mut lines = Lines::new(text);
    let line_no = lines.context();
    let version: u32 = parse_num(&lines.expect("sgm", 1)?[0], line_no, "version")?;
    if version != MANIFEST_VERSION {
        return Err(SgrError::Version(format!(
            "manifest version {version} unsupported (expected {MANIFEST_VERSION})"
        )));
    }
    let generator_seed = if lines.peek_keyword() == Some("generator_seed") {
        let line_no = lines.context();
        Some(parse_num(&lines.expect("generator_seed", 1)?[0], line_no, "seed")?)
    } else {
        None
    };
    let line_no = lines.context();
    let count: usize = parse_num(&lines.expect("scenes", 1)?[0], line_no, "scene count")?;

    let mut scenes = Vec::with_capacity(count);
    let mut split = BTreeMap::new();
    for _ in 0..count {
        let line_no = lines.context();
        let scene_id = lines.expect("scene", 1)?[0].to_string();
        let split_token = lines.expect("split", 1)?[0];
        let assignment = Split::parse(split_token)
            .map_err(|_| SgrError::Parse(format!("line {}: unknown split {split_token:?}", line_no + 1)))?;

        let line_no = lines.context();
        let node_count: usize = parse_num(&lines.expect("nodes", 1)?[0], line_no, "node count")?;
        let mut nodes = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            let line_no = lines.context();
            let t = lines.expect("node", 7)?;
            let index = parse_num(t[0], line_no, "node index")?;
            let class_id: usize = parse_num(t[1], line_no, "class id")?;
            let name = t[2].to_string();
            let bbox = [
                parse_num(t[3], line_no, "box x1")?,
                parse_num(t[4], line_no, "box y1")?,
                parse_num(t[5], line_no, "box x2")?,
                parse_num(t[6], line_no, "box y2")?,
            ];
            nodes.push(SceneNode {
                index,
                class: NodeClass { id: class_id, name },
                bbox,
            });
        }

        let line_no = lines.context();
        let edge_count: usize = parse_num(&lines.expect("edges", 1)?[0], line_no, "edge count")?;
        let mut edges = Vec::with_capacity(edge_count);
        for _ in 0..edge_count {
            let line_no = lines.context();
            let t = lines.expect("edge", 3)?;
            edges.push(SceneEdge {
                a: parse_num(t[0], line_no, "edge endpoint")?,
                b: parse_num(t[1], line_no, "edge endpoint")?,
                label: InteractionLabel::new(parse_num(t[2], line_no, "label id")?)
                    .map_err(|e| SgrError::Parse(format!("line {line_no}: {e}")))?,
            });
        }

        let feature_ref = if lines.peek_keyword() == Some("features") {
            Some(lines.expect("features", 1)?[0].to_string())
        } else {
            None
        };
        lines.expect("end", 0)?;

        split.insert(scene_id.clone(), assignment);
        scenes.push(SceneAnnotation {
            scene_id,
            nodes,
            edges,
            feature_ref,
        });
    }
    if !lines.done() {
        return Err(SgrError::Parse(format!(
            "line {}: trailing content after last scene",
            lines.context()
        )));
    }
    let manifest = DatasetManifest {
        format_version: version,
        generator_seed,
        scenes,
        split,
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    std::fs::write(path, manifest_to_string(manifest)?)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    manifest_from_string(&text)
}

// ── binary primitives ─────────────────────────────────────────────────

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 4]) -> Writer {
        Writer {
            buf: magic.to_vec(),
        }
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v)
            .map_err(|_| SgrError::Numeric(format!("value {v} exceeds u32 range")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }

    fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 4], kind: &str) -> Result<Reader<'a>> {
        if buf.len() < 4 {
            return Err(SgrError::Parse(format!("{kind}: file shorter than its magic")));
        }
        if &buf[..4] != magic {
            if &buf[..3] == &magic[..3] {
                return Err(SgrError::Version(format!(
                    "{kind}: unsupported format version byte {:?}",
                    buf[3] as char
                )));
            }
            return Err(SgrError::Parse(format!("{kind}: bad magic bytes")));
        }
        Ok(Reader { buf, pos: 4 })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(SgrError::Parse(format!(
                "truncated file: need {n} bytes for {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let b = self.take(8 * n, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn str(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)?;
        let b = self.take(len, what)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| SgrError::Parse(format!("invalid utf-8 in {what}")))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(SgrError::Parse(format!(
                "trailing bytes after offset {}",
                self.pos
            )));
        }
        Ok(())
    }
}

// ── feature records ───────────────────────────────────────────────────

pub fn features_to_bytes(rec: &FeatureRecord) -> Result<Vec<u8>> {
    rec.validate()?;
    let mut w = Writer::new(SGF_MAGIC);
    w.u32(rec.num_nodes)?;
    w.u32(rec.dim)?;
    w.f64s(&rec.node_features);
    w.f64s(&rec.edge_features);
    Ok(w.buf)
}

pub fn features_from_bytes(buf: &[u8]) -> Result<FeatureRecord> {
    let mut r = Reader::new(buf, SGF_MAGIC, "feature record")?;
    let n = r.u32("node count")?;
    let d = r.u32("feature dim")?;
    let node_features = r.f64s(n * d, "node features")?;
    let edge_features = r.f64s(n * n * d, "edge features")?;
    r.finish()?;
    let rec = FeatureRecord {
        num_nodes: n,
        dim: d,
        node_features,
        edge_features,
    };
    rec.validate()?;
    Ok(rec)
}

pub fn save_features(rec: &FeatureRecord, path: &Path) -> Result<()> {
    std::fs::write(path, features_to_bytes(rec)?)?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<FeatureRecord> {
    features_from_bytes(&std::fs::read(path)?)
}

// ── checkpoints ───────────────────────────────────────────────────────

pub fn checkpoint_to_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    ck.gpnn.validate()?;
    ck.loss.validate()?;
    ck.params.check_shapes(&ck.gpnn)?;
    let mut w = Writer::new(SGC_MAGIC);
    w.u32(ck.gpnn.feature_dim)?;
    w.u32(ck.gpnn.hidden_dim)?;
    w.u32(ck.gpnn.propagation_steps)?;
    w.u32(ck.gpnn.sage_depth)?;
    w.f64(ck.gpnn.adjacency_threshold);
    w.u8(u8::from(ck.gpnn.use_attention));
    w.u8(u8::from(ck.gpnn.use_sageconv));
    w.f64s(&ck.loss.class_weights);
    w.f64(ck.loss.margin);
    w.f64(ck.loss.adjacency_weight);
    let named = ck.params.named();
    w.u32(named.len())?;
    for (name, tensor) in named {
        w.str(name)?;
        w.u32(tensor.rank())?;
        for &e in tensor.shape() {
            w.u32(e)?;
        }
        w.f64s(&tensor.data());
    }
    // extraction stage
    let clf = &ck.extractor.classifier;
    w.f64(ck.extractor.epsilon);
    w.u32(ck.extractor.raw_dim())?;
    w.u32(clf.input_dim)?;
    w.u32(clf.penultimate_dim)?;
    w.u32(clf.num_classes)?;
    w.f64s(&clf.w1.data());
    w.f64s(&clf.b1.data());
    w.f64s(&clf.w2.data());
    w.f64s(&clf.b2.data());
    w.f64s(ck.extractor.projection());
    Ok(w.buf)
}

pub fn checkpoint_from_bytes(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(buf, SGC_MAGIC, "checkpoint")?;
    let gpnn = GpnnConfig {
        feature_dim: r.u32("feature_dim")?,
        hidden_dim: r.u32("hidden_dim")?,
        propagation_steps: r.u32("propagation_steps")?,
        sage_depth: r.u32("sage_depth")?,
        adjacency_threshold: r.f64("adjacency_threshold")?,
        use_attention: r.u8("use_attention")? != 0,
        use_sageconv: r.u8("use_sageconv")? != 0,
    };
    let mut class_weights = [0.0; NUM_INTERACTIONS];
    for w in class_weights.iter_mut() {
        *w = r.f64("class weight")?;
    }
    let loss = LossConfig {
        class_weights,
        margin: r.f64("margin")?,
        adjacency_weight: r.f64("adjacency_weight")?,
    };
    let count = r.u32("parameter count")?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.str("parameter name")?;
        let rank = r.u32("parameter rank")?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("parameter extent")?);
        }
        let numel: usize = shape.iter().product();
        let data = r.f64s(numel, "parameter data")?;
        entries.push((name, shape, data));
    }
    let params = GpnnParams::from_named(&gpnn, entries)?;

    let epsilon = r.f64("extractor epsilon")?;
    let raw_dim = r.u32("extractor raw dim")?;
    let input_dim = r.u32("classifier input dim")?;
    let penultimate = r.u32("classifier penultimate dim")?;
    let num_classes = r.u32("classifier class count")?;
    let w1 = r.f64s(input_dim * penultimate, "classifier w1")?;
    let b1 = r.f64s(penultimate, "classifier b1")?;
    let w2 = r.f64s(penultimate * num_classes, "classifier w2")?;
    let b2 = r.f64s(num_classes, "classifier b2")?;
    let projection = r.f64s((3 * raw_dim + 4) * raw_dim, "pair projection")?;
    r.finish()?;
    let classifier = ClassifierParams {
        input_dim,
        penultimate_dim: penultimate,
        num_classes,
        w1: crate::tensor::Tensor::param(&[input_dim, penultimate], w1)?,
        b1: crate::tensor::Tensor::param(&[penultimate], b1)?,
        w2: crate::tensor::Tensor::param(&[penultimate, num_classes], w2)?,
        b2: crate::tensor::Tensor::param(&[num_classes], b2)?,
    };
    let extractor = FeatureExtractor::from_parts(classifier, epsilon, projection, raw_dim)?;
    Ok(Checkpoint {
        gpnn,
        loss,
        params,
        extractor,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(ck)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}

// ── reports ───────────────────────────────────────────────────────────

pub fn report_to_string(report: &EvalReport) -> Result<String> {
    check_token(&report.split, "split name")?;
    let mut out = String::new();
    writeln!(out, "sgr 1").unwrap();
    writeln!(out, "split {}", report.split).unwrap();
    writeln!(out, "scenes {}", report.num_scenes).unwrap();
    writeln!(out, "map {}", report.map).unwrap();
    writeln!(out, "recall {}", report.recall).unwrap();
    writeln!(out, "auc {}", report.auc).unwrap();
    writeln!(out, "mean_hinge {}", report.mean_hinge).unwrap();
    for k in 0..NUM_INTERACTIONS {
        let ap = match report.per_class_ap[k] {
            Some(v) => format!("{v}"),
            None => "none".to_string(),
        };
        writeln!(
            out,
            "class {k} {} {ap} {}",
            crate::graph::INTERACTION_NAMES[k],
            report.positive_counts[k]
        )
        .unwrap();
    }
    writeln!(out, "end").unwrap();
    Ok(out)
}

pub fn report_from_string(text: &str) -> Result<EvalReport> {
    let mut lines = Lines::new(text);
    let line_no = lines.context();
    let version: u32 = parse_num(&lines.expect("sgr", 1)?[0], line_no, "version")?;
    if version != 1 {
        return Err(SgrError::Version(format!(
            "report version {version} unsupported (expected 1)"
        )));
    }
    let split = lines.expect("split", 1)?[0].to_string();
    let line_no = lines.context();
    let num_scenes = parse_num(&lines.expect("scenes", 1)?[0], line_no, "scene count")?;
    let line_no = lines.context();
    let map = parse_num(&lines.expect("map", 1)?[0], line_no, "map")?;
    let line_no = lines.context();
    let recall = parse_num(&lines.expect("recall", 1)?[0], line_no, "recall")?;
    let line_no = lines.context();
    let auc = parse_num(&lines.expect("auc", 1)?[0], line_no, "auc")?;
    let line_no = lines.context();
    let mean_hinge = parse_num(&lines.expect("mean_hinge", 1)?[0], line_no, "mean hinge")?;
    let mut per_class_ap = [None; NUM_INTERACTIONS];
    let mut positive_counts = [0usize; NUM_INTERACTIONS];
    for k in 0..NUM_INTERACTIONS {
        let line_no = lines.context();
        let t = lines.expect("class", 4)?;
        let idx: usize = parse_num(t[0], line_no, "class id")?;
        if idx != k {
            return Err(SgrError::Parse(format!(
                "line {line_no}: class lines out of order ({idx} where {k} expected)"
            )));
        }
        per_class_ap[k] = match t[2] {
            "none" => None,
            v => Some(parse_num(v, line_no, "ap")?),
        };
        positive_counts[k] = parse_num(t[3], line_no, "positive count")?;
    }
    lines.expect("end", 0)?;
    if !lines.done() {
        return Err(SgrError::Parse(format!(
            "line {}: trailing content after report",
            lines.context()
        )));
    }
    Ok(EvalReport {
        split,
        num_scenes,
        per_class_ap,
        map,
        recall,
        auc,
        mean_hinge,
        positive_counts,
    })
}

pub fn save_report(report: &EvalReport, path: &Path) -> Result<()> {
    std::fs::write(path, report_to_string(report)?)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    report_from_string(&std::fs::read_to_string(path)?)
}

// ── whole-dataset directory layout ────────────────────────────────────

/// Write `dir/manifest.sgm` plus one feature file per scene at its
/// `feature_ref` path (relative to `dir`).
pub fn save_dataset(
    manifest: &DatasetManifest,
    records: &[FeatureRecord],
    dir: &Path,
) -> Result<()> {
    if manifest.scenes.len() != records.len() {
        return Err(SgrError::Data(format!(
            "{} scenes but {} feature records",
            manifest.scenes.len(),
            records.len()
        )));
    }
    std::fs::create_dir_all(dir)?;
    for (scene, rec) in manifest.scenes.iter().zip(records) {
        let rel = scene.feature_ref.as_ref().ok_or_else(|| {
            SgrError::Data(format!("scene {} lacks a feature path", scene.scene_id))
        })?;
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        save_features(rec, &path)?;
    }
    save_manifest(manifest, &dir.join("manifest.sgm"))
}

/// Load a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<FeatureRecord>)> {
    let manifest = load_manifest(&dir.join("manifest.sgm"))?;
    let mut records = Vec::with_capacity(manifest.scenes.len());
    for scene in &manifest.scenes {
        let rel = scene.feature_ref.as_ref().ok_or_else(|| {
            SgrError::Data(format!("scene {} lacks a feature path", scene.scene_id))
        })?;
        records.push(load_features(&dir.join(rel))?);
    }
    Ok((manifest, records))
}
