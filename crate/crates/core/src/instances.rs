//! Problem instances: random generators, the graph p-Laplacian reduction and
//! the versioned JSON file formats.
//!
//! All randomness comes from ChaCha8 (`rand_chacha` 0.3.1, pinned), seeded
//! from a single `u64`, so a seed always reproduces the same instance bit for
//! bit on every platform.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{Constraints, Matrix};
use crate::solver::ProblemInstance;

/// Current version of both instance file formats.
pub const FORMAT_VERSION: u32 = 1;

/// Seed for the deterministic instance generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// A weighted graph with real labels on some vertices, whose p-Laplacian
/// `Σ_e w_e |x_u − x_v|^p` is minimized over the unlabeled values.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInstance {
    num_vertices: usize,
    edges: Vec<Edge>,
    labels: BTreeMap<usize, f64>,
    p: f64,
}

impl GraphInstance {
    pub fn new(num_vertices: usize, edges: Vec<Edge>, labels: BTreeMap<usize, f64>, p: f64) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidInstance(msg));
        if !(p >= 2.0) || !p.is_finite() {
            return invalid(format!("p must be a finite real >= 2, got {p}"));
        }
        if labels.is_empty() {
            return invalid("graph needs at least one labeled vertex".into());
        }
        if labels.len() >= num_vertices {
            return Err(Error::NoUnlabeledVertices);
        }
        if let Some((&id, _)) = labels.iter().find(|(&id, v)| id >= num_vertices || !v.is_finite()) {
            return invalid(format!("bad label for vertex {id}"));
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.u >= num_vertices || e.v >= num_vertices {
                return invalid(format!("edge ({}, {}) out of range", e.u, e.v));
            }
            if e.u == e.v {
                return invalid(format!("self-loop at vertex {}", e.u));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return invalid(format!("edge ({}, {}) has non-positive weight", e.u, e.v));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return invalid(format!("duplicate edge ({}, {})", e.u, e.v));
            }
        }
        Ok(Self {
            num_vertices,
            edges,
            labels,
            p,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn labels(&self) -> &BTreeMap<usize, f64> {
        &self.labels
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn num_unlabeled(&self) -> usize {
        self.num_vertices - self.labels.len()
    }

    /// Unlabeled vertex ids in column order.
    pub fn unlabeled_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices)
            .filter(|v| !self.labels.contains_key(v))
            .collect()
    }

    /// Column of every vertex: unlabeled vertices first in id order, then
    /// labeled vertices in id order.
    fn columns(&self) -> Vec<usize> {
        let mut col = vec![0; self.num_vertices];
        let mut next = 0;
        for v in self.unlabeled_vertices() {
            col[v] = next;
            next += 1;
        }
        for &v in self.labels.keys() {
            col[v] = next;
            next += 1;
        }
        col
    }

    /// `Σ_e w_e |x_u − x_v|^p` with labeled values substituted; `x` is
    /// indexed like the columns of [`graph_to_regression`].
    pub fn laplacian_energy(&self, x: &[f64]) -> f64 {
        let unlabeled = self.unlabeled_vertices();
        let mut value = vec![0.0; self.num_vertices];
        for (c, &v) in unlabeled.iter().enumerate() {
            value[v] = x[c];
        }
        for (&v, &g) in &self.labels {
            value[v] = g;
        }
        self.edges
            .iter()
            .map(|e| e.weight * (value[e.u] - value[e.v]).abs().powf(self.p))
            .sum()
    }
}

/// Reduces p-Laplacian minimization to `min ‖Ax − b‖_p`.
///
/// Row `e` of the incidence matrix has `+1` at the endpoint with the smaller
/// column and `−1` at the other. `A = W^{1/p} B_unlabeled` and
/// `b = −W^{1/p} B_labeled g`, so `‖Ax − b‖_p^p = Σ_e w_e |x_u − x_v|^p`.
pub fn graph_to_regression(graph: &GraphInstance) -> Result<ProblemInstance> {
    let n = graph.num_unlabeled();
    if n == 0 {
        return Err(Error::NoUnlabeledVertices);
    }
    let col = graph.columns();
    let p = graph.p;
    let m = graph.edges.len();
    let mut a = Matrix::zeros(m, n);
    let mut b = vec![0.0; m];
    for (row, e) in graph.edges.iter().enumerate() {
        let scale = e.weight.powf(1.0 / p);
        let (plus, minus) = if col[e.u] < col[e.v] { (e.u, e.v) } else { (e.v, e.u) };
        for (vertex, sign) in [(plus, 1.0), (minus, -1.0)] {
            match graph.labels.get(&vertex) {
                Some(&g) => b[row] -= scale * sign * g,
                None => a[(row, col[vertex])] = scale * sign,
            }
        }
    }
    ProblemInstance::new(a, b, None, p)
}

/// `m × n` matrix and `m`-vector with i.i.d. entries uniform on `[0, 1)`.
pub fn generate_random_matrix_instance(m: usize, n: usize, p: f64, seed: RngSeed) -> Result<ProblemInstance> {
    if n == 0 || m < n {
        return Err(Error::InvalidInstance(format!("need m >= n >= 1, got {m}x{n}")));
    }
    let mut rng = seed.rng();
    let a: Vec<f64> = (0..m * n).map(|_| rng.gen::<f64>()).collect();
    let b: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
    ProblemInstance::new(Matrix::new(m, n, a)?, b, None, p)
}

/// Parameters of the k-NN graph generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnGraphParams {
    pub n_vertices: usize,
    pub dim: usize,
    pub k: usize,
    pub n_labels: usize,
    pub p: f64,
}

impl KnnGraphParams {
    /// Points in `[0,1]^10`, 10 neighbours, 10 labels.
    pub fn with_defaults(n_vertices: usize, p: f64) -> Self {
        Self {
            n_vertices,
            dim: 10,
            k: 10,
            n_labels: 10,
            p,
        }
    }
}

/// Samples points uniformly in the unit cube and joins each to its `k`
/// nearest Euclidean neighbours (ties broken by vertex id), with weights
/// `exp(−‖x_u − x_v‖²/σ²)` where `σ` is the mean distance to the `k`-th
/// neighbour. `n_labels` random vertices get uniform `[0, 1)` labels.
pub fn generate_knn_graph_instance(params: KnnGraphParams, seed: RngSeed) -> Result<GraphInstance> {
    let KnnGraphParams {
        n_vertices: nv,
        dim,
        k,
        n_labels,
        p,
    } = params;
    if n_labels == 0 || n_labels >= nv {
        return Err(Error::InvalidInstance(format!(
            "need 1 <= labels < vertices, got {n_labels} labels for {nv} vertices"
        )));
    }
    if k == 0 || k >= nv || dim == 0 {
        return Err(Error::InvalidInstance(format!("need 1 <= k < vertices and dim >= 1, got k = {k}")));
    }
    let mut rng = seed.rng();
    let points: Vec<f64> = (0..nv * dim).map(|_| rng.gen::<f64>()).collect();
    let point = |v: usize| &points[v * dim..(v + 1) * dim];
    let dist2 = |u: usize, v: usize| -> f64 {
        point(u)
            .iter()
            .zip(point(v))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };

    let mut neighbours: Vec<Vec<(usize, f64)>> = Vec::with_capacity(nv);
    let mut kth_distance_sum = 0.0;
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(nv);
    for u in 0..nv {
        candidates.clear();
        candidates.extend((0..nv).filter(|&v| v != u).map(|v| (dist2(u, v), v)));
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        kth_distance_sum += candidates[k - 1].0.sqrt();
        neighbours.push(candidates[..k].iter().map(|&(d, v)| (v, d)).collect());
    }
    let sigma = kth_distance_sum / nv as f64;
    let sigma2 = sigma * sigma;

    let mut edge_set = BTreeMap::new();
    for (u, list) in neighbours.iter().enumerate() {
        for &(v, d2) in list {
            edge_set
                .entry((u.min(v), u.max(v)))
                .or_insert_with(|| (-d2 / sigma2).exp());
        }
    }
    let edges = edge_set
        .into_iter()
        .map(|((u, v), weight)| Edge { u, v, weight })
        .collect();

    let chosen = sample(&mut rng, nv, n_labels);
    let mut labels = BTreeMap::new();
    for v in chosen.iter() {
        labels.insert(v, rng.gen::<f64>());
    }
    GraphInstance::new(nv, edges, labels, p)
}

/// Contents of an instance file.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Matrix(ProblemInstance),
    Graph(GraphInstance),
}

impl Instance {
    /// The regression form of the instance.
    pub fn to_problem(&self) -> Result<ProblemInstance> {
        match self {
            Instance::Matrix(m) => Ok(m.clone()),
            Instance::Graph(g) => graph_to_regression(g),
        }
    }

    pub fn to_json(&self) -> String {
        let text = match self {
            Instance::Matrix(inst) => serde_json::to_string(&MatrixFile::from(inst)),
            Instance::Graph(graph) => serde_json::to_string(&GraphFile::from(graph)),
        };
        text.expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text).map_err(|e| json_error(e, "type"))?;
        if header.format_version != FORMAT_VERSION {
            return Err(parse_error(
                text,
                "format_version",
                format!("unsupported version {}", header.format_version),
            ));
        }
        match header.kind.as_str() {
            "matrix" => {
                let file: MatrixFile = serde_json::from_str(text).map_err(|e| json_error(e, ""))?;
                file.into_instance(text).map(Instance::Matrix)
            }
            "graph" => {
                let file: GraphFile = serde_json::from_str(text).map_err(|e| json_error(e, ""))?;
                file.into_instance(text).map(Instance::Graph)
            }
            other => Err(parse_error(text, "type", format!("unknown instance type `{other}`"))),
        }
    }
}

pub fn write_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let mut text = instance.to_json();
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    Instance::from_json(&text)
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
    #[serde(rename = "type")]
    kind: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    format_version: u32,
    #[serde(rename = "type")]
    kind: String,
    m: usize,
    n: usize,
    p: f64,
    #[serde(rename = "A")]
    a: Vec<f64>,
    b: Vec<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<Vec<f64>>,
}

impl From<&ProblemInstance> for MatrixFile {
    fn from(inst: &ProblemInstance) -> Self {
        let cons = inst.constraints();
        Self {
            format_version: FORMAT_VERSION,
            kind: "matrix".into(),
            m: inst.rows(),
            n: inst.cols(),
            p: inst.p(),
            a: inst.a().as_slice().to_vec(),
            b: inst.b().to_vec(),
            c: cons.map(|c| c.matrix.as_slice().to_vec()),
            d: cons.map(|c| c.rhs.clone()),
        }
    }
}

impl MatrixFile {
    fn into_instance(self, text: &str) -> Result<ProblemInstance> {
        let Self { m, n, p, a, b, c, d, .. } = self;
        if a.len() != m * n {
            return Err(parse_error(text, "A", format!("expected {} entries, got {}", m * n, a.len())));
        }
        if b.len() != m {
            return Err(parse_error(text, "b", format!("expected {m} entries, got {}", b.len())));
        }
        let constraints = match (c, d) {
            (None, None) => None,
            (Some(c), Some(d)) => {
                if c.len() != d.len() * n {
                    return Err(parse_error(
                        text,
                        "C",
                        format!("expected {} entries for {} constraints, got {}", d.len() * n, d.len(), c.len()),
                    ));
                }
                let matrix = Matrix::new(d.len(), n, c).map_err(|e| parse_error(text, "C", e.to_string()))?;
                Some(Constraints::new(matrix, d).map_err(|e| parse_error(text, "d", e.to_string()))?)
            }
            (Some(_), None) => return Err(parse_error(text, "d", "C given without d".into())),
            (None, Some(_)) => return Err(parse_error(text, "C", "d given without C".into())),
        };
        let matrix = Matrix::new(m, n, a).map_err(|e| parse_error(text, "A", e.to_string()))?;
        ProblemInstance::new(matrix, b, constraints, p).map_err(|e| parse_error(text, "p", e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    format_version: u32,
    #[serde(rename = "type")]
    kind: String,
    vertices: usize,
    p: f64,
    edges: Vec<(usize, usize, f64)>,
    labels: LabelMap,
}

impl From<&GraphInstance> for GraphFile {
    fn from(graph: &GraphInstance) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: "graph".into(),
            vertices: graph.num_vertices,
            p: graph.p,
            edges: graph.edges.iter().map(|e| (e.u, e.v, e.weight)).collect(),
            labels: LabelMap(graph.labels.iter().map(|(&k, &v)| (k, v)).collect()),
        }
    }
}

impl GraphFile {
    fn into_instance(self, text: &str) -> Result<GraphInstance> {
        let mut seen = BTreeSet::new();
        for &(u, v, _) in &self.edges {
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(parse_error(text, "edges", format!("duplicate edge ({u}, {v})")));
            }
        }
        let edges = self
            .edges
            .into_iter()
            .map(|(u, v, weight)| Edge { u, v, weight })
            .collect();
        let labels = self.labels.0.into_iter().collect();
        GraphInstance::new(self.vertices, edges, labels, self.p).map_err(|e| {
            let field = match &e {
                Error::NoUnlabeledVertices => "labels",
                Error::InvalidInstance(msg) if msg.contains("edge") || msg.contains("self-loop") => "edges",
                Error::InvalidInstance(msg) if msg.contains("label") => "labels",
                _ => "p",
            };
            parse_error(text, field, e.to_string())
        })
    }
}

/// Vertex-id → label map, serialized as a JSON object with string keys.
/// Duplicate keys are rejected instead of silently overwritten.
struct LabelMap(Vec<(usize, f64)>);

impl Serialize for LabelMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(&k.to_string(), v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LabelMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct LabelVisitor;

        impl<'de> Visitor<'de> for LabelVisitor {
            type Value = LabelMap;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from vertex id to label value")
            }

            fn visit_map<M: MapAccess<'de>>(self, mut access: M) -> std::result::Result<LabelMap, M::Error> {
                use serde::de::Error as _;
                let mut entries = Vec::new();
                let mut seen = BTreeSet::new();
                while let Some((key, value)) = access.next_entry::<String, f64>()? {
                    let id: usize = key
                        .parse()
                        .map_err(|_| M::Error::custom(format!("label key `{key}` is not a vertex id")))?;
                    if !seen.insert(id) {
                        return Err(M::Error::custom(format!("duplicate label for vertex {id}")));
                    }
                    entries.push((id, value));
                }
                Ok(LabelMap(entries))
            }
        }

        deserializer.deserialize_map(LabelVisitor)
    }
}

/// Line (1-based) of the first `"field":` key in `text`, or 0 if absent.
fn field_line(text: &str, field: &str) -> usize {
    let key = format!("\"{field}\"");
    text.find(&key)
        .map(|pos| text[..pos].matches('\n').count() + 1)
        .unwrap_or(0)
}

fn parse_error(text: &str, field: &str, message: String) -> Error {
    Error::Parse {
        line: field_line(text, field),
        field: field.to_string(),
        message,
    }
}

fn json_error(err: serde_json::Error, default_field: &str) -> Error {
    let message = err.to_string();
    // serde names the offending field in backticks, e.g. "missing field `m`".
    let field = message
        .split('`')
        .nth(1)
        .filter(|_| message.contains("field"))
        .unwrap_or(default_field)
        .to_string();
    Error::Parse {
        line: err.line(),
        field,
        message,
    }
}
