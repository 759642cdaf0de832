//! Association graphs realized by families of `K`-subsets of `[N]`.
//!
//! A family represents a graph with thresholds `(a, b)` when adjacent
//! vertices' sets share at least `a` elements and non-adjacent ones at most
//! `b`. [`represent_graph`] builds such a family exactly; [`soft_realize`]
//! builds one using only unions, intersections, differences and independent
//! sampling, so the guarantees hold with high probability.
//!
//! Vertices and universe elements are 0-based in memory and 1-based in every
//! external format.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::perturb::{rng_from_seed, SeededRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("edge {0}-{1} appears twice")]
    DuplicateEdge(usize, usize),
    #[error("vertex {vertex} out of range for a graph on {vertices} vertices")]
    VertexOutOfRange { vertex: usize, vertices: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("maximum degree {degree} exceeds the bound {bound}")]
    DegreeBound { degree: usize, bound: f64 },
    #[error("universe of size {available} is too small; {needed} elements needed")]
    UniverseExhausted { needed: usize, available: usize },
    #[error("instruction {index}: unknown set {name:?}")]
    UndefinedSet { index: usize, name: String },
    #[error("instruction {index}: sampling probability {p} outside [0, 1]")]
    InvalidProbability { index: usize, p: f64 },
    #[error("instruction {index}: {reason}")]
    BadInstruction { index: usize, reason: String },
    #[error("family has {sets} sets for a graph on {vertices} vertices")]
    FamilySize { sets: usize, vertices: usize },
}

pub type Result<T> = std::result::Result<T, AssemblyError>;

/// Simple undirected graph; edges are stored as `(u, v)` with `u < v`,
/// sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationGraph {
    vertices: usize,
    edges: Vec<(usize, usize)>,
}

impl AssociationGraph {
    pub fn new(vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            if u == v {
                return Err(AssemblyError::SelfLoop(u));
            }
            for w in [u, v] {
                if w >= vertices {
                    return Err(AssemblyError::VertexOutOfRange { vertex: w, vertices });
                }
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(AssemblyError::DuplicateEdge(u.min(v), u.max(v)));
            }
        }
        Ok(AssociationGraph {
            vertices,
            edges: set.into_iter().collect(),
        })
    }

    pub fn edgeless(vertices: usize) -> Self {
        AssociationGraph {
            vertices,
            edges: Vec::new(),
        }
    }

    pub fn cycle(vertices: usize) -> Result<Self> {
        let edges: Vec<(usize, usize)> = (0..vertices).map(|i| (i, (i + 1) % vertices)).collect();
        Self::new(vertices, &edges)
    }

    /// `G(vertices, edge_prob)` with edges that would push a vertex above
    /// `max_degree` skipped.
    pub fn random<R: Rng + ?Sized>(vertices: usize, edge_prob: f64, max_degree: usize, rng: &mut R) -> Self {
        let mut degree = vec![0; vertices];
        let mut edges = Vec::new();
        for u in 0..vertices {
            for v in u + 1..vertices {
                if rng.random_bool(edge_prob) && degree[u] < max_degree && degree[v] < max_degree {
                    degree[u] += 1;
                    degree[v] += 1;
                    edges.push((u, v));
                }
            }
        }
        AssociationGraph { vertices, edges }
    }

    /// Parses `u v` lines with 1-based vertices. `#` starts a comment; a
    /// `# vertices: K` line fixes the vertex count (otherwise the largest
    /// label is used).
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared: Option<usize> = None;
        let mut edges = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let (body, comment) = match raw.find('#') {
                Some(i) => (&raw[..i], Some(&raw[i + 1..])),
                None => (raw, None),
            };
            if let Some(c) = comment {
                if let Some(rest) = c.trim().strip_prefix("vertices:") {
                    let n = rest.trim().parse().map_err(|_| AssemblyError::Parse {
                        line,
                        reason: format!("bad vertex count {:?}", rest.trim()),
                    })?;
                    declared = Some(n);
                }
            }
            let fields: Vec<&str> = body.split_whitespace().collect();
            match fields.as_slice() {
                [] => {}
                [u, v] => {
                    let parse = |s: &str| -> Result<usize> {
                        match s.parse::<usize>() {
                            Ok(x) if x >= 1 => Ok(x - 1),
                            _ => Err(AssemblyError::Parse {
                                line,
                                reason: format!("{s:?} is not a 1-based vertex"),
                            }),
                        }
                    };
                    edges.push((parse(u)?, parse(v)?));
                }
                _ => {
                    return Err(AssemblyError::Parse {
                        line,
                        reason: "expected two vertices".into(),
                    })
                }
            }
        }
        let largest = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        Self::new(declared.unwrap_or(largest), &edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# vertices: {}\n", self.vertices);
        for &(u, v) in &self.edges {
            out.push_str(&format!("{} {}\n", u + 1, v + 1));
        }
        out
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.vertices];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }
}

/// Universe size `N`, assembly size `K`, and thresholds `b < a ≤ K ≤ N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyParams {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub a: usize,
    pub b: usize,
}

impl AssemblyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b < self.a && self.a <= self.k && self.k <= self.n) {
            return Err(AssemblyError::InvalidParams(format!(
                "need b < a <= K <= N, got N={}, K={}, a={}, b={}",
                self.n, self.k, self.a, self.b
            )));
        }
        Ok(())
    }
}

/// How set sizes are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeModel {
    /// Every set has exactly `K` elements.
    Exact,
    /// Set sizes are random with mean `K`; `K ± 3√K` is accepted.
    Expected,
}

/// One sorted subset of `[N]` per vertex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FamilyRepr", into = "FamilyRepr")]
pub struct AssemblyFamily {
    pub universe: usize,
    pub sets: Vec<Vec<usize>>,
    pub size_model: SizeModel,
}

#[derive(Serialize, Deserialize)]
struct FamilyRepr {
    #[serde(rename = "N")]
    n: usize,
    sets: Vec<Vec<usize>>,
    #[serde(default = "exact")]
    size_model: SizeModel,
}

fn exact() -> SizeModel {
    SizeModel::Exact
}

impl TryFrom<FamilyRepr> for AssemblyFamily {
    type Error = AssemblyError;

    fn try_from(r: FamilyRepr) -> Result<Self> {
        let mut sets = Vec::with_capacity(r.sets.len());
        for (i, s) in r.sets.into_iter().enumerate() {
            let mut zero_based = Vec::with_capacity(s.len());
            for x in s {
                if x == 0 || x > r.n {
                    return Err(AssemblyError::Parse {
                        line: i + 1,
                        reason: format!("element {x} outside [1, {}]", r.n),
                    });
                }
                zero_based.push(x - 1);
            }
            zero_based.sort_unstable();
            zero_based.dedup();
            sets.push(zero_based);
        }
        Ok(AssemblyFamily {
            universe: r.n,
            sets,
            size_model: r.size_model,
        })
    }
}

impl From<AssemblyFamily> for FamilyRepr {
    fn from(f: AssemblyFamily) -> Self {
        FamilyRepr {
            n: f.universe,
            sets: f
                .sets
                .into_iter()
                .map(|s| s.into_iter().map(|x| x + 1).collect())
                .collect(),
            size_model: f.size_model,
        }
    }
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Private-block construction: each edge gets `a` fresh elements shared by its
/// endpoints, and each vertex is topped up to `K` with fresh private
/// elements. Non-adjacent sets are disjoint.
///
/// Requires `Δ·a ≤ K` and `N ≥ |E|·a + |V|·K`.
pub fn represent_graph(g: &AssociationGraph, p: &AssemblyParams) -> Result<AssemblyFamily> {
    p.validate()?;
    let delta = g.max_degree();
    if delta * p.a > p.k {
        return Err(AssemblyError::DegreeBound {
            degree: delta,
            bound: p.k as f64 / p.a as f64,
        });
    }
    let needed = g.edges.len() * p.a + g.vertices * p.k;
    if needed > p.n {
        return Err(AssemblyError::UniverseExhausted {
            needed,
            available: p.n,
        });
    }
    let mut sets = vec![Vec::with_capacity(p.k); g.vertices];
    let mut next = 0;
    for &(u, v) in &g.edges {
        for x in next..next + p.a {
            sets[u].push(x);
            sets[v].push(x);
        }
        next += p.a;
    }
    for s in sets.iter_mut() {
        let fill = p.k - s.len();
        s.extend(next..next + fill);
        next += fill;
    }
    Ok(AssemblyFamily {
        universe: p.n,
        sets,
        size_model: SizeModel::Exact,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairViolation {
    /// Adjacent pair sharing fewer than `a` elements (1-based vertices).
    Edge { u: usize, v: usize, intersection: usize },
    /// Non-adjacent pair sharing more than `b` elements.
    NonEdge { u: usize, v: usize, intersection: usize },
    Size { vertex: usize, size: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentationReport {
    pub ok: bool,
    pub edges_satisfied: usize,
    pub edges_total: usize,
    pub non_edges_satisfied: usize,
    pub non_edges_total: usize,
    pub sizes_satisfied: usize,
    pub violations: Vec<PairViolation>,
}

/// Checks every pair and every set size, reporting each failure.
pub fn verify_representation(
    g: &AssociationGraph,
    family: &AssemblyFamily,
    p: &AssemblyParams,
) -> Result<RepresentationReport> {
    if family.sets.len() != g.vertices {
        return Err(AssemblyError::FamilySize {
            sets: family.sets.len(),
            vertices: g.vertices,
        });
    }
    let mut violations = Vec::new();
    let mut report = RepresentationReport {
        ok: false,
        edges_satisfied: 0,
        edges_total: 0,
        non_edges_satisfied: 0,
        non_edges_total: 0,
        sizes_satisfied: 0,
        violations: Vec::new(),
    };
    let slack = 3.0 * (p.k as f64).sqrt();
    for (v, s) in family.sets.iter().enumerate() {
        let ok = match family.size_model {
            SizeModel::Exact => s.len() == p.k,
            SizeModel::Expected => (s.len() as f64 - p.k as f64).abs() <= slack,
        };
        if ok {
            report.sizes_satisfied += 1;
        } else {
            violations.push(PairViolation::Size {
                vertex: v + 1,
                size: s.len(),
            });
        }
    }
    for u in 0..g.vertices {
        for v in u + 1..g.vertices {
            let inter = intersection_size(&family.sets[u], &family.sets[v]);
            if g.has_edge(u, v) {
                report.edges_total += 1;
                if inter >= p.a {
                    report.edges_satisfied += 1;
                } else {
                    violations.push(PairViolation::Edge {
                        u: u + 1,
                        v: v + 1,
                        intersection: inter,
                    });
                }
            } else {
                report.non_edges_total += 1;
                if inter <= p.b {
                    report.non_edges_satisfied += 1;
                } else {
                    violations.push(PairViolation::NonEdge {
                        u: u + 1,
                        v: v + 1,
                        intersection: inter,
                    });
                }
            }
        }
    }
    report.ok = violations.is_empty();
    report.violations = violations;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Soft model
// ---------------------------------------------------------------------------

/// Name of the base universe `[N]` in soft programs.
pub const UNIVERSE: &str = "N";

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    Union { out: String, left: String, right: String },
    Intersection { out: String, left: String, right: String },
    Difference { out: String, left: String, right: String },
    /// Keeps each element of `source` independently with probability `p`.
    Sample { out: String, source: String, p: f64 },
    /// The window `[start, end)` of the base universe (0-based, half-open in
    /// memory; 1-based and inclusive in transcripts).
    Range { out: String, start: usize, end: usize },
}

/// Serialized instruction: `{"op", "args", "out"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub op: String,
    pub args: Vec<Value>,
    pub out: String,
}

impl Instruction {
    pub fn out(&self) -> &str {
        match self {
            Instruction::Union { out, .. }
            | Instruction::Intersection { out, .. }
            | Instruction::Difference { out, .. }
            | Instruction::Sample { out, .. }
            | Instruction::Range { out, .. } => out,
        }
    }

    pub fn to_entry(&self) -> TranscriptEntry {
        let (op, args) = match self {
            Instruction::Union { left, right, .. } => ("union", vec![json!(left), json!(right)]),
            Instruction::Intersection { left, right, .. } => ("intersection", vec![json!(left), json!(right)]),
            Instruction::Difference { left, right, .. } => ("difference", vec![json!(left), json!(right)]),
            Instruction::Sample { source, p, .. } => ("sample", vec![json!(source), json!(p)]),
            Instruction::Range { start, end, .. } => ("range", vec![json!(start + 1), json!(end)]),
        };
        TranscriptEntry {
            op: op.into(),
            args,
            out: self.out().into(),
        }
    }

    pub fn from_entry(index: usize, e: &TranscriptEntry) -> Result<Self> {
        let bad = |reason: &str| AssemblyError::BadInstruction {
            index,
            reason: reason.into(),
        };
        let name = |k: usize| -> Result<String> {
            e.args
                .get(k)
                .and_then(Value::as_str)
                .map(str::to_owned)
                .ok_or_else(|| bad(&format!("argument {k} must be a set name")))
        };
        let out = e.out.clone();
        if e.args.len() != 2 {
            return Err(bad("expected two arguments"));
        }
        Ok(match e.op.as_str() {
            "union" => Instruction::Union { out, left: name(0)?, right: name(1)? },
            "intersection" => Instruction::Intersection { out, left: name(0)?, right: name(1)? },
            "difference" => Instruction::Difference { out, left: name(0)?, right: name(1)? },
            "sample" => Instruction::Sample {
                out,
                source: name(0)?,
                p: e.args[1].as_f64().ok_or_else(|| bad("probability must be a number"))?,
            },
            "range" => {
                let bound = |k: usize| e.args[k].as_u64().map(|x| x as usize);
                match (bound(0), bound(1)) {
                    (Some(s), Some(t)) if s >= 1 && s <= t + 1 => Instruction::Range { out, start: s - 1, end: t },
                    _ => return Err(bad("range needs 1-based bounds first <= last + 1")),
                }
            }
            other => return Err(bad(&format!("unknown op {other:?}"))),
        })
    }
}

pub fn program_to_transcript(program: &[Instruction]) -> Vec<TranscriptEntry> {
    program.iter().map(Instruction::to_entry).collect()
}

pub fn transcript_to_program(entries: &[TranscriptEntry]) -> Result<Vec<Instruction>> {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| Instruction::from_entry(i, e))
        .collect()
}

/// Independent Bernoulli(`p`) selection from a sorted set, by geometric
/// skipping so the cost is proportional to the output size.
fn sample_set(source: &[usize], p: f64, rng: &mut SeededRng) -> Vec<usize> {
    if p >= 1.0 {
        return source.to_vec();
    }
    if p <= 0.0 {
        return Vec::new();
    }
    let log_q = (1.0 - p).ln();
    let mut out = Vec::with_capacity((source.len() as f64 * p * 1.1) as usize + 8);
    let mut i = 0usize;
    loop {
        let u: f64 = rng.random();
        // Number of failures before the next success.
        let skip = ((1.0 - u).ln() / log_q).floor();
        if !skip.is_finite() || skip >= (source.len() - i) as f64 {
            break;
        }
        i += skip as usize;
        out.push(source[i]);
        i += 1;
        if i >= source.len() {
            break;
        }
    }
    out
}

fn merge_op(a: &[usize], b: &[usize], keep_a_only: bool, keep_both: bool, keep_b_only: bool) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let ord = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.cmp(y),
            (Some(_), None) => std::cmp::Ordering::Less,
            _ => std::cmp::Ordering::Greater,
        };
        match ord {
            std::cmp::Ordering::Less => {
                if keep_a_only {
                    out.push(a[i]);
                }
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                if keep_b_only {
                    out.push(b[j]);
                }
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                if keep_both {
                    out.push(a[i]);
                }
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Executes a soft program over the universe `[universe]`; returns every named
/// set it defined. The base universe is available as [`UNIVERSE`].
pub fn soft_build(program: &[Instruction], universe: usize, seed: u64) -> Result<BTreeMap<String, Vec<usize>>> {
    let mut rng = rng_from_seed(seed);
    let mut sets: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let get = |sets: &BTreeMap<String, Vec<usize>>, index: usize, name: &str| -> Result<Vec<usize>> {
        if name == UNIVERSE {
            return Ok((0..universe).collect());
        }
        sets.get(name).cloned().ok_or_else(|| AssemblyError::UndefinedSet {
            index,
            name: name.into(),
        })
    };
    for (index, ins) in program.iter().enumerate() {
        if ins.out() == UNIVERSE {
            return Err(AssemblyError::BadInstruction {
                index,
                reason: format!("{UNIVERSE:?} is reserved for the base universe"),
            });
        }
        let value = match ins {
            Instruction::Union { left, right, .. } => {
                merge_op(&get(&sets, index, left)?, &get(&sets, index, right)?, true, true, true)
            }
            Instruction::Intersection { left, right, .. } => {
                merge_op(&get(&sets, index, left)?, &get(&sets, index, right)?, false, true, false)
            }
            Instruction::Difference { left, right, .. } => {
                merge_op(&get(&sets, index, left)?, &get(&sets, index, right)?, true, false, false)
            }
            Instruction::Sample { source, p, .. } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(AssemblyError::InvalidProbability { index, p: *p });
                }
                sample_set(&get(&sets, index, source)?, *p, &mut rng)
            }
            Instruction::Range { start, end, .. } => {
                if start > end || *end > universe {
                    return Err(AssemblyError::BadInstruction {
                        index,
                        reason: format!("window [{start}, {end}) outside the universe"),
                    });
                }
                (*start..*end).collect()
            }
        };
        sets.insert(ins.out().to_owned(), value);
    }
    Ok(sets)
}

/// Fraction of each window kept when sampling pools and fillers.
pub const WINDOW_SAMPLE_RATE: f64 = 0.8;

pub const DEFAULT_MARGIN: f64 = 0.25;

fn vertex_set_name(v: usize) -> String {
    format!("S{}", v + 1)
}

/// Soft program realizing `g`: every edge `e` samples a pool from a fresh
/// window with expected size `a(1 + margin)`, and every vertex takes the
/// union of its pools with a filler sampled from its own fresh window so its
/// expected size is `K`.
pub fn soft_program(g: &AssociationGraph, p: &AssemblyParams, margin: f64) -> Result<Vec<Instruction>> {
    p.validate()?;
    let delta = g.max_degree();
    let bound = p.k as f64 / (std::f64::consts::E * p.a as f64);
    if delta as f64 > bound {
        return Err(AssemblyError::DegreeBound { degree: delta, bound });
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(AssemblyError::InvalidParams(format!("margin {margin} must be nonnegative")));
    }
    let mu = p.a as f64 * (1.0 + margin);
    if delta as f64 * mu > p.k as f64 {
        return Err(AssemblyError::InvalidParams(format!(
            "degree {delta} times pool size {mu} exceeds K = {}",
            p.k
        )));
    }
    let window = |target: f64| (target / WINDOW_SAMPLE_RATE).ceil() as usize;
    let degrees = g.degrees();
    let needed: usize = g.edges.len() * window(mu)
        + degrees
            .iter()
            .map(|&d| window(p.k as f64 - d as f64 * mu))
            .sum::<usize>();
    if needed > p.n {
        return Err(AssemblyError::UniverseExhausted {
            needed,
            available: p.n,
        });
    }

    let mut program = Vec::new();
    let mut next = 0;
    let mut take_window = |program: &mut Vec<Instruction>, name: &str, target: f64| {
        let size = window(target);
        program.push(Instruction::Range {
            out: format!("W_{name}"),
            start: next,
            end: next + size,
        });
        next += size;
        let rate = if size == 0 { 0.0 } else { (target / size as f64).min(1.0) };
        program.push(Instruction::Sample {
            out: name.to_owned(),
            source: format!("W_{name}"),
            p: rate,
        });
    };
    let mut pools: Vec<Vec<String>> = vec![Vec::new(); g.vertices];
    for &(u, v) in &g.edges {
        let name = format!("P{}_{}", u + 1, v + 1);
        take_window(&mut program, &name, mu);
        pools[u].push(name.clone());
        pools[v].push(name);
    }
    for (v, own) in pools.iter().enumerate() {
        let filler = format!("F{}", v + 1);
        take_window(&mut program, &filler, p.k as f64 - degrees[v] as f64 * mu);
        let mut acc = filler;
        for (k, pool) in own.iter().enumerate() {
            let out = if k + 1 == own.len() {
                vertex_set_name(v)
            } else {
                format!("{}_{}", vertex_set_name(v), k + 1)
            };
            program.push(Instruction::Union {
                out: out.clone(),
                left: acc,
                right: pool.clone(),
            });
            acc = out;
        }
        if own.is_empty() {
            // Rename the filler so every vertex set has the same name form.
            program.push(Instruction::Union {
                out: vertex_set_name(v),
                left: acc.clone(),
                right: acc,
            });
        }
    }
    Ok(program)
}

/// Collects the vertex sets produced by a program from [`soft_program`].
pub fn family_from_sets(
    sets: &BTreeMap<String, Vec<usize>>,
    vertices: usize,
    universe: usize,
) -> Result<AssemblyFamily> {
    let family = (0..vertices)
        .map(|v| {
            sets.get(&vertex_set_name(v))
                .cloned()
                .ok_or_else(|| AssemblyError::UndefinedSet {
                    index: v,
                    name: vertex_set_name(v),
                })
        })
        .collect::<Result<_>>()?;
    Ok(AssemblyFamily {
        universe,
        sets: family,
        size_model: SizeModel::Expected,
    })
}

/// Builds and runs [`soft_program`]; returns the family and the program's
/// transcript. Replaying the transcript with the same seed reproduces the
/// family.
pub fn soft_realize(
    g: &AssociationGraph,
    p: &AssemblyParams,
    margin: f64,
    seed: u64,
) -> Result<(AssemblyFamily, Vec<TranscriptEntry>)> {
    let program = soft_program(g, p, margin)?;
    let sets = soft_build(&program, p.n, seed)?;
    let family = family_from_sets(&sets, g.vertices, p.n)?;
    Ok((family, program_to_transcript(&program)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: AssemblyParams = AssemblyParams {
        n: 1_000_000,
        k: 1000,
        a: 80,
        b: 40,
    };

    #[test]
    fn edge_list_roundtrip() {
        let g = AssociationGraph::parse_edge_list("# vertices: 4\n1 2\n2 3 # chain\n\n").unwrap();
        assert_eq!(g.vertices(), 4);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(AssociationGraph::parse_edge_list(&g.to_edge_list()).unwrap(), g);
        assert!(matches!(
            AssociationGraph::parse_edge_list("1 1"),
            Err(AssemblyError::SelfLoop(0))
        ));
        assert!(matches!(
            AssociationGraph::parse_edge_list("1 2\n2 1"),
            Err(AssemblyError::DuplicateEdge(0, 1))
        ));
        assert!(matches!(
            AssociationGraph::parse_edge_list("0 2"),
            Err(AssemblyError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn edgeless_graph_gets_disjoint_sets() {
        let g = AssociationGraph::edgeless(5);
        let f = represent_graph(&g, &P).unwrap();
        for s in &f.sets {
            assert_eq!(s.len(), 1000);
        }
        let r = verify_representation(&g, &f, &P).unwrap();
        assert!(r.ok);
        assert_eq!(r.non_edges_total, 10);
    }

    #[test]
    fn single_edge_shares_a() {
        let p = AssemblyParams { n: 10_000, k: 100, a: 8, b: 4 };
        let g = AssociationGraph::new(2, &[(0, 1)]).unwrap();
        let f = represent_graph(&g, &p).unwrap();
        assert_eq!(intersection_size(&f.sets[0], &f.sets[1]), 8);
        assert!(verify_representation(&g, &f, &p).unwrap().ok);
    }

    #[test]
    fn cycle_is_representable() {
        let g = AssociationGraph::cycle(10).unwrap();
        let f = represent_graph(&g, &P).unwrap();
        assert!(verify_representation(&g, &f, &P).unwrap().ok);
    }

    #[test]
    fn construction_preconditions() {
        let star = AssociationGraph::new(14, &(1..14).map(|v| (0, v)).collect::<Vec<_>>()).unwrap();
        assert!(matches!(represent_graph(&star, &P), Err(AssemblyError::DegreeBound { .. })));
        let small = AssemblyParams { n: 1500, ..P };
        let g = AssociationGraph::edgeless(2);
        assert!(matches!(
            represent_graph(&g, &small),
            Err(AssemblyError::UniverseExhausted { needed: 2000, available: 1500 })
        ));
        let bad = AssemblyParams { a: 40, b: 40, ..P };
        assert!(matches!(bad.validate(), Err(AssemblyError::InvalidParams(_))));
    }

    #[test]
    fn verifier_boundaries() {
        let p = AssemblyParams { n: 100, k: 3, a: 2, b: 0 };
        let g = AssociationGraph::new(2, &[(0, 1)]).unwrap();
        let f = AssemblyFamily {
            universe: 100,
            sets: vec![vec![0, 1, 2], vec![2, 3, 4]],
            size_model: SizeModel::Exact,
        };
        let r = verify_representation(&g, &f, &p).unwrap();
        assert_eq!(
            r.violations,
            vec![PairViolation::Edge { u: 1, v: 2, intersection: 1 }]
        );
        let apart = AssociationGraph::edgeless(2);
        let f = AssemblyFamily {
            sets: vec![vec![0, 1, 2], vec![3, 4, 5]],
            ..f
        };
        assert!(verify_representation(&apart, &f, &p).unwrap().ok);
    }

    #[test]
    fn family_json_is_one_based() {
        let f = AssemblyFamily {
            universe: 5,
            sets: vec![vec![0, 4]],
            size_model: SizeModel::Exact,
        };
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"{"N":5,"sets":[[1,5]],"size_model":"exact"}"#);
        assert_eq!(serde_json::from_str::<AssemblyFamily>(&json).unwrap(), f);
    }

    #[test]
    fn soft_primitives() {
        let program = vec![
            Instruction::Range { out: "C".into(), start: 0, end: 10 },
            Instruction::Range { out: "D".into(), start: 5, end: 15 },
            Instruction::Difference { out: "E".into(), left: "C".into(), right: "C".into() },
            Instruction::Sample { out: "F".into(), source: "C".into(), p: 1.0 },
            Instruction::Union { out: "G".into(), left: "C".into(), right: "D".into() },
            Instruction::Intersection { out: "H".into(), left: "C".into(), right: "D".into() },
            Instruction::Difference { out: "I".into(), left: "C".into(), right: "D".into() },
        ];
        let sets = soft_build(&program, 100, 0).unwrap();
        assert!(sets["E"].is_empty());
        assert_eq!(sets["F"], sets["C"]);
        assert_eq!(sets["G"], (0..15).collect::<Vec<_>>());
        assert_eq!(sets["H"], (5..10).collect::<Vec<_>>());
        assert_eq!(sets["I"], (0..5).collect::<Vec<_>>());

        let undefined = vec![Instruction::Union { out: "A".into(), left: "X".into(), right: "N".into() }];
        assert!(matches!(soft_build(&undefined, 10, 0), Err(AssemblyError::UndefinedSet { .. })));
        let bad_p = vec![Instruction::Sample { out: "A".into(), source: "N".into(), p: 1.5 }];
        assert!(matches!(soft_build(&bad_p, 10, 0), Err(AssemblyError::InvalidProbability { .. })));
    }

    #[test]
    fn sampling_rate() {
        let program = vec![Instruction::Sample { out: "A".into(), source: UNIVERSE.into(), p: 0.001 }];
        let sizes: Vec<usize> = (0..200).map(|s| soft_build(&program, 1_000_000, s).unwrap()["A"].len()).collect();
        let mean = sizes.iter().sum::<usize>() as f64 / 200.0;
        assert!((mean - 1000.0).abs() < 3.0 * (1000.0f64 / 200.0).sqrt() * 1.5, "{mean}");

        let half = vec![Instruction::Sample { out: "A".into(), source: UNIVERSE.into(), p: 0.3 }];
        let got = soft_build(&half, 100_000, 1).unwrap()["A"].len() as f64;
        let sd = (100_000.0f64 * 0.3 * 0.7).sqrt();
        assert!((got - 30_000.0).abs() <= 3.0 * sd);
    }

    #[test]
    fn transcript_replay_reproduces_family() {
        let g = AssociationGraph::cycle(10).unwrap();
        let (family, transcript) = soft_realize(&g, &P, DEFAULT_MARGIN, 42).unwrap();
        let json = serde_json::to_string(&transcript).unwrap();
        let parsed: Vec<TranscriptEntry> = serde_json::from_str(&json).unwrap();
        let program = transcript_to_program(&parsed).unwrap();
        let sets = soft_build(&program, P.n, 42).unwrap();
        assert_eq!(family_from_sets(&sets, 10, P.n).unwrap(), family);
    }

    #[test]
    fn soft_single_edge() {
        let g = AssociationGraph::new(2, &[(0, 1)]).unwrap();
        let ok = (0..200)
            .filter(|&s| {
                let (f, _) = soft_realize(&g, &P, DEFAULT_MARGIN, s).unwrap();
                intersection_size(&f.sets[0], &f.sets[1]) >= 80
            })
            .count();
        assert!(ok >= 190, "{ok}");
    }

    #[test]
    fn soft_degree_bound() {
        let star = AssociationGraph::new(6, &(1..6).map(|v| (0, v)).collect::<Vec<_>>()).unwrap();
        assert!(matches!(
            soft_realize(&star, &P, DEFAULT_MARGIN, 0),
            Err(AssemblyError::DegreeBound { .. })
        ));
        let single = AssociationGraph::edgeless(1);
        let (f, _) = soft_realize(&single, &P, DEFAULT_MARGIN, 0).unwrap();
        assert!(verify_representation(&single, &f, &P).unwrap().ok);
    }
}
