//! Edge-stream and event-stream files.
//!
//! Native edge CSV: `src,dst,ts,weight,label,f_0,...`, where `label = -1`
//! marks an edge without a query. JODIE CSV: `user_id,item_id,timestamp,
//! state_label,features...`, with items moved past the largest user id.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ctdg::{NodeId, TemporalEdge};
use crate::error::{Result, SplashError};
use crate::nn::Target;
use crate::task::{PropertyQuery, PropertySet, TaskKind};

const NATIVE_PREFIX: [&str; 5] = ["src", "dst", "ts", "weight", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeFormat {
    Native,
    Jodie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub task: TaskKind,
    /// Detected from the header when absent.
    #[serde(default)]
    pub format: Option<EdgeFormat>,
    /// Number of classes; inferred from the largest label when absent.
    #[serde(default)]
    pub label_dim: Option<usize>,
    /// Affinity look-ahead window `T_w`; required for the affinity task.
    #[serde(default)]
    pub affinity_window: Option<f64>,
}

impl LoadOptions {
    pub fn new(task: TaskKind) -> Self {
        Self {
            task,
            format: None,
            label_dim: None,
            affinity_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: EdgeFormat,
    pub d_e: usize,
    pub n_nodes: usize,
    pub label_dim: usize,
    #[serde(default)]
    pub affinity_window: Option<f64>,
    /// Affinity items in label-vector order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<NodeId>,
    /// Offset added to JODIE item ids.
    #[serde(default)]
    pub item_offset: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub edges: Vec<TemporalEdge>,
    pub props: PropertySet,
    pub meta: DatasetMeta,
}

struct RawRow {
    edge: TemporalEdge,
    label: Option<i64>,
}

pub fn load_edge_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    read_edge_csv(BufReader::new(File::open(path)?), opts)
}

pub fn read_edge_csv<R: Read>(input: R, opts: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let format = match opts.format {
        Some(f) => f,
        None if header.len() >= 5 && header[..5] == NATIVE_PREFIX => EdgeFormat::Native,
        None if header.first().map(String::as_str) == Some("user_id") => EdgeFormat::Jodie,
        None => return Err(SplashError::Format(format!("unrecognized edge CSV header {header:?}"))),
    };
    let mut rows = Vec::new();
    let mut d_e: Option<usize> = match format {
        EdgeFormat::Native => {
            if header.len() < 5 || header[..5] != NATIVE_PREFIX {
                return Err(SplashError::Format(format!(
                    "native header must start with {}",
                    NATIVE_PREFIX.join(",")
                )));
            }
            Some(header.len() - 5)
        }
        EdgeFormat::Jodie => None,
    };
    let mut last_time = f64::NEG_INFINITY;
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| SplashError::Parse { line, msg };
        let field = |i: usize| rec.get(i).ok_or_else(|| bad(format!("missing column {i}")));
        let float = |i: usize| -> Result<f64> {
            field(i)?
                .parse::<f64>()
                .map_err(|e| bad(format!("column {i}: {e}")))
                .and_then(|v| if v.is_finite() { Ok(v) } else { Err(bad(format!("column {i} is not finite"))) })
        };
        let id = |i: usize| -> Result<NodeId> { field(i)?.parse().map_err(|e| bad(format!("column {i}: {e}"))) };
        let n_fixed = if format == EdgeFormat::Native { 5 } else { 4 };
        if rec.len() < n_fixed {
            return Err(bad(format!("expected at least {n_fixed} columns, found {}", rec.len())));
        }
        let width = *d_e.get_or_insert(rec.len() - n_fixed);
        if rec.len() != n_fixed + width {
            return Err(bad(format!("expected {} columns, found {}", n_fixed + width, rec.len())));
        }
        let features = (n_fixed..rec.len()).map(float).collect::<Result<Vec<_>>>()?;
        let (edge, label) = match format {
            EdgeFormat::Native => {
                let label: i64 = field(4)?.parse().map_err(|e| bad(format!("label: {e}")))?;
                let edge = TemporalEdge::new(id(0)?, id(1)?, float(2)?).with_weight(float(3)?);
                (edge, (label >= 0).then_some(label))
            }
            EdgeFormat::Jodie => {
                let label: f64 = float(3)?;
                (TemporalEdge::new(id(0)?, id(1)?, float(2)?), Some(label as i64))
            }
        };
        if edge.timestamp < last_time {
            return Err(SplashError::StreamOrder {
                current: last_time,
                got: edge.timestamp,
                line: Some(line),
            });
        }
        last_time = edge.timestamp;
        rows.push(RawRow {
            edge: edge.with_features(features),
            label,
        });
    }

    let mut item_offset = None;
    if format == EdgeFormat::Jodie {
        let offset = rows.iter().map(|r| r.edge.src).max().map_or(0, |m| m + 1);
        for r in &mut rows {
            r.edge.dst += offset;
        }
        item_offset = Some(offset);
    }
    let edges: Vec<TemporalEdge> = rows.iter().map(|r| r.edge.clone()).collect();
    let nodes: BTreeSet<NodeId> = edges.iter().flat_map(|e| [e.src, e.dst]).collect();
    let mut meta = DatasetMeta {
        format,
        d_e: d_e.unwrap_or(0),
        n_nodes: nodes.len(),
        label_dim: 0,
        affinity_window: opts.affinity_window,
        items: Vec::new(),
        item_offset,
    };
    let queries = match opts.task {
        TaskKind::Affinity => affinity_queries(&rows, opts, &mut meta)?,
        TaskKind::Anomaly | TaskKind::Classification => {
            let max_label = rows.iter().filter_map(|r| r.label).max().unwrap_or(0);
            meta.label_dim = match (opts.task, opts.label_dim) {
                (_, Some(d)) => d,
                (TaskKind::Anomaly, None) => 2,
                _ => max_label as usize + 1,
            };
            rows.iter()
                .enumerate()
                .filter_map(|(i, r)| {
                    r.label.map(|l| PropertyQuery {
                        node: r.edge.src,
                        time: r.edge.timestamp,
                        label: Target::Class(l as usize),
                        position: i + 1,
                    })
                })
                .collect()
        }
    };
    let props = PropertySet::new(opts.task, meta.label_dim, queries)?;
    Ok(Dataset { edges, props, meta })
}

/// Normalized weights of each query node's edges to every item within
/// `(t, t + T_w]`. Queries with no edge in the window are dropped.
fn affinity_queries(rows: &[RawRow], opts: &LoadOptions, meta: &mut DatasetMeta) -> Result<Vec<PropertyQuery>> {
    let window = opts
        .affinity_window
        .filter(|w| *w > 0.0)
        .ok_or_else(|| SplashError::Config("affinity task needs a positive affinity_window".into()))?;
    let items: Vec<NodeId> = rows
        .iter()
        .map(|r| r.edge.dst)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<NodeId, usize> = items.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut by_src: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_src.entry(r.edge.src).or_default().push(i);
    }
    let mut queries = Vec::new();
    let mut dropped = 0usize;
    for (i, r) in rows.iter().enumerate() {
        if r.label.is_none() {
            continue;
        }
        let t = r.edge.timestamp;
        let mut target = vec![0.0; items.len()];
        for &j in &by_src[&r.edge.src] {
            let e = &rows[j].edge;
            if e.timestamp > t && e.timestamp <= t + window {
                target[index[&e.dst]] += e.weight;
            }
        }
        let total: f64 = target.iter().sum();
        if total <= 0.0 {
            dropped += 1;
            continue;
        }
        target.iter_mut().for_each(|v| *v /= total);
        queries.push(PropertyQuery {
            node: r.edge.src,
            time: t,
            label: Target::Soft(target),
            position: i + 1,
        });
    }
    if dropped > 0 {
        log::warn!("{dropped} affinity queries have no edge in their window and were dropped");
    }
    meta.label_dim = items.len();
    meta.items = items;
    Ok(queries)
}

fn fmt_f64(v: f64) -> String {
    // Display for f64 is the shortest string that parses back exactly.
    format!("{v}")
}

/// Writes the native format. Every query must sit right after an edge from
/// its node with a class label.
pub fn write_edge_csv<W: Write>(out: W, edges: &[TemporalEdge], props: &PropertySet) -> Result<()> {
    let d_e = edges.first().map_or(0, |e| e.features.len());
    let mut labels: Vec<i64> = vec![-1; edges.len()];
    for q in &props.queries {
        let Target::Class(c) = q.label else {
            return Err(SplashError::Format("only class labels can be written inline".into()));
        };
        if q.position == 0 || edges[q.position - 1].src != q.node || labels[q.position - 1] != -1 {
            return Err(SplashError::Format(format!(
                "query for node {} at {} is not attached to its own edge",
                q.node, q.time
            )));
        }
        labels[q.position - 1] = c as i64;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = NATIVE_PREFIX.iter().map(|s| s.to_string()).collect();
    header.extend((0..d_e).map(|i| format!("f_{i}")));
    w.write_record(&header)?;
    for (e, label) in edges.iter().zip(labels) {
        if e.features.len() != d_e {
            return Err(SplashError::Shape("edges disagree on feature width".into()));
        }
        let mut rec = vec![
            e.src.to_string(),
            e.dst.to_string(),
            fmt_f64(e.timestamp),
            fmt_f64(e.weight),
            label.to_string(),
        ];
        rec.extend(e.features.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One entry of an interleaved serving stream.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Edge(TemporalEdge),
    Query {
        node: NodeId,
        time: f64,
        label: Option<usize>,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match self {
            Event::Edge(e) => e.timestamp,
            Event::Query { time, .. } => *time,
        }
    }
}

/// Interleaves edges and queries in replay order: each query follows the
/// `position` edges preceding it.
pub fn interleave(edges: &[TemporalEdge], queries: &[PropertyQuery]) -> Vec<Event> {
    let mut out = Vec::with_capacity(edges.len() + queries.len());
    let mut next = 0;
    for q in queries {
        while next < q.position.min(edges.len()) {
            out.push(Event::Edge(edges[next].clone()));
            next += 1;
        }
        out.push(Event::Query {
            node: q.node,
            time: q.time,
            label: match q.label {
                Target::Class(c) => Some(c),
                Target::Soft(_) => None,
            },
        });
    }
    out.extend(edges[next..].iter().cloned().map(Event::Edge));
    out
}

/// Event CSV: `event,src,dst,ts,weight,label,f_0,...` with `event` `E` (edge)
/// or `Q` (query for `src`; `dst` and `weight` ignored, `label` -1 if unknown).
pub fn write_events<W: Write>(out: W, events: &[Event], d_e: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["event", "src", "dst", "ts", "weight", "label"].map(String::from).to_vec();
    header.extend((0..d_e).map(|i| format!("f_{i}")));
    w.write_record(&header)?;
    for ev in events {
        let rec: Vec<String> = match ev {
            Event::Edge(e) => {
                let mut r = vec![
                    "E".into(),
                    e.src.to_string(),
                    e.dst.to_string(),
                    fmt_f64(e.timestamp),
                    fmt_f64(e.weight),
                    "-1".into(),
                ];
                r.extend(e.features.iter().map(|&v| fmt_f64(v)));
                r
            }
            Event::Query { node, time, label } => {
                let mut r = vec![
                    "Q".into(),
                    node.to_string(),
                    "-1".into(),
                    fmt_f64(*time),
                    "0".into(),
                    label.map_or("-1".into(), |l| l.to_string()),
                ];
                r.extend(std::iter::repeat_n("0".to_string(), d_e));
                r
            }
        };
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Streams events from a CSV reader, checking timestamp order as it goes.
pub fn read_events<R: Read>(input: R) -> Result<EventReader<R>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let expect = ["event", "src", "dst", "ts", "weight", "label"];
    if header.len() < 6 || header[..6] != expect {
        return Err(SplashError::Format(format!("event header must start with {}", expect.join(","))));
    }
    Ok(EventReader {
        d_e: header.len() - 6,
        records: reader.into_records(),
        last_time: f64::NEG_INFINITY,
    })
}

pub struct EventReader<R: Read> {
    d_e: usize,
    records: csv::StringRecordsIntoIter<R>,
    last_time: f64,
}

impl<R: Read> EventReader<R> {
    pub fn d_e(&self) -> usize {
        self.d_e
    }

    fn parse(&mut self, rec: csv::StringRecord) -> Result<Event> {
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| SplashError::Parse { line, msg };
        let float = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| bad(format!("column {i}: {e}")))
        };
        let ts = float(3)?;
        if !ts.is_finite() {
            return Err(bad("timestamp is not finite".into()));
        }
        if ts < self.last_time {
            return Err(SplashError::StreamOrder {
                current: self.last_time,
                got: ts,
                line: Some(line),
            });
        }
        self.last_time = ts;
        let src: NodeId = rec[1].parse().map_err(|e| bad(format!("src: {e}")))?;
        match &rec[0] {
            "E" => {
                let dst: NodeId = rec[2].parse().map_err(|e| bad(format!("dst: {e}")))?;
                let features = (6..rec.len()).map(float).collect::<Result<Vec<_>>>()?;
                Ok(Event::Edge(
                    TemporalEdge::new(src, dst, ts).with_weight(float(4)?).with_features(features),
                ))
            }
            "Q" => {
                let label: i64 = rec[5].parse().map_err(|e| bad(format!("label: {e}")))?;
                Ok(Event::Query {
                    node: src,
                    time: ts,
                    label: (label >= 0).then_some(label as usize),
                })
            }
            other => Err(bad(format!("unknown event kind '{other}'"))),
        }
    }
}

impl<R: Read> Iterator for EventReader<R> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Result<Event>> {
        let rec = self.records.next()?;
        Some(rec.map_err(SplashError::from).and_then(|r| self.parse(r)))
    }
}
