//! Label queries and the chronological replay that answers them.

use serde::{Deserialize, Serialize};

use crate::ctdg::{NodeId, StreamState, TemporalEdge};
use crate::error::{Result, SplashError};
use crate::nn::Target;

/// The three node property tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Dynamic anomaly detection: binary state, scored by AUC.
    Anomaly,
    /// Dynamic node classification, scored by micro-F1.
    Classification,
    /// Node affinity prediction, scored by NDCG@10.
    Affinity,
}

impl std::str::FromStr for TaskKind {
    type Err = SplashError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anomaly" => Ok(TaskKind::Anomaly),
            "classification" => Ok(TaskKind::Classification),
            "affinity" => Ok(TaskKind::Affinity),
            other => Err(SplashError::Config(format!("unknown task '{other}'"))),
        }
    }
}

impl TaskKind {
    pub fn metric_name(self) -> &'static str {
        match self {
            TaskKind::Anomaly => "auc",
            TaskKind::Classification => "micro_f1",
            TaskKind::Affinity => "ndcg@10",
        }
    }
}

/// A timestamped label request for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyQuery {
    pub node: NodeId,
    pub time: f64,
    pub label: Target,
    /// Number of stream edges ingested before the query is answered. Edges
    /// co-timed with the query that come later in the stream are excluded.
    pub position: usize,
}

/// Chronologically ordered queries for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySet {
    pub task: TaskKind,
    /// Output dimension: number of classes (2 for anomaly) or affinity items.
    pub label_dim: usize,
    pub queries: Vec<PropertyQuery>,
}

impl PropertySet {
    pub fn new(task: TaskKind, label_dim: usize, queries: Vec<PropertyQuery>) -> Result<Self> {
        let set = Self {
            task,
            label_dim,
            queries,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.queries.windows(2) {
            if pair[1].time < pair[0].time || pair[1].position < pair[0].position {
                return Err(SplashError::StreamOrder {
                    current: pair[0].time,
                    got: pair[1].time,
                    line: None,
                });
            }
        }
        for q in &self.queries {
            match &q.label {
                Target::Class(c) if *c >= self.label_dim => {
                    return Err(SplashError::Format(format!(
                        "label {c} outside {} classes",
                        self.label_dim
                    )));
                }
                Target::Soft(v) => {
                    if v.len() != self.label_dim || v.iter().any(|&x| x < 0.0) {
                        return Err(SplashError::Format("malformed affinity label".into()));
                    }
                    let s: f64 = v.iter().sum();
                    if (s - 1.0).abs() > 1e-6 {
                        return Err(SplashError::Format(format!("affinity label sums to {s}")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn subset(&self, queries: Vec<PropertyQuery>) -> Self {
        Self {
            task: self.task,
            label_dim: self.label_dim,
            queries,
        }
    }

    pub fn targets(&self) -> Vec<Target> {
        self.queries.iter().map(|q| q.label.clone()).collect()
    }
}

/// Number of edges with timestamp `<= t` in a sorted stream.
pub fn position_at(edges: &[TemporalEdge], t: f64) -> usize {
    edges.partition_point(|e| e.timestamp <= t)
}

/// Replays `edges` into `state`, calling `answer` for every query once the
/// edges preceding it have been ingested. Edges past the last query are not
/// ingested.
pub fn replay<'q, T, F>(
    state: &mut StreamState,
    edges: &[TemporalEdge],
    queries: impl IntoIterator<Item = &'q PropertyQuery>,
    mut answer: F,
) -> Result<Vec<T>>
where
    F: FnMut(&StreamState, &PropertyQuery) -> Result<T>,
{
    let mut next = state.counters().edges as usize;
    let mut out = Vec::new();
    for q in queries {
        if q.position < next {
            return Err(SplashError::StreamOrder {
                current: state.current_time(),
                got: q.time,
                line: None,
            });
        }
        if q.position > edges.len() {
            return Err(SplashError::Format(format!(
                "query refers to edge position {} beyond the stream ({})",
                q.position,
                edges.len()
            )));
        }
        while next < q.position {
            state.ingest_edge(&edges[next])?;
            next += 1;
        }
        state.advance_to(q.time)?;
        out.push(answer(state, q)?);
    }
    Ok(out)
}
