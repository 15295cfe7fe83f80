use serde::{Deserialize, Serialize};

/// Hybrid time `(t, j)`: elapsed flow time and jump count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridTime {
    pub t: f64,
    pub j: usize,
}

impl HybridTime {
    pub fn new(t: f64, j: usize) -> Self {
        HybridTime { t, j }
    }

    /// `t + j`, the horizon measure used by stopping rules.
    pub fn total(&self) -> f64 {
        self.t + self.j as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub t: f64,
    pub y: Vec<f64>,
}

/// The part of a hybrid arc with constant jump index `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcSegment {
    pub j: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub nodes: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpPoint {
    /// Time of the jump, with `j` the index before the jump.
    pub time: HybridTime,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HybridArc {
    pub segments: Vec<ArcSegment>,
    pub jumps: Vec<JumpPoint>,
}

impl HybridArc {
    pub fn start(&self) -> Option<&[f64]> {
        self.segments
            .first()
            .and_then(|s| s.nodes.first())
            .map(|n| n.y.as_slice())
    }

    pub fn end(&self) -> Option<(HybridTime, &[f64])> {
        let seg = self.segments.last()?;
        let node = seg.nodes.last()?;
        Some((HybridTime::new(node.t, seg.j), node.y.as_slice()))
    }

    /// Every stored `(t, j, y)` in hybrid-time order.
    pub fn iter_nodes(&self) -> impl Iterator<Item = (HybridTime, &[f64])> {
        self.segments.iter().flat_map(|s| {
            s.nodes
                .iter()
                .map(move |n| (HybridTime::new(n.t, s.j), n.y.as_slice()))
        })
    }

    pub fn node_count(&self) -> usize {
        self.segments.iter().map(|s| s.nodes.len()).sum()
    }

    /// Checks that the domain is a hybrid time domain and all states finite.
    pub fn check_domain(&self) -> Result<(), String> {
        for (k, seg) in self.segments.iter().enumerate() {
            if seg.j != k {
                return Err(format!("segment {k} carries jump index {}", seg.j));
            }
            if !(seg.t_start <= seg.t_end) || seg.t_start < 0.0 {
                return Err(format!("segment {k} has invalid interval"));
            }
            let (Some(first), Some(last)) = (seg.nodes.first(), seg.nodes.last()) else {
                return Err(format!("segment {k} has no nodes"));
            };
            if first.t != seg.t_start || last.t != seg.t_end {
                return Err(format!("segment {k} nodes do not span its interval"));
            }
            if seg.nodes.windows(2).any(|w| !(w[0].t < w[1].t)) {
                return Err(format!("segment {k} times not strictly increasing"));
            }
            if seg.nodes.iter().any(|n| n.y.iter().any(|v| !v.is_finite())) {
                return Err(format!("segment {k} stores a non-finite state"));
            }
            if k + 1 < self.segments.len() && self.segments[k + 1].t_start != seg.t_end {
                return Err(format!("segment {} does not start where {k} ends", k + 1));
            }
        }
        if self.jumps.len() + 1 != self.segments.len() && !self.segments.is_empty() {
            return Err(format!(
                "{} jumps for {} segments",
                self.jumps.len(),
                self.segments.len()
            ));
        }
        for (k, jp) in self.jumps.iter().enumerate() {
            let before = &self.segments[k];
            let after = &self.segments[k + 1];
            if jp.time.j != k || jp.time.t != before.t_end {
                return Err(format!("jump {k} recorded at inconsistent hybrid time"));
            }
            if before.nodes.last().map(|n| &n.y) != Some(&jp.pre)
                || after.nodes.first().map(|n| &n.y) != Some(&jp.post)
            {
                return Err(format!("jump {k} pre/post states do not match the arc"));
            }
        }
        Ok(())
    }
}
