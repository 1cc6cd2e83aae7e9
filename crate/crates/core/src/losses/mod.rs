//! Style, content, and palette losses, and their weighting.

mod color;
mod nnfm;
mod stats;

pub use color::color_palette_loss;
pub use nnfm::{concat_style_features, cosine_distance, nearest_matches, nnfm_loss, nnfm_tap, StyleBank, StyleTap, COSINE_EPS};
pub use stats::{content_loss, gram_loss, gram_matrix, gram_tap, style_gram};

use std::fmt::Write as _;

use crate::error::Result;
use crate::tensor::{Graph, NodeId};

/// How the palette weight evolves over a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSchedule {
    Constant,
    /// Decays linearly from the initial weight to 0 at the final iteration.
    Linear,
}

impl ColorSchedule {
    pub fn as_str(self) -> &'static str {
        match self {
            ColorSchedule::Constant => "constant",
            ColorSchedule::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(ColorSchedule::Constant),
            "linear" => Some(ColorSchedule::Linear),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub nnfm: f64,
    pub content: f64,
    pub color: f64,
    pub color_schedule: ColorSchedule,
    pub total_iters: usize,
}

impl LossWeights {
    pub fn color_at(&self, iter: usize) -> f64 {
        match self.color_schedule {
            ColorSchedule::Constant => self.color,
            ColorSchedule::Linear if self.total_iters == 0 => self.color,
            ColorSchedule::Linear => {
                let t = (iter as f64 / self.total_iters as f64).min(1.0);
                self.color * (1.0 - t)
            }
        }
    }
}

/// Unweighted loss terms for one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub style: f64,
    pub content: f64,
    pub color: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub iteration: usize,
    pub terms: LossTerms,
    pub color_weight: f64,
    pub total: f64,
}

pub fn total_loss(terms: LossTerms, weights: &LossWeights, iter: usize) -> LossReport {
    let color_weight = weights.color_at(iter);
    let total = weights.nnfm * terms.style + weights.content * terms.content + color_weight * terms.color;
    LossReport {
        iteration: iter,
        terms,
        color_weight,
        total,
    }
}

/// `sum_i w_i * x_i` over scalar nodes, skipping zero weights. `None` when
/// every weight is zero.
pub fn weighted_sum(g: &mut Graph, terms: &[(NodeId, f64)]) -> Result<Option<NodeId>> {
    let mut acc: Option<NodeId> = None;
    for &(node, w) in terms {
        if w == 0.0 {
            continue;
        }
        let scaled = g.scale(node, w as f32)?;
        acc = Some(match acc {
            None => scaled,
            Some(a) => g.add(a, scaled)?,
        });
    }
    Ok(acc)
}

pub const CSV_HEADER: &str = "iteration,style,content,color,color_weight,total";

impl LossReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iteration, self.terms.style, self.terms.content, self.terms.color, self.color_weight, self.total
        )
    }
}

pub fn to_csv(reports: &[LossReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}
