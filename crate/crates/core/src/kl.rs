//! Multi-class Kernighan-Lin refinement of a predicted labeling.

use std::collections::BTreeSet;

use ordered_float::OrderedFloat;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSet};
use crate::problem::Prediction;

/// Gains at or below this are treated as no improvement.
pub const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainConvention {
    /// External minus internal weight; positive means moving the vertex
    /// lowers the cut.
    #[default]
    ExternalMinusInternal,
    InternalMinusExternal,
}

/// `D(v) = sum_{j in other classes} w_vj - sum_{j in own class} w_vj`.
pub fn vertex_gain(g: &Graph, labels: &[usize], v: usize) -> f64 {
    vertex_gain_with(g, labels, v, GainConvention::default())
}

pub fn vertex_gain_with(g: &Graph, labels: &[usize], v: usize, conv: GainConvention) -> f64 {
    let (mut ext, mut int) = (0.0, 0.0);
    for (j, w) in g.neighbors(v) {
        if labels[j] == labels[v] {
            int += w;
        } else {
            ext += w;
        }
    }
    match conv {
        GainConvention::ExternalMinusInternal => ext - int,
        GainConvention::InternalMinusExternal => int - ext,
    }
}

/// Gain of `v` with respect to the class pair `(labels[v], other)`:
/// weight into `other` minus weight into its own class. Edges into third
/// classes stay cut either way and do not count.
fn pair_restricted_gain(g: &Graph, labels: &[usize], v: usize, other: usize) -> f64 {
    let own = labels[v];
    let mut d = 0.0;
    for (j, w) in g.neighbors(v) {
        if labels[j] == other {
            d += w;
        } else if labels[j] == own {
            d -= w;
        }
    }
    d
}

/// `g(v, w) = D(v) + D(w) - 2 w_vw`, the cut reduction from exchanging `v`
/// and `w`. Gains are taken with respect to the two classes involved, which
/// for two classes is exactly [`vertex_gain`].
pub fn pair_gain(g: &Graph, labels: &[usize], v: usize, w: usize) -> Result<f64> {
    if labels[v] == labels[w] {
        return Err(Error::SameClassPair(v, w));
    }
    let dv = pair_restricted_gain(g, labels, v, labels[w]);
    let dw = pair_restricted_gain(g, labels, w, labels[v]);
    Ok(dv + dw - 2.0 * g.weight(v, w))
}

/// Outcome of one pass over a class pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PassOutcome {
    pub labels: Vec<usize>,
    /// Cut reduction actually applied; zero when nothing changed.
    pub improvement: f64,
    /// Number of exchanges applied (`k*`).
    pub swaps: usize,
    /// Gains of the tentative exchanges in selection order.
    pub gains: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
}

type Side = BTreeSet<(OrderedFloat<f64>, usize)>;

/// One Kernighan-Lin pass between classes `a` and `b`. Vertices with
/// `fixed[v]` never move.
pub fn kl_pass(g: &Graph, labels: &[usize], a: usize, b: usize, fixed: &[bool]) -> PassOutcome {
    let n = g.n_vertices();
    let mut d = vec![0.0; n];
    let mut side_a: Side = BTreeSet::new();
    let mut side_b: Side = BTreeSet::new();
    let mut unmarked = vec![false; n];
    for v in 0..n {
        if fixed[v] {
            continue;
        }
        if labels[v] == a {
            d[v] = pair_restricted_gain(g, labels, v, b);
            side_a.insert((OrderedFloat(-d[v]), v));
            unmarked[v] = true;
        } else if labels[v] == b {
            d[v] = pair_restricted_gain(g, labels, v, a);
            side_b.insert((OrderedFloat(-d[v]), v));
            unmarked[v] = true;
        }
    }

    let steps = side_a.len().min(side_b.len());
    let mut gains = Vec::with_capacity(steps);
    let mut pairs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (v, w, gain) = best_pair(g, &side_a, &side_b);
        side_a.remove(&(OrderedFloat(-d[v]), v));
        side_b.remove(&(OrderedFloat(-d[w]), w));
        unmarked[v] = false;
        unmarked[w] = false;
        gains.push(gain);
        pairs.push((v, w));
        // v moves a -> b, w moves b -> a
        for (moved, from) in [(v, a), (w, b)] {
            for (x, c) in g.neighbors(moved) {
                if !unmarked[x] {
                    continue;
                }
                let delta = if labels[x] == from { 2.0 * c } else { -2.0 * c };
                let set = if labels[x] == a { &mut side_a } else { &mut side_b };
                set.remove(&(OrderedFloat(-d[x]), x));
                d[x] += delta;
                set.insert((OrderedFloat(-d[x]), x));
            }
        }
    }

    let (kstar, best) = best_prefix(&gains);
    let mut out = labels.to_vec();
    if best > GAIN_EPS {
        for &(v, w) in &pairs[..kstar] {
            out[v] = b;
            out[w] = a;
        }
        PassOutcome { labels: out, improvement: best, swaps: kstar, gains, pairs }
    } else {
        PassOutcome { labels: out, improvement: 0.0, swaps: 0, gains, pairs }
    }
}

/// Smallest `k` maximizing the prefix sum of `gains`, with the sum; `k = 0`
/// has sum 0.
fn best_prefix(gains: &[f64]) -> (usize, f64) {
    let (mut kstar, mut best, mut acc) = (0, 0.0, 0.0);
    for (i, &gv) in gains.iter().enumerate() {
        acc += gv;
        if acc > best {
            best = acc;
            kstar = i + 1;
        }
    }
    (kstar, best)
}

/// Exact maximum of `D(v) + D(w) - 2 w_vw`; ties go to the smallest `v`,
/// then the smallest `w`. Both sides are ordered by descending `D`, and
/// since `w_vw >= 0` the scan stops once `D(v) + D(w)` falls below the best.
fn best_pair(g: &Graph, side_a: &Side, side_b: &Side) -> (usize, usize, f64) {
    let top_b = -side_b.iter().next().expect("nonempty").0 .0;
    let mut best: Option<(usize, usize, f64)> = None;
    for &(nda, v) in side_a {
        let dv = -nda.0;
        if let Some((_, _, bg)) = best {
            if dv + top_b < bg {
                break;
            }
        }
        for &(ndb, w) in side_b {
            let dw = -ndb.0;
            if let Some((_, _, bg)) = best {
                if dv + dw < bg {
                    break;
                }
            }
            let gain = dv + dw - 2.0 * g.weight(v, w);
            let better = match best {
                None => true,
                Some((bv, bw, bg)) => gain > bg || (gain == bg && (v, w) < (bv, bw)),
            };
            if better {
                best = Some((v, w, gain));
            }
        }
    }
    best.expect("both sides nonempty")
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlReport {
    pub cut_before: f64,
    pub cut_after: f64,
    pub sweeps: usize,
    pub passes: usize,
    pub swaps: usize,
}

/// Sweeps over all class pairs in a seeded random order, running passes on
/// each pair until none improves; stops after a sweep without improvement
/// or after `max_sweeps`. Supervised vertices keep their labels.
pub fn kl_refine(
    g: &Graph,
    prediction: &Prediction,
    labels: &LabelSet,
    max_sweeps: usize,
    seed: u64,
) -> Result<Prediction> {
    kl_refine_with_report(g, prediction, labels, max_sweeps, seed).map(|(p, _)| p)
}

pub fn kl_refine_with_report(
    g: &Graph,
    prediction: &Prediction,
    labels: &LabelSet,
    max_sweeps: usize,
    seed: u64,
) -> Result<(Prediction, KlReport)> {
    let n = g.n_vertices();
    if prediction.labels.len() != n {
        return Err(Error::invalid(format!("prediction covers {} vertices, graph has {n}", prediction.labels.len())));
    }
    let k = labels.num_classes();
    let fixed = labels.mask(n);
    let mut cur = prediction.labels.clone();
    for &(v, c) in labels.entries() {
        cur[v] = c;
    }
    if let Some(&bad) = cur.iter().find(|&&c| c >= k) {
        return Err(Error::invalid(format!("predicted class {bad} out of range for {k} classes")));
    }
    let cut_before = g.cut_cost(&cur);
    let mut class_pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sweeps, mut passes, mut swaps) = (0, 0, 0);
    while sweeps < max_sweeps {
        sweeps += 1;
        class_pairs.shuffle(&mut rng);
        let mut improved = false;
        for &(a, b) in &class_pairs {
            // each accepted pass lowers the cut, so this cap is only a guard
            for _ in 0..n.max(1) {
                let out = kl_pass(g, &cur, a, b, &fixed);
                passes += 1;
                if out.swaps == 0 {
                    break;
                }
                swaps += out.swaps;
                cur = out.labels;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    let report = KlReport { cut_before, cut_after: g.cut_cost(&cur), sweeps, passes, swaps };
    Ok((Prediction { scores: prediction.scores.clone(), labels: cur }, report))
}
