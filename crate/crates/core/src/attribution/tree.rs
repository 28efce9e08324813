//! Path-dependent TreeSHAP.
//!
//! The value function is the cover-weighted one: at a split on a feature in
//! the coalition, follow `x`; otherwise average both children weighted by
//! their training cover. [`tree_shap`] computes its exact Shapley values in
//! `O(leaves * depth^2)` per tree by tracking, along each root-to-leaf path,
//! the proportion of coalitions of every size that reach the leaf.

use super::{AttributionVector, Coalition};
use crate::models::{Node, TreeEnsemble};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct PathElement {
    /// Feature index, `None` for the root sentinel.
    feature: Option<usize>,
    /// Fraction of "feature absent" paths flowing through.
    zero_fraction: f64,
    /// 1 if `x` follows this branch, 0 otherwise.
    one_fraction: f64,
    /// Permutation weight of the subset sizes.
    weight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let l = depth as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i as f64 + 1.0) / (l + 1.0);
        path[i].weight = zero_fraction * path[i].weight * (l - i as f64) / (l + 1.0);
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let l = depth as f64;
    let PathElement {
        zero_fraction: z,
        one_fraction: o,
        ..
    } = path[index];
    let mut next = path[depth].weight;
    for j in (0..depth).rev() {
        if o != 0.0 {
            let tmp = path[j].weight;
            path[j].weight = next * (l + 1.0) / ((j as f64 + 1.0) * o);
            next = tmp - path[j].weight * z * (l - j as f64) / (l + 1.0);
        } else {
            path[j].weight = path[j].weight * (l + 1.0) / (z * (l - j as f64));
        }
    }
    for j in index..depth {
        path[j].feature = path[j + 1].feature;
        path[j].zero_fraction = path[j + 1].zero_fraction;
        path[j].one_fraction = path[j + 1].one_fraction;
    }
    path.pop();
}

/// Total permutation weight the path would carry with element `index` removed.
fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let l = depth as f64;
    let PathElement {
        zero_fraction: z,
        one_fraction: o,
        ..
    } = path[index];
    let mut total = 0.0;
    if o != 0.0 {
        let mut next = path[depth].weight;
        for j in (0..depth).rev() {
            let tmp = next * (l + 1.0) / ((j as f64 + 1.0) * o);
            total += tmp;
            next = path[j].weight - tmp * z * (l - j as f64) / (l + 1.0);
        }
    } else {
        for j in (0..depth).rev() {
            total += path[j].weight * (l + 1.0) / (z * (l - j as f64));
        }
    }
    total
}

fn recurse(
    node: &Node,
    x: &[f64],
    phi: &mut [f64],
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    extend(&mut path, zero_fraction, one_fraction, feature);
    match node {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                let j = e.feature.expect("only the root element lacks a feature");
                phi[j] += w * (e.one_fraction - e.zero_fraction) * value;
            }
        }
        Node::Internal {
            feature: split,
            threshold,
            cover,
            left,
            right,
        } => {
            let (hot, cold) = if x[*split] <= *threshold {
                (left, right)
            } else {
                (right, left)
            };
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            // A feature already on the path is merged rather than duplicated.
            if let Some(k) = path.iter().skip(1).position(|e| e.feature == Some(*split)).map(|k| k + 1) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind(&mut path, k);
            }
            recurse(
                hot,
                x,
                phi,
                path.clone(),
                incoming_zero * hot.cover() / cover,
                incoming_one,
                Some(*split),
            );
            recurse(
                cold,
                x,
                phi,
                path,
                incoming_zero * cold.cover() / cover,
                0.0,
                Some(*split),
            );
        }
    }
}

fn check_covers(node: &Node) -> Result<()> {
    match node {
        Node::Leaf { cover, .. } if !(*cover > 0.0) => {
            Err(Error::MalformedTree(format!("leaf cover {cover} is not positive")))
        }
        Node::Leaf { .. } => Ok(()),
        Node::Internal { cover, left, right, .. } => {
            if !(*cover > 0.0) {
                return Err(Error::MalformedTree(format!("node cover {cover} is not positive")));
            }
            check_covers(left)?;
            check_covers(right)
        }
    }
}

/// Path-dependent Shapley values of one tree at `x`, accumulated into `phi`.
pub fn tree_shap_single(tree: &Node, x: &[f64], phi: &mut [f64]) -> Result<()> {
    check_covers(tree)?;
    recurse(tree, x, phi, Vec::with_capacity(tree.depth() + 2), 1.0, 1.0, None);
    Ok(())
}

/// Exact path-dependent Shapley values of an ensemble: per-tree values
/// combined with the ensemble's aggregation (sum or mean).
pub fn tree_shap(ensemble: &TreeEnsemble, x: &[f64]) -> Result<AttributionVector> {
    if x.len() != ensemble.n_features {
        return Err(Error::DimensionMismatch {
            expected: ensemble.n_features,
            actual: x.len(),
        });
    }
    let mut phi = vec![0.0; ensemble.n_features];
    let mut expected = 0.0;
    for tree in &ensemble.trees {
        tree_shap_single(tree, x, &mut phi)?;
        expected += tree.expected_value();
    }
    let scale = ensemble.combine_weight();
    phi.iter_mut().for_each(|p| *p *= scale);
    Ok(AttributionVector::new(
        phi,
        ensemble.combine(expected, true),
        ensemble.margin(x),
    ))
}

fn node_value(node: &Node, x: &[f64], coalition: Coalition) -> f64 {
    match node {
        Node::Leaf { value, .. } => *value,
        Node::Internal {
            feature,
            threshold,
            cover,
            left,
            right,
        } => {
            if coalition.contains(*feature) {
                node_value(if x[*feature] <= *threshold { left } else { right }, x, coalition)
            } else {
                (left.cover() * node_value(left, x, coalition) + right.cover() * node_value(right, x, coalition))
                    / cover
            }
        }
    }
}

/// Cover-weighted path-dependent coalition value of an ensemble.
pub fn value_path_dependent(ensemble: &TreeEnsemble, x: &[f64], coalition: Coalition) -> f64 {
    let total: f64 = ensemble.trees.iter().map(|t| node_value(t, x, coalition)).sum();
    ensemble.combine(total, true)
}
