//! Class-separation scores for a mapper graph over a labeled cloud.
//!
//! * node purity `α_i = 1 / (distinct labels in node i)`
//! * point purity `β_x` = mean `α` over the nodes containing `x`
//! * class purity `γ_k` = mean `β` over the clustered points of class `k`
//!
//! Points in no node are left out of `β` and `γ` and only counted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mapper::MapperGraph;

/// Class purity, which has no value for a class without clustered points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassPurity {
    Defined(f64),
    Undefined,
}

impl ClassPurity {
    pub fn value(self) -> Option<f64> {
        match self {
            ClassPurity::Defined(v) => Some(v),
            ClassPurity::Undefined => None,
        }
    }
}

fn check_members(graph: &MapperGraph, labels: &[u32]) -> Result<()> {
    for node in &graph.nodes {
        assert!(!node.members.is_empty(), "mapper nodes are never empty");
        if let Some(&m) = node.members.iter().find(|&&m| m >= labels.len()) {
            return Err(Error::Argument(format!(
                "node {} references point {m} but only {} labels were given",
                node.id,
                labels.len()
            )));
        }
    }
    Ok(())
}

/// `α_i` for every node, in node order.
pub fn node_purity(graph: &MapperGraph, labels: &[u32]) -> Result<Vec<f64>> {
    check_members(graph, labels)?;
    Ok(graph
        .nodes
        .iter()
        .map(|node| {
            let distinct: BTreeSet<u32> = node.members.iter().map(|&m| labels[m]).collect();
            1.0 / distinct.len() as f64
        })
        .collect())
}

/// `β_x` for every clustered point; `None` for points in no node.
pub fn point_purity(graph: &MapperGraph, labels: &[u32]) -> Result<Vec<Option<f64>>> {
    let alpha = node_purity(graph, labels)?;
    let mut sums = vec![(0.0, 0usize); labels.len()];
    for (node, a) in graph.nodes.iter().zip(&alpha) {
        for &m in &node.members {
            sums[m].0 += a;
            sums[m].1 += 1;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(s, k)| (k > 0).then(|| s / k as f64))
        .collect())
}

fn class_purity_from(beta: &[Option<f64>], labels: &[u32], class: u32) -> ClassPurity {
    let vals: Vec<f64> = beta
        .iter()
        .zip(labels)
        .filter(|&(_, &l)| l == class)
        .filter_map(|(b, _)| *b)
        .collect();
    if vals.is_empty() {
        ClassPurity::Undefined
    } else {
        ClassPurity::Defined(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// `γ_k` for one class.
pub fn class_purity(graph: &MapperGraph, labels: &[u32], class: u32) -> Result<ClassPurity> {
    Ok(class_purity_from(&point_purity(graph, labels)?, labels, class))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurityReport {
    pub node_purity: Vec<f64>,
    pub point_purity: Vec<Option<f64>>,
    pub class_purity: BTreeMap<u32, ClassPurity>,
    /// Points that belong to no node.
    pub unclustered: Vec<usize>,
}

impl PurityReport {
    pub fn compute(graph: &MapperGraph, labels: &[u32]) -> Result<Self> {
        let node_purity = node_purity(graph, labels)?;
        let point_purity = point_purity(graph, labels)?;
        let classes: BTreeSet<u32> = labels.iter().copied().collect();
        let class_purity = classes
            .into_iter()
            .map(|k| (k, class_purity_from(&point_purity, labels, k)))
            .collect();
        let unclustered = point_purity
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_none())
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            node_purity,
            point_purity,
            class_purity,
            unclustered,
        })
    }

    /// Mean node purity, `None` for a graph without nodes.
    pub fn mean_node_purity(&self) -> Option<f64> {
        (!self.node_purity.is_empty())
            .then(|| self.node_purity.iter().sum::<f64>() / self.node_purity.len() as f64)
    }

    pub fn noise_count(&self) -> usize {
        self.unclustered.len()
    }

    /// `kind,id,value` rows for nodes, clustered points and classes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,id,value\n");
        for (i, a) in self.node_purity.iter().enumerate() {
            let _ = writeln!(out, "node,{i},{a}");
        }
        for (i, b) in self.point_purity.iter().enumerate() {
            if let Some(b) = b {
                let _ = writeln!(out, "point,{i},{b}");
            }
        }
        for (k, g) in &self.class_purity {
            match g {
                ClassPurity::Defined(v) => {
                    let _ = writeln!(out, "class,{k},{v}");
                }
                ClassPurity::Undefined => {
                    let _ = writeln!(out, "class,{k},undefined");
                }
            }
        }
        out
    }

    pub fn summary(&self) -> PuritySummary {
        PuritySummary {
            mean_node_purity: self.mean_node_purity(),
            per_class: self
                .class_purity
                .iter()
                .map(|(&k, g)| (k, g.value()))
                .collect(),
            noise_count: self.noise_count(),
        }
    }
}

/// JSON summary of a purity report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PuritySummary {
    pub mean_node_purity: Option<f64>,
    pub per_class: BTreeMap<u32, Option<f64>>,
    pub noise_count: usize,
}
