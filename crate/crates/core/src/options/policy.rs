use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;

use super::features::{CHAIN_DIM, HIGH_DIM};
use super::graph::{InputKind, OptionGraphDef};
use crate::checkpoint::{read_checkpoint, write_checkpoint, ParamBlock};
use crate::error::{Error, Result};
use crate::net::NetParams;

/// One network per parameter set of the option graph, in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub names: Vec<String>,
    pub sets: Vec<NetParams>,
}

pub fn input_dim(kind: InputKind) -> usize {
    match kind {
        InputKind::High => HIGH_DIM,
        InputKind::Chain => CHAIN_DIM,
    }
}

fn dims_for(input: usize, hidden: &[usize], outputs: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend_from_slice(hidden);
    d.push(outputs);
    d
}

impl PolicyParams {
    pub fn init<R: Rng + ?Sized>(graph: &OptionGraphDef, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut names = Vec::new();
        let mut sets = Vec::new();
        for def in &graph.param_sets {
            names.push(def.name.clone());
            sets.push(NetParams::init(&dims_for(input_dim(def.input), hidden, def.outputs), rng)?);
        }
        Ok(Self { names, sets })
    }

    pub fn zeros(graph: &OptionGraphDef, hidden: &[usize]) -> Result<Self> {
        let mut names = Vec::new();
        let mut sets = Vec::new();
        for def in &graph.param_sets {
            names.push(def.name.clone());
            sets.push(NetParams::zeros(&dims_for(input_dim(def.input), hidden, def.outputs))?);
        }
        Ok(Self { names, sets })
    }

    pub fn is_finite(&self) -> bool {
        self.sets.iter().all(|s| s.is_finite())
    }

    pub fn param_count(&self) -> usize {
        self.sets.iter().map(|s| s.param_count()).sum()
    }

    pub fn to_blocks(&self) -> Vec<ParamBlock> {
        self.names
            .iter()
            .zip(&self.sets)
            .map(|(n, p)| ParamBlock {
                name: n.clone(),
                params: p.clone(),
            })
            .collect()
    }

    /// Checks that the blocks match the graph's parameter sets by name, order
    /// and shape.
    pub fn from_blocks(graph: &OptionGraphDef, blocks: Vec<ParamBlock>) -> Result<Self> {
        if blocks.len() != graph.param_sets.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameter blocks for {} parameter sets",
                blocks.len(),
                graph.param_sets.len()
            )));
        }
        for (b, def) in blocks.iter().zip(&graph.param_sets) {
            if b.name != def.name {
                return Err(Error::Checkpoint(format!("block `{}` where `{}` was expected", b.name, def.name)));
            }
            if b.params.input_dim() != input_dim(def.input) || b.params.output_dim() != def.outputs {
                return Err(Error::Checkpoint(format!("block `{}` has dims {:?}", b.name, b.params.dims())));
            }
        }
        Ok(Self {
            names: blocks.iter().map(|b| b.name.clone()).collect(),
            sets: blocks.into_iter().map(|b| b.params).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = BufWriter::new(File::create(path)?);
        write_checkpoint(f, &self.to_blocks())
    }

    pub fn load(graph: &OptionGraphDef, path: &Path) -> Result<Self> {
        let blocks = read_checkpoint(BufReader::new(File::open(path)?))?;
        Self::from_blocks(graph, blocks)
    }
}
