use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{Edge, Node, ScenarioTree, TreeError};

pub const DEFAULT_NODE_CAP: usize = 2_000_000;

/// Independent bounded noise `W = a·tanh(s·B)` where `B` is a walk whose
/// increments are uniform on `atoms` equispaced points of `[−a, a]` per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub amplitude: f64,
    pub atoms: usize,
    pub scale: f64,
}

impl NoiseSpec {
    pub fn new(amplitude: f64, atoms: usize, scale: f64) -> Result<Self, TreeError> {
        let s = Self { amplitude, atoms, scale };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(TreeError::Noise(format!("amplitude must be positive, got {}", self.amplitude)));
        }
        if self.atoms.is_multiple_of(2) {
            return Err(TreeError::Noise(format!("atom count must be odd, got {}", self.atoms)));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(TreeError::Noise(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    /// Walk increments, symmetric about 0 and including 0.
    pub fn steps(&self) -> Vec<f64> {
        if self.atoms == 1 {
            return vec![0.0];
        }
        let h = 2.0 * self.amplitude / (self.atoms - 1) as f64;
        let mid = (self.atoms / 2) as i64;
        (0..self.atoms as i64).map(|i| (i - mid) as f64 * h).collect()
    }

    pub fn map(&self, b: f64) -> f64 {
        self.amplitude * (self.scale * b).tanh()
    }

    /// Lipschitz constant of `x ↦ a·tanh(s·x)`.
    pub fn lipschitz(&self) -> f64 {
        self.amplitude * self.scale
    }
}

/// Tensor every transition of `base` with one noise step per coordinate.
/// Nodes keep `S` in `value` and `W` in `noise`.
pub fn product_tree(base: &ScenarioTree, noise: &NoiseSpec, cap: usize) -> Result<ScenarioTree, TreeError> {
    noise.validate()?;
    let d = base.dim;
    let steps = noise.steps();
    let combos = steps.len().checked_pow(d as u32).ok_or(TreeError::Overflow { nodes: usize::MAX, cap })?;

    let mut predicted: usize = 0;
    let mut fan: usize = 1;
    for level in base.levels() {
        predicted = predicted.saturating_add(level.len().saturating_mul(fan));
        fan = fan.saturating_mul(combos);
    }
    if predicted > cap {
        return Err(TreeError::Overflow { nodes: predicted, cap });
    }

    let q = 1.0 / combos as f64;
    let mut nodes = vec![Node {
        id: 0,
        k: 0,
        value: base.root().value.clone(),
        noise: Some(vec![0.0; d]),
        parent: None,
        children: vec![],
    }];
    let mut walk: Vec<Vec<f64>> = vec![vec![0.0; d]];
    let mut origin: Vec<usize> = vec![0];
    let mut i = 0;
    while i < nodes.len() {
        let b = origin[i];
        for e in &base.nodes[b].children {
            for c in 0..combos {
                let mut w = walk[i].clone();
                let mut r = c;
                for wj in w.iter_mut() {
                    *wj += steps[r % steps.len()];
                    r /= steps.len();
                }
                let id = nodes.len();
                let bc = &base.nodes[e.child];
                nodes.push(Node {
                    id,
                    k: bc.k,
                    value: bc.value.clone(),
                    noise: Some(w.iter().map(|x| noise.map(*x)).collect()),
                    parent: Some(i),
                    children: vec![],
                });
                nodes[i].children.push(Edge { child: id, prob: e.prob * q });
                walk.push(w);
                origin.push(e.child);
            }
        }
        i += 1;
    }
    Ok(ScenarioTree { grid: base.grid, dim: d, nodes })
}
