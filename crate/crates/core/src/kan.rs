//! KAN data model: spline edges, summation layers, networks, prune masks.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::math;
use crate::spline::SplineGrid;

/// One learnable edge: `φ(x) = w_b·silu(x) + w_s·Σ c_i B_i(x)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplineEdge {
    pub grid: SplineGrid,
    pub coeffs: Vec<f64>,
    pub base_weight: f64,
    pub spline_weight: f64,
}

impl SplineEdge {
    pub fn new(grid: SplineGrid, coeffs: Vec<f64>, base_weight: f64, spline_weight: f64) -> Result<Self> {
        let edge = Self {
            grid,
            coeffs,
            base_weight,
            spline_weight,
        };
        edge.validate()?;
        Ok(edge)
    }

    /// Edge with all weights and coefficients zero.
    pub fn zero(grid: SplineGrid) -> Self {
        let n = grid.basis_count();
        Self {
            grid,
            coeffs: alloc::vec![0.0; n],
            base_weight: 0.0,
            spline_weight: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coeffs.len() != self.grid.basis_count() {
            return Err(shape_err!(
                "edge has {} coefficients, grid expects {}",
                self.coeffs.len(),
                self.grid.basis_count()
            ));
        }
        let finite =
            self.coeffs.iter().all(|c| c.is_finite()) && self.base_weight.is_finite() && self.spline_weight.is_finite();
        if !finite {
            return Err(Error::Domain("edge parameters must be finite".into()));
        }
        Ok(())
    }

    /// Number of trainable scalars: coefficients plus the two weights.
    pub fn param_count(&self) -> usize {
        self.coeffs.len() + 2
    }

    /// Spline term `Σ c_i B_i(x)` (without `w_s`).
    #[inline]
    pub fn spline(&self, x: f64) -> f64 {
        self.grid.eval_spline(&self.coeffs, x).0
    }

    #[inline]
    pub fn activation(&self, x: f64) -> f64 {
        self.activation_and_slope(x).0
    }

    /// `(φ(x), φ'(x))`.
    #[inline]
    pub fn activation_and_slope(&self, x: f64) -> (f64, f64) {
        let (s, ds) = self.grid.eval_spline(&self.coeffs, x);
        (
            self.base_weight * math::silu(x) + self.spline_weight * s,
            self.base_weight * math::silu_derivative(x) + self.spline_weight * ds,
        )
    }

    pub fn is_zero(&self) -> bool {
        self.base_weight == 0.0 && self.spline_weight == 0.0
    }
}

/// Evaluates an edge activation, rejecting non-finite inputs.
pub fn edge_activation(edge: &SplineEdge, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(alloc::format!("non-finite activation input {x}")));
    }
    Ok(edge.activation(x))
}

/// `n_out × n_in` edges feeding pure summation nodes. Edges are stored row
/// major: edge `(j, i)` maps input `i` to output `j`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KanLayer {
    n_in: usize,
    n_out: usize,
    edges: Vec<SplineEdge>,
}

impl KanLayer {
    pub fn new(n_in: usize, n_out: usize, edges: Vec<SplineEdge>) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(shape_err!("layer dimensions must be positive, got {n_in}→{n_out}"));
        }
        if edges.len() != n_in * n_out {
            return Err(shape_err!(
                "layer {n_in}→{n_out} needs {} edges, got {}",
                n_in * n_out,
                edges.len()
            ));
        }
        for e in &edges {
            e.validate()?;
        }
        Ok(Self { n_in, n_out, edges })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn edges(&self) -> &[SplineEdge] {
        &self.edges
    }

    pub fn edges_mut(&mut self) -> &mut [SplineEdge] {
        &mut self.edges
    }

    pub fn edge(&self, out: usize, input: usize) -> &SplineEdge {
        &self.edges[out * self.n_in + input]
    }

    pub fn edge_mut(&mut self, out: usize, input: usize) -> &mut SplineEdge {
        &mut self.edges[out * self.n_in + input]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in {
            return Err(shape_err!("layer expects {} inputs, got {}", self.n_in, x.len()));
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(alloc::format!("non-finite layer input {bad}")));
        }
        let mut out = alloc::vec![0.0; self.n_out];
        self.forward_unchecked(x, &mut out);
        Ok(out)
    }

    /// Forward pass without shape or finiteness checks.
    #[inline]
    pub(crate) fn forward_unchecked(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.edges[j * self.n_in..(j + 1) * self.n_in];
            *o = row.iter().zip(x).map(|(e, &xi)| e.activation(xi)).sum();
        }
    }
}

pub fn layer_forward(layer: &KanLayer, x: &[f64]) -> Result<Vec<f64>> {
    layer.forward(x)
}

/// Initialization recipe for a fresh network.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KanInit {
    pub grid_intervals: usize,
    pub degree: usize,
    /// Spline domain for every edge not covered by `input_domains`.
    pub domain: (f64, f64),
    /// Per-input spline domains for layer 0 (length `widths[0]`).
    pub input_domains: Option<Vec<(f64, f64)>>,
    /// Spline coefficients start uniform in `[-init_noise, init_noise]`.
    pub init_noise: f64,
    /// Defaults to `1/sqrt(n_in)` per layer when unset.
    pub base_weight: Option<f64>,
    pub spline_weight: f64,
    pub seed: u64,
}

impl Default for KanInit {
    fn default() -> Self {
        Self {
            grid_intervals: 5,
            degree: 3,
            domain: (-1.0, 1.0),
            input_domains: None,
            init_noise: 0.01,
            base_weight: None,
            spline_weight: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KanNetwork {
    widths: Vec<usize>,
    layers: Vec<KanLayer>,
}

impl KanNetwork {
    /// Randomly initialized network with the given layer widths.
    pub fn new(widths: &[usize], init: &KanInit) -> Result<Self> {
        if widths.len() < 2 {
            return Err(shape_err!("a network needs at least two widths, got {}", widths.len()));
        }
        if let Some(d) = &init.input_domains {
            if d.len() != widths[0] {
                return Err(shape_err!("{} input domains for {} inputs", d.len(), widths[0]));
            }
        }
        if !(init.init_noise >= 0.0 && init.init_noise.is_finite()) {
            return Err(Error::Config("init_noise must be finite and non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, pair) in widths.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let base_weight = init.base_weight.unwrap_or_else(|| 1.0 / math::sqrt(n_in.max(1) as f64));
            let mut edges = Vec::with_capacity(n_in * n_out);
            for _ in 0..n_out {
                for i in 0..n_in {
                    let (lo, hi) = match (&init.input_domains, l) {
                        (Some(d), 0) => d[i],
                        _ => init.domain,
                    };
                    let grid = SplineGrid::new(lo, hi, init.grid_intervals, init.degree)?;
                    let coeffs = (0..grid.basis_count())
                        .map(|_| {
                            if init.init_noise > 0.0 {
                                rng.random_range(-init.init_noise..=init.init_noise)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    edges.push(SplineEdge::new(grid, coeffs, base_weight, init.spline_weight)?);
                }
            }
            layers.push(KanLayer::new(n_in, n_out, edges)?);
        }
        Ok(Self {
            widths: widths.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<KanLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(shape_err!("a network needs at least one layer"));
        }
        let mut widths = alloc::vec![layers[0].n_in()];
        for (l, layer) in layers.iter().enumerate() {
            if layer.n_in() != *widths.last().unwrap() {
                return Err(shape_err!(
                    "layer {l} takes {} inputs but the previous layer emits {}",
                    layer.n_in(),
                    widths.last().unwrap()
                ));
            }
            widths.push(layer.n_out());
        }
        Ok(Self { widths, layers })
    }

    /// Network whose every edge is zero, sharing `grid`.
    pub fn zeros(widths: &[usize], grid: &SplineGrid) -> Result<Self> {
        let layers = widths
            .windows(2)
            .map(|p| KanLayer::new(p[0], p[1], alloc::vec![SplineEdge::zero(grid.clone()); p[0] * p[1]]))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[KanLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [KanLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn edge_count(&self) -> usize {
        self.layers.iter().map(|l| l.edges().len()).sum()
    }

    pub fn forward(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.input_dim() {
            return Err(shape_err!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                xi.len()
            ));
        }
        let mut x = xi.to_vec();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Inputs seen by every layer plus the final output:
    /// `trace[l]` feeds layer `l`, `trace[L]` is the network output.
    pub fn forward_trace(&self, xi: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(xi.to_vec());
        for layer in &self.layers {
            let next = layer.forward(trace.last().unwrap())?;
            trace.push(next);
        }
        Ok(trace)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.edges())
            .map(SplineEdge::param_count)
            .sum()
    }

    /// Flat parameter vector; per edge (layer, row-major): coefficients,
    /// then base weight, then spline weight.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for e in self.layers.iter().flat_map(|l| l.edges()) {
            p.extend_from_slice(&e.coeffs);
            p.push(e.base_weight);
            p.push(e.spline_weight);
        }
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(shape_err!(
                "{} parameters supplied, network has {}",
                params.len(),
                self.param_count()
            ));
        }
        let mut offset = 0;
        for e in self.layers.iter_mut().flat_map(|l| l.edges_mut()) {
            let n = e.coeffs.len();
            e.coeffs.copy_from_slice(&params[offset..offset + n]);
            e.base_weight = params[offset + n];
            e.spline_weight = params[offset + n + 1];
            offset += n + 2;
        }
        Ok(())
    }

    pub fn apply_prune_mask(&self, mask: &PruneMask) -> Result<KanNetwork> {
        mask.check_shape(self)?;
        let mut out = self.clone();
        for (layer, keep) in out.layers.iter_mut().zip(&mask.keep) {
            for (edge, &k) in layer.edges_mut().iter_mut().zip(keep) {
                if !k {
                    edge.base_weight = 0.0;
                    edge.spline_weight = 0.0;
                }
            }
        }
        Ok(out)
    }
}

pub fn network_forward(net: &KanNetwork, xi: &[f64]) -> Result<Vec<f64>> {
    net.forward(xi)
}

pub fn apply_prune_mask(net: &KanNetwork, mask: &PruneMask) -> Result<KanNetwork> {
    net.apply_prune_mask(mask)
}

/// Keep (`true`) / drop flags, one vector per layer in edge storage order.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PruneMask {
    pub keep: Vec<Vec<bool>>,
}

impl PruneMask {
    pub fn all(net: &KanNetwork, keep: bool) -> Self {
        Self {
            keep: net
                .layers()
                .iter()
                .map(|l| alloc::vec![keep; l.edges().len()])
                .collect(),
        }
    }

    pub fn check_shape(&self, net: &KanNetwork) -> Result<()> {
        let ok = self.keep.len() == net.layers().len()
            && self
                .keep
                .iter()
                .zip(net.layers())
                .all(|(k, l)| k.len() == l.edges().len());
        if ok {
            Ok(())
        } else {
            Err(shape_err!("prune mask does not match network shape {:?}", net.widths()))
        }
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().flatten().filter(|&&k| k).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_edge(t_min: f64, t_max: f64) -> SplineEdge {
        // Cubic splines reproduce linear functions exactly with Greville
        // abscissae as coefficients.
        let grid = SplineGrid::new(t_min, t_max, 5, 3).unwrap();
        let k = grid.degree();
        let coeffs = (0..grid.basis_count())
            .map(|i| grid.knots()[i + 1..=i + k].iter().sum::<f64>() / k as f64)
            .collect();
        SplineEdge::new(grid, coeffs, 0.0, 1.0).unwrap()
    }

    #[test]
    fn zero_edge_and_base_only() {
        let grid = SplineGrid::new(-1.0, 1.0, 5, 3).unwrap();
        let z = SplineEdge::zero(grid.clone());
        assert_eq!(edge_activation(&z, 0.7).unwrap(), 0.0);
        let base = SplineEdge::new(grid, alloc::vec![0.3; 8], 1.0, 0.0).unwrap();
        assert_eq!(edge_activation(&base, 0.0).unwrap(), 0.0);
        let v = edge_activation(&base, 10.0).unwrap();
        assert!((v - 10.0 / (1.0 + (-10.0f64).exp())).abs() < 1e-12);
        assert!((v - 9.999_546).abs() < 1e-6);
        assert!(edge_activation(&base, f64::NAN).is_err());
    }

    #[test]
    fn layer_shapes_and_sums() {
        let e = identity_edge(-1.0, 1.0);
        let layer = KanLayer::new(2, 1, alloc::vec![e.clone(), e.clone()]).unwrap();
        let y = layer.forward(&[0.2, 0.3]).unwrap();
        assert!((y[0] - 0.5).abs() < 2e-3);
        assert!(layer.forward(&[0.2]).is_err());
        assert!(KanLayer::new(2, 2, alloc::vec![e]).is_err());
    }

    #[test]
    fn parameters_round_trip() {
        let net = KanNetwork::new(
            &[2, 3, 1],
            &KanInit {
                seed: 4,
                ..KanInit::default()
            },
        )
        .unwrap();
        let p = net.parameters();
        assert_eq!(p.len(), net.param_count());
        assert_eq!(p.len(), 9 * 10);
        let mut other = KanNetwork::new(
            &[2, 3, 1],
            &KanInit {
                seed: 5,
                ..KanInit::default()
            },
        )
        .unwrap();
        assert_ne!(other.parameters(), p);
        other.set_parameters(&p).unwrap();
        assert_eq!(other, net);
        assert!(other.set_parameters(&p[1..]).is_err());
    }

    #[test]
    fn prune_masks() {
        let net = KanNetwork::new(
            &[2, 2, 1],
            &KanInit {
                seed: 1,
                ..KanInit::default()
            },
        )
        .unwrap();
        let x = [0.3, -0.4];
        let kept = net.apply_prune_mask(&PruneMask::all(&net, true)).unwrap();
        assert_eq!(kept.forward(&x).unwrap(), net.forward(&x).unwrap());
        let dropped = net.apply_prune_mask(&PruneMask::all(&net, false)).unwrap();
        assert_eq!(dropped.forward(&x).unwrap(), [0.0]);
        let bad = PruneMask {
            keep: alloc::vec![alloc::vec![true; 4]],
        };
        assert!(net.apply_prune_mask(&bad).is_err());
    }

    #[test]
    fn from_layers_checks_chaining() {
        let grid = SplineGrid::new(-1.0, 1.0, 3, 2).unwrap();
        let l0 = KanLayer::new(2, 3, alloc::vec![SplineEdge::zero(grid.clone()); 6]).unwrap();
        let l1 = KanLayer::new(2, 1, alloc::vec![SplineEdge::zero(grid); 2]).unwrap();
        assert!(KanNetwork::from_layers(alloc::vec![l0, l1]).is_err());
    }
}
