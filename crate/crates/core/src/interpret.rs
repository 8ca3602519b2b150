//! Activation snapshots and symbolic candidate fitting for trained edges.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kan::KanNetwork;
use crate::math;
use crate::train::layer_inputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SnapshotTag {
    Before,
    After,
}

/// Samples of one edge activation on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActivationSnapshot {
    pub layer: usize,
    pub output: usize,
    pub input: usize,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub tag: SnapshotTag,
}

/// Observed input range of every node feeding `layer`.
pub fn input_ranges(net: &KanNetwork, layer: usize, sample_inputs: &[f64]) -> Result<Vec<(f64, f64)>> {
    if layer >= net.layers().len() {
        return Err(Error::Config(alloc::format!(
            "layer {layer} out of range; network has {} layers",
            net.layers().len()
        )));
    }
    let n0 = net.input_dim();
    if sample_inputs.is_empty() || !sample_inputs.len().is_multiple_of(n0) {
        return Err(Error::Domain(
            "activation snapshots need at least one sample row".into(),
        ));
    }
    let rows = sample_inputs.len() / n0;
    let acts = layer_inputs(net, sample_inputs, rows)?;
    let x = &acts[layer];
    let n_in = net.layers()[layer].n_in();
    Ok((0..n_in)
        .map(|i| {
            let (lo, hi) = (0..rows).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), n| {
                let v = x[n * n_in + i];
                (lo.min(v), hi.max(v))
            });
            if hi > lo {
                (lo, hi)
            } else {
                // constant input: widen so the x grid stays strictly increasing
                let pad = 0.5 * lo.abs().max(1.0);
                (lo - pad, hi + pad)
            }
        })
        .collect())
}

/// Evaluates every edge of `layer` at `n_points` uniform points spanning the
/// observed range of its input node.
pub fn snapshot_activations(
    net: &KanNetwork,
    layer: usize,
    sample_inputs: &[f64],
    n_points: usize,
    tag: SnapshotTag,
) -> Result<Vec<ActivationSnapshot>> {
    let ranges = input_ranges(net, layer, sample_inputs)?;
    snapshot_on_ranges(net, layer, &ranges, n_points, tag)
}

/// Snapshots on explicit per-input ranges, so two networks (e.g. before and
/// after training) can share identical x grids.
pub fn snapshot_on_ranges(
    net: &KanNetwork,
    layer: usize,
    ranges: &[(f64, f64)],
    n_points: usize,
    tag: SnapshotTag,
) -> Result<Vec<ActivationSnapshot>> {
    let l = net
        .layers()
        .get(layer)
        .ok_or_else(|| Error::Config(alloc::format!("layer {layer} out of range")))?;
    if ranges.len() != l.n_in() {
        return Err(crate::error::shape_err!(
            "{} ranges for {} layer inputs",
            ranges.len(),
            l.n_in()
        ));
    }
    if n_points < 2 {
        return Err(Error::Config("snapshots need at least two points".into()));
    }
    let mut out = Vec::with_capacity(l.edges().len());
    for j in 0..l.n_out() {
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            let edge = l.edge(j, i);
            let x: Vec<f64> = (0..n_points)
                .map(|p| lo + (hi - lo) * p as f64 / (n_points - 1) as f64)
                .collect();
            let values = x.iter().map(|&v| edge.activation(v)).collect();
            out.push(ActivationSnapshot {
                layer,
                output: j,
                input: i,
                x,
                values,
                tag,
            });
        }
    }
    Ok(out)
}

/// Library of elementary shapes `g` used in `c·g(a·x + b) + d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Candidate {
    Linear,
    Quadratic,
    Cubic,
    Sine,
    Exponential,
    Logarithm,
    AbsoluteValue,
    HyperbolicTangent,
    SquareRoot,
}

impl Candidate {
    pub const ALL: [Candidate; 9] = [
        Candidate::Linear,
        Candidate::Quadratic,
        Candidate::Cubic,
        Candidate::Sine,
        Candidate::Exponential,
        Candidate::Logarithm,
        Candidate::AbsoluteValue,
        Candidate::HyperbolicTangent,
        Candidate::SquareRoot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Candidate::Linear => "linear",
            Candidate::Quadratic => "quadratic",
            Candidate::Cubic => "cubic",
            Candidate::Sine => "sine",
            Candidate::Exponential => "exponential",
            Candidate::Logarithm => "logarithm",
            Candidate::AbsoluteValue => "absolute-value",
            Candidate::HyperbolicTangent => "hyperbolic-tangent",
            Candidate::SquareRoot => "square-root",
        }
    }

    /// `g(u)`, or `None` outside its domain.
    pub fn apply(self, u: f64) -> Option<f64> {
        let v = match self {
            Candidate::Linear => u,
            Candidate::Quadratic => u * u,
            Candidate::Cubic => u * u * u,
            Candidate::Sine => math::sin(u),
            Candidate::Exponential => math::exp(u),
            Candidate::Logarithm => {
                if u <= 0.0 {
                    return None;
                }
                math::ln(u)
            }
            Candidate::AbsoluteValue => u.abs(),
            Candidate::HyperbolicTangent => math::tanh(u),
            Candidate::SquareRoot => {
                if u < 0.0 {
                    return None;
                }
                math::sqrt(u)
            }
        };
        v.is_finite().then_some(v)
    }
}

/// Best `c·g(a·x + b) + d` for one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SymbolicFit {
    pub candidate: Candidate,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub r_squared: f64,
}

impl SymbolicFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.candidate
            .apply(self.a * x + self.b)
            .map_or(f64::NAN, |g| self.c * g + self.d)
    }
}

const A_MULTIPLIERS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
const B_OFFSETS: usize = 11;
const REFINE_ROUNDS: usize = 2;
const REFINE_MOVES: usize = 200;
/// Smallest `r²` gain accepted as an improvement, so rounding noise
/// cannot steer the search.
const MIN_GAIN: f64 = 1e-12;

/// Relative spread of `g(a·x + b)` below which the candidate is treated as
/// numerically constant (e.g. a saturated `tanh`) and the pair is skipped.
const MIN_RELATIVE_SPREAD: f64 = 1e-5;
/// Candidates whose `r²` is within this margin of the best count as ties;
/// ties go to the earliest entry of [`Candidate::ALL`].
pub const TIE_MARGIN: f64 = 1e-3;

/// Closed-form `(c, d, r²)` for fixed `(a, b)`; `None` if any point leaves
/// the candidate's domain or the candidate is flat over the data.
fn fit_linear_part(candidate: Candidate, xs: &[f64], ys: &[f64], a: f64, b: f64) -> Option<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let mut g = Vec::with_capacity(xs.len());
    for &x in xs {
        g.push(candidate.apply(a * x + b)?);
    }
    let g_mean = g.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sgg = 0.0;
    let mut sgy = 0.0;
    let mut syy = 0.0;
    for (&gi, &yi) in g.iter().zip(ys) {
        sgg += (gi - g_mean) * (gi - g_mean);
        sgy += (gi - g_mean) * (yi - y_mean);
        syy += (yi - y_mean) * (yi - y_mean);
    }
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if math::sqrt(sgg / n) < MIN_RELATIVE_SPREAD * scale {
        return None;
    }
    let c = sgy / sgg;
    let d = y_mean - c * g_mean;
    let ss_res: f64 = g
        .iter()
        .zip(ys)
        .map(|(&gi, &yi)| {
            let r = yi - (c * gi + d);
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 {
        1.0 - ss_res / syy
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    (c.is_finite() && d.is_finite() && r2.is_finite()).then_some((c, d, r2))
}

/// Best fit of one candidate: coarse `(a, b)` grid, closed-form `(c, d)`,
/// then neighborhood refinement of `(a, b)`.
pub fn fit_candidate(snapshot: &ActivationSnapshot, candidate: Candidate) -> Result<SymbolicFit> {
    let (xs, ys) = (&snapshot.x, &snapshot.values);
    if xs.len() < 10 || xs.len() != ys.len() {
        return Err(Error::Domain(alloc::format!(
            "symbolic fitting needs at least 10 matching points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Domain("snapshot contains non-finite values".into()));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (lo + hi);
    let half = (0.5 * (hi - lo)).max(1e-12);

    // a·x + b = (a0/half)·(x - center) + β: the argument sweeps ±a0 over the
    // data, shifted by β.
    let eval = |a0: f64, beta: f64| -> Option<(SymbolicFit, f64)> {
        let a = a0 / half;
        let b = beta - a * center;
        let (c, d, r2) = fit_linear_part(candidate, xs, ys, a, b)?;
        Some((
            SymbolicFit {
                candidate,
                a,
                b,
                c,
                d,
                r_squared: r2,
            },
            r2,
        ))
    };

    let mut best: Option<(f64, f64, SymbolicFit)> = None;
    let a_max = 2.0 * A_MULTIPLIERS[A_MULTIPLIERS.len() - 1];
    let beta_span = 2.0 * A_MULTIPLIERS[A_MULTIPLIERS.len() - 1];
    let consider = |best: &mut Option<(f64, f64, SymbolicFit)>, a0: f64, beta: f64| {
        if a0 == 0.0 || a0.abs() > a_max || beta.abs() > 2.0 * beta_span {
            return;
        }
        if let Some((fit, r2)) = eval(a0, beta) {
            if best.as_ref().is_none_or(|(_, _, b)| r2 > b.r_squared + MIN_GAIN) {
                *best = Some((a0, beta, fit));
            }
        }
    };
    let beta_step = 2.0 * beta_span / (B_OFFSETS - 1) as f64;
    for &m in &A_MULTIPLIERS {
        for a0 in [m, -m] {
            for k in 0..B_OFFSETS {
                consider(&mut best, a0, -beta_span + beta_step * k as f64);
            }
        }
    }

    // Refinement: each round runs a compass search over (a0, β) inside a
    // box twice the coarse grid, halving the step whenever no neighbor
    // improves.
    if let Some((mut a0, mut beta, _)) = best {
        for _ in 0..REFINE_ROUNDS {
            let mut da = 0.5 * a0.abs().max(0.25);
            let mut db = 0.5 * beta_step;
            let mut moves = 0;
            while da > 1e-9 && db > 1e-9 && moves < REFINE_MOVES {
                moves += 1;
                let before = best.as_ref().unwrap().2.r_squared;
                for (sa, sb) in [
                    (1.0, 0.0),
                    (-1.0, 0.0),
                    (0.0, 1.0),
                    (0.0, -1.0),
                    (1.0, 1.0),
                    (-1.0, -1.0),
                    (1.0, -1.0),
                    (-1.0, 1.0),
                ] {
                    consider(&mut best, a0 + sa * da, beta + sb * db);
                }
                let (na, nb, fit) = best.as_ref().unwrap();
                if fit.r_squared > before {
                    a0 = *na;
                    beta = *nb;
                } else {
                    da *= 0.5;
                    db *= 0.5;
                }
            }
        }
    }

    best.map(|(_, _, fit)| fit).ok_or_else(|| {
        Error::Domain(alloc::format!(
            "no admissible parameters for candidate {}",
            candidate.name()
        ))
    })
}

/// Best candidate over the whole library by `r²`, preferring the earlier
/// entry of [`Candidate::ALL`] on ties within [`TIE_MARGIN`]. Constant
/// snapshots return a linear fit with `c = 0`.
pub fn fit_symbolic(snapshot: &ActivationSnapshot) -> Result<SymbolicFit> {
    let ys = &snapshot.values;
    if ys.len() >= 10 && ys.iter().all(|&v| v == ys[0]) && ys[0].is_finite() {
        return Ok(SymbolicFit {
            candidate: Candidate::Linear,
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: ys[0],
            r_squared: 1.0,
        });
    }
    let mut fits = Vec::new();
    let mut first_err = None;
    for cand in Candidate::ALL {
        match fit_candidate(snapshot, cand) {
            Ok(fit) => fits.push(fit),
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    let top = fits.iter().map(|f| f.r_squared).fold(f64::NEG_INFINITY, f64::max);
    fits.into_iter()
        .find(|f| f.r_squared >= top - TIE_MARGIN)
        .ok_or_else(|| first_err.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::{KanInit, KanLayer, SplineEdge};
    use crate::spline::{fit_coefficients, SplineGrid};
    use alloc::vec;

    fn snapshot(x: Vec<f64>, f: impl Fn(f64) -> f64) -> ActivationSnapshot {
        let values = x.iter().map(|&v| f(v)).collect();
        ActivationSnapshot {
            layer: 0,
            output: 0,
            input: 0,
            x,
            values,
            tag: SnapshotTag::After,
        }
    }

    fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn linear_exact() {
        let fit = fit_symbolic(&snapshot(linspace(-2.0, 3.0, 50), |x| 2.0 * x + 1.0)).unwrap();
        assert_eq!(fit.candidate, Candidate::Linear);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sine_recovered() {
        let pi = core::f64::consts::PI;
        let fit = fit_symbolic(&snapshot(linspace(-pi, pi, 100), math::sin)).unwrap();
        assert_eq!(fit.candidate, Candidate::Sine, "{fit:?}");
        assert!(fit.r_squared > 0.999);
    }

    #[test]
    fn absolute_value_beats_quadratic() {
        let s = snapshot(linspace(-1.0, 1.0, 101), f64::abs);
        let abs = fit_candidate(&s, Candidate::AbsoluteValue).unwrap();
        let quad = fit_candidate(&s, Candidate::Quadratic).unwrap();
        assert!(abs.r_squared > quad.r_squared);
        assert_eq!(fit_symbolic(&s).unwrap().candidate, Candidate::AbsoluteValue);
    }

    #[test]
    fn constant_snapshot_is_degenerate_linear() {
        let fit = fit_symbolic(&snapshot(linspace(0.0, 1.0, 20), |_| 3.5)).unwrap();
        assert_eq!(fit.candidate, Candidate::Linear);
        assert_eq!(fit.c, 0.0);
        assert_eq!(fit.d, 3.5);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn too_few_points() {
        assert!(fit_symbolic(&snapshot(linspace(0.0, 1.0, 9), |x| x)).is_err());
    }

    #[test]
    fn snapshots_of_zero_and_identity_edges() {
        let grid = SplineGrid::new(-1.0, 1.0, 5, 3).unwrap();
        let xs = linspace(-1.0, 1.0, 200);
        let fit = fit_coefficients(&grid, &xs, &xs).unwrap();
        let identity = SplineEdge::new(grid.clone(), fit.coeffs, 0.0, 1.0).unwrap();
        let zero = SplineEdge::zero(grid);
        let net = KanNetwork::from_layers(vec![KanLayer::new(1, 2, vec![identity, zero]).unwrap()]).unwrap();
        let snaps = snapshot_activations(&net, 0, &[-1.0, 0.3, 1.0], 3, SnapshotTag::After).unwrap();
        assert_eq!(snaps.len(), 2);
        for (v, e) in snaps[0].values.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((v - e).abs() < 2e-3);
        }
        assert!(snaps[1].values.iter().all(|&v| v == 0.0));
        assert!(snapshot_activations(&net, 0, &[], 3, SnapshotTag::After).is_err());
        assert!(snapshot_activations(&net, 1, &[0.0], 3, SnapshotTag::After).is_err());
    }

    #[test]
    fn snapshots_do_not_perturb_network() {
        let net = KanNetwork::new(
            &[2, 3, 1],
            &KanInit {
                seed: 8,
                ..KanInit::default()
            },
        )
        .unwrap();
        let before = net.forward(&[0.2, -0.5]).unwrap();
        let _ = snapshot_activations(&net, 1, &[0.2, -0.5, 0.7, 0.1], 16, SnapshotTag::Before).unwrap();
        assert_eq!(net.forward(&[0.2, -0.5]).unwrap(), before);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn target(kind: u8, p: f64, x: f64) -> f64 {
            match kind {
                0 => p * x * x - x,
                1 => math::sin(p * x) + 0.1 * x,
                2 => math::exp(0.5 * p * x),
                _ => math::tanh(p * x) + 0.05 * x * x * x,
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn affine_rescaling_keeps_the_fit(
                kind in 0u8..4,
                p in 0.5f64..2.0,
                lo in -3.0f64..0.0,
                width in 0.5f64..4.0,
                alpha in prop_oneof![-4.0f64..-0.25, 0.25f64..4.0],
                beta in -5.0f64..5.0,
            ) {
                let xs = linspace(lo, lo + width, 40);
                let raw = snapshot(xs.clone(), |x| target(kind, p, x));
                let scaled = snapshot(xs, |x| alpha * target(kind, p, x) + beta);
                let a = fit_symbolic(&raw).unwrap();
                let b = fit_symbolic(&scaled).unwrap();
                prop_assert!((a.r_squared - b.r_squared).abs() <= 1e-9, "{a:?} vs {b:?}");
                if a.candidate != b.candidate {
                    // a tie at rounding level may swap the winner
                    let other = fit_candidate(&scaled, a.candidate).unwrap();
                    prop_assert!((other.r_squared - b.r_squared).abs() <= 1e-9);
                }
            }

            #[test]
            fn returned_fit_is_the_best_candidate(kind in 0u8..4, p in 0.5f64..2.0, lo in -3.0f64..0.0) {
                let s = snapshot(linspace(lo, lo + 2.0, 30), |x| target(kind, p, x));
                let best = fit_symbolic(&s).unwrap();
                prop_assert!(best.r_squared <= 1.0);
                let mut earlier = true;
                for cand in Candidate::ALL {
                    if cand == best.candidate {
                        earlier = false;
                    }
                    if let Ok(fit) = fit_candidate(&s, cand) {
                        prop_assert!(fit.r_squared <= best.r_squared + TIE_MARGIN);
                        if earlier {
                            prop_assert!(fit.r_squared < best.r_squared);
                        }
                    }
                }
            }
        }
    }
}
