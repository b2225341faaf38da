//! Network representation, loading and evaluation, plus the reduction of
//! classification and metric questions to scalar margin objectives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, spectral_norm_power, sub, Mat};

/// Power-iteration budget used to check the equilibrium spectral condition.
const SPECTRAL_CHECK_ITERS: usize = 200;
const SPECTRAL_CHECK_TOL: f64 = 1e-10;

/// Default fixed-point tolerance and iteration cap for [`deq_forward`].
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-10;
pub const DEFAULT_FIXED_POINT_ITERS: usize = 10_000;

/// Element-wise nonlinearity attached to a layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    /// ReLU clipped at `theta` from above: min(max(x, 0), theta).
    ReluTheta { theta: f64 },
    /// Only the secant-slope bounds are known; the function itself is not
    /// evaluable. Usable in difference (Lipschitz) analyses only.
    SlopeRestricted { lower: f64, upper: f64 },
}

impl ActivationKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationKind::Relu => Ok(()),
            ActivationKind::ReluTheta { theta } => {
                if theta > 0.0 && theta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidTheta(theta))
                }
            }
            ActivationKind::SlopeRestricted { lower, upper } => {
                if lower <= upper && lower.is_finite() && upper.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidSlopeBounds { lower, upper })
                }
            }
        }
    }

    /// Concrete function value; errors for slope-only activations.
    pub fn apply(&self, x: f64) -> Result<f64> {
        match *self {
            ActivationKind::Relu => Ok(x.max(0.0)),
            ActivationKind::ReluTheta { theta } => Ok(x.max(0.0).min(theta)),
            ActivationKind::SlopeRestricted { .. } => {
                Err(Error::NonEvaluable("slope-restricted activation"))
            }
        }
    }

    /// Subgradient with the kink convention fixed at 0.
    pub fn subgradient(&self, x: f64) -> Result<f64> {
        match *self {
            ActivationKind::Relu => Ok(if x > 0.0 { 1.0 } else { 0.0 }),
            ActivationKind::ReluTheta { theta } => Ok(if x > 0.0 && x < theta { 1.0 } else { 0.0 }),
            ActivationKind::SlopeRestricted { .. } => {
                Err(Error::NonEvaluable("slope-restricted activation"))
            }
        }
    }

    /// Secant slope bounds [lower, upper].
    pub fn slope_bounds(&self) -> (f64, f64) {
        match *self {
            ActivationKind::Relu | ActivationKind::ReluTheta { .. } => (0.0, 1.0),
            ActivationKind::SlopeRestricted { lower, upper } => (lower, upper),
        }
    }
}

/// One block of a network.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Affine { weights: Mat, bias: Vec<f64> },
    Activation { kind: ActivationKind, width: usize },
    /// Implicit layer: z = sigma(W z + U x + b), with x the block input.
    Equilibrium { weights: Mat, input_map: Mat, bias: Vec<f64>, kind: ActivationKind },
}

impl Block {
    pub fn input_width(&self) -> usize {
        match self {
            Block::Affine { weights, .. } => weights.cols(),
            Block::Activation { width, .. } => *width,
            Block::Equilibrium { input_map, .. } => input_map.cols(),
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            Block::Affine { weights, .. } => weights.rows(),
            Block::Activation { width, .. } => *width,
            Block::Equilibrium { weights, .. } => weights.rows(),
        }
    }
}

/// Anchors of a metric-learning head; each anchor is a unit vector in the
/// representation space.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricHead {
    pub anchors: Vec<Vec<f64>>,
}

/// How far an anchor may deviate from unit norm before we renormalize, and
/// before we reject outright.
const ANCHOR_EXACT_TOL: f64 = 1e-9;
const ANCHOR_RENORM_TOL: f64 = 1e-6;

impl MetricHead {
    fn validated(anchors: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        let mut out = Vec::with_capacity(anchors.len());
        for anchor in anchors {
            if anchor.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "metric anchor",
                    expected: dim,
                    found: anchor.len(),
                });
            }
            if anchor.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteWeight("metric anchor"));
            }
            let norm = norm2(&anchor);
            if (norm - 1.0).abs() <= ANCHOR_EXACT_TOL {
                out.push(anchor);
            } else if (norm - 1.0).abs() <= ANCHOR_RENORM_TOL {
                out.push(anchor.iter().map(|v| v / norm).collect());
            } else {
                return Err(Error::Parse(format!("metric anchor has norm {norm}, expected 1")));
            }
        }
        Ok(MetricHead { anchors: out })
    }
}

/// A layered network: the object being verified.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub blocks: Vec<Block>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub metric_head: Option<MetricHead>,
}

/// Which l_p ball bounds the input perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    One,
    Two,
    Inf,
    /// p = num/den with num/den >= 1.
    Rational { num: u32, den: u32 },
}

impl NormKind {
    pub fn rational(num: u32, den: u32) -> Result<Self> {
        if den == 0 || num < den {
            return Err(Error::InvalidExponent { num, den });
        }
        let g = gcd(num, den);
        Ok(NormKind::Rational { num: num / g, den: den / g })
    }

    /// The exponent p as a float (infinity for the sup norm).
    pub fn exponent(&self) -> f64 {
        match *self {
            NormKind::One => 1.0,
            NormKind::Two => 2.0,
            NormKind::Inf => f64::INFINITY,
            NormKind::Rational { num, den } => num as f64 / den as f64,
        }
    }

    /// Dual exponent q with 1/p + 1/q = 1.
    pub fn dual_exponent(&self) -> f64 {
        match *self {
            NormKind::One => f64::INFINITY,
            NormKind::Two => 2.0,
            NormKind::Inf => 1.0,
            NormKind::Rational { num, den } => {
                if num == den {
                    f64::INFINITY
                } else {
                    num as f64 / (num - den) as f64
                }
            }
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        match *self {
            NormKind::One => crate::linalg::norm1(v),
            NormKind::Two => norm2(v),
            NormKind::Inf => crate::linalg::norm_inf(v),
            NormKind::Rational { .. } => crate::linalg::norm_p(v, self.exponent()),
        }
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            NormKind::One => write!(f, "1"),
            NormKind::Two => write!(f, "2"),
            NormKind::Inf => write!(f, "inf"),
            NormKind::Rational { num, den } => write!(f, "{num}/{den}"),
        }
    }
}

/// Input perturbation ball. `center` is present for local (data-dependent)
/// analysis and absent for data-independent analysis, where the ball is
/// centered at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub norm: NormKind,
    pub eps: f64,
    pub center: Option<Vec<f64>>,
}

impl PerturbationSpec {
    pub fn local(norm: NormKind, eps: f64, center: Vec<f64>) -> Result<Self> {
        let spec = PerturbationSpec { norm, eps, center: Some(center) };
        spec.validate(None)?;
        Ok(spec)
    }

    pub fn data_independent(norm: NormKind, eps: f64) -> Result<Self> {
        let spec = PerturbationSpec { norm, eps, center: None };
        spec.validate(None)?;
        Ok(spec)
    }

    pub fn validate(&self, expected_dim: Option<usize>) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::Parse(format!("invalid perturbation radius {}", self.eps)));
        }
        if let NormKind::Rational { num, den } = self.norm {
            if den == 0 || num < den {
                return Err(Error::InvalidExponent { num, den });
            }
        }
        if let (Some(center), Some(dim)) = (&self.center, expected_dim) {
            if center.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "perturbation center",
                    expected: dim,
                    found: center.len(),
                });
            }
        }
        Ok(())
    }

    /// Center coordinate, treating an absent center as the origin.
    pub fn center_coord(&self, i: usize) -> f64 {
        self.center.as_ref().map_or(0.0, |c| c[i])
    }
}

// ---------------------------------------------------------------------------
// Model file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    input_dim: usize,
    blocks: Vec<BlockFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metric_head: Option<MetricHeadFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum BlockFile {
    Affine { #[serde(rename = "W")] w: Vec<Vec<f64>>, b: Vec<f64> },
    Activation { kind: ActivationKindFile },
    Equilibrium {
        #[serde(rename = "W")]
        w: Vec<Vec<f64>>,
        #[serde(rename = "U")]
        u: Vec<Vec<f64>>,
        b: Vec<f64>,
        kind: ActivationKindFile,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ActivationKindFile {
    Relu,
    ReluTheta(f64),
    Slope([f64; 2]),
}

impl From<ActivationKindFile> for ActivationKind {
    fn from(k: ActivationKindFile) -> Self {
        match k {
            ActivationKindFile::Relu => ActivationKind::Relu,
            ActivationKindFile::ReluTheta(theta) => ActivationKind::ReluTheta { theta },
            ActivationKindFile::Slope([lower, upper]) => {
                ActivationKind::SlopeRestricted { lower, upper }
            }
        }
    }
}

/// Parse and validate a model file (see the README for the schema).
pub fn load_network(bytes: &[u8]) -> Result<Network> {
    let file: NetworkFile =
        serde_json::from_slice(bytes).map_err(|e| Error::Parse(format!("model file: {e}")))?;
    let mut blocks = Vec::with_capacity(file.blocks.len());
    let mut width = file.input_dim;
    if width == 0 {
        return Err(Error::Parse("input_dim must be positive".into()));
    }
    for (idx, block) in file.blocks.into_iter().enumerate() {
        let block = match block {
            BlockFile::Affine { w, b } => {
                let weights = Mat::from_rows(&w)?;
                if !weights.is_finite() || b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteWeight("affine block"));
                }
                if weights.rows() != b.len() {
                    return Err(Error::DimensionMismatch {
                        context: "affine bias",
                        expected: weights.rows(),
                        found: b.len(),
                    });
                }
                Block::Affine { weights, bias: b }
            }
            BlockFile::Activation { kind } => {
                let kind: ActivationKind = kind.into();
                kind.validate()?;
                Block::Activation { kind, width }
            }
            BlockFile::Equilibrium { w, u, b, kind } => {
                let weights = Mat::from_rows(&w)?;
                let input_map = Mat::from_rows(&u)?;
                let kind: ActivationKind = kind.into();
                kind.validate()?;
                if !weights.is_finite() || !input_map.is_finite() || b.iter().any(|v| !v.is_finite())
                {
                    return Err(Error::NonFiniteWeight("equilibrium block"));
                }
                let n = weights.rows();
                if weights.cols() != n {
                    return Err(Error::DimensionMismatch {
                        context: "equilibrium feedback matrix",
                        expected: n,
                        found: weights.cols(),
                    });
                }
                if input_map.rows() != n || b.len() != n {
                    return Err(Error::DimensionMismatch {
                        context: "equilibrium block",
                        expected: n,
                        found: if input_map.rows() != n { input_map.rows() } else { b.len() },
                    });
                }
                let norm = spectral_norm_power(&weights, SPECTRAL_CHECK_ITERS, SPECTRAL_CHECK_TOL);
                if norm >= 1.0 {
                    return Err(Error::SpectralConditionViolated { norm });
                }
                Block::Equilibrium { weights, input_map, bias: b, kind }
            }
        };
        if block.input_width() != width {
            let found = block.input_width();
            let _ = idx;
            return Err(Error::DimensionMismatch {
                context: "adjacent blocks",
                expected: width,
                found,
            });
        }
        width = block.output_width();
        blocks.push(block);
    }
    let metric_head = match file.metric_head {
        Some(head) => Some(MetricHead::validated(head.anchors, width)?),
        None => None,
    };
    Ok(Network { blocks, input_dim: file.input_dim, output_dim: width, metric_head })
}

#[derive(Serialize, Deserialize)]
struct MetricHeadFile {
    anchors: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

fn apply_block(block: &Block, x: &[f64]) -> Result<Vec<f64>> {
    match block {
        Block::Affine { weights, bias } => {
            let mut y = weights.matvec(x);
            for (yi, bi) in y.iter_mut().zip(bias) {
                *yi += bi;
            }
            Ok(y)
        }
        Block::Activation { kind, .. } => x.iter().map(|&v| kind.apply(v)).collect(),
        Block::Equilibrium { .. } => Err(Error::NonEvaluable("equilibrium block in forward")),
    }
}

/// Evaluate a feed-forward network (no equilibrium blocks) at `x`.
pub fn forward(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != net.input_dim {
        return Err(Error::DimensionMismatch {
            context: "forward input",
            expected: net.input_dim,
            found: x.len(),
        });
    }
    let mut cur = x.to_vec();
    for block in &net.blocks {
        cur = apply_block(block, &cur)?;
    }
    Ok(cur)
}

/// Evaluate the representation layer: all blocks except a trailing affine.
pub fn representation(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != net.input_dim {
        return Err(Error::DimensionMismatch {
            context: "representation input",
            expected: net.input_dim,
            found: x.len(),
        });
    }
    let upto = match net.blocks.last() {
        Some(Block::Affine { .. }) => net.blocks.len() - 1,
        _ => net.blocks.len(),
    };
    let mut cur = x.to_vec();
    for block in &net.blocks[..upto] {
        cur = apply_block(block, &cur)?;
    }
    Ok(cur)
}

/// Fixed point of the (single) equilibrium block, reached by iteration from
/// z = 0. Blocks before the equilibrium are applied to `x` first.
pub fn deq_forward(net: &Network, x: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if x.len() != net.input_dim {
        return Err(Error::DimensionMismatch {
            context: "deq input",
            expected: net.input_dim,
            found: x.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::Parse(format!("fixed-point tolerance must be positive, got {tol}")));
    }
    let mut cur = x.to_vec();
    for block in &net.blocks {
        if let Block::Equilibrium { weights, input_map, bias, kind } = block {
            let norm = spectral_norm_power(weights, SPECTRAL_CHECK_ITERS, SPECTRAL_CHECK_TOL);
            if norm >= 1.0 {
                return Err(Error::SpectralConditionViolated { norm });
            }
            let drive = {
                let mut d = input_map.matvec(&cur);
                for (di, bi) in d.iter_mut().zip(bias) {
                    *di += bi;
                }
                d
            };
            let n = weights.rows();
            let mut z = vec![0.0; n];
            for _ in 0..max_iter {
                let mut next = weights.matvec(&z);
                for i in 0..n {
                    next[i] = kind.apply(next[i] + drive[i])?;
                }
                let residual = norm2(&sub(&next, &z));
                z = next;
                if residual <= tol {
                    // Residual of the fixed-point equation itself.
                    let mut check = weights.matvec(&z);
                    for i in 0..n {
                        check[i] = kind.apply(check[i] + drive[i])?;
                    }
                    if norm2(&sub(&check, &z)) <= tol {
                        return Ok(z);
                    }
                }
            }
            return Err(Error::NoConvergence { what: "fixed-point iteration", iterations: max_iter });
        }
        cur = apply_block(block, &cur)?;
    }
    Err(Error::InvalidProblem("network has no equilibrium block"))
}

// ---------------------------------------------------------------------------
// Margin reductions
// ---------------------------------------------------------------------------

/// Scalar objective over a representation: weights . z + offset.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginObjective {
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl MarginObjective {
    pub fn eval(&self, z: &[f64]) -> f64 {
        dot(&self.weights, z) + self.offset
    }
}

/// Margin between a competitor class and the predicted class: maximizing the
/// returned objective over reachable representations answers whether class
/// `competitor` can overtake class `predicted`.
pub fn margin_network(net: &Network, predicted: usize, competitor: usize) -> Result<MarginObjective> {
    let Some(Block::Affine { weights, bias }) = net.blocks.last() else {
        return Err(Error::InvalidProblem("final block must be affine for margins"));
    };
    let classes = weights.rows();
    if classes < 2 {
        return Err(Error::InvalidClassIndex { index: competitor, classes });
    }
    for idx in [predicted, competitor] {
        if idx >= classes {
            return Err(Error::InvalidClassIndex { index: idx, classes });
        }
    }
    if predicted == competitor {
        return Err(Error::InvalidClassIndex { index: competitor, classes });
    }
    let v: Vec<f64> =
        (0..weights.cols()).map(|c| weights.get(competitor, c) - weights.get(predicted, c)).collect();
    Ok(MarginObjective { weights: v, offset: bias[competitor] - bias[predicted] })
}

/// Margin between two anchors of a metric head: the returned objective is
/// (other - closest) . z, positive when `other` can become the closer anchor.
pub fn metric_margin(head: &MetricHead, closest: usize, other: usize) -> Result<MarginObjective> {
    let anchors = head.anchors.len();
    for idx in [closest, other] {
        if idx >= anchors {
            return Err(Error::InvalidAnchorIndex { index: idx, anchors });
        }
    }
    if closest == other {
        return Err(Error::InvalidAnchorIndex { index: other, anchors });
    }
    let v = sub(&head.anchors[other], &head.anchors[closest]);
    Ok(MarginObjective { weights: v, offset: 0.0 })
}

/// Predicted anchor index: the one closest to the normalized representation.
pub fn closest_anchor(head: &MetricHead, z: &[f64]) -> usize {
    // On the unit sphere, closest anchor = largest inner product; the
    // normalization of z does not change the argmax for z != 0.
    let mut best = 0;
    let mut best_ip = f64::NEG_INFINITY;
    for (i, anchor) in head.anchors.iter().enumerate() {
        let ip = dot(anchor, z);
        if ip > best_ip {
            best_ip = ip;
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Canonical task views consumed by the encoders
// ---------------------------------------------------------------------------

/// One affine layer followed by an element-wise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLayer {
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub activation: ActivationKind,
}

/// Alternating affine/activation body of a feed-forward network, ending at
/// the representation the margin objective applies to.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerChain {
    pub input_dim: usize,
    pub layers: Vec<ChainLayer>,
}

impl LayerChain {
    pub fn representation_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.weights.rows())
    }

    /// Evaluate the chain, returning per-layer pre-activations and the final
    /// representation.
    pub fn trace(&self, x: &[f64]) -> Result<ChainTrace> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut y = layer.weights.matvec(&cur);
            for (yi, bi) in y.iter_mut().zip(&layer.bias) {
                *yi += bi;
            }
            let z: Result<Vec<f64>> = y.iter().map(|&v| layer.activation.apply(v)).collect();
            let z = z?;
            pre.push(y);
            cur = z.clone();
            post.push(z);
        }
        Ok(ChainTrace { pre_activations: pre, post_activations: post })
    }
}

/// Per-layer values of one concrete execution.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub pre_activations: Vec<Vec<f64>>,
    pub post_activations: Vec<Vec<f64>>,
}

impl ChainTrace {
    pub fn representation(&self) -> &[f64] {
        self.post_activations.last().expect("empty chain has no representation")
    }
}

/// A verification task reduced to "maximize weights . z + offset over the
/// chain's reachable representations".
#[derive(Debug, Clone, PartialEq)]
pub struct MarginTask {
    pub chain: LayerChain,
    pub objective: MarginObjective,
}

impl MarginTask {
    /// Classification margin task: body of the network plus the row
    /// difference of the final affine layer.
    pub fn classification(net: &Network, predicted: usize, competitor: usize) -> Result<Self> {
        let objective = margin_network(net, predicted, competitor)?;
        Self::assemble(net, &net.blocks[..net.blocks.len() - 1], objective)
    }

    /// Metric margin task over the full network output.
    pub fn metric(net: &Network, closest: usize, other: usize) -> Result<Self> {
        let Some(head) = &net.metric_head else {
            return Err(Error::InvalidProblem("network has no metric head"));
        };
        let objective = metric_margin(head, closest, other)?;
        Self::assemble(net, &net.blocks, objective)
    }

    /// Scalar-output network taken as its own margin objective.
    pub fn scalar(net: &Network) -> Result<Self> {
        if net.output_dim != 1 {
            return Err(Error::InvalidProblem("scalar task requires a single-output network"));
        }
        let Some(Block::Affine { .. }) = net.blocks.last() else {
            return Err(Error::InvalidProblem("final block must be affine for margins"));
        };
        let objective = MarginObjective { weights: vec![1.0], offset: 0.0 };
        Self::assemble(net, &net.blocks, objective)
    }

    /// Fold trailing affine blocks into the objective and regroup the rest
    /// into affine+activation layers.
    fn assemble(net: &Network, body: &[Block], mut objective: MarginObjective) -> Result<Self> {
        let mut end = body.len();
        while end > 0 {
            match &body[end - 1] {
                Block::Affine { weights, bias } => {
                    if objective.weights.len() != weights.rows() {
                        return Err(Error::DimensionMismatch {
                            context: "margin objective",
                            expected: weights.rows(),
                            found: objective.weights.len(),
                        });
                    }
                    objective.offset += dot(&objective.weights, bias);
                    objective.weights = weights.matvec_t(&objective.weights);
                    end -= 1;
                }
                _ => break,
            }
        }
        let mut layers = Vec::new();
        let mut idx = 0;
        while idx < end {
            match &body[idx] {
                Block::Affine { weights, bias } => {
                    let Some(Block::Activation { kind, .. }) = body.get(idx + 1) else {
                        return Err(Error::InvalidProblem(
                            "expected activation after interior affine block",
                        ));
                    };
                    layers.push(ChainLayer {
                        weights: weights.clone(),
                        bias: bias.clone(),
                        activation: *kind,
                    });
                    idx += 2;
                }
                Block::Activation { .. } => {
                    return Err(Error::InvalidProblem("activation block without preceding affine"))
                }
                Block::Equilibrium { .. } => {
                    return Err(Error::InvalidProblem("equilibrium block in feed-forward task"))
                }
            }
        }
        Ok(MarginTask {
            chain: LayerChain { input_dim: net.input_dim, layers },
            objective,
        })
    }

    /// Margin value at a concrete input.
    pub fn margin_at(&self, x: &[f64]) -> Result<f64> {
        if self.chain.layers.is_empty() {
            return Ok(self.objective.eval(x));
        }
        let trace = self.chain.trace(x)?;
        Ok(self.objective.eval(trace.representation()))
    }
}

/// Equilibrium task: objective over the fixed point z of
/// z = sigma(W z + U x + b).
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumTask {
    pub weights: Mat,
    pub input_map: Mat,
    pub bias: Vec<f64>,
    pub kind: ActivationKind,
    pub objective: MarginObjective,
}

impl EquilibriumTask {
    pub fn from_network(net: &Network) -> Result<Self> {
        let mut eq = None;
        for (idx, block) in net.blocks.iter().enumerate() {
            if matches!(block, Block::Equilibrium { .. }) {
                if idx != 0 {
                    return Err(Error::InvalidProblem("equilibrium block must come first"));
                }
                eq = Some(idx);
            }
        }
        let Some(idx) = eq else {
            return Err(Error::InvalidProblem("network has no equilibrium block"));
        };
        let Block::Equilibrium { weights, input_map, bias, kind } = &net.blocks[idx] else {
            unreachable!()
        };
        // Fold everything after the equilibrium block into the objective;
        // only affine tails are supported.
        let mut objective = MarginObjective { weights: vec![1.0; weights.rows()], offset: 0.0 };
        if net.output_dim == 1 && net.blocks.len() == 2 {
            if let Block::Affine { weights: w, bias: b } = &net.blocks[1] {
                objective = MarginObjective { weights: w.row(0).to_vec(), offset: b[0] };
            }
        } else if net.blocks.len() > 1 {
            return Err(Error::InvalidProblem(
                "equilibrium task expects a single affine output layer",
            ));
        }
        Ok(EquilibriumTask {
            weights: weights.clone(),
            input_map: input_map.clone(),
            bias: bias.clone(),
            kind: *kind,
            objective,
        })
    }
}
