//! Box domains with reflective boundaries and the tunneling toy landscape.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LssError, Result};

/// Axis-aligned box `[lower, upper]` in `R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(LssError::EmptyInput("box bounds"));
        }
        if lower.len() != upper.len() {
            return Err(LssError::invalid(format!(
                "bound lengths differ: {} lower vs {} upper",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(LssError::invalid(format!(
                    "dimension {j}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Side lengths `L_j = upper_j - lower_j`.
    pub fn lengths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Folds `point` back into the box by mirror reflections at the faces.
    pub fn reflect(&self, point: &[f64]) -> Result<Vec<f64>> {
        reflect_into_box(point, self)
    }

    /// Box with every side scaled by `factor`, centered at `center` where
    /// possible and shifted so it stays inside `self`.
    pub fn shrink_around(&self, center: &[f64], factor: f64) -> Result<BoxDomain> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(LssError::invalid(format!(
                "shrink factor {factor} not in (0, 1]"
            )));
        }
        if center.len() != self.dim() {
            return Err(LssError::invalid("shrink center has wrong dimension"));
        }
        if factor == 1.0 {
            return Ok(self.clone());
        }
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            let half = 0.5 * factor * (self.upper[j] - self.lower[j]);
            // slide the window back inside rather than truncating it
            let c = center[j].clamp(self.lower[j] + half, self.upper[j] - half);
            lower.push(c - half);
            upper.push(c + half);
        }
        BoxDomain::new(lower, upper)
    }
}

/// Maps `point` into `domain` by independently folding each coordinate with
/// period `2 * (upper - lower)`. In-box coordinates are returned bit-for-bit.
pub fn reflect_into_box(point: &[f64], domain: &BoxDomain) -> Result<Vec<f64>> {
    if point.len() != domain.dim() {
        return Err(LssError::invalid(format!(
            "point has dimension {}, box has {}",
            point.len(),
            domain.dim()
        )));
    }
    point
        .iter()
        .zip(domain.lower.iter().zip(&domain.upper))
        .map(|(&x, (&lo, &hi))| {
            if !x.is_finite() {
                return Err(LssError::invalid(format!("non-finite coordinate {x}")));
            }
            Ok(fold(x, lo, hi))
        })
        .collect()
}

fn fold(x: f64, lo: f64, hi: f64) -> f64 {
    if (lo..=hi).contains(&x) {
        return x;
    }
    let width = hi - lo;
    let y = (x - lo).rem_euclid(2.0 * width);
    let y = if y > width { 2.0 * width - y } else { y };
    (lo + y).clamp(lo, hi)
}

/// A deterministic cost function `E: R^dim -> R`.
///
/// Implementations must be re-entrant: the optimizer may evaluate from
/// several worker threads.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> f64;

    /// Search box the objective is meant to be minimized over.
    fn domain(&self) -> BoxDomain;
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        (**self).evaluate(x)
    }
    fn domain(&self) -> BoxDomain {
        (**self).domain()
    }
}

impl<T: Objective + ?Sized> Objective for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        (**self).evaluate(x)
    }
    fn domain(&self) -> BoxDomain {
        (**self).domain()
    }
}

fn upper_envelope(x: f64) -> f64 {
    (25.0 + 30.0 * (x - 0.1).powi(2)) / 25.0
}

fn lower_envelope(x: f64) -> f64 {
    (5.0 + 25.0 * (x - 0.9).powi(2)) / 25.0
}

/// The 1-D tunneling landscape: an oscillation between two parabolic
/// envelopes, with valleys at `0.1, 0.3, ..., 0.9` and peaks at `0.2, ..., 1.0`.
pub fn toy_f(x: f64) -> f64 {
    let lambda = (10.0 * PI * x + PI / 2.0).sin();
    0.5 * (1.0 + lambda) * upper_envelope(x) + 0.5 * (1.0 - lambda) * lower_envelope(x)
}

/// Product of [`toy_f`] over the coordinates of `x`.
pub fn toy_g(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(LssError::EmptyInput("toy_g point"));
    }
    Ok(x.iter().map(|&xi| toy_f(xi)).product())
}

/// `toy_g(x)^(1/N)`: puts landscapes of different dimension on the same scale.
pub fn toy_g_normalized(x: &[f64]) -> Result<f64> {
    let g = toy_g(x)?;
    Ok(normalize_cost(g, x.len()))
}

/// `value^(1/dim)`, the dimension correction applied to product landscapes.
pub fn normalize_cost(value: f64, dim: usize) -> f64 {
    if dim == 1 {
        value
    } else {
        value.powf(1.0 / dim as f64)
    }
}

/// Valley abscissae `x = -0.1 + 0.2 k` for `k = 1..=5`.
pub const VALLEY_POSITIONS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
/// Peak abscissae `x = 0.2 k` for `k = 1..=5`.
pub const PEAK_POSITIONS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

/// Landscape values at the five valleys and the five peaks of [`toy_f`].
pub fn landscape_extrema() -> ([f64; 5], [f64; 5]) {
    (VALLEY_POSITIONS.map(toy_f), PEAK_POSITIONS.map(toy_f))
}

/// `G^(N)` on `[0, 1]^N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyLandscape {
    dim: usize,
}

impl ToyLandscape {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(LssError::invalid(
                "toy landscape dimension must be positive",
            ));
        }
        Ok(Self { dim })
    }

    /// `x_init = (0.1, ..., 0.1)`, the bottom of the shallowest valley.
    pub fn initial_point(&self) -> Vec<f64> {
        vec![0.1; self.dim]
    }

    /// `x_end = (0.9, ..., 0.9)`, the global minimizer.
    pub fn minimizer(&self) -> Vec<f64> {
        vec![0.9; self.dim]
    }
}

impl Objective for ToyLandscape {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        x.iter().map(|&xi| toy_f(xi)).product()
    }

    fn domain(&self) -> BoxDomain {
        BoxDomain::unit(self.dim).expect("positive dimension")
    }
}

/// String identifier of a built-in objective: `toy1d` or `toyNd:<dim>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ObjectiveId {
    Toy { dim: usize },
}

impl ObjectiveId {
    pub fn dim(&self) -> usize {
        match self {
            ObjectiveId::Toy { dim } => *dim,
        }
    }

    pub fn with_dim(self, dim: usize) -> Self {
        match self {
            ObjectiveId::Toy { .. } => ObjectiveId::Toy { dim },
        }
    }

    pub fn build(&self) -> Result<ToyLandscape> {
        match self {
            ObjectiveId::Toy { dim } => ToyLandscape::new(*dim),
        }
    }

    /// The conventional starting point for benchmark runs.
    pub fn initial_point(&self) -> Vec<f64> {
        match self {
            ObjectiveId::Toy { dim } => vec![0.1; *dim],
        }
    }
}

impl FromStr for ObjectiveId {
    type Err = LssError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "toy1d" {
            return Ok(ObjectiveId::Toy { dim: 1 });
        }
        if let Some(rest) = s.strip_prefix("toyNd:") {
            let dim: usize = rest
                .parse()
                .map_err(|_| LssError::config(format!("bad dimension in objective id `{s}`")))?;
            if dim == 0 {
                return Err(LssError::config("objective dimension must be positive"));
            }
            return Ok(ObjectiveId::Toy { dim });
        }
        Err(LssError::config(format!("unknown objective id `{s}`")))
    }
}

impl TryFrom<String> for ObjectiveId {
    type Error = LssError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ObjectiveId> for String {
    fn from(id: ObjectiveId) -> String {
        id.to_string()
    }
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveId::Toy { dim: 1 } => write!(f, "toy1d"),
            ObjectiveId::Toy { dim } => write!(f, "toyNd:{dim}"),
        }
    }
}
