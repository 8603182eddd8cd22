//! Monotone hydraulic component curves.
//!
//! Pipes and valves are described by strictly increasing pressure-loss
//! curves. Pipes follow a power law `f(q) = k * q * |q|^(alpha - 1)`
//! (`alpha = 2` is the usual quadratic friction law), valves follow the
//! linear valve characteristic `g(q, u) = k * u^-2 * q * |q|` where `u`
//! is the valve opening. The solver only relies on strict monotonicity,
//! so alternative curve forms can be plugged in through [`MonotoneCurve`].

use crate::math::{pow, sgn, sqrt};

/// Errors produced by curve evaluation and inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveError {
    /// A flow, pressure or coefficient argument was NaN or infinite.
    NonFiniteInput { value: f64 },
    /// Valve opening was zero or negative; the characteristic is singular there.
    ClosedValve { opening: f64 },
    /// Bracket expansion hit its doubling cap without straddling the target,
    /// which indicates a curve that is bounded and therefore not invertible
    /// at the requested value.
    BracketExpansionFailed { doublings: u32, target: f64 },
}

impl core::fmt::Display for CurveError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CurveError::NonFiniteInput { value } => {
                write!(f, "non-finite input {value}")
            }
            CurveError::ClosedValve { opening } => {
                write!(f, "valve opening {opening} is outside (0, 1]; the curve is singular at u <= 0")
            }
            CurveError::BracketExpansionFailed { doublings, target } => {
                write!(
                    f,
                    "bracket expansion failed to straddle target {target} after {doublings} doublings"
                )
            }
        }
    }
}

/// Shared loss-curve form for the pipes of a network.
///
/// `Quadratic` is `k * q * |q|`; `Exponent(alpha)` generalizes to
/// `k * q * |q|^(alpha - 1)` with `alpha >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossForm {
    Quadratic,
    Exponent(f64),
}

impl LossForm {
    pub fn alpha(&self) -> f64 {
        match self {
            LossForm::Quadratic => 2.0,
            LossForm::Exponent(a) => *a,
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            LossForm::Quadratic => true,
            LossForm::Exponent(a) => a.is_finite() && *a >= 1.0,
        }
    }
}

impl Default for LossForm {
    fn default() -> Self {
        LossForm::Quadratic
    }
}

/// Power-law pressure loss `k * q * |q|^(alpha - 1)`; odd and strictly
/// increasing for `k > 0`, `alpha >= 1`.
#[inline]
pub(crate) fn power_loss(k: f64, alpha: f64, q: f64) -> f64 {
    if alpha == 2.0 {
        // Exact odd symmetry for the quadratic law.
        k * q * abs(q)
    } else {
        k * sgn(q) * pow(abs(q), alpha)
    }
}

/// Inverse of [`power_loss`]: the flow producing pressure drop `p`.
#[inline]
pub(crate) fn power_loss_inverse(k: f64, alpha: f64, p: f64) -> f64 {
    if alpha == 2.0 {
        sgn(p) * sqrt(abs(p) / k)
    } else {
        sgn(p) * pow(abs(p) / k, 1.0 / alpha)
    }
}

/// Slope `d/dq` of [`power_loss`]: `k * alpha * |q|^(alpha - 1)`.
#[inline]
pub(crate) fn power_loss_slope(k: f64, alpha: f64, q: f64) -> f64 {
    if alpha == 2.0 {
        2.0 * k * abs(q)
    } else {
        k * alpha * pow(abs(q), alpha - 1.0)
    }
}

#[inline]
fn abs(x: f64) -> f64 {
    crate::math::abs(x)
}

/// Friction coefficients of the supply and return pipes of one edge.
///
/// The two layers carry the same flow, so their losses combine into a
/// single curve with coefficient `k_supply + k_return`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeCurveParams {
    pub k_supply: f64,
    pub k_return: f64,
}

impl PipeCurveParams {
    pub fn new(k_supply: f64, k_return: f64) -> Self {
        Self { k_supply, k_return }
    }

    /// Uniform split of a combined coefficient over the two layers.
    pub fn symmetric(k_combined: f64) -> Self {
        Self {
            k_supply: k_combined / 2.0,
            k_return: k_combined / 2.0,
        }
    }

    pub fn combined_k(&self) -> f64 {
        self.k_supply + self.k_return
    }

    /// Coefficients must be finite, non-negative, with a positive sum.
    pub fn is_valid(&self) -> bool {
        self.k_supply.is_finite()
            && self.k_return.is_finite()
            && self.k_supply >= 0.0
            && self.k_return >= 0.0
            && self.combined_k() > 0.0
    }
}

/// Coefficient of the linear valve characteristic `k * u^-2 * q * |q|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValveCurveParams {
    pub k_valve: f64,
}

impl ValveCurveParams {
    pub fn new(k_valve: f64) -> Self {
        Self { k_valve }
    }

    pub fn is_valid(&self) -> bool {
        self.k_valve.is_finite() && self.k_valve > 0.0
    }
}

/// Combined supply+return pressure drop of an edge at flow `q`.
///
/// Quadratic law: `(k_supply + k_return) * q * |q|`.
pub fn pipe_eval(pipe: &PipeCurveParams, q: f64) -> Result<f64, CurveError> {
    if !q.is_finite() {
        return Err(CurveError::NonFiniteInput { value: q });
    }
    Ok(power_loss(pipe.combined_k(), 2.0, q))
}

/// Differential pressure over a valve at flow `q` and opening `u`.
pub fn valve_eval(valve: &ValveCurveParams, q: f64, u: f64) -> Result<f64, CurveError> {
    if u <= 0.0 {
        return Err(CurveError::ClosedValve { opening: u });
    }
    if !q.is_finite() || !u.is_finite() {
        return Err(CurveError::NonFiniteInput {
            value: if q.is_finite() { u } else { q },
        });
    }
    Ok(power_loss(valve.k_valve / (u * u), 2.0, q))
}

/// Flow through a valve at differential pressure `p` and opening `u`:
/// `u * sign(p) * sqrt(|p| / k)`.
pub fn valve_inverse(valve: &ValveCurveParams, p: f64, u: f64) -> Result<f64, CurveError> {
    if u <= 0.0 {
        return Err(CurveError::ClosedValve { opening: u });
    }
    if !p.is_finite() || !u.is_finite() {
        return Err(CurveError::NonFiniteInput {
            value: if p.is_finite() { u } else { p },
        });
    }
    Ok(power_loss_inverse(valve.k_valve / (u * u), 2.0, p))
}

/// A strictly increasing scalar map from flow to pressure drop, defined on
/// all reals and unbounded in both directions.
///
/// The default [`inverse`](MonotoneCurve::inverse) is a bracketed numeric
/// inversion; implementors with an analytic inverse should override it.
pub trait MonotoneCurve {
    fn eval(&self, q: f64) -> f64;

    fn inverse(&self, p: f64) -> Result<f64, CurveError> {
        curve_inverse_numeric(self, p, &InversionConfig::default())
    }
}

/// Settings for [`curve_inverse_numeric`].
#[derive(Debug, Clone, Copy)]
pub struct InversionConfig {
    /// Absolute tolerance on the flow variable. Two orders below the
    /// solver's flow tolerance so that inversion error never dominates.
    pub tolerance: f64,
    /// Cap on geometric bracket expansion steps.
    pub max_doublings: u32,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_doublings: 200,
        }
    }
}

/// Bracketed numeric inversion of a strictly increasing curve.
///
/// Expands a bracket geometrically from `|q| = 1` until the target is
/// straddled, then bisects to the flow tolerance. Fails with
/// [`CurveError::BracketExpansionFailed`] on curves that are bounded and
/// never reach the target.
pub fn curve_inverse_numeric<C: MonotoneCurve + ?Sized>(
    curve: &C,
    target: f64,
    cfg: &InversionConfig,
) -> Result<f64, CurveError> {
    if !target.is_finite() {
        return Err(CurveError::NonFiniteInput { value: target });
    }
    let at_zero = curve.eval(0.0);
    if at_zero == target {
        return Ok(0.0);
    }

    // Expand away from zero on the side the root must lie on.
    let positive = at_zero < target;
    let mut width = 1.0_f64;
    let mut inner = 0.0_f64;
    let mut doublings = 0;
    loop {
        let probe = if positive { width } else { -width };
        let value = curve.eval(probe);
        if (positive && value >= target) || (!positive && value <= target) {
            break;
        }
        inner = probe;
        doublings += 1;
        if doublings > cfg.max_doublings {
            return Err(CurveError::BracketExpansionFailed { doublings, target });
        }
        width *= 2.0;
    }

    let (mut lo, mut hi) = if positive {
        (inner, width)
    } else {
        (-width, inner)
    };
    while hi - lo > cfg.tolerance {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval no longer representable
        }
        if curve.eval(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Power-law pipe loss as an evaluable curve: `k * q * |q|^(alpha - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLossCurve {
    pub k: f64,
    pub alpha: f64,
}

impl PowerLossCurve {
    pub fn new(k: f64, alpha: f64) -> Self {
        Self { k, alpha }
    }

    pub fn from_pipe(pipe: &PipeCurveParams, form: LossForm) -> Self {
        Self {
            k: pipe.combined_k(),
            alpha: form.alpha(),
        }
    }
}

impl MonotoneCurve for PowerLossCurve {
    fn eval(&self, q: f64) -> f64 {
        power_loss(self.k, self.alpha, q)
    }

    fn inverse(&self, p: f64) -> Result<f64, CurveError> {
        if !p.is_finite() {
            return Err(CurveError::NonFiniteInput { value: p });
        }
        Ok(power_loss_inverse(self.k, self.alpha, p))
    }
}

/// Valve characteristic frozen at a fixed opening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValveAtOpening {
    pub params: ValveCurveParams,
    pub opening: f64,
}

impl ValveAtOpening {
    pub fn new(params: ValveCurveParams, opening: f64) -> Result<Self, CurveError> {
        if opening <= 0.0 {
            return Err(CurveError::ClosedValve { opening });
        }
        Ok(Self { params, opening })
    }
}

impl MonotoneCurve for ValveAtOpening {
    fn eval(&self, q: f64) -> f64 {
        power_loss(self.params.k_valve / (self.opening * self.opening), 2.0, q)
    }

    fn inverse(&self, p: f64) -> Result<f64, CurveError> {
        valve_inverse(&self.params, p, self.opening)
    }
}
