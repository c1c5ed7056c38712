//! Potential theory of small balls: p-capacities, the capacity-to-radius map,
//! fundamental-solution constants, radial barriers and exact radial solutions.
//!
//! Two normalisation constants are easy to confuse:
//! [`fundamental_constant`] (`c_fund`) gives the singular radial p-harmonic
//! function unit flux, while [`radial_constant`] (`c_rad`) normalises the
//! smooth radial solution of `Δ_p u = α`. The barriers use
//! [`barrier_constant`], which makes their flux at the centre match a point
//! mass of weight `γ ε^n`.

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadratureConfig};
use crate::scalar::{pos, Real};

/// Exponent `p` and dimension `n` with `1 < p <= n`, `n ∈ {2, 3}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PExponent<T> {
    p: T,
    n: usize,
}

impl<T: Real> PExponent<T> {
    pub fn new(p: T, n: usize) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(Error::domain(format!("dimension must be 2 or 3, got {n}")));
        }
        if !(p > T::one() && p <= T::from_count(n)) {
            return Err(Error::domain(format!("exponent must satisfy 1 < p <= n = {n}, got {p}")));
        }
        Ok(Self { p, n })
    }

    #[inline]
    pub fn p(&self) -> T {
        self.p
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dim(&self) -> T {
        T::from_count(self.n)
    }

    /// True in the logarithmic case `p = n`.
    #[inline]
    pub fn is_critical(&self) -> bool {
        self.p == self.dim()
    }

    /// Power `(p - n)/(p - 1)` of the singular radial p-harmonic function.
    #[inline]
    pub fn singular_power(&self) -> T {
        (self.p - self.dim()) / (self.p - T::one())
    }

    /// Surface area `n ω_n` of the unit sphere.
    #[inline]
    pub fn sphere_area(&self) -> T {
        self.dim() * T::unit_ball_volume(self.n)
    }
}

/// Ball radius stored through its logarithm.
///
/// For `p = n` the radii are of order `exp(-C ε^{-n/(n-1)})` and underflow in
/// double precision already at moderate `ε`; keeping `ln a` preserves the
/// capacity exactly.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Radius<T> {
    ln: T,
}

impl<T: Real> Radius<T> {
    pub fn zero() -> Self {
        Self { ln: T::neg_infinity() }
    }

    pub fn from_value(a: T) -> Self {
        Self { ln: a.ln() }
    }

    pub fn from_ln(ln: T) -> Self {
        Self { ln }
    }

    #[inline]
    pub fn ln(&self) -> T {
        self.ln
    }

    /// The radius itself; may underflow to zero.
    #[inline]
    pub fn value(&self) -> T {
        self.ln.exp()
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.ln == T::neg_infinity()
    }
}

/// `ln` of the `p`-capacity of `B_a` (relative to `R^n`, or to `B_1` if `p = n`).
pub fn ball_p_capacity_ln<T: Real>(ln_a: T, pe: &PExponent<T>) -> Result<T> {
    if ln_a.is_nan() || ln_a == T::neg_infinity() {
        return Err(Error::domain("ball radius must be positive"));
    }
    let (p, n) = (pe.p(), pe.dim());
    let area = pe.sphere_area();
    if pe.is_critical() {
        if ln_a >= T::zero() {
            return Err(Error::domain("for p = n the ball radius must be below 1"));
        }
        Ok(area.ln() + (T::one() - n) * (-ln_a).ln())
    } else {
        let k = ((n - p) / (p - T::one())).ln() * (p - T::one());
        Ok(area.ln() + k + (n - p) * ln_a)
    }
}

/// `p`-capacity of the ball of radius `a`.
pub fn ball_p_capacity<T: Real>(a: T, pe: &PExponent<T>) -> Result<T> {
    if !(a > T::zero()) {
        return Err(Error::domain(format!("ball radius must be positive, got {a}")));
    }
    Ok(ball_p_capacity_ln(a.ln(), pe)?.exp())
}

/// Capacity of the ball of radius `a`, given as [`Radius`].
pub fn radius_capacity<T: Real>(a: Radius<T>, pe: &PExponent<T>) -> Result<T> {
    if a.is_zero() {
        return Ok(T::zero());
    }
    Ok(ball_p_capacity_ln(a.ln(), pe)?.exp())
}

/// Radius of the ball whose capacity is `γ ε^n`, without the cell-fit check.
pub fn capacity_radius<T: Real>(gamma: T, eps: T, pe: &PExponent<T>) -> Result<Radius<T>> {
    if !(gamma >= T::zero()) || !gamma.is_finite() {
        return Err(Error::domain(format!("capacity density must be finite and >= 0, got {gamma}")));
    }
    if !(eps > T::zero()) {
        return Err(Error::domain(format!("cell size must be positive, got {eps}")));
    }
    if gamma == T::zero() {
        return Ok(Radius::zero());
    }
    let (p, n) = (pe.p(), pe.dim());
    let ln_target = gamma.ln() + n * eps.ln() - pe.sphere_area().ln();
    let ln_a = if pe.is_critical() {
        -(-ln_target / (n - T::one())).exp()
    } else {
        let k = ((n - p) / (p - T::one())).ln() * (p - T::one());
        (ln_target - k) / (n - p)
    };
    Ok(Radius::from_ln(ln_a))
}

/// Radius of the ball whose capacity is `γ ε^n`.
///
/// Returns a zero radius for `γ = 0`, and a domain error if the hole would
/// reach the boundary of its cell (`a >= ε/2`).
pub fn radius_for_capacity<T: Real>(gamma: T, eps: T, pe: &PExponent<T>) -> Result<Radius<T>> {
    let a = capacity_radius(gamma, eps, pe)?;
    if a.ln() >= (eps / T::lit(2.0)).ln() {
        return Err(Error::domain(format!(
            "hole radius {} for capacity density {gamma} does not fit in a cell of size {eps}",
            a.value()
        )));
    }
    Ok(a)
}

/// Capacity of the condenser `(B_a, B_ρ)` with `a < ρ`: the least value of
/// `∫|∇u|^p` over `u = 1` on `B_a`, `u = 0` outside `B_ρ`.
pub fn condenser_capacity<T: Real>(a: Radius<T>, rho: Radius<T>, pe: &PExponent<T>) -> Result<T> {
    if a.is_zero() {
        return Ok(T::zero());
    }
    if !(a.ln() < rho.ln()) {
        return Err(Error::domain("condenser needs inner radius below outer radius"));
    }
    let (p, n) = (pe.p(), pe.dim());
    let gap = rho.ln() - a.ln();
    if pe.is_critical() {
        return Ok(pe.sphere_area() * gap.powf(T::one() - n));
    }
    // nω_n |m|^{p-1} (a^m - ρ^m)^{1-p}, evaluated without forming a^m
    let m = pe.singular_power();
    let ln_head = pe.sphere_area().ln() + (p - T::one()) * (-m).ln() + (T::one() - p) * m * a.ln();
    let tail = -(m * gap).exp_m1();
    Ok((ln_head + (T::one() - p) * tail.ln()).exp())
}

/// `c_fund`: constant for which `c^{1/(p-1)} r^{(p-n)/(p-1)}` (or
/// `c^{1/(n-1)} log(1/r)` when `p = n`) has flux `-1` through every sphere.
pub fn fundamental_constant<T: Real>(pe: &PExponent<T>) -> T {
    let (p, n) = (pe.p(), pe.dim());
    if pe.is_critical() {
        T::one() / pe.sphere_area()
    } else {
        ((p - T::one()) / (n - p)).powf(p - T::one()) / pe.sphere_area()
    }
}

/// `c_rad = (p/(p-1)) n^{1/(p-1)}`, the normalisation of the exact radial solution.
pub fn radial_constant<T: Real>(pe: &PExponent<T>) -> T {
    let (p, n) = (pe.p(), pe.dim());
    p / (p - T::one()) * n.powf(T::one() / (p - T::one()))
}

/// `1/(n ω_n)`: the constant that makes the radial barriers carry flux
/// `-γ ε^n` at their centre. Coincides with [`fundamental_constant`] only for
/// `p = 2`, `p = n` and `p = (n+1)/2`.
pub fn barrier_constant<T: Real>(pe: &PExponent<T>) -> T {
    T::one() / pe.sphere_area()
}

fn quad_config<T: Real>() -> QuadratureConfig<T> {
    QuadratureConfig { rel_tol: T::lit(1e-12).max(T::lit(1e2) * T::epsilon()), ..QuadratureConfig::default() }
}

/// `∫_r^{upper} (c γ ε^n s^{1-n} - (α/n) s)^{1/(p-1)} ds`, integrated in `ln s`.
fn barrier_integral<T: Real>(r: T, upper: T, gamma: T, eps: T, alpha: T, pe: &PExponent<T>) -> Result<T> {
    if r >= upper {
        return Ok(T::zero());
    }
    if r <= T::zero() {
        return Ok(T::infinity());
    }
    let (p, n) = (pe.p(), pe.dim());
    let mass = barrier_constant(pe) * gamma * eps.powf(n);
    let q = T::one() / (p - T::one());
    let integrand = |t: T| {
        let s = t.exp();
        pos(mass * s.powf(T::one() - n) - alpha / n * s).powf(q) * s
    };
    integrate(integrand, r.ln(), upper.ln(), &quad_config())
}

/// Normalised support radius `(n c γ / α)^{1/n}` of the barriers, in units of `ε`.
pub fn barrier_support<T: Real>(gamma: T, alpha: T, pe: &PExponent<T>) -> T {
    (pe.dim() * barrier_constant(pe) * gamma / alpha).powf(T::one() / pe.dim())
}

/// Barrier of a single hole for the cell problem with `α > 0`; vanishes for
/// `r >= aε` with `a = (ncγ/α)^{1/n}`, and is infinite at `r = 0`.
pub fn barrier_g<T: Real>(r: T, gamma: T, eps: T, alpha: T, pe: &PExponent<T>) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(Error::domain(format!("barrier needs alpha > 0, got {alpha}")));
    }
    if gamma == T::zero() {
        return Ok(T::zero());
    }
    let support = barrier_support(gamma, alpha, pe) * eps;
    barrier_integral(r, support, gamma, eps, alpha, pe)
}

/// Singular profile of a hole: exactly 1 at the capacity radius for `p < n`.
pub fn singular_profile_h<T: Real>(r: T, gamma: T, eps: T, pe: &PExponent<T>) -> Result<T> {
    if !(r > T::zero()) {
        return Err(Error::domain("singular profile is not defined at r = 0"));
    }
    if gamma == T::zero() {
        return Ok(T::zero());
    }
    let (p, n) = (pe.p(), pe.dim());
    let c = fundamental_constant(pe);
    if pe.is_critical() {
        let scale = ((c * gamma).ln() + n * eps.ln()) / (n - T::one());
        Ok(-scale.exp() * r.ln())
    } else {
        let ln_value = ((c * gamma).ln() + n * eps.ln() + (p - n) * r.ln()) / (p - T::one());
        Ok(ln_value.exp())
    }
}

/// [`singular_profile_h`] evaluated at a radius given through its logarithm.
pub fn singular_profile_h_ln<T: Real>(ln_r: T, gamma: T, eps: T, pe: &PExponent<T>) -> T {
    if gamma == T::zero() {
        return T::zero();
    }
    let (p, n) = (pe.p(), pe.dim());
    let c = fundamental_constant(pe);
    if pe.is_critical() {
        let scale = ((c * gamma).ln() + n * eps.ln()) / (n - T::one());
        -scale.exp() * ln_r
    } else {
        (((c * gamma).ln() + n * eps.ln() + (p - n) * ln_r) / (p - T::one())).exp()
    }
}

/// Comparison barrier at the critical value `α₀`, cut off at `min(bε, ε/2)`.
pub fn barrier_h_alpha0<T: Real>(r: T, gamma: T, eps: T, alpha0: T, pe: &PExponent<T>) -> Result<T> {
    if !(alpha0 > T::zero()) {
        return Err(Error::domain(format!("barrier needs alpha0 > 0, got {alpha0}")));
    }
    if gamma == T::zero() {
        return Ok(T::zero());
    }
    let b = barrier_support(gamma, alpha0, pe);
    let upper = b.min(T::lit(0.5)) * eps;
    barrier_integral(r, upper, gamma, eps, alpha0, pe)
}

/// Cutoff profile of one hole: 1 inside `B_a`, 0 outside `B_{ε/2}` and the
/// radial `p`-harmonic interpolation in between.
pub fn cutoff_profile<T: Real>(r: T, a: Radius<T>, eps: T, pe: &PExponent<T>) -> T {
    cutoff_profile_ln(r.ln(), a, eps, pe)
}

pub fn cutoff_profile_ln<T: Real>(ln_r: T, a: Radius<T>, eps: T, pe: &PExponent<T>) -> T {
    if a.is_zero() {
        return T::zero();
    }
    let ln_half = (eps / T::lit(2.0)).ln();
    if ln_r <= a.ln() {
        return T::one();
    }
    if ln_r >= ln_half {
        return T::zero();
    }
    if pe.is_critical() {
        return (ln_r - ln_half) / (a.ln() - ln_half);
    }
    // ((ε/2)^m - r^m) / ((ε/2)^m - a^m) with m < 0, written in exponents relative to ε/2
    let m = pe.singular_power();
    let tr = m * (ln_r - ln_half);
    let ta = m * (a.ln() - ln_half);
    if ta > T::lit(30.0) {
        (tr - ta).exp() * (-(-tr).exp_m1()) / (-(-ta).exp_m1())
    } else {
        tr.exp_m1() / ta.exp_m1()
    }
}

/// Radial derivative magnitude of [`cutoff_profile`] for `a < r < ε/2`.
pub fn cutoff_profile_slope<T: Real>(r: T, a: Radius<T>, eps: T, pe: &PExponent<T>) -> T {
    let ln_half = (eps / T::lit(2.0)).ln();
    if a.is_zero() || r.ln() <= a.ln() || r.ln() >= ln_half {
        return T::zero();
    }
    if pe.is_critical() {
        return T::one() / (r * (ln_half - a.ln()));
    }
    let m = pe.singular_power();
    let tr = m * (r.ln() - ln_half);
    let ta = m * (a.ln() - ln_half);
    // |m| e^{tr} / (r (e^{ta} - 1))
    let ratio = if ta > T::lit(30.0) { (tr - ta).exp() / (-(-ta).exp_m1()) } else { tr.exp() / ta.exp_m1() };
    -m * ratio / r
}

/// Which radial function a [`RadialProfile`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    BarrierG,
    ProfileHSingular,
    BarrierHAlpha0,
    ExactRadial,
}

/// A radial function about `center`, bundled with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile<T> {
    pub kind: ProfileKind,
    pub pe: PExponent<T>,
    pub gamma: T,
    pub eps: T,
    pub alpha: T,
    /// Outer radius of the exact radial solution (unused by the other kinds).
    pub radius: T,
    pub center: Vec<T>,
}

impl<T: Real> RadialProfile<T> {
    pub fn barrier_g(gamma: T, eps: T, alpha: T, center: Vec<T>, pe: PExponent<T>) -> Self {
        Self { kind: ProfileKind::BarrierG, pe, gamma, eps, alpha, radius: T::zero(), center }
    }

    pub fn singular_h(gamma: T, eps: T, center: Vec<T>, pe: PExponent<T>) -> Self {
        Self { kind: ProfileKind::ProfileHSingular, pe, gamma, eps, alpha: T::zero(), radius: T::zero(), center }
    }

    pub fn barrier_h_alpha0(gamma: T, eps: T, alpha0: T, center: Vec<T>, pe: PExponent<T>) -> Self {
        Self { kind: ProfileKind::BarrierHAlpha0, pe, gamma, eps, alpha: alpha0, radius: T::zero(), center }
    }

    /// Evaluates the profile at distance `r` from the centre.
    pub fn eval_radius(&self, r: T) -> Result<T> {
        match self.kind {
            ProfileKind::BarrierG => barrier_g(r, self.gamma, self.eps, self.alpha, &self.pe),
            ProfileKind::ProfileHSingular => singular_profile_h(r, self.gamma, self.eps, &self.pe),
            ProfileKind::BarrierHAlpha0 => barrier_h_alpha0(r, self.gamma, self.eps, self.alpha, &self.pe),
            ProfileKind::ExactRadial => Ok(exact_radial_value(r, self.alpha, self.radius, &self.pe)),
        }
    }

    pub fn eval(&self, x: &[T]) -> Result<T> {
        self.eval_radius(distance(x, &self.center))
    }

    /// Radius beyond which the profile is identically zero, when it has one.
    pub fn support_radius(&self) -> Option<T> {
        match self.kind {
            ProfileKind::BarrierG => Some(barrier_support(self.gamma, self.alpha, &self.pe) * self.eps),
            ProfileKind::BarrierHAlpha0 => {
                Some(barrier_support(self.gamma, self.alpha, &self.pe).min(T::lit(0.5)) * self.eps)
            }
            ProfileKind::ProfileHSingular => None,
            ProfileKind::ExactRadial => Some(self.radius),
        }
    }
}

pub(crate) fn distance<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt()
}

/// `β = |α|^{(2-p)/(p-1)} α`, so that `|β|^{p-2} β = α`.
fn radial_beta<T: Real>(alpha: T, p: T) -> T {
    alpha.abs().powf((T::lit(2.0) - p) / (p - T::one())) * alpha
}

fn exact_radial_value<T: Real>(r: T, alpha: T, big_r: T, pe: &PExponent<T>) -> T {
    let p = pe.p();
    let q = p / (p - T::one());
    radial_beta(alpha, p) / radial_constant(pe) * (r.powf(q) - big_r.powf(q))
}

/// Radial solution of `Δ_p u = α` in `B_R(x₀)` with `u = 0` on the sphere.
pub fn exact_radial_solution<T: Real>(alpha: T, center: Vec<T>, big_r: T, pe: PExponent<T>) -> Result<RadialProfile<T>> {
    if alpha == T::zero() {
        return Err(Error::domain("exact radial solution needs alpha != 0"));
    }
    if !(big_r > T::zero()) {
        return Err(Error::domain("exact radial solution needs R > 0"));
    }
    if center.len() != pe.n() {
        return Err(Error::domain("centre dimension does not match n"));
    }
    Ok(RadialProfile {
        kind: ProfileKind::ExactRadial,
        pe,
        gamma: T::zero(),
        eps: T::zero(),
        alpha,
        radius: big_r,
        center,
    })
}

/// Radial derivative of the exact radial solution.
pub fn exact_radial_slope<T: Real>(r: T, alpha: T, pe: &PExponent<T>) -> T {
    let p = pe.p();
    let q = p / (p - T::one());
    radial_beta(alpha, p) / radial_constant(pe) * q * r.powf(q - T::one())
}
