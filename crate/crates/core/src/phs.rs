//! Port-Hamiltonian structure of the disturbed reactor.
//!
//! With `H = −S` and `x = (U, N)` the reactor reads
//!
//! ```text
//! dx = [(J − R) ∇H + g u] dt + a dω₁ + γ diag(u) σ (dω₂, dω₃)ᵀ
//! y  = gᵀ ∇H + δ u
//! ```
//!
//! where `u = (q, Q̇)` is the volumetric feed and the heat flow.

use nalgebra::{DMatrix, DVector, Matrix2};
use thiserror::Error;

use crate::linalg;
use crate::network::ReactionNetwork;
use crate::thermo::{self, ThermoState};
use crate::transform::Setpoint;

/// Below this affinity magnitude (J/mol) the literal damping quotient is
/// replaced by its log-mean limit.
pub const AFFINITY_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InputVector {
    /// Volumetric flow, m³/s.
    pub q: f64,
    /// Heat flow into the reactor, J/s.
    pub qdot: f64,
}

impl InputVector {
    pub const ZERO: Self = Self { q: 0.0, qdot: 0.0 };

    pub fn new(q: f64, qdot: f64) -> Self {
        Self { q, qdot }
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.q, self.qdot])
    }
}

/// Forward and backward rates per reaction, mol/m³/s.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector {
    pub forward: DVector<f64>,
    pub backward: DVector<f64>,
}

impl RateVector {
    pub fn net(&self) -> DVector<f64> {
        &self.forward - &self.backward
    }
}

/// How the per-reaction damping coefficient `(r_f − r_b)/(Δzᵀμ)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DampingMode {
    /// The quotient itself, with the log-mean limit when the affinity vanishes.
    #[default]
    Literal,
    /// `logmean(r_f, r_b) / (R T)`, exact when the kinetics obey detailed balance.
    LogMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhsEvaluation {
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// Process noise column.
    pub a: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub sigma: Matrix2<f64>,
    pub delta: Matrix2<f64>,
    pub m: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeFields {
    pub drift: DVector<f64>,
    /// Columns map `(dω₁, dω₂, dω₃)`.
    pub diffusion: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub eval: PhsEvaluation,
    pub fields: SdeFields,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormCondition {
    pub holds: bool,
    /// `ρ₂⁴M² + ρ₃⁴`.
    pub lhs: f64,
    /// `4θ²`.
    pub rhs: f64,
    pub delta_frobenius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Report {
    pub cond_trace: bool,
    pub cond_delta: bool,
    /// `½ tr(H″ a aᵀ)`.
    pub trace_lhs: f64,
    /// `∇Hᵀ R ∇H`.
    pub trace_rhs: f64,
    /// Smallest eigenvalue of `δ − ½ σσᵀ ∘ (γᵀ H″ γ)`.
    pub delta_min_eigenvalue: f64,
}

impl Theorem1Report {
    pub fn holds(&self) -> bool {
        self.cond_trace && self.cond_delta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Report {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub w: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhsError {
    #[error("feedthrough loop I + δ₁δ₂ is singular")]
    SingularFeedthrough,
    #[error("port dimensions differ: {0} vs {1}")]
    PortMismatch(usize, usize),
}

/// A twice differentiable function of the reactor state.
pub trait ScalarField {
    fn value(&self, net: &ReactionNetwork, state: &ThermoState) -> f64;
    fn gradient(&self, net: &ReactionNetwork, state: &ThermoState) -> DVector<f64>;
    fn hessian(&self, net: &ReactionNetwork, state: &ThermoState) -> DMatrix<f64>;
}

/// The reactor Hamiltonian `−S`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NegEntropy;

impl ScalarField for NegEntropy {
    fn value(&self, _net: &ReactionNetwork, state: &ThermoState) -> f64 {
        -state.s
    }

    fn gradient(&self, _net: &ReactionNetwork, state: &ThermoState) -> DVector<f64> {
        thermo::neg_entropy_gradient(state)
    }

    fn hessian(&self, net: &ReactionNetwork, state: &ThermoState) -> DMatrix<f64> {
        thermo::neg_entropy_hessian(net, state)
    }
}

/// Arrhenius mass-action rates with `c = N / V`.
pub fn reaction_rates(net: &ReactionNetwork, state: &ThermoState) -> RateVector {
    let r_gas = net.reactor.r_gas;
    let c = state.concentrations(net);
    let power = |coeffs: &[u32]| -> f64 {
        coeffs
            .iter()
            .zip(c.iter())
            .filter(|(&z, _)| z > 0)
            .map(|(&z, &cj)| cj.powi(z as i32))
            .product()
    };
    let l = net.n_reactions();
    let mut forward = DVector::zeros(l);
    let mut backward = DVector::zeros(l);
    for (i, r) in net.reactions.iter().enumerate() {
        forward[i] = r.k0f * (-r.ef / (r_gas * state.t)).exp() * power(&r.reactants);
        backward[i] = r.k0b * (-r.eb / (r_gas * state.t)).exp() * power(&r.products);
    }
    RateVector { forward, backward }
}

/// Internal energy of one reactor volume of feed, `V c_inᵀ h(T_in) − P V`.
pub fn inlet_internal_energy(net: &ReactionNetwork) -> f64 {
    let v = net.reactor.volume;
    v * net.inlet_concentration().dot(&thermo::enthalpy(net, net.inlet.t_in))
        - net.reactor.pressure * v
}

/// `(a − b) / ln(a/b)` with `logmean(a, a) = a`.
pub fn logmean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let d = (a - b) / (a + b);
    if d.abs() < 1e-6 {
        // series in d keeps full precision near a = b
        let m = 0.5 * (a + b);
        return m * (1.0 - d * d / 3.0);
    }
    (a - b) / (a / b).ln()
}

fn affinities(net: &ReactionNetwork, state: &ThermoState) -> Vec<(DVector<f64>, f64)> {
    let mu = &state.mu_over_t * state.t;
    net.reactions
        .iter()
        .map(|r| {
            let dz = r.stoich_difference();
            let aff = dz.dot(&mu);
            (dz, aff)
        })
        .collect()
}

/// Per-reaction damping coefficients.
pub fn damping_coefficients(
    net: &ReactionNetwork,
    state: &ThermoState,
    rates: &RateVector,
    mode: DampingMode,
) -> DVector<f64> {
    let rt = net.reactor.r_gas * state.t;
    let aff = affinities(net, state);
    DVector::from_iterator(
        net.n_reactions(),
        aff.iter().enumerate().map(|(i, (_, a))| {
            let (rf, rb) = (rates.forward[i], rates.backward[i]);
            match mode {
                DampingMode::Literal if a.abs() > AFFINITY_GUARD => (rf - rb) / a,
                _ => logmean(rf, rb) / rt,
            }
        }),
    )
}

pub fn damping_matrix(net: &ReactionNetwork, state: &ThermoState) -> DMatrix<f64> {
    damping_matrix_with(net, state, DampingMode::default())
}

pub fn damping_matrix_with(
    net: &ReactionNetwork,
    state: &ThermoState,
    mode: DampingMode,
) -> DMatrix<f64> {
    let rates = reaction_rates(net, state);
    damping_from_rates(net, state, &rates, mode)
}

fn damping_from_rates(
    net: &ReactionNetwork,
    state: &ThermoState,
    rates: &RateVector,
    mode: DampingMode,
) -> DMatrix<f64> {
    let p = net.n_species();
    let coef = damping_coefficients(net, state, rates, mode);
    let scale = net.reactor.volume * state.t;
    let mut r = DMatrix::zeros(p + 1, p + 1);
    for (i, reaction) in net.reactions.iter().enumerate() {
        let dz = reaction.stoich_difference();
        let block = &dz * dz.transpose() * (scale * coef[i]);
        let mut view = r.view_mut((1, 1), (p, p));
        view += block;
    }
    r
}

/// Net species production `(z − z′)(r_b − r_f)`, mol/m³/s.
fn reaction_balance(net: &ReactionNetwork, rates: &RateVector) -> DVector<f64> {
    let mut out = DVector::zeros(net.n_species());
    for (i, r) in net.reactions.iter().enumerate() {
        out += r.stoich_difference() * (rates.backward[i] - rates.forward[i]);
    }
    out
}

/// Input matrix `g = [[(U_in − U)/V, 1], [c_in − N/V, 0]]`.
pub fn input_matrix(net: &ReactionNetwork, state: &ThermoState) -> DMatrix<f64> {
    let p = net.n_species();
    let v = net.reactor.volume;
    let mut g = DMatrix::zeros(p + 1, 2);
    g[(0, 0)] = (inlet_internal_energy(net) - state.u) / v;
    g[(0, 1)] = 1.0;
    for j in 0..p {
        g[(j + 1, 0)] = net.inlet.c_in[j] - state.n[j] / v;
    }
    g
}

fn m_scalar(net: &ReactionNetwork, state: &ThermoState) -> f64 {
    let v = net.reactor.volume;
    let r = net.reactor.r_gas;
    let theta = state.theta;
    let dc = net.inlet_concentration() - &state.n / v;
    let e = (inlet_internal_energy(net) - state.u) / v;
    let h_dc = state.h.dot(&dc);
    let n_tot = state.n.sum();
    let diag: f64 = dc
        .iter()
        .zip(state.n.iter())
        .map(|(d, n)| theta * r * d * d / n)
        .sum();
    h_dc * h_dc - theta * r / n_tot * dc.sum().powi(2) + diag - 2.0 * e * h_dc + e * e
}

pub fn assemble(net: &ReactionNetwork, state: &ThermoState, u: InputVector) -> Assembly {
    assemble_with(net, state, u, DampingMode::default())
}

pub fn assemble_with(
    net: &ReactionNetwork,
    state: &ThermoState,
    u: InputVector,
    mode: DampingMode,
) -> Assembly {
    let p = net.n_species();
    let v = net.reactor.volume;
    let noise = net.noise;
    let rates = reaction_rates(net, state);

    let j = DMatrix::zeros(p + 1, p + 1);
    let r = damping_from_rates(net, state, &rates, mode);
    let g = input_matrix(net, state);
    let mut a = DVector::zeros(p + 1);
    a.rows_mut(1, p)
        .copy_from(&(reaction_balance(net, &rates) * (noise.rho1 * v)));
    let gamma = g.clone();
    let sigma = Matrix2::new(noise.rho2, 0.0, 0.0, noise.rho3);
    let theta = state.theta;
    let m = m_scalar(net, state);
    let delta = Matrix2::new(
        0.5 * noise.rho2 * noise.rho2 * m / theta,
        0.0,
        0.0,
        0.5 * noise.rho3 * noise.rho3 / theta,
    );

    let grad = thermo::neg_entropy_gradient(state);
    let drift = (&j - &r) * &grad + &g * u.to_vector();
    let mut diffusion = DMatrix::zeros(p + 1, 3);
    diffusion.set_column(0, &a);
    diffusion.set_column(1, &(g.column(0) * (u.q * noise.rho2)));
    diffusion.set_column(2, &(g.column(1) * (u.qdot * noise.rho3)));

    Assembly {
        eval: PhsEvaluation {
            j,
            r,
            g,
            a,
            gamma,
            sigma,
            delta,
            m,
            theta,
        },
        fields: SdeFields { drift, diffusion },
    }
}

/// Port output `y = gᵀ ∇H + δ u`.
pub fn output(eval: &PhsEvaluation, grad_h: &DVector<f64>, u: InputVector) -> DVector<f64> {
    let fb = eval.delta * nalgebra::Vector2::new(u.q, u.qdot);
    let mut y = eval.g.transpose() * grad_h;
    y[0] += fb[0];
    y[1] += fb[1];
    y
}

pub fn check_norm_condition(net: &ReactionNetwork, state: &ThermoState) -> NormCondition {
    let m = m_scalar(net, state);
    let theta = state.theta;
    let (r2, r3) = (net.noise.rho2, net.noise.rho3);
    let lhs = r2.powi(4) * m * m + r3.powi(4);
    let rhs = 4.0 * theta * theta;
    let delta_frobenius =
        (0.25 * r2.powi(4) * m * m / (theta * theta) + 0.25 * r3.powi(4) / (theta * theta)).sqrt();
    NormCondition {
        holds: lhs < rhs,
        lhs,
        rhs,
        delta_frobenius,
    }
}

/// Itô generator `L[V] = ∇Vᵀ f + ½ tr(V″ D Dᵀ)`.
pub fn generator<F: ScalarField + ?Sized>(
    net: &ReactionNetwork,
    field: &F,
    state: &ThermoState,
    u: InputVector,
) -> f64 {
    let fields = assemble(net, state, u).fields;
    generator_from_fields(net, field, state, &fields)
}

pub fn generator_from_fields<F: ScalarField + ?Sized>(
    net: &ReactionNetwork,
    field: &F,
    state: &ThermoState,
    fields: &SdeFields,
) -> f64 {
    let grad = field.gradient(net, state);
    let hess = field.hessian(net, state);
    let d = &fields.diffusion;
    grad.dot(&fields.drift) + 0.5 * (&hess * d * d.transpose()).trace()
}

pub fn check_theorem1<F: ScalarField + ?Sized>(
    net: &ReactionNetwork,
    state: &ThermoState,
    field: &F,
) -> Theorem1Report {
    let eval = assemble(net, state, InputVector::ZERO).eval;
    let grad = field.gradient(net, state);
    let hess = field.hessian(net, state);

    let trace_lhs = 0.5 * (&eval.a.transpose() * &hess * &eval.a)[(0, 0)];
    let trace_rhs = (grad.transpose() * &eval.r * &grad)[(0, 0)];

    let sigma = DMatrix::from_iterator(2, 2, eval.sigma.iter().copied());
    let delta = DMatrix::from_iterator(2, 2, eval.delta.iter().copied());
    let ss = &sigma * sigma.transpose();
    let ghg = eval.gamma.transpose() * &hess * &eval.gamma;
    let noise_term = ss.component_mul(&ghg) * 0.5;
    let diff = &delta - &noise_term;
    let scale = linalg::symmetric_norm(&delta).max(linalg::symmetric_norm(&noise_term));
    let delta_min_eigenvalue = linalg::min_eigenvalue(&diff);

    Theorem1Report {
        cond_trace: trace_lhs <= trace_rhs,
        cond_delta: linalg::is_psd_scaled(&diff, scale),
        trace_lhs,
        trace_rhs,
        delta_min_eigenvalue,
    }
}

/// Sufficient passivity condition on the reaction noise for the
/// availability Hamiltonian of `sp`.
pub fn check_theorem2(net: &ReactionNetwork, state: &ThermoState, sp: &Setpoint) -> Theorem2Report {
    let p = net.n_species();
    let r = net.reactor.r_gas;
    let rates = reaction_rates(net, state);
    let delta_zr = reaction_balance(net, &rates);
    let n_tot = state.n.sum();
    let mut w = &state.h * state.h.transpose() / state.theta;
    for j in 0..p {
        for k in 0..p {
            w[(j, k)] -= r / n_tot;
        }
        w[(j, j)] += r / state.n[j];
    }
    let w = w.component_mul(&(&delta_zr * delta_zr.transpose()));
    let lhs = 0.5 * net.noise.rho1.powi(2) * sp.v_star * w.sum();
    let rhs: f64 = affinities(net, state)
        .iter()
        .enumerate()
        .map(|(i, (_, a))| (rates.forward[i] - rates.backward[i]) * a / state.t)
        .sum();
    Theorem2Report {
        holds: lhs <= rhs,
        lhs,
        rhs,
        w,
    }
}

/// Structure of one subsystem as seen by a feedback interconnection.
#[derive(Debug, Clone, PartialEq)]
pub struct PortBlock {
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub delta: DMatrix<f64>,
}

impl From<&PhsEvaluation> for PortBlock {
    fn from(e: &PhsEvaluation) -> Self {
        Self {
            j: e.j.clone(),
            r: e.r.clone(),
            g: e.g.clone(),
            delta: DMatrix::from_iterator(2, 2, e.delta.iter().copied()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interconnection {
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Negative feedback `u₁ = −y₂`, `u₂ = y₁` of two port systems.
pub fn interconnect(s1: &PortBlock, s2: &PortBlock) -> Result<Interconnection, PhsError> {
    let m = s1.g.ncols();
    if s2.g.ncols() != m {
        return Err(PhsError::PortMismatch(m, s2.g.ncols()));
    }
    let eye = DMatrix::<f64>::identity(m, m);
    let inv12 = (&eye + &s1.delta * &s2.delta)
        .try_inverse()
        .ok_or(PhsError::SingularFeedthrough)?;
    let inv21 = (&eye + &s2.delta * &s1.delta)
        .try_inverse()
        .ok_or(PhsError::SingularFeedthrough)?;

    let (n1, n2) = (s1.g.nrows(), s2.g.nrows());
    let n = n1 + n2;
    let mut j = DMatrix::zeros(n, n);
    let mut r = DMatrix::zeros(n, n);
    j.view_mut((0, 0), (n1, n1)).copy_from(&s1.j);
    j.view_mut((n1, n1), (n2, n2)).copy_from(&s2.j);
    j.view_mut((0, n1), (n1, n2))
        .copy_from(&(-(&s1.g * &inv21 * s2.g.transpose())));
    j.view_mut((n1, 0), (n2, n1))
        .copy_from(&(&s2.g * &inv12 * s1.g.transpose()));

    r.view_mut((0, 0), (n1, n1))
        .copy_from(&(&s1.r + &s1.g * (&s2.delta * &inv12) * s1.g.transpose()));
    r.view_mut((n1, n1), (n2, n2))
        .copy_from(&(&s2.r + &s2.g * (&s1.delta * &inv21) * s2.g.transpose()));
    Ok(Interconnection { j, r })
}
