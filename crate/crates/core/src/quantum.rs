//! Complex linear algebra for density operators and POVMs, the
//! parameterized measurement families used by the case studies, and the
//! Born-rule likelihood table that everything downstream consumes.
//!
//! All types are immutable after construction and validated on entry, so a
//! `DensityOperator` or `Povm` in hand always satisfies its invariants.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::sum_orderless;

/// Hermiticity residual tolerance.
pub const EPS_HERMITIAN: f64 = 1e-10;
/// Unit-trace residual tolerance.
pub const EPS_TRACE: f64 = 1e-10;
/// Completeness / normalization residual tolerance.
pub const EPS_COMPLETENESS: f64 = 1e-10;
/// Smallest admissible eigenvalue is `-EPS_PSD`.
pub const EPS_PSD: f64 = 1e-9;
/// Unitarity residual tolerance.
pub const EPS_UNITARY: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum QuantumError {
    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("density operator trace must be 1 (got {trace})")]
    BadTrace { trace: f64 },
    #[error("POVM effect {outcome} is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    EffectNotPsd { outcome: usize, min_eigenvalue: f64 },
    #[error("POVM effects do not sum to identity (residual {residual:.3e})")]
    IncompleteSum { residual: f64 },
    #[error("matrix is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("parameter {value} outside [{lo}, {hi})")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("matrix must be square (got {rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("POVM needs at least one effect")]
    EmptyPovm,
    #[error("library POVMs must share dimension and outcome count")]
    InconsistentLibrary,
    #[error("library parameters must be strictly increasing, one per POVM")]
    BadParams,
    #[error("likelihood row (hypothesis {hypothesis}, action {action}) sums to {sum}, expected 1")]
    BadRowSum { hypothesis: usize, action: usize, sum: f64 },
    #[error("likelihood {value} at (hypothesis {hypothesis}, action {action}, outcome {outcome}) outside [0,1]")]
    LikelihoodOutOfRange { hypothesis: usize, action: usize, outcome: usize, value: f64 },
}

/// Square complex matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    data: DMatrix<Complex64>,
}

impl ComplexMatrix {
    pub fn from_dmatrix(data: DMatrix<Complex64>) -> Result<Self, QuantumError> {
        if data.nrows() != data.ncols() {
            return Err(QuantumError::NotSquare { rows: data.nrows(), cols: data.ncols() });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QuantumError::NonFinite);
        }
        Ok(ComplexMatrix { data })
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> Complex64) -> Result<Self, QuantumError> {
        Self::from_dmatrix(DMatrix::from_fn(dim, dim, f))
    }

    /// Builds from a row-major list of `[re, im]` pairs; the length must be
    /// a perfect square.
    pub fn from_row_major(entries: &[[f64; 2]]) -> Result<Self, QuantumError> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim * dim != entries.len() || dim == 0 {
            return Err(QuantumError::NotSquare { rows: entries.len(), cols: 1 });
        }
        Self::from_fn(dim, |i, j| {
            let [re, im] = entries[i * dim + j];
            Complex64::new(re, im)
        })
    }

    pub fn identity(dim: usize) -> Self {
        ComplexMatrix { data: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        ComplexMatrix { data: self.data.adjoint() }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, QuantumError> {
        check_dims(self.dim(), other.dim())?;
        Ok(ComplexMatrix { data: &self.data * &other.data })
    }

    pub fn scale(&self, s: f64) -> Self {
        ComplexMatrix { data: &self.data * Complex64::new(s, 0.0) }
    }

    /// Tr(self · other) without forming the product.
    pub fn trace_product(&self, other: &Self) -> Result<Complex64, QuantumError> {
        check_dims(self.dim(), other.dim())?;
        let n = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += self.data[(i, j)] * other.data[(j, i)];
            }
        }
        Ok(acc)
    }

    pub fn trace(&self) -> Complex64 {
        self.data.diagonal().iter().sum()
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermitian_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let d = self.data[(i, j)] - self.data[(j, i)].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue, treating the matrix as Hermitian.
    pub fn min_eigenvalue(&self) -> f64 {
        let eig = self.data.clone().symmetric_eigen();
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn unitarity_residual(&self) -> f64 {
        let n = self.dim();
        let prod = self.data.adjoint() * &self.data;
        let id = DMatrix::<Complex64>::identity(n, n);
        (prod - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn check_dims(left: usize, right: usize) -> Result<(), QuantumError> {
    if left != right {
        return Err(QuantumError::DimMismatch { left, right });
    }
    Ok(())
}

/// Unit-trace positive semidefinite Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// |psi><psi| from an unnormalized amplitude vector.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self, QuantumError> {
        let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm2 <= 0.0 || !norm2.is_finite() {
            return Err(QuantumError::NonFinite);
        }
        let m = ComplexMatrix::from_fn(amplitudes.len(), |i, j| {
            amplitudes[i] * amplitudes[j].conj() / norm2
        })?;
        validate_density(m)
    }
}

/// Checks the density-operator invariants: Hermitian, PSD, unit trace.
pub fn validate_density(m: ComplexMatrix) -> Result<DensityOperator, QuantumError> {
    let residual = m.hermitian_residual();
    if residual > EPS_HERMITIAN {
        return Err(QuantumError::NotHermitian { residual });
    }
    let min_eigenvalue = m.min_eigenvalue();
    if min_eigenvalue < -EPS_PSD {
        return Err(QuantumError::NotPsd { min_eigenvalue });
    }
    let trace = m.trace().re;
    if (trace - 1.0).abs() > EPS_TRACE {
        return Err(QuantumError::BadTrace { trace });
    }
    Ok(DensityOperator { matrix: m })
}

/// Positive operator-valued measure: PSD effects summing to the identity,
/// indexed by outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    effects: Vec<ComplexMatrix>,
}

impl Povm {
    pub fn effects(&self) -> &[ComplexMatrix] {
        &self.effects
    }

    pub fn effect(&self, outcome: usize) -> &ComplexMatrix {
        &self.effects[outcome]
    }

    pub fn outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }
}

/// Checks PSD-ness of each effect and completeness of the sum.
pub fn validate_povm(effects: Vec<ComplexMatrix>) -> Result<Povm, QuantumError> {
    if effects.is_empty() {
        return Err(QuantumError::EmptyPovm);
    }
    let dim = effects[0].dim();
    for e in &effects {
        check_dims(dim, e.dim())?;
    }
    for (outcome, e) in effects.iter().enumerate() {
        if e.hermitian_residual() > EPS_HERMITIAN {
            return Err(QuantumError::EffectNotPsd { outcome, min_eigenvalue: f64::NAN });
        }
        let min_eigenvalue = e.min_eigenvalue();
        if min_eigenvalue < -EPS_PSD {
            return Err(QuantumError::EffectNotPsd { outcome, min_eigenvalue });
        }
    }
    let mut sum = DMatrix::<Complex64>::zeros(dim, dim);
    for e in &effects {
        sum += e.as_dmatrix();
    }
    let id = DMatrix::<Complex64>::identity(dim, dim);
    let residual = (sum - id).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if residual > EPS_COMPLETENESS {
        return Err(QuantumError::IncompleteSum { residual });
    }
    Ok(Povm { effects })
}

/// Born-rule probability Tr(E rho), clamped to [0, 1].
pub fn born_prob(effect: &ComplexMatrix, rho: &DensityOperator) -> Result<f64, QuantumError> {
    let tr = effect.trace_product(rho.matrix())?;
    debug_assert!(
        tr.re >= -EPS_PSD && tr.re <= 1.0 + EPS_PSD,
        "Born probability {} outside tolerance band",
        tr.re
    );
    Ok(tr.re.clamp(0.0, 1.0))
}

/// Conjugates a reference POVM by a unitary: effects become U^dag F_o U.
pub fn unitary_conjugated_povm(u: &ComplexMatrix, reference: &Povm) -> Result<Povm, QuantumError> {
    check_dims(u.dim(), reference.dim())?;
    let residual = u.unitarity_residual();
    if residual > EPS_UNITARY {
        return Err(QuantumError::NotUnitary { residual });
    }
    let udag = u.dagger();
    let effects = reference
        .effects()
        .iter()
        .map(|f| udag.matmul(f).and_then(|m| m.matmul(u)))
        .collect::<Result<Vec<_>, _>>()?;
    validate_povm(effects)
}

/// Rank-1 projective qubit measurement onto
/// `|e0> = cos(phi)|0> + sin(phi)|1>` and its orthogonal complement, so
/// that Tr(E_0 |0><0|) = cos^2(phi).
pub fn binary_projective_povm(phi: f64) -> Povm {
    let (s, c) = phi.sin_cos();
    let e0 = rank1(&[Complex64::new(c, 0.0), Complex64::new(s, 0.0)]);
    let e1 = rank1(&[Complex64::new(-s, 0.0), Complex64::new(c, 0.0)]);
    Povm { effects: vec![e0, e1] }
}

fn rank1(amplitudes: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(amplitudes.len(), |i, j| amplitudes[i] * amplitudes[j].conj())
        .expect("finite amplitudes")
}

/// Equatorial Bloch state `(|0> + e^{i phase}|1>)/sqrt(2)`.
pub fn equatorial_state(phase: f64) -> DensityOperator {
    let amp = [
        Complex64::new(1.0, 0.0),
        Complex64::new(phase.cos(), phase.sin()),
    ];
    DensityOperator::pure(&amp).expect("equatorial states are valid")
}

/// Three-outcome qubit POVM for the trine ensemble: each effect is 2/3 of a
/// rank-1 projector onto the equatorial state at phase `alpha + 2 pi o / 3`.
/// Against the trine states this reproduces the likelihoods
/// `(1 + cos(2 pi (i - o)/3 - alpha)) / 3`.
pub fn trine_povm(alpha: f64) -> Result<Povm, QuantumError> {
    let period = 2.0 * std::f64::consts::PI / 3.0;
    if !(0.0..period).contains(&alpha) {
        return Err(QuantumError::OutOfRange { value: alpha, lo: 0.0, hi: period });
    }
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    let effects = (0..3)
        .map(|o| {
            let phase = alpha + period * o as f64;
            let amp = [
                Complex64::new(inv, 0.0),
                Complex64::new(phase.cos() * inv, phase.sin() * inv),
            ];
            rank1(&amp).scale(2.0 / 3.0)
        })
        .collect();
    validate_povm(effects)
}

/// Finite library of POVMs sharing one dimension and outcome alphabet,
/// optionally tagged with the real parameters that generated them.
#[derive(Debug, Clone)]
pub struct MeasurementLibrary {
    povms: Vec<Povm>,
    params: Option<Vec<f64>>,
}

impl MeasurementLibrary {
    pub fn new(povms: Vec<Povm>, params: Option<Vec<f64>>) -> Result<Self, QuantumError> {
        if povms.is_empty() {
            return Err(QuantumError::EmptyPovm);
        }
        let dim = povms[0].dim();
        let outcomes = povms[0].outcomes();
        if povms.iter().any(|p| p.dim() != dim || p.outcomes() != outcomes) {
            return Err(QuantumError::InconsistentLibrary);
        }
        if let Some(ps) = &params {
            if ps.len() != povms.len() || ps.windows(2).any(|w| w[0] >= w[1]) {
                return Err(QuantumError::BadParams);
            }
        }
        Ok(MeasurementLibrary { povms, params })
    }

    pub fn povms(&self) -> &[Povm] {
        &self.povms
    }

    pub fn povm(&self, action: usize) -> &Povm {
        &self.povms[action]
    }

    pub fn params(&self) -> Option<&[f64]> {
        self.params.as_deref()
    }

    pub fn param(&self, action: usize) -> Option<f64> {
        self.params.as_ref().map(|p| p[action])
    }

    pub fn len(&self) -> usize {
        self.povms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.povms.is_empty()
    }

    pub fn outcomes(&self) -> usize {
        self.povms[0].outcomes()
    }

    pub fn dim(&self) -> usize {
        self.povms[0].dim()
    }
}

/// Angle-parameterized measurement families used by the case studies and
/// the custom-ensemble loader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ParamFamily {
    /// `binary_projective_povm(phi)`, periodic with period pi.
    BinaryProjective,
    /// `trine_povm(alpha)`, action-equivalent with period 2 pi / 3.
    TrineOrientation,
}

impl ParamFamily {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "binary-projective" => Some(ParamFamily::BinaryProjective),
            "trine" => Some(ParamFamily::TrineOrientation),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ParamFamily::BinaryProjective => "binary-projective",
            ParamFamily::TrineOrientation => "trine",
        }
    }

    /// Period of the circular parameter distance.
    pub fn period(&self) -> f64 {
        match self {
            ParamFamily::BinaryProjective => std::f64::consts::PI,
            ParamFamily::TrineOrientation => 2.0 * std::f64::consts::PI / 3.0,
        }
    }

    /// Derivative bound on the likelihoods with respect to the parameter.
    pub fn analytic_action_lipschitz(&self) -> f64 {
        match self {
            // d/dphi cos^2(x - phi) = sin(2(x - phi)), bounded by 1
            ParamFamily::BinaryProjective => 1.0,
            // d/dalpha (1 + cos(. - alpha))/3, bounded by 1/3
            ParamFamily::TrineOrientation => 1.0 / 3.0,
        }
    }

    pub fn povm(&self, param: f64) -> Result<Povm, QuantumError> {
        match self {
            ParamFamily::BinaryProjective => Ok(binary_projective_povm(param)),
            ParamFamily::TrineOrientation => {
                // Measurement actions repeat with the family period; fold
                // probe parameters back into the base interval.
                let period = self.period();
                let folded = param.rem_euclid(period);
                trine_povm(folded)
            }
        }
    }

    pub fn library(&self, params: &[f64]) -> Result<MeasurementLibrary, QuantumError> {
        let povms = params.iter().map(|&p| self.povm(p)).collect::<Result<Vec<_>, _>>()?;
        MeasurementLibrary::new(povms, Some(params.to_vec()))
    }
}

/// Precomputed likelihoods `Tr(E_o^(a) rho_i)` for every hypothesis,
/// action, and outcome, stored so the hypothesis index is contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodTable {
    hypotheses: usize,
    actions: usize,
    outcomes: usize,
    values: Vec<f64>,
}

impl LikelihoodTable {
    /// Wraps raw values, checking range and per-(hypothesis, action)
    /// normalization.
    pub fn from_values(
        hypotheses: usize,
        actions: usize,
        outcomes: usize,
        values: Vec<f64>,
    ) -> Result<Self, QuantumError> {
        assert_eq!(values.len(), hypotheses * actions * outcomes);
        let table = LikelihoodTable { hypotheses, actions, outcomes, values };
        for i in 0..hypotheses {
            for a in 0..actions {
                let mut sum = 0.0;
                for o in 0..outcomes {
                    let v = table.get(i, a, o);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(QuantumError::LikelihoodOutOfRange {
                            hypothesis: i,
                            action: a,
                            outcome: o,
                            value: v,
                        });
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > EPS_COMPLETENESS {
                    return Err(QuantumError::BadRowSum { hypothesis: i, action: a, sum });
                }
            }
        }
        Ok(table)
    }

    pub fn hypotheses(&self) -> usize {
        self.hypotheses
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    #[inline]
    pub fn get(&self, hypothesis: usize, action: usize, outcome: usize) -> f64 {
        self.values[(action * self.outcomes + outcome) * self.hypotheses + hypothesis]
    }

    /// Likelihoods of all hypotheses for a fixed `(action, outcome)`.
    #[inline]
    pub fn likelihoods(&self, action: usize, outcome: usize) -> &[f64] {
        let base = (action * self.outcomes + outcome) * self.hypotheses;
        &self.values[base..base + self.hypotheses]
    }

    /// Probability of each outcome under `action` when the hypothesis
    /// weights are `weights`. Terms are summed order-independently.
    pub fn outcome_probs_into(&self, weights: &[f64], action: usize, probs: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        probs.clear();
        for o in 0..self.outcomes {
            let ls = self.likelihoods(action, o);
            scratch.clear();
            scratch.extend(weights.iter().zip(ls).map(|(w, l)| w * l));
            probs.push(sum_orderless(scratch));
        }
    }
}

/// Evaluates the Born rule for every (hypothesis, action, outcome) triple.
pub fn build_likelihood_table(
    states: &[DensityOperator],
    library: &MeasurementLibrary,
) -> Result<LikelihoodTable, QuantumError> {
    let dim = library.dim();
    for s in states {
        check_dims(dim, s.dim())?;
    }
    let (m, a_count, o_count) = (states.len(), library.len(), library.outcomes());
    let mut values = vec![0.0; m * a_count * o_count];
    for a in 0..a_count {
        for o in 0..o_count {
            for (i, state) in states.iter().enumerate() {
                values[(a * o_count + o) * m + i] = born_prob(library.povm(a).effect(o), state)?;
            }
        }
    }
    LikelihoodTable::from_values(m, a_count, o_count, values)
}

// ---------------------------------------------------------------------------
// Randomized instances, used by property tests and diagnostics.
// ---------------------------------------------------------------------------

fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
    Complex64::new(r * c, r * s)
}

fn ginibre<R: Rng>(dim: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng))
}

/// Random full-rank density operator (normalized Wishart).
pub fn random_density<R: Rng>(dim: usize, rng: &mut R) -> DensityOperator {
    let g = ginibre(dim, rng);
    let w = &g * g.adjoint();
    let tr: Complex64 = w.diagonal().iter().sum();
    let m = ComplexMatrix::from_dmatrix(w / tr).expect("finite");
    validate_density(m).expect("normalized Wishart matrices are valid states")
}

/// Random POVM with `outcomes` effects, built by whitening random PSD
/// matrices: E_o = S^{-1/2} A_o S^{-1/2} with S the sum of the A_o.
pub fn random_povm<R: Rng>(dim: usize, outcomes: usize, rng: &mut R) -> Povm {
    let parts: Vec<DMatrix<Complex64>> = (0..outcomes)
        .map(|_| {
            let g = ginibre(dim, rng);
            &g * g.adjoint()
        })
        .collect();
    let mut total = DMatrix::<Complex64>::zeros(dim, dim);
    for p in &parts {
        total += p;
    }
    let eig = total.symmetric_eigen();
    let inv_sqrt_vals =
        DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                Complex64::new(1.0 / eig.eigenvalues[i].max(1e-12).sqrt(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
    let inv_sqrt = &eig.eigenvectors * inv_sqrt_vals * eig.eigenvectors.adjoint();
    let effects = parts
        .into_iter()
        .map(|p| ComplexMatrix::from_dmatrix(&inv_sqrt * p * &inv_sqrt).expect("finite"))
        .collect();
    validate_povm(effects).expect("whitened PSD parts form a POVM")
}

/// Random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let g = ginibre(dim, rng);
    let qr = g.qr();
    ComplexMatrix::from_dmatrix(qr.q()).expect("finite")
}
