//! Dense complex linear algebra for finite-dimensional quantum systems.
//!
//! Composite spaces always use the Kronecker convention with the left factor
//! as the slow index: for `A ⊗ B`, basis state `|i⟩ ⊗ |j⟩` sits at index
//! `i * dim(B) + j`. Every module in this crate relies on that ordering.
//!
//! Units: ħ = 1, so a Hamiltonian `H` generates `U(t) = exp(-i t H)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance for structural checks (Hermiticity, trace preservation).
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Tolerance for unitarity and conservation-law checks.
pub const CONSERVATION_TOL: f64 = 1e-10;
/// Tolerance for physics assertions (efficiency, speed, entropy).
pub const PHYSICS_TOL: f64 = 1e-9;
/// Default ceiling on composite dimensions produced by [`tensor_product`].
pub const DEFAULT_MAX_DIM: usize = 20_000;

/// Eigenvalues at or below this value are dropped before taking logarithms.
const ENTROPY_CLIP: f64 = 1e-14;

fn max_hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// A square complex matrix acting on a finite Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: DMatrix<C64>,
    hermitian: bool,
}

impl Operator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Shape(format!(
                "operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.nrows() == 0 {
            return Err(Error::Shape("operator dimension must be positive".into()));
        }
        Ok(Self {
            matrix,
            hermitian: false,
        })
    }

    /// Wraps `matrix` and flags it Hermitian after checking
    /// `max |A_ij - conj(A_ji)| <= 1e-12`.
    pub fn hermitian(matrix: DMatrix<C64>) -> Result<Self> {
        let mut op = Self::new(matrix)?;
        let deviation = max_hermitian_deviation(&op.matrix);
        if deviation > STRUCTURAL_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    /// Real diagonal operator, e.g. a Hamiltonian written in its eigenbasis.
    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Self {
            matrix: DMatrix::from_diagonal(&d),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn adjoint(&self) -> Operator {
        Self {
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        max_abs(&self.matrix)
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|i| i == j || self.matrix[(i, j)] == C64::new(0.0, 0.0)))
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).collect()
    }

    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        check_same_dim(self.dim(), other.dim())?;
        Ok(Self {
            matrix: &self.matrix * &other.matrix,
            hermitian: false,
        })
    }

    /// Real linear combination `a * self + b * other`; Hermiticity is kept.
    pub fn combine(&self, a: f64, other: &Operator, b: f64) -> Result<Operator> {
        check_same_dim(self.dim(), other.dim())?;
        let matrix = self.matrix.map(|z| z * a) + other.matrix.map(|z| z * b);
        Ok(Self {
            matrix,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn apply(&self, psi: &StateVector) -> Result<DVector<C64>> {
        check_same_dim(self.dim(), psi.dim())?;
        Ok(&self.matrix * psi.amplitudes())
    }

    /// `max |(U†U - I)_ij|`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        let prod = self.matrix.adjoint() * &self.matrix;
        max_abs(&(prod - DMatrix::<C64>::identity(n, n)))
    }
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// A normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// Checks `sum |a_i|^2 = 1` within 1e-10.
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidState("state vector must be non-empty".into()));
        }
        let norm2 = amplitudes.norm_squared();
        if (norm2 - 1.0).abs() > CONSERVATION_TOL {
            return Err(Error::InvalidState(format!("squared norm {norm2} differs from 1")));
        }
        Ok(Self { amplitudes })
    }

    pub fn normalized(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        Self::new(amplitudes.unscale(norm))
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::Shape(format!("basis index {index} out of range for dim {dim}")));
        }
        let mut v = DVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.amplitudes[index]
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_same_dim(self.dim(), other.dim())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }
}

/// A valid density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e-12), trace (1e-10) and the smallest
    /// eigenvalue (>= -1e-10).
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::Shape("density matrix must be square and non-empty".into()));
        }
        let deviation = max_hermitian_deviation(&matrix);
        if deviation > STRUCTURAL_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > CONSERVATION_TOL || trace.im.abs() > CONSERVATION_TOL {
            return Err(Error::InvalidState(format!("trace {trace} differs from 1")));
        }
        let min_eig = hermitian_eigenvalues(&matrix).into_iter().fold(f64::INFINITY, f64::min);
        if min_eig < -CONSERVATION_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig}")));
        }
        Ok(Self { matrix })
    }

    /// Diagonal state from a probability vector.
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Shape("empty probability vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| **p < -CONSERVATION_TOL || !p.is_finite()) {
            return Err(Error::InvalidState(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > CONSERVATION_TOL {
            return Err(Error::InvalidState(format!("probabilities sum to {total}")));
        }
        let d = DVector::from_iterator(probs.len(), probs.iter().map(|&p| C64::new(p, 0.0)));
        Ok(Self {
            matrix: DMatrix::from_diagonal(&d),
        })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let a = psi.amplitudes();
        Self {
            matrix: a * a.adjoint(),
        }
    }

    pub(crate) fn from_matrix_unchecked(matrix: DMatrix<C64>) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        max_hermitian_deviation(&self.matrix)
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, u: &Operator) -> Result<DensityMatrix> {
        check_same_dim(self.dim(), u.dim())?;
        Ok(Self {
            matrix: u.matrix() * &self.matrix * u.matrix().adjoint(),
        })
    }
}

/// Dimensions of the tensor factors of a composite space, slow index first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsystemLayout {
    dims: Vec<usize>,
}

impl SubsystemLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid factor dimensions {dims:?}")));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn check(&self, dim: usize) -> Result<()> {
        if self.total_dim() != dim {
            return Err(Error::Shape(format!(
                "layout {:?} has total dimension {} but the state has dimension {dim}",
                self.dims,
                self.total_dim()
            )));
        }
        Ok(())
    }

    /// Multi-index of a flat composite index.
    pub fn split(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    /// Flat composite index of a multi-index.
    pub fn join(&self, parts: &[usize]) -> usize {
        parts.iter().zip(&self.dims).fold(0, |acc, (&p, &d)| acc * d + p)
    }
}

/// Kronecker product for operators, density matrices and pure states.
pub trait TensorProduct: Sized {
    fn dim(&self) -> usize;
    fn kron_unchecked(&self, other: &Self) -> Self;
}

impl TensorProduct for Operator {
    fn dim(&self) -> usize {
        Operator::dim(self)
    }
    fn kron_unchecked(&self, other: &Self) -> Self {
        Operator {
            matrix: self.matrix.kronecker(&other.matrix),
            hermitian: self.hermitian && other.hermitian,
        }
    }
}

impl TensorProduct for DensityMatrix {
    fn dim(&self) -> usize {
        DensityMatrix::dim(self)
    }
    fn kron_unchecked(&self, other: &Self) -> Self {
        DensityMatrix {
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }
}

impl TensorProduct for StateVector {
    fn dim(&self) -> usize {
        StateVector::dim(self)
    }
    fn kron_unchecked(&self, other: &Self) -> Self {
        StateVector {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        }
    }
}

pub fn tensor_product<T: TensorProduct>(a: &T, b: &T) -> Result<T> {
    tensor_product_with_limit(a, b, DEFAULT_MAX_DIM)
}

pub fn tensor_product_with_limit<T: TensorProduct>(a: &T, b: &T, limit: usize) -> Result<T> {
    let dim = a
        .dim()
        .checked_mul(b.dim())
        .ok_or(Error::DimensionLimit { dim: usize::MAX, limit })?;
    if dim > limit {
        return Err(Error::DimensionLimit { dim, limit });
    }
    Ok(a.kron_unchecked(b))
}

fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    m.clone().symmetric_eigen().eigenvalues.iter().copied().collect()
}

/// Eigendecomposition of one invariant block of a Hermitian operator.
#[derive(Clone, Debug)]
struct EigenBlock {
    indices: Vec<usize>,
    values: Vec<f64>,
    vectors: DMatrix<C64>,
}

/// Spectral decomposition of a Hermitian operator.
///
/// The operator is first split into the connected components of its
/// coupling graph (exactly invariant subspaces); each component is then
/// diagonalized densely. For a generic dense matrix this is a single block.
#[derive(Clone, Debug)]
pub struct Spectrum {
    dim: usize,
    blocks: Vec<EigenBlock>,
    block_of: Vec<(usize, usize)>,
}

impl Spectrum {
    pub fn of(h: &Operator) -> Result<Self> {
        if !h.is_hermitian() {
            return Err(Error::NotHermitian {
                deviation: max_hermitian_deviation(h.matrix()),
            });
        }
        let n = h.dim();
        let m = h.matrix();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for j in 0..n {
            for i in 0..j {
                if m[(i, j)] != C64::new(0.0, 0.0) || m[(j, i)] != C64::new(0.0, 0.0) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_slot = vec![usize::MAX; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if root_slot[r] == usize::MAX {
                root_slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[root_slot[r]].push(i);
        }

        let mut block_of = vec![(0, 0); n];
        let blocks = groups
            .into_iter()
            .enumerate()
            .map(|(b, indices)| {
                for (pos, &i) in indices.iter().enumerate() {
                    block_of[i] = (b, pos);
                }
                let k = indices.len();
                let sub = DMatrix::from_fn(k, k, |r, c| m[(indices[r], indices[c])]);
                let eig = sub.symmetric_eigen();
                EigenBlock {
                    indices,
                    values: eig.eigenvalues.iter().copied().collect(),
                    vectors: eig.eigenvectors,
                }
            })
            .collect();
        Ok(Self {
            dim: n,
            blocks,
            block_of,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// All eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.blocks.iter().flat_map(|b| b.values.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        all
    }

    /// Largest block size; 1 for a diagonal operator.
    pub fn largest_block(&self) -> usize {
        self.blocks.iter().map(|b| b.indices.len()).max().unwrap_or(0)
    }

    /// `U(t) = V diag(exp(-i λ t)) V†`.
    pub fn propagator(&self, t: f64) -> Operator {
        let mut u = DMatrix::<C64>::zeros(self.dim, self.dim);
        for block in &self.blocks {
            let local = block_propagator(block, t);
            for (r, &i) in block.indices.iter().enumerate() {
                for (c, &j) in block.indices.iter().enumerate() {
                    u[(i, j)] = local[(r, c)];
                }
            }
        }
        Operator {
            matrix: u,
            hermitian: false,
        }
    }

    /// Propagators of the invariant blocks, as `(composite indices, U_block)`
    /// in block order.
    pub fn block_propagators(&self, t: f64) -> Vec<(&[usize], DMatrix<C64>)> {
        self.blocks
            .iter()
            .map(|b| (b.indices.as_slice(), block_propagator(b, t)))
            .collect()
    }

    /// `(block, position in block)` of a composite index.
    pub fn block_of(&self, index: usize) -> (usize, usize) {
        self.block_of[index]
    }

    /// Column `U(t)|index⟩` restricted to its invariant block, as
    /// `(composite index, amplitude)` pairs.
    pub fn evolve_basis(&self, index: usize, t: f64) -> Vec<(usize, C64)> {
        let (b, pos) = self.block_of[index];
        let block = &self.blocks[b];
        let k = block.indices.len();
        let phases: Vec<C64> = (0..k)
            .map(|l| C64::from_polar(1.0, -block.values[l] * t) * block.vectors[(pos, l)].conj())
            .collect();
        block
            .indices
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                let amp = (0..k).map(|l| block.vectors[(r, l)] * phases[l]).sum();
                (i, amp)
            })
            .collect()
    }

    pub fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        check_same_dim(self.dim, psi.dim())?;
        let mut out = DVector::<C64>::zeros(self.dim);
        for block in &self.blocks {
            let local = block_propagator(block, t);
            let sub = DVector::from_iterator(block.indices.len(), block.indices.iter().map(|&i| psi.amplitude(i)));
            let evolved = local * sub;
            for (r, &i) in block.indices.iter().enumerate() {
                out[i] = evolved[r];
            }
        }
        Ok(StateVector { amplitudes: out })
    }

    /// `Σ f(λ) |v⟩⟨v|` for a real function `f`.
    pub fn apply_function(&self, f: impl Fn(f64) -> f64) -> Operator {
        let mut out = DMatrix::<C64>::zeros(self.dim, self.dim);
        for block in &self.blocks {
            let k = block.indices.len();
            let mut scaled = block.vectors.clone();
            for l in 0..k {
                let w = f(block.values[l]);
                for r in 0..k {
                    scaled[(r, l)] *= w;
                }
            }
            let local = scaled * block.vectors.adjoint();
            for (r, &i) in block.indices.iter().enumerate() {
                for (c, &j) in block.indices.iter().enumerate() {
                    out[(i, j)] = local[(r, c)];
                }
            }
        }
        let h = (&out + out.adjoint()) * C64::new(0.5, 0.0);
        Operator {
            matrix: h,
            hermitian: true,
        }
    }

    /// Adds the diagonal of `U(t) ρ U(t)†` for `ρ = Σ p_k |k⟩⟨k|` to `out`.
    pub fn accumulate_populations(&self, initial: &[(usize, f64)], t: f64, out: &mut [f64]) {
        let mut phases = Vec::new();
        for &(index, p) in initial {
            let (b, pos) = self.block_of[index];
            let block = &self.blocks[b];
            let k = block.indices.len();
            phases.clear();
            phases.extend((0..k).map(|l| C64::from_polar(1.0, -block.values[l] * t) * block.vectors[(pos, l)].conj()));
            for (r, &i) in block.indices.iter().enumerate() {
                let amp: C64 = (0..k).map(|l| block.vectors[(r, l)] * phases[l]).sum();
                out[i] += p * amp.norm_sqr();
            }
        }
    }
}

fn block_propagator(block: &EigenBlock, t: f64) -> DMatrix<C64> {
    let k = block.indices.len();
    let mut scaled = block.vectors.clone();
    for l in 0..k {
        let phase = C64::from_polar(1.0, -block.values[l] * t);
        for r in 0..k {
            scaled[(r, l)] *= phase;
        }
    }
    scaled * block.vectors.adjoint()
}

/// `exp(-i t h)` for Hermitian `h`, via its spectral decomposition.
pub fn hermitian_exponential(h: &Operator, t: f64) -> Result<Operator> {
    Ok(Spectrum::of(h)?.propagator(t))
}

/// Precomputed index bookkeeping for tracing out factors of a layout.
struct TraceMap {
    kept_dim: usize,
    /// `full[t * kept_dim + k]` is the composite index with kept part `k`
    /// and traced part `t`.
    full: Vec<usize>,
    traced_dim: usize,
}

impl TraceMap {
    fn new(layout: &SubsystemLayout, keep: &[usize]) -> Result<Self> {
        let n_factors = layout.dims().len();
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if let Some(&bad) = kept.iter().find(|&&k| k >= n_factors) {
            return Err(Error::Shape(format!(
                "factor {bad} not in layout with {n_factors} factors"
            )));
        }
        let traced: Vec<usize> = (0..n_factors).filter(|f| !kept.contains(f)).collect();
        let kept_dim: usize = kept.iter().map(|&f| layout.dims()[f]).product();
        let traced_dim: usize = traced.iter().map(|&f| layout.dims()[f]).product();
        let mut full = vec![0; kept_dim * traced_dim];
        let total = layout.total_dim();
        for index in 0..total {
            let parts = layout.split(index);
            let k = kept.iter().fold(0, |acc, &f| acc * layout.dims()[f] + parts[f]);
            let t = traced.iter().fold(0, |acc, &f| acc * layout.dims()[f] + parts[f]);
            full[t * kept_dim + k] = index;
        }
        Ok(Self {
            kept_dim,
            full,
            traced_dim,
        })
    }

    fn reduce(&self, entry: impl Fn(usize, usize) -> C64) -> DMatrix<C64> {
        let dk = self.kept_dim;
        let mut out = DMatrix::<C64>::zeros(dk, dk);
        for t in 0..self.traced_dim {
            let row = &self.full[t * dk..(t + 1) * dk];
            for (a, &i) in row.iter().enumerate() {
                for (b, &j) in row.iter().enumerate() {
                    out[(a, b)] += entry(i, j);
                }
            }
        }
        out
    }
}

/// Traces out every factor not listed in `keep`. Kept factors appear in
/// ascending layout order in the result.
pub fn partial_trace(rho: &DensityMatrix, layout: &SubsystemLayout, keep: &[usize]) -> Result<DensityMatrix> {
    layout.check(rho.dim())?;
    let map = TraceMap::new(layout, keep)?;
    let m = rho.matrix();
    Ok(DensityMatrix::from_matrix_unchecked(map.reduce(|i, j| m[(i, j)])))
}

/// Reduced state of a pure state, without forming `|ψ⟩⟨ψ|`.
pub fn reduced_state(psi: &StateVector, layout: &SubsystemLayout, keep: &[usize]) -> Result<DensityMatrix> {
    layout.check(psi.dim())?;
    let map = TraceMap::new(layout, keep)?;
    let a = psi.amplitudes();
    Ok(DensityMatrix::from_matrix_unchecked(
        map.reduce(|i, j| a[i] * a[j].conj()),
    ))
}

/// `-Σ λ ln λ` in nats over eigenvalues above 1e-14.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    rho.eigenvalues()
        .into_iter()
        .filter(|&l| l > ENTROPY_CLIP)
        .map(|l| -l * l.ln())
        .sum()
}

/// Entanglement entropy of the factors in `keep` for a pure composite state.
pub fn entanglement_entropy(psi: &StateVector, layout: &SubsystemLayout, keep: &[usize]) -> Result<f64> {
    Ok(von_neumann_entropy(&reduced_state(psi, layout, keep)?))
}

/// `s = (1 - |⟨ψ|φ⟩|²) / 2`, in `[0, 1/2]`.
pub fn fubini_study_distance(psi: &StateVector, phi: &StateVector) -> Result<f64> {
    let overlap = psi.inner(phi)?.norm_sqr();
    Ok((0.5 * (1.0 - overlap)).clamp(0.0, 0.5))
}

/// Max-entry magnitude of `AB - BA`. Uses an O(n²) path when either
/// operand is diagonal, which covers every conserved quantity in this crate.
pub fn commutator_norm(a: &Operator, b: &Operator) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    let n = a.dim();
    if b.is_diagonal() || a.is_diagonal() {
        let (dense, diag, sign) = if b.is_diagonal() { (a, b, 1.0) } else { (b, a, -1.0) };
        let d = diag.diagonal();
        let m = dense.matrix();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                // [A, D]_ij = A_ij (d_j - d_i)
                let z = m[(i, j)] * (d[j] - d[i]) * sign;
                worst = worst.max(z.norm());
            }
        }
        return Ok(worst);
    }
    let ab = a.matrix() * b.matrix();
    let ba = b.matrix() * a.matrix();
    Ok(max_abs(&(ab - ba)))
}

/// `sqrt(⟨h²⟩ - ⟨h⟩²)` for Hermitian `h`.
pub fn energy_uncertainty(h: &Operator, psi: &StateVector) -> Result<f64> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian {
            deviation: max_hermitian_deviation(h.matrix()),
        });
    }
    let h_psi = h.apply(psi)?;
    let mean = psi.amplitudes().dotc(&h_psi).re;
    let second = h_psi.norm_squared();
    Ok((second - mean * mean).max(0.0).sqrt())
}

/// Expectation value `⟨ψ|h|ψ⟩` (real part).
pub fn expectation(h: &Operator, psi: &StateVector) -> Result<f64> {
    let h_psi = h.apply(psi)?;
    Ok(psi.amplitudes().dotc(&h_psi).re)
}
