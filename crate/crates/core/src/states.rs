//! States, observables, and Hamiltonians for the two system classes:
//! qubit registers (dimension `2^N`) and two-mode collective spins
//! (dimension `N + 1`, Fock basis ordered `n₁ = N, N−1, …, 0`).

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat2, DIM_CAP, HERMITICITY_TOL};
use crate::stream::SeededStream;

pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    QubitRegister,
    CollectiveSpin,
}

/// Which Hilbert space a state or observable lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpec {
    kind: SpaceKind,
    n: u32,
}

impl HilbertSpec {
    /// Register of `n ≥ 1` qubits, dimension `2^n`.
    pub fn qubits(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("qubit register needs n >= 1"));
        }
        1usize
            .checked_shl(n)
            .filter(|&d| d <= DIM_CAP)
            .ok_or_else(|| Error::capacity(format!("2^{n} exceeds dimension cap {DIM_CAP}")))?;
        Ok(HilbertSpec {
            kind: SpaceKind::QubitRegister,
            n,
        })
    }

    /// Collective spin of `n ≥ 1` particles, dimension `n + 1`.
    pub fn collective(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("collective spin needs n >= 1"));
        }
        if n as usize + 1 > DIM_CAP {
            return Err(Error::capacity(format!(
                "collective dimension {} exceeds cap {DIM_CAP}",
                n + 1
            )));
        }
        Ok(HilbertSpec {
            kind: SpaceKind::CollectiveSpin,
            n,
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn n_particles(&self) -> u32 {
        self.n
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            SpaceKind::QubitRegister => 1usize << self.n,
            SpaceKind::CollectiveSpin => self.n as usize + 1,
        }
    }
}

/// Density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    space: HilbertSpec,
    mat: CMat,
}

impl DensityMatrix {
    /// Full validation including the PSD check (one eigendecomposition).
    pub fn new(space: HilbertSpec, mat: CMat) -> Result<Self> {
        let dm = Self::from_parts(space, mat)?;
        let eig = linalg::hermitian_eig(&dm.mat)?;
        if eig.values[0] < -PSD_TOL {
            return Err(Error::validation(format!(
                "density matrix has negative eigenvalue {:.3e}",
                eig.values[0]
            )));
        }
        Ok(dm)
    }

    /// Cheap structural checks only; callers guarantee positivity.
    pub(crate) fn from_parts(space: HilbertSpec, mat: CMat) -> Result<Self> {
        if mat.dim() != (space.dim(), space.dim()) {
            return Err(Error::validation(format!(
                "state dimension {:?} does not match space dimension {}",
                mat.dim(),
                space.dim()
            )));
        }
        if !linalg::all_finite(&mat) {
            return Err(Error::numerical("density matrix has non-finite entries"));
        }
        let defect = linalg::hermiticity_defect(&mat);
        if defect > HERMITICITY_TOL {
            return Err(Error::validation(format!(
                "density matrix not Hermitian: defect {defect:.3e}"
            )));
        }
        let tr = linalg::trace(&mat);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::validation(format!(
                "density matrix trace {tr} deviates from 1"
            )));
        }
        Ok(DensityMatrix { space, mat })
    }

    pub fn space(&self) -> HilbertSpec {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    /// Tr(ρ²), via the squared Frobenius norm.
    pub fn purity(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Hermitian observable, optionally carrying a factored description as a
/// sum of single-site 2×2 terms (qubit registers only). The dense matrix
/// is always the source of truth; the factored form feeds estimator fast
/// paths.
#[derive(Clone, Debug)]
pub struct Observable {
    space: HilbertSpec,
    mat: CMat,
    site_terms: Option<Vec<Mat2>>,
}

impl Observable {
    pub fn new(space: HilbertSpec, mat: CMat) -> Result<Self> {
        if mat.dim() != (space.dim(), space.dim()) {
            return Err(Error::validation(format!(
                "observable dimension {:?} does not match space dimension {}",
                mat.dim(),
                space.dim()
            )));
        }
        if !linalg::all_finite(&mat) {
            return Err(Error::numerical("observable has non-finite entries"));
        }
        let defect = linalg::hermiticity_defect(&mat);
        if defect > HERMITICITY_TOL {
            return Err(Error::validation(format!(
                "observable not Hermitian: defect {defect:.3e}"
            )));
        }
        Ok(Observable {
            space,
            mat,
            site_terms: None,
        })
    }

    pub fn space(&self) -> HilbertSpec {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    /// Single-site terms `a_l` with `A = Σ_l (𝟙 ⊗ … ⊗ a_l ⊗ … ⊗ 𝟙)`.
    pub fn site_terms(&self) -> Option<&[Mat2]> {
        self.site_terms.as_deref()
    }

    /// Real diagonal when the dense matrix is exactly diagonal.
    pub fn strict_diagonal(&self) -> Option<Vec<f64>> {
        let d = self.dim();
        let zero = C64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                if i != j && self.mat[[i, j]] != zero {
                    return None;
                }
            }
        }
        Some((0..d).map(|i| self.mat[[i, i]].re).collect())
    }
}

fn pure_density(space: HilbertSpec, amplitudes: &[C64]) -> DensityMatrix {
    let d = space.dim();
    debug_assert_eq!(amplitudes.len(), d);
    let mat = Array2::from_shape_fn((d, d), |(i, j)| amplitudes[i] * amplitudes[j].conj());
    DensityMatrix { space, mat }
}

/// `|GHZ_N⟩ = (|0…0⟩ + |1…1⟩)/√2` as a rank-1 projector. Capacity 1 ≤ N ≤ 12.
pub fn ghz_state(n: u32) -> Result<DensityMatrix> {
    if !(1..=12).contains(&n) {
        return Err(Error::capacity(format!(
            "ghz_state supports 1 <= N <= 12, got {n}"
        )));
    }
    let space = HilbertSpec::qubits(n)?;
    let d = space.dim();
    let mut amps = vec![C64::new(0.0, 0.0); d];
    let w = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amps[0] = w;
    amps[d - 1] = w;
    Ok(pure_density(space, &amps))
}

/// `|N00N⟩ = (|N,0⟩ + |0,N⟩)/√2` in the Fock ordering `n₁ = N, …, 0`.
pub fn noon_state(n: u32) -> Result<DensityMatrix> {
    let space = HilbertSpec::collective(n)?;
    let d = space.dim();
    let mut amps = vec![C64::new(0.0, 0.0); d];
    let w = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amps[0] = w;
    amps[d - 1] = w;
    Ok(pure_density(space, &amps))
}

/// `ρ(p) = (1−p) ρ + p 𝟙/d`.
pub fn depolarize(rho: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!(
            "depolarization strength must lie in [0, 1], got {p}"
        )));
    }
    let d = rho.dim();
    let uniform = p / d as f64;
    let mut mat = rho.mat.mapv(|z| z * (1.0 - p));
    for i in 0..d {
        mat[[i, i]] += uniform;
    }
    Ok(DensityMatrix {
        space: rho.space,
        mat,
    })
}

/// Measurement axis for collective spin observables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Axis {
    X,
    Y,
    Z,
    Direction([f64; 3]),
}

impl Axis {
    fn unit_vector(&self) -> Result<[f64; 3]> {
        match self {
            Axis::X => Ok([1.0, 0.0, 0.0]),
            Axis::Y => Ok([0.0, 1.0, 0.0]),
            Axis::Z => Ok([0.0, 0.0, 1.0]),
            Axis::Direction(v) => {
                let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if !norm.is_finite() || norm < 1e-12 {
                    return Err(Error::validation("axis vector must have nonzero norm"));
                }
                Ok([v[0] / norm, v[1] / norm, v[2] / norm])
            }
        }
    }
}

/// Half the Pauli matrix along `axis`.
fn half_pauli(axis: [f64; 3]) -> Mat2 {
    let [x, y, z] = axis;
    Mat2::from_rows(
        C64::new(0.5 * z, 0.0),
        C64::new(0.5 * x, -0.5 * y),
        C64::new(0.5 * x, 0.5 * y),
        C64::new(-0.5 * z, 0.0),
    )
}

/// Collective spin `A = ½ Σ_{l=1}^N σ_μ^{(l)}` on a qubit register, with the
/// factored per-site description retained alongside the dense matrix.
pub fn collective_spin_observable(n: u32, axis: Axis) -> Result<Observable> {
    let space = HilbertSpec::qubits(n)?;
    let unit = axis.unit_vector()?;
    let term = half_pauli(unit);
    let d = space.dim();
    let mut mat: CMat = Array2::zeros((d, d));
    let mut factors = vec![Mat2::identity(); n as usize];
    for l in 0..n as usize {
        factors[l] = term;
        mat = mat + linalg::materialize_factors(&factors);
        factors[l] = Mat2::identity();
    }
    let mut obs = Observable::new(space, mat)?;
    obs.site_terms = Some(vec![term; n as usize]);
    Ok(obs)
}

/// Population difference `A = n̂₁ − n̂₂ = 2n̂₁ − N`, diagonal in the Fock
/// ordering of [`noon_state`].
pub fn number_difference_observable(n: u32) -> Result<Observable> {
    let space = HilbertSpec::collective(n)?;
    let d = space.dim();
    let mut mat: CMat = Array2::zeros((d, d));
    for i in 0..d {
        // index i has n1 = N − i bosons in the left well
        mat[[i, i]] = C64::new(n as f64 - 2.0 * i as f64, 0.0);
    }
    Observable::new(space, mat)
}

/// Two-well Bose-Hubbard Hamiltonian in the fixed-`N` Fock sector:
/// tunneling `(J/2)(a_L† a_R + h.c.)`, on-site interaction
/// `(U/2) Σ_ℓ n_ℓ(n_ℓ−1)`, and tilt `Δ(n_L − n_R)`.
pub fn bose_hubbard_hamiltonian(
    n: u32,
    tunneling: f64,
    interaction: f64,
    tilt: f64,
) -> Result<Observable> {
    for (name, v) in [("J", tunneling), ("U_int", interaction), ("Delta", tilt)] {
        if !v.is_finite() {
            return Err(Error::validation(format!("{name} must be finite, got {v}")));
        }
    }
    let space = HilbertSpec::collective(n)?;
    let d = space.dim();
    let mut mat: CMat = Array2::zeros((d, d));
    for i in 0..d {
        let n1 = (n as usize - i) as f64;
        let n2 = i as f64;
        let diag = 0.5 * interaction * (n1 * (n1 - 1.0) + n2 * (n2 - 1.0)) + tilt * (n1 - n2);
        mat[[i, i]] = C64::new(diag, 0.0);
        if i + 1 < d {
            // a_L† a_R |n1−1, n2+1⟩ = √(n1 (n2+1)) |n1, n2⟩, so the
            // element between index i and i+1 is (J/2)·√(n1 (n2+1)).
            let hop = 0.5 * tunneling * (n1 * (n2 + 1.0)).sqrt();
            mat[[i, i + 1]] = C64::new(hop, 0.0);
            mat[[i + 1, i]] = C64::new(hop, 0.0);
        }
    }
    Observable::new(space, mat)
}

/// Product of quench evolutions `U = e^{−iH_η T} ⋯ e^{−iH_1 T}`, one
/// Bose-Hubbard Hamiltonian per supplied tilt offset (`offsets[0]` acts
/// first). Exponentials go through [`linalg::hermitian_eig`]. No 2-design
/// quality is claimed for any particular depth; callers choose depth,
/// time step, and offset magnitudes.
pub fn quench_unitary(
    n: u32,
    time_step: f64,
    offsets: &[f64],
    tunneling: f64,
    interaction: f64,
) -> Result<CMat> {
    if offsets.is_empty() {
        return Err(Error::validation("quench_unitary needs at least one offset"));
    }
    if !time_step.is_finite() {
        return Err(Error::validation("time step must be finite"));
    }
    let d = n as usize + 1;
    let mut u = linalg::identity(d);
    for &delta in offsets {
        let h = bose_hubbard_hamiltonian(n, tunneling, interaction, delta)?;
        let eig = linalg::hermitian_eig(h.mat())?;
        // exp(−i H T) = V diag(e^{−i λ T}) V†
        let mut phases = eig.vectors.clone();
        for (j, mut col) in phases.columns_mut().into_iter().enumerate() {
            let phase = C64::from_polar(1.0, -eig.values[j] * time_step);
            col.mapv_inplace(|z| z * phase);
        }
        let step = phases.dot(&linalg::dagger(&eig.vectors));
        u = step.dot(&u);
    }
    Ok(u)
}

/// Uniform tilt offsets for quench sequences, one per layer.
pub fn sample_quench_offsets(
    depth: u32,
    range: (f64, f64),
    stream: &SeededStream,
) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if depth == 0 {
        return Err(Error::validation("quench depth must be >= 1"));
    }
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::validation(format!("bad offset range [{lo}, {hi}]")));
    }
    let mut rng = stream.rng();
    Ok((0..depth)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect())
}

/// Random full- or low-rank density matrix: spectrum uniform on the
/// `rank`-simplex (sorted-uniform spacings), eigenbasis from the CUE.
pub fn random_density_matrix(
    space: HilbertSpec,
    rank: usize,
    stream: &SeededStream,
) -> Result<DensityMatrix> {
    let d = space.dim();
    if rank == 0 || rank > d {
        return Err(Error::validation(format!(
            "rank must lie in 1..={d}, got {rank}"
        )));
    }
    let mut rng = stream.fork(0).rng();
    let spectrum = if rank == 1 {
        vec![1.0]
    } else {
        let mut cuts: Vec<f64> = (0..rank - 1).map(|_| rng.random::<f64>()).collect();
        cuts.sort_by(f64::total_cmp);
        let mut spectrum = Vec::with_capacity(rank);
        let mut prev = 0.0;
        for c in cuts {
            spectrum.push(c - prev);
            prev = c;
        }
        spectrum.push(1.0 - prev);
        spectrum
    };
    density_from_spectrum(space, &spectrum, &stream.fork(1))
}

/// Density matrix with the given spectrum (padded with zeros) in a Haar
/// random eigenbasis.
pub(crate) fn density_from_spectrum(
    space: HilbertSpec,
    spectrum: &[f64],
    stream: &SeededStream,
) -> Result<DensityMatrix> {
    let d = space.dim();
    if spectrum.len() > d || spectrum.iter().any(|&x| x < 0.0) {
        return Err(Error::validation("bad spectrum"));
    }
    let total: f64 = spectrum.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::validation(format!("spectrum sums to {total}, not 1")));
    }
    let basis = linalg::cue_sample(d, stream)?;
    let mut scaled = basis.clone();
    for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
        let w = spectrum.get(j).copied().unwrap_or(0.0);
        col.mapv_inplace(|z| z * w);
    }
    let mat = scaled.dot(&linalg::dagger(&basis));
    DensityMatrix::from_parts(space, mat)
}

/// Random Hermitian observable with standard-Gaussian entries (test and
/// fuzz fixture).
pub fn random_observable(space: HilbertSpec, stream: &SeededStream) -> Observable {
    use rand_distr::StandardNormal;
    let d = space.dim();
    let mut rng = stream.rng();
    let raw: CMat = Array2::from_shape_fn((d, d), |_| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let mat = (&raw + &linalg::dagger(&raw)).mapv(|z| z * 0.5);
    Observable {
        space,
        mat,
        site_terms: None,
    }
}

/// Maximally mixed state `𝟙/d`.
pub fn maximally_mixed(space: HilbertSpec) -> DensityMatrix {
    let d = space.dim();
    let mat = linalg::identity(d).mapv(|z| z / d as f64);
    DensityMatrix { space, mat }
}
