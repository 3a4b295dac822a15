//! Randomized-measurement acquisition and classical shadows.
//!
//! One round applies a random unitary (a tensor product of single-qubit CUE
//! unitaries, or one global unitary for collective-spin systems), samples a
//! computational-basis outcome from the Born distribution, and stores a
//! [`MeasurementRecord`] from which the classical shadow
//!
//! ```text
//! ρ̂ = ⊗_l [3 u_l† |s_l⟩⟨s_l| u_l − 𝟙₂]        (local qubit scheme)
//! ρ̂ = (d+1) U† |s⟩⟨s| U − 𝟙_d                 (global scheme)
//! ```
//!
//! is regenerated on demand. Records hold only the RNG substream of their
//! unitary, so a record file plus this library reproduces every shadow
//! bit-for-bit.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat2};
use crate::states::{sample_quench_offsets, quench_unitary, DensityMatrix, HilbertSpec, SpaceKind};
use crate::stream::SeededStream;

/// Born probabilities more negative than this abort the round; anything in
/// `[-PROB_CLIP, 0)` is treated as rounding and clipped to zero.
pub const PROB_CLIP: f64 = 1e-12;
/// Max deviation of the clipped probability mass from 1.
pub const PROB_INTEGRITY_TOL: f64 = 1e-8;

/// How global unitaries are generated.
#[derive(Clone, Debug, PartialEq)]
pub enum UnitarySource {
    /// Direct CUE sampling (the default used in the numerical studies).
    Cue,
    /// Product of Bose-Hubbard quench evolutions with random tilt offsets.
    Quench(QuenchParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuenchParams {
    pub depth: u32,
    pub time_step: f64,
    pub tunneling: f64,
    pub interaction: f64,
    /// Tilt offsets are drawn uniformly from this interval per layer.
    pub offset_range: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SchemeKind {
    LocalQubit,
    GlobalCollective(UnitarySource),
}

/// A measurement scheme bound to its Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementScheme {
    kind: SchemeKind,
    space: HilbertSpec,
}

impl MeasurementScheme {
    /// Local random single-qubit unitaries; qubit registers only.
    pub fn local_qubit(space: HilbertSpec) -> Result<Self> {
        if space.kind() != SpaceKind::QubitRegister {
            return Err(Error::validation(
                "local-qubit scheme requires a qubit register space",
            ));
        }
        Ok(MeasurementScheme {
            kind: SchemeKind::LocalQubit,
            space,
        })
    }

    /// One global random unitary per round.
    pub fn global_collective(space: HilbertSpec, source: UnitarySource) -> Result<Self> {
        if matches!(source, UnitarySource::Quench(_)) && space.kind() != SpaceKind::CollectiveSpin {
            return Err(Error::validation(
                "quench-generated unitaries require a collective-spin space",
            ));
        }
        if let UnitarySource::Quench(p) = &source {
            if p.depth == 0 {
                return Err(Error::validation("quench depth must be >= 1"));
            }
        }
        Ok(MeasurementScheme {
            kind: SchemeKind::GlobalCollective(source),
            space,
        })
    }

    pub fn kind(&self) -> &SchemeKind {
        &self.kind
    }

    pub fn space(&self) -> HilbertSpec {
        self.space
    }
}

impl fmt::Display for MeasurementScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let space_tag = match self.space.kind() {
            SpaceKind::QubitRegister => "q",
            SpaceKind::CollectiveSpin => "c",
        };
        let n = self.space.n_particles();
        match &self.kind {
            SchemeKind::LocalQubit => write!(f, "local_qubit:{space_tag}:{n}"),
            SchemeKind::GlobalCollective(UnitarySource::Cue) => {
                write!(f, "global_cue:{space_tag}:{n}")
            }
            SchemeKind::GlobalCollective(UnitarySource::Quench(p)) => write!(
                f,
                "global_quench:{space_tag}:{n}:{}:{}:{}:{}:{}:{}",
                p.depth, p.time_step, p.tunneling, p.interaction, p.offset_range.0, p.offset_range.1
            ),
        }
    }
}

impl FromStr for MeasurementScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("bad scheme string {s:?}"));
        if parts.len() < 3 {
            return Err(bad());
        }
        let n: u32 = parts[2].parse().map_err(|_| bad())?;
        let space = match parts[1] {
            "q" => HilbertSpec::qubits(n)?,
            "c" => HilbertSpec::collective(n)?,
            _ => return Err(bad()),
        };
        match parts[0] {
            "local_qubit" if parts.len() == 3 => MeasurementScheme::local_qubit(space),
            "global_cue" if parts.len() == 3 => {
                MeasurementScheme::global_collective(space, UnitarySource::Cue)
            }
            "global_quench" if parts.len() == 9 => {
                let depth: u32 = parts[3].parse().map_err(|_| bad())?;
                let nums: Vec<f64> = parts[4..9]
                    .iter()
                    .map(|p| p.parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                MeasurementScheme::global_collective(
                    space,
                    UnitarySource::Quench(QuenchParams {
                        depth,
                        time_step: nums[0],
                        tunneling: nums[1],
                        interaction: nums[2],
                        offset_range: (nums[3], nums[4]),
                    }),
                )
            }
            _ => Err(bad()),
        }
    }
}

/// One stored measurement round: enough to regenerate the applied unitary
/// and hence the shadow.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub round: u64,
    /// Substream the round's unitary (or unitaries) is drawn from.
    pub unitary_stream: SeededStream,
    /// Computational-basis outcome as an index; qubit registers read it as
    /// the bitstring `s_1 … s_N` with site 0 the most significant bit.
    pub outcome: u64,
}

/// Classical shadow `ρ̂` for one record: unit trace, Hermitian by
/// construction. Local-qubit shadows keep their per-site 2×2 factors and
/// materialize dense matrices lazily.
#[derive(Clone, Debug)]
pub struct ShadowSnapshot {
    pub record: MeasurementRecord,
    repr: ShadowRepr,
}

#[derive(Clone, Debug)]
enum ShadowRepr {
    Factored(Vec<Mat2>),
    Dense(CMat),
}

impl ShadowSnapshot {
    /// Hilbert-space dimension the shadow acts on.
    pub fn dim(&self) -> usize {
        match &self.repr {
            ShadowRepr::Factored(f) => 1usize << f.len(),
            ShadowRepr::Dense(m) => m.nrows(),
        }
    }

    /// Synthetic snapshot around an externally supplied dense matrix
    /// (e.g. shadows reconstructed outside this library, or exact-state
    /// stand-ins in tests). The matrix must be Hermitian with unit trace
    /// like every protocol-produced shadow.
    pub fn synthetic_dense(mat: CMat) -> ShadowSnapshot {
        debug_assert!(linalg::hermiticity_defect(&mat) < 1e-9);
        debug_assert!((linalg::trace(&mat).re - 1.0).abs() < 1e-9);
        ShadowSnapshot {
            record: MeasurementRecord {
                round: 0,
                unitary_stream: SeededStream::new(0),
                outcome: 0,
            },
            repr: ShadowRepr::Dense(mat),
        }
    }

    /// Per-site factors when the shadow came from the local-qubit scheme.
    pub fn factors(&self) -> Option<&[Mat2]> {
        match &self.repr {
            ShadowRepr::Factored(f) => Some(f),
            ShadowRepr::Dense(_) => None,
        }
    }

    /// Dense matrix of the shadow (tensor product of the factors for the
    /// local scheme).
    pub fn dense(&self) -> CMat {
        match &self.repr {
            ShadowRepr::Factored(f) => linalg::materialize_factors(f),
            ShadowRepr::Dense(m) => m.clone(),
        }
    }
}

/// Single-site shadow factor `3 u† |s⟩⟨s| u − 𝟙₂`.
pub fn local_shadow_factor(u: &Mat2, outcome_bit: u8) -> Mat2 {
    let s = outcome_bit as usize;
    // row s of u is ⟨s|u; (u†|s⟩⟨s|u)_{ij} = conj(u[s,i]) u[s,j]
    let row = [u.0[2 * s], u.0[2 * s + 1]];
    let mut out = [C64::new(0.0, 0.0); 4];
    for i in 0..2 {
        for j in 0..2 {
            out[2 * i + j] = row[i].conj() * row[j] * 3.0;
        }
    }
    out[0] -= 1.0;
    out[3] -= 1.0;
    Mat2(out)
}

/// Global shadow `(d+1) U† |s⟩⟨s| U − 𝟙_d`.
pub fn global_shadow_matrix(u: &CMat, outcome: usize) -> CMat {
    let d = u.nrows();
    let scale = (d + 1) as f64;
    let mut out = CMat::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            out[[i, j]] = u[[outcome, i]].conj() * u[[outcome, j]] * scale;
        }
    }
    for i in 0..d {
        out[[i, i]] -= 1.0;
    }
    out
}

fn local_unitaries(scheme: &MeasurementScheme, stream: &SeededStream) -> Result<Vec<Mat2>> {
    let n = scheme.space.n_particles() as usize;
    let mut out = Vec::with_capacity(n);
    for l in 0..n {
        let u = linalg::cue_sample(2, &stream.fork(l as u64))?;
        out.push(Mat2([u[[0, 0]], u[[0, 1]], u[[1, 0]], u[[1, 1]]]));
    }
    Ok(out)
}

fn global_unitary(scheme: &MeasurementScheme, stream: &SeededStream) -> Result<CMat> {
    let d = scheme.space.dim();
    match &scheme.kind {
        SchemeKind::GlobalCollective(UnitarySource::Cue) => linalg::cue_sample(d, stream),
        SchemeKind::GlobalCollective(UnitarySource::Quench(p)) => {
            let offsets = sample_quench_offsets(p.depth, p.offset_range, stream)?;
            quench_unitary(
                scheme.space.n_particles(),
                p.time_step,
                &offsets,
                p.tunneling,
                p.interaction,
            )
        }
        SchemeKind::LocalQubit => Err(Error::validation("local scheme has no global unitary")),
    }
}

/// Clip rounding-level negatives, abort on anything worse, renormalize.
fn sanitize_probabilities(probs: &mut [f64]) -> Result<()> {
    let mut total = 0.0f64;
    for p in probs.iter_mut() {
        if *p < -PROB_CLIP {
            return Err(Error::numerical(format!(
                "Born probability {p:.3e} below clip threshold -{PROB_CLIP:.1e}"
            )));
        }
        if *p < 0.0 {
            *p = 0.0;
        }
        total += *p;
    }
    if (total - 1.0).abs() > PROB_INTEGRITY_TOL {
        return Err(Error::numerical(format!(
            "Born probability mass {total} deviates from 1 beyond {PROB_INTEGRITY_TOL:.1e}"
        )));
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok(())
}

fn born_probabilities_local(rho: &DensityMatrix, unitaries: &[Mat2]) -> Result<Vec<f64>> {
    let mut rotated = rho.mat().clone();
    linalg::apply_factored_left(unitaries, &mut rotated);
    let daggers: Vec<Mat2> = unitaries.iter().map(Mat2::dagger).collect();
    linalg::apply_factored_right(&mut rotated, &daggers);
    let mut probs: Vec<f64> = rotated.diag().iter().map(|z| z.re).collect();
    sanitize_probabilities(&mut probs)?;
    Ok(probs)
}

fn born_probabilities_global(rho: &DensityMatrix, u: &CMat) -> Result<Vec<f64>> {
    let rotated = u.dot(rho.mat()).dot(&linalg::dagger(u));
    let mut probs: Vec<f64> = rotated.diag().iter().map(|z| z.re).collect();
    sanitize_probabilities(&mut probs)?;
    Ok(probs)
}

/// Inverse-CDF draw from `probs` (assumed sanitized).
fn sample_outcome(probs: &[f64], stream: &SeededStream) -> u64 {
    let u: f64 = stream.rng().random();
    let mut acc = 0.0f64;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u64;
        }
    }
    probs.len() as u64 - 1
}

/// Simulate round `round`: draw the unitary from
/// `stream.fork(round).fork(0)`, sample the outcome with
/// `stream.fork(round).fork(1)`.
pub fn simulate_round(
    rho: &DensityMatrix,
    scheme: &MeasurementScheme,
    stream: &SeededStream,
    round: u64,
) -> Result<MeasurementRecord> {
    if rho.space() != scheme.space {
        return Err(Error::validation(format!(
            "state space {:?} does not match scheme space {:?}",
            rho.space(),
            scheme.space
        )));
    }
    let round_stream = stream.fork(round);
    let unitary_stream = round_stream.fork(0);
    let probs = match &scheme.kind {
        SchemeKind::LocalQubit => {
            let us = local_unitaries(scheme, &unitary_stream)?;
            born_probabilities_local(rho, &us)?
        }
        SchemeKind::GlobalCollective(_) => {
            let u = global_unitary(scheme, &unitary_stream)?;
            born_probabilities_global(rho, &u)?
        }
    };
    let outcome = sample_outcome(&probs, &round_stream.fork(1));
    Ok(MeasurementRecord {
        round,
        unitary_stream,
        outcome,
    })
}

/// Rebuild the classical shadow for a stored record.
pub fn build_shadow(record: &MeasurementRecord, scheme: &MeasurementScheme) -> Result<ShadowSnapshot> {
    let d = scheme.space.dim();
    if record.outcome as usize >= d {
        return Err(Error::validation(format!(
            "outcome {} out of range for dimension {d}",
            record.outcome
        )));
    }
    let repr = match &scheme.kind {
        SchemeKind::LocalQubit => {
            let us = local_unitaries(scheme, &record.unitary_stream)?;
            let n = us.len();
            let factors: Vec<Mat2> = us
                .iter()
                .enumerate()
                .map(|(l, u)| {
                    let bit = ((record.outcome >> (n - 1 - l)) & 1) as u8;
                    local_shadow_factor(u, bit)
                })
                .collect();
            ShadowRepr::Factored(factors)
        }
        SchemeKind::GlobalCollective(_) => {
            let u = global_unitary(scheme, &record.unitary_stream)?;
            ShadowRepr::Dense(global_shadow_matrix(&u, record.outcome as usize))
        }
    };
    Ok(ShadowSnapshot {
        record: record.clone(),
        repr,
    })
}

/// Simulate `m` rounds and build their shadows. Rounds use disjoint
/// substreams of `stream` and run in parallel; output order is by round.
pub fn acquire(
    rho: &DensityMatrix,
    scheme: &MeasurementScheme,
    m: usize,
    stream: &SeededStream,
) -> Result<Vec<ShadowSnapshot>> {
    if m == 0 {
        return Err(Error::validation("acquire needs at least one round"));
    }
    (0..m as u64)
        .into_par_iter()
        .map(|r| {
            let record = simulate_round(rho, scheme, stream, r)?;
            build_shadow(&record, scheme)
        })
        .collect()
}

fn outcome_string(outcome: u64, scheme: &MeasurementScheme) -> String {
    match scheme.space.kind() {
        SpaceKind::QubitRegister => {
            let n = scheme.space.n_particles() as usize;
            format!("{outcome:0width$b}", width = n)
        }
        SpaceKind::CollectiveSpin => outcome.to_string(),
    }
}

fn parse_outcome(text: &str, scheme: &MeasurementScheme) -> Result<u64> {
    let value = match scheme.space.kind() {
        SpaceKind::QubitRegister => u64::from_str_radix(text, 2)
            .map_err(|_| Error::Parse(format!("bad bitstring outcome {text:?}")))?,
        SpaceKind::CollectiveSpin => text
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("bad Fock outcome {text:?}")))?,
    };
    if value as usize >= scheme.space.dim() {
        return Err(Error::Parse(format!("outcome {text:?} out of range")));
    }
    Ok(value)
}

pub const RECORD_CSV_HEADER: &str = "round,scheme,seed_path,outcome";

/// Export records as line-oriented CSV with columns
/// `round,scheme,seed_path,outcome`.
pub fn write_records<W: Write>(
    mut w: W,
    scheme: &MeasurementScheme,
    records: &[MeasurementRecord],
) -> Result<()> {
    writeln!(w, "{RECORD_CSV_HEADER}")?;
    for rec in records {
        writeln!(
            w,
            "{},{},{},{}",
            rec.round,
            scheme,
            rec.unitary_stream,
            outcome_string(rec.outcome, scheme)
        )?;
    }
    Ok(())
}

/// Import a record CSV produced by [`write_records`] (or an external
/// source following the same format). All rows must share one scheme.
pub fn read_records<R: BufRead>(reader: R) -> Result<(MeasurementScheme, Vec<MeasurementRecord>)> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty record file".into()))??;
    if header.trim() != RECORD_CSV_HEADER {
        return Err(Error::Parse(format!(
            "unexpected header {header:?}, want {RECORD_CSV_HEADER:?}"
        )));
    }
    let mut scheme: Option<MeasurementScheme> = None;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("bad record row {line:?}")));
        }
        let row_scheme: MeasurementScheme = fields[1].parse()?;
        let scheme_ref = scheme.get_or_insert_with(|| row_scheme.clone());
        if *scheme_ref != row_scheme {
            return Err(Error::Parse("mixed schemes in one record file".into()));
        }
        let round: u64 = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad round {:?}", fields[0])))?;
        let unitary_stream: SeededStream = fields[2].parse()?;
        let outcome = parse_outcome(fields[3], scheme_ref)?;
        records.push(MeasurementRecord {
            round,
            unitary_stream,
            outcome,
        });
    }
    let scheme = scheme.ok_or_else(|| Error::Parse("record file has no rows".into()))?;
    Ok((scheme, records))
}
