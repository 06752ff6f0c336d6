//! Truncated lattice sums for the generalized Weierstrass functions.
//!
//! Summation runs over integer coefficient boxes `|c|_inf <= R` organized in
//! max-norm shells. Within a shell the enumeration order is fixed; shells are
//! split into fixed-size row chunks evaluated in parallel, and chunk partial
//! sums are reduced compensated in chunk order, so results are bit-identical
//! regardless of thread count. A single traversal accumulates every requested
//! argument (and every derivative lane) simultaneously and yields the whole
//! radius ladder via per-shell prefix sums.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::basis::{basis, Basis};
use crate::algebra::CDElement;
use crate::kernels::{qn_rep, CompiledRep, MultiIndex};
use crate::lattice::Lattice;
use crate::number_field::NumberFieldError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("argument {arg} is within eps of a lattice singularity (shell {shell})")]
    NearSingularity { shell: u32, arg: usize },
    #[error("the series for |n| = {0} needs convergence terms and is rejected")]
    NonConvergentOrder(u32),
    #[error("series evaluation supports levels 1..=4, got {0}")]
    UnsupportedLevel(u32),
    #[error("radius must be >= 1")]
    BadRadius,
    #[error("eps must be positive")]
    BadEps,
    #[error("no arguments supplied")]
    NoArguments,
    #[error("shell enumeration overflow at radius {0}")]
    RadiusOverflow(u32),
    #[error(transparent)]
    Field(#[from] NumberFieldError),
}

/// Truncation and precision policy for one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesParams {
    /// Max-norm bound on summed integer coefficient vectors.
    pub radius: u32,
    /// Minimum allowed distance to a singularity; defaults to
    /// `1e-6 * shortest generator`.
    pub eps: Option<f64>,
    /// Group `omega` and `-omega` (on by default; improves tails).
    pub pairing: bool,
    /// Bits used when embedding exact generator coordinates.
    pub precision: u32,
    /// Print shell progress to stderr during long runs.
    pub progress: bool,
}

impl Default for SeriesParams {
    fn default() -> Self {
        SeriesParams {
            radius: 4,
            eps: None,
            pairing: true,
            precision: 53,
            progress: false,
        }
    }
}

impl SeriesParams {
    pub fn with_radius(radius: u32) -> Self {
        SeriesParams {
            radius,
            ..Default::default()
        }
    }
}

/// Float-embedded lattice data reused across evaluations. Immutable and
/// read-only during evaluation.
#[derive(Clone, Debug)]
pub struct EvalContext {
    level: u32,
    dim: usize,
    /// Canonical coordinates of each generator, row h.
    gens: Vec<Vec<f64>>,
    shortest: f64,
    basis: Arc<Basis>,
    precision: u32,
}

impl EvalContext {
    pub fn new(lattice: &Lattice, precision: u32) -> Result<Self, SeriesError> {
        let level = lattice.level();
        if !(1..=4).contains(&level) {
            return Err(SeriesError::UnsupportedLevel(level));
        }
        let b = basis(level);
        let mut gens = Vec::with_capacity(lattice.dim());
        for h in 0..lattice.dim() {
            let row: Result<Vec<f64>, NumberFieldError> = lattice
                .w()
                .row(h)
                .iter()
                .map(|c| c.embed(precision))
                .collect();
            gens.push(row?);
        }
        let shortest = gens
            .iter()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        Ok(EvalContext {
            level,
            dim: 1 << level,
            gens,
            shortest,
            basis: b,
            precision,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn shortest_generator(&self) -> f64 {
        self.shortest
    }

    /// Embedded generator `omega_h`.
    pub fn generator(&self, h: usize) -> CDElement<f64> {
        self.basis.from_coords(&self.gens[h])
    }

    /// Embedded canonical coordinates of each generator.
    pub fn generator_coords(&self) -> &[Vec<f64>] {
        &self.gens
    }

    fn eps(&self, params: &SeriesParams) -> Result<f64, SeriesError> {
        let eps = params.eps.unwrap_or(1e-6 * self.shortest);
        if eps > 0.0 && eps.is_finite() {
            Ok(eps)
        } else {
            Err(SeriesError::BadEps)
        }
    }
}

/// One evaluated series value with its heuristic truncation-tail estimate.
#[derive(Clone, Debug)]
pub struct SeriesValue {
    pub value: CDElement<f64>,
    pub tail_estimate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Zeta,
    WpTau,
    WpN,
}

fn lanes_per_arg(mode: Mode, dim: usize) -> usize {
    match mode {
        Mode::Zeta => 1,
        Mode::WpTau => dim - 1,
        Mode::WpN => 1,
    }
}

fn omega_lanes(mode: Mode, dim: usize) -> usize {
    match mode {
        // lane 0: q0(omega) (unpaired runs only); lanes j = 1..dim-1: q_tau(j)(omega)
        Mode::Zeta => dim,
        Mode::WpTau => dim - 1,
        Mode::WpN => 0,
    }
}

struct Job<'a> {
    mode: Mode,
    rep: Option<&'a CompiledRep>,
    pairing: bool,
    eps2: f64,
}

const CHUNK_ROWS: u64 = 8192;
const BATCH_CHUNKS: usize = 128;

/// Raw per-shell lane sums: `sums[s][lane * dim + c]` for shells `0..=r_max`
/// (shell 0 is identically zero; the origin term is added at assembly).
fn run_job(
    dim: usize,
    gens: &[Vec<f64>],
    args: &[Vec<f64>],
    job: &Job,
    r_max: u32,
    progress: bool,
) -> Result<Vec<Vec<f64>>, SeriesError> {
    match dim {
        2 => run_job_d::<2>(gens, args, job, r_max, progress),
        4 => run_job_d::<4>(gens, args, job, r_max, progress),
        8 => run_job_d::<8>(gens, args, job, r_max, progress),
        16 => run_job_d::<16>(gens, args, job, r_max, progress),
        _ => Err(SeriesError::UnsupportedLevel(dim.trailing_zeros())),
    }
}

fn to_arrays<const D: usize>(v: &[Vec<f64>]) -> Vec<[f64; D]> {
    v.iter()
        .map(|row| {
            let mut a = [0.0; D];
            a.copy_from_slice(row);
            a
        })
        .collect()
}

fn run_job_d<const D: usize>(
    gens: &[Vec<f64>],
    args: &[Vec<f64>],
    job: &Job,
    r_max: u32,
    progress: bool,
) -> Result<Vec<Vec<f64>>, SeriesError> {
    let gens: Vec<[f64; D]> = to_arrays::<D>(gens);
    let args: Vec<[f64; D]> = to_arrays::<D>(args);
    let n_lanes = args.len() * lanes_per_arg(job.mode, D) + omega_lanes(job.mode, D);
    let lane_len = n_lanes * D;
    let mut shells: Vec<Vec<f64>> = vec![vec![0.0; lane_len]];

    for s in 1..=r_max {
        let width = 2 * u64::from(s) + 1;
        let digits = D - 1;
        let rows = (0..digits).try_fold(1u64, |acc, _| acc.checked_mul(width));
        let rows = rows.ok_or(SeriesError::RadiusOverflow(s))?;
        let n_chunks = rows.div_ceil(CHUNK_ROWS);

        let mut sum = vec![0.0f64; lane_len];
        let mut comp = vec![0.0f64; lane_len];
        let mut chunk_start = 0u64;
        while chunk_start < n_chunks {
            let batch_end = (chunk_start + BATCH_CHUNKS as u64).min(n_chunks);
            let results: Vec<Result<Vec<f64>, usize>> = (chunk_start..batch_end)
                .into_par_iter()
                .map(|ci| {
                    let lo = ci * CHUNK_ROWS;
                    let hi = ((ci + 1) * CHUNK_ROWS).min(rows);
                    chunk_sums::<D>(&gens, &args, job, s as i64, lo..hi, width, lane_len)
                })
                .collect();
            for r in results {
                match r {
                    Ok(part) => {
                        // Neumaier merge in fixed chunk order
                        for (i, v) in part.into_iter().enumerate() {
                            let t = sum[i] + v;
                            if sum[i].abs() >= v.abs() {
                                comp[i] += (sum[i] - t) + v;
                            } else {
                                comp[i] += (v - t) + sum[i];
                            }
                            sum[i] = t;
                        }
                    }
                    Err(arg) => return Err(SeriesError::NearSingularity { shell: s, arg }),
                }
            }
            chunk_start = batch_end;
        }
        for i in 0..lane_len {
            sum[i] += comp[i];
        }
        shells.push(sum);
        if progress {
            eprintln!("shell {s}/{r_max} done ({rows} rows)");
        }
    }
    Ok(shells)
}

/// Reusable per-chunk scratch: shifted arguments and their reciprocal norms,
/// in (arg, sign) order, so the divisions happen in one vectorizable pass.
struct Scratch<const D: usize> {
    sv: Vec<[f64; D]>,
    inv: Vec<f64>,
}

impl<const D: usize> Scratch<D> {
    fn new(n_args: usize, pairing: bool) -> Self {
        let slots = n_args * if pairing { 2 } else { 1 };
        Scratch {
            sv: vec![[0.0; D]; slots],
            inv: vec![0.0; slots],
        }
    }
}

/// Process one contiguous row range of a shell. Returns plain per-lane sums;
/// on a singularity hit, the offending argument index.
#[allow(clippy::too_many_arguments)]
fn chunk_sums<const D: usize>(
    gens: &[[f64; D]],
    args: &[[f64; D]],
    job: &Job,
    s: i64,
    rows: Range<u64>,
    width: u64,
    lane_len: usize,
) -> Result<Vec<f64>, usize> {
    let mut acc = vec![0.0f64; lane_len];
    let digits = D - 1;
    let mut c = [0i64; D];
    let pair_weight = if job.pairing { 2.0 } else { 1.0 };
    let mut scratch = Scratch::<D>::new(args.len(), job.pairing);

    for row in rows {
        let mut tmp = row;
        let mut rowmax = 0i64;
        let mut first_nonzero = 0i64;
        for d in (0..digits).rev() {
            let v = (tmp % width) as i64 - s;
            tmp /= width;
            c[d] = v;
            if v != 0 {
                first_nonzero = v;
            }
            rowmax = rowmax.max(v.abs());
        }
        let row_zero = rowmax == 0;
        if job.pairing && !row_zero && first_nonzero < 0 {
            continue; // mirror row handles the pair
        }
        let mut base = [0.0f64; D];
        for d in 0..digits {
            if c[d] != 0 {
                let f = c[d] as f64;
                let g = &gens[d];
                for (b, gv) in base.iter_mut().zip(g) {
                    *b += f * gv;
                }
            }
        }
        let g_last = &gens[digits];
        let full_inner = rowmax == s;
        let mut t = -s;
        while t <= s {
            if !full_inner && t.abs() != s {
                t = s; // interior rows only touch the +-s caps
                continue;
            }
            if job.pairing && row_zero && t < 0 {
                t += 1;
                continue;
            }
            let tf = t as f64;
            let mut omega = [0.0f64; D];
            for i in 0..D {
                omega[i] = base[i] + tf * g_last[i];
            }
            process_point::<D>(&omega, args, job, pair_weight, &mut scratch, &mut acc)?;
            t += 1;
        }
    }
    Ok(acc)
}

#[inline(always)]
fn norm_sq<const D: usize>(v: &[f64; D]) -> f64 {
    let mut n = 0.0;
    for x in v {
        n += x * x;
    }
    n
}

/// `conj(s) * N^(-D/2)` given `inv_half = N^(-D/2)`.
#[inline(always)]
fn q0_val<const D: usize>(sv: &[f64; D], inv_half: f64) -> [f64; D] {
    let mut out = [0.0; D];
    out[0] = sv[0] * inv_half;
    for cix in 1..D {
        out[cix] = -sv[cix] * inv_half;
    }
    out
}

/// `q_tau(j)(s) = -e_j N^(-D/2) - D * s_j * conj(s) * N^(-D/2-1)`.
#[inline(always)]
fn qtau_val<const D: usize>(sv: &[f64; D], j: usize, inv_half: f64, inv_half1: f64) -> [f64; D] {
    let t = -(D as f64) * sv[j] * inv_half1;
    let mut out = [0.0; D];
    out[0] = t * sv[0];
    for cix in 1..D {
        out[cix] = -t * sv[cix];
    }
    out[j] -= inv_half;
    out
}

#[inline(always)]
fn lane_arr<const D: usize>(acc: &mut [f64], lane: usize) -> &mut [f64; D] {
    (&mut acc[lane..lane + D]).try_into().unwrap()
}

#[inline(always)]
fn process_point<const D: usize>(
    omega: &[f64; D],
    args: &[[f64; D]],
    job: &Job,
    pair_weight: f64,
    scratch: &mut Scratch<D>,
    acc: &mut [f64],
) -> Result<(), usize> {
    let apl = lanes_per_arg(job.mode, D);
    let wl_base = args.len() * apl * D;
    // argument-independent lanes
    match job.mode {
        Mode::Zeta => {
            let n = norm_sq(omega);
            let inv = 1.0 / n;
            let inv_half = pow_half::<D>(inv);
            let inv_half1 = inv_half * inv;
            if !job.pairing {
                let v = q0_val::<D>(omega, inv_half);
                let out = lane_arr::<D>(acc, wl_base);
                for c2 in 0..D {
                    out[c2] += v[c2];
                }
            }
            for j in 1..D {
                let v = qtau_val::<D>(omega, j, inv_half, inv_half1);
                let out = lane_arr::<D>(acc, wl_base + j * D);
                for c2 in 0..D {
                    out[c2] += pair_weight * v[c2];
                }
            }
        }
        Mode::WpTau => {
            let n = norm_sq(omega);
            let inv = 1.0 / n;
            let inv_half = pow_half::<D>(inv);
            let inv_half1 = inv_half * inv;
            for j in 1..D {
                let v = qtau_val::<D>(omega, j, inv_half, inv_half1);
                let out = lane_arr::<D>(acc, wl_base + (j - 1) * D);
                for c2 in 0..D {
                    out[c2] += pair_weight * v[c2];
                }
            }
        }
        Mode::WpN => {}
    }
    // Shift arguments and take norms; then one vectorizable reciprocal pass.
    let signs = if job.pairing { 2 } else { 1 };
    let slots = args.len() * signs;
    {
        let sv = &mut scratch.sv;
        let nn = &mut scratch.inv;
        for (ai, z) in args.iter().enumerate() {
            let k = ai * signs;
            let p = &mut sv[k];
            for i in 0..D {
                p[i] = z[i] + omega[i];
            }
            nn[k] = norm_sq(p);
            if job.pairing {
                let m = &mut sv[k + 1];
                for i in 0..D {
                    m[i] = z[i] - omega[i];
                }
                nn[k + 1] = norm_sq(m);
            }
        }
        for (ai, pair) in nn[..slots].chunks(signs).enumerate() {
            if pair.iter().any(|&n| n < job.eps2) {
                return Err(ai);
            }
        }
        for v in nn[..slots].iter_mut() {
            *v = 1.0 / *v;
        }
    }
    // Per-argument lanes. Under pairing the kernel values of the two signs
    // are combined coordinate-wise with a single commutative add before
    // accumulation, so the grouped term is a symmetric function of the pair
    // and parity identities hold bitwise.
    for ai in 0..args.len() {
        let lane = ai * apl * D;
        let k = ai * signs;
        let svp = &scratch.sv[k];
        let invp = scratch.inv[k];
        match job.mode {
            Mode::Zeta => {
                let a = q0_val::<D>(svp, pow_half::<D>(invp));
                let out = lane_arr::<D>(acc, lane);
                if job.pairing {
                    let b = q0_val::<D>(&scratch.sv[k + 1], pow_half::<D>(scratch.inv[k + 1]));
                    for c2 in 0..D {
                        out[c2] += a[c2] + b[c2];
                    }
                } else {
                    for c2 in 0..D {
                        out[c2] += a[c2];
                    }
                }
            }
            Mode::WpTau => {
                let ihp = pow_half::<D>(invp);
                let ihp1 = ihp * invp;
                if job.pairing {
                    let invm = scratch.inv[k + 1];
                    let svm = &scratch.sv[k + 1];
                    let ihm = pow_half::<D>(invm);
                    let ihm1 = ihm * invm;
                    for j in 1..D {
                        let a = qtau_val::<D>(svp, j, ihp, ihp1);
                        let b = qtau_val::<D>(svm, j, ihm, ihm1);
                        let out = lane_arr::<D>(acc, lane + (j - 1) * D);
                        for c2 in 0..D {
                            out[c2] += a[c2] + b[c2];
                        }
                    }
                } else {
                    for j in 1..D {
                        let a = qtau_val::<D>(svp, j, ihp, ihp1);
                        let out = lane_arr::<D>(acc, lane + (j - 1) * D);
                        for c2 in 0..D {
                            out[c2] += a[c2];
                        }
                    }
                }
            }
            Mode::WpN => {
                let rep = job.rep.expect("rep present in WpN mode");
                let mut a = [0.0f64; D];
                rep.eval_into(svp, &mut a);
                let out = lane_arr::<D>(acc, lane);
                if job.pairing {
                    let mut b = [0.0f64; D];
                    rep.eval_into(&scratch.sv[k + 1], &mut b);
                    for c2 in 0..D {
                        out[c2] += a[c2] + b[c2];
                    }
                } else {
                    for c2 in 0..D {
                        out[c2] += a[c2];
                    }
                }
            }
        }
    }
    Ok(())
}

/// `x^(D/2)` for D a power of two: repeated squaring of `x`.
#[inline(always)]
fn pow_half<const D: usize>(x: f64) -> f64 {
    // D = 2: x, D = 4: x^2, D = 8: x^4, D = 16: x^8
    let mut v = x;
    let mut e = D / 2;
    let mut out = 1.0;
    while e > 1 {
        v *= v;
        e /= 2;
    }
    out *= v;
    out
}

/// Cumulative lane sums per requested radius, via compensated prefix over the
/// shells, plus the per-shell magnitudes needed for tail estimates.
struct Ladder {
    /// cumulative[r] for each requested radius, in request order
    cums: Vec<Vec<f64>>,
    /// raw shell sums
    shells: Vec<Vec<f64>>,
}

fn make_ladder(shells: Vec<Vec<f64>>, radii: &[u32]) -> Ladder {
    let lane_len = shells[0].len();
    let r_max = shells.len() - 1;
    let mut cums_all: Vec<Vec<f64>> = Vec::with_capacity(r_max + 1);
    let mut sum = vec![0.0f64; lane_len];
    let mut comp = vec![0.0f64; lane_len];
    cums_all.push(sum.clone());
    for shell in shells.iter().skip(1) {
        for i in 0..lane_len {
            let v = shell[i];
            let t = sum[i] + v;
            if sum[i].abs() >= v.abs() {
                comp[i] += (sum[i] - t) + v;
            } else {
                comp[i] += (v - t) + sum[i];
            }
            sum[i] = t;
        }
        cums_all.push(sum.iter().zip(&comp).map(|(a, b)| a + b).collect());
    }
    let cums = radii.iter().map(|&r| cums_all[r as usize].clone()).collect();
    Ladder { cums, shells }
}

impl Ladder {
    /// Geometric-model tail estimate for a lane block at radius `r`.
    fn tail(&self, r: u32, lo: usize, hi: usize) -> f64 {
        let mag = |v: &[f64]| v[lo..hi].iter().map(|x| x * x).sum::<f64>().sqrt();
        let r = r as usize;
        let last = mag(&self.shells[r]);
        if r < 2 {
            return last;
        }
        let prev = mag(&self.shells[r - 1]);
        if prev <= 0.0 {
            return last;
        }
        let rho = (last / prev).min(0.9);
        if last == 0.0 {
            0.0
        } else {
            last * rho / (1.0 - rho)
        }
    }
}

fn arg_coords(ctx: &EvalContext, args: &[CDElement<f64>]) -> Result<Vec<Vec<f64>>, SeriesError> {
    if args.is_empty() {
        return Err(SeriesError::NoArguments);
    }
    Ok(args.iter().map(|z| ctx.basis.coords_of(z)).collect())
}

fn checked_radii(radii: &[u32]) -> Result<(Vec<u32>, u32), SeriesError> {
    if radii.is_empty() || radii.iter().any(|&r| r == 0) {
        return Err(SeriesError::BadRadius);
    }
    let r_max = *radii.iter().max().unwrap();
    Ok((radii.to_vec(), r_max))
}

/// `V_tau(j)(z) * q` on canonical coordinates: `x_j * q - x_0 * (e_j q)`.
fn fueter_times(basis: &Basis, zc: &[f64], j: usize, q: &[f64], out: &mut [f64]) {
    let dim = zc.len();
    let xj = zc[j];
    let x0 = zc[0];
    let mut ejq = vec![0.0; dim];
    for (m, &qm) in q.iter().enumerate() {
        if qm != 0.0 {
            let (sign, idx) = basis.product(j, m);
            ejq[idx] += sign as f64 * qm;
        }
    }
    for c2 in 0..dim {
        out[c2] += xj * q[c2] - x0 * ejq[c2];
    }
}

/// The zeta function ladder over several arguments in a single traversal.
///
/// `zeta(z) = q0(z) + sum_(omega != 0) [q0(z+omega) - q0(omega)
///            - sum_j V_tau(j)(z) q_tau(j)(omega)]`,
/// truncated to `|c|_inf <= R`. (The correction term enters with a minus
/// sign; that is the sign that makes the series converge and gives
/// `d zeta / d x_i = wp_tau(i)` identically per truncation.)
pub fn zeta_ladder(
    ctx: &EvalContext,
    params: &SeriesParams,
    radii: &[u32],
    args: &[CDElement<f64>],
) -> Result<Vec<Vec<SeriesValue>>, SeriesError> {
    zeta_ladder_inner(ctx, params, radii, args, true)
}

/// Same as [`zeta_ladder`] without the leading `q0(z)` term, i.e. the
/// regular part of zeta near the origin.
pub fn zeta_regular_ladder(
    ctx: &EvalContext,
    params: &SeriesParams,
    radii: &[u32],
    args: &[CDElement<f64>],
) -> Result<Vec<Vec<SeriesValue>>, SeriesError> {
    zeta_ladder_inner(ctx, params, radii, args, false)
}

fn zeta_ladder_inner(
    ctx: &EvalContext,
    params: &SeriesParams,
    radii: &[u32],
    args: &[CDElement<f64>],
    with_lead: bool,
) -> Result<Vec<Vec<SeriesValue>>, SeriesError> {
    let (radii, r_max) = checked_radii(radii)?;
    let coords = arg_coords(ctx, args)?;
    let dim = ctx.dim;
    let eps = ctx.eps(params)?;
    let eps2 = eps * eps;
    for (ai, zc) in coords.iter().enumerate() {
        let n: f64 = zc.iter().map(|x| x * x).sum();
        if with_lead && n < eps2 {
            return Err(SeriesError::NearSingularity { shell: 0, arg: ai });
        }
    }
    let job = Job {
        mode: Mode::Zeta,
        rep: None,
        pairing: params.pairing,
        eps2,
    };
    let shells = run_job(dim, &ctx.gens, &coords, &job, r_max, params.progress)?;
    let ladder = make_ladder(shells, &radii);

    let wl_base = args.len() * dim;
    let mut out = Vec::with_capacity(radii.len());
    for (ri, &r) in radii.iter().enumerate() {
        let cum = &ladder.cums[ri];
        let mut per_arg = Vec::with_capacity(args.len());
        for (ai, zc) in coords.iter().enumerate() {
            let mut val = vec![0.0f64; dim];
            // accumulated q0(z + omega)
            val.copy_from_slice(&cum[ai * dim..(ai + 1) * dim]);
            if with_lead {
                let n: f64 = zc.iter().map(|x| x * x).sum();
                let inv = 1.0 / n;
                let mut lead = vec![0.0; dim];
                let inv_half = inv.powi(dim as i32 / 2);
                lead[0] = zc[0] * inv_half;
                for c2 in 1..dim {
                    lead[c2] = -zc[c2] * inv_half;
                }
                for c2 in 0..dim {
                    val[c2] += lead[c2];
                }
            }
            if !params.pairing {
                // subtract the accumulated q0(omega)
                for c2 in 0..dim {
                    val[c2] -= cum[wl_base + c2];
                }
            }
            // subtract the convergence corrections sum_j V_j(z) Qtau_j
            let mut corr = vec![0.0f64; dim];
            for j in 1..dim {
                let q = &cum[wl_base + j * dim..wl_base + (j + 1) * dim];
                fueter_times(&ctx.basis, zc, j, q, &mut corr);
            }
            for c2 in 0..dim {
                val[c2] -= corr[c2];
            }
            let tail = ladder.tail(r, ai * dim, (ai + 1) * dim)
                + ladder.tail(r, wl_base, wl_base + dim * dim);
            per_arg.push(SeriesValue {
                value: ctx.basis.from_coords(&val),
                tail_estimate: tail,
            });
        }
        out.push(per_arg);
    }
    Ok(out)
}

/// All `wp_tau(i)` ladders (`i = 1..2^k-1`) over several arguments in one
/// traversal: `result[radius][arg][i-1]`.
pub fn wp_tau_ladder(
    ctx: &EvalContext,
    params: &SeriesParams,
    radii: &[u32],
    args: &[CDElement<f64>],
) -> Result<Vec<Vec<Vec<SeriesValue>>>, SeriesError> {
    wp_tau_ladder_inner(ctx, params, radii, args, true)
}

/// The regular part: `wp_tau(i)(z) - q_tau(i)(z)`.
pub fn wp_tau_regular_ladder(
    ctx: &EvalContext,
    params: &SeriesParams,
    radii: &[u32],
    args: &[CDElement<f64>],
) -> Result<Vec<Vec<Vec<SeriesValue>>>, SeriesError> {
    wp_tau_ladder_inner(ctx, params, radii, args, false)
}

fn wp_tau_ladder_inner(
    ctx: &EvalContext,
    params: &SeriesParams,
    radii: &[u32],
    args: &[CDElement<f64>],
    with_lead: bool,
) -> Result<Vec<Vec<Vec<SeriesValue>>>, SeriesError> {
    let (radii, r_max) = checked_radii(radii)?;
    let coords = arg_coords(ctx, args)?;
    let dim = ctx.dim;
    let eps = ctx.eps(params)?;
    let eps2 = eps * eps;
    for (ai, zc) in coords.iter().enumerate() {
        let n: f64 = zc.iter().map(|x| x * x).sum();
        if with_lead && n < eps2 {
            return Err(SeriesError::NearSingularity { shell: 0, arg: ai });
        }
    }
    let job = Job {
        mode: Mode::WpTau,
        rep: None,
        pairing: params.pairing,
        eps2,
    };
    let shells = run_job(dim, &ctx.gens, &coords, &job, r_max, params.progress)?;
    let ladder = make_ladder(shells, &radii);

    let apl = dim - 1;
    let wl_base = args.len() * apl * dim;
    let mut out = Vec::with_capacity(radii.len());
    for (ri, &r) in radii.iter().enumerate() {
        let cum = &ladder.cums[ri];
        let mut per_arg = Vec::with_capacity(args.len());
        for (ai, zc) in coords.iter().enumerate() {
            let mut per_i = Vec::with_capacity(apl);
            for j in 1..dim {
                let lane = (ai * apl + (j - 1)) * dim;
                let mut val = vec![0.0f64; dim];
                val.copy_from_slice(&cum[lane..lane + dim]);
                if with_lead {
                    add_qtau_lead(zc, j, &mut val);
                }
                // subtract Qtau_j(R)
                let qlane = wl_base + (j - 1) * dim;
                for c2 in 0..dim {
                    val[c2] -= cum[qlane + c2];
                }
                let tail =
                    ladder.tail(r, lane, lane + dim) + ladder.tail(r, qlane, qlane + dim);
                per_i.push(SeriesValue {
                    value: ctx.basis.from_coords(&val),
                    tail_estimate: tail,
                });
            }
            per_arg.push(per_i);
        }
        out.push(per_arg);
    }
    Ok(out)
}

/// `q_tau(j)(z)` on canonical coordinates added into `out`.
fn add_qtau_lead(zc: &[f64], j: usize, out: &mut [f64]) {
    let dim = zc.len();
    let n: f64 = zc.iter().map(|x| x * x).sum();
    let inv = 1.0 / n;
    let inv_half = inv.powi(dim as i32 / 2);
    let inv_half1 = inv_half * inv;
    let t = -(dim as f64) * zc[j] * inv_half1;
    out[0] += t * zc[0];
    for c2 in 1..dim {
        out[c2] -= t * zc[c2];
    }
    out[j] -= inv_half;
}

/// `wp_n` ladder for `|n| >= 2` (normally convergent; no correction terms,
/// and the `omega = 0` term is included).
pub fn wp_n_ladder(
    ctx: &EvalContext,
    params: &SeriesParams,
    radii: &[u32],
    n: &MultiIndex,
    args: &[CDElement<f64>],
) -> Result<Vec<Vec<SeriesValue>>, SeriesError> {
    if n.order() < 2 {
        return Err(SeriesError::NonConvergentOrder(n.order()));
    }
    if n.level() != ctx.level {
        return Err(SeriesError::UnsupportedLevel(n.level()));
    }
    let (radii, r_max) = checked_radii(radii)?;
    let coords = arg_coords(ctx, args)?;
    let dim = ctx.dim;
    let eps = ctx.eps(params)?;
    let eps2 = eps * eps;
    for (ai, zc) in coords.iter().enumerate() {
        let nn: f64 = zc.iter().map(|x| x * x).sum();
        if nn < eps2 {
            return Err(SeriesError::NearSingularity { shell: 0, arg: ai });
        }
    }
    let rep = qn_rep(n).compile();
    let job = Job {
        mode: Mode::WpN,
        rep: Some(&rep),
        pairing: params.pairing,
        eps2,
    };
    let shells = run_job(dim, &ctx.gens, &coords, &job, r_max, params.progress)?;
    let ladder = make_ladder(shells, &radii);
    let mut out = Vec::with_capacity(radii.len());
    for (ri, &r) in radii.iter().enumerate() {
        let cum = &ladder.cums[ri];
        let mut per_arg = Vec::with_capacity(args.len());
        for (ai, zc) in coords.iter().enumerate() {
            let mut val = vec![0.0f64; dim];
            val.copy_from_slice(&cum[ai * dim..(ai + 1) * dim]);
            let mut lead = vec![0.0f64; dim];
            rep.eval_into(zc, &mut lead);
            for c2 in 0..dim {
                val[c2] += lead[c2];
            }
            per_arg.push(SeriesValue {
                value: ctx.basis.from_coords(&val),
                tail_estimate: ladder.tail(r, ai * dim, (ai + 1) * dim),
            });
        }
        out.push(per_arg);
    }
    Ok(out)
}

/// Single-point conveniences matching the series definitions.
pub fn zeta_eval(
    z: &CDElement<f64>,
    ctx: &EvalContext,
    params: &SeriesParams,
) -> Result<SeriesValue, SeriesError> {
    Ok(zeta_ladder(ctx, params, &[params.radius], std::slice::from_ref(z))?
        .remove(0)
        .remove(0))
}

pub fn wp_tau_eval(
    i: usize,
    z: &CDElement<f64>,
    ctx: &EvalContext,
    params: &SeriesParams,
) -> Result<SeriesValue, SeriesError> {
    if i == 0 || i >= ctx.dim {
        return Err(SeriesError::UnsupportedLevel(ctx.level));
    }
    Ok(
        wp_tau_ladder(ctx, params, &[params.radius], std::slice::from_ref(z))?
            .remove(0)
            .remove(0)
            .remove(i - 1),
    )
}

pub fn wp_n_eval(
    n: &MultiIndex,
    z: &CDElement<f64>,
    ctx: &EvalContext,
    params: &SeriesParams,
) -> Result<SeriesValue, SeriesError> {
    Ok(
        wp_n_ladder(ctx, params, &[params.radius], n, std::slice::from_ref(z))?
            .remove(0)
            .remove(0),
    )
}

/// Legendre constants `eta_h = 2 zeta(omega_h / 2)` for every generator, in
/// one traversal.
pub fn legendre_constants(
    ctx: &EvalContext,
    params: &SeriesParams,
) -> Result<Vec<CDElement<f64>>, SeriesError> {
    Ok(legendre_ladder(ctx, params, &[params.radius])?.remove(0))
}

/// Legendre constants per requested radius: `result[radius][h]`.
pub fn legendre_ladder(
    ctx: &EvalContext,
    params: &SeriesParams,
    radii: &[u32],
) -> Result<Vec<Vec<CDElement<f64>>>, SeriesError> {
    let args: Vec<CDElement<f64>> = (0..ctx.dim)
        .map(|h| ctx.generator(h).scale(&0.5))
        .collect();
    let rows = zeta_ladder(ctx, params, radii, &args)?;
    Ok(rows
        .into_iter()
        .map(|per_arg| {
            per_arg
                .into_iter()
                .map(|sv| sv.value.scale(&2.0))
                .collect()
        })
        .collect())
}

/// `|zeta(z + omega_h) - zeta(z) - eta_h|` at the given truncation radius.
pub fn quasi_periodicity_residual(
    z: &CDElement<f64>,
    h: usize,
    ctx: &EvalContext,
    params: &SeriesParams,
) -> Result<f64, SeriesError> {
    let rows = quasi_periodicity_residuals(ctx, params, &[params.radius], std::slice::from_ref(z))?;
    Ok(rows[0][0][h])
}

/// Quasi-periodicity residuals `|zeta(z + omega_h) - zeta(z) - eta_h|` for
/// every probe point and every generator over a radius ladder, from a single
/// traversal: `result[radius][z][h]`.
pub fn quasi_periodicity_residuals(
    ctx: &EvalContext,
    params: &SeriesParams,
    radii: &[u32],
    zs: &[CDElement<f64>],
) -> Result<Vec<Vec<Vec<f64>>>, SeriesError> {
    let dim = ctx.dim;
    let gens: Vec<CDElement<f64>> = (0..dim).map(|h| ctx.generator(h)).collect();
    // args: zs, then z + omega_h blocks, then omega_h / 2
    let mut args: Vec<CDElement<f64>> = zs.to_vec();
    for z in zs {
        for g in &gens {
            args.push(z.add(g));
        }
    }
    for g in &gens {
        args.push(g.scale(&0.5));
    }
    let rows = zeta_ladder(ctx, params, radii, &args)?;
    let nz = zs.len();
    Ok(rows
        .into_iter()
        .map(|per_arg| {
            let eta_base = nz + nz * dim;
            (0..nz)
                .map(|zi| {
                    (0..dim)
                        .map(|h| {
                            let shifted = &per_arg[nz + zi * dim + h].value;
                            let base = &per_arg[zi].value;
                            let eta = per_arg[eta_base + h].value.scale(&2.0);
                            shifted.sub(base).sub(&eta).magnitude_f64()
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}
