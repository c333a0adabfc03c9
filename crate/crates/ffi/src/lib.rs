//! C interface to `minhgr`.
//!
//! Objects cross the boundary as opaque handles (`MinhgrJoint`,
//! `MinhgrMarginals`) created by `*_new`/`*_from_*` functions and released
//! with the matching `*_free`. Every fallible call returns a `MinhgrStatus`;
//! on failure `minhgr_last_error_message` describes the error for the
//! calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use minhgr::distributions::io::{read_joint_csv, read_marginals_json, write_joint_csv};
use minhgr::distributions::{
    pairwise_from_joint, AlphabetSpec, DiscreteJoint, PairwiseMarginalSet,
};
use minhgr::gaussian::{min_hgr_gaussian, GaussianMoments};
use minhgr::hgr::{hgr_svd, GenericJoint};
use minhgr::lowerbound::{assemble_qd, lower_bound_closed};
use minhgr::numerics::{Matrix, Vector};
use minhgr::tightness::{
    check_tightness, construct_additive, find_member_of_class, near_uniform_probe, Verdict,
};
use minhgr::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinhgrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    InvalidDistribution = 5,
    InconsistentMarginals = 6,
    DegenerateY = 7,
    Numerical = 8,
    NotTight = 9,
    InconsistentMoments = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

impl From<&Error> for MinhgrStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse(_) => MinhgrStatus::Parse,
            Error::Io(_) => MinhgrStatus::Io,
            Error::InvalidAlphabet(_)
            | Error::InvalidEpsilon(_)
            | Error::InvalidArgument(_)
            | Error::InvalidRho(_)
            | Error::DimensionMismatch(_) => MinhgrStatus::InvalidArgument,
            Error::AtomCapExceeded { .. }
            | Error::NegativeProbability { .. }
            | Error::NotNormalized { .. }
            | Error::DuplicateEntry(_)
            | Error::LabelOutOfRange(_)
            | Error::EmptyDataset => MinhgrStatus::InvalidDistribution,
            Error::InconsistentMarginals(_) | Error::EmptyClass | Error::DInconsistentWithQ(_) => {
                MinhgrStatus::InconsistentMarginals
            }
            Error::DegenerateY(_) => MinhgrStatus::DegenerateY,
            Error::HConstraintViolated { .. } => MinhgrStatus::NotTight,
            Error::InconsistentMoments(_) | Error::ZeroVariance => {
                MinhgrStatus::InconsistentMoments
            }
            Error::NonFinite
            | Error::NotSymmetric(_)
            | Error::LpFailure(_)
            | Error::MarginalMismatch(_)
            | Error::NotStationary(_) => MinhgrStatus::Numerical,
        }
    }
}

/// A joint distribution of `(X_1..X_p, Y)`.
pub struct MinhgrJoint(DiscreteJoint);

/// A set of pairwise marginals.
pub struct MinhgrMarginals(PairwiseMarginalSet);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MinhgrLowerBound {
    pub gamma_lb: f64,
    /// NaN when `Y` is degenerate.
    pub rho_lb: f64,
    pub p_y1: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MinhgrTightness {
    /// 1 if the bound is attained on the class, 0 otherwise.
    pub tight: i32,
    pub lp_value: f64,
    pub h_pos: f64,
    pub h_neg: f64,
    pub gamma_lb: f64,
}

struct Failure(MinhgrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(MinhgrStatus::from(&e), e.to_string())
    }
}

type FfiResult = Result<(), Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult) -> MinhgrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MinhgrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            MinhgrStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(MinhgrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn ref_of<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_of(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(MinhgrStatus::InvalidArgument, "path is not UTF-8".into()))
}

unsafe fn slice_of<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies `v` into an optional caller buffer.
unsafe fn copy_out(v: &[f64], out: *mut f64, out_len: usize) -> FfiResult {
    if out.is_null() {
        return Ok(());
    }
    if out_len < v.len() {
        return Err(Failure(
            MinhgrStatus::BufferTooSmall,
            format!("buffer holds {out_len} values, need {}", v.len()),
        ));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
    Ok(())
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> FfiResult {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn minhgr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn minhgr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a joint from `2 * m^p` probabilities, `prob[2 * x + y]`, with
/// `x = sum_i x_i m^(i-1)`.
///
/// # Safety
/// `prob` must point to `len` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn minhgr_joint_from_dense(
    p: usize,
    m: usize,
    prob: *const f64,
    len: usize,
    out: *mut *mut MinhgrJoint,
) -> MinhgrStatus {
    guard(|| {
        let probs = slice_of(prob, len, "prob")?;
        let joint = DiscreteJoint::from_dense(AlphabetSpec::new(p, m)?, probs.to_vec())?;
        put(out, Box::into_raw(Box::new(MinhgrJoint(joint))), "out")
    })
}

/// Reads a joint CSV (`x1,...,xp,y,prob`). `m = 0` infers the alphabet size.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn minhgr_joint_from_csv(
    path: *const c_char,
    m: usize,
    out: *mut *mut MinhgrJoint,
) -> MinhgrStatus {
    guard(|| {
        let path = path_of(path)?;
        let file = File::open(&path).map_err(Error::from)?;
        let joint = read_joint_csv(BufReader::new(file), (m > 0).then_some(m))?;
        put(out, Box::into_raw(Box::new(MinhgrJoint(joint))), "out")
    })
}

/// # Safety
/// `joint` must be a valid handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn minhgr_joint_write_csv(
    joint: *const MinhgrJoint,
    path: *const c_char,
) -> MinhgrStatus {
    guard(|| {
        let joint = ref_of(joint, "joint")?;
        let path = path_of(path)?;
        let file = File::create(&path).map_err(Error::from)?;
        write_joint_csv(file, &joint.0)?;
        Ok(())
    })
}

/// Writes `p`, `m` and the number of probabilities (`2 * m^p`).
///
/// # Safety
/// `joint` must be a valid handle; output pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn minhgr_joint_dims(
    joint: *const MinhgrJoint,
    p: *mut usize,
    m: *mut usize,
    len: *mut usize,
) -> MinhgrStatus {
    guard(|| {
        let joint = ref_of(joint, "joint")?;
        let spec = joint.0.spec();
        for (dst, v) in [
            (p, spec.p()),
            (m, spec.m()),
            (len, joint.0.as_slice().len()),
        ] {
            if !dst.is_null() {
                dst.write(v);
            }
        }
        Ok(())
    })
}

/// Copies the probabilities in `minhgr_joint_from_dense` layout.
///
/// # Safety
/// `joint` must be a valid handle and `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn minhgr_joint_probabilities(
    joint: *const MinhgrJoint,
    out: *mut f64,
    out_len: usize,
) -> MinhgrStatus {
    guard(|| {
        let joint = ref_of(joint, "joint")?;
        if out.is_null() {
            return Err(null("out"));
        }
        copy_out(joint.0.as_slice(), out, out_len)
    })
}

/// # Safety
/// `joint` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn minhgr_joint_free(joint: *mut MinhgrJoint) {
    if !joint.is_null() {
        drop(Box::from_raw(joint));
    }
}

/// # Safety
/// `joint` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn minhgr_marginals_from_joint(
    joint: *const MinhgrJoint,
    out: *mut *mut MinhgrMarginals,
) -> MinhgrStatus {
    guard(|| {
        let joint = ref_of(joint, "joint")?;
        let m = MinhgrMarginals(pairwise_from_joint(&joint.0));
        put(out, Box::into_raw(Box::new(m)), "out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn minhgr_marginals_from_json(
    path: *const c_char,
    out: *mut *mut MinhgrMarginals,
) -> MinhgrStatus {
    guard(|| {
        let path = path_of(path)?;
        let file = File::open(&path).map_err(Error::from)?;
        let m = read_marginals_json(BufReader::new(file))?;
        put(out, Box::into_raw(Box::new(MinhgrMarginals(m))), "out")
    })
}

/// # Safety
/// `marginals` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn minhgr_marginals_free(marginals: *mut MinhgrMarginals) {
    if !marginals.is_null() {
        drop(Box::from_raw(marginals));
    }
}

/// Lower bound for the class. When `z_out` is not NULL the minimum-norm
/// minimizer (length `p * m`) is copied there.
///
/// # Safety
/// `marginals` must be a valid handle, `out` writable, and `z_out` NULL or
/// holding `z_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn minhgr_lower_bound(
    marginals: *const MinhgrMarginals,
    out: *mut MinhgrLowerBound,
    z_out: *mut f64,
    z_len: usize,
) -> MinhgrStatus {
    guard(|| {
        let marginals = ref_of(marginals, "marginals")?;
        let system = assemble_qd(&marginals.0)?;
        let lb = lower_bound_closed(&system)?;
        copy_out(lb.z_star.as_slice(), z_out, z_len)?;
        let value = MinhgrLowerBound {
            gamma_lb: lb.gamma_lb,
            rho_lb: lb.rho_lb.unwrap_or(f64::NAN),
            p_y1: system.p_y1(),
        };
        put(out, value, "out")
    })
}

/// Tightness certificate for the class; `z_out` receives the witness.
///
/// # Safety
/// As for `minhgr_lower_bound`.
#[no_mangle]
pub unsafe extern "C" fn minhgr_check_tightness(
    marginals: *const MinhgrMarginals,
    tol: f64,
    out: *mut MinhgrTightness,
    z_out: *mut f64,
    z_len: usize,
) -> MinhgrStatus {
    guard(|| {
        let marginals = ref_of(marginals, "marginals")?;
        let cert = check_tightness(&assemble_qd(&marginals.0)?, tol)?;
        copy_out(cert.z_star.as_slice(), z_out, z_len)?;
        let value = MinhgrTightness {
            tight: i32::from(cert.verdict == Verdict::Tight),
            lp_value: cert.lp_value,
            h_pos: cert.h_pos,
            h_neg: cert.h_neg,
            gamma_lb: cert.gamma_lb,
        };
        put(out, value, "out")
    })
}

/// The additive distribution attaining the bound on the class of `base`
/// (or, when `base` is NULL, on the class given by `marginals`).
/// Returns `NotTight` when the bound is not attained.
///
/// # Safety
/// `base` and `marginals` must each be NULL or valid handles, not both NULL;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn minhgr_construct(
    base: *const MinhgrJoint,
    marginals: *const MinhgrMarginals,
    tol: f64,
    out: *mut *mut MinhgrJoint,
) -> MinhgrStatus {
    guard(|| {
        let (class, member) = match (base.as_ref(), marginals.as_ref()) {
            (Some(j), _) => (pairwise_from_joint(&j.0), j.0.clone()),
            (None, Some(m)) => (m.0.clone(), find_member_of_class(&m.0)?),
            (None, None) => return Err(null("base and marginals")),
        };
        let cert = check_tightness(&assemble_qd(&class)?, tol)?;
        if cert.verdict != Verdict::Tight {
            return Err(Failure(
                MinhgrStatus::NotTight,
                format!("bound not attained (lp value {})", cert.lp_value),
            ));
        }
        let star = construct_additive(&cert.z_star, &member, tol)?;
        put(out, Box::into_raw(Box::new(MinhgrJoint(star))), "out")
    })
}

/// Maximal correlation between `X = (X_1..X_p)` and `Y`.
///
/// # Safety
/// `joint` must be a valid handle and `rho` writable.
#[no_mangle]
pub unsafe extern "C" fn minhgr_hgr(joint: *const MinhgrJoint, rho: *mut f64) -> MinhgrStatus {
    guard(|| {
        let joint = ref_of(joint, "joint")?;
        put(rho, hgr_svd(&joint.0.flatten())?.rho, "rho")
    })
}

/// Maximal correlation of an `nx x ny` row-major joint table.
///
/// # Safety
/// `prob` must hold `nx * ny` doubles and `rho` must be writable.
#[no_mangle]
pub unsafe extern "C" fn minhgr_hgr_table(
    prob: *const f64,
    nx: usize,
    ny: usize,
    rho: *mut f64,
) -> MinhgrStatus {
    guard(|| {
        let len = nx
            .checked_mul(ny)
            .ok_or_else(|| Failure(MinhgrStatus::InvalidArgument, "table size overflows".into()))?;
        let cells = slice_of(prob, len, "prob")?;
        let joint = GenericJoint::new(Matrix::from_row_slice(nx, ny, cells))?;
        put(rho, hgr_svd(&joint)?.rho, "rho")
    })
}

/// Minimum maximal correlation given `mu` (length `n`) and the row-major
/// second-moment matrix `lambda` (`n x n`), `Y` last.
///
/// # Safety
/// `mu` must hold `n` doubles, `lambda` `n * n`, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn minhgr_gaussian_min_hgr(
    mu: *const f64,
    lambda: *const f64,
    n: usize,
    out: *mut f64,
) -> MinhgrStatus {
    guard(|| {
        let mu = slice_of(mu, n, "mu")?;
        let len = n.checked_mul(n).ok_or_else(|| {
            Failure(
                MinhgrStatus::InvalidArgument,
                "moment size overflows".into(),
            )
        })?;
        let lambda = slice_of(lambda, len, "lambda")?;
        let g = GaussianMoments::new(
            Vector::from_column_slice(mu),
            Matrix::from_row_slice(n, n, lambda),
        )?;
        put(out, min_hgr_gaussian(&g)?, "out")
    })
}

/// Fraction of `trials` random joints within L1 distance `eps` of uniform
/// whose class is tight.
///
/// # Safety
/// `fraction` must be writable.
#[no_mangle]
pub unsafe extern "C" fn minhgr_near_uniform_probe(
    p: usize,
    m: usize,
    eps: f64,
    trials: usize,
    seed: u64,
    tol: f64,
    fraction: *mut f64,
) -> MinhgrStatus {
    guard(|| {
        let r = near_uniform_probe(AlphabetSpec::new(p, m)?, eps, trials, seed, tol)?;
        put(fraction, r.fraction(), "fraction")
    })
}
