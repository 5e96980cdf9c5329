//! C ABI for nilzeta.
//!
//! Every entry point returns an `int32_t` status (`NZ_OK` on success) and
//! never unwinds across the boundary. After a failure,
//! `nz_last_error_message` returns a description of the most recent error
//! on the calling thread. Strings handed out by the library are owned by
//! the caller and must be released with `nz_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nilzeta::cli::{exit_code, load_group, select_k, LoadedGroup};
use nilzeta::conegen::{good_basis_conditions, relative_conditions};
use nilzeta::evaluator::{local_counts, CountSource, EvalConfig};
use nilzeta::oracle::OracleConfig;
use nilzeta::zeta::{assemble_global, compare_reports, CompareJob};
use nilzeta::{Error, Variant};

pub const NZ_OK: i32 = 0;
/// Bad arguments, unknown group, malformed input.
pub const NZ_ERR_USAGE: i32 = 1;
/// Counts disagree, verification or consistency failure.
pub const NZ_ERR_MISMATCH: i32 = 2;
pub const NZ_ERR_BUDGET: i32 = 3;
/// Unstable oracle or indeterminate computation.
pub const NZ_ERR_INCONCLUSIVE: i32 = 4;
pub const NZ_ERR_NULL: i32 = 5;
/// The output buffer is too short; the required length is reported.
pub const NZ_ERR_BUFFER: i32 = 6;
/// A count does not fit in 64 bits.
pub const NZ_ERR_OVERFLOW: i32 = 7;
pub const NZ_ERR_PANIC: i32 = 8;

pub const NZ_VARIANT_SUBGROUP: i32 = 0;
pub const NZ_VARIANT_NORMAL: i32 = 1;

/// Opaque handle to a loaded group.
pub struct NzGroup {
    inner: LoadedGroup,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn guard(f: impl FnOnce() -> Result<i32, (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(code)) => {
            if code == NZ_OK {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            code
        }
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            NZ_ERR_PANIC
        }
    }
}

fn fail(e: Error) -> (i32, String) {
    (exit_code(&e), e.to_string())
}

fn null(what: &str) -> (i32, String) {
    (NZ_ERR_NULL, format!("{what} is null"))
}

fn variant(v: i32) -> Result<Variant, (i32, String)> {
    match v {
        NZ_VARIANT_SUBGROUP => Ok(Variant::Subgroup),
        NZ_VARIANT_NORMAL => Ok(Variant::Normal),
        _ => Err((NZ_ERR_USAGE, format!("unknown variant {v}"))),
    }
}

unsafe fn group_ref<'a>(g: *const NzGroup) -> Result<&'a LoadedGroup, (i32, String)> {
    g.as_ref().map(|g| &g.inner).ok_or_else(|| null("group"))
}

unsafe fn write_counts(counts: &[u128], out: *mut u64, len: usize, written: *mut usize) -> Result<i32, (i32, String)> {
    if !written.is_null() {
        *written = counts.len();
    }
    if counts.len() > len {
        return Err((NZ_ERR_BUFFER, format!("{} entries needed, buffer holds {len}", counts.len())));
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    for (i, &c) in counts.iter().enumerate() {
        *out.add(i) = u64::try_from(c).map_err(|_| (NZ_ERR_OVERFLOW, format!("count {c} exceeds 64 bits")))?;
    }
    Ok(NZ_OK)
}

unsafe fn write_string(s: String, out: *mut *mut c_char) -> Result<i32, (i32, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s).map_err(|_| (NZ_ERR_USAGE, "output contains a NUL byte".to_string()))?;
    *out = c.into_raw();
    Ok(NZ_OK)
}

fn eval_config() -> EvalConfig {
    EvalConfig::default()
}

/// Load a group from a catalog name or a JSON file path.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nz_group_load(spec: *const c_char, out: *mut *mut NzGroup) -> i32 {
    guard(|| {
        if spec.is_null() {
            return Err(null("spec"));
        }
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let spec = CStr::from_ptr(spec).to_str().map_err(|_| (NZ_ERR_USAGE, "spec is not UTF-8".to_string()))?;
        let inner = load_group(spec).map_err(fail)?;
        *out = Box::into_raw(Box::new(NzGroup { inner }));
        Ok(NZ_OK)
    })
}

/// # Safety
/// `g` must come from `nz_group_load` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn nz_group_free(g: *mut NzGroup) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Hirsch length of the lattice part, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nz_group_hirsch_length(g: *const NzGroup) -> usize {
    g.as_ref().map_or(0, |g| g.inner.as_extension().hirsch_length())
}

/// Number of candidate subgroups `K` of the finite quotient for `variant`;
/// `k_index` arguments below index this list.
///
/// # Safety
/// `g` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nz_group_k_count(g: *const NzGroup, variant_code: i32, out: *mut usize) -> i32 {
    guard(|| {
        let g = group_ref(g)?;
        let v = variant(variant_code)?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = select_k(&g.as_extension(), v, "all").map_err(fail)?.len();
        Ok(NZ_OK)
    })
}

/// Local counts `a_{p^0}, ..., a_{p^kmax}` relative to the `k_index`-th
/// subgroup `K`. `out` must hold `kmax + 1` entries; `written` (optional)
/// receives the number of entries.
///
/// # Safety
/// `g` must be a live handle; `out` must point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn nz_local_counts(
    g: *const NzGroup,
    variant_code: i32,
    k_index: usize,
    p: u64,
    kmax: u32,
    out: *mut u64,
    len: usize,
    written: *mut usize,
) -> i32 {
    guard(|| {
        let g = group_ref(g)?;
        let v = variant(variant_code)?;
        let series = match g {
            LoadedGroup::Tau(n) if k_index == 0 => local_counts(CountSource::Tau(n), v, p, kmax, &eval_config()),
            _ => {
                let ext = g.as_extension();
                let k = select_k(&ext, v, &k_index.to_string()).map_err(fail)?.remove(0);
                local_counts(CountSource::Relative(&ext, &k), v, p, kmax, &eval_config())
            }
        }
        .map_err(fail)?;
        let counts = series.counts_u128().ok_or_else(|| (NZ_ERR_MISMATCH, "non-integral counts".to_string()))?;
        write_counts(&counts, out, len, written)
    })
}

/// Global coefficients `a_1, ..., a_nmax`.
///
/// # Safety
/// `g` must be a live handle; `out` must point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn nz_global_counts(
    g: *const NzGroup,
    variant_code: i32,
    nmax: u64,
    out: *mut u64,
    len: usize,
    written: *mut usize,
) -> i32 {
    guard(|| {
        let g = group_ref(g)?;
        let v = variant(variant_code)?;
        let series = assemble_global(&g.as_extension(), v, nmax, &eval_config()).map_err(fail)?;
        write_counts(&series.coeffs, out, len, written)
    })
}

/// Canonical JSON of the cone condition system for the `k_index`-th `K`.
///
/// # Safety
/// `g` must be a live handle and `out` a valid pointer; free the result
/// with `nz_string_free`.
#[no_mangle]
pub unsafe extern "C" fn nz_conditions_json(g: *const NzGroup, variant_code: i32, k_index: usize, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let g = group_ref(g)?;
        let v = variant(variant_code)?;
        let system = match g {
            LoadedGroup::Tau(n) if k_index == 0 => good_basis_conditions(n, v),
            _ => {
                let ext = g.as_extension();
                let k = select_k(&ext, v, &k_index.to_string()).map_err(fail)?.remove(0);
                relative_conditions(&ext, &k, v)
            }
        }
        .map_err(fail)?;
        write_string(system.to_canonical_json(), out)
    })
}

/// Cone and oracle counts for every `K` at prime `p`, as a JSON report.
/// Returns `NZ_OK` when all agree and are stable, otherwise the status of
/// the worst row (the report is still written).
///
/// # Safety
/// `g` must be a live handle and `out` a valid pointer; free the result
/// with `nz_string_free`.
#[no_mangle]
pub unsafe extern "C" fn nz_oracle_compare_json(g: *const NzGroup, variant_code: i32, p: u64, kmax: u32, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let g = group_ref(g)?;
        let v = variant(variant_code)?;
        let ext = g.as_extension();
        let ks = select_k(&ext, v, "all").map_err(fail)?;
        let job = CompareJob { group: &ext, ks, variant: v, primes: vec![p], kmax, level: None };
        let report = compare_reports(&job, &eval_config(), &OracleConfig::default());
        let text = serde_json::to_string(&report.to_json()).map_err(|e| fail(e.into()))?;
        write_string(text, out)?;
        let code = report.exit_code();
        if code != NZ_OK {
            set_error(format!("oracle comparison finished with status {code}"));
        }
        Ok(code)
    })
}

/// Copy of the last error message on this thread, or null if the last
/// call succeeded. Free with `nz_string_free`.
#[no_mangle]
pub extern "C" fn nz_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null_mut(), |m| m.clone().into_raw()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nz_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
