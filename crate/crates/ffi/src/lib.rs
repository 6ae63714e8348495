//! C ABI for `crowdbound`.
//!
//! Every fallible function returns a [`CbStatus`]. On failure a message is
//! available from [`cb_last_error_message`] on the same thread. Absent bound
//! values are reported as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use crowdbound::bounds::{self, BoundKind, BoundReport};
use crowdbound::em::{EmOptions, WorkerModel};
use crowdbound::montecarlo::{self, bound_optimal_from_params, Columns, Method};
use crowdbound::rules::{majority_rule, oracle_map_rule};
use crowdbound::{DawidSkeneParams, Error, HyperplaneRule, Label, LabelMatrix, SamplingDesign};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotApplicable = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbMethod {
    Mv = 0,
    /// `2w - 1` weights from the supplied parameters.
    BoundOptimal = 1,
    OneStepWmv = 2,
    IterativeWmv = 3,
    /// One-coin EM with default options.
    EmMap = 4,
    OracleMap = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbRule {
    Mv = 0,
    BoundOptimal = 1,
    OracleMap = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbBoundKind {
    Upper = 0,
    Lower = 1,
    Vacuous = 2,
}

/// Worker parameters. `specificity` may be null for one-coin workers, in
/// which case `sensitivity` holds the accuracies. `sampling` holds one
/// labeling probability per worker.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CbParams {
    pub num_workers: usize,
    pub sensitivity: *const f64,
    pub specificity: *const f64,
    pub sampling: *const f64,
    pub prior: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbBoundReport {
    pub t1: f64,
    pub t2: f64,
    pub c_h: f64,
    pub sigma2: f64,
    pub hoeffding_upper: f64,
    pub bernstein_upper: f64,
    pub combined_upper: f64,
    pub hoeffding_lower: f64,
    pub bernstein_lower: f64,
    pub combined_lower: f64,
}

/// Opaque label matrix.
pub struct CbLabelMatrix {
    inner: LabelMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CbStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::IndexOutOfRange { .. } => CbStatus::DimensionMismatch,
        Error::BoundNotApplicable(_) | Error::ZeroNormWeights | Error::TooManyWorkers { .. } => {
            CbStatus::NotApplicable
        }
        _ => CbStatus::InvalidArgument,
    }
}

fn guard<F>(f: F) -> CbStatus
where
    F: FnOnce() -> Result<(), (CbStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CbStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".to_string());
            CbStatus::Panic
        }
    }
}

fn lib(err: Error) -> (CbStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (CbStatus, String) {
    (CbStatus::NullPointer, format!("{what} is null"))
}

/// Borrows `len` elements; a zero length accepts a null pointer.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (CbStatus, String)> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn read_params(p: *const CbParams) -> Result<DawidSkeneParams, (CbStatus, String)> {
    let p = p.as_ref().ok_or_else(|| null("params"))?;
    let m = p.num_workers;
    let sens = slice(p.sensitivity, m, "params.sensitivity")?.to_vec();
    let spec = if p.specificity.is_null() {
        sens.clone()
    } else {
        slice(p.specificity, m, "params.specificity")?.to_vec()
    };
    let q = slice(p.sampling, m, "params.sampling")?.to_vec();
    DawidSkeneParams::new(sens, spec, p.prior, SamplingDesign::PerWorker(q)).map_err(lib)
}

fn rule_for(rule: CbRule, params: &DawidSkeneParams) -> Result<HyperplaneRule, (CbStatus, String)> {
    Ok(match rule {
        CbRule::Mv => majority_rule(params.num_workers()),
        CbRule::BoundOptimal => bound_optimal_from_params(params),
        CbRule::OracleMap => oracle_map_rule(&params.to_one_coin().ok_or_else(|| {
            (
                CbStatus::InvalidArgument,
                "oracle MAP rule needs one-coin parameters".to_string(),
            )
        })?),
    })
}

fn nan_if_none(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

impl From<&BoundReport> for CbBoundReport {
    fn from(r: &BoundReport) -> Self {
        CbBoundReport {
            t1: r.t1,
            t2: r.t2,
            c_h: r.c_h,
            sigma2: r.sigma2,
            hoeffding_upper: nan_if_none(r.hoeffding_upper),
            bernstein_upper: nan_if_none(r.bernstein_upper),
            combined_upper: nan_if_none(r.combined_upper),
            hoeffding_lower: nan_if_none(r.hoeffding_lower),
            bernstein_lower: nan_if_none(r.bernstein_lower),
            combined_lower: nan_if_none(r.combined_lower),
        }
    }
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn cb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a label matrix from `len` observations. Labels are -1 or 1.
///
/// # Safety
/// The three arrays must hold `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_label_matrix_new(
    num_workers: usize,
    num_items: usize,
    workers: *const usize,
    items: *const usize,
    labels: *const i8,
    len: usize,
    out: *mut *mut CbLabelMatrix,
) -> CbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let w = slice(workers, len, "workers")?;
        let j = slice(items, len, "items")?;
        let z = slice(labels, len, "labels")?;
        let mut entries = Vec::with_capacity(len);
        for k in 0..len {
            let label = Label::from_sign(i64::from(z[k])).ok_or_else(|| {
                (
                    CbStatus::InvalidArgument,
                    format!("label {} at position {k} is not -1 or 1", z[k]),
                )
            })?;
            entries.push((w[k], j[k], label));
        }
        let inner = LabelMatrix::new(num_workers, num_items, entries).map_err(lib)?;
        *out = Box::into_raw(Box::new(CbLabelMatrix { inner }));
        Ok(())
    })
}

/// # Safety
/// `matrix` must come from [`cb_label_matrix_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cb_label_matrix_free(matrix: *mut CbLabelMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// # Safety
/// `matrix` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cb_label_matrix_num_items(matrix: *const CbLabelMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.inner.num_items())
}

/// Aggregates `matrix` into `out_labels` (length `out_len`, one entry per
/// item, -1 or 1). `params` may be null unless the method needs it.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cb_aggregate(
    matrix: *const CbLabelMatrix,
    method: CbMethod,
    params: *const CbParams,
    out_labels: *mut i8,
    out_len: usize,
) -> CbStatus {
    guard(|| {
        let m = &matrix.as_ref().ok_or_else(|| null("matrix"))?.inner;
        if out_labels.is_null() {
            return Err(null("out_labels"));
        }
        if out_len != m.num_items() {
            return Err(lib(Error::DimensionMismatch {
                what: "output buffer",
                expected: m.num_items(),
                actual: out_len,
            }));
        }
        let params = if params.is_null() {
            None
        } else {
            Some(read_params(params)?)
        };
        let method = match method {
            CbMethod::Mv => Method::Mv,
            CbMethod::BoundOptimal => Method::Wmv(None),
            CbMethod::OneStepWmv => Method::OneStepWmv,
            CbMethod::IterativeWmv => Method::IterativeWmv { max_iter: 100 },
            CbMethod::EmMap => Method::EmMap {
                model: WorkerModel::OneCoin,
                opts: EmOptions::default(),
            },
            CbMethod::OracleMap => Method::OracleMap,
        };
        let pred = montecarlo::aggregate(&method, m, params.as_ref()).map_err(lib)?;
        let out = std::slice::from_raw_parts_mut(out_labels, out_len);
        for (o, l) in out.iter_mut().zip(&pred.labels) {
            *o = l.as_i8();
        }
        Ok(())
    })
}

/// Mean error-rate bounds of `rule` under `params`.
///
/// # Safety
/// `params` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cb_mean_error_bounds(
    params: *const CbParams,
    rule: CbRule,
    out: *mut CbBoundReport,
) -> CbStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let params = read_params(params)?;
        let rule = rule_for(rule, &params)?;
        *out = (&bounds::mean_error_bounds(&rule, &params).map_err(lib)?).into();
        Ok(())
    })
}

/// Exact mean error rate of `rule` under `params` by enumeration (at most 12
/// workers).
///
/// # Safety
/// `params` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cb_exact_mean_error(
    params: *const CbParams,
    rule: CbRule,
    out: *mut f64,
) -> CbStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let params = read_params(params)?;
        let rule = rule_for(rule, &params)?;
        *out = montecarlo::exact_mean_error(&rule, &params, Columns::Average).map_err(lib)?;
        Ok(())
    })
}

/// Majority-vote bound `exp(-2Mq²(w̄ - 1/2)²)` and whether it bounds from
/// above or below.
///
/// # Safety
/// `value` and `kind` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_mv_mean_bound(
    num_workers: usize,
    q: f64,
    wbar: f64,
    value: *mut f64,
    kind: *mut CbBoundKind,
) -> CbStatus {
    guard(|| {
        let value = value.as_mut().ok_or_else(|| null("value"))?;
        let kind = kind.as_mut().ok_or_else(|| null("kind"))?;
        let b = bounds::mv_mean_bound(num_workers, q, wbar);
        *value = b.value;
        *kind = match b.kind {
            BoundKind::Upper => CbBoundKind::Upper,
            BoundKind::Lower => CbBoundKind::Lower,
            BoundKind::Vacuous => CbBoundKind::Vacuous,
        };
        Ok(())
    })
}

/// Lower bound on `P(error rate ≤ eps)` over `num_items` items.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_high_prob_bound(eps: f64, t1: f64, num_items: usize, out: *mut f64) -> CbStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = bounds::high_prob_bound(eps, t1, num_items).map_err(lib)?;
        Ok(())
    })
}

/// Smallest `t₁` guaranteeing error rate ≤ `eps` with probability ≥ `1 - delta`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_min_t1_for(eps: f64, delta: f64, num_items: usize, out: *mut f64) -> CbStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = bounds::min_t1_for(eps, delta, num_items).map_err(lib)?;
        Ok(())
    })
}
