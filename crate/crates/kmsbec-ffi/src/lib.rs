//! C ABI over the kmsbec core.
//!
//! A model is created with [`kmsbec_model_new`] and released with
//! [`kmsbec_model_free`]. Every fallible call returns a [`KmsbecStatus`];
//! on failure the message is available from [`kmsbec_last_error_message`]
//! on the same thread until the next failing call.

use kmsbec::goldstone::charge_commutator;
use kmsbec::model::omega_pm;
use kmsbec::quad::QuadratureConfig;
use kmsbec::thermal::{critical_density, critical_temperature, thermal_expectations, thermal_masses};
use kmsbec::{Error, MassSpectrum, ModelParams};
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmsbecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Nonconvergence = 3,
    Invariant = 4,
    Panic = 5,
}

/// Opaque model handle.
pub struct KmsbecModel {
    params: ModelParams,
    spectrum: MassSpectrum,
    quad: QuadratureConfig,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KmsbecSpectrum {
    pub phi: f64,
    pub m1_sq: f64,
    pub m2_sq: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KmsbecThermal {
    pub psi_sq: f64,
    pub j_tilde: f64,
    pub rho_cr: f64,
    pub m_b1_sq: f64,
    pub m_b2_sq: f64,
    pub condensate_charge: f64,
    pub total_charge: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> KmsbecStatus {
    if err.is_nonconvergence() {
        KmsbecStatus::Nonconvergence
    } else if matches!(err, Error::Invariant(_)) {
        KmsbecStatus::Invariant
    } else {
        KmsbecStatus::InvalidParameter
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), KmsbecStatus>>(f: F) -> KmsbecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KmsbecStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            KmsbecStatus::Panic
        }
    }
}

fn check<T>(r: kmsbec::Result<T>) -> Result<T, KmsbecStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null() -> KmsbecStatus {
    set_error("null pointer argument".into());
    KmsbecStatus::NullPointer
}

/// # Safety
/// `model` must be null or a live handle from [`kmsbec_model_new`].
unsafe fn model_ref<'a>(model: *const KmsbecModel) -> Result<&'a KmsbecModel, KmsbecStatus> {
    model.as_ref().ok_or_else(null)
}

/// # Safety
/// `out` must be null or valid for a write of `T`.
unsafe fn write<T>(out: *mut T, value: T) -> Result<(), KmsbecStatus> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

/// Creates a model; `m_v = 0` selects the plain splitting.
///
/// # Safety
/// `out` must be valid for a write of one pointer. On success the handle
/// must eventually be passed to [`kmsbec_model_free`].
#[no_mangle]
pub unsafe extern "C" fn kmsbec_model_new(
    m: f64,
    mu: f64,
    lambda: f64,
    beta: f64,
    m_v: f64,
    out: *mut *mut KmsbecModel,
) -> KmsbecStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let params = check(ModelParams::with_virtual_mass(m, mu, lambda, beta, m_v))?;
        let spectrum = check(params.spectrum())?;
        let handle = Box::new(KmsbecModel { params, spectrum, quad: QuadratureConfig::default() });
        write(out, Box::into_raw(handle))
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`kmsbec_model_new`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn kmsbec_model_free(model: *mut KmsbecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Sets the relative and absolute quadrature tolerances.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kmsbec_model_set_tolerances(model: *mut KmsbecModel, rtol: f64, atol: f64) -> KmsbecStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(null)?;
        let quad = QuadratureConfig { rtol, atol, ..m.quad };
        check(quad.validate())?;
        m.quad = quad;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kmsbec_model_spectrum(model: *const KmsbecModel, out: *mut KmsbecSpectrum) -> KmsbecStatus {
    guard(|| {
        let s = model_ref(model)?.spectrum;
        write(out, KmsbecSpectrum { phi: s.phi, m1_sq: s.m1_sq, m2_sq: s.m2_sq })
    })
}

/// Both dispersion branches at momentum magnitude `p`.
///
/// # Safety
/// `model` must be a live handle; `plus` and `minus` valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn kmsbec_omega_pm(
    model: *const KmsbecModel,
    p: f64,
    plus: *mut f64,
    minus: *mut f64,
) -> KmsbecStatus {
    guard(|| {
        let m = model_ref(model)?;
        if plus.is_null() || minus.is_null() {
            return Err(null());
        }
        let (a, b) = check(omega_pm(&m.spectrum, m.params.mu, p))?;
        write(plus, a)?;
        write(minus, b)
    })
}

/// Thermal masses of the two fluctuation components at inverse temperature `beta`.
///
/// # Safety
/// `model` must be a live handle; `m1_sq` and `m2_sq` valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn kmsbec_thermal_masses(
    model: *const KmsbecModel,
    beta: f64,
    m1_sq: *mut f64,
    m2_sq: *mut f64,
) -> KmsbecStatus {
    guard(|| {
        let m = model_ref(model)?;
        if m1_sq.is_null() || m2_sq.is_null() {
            return Err(null());
        }
        let (a, b) = check(thermal_masses(&m.spectrum, m.params.mu, beta, &m.quad))?;
        write(m1_sq, a)?;
        write(m2_sq, b)
    })
}

/// # Safety
/// `model` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kmsbec_thermal_observables(
    model: *const KmsbecModel,
    beta: f64,
    out: *mut KmsbecThermal,
) -> KmsbecStatus {
    guard(|| {
        let m = model_ref(model)?;
        let o = check(thermal_expectations(&m.spectrum, m.params.mu, beta, &m.quad))?;
        write(
            out,
            KmsbecThermal {
                psi_sq: o.psi_sq,
                j_tilde: o.j_tilde,
                rho_cr: o.rho_cr,
                m_b1_sq: o.m_b1_sq,
                m_b2_sq: o.m_b2_sq,
                condensate_charge: o.condensate_charge,
                total_charge: o.total_charge(),
            },
        )
    })
}

/// # Safety
/// `model` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kmsbec_critical_density(model: *const KmsbecModel, beta: f64, out: *mut f64) -> KmsbecStatus {
    guard(|| {
        let m = model_ref(model)?;
        write(out, check(critical_density(&m.params, beta, &m.quad))?)
    })
}

/// Temperature at which the critical density equals `rho_target`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn kmsbec_critical_temperature(
    model: *const KmsbecModel,
    rho_target: f64,
    out: *mut f64,
) -> KmsbecStatus {
    guard(|| {
        let m = model_ref(model)?;
        write(out, check(critical_temperature(&m.params, rho_target, &m.quad))?.t_cr)
    })
}

/// Smeared charge commutator at radius `r` with time half-width `eps`;
/// writes two components to `out`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for two writes.
#[no_mangle]
pub unsafe extern "C" fn kmsbec_charge_commutator(
    model: *const KmsbecModel,
    r: f64,
    eps: f64,
    out: *mut f64,
) -> KmsbecStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null());
        }
        let s = &m.spectrum;
        let res = check(charge_commutator(r, eps, s, m.params.mu, s.phi, &m.quad))?;
        write(out, res.value[0])?;
        write(out.add(1), res.value[1])
    })
}

/// Message of the last failure on this thread, or null if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kmsbec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kmsbec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
