//! C ABI for the preference-optimization laboratory.
//!
//! The surface follows the usual opaque-handle pattern: worlds and policies
//! are heap-allocated behind pointers, every call returns a status code, and
//! the last error message is kept in thread-local storage. Loss and
//! optimizer settings cross the boundary as the same JSON fragments the CLI
//! configs use. All evaluations run in exact population mode over the
//! world's data distribution.
//!
//! The generated header lives in `include/prefopt.h`.

use libc::{c_char, c_double};
use prefopt_core::config;
use prefopt_core::losses::{eval_loss, gradient_norm, loss_gradient};
use prefopt_core::optim::{initial_policy, train};
use prefopt_core::policy::TabularPolicy;
use prefopt_core::world::{DataMode, DiscreteWorld};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::ptr;

/// Opaque discrete preference world.
pub struct PrefoptWorld(DiscreteWorld);

/// Opaque tabular softmax policy.
pub struct PrefoptPolicy(TabularPolicy);

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefoptStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// JSON parsing or validation failed; see the last error message.
    ConfigError = 3,
    /// A domain precondition was violated (unknown id, shape mismatch, ...).
    DomainError = 4,
    /// Training or evaluation aborted; see the last error message.
    RuntimeError = 5,
    /// One or more identity checks failed.
    VerifyFailed = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &prefopt_core::Error) -> PrefoptStatus {
    use prefopt_core::Error as E;
    match err {
        E::Config(_) | E::Json(_) => PrefoptStatus::ConfigError,
        E::TrainAbort { .. } | E::Io(_) => PrefoptStatus::RuntimeError,
        _ => PrefoptStatus::DomainError,
    }
}

fn fail(err: prefopt_core::Error) -> PrefoptStatus {
    set_error(&err.to_string());
    status_of(&err)
}

/// Reads a C string argument, recording the error on failure.
unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, PrefoptStatus> {
    if ptr.is_null() {
        set_error(&format!("{what}: null pointer"));
        return Err(PrefoptStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what}: invalid UTF-8"));
        PrefoptStatus::InvalidUtf8
    })
}

macro_rules! deref {
    ($ptr:expr, $what:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(v) => v,
            None => {
                set_error(concat!($what, ": null pointer"));
                return PrefoptStatus::NullPointer;
            }
        }
    };
}

macro_rules! out_slot {
    ($ptr:expr, $what:literal) => {
        match unsafe { $ptr.as_mut() } {
            Some(v) => v,
            None => {
                set_error(concat!($what, ": null pointer"));
                return PrefoptStatus::NullPointer;
            }
        }
    };
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn prefopt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn prefopt_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Parses a world definition (same JSON schema as the CLI world files).
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer. On success `*out` owns a world that must be released with
/// `prefopt_world_free`.
#[no_mangle]
pub unsafe extern "C" fn prefopt_world_from_json(
    json: *const c_char,
    out: *mut *mut PrefoptWorld,
) -> PrefoptStatus {
    let slot = out_slot!(out, "out");
    let text = match read_str(json, "json") {
        Ok(t) => t,
        Err(s) => return s,
    };
    match config::world_from_json(text) {
        Ok(world) => {
            *slot = Box::into_raw(Box::new(PrefoptWorld(world)));
            PrefoptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Releases a world handle. Null is ignored.
///
/// # Safety
/// `world` must have been returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn prefopt_world_free(world: *mut PrefoptWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Number of prompts in the world.
///
/// # Safety
/// `world` must be a live handle from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn prefopt_world_n_prompts(
    world: *const PrefoptWorld,
    out: *mut usize,
) -> PrefoptStatus {
    let world = deref!(world, "world");
    let slot = out_slot!(out, "out");
    *slot = world.0.n_prompts();
    PrefoptStatus::Ok
}

/// Number of responses for one prompt.
///
/// # Safety
/// `world` must be a live handle from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn prefopt_world_n_responses(
    world: *const PrefoptWorld,
    prompt: usize,
    out: *mut usize,
) -> PrefoptStatus {
    let world = deref!(world, "world");
    let slot = out_slot!(out, "out");
    if prompt >= world.0.n_prompts() {
        set_error(&format!("unknown prompt id {prompt}"));
        return PrefoptStatus::DomainError;
    }
    *slot = world.0.n_responses(prompt);
    PrefoptStatus::Ok
}

/// Policy initialized at the world's reference distribution.
///
/// # Safety
/// `out` must be valid; the returned policy must be released with
/// `prefopt_policy_free`.
#[no_mangle]
pub unsafe extern "C" fn prefopt_policy_reference(
    world: *const PrefoptWorld,
    out: *mut *mut PrefoptPolicy,
) -> PrefoptStatus {
    let world = deref!(world, "world");
    let slot = out_slot!(out, "out");
    let policy = TabularPolicy::from_reference(&world.0);
    *slot = Box::into_raw(Box::new(PrefoptPolicy(policy)));
    PrefoptStatus::Ok
}

/// Parses a policy snapshot (map of prompt id to logit vector) checked
/// against the world's shape.
///
/// # Safety
/// As for `prefopt_world_from_json`.
#[no_mangle]
pub unsafe extern "C" fn prefopt_policy_from_json(
    json: *const c_char,
    world: *const PrefoptWorld,
    out: *mut *mut PrefoptPolicy,
) -> PrefoptStatus {
    let world = deref!(world, "world");
    let slot = out_slot!(out, "out");
    let text = match read_str(json, "json") {
        Ok(t) => t,
        Err(s) => return s,
    };
    match config::policy_from_json(text, &world.0) {
        Ok(policy) => {
            *slot = Box::into_raw(Box::new(PrefoptPolicy(policy)));
            PrefoptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Releases a policy handle. Null is ignored.
///
/// # Safety
/// `policy` must have been returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn prefopt_policy_free(policy: *mut PrefoptPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Writes the policy's probabilities for one prompt into `buf`, which must
/// hold exactly the prompt's response count.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn prefopt_policy_probs(
    policy: *const PrefoptPolicy,
    prompt: usize,
    buf: *mut c_double,
    len: usize,
) -> PrefoptStatus {
    let policy = deref!(policy, "policy");
    if buf.is_null() {
        set_error("buf: null pointer");
        return PrefoptStatus::NullPointer;
    }
    if prompt >= policy.0.n_prompts() {
        set_error(&format!("unknown prompt id {prompt}"));
        return PrefoptStatus::DomainError;
    }
    let probs = policy.0.probs(prompt);
    if probs.len() != len {
        set_error(&format!(
            "buf: prompt {prompt} has {} responses, buffer holds {len}",
            probs.len()
        ));
        return PrefoptStatus::DomainError;
    }
    ptr::copy_nonoverlapping(probs.as_ptr(), buf, len);
    PrefoptStatus::Ok
}

fn loss_eval_common(
    world: &PrefoptWorld,
    policy: &PrefoptPolicy,
    loss_json: &str,
) -> Result<(f64, f64), prefopt_core::Error> {
    let spec = config::loss_spec_from_json(loss_json, world.0.n_prompts())?;
    policy.0.check_shape(&world.0)?;
    let data = world.0.build_preference_data(DataMode::Population)?;
    let value = eval_loss(&spec, &policy.0, &world.0, &data)?;
    let grad = loss_gradient(&spec, &policy.0, &world.0, &data)?;
    Ok((value, gradient_norm(&grad)))
}

/// Evaluates a loss (JSON fragment, same schema as CLI configs) at a policy
/// over the world's exact population data.
///
/// # Safety
/// Pointer arguments must be valid; `out` receives the loss value.
#[no_mangle]
pub unsafe extern "C" fn prefopt_loss_value(
    world: *const PrefoptWorld,
    policy: *const PrefoptPolicy,
    loss_json: *const c_char,
    out: *mut c_double,
) -> PrefoptStatus {
    let world = deref!(world, "world");
    let policy = deref!(policy, "policy");
    let slot = out_slot!(out, "out");
    let text = match read_str(loss_json, "loss_json") {
        Ok(t) => t,
        Err(s) => return s,
    };
    match loss_eval_common(world, policy, text) {
        Ok((value, _)) => {
            *slot = value;
            PrefoptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Global L2 norm of the loss gradient with respect to all logits.
///
/// # Safety
/// As for `prefopt_loss_value`.
#[no_mangle]
pub unsafe extern "C" fn prefopt_loss_gradient_norm(
    world: *const PrefoptWorld,
    policy: *const PrefoptPolicy,
    loss_json: *const c_char,
    out: *mut c_double,
) -> PrefoptStatus {
    let world = deref!(world, "world");
    let policy = deref!(policy, "policy");
    let slot = out_slot!(out, "out");
    let text = match read_str(loss_json, "loss_json") {
        Ok(t) => t,
        Err(s) => return s,
    };
    match loss_eval_common(world, policy, text) {
        Ok((_, norm)) => {
            *slot = norm;
            PrefoptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Trains a policy on the world's population data. `loss_json` and
/// `optim_json` are the CLI config fragments; pass an empty object for
/// defaults.
///
/// # Safety
/// Pointer arguments must be valid; on success `*out` owns a policy that
/// must be released with `prefopt_policy_free`.
#[no_mangle]
pub unsafe extern "C" fn prefopt_train(
    world: *const PrefoptWorld,
    loss_json: *const c_char,
    optim_json: *const c_char,
    out: *mut *mut PrefoptPolicy,
) -> PrefoptStatus {
    let world = deref!(world, "world");
    let slot = out_slot!(out, "out");
    let loss_text = match read_str(loss_json, "loss_json") {
        Ok(t) => t,
        Err(s) => return s,
    };
    let optim_text = match read_str(optim_json, "optim_json") {
        Ok(t) => t,
        Err(s) => return s,
    };
    let result = (|| -> Result<TabularPolicy, prefopt_core::Error> {
        let spec = config::loss_spec_from_json(loss_text, world.0.n_prompts())?;
        let optim = config::optim_from_json(optim_text)?;
        let data = world.0.build_preference_data(DataMode::Population)?;
        let init = initial_policy(&world.0, optim.init);
        Ok(train(&spec, &world.0, &data, init, &optim)?.policy)
    })();
    match result {
        Ok(policy) => {
            *slot = Box::into_raw(Box::new(PrefoptPolicy(policy)));
            PrefoptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Runs the full identity-verification suite on the built-in worlds.
/// Writes the number of failed checks to `failures` and returns
/// `VerifyFailed` when it is nonzero.
///
/// # Safety
/// `failures` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prefopt_verify_run(
    probes: usize,
    seed: u64,
    failures: *mut usize,
) -> PrefoptStatus {
    let slot = out_slot!(failures, "failures");
    if probes == 0 {
        set_error("probes: positive count required");
        return PrefoptStatus::ConfigError;
    }
    match prefopt_core::verify::run_all(probes, seed) {
        Ok(reports) => {
            let failed: Vec<&str> = reports
                .iter()
                .filter(|r| !r.pass)
                .map(|r| r.name.as_str())
                .collect();
            *slot = failed.len();
            if failed.is_empty() {
                PrefoptStatus::Ok
            } else {
                set_error(&format!("failed checks: {}", failed.join(", ")));
                PrefoptStatus::VerifyFailed
            }
        }
        Err(e) => fail(e),
    }
}
