//! C interface to navgen. Objects cross the boundary as opaque handles that
//! the caller releases with the matching `_free` function. Every fallible
//! call returns a `NavgenStatus`; the message of the last failure on the
//! calling thread is available from `navgen_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use navgen::checkpoint::Checkpoint;
use navgen::config::RunConfig;
use navgen::data::{read_split, Split};
use navgen::eval::{evaluate, EvalOptions};
use navgen::metrics::{aggregate, text_scores};
use navgen::params::ModelParams;
use navgen::tasks::TaskKind;
use navgen::world::{generate_world, World, WorldConfig};
use navgen::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NavgenStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    Numeric = 6,
    Panic = 7,
}

/// Text-generation scores of one candidate against its references.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NavgenTextScores {
    pub em: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub meteor: f64,
}

/// Opaque world handle.
pub struct NavgenWorld(World);

/// Opaque model handle.
pub struct NavgenModel {
    params: ModelParams,
    config: RunConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> NavgenStatus {
    match e {
        Error::Config(_) => NavgenStatus::Config,
        Error::Io { .. } => NavgenStatus::Io,
        Error::NonFiniteLoss { .. } => NavgenStatus::Numeric,
        Error::UnknownViewpoint(_) => NavgenStatus::InvalidArgument,
        _ => NavgenStatus::Format,
    }
}

struct Fail(NavgenStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Fail {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(NavgenStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: String) -> Fail {
    Fail(NavgenStatus::InvalidArgument, msg)
}

/// Runs `f`, recording any failure or panic for `navgen_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NavgenStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            NavgenStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NavgenStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes, excluding
/// the terminator. An empty message means the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn navgen_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn navgen_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Generates a world with default settings and `num_viewpoints` viewpoints.
///
/// # Safety
/// `out` must point to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn navgen_world_generate(
    seed: u64,
    num_viewpoints: usize,
    out: *mut *mut NavgenWorld,
) -> NavgenStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = WorldConfig {
            num_viewpoints,
            ..WorldConfig::default()
        };
        let w = generate_world(seed, &cfg)?;
        *out = Box::into_raw(Box::new(NavgenWorld(w)));
        Ok(())
    })
}

/// Reads a world file written by `navgen gen-data`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` as above.
#[no_mangle]
pub unsafe extern "C" fn navgen_world_load(
    path: *const c_char,
    out: *mut *mut NavgenWorld,
) -> NavgenStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        *out = Box::into_raw(Box::new(NavgenWorld(World::from_json(&text)?)));
        Ok(())
    })
}

/// Number of viewpoints, or 0 for a null handle.
///
/// # Safety
/// `world` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn navgen_world_len(world: *const NavgenWorld) -> usize {
    world.as_ref().map_or(0, |w| w.0.len())
}

/// Geodesic distance in meters between two viewpoints.
///
/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn navgen_world_geodesic(
    world: *const NavgenWorld,
    a: usize,
    b: usize,
    out: *mut f64,
) -> NavgenStatus {
    guard(|| {
        let w = handle(world, "world")?;
        let out = out_arg(out, "out")?;
        *out = w.0.geodesic(a, b)?;
        Ok(())
    })
}

/// Writes the shortest path from `a` to `b` into `path` (capacity `cap`) and
/// its length into `len`. When `cap` is too small nothing is copied, `len`
/// still receives the required size and the call fails with
/// `InvalidArgument`.
///
/// # Safety
/// `path` must point to `cap` writable elements (may be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn navgen_world_shortest_path(
    world: *const NavgenWorld,
    a: usize,
    b: usize,
    path: *mut usize,
    cap: usize,
    len: *mut usize,
) -> NavgenStatus {
    guard(|| {
        let w = handle(world, "world")?;
        let len = out_arg(len, "len")?;
        let p = w.0.shortest_path(a, b)?;
        *len = p.len();
        if p.len() > cap {
            return Err(invalid(format!(
                "path needs {} entries, buffer holds {cap}",
                p.len()
            )));
        }
        if path.is_null() {
            return Err(null("path"));
        }
        ptr::copy_nonoverlapping(p.as_ptr(), path, p.len());
        Ok(())
    })
}

/// # Safety
/// `world` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn navgen_world_free(world: *mut NavgenWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Freshly initialized model from a run configuration file, or the standard
/// configuration when `config_path` is null.
///
/// # Safety
/// `config_path` must be null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn navgen_model_init(
    config_path: *const c_char,
    out: *mut *mut NavgenModel,
) -> NavgenStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let config = if config_path.is_null() {
            RunConfig::standard()
        } else {
            RunConfig::load(Path::new(str_arg(config_path, "config_path")?))?
        };
        let params = ModelParams::init(&config.model, config.seeds().model)?;
        *out = Box::into_raw(Box::new(NavgenModel { params, config }));
        Ok(())
    })
}

/// Loads a checkpoint written by `navgen train`, with the run configuration
/// stored alongside it.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn navgen_model_load(
    path: *const c_char,
    out: *mut *mut NavgenModel,
) -> NavgenStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ck = Checkpoint::load(Path::new(str_arg(path, "path")?))?;
        let config = match ck.notes.get("config").and_then(|v| v.as_str()) {
            Some(text) => RunConfig::from_toml(text)?,
            None => RunConfig::standard(),
        };
        *out = Box::into_raw(Box::new(NavgenModel {
            params: ck.params,
            config,
        }));
        Ok(())
    })
}

/// Trainable parameter count, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn navgen_model_num_params(model: *const NavgenModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.num_params())
}

/// Evaluates `model` on one split of a data directory and reports a single
/// aggregate metric (`"SR"`, `"SPL"`, `"EM"`, ...) for one task kind.
/// `max_episodes` of 0 means all episodes.
///
/// # Safety
/// String arguments must be NUL-terminated; `model` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn navgen_evaluate(
    model: *const NavgenModel,
    data_dir: *const c_char,
    split: *const c_char,
    kind: *const c_char,
    metric: *const c_char,
    max_episodes: usize,
    out: *mut f64,
) -> NavgenStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let out = out_arg(out, "out")?;
        let dir = Path::new(str_arg(data_dir, "data_dir")?);
        let split_name = str_arg(split, "split")?;
        let split = Split::parse(split_name)
            .ok_or_else(|| invalid(format!("unknown split {split_name:?}")))?;
        let kind_name = str_arg(kind, "kind")?;
        let kind = TaskKind::parse(kind_name)
            .ok_or_else(|| invalid(format!("unknown task kind {kind_name:?}")))?;
        let metric = str_arg(metric, "metric")?;
        let data = read_split(&dir.join(split.name()), false)?;
        let opts = EvalOptions {
            kinds: vec![kind],
            threshold: m.config.eval.threshold,
            max_episodes: (max_episodes > 0).then_some(max_episodes),
            oracle: false,
            seed: m.config.seeds().eval,
        };
        let rows = evaluate(&m.params, &data, &m.config.agent, &opts)?;
        let summary = aggregate(&rows)?;
        *out = *summary
            .per_kind
            .get(&kind)
            .and_then(|k| k.metrics.get(metric))
            .ok_or_else(|| invalid(format!("no metric {metric:?} for {kind_name}")))?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn navgen_model_free(model: *mut NavgenModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Scores `candidate` against `n_refs` reference strings. CIDEr is computed
/// over this single item, so its document frequencies come from the
/// references alone.
///
/// # Safety
/// `candidate` and each of the `n_refs` entries of `refs` must be
/// NUL-terminated strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn navgen_text_scores(
    candidate: *const c_char,
    refs: *const *const c_char,
    n_refs: usize,
    out: *mut NavgenTextScores,
) -> NavgenStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cand = str_arg(candidate, "candidate")?.to_string();
        if n_refs == 0 {
            return Err(invalid("at least one reference is required".into()));
        }
        if refs.is_null() {
            return Err(null("refs"));
        }
        let refs = (0..n_refs)
            .map(|i| str_arg(*refs.add(i), "reference").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let s = text_scores(&[(cand, refs)])[0];
        *out = NavgenTextScores {
            em: s.em,
            bleu4: s.bleu4,
            rouge_l: s.rouge_l,
            cider: s.cider,
            meteor: s.meteor,
        };
        Ok(())
    })
}
