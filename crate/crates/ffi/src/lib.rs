//! C ABI for the scampsim simulator.
//!
//! Models and runners are opaque heap handles released with their `_free`
//! function. Every fallible call returns a [`ScampStatus`]; on failure the
//! message is available from [`scamp_last_error_message`] on the same thread
//! until the next failing call. Strings returned through `char **` out
//! parameters are owned by the caller and released with
//! [`scamp_string_free`].
//!
//! Input images are `size * size` bytes, row-major, where any nonzero byte
//! is a set pixel and `size` is [`scamp_model_input_size`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use scampsim::servo::{self, Classified, ServoBank, ServoModel};
use scampsim::{
    estimate, reference_infer, ArrayConfig, ArrayState, BitImage, BnnModel, CostModel, Error,
    LoweredRunner, NoiseModel, PlaneGeometry, Saturation,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScampStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Weights = 4,
    Input = 5,
    Geometry = 6,
    Program = 7,
    CostTable = 8,
    Servo = 9,
    Json = 10,
    Internal = 11,
}

/// Analog arithmetic mode of a runner.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScampMode {
    Ideal = 0,
    Saturating = 1,
}

/// A binary CNN.
pub struct ScampModel {
    model: BnnModel,
}

/// A model lowered to a plane program plus the array it runs on.
pub struct ScampRunner {
    runner: LoweredRunner,
    state: ArrayState,
    input_size: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ScampStatus {
    match e {
        Error::Weights { .. } => ScampStatus::Weights,
        Error::Input(_) | Error::EmptyScores => ScampStatus::Input,
        Error::Geometry(_) => ScampStatus::Geometry,
        Error::Program { .. }
        | Error::Listing { .. }
        | Error::UnknownRegister { .. }
        | Error::RegisterConfig(_)
        | Error::Lowering { .. }
        | Error::RegisterBudget { .. } => ScampStatus::Program,
        Error::MissingCost(_) | Error::CostTable(_) => ScampStatus::CostTable,
        Error::Servo(_) => ScampStatus::Servo,
        Error::Json(_) => ScampStatus::Json,
        _ => ScampStatus::Internal,
    }
}

struct Fail(ScampStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ScampStatus::NullArgument, format!("`{what}` is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ScampStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScampStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ScampStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ScampStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn image_arg(pixels: *const u8, len: usize, size: usize) -> Result<BitImage, Fail> {
    if pixels.is_null() {
        return Err(null("pixels"));
    }
    if len != size * size {
        return Err(Fail(
            ScampStatus::Input,
            format!("expected {} pixels ({size}x{size}), got {len}", size * size),
        ));
    }
    let data = std::slice::from_raw_parts(pixels, len);
    Ok(BitImage::from_fn(size, size, |r, c| data[r * size + c] != 0))
}

unsafe fn write_out<T>(out: *mut T, value: T) {
    if !out.is_null() {
        *out = value;
    }
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(text).map_err(|_| Fail(ScampStatus::Internal, "string holds NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn write_scores(
    values: &[i64],
    out: *mut i64,
    out_len: usize,
    predicted: usize,
    predicted_out: *mut usize,
) -> Result<(), Fail> {
    if out_len < values.len() {
        return Err(Fail(
            ScampStatus::BufferTooSmall,
            format!("need room for {} scores, got {out_len}", values.len()),
        ));
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(null("scores"));
        }
        std::slice::from_raw_parts_mut(out, values.len()).copy_from_slice(values);
    }
    write_out(predicted_out, predicted);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on this thread.
#[no_mangle]
pub extern "C" fn scamp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn scamp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn scamp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The built-in seeded random model.
#[no_mangle]
pub unsafe extern "C" fn scamp_model_default(out: *mut *mut ScampModel) -> ScampStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(ScampModel {
            model: BnnModel::default_model(),
        }));
        Ok(())
    })
}

/// Uniform random ±1 weights for the default geometry and class names.
#[no_mangle]
pub unsafe extern "C" fn scamp_model_random(
    kernel_size: usize,
    seed: u64,
    out: *mut *mut ScampModel,
) -> ScampStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = BnnModel::random(
            PlaneGeometry::default(),
            kernel_size,
            scampsim::model::default_class_names(),
            seed,
        )?;
        *out = Box::into_raw(Box::new(ScampModel { model }));
        Ok(())
    })
}

/// Parses a weights JSON document.
#[no_mangle]
pub unsafe extern "C" fn scamp_model_from_json(
    json: *const c_char,
    out: *mut *mut ScampModel,
) -> ScampStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = BnnModel::load_weights(text)?;
        *out = Box::into_raw(Box::new(ScampModel { model }));
        Ok(())
    })
}

/// Serializes the model's weights as JSON.
#[no_mangle]
pub unsafe extern "C" fn scamp_model_to_json(
    model: *const ScampModel,
    out: *mut *mut c_char,
) -> ScampStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        write_string(out, m.model.save_weights())
    })
}

/// Side of the square network input, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn scamp_model_input_size(model: *const ScampModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.geometry().block_size())
}

/// Number of classes, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn scamp_model_num_classes(model: *const ScampModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.num_classes())
}

/// Name of class `index` as a new string.
#[no_mangle]
pub unsafe extern "C" fn scamp_model_class_name(
    model: *const ScampModel,
    index: usize,
    out: *mut *mut c_char,
) -> ScampStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let name = m.model.class_names().get(index).ok_or_else(|| {
            Fail(ScampStatus::InvalidArgument, format!("class index {index} out of range"))
        })?;
        write_string(out, name.clone())
    })
}

#[no_mangle]
pub unsafe extern "C" fn scamp_model_free(model: *mut ScampModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Direct evaluation of the network: writes one score per class into
/// `scores` and the first maximal index into `predicted` (may be NULL).
#[no_mangle]
pub unsafe extern "C" fn scamp_reference_infer(
    model: *const ScampModel,
    pixels: *const u8,
    len: usize,
    scores: *mut i64,
    scores_len: usize,
    predicted: *mut usize,
) -> ScampStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let img = image_arg(pixels, len, m.model.geometry().block_size())?;
        let r = reference_infer(&m.model, &img)?;
        write_scores(&r.scores, scores, scores_len, r.predicted, predicted)
    })
}

/// Lowers `model` to a plane program. `noise_sigma > 0` adds Gaussian noise
/// to every global sum, seeded by `seed`.
#[no_mangle]
pub unsafe extern "C" fn scamp_runner_new(
    model: *const ScampModel,
    mode: ScampMode,
    noise_sigma: f64,
    seed: u64,
    out: *mut *mut ScampRunner,
) -> ScampStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Fail(
                ScampStatus::InvalidArgument,
                format!("noise sigma {noise_sigma} must be >= 0"),
            ));
        }
        let saturation = match mode {
            ScampMode::Ideal => Saturation::Ideal,
            ScampMode::Saturating => Saturation::saturating(),
        };
        let noise = if noise_sigma > 0.0 {
            NoiseModel::gaussian(noise_sigma, seed)
        } else {
            NoiseModel::none()
        };
        let config = ArrayConfig::new(*m.model.geometry())
            .with_saturation(saturation)
            .with_noise(noise);
        let runner = LoweredRunner::new(&m.model, config)?;
        let state = runner.new_state(noise)?;
        *out = Box::into_raw(Box::new(ScampRunner {
            runner,
            state,
            input_size: m.model.geometry().block_size(),
        }));
        Ok(())
    })
}

/// Runs the lowered program on one input. Class sums are four times the
/// reference scores in ideal noiseless mode.
#[no_mangle]
pub unsafe extern "C" fn scamp_runner_infer(
    runner: *mut ScampRunner,
    pixels: *const u8,
    len: usize,
    sums: *mut i64,
    sums_len: usize,
    predicted: *mut usize,
) -> ScampStatus {
    guard(|| {
        let r = runner.as_mut().ok_or_else(|| null("runner"))?;
        let img = image_arg(pixels, len, r.input_size)?;
        let out = r.runner.run_on(&mut r.state, &img)?;
        write_scores(&out.sums, sums, sums_len, out.predicted, predicted)
    })
}

/// Number of instructions in the lowered program, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn scamp_runner_instruction_count(runner: *const ScampRunner) -> usize {
    runner.as_ref().map_or(0, |r| r.runner.program().len())
}

/// The lowered program as a text listing.
#[no_mangle]
pub unsafe extern "C" fn scamp_runner_listing(
    runner: *const ScampRunner,
    out: *mut *mut c_char,
) -> ScampStatus {
    guard(|| {
        let r = runner.as_ref().ok_or_else(|| null("runner"))?;
        write_string(out, r.runner.program().disassemble())
    })
}

/// Cost-model latency and throughput of the lowered program. A NULL
/// `cost_table_json` selects the shipped table. Throughput is +inf for a
/// zero-latency table.
#[no_mangle]
pub unsafe extern "C" fn scamp_runner_estimate(
    runner: *const ScampRunner,
    cost_table_json: *const c_char,
    latency_us: *mut f64,
    throughput_fps: *mut f64,
) -> ScampStatus {
    guard(|| {
        let r = runner.as_ref().ok_or_else(|| null("runner"))?;
        let cost = if cost_table_json.is_null() {
            CostModel::default()
        } else {
            CostModel::from_json(str_arg(cost_table_json, "cost_table_json")?)?
        };
        let report = estimate(r.runner.program(), &cost)?;
        write_out(latency_us, report.latency_us);
        write_out(throughput_fps, report.throughput_fps);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn scamp_runner_free(runner: *mut ScampRunner) {
    if !runner.is_null() {
        drop(Box::from_raw(runner));
    }
}

/// Simulates `servo_count` default servos driven by classified frames and
/// returns the event timeline as CSV. `frame_us` must be nondecreasing and
/// `classes` index rock, paper, scissors.
#[no_mangle]
pub unsafe extern "C" fn scamp_servo_simulate(
    frame_us: *const u64,
    classes: *const usize,
    frame_count: usize,
    inference_latency_us: u64,
    servo_count: usize,
    duration_us: u64,
    csv_out: *mut *mut c_char,
) -> ScampStatus {
    guard(|| {
        if frame_count > 0 && (frame_us.is_null() || classes.is_null()) {
            return Err(null("frame_us/classes"));
        }
        let frames: Vec<Classified> = if frame_count == 0 {
            Vec::new()
        } else {
            let t = std::slice::from_raw_parts(frame_us, frame_count);
            let c = std::slice::from_raw_parts(classes, frame_count);
            t.iter()
                .zip(c)
                .map(|(&frame_us, &class)| Classified { frame_us, class })
                .collect()
        };
        let bank = ServoBank::new(vec![ServoModel::default(); servo_count])?;
        let timeline = servo::simulate(
            &frames,
            inference_latency_us,
            &bank,
            &scampsim::model::default_class_names(),
            duration_us,
        )?;
        write_string(csv_out, timeline.to_csv())
    })
}
