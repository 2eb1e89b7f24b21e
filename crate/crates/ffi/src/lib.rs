//! C ABI over the r2d2 core: byte-to-image encoding, image distances, DEX
//! validation and model inference.
//!
//! Every fallible function returns an [`R2d2Status`]. On failure a message
//! is stored per thread and can be read with [`r2d2_last_error_message`].
//! Images and models are opaque handles owned by the caller and released
//! with their `_free` function. Panics never cross the boundary; they are
//! reported as [`R2d2Status::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use r2d2::dex::{parse_dex_with, DexOptions};
use r2d2::distance::{self, EditDistance, LevenshteinOptions};
use r2d2::nn::{checkpoint, Network, NnError};
use r2d2::pipeline;
use r2d2::pixel::{self, RgbImage, WidthPolicy};
use r2d2::Error;

/// Result codes shared by every function in this API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum R2d2Status {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Not a ZIP, missing `classes.dex`, or a corrupt entry.
    Archive = 4,
    /// Bad DEX magic, size or checksum.
    Dex = 5,
    /// Empty input, bad dimensions or PNG failures.
    Image = 6,
    /// Unreadable checkpoint or an inference error.
    Model = 7,
    /// Edit distance input exceeded the cap in strict mode.
    Skipped = 8,
    Internal = 99,
}

/// An encoded RGB image.
pub struct R2d2Image {
    inner: RgbImage,
}

/// A trained classifier loaded from a checkpoint.
pub struct R2d2Model {
    inner: Network,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: R2d2Status, message: impl Into<String>) -> R2d2Status {
    set_last_error(message.into());
    status
}

fn status_of(e: &Error) -> R2d2Status {
    match e {
        Error::Archive(_) => R2d2Status::Archive,
        Error::Dex(_) => R2d2Status::Dex,
        Error::Pixel(pixel::PixelError::Io(_)) | Error::Io(_) => R2d2Status::Io,
        Error::Pixel(_) | Error::Distance(_) => R2d2Status::Image,
        Error::Nn(NnError::Io(_)) => R2d2Status::Io,
        Error::Nn(_) => R2d2Status::Model,
        Error::Eval(_) | Error::Corpus(_) => R2d2Status::InvalidArgument,
    }
}

fn from_error(e: impl Into<Error>) -> R2d2Status {
    let e = e.into();
    fail(status_of(&e), e.to_string())
}

/// Runs `f` and converts panics into `Internal`.
fn guard(f: impl FnOnce() -> R2d2Status) -> R2d2Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_owned());
            fail(R2d2Status::Internal, format!("internal error: {msg}"))
        }
    }
}

unsafe fn bytes_arg<'a>(data: *const u8, len: usize) -> Option<&'a [u8]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(data, len))
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, R2d2Status> {
    if path.is_null() {
        return Err(fail(R2d2Status::NullPointer, "path is null"));
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(R2d2Status::InvalidArgument, "path is not valid UTF-8")),
    }
}

fn new_image(img: RgbImage, out: *mut *mut R2d2Image) -> R2d2Status {
    // SAFETY: callers check `out` for null before producing the image.
    unsafe { *out = Box::into_raw(Box::new(R2d2Image { inner: img })) };
    R2d2Status::Ok
}

/// The message of the last failed call on this thread, or NULL if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn r2d2_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn r2d2_status_name(status: R2d2Status) -> *const c_char {
    let s: &'static CStr = match status {
        R2d2Status::Ok => c"ok",
        R2d2Status::NullPointer => c"null pointer",
        R2d2Status::InvalidArgument => c"invalid argument",
        R2d2Status::Io => c"i/o error",
        R2d2Status::Archive => c"archive error",
        R2d2Status::Dex => c"dex error",
        R2d2Status::Image => c"image error",
        R2d2Status::Model => c"model error",
        R2d2Status::Skipped => c"skipped",
        R2d2Status::Internal => c"internal error",
    };
    s.as_ptr()
}

/// Encodes `len` bytes as an RGB image, three bytes per pixel. `width` 0
/// selects the automatic power-of-two width.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn r2d2_image_encode(
    data: *const u8,
    len: usize,
    width: usize,
    out: *mut *mut R2d2Image,
) -> R2d2Status {
    guard(|| {
        if out.is_null() {
            return fail(R2d2Status::NullPointer, "out is null");
        }
        let Some(bytes) = bytes_arg(data, len) else {
            return fail(R2d2Status::NullPointer, "data is null");
        };
        let policy = WidthPolicy::fixed(width).unwrap_or(WidthPolicy::Auto);
        match pixel::encode_bytes(bytes, policy) {
            Ok(img) => new_image(img, out),
            Err(e) => from_error(e),
        }
    })
}

/// Loads an APK, DEX or PNG file. APK and DEX inputs are validated and
/// encoded with the automatic width.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn r2d2_image_from_file(path: *const c_char, out: *mut *mut R2d2Image) -> R2d2Status {
    guard(|| {
        if out.is_null() {
            return fail(R2d2Status::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match pipeline::load_path(&path).and_then(|l| l.to_image(WidthPolicy::Auto)) {
            Ok(img) => new_image(img, out),
            Err(e) => from_error(e),
        }
    })
}

/// Nearest-neighbour resize into a new image.
///
/// # Safety
/// `image` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn r2d2_image_resize(
    image: *const R2d2Image,
    width: usize,
    height: usize,
    out: *mut *mut R2d2Image,
) -> R2d2Status {
    guard(|| {
        if image.is_null() || out.is_null() {
            return fail(R2d2Status::NullPointer, "image or out is null");
        }
        match pixel::resize_nearest(&(*image).inner, width, height) {
            Ok(img) => new_image(img, out),
            Err(e) => from_error(e),
        }
    })
}

/// Width in pixels, 0 for NULL.
///
/// # Safety
/// `image` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn r2d2_image_width(image: *const R2d2Image) -> usize {
    image.as_ref().map_or(0, |i| i.inner.width())
}

/// Height in pixels, 0 for NULL.
///
/// # Safety
/// `image` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn r2d2_image_height(image: *const R2d2Image) -> usize {
    image.as_ref().map_or(0, |i| i.inner.height())
}

/// Interleaved RGB bytes, row-major, `width * height * 3` long. The pointer
/// is owned by the image.
///
/// # Safety
/// `image` must be NULL or a live handle; `len` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn r2d2_image_data(image: *const R2d2Image, len: *mut usize) -> *const u8 {
    let Some(img) = image.as_ref() else {
        if !len.is_null() {
            *len = 0;
        }
        return ptr::null();
    };
    let bytes = img.inner.as_bytes();
    if !len.is_null() {
        *len = bytes.len();
    }
    bytes.as_ptr()
}

/// Writes an 8-bit RGB PNG.
///
/// # Safety
/// `image` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn r2d2_image_write_png(image: *const R2d2Image, path: *const c_char) -> R2d2Status {
    guard(|| {
        if image.is_null() {
            return fail(R2d2Status::NullPointer, "image is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match pixel::write_png(&(*image).inner, path) {
            Ok(()) => R2d2Status::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `image` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn r2d2_image_free(image: *mut R2d2Image) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

unsafe fn pair<'a>(a: *const R2d2Image, b: *const R2d2Image) -> Option<(&'a RgbImage, &'a RgbImage)> {
    Some((&a.as_ref()?.inner, &b.as_ref()?.inner))
}

/// Mean squared error over all channels. Images of different sizes are
/// first resized to the smaller one.
///
/// # Safety
/// `a` and `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn r2d2_mse(a: *const R2d2Image, b: *const R2d2Image, out: *mut f64) -> R2d2Status {
    guard(|| {
        let Some((a, b)) = pair(a, b) else {
            return fail(R2d2Status::NullPointer, "image is null");
        };
        if out.is_null() {
            return fail(R2d2Status::NullPointer, "out is null");
        }
        match distance::align_pair(a, b).and_then(|(a, b)| distance::mse(&a, &b)) {
            Ok(v) => {
                *out = v;
                R2d2Status::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Similarity in percent, 100 for identical images.
///
/// # Safety
/// `a` and `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn r2d2_similarity(a: *const R2d2Image, b: *const R2d2Image, out: *mut f64) -> R2d2Status {
    let mut mse = 0.0;
    let status = r2d2_mse(a, b, &mut mse);
    if status == R2d2Status::Ok {
        if out.is_null() {
            return fail(R2d2Status::NullPointer, "out is null");
        }
        *out = distance::similarity_from_mse(mse);
    }
    status
}

/// Byte-level edit distance. Inputs longer than `cap` bytes (0 for the
/// default cap) are truncated, or reported as `Skipped` when `strict`.
///
/// # Safety
/// `a` and `b` must point to `a_len` and `b_len` readable bytes; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn r2d2_levenshtein(
    a: *const u8,
    a_len: usize,
    b: *const u8,
    b_len: usize,
    cap: usize,
    strict: bool,
    out: *mut usize,
) -> R2d2Status {
    guard(|| {
        let (Some(a), Some(b)) = (bytes_arg(a, a_len), bytes_arg(b, b_len)) else {
            return fail(R2d2Status::NullPointer, "input is null");
        };
        if out.is_null() {
            return fail(R2d2Status::NullPointer, "out is null");
        }
        let options = LevenshteinOptions {
            cap: if cap == 0 {
                distance::DEFAULT_LEVENSHTEIN_CAP
            } else {
                cap
            },
            strict,
            band: None,
        };
        match distance::levenshtein(a, b, options) {
            EditDistance::Distance(d) => {
                *out = d;
                R2d2Status::Ok
            }
            EditDistance::Skipped => fail(R2d2Status::Skipped, "input exceeds the edit distance cap"),
        }
    })
}

/// Validates a DEX header: magic, declared size and, when `strict`, the
/// Adler-32 checksum. On success `version` (if not NULL) receives e.g. 35.
///
/// # Safety
/// `data` must point to `len` readable bytes; `version` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn r2d2_dex_validate(data: *const u8, len: usize, strict: bool, version: *mut u32) -> R2d2Status {
    guard(|| {
        let Some(bytes) = bytes_arg(data, len) else {
            return fail(R2d2Status::NullPointer, "data is null");
        };
        match parse_dex_with(bytes.to_vec(), DexOptions { strict }) {
            Ok(dex) => {
                if !version.is_null() {
                    *version = dex.header().version();
                }
                R2d2Status::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Loads a checkpoint written by `r2d2 train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn r2d2_model_load(path: *const c_char, out: *mut *mut R2d2Model) -> R2d2Status {
    guard(|| {
        if out.is_null() {
            return fail(R2d2Status::NullPointer, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match checkpoint::load(path) {
            Ok(net) => {
                *out = Box::into_raw(Box::new(R2d2Model { inner: net }));
                R2d2Status::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// The network input size.
///
/// # Safety
/// `model` must be a live handle; `width` and `height` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn r2d2_model_input_size(
    model: *const R2d2Model,
    width: *mut usize,
    height: *mut usize,
) -> R2d2Status {
    let Some(m) = model.as_ref() else {
        return fail(R2d2Status::NullPointer, "model is null");
    };
    if !width.is_null() {
        *width = m.inner.config.input_width;
    }
    if !height.is_null() {
        *height = m.inner.config.input_height;
    }
    R2d2Status::Ok
}

/// Malicious-class probability of an image. The image is resized to the
/// network input first.
///
/// # Safety
/// `model` and `image` must be live handles and `probability` writable.
#[no_mangle]
pub unsafe extern "C" fn r2d2_model_predict(
    model: *const R2d2Model,
    image: *const R2d2Image,
    probability: *mut f64,
) -> R2d2Status {
    guard(|| {
        let (Some(m), Some(img)) = (model.as_ref(), image.as_ref()) else {
            return fail(R2d2Status::NullPointer, "model or image is null");
        };
        if probability.is_null() {
            return fail(R2d2Status::NullPointer, "probability is null");
        }
        let cfg = &m.inner.config;
        let result = pixel::resize_nearest(&img.inner, cfg.input_width, cfg.input_height)
            .map_err(Error::from)
            .and_then(|x| m.inner.predict(&x).map_err(Error::from));
        match result {
            Ok(p) => {
                *probability = p as f64;
                R2d2Status::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Loads, encodes and classifies an APK, DEX or PNG file.
///
/// # Safety
/// `model` must be a live handle, `path` a NUL-terminated string and
/// `probability` writable.
#[no_mangle]
pub unsafe extern "C" fn r2d2_model_scan_file(
    model: *const R2d2Model,
    path: *const c_char,
    probability: *mut f64,
) -> R2d2Status {
    let mut image: *mut R2d2Image = ptr::null_mut();
    let status = r2d2_image_from_file(path, &mut image);
    if status != R2d2Status::Ok {
        return status;
    }
    let status = r2d2_model_predict(model, image, probability);
    r2d2_image_free(image);
    status
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn r2d2_model_free(model: *mut R2d2Model) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
