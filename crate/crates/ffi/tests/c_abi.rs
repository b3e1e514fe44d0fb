use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use hjb_ng_ffi::*;

fn reference(n: u32) -> *mut HjbParams {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { hjb_params_reference(n, &mut p) }, HjbStatus::Ok);
    assert!(!p.is_null());
    p
}

#[test]
fn rates_and_value_function() {
    let p = reference(1);
    let (mut a, mut b, mut z) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { hjb_rate_constants(p, HJB_MODE_ORACLE, &mut a, &mut b, &mut z) }, HjbStatus::Ok);
    assert!((b - 0.05).abs() < 1e-15);
    assert!((z - 0.1079).abs() < 1e-12);

    let y = [0.0];
    let mut v = 0.0;
    assert_eq!(unsafe { hjb_value_function(p, HJB_MODE_ORACLE, 1.0, 0.0, y.as_ptr(), 1, &mut v) }, HjbStatus::Ok);
    assert!((v + 2.0).abs() < 1e-14, "terminal value at the origin is -1/gamma, got {v}");

    let mut price = f64::NAN;
    let y0 = [1.0];
    assert_eq!(unsafe { hjb_indifference_price(p, HJB_MODE_ORACLE, 1.0, y0.as_ptr(), 1, &mut price) }, HjbStatus::Ok);
    assert!(price.is_finite() && price > 0.0);
    unsafe { hjb_params_free(p) };
}

#[test]
fn params_round_trip_and_validation() {
    let mut m = HjbMarket { r: 0.05, lambda: 0.1, gamma: 0.5, a0: 0.3, b0: 0.2, rho: 0.1, n: 2, k: 1.0, horizon: 1.0 };
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { hjb_params_new(&m, &mut p) }, HjbStatus::Ok);
    let mut back = HjbMarket { n: 0, ..m };
    assert_eq!(unsafe { hjb_params_get(p, &mut back) }, HjbStatus::Ok);
    assert_eq!(back.n, 2);
    unsafe { hjb_params_free(p) };

    m.gamma = -1.0;
    let mut q = ptr::null_mut();
    assert_eq!(unsafe { hjb_params_new(&m, &mut q) }, HjbStatus::InvalidParams);
    assert!(q.is_null());
}

#[test]
fn error_codes() {
    let mut v = 0.0;
    assert_eq!(
        unsafe { hjb_value_function(ptr::null(), HJB_MODE_ORACLE, 0.0, 1.0, ptr::null(), 0, &mut v) },
        HjbStatus::NullPointer
    );
    let p = reference(1);
    assert_eq!(unsafe { hjb_value_function(p, 7, 0.0, 1.0, [1.0].as_ptr(), 1, &mut v) }, HjbStatus::InvalidParams);
    assert_eq!(unsafe { hjb_value_function(p, HJB_MODE_ORACLE, 0.0, 1.0, ptr::null(), 0, &mut v) }, HjbStatus::InvalidParams);
    unsafe { hjb_params_free(p) };

    let m = HjbMarket { r: 0.05, lambda: 0.1, gamma: 0.5, a0: 0.3, b0: 0.2, rho: 0.1, n: 0, k: 1.0, horizon: 1.0 };
    let mut q = ptr::null_mut();
    assert_eq!(unsafe { hjb_params_new(&m, &mut q) }, HjbStatus::Ok);
    assert_eq!(unsafe { hjb_indifference_price(q, HJB_MODE_ORACLE, 1.0, ptr::null(), 0, &mut v) }, HjbStatus::InvalidBranch);
    unsafe { hjb_params_free(q) };

    let msg = unsafe { CStr::from_ptr(hjb_status_message(HjbStatus::InvalidBranch as i32)) };
    assert_eq!(msg.to_str().unwrap(), "invalid value-function branch");
    let unknown = unsafe { CStr::from_ptr(hjb_status_message(99)) };
    assert_eq!(unknown.to_str().unwrap(), "unknown status");
    unsafe { hjb_params_free(ptr::null_mut()) };
    unsafe { hjb_field_free(ptr::null_mut()) };
}

#[test]
fn finite_difference_field() {
    let p = reference(0);
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { hjb_fd_solve(p, 4, 4.0, 1.0, &mut f) }, HjbStatus::Ok);
    let len = unsafe { hjb_field_len(f) };
    assert_eq!(len, 17);
    assert_eq!(unsafe { hjb_field_dim(f) }, 1);
    let mut values = vec![0.0; len];
    assert_eq!(unsafe { hjb_field_values(f, values.as_mut_ptr(), len) }, HjbStatus::Ok);
    assert!(values.iter().all(|v| *v > 0.0));
    assert_eq!(unsafe { hjb_field_values(f, values.as_mut_ptr(), 3) }, HjbStatus::BufferTooSmall);
    let mut c = [0.0];
    assert_eq!(unsafe { hjb_field_point(f, 16, c.as_mut_ptr(), 1) }, HjbStatus::Ok);
    assert_eq!(c[0], 4.0);
    assert_eq!(unsafe { hjb_field_point(f, 17, c.as_mut_ptr(), 1) }, HjbStatus::InvalidParams);
    unsafe { hjb_field_free(f) };

    let mut g = ptr::null_mut();
    assert_eq!(unsafe { hjb_fd_solve(p, 1, 4.0, 1.0, &mut g) }, HjbStatus::InvalidParams);
    unsafe { hjb_params_free(p) };
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("hjb_ng.h")
}

#[test]
fn header_declares_the_surface() {
    let text = std::fs::read_to_string(header()).expect("generated header");
    for name in [
        "hjb_params_new",
        "hjb_params_reference",
        "hjb_params_free",
        "hjb_rate_constants",
        "hjb_value_function",
        "hjb_indifference_price",
        "hjb_fd_solve",
        "hjb_field_values",
        "hjb_field_free",
        "hjb_status_message",
        "typedef struct HjbParams HjbParams;",
        "typedef struct HjbField HjbField;",
        "HJB_STATUS_INVALID_BRANCH = 9",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = std::env::temp_dir().join(format!("hjb_ng_ffi_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("use_header.c");
    std::fs::write(
        &src,
        "#include \"hjb_ng.h\"\nint main(void) {\n  HjbParams *p = 0;\n  HjbStatus s = hjb_params_reference(1, &p);\n  hjb_params_free(p);\n  return (int)s;\n}\n",
    )
    .unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let status = match Command::new(&cc).arg("-std=c99").arg("-Wall").arg("-Werror").arg("-fsyntax-only").arg("-I").arg(&include).arg(&src).status() {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler found; skipping");
            return;
        }
    };
    std::fs::remove_dir_all(&dir).ok();
    assert!(status.success());
}
