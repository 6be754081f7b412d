use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use spider_ffi::*;

const TRIPOD: &str = include_str!("../../core/tests/fixtures/tripod.json");

fn load(json: &str) -> (SpiderStatus, *mut SpiderMechanism) {
    let c = CString::new(json).unwrap();
    let mut m = ptr::null_mut();
    let s = unsafe { spider_mechanism_from_json(c.as_ptr(), &mut m) };
    (s, m)
}

fn last_error() -> Option<String> {
    let p = spider_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

#[test]
fn handle_lifecycle() {
    let (s, m) = load(TRIPOD);
    assert_eq!(s, SpiderStatus::Ok);
    assert!(last_error().is_none());
    let (mut dim, mut chi) = (0usize, 0i64);
    unsafe {
        assert_eq!(spider_mechanism_dim(m, &mut dim), SpiderStatus::Ok);
        assert_eq!(spider_euler(m, &mut chi), SpiderStatus::Ok);
    }
    assert_eq!((dim, chi), (2, -4));
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { spider_critical_json(m, 0.0, 0.0, true, &mut out) }, SpiderStatus::Ok);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe {
        spider_string_free(out);
        spider_mechanism_free(m);
    }
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["payload"]["polynomial"], serde_json::json!([8, 24, 12]));
    assert_eq!(v["payload"]["euler"], -4);
}

#[test]
fn errors_are_reported_per_thread() {
    let (s, m) = load(r#"{"feet": [[0, 0]]}"#);
    assert_eq!((s, m.is_null()), (SpiderStatus::InputError, true));
    assert!(last_error().unwrap().contains("legs"));
    std::thread::spawn(|| assert!(last_error().is_none())).join().unwrap();

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { spider_mechanism_from_json(ptr::null(), &mut m) }, SpiderStatus::NullPointer);
    let bytes = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { spider_mechanism_from_json(bytes.as_ptr().cast(), &mut m) }, SpiderStatus::InvalidUtf8);
    let mut d = 0usize;
    assert_eq!(unsafe { spider_mechanism_dim(ptr::null(), &mut d) }, SpiderStatus::NullPointer);

    let (_, m) = load(TRIPOD);
    let mut out = ptr::null_mut();
    // target on a foot: not strongly generic
    let s = unsafe { spider_critical_json(m, 6e-17, 1.0, true, &mut out) };
    assert_eq!((s, out.is_null()), (SpiderStatus::GenericityViolation, true));
    assert!(last_error().is_some());
    unsafe {
        spider_mechanism_free(m);
        spider_mechanism_free(ptr::null_mut());
        spider_string_free(ptr::null_mut());
    }
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

fn cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
}

#[test]
fn header_compiles_and_links_from_c() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir();
    if !lib.join("libspider_ffi.so").exists() && !lib.join("libspider_ffi.dylib").exists() {
        eprintln!("cdylib not built in {}; skipping link step", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "spider.h"
int main(void) {
    const char *doc = "{\"feet\": [[0,0],[5,0]], \"legs\": [[1.6,1.4],[1.6,1.4]]}";
    SpiderMechanism *m = NULL;
    if (spider_mechanism_from_json(doc, &m) != SPIDER_STATUS_OK) return 10;
    int64_t chi = 0;
    size_t dim = 0;
    if (spider_euler(m, &chi) != SPIDER_STATUS_OK) return 11;
    if (spider_mechanism_dim(m, &dim) != SPIDER_STATUS_OK) return 12;
    char *json = NULL;
    if (spider_critical_json(m, 9.0, 9.0, true, &json) != SPIDER_STATUS_OK) return 13;
    spider_string_free(json);
    spider_mechanism_free(m);
    if (spider_mechanism_from_json("{}", &m) != SPIDER_STATUS_INPUT_ERROR || !spider_last_error()) return 14;
    printf("%lld %zu\n", (long long)chi, dim);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("capi");
    let st = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&lib)
        .arg(format!("-Wl,-rpath,{}", lib.display()))
        .args(["-lspider_ffi", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(st.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "2 2");
}
