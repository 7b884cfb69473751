use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::ptr;

use vizattack_ffi::*;

const HEADER: &str = include_str!("../include/vizattack.h");
const SOURCE: &str = include_str!("../src/lib.rs");

fn header_defines() -> BTreeMap<String, i32> {
    HEADER
        .lines()
        .filter_map(|l| l.strip_prefix("#define VZA_"))
        .map(|l| {
            let mut it = l.split_whitespace();
            let name = format!("VZA_{}", it.next().unwrap());
            (name, it.next().unwrap().parse().unwrap())
        })
        .collect()
}

fn declared(text: &str, marker: &str) -> Vec<String> {
    let mut names: Vec<String> = text
        .lines()
        .filter_map(|l| {
            let i = l.find(marker)?;
            let rest = &l[i + marker.len()..];
            let end = rest.find('(')?;
            Some(rest[..end].trim().to_string())
        })
        .collect();
    names.sort();
    names
}

#[test]
fn header_constants_match_rust() {
    let defines = header_defines();
    let rust = [
        ("VZA_OK", VZA_OK),
        ("VZA_ERR_NULL", VZA_ERR_NULL),
        ("VZA_ERR_UTF8", VZA_ERR_UTF8),
        ("VZA_ERR_IO", VZA_ERR_IO),
        ("VZA_ERR_SHAPE", VZA_ERR_SHAPE),
        ("VZA_ERR_CONFIG", VZA_ERR_CONFIG),
        ("VZA_ERR_ATTACK_FAILED", VZA_ERR_ATTACK_FAILED),
        ("VZA_ERR_MODEL", VZA_ERR_MODEL),
        ("VZA_ERR_INTERNAL", VZA_ERR_INTERNAL),
        ("VZA_ERR_PANIC", VZA_ERR_PANIC),
        ("VZA_STAGE_TRAIN_DR", VZA_STAGE_TRAIN_DR),
        ("VZA_STAGE_FIT_SUBSTITUTE", VZA_STAGE_FIT_SUBSTITUTE),
        ("VZA_STAGE_TRAIN_REC", VZA_STAGE_TRAIN_REC),
        ("VZA_STAGE_ATTACK", VZA_STAGE_ATTACK),
        ("VZA_CHART_SCATTER", VZA_CHART_SCATTER),
        ("VZA_CHART_LINE", VZA_CHART_LINE),
        ("VZA_CHART_BAR", VZA_CHART_BAR),
        ("VZA_CHART_AREA", VZA_CHART_AREA),
        ("VZA_CHART_PIE", VZA_CHART_PIE),
    ];
    assert_eq!(defines.len(), rust.len(), "header defines {defines:?}");
    for (name, value) in rust {
        assert_eq!(defines.get(name), Some(&value), "{name}");
    }
    let in_source = SOURCE.matches("pub const VZA_").count();
    assert_eq!(in_source, rust.len());
}

#[test]
fn header_declares_every_export() {
    let exported = declared(SOURCE, "extern \"C\" fn ");
    let mut in_header: Vec<String> = HEADER
        .lines()
        .filter(|l| !l.trim_start().starts_with("/*") && !l.trim_start().starts_with('*'))
        .filter_map(|l| {
            let end = l.find('(')?;
            let head = &l[..end];
            let name = head.rsplit([' ', '*']).next()?;
            name.starts_with("vza_").then(|| name.to_string())
        })
        .collect();
    in_header.sort();
    assert!(!exported.is_empty());
    assert_eq!(exported, in_header);
}

#[test]
fn header_compiles_as_c() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipped");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    fs::write(
        &src,
        "#include \"vizattack.h\"\nint main(void) { VzaProjector *p = 0; double xy[2]; \
         return vza_projector_project(p, 0, 0, xy) == VZA_OK; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe { vza_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string()
}

#[test]
fn null_and_missing_inputs_report_errors() {
    unsafe {
        let mut p: *mut VzaProjector = ptr::null_mut();
        assert_eq!(vza_projector_load(ptr::null(), &mut p), VZA_ERR_NULL);
        assert!(p.is_null());
        assert!(last_error().contains("path"));

        let missing = CString::new("/nonexistent/model.mlp").unwrap();
        assert_eq!(vza_projector_load(missing.as_ptr(), &mut p), VZA_ERR_IO);
        assert!(p.is_null());
        assert!(last_error().contains("/nonexistent/model.mlp"));

        let mut xy = [0.0; 2];
        assert_eq!(vza_projector_project(ptr::null(), ptr::null(), 0, xy.as_mut_ptr()), VZA_ERR_NULL);
        assert_eq!(vza_projector_width(ptr::null()), 0);
        vza_projector_free(ptr::null_mut());
        vza_recommender_free(ptr::null_mut());
        vza_string_free(ptr::null_mut());
    }
}

#[test]
fn truncated_error_copy_is_terminated() {
    unsafe {
        let missing = CString::new("/nonexistent/a/long/path/model.mlp").unwrap();
        let mut p: *mut VzaProjector = ptr::null_mut();
        vza_projector_load(missing.as_ptr(), &mut p);
        let mut buf = [1 as c_char; 8];
        let n = vza_last_error(buf.as_mut_ptr(), buf.len());
        assert!(n > 7);
        assert_eq!(buf[7], 0);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_bytes().len(), 7);
    }
}

#[test]
fn config_without_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[dataset]\nname = \"blobs\"\n").unwrap();
    let cfg = CString::new(cfg.to_str().unwrap()).unwrap();
    let mut status = -1;
    let rc = unsafe { vza_run_experiment(cfg.as_ptr(), VZA_STAGE_TRAIN_DR, ptr::null(), &mut status) };
    assert_eq!(rc, VZA_ERR_CONFIG);
    assert_eq!(status, -1);
}

#[test]
fn unknown_stage_rejected() {
    let cfg = CString::new("unused.toml").unwrap();
    let rc = unsafe { vza_run_experiment(cfg.as_ptr(), 42, ptr::null(), ptr::null_mut()) };
    assert_eq!(rc, VZA_ERR_CONFIG);
    assert!(last_error().contains("42"));
}

#[test]
fn trained_projector_round_trips_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dr.toml");
    fs::write(
        &cfg,
        "seed = 5\n[dataset]\nname = \"blobs\"\n[projector]\nhidden = [16]\nepochs = 3\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let cfg_c = CString::new(cfg.to_str().unwrap()).unwrap();
    let out_c = CString::new(out.to_str().unwrap()).unwrap();
    let mut status = -1;
    let rc = unsafe { vza_run_experiment(cfg_c.as_ptr(), VZA_STAGE_TRAIN_DR, out_c.as_ptr(), &mut status) };
    assert_eq!(rc, VZA_OK, "{}", last_error());
    assert_eq!(status, 0);

    let model = CString::new(out.join("target.mlp").to_str().unwrap()).unwrap();
    let direct = vizattack::paradr::Projector::load(&out.join("target.mlp")).unwrap();
    unsafe {
        let mut p: *mut VzaProjector = ptr::null_mut();
        assert_eq!(vza_projector_load(model.as_ptr(), &mut p), VZA_OK);
        assert_eq!(vza_projector_width(p), 10);
        let row: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        let mut xy = [f64::NAN; 2];
        assert_eq!(vza_projector_project(p, row.as_ptr(), row.len(), xy.as_mut_ptr()), VZA_OK);
        assert_eq!(xy, direct.project_row(&row).unwrap());
        assert_eq!(vza_projector_project(p, row.as_ptr(), 3, xy.as_mut_ptr()), VZA_ERR_SHAPE);
        vza_projector_free(p);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(vza_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
