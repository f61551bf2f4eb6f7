use std::ffi::{CStr, CString};
use std::ptr;

use cdprkit_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(cdpr_last_error_message()) }.to_string_lossy().into_owned()
}

fn config(name: &str) -> *mut CdprConfigHandle {
    let name = CString::new(name).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { cdpr_config_bundled(name.as_ptr(), &mut h) }, CdprStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn ik_then_fk_round_trip() {
    let h = config("simc8");
    let mut m = 0usize;
    assert_eq!(unsafe { cdpr_config_cable_count(h, &mut m) }, CdprStatus::Ok);
    assert_eq!(m, 8);

    let pose = [420.0, 560.0, 610.0, 0.08, -0.12, 0.0];
    let mut lengths = vec![0.0; m];
    assert_eq!(unsafe { cdpr_inverse_kinematics(h, pose.as_ptr(), lengths.as_mut_ptr(), m) }, CdprStatus::Ok);
    assert!(lengths.iter().all(|l| *l > 0.0));

    let mut back = [0.0; 6];
    let mut residual = f64::NAN;
    let status = unsafe { cdpr_solve_fk_opt(h, lengths.as_ptr(), m, back.as_mut_ptr(), &mut residual) };
    assert_eq!(status, CdprStatus::Ok, "{}", last_error());
    assert!(residual < 1e-6);
    for k in 0..3 {
        assert!((back[k] - pose[k]).abs() < 1e-3);
    }
    unsafe { cdpr_config_free(h) };
}

#[test]
fn errors_are_reported_not_raised() {
    let mut h = ptr::null_mut();
    let bad = CString::new("SimC99").unwrap();
    assert_eq!(unsafe { cdpr_config_bundled(bad.as_ptr(), &mut h) }, CdprStatus::InvalidArgument);
    assert!(h.is_null());
    assert!(last_error().contains("SimC99"));

    assert_eq!(unsafe { cdpr_config_bundled(ptr::null(), &mut h) }, CdprStatus::NullPointer);
    assert_eq!(unsafe { cdpr_config_cable_count(ptr::null(), ptr::null_mut()) }, CdprStatus::NullPointer);

    let c = config("simc6");
    let pose = [500.0, 500.0, 500.0, 0.0, 0.0, 0.0];
    let mut short = [0.0; 3];
    assert_eq!(unsafe { cdpr_inverse_kinematics(c, pose.as_ptr(), short.as_mut_ptr(), 3) }, CdprStatus::InvalidArgument);
    let nan = [f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut l = [0.0; 6];
    assert_eq!(unsafe { cdpr_inverse_kinematics(c, nan.as_ptr(), l.as_mut_ptr(), 6) }, CdprStatus::InvalidArgument);

    let missing = CString::new("/nonexistent/model.json").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { cdpr_model_load(missing.as_ptr(), &mut m) }, CdprStatus::Io);
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { cdpr_config_cable_count(c, &mut 0usize) }, CdprStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe {
        cdpr_config_free(c);
        cdpr_config_free(ptr::null_mut());
        cdpr_model_free(ptr::null_mut());
    }
}

#[test]
fn model_predicts_through_the_abi() {
    use cdprkit::nn::{ArchSpec, CafkNetModel, Checkpoint};
    use rand::SeedableRng;

    let arch = ArchSpec { hidden_dim: 4, mlp_width: 4, mlp_hidden_layers: 1, depth: 1 };
    let model = CafkNetModel::new(arch, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    Checkpoint::Cafknet(model).save(&path).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { cdpr_model_load(cpath.as_ptr(), &mut m) }, CdprStatus::Ok, "{}", last_error());
    let c = config("simc5");
    let lengths = [600.0; 5];
    let mut pose = [f64::NAN; 6];
    assert_eq!(unsafe { cdpr_model_predict(m, c, lengths.as_ptr(), 5, pose.as_mut_ptr()) }, CdprStatus::Ok);
    assert!(pose.iter().all(|v| v.is_finite()));
    assert_eq!(unsafe { cdpr_model_predict(m, c, lengths.as_ptr(), 4, pose.as_mut_ptr()) }, CdprStatus::InvalidArgument);
    unsafe {
        cdpr_model_free(m);
        cdpr_config_free(c);
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(cdpr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_abi() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cdprkit.h")).unwrap();
    for sym in [
        "CDPRKIT_H",
        "typedef struct CdprConfigHandle CdprConfigHandle;",
        "typedef struct CdprModelHandle CdprModelHandle;",
        "CDPR_STATUS_OK = 0",
        "CDPR_STATUS_PANIC",
        "cdpr_config_bundled",
        "cdpr_config_load",
        "cdpr_config_free",
        "cdpr_config_cable_count",
        "cdpr_inverse_kinematics",
        "cdpr_solve_fk_opt",
        "cdpr_model_load",
        "cdpr_model_predict",
        "cdpr_model_free",
        "cdpr_last_error_message",
        "cdpr_version",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
    assert!(header.contains("size_t lengths_len"));
}
