//! Exercise the C ABI through the raw extern functions.

use std::ffi::{CStr, CString};
use std::ptr;

use tileloc::synthworld::Environment;
use tileloc_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn version_is_non_empty() {
    let v = unsafe { CStr::from_ptr(tileloc_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        let mut ds: *mut tileloc_dataset = ptr::null_mut();
        assert_eq!(
            tileloc_dataset_load(ptr::null(), &mut ds),
            tileloc_status::TILELOC_NULL_ARGUMENT
        );
        assert_eq!(
            tileloc_dataset_load(c("/nowhere.csv").as_ptr(), ptr::null_mut()),
            tileloc_status::TILELOC_NULL_ARGUMENT
        );
        assert_eq!(tileloc_dataset_len(ptr::null()), 0);
        tileloc_dataset_free(ptr::null_mut());
        tileloc_model_free(ptr::null_mut());
    }
}

#[test]
fn missing_file_reports_io_error_with_message() {
    unsafe {
        let mut ds: *mut tileloc_dataset = ptr::null_mut();
        let status = tileloc_dataset_load(c("/no/such/file.csv").as_ptr(), &mut ds);
        assert_eq!(status, tileloc_status::TILELOC_IO_ERROR);
        let msg = CStr::from_ptr(tileloc_last_error()).to_str().unwrap();
        assert!(msg.contains("file.csv"), "{msg}");
    }
}

#[test]
fn unknown_learner_is_invalid_argument() {
    let dir = tempfile::tempdir().unwrap();
    let env = Environment::small_open_preset(8, 6);
    let data_path = dir.path().join("d.csv");
    env.generate_dataset(1, 3).unwrap().save_with_sidecar(&data_path).unwrap();
    unsafe {
        let mut ds: *mut tileloc_dataset = ptr::null_mut();
        assert_eq!(
            tileloc_dataset_load(c(data_path.to_str().unwrap()).as_ptr(), &mut ds),
            tileloc_status::TILELOC_OK
        );
        let mut model: *mut tileloc_model = ptr::null_mut();
        assert_eq!(
            tileloc_train(ds, c("quantum").as_ptr(), 0, &mut model),
            tileloc_status::TILELOC_INVALID_ARGUMENT
        );
        tileloc_dataset_free(ds);
    }
}

#[test]
fn train_predict_save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let env = Environment::small_open_preset(12, 8);
    let dataset = env.generate_dataset(1, 9).unwrap();
    let data_path = dir.path().join("survey.csv");
    dataset.save_with_sidecar(&data_path).unwrap();
    let model_path = dir.path().join("model.json");

    unsafe {
        let mut ds: *mut tileloc_dataset = ptr::null_mut();
        assert_eq!(
            tileloc_dataset_load(c(data_path.to_str().unwrap()).as_ptr(), &mut ds),
            tileloc_status::TILELOC_OK
        );
        assert_eq!(tileloc_dataset_len(ds), dataset.len());
        assert_eq!(tileloc_dataset_attributes(ds), dataset.schema().len());

        let mut model: *mut tileloc_model = ptr::null_mut();
        assert_eq!(
            tileloc_train(ds, c("kstar").as_ptr(), 1, &mut model),
            tileloc_status::TILELOC_OK
        );

        // predict at a survey point: the exact-match instance dominates
        let probe = &dataset.points()[17];
        let values = probe.fingerprint.values().to_vec();
        let mask: Vec<u8> =
            probe.fingerprint.missing_mask().iter().map(|&m| u8::from(m)).collect();
        let (mut x, mut y, mut cmp) = (0.0f64, 0.0f64, 0u64);
        assert_eq!(
            tileloc_predict(model, values.as_ptr(), mask.as_ptr(), values.len(), &mut x, &mut y, &mut cmp),
            tileloc_status::TILELOC_OK
        );
        assert_eq!(cmp, dataset.len() as u64);

        assert_eq!(
            tileloc_model_save(model, c(model_path.to_str().unwrap()).as_ptr()),
            tileloc_status::TILELOC_OK
        );
        let mut reloaded: *mut tileloc_model = ptr::null_mut();
        assert_eq!(
            tileloc_model_load(c(model_path.to_str().unwrap()).as_ptr(), &mut reloaded),
            tileloc_status::TILELOC_OK
        );
        let (mut x2, mut y2) = (0.0f64, 0.0f64);
        assert_eq!(
            tileloc_predict(
                reloaded,
                values.as_ptr(),
                mask.as_ptr(),
                values.len(),
                &mut x2,
                &mut y2,
                ptr::null_mut()
            ),
            tileloc_status::TILELOC_OK
        );
        // persisted instance models reproduce predictions bit-identically
        assert_eq!(x.to_bits(), x2.to_bits());
        assert_eq!(y.to_bits(), y2.to_bits());

        tileloc_model_free(model);
        tileloc_model_free(reloaded);
        tileloc_dataset_free(ds);
    }
}

#[test]
fn wrong_fingerprint_width_is_a_predict_error() {
    let dir = tempfile::tempdir().unwrap();
    let env = Environment::small_open_preset(8, 6);
    let data_path = dir.path().join("d.csv");
    env.generate_dataset(1, 3).unwrap().save_with_sidecar(&data_path).unwrap();
    unsafe {
        let mut ds: *mut tileloc_dataset = ptr::null_mut();
        tileloc_dataset_load(c(data_path.to_str().unwrap()).as_ptr(), &mut ds);
        let mut model: *mut tileloc_model = ptr::null_mut();
        assert_eq!(
            tileloc_train(ds, c("kstar").as_ptr(), 0, &mut model),
            tileloc_status::TILELOC_OK
        );
        let bogus = [1.0f64, 2.0];
        let (mut x, mut y) = (0.0, 0.0);
        let status = tileloc_predict(
            model,
            bogus.as_ptr(),
            ptr::null(),
            bogus.len(),
            &mut x,
            &mut y,
            ptr::null_mut(),
        );
        assert_ne!(status, tileloc_status::TILELOC_OK);
        tileloc_model_free(model);
        tileloc_dataset_free(ds);
    }
}
