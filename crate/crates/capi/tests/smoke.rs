//! Drives the C entry points the way a foreign caller would: raw pointers
//! in, status codes out, strings freed through the library.

use std::ffi::CStr;
use std::ptr;

use bgestim_capi::*;

fn last_error() -> String {
    let msg = bgestim_last_error();
    assert!(!msg.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(msg) }
        .to_string_lossy()
        .into_owned()
}

/// Ten 32x32 frames; a dark square occludes the centre for the first six.
fn frame(f: usize) -> Vec<u8> {
    let mut pixels = vec![160u8; 32 * 32];
    if f < 6 {
        for y in 8..24 {
            for x in 8..24 {
                pixels[y * 32 + x] = 30;
            }
        }
    }
    pixels
}

#[test]
fn estimates_a_background_through_the_c_surface() {
    unsafe {
        let config = bgestim_config_new();
        assert!(!config.is_null());
        assert_eq!(bgestim_config_set_block_size(config, 8), BgestimStatus::Ok);
        assert_eq!(
            bgestim_config_set_icm_iterations(config, 2),
            BgestimStatus::Ok
        );

        let estimator = bgestim_estimator_new(config, 32, 32, 25.0);
        assert!(!estimator.is_null(), "estimator_new: {}", last_error());
        bgestim_config_free(config);

        for f in 0..10 {
            let pixels = frame(f);
            let status = bgestim_estimator_push_frame(estimator, pixels.as_ptr(), pixels.len());
            assert_eq!(status, BgestimStatus::Ok, "push {f}: {}", last_error());
        }
        assert_eq!(bgestim_estimator_finish(estimator), BgestimStatus::Ok);

        assert_eq!(bgestim_estimator_background_width(estimator), 32);
        assert_eq!(bgestim_estimator_background_height(estimator), 32);

        // The occluded centre is recovered through both accessors.
        let borrowed = bgestim_estimator_background(estimator);
        assert!(!borrowed.is_null());
        assert_eq!(*borrowed.add(16 * 32 + 16), 160);
        let mut copied = vec![0u8; 32 * 32];
        let status =
            bgestim_estimator_background_copy(estimator, copied.as_mut_ptr(), copied.len());
        assert_eq!(status, BgestimStatus::Ok);
        assert!(copied.iter().all(|&v| v == 160), "background is uniform");

        let json = bgestim_estimator_report_json(estimator);
        assert!(!json.is_null());
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        bgestim_string_free(json);
        let report: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(report["command"], "estimate");
        assert_eq!(report["config"]["block_size"], 8);
        assert_eq!(report["stats"]["frames"], 10);

        bgestim_estimator_free(estimator);
    }
}

#[test]
fn rejects_bad_arguments_with_status_codes() {
    unsafe {
        // Null handles.
        assert_eq!(
            bgestim_config_set_t1(ptr::null_mut(), 0.5),
            BgestimStatus::NullPointer
        );
        assert_eq!(
            bgestim_estimator_push_frame(ptr::null_mut(), ptr::null(), 0),
            BgestimStatus::NullPointer
        );

        // Invalid settings leave the config untouched.
        let config = bgestim_config_new();
        assert_eq!(
            bgestim_config_set_t1(config, 1.5),
            BgestimStatus::InvalidArgument
        );
        assert!(
            last_error().contains("correlation threshold"),
            "got: {}",
            last_error()
        );
        assert_eq!(
            bgestim_config_set_block_size(config, 1),
            BgestimStatus::InvalidArgument
        );
        assert_eq!(
            bgestim_config_set_t2(config, -1.0),
            BgestimStatus::InvalidArgument
        );
        assert_eq!(bgestim_config_set_t2(config, 3.5), BgestimStatus::Ok);
        assert_eq!(bgestim_config_clear_t2(config), BgestimStatus::Ok);

        // Frames smaller than one block are rejected at creation.
        assert!(bgestim_estimator_new(config, 8, 8, 25.0).is_null());
        assert!(bgestim_estimator_new(config, 32, 32, 0.0).is_null());

        let estimator = bgestim_estimator_new(config, 32, 32, 25.0);
        bgestim_config_free(config);
        assert!(!estimator.is_null());

        // Wrong buffer size, then null pixels.
        let short = [0u8; 16];
        assert_eq!(
            bgestim_estimator_push_frame(estimator, short.as_ptr(), short.len()),
            BgestimStatus::Geometry
        );
        assert_eq!(
            bgestim_estimator_push_frame(estimator, ptr::null(), 32 * 32),
            BgestimStatus::NullPointer
        );

        // Accessors before finish report the state error.
        assert_eq!(bgestim_estimator_background_width(estimator), 0);
        assert!(bgestim_estimator_background(estimator).is_null());
        assert!(bgestim_estimator_report_json(estimator).is_null());

        // One frame is not enough evidence; the frame is kept, so pushing
        // another and retrying succeeds.
        let pixels = frame(9);
        assert_eq!(
            bgestim_estimator_push_frame(estimator, pixels.as_ptr(), pixels.len()),
            BgestimStatus::Ok
        );
        assert_eq!(
            bgestim_estimator_finish(estimator),
            BgestimStatus::InsufficientFrames
        );
        assert_eq!(
            bgestim_estimator_push_frame(estimator, pixels.as_ptr(), pixels.len()),
            BgestimStatus::Ok
        );
        assert_eq!(bgestim_estimator_finish(estimator), BgestimStatus::Ok);

        // Finishing twice is a state error.
        assert_eq!(
            bgestim_estimator_finish(estimator),
            BgestimStatus::InvalidArgument
        );
        assert!(last_error().contains("already finished"));

        bgestim_estimator_free(estimator);
    }
}

#[test]
fn version_and_free_handle_edge_cases() {
    unsafe {
        let version = bgestim_version();
        assert!(!version.is_null());
        let text = CStr::from_ptr(version).to_str().unwrap();
        assert!(!text.is_empty());

        // Null frees are no-ops by contract.
        bgestim_config_free(ptr::null_mut());
        bgestim_estimator_free(ptr::null_mut());
        bgestim_string_free(ptr::null_mut());
    }
}
