use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use loopsched_ffi::*;

fn last_error() -> String {
    let p = ls_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn plan_round_trip() {
    unsafe {
        let mut plan = ptr::null_mut();
        assert_eq!(ls_plan_new(LsTechnique::Guided, 16, 4, &mut plan), LsStatus::Ok);
        let sizes: Vec<u64> = (0..ls_plan_len(plan)).map(|i| ls_plan_chunk(plan, i)).collect();
        assert_eq!(sizes, [4, 3, 3, 2, 1, 1, 1, 1]);
        assert_eq!(ls_plan_chunk(plan, 100), 0);
        ls_plan_free(plan);

        let mut size = 0;
        assert_eq!(ls_chunk_at_step(LsTechnique::Factoring, 100, 4, 4, &mut size), LsStatus::Ok);
        assert_eq!(size, 6);
    }
}

#[test]
fn errors_carry_messages() {
    unsafe {
        let mut plan = ptr::null_mut();
        assert_eq!(ls_plan_new(LsTechnique::Static, 10, 0, &mut plan), LsStatus::InvalidArgument);
        assert!(plan.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(ls_plan_new(LsTechnique::Static, 10, 1, ptr::null_mut()), LsStatus::NullPointer);
        assert!(last_error().contains("out"));

        let mut platform = ptr::null_mut();
        let missing = CString::new("/nonexistent/platform").unwrap();
        assert_eq!(ls_platform_load(missing.as_ptr(), &mut platform), LsStatus::Io);

        let mut pe = 0.0;
        assert_eq!(ls_percent_error(1.0, 0.0, &mut pe), LsStatus::InvalidArgument);
        assert_eq!(ls_percent_error(90.0, 100.0, &mut pe), LsStatus::Ok);
        assert!((pe - 10.0).abs() < 1e-12);

        assert!(ls_sim_result_makespan(ptr::null()).is_nan());
        ls_sim_result_free(ptr::null_mut());
    }
}

#[test]
fn simulate_matches_library() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/rp3.platform");
    let path = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut platform = ptr::null_mut();
        assert_eq!(ls_platform_load(path.as_ptr(), &mut platform), LsStatus::Ok);
        let mut result = ptr::null_mut();
        let status = ls_simulate(
            platform,
            LsKernel::AdjointConvolution,
            20,
            LsTechnique::Factoring,
            8,
            35.0,
            60.0,
            false,
            &mut result,
        );
        assert_eq!(status, LsStatus::Ok);

        let job = loopsched::sim::SimJob::from_model(
            loopsched::SchedulingTechnique::Factoring,
            loopsched::KernelCostModel::rp3(loopsched::KernelKind::AdjointConvolution, 20).unwrap(),
            8,
        );
        let want = loopsched::sim::simulate(
            &job,
            &loopsched::sim::PlatformSpec::rp3(),
            &loopsched::sim::OverheadModel::rp3(),
            Default::default(),
        )
        .unwrap();
        assert_eq!(ls_sim_result_makespan_ps(result), want.makespan_ps);
        assert_eq!(ls_sim_result_parallel_cost(result), want.parallel_cost());
        assert_eq!(ls_sim_result_chunk_count(result), want.chunk_log.len() as u64);

        let mut too_many = ptr::null_mut();
        let status = ls_simulate(platform, LsKernel::MatMul, 4, LsTechnique::Static, 65, 35.0, 60.0, false, &mut too_many);
        assert_eq!(status, LsStatus::InvalidArgument);
        assert!(last_error().contains("65"));

        ls_sim_result_free(result);
        ls_platform_free(platform);
    }
}

#[test]
fn native_run_validates() {
    let mut stats = LsNativeStats::default();
    let status = unsafe { ls_run_native(LsKernel::MatMul, 16, LsTechnique::SelfScheduling, 3, 1, true, &mut stats) };
    assert_eq!(status, LsStatus::Ok);
    assert_eq!(stats.chunks, 256);
    assert_eq!(stats.max_relative_error, 0.0);
    assert!(stats.wall_time_s > 0.0);
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"loopsched.h\"\nint main(void) {\n  LsPlan *plan = 0;\n  LsStatus s = ls_plan_new(LS_TECHNIQUE_GUIDED, 16, 4, &plan);\n  return s == LS_STATUS_OK ? (int)ls_plan_len(plan) : -1;\n}\n",
    )
    .unwrap();
    let Ok(status) = std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(status.success());
}
