// SPDX-License-Identifier: Apache-2.0

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use faasflow_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ff_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn store_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let root = c(dir.path().to_str().unwrap());
    unsafe {
        let store = ff_store_open(root.as_ptr());
        assert!(!store.is_null());
        let (bucket, key) = (c("data"), c("x/y.bin"));
        let body = b"0123456789";
        assert_eq!(
            ff_store_put(store, bucket.as_ptr(), key.as_ptr(), body.as_ptr(), body.len()),
            FfStatus::Ok
        );
        let mut size = 0u64;
        assert_eq!(
            ff_store_head(store, bucket.as_ptr(), key.as_ptr(), &mut size),
            FfStatus::Ok
        );
        assert_eq!(size, 10);

        let mut buf = FfBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        assert_eq!(
            ff_store_get_range(store, bucket.as_ptr(), key.as_ptr(), 2, 5, &mut buf),
            FfStatus::Ok
        );
        assert_eq!(std::slice::from_raw_parts(buf.data, buf.len), b"234");
        ff_buffer_free(buf);

        let mut buf = FfBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        assert_eq!(
            ff_store_get_range(store, bucket.as_ptr(), key.as_ptr(), 5, 11, &mut buf),
            FfStatus::Range
        );
        assert!(last_error().contains("out of bounds"));
        assert_eq!(
            ff_store_head(store, bucket.as_ptr(), ptr::null(), &mut size),
            FfStatus::NullArgument
        );
        assert_eq!(
            ff_store_head(ptr::null(), bucket.as_ptr(), key.as_ptr(), &mut size),
            FfStatus::NullArgument
        );
        let bad = [0xffu8, 0];
        assert_eq!(
            ff_store_head(store, bucket.as_ptr(), bad.as_ptr() as *const _, &mut size),
            FfStatus::InvalidUtf8
        );
        assert_eq!(
            ff_store_put(store, bucket.as_ptr(), c("../esc").as_ptr(), body.as_ptr(), 1),
            FfStatus::Param
        );
        ff_store_free(store);
    }
}

#[test]
fn success_clears_the_last_error() {
    unsafe {
        let mut size = 0;
        assert_eq!(
            ff_store_head(ptr::null(), ptr::null(), ptr::null(), &mut size),
            FfStatus::NullArgument
        );
        assert!(!ff_last_error().is_null());
        let dir = tempfile::tempdir().unwrap();
        let store = ff_store_open(c(dir.path().to_str().unwrap()).as_ptr());
        assert_eq!(
            ff_store_put(store, c("b").as_ptr(), c("k").as_ptr(), ptr::null(), 0),
            FfStatus::Ok
        );
        assert!(ff_last_error().is_null());
        ff_store_free(store);
    }
}

#[test]
fn costs() {
    let mem = [2048u64, 512, 8192];
    let billed = [1.5, 4.0, 0.25];
    let usd = unsafe { ff_gbsec_cost(mem.as_ptr(), billed.as_ptr(), 3, 0.0000166667) };
    let hand = (2.0 * 1.5 + 0.5 * 4.0 + 8.0 * 0.25) * 0.0000166667;
    assert!((usd - hand).abs() <= 1e-12 * hand);
    assert_eq!(unsafe { ff_gbsec_cost(ptr::null(), ptr::null(), 0, 1.0) }, 0.0);
    let sel = ff_select_cost((32.2 * (1u64 << 30) as f64) as u64, 0.002);
    assert_eq!(format!("{sel:.4}"), "0.0644");
}

#[test]
fn pipeline_runs_from_config_text() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap();
    let mut x = 0x9e3779b97f4a7c15u64;
    let genome: String = (0..600)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            b"ACGT"[(x >> 33) as usize % 4] as char
        })
        .collect();
    let mut fastq = String::new();
    for (n, start) in [10usize, 10, 200, 200, 350].iter().enumerate() {
        let mut read = genome[*start..start + 30].to_string();
        if n < 2 {
            read.replace_range(5..6, if &read[5..6] == "A" { "C" } else { "A" });
        }
        fastq.push_str(&format!("@r{n}\n{read}\n+\n{}\n", "I".repeat(30)));
    }
    unsafe {
        let store = ff_store_open(c(root).as_ptr());
        let g = format!(">chr1\n{genome}\n");
        ff_store_put(store, c("data").as_ptr(), c("genome.fa").as_ptr(), g.as_ptr(), g.len());
        ff_store_put(
            store,
            c("data").as_ptr(),
            c("reads.fq").as_ptr(),
            fastq.as_ptr(),
            fastq.len(),
        );
        ff_store_free(store);

        let config = c(&format!("store.root = {root}\npartition.fasta_chunk_bases = 200\n"));
        let mut summary: FfRunSummary = std::mem::zeroed();
        assert_eq!(
            ff_run_pipeline(config.as_ptr(), &mut summary),
            FfStatus::Ok,
            "{}",
            last_error()
        );
        assert_eq!(summary.align_tasks, 3);
        let key = CStr::from_ptr(summary.output_key).to_str().unwrap().to_string();
        ff_string_free(summary.output_key);
        let calls = std::fs::read_to_string(Path::new(root).join("data").join(&key)).unwrap();
        assert_eq!(calls.lines().count(), 1, "{calls}");
        assert!(calls.starts_with("chr1\t16\t"), "{calls}");

        let broken = c(&format!("store.root = {root}\ninput.fastq = nope.fq\n"));
        assert_eq!(ff_run_pipeline(broken.as_ptr(), &mut summary), FfStatus::NotFound);
        let bad_key = c("no.such.key = 1\n");
        assert_eq!(ff_run_pipeline(bad_key.as_ptr(), &mut summary), FfStatus::Config);
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libfaasflow_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("cc not available");
    assert!(status.success());
    let run = Command::new(&exe).arg(dir.path().join("store")).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout), "ok\n");
}
