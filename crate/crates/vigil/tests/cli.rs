//! End-to-end tests of the `vigil` binary: every subcommand, its exit
//! codes, and the artifacts it writes.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture_path;

fn vigil(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vigil"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const IDENTITY: &str =
    "INPUTS\n    btn : u8 pin 1\nOUTPUTS\n    lamp : u8 pin 1\nLOGIC\n    lamp := btn\n";

#[test]
fn check_accepts_valid_and_rejects_with_row_codes() {
    let dir = tempdir();
    let good = write(&dir, "good.ckp", IDENTITY);
    let out = vigil(&["check", &good], &dir);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let bad = write(
        &dir,
        "bad.ckp",
        "STATE\n    a : u8\n    b : u8\n    x : u8\nLOGIC\n    IF a = 1 AND b = 1\n        x := 1\n",
    );
    let out = vigil(&["check", &bad], &dir);
    assert_eq!(code(&out), 1);
    assert!(
        stdout(&out).contains("ROW7 E_MULTI_COND"),
        "{}",
        stdout(&out)
    );

    let out = vigil(&["check", "no_such_file.ckp"], &dir);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("E_IO"), "{}", stderr(&out));
}

#[test]
fn build_is_deterministic_and_bootable() {
    let dir = tempdir();
    let src = write(&dir, "p.ckp", IDENTITY);
    let out = vigil(
        &[
            "build",
            &src,
            "-o",
            "p.cspimg",
            "--emit-listing",
            "--emit-hex",
        ],
        &dir,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.join("p.cspimg").exists());
    assert!(dir.join("p.a.lst").exists());
    assert!(dir.join("p.b.lst").exists());
    assert!(dir.join("p.hex").exists());

    let out2 = vigil(&["build", &src, "-o", "p2.cspimg"], &dir);
    assert_eq!(code(&out2), 0);
    let b1 = std::fs::read(dir.join("p.cspimg")).unwrap();
    let b2 = std::fs::read(dir.join("p2.cspimg")).unwrap();
    assert_eq!(b1, b2, "same source must build byte-identical images");

    // The image is accepted by the loader.
    let image = vigil::codegen::ProgramImage::from_bytes(&b1).unwrap();
    vigil::vm::bootload(&image, vigil::vm::BoardConfig::default()).unwrap();
}

#[test]
fn build_rename_hook_triggers_linker_mismatch() {
    let dir = tempdir();
    let src = write(&dir, "p.ckp", IDENTITY);
    let out = vigil(
        &[
            "build",
            &src,
            "-o",
            "p.cspimg",
            "--rename-for-b",
            "lamp=beacon",
        ],
        &dir,
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("E_NAME_MISMATCH"), "{}", stderr(&out));
}

#[test]
fn sim_exit_codes_and_trace_outputs() {
    let dir = tempdir();
    let src = write(&dir, "p.ckp", IDENTITY);
    assert_eq!(code(&vigil(&["build", &src, "-o", "p.cspimg"], &dir)), 0);
    let nominal = write(&dir, "ok.scn", "at 0 input 1 ON\nrun 50\n");
    let out = vigil(&["sim", "p.cspimg", &nominal], &dir);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("STATUS RUNNING"));

    let faulty = write(
        &dir,
        "fault.scn",
        "at 0 input 1 ON\nat 10 fault ram_data_flip mc1 a 0 2\nrun 50\n",
    );
    let out = vigil(&["sim", "p.cspimg", &faulty], &dir);
    assert_eq!(code(&out), 2);
    assert!(
        stdout(&out).contains("STATUS PANIC reason=DATA_MISMATCH cycle=10"),
        "{}",
        stdout(&out)
    );

    // JSON rendering.
    let out = vigil(
        &["--trace-format", "json", "sim", "p.cspimg", &nominal],
        &dir,
    );
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), 50);

    // A corrupted image file is refused at upload. Segment payloads sit
    // just before the trailing global CRC.
    let mut bytes = std::fs::read(dir.join("p.cspimg")).unwrap();
    let inside_data_b = bytes.len() - 6;
    bytes[inside_data_b] ^= 0x40;
    std::fs::write(dir.join("bad.cspimg"), &bytes).unwrap();
    let out = vigil(&["sim", "bad.cspimg", &nominal], &dir);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("E_UPLOAD_CRC"), "{}", stderr(&out));
}

#[test]
fn translate_relay_output_is_check_clean() {
    let dir = tempdir();
    let netlist = fixture_path("light_signal.rly");
    let out = vigil(
        &[
            "translate-relay",
            netlist.to_str().unwrap(),
            "-o",
            "sig.ckp",
        ],
        &dir,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = vigil(&["check", "sig.ckp"], &dir);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn translate_relay_warns_on_oscillating_circuit() {
    let dir = tempdir();
    let netlist = fixture_path("oscillator.rly");
    let out = vigil(
        &[
            "translate-relay",
            netlist.to_str().unwrap(),
            "-o",
            "osc.ckp",
            "--max-iter",
            "16",
        ],
        &dir,
    );
    assert_eq!(code(&out), 0, "source is still emitted");
    assert!(
        stderr(&out).contains("warning") && stderr(&out).contains("fail-safe"),
        "{}",
        stderr(&out)
    );
    assert!(dir.join("osc.ckp").exists());
    // Running it ends in the fail-safe panic.
    assert_eq!(
        code(&vigil(&["build", "osc.ckp", "-o", "osc.cspimg"], &dir)),
        0
    );
    let scn = write(&dir, "r.scn", "run 5\n");
    let out = vigil(&["sim", "osc.cspimg", &scn], &dir);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("VITAL_CODE"), "{}", stdout(&out));
}

#[test]
fn translate_sm_with_constants_and_pinmap() {
    let dir = tempdir();
    let csm = fixture_path("obstacle.csm");
    let pins = fixture_path("obstacle.pins");
    let out = vigil(
        &[
            "translate-sm",
            csm.to_str().unwrap(),
            "-o",
            "robot.ckp",
            "--cycle-unit",
            "100",
            "--const",
            "PI=20",
            "--const",
            "lv=1",
            "--const",
            "av=2",
            "--pinmap",
            pins.to_str().unwrap(),
        ],
        &dir,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(code(&vigil(&["check", "robot.ckp"], &dir)), 0);

    // Out-of-range constant valuations are rejected.
    let out = vigil(
        &[
            "translate-sm",
            csm.to_str().unwrap(),
            "--cycle-unit",
            "100",
            "--const",
            "PI=20",
            "--const",
            "lv=1",
            "--const",
            "av=8",
        ],
        &dir,
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("E_CONST_RANGE"), "{}", stderr(&out));
}

#[test]
fn modelcheck_counterexample_replays_through_sim() {
    let dir = tempdir();
    // Translate the broken circuit and model-check the exclusion property.
    let netlist = fixture_path("light_signal_broken.rly");
    assert_eq!(
        code(&vigil(
            &[
                "translate-relay",
                netlist.to_str().unwrap(),
                "-o",
                "broken.ckp",
                "--max-iter",
                "64"
            ],
            &dir
        )),
        0
    );
    let props = write(
        &dir,
        "p.prop",
        "exclusion: o_green = ON => (o_orange = OFF & o_red = OFF)\n",
    );
    let out = vigil(&["modelcheck", "broken.ckp", &props, "--depth", "6"], &dir);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(
        stdout(&out).contains("COUNTEREXAMPLE exclusion"),
        "{}",
        stdout(&out)
    );
    let cex = dir.join("cex_exclusion.scn");
    assert!(cex.exists());

    // The counterexample scenario drives the built image into the violating
    // output state.
    assert_eq!(
        code(&vigil(
            &["build", "broken.ckp", "-o", "broken.cspimg"],
            &dir
        )),
        0
    );
    let out = vigil(&["sim", "broken.cspimg", cex.to_str().unwrap()], &dir);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let last = text
        .lines()
        .rfind(|l| l.starts_with('C'))
        .expect("has cycles");
    // Outputs: green pin 1 (bit 0), orange pin 2 (bit 1): both on violates
    // the exclusion.
    let outmem = u32::from_str_radix(
        last.split("OUTMEM=")
            .nth(1)
            .unwrap()
            .split(' ')
            .next()
            .unwrap(),
        16,
    )
    .unwrap();
    assert_eq!(outmem & 0b11, 0b11, "green and orange both lit: {last}");
}

#[test]
fn modelcheck_verified_properties_exit_zero() {
    let dir = tempdir();
    let netlist = fixture_path("light_signal.rly");
    assert_eq!(
        code(&vigil(
            &[
                "translate-relay",
                netlist.to_str().unwrap(),
                "-o",
                "sig.ckp",
                "--max-iter",
                "64"
            ],
            &dir
        )),
        0
    );
    let props = fixture_path("light_signal.prop");
    let out = vigil(
        &[
            "--jobs",
            "2",
            "modelcheck",
            "sig.ckp",
            props.to_str().unwrap(),
            "--depth",
            "6",
        ],
        &dir,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("VERIFIED signal_exclusion"), "{text}");
    assert!(text.contains("VERIFIED red_follows_manual"), "{text}");
}

#[test]
fn config_file_presets_and_flag_precedence() {
    let dir = tempdir();
    let src = write(&dir, "p.ckp", IDENTITY);
    assert_eq!(code(&vigil(&["build", &src, "-o", "p.cspimg"], &dir)), 0);
    let scn = write(&dir, "s.scn", "run 3\n");
    write(&dir, "vigil.toml", "cycle_ms = 10\ntrace_format = json\n");

    // The file sets the cycle period and json tracing.
    let out = vigil(&["sim", "p.cspimg", &scn], &dir);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["records"][1]["ms"], 10);

    // Flags win over the file.
    let out = vigil(&["--cycle-ms", "2", "sim", "p.cspimg", &scn], &dir);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["records"][1]["ms"], 2);
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "vigil-cli-{}-{}",
        std::process::id(),
        rand::random::<u32>()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
