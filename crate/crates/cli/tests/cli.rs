use std::path::Path;
use std::process::{Command, Output};

use mvinpaint::io;
use mvinpaint::scene::View;
use mvinpaint::schedule::InpaintPlan;
use mvinpaint_testkit::scenes::{box_over_plane, occluder_scene, raycast_view, rng};

fn mvinpaint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvinpaint"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a 4-view box scene and returns its manifest path.
fn write_box_scene(dir: &Path) -> std::path::PathBuf {
    let scene = box_over_plane(4, 24, 24);
    let views: Vec<View> = (0..4)
        .map(|i| {
            let (image, depth) = scene.image_and_depth(i);
            let mut v = View::new(image, scene.mask(i)).unwrap();
            v.camera = Some(scene.cameras[i].clone());
            v.depth = Some(depth);
            v
        })
        .collect();
    io::write_scene(dir, &views).unwrap();
    dir.join("manifest.json")
}

#[test]
fn missing_camera_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_box_scene(&dir.path().join("scene"));
    let view = manifest.parent().unwrap().join("view_000");
    let out = mvinpaint(&[
        "mesh",
        "--depth",
        s(&view.join("depth.pfm")),
        "--camera",
        s(&dir.path().join("absent.json")),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("camera: file not found"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn bad_arguments_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_box_scene(dir.path());
    let (plan_out, run_out) = (dir.path().join("p.json"), dir.path().join("r"));
    let cases: [&[&str]; 4] = [
        &[
            "cues",
            "--scene",
            s(&manifest),
            "--target",
            "9",
            "--out",
            s(dir.path()),
        ],
        &[
            "plan",
            "--scene",
            s(&manifest),
            "--m",
            "7",
            "--out",
            s(&plan_out),
        ],
        &[
            "run",
            "--scene",
            s(&manifest),
            "--estimator",
            "file",
            "--out",
            s(&run_out),
        ],
        &["frobnicate"],
    ];
    for args in cases {
        let out = mvinpaint(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn mesh_writes_geometry_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_box_scene(&dir.path().join("scene"));
    let view = manifest.parent().unwrap().join("view_001");
    let out_dir = dir.path().join("mesh");
    let out = mvinpaint(&[
        "mesh",
        "--depth",
        s(&view.join("depth.pfm")),
        "--camera",
        s(&view.join("camera.json")),
        "--image",
        s(&view.join("image.png")),
        "--out",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["mesh.obj", "shadow.obj", "silhouettes.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let prov: serde_json::Value =
        io::read_json(&out_dir.join("provenance.json"), "provenance").unwrap();
    assert!(prov["faces"].as_u64().unwrap() > 0);
    assert_eq!(
        prov["shadow_faces"],
        2 * prov["silhouette_edges"].as_u64().unwrap()
    );
}

#[test]
fn cues_cover_every_reference() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_box_scene(&dir.path().join("scene"));
    let out_dir = dir.path().join("cues");
    let out = mvinpaint(&[
        "cues",
        "--scene",
        s(&manifest),
        "--target",
        "1",
        "--refs",
        "0,3",
        "--out",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for r in ["0", "3"] {
        for f in [
            "color.png",
            "front.png",
            "back.png",
            "invdepth.pfm",
            "shadow.png",
            "meta.json",
        ] {
            assert!(out_dir.join(r).join(f).is_file(), "{r}/{f}");
        }
    }
    assert!(!out_dir.join("2").exists());
}

#[test]
fn planned_runs_follow_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_box_scene(&dir.path().join("scene"));
    let plan_path = dir.path().join("plan.json");
    let out = mvinpaint(&[
        "plan",
        "--scene",
        s(&manifest),
        "--start",
        "2",
        "--m",
        "3",
        "--out",
        s(&plan_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let plan: InpaintPlan = io::read_json(&plan_path, "plan").unwrap();
    assert_eq!(plan.stage1[0], 2);
    assert_eq!(plan.stage1.len(), 3);

    let run_dir = dir.path().join("run");
    let out = mvinpaint(&[
        "run",
        "--scene",
        s(&manifest),
        "--plan",
        s(&plan_path),
        "--timings",
        "--out",
        s(&run_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = io::read_json(&run_dir.join("report.json"), "report").unwrap();
    assert_eq!(report["start"], 2);
    assert_eq!(report["events"].as_array().unwrap().len(), 4);
    assert!(report["timings_ms"].is_object());
    let views = io::read_scene(&run_dir.join("manifest.json")).unwrap();
    assert!(views.iter().all(|v| v.inpainted));
}

#[test]
fn synth_writes_numbered_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (images, depths) = (dir.path().join("images"), dir.path().join("depths"));
    let scene = occluder_scene(&mut rng(3), 32, 32);
    let (image, depth) = raycast_view(&scene.truth, &scene.reference, 32, 32);
    io::write_rgb(&images.join("a.png"), &image).unwrap();
    io::write_depth(&depths.join("a.pfm"), &depth).unwrap();
    let out_dir = dir.path().join("out");
    let out = mvinpaint(&[
        "synth",
        "--images",
        s(&images),
        "--depths",
        s(&depths),
        "--n",
        "3",
        "--mode",
        "scene",
        "--out",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for i in 0..3 {
        let sample = out_dir.join(format!("sample_{i:05}"));
        for f in [
            "image.png",
            "mask.png",
            "reference.png",
            "gt_cf.png",
            "provenance.json",
        ] {
            assert!(sample.join(f).is_file(), "{i}/{f}");
        }
    }
    let cfg: serde_json::Value = io::read_json(&out_dir.join("config.json"), "config").unwrap();
    assert_eq!(cfg["mode"], "scene");
}
