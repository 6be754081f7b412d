use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn spider(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spider")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn count(svg: &roxmltree::Document, tag: &str, class: &str) -> usize {
    svg.descendants().filter(|n| n.has_tag_name(tag) && n.attribute("class") == Some(class)).count()
}

#[test]
fn euler_both_on_the_tripod() {
    let t = fixture("tripod.json");
    let v = json(&spider(&["euler", "--method", "both", t.to_str().unwrap()]));
    assert_eq!(v["schema"], "spider-report/1");
    let p = &v["payload"];
    assert_eq!((p["strata"].as_i64(), p["morse"].as_i64(), p["agree"].as_bool()), (Some(-4), Some(-4), Some(true)));
}

#[test]
fn lens_with_far_target_has_two_components() {
    let t = fixture("lens.json");
    let v = json(&spider(&["critical", "--potential", "sqdist", "--z", "9,9", t.to_str().unwrap()]));
    let comps = v["payload"]["components"].as_array().unwrap();
    assert_eq!(comps.len(), 2);
    let mut idx: Vec<i64> = comps.iter().map(|c| c["index"].as_i64().unwrap()).collect();
    idx.sort();
    assert_eq!(idx, [0, 2]);
    assert_eq!(v["payload"]["polynomial"], serde_json::json!([1, 0, 1]));
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"feet": [[0, 0]]}"#).unwrap();
    let out = spider(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("legs"));

    std::fs::write(&bad, r#"{"feet": [[0, 0]], "legs": [[1, 2]], "colour": "red"}"#).unwrap();
    assert_eq!(spider(&["validate", bad.to_str().unwrap()]).status.code(), Some(1));

    let t = fixture("lens.json");
    let out = spider(&["critical", t.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "sqdist without a target");
    assert!(spider(&["critical", "--potential", "cubic", t.to_str().unwrap()]).status.code() != Some(0));
}

#[test]
fn certified_mode_rejects_non_generic_targets() {
    let t = fixture("tripod.json");
    // the first foot is the Hooke centroid, so the target sits on a foot
    let args = ["critical", "--potential", "hooke", "--weights", "1,0,0", "--certified", t.to_str().unwrap()];
    assert_eq!(spider(&args).status.code(), Some(2));
    let v = json(&spider(&args[..args.len() - 2].iter().chain([t.to_str().unwrap()].iter()).copied().collect::<Vec<_>>()));
    assert_eq!(v["payload"]["certified"], false);
    assert!(!v["genericity"]["violations"].as_array().unwrap().is_empty());
}

#[test]
fn output_is_byte_identical_across_runs() {
    let t = fixture("voronoi_arc_and_circle.json");
    let args = ["critical", "--potential", "voronoi", "--morsify", "--seed", "3", t.to_str().unwrap()];
    let (a, b) = (spider(&args), spider(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let t = fixture("lens.json");
    let args = ["oracle", "verify", "--z", "9,9", "--starts", "40", "--seed", "7", t.to_str().unwrap()];
    let (a, b) = (spider(&args), spider(&args));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["payload"]["comparison"]["unmatched_numeric"], 0);
}

#[test]
fn workspace_svg_draws_every_stratum() {
    let dir = tempfile::tempdir().unwrap();
    let (svg, out) = (dir.path().join("w.svg"), dir.path().join("w.json"));
    let t = fixture("tripod.json");
    let o = spider(&["workspace", "--json", "--svg", svg.to_str().unwrap(), "--out", out.to_str().unwrap(), t.to_str().unwrap()]);
    assert!(o.status.success() && o.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let text = std::fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let ws = &v["payload"]["workspace"];
    let n = |k: &str| ws[k].as_array().unwrap().len();
    assert_eq!(count(&doc, "circle", "critical"), n("circles"));
    assert_eq!(count(&doc, "circle", "vertex"), n("vertices"));
    assert_eq!(count(&doc, "rect", "foot"), 3);
    assert!(count(&doc, "path", "cell1") >= n("arcs"));
    assert!(count(&doc, "path", "cell2") >= n("faces"));
}

#[test]
fn voronoi_overlay_matches_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("v.svg");
    let t = fixture("voronoi_arc_and_circle.json");
    let v = json(&spider(&["critical", "--potential", "voronoi", "--morsify", "--svg", svg.to_str().unwrap(), t.to_str().unwrap()]));
    let rep = &v["payload"]["report"];
    let text = std::fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let n = |v: &Value| v.as_array().unwrap().len();
    assert_eq!(count(&doc, "line", "overlay"), n(&rep["structure"]["edges"]));
    let plane = n(&rep["plane"]["minima"]) + n(&rep["plane"]["saddles"]) + n(&rep["plane"]["maxima"]);
    assert_eq!(count(&doc, "circle", "marked"), plane + n(&rep["components"]));
    assert_eq!(v["payload"]["euler"], -10);
}

#[test]
fn voronoi_plane_and_validate() {
    let t = fixture("tripod.json");
    let v = json(&spider(&["voronoi-plane", t.to_str().unwrap()]));
    let p = &v["payload"]["plane"];
    assert_eq!((p["minima"].as_array().unwrap().len(), p["saddles"].as_array().unwrap().len(), p["maxima"].as_array().unwrap().len()), (3, 3, 1));
    let v = json(&spider(&["validate", t.to_str().unwrap()]));
    assert_eq!(v["payload"]["dim"], 2);
    let v = json(&spider(&["morse-poly", "--z", "0,0", t.to_str().unwrap()]));
    assert_eq!(v["payload"]["polynomial"], serde_json::json!([8, 24, 12]));
}
