use std::fs;
use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tactigrasp::data::validate_file;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tactigrasp"))
}

fn run(root: &Path, args: &[&str]) -> Output {
    bin().arg("--root").arg(root).args(args).output().unwrap()
}

fn summary(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(stdout.lines().last().expect("summary line")).unwrap()
}

fn ok(root: &Path, args: &[&str]) -> Value {
    let out = run(root, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    summary(&out)
}

#[test]
fn missing_prerequisites_name_the_expected_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train-gen"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&dir.path().join("data").join("gp").display().to_string()), "{err}");
    assert_eq!(summary(&out)["ok"], json!(false));

    let out = run(dir.path(), &["eval"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&dir.path().join("models").join("generator.tgm").display().to_string()), "{err}");

    let out = run(dir.path(), &["bench", "--adapter", "trained"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("estimator.tgm"));
}

#[test]
fn collect_and_short_training_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for root in [a.path(), b.path()] {
        let s = ok(root, &["collect", "--object", "ink"]);
        assert_eq!((s["gp"].as_u64(), s["stab"].as_u64(), s["ga"].as_u64()), (Some(40), Some(24), Some(56)));
        ok(root, &["train-gen", "--epochs", "2"]);
        ok(root, &["train-est"]);
    }
    for rel in ["data/gp/ink_10000.tsv", "data/ga/ink_10119.tsv", "models/generator.tgm", "models/estimator.tgm", "models/threshold_report.tsv"] {
        let (x, y) = (fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap());
        assert!(x == y, "{rel} differs between runs");
    }
    let v = ok(a.path(), &["validate"]);
    assert_eq!(v["files"], json!(120));
}

#[test]
fn validate_rejects_a_corrupted_file_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["collect", "--object", "pill_box"]);
    let path = dir.path().join("data/stab/pill_box_10040.tsv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.remove(3);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = run(dir.path(), &["validate"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pill_box_10040.tsv") && err.contains("line 4"), "{err}");
}

#[test]
fn bench_without_models_uses_the_margin_grasp() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(dir.path(), &["bench", "--adapter", "none", "--object", "milk_bottle", "--noise", "off"]);
    assert_eq!(s["initial_grasp"], json!("margin"));
    let row = &s["objects"][0];
    // 1.5x capacity margin on the empty bottle leaves room for half its mass
    let none = row["none_g"].as_u64().unwrap() as f64;
    assert!((none - 80.0).abs() <= 2.0, "{row}");
    assert!(row["trained_g"].is_null());
    let file: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bench/summary.json")).unwrap()).unwrap();
    assert_eq!(file["objects"], s["objects"]);
}

struct Server {
    child: Child,
    socket: WebSocket<MaybeTlsStream<TcpStream>>,
}

impl Server {
    fn start(root: &Path) -> Self {
        let mut child = bin()
            .arg("--root")
            .arg(root)
            .args(["--noise", "on", "serve", "--port", "0", "--tick-ms", "1"])
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
        let url = line.trim().strip_prefix("listening on ").expect("listening line").to_string();
        let (socket, _) = tungstenite::connect(url).unwrap();
        Self { child, socket }
    }

    fn send(&mut self, v: Value) {
        self.socket.send(Message::text(v.to_string())).unwrap();
    }

    fn next(&mut self) -> Value {
        loop {
            if let Message::Text(t) = self.socket.read().unwrap() {
                return serde_json::from_str(&t).unwrap();
            }
        }
    }

    /// Read until `pred` matches, collecting every state seen on the way.
    fn until(&mut self, states: &mut Vec<Value>, mut pred: impl FnMut(&Value) -> bool) -> Value {
        let deadline = Instant::now() + Duration::from_secs(30);
        loop {
            assert!(Instant::now() < deadline, "timed out waiting for a message");
            let m = self.next();
            if m["type"] == "state" {
                states.push(m.clone());
            }
            if pred(&m) {
                return m;
            }
        }
    }
}

#[test]
fn teleop_session_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut srv = Server::start(dir.path());
    let mut states = Vec::new();

    let first = srv.until(&mut states, |m| m["type"] == "state");
    assert_eq!(first["taxels"].as_array().unwrap().len(), 32);

    srv.send(json!({"type": "cmd", "theta_target": 45}));
    assert_eq!(srv.until(&mut states, |m| m["type"] == "ack"), json!({"type": "ack", "seq": 1}));
    let a = srv.until(&mut states, |m| m["type"] == "state")["theta"].as_f64().unwrap();
    let b = srv.until(&mut states, |m| m["type"] == "state")["theta"].as_f64().unwrap();
    assert!(b > a && b <= 45.0, "θ should slew toward 45: {a} then {b}");

    srv.send(json!({"type": "bogus"}));
    let err = srv.until(&mut states, |m| m["type"] == "error");
    assert_eq!(err["seq"], json!(2));
    assert!(err["reason"].as_str().unwrap().contains("malformed"));

    srv.send(json!({"type": "disturb", "kind": "water", "magnitude": 10, "duration_s": 2}));
    srv.until(&mut states, |m| m["type"] == "ack" && m["seq"] == 3);
    // 10 g/s for 2 s: 320 ticks
    let full = srv.until(&mut states, |m| m["type"] == "state" && m["fill_g"].as_f64().unwrap() >= 20.0 - 1e-9);
    assert!((full["fill_g"].as_f64().unwrap() - 20.0).abs() < 1e-9);

    srv.send(json!({"type": "record", "action": "start", "scenario": "ga"}));
    let start_tick = srv.until(&mut states, |m| m["type"] == "ack" && m["seq"] == 4);
    assert!(start_tick.get("path").is_none());
    let began = states.len();
    let t0 = srv.until(&mut states, |m| m["type"] == "state")["t"].as_f64().unwrap();
    srv.until(&mut states, |m| m["type"] == "state" && m["t"].as_f64().unwrap() >= t0 + 200.0);
    srv.send(json!({"type": "record", "action": "stop"}));
    let stop = srv.until(&mut states, |m| m["type"] == "ack" && m["seq"] == 5);
    let path = stop["path"].as_str().unwrap().to_string();

    srv.socket.close(None).unwrap();
    while srv.socket.read().is_ok() {}
    let out = srv.child.wait_with_output().unwrap();
    assert!(out.status.success());

    let ep = validate_file(Path::new(&path)).unwrap();
    assert!(ep.frames.len() >= 200);
    // consecutive ticks at the full simulation rate
    for w in ep.frames.windows(2) {
        assert_eq!(w[1].t_tick, w[0].t_tick + 1);
    }
    // every state streamed while recording is one of the recorded frames
    let first_tick = ep.frames[0].t_tick;
    let last_tick = ep.frames.last().unwrap().t_tick;
    let mut matched = 0;
    for s in &states[began..] {
        let t = s["t"].as_f64().unwrap() as u64;
        if t < first_tick || t > last_tick {
            continue;
        }
        let f = &ep.frames[(t - first_tick) as usize];
        for (v, r) in s["taxels"].as_array().unwrap().iter().zip(&f.s) {
            let v = v.as_f64().unwrap();
            assert!((v - r).abs() <= 1e-8 * v.abs().max(1.0), "tick {t}: streamed {v} vs recorded {r}");
        }
        matched += 1;
    }
    assert!(matched > 0);
}
