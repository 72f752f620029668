#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn run_cli<S: AsRef<str>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metabal"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("binary runs")
}

pub struct Service {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    handle: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl Service {
    pub async fn start() -> Service {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let handle = tokio::spawn(metabal::service::serve(listener, async {
            let _ = rx.await;
        }));
        Service {
            addr,
            stop: Some(tx),
            handle: Some(handle),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub async fn post(&self, path: &str, body: &str) -> (u16, Vec<u8>) {
        let resp = reqwest::Client::new()
            .post(self.url(path))
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.bytes().await.unwrap().to_vec())
    }

    pub async fn get(&self, path: &str) -> (u16, Vec<u8>) {
        let resp = reqwest::get(self.url(path)).await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.bytes().await.unwrap().to_vec())
    }

    pub async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.handle.take().unwrap().await.unwrap().unwrap();
    }
}

/// PM tau2 by scanning a grid: the grid point whose generalized Q is nearest k-1.
pub fn pm_grid(y: &[f64], se: &[f64], step: f64) -> f64 {
    let k = y.len() as f64;
    let gen_q = |t: f64| {
        let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s + t)).collect();
        let sw: f64 = w.iter().sum();
        let mu = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
        w.iter()
            .zip(y)
            .map(|(w, y)| w * (y - mu).powi(2))
            .sum::<f64>()
    };
    let mean = y.iter().sum::<f64>() / k;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let mut hi = var + se.iter().map(|s| s * s).fold(0.0, f64::max);
    while gen_q(hi) > k - 1.0 {
        hi *= 2.0;
    }
    let steps = (hi / step).ceil() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=steps {
        let t = i as f64 * step;
        let d = (gen_q(t) - (k - 1.0)).abs();
        if d < best.0 {
            best = (d, t);
        }
    }
    best.1
}

pub fn read_csv_studies(path: &Path) -> (Vec<f64>, Vec<f64>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut y = Vec::new();
    let mut se = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        y.push(f[1].parse().unwrap());
        se.push(f[2].parse().unwrap());
    }
    (y, se)
}

pub fn simulate_to(path: &Path, args: &[&str]) {
    let mut all = vec!["simulate".to_string()];
    all.extend(args.iter().map(|s| s.to_string()));
    all.push("--output".into());
    all.push(path.to_string_lossy().into_owned());
    let out = run_cli(&all);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub struct Case {
    pub name: &'static str,
    pub args: Vec<String>,
    pub endpoint: &'static str,
    pub body: String,
}

/// Twenty requests, each expressed once as CLI flags and once as a service body.
pub fn parity_corpus(dir: &Path) -> Vec<Case> {
    let pooled = dir.join("pooled.csv");
    simulate_to(
        &pooled,
        &[
            "--model", "additive", "--tau2", "0.2", "--k", "12", "--seed", "41",
        ],
    );
    let funnel = dir.join("funnel.json");
    simulate_to(
        &funnel,
        &[
            "--model",
            "egger_multiplicative",
            "--beta0",
            "1.5",
            "--phi",
            "2",
            "--k",
            "30",
            "--seed",
            "7",
            "--format",
            "json",
        ],
    );
    let sized = dir.join("sized.csv");
    let mut text = String::from("id,y,se,n\n");
    for i in 0..15 {
        let n = 20.0 + 37.0 * i as f64;
        let se = 2.0 / f64::sqrt(n);
        let y = 0.3 + 4.0 / n + 0.1 * ((i * 7 % 5) as f64 - 2.0) * se;
        text.push_str(&format!("t{i},{y:?},{se:?},{n:?}\n"));
    }
    std::fs::write(&sized, text).unwrap();
    let variants = dir.join("variants.csv");
    simulate_to(
        &variants,
        &[
            "--mr",
            "--beta0",
            "0.1",
            "--sigma2-beta0",
            "0.25",
            "--mu",
            "0.5",
            "--k",
            "40",
            "--seed",
            "3",
        ],
    );

    let file =
        |p: &Path, format: &str| json!({"file": {"path": p.to_string_lossy(), "format": format}});
    let analysis = |name: &'static str,
                    sub: &str,
                    endpoint: &'static str,
                    p: &Path,
                    format: &str,
                    model: &str,
                    flags: &[&str],
                    options: Value| {
        let mut args: Vec<String> = vec![
            sub.into(),
            "--input".into(),
            p.to_string_lossy().into_owned(),
            "--format".into(),
            format.into(),
            "--model".into(),
            model.into(),
            "--out".into(),
            "json".into(),
        ];
        args.extend(flags.iter().map(|s| s.to_string()));
        let body =
            json!({"dataset": file(p, format), "model": model, "options": options}).to_string();
        Case {
            name,
            args,
            endpoint,
            body,
        }
    };
    let mr = |name: &'static str, method: &str, flags: &[&str], options: Value| {
        let mut args: Vec<String> = vec![
            "mr-analyze".into(),
            "--input".into(),
            variants.to_string_lossy().into_owned(),
            "--method".into(),
            method.into(),
            "--out".into(),
            "json".into(),
        ];
        args.extend(flags.iter().map(|s| s.to_string()));
        let body = json!({"dataset": file(&variants, "csv"), "method": method, "options": options})
            .to_string();
        Case {
            name,
            args,
            endpoint: "/v1/mr",
            body,
        }
    };
    let none = json!({});
    vec![
        analysis(
            "fixed",
            "analyze",
            "/v1/analyze",
            &pooled,
            "csv",
            "fixed",
            &[],
            none.clone(),
        ),
        analysis(
            "additive default",
            "analyze",
            "/v1/analyze",
            &pooled,
            "csv",
            "re_additive",
            &[],
            none.clone(),
        ),
        analysis(
            "additive dl flag",
            "analyze",
            "/v1/analyze",
            &pooled,
            "csv",
            "re_additive",
            &["--tau2", "dl"],
            json!({"tau2_method": "dl"}),
        ),
        analysis(
            "pm",
            "analyze",
            "/v1/analyze",
            &pooled,
            "csv",
            "re_additive_pm",
            &[],
            none.clone(),
        ),
        analysis(
            "multiplicative",
            "analyze",
            "/v1/analyze",
            &pooled,
            "csv",
            "re_multiplicative",
            &[],
            none.clone(),
        ),
        analysis(
            "egger",
            "analyze",
            "/v1/analyze",
            &funnel,
            "json",
            "egger",
            &[],
            none.clone(),
        ),
        analysis(
            "egger g-estimation",
            "analyze",
            "/v1/analyze",
            &funnel,
            "json",
            "egger_gest",
            &[],
            none.clone(),
        ),
        analysis(
            "egger inv_n",
            "analyze",
            "/v1/analyze",
            &sized,
            "csv",
            "egger",
            &["--metric", "inv_n"],
            json!({"precision_metric": "inv_n"}),
        ),
        analysis(
            "fixed excluding",
            "analyze",
            "/v1/analyze",
            &pooled,
            "csv",
            "fixed",
            &["--exclude", "1,2"],
            json!({"exclude_ids": ["1", "2"]}),
        ),
        analysis(
            "pm 90%",
            "analyze",
            "/v1/analyze",
            &pooled,
            "csv",
            "re_additive_pm",
            &["--ci-level", "0.9"],
            json!({"ci_level": 0.9}),
        ),
        analysis(
            "fixed t reference",
            "analyze",
            "/v1/analyze",
            &pooled,
            "csv",
            "fixed",
            &["--reference", "t"],
            json!({"ci_reference": "student_t"}),
        ),
        analysis(
            "egger z reference",
            "analyze",
            "/v1/analyze",
            &funnel,
            "json",
            "egger",
            &["--reference", "z"],
            json!({"ci_reference": "normal"}),
        ),
        analysis(
            "ignored tau2 warning",
            "analyze",
            "/v1/analyze",
            &pooled,
            "csv",
            "fixed",
            &["--tau2", "pm"],
            json!({"tau2_method": "pm"}),
        ),
        analysis(
            "multiplicative json",
            "analyze",
            "/v1/analyze",
            &funnel,
            "json",
            "re_multiplicative",
            &[],
            none.clone(),
        ),
        analysis(
            "leave-one-out dl",
            "leave-one-out",
            "/v1/leave-one-out",
            &pooled,
            "csv",
            "re_additive_dl",
            &[],
            none.clone(),
        ),
        analysis(
            "leave-one-out excluding",
            "leave-one-out",
            "/v1/leave-one-out",
            &sized,
            "csv",
            "fixed",
            &["--exclude", "t3"],
            json!({"exclude_ids": ["t3"]}),
        ),
        analysis(
            "egger endpoint",
            "analyze",
            "/v1/egger",
            &funnel,
            "json",
            "egger_gest",
            &[],
            none.clone(),
        ),
        mr("ivw", "ivw", &[], none.clone()),
        mr("mr-egger", "egger", &[], none.clone()),
        mr(
            "mr-egger 99%",
            "egger",
            &["--ci-level", "0.99"],
            json!({"ci_level": 0.99}),
        ),
    ]
}
