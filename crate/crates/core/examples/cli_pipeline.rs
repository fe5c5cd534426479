//! The command-line workflow driven in-process: synth, train, predict,
//! evaluate, analyze-ambiguity and plot.
//!
//! cargo run --release --example cli_pipeline -- [WORK_DIR]

use edm_pose::cli::main_with_args;

fn main() {
    let dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("edmpose-demo"));
    std::fs::create_dir_all(&dir).expect("work dir");
    let p = |f: &str| dir.join(f).display().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--n".into(), "600".into(), "--seed".into(), "3".into(), "--out".into(), p("data.jsonl")],
        vec![
            "train".into(), "--arch".into(), "fconn".into(), "--data".into(), p("data.jsonl"), "--epochs".into(), "60".into(),
            "--batch".into(), "64".into(), "--seed".into(), "1".into(), "--out-checkpoint".into(), p("fconn.ckpt"), "--log-every".into(), "20".into(),
        ],
        vec!["predict".into(), "--checkpoint".into(), p("fconn.ckpt"), "--data".into(), p("data.jsonl"), "--out".into(), p("pred.jsonl"), "--protocol".into(), "noise:5".into()],
        vec!["evaluate".into(), "--pred".into(), p("pred.jsonl"), "--gt".into(), p("data.jsonl"), "--protocol".into(), "noise:5".into(), "--out".into(), p("metrics.json")],
        vec!["analyze-ambiguity".into(), "--data".into(), p("data.jsonl"), "--pairs".into(), "1000".into(), "--seed".into(), "2".into(), "--out".into(), p("ambiguity.json")],
        vec!["plot".into(), "--metrics".into(), p("metrics.json"), "--out".into(), p("metrics.svg")],
    ];
    for args in steps {
        println!("$ edmpose {}", args.join(" "));
        let code = main_with_args(std::iter::once("edmpose".to_string()).chain(args));
        if code != 0 {
            std::process::exit(code);
        }
    }
    println!("{}", std::fs::read_to_string(p("metrics.json")).expect("metrics"));
}
