use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rise_core::store::{NewRun, Store};
use rise_server::router;
use serde_json::Value;
use tower::ServiceExt;

fn fixture_csv(n: usize, single_group: bool, identical_groups: bool) -> String {
    let mut s = String::from("prob,label,gender,env\n");
    for i in 0..n {
        let y = (i % 3 == 0) as u8;
        let e = 0.45 * (((i * 37) % 101) as f64 / 101.0).sqrt();
        let p = if y == 1 { 1.0 - e } else { e };
        let g = if single_group {
            0
        } else if identical_groups {
            // pairs (2k, 2k+1) share prob and label
            (i % 2) as u8
        } else {
            ((i * 7) % 5 < 2) as u8
        };
        let (p, y) = if identical_groups {
            let j = i / 2;
            let y = (j % 3 == 0) as u8;
            let e = 0.45 * (((j * 37) % 101) as f64 / 101.0).sqrt();
            (if y == 1 { 1.0 - e } else { e }, y)
        } else {
            (p, y)
        };
        let env = if i % 4 == 0 { "rain" } else { "clear" };
        s.push_str(&format!("{p},{y},{g},{env}\n"));
    }
    s
}

fn new_run(id: &str) -> NewRun {
    NewRun {
        run_id: id.into(),
        dataset: "synthetic".into(),
        algorithm: "erm".into(),
        attributes: vec![],
    }
}

fn app_with(dir: &Path, runs: &[(&str, String)]) -> Router {
    let store = Store::create(dir).unwrap();
    for (id, csv) in runs {
        store.register_run(new_run(id), csv.as_bytes()).unwrap();
    }
    router(store, None)
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, body) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

fn multipart(fields: &[(&str, &str)], file: Option<&str>) -> Request<Body> {
    let boundary = "XBOUNDARYX";
    let mut body = String::new();
    for (k, v) in fields {
        body.push_str(&format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{k}\"\r\n\r\n{v}\r\n"));
    }
    if let Some(f) = file {
        body.push_str(&format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"p.csv\"\r\nContent-Type: text/csv\r\n\r\n{f}\r\n"
        ));
    }
    body.push_str(&format!("--{boundary}--\r\n"));
    Request::post("/api/v1/runs")
        .header("content-type", format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap()
}

#[tokio::test]
async fn empty_store_lists_no_runs() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[]);
    let (status, body) = get(&app, "/api/v1/runs").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::json!([]));
}

#[tokio::test]
async fn runs_are_ordered_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[("zeta", fixture_csv(50, false, false)), ("alpha", fixture_csv(40, false, false))]);
    let (status, body) = get(&app, "/api/v1/runs").await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = body.as_array().unwrap().iter().map(|r| r["run_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["alpha", "zeta"]);
    assert_eq!(body[0]["environments"], serde_json::json!(["clear", "rain"]));
    assert_eq!(body[0]["attribute_names"], serde_json::json!(["gender"]));
}

#[tokio::test]
async fn corrupt_store_is_a_structured_500() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[("a", fixture_csv(30, false, false))]);
    std::fs::write(dir.path().join("manifest.json"), "{ not json").unwrap();
    let (status, body) = get(&app, "/api/v1/runs").await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(body["code"], "store_corrupt");
    assert_eq!(body["status"], 500);
    assert!(body["message"].as_str().unwrap().contains("corrupt"));
}

#[tokio::test]
async fn curve_covers_the_full_selection() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[("run", fixture_csv(300, false, false))]);
    let (status, body) = get(&app, "/api/v1/curve?run=run&attribute=gender&env=all").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["report"]["n_total"], 300);
    assert_eq!(body["n_points_total"], 300);
    assert_eq!(body["points"].as_array().unwrap().len(), 300);
    assert_eq!(body["downsampled"], false);
    assert_eq!(body["knees"].as_array().unwrap().len(), 6);
    assert_eq!(body["report"]["precomputed_standard_metrics"], true);

    let (status, env_body) = get(&app, "/api/v1/curve?run=run&attribute=gender&env=rain").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(env_body["report"]["n_total"], 75);
}

#[tokio::test]
async fn payload_medians_recompute_from_points() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[("run", fixture_csv(121, false, false))]);
    let (_, body) = get(&app, "/api/v1/curve?run=run&attribute=gender").await;
    let pts = body["points"].as_array().unwrap();
    let mut res: Vec<f64> = pts.iter().map(|p| p["residual"].as_f64().unwrap()).collect();
    res.sort_by(f64::total_cmp);
    assert_eq!(body["medians"]["m_global"].as_f64().unwrap(), res[60]);
    // knee ranks refer to positions of included points
    for k in body["knees"].as_array().unwrap() {
        if k["detected"] == true && k["scope"] == "global" {
            let rank = k["rank"].as_f64().unwrap();
            let hit = pts.iter().find(|p| p["rank"].as_f64().unwrap() == rank).unwrap();
            assert_eq!(hit["residual"], k["residual"]);
        }
    }
}

#[tokio::test]
async fn large_curves_are_downsampled_but_indicators_are_not() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[("big", fixture_csv(12_000, false, false))]);
    let (_, curve) = get(&app, "/api/v1/curve?run=big&attribute=gender").await;
    let (_, report) = get(&app, "/api/v1/report?run=big&attribute=gender").await;
    assert_eq!(curve["points"].as_array().unwrap().len(), 5000);
    assert_eq!(curve["downsampled"], true);
    assert_eq!(curve["n_points_total"], 12_000);
    assert_eq!(curve["report"], report);
}

#[tokio::test]
async fn unknown_selection_parts_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[("run", fixture_csv(40, false, false))]);
    for (uri, code) in [
        ("/api/v1/curve?run=nope&attribute=gender", "unknown_run"),
        ("/api/v1/curve?run=run&attribute=age", "unknown_attribute"),
        ("/api/v1/report?run=run&attribute=gender&env=snow", "unknown_environment"),
    ] {
        let (status, body) = get(&app, uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["code"], code);
    }
}

#[tokio::test]
async fn single_group_selection_is_422() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[("one", fixture_csv(40, true, false))]);
    let (status, body) = get(&app, "/api/v1/curve?run=one&attribute=gender&env=all").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["reason"], "missing group 1");
}

#[tokio::test]
async fn bad_queries_are_400() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[("run", fixture_csv(40, false, false))]);
    let (status, body) = get(&app, "/api/v1/report?run=run").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "bad_request");
    let (status, _) = get(&app, "/api/v1/report?run=run&attribute=gender&threshold=1.5").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = get(&app, "/api/v1/nothing").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn reports_carry_six_indicators_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<(&str, String)> = ["a", "b", "c"].iter().map(|id| (*id, fixture_csv(90, false, false))).collect();
    let app = app_with(dir.path(), &runs);
    for id in ["a", "b", "c"] {
        let (status, body) = get(&app, &format!("/api/v1/report?run={id}&attribute=gender")).await;
        assert_eq!(status, StatusCode::OK);
        assert!(body["acc"].is_number());
        for k in ["dp", "md", "f_mean", "f_shift", "f_acc"] {
            assert!(body[k].get("value").is_some(), "{k}");
        }
        assert!(body.get("points").is_none());
    }
}

#[tokio::test]
async fn undefined_dp_is_null_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    // group 0 never predicted positive
    let mut csv = String::from("prob,label,gender,env\n");
    for i in 0..20 {
        csv.push_str(&format!("0.{},{},0,e\n", i % 4 + 1, i % 2));
        csv.push_str(&format!("0.{},{},1,e\n", i % 9 + 1, i % 2));
    }
    let app = app_with(dir.path(), &[("zero", csv)]);
    let (status, body) = get(&app, "/api/v1/report?run=zero&attribute=gender").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["dp"]["value"], Value::Null);
    assert_eq!(body["dp"]["reason"], "zero_base_rate");
}

#[tokio::test]
async fn identical_groups_obey_the_zero_law() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[("twin", fixture_csv(400, false, true))]);
    let (status, body) = get(&app, "/api/v1/report?run=twin&attribute=gender").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["f_mean"]["value"], 1.0);
    assert_eq!(body["f_shift"]["value"], 0.0);
    assert_eq!(body["f_acc"]["value"], 0.0);
}

#[tokio::test]
async fn repeated_reads_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[("run", fixture_csv(500, false, false))]);
    let uri = "/api/v1/curve?run=run&attribute=gender&env=clear";
    let (_, first) = call(&app, Request::get(uri).body(Body::empty()).unwrap()).await;
    let (_, second) = call(&app, Request::get(uri).body(Body::empty()).unwrap()).await;
    assert_eq!(first, second);
}

#[tokio::test]
async fn uploads_register_and_reject_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[]);
    let csv = fixture_csv(60, false, false);
    let fields = [("run_id", "up"), ("dataset", "d"), ("algorithm", "a"), ("attributes", "gender")];
    let (status, body) = call(&app, multipart(&fields, Some(&csv))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap()["run_id"], "up");

    let (_, runs) = get(&app, "/api/v1/runs").await;
    assert_eq!(runs.as_array().unwrap().len(), 1);
    let (status, _) = get(&app, "/api/v1/report?run=up&attribute=gender").await;
    assert_eq!(status, StatusCode::OK);

    let (status, body) = call(&app, multipart(&fields, Some(&csv))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap()["code"], "duplicate_run");
}

#[tokio::test]
async fn bad_prob_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[]);
    let mut lines: Vec<String> = fixture_csv(30, false, false).lines().map(String::from).collect();
    // line 1 is the header, so line 17 is the 16th data row
    lines[16] = "1.7,1,0,clear".into();
    let csv = lines.join("\n");
    let fields = [("run_id", "bad"), ("dataset", "d"), ("algorithm", "a")];
    let (status, body) = call(&app, multipart(&fields, Some(&csv))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(body["line"], 17);
    assert!(body["message"].as_str().unwrap().contains("line 17"));
    let (_, runs) = get(&app, "/api/v1/runs").await;
    assert_eq!(runs, serde_json::json!([]));
}

#[tokio::test]
async fn incomplete_uploads_are_400() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[]);
    let csv = fixture_csv(20, false, false);
    let (status, _) = call(&app, multipart(&[("run_id", "x"), ("dataset", "d"), ("algorithm", "a")], None)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, multipart(&[("run_id", "x"), ("algorithm", "a")], Some(&csv))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, multipart(&[("run_id", "../x"), ("dataset", "d"), ("algorithm", "a")], Some(&csv))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let fields = [("run_id", "x"), ("dataset", "d"), ("algorithm", "a"), ("attributes", "age")];
    let (status, _) = call(&app, multipart(&fields, Some(&csv))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn root_serves_placeholder_or_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[]);
    let (status, body) = call(&app, Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("/api/v1"));

    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>bundle</html>").unwrap();
    std::fs::write(ui.path().join("app.js"), "console.log(1)").unwrap();
    let app = router(Store::open(dir.path()).unwrap(), Some(ui.path().to_path_buf()));
    let (status, body) = call(&app, Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!((status, body.as_slice()), (StatusCode::OK, b"<html>bundle</html>".as_slice()));
    let (status, body) = call(&app, Request::get("/app.js").body(Body::empty()).unwrap()).await;
    assert_eq!((status, body.as_slice()), (StatusCode::OK, b"console.log(1)".as_slice()));
    let (status, _) = get(&app, "/api/v1/runs").await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn cors_headers_are_present() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(dir.path(), &[]);
    let resp = app
        .oneshot(
            Request::get("/api/v1/runs")
                .header("origin", "http://localhost:5173")
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}
