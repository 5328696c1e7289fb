//! HTTP client integration tests against a minimal in-process server that
//! speaks just enough HTTP/1.1 for the three wire contracts.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use datg_core::backends::{
    AttributeClassifier, BiasMap, Embedder, GenerationConfig, Generator, HttpClassifier,
    HttpClientConfig, HttpEmbedder, HttpGenerator,
};
use datg_core::errors::Error;

/// Serve `hits` requests on an ephemeral port, answering each POST with the
/// handler's (status, body). Returns the bound address.
fn serve(hits: usize, handler: fn(&str, &serde_json::Value) -> (u16, String)) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind ephemeral port");
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        for _ in 0..hits {
            let Ok((stream, _)) = listener.accept() else {
                return;
            };
            handle_connection(stream, handler);
        }
    });
    format!("http://{addr}")
}

fn handle_connection(stream: TcpStream, handler: fn(&str, &serde_json::Value) -> (u16, String)) {
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() {
        return;
    }
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("/")
        .to_string();

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty() {
            break;
        }
        if let Some(value) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = value.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let parsed: serde_json::Value =
        serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);

    let (status, response_body) = handler(&path, &parsed);
    let reason = if status == 200 { "OK" } else { "Error" };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{response_body}",
        response_body.len()
    );
    let mut stream = reader.into_inner();
    let _ = stream.write_all(response.as_bytes());
}

#[test]
fn classifier_round_trip() {
    let base = serve(1, |path, body| {
        assert_eq!(path, "/classify");
        let text = body["text"].as_str().unwrap();
        (
            200,
            format!(
                "{{\"score\": {}}}",
                if text.contains("kind") { 0.9 } else { 0.2 }
            ),
        )
    });
    let client = HttpClassifier::new(format!("{base}/classify"), &HttpClientConfig::default());
    let score = client.classify("kind words").unwrap();
    assert!((score - 0.9).abs() < 1e-12);
}

#[test]
fn classifier_rejects_out_of_range_scores() {
    let base = serve(1, |_, _| (200, "{\"score\": 1.5}".to_string()));
    let client = HttpClassifier::new(format!("{base}/classify"), &HttpClientConfig::default());
    assert!(matches!(
        client.classify("x"),
        Err(Error::BadResponse { .. })
    ));
}

#[test]
fn classifier_maps_http_errors() {
    let base = serve(1, |_, _| (500, "{}".to_string()));
    let client = HttpClassifier::new(format!("{base}/classify"), &HttpClientConfig::default());
    assert!(matches!(
        client.classify("x"),
        Err(Error::BadResponse { .. })
    ));
}

#[test]
fn unreachable_server_is_reported_as_such() {
    // Port 1 on localhost refuses connections.
    let client = HttpClassifier::new("http://127.0.0.1:1/classify", &HttpClientConfig::default());
    assert!(matches!(
        client.classify("x"),
        Err(Error::BackendUnreachable { .. })
    ));
}

#[test]
fn embedder_round_trip_and_dimension_check() {
    let base = serve(2, |path, _| {
        assert_eq!(path, "/embed");
        (200, "{\"vector\": [0.6, 0.8]}".to_string())
    });
    let url = format!("{base}/embed");
    let ok = HttpEmbedder::new(url.clone(), &HttpClientConfig::default());
    assert_eq!(ok.embed("hi").unwrap(), vec![0.6, 0.8]);

    let strict = HttpEmbedder::new(url, &HttpClientConfig::default()).with_expected_dimension(256);
    assert!(matches!(strict.embed("hi"), Err(Error::BadResponse { .. })));
}

#[test]
fn generator_sends_openai_fields_and_reads_choices() {
    let base = serve(1, |path, body| {
        assert_eq!(path, "/v1/completions");
        assert_eq!(body["prompt"], "the dog");
        assert_eq!(body["max_tokens"], 32);
        assert_eq!(body["temperature"], 0.7);
        assert_eq!(body["top_p"], 0.9);
        assert_eq!(body["n"], 1);
        assert_eq!(body["seed"], 7);
        assert_eq!(body["model"], "demo-model");
        // Bias keys travel as token-id strings.
        assert_eq!(body["logit_bias"]["3"], -6.0);
        assert_eq!(body["logit_bias"]["11"], 4.0);
        (
            200,
            "{\"choices\": [{\"text\": \" ran home\"}]}".to_string(),
        )
    });
    let client = HttpGenerator::new(
        format!("{base}/v1/completions"),
        &HttpClientConfig::default(),
    )
    .with_model("demo-model");
    let mut bias = BiasMap::new();
    bias.insert(3, -6.0);
    bias.insert(11, 4.0);
    let config = GenerationConfig {
        seed: 7,
        ..Default::default()
    };
    let outputs = client.generate("the dog", &config, Some(&bias)).unwrap();
    assert_eq!(outputs, vec![" ran home".to_string()]);
}

#[test]
fn generator_without_bias_omits_the_field() {
    let base = serve(1, |_, body| {
        assert!(
            body.get("logit_bias").is_none(),
            "logit_bias should be omitted: {body}"
        );
        (200, "{\"choices\": [{\"text\": \"ok\"}]}".to_string())
    });
    let client = HttpGenerator::new(
        format!("{base}/v1/completions"),
        &HttpClientConfig::default(),
    );
    client
        .generate("the dog", &GenerationConfig::default(), None)
        .unwrap();
}

#[test]
fn generator_rejects_empty_choice_lists() {
    let base = serve(1, |_, _| (200, "{\"choices\": []}".to_string()));
    let client = HttpGenerator::new(
        format!("{base}/v1/completions"),
        &HttpClientConfig::default(),
    );
    assert!(matches!(
        client.generate("x", &GenerationConfig::default(), None),
        Err(Error::BadResponse { .. })
    ));
}

#[test]
fn concurrent_classification_respects_the_client_limit() {
    // The server answers every request; the limiter on the client side keeps
    // at most two in flight, which this test exercises for deadlock freedom.
    let base = serve(8, |_, _| (200, "{\"score\": 0.5}".to_string()));
    let client = std::sync::Arc::new(HttpClassifier::new(
        format!("{base}/classify"),
        &HttpClientConfig {
            max_in_flight: 2,
            timeout_seconds: 10,
        },
    ));
    thread::scope(|scope| {
        for _ in 0..8 {
            let client = client.clone();
            scope.spawn(move || {
                let score = client.classify("text").unwrap();
                assert!((score - 0.5).abs() < 1e-12);
            });
        }
    });
}
