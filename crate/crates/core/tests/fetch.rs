use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use riskfuse::dataset::{fetch, load_all, parse_mfeat, sha256_hex, DataError, FeatureKind};

fn vendored() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mfeat")
}

/// Serves files from `root` over HTTP/1.1 until the process exits.
/// Returns the base URL and a request counter.
fn serve(root: PathBuf) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            loop {
                let mut header = String::new();
                if reader.read_line(&mut header).unwrap() == 0 || header == "\r\n" {
                    break;
                }
            }
            let name = request_line
                .split_whitespace()
                .nth(1)
                .unwrap_or("/")
                .rsplit('/')
                .next()
                .unwrap()
                .to_string();
            match fs::read(root.join(&name)) {
                Ok(body) => {
                    let head = format!(
                        "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                        body.len()
                    );
                    let _ = stream.write_all(head.as_bytes());
                    let _ = stream.write_all(&body);
                }
                Err(_) => {
                    let _ = stream.write_all(
                        b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n",
                    );
                }
            }
        }
    });
    (format!("http://{addr}/mfeat"), hits)
}

/// A base URL nothing listens on.
fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}/mfeat")
}

fn copy_vendored(to: &Path) {
    for entry in fs::read_dir(vendored()).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
    }
}

#[test]
fn http_download_fills_cache_and_index() {
    let (base, hits) = serve(vendored());
    let cache = tempfile::tempdir().unwrap();
    let text = fetch(FeatureKind::Morph, cache.path(), &base).unwrap();
    let expected = fs::read_to_string(vendored().join("mfeat-mor")).unwrap();
    assert_eq!(text, expected);
    assert_eq!(
        fs::read_to_string(cache.path().join("mfeat-mor")).unwrap(),
        expected
    );

    let index = fs::read_to_string(cache.path().join("index")).unwrap();
    let fields: Vec<&str> = index.split_whitespace().collect();
    assert_eq!(fields[0], "morph");
    assert_eq!(fields[1], format!("{base}/mfeat-mor"));
    assert_eq!(fields[2], expected.len().to_string());
    assert_eq!(fields[3], sha256_hex(expected.as_bytes()));

    let fs_ = parse_mfeat(FeatureKind::Morph, &text).unwrap();
    assert_eq!((fs_.rows(), fs_.dim()), (2000, 6));

    // second call is served from the cache
    let before = hits.load(Ordering::SeqCst);
    assert_eq!(
        fetch(FeatureKind::Morph, cache.path(), &dead_url()).unwrap(),
        expected
    );
    assert_eq!(hits.load(Ordering::SeqCst), before);
}

#[test]
fn file_url_and_plain_path() {
    let cache = tempfile::tempdir().unwrap();
    let url = format!("file://{}", vendored().canonicalize().unwrap().display());
    let a = fetch(FeatureKind::Zernike, cache.path(), &url).unwrap();
    let other = tempfile::tempdir().unwrap();
    let b = fetch(
        FeatureKind::Zernike,
        other.path(),
        vendored().to_str().unwrap(),
    )
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(parse_mfeat(FeatureKind::Zernike, &a).unwrap().dim(), 47);
}

#[test]
fn cold_cache_unreachable_host_leaves_nothing() {
    let cache = tempfile::tempdir().unwrap();
    let err = fetch(FeatureKind::Pixel, cache.path(), &dead_url()).unwrap_err();
    match &err {
        DataError::Fetch { file, .. } => assert_eq!(file, "mfeat-pix"),
        other => panic!("expected a fetch error, got {other:?}"),
    }
    assert!(err.to_string().contains("mfeat-pix"));
    let left: Vec<_> = fs::read_dir(cache.path()).unwrap().collect();
    assert!(left.is_empty(), "cache should stay empty, found {left:?}");
}

#[test]
fn missing_remote_file_is_a_fetch_error() {
    let empty = tempfile::tempdir().unwrap();
    let (base, _) = serve(empty.path().to_path_buf());
    let cache = tempfile::tempdir().unwrap();
    let err = fetch(FeatureKind::Kl, cache.path(), &base).unwrap_err();
    assert!(matches!(err, DataError::Fetch { .. }), "{err:?}");
    assert!(!cache.path().join("mfeat-kar").exists());
}

#[test]
fn tampered_cache_is_rejected() {
    let cache = tempfile::tempdir().unwrap();
    copy_vendored(cache.path());
    let path = cache.path().join("mfeat-fac");
    let mut text = fs::read_to_string(&path).unwrap();
    text.replace_range(3..4, if &text[3..4] == "9" { "8" } else { "9" });
    fs::write(&path, text).unwrap();
    let err = fetch(FeatureKind::Profiles, cache.path(), &dead_url()).unwrap_err();
    match err {
        DataError::Integrity { file, detail } => {
            assert_eq!(file, "mfeat-fac");
            assert!(detail.contains("sha256"), "{detail}");
        }
        other => panic!("expected an integrity error, got {other:?}"),
    }
    // untouched files still load
    assert!(fetch(FeatureKind::Fourier, cache.path(), &dead_url()).is_ok());
}

#[test]
fn concurrent_fetches_share_one_download() {
    let (base, hits) = serve(vendored());
    let cache = tempfile::tempdir().unwrap();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let dir = cache.path().to_path_buf();
            let base = base.clone();
            thread::spawn(move || fetch(FeatureKind::Kl, &dir, &base).unwrap())
        })
        .collect();
    let texts: Vec<String> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(texts.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    let index = fs::read_to_string(cache.path().join("index")).unwrap();
    assert_eq!(index.lines().count(), 1);
}

#[test]
fn vendored_cache_loads_all_sets() {
    let sets = load_all(&vendored(), &dead_url()).unwrap();
    let dims: Vec<(FeatureKind, usize, usize)> =
        sets.iter().map(|s| (s.kind, s.dim(), s.rows())).collect();
    assert_eq!(
        dims,
        FeatureKind::ALL
            .iter()
            .map(|&k| (k, k.expected_dim(), 2000))
            .collect::<Vec<_>>()
    );
}
