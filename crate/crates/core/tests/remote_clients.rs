//! Remote masker/outpainter clients against an in-process HTTP stub.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use remaster_core::codec;
use remaster_core::masking::{remote_mask, ClassicalMasker, FallbackMasker, Masker, RemoteMasker, SceneContext};
use remaster_core::outpainting::{
    remote_outpaint, ClassicalOutpainter, FallbackOutpainter, OutpaintRequest, Outpainter, RemoteOutpainter,
    DEFAULT_PROMPT,
};
use remaster_core::remote::ClientConfig;
use remaster_core::stitching::coarse_alignment;
use remaster_core::{Error, Frame, Mask, PixelRect, RgbImage};
use serde_json::{json, Value};

/// Reply for one request: status and JSON body.
type Handler = fn(&str, &Value) -> (u16, Value);

fn read_request(stream: &mut TcpStream) -> Option<(String, Value)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut len = 0usize;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some((path, serde_json::from_slice(&body).unwrap_or(Value::Null)))
}

/// Serves `handler` on an ephemeral port; returns the base URL.
fn serve(handler: Handler) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            thread::spawn(move || {
                let Some((path, body)) = read_request(&mut stream) else {
                    return;
                };
                let (status, reply) = handler(&path, &body);
                let text = reply.to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
            });
        }
    });
    format!("http://{addr}")
}

fn cfg(url: &str) -> ClientConfig {
    ClientConfig::new(url, Duration::from_secs(10))
}

fn frame() -> Frame {
    Frame::new(0, RgbImage::from_fn(12, 8, |x, y| [(x * 20) as u8, (y * 30) as u8, 7]))
}

fn decode_b64_png(v: &Value) -> RgbImage {
    codec::decode_rgb_png(&codec::from_base64(v.as_str().unwrap()).unwrap()).unwrap()
}

fn gray_png_b64(w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> String {
    let img = RgbImage::from_fn(w, h, |x, y| {
        let v = f(x, y);
        [v, v, v]
    });
    codec::to_base64(&codec::encode_rgb_png(&img).unwrap())
}

#[test]
fn mask_is_binarized_at_128() {
    let url = serve(|path, body| {
        assert_eq!(path, "/mask");
        let img = decode_b64_png(&body["image_png_b64"]);
        let (w, h) = img.dims();
        (
            200,
            json!({ "mask_png_b64": gray_png_b64(w, h, |x, _| if x < 4 { 127 } else if x < 8 { 128 } else { 255 }) }),
        )
    });
    let mask = remote_mask(&frame(), &RemoteMasker::new(cfg(&url))).unwrap();
    for y in 0..8 {
        for x in 0..12 {
            assert_eq!(mask.is_set(x, y), x >= 4, "({x}, {y})");
        }
    }
}

#[test]
fn mask_with_wrong_dimensions_is_rejected() {
    let url = serve(|_, _| (200, json!({ "mask_png_b64": gray_png_b64(5, 5, |_, _| 255) })));
    let err = remote_mask(&frame(), &RemoteMasker::new(cfg(&url))).unwrap_err();
    assert!(matches!(err, Error::RemoteMasker(_)), "{err}");
}

#[test]
fn non_200_is_a_remote_error() {
    let url = serve(|_, _| (503, json!({ "error": "busy" })));
    assert!(matches!(
        remote_mask(&frame(), &RemoteMasker::new(cfg(&url))),
        Err(Error::RemoteMasker(_))
    ));
    let req = request();
    assert!(matches!(
        remote_outpaint(&req, &RemoteOutpainter::new(cfg(&url))),
        Err(Error::RemoteOutpainter(_))
    ));
}

#[test]
fn unreachable_masker_falls_back_to_classical() {
    let frames: Vec<Frame> = (0..3).map(|i| Frame::new(i, frame().image)).collect();
    let alignment = coarse_alignment(&frames, &Default::default());
    let masker = FallbackMasker {
        primary: RemoteMasker::new(ClientConfig::new("http://127.0.0.1:9", Duration::from_secs(2))),
        fallback: ClassicalMasker::for_scene(&frames, &alignment, 25).unwrap(),
    };
    let ctx = SceneContext {
        frames: &frames,
        alignment: &alignment,
    };
    assert!(masker.mask(&frames[1], &ctx).unwrap().is_empty());
}

fn request() -> OutpaintRequest {
    let patch = RgbImage::from_fn(10, 6, |x, y| [(x * 25) as u8, (y * 40) as u8, 99]);
    OutpaintRequest {
        mask: Mask::from_fn(10, 6, |x, _| x >= 7),
        patch,
        prompt: DEFAULT_PROMPT.into(),
        rect: PixelRect::new(0, 0, 10, 6),
    }
}

#[test]
fn outpaint_sends_prompt_and_restores_unmasked_pixels() {
    let url = serve(|path, body| {
        assert_eq!(path, "/outpaint");
        assert_eq!(body["prompt"], DEFAULT_PROMPT);
        let img = decode_b64_png(&body["image_png_b64"]);
        let (w, h) = img.dims();
        // A careless backend that repaints everything.
        let out = RgbImage::filled(w, h, [1, 2, 3]);
        (
            200,
            json!({ "image_png_b64": codec::to_base64(&codec::encode_rgb_png(&out).unwrap()) }),
        )
    });
    let req = request();
    let out = remote_outpaint(&req, &RemoteOutpainter::new(cfg(&url))).unwrap();
    for y in 0..6 {
        for x in 0..10 {
            let want = if x >= 7 { [1, 2, 3] } else { req.patch.get(x, y) };
            assert_eq!(out.get(x, y), want);
        }
    }
}

#[test]
fn outpaint_echo_round_trips_exactly() {
    let url = serve(|_, body| (200, json!({ "image_png_b64": body["image_png_b64"] })));
    let req = request();
    assert_eq!(
        remote_outpaint(&req, &RemoteOutpainter::new(cfg(&url))).unwrap(),
        req.patch
    );
}

#[test]
fn outpaint_with_wrong_dimensions_is_rejected() {
    let url = serve(|_, _| {
        let out = RgbImage::new(3, 3);
        (
            200,
            json!({ "image_png_b64": codec::to_base64(&codec::encode_rgb_png(&out).unwrap()) }),
        )
    });
    let req = request();
    let remote = RemoteOutpainter::new(cfg(&url));
    assert!(matches!(
        remote_outpaint(&req, &remote),
        Err(Error::RemoteOutpainter(_))
    ));
    let fallback = FallbackOutpainter {
        primary: remote,
        fallback: ClassicalOutpainter,
    };
    let out = fallback.outpaint(&req).unwrap();
    assert_eq!(out.dims(), (10, 6));
}

#[test]
fn malformed_json_is_a_remote_error() {
    let url = serve(|_, _| (200, json!({ "unexpected": true })));
    assert!(matches!(
        remote_mask(&frame(), &RemoteMasker::new(cfg(&url))),
        Err(Error::RemoteMasker(_))
    ));
}
