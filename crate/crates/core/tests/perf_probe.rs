//! Rough throughput probe for the conv kernel; run explicitly with
//! `cargo test --release --test perf_probe -- --ignored --nocapture`.

use std::time::Instant;

use steerfuse::nn::{conv2d_backward, conv2d_forward};
use steerfuse::Tensor;

fn bench_layer(c: usize, h: usize, w: usize, m: usize, kh: usize, kw: usize, s: (usize, usize)) {
    let input = Tensor::<f32>::new(vec![c, h, w], vec![0.5; c * h * w]).unwrap();
    let weights = Tensor::<f32>::new(vec![m, c, kh, kw], vec![0.1; m * c * kh * kw]).unwrap();
    let bias = Tensor::<f32>::zeros(vec![m]);
    let out = conv2d_forward(&input, &weights, &bias, s).unwrap();
    let (oh, ow) = (out.shape()[1], out.shape()[2]);
    let macs = (m * oh * ow * c * kh * kw) as f64;

    let reps = (2e9 / macs).clamp(3.0, 2000.0) as usize;
    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = conv2d_forward(&input, &weights, &bias, s).unwrap();
    }
    let fwd = t0.elapsed().as_secs_f64() / reps as f64;

    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = conv2d_backward(&out, &input, &weights, &bias, s).unwrap();
    }
    let bwd = t0.elapsed().as_secs_f64() / reps as f64;

    println!(
        "conv {c}x{h}x{w} -> {m}x{oh}x{ow} k{kh}x{kw} s{s:?}: fwd {:.2} GMAC/s ({:.3} ms), bwd {:.2} GMAC/s ({:.3} ms)",
        macs / fwd / 1e9,
        fwd * 1e3,
        2.0 * macs / bwd / 1e9,
        bwd * 1e3
    );
}

#[test]
#[ignore]
fn conv_throughput() {
    println!("--- full-resolution camera stack ---");
    bench_layer(3, 63, 306, 24, 5, 5, (2, 2));
    bench_layer(24, 30, 151, 36, 5, 5, (2, 2));
    bench_layer(36, 13, 74, 48, 5, 5, (2, 2));
    bench_layer(48, 5, 35, 64, 3, 3, (1, 1));
    bench_layer(64, 3, 33, 64, 3, 3, (1, 1));
    println!("--- full-resolution lidar stack ---");
    bench_layer(4, 11, 310, 24, 3, 5, (1, 2));
    bench_layer(24, 9, 153, 36, 3, 5, (1, 2));
    bench_layer(36, 7, 75, 48, 3, 5, (1, 2));
    println!("--- reduced stacks ---");
    bench_layer(3, 31, 153, 24, 5, 5, (2, 2));
    bench_layer(24, 14, 75, 36, 5, 5, (2, 2));
    bench_layer(36, 5, 36, 48, 5, 5, (2, 2));
    bench_layer(48, 1, 16, 64, 1, 3, (1, 1));
    bench_layer(4, 11, 155, 24, 3, 5, (2, 2));
    bench_layer(24, 5, 76, 36, 3, 5, (1, 2));
}
