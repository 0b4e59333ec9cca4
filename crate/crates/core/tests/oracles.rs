//! Implementations checked against independent, deliberately naive
//! re-derivations.
#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rlse_core::mask::{
    kmeans_binary, kmeans_init, majority_vote, nearest_cluster, Codebook, IbmVector, KMeansConfig,
};
use rlse_core::nn::{mse_loss, train, Activation, Layer, Network, TrainConfig};

fn bits(v: &IbmVector) -> Vec<u8> {
    v.iter().map(u8::from).collect()
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Lloyd iteration on plain byte vectors, starting from the given centroids.
fn reference_lloyd(samples: &[Vec<u8>], mut centroids: Vec<Vec<u8>>, max_iter: usize) -> (Vec<Vec<u8>>, usize) {
    let k = centroids.len();
    let dim = samples[0].len();
    let mut assign: Option<Vec<usize>> = None;
    for _ in 0..max_iter {
        let mut new_assign = Vec::new();
        let mut dists = Vec::new();
        for s in samples {
            let mut best = 0;
            for c in 1..k {
                if hamming(s, &centroids[c]) < hamming(s, &centroids[best]) {
                    best = c;
                }
            }
            new_assign.push(best);
            dists.push(hamming(s, &centroids[best]));
        }
        if assign.as_ref() == Some(&new_assign) {
            return (centroids, dists.iter().sum());
        }
        let mut far: Vec<usize> = (0..samples.len()).collect();
        far.sort_by(|&a, &b| dists[b].cmp(&dists[a]).then(a.cmp(&b)));
        let mut far = far.into_iter();
        for c in 0..k {
            let members: Vec<&Vec<u8>> = samples
                .iter()
                .zip(&new_assign)
                .filter(|(_, &a)| a == c)
                .map(|(s, _)| s)
                .collect();
            if members.is_empty() {
                if let Some(i) = far.next() {
                    centroids[c] = samples[i].clone();
                }
                continue;
            }
            for d in 0..dim {
                let ones = members.iter().filter(|m| m[d] == 1).count();
                centroids[c][d] = u8::from(2 * ones >= members.len());
            }
        }
        assign = Some(new_assign);
    }
    let objective = samples
        .iter()
        .map(|s| centroids.iter().map(|c| hamming(s, c)).min().unwrap())
        .sum();
    (centroids, objective)
}

#[test]
fn kmeans_matches_reference_lloyd() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let samples: Vec<IbmVector> = (0..200)
            .map(|_| IbmVector::from_bools(&(0..8).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>()))
            .collect();
        let cfg = KMeansConfig {
            clusters: 4,
            seed,
            max_iter: 100,
        };
        let got = kmeans_binary(&samples, &cfg).unwrap();
        let raw: Vec<Vec<u8>> = samples.iter().map(bits).collect();
        let init: Vec<Vec<u8>> = kmeans_init(&samples, 4, seed).iter().map(bits).collect();
        let (centroids, objective) = reference_lloyd(&raw, init, 100);
        assert_eq!(got.objective(), objective, "seed {seed}");
        let got_centroids: Vec<Vec<u8>> = got.codebook.centroids().iter().map(bits).collect();
        assert_eq!(got_centroids, centroids, "seed {seed}");
    }
}

#[test]
fn single_cluster_example_is_exhaustive_optimum() {
    let samples: Vec<IbmVector> = [[1u8, 1, 0], [1, 0, 0], [1, 1, 1]]
        .iter()
        .map(|b| IbmVector::from_bits(b).unwrap())
        .collect();
    let raw: Vec<Vec<u8>> = samples.iter().map(bits).collect();
    let best = (0u8..8)
        .map(|m| vec![m & 1, m >> 1 & 1, m >> 2 & 1])
        .min_by_key(|c| raw.iter().map(|s| hamming(s, c)).sum::<usize>())
        .unwrap();
    assert_eq!(best, vec![1, 1, 0]);
    assert_eq!(bits(&majority_vote(&samples, 3)), best);
}

#[test]
fn nearest_cluster_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let centroids: Vec<IbmVector> = (0..16)
        .map(|_| IbmVector::from_bools(&(0..40).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>()))
        .collect();
    let cb = Codebook::new(centroids.clone(), 0, 0).unwrap();
    let raw: Vec<Vec<u8>> = centroids.iter().map(bits).collect();
    for _ in 0..500 {
        let v = IbmVector::from_bools(&(0..40).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>());
        let vb = bits(&v);
        let mut best = 0;
        for (i, c) in raw.iter().enumerate() {
            if hamming(&vb, c) < hamming(&vb, &raw[best]) {
                best = i;
            }
        }
        assert_eq!(nearest_cluster(&v, &cb).unwrap(), best);
    }
    // Equidistant from 1 and 2: the lower index wins.
    let tie = Codebook::new(
        vec![
            IbmVector::from_bits(&[1, 1, 1, 1]).unwrap(),
            IbmVector::from_bits(&[1, 0, 0, 0]).unwrap(),
            IbmVector::from_bits(&[0, 1, 0, 0]).unwrap(),
        ],
        0,
        0,
    )
    .unwrap();
    assert_eq!(tie.nearest(&IbmVector::from_bits(&[0, 0, 0, 0]).unwrap()).unwrap(), 1);
}

fn naive_forward(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for layer in net.layers() {
        let (n_in, n_out) = (layer.inputs(), layer.outputs());
        let mut z = vec![0.0; n_out];
        for o in 0..n_out {
            z[o] = layer.bias()[o];
            for i in 0..n_in {
                z[o] += layer.weights()[o * n_in + i] * a[i];
            }
        }
        a = match layer.activation() {
            Activation::Linear => z,
            Activation::Sigmoid => z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
            Activation::Softmax => {
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            }
        };
    }
    a
}

#[test]
fn forward_matches_naive_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (seed, act) in [Activation::Linear, Activation::Sigmoid, Activation::Softmax]
        .into_iter()
        .enumerate()
    {
        let net = Network::random(7, &[5, 3], 4, act, seed as u64).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let got = net.forward(&x).unwrap();
            for (g, w) in got.iter().zip(naive_forward(&net, &x)) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn mse_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let outs: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.gen()).collect()).collect();
    let tgts: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.gen()).collect()).collect();
    let mut direct = 0.0;
    for (o, t) in outs.iter().zip(&tgts) {
        for (a, b) in o.iter().zip(t) {
            direct += (a - b) * (a - b);
        }
    }
    direct /= 6.0;
    assert!((mse_loss(&outs, &tgts).unwrap() - direct).abs() < 1e-14);
}

#[test]
fn linear_least_squares_converges() {
    // y = W x + b exactly representable; optimum loss is zero.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w_true = [[0.5, -1.0, 0.25], [1.5, 0.0, -0.5]];
    let b_true = [0.1, -0.2];
    let xs: Vec<Vec<f64>> = (0..64)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let ys: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            (0..2)
                .map(|o| b_true[o] + (0..3).map(|i| w_true[o][i] * x[i]).sum::<f64>())
                .collect()
        })
        .collect();
    let layer = Layer::zeros(3, 2, Activation::Linear);
    let mut net = Network::new(vec![layer]).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 500,
        batch_size: 64,
        seed: 0,
    };
    let history = train(&mut net, &xs, &ys, &cfg).unwrap();
    assert!(history.windows(2).all(|w| w[1] <= w[0]), "loss not monotone");
    let final_loss = *history.last().unwrap();
    assert!(final_loss < 1e-4, "final loss {final_loss}");
    let l = &net.layers()[0];
    for o in 0..2 {
        assert!((l.bias()[o] - b_true[o]).abs() < 1e-2);
        for i in 0..3 {
            assert!((l.weights()[o * 3 + i] - w_true[o][i]).abs() < 1e-2);
        }
    }
}
