//! Acceptance criteria. Prints one PASS/FAIL line per criterion; exits
//! non-zero on a failure only when `ZEROREC_ACCEPTANCE_STRICT` is set. A
//! numeric argument runs only that criterion.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use zerorec::clustering::{fit_clusters, kmeans, DistanceMetric, KMeansConfig};
use zerorec::dataset::{k_core_filter, split_per_user, Interaction, InteractionDataset, Split};
use zerorec::ensemble::{combine, tune_eta, Combo};
use zerorec::eval::{build_tasks, evaluate_scores, rank_metrics, score_tasks, train_mf_bpr, Metrics, MfBpr, MfBprConfig};
use zerorec::features::{activity_features, cooccurrence_features, interaction_features, FeatureTable, Similarity};
use zerorec::graph_embed::{edge_points, EdgeOp, EmbeddingTable};
use zerorec::model::{softplus, Activation, TwinTower};
use zerorec::pipeline::{self, BlendWith, EvaluateRequest, ExperimentConfig, Mode};
use zerorec::synth::{generate_rows, write_tsv, SynthSpec};
use zerorec::Exec;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

/// Rank of the positive, counting the candidates that beat it: a higher
/// score, or an equal score on a smaller item id.
fn wmw_auc(scores: &[f64], items: &[u32], pos: usize) -> (f64, usize) {
    let mut below = 0usize;
    let mut above = 0usize;
    for j in 0..scores.len() {
        if j == pos {
            continue;
        }
        let beats = scores[j] > scores[pos] || (scores[j] == scores[pos] && items[j] < items[pos]);
        if beats {
            above += 1;
        } else {
            below += 1;
        }
    }
    (below as f64 / (scores.len() - 1) as f64, above + 1)
}

fn criterion_1() -> Outcome {
    let mut r = rng(1);
    let mut worst = 0f64;
    for list in 0..1000 {
        let mut items: Vec<u32> = (0..1000).collect();
        items.shuffle(&mut r);
        items.truncate(100);
        let scores: Vec<f64> = if list % 2 == 0 {
            (0..100).map(|_| r.random::<f64>()).collect()
        } else {
            (0..100).map(|_| r.random_range(0..8) as f64).collect()
        };
        let pos = r.random_range(0..100);
        let m = rank_metrics(&scores, &items, pos).map_err(|e| e.to_string())?;
        let (auc, rank) = wmw_auc(&scores, &items, pos);
        let recall = if rank <= 10 { 1.0 } else { 0.0 };
        let ndcg = if rank <= 10 { 1.0 / ((rank + 1) as f64).log2() } else { 0.0 };
        worst = worst
            .max((m.auc - auc).abs())
            .max((m.recall_at_10 - recall).abs())
            .max((m.ndcg_at_10 - ndcg).abs());
    }
    let per: Vec<Metrics> = (0..10_000)
        .map(|_| {
            let items: Vec<u32> = (0..100).collect();
            let scores: Vec<f64> = (0..100).map(|_| r.random()).collect();
            rank_metrics(&scores, &items, 0).unwrap()
        })
        .collect();
    let mean = Metrics::mean(&per);
    check(
        worst <= 1e-12 && (0.49..=0.51).contains(&mean.auc) && (0.09..=0.11).contains(&mean.recall_at_10),
        format!(
            "max |metric - WMW oracle| = {worst:.1e}; random scorer AUC {:.4}, Recall@10 {:.4}",
            mean.auc, mean.recall_at_10
        ),
    )
}

// ---------------------------------------------------------------- 2

fn random_dataset(r: &mut ChaCha8Rng, max_nodes: usize) -> InteractionDataset {
    let n_users = r.random_range(3..=max_nodes / 2);
    let n_items = r.random_range(3..=max_nodes - n_users);
    let mut rows = Vec::new();
    for u in 0..n_users {
        let mut items: Vec<usize> = (0..n_items).collect();
        items.shuffle(r);
        let deg = r.random_range(2..=n_items.min(6));
        for &v in &items[..deg] {
            rows.push(Interaction {
                user: format!("u{u:02}"),
                item: format!("i{v:02}"),
                rating: None,
                timestamp: None,
            });
        }
    }
    let ds = InteractionDataset::from_interactions(&rows).unwrap();
    split_per_user(&ds, 0.7, 0.0, r.random()).unwrap()
}

/// Position of `i` when indices are ordered by `(value, key)`, mapped to one
/// of `k` equal-count bins.
fn rank_bin<K: Ord>(values: &[f64], keys: &[K], i: usize, k: usize) -> usize {
    let rank = (0..values.len())
        .filter(|&j| values[j] < values[i] || (values[j] == values[i] && keys[j] < keys[i]))
        .count();
    rank * k / values.len()
}

/// Size and density bin of every cluster, recomputed from the assignment.
fn cluster_bins(points: &[f64], dim: usize, centroids: &[Vec<f64>], assignment: &[u32], k: usize) -> (Vec<usize>, Vec<usize>) {
    let m = centroids.len();
    let mut sizes = vec![0f64; m];
    let mut dist = vec![0f64; m];
    for (i, &c) in assignment.iter().enumerate() {
        let x = &points[i * dim..(i + 1) * dim];
        let y = &centroids[c as usize];
        let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
        for d in 0..dim {
            dot += x[d] * y[d];
            nx += x[d] * x[d];
            ny += y[d] * y[d];
        }
        let cos = if x == y.as_slice() {
            0.0
        } else if nx == 0.0 || ny == 0.0 {
            1.0
        } else {
            (1.0 - dot / (nx.sqrt() * ny.sqrt())).clamp(0.0, 2.0)
        };
        sizes[c as usize] += 1.0;
        dist[c as usize] += cos;
    }
    let density: Vec<f64> = (0..m).map(|c| if sizes[c] == 0.0 { 0.0 } else { dist[c] / sizes[c] }).collect();
    let idx: Vec<usize> = (0..m).collect();
    (
        (0..m).map(|c| rank_bin(&sizes, &idx, c, k)).collect(),
        (0..m).map(|c| rank_bin(&density, &idx, c, k)).collect(),
    )
}

fn rows_of(t: &FeatureTable, users: bool) -> &[f64] {
    if users {
        &t.user_rows
    } else {
        &t.item_rows
    }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let mut count_mismatch = 0usize;
    let mut worst_sim = 0f64;
    let k = 3;
    for g in 0..100 {
        let ds = random_dataset(&mut r, 40);
        let (nu, ni) = (ds.n_users(), ds.n_items());
        let dim = 4;
        let vectors: Vec<f32> = (0..(nu + ni) * dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let emb = EmbeddingTable::new(dim, nu, ni, vectors).unwrap();
        let train: Vec<usize> = (0..ds.n_edges()).filter(|&e| ds.splits()[e] == Split::Train).collect();
        let pairs: Vec<(u32, u32)> = train.iter().map(|&e| ds.edges()[e]).collect();

        let fit = |points: &[f64], n: usize| {
            let cfg = KMeansConfig::new(n.min(4), g);
            fit_clusters(points, dim, &cfg, k, k, DistanceMetric::Cosine, Exec::Sequential).unwrap()
        };
        let (up, ip) = (emb.user_points(), emb.item_points());
        let ep = edge_points(&emb, &pairs, &EdgeOp::Hadamard).unwrap();
        let (uc, ic, ec) = (fit(&up, nu), fit(&ip, ni), fit(&ep, pairs.len()));

        let act = activity_features(&ds, k, Exec::Sequential).unwrap();
        let (co_s, co_d) = cooccurrence_features(&ds, &emb, &uc, &ic, Similarity::InverseEuclidean, Exec::Sequential).unwrap();
        let (int_s, int_d) = interaction_features(&ds, &ec, Exec::Sequential).unwrap();

        // activity: raw sums of the neighbors' degree-bin one-hots
        let mut deg_u = vec![0f64; nu];
        let mut deg_i = vec![0f64; ni];
        for &(u, v) in &pairs {
            deg_u[u as usize] += 1.0;
            deg_i[v as usize] += 1.0;
        }
        let mut act_u = vec![0f64; nu * k];
        let mut act_i = vec![0f64; ni * k];
        for &(u, v) in &pairs {
            act_u[u as usize * k + rank_bin(&deg_i, ds.item_ids(), v as usize, k)] += 1.0;
            act_i[v as usize * k + rank_bin(&deg_u, ds.user_ids(), u as usize, k)] += 1.0;
        }
        count_mismatch += (act.user_rows != act_u) as usize + (act.item_rows != act_i) as usize;

        // interaction: raw sums of the edge clusters' bin one-hots
        let (es, ed) = cluster_bins(&ep, dim, &ec.centroids, &ec.assignment, k);
        for (table, bins) in [(&int_s, &es), (&int_d, &ed)] {
            let mut ru = vec![0f64; nu * k];
            let mut ri = vec![0f64; ni * k];
            for (p, &(u, v)) in pairs.iter().enumerate() {
                let b = bins[ec.assignment[p] as usize];
                ru[u as usize * k + b] += 1.0;
                ri[v as usize * k + b] += 1.0;
            }
            count_mismatch += (table.user_rows != ru) as usize + (table.item_rows != ri) as usize;
        }

        // co-occurrence: per-bin mean similarity of neighbors to their centroid
        let sim = |x: &[f32], c: &[f64]| {
            let d: f64 = x.iter().zip(c).map(|(&a, &b)| (a as f64 - b).powi(2)).sum();
            1.0 / (1.0 + d.sqrt())
        };
        let (us, ud) = cluster_bins(&up, dim, &uc.centroids, &uc.assignment, k);
        let (is, id) = cluster_bins(&ip, dim, &ic.centroids, &ic.assignment, k);
        for (table, ubins, ibins) in [(&co_s, &us, &is), (&co_d, &ud, &id)] {
            for users in [true, false] {
                let n = if users { nu } else { ni };
                let mut expect = vec![0f64; n * k];
                for x in 0..n {
                    for b in 0..k {
                        let mut vals = Vec::new();
                        for &(u, v) in &pairs {
                            let (me, other) = if users { (u, v) } else { (v, u) };
                            if me as usize != x {
                                continue;
                            }
                            let (model, bins, vec) = if users {
                                (&ic, ibins, emb.item(other as usize))
                            } else {
                                (&uc, ubins, emb.user(other as usize))
                            };
                            let c = model.assignment[other as usize] as usize;
                            if bins[c] == b {
                                vals.push(sim(vec, &model.centroids[c]));
                            }
                        }
                        if !vals.is_empty() {
                            expect[x * k + b] = vals.iter().sum::<f64>() / vals.len() as f64;
                        }
                    }
                }
                let got = rows_of(table, users);
                if got.iter().zip(&expect).any(|(a, b)| (*a == 0.0) != (*b == 0.0)) {
                    count_mismatch += 1;
                }
                worst_sim = worst_sim.max(max_rel(got, &expect));
            }
        }
    }
    check(
        count_mismatch == 0 && worst_sim <= 1e-9,
        format!("100 graphs: {count_mismatch} count-table mismatches, max similarity rel. error {worst_sim:.1e}"),
    )
}

// ---------------------------------------------------------------- 3

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

fn param(t: &mut TwinTower, n_user: usize, i: usize) -> &mut f64 {
    if i < n_user {
        &mut t.user.params_mut()[i]
    } else {
        &mut t.item.params_mut()[i - n_user]
    }
}

fn tower_check(r: &mut ChaCha8Rng) -> f64 {
    let k = r.random_range(2..8);
    let hidden: Vec<usize> = (0..r.random_range(1..4)).map(|_| r.random_range(2..8)).collect();
    let act = if r.random_bool(0.7) { Activation::Tanh } else { Activation::Identity };
    let mut tower = TwinTower::new(k, &hidden, act, r.random_bool(0.5), r).unwrap();
    let rows: Vec<Vec<f64>> = (0..3 * r.random_range(1..5)).map(|_| (0..k).map(|_| r.random_range(0.0..3.0)).collect()).collect();
    let triples: Vec<_> = rows.chunks(3).map(|c| (c[0].as_slice(), c[1].as_slice(), c[2].as_slice())).collect();
    let loss = |t: &TwinTower| -> f64 { triples.iter().map(|&(u, p, n)| softplus(t.score(u, n) - t.score(u, p))).sum() };
    let n_user = tower.user.params().len();
    let mut analytic = vec![0.0; tower.n_params()];
    tower.bpr_sum_and_grad(&triples, &mut analytic);
    let h = 1e-6;
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..analytic.len() {
        let orig = *param(&mut tower, n_user, i);
        *param(&mut tower, n_user, i) = orig + h;
        let up = loss(&tower);
        *param(&mut tower, n_user, i) = orig - h;
        let down = loss(&tower);
        *param(&mut tower, n_user, i) = orig;
        numeric.push((up - down) / (2.0 * h));
    }
    rel_err(&analytic, &numeric)
}

fn mf_check(r: &mut ChaCha8Rng) -> f64 {
    let ds = random_dataset(r, 30);
    let cfg = MfBprConfig {
        dim: r.random_range(2..10),
        l2: r.random_range(0.0..0.1),
        init_scale: 0.5,
        seed: r.random(),
        ..MfBprConfig::default()
    };
    let mut mf = MfBpr::init(&ds, &cfg);
    let (nu, ni) = (ds.n_users() as u32, ds.n_items() as u32);
    let triples: Vec<(u32, u32, u32)> = (0..r.random_range(1..8))
        .map(|_| (r.random_range(0..nu), r.random_range(0..ni), r.random_range(0..ni)))
        .collect();
    let d = mf.dim;
    let loss = |m: &MfBpr| -> f64 {
        let row = |e: &[f64], i: u32| e[i as usize * d..(i as usize + 1) * d].to_vec();
        let total: f64 = triples
            .iter()
            .map(|&(u, p, n)| {
                let (pu, qp, qn) = (row(&m.user_emb, u), row(&m.item_emb, p), row(&m.item_emb, n));
                let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                let sq = |a: &[f64]| dot(a, a);
                softplus(dot(&pu, &qn) - dot(&pu, &qp)) + 0.5 * m.l2 * (sq(&pu) + sq(&qp) + sq(&qn))
            })
            .sum();
        total / triples.len() as f64
    };
    let mut gu = vec![0.0; mf.user_emb.len()];
    let mut gi = vec![0.0; mf.item_emb.len()];
    mf.loss_and_grad(&triples, &mut gu, &mut gi);
    let analytic: Vec<f64> = gu.into_iter().chain(gi).collect();
    let h = 1e-6;
    let mut numeric = Vec::new();
    for side in 0..2 {
        let n = if side == 0 { mf.user_emb.len() } else { mf.item_emb.len() };
        for i in 0..n {
            let v = if side == 0 { &mut mf.user_emb } else { &mut mf.item_emb };
            let orig = v[i];
            v[i] = orig + h;
            let up = loss(&mf);
            let v = if side == 0 { &mut mf.user_emb } else { &mut mf.item_emb };
            v[i] = orig - h;
            let down = loss(&mf);
            let v = if side == 0 { &mut mf.user_emb } else { &mut mf.item_emb };
            v[i] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    rel_err(&analytic, &numeric)
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let tower = (0..20).map(|_| tower_check(&mut r)).fold(0.0, f64::max);
    let mf = (0..20).map(|_| mf_check(&mut r)).fold(0.0, f64::max);
    check(
        tower < 1e-4 && mf < 1e-4,
        format!("20 configs each: max rel. error MLP+BPR {tower:.1e}, MF-BPR {mf:.1e}"),
    )
}

// ---------------------------------------------------------------- 4

/// Repeatedly delete every edge touching a node of degree below `k`.
fn kcore_oracle(edges: &[(u32, u32)], k: usize) -> Vec<(u32, u32)> {
    let mut cur: Vec<(u32, u32)> = Vec::new();
    for &e in edges {
        if !cur.contains(&e) {
            cur.push(e);
        }
    }
    loop {
        let mut du: BTreeMap<u32, usize> = BTreeMap::new();
        let mut dv: BTreeMap<u32, usize> = BTreeMap::new();
        for &(u, v) in &cur {
            *du.entry(u).or_default() += 1;
            *dv.entry(v).or_default() += 1;
        }
        let next: Vec<(u32, u32)> = cur.iter().copied().filter(|(u, v)| du[u] >= k && dv[v] >= k).collect();
        if next.len() == cur.len() {
            return cur;
        }
        cur = next;
    }
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let mut kcore_bad = 0;
    for _ in 0..200 {
        let n_users = r.random_range(1..25);
        let n_items = r.random_range(1..=50 - n_users);
        let n_edges = r.random_range(0..n_users * n_items + 1);
        let edges: Vec<(u32, u32)> = (0..n_edges)
            .map(|_| (r.random_range(0..n_users as u32), r.random_range(0..n_items as u32)))
            .collect();
        let k = r.random_range(1..5);
        let expect = kcore_oracle(&edges, k);
        let ok = match k_core_filter(&edges, k) {
            Ok(got) => got == expect,
            Err(_) => expect.is_empty(),
        };
        kcore_bad += !ok as usize;
    }
    let mut recovered = 0;
    for seed in 0..100u64 {
        let mut r = rng(1000 + seed);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100 {
            let (cx, cy) = if i % 2 == 0 { (0.0, 0.0) } else { (8.0, 8.0) };
            points.push(cx + r.random_range(-1.5..1.5));
            points.push(cy + r.random_range(-1.5..1.5));
            labels.push(i % 2);
        }
        let model = kmeans(&points, 2, &KMeansConfig::new(2, seed), Exec::Sequential).unwrap();
        let a = &model.assignment;
        let same = (0..100).all(|i| (a[i] == a[0]) == (labels[i] == labels[0]));
        recovered += same as usize;
    }
    check(
        kcore_bad == 0 && recovered >= 95,
        format!("k-core: {kcore_bad}/200 mismatches; k-means recovered blobs on {recovered}/100 seeds"),
    )
}

// ---------------------------------------------------------------- shared synthetic runs

struct Workspace {
    tmp: Mutex<Option<tempfile::TempDir>>,
    root: PathBuf,
    cfg: ExperimentConfig,
}

fn write_synth(path: &Path, spec: &SynthSpec) {
    write_tsv(&generate_rows(spec).unwrap(), path).unwrap();
}

static WS: OnceLock<Workspace> = OnceLock::new();

fn workspace() -> &'static Workspace {
    WS.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        Workspace {
            tmp: Mutex::new(Some(tmp)),
            root,
            cfg: ExperimentConfig::default(),
        }
    })
}

/// Seen/unseen halves of the default synthetic spec and a bundle trained on
/// the seen half.
fn zero_shot_setup() -> &'static (PathBuf, PathBuf, PathBuf) {
    static SETUP: OnceLock<(PathBuf, PathBuf, PathBuf)> = OnceLock::new();
    SETUP.get_or_init(|| {
        let ws = workspace();
        let raw = ws.root.join("synth.tsv");
        write_synth(&raw, &SynthSpec::default());
        let mut cfg = ws.cfg.clone();
        cfg.data.seen_fraction = Some(0.5);
        let p = pipeline::prepare(&raw, &ws.root.join("data"), &cfg.data).unwrap();
        let bundle = ws.root.join("bundle");
        pipeline::train(&p.dirs[0], &bundle, &cfg, Exec::Parallel).unwrap();
        (p.dirs[0].clone(), p.dirs[1].clone(), bundle)
    })
}

fn auc_of(out: &pipeline::Evaluated, scorer: &str) -> f64 {
    out.report(scorer).unwrap_or_else(|| panic!("no {scorer} row")).mean.auc
}

fn criterion_5() -> Outcome {
    let ws = workspace();
    let (_, unseen, bundle) = zero_shot_setup();
    let req = EvaluateRequest {
        mode: Mode::ZeroShotInDomain,
        bundle_dir: bundle.clone(),
        target_dir: unseen.clone(),
        blend: None,
        eta_grid: None,
        force: false,
        out_dir: None,
    };
    let out = pipeline::evaluate(&req, &ws.cfg, Exec::Parallel).map_err(|e| e.to_string())?;
    let (uni, pop) = (auc_of(&out, "Act+Int+Co"), auc_of(&out, "MostPop"));
    check(
        uni > 0.60 && uni > pop && out.optimizer_steps == 0,
        format!("Act+Int+Co AUC {uni:.4}, MostPop {pop:.4}, optimizer steps {}", out.optimizer_steps),
    )
}

fn criterion_6() -> Outcome {
    let ws = workspace();
    let cfg = &ws.cfg;
    let a_raw = ws.root.join("a.tsv");
    let b_raw = ws.root.join("b.tsv");
    write_synth(&a_raw, &SynthSpec { rng_seed: 11, ..SynthSpec::default() });
    write_synth(
        &b_raw,
        &SynthSpec {
            n_users: 1500,
            n_items: 800,
            density: 25.0,
            rng_seed: 12,
            ..SynthSpec::default()
        },
    );
    let a = pipeline::prepare(&a_raw, &ws.root.join("a"), &cfg.data).map_err(|e| e.to_string())?;
    let b = pipeline::prepare(&b_raw, &ws.root.join("b"), &cfg.data).map_err(|e| e.to_string())?;
    let bundle = ws.root.join("bundle_a");
    pipeline::train(&a.dirs[0], &bundle, cfg, Exec::Parallel).map_err(|e| e.to_string())?;
    let req = EvaluateRequest {
        mode: Mode::ZeroShotCrossDomain,
        bundle_dir: bundle,
        target_dir: b.dirs[0].clone(),
        blend: None,
        eta_grid: None,
        force: false,
        out_dir: None,
    };
    let out = pipeline::evaluate(&req, cfg, Exec::Parallel).map_err(|e| e.to_string())?;
    let (uni, pop) = (auc_of(&out, "Act+Int+Co"), auc_of(&out, "MostPop"));
    check(
        uni > 0.55 && uni > pop && out.optimizer_steps == 0,
        format!("A -> B Act+Int+Co AUC {uni:.4}, MostPop on B {pop:.4}"),
    )
}

fn criterion_7() -> Outcome {
    let ws = workspace();
    let (seen, _, bundle_dir) = zero_shot_setup();
    let bundle = zerorec::model::ScorerBundle::load(bundle_dir).map_err(|e| e.to_string())?;
    let f = pipeline::featurize(seen, &ws.cfg.features, Exec::Parallel).map_err(|e| e.to_string())?;
    let valid = build_tasks(&f.ds, Split::Valid, ws.cfg.train.seed).unwrap().tasks;
    let scores = pipeline::family_scores(&bundle, &f.features, &valid, Exec::Parallel).map_err(|e| e.to_string())?;
    let singles: Vec<(String, f64)> = scores
        .iter()
        .map(|(fam, s)| (fam.to_string(), evaluate_scores(&valid, s).unwrap().metrics.auc))
        .collect();
    let best_single = singles.iter().map(|s| s.1).fold(f64::MIN, f64::max);
    let w = bundle.weights.as_ref().unwrap().get(Combo::ActIntCo).unwrap().weights;
    let tuned = evaluate_scores(&valid, &combine(&scores, &w).unwrap()).unwrap().metrics.auc;
    check(
        tuned >= best_single - 0.005,
        format!("validation AUC tuned Act+Int+Co {tuned:.4}, best single family {best_single:.4}"),
    )
}

fn criterion_8() -> Outcome {
    let ws = workspace();
    let cfg = &ws.cfg;
    let (seen, _, bundle_dir) = zero_shot_setup();
    let bundle = zerorec::model::ScorerBundle::load(bundle_dir).map_err(|e| e.to_string())?;
    let f = pipeline::featurize(seen, &cfg.features, Exec::Parallel).map_err(|e| e.to_string())?;
    let valid = build_tasks(&f.ds, Split::Valid, cfg.train.seed).unwrap().tasks;
    let scores = pipeline::family_scores(&bundle, &f.features, &valid, Exec::Parallel).map_err(|e| e.to_string())?;
    let w = bundle.weights.as_ref().unwrap().get(Combo::ActIntCo).unwrap().weights;
    let uni = combine(&scores, &w).unwrap();
    let mf = train_mf_bpr(&f.ds, &cfg.mfbpr, Exec::Parallel).map_err(|e| e.to_string())?;
    let ext = score_tasks(&mf.scorer_for(&f.ds), &valid, Exec::Parallel).map_err(|e| e.to_string())?;
    let (eta, blended) = tune_eta(&valid, &uni, &ext, &cfg.tune, Exec::Parallel).map_err(|e| e.to_string())?;
    let uni_auc = evaluate_scores(&valid, &uni).unwrap().metrics.auc;
    let mf_auc = evaluate_scores(&valid, &ext).unwrap().metrics.auc;

    // the evaluate command path runs the same blend end to end
    let req = EvaluateRequest {
        mode: Mode::InDomain,
        bundle_dir: bundle_dir.clone(),
        target_dir: seen.clone(),
        blend: Some(BlendWith::MfBpr),
        eta_grid: None,
        force: false,
        out_dir: None,
    };
    let out = pipeline::evaluate(&req, cfg, Exec::Parallel).map_err(|e| e.to_string())?;
    check(
        blended >= uni_auc.max(mf_auc) - 0.02 && out.report("Act+Int+Co+MF-BPR").is_some(),
        format!(
            "validation AUC blend {blended:.4} (eta {eta}), MF-BPR {mf_auc:.4}, universal {uni_auc:.4}; test blend {:.4}",
            auc_of(&out, "Act+Int+Co+MF-BPR")
        ),
    )
}

// ---------------------------------------------------------------- 9

fn tree_hashes(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&p).unwrap())));
            }
        }
    }
    out
}

fn run_once(raw: &Path, root: &Path, cfg: &ExperimentConfig) -> zerorec::Result<()> {
    let exec = Exec::Sequential;
    let p = pipeline::prepare(raw, &root.join("data"), &cfg.data)?;
    pipeline::featurize(&p.dirs[1], &cfg.features, exec)?;
    pipeline::train(&p.dirs[0], &root.join("bundle"), cfg, exec)?;
    let req = EvaluateRequest {
        mode: Mode::ZeroShotInDomain,
        bundle_dir: root.join("bundle"),
        target_dir: p.dirs[1].clone(),
        blend: Some(BlendWith::MostPop),
        eta_grid: None,
        force: false,
        out_dir: Some(root.join("report")),
    };
    pipeline::evaluate(&req, cfg, exec)?;
    Ok(())
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("synth.tsv");
    write_synth(
        &raw,
        &SynthSpec {
            n_users: 600,
            n_items: 400,
            density: 20.0,
            rng_seed: 9,
            ..SynthSpec::default()
        },
    );
    let mut cfg = ExperimentConfig::default();
    cfg.data.seen_fraction = Some(0.5);
    let (a, b) = (tmp.path().join("run_a"), tmp.path().join("run_b"));
    run_once(&raw, &a, &cfg).map_err(|e| e.to_string())?;
    run_once(&raw, &b, &cfg).map_err(|e| e.to_string())?;
    let (ha, hb) = (tree_hashes(&a), tree_hashes(&b));
    let differing: Vec<&String> = ha.keys().filter(|k| ha.get(*k) != hb.get(*k)).collect();
    check(
        ha.len() == hb.len() && differing.is_empty(),
        format!("{} artifacts compared, differing: {differing:?}", ha.len()),
    )
}

// ----------------------------------------------------------------

/// Set to make any failing criterion fail the test run.
const STRICT_ENV: &str = "ZEROREC_ACCEPTANCE_STRICT";

fn main() {
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "metric oracle equivalence", criterion_1),
        (2, "feature math oracle", criterion_2),
        (3, "gradient checks", criterion_3),
        (4, "k-core and k-means oracles", criterion_4),
        (5, "synthetic zero-shot in-domain", criterion_5),
        (6, "synthetic zero-shot cross-domain", criterion_6),
        (7, "interpolation improves or ties", criterion_7),
        (8, "MF-BPR blend", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = fmt_secs(start.elapsed());
        match outcome {
            Ok(d) => println!("criterion {n} ({name}): PASS  {d} [{secs}]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL  {d} [{secs}]");
            }
        }
    }
    // statics are never dropped, so remove the shared directory here
    if let Some(ws) = WS.get() {
        drop(ws.tmp.lock().unwrap().take());
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var_os(STRICT_ENV).is_some() {
        std::process::exit(1);
    }
}

fn fmt_secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}
