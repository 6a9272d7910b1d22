//! Acceptance gate: one PASS/FAIL line per criterion; exits non-zero when
//! any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hexposome::analytics::{
    grid_search_hdbscan, hdbscan_fit, mutual_reachability_mst, pca_fit, pca_select, silhouette, Matrix, PcaSelect,
    DEFAULT_LATTICE,
};
use hexposome::catalog::{self, DataType, DatasetRecord, TemporalExtent};
use hexposome::convert::{
    apply_overlay, build_overlay_map, chunked_convert, convert, Aggregation, ChunkSpec, OverlayMap, OverlaySources,
    Semantics, Source, SourceValues, Strategy,
};
use hexposome::expometrics::{ceem, classify_aqi, AqiClass, Chemical};
use hexposome::geom::point_in_polygon;
use hexposome::hexgrid::{cell_polygon, GridSpec, HexId};
use hexposome::ingest::{read_hexframe, write_ascii_grid, write_hexframe, Feature, FeatureSet, HexFrame, PropValue};
use hexposome::linkage::{aggregate_to_zone, build_crosswalk, Crosswalk, CrosswalkMode, CrosswalkRecord, ZoneStats};
use hexposome::{Point, Polygon, RasterGrid};
use hexposome_cli::thematic::{render_svg, Classing};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn synthetic_raster(n: usize, cellsize: f64, seed: u64) -> RasterGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * n).map(|_| rng.gen_range(0.0..50.0)).collect();
    RasterGrid::new(n, n, 3.0, -2.0, cellsize, -9999.0, values).unwrap()
}

/// 10 × 5 tiling of jittered quadrilaterals with shared vertices.
fn polygon_fixture() -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let (nx, ny, w) = (10, 5, 1.7);
    let mut v = vec![vec![Point::new(0.0, 0.0); ny + 1]; nx + 1];
    for (i, col) in v.iter_mut().enumerate() {
        for (j, p) in col.iter_mut().enumerate() {
            let jx = if i == 0 || i == nx { 0.0 } else { rng.gen_range(-0.4..0.4) };
            let jy = if j == 0 || j == ny { 0.0 } else { rng.gen_range(-0.4..0.4) };
            *p = Point::new(i as f64 * w + jx, j as f64 * w + jy);
        }
    }
    let mut features = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let ring = vec![v[i][j], v[i + 1][j], v[i + 1][j + 1], v[i][j + 1]];
            let poly = Polygon::from_exterior(ring).unwrap();
            features.push(Feature::new(vec![poly]).with_property("v", PropValue::Number(rng.gen_range(1.0..9.0))));
        }
    }
    FeatureSet { features }
}

fn c1_geometry() -> Outcome {
    let g = GridSpec::default();
    let area8 = g.cell_area(8);
    check((area8 - 0.737).abs() < 1e-12, || format!("res-8 area {area8}"))?;
    let e = g.edge(8);
    check((e - 0.5326).abs() <= 0.0005, || format!("edge {e}"))?;
    let mut worst: f64 = 0.0;
    for r in 0..15u8 {
        let ratio = g.cell_area(r) / g.cell_area(r + 1);
        worst = worst.max((ratio - 7.0).abs() / 7.0);
    }
    check(worst <= 1e-12, || format!("area ratio off by {worst:e}"))?;
    Ok(format!("edge(8) = {e:.5} km; max |ratio/7 - 1| = {worst:.1e}"))
}

fn c2_conservation() -> Outcome {
    let g = GridSpec::default();
    let raster = synthetic_raster(100, 0.1, 2);
    let sources = OverlaySources::Raster(&raster);
    let map = build_overlay_map(&sources, 8, &g).map_err(|e| e.to_string())?;
    let vals = SourceValues::Numeric(raster.values.iter().map(|v| Some(*v)).collect());
    let ext = apply_overlay(&map, &vals, Semantics::Extensive, "mass").map_err(|e| e.to_string())?;
    let total: f64 = raster.values.iter().sum();
    let got: f64 = ext.rows().filter_map(|(_, v)| v[0]).sum();
    let rel = (got - total).abs() / total;
    check(rel <= 1e-9, || format!("extensive sum {got} vs {total}"))?;

    let constant = SourceValues::Numeric(vec![Some(7.25); raster.len()]);
    let int = apply_overlay(&map, &constant, Semantics::Intensive, "c").map_err(|e| e.to_string())?;
    let cov = int.column_index("coverage_c").ok_or("no coverage column")?;
    let mut full = 0;
    let mut worst: f64 = 0.0;
    for (_, v) in int.rows() {
        if v[cov].is_some_and(|c| c >= 1.0 - 1e-9) {
            full += 1;
            worst = worst.max((v[0].unwrap() - 7.25).abs());
        }
    }
    check(full > 0, || "no full-coverage hexes".into())?;
    check(worst <= 1e-12, || format!("constant field off by {worst:e}"))?;
    Ok(format!("sum rel err {rel:.1e}; {full} full hexes, max dev {worst:.1e}"))
}

fn c3_chunked() -> Outcome {
    let g = GridSpec::default();
    let raster = synthetic_raster(100, 0.1, 3);
    let polys = polygon_fixture();
    let strategies = [
        Strategy::Centroid(Aggregation::Mean),
        Strategy::Polyfill,
        Strategy::Overlay(Semantics::Intensive),
        Strategy::Overlay(Semantics::Extensive),
    ];
    let sources = [Source::Raster(&raster), Source::Features { set: &polys, field: "v" }];
    let mut compared = 0;
    for src in &sources {
        let one_shot: Vec<String> = strategies
            .iter()
            .map(|s| convert(src, 8, &g, *s, "v").map(|f| f.to_csv_string()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        for width in [1.3, 2.5, 4.0] {
            for (s, whole) in strategies.iter().zip(&one_shot) {
                let chunked = chunked_convert(src, 8, &g, *s, &ChunkSpec::new(width), "v")
                    .map_err(|e| e.to_string())?
                    .to_csv_string();
                check(&chunked == whole, || format!("{s:?} differs at chunk width {width}"))?;
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} chunked outputs byte-identical"))
}

fn star_polygon(rng: &mut ChaCha8Rng, c: Point, r: f64) -> Polygon {
    let n = rng.gen_range(3..12);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let ring = angles
        .iter()
        .map(|a| {
            let rr = r * rng.gen_range(0.4..1.0);
            Point::new(c.x + rr * a.cos(), c.y + rr * a.sin())
        })
        .collect();
    Polygon::from_exterior(ring).unwrap()
}

fn c4_monte_carlo() -> Outcome {
    let g = GridSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let side = 1000;
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 20 {
        let c = Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let r = rng.gen_range(0.5..1.5);
        let poly = star_polygon(&mut rng, c, r);
        let set = FeatureSet {
            features: vec![Feature::new(vec![poly.clone()])],
        };
        let map = build_overlay_map(&OverlaySources::Features(&set), 8, &g).map_err(|e| e.to_string())?;
        let partial: Vec<_> = map
            .records
            .iter()
            .filter(|r| r.frac_of_hex >= 0.2 && r.frac_of_hex <= 0.98)
            .collect();
        if partial.is_empty() {
            continue;
        }
        let rec = partial[rng.gen_range(0..partial.len())];
        let hex = cell_polygon(&rec.hex, &g).map_err(|e| e.to_string())?;
        let bb = hex.bbox();
        // jittered stratified sampling: one uniform point per stratum
        let (dx, dy) = ((bb.max_x - bb.min_x) / side as f64, (bb.max_y - bb.min_y) / side as f64);
        let mut hits = 0u64;
        for i in 0..side {
            for j in 0..side {
                let p = Point::new(
                    bb.min_x + (i as f64 + rng.gen::<f64>()) * dx,
                    bb.min_y + (j as f64 + rng.gen::<f64>()) * dy,
                );
                if point_in_polygon(p, &hex) && point_in_polygon(p, &poly) {
                    hits += 1;
                }
            }
        }
        let mc = hits as f64 * dx * dy;
        let rel = (rec.fragment_area - mc).abs() / mc;
        worst = worst.max(rel);
        check(rel <= 1e-3, || {
            format!("pair {pairs}: fragment {} vs sampled {mc} (rel {rel:.2e})", rec.fragment_area)
        })?;
        pairs += 1;
    }
    Ok(format!("20 pairs x 10^6 samples, max rel err {worst:.1e}"))
}

fn c5_ceem() -> Outcome {
    let chem = |cas: &str, c: f64, l: f64| Chemical {
        cas: cas.into(),
        concentration: c,
        limit: l,
    };
    let fixtures = [
        (vec![chem("a", 1.0, 4.0), chem("b", 3.0, 8.0)], 0.625),
        (vec![chem("a", 2.0, 2.0)], 1.0),
        (vec![chem("a", 0.0, 5.0), chem("b", 0.5, 0.25), chem("c", 0.75, 3.0)], 2.25),
    ];
    for (mix, want) in &fixtures {
        let got = ceem(mix).map_err(|e| e.to_string())?;
        check(got == *want, || format!("ceem {got} != {want}"))?;
    }
    let mix = [chem("x", 0.6, 1.0), chem("y", 6.0, 10.0)];
    let score = ceem(&mix).map_err(|e| e.to_string())?;
    check(mix.iter().all(|c| c.concentration / c.limit < 1.0), || "single ratios not below 1".into())?;
    check((score - 1.2).abs() < 1e-12 && score > 1.0, || format!("mixture score {score}"))?;
    Ok(format!("{} exact fixtures; two chemicals at 0.6 of limit score {score}", fixtures.len()))
}

fn c6_aqi() -> Outcome {
    let mut n = 0;
    for i in 0..=3000 {
        let v = i as f64 / 10.0;
        let want = if v <= 50.0 {
            AqiClass::Good
        } else if v <= 100.0 {
            AqiClass::Moderate
        } else if v <= 200.0 {
            AqiClass::Unhealthy
        } else {
            AqiClass::VeryUnhealthyOrHazardous
        };
        let got = classify_aqi(v).map_err(|e| e.to_string())?;
        check(got == want, || format!("{v}: {got} != {want}"))?;
        n += 1;
    }
    for (lo, hi) in [(50.0, 50.000001), (100.0, 100.000001), (200.0, 200.000001)] {
        let (a, b) = (classify_aqi(lo).unwrap(), classify_aqi(hi).unwrap());
        check(a < b, || format!("no class change across {lo}"))?;
    }
    Ok(format!("{n} sweep values; boundaries at 50/100/200"))
}

fn blobs(seed: u64, per: usize) -> (Vec<Vec<f64>>, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (label, cx) in [(0, 0.0), (1, 10.0)] {
        for _ in 0..per {
            rows.push(vec![cx + 0.1 * normal(&mut rng), 0.1 * normal(&mut rng)]);
            truth.push(label);
        }
    }
    (rows, truth)
}

fn ari(a: &[i64], b: &[i64]) -> f64 {
    let n = a.len() as f64;
    let mut table: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut ra: BTreeMap<i64, f64> = BTreeMap::new();
    let mut rb: BTreeMap<i64, f64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((*x, *y)).or_default() += 1.0;
        *ra.entry(*x).or_default() += 1.0;
        *rb.entry(*y).or_default() += 1.0;
    }
    let c2 = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().map(|v| c2(*v)).sum();
    let sa: f64 = ra.values().map(|v| c2(*v)).sum();
    let sb: f64 = rb.values().map(|v| c2(*v)).sum();
    let expected = sa * sb / c2(n);
    let max = (sa + sb) / 2.0;
    (index - expected) / (max - expected)
}

/// Prim over an explicit mutual-reachability matrix.
fn prim_weight(rows: &[Vec<f64>], ms: usize) -> f64 {
    let n = rows.len();
    let d: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| rows.iter().map(|b| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()).collect())
        .collect();
    let core: Vec<f64> = d
        .iter()
        .map(|r| {
            let mut s = r.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            s[ms - 1]
        })
        .collect();
    let mr = |i: usize, j: usize| d[i][j].max(core[i]).max(core[j]);
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    best[0] = 0.0;
    let mut total = 0.0;
    for _ in 0..n {
        let u = (0..n).filter(|&i| !in_tree[i]).min_by(|&a, &b| best[a].partial_cmp(&best[b]).unwrap()).unwrap();
        in_tree[u] = true;
        total += best[u];
        for v in 0..n {
            if !in_tree[v] && mr(u, v) < best[v] {
                best[v] = mr(u, v);
            }
        }
    }
    total
}

fn c7_hdbscan() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.gen_range(2..=200);
        let d = rng.gen_range(1..=4);
        let ms = rng.gen_range(1..=n.min(10));
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
        let mst = mutual_reachability_mst(&Matrix::from_rows(&rows).unwrap(), ms).map_err(|e| e.to_string())?;
        check(mst.len() == n - 1, || format!("{} edges for {n} points", mst.len()))?;
        let w: f64 = mst.iter().map(|e| e.weight).sum();
        let diff = (w - prim_weight(&rows, ms)).abs();
        worst = worst.max(diff);
        check(diff <= 1e-9, || format!("MST weight off by {diff:e}"))?;
    }
    let (rows, truth) = blobs(2024, 100);
    let m = hdbscan_fit(&Matrix::from_rows(&rows).unwrap(), 10, 10).map_err(|e| e.to_string())?;
    let score = ari(&m.labels, &truth);
    check(m.n_clusters() == 2, || format!("{} blob clusters", m.n_clusters()))?;
    check(score >= 0.95, || format!("ARI {score}"))?;
    check(m.labels.iter().all(|l| *l >= -1 && *l < 2), || "labels outside {-1, 0, 1}".into())?;

    let line: Vec<Vec<f64>> = [0.0, 0.1, 0.2, 10.0, 10.1, 10.2, 50.0].iter().map(|v| vec![*v]).collect();
    let l = hdbscan_fit(&Matrix::from_rows(&line).unwrap(), 2, 2).map_err(|e| e.to_string())?.labels;
    let ok = l[0] >= 0 && l[0] == l[1] && l[1] == l[2] && l[3] >= 0 && l[3] == l[4] && l[4] == l[5] && l[0] != l[3] && l[6] == -1;
    check(ok, || format!("seven-point labels {l:?}"))?;
    Ok(format!("MST max diff {worst:.1e}; blob ARI {score:.4}, {} noise; 7-point {l:?}", m.noise_count()))
}

fn c8_pca() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mix: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let z: Vec<f64> = (0..5).map(|_| normal(&mut rng)).collect();
                (0..5).map(|j| (0..5).map(|k| mix[j][k] * z[k]).sum()).collect()
            })
            .collect();
        let m = pca_fit(&Matrix::from_rows(&rows).unwrap()).map_err(|e| e.to_string())?;
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..5).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov = nalgebra::DMatrix::from_fn(5, 5, |a, b| {
            rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1.0)
        });
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        for (k, &o) in order.iter().enumerate() {
            worst = worst.max((m.eigenvalues[k] - eig.eigenvalues[o]).abs());
            let v = eig.eigenvectors.column(o);
            let dot: f64 = (0..5).map(|j| v[j] * m.components[k][j]).sum();
            let sign = dot.signum();
            for j in 0..5 {
                worst = worst.max((m.components[k][j] - sign * v[j]).abs());
            }
        }
        let s: f64 = m.explained_variance_ratio.iter().sum();
        check((s - 1.0).abs() <= 1e-9, || format!("ratios sum to {s}"))?;
    }
    check(worst <= 1e-8, || format!("eigen mismatch {worst:e}"))?;
    let k = pca_select(&[0.7, 0.2, 0.05, 0.05], PcaSelect::Threshold(0.9)).map_err(|e| e.to_string())?;
    check(k == 2, || format!("threshold 0.9 picked k={k}"))?;
    Ok(format!("20 problems, max diff {worst:.1e}; threshold 0.9 -> k={k}"))
}

fn c9_silhouette() -> Outcome {
    let x = Matrix::from_rows(&[vec![0.0], vec![0.1], vec![10.0], vec![10.1]]).unwrap();
    let s = silhouette(&x, &[0, 0, 1, 1]).map_err(|e| e.to_string())?.ok_or("no score")?;
    check((s - 0.990).abs() <= 0.001, || format!("hand fixture {s}"))?;
    let (rows, _) = blobs(2024, 100);
    let x = Matrix::from_rows(&rows).unwrap();
    let g = grid_search_hdbscan(&x, &DEFAULT_LATTICE).map_err(|e| e.to_string())?;
    check(g.model.n_clusters() == 2, || format!("{} clusters", g.model.n_clusters()))?;
    check(g.scores.len() == DEFAULT_LATTICE.len().pow(2), || "lattice not exhausted".into())?;
    let mut best: Option<(usize, usize, f64)> = None;
    for &mcs in &DEFAULT_LATTICE {
        for &ms in &DEFAULT_LATTICE {
            let m = hdbscan_fit(&x, mcs, ms).map_err(|e| e.to_string())?;
            if let Some(s) = silhouette(&x, &m.labels).map_err(|e| e.to_string())? {
                if best.is_none_or(|(_, _, b)| s > b) {
                    best = Some((mcs, ms, s));
                }
            }
        }
    }
    let (mcs, ms, s_best) = best.ok_or("oracle found no valid pair")?;
    check((mcs, ms) == (g.min_cluster_size, g.min_samples) && s_best == g.score, || {
        format!("search chose ({}, {}), oracle ({mcs}, {ms})", g.min_cluster_size, g.min_samples)
    })?;
    Ok(format!("hand fixture {s:.4}; best (mcs {mcs}, ms {ms}) silhouette {s_best:.4}"))
}

fn c10_linkage() -> Outcome {
    let g = GridSpec::default();
    let fp = g.fingerprint(8);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    let mut fixtures = 0;
    while fixtures < 100 {
        let nhex = rng.gen_range(1..30);
        let hexes: Vec<HexId> = (0..nhex).map(|i| HexId::new(8, i, rng.gen_range(-3..3))).collect();
        let zones = ["a", "b", "c"];
        let mut frame = HexFrame::new(fp, vec!["v".into()]).unwrap();
        for h in &hexes {
            let v = if rng.gen_bool(0.1) { None } else { Some(rng.gen_range(-50.0..50.0)) };
            frame.insert(*h, "2018", vec![v]).unwrap();
        }
        let mut records = Vec::new();
        for h in &hexes {
            for z in zones {
                if rng.gen_bool(0.6) {
                    records.push(CrosswalkRecord {
                        hex: *h,
                        zone_id: z.into(),
                        frac_of_hex: rng.gen_range(0.01..0.33),
                    });
                }
            }
        }
        records.sort_by(|a, b| a.hex.canonical_cmp(&b.hex).then_with(|| a.zone_id.cmp(&b.zone_id)));
        let x = Crosswalk { grid: fp, records };
        if x.records.is_empty() {
            continue;
        }
        let t = aggregate_to_zone(&frame, &x, &[], ZoneStats::default()).map_err(|e| e.to_string())?;
        fixtures += 1;
        for z in zones {
            let pairs: Vec<(f64, f64)> = x
                .records
                .iter()
                .filter(|r| r.zone_id == z)
                .filter_map(|r| frame.value(&r.hex, "2018", "v").map(|v| (r.frac_of_hex, v)))
                .collect();
            let row = t.rows.get(&(z.to_string(), "2018".to_string()));
            if pairs.is_empty() {
                check(row.is_none_or(|r| r[0].is_none()), || format!("zone {z} should be empty"))?;
                continue;
            }
            let sw: f64 = pairs.iter().map(|p| p.0).sum();
            let mean = pairs.iter().map(|(w, v)| w * v).sum::<f64>() / sw;
            let std = (pairs.iter().map(|(w, v)| w * (v - mean).powi(2)).sum::<f64>() / sw).sqrt();
            let row = row.ok_or_else(|| format!("zone {z} missing"))?;
            worst = worst.max((row[0].unwrap() - mean).abs()).max((row[1].unwrap() - std).abs());
        }
    }
    check(worst <= 1e-12, || format!("weighted stats off by {worst:e}"))?;

    // tiling zones over a rectangle; interior hexes must be fully allocated
    let (x0, y0, x1, y1) = (0.0, 0.0, 12.0, 8.0);
    let cuts = [0.0, 3.4, 6.2, 8.8, 12.0];
    let mut features = Vec::new();
    for (i, w) in cuts.windows(2).enumerate() {
        let mid = 4.0 + (i as f64 - 1.5);
        for (j, (lo, hi)) in [(y0, mid), (mid, y1)].into_iter().enumerate() {
            features.push(
                Feature::new(vec![Polygon::rect(w[0], lo, w[1], hi)])
                    .with_property("zip", PropValue::Text(format!("z{i}{j}"))),
            );
        }
    }
    let zones = FeatureSet { features };
    let xw = build_crosswalk(&zones, "zip", 8, &g, CrosswalkMode::Fractional).map_err(|e| e.to_string())?;
    let mut interior = 0;
    let mut dev: f64 = 0.0;
    for (h, s) in xw.coverage() {
        let bb = cell_polygon(&h, &g).unwrap().bbox();
        if bb.min_x >= x0 && bb.max_x <= x1 && bb.min_y >= y0 && bb.max_y <= y1 {
            interior += 1;
            dev = dev.max((s - 1.0).abs());
        }
    }
    check(interior > 20, || format!("only {interior} interior hexes"))?;
    check(dev <= 1e-6, || format!("interior coverage off by {dev:e}"))?;
    Ok(format!("100 fixtures max diff {worst:.1e}; {interior} interior hexes, max |sum-1| {dev:.1e}"))
}

fn round_trip(path: &Path, write: impl Fn(&Path), reread_write: impl Fn(&Path, &Path)) -> Result<(), String> {
    write(path);
    let again = path.with_extension("again");
    reread_write(path, &again);
    let (a, b) = (std::fs::read(path).unwrap(), std::fs::read(&again).unwrap());
    check(a == b, || format!("{} changed on round trip", path.display()))
}

fn c11_formats() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let g = GridSpec::default();
    let polys = polygon_fixture();
    let frame = convert(&Source::Features { set: &polys, field: "v" }, 8, &g, Strategy::Overlay(Semantics::Intensive), "v")
        .map_err(|e| e.to_string())?;
    round_trip(
        &dir.path().join("f.csv"),
        |p| write_hexframe(p, &frame).unwrap(),
        |p, q| write_hexframe(q, &read_hexframe(p).unwrap()).unwrap(),
    )?;
    let map = build_overlay_map(&OverlaySources::Features(&polys), 8, &g).map_err(|e| e.to_string())?;
    round_trip(
        &dir.path().join("m.csv"),
        |p| map.write(p).unwrap(),
        |p, q| OverlayMap::read(p).unwrap().write(q).unwrap(),
    )?;
    let mut zones = polys.clone();
    for (i, f) in zones.features.iter_mut().enumerate() {
        f.properties.insert("zip".into(), PropValue::Text(format!("{:05}", 10000 + i)));
    }
    let xw = build_crosswalk(&zones, "zip", 8, &g, CrosswalkMode::Fractional).map_err(|e| e.to_string())?;
    round_trip(
        &dir.path().join("x.csv"),
        |p| xw.write(p).unwrap(),
        |p, q| Crosswalk::read(p).unwrap().write(q).unwrap(),
    )?;
    let manifest = dir.path().join("catalog.jsonl");
    for (i, dt) in [DataType::Raster, DataType::Vector, DataType::IngestionCode].into_iter().enumerate() {
        let rec = DatasetRecord {
            id: format!("ds-{i}"),
            name: format!("Dataset \"{i}\""),
            data_type: dt,
            format: "csv".into(),
            spatial_extent: [0.0, -1.5, 10.25, 3.0],
            temporal_extent: if i == 0 {
                TemporalExtent::None
            } else {
                TemporalExtent::Range {
                    start: "2016-01-01".into(),
                    end: "2018-12-31".into(),
                }
            },
            native_resolution: "1 km".into(),
            source_url: "https://example.org/data".into(),
            license: "CC-BY-4.0".into(),
            ingestion_code_ref: "scripts/ingest.rs".into(),
            checksum: if dt == DataType::IngestionCode { String::new() } else { "ab".repeat(32) },
            created: "2026-01-02T03:04:05Z".into(),
        };
        catalog::register(&rec, &manifest).map_err(|e| e.to_string())?;
    }
    let text = std::fs::read_to_string(&manifest).unwrap();
    let back = catalog::manifest_string(&catalog::read_manifest(&manifest).map_err(|e| e.to_string())?);
    check(text == back, || "manifest changed on round trip".into())?;

    let one = frame.filter_period("-");
    let c = Classing::Quantile {
        column: "v".into(),
        classes: 5,
    };
    let a = render_svg(&one, &c, None).map_err(|e| e.to_string())?;
    let b = render_svg(&one, &c, None).map_err(|e| e.to_string())?;
    check(a == b, || "SVG differs between runs".into())?;
    Ok("hex frame, overlay map, crosswalk, manifest and SVG stable".into())
}

fn c12_cli() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let n = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pm: Vec<f64> = (0..n * n)
        .map(|i| if i % n < n / 2 { 5.0 } else { 15.0 } + rng.gen_range(0.0..1.0))
        .collect();
    let pop: Vec<f64> = (0..n * n).map(|i| if i / n < 5 { 0.0 } else { 12.0 }).collect();
    write_ascii_grid(d.join("pm.asc"), &RasterGrid::new(n, n, 0.0, 0.0, 0.2, -9999.0, pm).unwrap())
        .map_err(|e| e.to_string())?;
    write_ascii_grid(d.join("pop.asc"), &RasterGrid::new(n, n, 0.0, 0.0, 0.2, -9999.0, pop).unwrap())
        .map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_hexposome");
    let steps: [&[&str]; 5] = [
        &["hexify", "--strategy", "overlay", "--semantics", "intensive", "--res", "8", "--var", "pm25", "pm.asc", "pm.csv"],
        &["hexify", "--strategy", "overlay", "--semantics", "extensive", "--var", "population", "pop.asc", "pop.csv"],
        &["mask", "--pop", "pop.csv", "pm.csv", "masked.csv"],
        &["cluster", "--columns", "pm25", "--lattice", "5,10,20", "--summary", "summary.csv", "masked.csv", "clusters.csv"],
        &["render", "--columns", "cluster", "--classes", "3", "clusters.csv", "clusters.svg"],
    ];
    for args in steps {
        let out = Command::new(bin).args(args).current_dir(d).output().map_err(|e| e.to_string())?;
        check(out.status.code() == Some(0), || {
            format!("{} exited {:?}: {}", args[0], out.status.code(), String::from_utf8_lossy(&out.stderr))
        })?;
    }
    let svg = std::fs::read_to_string(d.join("clusters.svg")).map_err(|e| e.to_string())?;
    let rows = read_hexframe(d.join("clusters.csv")).map_err(|e| e.to_string())?.len();
    check(svg.matches("<polygon").count() == rows, || "polygon count differs from rows".into())?;
    check(std::fs::metadata(d.join("summary.csv")).is_ok(), || "no summary written".into())?;
    Ok(format!("hexify, mask, cluster, summarize, render: exit 0; {rows} hexes mapped"))
}

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "hex geometry constants", limit: Some(Duration::from_secs(1)), run: c1_geometry },
        Criterion { id: 2, name: "conversion conservation", limit: Some(Duration::from_secs(30)), run: c2_conservation },
        Criterion { id: 3, name: "chunked equivalence", limit: Some(Duration::from_secs(60)), run: c3_chunked },
        Criterion { id: 4, name: "overlay vs Monte-Carlo", limit: None, run: c4_monte_carlo },
        Criterion { id: 5, name: "CEEM", limit: None, run: c5_ceem },
        Criterion { id: 6, name: "AQI classing", limit: None, run: c6_aqi },
        Criterion { id: 7, name: "HDBSCAN", limit: Some(Duration::from_secs(60)), run: c7_hdbscan },
        Criterion { id: 8, name: "PCA", limit: None, run: c8_pca },
        Criterion { id: 9, name: "silhouette and grid search", limit: None, run: c9_silhouette },
        Criterion { id: 10, name: "linkage", limit: None, run: c10_linkage },
        Criterion { id: 11, name: "format round trips", limit: None, run: c11_formats },
        Criterion { id: 12, name: "CLI end-to-end", limit: Some(Duration::from_secs(120)), run: c12_cli },
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for c in &criteria {
        if filter.as_ref().is_some_and(|f| !c.name.contains(f.as_str()) && f != &c.id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {} ({elapsed:.2?}): {detail}", c.id, c.name),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {} ({elapsed:.2?}): {why}", c.id, c.name);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
