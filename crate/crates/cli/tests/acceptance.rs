//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use forestfw_core::canonical::BestPractice;
use forestfw_core::canonical::{canonicalize, equivalent, includes};
use forestfw_core::checker::{find_acl_anomalies, find_rule_overlaps};
use forestfw_core::header_space::{
    eval_first_match, eval_last_match, eval_whitelist, HeaderPoint, Interval, IntervalSet,
    MatchRule, Predicate,
};
use forestfw_core::netgen::{compile, CompileOptions, NetworkPolicy};
use forestfw_core::policy_lang::{expand_rules, parse_policy_file, BuiltinLibrary, PolicySpec};
use forestfw_core::render::{loc_metrics, render_acls};
use forestfw_core::sim::{vet_negative, vet_positive, ScanSpec, SimNetwork};
use forestfw_core::topo_model::{
    crosscheck_model, load_declared_model, load_topology, zone_conduit_model,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const TRIALS: usize = 1000;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap()
}

fn spec_of(text: &str) -> PolicySpec {
    parse_policy_file("policy.policyml", text, &BuiltinLibrary).unwrap()
}

fn compiled() -> NetworkPolicy {
    let options = CompileOptions {
        ospf: true,
        declared_model: Some(load_declared_model(&read("zone_conduit.graphml")).unwrap()),
        best_practice: Some(
            BestPractice::parse(
                "scada.policyml",
                &read("bestpractice/scada.policyml"),
                &BuiltinLibrary,
            )
            .unwrap(),
        ),
        topology_file: "topology.graphml".into(),
    };
    let t = load_topology(&read("topology.graphml")).unwrap();
    compile(&spec_of(&read("policy.policyml")), &t, &options).unwrap()
}

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn overlap_counterexample() -> Verdict {
    let start = Instant::now();
    let published = read("policy_published.policyml");
    let reports = find_rule_overlaps(&expand_rules(&spec_of(&published)).unwrap());
    let fixed = published.replace(
        "service_group file_transfer { iana_services.http, ftp }",
        "service_group file_transfer { ftp }",
    );
    let after = find_rule_overlaps(&expand_rules(&spec_of(&fixed)).unwrap());
    let elapsed = start.elapsed();
    let [r] = reports.as_slice() else {
        return Err(format!("{} reports before the fix", reports.len()));
    };
    let x = r.witness.sample().unwrap();
    let shape = (r.rule_a.as_str(), r.rule_b.as_str()) == ("file_transfer_rule", "web_rule")
        && r.zones == [("z3".to_string(), "z1".to_string())]
        && x.protocol == 6
        && r.witness.dport == IntervalSet::single(80);
    ensure(
        shape && after.is_empty() && elapsed < Duration::from_secs(1),
        format!("{r}; {} reports after the fix; {elapsed:?}", after.len()),
    )
}

const GRID: u32 = 255;

fn random_rect(rng: &mut ChaCha8Rng) -> (u8, Interval, Interval) {
    let proto = *[1u8, 6, 17].choose(rng).unwrap();
    let mut iv = || {
        let (a, b) = (rng.random_range(0..=GRID), rng.random_range(0..=GRID));
        Interval::new(a.min(b), a.max(b))
    };
    (proto, iv(), iv())
}

fn to_rule((proto, a, b): (u8, Interval, Interval)) -> MatchRule {
    let (a, b) = (IntervalSet::from_interval(a), IntervalSet::from_interval(b));
    let p = if proto == 1 {
        Predicate::for_protocol(1, IntervalSet::empty(), IntervalSet::empty(), a)
    } else {
        Predicate::for_protocol(proto, a, b, IntervalSet::empty())
    };
    MatchRule::accept(p, "r")
}

/// Pieces covering the same points as the input rectangle.
fn split(r: (u8, Interval, Interval), rng: &mut ChaCha8Rng) -> Vec<(u8, Interval, Interval)> {
    let (p, a, b) = r;
    if rng.random_bool(0.5) && a.lo < a.hi {
        let cut = rng.random_range(a.lo..a.hi);
        vec![
            (p, Interval::new(a.lo, cut), b),
            (p, Interval::new(cut + 1, a.hi), b),
        ]
    } else if p != 1 && b.lo < b.hi {
        let cut = rng.random_range(b.lo..b.hi);
        vec![
            (p, a, Interval::new(b.lo, cut)),
            (p, a, Interval::new(cut + 1, b.hi)),
        ]
    } else {
        vec![r]
    }
}

/// Accept set painted point by point: index protocol slot, sport/type, dport.
fn paint(rects: &[(u8, Interval, Interval)]) -> Vec<bool> {
    let n = (GRID + 1) as usize;
    let mut bits = vec![false; 3 * n * n];
    for &(p, a, b) in rects {
        let slot = match p {
            1 => 0,
            6 => 1,
            _ => 2,
        };
        let dports = if p == 1 { 0..=0 } else { b.lo..=b.hi };
        for x in a.lo..=a.hi {
            for y in dports.clone() {
                bits[slot * n * n + x as usize * n + y as usize] = true;
            }
        }
    }
    bits
}

fn canonical_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut agree, mut equal_pairs, mut included_pairs) = (0, 0, 0);
    let mut problems = Vec::new();
    for trial in 0..TRIALS {
        let p: Vec<_> = (0..rng.random_range(1..6))
            .map(|_| random_rect(&mut rng))
            .collect();
        let mut q: Vec<_> = match trial % 3 {
            0 => p.iter().flat_map(|&r| split(r, &mut rng)).collect(),
            1 => {
                let mut pieces: Vec<_> = p.iter().flat_map(|&r| split(r, &mut rng)).collect();
                pieces.remove(rng.random_range(0..pieces.len()));
                pieces
            }
            _ => (0..rng.random_range(1..6))
                .map(|_| random_rect(&mut rng))
                .collect(),
        };
        q.shuffle(&mut rng);
        let (pr, qr): (Vec<_>, Vec<_>) = (
            p.iter().map(|&r| to_rule(r)).collect(),
            q.iter().map(|&r| to_rule(r)).collect(),
        );
        let (pb, qb) = (paint(&p), paint(&q));
        let brute_eq = pb == qb;
        let brute_pq = pb.iter().zip(&qb).all(|(&x, &y)| !x || y);
        let brute_qp = qb.iter().zip(&pb).all(|(&x, &y)| !x || y);
        equal_pairs += usize::from(brute_eq);
        included_pairs += usize::from(brute_qp);
        let same = equivalent(&pr, &qr).unwrap() == brute_eq
            && includes(&pr, &qr).unwrap() == brute_pq
            && includes(&qr, &pr).unwrap() == brute_qp;

        let c = canonicalize(&pr).unwrap();
        let mut shuffled = pr.clone();
        shuffled.shuffle(&mut rng);
        let invariant = canonicalize(&shuffled).unwrap() == c;
        let rects = c.rectangles();
        let disjoint = rects
            .iter()
            .enumerate()
            .all(|(i, a)| rects[i + 1..].iter().all(|b| a.intersect(b).is_empty()));
        if same && invariant && disjoint {
            agree += 1;
        } else if problems.len() < 3 {
            problems.push(format!(
                "trial {trial}: oracle={same} permutation={invariant} disjoint={disjoint}"
            ));
        }
    }
    let elapsed = start.elapsed();
    ensure(
        agree == TRIALS && elapsed < Duration::from_secs(60),
        format!(
            "{agree}/{TRIALS} agree ({equal_pairs} equivalent, {included_pairs} included pairs) in {elapsed:.1?} {}",
            problems.join("; ")
        ),
    )
}

fn order_independence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut grid = Vec::new();
    for p in [6u8, 17] {
        for s in 0..32u16 {
            for d in 0..32u16 {
                grid.push(HeaderPoint::service(p, s, d, 0));
            }
        }
    }
    grid.extend((0..=255u8).map(|t| HeaderPoint::service(1, 0, 0, t)));
    let mut disagreements = 0usize;
    for _ in 0..TRIALS {
        let rules: Vec<MatchRule> = (0..rng.random_range(0..8))
            .map(|_| {
                let (p, a, b) = random_rect(&mut rng);
                let shrink = |iv: Interval| Interval::new(iv.lo / 8, iv.hi / 8);
                if p == 1 {
                    to_rule((p, a, b))
                } else {
                    to_rule((p, shrink(a), shrink(b)))
                }
            })
            .collect();
        for x in &grid {
            let w = eval_whitelist(&rules, x).unwrap();
            if eval_first_match(&rules, x) != w || eval_last_match(&rules, x) != w {
                disagreements += 1;
            }
        }
    }
    ensure(
        disagreements == 0,
        format!(
            "{disagreements} disagreements over {TRIALS} lists x {} points",
            grid.len()
        ),
    )
}

fn table_one(p: &NetworkPolicy) -> Verdict {
    let generic = p.generic_permit_count();
    let anomalies: usize = p
        .acls
        .values()
        .flatten()
        .map(|a| find_acl_anomalies(a).len())
        .sum();
    let unassigned = p.unassigned_acls().len();
    ensure(
        generic == 0 && anomalies == 0 && unassigned == 0,
        format!("generic permits {generic} / intra-ACL anomalies {anomalies} / unassigned ACLs {unassigned}"),
    )
}

fn acl_block(text: &str, name: &str) -> String {
    let header = format!("ruleset for ACL: {name}\n");
    let start = text
        .find(&header)
        .map(|i| text[..i].rfind("INFO").unwrap())
        .unwrap();
    let end = text[start + 1..]
        .find("INFO")
        .map_or(text.len(), |i| start + 1 + i);
    text[start..end].trim_end().to_string() + "\n"
}

fn neutral_fidelity(p: &NetworkPolicy) -> Verdict {
    let block = acl_block(&render_acls(&p.acls["R1"]), "acl_2");
    let golden_path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/r1_acl_2.neutral");
    let golden = std::fs::read_to_string(&golden_path).unwrap_or_default();
    let published = [
        "remark~enable corp_zone to scada_zone HTTPS traffic (return path)",
        "permit~tcp~from~10.0.0.16/29~to~10.0.0.0/29~sport~[443]~dport~[`0-65535']~state~ESTABLISHED~log",
        "permit~tcp~from~10.0.0.16/29~to~10.0.128.4/30~sport~[443]~dport~[`0-65535']~state~ESTABLISHED~log",
        "remark~enable scada_zone to corp_zone WEB traffic (forward path)",
        "permit~tcp~from~10.0.0.16/29~to~10.0.0.0/29~sport~[`0-65535']~dport~[443]~state~NEW,ESTABLISHED~log",
        "permit~tcp~from~10.0.0.16/29~to~10.0.128.4/30~sport~[`0-65535']~dport~[80]~state~NEW,ESTABLISHED~log",
        "deny~ip~from~any~to~any~sport~~dport~~state~",
    ];
    let lines: Vec<&str> = block.lines().map(str::trim).collect();
    let found = published
        .iter()
        .filter(|l| lines.contains(&l.replace('`', "'").as_str()))
        .count();
    let closes = lines.last() == Some(&published[published.len() - 1]);
    ensure(
        block == golden && found == published.len() && closes,
        format!(
            "golden match {}, {found}/{} published lines present, terminal deny last {closes}",
            block == golden,
            published.len()
        ),
    )
}

fn vetting(p: &NetworkPolicy) -> Verdict {
    let start = Instant::now();
    let net = SimNetwork::from_policy(p);
    let results = vet_positive(&net);
    let passed = results.iter().filter(|r| r.outcome == 1).count();
    let ports = IntervalSet::from_intervals([
        Interval::new(0, 1023),
        Interval::new(24500, 24600),
        Interval::single(8080),
    ]);
    let leaks = vet_negative(&net, &ScanSpec::new(vec![1, 6, 17], ports));
    let elapsed = start.elapsed();
    ensure(
        passed == results.len()
            && !results.is_empty()
            && leaks.is_empty()
            && elapsed < Duration::from_secs(120),
        format!(
            "{passed}/{} flow rules pass, {} leaks, {elapsed:.1?}",
            results.len(),
            leaks.len()
        ),
    )
}

fn zone_derivation() -> Verdict {
    let m = zone_conduit_model(&load_topology(&read("topology.graphml")).unwrap()).unwrap();
    let want: BTreeSet<String> = ["z1", "z2", "z3", "az1", "fwz1", "fwz2", "fwz3"]
        .map(String::from)
        .into();
    let declared = load_declared_model(&read("zone_conduit.graphml")).unwrap();
    let cut: String = read("zone_conduit.graphml")
        .lines()
        .filter(|l| !l.contains("fwz3"))
        .collect();
    let mismatch = crosscheck_model(&m, &load_declared_model(&cut).unwrap());
    let names_fwz3 = mismatch
        .as_ref()
        .is_err_and(|e| e.to_string().contains("fwz3"));
    ensure(
        m.zone_names() == want && crosscheck_model(&m, &declared).is_ok() && names_fwz3,
        format!(
            "zones {:?}; declared model ok; missing fwz3 reported: {names_fwz3}",
            m.zone_names()
        ),
    )
}

fn loc_compression(p: &NetworkPolicy) -> Verdict {
    let m = loc_metrics(&spec_of(&read("policy.policyml")), p);
    ensure(
        m.high_level_loc <= 100 && m.ratio > 1.0,
        format!(
            "{} policy lines -> {} device lines, ratio {:.2} (published case: 80 -> 714, ratio 8.93)",
            m.high_level_loc, m.device_loc, m.ratio
        ),
    )
}

fn tree_hash(dir: &Path) -> String {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for path in names {
        h.update(path.file_name().unwrap().to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(&path).unwrap());
        h.update([0]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn determinism() -> Verdict {
    let scratch = tempfile::tempdir().unwrap();
    let mut hashes = Vec::new();
    for run in ["a", "b"] {
        let out = scratch.path().join(run);
        let f = fixtures();
        let status = Command::new(env!("CARGO_BIN_EXE_forestfw"))
            .arg("compile")
            .args(["--policy", f.join("policy.policyml").to_str().unwrap()])
            .args(["--topology", f.join("topology.graphml").to_str().unwrap()])
            .args([
                "--best-practice",
                f.join("bestpractice/scada.policyml").to_str().unwrap(),
            ])
            .arg("--ospf")
            .args(["--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        if !status.status.success() {
            return Err(format!(
                "compile failed: {}",
                String::from_utf8_lossy(&status.stderr)
            ));
        }
        hashes.push(tree_hash(&out));
    }
    ensure(
        hashes[0] == hashes[1],
        format!("sha256 {} / {}", &hashes[0][..16], &hashes[1][..16]),
    )
}

fn main() {
    let policy = compiled();
    let criteria: Vec<Criterion> = vec![
        ("overlap counterexample", Box::new(overlap_counterexample)),
        ("canonicalization oracle", Box::new(canonical_oracle)),
        ("whitelist order independence", Box::new(order_independence)),
        (
            "zero-defect ACL properties",
            Box::new(|| table_one(&policy)),
        ),
        (
            "neutral format fidelity",
            Box::new(|| neutral_fidelity(&policy)),
        ),
        ("end-to-end vetting", Box::new(|| vetting(&policy))),
        ("zone-conduit derivation", Box::new(zone_derivation)),
        ("LoC compression", Box::new(|| loc_compression(&policy))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} {name}: PASS {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
