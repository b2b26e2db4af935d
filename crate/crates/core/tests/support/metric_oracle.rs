use captiongan::math::rng::seeded;
use rand::Rng;

pub type Tok = usize;

pub fn random_sentence(rng: &mut impl Rng, min: usize) -> Vec<Tok> {
    let len = rng.random_range(min..=8);
    (0..len).map(|_| rng.random_range(0..6)).collect()
}

pub struct Case {
    pub cands: Vec<Vec<Tok>>,
    pub refs: Vec<Vec<Vec<Tok>>>,
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = seeded(seed);
    let images = rng.random_range(2..=4);
    let cands = (0..images).map(|_| random_sentence(&mut rng, 1)).collect();
    let refs = (0..images)
        .map(|_| (0..rng.random_range(1..=4)).map(|_| random_sentence(&mut rng, 1)).collect())
        .collect();
    Case { cands, refs }
}

impl Case {
    pub fn views(&self) -> (Vec<&[Tok]>, Vec<Vec<&[Tok]>>) {
        (
            self.cands.iter().map(|c| c.as_slice()).collect(),
            self.refs.iter().map(|rs| rs.iter().map(|r| r.as_slice()).collect()).collect(),
        )
    }
}

pub fn grams(s: &[Tok], n: usize) -> Vec<Vec<Tok>> {
    if s.len() < n {
        return vec![];
    }
    (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
}

pub fn occurrences(list: &[Vec<Tok>], g: &[Tok]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

pub fn oracle_precision(c: &[Tok], refs: &[Vec<Tok>], n: usize) -> (usize, usize) {
    let cg = grams(c, n);
    let mut done: Vec<Vec<Tok>> = vec![];
    let mut clipped = 0;
    for g in &cg {
        if done.contains(g) {
            continue;
        }
        done.push(g.clone());
        let mut best = 0;
        for r in refs {
            best = best.max(occurrences(&grams(r, n), g));
        }
        clipped += occurrences(&cg, g).min(best);
    }
    (clipped, cg.len())
}

pub fn oracle_closest(c: usize, refs: &[Vec<Tok>]) -> usize {
    let mut best = refs[0].len();
    for r in refs {
        let d = (r.len() as i64 - c as i64).abs();
        let bd = (best as i64 - c as i64).abs();
        if d < bd || (d == bd && r.len() < best) {
            best = r.len();
        }
    }
    best
}

pub fn oracle_bleu(cl: &[usize], tot: &[usize], c: usize, r: usize) -> f64 {
    let mut prod = 1.0;
    for i in 0..cl.len() {
        if cl[i] == 0 {
            return 0.0;
        }
        prod *= cl[i] as f64 / tot[i] as f64;
    }
    let bp = if c > r { 1.0 } else if c == 0 { 0.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * prod.powf(1.0 / cl.len() as f64)
}

pub fn oracle_corpus_bleu(case: &Case, max_n: usize) -> f64 {
    let mut cl = vec![0; max_n];
    let mut tot = vec![0; max_n];
    let (mut c, mut r) = (0, 0);
    for (cand, refs) in case.cands.iter().zip(&case.refs) {
        for n in 1..=max_n {
            let (a, b) = oracle_precision(cand, refs, n);
            cl[n - 1] += a;
            tot[n - 1] += b;
        }
        c += cand.len();
        r += oracle_closest(cand.len(), refs);
    }
    oracle_bleu(&cl, &tot, c, r)
}

pub fn is_subsequence(sub: &[Tok], s: &[Tok]) -> bool {
    let mut it = s.iter();
    sub.iter().all(|x| it.any(|y| y == x))
}

pub fn oracle_lcs(a: &[Tok], b: &[Tok]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<Tok> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
        if sub.len() > best && is_subsequence(&sub, b) {
            best = sub.len();
        }
    }
    best
}

pub fn oracle_rouge(c: &[Tok], refs: &[Vec<Tok>]) -> f64 {
    let mut best = 0.0f64;
    for r in refs {
        let l = oracle_lcs(c, r) as f64;
        if l == 0.0 {
            continue;
        }
        let (rec, prec) = (l / r.len() as f64, l / c.len() as f64);
        best = best.max(2.44 * rec * prec / (rec + 1.44 * prec));
    }
    best
}

/// Dense TF-IDF vectors over every n-gram present anywhere.
pub fn oracle_cider(case: &Case) -> Vec<f64> {
    let m = case.cands.len() as f64;
    let mut scores = vec![0.0; case.cands.len()];
    for n in 1..=4 {
        let mut space: Vec<Vec<Tok>> = vec![];
        for s in case.cands.iter().chain(case.refs.iter().flatten()) {
            for g in grams(s, n) {
                if !space.contains(&g) {
                    space.push(g);
                }
            }
        }
        let idf: Vec<f64> = space
            .iter()
            .map(|g| {
                let df = case.refs.iter().filter(|rs| rs.iter().any(|r| grams(r, n).contains(g))).count();
                (m / (df.max(1) as f64)).ln()
            })
            .collect();
        let vec_of = |s: &[Tok]| -> Vec<f64> {
            let gs = grams(s, n);
            space.iter().zip(&idf).map(|(g, w)| occurrences(&gs, g) as f64 * w).collect()
        };
        for (i, (c, rs)) in case.cands.iter().zip(&case.refs).enumerate() {
            let cv = vec_of(c);
            let mut total = 0.0;
            for r in rs {
                let rv = vec_of(r);
                let dot: f64 = cv.iter().zip(&rv).map(|(a, b)| a * b).sum();
                let na = cv.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nb = rv.iter().map(|a| a * a).sum::<f64>().sqrt();
                if na > 0.0 && nb > 0.0 {
                    total += dot / (na * nb);
                }
            }
            scores[i] += total / rs.len() as f64 / 4.0 * 10.0;
        }
    }
    scores
}
