//! Generators for the benchmark problems.
//!
//! Each generator returns a [`Problem`] with its target network filled in.
//! Names accepted by [`BenchmarkSpec::from_str`]: `random`, `sudoku9`,
//! `sudoku4`, `jigsaw`, `examtt`, `nurse`, optionally followed by
//! `:key=value,...` overrides, e.g. `examtt:ns=2` or `random:n=20,m=40`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::SimulatedOracle;
use crate::error::ModelError;
use crate::model::{Constraint, ConstraintSet, Domain, Relation, VarId, Vocabulary};
use crate::problem::Problem;

/// Region id of every cell of the 9x9 jigsaw grid, row by row.
pub const JIGSAW_LAYOUT: [&str; 9] = [
    "000111222",
    "000111222",
    "000111252",
    "333344255",
    "333444555",
    "334444858",
    "666777858",
    "666777858",
    "666777888",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkSpec {
    Random { vars: usize, domain: i64, constraints: usize, seed: u64 },
    /// `block` x `block` boxes on a `block²` x `block²` grid.
    Sudoku { block: usize },
    Jigsaw,
    ExamTt { semesters: usize, courses: usize, days: usize, rooms: usize, timeslots: usize },
    Nurse { days: usize, shifts: usize, per_shift: usize, nurses: usize },
}

impl BenchmarkSpec {
    pub const RANDOM: BenchmarkSpec = BenchmarkSpec::Random { vars: 100, domain: 5, constraints: 495, seed: 0 };
    pub const SUDOKU9: BenchmarkSpec = BenchmarkSpec::Sudoku { block: 3 };
    pub const SUDOKU4: BenchmarkSpec = BenchmarkSpec::Sudoku { block: 2 };
    pub const EXAMTT: BenchmarkSpec =
        BenchmarkSpec::ExamTt { semesters: 8, courses: 6, days: 10, rooms: 3, timeslots: 3 };
    pub const NURSE: BenchmarkSpec = BenchmarkSpec::Nurse { days: 7, shifts: 3, per_shift: 5, nurses: 18 };

    pub fn name(&self) -> String {
        match *self {
            BenchmarkSpec::Random { vars, domain, constraints, seed } => {
                let mut params = Vec::new();
                if (vars, constraints) != (100, 495) {
                    params.push(format!("n={vars},m={constraints}"));
                }
                if domain != 5 {
                    params.push(format!("dom={domain}"));
                }
                if seed != 0 {
                    params.push(format!("seed={seed}"));
                }
                if params.is_empty() {
                    "random".into()
                } else {
                    format!("random:{}", params.join(","))
                }
            }
            BenchmarkSpec::Sudoku { block } => format!("sudoku{}", block * block),
            BenchmarkSpec::Jigsaw => "jigsaw".into(),
            BenchmarkSpec::ExamTt { semesters: 8, .. } => "examtt".into(),
            BenchmarkSpec::ExamTt { semesters, .. } => format!("examtt:ns={semesters}"),
            BenchmarkSpec::Nurse { days: 7, .. } => "nurse".into(),
            BenchmarkSpec::Nurse { days, .. } => format!("nurse:d={days}"),
        }
    }
}

impl fmt::Display for BenchmarkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for BenchmarkSpec {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, params) = s.split_once(':').unwrap_or((s, ""));
        let mut spec = match name.trim() {
            "random" => BenchmarkSpec::RANDOM,
            "sudoku9" | "sudoku" => BenchmarkSpec::SUDOKU9,
            "sudoku4" => BenchmarkSpec::SUDOKU4,
            "jigsaw" => BenchmarkSpec::Jigsaw,
            "examtt" => BenchmarkSpec::EXAMTT,
            "nurse" => BenchmarkSpec::NURSE,
            other => return Err(ModelError::Reject(format!("unknown benchmark `{other}`"))),
        };
        for kv in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| ModelError::Reject(format!("expected key=value, got `{kv}`")))?;
            let value: u64 = value
                .trim()
                .parse()
                .map_err(|_| ModelError::Reject(format!("`{key}` needs a non-negative integer")))?;
            let v = value as usize;
            match (&mut spec, key.trim()) {
                (BenchmarkSpec::Random { vars, .. }, "n") => *vars = v,
                (BenchmarkSpec::Random { domain, .. }, "dom") => *domain = value as i64,
                (BenchmarkSpec::Random { constraints, .. }, "m") => *constraints = v,
                (BenchmarkSpec::Random { seed, .. }, "seed") => *seed = value,
                (BenchmarkSpec::ExamTt { semesters, .. }, "ns") => *semesters = v,
                (BenchmarkSpec::ExamTt { courses, .. }, "cps") => *courses = v,
                (BenchmarkSpec::ExamTt { days, .. }, "d") => *days = v,
                (BenchmarkSpec::ExamTt { rooms, .. }, "r") => *rooms = v,
                (BenchmarkSpec::ExamTt { timeslots, .. }, "t") => *timeslots = v,
                (BenchmarkSpec::Nurse { days, .. }, "d") => *days = v,
                (BenchmarkSpec::Nurse { shifts, .. }, "s") => *shifts = v,
                (BenchmarkSpec::Nurse { per_shift, .. }, "ns") => *per_shift = v,
                (BenchmarkSpec::Nurse { nurses, .. }, "n") => *nurses = v,
                (_, key) => return Err(ModelError::Reject(format!("`{name}` has no parameter `{key}`"))),
            }
        }
        Ok(spec)
    }
}

pub fn comparisons() -> Vec<Relation> {
    Relation::COMPARISONS.to_vec()
}

fn reject(msg: impl Into<String>) -> ModelError {
    ModelError::Reject(msg.into())
}

pub fn generate_benchmark(spec: &BenchmarkSpec) -> Result<Problem, ModelError> {
    match *spec {
        BenchmarkSpec::Random { vars, domain, constraints, seed } => random(vars, domain, constraints, seed),
        BenchmarkSpec::Sudoku { block } => sudoku(block),
        BenchmarkSpec::Jigsaw => {
            let regions: Vec<Vec<usize>> = JIGSAW_LAYOUT
                .iter()
                .map(|row| row.bytes().map(|b| (b - b'0') as usize).collect())
                .collect();
            jigsaw(&regions)
        }
        BenchmarkSpec::ExamTt { semesters, courses, days, rooms, timeslots } => {
            exam_timetabling(semesters, courses, days, rooms, timeslots)
        }
        BenchmarkSpec::Nurse { days, shifts, per_shift, nurses } => nurse_rostering(days, shifts, per_shift, nurses),
    }
}

pub fn make_oracle(target: &ConstraintSet) -> SimulatedOracle {
    SimulatedOracle::new(target.clone())
}

/// Random network consistent with a hidden planted solution: each drawn pair
/// gets one relation chosen uniformly among those the planted values satisfy.
fn random(n: usize, domain: i64, m: usize, seed: u64) -> Result<Problem, ModelError> {
    if n < 2 || domain < 1 {
        return Err(reject("random needs at least 2 variables and a non-empty domain"));
    }
    let pairs = n * (n - 1) / 2;
    if m > pairs {
        return Err(reject(format!("{m} constraints do not fit on {pairs} variable pairs")));
    }
    let mut voc = Vocabulary::new();
    voc.add_tensor("x", &[n], Domain::interval(1, domain))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=domain)).collect();
    let language = comparisons();
    let mut target = ConstraintSet::new();
    for k in sample(&mut rng, pairs, m) {
        let (a, b) = unrank_pair(k, n);
        let fits: Vec<Relation> = language.iter().copied().filter(|r| r.holds(planted[a], planted[b])).collect();
        let rel = fits[rng.gen_range(0..fits.len())];
        target.insert(Constraint::new(rel, VarId(a), VarId(b))?);
    }
    Ok(Problem { vocabulary: voc, language, target: Some(target) })
}

/// k-th pair (a < b) in lexicographic order.
fn unrank_pair(mut k: usize, n: usize) -> (usize, usize) {
    let mut a = 0;
    while k >= n - 1 - a {
        k -= n - 1 - a;
        a += 1;
    }
    (a, a + 1 + k)
}

fn latin_grid(regions: &[Vec<usize>]) -> Result<Problem, ModelError> {
    let n = regions.len();
    if n == 0 || regions.iter().any(|r| r.len() != n) {
        return Err(reject("the region layout must be a square grid"));
    }
    let mut sizes = vec![0usize; n];
    for &r in regions.iter().flatten() {
        if r >= n {
            return Err(reject(format!("region id {r} out of range for a {n}x{n} grid")));
        }
        sizes[r] += 1;
    }
    if sizes.iter().any(|&s| s != n) {
        return Err(reject("regions do not partition the grid into equal parts"));
    }
    let mut voc = Vocabulary::new();
    voc.add_tensor("grid", &[n, n], Domain::interval(1, n as i64))?;
    let cell = |r: usize, c: usize| VarId(r * n + c);
    let mut target = ConstraintSet::new();
    for a in 0..n * n {
        for b in a + 1..n * n {
            let (ra, ca, rb, cb) = (a / n, a % n, b / n, b % n);
            if ra == rb || ca == cb || regions[ra][ca] == regions[rb][cb] {
                target.insert(Constraint::new(Relation::Neq, cell(ra, ca), cell(rb, cb))?);
            }
        }
    }
    Ok(Problem { vocabulary: voc, language: comparisons(), target: Some(target) })
}

fn sudoku(block: usize) -> Result<Problem, ModelError> {
    if block < 2 {
        return Err(reject("sudoku blocks must be at least 2x2"));
    }
    let n = block * block;
    let regions: Vec<Vec<usize>> = (0..n).map(|r| (0..n).map(|c| (r / block) * block + c / block).collect()).collect();
    latin_grid(&regions)
}

fn jigsaw(regions: &[Vec<usize>]) -> Result<Problem, ModelError> {
    latin_grid(regions)
}

/// Courses are numbered by semester; a course's value is its timeslot, and
/// `⌊slot / (rooms·timeslots)⌋` is its day.
fn exam_timetabling(ns: usize, cps: usize, days: usize, rooms: usize, slots: usize) -> Result<Problem, ModelError> {
    if ns == 0 || cps == 0 || days == 0 || rooms == 0 || slots == 0 {
        return Err(reject("exam timetabling parameters must be positive"));
    }
    let per_day = (rooms * slots) as i64;
    let mut voc = Vocabulary::new();
    voc.add_tensor("courses", &[ns, cps], Domain::interval(1, per_day * days as i64))?;
    let same_day = Relation::FloorDivNeq(per_day);
    let mut language = comparisons();
    language.push(same_day);
    let total = ns * cps;
    let mut target = ConstraintSet::new();
    for a in 0..total {
        for b in a + 1..total {
            let rel = if a / cps == b / cps { same_day } else { Relation::Neq };
            target.insert(Constraint::new(rel, VarId(a), VarId(b))?);
        }
    }
    Ok(Problem { vocabulary: voc, language, target: Some(target) })
}

fn nurse_rostering(days: usize, shifts: usize, per_shift: usize, nurses: usize) -> Result<Problem, ModelError> {
    if days == 0 || shifts == 0 || per_shift == 0 {
        return Err(reject("nurse rostering parameters must be positive"));
    }
    if nurses < shifts * per_shift {
        return Err(reject(format!("{nurses} nurses cannot cover {} distinct slots per day", shifts * per_shift)));
    }
    let mut voc = Vocabulary::new();
    voc.add_tensor("roster", &[days, shifts, per_shift], Domain::interval(1, nurses as i64))?;
    let per_day = shifts * per_shift;
    let var = |d: usize, k: usize| VarId(d * per_day + k);
    let mut target = ConstraintSet::new();
    for d in 0..days {
        for a in 0..per_day {
            for b in a + 1..per_day {
                target.insert(Constraint::new(Relation::Neq, var(d, a), var(d, b))?);
            }
        }
        if d + 1 < days {
            let last = (shifts - 1) * per_shift;
            for a in 0..per_shift {
                for b in 0..per_shift {
                    target.insert(Constraint::new(Relation::Neq, var(d, last + a), var(d + 1, b))?);
                }
            }
        }
    }
    Ok(Problem { vocabulary: voc, language: comparisons(), target: Some(target) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_bias;

    fn target_of(spec: BenchmarkSpec) -> ConstraintSet {
        generate_benchmark(&spec).unwrap().target.unwrap()
    }

    #[test]
    fn target_sizes() {
        assert_eq!(target_of(BenchmarkSpec::SUDOKU9).len(), 810);
        assert_eq!(target_of(BenchmarkSpec::NURSE).len(), 885);
        assert_eq!(target_of(BenchmarkSpec::RANDOM).len(), 495);
        let exam = target_of(BenchmarkSpec::EXAMTT);
        assert_eq!(exam.len(), 1128);
        assert_eq!(exam.iter().filter(|c| c.relation() == Relation::FloorDivNeq(9)).count(), 120);
        assert_eq!(target_of(BenchmarkSpec::SUDOKU4).len(), 56);
        assert_eq!(target_of(BenchmarkSpec::Jigsaw).len(), 811);
    }

    #[test]
    fn nurse_decomposition() {
        let p = generate_benchmark(&BenchmarkSpec::NURSE).unwrap();
        let voc = &p.vocabulary;
        let within = p.target.unwrap().iter().filter(|c| voc.index_of(c.scope()[0])[0] == voc.index_of(c.scope()[1])[0]).count();
        assert_eq!(within, 735);
    }

    #[test]
    fn every_target_is_inside_the_bias() {
        for spec in [BenchmarkSpec::SUDOKU4, "examtt:ns=2".parse().unwrap(), "nurse:d=2".parse().unwrap(), "random:n=20,m=40".parse().unwrap()] {
            let p = generate_benchmark(&spec).unwrap();
            let bias = build_bias(&p.vocabulary, &p.language, None, None).unwrap();
            assert!(p.target.unwrap().iter().all(|c| bias.contains(c)), "{spec}");
        }
    }

    #[test]
    fn random_is_a_function_of_the_seed() {
        let a = target_of("random:seed=5".parse().unwrap());
        let b = target_of("random:seed=5".parse().unwrap());
        let c = target_of("random:seed=6".parse().unwrap());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn random_has_one_constraint_per_pair() {
        let t = target_of(BenchmarkSpec::RANDOM);
        let scopes: std::collections::HashSet<_> = t.iter().map(|c| c.scope()).collect();
        assert_eq!(scopes.len(), t.len());
    }

    #[test]
    fn unrank_covers_all_pairs() {
        let n = 7;
        let pairs: Vec<_> = (0..n * (n - 1) / 2).map(|k| unrank_pair(k, n)).collect();
        let mut expected = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                expected.push((a, b));
            }
        }
        assert_eq!(pairs, expected);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!("nurse:n=3".parse::<BenchmarkSpec>().map(|s| generate_benchmark(&s)).unwrap().is_err());
        assert!("random:m=100000".parse::<BenchmarkSpec>().map(|s| generate_benchmark(&s)).unwrap().is_err());
        assert!("sudoku9:x=1".parse::<BenchmarkSpec>().is_err());
        assert!("chess".parse::<BenchmarkSpec>().is_err());
        let bad = vec![vec![0, 0], vec![0, 1]];
        assert!(jigsaw(&bad).is_err());
    }

    #[test]
    fn names_round_trip() {
        for s in ["random", "sudoku9", "sudoku4", "jigsaw", "examtt", "nurse", "examtt:ns=2", "nurse:d=2", "random:n=20,m=40"] {
            let spec: BenchmarkSpec = s.parse().unwrap();
            assert_eq!(spec.name(), s);
        }
    }
}
