//! Gradient-free score minimizers over discrete gene vectors: the
//! self-adaptive uniform-mixing evolutionary algorithm and a fixed-rate
//! genetic-algorithm comparator with single-point crossover.
//!
//! Fitness is the oracle's malicious score of the perturbed window; lower is
//! better. Every fitness evaluation costs one oracle query, so both
//! minimizers take a hard evaluation budget and stop early once the oracle
//! calls any candidate benign.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::attack::EaParams;
use crate::vocab::TokenId;

/// Domain shared by every gene of a candidate: insertion token values drawn
/// from D' (random perturbation) or insertion positions in `[0, n)` (benign
/// perturbation).
#[derive(Debug, Clone)]
pub enum GeneDomain<'a> {
    Tokens(&'a [TokenId]),
    Positions(usize),
}

impl GeneDomain<'_> {
    fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        match self {
            GeneDomain::Tokens(pool) => *pool.choose(rng).expect("non-empty token pool"),
            GeneDomain::Positions(n) => rng.gen_range(0..*n as u32),
        }
    }
}

/// One member of the population: the modifiable slots plus its own mutation
/// rate (low or high).
#[derive(Debug, Clone)]
pub struct Candidate {
    pub genes: Vec<u32>,
    pub high_rate: bool,
    pub fitness: f64,
}

impl Candidate {
    fn random<R: Rng>(len: usize, domain: &GeneDomain, rng: &mut R) -> Self {
        let genes = (0..len).map(|_| domain.sample(rng)).collect();
        Self { genes, high_rate: rng.gen_bool(0.5), fitness: f64::INFINITY }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub best: Candidate,
    /// Fitness evaluations actually spent.
    pub evaluations: u64,
    /// True when the oracle called the best candidate benign.
    pub evaded: bool,
    /// True when the fitness source stopped answering (budget/throttle).
    pub aborted: bool,
}

struct Driver<'a, F, R> {
    eval: F,
    rng: &'a mut R,
    budget: u64,
    spent: u64,
    best: Option<Candidate>,
    evaded: bool,
    aborted: bool,
}

impl<F, R> Driver<'_, F, R>
where
    F: FnMut(&[u32]) -> Option<(f64, bool)>,
    R: Rng,
{
    /// Evaluates a candidate, tracking best-ever; returns false when the
    /// search must stop (budget spent, early evasion, or abort). The eval
    /// yields the score plus the oracle's benign verdict, which is what
    /// decides evasion: the attacker never learns the decision boundary.
    fn score(&mut self, cand: &mut Candidate) -> bool {
        if self.spent >= self.budget {
            return false;
        }
        match (self.eval)(&cand.genes) {
            None => {
                self.aborted = true;
                false
            }
            Some((fitness, benign)) => {
                self.spent += 1;
                cand.fitness = fitness;
                if benign {
                    // `best` must be the verified-benign candidate: callers
                    // commit exactly these genes.
                    self.best = Some(cand.clone());
                    self.evaded = true;
                    return false;
                }
                let better = self.best.as_ref().map_or(true, |b| fitness < b.fitness);
                if better {
                    self.best = Some(cand.clone());
                }
                self.spent < self.budget
            }
        }
    }

    /// Tournament of two uniform picks; ties broken uniformly at random.
    fn tournament<'p>(&mut self, pop: &'p [Candidate]) -> &'p Candidate {
        let a = &pop[self.rng.gen_range(0..pop.len())];
        let b = &pop[self.rng.gen_range(0..pop.len())];
        if a.fitness < b.fitness {
            a
        } else if b.fitness < a.fitness {
            b
        } else if self.rng.gen_bool(0.5) {
            a
        } else {
            b
        }
    }

    fn mutate(&mut self, cand: &mut Candidate, rate: f64, domain: &GeneDomain) {
        for gene in &mut cand.genes {
            if self.rng.gen_bool(rate.min(1.0)) {
                *gene = domain.sample(self.rng);
            }
        }
    }

    fn finish(self, fallback: Candidate) -> MinimizeResult {
        MinimizeResult {
            best: self.best.unwrap_or(fallback),
            evaluations: self.spent,
            evaded: self.evaded,
            aborted: self.aborted,
        }
    }
}

fn rates(m: usize, params: &EaParams) -> (f64, f64) {
    let m = m.max(1) as f64;
    (params.low_rate.unwrap_or(1.0 / m), params.high_rate.unwrap_or(4.0 / m))
}

fn initial_population<R: Rng>(
    initial: &[u32],
    domain: &GeneDomain,
    size: usize,
    rng: &mut R,
) -> Vec<Candidate> {
    let mut pop = Vec::with_capacity(size);
    pop.push(Candidate { genes: initial.to_vec(), high_rate: rng.gen_bool(0.5), fitness: f64::INFINITY });
    while pop.len() < size {
        pop.push(Candidate::random(initial.len(), domain, rng));
    }
    pop
}

/// Self-adaptive uniform-mixing EA: each child is the better of two uniform
/// picks, switches its mutation rate between low and high with probability
/// `switch_prob`, then replicates with per-gene mutation at the carried
/// rate. The whole old generation dies; the best-ever candidate is tracked
/// separately and returned.
pub fn ea_minimize<F, R>(
    eval: F,
    initial: &[u32],
    domain: &GeneDomain,
    iterations: u64,
    params: &EaParams,
    rng: &mut R,
) -> MinimizeResult
where
    F: FnMut(&[u32]) -> Option<(f64, bool)>,
    R: Rng,
{
    let (low, high) = rates(initial.len(), params);
    let mut driver =
        Driver { eval, rng, budget: iterations, spent: 0, best: None, evaded: false, aborted: false };
    let mut pop = initial_population(initial, domain, params.population.max(2), driver.rng);
    let fallback = pop[0].clone();

    let mut live = true;
    for cand in pop.iter_mut() {
        if !driver.score(cand) {
            live = false;
            break;
        }
    }
    while live {
        let mut next = Vec::with_capacity(pop.len());
        for _ in 0..pop.len() {
            let parent = driver.tournament(&pop).clone();
            let mut child = parent;
            if driver.rng.gen_bool(params.switch_prob) {
                child.high_rate = !child.high_rate;
            }
            let rate = if child.high_rate { high } else { low };
            driver.mutate(&mut child, rate, domain);
            let alive = driver.score(&mut child);
            next.push(child);
            if !alive {
                live = false;
                break;
            }
        }
        // Unevaluated stragglers of an interrupted generation never enter
        // the population.
        next.retain(|c| c.fitness.is_finite());
        if !next.is_empty() {
            pop = next;
        }
    }
    driver.finish(fallback)
}

/// Fixed-rate GA comparator: two tournament winners, single-point crossover,
/// then per-gene mutation at a fixed rate.
pub fn ga_minimize<F, R>(
    eval: F,
    initial: &[u32],
    domain: &GeneDomain,
    iterations: u64,
    params: &EaParams,
    rng: &mut R,
) -> MinimizeResult
where
    F: FnMut(&[u32]) -> Option<(f64, bool)>,
    R: Rng,
{
    let m = initial.len().max(1) as f64;
    let rate = params.ga_mutation_rate.unwrap_or(1.0 / m);
    let mut driver =
        Driver { eval, rng, budget: iterations, spent: 0, best: None, evaded: false, aborted: false };
    let mut pop = initial_population(initial, domain, params.population.max(2), driver.rng);
    let fallback = pop[0].clone();

    let mut live = true;
    for cand in pop.iter_mut() {
        if !driver.score(cand) {
            live = false;
            break;
        }
    }
    while live {
        let mut next = Vec::with_capacity(pop.len());
        for _ in 0..pop.len() {
            let a = driver.tournament(&pop).clone();
            let b = driver.tournament(&pop).clone();
            let mut child = crossover(&a, &b, driver.rng);
            driver.mutate(&mut child, rate, domain);
            let alive = driver.score(&mut child);
            next.push(child);
            if !alive {
                live = false;
                break;
            }
        }
        next.retain(|c| c.fitness.is_finite());
        if !next.is_empty() {
            pop = next;
        }
    }
    driver.finish(fallback)
}

/// Single-point crossover; identical parents yield an identical child.
fn crossover<R: Rng>(a: &Candidate, b: &Candidate, rng: &mut R) -> Candidate {
    let len = a.genes.len();
    let cut = if len <= 1 { len } else { rng.gen_range(1..len) };
    let mut genes = a.genes[..cut].to_vec();
    genes.extend_from_slice(&b.genes[cut..]);
    Candidate { genes, high_rate: a.high_rate, fitness: f64::INFINITY }
}
