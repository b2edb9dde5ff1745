//! (mu, lambda) evolution strategy over layout chromosomes.
//!
//! The run starts from the canonical layouts only. Each generation breeds
//! `lambda` offspring from the current population: two parents drawn with
//! probability proportional to fitness, ordered crossover at a random cut,
//! then an inversion of a random segment with probability `mutation_rate`.
//! The `mu` fittest offspring form the next population; parents never
//! survive.
//!
//! All random draws come from a ChaCha8 generator seeded with
//! `GAConfig::seed`, drawn on one thread before the offspring are evaluated
//! in parallel, so a run is reproducible on any platform and thread count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cache::HierarchySpec;
use crate::fitness::{Evaluator, FitnessError, FitnessValue};
use crate::layout::{Layout, LayoutError, Shape};
use crate::patterns::PatternSpec;

/// Offspring rejected by the contiguity constraint are redrawn at most this
/// many times per slot.
const MAX_REDRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolveError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("parents have different shapes {0} and {1}")]
    ShapeMismatch(Shape, Shape),
    #[error("no offspring satisfying {0} found after {MAX_REDRAWS} draws")]
    ConstraintUnsatisfiable(ContiguityConstraint),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
}

/// Requires mode-`dim` fibers to be contiguous in blocks of at least
/// `min_block` elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ContiguityConstraint {
    pub dim: usize,
    pub min_block: u64,
}

impl ContiguityConstraint {
    pub fn allows(&self, layout: &Layout) -> bool {
        layout
            .contiguity_block(self.dim)
            .is_ok_and(|block| block >= self.min_block)
    }
}

impl fmt::Display for ContiguityConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.dim, self.min_block.trailing_zeros())
    }
}

/// Parses `d:k`, meaning dimension `d` contiguous in blocks of `2^k`.
impl FromStr for ContiguityConstraint {
    type Err = EvolveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EvolveError::Config(format!("contiguity constraint {s:?} is not of the form d:k"));
        let (d, k) = s.split_once(':').ok_or_else(bad)?;
        let dim = d.trim().parse().map_err(|_| bad())?;
        let k: u32 = k.trim().parse().map_err(|_| bad())?;
        if k > 62 {
            return Err(bad());
        }
        Ok(ContiguityConstraint { dim, min_block: 1 << k })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GAConfig {
    pub mu: usize,
    pub lambda: usize,
    /// Probability that an offspring is mutated.
    pub mutation_rate: f64,
    pub generations: usize,
    pub seed: u64,
    pub contiguity: Option<ContiguityConstraint>,
}

impl Default for GAConfig {
    fn default() -> Self {
        GAConfig {
            mu: 20,
            lambda: 20,
            mutation_rate: 0.25,
            generations: 20,
            seed: 0,
            contiguity: None,
        }
    }
}

impl GAConfig {
    pub fn validate(&self, shape: &Shape) -> Result<(), EvolveError> {
        let bad = |msg: String| Err(EvolveError::Config(msg));
        if self.mu == 0 {
            return bad("mu must be at least 1".into());
        }
        if self.lambda < self.mu {
            return bad(format!(
                "comma selection needs lambda >= mu, got lambda {} < mu {}",
                self.lambda, self.mu
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad(format!("mutation rate {} is not in [0, 1]", self.mutation_rate));
        }
        if let Some(c) = self.contiguity {
            if c.dim >= shape.ndim() {
                return bad(format!("contiguity dimension {} out of range for shape {shape}", c.dim));
            }
            if c.min_block > shape.extent(c.dim) {
                return bad(format!(
                    "dimension {} has extent {}, cannot be contiguous in blocks of {}",
                    c.dim,
                    shape.extent(c.dim),
                    c.min_block
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub layout: Layout,
    pub fitness: FitnessValue,
}

impl Individual {
    pub fn value(&self) -> f64 {
        self.fitness.value
    }
}

/// Fitness descending, then rank sequence ascending.
fn by_rank(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    b.value().total_cmp(&a.value()).then_with(|| a.layout.cmp(&b.layout))
}

/// Ordered crossover for multiset chromosomes.
///
/// Repeated ranks are told apart by occurrence: the `k`-th `d` of one parent
/// corresponds to the `k`-th `d` of the other. The child keeps
/// `parent_a[start..end]` in place and fills the other positions, from
/// position 0 upward, with the genes of `parent_b` read left to right,
/// skipping the occurrences already supplied by the kept segment. The child
/// is always a permutation of the same multiset, and crossing a parent with
/// itself returns that parent.
pub fn ox_crossover(parent_a: &Layout, parent_b: &Layout, (start, end): (usize, usize)) -> Result<Layout, EvolveError> {
    if parent_a.shape() != parent_b.shape() {
        return Err(EvolveError::ShapeMismatch(
            parent_a.shape().clone(),
            parent_b.shape().clone(),
        ));
    }
    let a = parent_a.ranks();
    let len = a.len();
    assert!(
        start < end && end <= len,
        "cut ({start}, {end}) invalid for length {len}"
    );
    let bits = parent_a.shape().bits();
    let mut kept: Vec<Vec<bool>> = bits.iter().map(|&b| vec![false; b as usize]).collect();
    let mut seen = vec![0usize; bits.len()];
    for (pos, &g) in a.iter().enumerate() {
        if (start..end).contains(&pos) {
            kept[g][seen[g]] = true;
        }
        seen[g] += 1;
    }
    let mut child = a.to_vec();
    let mut free = (0..start).chain(end..len);
    seen.fill(0);
    for &g in parent_b.ranks() {
        let occurrence = seen[g];
        seen[g] += 1;
        if !kept[g][occurrence] {
            child[free.next().expect("one free slot per unkept gene")] = g;
        }
    }
    Ok(Layout::new(child, parent_a.shape().clone())?)
}

/// Reverses `layout.ranks()[start..end]`.
pub fn inversion_mutation(layout: &Layout, (start, end): (usize, usize)) -> Layout {
    assert!(start < end && end <= layout.ranks().len());
    layout.with_reversed(start, end)
}

/// Uniform pair `0 <= i < j <= len`.
pub fn random_segment<R: Rng + ?Sized>(rng: &mut R, len: usize) -> (usize, usize) {
    let picks = rand::seq::index::sample(rng, len + 1, 2);
    let (x, y) = (picks.index(0), picks.index(1));
    (x.min(y), x.max(y))
}

/// The two canonical layouts (dimension 0 contiguous, and last dimension
/// contiguous), deduplicated. Under a contiguity constraint on `d`, the
/// seeds are instead the canonical layouts with `d` contiguous and the other
/// axes ascending or descending.
pub fn seed_layouts(shape: &Shape, constraint: Option<ContiguityConstraint>) -> Vec<Layout> {
    let n = shape.ndim();
    let ascending: Vec<usize> = (0..n).collect();
    let descending: Vec<usize> = (0..n).rev().collect();
    let mut orders = vec![ascending, descending];
    if let Some(c) = constraint {
        for order in &mut orders {
            order.retain(|&d| d != c.dim);
            order.insert(0, c.dim);
        }
    }
    let mut seeds: Vec<Layout> = Vec::new();
    for order in orders {
        let layout = Layout::canonical(shape, &order).expect("orders are permutations");
        if !seeds.contains(&layout) {
            seeds.push(layout);
        }
    }
    seeds
}

/// Evaluated canonical seeds.
pub fn initial_population(
    shape: &Shape,
    evaluator: &Evaluator,
    constraint: Option<ContiguityConstraint>,
) -> Result<Vec<Individual>, EvolveError> {
    let seeds = seed_layouts(shape, constraint);
    evaluate(evaluator, seeds)
}

fn evaluate(evaluator: &Evaluator, layouts: Vec<Layout>) -> Result<Vec<Individual>, EvolveError> {
    let values = evaluator.evaluate_all(&layouts);
    layouts
        .into_iter()
        .zip(values)
        .map(|(layout, fitness)| {
            Ok(Individual {
                layout,
                fitness: fitness?,
            })
        })
        .collect()
}

/// Draws `lambda` offspring chromosomes from `population`.
pub fn breed<R: Rng + ?Sized>(
    population: &[Individual],
    config: &GAConfig,
    rng: &mut R,
) -> Result<Vec<Layout>, EvolveError> {
    assert!(!population.is_empty(), "cannot breed from an empty population");
    let weights: Vec<f64> = population.iter().map(Individual::value).collect();
    let pick = WeightedIndex::new(&weights).ok();
    let draw = |rng: &mut R| match &pick {
        Some(dist) => &population[dist.sample(rng)],
        // All fitness values zero: fall back to uniform choice.
        None => &population[rng.gen_range(0..population.len())],
    };
    let len = population[0].layout.ranks().len();
    let mut offspring = Vec::with_capacity(config.lambda);
    for _ in 0..config.lambda {
        let mut redraws = 0;
        loop {
            let a = draw(rng);
            let b = draw(rng);
            let cut = random_segment(rng, len);
            let mut child = ox_crossover(&a.layout, &b.layout, cut)?;
            if rng.gen_bool(config.mutation_rate) {
                child = inversion_mutation(&child, random_segment(rng, len));
            }
            match config.contiguity {
                Some(c) if !c.allows(&child) => {
                    redraws += 1;
                    if redraws >= MAX_REDRAWS {
                        return Err(EvolveError::ConstraintUnsatisfiable(c));
                    }
                }
                _ => {
                    offspring.push(child);
                    break;
                }
            }
        }
    }
    Ok(offspring)
}

/// Breeds and evaluates `lambda` offspring and keeps the `mu` best.
pub fn next_generation<R: Rng + ?Sized>(
    population: &[Individual],
    config: &GAConfig,
    evaluator: &Evaluator,
    rng: &mut R,
) -> Result<Vec<Individual>, EvolveError> {
    let offspring = breed(population, config, rng)?;
    let mut next = evaluate(evaluator, offspring)?;
    next.sort_by(by_rank);
    next.truncate(config.mu);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Fittest member of this generation.
    pub best: Individual,
    /// Population after selection, fittest first.
    pub population: Vec<Individual>,
}

impl GenerationRecord {
    fn new(generation: usize, mut population: Vec<Individual>) -> Self {
        population.sort_by(by_rank);
        let values: Vec<f64> = population.iter().map(Individual::value).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Rounding in the sum can push the mean of equal values past them.
        let mean = (values.iter().sum::<f64>() / values.len() as f64).clamp(min, max);
        GenerationRecord {
            generation,
            min,
            mean,
            max,
            best: population[0].clone(),
            population,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionHistory {
    /// Generation 0 holds the seeds.
    pub generations: Vec<GenerationRecord>,
    /// Fittest individual seen in any generation.
    pub best: Individual,
    /// Generation where `best` first appeared.
    pub best_generation: usize,
}

impl EvolutionHistory {
    /// Best fitness seen up to and including each generation.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.generations
            .iter()
            .scan(f64::NEG_INFINITY, |acc, g| {
                *acc = acc.max(g.max);
                Some(*acc)
            })
            .collect()
    }

    /// CSV with one row per generation:
    /// `generation,min_fitness,mean_fitness,max_fitness,best_layout`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "generation",
            "min_fitness",
            "mean_fitness",
            "max_fitness",
            "best_layout",
        ])?;
        for g in &self.generations {
            w.write_record([
                g.generation.to_string(),
                g.min.to_string(),
                g.mean.to_string(),
                g.max.to_string(),
                g.best.layout.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

/// Runs the full strategy with a prepared evaluator.
pub fn run_with_evaluator(evaluator: &Evaluator, config: &GAConfig) -> Result<EvolutionHistory, EvolveError> {
    let shape = evaluator.pattern().shape();
    config.validate(&shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population = initial_population(&shape, evaluator, config.contiguity)?;
    let mut generations = vec![GenerationRecord::new(0, population.clone())];
    for g in 1..=config.generations {
        population = next_generation(&population, config, evaluator, &mut rng)?;
        generations.push(GenerationRecord::new(g, population.clone()));
    }
    let mut best_generation = 0;
    for (i, g) in generations.iter().enumerate() {
        if g.best.value() > generations[best_generation].best.value() {
            best_generation = i;
        }
    }
    Ok(EvolutionHistory {
        best: generations[best_generation].best.clone(),
        best_generation,
        generations,
    })
}

/// Evolves layouts of `shape` for `pattern` on `hierarchy`.
pub fn run_evolution(
    shape: &Shape,
    pattern: &PatternSpec,
    hierarchy: &HierarchySpec,
    config: &GAConfig,
) -> Result<EvolutionHistory, EvolveError> {
    if &pattern.shape() != shape {
        return Err(EvolveError::ShapeMismatch(shape.clone(), pattern.shape()));
    }
    let evaluator = Evaluator::new(pattern.clone(), hierarchy.clone())?;
    run_with_evaluator(&evaluator, config)
}
