//! Similarity-weighted vacancy sampling, applications and applicant ranking.

use rand::Rng;

use crate::domain::{prefers_switch, Agent, Cell, Position};
use crate::error::Result;
use crate::similarity::SimilarityBundle;

/// Vacancies open during one matching phase, indexed for sampling with
/// probability proportional to the composite similarity from any source cell.
///
/// The score factorises over the three dimensions, so a draw picks the
/// region, then the industry, then the occupation of the target cell, and
/// finally a vacancy within that cell uniformly. Partial sums are cached per
/// (industry, occupation) source pair for the lifetime of the index.
pub struct VacancyIndex<'a> {
    bundle: &'a SimilarityBundle,
    dims: (usize, usize, usize),
    /// Vacancy slots grouped by target cell, in ascending slot order.
    slots: Vec<usize>,
    cell_start: Vec<usize>,
    /// Vacancy counts per target cell.
    counts: Vec<f64>,
    /// `occ_mass[o][r' * n_i + i']`: sum over o' of O^nu[o, o'] * counts[r', i', o'].
    occ_mass: Vec<Vec<f64>>,
    /// Lazily filled `region_mass[(i, o)][r']`.
    region_mass: Vec<Option<Vec<f64>>>,
    scratch: Vec<f64>,
}

impl<'a> VacancyIndex<'a> {
    pub fn new(bundle: &'a SimilarityBundle, positions: &[Position], vacancies: &[usize]) -> Self {
        let dims = bundle.dims();
        let (n_r, n_i, n_o) = dims;
        let n_cells = n_r * n_i * n_o;
        let cell_of = |slot: usize| {
            let c = positions[slot].cell;
            (c.region * n_i + c.industry) * n_o + c.occupation
        };

        let mut counts = vec![0.0; n_cells];
        for &slot in vacancies {
            counts[cell_of(slot)] += 1.0;
        }
        let mut cell_start = vec![0usize; n_cells + 1];
        for k in 0..n_cells {
            cell_start[k + 1] = cell_start[k] + counts[k] as usize;
        }
        let mut fill = cell_start.clone();
        let mut slots = vec![0usize; vacancies.len()];
        let mut sorted = vacancies.to_vec();
        sorted.sort_unstable();
        for slot in sorted {
            let k = cell_of(slot);
            slots[fill[k]] = slot;
            fill[k] += 1;
        }

        let occ = bundle.powered(crate::Dimension::Occupation);
        let mut occ_mass = vec![vec![0.0; n_r * n_i]; n_o];
        for (k, &count) in counts.iter().enumerate() {
            if count == 0.0 {
                continue;
            }
            let target_o = k % n_o;
            let ri = k / n_o;
            for (o, row) in occ_mass.iter_mut().enumerate() {
                row[ri] += occ[[o, target_o]] * count;
            }
        }

        VacancyIndex {
            bundle,
            dims,
            slots,
            cell_start,
            counts,
            occ_mass,
            region_mass: vec![None; n_i * n_o],
            scratch: Vec::with_capacity(n_r.max(n_i).max(n_o)),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn region_mass(&mut self, industry: usize, occupation: usize) -> &[f64] {
        let (n_r, n_i, n_o) = self.dims;
        let key = industry * n_o + occupation;
        if self.region_mass[key].is_none() {
            let ind = self.bundle.powered(crate::Dimension::Industry);
            let row = &self.occ_mass[occupation];
            let mass: Vec<f64> = (0..n_r)
                .map(|r| {
                    (0..n_i)
                        .map(|i| ind[[industry, i]] * row[r * n_i + i])
                        .sum::<f64>()
                })
                .collect();
            self.region_mass[key] = Some(mass);
        }
        self.region_mass[key].as_deref().unwrap()
    }

    /// Draws a vacancy slot with probability proportional to its score from
    /// `source`; `None` when there are no vacancies or all scores are zero.
    pub fn sample<R: Rng + ?Sized>(&mut self, source: Cell, rng: &mut R) -> Option<usize> {
        if self.slots.is_empty() {
            return None;
        }
        let (n_r, n_i, n_o) = self.dims;
        let bundle = self.bundle;
        let reg = bundle.powered(crate::Dimension::Region).row(source.region);
        let ind = bundle.powered(crate::Dimension::Industry);
        let occ = bundle.powered(crate::Dimension::Occupation);
        let mut scratch = std::mem::take(&mut self.scratch);

        scratch.clear();
        let mass = self.region_mass(source.industry, source.occupation);
        scratch.extend((0..n_r).map(|r| reg[r] * mass[r]));
        let region = pick(&scratch, rng)?;

        let row = &self.occ_mass[source.occupation];
        scratch.clear();
        scratch.extend((0..n_i).map(|i| ind[[source.industry, i]] * row[region * n_i + i]));
        let industry = pick(&scratch, rng)?;

        let base = (region * n_i + industry) * n_o;
        scratch.clear();
        scratch.extend((0..n_o).map(|o| occ[[source.occupation, o]] * self.counts[base + o]));
        let occupation = pick(&scratch, rng)?;
        self.scratch = scratch;

        let k = base + occupation;
        let (lo, hi) = (self.cell_start[k], self.cell_start[k + 1]);
        Some(self.slots[rng.random_range(lo..hi)])
    }
}

/// Index drawn with probability proportional to `weights`.
fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(k);
            if acc > target {
                return Some(k);
            }
        }
    }
    last
}

/// An application lodged during the matching phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Application {
    pub agent: usize,
    pub score: f64,
    pub submission: usize,
}

/// Samples one vacancy for an active agent and decides whether it applies.
///
/// The source cell is the agent's current position, or its last one when
/// unemployed. Employed agents apply only if the move raises their optimal
/// utility; unemployed agents apply to whatever they are matched with.
/// Returns the vacancy slot and the similarity score of the match.
pub fn match_and_apply<R: Rng + ?Sized>(
    agent: &Agent,
    vacancies: &mut VacancyIndex<'_>,
    positions: &[Position],
    gamma: f64,
    rng: &mut R,
) -> Result<Option<(usize, f64)>> {
    let source = agent.last_position.cell;
    let Some(slot) = vacancies.sample(source, rng) else {
        return Ok(None);
    };
    let target = &positions[slot];
    if agent.is_employed() && !prefers_switch(agent, target.wage, gamma)? {
        return Ok(None);
    }
    Ok(Some((slot, vacancies.bundle.score(source, target.cell))))
}

/// Best-ranked applicant: highest score, ties to the earliest submission.
pub fn rank_applicants(applications: &[Application]) -> Option<Application> {
    applications.iter().copied().reduce(|best, a| {
        if a.score > best.score || (a.score == best.score && a.submission < best.submission) {
            a
        } else {
            best
        }
    })
}
