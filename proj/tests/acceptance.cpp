// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <numeric>
#include <set>
#include <string>
#include <thread>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include "beamscan/block_likelihood.hpp"
#include "beamscan/bstat.hpp"
#include "beamscan/exact_oracle.hpp"
#include "beamscan/mcmc.hpp"
#include "beamscan/simulator.hpp"

using namespace beamscan;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

bool report(int id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
  return ok;
}

std::size_t hw_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::vector<std::string> snp_ids(std::size_t L) {
  std::vector<std::string> ids(L);
  for (std::size_t s = 0; s < L; ++s) ids[s] = "snp" + std::to_string(s);
  return ids;
}

std::vector<std::uint64_t> positions(std::size_t L) {
  std::vector<std::uint64_t> pos(L);
  for (std::size_t s = 0; s < L; ++s) pos[s] = 1000 * (s + 1);
  return pos;
}

// One diploid individual drawn from the founder mosaic.
std::vector<Genotype> draw_individual(const FounderPool& pool, Rng& rng) {
  std::vector<Genotype> row(pool.snp_count());
  for (std::size_t b = 0; b < pool.blocks().size(); ++b) {
    const FounderBlock& fb = pool.blocks()[b];
    const std::size_t h1 = pool.draw_founder(b, rng), h2 = pool.draw_founder(b, rng);
    for (std::size_t k = 0; k < fb.width; ++k) {
      row[fb.first + k] = static_cast<Genotype>(fb.haplotypes[h1][k] + fb.haplotypes[h2][k]);
    }
  }
  return row;
}

// Founder-mosaic data where only `causal` matters, with per-allele relative
// risk r (multiplicative, as in the no-interaction model).
GenotypeDataset one_locus_dataset(const std::vector<std::size_t>& widths, std::size_t causal,
                                  double r, std::size_t n_cases, std::size_t n_controls,
                                  std::uint64_t seed) {
  Rng rng(seed);
  FounderPoolConfig cfg;
  cfg.block_widths = widths;
  FounderPool pool = FounderPool::generate(cfg, rng);
  pool.set_allele_frequency(causal, 0.3);
  std::vector<std::vector<Genotype>> cases, controls;
  while (cases.size() < n_cases) {
    auto row = draw_individual(pool, rng);
    if (rng.uniform() < std::pow(r, row[causal]) / (r * r)) cases.push_back(std::move(row));
  }
  while (controls.size() < n_controls) controls.push_back(draw_individual(pool, rng));
  const std::size_t L = pool.snp_count();
  return GenotypeDataset::from_rows(snp_ids(L), positions(L), cases, controls);
}

// Pearson chi-square on the 2 x 3 genotype table; empty columns are dropped.
double single_snp_pvalue(const GenotypeDataset& d, std::size_t snp) {
  const auto cc = column_counts(d, snp);
  const double nd = static_cast<double>(d.case_count());
  const double nu = static_cast<double>(d.control_count());
  double stat = 0.0;
  int cols = 0;
  for (int g = 0; g < 3; ++g) {
    const double col = static_cast<double>(cc.cases[g] + cc.controls[g]);
    if (col == 0) continue;
    ++cols;
    const double ed = col * nd / (nd + nu), eu = col * nu / (nd + nu);
    stat += (cc.cases[g] - ed) * (cc.cases[g] - ed) / ed;
    stat += (cc.controls[g] - eu) * (cc.controls[g] - eu) / eu;
  }
  if (cols < 2) return 1.0;
  return boost::math::cdf(
      boost::math::complement(boost::math::chi_squared(cols - 1), stat));
}

// 1. exp(log_marginal) against the sequential predictive product.
bool criterion1() {
  const auto t0 = Clock::now();
  Rng rng(101);
  const DirichletConfig cfg;
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t w = 1 + rng.index(12);
    const std::size_t n = rng.index(2001);
    // a handful of recurring diplotypes plus noise, like a real block
    const std::size_t kinds = 1 + rng.index(20);
    std::vector<std::vector<Genotype>> patterns(kinds, std::vector<Genotype>(w));
    for (auto& p : patterns) {
      for (auto& g : p) g = static_cast<Genotype>(rng.index(3));
    }
    std::vector<std::vector<Genotype>> rows(n);
    for (auto& row : rows) {
      row = patterns[rng.index(kinds)];
      if (rng.uniform() < 0.1) row[rng.index(w)] = static_cast<Genotype>(rng.index(3));
    }
    const auto d = GenotypeDataset::from_rows(snp_ids(w), positions(w), rows, {});
    const auto counts = count_diplotypes(d, 0, w, Cohort::both);
    const double lm = log_marginal(counts, cfg);

    // observations in row order
    const long double alpha = std::exp(static_cast<long double>(cfg.log_alpha(w)));
    std::map<std::vector<Genotype>, std::size_t> seen;
    long double acc = 0.0L;
    for (std::size_t t = 0; t < n; ++t) {
      std::size_t& k = seen[rows[t]];
      acc += std::log((k + alpha) / (t + static_cast<long double>(cfg.rho)));
      ++k;
    }
    worst = std::max(worst, static_cast<double>(std::fabs(std::expm1(lm - acc))));
  }
  const double secs = seconds_since(t0);
  return report(1, worst < 1e-10 && secs < 10.0,
                fmt::format("max relative error {:.3g} over 1000 tables, {:.2f} s", worst, secs));
}

// 2. Sampler against exact enumeration on L = 6.
bool criterion2() {
  const auto t0 = Clock::now();
  double worst_assoc = 0.0, worst_bd = 0.0;
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto d = one_locus_dataset({3, 3}, 1, 2.0, 50, 50, 200 + k);
    const auto [pr, c] = default_priors(6, d.region_length(), 50, 50);
    const auto exact = enumerate_posterior(d, pr, c, hw_threads());
    const auto mc = run_chain(d, pr, c, Schedule{5000, 50000, 1}, 300 + k);
    for (std::size_t i = 0; i < 6; ++i) {
      worst_assoc = std::max(worst_assoc, std::fabs(mc.assoc_posterior[i] - exact.p_assoc[i]));
      worst_bd = std::max(worst_bd, std::fabs(mc.boundary_posterior[i] - exact.p_boundary[i]));
    }
  }
  const double secs = seconds_since(t0);
  return report(2, worst_assoc <= 0.05 && worst_bd <= 0.05 && secs < 300.0,
                fmt::format("max |dP(assoc)| {:.4f}, max |dP(boundary)| {:.4f}, {:.1f} s",
                            worst_assoc, worst_bd, secs));
}

// Independent Hardy-Weinberg SNPs with allele frequency f.
GenotypeDataset hwe_dataset(std::size_t L, std::size_t n_cases, std::size_t n_controls, double f,
                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<Genotype>> cases(n_cases), controls(n_controls);
  for (auto* rows : {&cases, &controls}) {
    for (auto& row : *rows) {
      row.resize(L);
      for (auto& g : row) g = static_cast<Genotype>(rng.bernoulli(f) + rng.bernoulli(f));
    }
  }
  return GenotypeDataset::from_rows(snp_ids(L), positions(L), cases, controls);
}

// 3. Frozen-membership block kernel on L = 4. Rare alleles keep the exact
// posterior spread over all eight partitions.
bool criterion3() {
  const auto d = hwe_dataset(4, 50, 50, 0.02, 33);
  auto [pr, c] = default_priors(4, d.region_length(), 50, 50);
  pr.p_boundary = 0.5;
  const MembershipVector m(std::vector<std::uint8_t>{1, 0, 2, 0});
  const auto exact = exact_partition_posterior(d, pr, c, m);
  ChainSampler s(d, pr, c, 17, BlockPartition::singletons(4), m, SamplerOptions{false});
  std::vector<double> freq(exact.size(), 0.0);
  const std::size_t steps = 1000000;
  for (std::size_t t = 0; t < steps; ++t) {
    s.block_move_step();
    freq[partition_mask(s.state().partition)] += 1.0 / steps;
  }
  double tv = 0.0;
  for (std::size_t k = 0; k < exact.size(); ++k) tv += 0.5 * std::fabs(freq[k] - exact[k]);
  const double top = *std::max_element(exact.begin(), exact.end());
  return report(3, tv < 0.02,
                fmt::format("total variation {:.4f} (largest exact mass {:.3f})", tv, top));
}

// QQ slope of sorted 2 (B - shift) against chi-square quantiles.
double qq_slope(std::vector<double> x, std::size_t df) {
  std::sort(x.begin(), x.end());
  const boost::math::chi_squared dist(static_cast<double>(df));
  const std::size_t n = x.size();
  std::vector<double> q(n);
  for (std::size_t k = 0; k < n; ++k) q[k] = boost::math::quantile(dist, (k + 0.5) / n);
  const double mq = std::accumulate(q.begin(), q.end(), 0.0) / n;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double sxy = 0.0, sqq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxy += (q[k] - mq) * (x[k] - mx);
    sqq += (q[k] - mq) * (q[k] - mq);
  }
  return sxy / sqq;
}

// 4. Null distribution of the shifted B-stat.
bool criterion4() {
  SimulationConfig cfg;
  cfg.snp_count = 20;
  cfg.effect = 0.0;
  cfg.cases = 500;
  cfg.controls = 500;
  cfg.seed = 44;
  const auto sim = simulate(cfg);
  const auto& d = sim.dataset;
  // the SNP with frequency nearest 0.3, and a partner from another block
  auto freq = [&](std::size_t s) {
    const auto col = d.column(s);
    return std::accumulate(col.begin(), col.end(), 0.0) / (2.0 * col.size());
  };
  std::size_t a = 0;
  for (std::size_t s = 0; s < 20; ++s) {
    if (std::fabs(freq(s) - 0.3) < std::fabs(freq(a) - 0.3)) a = s;
  }
  std::size_t b = a < 10 ? 19 : 0;
  for (std::size_t s = 0; s < 20; ++s) {
    if (s / 5 == a / 5) continue;
    if (std::fabs(freq(s) - 0.3) < std::fabs(freq(b) - 0.3)) b = s;
  }
  bool ok = true;
  std::string detail;
  for (const std::vector<std::size_t>& set : {std::vector<std::size_t>{a},
                                              std::vector<std::size_t>{a, b}}) {
    const std::size_t M = set.size();
    const auto null = permutation_null(d, set, 1.5, 2000, 4400 + M);
    const double cst = fit_shift_constant(null, 500, 500, M);
    const double shift = analytic_shift(500, 500, M, cst);
    std::vector<double> x;
    for (double v : null) x.push_back(2.0 * (v - shift));
    const double slope = qq_slope(x, bstat_df(M));
    ok = ok && std::fabs(slope - 1.0) <= 0.1;
    detail += fmt::format("{}M={} df={} slope {:.3f} (c {:.3f})", detail.empty() ? "" : "; ", M,
                          bstat_df(M), slope, cst);
  }
  // context only: the same statistic over fresh null datasets
  for (std::size_t M : {1, 2}) {
    std::vector<double> fresh;
    std::vector<std::size_t> set(M);
    std::iota(set.begin(), set.end(), 0);
    for (std::uint64_t k = 0; k < 2000; ++k) fresh.push_back(bstat(hwe_dataset(M, 500, 500, 0.3, k), set));
    const double cst = fit_shift_constant(fresh, 500, 500, M);
    const double shift = analytic_shift(500, 500, M, cst);
    for (double& v : fresh) v = 2.0 * (v - shift);
    detail += fmt::format("; fresh-null M={} slope {:.3f}", M, qq_slope(fresh, bstat_df(M)));
  }
  return report(4, ok, detail);
}

// 5. Power and localisation on Model 3.
bool criterion5() {
  const auto t0 = Clock::now();
  const std::size_t reps = 20;
  std::size_t hits = 0;
  double est_sum = 0.0, sig_sum = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    SimulationConfig cfg;
    cfg.snp_count = 200;
    cfg.model_id = 3;
    cfg.maf = 0.2;
    cfg.effect = 0.5;
    cfg.cases = 500;
    cfg.controls = 500;
    cfg.seed = 5000 + r;
    const auto sim = drop_loci(simulate(cfg));
    const auto& d = sim.dataset;
    const std::size_t L = d.snp_count();
    const auto [pr, c] = default_priors(L, d.region_length(), 500, 500);
    const auto post = run_chain(d, pr, c, Schedule::defaults(L), 7000 + r);

    std::vector<std::size_t> order(L);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return post.assoc_posterior[x] > post.assoc_posterior[y];
    });
    bool hit = false;
    for (std::size_t k = 0; k < 5; ++k) hit = hit || sim.truth.in_window(order[k]);
    hits += hit;

    for (const auto& [lo, hi] : sim.truth.windows) {
      for (std::size_t s = lo; s <= hi; ++s) {
        est_sum += post.assoc_posterior[s];
        sig_sum += single_snp_pvalue(d, s) < 0.05 / L;
      }
    }
  }
  const double est = est_sum / (2 * reps), sig = sig_sum / (2 * reps);
  const double rate = static_cast<double>(hits) / reps;
  const double secs = seconds_since(t0);
  return report(5, rate >= 0.7 && est <= 2.0 && sig > est && secs < 1800.0,
                fmt::format("top-5 hit rate {:.2f}; per-locus estimate {:.3f} vs single-SNP "
                            "significant {:.3f}; {:.0f} s",
                            rate, est, sig, secs));
}

// 6. Block prior scaled by 10.
bool criterion6() {
  SimulationConfig cfg;
  cfg.snp_count = 50;
  cfg.cases = 500;
  cfg.controls = 500;
  cfg.seed = 66;
  const auto sim = simulate(cfg);
  const auto& d = sim.dataset;
  const Schedule sched{500, 10000, 1};
  double counts[2];
  for (int k = 0; k < 2; ++k) {
    const double blocks = kDefaultPriorBlocks * (k ? 10.0 : 1.0);
    const auto [pr, c] = default_priors(50, d.region_length(), 500, 500, blocks);
    counts[k] = run_chain(d, pr, c, sched, 606).mean_block_count;
  }
  const double change = std::fabs(counts[1] - counts[0]) / counts[0];
  return report(6, change < 0.1,
                fmt::format("mean block count {:.3f} -> {:.3f} (change {:.1f}%)", counts[0],
                            counts[1], 100 * change));
}

// 7. Agreement across chains and bitwise reproducibility.
bool criterion7() {
  SimulationConfig cfg;
  cfg.snp_count = 40;
  cfg.model_id = 2;
  cfg.maf = 0.3;
  cfg.effect = 1.0;
  cfg.cases = 500;
  cfg.controls = 500;
  cfg.seed = 77;
  const auto sim = simulate(cfg);
  const auto& d = sim.dataset;
  const auto [pr, c] = default_priors(40, d.region_length(), 500, 500);
  const Schedule sched{400, 8000, 1};
  const auto a = run_chains(d, pr, c, sched, 5, 700, hw_threads());
  const auto b = run_chains(d, pr, c, sched, 5, 700, 1);
  double worst = 1.0, mean = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) {
      const double r = a.diagnostics.cross_chain_correlation[i][j];
      worst = std::min(worst, r);
      mean += r;
      ++pairs;
    }
  }
  mean /= pairs;
  double bd_mean = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) {
      bd_mean += pearson_correlation(a.chains[i].boundary_posterior,
                                     a.chains[j].boundary_posterior) / pairs;
    }
  }
  bool same = true;
  for (std::size_t i = 0; i < 5; ++i) {
    same = same && a.chains[i].assoc_posterior == b.chains[i].assoc_posterior &&
           a.chains[i].boundary_posterior == b.chains[i].boundary_posterior &&
           a.chains[i].log_joint_trace == b.chains[i].log_joint_trace &&
           a.chains[i].interaction_sets == b.chains[i].interaction_sets;
  }
  return report(7, worst >= 0.9 && same,
                fmt::format("pairwise P(assoc) correlation min {:.3f} mean {:.3f}; rerun {}; "
                            "boundary correlation mean {:.3f}",
                            worst, mean, same ? "bit-identical" : "DIFFERS", bd_mean));
}

// 8. Recovery of founder block boundaries.
bool criterion8() {
  SimulationConfig cfg;
  cfg.snp_count = 50;
  cfg.block_width = 5;
  cfg.founders_per_block = 4;
  cfg.cases = 500;
  cfg.controls = 500;
  cfg.seed = 88;
  const auto sim = simulate(cfg);
  const auto& d = sim.dataset;
  const auto [pr, c] = default_priors(50, d.region_length(), 500, 500);
  const auto post = run_chain(d, pr, c, Schedule{500, 10000, 1}, 808);
  double min_true = 1.0;
  std::size_t low = 0, interior = 0;
  for (std::size_t i = 1; i < 50; ++i) {
    if (i % 5 == 0) {
      min_true = std::min(min_true, post.boundary_posterior[i]);
    } else {
      ++interior;
      low += post.boundary_posterior[i] < 0.2;
    }
  }
  const double frac = static_cast<double>(low) / interior;
  return report(8, min_true > 0.8 && frac >= 0.9,
                fmt::format("min posterior at true boundaries {:.3f}; {}/{} interior below 0.2",
                            min_true, low, interior));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int k = 1; k < argc; ++k) wanted.insert(std::atoi(argv[k]));
  bool (*const all[])() = {criterion1, criterion2, criterion3, criterion4,
                           criterion5, criterion6, criterion7, criterion8};
  bool ok = true;
  for (int id = 1; id <= 8; ++id) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    try {
      ok = all[id - 1]() && ok;
    } catch (const std::exception& e) {
      ok = report(id, false, std::string("error: ") + e.what()) && ok;
    }
  }
  return ok ? 0 : 1;
}
