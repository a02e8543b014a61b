#include "beamscan/bstat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

#include "beamscan/block_likelihood.hpp"
#include "beamscan/rng.hpp"

namespace beamscan {

namespace {

double log_add(double a, double b) {
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty sample");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid))) / 2.0;
  }
  return m;
}

void check_set(const GenotypeDataset& dataset, std::span<const std::size_t> snps) {
  if (snps.empty()) throw std::invalid_argument("B-stat needs at least one SNP");
  std::set<std::size_t> seen;
  for (std::size_t s : snps) {
    if (s >= dataset.snp_count()) throw std::out_of_range("SNP index beyond L");
    if (!seen.insert(s).second) {
      throw std::invalid_argument("duplicate SNP index " + std::to_string(s));
    }
  }
}

// B-stat over every column of a dataset that holds exactly the tested set.
double bstat_all_columns(const GenotypeDataset& sub, double rho,
                         DiplotypeTallier& tallier, MarginalTable& table,
                         std::vector<std::uint32_t>& combined) {
  const std::size_t M = sub.snp_count();
  auto marg = [&](const CohortTally& t, std::size_t width, double& lc,
                  double& lu, double& ldu) {
    combined.resize(t.distinct());
    for (std::size_t h = 0; h < t.distinct(); ++h) combined[h] = t.cases[h] + t.controls[h];
    lc = table.log_marginal(width, t.cases);
    lu = table.log_marginal(width, t.controls);
    ldu = table.log_marginal(width, combined);
  };
  double cases_joint, controls_joint, both_joint;
  marg(tallier.tally_range(0, M), M, cases_joint, controls_joint, both_joint);
  double controls_indep = 0.0, both_indep = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    double lc, lu, ldu;
    marg(tallier.tally_range(j, j + 1), 1, lc, lu, ldu);
    controls_indep += lu;
    both_indep += ldu;
  }
  (void)rho;
  return cases_joint + log_add(controls_joint, controls_indep) -
         log_add(both_joint, both_indep);
}

// The statistic does not depend on the order of the set, but datasets keep
// positions increasing.
GenotypeDataset sorted_subset(const GenotypeDataset& dataset, std::span<const std::size_t> snps) {
  std::vector<std::size_t> sorted(snps.begin(), snps.end());
  std::sort(sorted.begin(), sorted.end());
  return dataset.select_snps(sorted);
}

}  // namespace

Calibration parse_calibration(const std::string& name) {
  if (name == "analytic") return Calibration::analytic;
  if (name == "permutation") return Calibration::permutation;
  throw std::invalid_argument("unknown calibration mode: " + name);
}

const char* calibration_name(Calibration mode) {
  return mode == Calibration::analytic ? "analytic" : "permutation";
}

double bstat(const GenotypeDataset& dataset, std::span<const std::size_t> snps,
             double rho) {
  check_set(dataset, snps);
  const GenotypeDataset sub = sorted_subset(dataset, snps);
  DiplotypeTallier tallier(sub);
  MarginalTable table(DirichletConfig{rho}, sub.individual_count());
  std::vector<std::uint32_t> combined;
  return bstat_all_columns(sub, rho, tallier, table, combined);
}

std::size_t bstat_df(std::size_t set_size) {
  std::size_t p = 1;
  for (std::size_t k = 0; k < set_size; ++k) p *= 3;
  return p - 1;
}

double analytic_shift(std::size_t n_cases, std::size_t n_controls,
                      std::size_t set_size, double constant) {
  if (n_cases == 0 || n_controls == 0) {
    throw std::invalid_argument("shift needs both cohorts non-empty");
  }
  const double nd = static_cast<double>(n_cases);
  const double nu = static_cast<double>(n_controls);
  return -constant * static_cast<double>(bstat_df(set_size)) *
         std::log(nd * nu / (nd + nu));
}

double analytic_pvalue(double b_value, double shift, std::size_t df) {
  const double x = 2.0 * (b_value - shift);
  if (x <= 0.0) return 1.0;
  boost::math::chi_squared dist(static_cast<double>(df));
  return boost::math::cdf(boost::math::complement(dist, x));
}

double permutation_pvalue(double b_value, std::span<const double> null_values) {
  const auto exceed = std::count_if(null_values.begin(), null_values.end(),
                                    [&](double v) { return v >= b_value; });
  return (1.0 + static_cast<double>(exceed)) /
         (1.0 + static_cast<double>(null_values.size()));
}

std::vector<double> permutation_null(const GenotypeDataset& dataset,
                                     std::span<const std::size_t> snps,
                                     double rho, std::size_t n_perm,
                                     std::uint64_t seed) {
  check_set(dataset, snps);
  if (n_perm < kMinPermutations) {
    throw std::invalid_argument("permutation calibration needs at least " +
                                std::to_string(kMinPermutations) + " replicates");
  }
  if (dataset.case_count() == 0 || dataset.control_count() == 0) {
    throw std::invalid_argument("permutation needs both cohorts non-empty");
  }
  const GenotypeDataset sub = sorted_subset(dataset, snps);
  MarginalTable table(DirichletConfig{rho}, sub.individual_count());
  std::vector<std::uint32_t> combined;
  std::vector<std::size_t> order(sub.individual_count());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::vector<double> out;
  out.reserve(n_perm);
  for (std::size_t r = 0; r < n_perm; ++r) {
    rng.shuffle(std::span<std::size_t>(order));
    const GenotypeDataset permuted = sub.relabel(order, sub.case_count());
    DiplotypeTallier tallier(permuted);
    out.push_back(bstat_all_columns(permuted, rho, tallier, table, combined));
  }
  return out;
}

double fit_shift_constant(std::span<const double> null_values,
                          std::size_t n_cases, std::size_t n_controls,
                          std::size_t set_size) {
  const std::size_t df = bstat_df(set_size);
  const double chi_median =
      boost::math::median(boost::math::chi_squared(static_cast<double>(df)));
  // Choose the shift so that median(2 (B - shift)) equals the chi-square median.
  const double shift =
      median(std::vector<double>(null_values.begin(), null_values.end())) -
      chi_median / 2.0;
  const double unit = analytic_shift(n_cases, n_controls, set_size, 1.0);
  if (!(unit < 0.0)) {
    throw std::invalid_argument(
        "analytic calibration needs N_d N_u / (N_d + N_u) > 1; use permutation");
  }
  return shift / unit;
}

double NullCalibration::p_value(double b_value) const {
  if (mode == Calibration::permutation) {
    return permutation_pvalue(b_value, null_values);
  }
  return analytic_pvalue(b_value, shift, df);
}

namespace {

// Independent Hardy-Weinberg SNPs at allele frequency 0.3.
GenotypeDataset reference_null(std::size_t n_cases, std::size_t n_controls,
                               std::size_t set_size, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t N = n_cases + n_controls;
  std::vector<Genotype> codes(set_size * N);
  for (auto& g : codes) {
    g = static_cast<Genotype>(rng.bernoulli(0.3) + rng.bernoulli(0.3));
  }
  std::vector<std::string> ids;
  std::vector<std::uint64_t> pos;
  for (std::size_t s = 0; s < set_size; ++s) {
    ids.push_back("ref" + std::to_string(s));
    pos.push_back(s + 1);
  }
  return GenotypeDataset(std::move(ids), std::move(pos), n_cases, n_controls,
                         std::move(codes));
}

std::mutex constant_mutex;
std::map<std::tuple<std::size_t, std::size_t, std::size_t, double>, double>
    constant_cache;

double cached_constant(std::size_t n_cases, std::size_t n_controls,
                       std::size_t set_size, double rho) {
  const auto key = std::make_tuple(n_cases, n_controls, set_size, rho);
  {
    std::lock_guard lock(constant_mutex);
    if (auto it = constant_cache.find(key); it != constant_cache.end()) {
      return it->second;
    }
  }
  const GenotypeDataset ref = reference_null(n_cases, n_controls, set_size, 0xbea5);
  std::vector<std::size_t> all(set_size);
  std::iota(all.begin(), all.end(), 0);
  const auto null = permutation_null(ref, all, rho, 1000, 0x5eed);
  const double c = fit_shift_constant(null, n_cases, n_controls, set_size);
  std::lock_guard lock(constant_mutex);
  constant_cache.emplace(key, c);
  return c;
}

}  // namespace

NullCalibration null_calibration(std::size_t n_cases, std::size_t n_controls,
                                 std::size_t set_size, double rho,
                                 Calibration mode, const GenotypeDataset* dataset,
                                 std::span<const std::size_t> snps,
                                 std::size_t n_perm, std::uint64_t seed) {
  if (n_cases == 0 || n_controls == 0) {
    throw std::invalid_argument("calibration needs both cohorts non-empty");
  }
  if (set_size == 0) throw std::invalid_argument("empty SNP set");
  NullCalibration cal;
  cal.mode = mode;
  cal.df = bstat_df(set_size);
  if (mode == Calibration::permutation) {
    if (!dataset) throw std::invalid_argument("permutation calibration needs a dataset");
    if (snps.size() != set_size) throw std::invalid_argument("SNP set size mismatch");
    cal.null_values = permutation_null(*dataset, snps, rho, n_perm, seed);
    // the fitted shift is only reported here; tiny cohorts leave it undefined
    if (analytic_shift(n_cases, n_controls, set_size, 1.0) < 0.0) {
      cal.constant = fit_shift_constant(cal.null_values, n_cases, n_controls, set_size);
    } else {
      cal.constant = std::numeric_limits<double>::quiet_NaN();
    }
  } else {
    cal.constant = cached_constant(n_cases, n_controls, set_size, rho);
  }
  cal.shift = analytic_shift(n_cases, n_controls, set_size, cal.constant);
  return cal;
}

std::size_t choose(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    const std::size_t num = n - k + i;
    if (r > SIZE_MAX / num) return SIZE_MAX;
    r = r * num / i;
  }
  return r;
}

std::vector<BStatResult> test_sets(const GenotypeDataset& dataset,
                                   const std::vector<std::vector<std::size_t>>& sets,
                                   const ScreenOptions& options) {
  std::vector<BStatResult> out;
  std::map<std::size_t, NullCalibration> analytic;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const auto& set = sets[k];
    if (set.size() > options.max_order) {
      throw std::invalid_argument("set of size " + std::to_string(set.size()) +
                                  " exceeds the interaction order cap " +
                                  std::to_string(options.max_order));
    }
    BStatResult r;
    r.snp_set = set;
    r.b_value = bstat(dataset, set, options.rho);
    r.df = bstat_df(set.size());
    r.calibration = options.calibration;
    if (options.calibration == Calibration::analytic) {
      auto it = analytic.find(set.size());
      if (it == analytic.end()) {
        it = analytic
                 .emplace(set.size(),
                          null_calibration(dataset.case_count(), dataset.control_count(),
                                           set.size(), options.rho, Calibration::analytic))
                 .first;
      }
      r.shift = it->second.shift;
      r.p_value = it->second.p_value(r.b_value);
    } else {
      const auto cal = null_calibration(
          dataset.case_count(), dataset.control_count(), set.size(), options.rho,
          Calibration::permutation, &dataset, set, options.n_perm, options.seed + k);
      r.shift = cal.shift;
      r.p_value = cal.p_value(r.b_value);
    }
    std::size_t n_tests = set.size() == 1 ? options.marginal_tests : options.joint_tests;
    if (n_tests == 0) n_tests = choose(dataset.snp_count(), set.size());
    r.significant = r.p_value < options.alpha / static_cast<double>(std::max<std::size_t>(1, n_tests));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<BStatResult> screen_candidates(const GenotypeDataset& dataset,
                                           const PosteriorSummary& summary,
                                           const ScreenOptions& options) {
  if (!(options.posterior_threshold > 0.0 && options.posterior_threshold < 1.0)) {
    throw std::invalid_argument("posterior threshold must lie in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> sets;
  for (std::size_t i = 0; i < summary.assoc_posterior.size(); ++i) {
    if (summary.assoc_posterior[i] >= options.posterior_threshold) sets.push_back({i});
  }
  for (const auto& [set, freq] : summary.interaction_sets) {
    if (set.size() >= 2 && set.size() <= options.max_order &&
        freq >= options.posterior_threshold) {
      sets.push_back(set);
    }
  }
  return test_sets(dataset, sets, options);
}

}  // namespace beamscan
