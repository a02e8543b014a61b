#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "beamscan/genotype_io.hpp"
#include "beamscan/mcmc.hpp"

namespace beamscan {

enum class Calibration { analytic, permutation };

Calibration parse_calibration(const std::string& name);
const char* calibration_name(Calibration mode);

struct BStatResult {
  std::vector<std::size_t> snp_set;
  double b_value = 0.0;
  std::size_t df = 0;
  double shift = 0.0;
  double p_value = 1.0;
  Calibration calibration = Calibration::permutation;
  bool significant = false;
};

/// Bayes factor for association of the SNP set, natural-log scale. The
/// alternative keeps separate case and control distributions; both
/// hypotheses mix a saturated joint model with an independence model.
double bstat(const GenotypeDataset& dataset, std::span<const std::size_t> snps,
             double rho = 1.5);

/// 3^M - 1.
std::size_t bstat_df(std::size_t set_size);

/// -c (3^M - 1) ln(N_d N_u / (N_d + N_u)).
double analytic_shift(std::size_t n_cases, std::size_t n_controls,
                      std::size_t set_size, double constant);

/// Upper-tail chi-square probability of 2 (b - shift) with `df` degrees.
double analytic_pvalue(double b_value, double shift, std::size_t df);

/// Add-one smoothed upper-tail p-value against a permutation null.
double permutation_pvalue(double b_value, std::span<const double> null_values);

/// B-stat of the set under `n_perm` random case/control relabellings.
std::vector<double> permutation_null(const GenotypeDataset& dataset,
                                     std::span<const std::size_t> snps,
                                     double rho, std::size_t n_perm,
                                     std::uint64_t seed);

/// Constant c for which the shifted chi-square matches the median of the
/// given null B-stat sample.
double fit_shift_constant(std::span<const double> null_values,
                          std::size_t n_cases, std::size_t n_controls,
                          std::size_t set_size);

inline constexpr std::size_t kMinPermutations = 500;

/// How B-stat values map to p-values for one (N_d, N_u, M, rho).
struct NullCalibration {
  Calibration mode = Calibration::permutation;
  std::size_t df = 2;
  /// NaN in permutation mode when N_d N_u / (N_d + N_u) <= 1.
  double shift = 0.0;
  double constant = 0.0;
  /// Permutation mode only.
  std::vector<double> null_values;

  double p_value(double b_value) const;
};

/// Analytic mode fits the shift constant once per (N_d, N_u, M, rho) against
/// a reference null of independent Hardy-Weinberg SNPs and caches it.
/// Permutation mode requires the dataset and SNP set.
NullCalibration null_calibration(std::size_t n_cases, std::size_t n_controls,
                                 std::size_t set_size, double rho,
                                 Calibration mode,
                                 const GenotypeDataset* dataset = nullptr,
                                 std::span<const std::size_t> snps = {},
                                 std::size_t n_perm = 1000,
                                 std::uint64_t seed = 1);

struct ScreenOptions {
  double posterior_threshold = 0.5;
  double alpha = 0.05;
  /// Bonferroni denominators; 0 selects C(L, M).
  std::size_t marginal_tests = 0;
  std::size_t joint_tests = 0;
  Calibration calibration = Calibration::permutation;
  std::size_t n_perm = 1000;
  std::uint64_t seed = 1;
  double rho = 1.5;
  /// Sets larger than this are skipped.
  std::size_t max_order = SIZE_MAX;
};

/// Tests every SNP whose association posterior reaches the threshold, and
/// every sampled interaction set (size >= 2) whose frequency does.
std::vector<BStatResult> screen_candidates(const GenotypeDataset& dataset,
                                           const PosteriorSummary& summary,
                                           const ScreenOptions& options);

/// Tests the given sets; significance uses alpha / n_tests with n_tests
/// defaulting to C(L, M) per set size.
std::vector<BStatResult> test_sets(const GenotypeDataset& dataset,
                                   const std::vector<std::vector<std::size_t>>& sets,
                                   const ScreenOptions& options);

/// Binomial coefficient, saturating at SIZE_MAX.
std::size_t choose(std::size_t n, std::size_t k);

}  // namespace beamscan
