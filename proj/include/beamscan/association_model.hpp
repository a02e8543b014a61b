#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "beamscan/block_likelihood.hpp"
#include "beamscan/genotype_io.hpp"

namespace beamscan {

/// Half-open SNP range [first, last).
struct Block {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t width() const { return last - first; }
  friend bool operator==(const Block&, const Block&) = default;
};

/// L boundary indicators; indicator i is set when SNP i starts a block.
/// Indicator 0 is always set.
class BlockPartition {
 public:
  BlockPartition() = default;

  static BlockPartition singletons(std::size_t snp_count);
  static BlockPartition single_block(std::size_t snp_count);
  static BlockPartition from_indicators(std::vector<std::uint8_t> indicators);
  static BlockPartition from_starts(std::size_t snp_count,
                                    std::span<const std::size_t> starts);

  std::size_t snp_count() const { return starts_.size(); }
  std::size_t block_count() const { return block_count_; }
  bool is_boundary(std::size_t snp) const { return starts_[snp] != 0; }
  const std::vector<std::uint8_t>& indicators() const { return starts_; }

  /// Set or clear the boundary at `snp` (> 0).
  void set_boundary(std::size_t snp, bool value);

  /// Block containing `snp`.
  Block block_of(std::size_t snp) const;
  /// Start of the block following the one starting at or before `snp`, or L.
  std::size_t next_start(std::size_t snp) const;
  std::vector<Block> blocks() const;
  /// Starts of blocks 1..K-1, i.e. every boundary except SNP 0.
  std::vector<std::size_t> movable_boundaries() const;

  friend bool operator==(const BlockPartition& a, const BlockPartition& b) {
    return a.starts_ == b.starts_;
  }

 private:
  std::vector<std::uint8_t> starts_;
  std::size_t block_count_ = 0;
};

/// Group label per SNP: 0 unassociated, 1 marginal, 2 epistatic.
class MembershipVector {
 public:
  MembershipVector() = default;
  explicit MembershipVector(std::size_t snp_count);
  explicit MembershipVector(std::vector<std::uint8_t> labels);

  std::size_t size() const { return labels_.size(); }
  std::uint8_t operator[](std::size_t snp) const { return labels_[snp]; }
  void set(std::size_t snp, std::uint8_t label);
  const std::vector<std::uint8_t>& labels() const { return labels_; }

  std::size_t count(std::uint8_t label) const { return counts_[label]; }
  const std::array<std::size_t, 3>& counts() const { return counts_; }

  /// Sorted group-2 SNP indices.
  std::vector<std::size_t> group2() const;

  friend bool operator==(const MembershipVector& a, const MembershipVector& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<std::uint8_t> labels_;
  std::array<std::size_t, 3> counts_{};
};

struct PriorConfig {
  double p_boundary = 0.5;
  std::array<double, 3> p_group{0.8, 0.1, 0.1};  // p0, p1, p2
  double rho = 1.5;

  void validate() const;
};

struct ModelConstraints {
  /// A block of >= 2 SNPs may hold at most this many distinct diplotypes.
  std::size_t max_distinct_diplotypes = SIZE_MAX;
  /// Upper bound on the number of group-2 SNPs.
  std::size_t max_order = SIZE_MAX;

  /// ceil(N/10) - 1 and floor(log3(N/10)); throws when N < 30.
  static ModelConstraints for_sample_size(std::size_t n_individuals);
};

inline constexpr double kDefaultPriorBlocks = 50000.0;
inline constexpr double kGenomeLength = 3.0e9;

/// Priors and constraints from the SNP count, region length and cohort sizes.
std::pair<PriorConfig, ModelConstraints> default_priors(
    std::size_t snp_count, std::uint64_t region_length, std::size_t n_cases,
    std::size_t n_controls, double prior_blocks = kDefaultPriorBlocks);

inline constexpr double kForbidden = -std::numeric_limits<double>::infinity();
inline bool is_forbidden(double log_joint) { return std::isinf(log_joint) && log_joint < 0; }

/// Marginals of one SNP set: cases alone, controls alone, and combined.
struct SetMarginals {
  double cases = 0.0;
  double controls = 0.0;
  double combined = 0.0;
  std::size_t distinct = 1;  // distinct diplotypes in the combined cohort
};

/// Evaluates the joint model for one dataset. Holds scratch buffers and
/// memoised marginals, so each thread needs its own instance.
class ModelEvaluator {
 public:
  ModelEvaluator(const GenotypeDataset& dataset, const PriorConfig& priors,
                 const ModelConstraints& constraints);

  const GenotypeDataset& dataset() const { return *dataset_; }
  const PriorConfig& priors() const { return priors_; }
  const ModelConstraints& constraints() const { return constraints_; }

  SetMarginals marginals(std::span<const std::size_t> snps);
  SetMarginals block_marginals(Block block);

  /// Whether a block with this width and distinct-diplotype count is allowed.
  bool block_allowed(std::size_t width, std::size_t distinct) const;

  /// Conditional block term for the non-group-2 SNPs given the group-2 SNPs
  /// of the block. `full_combined` is block_marginals(block).combined.
  double block_term(Block block, std::span<const std::uint8_t> labels,
                    double full_combined);
  double block_term(Block block, std::span<const std::uint8_t> labels);

  /// Case and control marginals over the genome-wide group-2 set.
  double group2_term(std::span<const std::size_t> group2);

  double log_prior_partition(std::size_t block_count) const;
  double log_prior_labels(const std::array<std::size_t, 3>& counts) const;
  double log_prior_label(std::uint8_t label) const { return log_p_group_[label]; }
  double log_prior_boundary_ratio() const { return log_p_ - log_q_; }

  /// Sums the pieces of the joint in a fixed order.
  double assemble(double group2, std::span<const double> block_terms,
                  std::size_t block_count,
                  const std::array<std::size_t, 3>& label_counts) const;

  /// Full log P(D, U, B, I), or kForbidden when a constraint is violated.
  double log_joint(const BlockPartition& partition,
                   const MembershipVector& membership);

 private:
  const GenotypeDataset* dataset_;
  PriorConfig priors_;
  ModelConstraints constraints_;
  DiplotypeTallier tallier_;
  MarginalTable table_;
  std::vector<std::optional<SetMarginals>> single_;
  std::vector<std::uint32_t> combined_;
  std::vector<std::size_t> x_, x2_;
  double log_p_, log_q_;
  std::array<double, 3> log_p_group_;
};

/// Conditional term of one block under the given block-local labels.
double log_block_term(const GenotypeDataset& dataset, Block block,
                      std::span<const std::uint8_t> block_labels,
                      const DirichletConfig& config);

double log_joint(const GenotypeDataset& dataset, const BlockPartition& partition,
                 const MembershipVector& membership, const PriorConfig& priors,
                 const ModelConstraints& constraints);

}  // namespace beamscan
