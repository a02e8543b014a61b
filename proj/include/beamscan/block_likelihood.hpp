#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "beamscan/genotype_io.hpp"

namespace beamscan {

/// Symmetric Dirichlet prior over the 3^w diplotypes of a w-SNP block. Each
/// diplotype gets pseudo-count rho / 3^w so the total mass is rho for every
/// width.
struct DirichletConfig {
  double rho = 1.5;

  /// ln(rho / 3^width), finite for any width.
  double log_alpha(std::size_t width) const;
};

/// Genotype sequence over a block, packed 2 bits per SNP (32 SNPs per word).
class PackedDiplotype {
 public:
  PackedDiplotype() = default;
  explicit PackedDiplotype(std::span<const Genotype> codes);

  std::size_t width() const { return width_; }
  Genotype at(std::size_t i) const {
    return static_cast<Genotype>((words_[i / 32] >> (2 * (i % 32))) & 3u);
  }
  std::vector<Genotype> codes() const;

  friend bool operator==(const PackedDiplotype&,
                         const PackedDiplotype&) = default;

  struct Hash {
    std::size_t operator()(const PackedDiplotype& d) const;
  };

 private:
  std::size_t width_ = 0;
  std::vector<std::uint64_t> words_;
};

struct CountPair {
  std::size_t cases = 0;     // n_h
  std::size_t controls = 0;  // m_h
};

enum class Cohort { cases, controls, both };

/// Sparse diplotype counts over one SNP set. Only observed diplotypes are
/// stored; the unobserved ones contribute nothing to the marginal.
struct DiplotypeCounts {
  std::size_t width = 0;
  std::unordered_map<PackedDiplotype, CountPair, PackedDiplotype::Hash> entries;
  std::size_t n_total = 0;
  std::size_t m_total = 0;

  void add(const PackedDiplotype& key, CountPair counts);
};

/// Counts diplotypes over the half-open SNP range [first, last).
DiplotypeCounts count_diplotypes(const GenotypeDataset& dataset,
                                 std::size_t first, std::size_t last,
                                 Cohort who);

/// Counts diplotypes over an arbitrary (possibly empty) SNP set.
DiplotypeCounts count_diplotypes(const GenotypeDataset& dataset,
                                 std::span<const std::size_t> snps, Cohort who);

/// ln of the Dirichlet-multinomial marginal probability of the combined
/// counts n_h + m_h.
double log_marginal(const DiplotypeCounts& counts, const DirichletConfig& config);

/// Core of log_marginal over a list of per-diplotype counts (zeros allowed).
double log_marginal(std::size_t width, std::span<const std::size_t> counts,
                    const DirichletConfig& config);

/// ln P(full) - ln P(sub): the non-selected SNPs given the selected ones.
/// Both tables must be counted over the same individuals.
double log_conditional(const DiplotypeCounts& full, const DiplotypeCounts& sub,
                       const DirichletConfig& config);

/// Per-diplotype counts over a SNP set, split by cohort. Label h runs over
/// the distinct observed diplotypes in first-seen order.
struct CohortTally {
  std::vector<std::uint32_t> cases;
  std::vector<std::uint32_t> controls;
  std::size_t distinct() const { return cases.size(); }
};

/// Fast diplotype tallying by iterative dense relabelling: after each SNP the
/// per-individual label is remapped into [0, K), so any width is exact and no
/// hashing is needed. Holds scratch buffers; one instance per thread.
class DiplotypeTallier {
 public:
  explicit DiplotypeTallier(const GenotypeDataset& dataset);

  /// The returned reference is overwritten by the next call.
  const CohortTally& tally(std::span<const std::size_t> snps);
  const CohortTally& tally_range(std::size_t first, std::size_t last);

 private:
  void relabel(std::size_t snp, bool first);
  const CohortTally& finish();

  const GenotypeDataset* dataset_;
  std::vector<std::uint32_t> labels_;
  std::vector<std::uint32_t> remap_;
  std::size_t distinct_ = 1;
  CohortTally tally_;
};

/// Memoised Dirichlet-multinomial marginals for a fixed cohort size. Results
/// are bit-identical to log_marginal(width, counts, config).
class MarginalTable {
 public:
  MarginalTable(DirichletConfig config, std::size_t max_total);

  double log_marginal(std::size_t width, std::span<const std::uint32_t> counts);

  const DirichletConfig& config() const { return config_; }

 private:
  const std::vector<double>& table(std::size_t width);

  DirichletConfig config_;
  std::size_t max_total_;
  std::vector<std::vector<double>> per_count_;  // [width][c]
  std::vector<double> normaliser_;              // [total]
};

}  // namespace beamscan
