#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace beamscan {

/// Genotype code: number of mutant alleles (0, 1 or 2).
using Genotype = std::uint8_t;

/// Malformed or inconsistent input data. `line` is 1-based, 0 when the
/// problem is not tied to a particular line.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t line = 0);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class MissingPolicy { reject, impute };

MissingPolicy parse_missing_policy(const std::string& name);

/// Case/control genotype matrices with SNP metadata. Immutable once built.
///
/// Genotypes are held column-major over the combined cohort: for each SNP the
/// N_d case genotypes come first, followed by the N_u control genotypes.
class GenotypeDataset {
 public:
  GenotypeDataset() = default;

  /// `codes` is column-major over cases then controls, size L * (N_d + N_u).
  GenotypeDataset(std::vector<std::string> snp_ids,
                  std::vector<std::uint64_t> positions, std::size_t n_cases,
                  std::size_t n_controls, std::vector<Genotype> codes);

  /// Builds from per-individual rows (each of length L).
  static GenotypeDataset from_rows(
      std::vector<std::string> snp_ids, std::vector<std::uint64_t> positions,
      const std::vector<std::vector<Genotype>>& case_rows,
      const std::vector<std::vector<Genotype>>& control_rows);

  std::size_t snp_count() const { return snp_ids_.size(); }
  std::size_t case_count() const { return n_cases_; }
  std::size_t control_count() const { return n_controls_; }
  std::size_t individual_count() const { return n_cases_ + n_controls_; }

  const std::vector<std::string>& snp_ids() const { return snp_ids_; }
  const std::vector<std::uint64_t>& positions() const { return positions_; }

  /// Last position minus first, never below 1.
  std::uint64_t region_length() const;

  /// Combined column: cases first, then controls.
  std::span<const Genotype> column(std::size_t snp) const {
    return {codes_.data() + snp * individual_count(), individual_count()};
  }
  std::span<const Genotype> case_column(std::size_t snp) const {
    return column(snp).first(n_cases_);
  }
  std::span<const Genotype> control_column(std::size_t snp) const {
    return column(snp).subspan(n_cases_);
  }

  Genotype case_genotype(std::size_t individual, std::size_t snp) const {
    return codes_[snp * individual_count() + individual];
  }
  Genotype control_genotype(std::size_t individual, std::size_t snp) const {
    return codes_[snp * individual_count() + n_cases_ + individual];
  }

  /// Keeps only the listed SNPs, in the given order.
  GenotypeDataset select_snps(std::span<const std::size_t> snps) const;

  /// Reassigns phenotypes: the individuals listed in `order` (indices into
  /// the combined cohort) become the new cohort, the first `n_cases` of them
  /// cases and the rest controls.
  GenotypeDataset relabel(std::span<const std::size_t> order,
                          std::size_t n_cases) const;

  friend bool operator==(const GenotypeDataset&,
                         const GenotypeDataset&) = default;

 private:
  std::vector<std::string> snp_ids_;
  std::vector<std::uint64_t> positions_;
  std::size_t n_cases_ = 0;
  std::size_t n_controls_ = 0;
  std::vector<Genotype> codes_;
};

struct ColumnCounts {
  std::array<std::size_t, 3> cases{};
  std::array<std::size_t, 3> controls{};
};

ColumnCounts column_counts(const GenotypeDataset& dataset, std::size_t snp);

GenotypeDataset parse_dataset(std::istream& in, MissingPolicy policy);
GenotypeDataset load_dataset(const std::filesystem::path& path,
                             MissingPolicy policy);

/// Canonical form: header lines, then all case rows, then all control rows.
void write_dataset(const GenotypeDataset& dataset, std::ostream& out);
void save_dataset(const GenotypeDataset& dataset,
                  const std::filesystem::path& path);

/// Exact Hardy-Weinberg test p-value for one SNP.
double hwe_exact_pvalue(std::size_t n_het, std::size_t n_hom1,
                        std::size_t n_hom2);

/// Drops SNPs whose control genotypes violate Hardy-Weinberg equilibrium at
/// p < threshold. Returns the kept SNP indices through `kept` when given.
GenotypeDataset filter_hwe(const GenotypeDataset& dataset, double threshold,
                           std::vector<std::size_t>* kept = nullptr);

}  // namespace beamscan
