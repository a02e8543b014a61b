#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "beamscan/genotype_io.hpp"
#include "beamscan/rng.hpp"

namespace beamscan {

struct FounderPoolConfig {
  std::vector<std::size_t> block_widths;
  std::size_t founders_per_block = 4;

  /// `snp_count` SNPs cut into blocks of `width` (the last one may be shorter).
  static FounderPoolConfig uniform(std::size_t snp_count, std::size_t width = 5,
                                   std::size_t founders = 4);
};

struct FounderBlock {
  std::size_t first = 0;
  std::size_t width = 0;
  /// haplotypes[f][k]: allele (0/1) of founder f at SNP first + k.
  std::vector<std::vector<std::uint8_t>> haplotypes;
  std::vector<double> frequencies;
};

/// Haplotypes are mosaics of one founder per block, chosen independently.
class FounderPool {
 public:
  /// Every SNP is polymorphic among the founders; founder frequencies are
  /// proportional to 0.5 + U(0,1).
  static FounderPool generate(const FounderPoolConfig& config, Rng& rng);

  std::size_t snp_count() const { return snp_count_; }
  const std::vector<FounderBlock>& blocks() const { return blocks_; }
  std::size_t block_index(std::size_t snp) const;
  std::vector<std::size_t> block_starts() const;

  /// Population frequency of allele 1 at the SNP.
  double allele_frequency(std::size_t snp) const;
  /// Rescales the founder frequencies of the SNP's block so allele 1 has
  /// frequency f there.
  void set_allele_frequency(std::size_t snp, double f);

  std::size_t draw_founder(std::size_t block, Rng& rng) const;

 private:
  std::size_t snp_count_ = 0;
  std::vector<FounderBlock> blocks_;
  std::vector<std::size_t> block_of_;
  std::vector<std::vector<double>> cumulative_;
};

/// Relative risks over the genotype pair at the two disease loci. risk(a, b)
/// takes the genotype codes at locus A and locus B.
struct DiseaseModel {
  int model_id = 1;
  double theta = 0.0;
  double maf = 0.2;
  std::array<std::size_t, 2> loci{0, 1};

  double risk(Genotype a, Genotype b) const;
};

/// Hardy-Weinberg genotype probabilities for allele frequency f.
std::array<double, 3> hwe_genotype_probs(double f);

/// Odds ratio at locus A for carriers versus non-carriers, after collapsing
/// the risk table over locus B under Hardy-Weinberg frequencies.
double marginal_odds_ratio(int model_id, double theta, double f);

/// theta for which marginal_odds_ratio = 1 + marginal_effect.
double solve_theta(int model_id, double marginal_effect, double f);

/// Probabilities of the nine (a, b) genotype cells, index 3 a + b.
std::array<double, 9> population_cell_probs(const DiseaseModel& model);
std::array<double, 9> case_cell_probs(const DiseaseModel& model);

/// Pool size for which every cell's expected supply is 1.5 times its
/// expected demand plus 4 sqrt(demand), plus a margin of 200.
std::size_t minimum_pool_size(const DiseaseModel& model, std::size_t n_cases,
                              std::size_t n_controls);

struct SimulationTruth {
  int model_id = 1;
  double theta = 0.0;
  double effect = 0.0;
  double maf = 0.0;
  std::array<std::size_t, 2> loci{0, 1};
  bool dropped = false;
  /// Inclusive SNP windows counted as hits, one per locus.
  std::array<std::pair<std::size_t, std::size_t>, 2> windows{};
  std::vector<std::size_t> block_starts;

  bool in_window(std::size_t snp) const;
  friend bool operator==(const SimulationTruth&, const SimulationTruth&) = default;
};

struct SimulatedData {
  GenotypeDataset dataset;
  SimulationTruth truth;
};

class PoolExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cases are drawn over cells proportional to population frequency times
/// risk, controls proportional to population frequency, each then taking a
/// uniformly chosen unused pool member of that cell.
SimulatedData simulate_dataset(const FounderPool& pool, const DiseaseModel& model,
                               std::size_t n_cases, std::size_t n_controls,
                               std::size_t pool_size, std::uint64_t seed);

/// Removes the two disease columns and remaps the truth windows.
SimulatedData drop_loci(const SimulatedData& data);

struct SimulationConfig {
  std::size_t snp_count = 200;
  std::size_t block_width = 5;
  std::size_t founders_per_block = 4;
  int model_id = 1;
  double maf = 0.2;
  double effect = 0.5;
  std::size_t cases = 500;
  std::size_t controls = 500;
  /// 0 selects twice the minimum.
  std::size_t pool_size = 0;
  std::uint64_t seed = 1;
  /// Default: random interior SNPs of two distinct blocks.
  std::optional<std::array<std::size_t, 2>> loci;
};

SimulatedData simulate(const SimulationConfig& config);

void write_truth(const SimulationTruth& truth, std::ostream& out);
SimulationTruth read_truth(std::istream& in);
void save_truth(const SimulationTruth& truth, const std::filesystem::path& path);
SimulationTruth load_truth(const std::filesystem::path& path);

}  // namespace beamscan
