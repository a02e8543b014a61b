#include "beamscan/association_model.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace beamscan {

BlockPartition BlockPartition::singletons(std::size_t snp_count) {
  return from_indicators(std::vector<std::uint8_t>(snp_count, 1));
}

BlockPartition BlockPartition::single_block(std::size_t snp_count) {
  std::vector<std::uint8_t> ind(snp_count, 0);
  if (snp_count) ind[0] = 1;
  return from_indicators(std::move(ind));
}

BlockPartition BlockPartition::from_indicators(
    std::vector<std::uint8_t> indicators) {
  if (indicators.empty()) throw std::invalid_argument("partition of zero SNPs");
  if (!indicators[0]) {
    throw std::invalid_argument("SNP 0 must start the first block");
  }
  BlockPartition p;
  p.block_count_ = 0;
  for (auto& v : indicators) {
    v = v ? 1 : 0;
    p.block_count_ += v;
  }
  p.starts_ = std::move(indicators);
  return p;
}

BlockPartition BlockPartition::from_starts(std::size_t snp_count,
                                           std::span<const std::size_t> starts) {
  std::vector<std::uint8_t> ind(snp_count, 0);
  for (std::size_t s : starts) {
    if (s >= snp_count) throw std::out_of_range("block start beyond L");
    ind[s] = 1;
  }
  return from_indicators(std::move(ind));
}

void BlockPartition::set_boundary(std::size_t snp, bool value) {
  if (snp == 0 || snp >= starts_.size()) {
    throw std::out_of_range("boundary index must be in [1, L)");
  }
  const std::uint8_t v = value ? 1 : 0;
  if (starts_[snp] == v) return;
  starts_[snp] = v;
  if (v) {
    ++block_count_;
  } else {
    --block_count_;
  }
}

Block BlockPartition::block_of(std::size_t snp) const {
  std::size_t first = snp;
  while (!starts_[first]) --first;
  return {first, next_start(snp)};
}

std::size_t BlockPartition::next_start(std::size_t snp) const {
  std::size_t last = snp + 1;
  while (last < starts_.size() && !starts_[last]) ++last;
  return last;
}

std::vector<Block> BlockPartition::blocks() const {
  std::vector<Block> out;
  out.reserve(block_count_);
  std::size_t first = 0;
  for (std::size_t i = 1; i <= starts_.size(); ++i) {
    if (i == starts_.size() || starts_[i]) {
      out.push_back({first, i});
      first = i;
    }
  }
  return out;
}

std::vector<std::size_t> BlockPartition::movable_boundaries() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < starts_.size(); ++i) {
    if (starts_[i]) out.push_back(i);
  }
  return out;
}

MembershipVector::MembershipVector(std::size_t snp_count)
    : labels_(snp_count, 0), counts_{snp_count, 0, 0} {}

MembershipVector::MembershipVector(std::vector<std::uint8_t> labels)
    : labels_(std::move(labels)) {
  for (auto g : labels_) {
    if (g > 2) throw std::invalid_argument("group label outside {0,1,2}");
    ++counts_[g];
  }
}

void MembershipVector::set(std::size_t snp, std::uint8_t label) {
  if (label > 2) throw std::invalid_argument("group label outside {0,1,2}");
  --counts_[labels_[snp]];
  ++counts_[label];
  labels_[snp] = label;
}

std::vector<std::size_t> MembershipVector::group2() const {
  std::vector<std::size_t> out;
  out.reserve(counts_[2]);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == 2) out.push_back(i);
  }
  return out;
}

void PriorConfig::validate() const {
  if (!(p_boundary > 0.0 && p_boundary <= 0.5)) {
    throw std::invalid_argument("boundary prior must lie in (0, 0.5]");
  }
  double sum = 0.0;
  for (double p : p_group) {
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("group priors must lie in (0, 1)");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("group priors must sum to 1");
  }
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
}

ModelConstraints ModelConstraints::for_sample_size(std::size_t n) {
  if (n < 30) {
    throw std::invalid_argument(
        "at least 30 individuals are needed for usable model constraints, got " +
        std::to_string(n));
  }
  ModelConstraints c;
  c.max_distinct_diplotypes = (n + 9) / 10 - 1;
  // Largest k with 10 * 3^k <= n.
  std::size_t order = 0;
  std::size_t power = 3;
  while (10 * power <= n) {
    ++order;
    power *= 3;
  }
  c.max_order = order;
  return c;
}

std::pair<PriorConfig, ModelConstraints> default_priors(
    std::size_t snp_count, std::uint64_t region_length, std::size_t n_cases,
    std::size_t n_controls, double prior_blocks) {
  if (snp_count == 0) throw std::invalid_argument("need at least one SNP");
  if (region_length == 0) throw std::invalid_argument("region length must be >= 1");
  if (!(prior_blocks > 0)) throw std::invalid_argument("prior block count must be positive");
  const double L = static_cast<double>(snp_count);
  PriorConfig priors;
  priors.p_boundary = std::min(
      0.5, prior_blocks * static_cast<double>(region_length) / (kGenomeLength * L));
  const double p12 = std::min(0.1, 5.0 / L);
  priors.p_group = {1.0 - 2.0 * p12, p12, p12};
  priors.rho = 1.5;
  return {priors, ModelConstraints::for_sample_size(n_cases + n_controls)};
}

ModelEvaluator::ModelEvaluator(const GenotypeDataset& dataset,
                               const PriorConfig& priors,
                               const ModelConstraints& constraints)
    : dataset_(&dataset),
      priors_(priors),
      constraints_(constraints),
      tallier_(dataset),
      table_(DirichletConfig{priors.rho}, dataset.individual_count()),
      single_(dataset.snp_count()),
      log_p_(std::log(priors.p_boundary)),
      log_q_(std::log1p(-priors.p_boundary)),
      log_p_group_{std::log(priors.p_group[0]), std::log(priors.p_group[1]),
                   std::log(priors.p_group[2])} {
  priors_.validate();
}

SetMarginals ModelEvaluator::marginals(std::span<const std::size_t> snps) {
  if (snps.size() == 1 && single_[snps[0]]) return *single_[snps[0]];
  const CohortTally& t = tallier_.tally(snps);
  combined_.resize(t.distinct());
  for (std::size_t h = 0; h < t.distinct(); ++h) {
    combined_[h] = t.cases[h] + t.controls[h];
  }
  const std::size_t w = snps.size();
  SetMarginals m{table_.log_marginal(w, t.cases),
                 table_.log_marginal(w, t.controls),
                 table_.log_marginal(w, combined_), t.distinct()};
  if (snps.size() == 1) single_[snps[0]] = m;
  return m;
}

SetMarginals ModelEvaluator::block_marginals(Block block) {
  x_.resize(block.width());
  for (std::size_t k = 0; k < x_.size(); ++k) x_[k] = block.first + k;
  return marginals(x_);
}

bool ModelEvaluator::block_allowed(std::size_t width, std::size_t distinct) const {
  return width < 2 || distinct <= constraints_.max_distinct_diplotypes;
}

double ModelEvaluator::block_term(Block block, std::span<const std::uint8_t> labels,
                                  double full_combined) {
  x_.clear();
  x2_.clear();
  for (std::size_t s = block.first; s < block.last; ++s) {
    if (labels[s] != 0) x_.push_back(s);
    if (labels[s] == 2) x2_.push_back(s);
  }
  if (x_.empty()) return full_combined;
  const std::size_t n_x = x_.size();
  const std::size_t n_x2 = x2_.size();
  const SetMarginals mx = marginals(x_);
  if (n_x2 == n_x) {
    // D_x, U_x cancel against D_x2, U_x2.
    return full_combined - mx.combined;
  }
  double term = mx.cases + mx.controls + full_combined - mx.combined;
  if (n_x2 > 0) {
    const SetMarginals mx2 = marginals(x2_);
    term -= mx2.cases + mx2.controls;
  }
  return term;
}

double ModelEvaluator::block_term(Block block, std::span<const std::uint8_t> labels) {
  const double full = block_marginals(block).combined;
  return block_term(block, labels, full);
}

double ModelEvaluator::group2_term(std::span<const std::size_t> group2) {
  if (group2.empty()) return 0.0;
  const SetMarginals m = marginals(group2);
  return m.cases + m.controls;
}

double ModelEvaluator::log_prior_partition(std::size_t block_count) const {
  const std::size_t L = dataset_->snp_count();
  return static_cast<double>(block_count - 1) * log_p_ +
         static_cast<double>(L - block_count) * log_q_;
}

double ModelEvaluator::log_prior_labels(
    const std::array<std::size_t, 3>& counts) const {
  return static_cast<double>(counts[0]) * log_p_group_[0] +
         static_cast<double>(counts[1]) * log_p_group_[1] +
         static_cast<double>(counts[2]) * log_p_group_[2];
}

double ModelEvaluator::assemble(double group2, std::span<const double> block_terms,
                                std::size_t block_count,
                                const std::array<std::size_t, 3>& label_counts) const {
  double acc = group2;
  for (double t : block_terms) acc += t;
  acc += log_prior_partition(block_count);
  acc += log_prior_labels(label_counts);
  return acc;
}

double ModelEvaluator::log_joint(const BlockPartition& partition,
                                 const MembershipVector& membership) {
  const std::size_t L = dataset_->snp_count();
  if (partition.snp_count() != L || membership.size() != L) {
    throw std::invalid_argument("state size does not match the dataset");
  }
  if (membership.count(2) > constraints_.max_order) return kForbidden;
  const auto blocks = partition.blocks();
  std::vector<double> terms;
  terms.reserve(blocks.size());
  for (const Block& b : blocks) {
    const SetMarginals full = block_marginals(b);
    if (!block_allowed(b.width(), full.distinct)) return kForbidden;
    terms.push_back(block_term(b, membership.labels(), full.combined));
  }
  const auto g2 = membership.group2();
  return assemble(group2_term(g2), terms, partition.block_count(),
                  membership.counts());
}

double log_block_term(const GenotypeDataset& dataset, Block block,
                      std::span<const std::uint8_t> block_labels,
                      const DirichletConfig& config) {
  if (block.first >= block.last || block.last > dataset.snp_count()) {
    throw std::out_of_range("block outside [0, L)");
  }
  if (block_labels.size() != block.width()) {
    throw std::invalid_argument("one label per block SNP required");
  }
  PriorConfig priors;
  priors.rho = config.rho;
  ModelEvaluator eval(dataset, priors, ModelConstraints{});
  std::vector<std::uint8_t> labels(dataset.snp_count(), 0);
  std::copy(block_labels.begin(), block_labels.end(),
            labels.begin() + static_cast<std::ptrdiff_t>(block.first));
  return eval.block_term(block, labels);
}

double log_joint(const GenotypeDataset& dataset, const BlockPartition& partition,
                 const MembershipVector& membership, const PriorConfig& priors,
                 const ModelConstraints& constraints) {
  ModelEvaluator eval(dataset, priors, constraints);
  return eval.log_joint(partition, membership);
}

}  // namespace beamscan
