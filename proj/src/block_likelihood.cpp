#include "beamscan/block_likelihood.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace beamscan {

namespace {

const double kLog3 = std::log(3.0);

// ln Gamma(c + alpha) - ln Gamma(alpha) for c >= 1, rewritten so that the
// gamma arguments stay >= 1 even when alpha underflows.
double count_term(double log_alpha, double alpha, std::size_t c) {
  return log_alpha + (std::lgamma(static_cast<double>(c) + alpha) -
                      std::lgamma(1.0 + alpha));
}

double normaliser(double rho, std::size_t total) {
  return std::lgamma(rho) - std::lgamma(static_cast<double>(total) + rho);
}

}  // namespace

double DirichletConfig::log_alpha(std::size_t width) const {
  return std::log(rho) - static_cast<double>(width) * kLog3;
}

PackedDiplotype::PackedDiplotype(std::span<const Genotype> codes)
    : width_(codes.size()), words_((codes.size() + 31) / 32, 0) {
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] > 2) throw std::invalid_argument("genotype code outside {0,1,2}");
    words_[i / 32] |= static_cast<std::uint64_t>(codes[i]) << (2 * (i % 32));
  }
}

std::vector<Genotype> PackedDiplotype::codes() const {
  std::vector<Genotype> out(width_);
  for (std::size_t i = 0; i < width_; ++i) out[i] = at(i);
  return out;
}

std::size_t PackedDiplotype::Hash::operator()(const PackedDiplotype& d) const {
  std::uint64_t h = 0x9e3779b97f4a7c15ull ^ d.width_;
  for (std::uint64_t w : d.words_) {
    h ^= w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

void DiplotypeCounts::add(const PackedDiplotype& key, CountPair counts) {
  if (key.width() != width) throw std::invalid_argument("diplotype width mismatch");
  auto& slot = entries[key];
  slot.cases += counts.cases;
  slot.controls += counts.controls;
  n_total += counts.cases;
  m_total += counts.controls;
}

DiplotypeCounts count_diplotypes(const GenotypeDataset& dataset,
                                 std::size_t first, std::size_t last,
                                 Cohort who) {
  if (first >= last) throw std::invalid_argument("empty SNP range");
  if (last > dataset.snp_count()) throw std::out_of_range("SNP range beyond L");
  std::vector<std::size_t> snps(last - first);
  std::iota(snps.begin(), snps.end(), first);
  return count_diplotypes(dataset, snps, who);
}

DiplotypeCounts count_diplotypes(const GenotypeDataset& dataset,
                                 std::span<const std::size_t> snps,
                                 Cohort who) {
  for (std::size_t s : snps) {
    if (s >= dataset.snp_count()) throw std::out_of_range("SNP index beyond L");
  }
  DiplotypeCounts out;
  out.width = snps.size();
  std::vector<Genotype> codes(snps.size());
  auto visit = [&](std::size_t individual, bool is_case) {
    for (std::size_t k = 0; k < snps.size(); ++k) {
      codes[k] = dataset.column(snps[k])[individual];
    }
    out.add(PackedDiplotype(codes), is_case ? CountPair{1, 0} : CountPair{0, 1});
  };
  if (who != Cohort::controls) {
    for (std::size_t i = 0; i < dataset.case_count(); ++i) visit(i, true);
  }
  if (who != Cohort::cases) {
    for (std::size_t j = 0; j < dataset.control_count(); ++j) {
      visit(dataset.case_count() + j, false);
    }
  }
  return out;
}

double log_marginal(std::size_t width, std::span<const std::size_t> counts,
                    const DirichletConfig& config) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(),
                                            std::size_t{0});
  if (total == 0 || width == 0) return 0.0;
  const double la = config.log_alpha(width);
  const double alpha = std::exp(la);
  double acc = 0.0;
  for (std::size_t c : counts) {
    if (c > 0) acc += count_term(la, alpha, c);
  }
  return acc + normaliser(config.rho, total);
}

double log_marginal(const DiplotypeCounts& counts,
                    const DirichletConfig& config) {
  std::vector<std::size_t> combined;
  combined.reserve(counts.entries.size());
  for (const auto& [key, c] : counts.entries) {
    combined.push_back(c.cases + c.controls);
  }
  return log_marginal(counts.width, combined, config);
}

double log_conditional(const DiplotypeCounts& full, const DiplotypeCounts& sub,
                       const DirichletConfig& config) {
  if (full.n_total != sub.n_total || full.m_total != sub.m_total) {
    throw std::invalid_argument(
        "conditional marginal needs counts over identical individuals");
  }
  if (sub.width > full.width) {
    throw std::invalid_argument("conditioning set wider than the full set");
  }
  return log_marginal(full, config) - log_marginal(sub, config);
}

DiplotypeTallier::DiplotypeTallier(const GenotypeDataset& dataset)
    : dataset_(&dataset), labels_(dataset.individual_count(), 0) {}

void DiplotypeTallier::relabel(std::size_t snp, bool first) {
  const auto col = dataset_->column(snp);
  const std::size_t n = labels_.size();
  if (first) {
    remap_.assign(3, UINT32_MAX);
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto& slot = remap_[col[i]];
      if (slot == UINT32_MAX) slot = next++;
      labels_[i] = slot;
    }
    distinct_ = next;
    return;
  }
  remap_.assign(3 * distinct_, UINT32_MAX);
  std::uint32_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& slot = remap_[3 * labels_[i] + col[i]];
    if (slot == UINT32_MAX) slot = next++;
    labels_[i] = slot;
  }
  distinct_ = next;
}

const CohortTally& DiplotypeTallier::finish() {
  const std::size_t nd = dataset_->case_count();
  tally_.cases.assign(distinct_, 0);
  tally_.controls.assign(distinct_, 0);
  for (std::size_t i = 0; i < nd; ++i) ++tally_.cases[labels_[i]];
  for (std::size_t i = nd; i < labels_.size(); ++i) ++tally_.controls[labels_[i]];
  return tally_;
}

const CohortTally& DiplotypeTallier::tally(std::span<const std::size_t> snps) {
  if (snps.empty() || labels_.empty()) {
    // The empty diplotype: one category holding everybody.
    tally_.cases.assign(1, static_cast<std::uint32_t>(dataset_->case_count()));
    tally_.controls.assign(1,
                           static_cast<std::uint32_t>(dataset_->control_count()));
    return tally_;
  }
  for (std::size_t k = 0; k < snps.size(); ++k) relabel(snps[k], k == 0);
  return finish();
}

const CohortTally& DiplotypeTallier::tally_range(std::size_t first,
                                                 std::size_t last) {
  if (first >= last || labels_.empty()) {
    tally_.cases.assign(1, static_cast<std::uint32_t>(dataset_->case_count()));
    tally_.controls.assign(1,
                           static_cast<std::uint32_t>(dataset_->control_count()));
    return tally_;
  }
  for (std::size_t s = first; s < last; ++s) relabel(s, s == first);
  return finish();
}

MarginalTable::MarginalTable(DirichletConfig config, std::size_t max_total)
    : config_(config), max_total_(max_total), normaliser_(max_total + 1) {
  for (std::size_t t = 0; t <= max_total; ++t) {
    normaliser_[t] = normaliser(config_.rho, t);
  }
}

const std::vector<double>& MarginalTable::table(std::size_t width) {
  if (width >= per_count_.size()) per_count_.resize(width + 1);
  auto& t = per_count_[width];
  if (t.empty()) {
    const double la = config_.log_alpha(width);
    const double alpha = std::exp(la);
    t.resize(max_total_ + 1, 0.0);
    for (std::size_t c = 1; c <= max_total_; ++c) t[c] = count_term(la, alpha, c);
  }
  return t;
}

double MarginalTable::log_marginal(std::size_t width,
                                   std::span<const std::uint32_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0 || width == 0) return 0.0;
  if (total > max_total_) throw std::out_of_range("count total beyond table");
  const auto& t = table(width);
  double acc = 0.0;
  for (auto c : counts) {
    if (c > 0) acc += t[c];
  }
  return acc + normaliser_[total];
}

}  // namespace beamscan
