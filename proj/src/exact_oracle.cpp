#include "beamscan/exact_oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <thread>

#include <fmt/format.h>

namespace beamscan {

namespace {

void check_guard(std::size_t L) {
  if (L == 0) throw std::invalid_argument("dataset has no SNPs");
  if (L > kOracleMaxSnps) {
    throw GuardError(fmt::format(
        "exact enumeration is limited to L <= {} SNPs (got L = {})", kOracleMaxSnps, L));
  }
}

// Scaled running sums: true value = exp(shift) * stored value.
struct Accumulator {
  double shift = kForbidden;
  double z = 0.0;
  std::vector<double> g1, g2, bd;

  explicit Accumulator(std::size_t L) : g1(L, 0.0), g2(L, 0.0), bd(L, 0.0) {}

  void rescale(double new_shift) {
    if (new_shift <= shift) return;
    const double f = std::isinf(shift) ? 0.0 : std::exp(shift - new_shift);
    z *= f;
    for (auto& v : g1) v *= f;
    for (auto& v : g2) v *= f;
    for (auto& v : bd) v *= f;
    shift = new_shift;
  }

  void merge(const Accumulator& o) {
    if (std::isinf(o.shift)) return;
    rescale(o.shift);
    const double f = std::exp(o.shift - shift);
    z += f * o.z;
    for (std::size_t i = 0; i < g1.size(); ++i) {
      g1[i] += f * o.g1[i];
      g2[i] += f * o.g2[i];
      bd[i] += f * o.bd[i];
    }
  }
};

// Per-thread tables shared by every labeling: combined block marginals and
// the diplotype-cap verdict for each [a, b).
class BlockTables {
 public:
  BlockTables(const GenotypeDataset& dataset, const PriorConfig& priors,
              const ModelConstraints& constraints)
      : L_(dataset.snp_count()),
        eval_(dataset, priors, constraints),
        max_order_(constraints.max_order),
        full_(L_ * (L_ + 1), 0.0),
        allowed_(L_ * (L_ + 1), 0),
        term_(L_ * (L_ + 1), 0.0) {
    for (std::size_t a = 0; a < L_; ++a) {
      for (std::size_t b = a + 1; b <= L_; ++b) {
        const SetMarginals m = eval_.block_marginals({a, b});
        full_[a * (L_ + 1) + b] = m.combined;
        allowed_[a * (L_ + 1) + b] = eval_.block_allowed(b - a, m.distinct) ? 1 : 0;
      }
    }
  }

  std::size_t max_order() const { return max_order_; }

  // Block terms for one labeling, plus its group-2 term.
  void load(const MembershipVector& membership) {
    const auto& labels = membership.labels();
    for (std::size_t a = 0; a < L_; ++a) {
      for (std::size_t b = a + 1; b <= L_; ++b) {
        const std::size_t k = a * (L_ + 1) + b;
        term_[k] = allowed_[k] ? eval_.block_term({a, b}, labels, full_[k]) : 0.0;
      }
    }
    const auto g2 = membership.group2();
    g2_term_ = eval_.group2_term(g2);
    counts_ = membership.counts();
  }

  double log_mass(std::uint64_t mask) {
    terms_.clear();
    std::size_t first = 0;
    for (std::size_t i = 1; i <= L_; ++i) {
      if (i == L_ || ((mask >> (i - 1)) & 1u)) {
        const std::size_t k = first * (L_ + 1) + i;
        if (!allowed_[k]) return kForbidden;
        terms_.push_back(term_[k]);
        first = i;
      }
    }
    return eval_.assemble(g2_term_, terms_, terms_.size(), counts_);
  }

 private:
  std::size_t L_;
  ModelEvaluator eval_;
  std::size_t max_order_;
  std::vector<double> full_;
  std::vector<std::uint8_t> allowed_;
  std::vector<double> term_;
  std::vector<double> terms_;
  double g2_term_ = 0.0;
  std::array<std::size_t, 3> counts_{};
};

std::uint64_t pow3(std::size_t n) {
  std::uint64_t p = 1;
  for (std::size_t k = 0; k < n; ++k) p *= 3;
  return p;
}

// Labeling number t, digit i = label of SNP i.
MembershipVector labeling(std::uint64_t t, std::size_t L) {
  std::vector<std::uint8_t> labels(L);
  for (std::size_t i = 0; i < L; ++i) {
    labels[i] = static_cast<std::uint8_t>(t % 3);
    t /= 3;
  }
  return MembershipVector(std::move(labels));
}

constexpr std::uint64_t kChunk = 27;

}  // namespace

BlockPartition partition_from_mask(std::size_t snp_count, std::uint64_t mask) {
  std::vector<std::uint8_t> ind(snp_count, 0);
  ind[0] = 1;
  for (std::size_t i = 1; i < snp_count; ++i) ind[i] = (mask >> (i - 1)) & 1u;
  return BlockPartition::from_indicators(std::move(ind));
}

std::uint64_t partition_mask(const BlockPartition& partition) {
  std::uint64_t mask = 0;
  for (std::size_t i = 1; i < partition.snp_count(); ++i) {
    if (partition.is_boundary(i)) mask |= std::uint64_t{1} << (i - 1);
  }
  return mask;
}

OracleResult enumerate_posterior(const GenotypeDataset& dataset, const PriorConfig& priors,
                                 const ModelConstraints& constraints, std::size_t threads) {
  const std::size_t L = dataset.snp_count();
  check_guard(L);
  const std::uint64_t n_labelings = pow3(L);
  const std::uint64_t n_masks = std::uint64_t{1} << (L - 1);
  const std::uint64_t n_chunks = (n_labelings + kChunk - 1) / kChunk;

  std::vector<Accumulator> partial(n_chunks, Accumulator(L));
  std::vector<std::uint64_t> valid(n_chunks, 0), allowed(n_chunks, 0);
  std::atomic<std::uint64_t> next{0};

  auto worker = [&] {
    BlockTables tables(dataset, priors, constraints);
    std::vector<double> masses(n_masks);
    for (;;) {
      const std::uint64_t c = next.fetch_add(1);
      if (c >= n_chunks) break;
      Accumulator& acc = partial[c];
      const std::uint64_t end = std::min(n_labelings, (c + 1) * kChunk);
      for (std::uint64_t t = c * kChunk; t < end; ++t) {
        const MembershipVector m = labeling(t, L);
        if (m.count(2) > tables.max_order()) continue;
        ++valid[c];
        tables.load(m);
        double top = kForbidden;
        for (std::uint64_t mask = 0; mask < n_masks; ++mask) {
          masses[mask] = tables.log_mass(mask);
          top = std::max(top, masses[mask]);
        }
        if (std::isinf(top)) continue;
        acc.rescale(top);
        double z = 0.0;
        std::vector<double> bd(L, 0.0);
        for (std::uint64_t mask = 0; mask < n_masks; ++mask) {
          if (is_forbidden(masses[mask])) continue;
          ++allowed[c];
          const double w = std::exp(masses[mask] - acc.shift);
          z += w;
          for (std::size_t i = 1; i < L; ++i) {
            if ((mask >> (i - 1)) & 1u) bd[i] += w;
          }
        }
        acc.z += z;
        bd[0] = z;
        for (std::size_t i = 0; i < L; ++i) {
          acc.bd[i] += bd[i];
          if (m.labels()[i] == 1) acc.g1[i] += z;
          if (m.labels()[i] == 2) acc.g2[i] += z;
        }
      }
    }
  };

  const std::size_t n_threads =
      std::max<std::size_t>(1, std::min<std::size_t>(threads, n_chunks));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  Accumulator total(L);
  OracleResult r;
  for (std::uint64_t c = 0; c < n_chunks; ++c) {
    total.merge(partial[c]);
    r.states_enumerated += valid[c] * n_masks;
    r.states_allowed += allowed[c];
  }
  if (std::isinf(total.shift) || total.z <= 0.0) {
    throw std::domain_error("every state is forbidden; the posterior is undefined");
  }
  r.log_normalizer = total.shift + std::log(total.z);
  r.p_group1.resize(L);
  r.p_group2.resize(L);
  r.p_assoc.resize(L);
  r.p_boundary.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    r.p_group1[i] = total.g1[i] / total.z;
    r.p_group2[i] = total.g2[i] / total.z;
    r.p_assoc[i] = r.p_group1[i] + r.p_group2[i];
    r.p_boundary[i] = total.bd[i] / total.z;
  }
  r.p_boundary[0] = 1.0;
  return r;
}

double oracle_state_log_mass(const GenotypeDataset& dataset, const PriorConfig& priors,
                             const ModelConstraints& constraints,
                             const BlockPartition& partition,
                             const MembershipVector& membership) {
  const std::size_t L = dataset.snp_count();
  check_guard(L);
  if (partition.snp_count() != L || membership.size() != L) {
    throw std::invalid_argument("state size does not match the dataset");
  }
  if (membership.count(2) > constraints.max_order) return kForbidden;
  BlockTables tables(dataset, priors, constraints);
  tables.load(membership);
  return tables.log_mass(partition_mask(partition));
}

std::vector<double> exact_partition_posterior(const GenotypeDataset& dataset,
                                              const PriorConfig& priors,
                                              const ModelConstraints& constraints,
                                              const MembershipVector& membership) {
  const std::size_t L = dataset.snp_count();
  check_guard(L);
  if (membership.size() != L) throw std::invalid_argument("membership size mismatch");
  if (membership.count(2) > constraints.max_order) {
    throw std::invalid_argument("membership exceeds the interaction order cap");
  }
  BlockTables tables(dataset, priors, constraints);
  tables.load(membership);
  const std::uint64_t n_masks = std::uint64_t{1} << (L - 1);
  std::vector<double> p(n_masks);
  double top = kForbidden;
  for (std::uint64_t mask = 0; mask < n_masks; ++mask) {
    p[mask] = tables.log_mass(mask);
    top = std::max(top, p[mask]);
  }
  if (std::isinf(top)) throw std::domain_error("every partition is forbidden");
  double z = 0.0;
  for (auto& v : p) {
    v = is_forbidden(v) ? 0.0 : std::exp(v - top);
    z += v;
  }
  for (auto& v : p) v /= z;
  return p;
}

void write_oracle(const OracleResult& result, const GenotypeDataset& dataset,
                  std::ostream& out) {
  out << fmt::format("## log_normalizer={:.17g} states_enumerated={} states_allowed={}\n",
                     result.log_normalizer, result.states_enumerated, result.states_allowed);
  out << "#snp_id\tposition\tp_group1\tp_group2\tp_assoc\tp_boundary\n";
  for (std::size_t i = 0; i < result.p_assoc.size(); ++i) {
    out << fmt::format("{}\t{}\t{:.17g}\t{:.17g}\t{:.17g}\t{:.17g}\n", dataset.snp_ids()[i],
                       dataset.positions()[i], result.p_group1[i], result.p_group2[i],
                       result.p_assoc[i], result.p_boundary[i]);
  }
}

}  // namespace beamscan
