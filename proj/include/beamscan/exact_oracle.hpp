#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "beamscan/association_model.hpp"
#include "beamscan/genotype_io.hpp"

namespace beamscan {

inline constexpr std::size_t kOracleMaxSnps = 10;

/// Raised when a request exceeds a hard size guard.
class GuardError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OracleResult {
  std::vector<double> p_group1;
  std::vector<double> p_group2;
  std::vector<double> p_assoc;
  std::vector<double> p_boundary;
  double log_normalizer = 0.0;
  /// 2^(L-1) times the number of labelings within max_order.
  std::uint64_t states_enumerated = 0;
  /// Of those, the states whose blocks respect the diplotype cap.
  std::uint64_t states_allowed = 0;
};

/// Exact posterior marginals by summing over every (B, I). Work is split
/// into fixed label ranges and merged in order, so the result does not
/// depend on `threads`.
OracleResult enumerate_posterior(const GenotypeDataset& dataset,
                                 const PriorConfig& priors,
                                 const ModelConstraints& constraints,
                                 std::size_t threads = 1);

/// Unnormalised log mass of one state along the enumeration's code path.
double oracle_state_log_mass(const GenotypeDataset& dataset, const PriorConfig& priors,
                             const ModelConstraints& constraints,
                             const BlockPartition& partition,
                             const MembershipVector& membership);

/// Exact P(B | D, U, I) for every partition, indexed by the mask whose bit
/// i-1 is boundary i. Forbidden partitions get probability 0.
std::vector<double> exact_partition_posterior(const GenotypeDataset& dataset,
                                              const PriorConfig& priors,
                                              const ModelConstraints& constraints,
                                              const MembershipVector& membership);

BlockPartition partition_from_mask(std::size_t snp_count, std::uint64_t mask);
std::uint64_t partition_mask(const BlockPartition& partition);

void write_oracle(const OracleResult& result, const GenotypeDataset& dataset,
                  std::ostream& out);

}  // namespace beamscan
