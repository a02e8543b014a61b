#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "beamscan/association_model.hpp"
#include "beamscan/genotype_io.hpp"
#include "beamscan/rng.hpp"

namespace beamscan {

/// Post-burn-in `iterations` are recorded every `thin` iterations.
struct Schedule {
  std::size_t burnin = 0;
  std::size_t iterations = 0;
  std::size_t thin = 1;

  /// burnin = 10 L, iterations = 50 L, thin = 1.
  static Schedule defaults(std::size_t snp_count);
};

enum class BlockMoveKind { split = 0, merge = 1, shift = 2 };

/// Move-type probabilities for split, merge and shift.
inline constexpr std::array<double, 3> kBlockMoveWeights{0.1, 0.1, 0.8};

/// A proposed boundary change. `removed` / `added` are boundary indices
/// (0 when unused): split adds one, merge removes one, shift does both.
struct BlockProposal {
  BlockMoveKind kind = BlockMoveKind::split;
  bool applicable = false;
  std::size_t removed = 0;
  std::size_t added = 0;
  /// ln q(B' -> B) - ln q(B -> B').
  double log_hastings = 0.0;
  /// Filled by ChainSampler::evaluate; kForbidden for disallowed states.
  double log_joint = 0.0;
  bool evaluated = false;

  BlockPartition apply(const BlockPartition& partition) const;

  // New block pieces, cached for acceptance.
  std::array<Block, 2> new_blocks{};
  std::array<double, 2> new_full{};
  std::array<double, 2> new_terms{};
  std::size_t new_block_count = 0;
};

struct MoveCounters {
  std::array<std::size_t, 3> proposed{};
  std::array<std::size_t, 3> accepted{};
  std::array<std::size_t, 3> inapplicable{};
  std::size_t swaps_proposed = 0;
  std::size_t swaps_accepted = 0;
};

struct ChainState {
  BlockPartition partition;
  MembershipVector membership;
  double log_joint = 0.0;
  Rng rng;
  std::uint64_t iteration = 0;
};

struct SamplerOptions {
  /// When false, memberships stay frozen and only block moves run.
  bool update_membership = true;
};

/// One Markov chain over (B, I). Caches every block's combined marginal and
/// conditional term so moves only re-evaluate the blocks they touch.
class ChainSampler {
 public:
  /// Starts from all-singleton blocks and all group-0 labels.
  ChainSampler(const GenotypeDataset& dataset, const PriorConfig& priors,
               const ModelConstraints& constraints, std::uint64_t seed,
               SamplerOptions options = {});
  ChainSampler(const GenotypeDataset& dataset, const PriorConfig& priors,
               const ModelConstraints& constraints, std::uint64_t seed,
               BlockPartition partition, MembershipVector membership,
               SamplerOptions options = {});

  const ChainState& state() const { return state_; }
  const MoveCounters& counters() const { return counters_; }
  ModelEvaluator& evaluator() { return eval_; }

  BlockProposal propose_block_move(BlockMoveKind kind);
  /// Draws the move kind with kBlockMoveWeights, then proposes.
  BlockProposal propose_block_move();
  /// Fills proposal.log_joint for the proposed partition.
  void evaluate(BlockProposal& proposal);
  /// Metropolis-Hastings decision; consumes exactly one uniform draw.
  bool accept(BlockProposal& proposal);
  bool block_move_step();

  void gibbs_sweep();
  /// Resamples one SNP from its full conditional over {0, 1, 2}.
  void gibbs_update(std::size_t snp);
  /// Full conditional probabilities of SNP `snp` (without sampling).
  std::array<double, 3> full_conditional(std::size_t snp);

  /// One label-swap proposal per group-1/2 SNP, each picking a uniformly
  /// random group-1/2 SNP and a uniformly random partner of another group.
  void swap_pass();
  /// Proposes swapping the labels of two SNPs with different labels.
  bool propose_swap(std::size_t a, std::size_t b);

  /// One iteration: block move, Gibbs sweep, swap pass.
  void iterate();

  /// Fresh evaluation of the current state, bypassing the caches.
  double recompute_log_joint();

 private:
  void rebuild_caches();
  bool metropolis(double log_ratio);
  double group2_with(std::size_t snp, bool include);

  const GenotypeDataset* dataset_;
  ModelEvaluator eval_;
  ChainState state_;
  SamplerOptions options_;
  MoveCounters counters_;
  std::vector<double> full_;   // combined marginal per block start
  std::vector<double> term_;   // conditional term per block start
  std::vector<std::size_t> group2_;
  double group2_term_ = 0.0;
  std::vector<std::size_t> scratch_;
};

struct PosteriorSummary {
  std::vector<double> assoc_posterior;
  std::vector<double> marginal_posterior;
  std::vector<double> epistatic_posterior;
  std::vector<double> boundary_posterior;
  /// Sampled non-empty group-2 sets and their visit frequencies.
  std::map<std::vector<std::size_t>, double> interaction_sets;
  std::size_t samples_used = 0;
  /// Set when no samples were recorded; every posterior is then 0.
  bool empty_run = false;
  double mean_block_count = 0.0;
  std::vector<double> log_joint_trace;
  MoveCounters counters;
};

using ProgressCallback =
    std::function<void(std::uint64_t iteration, double log_joint,
                       const MoveCounters& counters)>;

struct RunOptions {
  SamplerOptions sampler;
  /// Reports every `progress_every` iterations when non-zero.
  std::size_t progress_every = 0;
  ProgressCallback progress;
};

PosteriorSummary run_chain(const GenotypeDataset& dataset,
                           const PriorConfig& priors,
                           const ModelConstraints& constraints,
                           const Schedule& schedule, std::uint64_t seed,
                           const RunOptions& options = {});

struct ChainDiagnostics {
  /// Per chain, autocorrelation of the log-joint trace at lags 1..100.
  std::vector<std::vector<double>> autocorrelation;
  /// Pearson correlation of assoc_posterior between chains i and j.
  std::vector<std::vector<double>> cross_chain_correlation;
};

struct MultiChainResult {
  PosteriorSummary averaged;
  std::vector<PosteriorSummary> chains;
  ChainDiagnostics diagnostics;
};

/// Chain c uses seed base_seed + c. Results do not depend on `threads`.
MultiChainResult run_chains(const GenotypeDataset& dataset,
                            const PriorConfig& priors,
                            const ModelConstraints& constraints,
                            const Schedule& schedule, std::size_t n_chains,
                            std::uint64_t base_seed, std::size_t threads = 1,
                            const RunOptions& options = {});

/// Sample autocorrelation at lags 1..max_lag (shorter when the trace is).
std::vector<double> autocorrelation(const std::vector<double>& trace,
                                    std::size_t max_lag);
double pearson_correlation(const std::vector<double>& a,
                           const std::vector<double>& b);

}  // namespace beamscan
