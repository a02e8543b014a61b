#include "beamscan/mcmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace beamscan {

Schedule Schedule::defaults(std::size_t snp_count) {
  return {10 * snp_count, 50 * snp_count, 1};
}

BlockPartition BlockProposal::apply(const BlockPartition& partition) const {
  BlockPartition out = partition;
  if (!applicable) return out;
  if (removed) out.set_boundary(removed, false);
  if (added) out.set_boundary(added, true);
  return out;
}

ChainSampler::ChainSampler(const GenotypeDataset& dataset,
                           const PriorConfig& priors,
                           const ModelConstraints& constraints,
                           std::uint64_t seed, SamplerOptions options)
    : ChainSampler(dataset, priors, constraints, seed,
                   BlockPartition::singletons(dataset.snp_count()),
                   MembershipVector(dataset.snp_count()), options) {}

ChainSampler::ChainSampler(const GenotypeDataset& dataset,
                           const PriorConfig& priors,
                           const ModelConstraints& constraints,
                           std::uint64_t seed, BlockPartition partition,
                           MembershipVector membership, SamplerOptions options)
    : dataset_(&dataset),
      eval_(dataset, priors, constraints),
      options_(options),
      full_(dataset.snp_count(), 0.0),
      term_(dataset.snp_count(), 0.0) {
  if (partition.snp_count() != dataset.snp_count() ||
      membership.size() != dataset.snp_count()) {
    throw std::invalid_argument("initial state does not match the dataset");
  }
  state_.partition = std::move(partition);
  state_.membership = std::move(membership);
  state_.rng = Rng(seed);
  rebuild_caches();
}

void ChainSampler::rebuild_caches() {
  if (state_.membership.count(2) > eval_.constraints().max_order) {
    throw std::invalid_argument("initial state exceeds the interaction order cap");
  }
  std::vector<double> terms;
  for (const Block& b : state_.partition.blocks()) {
    const SetMarginals full = eval_.block_marginals(b);
    if (!eval_.block_allowed(b.width(), full.distinct)) {
      throw std::invalid_argument("initial partition violates the diplotype cap");
    }
    full_[b.first] = full.combined;
    term_[b.first] = eval_.block_term(b, state_.membership.labels(), full.combined);
    terms.push_back(term_[b.first]);
  }
  group2_ = state_.membership.group2();
  group2_term_ = eval_.group2_term(group2_);
  state_.log_joint = eval_.assemble(group2_term_, terms,
                                    state_.partition.block_count(),
                                    state_.membership.counts());
}

double ChainSampler::recompute_log_joint() {
  return eval_.log_joint(state_.partition, state_.membership);
}

BlockProposal ChainSampler::propose_block_move() {
  const double u = state_.rng.uniform();
  BlockMoveKind kind = BlockMoveKind::shift;
  if (u < kBlockMoveWeights[0]) {
    kind = BlockMoveKind::split;
  } else if (u < kBlockMoveWeights[0] + kBlockMoveWeights[1]) {
    kind = BlockMoveKind::merge;
  }
  return propose_block_move(kind);
}

BlockProposal ChainSampler::propose_block_move(BlockMoveKind kind) {
  const BlockPartition& part = state_.partition;
  const std::size_t K = part.block_count();
  const std::size_t L = part.snp_count();
  BlockProposal p;
  p.kind = kind;
  // Start of the k-th block (0-based).
  auto kth_start = [&](std::size_t k) {
    std::size_t seen = 0;
    for (std::size_t i = 0; i < L; ++i) {
      if (part.is_boundary(i) && seen++ == k) return i;
    }
    return L;
  };

  switch (kind) {
    case BlockMoveKind::split: {
      const std::size_t first = kth_start(state_.rng.index(K));
      const std::size_t last = part.next_start(first);
      const std::size_t w = last - first;
      if (w < 2) return p;
      const std::size_t cut = first + 1 + state_.rng.index(w - 1);
      p.applicable = true;
      p.added = cut;
      p.log_hastings = std::log(static_cast<double>(w - 1));
      p.new_blocks = {Block{first, cut}, Block{cut, last}};
      p.new_block_count = K + 1;
      break;
    }
    case BlockMoveKind::merge: {
      if (K < 2) return p;
      const std::size_t first = kth_start(state_.rng.index(K - 1));
      const std::size_t second = part.next_start(first);
      const std::size_t last = part.next_start(second);
      p.applicable = true;
      p.removed = second;
      p.log_hastings = -std::log(static_cast<double>(last - first - 1));
      p.new_blocks = {Block{first, last}, Block{}};
      p.new_block_count = K - 1;
      break;
    }
    case BlockMoveKind::shift: {
      if (K < 2) return p;
      const std::size_t s = kth_start(1 + state_.rng.index(K - 1));
      const std::size_t prev = part.block_of(s - 1).first;
      const std::size_t next = part.next_start(s);
      // New position anywhere strictly between the neighbouring boundaries.
      const std::size_t range = next - prev - 2;
      if (range == 0) return p;
      std::size_t target = prev + 1 + state_.rng.index(range);
      if (target >= s) ++target;
      p.applicable = true;
      p.removed = s;
      p.added = target;
      // Moving the boundary leaves its neighbours, and so the reverse
      // move's boundary count and offset range, unchanged.
      p.log_hastings = 0.0;
      p.new_blocks = {Block{prev, target}, Block{target, next}};
      p.new_block_count = K;
      break;
    }
  }
  return p;
}

void ChainSampler::evaluate(BlockProposal& p) {
  p.evaluated = true;
  if (!p.applicable) {
    p.log_joint = kForbidden;
    return;
  }
  const std::size_t n_new = p.kind == BlockMoveKind::merge ? 1 : 2;
  double delta = 0.0;
  for (std::size_t k = 0; k < n_new; ++k) {
    const Block b = p.new_blocks[k];
    const SetMarginals full = eval_.block_marginals(b);
    if (!eval_.block_allowed(b.width(), full.distinct)) {
      p.log_joint = kForbidden;
      return;
    }
    p.new_full[k] = full.combined;
    p.new_terms[k] = eval_.block_term(b, state_.membership.labels(), full.combined);
    delta += p.new_terms[k];
  }
  switch (p.kind) {
    case BlockMoveKind::split:
      delta -= term_[p.new_blocks[0].first];
      break;
    case BlockMoveKind::merge:
      delta -= term_[p.new_blocks[0].first] + term_[p.removed];
      break;
    case BlockMoveKind::shift:
      delta -= term_[p.new_blocks[0].first] + term_[p.removed];
      break;
  }
  const double block_diff = static_cast<double>(p.new_block_count) -
                            static_cast<double>(state_.partition.block_count());
  delta += block_diff * eval_.log_prior_boundary_ratio();
  p.log_joint = state_.log_joint + delta;
}

bool ChainSampler::metropolis(double log_ratio) {
  const double u = state_.rng.uniform_open();
  return std::log(u) < log_ratio;
}

bool ChainSampler::accept(BlockProposal& p) {
  const auto k = static_cast<std::size_t>(p.kind);
  ++counters_.proposed[k];
  if (!p.applicable) {
    ++counters_.inapplicable[k];
    return false;
  }
  if (!p.evaluated) evaluate(p);
  const double log_ratio = is_forbidden(p.log_joint)
                               ? kForbidden
                               : p.log_joint - state_.log_joint + p.log_hastings;
  if (!metropolis(log_ratio)) return false;

  if (p.removed) state_.partition.set_boundary(p.removed, false);
  if (p.added) state_.partition.set_boundary(p.added, true);
  const std::size_t n_new = p.kind == BlockMoveKind::merge ? 1 : 2;
  for (std::size_t j = 0; j < n_new; ++j) {
    full_[p.new_blocks[j].first] = p.new_full[j];
    term_[p.new_blocks[j].first] = p.new_terms[j];
  }
  state_.log_joint = p.log_joint;
  ++counters_.accepted[k];
  return true;
}

bool ChainSampler::block_move_step() {
  BlockProposal p = propose_block_move();
  return accept(p);
}

double ChainSampler::group2_with(std::size_t snp, bool include) {
  scratch_ = group2_;
  auto it = std::lower_bound(scratch_.begin(), scratch_.end(), snp);
  if (include) {
    scratch_.insert(it, snp);
  } else {
    scratch_.erase(it);
  }
  return eval_.group2_term(scratch_);
}

namespace {

struct ConditionalEval {
  std::array<double, 3> log_weight{};
  std::array<double, 3> term{};
  std::array<double, 3> group2{};
};

ConditionalEval evaluate_conditional(ModelEvaluator& eval,
                                            MembershipVector& membership,
                                            Block block, std::size_t snp,
                                            double full, double cur_term,
                                            double cur_group2,
                                            std::size_t group2_size,
                                            auto&& group2_with) {
  ConditionalEval out;
  const std::uint8_t cur = membership[snp];
  for (std::uint8_t c = 0; c < 3; ++c) {
    if (c == cur) {
      out.term[c] = cur_term;
      out.group2[c] = cur_group2;
    } else {
      if (c == 2 && group2_size + 1 > eval.constraints().max_order) {
        out.log_weight[c] = kForbidden;
        continue;
      }
      membership.set(snp, c);
      out.term[c] = eval.block_term(block, membership.labels(), full);
      membership.set(snp, cur);
      out.group2[c] = (c == 2 || cur == 2) ? group2_with(c == 2) : cur_group2;
    }
    out.log_weight[c] = out.term[c] + out.group2[c] + eval.log_prior_label(c);
  }
  return out;
}

}  // namespace

std::array<double, 3> ChainSampler::full_conditional(std::size_t snp) {
  const Block b = state_.partition.block_of(snp);
  const auto ce = evaluate_conditional(
      eval_, state_.membership, b, snp, full_[b.first], term_[b.first],
      group2_term_, group2_.size(),
      [&](bool include) { return group2_with(snp, include); });
  const double top = *std::max_element(ce.log_weight.begin(), ce.log_weight.end());
  std::array<double, 3> prob{};
  double total = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    prob[c] = is_forbidden(ce.log_weight[c]) ? 0.0 : std::exp(ce.log_weight[c] - top);
    total += prob[c];
  }
  for (double& p : prob) p /= total;
  return prob;
}

void ChainSampler::gibbs_update(std::size_t snp) {
  const Block b = state_.partition.block_of(snp);
  const std::uint8_t cur = state_.membership[snp];
  const auto ce = evaluate_conditional(
      eval_, state_.membership, b, snp, full_[b.first], term_[b.first],
      group2_term_, group2_.size(),
      [&](bool include) { return group2_with(snp, include); });
  const double top = *std::max_element(ce.log_weight.begin(), ce.log_weight.end());
  std::array<double, 3> w{};
  double total = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    w[c] = is_forbidden(ce.log_weight[c]) ? 0.0 : std::exp(ce.log_weight[c] - top);
    total += w[c];
  }
  const double u = state_.rng.uniform() * total;
  std::uint8_t pick = cur;
  double acc = 0.0;
  for (std::uint8_t c = 0; c < 3; ++c) {
    if (w[c] == 0.0) continue;
    acc += w[c];
    pick = c;
    if (u < acc) break;
  }
  if (pick == cur) return;

  state_.membership.set(snp, pick);
  term_[b.first] = ce.term[pick];
  if (pick == 2 || cur == 2) {
    auto it = std::lower_bound(group2_.begin(), group2_.end(), snp);
    if (pick == 2) {
      group2_.insert(it, snp);
    } else {
      group2_.erase(it);
    }
    group2_term_ = ce.group2[pick];
  }
  state_.log_joint += ce.log_weight[pick] - ce.log_weight[cur];
}

void ChainSampler::gibbs_sweep() {
  for (std::size_t i = 0; i < dataset_->snp_count(); ++i) gibbs_update(i);
}

bool ChainSampler::propose_swap(std::size_t a, std::size_t b) {
  auto& m = state_.membership;
  const std::uint8_t la = m[a];
  const std::uint8_t lb = m[b];
  if (la == lb) throw std::invalid_argument("swap needs two different labels");
  ++counters_.swaps_proposed;

  const Block ba = state_.partition.block_of(a);
  const Block bb = state_.partition.block_of(b);
  m.set(a, lb);
  m.set(b, la);
  double new_a = eval_.block_term(ba, m.labels(), full_[ba.first]);
  double new_b = 0.0;
  double delta = new_a - term_[ba.first];
  if (!(bb == ba)) {
    new_b = eval_.block_term(bb, m.labels(), full_[bb.first]);
    delta += new_b - term_[bb.first];
  }
  const bool group2_changes = (la == 2) != (lb == 2);
  std::vector<std::size_t> new_group2;
  double new_group2_term = group2_term_;
  if (group2_changes) {
    const std::size_t out = la == 2 ? a : b;
    const std::size_t in = la == 2 ? b : a;
    new_group2 = group2_;
    new_group2.erase(std::lower_bound(new_group2.begin(), new_group2.end(), out));
    new_group2.insert(std::lower_bound(new_group2.begin(), new_group2.end(), in), in);
    new_group2_term = eval_.group2_term(new_group2);
    delta += new_group2_term - group2_term_;
  }
  if (!metropolis(delta)) {
    m.set(a, la);
    m.set(b, lb);
    return false;
  }
  term_[ba.first] = new_a;
  if (!(bb == ba)) term_[bb.first] = new_b;
  if (group2_changes) {
    group2_ = std::move(new_group2);
    group2_term_ = new_group2_term;
  }
  state_.log_joint += delta;
  ++counters_.swaps_accepted;
  return true;
}

void ChainSampler::swap_pass() {
  const auto& m = state_.membership;
  const std::size_t L = m.size();
  const std::size_t associated = m.count(1) + m.count(2);
  // Label counts are invariant under swaps, so `associated` stays fixed.
  for (std::size_t step = 0; step < associated; ++step) {
    std::size_t r = state_.rng.index(associated);
    std::size_t a = 0;
    for (; a < L; ++a) {
      if (m[a] != 0 && r-- == 0) break;
    }
    const std::uint8_t la = m[a];
    const std::size_t others = L - m.count(la);
    if (others == 0) continue;
    r = state_.rng.index(others);
    std::size_t b = 0;
    for (; b < L; ++b) {
      if (m[b] != la && r-- == 0) break;
    }
    propose_swap(a, b);
  }
}

void ChainSampler::iterate() {
  block_move_step();
  if (options_.update_membership) {
    gibbs_sweep();
    swap_pass();
  }
  ++state_.iteration;
}

PosteriorSummary run_chain(const GenotypeDataset& dataset,
                           const PriorConfig& priors,
                           const ModelConstraints& constraints,
                           const Schedule& schedule, std::uint64_t seed,
                           const RunOptions& options) {
  if (schedule.thin == 0) throw std::invalid_argument("thin must be positive");
  const std::size_t L = dataset.snp_count();
  ChainSampler sampler(dataset, priors, constraints, seed, options.sampler);

  std::vector<std::size_t> n1(L, 0), n2(L, 0), nb(L, 0);
  std::map<std::vector<std::size_t>, std::size_t> sets;
  PosteriorSummary out;
  std::size_t samples = 0;
  double block_sum = 0.0;
  const std::size_t total = schedule.burnin + schedule.iterations;
  for (std::size_t it = 1; it <= total; ++it) {
    sampler.iterate();
    const auto& st = sampler.state();
    if (options.progress && options.progress_every &&
        it % options.progress_every == 0) {
      options.progress(it, st.log_joint, sampler.counters());
    }
    if (it <= schedule.burnin || (it - schedule.burnin) % schedule.thin != 0) {
      continue;
    }
    ++samples;
    std::vector<std::size_t> g2;
    for (std::size_t i = 0; i < L; ++i) {
      const auto g = st.membership[i];
      if (g == 1) ++n1[i];
      if (g == 2) {
        ++n2[i];
        g2.push_back(i);
      }
      if (st.partition.is_boundary(i)) ++nb[i];
    }
    if (!g2.empty()) ++sets[g2];
    block_sum += static_cast<double>(st.partition.block_count());
    out.log_joint_trace.push_back(st.log_joint);
  }

  out.samples_used = samples;
  out.counters = sampler.counters();
  out.marginal_posterior.assign(L, 0.0);
  out.epistatic_posterior.assign(L, 0.0);
  out.assoc_posterior.assign(L, 0.0);
  out.boundary_posterior.assign(L, 0.0);
  if (samples == 0) {
    out.empty_run = true;
    return out;
  }
  const double n = static_cast<double>(samples);
  for (std::size_t i = 0; i < L; ++i) {
    out.marginal_posterior[i] = static_cast<double>(n1[i]) / n;
    out.epistatic_posterior[i] = static_cast<double>(n2[i]) / n;
    out.assoc_posterior[i] = out.marginal_posterior[i] + out.epistatic_posterior[i];
    out.boundary_posterior[i] = static_cast<double>(nb[i]) / n;
  }
  for (const auto& [set, count] : sets) {
    out.interaction_sets[set] = static_cast<double>(count) / n;
  }
  out.mean_block_count = block_sum / n;
  return out;
}

std::vector<double> autocorrelation(const std::vector<double>& trace,
                                    std::size_t max_lag) {
  const std::size_t n = trace.size();
  std::vector<double> out;
  if (n < 2) return out;
  const double mean = std::accumulate(trace.begin(), trace.end(), 0.0) /
                      static_cast<double>(n);
  double var = 0.0;
  for (double x : trace) var += (x - mean) * (x - mean);
  const std::size_t lags = std::min(max_lag, n - 1);
  out.assign(lags, 0.0);
  if (var <= 0.0) return out;
  for (std::size_t k = 1; k <= lags; ++k) {
    double c = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) {
      c += (trace[t] - mean) * (trace[t + k] - mean);
    }
    out[k - 1] = c / var;
  }
  return out;
}

double pearson_correlation(const std::vector<double>& a,
                           const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("length mismatch");
  const std::size_t n = a.size();
  if (n == 0) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return a == b ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

MultiChainResult run_chains(const GenotypeDataset& dataset,
                            const PriorConfig& priors,
                            const ModelConstraints& constraints,
                            const Schedule& schedule, std::size_t n_chains,
                            std::uint64_t base_seed, std::size_t threads,
                            const RunOptions& options) {
  if (n_chains == 0) throw std::invalid_argument("need at least one chain");
  MultiChainResult result;
  result.chains.resize(n_chains);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t c = next++; c < n_chains; c = next++) {
      RunOptions opts = options;
      if (c != 0) opts.progress = nullptr;  // only chain 0 reports
      result.chains[c] =
          run_chain(dataset, priors, constraints, schedule, base_seed + c, opts);
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(threads, n_chains));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (n_chains == 1) {
    result.averaged = result.chains[0];
  } else {
    const std::size_t L = dataset.snp_count();
    PosteriorSummary& avg = result.averaged;
    avg.assoc_posterior.assign(L, 0.0);
    avg.marginal_posterior.assign(L, 0.0);
    avg.epistatic_posterior.assign(L, 0.0);
    avg.boundary_posterior.assign(L, 0.0);
    const double n = static_cast<double>(n_chains);
    avg.empty_run = true;
    for (const auto& ch : result.chains) {
      for (std::size_t i = 0; i < L; ++i) {
        avg.marginal_posterior[i] += ch.marginal_posterior[i] / n;
        avg.epistatic_posterior[i] += ch.epistatic_posterior[i] / n;
        avg.boundary_posterior[i] += ch.boundary_posterior[i] / n;
      }
      for (const auto& [set, f] : ch.interaction_sets) avg.interaction_sets[set] += f / n;
      avg.samples_used += ch.samples_used;
      avg.empty_run = avg.empty_run && ch.empty_run;
      avg.mean_block_count += ch.mean_block_count / n;
      for (std::size_t k = 0; k < 3; ++k) {
        avg.counters.proposed[k] += ch.counters.proposed[k];
        avg.counters.accepted[k] += ch.counters.accepted[k];
        avg.counters.inapplicable[k] += ch.counters.inapplicable[k];
      }
      avg.counters.swaps_proposed += ch.counters.swaps_proposed;
      avg.counters.swaps_accepted += ch.counters.swaps_accepted;
    }
    for (std::size_t i = 0; i < L; ++i) {
      avg.assoc_posterior[i] = avg.marginal_posterior[i] + avg.epistatic_posterior[i];
    }
  }

  auto& diag = result.diagnostics;
  for (const auto& ch : result.chains) {
    diag.autocorrelation.push_back(autocorrelation(ch.log_joint_trace, 100));
  }
  diag.cross_chain_correlation.assign(n_chains, std::vector<double>(n_chains, 1.0));
  for (std::size_t i = 0; i < n_chains; ++i) {
    for (std::size_t j = i + 1; j < n_chains; ++j) {
      const double r = pearson_correlation(result.chains[i].assoc_posterior,
                                           result.chains[j].assoc_posterior);
      diag.cross_chain_correlation[i][j] = r;
      diag.cross_chain_correlation[j][i] = r;
    }
  }
  return result;
}

}  // namespace beamscan
