#include "beamscan/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "beamscan/bstat.hpp"
#include "beamscan/exact_oracle.hpp"
#include "beamscan/genotype_io.hpp"
#include "beamscan/mcmc.hpp"
#include "beamscan/simulator.hpp"

namespace beamscan {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  std::string in;
  std::string out;
  std::string missing = "reject";
  std::optional<double> hwe_filter;
  double rho = 1.5;
  double prior_blocks = 50000;
  std::optional<double> p1, p2;
  std::optional<std::size_t> max_order;
  std::optional<std::size_t> threads;
  std::uint64_t seed = 1;
};

struct MapOptions {
  std::size_t chains = 1;
  std::optional<std::size_t> burnin, iters;
  std::size_t thin = 1;
  std::size_t progress = 0;
};

struct SimulateOptions {
  int model = 1;
  double maf = 0.2;
  double effect = 0.5;
  std::size_t cases = 500, controls = 500, snps = 200;
  std::size_t block_width = 5, founders = 4, pool_size = 0;
  std::vector<std::size_t> loci;
  bool drop = false;
};

struct BstatOptions {
  std::string sets;
  std::string from_posterior;
  double threshold = 0.5;
  double alpha = 0.05;
  std::string calibration = "permutation";
  std::size_t n_perm = 1000;
  std::size_t marginal_tests = 0, joint_tests = 0;
};

void add_data_options(CLI::App* app, DataOptions& o, bool with_seed) {
  app->add_option("--in", o.in, "Genotype file")->required();
  app->add_option("--out", o.out, "Output prefix (stdout when omitted)");
  app->add_option("--missing", o.missing, "Missing-genotype policy")
      ->check(CLI::IsMember({"reject", "impute"}));
  app->add_option("--hwe-filter", o.hwe_filter,
                  "Drop SNPs whose control HWE exact-test p is below this");
  app->add_option("--rho", o.rho, "Dirichlet pseudo-count mass");
  app->add_option("--prior-blocks", o.prior_blocks, "Expected genome-wide block count");
  app->add_option("--p1", o.p1, "Prior probability of group 1");
  app->add_option("--p2", o.p2, "Prior probability of group 2");
  app->add_option("--max-order", o.max_order, "Cap on the number of group-2 SNPs");
  app->add_option("--threads", o.threads, "Worker threads");
  if (with_seed) app->add_option("--seed", o.seed, "Random seed");
}

std::size_t resolve_threads(const std::optional<std::size_t>& flag) {
  if (flag) {
    if (*flag == 0) throw UsageError("--threads must be at least 1");
    return *flag;
  }
  if (const char* env = std::getenv("BEAMSCAN_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw UsageError(fmt::format("BEAMSCAN_THREADS must be a positive integer, got '{}'", env));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

GenotypeDataset load_input(const DataOptions& o) {
  if (!std::filesystem::exists(o.in)) throw DataError("cannot read " + o.in);
  GenotypeDataset d = load_dataset(o.in, parse_missing_policy(o.missing));
  if (o.hwe_filter) {
    if (!(*o.hwe_filter >= 0.0 && *o.hwe_filter <= 1.0)) {
      throw UsageError("--hwe-filter must lie in [0, 1]");
    }
    d = filter_hwe(d, *o.hwe_filter);
  }
  return d;
}

std::pair<PriorConfig, ModelConstraints> resolve_model(const GenotypeDataset& d,
                                                       const DataOptions& o) {
  if (!(o.rho > 0.0)) throw UsageError("--rho must be positive");
  if (!(o.prior_blocks > 0.0)) throw UsageError("--prior-blocks must be positive");
  if (d.individual_count() < 30) {
    throw GuardError(fmt::format(
        "at least 30 individuals are needed for the model constraints, got {}",
        d.individual_count()));
  }
  auto [priors, constraints] = default_priors(d.snp_count(), d.region_length(), d.case_count(),
                                              d.control_count(), o.prior_blocks);
  priors.rho = o.rho;
  if (o.p1) priors.p_group[1] = *o.p1;
  if (o.p2) priors.p_group[2] = *o.p2;
  priors.p_group[0] = 1.0 - priors.p_group[1] - priors.p_group[2];
  try {
    priors.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (o.max_order) constraints.max_order = *o.max_order;
  return {priors, constraints};
}

// Writes to <prefix><suffix>, or to `fallback` without a prefix.
class Sink {
 public:
  Sink(const std::string& prefix, const std::string& suffix, std::ostream& fallback)
      : stream_(&fallback) {
    if (!prefix.empty()) {
      path_ = prefix + suffix;
      file_ = std::make_unique<std::ofstream>(path_, std::ios::binary);
      if (!*file_) throw DataError("cannot write " + path_);
      stream_ = file_.get();
    }
  }
  std::ostream& operator*() { return *stream_; }
  const std::string& path() const { return path_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
  std::string path_;
};

struct Manifest {
  std::string subcommand;
  std::vector<std::string> args;
  std::vector<std::pair<std::string, std::string>> params;
  std::vector<std::string> outputs;
  double wall_clock = 0.0;

  void add(const std::string& key, const std::string& value) { params.emplace_back(key, value); }

  void write(const std::string& prefix) const {
    if (prefix.empty()) return;
    std::ofstream f(prefix + ".manifest.tsv", std::ios::binary);
    if (!f) throw DataError("cannot write " + prefix + ".manifest.tsv");
    f << "#key\tvalue\n";
    f << "version\t" << kVersion << '\n';
    f << "subcommand\t" << subcommand << '\n';
    f << "args";
    for (const auto& a : args) f << '\t' << a;
    f << '\n';
    for (const auto& [k, v] : params) f << "param." << k << '\t' << v << '\n';
    for (const auto& o : outputs) f << "output\t" << o << '\n';
    f << fmt::format("wall_clock_seconds\t{:.3f}\n", wall_clock);
  }
};

std::string num(double v) { return fmt::format("{:.17g}", v); }

void record_model(Manifest& m, const DataOptions& o, const PriorConfig& priors,
                  const ModelConstraints& constraints, std::size_t threads) {
  m.add("in", o.in);
  m.add("missing", o.missing);
  m.add("hwe_filter", o.hwe_filter ? num(*o.hwe_filter) : "none");
  m.add("rho", num(priors.rho));
  m.add("prior_blocks", num(o.prior_blocks));
  m.add("p_boundary", num(priors.p_boundary));
  m.add("p0", num(priors.p_group[0]));
  m.add("p1", num(priors.p_group[1]));
  m.add("p2", num(priors.p_group[2]));
  m.add("max_order", std::to_string(constraints.max_order));
  m.add("max_distinct_diplotypes", std::to_string(constraints.max_distinct_diplotypes));
  m.add("threads", std::to_string(threads));
}

std::string join_ids(const GenotypeDataset& d, const std::vector<std::size_t>& set) {
  std::string s;
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (k) s += ',';
    s += d.snp_ids()[set[k]];
  }
  return s;
}

Schedule resolve_schedule(const MapOptions& mo, std::size_t L) {
  Schedule s = Schedule::defaults(L);
  if (mo.burnin) s.burnin = *mo.burnin;
  if (mo.iters) s.iterations = *mo.iters;
  if (mo.thin == 0) throw UsageError("--thin must be at least 1");
  s.thin = mo.thin;
  if (mo.chains == 0) throw UsageError("--chains must be at least 1");
  return s;
}

int cmd_map(const DataOptions& o, const MapOptions& mo, bool partition_only, Manifest& m,
            std::ostream& out, std::ostream& err) {
  const GenotypeDataset d = load_input(o);
  const auto [priors, constraints] = resolve_model(d, o);
  const std::size_t threads = resolve_threads(o.threads);
  const Schedule schedule = resolve_schedule(mo, d.snp_count());
  RunOptions ro;
  ro.sampler.update_membership = !partition_only;
  if (mo.progress) {
    ro.progress_every = mo.progress;
    ro.progress = [&err](std::uint64_t it, double lj, const MoveCounters& c) {
      err << fmt::format("iter {} log_joint {:.4f} accepted split {}/{} merge {}/{} shift {}/{}\n",
                         it, lj, c.accepted[0], c.proposed[0], c.accepted[1], c.proposed[1],
                         c.accepted[2], c.proposed[2]);
    };
  }
  const MultiChainResult r =
      run_chains(d, priors, constraints, schedule, mo.chains, o.seed, threads, ro);
  const PosteriorSummary& s = r.averaged;
  if (s.empty_run) err << "warning: no post-burn-in samples; posteriors reported as 0\n";

  record_model(m, o, priors, constraints, threads);
  m.add("chains", std::to_string(mo.chains));
  m.add("burnin", std::to_string(schedule.burnin));
  m.add("iters", std::to_string(schedule.iterations));
  m.add("thin", std::to_string(schedule.thin));
  m.add("seed", std::to_string(o.seed));
  m.add("chain_seeds", fmt::format("{}..{}", o.seed, o.seed + mo.chains - 1));

  if (partition_only) {
    Sink post(o.out, ".boundaries.tsv", out);
    *post << "#snp_id\tposition\tp_boundary\n";
    for (std::size_t i = 0; i < d.snp_count(); ++i) {
      *post << fmt::format("{}\t{}\t{:.10g}\n", d.snp_ids()[i], d.positions()[i],
                           s.boundary_posterior[i]);
    }
    Sink blocks(o.out, ".blocks.tsv", out);
    *blocks << "#block\tfirst_snp\tlast_snp\twidth\n";
    std::size_t first = 0, index = 0;
    for (std::size_t i = 1; i <= d.snp_count(); ++i) {
      if (i == d.snp_count() || s.boundary_posterior[i] > 0.5) {
        *blocks << fmt::format("{}\t{}\t{}\t{}\n", index++, d.snp_ids()[first],
                               d.snp_ids()[i - 1], i - first);
        first = i;
      }
    }
    if (!o.out.empty()) m.outputs = {post.path(), blocks.path()};
  } else {
    Sink post(o.out, ".posterior.tsv", out);
    *post << "#snp_id\tposition\tp_group1\tp_group2\tp_assoc\tp_boundary\n";
    for (std::size_t i = 0; i < d.snp_count(); ++i) {
      *post << fmt::format("{}\t{}\t{:.10g}\t{:.10g}\t{:.10g}\t{:.10g}\n", d.snp_ids()[i],
                           d.positions()[i], s.marginal_posterior[i],
                           s.epistatic_posterior[i], s.assoc_posterior[i],
                           s.boundary_posterior[i]);
    }
    Sink sets(o.out, ".sets.tsv", out);
    *sets << "#snp_ids\tsize\tfrequency\n";
    std::vector<std::pair<std::vector<std::size_t>, double>> ordered(
        s.interaction_sets.begin(), s.interaction_sets.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [set, freq] : ordered) {
      *sets << fmt::format("{}\t{}\t{:.10g}\n", join_ids(d, set), set.size(), freq);
    }
    if (!o.out.empty()) m.outputs = {post.path(), sets.path()};
  }
  if (!o.out.empty()) {
    Sink diag(o.out, ".diagnostics.tsv", out);
    *diag << "#kind\ti\tj\tvalue\n";
    for (std::size_t c = 0; c < r.diagnostics.autocorrelation.size(); ++c) {
      const auto& ac = r.diagnostics.autocorrelation[c];
      for (std::size_t lag = 0; lag < ac.size(); ++lag) {
        *diag << fmt::format("autocorrelation\t{}\t{}\t{:.10g}\n", c, lag + 1, ac[lag]);
      }
    }
    const auto& cc = r.diagnostics.cross_chain_correlation;
    for (std::size_t a = 0; a < cc.size(); ++a) {
      for (std::size_t b = a + 1; b < cc.size(); ++b) {
        *diag << fmt::format("cross_chain_correlation\t{}\t{}\t{:.10g}\n", a, b, cc[a][b]);
      }
    }
    for (std::size_t k = 0; k < 3; ++k) {
      static const char* names[] = {"split", "merge", "shift"};
      *diag << fmt::format("acceptance\t{}\t{}\t{:.10g}\n", names[k], s.counters.proposed[k],
                           s.counters.proposed[k]
                               ? double(s.counters.accepted[k]) / double(s.counters.proposed[k])
                               : 0.0);
    }
    m.outputs.push_back(diag.path());
  }
  return kExitOk;
}

int cmd_oracle(const DataOptions& o, Manifest& m, std::ostream& out) {
  const GenotypeDataset d = load_input(o);
  if (d.snp_count() > kOracleMaxSnps) {
    throw GuardError(fmt::format(
        "exact enumeration is limited to L <= {} SNPs (got L = {})", kOracleMaxSnps,
        d.snp_count()));
  }
  const auto [priors, constraints] = resolve_model(d, o);
  const std::size_t threads = resolve_threads(o.threads);
  const OracleResult r = enumerate_posterior(d, priors, constraints, threads);
  record_model(m, o, priors, constraints, threads);
  Sink sink(o.out, ".oracle.tsv", out);
  write_oracle(r, d, *sink);
  if (!o.out.empty()) m.outputs = {sink.path()};
  return kExitOk;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  for (char c : line) {
    if (c == '\t' || c == ',' || c == ' ') {
      if (!cur.empty()) f.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (!cur.empty()) f.push_back(cur);
  return f;
}

std::size_t resolve_snp(const std::map<std::string, std::size_t>& ids,
                        const std::string& token, std::size_t line) {
  if (auto it = ids.find(token); it != ids.end()) return it->second;
  throw DataError("unknown SNP id '" + token + "'", line);
}

std::vector<std::vector<std::size_t>> read_sets(const GenotypeDataset& d,
                                                const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < d.snp_count(); ++i) ids[d.snp_ids()[i]] = i;
  std::vector<std::vector<std::size_t>> sets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::size_t> set;
    for (const auto& tok : split_fields(line)) set.push_back(resolve_snp(ids, tok, line_no));
    if (set.empty()) continue;
    std::vector<std::size_t> sorted = set;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw DataError("duplicate SNP in set", line_no);
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

// Rebuilds the parts of a summary that screening reads from `map` output.
PosteriorSummary read_posterior(const GenotypeDataset& d, const std::string& prefix) {
  std::map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < d.snp_count(); ++i) ids[d.snp_ids()[i]] = i;
  PosteriorSummary s;
  s.assoc_posterior.assign(d.snp_count(), 0.0);
  const std::string post_path = prefix + ".posterior.tsv";
  std::ifstream post(post_path, std::ios::binary);
  if (!post) throw DataError("cannot read " + post_path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(post, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    for (std::string t; std::getline(ss, t, '\t');) f.push_back(t);
    if (f.size() != 6) throw DataError("posterior row needs 6 columns", line_no);
    try {
      s.assoc_posterior[resolve_snp(ids, f[0], line_no)] = std::stod(f[4]);
    } catch (const std::logic_error&) {
      throw DataError("malformed posterior value", line_no);
    }
  }
  const std::string sets_path = prefix + ".sets.tsv";
  std::ifstream sets(sets_path, std::ios::binary);
  if (!sets) throw DataError("cannot read " + sets_path);
  line_no = 0;
  while (std::getline(sets, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    for (std::string t; std::getline(ss, t, '\t');) f.push_back(t);
    if (f.size() != 3) throw DataError("sets row needs 3 columns", line_no);
    std::vector<std::size_t> set;
    std::stringstream members(f[0]);
    for (std::string t; std::getline(members, t, ',');) {
      set.push_back(resolve_snp(ids, t, line_no));
    }
    std::sort(set.begin(), set.end());
    try {
      s.interaction_sets[set] = std::stod(f[2]);
    } catch (const std::logic_error&) {
      throw DataError("malformed set frequency", line_no);
    }
  }
  return s;
}

int cmd_bstat(const DataOptions& o, const BstatOptions& bo, Manifest& m, std::ostream& out) {
  if (bo.sets.empty() == bo.from_posterior.empty()) {
    throw UsageError("give exactly one of --sets or --from-posterior");
  }
  if (!(bo.threshold > 0.0 && bo.threshold < 1.0)) {
    throw UsageError("--threshold must lie in (0, 1)");
  }
  if (!(bo.alpha > 0.0 && bo.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
  if (!(o.rho > 0.0)) throw UsageError("--rho must be positive");
  const Calibration mode = parse_calibration(bo.calibration);
  if (mode == Calibration::permutation && bo.n_perm < kMinPermutations) {
    throw UsageError(fmt::format("--n-perm must be at least {}", kMinPermutations));
  }
  const GenotypeDataset d = load_input(o);
  if (d.case_count() == 0 || d.control_count() == 0) {
    throw DataError("B-stat calibration needs both cases and controls");
  }
  std::size_t max_order = SIZE_MAX;
  if (o.max_order) {
    max_order = *o.max_order;
  } else if (d.individual_count() >= 30) {
    max_order = ModelConstraints::for_sample_size(d.individual_count()).max_order;
  }
  ScreenOptions so;
  so.posterior_threshold = bo.threshold;
  so.alpha = bo.alpha;
  so.marginal_tests = bo.marginal_tests;
  so.joint_tests = bo.joint_tests;
  so.calibration = mode;
  so.n_perm = bo.n_perm;
  so.seed = o.seed;
  so.rho = o.rho;
  so.max_order = max_order;

  std::vector<BStatResult> results;
  if (!bo.sets.empty()) {
    const auto sets = read_sets(d, bo.sets);
    for (const auto& set : sets) {
      if (set.size() > max_order) {
        throw GuardError(fmt::format("set of {} SNPs exceeds the interaction order cap {}",
                                     set.size(), max_order));
      }
    }
    results = test_sets(d, sets, so);
  } else {
    results = screen_candidates(d, read_posterior(d, bo.from_posterior), so);
  }
  m.add("in", o.in);
  m.add("sets", bo.sets.empty() ? "none" : bo.sets);
  m.add("from_posterior", bo.from_posterior.empty() ? "none" : bo.from_posterior);
  m.add("calibration", calibration_name(mode));
  m.add("n_perm", std::to_string(bo.n_perm));
  m.add("alpha", num(bo.alpha));
  m.add("threshold", num(bo.threshold));
  m.add("rho", num(o.rho));
  m.add("seed", std::to_string(o.seed));
  m.add("max_order", max_order == SIZE_MAX ? "none" : std::to_string(max_order));

  Sink sink(o.out, ".bstat.tsv", out);
  *sink << "#snp_ids\tM\tb_value\tdf\tshift\tp_value\tcalibration\tsignificant\n";
  for (const auto& r : results) {
    *sink << fmt::format("{}\t{}\t{:.10g}\t{}\t{:.10g}\t{:.10g}\t{}\t{}\n",
                         join_ids(d, r.snp_set), r.snp_set.size(), r.b_value, r.df, r.shift,
                         r.p_value, calibration_name(r.calibration), r.significant ? 1 : 0);
  }
  if (!o.out.empty()) m.outputs = {sink.path()};
  return kExitOk;
}

int cmd_simulate(const SimulateOptions& so, const std::string& out_prefix, std::uint64_t seed,
                 Manifest& m, std::ostream& out) {
  if (so.model < 1 || so.model > 3) throw UsageError("--model must be 1, 2 or 3");
  if (!(so.maf > 0.0 && so.maf <= 0.5)) throw UsageError("--maf must lie in (0, 0.5]");
  if (!(so.effect >= 0.0)) throw UsageError("--effect must be >= 0");
  if (so.snps < 2) throw UsageError("--snps must be at least 2");
  if (so.block_width == 0) throw UsageError("--block-width must be positive");
  if (so.founders < 2 || so.founders > 255) throw UsageError("--founders must lie in [2, 255]");
  if (!so.loci.empty() && so.loci.size() != 2) throw UsageError("--loci takes two indices");
  SimulationConfig c;
  c.snp_count = so.snps;
  c.block_width = so.block_width;
  c.founders_per_block = so.founders;
  c.model_id = so.model;
  c.maf = so.maf;
  c.effect = so.effect;
  c.cases = so.cases;
  c.controls = so.controls;
  c.pool_size = so.pool_size;
  c.seed = seed;
  if (!so.loci.empty()) {
    if (so.loci[0] >= so.snps || so.loci[1] >= so.snps || so.loci[0] == so.loci[1]) {
      throw UsageError("--loci must be two distinct indices below --snps");
    }
    c.loci = std::array<std::size_t, 2>{so.loci[0], so.loci[1]};
  }
  SimulatedData data;
  try {
    data = simulate(c);
  } catch (const std::domain_error& e) {
    throw UsageError(e.what());
  }
  if (so.drop) data = drop_loci(data);

  m.add("model", std::to_string(so.model));
  m.add("maf", num(so.maf));
  m.add("effect", num(so.effect));
  m.add("theta", num(data.truth.theta));
  m.add("cases", std::to_string(so.cases));
  m.add("controls", std::to_string(so.controls));
  m.add("snps", std::to_string(so.snps));
  m.add("block_width", std::to_string(so.block_width));
  m.add("founders", std::to_string(so.founders));
  m.add("pool_size", so.pool_size ? std::to_string(so.pool_size) : "auto");
  m.add("loci", fmt::format("{},{}", data.truth.loci[0], data.truth.loci[1]));
  m.add("drop", so.drop ? "1" : "0");
  m.add("seed", std::to_string(seed));

  Sink geno(out_prefix, ".geno.tsv", out);
  write_dataset(data.dataset, *geno);
  if (!out_prefix.empty()) {
    Sink truth(out_prefix, ".truth.tsv", out);
    write_truth(data.truth, *truth);
    m.outputs = {geno.path(), truth.path()};
  }
  return kExitOk;
}

std::vector<std::string> read_manifest_args(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("args", 0) == 0 && (line.size() == 4 || line[4] == '\t')) {
      std::vector<std::string> args;
      std::stringstream ss(line.substr(std::min<std::size_t>(line.size(), 5)));
      for (std::string t; std::getline(ss, t, '\t');) args.push_back(t);
      if (args.empty()) throw DataError("manifest args line is empty", line_no);
      return args;
    }
  }
  throw DataError("manifest has no args line");
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_parsed(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Block-based Bayesian epistasis mapping", "beamscan"};
  app.set_version_flag("--version", std::string("beamscan ") + kVersion);
  app.require_subcommand(1);

  DataOptions map_o, part_o, oracle_o, bstat_o;
  MapOptions map_mo, part_mo;
  auto* map = app.add_subcommand("map", "Sample the posterior over blocks and memberships");
  add_data_options(map, map_o, true);
  auto add_schedule = [](CLI::App* a, MapOptions& mo) {
    a->add_option("--chains", mo.chains, "Independent chains (seeds seed..seed+chains-1)");
    a->add_option("--burnin", mo.burnin, "Burn-in iterations (default 10 L)");
    a->add_option("--iters", mo.iters, "Post-burn-in iterations (default 50 L)");
    a->add_option("--thin", mo.thin, "Keep every thin-th iteration");
    a->add_option("--progress", mo.progress, "Report to stderr every N iterations");
  };
  add_schedule(map, map_mo);
  auto* part = app.add_subcommand("partition", "Sample block boundaries only");
  add_data_options(part, part_o, true);
  add_schedule(part, part_mo);

  auto* oracle = app.add_subcommand("oracle", "Exact posterior by enumeration (L <= 10)");
  add_data_options(oracle, oracle_o, false);

  BstatOptions bo;
  auto* bs = app.add_subcommand("bstat", "B-stat significance for SNP sets");
  add_data_options(bs, bstat_o, true);
  bs->add_option("--sets", bo.sets, "File with one SNP set per line (ids)");
  bs->add_option("--from-posterior", bo.from_posterior, "Output prefix of a map run");
  bs->add_option("--threshold", bo.threshold, "Posterior threshold for screening");
  bs->add_option("--alpha", bo.alpha, "Family-wise significance level");
  bs->add_option("--calibration", bo.calibration, "analytic or permutation")
      ->check(CLI::IsMember({"analytic", "permutation"}));
  bs->add_option("--n-perm", bo.n_perm, "Permutation replicates");
  bs->add_option("--marginal-tests", bo.marginal_tests, "Bonferroni count for M = 1 (0: L)");
  bs->add_option("--joint-tests", bo.joint_tests, "Bonferroni count for M >= 2 (0: C(L, M))");

  SimulateOptions so;
  std::string sim_out;
  std::uint64_t sim_seed = 1;
  auto* sim = app.add_subcommand("simulate", "Simulate a case-control dataset");
  sim->add_option("--model", so.model, "Disease model 1, 2 or 3");
  sim->add_option("--maf", so.maf, "Disease allele frequency");
  sim->add_option("--effect", so.effect, "Marginal effect (odds ratio minus 1)");
  sim->add_option("--cases", so.cases, "Cases");
  sim->add_option("--controls", so.controls, "Controls");
  sim->add_option("--snps", so.snps, "SNP count L");
  sim->add_option("--block-width", so.block_width, "Founder block width");
  sim->add_option("--founders", so.founders, "Founders per block");
  sim->add_option("--pool-size", so.pool_size, "Population pool size (0: automatic)");
  sim->add_option("--loci", so.loci, "Two disease SNP indices")->expected(2);
  sim->add_flag("--drop", so.drop, "Remove the disease SNPs from the output");
  sim->add_option("--out", sim_out, "Output prefix (stdout when omitted)");
  sim->add_option("--seed", sim_seed, "Random seed");

  std::string manifest_path, rerun_out;
  auto* rerun = app.add_subcommand("rerun", "Repeat a run recorded in a manifest");
  rerun->add_option("--manifest", manifest_path, "Manifest file")->required();
  rerun->add_option("--out", rerun_out, "Replacement output prefix");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << "beamscan " << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  if (*rerun) {
    auto replay = read_manifest_args(manifest_path);
    if (!rerun_out.empty()) {
      auto it = std::find(replay.begin(), replay.end(), "--out");
      if (it == replay.end() || it + 1 == replay.end()) {
        replay.push_back("--out");
        replay.push_back(rerun_out);
      } else {
        *(it + 1) = rerun_out;
      }
    }
    if (!replay.empty() && replay[0] == "rerun") throw UsageError("manifest replays rerun");
    return dispatch(replay, out, err);
  }

  const auto start = std::chrono::steady_clock::now();
  Manifest m;
  m.args = args;
  int code = kExitOk;
  std::string prefix;
  if (*map) {
    m.subcommand = "map";
    prefix = map_o.out;
    code = cmd_map(map_o, map_mo, false, m, out, err);
  } else if (*part) {
    m.subcommand = "partition";
    prefix = part_o.out;
    code = cmd_map(part_o, part_mo, true, m, out, err);
  } else if (*oracle) {
    m.subcommand = "oracle";
    prefix = oracle_o.out;
    code = cmd_oracle(oracle_o, m, out);
  } else if (*bs) {
    m.subcommand = "bstat";
    prefix = bstat_o.out;
    code = cmd_bstat(bstat_o, bo, m, out);
  } else if (*sim) {
    m.subcommand = "simulate";
    prefix = sim_out;
    code = cmd_simulate(so, sim_out, sim_seed, m, out);
  }
  m.wall_clock =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (code == kExitOk) m.write(prefix);
  return code;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run_parsed(args, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const GuardError& e) {
    err << "error: " << e.what() << '\n';
    return kExitGuard;
  } catch (const PoolExhausted& e) {
    err << "error: " << e.what() << '\n';
    return kExitGuard;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return dispatch(args, out, err);
}

}  // namespace beamscan
