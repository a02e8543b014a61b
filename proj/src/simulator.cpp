#include "beamscan/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>

namespace beamscan {

FounderPoolConfig FounderPoolConfig::uniform(std::size_t snp_count, std::size_t width,
                                             std::size_t founders) {
  if (snp_count == 0 || width == 0) {
    throw std::invalid_argument("need at least one SNP and a positive block width");
  }
  FounderPoolConfig c;
  c.founders_per_block = founders;
  for (std::size_t done = 0; done < snp_count; done += width) {
    c.block_widths.push_back(std::min(width, snp_count - done));
  }
  return c;
}

FounderPool FounderPool::generate(const FounderPoolConfig& config, Rng& rng) {
  if (config.founders_per_block < 2) {
    throw std::invalid_argument("need at least two founders per block");
  }
  FounderPool pool;
  const std::size_t F = config.founders_per_block;
  for (std::size_t width : config.block_widths) {
    if (width == 0) throw std::invalid_argument("zero-width founder block");
    FounderBlock b;
    b.first = pool.snp_count_;
    b.width = width;
    b.haplotypes.assign(F, std::vector<std::uint8_t>(width, 0));
    for (std::size_t k = 0; k < width; ++k) {
      // redraw until the column is polymorphic
      for (;;) {
        std::size_t ones = 0;
        for (std::size_t f = 0; f < F; ++f) {
          b.haplotypes[f][k] = rng.bernoulli(0.5) ? 1 : 0;
          ones += b.haplotypes[f][k];
        }
        if (ones > 0 && ones < F) break;
      }
    }
    b.frequencies.resize(F);
    double total = 0.0;
    for (auto& p : b.frequencies) {
      p = 0.5 + rng.uniform();
      total += p;
    }
    for (auto& p : b.frequencies) p /= total;
    for (std::size_t k = 0; k < width; ++k) pool.block_of_.push_back(pool.blocks_.size());
    pool.snp_count_ += width;
    pool.blocks_.push_back(std::move(b));
  }
  pool.cumulative_.resize(pool.blocks_.size());
  for (std::size_t i = 0; i < pool.blocks_.size(); ++i) {
    pool.set_allele_frequency(pool.blocks_[i].first,
                              pool.allele_frequency(pool.blocks_[i].first));
  }
  return pool;
}

std::size_t FounderPool::block_index(std::size_t snp) const {
  if (snp >= snp_count_) throw std::out_of_range("SNP beyond the founder pool");
  return block_of_[snp];
}

std::vector<std::size_t> FounderPool::block_starts() const {
  std::vector<std::size_t> out;
  for (const auto& b : blocks_) out.push_back(b.first);
  return out;
}

double FounderPool::allele_frequency(std::size_t snp) const {
  const FounderBlock& b = blocks_[block_index(snp)];
  double q = 0.0;
  for (std::size_t f = 0; f < b.haplotypes.size(); ++f) {
    if (b.haplotypes[f][snp - b.first]) q += b.frequencies[f];
  }
  return q;
}

void FounderPool::set_allele_frequency(std::size_t snp, double f) {
  if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("allele frequency must lie in (0, 1)");
  const std::size_t bi = block_index(snp);
  FounderBlock& b = blocks_[bi];
  const double q = allele_frequency(snp);
  for (std::size_t k = 0; k < b.haplotypes.size(); ++k) {
    b.frequencies[k] *= b.haplotypes[k][snp - b.first] ? f / q : (1.0 - f) / (1.0 - q);
  }
  auto& cum = cumulative_[bi];
  cum.resize(b.frequencies.size());
  std::partial_sum(b.frequencies.begin(), b.frequencies.end(), cum.begin());
}

std::size_t FounderPool::draw_founder(std::size_t block, Rng& rng) const {
  const auto& cum = cumulative_[block];
  const double u = rng.uniform() * cum.back();
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
}

double DiseaseModel::risk(Genotype a, Genotype b) const {
  if (a > 2 || b > 2) throw std::invalid_argument("genotype code outside {0,1,2}");
  const double r = 1.0 + theta;
  switch (model_id) {
    case 1:
      return std::pow(r, a + b);
    case 2:
      if (a == 0 || b == 0) return 1.0;
      return std::pow(r, a + b);
    case 3:
      return (a > 0 && b > 0) ? r : 1.0;
    default:
      throw std::invalid_argument("disease model must be 1, 2 or 3");
  }
}

std::array<double, 3> hwe_genotype_probs(double f) {
  return {(1.0 - f) * (1.0 - f), 2.0 * f * (1.0 - f), f * f};
}

double marginal_odds_ratio(int model_id, double theta, double f) {
  DiseaseModel m;
  m.model_id = model_id;
  m.theta = theta;
  const auto g = hwe_genotype_probs(f);
  std::array<double, 3> rr{};
  for (Genotype a = 0; a < 3; ++a) {
    for (Genotype b = 0; b < 3; ++b) rr[a] += g[b] * m.risk(a, b);
  }
  const double carrier = (g[1] * rr[1] + g[2] * rr[2]) / (g[1] + g[2]);
  return carrier / rr[0];
}

double solve_theta(int model_id, double marginal_effect, double f) {
  if (model_id < 1 || model_id > 3) throw std::invalid_argument("disease model must be 1, 2 or 3");
  if (!(f > 0.0 && f <= 0.5)) throw std::invalid_argument("maf must lie in (0, 0.5]");
  if (marginal_effect < 0.0) throw std::invalid_argument("marginal effect must be >= 0");
  if (marginal_effect == 0.0) return 0.0;
  const double target = 1.0 + marginal_effect;
  double lo = 0.0, hi = 1000.0;
  if (marginal_odds_ratio(model_id, hi, f) < target) {
    throw std::domain_error("no theta in (0, 1000] reaches the requested effect");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (marginal_odds_ratio(model_id, mid, f) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::array<double, 9> population_cell_probs(const DiseaseModel& model) {
  const auto g = hwe_genotype_probs(model.maf);
  std::array<double, 9> p{};
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) p[3 * a + b] = g[a] * g[b];
  }
  return p;
}

std::array<double, 9> case_cell_probs(const DiseaseModel& model) {
  auto p = population_cell_probs(model);
  double total = 0.0;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      p[3 * a + b] *= model.risk(static_cast<Genotype>(a), static_cast<Genotype>(b));
      total += p[3 * a + b];
    }
  }
  for (auto& v : p) v /= total;
  return p;
}

std::size_t minimum_pool_size(const DiseaseModel& model, std::size_t n_cases,
                              std::size_t n_controls) {
  const auto pop = population_cell_probs(model);
  const auto cas = case_cell_probs(model);
  double need = static_cast<double>(n_cases + n_controls);
  for (int c = 0; c < 9; ++c) {
    const double demand = static_cast<double>(n_cases) * cas[c] +
                          static_cast<double>(n_controls) * pop[c];
    // sampling noise matters for rare cells, hence the sqrt term
    if (pop[c] > 0.0) need = std::max(need, (1.5 * demand + 4.0 * std::sqrt(demand)) / pop[c]);
  }
  return static_cast<std::size_t>(std::ceil(need)) + 200;
}

bool SimulationTruth::in_window(std::size_t snp) const {
  for (const auto& [lo, hi] : windows) {
    if (snp >= lo && snp <= hi) return true;
  }
  return false;
}

namespace {

std::size_t pick_cell(const std::array<double, 9>& p, Rng& rng) {
  double u = rng.uniform();
  for (std::size_t c = 0; c < 8; ++c) {
    if (u < p[c]) return c;
    u -= p[c];
  }
  return 8;
}

std::pair<std::size_t, std::size_t> hit_window(std::size_t locus, std::size_t L) {
  return {locus >= 5 ? locus - 5 : 0, std::min(locus + 5, L - 1)};
}

}  // namespace

SimulatedData simulate_dataset(const FounderPool& pool, const DiseaseModel& model,
                               std::size_t n_cases, std::size_t n_controls,
                               std::size_t pool_size, std::uint64_t seed) {
  const std::size_t L = pool.snp_count();
  for (std::size_t l : model.loci) {
    if (l >= L) throw std::out_of_range("disease locus beyond L");
  }
  if (model.loci[0] == model.loci[1]) throw std::invalid_argument("disease loci must differ");
  if (pool_size < n_cases + n_controls) {
    throw PoolExhausted("pool smaller than the requested sample");
  }
  Rng rng(seed);
  const std::size_t nb = pool.blocks().size();
  // founder choice per individual, block and haplotype
  std::vector<std::uint8_t> founders(pool_size * nb * 2);
  for (std::size_t i = 0; i < pool_size; ++i) {
    for (std::size_t b = 0; b < nb; ++b) {
      founders[(i * nb + b) * 2] = static_cast<std::uint8_t>(pool.draw_founder(b, rng));
      founders[(i * nb + b) * 2 + 1] = static_cast<std::uint8_t>(pool.draw_founder(b, rng));
    }
  }
  auto genotype = [&](std::size_t i, std::size_t snp) {
    const std::size_t b = pool.block_index(snp);
    const FounderBlock& fb = pool.blocks()[b];
    const std::size_t k = snp - fb.first;
    return static_cast<Genotype>(fb.haplotypes[founders[(i * nb + b) * 2]][k] +
                                 fb.haplotypes[founders[(i * nb + b) * 2 + 1]][k]);
  };
  std::array<std::vector<std::size_t>, 9> cells;
  for (std::size_t i = 0; i < pool_size; ++i) {
    cells[3 * genotype(i, model.loci[0]) + genotype(i, model.loci[1])].push_back(i);
  }
  const auto pop = population_cell_probs(model);
  const auto cas = case_cell_probs(model);
  std::vector<std::size_t> chosen;
  chosen.reserve(n_cases + n_controls);
  auto take = [&](const std::array<double, 9>& probs) {
    auto& cell = cells[pick_cell(probs, rng)];
    if (cell.empty()) throw PoolExhausted("pool exhausted before the sampling quota was met");
    const std::size_t j = rng.index(cell.size());
    chosen.push_back(cell[j]);
    cell[j] = cell.back();
    cell.pop_back();
  };
  for (std::size_t k = 0; k < n_cases; ++k) take(cas);
  for (std::size_t k = 0; k < n_controls; ++k) take(pop);

  const std::size_t N = chosen.size();
  std::vector<Genotype> codes(L * N);
  for (std::size_t s = 0; s < L; ++s) {
    for (std::size_t k = 0; k < N; ++k) codes[s * N + k] = genotype(chosen[k], s);
  }
  std::vector<std::string> ids(L);
  std::vector<std::uint64_t> pos(L);
  for (std::size_t s = 0; s < L; ++s) {
    ids[s] = "snp" + std::to_string(s);
    pos[s] = 1000 * (s + 1);
  }
  SimulatedData out{GenotypeDataset(std::move(ids), std::move(pos), n_cases, n_controls,
                                    std::move(codes)),
                    {}};
  out.truth.model_id = model.model_id;
  out.truth.theta = model.theta;
  out.truth.maf = model.maf;
  out.truth.loci = model.loci;
  out.truth.windows = {hit_window(model.loci[0], L), hit_window(model.loci[1], L)};
  out.truth.block_starts = pool.block_starts();
  return out;
}

SimulatedData drop_loci(const SimulatedData& data) {
  if (data.truth.dropped) throw std::logic_error("disease loci were already dropped");
  const std::size_t L = data.dataset.snp_count();
  std::vector<std::size_t> kept;
  for (std::size_t s = 0; s < L; ++s) {
    if (s != data.truth.loci[0] && s != data.truth.loci[1]) kept.push_back(s);
  }
  if (kept.empty()) throw std::invalid_argument("dropping the loci leaves no SNPs");
  // first kept index >= s, as a new index
  auto lower = [&](std::size_t s) {
    return static_cast<std::size_t>(std::lower_bound(kept.begin(), kept.end(), s) - kept.begin());
  };
  SimulatedData out{data.dataset.select_snps(kept), data.truth};
  out.truth.dropped = true;
  for (std::size_t k = 0; k < 2; ++k) {
    const std::size_t lo = data.truth.loci[k] >= 5 ? data.truth.loci[k] - 5 : 0;
    const std::size_t hi = std::min(data.truth.loci[k] + 5, L - 1);
    const std::size_t new_lo = std::min(lower(lo), kept.size() - 1);
    const std::size_t new_hi = lower(hi + 1) - 1;
    out.truth.windows[k] = {new_lo, std::max(new_lo, new_hi)};
  }
  std::vector<std::size_t> starts;
  for (std::size_t s : data.truth.block_starts) {
    const std::size_t n = lower(s);
    if (n < kept.size() && (starts.empty() || starts.back() != n)) starts.push_back(n);
  }
  out.truth.block_starts = std::move(starts);
  return out;
}

SimulatedData simulate(const SimulationConfig& config) {
  Rng rng(config.seed);
  const auto pool_config = FounderPoolConfig::uniform(config.snp_count, config.block_width,
                                                      config.founders_per_block);
  FounderPool pool = FounderPool::generate(pool_config, rng);
  DiseaseModel model;
  model.model_id = config.model_id;
  model.maf = config.maf;
  model.theta = solve_theta(config.model_id, config.effect, config.maf);
  if (config.loci) {
    model.loci = *config.loci;
  } else {
    // interior SNPs need blocks of width >= 3
    std::vector<std::size_t> eligible;
    for (std::size_t b = 0; b < pool.blocks().size(); ++b) {
      if (pool.blocks()[b].width >= 3) eligible.push_back(b);
    }
    if (eligible.size() < 2) {
      throw std::invalid_argument("need two blocks of width >= 3 to place disease loci");
    }
    const std::size_t i = rng.index(eligible.size());
    std::size_t j = rng.index(eligible.size() - 1);
    if (j >= i) ++j;
    for (std::size_t k = 0; k < 2; ++k) {
      const FounderBlock& fb = pool.blocks()[eligible[k == 0 ? i : j]];
      model.loci[k] = fb.first + 1 + rng.index(fb.width - 2);
    }
    if (model.loci[0] > model.loci[1]) std::swap(model.loci[0], model.loci[1]);
  }
  for (std::size_t l : model.loci) pool.set_allele_frequency(l, config.maf);
  const std::size_t pool_size =
      config.pool_size ? config.pool_size
                       : 2 * minimum_pool_size(model, config.cases, config.controls);
  SimulatedData out = simulate_dataset(pool, model, config.cases, config.controls,
                                       pool_size, rng.next());
  out.truth.effect = config.effect;
  return out;
}

void write_truth(const SimulationTruth& truth, std::ostream& out) {
  auto join = [](const auto& values) {
    std::string s;
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (k) s += ',';
      s += std::to_string(values[k]);
    }
    return s;
  };
  out << "#key\tvalue\n";
  out << "model\t" << truth.model_id << '\n';
  out << fmt::format("theta\t{:.17g}\n", truth.theta);
  out << fmt::format("effect\t{:.17g}\n", truth.effect);
  out << fmt::format("maf\t{:.17g}\n", truth.maf);
  out << "loci\t" << truth.loci[0] << ',' << truth.loci[1] << '\n';
  out << "dropped\t" << (truth.dropped ? 1 : 0) << '\n';
  out << "windows\t" << truth.windows[0].first << '-' << truth.windows[0].second << ','
      << truth.windows[1].first << '-' << truth.windows[1].second << '\n';
  out << "block_starts\t" << join(truth.block_starts) << '\n';
}

SimulationTruth read_truth(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("truth line without a tab", line_no);
    kv[line.substr(0, tab)] = line.substr(tab + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("truth file lacks key '" + key + "'");
    return it->second;
  };
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string p;
    while (std::getline(ss, p, sep)) parts.push_back(p);
    return parts;
  };
  try {
    SimulationTruth t;
    t.model_id = std::stoi(get("model"));
    t.theta = std::stod(get("theta"));
    t.effect = std::stod(get("effect"));
    t.maf = std::stod(get("maf"));
    const auto loci = split(get("loci"), ',');
    if (loci.size() != 2) throw DataError("truth file needs two loci");
    t.loci = {std::stoul(loci[0]), std::stoul(loci[1])};
    t.dropped = get("dropped") == "1";
    const auto windows = split(get("windows"), ',');
    if (windows.size() != 2) throw DataError("truth file needs two windows");
    for (std::size_t k = 0; k < 2; ++k) {
      const auto ends = split(windows[k], '-');
      if (ends.size() != 2) throw DataError("malformed truth window");
      t.windows[k] = {std::stoul(ends[0]), std::stoul(ends[1])};
    }
    for (const auto& s : split(get("block_starts"), ',')) {
      if (!s.empty()) t.block_starts.push_back(std::stoul(s));
    }
    return t;
  } catch (const std::logic_error&) {
    throw DataError("malformed number in truth file");
  }
}

void save_truth(const SimulationTruth& truth, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_truth(truth, out);
}

SimulationTruth load_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return read_truth(in);
}

}  // namespace beamscan
