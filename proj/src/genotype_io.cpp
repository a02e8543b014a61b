#include "beamscan/genotype_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace beamscan {

namespace {

constexpr Genotype kMissing = 255;

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::string at_line(std::size_t line) { return " (line " + std::to_string(line) + ")"; }

}  // namespace

DataError::DataError(const std::string& what, std::size_t line)
    : std::runtime_error(line ? what + at_line(line) : what), line_(line) {}

MissingPolicy parse_missing_policy(const std::string& name) {
  if (name == "reject") return MissingPolicy::reject;
  if (name == "impute") return MissingPolicy::impute;
  throw std::invalid_argument("unknown missing-data policy: " + name);
}

GenotypeDataset::GenotypeDataset(std::vector<std::string> snp_ids,
                                 std::vector<std::uint64_t> positions,
                                 std::size_t n_cases, std::size_t n_controls,
                                 std::vector<Genotype> codes)
    : snp_ids_(std::move(snp_ids)),
      positions_(std::move(positions)),
      n_cases_(n_cases),
      n_controls_(n_controls),
      codes_(std::move(codes)) {
  if (snp_ids_.empty()) throw DataError("dataset has no SNPs");
  if (positions_.size() != snp_ids_.size()) {
    throw DataError("SNP id and position counts differ");
  }
  if (codes_.size() != snp_ids_.size() * individual_count()) {
    throw DataError("genotype matrix size does not match L * (N_d + N_u)");
  }
  for (std::size_t i = 1; i < positions_.size(); ++i) {
    if (positions_[i] <= positions_[i - 1]) {
      throw DataError("positions are not strictly increasing at SNP " +
                      snp_ids_[i]);
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : snp_ids_) {
    if (!seen.insert(id).second) throw DataError("duplicate SNP id " + id);
  }
  for (Genotype g : codes_) {
    if (g > 2) throw DataError("genotype code outside {0,1,2}");
  }
}

GenotypeDataset GenotypeDataset::from_rows(
    std::vector<std::string> snp_ids, std::vector<std::uint64_t> positions,
    const std::vector<std::vector<Genotype>>& case_rows,
    const std::vector<std::vector<Genotype>>& control_rows) {
  const std::size_t L = snp_ids.size();
  const std::size_t N = case_rows.size() + control_rows.size();
  std::vector<Genotype> codes(L * N);
  auto fill = [&](const std::vector<std::vector<Genotype>>& rows,
                  std::size_t offset) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != L) throw DataError("row length differs from L");
      for (std::size_t s = 0; s < L; ++s) codes[s * N + offset + r] = rows[r][s];
    }
  };
  fill(case_rows, 0);
  fill(control_rows, case_rows.size());
  return GenotypeDataset(std::move(snp_ids), std::move(positions),
                         case_rows.size(), control_rows.size(),
                         std::move(codes));
}

std::uint64_t GenotypeDataset::region_length() const {
  if (positions_.size() < 2) return 1;
  return std::max<std::uint64_t>(1, positions_.back() - positions_.front());
}

GenotypeDataset GenotypeDataset::select_snps(
    std::span<const std::size_t> snps) const {
  std::vector<std::string> ids;
  std::vector<std::uint64_t> pos;
  std::vector<Genotype> codes;
  codes.reserve(snps.size() * individual_count());
  for (std::size_t s : snps) {
    if (s >= snp_count()) throw std::out_of_range("SNP index out of range");
    ids.push_back(snp_ids_[s]);
    pos.push_back(positions_[s]);
    const auto col = column(s);
    codes.insert(codes.end(), col.begin(), col.end());
  }
  return GenotypeDataset(std::move(ids), std::move(pos), n_cases_, n_controls_,
                         std::move(codes));
}

GenotypeDataset GenotypeDataset::relabel(std::span<const std::size_t> order,
                                         std::size_t n_cases) const {
  if (n_cases > order.size()) throw std::invalid_argument("too many cases");
  const std::size_t N = order.size();
  std::vector<Genotype> codes(snp_count() * N);
  for (std::size_t s = 0; s < snp_count(); ++s) {
    const auto col = column(s);
    Genotype* out = codes.data() + s * N;
    for (std::size_t i = 0; i < N; ++i) out[i] = col[order[i]];
  }
  return GenotypeDataset(snp_ids_, positions_, n_cases, N - n_cases,
                         std::move(codes));
}

ColumnCounts column_counts(const GenotypeDataset& dataset, std::size_t snp) {
  if (snp >= dataset.snp_count()) {
    throw std::out_of_range("SNP index " + std::to_string(snp) +
                            " out of range");
  }
  ColumnCounts counts;
  for (Genotype g : dataset.case_column(snp)) ++counts.cases[g];
  for (Genotype g : dataset.control_column(snp)) ++counts.controls[g];
  return counts;
}

GenotypeDataset parse_dataset(std::istream& in, MissingPolicy policy) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> ids;
  std::vector<std::uint64_t> positions;
  std::vector<std::vector<Genotype>> cases, controls;
  bool any_missing = false;

  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line()) throw DataError("empty input");
  {
    auto fields = split_tabs(line);
    if (fields.front() != "#snp") throw DataError("expected #snp header", line_no);
    if (fields.size() < 2) throw DataError("no SNP ids in header", line_no);
    std::unordered_set<std::string> seen;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      std::string id(fields[i]);
      if (id.empty()) throw DataError("empty SNP id", line_no);
      if (!seen.insert(id).second) {
        throw DataError("duplicate SNP id " + id, line_no);
      }
      ids.push_back(std::move(id));
    }
  }
  const std::size_t L = ids.size();

  if (!next_line()) throw DataError("missing #pos header", line_no + 1);
  {
    auto fields = split_tabs(line);
    if (fields.front() != "#pos") throw DataError("expected #pos header", line_no);
    if (fields.size() != L + 1) {
      throw DataError("#pos has " + std::to_string(fields.size() - 1) +
                          " entries, expected " + std::to_string(L),
                      line_no);
    }
    for (std::size_t i = 1; i < fields.size(); ++i) {
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(fields[i].data(),
                                       fields[i].data() + fields[i].size(), v);
      if (ec != std::errc() || ptr != fields[i].data() + fields[i].size()) {
        throw DataError("invalid position '" + std::string(fields[i]) + "'",
                        line_no);
      }
      if (!positions.empty() && v <= positions.back()) {
        throw DataError("positions not strictly increasing", line_no);
      }
      positions.push_back(v);
    }
  }

  while (next_line()) {
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != L + 1) {
      throw DataError("row has " + std::to_string(fields.size() - 1) +
                          " genotypes, expected " + std::to_string(L),
                      line_no);
    }
    bool is_case;
    if (fields[0] == "1") {
      is_case = true;
    } else if (fields[0] == "0") {
      is_case = false;
    } else {
      throw DataError("phenotype must be 0 or 1, got '" +
                          std::string(fields[0]) + "'",
                      line_no);
    }
    std::vector<Genotype> row(L);
    for (std::size_t s = 0; s < L; ++s) {
      const auto f = fields[s + 1];
      if (f.size() == 1 && f[0] >= '0' && f[0] <= '2') {
        row[s] = static_cast<Genotype>(f[0] - '0');
      } else if (f == "N") {
        if (policy == MissingPolicy::reject) {
          throw DataError("missing genotype at SNP " + ids[s] +
                              " under reject policy",
                          line_no);
        }
        row[s] = kMissing;
        any_missing = true;
      } else {
        throw DataError("invalid genotype code '" + std::string(f) +
                            "' at SNP " + ids[s],
                        line_no);
      }
    }
    (is_case ? cases : controls).push_back(std::move(row));
  }

  if (any_missing) {
    for (std::size_t s = 0; s < L; ++s) {
      std::array<std::size_t, 3> tally{};
      for (const auto* rows : {&cases, &controls}) {
        for (const auto& r : *rows) {
          if (r[s] != kMissing) ++tally[r[s]];
        }
      }
      // Ties resolve to the smaller code.
      const auto mode = static_cast<Genotype>(
          std::max_element(tally.begin(), tally.end()) - tally.begin());
      for (auto* rows : {&cases, &controls}) {
        for (auto& r : *rows) {
          if (r[s] == kMissing) r[s] = mode;
        }
      }
    }
  }

  return GenotypeDataset::from_rows(std::move(ids), std::move(positions), cases,
                                    controls);
}

GenotypeDataset load_dataset(const std::filesystem::path& path,
                             MissingPolicy policy) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_dataset(in, policy);
}

void write_dataset(const GenotypeDataset& dataset, std::ostream& out) {
  const std::size_t L = dataset.snp_count();
  std::string buf = "#snp";
  for (const auto& id : dataset.snp_ids()) {
    buf += '\t';
    buf += id;
  }
  buf += "\n#pos";
  for (auto p : dataset.positions()) {
    buf += '\t';
    buf += std::to_string(p);
  }
  buf += '\n';
  out << buf;
  std::string row;
  auto emit = [&](char pheno, std::size_t n, auto genotype) {
    for (std::size_t i = 0; i < n; ++i) {
      row.assign(1, pheno);
      for (std::size_t s = 0; s < L; ++s) {
        row += '\t';
        row += static_cast<char>('0' + genotype(i, s));
      }
      row += '\n';
      out << row;
    }
  };
  emit('1', dataset.case_count(),
       [&](std::size_t i, std::size_t s) { return dataset.case_genotype(i, s); });
  emit('0', dataset.control_count(), [&](std::size_t i, std::size_t s) {
    return dataset.control_genotype(i, s);
  });
}

void save_dataset(const GenotypeDataset& dataset,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_dataset(dataset, out);
}

// Wigginton, Cutler & Abecasis exact test.
double hwe_exact_pvalue(std::size_t n_het, std::size_t n_hom1,
                        std::size_t n_hom2) {
  const std::size_t n_rare_hom = std::min(n_hom1, n_hom2);
  const std::size_t n = n_het + n_hom1 + n_hom2;
  if (n == 0) return 1.0;
  const std::size_t rare = 2 * n_rare_hom + n_het;

  std::vector<double> probs(rare + 1, 0.0);
  std::size_t mid = rare * (2 * n - rare) / (2 * n);
  if ((rare & 1) != (mid & 1)) ++mid;

  probs[mid] = 1.0;
  double sum = 1.0;
  std::size_t curr_hom_r = (rare - mid) / 2;
  std::size_t curr_hom_c = n - mid - curr_hom_r;
  for (std::size_t het = mid; het >= 2; het -= 2) {
    probs[het - 2] = probs[het] * het * (het - 1.0) /
                     (4.0 * (curr_hom_r + 1.0) * (curr_hom_c + 1.0));
    sum += probs[het - 2];
    ++curr_hom_r;
    ++curr_hom_c;
  }
  curr_hom_r = (rare - mid) / 2;
  curr_hom_c = n - mid - curr_hom_r;
  for (std::size_t het = mid; het + 2 <= rare; het += 2) {
    probs[het + 2] = probs[het] * 4.0 * curr_hom_r * curr_hom_c /
                     ((het + 2.0) * (het + 1.0));
    sum += probs[het + 2];
    --curr_hom_r;
    --curr_hom_c;
  }
  const double observed = probs[n_het];
  double p = 0.0;
  for (double q : probs) {
    if (q <= observed * (1.0 + 1e-12)) p += q;
  }
  return std::min(1.0, p / sum);
}

GenotypeDataset filter_hwe(const GenotypeDataset& dataset, double threshold,
                           std::vector<std::size_t>* kept) {
  std::vector<std::size_t> keep;
  for (std::size_t s = 0; s < dataset.snp_count(); ++s) {
    const auto c = column_counts(dataset, s).controls;
    if (hwe_exact_pvalue(c[1], c[0], c[2]) >= threshold) keep.push_back(s);
  }
  if (keep.empty()) throw DataError("Hardy-Weinberg filter removed every SNP");
  if (kept) *kept = keep;
  return dataset.select_snps(keep);
}

}  // namespace beamscan
