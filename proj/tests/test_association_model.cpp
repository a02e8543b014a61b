#include <cmath>
#include <random>

#include "doctest.h"
#include "beamscan/association_model.hpp"
#include "beamscan/block_likelihood.hpp"

using namespace beamscan;

namespace {

GenotypeDataset random_dataset(std::size_t L, std::size_t n_cases, std::size_t n_controls,
                               std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<std::vector<Genotype>> cases(n_cases), controls(n_controls);
  for (auto* rows : {&cases, &controls}) {
    for (auto& r : *rows) {
      r.resize(L);
      Genotype prev = 0;
      for (auto& g : r) {
        // some LD: copy the previous SNP half the time
        g = gen() % 2 ? prev : static_cast<Genotype>(gen() % 3);
        prev = g;
      }
    }
  }
  std::vector<std::string> ids;
  std::vector<std::uint64_t> pos;
  for (std::size_t s = 0; s < L; ++s) {
    ids.push_back("s" + std::to_string(s));
    pos.push_back(100 * (s + 1));
  }
  return GenotypeDataset::from_rows(ids, pos, cases, controls);
}

double lm(const GenotypeDataset& d, const std::vector<std::size_t>& snps, Cohort who,
          double rho) {
  if (snps.empty()) return 0.0;
  return log_marginal(count_diplotypes(d, snps, who), DirichletConfig{rho});
}

// The joint written out term by term with the sparse reference counters.
double reference_joint(const GenotypeDataset& d, const BlockPartition& B,
                       const MembershipVector& I, const PriorConfig& pr) {
  const double rho = pr.rho;
  std::vector<std::size_t> g2 = I.group2();
  double acc = lm(d, g2, Cohort::cases, rho) + lm(d, g2, Cohort::controls, rho);
  for (const Block& b : B.blocks()) {
    std::vector<std::size_t> M, x, x2;
    for (std::size_t s = b.first; s < b.last; ++s) {
      M.push_back(s);
      if (I[s]) x.push_back(s);
      if (I[s] == 2) x2.push_back(s);
    }
    acc += lm(d, x, Cohort::cases, rho) + lm(d, x, Cohort::controls, rho) +
           lm(d, M, Cohort::both, rho) - lm(d, x, Cohort::both, rho) -
           lm(d, x2, Cohort::cases, rho) - lm(d, x2, Cohort::controls, rho);
  }
  const double K = static_cast<double>(B.block_count());
  const double L = static_cast<double>(d.snp_count());
  acc += (K - 1) * std::log(pr.p_boundary) + (L - K) * std::log1p(-pr.p_boundary);
  for (std::size_t i = 0; i < d.snp_count(); ++i) acc += std::log(pr.p_group[I[i]]);
  return acc;
}

}  // namespace

TEST_CASE("default priors follow the stated formulas") {
  const auto [p, c] = default_priors(1000, 1000000, 500, 500);
  CHECK(p.p_boundary == doctest::Approx(5e10 / 3e12).epsilon(1e-12));
  CHECK(p.p_boundary == doctest::Approx(0.016667).epsilon(1e-4));
  CHECK(p.p_group[1] == doctest::Approx(0.005));
  CHECK(p.p_group[2] == doctest::Approx(0.005));
  CHECK(p.p_group[0] == doctest::Approx(0.99));
  CHECK(p.rho == 1.5);
  CHECK(c.max_order == 4);
  CHECK(c.max_distinct_diplotypes == 99);

  const auto [q, c2] = default_priors(10, 100000000, 20, 20);
  CHECK(q.p_boundary == 0.5);
  CHECK(q.p_group[1] == doctest::Approx(0.1));
  CHECK(c2.max_order == 1);
  CHECK(c2.max_distinct_diplotypes == 3);
  CHECK_THROWS(default_priors(10, 1000, 14, 15));
}

TEST_CASE("interaction order cap boundaries") {
  CHECK(ModelConstraints::for_sample_size(30).max_order == 1);
  CHECK(ModelConstraints::for_sample_size(89).max_order == 1);
  CHECK(ModelConstraints::for_sample_size(90).max_order == 2);
  CHECK(ModelConstraints::for_sample_size(809).max_order == 3);
  CHECK(ModelConstraints::for_sample_size(810).max_order == 4);
  CHECK(ModelConstraints::for_sample_size(31).max_distinct_diplotypes == 3);
}

TEST_CASE("partition bookkeeping") {
  auto p = BlockPartition::singletons(5);
  CHECK(p.block_count() == 5);
  p.set_boundary(2, false);
  CHECK(p.block_count() == 4);
  CHECK(p.block_of(2) == Block{1, 3});
  CHECK(p.movable_boundaries() == std::vector<std::size_t>{1, 3, 4});
  CHECK_THROWS(p.set_boundary(0, false));
  CHECK_THROWS(BlockPartition::from_indicators({0, 1}));
}

TEST_CASE("block term reductions") {
  const auto d = random_dataset(4, 20, 20, 1);
  DirichletConfig cfg;
  const Block b{0, 4};
  SUBCASE("all group 0 gives the combined marginal") {
    const std::vector<std::uint8_t> zero(4, 0);
    CHECK(log_block_term(d, b, zero, cfg) ==
          doctest::Approx(lm(d, {0, 1, 2, 3}, Cohort::both, 1.5)).epsilon(1e-13));
  }
  SUBCASE("all group 2 gives exactly 0") {
    const std::vector<std::uint8_t> two(4, 2);
    CHECK(log_block_term(d, b, two, cfg) == 0.0);
  }
}

TEST_CASE("five-factor block term on a four-individual toy") {
  // SNP 0 is group 1, SNP 1 group 0.
  const auto d = GenotypeDataset::from_rows({"a", "b"}, {1, 2}, {{0, 0}, {1, 0}}, {{0, 1}, {0, 1}});
  const std::vector<std::uint8_t> labels{1, 0};
  // Hand values with rho = 1.5.
  // cases at SNP 0: {0, 1}: (1/3)(0.5/2.5)
  const double dx = std::log(1.0 / 3.0) + std::log(0.5 / 2.5);
  // controls at SNP 0: {0, 0}: (1/3)(1.5/2.5)
  const double ux = std::log(1.0 / 3.0) + std::log(1.5 / 2.5);
  // combined at SNP 0: 0,1,0,0
  const double dux = std::log(1.0 / 3.0) + std::log(0.5 / 2.5) + std::log(1.5 / 3.5) +
                     std::log(2.5 / 4.5);
  // combined 2-SNP diplotypes: 00, 10, 01, 01 with alpha = 1/6
  const double a = 1.5 / 9.0;
  const double dum = std::log(a / 1.5) + std::log(a / 2.5) + std::log(a / 3.5) +
                     std::log((1 + a) / 4.5);
  CHECK(log_block_term(d, {0, 2}, labels, DirichletConfig{}) ==
        doctest::Approx(dx + ux + dum - dux).epsilon(1e-13));
}

TEST_CASE("empty data leaves only the priors") {
  const auto d = GenotypeDataset::from_rows({"a", "b", "c"}, {1, 2, 3}, {}, {});
  PriorConfig pr;
  pr.p_boundary = 0.2;
  pr.p_group = {0.7, 0.2, 0.1};
  const auto B = BlockPartition::from_indicators({1, 0, 1});
  const MembershipVector I(std::vector<std::uint8_t>{0, 2, 1});
  const double expected = std::log(0.2) + std::log(0.8) + std::log(0.7) + std::log(0.1) +
                          std::log(0.2);
  CHECK(log_joint(d, B, I, pr, ModelConstraints{}) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("all group 0 in one block") {
  const auto d = random_dataset(5, 15, 15, 2);
  PriorConfig pr;
  const auto B = BlockPartition::single_block(5);
  const MembershipVector I(5);
  const double expected = lm(d, {0, 1, 2, 3, 4}, Cohort::both, 1.5) +
                          4 * std::log1p(-pr.p_boundary) + 5 * std::log(pr.p_group[0]);
  CHECK(log_joint(d, B, I, pr, ModelConstraints{}) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("log_joint matches the term-by-term reference on random states") {
  std::mt19937_64 gen(9);
  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t L = 1 + gen() % 7;
    const auto d = random_dataset(L, 10 + gen() % 20, 10 + gen() % 20, gen());
    PriorConfig pr;
    pr.rho = 0.5 + (gen() % 10) / 4.0;
    pr.p_boundary = 0.05 + (gen() % 40) / 100.0;
    std::vector<std::uint8_t> ind(L), lab(L);
    for (std::size_t i = 0; i < L; ++i) {
      ind[i] = i == 0 ? 1 : gen() % 2;
      lab[i] = gen() % 3;
    }
    const auto B = BlockPartition::from_indicators(ind);
    const MembershipVector I(lab);
    const double v = log_joint(d, B, I, pr, ModelConstraints{});
    CHECK(v == doctest::Approx(reference_joint(d, B, I, pr)).epsilon(1e-12));
  }
}

TEST_CASE("forbidden states") {
  const auto d = random_dataset(4, 20, 20, 4);
  PriorConfig pr;
  SUBCASE("group-2 count over the cap") {
    ModelConstraints c;
    c.max_order = 1;
    const MembershipVector I(std::vector<std::uint8_t>{2, 0, 2, 0});
    CHECK(is_forbidden(log_joint(d, BlockPartition::singletons(4), I, pr, c)));
  }
  SUBCASE("too many distinct diplotypes in a multi-SNP block") {
    ModelConstraints c;
    c.max_distinct_diplotypes = 3;
    CHECK(is_forbidden(log_joint(d, BlockPartition::single_block(4), MembershipVector(4), pr, c)));
    // singleton blocks are exempt
    CHECK_FALSE(is_forbidden(log_joint(d, BlockPartition::singletons(4), MembershipVector(4), pr, c)));
  }
}

TEST_CASE("splitting a block changes only its own term") {
  const auto d = random_dataset(6, 25, 25, 5);
  ModelEvaluator eval(d, PriorConfig{}, ModelConstraints{});
  const std::vector<std::uint8_t> labels{0, 1, 0, 0, 2, 0};
  const double left = eval.block_term({0, 2}, labels);
  const double right = eval.block_term({4, 6}, labels);
  // middle block [2, 4) split into [2, 3) and [3, 4)
  eval.block_term({2, 4}, labels);
  eval.block_term({2, 3}, labels);
  CHECK(eval.block_term({0, 2}, labels) == left);
  CHECK(eval.block_term({4, 6}, labels) == right);
}

TEST_CASE("every five-factor term is a probability") {
  std::mt19937_64 gen(21);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t L = 1 + gen() % 5;
    const auto d = random_dataset(L, 5 + gen() % 15, 5 + gen() % 15, gen());
    std::vector<std::uint8_t> lab(L);
    for (auto& l : lab) l = gen() % 3;
    const double t = log_block_term(d, {0, L}, lab, DirichletConfig{});
    CHECK(t <= 1e-12);
    CHECK(std::isfinite(t));
  }
}

TEST_CASE("with no group-2 SNPs the joint reduces to the within-block model") {
  const auto d = random_dataset(5, 20, 20, 8);
  PriorConfig pr;
  const auto B = BlockPartition::from_indicators({1, 0, 1, 0, 0});
  const MembershipVector I(std::vector<std::uint8_t>{1, 0, 0, 1, 1});
  // x = {0} in block 0 and {3, 4} in block 1
  const double body = lm(d, {0}, Cohort::cases, 1.5) + lm(d, {0}, Cohort::controls, 1.5) +
                      lm(d, {0, 1}, Cohort::both, 1.5) - lm(d, {0}, Cohort::both, 1.5) +
                      lm(d, {3, 4}, Cohort::cases, 1.5) + lm(d, {3, 4}, Cohort::controls, 1.5) +
                      lm(d, {2, 3, 4}, Cohort::both, 1.5) - lm(d, {3, 4}, Cohort::both, 1.5);
  ModelEvaluator eval(d, pr, ModelConstraints{});
  const double priors = eval.log_prior_partition(2) + eval.log_prior_labels(I.counts());
  CHECK(eval.log_joint(B, I) == doctest::Approx(body + priors).epsilon(1e-13));
}
