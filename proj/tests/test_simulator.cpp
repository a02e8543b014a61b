#include <cmath>
#include <sstream>

#include "doctest.h"
#include "beamscan/simulator.hpp"

using namespace beamscan;

TEST_CASE("risk tables") {
  DiseaseModel m;
  m.theta = 1.0;  // r = 2
  m.model_id = 1;
  CHECK(m.risk(0, 0) == 1.0);
  CHECK(m.risk(1, 0) == 2.0);
  CHECK(m.risk(2, 1) == 8.0);
  m.model_id = 2;
  CHECK(m.risk(2, 0) == 1.0);
  CHECK(m.risk(0, 2) == 1.0);
  CHECK(m.risk(1, 1) == 4.0);
  CHECK(m.risk(2, 2) == 16.0);
  m.model_id = 3;
  CHECK(m.risk(1, 0) == 1.0);
  CHECK(m.risk(1, 1) == 2.0);
  CHECK(m.risk(2, 2) == 2.0);
  CHECK_THROWS(m.risk(3, 0));
  m.model_id = 4;
  CHECK_THROWS(m.risk(0, 0));
}

TEST_CASE("theta solver") {
  CHECK(solve_theta(1, 0.0, 0.2) == 0.0);
  // model 3 at f = 0.5: OR = 1 + 0.75 theta
  CHECK(solve_theta(3, 0.5, 0.5) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  // brute-force nine-cell odds ratio
  for (int id = 1; id <= 3; ++id) {
    for (double f : {0.1, 0.2, 0.4}) {
      const double theta = solve_theta(id, 0.5, f);
      DiseaseModel m;
      m.model_id = id;
      m.theta = theta;
      const auto g = hwe_genotype_probs(f);
      double carrier_num = 0, carrier_den = 0, non_num = 0, non_den = 0;
      for (Genotype a = 0; a < 3; ++a) {
        for (Genotype b = 0; b < 3; ++b) {
          const double w = g[a] * g[b];
          (a ? carrier_num : non_num) += w * m.risk(a, b);
          (a ? carrier_den : non_den) += w;
        }
      }
      CHECK((carrier_num / carrier_den) / (non_num / non_den) ==
            doctest::Approx(1.5).epsilon(1e-9));
    }
  }
  CHECK(solve_theta(1, 0.3, 0.2) < solve_theta(1, 0.6, 0.2));
  CHECK_THROWS(solve_theta(1, 0.5, 0.0));
  CHECK_THROWS(solve_theta(1, 0.5, 0.6));
  CHECK_THROWS(solve_theta(1, -0.1, 0.2));
  CHECK_THROWS_AS(solve_theta(3, 1e6, 0.2), std::domain_error);
}

TEST_CASE("cell probabilities") {
  DiseaseModel m;
  m.model_id = 2;
  m.theta = 0.7;
  m.maf = 0.3;
  const auto pop = population_cell_probs(m);
  const auto cas = case_cell_probs(m);
  double sp = 0, sc = 0;
  for (int k = 0; k < 9; ++k) {
    sp += pop[k];
    sc += cas[k];
  }
  CHECK(sp == doctest::Approx(1.0));
  CHECK(sc == doctest::Approx(1.0));
  const auto g = hwe_genotype_probs(0.3);
  CHECK(pop[3 * 1 + 2] == doctest::Approx(g[1] * g[2]));
  CHECK(cas[8] / cas[0] == doctest::Approx(pop[8] / pop[0] * std::pow(1.7, 4)));
}

TEST_CASE("simulation is deterministic") {
  SimulationConfig c;
  c.snp_count = 40;
  c.cases = 100;
  c.controls = 100;
  c.seed = 9;
  const auto a = simulate(c);
  const auto b = simulate(c);
  CHECK(a.dataset == b.dataset);
  CHECK(a.truth == b.truth);
  c.seed = 10;
  CHECK_FALSE(simulate(c).dataset == a.dataset);
}

TEST_CASE("loci placement and truth") {
  SimulationConfig c;
  c.snp_count = 60;
  c.cases = 50;
  c.controls = 50;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    c.seed = seed;
    const auto s = simulate(c);
    const auto [a, b] = s.truth.loci;
    CHECK(a < b);
    CHECK(a / 5 != b / 5);
    CHECK(a % 5 != 0);
    CHECK(a % 5 != 4);
    CHECK(b % 5 != 0);
    CHECK(b % 5 != 4);
    CHECK(s.truth.in_window(a));
    CHECK(s.truth.windows[0].first == (a >= 5 ? a - 5 : 0));
    CHECK(s.truth.windows[1].second == std::min<std::size_t>(b + 5, 59));
  }
  const auto s = simulate(c);
  CHECK(s.truth.block_starts.size() == 12);
  CHECK(s.truth.block_starts[1] == 5);
}

TEST_CASE("dropping the loci") {
  SimulationConfig c;
  c.snp_count = 100;
  c.cases = 60;
  c.controls = 60;
  c.loci = std::array<std::size_t, 2>{40, 70};
  const auto s = simulate(c);
  const auto d = drop_loci(s);
  CHECK(d.dataset.snp_count() == 98);
  CHECK(d.truth.dropped);
  CHECK(d.truth.windows[0] == std::pair<std::size_t, std::size_t>{35, 44});
  CHECK(d.truth.windows[1] == std::pair<std::size_t, std::size_t>{64, 73});
  CHECK(d.dataset.snp_ids()[40] == "snp41");
  CHECK_THROWS_AS(drop_loci(d), std::logic_error);
  // kept columns are unchanged
  for (std::size_t k = 0; k < s.dataset.individual_count(); ++k) {
    CHECK(d.dataset.column(39)[k] == s.dataset.column(39)[k]);
    CHECK(d.dataset.column(69)[k] == s.dataset.column(71)[k]);
  }
}

TEST_CASE("controls follow Hardy-Weinberg at the loci, cases follow the risk table") {
  SimulationConfig c;
  c.snp_count = 30;
  c.model_id = 1;
  c.maf = 0.3;
  c.effect = 0.8;
  c.cases = 3000;
  c.controls = 3000;
  c.seed = 4;
  const auto s = simulate(c);
  const auto [la, lb] = s.truth.loci;
  DiseaseModel m;
  m.model_id = 1;
  m.maf = 0.3;
  m.theta = s.truth.theta;
  const auto pop = population_cell_probs(m);
  const auto cas = case_cell_probs(m);
  std::array<double, 9> obs_u{}, obs_d{};
  for (std::size_t k = 0; k < 3000; ++k) {
    obs_d[3 * s.dataset.case_column(la)[k] + s.dataset.case_column(lb)[k]] += 1;
    obs_u[3 * s.dataset.control_column(la)[k] + s.dataset.control_column(lb)[k]] += 1;
  }
  for (int k = 0; k < 9; ++k) {
    const double se_u = std::sqrt(pop[k] * (1 - pop[k]) / 3000);
    const double se_d = std::sqrt(cas[k] * (1 - cas[k]) / 3000);
    CHECK(std::abs(obs_u[k] / 3000 - pop[k]) < 3.5 * se_u + 1e-9);
    CHECK(std::abs(obs_d[k] / 3000 - cas[k]) < 3.5 * se_d + 1e-9);
  }
}

TEST_CASE("truth round trip") {
  SimulationConfig c;
  c.snp_count = 50;
  c.cases = 40;
  c.controls = 40;
  const auto s = drop_loci(simulate(c));
  std::stringstream ss;
  write_truth(s.truth, ss);
  CHECK(read_truth(ss) == s.truth);
}

TEST_CASE("pool exhaustion") {
  SimulationConfig c;
  c.snp_count = 20;
  c.model_id = 3;
  c.maf = 0.1;
  c.effect = 2.0;
  c.cases = 500;
  c.controls = 500;
  c.pool_size = 1000;
  CHECK_THROWS_AS(simulate(c), PoolExhausted);
  c.pool_size = 999;
  CHECK_THROWS_AS(simulate(c), PoolExhausted);
  c.pool_size = 0;
  CHECK_NOTHROW(simulate(c));
}
