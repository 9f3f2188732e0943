#include "doctest.h"

#include "fekan/feature_map.hpp"
#include "fekan/model.hpp"
#include "fekan/random.hpp"

#include <cmath>
#include <numbers>

using namespace fekan;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("function-fit preset has nine terms in published order") {
  const FeatureMap m = presets::function_fit_map();
  REQUIRE(m.input_dims() == 1);
  REQUIRE(m.output_width() == 9);
  const auto& t = m.terms(0);
  CHECK(t[0].kind == FeatureTerm::Kind::One);
  for (int j = 1; j <= 4; ++j) {
    CHECK(t[2 * j - 1].kind == FeatureTerm::Kind::Cos);
    CHECK(t[2 * j].kind == FeatureTerm::Kind::Sin);
    CHECK(t[2 * j - 1].freq == j * kPi);
    CHECK(t[2 * j].freq == j * kPi);
  }
  const double x = 0.37;
  const Eigen::VectorXd v = m.apply(Eigen::VectorXd::Constant(1, x));
  CHECK(v[0] == 1.0);
  for (int j = 1; j <= 4; ++j) {
    CHECK(v[2 * j - 1] == doctest::Approx(std::cos(j * kPi * x)).epsilon(1e-15));
    CHECK(v[2 * j] == doctest::Approx(std::sin(j * kPi * x)).epsilon(1e-15));
  }
}

TEST_CASE("two-dimensional PDE preset has width fourteen") {
  const FeatureMap m = presets::pde_map(2);
  CHECK(m.output_width() == 14);
  const Eigen::VectorXd v = m.apply(Eigen::Vector2d(0, 0));
  const double block[] = {1, 1, 0, 1, 0, 1, 0};
  for (int d = 0; d < 2; ++d) {
    for (int i = 0; i < 7; ++i) CHECK(v[7 * d + i] == block[i]);
  }
}

TEST_CASE("identity-only enrichment is the identity map") {
  const FeatureMap m = build_deterministic({{}, {}}, false, true);
  CHECK(m.output_width() == 2);
  CHECK(m.is_identity());
  const Eigen::Vector2d x(0.3, -0.8);
  CHECK(m.apply(x) == x);
  CHECK(FeatureMap::identity(3).is_identity());
}

TEST_CASE("empty term list for an enriched dimension is an error") {
  CHECK_THROWS_AS(build_deterministic({{}}, false, false), std::invalid_argument);
  CHECK_THROWS_AS(build_deterministic({{1.0, NAN}}, true, false), std::invalid_argument);
}

TEST_CASE("width law") {
  for (int dims = 1; dims <= 4; ++dims) {
    for (int mask = 0; mask < (1 << dims); ++mask) {
      std::set<int> enrich;
      for (int d = 0; d < dims; ++d) {
        if (mask & (1 << d)) enrich.insert(d);
      }
      std::vector<std::vector<double>> freqs(dims);
      int expect = 0;
      for (int d = 0; d < dims; ++d) {
        for (int f = 0; f <= d; ++f) freqs[d].push_back(f + 1.0);
        expect += enrich.contains(d) ? 1 + 2 * (d + 1) : 1;
      }
      CHECK(build_deterministic(freqs, true, false, enrich).output_width() == expect);
      const int rff_expect = static_cast<int>(enrich.size()) * 7 + dims - static_cast<int>(enrich.size());
      CHECK(build_rff(1.0, 3, dims, enrich, 11).output_width() == rff_expect);
    }
  }
}

TEST_CASE("rff examples") {
  const FeatureMap zero = build_rff(0.0, 3, 1, {0}, 5);
  const Eigen::VectorXd v = zero.apply(Eigen::VectorXd::Constant(1, 0.6));
  const double e[] = {1, 1, 0, 1, 0, 1, 0};
  for (int i = 0; i < 7; ++i) CHECK(v[i] == e[i]);

  const FeatureMap a = build_rff(2.0, 3, 2, {0, 1}, 42), b = build_rff(2.0, 3, 2, {0, 1}, 42);
  CHECK(a == b);
  CHECK(!(a == build_rff(2.0, 3, 2, {0, 1}, 43)));

  const FeatureMap big = build_rff(2.0, 10000, 1, {0}, 99);
  double sum = 0, sum2 = 0;
  int n = 0;
  for (const auto& t : big.terms(0)) {
    if (t.kind != FeatureTerm::Kind::Cos) continue;
    sum += t.freq;
    sum2 += t.freq * t.freq;
    ++n;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(n == 10000);
  CHECK(std::abs(var - 4.0) < 0.05 * 4.0);

  CHECK_THROWS_AS(build_rff(-1.0, 3, 1, {0}, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_rff(1.0, 0, 1, {0}, 1), std::invalid_argument);
}

TEST_CASE("apply examples") {
  const FeatureMap m = build_deterministic({{1.0}}, true, false);
  const Eigen::VectorXd v = m.apply(Eigen::VectorXd::Zero(1));
  CHECK(v[0] == 1);
  CHECK(v[1] == 1);
  CHECK(v[2] == 0);

  const FeatureMap st = presets::pde_map(2, std::set<int>{0});
  const Eigen::VectorXd w = st.apply(Eigen::Vector2d(0, 0.7));
  REQUIRE(w.size() == 8);
  const double e[] = {1, 1, 0, 1, 0, 1, 0, 0.7};
  for (int i = 0; i < 8; ++i) CHECK(w[i] == e[i]);

  CHECK_THROWS_AS((void)m.apply(Eigen::Vector2d(0, 0)), DimensionMismatch);
}

TEST_CASE("apply_jet examples and finite-difference agreement") {
  const double a = 2.5;
  const FeatureMap m = build_deterministic({{a}}, false, false);
  const auto j = m.apply_jet({Jet::seed(0, 0, 1)});
  CHECK(j[0].value == 1);
  CHECK(j[0].grad[0] == 0);
  CHECK(j[0].diag2[0] == -a * a);

  const FeatureMap id = FeatureMap::identity(2);
  const auto s = id.apply_jet({Jet::seed(0.3, 0, 2), Jet::seed(-0.2, 1, 2)});
  CHECK(s[0].value == 0.3);
  CHECK(s[0].grad[0] == 1);
  CHECK(s[0].grad[1] == 0);
  CHECK(s[1].grad[1] == 1);

  const FeatureMap p = presets::pde_map(2);
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    Eigen::Vector2d x(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto jets = p.apply_jet({Jet::seed(x[0], 0, 2), Jet::seed(x[1], 1, 2)});
    for (int f = 0; f < p.output_width(); ++f) {
      const auto fd = fd_check([&](const Eigen::VectorXd& q) { return p.apply(q)[f]; }, x, 1e-4);
      for (int m = 0; m < 2; ++m) {
        CHECK(std::abs(jets[f].grad[m] - fd.grad[m]) <= 1e-5 * (1 + std::abs(fd.grad[m])));
        CHECK(std::abs(jets[f].diag2[m] - fd.diag2[m]) <= 1e-5 * (1 + std::abs(fd.diag2[m])) + 1e-6);
      }
    }
  }
}

TEST_CASE("json round trip") {
  for (const FeatureMap& m : {presets::function_fit_map(), presets::pde_map(3, std::set<int>{0, 2}),
                              presets::separable_map(), FeatureMap::identity(2),
                              build_rff(2.0, 4, 3, {0, 1}, 17)}) {
    const auto j = m.to_json();
    const FeatureMap back = FeatureMap::from_json(j);
    CHECK(back == m);
    CHECK(back.to_json() == j);
  }
  const auto j = build_rff(2.0, 4, 2, {0}, 17).to_json();
  CHECK(j["mode"] == "rff");
  CHECK(j["freqs"]["sigma"] == 2.0);
  CHECK(j["enrich_dims"] == nlohmann::json::array({0}));
}

TEST_CASE("enrichment adds no trainable parameters") {
  const auto spec = BasisSpec::spline(15, 2);
  const FekanModel kan = FekanModel::init({1, 6, 1}, spec, FeatureMap::identity(1), 1);
  const FekanModel fekan = FekanModel::init({9, 6, 1}, spec, presets::function_fit_map(), 1);
  const FekanModel same_shape = FekanModel::init({9, 6, 1}, spec, FeatureMap::identity(9), 1);
  CHECK(fekan.param_count() == same_shape.param_count());
  CHECK(fekan.param_count() * (1 * 6 + 6) == kan.param_count() * (9 * 6 + 6));
}
