#include "fekan/feature_map.hpp"

#include "fekan/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fekan {

namespace {

double term_value(const FeatureTerm& t, double x, double& d1, double& d2) {
  switch (t.kind) {
    case FeatureTerm::Kind::Identity: d1 = 1.0; d2 = 0.0; return x;
    case FeatureTerm::Kind::One: d1 = 0.0; d2 = 0.0; return 1.0;
    case FeatureTerm::Kind::Cos: {
      const double c = std::cos(t.freq * x), s = std::sin(t.freq * x);
      d1 = -t.freq * s;
      d2 = -t.freq * t.freq * c;
      return c;
    }
    case FeatureTerm::Kind::Sin: {
      const double c = std::cos(t.freq * x), s = std::sin(t.freq * x);
      d1 = t.freq * c;
      d2 = -t.freq * t.freq * s;
      return s;
    }
  }
  throw std::invalid_argument("unknown feature term");
}

std::vector<FeatureTerm> trig_terms(const std::vector<double>& freqs, bool include_one, bool include_identity) {
  std::vector<FeatureTerm> terms;
  if (include_identity) terms.push_back({FeatureTerm::Kind::Identity, 0.0});
  if (include_one) terms.push_back({FeatureTerm::Kind::One, 0.0});
  for (double a : freqs) {
    if (!std::isfinite(a)) throw std::invalid_argument("feature map frequency must be finite");
    terms.push_back({FeatureTerm::Kind::Cos, a});
    terms.push_back({FeatureTerm::Kind::Sin, a});
  }
  return terms;
}

}  // namespace

FeatureMap FeatureMap::identity(int dims) {
  if (dims < 1) throw std::invalid_argument("feature map needs at least one input dimension");
  FeatureMap map;
  map.terms_.assign(static_cast<std::size_t>(dims), {{FeatureTerm::Kind::Identity, 0.0}});
  map.enriched_.assign(static_cast<std::size_t>(dims), false);
  map.finalize();
  return map;
}

void FeatureMap::finalize() {
  source_.clear();
  for (int d = 0; d < input_dims(); ++d) {
    const int width = enriched_[d] ? static_cast<int>(terms_[d].size()) : 1;
    for (int f = 0; f < width; ++f) source_.push_back(d);
  }
}

int FeatureMap::output_width() const { return static_cast<int>(source_.size()); }

bool FeatureMap::is_identity() const {
  for (int d = 0; d < input_dims(); ++d) {
    if (!enriched_[d]) continue;
    if (terms_[d].size() != 1 || terms_[d][0].kind != FeatureTerm::Kind::Identity) return false;
  }
  return true;
}

Eigen::VectorXd FeatureMap::apply(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != input_dims()) throw DimensionMismatch("feature map input dimension mismatch");
  Eigen::VectorXd out(output_width());
  Eigen::VectorXd d1(output_width()), d2(output_width());
  apply_derivs(x.data(), out.data(), d1.data(), d2.data());
  return out;
}

void FeatureMap::apply_derivs(const double* x, double* value, double* d1, double* d2) const {
  int f = 0;
  for (int d = 0; d < input_dims(); ++d) {
    if (!enriched_[d]) {
      value[f] = x[d];
      d1[f] = 1.0;
      d2[f] = 0.0;
      ++f;
      continue;
    }
    for (const auto& t : terms_[d]) {
      value[f] = term_value(t, x[d], d1[f], d2[f]);
      ++f;
    }
  }
}

std::vector<Jet> FeatureMap::apply_jet(const std::vector<Jet>& x) const {
  if (static_cast<int>(x.size()) != input_dims()) throw DimensionMismatch("feature map input dimension mismatch");
  std::vector<Jet> out;
  out.reserve(static_cast<std::size_t>(output_width()));
  for (int d = 0; d < input_dims(); ++d) {
    if (!enriched_[d]) {
      out.push_back(x[d]);
      continue;
    }
    for (const auto& t : terms_[d]) {
      double d1 = 0.0, d2 = 0.0;
      const double v = term_value(t, x[d].value, d1, d2);
      out.push_back(jet_univariate(
          x[d], [&](double) { return v; }, [&](double) { return d1; }, [&](double) { return d2; }));
    }
  }
  return out;
}

FeatureMap build_deterministic(const std::vector<std::vector<double>>& freqs, bool include_one,
                               bool include_identity, std::optional<std::set<int>> enrich_dims) {
  const int dims = static_cast<int>(freqs.size());
  if (dims < 1) throw std::invalid_argument("feature map needs at least one input dimension");
  FeatureMap map;
  map.terms_.resize(static_cast<std::size_t>(dims));
  map.enriched_.assign(static_cast<std::size_t>(dims), false);
  for (int d = 0; d < dims; ++d) {
    const bool enrich = !enrich_dims || enrich_dims->contains(d);
    if (!enrich) {
      map.terms_[d] = {{FeatureTerm::Kind::Identity, 0.0}};
      continue;
    }
    map.terms_[d] = trig_terms(freqs[d], include_one, include_identity);
    if (map.terms_[d].empty()) throw std::invalid_argument("empty term list for an enriched dimension");
    map.enriched_[d] = true;
  }
  if (enrich_dims) {
    for (int d : *enrich_dims) {
      if (d < 0 || d >= dims) throw std::invalid_argument("enrich dimension out of range");
    }
  }
  map.finalize();
  return map;
}

FeatureMap build_rff(double sigma, int m, int input_dims, const std::set<int>& dims, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("rff sigma must be non-negative");
  if (m < 1) throw std::invalid_argument("rff needs m >= 1");
  if (input_dims < 1) throw std::invalid_argument("feature map needs at least one input dimension");
  Rng rng(seed);
  FeatureMap map;
  map.terms_.resize(static_cast<std::size_t>(input_dims));
  map.enriched_.assign(static_cast<std::size_t>(input_dims), false);
  for (int d = 0; d < input_dims; ++d) {
    if (!dims.contains(d)) {
      map.terms_[d] = {{FeatureTerm::Kind::Identity, 0.0}};
      continue;
    }
    std::vector<double> freqs(static_cast<std::size_t>(m));
    for (double& a : freqs) a = sigma * rng.normal();
    map.terms_[d] = trig_terms(freqs, true, false);
    map.enriched_[d] = true;
  }
  for (int d : dims) {
    if (d < 0 || d >= input_dims) throw std::invalid_argument("enrich dimension out of range");
  }
  map.rff_ = RandomFourierParams{sigma, m, seed};
  map.finalize();
  return map;
}

nlohmann::json FeatureMap::to_json() const {
  nlohmann::json j;
  std::vector<int> dims;
  for (int d = 0; d < input_dims(); ++d) {
    if (enriched_[d]) dims.push_back(d);
  }
  j["input_dims"] = input_dims();
  j["enrich_dims"] = dims;
  if (rff_) {
    j["mode"] = "rff";
    j["freqs"] = {{"sigma", rff_->sigma}, {"m", rff_->m}, {"seed", rff_->seed}};
    return j;
  }
  j["mode"] = "deterministic";
  // Deterministic maps share one term layout across enriched dimensions.
  bool include_one = false, include_identity = false;
  nlohmann::json freqs = nlohmann::json::array();
  for (int d = 0; d < input_dims(); ++d) {
    std::vector<double> f;
    if (enriched_[d]) {
      for (const auto& t : terms_[d]) {
        if (t.kind == FeatureTerm::Kind::One) include_one = true;
        if (t.kind == FeatureTerm::Kind::Identity) include_identity = true;
        if (t.kind == FeatureTerm::Kind::Cos) f.push_back(t.freq);
      }
    }
    freqs.push_back(f);
  }
  j["freqs"] = freqs;
  j["include_one"] = include_one;
  j["include_identity"] = include_identity;
  return j;
}

FeatureMap FeatureMap::from_json(const nlohmann::json& j) {
  const int dims = j.at("input_dims").get<int>();
  const auto enrich = j.at("enrich_dims").get<std::set<int>>();
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "rff") {
    const auto& p = j.at("freqs");
    return build_rff(p.at("sigma").get<double>(), p.at("m").get<int>(), dims, enrich,
                     p.at("seed").get<std::uint64_t>());
  }
  if (mode != "deterministic") throw std::invalid_argument("unknown feature map mode: " + mode);
  if (enrich.empty()) return FeatureMap::identity(dims);
  const auto freqs = j.at("freqs").get<std::vector<std::vector<double>>>();
  if (static_cast<int>(freqs.size()) != dims) throw std::invalid_argument("feature map freqs/input_dims mismatch");
  return build_deterministic(freqs, j.value("include_one", true), j.value("include_identity", false), enrich);
}

namespace presets {

FeatureMap function_fit_map() {
  const double pi = std::numbers::pi;
  return build_deterministic({{pi, 2 * pi, 3 * pi, 4 * pi}}, true, false);
}

FeatureMap pde_map(int input_dims, std::optional<std::set<int>> enrich_dims) {
  std::vector<std::vector<double>> freqs(static_cast<std::size_t>(input_dims), {1.0, 2.0, 3.0});
  return build_deterministic(freqs, true, false, std::move(enrich_dims));
}

FeatureMap separable_map() { return build_deterministic({{1.0, 2.0}}, true, false); }

}  // namespace presets

}  // namespace fekan
