#pragma once

// Parameter-free input enrichment gamma: each enriched coordinate is
// replaced by an ordered list of terms (identity, constant, cos(a x),
// sin(a x)); coordinates that are not enriched pass through unchanged.

#include "fekan/jet.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

namespace fekan {

struct FeatureTerm {
  enum class Kind { Identity, One, Cos, Sin };
  Kind kind = Kind::Identity;
  double freq = 0.0;

  bool operator==(const FeatureTerm&) const = default;
};

struct RandomFourierParams {
  double sigma = 1.0;
  int m = 3;
  std::uint64_t seed = 0;

  bool operator==(const RandomFourierParams&) const = default;
};

class FeatureMap {
 public:
  FeatureMap() = default;

  /// Pass-through map on `dims` coordinates (plain KAN input).
  static FeatureMap identity(int dims);

  [[nodiscard]] int input_dims() const { return static_cast<int>(terms_.size()); }
  [[nodiscard]] int output_width() const;
  [[nodiscard]] bool is_enriched(int dim) const { return enriched_.at(dim); }
  [[nodiscard]] bool is_identity() const;
  [[nodiscard]] const std::vector<FeatureTerm>& terms(int dim) const { return terms_.at(dim); }
  [[nodiscard]] const std::optional<RandomFourierParams>& rff() const { return rff_; }

  [[nodiscard]] Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  [[nodiscard]] std::vector<Jet> apply_jet(const std::vector<Jet>& x) const;

  /// Hot-path variant: writes values and first/second derivatives of every
  /// output feature with respect to its source coordinate. `source[f]` is
  /// the raw coordinate feature f depends on.
  void apply_derivs(const double* x, double* value, double* d1, double* d2) const;
  [[nodiscard]] const std::vector<int>& source() const { return source_; }

  [[nodiscard]] nlohmann::json to_json() const;
  static FeatureMap from_json(const nlohmann::json& j);

  bool operator==(const FeatureMap& other) const {
    return terms_ == other.terms_ && enriched_ == other.enriched_ && rff_ == other.rff_;
  }

  friend FeatureMap build_deterministic(const std::vector<std::vector<double>>& freqs, bool include_one,
                                        bool include_identity, std::optional<std::set<int>> enrich_dims);
  friend FeatureMap build_rff(double sigma, int m, int input_dims, const std::set<int>& dims,
                              std::uint64_t seed);

 private:
  void finalize();

  std::vector<std::vector<FeatureTerm>> terms_;
  std::vector<bool> enriched_;
  std::optional<RandomFourierParams> rff_;
  std::vector<int> source_;
};

/// Deterministic map. `freqs[d]` lists the frequencies for coordinate d;
/// per enriched dimension the terms are [identity?, 1?, cos(a1 x), sin(a1 x), ...].
/// `enrich_dims` defaults to every coordinate.
FeatureMap build_deterministic(const std::vector<std::vector<double>>& freqs, bool include_one,
                               bool include_identity, std::optional<std::set<int>> enrich_dims = std::nullopt);

/// Random Fourier features: per enriched dimension [1, cos(a_j x), sin(a_j x)]
/// for j = 1..m with a_j ~ N(0, sigma^2) drawn once from `seed`.
FeatureMap build_rff(double sigma, int m, int input_dims, const std::set<int>& dims, std::uint64_t seed);

namespace presets {
/// [1, cos(pi x), sin(pi x), ..., cos(4 pi x), sin(4 pi x)] on one coordinate.
FeatureMap function_fit_map();
/// Seven terms per coordinate with frequencies 1, 2, 3 (constant first).
FeatureMap pde_map(int input_dims, std::optional<std::set<int>> enrich_dims = std::nullopt);
/// Five terms per coordinate with frequencies 1, 2.
FeatureMap separable_map();
}  // namespace presets

}  // namespace fekan
