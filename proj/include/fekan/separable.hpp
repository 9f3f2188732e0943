#pragma once

// Separable FEKAN: u(x) = sum_j prod_k f_j^{(k)}(x_k), one body network per
// input coordinate, each mapping its coordinate to r embedding values.
// Tensors over a grid are flattened row-major (last axis fastest).

#include "fekan/model.hpp"

#include <atomic>
#include <vector>

namespace fekan {

struct AxisGrid {
  std::vector<Eigen::VectorXd> axes;

  [[nodiscard]] int dims() const { return static_cast<int>(axes.size()); }
  [[nodiscard]] std::vector<int> counts() const;
  [[nodiscard]] Eigen::Index total() const;
  /// Throws std::invalid_argument unless every axis is non-empty and strictly increasing.
  void validate() const;
  /// Same grid with axis k replaced by the single coordinate `value`.
  [[nodiscard]] AxisGrid restricted(int k, double value) const;
};

/// Body outputs on each axis: rows are embedding components, columns grid
/// points. d1/d2 are filled only when derivatives were requested.
struct BodyRows {
  Eigen::MatrixXd value, d1, d2;
};

/// Everything needed to form any derivative tensor of u on one grid and to
/// pull cotangents back into the bodies.
struct GridCache {
  std::vector<int> counts;
  std::vector<BodyRows> rows;
  bool derivatives = false;
  /// Per-point body workspaces, kept only when evaluated for backward.
  std::vector<std::vector<Workspace>> scratch;
};

class SeparableModel {
 public:
  SeparableModel() = default;

  /// One body per map; every body is [map width, hidden..., rank].
  static SeparableModel init(const std::vector<FeatureMap>& maps, const std::vector<int>& hidden, int rank,
                             const BasisSpec& spec, std::uint64_t seed, const ModelOptions& options = {});
  /// Per-axis model options (e.g. first-layer domains for plain KAN bodies).
  static SeparableModel init(const std::vector<FeatureMap>& maps, const std::vector<int>& hidden, int rank,
                             const BasisSpec& spec, std::uint64_t seed, const std::vector<ModelOptions>& options);
  /// Takes ownership of ready-made bodies; each must be 1 input -> rank outputs.
  static SeparableModel from_bodies(std::vector<FekanModel> bodies);

  [[nodiscard]] int dims() const { return static_cast<int>(bodies_.size()); }
  [[nodiscard]] int rank() const { return rank_; }
  [[nodiscard]] const std::vector<FekanModel>& bodies() const { return bodies_; }
  [[nodiscard]] std::vector<FekanModel>& bodies() { return bodies_; }

  [[nodiscard]] Eigen::Index param_count() const;
  /// All body parameters concatenated in body order.
  [[nodiscard]] Eigen::VectorXd params() const;
  void set_params(const Eigen::Ref<const Eigen::VectorXd>& theta);

  /// Number of single-point body evaluations since construction or reset.
  [[nodiscard]] long long body_evaluations() const { return body_evals_.load(); }
  void reset_counter() const { body_evals_ = 0; }

  /// Evaluates every body once per axis coordinate (sum_k N_k body calls);
  /// with derivatives the first and second derivative rows are kept as well,
  /// with for_backward the body workspaces are kept for pullback().
  [[nodiscard]] GridCache evaluate(const AxisGrid& grid, bool derivatives, bool for_backward = false) const;

  /// u on the grid.
  [[nodiscard]] Eigen::VectorXd forward_grid(const AxisGrid& grid) const;
  /// d^order u / dx_axis^order on the grid (order 1 or 2).
  [[nodiscard]] Eigen::VectorXd derivative_grid(const AxisGrid& grid, int axis, int order) const;
  /// Gradient of <upstream, forward_grid(grid)> with respect to all parameters.
  [[nodiscard]] Eigen::VectorXd backward_grid(const AxisGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& upstream) const;

  /// Tensor sum_j prod_k F_k[j][i_k] where F_k is the value row of body k
  /// for orders[k] == 0 and the derivative row of that order otherwise.
  [[nodiscard]] static Eigen::VectorXd contract(const GridCache& cache, const std::vector<int>& orders);

  /// Cotangents on body rows, shaped like GridCache::rows.
  struct RowCotangent {
    std::vector<BodyRows> rows;
  };
  [[nodiscard]] RowCotangent zero_cotangent(const GridCache& cache) const;
  /// Adds the row cotangents of <upstream, contract(cache, orders)>.
  static void accumulate(const GridCache& cache, const std::vector<int>& orders,
                         const Eigen::Ref<const Eigen::VectorXd>& upstream, RowCotangent& cot);
  /// Pulls row cotangents back through the bodies into a flat gradient.
  /// The cache must come from evaluate(..., for_backward = true).
  [[nodiscard]] Eigen::VectorXd pullback(GridCache& cache, const RowCotangent& cot) const;

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static SeparableModel from_json(const nlohmann::json& j);

  SeparableModel(const SeparableModel& o) : bodies_(o.bodies_), rank_(o.rank_) {}
  SeparableModel& operator=(const SeparableModel& o) {
    bodies_ = o.bodies_;
    rank_ = o.rank_;
    return *this;
  }
  SeparableModel(SeparableModel&& o) noexcept : bodies_(std::move(o.bodies_)), rank_(o.rank_) {}
  SeparableModel& operator=(SeparableModel&& o) noexcept {
    bodies_ = std::move(o.bodies_);
    rank_ = o.rank_;
    return *this;
  }

 private:
  std::vector<FekanModel> bodies_;
  int rank_ = 0;
  mutable std::atomic<long long> body_evals_{0};
};

}  // namespace fekan
