#pragma once

// Layered KAN with an optional fixed feature map in front (FEKAN).
// All trainable scalars live in one flat vector; each layer records the
// offsets of its coefficient, base-weight and wavelet blocks.

#include "fekan/basis.hpp"
#include "fekan/feature_map.hpp"
#include "fekan/jet.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace fekan {

using ParamGrads = Eigen::VectorXd;

/// Shape and parameter offsets of one layer.
/// coeff[(j * in + i) * card + b], base_weight[j * in + i], wavelet_tau / wavelet_s likewise.
struct KanLayer {
  int in_width = 0;
  int out_width = 0;
  BasisSpec spec;
  bool base_path = false;
  Eigen::Index coeff = 0;
  Eigen::Index base_weight = -1;
  Eigen::Index wavelet_tau = -1;
  Eigen::Index wavelet_s = -1;
  Eigen::Index size = 0;

  [[nodiscard]] int cardinality() const { return spec.cardinality(); }
  [[nodiscard]] int edges() const { return in_width * out_width; }
};

struct ModelOptions {
  /// Residual silu path; defaults to on for splines and off otherwise.
  std::optional<bool> base_path;
  /// Basis domain of the first layer (hidden layers keep the BasisSpec domain).
  std::optional<std::pair<double, double>> input_domain;
  double init_scale = 0.1;
};

/// Cotangents on the output jets: value (out), grad and diag2 (out x dims).
struct JetCotangent {
  Eigen::VectorXd value;
  Eigen::MatrixXd grad;
  Eigen::MatrixXd diag2;
};

class FekanModel;

/// Per-point scratch for the forward/backward engine. Reuse one per thread.
class Workspace {
 public:
  Workspace() = default;

  /// Output value j after eval().
  [[nodiscard]] double value(int j) const { return nodes_.back().v[j]; }
  [[nodiscard]] double grad(int j, int m) const { return nodes_.back().g[j * dims_ + m]; }
  [[nodiscard]] double diag2(int j, int m) const { return nodes_.back().h[j * dims_ + m]; }
  [[nodiscard]] int dims() const { return dims_; }

 private:
  friend class FekanModel;

  struct Node {
    std::vector<double> v, g, h;
    std::vector<double> vb, gb, hb;
  };
  struct LayerScratch {
    std::vector<double> basis;
    std::vector<int> first;
    std::vector<double> silu;
    std::vector<double> psi;
  };

  void prepare(const FekanModel& model, int dims, int order);

  int dims_ = 0;
  int order_ = 0;
  int stride_ = 0;
  std::vector<Node> nodes_;
  std::vector<LayerScratch> layers_;
  std::vector<double> feat_d1_, feat_d2_;
  std::uint64_t shape_id_ = 0;
  const FekanModel* owner_ = nullptr;
};

class FekanModel {
 public:
  FekanModel() = default;

  /// widths[0] must equal map.output_width(); the last entry is the output width.
  static FekanModel init(const std::vector<int>& widths, const BasisSpec& spec, const FeatureMap& map,
                         std::uint64_t seed, const ModelOptions& options = {});

  [[nodiscard]] const FeatureMap& map() const { return map_; }
  [[nodiscard]] const std::vector<int>& widths() const { return widths_; }
  [[nodiscard]] const std::vector<KanLayer>& layers() const { return layers_; }
  [[nodiscard]] int input_dims() const { return map_.input_dims(); }
  [[nodiscard]] int output_dims() const { return widths_.back(); }

  [[nodiscard]] Eigen::VectorXd& params() { return theta_; }
  [[nodiscard]] const Eigen::VectorXd& params() const { return theta_; }
  [[nodiscard]] Eigen::Index param_count() const { return theta_.size(); }
  [[nodiscard]] const BasisEvaluator& evaluator(int layer) const { return evaluators_.at(layer); }
  /// Identifies the layer structure; copies share it, re-initialised models do not.
  [[nodiscard]] std::uint64_t shape_id() const { return shape_id_; }

  /// Throws NonFiniteValue naming the first layer whose output is not finite.
  [[nodiscard]] Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Jets with respect to every raw input coordinate.
  [[nodiscard]] std::vector<Jet> forward_jet(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Gradient of upstream . forward(x) with respect to all parameters.
  [[nodiscard]] ParamGrads backward(const Eigen::Ref<const Eigen::VectorXd>& x,
                                    const Eigen::Ref<const Eigen::VectorXd>& upstream) const;
  /// Gradient of the cotangent-weighted sum of the output jet channels.
  [[nodiscard]] ParamGrads backward_through_jets(const Eigen::Ref<const Eigen::VectorXd>& x,
                                                 const JetCotangent& upstream) const;

  /// Hot path. `dims` is the number of leading raw coordinates carried as
  /// jet directions (0 for values only). With `with_backward` the workspace
  /// keeps what pullback() needs.
  void eval(const double* x, int dims, bool with_backward, Workspace& ws) const;
  /// Accumulates parameter gradients into `grads` after eval(..., true, ws).
  /// gbar/hbar are out x dims row-major and may be null when dims == 0.
  void pullback(Workspace& ws, const double* vbar, const double* gbar, const double* hbar,
                double* grads) const;

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static FekanModel from_json(const nlohmann::json& j);

 private:
  FeatureMap map_;
  std::vector<int> widths_;
  std::vector<KanLayer> layers_;
  std::vector<BasisEvaluator> evaluators_;
  Eigen::VectorXd theta_;
  std::uint64_t shape_id_ = 0;
};

nlohmann::ordered_json basis_spec_to_json(const BasisSpec& spec);
BasisSpec basis_spec_from_json(const nlohmann::json& j);

}  // namespace fekan
