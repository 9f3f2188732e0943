#include "fekan/separable.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace fekan {

std::vector<int> AxisGrid::counts() const {
  std::vector<int> c;
  for (const auto& a : axes) c.push_back(static_cast<int>(a.size()));
  return c;
}

Eigen::Index AxisGrid::total() const {
  Eigen::Index n = axes.empty() ? 0 : 1;
  for (const auto& a : axes) n *= a.size();
  return n;
}

void AxisGrid::validate() const {
  for (std::size_t k = 0; k < axes.size(); ++k) {
    const auto& a = axes[k];
    if (a.size() == 0) throw std::invalid_argument("axis " + std::to_string(k) + " is empty");
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (!std::isfinite(a[i])) throw std::invalid_argument("axis " + std::to_string(k) + " has a non-finite coordinate");
      if (i > 0 && !(a[i] > a[i - 1])) {
        throw std::invalid_argument("axis " + std::to_string(k) + " is not strictly increasing");
      }
    }
  }
}

AxisGrid AxisGrid::restricted(int k, double value) const {
  if (k < 0 || k >= dims()) throw std::invalid_argument("restricted: invalid axis");
  AxisGrid g = *this;
  g.axes[k] = Eigen::VectorXd::Constant(1, value);
  return g;
}

SeparableModel SeparableModel::init(const std::vector<FeatureMap>& maps, const std::vector<int>& hidden, int rank,
                                    const BasisSpec& spec, std::uint64_t seed, const ModelOptions& options) {
  return init(maps, hidden, rank, spec, seed, std::vector<ModelOptions>(maps.size(), options));
}

SeparableModel SeparableModel::init(const std::vector<FeatureMap>& maps, const std::vector<int>& hidden, int rank,
                                    const BasisSpec& spec, std::uint64_t seed,
                                    const std::vector<ModelOptions>& options) {
  if (maps.size() != options.size()) throw std::invalid_argument("one option set per body is required");
  std::vector<FekanModel> bodies;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    if (maps[k].input_dims() != 1) throw DimensionMismatch("separable bodies take exactly one coordinate");
    std::vector<int> widths{maps[k].output_width()};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(rank);
    // distinct, reproducible streams per body
    bodies.push_back(FekanModel::init(widths, spec, maps[k], seed * 1000003ULL + k, options[k]));
  }
  return from_bodies(std::move(bodies));
}

SeparableModel SeparableModel::from_bodies(std::vector<FekanModel> bodies) {
  if (bodies.size() < 2) throw std::invalid_argument("separable model needs at least two bodies");
  if (bodies.size() > 4) throw std::invalid_argument("separable model supports at most four bodies");
  const int r = bodies.front().output_dims();
  for (const auto& b : bodies) {
    if (b.input_dims() != 1) throw DimensionMismatch("separable bodies take exactly one coordinate");
    if (b.output_dims() != r) throw DimensionMismatch("every body must output the same rank");
  }
  SeparableModel m;
  m.rank_ = r;
  m.bodies_ = std::move(bodies);
  return m;
}

Eigen::Index SeparableModel::param_count() const {
  Eigen::Index n = 0;
  for (const auto& b : bodies_) n += b.param_count();
  return n;
}

Eigen::VectorXd SeparableModel::params() const {
  Eigen::VectorXd theta(param_count());
  Eigen::Index off = 0;
  for (const auto& b : bodies_) {
    theta.segment(off, b.param_count()) = b.params();
    off += b.param_count();
  }
  return theta;
}

void SeparableModel::set_params(const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (theta.size() != param_count()) throw DimensionMismatch("set_params: size mismatch");
  Eigen::Index off = 0;
  for (auto& b : bodies_) {
    b.params() = theta.segment(off, b.param_count());
    off += b.param_count();
  }
}

GridCache SeparableModel::evaluate(const AxisGrid& grid, bool derivatives, bool for_backward) const {
  if (grid.dims() != dims()) throw DimensionMismatch("grid has " + std::to_string(grid.dims()) + " axes, model " + std::to_string(dims()));
  grid.validate();
  GridCache cache;
  cache.counts = grid.counts();
  cache.derivatives = derivatives;
  cache.rows.resize(bodies_.size());
  if (for_backward) cache.scratch.resize(bodies_.size());
  const int D = derivatives ? 1 : 0;
  Workspace shared;
  for (std::size_t k = 0; k < bodies_.size(); ++k) {
    const auto& body = bodies_[k];
    const int n = cache.counts[k];
    auto& rows = cache.rows[k];
    rows.value.resize(rank_, n);
    if (derivatives) {
      rows.d1.resize(rank_, n);
      rows.d2.resize(rank_, n);
    }
    if (for_backward) cache.scratch[k].resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const double x = grid.axes[k][i];
      Workspace& ws = for_backward ? cache.scratch[k][static_cast<std::size_t>(i)] : shared;
      body.eval(&x, D, for_backward, ws);
      for (int j = 0; j < rank_; ++j) {
        rows.value(j, i) = ws.value(j);
        if (derivatives) {
          rows.d1(j, i) = ws.grad(j, 0);
          rows.d2(j, i) = ws.diag2(j, 0);
        }
      }
    }
    body_evals_ += n;
  }
  return cache;
}

namespace {

const Eigen::MatrixXd& factor(const GridCache& cache, int k, int order) {
  const auto& r = cache.rows[k];
  switch (order) {
    case 0: return r.value;
    case 1:
    case 2:
      if (!cache.derivatives) throw std::logic_error("grid cache was evaluated without derivatives");
      return order == 1 ? r.d1 : r.d2;
    default: throw std::invalid_argument("derivative order must be 0, 1 or 2");
  }
}

}  // namespace

Eigen::VectorXd SeparableModel::contract(const GridCache& cache, const std::vector<int>& orders) {
  const int d = static_cast<int>(cache.rows.size());
  if (static_cast<int>(orders.size()) != d) throw DimensionMismatch("contract: one order per axis required");
  std::vector<const Eigen::MatrixXd*> F;
  for (int k = 0; k < d; ++k) F.push_back(&factor(cache, k, orders[k]));
  const Eigen::Index r = F[0]->rows();
  Eigen::Index total = 1;
  for (int c : cache.counts) total *= c;
  Eigen::VectorXd out(total);
  // partial[k] holds prod_{l<k} F_l[j][i_l] for the current prefix
  std::vector<Eigen::VectorXd> partial(d, Eigen::VectorXd::Ones(r));
  Eigen::Index flat = 0;
  std::function<void(int)> walk = [&](int k) {
    const Eigen::MatrixXd& f = *F[k];
    if (k == d - 1) {
      for (int i = 0; i < cache.counts[k]; ++i) out[flat++] = partial[k].dot(f.col(i));
      return;
    }
    for (int i = 0; i < cache.counts[k]; ++i) {
      partial[k + 1] = partial[k].cwiseProduct(f.col(i));
      walk(k + 1);
    }
  };
  walk(0);
  return out;
}

SeparableModel::RowCotangent SeparableModel::zero_cotangent(const GridCache& cache) const {
  RowCotangent cot;
  cot.rows.resize(cache.rows.size());
  for (std::size_t k = 0; k < cache.rows.size(); ++k) {
    const Eigen::Index n = cache.rows[k].value.cols();
    cot.rows[k].value = Eigen::MatrixXd::Zero(rank_, n);
    if (cache.derivatives) {
      cot.rows[k].d1 = Eigen::MatrixXd::Zero(rank_, n);
      cot.rows[k].d2 = Eigen::MatrixXd::Zero(rank_, n);
    }
  }
  return cot;
}

void SeparableModel::accumulate(const GridCache& cache, const std::vector<int>& orders,
                                const Eigen::Ref<const Eigen::VectorXd>& upstream, RowCotangent& cot) {
  const int d = static_cast<int>(cache.rows.size());
  if (static_cast<int>(orders.size()) != d) throw DimensionMismatch("accumulate: one order per axis required");
  Eigen::Index total = 1;
  for (int c : cache.counts) total *= c;
  if (upstream.size() != total) throw DimensionMismatch("upstream tensor does not match the grid");
  std::vector<const Eigen::MatrixXd*> F;
  std::vector<Eigen::MatrixXd*> G;
  for (int k = 0; k < d; ++k) {
    F.push_back(&factor(cache, k, orders[k]));
    auto& rows = cot.rows[k];
    G.push_back(orders[k] == 0 ? &rows.value : (orders[k] == 1 ? &rows.d1 : &rows.d2));
  }
  const Eigen::Index r = F[0]->rows();
  std::vector<int> idx(d, 0);
  std::vector<Eigen::VectorXd> pre(d + 1, Eigen::VectorXd::Ones(r)), suf(d + 1, Eigen::VectorXd::Ones(r));
  for (Eigen::Index flat = 0; flat < total; ++flat) {
    const double u = upstream[flat];
    if (u != 0.0) {
      for (int k = 0; k < d; ++k) pre[k + 1] = pre[k].cwiseProduct(F[k]->col(idx[k]));
      for (int k = d - 1; k >= 0; --k) suf[k] = suf[k + 1].cwiseProduct(F[k]->col(idx[k]));
      for (int k = 0; k < d; ++k) G[k]->col(idx[k]) += u * pre[k].cwiseProduct(suf[k + 1]);
    }
    for (int k = d - 1; k >= 0; --k) {
      if (++idx[k] < cache.counts[k]) break;
      idx[k] = 0;
    }
  }
}

Eigen::VectorXd SeparableModel::pullback(GridCache& cache, const RowCotangent& cot) const {
  if (cache.scratch.size() != bodies_.size()) throw std::logic_error("pullback: grid cache was not kept for backward");
  Eigen::VectorXd grads = Eigen::VectorXd::Zero(param_count());
  Eigen::Index off = 0;
  Eigen::VectorXd vb(rank_), gb(rank_), hb(rank_);
  for (std::size_t k = 0; k < bodies_.size(); ++k) {
    const auto& body = bodies_[k];
    const auto& c = cot.rows[k];
    for (Eigen::Index i = 0; i < c.value.cols(); ++i) {
      vb = c.value.col(i);
      if (cache.derivatives) {
        gb = c.d1.col(i);
        hb = c.d2.col(i);
      }
      body.pullback(cache.scratch[k][static_cast<std::size_t>(i)], vb.data(),
                    cache.derivatives ? gb.data() : nullptr, cache.derivatives ? hb.data() : nullptr,
                    grads.data() + off);
    }
    off += body.param_count();
  }
  return grads;
}

Eigen::VectorXd SeparableModel::forward_grid(const AxisGrid& grid) const {
  const GridCache cache = evaluate(grid, false);
  return contract(cache, std::vector<int>(bodies_.size(), 0));
}

Eigen::VectorXd SeparableModel::derivative_grid(const AxisGrid& grid, int axis, int order) const {
  if (axis < 0 || axis >= dims()) throw std::invalid_argument("derivative_grid: invalid axis");
  if (order < 1 || order > 2) throw std::invalid_argument("derivative_grid: order must be 1 or 2");
  const GridCache cache = evaluate(grid, true);
  std::vector<int> orders(bodies_.size(), 0);
  orders[axis] = order;
  return contract(cache, orders);
}

Eigen::VectorXd SeparableModel::backward_grid(const AxisGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& upstream) const {
  GridCache cache = evaluate(grid, false, true);
  if (upstream.size() != grid.total()) throw DimensionMismatch("backward_grid: upstream shape mismatch");
  RowCotangent cot = zero_cotangent(cache);
  accumulate(cache, std::vector<int>(bodies_.size(), 0), upstream, cot);
  return pullback(cache, cot);
}

nlohmann::ordered_json SeparableModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "fekan-separable";
  j["version"] = 1;
  j["r"] = rank_;
  j["d"] = dims();
  j["bodies"] = nlohmann::ordered_json::array();
  for (const auto& b : bodies_) j["bodies"].push_back(b.to_json());
  return j;
}

SeparableModel SeparableModel::from_json(const nlohmann::json& j) {
  if (j.at("format") != "fekan-separable") throw std::invalid_argument("not a separable checkpoint");
  if (j.at("version") != 1) throw std::invalid_argument("unsupported separable checkpoint version");
  std::vector<FekanModel> bodies;
  for (const auto& b : j.at("bodies")) bodies.push_back(FekanModel::from_json(b));
  SeparableModel m = from_bodies(std::move(bodies));
  if (m.rank() != j.at("r").get<int>() || m.dims() != j.at("d").get<int>()) {
    throw std::invalid_argument("separable checkpoint header does not match its bodies");
  }
  return m;
}

}  // namespace fekan
