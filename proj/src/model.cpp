#include "fekan/model.hpp"

#include "fekan/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fekan {

namespace {

int basis_order(int dims, bool with_backward) {
  if (dims > 0) return with_backward ? 3 : 2;
  return with_backward ? 1 : 0;
}

template <class F>
void dispatch_dims(int dims, F&& f) {
  switch (dims) {
    case 0: f.template operator()<0>(); break;
    case 1: f.template operator()<1>(); break;
    case 2: f.template operator()<2>(); break;
    case 3: f.template operator()<3>(); break;
    default: f.template operator()<4>(); break;
  }
}

// Spline/polynomial layers share one basis row per input node; D is fixed
// at compile time so the direction loops unroll.
template <int D, class Scratch, class Node>
void eval_basis_layer(const KanLayer& L, const BasisEvaluator& ev, Scratch& sc, const Node& in, Node& out,
                      const double* theta, int order) {
  const int I = L.in_width, O = L.out_width, C = L.cardinality();
  const int S = ev.support();
  const int stride = (order + 1) * S;
  for (int i = 0; i < I; ++i) {
    sc.first[i] = ev.evaluate(in.v[i], order, sc.basis.data() + i * stride);
    if (L.base_path) silu_derivs(in.v[i], order, sc.silu.data() + i * 4);
  }
  for (int j = 0; j < O; ++j) {
    double v = 0.0;
    double g[D > 0 ? D : 1] = {}, h[D > 0 ? D : 1] = {};
    for (int i = 0; i < I; ++i) {
      const int e = j * I + i;
      const double* c = theta + L.coeff + static_cast<Eigen::Index>(e) * C + sc.first[i];
      const double* p = sc.basis.data() + i * stride;
      const double w = L.base_path ? theta[L.base_weight + e] : 0.0;
      const double* sl = sc.silu.data() + i * 4;
      double s0 = 0.0;
      for (int b = 0; b < S; ++b) s0 += c[b] * p[b];
      if (L.base_path) s0 += w * sl[0];
      v += s0;
      if constexpr (D > 0) {
        double s1 = 0.0, s2 = 0.0;
        for (int b = 0; b < S; ++b) {
          s1 += c[b] * p[S + b];
          s2 += c[b] * p[2 * S + b];
        }
        if (L.base_path) {
          s1 += w * sl[1];
          s2 += w * sl[2];
        }
        for (int m = 0; m < D; ++m) {
          const double zg = in.g[i * D + m];
          g[m] += s1 * zg;
          h[m] += s2 * zg * zg + s1 * in.h[i * D + m];
        }
      }
    }
    out.v[j] = v;
    for (int m = 0; m < D; ++m) {
      out.g[j * D + m] = g[m];
      out.h[j * D + m] = h[m];
    }
  }
}

template <int D, class Scratch, class Node>
void pullback_basis_layer(const KanLayer& L, const BasisEvaluator& ev, const Scratch& sc, Node& in,
                          const Node& out, const double* theta, double* grads, int order, bool need_input) {
  const int I = L.in_width, O = L.out_width, C = L.cardinality();
  const int S = ev.support();
  const int stride = (order + 1) * S;
  for (int j = 0; j < O; ++j) {
    const double A = out.vb[j];
    double gb[D > 0 ? D : 1] = {}, hb[D > 0 ? D : 1] = {};
    for (int m = 0; m < D; ++m) {
      gb[m] = out.gb[j * D + m];
      hb[m] = out.hb[j * D + m];
    }
    for (int i = 0; i < I; ++i) {
      const int e = j * I + i;
      double B = 0.0, Cc = 0.0;
      for (int m = 0; m < D; ++m) {
        const double zg = in.g[i * D + m];
        B += gb[m] * zg + hb[m] * in.h[i * D + m];
        Cc += hb[m] * zg * zg;
      }
      const Eigen::Index c0 = L.coeff + static_cast<Eigen::Index>(e) * C + sc.first[i];
      const double* c = theta + c0;
      double* gc = grads + c0;
      const double* p = sc.basis.data() + i * stride;
      const double* sl = sc.silu.data() + i * 4;
      const double w = L.base_path ? theta[L.base_weight + e] : 0.0;
      if constexpr (D > 0) {
        for (int b = 0; b < S; ++b) gc[b] += A * p[b] + B * p[S + b] + Cc * p[2 * S + b];
        if (L.base_path) grads[L.base_weight + e] += A * sl[0] + B * sl[1] + Cc * sl[2];
      } else {
        for (int b = 0; b < S; ++b) gc[b] += A * p[b];
        if (L.base_path) grads[L.base_weight + e] += A * sl[0];
      }
      if (!need_input) continue;
      double s1 = 0.0;
      for (int b = 0; b < S; ++b) s1 += c[b] * p[S + b];
      if (L.base_path) s1 += w * sl[1];
      in.vb[i] += A * s1;
      if constexpr (D > 0) {
        double s2 = 0.0, s3 = 0.0;
        for (int b = 0; b < S; ++b) {
          s2 += c[b] * p[2 * S + b];
          s3 += c[b] * p[3 * S + b];
        }
        if (L.base_path) {
          s2 += w * sl[2];
          s3 += w * sl[3];
        }
        in.vb[i] += B * s2 + Cc * s3;
        for (int m = 0; m < D; ++m) {
          in.gb[i * D + m] += gb[m] * s1 + 2.0 * hb[m] * s2 * in.g[i * D + m];
          in.hb[i * D + m] += hb[m] * s1;
        }
      }
    }
  }
}

}  // namespace

void Workspace::prepare(const FekanModel& model, int dims, int order) {
  if (owner_ == &model && dims_ == dims && order_ == order && shape_id_ == model.shape_id()) return;
  const auto& layers = model.layers();
  shape_id_ = model.shape_id();
  owner_ = &model;
  dims_ = dims;
  order_ = order;
  nodes_.resize(layers.size() + 1);
  layers_.resize(layers.size());
  const auto& widths = model.widths();
  for (std::size_t l = 0; l < nodes_.size(); ++l) {
    const auto w = static_cast<std::size_t>(widths[l]);
    auto& n = nodes_[l];
    n.v.assign(w, 0.0);
    n.g.assign(w * dims, 0.0);
    n.h.assign(w * dims, 0.0);
    n.vb.assign(w, 0.0);
    n.gb.assign(w * dims, 0.0);
    n.hb.assign(w * dims, 0.0);
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    auto& s = layers_[l];
    const int S = model.evaluator(static_cast<int>(l)).support();
    s.basis.assign(static_cast<std::size_t>(L.in_width * (order + 1) * S), 0.0);
    s.first.assign(static_cast<std::size_t>(L.in_width), 0);
    s.silu.assign(static_cast<std::size_t>(L.in_width * 4), 0.0);
    if (L.spec.kind == BasisKind::WaveletDoG) s.psi.assign(static_cast<std::size_t>(L.edges() * 4), 0.0);
  }
  feat_d1_.assign(static_cast<std::size_t>(widths[0]), 0.0);
  feat_d2_.assign(static_cast<std::size_t>(widths[0]), 0.0);
}

FekanModel FekanModel::init(const std::vector<int>& widths, const BasisSpec& spec, const FeatureMap& map,
                            std::uint64_t seed, const ModelOptions& options) {
  if (widths.size() < 2) throw std::invalid_argument("model needs at least one layer");
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument("layer widths must be positive");
  }
  if (map.input_dims() == 0) throw std::invalid_argument("model needs a feature map");
  if (widths[0] != map.output_width()) {
    std::ostringstream os;
    os << "first width " << widths[0] << " does not match feature map width " << map.output_width();
    throw DimensionMismatch(os.str());
  }
  spec.validate();

  static std::atomic<std::uint64_t> next_shape_id{1};
  FekanModel model;
  model.shape_id_ = next_shape_id++;
  model.map_ = map;
  model.widths_ = widths;
  const bool base = options.base_path.value_or(spec.kind == BasisKind::Spline);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    KanLayer L;
    L.in_width = widths[l];
    L.out_width = widths[l + 1];
    L.spec = spec;
    if (l == 0 && options.input_domain) L.spec = spec.with_domain(options.input_domain->first, options.input_domain->second);
    L.spec.validate();
    L.base_path = base;
    L.coeff = offset;
    offset += static_cast<Eigen::Index>(L.edges()) * L.cardinality();
    if (base) {
      L.base_weight = offset;
      offset += L.edges();
    }
    if (spec.kind == BasisKind::WaveletDoG) {
      L.wavelet_tau = offset;
      offset += L.edges();
      L.wavelet_s = offset;
      offset += L.edges();
    }
    L.size = offset - L.coeff;
    model.layers_.push_back(L);
    model.evaluators_.emplace_back(L.spec);
  }

  model.theta_ = Eigen::VectorXd::Zero(offset);
  Rng rng(seed);
  for (const auto& L : model.layers_) {
    const double s = options.init_scale / std::sqrt(static_cast<double>(L.cardinality()));
    const Eigen::Index n = static_cast<Eigen::Index>(L.edges()) * L.cardinality();
    for (Eigen::Index p = 0; p < n; ++p) model.theta_[L.coeff + p] = s * rng.normal();
    if (L.base_path) {
      const double a = std::sqrt(6.0 / (L.in_width + L.out_width));
      for (int e = 0; e < L.edges(); ++e) model.theta_[L.base_weight + e] = rng.uniform(-a, a);
    }
    if (L.wavelet_tau >= 0) {
      model.theta_.segment(L.wavelet_tau, L.edges()).setZero();
      model.theta_.segment(L.wavelet_s, L.edges()).setOnes();
    }
  }
  return model;
}

void FekanModel::eval(const double* x, int dims, bool with_backward, Workspace& ws) const {
  if (dims < 0 || dims > std::min(kMaxJetDims, input_dims())) throw DimensionMismatch("invalid jet dimension count");
  const int order = basis_order(dims, with_backward);
  ws.prepare(*this, dims, order);
  const int D = dims;
  const double* theta = theta_.data();

  {
    auto& n0 = ws.nodes_[0];
    map_.apply_derivs(x, n0.v.data(), ws.feat_d1_.data(), ws.feat_d2_.data());
    if (D > 0) {
      const auto& src = map_.source();
      std::fill(n0.g.begin(), n0.g.end(), 0.0);
      std::fill(n0.h.begin(), n0.h.end(), 0.0);
      for (int f = 0; f < widths_[0]; ++f) {
        const int m = src[f];
        if (m < D) {
          n0.g[f * D + m] = ws.feat_d1_[f];
          n0.h[f * D + m] = ws.feat_d2_[f];
        }
      }
    }
  }

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    const auto& ev = evaluators_[l];
    auto& sc = ws.layers_[l];
    const auto& in = ws.nodes_[l];
    auto& out = ws.nodes_[l + 1];
    const int I = L.in_width, O = L.out_width;
    std::fill(out.v.begin(), out.v.end(), 0.0);
    std::fill(out.g.begin(), out.g.end(), 0.0);
    std::fill(out.h.begin(), out.h.end(), 0.0);

    if (L.spec.kind == BasisKind::WaveletDoG) {
      for (int j = 0; j < O; ++j) {
        for (int i = 0; i < I; ++i) {
          const int e = j * I + i;
          const double w = theta[L.coeff + e];
          const double tau = theta[L.wavelet_tau + e];
          const double s = theta[L.wavelet_s + e];
          double* psi = sc.psi.data() + e * 4;
          dog_wavelet((in.v[i] - tau) / s, order, psi);
          out.v[j] += w * psi[0];
          if (D > 0) {
            const double s1 = w * psi[1] / s;
            const double s2 = w * psi[2] / (s * s);
            for (int m = 0; m < D; ++m) {
              const double zg = in.g[i * D + m];
              out.g[j * D + m] += s1 * zg;
              out.h[j * D + m] += s2 * zg * zg + s1 * in.h[i * D + m];
            }
          }
        }
      }
      continue;
    }

    // the first layer never propagates input cotangents, so it needs one derivative less
    const int layer_order = (l == 0 && with_backward) ? order - 1 : order;
    dispatch_dims(D, [&]<int kD>() { eval_basis_layer<kD>(L, ev, sc, in, out, theta, layer_order); });
  }
}

void FekanModel::pullback(Workspace& ws, const double* vbar, const double* gbar, const double* hbar,
                          double* grads) const {
  if (ws.owner_ != this) throw std::logic_error("pullback: workspace was not filled by this model");
  const int D = ws.dims_;
  if (ws.order_ != basis_order(D, true)) throw std::logic_error("pullback: eval was run without backward");
  const double* theta = theta_.data();
  {
    auto& top = ws.nodes_.back();
    const int O = widths_.back();
    std::copy(vbar, vbar + O, top.vb.begin());
    if (D > 0) {
      std::copy(gbar, gbar + O * D, top.gb.begin());
      std::copy(hbar, hbar + O * D, top.hb.begin());
    }
  }

  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& L = layers_[l];
    const auto& ev = evaluators_[l];
    auto& sc = ws.layers_[l];
    auto& in = ws.nodes_[l];
    const auto& out = ws.nodes_[l + 1];
    const int I = L.in_width, O = L.out_width;
    const bool need_input = l > 0;
    if (need_input) {
      std::fill(in.vb.begin(), in.vb.end(), 0.0);
      std::fill(in.gb.begin(), in.gb.end(), 0.0);
      std::fill(in.hb.begin(), in.hb.end(), 0.0);
    }

    if (L.spec.kind == BasisKind::WaveletDoG) {
      for (int j = 0; j < O; ++j) {
        for (int i = 0; i < I; ++i) {
          const int e = j * I + i;
          const double A = out.vb[j];
          double B = 0.0, Cc = 0.0;
          for (int m = 0; m < D; ++m) {
            const double zg = in.g[i * D + m];
            B += out.gb[j * D + m] * zg + out.hb[j * D + m] * in.h[i * D + m];
            Cc += out.hb[j * D + m] * zg * zg;
          }
          const double w = theta[L.coeff + e];
          const double tau = theta[L.wavelet_tau + e];
          const double s = theta[L.wavelet_s + e];
          const double u = (in.v[i] - tau) / s;
          const double* psi = sc.psi.data() + e * 4;
          const double is = 1.0 / s;
          grads[L.coeff + e] += A * psi[0];
          grads[L.wavelet_tau + e] += -w * A * psi[1] * is;
          grads[L.wavelet_s + e] += -w * is * A * u * psi[1];
          if (D > 0) {
            grads[L.coeff + e] += B * psi[1] * is + Cc * psi[2] * is * is;
            grads[L.wavelet_tau + e] += -w * (B * psi[2] * is * is + Cc * psi[3] * is * is * is);
            grads[L.wavelet_s + e] +=
                -w * is * (B * (u * psi[2] + psi[1]) * is + Cc * (u * psi[3] + 2.0 * psi[2]) * is * is);
          }
          if (!need_input) continue;
          const double s1 = w * psi[1] * is;
          in.vb[i] += A * s1;
          if (D > 0) {
            const double s2 = w * psi[2] * is * is;
            const double s3 = w * psi[3] * is * is * is;
            in.vb[i] += B * s2 + Cc * s3;
            for (int m = 0; m < D; ++m) {
              in.gb[i * D + m] += out.gb[j * D + m] * s1 + 2.0 * out.hb[j * D + m] * s2 * in.g[i * D + m];
              in.hb[i * D + m] += out.hb[j * D + m] * s1;
            }
          }
        }
      }
      continue;
    }

    dispatch_dims(D, [&]<int kD>() { pullback_basis_layer<kD>(L, ev, sc, in, out, theta, grads, need_input ? ws.order_ : ws.order_ - 1, need_input);
    });
  }
}

Eigen::VectorXd FekanModel::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != input_dims()) throw DimensionMismatch("forward: input dimension mismatch");
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw NonFiniteValue("forward: non-finite input", x[i]);
  }
  const Eigen::VectorXd xc = x;
  Workspace ws;
  eval(xc.data(), 0, false, ws);
  for (std::size_t l = 1; l < ws.nodes_.size(); ++l) {
    for (double v : ws.nodes_[l].v) {
      if (!std::isfinite(v)) {
        throw NonFiniteValue("forward: non-finite activation in layer " + std::to_string(l - 1), v);
      }
    }
  }
  return Eigen::Map<const Eigen::VectorXd>(ws.nodes_.back().v.data(), output_dims());
}

std::vector<Jet> FekanModel::forward_jet(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != input_dims()) throw DimensionMismatch("forward_jet: input dimension mismatch");
  const int D = input_dims();
  if (D > kMaxJetDims) throw DimensionMismatch("forward_jet: too many input coordinates for a jet");
  const Eigen::VectorXd xc = x;
  Workspace ws;
  eval(xc.data(), D, false, ws);
  std::vector<Jet> out;
  for (int j = 0; j < output_dims(); ++j) {
    const double v = ws.value(j);
    if (!std::isfinite(v)) throw NonFiniteValue("forward_jet: non-finite output", v);
    Jet jet(v, D);
    for (int m = 0; m < D; ++m) {
      jet.grad[m] = ws.grad(j, m);
      jet.diag2[m] = ws.diag2(j, m);
    }
    out.push_back(jet);
  }
  return out;
}

ParamGrads FekanModel::backward(const Eigen::Ref<const Eigen::VectorXd>& x,
                                const Eigen::Ref<const Eigen::VectorXd>& upstream) const {
  if (x.size() != input_dims()) throw DimensionMismatch("backward: input dimension mismatch");
  if (upstream.size() != output_dims()) throw DimensionMismatch("backward: upstream size mismatch");
  const Eigen::VectorXd xc = x, ub = upstream;
  Workspace ws;
  eval(xc.data(), 0, true, ws);
  ParamGrads g = ParamGrads::Zero(param_count());
  pullback(ws, ub.data(), nullptr, nullptr, g.data());
  return g;
}

ParamGrads FekanModel::backward_through_jets(const Eigen::Ref<const Eigen::VectorXd>& x,
                                             const JetCotangent& upstream) const {
  if (x.size() != input_dims()) throw DimensionMismatch("backward_through_jets: input dimension mismatch");
  const int D = input_dims();
  const int O = output_dims();
  if (D > kMaxJetDims) throw DimensionMismatch("backward_through_jets: too many input coordinates");
  if (upstream.value.size() != O || upstream.grad.rows() != O || upstream.grad.cols() != D ||
      upstream.diag2.rows() != O || upstream.diag2.cols() != D) {
    throw DimensionMismatch("backward_through_jets: cotangent shape mismatch");
  }
  const Eigen::VectorXd xc = x;
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor gb = upstream.grad, hb = upstream.diag2;
  Workspace ws;
  eval(xc.data(), D, true, ws);
  ParamGrads g = ParamGrads::Zero(param_count());
  pullback(ws, upstream.value.data(), gb.data(), hb.data(), g.data());
  return g;
}

nlohmann::ordered_json basis_spec_to_json(const BasisSpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(spec.kind));
  j["k"] = spec.k;
  j["G"] = spec.G;
  j["N"] = spec.N;
  j["n_f"] = spec.n_f;
  j["n"] = spec.n;
  j["domain_lo"] = spec.domain_lo;
  j["domain_hi"] = spec.domain_hi;
  return j;
}

BasisSpec basis_spec_from_json(const nlohmann::json& j) {
  BasisSpec s;
  s.kind = basis_kind_from_string(j.at("kind").get<std::string>());
  s.k = j.value("k", s.k);
  s.G = j.value("G", s.G);
  s.N = j.value("N", s.N);
  s.n_f = j.value("n_f", s.n_f);
  s.n = j.value("n", s.n);
  s.domain_lo = j.value("domain_lo", s.domain_lo);
  s.domain_hi = j.value("domain_hi", s.domain_hi);
  s.validate();
  return s;
}

// Checkpoint layout, in field order: format, version, widths, spec (hidden
// layers), map, layers [{in, out, spec, base_path}], params (flat, in
// layer order: coeff, base_weight, wavelet_tau, wavelet_s).
nlohmann::ordered_json FekanModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "fekan-model";
  j["version"] = 1;
  j["widths"] = widths_;
  j["spec"] = basis_spec_to_json(layers_.back().spec);
  j["map"] = nlohmann::ordered_json::parse(map_.to_json().dump());
  auto layers = nlohmann::ordered_json::array();
  for (const auto& L : layers_) {
    nlohmann::ordered_json e;
    e["in"] = L.in_width;
    e["out"] = L.out_width;
    e["spec"] = basis_spec_to_json(L.spec);
    e["base_path"] = L.base_path;
    layers.push_back(e);
  }
  j["layers"] = layers;
  j["params"] = std::vector<double>(theta_.data(), theta_.data() + theta_.size());
  return j;
}

FekanModel FekanModel::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "fekan-model") throw std::invalid_argument("not a fekan-model checkpoint");
  const auto widths = j.at("widths").get<std::vector<int>>();
  const FeatureMap map = FeatureMap::from_json(j.at("map"));
  const auto& layers = j.at("layers");
  if (layers.size() + 1 != widths.size()) throw std::invalid_argument("checkpoint layer count mismatch");
  const BasisSpec spec = basis_spec_from_json(j.at("spec"));
  ModelOptions opt;
  opt.base_path = layers.at(0).at("base_path").get<bool>();
  const BasisSpec first = basis_spec_from_json(layers.at(0).at("spec"));
  opt.input_domain = std::make_pair(first.domain_lo, first.domain_hi);
  FekanModel model = init(widths, spec, map, 0, opt);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = model.layers_[l];
    if (layers[l].at("in").get<int>() != L.in_width || layers[l].at("out").get<int>() != L.out_width ||
        !(basis_spec_from_json(layers[l].at("spec")) == L.spec)) {
      throw std::invalid_argument("checkpoint layer header mismatch at layer " + std::to_string(l));
    }
  }
  const auto params = j.at("params").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(params.size()) != model.param_count()) {
    throw std::invalid_argument("checkpoint parameter count mismatch");
  }
  model.theta_ = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
  return model;
}

}  // namespace fekan
