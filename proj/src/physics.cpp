#include "fekan/physics.hpp"

#include "fekan/random.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace fekan {

namespace {

constexpr double kPi = std::numbers::pi;

// Jets of one model output read back from a workspace.
struct PointBuffer {
  std::array<double, kMaxOutputs> v{};
  std::array<double, kMaxOutputs * kMaxJetDims> g{}, h{};

  PointJets view(int outputs, int dims) const { return {outputs, dims, v.data(), g.data(), h.data()}; }
};

void read_point(const Workspace& ws, int outputs, int dims, PointBuffer& p) {
  for (int o = 0; o < outputs; ++o) {
    p.v[o] = ws.value(o);
    for (int m = 0; m < dims; ++m) {
      p.g[o * dims + m] = ws.grad(o, m);
      p.h[o * dims + m] = ws.diag2(o, m);
    }
  }
}

void check_problem(const FekanModel& model, const PdeProblem& problem) {
  if (model.input_dims() != problem.dims) throw DimensionMismatch("model inputs do not match problem " + problem.name);
  if (model.output_dims() != problem.outputs) throw DimensionMismatch("model outputs do not match problem " + problem.name);
  if (problem.dims > kMaxJetDims) throw DimensionMismatch("problem has too many coordinates for jets");
  if (problem.outputs > kMaxOutputs || problem.residual_components > kMaxComponents) {
    throw DimensionMismatch("problem has too many outputs or residual components");
  }
}

// Adds lambda * 2 r_c * dr_c/d(v,g,h) as cotangents, scaled by `w`.
void residual_cotangent(const ResidualJacobian& jac, const double* r, int comps, int outputs, int dims, double w,
                        double* vb, double* gb, double* hb) {
  for (int o = 0; o < outputs; ++o) {
    vb[o] = 0.0;
    for (int m = 0; m < dims; ++m) {
      gb[o * dims + m] = 0.0;
      hb[o * dims + m] = 0.0;
    }
  }
  for (int c = 0; c < comps; ++c) {
    const double s = 2.0 * w * r[c];
    for (int o = 0; o < outputs; ++o) {
      vb[o] += s * jac.v(c, o);
      for (int m = 0; m < dims; ++m) {
        gb[o * dims + m] += s * jac.g(c, o, m);
        hb[o * dims + m] += s * jac.h(c, o, m);
      }
    }
  }
}

Eigen::MatrixXd face_points(const PdeProblem& p, const Face& f, int n, Rng& rng) {
  Eigen::MatrixXd pts(n, p.dims);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < p.dims; ++d) pts(i, d) = rng.uniform(p.lo[d], p.hi[d]);
    pts(i, f.axis) = f.upper ? p.hi[f.axis] : p.lo[f.axis];
  }
  return pts;
}

}  // namespace

double target_eval(const HighFreqTarget& t, double x) {
  if (x < t.breakpoint) {
    return 20.0 * std::sin(2.0 * kPi * t.w1 * x) + 1.5 * std::sin(2.0 * kPi * t.w2 * x) + 70.0;
  }
  return 10.0 * std::sin(2.0 * kPi * t.w3 * x) + 30.0;
}

Eigen::Vector3d lorenz_rhs(const Eigen::Vector3d& s, const LorenzParams& p) {
  return {p.sigma * (s[1] - s[0]), s[0] * (p.rho - s[2]) - s[1], s[0] * s[1] - p.beta * s[2]};
}

Eigen::MatrixXd integrate_rk4(const OdeRhs& rhs, const Eigen::VectorXd& state0, double dt, int steps) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_rk4: dt must be positive");
  if (steps < 0) throw std::invalid_argument("integrate_rk4: negative step count");
  Eigen::MatrixXd traj(steps + 1, state0.size());
  Eigen::VectorXd s = state0;
  traj.row(0) = s.transpose();
  for (int i = 0; i < steps; ++i) {
    const Eigen::VectorXd k1 = rhs(s);
    const Eigen::VectorXd k2 = rhs(s + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = rhs(s + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = rhs(s + dt * k3);
    s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!s.allFinite()) throw NonFiniteValue("integrate_rk4: state became non-finite at step " + std::to_string(i + 1), s.sum());
    traj.row(i + 1) = s.transpose();
  }
  return traj;
}

Batches sample_collocation(const PdeProblem& p, std::uint64_t seed) {
  if (p.n_res <= 0 || p.n_bc < 0 || p.n_ic < 0) throw std::invalid_argument("collocation counts must be positive");
  Rng rng(seed);
  Batches b;
  b.res.resize(p.n_res, p.dims);
  for (int i = 0; i < p.n_res; ++i) {
    for (int d = 0; d < p.dims; ++d) {
      double v = rng.uniform(p.lo[d], p.hi[d]);
      while (v <= p.lo[d]) v = rng.uniform(p.lo[d], p.hi[d]);  // open box
      b.res(i, d) = v;
    }
  }
  for (const Face& f : p.dirichlet_faces) b.bc.push_back(face_points(p, f, p.n_bc, rng));
  for (int axis : p.periodic_axes) b.periodic.push_back(face_points(p, Face{axis, false}, p.n_bc, rng));
  if (p.time_axis && p.ic_value) b.ic = face_points(p, Face{*p.time_axis, false}, p.n_ic, rng);
  return b;
}

LossResult pinn_loss(const FekanModel& model, const PdeProblem& p, const Batches& batches, bool with_grads) {
  check_problem(model, p);
  const int D = p.dims;
  const int O = p.outputs;
  LossResult out;
  if (with_grads) out.grads = ParamGrads::Zero(model.param_count());
  double* grads = with_grads ? out.grads.data() : nullptr;
  Workspace ws, ws2;
  PointBuffer pt, pt2;
  std::array<double, kMaxComponents> r{};
  std::array<double, kMaxOutputs> vb{};
  std::array<double, kMaxOutputs * kMaxJetDims> gb{}, hb{};

  // interior residual
  const Eigen::Index n_res = batches.res.rows();
  if (n_res > 0 && p.residual) {
    const Eigen::MatrixXd pts = batches.res.transpose();  // column per point
    const double w = p.lambda_res / static_cast<double>(n_res);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n_res; ++i) {
      const double* x = pts.col(i).data();
      model.eval(x, D, with_grads, ws);
      read_point(ws, O, D, pt);
      ResidualJacobian jac;
      jac.outputs = O;
      jac.dims = D;
      p.residual(x, pt.view(O, D), r.data(), with_grads ? &jac : nullptr);
      for (int c = 0; c < p.residual_components; ++c) sum += r[c] * r[c];
      if (with_grads) {
        residual_cotangent(jac, r.data(), p.residual_components, O, D, w, vb.data(), gb.data(), hb.data());
        model.pullback(ws, vb.data(), gb.data(), hb.data(), grads);
      }
    }
    out.terms.l_res = sum / static_cast<double>(n_res);
  }

  // boundary: Dirichlet blocks and periodic pairs share one mean
  Eigen::Index n_bc = 0;
  for (const auto& blk : batches.bc) n_bc += blk.rows();
  for (const auto& blk : batches.periodic) n_bc += blk.rows();
  if (n_bc > 0) {
    const double w = p.lambda_bc / static_cast<double>(n_bc);
    double sum = 0.0;
    std::array<double, kMaxOutputs> target{};
    for (const auto& blk : batches.bc) {
      if (!p.bc_value) throw std::logic_error("problem " + p.name + " has boundary points but no boundary values");
      const Eigen::MatrixXd pts = blk.transpose();
      for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const double* x = pts.col(i).data();
        model.eval(x, 0, with_grads, ws);
        p.bc_value(x, target.data());
        for (int o = 0; o < O; ++o) {
          const double d = ws.value(o) - target[o];
          sum += d * d;
          vb[o] = 2.0 * w * d;
        }
        if (with_grads) model.pullback(ws, vb.data(), nullptr, nullptr, grads);
      }
    }
    for (std::size_t a = 0; a < batches.periodic.size(); ++a) {
      const int axis = p.periodic_axes.at(a);
      const Eigen::MatrixXd lo_pts = batches.periodic[a].transpose();
      Eigen::MatrixXd hi_pts = lo_pts;
      hi_pts.row(axis).setConstant(p.hi[axis]);
      for (Eigen::Index i = 0; i < lo_pts.cols(); ++i) {
        model.eval(lo_pts.col(i).data(), D, with_grads, ws);
        model.eval(hi_pts.col(i).data(), D, with_grads, ws2);
        read_point(ws, O, D, pt);
        read_point(ws2, O, D, pt2);
        for (int o = 0; o < O; ++o) {
          const double dv = pt.v[o] - pt2.v[o];
          const double dg = pt.g[o * D + axis] - pt2.g[o * D + axis];
          sum += dv * dv + dg * dg;
          vb[o] = 2.0 * w * dv;
          for (int m = 0; m < D; ++m) {
            gb[o * D + m] = m == axis ? 2.0 * w * dg : 0.0;
            hb[o * D + m] = 0.0;
          }
        }
        if (with_grads) {
          model.pullback(ws, vb.data(), gb.data(), hb.data(), grads);
          for (int o = 0; o < O; ++o) {
            vb[o] = -vb[o];
            for (int m = 0; m < D; ++m) gb[o * D + m] = -gb[o * D + m];
          }
          model.pullback(ws2, vb.data(), gb.data(), hb.data(), grads);
        }
      }
    }
    out.terms.l_bc = sum / static_cast<double>(n_bc);
  }

  // initial state (and rate)
  const Eigen::Index n_ic = batches.ic.rows();
  if (n_ic > 0) {
    const int t = p.time_axis.value();
    const bool rate = static_cast<bool>(p.ic_rate);
    const int Dic = rate ? D : 0;
    const double w = p.lambda_ic / static_cast<double>(n_ic);
    const Eigen::MatrixXd pts = batches.ic.transpose();
    std::array<double, kMaxOutputs> u0{}, u1{};
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n_ic; ++i) {
      const double* x = pts.col(i).data();
      model.eval(x, Dic, with_grads, ws);
      read_point(ws, O, Dic, pt);
      p.ic_value(x, u0.data());
      if (rate) p.ic_rate(x, u1.data());
      for (int o = 0; o < O; ++o) {
        const double d = pt.v[o] - u0[o];
        sum += d * d;
        vb[o] = 2.0 * w * d;
        for (int m = 0; m < Dic; ++m) {
          gb[o * Dic + m] = 0.0;
          hb[o * Dic + m] = 0.0;
        }
        if (rate) {
          const double dr = pt.g[o * Dic + t] - u1[o];
          sum += dr * dr;
          gb[o * Dic + t] = 2.0 * w * dr;
        }
      }
      if (with_grads) model.pullback(ws, vb.data(), rate ? gb.data() : nullptr, rate ? hb.data() : nullptr, grads);
    }
    out.terms.l_ic = sum / static_cast<double>(n_ic);
  }

  out.terms.loss = p.lambda_res * out.terms.l_res + p.lambda_bc * out.terms.l_bc + p.lambda_ic * out.terms.l_ic;
  out.finite = std::isfinite(out.terms.loss) && (!with_grads || out.grads.allFinite());
  return out;
}

// ------------------------------------------------------------- separable

SeparableBatches sample_separable(const PdeProblem& p, const std::vector<int>& counts, std::uint64_t seed) {
  if (static_cast<int>(counts.size()) != p.dims) throw DimensionMismatch("one count per axis required");
  if (!p.periodic_axes.empty()) throw std::invalid_argument("separable sampling does not support periodic axes");
  Rng rng(seed);
  SeparableBatches b;
  for (int d = 0; d < p.dims; ++d) {
    if (counts[d] <= 0) throw std::invalid_argument("axis counts must be positive");
    std::vector<double> v;
    while (static_cast<int>(v.size()) < counts[d]) {
      const double s = rng.uniform(p.lo[d], p.hi[d]);
      if (s > p.lo[d] && std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    }
    std::sort(v.begin(), v.end());
    b.interior.axes.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  for (const Face& f : p.dirichlet_faces) {
    b.bc.push_back(b.interior.restricted(f.axis, f.upper ? p.hi[f.axis] : p.lo[f.axis]));
  }
  if (p.time_axis && p.ic_value) b.ic = b.interior.restricted(*p.time_axis, p.lo[*p.time_axis]);
  return b;
}

namespace {

// Coordinates of every grid point (column per point, row-major flat order).
Eigen::MatrixXd grid_points(const AxisGrid& g) {
  const int d = g.dims();
  const Eigen::Index total = g.total();
  Eigen::MatrixXd pts(d, total);
  std::vector<Eigen::Index> idx(d, 0);
  for (Eigen::Index flat = 0; flat < total; ++flat) {
    for (int k = 0; k < d; ++k) pts(k, flat) = g.axes[k][idx[k]];
    for (int k = d - 1; k >= 0; --k) {
      if (++idx[k] < g.axes[k].size()) break;
      idx[k] = 0;
    }
  }
  return pts;
}

std::vector<int> unit_orders(int d, int axis, int order) {
  std::vector<int> o(d, 0);
  if (axis >= 0) o[axis] = order;
  return o;
}

}  // namespace

LossResult separable_pinn_loss(const SeparableModel& model, const PdeProblem& p, const SeparableBatches& batches,
                               bool with_grads) {
  if (model.dims() != p.dims) throw DimensionMismatch("separable model dimension does not match problem " + p.name);
  if (p.outputs != 1) throw DimensionMismatch("separable models are scalar");
  const int d = p.dims;
  LossResult out;
  if (with_grads) out.grads = ParamGrads::Zero(model.param_count());

  // interior residual
  {
    GridCache cache = model.evaluate(batches.interior, true, with_grads);
    const Eigen::VectorXd U = SeparableModel::contract(cache, unit_orders(d, -1, 0));
    std::vector<Eigen::VectorXd> D1, D2;
    for (int k = 0; k < d; ++k) {
      D1.push_back(SeparableModel::contract(cache, unit_orders(d, k, 1)));
      D2.push_back(SeparableModel::contract(cache, unit_orders(d, k, 2)));
    }
    const Eigen::MatrixXd pts = grid_points(batches.interior);
    const Eigen::Index n = pts.cols();
    const double w = p.lambda_res / static_cast<double>(n);
    Eigen::VectorXd upU = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::VectorXd> up1(d, Eigen::VectorXd::Zero(n)), up2(d, Eigen::VectorXd::Zero(n));
    std::vector<bool> used1(d, false), used2(d, false);
    bool usedU = false;
    double sum = 0.0;
    std::array<double, kMaxComponents> r{};
    PointBuffer pt;
    for (Eigen::Index i = 0; i < n; ++i) {
      pt.v[0] = U[i];
      for (int k = 0; k < d; ++k) {
        pt.g[k] = D1[k][i];
        pt.h[k] = D2[k][i];
      }
      ResidualJacobian jac;
      jac.outputs = 1;
      jac.dims = d;
      p.residual(pts.col(i).data(), pt.view(1, d), r.data(), with_grads ? &jac : nullptr);
      for (int c = 0; c < p.residual_components; ++c) {
        sum += r[c] * r[c];
        if (!with_grads) continue;
        const double s = 2.0 * w * r[c];
        if (jac.v(c, 0) != 0.0) {
          upU[i] += s * jac.v(c, 0);
          usedU = true;
        }
        for (int k = 0; k < d; ++k) {
          if (jac.g(c, 0, k) != 0.0) {
            up1[k][i] += s * jac.g(c, 0, k);
            used1[k] = true;
          }
          if (jac.h(c, 0, k) != 0.0) {
            up2[k][i] += s * jac.h(c, 0, k);
            used2[k] = true;
          }
        }
      }
    }
    out.terms.l_res = sum / static_cast<double>(n);
    if (with_grads) {
      auto cot = model.zero_cotangent(cache);
      if (usedU) SeparableModel::accumulate(cache, unit_orders(d, -1, 0), upU, cot);
      for (int k = 0; k < d; ++k) {
        if (used1[k]) SeparableModel::accumulate(cache, unit_orders(d, k, 1), up1[k], cot);
        if (used2[k]) SeparableModel::accumulate(cache, unit_orders(d, k, 2), up2[k], cot);
      }
      out.grads += model.pullback(cache, cot);
    }
  }

  // Dirichlet faces
  Eigen::Index n_bc = 0;
  for (const auto& g : batches.bc) n_bc += g.total();
  if (n_bc > 0) {
    const double w = p.lambda_bc / static_cast<double>(n_bc);
    double sum = 0.0;
    for (const auto& g : batches.bc) {
      GridCache cache = model.evaluate(g, false, with_grads);
      const Eigen::VectorXd U = SeparableModel::contract(cache, unit_orders(d, -1, 0));
      const Eigen::MatrixXd pts = grid_points(g);
      Eigen::VectorXd up(U.size());
      for (Eigen::Index i = 0; i < U.size(); ++i) {
        double target = 0.0;
        p.bc_value(pts.col(i).data(), &target);
        const double diff = U[i] - target;
        sum += diff * diff;
        up[i] = 2.0 * w * diff;
      }
      if (with_grads) {
        auto cot = model.zero_cotangent(cache);
        SeparableModel::accumulate(cache, unit_orders(d, -1, 0), up, cot);
        out.grads += model.pullback(cache, cot);
      }
    }
    out.terms.l_bc = sum / static_cast<double>(n_bc);
  }

  // initial state and rate
  if (batches.ic) {
    const AxisGrid& g = *batches.ic;
    const int t = p.time_axis.value();
    const bool rate = static_cast<bool>(p.ic_rate);
    GridCache cache = model.evaluate(g, rate, with_grads);
    const Eigen::VectorXd U = SeparableModel::contract(cache, unit_orders(d, -1, 0));
    Eigen::VectorXd Ut;
    if (rate) Ut = SeparableModel::contract(cache, unit_orders(d, t, 1));
    const Eigen::MatrixXd pts = grid_points(g);
    const Eigen::Index n = U.size();
    const double w = p.lambda_ic / static_cast<double>(n);
    Eigen::VectorXd up0(n), up1 = Eigen::VectorXd::Zero(n);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double u0 = 0.0, u1 = 0.0;
      p.ic_value(pts.col(i).data(), &u0);
      const double d0 = U[i] - u0;
      sum += d0 * d0;
      up0[i] = 2.0 * w * d0;
      if (rate) {
        p.ic_rate(pts.col(i).data(), &u1);
        const double d1 = Ut[i] - u1;
        sum += d1 * d1;
        up1[i] = 2.0 * w * d1;
      }
    }
    out.terms.l_ic = sum / static_cast<double>(n);
    if (with_grads) {
      auto cot = model.zero_cotangent(cache);
      SeparableModel::accumulate(cache, unit_orders(d, -1, 0), up0, cot);
      if (rate) SeparableModel::accumulate(cache, unit_orders(d, t, 1), up1, cot);
      out.grads += model.pullback(cache, cot);
    }
  }

  out.terms.loss = p.lambda_res * out.terms.l_res + p.lambda_bc * out.terms.l_bc + p.lambda_ic * out.terms.l_ic;
  out.finite = std::isfinite(out.terms.loss) && (!with_grads || out.grads.allFinite());
  return out;
}

double relative_l2(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& exact) {
  if (pred.size() != exact.size()) throw DimensionMismatch("relative_l2: length mismatch");
  const double ne = exact.norm();
  if (!(ne > 0.0)) throw std::invalid_argument("relative_l2: exact solution has zero norm");
  return (pred - exact).norm() / ne;
}

Eigen::VectorXd predict(const FekanModel& model, const Eigen::MatrixXd& points) {
  if (points.cols() != model.input_dims()) throw DimensionMismatch("predict: point dimension mismatch");
  const int O = model.output_dims();
  Eigen::VectorXd out(points.rows() * O);
  const Eigen::MatrixXd pts = points.transpose();
  Workspace ws;
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    model.eval(pts.col(i).data(), 0, false, ws);
    for (int o = 0; o < O; ++o) out[i * O + o] = ws.value(o);
  }
  return out;
}

// ------------------------------------------------------------- problems

namespace {

std::vector<Face> box_faces(int spatial) {
  std::vector<Face> f;
  for (int a = 0; a < spatial; ++a) {
    f.push_back({a, false});
    f.push_back({a, true});
  }
  return f;
}

PdeProblem helmholtz(const std::vector<double>& a, double k) {
  const int d = static_cast<int>(a.size());
  PdeProblem p;
  p.name = d == 2 ? "helmholtz2d" : "helmholtz3d";
  p.dims = d;
  p.lo = Eigen::VectorXd::Constant(d, -1.0);
  p.hi = Eigen::VectorXd::Constant(d, 1.0);
  double a2 = 0.0;
  for (double ai : a) a2 += ai * ai;
  const double coef = k * k - a2 * kPi * kPi;
  auto u = [a, d](const double* x) {
    double v = 1.0;
    for (int i = 0; i < d; ++i) v *= std::sin(a[i] * kPi * x[i]);
    return v;
  };
  p.exact = [u](const double* x, double* o) { o[0] = u(x); };
  p.forcing = [u, coef](const double* x, double* o) { o[0] = coef * u(x); };
  p.residual = [u, coef, k, d](const double* x, const PointJets& j, double* r, ResidualJacobian* jac) {
    double lap = 0.0;
    for (int m = 0; m < d; ++m) lap += j.h[m];
    r[0] = lap + k * k * j.v[0] - coef * u(x);
    if (jac) {
      jac->v(0, 0) = k * k;
      for (int m = 0; m < d; ++m) jac->h(0, 0, m) = 1.0;
    }
  };
  p.dirichlet_faces = box_faces(d);
  p.bc_value = [](const double*, double* o) { o[0] = 0.0; };
  p.n_res = 10000;
  p.n_bc = 400;
  p.n_ic = 0;
  return p;
}

}  // namespace

PdeProblem helmholtz2d(double a1, double a2, double k) { return helmholtz({a1, a2}, k); }

PdeProblem helmholtz3d(double a1, double a2, double a3, double k) { return helmholtz({a1, a2, a3}, k); }

PdeProblem allen_cahn() {
  PdeProblem p;
  p.name = "allen_cahn";
  p.dims = 2;
  p.time_axis = 1;
  p.lo = Eigen::Vector2d(-1.0, 0.0);
  p.hi = Eigen::Vector2d(1.0, 1.0);
  p.residual = [](const double*, const PointJets& j, double* r, ResidualJacobian* jac) {
    const double u = j.v[0];
    r[0] = j.g[1] - 1e-4 * j.h[0] + 5.0 * u * u * u - 5.0 * u;
    if (jac) {
      jac->g(0, 0, 1) = 1.0;
      jac->h(0, 0, 0) = -1e-4;
      jac->v(0, 0) = 15.0 * u * u - 5.0;
    }
  };
  p.periodic_axes = {0};
  p.ic_value = [](const double* x, double* o) { o[0] = x[0] * x[0] * std::cos(kPi * x[0]); };
  p.n_res = 10000;
  p.n_bc = 400;
  p.n_ic = 800;
  return p;
}

PdeProblem klein_gordon() {
  PdeProblem p;
  p.name = "klein_gordon";
  p.dims = 3;
  p.time_axis = 2;
  p.lo = Eigen::Vector3d(-1.0, -1.0, 0.0);
  p.hi = Eigen::Vector3d(1.0, 1.0, 10.0);
  auto u = [](const double* x) { return (x[0] + x[1]) * std::cos(x[2]) + x[0] * x[1] * std::sin(x[2]); };
  // u_tt = -u and Delta u = 0, so f = u^2 - u
  auto f = [u](const double* x) {
    const double v = u(x);
    return v * v - v;
  };
  p.exact = [u](const double* x, double* o) { o[0] = u(x); };
  p.forcing = [f](const double* x, double* o) { o[0] = f(x); };
  p.residual = [f](const double* x, const PointJets& j, double* r, ResidualJacobian* jac) {
    const double v = j.v[0];
    r[0] = j.h[2] - j.h[0] - j.h[1] + v * v - f(x);
    if (jac) {
      jac->h(0, 0, 2) = 1.0;
      jac->h(0, 0, 0) = -1.0;
      jac->h(0, 0, 1) = -1.0;
      jac->v(0, 0) = 2.0 * v;
    }
  };
  p.dirichlet_faces = box_faces(2);
  p.bc_value = [u](const double* x, double* o) { o[0] = u(x); };
  p.ic_value = [](const double* x, double* o) { o[0] = x[0] + x[1]; };
  p.ic_rate = [](const double* x, double* o) { o[0] = x[0] * x[1]; };
  p.n_res = 10000;
  p.n_bc = 400;
  p.n_ic = 800;
  return p;
}

PdeProblem lorenz_pi(double t0, double t1, const Eigen::Vector3d& state0, const LorenzParams& lp) {
  if (!(t1 > t0)) throw std::invalid_argument("lorenz_pi: empty window");
  PdeProblem p;
  p.name = "lorenz_pi";
  p.dims = 1;
  p.time_axis = 0;
  p.outputs = 3;
  p.residual_components = 3;
  p.lo = Eigen::VectorXd::Constant(1, t0);
  p.hi = Eigen::VectorXd::Constant(1, t1);
  p.residual = [lp](const double*, const PointJets& j, double* r, ResidualJacobian* jac) {
    const double x = j.v[0], y = j.v[1], z = j.v[2];
    r[0] = j.g[0] - lp.sigma * (y - x);
    r[1] = j.g[1] - (x * (lp.rho - z) - y);
    r[2] = j.g[2] - (x * y - lp.beta * z);
    if (jac) {
      for (int c = 0; c < 3; ++c) jac->g(c, c, 0) = 1.0;
      jac->v(0, 0) = lp.sigma;
      jac->v(0, 1) = -lp.sigma;
      jac->v(1, 0) = -(lp.rho - z);
      jac->v(1, 1) = 1.0;
      jac->v(1, 2) = x;
      jac->v(2, 0) = -y;
      jac->v(2, 1) = -x;
      jac->v(2, 2) = lp.beta;
    }
  };
  p.ic_value = [state0](const double*, double* o) {
    for (int c = 0; c < 3; ++c) o[c] = state0[c];
  };
  p.n_res = 200;
  p.n_bc = 0;
  p.n_ic = 1;
  return p;
}

PdeProblem poisson_toy() {
  PdeProblem p;
  p.name = "poisson_toy";
  p.dims = 1;
  p.lo = Eigen::VectorXd::Constant(1, -1.0);
  p.hi = Eigen::VectorXd::Constant(1, 1.0);
  p.residual = [](const double* x, const PointJets& j, double* r, ResidualJacobian* jac) {
    r[0] = j.h[0] + kPi * kPi * std::sin(kPi * x[0]);
    if (jac) jac->h(0, 0, 0) = 1.0;
  };
  p.exact = [](const double* x, double* o) { o[0] = std::sin(kPi * x[0]); };
  p.dirichlet_faces = box_faces(1);
  p.bc_value = [](const double*, double* o) { o[0] = 0.0; };
  p.n_res = 64;
  p.n_bc = 1;
  p.n_ic = 0;
  return p;
}

int lorenz_window_count(double t_end, double dt) {
  if (!(dt > 0.0) || !(t_end > 0.0)) throw std::invalid_argument("window length and horizon must be positive");
  return static_cast<int>(std::llround(t_end / dt));
}

// ------------------------------------------------------------- references

GridData allen_cahn_reference(const AllenCahnSolverOptions& opt) {
  using cd = std::complex<double>;
  const int N = opt.n_x;
  const double h = opt.dt;
  if (N < 8 || !(h > 0.0) || opt.n_t < 2) throw std::invalid_argument("allen_cahn_reference: bad options");
  const double snap = 1.0 / (opt.n_t - 1);
  const long sub = std::lround(snap / h);
  if (std::abs(sub * h - snap) > 1e-12) throw std::invalid_argument("allen_cahn_reference: dt must divide the snapshot spacing");
  const double eps = 1e-4;

  // u_t = L u + N(u), L = eps d_xx + 5, N(u) = -5u^3; period 2 so k = pi n
  std::vector<double> L(N);
  for (int i = 0; i < N; ++i) {
    const int n = i <= N / 2 ? i : i - N;
    const double k = kPi * n;
    L[i] = -eps * k * k + 5.0;
  }
  std::vector<double> E(N), E2(N), Q(N), f1(N), f2(N), f3(N);
  const int M = 32;  // contour points for the phi-functions
  for (int i = 0; i < N; ++i) {
    const double hl = h * L[i];
    E[i] = std::exp(hl);
    E2[i] = std::exp(hl / 2.0);
    cd q = 0, a = 0, b = 0, c = 0;
    for (int j = 1; j <= M; ++j) {
      const cd z = hl + std::exp(cd(0.0, kPi * (j - 0.5) / M));
      const cd ez = std::exp(z);
      q += (std::exp(z / 2.0) - 1.0) / z;
      a += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / (z * z * z);
      b += (2.0 + z + ez * (-2.0 + z)) / (z * z * z);
      c += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / (z * z * z);
    }
    Q[i] = h * (q / double(M)).real();
    f1[i] = h * (a / double(M)).real();
    f2[i] = h * (b / double(M)).real();
    f3[i] = h * (c / double(M)).real();
  }

  Eigen::FFT<double> fft;
  std::vector<cd> phys(N), spec(N), tmp(N);
  auto nonlinear = [&](const std::vector<cd>& s, std::vector<cd>& out) {
    fft.inv(tmp, s);
    for (int i = 0; i < N; ++i) {
      const double u = tmp[i].real();
      tmp[i] = cd(-5.0 * u * u * u, 0.0);
    }
    fft.fwd(out, tmp);
  };

  GridData data;
  data.shape = {N, opt.n_t};
  data.axes.resize(2);
  data.axes[0].resize(N);
  for (int i = 0; i < N; ++i) data.axes[0][i] = -1.0 + 2.0 * i / N;
  data.axes[1].resize(opt.n_t);
  for (int j = 0; j < opt.n_t; ++j) data.axes[1][j] = j * snap;
  data.values.resize(static_cast<Eigen::Index>(N) * opt.n_t);

  for (int i = 0; i < N; ++i) {
    const double x = data.axes[0][i];
    phys[i] = cd(x * x * std::cos(kPi * x), 0.0);
  }
  fft.fwd(spec, phys);
  auto store = [&](int j) {
    fft.inv(tmp, spec);
    for (int i = 0; i < N; ++i) data.values[static_cast<Eigen::Index>(i) * opt.n_t + j] = tmp[i].real();
  };
  store(0);
  std::vector<cd> Nv(N), Na(N), Nb(N), Nc(N), a(N), b(N), c(N);
  for (int j = 1; j < opt.n_t; ++j) {
    for (long s = 0; s < sub; ++s) {
      nonlinear(spec, Nv);
      for (int i = 0; i < N; ++i) a[i] = E2[i] * spec[i] + Q[i] * Nv[i];
      nonlinear(a, Na);
      for (int i = 0; i < N; ++i) b[i] = E2[i] * spec[i] + Q[i] * Na[i];
      nonlinear(b, Nb);
      for (int i = 0; i < N; ++i) c[i] = E2[i] * a[i] + Q[i] * (2.0 * Nb[i] - Nv[i]);
      nonlinear(c, Nc);
      for (int i = 0; i < N; ++i) {
        spec[i] = E[i] * spec[i] + Nv[i] * f1[i] + 2.0 * (Na[i] + Nb[i]) * f2[i] + Nc[i] * f3[i];
      }
    }
    store(j);
  }
  if (!data.values.allFinite()) throw NonFiniteValue("allen_cahn_reference: solution became non-finite", 0.0);
  return data;
}

Eigen::MatrixXd lorenz_reference(const Eigen::Vector3d& state0, double t_end, double dt, const LorenzParams& p) {
  const int steps = static_cast<int>(std::llround(t_end / dt));
  const Eigen::MatrixXd traj =
      integrate_rk4([&](const Eigen::VectorXd& s) -> Eigen::VectorXd { return lorenz_rhs(s, p); }, state0, dt, steps);
  Eigen::MatrixXd out(traj.rows(), 4);
  for (Eigen::Index i = 0; i < traj.rows(); ++i) {
    out(i, 0) = i * dt;
    out.row(i).tail(3) = traj.row(i);
  }
  return out;
}

void write_grid_csv(const std::string& path, const GridData& data) {
  if (data.shape.empty()) throw std::invalid_argument("write_grid_csv: no axes");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  Eigen::Index total = 1;
  for (std::size_t k = 0; k < data.shape.size(); ++k) {
    f << (k ? "," : "") << data.shape[k];
    total *= data.shape[k];
  }
  f << "\n";
  if (total != data.values.size()) throw DimensionMismatch("write_grid_csv: values do not match axis sizes");
  const Eigen::Index last = data.shape.back();
  f << std::setprecision(17);
  for (Eigen::Index i = 0; i < total; ++i) f << data.values[i] << ((i + 1) % last == 0 ? "\n" : ",");
}

GridData read_grid_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " (generate it with the make-reference subcommand)");
  std::string line;
  std::getline(f, line);
  std::vector<Eigen::Index> sizes;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) sizes.push_back(std::stoll(cell));
  }
  Eigen::Index total = 1;
  for (auto s : sizes) total *= s;
  GridData data;
  data.shape = sizes;
  data.values.resize(total);
  Eigen::Index n = 0;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (n >= total) throw std::runtime_error(path + ": more values than the header declares");
      data.values[n++] = std::stod(cell);
    }
  }
  if (n != total) throw std::runtime_error(path + ": fewer values than the header declares");
  return data;
}

}  // namespace fekan
