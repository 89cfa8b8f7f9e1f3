// Homogeneous self-dual interior-point method for
//
//   minimize c'x  s.t.  Ax = b,  Gx + s = h,  s in K,
//
// where K is a product of a nonnegative orthant and second-order cones.
// Nesterov-Todd scaling, Mehrotra predictor-corrector, and a regularized
// quasi-definite KKT system factored by sparse LDL' with iterative refinement.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <limits>
#include <numbers>

#include "equiflex/conic/solver.hpp"
#include "equiflex/error.hpp"

namespace equiflex::conic {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::iteration_limit: return "iteration-limit";
  }
  return "unknown";
}

namespace {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;
using Index = Eigen::Index;

constexpr double kInfD = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Standard form

struct RowMap {
  enum class Kind { dropped, equality, inequality } kind = Kind::dropped;
  Index row = 0;
  double sign = 1.0;  // +1 for <=, -1 for >= (inequality rows only)
};

struct StandardForm {
  Index n = 0;
  SpMat A, G;
  Vec b, h, c;
  Index l = 0;
  std::vector<Index> q;
  std::vector<Index> col_of;       // program var -> column, -1 when fixed
  std::vector<double> fixed_value;  // meaningful when col_of == -1
  std::vector<RowMap> row_map;
  std::vector<double> row_scale;   // per A row / per LP G row
  std::vector<Index> cone_offset;  // per program cone, -1 when dropped
  std::vector<double> cone_scale;
  double obj_scale = 1.0;
  double obj_constant = 0.0;
  bool infeasible = false;
};

struct RowBuilder {
  std::vector<Triplet> trip;
  std::vector<double> rhs;
  Index rows = 0;
};

double inf_norm(const std::vector<std::pair<Index, double>>& row) {
  double m = 0.0;
  for (const auto& [j, v] : row) m = std::max(m, std::abs(v));
  return m;
}

StandardForm build_standard_form(const ConicProgram& prog, const Tolerances& tol) {
  StandardForm sf;
  const auto& vars = prog.variables();
  const std::size_t nv = vars.size();
  sf.col_of.assign(nv, -1);
  sf.fixed_value.assign(nv, 0.0);
  for (std::size_t i = 0; i < nv; ++i) {
    if (vars[i].lower == vars[i].upper) {
      sf.fixed_value[i] = vars[i].lower;
    } else {
      sf.col_of[i] = sf.n++;
    }
  }

  // Objective.
  const auto& obj = prog.objective();
  sf.c = Vec::Zero(sf.n);
  sf.obj_constant = prog.objective_constant();
  for (std::size_t i = 0; i < nv; ++i) {
    if (sf.col_of[i] >= 0) {
      sf.c[sf.col_of[i]] = obj[i];
    } else {
      sf.obj_constant += obj[i] * sf.fixed_value[i];
    }
  }
  sf.obj_scale = std::max(1.0, sf.c.size() ? sf.c.cwiseAbs().maxCoeff() : 0.0);
  sf.c /= sf.obj_scale;

  RowBuilder eq, lp;
  std::vector<double> eq_scale, lp_scale;
  const auto& rows = prog.constraints();
  sf.row_map.resize(rows.size());

  auto substitute = [&](const std::vector<Term>& terms, double& shift) {
    std::vector<std::pair<Index, double>> row;
    for (const auto& t : terms) {
      const Index col = sf.col_of[t.var.id];
      if (col >= 0) {
        row.emplace_back(col, t.coef);
      } else {
        shift += t.coef * sf.fixed_value[t.var.id];
      }
    }
    return row;
  };

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& con = rows[r];
    double shift = 0.0;
    auto row = substitute(con.terms, shift);
    const double rhs = con.rhs - shift;
    if (row.empty()) {
      const double slack = tol.feasibility * std::max(1.0, std::abs(con.rhs));
      const bool ok = con.sense == Sense::equal           ? std::abs(rhs) <= slack
                      : con.sense == Sense::less_equal    ? rhs >= -slack
                                                          : rhs <= slack;
      if (!ok) sf.infeasible = true;
      sf.row_map[r] = {};
      continue;
    }
    const double d = 1.0 / inf_norm(row);
    if (con.sense == Sense::equal) {
      for (const auto& [j, v] : row) eq.trip.emplace_back(int(eq.rows), int(j), v * d);
      eq.rhs.push_back(rhs * d);
      eq_scale.push_back(d);
      sf.row_map[r] = {RowMap::Kind::equality, eq.rows, 1.0};
      ++eq.rows;
    } else {
      const double sign = con.sense == Sense::less_equal ? 1.0 : -1.0;
      for (const auto& [j, v] : row) lp.trip.emplace_back(int(lp.rows), int(j), sign * v * d);
      lp.rhs.push_back(sign * rhs * d);
      lp_scale.push_back(d);
      sf.row_map[r] = {RowMap::Kind::inequality, lp.rows, sign};
      ++lp.rows;
    }
  }

  // Variable boxes.
  for (std::size_t i = 0; i < nv; ++i) {
    const Index col = sf.col_of[i];
    if (col < 0) continue;
    if (std::isfinite(vars[i].upper)) {
      lp.trip.emplace_back(int(lp.rows), int(col), 1.0);
      lp.rhs.push_back(vars[i].upper);
      lp_scale.push_back(1.0);
      ++lp.rows;
    }
    if (std::isfinite(vars[i].lower)) {
      lp.trip.emplace_back(int(lp.rows), int(col), -1.0);
      lp.rhs.push_back(-vars[i].lower);
      lp_scale.push_back(1.0);
      ++lp.rows;
    }
  }
  sf.l = lp.rows;

  // Cones: s = member(x) => G row = -a, h = constant.
  RowBuilder soc;
  const auto& cones = prog.cones();
  sf.cone_offset.assign(cones.size(), -1);
  sf.cone_scale.assign(cones.size(), 1.0);
  for (std::size_t k = 0; k < cones.size(); ++k) {
    const auto& cone = cones[k];
    std::vector<std::vector<std::pair<Index, double>>> mrows;
    std::vector<double> consts;
    for (const auto& m : cone.members) {
      double shift = 0.0;
      mrows.push_back(substitute(m.terms, shift));
      consts.push_back(m.constant + shift);
    }
    if (cone.kind == ConeKind::rotated_second_order) {
      // (u, v, x) -> ((u+v)/sqrt2, (u-v)/sqrt2, x)
      const double r2 = std::numbers::sqrt2 / 2.0;
      std::vector<std::pair<Index, double>> sum_row, diff_row;
      for (const auto& [j, v] : mrows[0]) {
        sum_row.emplace_back(j, r2 * v);
        diff_row.emplace_back(j, r2 * v);
      }
      for (const auto& [j, v] : mrows[1]) {
        sum_row.emplace_back(j, r2 * v);
        diff_row.emplace_back(j, -r2 * v);
      }
      const double cs = r2 * (consts[0] + consts[1]);
      const double cd = r2 * (consts[0] - consts[1]);
      mrows[0] = std::move(sum_row);
      mrows[1] = std::move(diff_row);
      consts[0] = cs;
      consts[1] = cd;
    }
    double scale = 0.0;
    for (const auto& r : mrows) scale = std::max(scale, inf_norm(r));
    if (scale == 0.0) {
      double tail = 0.0;
      for (std::size_t i = 1; i < consts.size(); ++i) tail += consts[i] * consts[i];
      if (consts[0] < std::sqrt(tail) - tol.feasibility) sf.infeasible = true;
      continue;
    }
    const double d = 1.0 / scale;
    sf.cone_offset[k] = sf.l + soc.rows;
    sf.cone_scale[k] = d;
    for (std::size_t i = 0; i < mrows.size(); ++i) {
      for (const auto& [j, v] : mrows[i]) soc.trip.emplace_back(int(soc.rows), int(j), -v * d);
      soc.rhs.push_back(consts[i] * d);
      ++soc.rows;
    }
    sf.q.push_back(Index(mrows.size()));
  }

  const Index m = sf.l + soc.rows;
  std::vector<Triplet> gtrip = std::move(lp.trip);
  for (const auto& t : soc.trip) gtrip.emplace_back(t.row() + int(sf.l), t.col(), t.value());
  sf.A.resize(eq.rows, sf.n);
  sf.A.setFromTriplets(eq.trip.begin(), eq.trip.end());
  sf.G.resize(m, sf.n);
  sf.G.setFromTriplets(gtrip.begin(), gtrip.end());
  sf.b = Eigen::Map<Vec>(eq.rhs.data(), Index(eq.rhs.size()));
  sf.h.resize(m);
  for (Index i = 0; i < sf.l; ++i) sf.h[i] = lp.rhs[i];
  for (Index i = 0; i < soc.rows; ++i) sf.h[sf.l + i] = soc.rhs[i];

  // Per-row scale for dual recovery: equality rows first, then LP rows.
  sf.row_scale = eq_scale;
  sf.row_scale.insert(sf.row_scale.end(), lp_scale.begin(), lp_scale.end());
  return sf;
}

// ---------------------------------------------------------------------------
// Cone algebra

struct ConeLayout {
  Index l = 0;
  std::vector<Index> q;
  std::vector<Index> offset;  // start of each SOC block
  Index m = 0;
  [[nodiscard]] Index degree() const { return l + Index(q.size()); }
};

ConeLayout make_layout(Index l, const std::vector<Index>& q) {
  ConeLayout c;
  c.l = l;
  c.q = q;
  Index off = l;
  for (Index qi : q) {
    c.offset.push_back(off);
    off += qi;
  }
  c.m = off;
  return c;
}

struct SocScaling {
  double eta = 1.0;
  Vec w;  // normalized NT point, w0^2 - ||w1||^2 = 1
};

struct Scaling {
  Vec lp;  // sqrt(s/z)
  std::vector<SocScaling> soc;
  Vec lambda;
};

double soc_residual(const Vec& u, Index off, Index q) {
  const double t = u[off];
  const double n2 = u.segment(off + 1, q - 1).squaredNorm();
  return t * t - n2;
}

// Largest alpha with u + alpha d in K (u interior).
double max_step(const ConeLayout& cl, const Vec& u, const Vec& d) {
  double amax = kInfD;
  for (Index i = 0; i < cl.l; ++i) {
    if (d[i] < 0.0) amax = std::min(amax, -u[i] / d[i]);
  }
  for (std::size_t k = 0; k < cl.q.size(); ++k) {
    const Index off = cl.offset[k];
    const Index q = cl.q[k];
    const double u0 = u[off];
    const double d0 = d[off];
    const auto u1 = u.segment(off + 1, q - 1);
    const auto d1 = d.segment(off + 1, q - 1);
    const double a = d0 * d0 - d1.squaredNorm();
    const double b = u0 * d0 - u1.dot(d1);
    const double c = std::max(u0 * u0 - u1.squaredNorm(), 0.0);
    double step = kInfD;
    if (d0 < 0.0) step = -u0 / d0;
    auto consider = [&](double r) {
      if (r > 0.0) step = std::min(step, r);
    };
    if (a == 0.0) {
      if (b < 0.0) consider(-c / (2.0 * b));
    } else {
      const double disc = b * b - a * c;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double qv = -(b + std::copysign(sq, b));
        if (qv != 0.0) {
          consider(qv / a);
          consider(c / qv);
        }
      }
    }
    amax = std::min(amax, step);
  }
  return amax;
}

// Amount by which u must be shifted along e to enter the cone interior.
double cone_violation(const ConeLayout& cl, const Vec& u) {
  double alpha = -kInfD;
  for (Index i = 0; i < cl.l; ++i) alpha = std::max(alpha, -u[i]);
  for (std::size_t k = 0; k < cl.q.size(); ++k) {
    const Index off = cl.offset[k];
    alpha = std::max(alpha, u.segment(off + 1, cl.q[k] - 1).norm() - u[off]);
  }
  return alpha;
}

void add_identity(const ConeLayout& cl, Vec& u, double t) {
  for (Index i = 0; i < cl.l; ++i) u[i] += t;
  for (Index off : cl.offset) u[off] += t;
}

Vec jordan(const ConeLayout& cl, const Vec& u, const Vec& v) {
  Vec out(cl.m);
  for (Index i = 0; i < cl.l; ++i) out[i] = u[i] * v[i];
  for (std::size_t k = 0; k < cl.q.size(); ++k) {
    const Index off = cl.offset[k];
    const Index q = cl.q[k];
    out[off] = u.segment(off, q).dot(v.segment(off, q));
    out.segment(off + 1, q - 1) = u[off] * v.segment(off + 1, q - 1) + v[off] * u.segment(off + 1, q - 1);
  }
  return out;
}

// Solve lambda o x = v.
Vec jordan_div(const ConeLayout& cl, const Vec& lam, const Vec& v) {
  Vec out(cl.m);
  for (Index i = 0; i < cl.l; ++i) out[i] = v[i] / lam[i];
  for (std::size_t k = 0; k < cl.q.size(); ++k) {
    const Index off = cl.offset[k];
    const Index q = cl.q[k];
    const double l0 = lam[off];
    const auto l1 = lam.segment(off + 1, q - 1);
    const double v0 = v[off];
    const auto v1 = v.segment(off + 1, q - 1);
    const double det = l0 * l0 - l1.squaredNorm();
    const double x0 = (l0 * v0 - l1.dot(v1)) / det;
    out[off] = x0;
    out.segment(off + 1, q - 1) = (v1 - x0 * l1) / l0;
  }
  return out;
}

void apply_w(const ConeLayout& cl, const Scaling& sc, const Vec& v, Vec& out);

Scaling nt_scaling(const ConeLayout& cl, const Vec& s, const Vec& z) {
  Scaling sc;
  sc.lp.resize(cl.l);
  sc.lambda.resize(cl.m);
  for (Index i = 0; i < cl.l; ++i) {
    sc.lp[i] = std::sqrt(s[i] / z[i]);
    sc.lambda[i] = std::sqrt(s[i] * z[i]);
  }
  sc.soc.resize(cl.q.size());
  for (std::size_t k = 0; k < cl.q.size(); ++k) {
    const Index off = cl.offset[k];
    const Index q = cl.q[k];
    const double sres = soc_residual(s, off, q);
    const double zres = soc_residual(z, off, q);
    const double sn = std::sqrt(sres);
    const double zn = std::sqrt(zres);
    const Vec sb = s.segment(off, q) / sn;
    const Vec zb = z.segment(off, q) / zn;
    const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
    Vec w(q);
    w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
    w.tail(q - 1) = (sb.tail(q - 1) - zb.tail(q - 1)) / (2.0 * gamma);
    auto& ss = sc.soc[k];
    ss.eta = std::sqrt(sn / zn);
    ss.w = std::move(w);
  }
  Vec wz;
  apply_w(cl, sc, z, wz);
  sc.lambda.tail(cl.m - cl.l) = wz.tail(cl.m - cl.l);
  return sc;
}

void apply_w(const ConeLayout& cl, const Scaling& sc, const Vec& v, Vec& out) {
  out.resize(cl.m);
  for (Index i = 0; i < cl.l; ++i) out[i] = sc.lp[i] * v[i];
  for (std::size_t k = 0; k < cl.q.size(); ++k) {
    const Index off = cl.offset[k];
    const Index q = cl.q[k];
    const auto& ss = sc.soc[k];
    const double w0 = ss.w[0];
    const auto w1 = ss.w.tail(q - 1);
    const double v0 = v[off];
    const auto v1 = v.segment(off + 1, q - 1);
    const double wv = w1.dot(v1);
    out[off] = ss.eta * (w0 * v0 + wv);
    out.segment(off + 1, q - 1) = ss.eta * (v1 + (v0 + wv / (1.0 + w0)) * w1);
  }
}

void apply_winv(const ConeLayout& cl, const Scaling& sc, const Vec& v, Vec& out) {
  out.resize(cl.m);
  for (Index i = 0; i < cl.l; ++i) out[i] = v[i] / sc.lp[i];
  for (std::size_t k = 0; k < cl.q.size(); ++k) {
    const Index off = cl.offset[k];
    const Index q = cl.q[k];
    const auto& ss = sc.soc[k];
    const double w0 = ss.w[0];
    const auto w1 = ss.w.tail(q - 1);
    const double v0 = v[off];
    const auto v1 = v.segment(off + 1, q - 1);
    const double wv = w1.dot(v1);
    out[off] = (w0 * v0 - wv) / ss.eta;
    out.segment(off + 1, q - 1) = (v1 + (-v0 + wv / (1.0 + w0)) * w1) / ss.eta;
  }
}

void apply_w2(const ConeLayout& cl, const Scaling* sc, const Vec& v, Vec& out) {
  if (sc == nullptr) {
    out = v;
    return;
  }
  Vec tmp;
  apply_w(cl, *sc, v, tmp);
  apply_w(cl, *sc, tmp, out);
}

// ---------------------------------------------------------------------------
// KKT system
//
//   [ dI   A'   G'       ]
//   [ A   -dI   0        ]
//   [ G    0   -W'W - dI ]

class Kkt {
 public:
  Kkt(const StandardForm& sf, const ConeLayout& cl, double delta)
      : sf_(sf), cl_(cl), delta_(delta), n_(sf.n), p_(sf.A.rows()), m_(cl.m) {
    const Index N = n_ + p_ + m_;
    for (Index j = 0; j < n_; ++j) static_.emplace_back(int(j), int(j), delta_);
    for (Index j = 0; j < sf.A.outerSize(); ++j) {
      for (SpMat::InnerIterator it(sf.A, j); it; ++it) {
        static_.emplace_back(int(j), int(n_ + it.row()), it.value());
      }
    }
    for (Index j = 0; j < sf.G.outerSize(); ++j) {
      for (SpMat::InnerIterator it(sf.G, j); it; ++it) {
        static_.emplace_back(int(j), int(n_ + p_ + it.row()), it.value());
      }
    }
    for (Index i = 0; i < p_; ++i) static_.emplace_back(int(n_ + i), int(n_ + i), -delta_);
    K_.resize(N, N);
    assemble(nullptr);
    ldlt_.analyzePattern(K_);
  }

  bool factor(const Scaling* sc) {
    assemble(sc);
    ldlt_.factorize(K_);
    return ldlt_.info() == Eigen::Success;
  }

  // Solve the unregularized system with iterative refinement.
  Vec solve(const Vec& rhs, const Scaling* sc) const {
    Vec x = ldlt_.solve(rhs);
    const double target = 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
    double prev = kInfD;
    for (int it = 0; it < 10; ++it) {
      Vec r = rhs - multiply(x, sc);
      const double err = r.lpNorm<Eigen::Infinity>();
      if (!(err > target) || err >= prev) break;
      prev = err;
      x += ldlt_.solve(r);
    }
    return x;
  }

 private:
  void assemble(const Scaling* sc) {
    std::vector<Triplet> trip = static_;
    const Index z0 = n_ + p_;
    for (Index i = 0; i < cl_.l; ++i) {
      const double w = sc ? sc->lp[i] : 1.0;
      trip.emplace_back(int(z0 + i), int(z0 + i), -(w * w) - delta_);
    }
    for (std::size_t k = 0; k < cl_.q.size(); ++k) {
      const Index off = cl_.offset[k];
      const Index q = cl_.q[k];
      Eigen::MatrixXd W2 = Eigen::MatrixXd::Identity(q, q);
      if (sc != nullptr) {
        const auto& ss = sc->soc[k];
        const double e2 = ss.eta * ss.eta;
        const double w0 = ss.w[0];
        const auto w1 = ss.w.tail(q - 1);
        W2(0, 0) = e2 * (w0 * w0 + w1.squaredNorm());
        W2.block(0, 1, 1, q - 1) = e2 * 2.0 * w0 * w1.transpose();
        W2.block(1, 0, q - 1, 1) = e2 * 2.0 * w0 * w1;
        W2.block(1, 1, q - 1, q - 1) =
            e2 * (Eigen::MatrixXd::Identity(q - 1, q - 1) + 2.0 * w1 * w1.transpose());
      }
      for (Index c = 0; c < q; ++c) {
        for (Index r = 0; r <= c; ++r) {
          const double v = -W2(r, c) - (r == c ? delta_ : 0.0);
          trip.emplace_back(int(z0 + off + r), int(z0 + off + c), v);
        }
      }
    }
    K_.setFromTriplets(trip.begin(), trip.end());
  }

  Vec multiply(const Vec& u, const Scaling* sc) const {
    const auto x = u.head(n_);
    const auto y = u.segment(n_, p_);
    const Vec z = u.tail(m_);
    Vec out(n_ + p_ + m_);
    out.head(n_) = sf_.A.transpose() * y + sf_.G.transpose() * z;
    out.segment(n_, p_) = sf_.A * x;
    Vec w2z;
    apply_w2(cl_, sc, z, w2z);
    out.tail(m_) = sf_.G * x - w2z;
    return out;
  }

  const StandardForm& sf_;
  const ConeLayout& cl_;
  double delta_;
  Index n_, p_, m_;
  std::vector<Triplet> static_;
  SpMat K_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt_;
};

// ---------------------------------------------------------------------------
// Main iteration

struct Iterate {
  Vec x, y, z, s;
  double tau = 1.0, kappa = 1.0;
};

struct Residuals {
  Vec rx, ry, rz;
  double rtau = 0.0;
};

Residuals residuals(const StandardForm& sf, const Iterate& it) {
  Residuals r;
  r.rx = sf.A.transpose() * it.y + sf.G.transpose() * it.z + sf.c * it.tau;
  r.ry = -(sf.A * it.x) + sf.b * it.tau;
  r.rz = -(sf.G * it.x) + sf.h * it.tau - it.s;
  r.rtau = -sf.c.dot(it.x) - sf.b.dot(it.y) - sf.h.dot(it.z) - it.kappa;
  return r;
}

double norm_inf(const Vec& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

struct Outcome {
  SolveStatus status = SolveStatus::iteration_limit;
  Iterate it;
  int iterations = 0;
  double pres = 0.0, dres = 0.0, gap = 0.0, relgap = 0.0, pcost = 0.0, dcost = 0.0;
  bool certificate = false;
};

Outcome run_hsde(const StandardForm& sf, const Tolerances& tol) {
  const ConeLayout cl = make_layout(sf.l, sf.q);
  const Index n = sf.n;
  const Index p = sf.A.rows();
  const Index m = cl.m;
  Kkt kkt(sf, cl, 1e-9);

  Outcome out;
  Iterate& it = out.it;

  // Initial point.
  if (!kkt.factor(nullptr)) return out;
  {
    Vec rhs = Vec::Zero(n + p + m);
    rhs.segment(n, p) = sf.b;
    rhs.tail(m) = sf.h;
    Vec sol = kkt.solve(rhs, nullptr);
    it.x = sol.head(n);
    it.s = -sol.tail(m);
    const double a = cone_violation(cl, it.s);
    if (a >= -1e-8) add_identity(cl, it.s, 1.0 + a);
  }
  {
    Vec rhs = Vec::Zero(n + p + m);
    rhs.head(n) = -sf.c;
    Vec sol = kkt.solve(rhs, nullptr);
    it.y = sol.segment(n, p);
    it.z = sol.tail(m);
    const double a = cone_violation(cl, it.z);
    if (a >= -1e-8) add_identity(cl, it.z, 1.0 + a);
  }
  it.tau = 1.0;
  it.kappa = 1.0;

  const double nb = std::max(1.0, norm_inf(sf.b));
  const double nh = std::max(1.0, norm_inf(sf.h));
  const double nc = std::max(1.0, norm_inf(sf.c));
  const double degree = double(cl.degree()) + 1.0;

  // Best de-homogenized point seen, for a reduced-accuracy answer when the
  // iteration stalls just short of the tolerances.
  Outcome best;
  double best_merit = kInfD;

  int stalls = 0;
  static const bool trace = std::getenv("EQUIFLEX_IPM_TRACE") != nullptr;
  for (int k = 0; k <= tol.max_iterations; ++k) {
    out.iterations = k;
    const Residuals r = residuals(sf, it);

    // Convergence checks on the de-homogenized point.
    out.pcost = sf.c.dot(it.x) / it.tau;
    out.dcost = (-sf.b.dot(it.y) - sf.h.dot(it.z)) / it.tau;
    out.pres = std::max(norm_inf(r.ry) / nb, norm_inf(r.rz) / nh) / it.tau;
    out.dres = norm_inf(r.rx) / nc / it.tau;
    out.gap = it.s.dot(it.z) / (it.tau * it.tau);
    const double denom = std::max(std::abs(out.pcost), std::abs(out.dcost));
    out.relgap = denom > 0.0 ? out.gap / denom : kInfD;
    if (trace) {
      std::fprintf(stderr, "%3d pcost %+.6e dcost %+.6e gap %.2e pres %.2e dres %.2e tau %.2e kap %.2e\n",
                   k, out.pcost, out.dcost, out.gap, out.pres, out.dres, it.tau, it.kappa);
    }
    if (!std::isfinite(out.pres) || !std::isfinite(out.dres)) break;
    if (out.pres <= tol.feasibility && out.dres <= tol.feasibility &&
        (out.gap <= tol.gap || out.relgap <= tol.gap)) {
      out.status = SolveStatus::optimal;
      return out;
    }
    if (it.tau > 1e-8 * std::max(1.0, it.kappa)) {
      const double merit = std::max({out.pres, out.dres, std::min(out.gap, out.relgap)});
      if (merit < best_merit) {
        best_merit = merit;
        best = out;
      }
    }
    const double by_hz = sf.b.dot(it.y) + sf.h.dot(it.z);
    if (trace && by_hz < 0.0) {
      std::fprintf(stderr, "    farkas ratio %.2e\n",
                   norm_inf(Vec(sf.A.transpose() * it.y + sf.G.transpose() * it.z)) / -by_hz);
    }
    if (by_hz < 0.0) {
      const double res = norm_inf(Vec(sf.A.transpose() * it.y + sf.G.transpose() * it.z));
      if (res <= tol.feasibility * -by_hz) {
        out.status = SolveStatus::infeasible;
        out.certificate = true;
        return out;
      }
    }
    const double cx = sf.c.dot(it.x);
    if (cx < 0.0) {
      const double ra = norm_inf(Vec(sf.A * it.x));
      const double rg = norm_inf(Vec(sf.G * it.x + it.s));
      if (ra <= tol.feasibility * -cx && rg <= tol.feasibility * -cx) {
        out.status = SolveStatus::unbounded;
        return out;
      }
    }
    if (k == tol.max_iterations) break;

    const double mu = (it.s.dot(it.z) + it.tau * it.kappa) / degree;
    const Scaling sc = nt_scaling(cl, it.s, it.z);
    if (!kkt.factor(&sc)) {
      if (trace) std::fprintf(stderr, "    factorization failed\n");
      break;
    }

    Vec rhs1(n + p + m);
    rhs1 << -sf.c, sf.b, sf.h;
    const Vec u1 = kkt.solve(rhs1, &sc);
    const double denom_tau = it.kappa / it.tau - sf.c.dot(u1.head(n)) -
                             sf.b.dot(u1.segment(n, p)) - sf.h.dot(u1.tail(m));

    struct Direction {
      Vec dx, dy, dz, ds;
      double dtau = 0.0, dkappa = 0.0;
    };
    auto direction = [&](double sigma, const Vec& ds_rhs, double dk_rhs) {
      Vec wl, lds;
      lds = jordan_div(cl, sc.lambda, ds_rhs);
      apply_w(cl, sc, lds, wl);
      Vec rhs2(n + p + m);
      rhs2 << -(1.0 - sigma) * r.rx, (1.0 - sigma) * r.ry, (1.0 - sigma) * r.rz - wl;
      const Vec u2 = kkt.solve(rhs2, &sc);
      Direction d;
      d.dtau = (-(1.0 - sigma) * r.rtau + dk_rhs / it.tau + sf.c.dot(u2.head(n)) +
                sf.b.dot(u2.segment(n, p)) + sf.h.dot(u2.tail(m))) /
               denom_tau;
      d.dx = u2.head(n) + d.dtau * u1.head(n);
      d.dy = u2.segment(n, p) + d.dtau * u1.segment(n, p);
      d.dz = u2.tail(m) + d.dtau * u1.tail(m);
      Vec w2dz;
      apply_w2(cl, &sc, d.dz, w2dz);
      d.ds = wl - w2dz;
      d.dkappa = (dk_rhs - it.kappa * d.dtau) / it.tau;
      return d;
    };
    auto step_length = [&](const Direction& d) {
      double a = std::min(max_step(cl, it.s, d.ds), max_step(cl, it.z, d.dz));
      if (d.dtau < 0.0) a = std::min(a, -it.tau / d.dtau);
      if (d.dkappa < 0.0) a = std::min(a, -it.kappa / d.dkappa);
      return a;
    };

    // Predictor.
    const Vec lam2 = jordan(cl, sc.lambda, sc.lambda);
    const Direction aff = direction(0.0, -lam2, -it.tau * it.kappa);
    const double alpha_aff = std::min(1.0, step_length(aff));
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), 0.0, 1.0);

    // Corrector.
    Vec ws_a, wz_a;
    apply_winv(cl, sc, aff.ds, ws_a);
    apply_w(cl, sc, aff.dz, wz_a);
    Vec ds_rhs = -lam2 - jordan(cl, ws_a, wz_a);
    add_identity(cl, ds_rhs, sigma * mu);
    const double dk_rhs = -it.tau * it.kappa - aff.dtau * aff.dkappa + sigma * mu;
    const Direction d = direction(sigma, ds_rhs, dk_rhs);
    const double alpha = std::min(1.0, 0.99 * step_length(d));
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      if (trace) std::fprintf(stderr, "    bad step %g\n", alpha);
      break;
    }

    it.x += alpha * d.dx;
    it.y += alpha * d.dy;
    it.z += alpha * d.dz;
    it.s += alpha * d.ds;
    it.tau += alpha * d.dtau;
    it.kappa += alpha * d.dkappa;

    stalls = alpha < 1e-10 ? stalls + 1 : 0;
    if (stalls >= 5) break;
  }
  constexpr double kReducedAccuracy = 1e-6;
  if (best_merit <= kReducedAccuracy) {
    best.status = SolveStatus::optimal;
    return best;
  }
  // The iteration may break down once tau has collapsed; accept a certificate
  // of reduced accuracy in that case.
  const double by_hz = sf.b.dot(it.y) + sf.h.dot(it.z);
  if (by_hz < 0.0 && it.tau < 1e-6 * std::max(1.0, it.kappa)) {
    const double res = norm_inf(Vec(sf.A.transpose() * it.y + sf.G.transpose() * it.z));
    if (res <= 1e-5 * -by_hz) {
      out.status = SolveStatus::infeasible;
      out.certificate = true;
    }
  }
  return out;
}

}  // namespace

ConicSolution solve_relaxation(const ConicProgram& program, const Tolerances& tol) {
  const StandardForm sf = build_standard_form(program, tol);
  const auto& vars = program.variables();
  const auto& rows = program.constraints();
  const auto& cones = program.cones();

  ConicSolution sol;
  sol.primal.assign(vars.size(), 0.0);
  sol.duals.assign(rows.size(), 0.0);
  sol.cone_duals.resize(cones.size());
  for (std::size_t k = 0; k < cones.size(); ++k) sol.cone_duals[k].assign(cones[k].members.size(), 0.0);

  if (sf.infeasible) {
    sol.status = SolveStatus::infeasible;
    return sol;
  }

  Outcome out;
  if (sf.n == 0) {
    // Everything fixed; presolve already verified all rows and cones.
    out.status = SolveStatus::optimal;
    out.it.tau = 1.0;
  } else {
    out = run_hsde(sf, tol);
  }
  sol.status = out.status;
  sol.iterations = out.iterations;
  sol.primal_residual = out.pres;
  sol.dual_residual = out.dres;
  sol.gap = out.relgap;

  const Iterate& it = out.it;
  const double inv_tau = sf.n == 0 ? 1.0 : 1.0 / it.tau;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const Index col = sf.col_of[i];
    sol.primal[i] = col >= 0 ? it.x[col] * inv_tau : sf.fixed_value[i];
  }
  sol.objective_value = program.evaluate_objective(sol.primal);
  sol.dual_objective = sf.n == 0 ? sol.objective_value : out.dcost * sf.obj_scale + sf.obj_constant;

  const bool have_duals = sf.n > 0 && (out.status == SolveStatus::optimal ||
                                       out.status == SolveStatus::infeasible ||
                                       out.status == SolveStatus::iteration_limit);
  if (have_duals) {
    // Optimal: d(obj)/d(rhs). Infeasible: raw Farkas multipliers (no 1/tau).
    const bool farkas = out.status == SolveStatus::infeasible;
    const double f = farkas ? 1.0 : sf.obj_scale * inv_tau;
    std::vector<double> mult(rows.size(), 0.0);
    const Index p = sf.A.rows();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& rm = sf.row_map[r];
      if (rm.kind == RowMap::Kind::equality) {
        mult[r] = -f * sf.row_scale[rm.row] * it.y[rm.row];
      } else if (rm.kind == RowMap::Kind::inequality) {
        mult[r] = -rm.sign * f * sf.row_scale[p + rm.row] * it.z[rm.row];
      }
    }
    if (farkas) {
      sol.certificate = std::move(mult);
    } else {
      sol.duals = std::move(mult);
      for (std::size_t k = 0; k < cones.size(); ++k) {
        const Index off = sf.cone_offset[k];
        if (off < 0) continue;
        for (std::size_t i = 0; i < cones[k].members.size(); ++i) {
          sol.cone_duals[k][i] = f * sf.cone_scale[k] * it.z[off + Index(i)];
        }
      }
    }
  }
  return sol;
}

}  // namespace equiflex::conic
