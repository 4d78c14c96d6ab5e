#pragma once

// Free additive convolution of a row of measures through K-function addition.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>

#include "freeprob/errors.hpp"
#include "freeprob/measure.hpp"
#include "freeprob/series.hpp"
#include "freeprob/transform.hpp"

namespace freeprob {

/// `count` free copies of one measure. When the measure was built as a
/// dilation of a base measure the pair is kept so K can be evaluated through
/// K_{aX}(w) = a K_X(a w).
struct RowGroup {
  struct Dilation {
    AtomicMeasure base;
    double scale;
  };

  AtomicMeasure measure;
  std::uint64_t count = 1;
  std::optional<Dilation> dilation;
};

/// One row X_{n,1..k_n} of a triangular array. Members must be centered.
class RowSpec {
 public:
  static constexpr double kCenterTolerance = 1e-12;

  RowSpec(std::vector<RowGroup> groups, std::string name = "row") : groups_(std::move(groups)), name_(std::move(name)) {
    if (groups_.empty()) throw ValidationError("row needs at least one member");
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      const RowGroup& grp = groups_[g];
      if (grp.count == 0) throw ValidationError("row group " + std::to_string(g) + " has zero members");
      const double m1 = mean(grp.measure);
      if (std::abs(m1) > kCenterTolerance * std::max(grp.measure.norm_bound(), std::numeric_limits<double>::min()))
        throw ValidationError("row member " + std::to_string(g) + " is not centered (mean " + format_double(m1) + ")");
    }
  }

  /// k copies of base dilated by scale.
  static RowSpec identical(const AtomicMeasure& base, std::uint64_t count, double scale = 1.0,
                           std::string name = "row") {
    RowGroup g{dilate(base, scale), count, RowGroup::Dilation{base, scale}};
    return RowSpec({std::move(g)}, std::move(name));
  }

  /// Members listed one by one; exactly equal measures are grouped.
  static RowSpec from_members(std::span<const AtomicMeasure> members, std::string name = "row") {
    std::vector<RowGroup> groups;
    for (const AtomicMeasure& m : members) {
      auto it = std::find_if(groups.begin(), groups.end(), [&](const RowGroup& g) { return g.measure == m; });
      if (it != groups.end()) ++it->count;
      else groups.push_back(RowGroup{m, 1, std::nullopt});
    }
    return RowSpec(std::move(groups), std::move(name));
  }

  [[nodiscard]] std::span<const RowGroup> groups() const noexcept { return groups_; }
  [[nodiscard]] const std::string& name() const noexcept { return name_; }

  [[nodiscard]] std::uint64_t size() const noexcept {
    std::uint64_t k = 0;
    for (const RowGroup& g : groups_) k += g.count;
    return k;
  }

  /// v_n, the total variance.
  [[nodiscard]] double total_variance() const {
    double v = 0.0;
    for (const RowGroup& g : groups_) v += static_cast<double>(g.count) * moments(g.measure, 2).values[1];
    return v;
  }

  [[nodiscard]] double max_norm_bound() const noexcept {
    double L = 0.0;
    for (const RowGroup& g : groups_) L = std::max(L, g.measure.norm_bound());
    return L;
  }

  /// The row of the negated members; its right edge is minus our left edge.
  [[nodiscard]] RowSpec reflected() const {
    std::vector<RowGroup> out;
    for (const RowGroup& g : groups_) {
      RowGroup r{reflect(g.measure), g.count, std::nullopt};
      if (g.dilation) r.dilation = RowGroup::Dilation{g.dilation->base, -g.dilation->scale};
      out.push_back(std::move(r));
    }
    return RowSpec(std::move(out), name_);
  }

  [[nodiscard]] RowSpec dilated(double alpha) const {
    std::vector<RowGroup> out;
    for (const RowGroup& g : groups_) {
      RowGroup r{dilate(g.measure, alpha), g.count, std::nullopt};
      if (g.dilation) r.dilation = RowGroup::Dilation{g.dilation->base, alpha * g.dilation->scale};
      out.push_back(std::move(r));
    }
    return RowSpec(std::move(out), name_);
  }

 private:
  std::vector<RowGroup> groups_;
  std::string name_;
};

/// Sum of K-series minus (n - 1)/u: the pole stays 1 and cumulants add.
inline KSeries k_add(std::span<const KSeries> ks) {
  if (ks.empty()) throw ValidationError("k_add needs at least one K-series");
  KSeries out;
  out.kappa.assign(ks.front().order(), 0.0);
  for (const KSeries& k : ks) {
    if (k.order() != out.order()) throw ValidationError("k_add: K-series orders differ");
    for (std::size_t j = 0; j < k.order(); ++j) out.kappa[j] += k.kappa[j];
  }
  return out;
}

/// K_n(w) = sum_i K_{n,i}(w) - (k_n - 1)/w, evaluated as 1/w + sum_i R_{n,i}(w)
/// so the (k_n - 1)/w cancellation never happens in floating point.
class CompositeK {
 public:
  enum class Path { grouped, dilation };

  explicit CompositeK(RowSpec row, Path path = Path::grouped) : row_(std::move(row)), path_(path) {}

  [[nodiscard]] RValue regular(double w) const {
    RValue acc;
    for (const RowGroup& g : row_.groups()) {
      const double c = static_cast<double>(g.count);
      RValue r;
      if (path_ == Path::dilation && g.dilation) {
        const double a = g.dilation->scale;
        const RValue base = r_eval(g.dilation->base, a * w);
        r = {a * base.value, a * a * base.derivative};
      } else {
        r = r_eval(g.measure, w);
      }
      acc.value += c * r.value;
      acc.derivative += c * r.derivative;
    }
    return acc;
  }

  [[nodiscard]] double operator()(double w) const { return 1.0 / w + regular(w).value; }
  [[nodiscard]] double derivative(double w) const { return -1.0 / (w * w) + regular(w).derivative; }

  /// w^2 K'(w): same sign as K', of order one near the critical point.
  [[nodiscard]] double scaled_derivative(double w) const { return w * w * regular(w).derivative - 1.0; }

  [[nodiscard]] const RowSpec& row() const noexcept { return row_; }

 private:
  RowSpec row_;
  Path path_;
};

inline double composite_k_eval(const RowSpec& row, double w) {
  if (w == 0.0 || !std::isfinite(w)) throw ValidationError("composite K needs a finite nonzero argument");
  return CompositeK(row)(w);
}

/// Literal sum of member K-functions minus (k_n - 1)/w, one member at a time.
/// Only for small rows; kept to check the grouped and dilation paths.
inline double composite_k_eval_members(const RowSpec& row, double w) {
  if (row.size() > 1'000'000) throw ValidationError("member-by-member evaluation limited to 1e6 members");
  double acc = 0.0;
  for (const RowGroup& g : row.groups())
    for (std::uint64_t i = 0; i < g.count; ++i) acc += w > 0 ? k_eval(g.measure, w) : k_eval_left(g.measure, w);
  return acc - static_cast<double>(row.size() - 1) / w;
}

/// K_n through the dilation identity for groups that carry one.
inline double composite_k_eval_dilation(const RowSpec& row, double w) {
  return CompositeK(row, CompositeK::Path::dilation)(w);
}

enum class EdgeSide { right, left };
enum class EdgeMode { critical_point, hard_edge, grid_fallback };

inline const char* to_string(EdgeSide s) { return s == EdgeSide::right ? "right" : "left"; }
inline const char* to_string(EdgeMode m) {
  switch (m) {
    case EdgeMode::critical_point: return "critical_point";
    case EdgeMode::hard_edge: return "hard_edge";
    case EdgeMode::grid_fallback: return "grid_fallback";
  }
  return "unknown";
}

struct EdgeReport {
  EdgeSide side = EdgeSide::right;
  double edge = 0.0;
  double error_bound = 0.0;
  EdgeMode mode = EdgeMode::critical_point;
  double w_star = 0.0;        ///< critical point (or last scanned w); signed like the side
  bool certified_start = false;  ///< search began at 1/sqrt(v_n) - r_n
};

inline void write_edge_record(std::ostream& os, const EdgeReport& r) {
  os << "side: " << to_string(r.side) << '\n'
     << "edge: " << format_double(r.edge) << '\n'
     << "error_bound: " << format_double(r.error_bound) << '\n'
     << "mode: " << to_string(r.mode) << '\n'
     << "w_star: " << format_double(r.w_star) << '\n';
}

struct EdgeOptions {
  double grow = 1.5;              ///< geometric step of the bracketing march
  std::size_t check_samples = 64; ///< derivative-sign samples for the unimodality check
  std::size_t fallback_points = 4096;
  double w_range = 1e6;           ///< scan w in [1/w_range, w_range] / sqrt(v_n)
};

namespace detail {

struct CriticalPointSearch {
  double w_star = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

inline CriticalPointSearch refine_critical_point(const CompositeK& k, double lo, double hi) {
  auto f = [&](double w) { return k.scaled_derivative(w); };
  auto tol = [](double a, double b) { return std::abs(b - a) <= 4e-16 * std::max(std::abs(a), std::abs(b)); };
  std::uintmax_t iters = 200;
  const double flo = f(lo);
  const double fhi = f(hi);
  if (fhi == 0.0) return {hi, hi, hi};
  try {
    const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
    const double fa = std::abs(f(a));
    const double fb = std::abs(f(b));
    return {fa <= fb ? a : b, a, b};
  } catch (const std::exception& e) {
    throw NumericError(std::string("critical point refinement failed: ") + e.what());
  }
}

// Certified starting point from the critical-point exclusion radius, when the
// finite-n hypotheses hold with default bounds R = 2L, m = 1/(4L).
inline std::optional<double> certified_start(const RowSpec& row) {
  const double v = row.total_variance();
  const double L = row.max_norm_bound();
  if (!(v > 0.0) || !(L > 0.0)) return std::nullopt;
  double d = 0.0;
  for (const RowGroup& g : row.groups()) {
    const double Li = g.measure.norm_bound();
    d += static_cast<double>(g.count) * 32.0 * Li * Li * Li;
  }
  const double m = 0.25 / L;
  const double sv = std::sqrt(v);
  if (!(m * sv > 4.0) || !(d / (v * sv) <= 0.125)) return std::nullopt;
  const double r = 4.0 * d / (v * v);
  if (r >= 1.0 / sv) return std::nullopt;
  return 1.0 / sv - r;
}

// K_n decreasing up to w_top: the infimum is the limit at infinity, which is
// the sum of the members' largest atoms since each K_i(w) tends to its largest
// atom. The distance to K_n(w_top) is reported as the bracket width.
inline EdgeReport hard_edge(const CompositeK& k, double w_top) {
  EdgeReport rep;
  rep.mode = EdgeMode::hard_edge;
  rep.w_star = w_top;
  double limit = 0.0;
  for (const RowGroup& g : k.row().groups()) limit += static_cast<double>(g.count) * g.measure.max_atom();
  rep.edge = limit;
  rep.error_bound = std::abs(k(w_top) - limit);
  return rep;
}

inline EdgeReport right_edge(const RowSpec& row, const EdgeOptions& opt) {
  EdgeReport rep;
  rep.side = EdgeSide::right;
  if (row.size() == 1) {
    // K of a single atomic measure decreases to its largest atom.
    rep.edge = row.groups().front().measure.max_atom();
    rep.mode = EdgeMode::hard_edge;
    rep.w_star = std::numeric_limits<double>::infinity();
    return rep;
  }
  const double v = row.total_variance();
  if (!(v > 0.0)) {
    rep.edge = 0.0;
    rep.mode = EdgeMode::hard_edge;
    rep.w_star = std::numeric_limits<double>::infinity();
    return rep;
  }

  const CompositeK k(row);
  const double unit = 1.0 / std::sqrt(v);
  const double w_min = unit / opt.w_range;
  const double w_max = unit * opt.w_range;

  double w_lo = 0.5 * unit;
  if (const auto start = certified_start(row); start && k.scaled_derivative(*start) < 0.0) {
    w_lo = *start;
    rep.certified_start = true;
  } else {
    while (k.scaled_derivative(w_lo) >= 0.0 && w_lo > w_min) w_lo *= 0.5;
  }

  std::optional<std::pair<double, double>> bracket;
  double w = w_lo;
  while (w < w_max) {
    const double next = std::min(w * opt.grow, w_max);
    if (k.scaled_derivative(next) >= 0.0) {
      bracket = std::pair{w, next};
      break;
    }
    w = next;
  }

  // Sign samples on a log grid over the scanned range: more than one change, or
  // a nonnegative sample before the bracket, means the march is not trustworthy.
  const double scan_top = bracket ? std::min(w_max, 8.0 * bracket->second) : w_max;
  int changes = 0;
  bool early_positive = false;
  {
    double prev_sign = -1.0;
    for (std::size_t i = 0; i < opt.check_samples; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(opt.check_samples - 1);
      const double ws = w_lo * std::pow(scan_top / w_lo, t);
      const double s = k.scaled_derivative(ws) >= 0.0 ? 1.0 : -1.0;
      if (s != prev_sign) ++changes;
      if (s > 0.0 && bracket && ws < bracket->first) early_positive = true;
      prev_sign = s;
    }
  }

  if (changes <= 1 && !early_positive) {
    if (!bracket) return hard_edge(k, w_max);
    const CriticalPointSearch cp = refine_critical_point(k, bracket->first, bracket->second);
    rep.mode = EdgeMode::critical_point;
    rep.w_star = cp.w_star;
    rep.edge = k(cp.w_star);
    rep.error_bound = std::max(std::abs(k(cp.lo) - rep.edge), std::abs(k(cp.hi) - rep.edge)) +
                      8.0 * std::numeric_limits<double>::epsilon() * std::abs(rep.edge);
    return rep;
  }

  // Fine log-grid scan for the first sign change of K'.
  rep.mode = EdgeMode::grid_fallback;
  const std::size_t n = opt.fallback_points;
  double prev_w = w_min;
  for (std::size_t i = 1; i < n; ++i) {
    const double ws = w_min * std::pow(w_max / w_min, static_cast<double>(i) / static_cast<double>(n - 1));
    if (k.scaled_derivative(ws) >= 0.0 && k.scaled_derivative(prev_w) < 0.0) {
      const CriticalPointSearch cp = refine_critical_point(k, prev_w, ws);
      rep.w_star = cp.w_star;
      rep.edge = k(cp.w_star);
      rep.error_bound = std::max(std::abs(k(prev_w) - rep.edge), std::abs(k(ws) - rep.edge));
      return rep;
    }
    prev_w = ws;
  }
  EdgeReport hard = hard_edge(k, w_max);
  hard.mode = EdgeMode::grid_fallback;
  return hard;
}

}  // namespace detail

/// Support edge of the free convolution of the row.
///
/// The right edge is K_n(w*) at the first critical point w* > 0 of K_n, which
/// equals inf_{w>0} K_n(w) when K_n is unimodal. Without a critical point the
/// edge is hard and reported as the limit of K_n at the top of the scan. The
/// left edge is minus the right edge of the reflected row.
inline EdgeReport support_edge(const RowSpec& row, EdgeSide side, const EdgeOptions& opt = {}) {
  if (side == EdgeSide::right) return detail::right_edge(row, opt);
  EdgeReport rep = detail::right_edge(row.reflected(), opt);
  rep.side = EdgeSide::left;
  rep.edge = 0.0 - rep.edge;
  rep.w_star = -rep.w_star;
  return rep;
}

/// Edge of a truncated K-series: K(w*) at the first zero of K' in (0, w_max).
inline double support_edge_from_series(const KSeries& k, double w_max) {
  auto phi = [&](double w) { return w * w * k.derivative(w); };
  double w = w_max * 1e-6;
  while (w < w_max) {
    const double next = std::min(w * 1.5, w_max);
    if (phi(next) >= 0.0) {
      auto tol = [](double a, double b) { return std::abs(b - a) <= 4e-16 * std::max(std::abs(a), std::abs(b)); };
      std::uintmax_t iters = 200;
      const auto [a, b] = boost::math::tools::toms748_solve(phi, w, next, tol, iters);
      return k.value(0.5 * (a + b));
    }
    w = next;
  }
  throw NumericError("K-series has no critical point below w_max");
}

/// An atom of the convolution: location and mass.
struct ConvolutionAtom {
  double location;
  double mass;
};

/// Atoms of the free convolution: a point sum_i a_i carries mass
/// sum_i mu_i{a_i} - (k_n - 1) whenever that is positive. At most one member
/// can sit off its heaviest atom, so the candidates are enumerated directly.
inline std::vector<ConvolutionAtom> convolution_atoms(const RowSpec& row) {
  struct Heaviest {
    std::size_t index;
    double weight;
  };
  std::vector<Heaviest> heaviest;
  double base_location = 0.0;
  double deficit = 0.0;
  for (const RowGroup& g : row.groups()) {
    const auto w = g.measure.weights();
    const auto it = std::max_element(w.begin(), w.end());
    const std::size_t idx = static_cast<std::size_t>(it - w.begin());
    heaviest.push_back({idx, *it});
    base_location += static_cast<double>(g.count) * g.measure.atoms()[idx];
    deficit += static_cast<double>(g.count) * (1.0 - *it);
  }
  std::vector<ConvolutionAtom> out;
  if (deficit < 1.0) out.push_back({base_location, 1.0 - deficit});
  for (std::size_t gi = 0; gi < heaviest.size(); ++gi) {
    const RowGroup& g = row.groups()[gi];
    const auto atoms = g.measure.atoms();
    const auto weights = g.measure.weights();
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      if (a == heaviest[gi].index) continue;
      const double d = deficit - (1.0 - heaviest[gi].weight) + (1.0 - weights[a]);
      if (d < 1.0) out.push_back({base_location - atoms[heaviest[gi].index] + atoms[a], 1.0 - d});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.location < y.location; });
  return out;
}

struct ConvolutionDensityOptions {
  bool continuation = true;  ///< seed each grid point from its left neighbour
  unsigned threads = 1;      ///< used only without continuation
  double atom_flag_distance = 1e-6;
  double quality_tolerance = 1e-3;
};

namespace detail {

// Cauchy transform of the row at z in the upper half plane through
// subordination: unknowns x_g (one per group) and f = 1/G_n(z) with
//   F_g(x_g) = f,   sum_g c_g x_g - (k_n - 1) f = z,
// where F_g = 1/G_g. This is K_n(1/f) = z written without evaluating K on
// complex arguments. Newton on this bordered system costs O(groups).
class SubordinationSolver {
 public:
  explicit SubordinationSolver(const RowSpec& row) : row_(row) {
    double span = 0.0;
    for (const RowGroup& g : row.groups()) {
      counts_.push_back(static_cast<double>(g.count));
      span += static_cast<double>(g.count) * g.measure.norm_bound();
    }
    k_ = static_cast<double>(row.size());
    start_height_ = 4.0 * (span + std::sqrt(row.total_variance()) + 1.0);
  }

  struct State {
    std::vector<complex> x;
    complex f;
  };

  [[nodiscard]] State seed(complex z) const { return {std::vector<complex>(counts_.size(), z), z}; }

  [[nodiscard]] std::optional<State> newton(complex z, State s) const {
    const std::size_t n = counts_.size();
    std::vector<complex> r(n);
    std::vector<complex> dF(n);
    double res = residual(z, s, r, dF);
    for (int iter = 0; iter < 80; ++iter) {
      if (res <= 1e-14) return s;
      complex r_last = last_residual(z, s);
      complex denom = -(k_ - 1.0);
      complex rhs = -r_last;
      for (std::size_t g = 0; g < n; ++g) {
        denom += counts_[g] / dF[g];
        rhs += counts_[g] * r[g] / dF[g];
      }
      const complex df = rhs / denom;
      std::vector<complex> dx(n);
      for (std::size_t g = 0; g < n; ++g) dx[g] = (-r[g] + df) / dF[g];

      double step = 1.0;
      bool accepted = false;
      for (int half = 0; half < 40; ++half, step *= 0.5) {
        State t = s;
        t.f += step * df;
        bool valid = t.f.imag() > 0.0;
        for (std::size_t g = 0; g < n && valid; ++g) {
          t.x[g] += step * dx[g];
          valid = t.x[g].imag() > 0.0;
        }
        if (!valid) continue;
        std::vector<complex> rt(n);
        std::vector<complex> dFt(n);
        const double res_t = residual(z, t, rt, dFt);
        if (res_t < res || res_t <= 1e-14) {
          s = std::move(t);
          r = std::move(rt);
          dF = std::move(dFt);
          res = res_t;
          accepted = true;
          break;
        }
      }
      if (!accepted) return res <= 1e-11 ? std::optional<State>(s) : std::nullopt;
    }
    return res <= 1e-11 ? std::optional<State>(s) : std::nullopt;
  }

  /// Solve at z by lowering the imaginary part from far above, where the
  /// seed x_g = f = z is accurate, down to Im z.
  [[nodiscard]] std::optional<State> homotopy(complex z) const {
    const double target = z.imag();
    double height = std::max(start_height_, target);
    std::optional<State> s = seed(complex(z.real(), height));
    s = newton(complex(z.real(), height), *s);
    while (s && height > target) {
      height = std::max(target, 0.5 * height);
      s = newton(complex(z.real(), height), *s);
    }
    return s;
  }

  [[nodiscard]] static complex cauchy(const State& s) { return 1.0 / s.f; }

 private:
  // Max of the relative residuals of the bordered system; also returns the
  // group residuals r_g = F_g(x_g) - f and derivatives F_g'(x_g).
  double residual(complex z, const State& s, std::vector<complex>& r, std::vector<complex>& dF) const {
    double worst = 0.0;
    for (std::size_t g = 0; g < counts_.size(); ++g) {
      const AtomicMeasure& mu = row_.groups()[g].measure;
      complex G = 0.0;
      complex dG = 0.0;
      const auto atoms = mu.atoms();
      const auto weights = mu.weights();
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        const complex inv = 1.0 / (s.x[g] - atoms[i]);
        G += weights[i] * inv;
        dG -= weights[i] * inv * inv;
      }
      const complex F = 1.0 / G;
      r[g] = F - s.f;
      dF[g] = -dG * F * F;
      worst = std::max(worst, std::abs(r[g]) / std::max(1.0, std::abs(s.f)));
    }
    double scale = std::abs(z) + (k_ - 1.0) * std::abs(s.f);
    for (std::size_t g = 0; g < counts_.size(); ++g) scale += counts_[g] * std::abs(s.x[g]);
    worst = std::max(worst, std::abs(last_residual(z, s)) / std::max(1.0, scale));
    return worst;
  }

  complex last_residual(complex z, const State& s) const {
    complex acc = -(k_ - 1.0) * s.f - z;
    for (std::size_t g = 0; g < counts_.size(); ++g) acc += counts_[g] * s.x[g];
    return acc;
  }

  const RowSpec& row_;
  std::vector<double> counts_;
  double k_ = 1.0;
  double start_height_ = 1.0;
};

}  // namespace detail

/// G_n(z) for Im z > 0, solved from scratch (no continuation).
inline complex convolution_cauchy(const RowSpec& row, complex z) {
  if (!(z.imag() > 0.0)) throw ValidationError("convolution_cauchy needs Im z > 0");
  const detail::SubordinationSolver solver(row);
  const auto s = solver.homotopy(z);
  if (!s) throw NumericError("subordination solve failed");
  return detail::SubordinationSolver::cauchy(*s);
}

/// Density of the row's free convolution on the grid xs.
///
/// For each eps, G_n(x + i eps) is solved along the grid, each point seeded by
/// its left neighbour; a failed or invalid solve restarts from the far-field
/// seed 1/(x + i eps) and descends in Im z. The eps limit follows the
/// stieltjes_density rules. Points within atom_flag_distance of an atom of
/// the convolution are flagged near_atom.
inline DensityGrid convolution_density(const RowSpec& row, const std::vector<double>& xs,
                                       const std::vector<double>& eps_sequence,
                                       const ConvolutionDensityOptions& opt = {}) {
  detail::check_eps_sequence(eps_sequence);
  const detail::SubordinationSolver solver(row);
  const std::size_t ne = eps_sequence.size();
  std::vector<std::vector<double>> phi(xs.size(), std::vector<double>(ne, 0.0));
  std::vector<bool> failed(xs.size(), false);

  auto solve_point = [&](std::size_t i, std::size_t j, std::optional<detail::SubordinationSolver::State>& prev) {
    const complex z(xs[i], eps_sequence[j]);
    std::optional<detail::SubordinationSolver::State> s;
    if (prev) s = solver.newton(z, *prev);
    if (!s) s = solver.homotopy(z);
    if (!s) {
      failed[i] = true;
      prev.reset();
      return;
    }
    phi[i][j] = -detail::SubordinationSolver::cauchy(*s).imag() / std::numbers::pi;
    prev = std::move(s);
  };

  if (opt.continuation || opt.threads <= 1) {
    for (std::size_t j = 0; j < ne; ++j) {
      std::optional<detail::SubordinationSolver::State> prev;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!opt.continuation) prev.reset();
        solve_point(i, j, prev);
      }
    }
  } else {
    std::vector<std::thread> pool;
    const unsigned nt = opt.threads;
    for (unsigned t = 0; t < nt; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < xs.size(); i += nt)
          for (std::size_t j = 0; j < ne; ++j) {
            std::optional<detail::SubordinationSolver::State> none;
            solve_point(i, j, none);
          }
      });
    }
    for (auto& th : pool) th.join();
  }

  const std::vector<ConvolutionAtom> atoms = convolution_atoms(row);
  DensityGrid grid;
  grid.xs = xs;
  grid.epsilons = eps_sequence;
  grid.values.resize(xs.size());
  grid.quality.resize(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (failed[i]) {
      grid.values[i] = 0.0;
      grid.quality[i] = PointQuality::solver_failed;
      continue;
    }
    std::tie(grid.values[i], grid.quality[i]) =
        detail::extrapolate_density(eps_sequence, phi[i], opt.quality_tolerance);
    for (const ConvolutionAtom& a : atoms)
      if (std::abs(xs[i] - a.location) <= opt.atom_flag_distance) grid.quality[i] = PointQuality::near_atom;
  }
  return grid;
}

}  // namespace freeprob
