#pragma once

// Finite-n support certificates for sums of free bounded variables: row
// statistics, circle bounds for the Cauchy transforms, the K-function
// estimates near zero and the resulting interval around [-2 sqrt(v), 2 sqrt(v)].

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "freeprob/errors.hpp"
#include "freeprob/freeconv.hpp"
#include "freeprob/measure.hpp"
#include "freeprob/transform.hpp"
#include "freeprob/version.hpp"

namespace freeprob {

/// Per-group norm bounds and the row sums v_n, T_n.
struct RowStats {
  std::uint64_t k_n = 0;
  std::vector<double> L_values;        ///< one per row group
  std::vector<std::uint64_t> counts;   ///< members in each group
  double L_n = 0.0;
  double v_n = 0.0;
  double T_n = 0.0;
};

inline RowStats row_stats(const RowSpec& row) {
  RowStats s;
  for (const RowGroup& g : row.groups()) {
    const double L = g.measure.norm_bound();
    const double c = static_cast<double>(g.count);
    s.L_values.push_back(L);
    s.counts.push_back(g.count);
    s.k_n += g.count;
    s.L_n = std::max(s.L_n, L);
    s.v_n += c * moments(g.measure, 2).values[1];
    s.T_n += c * (L * L * L);
  }
  return s;
}

/// Circle radius R and lower bound m for |G| on |z| = R, for one group.
struct MemberBounds {
  double R = 0.0;
  double m = std::numeric_limits<double>::infinity();
};

struct CertificateParams {
  std::vector<double> R_values;
  std::vector<double> m_values;
  double R_n = 0.0;
  double m_n = std::numeric_limits<double>::infinity();
  double D_n = 0.0;  ///< sum_i R_i / m_i^2
  double r_n = 0.0;  ///< 4 D_n / v_n^2
  double c = 5.0;    ///< constant of the informational T_n interval
  bool defaults = true;
};

/// Outcome of checking one (R, m) pair against the three circle conditions.
struct ConditionCheck {
  bool ok = true;
  int failed_condition = 0;  ///< 1, 2 or 3 when !ok
  std::string message;
  double min_abs_g = 0.0;
  int winding = 0;
};

struct ConditionOptions {
  std::size_t circle_samples = 256;
  std::size_t winding_samples = 1024;
  double margin = 1e-9;
};

/// Checks R >= L; |G| >= m on |z| = R (sampled, with a relative margin); and
/// that g(z) = G(1/z) has exactly one zero inside |z| < 1/R (argument
/// principle on the circle, which encloses no pole when R >= L).
inline ConditionCheck verify_member_conditions(const AtomicMeasure& mu, const MemberBounds& b,
                                               const ConditionOptions& opt = {}) {
  ConditionCheck out;
  const double L = mu.norm_bound();
  if (!(b.R >= L)) {
    out.ok = false;
    out.failed_condition = 1;
    out.message = "condition 1 (R >= L) fails: R = " + format_double(b.R) + ", L = " + format_double(L);
    return out;
  }
  if (!(b.m > 0.0)) {
    out.ok = false;
    out.failed_condition = 2;
    out.message = "condition 2 needs m > 0";
    return out;
  }
  const auto atoms = mu.atoms();
  for (double t : atoms) {
    if (std::abs(std::abs(t) - b.R) <= 1e-12 * b.R && t != 0.0) {
      out.ok = false;
      out.failed_condition = 2;
      out.message = "condition 2: the circle |z| = R passes through an atom";
      return out;
    }
  }

  double min_g = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < opt.circle_samples; ++j) {
    const double th = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(opt.circle_samples);
    min_g = std::min(min_g, std::abs(cauchy_eval(mu, std::polar(b.R, th))));
  }
  out.min_abs_g = min_g;
  if (!(min_g >= b.m * (1.0 + opt.margin))) {
    out.ok = false;
    out.failed_condition = 2;
    out.message = "condition 2 (|G| >= m on |z| = R) fails: sampled min |G| = " + format_double(min_g) +
                  ", m = " + format_double(b.m);
    return out;
  }

  const auto weights = mu.weights();
  auto g = [&](std::complex<double> z) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) acc += weights[i] * z / (1.0 - atoms[i] * z);
    return acc;
  };
  double turn = 0.0;
  const double rho = 1.0 / b.R;
  std::complex<double> prev = g(std::polar(rho, 0.0));
  for (std::size_t j = 1; j <= opt.winding_samples; ++j) {
    const double th = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(opt.winding_samples);
    const std::complex<double> cur = g(std::polar(rho, th));
    turn += std::arg(cur / prev);
    prev = cur;
  }
  out.winding = static_cast<int>(std::lround(turn / (2.0 * std::numbers::pi)));
  if (out.winding != 1) {
    out.ok = false;
    out.failed_condition = 3;
    out.message = "condition 3 (one zero of g in |z| < 1/R) fails: winding number " + std::to_string(out.winding);
  }
  return out;
}

/// Defaults R = 2L, m = 1/(4L) per group, or verified overrides (one per
/// group). A point-mass group at zero has L = 0 and contributes nothing to D.
inline CertificateParams certificate_params(const RowSpec& row, const RowStats& stats,
                                            const std::optional<std::vector<MemberBounds>>& overrides = std::nullopt,
                                            double c = 5.0) {
  CertificateParams p;
  p.c = c;
  p.defaults = !overrides.has_value();
  const auto groups = row.groups();
  if (overrides && overrides->size() != groups.size())
    throw ValidationError("expected " + std::to_string(groups.size()) + " bound overrides, got " +
                          std::to_string(overrides->size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double L = stats.L_values[g];
    const double cnt = static_cast<double>(stats.counts[g]);
    double R = 0.0;
    double m = std::numeric_limits<double>::infinity();
    double term = 0.0;
    if (overrides) {
      R = (*overrides)[g].R;
      m = (*overrides)[g].m;
      const ConditionCheck chk = verify_member_conditions(groups[g].measure, {R, m});
      if (!chk.ok) throw ValidationError("bound override for group " + std::to_string(g) + " rejected: " + chk.message);
      term = R / (m * m);
    } else if (L > 0.0) {
      R = 2.0 * L;
      m = 0.25 / L;
      // R m^-2 = 32 L^3, written so that D_n is exactly 32 T_n.
      term = 32.0 * (L * L * L);
    }
    p.R_values.push_back(R);
    p.m_values.push_back(m);
    p.R_n = std::max(p.R_n, R);
    p.m_n = std::min(p.m_n, m);
    p.D_n += cnt * term;
  }
  p.r_n = stats.v_n > 0.0 ? 4.0 * p.D_n / (stats.v_n * stats.v_n) : std::numeric_limits<double>::infinity();
  return p;
}

/// Worst observed ratios of the two K-function estimates near zero:
///   |K_n(z) - 1/z - v z| <= D |z|^2,  |K_n'(z) + 1/z^2 - v| <= 2 D |z|.
struct KEstimateReport {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double worst_value_ratio = 0.0;       ///< max lhs/rhs of the value estimate
  double worst_derivative_ratio = 0.0;  ///< max lhs/rhs of the derivative estimate
  double worst_z = 0.0;
};

/// Samples z_j = m_n (j + 1/2) / samples on (0, m_n); for a row of point
/// masses at zero (m_n infinite) the range is (0, 1]. K_n' comes from a central
/// difference of the regular part with step 1e-6 |z|, the pole term -1/z^2
/// being exact.
inline KEstimateReport k_estimate_check(const RowSpec& row, const RowStats& stats, const CertificateParams& params,
                                        std::size_t samples = 64) {
  KEstimateReport rep;
  rep.samples = samples;
  const CompositeK k(row);
  const double top = std::isfinite(params.m_n) ? params.m_n : 1.0;
  const double v = stats.v_n;
  const double D = params.D_n;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t j = 0; j < samples; ++j) {
    const double z = top * (static_cast<double>(j) + 0.5) / static_cast<double>(samples);
    const double r = k.regular(z).value;
    const double h = 1e-6 * z;
    const double dr = (k.regular(z + h).value - k.regular(z - h).value) / (2.0 * h);
    const double lhs3 = std::abs(r - v * z);
    const double rhs3 = D * z * z;
    const double lhs4 = std::abs(dr - v);
    const double rhs4 = 2.0 * D * z;
    // Rounding slack: a few ulps of the cancelled terms, and for the
    // difference quotient the usual eps |R| / h.
    const double slack3 = 64.0 * eps * (std::abs(r) + v * z);
    const double slack4 = 64.0 * eps * (std::abs(r) + v * z) / h + 1e-12 * v;
    if (lhs3 > rhs3 + slack3 || lhs4 > rhs4 + slack4) {
      ++rep.violations;
      rep.worst_z = z;
    }
    const double ratio3 = rhs3 > 0.0 ? lhs3 / rhs3 : (lhs3 > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    const double ratio4 = rhs4 > 0.0 ? lhs4 / rhs4 : (lhs4 > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    if (ratio3 > rep.worst_value_ratio) {
      rep.worst_value_ratio = ratio3;
      if (rep.violations == 0) rep.worst_z = z;
    }
    rep.worst_derivative_ratio = std::max(rep.worst_derivative_ratio, ratio4);
  }
  return rep;
}

struct Certificate {
  std::string row_name;
  RowStats stats;
  CertificateParams params;
  double thm1_ratio = 0.0;   ///< T_n / v_n^{3/2}
  bool thm1_pass = false;    ///< thm1_ratio < 2^-12
  double m_sqrt_v = 0.0;     ///< m_n sqrt(v_n)
  double d_ratio = 0.0;      ///< D_n / v_n^{3/2}
  bool thm2_pass = false;    ///< m_n sqrt(v_n) > 4 and D_n / v_n^{3/2} <= 1/8
  double interval_lo = 0.0;  ///< -(2 sqrt(v_n) + 5 D_n / v_n)
  double interval_hi = 0.0;
  double t_interval_lo = 0.0;  ///< -(2 sqrt(v_n) + c T_n / v_n), informational
  double t_interval_hi = 0.0;
  std::optional<EdgeReport> left;
  std::optional<EdgeReport> right;
  std::string edge_status = "ok";  ///< "ok" or "edge unverified: <reason>"
  bool contained = false;
  KEstimateReport k_estimates;
};

inline constexpr double kThm1Threshold = 1.0 / 4096.0;

/// Row statistics, default circle bounds, hypothesis checks and both edges.
/// Failures of the edge search degrade the certificate instead of throwing.
inline Certificate certify(const RowSpec& row, double c = 5.0,
                           const std::optional<std::vector<MemberBounds>>& overrides = std::nullopt) {
  Certificate cert;
  cert.row_name = row.name();
  cert.stats = row_stats(row);
  cert.params = certificate_params(row, cert.stats, overrides, c);
  const double v = cert.stats.v_n;
  const double sv = std::sqrt(v);
  const auto& p = cert.params;

  if (v > 0.0) {
    cert.thm1_ratio = cert.stats.T_n / (v * sv);
    cert.thm1_pass = cert.thm1_ratio < kThm1Threshold;
    cert.m_sqrt_v = p.m_n * sv;
    cert.d_ratio = p.D_n / (v * sv);
    cert.thm2_pass = cert.m_sqrt_v > 4.0 && cert.d_ratio <= 0.125;
    const double half = 2.0 * sv + 5.0 * p.D_n / v;
    cert.interval_lo = -half;
    cert.interval_hi = half;
    const double t_half = 2.0 * sv + p.c * cert.stats.T_n / v;
    cert.t_interval_lo = -t_half;
    cert.t_interval_hi = t_half;
  } else {
    cert.thm1_ratio = std::numeric_limits<double>::infinity();
    cert.d_ratio = std::numeric_limits<double>::infinity();
  }

  cert.k_estimates = k_estimate_check(row, cert.stats, p);
  try {
    cert.left = support_edge(row, EdgeSide::left);
    cert.right = support_edge(row, EdgeSide::right);
  } catch (const NumericError& e) {
    cert.edge_status = std::string("edge unverified: ") + e.what();
  }
  if (cert.left && cert.right) {
    if (v > 0.0)
      cert.contained = cert.interval_lo < cert.left->edge - cert.left->error_bound &&
                       cert.right->edge + cert.right->error_bound < cert.interval_hi;
    else
      cert.contained = cert.left->edge == 0.0 && cert.right->edge == 0.0;
  }
  return cert;
}

inline void write_certificate_record(std::ostream& os, const Certificate& c) {
  auto b = [](bool x) { return x ? "true" : "false"; };
  const auto& s = c.stats;
  const auto& p = c.params;
  os << "tool_version: " << kToolVersion << '\n'
     << "row: " << c.row_name << '\n'
     << "k_n: " << s.k_n << '\n'
     << "L_n: " << format_double(s.L_n) << '\n'
     << "v_n: " << format_double(s.v_n) << '\n'
     << "T_n: " << format_double(s.T_n) << '\n'
     << "params: " << (p.defaults ? "default" : "override") << '\n'
     << "R_n: " << format_double(p.R_n) << '\n'
     << "m_n: " << format_double(p.m_n) << '\n'
     << "D_n: " << format_double(p.D_n) << '\n'
     << "r_n: " << format_double(p.r_n) << '\n'
     << "c: " << format_double(p.c) << '\n'
     << "thm1_ratio: " << format_double(c.thm1_ratio) << '\n'
     << "thm1_pass: " << b(c.thm1_pass) << '\n'
     << "thm2_m_sqrt_v: " << format_double(c.m_sqrt_v) << '\n'
     << "thm2_d_ratio: " << format_double(c.d_ratio) << '\n'
     << "thm2_pass: " << b(c.thm2_pass) << '\n'
     << "hypotheses: finite-n\n"
     << "interval_lo: " << format_double(c.interval_lo) << '\n'
     << "interval_hi: " << format_double(c.interval_hi) << '\n'
     << "t_interval_lo: " << format_double(c.t_interval_lo) << '\n'
     << "t_interval_hi: " << format_double(c.t_interval_hi) << '\n';
  if (c.left && c.right) {
    os << "edge_left: " << format_double(c.left->edge) << '\n'
       << "edge_left_error: " << format_double(c.left->error_bound) << '\n'
       << "edge_left_mode: " << to_string(c.left->mode) << '\n'
       << "edge_right: " << format_double(c.right->edge) << '\n'
       << "edge_right_error: " << format_double(c.right->error_bound) << '\n'
       << "edge_right_mode: " << to_string(c.right->mode) << '\n';
  }
  os << "edge_status: " << c.edge_status << '\n'
     << "contained: " << b(c.contained) << '\n'
     << "k_estimate_violations: " << c.k_estimates.violations << '\n'
     << "k_estimate_worst_value_ratio: " << format_double(c.k_estimates.worst_value_ratio) << '\n'
     << "k_estimate_worst_derivative_ratio: " << format_double(c.k_estimates.worst_derivative_ratio) << '\n';
}

}  // namespace freeprob
