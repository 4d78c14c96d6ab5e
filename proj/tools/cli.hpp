#pragma once

// Command implementations of the freeprob tool. Each command renders its whole
// output into memory first and then writes it in one piece (to a file through
// a temporary and a rename), so a failed run leaves no partial output.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "freeprob/errors.hpp"
#include "freeprob/freeconv.hpp"
#include "freeprob/matrix_oracle.hpp"
#include "freeprob/measure.hpp"
#include "freeprob/rowfile.hpp"
#include "freeprob/superconv.hpp"
#include "freeprob/transform.hpp"
#include "freeprob/version.hpp"

namespace freeprob::cli {

enum ExitCode : int { kOk = 0, kParse = 2, kNumeric = 3, kHypothesis = 4 };

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_atomically(const std::string& path, const std::string& text) {
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

inline void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) out << text << std::flush;
  else write_atomically(out_path, text);
}

inline RowSpec load_row(const std::string& path) { return build_row(parse_row_file(read_text(path))); }

inline std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ValidationError("bad number '" + item + "' in list");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size()) throw ValidationError("bad number '" + item + "' in list");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("empty number list");
  return out;
}

struct EdgeArgs {
  std::string file;
  std::string side = "both";
  double tol = 1e-8;
  std::string out;
};

inline int cmd_edge(const EdgeArgs& a, std::ostream& out, std::ostream& err) {
  const RowSpec row = load_row(a.file);
  std::vector<EdgeSide> sides;
  if (a.side == "right" || a.side == "both") sides.push_back(EdgeSide::right);
  if (a.side == "left" || a.side == "both") sides.insert(sides.begin(), EdgeSide::left);
  if (sides.empty()) throw ValidationError("--side must be right, left or both");
  std::ostringstream os;
  os << "row: " << row.name() << '\n';
  int code = kOk;
  for (EdgeSide s : sides) {
    const EdgeReport r = support_edge(row, s);
    write_edge_record(os, r);
    if (!(r.error_bound <= a.tol)) {
      err << "error: " << to_string(s) << " edge error bound " << format_double(r.error_bound)
          << " exceeds --tol " << format_double(a.tol) << '\n';
      code = kNumeric;
    }
  }
  if (code == kOk) emit(os.str(), a.out, out);
  return code;
}

struct CertifyArgs {
  std::string file;
  double c = 5.0;
  bool json = false;
  bool strict = false;
  std::string out;
};

inline nlohmann::ordered_json certificate_json(const Certificate& c) {
  // JSON has no infinity; such values (degenerate rows) are written as null.
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(); };
  nlohmann::ordered_json j;
  j["tool_version"] = kToolVersion;
  j["row"] = c.row_name;
  j["k_n"] = c.stats.k_n;
  j["L_n"] = num(c.stats.L_n);
  j["v_n"] = num(c.stats.v_n);
  j["T_n"] = num(c.stats.T_n);
  j["params"] = c.params.defaults ? "default" : "override";
  j["R_n"] = num(c.params.R_n);
  j["m_n"] = num(c.params.m_n);
  j["D_n"] = num(c.params.D_n);
  j["r_n"] = num(c.params.r_n);
  j["c"] = num(c.params.c);
  j["thm1_ratio"] = num(c.thm1_ratio);
  j["thm1_pass"] = c.thm1_pass;
  j["thm2_m_sqrt_v"] = num(c.m_sqrt_v);
  j["thm2_d_ratio"] = num(c.d_ratio);
  j["thm2_pass"] = c.thm2_pass;
  j["hypotheses"] = "finite-n";
  j["interval"] = {num(c.interval_lo), num(c.interval_hi)};
  j["t_interval"] = {num(c.t_interval_lo), num(c.t_interval_hi)};
  auto edge = [&](const std::optional<EdgeReport>& e) {
    if (!e) return nlohmann::ordered_json();
    nlohmann::ordered_json r;
    r["edge"] = num(e->edge);
    r["error_bound"] = num(e->error_bound);
    r["mode"] = to_string(e->mode);
    r["w_star"] = num(e->w_star);
    return r;
  };
  j["edge_left"] = edge(c.left);
  j["edge_right"] = edge(c.right);
  j["edge_status"] = c.edge_status;
  j["contained"] = c.contained;
  j["k_estimate_violations"] = c.k_estimates.violations;
  j["k_estimate_worst_value_ratio"] = num(c.k_estimates.worst_value_ratio);
  j["k_estimate_worst_derivative_ratio"] = num(c.k_estimates.worst_derivative_ratio);
  return j;
}

inline int cmd_certify(const CertifyArgs& a, std::ostream& out, std::ostream& err) {
  if (!(a.c > 0.0) || !std::isfinite(a.c)) throw ValidationError("--c must be positive");
  const Certificate cert = certify(load_row(a.file), a.c);
  std::ostringstream os;
  if (a.json) os << certificate_json(cert).dump(2) << '\n';
  else write_certificate_record(os, cert);
  emit(os.str(), a.out, out);
  if (cert.k_estimates.violations > 0) {
    err << "error: K-function estimate violated at " << cert.k_estimates.violations << " samples\n";
    return kNumeric;
  }
  if (a.strict && !(cert.thm2_pass && cert.contained)) {
    err << "hypothesis check failed: thm2_pass=" << (cert.thm2_pass ? "true" : "false")
        << " contained=" << (cert.contained ? "true" : "false") << '\n';
    return kHypothesis;
  }
  return kOk;
}

struct DensityArgs {
  std::string file;
  std::optional<double> xmin;
  std::optional<double> xmax;
  std::size_t points = 401;
  std::string eps_list = "1e-3,5e-4,2.5e-4";
  bool no_continuation = false;
  unsigned threads = 1;
  std::string out;
};

inline int cmd_density(const DensityArgs& a, std::ostream& out, std::ostream&) {
  const RowSpec row = load_row(a.file);
  if (a.points < 2) throw ValidationError("--points must be at least 2");
  double lo = 0.0;
  double hi = 0.0;
  if (a.xmin && a.xmax) {
    lo = *a.xmin;
    hi = *a.xmax;
  } else {
    const double l = support_edge(row, EdgeSide::left).edge;
    const double r = support_edge(row, EdgeSide::right).edge;
    const double pad = 0.1 * std::max(r - l, 1e-3);
    lo = a.xmin.value_or(l - pad);
    hi = a.xmax.value_or(r + pad);
  }
  if (!(lo < hi)) throw ValidationError("--xmin must be below --xmax");
  ConvolutionDensityOptions opt;
  opt.continuation = !a.no_continuation;
  opt.threads = std::max(1u, a.threads);
  const DensityGrid g = convolution_density(row, linear_grid(lo, hi, a.points), parse_number_list(a.eps_list), opt);
  std::ostringstream os;
  write_density_csv(os, g);
  emit(os.str(), a.out, out);
  return kOk;
}

struct McArgs {
  std::string file;
  std::size_t N = 256;
  std::size_t trials = 8;
  std::uint64_t seed = 1;
  std::string spectra_out;
  std::string out;
};

inline int cmd_mc(const McArgs& a, std::ostream& out, std::ostream&) {
  RowSpec row = load_row(a.file);
  const Certificate cert = certify(row);
  const SpectrumSample s = sample_sum_spectrum(McConfig{a.N, a.trials, a.seed, std::move(row)});
  if (s.trials.empty()) throw NumericError("every Monte Carlo trial failed to converge");
  if (!a.spectra_out.empty()) {
    std::ostringstream csv;
    write_spectra_csv(csv, s);
    write_atomically(a.spectra_out, csv.str());
  }
  std::ostringstream os;
  os << "N: " << a.N << '\n' << "seed: " << a.seed << '\n';
  write_edge_gap_record(os, edge_gap_report(s, cert));
  emit(os.str(), a.out, out);
  return kOk;
}

struct CltArgs {
  std::string measure_file;
  std::string measure;
  std::string n_list = "4,16,64,256";
  std::string out;
};

/// Normalized sums (xi_1 + ... + xi_n)/sqrt(n) of one centered measure.
inline int cmd_clt(const CltArgs& a, std::ostream& out, std::ostream&) {
  const RowFile f = parse_row_file(read_text(a.measure_file));
  if (f.measures.empty()) throw ValidationError(a.measure_file + " defines no measure");
  const AtomicMeasure xi = a.measure.empty() ? find_measure(f, f.measures.front().name) : find_measure(f, a.measure);
  const double a2 = moments(xi, 2).values[1];
  std::ostringstream os;
  os << "n,edge,abs_gap,edge_left\n";
  for (double nd : parse_number_list(a.n_list)) {
    if (!(nd >= 1.0) || nd != std::floor(nd) || nd > 9e15) throw ValidationError("n-list entries must be positive integers");
    const auto n = static_cast<std::uint64_t>(nd);
    const RowSpec row = RowSpec::identical(xi, n, 1.0 / std::sqrt(nd), "clt");
    const double right = support_edge(row, EdgeSide::right).edge;
    const double left = support_edge(row, EdgeSide::left).edge;
    os << n << ',' << format_double(right) << ',' << format_double(std::abs(right - 2.0 * std::sqrt(a2))) << ','
       << format_double(left) << '\n';
  }
  emit(os.str(), a.out, out);
  return kOk;
}

/// Parses argv and runs one command; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Free additive convolution of atomic measures: support edges, densities and certificates"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  EdgeArgs edge;
  auto* edge_cmd = app.add_subcommand("edge", "support edges of the row's free convolution");
  edge_cmd->add_option("file", edge.file, "row file")->required();
  edge_cmd->add_option("--side", edge.side, "right, left or both")->check(CLI::IsMember({"right", "left", "both"}));
  edge_cmd->add_option("--tol", edge.tol, "fail (exit 3) when an edge error bound exceeds this");
  edge_cmd->add_option("--out", edge.out, "write to this file instead of standard output");

  CertifyArgs cert;
  auto* cert_cmd = app.add_subcommand("certify", "support certificate record");
  cert_cmd->add_option("file", cert.file, "row file")->required();
  cert_cmd->add_option("--c", cert.c, "constant of the informational T_n interval");
  cert_cmd->add_flag("--json", cert.json, "JSON instead of key: value lines");
  cert_cmd->add_flag("--strict", cert.strict, "exit 4 unless the hypotheses hold and both edges are contained");
  cert_cmd->add_option("--out", cert.out, "write to this file instead of standard output");

  DensityArgs dens;
  auto* dens_cmd = app.add_subcommand("density", "density of the convolution on a grid (CSV)");
  dens_cmd->add_option("file", dens.file, "row file")->required();
  dens_cmd->add_option("--xmin", dens.xmin, "left end of the grid (default: left edge minus 10%)");
  dens_cmd->add_option("--xmax", dens.xmax, "right end of the grid (default: right edge plus 10%)");
  dens_cmd->add_option("--points", dens.points, "number of grid points");
  dens_cmd->add_option("--eps-list", dens.eps_list, "decreasing imaginary parts, comma separated");
  dens_cmd->add_flag("--no-continuation", dens.no_continuation, "solve every grid point independently");
  dens_cmd->add_option("--threads", dens.threads, "worker threads (only with --no-continuation)");
  dens_cmd->add_option("--out", dens.out, "write to this file instead of standard output");

  McArgs mc;
  auto* mc_cmd = app.add_subcommand("mc", "random-matrix spectra of the row");
  mc_cmd->add_option("file", mc.file, "row file")->required();
  mc_cmd->add_option("--N", mc.N, "matrix dimension (>= 8)");
  mc_cmd->add_option("--trials", mc.trials, "number of independent trials");
  mc_cmd->add_option("--seed", mc.seed, "random seed");
  mc_cmd->add_option("--spectra-out", mc.spectra_out, "CSV file for all eigenvalues");
  mc_cmd->add_option("--out", mc.out, "write the report to this file instead of standard output");

  CltArgs clt;
  auto* clt_cmd = app.add_subcommand("clt", "edges of normalized sums (x_1 + ... + x_n)/sqrt(n)");
  clt_cmd->add_option("--measure-file", clt.measure_file, "file with a measure declaration")->required();
  clt_cmd->add_option("--measure", clt.measure, "measure name (default: the first one)");
  clt_cmd->add_option("--n-list", clt.n_list, "comma separated n values");
  clt_cmd->add_option("--out", clt.out, "write to this file instead of standard output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kParse;
  }

  try {
    if (*edge_cmd) return cmd_edge(edge, out, err);
    if (*cert_cmd) return cmd_certify(cert, out, err);
    if (*dens_cmd) return cmd_density(dens, out, err);
    if (*mc_cmd) return cmd_mc(mc, out, err);
    if (*clt_cmd) return cmd_clt(clt, out, err);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kParse;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kParse;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kParse;
  }
  return kParse;
}

}  // namespace freeprob::cli
