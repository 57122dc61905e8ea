#pragma once

#include "closed_loop.hpp"
#include "metrics.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fastmpc {

/**
 * @brief Named-matrix text container
 *
 * Layout (whitespace separated, '#' starts a comment):
 *
 *   fastmpc-matrices 1
 *   matrix <name> <rows> <cols>
 *   <rows * cols values, row-major>
 *   vector <name> <size>
 *   <size values>
 *   scalar <name> <value>
 *
 * Values are written with 17 significant digits so a write/read cycle is exact.
 */
class MatrixFile
{
public:
  std::map<std::string, Matrix> matrices;
  std::map<std::string, Vector> vectors;
  std::map<std::string, double> scalars;

  bool has_matrix(const std::string & n) const { return matrices.count(n) > 0; }
  bool has_vector(const std::string & n) const { return vectors.count(n) > 0; }
  bool has_scalar(const std::string & n) const { return scalars.count(n) > 0; }

  const Matrix & matrix(const std::string & n) const
  {
    auto it = matrices.find(n);
    if (it == matrices.end()) throw std::runtime_error("matrix file: missing matrix '" + n + "'");
    return it->second;
  }
  const Vector & vector(const std::string & n) const
  {
    auto it = vectors.find(n);
    if (it == vectors.end()) throw std::runtime_error("matrix file: missing vector '" + n + "'");
    return it->second;
  }
  double scalar(const std::string & n) const
  {
    auto it = scalars.find(n);
    if (it == scalars.end()) throw std::runtime_error("matrix file: missing scalar '" + n + "'");
    return it->second;
  }

  static std::string format(double v)
  {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }

  void write(std::ostream & os) const
  {
    os << "fastmpc-matrices 1\n";
    for (const auto & [name, v] : scalars) os << "scalar " << name << ' ' << format(v) << '\n';
    for (const auto & [name, v] : vectors) {
      os << "vector " << name << ' ' << v.size() << '\n';
      for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << format(v[i]);
      os << '\n';
    }
    for (const auto & [name, m] : matrices) {
      os << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << format(m(r, c));
        os << '\n';
      }
    }
  }

  static MatrixFile read(std::istream & is)
  {
    std::stringstream clean;
    std::string line;
    while (std::getline(is, line)) {
      const auto hash = line.find('#');
      clean << (hash == std::string::npos ? line : line.substr(0, hash)) << '\n';
    }
    MatrixFile f;
    std::string tok;
    if (!(clean >> tok) || tok != "fastmpc-matrices") throw std::runtime_error("matrix file: bad header");
    int version = 0;
    if (!(clean >> version) || version != 1) throw std::runtime_error("matrix file: unsupported version");
    auto number = [&](const std::string & what) {
      std::string s;
      if (!(clean >> s)) throw std::runtime_error("matrix file: truncated " + what);
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception &) {
        used = 0;
      }
      if (used != s.size()) throw std::runtime_error("matrix file: bad number '" + s + "' in " + what);
      return v;
    };
    auto count = [&](const std::string & what) {
      long v = -1;
      if (!(clean >> v) || v < 0) throw std::runtime_error("matrix file: bad size for " + what);
      return Eigen::Index(v);
    };
    while (clean >> tok) {
      std::string name;
      if (!(clean >> name)) throw std::runtime_error("matrix file: missing name");
      if (tok == "scalar") {
        f.scalars[name] = number(name);
      } else if (tok == "vector") {
        Vector v(count(name));
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = number(name);
        f.vectors[name] = v;
      } else if (tok == "matrix") {
        const auto r = count(name), c = count(name);
        Matrix m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
          for (Eigen::Index j = 0; j < c; ++j) m(i, j) = number(name);
        f.matrices[name] = m;
      } else {
        throw std::runtime_error("matrix file: unknown entry kind '" + tok + "'");
      }
    }
    return f;
  }

  void save(const std::string & path) const
  {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    write(os);
  }

  static MatrixFile load(const std::string & path)
  {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return read(is);
  }
};

/// Model file: A B F C D G, sample_period, optional operating point x0 u0 y0 w0.
inline void store_model(MatrixFile & f, const LtiModel & m, const OperatingPoint & op)
{
  f.matrices["A"] = m.a;
  f.matrices["B"] = m.b;
  f.matrices["F"] = m.f;
  f.matrices["C"] = m.c;
  f.matrices["D"] = m.d;
  f.matrices["G"] = m.g;
  f.scalars["sample_period"] = m.sample_period;
  f.vectors["x0"] = op.x0;
  f.vectors["u0"] = op.u0;
  f.vectors["y0"] = op.y0;
  f.vectors["w0"] = op.w0;
}

inline LtiModel load_model(const MatrixFile & f)
{
  LtiModel m;
  m.a = f.matrix("A");
  m.b = f.matrix("B");
  m.f = f.matrix("F");
  m.c = f.matrix("C");
  m.d = f.matrix("D");
  m.g = f.matrix("G");
  m.sample_period = f.has_scalar("sample_period") ? f.scalar("sample_period") : 5.0;
  m.validate();
  return m;
}

inline OperatingPoint load_operating_point(const MatrixFile & f, const LtiModel & m)
{
  OperatingPoint op = OperatingPoint::zeros(m);
  if (f.has_vector("x0")) op.x0 = f.vector("x0");
  if (f.has_vector("u0")) op.u0 = f.vector("u0");
  if (f.has_vector("y0")) op.y0 = f.vector("y0");
  if (f.has_vector("w0")) op.w0 = f.vector("w0");
  op.validate(m);
  return op;
}

/// Controller entries: Q R rho, u_min u_max du_min du_max yc_min yc_max yc_index, rate_rows.
inline void store_controller(MatrixFile & f, const MpcWeights & w, const MpcBounds & b)
{
  f.matrices["Q"] = w.q_state;
  f.matrices["R"] = w.r_input;
  f.matrices["rho"] = w.rho_violation;
  f.vectors["u_min"] = b.u_min;
  f.vectors["u_max"] = b.u_max;
  f.vectors["du_min"] = b.du_min;
  f.vectors["du_max"] = b.du_max;
  f.vectors["yc_min"] = b.yc_min;
  f.vectors["yc_max"] = b.yc_max;
  Vector idx(Eigen::Index(b.constrained_output_indices.size()));
  for (Eigen::Index i = 0; i < idx.size(); ++i) idx[i] = b.constrained_output_indices[i];
  f.vectors["yc_index"] = idx;
  f.scalars["rate_rows"] = b.rate_rows;
}

inline std::pair<MpcWeights, MpcBounds> load_controller(const MatrixFile & f)
{
  MpcWeights w{f.matrix("Q"), f.matrix("R"), f.matrix("rho")};
  MpcBounds b;
  b.u_min = f.vector("u_min");
  b.u_max = f.vector("u_max");
  b.du_min = f.vector("du_min");
  b.du_max = f.vector("du_max");
  b.yc_min = f.vector("yc_min");
  b.yc_max = f.vector("yc_max");
  for (double v : f.vector("yc_index")) b.constrained_output_indices.push_back(int(v));
  if (f.has_scalar("rate_rows")) b.rate_rows = int(f.scalar("rate_rows"));
  b.sort_output_bounds();
  return {w, b};
}

inline std::string csv_number(double v) { return MatrixFile::format(v); }

/// Scenario CSV with header `time_s,heat_load_W`.
inline void write_scenario_csv(std::ostream & os, const Scenario & s)
{
  os << "time_s,heat_load_W\n";
  for (std::size_t i = 0; i < s.times.size(); ++i) os << csv_number(s.times[i]) << ',' << csv_number(s.values(0, Eigen::Index(i))) << '\n';
  if (s.times.empty() || s.times.back() < s.duration) {
    os << csv_number(s.duration) << ',' << csv_number(s.values(0, s.values.cols() - 1)) << '\n';
  }
}

/// Reads a scenario CSV; the last time stamp is the duration.
inline Scenario read_scenario_csv(std::istream & is, std::string label)
{
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("scenario csv: empty");
  if (line.rfind("time_s,heat_load_W", 0) != 0) throw std::runtime_error("scenario csv: bad header");
  std::vector<double> times, loads;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("scenario csv: malformed line '" + line + "'");
    times.push_back(std::stod(line.substr(0, comma)));
    loads.push_back(std::stod(line.substr(comma + 1)));
  }
  if (times.size() < 2) throw std::runtime_error("scenario csv: need at least two rows");
  Scenario s;
  s.label = std::move(label);
  s.duration = times.back();
  s.times.assign(times.begin(), times.end() - 1);
  s.values.resize(1, Eigen::Index(s.times.size()));
  for (std::size_t i = 0; i < s.times.size(); ++i) s.values(0, Eigen::Index(i)) = loads[i];
  s.validate();
  return s;
}

inline Scenario load_scenario(const std::string & path, std::string label = {})
{
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  if (label.empty()) {
    label = path;
    const auto slash = label.find_last_of('/');
    if (slash != std::string::npos) label = label.substr(slash + 1);
    const auto dot = label.rfind('.');
    if (dot != std::string::npos) label = label.substr(0, dot);
  }
  return read_scenario_csv(is, label);
}

inline void save_scenario(const std::string & path, const Scenario & s)
{
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_scenario_csv(os, s);
}

/// One row per updating period.
inline void write_run_csv(std::ostream & os, const RunRecord & rec)
{
  if (rec.windows.empty()) {
    os << "window,t\n";
    return;
  }
  const auto & w0 = rec.windows.front();
  os << "window,t,duration,q,iterations_used,solver_status,J_k,J_k_plus,J_hat_next,J_next,E_r,D_r,K_r,gamma,q_next,"
        "solver_decrease,disturbance_increase,dev_cost,cst_cost,max_row_violation,clipped";
  auto names = [&](const char * p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << p << i;
  };
  names("x", w0.x_true.size());
  names("y", w0.y.size());
  names("u", w0.u_applied.size());
  names("v", w0.v.size());
  os << '\n';
  auto vec = [&](const Vector & v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << csv_number(v[i]);
  };
  for (std::size_t k = 0; k < rec.windows.size(); ++k) {
    const auto & w = rec.windows[k];
    os << k << ',' << csv_number(w.t) << ',' << csv_number(w.duration) << ',' << w.q << ',' << w.iterations_used << ','
       << w.solver_status << ',' << csv_number(w.j_k) << ',' << csv_number(w.j_k_plus) << ','
       << csv_number(w.j_hat_next) << ',' << csv_number(w.j_next) << ',';
    if (w.adaptation) {
      os << csv_number(w.adaptation->e_r) << ',' << csv_number(w.adaptation->d_r) << ','
         << csv_number(w.adaptation->k_r) << ',' << csv_number(w.adaptation->gamma);
    } else {
      os << ",,,";
    }
    os << ',' << w.q_next << ',' << csv_number(w.j_k_plus - w.j_next) << ',' << csv_number(w.j_k_plus - w.j_k) << ','
       << csv_number(w.deviation_cost) << ',' << csv_number(w.violation_cost) << ','
       << csv_number(w.max_row_violation) << ',' << (w.clipped ? 1 : 0);
    vec(w.x_true);
    vec(w.y);
    vec(w.u_applied);
    vec(w.v);
    os << '\n';
  }
}

/// Adaptation log: t, q, E^r, D^r, K^r, Gamma, q_next.
inline void write_adaptation_csv(std::ostream & os, const RunRecord & rec)
{
  os << "t,q,E_r,D_r,K_r,gamma,q_next\n";
  for (const auto & w : rec.windows) {
    if (!w.adaptation) continue;
    os << csv_number(w.t) << ',' << w.q << ',' << csv_number(w.adaptation->e_r) << ','
       << csv_number(w.adaptation->d_r) << ',' << csv_number(w.adaptation->k_r) << ','
       << csv_number(w.adaptation->gamma) << ',' << w.q_next << '\n';
  }
}

/// key = value summary of a run.
inline void write_summary(std::ostream & os, const RunRecord & rec)
{
  const auto b = cost_breakdown(rec);
  os << "label = " << rec.label << '\n'
     << "solver = " << to_string(rec.solver) << '\n'
     << "adaptive = " << (rec.adaptive ? "true" : "false") << '\n'
     << "simulated_time = " << csv_number(rec.simulated_time) << '\n'
     << "n_sim = " << b.n_sim << '\n'
     << "dev_total = " << csv_number(b.dev_total) << '\n'
     << "cst_total = " << csv_number(b.cst_total) << '\n'
     << "open_loop_total = " << csv_number(b.open_loop_total()) << '\n'
     << "closed_loop_total = " << csv_number(b.closed_loop_total) << '\n'
     << "c1 = " << csv_number(b.c1) << '\n'
     << "c2 = " << csv_number(b.c2) << '\n'
     << "clip_events = " << rec.clip_events << '\n';
}

/// One row per axis point per mode.
inline void write_sweep_csv(std::ostream & os, const SweepResult & s)
{
  os << "segment,axis,mode,q,available,dev_total,cst_total,open_loop_total,closed_loop_total,c1,c2,normalized\n";
  for (const auto & p : s.points) {
    os << p.segment << ',' << csv_number(p.axis) << ',' << p.mode << ',' << p.q << ',' << (p.cost ? 1 : 0);
    if (p.cost) {
      os << ',' << csv_number(p.cost->dev_total) << ',' << csv_number(p.cost->cst_total) << ','
         << csv_number(p.cost->open_loop_total()) << ',' << csv_number(p.cost->closed_loop_total) << ','
         << csv_number(p.cost->c1) << ',' << csv_number(p.cost->c2) << ',' << csv_number(p.normalized) << '\n';
    } else {
      os << ",,,,,,,\n";
    }
  }
}

}  // namespace fastmpc
