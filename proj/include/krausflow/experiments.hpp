// Copyright 2026 The krausflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "krausflow/constraints.hpp"
#include "krausflow/flow.hpp"
#include "krausflow/landscape.hpp"
#include "krausflow/sampling.hpp"
#include "krausflow/stiefel.hpp"

namespace krausflow {

// ---------------------------------------------------------------------------
// Initial-state and observable families.

enum class RhoKind { kPure, kMixed, kMaximallyMixed, kRank };

struct RhoSpec {
  RhoKind kind = RhoKind::kMixed;
  int rank = 0;  // kRank only

  static RhoSpec pure() { return {RhoKind::kPure, 1}; }
  static RhoSpec mixed() { return {RhoKind::kMixed, 0}; }
  static RhoSpec maximally_mixed() { return {RhoKind::kMaximallyMixed, 0}; }
  static RhoSpec with_rank(int k) { return {RhoKind::kRank, k}; }

  // pure | mixed | maximally-mixed | rank:<k>
  static RhoSpec parse(const std::string& text) {
    if (text == "pure") return pure();
    if (text == "mixed") return mixed();
    if (text == "maximally-mixed") return maximally_mixed();
    if (text.rfind("rank:", 0) == 0) {
      std::size_t used = 0;
      int k = 0;
      try {
        k = std::stoi(text.substr(5), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != text.size() - 5 || k < 1) {
        throw ContractViolation("bad rho kind '" + text + "'");
      }
      return with_rank(k);
    }
    throw ContractViolation("bad rho kind '" + text + "'");
  }

  std::string tag() const {
    switch (kind) {
      case RhoKind::kPure:
        return "pure";
      case RhoKind::kMixed:
        return "mixed";
      case RhoKind::kMaximallyMixed:
        return "maximally-mixed";
      case RhoKind::kRank:
        return "rank:" + std::to_string(rank);
    }
    return "?";
  }

  int d0(int n) const {
    switch (kind) {
      case RhoKind::kPure:
        return n - 1;
      case RhoKind::kRank:
        if (rank > n) throw ContractViolation("rho rank exceeds n");
        return n - rank;
      default:
        return 0;
    }
  }

  RVector sample(int n, SeededStream& rng) const {
    if (kind == RhoKind::kMaximallyMixed) return krausflow::maximally_mixed(n);
    return random_rho(n, d0(n), ZeroPlacement::kRandomPositions, rng);
  }
};

// projector | degenerate:<e1>
inline int parse_theta_e1(const std::string& text) {
  if (text == "projector") return 1;
  if (text.rfind("degenerate:", 0) == 0) {
    std::size_t used = 0;
    int e1 = 0;
    try {
      e1 = std::stoi(text.substr(11), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != 0 && used == text.size() - 11 && e1 >= 1) return e1;
  }
  throw ContractViolation("bad theta kind '" + text + "'");
}

enum class ControlKind { kKraus, kUnitary };

inline const char* to_string(ControlKind c) {
  return c == ControlKind::kKraus ? "kraus" : "unitary";
}

// ---------------------------------------------------------------------------
// Records and aggregates.

struct RunRecord {
  std::string experiment;
  std::uint64_t seed = 0;
  int n = 0;
  int d0 = 0;
  int e1 = 0;
  std::string rho_kind;
  std::string control_kind;
  long tau = 0;
  double lambda = 0.0;
  double j_initial = 0.0;
  double j_final = 0.0;
  bool converged = false;
  long wall_ms = 0;

  bool operator==(const RunRecord&) const = default;
};

inline constexpr const char* kRunCsvHeader =
    "experiment,seed,n,d0,e1,rho_kind,control_kind,tau,lambda,j_initial,"
    "j_final,converged,wall_ms";

namespace detail {

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline void write_records_csv(std::ostream& os,
                              const std::vector<RunRecord>& rs) {
  os << kRunCsvHeader << '\n';
  for (const RunRecord& r : rs) {
    os << r.experiment << ',' << r.seed << ',' << r.n << ',' << r.d0 << ','
       << r.e1 << ',' << r.rho_kind << ',' << r.control_kind << ',' << r.tau
       << ',' << detail::format_double(r.lambda) << ','
       << detail::format_double(r.j_initial) << ','
       << detail::format_double(r.j_final) << ','
       << (r.converged ? "true" : "false") << ',' << r.wall_ms << '\n';
  }
}

// One JSON object per line with the CSV field names.
inline void write_records_jsonlines(std::ostream& os,
                                    const std::vector<RunRecord>& rs) {
  for (const RunRecord& r : rs) {
    os << "{\"experiment\":\"" << detail::json_escape(r.experiment)
       << "\",\"seed\":" << r.seed << ",\"n\":" << r.n << ",\"d0\":" << r.d0
       << ",\"e1\":" << r.e1 << ",\"rho_kind\":\""
       << detail::json_escape(r.rho_kind) << "\",\"control_kind\":\""
       << detail::json_escape(r.control_kind) << "\",\"tau\":" << r.tau
       << ",\"lambda\":" << detail::format_double(r.lambda)
       << ",\"j_initial\":" << detail::format_double(r.j_initial)
       << ",\"j_final\":" << detail::format_double(r.j_final)
       << ",\"converged\":" << (r.converged ? "true" : "false")
       << ",\"wall_ms\":" << r.wall_ms << "}\n";
  }
}

// Inverse of write_records_csv; throws ContractViolation on schema errors.
inline std::vector<RunRecord> read_records_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kRunCsvHeader) {
    throw ContractViolation("records csv: bad header");
  }
  std::vector<RunRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 13) throw ContractViolation("records csv: bad row");
    RunRecord r;
    try {
      r.experiment = f[0];
      r.seed = std::stoull(f[1]);
      r.n = std::stoi(f[2]);
      r.d0 = std::stoi(f[3]);
      r.e1 = std::stoi(f[4]);
      r.rho_kind = f[5];
      r.control_kind = f[6];
      r.tau = std::stol(f[7]);
      r.lambda = std::stod(f[8]);
      r.j_initial = std::stod(f[9]);
      r.j_final = std::stod(f[10]);
      if (f[11] != "true" && f[11] != "false") throw std::invalid_argument("");
      r.converged = f[11] == "true";
      r.wall_ms = std::stol(f[12]);
    } catch (const std::exception&) {
      throw ContractViolation("records csv: bad field in '" + line + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline double mean_of(const std::vector<double>& x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Sample standard deviation (n-1 denominator); 0 for a single value.
inline double std_of(const std::vector<double>& x) {
  if (x.size() < 2) return x.empty() ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  const double m = mean_of(x);
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(x.size() - 1));
}

inline double median_of(std::vector<double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(x.begin(), x.end());
  const std::size_t m = x.size() / 2;
  return x.size() % 2 ? x[m] : 0.5 * (x[m - 1] + x[m]);
}

// Ranks starting at 1, ties sharing their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ContractViolation("pearson: need two equal-length samples of size >= 2");
  }
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

struct AggregateRow {
  int n = 0;
  int d0 = 0;
  int e1 = 0;
  std::string rho_kind;
  std::string control_kind;
  long count = 0;
  double mean_tau = 0.0;
  double std_tau = 0.0;
  double median_tau = 0.0;
  double mean_lambda = 0.0;
  double std_lambda = 0.0;
  double median_lambda = 0.0;
  double convergence_rate = 0.0;
};

inline constexpr const char* kAggregateCsvHeader =
    "n,d0,e1,rho_kind,control_kind,count,mean_tau,std_tau,median_tau,"
    "mean_lambda,std_lambda,median_lambda,convergence_rate";

// Groups by (n, d0, e1, rho_kind, control_kind), in key order.
inline std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& rs) {
  using Key = std::tuple<int, int, int, std::string, std::string>;
  std::map<Key, std::vector<const RunRecord*>> groups;
  for (const RunRecord& r : rs) {
    groups[{r.n, r.d0, r.e1, r.rho_kind, r.control_kind}].push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const auto& [key, members] : groups) {
    AggregateRow a;
    std::tie(a.n, a.d0, a.e1, a.rho_kind, a.control_kind) = key;
    std::vector<double> tau;
    std::vector<double> lam;
    long conv = 0;
    for (const RunRecord* r : members) {
      tau.push_back(static_cast<double>(r->tau));
      lam.push_back(r->lambda);
      conv += r->converged ? 1 : 0;
    }
    a.count = static_cast<long>(members.size());
    a.mean_tau = mean_of(tau);
    a.std_tau = std_of(tau);
    a.median_tau = median_of(tau);
    a.mean_lambda = mean_of(lam);
    a.std_lambda = std_of(lam);
    a.median_lambda = median_of(lam);
    a.convergence_rate = static_cast<double>(conv) / static_cast<double>(a.count);
    out.push_back(std::move(a));
  }
  return out;
}

inline void write_aggregates_csv(std::ostream& os,
                                 const std::vector<AggregateRow>& rows) {
  os << kAggregateCsvHeader << '\n';
  for (const AggregateRow& a : rows) {
    os << a.n << ',' << a.d0 << ',' << a.e1 << ',' << a.rho_kind << ','
       << a.control_kind << ',' << a.count << ','
       << detail::format_double(a.mean_tau) << ','
       << detail::format_double(a.std_tau) << ','
       << detail::format_double(a.median_tau) << ','
       << detail::format_double(a.mean_lambda) << ','
       << detail::format_double(a.std_lambda) << ','
       << detail::format_double(a.median_lambda) << ','
       << detail::format_double(a.convergence_rate) << '\n';
  }
}

inline double convergence_rate(const std::vector<RunRecord>& rs) {
  if (rs.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto c = std::count_if(rs.begin(), rs.end(),
                               [](const RunRecord& r) { return r.converged; });
  return static_cast<double>(c) / static_cast<double>(rs.size());
}

// ---------------------------------------------------------------------------
// Execution.

struct ExperimentConfig {
  std::uint64_t seed = 1;
  FlowConfig flow;
  unsigned workers = 0;  // 0: hardware concurrency
  bool timing = false;   // wall_ms stays 0 unless set, keeping output stable
};

// Calls f(i) for i in [0, count) on a pool of threads and returns the results
// in index order. The first failure (by index) is rethrown after all workers
// finish.
template <class F>
auto run_indexed(std::size_t count, unsigned workers, F&& f)
    -> std::vector<decltype(f(std::size_t{}))> {
  using R = decltype(f(std::size_t{}));
  std::vector<std::optional<R>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        slots[i].emplace(f(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

namespace detail {

// Distinct stream families per experiment so runs of different experiments
// under one seed do not share randomness.
enum class StreamFamily : std::uint64_t {
  kDistribution = 1,
  kTrapScan,
  kScaling,
  kDegeneracy,
  kCompare,
  kGeneral,
  kElementFixing,
  kFlow,
  kScreening,
};

inline SeededStream run_stream(std::uint64_t seed, StreamFamily family,
                               std::uint64_t index) {
  return SeededStream(seed, (static_cast<std::uint64_t>(family) << 40) + index);
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  long ms() const {
    return static_cast<long>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start_)
                                 .count());
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline RunRecord make_record(const std::string& experiment,
                             const ExperimentConfig& cfg, int n, int d0, int e1,
                             const std::string& rho_kind, ControlKind control,
                             const Trajectory& t, const Stopwatch& clock) {
  RunRecord r;
  r.experiment = experiment;
  r.seed = cfg.seed;
  r.n = n;
  r.d0 = d0;
  r.e1 = e1;
  r.rho_kind = rho_kind;
  r.control_kind = to_string(control);
  r.tau = t.tau;
  r.lambda = t.lambda;
  r.j_initial = t.initial_value();
  r.j_final = t.final_value();
  r.converged = t.converged;
  r.wall_ms = cfg.timing ? clock.ms() : 0;
  return r;
}

// Kraus-map flow from a random Stiefel point for a sampled rho.
inline RunRecord kraus_run(const std::string& experiment,
                           const ExperimentConfig& cfg, int n, int e1,
                           const RhoSpec& rho, SeededStream& rng) {
  const Stopwatch clock;
  const ControlProblem p(rho.sample(n, rng), random_theta(n, e1));
  const StiefelPoint s0 = random_stiefel(n, rng);
  const Trajectory t = flow_ascent(s0, p, cfg.flow);
  return make_record(experiment, cfg, n, p.d0(), e1, rho.tag(),
                     ControlKind::kKraus, t, clock);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Drivers.

inline constexpr int kHistogramBins = 50;

struct DistributionSummary {
  int n = 0;
  long samples = 0;
  double mean = 0.0;
  double std = 0.0;
  double lo = 0.0;  // theta_min
  double hi = 0.0;  // theta_max
  std::vector<long> histogram;  // kHistogramBins uniform bins on [lo, hi]
  std::vector<double> values;
};

// J0 at random (S0, rho) pairs with Theta = |N><N| and full-rank flat rho.
inline DistributionSummary exp_objective_distribution(int n, long samples,
                                                      std::uint64_t seed) {
  if (n < 2) throw ContractViolation("exp_objective_distribution: n >= 2");
  if (samples < 1) throw ContractViolation("exp_objective_distribution: samples >= 1");
  DistributionSummary out;
  out.n = n;
  out.samples = samples;
  const RVector theta = random_theta(n, 1);
  out.lo = theta.minCoeff();
  out.hi = theta.maxCoeff();
  out.histogram.assign(kHistogramBins, 0);
  for (long i = 0; i < samples; ++i) {
    SeededStream rng = detail::run_stream(
        seed, detail::StreamFamily::kDistribution,
        (static_cast<std::uint64_t>(n) << 32) + static_cast<std::uint64_t>(i));
    const StiefelPoint s = random_stiefel(n, rng);
    const ControlProblem p(random_rho(n, 0, ZeroPlacement::kRandomPositions, rng),
                           theta);
    const double j = objective(s, p);
    out.values.push_back(j);
    const double t = (j - out.lo) / (out.hi - out.lo);
    const int bin = std::clamp(static_cast<int>(t * kHistogramBins), 0,
                               kHistogramBins - 1);
    ++out.histogram[static_cast<std::size_t>(bin)];
  }
  out.mean = mean_of(out.values);
  out.std = std_of(out.values);
  return out;
}

inline constexpr const char* kDistributionCsvHeader =
    "n,samples,mean,std,bin,bin_lo,bin_hi,count";

inline void write_distribution_csv(std::ostream& os,
                                   const std::vector<DistributionSummary>& ds) {
  os << kDistributionCsvHeader << '\n';
  for (const DistributionSummary& d : ds) {
    const double w = (d.hi - d.lo) / kHistogramBins;
    for (int b = 0; b < kHistogramBins; ++b) {
      os << d.n << ',' << d.samples << ',' << detail::format_double(d.mean)
         << ',' << detail::format_double(d.std) << ',' << b << ','
         << detail::format_double(d.lo + b * w) << ','
         << detail::format_double(d.lo + (b + 1) * w) << ','
         << d.histogram[static_cast<std::size_t>(b)] << '\n';
    }
  }
}

// `starts` Kraus flows per rho kind, Theta = |N><N|.
inline std::vector<RunRecord> exp_trap_scan(int n, int starts,
                                            const std::vector<RhoSpec>& kinds,
                                            const ExperimentConfig& cfg) {
  if (n < 2 || starts < 1) throw ContractViolation("exp_trap_scan: bad arguments");
  const std::size_t total = kinds.size() * static_cast<std::size_t>(starts);
  return run_indexed(total, cfg.workers, [&](std::size_t i) {
    SeededStream rng =
        detail::run_stream(cfg.seed, detail::StreamFamily::kTrapScan, i);
    return detail::kraus_run("trap-scan", cfg, n, 1,
                             kinds[i / static_cast<std::size_t>(starts)], rng);
  });
}

struct ScalingMode {
  enum Kind { kFixedRank, kFixedD0 } kind = kFixedRank;
  int value = 1;  // N - d0 for kFixedRank, d0 for kFixedD0

  int d0(int n) const { return kind == kFixedRank ? n - value : value; }
};

// Runs for every n in ns; points with an invalid d0 are skipped.
inline std::vector<RunRecord> exp_scaling(const std::vector<int>& ns,
                                          ScalingMode mode, int runs_per_point,
                                          const ExperimentConfig& cfg) {
  struct Job {
    int n;
    int d0;
    int run;
  };
  std::vector<Job> jobs;
  for (int n : ns) {
    if (n < 2) throw ContractViolation("exp_scaling: n >= 2");
    const int d0 = mode.d0(n);
    if (d0 < 0 || d0 > n - 1) continue;
    for (int r = 0; r < runs_per_point; ++r) jobs.push_back({n, d0, r});
  }
  return run_indexed(jobs.size(), cfg.workers, [&](std::size_t i) {
    const Job& j = jobs[i];
    SeededStream rng = detail::run_stream(
        cfg.seed, detail::StreamFamily::kScaling,
        (static_cast<std::uint64_t>(j.n) << 24) +
            (static_cast<std::uint64_t>(j.d0) << 16) +
            static_cast<std::uint64_t>(j.run));
    return detail::kraus_run("scan-n", cfg, j.n, 1,
                             RhoSpec::with_rank(j.n - j.d0), rng);
  });
}

struct DegeneracyCell {
  int d0 = 0;
  int e1 = 0;
  double median_tau = 0.0;
  double median_lambda = 0.0;
  std::int64_t dim = 0;
};

struct DegeneracyResult {
  int n = 0;
  std::vector<RunRecord> records;
  std::vector<DegeneracyCell> cells;  // d0-major
  double spearman_tau_dim = 0.0;
};

// Grid over (d0, e1) in {0..n-1} x {1..n}.
inline DegeneracyResult exp_degeneracy(int n, int runs_per_cell,
                                       const ExperimentConfig& cfg) {
  if (n < 3 || runs_per_cell < 1) {
    throw ContractViolation("exp_degeneracy: need n >= 3 and runs >= 1");
  }
  const auto per_d0 = static_cast<std::size_t>(n) * runs_per_cell;
  DegeneracyResult out;
  out.n = n;
  out.records = run_indexed(per_d0 * n, cfg.workers, [&](std::size_t i) {
    const int d0 = static_cast<int>(i / per_d0);
    const int e1 = 1 + static_cast<int>((i % per_d0) / runs_per_cell);
    SeededStream rng =
        detail::run_stream(cfg.seed, detail::StreamFamily::kDegeneracy, i);
    return detail::kraus_run("scan-degeneracy", cfg, n, e1,
                             RhoSpec::with_rank(n - d0), rng);
  });
  std::vector<double> med;
  std::vector<double> dims;
  for (int d0 = 0; d0 < n; ++d0) {
    for (int e1 = 1; e1 <= n; ++e1) {
      std::vector<double> tau;
      std::vector<double> lam;
      for (const RunRecord& r : out.records) {
        if (r.d0 == d0 && r.e1 == e1) {
          tau.push_back(static_cast<double>(r.tau));
          lam.push_back(r.lambda);
        }
      }
      DegeneracyCell c{d0, e1, median_of(tau), median_of(lam),
                       dim_max_manifold(n, d0, e1)};
      med.push_back(c.median_tau);
      dims.push_back(static_cast<double>(c.dim));
      out.cells.push_back(c);
    }
  }
  out.spearman_tau_dim = spearman(med, dims);
  return out;
}

inline constexpr const char* kDegeneracyCsvHeader =
    "n,d0,e1,median_tau,median_lambda,dim_max";

inline void write_degeneracy_csv(std::ostream& os, const DegeneracyResult& d) {
  os << kDegeneracyCsvHeader << '\n';
  for (const DegeneracyCell& c : d.cells) {
    os << d.n << ',' << c.d0 << ',' << c.e1 << ','
       << detail::format_double(c.median_tau) << ','
       << detail::format_double(c.median_lambda) << ',' << c.dim << '\n';
  }
}

// Paired runs: for each index one rho, then a Kraus flow from a random Stiefel
// point and a unitary flow from a Haar unitary, both stopping at rho_max - eps.
inline std::vector<RunRecord> exp_compare_unitary(
    const std::vector<int>& ns, int runs_per_point,
    const std::vector<RhoSpec>& kinds, const ExperimentConfig& cfg) {
  struct Job {
    int n;
    RhoSpec rho;
    int run;
  };
  std::vector<Job> jobs;
  for (int n : ns) {
    if (n < 2) throw ContractViolation("exp_compare_unitary: n >= 2");
    for (const RhoSpec& k : kinds) {
      for (int r = 0; r < runs_per_point; ++r) jobs.push_back({n, k, r});
    }
  }
  auto pairs = run_indexed(jobs.size(), cfg.workers, [&](std::size_t i) {
    const Job& j = jobs[i];
    SeededStream rng =
        detail::run_stream(cfg.seed, detail::StreamFamily::kCompare, i);
    const ControlProblem p(j.rho.sample(j.n, rng), random_theta(j.n, 1));
    const StiefelPoint s0 = random_stiefel(j.n, rng);
    const CMatrix u0 = haar_unitary(j.n, rng);
    FlowConfig fc = cfg.flow;
    fc.target_value = p.rho_max();
    detail::Stopwatch kc;
    const Trajectory tk = flow_ascent(s0, p, fc);
    RunRecord rk = detail::make_record("compare-unitary", cfg, j.n, p.d0(), 1,
                                       j.rho.tag(), ControlKind::kKraus, tk, kc);
    detail::Stopwatch uc;
    const Trajectory tu = flow_unitary(u0, p, cfg.flow);
    RunRecord ru = detail::make_record("compare-unitary", cfg, j.n, p.d0(), 1,
                                       j.rho.tag(), ControlKind::kUnitary, tu, uc);
    return std::pair<RunRecord, RunRecord>{std::move(rk), std::move(ru)};
  });
  std::vector<RunRecord> out;
  for (auto& [k, u] : pairs) {
    out.push_back(std::move(k));
    out.push_back(std::move(u));
  }
  return out;
}

// Constrained runs stop on stationarity since the optimum is unknown in the
// general case.
inline constexpr double kConstrainedStationaryTol = 1e-5;
inline constexpr int kFeasibilityRestarts = 5;
inline constexpr long kScreeningSteps = 2000;
inline constexpr int kMaxSetDraws = 50;

// One constraint set (general) or one (n, count) cell (element fixing, where
// every run has its own rho, so j_min/j_max are not a restart spread).
struct ConstrainedGroup {
  int n = 0;
  int rho_index = 0;
  int set_index = 0;  // general protocol: constraint set; element fixing: count
  int count = 0;      // number of B matrices or fixed entries
  double j_min = 0.0;
  double j_max = 0.0;
  double max_analytic_gap = 0.0;  // element fixing only
  double max_violation = 0.0;
  int feasibility_failures = 0;
};

struct ConstrainedResult {
  std::vector<RunRecord> records;
  std::vector<ConstrainedGroup> groups;
  int feasibility_failures = 0;
  int rejected_sets = 0;  // general protocol: draws that failed screening
  double max_spread() const {
    double s = 0.0;
    for (const auto& g : groups) {
      if (g.j_max >= g.j_min) s = std::max(s, g.j_max - g.j_min);
    }
    return s;
  }
  double max_analytic_gap() const {
    double s = 0.0;
    for (const auto& g : groups) s = std::max(s, g.max_analytic_gap);
    return s;
  }
  double max_violation() const {
    double s = 0.0;
    for (const auto& g : groups) s = std::max(s, g.max_violation);
    return s;
  }
};

namespace detail {

struct ConstrainedRun {
  std::optional<RunRecord> record;
  double violation = 0.0;
  double analytic = std::numeric_limits<double>::quiet_NaN();
};

inline bool passes_screen(const ConstraintSet& cs, SeededStream& rng,
                          const FlowConfig& cfg) {
  FeasibilityOptions opt;
  opt.max_steps = kScreeningSteps;
  try {
    find_feasible_point(cs, rng, cfg, kFeasibilityRestarts, opt);
  } catch (const FeasibilityFailure&) {
    return false;
  }
  return true;
}

inline ConstrainedRun constrained_run(const std::string& experiment,
                                      const ExperimentConfig& cfg,
                                      const ControlProblem& p,
                                      const ConstraintSet& cs,
                                      SeededStream& rng) {
  const Stopwatch clock;
  ConstrainedRun out;
  FeasibilityResult feas;
  FeasibilityOptions opt;
  opt.max_steps = 20000;
  try {
    feas = find_feasible_point(cs, rng, cfg.flow, kFeasibilityRestarts, opt);
  } catch (const FeasibilityFailure&) {
    return out;
  }
  FlowConfig fc = cfg.flow;
  fc.target_value = std::numeric_limits<double>::infinity();
  fc.stationary_tol = kConstrainedStationaryTol;
  const Trajectory t = flow_ascent_constrained(feas.point, p, cs, fc);
  out.violation = cs.max_violation(t.final_point.matrix());
  out.record = make_record(experiment, cfg, p.n(), p.d0(), p.e1(), "mixed",
                           ControlKind::kKraus, t, clock);
  return out;
}

}  // namespace detail

// General linear constraints: per n, rhos x sets random constraint sets with
// a random count of B matrices, each optimized from `restarts` feasible starts.
inline ConstrainedResult exp_constrained_general(const std::vector<int>& ns,
                                                 int rhos, int sets,
                                                 int restarts,
                                                 const ExperimentConfig& cfg) {
  struct Group {
    int n;
    int rho_index;
    int set_index;
    RVector rho;
    ConstraintSet cs;
  };
  std::vector<Group> groups;
  int rejected = 0;
  for (int n : ns) {
    if (n < 2 || n > 4) {
      throw ContractViolation("exp_constrained_general: n must be in 2..4");
    }
    for (int a = 0; a < rhos; ++a) {
      SeededStream rho_rng = detail::run_stream(
          cfg.seed, detail::StreamFamily::kGeneral,
          (static_cast<std::uint64_t>(n) << 32) + (static_cast<std::uint64_t>(a) << 16));
      const RVector rho = random_rho(n, 0, ZeroPlacement::kRandomPositions, rho_rng);
      for (int b = 0; b < sets; ++b) {
        // Not every draw is satisfiable: at the count limit roughly a third
        // (N = 3) to two thirds (N = 4) admit no Kraus map. Sets that fail a
        // short feasibility screen are redrawn.
        std::optional<ConstraintSet> cs;
        for (int draw = 0; draw < kMaxSetDraws && !cs; ++draw) {
          const int count = rho_rng.uniform_int(1, max_constraint_count(n));
          ConstraintSet cand = random_general_constraints(n, count, rho_rng);
          SeededStream screen_rng = detail::run_stream(
              cfg.seed, detail::StreamFamily::kScreening,
              (static_cast<std::uint64_t>(n) << 32) +
                  (static_cast<std::uint64_t>(a) << 16) +
                  (static_cast<std::uint64_t>(b) << 8) +
                  static_cast<std::uint64_t>(draw));
          if (detail::passes_screen(cand, screen_rng, cfg.flow)) {
            cs = std::move(cand);
          } else {
            ++rejected;
          }
        }
        if (!cs) {
          throw FeasibilityFailure(
              "exp_constrained_general: no satisfiable constraint set drawn");
        }
        groups.push_back({n, a, b, rho, std::move(*cs)});
      }
    }
  }
  const auto per = static_cast<std::size_t>(restarts);
  auto runs = run_indexed(groups.size() * per, cfg.workers, [&](std::size_t i) {
    const Group& g = groups[i / per];
    SeededStream rng = detail::run_stream(
        cfg.seed, detail::StreamFamily::kGeneral,
        (static_cast<std::uint64_t>(g.n) << 32) +
            (static_cast<std::uint64_t>(g.rho_index) << 16) +
            (static_cast<std::uint64_t>(g.set_index + 1) << 8) + i % per);
    return detail::constrained_run("constrained-general", cfg,
                                   ControlProblem(g.rho, random_theta(g.n, 1)),
                                   g.cs, rng);
  });
  ConstrainedResult out;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    ConstrainedGroup cg;
    cg.n = groups[gi].n;
    cg.rho_index = groups[gi].rho_index;
    cg.set_index = groups[gi].set_index;
    cg.count = groups[gi].cs.num_b();
    cg.j_min = std::numeric_limits<double>::infinity();
    cg.j_max = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < per; ++r) {
      const auto& run = runs[gi * per + r];
      if (!run.record) {
        ++cg.feasibility_failures;
        continue;
      }
      cg.j_min = std::min(cg.j_min, run.record->j_final);
      cg.j_max = std::max(cg.j_max, run.record->j_final);
      cg.max_violation = std::max(cg.max_violation, run.violation);
      out.records.push_back(*run.record);
    }
    out.feasibility_failures += cg.feasibility_failures;
    out.groups.push_back(cg);
  }
  out.rejected_sets = rejected;
  return out;
}

// Element fixing with Theta = |N><N|: for each n and each count of fixed
// entries in [min(n, N^2-N-1), N^2-N-1], `sets` random index sets (with a
// fresh rho each), compared against the analytic optimum.
inline ConstrainedResult exp_constrained_element_fixing(
    const std::vector<int>& ns, int sets, const ExperimentConfig& cfg) {
  struct Job {
    int n;
    int count;
    int set;
  };
  std::vector<Job> jobs;
  for (int n : ns) {
    if (n < 2 || n > 5) {
      throw ContractViolation("exp_constrained_element_fixing: n must be in 2..5");
    }
    const int hi = max_constraint_count(n);
    for (int c = std::min(n, hi); c <= hi; ++c) {
      for (int s = 0; s < sets; ++s) jobs.push_back({n, c, s});
    }
  }
  auto runs = run_indexed(jobs.size(), cfg.workers, [&](std::size_t i) {
    const Job& j = jobs[i];
    SeededStream rng =
        detail::run_stream(cfg.seed, detail::StreamFamily::kElementFixing, i);
    const auto entries = random_fixed_entries(j.n, j.count, rng);
    const ControlProblem p(random_rho(j.n, 0, ZeroPlacement::kRandomPositions, rng),
                           random_theta(j.n, 1));
    auto run = detail::constrained_run("element-fixing", cfg, p,
                                       build_element_fixing(j.n, entries), rng);
    run.analytic = analytic_jmax_element_fixing(p, entries);
    return run;
  });
  ConstrainedResult out;
  for (std::size_t i = 0; i < jobs.size();) {
    ConstrainedGroup cg;
    cg.n = jobs[i].n;
    cg.set_index = jobs[i].count;
    cg.count = jobs[i].count;
    cg.j_min = std::numeric_limits<double>::infinity();
    cg.j_max = -std::numeric_limits<double>::infinity();
    for (; i < jobs.size() && jobs[i].n == cg.n && jobs[i].count == cg.count; ++i) {
      const auto& run = runs[i];
      if (!run.record) {
        ++cg.feasibility_failures;
        continue;
      }
      cg.j_min = std::min(cg.j_min, run.record->j_final);
      cg.j_max = std::max(cg.j_max, run.record->j_final);
      cg.max_analytic_gap = std::max(
          cg.max_analytic_gap, std::abs(run.record->j_final - run.analytic));
      cg.max_violation = std::max(cg.max_violation, run.violation);
      out.records.push_back(*run.record);
    }
    out.feasibility_failures += cg.feasibility_failures;
    out.groups.push_back(cg);
  }
  return out;
}

inline constexpr const char* kConstrainedCsvHeader =
    "n,rho_index,set_index,count,j_min,j_max,spread,max_analytic_gap,"
    "max_violation,feasibility_failures";

inline void write_constrained_csv(std::ostream& os, const ConstrainedResult& r) {
  os << kConstrainedCsvHeader << '\n';
  for (const ConstrainedGroup& g : r.groups) {
    os << g.n << ',' << g.rho_index << ',' << g.set_index << ',' << g.count
       << ',' << detail::format_double(g.j_min) << ','
       << detail::format_double(g.j_max) << ','
       << detail::format_double(g.j_max - g.j_min) << ','
       << detail::format_double(g.max_analytic_gap) << ','
       << detail::format_double(g.max_violation) << ','
       << g.feasibility_failures << '\n';
  }
}

}  // namespace krausflow
