// treebv command line front end: reproducible experiments over the
// tree-measure library, machine-first output (CSV/JSON + a run manifest).
//
// Exit codes: 0 success, 1 usage/config error, 2 invariant violation
// detected (for CI gating).

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "treebv/atom_analysis.hpp"
#include "treebv/builders.hpp"
#include "treebv/constraint_space.hpp"
#include "treebv/csv.hpp"
#include "treebv/errors.hpp"
#include "treebv/fourier_bv.hpp"
#include "treebv/measure.hpp"
#include "treebv/measure_io.hpp"
#include "treebv/rng.hpp"
#include "treebv/tree.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace treebv;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitUsage = 1;
constexpr int kExitViolation = 2;

struct CommonOpts {
  std::string outdir;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--out", opts.outdir,
                  "output directory (default: $TREEBV_OUTDIR or the working directory)");
  cmd->add_flag("--force", opts.force, "override the desk-scale size guards");
}

fs::path resolve_outdir(const CommonOpts& opts) {
  fs::path dir;
  if (!opts.outdir.empty()) {
    dir = opts.outdir;
  } else if (const char* env = std::getenv("TREEBV_OUTDIR"); env != nullptr && *env != '\0') {
    dir = env;
  } else {
    dir = ".";
  }
  fs::create_directories(dir);
  return dir;
}

/// Desk-scale guard: refuse configurations whose leaf storage would be
/// unreasonable for a laptop-class run unless --force is given.
void check_tree_budget(int q, int depth, int l, bool force) {
  const double leaves = std::pow(static_cast<double>(q), depth);
  const double bytes = leaves * l * 8.0 * (1.0 + static_cast<double>(q) / (q - 1.0));
  if (!force && bytes > 2.0e9) {
    throw std::invalid_argument("configuration needs ~" + std::to_string(bytes / 1e9) +
                                " GB of leaf storage; pass --force to proceed");
  }
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    const std::vector<std::string>& outputs, double elapsed_ms) {
  json manifest;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["version"] = kVersion;
  manifest["elapsed_ms"] = elapsed_ms;
  manifest["outputs"] = outputs;
  std::ofstream out(dir / (command + "_manifest.json"));
  out << manifest.dump(2) << '\n';
}

Eigen::VectorXd parse_vector(const std::string& text) {
  std::vector<double> values;
  std::stringstream stream(text);
  std::string field;
  while (std::getline(stream, field, ',')) {
    values.push_back(std::stod(field));
  }
  if (values.empty()) throw std::invalid_argument("empty vector literal: " + text);
  return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                           static_cast<Eigen::Index>(values.size()));
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

/// Shared subspace selection: exactly one of --subspace FILE, --bv M or
/// --full (with --q/--l).
struct SpaceOpts {
  std::string subspace_file;
  int bv_m = 0;
  bool full = false;
  int q = 3;
  int l = 2;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--subspace", subspace_file, "subspace JSON file");
    cmd->add_option("--bv", bv_m, "use the BV-type space on the m x m discrete torus");
    cmd->add_flag("--full", full, "use the full zero-column-sum space");
    cmd->add_option("--q", q, "branching factor for --full");
    cmd->add_option("--l", l, "value dimension for --full");
  }

  ConstraintSpace resolve(bool force) const {
    const int picked = (!subspace_file.empty()) + (bv_m > 0) + (full ? 1 : 0);
    if (picked != 1) {
      throw std::invalid_argument("pick exactly one of --subspace, --bv, --full");
    }
    if (!subspace_file.empty()) return load_subspace_json(subspace_file);
    if (bv_m > 0) {
      if (bv_m > 4 && !force) {
        throw std::invalid_argument("--bv beyond m = 4 needs --force");
      }
      return bv_space(bv_m);
    }
    return ConstraintSpace::full_zero_sum(q, l);
  }

  json config() const {
    json j;
    if (!subspace_file.empty()) j["subspace"] = subspace_file;
    if (bv_m > 0) j["bv_m"] = bv_m;
    if (full) {
      j["full"] = true;
      j["q"] = q;
      j["l"] = l;
    }
    return j;
  }
};

Eigen::VectorXd sample_direction_with_min_gamma(const ConstraintSpace& space, double min_gamma,
                                                std::mt19937_64& rng, int max_tries = 1000) {
  for (int i = 0; i < max_tries; ++i) {
    const Eigen::VectorXd v = unit_vector(rng, space.l());
    if (gamma(space, v).angle >= min_gamma) return v;
  }
  throw SamplingError("no direction with the requested rank-one angle was found");
}

// ---------------------------------------------------------------------------
// gamma / wavecone

int run_gamma(const SpaceOpts& space_opts, const CommonOpts& common, const std::string& v_text,
              std::int64_t brute_samples, std::uint64_t seed) {
  Stopwatch watch;
  const ConstraintSpace space = space_opts.resolve(common.force);
  const Eigen::VectorXd v = parse_vector(v_text);
  const AngleResult r = gamma(space, v);

  std::cout << "gamma = " << format_double(r.angle) << " rad (lambda_max = "
            << format_double(r.lambda_max) << (r.degenerate ? ", degenerate space" : "")
            << ")\n";
  if (brute_samples > 0) {
    const double brute = gamma_bruteforce(space, v, brute_samples, seed);
    std::cout << "sampling oracle (" << brute_samples << " draws) = " << format_double(brute)
              << "\n";
  }

  const fs::path dir = resolve_outdir(common);
  json out;
  out["q"] = space.q();
  out["l"] = space.l();
  out["dim"] = space.dim();
  out["v"] = vector_to_json(v);
  out["angle"] = r.angle;
  out["lambda_max"] = r.lambda_max;
  out["degenerate"] = r.degenerate;
  out["witness_w"] = vector_to_json(r.witness_w);
  std::ofstream(dir / "gamma.json") << out.dump(2) << '\n';

  json config = space_opts.config();
  config["v"] = v_text;
  config["brute_samples"] = brute_samples;
  config["seed"] = seed;
  write_manifest(dir, "gamma", config, {"gamma.json"}, watch.ms());
  return 0;
}

int run_wavecone(const SpaceOpts& space_opts, const CommonOpts& common,
                 const std::string& v_text, double tol) {
  Stopwatch watch;
  const ConstraintSpace space = space_opts.resolve(common.force);
  const Eigen::VectorXd v = parse_vector(v_text);
  const WaveConeResult r = wave_cone_member(space, v, tol);
  std::cout << (r.member ? "member" : "not a member") << " (gamma = "
            << format_double(r.detail.angle) << ", tol = " << format_double(tol) << ")\n";

  const fs::path dir = resolve_outdir(common);
  json out;
  out["member"] = r.member;
  out["angle"] = r.detail.angle;
  out["tol"] = tol;
  out["witness_w"] = vector_to_json(r.detail.witness_w);
  out["rank_one_residual"] = std::sin(r.detail.angle);  // ||vhat(x)w - P_W(vhat(x)w)||
  std::ofstream(dir / "wavecone.json") << out.dump(2) << '\n';

  json config = space_opts.config();
  config["v"] = v_text;
  config["tol"] = tol;
  write_manifest(dir, "wavecone", config, {"wavecone.json"}, watch.ms());
  return 0;
}

// ---------------------------------------------------------------------------
// lemma1

int run_lemma1(const CommonOpts& common, int q, int l, std::vector<double> eps_list, int trials,
               std::uint64_t seed) {
  Stopwatch watch;
  if (eps_list.empty()) eps_list = {1e-4, 1e-3, 1e-2};
  const fs::path dir = resolve_outdir(common);
  std::ofstream csv_file(dir / "lemma1.csv");
  CsvWriter csv(csv_file);
  csv.row({"eps", "trial", "excess", "bound", "max_orth", "holds"});

  int violations = 0;
  std::mt19937_64 rng = make_engine(seed);
  for (double eps : eps_list) {
    int eps_violations = 0;
    for (int trial = 0; trial < trials; ++trial) {
      const FlatConfig cfg = sample_flat_config(rng, q, l, eps);
      const Lemma1Result r = lemma1_check(cfg.a, cfg.D, eps);
      if (!r.holds) ++eps_violations;
      csv.row({CsvWriter::num(eps), CsvWriter::num(trial), CsvWriter::num(cfg.excess),
               CsvWriter::num(r.bound), CsvWriter::num(r.max_orth),
               r.holds ? "1" : "0"});
    }
    std::cout << "eps = " << format_double(eps) << ": violations: " << eps_violations << "\n";
    violations += eps_violations;
  }

  json config{{"q", q}, {"l", l}, {"eps", eps_list}, {"trials", trials}, {"seed", seed}};
  write_manifest(dir, "lemma1", config, {"lemma1.csv"}, watch.ms());
  return violations == 0 ? 0 : kExitViolation;
}

// ---------------------------------------------------------------------------
// lemma2

int run_lemma2(const CommonOpts& common, int q, int l, double eta, double delta, int trials,
               std::uint64_t seed, int seeds, double margin, bool rows) {
  Stopwatch watch;
  const fs::path dir = resolve_outdir(common);

  std::vector<std::future<Lemma2Estimate>> futures;
  for (int k = 0; k < seeds; ++k) {
    Lemma2Config config;
    config.q = q;
    config.l = l;
    config.eta = eta;
    config.delta = delta;
    config.trials = trials;
    config.seed = seed + static_cast<std::uint64_t>(k);
    config.margin = margin;
    config.collect_rows = rows;
    futures.push_back(std::async(std::launch::async, [config] { return lemma2_p0(config); }));
  }
  std::vector<Lemma2Estimate> estimates;
  estimates.reserve(static_cast<std::size_t>(seeds));
  for (auto& f : futures) estimates.push_back(f.get());  // merged in seed order

  std::ofstream csv_file(dir / "lemma2.csv");
  CsvWriter csv(csv_file);
  csv.row({"seed", "p0", "trials", "eq16_violations", "eq14_failures_above_margin",
           "max_eq16_defect"});
  double p_min = 1.0, p_max = 0.0;
  int total_violations = 0;
  for (int k = 0; k < seeds; ++k) {
    const Lemma2Estimate& est = estimates[static_cast<std::size_t>(k)];
    p_min = std::min(p_min, est.p0);
    p_max = std::max(p_max, est.p0);
    total_violations += est.eq16_violations + est.eq14_failures_above_margin;
    csv.row({CsvWriter::num(static_cast<std::int64_t>(seed) + k), CsvWriter::num(est.p0),
             CsvWriter::num(est.trials), CsvWriter::num(est.eq16_violations),
             CsvWriter::num(est.eq14_failures_above_margin),
             CsvWriter::num(est.max_eq16_defect)});
  }
  std::vector<std::string> outputs{"lemma2.csv"};
  if (rows) {
    std::ofstream rows_file(dir / "lemma2_rows.csv");
    CsvWriter rows_csv(rows_file);
    rows_csv.row({"seed", "config", "angle", "increment_sum", "critical_p"});
    for (int k = 0; k < seeds; ++k) {
      const auto& est = estimates[static_cast<std::size_t>(k)];
      for (std::size_t i = 0; i < est.rows.size(); ++i) {
        rows_csv.row({CsvWriter::num(static_cast<std::int64_t>(seed) + k),
                      CsvWriter::num(static_cast<std::int64_t>(i)),
                      CsvWriter::num(est.rows[i].angle),
                      CsvWriter::num(est.rows[i].increment_sum),
                      CsvWriter::num(est.rows[i].critical_p)});
      }
    }
    outputs.push_back("lemma2_rows.csv");
  }

  std::cout << "p0 in [" << format_double(p_min) << ", " << format_double(p_max)
            << "] across " << seeds << " seed(s); spread = " << format_double(p_max - p_min)
            << "\nbound violations: " << total_violations << "\n";

  json config{{"q", q},       {"l", l},         {"eta", eta},   {"delta", delta},
              {"trials", trials}, {"seed", seed}, {"seeds", seeds}, {"margin", margin},
              {"rows", rows}};
  write_manifest(dir, "lemma2", config, outputs, watch.ms());
  return total_violations == 0 ? 0 : kExitViolation;
}

// ---------------------------------------------------------------------------
// submartingale

int run_submartingale(const CommonOpts& common, const std::string& measure_file, double p,
                      bool expect_none) {
  Stopwatch watch;
  const TruncatedMeasure m = load_measure_json(measure_file);
  const SubmartingaleReport report = submartingale_check(m, p);

  const fs::path dir = resolve_outdir(common);
  std::ofstream csv_file(dir / "submartingale.csv");
  CsvWriter csv(csv_file);
  csv.row({"atom", "depth"});
  for (const VertexAddress& v : report.violations) {
    csv.row({v.to_string(), CsvWriter::num(v.depth())});
  }
  std::cout << "checked " << report.checked << " atoms at p = " << format_double(p)
            << "; violations: " << report.violations.size()
            << ", max deficit: " << format_double(report.max_deficit) << "\n";

  json config{{"measure", measure_file}, {"p", p}, {"expect_none", expect_none}};
  write_manifest(dir, "submartingale", config, {"submartingale.csv"}, watch.ms());
  return (expect_none && !report.violations.empty()) ? kExitViolation : 0;
}

// ---------------------------------------------------------------------------
// cascade

int run_cascade(const CommonOpts& common, const SpaceOpts& space_opts, bool validate,
                const std::string& v_text, const std::string& w_text, int depth,
                const std::string& heavy, std::uint64_t heavy_seed,
                std::vector<double> level_scales, bool everywhere) {
  Stopwatch watch;
  CascadeSpec spec;
  spec.direction = parse_vector(v_text);
  spec.weight = parse_vector(w_text);
  spec.depth = depth;
  spec.level_scales = std::move(level_scales);
  spec.heavy_seed = heavy_seed;
  spec.everywhere = everywhere;
  if (heavy == "first") {
    spec.heavy_rule = CascadeSpec::HeavyRule::FirstSon;
  } else if (heavy == "largest") {
    spec.heavy_rule = CascadeSpec::HeavyRule::LargestWeight;
  } else if (heavy == "random") {
    spec.heavy_rule = CascadeSpec::HeavyRule::SeededRandom;
  } else {
    throw std::invalid_argument("--heavy must be first, largest or random");
  }
  check_tree_budget(spec.q(), depth, static_cast<int>(spec.direction.size()), common.force);

  const TruncatedMeasure m =
      validate ? cascade_measure(spec, space_opts.resolve(common.force)) : cascade_measure(spec);

  const fs::path dir = resolve_outdir(common);
  save_measure_json(m, (dir / "cascade_measure.json").string());

  std::ofstream csv_file(dir / "cascade.csv");
  CsvWriter csv(csv_file);
  csv.row({"depth", "max_mass", "concentration_ratio", "tv", "polar_angle_to_v"});
  const Eigen::VectorXd vhat = spec.direction / spec.direction.norm();
  for (int n = 0; n <= depth; ++n) {
    Eigen::Index argmax = 0;
    const Eigen::RowVectorXd norms = m.level_values(n).colwise().norm();
    const double max_mass = norms.maxCoeff(&argmax);
    const double ratio = max_mass * std::pow(static_cast<double>(spec.q()), n);
    double polar_angle = std::numeric_limits<double>::quiet_NaN();
    if (max_mass > 0.0) {
      const Eigen::VectorXd polar = m.level_values(n).col(argmax) / max_mass;
      polar_angle = std::acos(std::clamp(std::abs(polar.dot(vhat)), 0.0, 1.0));
    }
    csv.row({CsvWriter::num(n), CsvWriter::num(max_mass), CsvWriter::num(ratio),
             CsvWriter::num(total_variation_at_depth(m, n)), CsvWriter::num(polar_angle)});
  }
  std::cout << "cascade written: depth " << depth << ", final concentration ratio "
            << format_double(m.level_values(depth).colwise().norm().maxCoeff() *
                             std::pow(static_cast<double>(spec.q()), depth))
            << "\n";

  json config = space_opts.config();
  config["v"] = v_text;
  config["w"] = w_text;
  config["depth"] = depth;
  config["heavy"] = heavy;
  config["heavy_seed"] = heavy_seed;
  config["validate"] = validate;
  config["everywhere"] = everywhere;
  write_manifest(dir, "cascade", config, {"cascade_measure.json", "cascade.csv"}, watch.ms());
  return 0;
}

// ---------------------------------------------------------------------------
// theorem-demo

int run_theorem_demo(const CommonOpts& common, const SpaceOpts& space_opts, int depth,
                     double eps, std::uint64_t seed) {
  Stopwatch watch;
  const ConstraintSpace space = space_opts.resolve(common.force);
  check_tree_budget(space.q(), depth, space.l(), common.force);
  std::mt19937_64 rng = make_engine(seed);

  // singular direction: a wave-cone element (for the BV space, a symbol
  // direction at an admissible frequency with its cosine witness weight)
  Eigen::VectorXd v;
  Eigen::VectorXd w;
  if (space_opts.bv_m > 0) {
    const int m = space_opts.bv_m;
    const auto freqs = wave_cone_frequencies(m);
    const auto& [g1, g2] = freqs[rng() % freqs.size()];
    std::normal_distribution<double> normal;
    v = bv_wave_cone_sample(m, g1, g2, {normal(rng), normal(rng)},
                            {normal(rng), normal(rng)});
    v.normalize();
    w.resize(space.q());
    for (int k = 0; k < space.q(); ++k) {
      const auto [x1, x2] = site_coords(m, k);
      w[k] = std::cos(2.0 * M_PI * (g1 * x1 + g2 * x2) / m);
    }
    w.array() -= w.mean();  // exact zero mean (the cosine already sums to 0)
  } else {
    v = unit_vector(rng, space.l());
    if (gamma(space, v).angle > 1e-8) {
      throw std::invalid_argument(
          "theorem-demo needs a wave-cone direction; this subspace rejects random ones "
          "(use --bv or --full)");
    }
    w = gamma(space, v).witness_w;
    const double worst = -w.minCoeff();
    if (worst > 0.0) w *= 0.95 / worst;  // multipliers 1 + w_i >= 0.05
  }

  CascadeSpec spec;
  spec.direction = v;
  spec.weight = w;
  spec.depth = depth;
  spec.heavy_rule = CascadeSpec::HeavyRule::LargestWeight;
  spec.everywhere = true;  // product cascade: keeps the singular half's mass
  const TruncatedMeasure singular = cascade_measure(spec, space);

  // contrast direction for the absolutely continuous half
  Eigen::VectorXd u = unit_vector(rng, space.l());
  u -= v * v.dot(u);
  if (u.norm() < 1e-6) u = unit_vector(rng, space.l());
  u.normalize();
  const TruncatedMeasure flat_part =
      uniform_direction_measure(TreeShape{space.q(), depth, space.l()}, u);
  const TruncatedMeasure m = mixture({flat_part, singular}, {0.5, 0.5});

  // heavy path of the cascade
  Eigen::Index heavy = 0;
  w.maxCoeff(&heavy);

  // first flat depth along the path
  int n0 = -1;
  {
    VertexAddress atom = VertexAddress::root();
    for (int n = 0; n < depth; ++n) {
      const auto c =
          classify_atom(martingale_value(m, atom), difference_matrix(m, atom), eps);
      if (c.flat()) {
        n0 = n;
        break;
      }
      atom = atom.child(static_cast<int>(heavy));
    }
  }
  if (n0 < 0) n0 = depth - 1;

  const fs::path dir = resolve_outdir(common);
  std::ofstream csv_file(dir / "theorem_demo.csv");
  CsvWriter csv(csv_file);
  csv.row({"depth", "max_mass", "concentration_ratio", "polar_gamma"});
  double max_gamma = 0.0;
  double final_gamma = std::numeric_limits<double>::quiet_NaN();
  for (int n = 0; n <= depth; ++n) {
    Eigen::Index argmax = 0;
    const Eigen::RowVectorXd norms = m.level_values(n).colwise().norm();
    const double max_mass = norms.maxCoeff(&argmax);
    const double ratio = max_mass * std::pow(static_cast<double>(space.q()), n);
    double polar_gamma = std::numeric_limits<double>::quiet_NaN();
    if (n >= n0 && max_mass > 0.0) {
      const Eigen::VectorXd polar = m.level_values(n).col(argmax) / max_mass;
      polar_gamma = gamma(space, polar).angle;
      max_gamma = std::max(max_gamma, polar_gamma);
      final_gamma = polar_gamma;
    }
    csv.row({CsvWriter::num(n), CsvWriter::num(max_mass), CsvWriter::num(ratio),
             CsvWriter::num(polar_gamma)});
  }

  // leaf capture: globally, for the path's flat component, and summed over
  // every flat component rooted at depth >= n0 (the singular branches; the
  // absolutely continuous region turns flat higher up)
  const LeafReport global = leaf_report(m, eps, n0);
  const FlatForest forest = flat_forest(m, eps);
  VertexAddress pivot = VertexAddress::root();
  for (int n = 0; n < n0; ++n) pivot = pivot.child(static_cast<int>(heavy));
  double component_mass = std::numeric_limits<double>::quiet_NaN();
  double singular_mass = 0.0;
  for (const auto& component : forest.components) {
    int root_depth = depth;
    for (const VertexAddress& a : component) root_depth = std::min(root_depth, a.depth());
    const bool has_pivot =
        std::find(component.begin(), component.end(), pivot) != component.end();
    if (has_pivot || root_depth >= std::max(n0, 1)) {
      const double captured = component_leaf_report(m, eps, component).captured_mass;
      if (has_pivot) component_mass = captured;
      if (root_depth >= std::max(n0, 1)) singular_mass += captured;
    }
  }

  std::cout << "first flat depth on the singular path: " << n0 << "\n"
            << "gamma over singular-candidate atoms: max " << format_double(max_gamma)
            << ", at the deepest level " << format_double(final_gamma) << "\n"
            << "captured mass: global " << format_double(global.captured_mass)
            << ", path component " << format_double(component_mass)
            << ", deep components total " << format_double(singular_mass)
            << " (singular half: 0.5)\n";

  json summary;
  summary["n0"] = n0;
  summary["max_gamma_over_candidates"] = max_gamma;
  summary["final_gamma"] = final_gamma;
  summary["global_captured_mass"] = global.captured_mass;
  summary["component_captured_mass"] = component_mass;
  summary["deep_components_captured_mass"] = singular_mass;
  summary["direction"] = vector_to_json(v);
  summary["witness_weight"] = vector_to_json(w);
  std::ofstream(dir / "theorem_demo.json") << summary.dump(2) << '\n';

  json config = space_opts.config();
  config["depth"] = depth;
  config["eps"] = eps;
  config["seed"] = seed;
  write_manifest(dir, "theorem-demo", config, {"theorem_demo.csv", "theorem_demo.json"},
                 watch.ms());
  return 0;
}

// ---------------------------------------------------------------------------
// bv-demo

int run_bv_demo(const CommonOpts& common, int m, int trials, int samples, std::uint64_t seed) {
  Stopwatch watch;
  if (m > 4 && !common.force) throw std::invalid_argument("--m beyond 4 needs --force");
  const ConstraintSpace W = bv_space(m);
  const int expected_dim = 4 * m * m - 4;
  std::mt19937_64 rng = make_engine(seed);
  std::normal_distribution<double> normal;

  const fs::path dir = resolve_outdir(common);
  std::ofstream csv_file(dir / "bv_demo.csv");
  CsvWriter csv(csv_file);
  csv.row({"kind", "g1", "g2", "gamma", "rank_one_defect"});

  // corollary sweep: symbol directions at admissible frequencies
  const auto freqs = wave_cone_frequencies(m);
  int certified = 0;
  double max_gamma = 0.0, max_defect = 0.0;
  for (int i = 0; i < samples; ++i) {
    const auto& [g1, g2] = freqs[i % freqs.size()];
    Eigen::VectorXd v;
    do {
      v = bv_wave_cone_sample(m, g1, g2, {normal(rng), normal(rng)},
                              {normal(rng), normal(rng)});
    } while (v.norm() < 1e-9);
    const AngleResult r = gamma(W, v);
    if (r.lambda_max >= 1.0 - 1e-10) ++certified;
    max_gamma = std::max(max_gamma, r.angle);
    const double defect = rank_one_defect(v);
    max_defect = std::max(max_defect, defect);
    csv.row({"symbol", CsvWriter::num(g1), CsvWriter::num(g2), CsvWriter::num(r.angle),
             CsvWriter::num(defect)});
  }

  // membership cross-check: frequency-side test against the projection test
  int agreements = 0;
  for (int i = 0; i < trials; ++i) {
    Eigen::MatrixXd D(kBVValueDim, m * m);
    if (i % 2 == 0) {
      // a genuine member, assembled from a random function pair
      Eigen::VectorXd coeffs(W.dim());
      for (int k = 0; k < W.dim(); ++k) coeffs[k] = normal(rng);
      const Eigen::VectorXd flat = W.basis_vectors() * coeffs;
      D = Eigen::Map<const Eigen::MatrixXd>(flat.data(), kBVValueDim, m * m);
    } else {
      for (int r = 0; r < kBVValueDim; ++r) {
        for (int c = 0; c < m * m; ++c) D(r, c) = normal(rng);
      }
      D.colwise() -= D.rowwise().mean().eval();
    }
    if (fourier_membership(m, D) == W.contains(D, 1e-8)) ++agreements;
  }

  const bool ok = (W.dim() == expected_dim) && (agreements == trials) &&
                  (certified == samples) && (max_defect <= 1e-6);
  std::cout << "dim W = " << W.dim() << " (expected " << expected_dim << ")\n"
            << "membership cross-check: " << agreements << "/" << trials << " agree\n"
            << "certified wave-cone samples: " << certified << "/" << samples
            << ", max gamma = " << format_double(max_gamma)
            << ", max rank-one defect = " << format_double(max_defect) << "\n";

  json summary;
  summary["m"] = m;
  summary["dim"] = W.dim();
  summary["expected_dim"] = expected_dim;
  summary["membership_agreements"] = agreements;
  summary["membership_trials"] = trials;
  summary["certified_samples"] = certified;
  summary["samples"] = samples;
  summary["max_gamma"] = max_gamma;
  summary["max_rank_one_defect"] = max_defect;
  std::ofstream(dir / "bv_demo.json") << summary.dump(2) << '\n';

  json config{{"m", m}, {"trials", trials}, {"samples", samples}, {"seed", seed}};
  write_manifest(dir, "bv-demo", config, {"bv_demo.csv", "bv_demo.json"}, watch.ms());
  return ok ? 0 : kExitViolation;
}

// ---------------------------------------------------------------------------
// adversarial

int run_adversarial(const CommonOpts& common, const SpaceOpts& space_opts,
                    const std::string& v_text, double min_gamma, int depth, double step,
                    std::uint64_t seed) {
  Stopwatch watch;
  const ConstraintSpace space = space_opts.resolve(common.force);
  check_tree_budget(space.q(), depth, space.l(), common.force);

  std::mt19937_64 rng = make_engine(seed);
  const Eigen::VectorXd v = v_text.empty()
                                ? sample_direction_with_min_gamma(space, min_gamma, rng)
                                : parse_vector(v_text);

  const AdversarialResult result = adversarial_concentration(space, v, depth, step);

  const fs::path dir = resolve_outdir(common);
  std::ofstream csv_file(dir / "adversarial.csv");
  CsvWriter csv(csv_file);
  csv.row({"depth", "ratio", "angle_to_v", "gamma_to_W", "residual_fraction",
           "increment_fraction", "angle_to_increment"});
  double min_gamma_seen = M_PI;
  for (const AdversarialRow& row : result.rows) {
    min_gamma_seen = std::min(min_gamma_seen, row.gamma_to_W);
    csv.row({CsvWriter::num(row.depth), CsvWriter::num(row.ratio),
             CsvWriter::num(row.angle_to_v), CsvWriter::num(row.gamma_to_W),
             CsvWriter::num(row.residual_fraction), CsvWriter::num(row.increment_fraction),
             CsvWriter::num(row.angle_to_increment)});
  }

  const double reference = std::pow(1.0 + step * (space.q() - 1.0), depth);
  const double final_ratio = result.rows.empty() ? 0.0 : result.rows.back().ratio;
  std::cout << "initial gamma = " << format_double(gamma(space, v).angle) << "\n"
            << "final concentration ratio = " << format_double(final_ratio)
            << " (rank-one cascade reference " << format_double(reference) << ", fraction "
            << format_double(final_ratio / reference) << ")\n"
            << "minimum gamma along the path = " << format_double(min_gamma_seen)
            << (result.stalled ? "\nevolution stalled at zero" : "") << "\n";

  json summary;
  summary["v"] = vector_to_json(v);
  summary["final_ratio"] = final_ratio;
  summary["reference_ratio"] = reference;
  summary["ratio_fraction"] = final_ratio / reference;
  summary["min_gamma_along_path"] = min_gamma_seen;
  summary["stalled"] = result.stalled;
  std::ofstream(dir / "adversarial.json") << summary.dump(2) << '\n';

  json config = space_opts.config();
  config["v"] = v_text;
  config["min_gamma"] = min_gamma;
  config["depth"] = depth;
  config["step"] = step;
  config["seed"] = seed;
  write_manifest(dir, "adversarial", config, {"adversarial.csv", "adversarial.json"},
                 watch.ms());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"treebv: constraint-space tree-measure experiments"};
  app.require_subcommand(1);

  // gamma
  auto* gamma_cmd = app.add_subcommand("gamma", "rank-one angle of a direction against W");
  SpaceOpts gamma_space;
  CommonOpts gamma_common;
  std::string gamma_v;
  std::int64_t gamma_brute = 0;
  std::uint64_t gamma_seed = 1;
  gamma_space.add_to(gamma_cmd);
  add_common(gamma_cmd, gamma_common);
  gamma_cmd->add_option("--v", gamma_v, "direction, comma separated")->required();
  gamma_cmd->add_option("--brute", gamma_brute, "also run the sampling oracle with N draws");
  gamma_cmd->add_option("--seed", gamma_seed, "oracle seed");

  // wavecone
  auto* cone_cmd = app.add_subcommand("wavecone", "wave-cone membership with witness");
  SpaceOpts cone_space;
  CommonOpts cone_common;
  std::string cone_v;
  double cone_tol = 1e-8;
  cone_space.add_to(cone_cmd);
  add_common(cone_cmd, cone_common);
  cone_cmd->add_option("--v", cone_v, "direction, comma separated")->required();
  cone_cmd->add_option("--tol", cone_tol, "membership tolerance in radians");

  // lemma1
  auto* lemma1_cmd = app.add_subcommand("lemma1", "flatness bound sweep on random flat atoms");
  CommonOpts lemma1_common;
  int lemma1_q = 3, lemma1_l = 2, lemma1_trials = 10000;
  std::uint64_t lemma1_seed = 1;
  std::vector<double> lemma1_eps;
  add_common(lemma1_cmd, lemma1_common);
  lemma1_cmd->add_option("--q", lemma1_q, "branching factor");
  lemma1_cmd->add_option("--l", lemma1_l, "value dimension");
  lemma1_cmd->add_option("--eps", lemma1_eps, "flatness levels (default 1e-4 1e-3 1e-2)");
  lemma1_cmd->add_option("--trials", lemma1_trials, "configurations per level");
  lemma1_cmd->add_option("--seed", lemma1_seed, "sampler seed");

  // lemma2
  auto* lemma2_cmd = app.add_subcommand("lemma2", "critical-exponent estimation");
  CommonOpts lemma2_common;
  int lemma2_q = 3, lemma2_l = 2, lemma2_trials = 10000, lemma2_seeds = 1;
  double lemma2_eta = M_PI / 4.0, lemma2_delta = 0.05, lemma2_margin = 0.05;
  std::uint64_t lemma2_seed = 1;
  bool lemma2_rows = false;
  add_common(lemma2_cmd, lemma2_common);
  lemma2_cmd->add_option("--q", lemma2_q, "branching factor");
  lemma2_cmd->add_option("--l", lemma2_l, "value dimension");
  lemma2_cmd->add_option("--eta", lemma2_eta, "angle hypothesis (radians)");
  lemma2_cmd->add_option("--delta", lemma2_delta, "increment budget");
  lemma2_cmd->add_option("--trials", lemma2_trials, "sampled configurations per seed");
  lemma2_cmd->add_option("--seed", lemma2_seed, "base seed");
  lemma2_cmd->add_option("--seeds", lemma2_seeds, "number of independent seeds");
  lemma2_cmd->add_option("--margin", lemma2_margin, "verification margin above p0");
  lemma2_cmd->add_flag("--rows", lemma2_rows, "emit one CSV row per configuration");

  // submartingale
  auto* sub_cmd = app.add_subcommand("submartingale", "p-submartingale check of a measure file");
  CommonOpts sub_common;
  std::string sub_measure;
  double sub_p = 0.9;
  bool sub_expect_none = false;
  add_common(sub_cmd, sub_common);
  sub_cmd->add_option("--measure", sub_measure, "measure JSON file")->required();
  sub_cmd->add_option("--p", sub_p, "exponent in (0, 1]");
  sub_cmd->add_flag("--expect-none", sub_expect_none, "exit 2 when violations are found");

  // cascade
  auto* cascade_cmd = app.add_subcommand("cascade", "build a rank-one cascade measure");
  CommonOpts cascade_common;
  SpaceOpts cascade_space;
  std::string cascade_v, cascade_w, cascade_heavy = "first";
  int cascade_depth = 6;
  std::uint64_t cascade_heavy_seed = 0;
  bool cascade_validate = false;
  std::vector<double> cascade_scales;
  add_common(cascade_cmd, cascade_common);
  cascade_space.add_to(cascade_cmd);
  cascade_cmd->add_option("--v", cascade_v, "direction, comma separated")->required();
  cascade_cmd->add_option("--w", cascade_w, "zero-sum weight, comma separated")->required();
  cascade_cmd->add_option("--depth", cascade_depth, "truncation depth");
  cascade_cmd->add_option("--heavy", cascade_heavy, "path rule: first, largest or random");
  cascade_cmd->add_option("--heavy-seed", cascade_heavy_seed, "seed for --heavy random");
  cascade_cmd->add_option("--scales", cascade_scales, "per-level weight factors");
  cascade_cmd->add_flag("--validate", cascade_validate,
                        "require direction (x) weight to lie in the selected subspace");
  bool cascade_everywhere = false;
  cascade_cmd->add_flag("--everywhere", cascade_everywhere,
                        "apply the rank-one step at every atom (product cascade)");

  // theorem-demo
  auto* demo_cmd = app.add_subcommand(
      "theorem-demo", "mixture of a flat part and a wave-cone cascade, with leaf capture");
  CommonOpts demo_common;
  SpaceOpts demo_space;
  int demo_depth = 6;
  double demo_eps = 0.1;
  std::uint64_t demo_seed = 1;
  add_common(demo_cmd, demo_common);
  demo_space.add_to(demo_cmd);
  demo_cmd->add_option("--depth", demo_depth, "truncation depth");
  demo_cmd->add_option("--eps", demo_eps, "flatness level");
  demo_cmd->add_option("--seed", demo_seed, "seed");

  // bv-demo
  auto* bv_cmd = app.add_subcommand("bv-demo", "BV-type space diagnostics on (Z/mZ)^2");
  CommonOpts bv_common;
  int bv_m = 2, bv_trials = 1000, bv_samples = 500;
  std::uint64_t bv_seed = 1;
  add_common(bv_cmd, bv_common);
  bv_cmd->add_option("--m", bv_m, "torus size");
  bv_cmd->add_option("--trials", bv_trials, "membership cross-check matrices");
  bv_cmd->add_option("--samples", bv_samples, "wave-cone samples");
  bv_cmd->add_option("--seed", bv_seed, "seed");

  // adversarial
  auto* adv_cmd = app.add_subcommand(
      "adversarial", "greedy concentration attempt outside the wave cone");
  CommonOpts adv_common;
  SpaceOpts adv_space;
  std::string adv_v;
  double adv_min_gamma = 0.3, adv_step = 1.0;
  int adv_depth = 10;
  std::uint64_t adv_seed = 1;
  add_common(adv_cmd, adv_common);
  adv_space.add_to(adv_cmd);
  adv_cmd->add_option("--v", adv_v, "direction (default: sampled with --min-gamma)");
  adv_cmd->add_option("--min-gamma", adv_min_gamma, "minimum rank-one angle when sampling");
  adv_cmd->add_option("--depth", adv_depth, "truncation depth");
  adv_cmd->add_option("--step", adv_step, "step scale of the concentration profile");
  adv_cmd->add_option("--seed", adv_seed, "seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gamma_cmd->parsed()) {
      return run_gamma(gamma_space, gamma_common, gamma_v, gamma_brute, gamma_seed);
    }
    if (cone_cmd->parsed()) {
      return run_wavecone(cone_space, cone_common, cone_v, cone_tol);
    }
    if (lemma1_cmd->parsed()) {
      return run_lemma1(lemma1_common, lemma1_q, lemma1_l, lemma1_eps, lemma1_trials,
                        lemma1_seed);
    }
    if (lemma2_cmd->parsed()) {
      return run_lemma2(lemma2_common, lemma2_q, lemma2_l, lemma2_eta, lemma2_delta,
                        lemma2_trials, lemma2_seed, lemma2_seeds, lemma2_margin, lemma2_rows);
    }
    if (sub_cmd->parsed()) {
      return run_submartingale(sub_common, sub_measure, sub_p, sub_expect_none);
    }
    if (cascade_cmd->parsed()) {
      return run_cascade(cascade_common, cascade_space, cascade_validate, cascade_v, cascade_w,
                         cascade_depth, cascade_heavy, cascade_heavy_seed, cascade_scales,
                         cascade_everywhere);
    }
    if (demo_cmd->parsed()) {
      return run_theorem_demo(demo_common, demo_space, demo_depth, demo_eps, demo_seed);
    }
    if (bv_cmd->parsed()) {
      return run_bv_demo(bv_common, bv_m, bv_trials, bv_samples, bv_seed);
    }
    if (adv_cmd->parsed()) {
      return run_adversarial(adv_common, adv_space, adv_v, adv_min_gamma, adv_depth, adv_step,
                             adv_seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
