// nilwalk command-line front end.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nilwalk/diffusion.hpp"
#include "nilwalk/io.hpp"
#include "nilwalk/tensor.hpp"
#include "nilwalk/verify.hpp"
#include "nilwalk/walk.hpp"

using namespace nilwalk;
namespace fs = std::filesystem;

namespace {

struct Global {
  int threads = 1;
  std::uint64_t seed = 1;
  std::string out;
};

struct GraphSource {
  std::string spec;    // path or "-"
  std::string preset;  // triangular | dice
  std::vector<double> params;

  void attach(CLI::App* app) {
    app->add_option("--spec", spec, "graph spec JSON file ('-' for stdin; default stdin)");
    app->add_option("--preset", preset, "built-in graph instead of a spec")->check(CLI::IsMember({"triangular", "dice"}));
    app->add_option("--params", params, "six preset probabilities")->delimiter(',')->expected(6);
  }
};

VoltageGraph preset_graph(const std::string& name, std::vector<double> p) {
  if (name == "triangular") {
    if (p.empty()) p = {0.25, 0.15, 0.2, 0.1, 0.2, 0.1};
    return triangular_preset(p[0], p[1], p[2], p[3], p[4], p[5]);
  }
  if (p.empty()) p = {0.1, 0.15, 0.25, 0.2, 0.3, 0.5};
  return dice_preset(p[0], p[1], p[2], p[3], p[4], p[5]);
}

GraphSpec load(const GraphSource& src) {
  if (!src.preset.empty()) return GraphSpec{preset_graph(src.preset, src.params), std::nullopt, std::nullopt};
  if (src.spec.empty() || src.spec == "-") {
    std::string text((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
    return graph_spec_from_json(parse_json(text, "stdin"));
  }
  return graph_spec_from_json(read_json_file(src.spec));
}

void emit(const Json& j) { std::cout << j.dump(2) << "\n"; }

fs::path out_file(const Global& g, const std::string& name) {
  fs::path dir = output_dir(g.out);
  fs::create_directories(dir);
  return dir / name;
}

void write_json(const fs::path& p, const Json& j) {
  std::ofstream os(p);
  os << j.dump(2) << "\n";
}

Json realization_json(const VoltageGraph& g, const Realization& phi) {
  Json offs = Json::object(), incs = Json::object();
  for (int v = 0; v < g.vertex_count(); ++v) offs[g.vertices()[v]] = detail::element_json(phi.vertex_offsets[v]);
  for (int e = 0; e < g.edge_count(); ++e) incs[g.edge(e).id] = detail::element_json(phi.edge_increments[e]);
  return Json{{"offsets", offs}, {"increments", incs}};
}

// Smooth bump on G used by the semigroup oracle.
double bump(const GradedLieAlgebra& alg, std::span<const double> z) {
  double s = 0.0;
  for (int k = 1; k <= alg.step(); ++k)
    for (int i = alg.layer_begin(k); i < alg.layer_end(k); ++i) s += z[i] * z[i] / (k == 1 ? 4.0 : 2.0);
  return std::exp(-s);
}

Json ensemble_summary(const PathEnsemble& ens) {
  Json times = Json::array();
  for (int k = 0; k < ens.time_count(); ++k) {
    Eigen::MatrixXd m = ens.marginal(k);
    Json means = Json::array(), ses = Json::array();
    for (int i = 0; i < m.cols(); ++i) {
      auto e = mean_estimate(m.col(i));
      means.push_back(e.value);
      ses.push_back(e.se);
    }
    times.push_back(Json{{"t", ens.times[k]}, {"mean", means}, {"se", ses}});
  }
  Json meta = Json::object();
  for (const auto& [k, v] : ens.metadata) meta[k] = v;
  return Json{{"paths", ens.paths}, {"metadata", meta}, {"marginals", times}};
}

struct WalkFlags {
  int n = 1024;
  std::int64_t paths = 10000;
  bool center = false;
  double horizon = 1.0;
  std::vector<double> times;
  std::int64_t csv_paths = 100;
};

struct DiffusionFlags {
  double h = 1.0 / 1024;
  std::int64_t paths = 10000;
  int substeps = 64;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random walks on nilpotent covering graphs: geometry, simulation and limit-theorem checks"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print help and exit");  // keeps --h free for the time step
  Global glob;
  app.add_option("--threads", glob.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", glob.seed, "master seed");
  app.add_option("--out", glob.out, std::string("output directory (default $") + kOutDirEnv + " or .)");

  // preset
  auto* preset = app.add_subcommand("preset", "print a built-in graph spec");
  std::string preset_name;
  std::vector<double> preset_params;
  preset->add_option("name", preset_name)->required()->check(CLI::IsMember({"triangular", "dice"}));
  preset->add_option("--params", preset_params, "six probabilities")->delimiter(',')->expected(6);

  // albanese / realize / beta
  GraphSource alb_src, real_src, beta_src;
  auto* albanese_cmd = app.add_subcommand("albanese", "invariant measure, Albanese metric, frame and drift");
  alb_src.attach(albanese_cmd);
  auto* realize = app.add_subcommand("realize", "modified harmonic realization and its checks");
  real_src.attach(realize);
  auto* beta_cmd = app.add_subcommand("beta", "layer-2 drift of the spec's realization");
  beta_src.attach(beta_cmd);

  // simulate-walk
  GraphSource walk_src;
  WalkFlags wf;
  auto* sim_walk = app.add_subcommand("simulate-walk", "sample scaled walk trajectories");
  walk_src.attach(sim_walk);
  sim_walk->add_option("--n", wf.n, "steps per unit time")->check(CLI::PositiveNumber);
  sim_walk->add_option("--paths", wf.paths)->check(CLI::PositiveNumber);
  sim_walk->add_flag("--center", wf.center, "subtract the drift exp(-kρ)");
  sim_walk->add_option("--horizon", wf.horizon)->check(CLI::PositiveNumber);
  sim_walk->add_option("--times", wf.times, "record only these times")->delimiter(',');
  sim_walk->add_option("--csv-paths", wf.csv_paths, "paths written to CSV (-1 for all)");

  // simulate-diffusion
  GraphSource diff_src;
  DiffusionFlags df;
  std::string scheme = "castell", drift = "beta";
  std::vector<double> diff_times;
  std::int64_t diff_csv_paths = 100;
  auto* sim_diff = app.add_subcommand("simulate-diffusion", "sample the limiting diffusion");
  diff_src.attach(sim_diff);
  sim_diff->add_option("--scheme", scheme)->check(CLI::IsMember({"euler", "castell"}));
  sim_diff->add_option("--h", df.h, "time step")->check(CLI::PositiveNumber);
  sim_diff->add_option("--paths", df.paths)->check(CLI::PositiveNumber);
  sim_diff->add_option("--substeps", df.substeps, "sub-mesh for iterated integrals")->check(CLI::PositiveNumber);
  sim_diff->add_option("--drift", drift)->check(CLI::IsMember({"beta", "rho"}));
  sim_diff->add_option("--times", diff_times, "record only these times")->delimiter(',');
  sim_diff->add_option("--csv-paths", diff_csv_paths, "paths written to CSV (-1 for all)");

  // semigroup-dp
  GraphSource dp_src;
  std::vector<int> dp_ns = {4, 16, 64};
  double dp_prune = 0.0;
  std::int64_t dp_max = 10000000;
  std::int64_t dp_mc = 0;
  auto* dp_cmd = app.add_subcommand("semigroup-dp", "exact L^n P f at the base point for a Gaussian bump f");
  dp_src.attach(dp_cmd);
  dp_cmd->add_option("--n", dp_ns, "step counts")->delimiter(',');
  dp_cmd->add_option("--prune", dp_prune, "drop states lighter than this (mass is reported)");
  dp_cmd->add_option("--max-states", dp_max);
  dp_cmd->add_option("--compare-paths", dp_mc, "also estimate E f(Y_1) with this many diffusion paths");

  // clt-test
  GraphSource clt_src;
  WalkFlags cf;
  cf.n = 4096;
  cf.paths = 100000;
  DiffusionFlags cdf;
  cdf.h = 1.0 / 16;
  cdf.paths = 100000;
  std::vector<double> clt_times = {0.5, 1.0};
  int energy_points = 1000, permutations = 1000;
  bool negative_control = false, area = false;
  auto* clt = app.add_subcommand("clt-test", "moment and energy tests of the walk against the diffusion");
  clt_src.attach(clt);
  clt->add_option("--n", cf.n)->check(CLI::PositiveNumber);
  clt->add_option("--paths", cf.paths)->check(CLI::PositiveNumber);
  clt->add_option("--diffusion-paths", cdf.paths)->check(CLI::PositiveNumber);
  clt->add_option("--h", cdf.h)->check(CLI::PositiveNumber);
  clt->add_option("--substeps", cdf.substeps)->check(CLI::PositiveNumber);
  clt->add_option("--times", clt_times)->delimiter(',');
  clt->add_option("--energy-points", energy_points)->check(CLI::PositiveNumber);
  clt->add_option("--permutations", permutations)->check(CLI::PositiveNumber);
  clt->add_flag("--negative-control", negative_control, "also run with β flipped (must fail)");
  clt->add_flag("--area", area, "also compare level-2 areas with Brownian Lévy area");

  // measure-change
  GraphSource mc_src;
  bool mc_test = false;
  WalkFlags mwf;
  mwf.n = 4096;
  mwf.paths = 100000;
  DiffusionFlags mdf;
  mdf.h = 1.0 / 16;
  mdf.paths = 100000;
  auto* mc = app.add_subcommand("measure-change", "exponential tilt to a centred walk");
  mc_src.attach(mc);
  mc->add_flag("--test", mc_test, "run the moment battery on the twisted walk");
  mc->add_option("--n", mwf.n)->check(CLI::PositiveNumber);
  mc->add_option("--paths", mwf.paths)->check(CLI::PositiveNumber);
  mc->add_option("--diffusion-paths", mdf.paths)->check(CLI::PositiveNumber);

  // signature
  std::string sig_input;
  int sig_level = 2, sig_bm = 0, sig_steps = 16, sig_substeps = 64;
  auto* sig = app.add_subcommand("signature", "level-2 rough path of a CSV path, or of a Brownian sample");
  sig->add_option("--input", sig_input, "CSV with columns t,x1..xd");
  sig->add_option("--level", sig_level, "also print the full signature to this level")->check(CLI::Range(1, 6));
  sig->add_option("--brownian", sig_bm, "simulate a d-dimensional Brownian rough path instead")->check(CLI::PositiveNumber);
  sig->add_option("--steps", sig_steps, "grid intervals on [0,1] for --brownian")->check(CLI::PositiveNumber);
  sig->add_option("--substeps", sig_substeps)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*preset) {
      emit(graph_to_json(preset_graph(preset_name, preset_params)));
      return 0;
    }
    if (*albanese_cmd) {
      auto s = load(alb_src);
      emit(albanese_json(s.graph, analyse_walk(s.graph)));
      return 0;
    }
    if (*realize) {
      auto s = load(real_src);
      auto w = analyse_walk(s.graph);
      auto phi = realization_for(s, w);
      Json j = realization_json(s.graph, phi);
      j["harmonicity_residual"] = harmonicity_residual(s.graph, phi, w.gamma.rho);
      j["martingale_defect"] = martingale_two_step_defect(s.graph, phi, w.gamma.rho);
      j["modified_harmonic"] = phi.is_modified_harmonic;
      auto c = corrector(phi, w.phi0);
      j["corrector_max_norm"] = c.max_norm;
      emit(j);
      return 0;
    }
    if (*beta_cmd) {
      auto s = load(beta_src);
      auto w = analyse_walk(s.graph);
      auto phi = realization_for(s, w);
      auto b = drift_beta(s.graph, w.measure, w.gamma, phi, w.alb);
      Json j{{"beta", vector_json(b.beta)}, {"rho", vector_json(w.gamma.rho)}};
      if (b.beta_frame) j["beta_frame"] = vector_json(*b.beta_frame);
      if (b.beta_bar) j["beta_bar"] = matrix_json(*b.beta_bar);
      emit(j);
      return 0;
    }
    if (*sim_walk) {
      auto s = load(walk_src);
      auto w = analyse_walk(s.graph);
      auto phi = realization_for(s, w);
      WalkConfig cfg;
      cfg.n = wf.n;
      cfg.paths = wf.paths;
      cfg.horizon = wf.horizon;
      cfg.seed = glob.seed;
      cfg.center = wf.center;
      cfg.keep_times = wf.times;
      cfg.threads = glob.threads;
      auto ens = sample_walk(s.graph, phi, cfg, &w.gamma.rho);
      auto csv = out_file(glob, "walk_trajectories.csv");
      std::ofstream os(csv);
      write_trajectories_csv(os, ens, wf.csv_paths);
      Json summary{{"config", Json{{"n", wf.n}, {"paths", wf.paths}, {"seed", glob.seed}, {"center", wf.center},
                                   {"horizon", wf.horizon}, {"threads", glob.threads}}},
                   {"trajectories", csv.string()},
                   {"summary", ensemble_summary(ens)}};
      write_json(out_file(glob, "walk_summary.json"), summary);
      emit(summary);
      return 0;
    }
    if (*sim_diff) {
      auto s = load(diff_src);
      auto w = analyse_walk(s.graph);
      auto spec = diffusion_spec(s.graph, w, drift == "rho" ? DriftKind::rho : DriftKind::beta);
      spec.h = df.h;
      spec.paths = df.paths;
      spec.substeps = df.substeps;
      spec.seed = glob.seed;
      spec.threads = glob.threads;
      spec.keep_times = diff_times;
      auto ens = scheme == "euler" ? euler_simulate(spec) : castell_simulate(spec);
      auto csv = out_file(glob, "diffusion_trajectories.csv");
      std::ofstream os(csv);
      write_trajectories_csv(os, ens, diff_csv_paths);
      Json summary{{"config", Json{{"scheme", scheme}, {"h", df.h}, {"paths", df.paths}, {"substeps", df.substeps},
                                   {"drift", drift}, {"seed", glob.seed}, {"threads", glob.threads}}},
                   {"trajectories", csv.string()},
                   {"summary", ensemble_summary(ens)}};
      write_json(out_file(glob, "diffusion_summary.json"), summary);
      emit(summary);
      return 0;
    }
    if (*dp_cmd) {
      auto s = load(dp_src);
      auto w = analyse_walk(s.graph);
      auto phi = realization_for(s, w);
      const auto& alg = *s.graph.algebra();
      GroupFunction f = [&](std::span<const double> z) { return bump(alg, z); };
      DpOptions opt;
      opt.prune_below = dp_prune;
      opt.max_states = dp_max;
      Json rows = Json::array();
      for (int n : dp_ns) {
        auto r = semigroup_dp(s.graph, phi, n, f, opt);
        rows.push_back(Json{{"n", n},
                            {"value", r.value},
                            {"states", r.states},
                            {"peak_states", r.peak_states},
                            {"total_mass", r.total_mass},
                            {"dropped_mass", r.dropped_mass}});
      }
      Json j{{"config", Json{{"prune", dp_prune}, {"max_states", dp_max}, {"seed", glob.seed}}}, {"dp", rows}};
      if (dp_mc > 0) {
        auto spec = diffusion_spec(s.graph, w);
        spec.h = 1.0 / 16;
        spec.paths = dp_mc;
        spec.seed = glob.seed;
        spec.threads = glob.threads;
        spec.keep_times = {1.0};
        auto ens = castell_simulate(spec);
        Eigen::VectorXd vals(dp_mc);
        int k = ens.time_index(1.0);
        for (std::int64_t p = 0; p < dp_mc; ++p) vals[p] = bump(alg, ens.at(p, k));
        auto est = mean_estimate(vals);
        j["diffusion"] = Json{{"estimate", est.value}, {"se", est.se}, {"paths", dp_mc}};
      }
      write_json(out_file(glob, "semigroup_dp.json"), j);
      emit(j);
      return 0;
    }
    if (*clt) {
      auto s = load(clt_src);
      auto w = analyse_walk(s.graph);
      auto phi = realization_for(s, w);
      if (w.gamma.rho.cwiseAbs().maxCoeff() > 1e-10)
        throw PreconditionError("walk is not centred (rho != 0); run measure-change --test instead");
      WalkConfig cfg;
      cfg.n = cf.n;
      cfg.paths = cf.paths;
      cfg.seed = glob.seed;
      cfg.center = true;
      cfg.keep_times = clt_times;
      cfg.threads = glob.threads;
      auto walk = sample_walk(s.graph, phi, cfg, &w.gamma.rho);
      auto make_diffusion = [&](const DriftBeta& beta) {
        auto spec = diffusion_spec(s.graph.algebra(), w.alb, beta, w.gamma.rho);
        spec.h = cdf.h;
        spec.paths = cdf.paths;
        spec.substeps = cdf.substeps;
        spec.seed = glob.seed + 1;
        spec.threads = glob.threads;
        spec.keep_times = clt_times;
        return castell_simulate(spec);
      };
      CltOptions opt;
      opt.times = clt_times;
      opt.energy_points = energy_points;
      opt.permutations = permutations;
      opt.seed = glob.seed + 2;
      opt.id = "clt";
      auto rep = clt_moment_test(walk, w.alb, w.beta.beta, w.gamma.rho, make_diffusion(w.beta), opt);
      Json config{{"n", cf.n},          {"paths", cf.paths}, {"diffusion_paths", cdf.paths}, {"h", cdf.h},
                  {"substeps", cdf.substeps}, {"seed", glob.seed}, {"threads", glob.threads}};
      Json out = report_json(rep, config);
      bool pass = rep.pass();
      if (negative_control) {
        auto flipped = w.beta;
        flipped.beta = -w.beta.beta;
        opt.id = "negative_control";
        auto bad = clt_moment_test(walk, w.alb, flipped.beta, w.gamma.rho, make_diffusion(flipped), opt);
        out["negative_control"] = report_json(bad);
        out["negative_control"]["rejected"] = !bad.pass();
        pass = pass && !bad.pass();
      }
      if (area) {
        AreaOptions ao;
        ao.times = clt_times;
        ao.bm_paths = cdf.paths;
        ao.seed = glob.seed + 3;
        ao.threads = glob.threads;
        auto ar = area_anomaly_test(walk, w.alb, w.beta, ao);
        out["area"] = report_json(ar);
        pass = pass && ar.pass();
      }
      out["pass"] = pass;
      write_json(out_file(glob, "clt_report.json"), out);
      emit(out);
      return pass ? 0 : 1;
    }
    if (*mc) {
      auto s = load(mc_src);
      auto w = analyse_walk(s.graph);
      MeasureChangeOptions mopt;
      mopt.seed = glob.seed;
      auto tw = measure_change(s.graph, w.phi0, mopt);
      Json lam = Json::object();
      for (int v = 0; v < s.graph.vertex_count(); ++v) lam[s.graph.vertices()[v]] = vector_json(tw.lambda_star[v]);
      Json j{{"lambda_star", lam},
             {"twisted_p", tw.twisted_p},
             {"df_residual", tw.df_residual},
             {"start_spread", tw.start_spread},
             {"min_hessian_eigenvalue", tw.min_hessian_eigenvalue},
             {"twisted_rho", vector_json(tw.gamma.rho)},
             {"twisted_albanese", Json{{"gram", matrix_json(tw.alb.gram)},
                                       {"metric", matrix_json(tw.alb.metric)},
                                       {"volume", tw.alb.volume},
                                       {"beta", vector_json(tw.beta.beta)}}},
             {"twisted_spec", graph_to_json(*tw.twisted)}};
      bool pass = tw.df_residual <= 1e-10 && tw.start_spread <= 1e-8;
      if (mc_test) {
        TwistedCltOptions opt;
        opt.twist = mopt;
        opt.walk.n = mwf.n;
        opt.walk.paths = mwf.paths;
        opt.walk.seed = glob.seed;
        opt.walk.threads = glob.threads;
        opt.diffusion.h = mdf.h;
        opt.diffusion.substeps = mdf.substeps;
        opt.diffusion.paths = mdf.paths;
        opt.diffusion.seed = glob.seed + 1;
        opt.diffusion.threads = glob.threads;
        opt.clt.seed = glob.seed + 2;
        opt.clt.id = "twisted_clt";
        auto rep = twisted_clt_test(s.graph, w.phi0, opt);
        j["report"] = report_json(rep.report);
        pass = pass && rep.report.pass();
      }
      j["pass"] = pass;
      write_json(out_file(glob, "measure_change.json"), j);
      emit(j);
      return pass ? 0 : 1;
    }
    if (*sig) {
      Level2RoughPath rp;
      if (sig_bm > 0) {
        std::vector<double> grid(sig_steps + 1);
        for (int k = 0; k <= sig_steps; ++k) grid[k] = static_cast<double>(k) / sig_steps;
        rp = distorted_bm(sig_bm, Eigen::MatrixXd::Zero(sig_bm, sig_bm), grid, glob.seed, 0, sig_substeps);
      } else {
        if (sig_input.empty()) throw ValidationError("", "signature needs --input or --brownian");
        std::ifstream in(sig_input);
        if (!in) throw ValidationError("", "cannot open " + sig_input);
        std::string line;
        std::getline(in, line);
        std::vector<double> times;
        std::vector<std::vector<double>> pts;
        for (int row = 2; std::getline(in, line); ++row) {
          if (line.empty()) continue;
          std::stringstream ls(line);
          std::string cell;
          std::vector<double> vals;
          while (std::getline(ls, cell, ',')) {
            char* end = nullptr;
            vals.push_back(std::strtod(cell.c_str(), &end));
            if (end == cell.c_str()) throw ValidationError("", sig_input + ":" + std::to_string(row) + ": not a number");
          }
          if (vals.size() < 2 || (!pts.empty() && vals.size() - 1 != pts[0].size()))
            throw ValidationError("", sig_input + ":" + std::to_string(row) + ": wrong column count");
          times.push_back(vals[0]);
          pts.emplace_back(vals.begin() + 1, vals.end());
        }
        if (pts.size() < 2) throw ValidationError("", "path needs at least two points");
        const int d = static_cast<int>(pts[0].size());
        std::vector<TensorElement> values;
        SegmentAppender app2(d, 2);
        TensorElement cur = TensorElement::unit(d, 2);
        values.push_back(cur);
        std::vector<double> inc(d);
        for (std::size_t k = 1; k < pts.size(); ++k) {
          for (int i = 0; i < d; ++i) inc[i] = pts[k][i] - pts[k - 1][i];
          app2.append(cur, inc.data());
          values.push_back(cur);
        }
        rp = Level2RoughPath::from_values(times, values);
      }
      auto csv = out_file(glob, "rough_path.csv");
      std::ofstream os(csv);
      os << "t";
      for (int i = 1; i <= rp.d; ++i) os << ",x" << i;
      for (int i = 1; i <= rp.d; ++i)
        for (int j = 1; j <= rp.d; ++j) os << ",xx" << i << "_" << j;
      os << "\n";
      for (std::size_t k = 0; k < rp.values.size(); ++k) {
        os << fmt17(rp.times[k]);
        for (double v : rp.values[k].level(1)) os << "," << fmt17(v);
        for (double v : rp.values[k].level(2)) os << "," << fmt17(v);
        os << "\n";
      }
      Json j{{"rough_path", csv.string()}, {"d", rp.d}, {"chen_defect", chen_defect(rp)}};
      if (sig_level > 2) {
        auto ext = lyons_extend(rp, sig_level);
        Json levels = Json::array();
        for (int k = 1; k <= sig_level; ++k) levels.push_back(ext.values.back().level(k));
        j["signature"] = levels;
      } else {
        Json levels = Json::array();
        for (int k = 1; k <= sig_level; ++k) levels.push_back(rp.values.back().level(k));
        j["signature"] = levels;
      }
      emit(j);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
