#pragma once

// Command-line harness: train, sample, gof, converge, bench.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gmmnqmc/config.hpp"
#include "gmmnqmc/csv.hpp"
#include "gmmnqmc/gof.hpp"
#include "gmmnqmc/model_io.hpp"

namespace gmmnqmc::cli {

using config::json;

enum ExitCode : int { ok = 0, validation = 2, unsupported = 3, runtime = 4 };

/// Resolved inputs of one invocation.
struct Run {
  std::string command;
  json cfg;  // config file with command-line overrides merged in
  std::string preset;
  std::uint64_t seed = 1;
  std::filesystem::path out;
  std::optional<copula::CopulaSpec> spec;
};

namespace detail {

inline const json& section(const Run& r, const char* key) {
  static const json empty = json::object();
  return r.cfg.contains(key) ? r.cfg.at(key) : empty;
}

inline std::vector<std::string> methods(const json& j, const std::string& where) {
  auto m = config::detail::get<std::vector<std::string>>(j, "methods", where);
  if (m.empty()) throw ValidationError(where + ".methods: at least one method required");
  for (const auto& s : m) estimate::method_from_string(s);
  return m;
}

inline std::size_t positive(const json& j, const char* key, std::size_t fallback, const std::string& where) {
  const auto v = config::detail::get_or<long long>(j, key, static_cast<long long>(fallback), where);
  if (v < 1) throw ValidationError(where + "." + key + " must be >= 1 (got " + std::to_string(v) + ")");
  return static_cast<std::size_t>(v);
}

/// Pseudo-observation CSV checked to lie strictly inside the unit cube.
inline Matrix read_unit_csv(const std::string& path) {
  const Matrix m = csv::read_matrix(path);
  if (m.rows() < 1) throw ValidationError("'" + path + "': no data rows");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (!(v > 0.0 && v < 1.0)) {
        throw ValidationError("'" + path + "' row " + std::to_string(i + 1) + " column " + std::to_string(j + 1) +
                              ": value " + csv::format_double(v) + " is outside (0,1)");
      }
    }
  }
  return m;
}

struct Models {
  std::vector<gmmn::TrainedModel> store;
};

// Source for a method; gmmn methods load `model_path` once into `models`.
inline estimate::Source make_source(const Run& r, const std::string& method, const json& sec, const std::string& where,
                                    const std::optional<copula::CopulaSpec>& spec, const std::string& model_path,
                                    const gmmn::TrainedModel* model) {
  estimate::Source s;
  s.method = estimate::method_from_string(method);
  s.spec = spec;
  s.model = model;
  s.seed = config::detail::get_or<std::uint64_t>(sec, "seed", r.seed, where);
  s.randomization =
      qmc::randomization_from_string(config::detail::get_or<std::string>(sec, "randomization", "scrambled", where));
  s.inverse.numeric_gumbel = config::detail::get_or<bool>(sec, "numeric_gumbel", false, where);
  const bool gmmn_side = s.method == estimate::Method::gmmn_prs || s.method == estimate::Method::gmmn_qrs;
  if (gmmn_side && model == nullptr) {
    throw ValidationError(where + ": method " + method + " needs a 'model' file" +
                          (model_path.empty() ? "" : " (could not use '" + model_path + "')"));
  }
  if (!gmmn_side && !spec) throw ValidationError(where + ": method " + method + " needs a 'copula' section");
  if (gmmn_side && spec && model->output_dim() != copula::dimension(*spec)) {
    throw ValidationError(where + ": model output dimension " + std::to_string(model->output_dim()) +
                          " differs from the copula dimension " + std::to_string(copula::dimension(*spec)));
  }
  return s;
}

inline bool needs_model(const std::vector<std::string>& ms) {
  for (const auto& m : ms) {
    const auto k = estimate::method_from_string(m);
    if (k == estimate::Method::gmmn_prs || k == estimate::Method::gmmn_qrs) return true;
  }
  return false;
}

inline void write_provenance(const Run& r, const json& extra) {
  json p = r.cfg;
  p["provenance"] = {{"version", config::kVersion}, {"command", r.command}, {"seed", r.seed}, {"preset", r.preset}};
  for (const auto& [k, v] : extra.items()) p["provenance"][k] = v;
  std::ofstream out(r.out / "provenance.json");
  out << p.dump(2) << '\n';
  if (!out) throw RuntimeFailure("failed writing provenance.json");
}

}  // namespace detail

inline int cmd_train(const Run& r) {
  const json& sec = detail::section(r, "train");
  gmmn::TrainConfig tc = config::parse_train(sec.empty() ? json() : sec, r.preset, r.seed);
  const std::uint64_t data_seed = config::detail::get_or<std::uint64_t>(sec, "data_seed", r.seed * 4, "train");
  Matrix x;
  json extra = {{"init_seed", tc.init_seed}, {"shuffle_seed", tc.shuffle_seed}, {"input_seed", tc.input_seed}};
  if (sec.contains("data_csv")) {
    const auto path = config::detail::get<std::string>(sec, "data_csv", "train");
    x = detail::read_unit_csv(path);
    if (sec.contains("n_trn") && tc.n_trn != static_cast<std::size_t>(x.rows())) {
      throw ValidationError("train.n_trn = " + std::to_string(tc.n_trn) + " but '" + path + "' has " +
                            std::to_string(x.rows()) + " rows");
    }
    tc.n_trn = static_cast<std::size_t>(x.rows());
    tc.validate();
    extra["data_csv"] = path;
  } else {
    if (!r.spec) throw ValidationError("train: need a 'copula' section or train.data_csv");
    tc.validate();
    dist::RngStream stream(data_seed, 0);
    x = copula::sample(*r.spec, tc.n_trn, stream);
    extra["data_seed"] = data_seed;
  }
  extra["config_hash"] = gmmn::config_hash(tc);
  std::cerr << "training: n_trn=" << tc.n_trn << " n_bat=" << tc.n_bat << " n_epo=" << tc.n_epo << '\n';
  const auto model = gmmn::train(x, tc, [&](std::size_t epoch, double loss) {
    if (epoch == 1 || epoch % 10 == 0 || epoch == tc.n_epo) {
      std::cerr << "  epoch " << epoch << "  mean batch MMD " << loss << '\n';
    }
  });
  for (const double v : model.loss_trace) {
    if (!std::isfinite(v)) throw RuntimeFailure("training diverged: non-finite loss");
  }
  gmmn::save_model(model, (r.out / "model.txt").string());
  csv::Writer trace((r.out / "loss_trace.csv").string(), {"epoch", "mean_batch_mmd"});
  for (std::size_t e = 0; e < model.loss_trace.size(); ++e) {
    trace.row({static_cast<long long>(e + 1), model.loss_trace[e]});
  }
  trace.close();
  detail::write_provenance(r, extra);
  return ok;
}

inline int cmd_sample(const Run& r) {
  const std::string where = "sample";
  const json& sec = detail::section(r, "sample");
  const auto mode = config::detail::get<std::string>(sec, "mode", where);
  const std::size_t n = detail::positive(sec, "n", 1000, where);
  const auto replication = config::detail::get_or<std::uint64_t>(sec, "replication", 0, where);
  const bool pobs = config::detail::get_or<bool>(sec, "pseudo_obs", false, where);
  std::optional<gmmn::TrainedModel> model;
  const auto model_path = config::detail::get_or<std::string>(sec, "model", "", where);
  if (detail::needs_model({mode}) && !model_path.empty()) model = gmmn::load_model(model_path);
  const auto src = detail::make_source(r, mode, sec, where, r.spec, model_path, model ? &*model : nullptr);
  estimate::check_source(src);
  Matrix u = estimate::generate(src, n, replication);
  if (pobs) u = copula::pseudo_observations(u);
  csv::write_matrix((r.out / "sample.csv").string(), u);
  detail::write_provenance(r, {{"sample_seed", src.seed}, {"replication", replication}});
  return ok;
}

inline int cmd_gof(const Run& r) {
  const std::string where = "gof";
  const json& sec = detail::section(r, "gof");
  const auto statistic = config::detail::get_or<std::string>(sec, "statistic", "one_sample", where);
  if (statistic != "one_sample" && statistic != "two_sample") {
    throw ValidationError(where + ".statistic must be one_sample or two_sample");
  }
  const auto ms = detail::methods(sec, where);
  const std::size_t B = detail::positive(sec, "B", 30, where);
  const std::size_t n = detail::positive(sec, "n", 1000, where);
  std::optional<gmmn::TrainedModel> model;
  const auto model_path = config::detail::get_or<std::string>(sec, "model", "", where);
  if (detail::needs_model(ms) && !model_path.empty()) model = gmmn::load_model(model_path);
  std::vector<estimate::Source> sources;
  for (const auto& m : ms) {
    sources.push_back(detail::make_source(r, m, sec, where, r.spec, model_path, model ? &*model : nullptr));
    estimate::check_source(sources.back());
  }
  Matrix reference;
  if (statistic == "one_sample") {
    if (!r.spec) throw ValidationError("gof one_sample: need a 'copula' section");
  } else if (sec.contains("data_csv")) {
    reference = copula::pseudo_observations(detail::read_unit_csv(config::detail::get<std::string>(sec, "data_csv", where)));
  } else {
    if (!r.spec) throw ValidationError("gof two_sample: need a 'copula' section or gof.data_csv");
    const std::size_t n_ref = detail::positive(sec, "n_ref", n, where);
    dist::RngStream stream(config::detail::get_or<std::uint64_t>(sec, "reference_seed", r.seed * 4, where), 0);
    reference = copula::pseudo_observations(copula::sample(*r.spec, n_ref, stream));
  }
  csv::Writer out((r.out / "gof.csv").string(), {"method", "replication", "n", "statistic"});
  for (const auto& src : sources) {
    for (std::size_t b = 0; b < B; ++b) {
      const Matrix u = copula::pseudo_observations(estimate::generate(src, n, b));
      const double s = statistic == "one_sample" ? gof::cvm_one_sample(u, *r.spec) : gof::cvm_two_sample(u, reference);
      out.row({estimate::to_string(src.method), static_cast<long long>(b), static_cast<long long>(n), s});
    }
  }
  out.close();
  detail::write_provenance(r, {{"statistic", statistic},
                               {"t_cdf_surrogate", r.spec && !copula::cdf_is_exact(*r.spec) && statistic == "one_sample"}});
  return ok;
}

inline int cmd_converge(const Run& r) {
  const std::string where = "converge";
  const json& sec = detail::section(r, "converge");
  const auto ms = detail::methods(sec, where);
  const std::size_t B = static_cast<std::size_t>(config::detail::get_or<long long>(sec, "B", 25, where));
  if (B < 2) throw ValidationError(where + ".B must be at least 2");
  const int lo = config::detail::get_or<int>(sec, "n_min_exp", 10, where);
  const int hi = config::detail::get_or<int>(sec, "n_max_exp", r.preset == "paper" ? 18 : 15, where);
  if (lo < 1 || hi <= lo || hi > 24) throw ValidationError(where + ": need 1 <= n_min_exp < n_max_exp <= 24");
  const auto functional = config::parse_functional(config::detail::require(sec, "functional", where), r.spec);
  std::optional<gmmn::TrainedModel> model;
  const auto model_path = config::detail::get_or<std::string>(sec, "model", "", where);
  if (detail::needs_model(ms) && !model_path.empty()) model = gmmn::load_model(model_path);
  std::vector<estimate::Source> sources;
  for (const auto& m : ms) {
    sources.push_back(detail::make_source(r, m, sec, where, r.spec, model_path, model ? &*model : nullptr));
  }
  const auto rep = estimate::convergence_study(functional, sources, estimate::n_grid(lo, hi), B);

  csv::Writer est((r.out / "estimates.csv").string(), {"method", "n_gen", "replication", "estimate"});
  for (const auto& e : rep.estimates) {
    est.row({e.method, static_cast<long long>(e.n), static_cast<long long>(e.replication), e.estimate});
  }
  est.close();
  csv::Writer sum((r.out / "summary.csv").string(), {"method", "n_gen", "mean", "sd"});
  for (const auto& s : rep.summary) sum.row({s.method, static_cast<long long>(s.n), s.mean, s.sd});
  sum.close();
  csv::Writer fit((r.out / "fit.csv").string(), {"method", "alpha", "intercept", "r_squared"});
  for (const auto& f : rep.fits) fit.row({f.method, f.fit.alpha, f.fit.intercept, f.fit.r_squared});
  fit.close();
  // Variance reduction of each QRS method against its PRS counterpart.
  csv::Writer v((r.out / "vrf.csv").string(), {"prs_method", "qrs_method", "n_gen", "vrf"});
  for (const auto& [p, q] : {std::pair{"copula_PRS", "copula_QRS"}, std::pair{"gmmn_PRS", "gmmn_QRS"}}) {
    const auto has = [&](const std::string& m) {
      for (const auto& f : rep.fits) {
        if (f.method == m) return true;
      }
      return false;
    };
    if (!has(p) || !has(q)) continue;
    for (const auto n : estimate::n_grid(lo, hi)) {
      v.row({std::string(p), std::string(q), static_cast<long long>(n),
             estimate::vrf(rep.replications(p, n), rep.replications(q, n))});
    }
  }
  v.close();
  detail::write_provenance(r, {{"functional", rep.functional}, {"grid_max_exp", hi}});
  return ok;
}

inline int cmd_bench(const Run& r) {
  const std::string where = "bench";
  const json& sec = detail::section(r, "bench");
  const auto ms = detail::methods(sec, where);
  const auto ns = config::detail::get_or<std::vector<std::size_t>>(sec, "n", {10000}, where);
  const std::size_t reps = detail::positive(sec, "repetitions", 5, where);
  const auto warmup = static_cast<std::size_t>(config::detail::get_or<long long>(sec, "warmup", 1, where));
  const auto& entries = config::detail::require(sec, "models", where);
  if (!entries.is_array() || entries.empty()) throw ValidationError(where + ".models: expected a non-empty array");
  for (const auto n : ns) {
    if (n < 1) throw ValidationError(where + ".n: sizes must be >= 1");
  }

  struct Entry {
    std::string name;
    std::optional<copula::CopulaSpec> spec;
    std::optional<gmmn::TrainedModel> model;
    std::string model_path;
  };
  std::vector<Entry> models;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string w = where + ".models[" + std::to_string(i) + "]";
    config::detail::only_keys(entries[i], {"name", "copula", "model"}, w);
    Entry e;
    e.name = config::detail::get<std::string>(entries[i], "name", w);
    if (entries[i].contains("copula")) e.spec = config::parse_copula(entries[i].at("copula"), w + ".copula");
    e.model_path = config::detail::get_or<std::string>(entries[i], "model", "", w);
    if (!e.model_path.empty()) e.model = gmmn::load_model(e.model_path);
    models.push_back(std::move(e));
  }

  csv::Writer timing((r.out / "timing.csv").string(), {"model", "method", "n", "repetition", "seconds"});
  std::vector<std::string> header{"method", "n"};
  for (const auto& e : models) header.push_back(e.name);
  csv::Writer table((r.out / "table.csv").string(), header);
  for (const auto& m : ms) {
    for (const auto n : ns) {
      std::vector<csv::Cell> row{estimate::to_string(estimate::method_from_string(m)), static_cast<long long>(n)};
      for (const auto& e : models) {
        std::optional<estimate::Source> src;
        try {
          src = detail::make_source(r, m, sec, where, e.spec, e.model_path, e.model ? &*e.model : nullptr);
          estimate::check_source(*src);
        } catch (const UnsupportedError&) {
          src.reset();
        } catch (const ValidationError&) {
          src.reset();
        }
        if (!src) {
          row.emplace_back(std::string("NA"));
          continue;
        }
        for (std::size_t w = 0; w < warmup; ++w) estimate::generate(*src, n, w);
        double total = 0.0;
        for (std::size_t k = 0; k < reps; ++k) {
          const auto t0 = std::chrono::steady_clock::now();
          const Matrix u = estimate::generate(*src, n, warmup + k);
          const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          if (u.rows() != static_cast<Eigen::Index>(n)) throw RuntimeFailure("bench: wrong sample size");
          total += secs;
          timing.row({e.name, estimate::to_string(src->method), static_cast<long long>(n), static_cast<long long>(k), secs});
        }
        row.emplace_back(total / static_cast<double>(reps));
      }
      table.row(row);
    }
  }
  timing.close();
  table.close();
  detail::write_provenance(r, json::object());
  return ok;
}

/// Parses arguments, runs the command and maps errors to exit codes.
inline int run(int argc, char** argv, std::ostream& err = std::cerr) {
  CLI::App app{"Quasi-random sampling with generative moment matching networks"};
  app.require_subcommand(1);
  std::string config_path, out_dir = ".", preset;
  std::optional<std::uint64_t> seed;
  std::vector<CLI::App*> subs;
  for (const char* name : {"train", "sample", "gof", "converge", "bench"}) {
    auto* s = app.add_subcommand(name);
    s->add_option("--config", config_path, "JSON run configuration");
    s->add_option("--out", out_dir, "output directory");
    s->add_option("--seed", seed, "base seed");
    s->add_option("--preset", preset, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
    subs.push_back(s);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return validation;
  }

  try {
    Run r;
    for (auto* s : subs) {
      if (s->parsed()) r.command = s->get_name();
    }
    r.cfg = config_path.empty() ? json::object() : config::load_json(config_path);
    if (!r.cfg.is_object()) throw ValidationError("config: top level must be an object");
    config::detail::only_keys(r.cfg,
                              {"seed", "preset", "copula", "train", "sample", "gof", "converge", "bench", "provenance"},
                              "config");
    r.cfg.erase("provenance");
    if (seed) r.cfg["seed"] = *seed;
    if (!preset.empty()) r.cfg["preset"] = preset;
    r.seed = config::detail::get_or<std::uint64_t>(r.cfg, "seed", 1, "config");
    r.preset = config::detail::get_or<std::string>(r.cfg, "preset", "desk", "config");
    gmmn::preset(r.preset);
    if (r.cfg.contains("copula")) r.spec = config::parse_copula(r.cfg.at("copula"));
    r.out = out_dir;
    std::filesystem::create_directories(r.out);

    if (r.command == "train") return cmd_train(r);
    if (r.command == "sample") return cmd_sample(r);
    if (r.command == "gof") return cmd_gof(r);
    if (r.command == "converge") return cmd_converge(r);
    return cmd_bench(r);
  } catch (const UnsupportedError& e) {
    err << "unsupported: " << e.what() << '\n';
    return unsupported;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << '\n';
    return validation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return runtime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return runtime;
  }
}

}  // namespace gmmnqmc::cli
