#pragma once

// JSON run configuration: copula specs, training settings, functionals.

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gmmnqmc/copula_spec.hpp"
#include "gmmnqmc/estimate.hpp"
#include "gmmnqmc/gmmn.hpp"

namespace gmmnqmc::config {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  return j.at(key);
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return require(j, key, where).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key, where);
}

inline void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* allowed : keys) known = known || k == allowed;
    if (!known) throw ValidationError(where + ": unknown key '" + k + "'");
  }
}

// theta given directly or through Kendall's tau.
inline double parameter(const json& j, copula::TauFamily fam, const char* theta_key, const char* tau_key,
                        const std::string& where) {
  const bool has_theta = j.contains(theta_key);
  const bool has_tau = j.contains(tau_key);
  if (has_theta == has_tau) {
    throw ValidationError(where + ": give exactly one of '" + theta_key + "' or '" + tau_key + "'");
  }
  if (has_theta) return get<double>(j, theta_key, where);
  return copula::tau_to_param(fam, get<double>(j, tau_key, where));
}

}  // namespace detail

/// Copula spec from its JSON description, validated.
inline copula::CopulaSpec parse_copula(const json& j, const std::string& where = "copula") {
  using namespace copula;
  const auto family = detail::get<std::string>(j, "family", where);
  auto build = [&]() -> CopulaSpec {
    if (family == "independence") {
      detail::only_keys(j, {"family", "dim"}, where);
      return Independence{detail::get<int>(j, "dim", where)};
    }
    if (family == "clayton" || family == "gumbel") {
      detail::only_keys(j, {"family", "dim", "theta", "tau"}, where);
      const int dim = detail::get_or<int>(j, "dim", 2, where);
      if (family == "clayton") return Clayton{dim, detail::parameter(j, TauFamily::clayton, "theta", "tau", where)};
      return Gumbel{dim, detail::parameter(j, TauFamily::gumbel, "theta", "tau", where)};
    }
    if (family == "t") {
      detail::only_keys(j, {"family", "dim", "dof", "corr", "rho", "tau"}, where);
      TCopula t;
      t.dof = detail::get_or<double>(j, "dof", 4.0, where);
      if (j.contains("corr")) {
        if (j.contains("rho") || j.contains("tau")) throw ValidationError(where + ": 'corr' excludes 'rho'/'tau'");
        const auto rows = detail::get<std::vector<std::vector<double>>>(j, "corr", where);
        t.corr.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (rows[r].size() != rows.size()) throw ValidationError(where + ".corr: matrix must be square");
          for (std::size_t c = 0; c < rows.size(); ++c) {
            t.corr(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
          }
        }
      } else {
        const int dim = detail::get_or<int>(j, "dim", 2, where);
        if (dim < 1 || dim > 32) throw ValidationError(where + ": dim must lie in 1..32");
        t.corr = equicorrelation(dim, detail::parameter(j, TauFamily::elliptical, "rho", "tau", where));
      }
      return t;
    }
    if (family == "nested_clayton" || family == "nested_gumbel") {
      detail::only_keys(j, {"family", "theta0", "tau0", "children"}, where);
      NestedArchimedean n;
      n.family = family == "nested_clayton" ? ArchimedeanFamily::clayton : ArchimedeanFamily::gumbel;
      const auto tf = family == "nested_clayton" ? TauFamily::clayton : TauFamily::gumbel;
      n.theta0 = detail::parameter(j, tf, "theta0", "tau0", where);
      const auto& children = detail::require(j, "children", where);
      if (!children.is_array()) throw ValidationError(where + ".children: expected an array");
      for (std::size_t c = 0; c < children.size(); ++c) {
        const std::string cw = where + ".children[" + std::to_string(c) + "]";
        detail::only_keys(children[c], {"theta", "tau", "indices"}, cw);
        NestedChild child;
        child.indices = detail::get<std::vector<int>>(children[c], "indices", cw);
        if (child.indices.size() > 1) {
          child.theta = detail::parameter(children[c], tf, "theta", "tau", cw);
        } else {
          child.theta = n.theta0;
        }
        n.children.push_back(std::move(child));
      }
      return n;
    }
    if (family == "marshall_olkin") {
      detail::only_keys(j, {"family", "alpha1", "alpha2"}, where);
      return MarshallOlkin{detail::get<double>(j, "alpha1", where), detail::get<double>(j, "alpha2", where)};
    }
    if (family == "rotated") {
      detail::only_keys(j, {"family", "degrees", "base"}, where);
      return Rotated{detail::get<int>(j, "degrees", where), parse_copula(detail::require(j, "base", where), where + ".base")};
    }
    if (family == "mixture") {
      detail::only_keys(j, {"family", "weights", "components"}, where);
      Mixture m;
      m.weights = detail::get<std::vector<double>>(j, "weights", where);
      const auto& comps = detail::require(j, "components", where);
      if (!comps.is_array()) throw ValidationError(where + ".components: expected an array");
      for (std::size_t c = 0; c < comps.size(); ++c) {
        m.components.push_back(parse_copula(comps[c], where + ".components[" + std::to_string(c) + "]"));
      }
      return m;
    }
    throw ValidationError(where + ": unknown family '" + family + "'");
  };
  CopulaSpec spec = build();
  validate(spec);
  return spec;
}

/// Training settings: preset first, then explicit keys on top.
inline gmmn::TrainConfig parse_train(const json& j, const std::string& preset, std::uint64_t seed) {
  const std::string where = "train";
  if (!j.is_null()) {
    detail::only_keys(j, {"n_trn", "n_bat", "n_epo", "hidden", "hidden_activation", "output_activation", "input_dim",
                          "input_law", "loss", "cache_input", "lr", "beta1", "beta2", "eps", "mmd_floor", "bandwidths",
                          "init_seed", "shuffle_seed", "input_seed", "data_seed", "data_csv"},
                      where);
  }
  gmmn::TrainConfig c = gmmn::preset(preset);
  c.init_seed = seed * 4 + 1;
  c.shuffle_seed = seed * 4 + 2;
  c.input_seed = seed * 4 + 3;
  if (j.is_null()) return c;
  c.n_trn = detail::get_or<std::size_t>(j, "n_trn", c.n_trn, where);
  c.n_bat = detail::get_or<std::size_t>(j, "n_bat", c.n_bat, where);
  c.n_epo = detail::get_or<std::size_t>(j, "n_epo", c.n_epo, where);
  c.hidden = detail::get_or<std::vector<int>>(j, "hidden", c.hidden, where);
  if (j.contains("hidden_activation")) {
    c.hidden_activation = gmmn::activation_from_string(detail::get<std::string>(j, "hidden_activation", where));
  }
  if (j.contains("output_activation")) {
    c.output_activation = gmmn::activation_from_string(detail::get<std::string>(j, "output_activation", where));
  }
  c.input_dim = detail::get_or<int>(j, "input_dim", c.input_dim, where);
  if (j.contains("input_law")) c.input_law = gmmn::input_law_from_string(detail::get<std::string>(j, "input_law", where));
  if (j.contains("loss")) c.loss = gmmn::loss_from_string(detail::get<std::string>(j, "loss", where));
  c.cache_input = detail::get_or<bool>(j, "cache_input", c.cache_input, where);
  c.adam.lr = detail::get_or<double>(j, "lr", c.adam.lr, where);
  c.adam.beta1 = detail::get_or<double>(j, "beta1", c.adam.beta1, where);
  c.adam.beta2 = detail::get_or<double>(j, "beta2", c.adam.beta2, where);
  c.adam.eps = detail::get_or<double>(j, "eps", c.adam.eps, where);
  c.mmd_floor = detail::get_or<double>(j, "mmd_floor", c.mmd_floor, where);
  c.kernel.bandwidths = detail::get_or<std::vector<double>>(j, "bandwidths", c.kernel.bandwidths, where);
  c.init_seed = detail::get_or<std::uint64_t>(j, "init_seed", c.init_seed, where);
  c.shuffle_seed = detail::get_or<std::uint64_t>(j, "shuffle_seed", c.shuffle_seed, where);
  c.input_seed = detail::get_or<std::uint64_t>(j, "input_seed", c.input_seed, where);
  return c;
}

inline std::vector<estimate::Margin> parse_margins(const json& j, const std::string& where) {
  std::vector<estimate::Margin> out;
  if (j.is_null()) return {estimate::Margin::standard_normal()};
  if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    const auto type = detail::get<std::string>(j[i], "type", w);
    if (type == "normal") {
      detail::only_keys(j[i], {"type", "mean", "sd"}, w);
      out.push_back(estimate::Margin::normal(detail::get_or<double>(j[i], "mean", 0.0, w),
                                             detail::get_or<double>(j[i], "sd", 1.0, w)));
    } else if (type == "lognormal") {
      detail::only_keys(j[i], {"type", "meanlog", "sdlog"}, w);
      out.push_back(estimate::Margin::lognormal(detail::get_or<double>(j[i], "meanlog", 0.0, w),
                                                detail::get_or<double>(j[i], "sdlog", 1.0, w)));
    } else if (type == "student_t") {
      detail::only_keys(j[i], {"type", "dof", "scale"}, w);
      out.push_back(estimate::Margin::student_t(detail::get_or<double>(j[i], "dof", 4.0, w),
                                                detail::get_or<double>(j[i], "scale", 1.0, w)));
    } else {
      throw ValidationError(w + ": unknown margin type '" + type + "'");
    }
    if (!(out.back().scale > 0.0) || (type == "student_t" && !(out.back().dof > 0.0))) {
      throw ValidationError(w + ": scale parameters must be positive");
    }
  }
  return out;
}

/// Functional description; Sobol' g uses the run's copula for its Rosenblatt step.
inline estimate::Functional parse_functional(const json& j, const std::optional<copula::CopulaSpec>& spec) {
  const std::string where = "functional";
  const auto type = detail::get<std::string>(j, "type", where);
  auto level = [&] {
    const double a = detail::get_or<double>(j, "level", 0.99, where);
    if (!(a > 0.0 && a < 1.0)) throw ValidationError(where + ".level must lie in (0,1)");
    return a;
  };
  if (type == "sobol_g") {
    detail::only_keys(j, {"type"}, where);
    if (!spec) throw ValidationError("functional sobol_g needs a 'copula' section");
    if (!copula::has_rosenblatt(*spec)) {
      throw UnsupportedError("sobol_g: no Rosenblatt transform available for " + copula::family_name(*spec));
    }
    return estimate::SobolG{*spec};
  }
  if (type == "expected_shortfall") {
    detail::only_keys(j, {"type", "level", "margins"}, where);
    return estimate::ExpectedShortfall{level(), parse_margins(j.value("margins", json()), where + ".margins")};
  }
  if (type == "allocation") {
    detail::only_keys(j, {"type", "level", "margins", "component"}, where);
    estimate::Allocation a;
    a.level = level();
    a.margins = parse_margins(j.value("margins", json()), where + ".margins");
    a.component = detail::get_or<int>(j, "component", 0, where);
    return a;
  }
  if (type == "basket_call") {
    detail::only_keys(j, {"type", "r", "t", "T", "K", "spots", "vols"}, where);
    estimate::BasketCall b;
    b.r = detail::get_or<double>(j, "r", b.r, where);
    b.t = detail::get_or<double>(j, "t", b.t, where);
    b.T = detail::get_or<double>(j, "T", b.T, where);
    b.spots = detail::get<std::vector<double>>(j, "spots", where);
    b.vols = detail::get<std::vector<double>>(j, "vols", where);
    if (b.spots.size() != b.vols.size() || b.spots.empty()) {
      throw ValidationError(where + ": spots and vols must be non-empty and of equal length");
    }
    // Strike about 0.5% above the average spot unless given.
    double avg = 0.0;
    for (const double s : b.spots) avg += s;
    b.K = detail::get_or<double>(j, "K", 1.005 * avg, where);
    if (!(b.T > b.t)) throw ValidationError(where + ": need T > t");
    return b;
  }
  if (type == "product") {
    detail::only_keys(j, {"type"}, where);
    return estimate::Product{};
  }
  throw ValidationError(where + ": unknown type '" + type + "'");
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path + "': " + e.what());
  }
}

}  // namespace gmmnqmc::config
