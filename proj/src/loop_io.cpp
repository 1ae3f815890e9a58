#include "prefopt/errors.hpp"
#include "prefopt/loops.hpp"

namespace prefopt {

using nlohmann::json;

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

json prior_to_json(const LogNormalPrior& p) { return {{"location", p.location}, {"scale", p.scale}}; }
LogNormalPrior prior_from_json(const json& j) { return {j.at("location").get<double>(), j.at("scale").get<double>()}; }

json opt_config(const std::optional<Configuration>& c) { return c ? configuration_to_json(*c) : json(nullptr); }
std::optional<Configuration> opt_config(const json& j) {
  if (j.is_null()) return std::nullopt;
  return configuration_from_json(j);
}

json configs_to_json(const std::vector<Configuration>& v) {
  json a = json::array();
  for (const auto& c : v) a.push_back(configuration_to_json(c));
  return a;
}

std::vector<Configuration> configs_from_json(const json& a) {
  std::vector<Configuration> v;
  for (const auto& c : a) v.push_back(configuration_from_json(c));
  return v;
}

template <class F>
auto parse(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed ") + what + ": " + e.what());
  }
}

}  // namespace

json to_json(const LoopConfig& c) {
  return {{"algorithm", to_string(c.algorithm)},
          {"n_init_pairs", c.n_init_pairs},
          {"budget", c.budget},
          {"n_stop", c.n_stop},
          {"stability_fraction", c.stability_fraction},
          {"refit_every_n", c.refit_every_n},
          {"stability_stop", c.stability_stop},
          {"init_design", c.init_design == InitDesign::sobol ? "sobol" : "uniform"},
          {"max_random_fallbacks", c.max_random_fallbacks},
          {"seeds", {{"sobol", c.seeds.sobol}, {"mc", c.seeds.mc}, {"line", c.seeds.line}}}};
}

LoopConfig loop_config_from_json(const json& j) {
  return parse("loop config", [&] {
    LoopConfig c;
    c.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
    c.n_init_pairs = j.value("n_init_pairs", c.n_init_pairs);
    c.budget = j.value("budget", c.budget);
    c.n_stop = j.value("n_stop", c.n_stop);
    c.stability_fraction = j.value("stability_fraction", c.stability_fraction);
    c.refit_every_n = j.value("refit_every_n", c.refit_every_n);
    c.stability_stop = j.value("stability_stop", c.stability_stop);
    const std::string design = j.value("init_design", std::string("sobol"));
    if (design != "sobol" && design != "uniform") throw ConfigError("init_design must be sobol or uniform");
    c.init_design = design == "sobol" ? InitDesign::sobol : InitDesign::uniform;
    c.max_random_fallbacks = j.value("max_random_fallbacks", c.max_random_fallbacks);
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      c.seeds = {s.at("sobol").get<std::uint64_t>(), s.at("mc").get<std::uint64_t>(), s.at("line").get<std::uint64_t>()};
    } else if (j.contains("seed")) {
      c.seeds = LoopSeeds::from(j.at("seed").get<std::uint64_t>());
    }
    return c;
  });
}

json to_json(const KernelConfig& k) {
  json priors = json::array();
  for (const auto& p : k.prior_lengthscale) priors.push_back(prior_to_json(p));
  return {{"family", k.family == KernelFamily::matern52 ? "matern52" : "exponential"},
          {"lengthscales", vec_to_json(k.lengthscales)},
          {"output_scale", k.output_scale},
          {"prior_lengthscale", priors},
          {"prior_outputscale", prior_to_json(k.prior_outputscale)}};
}

KernelConfig kernel_config_from_json(const json& j) {
  return parse("kernel config", [&] {
    KernelConfig k;
    const std::string fam = j.at("family").get<std::string>();
    if (fam == "matern52") k.family = KernelFamily::matern52;
    else if (fam == "exponential") k.family = KernelFamily::exponential;
    else throw ParseError("unknown kernel family '" + fam + "'");
    k.lengthscales = vec_from_json(j.at("lengthscales"));
    k.output_scale = j.at("output_scale").get<double>();
    for (const auto& p : j.at("prior_lengthscale")) k.prior_lengthscale.push_back(prior_from_json(p));
    k.prior_outputscale = prior_from_json(j.at("prior_outputscale"));
    k.check();
    return k;
  });
}

json to_json(const ModelConfig& m) {
  const auto& h = m.hyper;
  return {{"kernel", to_json(m.kernel)},
          {"likelihood",
           {{"family", m.likelihood.family == LikelihoodFamily::logistic ? "logistic" : "probit"},
            {"scale", m.likelihood.scale}}},
          {"hyper",
           {{"starts", h.starts},
            {"max_steps", h.max_steps},
            {"gradient_tolerance", h.gradient_tolerance},
            {"seed", h.seed},
            {"min_lengthscale", h.min_lengthscale},
            {"max_lengthscale", h.max_lengthscale},
            {"min_output_scale", h.min_output_scale},
            {"max_output_scale", h.max_output_scale}}},
          {"fit_hyperparameters", m.fit_hyperparameters}};
}

ModelConfig model_config_from_json(const json& j) {
  return parse("model config", [&] {
    ModelConfig m;
    m.kernel = kernel_config_from_json(j.at("kernel"));
    const auto& l = j.at("likelihood");
    const std::string fam = l.at("family").get<std::string>();
    if (fam != "logistic" && fam != "probit") throw ParseError("unknown likelihood family '" + fam + "'");
    m.likelihood = {fam == "logistic" ? LikelihoodFamily::logistic : LikelihoodFamily::probit, l.at("scale").get<double>()};
    m.likelihood.check();
    if (j.contains("hyper")) {
      const auto& h = j.at("hyper");
      m.hyper.starts = h.value("starts", m.hyper.starts);
      m.hyper.max_steps = h.value("max_steps", m.hyper.max_steps);
      m.hyper.gradient_tolerance = h.value("gradient_tolerance", m.hyper.gradient_tolerance);
      m.hyper.seed = h.value("seed", m.hyper.seed);
      m.hyper.min_lengthscale = h.value("min_lengthscale", m.hyper.min_lengthscale);
      m.hyper.max_lengthscale = h.value("max_lengthscale", m.hyper.max_lengthscale);
      m.hyper.min_output_scale = h.value("min_output_scale", m.hyper.min_output_scale);
      m.hyper.max_output_scale = h.value("max_output_scale", m.hyper.max_output_scale);
    }
    m.fit_hyperparameters = j.value("fit_hyperparameters", true);
    return m;
  });
}

json to_json(const AcquisitionConfig& a) {
  return {{"q", a.q},
          {"mc_samples", a.mc_samples},
          {"restarts", a.restarts},
          {"raw_candidates", a.raw_candidates},
          {"seed", a.seed},
          {"analytic_fast_path", a.analytic_fast_path},
          {"fd_step", a.fd_step},
          {"max_ascent_steps", a.max_ascent_steps}};
}

AcquisitionConfig acquisition_config_from_json(const json& j) {
  return parse("acquisition config", [&] {
    AcquisitionConfig a;
    a.q = j.value("q", a.q);
    a.mc_samples = j.value("mc_samples", a.mc_samples);
    a.restarts = j.value("restarts", a.restarts);
    a.raw_candidates = j.value("raw_candidates", a.raw_candidates);
    a.seed = j.value("seed", a.seed);
    a.analytic_fast_path = j.value("analytic_fast_path", a.analytic_fast_path);
    a.fd_step = j.value("fd_step", a.fd_step);
    a.max_ascent_steps = j.value("max_ascent_steps", a.max_ascent_steps);
    a.check();
    return a;
  });
}

json to_json(const Query& q) {
  return {{"query_id", q.query_id},
          {"first", configuration_to_json(q.first)},
          {"second", configuration_to_json(q.second)},
          {"swapped", q.swapped},
          {"phase", to_string(q.phase)},
          {"iteration", q.iteration},
          {"attempt", q.attempt}};
}

Query query_from_json(const json& j) {
  return parse("query", [&] {
    Query q;
    q.query_id = j.at("query_id").get<std::int64_t>();
    q.first = configuration_from_json(j.at("first"));
    q.second = configuration_from_json(j.at("second"));
    q.swapped = j.at("swapped").get<bool>();
    q.phase = query_phase_from_string(j.at("phase").get<std::string>());
    q.iteration = j.at("iteration").get<int>();
    q.attempt = j.at("attempt").get<int>();
    return q;
  });
}

json to_json(const Recommendation& r) {
  return {{"point", configuration_to_json(r.point)}, {"posterior_mean", r.posterior_mean}, {"iteration", r.iteration}};
}

Recommendation recommendation_from_json(const json& j) {
  return parse("recommendation", [&] {
    return Recommendation{configuration_from_json(j.at("point")), j.at("posterior_mean").get<double>(),
                          j.at("iteration").get<int>()};
  });
}

json to_json(const LoopState& s) {
  json recs = json::array();
  for (const auto& r : s.recommendation_history) recs.push_back(to_json(r));
  return {{"dataset", dataset_to_json(s.dataset)},
          {"init_pairs_done", s.init_pairs_done},
          {"iteration", s.iteration},
          {"current_pref", opt_config(s.current_pref)},
          {"incumbent_history", configs_to_json(s.incumbent_history)},
          {"recommendation_history", recs},
          {"stop_reason", to_string(s.stop_reason)},
          {"stability_count", s.stability_count},
          {"stability_reference", opt_config(s.stability_reference)},
          {"kernel", to_json(s.kernel)},
          {"hyper_fallbacks", s.hyper_fallbacks},
          {"sobol_cursor", s.sobol_cursor},
          {"queries_issued", s.queries_issued},
          {"batch", configs_to_json(s.batch)},
          {"fallback_attempts", s.fallback_attempts},
          {"pending", s.pending ? to_json(*s.pending) : json(nullptr)}};
}

LoopState loop_state_from_json(const json& j) {
  return parse("loop state", [&] {
    LoopState s;
    s.dataset = dataset_from_json(j.at("dataset"));
    s.init_pairs_done = j.at("init_pairs_done").get<int>();
    s.iteration = j.at("iteration").get<int>();
    s.current_pref = opt_config(j.at("current_pref"));
    s.incumbent_history = configs_from_json(j.at("incumbent_history"));
    for (const auto& r : j.at("recommendation_history")) s.recommendation_history.push_back(recommendation_from_json(r));
    s.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    s.stability_count = j.at("stability_count").get<int>();
    s.stability_reference = opt_config(j.at("stability_reference"));
    s.kernel = kernel_config_from_json(j.at("kernel"));
    s.hyper_fallbacks = j.at("hyper_fallbacks").get<int>();
    s.sobol_cursor = j.at("sobol_cursor").get<std::int64_t>();
    s.queries_issued = j.at("queries_issued").get<std::int64_t>();
    s.batch = configs_from_json(j.at("batch"));
    s.fallback_attempts = j.at("fallback_attempts").get<int>();
    if (!j.at("pending").is_null()) s.pending = query_from_json(j.at("pending"));
    return s;
  });
}

}  // namespace prefopt
