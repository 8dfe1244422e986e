#include "mate/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <thread>

#include "mate/errors.hpp"
#include "mate/sim_charged.hpp"
#include "mate/sim_socialnav.hpp"

namespace mate {

namespace {

void check_pair(const Tensor& pred, const Tensor& truth, const char* what) {
  if (pred.shape() != truth.shape() || pred.rank() != 3 || pred.dim(2) != 2 || pred.dim(0) == 0 ||
      pred.dim(1) == 0) {
    throw ShapeError(std::string(what) + ": shapes " + shape_str(pred.shape()) + " and " +
                     shape_str(truth.shape()) + " differ or are not [T][N][2]");
  }
}

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Tensor rows(const Tensor& positions, std::size_t begin, std::size_t count) {
  const std::size_t n = positions.dim(1);
  Tensor out(Shape{count, n, 2});
  std::copy_n(positions.data().begin() + static_cast<std::ptrdiff_t>(begin * n * 2), count * n * 2,
              out.data().begin());
  return out;
}

}  // namespace

double ade(const Tensor& pred, const Tensor& truth) {
  check_pair(pred, truth, "ade");
  double sum = 0.0;
  const std::size_t m = pred.dim(0) * pred.dim(1);
  for (std::size_t r = 0; r < m; ++r) sum += std::hypot(pred[2 * r] - truth[2 * r], pred[2 * r + 1] - truth[2 * r + 1]);
  return sum / static_cast<double>(m);
}

double fde(const Tensor& pred, const Tensor& truth) {
  check_pair(pred, truth, "fde");
  const std::size_t t = pred.dim(0) - 1, n = pred.dim(1);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    sum += std::hypot(pred(t, i, 0) - truth(t, i, 0), pred(t, i, 1) - truth(t, i, 1));
  return sum / static_cast<double>(n);
}

std::vector<std::size_t> predicted_targets(const Tensor& z, std::size_t edge_type) {
  if (z.rank() != 3 || z.dim(0) != z.dim(1) || z.dim(0) < 2) {
    throw ShapeError("predicted_targets: expected [N][N][K] latent, got " + shape_str(z.shape()));
  }
  if (edge_type >= z.dim(2)) throw ShapeError("predicted_targets: edge type out of range");
  const std::size_t n = z.dim(0), k = z.dim(2);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = i == 0 ? 1 : 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (z[(i * n + j) * k + edge_type] > z[(i * n + best) * k + edge_type]) best = j;
    }
    out[i] = best;
  }
  return out;
}

double graph_accuracy(const Tensor& z, const std::vector<std::size_t>& targets, std::size_t edge_type) {
  const auto pred = predicted_targets(z, edge_type);
  if (targets.size() != pred.size()) throw ShapeError("graph_accuracy: targets size does not match the latent");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == targets[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double graph_accuracy(const Tensor& z, const Episode& episode, std::size_t edge_type) {
  if (!episode.targets) throw Error("graph_accuracy: episode has no targets metadata");
  return graph_accuracy(z, *episode.targets, edge_type);
}

std::size_t select_edge_type(std::span<const Tensor> latents, std::span<const Episode> episodes) {
  if (latents.empty() || latents.size() != episodes.size()) {
    throw ShapeError("select_edge_type: need one latent per episode");
  }
  const std::size_t k = latents[0].dim(2);
  std::size_t best = 0;
  double best_acc = -1.0;
  for (std::size_t t = 0; t < k; ++t) {
    double acc = 0.0;
    for (std::size_t e = 0; e < latents.size(); ++e) acc += graph_accuracy(latents[e], episodes[e], t);
    if (acc > best_acc) {
      best_acc = acc;
      best = t;
    }
  }
  return best;
}

Tensor constant_velocity_baseline(const Tensor& positions, std::size_t t_obs, std::size_t t_pred) {
  if (positions.rank() != 3 || positions.dim(2) != 2) throw ShapeError("baseline: expected [T][N][2] positions");
  if (t_obs < 2) throw ConfigError("baseline: t_obs must be >= 2");
  if (positions.dim(0) < t_obs) throw ShapeError("baseline: fewer than t_obs observed steps");
  const std::size_t n = positions.dim(1);
  Tensor out(Shape{t_pred, n, 2});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      const double last = positions(t_obs - 1, i, c);
      const double step = last - positions(t_obs - 2, i, c);
      for (std::size_t s = 0; s < t_pred; ++s) out(s, i, c) = last + static_cast<double>(s + 1) * step;
    }
  return out;
}

Tensor future_truth(const Tensor& positions, std::size_t t_obs, std::size_t t_pred) {
  if (positions.rank() != 3 || positions.dim(0) < t_obs + t_pred) {
    throw ShapeError("future_truth: episode shorter than t_obs + t_pred");
  }
  return rows(positions, t_obs, t_pred);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"label", label},
                   {"ade", ade},
                   {"fde", fde},
                   {"baseline_ade", baseline_ade},
                   {"baseline_fde", baseline_fde},
                   {"n_episodes", n_episodes},
                   {"n_agents", n_agents},
                   {"fingerprint", fingerprint}};
  if (graph_accuracy) j["graph_accuracy"] = *graph_accuracy;
  if (edge_type) j["edge_type"] = *edge_type;
  return j;
}

std::string config_fingerprint(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::vector<std::pair<Tensor, Tensor>> predict_all(const Model& model, std::span<const Episode> episodes,
                                                   std::size_t threads) {
  std::vector<std::pair<Tensor, Tensor>> out(episodes.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, episodes.size()));
  if (workers == 1) {
    for (std::size_t e = 0; e < episodes.size(); ++e) out[e] = model.predict_with_latent(episodes[e]);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t e = w; e < episodes.size(); e += workers) out[e] = model.predict_with_latent(episodes[e]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

bool all_have_targets(std::span<const Episode> episodes) {
  if (episodes.empty()) return false;
  for (const auto& e : episodes)
    if (!e.targets) return false;
  return true;
}

}  // namespace

EvalReport evaluate(const Model& model, std::span<const Episode> episodes, const EvalOptions& options) {
  if (episodes.empty()) throw ConfigError("evaluate: no episodes");
  const std::size_t t_obs = model.config().decoder.t_obs, t_pred = model.config().decoder.t_pred;
  EvalReport r;
  r.n_episodes = episodes.size();
  r.n_agents = episodes[0].agents();
  const auto preds = predict_all(model, episodes, options.threads);
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const Tensor truth = future_truth(episodes[e].positions, t_obs, t_pred);
    const Tensor base = constant_velocity_baseline(episodes[e].positions, t_obs, t_pred);
    r.ade += ade(preds[e].first, truth);
    r.fde += fde(preds[e].first, truth);
    r.baseline_ade += ade(base, truth);
    r.baseline_fde += fde(base, truth);
  }
  const double n = static_cast<double>(episodes.size());
  r.ade /= n;
  r.fde /= n;
  r.baseline_ade /= n;
  r.baseline_fde /= n;

  if (all_have_targets(episodes)) {
    std::size_t k = 0;
    if (options.edge_type) {
      k = *options.edge_type;
    } else if (all_have_targets(options.selection)) {
      const auto sel = predict_all(model, options.selection, options.threads);
      std::vector<Tensor> zs;
      for (const auto& p : sel) zs.push_back(p.second);
      k = select_edge_type(zs, options.selection);
    } else {
      std::vector<Tensor> zs;
      for (const auto& p : preds) zs.push_back(p.second);
      k = select_edge_type(zs, episodes);
    }
    double acc = 0.0;
    for (std::size_t e = 0; e < episodes.size(); ++e) acc += graph_accuracy(preds[e].second, episodes[e], k);
    r.graph_accuracy = acc / n;
    r.edge_type = k;
  }
  nlohmann::json fp{{"model", model.config().to_json()}, {"n_episodes", r.n_episodes}};
  if (r.edge_type) fp["edge_type"] = *r.edge_type;
  r.fingerprint = config_fingerprint(fp);
  return r;
}

std::vector<ZeroShotRow> zero_shot_eval(const Model& model, const nlohmann::json& generator,
                                        const ZeroShotOptions& options) {
  const std::string kind = generator.value("kind", std::string());
  const std::size_t t_total = model.config().decoder.t_obs + model.config().decoder.t_pred;
  std::vector<std::pair<std::string, nlohmann::json>> configs;
  std::function<Episode(const nlohmann::json&, std::uint64_t)> make;
  if (kind == "charged") {
    auto base = sim::ChargedConfig::from_json(generator);
    base.n_steps = std::max(base.n_steps, t_total);
    base.seed = options.seed;
    configs.emplace_back("base", base.to_json());
    for (auto& [name, cfg] : sim::charged_variants(base)) configs.emplace_back(name, cfg.to_json());
    make = [](const nlohmann::json& j, std::uint64_t i) {
      return sim::simulate_charged(sim::ChargedConfig::from_json(j), i);
    };
  } else if (kind == "socialnav") {
    auto base = sim::SocialnavConfig::from_json(generator);
    base.t_total = std::max(base.t_total, t_total);
    base.seed = options.seed;
    configs.emplace_back("base", base.to_json());
    for (auto& [name, cfg] : sim::socialnav_variants(base)) configs.emplace_back(name, cfg.to_json());
    make = [](const nlohmann::json& j, std::uint64_t i) {
      return sim::simulate_socialnav(sim::SocialnavConfig::from_json(j), i);
    };
  } else {
    throw ConfigError("zero-shot: generator kind must be 'charged' or 'socialnav', got '" + kind + "'");
  }

  std::vector<ZeroShotRow> out;
  std::optional<std::size_t> edge = options.edge_type;
  for (auto& [name, cfg] : configs) {
    std::vector<Episode> eps;
    for (std::size_t i = 0; i < options.episodes_per_variant; ++i) eps.push_back(make(cfg, i));
    EvalOptions eo;
    eo.edge_type = edge;
    eo.threads = options.threads;
    ZeroShotRow row{name, cfg, evaluate(model, eps, eo)};
    row.report.label = name;
    nlohmann::json fp{{"model", model.config().to_json()}, {"generator", cfg}, {"n_episodes", row.report.n_episodes}};
    if (row.report.edge_type) fp["edge_type"] = *row.report.edge_type;
    row.report.fingerprint = config_fingerprint(fp);
    if (!edge && row.report.edge_type) edge = row.report.edge_type;  // freeze the base selection
    out.push_back(std::move(row));
  }
  return out;
}

std::string report_csv(std::span<const EvalReport> reports) {
  std::string s = "label,n_episodes,n_agents,ade,fde,baseline_ade,baseline_fde,graph_accuracy,edge_type,fingerprint\n";
  for (const auto& r : reports) {
    s += r.label + "," + std::to_string(r.n_episodes) + "," + std::to_string(r.n_agents) + "," + fmt(r.ade) + "," +
         fmt(r.fde) + "," + fmt(r.baseline_ade) + "," + fmt(r.baseline_fde) + "," +
         (r.graph_accuracy ? fmt(*r.graph_accuracy) : "") + "," +
         (r.edge_type ? std::to_string(*r.edge_type) : "") + "," + r.fingerprint + "\n";
  }
  return s;
}

std::string report_table(std::span<const EvalReport> reports) {
  char line[256];
  std::string s;
  std::snprintf(line, sizeof line, "%-16s %6s %4s %10s %10s %10s %10s %8s\n", "variant", "eps", "N", "ADE", "FDE",
                "CV-ADE", "CV-FDE", "graph");
  s += line;
  s += std::string(82, '-') + "\n";
  for (const auto& r : reports) {
    const std::string g = r.graph_accuracy ? fmt(*r.graph_accuracy, "%.4f") : "-";
    std::snprintf(line, sizeof line, "%-16s %6zu %4zu %10.4f %10.4f %10.4f %10.4f %8s\n", r.label.c_str(),
                  r.n_episodes, r.n_agents, r.ade, r.fde, r.baseline_ade, r.baseline_fde, g.c_str());
    s += line;
  }
  return s;
}

}  // namespace mate
