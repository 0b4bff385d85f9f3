#include "mdfa/audit.hpp"

#include "mdfa/kernels.hpp"
#include "mdfa/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>
#include <utility>

namespace mdfa {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double logistic_loss(double t) {
  return t >= 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
}

// Runs fn(0..n-1) on up to `threads` workers pulling indices from a shared
// counter. Results must be written to index-addressed slots so the outcome
// is independent of scheduling; exceptions are rethrown for the smallest
// failing index.
template <typename Fn>
void indexed_parallel(int n, int threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  threads = std::max(1, std::min(threads, n));
  auto body = [&](int i) {
    try {
      fn(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  };
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

MetricAggregate aggregate_metric(const std::vector<double>& values) {
  MetricAggregate agg;
  double sum = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++agg.count;
    }
  }
  if (agg.count == 0) {
    agg.mean = kNan;
    return agg;
  }
  agg.mean = sum / agg.count;
  if (agg.count >= 2) {
    double ss = 0.0;
    for (double v : values) {
      if (std::isfinite(v)) ss += (v - agg.mean) * (v - agg.mean);
    }
    agg.std = std::sqrt(ss / (agg.count - 1));
  }
  return agg;
}

struct SplitOutcome {
  SplitRecord record;
  ProfileTable profile;
  std::vector<EscalationStep> trace;
};

SplitOutcome run_one_split(const AuditDataset& data, int k, const AuditConfig& config,
                           int target_y, int target_s, const WeightScheme& scheme,
                           AuditMode mode) {
  SplitOutcome out;
  SplitRecord& rec = out.record;
  rec.seed = mix_seed(config.seed, 1000 + static_cast<std::uint64_t>(k));
  rec.gamma_hat = rec.delta_hat = rec.alpha = rec.dt_g = rec.di = kNan;
  rec.cv_lambda = rec.cv_bandwidth = kNan;
  try {
    auto [train, test] = split(data, 0.7, rec.seed);
    AuditConfig cfg = config;
    cfg.seed = rec.seed;
    CvChoice choice = cross_validate(train, cfg, target_y, target_s, scheme);
    cfg.lambda_reg = choice.lambda;
    cfg.kernel_bandwidth = BandwidthSpec::absolute(choice.bandwidth);
    cfg.cv_grid.clear();
    rec.cv_lambda = choice.lambda;
    rec.cv_bandwidth = choice.bandwidth;

    Eigen::VectorXi indicators;
    if (mode == AuditMode::Certify) {
      Certificate cert = certify(train, test, cfg, target_y, target_s, scheme);
      rec.gamma_hat = cert.gamma_hat;
      rec.alpha = cert.support_mass;
      if (cert.delta_hat) rec.delta_hat = *cert.delta_hat;
      // Replays the tie stream certify() used, so the indicators (and hence
      // the profile and dt_g) match the certificate exactly.
      Rng tie_rng(mix_seed(cfg.seed, 3));
      indicators = cert.model.indicators(test, &tie_rng);
      out.profile = subgroup_profile(test, indicators);
    } else {
      ViolationReport report = worst_violation(train, test, cfg, target_y, target_s, scheme);
      rec.gamma_hat = report.certificate.gamma_hat;
      rec.delta_hat = report.delta_hat;
      rec.alpha = report.alpha_hat;
      rec.dt_g = report.disparate_treatment_ratio;
      out.profile = report.profile;
      out.trace = report.trace;
    }
    if (mode == AuditMode::Certify) {
      try {
        rec.dt_g = disparate_treatment(test, WeightVector::ones(test.size()), indicators,
                                       target_s, target_y);
      } catch (const DegenerateSubgroupError&) {
        // The certificate stands even when the subgroup ratio is undefined.
      }
    }
    rec.di = disparate_treatment(test, WeightVector::ones(test.size()),
                                 Eigen::VectorXi::Ones(test.size()), target_s, target_y);
  } catch (const Error& e) {
    rec.failed = true;
    rec.error = e.what();
  }
  return out;
}

std::string format_number(double v) { return nlohmann::json(v).dump(); }

nlohmann::json stats_json(const GroupStats& g) {
  return {{"mean", g.mean}, {"stddev", g.stddev}, {"weight", g.weight}};
}

nlohmann::json scope_json(const ProfileScope& scope) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : scope.rows) {
    rows.push_back({{"name", row.name},
                    {"s_plus", stats_json(row.s_plus)},
                    {"s_minus", stats_json(row.s_minus)}});
  }
  return rows;
}

nlohmann::json profile_json(const ProfileTable& profile) {
  return {{"population", scope_json(profile.population)},
          {"inside", scope_json(profile.inside)},
          {"outside", scope_json(profile.outside)},
          {"subgroup_fraction", profile.subgroup_fraction}};
}

nlohmann::json bandwidth_json(const BandwidthSpec& bw) {
  return {{"median_relative", bw.median_relative}, {"value", bw.value}};
}

nlohmann::json config_json(const AuditConfig& config) {
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& [lambda, bw] : config.cv_grid) {
    grid.push_back({{"lambda", lambda}, {"bandwidth", bandwidth_json(bw)}});
  }
  return {{"feature_map_dim", config.feature_map_dim},
          {"kernel_bandwidth", bandwidth_json(config.kernel_bandwidth)},
          {"lambda_reg", config.lambda_reg},
          {"xi", config.xi},
          {"alpha_floor", config.alpha_floor},
          {"tie_band_tau", config.tie_band_tau},
          {"max_iterations", config.max_iterations},
          {"weight_bound_B", config.weight_bound_B},
          {"seed", config.seed},
          {"cv_grid", grid}};
}

}  // namespace

int resolve_thread_count(int requested, int n_units) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("MDFA_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  return std::max(1, std::min(n, std::max(1, n_units)));
}

CvChoice cross_validate(const AuditDataset& train, const AuditConfig& config,
                        int target_y, int target_s, const WeightScheme& scheme) {
  config.validate();
  train.validate();
  auto grid = config.effective_cv_grid();
  std::vector<CvChoice> points;
  points.reserve(grid.size());
  for (const auto& [lambda, bw] : grid) {
    points.push_back({lambda, resolve_bandwidth(bw, train, mix_seed(config.seed, 2))});
  }
  if (points.size() == 1) return points.front();

  const int m = train.size();
  const int n_folds = 5;
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  Rng fold_rng(mix_seed(config.seed, 11));
  fold_rng.shuffle(order.begin(), order.end());

  std::vector<double> risk(points.size(), 0.0);
  std::vector<double> discrepancy(points.size(), 0.0);
  int used_folds = 0;
  for (int j = 0; j < n_folds; ++j) {
    const int lo = j * m / n_folds;
    const int hi = (j + 1) * m / n_folds;
    if (hi <= lo) continue;
    std::vector<int> held_rows(order.begin() + lo, order.begin() + hi);
    std::vector<int> fit_rows;
    fit_rows.reserve(static_cast<std::size_t>(m - (hi - lo)));
    fit_rows.insert(fit_rows.end(), order.begin(), order.begin() + lo);
    fit_rows.insert(fit_rows.end(), order.begin() + hi, order.end());
    std::sort(held_rows.begin(), held_rows.end());
    std::sort(fit_rows.begin(), fit_rows.end());
    AuditDataset held = train.subset(held_rows);
    AuditDataset part = train.subset(fit_rows);
    try {
      held.validate();
      part.validate();
    } catch (const Error&) {
      continue;  // degenerate fold: a half lost one sensitive or outcome value
    }
    ++used_folds;
    ReductionLabels fit_labels = reduction_labels(part, target_y);
    ReductionLabels held_labels = reduction_labels(held, target_y);
    for (std::size_t g = 0; g < points.size(); ++g) {
      FeatureMap map = FeatureMap::random_fourier(train.dim(), config.feature_map_dim,
                                                  points[g].bandwidth,
                                                  mix_seed(config.seed, 1));
      WeightSolver solver(part, target_s, scheme, map);
      WeightVector w_fit = solver.weights_for(part);
      WeightVector w_held = solver.weights_for(held);
      CertifierControls controls;
      controls.lambda = points[g].lambda;
      controls.tie_band_tau = config.tie_band_tau;
      CertifierModel model = fit_certifier(part, w_fit, fit_labels, map, controls);
      Eigen::VectorXd scores = model.scores(held);
      double loss_sum = 0.0;
      double weight_sum = 0.0;
      for (int i = 0; i < held.size(); ++i) {
        loss_sum += w_held.u[i] * logistic_loss(held_labels.labels[i] * scores[i]);
        weight_sum += w_held.u[i];
      }
      risk[g] += loss_sum / weight_sum;
      discrepancy[g] += mmd_hat(held, w_held, target_s, map);
    }
  }
  if (used_folds == 0) {
    throw Error("cross-validation failed: every fold lost a sensitive or outcome value");
  }
  const double max_risk = *std::max_element(risk.begin(), risk.end());
  const double max_disc = *std::max_element(discrepancy.begin(), discrepancy.end());
  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < points.size(); ++g) {
    const double score = risk[g] / (max_risk > 0.0 ? max_risk : 1.0) +
                         discrepancy[g] / (max_disc > 0.0 ? max_disc : 1.0);
    const bool wins =
        score < best_score ||
        (score == best_score &&
         (points[g].lambda > points[best].lambda ||
          (points[g].lambda == points[best].lambda &&
           points[g].bandwidth > points[best].bandwidth)));
    if (g == 0 || wins) {
      best = g;
      best_score = score;
    }
  }
  return points[best];
}

AuditRunResult repeated_audit(const AuditDataset& data, int n_splits,
                              const AuditConfig& config, int target_y, int target_s,
                              const WeightScheme& scheme, AuditMode mode, int threads) {
  if (n_splits < 1) throw Error("repeated_audit requires n_splits >= 1");
  config.validate();
  data.validate();

  std::vector<SplitOutcome> outcomes(static_cast<std::size_t>(n_splits));
  indexed_parallel(n_splits, resolve_thread_count(threads, n_splits), [&](int k) {
    outcomes[static_cast<std::size_t>(k)] =
        run_one_split(data, k, config, target_y, target_s, scheme, mode);
  });

  AuditRunResult result;
  result.mode = mode;
  result.target_y = target_y;
  result.target_s = target_s;
  result.n_splits = n_splits;
  result.per_split.reserve(outcomes.size());
  for (const auto& out : outcomes) result.per_split.push_back(out.record);

  int failures = 0;
  for (const auto& rec : result.per_split) failures += rec.failed ? 1 : 0;
  if (failures > 0.2 * n_splits) {
    std::string first;
    for (const auto& rec : result.per_split) {
      if (rec.failed) {
        first = rec.error;
        break;
      }
    }
    throw AuditFailureError("repeated_audit aborted: " + std::to_string(failures) + " of " +
                            std::to_string(n_splits) + " splits failed (first: " + first + ")");
  }

  auto collect = [&](double SplitRecord::* field) {
    std::vector<double> values;
    for (const auto& rec : result.per_split) {
      if (!rec.failed) values.push_back(rec.*field);
    }
    return aggregate_metric(values);
  };
  result.gamma = collect(&SplitRecord::gamma_hat);
  result.delta = collect(&SplitRecord::delta_hat);
  result.alpha = collect(&SplitRecord::alpha);
  result.dt_g = collect(&SplitRecord::dt_g);
  result.di = collect(&SplitRecord::di);
  result.std_undefined = result.gamma.count == 1;

  // Representative split: median delta_hat among usable splits, falling back
  // to median gamma_hat when no split produced a divergence estimate.
  std::vector<int> pool;
  for (int i = 0; i < n_splits; ++i) {
    const auto& rec = result.per_split[static_cast<std::size_t>(i)];
    if (!rec.failed && std::isfinite(rec.delta_hat)) pool.push_back(i);
  }
  double SplitRecord::* order_field = &SplitRecord::delta_hat;
  if (pool.empty()) {
    order_field = &SplitRecord::gamma_hat;
    for (int i = 0; i < n_splits; ++i) {
      if (!result.per_split[static_cast<std::size_t>(i)].failed) pool.push_back(i);
    }
  }
  if (!pool.empty()) {
    std::stable_sort(pool.begin(), pool.end(), [&](int a, int b) {
      return result.per_split[static_cast<std::size_t>(a)].*order_field <
             result.per_split[static_cast<std::size_t>(b)].*order_field;
    });
    result.representative_index = pool[(pool.size() - 1) / 2];
    const auto& rep = outcomes[static_cast<std::size_t>(result.representative_index)];
    result.profile = rep.profile;
    result.trace = rep.trace;
  }
  return result;
}

std::vector<BiasRow> compare_weight_schemes(const SyntheticSpec& base,
                                            const std::vector<double>& mu_grid,
                                            int n_seeds, const AuditConfig& config,
                                            int threads) {
  if (mu_grid.empty()) throw Error("compare_weight_schemes requires a nonempty mu grid");
  if (n_seeds < 1) throw Error("compare_weight_schemes requires n_seeds >= 1");
  config.validate();

  constexpr int n_schemes = 3;
  const int n_units = static_cast<int>(mu_grid.size()) * n_seeds;
  std::vector<std::array<double, n_schemes>> bias(static_cast<std::size_t>(n_units));

  indexed_parallel(n_units, resolve_thread_count(threads, n_units), [&](int unit) {
    const int mu_index = unit / n_seeds;
    SyntheticSpec spec = base;
    spec.mu = mu_grid[static_cast<std::size_t>(mu_index)];
    spec.seed = mix_seed(base.seed, 20000 + static_cast<std::uint64_t>(unit));
    auto [data, truth] = generate_synthetic(spec);
    const double gamma_true = gamma_from_delta(truth.delta_m, truth.alpha_mass);
    auto [train, test] = split(data, 0.7, spec.seed);
    AuditConfig cfg = config;
    cfg.seed = spec.seed;

    std::array<WeightScheme, n_schemes> schemes;
    schemes[0].kind = WeightKind::Uniform;
    schemes[1].kind = WeightKind::ImportanceExact;
    schemes[1].exact_propensity = [truth](const Eigen::VectorXd& x) {
      return truth.propensity_positive(x);
    };
    schemes[2].kind = WeightKind::MmdMatch;
    schemes[2].bound_B = config.weight_bound_B;

    for (int c = 0; c < n_schemes; ++c) {
      Certificate cert = certify(train, test, cfg, +1, +1, schemes[static_cast<std::size_t>(c)]);
      bias[static_cast<std::size_t>(unit)][static_cast<std::size_t>(c)] =
          cert.gamma_hat - gamma_true;
    }
  });

  const std::array<std::string, n_schemes> names = {"uw", "is-exact", "mmd"};
  std::vector<BiasRow> rows;
  rows.reserve(mu_grid.size() * n_schemes);
  for (std::size_t i = 0; i < mu_grid.size(); ++i) {
    for (int c = 0; c < n_schemes; ++c) {
      std::vector<double> values;
      values.reserve(static_cast<std::size_t>(n_seeds));
      for (int j = 0; j < n_seeds; ++j) {
        values.push_back(bias[i * static_cast<std::size_t>(n_seeds) +
                              static_cast<std::size_t>(j)][static_cast<std::size_t>(c)]);
      }
      MetricAggregate agg = aggregate_metric(values);
      rows.push_back({mu_grid[i], names[static_cast<std::size_t>(c)], agg.mean, agg.std});
    }
  }
  return rows;
}

AuditRunResult audit_external_predictions(const AuditDataset& data, int n_splits,
                                          const AuditConfig& config, int target_y,
                                          int target_s, const WeightScheme& scheme,
                                          int threads) {
  if (!data.predictions()) {
    throw Error("audit_external_predictions requires a dataset with a prediction column");
  }
  AuditDataset audited = data.with_outcome(*data.predictions());
  return repeated_audit(audited, n_splits, config, target_y, target_s, scheme,
                        AuditMode::WorstViolation, threads);
}

std::string report_json(const AuditRunResult& result, const AuditConfig& config) {
  nlohmann::json doc;
  doc["config_echo"] = config_json(config);
  doc["mode"] = result.mode == AuditMode::Certify ? "certify" : "worst";
  doc["target_y"] = result.target_y;
  doc["target_s"] = result.target_s;
  doc["n_splits"] = result.n_splits;
  nlohmann::json splits = nlohmann::json::array();
  for (const auto& rec : result.per_split) {
    nlohmann::json item = {{"seed", rec.seed},
                           {"failed", rec.failed},
                           {"gamma_hat", rec.gamma_hat},
                           {"delta_m", rec.delta_hat},
                           {"alpha", rec.alpha},
                           {"dt_g", rec.dt_g},
                           {"di", rec.di},
                           {"cv_lambda", rec.cv_lambda},
                           {"cv_bandwidth", rec.cv_bandwidth}};
    if (rec.failed) item["error"] = rec.error;
    splits.push_back(std::move(item));
  }
  doc["per_split"] = std::move(splits);
  doc["aggregates"] = {{"gamma_mean", result.gamma.mean},   {"gamma_std", result.gamma.std},
                       {"delta_m_mean", result.delta.mean}, {"delta_m_std", result.delta.std},
                       {"dt_g_mean", result.dt_g.mean},     {"di_mean", result.di.mean},
                       {"std_undefined", result.std_undefined}};
  doc["profile"] = profile_json(result.profile);
  if (result.mode == AuditMode::WorstViolation && !result.trace.empty()) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& step : result.trace) {
      trace.push_back({{"iteration", step.iteration},
                       {"delta_hat", step.delta_hat},
                       {"alpha_hat", step.alpha_hat},
                       {"gamma_hat", step.gamma_hat},
                       {"skipped", step.skipped}});
    }
    doc["trace"] = std::move(trace);
  }
  return doc.dump(2) + "\n";
}

std::string profile_json_text(const ProfileTable& profile) {
  return profile_json(profile).dump(2) + "\n";
}

std::string profile_tsv(const ProfileTable& profile) {
  std::string out = "scope\tfeature\tsensitive_value\tmean\tstddev\tweight\n";
  const std::pair<const char*, const ProfileScope*> scopes[] = {
      {"population", &profile.population}, {"inside", &profile.inside},
      {"outside", &profile.outside}};
  for (const auto& [name, scope] : scopes) {
    for (const auto& row : scope->rows) {
      const std::pair<const char*, const GroupStats*> cells[] = {{"+1", &row.s_plus},
                                                                 {"-1", &row.s_minus}};
      for (const auto& [value, stats] : cells) {
        out += std::string(name) + "\t" + row.name + "\t" + value + "\t" +
               format_number(stats->mean) + "\t" + format_number(stats->stddev) + "\t" +
               format_number(stats->weight) + "\n";
      }
    }
  }
  return out;
}

std::string bias_table_tsv(const std::vector<BiasRow>& rows) {
  std::string out = "mu\tscheme\tbias_mean\tbias_std\n";
  for (const auto& row : rows) {
    out += format_number(row.mu) + "\t" + row.scheme + "\t" + format_number(row.bias_mean) +
           "\t" + format_number(row.bias_std) + "\n";
  }
  return out;
}

}  // namespace mdfa
