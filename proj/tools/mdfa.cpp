// Command-line front end of the fairness auditing pipeline: synthesize
// benchmark data, certify a dataset, hunt for the worst-violated subgroup,
// compare weighting schemes, profile the flagged subgroup, and audit external
// classifier predictions. Every command is deterministic given its flags.

#include "CLI11.hpp"
#include "json.hpp"

#include "mdfa/audit.hpp"
#include "mdfa/core.hpp"
#include "mdfa/data.hpp"

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Options {
  std::string input;
  std::string schema;
  std::string out;
  std::uint64_t seed = 0;
  int splits = 1;
  double alpha = 0.1;
  double xi = 0.05;
  double lambda = 0.1;
  std::string bandwidth = "median";
  std::string scheme = "uw";
  int target_y = +1;
  int sensitive_value = +1;
  std::string format;
  int feature_dim = 256;
  double tau = 0.0;
  int max_iterations = 200;
  double weight_bound = 10.0;
  // synth / compare-weights parameters
  int m = 5000;
  double mu = 0.2;
  double nu = 0.8;
  double noise_std = 0.2;
  std::vector<double> mu_grid = {-0.2, -0.1, 0.0, 0.1, 0.2};
  int seeds = 10;
  // set while parsing
  bool lambda_given = false;
  bool bandwidth_given = false;
};

mdfa::BandwidthSpec parse_bandwidth(const std::string& text) {
  if (text == "median") return mdfa::BandwidthSpec::median();
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used == text.size() && value > 0.0) return mdfa::BandwidthSpec::absolute(value);
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError("--bandwidth", "expected a positive number or 'median'");
}

// Flags pin their dimension of the hyper-parameter search; anything left
// open is covered by the default cross-validation grid.
mdfa::AuditConfig make_config(const Options& opts) {
  mdfa::AuditConfig config;
  config.feature_map_dim = opts.feature_dim;
  config.xi = opts.xi;
  config.alpha_floor = opts.alpha;
  config.tie_band_tau = opts.tau;
  config.max_iterations = opts.max_iterations;
  config.weight_bound_B = opts.weight_bound;
  config.seed = opts.seed;
  const std::vector<double> lambdas =
      opts.lambda_given ? std::vector<double>{opts.lambda} : std::vector<double>{0.01, 0.1, 1.0};
  const std::vector<mdfa::BandwidthSpec> bandwidths =
      opts.bandwidth_given
          ? std::vector<mdfa::BandwidthSpec>{parse_bandwidth(opts.bandwidth)}
          : std::vector<mdfa::BandwidthSpec>{mdfa::BandwidthSpec::median(1.0),
                                             mdfa::BandwidthSpec::median(2.0)};
  config.lambda_reg = lambdas.front();
  config.kernel_bandwidth = bandwidths.front();
  if (lambdas.size() > 1 || bandwidths.size() > 1) {
    for (double lambda : lambdas) {
      for (const auto& bw : bandwidths) config.cv_grid.emplace_back(lambda, bw);
    }
  }
  return config;
}

mdfa::WeightScheme make_scheme(const Options& opts) {
  mdfa::WeightScheme scheme;
  if (opts.scheme == "uw") {
    scheme.kind = mdfa::WeightKind::Uniform;
  } else if (opts.scheme == "is") {
    scheme.kind = mdfa::WeightKind::ImportanceEstimated;
  } else {
    scheme.kind = mdfa::WeightKind::MmdMatch;
  }
  scheme.bound_B = opts.weight_bound;
  return scheme;
}

mdfa::AuditDataset load_input(const Options& opts) {
  const auto schema = mdfa::CsvSchema::from_file(opts.schema);
  return mdfa::load_csv(opts.input, schema);
}

// stdout unless --out was given; file writes are atomic.
void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
  } else {
    mdfa::write_file_atomic(out, text);
  }
}

std::string stem_of(const std::string& path) {
  const std::string suffix = ".csv";
  if (path.size() > suffix.size() &&
      path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return path.substr(0, path.size() - suffix.size());
  }
  return path;
}

int run_synth(const Options& opts) {
  mdfa::SyntheticSpec spec;
  spec.m = opts.m;
  spec.mu = opts.mu;
  spec.nu = opts.nu;
  spec.noise_std = opts.noise_std;
  spec.seed = opts.seed;
  auto [data, truth] = mdfa::generate_synthetic(spec);

  mdfa::CsvSchema schema;
  schema.feature_columns = {"x1", "x2"};
  schema.sensitive = {"s", {"1"}, std::vector<std::string>{"-1"}};
  schema.outcome = {"y", {"1"}, std::vector<std::string>{"-1"}};
  mdfa::save_csv(opts.out, data, schema);

  const std::string stem = stem_of(opts.out);
  mdfa::write_file_atomic(stem + ".schema.cfg", schema.to_string());
  nlohmann::json truth_doc = {{"m", spec.m},
                              {"mu", spec.mu},
                              {"nu", spec.nu},
                              {"noise_std", spec.noise_std},
                              {"seed", spec.seed},
                              {"delta_m", truth.delta_m},
                              {"alpha_mass", truth.alpha_mass},
                              {"base_coef", {truth.base_coef[0], truth.base_coef[1]}},
                              {"base_intercept", truth.base_intercept}};
  mdfa::write_file_atomic(stem + ".truth.json", truth_doc.dump(2) + "\n");
  return 0;
}

int run_audit(const Options& opts, mdfa::AuditMode mode, bool external_predictions) {
  const auto data = load_input(opts);
  const auto config = make_config(opts);
  const auto scheme = make_scheme(opts);
  const auto result =
      external_predictions
          ? mdfa::audit_external_predictions(data, opts.splits, config, opts.target_y,
                                             opts.sensitive_value, scheme)
          : mdfa::repeated_audit(data, opts.splits, config, opts.target_y,
                                 opts.sensitive_value, scheme, mode);
  emit(opts.out, mdfa::report_json(result, config));
  return 0;
}

int run_profile(const Options& opts) {
  const auto data = load_input(opts);
  const auto config = make_config(opts);
  const auto scheme = make_scheme(opts);
  const auto result = mdfa::repeated_audit(data, opts.splits, config, opts.target_y,
                                           opts.sensitive_value, scheme,
                                           mdfa::AuditMode::WorstViolation);
  if (opts.format == "tsv") {
    emit(opts.out, mdfa::profile_tsv(result.profile));
  } else {
    emit(opts.out, mdfa::profile_json_text(result.profile));
  }
  return 0;
}

int run_compare(const Options& opts) {
  mdfa::SyntheticSpec base;
  base.m = opts.m;
  base.nu = opts.nu;
  base.noise_std = opts.noise_std;
  base.seed = opts.seed;
  const auto config = make_config(opts);
  const auto rows = mdfa::compare_weight_schemes(base, opts.mu_grid, opts.seeds, config);
  if (opts.format == "json") {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& row : rows) {
      doc.push_back({{"mu", row.mu},
                     {"scheme", row.scheme},
                     {"bias_mean", row.bias_mean},
                     {"bias_std", row.bias_std}});
    }
    emit(opts.out, doc.dump(2) + "\n");
  } else {
    emit(opts.out, mdfa::bias_table_tsv(rows));
  }
  return 0;
}

void add_model_flags(CLI::App* cmd, Options& opts) {
  cmd->add_option("--seed", opts.seed, "Master seed of the run")->capture_default_str();
  cmd->add_option("--lambda", opts.lambda,
                  "Regularization strength; omitting it widens the CV grid")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--bandwidth", opts.bandwidth,
                  "Kernel bandwidth: a positive number or 'median'; omitting it widens "
                  "the CV grid");
  cmd->add_option("--feature-dim", opts.feature_dim, "Random feature map dimension (even)")
      ->capture_default_str();
  cmd->add_option("--tau", opts.tau, "Width of the randomized indicator tie band")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

void add_audit_flags(CLI::App* cmd, Options& opts) {
  cmd->add_option("--input", opts.input, "CSV dataset to audit")->required();
  cmd->add_option("--schema", opts.schema, "Column schema (key=value file)")->required();
  cmd->add_option("--out", opts.out, "Output path (stdout when omitted)");
  cmd->add_option("--splits", opts.splits, "Number of independent 70/30 splits")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--scheme", opts.scheme, "Weighting scheme")
      ->check(CLI::IsMember({"uw", "is", "mmd"}))
      ->capture_default_str();
  cmd->add_option("--target-y", opts.target_y, "Audited outcome value")
      ->check(CLI::IsMember({1, -1}))
      ->capture_default_str();
  cmd->add_option("--sensitive-value", opts.sensitive_value, "Audited sensitive value")
      ->check(CLI::IsMember({1, -1}))
      ->capture_default_str();
  cmd->add_option("--weight-bound", opts.weight_bound,
                  "Box bound B of the discrepancy matcher")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_model_flags(cmd, opts);
}

void add_escalation_flags(CLI::App* cmd, Options& opts) {
  cmd->add_option("--alpha", opts.alpha, "Subgroup mass floor of the escalation loop")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--xi", opts.xi, "Escalation rate per iteration")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--max-iterations", opts.max_iterations, "Escalation loop cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

int run(int argc, char** argv) {
  CLI::App app{"Subgroup fairness auditor: certifies multi-differential fairness "
               "violations and locates worst-violated subgroups."};
  app.require_subcommand(1);
  Options opts;

  auto* synth = app.add_subcommand("synth", "Generate a planted-violation benchmark CSV "
                                            "with ground-truth and schema sidecars");
  synth->add_option("--m", opts.m, "Sample count (>= 100)")->capture_default_str();
  synth->add_option("--mu", opts.mu, "Sensitive-attribute dependence strength")
      ->capture_default_str();
  synth->add_option("--nu", opts.nu, "Violation strength in [0, 1)")->capture_default_str();
  synth->add_option("--noise-std", opts.noise_std, "Label noise level")->capture_default_str();
  synth->add_option("--seed", opts.seed, "Generator seed")->capture_default_str();
  synth->add_option("--out", opts.out, "CSV output path")->required();

  auto* certify = app.add_subcommand("certify", "One-shot certificates over repeated "
                                                "train/test splits (JSON report)");
  add_audit_flags(certify, opts);

  auto* worst = app.add_subcommand("worst", "Escalation search for the worst-violated "
                                            "subgroup (JSON report with trace and profile)");
  add_audit_flags(worst, opts);
  add_escalation_flags(worst, opts);

  auto* compare = app.add_subcommand("compare-weights",
                                     "Bias of uniform / importance / matched weights on "
                                     "synthetic grids over the imbalance factor");
  compare->add_option("--m", opts.m, "Samples per synthetic draw")->capture_default_str();
  compare->add_option("--nu", opts.nu, "Planted violation strength")->capture_default_str();
  compare->add_option("--noise-std", opts.noise_std, "Label noise level")
      ->capture_default_str();
  compare->add_option("--mu-grid", opts.mu_grid, "Imbalance factors to sweep")
      ->delimiter(',')
      ->capture_default_str();
  compare->add_option("--seeds", opts.seeds, "Synthetic draws per grid point")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  compare->add_option("--out", opts.out, "Output path (stdout when omitted)");
  compare->add_option("--format", opts.format, "Output format")
      ->check(CLI::IsMember({"json", "tsv"}));
  add_model_flags(compare, opts);

  auto* profile = app.add_subcommand("profile", "Feature profile of the worst-violated "
                                                "subgroup against its complement");
  add_audit_flags(profile, opts);
  add_escalation_flags(profile, opts);
  profile->add_option("--format", opts.format, "Output format")
      ->check(CLI::IsMember({"json", "tsv"}));

  auto* preds = app.add_subcommand("audit-predictions",
                                   "Audit an external classifier's prediction column "
                                   "instead of the recorded outcome");
  add_audit_flags(preds, opts);
  add_escalation_flags(preds, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  CLI::App* active = app.get_subcommands().front();
  const CLI::Option* lambda_opt = active->get_option_no_throw("--lambda");
  const CLI::Option* bandwidth_opt = active->get_option_no_throw("--bandwidth");
  opts.lambda_given = lambda_opt != nullptr && lambda_opt->count() > 0;
  opts.bandwidth_given = bandwidth_opt != nullptr && bandwidth_opt->count() > 0;

  if (synth->parsed()) return run_synth(opts);
  if (certify->parsed()) return run_audit(opts, mdfa::AuditMode::Certify, false);
  if (worst->parsed()) return run_audit(opts, mdfa::AuditMode::WorstViolation, false);
  if (compare->parsed()) return run_compare(opts);
  if (profile->parsed()) return run_profile(opts);
  return run_audit(opts, mdfa::AuditMode::WorstViolation, true);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const mdfa::Error& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
    return 2;
  }
}
