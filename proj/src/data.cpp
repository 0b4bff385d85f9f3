#include "mdfa/data.hpp"

#include "mdfa/rng.hpp"

#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace mdfa {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) out.push_back(trim(cur));
  if (!s.empty() && s.back() == ',') out.push_back("");
  return out;
}

// One CSV record, double quotes and embedded commas handled.
std::vector<std::string> parse_csv_line(const std::string& line, std::size_t row) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  if (quoted) {
    throw Error("csv row " + std::to_string(row) + ": unterminated quote");
  }
  fields.push_back(cur);
  return fields;
}

double parse_number(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string v = trim(raw);
  if (v.empty()) {
    throw Error("csv row " + std::to_string(row) + ": empty value in column '" + column + "'");
  }
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(x)) {
    throw Error("csv row " + std::to_string(row) + ": non-numeric value '" + v +
                "' in column '" + column + "'");
  }
  return x;
}

std::string csv_escape(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

double stable_sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double ea = std::exp(a);
  return ea / (1.0 + ea);
}

}  // namespace

int ValueMapping::map(const std::string& value, std::size_t row) const {
  for (const auto& p : positive) {
    if (value == p) return +1;
  }
  if (!negative) return -1;
  for (const auto& n : *negative) {
    if (value == n) return -1;
  }
  throw Error("csv row " + std::to_string(row) + ": value '" + value + "' in column '" +
              column + "' matches neither the positive nor the negative list");
}

std::string ValueMapping::unmap(int v) const {
  if (v == +1) {
    if (positive.empty()) throw Error("column '" + column + "' has no positive values");
    return positive.front();
  }
  if (negative && !negative->empty()) return negative->front();
  // Complement-mapped column: any string outside the positive list will do.
  for (const auto& p : positive) {
    if (p == "-1") throw Error("column '" + column + "' cannot encode -1 unambiguously");
  }
  return "-1";
}

namespace {

ValueMapping require_mapping(const std::map<std::string, std::string>& kv,
                             const std::string& prefix) {
  auto col = kv.find(prefix + "_column");
  auto pos = kv.find(prefix + "_positive");
  if (col == kv.end()) throw Error("schema is missing key '" + prefix + "_column'");
  if (pos == kv.end()) throw Error("schema is missing key '" + prefix + "_positive'");
  ValueMapping m;
  m.column = col->second;
  m.positive = split_list(pos->second);
  if (auto neg = kv.find(prefix + "_negative"); neg != kv.end()) {
    m.negative = split_list(neg->second);
  }
  return m;
}

}  // namespace

CsvSchema CsvSchema::from_string(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error("schema line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (kv.count(key)) throw Error("schema repeats key '" + key + "'");
    kv[key] = trim(t.substr(eq + 1));
  }

  static const std::vector<std::string> known = {
      "feature_columns",   "sensitive_column",  "sensitive_positive", "sensitive_negative",
      "outcome_column",    "outcome_positive",  "outcome_negative",   "prediction_column",
      "prediction_positive", "prediction_negative"};
  for (const auto& [key, value] : kv) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error("schema has unknown key '" + key + "'");
    }
  }

  CsvSchema schema;
  auto fc = kv.find("feature_columns");
  if (fc == kv.end()) throw Error("schema is missing key 'feature_columns'");
  schema.feature_columns = split_list(fc->second);
  if (schema.feature_columns.empty() ||
      (schema.feature_columns.size() == 1 && schema.feature_columns[0].empty())) {
    throw Error("schema declares no feature columns");
  }
  schema.sensitive = require_mapping(kv, "sensitive");
  schema.outcome = require_mapping(kv, "outcome");
  if (kv.count("prediction_column")) {
    schema.prediction = require_mapping(kv, "prediction");
  } else if (kv.count("prediction_positive") || kv.count("prediction_negative")) {
    throw Error("schema maps prediction values without a prediction_column");
  }
  return schema;
}

CsvSchema CsvSchema::from_file(const std::string& path) {
  return from_string(read_file(path));
}

namespace {

void emit_mapping(std::ostringstream& os, const std::string& prefix, const ValueMapping& m) {
  os << prefix << "_column=" << m.column << "\n";
  os << prefix << "_positive=";
  for (std::size_t i = 0; i < m.positive.size(); ++i) {
    if (i) os << ",";
    os << m.positive[i];
  }
  os << "\n";
  if (m.negative) {
    os << prefix << "_negative=";
    for (std::size_t i = 0; i < m.negative->size(); ++i) {
      if (i) os << ",";
      os << (*m.negative)[i];
    }
    os << "\n";
  }
}

}  // namespace

std::string CsvSchema::to_string() const {
  std::ostringstream os;
  os << "feature_columns=";
  for (std::size_t i = 0; i < feature_columns.size(); ++i) {
    if (i) os << ",";
    os << feature_columns[i];
  }
  os << "\n";
  emit_mapping(os, "sensitive", sensitive);
  emit_mapping(os, "outcome", outcome);
  if (prediction) emit_mapping(os, "prediction", *prediction);
  return os.str();
}

AuditDataset load_csv_text(const std::string& text, const CsvSchema& schema) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw Error("csv input is empty");
  const auto header = parse_csv_line(line, 0);

  auto column_index = [&](const std::string& name) {
    int found = -1;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) {
        if (found >= 0) throw Error("csv header repeats column '" + name + "'");
        found = static_cast<int>(j);
      }
    }
    if (found < 0) throw Error("csv header is missing column '" + name + "'");
    return found;
  };

  std::vector<int> feat_idx;
  feat_idx.reserve(schema.feature_columns.size());
  for (const auto& name : schema.feature_columns) feat_idx.push_back(column_index(name));
  const int s_idx = column_index(schema.sensitive.column);
  const int y_idx = column_index(schema.outcome.column);
  const int p_idx = schema.prediction ? column_index(schema.prediction->column) : -1;

  std::vector<std::vector<double>> feats;
  std::vector<int> svals, yvals, pvals;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = parse_csv_line(line, row);
    if (fields.size() != header.size()) {
      throw Error("csv row " + std::to_string(row) + ": expected " +
                  std::to_string(header.size()) + " fields, got " +
                  std::to_string(fields.size()));
    }
    std::vector<double> x(feat_idx.size());
    for (std::size_t j = 0; j < feat_idx.size(); ++j) {
      x[j] = parse_number(fields[static_cast<std::size_t>(feat_idx[j])], row,
                          schema.feature_columns[j]);
    }
    feats.push_back(std::move(x));
    svals.push_back(schema.sensitive.map(trim(fields[static_cast<std::size_t>(s_idx)]), row));
    yvals.push_back(schema.outcome.map(trim(fields[static_cast<std::size_t>(y_idx)]), row));
    if (p_idx >= 0) {
      pvals.push_back(schema.prediction->map(trim(fields[static_cast<std::size_t>(p_idx)]), row));
    }
  }
  if (feats.empty()) throw Error("csv input holds no data rows");

  const auto m = static_cast<Eigen::Index>(feats.size());
  const auto d = static_cast<Eigen::Index>(feat_idx.size());
  Eigen::MatrixXd features(m, d);
  Eigen::VectorXi s(m), y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      features(i, j) = feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    s[i] = svals[static_cast<std::size_t>(i)];
    y[i] = yvals[static_cast<std::size_t>(i)];
  }
  AuditDataset data(std::move(features), std::move(s), std::move(y), schema.feature_columns);
  if (p_idx >= 0) {
    Eigen::VectorXi p(m);
    for (Eigen::Index i = 0; i < m; ++i) p[i] = pvals[static_cast<std::size_t>(i)];
    data.set_predictions(std::move(p));
  }
  return data;
}

AuditDataset load_csv(const std::string& path, const CsvSchema& schema) {
  return load_csv_text(read_file(path), schema);
}

void save_csv(const std::string& path, const AuditDataset& data, const CsvSchema& schema) {
  if (static_cast<int>(schema.feature_columns.size()) != data.dim()) {
    throw Error("schema feature count does not match dataset dimension");
  }
  std::ostringstream os;
  for (const auto& name : schema.feature_columns) os << csv_escape(name) << ",";
  os << csv_escape(schema.sensitive.column) << "," << csv_escape(schema.outcome.column);
  if (schema.prediction) {
    if (!data.predictions()) throw Error("schema expects predictions the dataset lacks");
    os << "," << csv_escape(schema.prediction->column);
  }
  os << "\n";

  char buf[64];
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.features()(i, j));
      os << buf << ",";
    }
    os << csv_escape(schema.sensitive.unmap(data.sensitive()[i])) << ","
       << csv_escape(schema.outcome.unmap(data.outcome()[i]));
    if (schema.prediction) {
      os << "," << csv_escape(schema.prediction->unmap((*data.predictions())[i]));
    }
    os << "\n";
  }
  write_file_atomic(path, os.str());
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    const std::string why = std::strerror(errno);
    std::remove(tmp.c_str());
    throw Error("cannot move '" + tmp + "' to '" + path + "': " + why);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::pair<AuditDataset, AuditDataset> split(const AuditDataset& data, double fraction,
                                            std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("split fraction must lie in (0, 1)");
  const int m = data.size();
  const int n_train = static_cast<int>(std::floor(fraction * m));
  if (n_train == 0 || n_train == m) {
    throw DegenerateSplitError("split leaves an empty half");
  }

  std::vector<int> order(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  std::vector<int> train_rows(order.begin(), order.begin() + n_train);
  std::vector<int> test_rows(order.begin() + n_train, order.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  AuditDataset train = data.subset(train_rows);
  AuditDataset test = data.subset(test_rows);
  try {
    train.validate();
  } catch (const Error& e) {
    throw DegenerateSplitError(std::string("train half is degenerate: ") + e.what());
  }
  try {
    test.validate();
  } catch (const Error& e) {
    throw DegenerateSplitError(std::string("test half is degenerate: ") + e.what());
  }
  return {std::move(train), std::move(test)};
}

void SyntheticSpec::validate() const {
  if (m < 100) throw Error("synthetic sample count must be at least 100");
  if (!(nu >= 0.0 && nu < 1.0)) throw Error("nu must lie in [0, 1)");
  if (!(noise_std >= 0.0)) throw Error("noise_std must be nonnegative");
  if (!std::isfinite(mu)) throw Error("mu must be finite");
}

bool SyntheticTruth::in_violating_region(const Eigen::VectorXd& x) const {
  if (x.size() != 2) throw Error("violating-region predicate expects a 2-d point");
  return x.squaredNorm() <= 1.0 && base_coef.dot(x) + base_intercept < 0.0;
}

double SyntheticTruth::propensity_positive(const Eigen::VectorXd& x) const {
  if (x.size() != 2) throw Error("propensity expects a 2-d point");
  const double t = x[0] + x[1];
  return stable_sigmoid(mu * t * t);
}

std::pair<AuditDataset, SyntheticTruth> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int m = spec.m;
  Rng rng(spec.seed);

  Eigen::MatrixXd X(m, 2);
  Eigen::VectorXi s(m);
  Eigen::VectorXd z(m);  // noisy pre-training labels, +-1 as doubles
  for (int i = 0; i < m; ++i) {
    const double x1 = rng.normal();
    const double x2 = rng.normal();
    const double e = rng.normal(0.0, spec.noise_std);
    X(i, 0) = x1;
    X(i, 1) = x2;
    const double t = x1 + x2;
    s[i] = rng.bernoulli(stable_sigmoid(spec.mu * t * t)) ? +1 : -1;
    z[i] = (t + e >= 0.0) ? +1.0 : -1.0;
  }

  // Unregularized logistic fit of the noisy labels: 500 full-batch steps of
  // size 0.1 from zero, which is ample for this well-conditioned 2-d problem.
  Eigen::Vector2d coef = Eigen::Vector2d::Zero();
  double intercept = 0.0;
  for (int iter = 0; iter < 500; ++iter) {
    Eigen::VectorXd t = X * coef + Eigen::VectorXd::Constant(m, intercept);
    Eigen::VectorXd g(m);
    for (int i = 0; i < m; ++i) g[i] = z[i] * stable_sigmoid(-z[i] * t[i]);
    coef += (0.1 / m) * (X.transpose() * g);
    intercept += (0.1 / m) * g.sum();
  }

  Eigen::VectorXi y(m), region(m);
  int region_pos = 0;
  for (int i = 0; i < m; ++i) {
    const double score = coef.dot(X.row(i)) + intercept;
    const int base = score >= 0.0 ? +1 : -1;
    const bool in_r = X.row(i).squaredNorm() <= 1.0 && base == -1;
    region[i] = in_r ? +1 : -1;
    if (in_r) {
      if (s[i] == +1) {
        y[i] = +1;
      } else {
        y[i] = rng.bernoulli(1.0 - spec.nu) ? +1 : -1;
      }
      if (y[i] == +1) ++region_pos;
    } else {
      y[i] = base;
    }
  }

  SyntheticTruth truth;
  truth.delta_m = spec.nu == 0.0 ? 0.0 : -std::log1p(-spec.nu);
  truth.alpha_mass = static_cast<double>(region_pos) / m;
  truth.base_coef = coef;
  truth.base_intercept = intercept;
  truth.in_region = std::move(region);
  truth.mu = spec.mu;
  truth.nu = spec.nu;

  AuditDataset data(std::move(X), std::move(s), std::move(y), {"x1", "x2"});
  data.validate();
  return {std::move(data), std::move(truth)};
}

}  // namespace mdfa
